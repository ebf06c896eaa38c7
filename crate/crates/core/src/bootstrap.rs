//! Sample-size calculators and offline estimation of expert policies.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::instance::{PolicyTable, ProblemDims, ROW_SUM_TOL};
use crate::sampling;

/// Accuracy at which the sandwich width `xi/p_v (1/(p_v - xi) + 1/(p_v + xi))`
/// equals `gamma p_v / 2`: the positive root of
/// `gamma p_v xi^2 + 4 xi - gamma p_v^3 = 0`.
pub fn xi_target(p_v: f64, gamma: f64) -> Result<f64> {
    if !(p_v > 0.0 && p_v < 1.0 && gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InfeasibleParams(format!(
            "p_v = {p_v} and gamma = {gamma} must lie in (0, 1)"
        )));
    }
    // Rationalized to avoid cancellation in -2 + sqrt(4 + ...).
    let g = gamma * p_v;
    let xi = g * p_v * p_v / (2.0 + libm::sqrt(4.0 + g * g * p_v * p_v));
    if xi >= p_v {
        return Err(Error::XiTooLarge { xi, p_v });
    }
    Ok(xi)
}

/// Closed form `2 (sqrt(1 + p_v^4 gamma^2) - 1) / (p_v gamma)`.
pub fn xi_variant_plus(p_v: f64, gamma: f64) -> f64 {
    let s = p_v * p_v * gamma;
    2.0 * (s * s / (libm::sqrt(1.0 + s * s) + 1.0)) / (p_v * gamma)
}

/// Closed form `2 (sqrt(1 - p_v^4 gamma^2) - 1) / (p_v gamma)`; negative for
/// all valid inputs.
pub fn xi_variant_minus(p_v: f64, gamma: f64) -> f64 {
    let s = p_v * p_v * gamma;
    -2.0 * (s * s / (libm::sqrt(1.0 - s * s) + 1.0)) / (p_v * gamma)
}

/// Sandwich width as a function of `xi`, compared against `gamma p_v / 2`.
pub fn sandwich_width(xi: f64, p_v: f64) -> f64 {
    xi / p_v * (1.0 / (p_v - xi) + 1.0 / (p_v + xi))
}

/// Samples per (expert, context) for sup-norm accuracy `xi` with failure
/// probability `1/T`: `ceil(2 |V| ln(2T) / xi^2)`.
pub fn n_samples(num_actions: usize, horizon: u64, xi: f64) -> Result<u64> {
    if !(xi > 0.0) {
        return Err(Error::InfeasibleParams(format!("xi must be positive, got {xi}")));
    }
    let raw = 2.0 * num_actions as f64 * libm::log(2.0 * horizon as f64) / (xi * xi);
    Ok(ceil_u64(raw))
}

/// Pulls per expert so every context collects `n` samples with probability
/// at least `1 - 1/(T sqrt(E))`:
/// `ceil(2n/p_x + ln(|X| N T sqrt(E)) / (2 p_x^2))`.
pub fn a_samples(
    n: u64,
    p_x: f64,
    num_contexts: usize,
    num_experts: usize,
    horizon: u64,
    num_episodes: usize,
) -> u64 {
    let log_term = libm::log(
        num_contexts as f64
            * num_experts as f64
            * horizon as f64
            * libm::sqrt(num_episodes as f64),
    );
    ceil_u64(2.0 * n as f64 / p_x + log_term / (2.0 * p_x * p_x))
}

/// Failure probability achieved by `n` samples at accuracy `xi`:
/// `min(1, 2 exp(-n xi^2 / (2 |V|)))`.
pub fn delta_effective(n: u64, xi: f64, num_actions: usize) -> f64 {
    (2.0 * libm::exp(-(n as f64) * xi * xi / (2.0 * num_actions as f64))).min(1.0)
}

fn ceil_u64(x: f64) -> u64 {
    let c = libm::ceil(x);
    if c >= u64::MAX as f64 {
        u64::MAX
    } else {
        c as u64
    }
}

/// Values substituted for the theory plan in practice.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PracticalOverride {
    pub xi: Option<f64>,
    pub n: Option<u64>,
    pub a: Option<u64>,
}

/// Theory-prescribed bootstrap sizes, plus an optional practical override.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapPlan {
    pub xi: f64,
    pub n: u64,
    pub a: u64,
    pub delta_effective: f64,
    pub practical_override: Option<PracticalOverride>,
}

/// Sizes actually used for sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectivePlan {
    pub xi: f64,
    pub n: u64,
    pub a: u64,
    pub delta: f64,
}

impl BootstrapPlan {
    pub fn theory(p_x: f64, p_v: f64, gamma: f64, dims: &ProblemDims) -> Result<Self> {
        let xi = xi_target(p_v, gamma)?;
        let n = n_samples(dims.num_actions, dims.horizon, xi)?;
        let a = a_samples(
            n,
            p_x,
            dims.num_contexts,
            dims.num_experts,
            dims.horizon,
            dims.num_episodes,
        );
        Ok(Self {
            xi,
            n,
            a,
            delta_effective: delta_effective(n, xi, dims.num_actions),
            practical_override: None,
        })
    }

    pub fn with_override(mut self, practical: PracticalOverride) -> Self {
        self.practical_override = Some(practical);
        self
    }

    /// Applies the override. A missing `a` is recomputed from the effective
    /// `n`, and `a` is raised to at least `n`.
    pub fn effective(
        &self,
        p_x: f64,
        p_v: f64,
        num_actions: usize,
        dims: &ProblemDims,
    ) -> Result<EffectivePlan> {
        let Some(o) = self.practical_override else {
            return Ok(EffectivePlan {
                xi: self.xi,
                n: self.n,
                a: self.a,
                delta: self.delta_effective,
            });
        };
        let xi = o.xi.unwrap_or(self.xi);
        if !(xi > 0.0 && xi < p_v) {
            return Err(Error::XiTooLarge { xi, p_v });
        }
        let n = match o.n {
            Some(n) => n,
            None => n_samples(num_actions, dims.horizon, xi)?,
        };
        if n == 0 {
            return Err(Error::InvalidConfig("override n must be at least 1".into()));
        }
        let a = o
            .a
            .unwrap_or_else(|| {
                a_samples(
                    n,
                    p_x,
                    dims.num_contexts,
                    dims.num_experts,
                    dims.horizon,
                    dims.num_episodes,
                )
            })
            .max(n);
        Ok(EffectivePlan {
            xi,
            n,
            a,
            delta: delta_effective(n, xi, num_actions),
        })
    }
}

/// Offline action counts indexed `[expert][context][action]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleCounts {
    num_experts: usize,
    num_contexts: usize,
    num_actions: usize,
    counts: Vec<u64>,
    n_target: u64,
}

impl SampleCounts {
    pub fn new(
        num_experts: usize,
        num_contexts: usize,
        num_actions: usize,
        counts: Vec<u64>,
        n_target: u64,
    ) -> Result<Self> {
        if counts.len() != num_experts * num_contexts * num_actions {
            return Err(Error::DimensionMismatch(format!(
                "{} counts for shape {num_experts}x{num_contexts}x{num_actions}",
                counts.len()
            )));
        }
        Ok(Self {
            num_experts,
            num_contexts,
            num_actions,
            counts,
            n_target,
        })
    }

    pub fn num_experts(&self) -> usize {
        self.num_experts
    }

    pub fn num_contexts(&self) -> usize {
        self.num_contexts
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn n_target(&self) -> u64 {
        self.n_target
    }

    pub fn row(&self, expert: usize, context: usize) -> &[u64] {
        let start = (expert * self.num_contexts + context) * self.num_actions;
        &self.counts[start..start + self.num_actions]
    }

    pub fn row_total(&self, expert: usize, context: usize) -> u64 {
        self.row(expert, context).iter().sum()
    }

    pub fn min_row_total(&self) -> u64 {
        (0..self.num_experts)
            .flat_map(|i| (0..self.num_contexts).map(move |x| (i, x)))
            .map(|(i, x)| self.row_total(i, x))
            .min()
            .unwrap_or(0)
    }

    /// Every (expert, context) row reached the target.
    pub fn complete(&self) -> bool {
        self.min_row_total() >= self.n_target
    }
}

/// Plays every expert `a` times under `prior`, drawing expert `i`'s
/// interactions from `rng_for(i)`.
pub fn sample_offline<R, F>(
    policies: &PolicyTable,
    prior: &[f64],
    p_x: f64,
    a: u64,
    n_target: u64,
    mut rng_for: F,
) -> Result<SampleCounts>
where
    R: Rng,
    F: FnMut(usize) -> R,
{
    validate_prior(prior, policies.num_contexts(), p_x)?;
    let (n, nx, nv) = (
        policies.num_experts(),
        policies.num_contexts(),
        policies.num_actions(),
    );
    let mut counts = vec![0u64; n * nx * nv];
    for i in 0..n {
        let mut rng = rng_for(i);
        for _ in 0..a {
            let x = sampling::categorical(prior, &mut rng);
            let v = sampling::categorical(policies.row(i, x), &mut rng);
            counts[(i * nx + x) * nv + v] += 1;
        }
    }
    SampleCounts::new(n, nx, nv, counts, n_target)
}

fn validate_prior(prior: &[f64], num_contexts: usize, p_x: f64) -> Result<()> {
    if prior.len() != num_contexts {
        return Err(Error::DimensionMismatch(format!(
            "prior has {} entries for {num_contexts} contexts",
            prior.len()
        )));
    }
    let total: f64 = prior.iter().sum();
    if (total - 1.0).abs() > ROW_SUM_TOL || prior.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::InvalidDistribution(format!(
            "prior context distribution sums to {total}"
        )));
    }
    if let Some(p) = prior.iter().find(|&&p| p < p_x) {
        return Err(Error::AssumptionViolated(format!(
            "prior probability {p} below p_x = {p_x}"
        )));
    }
    Ok(())
}

/// Accuracy certificate attached to approximate experts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub xi: f64,
    pub delta: f64,
}

/// Empirical expert policies built from offline counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxExperts {
    pub policies: PolicyTable,
    /// Present only when every row met the sample target.
    pub certificate: Option<Certificate>,
    /// Rows with no samples, replaced by the uniform distribution.
    pub empty_rows: usize,
    /// Rows with some zero cells, smoothed by half a count per cell.
    pub smoothed_rows: usize,
}

impl ApproxExperts {
    pub fn complete(&self) -> bool {
        self.certificate.is_some()
    }
}

/// Normalizes counts row by row. Empty rows become uniform; rows with a zero
/// cell get half a pseudo-count on every cell so all ratios stay finite.
pub fn build_approx_policies(counts: &SampleCounts, xi: f64, horizon: u64) -> Result<ApproxExperts> {
    let (n, nx, nv) = (counts.num_experts, counts.num_contexts, counts.num_actions);
    let mut probs = Vec::with_capacity(n * nx * nv);
    let mut empty_rows = 0;
    let mut smoothed_rows = 0;
    for i in 0..n {
        for x in 0..nx {
            let row = counts.row(i, x);
            let total: u64 = row.iter().sum();
            if total == 0 {
                empty_rows += 1;
                probs.extend(core::iter::repeat(1.0 / nv as f64).take(nv));
            } else if row.contains(&0) {
                smoothed_rows += 1;
                let denom = total as f64 + 0.5 * nv as f64;
                probs.extend(row.iter().map(|&c| (c as f64 + 0.5) / denom));
            } else {
                let denom = total as f64;
                probs.extend(row.iter().map(|&c| c as f64 / denom));
            }
        }
    }
    let policies = PolicyTable::new(n, nx, nv, probs)?;
    let certificate = (empty_rows == 0 && counts.complete()).then(|| Certificate {
        xi,
        delta: 1.0 / horizon.max(1) as f64,
    });
    Ok(ApproxExperts {
        policies,
        certificate,
        empty_rows,
        smoothed_rows,
    })
}
