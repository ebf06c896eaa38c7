//! Importance ratios, f₁-divergence constants and the clip-level function `w`.
//!
//! For experts `i, j` the ratio `r_ij(v|x) = pi_i(v|x) / pi_j(v|x)` transfers a
//! reward observed under `j` to an estimate for `i`. When the policies are only
//! known up to `xi` in sup-norm and bounded below by `p_v`, the true ratio lies
//! in `[r_hat - xi/(p_v (p_v - xi)), r_hat + xi/(p_v (p_v + xi))]`.
//!
//! The divergence `D(i||j) = sum_x p(x) sum_v pi_i f1(pi_i/pi_j)` with
//! `f1(x) = x e^(x-1) - 1` controls the exponential moment of those ratios;
//! `M_ij = 1 + ln(1 + D)` scales the clipping threshold.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::instance::PolicyTable;

/// Divergence generator `x e^(x-1) - 1`.
#[inline]
pub fn f1(x: f64) -> f64 {
    x * libm::exp(x - 1.0) - 1.0
}

/// Point estimates and confidence sandwich of importance ratios, indexed
/// `[i][j][context][action]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioTables {
    num_experts: usize,
    num_contexts: usize,
    num_actions: usize,
    r_hat: Vec<f64>,
    r_lo: Vec<f64>,
    r_hi: Vec<f64>,
    xi: f64,
    lo_offset: f64,
    hi_offset: f64,
}

impl RatioTables {
    #[inline]
    fn idx(&self, i: usize, j: usize, x: usize, v: usize) -> usize {
        ((i * self.num_experts + j) * self.num_contexts + x) * self.num_actions + v
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

    pub fn xi(&self) -> f64 {
        self.xi
    }

    #[inline]
    pub fn r_hat(&self, i: usize, j: usize, x: usize, v: usize) -> f64 {
        self.r_hat[self.idx(i, j, x, v)]
    }

    #[inline]
    pub fn r_lo(&self, i: usize, j: usize, x: usize, v: usize) -> f64 {
        self.r_lo[self.idx(i, j, x, v)]
    }

    #[inline]
    pub fn r_hi(&self, i: usize, j: usize, x: usize, v: usize) -> f64 {
        self.r_hi[self.idx(i, j, x, v)]
    }

    /// Constant sandwich width `r_hi - r_lo`.
    pub fn kappa(&self) -> f64 {
        self.lo_offset + self.hi_offset
    }
}

/// Sandwich width for accuracy `xi` and floor `p_v`.
pub fn ratio_kappa(xi: f64, p_v: f64) -> f64 {
    xi / (p_v * (p_v - xi)) + xi / (p_v * (p_v + xi))
}

/// Builds `r_hat`, `r_lo` and `r_hi` for every ordered expert pair.
///
/// `r_lo` is deliberately not floored at zero.
pub fn ratio_tables(policies: &PolicyTable, xi: f64, p_v: f64) -> Result<RatioTables> {
    if !(xi >= 0.0 && p_v > 0.0 && xi < p_v) {
        return Err(Error::XiTooLarge { xi, p_v });
    }
    let (n, nx, nv) = (
        policies.num_experts(),
        policies.num_contexts(),
        policies.num_actions(),
    );
    let lo_offset = xi / (p_v * (p_v - xi));
    let hi_offset = xi / (p_v * (p_v + xi));
    let len = n * n * nx * nv;
    let mut r_hat = Vec::with_capacity(len);
    let mut r_lo = Vec::with_capacity(len);
    let mut r_hi = Vec::with_capacity(len);
    for i in 0..n {
        for j in 0..n {
            for x in 0..nx {
                for v in 0..nv {
                    let r = policies.get(i, x, v) / policies.get(j, x, v);
                    r_hat.push(r);
                    r_lo.push(r - lo_offset);
                    r_hi.push(r + hi_offset);
                }
            }
        }
    }
    Ok(RatioTables {
        num_experts: n,
        num_contexts: nx,
        num_actions: nv,
        r_hat,
        r_lo,
        r_hi,
        xi,
        lo_offset,
        hi_offset,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceMode {
    /// Lower estimates from approximate policies.
    Estimated,
    /// True divergences from known policies and context distribution.
    Exact,
}

/// Pairwise constants `M_ij >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceTable {
    num_experts: usize,
    m: Vec<f64>,
    mode: DivergenceMode,
    m_global: f64,
}

impl DivergenceTable {
    fn from_entries(num_experts: usize, m: Vec<f64>, mode: DivergenceMode) -> Self {
        let m_global = m.iter().copied().fold(1.0, f64::max);
        Self {
            num_experts,
            m,
            mode,
            m_global,
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.num_experts + j]
    }

    pub fn num_experts(&self) -> usize {
        self.num_experts
    }

    pub fn mode(&self) -> DivergenceMode {
        self.mode
    }

    /// Upper bound `M` on all entries. Defaults to the largest entry; see
    /// [`DivergenceTable::with_global_bound`].
    pub fn m_global(&self) -> f64 {
        self.m_global
    }

    /// Replaces the global bound, never going below the largest entry.
    pub fn with_global_bound(mut self, bound: f64) -> Self {
        let max = self.max_entry();
        self.m_global = bound.max(max);
        self
    }

    pub fn max_entry(&self) -> f64 {
        self.m.iter().copied().fold(1.0, f64::max)
    }

    /// Largest `M_ij` over `j` for a fixed row `i`.
    pub fn row_max(&self, i: usize) -> f64 {
        self.m[i * self.num_experts..(i + 1) * self.num_experts]
            .iter()
            .copied()
            .fold(1.0, f64::max)
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        self.m.chunks(self.num_experts).map(<[f64]>::to_vec).collect()
    }
}

/// Lower divergence estimates from approximate policies:
/// `D_lo(i||j) = p_x sum_x sum_v (pi_hat_i - xi) f1(r_lo_ij)`, floored at 0,
/// and `M_lo = 1 + ln(1 + D_lo)`.
pub fn divergence_lower(
    approx: &PolicyTable,
    ratios: &RatioTables,
    xi: f64,
    p_x: f64,
) -> Result<DivergenceTable> {
    let n = approx.num_experts();
    if ratios.num_experts() != n
        || ratios.num_contexts() != approx.num_contexts()
        || ratios.num_actions() != approx.num_actions()
    {
        return Err(Error::DimensionMismatch(
            "ratio tables do not match the approximate policies".into(),
        ));
    }
    let mut m = vec![1.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut d = 0.0;
            for x in 0..approx.num_contexts() {
                for v in 0..approx.num_actions() {
                    d += (approx.get(i, x, v) - xi) * f1(ratios.r_lo(i, j, x, v));
                }
            }
            let d = (p_x * d).max(0.0);
            m[i * n + j] = 1.0 + libm::log1p(d);
        }
    }
    Ok(DivergenceTable::from_entries(n, m, DivergenceMode::Estimated))
}

/// True divergences under context distribution `context_dist`.
pub fn divergence_exact(policies: &PolicyTable, context_dist: &[f64]) -> Result<DivergenceTable> {
    if context_dist.len() != policies.num_contexts() {
        return Err(Error::DimensionMismatch(
            "context distribution length differs from policy contexts".into(),
        ));
    }
    let n = policies.num_experts();
    let mut m = vec![1.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut d = 0.0;
            for (x, &px) in context_dist.iter().enumerate() {
                let inner: f64 = policies
                    .row(i, x)
                    .iter()
                    .zip(policies.row(j, x))
                    .map(|(&pi, &pj)| pi * f1(pi / pj))
                    .sum();
                d += px * inner;
            }
            // Each inner sum is nonnegative by convexity; guard rounding only.
            m[i * n + j] = 1.0 + libm::log1p(d.max(0.0));
        }
    }
    Ok(DivergenceTable::from_entries(n, m, DivergenceMode::Exact))
}

/// Global bound `M >= max_ij M_ij` for any instance meeting the `p_x`, `p_v`
/// assumptions.
///
/// Returns `max((1 - p_x) |X| |V| f1((1 - p_v)/p_v), 1 + ln(1 + f1((1 - p_v)/p_v)))`.
/// The second term is always a valid bound because no ratio exceeds
/// `(1 - p_v)/p_v` and `f1` is increasing; it only dominates in near-uniform
/// or single-context regimes where the first term is below one.
pub fn divergence_upper(p_x: f64, p_v: f64, num_contexts: usize, num_actions: usize) -> f64 {
    let worst = f1((1.0 - p_v) / p_v);
    let loose = (1.0 - p_x) * num_contexts as f64 * num_actions as f64 * worst;
    let tight = 1.0 + libm::log1p(worst.max(0.0));
    loose.max(tight)
}

/// `g(y) = y / ln(2/y)` on `(0, 2)`, strictly increasing.
#[inline]
pub fn w_forward(y: f64) -> f64 {
    y / libm::log1p((2.0 - y) / y)
}

const W_UPPER: f64 = 2.0 - 1e-15;

/// Inverse of [`w_forward`]: the unique `y` in `(0, 2)` with
/// `y / ln(2/y) = x`. Nonpositive inputs map to `0`.
pub fn w_inverse(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return 0.0;
    }
    if w_forward(W_UPPER) <= x {
        return W_UPPER;
    }
    let (mut lo, mut hi) = (0.0_f64, W_UPPER);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if w_forward(mid) < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_by_two() -> PolicyTable {
        PolicyTable::new(2, 1, 2, vec![0.7, 0.3, 0.3, 0.7]).unwrap()
    }

    #[test]
    fn f1_values() {
        assert_eq!(f1(1.0), 0.0);
        assert_eq!(f1(0.0), -1.0);
        // 2e - 1
        assert_abs_diff_eq!(f1(2.0), 4.436_563_656_918_09, epsilon = 1e-14);
    }

    #[test]
    fn ratio_sandwich_collapses_at_zero_xi() {
        let t = ratio_tables(&two_by_two(), 0.0, 0.3).unwrap();
        assert_eq!(t.kappa(), 0.0);
        for i in 0..2 {
            for j in 0..2 {
                for v in 0..2 {
                    assert_eq!(t.r_lo(i, j, 0, v), t.r_hat(i, j, 0, v));
                    assert_eq!(t.r_hi(i, j, 0, v), t.r_hat(i, j, 0, v));
                }
                assert_eq!(t.r_hat(i, i, 0, 0), 1.0);
            }
        }
    }

    #[test]
    fn identical_policies_give_unit_ratios() {
        let p = PolicyTable::new(2, 1, 2, vec![0.4, 0.6, 0.4, 0.6]).unwrap();
        let t = ratio_tables(&p, 0.0, 0.4).unwrap();
        assert!(t.r_hat.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn kappa_reference_value() {
        // 0.01/(0.065*0.055) + 0.01/(0.065*0.075), evaluated at 50 digits.
        assert_abs_diff_eq!(ratio_kappa(0.01, 0.065), 4.848_484_848_484_848, epsilon = 1e-12);
        let t = ratio_tables(&two_by_two(), 0.01, 0.065).unwrap();
        assert_abs_diff_eq!(t.kappa(), 4.848_484_848_484_848, epsilon = 1e-12);
        for k in 0..t.r_hat.len() {
            assert!(t.r_lo[k] <= t.r_hat[k] && t.r_hat[k] <= t.r_hi[k]);
            assert_abs_diff_eq!(t.r_hi[k] - t.r_lo[k], t.kappa(), epsilon = 1e-12);
        }
    }

    #[test]
    fn xi_at_or_above_floor_is_rejected() {
        assert!(matches!(
            ratio_tables(&two_by_two(), 0.3, 0.3),
            Err(Error::XiTooLarge { .. })
        ));
    }

    #[test]
    fn lower_divergence_identical_policies() {
        let p = PolicyTable::new(3, 2, 2, [0.25, 0.75, 0.5, 0.5].repeat(3)).unwrap();
        let r = ratio_tables(&p, 0.0, 0.25).unwrap();
        let d = divergence_lower(&p, &r, 0.0, 0.5).unwrap();
        assert!(d.m.iter().all(|&m| m == 1.0));
        assert_eq!(d.mode(), DivergenceMode::Estimated);
    }

    #[test]
    fn lower_divergence_at_least_one_with_positive_xi() {
        let r = ratio_tables(&two_by_two(), 0.1, 0.3).unwrap();
        let d = divergence_lower(&two_by_two(), &r, 0.1, 1.0).unwrap();
        assert!(d.m.iter().all(|&m| m >= 1.0));
        assert_eq!(d.get(0, 0), 1.0);
    }

    #[test]
    fn exact_divergence_two_expert_reference() {
        // 50-digit evaluation of the double sum.
        let d = divergence_exact(&two_by_two(), &[1.0]).unwrap();
        assert_abs_diff_eq!(d.get(0, 1), 2.835_605_820_753_752_7, epsilon = 1e-12);
        assert_eq!(d.get(0, 0), 1.0);
        assert_eq!(d.get(1, 1), 1.0);
    }

    #[test]
    fn exact_divergence_is_not_symmetric() {
        let p = PolicyTable::new(2, 1, 3, vec![0.6, 0.3, 0.1, 0.2, 0.2, 0.6]).unwrap();
        let d = divergence_exact(&p, &[1.0]).unwrap();
        assert!((d.get(0, 1) - d.get(1, 0)).abs() > 1e-3);
    }

    #[test]
    fn upper_bound_examples() {
        assert_eq!(divergence_upper(0.25, 0.5, 2, 2), 1.0);
        // 28.5 * f1(14.384615...) at 50 digits.
        let m = divergence_upper(0.05, 0.065, 6, 5);
        assert_abs_diff_eq!(m / 266_445_059.426_546_48, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn w_inverse_reference_points() {
        let two_over_e = 2.0 / core::f64::consts::E;
        assert_abs_diff_eq!(w_inverse(two_over_e), two_over_e, epsilon = 1e-12);
        assert_abs_diff_eq!(w_inverse(1.0 / core::f64::consts::LN_2), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w_inverse(1.0), 0.852_605_502_013_725_5, epsilon = 1e-12);
        let big = w_inverse(1e6);
        assert!(big > 1.99 && big < 2.0);
        assert_abs_diff_eq!(big, 1.999_996_000_012, epsilon = 1e-12);
        assert_eq!(w_inverse(0.0), 0.0);
        assert_eq!(w_inverse(-3.0), 0.0);
    }
}
