//! Problem-dependent times after which the regret analysis takes hold.
//!
//! Each time is the first `t` from which its condition holds at every later
//! step. All conditions are monotone for `t >= 3`, so a doubling search from
//! 3 followed by bisection finds the crossover; the search then walks down
//! to `t = 1` while the condition keeps holding.

use alloc::vec::Vec;

use crate::divergence::w_inverse;
use crate::estimator::clip_threshold;

/// Largest time searched; conditions still failing here are reported as
/// undefined.
pub const SEARCH_CAP: u64 = 1 << 62;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapVariant {
    /// Gaps reduced by `gamma p_v`, for approximate experts.
    EdUcb,
    /// Raw gaps without the divergence factor, for exact experts.
    DUcb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertTimes {
    pub expert: usize,
    pub gap: f64,
    pub tau: Option<u64>,
    /// `max(T_1, tau)`.
    pub t_k: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisTimes {
    pub episode: usize,
    pub variant: GapVariant,
    pub best_expert: usize,
    pub t_clip: Option<u64>,
    pub tau_1: Option<u64>,
    /// `max(T_clip, tau_1)`.
    pub t_1: Option<u64>,
    /// Suboptimal experts only.
    pub experts: Vec<ExpertTimes>,
}

/// Inputs shared by all analysis times of one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisParams {
    pub c: f64,
    /// Global divergence bound `M`.
    pub m: f64,
    pub gamma: f64,
    pub p_v: f64,
    /// Largest clip key `r_hi / M_lo` over all ratio entries.
    pub max_clip_key: f64,
}

/// First `t` from which `pred` holds forever, assuming `pred` flips at most
/// once from false to true on `t >= 3`.
pub fn first_time_always(pred: impl Fn(u64) -> bool) -> Option<u64> {
    let start = 3;
    let mut t = if pred(start) {
        start
    } else {
        let mut lo = start;
        let mut hi = start * 2;
        loop {
            if pred(hi) {
                break;
            }
            if hi >= SEARCH_CAP {
                return None;
            }
            lo = hi;
            hi = hi.saturating_mul(2).min(SEARCH_CAP);
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if pred(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    if t == start {
        while t > 1 && pred(t - 1) {
            t -= 1;
        }
    }
    Some(t)
}

fn sqrt_log_ratio(t: u64) -> f64 {
    let tf = t as f64;
    libm::sqrt(libm::log(tf) / tf)
}

/// `C w(sqrt(ln t / t)) <= gamma`.
pub fn tau_1(c: f64, gamma: f64) -> Option<u64> {
    first_time_always(|t| c * w_inverse(sqrt_log_ratio(t)) <= gamma)
}

/// Clip level under the pessimistic normalizer `Z = t / M`.
pub fn pessimistic_clip_level(c: f64, m: f64, t: u64) -> f64 {
    if t <= 1 {
        return 0.0;
    }
    c * w_inverse(m * sqrt_log_ratio(t))
}

/// First time from which no ratio entry is clipped.
pub fn t_clip(c: f64, m: f64, max_clip_key: f64) -> Option<u64> {
    first_time_always(|t| max_clip_key <= clip_threshold(pessimistic_clip_level(c, m, t)))
}

/// Threshold on `t / ln t` for a suboptimal expert, or `None` when the gap
/// is too small for the variant.
pub fn tau_k_threshold(gap: f64, params: &AnalysisParams, variant: GapVariant) -> Option<f64> {
    let c = params.c;
    match variant {
        GapVariant::EdUcb => {
            let d = gap - params.gamma * params.p_v;
            if !(d > 0.0) {
                return None;
            }
            let l = libm::log(6.0 * c / d);
            Some(9.0 * c * c * params.m * params.m * l * l / (d * d))
        }
        GapVariant::DUcb => {
            if !(gap > 0.0) {
                return None;
            }
            let l = libm::log(6.0 * c / gap);
            Some(9.0 * c * c * l * l / (gap * gap))
        }
    }
}

/// `t / ln t >= threshold`; `t = 1` counts as satisfied.
pub fn tau_k(threshold: f64) -> Option<u64> {
    first_time_always(|t| {
        let tf = t as f64;
        let lt = libm::log(tf);
        lt <= 0.0 || tf / lt >= threshold
    })
}

/// Analysis times for one episode given its expert means.
pub fn analysis_times(
    episode: usize,
    means: &[f64],
    params: &AnalysisParams,
    variant: GapVariant,
) -> AnalysisTimes {
    let best = means
        .iter()
        .enumerate()
        .fold(0, |b, (i, &m)| if m > means[b] { i } else { b });
    let best_mean = means.get(best).copied().unwrap_or(0.0);
    let t_clip = t_clip(params.c, params.m, params.max_clip_key);
    let tau_1 = tau_1(params.c, params.gamma);
    let t_1 = match (t_clip, tau_1) {
        (Some(a), Some(b)) => Some(a.max(b)),
        _ => None,
    };
    let experts = means
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(i, &mu)| {
            let gap = best_mean - mu;
            let tau = tau_k_threshold(gap, params, variant).and_then(tau_k);
            let t_k = match (t_1, tau) {
                (Some(a), Some(b)) => Some(a.max(b)),
                _ => None,
            };
            ExpertTimes {
                expert: i,
                gap,
                tau,
                t_k,
            }
        })
        .collect();
    AnalysisTimes {
        episode,
        variant,
        best_expert: best,
        t_clip,
        tau_1,
        t_1,
        experts,
    }
}
