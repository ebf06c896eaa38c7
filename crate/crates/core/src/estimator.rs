//! Clipped importance-sampling estimates shared across experts.
//!
//! Every observation `(k, x, v, y)` contributes to the estimate of every
//! expert `i` with weight `r_lo_ik(v|x) / M_ik`, but only while the sample's
//! clip key `r_hi_ik(v|x) / M_ik` stays at or below `2 ln(2/eps_i(t))`. The
//! clip level shrinks over time, so past samples are re-admitted as `t`
//! grows. Keys come from a finite set, so per-key sums with a prefix query
//! replace a full pass over history.

use alloc::vec;
use alloc::vec::Vec;

use crate::divergence::{w_inverse, DivergenceTable, RatioTables};
use crate::error::{Error, Result};

/// Read-only tables for the clipped estimator: ratios, divergence constants,
/// key layout and error-term lookups.
#[derive(Debug, Clone)]
pub struct IsTables {
    ratios: RatioTables,
    divergence: DivergenceTable,
    keys: Vec<KeyLayout>,
    errors: Vec<ErrorTermTables>,
    /// `1 / M_ik` indexed `[i][k]`.
    inv_m: Vec<f64>,
}

/// Distinct clip keys of one target expert and the slot of each `(k, x, v)`.
#[derive(Debug, Clone)]
struct KeyLayout {
    keys: Vec<f64>,
    slot: Vec<u32>,
    /// `r_lo_ik(v|x) / M_ik` per `(k, x, v)`.
    weight: Vec<f64>,
}

/// Clip keys of one target expert in ascending order with the suffix maximum
/// of `r_hi`.
#[derive(Debug, Clone)]
pub struct ErrorTermTables {
    keys: Vec<f64>,
    suffix_max_hi: Vec<f64>,
    kappa: f64,
}

impl ErrorTermTables {
    fn build(mut entries: Vec<(f64, f64)>, kappa: f64) -> Self {
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        let keys: Vec<f64> = entries.iter().map(|e| e.0).collect();
        let mut suffix_max_hi = vec![f64::NEG_INFINITY; entries.len()];
        let mut running = f64::NEG_INFINITY;
        for (p, e) in entries.iter().enumerate().rev() {
            running = running.max(e.1);
            suffix_max_hi[p] = running;
        }
        Self {
            keys,
            suffix_max_hi,
            kappa,
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Keys in ascending order.
    pub fn keys(&self) -> &[f64] {
        &self.keys
    }

    /// Largest error of the estimate at clip level `epsilon`: the largest
    /// `r_hi` among clipped entries, or `kappa` if any entry is admitted.
    pub fn error_term(&self, epsilon: f64) -> f64 {
        let theta = clip_threshold(epsilon);
        let pos = self.keys.partition_point(|&k| k <= theta);
        let clipped = if pos < self.keys.len() {
            self.suffix_max_hi[pos]
        } else {
            f64::NEG_INFINITY
        };
        let admitted = if pos > 0 { self.kappa } else { f64::NEG_INFINITY };
        clipped.max(admitted)
    }
}

/// `2 ln(2/eps)`, infinite at `eps = 0`.
#[inline]
pub fn clip_threshold(epsilon: f64) -> f64 {
    if epsilon <= 0.0 {
        f64::INFINITY
    } else {
        2.0 * libm::log(2.0 / epsilon)
    }
}

/// `C w(sqrt(t ln t) / z)`; zero for `t <= 1`.
#[inline]
pub fn clip_level_at(c: f64, t: u64, z: f64) -> f64 {
    if t <= 1 {
        return 0.0;
    }
    let tf = t as f64;
    c * w_inverse(libm::sqrt(tf * libm::log(tf)) / z)
}

impl IsTables {
    pub fn new(ratios: RatioTables, divergence: DivergenceTable) -> Result<Self> {
        let n = ratios.num_experts();
        if divergence.num_experts() != n {
            return Err(Error::DimensionMismatch(
                "divergence table and ratio tables disagree on expert count".into(),
            ));
        }
        let (nx, nv) = (ratios.num_contexts(), ratios.num_actions());
        let per = n * nx * nv;
        let mut inv_m = Vec::with_capacity(n * n);
        let mut keys = Vec::with_capacity(n);
        let mut errors = Vec::with_capacity(n);
        for i in 0..n {
            let mut entries = Vec::with_capacity(per);
            let mut weight = Vec::with_capacity(per);
            for k in 0..n {
                let m = divergence.get(i, k);
                inv_m.push(1.0 / m);
                for x in 0..nx {
                    for v in 0..nv {
                        let hi = ratios.r_hi(i, k, x, v);
                        entries.push((hi / m, hi));
                        weight.push(ratios.r_lo(i, k, x, v) / m);
                    }
                }
            }
            let mut distinct: Vec<f64> = entries.iter().map(|e| e.0).collect();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            let slot = entries
                .iter()
                .map(|e| distinct.partition_point(|&d| d < e.0) as u32)
                .collect();
            keys.push(KeyLayout {
                keys: distinct,
                slot,
                weight,
            });
            errors.push(ErrorTermTables::build(entries, ratios.kappa()));
        }
        Ok(Self {
            ratios,
            divergence,
            keys,
            errors,
            inv_m,
        })
    }

    pub fn num_experts(&self) -> usize {
        self.ratios.num_experts()
    }

    pub fn ratios(&self) -> &RatioTables {
        &self.ratios
    }

    pub fn divergence(&self) -> &DivergenceTable {
        &self.divergence
    }

    pub fn error_tables(&self, expert: usize) -> &ErrorTermTables {
        &self.errors[expert]
    }

    /// Number of distinct clip keys for `expert`.
    pub fn num_keys(&self, expert: usize) -> usize {
        self.keys[expert].keys.len()
    }

    /// Largest clip key over all experts.
    pub fn max_clip_key(&self) -> f64 {
        self.keys
            .iter()
            .filter_map(|l| l.keys.last().copied())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[inline]
    fn local(&self, k: usize, x: usize, v: usize) -> usize {
        (k * self.ratios.num_contexts() + x) * self.ratios.num_actions() + v
    }
}

/// Incremental estimator state for all experts.
#[derive(Debug, Clone, PartialEq)]
pub struct ClippedIsState {
    z: Vec<f64>,
    sums: Vec<Vec<f64>>,
    t: u64,
    c: f64,
}

impl ClippedIsState {
    pub fn new(tables: &IsTables, c: f64) -> Self {
        Self {
            z: vec![0.0; tables.num_experts()],
            sums: tables.keys.iter().map(|l| vec![0.0; l.keys.len()]).collect(),
            t: 0,
            c,
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn z(&self, expert: usize) -> f64 {
        self.z[expert]
    }

    /// Per-key sums for `expert`, aligned with its ascending key set.
    pub fn bucket_sums(&self, expert: usize) -> &[f64] {
        &self.sums[expert]
    }

    /// Adds one observation of expert `k` to the estimates of every expert.
    ///
    /// Indices must lie within the tables' dimensions.
    pub fn record_sample(&mut self, tables: &IsTables, k: usize, x: usize, v: usize, y: f64) {
        let n = tables.num_experts();
        let local = tables.local(k, x, v);
        for i in 0..n {
            self.z[i] += tables.inv_m[i * n + k];
            let layout = &tables.keys[i];
            self.sums[i][layout.slot[local] as usize] += y * layout.weight[local];
        }
        self.t += 1;
    }

    pub fn clip_level(&self, expert: usize) -> f64 {
        clip_level_at(self.c, self.t, self.z[expert])
    }

    /// Clipped estimate at the given clip level.
    pub fn estimate_at(&self, tables: &IsTables, expert: usize, epsilon: f64) -> f64 {
        let z = self.z[expert];
        if z <= 0.0 {
            return 0.0;
        }
        let theta = clip_threshold(epsilon);
        let pos = tables.keys[expert].keys.partition_point(|&k| k <= theta);
        self.sums[expert][..pos].iter().sum::<f64>() / z
    }

    pub fn estimate(&self, tables: &IsTables, expert: usize) -> f64 {
        self.estimate_at(tables, expert, self.clip_level(expert))
    }

    pub fn error_term(&self, tables: &IsTables, expert: usize) -> f64 {
        tables.errors[expert].error_term(self.clip_level(expert))
    }

    /// All per-expert quantities at the current step. With
    /// `include_error = false` the error term is reported as zero.
    pub fn snapshot(&self, tables: &IsTables, expert: usize, include_error: bool) -> ExpertSnapshot {
        let epsilon = self.clip_level(expert);
        if self.t == 0 {
            return ExpertSnapshot {
                z: 0.0,
                epsilon,
                error: 0.0,
                estimate: 0.0,
                index: f64::INFINITY,
            };
        }
        let estimate = self.estimate_at(tables, expert, epsilon);
        let error = if include_error {
            tables.errors[expert].error_term(epsilon)
        } else {
            0.0
        };
        ExpertSnapshot {
            z: self.z[expert],
            epsilon,
            error,
            estimate,
            index: estimate + 1.5 * epsilon + error,
        }
    }

    /// `estimate + 1.5 eps + e`; infinite before the first observation.
    pub fn ucb_index(&self, tables: &IsTables, expert: usize, include_error: bool) -> f64 {
        self.snapshot(tables, expert, include_error).index
    }
}

/// Per-expert estimator quantities at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpertSnapshot {
    pub z: f64,
    pub epsilon: f64,
    pub error: f64,
    pub estimate: f64,
    pub index: f64,
}

/// Literal recomputation over the full history, kept as a test oracle.
pub mod reference {
    use alloc::vec::Vec;

    use super::clip_level_at;
    use crate::divergence::{DivergenceTable, RatioTables};

    #[derive(Debug, Clone, Copy)]
    struct Sample {
        k: usize,
        x: usize,
        v: usize,
        y: f64,
    }

    /// Stores every observation and re-evaluates every indicator per query.
    #[derive(Debug, Clone)]
    pub struct NaiveEstimator<'a> {
        ratios: &'a RatioTables,
        divergence: &'a DivergenceTable,
        c: f64,
        history: Vec<Sample>,
    }

    impl<'a> NaiveEstimator<'a> {
        pub fn new(ratios: &'a RatioTables, divergence: &'a DivergenceTable, c: f64) -> Self {
            Self {
                ratios,
                divergence,
                c,
                history: Vec::new(),
            }
        }

        pub fn record(&mut self, k: usize, x: usize, v: usize, y: f64) {
            self.history.push(Sample { k, x, v, y });
        }

        pub fn t(&self) -> u64 {
            self.history.len() as u64
        }

        pub fn z(&self, i: usize) -> f64 {
            self.history
                .iter()
                .map(|s| 1.0 / self.divergence.get(i, s.k))
                .sum()
        }

        pub fn clip_level(&self, i: usize) -> f64 {
            clip_level_at(self.c, self.t(), self.z(i))
        }

        fn admitted(&self, i: usize, k: usize, x: usize, v: usize, eps: f64) -> bool {
            if eps == 0.0 {
                return true;
            }
            self.ratios.r_hi(i, k, x, v) <= 2.0 * libm::log(2.0 / eps) * self.divergence.get(i, k)
        }

        pub fn estimate(&self, i: usize) -> f64 {
            let eps = self.clip_level(i);
            let mut num = 0.0;
            for s in &self.history {
                if self.admitted(i, s.k, s.x, s.v, eps) {
                    let m = self.divergence.get(i, s.k);
                    num += s.y / m * self.ratios.r_lo(i, s.k, s.x, s.v);
                }
            }
            num / self.z(i)
        }

        pub fn error_term(&self, i: usize) -> f64 {
            let eps = self.clip_level(i);
            let mut e = f64::NEG_INFINITY;
            for j in 0..self.ratios.num_experts() {
                for x in 0..self.ratios.num_contexts() {
                    for v in 0..self.ratios.num_actions() {
                        let lo = if self.admitted(i, j, x, v, eps) {
                            self.ratios.r_lo(i, j, x, v)
                        } else {
                            0.0
                        };
                        e = e.max(self.ratios.r_hi(i, j, x, v) - lo);
                    }
                }
            }
            e
        }

        pub fn ucb_index(&self, i: usize, include_error: bool) -> f64 {
            if self.history.is_empty() {
                return f64::INFINITY;
            }
            let e = if include_error { self.error_term(i) } else { 0.0 };
            self.estimate(i) + 1.5 * self.clip_level(i) + e
        }
    }
}

#[cfg(test)]
mod tests {
    use super::reference::NaiveEstimator;
    use super::*;
    use crate::divergence::{divergence_exact, divergence_lower, ratio_tables, ratio_kappa};
    use crate::instance::PolicyTable;
    use approx::assert_abs_diff_eq;

    fn policies() -> PolicyTable {
        PolicyTable::new(
            2,
            2,
            2,
            vec![0.7, 0.3, 0.4, 0.6, 0.3, 0.7, 0.5, 0.5],
        )
        .unwrap()
    }

    fn exact_tables() -> IsTables {
        let p = policies();
        let r = ratio_tables(&p, 0.0, 0.3).unwrap();
        let d = divergence_exact(&p, &[0.5, 0.5]).unwrap();
        IsTables::new(r, d).unwrap()
    }

    #[test]
    fn single_expert_is_running_mean() {
        let p = PolicyTable::new(1, 1, 2, vec![0.5, 0.5]).unwrap();
        let r = ratio_tables(&p, 0.0, 0.5).unwrap();
        let d = divergence_exact(&p, &[1.0]).unwrap();
        let tables = IsTables::new(r, d).unwrap();
        assert_eq!(tables.num_keys(0), 1);
        let mut s = ClippedIsState::new(&tables, 1.0);
        let ys = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        let mut total = 0.0;
        for (t, &y) in ys.iter().enumerate() {
            s.record_sample(&tables, 0, 0, t % 2, y);
            total += y;
            assert_abs_diff_eq!(s.estimate(&tables, 0), total / (t + 1) as f64, epsilon = 1e-15);
            assert_eq!(s.z(0), (t + 1) as f64);
        }
    }

    #[test]
    fn first_step_has_no_clipping() {
        let tables = exact_tables();
        let mut s = ClippedIsState::new(&tables, 5.0);
        assert_eq!(s.ucb_index(&tables, 0, true), f64::INFINITY);
        s.record_sample(&tables, 1, 0, 0, 1.0);
        assert_eq!(s.clip_level(0), 0.0);
        assert_eq!(s.error_term(&tables, 0), 0.0);
    }

    #[test]
    fn clip_level_at_unit_argument() {
        // z = sqrt(t ln t) makes the argument exactly one.
        let t = 50_u64;
        let z = libm::sqrt(50.0 * libm::log(50.0));
        assert_abs_diff_eq!(clip_level_at(1.0, t, z), 0.852_605_502_013_725_5, epsilon = 1e-9);
    }

    #[test]
    fn error_term_enumeration_small_table() {
        let p = policies();
        let xi = 0.05;
        let r = ratio_tables(&p, xi, 0.3).unwrap();
        let d = divergence_lower(&p, &r, xi, 0.5).unwrap();
        let tables = IsTables::new(r.clone(), d.clone()).unwrap();
        let et = tables.error_tables(0);
        // Everything admitted.
        assert_abs_diff_eq!(et.error_term(0.0), ratio_kappa(xi, 0.3), epsilon = 1e-12);
        // Threshold between the two largest keys: the largest key's r_hi dominates.
        let keys = et.keys();
        let top = keys[keys.len() - 1];
        let below = keys[keys.len() - 2];
        assert!(top > below);
        let theta = 0.5 * (top + below);
        let eps = 2.0 / libm::exp(theta / 2.0);
        let mut expect = f64::NEG_INFINITY;
        for j in 0..2 {
            for x in 0..2 {
                for v in 0..2 {
                    let hi = r.r_hi(0, j, x, v);
                    let adm = hi / d.get(0, j) <= theta;
                    expect = expect.max(hi - if adm { r.r_lo(0, j, x, v) } else { 0.0 });
                }
            }
        }
        assert_abs_diff_eq!(et.error_term(eps), expect, epsilon = 1e-12);
        // Nothing admitted.
        let all_hi = (0..2)
            .flat_map(|j| (0..2).flat_map(move |x| (0..2).map(move |v| (j, x, v))))
            .map(|(j, x, v)| r.r_hi(0, j, x, v))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(et.error_term(1.999), all_hi);
    }

    #[test]
    fn matches_naive_on_fixed_trace() {
        let p = policies();
        let xi = 0.02;
        let r = ratio_tables(&p, xi, 0.3).unwrap();
        let d = divergence_lower(&p, &r, xi, 0.5).unwrap();
        let tables = IsTables::new(r.clone(), d.clone()).unwrap();
        let mut s = ClippedIsState::new(&tables, 0.8);
        let mut naive = NaiveEstimator::new(&r, &d, 0.8);
        for t in 0..300usize {
            let (k, x, v) = (t % 2, (t / 2) % 2, (t * 7 / 3) % 2);
            let y = ((t * 31) % 5) as f64 / 4.0;
            s.record_sample(&tables, k, x, v, y);
            naive.record(k, x, v, y);
            for i in 0..2 {
                assert_abs_diff_eq!(s.z(i), naive.z(i), epsilon = 1e-9);
                assert_abs_diff_eq!(s.estimate(&tables, i), naive.estimate(i), epsilon = 1e-9);
                assert_abs_diff_eq!(s.error_term(&tables, i), naive.error_term(i), epsilon = 1e-9);
                assert_abs_diff_eq!(
                    s.ucb_index(&tables, i, true),
                    naive.ucb_index(i, true),
                    epsilon = 1e-9
                );
            }
        }
    }
}
