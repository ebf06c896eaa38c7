//! Environment model: contexts, actions, experts and episodes.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};
use crate::sampling;

/// Tolerance on probability rows summing to one.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Slack allowed when re-checking a stored `gamma` against recomputed means.
const GAMMA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProblemDims {
    pub num_contexts: usize,
    pub num_actions: usize,
    pub num_experts: usize,
    pub num_episodes: usize,
    /// Steps per episode.
    pub horizon: u64,
}

impl ProblemDims {
    pub fn validate(&self) -> Result<()> {
        if self.num_contexts == 0
            || self.num_experts == 0
            || self.num_episodes == 0
            || self.horizon == 0
        {
            return Err(Error::InfeasibleParams(
                "all problem dimensions must be at least 1".to_string(),
            ));
        }
        if self.num_actions < 2 {
            return Err(Error::InfeasibleParams(format!(
                "num_actions must be at least 2, got {}",
                self.num_actions
            )));
        }
        Ok(())
    }
}

/// Lower bounds on context probabilities (`p_x`), action probabilities
/// (`p_v`) and expert means (`gamma`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceParams {
    pub p_x: f64,
    pub p_v: f64,
    pub gamma: f64,
}

impl InstanceParams {
    /// Checks `0 < p_x <= 1/|X|`, `0 < p_v <= 1/|V|` and `0 < gamma <= 1`.
    pub fn validate(&self, dims: &ProblemDims) -> Result<()> {
        check_lower_bounds(self.p_x, self.p_v, dims)?;
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::AssumptionViolated(format!(
                "gamma = {} must lie in (0, 1]",
                self.gamma
            )));
        }
        Ok(())
    }
}

fn check_lower_bounds(p_x: f64, p_v: f64, dims: &ProblemDims) -> Result<()> {
    if !(p_x > 0.0 && p_x <= 1.0 / dims.num_contexts as f64) {
        return Err(Error::InfeasibleParams(format!(
            "p_x = {p_x} must lie in (0, 1/{}]",
            dims.num_contexts
        )));
    }
    if !(p_v > 0.0 && p_v <= 1.0 / dims.num_actions as f64) {
        return Err(Error::InfeasibleParams(format!(
            "p_v = {p_v} must lie in (0, 1/{}]",
            dims.num_actions
        )));
    }
    Ok(())
}

/// Conditional action distributions `pi_i(v | x)`, stored flat in
/// `[expert][context][action]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    num_experts: usize,
    num_contexts: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    /// Builds a table and checks every row is a strictly positive
    /// distribution.
    pub fn new(
        num_experts: usize,
        num_contexts: usize,
        num_actions: usize,
        probs: Vec<f64>,
    ) -> Result<Self> {
        let table = Self::new_unchecked(num_experts, num_contexts, num_actions, probs)?;
        table.validate(None)?;
        Ok(table)
    }

    /// Shape check only; rows may contain zeros.
    pub(crate) fn new_unchecked(
        num_experts: usize,
        num_contexts: usize,
        num_actions: usize,
        probs: Vec<f64>,
    ) -> Result<Self> {
        if probs.len() != num_experts * num_contexts * num_actions {
            return Err(Error::DimensionMismatch(format!(
                "policy table needs {} entries, got {}",
                num_experts * num_contexts * num_actions,
                probs.len()
            )));
        }
        Ok(Self {
            num_experts,
            num_contexts,
            num_actions,
            probs,
        })
    }

    /// Builds from nested `[expert][context][action]` rows.
    pub fn from_nested(rows: &[Vec<Vec<f64>>]) -> Result<Self> {
        let num_experts = rows.len();
        let num_contexts = rows.first().map_or(0, Vec::len);
        let num_actions = rows
            .first()
            .and_then(|r| r.first())
            .map_or(0, Vec::len);
        let mut probs = Vec::with_capacity(num_experts * num_contexts * num_actions);
        for expert in rows {
            if expert.len() != num_contexts {
                return Err(Error::DimensionMismatch(
                    "ragged policy table (contexts)".to_string(),
                ));
            }
            for row in expert {
                if row.len() != num_actions {
                    return Err(Error::DimensionMismatch(
                        "ragged policy table (actions)".to_string(),
                    ));
                }
                probs.extend_from_slice(row);
            }
        }
        Self::new(num_experts, num_contexts, num_actions, probs)
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.num_experts)
            .map(|i| (0..self.num_contexts).map(|x| self.row(i, x).to_vec()).collect())
            .collect()
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

    #[inline]
    pub fn get(&self, expert: usize, context: usize, action: usize) -> f64 {
        self.probs[(expert * self.num_contexts + context) * self.num_actions + action]
    }

    #[inline]
    pub fn row(&self, expert: usize, context: usize) -> &[f64] {
        let start = (expert * self.num_contexts + context) * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Entries positive, rows normalized, and every entry at least `p_v`
    /// when a bound is given.
    pub fn validate(&self, p_v: Option<f64>) -> Result<()> {
        for i in 0..self.num_experts {
            for x in 0..self.num_contexts {
                let row = self.row(i, x);
                check_distribution(row, &format!("policy row (expert {i}, context {x})"))?;
                if let Some(bound) = p_v {
                    if let Some(&low) = row.iter().find(|&&p| p < bound) {
                        return Err(Error::AssumptionViolated(format!(
                            "expert {i} context {x} has probability {low} below p_v = {bound}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Smallest entry of the table.
    pub fn min_prob(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn check_distribution(probs: &[f64], what: &str) -> Result<()> {
    if probs.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::InvalidDistribution(format!(
            "{what} has a non-positive or non-finite entry"
        )));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::InvalidDistribution(format!(
            "{what} sums to {total}"
        )));
    }
    Ok(())
}

/// Context distribution `p_e` and Bernoulli reward means `q_e(x, v)` of one
/// episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeModel {
    context_dist: Vec<f64>,
    /// Flat `[context][action]`.
    reward_means: Vec<f64>,
    num_actions: usize,
}

impl EpisodeModel {
    pub fn new(context_dist: Vec<f64>, reward_means: Vec<Vec<f64>>) -> Result<Self> {
        if reward_means.len() != context_dist.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} reward rows for {} contexts",
                reward_means.len(),
                context_dist.len()
            )));
        }
        let num_actions = reward_means.first().map_or(0, Vec::len);
        if reward_means.iter().any(|r| r.len() != num_actions) {
            return Err(Error::DimensionMismatch(
                "ragged reward-mean table".to_string(),
            ));
        }
        let model = Self {
            context_dist,
            reward_means: reward_means.concat(),
            num_actions,
        };
        model.validate(None)?;
        Ok(model)
    }

    pub fn num_contexts(&self) -> usize {
        self.context_dist.len()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn context_dist(&self) -> &[f64] {
        &self.context_dist
    }

    #[inline]
    pub fn reward_mean(&self, context: usize, action: usize) -> f64 {
        self.reward_means[context * self.num_actions + action]
    }

    pub fn reward_row(&self, context: usize) -> &[f64] {
        &self.reward_means[context * self.num_actions..(context + 1) * self.num_actions]
    }

    pub fn reward_means_nested(&self) -> Vec<Vec<f64>> {
        self.reward_means
            .chunks(self.num_actions)
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn validate(&self, p_x: Option<f64>) -> Result<()> {
        check_distribution(&self.context_dist, "context distribution")?;
        if let Some(bound) = p_x {
            if let Some(&low) = self.context_dist.iter().find(|&&p| p < bound) {
                return Err(Error::AssumptionViolated(format!(
                    "context probability {low} below p_x = {bound}"
                )));
            }
        }
        if self
            .reward_means
            .iter()
            .any(|q| !(0.0..=1.0).contains(q))
        {
            return Err(Error::InvalidDistribution(
                "reward means must lie in [0, 1]".to_string(),
            ));
        }
        Ok(())
    }
}

/// Mean reward of `expert` in `episode`:
/// `sum_x p_e(x) sum_v pi_i(v|x) q_e(x, v)`.
pub fn expert_mean(policies: &PolicyTable, expert: usize, episode: &EpisodeModel) -> Result<f64> {
    if expert >= policies.num_experts() {
        return Err(Error::IndexOutOfRange {
            what: "expert",
            index: expert,
            limit: policies.num_experts(),
        });
    }
    if policies.num_contexts() != episode.num_contexts()
        || policies.num_actions() != episode.num_actions()
    {
        return Err(Error::DimensionMismatch(format!(
            "policies are {}x{}, episode is {}x{}",
            policies.num_contexts(),
            policies.num_actions(),
            episode.num_contexts(),
            episode.num_actions()
        )));
    }
    let mut total = 0.0;
    for (x, &px) in episode.context_dist().iter().enumerate() {
        let inner: f64 = policies
            .row(expert, x)
            .iter()
            .zip(episode.reward_row(x))
            .map(|(p, q)| p * q)
            .sum();
        total += px * inner;
    }
    Ok(total)
}

/// A full environment: dimensions, assumption constants, experts and the
/// per-episode models.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub dims: ProblemDims,
    pub params: InstanceParams,
    pub policies: PolicyTable,
    pub episodes: Vec<EpisodeModel>,
}

impl Instance {
    /// Assembles and validates an instance.
    pub fn new(
        dims: ProblemDims,
        params: InstanceParams,
        policies: PolicyTable,
        episodes: Vec<EpisodeModel>,
    ) -> Result<Self> {
        let instance = Self {
            dims,
            params,
            policies,
            episodes,
        };
        instance.validate()?;
        Ok(instance)
    }

    /// Checks shapes and Assumptions on `p_x`, `p_v` and `gamma`.
    pub fn validate(&self) -> Result<()> {
        let dims = &self.dims;
        dims.validate()?;
        if self.policies.num_experts() != dims.num_experts
            || self.policies.num_contexts() != dims.num_contexts
            || self.policies.num_actions() != dims.num_actions
        {
            return Err(Error::DimensionMismatch(
                "policy table shape disagrees with dims".to_string(),
            ));
        }
        if self.episodes.len() != dims.num_episodes {
            return Err(Error::DimensionMismatch(format!(
                "{} episode models for num_episodes = {}",
                self.episodes.len(),
                dims.num_episodes
            )));
        }
        for ep in &self.episodes {
            if ep.num_contexts() != dims.num_contexts || ep.num_actions() != dims.num_actions {
                return Err(Error::DimensionMismatch(
                    "episode model shape disagrees with dims".to_string(),
                ));
            }
        }
        self.params.validate(dims)?;
        self.policies.validate(Some(self.params.p_v))?;
        for ep in &self.episodes {
            ep.validate(Some(self.params.p_x))?;
        }
        let min_mean = self.min_expert_mean()?;
        if min_mean + GAMMA_TOL < self.params.gamma {
            return Err(Error::AssumptionViolated(format!(
                "gamma = {} exceeds the worst expert mean {min_mean}",
                self.params.gamma
            )));
        }
        Ok(())
    }

    /// Means `mu_{i,e}` of all experts in episode `episode`.
    pub fn expert_means(&self, episode: usize) -> Result<Vec<f64>> {
        let ep = self.episode(episode)?;
        (0..self.dims.num_experts)
            .map(|i| expert_mean(&self.policies, i, ep))
            .collect()
    }

    /// Smallest mean over all experts and episodes.
    pub fn min_expert_mean(&self) -> Result<f64> {
        let mut min = f64::INFINITY;
        for e in 0..self.episodes.len() {
            for m in self.expert_means(e)? {
                min = min.min(m);
            }
        }
        Ok(min)
    }

    pub fn episode(&self, episode: usize) -> Result<&EpisodeModel> {
        self.episodes.get(episode).ok_or(Error::IndexOutOfRange {
            what: "episode",
            index: episode,
            limit: self.episodes.len(),
        })
    }

    /// Draws one interaction with Bernoulli rewards.
    pub fn sample_step<R: Rng + ?Sized>(
        &self,
        episode: usize,
        expert: usize,
        rng: &mut R,
    ) -> Result<Step> {
        self.sample_step_with(episode, expert, &Bernoulli, rng)
    }

    pub fn sample_step_with<S: RewardSampler, R: Rng + ?Sized>(
        &self,
        episode: usize,
        expert: usize,
        sampler: &S,
        rng: &mut R,
    ) -> Result<Step> {
        let ep = self.episode(episode)?;
        if expert >= self.dims.num_experts {
            return Err(Error::IndexOutOfRange {
                what: "expert",
                index: expert,
                limit: self.dims.num_experts,
            });
        }
        let context = sampling::categorical(ep.context_dist(), rng);
        let action = sampling::categorical(self.policies.row(expert, context), rng);
        let reward = sampler.sample(ep.reward_mean(context, action), rng);
        Ok(Step {
            context,
            action,
            reward,
        })
    }
}

/// One environment draw: context, recommended action and reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub context: usize,
    pub action: usize,
    pub reward: f64,
}

/// Draws a reward in `[0, 1]` with a given mean.
pub trait RewardSampler {
    fn sample<R: Rng + ?Sized>(&self, mean: f64, rng: &mut R) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Bernoulli;

impl RewardSampler for Bernoulli {
    fn sample<R: Rng + ?Sized>(&self, mean: f64, rng: &mut R) -> f64 {
        sampling::bernoulli(mean, rng)
    }
}

/// Random instance satisfying the lower-bound assumptions.
///
/// Each policy row is `p_v + (1 - |V| p_v) * s` and each context
/// distribution is `p_x + (1 - |X| p_x) * s` for a uniform simplex point `s`.
/// Reward means are uniform on `[0, 1]`. The stored `gamma` is the smallest
/// expert mean across episodes.
pub fn generate_synthetic<R: Rng + ?Sized>(
    dims: ProblemDims,
    p_x: f64,
    p_v: f64,
    rng: &mut R,
) -> Result<Instance> {
    dims.validate()?;
    check_lower_bounds(p_x, p_v, &dims)?;

    let policies = random_policies(&dims, p_v, rng)?;
    let episodes = (0..dims.num_episodes)
        .map(|_| {
            let context_dist = floored_simplex(dims.num_contexts, p_x, rng);
            let reward_means = (0..dims.num_contexts)
                .map(|_| (0..dims.num_actions).map(|_| rng.random::<f64>()).collect())
                .collect();
            EpisodeModel::new(context_dist, reward_means)
        })
        .collect::<Result<Vec<_>>>()?;
    finish_with_gamma(dims, p_x, p_v, policies, episodes)
}

fn random_policies<R: Rng + ?Sized>(
    dims: &ProblemDims,
    p_v: f64,
    rng: &mut R,
) -> Result<PolicyTable> {
    let mut probs = Vec::with_capacity(dims.num_experts * dims.num_contexts * dims.num_actions);
    for _ in 0..dims.num_experts * dims.num_contexts {
        probs.extend(floored_simplex(dims.num_actions, p_v, rng));
    }
    PolicyTable::new(dims.num_experts, dims.num_contexts, dims.num_actions, probs)
}

/// `floor + (1 - len * floor) * s`; exactly uniform when the slack vanishes.
fn floored_simplex<R: Rng + ?Sized>(len: usize, floor: f64, rng: &mut R) -> Vec<f64> {
    let slack = 1.0 - len as f64 * floor;
    let s = sampling::simplex(len, rng);
    if slack <= 1e-12 {
        return vec![floor; len];
    }
    s.into_iter().map(|p| floor + slack * p).collect()
}

fn finish_with_gamma(
    dims: ProblemDims,
    p_x: f64,
    p_v: f64,
    policies: PolicyTable,
    episodes: Vec<EpisodeModel>,
) -> Result<Instance> {
    let mut instance = Instance {
        dims,
        params: InstanceParams {
            p_x,
            p_v,
            gamma: 1.0,
        },
        policies,
        episodes,
    };
    let gamma = instance.min_expert_mean()?;
    if gamma <= 0.0 {
        return Err(Error::AssumptionViolated(
            "an expert has zero mean reward; gamma must be positive".to_string(),
        ));
    }
    instance.params.gamma = gamma;
    instance.validate()?;
    Ok(instance)
}

/// Reward-mean table and action list extracted from a completed ratings
/// matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsSkeleton {
    /// Selected item (column) indices, best global mean first.
    pub actions: Vec<usize>,
    /// `[context][action]` mean rating among the users of each context.
    pub reward_means: Vec<Vec<f64>>,
}

/// Selects the `top_k` items by global mean rating and averages each item's
/// ratings within every user cluster.
///
/// `assignments[u]` is the context of user row `u`. Ties in the global mean
/// go to the lower item index.
pub fn ratings_skeleton(
    ratings: &[Vec<f64>],
    assignments: &[usize],
    top_k: usize,
) -> Result<RatingsSkeleton> {
    let num_users = ratings.len();
    if num_users == 0 {
        return Err(Error::InvalidRatings("ratings matrix is empty".to_string()));
    }
    let num_items = ratings[0].len();
    if ratings.iter().any(|r| r.len() != num_items) {
        return Err(Error::InvalidRatings("ragged ratings matrix".to_string()));
    }
    if let Some((u, _)) = ratings
        .iter()
        .enumerate()
        .find(|(_, r)| r.iter().any(|v| !(0.0..=1.0).contains(v)))
    {
        return Err(Error::InvalidRatings(format!(
            "user {u} has a rating outside [0, 1]"
        )));
    }
    if assignments.len() != num_users {
        return Err(Error::InvalidRatings(format!(
            "{} cluster assignments for {num_users} users",
            assignments.len()
        )));
    }
    if top_k == 0 || top_k > num_items {
        return Err(Error::InvalidRatings(format!(
            "top_k = {top_k} must lie in [1, {num_items}]"
        )));
    }

    let mut global: Vec<(usize, f64)> = (0..num_items)
        .map(|j| {
            let sum: f64 = ratings.iter().map(|r| r[j]).sum();
            (j, sum / num_users as f64)
        })
        .collect();
    global.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let actions: Vec<usize> = global.iter().take(top_k).map(|&(j, _)| j).collect();

    let num_contexts = assignments.iter().copied().max().map_or(0, |m| m + 1);
    let mut sums = vec![vec![0.0; top_k]; num_contexts];
    let mut counts = vec![0usize; num_contexts];
    for (row, &ctx) in ratings.iter().zip(assignments) {
        counts[ctx] += 1;
        for (slot, &item) in sums[ctx].iter_mut().zip(&actions) {
            *slot += row[item];
        }
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyCluster(empty));
    }
    let reward_means = sums
        .into_iter()
        .zip(&counts)
        .map(|(row, &c)| row.into_iter().map(|s| s / c as f64).collect())
        .collect();
    Ok(RatingsSkeleton {
        actions,
        reward_means,
    })
}

impl Instance {
    /// Random experts and per-episode context distributions around a fixed
    /// ratings-derived reward table shared by all episodes.
    pub fn from_skeleton<R: Rng + ?Sized>(
        skeleton: &RatingsSkeleton,
        num_experts: usize,
        num_episodes: usize,
        horizon: u64,
        p_x: f64,
        p_v: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let dims = ProblemDims {
            num_contexts: skeleton.reward_means.len(),
            num_actions: skeleton.actions.len(),
            num_experts,
            num_episodes,
            horizon,
        };
        dims.validate()?;
        check_lower_bounds(p_x, p_v, &dims)?;
        let policies = random_policies(&dims, p_v, rng)?;
        let episodes = (0..num_episodes)
            .map(|_| {
                let dist = floored_simplex(dims.num_contexts, p_x, rng);
                EpisodeModel::new(dist, skeleton.reward_means.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        finish_with_gamma(dims, p_x, p_v, policies, episodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims(x: usize, v: usize, n: usize, e: usize) -> ProblemDims {
        ProblemDims {
            num_contexts: x,
            num_actions: v,
            num_experts: n,
            num_episodes: e,
            horizon: 10,
        }
    }

    #[test]
    fn uniform_policy_constant_reward() {
        let p = PolicyTable::new(1, 2, 2, vec![0.5; 4]).unwrap();
        let ep = EpisodeModel::new(vec![0.5, 0.5], vec![vec![0.5, 0.5]; 2]).unwrap();
        assert_abs_diff_eq!(expert_mean(&p, 0, &ep).unwrap(), 0.5, epsilon = 1e-15);
        let ones = EpisodeModel::new(vec![0.3, 0.7], vec![vec![1.0, 1.0]; 2]).unwrap();
        assert_abs_diff_eq!(expert_mean(&p, 0, &ones).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn expert_mean_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = generate_synthetic(dims(2, 2, 2, 1), 0.2, 0.2, &mut rng).unwrap();
        let ep = &inst.episodes[0];
        for i in 0..2 {
            let mut brute = 0.0;
            for x in 0..2 {
                for v in 0..2 {
                    brute += ep.context_dist()[x] * inst.policies.get(i, x, v) * ep.reward_mean(x, v);
                }
            }
            assert_abs_diff_eq!(expert_mean(&inst.policies, i, ep).unwrap(), brute, epsilon = 1e-12);
        }
    }

    #[test]
    fn expert_mean_rejects_mismatch() {
        let p = PolicyTable::new(1, 2, 2, vec![0.5; 4]).unwrap();
        let ep = EpisodeModel::new(vec![1.0], vec![vec![0.5, 0.5]]).unwrap();
        assert!(matches!(expert_mean(&p, 0, &ep), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn degenerate_simplex_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = generate_synthetic(dims(3, 4, 3, 2), 0.1, 0.25, &mut rng).unwrap();
        assert!(inst.policies.as_slice().iter().all(|&p| p == 0.25));
    }

    #[test]
    fn generator_is_deterministic_and_valid() {
        let d = dims(6, 5, 4, 5);
        let a = generate_synthetic(d, 0.05, 0.065, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = generate_synthetic(d, 0.05, 0.065, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_eq!(a.params.gamma, a.min_expert_mean().unwrap());
    }

    #[test]
    fn generator_rejects_infeasible_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(generate_synthetic(dims(6, 5, 2, 1), 0.2, 0.05, &mut rng).is_err());
        assert!(generate_synthetic(dims(6, 5, 2, 1), 0.05, 0.3, &mut rng).is_err());
        assert!(generate_synthetic(dims(6, 1, 2, 1), 0.05, 0.3, &mut rng).is_err());
    }

    #[test]
    fn gamma_above_worst_mean_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut inst = generate_synthetic(dims(2, 2, 2, 2), 0.2, 0.2, &mut rng).unwrap();
        inst.params.gamma = inst.min_expert_mean().unwrap() + 1e-6;
        assert!(inst.validate().unwrap_err().is_assumption_violation());
    }

    #[test]
    fn point_mass_steps_are_deterministic() {
        // p_e and pi concentrate (up to 1e-12) on context 1 / action 0.
        let eps = 1e-12;
        let p = PolicyTable::new(1, 2, 2, vec![1.0 - eps, eps, 1.0 - eps, eps]).unwrap();
        let ep = EpisodeModel::new(vec![eps, 1.0 - eps], vec![vec![1.0, 1.0]; 2]).unwrap();
        let inst = Instance {
            dims: dims(2, 2, 1, 1),
            params: InstanceParams { p_x: eps, p_v: eps, gamma: 1.0 },
            policies: p,
            episodes: vec![ep],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let s = inst.sample_step(0, 0, &mut rng).unwrap();
            assert_eq!((s.context, s.action, s.reward), (1, 0, 1.0));
        }
        assert!(inst.sample_step(1, 0, &mut rng).is_err());
        assert!(inst.sample_step(0, 1, &mut rng).is_err());
    }

    #[test]
    fn bernoulli_cell_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 100_000;
        let hits: f64 = (0..n).map(|_| Bernoulli.sample(0.3, &mut rng)).sum();
        assert_abs_diff_eq!(hits / n as f64, 0.3, epsilon = 0.01);
    }

    #[test]
    fn ratings_two_users_one_cluster() {
        let sk = ratings_skeleton(&[vec![0.2], vec![0.6]], &[0, 0], 1).unwrap();
        assert_abs_diff_eq!(sk.reward_means[0][0], 0.4, epsilon = 1e-15);
    }

    #[test]
    fn ratings_toy_matrix_by_hand() {
        let ratings = vec![
            vec![0.1, 0.9, 0.5],
            vec![0.3, 0.7, 0.5],
            vec![0.8, 0.2, 1.0],
            vec![0.6, 0.4, 0.0],
        ];
        // Global means: 0.45, 0.55, 0.5 -> order [1, 2, 0].
        let sk = ratings_skeleton(&ratings, &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(sk.actions, vec![1, 2]);
        assert_abs_diff_eq!(sk.reward_means[0][0], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(sk.reward_means[0][1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(sk.reward_means[1][0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(sk.reward_means[1][1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn ratings_errors() {
        assert!(matches!(
            ratings_skeleton(&[vec![1.2]], &[0], 1),
            Err(Error::InvalidRatings(_))
        ));
        assert_eq!(
            ratings_skeleton(&[vec![0.5], vec![0.5]], &[0, 2], 1),
            Err(Error::EmptyCluster(1))
        );
    }
}
