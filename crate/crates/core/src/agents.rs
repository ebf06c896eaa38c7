//! Expert-selection policies.
//!
//! ED-UCB and D-UCB share every observation across experts through the
//! clipped estimator; UCB1 and KL-UCB treat experts as independent arms.
//! All agents pick the largest index with ties going to the lowest expert.

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::divergence::{divergence_exact, divergence_lower, ratio_tables};
use crate::error::{Error, Result};
use crate::estimator::{ClippedIsState, ExpertSnapshot, IsTables};
use crate::instance::PolicyTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentKind {
    EdUcb,
    DUcb,
    Ucb1,
    KlUcb,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::EdUcb => "ed_ucb",
            AgentKind::DUcb => "d_ucb",
            AgentKind::Ucb1 => "ucb1",
            AgentKind::KlUcb => "kl_ucb",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "ed_ucb" => Some(AgentKind::EdUcb),
            "d_ucb" => Some(AgentKind::DUcb),
            "ucb1" => Some(AgentKind::Ucb1),
            "kl_ucb" => Some(AgentKind::KlUcb),
            _ => None,
        }
    }
}

/// Exploration level `f(t)` for KL-UCB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExplorationFn {
    LogT,
    /// `ln t + 3 ln ln t`, with the second term dropped while `ln t <= 1`.
    #[default]
    LogTPlus3LogLogT,
}

impl ExplorationFn {
    pub fn eval(self, t: u64) -> f64 {
        let lt = libm::log(t.max(1) as f64);
        match self {
            ExplorationFn::LogT => lt,
            ExplorationFn::LogTPlus3LogLogT if lt > 1.0 => lt + 3.0 * libm::log(lt),
            ExplorationFn::LogTPlus3LogLogT => lt,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ExplorationFn::LogT => "log_t",
            ExplorationFn::LogTPlus3LogLogT => "log_t_plus_3loglog_t",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "log_t" => Some(ExplorationFn::LogT),
            "log_t_plus_3loglog_t" => Some(ExplorationFn::LogTPlus3LogLogT),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub kind: AgentKind,
    /// Clip constant `C`; the knowledge default applies when absent.
    pub c: Option<f64>,
    /// Accuracy of the approximate experts (ED-UCB).
    pub xi: Option<f64>,
    /// Failure probability attached to `xi` (ED-UCB, informational).
    pub delta: Option<f64>,
    pub exploration: ExplorationFn,
}

impl AgentConfig {
    pub fn new(kind: AgentKind) -> Self {
        Self {
            kind,
            c: None,
            xi: None,
            delta: None,
            exploration: ExplorationFn::default(),
        }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = Some(c);
        self
    }

    pub fn with_xi(mut self, xi: f64) -> Self {
        self.xi = Some(xi);
        self
    }

    pub fn validate(&self, p_v: f64) -> Result<()> {
        if let Some(c) = self.c {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "clip constant must be positive, got {c}"
                )));
            }
        }
        if self.kind == AgentKind::EdUcb {
            if let Some(xi) = self.xi {
                if !(xi >= 0.0 && xi < p_v) {
                    return Err(Error::XiTooLarge { xi, p_v });
                }
            }
        }
        if let Some(delta) = self.delta {
            if !(delta > 0.0 && delta <= 1.0) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "delta must lie in (0, 1], got {delta}"
                )));
            }
        }
        Ok(())
    }
}

/// One interaction as seen by the agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub expert: usize,
    pub context: usize,
    pub action: usize,
    pub reward: f64,
}

pub trait Agent {
    fn kind(&self) -> AgentKind;

    /// Current index of every expert; `+inf` marks an undefined index.
    fn indices(&self) -> Vec<f64>;

    fn select_expert(&self) -> usize {
        argmax_lowest(&self.indices())
    }

    fn observe(&mut self, obs: &Observation);

    /// Observations since the agent was created.
    fn step(&self) -> u64;

    /// Estimator internals, for agents that have them.
    fn diagnostics(&self) -> Option<Vec<ExpertSnapshot>> {
        None
    }
}

/// First index of the maximum.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Clip constant used for analysis: `32 M / (gamma (1 - p_v))`.
pub fn default_clip_constant(m: f64, gamma: f64, p_v: f64) -> f64 {
    32.0 * m / (gamma * (1.0 - p_v))
}

/// Tables for ED-UCB: ratios from approximate policies with sandwich width
/// from `xi`, and lower divergence estimates using `p_x`.
pub fn estimated_tables(approx: &PolicyTable, xi: f64, p_v: f64, p_x: f64) -> Result<IsTables> {
    let ratios = ratio_tables(approx, xi, p_v)?;
    let divergence = divergence_lower(approx, &ratios, xi, p_x)?;
    IsTables::new(ratios, divergence)
}

/// Tables for D-UCB: exact ratios and divergences under `context_dist`.
pub fn exact_tables(policies: &PolicyTable, context_dist: &[f64]) -> Result<IsTables> {
    let p_v = policies.min_prob();
    let ratios = ratio_tables(policies, 0.0, p_v)?;
    let divergence = divergence_exact(policies, context_dist)?;
    IsTables::new(ratios, divergence)
}

/// ED-UCB, or D-UCB when built on exact tables with the error term disabled.
#[derive(Debug, Clone)]
pub struct IsUcb {
    kind: AgentKind,
    tables: Arc<IsTables>,
    state: ClippedIsState,
    include_error: bool,
}

impl IsUcb {
    pub fn new(kind: AgentKind, tables: Arc<IsTables>, c: f64, include_error: bool) -> Self {
        let state = ClippedIsState::new(&tables, c);
        Self {
            kind,
            tables,
            state,
            include_error,
        }
    }

    pub fn state(&self) -> &ClippedIsState {
        &self.state
    }

    pub fn tables(&self) -> &IsTables {
        &self.tables
    }
}

impl Agent for IsUcb {
    fn kind(&self) -> AgentKind {
        self.kind
    }

    fn indices(&self) -> Vec<f64> {
        (0..self.tables.num_experts())
            .map(|i| self.state.ucb_index(&self.tables, i, self.include_error))
            .collect()
    }

    fn observe(&mut self, obs: &Observation) {
        self.state
            .record_sample(&self.tables, obs.expert, obs.context, obs.action, obs.reward);
    }

    fn step(&self) -> u64 {
        self.state.t()
    }

    fn diagnostics(&self) -> Option<Vec<ExpertSnapshot>> {
        Some(
            (0..self.tables.num_experts())
                .map(|i| self.state.snapshot(&self.tables, i, self.include_error))
                .collect(),
        )
    }
}

/// `mean + sqrt(2 ln t / n)`; infinite for an unplayed arm.
pub fn ucb1_index(n: u64, sum: f64, t: u64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    let nf = n as f64;
    sum / nf + libm::sqrt(2.0 * libm::log(t.max(1) as f64) / nf)
}

/// Bernoulli relative entropy `kl(p, q)` with `0 ln 0 = 0`.
pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    fn term(a: f64, b: f64) -> f64 {
        if a <= 0.0 {
            0.0
        } else if b <= 0.0 {
            f64::INFINITY
        } else {
            a * libm::log(a / b)
        }
    }
    term(p, q) + term(1.0 - p, 1.0 - q)
}

const KL_TOL: f64 = 1e-9;

/// Largest `q` in `[mean, 1]` with `n kl(mean, q) <= level`, by bisection.
/// Returns the feasible end of the final bracket.
pub fn kl_ucb_bound(mean: f64, n: u64, level: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&mean) {
        return Err(Error::InvalidDistribution(alloc::format!(
            "empirical mean {mean} outside [0, 1]"
        )));
    }
    if level <= 0.0 {
        return Ok(mean);
    }
    let nf = n as f64;
    if nf * bernoulli_kl(mean, 1.0) <= level {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (mean, 1.0);
    while hi - lo > KL_TOL {
        let mid = 0.5 * (lo + hi);
        if nf * bernoulli_kl(mean, mid) <= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// KL-UCB index; infinite for an unplayed arm.
pub fn kl_ucb_index(n: u64, sum: f64, t: u64, exploration: ExplorationFn) -> Result<f64> {
    if n == 0 {
        return Ok(f64::INFINITY);
    }
    kl_ucb_bound(sum / n as f64, n, exploration.eval(t))
}

#[derive(Debug, Clone)]
struct ArmCounts {
    pulls: Vec<u64>,
    sums: Vec<f64>,
    t: u64,
}

impl ArmCounts {
    fn new(num_experts: usize) -> Self {
        Self {
            pulls: vec![0; num_experts],
            sums: vec![0.0; num_experts],
            t: 0,
        }
    }

    fn observe(&mut self, obs: &Observation) {
        self.pulls[obs.expert] += 1;
        self.sums[obs.expert] += obs.reward;
        self.t += 1;
    }
}

#[derive(Debug, Clone)]
pub struct Ucb1 {
    arms: ArmCounts,
}

impl Ucb1 {
    pub fn new(num_experts: usize) -> Self {
        Self {
            arms: ArmCounts::new(num_experts),
        }
    }

    pub fn pulls(&self) -> &[u64] {
        &self.arms.pulls
    }

    pub fn sums(&self) -> &[f64] {
        &self.arms.sums
    }
}

impl Agent for Ucb1 {
    fn kind(&self) -> AgentKind {
        AgentKind::Ucb1
    }

    fn indices(&self) -> Vec<f64> {
        let a = &self.arms;
        a.pulls
            .iter()
            .zip(&a.sums)
            .map(|(&n, &s)| ucb1_index(n, s, a.t))
            .collect()
    }

    fn observe(&mut self, obs: &Observation) {
        self.arms.observe(obs);
    }

    fn step(&self) -> u64 {
        self.arms.t
    }
}

#[derive(Debug, Clone)]
pub struct KlUcb {
    arms: ArmCounts,
    exploration: ExplorationFn,
}

impl KlUcb {
    pub fn new(num_experts: usize, exploration: ExplorationFn) -> Self {
        Self {
            arms: ArmCounts::new(num_experts),
            exploration,
        }
    }

    pub fn pulls(&self) -> &[u64] {
        &self.arms.pulls
    }
}

impl Agent for KlUcb {
    fn kind(&self) -> AgentKind {
        AgentKind::KlUcb
    }

    fn indices(&self) -> Vec<f64> {
        let a = &self.arms;
        a.pulls
            .iter()
            .zip(&a.sums)
            // Rewards are in [0, 1], so the mean is always valid.
            .map(|(&n, &s)| kl_ucb_index(n, s, a.t, self.exploration).unwrap_or(1.0))
            .collect()
    }

    fn observe(&mut self, obs: &Observation) {
        self.arms.observe(obs);
    }

    fn step(&self) -> u64 {
        self.arms.t
    }
}

/// What an agent may know about the instance when it is created.
#[derive(Debug, Clone, Default)]
pub struct Knowledge {
    /// Tables from approximate experts, shared across episodes.
    pub approximate: Option<Arc<IsTables>>,
    /// Exact tables for the current episode.
    pub exact: Option<Arc<IsTables>>,
    /// Clip constant used when the config does not set one.
    pub default_c: Option<f64>,
}

/// Fresh agent at step zero.
pub fn make_agent(
    config: &AgentConfig,
    num_experts: usize,
    knowledge: &Knowledge,
) -> Result<Box<dyn Agent>> {
    let clip = || {
        config
            .c
            .or(knowledge.default_c)
            .ok_or(Error::MissingKnowledge("clip constant"))
    };
    let agent: Box<dyn Agent> = match config.kind {
        AgentKind::EdUcb => {
            let tables = knowledge
                .approximate
                .clone()
                .ok_or(Error::MissingKnowledge("approximate expert tables"))?;
            Box::new(IsUcb::new(AgentKind::EdUcb, tables, clip()?, true))
        }
        AgentKind::DUcb => {
            let tables = knowledge
                .exact
                .clone()
                .ok_or(Error::MissingKnowledge("exact expert tables"))?;
            Box::new(IsUcb::new(AgentKind::DUcb, tables, clip()?, false))
        }
        AgentKind::Ucb1 => Box::new(Ucb1::new(num_experts)),
        AgentKind::KlUcb => Box::new(KlUcb::new(num_experts, config.exploration)),
    };
    Ok(agent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ucb1_reference_value() {
        assert_abs_diff_eq!(ucb1_index(10, 7.0, 100), 1.659_705_182_437_616_2, epsilon = 1e-12);
        assert_eq!(ucb1_index(0, 0.0, 5), f64::INFINITY);
    }

    #[test]
    fn kl_ucb_edges() {
        assert_eq!(kl_ucb_bound(1.0, 10, 3.0).unwrap(), 1.0);
        assert_eq!(kl_ucb_bound(0.3, 10, 0.0).unwrap(), 0.3);
        assert!(kl_ucb_bound(1.2, 10, 1.0).is_err());
    }

    #[test]
    fn kl_ucb_reference_root() {
        let q = kl_ucb_bound(0.5, 20, libm::log(100.0)).unwrap();
        assert_abs_diff_eq!(q, 0.803_744_405_512_186_7, epsilon = 1e-9);
    }

    #[test]
    fn exploration_levels() {
        assert_eq!(ExplorationFn::LogTPlus3LogLogT.eval(1), 0.0);
        assert_eq!(ExplorationFn::LogTPlus3LogLogT.eval(2), libm::log(2.0));
        let t = 1000;
        let lt = libm::log(1000.0);
        assert_eq!(ExplorationFn::LogTPlus3LogLogT.eval(t), lt + 3.0 * libm::log(lt));
        assert_eq!(ExplorationFn::LogT.eval(t), lt);
    }

    #[test]
    fn round_robin_start_for_counting_agents() {
        let mut a = Ucb1::new(3);
        let mut picks = Vec::new();
        for _ in 0..3 {
            let k = a.select_expert();
            picks.push(k);
            a.observe(&Observation {
                expert: k,
                context: 0,
                action: 0,
                reward: 0.0,
            });
        }
        assert_eq!(picks, vec![0, 1, 2]);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax_lowest(&[f64::INFINITY, f64::INFINITY]), 0);
    }

    #[test]
    fn make_agent_requires_knowledge() {
        let k = Knowledge::default();
        let cfg = AgentConfig::new(AgentKind::EdUcb).with_c(1.0);
        assert!(matches!(
            make_agent(&cfg, 2, &k),
            Err(Error::MissingKnowledge(_))
        ));
        assert!(make_agent(&AgentConfig::new(AgentKind::Ucb1), 2, &k).is_ok());
    }
}
