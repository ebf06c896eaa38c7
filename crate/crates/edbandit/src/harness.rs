//! Replicated episodic experiments.
//!
//! # Random streams
//!
//! Every run draws from ChaCha8 seeded with `base_seed` and switched to
//! stream `(run << 32) | lane`. Lane 0 drives the environment; all agents of
//! a run replay the same lane, so they face common random numbers until
//! their choices diverge. Lane `1 + i` drives offline sampling of expert `i`.
//! Results therefore do not depend on scheduling or thread count.

use std::sync::Arc;

use edbandit_core::agents::{
    default_clip_constant, estimated_tables, exact_tables, make_agent, Knowledge,
};
use edbandit_core::bootstrap::{
    build_approx_policies, sample_offline, ApproxExperts, BootstrapPlan, EffectivePlan,
    PracticalOverride,
};
use edbandit_core::divergence::divergence_upper;
use edbandit_core::estimator::{ExpertSnapshot, IsTables};
use edbandit_core::instance::generate_synthetic;
use edbandit_core::sim::{run_episodes, EpisodeGaps, RunOptions};
use edbandit_core::{AgentConfig, AgentKind, Instance, PolicyTable, ProblemDims};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{BootstrapMode, BootstrapSpec, ExperimentConfig, InstanceSource};
use crate::error::{Error, Result};
use crate::formats::read_instance;
use crate::report::{DivergenceRecord, ExpertState, SnapshotRecord, TraceRecord};

/// Offline sampling budget above which the theory plan is refused.
pub const MAX_BOOTSTRAP_PULLS: u64 = 10_000_000_000;

const ENVIRONMENT_LANE: u64 = 0;
const BOOTSTRAP_LANE_BASE: u64 = 1;

/// Generator for `lane` of `run`.
pub fn stream_rng(base_seed: u64, run: usize, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(((run as u64) << 32) | lane);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

#[derive(Debug, Clone)]
pub struct PreparedAgent {
    pub label: String,
    pub config: AgentConfig,
}

#[derive(Debug, Clone)]
pub struct BootstrapSetup {
    pub mode: BootstrapMode,
    pub theory: BootstrapPlan,
    pub effective: EffectivePlan,
    pub prior: Vec<f64>,
}

/// Per-run outcome of offline sampling.
#[derive(Debug, Clone)]
pub struct RunBootstrap {
    pub approx: ApproxExperts,
    /// Regret charged to bootstrapped agents before the first episode.
    pub initial_regret: f64,
}

/// Everything needed to execute runs, fixed before the first draw.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub instance: Arc<Instance>,
    pub gaps: EpisodeGaps,
    pub agents: Vec<PreparedAgent>,
    pub num_runs: usize,
    pub base_seed: u64,
    pub options: RunOptions,
    pub bootstrap: Option<BootstrapSetup>,
    /// Global divergence bound used for the default clip constant.
    pub m_upper: f64,
    pub default_c: f64,
    pub record_snapshots: bool,
    exact: Vec<Option<Arc<IsTables>>>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub records: Vec<TraceRecord>,
    /// Filled only when snapshots are requested.
    pub snapshots: Vec<SnapshotRecord>,
    /// Filled only when snapshots are requested.
    pub divergences: Vec<DivergenceRecord>,
}

/// Builds the instance named by a config.
pub fn load_instance(source: &InstanceSource) -> Result<Instance> {
    match source {
        InstanceSource::File(path) => read_instance(path),
        InstanceSource::Generate(spec) => {
            let dims: ProblemDims = spec.dims.into();
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            Ok(generate_synthetic(dims, spec.p_x, spec.p_v, &mut rng)?)
        }
    }
}

impl Experiment {
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let instance = load_instance(&config.instance)?;
        let agents = config
            .agents
            .iter()
            .map(|a| PreparedAgent {
                label: a.label(),
                config: a.agent_config(),
            })
            .collect();
        let mut exp = Self::new(
            instance,
            agents,
            config.num_runs,
            config.base_seed,
            config.num_episodes,
            config.horizon,
            config.checkpoint_every,
            config.bootstrap.as_ref(),
        )?;
        exp.record_snapshots = config.output.diagnostics.is_some();
        Ok(exp)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        instance: Instance,
        agents: Vec<PreparedAgent>,
        num_runs: usize,
        base_seed: u64,
        num_episodes: Option<usize>,
        horizon: Option<u64>,
        checkpoint_every: u64,
        bootstrap: Option<&BootstrapSpec>,
    ) -> Result<Self> {
        if num_runs == 0 {
            return Err(Error::Config("num_runs must be at least 1".into()));
        }
        let dims = instance.dims;
        let params = instance.params;
        let num_episodes = num_episodes.unwrap_or(dims.num_episodes);
        if num_episodes == 0 || num_episodes > dims.num_episodes {
            return Err(Error::Config(format!(
                "num_episodes = {num_episodes} must lie in [1, {}]",
                dims.num_episodes
            )));
        }
        let horizon = horizon.unwrap_or(dims.horizon);
        let options = RunOptions {
            num_episodes,
            horizon,
            checkpoint_every,
            initial_regret: 0.0,
        };
        options.validate()?;
        for a in &agents {
            a.config.validate(params.p_v)?;
        }

        let m_upper = divergence_upper(params.p_x, params.p_v, dims.num_contexts, dims.num_actions);
        let default_c = default_clip_constant(m_upper, params.gamma, params.p_v);
        let gaps = EpisodeGaps::new(&instance)?;

        let needs_exact = agents.iter().any(|a| a.config.kind == AgentKind::DUcb);
        let exact = (0..num_episodes)
            .map(|e| {
                needs_exact
                    .then(|| exact_tables(&instance.policies, instance.episodes[e].context_dist()).map(Arc::new))
                    .transpose()
            })
            .collect::<edbandit_core::Result<Vec<_>>>()?;

        let bootstrap = match bootstrap {
            Some(spec) => Some(plan_bootstrap(&instance, num_episodes, horizon, spec)?),
            None => None,
        };

        Ok(Self {
            instance: Arc::new(instance),
            gaps,
            agents,
            num_runs,
            base_seed,
            options,
            bootstrap,
            m_upper,
            default_c,
            record_snapshots: false,
            exact,
        })
    }

    /// Offline sampling for `run`, or `None` without a bootstrap section.
    pub fn bootstrap_run(&self, run: usize) -> Result<Option<RunBootstrap>> {
        let Some(setup) = &self.bootstrap else {
            return Ok(None);
        };
        let inst = &self.instance;
        let counts = sample_offline(
            &inst.policies,
            &setup.prior,
            inst.params.p_x,
            setup.effective.a,
            setup.effective.n,
            |i| stream_rng(self.base_seed, run, BOOTSTRAP_LANE_BASE + i as u64),
        )?;
        let approx = build_approx_policies(&counts, setup.effective.xi, self.options.horizon)?;
        let initial_regret = match setup.mode {
            BootstrapMode::Offline => 0.0,
            BootstrapMode::Online => {
                setup.effective.a as f64 * inst.dims.num_experts as f64 * self.gaps.best[0]
            }
        };
        Ok(Some(RunBootstrap {
            approx,
            initial_regret,
        }))
    }

    fn ed_tables(&self, agent: &PreparedAgent, boot: Option<&RunBootstrap>) -> Result<Arc<IsTables>> {
        let params = self.instance.params;
        let (policies, plan_xi): (&PolicyTable, f64) = match boot {
            Some(b) => (&b.approx.policies, self.bootstrap.as_ref().map_or(0.0, |s| s.effective.xi)),
            None => (&self.instance.policies, 0.0),
        };
        let xi = agent.config.xi.unwrap_or(plan_xi);
        Ok(Arc::new(estimated_tables(policies, xi, params.p_v, params.p_x)?))
    }

    fn run_task(&self, run: usize, agent_idx: usize, boot: Option<&RunBootstrap>) -> Result<ExperimentOutput> {
        let agent = &self.agents[agent_idx];
        let kind = agent.config.kind;
        let approximate = match kind {
            AgentKind::EdUcb => Some(self.ed_tables(agent, boot)?),
            _ => None,
        };
        let mut options = self.options;
        if kind == AgentKind::EdUcb {
            options.initial_regret = boot.map_or(0.0, |b| b.initial_regret);
        }
        let n = self.instance.dims.num_experts;
        let mut out = ExperimentOutput::default();
        let mut rng = stream_rng(self.base_seed, run, ENVIRONMENT_LANE);
        let record_snapshots = self.record_snapshots;
        let mut divergences = Vec::new();
        run_episodes(
            &self.instance,
            &self.gaps,
            &options,
            &mut rng,
            |e| {
                let knowledge = Knowledge {
                    approximate: approximate.clone(),
                    exact: self.exact[e].clone(),
                    default_c: Some(self.default_c),
                };
                let used = match kind {
                    AgentKind::EdUcb => knowledge.approximate.as_deref(),
                    AgentKind::DUcb => knowledge.exact.as_deref(),
                    _ => None,
                };
                if let (true, Some(t)) = (record_snapshots, used) {
                    divergences.push(DivergenceRecord {
                        algorithm: agent.label.clone(),
                        run,
                        episode: e,
                        mode: format!("{:?}", t.divergence().mode()).to_lowercase(),
                        m: t.divergence().to_nested(),
                    });
                }
                make_agent(&agent.config, n, &knowledge)
            },
            |cp, a| {
                out.records.push(TraceRecord {
                    algorithm: agent.label.clone(),
                    run,
                    episode: cp.episode,
                    step: cp.step,
                    cum_regret: cp.cum_regret,
                });
                if record_snapshots {
                    out.snapshots.push(SnapshotRecord {
                        algorithm: agent.label.clone(),
                        run,
                        episode: cp.episode,
                        step: cp.step,
                        agent_step: a.step(),
                        experts: a
                            .diagnostics()
                            .unwrap_or_default()
                            .iter()
                            .map(expert_state)
                            .collect(),
                    });
                }
            },
        )?;
        out.divergences = divergences;
        Ok(out)
    }

    /// Executes every (run, agent) pair. Output order is run-major, then
    /// agent order, regardless of `execution`.
    pub fn run(&self, execution: Execution) -> Result<ExperimentOutput> {
        let tasks: Vec<(usize, usize)> = (0..self.num_runs)
            .flat_map(|r| (0..self.agents.len()).map(move |a| (r, a)))
            .collect();
        let uses_bootstrap = self.agents.iter().any(|a| a.config.kind == AgentKind::EdUcb);
        let boot_for = |r: usize| {
            if uses_bootstrap {
                self.bootstrap_run(r)
            } else {
                Ok(None)
            }
        };
        let parts: Vec<ExperimentOutput> = match execution {
            Execution::Sequential => {
                let boots = (0..self.num_runs).map(boot_for).collect::<Result<Vec<_>>>()?;
                tasks
                    .iter()
                    .map(|&(r, a)| self.run_task(r, a, boots[r].as_ref()))
                    .collect::<Result<_>>()?
            }
            Execution::Parallel => {
                let boots = (0..self.num_runs)
                    .into_par_iter()
                    .map(boot_for)
                    .collect::<Result<Vec<_>>>()?;
                tasks
                    .par_iter()
                    .map(|&(r, a)| self.run_task(r, a, boots[r].as_ref()))
                    .collect::<Result<_>>()?
            }
        };
        let mut out = ExperimentOutput::default();
        for p in parts {
            out.records.extend(p.records);
            out.snapshots.extend(p.snapshots);
            out.divergences.extend(p.divergences);
        }
        Ok(out)
    }
}

fn expert_state(s: &ExpertSnapshot) -> ExpertState {
    ExpertState {
        z: s.z,
        epsilon: s.epsilon,
        error: s.error,
        estimate: s.estimate,
        index: s.index,
    }
}

fn plan_bootstrap(
    instance: &Instance,
    num_episodes: usize,
    horizon: u64,
    spec: &BootstrapSpec,
) -> Result<BootstrapSetup> {
    let params = instance.params;
    let dims = ProblemDims {
        num_episodes,
        horizon,
        ..instance.dims
    };
    let mut theory = BootstrapPlan::theory(params.p_x, params.p_v, params.gamma, &dims)?;
    if let Some(o) = &spec.practical {
        theory = theory.with_override(PracticalOverride {
            xi: o.xi,
            n: o.n,
            a: o.a,
        });
    }
    let effective = theory.effective(params.p_x, params.p_v, dims.num_actions, &dims)?;
    let total = effective.a.saturating_mul(dims.num_experts as u64);
    if total > MAX_BOOTSTRAP_PULLS {
        return Err(Error::Config(format!(
            "bootstrap needs {} pulls per expert ({total} total); set bootstrap.override",
            effective.a
        )));
    }
    let prior = spec
        .prior
        .clone()
        .unwrap_or_else(|| instance.episodes[0].context_dist().to_vec());
    Ok(BootstrapSetup {
        mode: spec.mode,
        theory,
        effective,
        prior,
    })
}
