//! One run of the episodic protocol with pseudo-regret accounting.

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand::Rng;

use crate::agents::{Agent, Observation};
use crate::error::{Error, Result};
use crate::instance::Instance;

/// Expected per-step regret `mu*_e - mu_{i,e}` of each expert in each episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeGaps {
    pub means: Vec<Vec<f64>>,
    pub best: Vec<f64>,
}

impl EpisodeGaps {
    pub fn new(instance: &Instance) -> Result<Self> {
        let means: Vec<Vec<f64>> = (0..instance.episodes.len())
            .map(|e| instance.expert_means(e))
            .collect::<Result<_>>()?;
        let best = means
            .iter()
            .map(|m| m.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        Ok(Self { means, best })
    }

    #[inline]
    pub fn gap(&self, episode: usize, expert: usize) -> f64 {
        self.best[episode] - self.means[episode][expert]
    }

    /// Index of the best expert in `episode`, lowest on ties.
    pub fn best_expert(&self, episode: usize) -> usize {
        crate::agents::argmax_lowest(&self.means[episode])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub num_episodes: usize,
    pub horizon: u64,
    /// Record every this many steps within an episode; must divide `horizon`.
    pub checkpoint_every: u64,
    /// Regret charged before the first episode.
    pub initial_regret: f64,
}

impl RunOptions {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.checkpoint_every == 0 {
            return Err(Error::InvalidConfig(
                "horizon and checkpoint_every must be positive".into(),
            ));
        }
        if self.horizon % self.checkpoint_every != 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "checkpoint_every = {} does not divide horizon = {}",
                self.checkpoint_every,
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Cumulative regret at a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    pub episode: usize,
    /// Global step, counted from 1 across episodes.
    pub step: u64,
    /// Step within the episode, counted from 1.
    pub episode_step: u64,
    pub cum_regret: f64,
}

/// Runs every episode with a fresh agent from `factory(episode)` and reports
/// checkpoints to `sink` along with the agent's state at that point.
pub fn run_episodes<R, F, S>(
    instance: &Instance,
    gaps: &EpisodeGaps,
    options: &RunOptions,
    rng: &mut R,
    mut factory: F,
    mut sink: S,
) -> Result<f64>
where
    R: Rng + ?Sized,
    F: FnMut(usize) -> Result<Box<dyn Agent>>,
    S: FnMut(&Checkpoint, &dyn Agent),
{
    options.validate()?;
    if options.num_episodes > instance.episodes.len() {
        return Err(Error::IndexOutOfRange {
            what: "num_episodes",
            index: options.num_episodes,
            limit: instance.episodes.len(),
        });
    }
    let mut cum = options.initial_regret;
    let mut global = 0u64;
    for e in 0..options.num_episodes {
        let mut agent = factory(e)?;
        for t in 1..=options.horizon {
            let k = agent.select_expert();
            let step = instance.sample_step(e, k, rng)?;
            agent.observe(&Observation {
                expert: k,
                context: step.context,
                action: step.action,
                reward: step.reward,
            });
            cum += gaps.gap(e, k);
            global += 1;
            if t % options.checkpoint_every == 0 {
                sink(
                    &Checkpoint {
                        episode: e,
                        step: global,
                        episode_step: t,
                        cum_regret: cum,
                    },
                    agent.as_ref(),
                );
            }
        }
    }
    Ok(cum)
}
