//! Trace CSV, summary JSON and diagnostics documents.

use std::path::Path;

use edbandit_core::analysis::{AnalysisTimes, GapVariant};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cumulative pseudo-regret of one run at one checkpoint. `episode` is
/// zero-based; `step` is the global step counted from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub algorithm: String,
    pub run: usize,
    pub episode: usize,
    pub step: u64,
    pub cum_regret: f64,
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    if records.is_empty() {
        w.write_record(["algorithm", "run", "episode", "step", "cum_regret"])
            .map_err(|e| Error::csv(path, e))?;
    }
    for r in records {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = r.headers().map_err(|e| Error::csv(path, e))?;
    if !headers.iter().eq(["algorithm", "run", "episode", "step", "cum_regret"]) {
        return Err(Error::format(path, "unexpected trace header"));
    }
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::csv(path, e))
}

/// Mean and sample standard deviation over runs at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub episode: usize,
    pub step: u64,
    pub mean: f64,
    /// Zero with a single run.
    pub std: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    /// Last step of every episode.
    pub episode_ends: Vec<StepStats>,
    #[serde(rename = "final")]
    pub final_step: StepStats,
    /// Every checkpoint.
    pub curve: Vec<StepStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub horizon: u64,
    pub algorithms: Vec<AlgorithmSummary>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Aggregates records by algorithm (in order of first appearance) and step.
pub fn summarize(records: &[TraceRecord], horizon: u64) -> Summary {
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.algorithm.as_str()) {
            order.push(&r.algorithm);
        }
    }
    let algorithms = order
        .into_iter()
        .filter_map(|alg| {
            let mut rows: Vec<&TraceRecord> =
                records.iter().filter(|r| r.algorithm == alg).collect();
            rows.sort_by_key(|r| (r.step, r.run));
            let mut curve = Vec::new();
            for group in rows.chunk_by(|a, b| a.step == b.step) {
                let values: Vec<f64> = group.iter().map(|r| r.cum_regret).collect();
                let (mean, std) = mean_std(&values);
                curve.push(StepStats {
                    episode: group[0].episode,
                    step: group[0].step,
                    mean,
                    std,
                    runs: values.len(),
                });
            }
            let final_step = curve.last()?.clone();
            let episode_ends = curve
                .iter()
                .filter(|s| horizon > 0 && s.step % horizon == 0)
                .cloned()
                .collect();
            Some(AlgorithmSummary {
                algorithm: alg.to_string(),
                episode_ends,
                final_step,
                curve,
            })
        })
        .collect();
    Summary {
        horizon,
        algorithms,
    }
}

/// Estimator state of one expert at a checkpoint. Infinite indices are
/// written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertState {
    pub z: f64,
    pub epsilon: f64,
    pub error: f64,
    pub estimate: f64,
    pub index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub algorithm: String,
    pub run: usize,
    pub episode: usize,
    pub step: u64,
    /// Steps seen by the agent; restarts every episode.
    pub agent_step: u64,
    /// Empty for agents without an estimator.
    pub experts: Vec<ExpertState>,
}

/// Divergence constants used by one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRecord {
    pub algorithm: String,
    pub run: usize,
    pub episode: usize,
    pub mode: String,
    pub m: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertTimesDoc {
    pub expert: usize,
    pub gap: f64,
    pub tau: Option<u64>,
    pub t_k: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisDoc {
    pub episode: usize,
    pub variant: String,
    pub best_expert: usize,
    pub t_clip: Option<u64>,
    pub tau_1: Option<u64>,
    pub t_1: Option<u64>,
    pub experts: Vec<ExpertTimesDoc>,
}

impl From<&AnalysisTimes> for AnalysisDoc {
    fn from(a: &AnalysisTimes) -> Self {
        AnalysisDoc {
            episode: a.episode,
            variant: match a.variant {
                GapVariant::EdUcb => "ed_ucb_gaps",
                GapVariant::DUcb => "d_ucb_gaps",
            }
            .to_string(),
            best_expert: a.best_expert,
            t_clip: a.t_clip,
            tau_1: a.tau_1,
            t_1: a.t_1,
            experts: a
                .experts
                .iter()
                .map(|e| ExpertTimesDoc {
                    expert: e.expert,
                    gap: e.gap,
                    tau: e.tau,
                    t_k: e.t_k,
                })
                .collect(),
        }
    }
}
