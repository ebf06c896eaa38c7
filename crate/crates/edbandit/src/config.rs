//! Experiment configuration document.
//!
//! Relative paths inside a config file resolve against the file's directory.

use std::path::{Path, PathBuf};

use edbandit_core::{AgentConfig, AgentKind, ExplorationFn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::DimsDoc;

fn default_checkpoint_every() -> u64 {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    pub agents: Vec<AgentSpec>,
    /// Defaults to the instance's episode count.
    #[serde(default)]
    pub num_episodes: Option<usize>,
    /// Defaults to the instance's horizon.
    #[serde(default)]
    pub horizon: Option<u64>,
    pub num_runs: usize,
    pub base_seed: u64,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u64,
    #[serde(default)]
    pub bootstrap: Option<BootstrapSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSource {
    File(PathBuf),
    Generate(GenerateSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub dims: DimsDoc,
    pub p_x: f64,
    pub p_v: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKindDoc {
    EdUcb,
    DUcb,
    Ucb1,
    KlUcb,
}

impl From<AgentKindDoc> for AgentKind {
    fn from(k: AgentKindDoc) -> Self {
        match k {
            AgentKindDoc::EdUcb => AgentKind::EdUcb,
            AgentKindDoc::DUcb => AgentKind::DUcb,
            AgentKindDoc::Ucb1 => AgentKind::Ucb1,
            AgentKindDoc::KlUcb => AgentKind::KlUcb,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationDoc {
    LogT,
    #[serde(rename = "log_t_plus_3loglog_t")]
    LogTPlus3LogLogT,
}

impl From<ExplorationDoc> for ExplorationFn {
    fn from(e: ExplorationDoc) -> Self {
        match e {
            ExplorationDoc::LogT => ExplorationFn::LogT,
            ExplorationDoc::LogTPlus3LogLogT => ExplorationFn::LogTPlus3LogLogT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub kind: AgentKindDoc,
    /// Name in traces; defaults to the kind name.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub c: Option<f64>,
    /// ED-UCB only; defaults to the bootstrap accuracy.
    #[serde(default)]
    pub xi: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub exploration: Option<ExplorationDoc>,
}

impl AgentSpec {
    pub fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| AgentKind::from(self.kind).name().to_string())
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            kind: self.kind.into(),
            c: self.c,
            xi: self.xi,
            delta: self.delta,
            exploration: self.exploration.map(Into::into).unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMode {
    /// Sampling happens before the experiment and costs no regret.
    #[default]
    Offline,
    /// Sampling is charged `A N mu*` regret in the first episode.
    Online,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideSpec {
    #[serde(default)]
    pub xi: Option<f64>,
    #[serde(default)]
    pub n: Option<u64>,
    #[serde(default)]
    pub a: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSpec {
    #[serde(default)]
    pub mode: BootstrapMode,
    /// Replaces the theory sizes; absent fields keep theory values.
    #[serde(default, rename = "override")]
    pub practical: Option<OverrideSpec>,
    /// Context distribution for offline sampling; defaults to the first
    /// episode's.
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub trace: Option<PathBuf>,
    #[serde(default)]
    pub summary: Option<PathBuf>,
    /// Per-checkpoint estimator internals and analysis times.
    #[serde(default)]
    pub diagnostics: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: Self =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let InstanceSource::File(p) = &mut self.instance {
            fix(p);
        }
        for p in [
            &mut self.output.trace,
            &mut self.output.summary,
            &mut self.output.diagnostics,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Checks that do not need the instance.
    pub fn validate(&self) -> Result<()> {
        if self.num_runs == 0 {
            return Err(Error::Config("num_runs must be at least 1".into()));
        }
        if self.agents.is_empty() {
            return Err(Error::Config("at least one agent is required".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        let mut labels: Vec<String> = self.agents.iter().map(AgentSpec::label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate agent label `{}`", w[0])));
        }
        if let Some(label) = labels.iter().find(|l| l.contains([',', '"', '\n'])) {
            return Err(Error::Config(format!(
                "agent label `{label}` may not contain commas, quotes or newlines"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_document() {
        let text = r#"{
            "instance": {"generate": {"dims": {"num_contexts": 3, "num_actions": 3,
                "num_experts": 2, "num_episodes": 1, "horizon": 100},
                "p_x": 0.1, "p_v": 0.1, "seed": 4}},
            "agents": [{"kind": "ed_ucb", "c": 0.25}, {"kind": "kl_ucb", "exploration": "log_t"}],
            "num_runs": 2, "base_seed": 9,
            "bootstrap": {"mode": "online", "override": {"n": 50}},
            "output": {"trace": "t.csv"}
        }"#;
        let mut cfg = ExperimentConfig::from_json_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.checkpoint_every, 100);
        assert_eq!(cfg.agents[1].agent_config().exploration, ExplorationFn::LogT);
        assert_eq!(cfg.bootstrap.as_ref().unwrap().mode, BootstrapMode::Online);
        cfg.resolve_paths(Path::new("/tmp/x"));
        assert_eq!(cfg.output.trace.unwrap(), PathBuf::from("/tmp/x/t.csv"));
    }

    #[test]
    fn rejects_duplicate_labels_and_unknown_keys() {
        let dup = r#"{"instance": {"file": "a.json"}, "agents": [{"kind": "ucb1"}, {"kind": "ucb1"}],
            "num_runs": 1, "base_seed": 0}"#;
        assert!(ExperimentConfig::from_json_str(dup).unwrap().validate().is_err());
        let unknown = r#"{"instance": {"file": "a.json"}, "agents": [], "num_runs": 1,
            "base_seed": 0, "bogus": 1}"#;
        assert!(ExperimentConfig::from_json_str(unknown).is_err());
    }
}
