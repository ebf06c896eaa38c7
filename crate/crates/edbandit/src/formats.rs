//! Instance JSON documents and ratings/clusters CSV input.
//!
//! Floats are written in shortest round-trip form, so reading a written
//! instance reproduces every probability bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use edbandit_core::{EpisodeModel, Instance, InstanceParams, PolicyTable, ProblemDims};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsDoc {
    pub num_contexts: usize,
    pub num_actions: usize,
    pub num_experts: usize,
    pub num_episodes: usize,
    pub horizon: u64,
}

impl From<DimsDoc> for ProblemDims {
    fn from(d: DimsDoc) -> Self {
        ProblemDims {
            num_contexts: d.num_contexts,
            num_actions: d.num_actions,
            num_experts: d.num_experts,
            num_episodes: d.num_episodes,
            horizon: d.horizon,
        }
    }
}

impl From<ProblemDims> for DimsDoc {
    fn from(d: ProblemDims) -> Self {
        DimsDoc {
            num_contexts: d.num_contexts,
            num_actions: d.num_actions,
            num_experts: d.num_experts,
            num_episodes: d.num_episodes,
            horizon: d.horizon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsDoc {
    pub p_x: f64,
    pub p_v: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeDoc {
    pub context_dist: Vec<f64>,
    /// `[context][action]`.
    pub reward_means: Vec<Vec<f64>>,
}

/// On-disk instance. `actions` optionally records which source items the
/// action indices stand for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    pub dims: DimsDoc,
    pub params: ParamsDoc,
    /// `[expert][context][action]`.
    pub policies: Vec<Vec<Vec<f64>>>,
    pub episodes: Vec<EpisodeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<usize>>,
}

impl InstanceDoc {
    pub fn from_instance(instance: &Instance, actions: Option<Vec<usize>>) -> Self {
        InstanceDoc {
            dims: instance.dims.into(),
            params: ParamsDoc {
                p_x: instance.params.p_x,
                p_v: instance.params.p_v,
                gamma: instance.params.gamma,
            },
            policies: instance.policies.to_nested(),
            episodes: instance
                .episodes
                .iter()
                .map(|e| EpisodeDoc {
                    context_dist: e.context_dist().to_vec(),
                    reward_means: e.reward_means_nested(),
                })
                .collect(),
            actions,
        }
    }

    /// Builds and validates the instance.
    pub fn to_instance(&self) -> edbandit_core::Result<Instance> {
        let policies = PolicyTable::from_nested(&self.policies)?;
        let episodes = self
            .episodes
            .iter()
            .map(|e| EpisodeModel::new(e.context_dist.clone(), e.reward_means.clone()))
            .collect::<edbandit_core::Result<Vec<_>>>()?;
        Instance::new(
            self.dims.into(),
            InstanceParams {
                p_x: self.params.p_x,
                p_v: self.params.p_v,
                gamma: self.params.gamma,
            },
            policies,
            episodes,
        )
    }
}

pub fn read_instance_doc(path: &Path) -> Result<InstanceDoc> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::json(path, e))
}

/// Reads and validates an instance file.
pub fn read_instance(path: &Path) -> Result<Instance> {
    Ok(read_instance_doc(path)?.to_instance()?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::json(path, e))?;
    w.write_all(b"\n")
        .and_then(|()| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_instance(path: &Path, instance: &Instance, actions: Option<Vec<usize>>) -> Result<()> {
    write_json(path, &InstanceDoc::from_instance(instance, actions))
}

/// Dense ratings matrix, one user per line, no header.
pub fn read_ratings(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| {
                    Error::format(path, format!("line {}: `{field}` is not a number", line + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// `user_index,context_index` lines. Every user in `0..num_users` must
/// appear exactly once.
pub fn read_clusters(path: &Path, num_users: usize) -> Result<Vec<usize>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut assignment: Vec<Option<usize>> = vec![None; num_users];
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = || Error::format(path, format!("line {}: expected `user,context`", lineno + 1));
        let (u, c) = line.split_once(',').ok_or_else(bad)?;
        let user: usize = u.trim().parse().map_err(|_| bad())?;
        let context: usize = c.trim().parse().map_err(|_| bad())?;
        let slot = assignment.get_mut(user).ok_or_else(|| {
            Error::format(
                path,
                format!("line {}: user {user} out of range (ratings have {num_users} rows)", lineno + 1),
            )
        })?;
        if slot.replace(context).is_some() {
            return Err(Error::format(
                path,
                format!("line {}: user {user} assigned twice", lineno + 1),
            ));
        }
    }
    assignment
        .into_iter()
        .enumerate()
        .map(|(u, c)| c.ok_or_else(|| Error::format(path, format!("user {u} has no cluster"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use edbandit_core::instance::generate_synthetic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn instance_round_trip_is_exact() {
        let dims = ProblemDims {
            num_contexts: 3,
            num_actions: 4,
            num_experts: 2,
            num_episodes: 2,
            horizon: 100,
        };
        let inst = generate_synthetic(dims, 0.1, 0.05, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.json");
        write_instance(&path, &inst, Some(vec![3, 1, 4, 0])).unwrap();
        let doc = read_instance_doc(&path).unwrap();
        assert_eq!(doc.actions, Some(vec![3, 1, 4, 0]));
        assert_eq!(doc.to_instance().unwrap(), inst);
    }

    #[test]
    fn clusters_must_cover_every_user_once() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        std::fs::write(&path, "0,0\n1,1\n").unwrap();
        assert_eq!(read_clusters(&path, 2).unwrap(), vec![0, 1]);
        assert!(read_clusters(&path, 3).is_err());
        std::fs::write(&path, "0,0\n0,1\n").unwrap();
        assert!(read_clusters(&path, 2).is_err());
    }

    #[test]
    fn ratings_parse_and_reject_text() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        std::fs::write(&path, "0.2, 0.4\n0.6,1\n").unwrap();
        assert_eq!(read_ratings(&path).unwrap(), vec![vec![0.2, 0.4], vec![0.6, 1.0]]);
        std::fs::write(&path, "a,b\n").unwrap();
        assert!(read_ratings(&path).is_err());
    }
}
