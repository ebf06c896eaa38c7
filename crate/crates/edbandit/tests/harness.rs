use edbandit::config::{BootstrapMode, BootstrapSpec, ExperimentConfig, OverrideSpec};
use edbandit::harness::{Execution, Experiment, PreparedAgent};
use edbandit::report::{read_trace, summarize, write_trace};
use edbandit_core::instance::generate_synthetic;
use edbandit_core::{AgentConfig, AgentKind, Instance, ProblemDims};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_instance(seed: u64) -> Instance {
    let dims = ProblemDims {
        num_contexts: 3,
        num_actions: 3,
        num_experts: 3,
        num_episodes: 2,
        horizon: 400,
    };
    generate_synthetic(dims, 0.1, 0.1, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn all_agents() -> Vec<PreparedAgent> {
    [
        ("ed", AgentConfig::new(AgentKind::EdUcb).with_c(0.25).with_xi(0.001)),
        ("d", AgentConfig::new(AgentKind::DUcb).with_c(0.05)),
        ("u", AgentConfig::new(AgentKind::Ucb1)),
        ("k", AgentConfig::new(AgentKind::KlUcb)),
    ]
    .into_iter()
    .map(|(l, c)| PreparedAgent { label: l.into(), config: c })
    .collect()
}

fn offline(n: u64) -> BootstrapSpec {
    BootstrapSpec {
        mode: BootstrapMode::Offline,
        practical: Some(OverrideSpec { xi: Some(0.001), n: Some(n), a: None }),
        prior: None,
    }
}

#[test]
fn scheduling_does_not_change_results() {
    let mut exp =
        Experiment::new(small_instance(1), all_agents(), 4, 99, None, None, 50, Some(&offline(20))).unwrap();
    exp.record_snapshots = true;
    let seq = exp.run(Execution::Sequential).unwrap();
    let par = exp.run(Execution::Parallel).unwrap();
    assert_eq!(seq.records, par.records);
    assert_eq!(seq.snapshots, par.snapshots);
    assert_eq!(seq.divergences, par.divergences);
    assert_eq!(seq.records.len(), 4 * 4 * 2 * 8);
}

#[test]
fn traces_round_trip_and_summaries_recompute() {
    let exp = Experiment::new(small_instance(2), all_agents(), 3, 5, None, None, 100, Some(&offline(10))).unwrap();
    let out = exp.run(Execution::Parallel).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_trace(&path, &out.records).unwrap();
    let back = read_trace(&path).unwrap();
    assert_eq!(back, out.records);
    assert_eq!(summarize(&back, 400), summarize(&out.records, 400));
    let s = summarize(&back, 400);
    assert_eq!(s.algorithms.len(), 4);
    for a in &s.algorithms {
        assert_eq!(a.final_step.step, 800);
        assert_eq!(a.final_step.runs, 3);
        assert_eq!(a.episode_ends.len(), 2);
    }
}

#[test]
fn regret_is_nondecreasing_and_starts_after_step_zero() {
    let exp = Experiment::new(small_instance(3), all_agents(), 2, 6, None, None, 10, Some(&offline(10))).unwrap();
    let out = exp.run(Execution::Parallel).unwrap();
    assert!(out.records.iter().all(|r| r.step >= 1 && r.cum_regret >= 0.0));
    for pair in out.records.windows(2) {
        if pair[0].algorithm == pair[1].algorithm && pair[0].run == pair[1].run {
            assert!(pair[1].step > pair[0].step);
            assert!(pair[1].cum_regret >= pair[0].cum_regret);
        }
    }
}

#[test]
fn agents_restart_every_episode() {
    let mut exp = Experiment::new(small_instance(4), all_agents(), 1, 7, None, None, 100, Some(&offline(10))).unwrap();
    exp.record_snapshots = true;
    let out = exp.run(Execution::Sequential).unwrap();
    assert!(!out.snapshots.is_empty());
    for s in &out.snapshots {
        assert_eq!(s.agent_step, s.step - s.episode as u64 * 400);
    }
}

#[test]
fn single_expert_has_zero_regret() {
    let dims = ProblemDims {
        num_contexts: 2,
        num_actions: 2,
        num_experts: 1,
        num_episodes: 2,
        horizon: 100,
    };
    let inst = generate_synthetic(dims, 0.2, 0.2, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let exp = Experiment::new(inst, all_agents(), 2, 1, None, None, 50, Some(&offline(5))).unwrap();
    let out = exp.run(Execution::Parallel).unwrap();
    assert!(out.records.iter().all(|r| r.cum_regret == 0.0));
}

#[test]
fn online_bootstrap_charges_only_the_bootstrapped_agent() {
    let inst = small_instance(5);
    let mut spec = offline(10);
    spec.mode = BootstrapMode::Online;
    let exp = Experiment::new(inst, all_agents(), 1, 3, None, None, 400, Some(&spec)).unwrap();
    let charge = {
        let eff = &exp.bootstrap.as_ref().unwrap().effective;
        let best = exp.gaps.means[0].iter().copied().fold(f64::MIN, f64::max);
        eff.a as f64 * 3.0 * best
    };
    let out = exp.run(Execution::Sequential).unwrap();
    let first = |alg: &str| out.records.iter().find(|r| r.algorithm == alg).unwrap().cum_regret;
    assert!(first("ed") >= charge);
    assert!(first("u") < charge);
}

#[test]
fn theory_scale_bootstrap_is_refused_without_override() {
    let inst = small_instance(6);
    let spec = BootstrapSpec { mode: BootstrapMode::Offline, practical: None, prior: None };
    let err = Experiment::new(inst, all_agents(), 1, 0, None, None, 100, Some(&spec)).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("override"));
}

#[test]
fn config_documents_drive_experiments() {
    let text = r#"{
        "instance": {"generate": {"dims": {"num_contexts": 2, "num_actions": 3,
            "num_experts": 2, "num_episodes": 1, "horizon": 200},
            "p_x": 0.2, "p_v": 0.1, "seed": 3}},
        "agents": [{"kind": "ucb1"}, {"kind": "d_ucb", "c": 0.05}],
        "num_runs": 2, "base_seed": 1, "checkpoint_every": 50
    }"#;
    let cfg = ExperimentConfig::from_json_str(text).unwrap();
    let out = Experiment::from_config(&cfg).unwrap().run(Execution::Parallel).unwrap();
    assert_eq!(out.records.len(), 2 * 2 * 4);
}
