use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use edbandit::config::ExperimentConfig;
use edbandit::formats::{read_clusters, read_instance, read_ratings, write_instance, write_json};
use edbandit::harness::{Execution, Experiment};
use edbandit::report::{summarize, write_trace, AnalysisDoc};
use edbandit::{Error, Result};
use edbandit_core::agents::{default_clip_constant, estimated_tables, exact_tables};
use edbandit_core::analysis::{analysis_times, AnalysisParams, GapVariant};
use edbandit_core::bootstrap::{
    a_samples, delta_effective, n_samples, sandwich_width, xi_target, xi_variant_minus,
    xi_variant_plus,
};
use edbandit_core::divergence::divergence_upper;
use edbandit_core::instance::{generate_synthetic, ratings_skeleton};
use edbandit_core::{Instance, InstanceParams, ProblemDims};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// Episodic expert-bandit simulator.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance that satisfies the lower-bound assumptions.
    Generate(GenerateArgs),
    /// Run an experiment config and write trace and summary files.
    Run(RunArgs),
    /// Print the theory bootstrap sizes as JSON.
    BootstrapCalc(CalcArgs),
    /// Print analysis times of an instance as JSON.
    Diagnose(DiagnoseArgs),
    /// Build an instance from a completed ratings matrix and user clusters.
    Ingest(IngestArgs),
}

#[derive(Args)]
struct DimsArgs {
    #[arg(long)]
    contexts: usize,
    #[arg(long)]
    actions: usize,
    #[arg(long)]
    experts: usize,
    #[arg(long)]
    episodes: usize,
    #[arg(long)]
    horizon: u64,
}

impl From<&DimsArgs> for ProblemDims {
    fn from(d: &DimsArgs) -> Self {
        ProblemDims {
            num_contexts: d.contexts,
            num_actions: d.actions,
            num_experts: d.experts,
            num_episodes: d.episodes,
            horizon: d.horizon,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    dims: DimsArgs,
    #[arg(long)]
    p_x: f64,
    #[arg(long)]
    p_v: f64,
    /// Defaults to the smallest expert mean.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Overrides the config's trace path.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Overrides the config's summary path.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Overrides the config's diagnostics path.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    /// Run on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct CalcArgs {
    #[arg(long)]
    p_x: f64,
    #[arg(long)]
    p_v: f64,
    #[arg(long)]
    gamma: f64,
    #[command(flatten)]
    dims: DimsArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    EdUcb,
    DUcb,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Clip constant; defaults to 32 M / (gamma (1 - p_v)).
    #[arg(long)]
    c: Option<f64>,
    /// Global divergence bound; defaults to the worst case for the
    /// instance's p_x and p_v.
    #[arg(long)]
    m: Option<f64>,
    /// Accuracy attributed to the experts for the ED-UCB variant.
    #[arg(long, default_value_t = 0.0)]
    xi: f64,
    #[arg(long, value_enum, default_value_t = Variant::EdUcb)]
    variant: Variant,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long)]
    clusters: PathBuf,
    #[arg(long)]
    top_k: usize,
    #[arg(long)]
    experts: usize,
    #[arg(long)]
    episodes: usize,
    #[arg(long)]
    horizon: u64,
    #[arg(long)]
    p_x: f64,
    #[arg(long)]
    p_v: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(&a),
        Command::Run(a) => run(&a),
        Command::BootstrapCalc(a) => bootstrap_calc(&a),
        Command::Diagnose(a) => diagnose(&a),
        Command::Ingest(a) => ingest(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn apply_gamma(mut instance: Instance, gamma: Option<f64>) -> Result<Instance> {
    if let Some(g) = gamma {
        instance.params.gamma = g;
        instance.validate()?;
    }
    Ok(instance)
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let instance = generate_synthetic((&a.dims).into(), a.p_x, a.p_v, &mut rng)?;
    let instance = apply_gamma(instance, a.gamma)?;
    write_instance(&a.out, &instance, None)
}

fn print_json(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            let text = serde_json::to_string_pretty(value).expect("json values serialize");
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(Error::Io { path: "<stdout>".into(), source: e })
                }
                _ => Ok(()),
            }
        }
    }
}

fn run(a: &RunArgs) -> Result<()> {
    let mut config = ExperimentConfig::load(&a.config)?;
    if a.trace.is_some() {
        config.output.trace = a.trace.clone();
    }
    if a.summary.is_some() {
        config.output.summary = a.summary.clone();
    }
    if a.diagnostics.is_some() {
        config.output.diagnostics = a.diagnostics.clone();
    }
    if config.output.trace.is_none() && config.output.summary.is_none() {
        return Err(Error::Config("no trace or summary output path given".into()));
    }
    let experiment = Experiment::from_config(&config)?;
    let execution = if a.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let output = experiment.run(execution)?;
    if let Some(path) = &config.output.trace {
        write_trace(path, &output.records)?;
    }
    if let Some(path) = &config.output.summary {
        write_json(path, &summarize(&output.records, experiment.options.horizon))?;
    }
    if let Some(path) = &config.output.diagnostics {
        let bootstrap = experiment.bootstrap.as_ref().map(|b| {
            json!({
                "mode": b.mode,
                "theory": {"xi": b.theory.xi, "n": b.theory.n, "a": b.theory.a,
                           "delta_effective": b.theory.delta_effective},
                "effective": {"xi": b.effective.xi, "n": b.effective.n, "a": b.effective.a,
                              "delta_effective": b.effective.delta},
                "prior": b.prior,
            })
        });
        let doc = json!({
            "m_upper": experiment.m_upper,
            "default_c": experiment.default_c,
            "expert_means": experiment.gaps.means,
            "bootstrap": bootstrap,
            "divergence": output.divergences,
            "snapshots": output.snapshots,
        });
        write_json(path, &doc)?;
    }
    Ok(())
}

fn bootstrap_calc(a: &CalcArgs) -> Result<()> {
    let dims: ProblemDims = (&a.dims).into();
    dims.validate()?;
    InstanceParams {
        p_x: a.p_x,
        p_v: a.p_v,
        gamma: a.gamma,
    }
    .validate(&dims)?;
    let xi = xi_target(a.p_v, a.gamma)?;
    let n = n_samples(dims.num_actions, dims.horizon, xi)?;
    let big_a = a_samples(
        n,
        a.p_x,
        dims.num_contexts,
        dims.num_experts,
        dims.horizon,
        dims.num_episodes,
    );
    let value = json!({
        "xi": xi,
        "n": n,
        "a": big_a,
        "delta_effective": delta_effective(n, xi, dims.num_actions),
        "sandwich_width": sandwich_width(xi, a.p_v),
        "target_width": a.gamma * a.p_v / 2.0,
        "xi_closed_form_plus": xi_variant_plus(a.p_v, a.gamma),
        "xi_closed_form_minus": xi_variant_minus(a.p_v, a.gamma),
    });
    print_json(&value, None)
}

fn diagnose(a: &DiagnoseArgs) -> Result<()> {
    let instance = read_instance(&a.instance)?;
    let params = instance.params;
    let dims = instance.dims;
    let m = a
        .m
        .unwrap_or_else(|| divergence_upper(params.p_x, params.p_v, dims.num_contexts, dims.num_actions));
    let c = a.c.unwrap_or_else(|| default_clip_constant(m, params.gamma, params.p_v));
    let shared = match a.variant {
        Variant::EdUcb => Some(estimated_tables(&instance.policies, a.xi, params.p_v, params.p_x)?),
        Variant::DUcb => None,
    };
    let mut episodes = Vec::with_capacity(dims.num_episodes);
    for e in 0..dims.num_episodes {
        let means = instance.expert_means(e)?;
        let (max_clip_key, variant) = match &shared {
            Some(t) => (t.max_clip_key(), GapVariant::EdUcb),
            None => (
                exact_tables(&instance.policies, instance.episodes[e].context_dist())?.max_clip_key(),
                GapVariant::DUcb,
            ),
        };
        let p = AnalysisParams {
            c,
            m,
            gamma: params.gamma,
            p_v: params.p_v,
            max_clip_key,
        };
        episodes.push(AnalysisDoc::from(&analysis_times(e, &means, &p, variant)));
    }
    let value = json!({ "c": c, "m": m, "episodes": episodes });
    print_json(&value, a.out.as_deref())
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let ratings = read_ratings(&a.ratings)?;
    let clusters = read_clusters(&a.clusters, ratings.len())?;
    let skeleton = ratings_skeleton(&ratings, &clusters, a.top_k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let instance = Instance::from_skeleton(
        &skeleton,
        a.experts,
        a.episodes,
        a.horizon,
        a.p_x,
        a.p_v,
        &mut rng,
    )?;
    write_instance(&a.out, &instance, Some(skeleton.actions.clone()))
}
