use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use twohop_core::rng::{stream, Domain};
use twohop_core::taskgen::nl::{gen_nl_dataset, EntityPools, TEMPLATES};
use twohop_core::taskgen::{make_batch, GenConfig};
use twohop_core::threeparam::{simulate, CompareConfig, ThreeParamHyper, ThreeParamState};
use twohop_core::training::RunConfig;
use twohop_lab::analysis::{interp_run, InterpOptions};
use twohop_lab::io::{read_json, write_jsonl};
use twohop_lab::manifest::{create_output_dir, RunManifest};
use twohop_lab::report::{report_run, ReportOptions};
use twohop_lab::sim::{compare_files, write_trajectory_csv};
use twohop_lab::train::{train_run, TrainOptions};
use twohop_lab::{LabError, Result};

/// In-context two-hop reasoning laboratory.
#[derive(Parser)]
#[command(name = "twohop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a symbolic two-hop dataset as JSON lines.
    GenSymbolic(GenSymbolicArgs),
    /// Generate natural-language two-hop prompts as JSON lines.
    GenNl(GenNlArgs),
    /// Train a model into a fresh run directory.
    Train(TrainArgs),
    /// Analyze one checkpoint on a dataset.
    Interp(InterpArgs),
    /// Simulate the three-parameter model and write its trajectory as CSV.
    Threeparam(ThreeparamArgs),
    /// Compare a three-parameter trajectory with a transformer metrics stream.
    ThreeparamCompare(CompareArgs),
    /// Consolidated JSON report for a finished run.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenSymbolicArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 256)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    chains: usize,
    #[arg(long, default_value_t = 24)]
    entities: usize,
    /// Output directory (receives dataset.jsonl and manifest.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenNlArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Template id; repeat to mix templates. Defaults to all templates.
    #[arg(long = "template")]
    templates: Vec<String>,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Output directory (receives prompts.jsonl and manifest.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration (JSON); defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Checkpoint to continue from.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Run directory; must not exist or be empty.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InterpArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Symbolic dataset (JSON lines) to analyze.
    #[arg(long)]
    dataset: PathBuf,
    /// Metrics stream of the run, for the transition report.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Number of examples exported as individual role-labeled heatmaps.
    #[arg(long, default_value_t = 4)]
    example_maps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ThreeparamArgs {
    #[arg(long, default_value_t = 30.0)]
    xi: f64,
    #[arg(long, default_value_t = 10.0)]
    n: f64,
    #[arg(long, default_value_t = 65.0)]
    v: f64,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 3000)]
    steps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    metrics: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory produced by `train`.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Checkpoint step analyzed as the slow phase.
    #[arg(long, default_value_t = 800)]
    slow_step: usize,
    #[arg(long, default_value_t = 256)]
    analysis_examples: usize,
}

fn gen_symbolic(a: GenSymbolicArgs) -> Result<()> {
    let cfg = GenConfig {
        seed: a.seed,
        chains_per_context: a.chains,
        entity_count: a.entities,
        batch_size: a.n,
    };
    cfg.validate()?;
    let examples = make_batch(&cfg, Domain::Corpus, 0, a.n)?;
    create_output_dir(&a.out)?;
    let mut manifest = RunManifest::new("gen-symbolic", &cfg, a.seed);
    manifest.record("dataset.jsonl");
    manifest.save(&a.out)?;
    write_jsonl(&a.out.join("dataset.jsonl"), &examples)?;
    manifest.finish(&a.out)
}

fn gen_nl(a: GenNlArgs) -> Result<()> {
    let ids: Vec<&str> = if a.templates.is_empty() {
        TEMPLATES.iter().map(|t| t.id).collect()
    } else {
        a.templates.iter().map(String::as_str).collect()
    };
    let mut rng = stream(a.seed, Domain::NaturalLanguage, 0, 0);
    let prompts = gen_nl_dataset(&ids, &EntityPools::default(), a.k, a.n, &mut rng)?;
    create_output_dir(&a.out)?;
    let mut manifest = RunManifest::new("gen-nl", &(&ids, a.k, a.n), a.seed);
    manifest.record("prompts.jsonl");
    manifest.save(&a.out)?;
    write_jsonl(&a.out.join("prompts.jsonl"), &prompts)?;
    manifest.finish(&a.out)
}

fn train(a: TrainArgs) -> Result<()> {
    let mut config: RunConfig = match &a.config {
        Some(path) => read_json(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(steps) = a.steps {
        config.optimizer.steps = steps;
    }
    if let Some(b) = a.batch_size {
        config.optimizer.batch_size = b;
    }
    let outcome = train_run(&TrainOptions {
        config,
        out: a.out,
        resume: a.resume,
    })?;
    if let Some(last) = outcome.metrics.last() {
        println!(
            "step {}: train loss {:.4}, eval loss {:.4}, P(target end) {:.3}",
            last.step, last.train_loss, last.eval_loss, last.p_target_end
        );
    }
    Ok(())
}

fn interp(a: InterpArgs) -> Result<()> {
    let s = interp_run(&InterpOptions {
        checkpoint: a.checkpoint,
        dataset: a.dataset,
        out: a.out,
        metrics: a.metrics,
        example_maps: a.example_maps,
    })?;
    println!(
        "step {}: P(target end) {:.3}, mean P(non-target end) {:.3}",
        s.step, s.category_probs.p_target_end, s.category_probs.p_nontarget_end
    );
    Ok(())
}

fn threeparam(a: ThreeparamArgs) -> Result<()> {
    let hyper = ThreeParamHyper {
        xi: a.xi,
        n: a.n,
        vocab: a.v,
        lr: a.lr,
        steps: a.steps,
    };
    let traj = simulate(ThreeParamState::default(), &hyper)?;
    write_trajectory_csv(&a.out, &traj)?;
    let last = traj.points.last().expect("at least one point");
    println!("final loss {:.6} after {} steps", last.loss, last.step);
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let r = compare_files(&a.trajectory, &a.metrics, &a.out, &CompareConfig::default())?;
    println!(
        "hypothesis 1: {}, hypothesis 2: {}, synchronized: {}",
        verdict(r.hypothesis1),
        verdict(r.hypothesis2),
        r.synchrony.synchronized
    );
    Ok(())
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "validated"
    } else {
        "not validated"
    }
}

fn report(a: ReportArgs) -> Result<()> {
    let r = report_run(&ReportOptions {
        run_dir: a.run,
        out: a.out,
        slow_step: a.slow_step,
        analysis_examples: a.analysis_examples,
    })?;
    for c in &r.checks {
        println!("[{}] {}", if c.passed { "pass" } else { "FAIL" }, c.name);
    }
    Ok(())
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::GenSymbolic(a) => gen_symbolic(a),
        Command::GenNl(a) => gen_nl(a),
        Command::Train(a) => train(a),
        Command::Interp(a) => interp(a),
        Command::Threeparam(a) => threeparam(a),
        Command::ThreeparamCompare(a) => compare(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ LabError::Usage(_)) | Err(e @ LabError::Core(twohop_core::Error::Config { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
