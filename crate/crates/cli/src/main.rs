//! `marl`: train, evaluate, plot, verify and sweep multi-agent runs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use marl_core::algos::AlgoId;
use marl_core::harness::sweep::{grid, run_sweep};
use marl_core::harness::{
    emit_plot, evaluate, load_config, parse_entries, run_suite, train, Checkpoint, Suite, VerifyOptions,
};
use marl_core::ScenarioId;

// glibc malloc fragments badly when long-lived replay entries interleave with
// per-update temporaries; a 100k-step run grew past 5 GB.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "marl", version, about = "Multi-agent actor-critic experiments on a particle world")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run and write metrics.csv, config.resolved, checkpoint.bin and curves.svg.
    Train(RunFlags),
    /// Noise-free evaluation of a checkpoint.
    Eval(EvalArgs),
    /// Render learning curves from metrics files.
    Plot(PlotArgs),
    /// Run self-check suites and print a JSON report.
    Verify(VerifyArgs),
    /// Train a grid of runs concurrently, one directory per run.
    Sweep(SweepArgs),
}

/// Flags that map onto configuration keys. They override `--config`.
#[derive(Args, Clone, Default)]
struct RunFlags {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    algo: Option<String>,
    /// full or desk.
    #[arg(long)]
    scale: Option<String>,
    /// vdn, monotonic or nonmonotonic.
    #[arg(long)]
    mixer: Option<String>,
    /// own-critics or simulate-with-own.
    #[arg(long)]
    sharing: Option<String>,
    #[arg(long)]
    staged_watershed: Option<String>,
    #[arg(long)]
    time_steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Any other configuration key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunFlags {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        put("scenario", self.scenario.clone());
        put("algo", self.algo.clone());
        put("scale", self.scale.clone());
        put("mixer", self.mixer.clone());
        put("sharing", self.sharing.clone());
        put("staged-watershed", self.staged_watershed.clone());
        put("time-steps", self.time_steps.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("eval-every", self.eval_every.map(|v| v.to_string()));
        put("eval-episodes", self.eval_episodes.map(|v| v.to_string()));
        put("Batch-size", self.batch_size.map(|v| v.to_string()));
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    fn file_entries(&self) -> Result<Vec<(String, String)>> {
        match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Ok(parse_entries(&text)?)
            }
            None => Ok(Vec::new()),
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Defaults to the scenario the checkpoint was trained on.
    #[arg(long)]
    scenario: Option<String>,
    /// Defaults to the run's eval-episodes.
    #[arg(long)]
    eval_episodes: Option<usize>,
    /// Defaults to the run's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(required = true)]
    metrics: Vec<PathBuf>,
    #[arg(long, default_value = "curves.svg")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// gradients, td, mixers, collapse, buffers, rewards, dimensions, staged,
    /// determinism or all.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Added to every analytic gradient; non-zero values must fail.
    #[arg(long, default_value_t = 0.0)]
    perturb: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunFlags,
    /// Comma-separated algorithms; defaults to --algo or the configured one.
    #[arg(long, value_delimiter = ',')]
    algos: Vec<String>,
    /// Comma-separated seeds; defaults to --seed or the configured one.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Comma-separated scenarios; defaults to --scenario or the configured one.
    #[arg(long, value_delimiter = ',')]
    scenarios: Vec<String>,
    /// Concurrent runs; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(flags) => cmd_train(&flags),
        Command::Eval(args) => cmd_eval(&args),
        Command::Plot(args) => cmd_plot(&args),
        Command::Verify(args) => cmd_verify(&args),
        Command::Sweep(args) => cmd_sweep(&args),
    }
}

fn cmd_train(flags: &RunFlags) -> Result<ExitCode> {
    let mut cfg = load_config(flags.config.as_deref(), &flags.overrides()?)?;
    if cfg.out.is_none() {
        cfg.out = Some(PathBuf::from(format!("runs/{}_{}_seed{}", cfg.scenario, cfg.algo, cfg.seed)));
    }
    let summary = train(&cfg)?;
    let out = summary.out.as_deref().unwrap_or(Path::new("."));
    println!("wrote {}", out.display());
    println!("updates {} episodes {}", summary.updates, summary.episodes);
    if let Some(last) = summary.rows.last() {
        println!("timestep {} mean_return {:.4}", last.timestep, last.mean_return);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: &EvalArgs) -> Result<ExitCode> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let cfg = ck.run_config()?;
    let scenario: ScenarioId = match &args.scenario {
        Some(s) => s.parse()?,
        None => cfg.scenario,
    };
    let episodes = args.eval_episodes.unwrap_or(cfg.eval_episodes);
    let result = evaluate(&ck, scenario, episodes, args.seed.unwrap_or(cfg.seed))?;
    for (a, r) in result.per_agent.iter().enumerate() {
        println!("agent_{a}_return {r:.6}");
    }
    println!("mean_return {:.6}", result.mean);
    Ok(ExitCode::SUCCESS)
}

fn cmd_plot(args: &PlotArgs) -> Result<ExitCode> {
    let paths: Vec<&Path> = args.metrics.iter().map(PathBuf::as_path).collect();
    emit_plot(&paths, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: &VerifyArgs) -> Result<ExitCode> {
    let suite: Suite = args.suite.parse()?;
    let opts = VerifyOptions {
        perturb: args.perturb,
        seed: args.seed,
        ..VerifyOptions::default()
    };
    let report = run_suite(suite, &opts)?;
    for r in &report.results {
        eprintln!(
            "{} {} measured {:e} threshold {:e} ({})",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.measured,
            r.threshold,
            r.detail
        );
    }
    let json = report.to_json();
    if let Some(p) = &args.out {
        std::fs::write(p, &json).with_context(|| format!("writing {}", p.display()))?;
    }
    println!("{json}");
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_sweep(args: &SweepArgs) -> Result<ExitCode> {
    let mut base = args.run.file_entries()?;
    base.extend(args.run.overrides()?);
    let cfg = marl_core::harness::RunConfig::resolve(&base, &[])?;
    let root = cfg.out.clone().context("sweep needs --out for its root directory")?;

    let scenarios: Vec<ScenarioId> = if args.scenarios.is_empty() {
        vec![cfg.scenario]
    } else {
        args.scenarios.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
    };
    let algos: Vec<AlgoId> = if args.algos.is_empty() {
        vec![cfg.algo]
    } else {
        args.algos.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
    };
    let seeds = if args.seeds.is_empty() { vec![cfg.seed] } else { args.seeds.clone() };
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        bail!("--jobs must be positive");
    }

    let points = grid(&root, &scenarios, &algos, &seeds);
    let results = run_sweep(&base, &points, jobs);
    let mut failed = 0;
    for (p, r) in points.iter().zip(&results) {
        match r {
            Ok(s) => {
                let last = s.rows.last().map_or(f64::NAN, |r| r.mean_return);
                println!("ok {} mean_return {last:.4}", p.out.display());
            }
            Err(e) => {
                failed += 1;
                println!("failed {}: {e}", p.out.display());
            }
        }
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
