//! `sail`: generate demonstrations, train, sweep seeds, evaluate and report.
//!
//! Exit codes: 0 success, 2 bad command line, 3 invalid configuration or
//! input, 4 I/O failure, 5 numerical divergence, 1 anything else.
//!
//! Relative output paths are resolved against `$SAIL_OUTPUT_ROOT` when set.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sail_core::envs::{write_demonstrations, EnvId};
use sail_core::experiment::{
    aggregate, apply_override, evaluate_checkpoint, execute_run, markdown_report, parse_toml_value, run_sweep,
    scripted_demonstrations, write_aggregate_csv, DemoSource, ExperimentManifest, RunSummary, TomlValue,
};
use sail_core::trainer::{Algo, TrainConfig};
use sail_core::{Error, Result};

const OUTPUT_ROOT_VAR: &str = "SAIL_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "sail", version, about = "Self-adaptive imitation learning from sparse episodic rewards")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out the scripted teacher and write a JSON-lines demonstration file.
    GenDemos(GenDemos),
    /// Train one variant for one seed.
    Run(RunArgs),
    /// Run every entry of an experiment manifest and aggregate the results.
    Sweep(SweepArgs),
    /// Evaluate a saved checkpoint with the deterministic policy.
    Eval(EvalArgs),
    /// Aggregate run summaries in a directory into a Markdown table.
    Report(ReportArgs),
    /// Print the effective training configuration.
    PrintConfig(ConfigArgs),
}

#[derive(Args)]
struct GenDemos {
    #[arg(long, default_value = "point-mass")]
    env: EnvId,
    /// Teacher quality in [0, 1]; 1 is the noiseless scripted controller.
    #[arg(long, short = 'q', default_value_t = 0.5)]
    quality: f64,
    #[arg(long, short = 'n', default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short = 'o')]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML config; omitted keys take their defaults.
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<Algo>,
    #[arg(long)]
    env: Option<EnvId>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    total_steps: Option<u64>,
    /// Extra `section.key=value` overrides, value in TOML syntax.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Demonstration file; without one the scripted teacher is used.
    #[arg(long)]
    demos: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    demo_quality: f64,
    #[arg(long, default_value_t = 1)]
    demo_count: usize,
    #[arg(long, default_value_t = 0)]
    demo_seed: u64,
    #[arg(long, short = 'o', default_value = "runs")]
    out_dir: PathBuf,
    /// Print the effective config and exit without training.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct SweepArgs {
    manifest: PathBuf,
    /// Overrides the manifest's parallelism cap.
    #[arg(long, short = 'j')]
    parallelism: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    checkpoint: PathBuf,
    #[arg(long, default_value = "point-mass")]
    env: EnvId,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding run summaries (`*.json`).
    dir: PathBuf,
    /// Also write the Markdown here.
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
}

fn output_path(p: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if p.is_relative() => Path::new(&root).join(p),
        _ => p.to_path_buf(),
    }
}

fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from("."), PathBuf::from)
}

fn parse_override(s: &str) -> Result<(String, TomlValue)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override '{s}' must look like section.key=value")))?;
    Ok((key.trim().to_string(), parse_toml_value(raw.trim())?))
}

fn effective_config(args: &ConfigArgs) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(a) = args.algo {
        cfg.run.algo = a;
    }
    if let Some(e) = args.env {
        cfg.run.env = e;
    }
    if let Some(s) = args.seed {
        cfg.run.seed = s;
    }
    if let Some(t) = args.total_steps {
        cfg.run.total_steps = t;
    }
    for o in &args.overrides {
        let (k, v) = parse_override(o)?;
        cfg = apply_override(&cfg, &k, &v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn gen_demos(args: &GenDemos) -> Result<()> {
    let demos = scripted_demonstrations(args.env, args.quality, args.count, args.seed)?;
    let out = output_path(&args.out);
    write_demonstrations(&out, &demos.trajectories, Some(args.quality))?;
    println!("wrote {} trajectories to {}", demos.trajectories.len(), out.display());
    for (i, t) in demos.trajectories.iter().enumerate() {
        println!("  trajectory {i}: return {:.4}, {} steps", t.episodic_return, t.len());
    }
    println!("teacher mean return: {:.4}", demos.mean_return());
    println!("random policy mean return: {:.4}", demos.random_mean());
    println!(
        "teacher beats random policy: {}",
        if demos.assumption_holds { "yes" } else { "NO" }
    );
    Ok(())
}

fn run(args: &RunArgs) -> Result<()> {
    let cfg = effective_config(&args.config)?;
    if args.print_config {
        print!("{}", cfg.to_toml_string());
        return Ok(());
    }
    let source = if !cfg.run.algo.uses_demonstrations() {
        DemoSource::None
    } else if let Some(p) = &args.demos {
        DemoSource::File(p.clone())
    } else {
        DemoSource::Scripted {
            quality: args.demo_quality,
            count: args.demo_count,
            seed: args.demo_seed,
        }
    };
    let demos = source.load(cfg.run.env)?;
    let dir = output_path(&args.out_dir);
    let stem = format!("{}-{}-seed{}", cfg.run.algo, cfg.run.env, cfg.run.seed);
    let csv = dir.join(format!("{stem}.csv"));
    let summary_path = dir.join(format!("{stem}.json"));
    let result = execute_run(cfg.run.algo.as_str(), &cfg, &demos, &csv, &summary_path);
    println!("run log: {}", csv.display());
    println!("summary: {}", summary_path.display());
    let summary = result?;
    print_summary(&summary);
    Ok(())
}

fn print_summary(s: &RunSummary) {
    let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "{} seed {}: final eval {} ± {}, teacher {}, promotions {}, {} env steps, {:.1} s",
        s.label,
        s.seed,
        fmt(s.final_eval_mean),
        fmt(s.final_eval_std),
        fmt(s.teacher_mean),
        s.promotions,
        s.env_steps,
        s.wall_seconds
    );
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let manifest = ExperimentManifest::load(&args.manifest)?;
    let specs = manifest.resolve(&output_root())?;
    let parallelism = args.parallelism.unwrap_or(manifest.parallelism);
    if parallelism == 0 {
        return Err(Error::config("parallelism must be at least 1"));
    }
    log::info!("{} runs, up to {parallelism} at a time", specs.len());
    let summaries = run_sweep(&specs, parallelism);
    for s in &summaries {
        print_summary(s);
    }
    let rows = aggregate(&summaries);
    let dir = output_root().join(&manifest.output_dir);
    let agg = dir.join("aggregate.csv");
    write_aggregate_csv(&rows, &agg)?;
    println!("aggregate: {}", agg.display());
    print!("{}", markdown_report(&rows, &summaries));
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let (mean, std) = evaluate_checkpoint(&args.checkpoint, args.env, args.episodes, args.seed)?;
    println!("eval over {} episodes: mean {mean:.4}, std {std:.4}", args.episodes);
    Ok(())
}

fn report(args: &ReportArgs) -> Result<()> {
    let dir = &args.dir;
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let summaries = paths
        .iter()
        .map(|p| RunSummary::read(p))
        .collect::<Result<Vec<_>>>()?;
    if summaries.is_empty() {
        return Err(Error::usage(format!("no run summaries in {}", dir.display())));
    }
    let text = markdown_report(&aggregate(&summaries), &summaries);
    if let Some(out) = &args.out {
        let out = output_path(out);
        std::fs::write(&out, &text).map_err(|e| Error::io(&out, e))?;
    }
    print!("{text}");
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Usage(_) | Error::Parse { .. } => 3,
        Error::Io { .. } => 4,
        Error::Numerical(_) => 5,
        Error::Internal(_) => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenDemos(a) => gen_demos(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Eval(a) => eval(a),
        Command::Report(a) => report(a),
        Command::PrintConfig(a) => effective_config(a).map(|cfg| print!("{}", cfg.to_toml_string())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
