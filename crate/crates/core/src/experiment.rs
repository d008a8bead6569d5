//! Experiment manifests, single-run execution with on-disk outputs, and
//! aggregation of many runs into summary tables.
//!
//! A manifest is a TOML file:
//!
//! ```toml
//! output_dir = "runs"
//! parallelism = 2
//! base_config = "base.toml"     # optional
//!
//! [[runs]]
//! algo = "sail"
//! seeds = [1, 2, 3, 4, 5]
//! demo_count = 1
//!
//! [[runs]]
//! algo = "sail-no-adapt"
//! seeds = [1, 2, 3, 4, 5]
//! overrides = { "run.total_steps" = 50000 }
//! ```
//!
//! Each entry expands to one run per seed. Demonstrations are read from
//! `demos` when given, otherwise generated from the scripted teacher with
//! `demo_quality`, `demo_count` and `demo_seed`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::envs::{
    generate_demonstrations, read_demonstrations, Demonstrations, write_demonstrations, EnvId, PointMassParams, ScriptedTeacher, SimRng,
    Trajectory,
};
use crate::error::{Error, Result};
use crate::trainer::{train, Algo, RunLogWriter, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub algo: Algo,
    #[serde(default = "default_env")]
    pub env: EnvId,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Distinguishes entries that share an algorithm, e.g. different demo counts.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub demos: Option<PathBuf>,
    #[serde(default = "default_quality")]
    pub demo_quality: f64,
    #[serde(default = "default_demo_count")]
    pub demo_count: usize,
    #[serde(default)]
    pub demo_seed: u64,
    /// Dotted `section.key` config overrides.
    #[serde(default)]
    pub overrides: BTreeMap<String, toml::Value>,
}

fn default_env() -> EnvId {
    EnvId::PointMass
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

fn default_quality() -> f64 {
    0.5
}

fn default_demo_count() -> usize {
    1
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub output_dir: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub base_config: Option<PathBuf>,
    pub runs: Vec<ManifestEntry>,
}

/// One fully resolved run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub label: String,
    pub config: TrainConfig,
    pub demos: DemoSource,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DemoSource {
    File(PathBuf),
    Scripted { quality: f64, count: usize, seed: u64 },
    None,
}

impl DemoSource {
    pub fn load(&self, env: EnvId) -> Result<Vec<Trajectory>> {
        match self {
            DemoSource::None => Ok(Vec::new()),
            DemoSource::File(path) => {
                let spec = env.make().spec().clone();
                read_demonstrations(path, Some(&spec))
            }
            DemoSource::Scripted { quality, count, seed } => {
                Ok(scripted_demonstrations(env, *quality, *count, *seed)?.trajectories)
            }
        }
    }
}

/// Scripted-teacher rollouts for `env`, screened against the random policy.
pub fn scripted_demonstrations(env: EnvId, quality: f64, count: usize, seed: u64) -> Result<Demonstrations> {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut e = env.make();
    let teacher = match env {
        EnvId::PointMass => ScriptedTeacher::point_mass(&PointMassParams::default(), quality)?,
        EnvId::Chain => ScriptedTeacher::chain(quality)?,
    };
    generate_demonstrations(e.as_mut(), &teacher, count, &mut rng)
}

pub use toml::Value as TomlValue;

/// Parses the right-hand side of a `key = value` override. Bare words that
/// are not valid TOML are taken as strings, so `run.algo=sail` works.
pub fn parse_toml_value(raw: &str) -> Result<toml::Value> {
    let doc: toml::Table = match format!("v = {raw}").parse() {
        Ok(t) => t,
        Err(_) => return Ok(toml::Value::String(raw.to_string())),
    };
    doc.get("v").cloned().ok_or_else(|| Error::config(format!("cannot parse override value '{raw}'")))
}

/// Sets `section.key` in a serialised config.
pub fn apply_override(cfg: &TrainConfig, key: &str, value: &toml::Value) -> Result<TrainConfig> {
    let (section, field) = key
        .split_once('.')
        .ok_or_else(|| Error::config(format!("override key '{key}' must look like section.key")))?;
    let mut doc = toml::Value::try_from(cfg).map_err(|e| Error::config(e.to_string()))?;
    let table = doc
        .get_mut(section)
        .and_then(|s| s.as_table_mut())
        .ok_or_else(|| Error::config(format!("unknown config section '{section}'")))?;
    table.insert(field.to_string(), value.clone());
    let out: TrainConfig = doc
        .try_into()
        .map_err(|e: toml::de::Error| Error::config(format!("override {key}: {e}")))?;
    out.validate()?;
    Ok(out)
}

impl ExperimentManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: ExperimentManifest =
            toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        // Relative paths inside a manifest are relative to the manifest.
        let root = path.parent().unwrap_or(Path::new("."));
        if let Some(b) = &mut m.base_config {
            if b.is_relative() {
                *b = root.join(&*b);
            }
        }
        for r in &mut m.runs {
            if let Some(d) = &mut r.demos {
                if d.is_relative() {
                    *d = root.join(&*d);
                }
            }
        }
        Ok(m)
    }

    /// Expands entries into runs, checking configs and output paths.
    pub fn resolve(&self, output_root: &Path) -> Result<Vec<RunSpec>> {
        if self.parallelism == 0 {
            return Err(Error::config("parallelism must be at least 1"));
        }
        let base = match &self.base_config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        let out_dir = output_root.join(&self.output_dir);
        let mut specs = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for entry in &self.runs {
            if entry.seeds.is_empty() {
                return Err(Error::config(format!("entry for {} lists no seeds", entry.algo)));
            }
            let label = entry.label.clone().unwrap_or_else(|| entry.algo.to_string());
            for &seed in &entry.seeds {
                let mut cfg = base.clone();
                cfg.run.algo = entry.algo;
                cfg.run.env = entry.env;
                cfg.run.seed = seed;
                for (k, v) in &entry.overrides {
                    cfg = apply_override(&cfg, k, v)?;
                }
                cfg.validate()?;
                let stem = format!("{label}-{}-seed{seed}", entry.env);
                let csv_path = out_dir.join(format!("{stem}.csv"));
                if !seen.insert(csv_path.clone()) {
                    return Err(Error::config(format!(
                        "two runs would write {}; give entries distinct labels",
                        csv_path.display()
                    )));
                }
                let demos = if !entry.algo.uses_demonstrations() {
                    DemoSource::None
                } else if let Some(p) = &entry.demos {
                    DemoSource::File(p.clone())
                } else {
                    DemoSource::Scripted {
                        quality: entry.demo_quality,
                        count: entry.demo_count,
                        seed: entry.demo_seed,
                    }
                };
                specs.push(RunSpec {
                    label: label.clone(),
                    config: cfg,
                    demos,
                    summary_path: out_dir.join(format!("{stem}.json")),
                    csv_path,
                });
            }
        }
        Ok(specs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub algo: Algo,
    pub env: EnvId,
    pub seed: u64,
    /// `ok`, or the error that ended the run.
    pub status: String,
    pub final_eval_mean: Option<f64>,
    pub final_eval_std: Option<f64>,
    pub promotions: u64,
    pub env_steps: u64,
    pub teacher_mean: Option<f64>,
    pub steps_to_teacher: Option<u64>,
    pub wall_seconds: f64,
}

impl RunSummary {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("summary serialises");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Trains one configuration, streaming records into `csv_path` and
/// writing a JSON summary next to it. A successful run also leaves its
/// networks in `csv_path` with the extension `ckpt`. Errors raised before training (bad
/// config, unreadable demos) are returned directly; errors during training
/// are recorded in the summary and also returned.
pub fn execute_run(label: &str, cfg: &TrainConfig, demos: &[Trajectory], csv_path: &Path, summary_path: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    if let Some(dir) = csv_path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let teacher_mean = (!demos.is_empty())
        .then(|| demos.iter().map(|t| t.episodic_return).sum::<f64>() / demos.len() as f64);
    let start = Instant::now();
    let mut writer = RunLogWriter::create(csv_path)?;
    let mut last = None;
    let result = train(cfg, demos, &mut |rec| {
        last = Some(rec.clone());
        writer.append(rec)
    });
    let mut summary = RunSummary {
        label: label.to_string(),
        algo: cfg.run.algo,
        env: cfg.run.env,
        seed: cfg.run.seed,
        status: "ok".into(),
        final_eval_mean: None,
        final_eval_std: None,
        promotions: last.as_ref().map_or(0, |r| r.promotions_count),
        env_steps: last.as_ref().map_or(0, |r| r.env_steps),
        teacher_mean,
        steps_to_teacher: None,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    let outcome = match result {
        Ok(out) => {
            let rec = out.log.last().expect("a run logs at least one record");
            summary.final_eval_mean = Some(rec.eval_mean_return);
            summary.final_eval_std = Some(rec.eval_std);
            summary.env_steps = out.env_steps;
            summary.promotions = out.promotions;
            summary.steps_to_teacher = teacher_mean.and_then(|m| out.log.steps_to_reach(m));
            out.agent.save(&csv_path.with_extension("ckpt"))?;
            Ok(summary.clone())
        }
        Err(e) => {
            summary.status = e.to_string();
            Err(e)
        }
    };
    summary.write(summary_path)?;
    outcome
}

/// Runs every spec with at most `parallelism` concurrent runs. Failures
/// are kept as summaries with a non-`ok` status; the sweep continues.
pub fn run_sweep(specs: &[RunSpec], parallelism: usize) -> Vec<RunSummary> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<RunSummary>>> = Mutex::new(vec![None; specs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..parallelism.max(1).min(specs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(spec) = specs.get(i) else { break };
                let summary = run_spec(spec);
                results.lock().expect("no panics while holding the lock")[i] = Some(summary);
            });
        }
    });
    results
        .into_inner()
        .expect("no panics while holding the lock")
        .into_iter()
        .map(|s| s.expect("every run produced a summary"))
        .collect()
}

fn run_spec(spec: &RunSpec) -> RunSummary {
    let cfg = &spec.config;
    let failed = |e: Error| RunSummary {
        label: spec.label.clone(),
        algo: cfg.run.algo,
        env: cfg.run.env,
        seed: cfg.run.seed,
        status: e.to_string(),
        final_eval_mean: None,
        final_eval_std: None,
        promotions: 0,
        env_steps: 0,
        teacher_mean: None,
        steps_to_teacher: None,
        wall_seconds: 0.0,
    };
    let demos = match spec.demos.load(cfg.run.env) {
        Ok(d) => d,
        Err(e) => return failed(e),
    };
    match execute_run(&spec.label, cfg, &demos, &spec.csv_path, &spec.summary_path) {
        Ok(s) => s,
        Err(e) => RunSummary::read(&spec.summary_path).unwrap_or_else(|_| failed(e)),
    }
}

/// Deterministic evaluation of the actor stored in a run checkpoint.
pub fn evaluate_checkpoint(path: &Path, env: EnvId, episodes: usize, seed: u64) -> Result<(f64, f64)> {
    let mut nets = crate::nn::checkpoint::load_networks(path)?;
    if nets.is_empty() {
        return Err(Error::parse(path.display().to_string(), "checkpoint holds no networks"));
    }
    let mut e = env.make();
    let spec = e.spec().clone();
    let actor = crate::agent::Actor::from_network(nets.swap_remove(0), &spec, &crate::agent::AgentConfig::default())?;
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(crate::trainer::EVAL_STREAM);
    crate::trainer::evaluate(&actor, e.as_mut(), episodes, &mut rng)
}

/// Writes scripted demonstrations for a run into `dir` for provenance.
pub fn write_scripted_demos(dir: &Path, env: EnvId, quality: f64, count: usize, seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let demos = scripted_demonstrations(env, quality, count, seed)?;
    let path = dir.join(format!("demos-{env}-q{quality}-n{count}-s{seed}.jsonl"));
    write_demonstrations(&path, &demos.trajectories, Some(quality))?;
    Ok(path)
}

/// Linear-interpolation quantile of sorted data, `q` in [0, 1].
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            if lo == hi || sorted[lo] == sorted[hi] {
                return sorted[lo];
            }
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// Median over runs of the steps needed to reach the teacher's level; runs
/// that never got there count as `+∞`.
pub fn median_steps_to_teacher(runs: &[&RunSummary]) -> f64 {
    let steps: Vec<f64> = runs
        .iter()
        .map(|r| r.steps_to_teacher.map_or(f64::INFINITY, |s| s as f64))
        .collect();
    median(&steps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub label: String,
    pub algo: Algo,
    pub env: EnvId,
    pub runs: usize,
    pub failed: usize,
    pub median_final_return: f64,
    pub iqr_final_return: f64,
    pub median_steps_to_teacher: f64,
    pub status: String,
}

/// One row per (label, env), in first-appearance order.
pub fn aggregate(summaries: &[RunSummary]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, EnvId)> = Vec::new();
    for s in summaries {
        let k = (s.label.clone(), s.env);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(label, env)| {
            let group: Vec<&RunSummary> = summaries.iter().filter(|s| s.label == label && s.env == env).collect();
            let ok: Vec<&RunSummary> = group.iter().copied().filter(|s| s.ok()).collect();
            let mut finals: Vec<f64> = ok.iter().filter_map(|s| s.final_eval_mean).collect();
            finals.sort_by(f64::total_cmp);
            let failed = group.len() - ok.len();
            AggregateRow {
                algo: group[0].algo,
                env,
                runs: group.len(),
                failed,
                median_final_return: quantile(&finals, 0.5),
                iqr_final_return: quantile(&finals, 0.75) - quantile(&finals, 0.25),
                median_steps_to_teacher: median_steps_to_teacher(&ok),
                status: if failed == 0 {
                    "ok".into()
                } else {
                    format!("{failed} failed")
                },
                label,
            }
        })
        .collect()
}

pub fn write_aggregate_csv(rows: &[AggregateRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "n/a".into()
    } else if x.is_infinite() {
        "never".into()
    } else {
        format!("{x:.2}")
    }
}

/// Markdown summary: the aggregate table followed by one line per run.
pub fn markdown_report(rows: &[AggregateRow], summaries: &[RunSummary]) -> String {
    let mut out = String::from("# Experiment summary\n\n");
    out.push_str("| label | env | runs | failed | median final return | IQR | median steps to teacher |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for r in rows {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} |\n",
            r.label,
            r.env,
            r.runs,
            r.failed,
            fmt_num(r.median_final_return),
            fmt_num(r.iqr_final_return),
            fmt_num(r.median_steps_to_teacher)
        ));
    }
    out.push_str("\n## Runs\n\n| label | seed | status | final return | teacher mean | steps to teacher | promotions |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for s in summaries {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} |\n",
            s.label,
            s.seed,
            s.status,
            fmt_num(s.final_eval_mean.unwrap_or(f64::NAN)),
            fmt_num(s.teacher_mean.unwrap_or(f64::NAN)),
            s.steps_to_teacher.map_or("never".into(), |v| v.to_string()),
            s.promotions
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(label: &str, seed: u64, ret: f64, steps: Option<u64>) -> RunSummary {
        RunSummary {
            label: label.into(),
            algo: Algo::Sail,
            env: EnvId::PointMass,
            seed,
            status: "ok".into(),
            final_eval_mean: Some(ret),
            final_eval_std: Some(0.0),
            promotions: 1,
            env_steps: 100,
            teacher_mean: Some(1.0),
            steps_to_teacher: steps,
            wall_seconds: 0.0,
        }
    }

    #[test]
    fn single_run_aggregate_matches_run() {
        let s = summary("sail", 1, 3.5, Some(2048));
        let rows = aggregate(std::slice::from_ref(&s));
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].median_final_return, 3.5);
        assert_eq!(rows[0].iqr_final_return, 0.0);
        assert_eq!(rows[0].median_steps_to_teacher, 2048.0);
    }

    #[test]
    fn median_lies_within_extremes_and_failures_are_counted() {
        let mut runs: Vec<RunSummary> = (1..=5).map(|i| summary("sail", i, i as f64 * 1.5, None)).collect();
        runs[4].status = "numerical divergence: x".into();
        let row = &aggregate(&runs)[0];
        assert_eq!(row.failed, 1);
        assert_eq!(row.status, "1 failed");
        assert!(row.median_final_return >= 1.5 && row.median_final_return <= 6.0);
        assert_eq!(row.median_steps_to_teacher, f64::INFINITY);
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert!(quantile(&[], 0.5).is_nan());
    }

    #[test]
    fn overrides_apply_and_validate() {
        let cfg = TrainConfig::default();
        let out = apply_override(&cfg, "run.total_steps", &toml::Value::Integer(5)).unwrap();
        assert_eq!(out.run.total_steps, 5);
        assert!(apply_override(&cfg, "cadence.critic_every", &toml::Value::Integer(0)).is_err());
        assert!(apply_override(&cfg, "nosection.x", &toml::Value::Integer(0)).is_err());
        assert!(apply_override(&cfg, "run.bogus", &toml::Value::Integer(0)).is_err());
    }

    #[test]
    fn duplicate_outputs_are_rejected() {
        let text = r#"
output_dir = "out"
[[runs]]
algo = "sail"
seeds = [1]
[[runs]]
algo = "sail"
seeds = [1]
"#;
        let m: ExperimentManifest = toml::from_str(text).unwrap();
        assert!(matches!(m.resolve(Path::new("/tmp")), Err(Error::Config(_))));
    }
}
