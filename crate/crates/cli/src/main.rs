//! Batch driver: data generation, fitting, evaluation, sweeps and the
//! windy-chain demo. Exit status is 0 on success, 2 on configuration
//! errors and 1 on runtime failures.

mod config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;

use seqrejectron::experiments::{
    demo_summary, evaluate, run_demo, sample_split, sweep_csv_header, sweep_point, write_demo_csv, DemoConfig, DemoRow,
    EvalMethod, SweepParam,
};
use seqrejectron::fit::{fit, Algorithm};
use seqrejectron::mdp::{read_jsonl, write_jsonl, Policy, PolicyClass, TabularMdp};
use seqrejectron::rng::SeedStream;
use seqrejectron::scenarios::{ScenarioBundle, ScenarioSpec};
use seqrejectron::stopping::SelectivePolicy;

use config::{FitFlags, RunConfig};

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<seqrejectron::Error> for Failure {
    fn from(e: seqrejectron::Error) -> Self {
        if e.is_config() {
            Failure::Config(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn config_err(msg: impl std::fmt::Display) -> Failure {
    Failure::Config(anyhow!("{msg}"))
}

fn runtime<T, E: Into<anyhow::Error>>(r: Result<T, E>, what: &str) -> CliResult<T> {
    r.map_err(|e| Failure::Runtime(e.into().context(what.to_string())))
}

#[derive(Debug, Parser)]
#[command(name = "seqrejectron", version, about = "Selective imitation with validator-based handoff")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodName {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a scenario bundle and sample train/test data.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        /// ScenarioSpec JSON file.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a selective policy on a bundle's data.
    Fit {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Labeled source trajectories (defaults to the bundle's train.jsonl).
        #[arg(long)]
        train: Option<PathBuf>,
        /// Unlabeled target trajectories (defaults to the bundle's test.jsonl).
        #[arg(long)]
        test: Option<PathBuf>,
        #[command(flatten)]
        flags: FitFlags,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a selective policy on a bundle.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        selective: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodName>,
        #[arg(long)]
        rollouts: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid over one parameter and trials; writes one CSV row per point.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[command(flatten)]
        flags: FitFlags,
        #[arg(long, value_enum)]
        param: Option<ParamName>,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
        #[arg(long, value_enum)]
        method: Option<MethodName>,
        #[arg(long)]
        rollouts: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Windy-chain threshold sweep with the default study settings.
    Demo {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        rollouts: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ParamName {
    Theta,
    Eta,
    K,
    Lambda,
}

impl From<ParamName> for SweepParam {
    fn from(p: ParamName) -> Self {
        match p {
            ParamName::Theta => SweepParam::Theta,
            ParamName::Eta => SweepParam::Eta,
            ParamName::K => SweepParam::K,
            ParamName::Lambda => SweepParam::Lambda,
        }
    }
}

const DEFAULT_TRAIN: usize = 30;
const DEFAULT_TEST: usize = 30;
const DEFAULT_ROLLOUTS: usize = 10_000;

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        runtime(fs::create_dir_all(parent), "creating output directory")?;
    }
    runtime(fs::write(path, text), &format!("writing {}", path.display()))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

fn write_bundle(dir: &Path, b: &ScenarioBundle) -> CliResult<()> {
    runtime(fs::create_dir_all(dir), "creating bundle directory")?;
    write_text(&dir.join("source.json"), &to_json(&b.source))?;
    write_text(&dir.join("target.json"), &to_json(&b.target))?;
    write_text(&dir.join("class.json"), &to_json(&b.class))?;
    write_text(&dir.join("demonstrator.json"), &to_json(&b.demonstrator))?;
    write_text(&dir.join("expert.json"), &to_json(&b.expert))?;
    write_text(&dir.join("info.json"), &to_json(&b.info))
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn load_bundle(dir: &Path) -> CliResult<ScenarioBundle> {
    let source: TabularMdp = load_json(&dir.join("source.json"))?;
    let target: TabularMdp = load_json(&dir.join("target.json"))?;
    let class: PolicyClass = load_json(&dir.join("class.json"))?;
    let demonstrator: Policy = load_json(&dir.join("demonstrator.json"))?;
    let expert: Policy = load_json(&dir.join("expert.json"))?;
    let info_path = dir.join("info.json");
    let info = if info_path.exists() { load_json(&info_path)? } else { serde_json::Value::Null };
    Ok(ScenarioBundle { source, target, class, demonstrator, expert, info })
}

/// The bundle named by the flag or config, else one generated from the
/// config's scenario.
fn resolve_bundle(flag: Option<PathBuf>, cfg: &RunConfig) -> CliResult<ScenarioBundle> {
    if let Some(dir) = flag.or_else(|| cfg.bundle.clone()) {
        return load_bundle(&dir);
    }
    match &cfg.scenario {
        Some(spec) => Ok(spec.generate()?),
        None => Err(config_err("no bundle directory or scenario given")),
    }
}

fn eval_method(flag: Option<MethodName>, rollouts: Option<usize>, cfg: &RunConfig) -> EvalMethod {
    match (flag, cfg.eval) {
        (Some(MethodName::Exact), _) => EvalMethod::Exact,
        (Some(MethodName::MonteCarlo), _) => EvalMethod::MonteCarlo { n_rollouts: rollouts.unwrap_or(DEFAULT_ROLLOUTS) },
        (None, Some(EvalMethod::MonteCarlo { n_rollouts })) => {
            EvalMethod::MonteCarlo { n_rollouts: rollouts.unwrap_or(n_rollouts) }
        }
        (None, Some(EvalMethod::Exact)) => EvalMethod::Exact,
        (None, None) => match rollouts {
            Some(n) => EvalMethod::MonteCarlo { n_rollouts: n },
            None => EvalMethod::Exact,
        },
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData { config, scenario, train, test, seed, out } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            if let Some(path) = scenario {
                cfg.scenario = Some(load_json::<ScenarioSpec>(&path)?);
            }
            let spec = cfg.scenario.clone().ok_or_else(|| config_err("gen-data needs a scenario"))?;
            let bundle = spec.generate()?;
            let seed = seed.or(cfg.seed).unwrap_or(0);
            let m = train.or(cfg.train_size).unwrap_or(DEFAULT_TRAIN);
            let n = test.or(cfg.test_size).unwrap_or(DEFAULT_TEST);
            let (train_data, test_data) = sample_split(&bundle, m, n, SeedStream::new(seed).child("data"))?;
            write_bundle(&out, &bundle)?;
            write_text(&out.join("scenario.json"), &to_json(&spec))?;
            runtime(write_jsonl(&out.join("train.jsonl"), &train_data), "writing train.jsonl")?;
            runtime(write_jsonl(&out.join("test.jsonl"), &test_data), "writing test.jsonl")?;
            info!("wrote bundle with {m} train and {n} test trajectories to {}", out.display());
        }
        Command::Fit { config, bundle, train, test, flags, seed, out } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            flags.apply(&mut cfg);
            if seed.is_some() {
                cfg.seed = seed;
            }
            let dir = bundle.or_else(|| cfg.bundle.clone());
            let class: PolicyClass = match &dir {
                Some(d) => load_json(&d.join("class.json"))?,
                None => resolve_bundle(None, &cfg)?.class,
            };
            let data_path = |flag: Option<PathBuf>, name: &str| -> CliResult<PathBuf> {
                flag.or_else(|| dir.as_ref().map(|d| d.join(name)))
                    .ok_or_else(|| config_err(format!("no {name} given")))
            };
            let train_path = data_path(train, "train.jsonl")?;
            let test_path = data_path(test, "test.jsonl")?;
            let train = read_jsonl(&train_path).map_err(|e| config_err(format!("{}: {e}", train_path.display())))?;
            let test = read_jsonl(&test_path).map_err(|e| config_err(format!("{}: {e}", test_path.display())))?;
            let algorithm = cfg.algorithm.unwrap_or(Algorithm::Deterministic);
            let report = fit(algorithm, &class, &train, &test, &cfg.params, &cfg.game())?;
            write_text(&out.join("fit_report.json"), &to_json(&report))?;
            write_text(&out.join("selective.json"), &to_json(&report.selective))?;
            info!("fit {:?}: {} validators", algorithm, report.committee_total);
        }
        Command::Eval { config, bundle, selective, method, rollouts, seed, out } => {
            let cfg = RunConfig::load(config.as_deref())?;
            let b = resolve_bundle(bundle, &cfg)?;
            let sel = SelectivePolicy::from_json(&read_text(&selective)?, &b.class)?;
            let method = eval_method(method, rollouts, &cfg);
            let report = evaluate(&b, &sel, method, seed.or(cfg.seed).unwrap_or(0))?;
            write_text(&out, &to_json(&report))?;
        }
        Command::Sweep { config, bundle, flags, param, values, trials, train, test, method, rollouts, seed, jobs, out } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            flags.apply(&mut cfg);
            let b = resolve_bundle(bundle, &cfg)?;
            let param: SweepParam = param.map(Into::into).or(cfg.sweep.param).unwrap_or(SweepParam::Theta);
            let values = values.or_else(|| cfg.sweep.values.clone()).ok_or_else(|| config_err("sweep needs grid values"))?;
            if values.is_empty() {
                return Err(config_err("sweep grid is empty"));
            }
            let trials = trials.or(cfg.trials).unwrap_or(1);
            let sizes = (train.or(cfg.train_size).unwrap_or(DEFAULT_TRAIN), test.or(cfg.test_size).unwrap_or(DEFAULT_TEST));
            let method = eval_method(method, rollouts, &cfg);
            let seed = seed.or(cfg.seed).unwrap_or(0);
            let algorithm = cfg.algorithm.unwrap_or(match param {
                SweepParam::Theta => Algorithm::Stochastic,
                SweepParam::Eta => Algorithm::Deterministic,
                SweepParam::K | SweepParam::Lambda => Algorithm::Misspecified,
            });
            let grid: Vec<(usize, f64)> = (0..trials).flat_map(|t| values.iter().map(move |&v| (t, v))).collect();
            let game = cfg.game();
            let pool = runtime(rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build(), "building thread pool")?;
            let rows = pool.install(|| {
                grid.par_iter()
                    .map(|&(t, v)| sweep_point(&b, algorithm, &cfg.params, &game, param, v, t, sizes, method, seed))
                    .collect::<Result<Vec<_>, _>>()
            })?;
            let mut text = sweep_csv_header();
            text.push('\n');
            for r in &rows {
                text.push_str(&r.csv_row());
                text.push('\n');
            }
            write_text(&out, &text)?;
        }
        Command::Demo { config, trials, rollouts, seed, out } => {
            let cfg = RunConfig::load(config.as_deref())?;
            let mut demo = cfg.demo.clone().unwrap_or_default();
            if let Some(t) = trials {
                demo.trials = t;
            }
            if let Some(r) = rollouts {
                demo.rollouts = r;
            }
            if let Some(s) = seed.or(cfg.seed) {
                demo.seed = s;
            }
            write_demo(&out, &demo)?;
        }
    }
    Ok(())
}

fn write_demo(out: &Path, demo: &DemoConfig) -> CliResult<()> {
    let rows = run_demo(demo)?;
    runtime(fs::create_dir_all(out), "creating output directory")?;
    let write = |name: &str, rows: &[DemoRow]| -> CliResult<()> {
        let file = runtime(fs::File::create(out.join(name)), "creating csv")?;
        let mut w = BufWriter::new(file);
        write_demo_csv(&mut w, rows)?;
        runtime(w.flush(), "flushing csv")
    };
    write("demo.csv", &rows)?;
    // Summary rows carry the trial count in the `trial` column.
    write("demo_summary.csv", &demo_summary(&rows, &demo.thetas))?;
    write_text(&out.join("demo_config.json"), &to_json(demo))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SEQREJ_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
