//! Run configuration: one JSON file, overridden field by field by flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use seqrejectron::experiments::{DemoConfig, EvalMethod, SweepParam};
use seqrejectron::fit::{Algorithm, FitOptions};
use seqrejectron::game::{Engine, NoRegretConfig};
use seqrejectron::scenarios::ScenarioSpec;

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EngineName {
    Hedge,
    Ftpl,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: Option<SweepParam>,
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<ScenarioSpec>,
    /// Directory written by `gen-data`.
    pub bundle: Option<PathBuf>,
    pub algorithm: Option<Algorithm>,
    #[serde(default)]
    pub params: FitOptions,
    pub engine: Option<EngineName>,
    pub ftpl_scale: Option<f64>,
    pub rounds: Option<usize>,
    pub eval: Option<EvalMethod>,
    pub seed: Option<u64>,
    pub train_size: Option<usize>,
    pub test_size: Option<usize>,
    pub trials: Option<usize>,
    #[serde(default)]
    pub sweep: SweepSpec,
    pub demo: Option<DemoConfig>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, Failure> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(anyhow::anyhow!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Config(anyhow::anyhow!("bad config {}: {e}", path.display())))
    }

    pub fn game(&self) -> NoRegretConfig {
        let engine = match self.engine.unwrap_or(EngineName::Hedge) {
            EngineName::Hedge => Engine::Hedge,
            EngineName::Ftpl => Engine::Ftpl { scale: self.ftpl_scale },
        };
        NoRegretConfig { rounds: self.rounds, engine, seed: self.seed.unwrap_or(0), ..Default::default() }
    }
}

/// Flags shared by subcommands that fit; each one, when given, replaces
/// the config value.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct FitFlags {
    #[arg(long = "algo", value_enum)]
    pub algorithm: Option<AlgoName>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, value_enum)]
    pub engine: Option<EngineName>,
    #[arg(long)]
    pub rounds: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AlgoName {
    Deterministic,
    Stochastic,
    Misspecified,
    PerStep,
}

impl From<AlgoName> for Algorithm {
    fn from(a: AlgoName) -> Self {
        match a {
            AlgoName::Deterministic => Algorithm::Deterministic,
            AlgoName::Stochastic => Algorithm::Stochastic,
            AlgoName::Misspecified => Algorithm::Misspecified,
            AlgoName::PerStep => Algorithm::PerStep,
        }
    }
}

impl FitFlags {
    pub fn apply(&self, cfg: &mut RunConfig) {
        fn set<T: Copy>(dst: &mut Option<T>, src: Option<T>) {
            if src.is_some() {
                *dst = src;
            }
        }
        if let Some(a) = self.algorithm {
            cfg.algorithm = Some(a.into());
        }
        let p = &mut cfg.params;
        set(&mut p.eta, self.eta);
        set(&mut p.xi, self.xi);
        set(&mut p.delta, self.delta);
        set(&mut p.theta, self.theta);
        set(&mut p.gamma, self.gamma);
        set(&mut p.lambda, self.lambda);
        set(&mut p.k, self.k);
        set(&mut p.rho, self.rho);
        set(&mut cfg.engine, self.engine);
        set(&mut cfg.rounds, self.rounds);
    }
}
