//! Batch studies: the windy-chain threshold sweep, the per-step versus
//! trajectory-level comparison, and generic parameter sweeps.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::eval::{exact_metrics, monte_carlo_metrics, MetricsReport};
use crate::fit::{default_gamma, fit, fit_deterministic, fit_per_step, Algorithm, FitOptions};
use crate::game::{logloss_version_space, mle_policy, NoRegretConfig};
use crate::mdp::{sample_dataset, Policy, PolicyClass, Trajectory};
use crate::rng::SeedStream;
use crate::scenarios::{flipped_forward_class, make_windy_chain, slip_chain, ScenarioBundle, WindyParams};
use crate::stopping::{SelectivePolicy, StoppingMode, StoppingRule};

/// Labeled source data from the demonstrator and unlabeled target data from
/// the expert, on the `train` and `test` substreams of `stream`.
pub fn sample_split(bundle: &ScenarioBundle, m: usize, n: usize, stream: SeedStream) -> Result<(Vec<Trajectory>, Vec<Trajectory>)> {
    let train = sample_dataset(&bundle.source, &bundle.demonstrator, m, stream.child("train"))?;
    let test = sample_dataset(&bundle.target, &bundle.expert, n, stream.child("test"))?;
    Ok((train, test.iter().map(Trajectory::strip).collect()))
}

/// The `k` members of `candidates` (other than `base`) whose summed
/// cumulative squared Hellinger distance to `base` over `test` is largest;
/// ties go to the smaller id.
pub fn greedy_validators(class: &PolicyClass, base: usize, candidates: &[usize], test: &[Trajectory], k: usize) -> Vec<usize> {
    let b = &class.policies()[base];
    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .filter(|&&v| v != base)
        .map(|&v| {
            let p = &class.policies()[v];
            let score = test
                .iter()
                .flat_map(|t| t.states.iter().enumerate())
                .map(|(h, &s)| p.step_hellinger_sq(b, h, s))
                .sum::<f64>();
            (score, v)
        })
        .collect();
    scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let mut out: Vec<usize> = scored.into_iter().take(k).map(|(_, v)| v).collect();
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoConfig {
    pub chain: WindyParams,
    pub train_size: usize,
    pub test_size: usize,
    pub trials: usize,
    /// Validators per committee.
    pub committee: usize,
    pub thetas: Vec<f64>,
    /// Monte Carlo rollouts per evaluation.
    pub rollouts: usize,
    /// Confidence used for the default log-loss radius.
    pub delta: f64,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            chain: WindyParams::new(8, 12, 0.3),
            train_size: 30,
            test_size: 30,
            trials: 20,
            committee: 3,
            thetas: vec![0.5, 1.0, 1.5, 2.0, 3.0],
            rollouts: 2000,
            delta: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoRow {
    pub trial: usize,
    pub theta: f64,
    pub source_handoff_rate: f64,
    pub target_handoff_rate: f64,
    pub switched_cost: f64,
    pub learner_cost: f64,
    pub expert_cost: f64,
    pub mean_handoff_time: f64,
}

pub const DEMO_CSV_HEADER: &str =
    "trial,theta,source_handoff_rate,target_handoff_rate,switched_cost,learner_cost,expert_cost,mean_handoff_time";

impl DemoRow {
    fn from_metrics(trial: usize, theta: f64, r: &MetricsReport) -> Self {
        DemoRow {
            trial,
            theta,
            source_handoff_rate: r.alpha_m,
            target_handoff_rate: r.alpha_n,
            switched_cost: r.switched_cost_n,
            learner_cost: r.learner_cost_n,
            expert_cost: r.expert_cost_n,
            mean_handoff_time: r.mean_handoff_time,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.trial,
            self.theta,
            self.source_handoff_rate,
            self.target_handoff_rate,
            self.switched_cost,
            self.learner_cost,
            self.expert_cost,
            self.mean_handoff_time
        )
    }
}

/// One trial: MLE base, greedy committee from the default log-loss ball,
/// then a Monte Carlo evaluation per threshold. All thresholds share the
/// evaluation seed, so τ is pathwise nondecreasing in θ.
fn demo_trial(cfg: &DemoConfig, bundle: &ScenarioBundle, trial: usize) -> Result<Vec<DemoRow>> {
    let stream = SeedStream::new(cfg.seed).child("demo").index(trial as u64);
    let (train, test) = sample_split(bundle, cfg.train_size, cfg.test_size, stream)?;
    let class = &bundle.class;
    let base = mle_policy(class, &train)?;
    let gamma = default_gamma(class.len(), cfg.delta, train.len());
    let ball = logloss_version_space(class, &train, gamma)?;
    let validators = greedy_validators(class, base, &ball.member_ids, &test, cfg.committee);
    let eval_seed = stream.child("eval").key();
    cfg.thetas
        .iter()
        .map(|&theta| {
            let rule = StoppingRule::new(base, validators.clone(), StoppingMode::Hellinger(theta));
            let sel = SelectivePolicy::new(rule, class)?;
            let r = monte_carlo_metrics(&bundle.source, &bundle.target, &sel, &bundle.expert, class, cfg.rollouts, eval_seed)?;
            Ok(DemoRow::from_metrics(trial, theta, &r))
        })
        .collect()
}

/// The windy-chain threshold sweep; rows in (trial, θ) order.
pub fn run_demo(cfg: &DemoConfig) -> Result<Vec<DemoRow>> {
    if cfg.thetas.is_empty() || cfg.thetas.iter().any(|t| !(*t > 0.0)) {
        return config("thetas must be a nonempty list of positive values");
    }
    if cfg.trials == 0 || cfg.rollouts == 0 || cfg.committee == 0 {
        return config("trials, rollouts and committee must be positive");
    }
    let w = make_windy_chain(&cfg.chain, cfg.seed)?;
    let bundle = ScenarioBundle {
        source: w.source,
        target: w.target,
        class: w.class,
        demonstrator: w.expert.clone(),
        expert: w.expert,
        info: serde_json::json!({ "expert_id": w.expert_id }),
    };
    let per_trial = (0..cfg.trials).into_par_iter().map(|t| demo_trial(cfg, &bundle, t)).collect::<Result<Vec<_>>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

/// Trial means per threshold, in grid order.
pub fn demo_summary(rows: &[DemoRow], thetas: &[f64]) -> Vec<DemoRow> {
    thetas
        .iter()
        .map(|&theta| {
            let sel: Vec<&DemoRow> = rows.iter().filter(|r| r.theta == theta).collect();
            let k = sel.len().max(1) as f64;
            let mean = |f: fn(&DemoRow) -> f64| sel.iter().map(|r| f(r)).sum::<f64>() / k;
            DemoRow {
                trial: sel.len(),
                theta,
                source_handoff_rate: mean(|r| r.source_handoff_rate),
                target_handoff_rate: mean(|r| r.target_handoff_rate),
                switched_cost: mean(|r| r.switched_cost),
                learner_cost: mean(|r| r.learner_cost),
                expert_cost: mean(|r| r.expert_cost),
                mean_handoff_time: mean(|r| r.mean_handoff_time),
            }
        })
        .collect()
}

pub fn write_demo_csv(out: &mut impl Write, rows: &[DemoRow]) -> Result<()> {
    writeln!(out, "{DEMO_CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    pub horizons: Vec<usize>,
    pub length: usize,
    pub source_slip: f64,
    pub target_slip: f64,
    pub start_decay: f64,
    pub class_size: usize,
    pub flip: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub trials: usize,
    /// Target-side coverage level shared by both methods.
    pub rho: f64,
    pub xi: f64,
    pub delta: f64,
    pub seed: u64,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            horizons: vec![2, 4, 8],
            length: 5,
            source_slip: 0.1,
            target_slip: 0.4,
            start_decay: 0.35,
            class_size: 64,
            flip: 0.5,
            train_size: 30,
            test_size: 30,
            trials: 40,
            rho: 0.34,
            xi: 0.1,
            delta: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub horizon: usize,
    pub trial: usize,
    pub per_step_alpha_m: f64,
    pub trajectory_alpha_m: f64,
    pub per_step_alpha_n: f64,
    pub trajectory_alpha_n: f64,
}

pub const COMPARISON_CSV_HEADER: &str = "horizon,trial,per_step_alpha_M,trajectory_alpha_M,per_step_alpha_N,trajectory_alpha_N";

impl ComparisonRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.horizon, self.trial, self.per_step_alpha_m, self.trajectory_alpha_m, self.per_step_alpha_n, self.trajectory_alpha_n
        )
    }
}

/// Exact source and target stopping rates of both methods, fitted on the
/// same data with the same coverage level ρ (trajectory-level η = 2ρ).
pub fn per_step_vs_trajectory(cfg: &ComparisonConfig) -> Result<Vec<ComparisonRow>> {
    let jobs: Vec<(usize, usize)> = cfg.horizons.iter().flat_map(|&h| (0..cfg.trials).map(move |t| (h, t))).collect();
    jobs.par_iter()
        .map(|&(horizon, trial)| {
            let source = slip_chain(cfg.length, horizon, cfg.source_slip, cfg.start_decay)?;
            let target = slip_chain(cfg.length, horizon, cfg.target_slip, cfg.start_decay)?;
            let stream = SeedStream::new(cfg.seed).child("comparison").index(horizon as u64).index(trial as u64);
            let class = flipped_forward_class(cfg.length, horizon, cfg.class_size, cfg.flip, stream.child("class").key())?;
            let expert: Policy = class.policies()[0].clone();
            let bundle = ScenarioBundle {
                source,
                target,
                class,
                demonstrator: expert.clone(),
                expert,
                info: serde_json::Value::Null,
            };
            let (train, test) = sample_split(&bundle, cfg.train_size, cfg.test_size, stream)?;
            let game = NoRegretConfig::with_seed(stream.child("fit").key());
            let per_step = fit_per_step(&bundle.class, &train, &test, cfg.rho, cfg.xi, cfg.delta, &game)?;
            let traj = fit_deterministic(&bundle.class, &train, &test, 2.0 * cfg.rho, cfg.xi, cfg.delta, &game)?;
            let rates = |rule: StoppingRule| -> Result<(f64, f64)> {
                let sel = SelectivePolicy::new(rule, &bundle.class)?;
                let r = exact_metrics(&bundle.source, &bundle.target, &sel, &bundle.expert, &bundle.class)?;
                Ok((r.alpha_m, r.alpha_n))
            };
            let (ps_m, ps_n) = rates(per_step.selective)?;
            let (tr_m, tr_n) = rates(traj.selective)?;
            Ok(ComparisonRow {
                horizon,
                trial,
                per_step_alpha_m: ps_m,
                trajectory_alpha_m: tr_m,
                per_step_alpha_n: ps_n,
                trajectory_alpha_n: tr_n,
            })
        })
        .collect()
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Theta,
    Eta,
    K,
    Lambda,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Theta => "theta",
            SweepParam::Eta => "eta",
            SweepParam::K => "k",
            SweepParam::Lambda => "lambda",
        }
    }

    fn apply(self, opts: &FitOptions, value: f64) -> FitOptions {
        let mut o = opts.clone();
        match self {
            SweepParam::Theta => o.theta = Some(value),
            SweepParam::Eta => o.eta = Some(value),
            SweepParam::K => o.k = Some(value.round() as usize),
            SweepParam::Lambda => o.lambda = Some(value),
        }
        o
    }
}

/// How a fitted selective policy is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMethod {
    Exact,
    MonteCarlo { n_rollouts: usize },
}

pub fn evaluate(bundle: &ScenarioBundle, sel: &SelectivePolicy, method: EvalMethod, seed: u64) -> Result<MetricsReport> {
    match method {
        EvalMethod::Exact => exact_metrics(&bundle.source, &bundle.target, sel, &bundle.expert, &bundle.class),
        EvalMethod::MonteCarlo { n_rollouts } => {
            monte_carlo_metrics(&bundle.source, &bundle.target, sel, &bundle.expert, &bundle.class, n_rollouts, seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub trial: usize,
    pub param: SweepParam,
    pub value: f64,
    pub committee_total: usize,
    pub metrics: MetricsReport,
}

pub fn sweep_csv_header() -> String {
    format!("trial,param,value,committee_total,{}", MetricsReport::CSV_HEADER)
}

impl SweepRow {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.trial, self.param.name(), self.value, self.committee_total, self.metrics.csv_row())
    }
}

/// One sweep point: fresh data for `trial`, a fit at `value`, an evaluation.
/// Data and evaluation seeds depend on the trial only, so grid values are
/// compared on common samples.
#[allow(clippy::too_many_arguments)]
pub fn sweep_point(
    bundle: &ScenarioBundle,
    algorithm: Algorithm,
    opts: &FitOptions,
    game: &NoRegretConfig,
    param: SweepParam,
    value: f64,
    trial: usize,
    sizes: (usize, usize),
    method: EvalMethod,
    seed: u64,
) -> Result<SweepRow> {
    let stream = SeedStream::new(seed).child("sweep").index(trial as u64);
    let (train, test) = sample_split(bundle, sizes.0, sizes.1, stream)?;
    let game = NoRegretConfig { seed: stream.child("fit").key(), ..*game };
    let report = fit(algorithm, &bundle.class, &train, &test, &param.apply(opts, value), &game)?;
    let sel = SelectivePolicy::new(report.selective.clone(), &bundle.class)?;
    let metrics = evaluate(bundle, &sel, method, stream.child("eval").key())?;
    Ok(SweepRow { trial, param, value, committee_total: report.committee_total, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::desk::desk_class;

    #[test]
    fn greedy_picks_most_divergent() {
        let class = desk_class().to_stochastic();
        let test = vec![Trajectory::unlabeled(vec![0, 1])];
        // Against always-R: always-L differs twice, R-then-L once.
        assert_eq!(greedy_validators(&class, 0, &[0, 1, 2], &test, 1), vec![1]);
        assert_eq!(greedy_validators(&class, 0, &[0, 1, 2], &test, 5), vec![1, 2]);
    }

    #[test]
    fn small_demo_is_deterministic() {
        let cfg = DemoConfig { trials: 2, rollouts: 100, thetas: vec![0.5, 2.0], ..Default::default() };
        let a = run_demo(&cfg).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!(a, run_demo(&cfg).unwrap());
        let mut buf = Vec::new();
        write_demo_csv(&mut buf, &a).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with(DEMO_CSV_HEADER));
    }
}
