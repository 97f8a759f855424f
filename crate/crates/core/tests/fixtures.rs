//! Pinned regression values for the worked examples.
//!
//! Each value is first checked against an oracle written here (hand
//! arithmetic or a forward dynamic program, never the enumeration code),
//! then compared with the committed fixture under `tests/fixtures/`.
//! Set `SEQREJ_REGENERATE_FIXTURES=1` to rewrite the fixture files.

use std::path::PathBuf;

use serde_json::{json, Value};

use seqrejectron::eval::{exact_metrics, expert_variance, monte_carlo_metrics};
use seqrejectron::fit::fit_deterministic;
use seqrejectron::game::NoRegretConfig;
use seqrejectron::mdp::{Policy, PolicyClass, TabularMdp, Trajectory};
use seqrejectron::scenarios::desk::{always_l, always_r, desk_chain, desk_chain_windy, desk_class, R};
use seqrejectron::scenarios::{ScenarioSpec, WindyParams};
use seqrejectron::stopping::{SelectivePolicy, StoppingMode, StoppingRule};

const DRIFT_TOL: f64 = 1e-9;
const ORACLE_TOL: f64 = 1e-12;

fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join(name)
}

/// Structural equality with numbers compared to `DRIFT_TOL`.
fn assert_close(a: &Value, b: &Value, path: &str) {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            assert!((x - y).abs() <= DRIFT_TOL, "{path}: {x} drifted from pinned {y}");
        }
        (Value::Object(x), Value::Object(y)) => {
            let mut kx: Vec<_> = x.keys().collect();
            let mut ky: Vec<_> = y.keys().collect();
            kx.sort();
            ky.sort();
            assert_eq!(kx, ky, "{path}: field sets differ");
            for k in x.keys() {
                assert_close(&x[k], &y[k], &format!("{path}.{k}"));
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            assert_eq!(x.len(), y.len(), "{path}: lengths differ");
            for (i, (p, q)) in x.iter().zip(y).enumerate() {
                assert_close(p, q, &format!("{path}[{i}]"));
            }
        }
        _ => assert_eq!(a, b, "{path}"),
    }
}

fn check_fixture(name: &str, computed: Value) {
    let path = fixture_path(name);
    if std::env::var_os("SEQREJ_REGENERATE_FIXTURES").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, serde_json::to_string_pretty(&computed).unwrap() + "\n").unwrap();
        return;
    }
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("missing fixture {}: {e}", path.display()));
    let pinned: Value = serde_json::from_str(&text).unwrap();
    assert_close(&computed, &pinned, name);
}

/// `J(π) = Σ_h Σ_s occ_h(s) Σ_a π(a|s) c_h(s,a)` by a forward pass.
fn forward_cost(mdp: &TabularMdp, policy: &Policy) -> f64 {
    let (hz, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut occ = mdp.initial_dist().to_vec();
    let mut total = 0.0;
    for h in 0..hz {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..na {
                let w = occ[s] * policy.prob(h, s, a);
                total += w * mdp.cost(h, s, a);
                if h + 1 < hz {
                    for (x, p) in next.iter_mut().zip(mdp.transition(h, s, a)) {
                        *x += w * p;
                    }
                }
            }
        }
        occ = next;
    }
    total
}

/// Chance that deterministic `pi` acts differently from deterministic
/// `demo` somewhere along the demonstrator's trajectory.
fn deviation_oracle(mdp: &TabularMdp, demo: &Policy, pi: &Policy) -> f64 {
    let mut occ = mdp.initial_dist().to_vec();
    for h in 0..mdp.horizon() {
        let mut next = vec![0.0; mdp.num_states()];
        for s in 0..mdp.num_states() {
            let a = demo.action(h, s).unwrap();
            if pi.action(h, s) != Some(a) {
                occ[s] = 0.0;
                continue;
            }
            if h + 1 < mdp.horizon() {
                for (x, p) in next.iter_mut().zip(mdp.transition(h, s, a)) {
                    *x += occ[s] * p;
                }
            }
        }
        if h + 1 < mdp.horizon() {
            occ = next;
        }
    }
    1.0 - occ.iter().sum::<f64>()
}

#[test]
fn desk_trajectory_examples() {
    let m = desk_chain();
    // Expert always-R: [0,1] costs 1; always-L stuck at 0 costs 2.
    assert_eq!(forward_cost(&m, &always_r()), 1.0);
    assert_eq!(forward_cost(&m, &always_l()), 2.0);
    let uniform = Policy::uniform_row(1, 1, vec![0.5, 0.5]).unwrap();
    let one_step = TabularMdp::new(vec![1.0], vec![], vec![vec![vec![0.0, 1.0]]], 1.0).unwrap();
    assert!((expert_variance(&one_step, &uniform).unwrap() - 0.25).abs() < ORACLE_TOL);
}

/// Source is the reference chain, target pushes R back with probability
/// 0.5, and the class is {always-R, always-L}.
fn desk_eval_case() -> Value {
    let m = desk_chain();
    let n = desk_chain_windy(0.5);
    let class = PolicyClass::new(vec![always_r(), always_l()]).unwrap();
    let train = vec![Trajectory::labeled(vec![0, 1], vec![R, R])];
    let test = vec![Trajectory::unlabeled(vec![0, 0]), Trajectory::unlabeled(vec![0, 1])];
    let rep = fit_deterministic(&class, &train, &test, 0.4, 0.1, 0.1, &NoRegretConfig::with_seed(0)).unwrap();
    // Only always-R is consistent, so it is the base and the sole validator.
    assert_eq!(rep.selective.base_id, 0);
    assert_eq!(rep.selective.validator_ids, vec![0]);
    let sel = SelectivePolicy::new(rep.selective.clone(), &class).unwrap();
    let r = exact_metrics(&m, &n, &sel, &always_r(), &class).unwrap();
    // Hand values: never stops; J_N(always-R) = 1 + 0.5 = 1.5; the handoff
    // time is min(H+1, H) = 2; deterministic expert means zero variance.
    assert_eq!((r.alpha_m, r.alpha_n), (0.0, 0.0));
    assert!((r.learner_cost_n - 1.5).abs() < ORACLE_TOL);
    assert!((r.learner_cost_n - forward_cost(&n, &always_r())).abs() < ORACLE_TOL);
    assert!((r.expert_cost_n - 1.5).abs() < ORACLE_TOL);
    assert_eq!(r.stopped_regret_n, 0.0);
    assert_eq!(r.switched_regret_n, 0.0);
    assert_eq!(r.mean_handoff_time, 2.0);
    assert_eq!(r.expert_variance, 0.0);
    serde_json::from_str(&r.to_json()).unwrap()
}

/// Same environments; base always-R stopped by R-then-L at step 2, expert
/// uniform over {L, R}.
fn desk_uniform_expert_case() -> Value {
    let m = desk_chain();
    let n = desk_chain_windy(0.5);
    let class = desk_class();
    let expert = Policy::uniform_row(2, 2, vec![0.5, 0.5]).unwrap();
    let sel = SelectivePolicy::new(StoppingRule::new(0, vec![2], StoppingMode::FirstDisagreement), &class).unwrap();
    let r = exact_metrics(&m, &n, &sel, &expert, &class).unwrap();
    // The rule fires at step 2 on every path, in both environments.
    assert_eq!((r.alpha_m, r.alpha_n), (1.0, 1.0));
    // Expert: step 1 costs 1, then P(s_2 = 0) = 0.5 + 0.5·0.5.
    assert!((r.expert_cost_n - 1.75).abs() < ORACLE_TOL);
    assert!((r.expert_cost_n - forward_cost(&n, &expert)).abs() < ORACLE_TOL);
    assert!((r.learner_cost_n - 1.5).abs() < ORACLE_TOL);
    // Costs depend only on the state, so handing off at step 2 keeps the
    // learner's cost: 1.5 − 1.75.
    assert!((r.switched_regret_n + 0.25).abs() < ORACLE_TOL);
    // Both prefixes before τ = 2 cost exactly 1.
    assert!(r.stopped_regret_n.abs() < ORACLE_TOL);
    assert!((r.asymmetric_stopped_regret_n + 0.75).abs() < ORACLE_TOL);
    assert!((r.mean_handoff_time - 2.0).abs() < ORACLE_TOL);
    // V_1(0) = 1.75 with Q_1(0, L) = 2 and Q_1(0, R) = 1.5.
    assert!((r.expert_variance - 0.0625).abs() < ORACLE_TOL);
    serde_json::from_str(&r.to_json()).unwrap()
}

#[test]
fn desk_metrics_are_pinned() {
    check_fixture("desk_eval.json", json!({ "fit_example": desk_eval_case(), "uniform_expert": desk_uniform_expert_case() }));
}

#[test]
fn desk_monte_carlo_agrees_with_exact() {
    let (m, n) = (desk_chain(), desk_chain_windy(0.5));
    let class = desk_class();
    let expert = Policy::uniform_row(2, 2, vec![0.5, 0.5]).unwrap();
    for validators in [vec![], vec![1], vec![2]] {
        let sel = SelectivePolicy::new(StoppingRule::new(0, validators, StoppingMode::FirstDisagreement), &class).unwrap();
        let ex = exact_metrics(&m, &n, &sel, &expert, &class).unwrap();
        let mc = monte_carlo_metrics(&m, &n, &sel, &expert, &class, 20_000, 3).unwrap();
        let ci = mc.ci_halfwidths.clone().unwrap();
        let pairs = [
            (ex.alpha_n, mc.alpha_n, ci.alpha_n),
            (ex.switched_regret_n, mc.switched_regret_n, ci.switched_regret_n),
            (ex.expert_cost_n, mc.expert_cost_n, ci.expert_cost_n),
            (ex.learner_cost_n, mc.learner_cost_n, ci.learner_cost_n),
        ];
        for (e, est, hw) in pairs {
            assert!((e - est).abs() <= 3.0 * hw + 1e-12, "exact {e}, estimate {est}, half-width {hw}");
        }
    }
}

#[test]
fn windy_chain_is_pinned() {
    let spec = ScenarioSpec::WindyChain { params: WindyParams::new(4, 5, 0.4), seed: 17 };
    let b = spec.generate().unwrap();
    assert_eq!(b, spec.generate().unwrap());
    let sel = SelectivePolicy::new(
        StoppingRule::new(b.info["expert_id"].as_u64().unwrap() as usize, vec![], StoppingMode::FirstDisagreement),
        &b.class,
    )
    .unwrap();
    let r = exact_metrics(&b.source, &b.target, &sel, &b.expert, &b.class).unwrap();
    let (src, tgt) = (forward_cost(&b.source, &b.expert), forward_cost(&b.target, &b.expert));
    assert!((r.expert_cost_n - tgt).abs() < ORACLE_TOL);
    assert!(tgt > src, "wind must hurt the expert");
    let lagging = b.class.policies().iter().filter(|p| forward_cost(&b.target, p) > tgt + 1e-12).count();
    check_fixture(
        "windy_chain.json",
        json!({
            "expert_id": b.info["expert_id"],
            "class_size": b.class.len(),
            "expert_cost_source": src,
            "expert_cost_target": tgt,
            "costlier_than_expert_in_target": lagging,
        }),
    );
}

#[test]
fn offpolicy_gap_is_pinned() {
    let spec = ScenarioSpec::OffPolicyPair { states: 3, actions: 2, horizon: 3, class_size: 8, corruption: 0.2, seed: 11 };
    let b = spec.generate().unwrap();
    let tr = b.demonstrator.clone();
    let te = b.expert.clone();
    let oracle = b
        .class
        .policies()
        .iter()
        .map(|p| deviation_oracle(&b.source, &tr, p).max(deviation_oracle(&b.target, &te, p)))
        .fold(f64::INFINITY, f64::min);
    let reported = b.info["delta_off"].as_f64().unwrap();
    assert!((reported - oracle).abs() < ORACLE_TOL, "reported {reported}, oracle {oracle}");
    check_fixture("offpolicy_pair.json", json!({ "delta_off": reported }));
}
