use super::enumerate::TrajectoryDistribution;
use super::model::check_row;
use super::policy::Policy;
use crate::error::{invalid, Result};

pub(crate) fn hellinger_sq_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let bc: f64 = p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum();
    (1.0 - bc).clamp(0.0, 1.0)
}

/// d_H²(p, q) = 1 − Σ √(p(a) q(a)).
pub fn action_hellinger_sq(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return invalid("rows differ in length");
    }
    check_row(p, "p")?;
    check_row(q, "q")?;
    Ok(hellinger_sq_unchecked(p, q))
}

/// D_H²(P, Q) = 1 − Σ_T √(P(T) Q(T)); stopped prefixes of different
/// lengths are distinct outcomes.
pub fn trajectory_hellinger_sq(a: &TrajectoryDistribution, b: &TrajectoryDistribution) -> f64 {
    (1.0 - a.affinity(b)).clamp(0.0, 1.0)
}

/// Per-row normalized geometric mean of two stochastic policies; rows with
/// disjoint supports become uniform.
pub fn geometric_mixture_policy(pi: &Policy, pi0: &Policy) -> Result<Policy> {
    if pi.is_deterministic() || pi0.is_deterministic() {
        return invalid("geometric mixture expects stochastic policies");
    }
    if pi.horizon() != pi0.horizon() || pi.num_states() != pi0.num_states() || pi.num_actions() != pi0.num_actions() {
        return invalid("geometric mixture expects policies of the same shape");
    }
    let a_n = pi.num_actions();
    let table = (0..pi.horizon())
        .map(|h| {
            (0..pi.num_states())
                .map(|s| {
                    let g: Vec<f64> = (0..a_n).map(|a| (pi.prob(h, s, a) * pi0.prob(h, s, a)).sqrt()).collect();
                    let z: f64 = g.iter().sum();
                    if z > 0.0 {
                        g.into_iter().map(|x| x / z).collect()
                    } else {
                        vec![1.0 / a_n as f64; a_n]
                    }
                })
                .collect()
        })
        .collect();
    Policy::stochastic(table)
}
