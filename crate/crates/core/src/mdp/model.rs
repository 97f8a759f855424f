use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub(crate) const ROW_TOL: f64 = 1e-9;

pub(crate) fn check_row(row: &[f64], what: &str) -> Result<()> {
    if row.is_empty() {
        return invalid(format!("{what}: empty probability row"));
    }
    let mut sum = 0.0;
    for &p in row {
        if !p.is_finite() || p < 0.0 {
            return invalid(format!("{what}: entry {p} is not a nonnegative number"));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > ROW_TOL {
        return invalid(format!("{what}: row sums to {sum}"));
    }
    Ok(())
}

/// On-disk layout of an MDP; validated on conversion.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpFile {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial_dist: Vec<f64>,
    transitions: Vec<Vec<Vec<Vec<f64>>>>,
    costs: Vec<Vec<Vec<f64>>>,
    cost_cap: f64,
}

/// Finite-horizon tabular MDP.
///
/// Steps are 0-based internally: `transitions[h]` moves from step `h` to
/// step `h + 1` for `h < H - 1`, and `costs[h]` is charged at step `h < H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpFile", into = "MdpFile")]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial_dist: Vec<f64>,
    transitions: Vec<Vec<Vec<Vec<f64>>>>,
    costs: Vec<Vec<Vec<f64>>>,
    cost_cap: f64,
}

impl TryFrom<MdpFile> for TabularMdp {
    type Error = Error;
    fn try_from(f: MdpFile) -> Result<Self> {
        TabularMdp::new(f.initial_dist, f.transitions, f.costs, f.cost_cap).and_then(|m| {
            if m.num_states != f.num_states || m.num_actions != f.num_actions || m.horizon != f.horizon {
                invalid("declared sizes disagree with the tables")
            } else {
                Ok(m)
            }
        })
    }
}

impl From<TabularMdp> for MdpFile {
    fn from(m: TabularMdp) -> Self {
        MdpFile {
            num_states: m.num_states,
            num_actions: m.num_actions,
            horizon: m.horizon,
            initial_dist: m.initial_dist,
            transitions: m.transitions,
            costs: m.costs,
            cost_cap: m.cost_cap,
        }
    }
}

impl TabularMdp {
    /// Builds and validates an MDP. Sizes are inferred from `costs`
    /// (`[H][S][A]`); `transitions` must be `[H-1][S][A][S]`.
    pub fn new(
        initial_dist: Vec<f64>,
        transitions: Vec<Vec<Vec<Vec<f64>>>>,
        costs: Vec<Vec<Vec<f64>>>,
        cost_cap: f64,
    ) -> Result<Self> {
        let horizon = costs.len();
        if horizon == 0 {
            return invalid("horizon must be positive");
        }
        let num_states = initial_dist.len();
        if num_states == 0 {
            return invalid("num_states must be positive");
        }
        let num_actions = costs[0].first().map_or(0, |r| r.len());
        if num_actions == 0 {
            return invalid("num_actions must be positive");
        }
        check_row(&initial_dist, "initial_dist")?;
        for (h, step) in costs.iter().enumerate() {
            if step.len() != num_states || step.iter().any(|r| r.len() != num_actions) {
                return invalid(format!("costs[{h}] has the wrong shape"));
            }
            if step.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
                return invalid(format!("costs[{h}] has an entry outside [0,1]"));
            }
        }
        if transitions.len() != horizon - 1 {
            return invalid(format!(
                "expected {} transition kernels, found {}",
                horizon - 1,
                transitions.len()
            ));
        }
        for (h, step) in transitions.iter().enumerate() {
            if step.len() != num_states || step.iter().any(|r| r.len() != num_actions) {
                return invalid(format!("transitions[{h}] has the wrong shape"));
            }
            for (s, per_action) in step.iter().enumerate() {
                for (a, row) in per_action.iter().enumerate() {
                    if row.len() != num_states {
                        return invalid(format!("transitions[{h}][{s}][{a}] has the wrong length"));
                    }
                    check_row(row, &format!("transitions[{h}][{s}][{a}]"))?;
                }
            }
        }
        if !cost_cap.is_finite() {
            return invalid("cost_cap must be finite");
        }
        let mdp = TabularMdp { num_states, num_actions, horizon, initial_dist, transitions, costs, cost_cap };
        let worst = mdp.max_trajectory_cost();
        if cost_cap + 1e-12 < worst {
            return invalid(format!("cost_cap {cost_cap} is below the largest achievable cost {worst}"));
        }
        Ok(mdp)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn cost_cap(&self) -> f64 {
        self.cost_cap
    }

    /// Next-state row for step `h < H - 1`.
    pub fn transition(&self, h: usize, s: usize, a: usize) -> &[f64] {
        &self.transitions[h][s][a]
    }

    pub fn cost(&self, h: usize, s: usize, a: usize) -> f64 {
        self.costs[h][s][a]
    }

    pub fn costs(&self) -> &[Vec<Vec<f64>>] {
        &self.costs
    }

    pub fn transitions(&self) -> &[Vec<Vec<Vec<f64>>>] {
        &self.transitions
    }

    /// Largest total cost over trajectories with positive probability under
    /// some policy, by dynamic programming over reachable successors.
    pub fn max_trajectory_cost(&self) -> f64 {
        let (s_n, a_n, h_n) = (self.num_states, self.num_actions, self.horizon);
        let mut next = vec![0.0f64; s_n];
        for h in (0..h_n).rev() {
            let mut cur = vec![0.0f64; s_n];
            for (s, v) in cur.iter_mut().enumerate() {
                let mut best = 0.0f64;
                for a in 0..a_n {
                    let tail = if h + 1 < h_n {
                        self.transitions[h][s][a]
                            .iter()
                            .zip(&next)
                            .filter(|(p, _)| **p > 0.0)
                            .map(|(_, w)| *w)
                            .fold(0.0, f64::max)
                    } else {
                        0.0
                    };
                    best = best.max(self.costs[h][s][a] + tail);
                }
                *v = best;
            }
            next = cur;
        }
        self.initial_dist
            .iter()
            .zip(&next)
            .filter(|(p, _)| **p > 0.0)
            .map(|(_, w)| *w)
            .fold(0.0, f64::max)
    }

    /// Copy with a different cost table (same shape).
    pub fn with_costs(&self, costs: Vec<Vec<Vec<f64>>>, cost_cap: f64) -> Result<Self> {
        TabularMdp::new(self.initial_dist.clone(), self.transitions.clone(), costs, cost_cap)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mdp serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TabularMdp {
        TabularMdp::new(
            vec![1.0, 0.0],
            vec![vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![0.0, 1.0], vec![0.0, 1.0]]]],
            vec![vec![vec![1.0, 1.0], vec![0.0, 0.0]]; 2],
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn infers_sizes() {
        let m = tiny();
        assert_eq!((m.num_states(), m.num_actions(), m.horizon()), (2, 2, 2));
        assert_eq!(m.max_trajectory_cost(), 2.0);
    }

    #[test]
    fn rejects_bad_rows_and_caps() {
        assert!(TabularMdp::new(vec![0.5, 0.4], vec![], vec![vec![vec![0.0]; 2]], 1.0).is_err());
        assert!(TabularMdp::new(vec![1.0], vec![], vec![vec![vec![1.5]]], 2.0).is_err());
        let m = tiny();
        assert!(m.with_costs(m.costs().to_vec(), 1.5).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let m = tiny();
        let back = TabularMdp::from_json(&m.to_json()).unwrap();
        assert_eq!(m, back);
        let text = m.to_json().replace("\"horizon\": 2", "\"horizon\": 3");
        assert!(TabularMdp::from_json(&text).is_err());
    }
}
