use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use super::model::{check_row, TabularMdp};
use super::trajectory::Trajectory;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Deterministic,
    Stochastic,
}

#[derive(Debug, Clone, PartialEq)]
enum Table {
    /// `[h][s]` action index.
    Deterministic(Vec<Vec<usize>>),
    /// `[h][s][a]` probability row.
    Stochastic(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum PolicyFile {
    Deterministic { num_actions: usize, table: Vec<Vec<usize>> },
    Stochastic { num_actions: usize, table: Vec<Vec<Vec<f64>>> },
}

/// Tabular nonstationary policy indexed by 0-based step and state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyFile", into = "PolicyFile")]
pub struct Policy {
    num_actions: usize,
    table: Table,
}

impl TryFrom<PolicyFile> for Policy {
    type Error = Error;
    fn try_from(f: PolicyFile) -> Result<Self> {
        match f {
            PolicyFile::Deterministic { num_actions, table } => Policy::deterministic(num_actions, table),
            PolicyFile::Stochastic { num_actions, table } => {
                let p = Policy::stochastic(table)?;
                if p.num_actions != num_actions {
                    return invalid("declared num_actions disagrees with the table");
                }
                Ok(p)
            }
        }
    }
}

impl From<Policy> for PolicyFile {
    fn from(p: Policy) -> Self {
        match p.table {
            Table::Deterministic(table) => PolicyFile::Deterministic { num_actions: p.num_actions, table },
            Table::Stochastic(table) => PolicyFile::Stochastic { num_actions: p.num_actions, table },
        }
    }
}

impl Policy {
    pub fn deterministic(num_actions: usize, table: Vec<Vec<usize>>) -> Result<Self> {
        if num_actions == 0 || table.is_empty() || table[0].is_empty() {
            return invalid("policy table must be nonempty");
        }
        let s_n = table[0].len();
        if table.iter().any(|r| r.len() != s_n) {
            return invalid("ragged deterministic table");
        }
        if table.iter().flatten().any(|&a| a >= num_actions) {
            return invalid("deterministic action out of range");
        }
        Ok(Policy { num_actions, table: Table::Deterministic(table) })
    }

    pub fn stochastic(table: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if table.is_empty() || table[0].is_empty() || table[0][0].is_empty() {
            return invalid("policy table must be nonempty");
        }
        let s_n = table[0].len();
        let a_n = table[0][0].len();
        for (h, step) in table.iter().enumerate() {
            if step.len() != s_n {
                return invalid("ragged stochastic table");
            }
            for (s, row) in step.iter().enumerate() {
                if row.len() != a_n {
                    return invalid("ragged stochastic table");
                }
                check_row(row, &format!("policy[{h}][{s}]"))?;
            }
        }
        Ok(Policy { num_actions: a_n, table: Table::Stochastic(table) })
    }

    /// Same action at every step and state.
    pub fn constant(horizon: usize, num_states: usize, num_actions: usize, action: usize) -> Result<Self> {
        Policy::deterministic(num_actions, vec![vec![action; num_states]; horizon])
    }

    /// Same row at every step and state.
    pub fn uniform_row(horizon: usize, num_states: usize, row: Vec<f64>) -> Result<Self> {
        Policy::stochastic(vec![vec![row; num_states]; horizon])
    }

    pub fn kind(&self) -> PolicyKind {
        match self.table {
            Table::Deterministic(_) => PolicyKind::Deterministic,
            Table::Stochastic(_) => PolicyKind::Stochastic,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.kind() == PolicyKind::Deterministic
    }

    pub fn horizon(&self) -> usize {
        match &self.table {
            Table::Deterministic(t) => t.len(),
            Table::Stochastic(t) => t.len(),
        }
    }

    pub fn num_states(&self) -> usize {
        match &self.table {
            Table::Deterministic(t) => t[0].len(),
            Table::Stochastic(t) => t[0].len(),
        }
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Action index for deterministic policies.
    pub fn action(&self, h: usize, s: usize) -> Option<usize> {
        match &self.table {
            Table::Deterministic(t) => Some(t[h][s]),
            Table::Stochastic(_) => None,
        }
    }

    pub fn prob(&self, h: usize, s: usize, a: usize) -> f64 {
        match &self.table {
            Table::Deterministic(t) => f64::from(u8::from(t[h][s] == a)),
            Table::Stochastic(t) => t[h][s][a],
        }
    }

    /// Action distribution at `(h, s)`; one-hot for deterministic policies.
    pub fn row(&self, h: usize, s: usize) -> Cow<'_, [f64]> {
        match &self.table {
            Table::Deterministic(t) => {
                let mut r = vec![0.0; self.num_actions];
                r[t[h][s]] = 1.0;
                Cow::Owned(r)
            }
            Table::Stochastic(t) => Cow::Borrowed(&t[h][s]),
        }
    }

    /// One-hot stochastic form; identity on stochastic policies.
    pub fn to_stochastic(&self) -> Policy {
        match &self.table {
            Table::Stochastic(_) => self.clone(),
            Table::Deterministic(t) => Policy {
                num_actions: self.num_actions,
                table: Table::Stochastic(
                    t.iter()
                        .map(|step| {
                            step.iter()
                                .map(|&a| {
                                    let mut r = vec![0.0; self.num_actions];
                                    r[a] = 1.0;
                                    r
                                })
                                .collect()
                        })
                        .collect(),
                ),
            },
        }
    }

    /// Whether the two policies act differently at `(h, s)`. For stochastic
    /// rows this is inequality of the rows.
    pub fn disagrees(&self, other: &Policy, h: usize, s: usize) -> bool {
        match (&self.table, &other.table) {
            (Table::Deterministic(a), Table::Deterministic(b)) => a[h][s] != b[h][s],
            _ => self.row(h, s) != other.row(h, s),
        }
    }

    /// Squared Hellinger distance between the action rows at `(h, s)`.
    pub fn step_hellinger_sq(&self, other: &Policy, h: usize, s: usize) -> f64 {
        match (&self.table, &other.table) {
            (Table::Deterministic(a), Table::Deterministic(b)) => f64::from(u8::from(a[h][s] != b[h][s])),
            _ => super::hellinger::hellinger_sq_unchecked(&self.row(h, s), &other.row(h, s)),
        }
    }

    /// Samples an action at `(h, s)` by inverse CDF on the uniform `u`.
    pub fn sample_action(&self, h: usize, s: usize, u: f64) -> usize {
        match &self.table {
            Table::Deterministic(t) => t[h][s],
            Table::Stochastic(t) => crate::rng::categorical(&t[h][s], u),
        }
    }

    pub fn check_shape(&self, mdp: &TabularMdp) -> Result<()> {
        if self.horizon() != mdp.horizon()
            || self.num_states() != mdp.num_states()
            || self.num_actions() != mdp.num_actions()
        {
            return Err(Error::Shape(format!(
                "policy is (H={}, S={}, A={}) but the MDP is (H={}, S={}, A={})",
                self.horizon(),
                self.num_states(),
                self.num_actions(),
                mdp.horizon(),
                mdp.num_states(),
                mdp.num_actions()
            )));
        }
        Ok(())
    }

    fn same_shape(&self, other: &Policy) -> bool {
        self.horizon() == other.horizon()
            && self.num_states() == other.num_states()
            && self.num_actions() == other.num_actions()
    }
}

/// Mean negative log-likelihood of the recorded actions. Returns
/// `f64::INFINITY` when some recorded action has probability zero.
pub fn log_loss(policy: &Policy, dataset: &[Trajectory]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("log-loss needs at least one trajectory".into()));
    }
    let mut total = 0.0;
    for traj in dataset {
        let actions = traj.actions.as_ref().ok_or(Error::MissingActions)?;
        for (h, (&s, &a)) in traj.states.iter().zip(actions).enumerate() {
            let p = policy.prob(h, s, a);
            if p <= 0.0 {
                return Ok(f64::INFINITY);
            }
            total -= p.ln();
        }
    }
    Ok(total / dataset.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ClassFile {
    Deterministic { num_actions: usize, tables: Vec<Vec<Vec<usize>>> },
    Stochastic { num_actions: usize, tables: Vec<Vec<Vec<Vec<f64>>>> },
}

/// Finite ordered policy class; ids are positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClassFile", into = "ClassFile")]
pub struct PolicyClass {
    policies: Vec<Policy>,
}

impl TryFrom<ClassFile> for PolicyClass {
    type Error = Error;
    fn try_from(f: ClassFile) -> Result<Self> {
        let (num_actions, policies) = match f {
            ClassFile::Deterministic { num_actions, tables } => (
                num_actions,
                tables.into_iter().map(|t| Policy::deterministic(num_actions, t)).collect::<Result<Vec<_>>>()?,
            ),
            ClassFile::Stochastic { num_actions, tables } => {
                (num_actions, tables.into_iter().map(Policy::stochastic).collect::<Result<Vec<_>>>()?)
            }
        };
        if policies.iter().any(|p| p.num_actions() != num_actions) {
            return invalid("declared num_actions disagrees with a table");
        }
        PolicyClass::new(policies)
    }
}

impl From<PolicyClass> for ClassFile {
    fn from(c: PolicyClass) -> Self {
        let num_actions = c.policies[0].num_actions;
        if c.policies[0].is_deterministic() {
            ClassFile::Deterministic {
                num_actions,
                tables: c
                    .policies
                    .into_iter()
                    .map(|p| match p.table {
                        Table::Deterministic(t) => t,
                        Table::Stochastic(_) => unreachable!("class kinds are uniform"),
                    })
                    .collect(),
            }
        } else {
            ClassFile::Stochastic {
                num_actions,
                tables: c
                    .policies
                    .into_iter()
                    .map(|p| match p.table {
                        Table::Stochastic(t) => t,
                        Table::Deterministic(_) => unreachable!("class kinds are uniform"),
                    })
                    .collect(),
            }
        }
    }
}

impl PolicyClass {
    pub fn new(policies: Vec<Policy>) -> Result<Self> {
        let Some(first) = policies.first() else {
            return Err(Error::EmptyInput("policy class must be nonempty".into()));
        };
        if policies.iter().any(|p| p.kind() != first.kind() || !p.same_shape(first)) {
            return invalid("policies in a class must share kind and shape");
        }
        Ok(PolicyClass { policies })
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, id: usize) -> Result<&Policy> {
        self.policies
            .get(id)
            .ok_or_else(|| Error::Config(format!("policy id {id} out of range for a class of {}", self.len())))
    }

    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    pub fn kind(&self) -> PolicyKind {
        self.policies[0].kind()
    }

    pub fn is_deterministic(&self) -> bool {
        self.policies[0].is_deterministic()
    }

    pub fn horizon(&self) -> usize {
        self.policies[0].horizon()
    }

    pub fn num_states(&self) -> usize {
        self.policies[0].num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.policies[0].num_actions()
    }

    pub fn log_size(&self) -> f64 {
        (self.len() as f64).ln()
    }

    /// One-hot embedding of every member.
    pub fn to_stochastic(&self) -> PolicyClass {
        PolicyClass { policies: self.policies.iter().map(Policy::to_stochastic).collect() }
    }

    pub fn check_shape(&self, mdp: &TabularMdp) -> Result<()> {
        self.policies[0].check_shape(mdp)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("class serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(states: Vec<usize>, actions: Vec<usize>) -> Trajectory {
        Trajectory { states, actions: Some(actions) }
    }

    #[test]
    fn log_loss_examples() {
        let data = vec![labeled(vec![0, 1], vec![1, 1]), labeled(vec![0, 0], vec![0, 1])];
        let uniform = Policy::uniform_row(2, 2, vec![0.5, 0.5]).unwrap();
        assert!((log_loss(&uniform, &data).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);
        let r = Policy::constant(2, 2, 2, 1).unwrap();
        assert_eq!(log_loss(&r, &data[..1]).unwrap(), 0.0);
        assert_eq!(log_loss(&r, &data).unwrap(), f64::INFINITY);
        assert!(matches!(log_loss(&r, &[]), Err(Error::EmptyInput(_))));
        let unlabeled = vec![Trajectory { states: vec![0, 1], actions: None }];
        assert!(matches!(log_loss(&r, &unlabeled), Err(Error::MissingActions)));
    }

    #[test]
    fn one_hot_matches_disagreement() {
        let a = Policy::deterministic(2, vec![vec![0, 1], vec![1, 1]]).unwrap();
        let b = Policy::deterministic(2, vec![vec![1, 1], vec![1, 0]]).unwrap();
        let (sa, sb) = (a.to_stochastic(), b.to_stochastic());
        for h in 0..2 {
            for s in 0..2 {
                assert_eq!(a.step_hellinger_sq(&b, h, s), sa.step_hellinger_sq(&sb, h, s));
                assert_eq!(a.disagrees(&b, h, s), sa.disagrees(&sb, h, s));
            }
        }
    }

    #[test]
    fn class_json_roundtrip_and_validation() {
        let a = Policy::constant(2, 2, 2, 0).unwrap();
        let b = Policy::constant(2, 2, 2, 1).unwrap();
        let c = PolicyClass::new(vec![a.clone(), b]).unwrap();
        assert_eq!(PolicyClass::from_json(&c.to_json()).unwrap(), c);
        assert!(PolicyClass::new(vec![a.clone(), a.to_stochastic()]).is_err());
        assert!(PolicyClass::new(vec![]).is_err());
        let p: Policy = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(p, a);
        assert!(serde_json::from_str::<Policy>(r#"{"kind":"deterministic","num_actions":2,"table":[[2]]}"#).is_err());
    }
}
