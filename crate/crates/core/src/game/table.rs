use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{PolicyClass, Trajectory};
use crate::stopping::{StopTime, StoppingMode, StoppingRule};

/// Stop times `τ_{π0,{π}}(T_j)` for a list of comparators over a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct StopTable {
    /// Class ids, one per row.
    pub ids: Vec<usize>,
    /// `times[i][j]`, 1-based, `H + 1` for "never".
    pub times: Vec<Vec<u32>>,
    /// `H + 1`.
    pub never: u32,
}

impl StopTable {
    pub fn build(
        class: &PolicyClass,
        base: usize,
        ids: &[usize],
        test: &[Trajectory],
        mode: StoppingMode,
    ) -> Result<StopTable> {
        if test.is_empty() {
            return Err(Error::EmptyInput("test set is empty".into()));
        }
        class.get(base)?;
        for &id in ids {
            class.get(id)?;
        }
        if test.iter().any(|t| t.states.len() != class.horizon()) {
            return Err(Error::Validation("test trajectory length differs from the horizon".into()));
        }
        let times = ids
            .par_iter()
            .map(|&id| {
                let rule = StoppingRule::new(base, vec![id], mode);
                let bound = rule.bind(class).expect("ids checked above");
                test.iter().map(|t| bound.stop_time(&t.states) as u32).collect()
            })
            .collect();
        Ok(StopTable { ids: ids.to_vec(), times, never: class.horizon() as u32 + 1 })
    }

    pub fn n(&self) -> usize {
        self.times.first().map_or(0, Vec::len)
    }

    /// Pointwise minimum over the rows in `members` (row indices). The empty
    /// committee never stops.
    pub fn committee_times(&self, members: &[usize]) -> Vec<u32> {
        let mut out = vec![self.never; self.n()];
        for &m in members {
            for (o, &t) in out.iter_mut().zip(&self.times[m]) {
                *o = (*o).min(t);
            }
        }
        out
    }

    /// Fraction of coordinates where the committee stops strictly later than
    /// row `i`.
    pub fn late_fraction(&self, committee: &[u32], i: usize) -> f64 {
        late_count(committee, &self.times[i]) as f64 / self.n() as f64
    }

    /// Row index of a class id.
    pub fn row_of(&self, id: usize) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }
}

pub(crate) fn late_count(committee: &[u32], comparator: &[u32]) -> usize {
    committee.iter().zip(comparator).filter(|(c, x)| c > x).count()
}

/// `(1/n) Σ_j 1[τ_{π0,Φ}(T_j) > τ_{π0,{π}}(T_j)]`.
pub fn late_stop_fraction(
    base: usize,
    committee: &[usize],
    comparator: usize,
    test: &[Trajectory],
    mode: StoppingMode,
    class: &PolicyClass,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyInput("test set is empty".into()));
    }
    let team = StoppingRule::new(base, committee.to_vec(), mode);
    let solo = StoppingRule::new(base, vec![comparator], mode);
    let (team, solo) = (team.bind(class)?, solo.bind(class)?);
    let late = test.iter().filter(|t| team.stop_time(&t.states) > solo.stop_time(&t.states)).count();
    Ok(late as f64 / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::desk::desk_class;

    #[test]
    fn desk_late_stop() {
        let class = desk_class();
        let test = vec![Trajectory::unlabeled(vec![0, 1])];
        let fd = StoppingMode::FirstDisagreement;
        assert_eq!(late_stop_fraction(0, &[0], 1, &test, fd, &class).unwrap(), 1.0);
        assert_eq!(late_stop_fraction(0, &[1], 1, &test, fd, &class).unwrap(), 0.0);
        assert_eq!(late_stop_fraction(0, &[2], 0, &test, fd, &class).unwrap(), 0.0);
        assert!(late_stop_fraction(0, &[1], 1, &[], fd, &class).is_err());
    }

    #[test]
    fn table_matches_direct_computation() {
        let class = desk_class();
        let test = vec![Trajectory::unlabeled(vec![0, 1]), Trajectory::unlabeled(vec![0, 0])];
        let t = StopTable::build(&class, 0, &[0, 1, 2], &test, StoppingMode::FirstDisagreement).unwrap();
        assert_eq!(t.times, vec![vec![3, 3], vec![1, 1], vec![2, 2]]);
        let c = t.committee_times(&[2]);
        assert_eq!(t.late_fraction(&c, 1), 1.0);
        assert_eq!(t.late_fraction(&t.committee_times(&[]), 0), 0.0);
    }
}
