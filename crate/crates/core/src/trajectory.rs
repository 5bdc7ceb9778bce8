use serde::{Deserialize, Serialize};

use crate::error::{MixError, Result};

/// A finite observed path `X_1, ..., X_m` over the state space `{0, ..., n-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    states: Vec<usize>,
    n: usize,
}

impl Trajectory {
    /// Builds a trajectory over a declared state space of size `n`.
    pub fn new(states: Vec<usize>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(MixError::InvalidArgument(
                "state space must contain at least one state".into(),
            ));
        }
        if let Some((t, &x)) = states.iter().enumerate().find(|(_, &x)| x >= n) {
            return Err(MixError::InvalidArgument(format!(
                "state {x} at position {t} is outside the declared state space of size {n}"
            )));
        }
        Ok(Self { states, n })
    }

    /// Builds a trajectory whose state space is inferred as `max + 1`.
    pub fn from_states(states: Vec<usize>) -> Self {
        let n = states.iter().copied().max().map_or(1, |x| x + 1);
        Self { states, n }
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    /// Trajectory length `m`.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Declared number of states.
    pub fn n(&self) -> usize {
        self.n
    }

    /// The `k`-skipped subsequence `X_1, X_{1+k}, ..., X_{1+floor((m-1)/k) k}`.
    pub fn skipped(&self, k: usize) -> Result<Trajectory> {
        if k == 0 {
            return Err(MixError::InvalidArgument("skip rate must be >= 1".into()));
        }
        Ok(Self {
            states: self.states.iter().step_by(k).copied().collect(),
            n: self.n,
        })
    }

    pub(crate) fn require_len(&self, needed: usize) -> Result<()> {
        if self.len() < needed {
            Err(MixError::TrajectoryTooShort {
                len: self.len(),
                needed,
            })
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skipped_subsequence_keeps_the_first_state() {
        let tr = Trajectory::from_states(vec![0, 1, 0, 1, 1]);
        assert_eq!(tr.skipped(2).unwrap().states(), &[0, 0, 1]);
        assert_eq!(tr.skipped(3).unwrap().states(), &[0, 1]);
        assert_eq!(tr.skipped(1).unwrap(), tr);
    }

    #[test]
    fn rejects_out_of_range_states() {
        assert!(Trajectory::new(vec![0, 3], 3).is_err());
        assert!(Trajectory::new(vec![0, 2], 3).is_ok());
        assert!(Trajectory::new(vec![], 0).is_err());
    }

    #[test]
    fn empty_trajectory_is_representable() {
        let tr = Trajectory::from_states(vec![]);
        assert_eq!(tr.n(), 1);
        assert!(matches!(
            tr.require_len(2),
            Err(MixError::TrajectoryTooShort { len: 0, needed: 2 })
        ));
    }
}
