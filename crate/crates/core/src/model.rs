//! Shared tabular-model types: sparse row-stochastic transition kernels and
//! the MDP view consumed by the solvers.

use crate::error::{Error, Result};

/// One categorical row as `(next_index, probability)` pairs sorted by index.
pub type SparseRow = Vec<(u32, f64)>;

/// Row-stochastic next-state distributions indexed by `(state, action)`.
///
/// Rows may be empty, which marks the pair as having no known transitions
/// (unvisited in an estimated model). Non-empty rows sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    n_from: usize,
    n_actions: usize,
    n_to: usize,
    rows: Vec<SparseRow>,
}

impl TransitionModel {
    pub fn empty(n_from: usize, n_actions: usize, n_to: usize) -> Self {
        Self {
            n_from,
            n_actions,
            n_to,
            rows: vec![Vec::new(); n_from * n_actions],
        }
    }

    pub fn n_from(&self) -> usize {
        self.n_from
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_to(&self) -> usize {
        self.n_to
    }

    #[inline]
    pub fn row_index(&self, state: usize, action: usize) -> usize {
        debug_assert!(state < self.n_from && action < self.n_actions);
        state * self.n_actions + action
    }

    #[inline]
    pub fn row(&self, state: usize, action: usize) -> &[(u32, f64)] {
        &self.rows[self.row_index(state, action)]
    }

    pub fn set_row(&mut self, state: usize, action: usize, mut row: SparseRow) {
        row.sort_unstable_by_key(|&(j, _)| j);
        let idx = self.row_index(state, action);
        self.rows[idx] = row;
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    /// Probability of `next` under `(state, action)`; 0 when absent.
    pub fn prob(&self, state: usize, action: usize, next: usize) -> f64 {
        let row = self.row(state, action);
        match row.binary_search_by_key(&(next as u32), |&(j, _)| j) {
            Ok(i) => row[i].1,
            Err(_) => 0.0,
        }
    }

    /// Checks that every non-empty row sums to one within `tol`.
    pub fn validate_stochastic(&self, tol: f64) -> Result<()> {
        for (idx, row) in self.rows.iter().enumerate() {
            if row.is_empty() {
                continue;
            }
            let sum: f64 = row.iter().map(|&(_, p)| p).sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::InvalidModel(format!(
                    "row (state {}, action {}) sums to {sum}",
                    idx / self.n_actions,
                    idx % self.n_actions
                )));
            }
            if row.iter().any(|&(_, p)| p < 0.0) {
                return Err(Error::InvalidModel(format!(
                    "row (state {}, action {}) has a negative entry",
                    idx / self.n_actions,
                    idx % self.n_actions
                )));
            }
        }
        Ok(())
    }

    /// Shannon entropy (nats) of the `(state, action)` row.
    pub fn row_entropy(&self, state: usize, action: usize) -> f64 {
        self.row(state, action)
            .iter()
            .filter(|&&(_, p)| p > 0.0)
            .map(|&(_, p)| -p * p.ln())
            .sum()
    }
}

/// A solvable tabular MDP.
///
/// Each `(state, action)` pair is in exactly one regime:
/// - terminal: the episode ends with `rewards[(s, a)]` and no continuation,
/// - unsupported: no transition data; taking it ends the episode with
///   `penalty` (the extrapolation guard for estimated models),
/// - otherwise: immediate reward plus the discounted expectation over the
///   transition row.
#[derive(Debug, Clone)]
pub struct MdpModel {
    pub n_states: usize,
    pub n_actions: usize,
    pub transitions: TransitionModel,
    /// Immediate reward per `(state, action)`, flattened as `s * A + a`.
    pub rewards: Vec<f64>,
    /// Episode ends at this pair with `rewards[(s, a)]`.
    pub terminal: Vec<bool>,
    /// Transition row is known for this pair.
    pub supported: Vec<bool>,
    /// Value assigned to unsupported, non-terminal pairs.
    pub penalty: f64,
}

impl MdpModel {
    /// Builds a fully supported MDP with no terminal pairs (the generic case
    /// used by small test problems).
    pub fn dense(transitions: TransitionModel, rewards: Vec<f64>) -> Result<Self> {
        let n_states = transitions.n_from();
        let n_actions = transitions.n_actions();
        if rewards.len() != n_states * n_actions {
            return Err(Error::InvalidModel(format!(
                "reward table has {} entries, expected {}",
                rewards.len(),
                n_states * n_actions
            )));
        }
        transitions.validate_stochastic(1e-9)?;
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            terminal: vec![false; n_states * n_actions],
            supported: vec![true; n_states * n_actions],
            penalty: 0.0,
        })
    }

    #[inline]
    pub fn pair(&self, state: usize, action: usize) -> usize {
        state * self.n_actions + action
    }

    /// A pair is available when it either terminates the episode or has a
    /// known transition row.
    #[inline]
    pub fn available(&self, state: usize, action: usize) -> bool {
        let i = self.pair(state, action);
        self.terminal[i] || self.supported[i]
    }

    /// Action value under the value function `v`.
    #[inline]
    pub fn q_value(&self, state: usize, action: usize, v: &[f64], gamma: f64) -> f64 {
        let i = self.pair(state, action);
        if self.terminal[i] {
            return self.rewards[i];
        }
        if !self.supported[i] {
            return self.penalty;
        }
        let mut expect = 0.0;
        for &(next, p) in self.transitions.row(state, action) {
            expect += p * v[next as usize];
        }
        self.rewards[i] + gamma * expect
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_chain() -> MdpModel {
        // s0 -> s1 with reward 1; s1 absorbing with reward 0.
        let mut t = TransitionModel::empty(2, 1, 2);
        t.set_row(0, 0, vec![(1, 1.0)]);
        t.set_row(1, 0, vec![(1, 1.0)]);
        MdpModel::dense(t, vec![1.0, 0.0]).unwrap()
    }

    #[test]
    fn q_value_discounts_continuation() {
        let mdp = two_state_chain();
        let v = vec![5.0, 2.0];
        assert_eq!(mdp.q_value(0, 0, &v, 0.5), 1.0 + 0.5 * 2.0);
        assert_eq!(mdp.q_value(1, 0, &v, 0.5), 0.5 * 2.0);
    }

    #[test]
    fn terminal_and_penalty_regimes() {
        let mut mdp = two_state_chain();
        mdp.terminal[0] = true;
        assert_eq!(mdp.q_value(0, 0, &[9.0, 9.0], 0.9), 1.0);
        mdp.terminal[0] = false;
        mdp.supported[0] = false;
        mdp.penalty = -1.0;
        assert_eq!(mdp.q_value(0, 0, &[9.0, 9.0], 0.9), -1.0);
    }

    #[test]
    fn stochastic_validation_rejects_bad_rows() {
        let mut t = TransitionModel::empty(1, 1, 2);
        t.set_row(0, 0, vec![(0, 0.6), (1, 0.6)]);
        assert!(t.validate_stochastic(1e-9).is_err());
    }

    #[test]
    fn prob_lookup_handles_missing_entries() {
        let mut t = TransitionModel::empty(1, 1, 3);
        t.set_row(0, 0, vec![(0, 0.25), (2, 0.75)]);
        assert_eq!(t.prob(0, 0, 0), 0.25);
        assert_eq!(t.prob(0, 0, 1), 0.0);
        assert_eq!(t.prob(0, 0, 2), 0.75);
    }
}
