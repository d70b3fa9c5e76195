//! Tabular value and policy machinery.

mod solve;
mod regpi;

pub use regpi::{kl_aggregate, proposal_distribution, reg_pi, RegPiResult};
pub use solve::{greedy_policy, policy_evaluation, policy_iteration, policy_iteration_with_tol, PolicyIterationResult, DEFAULT_EVAL_TOL, DEFAULT_MAX_ITER};

use rand::Rng;

use crate::error::{Error, Result};

pub const ROW_SUM_TOL: f64 = 1e-9;

/// Per-state distribution over actions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// One-hot policy from an action per state.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Self {
        let n_states = actions.len();
        let mut probs = vec![0.0; n_states * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            debug_assert!(a < n_actions);
            probs[s * n_actions + a] = 1.0;
        }
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_states = rows.len();
        if n_states == 0 {
            return Err(Error::InvalidArgument("policy needs at least one state".into()));
        }
        let n_actions = rows[0].len();
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::InvalidArgument(format!(
                    "row {s} has {} entries, expected {n_actions}",
                    row.len()
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL || row.iter().any(|&p| p < 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "policy row {s} is not a distribution (sum {sum})"
                )));
            }
            probs.extend_from_slice(row);
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn row(&self, state: usize) -> &[f64] {
        &self.probs[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn set_row(&mut self, state: usize, row: &[f64]) {
        debug_assert_eq!(row.len(), self.n_actions);
        self.probs[state * self.n_actions..(state + 1) * self.n_actions].copy_from_slice(row);
    }

    #[inline]
    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.n_actions + action]
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let row = self.row(state);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        row.len() - 1
    }

    /// Lowest-index argmax per state.
    pub fn argmax_actions(&self) -> Vec<usize> {
        (0..self.n_states)
            .map(|s| argmax(self.row(s)))
            .collect()
    }

    /// One-hot projection onto the per-state argmax.
    pub fn argmax_policy(&self) -> Self {
        Self::deterministic(self.n_actions, &self.argmax_actions())
    }

    /// Expands an observation-indexed policy to the full state space by
    /// duplicating each row for both values of the hidden flag.
    pub fn expand_obs_to_states(&self) -> Self {
        let mut probs = Vec::with_capacity(self.probs.len() * 2);
        for s in 0..self.n_states {
            probs.extend_from_slice(self.row(s));
            probs.extend_from_slice(self.row(s));
        }
        Self {
            n_states: self.n_states * 2,
            n_actions: self.n_actions,
            probs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for s in 0..self.n_states {
            let sum: f64 = self.row(s).iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL || self.row(s).iter().any(|&p| p < 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "policy row {s} is not a distribution (sum {sum})"
                )));
            }
        }
        Ok(())
    }

    /// Writes the policy as a CSV matrix, one row per state, with a header
    /// naming the actions.
    pub fn write_csv(&self, path: &std::path::Path, action_names: &[&str]) -> Result<()> {
        if action_names.len() != self.n_actions {
            return Err(Error::InvalidArgument(format!(
                "{} action names for {} actions",
                action_names.len(),
                self.n_actions
            )));
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(action_names)?;
        for s in 0..self.n_states {
            let row: Vec<String> = self.row(s).iter().map(|p| format!("{p}")).collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &std::path::Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let n_actions = r.headers()?.len();
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record?;
            let row: std::result::Result<Vec<f64>, _> =
                record.iter().map(|f| f.parse::<f64>()).collect();
            let row = row.map_err(|e| Error::Format(format!("bad policy entry: {e}")))?;
            if row.len() != n_actions {
                return Err(Error::Format("ragged policy CSV".into()));
            }
            rows.push(row);
        }
        Self::from_rows(rows)
    }
}

/// Lowest-index argmax.
#[inline]
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Per-state scalar value.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction(pub Vec<f64>);

impl ValueFunction {
    pub fn zeros(n_states: usize) -> Self {
        Self(vec![0.0; n_states])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// epsilon-randomized behavior policy: `(1 - eps) * policy + eps * uniform`.
pub fn make_behavior_policy(optimal: &StochasticPolicy, epsilon: f64) -> Result<StochasticPolicy> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "epsilon = {epsilon} is not in [0, 1]"
        )));
    }
    let n_actions = optimal.n_actions();
    let uniform = epsilon / n_actions as f64;
    let mut out = optimal.clone();
    for s in 0..optimal.n_states() {
        let row: Vec<f64> = optimal
            .row(s)
            .iter()
            .map(|&p| (1.0 - epsilon) * p + uniform)
            .collect();
        out.set_row(s, &row);
    }
    Ok(out)
}
