//! Transfer machinery: empirical transition estimation with support
//! tracking, counterfactual augmentation of target statistics, the CF-PI
//! loop and the baseline methods.

mod cfpi;
mod baselines;

pub use baselines::{behavior_clone, run_baseline, BaselineInputs, BaselineKind, ALL_BASELINES};
pub use cfpi::{cf_pi, CfPiResult, CfptConfig};

use crate::error::{Error, Result};
use crate::model::{MdpModel, TransitionModel};
use crate::sim::{
    decode_obs, decode_state, reward_and_termination, Action, Trajectory, N_ACTIONS, N_OBS,
    N_STATES,
};

/// Index space an estimated model is keyed by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexSpace {
    /// 720 observation indices (diabetes hidden).
    Observation,
    /// 1440 full-state indices (diabetes visible).
    FullState,
}

impl IndexSpace {
    pub fn n_states(&self) -> usize {
        match self {
            IndexSpace::Observation => N_OBS,
            IndexSpace::FullState => N_STATES,
        }
    }
}

/// Maximum-likelihood transition estimate with per-pair support flags and
/// raw visit counts. Pairs never seen in the data are unsupported and are
/// never silently queried.
#[derive(Debug, Clone)]
pub struct EstimatedModel {
    pub space: IndexSpace,
    pub transitions: TransitionModel,
    support: Vec<bool>,
    /// Visit count per `(state, action)` pair.
    visits: Vec<u64>,
}

impl EstimatedModel {
    #[inline]
    pub fn supported(&self, state: usize, action: usize) -> bool {
        self.support[state * self.transitions.n_actions() + action]
    }

    #[inline]
    pub fn visits(&self, state: usize, action: usize) -> u64 {
        self.visits[state * self.transitions.n_actions() + action]
    }

    #[inline]
    pub fn row(&self, state: usize, action: usize) -> &[(u32, f64)] {
        self.transitions.row(state, action)
    }

    /// Probability of `next` under `(state, action)`; 0 when absent.
    #[inline]
    pub fn prob(&self, state: usize, action: usize, next: usize) -> f64 {
        self.transitions.prob(state, action, next)
    }

    pub fn n_supported_pairs(&self) -> usize {
        self.support.iter().filter(|&&s| s).count()
    }

    /// Attaches the simulator's discharge/death rules to produce a solvable
    /// MDP. Unsupported non-terminal pairs earn `penalty` (extrapolation
    /// guard).
    pub fn to_mdp(&self, penalty: f64) -> Result<MdpModel> {
        let n_states = self.space.n_states();
        let mut rewards = vec![0.0; n_states * N_ACTIONS];
        let mut terminal = vec![false; n_states * N_ACTIONS];
        for s in 0..n_states {
            let patient = match self.space {
                IndexSpace::Observation => decode_obs(s)?,
                IndexSpace::FullState => decode_state(s)?,
            };
            for a in 0..N_ACTIONS {
                let (r, outcome) = reward_and_termination(&patient, Action::from_index(a)?);
                let i = s * N_ACTIONS + a;
                rewards[i] = r;
                terminal[i] = outcome.is_some();
            }
        }
        Ok(MdpModel {
            n_states,
            n_actions: N_ACTIONS,
            transitions: self.transitions.clone(),
            rewards,
            terminal,
            supported: self.support.clone(),
            penalty,
        })
    }

    /// Writes the model as sparse `(state, action, next_state, prob)` rows.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let (from_col, to_col) = match self.space {
            IndexSpace::Observation => ("obs", "next_obs"),
            IndexSpace::FullState => ("state", "next_state"),
        };
        w.write_record([from_col, "action", to_col, "prob"])?;
        for s in 0..self.space.n_states() {
            for a in 0..N_ACTIONS {
                for &(next, p) in self.row(s, a) {
                    w.write_record([
                        s.to_string(),
                        a.to_string(),
                        next.to_string(),
                        format!("{p}"),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Maximum-likelihood rows from the executed transitions in `trajectories`.
pub fn estimate_from_trajectories(
    trajectories: &[Trajectory],
    space: IndexSpace,
) -> Result<EstimatedModel> {
    if trajectories.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = space.n_states();
    let mut counts: Vec<std::collections::BTreeMap<u32, u64>> =
        vec![std::collections::BTreeMap::new(); n * N_ACTIONS];
    let mut visits = vec![0u64; n * N_ACTIONS];
    for traj in trajectories {
        match space {
            IndexSpace::Observation => {
                for (s, a, next) in traj.obs_transitions() {
                    let idx = s as usize * N_ACTIONS + a as usize;
                    *counts[idx].entry(next).or_insert(0u64) += 1;
                    visits[idx] += 1;
                }
            }
            IndexSpace::FullState => {
                for (s, a, next) in traj.transitions() {
                    let idx = s as usize * N_ACTIONS + a as usize;
                    *counts[idx].entry(next).or_insert(0u64) += 1;
                    visits[idx] += 1;
                }
            }
        }
    }
    let mut transitions = TransitionModel::empty(n, N_ACTIONS, n);
    let mut support = vec![false; n * N_ACTIONS];
    for s in 0..n {
        for a in 0..N_ACTIONS {
            let idx = s * N_ACTIONS + a;
            if visits[idx] == 0 {
                continue;
            }
            support[idx] = true;
            let total = visits[idx] as f64;
            let row: Vec<(u32, f64)> = counts[idx]
                .iter()
                .map(|(&next, &c)| (next, c as f64 / total))
                .collect();
            transitions.set_row(s, a, row);
        }
    }
    Ok(EstimatedModel {
        space,
        transitions,
        support,
        visits,
    })
}

/// Observation-space maximum-likelihood estimate of a dataset.
pub fn estimate_transitions(dataset: &crate::sim::Dataset) -> Result<EstimatedModel> {
    estimate_from_trajectories(&dataset.trajectories, IndexSpace::Observation)
}

/// Per-row convex combination `eta * P_T + (1 - eta) * P_hat`, renormalized.
///
/// Rows supported in only one input are copied verbatim, so the output
/// support is the union of the input supports. The endpoint weights copy the
/// corresponding input bitwise.
pub fn augment_transitions(
    p_target: &EstimatedModel,
    p_hat: &EstimatedModel,
    eta: f64,
) -> Result<EstimatedModel> {
    if p_target.space != p_hat.space {
        return Err(Error::InvalidArgument(
            "augmentation inputs live in different index spaces".into(),
        ));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidArgument(format!(
            "eta = {eta} is not in [0, 1]"
        )));
    }
    let n = p_target.space.n_states();
    let mut transitions = TransitionModel::empty(n, N_ACTIONS, n);
    let mut support = vec![false; n * N_ACTIONS];
    let mut visits = vec![0u64; n * N_ACTIONS];
    for s in 0..n {
        for a in 0..N_ACTIONS {
            let idx = s * N_ACTIONS + a;
            let in_t = p_target.supported(s, a);
            let in_h = p_hat.supported(s, a);
            visits[idx] = p_target.visits(s, a) + p_hat.visits(s, a);
            let row = match (in_t, in_h) {
                (false, false) => continue,
                (true, false) => p_target.row(s, a).to_vec(),
                (false, true) => p_hat.row(s, a).to_vec(),
                (true, true) => {
                    if eta == 1.0 {
                        p_target.row(s, a).to_vec()
                    } else if eta == 0.0 {
                        p_hat.row(s, a).to_vec()
                    } else {
                        blend_rows(p_target.row(s, a), p_hat.row(s, a), eta)
                    }
                }
            };
            support[idx] = true;
            transitions.set_row(s, a, row);
        }
    }
    Ok(EstimatedModel {
        space: p_target.space,
        transitions,
        support,
        visits,
    })
}

fn blend_rows(a: &[(u32, f64)], b: &[(u32, f64)], eta: f64) -> Vec<(u32, f64)> {
    let mut out: Vec<(u32, f64)> = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let (next, p) = match (a.get(i), b.get(j)) {
            (Some(&(ja, pa)), Some(&(jb, pb))) if ja == jb => {
                i += 1;
                j += 1;
                (ja, eta * pa + (1.0 - eta) * pb)
            }
            (Some(&(ja, pa)), Some(&(jb, _))) if ja < jb => {
                i += 1;
                (ja, eta * pa)
            }
            (Some(_), Some(&(jb, pb))) => {
                j += 1;
                (jb, (1.0 - eta) * pb)
            }
            (Some(&(ja, pa)), None) => {
                i += 1;
                (ja, eta * pa)
            }
            (None, Some(&(jb, pb))) => {
                j += 1;
                (jb, (1.0 - eta) * pb)
            }
            (None, None) => unreachable!(),
        };
        if p > 0.0 {
            out.push((next, p));
        }
    }
    let z: f64 = out.iter().map(|&(_, p)| p).sum();
    for e in &mut out {
        e.1 /= z;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Step, TerminalOutcome};

    fn traj(steps: Vec<(u32, u8)>, next_of_last: u32) -> Trajectory {
        // censored trajectory visiting the given (state, action) pairs
        let steps: Vec<Step> = steps
            .into_iter()
            .map(|(state, action)| Step {
                state,
                obs: (state >> 1),
                action,
                reward: 0.0,
            })
            .collect();
        Trajectory {
            id: 0,
            diabetic: false,
            steps,
            outcome: TerminalOutcome::Censored,
            final_state: Some(next_of_last),
        }
    }

    #[test]
    fn single_transition_estimate() {
        let t = traj(vec![(10, 3)], 24);
        let est = estimate_from_trajectories(&[t], IndexSpace::Observation).unwrap();
        assert!(est.supported(5, 3));
        assert_eq!(est.row(5, 3), &[(12, 1.0)]);
        assert_eq!(est.n_supported_pairs(), 1);
        assert_eq!(est.visits(5, 3), 1);
    }

    #[test]
    fn counts_three_to_one() {
        let trajs: Vec<Trajectory> = vec![
            traj(vec![(10, 3)], 24),
            traj(vec![(10, 3)], 24),
            traj(vec![(10, 3)], 24),
            traj(vec![(10, 3)], 30),
        ];
        let est = estimate_from_trajectories(&trajs, IndexSpace::Observation).unwrap();
        assert_eq!(est.row(5, 3), &[(12, 0.75), (15, 0.25)]);
        assert_eq!(est.visits(5, 3), 4);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            estimate_from_trajectories(&[], IndexSpace::Observation),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn full_state_estimation_keeps_the_diabetes_digit() {
        let t = traj(vec![(11, 2)], 25);
        let est = estimate_from_trajectories(&[t], IndexSpace::FullState).unwrap();
        assert!(est.supported(11, 2));
        assert_eq!(est.row(11, 2), &[(25, 1.0)]);
    }

    #[test]
    fn augment_endpoints_copy_inputs_bitwise() {
        let a = estimate_from_trajectories(&[traj(vec![(10, 3)], 24)], IndexSpace::Observation)
            .unwrap();
        let b = estimate_from_trajectories(&[traj(vec![(10, 3)], 30)], IndexSpace::Observation)
            .unwrap();
        let keep_t = augment_transitions(&a, &b, 1.0).unwrap();
        assert_eq!(keep_t.row(5, 3), a.row(5, 3));
        let keep_h = augment_transitions(&a, &b, 0.0).unwrap();
        assert_eq!(keep_h.row(5, 3), b.row(5, 3));
    }

    #[test]
    fn augment_midpoint_blends_disjoint_rows() {
        let a = estimate_from_trajectories(&[traj(vec![(10, 3)], 24)], IndexSpace::Observation)
            .unwrap();
        let b = estimate_from_trajectories(&[traj(vec![(10, 3)], 30)], IndexSpace::Observation)
            .unwrap();
        let mid = augment_transitions(&a, &b, 0.5).unwrap();
        assert_eq!(mid.row(5, 3), &[(12, 0.5), (15, 0.5)]);
    }

    #[test]
    fn augment_support_is_the_union() {
        let a = estimate_from_trajectories(&[traj(vec![(10, 3)], 24)], IndexSpace::Observation)
            .unwrap();
        let b = estimate_from_trajectories(&[traj(vec![(20, 1)], 30)], IndexSpace::Observation)
            .unwrap();
        let out = augment_transitions(&a, &b, 0.5).unwrap();
        assert!(out.supported(5, 3));
        assert!(out.supported(10, 1));
        assert_eq!(out.row(5, 3), a.row(5, 3));
        assert_eq!(out.row(10, 1), b.row(10, 1));
        out.transitions.validate_stochastic(1e-12).unwrap();
    }
}
