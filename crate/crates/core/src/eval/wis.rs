//! Weighted (self-normalized) importance sampling.

use crate::error::{Error, Result};
use crate::policy::StochasticPolicy;
use crate::sim::{Dataset, N_ACTIONS, N_OBS};

/// WIS estimate with its effective-sample diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WisEstimate {
    pub estimate: f64,
    pub sum_weights: f64,
    /// Trajectories with nonzero weight.
    pub n_effective: usize,
}

/// Behavior-cloned action distribution with add-one (Laplace) smoothing over
/// the eight actions, so every observed action carries positive mass.
pub fn behavior_clone_smoothed(dataset: &Dataset) -> Result<StochasticPolicy> {
    behavior_clone_with(dataset, 1)
}

/// Unsmoothed per-observation action frequencies. Replaying these keeps a
/// counterfactual rollout inside the dataset's support; observations never
/// visited fall back to the uniform row.
pub fn behavior_frequencies(dataset: &Dataset) -> Result<StochasticPolicy> {
    behavior_clone_with(dataset, 0)
}

fn behavior_clone_with(dataset: &Dataset, pseudo_count: u64) -> Result<StochasticPolicy> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut counts = vec![0u64; N_OBS * N_ACTIONS];
    for t in &dataset.trajectories {
        for s in &t.steps {
            counts[s.obs as usize * N_ACTIONS + s.action as usize] += 1;
        }
    }
    let rows: Vec<Vec<f64>> = (0..N_OBS)
        .map(|o| {
            let row = &counts[o * N_ACTIONS..(o + 1) * N_ACTIONS];
            let total: u64 = row.iter().sum::<u64>() + pseudo_count * N_ACTIONS as u64;
            if total == 0 {
                return vec![1.0 / N_ACTIONS as f64; N_ACTIONS];
            }
            row.iter()
                .map(|&c| (c + pseudo_count) as f64 / total as f64)
                .collect()
        })
        .collect();
    StochasticPolicy::from_rows(rows)
}

/// Self-normalized importance-sampling estimate of `pi_eval`'s return on
/// off-policy data:
/// weight_i = prod_t pi_eval(a_t | o_t) / mu_hat(a_t | o_t),
/// estimate = sum_i w_i G_i / sum_i w_i.
///
/// `gamma = 1` gives the undiscounted episodic return used for headline
/// numbers. A behavior distribution with zero mass on an observed action is
/// an error naming the offending step.
pub fn wis(
    dataset: &Dataset,
    pi_eval: &StochasticPolicy,
    mu_hat: &StochasticPolicy,
    gamma: f64,
) -> Result<WisEstimate> {
    wis_with(dataset, mu_hat, gamma, |step| {
        pi_eval.prob(step.obs as usize, step.action as usize)
    })
}

/// WIS for a full-state-indexed policy (the fully observed baseline); the
/// target probability is read at the recorded true state while the behavior
/// estimate stays observation-level.
pub fn wis_full_state(
    dataset: &Dataset,
    pi_eval: &StochasticPolicy,
    mu_hat: &StochasticPolicy,
    gamma: f64,
) -> Result<WisEstimate> {
    wis_with(dataset, mu_hat, gamma, |step| {
        pi_eval.prob(step.state as usize, step.action as usize)
    })
}

fn wis_with(
    dataset: &Dataset,
    mu_hat: &StochasticPolicy,
    gamma: f64,
    eval_prob: impl Fn(&crate::sim::Step) -> f64,
) -> Result<WisEstimate> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sum_weights = 0.0;
    let mut weighted_return = 0.0;
    let mut n_effective = 0usize;
    for (ti, traj) in dataset.trajectories.iter().enumerate() {
        let mut weight = 1.0f64;
        for (si, step) in traj.steps.iter().enumerate() {
            let mu = mu_hat.prob(step.obs as usize, step.action as usize);
            if mu <= 0.0 {
                return Err(Error::UndefinedWeight {
                    trajectory: ti,
                    step: si,
                    obs: step.obs as usize,
                    action: step.action as usize,
                });
            }
            weight *= eval_prob(step) / mu;
            if weight == 0.0 {
                break;
            }
        }
        if weight > 0.0 {
            n_effective += 1;
        }
        sum_weights += weight;
        weighted_return += weight * traj.discounted_return(gamma);
    }
    let estimate = if sum_weights > 0.0 {
        weighted_return / sum_weights
    } else {
        log::warn!("WIS has an empty effective sample; reporting 0");
        0.0
    };
    Ok(WisEstimate {
        estimate,
        sum_weights,
        n_effective,
    })
}
