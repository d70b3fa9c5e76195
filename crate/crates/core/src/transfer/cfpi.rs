//! Counterfactual policy iteration.
//!
//! Each outer iteration draws a batch of observed target trajectories, rolls
//! counterfactual versions of them under the current policy with the mixture
//! prior, re-estimates transition statistics from the counterfactual batch,
//! blends them into the observed statistics, and runs regularized policy
//! iteration on the blend.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::policy::{reg_pi, StochasticPolicy, ValueFunction};
use crate::rng::{derive_seed, stream};
use crate::scm::{counterfactual_rollout, ActionChoice, RolloutPrior};
use crate::sim::{Dataset, Trajectory};

use super::{augment_transitions, estimate_from_trajectories, estimate_transitions, EstimatedModel, IndexSpace};

/// Scalar hyperparameters of the transfer loop.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CfptConfig {
    /// Mixture weight on the target component during abduction.
    pub w_target: f64,
    /// Weight on the observed statistics in the augmentation blend.
    pub eta: f64,
    /// Weight on the proposal distribution in the KL aggregation.
    pub lambda: f64,
    pub gamma: f64,
    /// Outer CF-PI iterations (K).
    pub outer_iters: usize,
    /// Observed trajectories per iteration (N); the whole dataset when it is
    /// no larger than this, sampled without replacement otherwise.
    pub batch_size: usize,
    /// Counterfactual rollouts per sampled trajectory per iteration (N').
    pub cf_samples_per_traj: usize,
    /// Behavior-policy randomization used by the experiment harness.
    pub epsilon: f64,
    /// Step cap for counterfactual rollouts.
    pub horizon: usize,
    /// Reward when a rollout or an evaluated policy takes an action without
    /// transition data.
    pub penalty_reward: f64,
    /// Improvement-step cap for each (regularized) policy iteration run.
    pub max_pi_iter: usize,
    /// Bellman residual tolerance for policy evaluation.
    pub eval_tol: f64,
}

impl Default for CfptConfig {
    fn default() -> Self {
        Self {
            w_target: 0.8,
            eta: 0.7,
            lambda: 0.3,
            gamma: 0.99,
            outer_iters: 50,
            batch_size: 2000,
            cf_samples_per_traj: 1,
            epsilon: 0.15,
            horizon: 20,
            penalty_reward: -1.0,
            max_pi_iter: 1000,
            eval_tol: 1e-10,
        }
    }
}

impl CfptConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("w_target", self.w_target),
            ("eta", self.eta),
            ("lambda", self.lambda),
            ("epsilon", self.epsilon),
        ] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} = {v} is not in [0, 1]")));
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!(
                "gamma = {} must be in [0, 1)",
                self.gamma
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.cf_samples_per_traj == 0 {
            return Err(Error::InvalidConfig("cf_samples_per_traj must be >= 1".into()));
        }
        if self.max_pi_iter == 0 {
            return Err(Error::InvalidConfig("max_pi_iter must be >= 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be >= 1".into()));
        }
        if !self.penalty_reward.is_finite() {
            return Err(Error::InvalidConfig("penalty_reward must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CfPiResult {
    /// Deterministic final policy (the K-th iterate).
    pub policy: StochasticPolicy,
    /// Final KL-aggregated distribution, for stochastic consumers.
    pub aggregate: StochasticPolicy,
    pub value: ValueFunction,
    /// Final augmented transition estimate.
    pub p_tilde: EstimatedModel,
}

/// Indices of the iteration's observed batch: the whole dataset when small
/// enough, otherwise a without-replacement sample.
fn batch_indices<R: Rng>(n_total: usize, batch_size: usize, rng: &mut R) -> Vec<usize> {
    if n_total <= batch_size {
        return (0..n_total).collect();
    }
    // partial Fisher-Yates
    let mut idx: Vec<usize> = (0..n_total).collect();
    for i in 0..batch_size {
        let j = i + rng.random_range(0..n_total - i);
        idx.swap(i, j);
    }
    idx.truncate(batch_size);
    idx
}

/// Runs CF-PI and returns the final policy with its training artifacts.
///
/// The mixture prior conditions on the fixed observed estimates (target) and
/// the source estimates; the counterfactual row set is the current blended
/// estimate, which starts at the observed target statistics.
pub fn cf_pi(
    pi0: &StochasticPolicy,
    pi_source: &StochasticPolicy,
    p_source: &EstimatedModel,
    target: &Dataset,
    cfg: &CfptConfig,
    seed: u64,
) -> Result<CfPiResult> {
    cfg.validate()?;
    if target.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let p_target = estimate_transitions(target)?;
    let mut p_tilde = p_target.clone();
    let mut policy = pi0.clone();
    let mut aggregate = pi0.clone();
    let mut value = ValueFunction::zeros(p_target.space.n_states());

    for k in 1..=cfg.outer_iters as u64 {
        let iter_seed = derive_seed(seed, "cfpi-iter", k);
        let mut batch_rng = stream(iter_seed, "batch", 0);
        let indices = batch_indices(target.len(), cfg.batch_size, &mut batch_rng);

        let prior = RolloutPrior {
            target: &p_target,
            source: Some(p_source),
            w_target: cfg.w_target,
        };
        let n_prime = cfg.cf_samples_per_traj;
        let cf_batch: Vec<Trajectory> = indices
            .par_iter()
            .enumerate()
            .flat_map_iter(|(i, &traj_idx)| {
                let observed = &target.trajectories[traj_idx];
                (0..n_prime).map(move |j| (i * n_prime + j, observed))
            })
            .map(|(rollout_idx, observed)| {
                let mut rng = stream(iter_seed, "rollout", rollout_idx as u64);
                counterfactual_rollout(
                    observed,
                    ActionChoice::Sample(&policy),
                    &p_tilde,
                    &prior,
                    cfg.horizon,
                    cfg.penalty_reward,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;

        let p_hat = estimate_from_trajectories(&cf_batch, IndexSpace::Observation)?;
        p_tilde = augment_transitions(&p_target, &p_hat, cfg.eta)?;

        let reg = reg_pi(
            &policy,
            cfg.gamma,
            &p_tilde.to_mdp(cfg.penalty_reward)?,
            pi_source,
            cfg.lambda,
            cfg.max_pi_iter,
            cfg.eval_tol,
        )?;
        policy = reg.policy;
        aggregate = reg.aggregate;
        value = reg.value;
    }

    Ok(CfPiResult {
        policy,
        aggregate,
        value,
        p_tilde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::policy_iteration;
    use crate::sim::{DynamicsConfig, PolicyRef, Simulator, N_OBS};

    fn small_world() -> (Dataset, EstimatedModel, StochasticPolicy) {
        let sim = Simulator::from_config(&DynamicsConfig::default(), 20).unwrap();
        let pi = StochasticPolicy::uniform(N_OBS, 8);
        let source_ds = sim
            .generate_dataset(PolicyRef::Obs(&pi), 300, 0.1, 21)
            .unwrap();
        let target_ds = sim
            .generate_dataset(PolicyRef::Obs(&pi), 200, 0.8, 22)
            .unwrap();
        let p_source = estimate_transitions(&source_ds).unwrap();
        let pi_source = StochasticPolicy::uniform(N_OBS, 8);
        let _ = target_ds.diabetic_fraction();
        (target_ds, p_source, pi_source)
    }

    #[test]
    fn zero_iterations_returns_initial_policy() {
        let (target, p_source, pi_source) = small_world();
        let pi0 = StochasticPolicy::uniform(N_OBS, 8);
        let cfg = CfptConfig {
            outer_iters: 0,
            ..CfptConfig::default()
        };
        let res = cf_pi(&pi0, &pi_source, &p_source, &target, &cfg, 1).unwrap();
        assert_eq!(res.policy, pi0);
    }

    #[test]
    fn lambda_zero_returns_source_argmax() {
        let (target, p_source, _) = small_world();
        let pi0 = StochasticPolicy::uniform(N_OBS, 8);
        let mut rows = vec![vec![1.0 / 8.0; 8]; N_OBS];
        for (o, row) in rows.iter_mut().enumerate() {
            row.fill(0.05);
            row[o % 8] = 1.0 - 0.05 * 7.0;
        }
        let pi_source = StochasticPolicy::from_rows(rows).unwrap();
        let cfg = CfptConfig {
            lambda: 0.0,
            outer_iters: 2,
            ..CfptConfig::default()
        };
        let res = cf_pi(&pi0, &pi_source, &p_source, &target, &cfg, 3).unwrap();
        assert_eq!(res.policy, pi_source.argmax_policy());
    }

    #[test]
    fn degenerate_knobs_reduce_to_plain_policy_iteration() {
        let (target, p_source, pi_source) = small_world();
        let pi0 = StochasticPolicy::uniform(N_OBS, 8);
        let cfg = CfptConfig {
            w_target: 1.0,
            eta: 1.0,
            lambda: 1.0,
            outer_iters: 3,
            ..CfptConfig::default()
        };
        let res = cf_pi(&pi0, &pi_source, &p_source, &target, &cfg, 5).unwrap();
        let p_t = estimate_transitions(&target).unwrap();
        let scratch = policy_iteration(&p_t.to_mdp(cfg.penalty_reward).unwrap(), cfg.gamma, 1000)
            .unwrap();
        assert_eq!(res.policy, scratch.policy);
    }

    #[test]
    fn deterministic_given_seed() {
        let (target, p_source, pi_source) = small_world();
        let pi0 = StochasticPolicy::uniform(N_OBS, 8);
        let cfg = CfptConfig {
            outer_iters: 2,
            ..CfptConfig::default()
        };
        let a = cf_pi(&pi0, &pi_source, &p_source, &target, &cfg, 9).unwrap();
        let b = cf_pi(&pi0, &pi_source, &p_source, &target, &cfg, 9).unwrap();
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.aggregate, b.aggregate);
    }
}
