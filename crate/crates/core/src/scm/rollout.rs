//! Counterfactual trajectory rollouts over estimated observation-space
//! models.
//!
//! At step t the exogenous noise is abducted from the observed transition at
//! t (conditioning on the observed successor through the mixture prior) and
//! replayed under the counterfactual row of the pair the rollout actually
//! reached. Beyond the observed horizon the noise is drawn from the prior.
//! Pairs without transition data terminate the rollout with the penalty
//! reward, which confines counterfactual trajectories to observed support.

use rand::Rng;

use crate::error::{Error, Result};
use crate::policy::StochasticPolicy;
use crate::sim::{reward_and_termination_obs, Action, Step, TerminalOutcome, Trajectory};
use crate::transfer::EstimatedModel;

use super::{standard_gumbel, truncated_below};

/// Mixture prior resolved against whole models: per observed transition the
/// component rows are looked up at the observed `(obs, action)` pair.
pub struct RolloutPrior<'a> {
    pub target: &'a EstimatedModel,
    pub source: Option<&'a EstimatedModel>,
    /// Probability of conditioning on the target component.
    pub w_target: f64,
}

/// How the rollout chooses actions.
#[derive(Clone, Copy)]
pub enum ActionChoice<'a> {
    /// Draw from an observation-indexed policy.
    Sample(&'a StochasticPolicy),
    /// Replay the observed actions (counterfactual consistency checks).
    Replay,
}

/// Sparse probability lookup.
#[inline]
fn mass_at(row: &[(u32, f64)], k: u32) -> f64 {
    match row.binary_search_by_key(&k, |&(j, _)| j) {
        Ok(i) => row[i].1,
        Err(_) => 0.0,
    }
}

/// Counterfactual argmax over the support of `alpha_hat_row` with noise
/// abducted from `abduction_row` conditioned on `k_prime`.
///
/// Only the coordinates that can win under the counterfactual row are
/// sampled; conditioned on the max value they are independent, so skipping
/// the others is exact marginalization. Ties break to the lowest index.
fn abducted_argmax<R: Rng + ?Sized>(
    abduction_row: &[(u32, f64)],
    k_prime: u32,
    alpha_hat_row: &[(u32, f64)],
    rng: &mut R,
) -> u32 {
    debug_assert!(mass_at(abduction_row, k_prime) > 0.0);
    let row_sum: f64 = abduction_row.iter().map(|&(_, p)| p).sum();
    let z = row_sum.ln();
    let max_value = z + standard_gumbel(rng);

    let mut best: Option<(u32, f64)> = None;
    for &(j, p_hat) in alpha_hat_row {
        debug_assert!(p_hat > 0.0);
        let value = if j == k_prime {
            // the conditioned maximum itself
            p_hat.ln() + (max_value - mass_at(abduction_row, k_prime).ln())
        } else {
            let p_ab = mass_at(abduction_row, j);
            let noise = if p_ab > 0.0 {
                let g = p_ab.ln() + standard_gumbel(rng);
                truncated_below(g, max_value) - p_ab.ln()
            } else {
                // unconstrained prior noise: a coordinate the conditioning
                // row puts no mass on is never truncated
                standard_gumbel(rng)
            };
            p_hat.ln() + noise
        };
        match best {
            Some((_, bv)) if value <= bv => {}
            _ => best = Some((j, value)),
        }
    }
    best.expect("alpha_hat row is non-empty").0
}

/// Prior (unconditioned) draw from a sparse row via the Gumbel-Max trick.
fn prior_argmax<R: Rng + ?Sized>(row: &[(u32, f64)], rng: &mut R) -> u32 {
    let mut best: Option<(u32, f64)> = None;
    for &(j, p) in row {
        let value = p.ln() + standard_gumbel(rng);
        match best {
            Some((_, bv)) if value <= bv => {}
            _ => best = Some((j, value)),
        }
    }
    best.expect("row is non-empty").0
}

/// Rolls a counterfactual episode in observation space.
///
/// Starts at the observed initial observation. Per step: choose an action,
/// apply the simulator's discharge/death rules, guard against pairs missing
/// from `alpha_hat`, then sample the successor with noise abducted from the
/// observed transition at the same step index (prior noise once the
/// observed trajectory is exhausted). The rollout never learns the diabetes
/// flag, so `Step.state` (and `final_state`) carry the observation encoded
/// as its diabetic-false state index; the trajectory's own flag is copied
/// from the observed patient for reporting only.
pub fn counterfactual_rollout<R: Rng + ?Sized>(
    observed: &Trajectory,
    actions: ActionChoice<'_>,
    alpha_hat: &EstimatedModel,
    prior: &RolloutPrior<'_>,
    horizon: usize,
    penalty_reward: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    if observed.steps.is_empty() {
        return Err(Error::InvalidArgument(
            "observed trajectory is empty".into(),
        ));
    }
    let n_obs_transitions = observed.n_transitions();
    let mut obs = observed.steps[0].obs;
    let mut steps: Vec<Step> = Vec::new();

    for t in 0..horizon {
        let action = match actions {
            ActionChoice::Sample(pi) => pi.sample_action(obs as usize, rng) as u8,
            ActionChoice::Replay => match observed.steps.get(t) {
                Some(step) => step.action,
                None => {
                    return Ok(finish(observed, steps, TerminalOutcome::Censored, Some(obs)));
                }
            },
        };
        let (reward, outcome) =
            reward_and_termination_obs(obs as usize, Action::from_index(action as usize)?)?;
        if let Some(outcome) = outcome {
            steps.push(Step {
                state: obs << 1,
                obs,
                action,
                reward,
            });
            return Ok(finish(observed, steps, outcome, None));
        }
        if !alpha_hat.supported(obs as usize, action as usize) {
            steps.push(Step {
                state: obs << 1,
                obs,
                action,
                reward: penalty_reward,
            });
            return Ok(finish(observed, steps, TerminalOutcome::Penalty, None));
        }
        steps.push(Step {
            state: obs << 1,
            obs,
            action,
            reward: 0.0,
        });

        let alpha_hat_row = alpha_hat.row(obs as usize, action as usize);
        let next = if t < n_obs_transitions {
            let obs_from = observed.steps[t].obs as usize;
            let obs_action = observed.steps[t].action as usize;
            let k_prime = if t + 1 < observed.steps.len() {
                observed.steps[t + 1].obs
            } else {
                crate::sim::obs_index(
                    observed
                        .final_state
                        .expect("censored trajectory has final state")
                        as usize,
                ) as u32
            };
            let pick_target = rng.random::<f64>() < prior.w_target;
            let abduction_row =
                select_row(prior, pick_target, obs_from, obs_action, k_prime)?;
            abducted_argmax(abduction_row, k_prime, alpha_hat_row, rng)
        } else {
            prior_argmax(alpha_hat_row, rng)
        };
        obs = next;
    }
    Ok(finish(observed, steps, TerminalOutcome::Censored, Some(obs)))
}

/// Rolls one counterfactual trajectory per observed trajectory, each from an
/// independent stream derived from `seed`.
pub fn counterfactual_batch(
    observed: &[Trajectory],
    actions: ActionChoice<'_>,
    alpha_hat: &EstimatedModel,
    prior: &RolloutPrior<'_>,
    horizon: usize,
    penalty_reward: f64,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    use rayon::prelude::*;
    observed
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let mut rng = crate::rng::stream(seed, "cf-batch", i as u64);
            counterfactual_rollout(t, actions, alpha_hat, prior, horizon, penalty_reward, &mut rng)
        })
        .collect()
}

fn select_row<'a>(
    prior: &'a RolloutPrior<'_>,
    pick_target: bool,
    obs: usize,
    action: usize,
    k_prime: u32,
) -> Result<&'a [(u32, f64)]> {
    let target_row = prior.target.row(obs, action);
    let source_row = prior.source.map(|m| m.row(obs, action)).unwrap_or(&[]);
    let (chosen, other) = if pick_target {
        (target_row, source_row)
    } else {
        (source_row, target_row)
    };
    if mass_at(chosen, k_prime) > 0.0 {
        Ok(chosen)
    } else if mass_at(other, k_prime) > 0.0 {
        log::trace!(
            "mixture component lacks mass on observed successor {k_prime} at ({obs}, {action}); using the other component"
        );
        Ok(other)
    } else {
        Err(Error::ImpossibleObservation {
            index: k_prime as usize,
        })
    }
}

fn finish(
    observed: &Trajectory,
    steps: Vec<Step>,
    outcome: TerminalOutcome,
    final_obs: Option<u32>,
) -> Trajectory {
    Trajectory {
        id: observed.id,
        diabetic: observed.diabetic,
        steps,
        outcome,
        final_state: final_obs.map(|o| o << 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::sim::{DynamicsConfig, PolicyRef, Simulator, N_OBS};
    use crate::transfer::{estimate_transitions, IndexSpace};

    fn setup() -> (Simulator, crate::sim::Dataset, EstimatedModel) {
        let sim = Simulator::from_config(&DynamicsConfig::default(), 20).unwrap();
        let pi = StochasticPolicy::uniform(N_OBS, 8);
        let ds = sim
            .generate_dataset(PolicyRef::Obs(&pi), 400, 0.5, 17)
            .unwrap();
        let est = estimate_transitions(&ds).unwrap();
        (sim, ds, est)
    }

    #[test]
    fn replaying_observed_mechanism_reproduces_the_trajectory() {
        let (_, ds, est) = setup();
        let prior = RolloutPrior {
            target: &est,
            source: None,
            w_target: 1.0,
        };
        for observed in &ds.trajectories {
            let mut rng = stream(3, "cf", observed.id);
            let cf = counterfactual_rollout(
                observed,
                ActionChoice::Replay,
                &est,
                &prior,
                20,
                -1.0,
                &mut rng,
            )
            .unwrap();
            assert_eq!(cf.outcome, observed.outcome);
            assert_eq!(cf.steps.len(), observed.steps.len());
            for (c, o) in cf.steps.iter().zip(&observed.steps) {
                assert_eq!(c.obs, o.obs);
                assert_eq!(c.action, o.action);
                assert_eq!(c.reward, o.reward);
            }
        }
    }

    #[test]
    fn length_one_observed_trajectory_yields_one_step() {
        let (_, ds, est) = setup();
        // truncate a longer episode to a single recorded transition
        let full = ds
            .trajectories
            .iter()
            .find(|t| t.steps.len() >= 2)
            .unwrap();
        let observed = Trajectory {
            id: full.id,
            diabetic: full.diabetic,
            steps: vec![full.steps[0]],
            outcome: TerminalOutcome::Censored,
            final_state: Some(full.steps[1].state),
        };
        let prior = RolloutPrior {
            target: &est,
            source: None,
            w_target: 1.0,
        };
        let mut rng = stream(4, "cf", 0);
        let cf = counterfactual_rollout(
            &observed,
            ActionChoice::Replay,
            &est,
            &prior,
            1,
            -1.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(cf.steps.len(), 1);
    }

    #[test]
    fn unsupported_pair_terminates_with_penalty() {
        let (_, ds, est) = setup();
        // a policy concentrated on one action will eventually leave support
        let mut rows = vec![vec![0.0; 8]; N_OBS];
        for (o, row) in rows.iter_mut().enumerate() {
            // pick an action unsupported at this observation when possible
            let a = (0..8).find(|&a| !est.supported(o, a)).unwrap_or(0);
            row[a] = 1.0;
        }
        let adversarial = StochasticPolicy::from_rows(rows).unwrap();
        let prior = RolloutPrior {
            target: &est,
            source: None,
            w_target: 1.0,
        };
        let mut saw_penalty = false;
        for observed in ds.trajectories.iter().take(100) {
            let mut rng = stream(5, "cf", observed.id);
            let cf = counterfactual_rollout(
                observed,
                ActionChoice::Sample(&adversarial),
                &est,
                &prior,
                20,
                -1.0,
                &mut rng,
            )
            .unwrap();
            if cf.outcome == TerminalOutcome::Penalty {
                assert_eq!(cf.steps.last().unwrap().reward, -1.0);
                saw_penalty = true;
            }
        }
        assert!(saw_penalty);
    }

    #[test]
    fn rollouts_stay_within_estimated_support() {
        let (_, ds, est) = setup();
        let pi = StochasticPolicy::uniform(N_OBS, 8);
        let prior = RolloutPrior {
            target: &est,
            source: None,
            w_target: 1.0,
        };
        for observed in ds.trajectories.iter().take(200) {
            let mut rng = stream(6, "cf", observed.id);
            let cf = counterfactual_rollout(
                observed,
                ActionChoice::Sample(&pi),
                &est,
                &prior,
                20,
                -1.0,
                &mut rng,
            )
            .unwrap();
            for (s, a, next) in cf.obs_transitions() {
                assert!(est.supported(s as usize, a as usize));
                assert!(
                    est.prob(s as usize, a as usize, next as usize) > 0.0,
                    "counterfactual successor outside observed support"
                );
            }
        }
    }

    #[test]
    fn full_state_estimate_round_trip_for_source_component() {
        // mixture with a source model lacking many rows must still explain
        // every observed target transition through the fallback
        let (_, ds, est) = setup();
        let sparse_source =
            estimate_from_small(&ds.trajectories[..40], IndexSpace::Observation);
        let prior = RolloutPrior {
            target: &est,
            source: Some(&sparse_source),
            w_target: 0.2, // mostly source, forcing fallbacks
        };
        let pi = StochasticPolicy::uniform(N_OBS, 8);
        for observed in ds.trajectories.iter().take(100) {
            let mut rng = stream(7, "cf", observed.id);
            counterfactual_rollout(
                observed,
                ActionChoice::Sample(&pi),
                &est,
                &prior,
                20,
                -1.0,
                &mut rng,
            )
            .unwrap();
        }
    }

    fn estimate_from_small(
        trajs: &[crate::sim::Trajectory],
        space: IndexSpace,
    ) -> EstimatedModel {
        crate::transfer::estimate_from_trajectories(trajs, space).unwrap()
    }
}
