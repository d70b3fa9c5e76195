//! KL-regularized policy iteration.
//!
//! The improvement step builds a proposal distribution over actions from the
//! current value function, then minimizes
//! `lambda * KL(pi || nu) + (1 - lambda) * KL(pi || pi_source)`,
//! whose closed-form minimizer is the log-aggregate
//! `pi(a) proportional to nu(a)^lambda * pi_source(a)^(1 - lambda)`.

use crate::error::{Error, Result};
use crate::model::MdpModel;

use super::solve::policy_evaluation;
use super::{argmax, StochasticPolicy, ValueFunction};

/// Action-value row shifted by its minimum and normalized.
///
/// The shift keeps every mass nonnegative and preserves the argmax, which is
/// the only property the improvement step consumes. A row whose values all
/// tie collapses to the uniform distribution over the tied floor.
pub fn proposal_distribution(
    v: &ValueFunction,
    mdp: &MdpModel,
    gamma: f64,
    state: usize,
) -> Result<Vec<f64>> {
    if (0..mdp.n_actions).all(|a| !mdp.available(state, a)) {
        return Err(Error::EmptySupport { state });
    }
    let q: Vec<f64> = (0..mdp.n_actions)
        .map(|a| mdp.q_value(state, a, &v.0, gamma))
        .collect();
    Ok(shift_normalize(&q))
}

fn shift_normalize(q: &[f64]) -> Vec<f64> {
    let min = q.iter().cloned().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = q.iter().map(|&x| x - min).collect();
    let z: f64 = shifted.iter().sum();
    if z > 0.0 {
        shifted.iter().map(|&x| x / z).collect()
    } else {
        vec![1.0 / q.len() as f64; q.len()]
    }
}

/// Closed-form minimizer of the two-sided KL objective:
/// `pi(a) proportional to nu(a)^lambda * pi_source(a)^(1 - lambda)`.
///
/// Zero mass in either distribution forces zero aggregated mass whenever its
/// exponent is positive; an empty joint support is an error.
pub fn kl_aggregate(nu: &[f64], pi_source: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if nu.len() != pi_source.len() {
        return Err(Error::InvalidArgument(format!(
            "distribution lengths differ: {} vs {}",
            nu.len(),
            pi_source.len()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!(
            "lambda = {lambda} is not in [0, 1]"
        )));
    }
    if lambda == 1.0 {
        return Ok(nu.to_vec());
    }
    if lambda == 0.0 {
        return Ok(pi_source.to_vec());
    }
    let log_mass: Vec<f64> = nu
        .iter()
        .zip(pi_source)
        .map(|(&n, &p)| {
            if n <= 0.0 || p <= 0.0 {
                f64::NEG_INFINITY
            } else {
                lambda * n.ln() + (1.0 - lambda) * p.ln()
            }
        })
        .collect();
    let max = log_mass.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::NoFeasiblePolicy(
            "proposal and source distributions have disjoint support".into(),
        ));
    }
    let unnorm: Vec<f64> = log_mass.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = unnorm.iter().sum();
    Ok(unnorm.iter().map(|&m| m / z).collect())
}

#[derive(Debug, Clone)]
pub struct RegPiResult {
    /// Deterministic iterate: one-hot argmax of the aggregated distribution.
    pub policy: StochasticPolicy,
    /// Final aggregated distribution per state, for stochastic consumers.
    pub aggregate: StochasticPolicy,
    pub value: ValueFunction,
    pub iterations: usize,
    pub converged: bool,
}

/// Regularized policy iteration.
///
/// Alternates policy evaluation with an improvement step whose action at
/// each state is the argmax of the KL log-aggregate of the proposal and the
/// source policy. Stops when the deterministic iterate is stable or after
/// `max_iter` improvement rounds.
pub fn reg_pi(
    pi0: &StochasticPolicy,
    gamma: f64,
    mdp: &MdpModel,
    pi_source: &StochasticPolicy,
    lambda: f64,
    max_iter: usize,
    tol: f64,
) -> Result<RegPiResult> {
    if pi_source.n_states() != mdp.n_states || pi_source.n_actions() != mdp.n_actions {
        return Err(Error::InvalidArgument(format!(
            "source policy shape {}x{} does not match model {}x{}",
            pi_source.n_states(),
            pi_source.n_actions(),
            mdp.n_states,
            mdp.n_actions
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!(
            "lambda = {lambda} is not in [0, 1]"
        )));
    }

    // One improvement pass: fills the aggregate rows and returns the
    // deterministic argmax policy. A state with no available action has
    // every value at the penalty constant; the tied floor collapses to the
    // uniform proposal.
    let improve = |value: &ValueFunction,
                   aggregate: &mut StochasticPolicy|
     -> Result<StochasticPolicy> {
        let mut actions = Vec::with_capacity(mdp.n_states);
        for s in 0..mdp.n_states {
            let q: Vec<f64> = (0..mdp.n_actions)
                .map(|a| mdp.q_value(s, a, &value.0, gamma))
                .collect();
            let nu = shift_normalize(&q);
            let agg = kl_aggregate(&nu, pi_source.row(s), lambda)
                .map_err(|e| Error::NoFeasiblePolicy(format!("state {s}: {e}")))?;
            // lambda = 1 ranks by the raw action values so exact ties match
            // plain policy iteration; the aggregate itself is unchanged.
            let chosen = if lambda == 1.0 { argmax(&q) } else { argmax(&agg) };
            aggregate.set_row(s, &agg);
            actions.push(chosen);
        }
        Ok(StochasticPolicy::deterministic(mdp.n_actions, &actions))
    };

    let mut policy = pi0.clone();
    let mut previous: Option<StochasticPolicy> = None;
    let mut value = ValueFunction::zeros(mdp.n_states);
    let mut aggregate = StochasticPolicy::uniform(mdp.n_states, mdp.n_actions);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;
        value = policy_evaluation(&policy, mdp, gamma, tol)?;
        let improved = improve(&value, &mut aggregate)?;
        if improved == policy {
            converged = true;
            break;
        }
        // the regularized improvement is not monotone in value, so the
        // iterate can enter a two-cycle; settle on the newer policy
        if previous.as_ref() == Some(&improved) {
            policy = improved;
            value = policy_evaluation(&policy, mdp, gamma, tol)?;
            improve(&value, &mut aggregate)?;
            converged = true;
            break;
        }
        previous = Some(std::mem::replace(&mut policy, improved));
    }

    Ok(RegPiResult {
        policy,
        aggregate,
        value,
        iterations,
        converged,
    })
}
