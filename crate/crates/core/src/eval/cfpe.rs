//! Counterfactual policy evaluation: replay observed trajectories under a
//! candidate policy with abducted noise and aggregate the counterfactual
//! outcomes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::policy::StochasticPolicy;
use crate::rng::stream;
use crate::scm::{counterfactual_rollout, ActionChoice, RolloutPrior};
use crate::sim::{Dataset, TerminalOutcome};
use crate::transfer::EstimatedModel;

use super::mean;

/// Counterfactual outcome shares: discharge, death, or no change (the
/// rollout neither discharged nor died within the horizon). They sum to one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CfOutcomeFractions {
    pub discharge: f64,
    pub death: f64,
    pub no_change: f64,
}

impl CfOutcomeFractions {
    fn from_outcomes<'a>(outcomes: impl Iterator<Item = &'a TerminalOutcome>) -> Self {
        let mut counts = [0usize; 3];
        let mut total = 0usize;
        for o in outcomes {
            let i = match o {
                TerminalOutcome::Discharge => 0,
                TerminalOutcome::Death => 1,
                TerminalOutcome::Censored | TerminalOutcome::Penalty => 2,
            };
            counts[i] += 1;
            total += 1;
        }
        if total == 0 {
            return Self::default();
        }
        let t = total as f64;
        Self {
            discharge: counts[0] as f64 / t,
            death: counts[1] as f64 / t,
            no_change: counts[2] as f64 / t,
        }
    }
}

/// Paired observed/counterfactual record for one patient.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CfPairRecord {
    pub id: u64,
    pub diabetic: bool,
    pub observed_outcome: TerminalOutcome,
    pub cf_outcome: TerminalOutcome,
    pub observed_return: f64,
    pub cf_return: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CfPeReport {
    pub mean_cf_return: f64,
    pub mean_observed_return: f64,
    pub outcomes: CfOutcomeFractions,
    pub diabetic: CfOutcomeFractions,
    pub non_diabetic: CfOutcomeFractions,
    /// Fraction of trajectories whose counterfactual outcome equals the
    /// observed one.
    pub outcome_agreement: f64,
    pub records: Vec<CfPairRecord>,
}

/// Counterfactual-evaluation settings mirroring the rollout machinery.
#[derive(Debug, Clone, Copy)]
pub struct CfPeConfig {
    pub w_target: f64,
    pub horizon: usize,
    pub penalty_reward: f64,
    /// Replay the observed actions instead of drawing from the policy
    /// (abduction-consistency checks).
    pub replay_observed_actions: bool,
}

impl Default for CfPeConfig {
    fn default() -> Self {
        Self {
            w_target: 1.0,
            horizon: 20,
            penalty_reward: -1.0,
            replay_observed_actions: false,
        }
    }
}

/// Runs one counterfactual rollout per observed trajectory under `pi_eval`
/// and aggregates the outcomes overall and per sub-population.
pub fn cf_pe(
    dataset: &Dataset,
    pi_eval: &StochasticPolicy,
    alpha_hat: &EstimatedModel,
    prior: &RolloutPrior<'_>,
    cfg: &CfPeConfig,
    seed: u64,
) -> Result<CfPeReport> {
    if dataset.is_empty() {
        return Err(crate::error::Error::EmptyDataset);
    }
    let records: Vec<CfPairRecord> = dataset
        .trajectories
        .par_iter()
        .enumerate()
        .map(|(i, observed)| {
            let mut rng = stream(seed, "cfpe", i as u64);
            let actions = if cfg.replay_observed_actions {
                ActionChoice::Replay
            } else {
                ActionChoice::Sample(pi_eval)
            };
            let cf = counterfactual_rollout(
                observed,
                actions,
                alpha_hat,
                prior,
                cfg.horizon,
                cfg.penalty_reward,
                &mut rng,
            )?;
            Ok(CfPairRecord {
                id: observed.id,
                diabetic: observed.diabetic,
                observed_outcome: observed.outcome,
                cf_outcome: cf.outcome,
                observed_return: observed.episodic_return(),
                cf_return: cf.episodic_return(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let cf_returns: Vec<f64> = records.iter().map(|r| r.cf_return).collect();
    let obs_returns: Vec<f64> = records.iter().map(|r| r.observed_return).collect();
    let agreement = records
        .iter()
        .filter(|r| r.cf_outcome == r.observed_outcome)
        .count() as f64
        / records.len() as f64;
    Ok(CfPeReport {
        mean_cf_return: mean(&cf_returns),
        mean_observed_return: mean(&obs_returns),
        outcomes: CfOutcomeFractions::from_outcomes(records.iter().map(|r| &r.cf_outcome)),
        diabetic: CfOutcomeFractions::from_outcomes(
            records.iter().filter(|r| r.diabetic).map(|r| &r.cf_outcome),
        ),
        non_diabetic: CfOutcomeFractions::from_outcomes(
            records.iter().filter(|r| !r.diabetic).map(|r| &r.cf_outcome),
        ),
        outcome_agreement: agreement,
        records,
    })
}

/// Average treatment effect of `pi` over the behavior policy: the difference
/// of their expected-reward estimates on the same data and seed regime.
pub fn ate(pi_reward_estimate: f64, mu_reward_estimate: f64) -> f64 {
    pi_reward_estimate - mu_reward_estimate
}

/// Writes the per-trajectory paired records as CSV.
pub fn write_cfpe_records(path: &std::path::Path, records: &[CfPairRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "id",
        "diabetic",
        "observed_outcome",
        "cf_outcome",
        "observed_return",
        "cf_return",
    ])?;
    for r in records {
        w.write_record([
            r.id.to_string(),
            r.diabetic.to_string(),
            format!("{:?}", r.observed_outcome).to_lowercase(),
            format!("{:?}", r.cf_outcome).to_lowercase(),
            r.observed_return.to_string(),
            r.cf_return.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
