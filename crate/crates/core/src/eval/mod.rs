//! Evaluation harness: true-reward rollouts with bootstrap intervals,
//! weighted importance sampling, counterfactual policy evaluation, and
//! feature-visitation histograms.

mod wis;
mod cfpe;
mod histogram;

pub use cfpe::{ate, cf_pe, write_cfpe_records, CfOutcomeFractions, CfPairRecord, CfPeConfig, CfPeReport};
pub use histogram::{visitation_histogram, FeatureHistogram, FEATURE_NAMES};
pub use wis::{behavior_clone_smoothed, behavior_frequencies, wis, wis_full_state, WisEstimate};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::sim::{PolicyRef, Simulator, TerminalOutcome, Trajectory};

/// Fractions of each terminal outcome in a batch; they sum to one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomeFractions {
    pub discharge: f64,
    pub death: f64,
    pub censored: f64,
    pub penalty: f64,
}

impl OutcomeFractions {
    pub fn from_outcomes<'a>(outcomes: impl Iterator<Item = &'a TerminalOutcome>) -> Self {
        let mut counts = [0usize; 4];
        let mut total = 0usize;
        for o in outcomes {
            let i = match o {
                TerminalOutcome::Discharge => 0,
                TerminalOutcome::Death => 1,
                TerminalOutcome::Censored => 2,
                TerminalOutcome::Penalty => 3,
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
            censored: counts[2] as f64 / t,
            penalty: counts[3] as f64 / t,
        }
    }
}

/// Evaluation summary for one sub-population.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubpopReport {
    pub n: usize,
    pub mean_return: f64,
    pub outcomes: OutcomeFractions,
}

/// Full evaluation report with a percentile-bootstrap confidence interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_return: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_trajectories: usize,
    pub outcomes: OutcomeFractions,
    pub diabetic: SubpopReport,
    pub non_diabetic: SubpopReport,
}

impl EvalReport {
    pub fn from_trajectories(trajectories: &[Trajectory], bootstrap: usize, seed: u64) -> Result<Self> {
        let returns: Vec<f64> = trajectories.iter().map(|t| t.episodic_return()).collect();
        Self::from_parts(trajectories, &returns, bootstrap, seed)
    }

    fn from_parts(
        trajectories: &[Trajectory],
        returns: &[f64],
        bootstrap: usize,
        seed: u64,
    ) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mean_return = mean(returns);
        let (ci_low, ci_high) = bootstrap_ci(returns, bootstrap, seed);
        let subpop = |flag: bool| {
            let idx: Vec<usize> = trajectories
                .iter()
                .enumerate()
                .filter(|(_, t)| t.diabetic == flag)
                .map(|(i, _)| i)
                .collect();
            let rs: Vec<f64> = idx.iter().map(|&i| returns[i]).collect();
            SubpopReport {
                n: idx.len(),
                mean_return: if rs.is_empty() { 0.0 } else { mean(&rs) },
                outcomes: OutcomeFractions::from_outcomes(
                    idx.iter().map(|&i| &trajectories[i].outcome),
                ),
            }
        };
        Ok(EvalReport {
            mean_return,
            ci_low,
            ci_high,
            n_trajectories: trajectories.len(),
            outcomes: OutcomeFractions::from_outcomes(trajectories.iter().map(|t| &t.outcome)),
            diabetic: subpop(true),
            non_diabetic: subpop(false),
        })
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// 95% percentile interval over `resamples` bootstrap means.
pub fn bootstrap_ci(returns: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    if returns.is_empty() {
        return (0.0, 0.0);
    }
    if resamples == 0 {
        let m = mean(returns);
        return (m, m);
    }
    let mut means: Vec<f64> = (0..resamples as u64)
        .map(|b| {
            let mut rng = stream(seed, "bootstrap", b);
            let mut acc = 0.0;
            for _ in 0..returns.len() {
                acc += returns[rng.random_range(0..returns.len())];
            }
            acc / returns.len() as f64
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (percentile(&means, 0.025), percentile(&means, 0.975))
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Rolls `n` fresh episodes of `policy` in the true simulator and summarizes
/// undiscounted episodic returns with a bootstrap interval.
pub fn true_reward(
    policy: PolicyRef<'_>,
    sim: &Simulator,
    p_diab: f64,
    n: usize,
    bootstrap: usize,
    seed: u64,
) -> Result<EvalReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let trajectories: Vec<Trajectory> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, "eval-traj", i);
            let diabetic = rng.random::<f64>() < p_diab;
            sim.sample_trajectory(policy, diabetic, i, &mut rng)
        })
        .collect();
    EvalReport::from_trajectories(&trajectories, bootstrap, seed)
}
