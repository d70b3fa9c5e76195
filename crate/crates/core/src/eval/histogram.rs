//! Per-feature state-visitation histograms, used to compare the coverage of
//! observed and counterfactual batches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{decode_obs, Trajectory, BP_LEVELS, GLUCOSE_LEVELS, HR_LEVELS, O2_LEVELS};

pub const FEATURE_NAMES: [&str; 7] = [
    "heart_rate",
    "blood_pressure",
    "oxygen",
    "glucose",
    "abx",
    "vaso",
    "vent",
];

const FEATURE_LEVELS: [usize; 7] = [
    HR_LEVELS as usize,
    BP_LEVELS as usize,
    O2_LEVELS as usize,
    GLUCOSE_LEVELS as usize,
    2,
    2,
    2,
];

/// Level frequencies per feature, accumulated over every recorded step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureHistogram {
    /// `bins[f][l]` = frequency of level `l` for feature `f`; each feature's
    /// bins sum to one.
    pub bins: Vec<Vec<f64>>,
    pub n_steps: usize,
}

impl FeatureHistogram {
    /// Set of levels with nonzero frequency per feature.
    pub fn support(&self) -> Vec<Vec<usize>> {
        self.bins
            .iter()
            .map(|levels| {
                levels
                    .iter()
                    .enumerate()
                    .filter(|&(_, &p)| p > 0.0)
                    .map(|(l, _)| l)
                    .collect()
            })
            .collect()
    }

    /// True when every nonzero bin of `other` is also nonzero here.
    pub fn covers(&self, other: &FeatureHistogram) -> bool {
        self.bins
            .iter()
            .zip(&other.bins)
            .all(|(mine, theirs)| {
                mine.iter()
                    .zip(theirs)
                    .all(|(&m, &t)| t == 0.0 || m > 0.0)
            })
    }
}

/// Counts feature levels over all steps of the given trajectories, using the
/// observation component of each step.
pub fn visitation_histogram(trajectories: &[Trajectory]) -> Result<FeatureHistogram> {
    if trajectories.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut counts: Vec<Vec<u64>> = FEATURE_LEVELS.iter().map(|&n| vec![0u64; n]).collect();
    let mut n_steps = 0usize;
    for t in trajectories {
        for s in &t.steps {
            let p = decode_obs(s.obs as usize)?;
            counts[0][p.heart_rate as usize] += 1;
            counts[1][p.blood_pressure as usize] += 1;
            counts[2][p.oxygen as usize] += 1;
            counts[3][p.glucose as usize] += 1;
            counts[4][usize::from(p.abx)] += 1;
            counts[5][usize::from(p.vaso)] += 1;
            counts[6][usize::from(p.vent)] += 1;
            n_steps += 1;
        }
    }
    if n_steps == 0 {
        return Err(Error::EmptyDataset);
    }
    let bins = counts
        .into_iter()
        .map(|levels| {
            levels
                .into_iter()
                .map(|c| c as f64 / n_steps as f64)
                .collect()
        })
        .collect();
    Ok(FeatureHistogram { bins, n_steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{encode_state, PatientState, Step, TerminalOutcome, GLUCOSE_NORMAL, LEVEL_NORMAL};

    fn all_normal_traj() -> Trajectory {
        let state = encode_state(&PatientState {
            heart_rate: LEVEL_NORMAL,
            blood_pressure: LEVEL_NORMAL,
            oxygen: LEVEL_NORMAL,
            glucose: GLUCOSE_NORMAL,
            abx: false,
            vaso: false,
            vent: false,
            diabetic: false,
        })
        .unwrap() as u32;
        Trajectory {
            id: 0,
            diabetic: false,
            steps: vec![Step {
                state,
                obs: state >> 1,
                action: 0,
                reward: 1.0,
            }],
            outcome: TerminalOutcome::Discharge,
            final_state: None,
        }
    }

    #[test]
    fn single_all_normal_trajectory_concentrates_on_normal() {
        let h = visitation_histogram(&[all_normal_traj()]).unwrap();
        assert_eq!(h.bins[0][LEVEL_NORMAL as usize], 1.0);
        assert_eq!(h.bins[1][LEVEL_NORMAL as usize], 1.0);
        assert_eq!(h.bins[2][LEVEL_NORMAL as usize], 1.0);
        assert_eq!(h.bins[3][GLUCOSE_NORMAL as usize], 1.0);
    }

    #[test]
    fn frequencies_per_feature_sum_to_one() {
        let h = visitation_histogram(&[all_normal_traj()]).unwrap();
        for levels in &h.bins {
            assert!((levels.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coverage_comparison() {
        let h = visitation_histogram(&[all_normal_traj()]).unwrap();
        assert!(h.covers(&h));
        let mut wider = h.clone();
        wider.bins[0][0] = 0.1;
        assert!(wider.covers(&h));
        assert!(!h.covers(&wider));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(visitation_histogram(&[]).is_err());
    }
}
