//! Discrete sepsis treatment simulator.
//!
//! Patient state is four discretized vitals (heart rate, blood pressure,
//! oxygen, glucose), three treatment flags (antibiotics, vasopressors,
//! mechanical ventilation) and a hidden diabetes flag. Observations expose
//! everything except the diabetes flag.

mod dynamics;
mod truth;
mod trajectory;

pub use dynamics::{DynamicsConfig, default_dynamics_toml};
pub use truth::{build_true_mdp, build_true_transitions, eligible_initial_states};
pub use trajectory::{
    Dataset, PolicyRef, Simulator, Step, TerminalOutcome, Trajectory, read_dataset, write_dataset,
    DATASET_FORMAT_VERSION,
};

use crate::error::{Error, Result};

pub const HR_LEVELS: u8 = 3;
pub const BP_LEVELS: u8 = 3;
pub const O2_LEVELS: u8 = 2;
pub const GLUCOSE_LEVELS: u8 = 5;

/// 3 * 3 * 2 * 5 * 2 * 2 * 2 * 2
pub const N_STATES: usize = 1440;
/// `N_STATES` with the diabetes digit removed.
pub const N_OBS: usize = 720;
pub const N_ACTIONS: usize = 8;

/// Level index meaning "normal" for the three-level vitals and oxygen.
pub const LEVEL_NORMAL: u8 = 1;
/// Level index meaning "normal" glucose (middle of five levels).
pub const GLUCOSE_NORMAL: u8 = 2;

pub const REWARD_DISCHARGE: f64 = 1.0;
pub const REWARD_DEATH: f64 = -1.0;

/// Full patient state. The diabetes flag is hidden from observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatientState {
    /// 0 = low, 1 = normal, 2 = high
    pub heart_rate: u8,
    /// 0 = low, 1 = normal, 2 = high
    pub blood_pressure: u8,
    /// 0 = low, 1 = normal
    pub oxygen: u8,
    /// 0 = very low, 1 = low, 2 = normal, 3 = high, 4 = very high
    pub glucose: u8,
    pub abx: bool,
    pub vaso: bool,
    pub vent: bool,
    pub diabetic: bool,
}

impl PatientState {
    pub fn validate(&self) -> Result<()> {
        if self.heart_rate >= HR_LEVELS {
            return Err(Error::InvalidArgument(format!(
                "heart rate level {} out of range",
                self.heart_rate
            )));
        }
        if self.blood_pressure >= BP_LEVELS {
            return Err(Error::InvalidArgument(format!(
                "blood pressure level {} out of range",
                self.blood_pressure
            )));
        }
        if self.oxygen >= O2_LEVELS {
            return Err(Error::InvalidArgument(format!(
                "oxygen level {} out of range",
                self.oxygen
            )));
        }
        if self.glucose >= GLUCOSE_LEVELS {
            return Err(Error::InvalidArgument(format!(
                "glucose level {} out of range",
                self.glucose
            )));
        }
        Ok(())
    }

    /// Number of vitals away from their normal level.
    pub fn abnormal_vitals(&self) -> usize {
        usize::from(self.heart_rate != LEVEL_NORMAL)
            + usize::from(self.blood_pressure != LEVEL_NORMAL)
            + usize::from(self.oxygen != LEVEL_NORMAL)
            + usize::from(self.glucose != GLUCOSE_NORMAL)
    }

    pub fn treatments_off(&self) -> bool {
        !self.abx && !self.vaso && !self.vent
    }

    /// Replaces the treatment flags with the action's flags.
    pub fn with_treatments(mut self, action: Action) -> Self {
        self.abx = action.abx;
        self.vaso = action.vaso;
        self.vent = action.vent;
        self
    }
}

/// Joint treatment action: each flag switches the treatment on or off for
/// the coming step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub abx: bool,
    pub vaso: bool,
    pub vent: bool,
}

pub const ACTION_NAMES: [&str; N_ACTIONS] = [
    "none",
    "abx",
    "vaso",
    "abx+vaso",
    "vent",
    "abx+vent",
    "vaso+vent",
    "abx+vaso+vent",
];

impl Action {
    pub const ALL_OFF: Action = Action {
        abx: false,
        vaso: false,
        vent: false,
    };

    pub fn index(&self) -> usize {
        usize::from(self.abx) | usize::from(self.vaso) << 1 | usize::from(self.vent) << 2
    }

    pub fn from_index(index: usize) -> Result<Action> {
        if index >= N_ACTIONS {
            return Err(Error::InvalidArgument(format!(
                "action index {index} out of range"
            )));
        }
        Ok(Action {
            abx: index & 1 != 0,
            vaso: index & 2 != 0,
            vent: index & 4 != 0,
        })
    }

    pub fn none(&self) -> bool {
        !self.abx && !self.vaso && !self.vent
    }
}

/// Mixed-radix state index in `[0, 1440)`. The diabetes flag is the least
/// significant digit so that the observation index is `state >> 1`.
pub fn encode_state(s: &PatientState) -> Result<usize> {
    s.validate()?;
    let mut idx = s.heart_rate as usize;
    idx = idx * BP_LEVELS as usize + s.blood_pressure as usize;
    idx = idx * O2_LEVELS as usize + s.oxygen as usize;
    idx = idx * GLUCOSE_LEVELS as usize + s.glucose as usize;
    idx = idx * 2 + usize::from(s.abx);
    idx = idx * 2 + usize::from(s.vaso);
    idx = idx * 2 + usize::from(s.vent);
    idx = idx * 2 + usize::from(s.diabetic);
    Ok(idx)
}

pub fn decode_state(index: usize) -> Result<PatientState> {
    if index >= N_STATES {
        return Err(Error::InvalidArgument(format!(
            "state index {index} out of range"
        )));
    }
    let mut rest = index;
    let diabetic = rest & 1 != 0;
    rest >>= 1;
    let vent = rest & 1 != 0;
    rest >>= 1;
    let vaso = rest & 1 != 0;
    rest >>= 1;
    let abx = rest & 1 != 0;
    rest >>= 1;
    let glucose = (rest % GLUCOSE_LEVELS as usize) as u8;
    rest /= GLUCOSE_LEVELS as usize;
    let oxygen = (rest % O2_LEVELS as usize) as u8;
    rest /= O2_LEVELS as usize;
    let blood_pressure = (rest % BP_LEVELS as usize) as u8;
    rest /= BP_LEVELS as usize;
    let heart_rate = rest as u8;
    Ok(PatientState {
        heart_rate,
        blood_pressure,
        oxygen,
        glucose,
        abx,
        vaso,
        vent,
        diabetic,
    })
}

/// Observation index: the state index with the diabetes digit removed.
#[inline]
pub fn obs_index(state_index: usize) -> usize {
    state_index >> 1
}

/// State index for an observation index and a diabetes flag.
#[inline]
pub fn state_index(obs: usize, diabetic: bool) -> usize {
    (obs << 1) | usize::from(diabetic)
}

/// Decodes an observation index. The returned state carries
/// `diabetic = false`; the flag is not part of an observation.
pub fn decode_obs(obs: usize) -> Result<PatientState> {
    if obs >= N_OBS {
        return Err(Error::InvalidArgument(format!(
            "observation index {obs} out of range"
        )));
    }
    decode_state(obs << 1)
}

/// Discharge/death check for a state paired with the action about to be
/// taken.
///
/// Discharge (+1) requires every vital at its normal level and the action
/// switching all treatments off; death (-1) fires whenever three or more
/// vitals are away from normal; otherwise the episode continues with zero
/// reward.
pub fn reward_and_termination(state: &PatientState, action: Action) -> (f64, Option<TerminalOutcome>) {
    let abnormal = state.abnormal_vitals();
    if abnormal >= 3 {
        return (REWARD_DEATH, Some(TerminalOutcome::Death));
    }
    if abnormal == 0 && action.none() {
        return (REWARD_DISCHARGE, Some(TerminalOutcome::Discharge));
    }
    (0.0, None)
}

/// Same check keyed by an observation index (the rule never reads the
/// diabetes flag).
pub fn reward_and_termination_obs(
    obs: usize,
    action: Action,
) -> Result<(f64, Option<TerminalOutcome>)> {
    let state = decode_obs(obs)?;
    Ok(reward_and_termination(&state, action))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_lowest_components_encode_to_zero() {
        let s = PatientState {
            heart_rate: 0,
            blood_pressure: 0,
            oxygen: 0,
            glucose: 0,
            abx: false,
            vaso: false,
            vent: false,
            diabetic: false,
        };
        assert_eq!(encode_state(&s).unwrap(), 0);
    }

    #[test]
    fn encode_decode_round_trip_over_all_states() {
        for i in 0..N_STATES {
            let s = decode_state(i).unwrap();
            assert_eq!(encode_state(&s).unwrap(), i);
        }
    }

    #[test]
    fn observation_projection_drops_exactly_the_diabetes_flag() {
        let mut seen = vec![false; N_OBS];
        for i in 0..N_STATES {
            let s = decode_state(i).unwrap();
            let o = obs_index(i);
            assert!(o < N_OBS);
            seen[o] = true;
            let mut flipped = s;
            flipped.diabetic = !s.diabetic;
            assert_eq!(obs_index(encode_state(&flipped).unwrap()), o);
            assert_eq!(state_index(o, s.diabetic), i);
        }
        assert!(seen.iter().all(|&v| v));
    }

    #[test]
    fn out_of_range_component_is_rejected() {
        let mut s = decode_state(0).unwrap();
        s.glucose = GLUCOSE_LEVELS;
        assert!(encode_state(&s).is_err());
        assert!(decode_state(N_STATES).is_err());
    }

    #[test]
    fn action_index_bijection() {
        for i in 0..N_ACTIONS {
            assert_eq!(Action::from_index(i).unwrap().index(), i);
        }
        assert!(Action::from_index(N_ACTIONS).is_err());
    }

    #[test]
    fn discharge_requires_normal_vitals_and_no_treatment() {
        let normal = PatientState {
            heart_rate: LEVEL_NORMAL,
            blood_pressure: LEVEL_NORMAL,
            oxygen: LEVEL_NORMAL,
            glucose: GLUCOSE_NORMAL,
            abx: true,
            vaso: false,
            vent: false,
            diabetic: false,
        };
        let (r, out) = reward_and_termination(&normal, Action::ALL_OFF);
        assert_eq!(r, REWARD_DISCHARGE);
        assert_eq!(out, Some(TerminalOutcome::Discharge));

        let (r, out) = reward_and_termination(&normal, Action::from_index(1).unwrap());
        assert_eq!(r, 0.0);
        assert_eq!(out, None);
    }

    #[test]
    fn three_abnormal_vitals_is_death() {
        let s = PatientState {
            heart_rate: 2,
            blood_pressure: 0,
            oxygen: LEVEL_NORMAL,
            glucose: 4,
            abx: false,
            vaso: false,
            vent: false,
            diabetic: true,
        };
        for a in 0..N_ACTIONS {
            let (r, out) = reward_and_termination(&s, Action::from_index(a).unwrap());
            assert_eq!(r, REWARD_DEATH);
            assert_eq!(out, Some(TerminalOutcome::Death));
        }
    }

    #[test]
    fn two_abnormal_vitals_continue() {
        let s = PatientState {
            heart_rate: 2,
            blood_pressure: 0,
            oxygen: LEVEL_NORMAL,
            glucose: GLUCOSE_NORMAL,
            abx: false,
            vaso: true,
            vent: false,
            diabetic: false,
        };
        for a in 0..N_ACTIONS {
            let (r, out) = reward_and_termination(&s, Action::from_index(a).unwrap());
            assert_eq!(r, 0.0);
            assert_eq!(out, None);
        }
    }
}
