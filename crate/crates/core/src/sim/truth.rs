//! Ground-truth transition model construction.
//!
//! Each vital evolves independently per step. A vital follows its treatment
//! kernel when the relevant treatment is switched on this step or was just
//! withdrawn; otherwise it drifts by spontaneous fluctuation. Treatment
//! flags in the successor state equal the action's flags; the diabetes flag
//! never changes.

use crate::error::{Error, Result};
use crate::model::{MdpModel, TransitionModel};

use super::{
    Action, DynamicsConfig, PatientState, decode_state, encode_state, reward_and_termination,
    BP_LEVELS, GLUCOSE_LEVELS, HR_LEVELS, LEVEL_NORMAL, N_ACTIONS, N_STATES, O2_LEVELS,
};

/// Distribution over one vital's next level.
type LevelDist = Vec<(u8, f64)>;

fn point(level: u8) -> LevelDist {
    vec![(level, 1.0)]
}

fn two_way(stay: u8, moved: u8, p_move: f64) -> LevelDist {
    if p_move <= 0.0 {
        point(stay)
    } else if p_move >= 1.0 {
        point(moved)
    } else {
        vec![(stay, 1.0 - p_move), (moved, p_move)]
    }
}

/// Spontaneous drift: move one level up or down with probability `p`
/// (direction uniform); a move past the boundary stays put.
fn fluctuate(level: u8, n_levels: u8, p: f64) -> LevelDist {
    let half = p / 2.0;
    let mut out: LevelDist = Vec::with_capacity(3);
    let mut stay = 1.0 - p;
    if level == 0 {
        stay += half;
    } else {
        out.push((level - 1, half));
    }
    if level + 1 == n_levels {
        stay += half;
    } else {
        out.push((level + 1, half));
    }
    out.push((level, stay));
    out.sort_unstable_by_key(|&(l, _)| l);
    out.retain(|&(_, p)| p > 0.0);
    out
}

fn hr_dist(cfg: &DynamicsConfig, state: &PatientState, action: Action) -> LevelDist {
    let hr = state.heart_rate;
    if action.abx {
        if hr == 2 {
            two_way(2, LEVEL_NORMAL, cfg.antibiotics.hr_high_to_normal)
        } else {
            point(hr)
        }
    } else if state.abx {
        // antibiotics withdrawn this step
        if hr == LEVEL_NORMAL {
            two_way(LEVEL_NORMAL, 2, cfg.antibiotics.withdraw_hr_normal_to_high)
        } else {
            point(hr)
        }
    } else {
        fluctuate(hr, HR_LEVELS, cfg.fluctuation.heart_rate)
    }
}

fn bp_dist(cfg: &DynamicsConfig, state: &PatientState, action: Action) -> LevelDist {
    let bp = state.blood_pressure;
    // Vasopressors take precedence over antibiotics for blood pressure.
    if action.vaso {
        // diabetic patients respond worse: weaker recovery, harder overshoot
        let (low_to_normal, normal_to_high) = if state.diabetic {
            (
                cfg.diabetes.vaso_bp_low_to_normal,
                cfg.diabetes.vaso_bp_normal_to_high,
            )
        } else {
            (
                cfg.vasopressors.bp_low_to_normal,
                cfg.vasopressors.bp_normal_to_high,
            )
        };
        match bp {
            0 => two_way(0, LEVEL_NORMAL, low_to_normal),
            1 => two_way(LEVEL_NORMAL, 2, normal_to_high),
            _ => point(bp),
        }
    } else if state.vaso {
        // vasopressors withdrawn: pressure may drop one level
        if bp > 0 {
            two_way(bp, bp - 1, cfg.vasopressors.withdraw_bp_drop)
        } else {
            point(bp)
        }
    } else if action.abx {
        if bp == 2 {
            two_way(2, LEVEL_NORMAL, cfg.antibiotics.bp_high_to_normal)
        } else {
            point(bp)
        }
    } else if state.abx {
        if bp == LEVEL_NORMAL {
            two_way(LEVEL_NORMAL, 2, cfg.antibiotics.withdraw_bp_normal_to_high)
        } else {
            point(bp)
        }
    } else {
        fluctuate(bp, BP_LEVELS, cfg.fluctuation.blood_pressure)
    }
}

fn o2_dist(cfg: &DynamicsConfig, state: &PatientState, action: Action) -> LevelDist {
    let o2 = state.oxygen;
    if action.vent {
        if o2 == 0 {
            two_way(0, LEVEL_NORMAL, cfg.ventilation.o2_low_to_normal)
        } else {
            point(o2)
        }
    } else if state.vent {
        if o2 == LEVEL_NORMAL {
            two_way(LEVEL_NORMAL, 0, cfg.ventilation.withdraw_o2_normal_to_low)
        } else {
            point(o2)
        }
    } else {
        fluctuate(o2, O2_LEVELS, cfg.fluctuation.oxygen)
    }
}

fn glucose_dist(cfg: &DynamicsConfig, state: &PatientState, action: Action) -> LevelDist {
    let base = fluctuate(
        state.glucose,
        GLUCOSE_LEVELS,
        cfg.glucose_fluctuation(state.diabetic),
    );
    // running vasopressors push diabetic glucose upward
    let raise = if state.diabetic && action.vaso {
        cfg.diabetes.vaso_glucose_raise
    } else {
        0.0
    };
    if raise == 0.0 {
        return base;
    }
    let bumped = (state.glucose + 1).min(GLUCOSE_LEVELS - 1);
    let mut out: LevelDist = base
        .into_iter()
        .map(|(l, p)| (l, p * (1.0 - raise)))
        .collect();
    match out.binary_search_by_key(&bumped, |&(l, _)| l) {
        Ok(i) => out[i].1 += raise,
        Err(i) => out.insert(i, (bumped, raise)),
    }
    out.retain(|&(_, p)| p > 0.0);
    out
}

/// Enumerates the full row for `(state, action)` as a product of the
/// per-vital kernels, with treatment flags set to the action's flags.
fn transition_row(
    cfg: &DynamicsConfig,
    state: &PatientState,
    action: Action,
) -> Result<Vec<(u32, f64)>> {
    let hr = hr_dist(cfg, state, action);
    let bp = bp_dist(cfg, state, action);
    let o2 = o2_dist(cfg, state, action);
    let glu = glucose_dist(cfg, state, action);

    let mut row = Vec::with_capacity(hr.len() * bp.len() * o2.len() * glu.len());
    for &(h, ph) in &hr {
        for &(b, pb) in &bp {
            for &(x, px) in &o2 {
                for &(g, pg) in &glu {
                    let p = ph * pb * px * pg;
                    if p == 0.0 {
                        continue;
                    }
                    let next = PatientState {
                        heart_rate: h,
                        blood_pressure: b,
                        oxygen: x,
                        glucose: g,
                        abx: action.abx,
                        vaso: action.vaso,
                        vent: action.vent,
                        diabetic: state.diabetic,
                    };
                    row.push((encode_state(&next)? as u32, p));
                }
            }
        }
    }
    row.sort_unstable_by_key(|&(j, _)| j);
    let sum: f64 = row.iter().map(|&(_, p)| p).sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidConfig(format!(
            "transition row for state {:?} action {} sums to {sum}",
            state,
            action.index()
        )));
    }
    Ok(row)
}

/// Builds the 1440 x 8 x 1440 ground-truth transition model.
pub fn build_true_transitions(cfg: &DynamicsConfig) -> Result<TransitionModel> {
    cfg.validate()?;
    let mut model = TransitionModel::empty(N_STATES, N_ACTIONS, N_STATES);
    for s in 0..N_STATES {
        let state = decode_state(s)?;
        for a in 0..N_ACTIONS {
            let action = Action::from_index(a)?;
            model.set_row(s, a, transition_row(cfg, &state, action)?);
        }
    }
    Ok(model)
}

/// Ground-truth MDP: transitions plus the discharge/death reward rules.
/// Every pair is supported; terminal pairs carry the episode reward.
pub fn build_true_mdp(cfg: &DynamicsConfig) -> Result<MdpModel> {
    let transitions = build_true_transitions(cfg)?;
    let mut rewards = vec![0.0; N_STATES * N_ACTIONS];
    let mut terminal = vec![false; N_STATES * N_ACTIONS];
    for s in 0..N_STATES {
        let state = decode_state(s)?;
        for a in 0..N_ACTIONS {
            let (r, outcome) = reward_and_termination(&state, Action::from_index(a)?);
            let i = s * N_ACTIONS + a;
            rewards[i] = r;
            terminal[i] = outcome.is_some();
        }
    }
    Ok(MdpModel {
        n_states: N_STATES,
        n_actions: N_ACTIONS,
        transitions,
        rewards,
        terminal,
        supported: vec![true; N_STATES * N_ACTIONS],
        penalty: 0.0,
    })
}

/// States eligible as episode starts: all treatments off, fewer than three
/// abnormal vitals, and at least `cfg.initial.min_abnormal_vitals` abnormal.
/// Returned for the non-diabetic flag; the diabetic twin is `index | 1`.
pub fn eligible_initial_states(cfg: &DynamicsConfig) -> Vec<u32> {
    let mut out = Vec::new();
    for s in 0..N_STATES {
        let state = decode_state(s).expect("index in range");
        if state.diabetic || !state.treatments_off() {
            continue;
        }
        let abnormal = state.abnormal_vitals();
        if abnormal >= 3 || abnormal < cfg.initial.min_abnormal_vitals {
            continue;
        }
        out.push(s as u32);
    }
    out
}
