//! Trajectory sampling and dataset generation.
//!
//! The step loop checks discharge/death on the current state and the chosen
//! action before any transition executes, so an all-normal patient whose
//! clinician stops treatment is discharged deterministically. A state
//! entered with three or more abnormal vitals terminates at the next step.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MdpModel;
use crate::policy::StochasticPolicy;
use crate::rng::stream;

use super::{obs_index, reward_and_termination, Action, DynamicsConfig, decode_state};

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// How a trajectory ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalOutcome {
    Discharge,
    Death,
    /// Horizon reached without discharge or death.
    Censored,
    /// An action without transition data was attempted during counterfactual
    /// rollout; the episode ends with the penalty reward.
    Penalty,
}

/// One recorded decision point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: u32,
    pub obs: u32,
    pub action: u8,
    pub reward: f64,
}

/// An episode. `steps[t].state -> steps[t + 1].state` is the t-th executed
/// transition; for censored episodes the last transition's successor is in
/// `final_state`. Discharge/death/penalty steps execute no transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: u64,
    pub diabetic: bool,
    pub steps: Vec<Step>,
    pub outcome: TerminalOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_state: Option<u32>,
}

impl Trajectory {
    /// Undiscounted episodic return (the terminal reward).
    pub fn episodic_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Discounted return with the per-step discount `gamma`.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut g = 0.0;
        let mut w = 1.0;
        for s in &self.steps {
            g += w * s.reward;
            w *= gamma;
        }
        g
    }

    /// Number of executed transitions.
    pub fn n_transitions(&self) -> usize {
        match self.outcome {
            TerminalOutcome::Censored => self.steps.len(),
            _ => self.steps.len().saturating_sub(1),
        }
    }

    /// Executed transitions as `(state, action, next_state)`.
    pub fn transitions(&self) -> impl Iterator<Item = (u32, u8, u32)> + '_ {
        let n = self.n_transitions();
        (0..n).map(move |t| {
            let next = if t + 1 < self.steps.len() {
                self.steps[t + 1].state
            } else {
                self.final_state.expect("censored trajectory has final state")
            };
            (self.steps[t].state, self.steps[t].action, next)
        })
    }

    /// Executed transitions projected to observation indices.
    pub fn obs_transitions(&self) -> impl Iterator<Item = (u32, u8, u32)> + '_ {
        self.transitions()
            .map(|(s, a, n)| (obs_index(s as usize) as u32, a, obs_index(n as usize) as u32))
    }
}

/// A set of trajectories plus the flag probability it was generated with.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn diabetic_fraction(&self) -> f64 {
        if self.trajectories.is_empty() {
            return 0.0;
        }
        self.trajectories.iter().filter(|t| t.diabetic).count() as f64
            / self.trajectories.len() as f64
    }

    pub fn mean_return(&self) -> f64 {
        if self.trajectories.is_empty() {
            return 0.0;
        }
        self.trajectories
            .iter()
            .map(|t| t.episodic_return())
            .sum::<f64>()
            / self.trajectories.len() as f64
    }
}

/// Which index space a policy's rows are keyed by.
#[derive(Clone, Copy)]
pub enum PolicyRef<'a> {
    /// Rows indexed by full state (diabetes visible).
    State(&'a StochasticPolicy),
    /// Rows indexed by observation (diabetes hidden).
    Obs(&'a StochasticPolicy),
}

impl PolicyRef<'_> {
    #[inline]
    pub fn sample_action<R: Rng>(&self, state: u32, rng: &mut R) -> u8 {
        match self {
            PolicyRef::State(p) => p.sample_action(state as usize, rng) as u8,
            PolicyRef::Obs(p) => p.sample_action(obs_index(state as usize), rng) as u8,
        }
    }
}

/// Ground-truth environment: the true MDP, the episode horizon, and the
/// initial-state pool.
pub struct Simulator {
    pub mdp: MdpModel,
    pub horizon: usize,
    initial_states: Vec<u32>,
}

impl Simulator {
    pub fn from_config(cfg: &DynamicsConfig, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be >= 1".into()));
        }
        let mdp = super::build_true_mdp(cfg)?;
        let initial_states = super::eligible_initial_states(cfg);
        if initial_states.is_empty() {
            return Err(Error::InvalidConfig("no eligible initial state".into()));
        }
        Ok(Self {
            mdp,
            horizon,
            initial_states,
        })
    }

    pub fn sample_initial_state<R: Rng>(&self, diabetic: bool, rng: &mut R) -> u32 {
        let base = self.initial_states[rng.random_range(0..self.initial_states.len())];
        base | u32::from(diabetic)
    }

    fn sample_next<R: Rng>(&self, state: u32, action: u8, rng: &mut R) -> u32 {
        let row = self.mdp.transitions.row(state as usize, action as usize);
        debug_assert!(!row.is_empty());
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(next, p) in row {
            acc += p;
            if u < acc {
                return next;
            }
        }
        row.last().expect("non-empty row").0
    }

    /// Rolls one episode from an explicit initial state.
    pub fn sample_trajectory_from<R: Rng>(
        &self,
        init_state: u32,
        policy: PolicyRef<'_>,
        id: u64,
        rng: &mut R,
    ) -> Trajectory {
        let diabetic = init_state & 1 != 0;
        let mut state = init_state;
        let mut steps = Vec::new();
        for _ in 0..self.horizon {
            let action = policy.sample_action(state, rng);
            let patient = decode_state(state as usize).expect("state in range");
            let (reward, outcome) =
                reward_and_termination(&patient, Action::from_index(action as usize).unwrap());
            steps.push(Step {
                state,
                obs: obs_index(state as usize) as u32,
                action,
                reward,
            });
            if let Some(outcome) = outcome {
                return Trajectory {
                    id,
                    diabetic,
                    steps,
                    outcome,
                    final_state: None,
                };
            }
            state = self.sample_next(state, action, rng);
        }
        Trajectory {
            id,
            diabetic,
            steps,
            outcome: TerminalOutcome::Censored,
            final_state: Some(state),
        }
    }

    /// Rolls one episode, drawing the initial state and using the trajectory
    /// id only as a label.
    pub fn sample_trajectory<R: Rng>(
        &self,
        policy: PolicyRef<'_>,
        diabetic: bool,
        id: u64,
        rng: &mut R,
    ) -> Trajectory {
        let init = self.sample_initial_state(diabetic, rng);
        self.sample_trajectory_from(init, policy, id, rng)
    }

    /// Generates `n` trajectories, each from an independent stream derived
    /// from `seed`, with the patient diabetic with probability `p_diab`.
    pub fn generate_dataset(
        &self,
        policy: PolicyRef<'_>,
        n: usize,
        p_diab: f64,
        seed: u64,
    ) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if !(0.0..=1.0).contains(&p_diab) {
            return Err(Error::InvalidArgument(format!(
                "p_diab = {p_diab} is not in [0, 1]"
            )));
        }
        let trajectories: Vec<Trajectory> = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, "trajectory", i);
                let diabetic = rng.random::<f64>() < p_diab;
                self.sample_trajectory(policy, diabetic, i, &mut rng)
            })
            .collect();
        Ok(Dataset { trajectories })
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    version: u32,
    n_trajectories: usize,
}

/// Writes a dataset as line-delimited JSON with a version header line.
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let header = DatasetHeader {
        format: "sepsis-trajectories".into(),
        version: DATASET_FORMAT_VERSION,
        n_trajectories: dataset.trajectories.len(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for t in &dataset.trajectories {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Format("empty dataset file".into()))??;
    let header: DatasetHeader = serde_json::from_str(&header_line)?;
    if header.format != "sepsis-trajectories" || header.version != DATASET_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset header: {} v{}",
            header.format, header.version
        )));
    }
    let mut trajectories = Vec::with_capacity(header.n_trajectories);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        trajectories.push(serde_json::from_str(&line)?);
    }
    if trajectories.len() != header.n_trajectories {
        return Err(Error::Format(format!(
            "dataset header promises {} trajectories, found {}",
            header.n_trajectories,
            trajectories.len()
        )));
    }
    Ok(Dataset { trajectories })
}
