//! Baseline and ablation methods.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::policy::{policy_iteration_with_tol, reg_pi, StochasticPolicy};
use crate::sim::{Dataset, Trajectory, N_ACTIONS, N_OBS};

use super::{cf_pi, estimate_from_trajectories, estimate_transitions, CfptConfig, EstimatedModel, IndexSpace};

/// Every method the experiment harness can train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Uniform action selection.
    Random,
    /// Policy iteration on the target estimate alone.
    Scratch,
    /// Policy iteration on the estimate from pooled source + target data.
    Pooled,
    /// The source policy applied without adaptation.
    Blind,
    /// Regularized policy iteration on the target estimate (no
    /// counterfactual sampling).
    RegPi,
    /// CF-PI with the source prior disabled in the abduction mixture.
    RedCfpt,
    /// Full counterfactually guided transfer.
    Cfpt,
    /// Behavior cloning: per-observation argmax of action counts.
    Bc,
    /// Policy iteration on full-state estimates (diabetes visible).
    FullObs,
}

pub const ALL_BASELINES: [BaselineKind; 9] = [
    BaselineKind::Random,
    BaselineKind::Scratch,
    BaselineKind::Pooled,
    BaselineKind::Blind,
    BaselineKind::RegPi,
    BaselineKind::RedCfpt,
    BaselineKind::Cfpt,
    BaselineKind::Bc,
    BaselineKind::FullObs,
];

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            BaselineKind::Random => "random",
            BaselineKind::Scratch => "scratch",
            BaselineKind::Pooled => "pooled",
            BaselineKind::Blind => "blind",
            BaselineKind::RegPi => "regpi",
            BaselineKind::RedCfpt => "red_cfpt",
            BaselineKind::Cfpt => "cfpt",
            BaselineKind::Bc => "bc",
            BaselineKind::FullObs => "full_obs",
        };
        f.write_str(name)
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(BaselineKind::Random),
            "scratch" => Ok(BaselineKind::Scratch),
            "pooled" => Ok(BaselineKind::Pooled),
            "blind" => Ok(BaselineKind::Blind),
            "regpi" => Ok(BaselineKind::RegPi),
            "red_cfpt" => Ok(BaselineKind::RedCfpt),
            "cfpt" => Ok(BaselineKind::Cfpt),
            "bc" => Ok(BaselineKind::Bc),
            "full_obs" => Ok(BaselineKind::FullObs),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

/// Inputs a method may require; missing required pieces are a configuration
/// error before any training starts.
#[derive(Clone, Copy, Default)]
pub struct BaselineInputs<'a> {
    pub target: Option<&'a Dataset>,
    pub source: Option<&'a Dataset>,
    pub pi_source: Option<&'a StochasticPolicy>,
    pub p_source: Option<&'a EstimatedModel>,
}

impl<'a> BaselineInputs<'a> {
    fn target(&self, method: BaselineKind) -> Result<&'a Dataset> {
        self.target.ok_or_else(|| missing(method, "target dataset"))
    }

    fn source(&self, method: BaselineKind) -> Result<&'a Dataset> {
        self.source.ok_or_else(|| missing(method, "source dataset"))
    }

    fn pi_source(&self, method: BaselineKind) -> Result<&'a StochasticPolicy> {
        self.pi_source
            .ok_or_else(|| missing(method, "source policy"))
    }

    fn p_source(&self, method: BaselineKind) -> Result<&'a EstimatedModel> {
        self.p_source
            .ok_or_else(|| missing(method, "source transition estimate"))
    }
}

fn missing(method: BaselineKind, what: &str) -> Error {
    Error::MissingInput {
        method: method.to_string(),
        what: what.into(),
    }
}

/// Per-observation argmax of behavior action counts; observations never
/// visited fall back to the uniform row.
pub fn behavior_clone(trajectories: &[Trajectory]) -> Result<StochasticPolicy> {
    if trajectories.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut counts = vec![0u64; N_OBS * N_ACTIONS];
    for t in trajectories {
        for s in &t.steps {
            counts[s.obs as usize * N_ACTIONS + s.action as usize] += 1;
        }
    }
    let mut rows = vec![vec![1.0 / N_ACTIONS as f64; N_ACTIONS]; N_OBS];
    for o in 0..N_OBS {
        let row = &counts[o * N_ACTIONS..(o + 1) * N_ACTIONS];
        if row.iter().any(|&c| c > 0) {
            let mut best = 0;
            for (a, &c) in row.iter().enumerate() {
                if c > row[best] {
                    best = a;
                }
            }
            rows[o].fill(0.0);
            rows[o][best] = 1.0;
        }
    }
    StochasticPolicy::from_rows(rows)
}

/// Trains one method. Every method returns an observation-indexed policy
/// except `FullObs`, whose rows are indexed by full state.
pub fn run_baseline(
    kind: BaselineKind,
    inputs: BaselineInputs<'_>,
    cfg: &CfptConfig,
    seed: u64,
) -> Result<StochasticPolicy> {
    cfg.validate()?;
    match kind {
        BaselineKind::Random => Ok(StochasticPolicy::uniform(N_OBS, N_ACTIONS)),
        BaselineKind::Scratch => {
            let est = estimate_transitions(inputs.target(kind)?)?;
            let res = policy_iteration_with_tol(
                &est.to_mdp(cfg.penalty_reward)?,
                cfg.gamma,
                cfg.max_pi_iter,
                cfg.eval_tol,
            )?;
            Ok(res.policy)
        }
        BaselineKind::Pooled => {
            let mut pooled: Vec<Trajectory> = inputs.source(kind)?.trajectories.clone();
            pooled.extend(inputs.target(kind)?.trajectories.iter().cloned());
            let est = estimate_from_trajectories(&pooled, IndexSpace::Observation)?;
            let res = policy_iteration_with_tol(
                &est.to_mdp(cfg.penalty_reward)?,
                cfg.gamma,
                cfg.max_pi_iter,
                cfg.eval_tol,
            )?;
            Ok(res.policy)
        }
        BaselineKind::Blind => Ok(inputs.pi_source(kind)?.clone()),
        BaselineKind::RegPi => {
            let est = estimate_transitions(inputs.target(kind)?)?;
            let pi0 = StochasticPolicy::uniform(N_OBS, N_ACTIONS);
            let res = reg_pi(
                &pi0,
                cfg.gamma,
                &est.to_mdp(cfg.penalty_reward)?,
                inputs.pi_source(kind)?,
                cfg.lambda,
                cfg.max_pi_iter,
                cfg.eval_tol,
            )?;
            Ok(res.policy)
        }
        BaselineKind::RedCfpt => {
            let reduced = CfptConfig {
                w_target: 1.0,
                ..cfg.clone()
            };
            let pi0 = StochasticPolicy::uniform(N_OBS, N_ACTIONS);
            let res = cf_pi(
                &pi0,
                inputs.pi_source(kind)?,
                inputs.p_source(kind)?,
                inputs.target(kind)?,
                &reduced,
                seed,
            )?;
            Ok(res.policy)
        }
        BaselineKind::Cfpt => {
            let pi0 = StochasticPolicy::uniform(N_OBS, N_ACTIONS);
            let res = cf_pi(
                &pi0,
                inputs.pi_source(kind)?,
                inputs.p_source(kind)?,
                inputs.target(kind)?,
                cfg,
                seed,
            )?;
            Ok(res.policy)
        }
        BaselineKind::Bc => behavior_clone(&inputs.target(kind)?.trajectories),
        BaselineKind::FullObs => {
            let est =
                estimate_from_trajectories(&inputs.target(kind)?.trajectories, IndexSpace::FullState)?;
            let res = policy_iteration_with_tol(
                &est.to_mdp(cfg.penalty_reward)?,
                cfg.gamma,
                cfg.max_pi_iter,
                cfg.eval_tol,
            )?;
            Ok(res.policy)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{DynamicsConfig, PolicyRef, Simulator, Step, TerminalOutcome};

    #[test]
    fn blind_returns_source_policy_bitwise() {
        let pi_source = StochasticPolicy::uniform(N_OBS, N_ACTIONS);
        let inputs = BaselineInputs {
            pi_source: Some(&pi_source),
            ..Default::default()
        };
        let out = run_baseline(BaselineKind::Blind, inputs, &CfptConfig::default(), 0).unwrap();
        assert_eq!(out, pi_source);
    }

    #[test]
    fn missing_input_is_a_configuration_error() {
        let err = run_baseline(
            BaselineKind::Scratch,
            BaselineInputs::default(),
            &CfptConfig::default(),
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingInput { .. }));
    }

    #[test]
    fn behavior_cloning_picks_the_dominant_action() {
        let mk = |obs: u32, action: u8| Trajectory {
            id: 0,
            diabetic: false,
            steps: vec![Step {
                state: obs << 1,
                obs,
                action,
                reward: 0.0,
            }],
            outcome: TerminalOutcome::Censored,
            final_state: Some(0),
        };
        let trajs = vec![mk(7, 3), mk(7, 3), mk(7, 1)];
        let pi = behavior_clone(&trajs).unwrap();
        assert_eq!(pi.prob(7, 3), 1.0);
        // unvisited observations stay uniform
        assert!((pi.prob(100, 0) - 0.125).abs() < 1e-12);
    }

    #[test]
    fn method_names_round_trip() {
        for kind in ALL_BASELINES {
            let parsed: BaselineKind = kind.to_string().parse().unwrap();
            assert_eq!(parsed, kind);
        }
        assert!("nope".parse::<BaselineKind>().is_err());
    }

    #[test]
    fn full_obs_policy_is_state_indexed() {
        let sim = Simulator::from_config(&DynamicsConfig::default(), 20).unwrap();
        let pi = StochasticPolicy::uniform(N_OBS, 8);
        let ds = sim
            .generate_dataset(PolicyRef::Obs(&pi), 100, 0.5, 31)
            .unwrap();
        let inputs = BaselineInputs {
            target: Some(&ds),
            ..Default::default()
        };
        let out = run_baseline(BaselineKind::FullObs, inputs, &CfptConfig::default(), 0).unwrap();
        assert_eq!(out.n_states(), crate::sim::N_STATES);
    }
}
