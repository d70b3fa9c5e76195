//! End-to-end experiment pipeline: environment construction, dataset
//! preparation, method training, and evaluation. The CLI wraps this module;
//! the acceptance suite drives it directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    ate, behavior_clone_smoothed, cf_pe, true_reward, wis, wis_full_state, CfPeConfig, CfPeReport,
    EvalReport, WisEstimate,
};
use crate::policy::{make_behavior_policy, policy_iteration_with_tol, StochasticPolicy};
use crate::rng::derive_seed;
use crate::scm::RolloutPrior;
use crate::sim::{Dataset, DynamicsConfig, PolicyRef, Simulator};
use crate::transfer::{
    estimate_transitions, run_baseline, BaselineInputs, BaselineKind, CfptConfig, EstimatedModel,
};

pub const DEFAULT_HORIZON: usize = 20;

/// Source-domain generation settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSpec {
    pub n: usize,
    pub p_diab: f64,
    /// Behavior-policy randomization.
    pub epsilon: f64,
    /// Smoothing applied to the learned source policy so it is a full-support
    /// distribution (log-aggregation needs one); the repo default mirrors the
    /// behavior randomization scale.
    pub policy_smoothing: f64,
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self {
            n: 10_000,
            p_diab: 0.1,
            epsilon: 0.15,
            policy_smoothing: 0.1,
        }
    }
}

/// Target-domain generation settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TargetSpec {
    pub n: usize,
    pub p_diab: f64,
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self { n: 2000, p_diab: 0.8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSpec {
    pub n_eval: usize,
    pub bootstrap: usize,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            n_eval: 5000,
            bootstrap: 100,
        }
    }
}

/// Everything a single experiment needs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentSpec {
    pub dynamics: DynamicsConfig,
    pub source: SourceSpec,
    pub target: TargetSpec,
    pub cfpt: CfptConfig,
    pub eval: EvalSpec,
    pub methods: Vec<BaselineKind>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.dynamics.validate()?;
        self.cfpt.validate()?;
        for (name, v) in [
            ("source.p_diab", self.source.p_diab),
            ("target.p_diab", self.target.p_diab),
            ("source.epsilon", self.source.epsilon),
            ("source.policy_smoothing", self.source.policy_smoothing),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} = {v} is not in [0, 1]")));
            }
        }
        if self.source.n == 0 || self.target.n == 0 || self.eval.n_eval == 0 {
            return Err(Error::InvalidConfig("dataset and eval sizes must be >= 1".into()));
        }
        Ok(())
    }
}

/// The ground-truth world plus the behavior policy used to generate data.
pub struct Environment {
    pub sim: Simulator,
    /// Full-state optimal policy (diabetes visible).
    pub optimal_full: StochasticPolicy,
    /// epsilon-randomized behavior policy over full states.
    pub mu: StochasticPolicy,
}

/// Solves the true MDP with full state access and randomizes it into the
/// behavior policy. Deterministic: no sampling is involved.
pub fn build_environment(spec: &ExperimentSpec) -> Result<Environment> {
    spec.validate()?;
    let sim = Simulator::from_config(&spec.dynamics, spec.cfpt.horizon)?;
    let solved = policy_iteration_with_tol(
        &sim.mdp,
        spec.cfpt.gamma,
        spec.cfpt.max_pi_iter,
        spec.cfpt.eval_tol,
    )?;
    let mu = make_behavior_policy(&solved.policy, spec.source.epsilon)?;
    Ok(Environment {
        sim,
        optimal_full: solved.policy,
        mu,
    })
}

/// Datasets and source-domain artifacts shared by every method.
pub struct PreparedData {
    pub source: Dataset,
    pub target: Dataset,
    pub p_source: EstimatedModel,
    pub p_target: EstimatedModel,
    /// Learned source policy, smoothed to full support.
    pub pi_source: StochasticPolicy,
    /// Laplace-smoothed behavior clone of the target data (for WIS).
    pub mu_hat: StochasticPolicy,
}

pub fn prepare_data(env: &Environment, spec: &ExperimentSpec, seed: u64) -> Result<PreparedData> {
    let source = env.sim.generate_dataset(
        PolicyRef::State(&env.mu),
        spec.source.n,
        spec.source.p_diab,
        derive_seed(seed, "source-data", 0),
    )?;
    let target = env.sim.generate_dataset(
        PolicyRef::State(&env.mu),
        spec.target.n,
        spec.target.p_diab,
        derive_seed(seed, "target-data", 0),
    )?;
    let p_source = estimate_transitions(&source)?;
    let p_target = estimate_transitions(&target)?;
    let solved = policy_iteration_with_tol(
        &p_source.to_mdp(spec.cfpt.penalty_reward)?,
        spec.cfpt.gamma,
        spec.cfpt.max_pi_iter,
        spec.cfpt.eval_tol,
    )?;
    let pi_source = make_behavior_policy(&solved.policy, spec.source.policy_smoothing)?;
    let mu_hat = behavior_clone_smoothed(&target)?;
    Ok(PreparedData {
        source,
        target,
        p_source,
        p_target,
        pi_source,
        mu_hat,
    })
}

/// Trained policy with its evaluation artifacts.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: BaselineKind,
    pub policy: StochasticPolicy,
    pub true_report: EvalReport,
    pub wis: WisEstimate,
    /// Difference of true-reward means against the behavior policy.
    pub ate_vs_behavior: f64,
    /// Counterfactual policy evaluation (observation-indexed policies only).
    pub cfpe: Option<CfPeReport>,
}

/// One complete run: behavior reference plus every requested method.
pub struct RunResult {
    pub seed: u64,
    pub behavior_report: EvalReport,
    pub methods: Vec<MethodResult>,
}

pub fn train_method(
    kind: BaselineKind,
    data: &PreparedData,
    cfg: &CfptConfig,
    seed: u64,
) -> Result<StochasticPolicy> {
    let inputs = BaselineInputs {
        target: Some(&data.target),
        source: Some(&data.source),
        pi_source: Some(&data.pi_source),
        p_source: Some(&data.p_source),
    };
    run_baseline(kind, inputs, cfg, derive_seed(seed, &format!("train-{kind}"), 0))
}

pub fn evaluate_policy(
    kind: BaselineKind,
    policy: &StochasticPolicy,
    env: &Environment,
    data: &PreparedData,
    spec: &ExperimentSpec,
    behavior_report: &EvalReport,
    seed: u64,
) -> Result<MethodResult> {
    // every method shares the evaluation stream so comparisons see the same
    // patient draws
    let eval_seed = derive_seed(seed, "eval", 0);
    let full_state = kind == BaselineKind::FullObs;
    let policy_ref = if full_state {
        PolicyRef::State(policy)
    } else {
        PolicyRef::Obs(policy)
    };
    let true_report = true_reward(
        policy_ref,
        &env.sim,
        spec.target.p_diab,
        spec.eval.n_eval,
        spec.eval.bootstrap,
        eval_seed,
    )?;
    let wis_est = if full_state {
        wis_full_state(&data.target, policy, &data.mu_hat, 1.0)?
    } else {
        wis(&data.target, policy, &data.mu_hat, 1.0)?
    };
    let cfpe = if full_state {
        None
    } else {
        let prior = RolloutPrior {
            target: &data.p_target,
            source: Some(&data.p_source),
            w_target: spec.cfpt.w_target,
        };
        let cfg = CfPeConfig {
            w_target: spec.cfpt.w_target,
            horizon: spec.cfpt.horizon,
            penalty_reward: spec.cfpt.penalty_reward,
            replay_observed_actions: false,
        };
        Some(cf_pe(
            &data.target,
            policy,
            &data.p_target,
            &prior,
            &cfg,
            derive_seed(seed, &format!("cfpe-{kind}"), 0),
        )?)
    };
    Ok(MethodResult {
        method: kind,
        policy: policy.clone(),
        ate_vs_behavior: ate(true_report.mean_return, behavior_report.mean_return),
        true_report,
        wis: wis_est,
        cfpe,
    })
}

/// Builds the environment, prepares data, trains every requested method, and
/// evaluates each one. Fully determined by `(spec, seed)`.
pub fn run_experiment(spec: &ExperimentSpec, seed: u64) -> Result<RunResult> {
    let env = build_environment(spec)?;
    let data = prepare_data(&env, spec, seed)?;
    run_experiment_prepared(spec, &env, &data, seed)
}

/// Same as [`run_experiment`] but reusing an already built environment and
/// data (sweeps share the environment across grid points).
pub fn run_experiment_prepared(
    spec: &ExperimentSpec,
    env: &Environment,
    data: &PreparedData,
    seed: u64,
) -> Result<RunResult> {
    let behavior_report = true_reward(
        PolicyRef::State(&env.mu),
        &env.sim,
        spec.target.p_diab,
        spec.eval.n_eval,
        spec.eval.bootstrap,
        derive_seed(seed, "eval", 0),
    )?;
    let mut methods = Vec::with_capacity(spec.methods.len());
    for &kind in &spec.methods {
        let policy = train_method(kind, data, &spec.cfpt, seed)?;
        methods.push(evaluate_policy(
            kind,
            &policy,
            env,
            data,
            spec,
            &behavior_report,
            seed,
        )?);
    }
    Ok(RunResult {
        seed,
        behavior_report,
        methods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> ExperimentSpec {
        ExperimentSpec {
            source: SourceSpec {
                n: 200,
                ..SourceSpec::default()
            },
            target: TargetSpec { n: 80, p_diab: 0.8 },
            cfpt: CfptConfig {
                outer_iters: 2,
                ..CfptConfig::default()
            },
            eval: EvalSpec {
                n_eval: 100,
                bootstrap: 20,
            },
            methods: vec![BaselineKind::Blind, BaselineKind::Bc],
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn run_is_deterministic_given_seed() {
        let spec = tiny_spec();
        let a = run_experiment(&spec, 5).unwrap();
        let b = run_experiment(&spec, 5).unwrap();
        assert_eq!(a.behavior_report.mean_return, b.behavior_report.mean_return);
        for (x, y) in a.methods.iter().zip(&b.methods) {
            assert_eq!(x.policy, y.policy);
            assert_eq!(x.true_report.mean_return, y.true_report.mean_return);
            assert_eq!(x.wis.estimate, y.wis.estimate);
        }
    }

    #[test]
    fn adding_a_method_does_not_perturb_existing_results() {
        let mut spec = tiny_spec();
        let short = run_experiment(&spec, 6).unwrap();
        spec.methods.push(BaselineKind::Random);
        let long = run_experiment(&spec, 6).unwrap();
        for (x, y) in short.methods.iter().zip(&long.methods) {
            assert_eq!(x.method, y.method);
            assert_eq!(x.true_report.mean_return, y.true_report.mean_return);
        }
    }

    #[test]
    fn blind_ate_matches_report_difference() {
        let spec = tiny_spec();
        let run = run_experiment(&spec, 7).unwrap();
        for m in &run.methods {
            assert_eq!(
                m.ate_vs_behavior,
                m.true_report.mean_return - run.behavior_report.mean_return
            );
        }
    }
}
