//! Policy evaluation and policy iteration.
//!
//! Evaluation solves the linear fixed-point system `(I - gamma * M_pi) V =
//! c_pi` directly, so the value of a policy is a pure function of `(policy,
//! model, gamma)` with no dependence on call history. Policy iteration and
//! its regularized variant therefore agree bitwise whenever they visit the
//! same policies, which the reduction identities rely on.

use crate::error::{Error, Result};
use crate::model::MdpModel;

use super::{argmax, StochasticPolicy, ValueFunction};

pub const DEFAULT_EVAL_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 1000;

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "discount {gamma} must be in [0, 1)"
        )));
    }
    Ok(())
}

/// Gaussian elimination with partial pivoting on a dense row-major system.
/// `a` is n x n, `b` length n; returns the solution.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best == 0.0 {
            return Err(Error::InvalidModel(
                "singular evaluation system (is the model substochastic?)".into(),
            ));
        }
        if pivot != col {
            for k in col..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            a[row * n + col] = 0.0;
            let (head, tail) = a.split_at_mut(row * n);
            let src = &head[col * n + col + 1..col * n + n];
            let dst = &mut tail[col + 1..n];
            for (d, s) in dst.iter_mut().zip(src) {
                *d -= factor * s;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for col in row + 1..n {
            acc -= a[row * n + col] * x[col];
        }
        x[row] = acc / a[row * n + row];
    }
    Ok(x)
}

/// Exact fixed point of the Bellman operator under `policy`.
///
/// Terminal pairs contribute their reward and unsupported pairs the penalty
/// as constants; supported non-terminal pairs enter the linear system. The
/// residual of the returned value function is verified against `tol`.
pub fn policy_evaluation(
    policy: &StochasticPolicy,
    mdp: &MdpModel,
    gamma: f64,
    tol: f64,
) -> Result<ValueFunction> {
    check_gamma(gamma)?;
    if policy.n_states() != mdp.n_states || policy.n_actions() != mdp.n_actions {
        return Err(Error::InvalidArgument(format!(
            "policy shape {}x{} does not match model {}x{}",
            policy.n_states(),
            policy.n_actions(),
            mdp.n_states,
            mdp.n_actions
        )));
    }
    mdp.transitions.validate_stochastic(1e-9)?;

    let n = mdp.n_states;
    // (I - gamma * M) V = c with M the policy-mixed transition matrix over
    // supported non-terminal pairs and c the policy-mixed constant rewards.
    let mut a = vec![0.0; n * n];
    let mut c = vec![0.0; n];
    for s in 0..n {
        a[s * n + s] = 1.0;
        for (act, &p) in policy.row(s).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let i = mdp.pair(s, act);
            if mdp.terminal[i] {
                c[s] += p * mdp.rewards[i];
            } else if !mdp.supported[i] {
                c[s] += p * mdp.penalty;
            } else {
                c[s] += p * mdp.rewards[i];
                if gamma > 0.0 {
                    for &(next, tp) in mdp.transitions.row(s, act) {
                        a[s * n + next as usize] -= gamma * p * tp;
                    }
                }
            }
        }
    }
    let v = solve_dense(a, c)?;

    let mut residual = 0.0f64;
    for s in 0..n {
        let mut value = 0.0;
        for (act, &p) in policy.row(s).iter().enumerate() {
            if p > 0.0 {
                value += p * mdp.q_value(s, act, &v, gamma);
            }
        }
        residual = residual.max((value - v[s]).abs());
    }
    if residual > tol.max(1e-8) {
        return Err(Error::InvalidModel(format!(
            "policy evaluation residual {residual} exceeds tolerance"
        )));
    }
    Ok(ValueFunction(v))
}

/// Greedy (lowest-index tie) policy for a value function.
pub fn greedy_policy(mdp: &MdpModel, v: &ValueFunction, gamma: f64) -> StochasticPolicy {
    let actions: Vec<usize> = (0..mdp.n_states)
        .map(|s| {
            let q: Vec<f64> = (0..mdp.n_actions)
                .map(|a| mdp.q_value(s, a, &v.0, gamma))
                .collect();
            argmax(&q)
        })
        .collect();
    StochasticPolicy::deterministic(mdp.n_actions, &actions)
}

#[derive(Debug, Clone)]
pub struct PolicyIterationResult {
    pub policy: StochasticPolicy,
    pub value: ValueFunction,
    pub iterations: usize,
    pub converged: bool,
}

/// Plain policy iteration from the uniform policy: evaluate, improve
/// greedily, stop when the greedy policy is stable or `max_iter` is reached.
pub fn policy_iteration(mdp: &MdpModel, gamma: f64, max_iter: usize) -> Result<PolicyIterationResult> {
    policy_iteration_with_tol(mdp, gamma, max_iter, DEFAULT_EVAL_TOL)
}

pub fn policy_iteration_with_tol(
    mdp: &MdpModel,
    gamma: f64,
    max_iter: usize,
    tol: f64,
) -> Result<PolicyIterationResult> {
    check_gamma(gamma)?;
    let mut policy = StochasticPolicy::uniform(mdp.n_states, mdp.n_actions);
    let mut value;
    for it in 0..max_iter {
        value = policy_evaluation(&policy, mdp, gamma, tol)?;
        let improved = greedy_policy(mdp, &value, gamma);
        if improved == policy {
            return Ok(PolicyIterationResult {
                policy,
                value,
                iterations: it + 1,
                converged: true,
            });
        }
        policy = improved;
    }
    value = policy_evaluation(&policy, mdp, gamma, tol)?;
    Ok(PolicyIterationResult {
        policy,
        value,
        iterations: max_iter,
        converged: false,
    })
}
