//! Gumbel-Max structural causal model engine.
//!
//! Categorical mechanisms are `X := argmax_j (log alpha_j + g_j)` with
//! independent standard Gumbel noise `g`. Conditioning the noise on an
//! observed outcome (top-down sampling) makes counterfactual queries
//! answerable: the posterior max `log alpha_k' + g_k'` is Gumbel with
//! location `log sum_k alpha_k` and every other coordinate is truncated
//! below it. Reusing the abducted noise under a different row yields the
//! counterfactual outcome, and a mixture prior over the conditioning row
//! lets a source domain inform target-domain abduction.

mod rollout;

pub use rollout::{counterfactual_batch, counterfactual_rollout, ActionChoice, RolloutPrior};

use rand::Rng;

use crate::error::{Error, Result};

/// Per-category exogenous noise (scale 1, location 0). When produced by
/// [`topdown`], `argmax(log_alpha + values)` equals the conditioned index.
#[derive(Debug, Clone, PartialEq)]
pub struct GumbelVector {
    pub values: Vec<f64>,
    /// Index the noise was conditioned on, when abducted.
    pub observed: Option<usize>,
}

/// Standard Gumbel(0, 1) draw.
#[inline]
pub fn standard_gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    // keep u strictly inside (0, 1)
    let u = u.max(f64::MIN_POSITIVE);
    -(-u.ln()).ln()
}

/// Gumbel value truncated to lie below `bound`, computed stably:
/// `-ln(exp(-bound) + exp(-g))`.
#[inline]
pub(crate) fn truncated_below(g: f64, bound: f64) -> f64 {
    let lo = g.min(bound);
    let hi = g.max(bound);
    lo - (-(hi - lo)).exp().ln_1p()
}

/// Log-sum-exp over entries that may be negative infinity.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values
        .iter()
        .filter(|v| v.is_finite())
        .map(|&v| (v - max).exp())
        .sum();
    max + sum.ln()
}

/// Natural log of each probability; zeros map to negative infinity.
pub fn log_probs(probs: &[f64]) -> Vec<f64> {
    probs
        .iter()
        .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
        .collect()
}

/// Samples a category via the Gumbel-Max trick: `argmax_j (log alpha_j + g_j)`.
/// Category `k` is returned with probability `alpha_k / sum alpha`.
pub fn gumbel_max_sample<R: Rng + ?Sized>(log_alpha: &[f64], rng: &mut R) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &la) in log_alpha.iter().enumerate() {
        if la == f64::NEG_INFINITY {
            continue;
        }
        let v = la + standard_gumbel(rng);
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((j, v)),
        }
    }
    best.map(|(j, _)| j).ok_or_else(|| {
        Error::InvalidDistribution("all categories have zero probability".into())
    })
}

/// Top-down posterior sampling: noise conditioned on `argmax = k_prime`.
///
/// The returned vector satisfies the conditioning exactly for every sample.
/// Marginally, `log_alpha[k'] + values[k']` is Gumbel with location
/// `log sum_k alpha_k`; the other coordinates with positive mass are
/// truncated below that maximum, and zero-mass coordinates carry untouched
/// prior noise (they can never win under the conditioning row, so the
/// observation says nothing about them).
pub fn topdown<R: Rng + ?Sized>(
    log_alpha: &[f64],
    k_prime: usize,
    rng: &mut R,
) -> Result<GumbelVector> {
    if k_prime >= log_alpha.len() {
        return Err(Error::InvalidArgument(format!(
            "observed index {k_prime} out of range for {} categories",
            log_alpha.len()
        )));
    }
    if log_alpha[k_prime] == f64::NEG_INFINITY {
        return Err(Error::ImpossibleObservation { index: k_prime });
    }
    let z = log_sum_exp(log_alpha);
    let max_value = z + standard_gumbel(rng);
    let mut values = vec![0.0; log_alpha.len()];
    for (j, &la) in log_alpha.iter().enumerate() {
        if j == k_prime {
            values[j] = max_value - la;
        } else if la == f64::NEG_INFINITY {
            values[j] = standard_gumbel(rng);
        } else {
            let g = la + standard_gumbel(rng);
            values[j] = truncated_below(g, max_value) - la;
        }
    }
    Ok(GumbelVector {
        values,
        observed: Some(k_prime),
    })
}

/// Mixture prior over the conditioning row: the target row with probability
/// `w_target`, the source row otherwise.
#[derive(Debug, Clone)]
pub struct MixturePrior {
    pub log_alpha_source: Vec<f64>,
    pub log_alpha_target: Vec<f64>,
    /// Probability of conditioning on the target row.
    pub w_target: f64,
}

impl MixturePrior {
    pub fn new(log_alpha_source: Vec<f64>, log_alpha_target: Vec<f64>, w_target: f64) -> Result<Self> {
        if log_alpha_source.len() != log_alpha_target.len() {
            return Err(Error::InvalidArgument(
                "mixture components have different lengths".into(),
            ));
        }
        if !(0.0..=1.0).contains(&w_target) {
            return Err(Error::InvalidArgument(format!(
                "w_target = {w_target} is not in [0, 1]"
            )));
        }
        Ok(Self {
            log_alpha_source,
            log_alpha_target,
            w_target,
        })
    }
}

/// One counterfactual draw: abducted noise and the outcome it implies under
/// the counterfactual row.
#[derive(Debug, Clone)]
pub struct CounterfactualSample {
    pub cf_next_state: usize,
    pub gumbel: GumbelVector,
    /// Mixture component the noise was conditioned on (rho in the Bernoulli
    /// selection): true = target row.
    pub from_target: bool,
    /// The selected component had zero mass on the observation and the other
    /// component was used instead.
    pub fallback: bool,
}

/// Modified top-down sampling with an informative prior.
///
/// For each of `n` samples: select a mixture component with probability
/// `w_target`, abduct the noise from that row conditioned on `k_prime`, then
/// take the argmax under the counterfactual row `log_alpha_hat`. A selected
/// component with zero mass on `k_prime` falls back to the other component;
/// if both are zero the observation is unexplainable.
pub fn mixture_topdown<R: Rng + ?Sized>(
    prior: &MixturePrior,
    log_alpha_hat: &[f64],
    k_prime: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<CounterfactualSample>> {
    if log_alpha_hat.len() != prior.log_alpha_target.len() {
        return Err(Error::InvalidArgument(
            "counterfactual row length differs from the prior rows".into(),
        ));
    }
    if k_prime >= log_alpha_hat.len() {
        return Err(Error::InvalidArgument(format!(
            "observed index {k_prime} out of range"
        )));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let pick_target = rng.random::<f64>() < prior.w_target;
        let (row, fallback) = select_component(prior, pick_target, k_prime)?;
        let gumbel = topdown(row, k_prime, rng)?;
        let cf_next_state = argmax_sum(log_alpha_hat, &gumbel.values)?;
        out.push(CounterfactualSample {
            cf_next_state,
            gumbel,
            from_target: pick_target,
            fallback,
        });
    }
    Ok(out)
}

fn select_component<'a>(
    prior: &'a MixturePrior,
    pick_target: bool,
    k_prime: usize,
) -> Result<(&'a [f64], bool)> {
    let (chosen, other) = if pick_target {
        (&prior.log_alpha_target, &prior.log_alpha_source)
    } else {
        (&prior.log_alpha_source, &prior.log_alpha_target)
    };
    if chosen[k_prime] != f64::NEG_INFINITY {
        Ok((chosen, false))
    } else if other[k_prime] != f64::NEG_INFINITY {
        log::trace!(
            "mixture component without mass on observation {k_prime}; falling back to the other component"
        );
        Ok((other, true))
    } else {
        Err(Error::ImpossibleObservation { index: k_prime })
    }
}

fn argmax_sum(log_alpha: &[f64], noise: &[f64]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, (&la, &g)) in log_alpha.iter().zip(noise).enumerate() {
        if la == f64::NEG_INFINITY {
            continue;
        }
        let v = la + g;
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((j, v)),
        }
    }
    best.map(|(j, _)| j).ok_or_else(|| {
        Error::InvalidDistribution("counterfactual row has no positive-mass category".into())
    })
}

/// Counts violations of counterfactual stability over `samples` draws: the
/// noise is abducted from `p` conditioned on `k_prime` and replayed under
/// `p_prime`; an outcome `j != k_prime` with
/// `p'[k'] / p[k'] >= p'[j] / p[j]` is a violation. A Gumbel-Max mechanism
/// admits none.
pub fn check_counterfactual_stability<R: Rng + ?Sized>(
    p: &[f64],
    p_prime: &[f64],
    k_prime: usize,
    samples: usize,
    rng: &mut R,
) -> Result<usize> {
    let log_p = log_probs(p);
    let log_p_prime = log_probs(p_prime);
    let mut violations = 0;
    for _ in 0..samples {
        let noise = topdown(&log_p, k_prime, rng)?;
        let j = argmax_sum(&log_p_prime, &noise.values)?;
        if is_stability_violation(p, p_prime, k_prime, j) {
            violations += 1;
        }
    }
    Ok(violations)
}

/// Same count with the noise drawn through the mixture prior; each sample is
/// checked against the component that actually conditioned it.
pub fn check_mixture_stability<R: Rng + ?Sized>(
    p_source: &[f64],
    p_target: &[f64],
    w_target: f64,
    p_prime: &[f64],
    k_prime: usize,
    samples: usize,
    rng: &mut R,
) -> Result<usize> {
    let prior = MixturePrior::new(log_probs(p_source), log_probs(p_target), w_target)?;
    let log_p_prime = log_probs(p_prime);
    let draws = mixture_topdown(&prior, &log_p_prime, k_prime, samples, rng)?;
    let mut violations = 0;
    for d in draws {
        let conditioned_on_target = d.from_target != d.fallback;
        let p = if conditioned_on_target { p_target } else { p_source };
        if is_stability_violation(p, p_prime, k_prime, d.cf_next_state) {
            violations += 1;
        }
    }
    Ok(violations)
}

fn is_stability_violation(p: &[f64], p_prime: &[f64], k_prime: usize, j: usize) -> bool {
    if j == k_prime {
        return false;
    }
    // ratio p'[j] / p[j]; an outcome with p[j] = 0 has infinite ratio and
    // can never be a violation
    if p[j] <= 0.0 {
        return false;
    }
    let lhs = p_prime[k_prime].ln() - p[k_prime].ln();
    let rhs = p_prime[j].ln() - p[j].ln();
    lhs >= rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn degenerate_distribution_always_returns_its_atom() {
        let log_alpha = log_probs(&[1.0, 0.0, 0.0]);
        let mut rng = stream(1, "scm", 0);
        for _ in 0..200 {
            assert_eq!(gumbel_max_sample(&log_alpha, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn all_zero_row_is_rejected() {
        let log_alpha = log_probs(&[0.0, 0.0]);
        let mut rng = stream(1, "scm", 1);
        assert!(matches!(
            gumbel_max_sample(&log_alpha, &mut rng),
            Err(Error::InvalidDistribution(_))
        ));
    }

    #[test]
    fn topdown_single_category_is_trivial() {
        let mut rng = stream(1, "scm", 2);
        let g = topdown(&log_probs(&[1.0]), 0, &mut rng).unwrap();
        assert_eq!(g.values.len(), 1);
        assert_eq!(g.observed, Some(0));
    }

    #[test]
    fn topdown_conditioning_holds_surely() {
        let alpha = [0.05, 0.6, 0.25, 0.1];
        let log_alpha = log_probs(&alpha);
        let mut rng = stream(2, "scm", 0);
        for k in 0..alpha.len() {
            for _ in 0..2_000 {
                let g = topdown(&log_alpha, k, &mut rng).unwrap();
                let winner = argmax_sum(&log_alpha, &g.values).unwrap();
                assert_eq!(winner, k);
                for (j, (&la, &gv)) in log_alpha.iter().zip(&g.values).enumerate() {
                    if j != k {
                        assert!(log_alpha[k] + g.values[k] >= la + gv);
                    }
                }
            }
        }
    }

    #[test]
    fn topdown_zero_mass_observation_is_impossible() {
        let log_alpha = log_probs(&[0.7, 0.0, 0.3]);
        let mut rng = stream(3, "scm", 0);
        assert!(matches!(
            topdown(&log_alpha, 1, &mut rng),
            Err(Error::ImpossibleObservation { index: 1 })
        ));
    }

    #[test]
    fn zero_mass_categories_keep_prior_noise_and_can_win_counterfactually() {
        // category 1 is impossible under p but dominant under p'
        let log_p = log_probs(&[1.0, 0.0]);
        let log_p_prime = log_probs(&[0.001, 0.999]);
        let mut rng = stream(4, "scm", 0);
        let mut switched = 0;
        for _ in 0..5_000 {
            let g = topdown(&log_p, 0, &mut rng).unwrap();
            if argmax_sum(&log_p_prime, &g.values).unwrap() == 1 {
                switched += 1;
            }
        }
        assert!(switched > 0, "prior noise on zero-mass categories is dead");
    }

    #[test]
    fn mixture_degenerate_weight_uses_single_component() {
        let prior = MixturePrior::new(
            log_probs(&[0.5, 0.5]),
            log_probs(&[0.9, 0.1]),
            1.0,
        )
        .unwrap();
        let mut rng = stream(5, "scm", 0);
        let draws = mixture_topdown(&prior, &log_probs(&[0.9, 0.1]), 0, 500, &mut rng).unwrap();
        assert!(draws.iter().all(|d| d.from_target && !d.fallback));
    }

    #[test]
    fn unchanged_mechanism_preserves_outcome() {
        // identical prior rows and counterfactual row: cf outcome == observed
        let row = [0.3, 0.45, 0.25];
        let prior = MixturePrior::new(log_probs(&row), log_probs(&row), 0.5).unwrap();
        let mut rng = stream(6, "scm", 0);
        for k in 0..row.len() {
            let draws = mixture_topdown(&prior, &log_probs(&row), k, 200, &mut rng).unwrap();
            assert!(draws.iter().all(|d| d.cf_next_state == k));
        }
    }

    #[test]
    fn fallback_triggers_when_selected_component_lacks_mass() {
        // source row cannot explain observation 1
        let prior = MixturePrior::new(
            log_probs(&[1.0, 0.0]),
            log_probs(&[0.2, 0.8]),
            0.0, // always pick source, which must fall back
        )
        .unwrap();
        let mut rng = stream(7, "scm", 0);
        let draws = mixture_topdown(&prior, &log_probs(&[0.5, 0.5]), 1, 100, &mut rng).unwrap();
        assert!(draws.iter().all(|d| d.fallback && !d.from_target));

        // both components zero: unexplainable
        let dead = MixturePrior::new(log_probs(&[1.0, 0.0]), log_probs(&[1.0, 0.0]), 0.5).unwrap();
        assert!(matches!(
            mixture_topdown(&dead, &log_probs(&[0.5, 0.5]), 1, 1, &mut rng),
            Err(Error::ImpossibleObservation { index: 1 })
        ));
    }

    #[test]
    fn stability_ratio_dominance_forces_observed_outcome() {
        // K = 2, p = (0.5, 0.5), k' = 0, p' = (0.8, 0.2):
        // p'_0/p_0 = 1.6 >= p'_1/p_1 = 0.4 so the counterfactual stays at 0.
        let prior = MixturePrior::new(
            log_probs(&[0.5, 0.5]),
            log_probs(&[0.5, 0.5]),
            0.5,
        )
        .unwrap();
        let mut rng = stream(8, "scm", 0);
        let draws = mixture_topdown(&prior, &log_probs(&[0.8, 0.2]), 0, 10_000, &mut rng).unwrap();
        assert!(draws.iter().all(|d| d.cf_next_state == 0));
    }

    #[test]
    fn identity_intervention_has_zero_violations() {
        let p = [0.2, 0.5, 0.3];
        let mut rng = stream(9, "scm", 0);
        let v = check_counterfactual_stability(&p, &p, 1, 2_000, &mut rng).unwrap();
        assert_eq!(v, 0);
    }

    #[test]
    fn deterministic_replay_gives_identical_samples() {
        let log_alpha = log_probs(&[0.25, 0.25, 0.5]);
        let a = topdown(&log_alpha, 2, &mut stream(10, "scm", 0)).unwrap();
        let b = topdown(&log_alpha, 2, &mut stream(10, "scm", 0)).unwrap();
        assert_eq!(a, b);
    }
}
