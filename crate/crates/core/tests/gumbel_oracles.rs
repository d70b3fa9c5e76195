//! Statistical oracles for the Gumbel-Max sampling machinery: chi-square
//! goodness of fit for unconditioned draws, Kolmogorov-Smirnov checks of the
//! conditioned maximum against its analytic law, and a rejection-sampling
//! oracle for the full conditioned joint.

use cfpt_core::rng::stream;
use cfpt_core::scm::{
    check_counterfactual_stability, check_mixture_stability, gumbel_max_sample, log_probs,
    mixture_topdown, topdown, MixturePrior,
};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn chi_square_statistic(observed: &[u64], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .filter(|&(_, &e)| e > 0.0)
        .map(|(&o, &e)| {
            let d = o as f64 - e;
            d * d / e
        })
        .sum()
}

/// One-sample KS statistic against an analytic CDF.
fn ks_one_sample(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let lo = (f - i as f64 / n).abs();
            let hi = ((i + 1) as f64 / n - f).abs();
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Two-sample KS statistic.
fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        let fa = i as f64 / a.len() as f64;
        let fb = j as f64 / b.len() as f64;
        d = d.max((fa - fb).abs());
    }
    d
}

fn gumbel_cdf(location: f64) -> impl Fn(f64) -> f64 {
    move |x| (-(-(x - location)).exp()).exp()
}

#[test]
fn uniform_frequencies_within_one_percent() {
    let alpha = [0.25; 4];
    let log_alpha = log_probs(&alpha);
    let mut rng = stream(100, "gof", 0);
    let n = 100_000;
    let mut counts = [0u64; 4];
    for _ in 0..n {
        counts[gumbel_max_sample(&log_alpha, &mut rng).unwrap()] += 1;
    }
    for &c in &counts {
        let freq = c as f64 / n as f64;
        assert!((freq - 0.25).abs() < 0.01, "frequency {freq}");
    }
}

#[test]
fn chi_square_goodness_of_fit_below_crit999() {
    let alpha = [0.7, 0.2, 0.1];
    let log_alpha = log_probs(&alpha);
    let mut rng = stream(101, "gof", 0);
    let n = 100_000u64;
    let mut counts = [0u64; 3];
    for _ in 0..n {
        counts[gumbel_max_sample(&log_alpha, &mut rng).unwrap()] += 1;
    }
    let expected: Vec<f64> = alpha.iter().map(|&p| p * n as f64).collect();
    let stat = chi_square_statistic(&counts, &expected);
    let crit = ChiSquared::new(2.0).unwrap().inverse_cdf(0.999);
    assert!(stat < crit, "chi-square {stat} >= critical {crit}");
}

/// The conditioned maximum `log alpha_k' + g_k'` must be Gumbel with
/// location `log sum alpha`, independent of which index was observed.
#[test]
fn conditioned_max_marginal_matches_gumbel_law() {
    let alpha = [0.05, 0.3, 0.15, 0.1, 0.25, 0.03, 0.07, 0.05];
    let log_alpha = log_probs(&alpha);
    let z = alpha.iter().sum::<f64>().ln();
    for &k in &[0usize, 1, 4] {
        let mut rng = stream(102, "ks-max", k as u64);
        let mut maxima: Vec<f64> = (0..100_000)
            .map(|_| {
                let g = topdown(&log_alpha, k, &mut rng).unwrap();
                log_alpha
                    .iter()
                    .zip(&g.values)
                    .map(|(&la, &gv)| la + gv)
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let ks = ks_one_sample(&mut maxima, gumbel_cdf(z));
        assert!(ks < 0.01, "k'={k}: KS {ks} >= 0.01");
    }
}

/// Rejection-sampling oracle: draw unconditioned noise vectors, keep those
/// whose mechanism outcome equals k', and compare every coordinate's
/// marginal against top-down samples.
#[test]
fn topdown_joint_matches_rejection_sampling_oracle() {
    let alpha = [0.3, 0.0, 0.25, 0.35, 0.1];
    let log_alpha = log_probs(&alpha);
    let k_prime = 0usize;

    let n_topdown = 100_000;
    let mut rng = stream(103, "reject", 0);
    let mut topdown_coords: Vec<Vec<f64>> = vec![Vec::with_capacity(n_topdown); alpha.len()];
    for _ in 0..n_topdown {
        let g = topdown(&log_alpha, k_prime, &mut rng).unwrap();
        for (j, &v) in g.values.iter().enumerate() {
            topdown_coords[j].push(v);
        }
    }

    let mut kept_coords: Vec<Vec<f64>> = vec![Vec::new(); alpha.len()];
    let mut kept = 0usize;
    let mut rng = stream(103, "reject", 1);
    while kept < 40_000 {
        let noise: Vec<f64> = (0..alpha.len())
            .map(|_| {
                let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                -(-u.ln()).ln()
            })
            .collect();
        let winner = log_alpha
            .iter()
            .zip(&noise)
            .enumerate()
            .filter(|(_, (&la, _))| la != f64::NEG_INFINITY)
            .max_by(|(_, (&la, &ga)), (_, (&lb, &gb))| {
                (la + ga).partial_cmp(&(lb + gb)).unwrap()
            })
            .map(|(j, _)| j)
            .unwrap();
        if winner == k_prime {
            for (j, &v) in noise.iter().enumerate() {
                kept_coords[j].push(v);
            }
            kept += 1;
        }
    }

    for j in 0..alpha.len() {
        let ks = ks_two_sample(&mut topdown_coords[j], &mut kept_coords[j]);
        assert!(ks < 0.02, "coordinate {j}: two-sample KS {ks} >= 0.02");
    }
}

/// Randomized stability sweep at unit-test scale (the acceptance suite runs
/// the full-size version).
#[test]
fn stability_sweep_has_zero_violations() {
    let mut rng = stream(104, "sweep", 0);
    let mut total = 0usize;
    for trial in 0..100u64 {
        let k = 2 + (trial % 9) as usize;
        let p = random_distribution(k, &mut rng);
        let p_prime = random_distribution(k, &mut rng);
        let k_prime = sample_support(&p, &mut rng);
        total += check_counterfactual_stability(&p, &p_prime, k_prime, 1000, &mut rng).unwrap();
    }
    assert_eq!(total, 0);
}

#[test]
fn mixture_stability_sweep_has_zero_violations() {
    for &w in &[0.0, 0.5, 0.8, 1.0] {
        let mut rng = stream(105, "sweep", (w * 10.0) as u64);
        let mut total = 0usize;
        for trial in 0..50u64 {
            let k = 2 + (trial % 9) as usize;
            let p_target = random_distribution(k, &mut rng);
            let p_source = random_distribution(k, &mut rng);
            let p_prime = random_distribution(k, &mut rng);
            let k_prime = sample_support(&p_target, &mut rng);
            total +=
                check_mixture_stability(&p_source, &p_target, w, &p_prime, k_prime, 1000, &mut rng)
                    .unwrap();
        }
        assert_eq!(total, 0, "w_target = {w}");
    }
}

/// Mixture weight 1 must be statistically indistinguishable from top-down on
/// the target row alone (chi-square over the counterfactual outcomes).
#[test]
fn degenerate_mixture_matches_single_component_distribution() {
    let target = [0.5, 0.2, 0.2, 0.1];
    let source = [0.1, 0.1, 0.2, 0.6];
    let alpha_hat = [0.3, 0.3, 0.2, 0.2];
    let k_prime = 1usize;
    let n = 100_000usize;

    let prior = MixturePrior::new(log_probs(&source), log_probs(&target), 1.0).unwrap();
    let mut rng = stream(106, "mix", 0);
    let draws = mixture_topdown(&prior, &log_probs(&alpha_hat), k_prime, n, &mut rng).unwrap();
    let mut mix_counts = [0u64; 4];
    for d in &draws {
        mix_counts[d.cf_next_state] += 1;
    }

    let mut rng = stream(106, "mix", 1);
    let log_target = log_probs(&target);
    let log_hat = log_probs(&alpha_hat);
    let mut plain_counts = [0u64; 4];
    for _ in 0..n {
        let g = topdown(&log_target, k_prime, &mut rng).unwrap();
        let winner = log_hat
            .iter()
            .zip(&g.values)
            .enumerate()
            .max_by(|(_, (&la, &ga)), (_, (&lb, &gb))| {
                (la + ga).partial_cmp(&(lb + gb)).unwrap()
            })
            .map(|(j, _)| j)
            .unwrap();
        plain_counts[winner] += 1;
    }

    let expected: Vec<f64> = plain_counts.iter().map(|&c| c as f64).collect();
    let stat = chi_square_statistic(&mix_counts, &expected);
    // conservative: both sides are samples, so double the per-cell variance
    let crit = 2.0 * ChiSquared::new(3.0).unwrap().inverse_cdf(0.999);
    assert!(stat < crit, "chi-square {stat} >= {crit}");
}

fn random_distribution<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -(rng.random::<f64>().max(1e-12)).ln()).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|&x| x / sum).collect()
}

fn sample_support<R: Rng>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}
