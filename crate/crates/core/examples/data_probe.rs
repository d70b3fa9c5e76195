// Dataset diagnostics for calibration: coverage, row thickness, and how far
// the target estimate sits from the true sub-population mixture.
use cfpt_core::experiment::{build_environment, ExperimentSpec};
use cfpt_core::sim::{DynamicsConfig, PolicyRef, N_OBS};
use cfpt_core::transfer::estimate_transitions;

fn main() {
    let mut spec = ExperimentSpec::default();
    if let Ok(text) = std::env::var("DYN") {
        spec.dynamics = DynamicsConfig::from_toml_str(&text).expect("DYN parses");
    }
    let env = build_environment(&spec).expect("env");
    let ds = env
        .sim
        .generate_dataset(
            PolicyRef::State(&env.mu),
            spec.target.n,
            spec.target.p_diab,
            cfpt_core::rng::derive_seed(1, "target-data", 0),
        )
        .expect("dataset");
    let est = estimate_transitions(&ds).expect("estimate");

    let total_steps: usize = ds.trajectories.iter().map(|t| t.steps.len()).sum();
    let mut distinct_obs = std::collections::BTreeSet::new();
    for t in &ds.trajectories {
        for s in &t.steps {
            distinct_obs.insert(s.obs);
        }
    }
    let mut pair_visits: Vec<u64> = Vec::new();
    for o in 0..N_OBS {
        for a in 0..8 {
            let v = est.visits(o, a);
            if v > 0 {
                pair_visits.push(v);
            }
        }
    }
    pair_visits.sort_unstable();
    let n_pairs = pair_visits.len();
    let quartile = |q: f64| pair_visits[(q * (n_pairs - 1) as f64) as usize];
    println!(
        "steps {total_steps}  mean_len {:.1}  distinct_obs {}  supported_pairs {n_pairs}",
        total_steps as f64 / ds.trajectories.len() as f64,
        distinct_obs.len()
    );
    println!(
        "pair visits: p25 {} median {} p75 {} p95 {} max {}  singletons {}",
        quartile(0.25),
        quartile(0.5),
        quartile(0.75),
        quartile(0.95),
        pair_visits[n_pairs - 1],
        pair_visits.iter().filter(|&&v| v == 1).count()
    );
    println!(
        "outcomes: discharge {:.3} death {:.3} censored {:.3}  mean return {:.3}",
        ds.trajectories
            .iter()
            .filter(|t| t.outcome == cfpt_core::sim::TerminalOutcome::Discharge)
            .count() as f64
            / ds.len() as f64,
        ds.trajectories
            .iter()
            .filter(|t| t.outcome == cfpt_core::sim::TerminalOutcome::Death)
            .count() as f64
            / ds.len() as f64,
        ds.trajectories
            .iter()
            .filter(|t| t.outcome == cfpt_core::sim::TerminalOutcome::Censored)
            .count() as f64
            / ds.len() as f64,
        ds.mean_return()
    );
}
