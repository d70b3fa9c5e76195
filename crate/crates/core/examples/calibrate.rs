// Calibration probe: run candidate dynamics configs at experiment scale and
// print the method ordering the acceptance experiment requires.
use cfpt_core::experiment::{run_experiment, EvalSpec, ExperimentSpec, SourceSpec};
use cfpt_core::sim::DynamicsConfig;
use cfpt_core::transfer::BaselineKind;
use std::time::Instant;

fn candidate(name: &str) -> DynamicsConfig {
    let mut c = DynamicsConfig::default();
    match name {
        "default" => {}
        "harsh" => {
            c.fluctuation.heart_rate = 0.12;
            c.fluctuation.blood_pressure = 0.12;
            c.fluctuation.oxygen = 0.12;
            c.fluctuation.glucose = 0.15;
            c.diabetes.glucose_fluctuation_multiplier = 4.0;
            c.antibiotics.hr_high_to_normal = 0.6;
            c.antibiotics.bp_high_to_normal = 0.6;
            c.antibiotics.withdraw_hr_normal_to_high = 0.4;
            c.antibiotics.withdraw_bp_normal_to_high = 0.6;
            c.ventilation.o2_low_to_normal = 0.7;
            c.ventilation.withdraw_o2_normal_to_low = 0.4;
            c.vasopressors.bp_low_to_normal = 0.7;
            c.vasopressors.bp_normal_to_high = 0.5;
            c.vasopressors.withdraw_bp_drop = 0.4;
        }
        "spread" => {
            c.fluctuation.heart_rate = 0.2;
            c.fluctuation.blood_pressure = 0.2;
            c.fluctuation.oxygen = 0.15;
            c.fluctuation.glucose = 0.2;
            c.diabetes.glucose_fluctuation_multiplier = 3.0;
            c.antibiotics.hr_high_to_normal = 0.7;
            c.antibiotics.bp_high_to_normal = 0.7;
            c.antibiotics.withdraw_hr_normal_to_high = 0.3;
            c.antibiotics.withdraw_bp_normal_to_high = 0.5;
            c.ventilation.o2_low_to_normal = 0.8;
            c.ventilation.withdraw_o2_normal_to_low = 0.3;
            c.vasopressors.bp_low_to_normal = 0.8;
            c.vasopressors.bp_normal_to_high = 0.4;
            c.vasopressors.withdraw_bp_drop = 0.3;
        }
        "fragile" => {
            c.fluctuation.heart_rate = 0.15;
            c.fluctuation.blood_pressure = 0.15;
            c.fluctuation.oxygen = 0.15;
            c.fluctuation.glucose = 0.18;
            c.diabetes.glucose_fluctuation_multiplier = 5.0;
            c.antibiotics.hr_high_to_normal = 0.8;
            c.antibiotics.bp_high_to_normal = 0.8;
            c.antibiotics.withdraw_hr_normal_to_high = 0.5;
            c.antibiotics.withdraw_bp_normal_to_high = 0.5;
            c.ventilation.o2_low_to_normal = 0.8;
            c.ventilation.withdraw_o2_normal_to_low = 0.5;
            c.vasopressors.bp_low_to_normal = 0.8;
            c.vasopressors.bp_normal_to_high = 0.5;
            c.vasopressors.withdraw_bp_drop = 0.5;
        }
        other => panic!("unknown candidate {other}"),
    }
    c
}

fn main() {
    let mut args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() {
        args = vec!["default".into()];
    }
    let seeds = [1u64, 2, 3];
    for name in &args {
        println!("== config {name} ==");
        let spec = ExperimentSpec {
            dynamics: candidate(name),
            source: SourceSpec {
                policy_smoothing: 0.05,
                ..SourceSpec::default()
            },
            eval: EvalSpec {
                n_eval: 3000,
                bootstrap: 50,
            },
            methods: vec![
                BaselineKind::Scratch,
                BaselineKind::Pooled,
                BaselineKind::Blind,
                BaselineKind::RegPi,
                BaselineKind::RedCfpt,
                BaselineKind::Cfpt,
            ],
            ..ExperimentSpec::default()
        };
        let mut means = vec![0.0f64; spec.methods.len()];
        for seed in seeds {
            let t0 = Instant::now();
            match run_experiment(&spec, seed) {
                Ok(run) => {
                    print!("seed {seed}: mu {:+.3} | ", run.behavior_report.mean_return);
                    for (i, m) in run.methods.iter().enumerate() {
                        means[i] += m.true_report.mean_return / seeds.len() as f64;
                        print!("{} {:+.3} | ", m.method, m.true_report.mean_return);
                    }
                    println!("({:.1?})", t0.elapsed());
                }
                Err(e) => println!("seed {seed}: ERROR {e}"),
            }
        }
        print!("  MEANS: ");
        for (i, m) in spec.methods.iter().enumerate() {
            print!("{m} {:+.3} | ", means[i]);
        }
        let scratch = means[0];
        let cfpt = means[5];
        println!("\n  ordering gap cfpt - scratch = {:+.3}", cfpt - scratch);
    }
}
