//! Config-driven transition dynamics.
//!
//! The shipped defaults are the repo default, not a reproduction of any
//! external simulator's constants. Every probability is exposed in the TOML
//! schema below so experiments can redefine the physiology.
//!
//! ```toml
//! [fluctuation]
//! heart_rate = 0.1        # chance an untreated vital drifts one level
//! blood_pressure = 0.1
//! oxygen = 0.1
//! glucose = 0.1
//!
//! [diabetes]
//! glucose_fluctuation_multiplier = 3.0
//! vaso_glucose_raise = 0.5       # vasopressors push diabetic glucose up
//! vaso_bp_low_to_normal = 0.4    # weaker pressure response for diabetics
//! vaso_bp_normal_to_high = 0.9   # and a stronger overshoot
//!
//! [antibiotics]
//! hr_high_to_normal = 0.5
//! bp_high_to_normal = 0.5
//! withdraw_hr_normal_to_high = 0.1
//! withdraw_bp_normal_to_high = 0.5
//!
//! [ventilation]
//! o2_low_to_normal = 0.7
//! withdraw_o2_normal_to_low = 0.1
//!
//! [vasopressors]
//! bp_low_to_normal = 0.7
//! bp_normal_to_high = 0.7
//! withdraw_bp_drop = 0.1
//!
//! [initial]
//! min_abnormal_vitals = 1
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub fluctuation: Fluctuation,
    pub diabetes: Diabetes,
    pub antibiotics: Antibiotics,
    pub ventilation: Ventilation,
    pub vasopressors: Vasopressors,
    pub initial: Initial,
}

/// Per-vital chance of drifting one level when no treatment governs the
/// vital this step. The drift direction is uniform; moves past the scale
/// boundary stay put.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Fluctuation {
    pub heart_rate: f64,
    pub blood_pressure: f64,
    pub oxygen: f64,
    pub glucose: f64,
}

/// Diabetic-specific physiology: noisier glucose plus an adverse response
/// to vasopressors. The interaction is what makes the hidden flag a real
/// confounder: the same treatment helps one sub-population and destabilizes
/// the other, so policies fit on observation-level data inherit whichever
/// mixture generated their counts.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Diabetes {
    /// Multiplier (>= 1) on the glucose fluctuation probability for diabetic
    /// patients. The multiplied probability must stay within [0, 1].
    pub glucose_fluctuation_multiplier: f64,
    /// While vasopressors run on a diabetic patient: chance glucose jumps one
    /// level up instead of following its fluctuation kernel.
    pub vaso_glucose_raise: f64,
    /// Diabetic override of `vasopressors.bp_low_to_normal`.
    pub vaso_bp_low_to_normal: f64,
    /// Diabetic override of `vasopressors.bp_normal_to_high` (overshoot).
    pub vaso_bp_normal_to_high: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Antibiotics {
    /// While on: heart rate high -> normal.
    pub hr_high_to_normal: f64,
    /// While on: blood pressure high -> normal.
    pub bp_high_to_normal: f64,
    /// On withdrawal: heart rate normal -> high.
    pub withdraw_hr_normal_to_high: f64,
    /// On withdrawal: blood pressure normal -> high.
    pub withdraw_bp_normal_to_high: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Ventilation {
    /// While on: oxygen low -> normal.
    pub o2_low_to_normal: f64,
    /// On withdrawal: oxygen normal -> low.
    pub withdraw_o2_normal_to_low: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Vasopressors {
    /// While on: blood pressure low -> normal.
    pub bp_low_to_normal: f64,
    /// While on: blood pressure normal -> high (overshoot).
    pub bp_normal_to_high: f64,
    /// On withdrawal: blood pressure drops one level.
    pub withdraw_bp_drop: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Initial {
    /// Initial states are drawn uniformly over states with all treatments
    /// off, fewer than three abnormal vitals, and at least this many
    /// abnormal vitals.
    pub min_abnormal_vitals: usize,
}

impl Default for Fluctuation {
    fn default() -> Self {
        Self {
            heart_rate: 0.1,
            blood_pressure: 0.1,
            oxygen: 0.1,
            glucose: 0.1,
        }
    }
}

impl Default for Diabetes {
    fn default() -> Self {
        Self {
            glucose_fluctuation_multiplier: 3.0,
            vaso_glucose_raise: 0.5,
            vaso_bp_low_to_normal: 0.4,
            vaso_bp_normal_to_high: 0.9,
        }
    }
}

impl Default for Antibiotics {
    fn default() -> Self {
        Self {
            hr_high_to_normal: 0.5,
            bp_high_to_normal: 0.5,
            withdraw_hr_normal_to_high: 0.1,
            withdraw_bp_normal_to_high: 0.5,
        }
    }
}

impl Default for Ventilation {
    fn default() -> Self {
        Self {
            o2_low_to_normal: 0.7,
            withdraw_o2_normal_to_low: 0.1,
        }
    }
}

impl Default for Vasopressors {
    fn default() -> Self {
        Self {
            bp_low_to_normal: 0.7,
            bp_normal_to_high: 0.7,
            withdraw_bp_drop: 0.1,
        }
    }
}

impl Default for Initial {
    fn default() -> Self {
        Self {
            min_abnormal_vitals: 1,
        }
    }
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            fluctuation: Fluctuation::default(),
            diabetes: Diabetes::default(),
            antibiotics: Antibiotics::default(),
            ventilation: Ventilation::default(),
            vasopressors: Vasopressors::default(),
            initial: Initial::default(),
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::InvalidConfig(format!("{name} = {p} is not in [0, 1]")));
    }
    Ok(())
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        check_prob("fluctuation.heart_rate", self.fluctuation.heart_rate)?;
        check_prob("fluctuation.blood_pressure", self.fluctuation.blood_pressure)?;
        check_prob("fluctuation.oxygen", self.fluctuation.oxygen)?;
        check_prob("fluctuation.glucose", self.fluctuation.glucose)?;
        check_prob("antibiotics.hr_high_to_normal", self.antibiotics.hr_high_to_normal)?;
        check_prob("antibiotics.bp_high_to_normal", self.antibiotics.bp_high_to_normal)?;
        check_prob(
            "antibiotics.withdraw_hr_normal_to_high",
            self.antibiotics.withdraw_hr_normal_to_high,
        )?;
        check_prob(
            "antibiotics.withdraw_bp_normal_to_high",
            self.antibiotics.withdraw_bp_normal_to_high,
        )?;
        check_prob("ventilation.o2_low_to_normal", self.ventilation.o2_low_to_normal)?;
        check_prob(
            "ventilation.withdraw_o2_normal_to_low",
            self.ventilation.withdraw_o2_normal_to_low,
        )?;
        check_prob("vasopressors.bp_low_to_normal", self.vasopressors.bp_low_to_normal)?;
        check_prob("vasopressors.bp_normal_to_high", self.vasopressors.bp_normal_to_high)?;
        check_prob("vasopressors.withdraw_bp_drop", self.vasopressors.withdraw_bp_drop)?;
        let mult = self.diabetes.glucose_fluctuation_multiplier;
        if !mult.is_finite() || mult < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "diabetes.glucose_fluctuation_multiplier = {mult} must be >= 1"
            )));
        }
        check_prob(
            "diabetes.glucose_fluctuation_multiplier * fluctuation.glucose",
            mult * self.fluctuation.glucose,
        )?;
        check_prob("diabetes.vaso_glucose_raise", self.diabetes.vaso_glucose_raise)?;
        check_prob("diabetes.vaso_bp_low_to_normal", self.diabetes.vaso_bp_low_to_normal)?;
        check_prob(
            "diabetes.vaso_bp_normal_to_high",
            self.diabetes.vaso_bp_normal_to_high,
        )?;
        if self.initial.min_abnormal_vitals > 2 {
            return Err(Error::InvalidConfig(
                "initial.min_abnormal_vitals > 2 leaves no eligible non-terminal state".into(),
            ));
        }
        Ok(())
    }

    /// Glucose fluctuation probability for a patient.
    pub fn glucose_fluctuation(&self, diabetic: bool) -> f64 {
        if diabetic {
            self.fluctuation.glucose * self.diabetes.glucose_fluctuation_multiplier
        } else {
            self.fluctuation.glucose
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: DynamicsConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// The default dynamics rendered as a documented TOML snippet (written next
/// to generated datasets so a run is self-describing).
pub fn default_dynamics_toml() -> String {
    let cfg = DynamicsConfig::default();
    [
        "# Sepsis simulator dynamics (repo default, not calibrated to any external",
        "# simulator). Probabilities per step.",
        "",
        "[fluctuation]",
        &format!("heart_rate = {}", cfg.fluctuation.heart_rate),
        &format!("blood_pressure = {}", cfg.fluctuation.blood_pressure),
        &format!("oxygen = {}", cfg.fluctuation.oxygen),
        &format!("glucose = {}", cfg.fluctuation.glucose),
        "",
        "[diabetes]",
        &format!(
            "glucose_fluctuation_multiplier = {}",
            cfg.diabetes.glucose_fluctuation_multiplier
        ),
        &format!("vaso_glucose_raise = {}", cfg.diabetes.vaso_glucose_raise),
        &format!("vaso_bp_low_to_normal = {}", cfg.diabetes.vaso_bp_low_to_normal),
        &format!(
            "vaso_bp_normal_to_high = {}",
            cfg.diabetes.vaso_bp_normal_to_high
        ),
        "",
        "[antibiotics]",
        &format!("hr_high_to_normal = {}", cfg.antibiotics.hr_high_to_normal),
        &format!("bp_high_to_normal = {}", cfg.antibiotics.bp_high_to_normal),
        &format!(
            "withdraw_hr_normal_to_high = {}",
            cfg.antibiotics.withdraw_hr_normal_to_high
        ),
        &format!(
            "withdraw_bp_normal_to_high = {}",
            cfg.antibiotics.withdraw_bp_normal_to_high
        ),
        "",
        "[ventilation]",
        &format!("o2_low_to_normal = {}", cfg.ventilation.o2_low_to_normal),
        &format!(
            "withdraw_o2_normal_to_low = {}",
            cfg.ventilation.withdraw_o2_normal_to_low
        ),
        "",
        "[vasopressors]",
        &format!("bp_low_to_normal = {}", cfg.vasopressors.bp_low_to_normal),
        &format!("bp_normal_to_high = {}", cfg.vasopressors.bp_normal_to_high),
        &format!("withdraw_bp_drop = {}", cfg.vasopressors.withdraw_bp_drop),
        "",
        "[initial]",
        &format!("min_abnormal_vitals = {}", cfg.initial.min_abnormal_vitals),
        "",
    ]
    .join("\n")
}
