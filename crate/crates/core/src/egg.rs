//! Physical model of a soft-boiled egg.
//!
//! The yolk is treated as a uniform sphere heated in boiling water whose
//! temperature drops with altitude. Cooking time is
//!
//! ```text
//! t = lambda * M^(2/3) * ln( ywr * (T_egg - T_water) / (T_yolk - T_water) )
//! ```
//!
//! with `T_water` the altitude-corrected boiling point (see [`boiling_point_c`]).
//! Both logarithms are natural logarithms.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One of the six tunable quantities, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    #[serde(rename = "mass_g")]
    Mass,
    Lambda,
    Ywr,
    #[serde(rename = "t_egg_c")]
    TEgg,
    #[serde(rename = "t_yolk_c")]
    TYolk,
    #[serde(rename = "altitude_m")]
    Altitude,
}

impl Param {
    pub const ALL: [Param; 6] = [
        Param::Mass,
        Param::Lambda,
        Param::Ywr,
        Param::TEgg,
        Param::TYolk,
        Param::Altitude,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Field name used in JSON payloads and scenario files.
    pub fn key(self) -> &'static str {
        match self {
            Param::Mass => "mass_g",
            Param::Lambda => "lambda",
            Param::Ywr => "ywr",
            Param::TEgg => "t_egg_c",
            Param::TYolk => "t_yolk_c",
            Param::Altitude => "altitude_m",
        }
    }

    pub fn from_key(key: &str) -> Option<Param> {
        Param::ALL.into_iter().find(|p| p.key() == key)
    }

    /// Short symbol shown in explanations.
    pub fn symbol(self) -> &'static str {
        match self {
            Param::Mass => "M",
            Param::Lambda => "λ",
            Param::Ywr => "ywr",
            Param::TEgg => "Tegg",
            Param::TYolk => "Tyolk",
            Param::Altitude => "A",
        }
    }

    pub fn from_symbol(symbol: &str) -> Option<Param> {
        Param::ALL.into_iter().find(|p| p.symbol() == symbol)
    }

    /// Human-readable name used in natural-language explanations.
    pub fn label(self) -> &'static str {
        match self {
            Param::Mass => "Mass",
            Param::Lambda => "lambda",
            Param::Ywr => "yolk-to-white ratio",
            Param::TEgg => "egg temperature",
            Param::TYolk => "yolk temperature",
            Param::Altitude => "altitude",
        }
    }

    /// Decimal places at which values of this parameter are displayed.
    pub fn decimals(self) -> usize {
        match self {
            Param::Lambda => 1,
            Param::Ywr => 2,
            _ => 0,
        }
    }

    /// Admissible range of the parameter.
    pub fn domain(self) -> (f64, f64) {
        match self {
            Param::Mass => (20.0, 300.0),
            Param::Lambda => (25.0, 38.0),
            Param::Ywr => (0.4, 1.0),
            Param::TEgg => (0.0, 35.0),
            Param::TYolk => (60.0, 90.0),
            Param::Altitude => (0.0, 10_000.0),
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// A point in the six-dimensional tuning space, in natural units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EggParameters {
    pub mass_g: f64,
    pub lambda: f64,
    pub ywr: f64,
    pub t_egg_c: f64,
    pub t_yolk_c: f64,
    pub altitude_m: f64,
}

impl EggParameters {
    pub fn from_array(v: [f64; 6]) -> Self {
        EggParameters {
            mass_g: v[0],
            lambda: v[1],
            ywr: v[2],
            t_egg_c: v[3],
            t_yolk_c: v[4],
            altitude_m: v[5],
        }
    }

    pub fn from_slice(v: &[f64]) -> Option<Self> {
        let arr: [f64; 6] = v.try_into().ok()?;
        Some(Self::from_array(arr))
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.mass_g,
            self.lambda,
            self.ywr,
            self.t_egg_c,
            self.t_yolk_c,
            self.altitude_m,
        ]
    }

    pub fn get(&self, p: Param) -> f64 {
        self.to_array()[p.index()]
    }

    pub fn set(&mut self, p: Param, value: f64) {
        let mut v = self.to_array();
        v[p.index()] = value;
        *self = Self::from_array(v);
    }

    pub fn with(mut self, p: Param, value: f64) -> Self {
        self.set(p, value);
        self
    }

    /// Checks every field against [`Param::domain`].
    pub fn validate(&self) -> Result<(), EggError> {
        for p in Param::ALL {
            let v = self.get(p);
            let (lo, hi) = p.domain();
            if !(lo..=hi).contains(&v) {
                return Err(EggError::OutOfDomain { param: p, value: v, lo, hi });
            }
        }
        Ok(())
    }
}

/// Why a configuration cannot produce a cooked yolk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Uncookable {
    /// The yolk target is at or above the boiling point of water.
    YolkAtOrAboveBoiling,
    /// The egg starts at or above the yolk target temperature.
    EggNotColderThanYolk,
    /// `ywr * (T_egg - T_water) / (T_yolk - T_water) <= 1`.
    LogArgumentNotAboveOne,
}

impl fmt::Display for Uncookable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Uncookable::YolkAtOrAboveBoiling => "yolk target temperature is not below the boiling point",
            Uncookable::EggNotColderThanYolk => "initial egg temperature is not below the yolk target",
            Uncookable::LogArgumentNotAboveOne => "logarithm argument does not exceed 1",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EggError {
    #[error("{param} = {value} outside [{lo}, {hi}]")]
    OutOfDomain { param: Param, value: f64, lo: f64, hi: f64 },
    #[error("uncookable configuration: {0}")]
    Uncookable(Uncookable),
    #[error("cooking time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("perturbation fraction must lie in (0, 0.5], got {0}")]
    BadFraction(f64),
}

fn boiling_point_unchecked(altitude_m: f64) -> f64 {
    let pressure_inhg = 29.921 * (1.0 - 0.000_006_875_3 * altitude_m).powf(5.2559);
    let fahrenheit = 49.161 * pressure_inhg.ln() + 44.932;
    (fahrenheit - 32.0) * 5.0 / 9.0
}

/// Boiling point of water in °C at the given altitude (meters).
pub fn boiling_point_c(altitude_m: f64) -> Result<f64, EggError> {
    let (lo, hi) = Param::Altitude.domain();
    if !(lo..=hi).contains(&altitude_m) {
        return Err(EggError::OutOfDomain {
            param: Param::Altitude,
            value: altitude_m,
            lo,
            hi,
        });
    }
    Ok(boiling_point_unchecked(altitude_m))
}

/// Evaluates the cooking-time formula without checking parameter domains.
/// Only physical cookability is enforced.
pub(crate) fn cooking_time_unchecked(p: &EggParameters) -> Result<f64, EggError> {
    let t_water = boiling_point_unchecked(p.altitude_m);
    if p.t_yolk_c >= t_water {
        return Err(EggError::Uncookable(Uncookable::YolkAtOrAboveBoiling));
    }
    if p.t_egg_c >= p.t_yolk_c {
        return Err(EggError::Uncookable(Uncookable::EggNotColderThanYolk));
    }
    let arg = p.ywr * (p.t_egg_c - t_water) / (p.t_yolk_c - t_water);
    if arg <= 1.0 {
        return Err(EggError::Uncookable(Uncookable::LogArgumentNotAboveOne));
    }
    Ok(p.lambda * p.mass_g.powf(2.0 / 3.0) * arg.ln())
}

/// Cooking time in seconds for a yolk to reach `t_yolk_c` at its boundary.
pub fn cooking_time_s(p: &EggParameters) -> Result<f64, EggError> {
    p.validate()?;
    cooking_time_unchecked(p)
}

/// Feedback shown after each cooking trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackGrade {
    Undercooked,
    SlightlyUndercooked,
    Perfect,
    SlightlyOvercooked,
    Overcooked,
}

impl fmt::Display for FeedbackGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeedbackGrade::Undercooked => "Undercooked",
            FeedbackGrade::SlightlyUndercooked => "Slightly undercooked",
            FeedbackGrade::Perfect => "Perfect",
            FeedbackGrade::SlightlyOvercooked => "Slightly overcooked",
            FeedbackGrade::Overcooked => "Overcooked",
        })
    }
}

/// Time thresholds (seconds) separating the five grades.
///
/// `Perfect` is the closed band `[perfect_lo, perfect_hi]`; the neighbours
/// take the open side of each shared edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackBands {
    pub undercooked_below: f64,
    pub perfect_lo: f64,
    pub perfect_hi: f64,
    pub overcooked_above: f64,
}

impl Default for FeedbackBands {
    fn default() -> Self {
        // 3:35, 4:20, 4:45, 5:30
        FeedbackBands {
            undercooked_below: 215.0,
            perfect_lo: 260.0,
            perfect_hi: 285.0,
            overcooked_above: 330.0,
        }
    }
}

impl FeedbackBands {
    pub fn classify(&self, t_s: f64) -> Result<FeedbackGrade, EggError> {
        if !(t_s > 0.0) {
            return Err(EggError::NonPositiveTime(t_s));
        }
        Ok(if t_s < self.undercooked_below {
            FeedbackGrade::Undercooked
        } else if t_s < self.perfect_lo {
            FeedbackGrade::SlightlyUndercooked
        } else if t_s <= self.perfect_hi {
            FeedbackGrade::Perfect
        } else if t_s <= self.overcooked_above {
            FeedbackGrade::SlightlyOvercooked
        } else {
            FeedbackGrade::Overcooked
        })
    }

    /// Center of the Perfect band, the target of the BO loss.
    pub fn target(&self) -> f64 {
        0.5 * (self.perfect_lo + self.perfect_hi)
    }

    /// Half-width of the Perfect band.
    pub fn tolerance(&self) -> f64 {
        0.5 * (self.perfect_hi - self.perfect_lo)
    }
}

pub fn classify_feedback(t_s: f64) -> Result<FeedbackGrade, EggError> {
    FeedbackBands::default().classify(t_s)
}

/// Default BO loss: distance of the cooking time from the center of the Perfect band.
pub fn perfect_band_loss(p: &EggParameters) -> Result<f64, EggError> {
    Ok((cooking_time_s(p)? - FeedbackBands::default().target()).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityEntry {
    pub param: Param,
    /// Mean relative change in cooking time; `None` when neither perturbation was cookable.
    pub effect: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub base_time_s: f64,
    pub fraction: f64,
    pub entries: Vec<SensitivityEntry>,
}

impl SensitivityReport {
    pub fn effect(&self, p: Param) -> Option<f64> {
        self.entries.iter().find(|e| e.param == p).and_then(|e| e.effect)
    }

    pub fn top(&self, n: usize) -> Vec<Param> {
        self.entries.iter().take(n).map(|e| e.param).collect()
    }
}

/// One-at-a-time sensitivity of the cooking time to `±fraction` relative
/// perturbations of each parameter.
///
/// Perturbed values are fed to the formula as-is (they may leave the tuning
/// domain); a direction that is not cookable is skipped.
pub fn sensitivity_analysis(base: &EggParameters, fraction: f64) -> Result<SensitivityReport, EggError> {
    if !(fraction > 0.0 && fraction <= 0.5) {
        return Err(EggError::BadFraction(fraction));
    }
    let base_time = cooking_time_s(base)?;
    let mut entries: Vec<SensitivityEntry> = Param::ALL
        .into_iter()
        .map(|param| {
            let v = base.get(param);
            let changes: Vec<f64> = [1.0 + fraction, 1.0 - fraction]
                .into_iter()
                .filter_map(|scale| cooking_time_unchecked(&base.with(param, v * scale)).ok())
                .map(|t| (t - base_time).abs() / base_time)
                .collect();
            let effect = (!changes.is_empty()).then(|| changes.iter().sum::<f64>() / changes.len() as f64);
            SensitivityEntry { param, effect }
        })
        .collect();
    // descending; undefined entries last; ties keep canonical order
    entries.sort_by(|a, b| match (a.effect, b.effect) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(SensitivityReport { base_time_s: base_time, fraction, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chicken() -> EggParameters {
        EggParameters {
            mass_g: 50.0,
            lambda: 27.0,
            ywr: 0.9,
            t_egg_c: 12.0,
            t_yolk_c: 63.0,
            altitude_m: 5.0,
        }
    }

    // Independent scalar evaluation written out term by term.
    fn oracle_boiling(a: f64) -> f64 {
        let inner = 29.921 * f64::powf(1.0 - 6.8753e-6 * a, 5.2559);
        (49.161 * f64::ln(inner) + 44.932 - 32.0) * 5.0 / 9.0
    }

    #[test]
    fn boiling_point_matches_oracle_at_extremes() {
        for a in [0.0, 2500.0, 5000.0, 10_000.0] {
            assert!((boiling_point_c(a).unwrap() - oracle_boiling(a)).abs() < 1e-12);
        }
        assert!((boiling_point_c(10_000.0).unwrap() - 89.78).abs() < 0.05);
        let mid = boiling_point_c(5000.0).unwrap();
        assert!(mid < boiling_point_c(0.0).unwrap() && mid > boiling_point_c(10_000.0).unwrap());
    }

    #[test]
    fn boiling_point_rejects_out_of_range_altitude() {
        assert!(matches!(boiling_point_c(-1.0), Err(EggError::OutOfDomain { .. })));
        assert!(matches!(boiling_point_c(20_000.0), Err(EggError::OutOfDomain { .. })));
    }

    #[test]
    fn boiling_point_strictly_decreasing_on_grid() {
        let pts: Vec<f64> = (0..100).map(|i| boiling_point_c(i as f64 * 10_000.0 / 99.0).unwrap()).collect();
        assert!(pts.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn chicken_and_goose_reference_times() {
        let t = cooking_time_s(&chicken()).unwrap();
        assert!((t - 278.8).abs() < 0.5, "{t}");
        let goose = EggParameters {
            mass_g: 75.0,
            lambda: 34.0,
            ywr: 0.5,
            t_egg_c: 6.0,
            t_yolk_c: 63.0,
            altitude_m: 10_000.0,
        };
        let t = cooking_time_s(&goose).unwrap();
        assert!((t - 270.3).abs() < 0.5, "{t}");
    }

    #[test]
    fn doubling_mass_scales_by_two_thirds_power() {
        let p = chicken();
        let t1 = cooking_time_s(&p).unwrap();
        let t2 = cooking_time_s(&p.with(Param::Mass, 100.0)).unwrap();
        assert!((t2 / t1 - 2f64.powf(2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn uncookable_configurations_are_typed() {
        let hot_yolk = chicken().with(Param::TYolk, 90.0).with(Param::Altitude, 10_000.0);
        assert_eq!(
            cooking_time_s(&hot_yolk),
            Err(EggError::Uncookable(Uncookable::YolkAtOrAboveBoiling))
        );
        let warm_egg = chicken().with(Param::TEgg, 35.0).with(Param::TYolk, 60.0).with(Param::Ywr, 0.4);
        assert_eq!(
            cooking_time_s(&warm_egg),
            Err(EggError::Uncookable(Uncookable::LogArgumentNotAboveOne))
        );
        let not_colder = chicken().with(Param::TEgg, 35.0).with(Param::TYolk, 60.0).with(Param::Ywr, 1.0);
        assert!(cooking_time_unchecked(&not_colder.with(Param::TEgg, 61.0)).is_err());
    }

    #[test]
    fn monotone_in_mass_and_lambda() {
        let p = chicken();
        let masses: Vec<f64> = (0..20).map(|i| cooking_time_s(&p.with(Param::Mass, 20.0 + 14.0 * i as f64)).unwrap()).collect();
        assert!(masses.windows(2).all(|w| w[1] > w[0]));
        let lambdas: Vec<f64> = (0..20).map(|i| cooking_time_s(&p.with(Param::Lambda, 25.0 + 0.65 * i as f64)).unwrap()).collect();
        assert!(lambdas.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn feedback_bands() {
        assert_eq!(classify_feedback(270.0).unwrap(), FeedbackGrade::Perfect);
        assert_eq!(classify_feedback(200.0).unwrap(), FeedbackGrade::Undercooked);
        assert_eq!(classify_feedback(300.0).unwrap(), FeedbackGrade::SlightlyOvercooked);
        assert_eq!(classify_feedback(215.0).unwrap(), FeedbackGrade::SlightlyUndercooked);
        assert_eq!(classify_feedback(260.0).unwrap(), FeedbackGrade::Perfect);
        assert_eq!(classify_feedback(285.0).unwrap(), FeedbackGrade::Perfect);
        assert_eq!(classify_feedback(330.0).unwrap(), FeedbackGrade::SlightlyOvercooked);
        assert_eq!(classify_feedback(330.5).unwrap(), FeedbackGrade::Overcooked);
        assert!(classify_feedback(0.0).is_err());
        assert!(classify_feedback(-3.0).is_err());
        assert!(classify_feedback(f64::NAN).is_err());
    }

    #[test]
    fn lambda_sensitivity_is_exactly_linear() {
        let r = sensitivity_analysis(&chicken(), 0.10).unwrap();
        assert!((r.effect(Param::Lambda).unwrap() - 0.10).abs() < 1e-12);
        assert_eq!(r.entries.len(), 6);
        assert_eq!(r.top(1), vec![Param::TYolk]);
        assert!(r.entries.windows(2).all(|w| w[0].effect >= w[1].effect));
    }

    #[test]
    fn sensitivity_vanishes_with_fraction() {
        let r = sensitivity_analysis(&chicken(), 1e-9).unwrap();
        assert!(r.entries.iter().all(|e| e.effect.unwrap() < 1e-7));
    }

    #[test]
    fn sensitivity_rejects_bad_fraction() {
        assert!(sensitivity_analysis(&chicken(), 0.0).is_err());
        assert!(sensitivity_analysis(&chicken(), 0.6).is_err());
    }

    #[test]
    fn param_keys_round_trip() {
        for p in Param::ALL {
            assert_eq!(Param::from_key(p.key()), Some(p));
            assert_eq!(Param::from_symbol(p.symbol()), Some(p));
            let json = serde_json::to_string(&p).unwrap();
            assert_eq!(json, format!("\"{}\"", p.key()));
        }
    }
}
