use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bo::{BoError, SearchSpace};
use crate::egg::{cooking_time_s, EggParameters, FeedbackBands, FeedbackGrade, Param};
use crate::render::format_value;
use crate::tntrules::{ParamDecision, TuneDecision};

/// The seven study scenarios, bundled at build time.
pub const SHIPPED_SCENARIOS: &str = include_str!("../../../../scenarios/eggs.json");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("scenario file does not parse: {0}")]
    Parse(String),
    #[error("cannot read scenario file: {0}")]
    Io(String),
    #[error("scenario {scenario}: {field}: {reason}")]
    Invalid { scenario: String, field: String, reason: String },
}

fn invalid(scenario: &str, field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { scenario: scenario.to_string(), field: field.into(), reason: reason.into() }
}

/// Bounds keyed by parameter, in canonical field order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBounds {
    pub mass_g: [f64; 2],
    pub lambda: [f64; 2],
    pub ywr: [f64; 2],
    pub t_egg_c: [f64; 2],
    pub t_yolk_c: [f64; 2],
    pub altitude_m: [f64; 2],
}

impl ParamBounds {
    fn to_array(self) -> [(f64, f64); 6] {
        [self.mass_g, self.lambda, self.ywr, self.t_egg_c, self.t_yolk_c, self.altitude_m].map(|[a, b]| (a, b))
    }

    fn from_array(b: &[(f64, f64); 6]) -> Self {
        let v = b.map(|(a, b)| [a, b]);
        ParamBounds { mass_g: v[0], lambda: v[1], ywr: v[2], t_egg_c: v[3], t_yolk_c: v[4], altitude_m: v[5] }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRecord {
    id: String,
    egg_type: String,
    #[serde(default)]
    is_training: bool,
    bounds: ParamBounds,
    #[serde(default)]
    fixed: BTreeMap<Param, f64>,
    recommended: EggParameters,
    optimal: EggParameters,
}

/// One tuning task. Deliberately not `Serialize`: the optimum must stay
/// server-side; clients get a [`ScenarioSummary`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub egg_type: String,
    pub is_training: bool,
    pub bounds: [(f64, f64); 6],
    pub fixed: BTreeMap<Param, f64>,
    pub recommended: EggParameters,
    pub optimal: EggParameters,
}

/// Client-facing view of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub id: String,
    pub egg_type: String,
    pub is_training: bool,
    pub bounds: ParamBounds,
    pub fixed: BTreeMap<Param, f64>,
}

impl Scenario {
    pub fn is_fixed(&self, p: Param) -> bool {
        self.fixed.contains_key(&p)
    }

    pub fn bound(&self, p: Param) -> (f64, f64) {
        self.bounds[p.index()]
    }

    /// Parameters whose recommendation differs from the optimum.
    pub fn arrow_params(&self) -> Vec<Param> {
        Param::ALL.into_iter().filter(|&p| self.recommended.get(p) != self.optimal.get(p)).collect()
    }

    pub fn tunable(&self) -> Vec<Param> {
        Param::ALL.into_iter().filter(|&p| !self.is_fixed(p)).collect()
    }

    pub fn space(&self) -> Result<SearchSpace, BoError> {
        let fixed: Vec<(Param, f64)> = self.fixed.iter().map(|(p, v)| (*p, *v)).collect();
        SearchSpace::egg(&self.bounds, &fixed)
    }

    pub fn summary(&self) -> ScenarioSummary {
        ScenarioSummary {
            id: self.id.clone(),
            egg_type: self.egg_type.clone(),
            is_training: self.is_training,
            bounds: ParamBounds::from_array(&self.bounds),
            fixed: self.fixed.clone(),
        }
    }

    fn from_record(r: ScenarioRecord) -> Result<Scenario, ScenarioError> {
        let id = r.id.as_str();
        if id.is_empty() {
            return Err(invalid("<unnamed>", "id", "must not be empty"));
        }
        let bounds = r.bounds.to_array();
        for p in Param::ALL {
            let (lo, hi) = bounds[p.index()];
            let (dlo, dhi) = p.domain();
            if !(lo < hi) || lo < dlo || hi > dhi {
                return Err(invalid(id, format!("bounds.{}", p.key()), format!("[{lo}, {hi}] is not a sub-interval of [{dlo}, {dhi}]")));
            }
            for (which, set) in [("recommended", &r.recommended), ("optimal", &r.optimal)] {
                let v = set.get(p);
                if !(lo..=hi).contains(&v) {
                    return Err(invalid(id, format!("{which}.{}", p.key()), format!("{v} outside [{lo}, {hi}]")));
                }
            }
        }
        for (p, v) in &r.fixed {
            for (which, set) in [("recommended", &r.recommended), ("optimal", &r.optimal)] {
                if set.get(*p).to_bits() != v.to_bits() {
                    return Err(invalid(id, format!("fixed.{}", p.key()), format!("{v} differs from {which} value {}", set.get(*p))));
                }
            }
        }
        let t = cooking_time_s(&r.optimal).map_err(|e| invalid(id, "optimal", e.to_string()))?;
        let grade = FeedbackBands::default().classify(t).map_err(|e| invalid(id, "optimal", e.to_string()))?;
        if grade != FeedbackGrade::Perfect {
            return Err(invalid(id, "optimal", format!("cooks in {t:.1} s, which is {grade}, not Perfect")));
        }
        Ok(Scenario {
            id: r.id,
            egg_type: r.egg_type,
            is_training: r.is_training,
            bounds,
            fixed: r.fixed,
            recommended: r.recommended,
            optimal: r.optimal,
        })
    }
}

pub fn load_scenarios(json: &str) -> Result<Vec<Scenario>, ScenarioError> {
    let records: Vec<ScenarioRecord> = serde_json::from_str(json).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let mut seen = HashSet::new();
    records
        .into_iter()
        .map(|r| {
            if !seen.insert(r.id.clone()) {
                return Err(invalid(&r.id, "id", "duplicate"));
            }
            Scenario::from_record(r)
        })
        .collect()
}

pub fn load_scenarios_file(path: &Path) -> Result<Vec<Scenario>, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    load_scenarios(&text)
}

pub fn shipped_scenarios() -> Vec<Scenario> {
    load_scenarios(SHIPPED_SCENARIOS).expect("bundled scenarios are valid")
}

/// Loaded scenarios with their study explanations precomputed.
#[derive(Debug, Clone)]
pub struct Catalog {
    scenarios: Vec<Scenario>,
    decisions: Vec<(TuneDecision, Vec<f64>)>,
}

impl Catalog {
    pub fn new(scenarios: Vec<Scenario>) -> Catalog {
        let decisions = scenarios.iter().map(scenario_decision).collect();
        Catalog { scenarios, decisions }
    }

    pub fn shipped() -> Catalog {
        Catalog::new(shipped_scenarios())
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    fn position(&self, id: &str) -> Option<usize> {
        self.scenarios.iter().position(|s| s.id == id)
    }

    pub fn get(&self, id: &str) -> Option<&Scenario> {
        self.position(id).map(|i| &self.scenarios[i])
    }

    /// The explanation decision and per-parameter impacts for a scenario.
    pub fn decision(&self, id: &str) -> Option<&(TuneDecision, Vec<f64>)> {
        self.position(id).map(|i| &self.decisions[i])
    }
}

fn time_or_inf(p: &EggParameters) -> f64 {
    cooking_time_s(p).unwrap_or(f64::INFINITY)
}

/// Sign of the cooking time's partial derivative in `p` at `x`.
fn slope_sign(x: &EggParameters, p: Param, (lo, hi): (f64, f64)) -> f64 {
    let h = 1e-4 * (hi - lo);
    let v = x.get(p);
    let up = cooking_time_s(&x.with(p, (v + h).min(hi))).ok();
    let down = cooking_time_s(&x.with(p, (v - h).max(lo))).ok();
    let diff = match (up, down) {
        (Some(u), Some(d)) => u - d,
        (Some(u), None) => u - time_or_inf(x),
        (None, Some(d)) => time_or_inf(x) - d,
        (None, None) => 0.0,
    };
    if diff < 0.0 { -1.0 } else { 1.0 }
}

fn round_outward(p: Param, lo: f64, hi: f64) -> [f64; 2] {
    let f = 10f64.powi(p.decimals() as i32);
    let clean = |v: f64| format_value(p.key(), v).parse::<f64>().expect("formatted number parses");
    [clean((lo * f + 1e-9).floor() / f), clean((hi * f - 1e-9).ceil() / f)]
}

fn tune_ranges(s: &Scenario, arrows: &[Param], orientation: f64) -> Vec<(Param, [f64; 2])> {
    arrows
        .iter()
        .map(|&p| {
            let (lo, hi) = s.bound(p);
            let w = 0.1 * (hi - lo);
            let opt = s.optimal.get(p);
            let dir = slope_sign(&s.optimal, p, (lo, hi)) * orientation;
            let (a, b) = if dir > 0.0 { (opt - 0.4 * w, opt + w) } else { (opt - w, opt + 0.4 * w) };
            (p, round_outward(p, a.max(lo), b.min(hi)))
        })
        .collect()
}

/// The explanation shown for a scenario: arrow parameters are Tune with a
/// range around the optimum that is skewed so its midpoint misses the
/// Perfect band; everything else is No-Tune.
///
/// The range spans 10% of the bound width, 40% of it on one side of the
/// optimum and 100% on the other. The skew direction follows the sign of
/// each parameter's effect on cooking time, flipped jointly when that moves
/// the range midpoint further from the target.
pub fn scenario_decision(s: &Scenario) -> (TuneDecision, Vec<f64>) {
    let bands = FeedbackBands::default();
    let arrows: Vec<Param> = s.arrow_params().into_iter().filter(|p| !s.is_fixed(*p)).collect();
    let midpoint_miss = |ranges: &[(Param, [f64; 2])]| {
        let mut x = s.optimal;
        for (p, [lo, hi]) in ranges {
            x.set(*p, 0.5 * (lo + hi));
        }
        (time_or_inf(&x) - bands.target()).abs()
    };
    let forward = tune_ranges(s, &arrows, 1.0);
    let backward = tune_ranges(s, &arrows, -1.0);
    let ranges = if midpoint_miss(&backward) > midpoint_miss(&forward) { backward } else { forward };

    // predicted loss over the corners of the Tune box and the optimum
    let loss = |x: &EggParameters| cooking_time_s(x).ok().map(|t| (t - bands.target()).abs());
    let mut losses: Vec<f64> = loss(&s.optimal).into_iter().collect();
    for mask in 0..(1usize << ranges.len()) {
        let mut x = s.optimal;
        for (k, (p, [lo, hi])) in ranges.iter().enumerate() {
            x.set(*p, if mask >> k & 1 == 1 { *hi } else { *lo });
        }
        losses.extend(loss(&x));
    }
    let lo = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let base_time = time_or_inf(&s.recommended);
    let mut impacts = vec![0.0; 6];
    let params = Param::ALL
        .into_iter()
        .map(|p| {
            let tune = ranges.iter().find(|(q, _)| *q == p).map(|(_, r)| *r);
            if tune.is_some() {
                let moved = time_or_inf(&s.recommended.with(p, s.optimal.get(p)));
                impacts[p.index()] = if moved.is_finite() && base_time.is_finite() { (base_time - moved).abs() } else { 0.0 };
            }
            ParamDecision { name: p.key().to_string(), fixed: s.is_fixed(p), tune }
        })
        .collect();
    (TuneDecision { params, interval: [lo, hi], converged: false }, impacts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_fixture() {
        let all = shipped_scenarios();
        assert_eq!(all.len(), 7);
        let training: Vec<&str> = all.iter().filter(|s| s.is_training).map(|s| s.id.as_str()).collect();
        assert_eq!(training, vec!["chicken"]);
        let emu = all.iter().find(|s| s.id == "emu").unwrap();
        assert_eq!((emu.recommended.mass_g, emu.optimal.mass_g), (95.0, 75.0));
        assert_eq!(emu.fixed.get(&Param::TYolk), Some(&63.0));
    }

    #[test]
    fn overcooked_optimum_rejected() {
        // only the chicken scenario uses 50 g; fixed, recommended and optimal move together
        let text = SHIPPED_SCENARIOS.replace("\"mass_g\": 50", "\"mass_g\": 150");
        let err = load_scenarios(&text).unwrap_err();
        assert!(matches!(&err, ScenarioError::Invalid { scenario, field, .. } if scenario == "chicken" && field == "optimal"), "{err}");
    }

    #[test]
    fn fixed_mismatch_rejected() {
        let text = SHIPPED_SCENARIOS.replacen("\"altitude_m\": 5\n", "\"altitude_m\": 6\n", 1);
        let err = load_scenarios(&text).unwrap_err();
        assert!(matches!(&err, ScenarioError::Invalid { field, .. } if field == "fixed.altitude_m"), "{err}");
    }

    #[test]
    fn decisions_tune_exactly_the_arrows() {
        let cat = Catalog::shipped();
        for s in cat.scenarios() {
            let (d, impacts) = cat.decision(&s.id).unwrap();
            let tuned: Vec<&str> = d.tune().map(|(n, _)| n).collect();
            let arrows: Vec<&str> = s.arrow_params().into_iter().map(Param::key).collect();
            assert_eq!(tuned, arrows, "{}", s.id);
            for (n, [lo, hi]) in d.tune() {
                let p = Param::from_key(n).unwrap();
                let opt = s.optimal.get(p);
                assert!(lo <= opt && opt <= hi, "{} {n}", s.id);
                assert!(((lo + hi) / 2.0 - opt).abs() > 1e-9, "{} {n} centred", s.id);
                assert!(impacts[p.index()] > 0.0);
            }
        }
    }
}
