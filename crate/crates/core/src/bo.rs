//! Sequential Bayesian optimization (minimization) over a box with optional
//! fixed dimensions.
//!
//! The first three proposals are space-filling Halton points. After that a
//! GP surrogate is refit on every observation and the next point maximizes
//! Expected Improvement over 4096 randomly shifted Halton candidates plus a
//! local cloud around the incumbent, followed by a small pattern search.
//! Everything is seeded, so a run is reproducible bit for bit.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::egg::{EggError, EggParameters, Param};
use crate::gp::{FitOptions, GpError, GpModel, Posterior};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoError {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("point is infeasible: {0}")]
    Infeasible(String),
    #[error("objective value must be finite, got {0}")]
    NonFinite(f64),
    #[error("budget must be at least 3, got {0}")]
    BudgetTooSmall(usize),
    #[error("search space does not describe egg parameters")]
    NotEggSpace,
    #[error("offset moves {param} to {value}, outside [{lo}, {hi}]")]
    OffsetOutOfBounds { param: Param, value: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Gp(#[from] GpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<f64>,
}

/// Ordered, bounded search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self, BoError> {
        if dims.is_empty() {
            return Err(BoError::InvalidSpace("no dimensions".into()));
        }
        for d in &dims {
            if !(d.lower < d.upper) || !d.lower.is_finite() || !d.upper.is_finite() {
                return Err(BoError::InvalidSpace(format!("{}: lower must be below upper", d.name)));
            }
            if let Some(v) = d.fixed {
                if !(d.lower..=d.upper).contains(&v) {
                    return Err(BoError::InvalidSpace(format!("{}: fixed value {v} outside bounds", d.name)));
                }
            }
        }
        Ok(SearchSpace { dims })
    }

    /// Egg-parameter space with the given bounds and fixed values.
    pub fn egg(bounds: &[(f64, f64); 6], fixed: &[(Param, f64)]) -> Result<Self, BoError> {
        let dims = Param::ALL
            .into_iter()
            .map(|p| Dimension {
                name: p.key().to_string(),
                lower: bounds[p.index()].0,
                upper: bounds[p.index()].1,
                fixed: fixed.iter().find(|(q, _)| *q == p).map(|(_, v)| *v),
            })
            .collect();
        Self::new(dims)
    }

    /// Full egg domain with nothing fixed.
    pub fn egg_domain() -> Self {
        let bounds = Param::ALL.map(|p| p.domain());
        Self::egg(&bounds, &[]).expect("domain bounds are valid")
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.dims.iter().map(|d| (d.lower, d.upper)).collect()
    }

    pub fn free_indices(&self) -> Vec<usize> {
        self.dims.iter().enumerate().filter(|(_, d)| d.fixed.is_none()).map(|(i, _)| i).collect()
    }

    pub fn is_degenerate(&self) -> bool {
        self.dims.iter().all(|d| d.fixed.is_some())
    }

    pub fn is_egg(&self) -> bool {
        self.dims.len() == 6 && self.dims.iter().zip(Param::ALL).all(|(d, p)| d.name == p.key())
    }

    pub fn check_feasible(&self, x: &[f64]) -> Result<(), BoError> {
        if x.len() != self.dims.len() {
            return Err(BoError::Infeasible(format!("expected {} coordinates, got {}", self.dims.len(), x.len())));
        }
        for (v, d) in x.iter().zip(&self.dims) {
            if !v.is_finite() || *v < d.lower || *v > d.upper {
                return Err(BoError::Infeasible(format!("{} = {v} outside [{}, {}]", d.name, d.lower, d.upper)));
            }
            if let Some(f) = d.fixed {
                if v.to_bits() != f.to_bits() {
                    return Err(BoError::Infeasible(format!("{} is fixed at {f}, got {v}", d.name)));
                }
            }
        }
        Ok(())
    }

    /// Maps unit-cube coordinates of the free dimensions to a full point.
    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        let mut it = unit.iter();
        self.dims
            .iter()
            .map(|d| match d.fixed {
                Some(v) => v,
                None => {
                    let u = it.next().copied().unwrap_or(0.5).clamp(0.0, 1.0);
                    d.lower + u * (d.upper - d.lower)
                }
            })
            .collect()
    }

    fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(x)
            .filter(|(d, _)| d.fixed.is_none())
            .map(|(d, v)| (v - d.lower) / (d.upper - d.lower))
            .collect()
    }

    pub fn named(&self, x: &[f64]) -> serde_json::Map<String, serde_json::Value> {
        self.dims.iter().zip(x).map(|(d, v)| (d.name.clone(), serde_json::json!(v))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoConfig {
    pub n_init: usize,
    pub n_candidates: usize,
    pub n_local: usize,
    /// Noise floor relative to the variance of observed targets.
    pub relative_noise_floor: f64,
    /// Penalty used for a failed evaluation before any success was observed.
    pub initial_penalty: f64,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            n_init: 3,
            n_candidates: 4096,
            n_local: 256,
            relative_noise_floor: 1e-6,
            initial_penalty: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub y: f64,
    #[serde(default)]
    pub penalized: bool,
}

/// Optimizer state as a value: `observe` consumes it and returns the successor.
#[derive(Debug, Clone)]
pub struct BoState {
    space: SearchSpace,
    observations: Vec<Observation>,
    model: Option<GpModel>,
    seed: u64,
    iteration: usize,
    config: BoConfig,
}

const HALTON_PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

fn halton(index: u64, dim: usize, shift: &[f64]) -> Vec<f64> {
    (0..dim)
        .map(|k| {
            let base = HALTON_PRIMES[k % HALTON_PRIMES.len()];
            // dimensions beyond the prime table reuse bases with a different index stride
            let idx = index * (1 + (k / HALTON_PRIMES.len()) as u64);
            (radical_inverse(idx, base) + shift[k]).fract()
        })
        .collect()
}

fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected Improvement for minimization.
pub fn expected_improvement(p: Posterior, best: f64) -> f64 {
    let imp = best - p.mean;
    if p.std <= 1e-12 {
        return imp.max(0.0);
    }
    let z = imp / p.std;
    imp * norm_cdf(z) + p.std * norm_pdf(z)
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl BoState {
    pub fn new(space: SearchSpace, seed: u64) -> Self {
        Self::with_config(space, seed, BoConfig::default())
    }

    pub fn with_config(space: SearchSpace, seed: u64, config: BoConfig) -> Self {
        BoState {
            space,
            observations: Vec::new(),
            model: None,
            seed,
            iteration: 0,
            config,
        }
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn model(&self) -> Option<&GpModel> {
        self.model.as_ref()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Best observation so far (lowest objective; earliest on ties).
    pub fn incumbent(&self) -> Option<&Observation> {
        self.observations.iter().fold(None, |best: Option<&Observation>, o| match best {
            Some(b) if b.y <= o.y => Some(b),
            _ => Some(o),
        })
    }

    fn space_filling(&self) -> Vec<f64> {
        let free = self.space.free_indices().len();
        let mut rng = rng_for(self.seed, 0);
        let shift: Vec<f64> = (0..free).map(|_| rng.random::<f64>()).collect();
        self.space.from_unit(&halton(self.observations.len() as u64 + 1, free, &shift))
    }

    /// Next point to evaluate.
    pub fn propose(&self) -> Vec<f64> {
        if self.space.is_degenerate() {
            log::info!("all dimensions fixed; proposing the single feasible point");
            return self.space.from_unit(&[]);
        }
        let model = match &self.model {
            Some(m) if self.observations.len() >= self.config.n_init => m,
            _ => return self.space_filling(),
        };
        let best = self.incumbent().map(|o| o.y).unwrap_or(f64::INFINITY);
        let free = self.space.free_indices().len();
        let mut rng = rng_for(self.seed, 1 + self.iteration as u64);
        let shift: Vec<f64> = (0..free).map(|_| rng.random::<f64>()).collect();
        let offset = rng.random_range(0..1u64 << 20);

        let score = |u: &[f64]| expected_improvement(model.predict_one(&self.space.from_unit(u)), best);

        let mut best_u: Vec<f64> = Vec::new();
        let mut best_ei = f64::NEG_INFINITY;
        let mut consider = |u: Vec<f64>, ei: f64| {
            if ei > best_ei {
                best_ei = ei;
                best_u = u;
            }
        };
        for i in 0..self.config.n_candidates as u64 {
            let u = halton(offset + i + 1, free, &shift);
            let ei = score(&u);
            consider(u, ei);
        }
        if let Some(inc) = self.incumbent() {
            let center = self.space.to_unit(&inc.x);
            for _ in 0..self.config.n_local {
                let u: Vec<f64> = center
                    .iter()
                    .map(|c| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (c + 0.05 * z).clamp(0.0, 1.0)
                    })
                    .collect();
                let ei = score(&u);
                consider(u, ei);
            }
        }

        // pattern search around the best candidate
        let mut step = 0.02;
        for _ in 0..4 {
            let mut improved = true;
            while improved {
                improved = false;
                for k in 0..free {
                    for dir in [1.0, -1.0] {
                        let mut u = best_u.clone();
                        u[k] = (u[k] + dir * step).clamp(0.0, 1.0);
                        let ei = score(&u);
                        if ei > best_ei {
                            best_ei = ei;
                            best_u = u;
                            improved = true;
                        }
                    }
                }
            }
            step *= 0.5;
        }
        self.space.from_unit(&best_u)
    }

    /// Records an observation and refits the surrogate.
    pub fn observe(self, x: Vec<f64>, y: f64) -> Result<BoState, BoError> {
        self.observe_with(x, y, false)
    }

    fn observe_with(mut self, x: Vec<f64>, y: f64, penalized: bool) -> Result<BoState, BoError> {
        self.space.check_feasible(&x)?;
        if !y.is_finite() {
            return Err(BoError::NonFinite(y));
        }
        self.observations.push(Observation { x, y, penalized });
        self.iteration += 1;
        self.refit()?;
        Ok(self)
    }

    fn refit(&mut self) -> Result<(), BoError> {
        let xs: Vec<Vec<f64>> = self.observations.iter().map(|o| o.x.clone()).collect();
        let ys: Vec<f64> = self.observations.iter().map(|o| o.y).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let var = ys.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / ys.len() as f64;
        let floor = self.config.relative_noise_floor * if var > 0.0 { var } else { 1.0 };
        self.model = match GpModel::fit(&xs, &ys, &self.space.bounds(), FitOptions { noise_floor: floor }) {
            Ok(m) => Some(m),
            Err(GpError::TooFewPoints(_)) => None,
            Err(e) => return Err(e.into()),
        };
        Ok(())
    }
}

/// One line of an optimization trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub y: f64,
    pub incumbent: f64,
    #[serde(default)]
    pub penalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub point: Vec<f64>,
    pub predicted: Option<Posterior>,
}

impl Recommendation {
    pub fn egg(&self) -> Option<EggParameters> {
        EggParameters::from_slice(&self.point)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: Vec<TraceRecord>,
    pub best: Recommendation,
    pub state: BoState,
}

impl RunResult {
    /// Writes the trace as JSON lines with named coordinates.
    pub fn write_trace_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let space = self.state.space();
        for r in &self.trace {
            let line = serde_json::json!({
                "iteration": r.iteration,
                "x": space.named(&r.x),
                "y": r.y,
                "incumbent": r.incumbent,
                "penalized": r.penalized,
            });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Runs `budget` evaluations of `objective`. A failed evaluation is
/// recorded with a penalty of twice the worst successful loss so far.
pub fn run<E, F>(mut objective: F, space: SearchSpace, budget: usize, seed: u64) -> Result<RunResult, BoError>
where
    E: std::fmt::Display,
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    run_with_config(&mut objective, space, budget, seed, BoConfig::default())
}

pub fn run_with_config<E, F>(
    objective: &mut F,
    space: SearchSpace,
    budget: usize,
    seed: u64,
    config: BoConfig,
) -> Result<RunResult, BoError>
where
    E: std::fmt::Display,
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    if budget < 3 {
        return Err(BoError::BudgetTooSmall(budget));
    }
    let initial_penalty = config.initial_penalty;
    let mut state = BoState::with_config(space, seed, config);
    let mut trace = Vec::with_capacity(budget);
    for iteration in 0..budget {
        let x = state.propose();
        let (y, penalized) = match objective(&x) {
            Ok(y) if y.is_finite() => (y, false),
            Ok(y) => {
                log::debug!("non-finite objective {y} at iteration {iteration}; penalizing");
                (penalty(&state, initial_penalty), true)
            }
            Err(e) => {
                log::debug!("objective failed at iteration {iteration}: {e}; penalizing");
                (penalty(&state, initial_penalty), true)
            }
        };
        state = state.observe_with(x.clone(), y, penalized)?;
        let incumbent = state.incumbent().map(|o| o.y).unwrap_or(y);
        trace.push(TraceRecord { iteration, x, y, incumbent, penalized });
    }
    let best_obs = state
        .observations()
        .iter()
        .filter(|o| !o.penalized)
        .fold(None, |best: Option<&Observation>, o| match best {
            Some(b) if b.y <= o.y => Some(b),
            _ => Some(o),
        })
        .or_else(|| state.incumbent())
        .expect("budget >= 3 observations");
    let predicted = state.model().map(|m| m.predict_one(&best_obs.x));
    let best = Recommendation { point: best_obs.x.clone(), predicted };
    Ok(RunResult { trace, best, state })
}

fn penalty(state: &BoState, initial: f64) -> f64 {
    let worst = state
        .observations()
        .iter()
        .filter(|o| !o.penalized)
        .map(|o| o.y)
        .fold(f64::NEG_INFINITY, f64::max);
    if worst > 0.0 { 2.0 * worst } else { initial }
}

/// Convenience wrapper for objectives over [`EggParameters`].
pub fn run_egg<F>(mut objective: F, space: SearchSpace, budget: usize, seed: u64) -> Result<RunResult, BoError>
where
    F: FnMut(&EggParameters) -> Result<f64, EggError>,
{
    if !space.is_egg() {
        return Err(BoError::NotEggSpace);
    }
    run(
        |x: &[f64]| objective(&EggParameters::from_slice(x).expect("six coordinates")),
        space,
        budget,
        seed,
    )
}

/// Applies constant per-parameter offsets to a known optimum, producing the
/// deliberately imperfect recommendation shown at the start of a scenario.
pub fn noisy_recommendation(true_optimum: &EggParameters, offsets: &[(Param, f64)]) -> Result<Recommendation, BoError> {
    let mut values = *true_optimum;
    for &(param, off) in offsets {
        let v = values.get(param) + off;
        let (lo, hi) = param.domain();
        if !(lo..=hi).contains(&v) {
            return Err(BoError::OffsetOutOfBounds { param, value: v, lo, hi });
        }
        values.set(param, v);
    }
    Ok(Recommendation { point: values.to_array().to_vec(), predicted: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_space() -> SearchSpace {
        SearchSpace::new(vec![Dimension { name: "x".into(), lower: -2.0, upper: 3.0, fixed: None }]).unwrap()
    }

    #[test]
    fn degenerate_space_proposes_fixed_point() {
        let space = SearchSpace::new(vec![
            Dimension { name: "a".into(), lower: 0.0, upper: 1.0, fixed: Some(0.25) },
            Dimension { name: "b".into(), lower: 5.0, upper: 6.0, fixed: Some(5.5) },
        ])
        .unwrap();
        let state = BoState::new(space.clone(), 3);
        assert_eq!(state.propose(), vec![0.25, 5.5]);
        let mut calls = 0;
        let res = run(
            |x: &[f64]| -> Result<f64, EggError> {
                calls += 1;
                Ok(x[0] + x[1])
            },
            space,
            3,
            9,
        )
        .unwrap();
        assert_eq!(calls, 3);
        assert!(res.trace.iter().all(|r| r.x == vec![0.25, 5.5]));
        assert_eq!(res.best.point, vec![0.25, 5.5]);
    }

    #[test]
    fn invalid_spaces_rejected() {
        assert!(SearchSpace::new(vec![Dimension { name: "a".into(), lower: 1.0, upper: 1.0, fixed: None }]).is_err());
        assert!(SearchSpace::new(vec![Dimension { name: "a".into(), lower: 0.0, upper: 1.0, fixed: Some(2.0) }]).is_err());
    }

    #[test]
    fn observe_rejects_infeasible_points() {
        let state = BoState::new(line_space(), 0);
        assert!(matches!(state.clone().observe(vec![5.0], 1.0), Err(BoError::Infeasible(_))));
        assert!(matches!(state.observe(vec![0.0], f64::NAN), Err(BoError::NonFinite(_))));
    }

    #[test]
    fn incumbent_tracks_minimum() {
        let s = BoState::new(line_space(), 0).observe(vec![0.0], 3.0).unwrap();
        let s = s.observe(vec![1.0], 1.0).unwrap();
        assert_eq!(s.incumbent().unwrap().y, 1.0);
        let s = s.observe(vec![2.0], 2.0).unwrap();
        assert_eq!(s.incumbent().unwrap().x, vec![1.0]);
    }

    #[test]
    fn duplicate_observation_refits() {
        let s = BoState::new(line_space(), 0)
            .observe(vec![0.0], 3.0)
            .unwrap()
            .observe(vec![1.0], 1.0)
            .unwrap()
            .observe(vec![1.0], 1.2)
            .unwrap();
        assert!(s.model().is_some());
    }

    #[test]
    fn proposals_are_deterministic() {
        let s = BoState::new(line_space(), 11)
            .observe(vec![0.0], 3.0)
            .unwrap()
            .observe(vec![1.0], 1.0)
            .unwrap()
            .observe(vec![2.5], 4.0)
            .unwrap();
        assert_eq!(s.propose(), s.clone().propose());
    }

    #[test]
    fn run_is_bitwise_reproducible_and_monotone() {
        let f = |x: &[f64]| -> Result<f64, EggError> { Ok((x[0] - 0.7).powi(2)) };
        let a = run(f, line_space(), 12, 5).unwrap();
        let b = run(f, line_space(), 12, 5).unwrap();
        assert_eq!(a.trace, b.trace);
        assert!(a.trace.windows(2).all(|w| w[1].incumbent <= w[0].incumbent));
        assert_eq!(a.trace.len(), 12);
    }

    #[test]
    fn failed_evaluations_are_penalized() {
        let f = |x: &[f64]| -> Result<f64, String> {
            if x[0] > 2.0 { Err("boom".into()) } else { Ok(x[0].abs()) }
        };
        let res = run(f, line_space(), 8, 1).unwrap();
        for r in res.trace.iter().filter(|r| r.penalized) {
            assert!(r.x[0] > 2.0);
            assert!(r.y > 0.0);
        }
        assert!(res.best.point[0] <= 2.0);
    }

    #[test]
    fn budget_below_three_rejected() {
        let f = |_: &[f64]| -> Result<f64, String> { Ok(0.0) };
        assert!(matches!(run(f, line_space(), 2, 0), Err(BoError::BudgetTooSmall(2))));
    }

    #[test]
    fn ei_is_nonnegative_and_zero_without_improvement_chance() {
        assert!(expected_improvement(Posterior { mean: 1.0, std: 0.0 }, 0.5) == 0.0);
        assert!((expected_improvement(Posterior { mean: 0.0, std: 0.0 }, 0.5) - 0.5).abs() < 1e-15);
        let ei = expected_improvement(Posterior { mean: 0.0, std: 1.0 }, 0.0);
        assert!((ei - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn noisy_recommendations() {
        let emu = EggParameters { mass_g: 75.0, lambda: 29.0, ywr: 0.9, t_egg_c: 30.0, t_yolk_c: 63.0, altitude_m: 50.0 };
        let rec = noisy_recommendation(&emu, &[(Param::Mass, 20.0)]).unwrap();
        assert_eq!(rec.egg().unwrap().mass_g, 95.0);
        assert_eq!(noisy_recommendation(&emu, &[]).unwrap().egg().unwrap(), emu);
        let duck = EggParameters { mass_g: 65.0, lambda: 27.0, ywr: 0.8, t_egg_c: 13.0, t_yolk_c: 63.0, altitude_m: 0.0 };
        assert_eq!(noisy_recommendation(&duck, &[(Param::Altitude, 500.0)]).unwrap().egg().unwrap().altitude_m, 500.0);
        assert!(noisy_recommendation(&duck, &[(Param::Altitude, -1.0)]).is_err());
    }

    #[test]
    fn trace_export_has_named_fields() {
        let f = |x: &[f64]| -> Result<f64, String> { Ok(x[0]) };
        let res = run(f, line_space(), 3, 0).unwrap();
        let mut buf = Vec::new();
        res.write_trace_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0]["x"]["x"].is_number());
        assert_eq!(lines[2]["iteration"], 2);
    }
}
