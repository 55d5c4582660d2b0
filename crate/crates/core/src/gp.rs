//! Gaussian-process regression with a squared-exponential ARD kernel.
//!
//! Inputs are min-max normalized to `[0, 1]` per dimension using caller
//! supplied bounds. The prior mean is the constant mean of the training
//! targets. Hyperparameters are chosen by maximizing the log marginal
//! likelihood: a fixed 16-point log-spaced grid of starts followed by
//! coordinate refinement in log space. The procedure has no random
//! component, so fitting is fully deterministic.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GpError {
    #[error("need at least 2 distinct training points, got {0}")]
    TooFewPoints(usize),
    #[error("training inputs and targets differ in length ({inputs} vs {targets})")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("input {row} has dimension {got}, expected {expected}")]
    DimensionMismatch { row: usize, got: usize, expected: usize },
    #[error("input {row} lies outside the bounds in dimension {dim}")]
    OutOfBounds { row: usize, dim: usize },
    #[error("non-finite training value at row {0}")]
    NonFinite(usize),
    #[error("rows {a} and {b} share an input but have different targets; set a positive noise floor")]
    ConflictingDuplicates { a: usize, b: usize },
    #[error("invalid kernel configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(
        "covariance not positive definite after jitter {jitter:e} (diagonal range [{min_diag:e}, {max_diag:e}])"
    )]
    NotPositiveDefinite { jitter: f64, min_diag: f64, max_diag: f64 },
}

/// Squared-exponential kernel hyperparameters, in normalized input units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub length_scales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelConfig {
    pub fn isotropic(dim: usize, length_scale: f64, signal_variance: f64, noise_variance: f64) -> Self {
        KernelConfig {
            length_scales: vec![length_scale; dim],
            signal_variance,
            noise_variance,
        }
    }

    pub fn validate(&self) -> Result<(), GpError> {
        if self.length_scales.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(GpError::InvalidConfig("length scales must be positive"));
        }
        if !(self.signal_variance > 0.0) || !self.signal_variance.is_finite() {
            return Err(GpError::InvalidConfig("signal variance must be positive"));
        }
        if !(self.noise_variance >= 0.0) || !self.noise_variance.is_finite() {
            return Err(GpError::InvalidConfig("noise variance must be non-negative"));
        }
        Ok(())
    }

    /// `k(a, b) = s² exp(-½ Σ ((a_i - b_i) / l_i)²)`
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.length_scales)
            .map(|((x, y), l)| {
                let d = (x - y) / l;
                d * d
            })
            .sum();
        self.signal_variance * (-0.5 * r2).exp()
    }
}

/// Posterior mean and standard deviation of the latent function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Lower bound for the noise variance. Zero keeps the model
    /// interpolating; positive values also let the noise be optimized.
    pub noise_floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { noise_floor: 0.0 }
    }
}

/// A fitted, immutable GP surrogate.
#[derive(Debug, Clone)]
pub struct GpModel {
    bounds: Vec<(f64, f64)>,
    x_train: Vec<Vec<f64>>,
    y_train: Vec<f64>,
    prior_mean: f64,
    config: KernelConfig,
    jitter: f64,
    chol_l: DMatrix<f64>,
    alpha: DVector<f64>,
}

fn normalize_point(bounds: &[(f64, f64)], x: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(bounds)
        .map(|(v, (lo, hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

struct Factor {
    l: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
}

fn factorize(x: &[Vec<f64>], resid: &DVector<f64>, config: &KernelConfig) -> Result<Factor, GpError> {
    let n = x.len();
    let mut k = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = config.eval(&x[i], &x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let mut jitter = JITTER_START;
    loop {
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += config.noise_variance + jitter * config.signal_variance;
        }
        if let Some(chol) = m.cholesky() {
            let alpha = chol.solve(resid);
            return Ok(Factor { l: chol.unpack(), alpha, jitter: jitter * config.signal_variance });
        }
        if jitter >= JITTER_MAX {
            let diag = k.diagonal();
            return Err(GpError::NotPositiveDefinite {
                jitter: jitter * config.signal_variance,
                min_diag: diag.min(),
                max_diag: diag.max(),
            });
        }
        jitter = (jitter * 2.0).min(JITTER_MAX);
    }
}

fn lml_from(factor: &Factor, resid: &DVector<f64>) -> f64 {
    let n = resid.len() as f64;
    let log_det_half: f64 = factor.l.diagonal().iter().map(|d| d.ln()).sum();
    -0.5 * resid.dot(&factor.alpha) - log_det_half - 0.5 * n * LN_2PI
}

fn check_data(x: &[Vec<f64>], y: &[f64], bounds: &[(f64, f64)]) -> Result<(), GpError> {
    if x.len() != y.len() {
        return Err(GpError::LengthMismatch { inputs: x.len(), targets: y.len() });
    }
    for (row, (xi, yi)) in x.iter().zip(y).enumerate() {
        if xi.len() != bounds.len() {
            return Err(GpError::DimensionMismatch { row, got: xi.len(), expected: bounds.len() });
        }
        if !yi.is_finite() || xi.iter().any(|v| !v.is_finite()) {
            return Err(GpError::NonFinite(row));
        }
        for (dim, (v, (lo, hi))) in xi.iter().zip(bounds).enumerate() {
            let slack = 1e-9 * (hi - lo).abs().max(1.0);
            if *v < lo - slack || *v > hi + slack {
                return Err(GpError::OutOfBounds { row, dim });
            }
        }
    }
    Ok(())
}

fn distinct_inputs(x: &[Vec<f64>]) -> usize {
    let mut seen: Vec<&Vec<f64>> = Vec::new();
    for xi in x {
        if !seen.iter().any(|s| *s == xi) {
            seen.push(xi);
        }
    }
    seen.len()
}

fn population_variance(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

impl GpModel {
    /// Fits hyperparameters by maximizing the log marginal likelihood.
    pub fn fit(x: &[Vec<f64>], y: &[f64], bounds: &[(f64, f64)], opts: FitOptions) -> Result<GpModel, GpError> {
        check_data(x, y, bounds)?;
        let distinct = distinct_inputs(x);
        if distinct < 2 {
            return Err(GpError::TooFewPoints(distinct));
        }
        if opts.noise_floor <= 0.0 {
            for a in 0..x.len() {
                for b in a + 1..x.len() {
                    if x[a] == x[b] && y[a] != y[b] {
                        return Err(GpError::ConflictingDuplicates { a, b });
                    }
                }
            }
        }

        let d = bounds.len();
        let xn: Vec<Vec<f64>> = x.iter().map(|xi| normalize_point(bounds, xi)).collect();
        let prior_mean = y.iter().sum::<f64>() / y.len() as f64;
        let resid = DVector::from_iterator(y.len(), y.iter().map(|v| v - prior_mean));
        let scale = {
            let v = population_variance(y);
            if v > 0.0 { v } else { 1.0 }
        };
        let floor = opts.noise_floor.max(0.0);
        let fit_noise = floor > 0.0;

        // theta = [ln l_1..ln l_d, ln s², (ln noise)]
        let n_theta = d + 1 + usize::from(fit_noise);
        let lower: Vec<f64> = (0..n_theta)
            .map(|i| match i {
                i if i < d => 0.01f64.ln(),
                i if i == d => (scale * 1e-3).ln(),
                _ => floor.ln(),
            })
            .collect();
        let upper: Vec<f64> = (0..n_theta)
            .map(|i| match i {
                i if i < d => 20f64.ln(),
                i if i == d => (scale * 1e3).ln(),
                _ => scale.max(floor).ln(),
            })
            .collect();
        let to_config = |theta: &[f64]| KernelConfig {
            length_scales: theta[..d].iter().map(|t| t.exp()).collect(),
            signal_variance: theta[d].exp(),
            noise_variance: if fit_noise { theta[d + 1].exp() } else { 0.0 },
        };
        let objective = |theta: &[f64]| -> f64 {
            match factorize(&xn, &resid, &to_config(theta)) {
                Ok(f) => {
                    let v = lml_from(&f, &resid);
                    if v.is_finite() { v } else { f64::NEG_INFINITY }
                }
                Err(_) => f64::NEG_INFINITY,
            }
        };

        let mut starts: Vec<(f64, Vec<f64>)> = Vec::with_capacity(16);
        for &ls in &logspace(0.05, 2.0, 4) {
            for &sv in &logspace(0.25, 16.0, 4) {
                let mut theta = vec![ls.ln(); d];
                theta.push((sv * scale).ln());
                if fit_noise {
                    theta.push(floor.ln());
                }
                starts.push((objective(&theta), theta));
            }
        }
        // stable: ties keep grid order
        starts.sort_by(|a, b| b.0.total_cmp(&a.0));

        let mut best: Option<(f64, Vec<f64>)> = None;
        for (start_val, start) in starts.into_iter().take(2) {
            let (val, theta) = coordinate_ascent(&objective, start_val, start, &lower, &upper);
            if best.as_ref().map_or(true, |(b, _)| val > *b) {
                best = Some((val, theta));
            }
        }
        let (_, theta) = best.expect("at least one start");
        GpModel::with_config(x, y, bounds, to_config(&theta))
    }

    /// Builds a model with fixed hyperparameters (no optimization).
    pub fn with_config(x: &[Vec<f64>], y: &[f64], bounds: &[(f64, f64)], config: KernelConfig) -> Result<GpModel, GpError> {
        check_data(x, y, bounds)?;
        if x.is_empty() {
            return Err(GpError::TooFewPoints(0));
        }
        config.validate()?;
        if config.length_scales.len() != bounds.len() {
            return Err(GpError::InvalidConfig("one length scale per input dimension required"));
        }
        let xn: Vec<Vec<f64>> = x.iter().map(|xi| normalize_point(bounds, xi)).collect();
        let prior_mean = y.iter().sum::<f64>() / y.len() as f64;
        let resid = DVector::from_iterator(y.len(), y.iter().map(|v| v - prior_mean));
        let factor = factorize(&xn, &resid, &config)?;
        Ok(GpModel {
            bounds: bounds.to_vec(),
            x_train: xn,
            y_train: y.to_vec(),
            prior_mean,
            config,
            jitter: factor.jitter,
            chol_l: factor.l,
            alpha: factor.alpha,
        })
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn prior_std(&self) -> f64 {
        self.config.signal_variance.sqrt()
    }

    /// Absolute jitter that was added to the covariance diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn n_train(&self) -> usize {
        self.y_train.len()
    }

    pub fn y_train(&self) -> &[f64] {
        &self.y_train
    }

    /// Training inputs in normalized coordinates.
    pub fn x_train_normalized(&self) -> &[Vec<f64>] {
        &self.x_train
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        normalize_point(&self.bounds, x)
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let resid = DVector::from_iterator(self.y_train.len(), self.y_train.iter().map(|v| v - self.prior_mean));
        let n = resid.len() as f64;
        let log_det_half: f64 = self.chol_l.diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * resid.dot(&self.alpha) - log_det_half - 0.5 * n * LN_2PI
    }

    /// Posterior at a single point in natural units. Points outside the
    /// bounds are clipped onto them.
    pub fn predict_one(&self, x: &[f64]) -> Posterior {
        let mut z = normalize_point(&self.bounds, x);
        if z.iter().any(|v| !(0.0..=1.0).contains(v)) {
            log::warn!("query point outside normalization bounds; clipping");
            z.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        }
        self.predict_normalized(&z)
    }

    pub fn predict(&self, queries: &[Vec<f64>]) -> Vec<Posterior> {
        queries.iter().map(|q| self.predict_one(q)).collect()
    }

    fn predict_normalized(&self, z: &[f64]) -> Posterior {
        let n = self.x_train.len();
        let kstar: Vec<f64> = self.x_train.iter().map(|xi| self.config.eval(xi, z)).collect();
        let mean = self.prior_mean + kstar.iter().zip(self.alpha.iter()).map(|(k, a)| k * a).sum::<f64>();
        // forward substitution: v = L^-1 k*
        let mut v = vec![0.0; n];
        for i in 0..n {
            let mut s = kstar[i];
            for (j, vj) in v.iter().enumerate().take(i) {
                s -= self.chol_l[(i, j)] * vj;
            }
            v[i] = s / self.chol_l[(i, i)];
        }
        let var = self.config.signal_variance - v.iter().map(|t| t * t).sum::<f64>();
        Posterior { mean, std: var.max(0.0).sqrt() }
    }
}

fn coordinate_ascent(
    objective: &dyn Fn(&[f64]) -> f64,
    start_val: f64,
    start: Vec<f64>,
    lower: &[f64],
    upper: &[f64],
) -> (f64, Vec<f64>) {
    let mut theta = start;
    let mut val = start_val;
    let mut step = 1.0;
    let mut sweeps = 0;
    while step > 0.02 && sweeps < 80 {
        sweeps += 1;
        let mut improved = false;
        for i in 0..theta.len() {
            for dir in [1.0, -1.0] {
                let mut cand = theta.clone();
                cand[i] = (cand[i] + dir * step).clamp(lower[i], upper[i]);
                if cand[i] == theta[i] {
                    continue;
                }
                let v = objective(&cand);
                if v > val {
                    val = v;
                    theta = cand;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (val, theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_bounds(d: usize) -> Vec<(f64, f64)> {
        vec![(0.0, 1.0); d]
    }

    #[test]
    fn two_point_fit_interpolates() {
        let x = vec![vec![0.2], vec![0.7]];
        let y = vec![1.0, -2.0];
        let m = GpModel::fit(&x, &y, &unit_bounds(1), FitOptions::default()).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            let p = m.predict_one(xi);
            assert!((p.mean - yi).abs() < 1e-3, "{p:?}");
        }
    }

    #[test]
    fn constant_targets_give_constant_mean() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 / 5.0, (i * i) as f64 / 25.0]).collect();
        let y = vec![4.2; 6];
        let m = GpModel::fit(&x, &y, &unit_bounds(2), FitOptions::default()).unwrap();
        for q in [[0.1, 0.9], [0.5, 0.5], [0.95, 0.05]] {
            let p = m.predict_one(&q);
            assert!((p.mean - 4.2).abs() < 1e-9);
            assert!(p.std <= m.prior_std() + 1e-8);
        }
    }

    #[test]
    fn noiseless_training_point_has_near_zero_std() {
        let x = vec![vec![0.1], vec![0.5], vec![0.9]];
        let y = vec![1.0, 0.0, 2.0];
        let m = GpModel::with_config(&x, &y, &unit_bounds(1), KernelConfig::isotropic(1, 0.3, 1.0, 0.0)).unwrap();
        let p = m.predict_one(&[0.5]);
        assert!((p.mean - 0.0).abs() < 1e-6);
        assert!(p.std < 1e-3);
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let x = vec![vec![0.0], vec![0.01]];
        let y = vec![3.0, 5.0];
        let m = GpModel::with_config(&x, &y, &unit_bounds(1), KernelConfig::isotropic(1, 0.05, 2.0, 0.0)).unwrap();
        let p = m.predict_one(&[1.0]);
        assert!((p.mean - 4.0).abs() < 1e-6);
        assert!((p.std - 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn conflicting_duplicates_need_noise_floor() {
        let x = vec![vec![0.3], vec![0.3], vec![0.8]];
        let y = vec![1.0, 2.0, 0.0];
        assert!(matches!(
            GpModel::fit(&x, &y, &unit_bounds(1), FitOptions::default()),
            Err(GpError::ConflictingDuplicates { a: 0, b: 1 })
        ));
        assert!(GpModel::fit(&x, &y, &unit_bounds(1), FitOptions { noise_floor: 1e-4 }).is_ok());
    }

    #[test]
    fn rejects_single_distinct_point_and_bad_input() {
        assert!(matches!(
            GpModel::fit(&[vec![0.5], vec![0.5]], &[1.0, 1.0], &unit_bounds(1), FitOptions::default()),
            Err(GpError::TooFewPoints(1))
        ));
        assert!(matches!(
            GpModel::fit(&[vec![0.5], vec![1.5]], &[1.0, 1.0], &unit_bounds(1), FitOptions::default()),
            Err(GpError::OutOfBounds { row: 1, dim: 0 })
        ));
        assert!(GpModel::with_config(&[vec![0.5]], &[1.0], &unit_bounds(1), KernelConfig::isotropic(1, -1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn permuting_training_data_keeps_lml() {
        let x = vec![vec![0.1, 0.2], vec![0.4, 0.9], vec![0.8, 0.3], vec![0.6, 0.6]];
        let y = vec![1.0, 2.5, -0.5, 0.7];
        let cfg = KernelConfig { length_scales: vec![0.3, 0.5], signal_variance: 1.5, noise_variance: 0.01 };
        let a = GpModel::with_config(&x, &y, &unit_bounds(2), cfg.clone()).unwrap();
        let order = [2, 0, 3, 1];
        let xp: Vec<Vec<f64>> = order.iter().map(|&i| x[i].clone()).collect();
        let yp: Vec<f64> = order.iter().map(|&i| y[i]).collect();
        let b = GpModel::with_config(&xp, &yp, &unit_bounds(2), cfg).unwrap();
        assert!((a.log_marginal_likelihood() - b.log_marginal_likelihood()).abs() < 1e-10);
        let pa = a.predict_one(&[0.5, 0.5]);
        let pb = b.predict_one(&[0.5, 0.5]);
        assert!((pa.mean - pb.mean).abs() < 1e-10 && (pa.std - pb.std).abs() < 1e-10);
    }

    #[test]
    fn duplicate_observation_with_noise_is_deterministic() {
        let x = vec![vec![0.1], vec![0.5], vec![0.5]];
        let y = vec![1.0, 0.0, 0.0];
        let cfg = KernelConfig::isotropic(1, 0.3, 1.0, 1e-3);
        let a = GpModel::with_config(&x, &y, &unit_bounds(1), cfg.clone()).unwrap();
        let b = GpModel::with_config(&x, &y, &unit_bounds(1), cfg.clone()).unwrap();
        let c = GpModel::with_config(&x[..2], &y[..2], &unit_bounds(1), cfg).unwrap();
        assert_eq!(a.log_marginal_likelihood().to_bits(), b.log_marginal_likelihood().to_bits());
        assert_ne!(a.log_marginal_likelihood(), c.log_marginal_likelihood());
    }

    #[test]
    fn two_point_lml_matches_scalar_formula() {
        let x = vec![vec![0.2], vec![0.6]];
        let y = vec![1.0, 3.0];
        let (l, s2, n2) = (0.4, 1.3, 0.05);
        let m = GpModel::with_config(&x, &y, &unit_bounds(1), KernelConfig::isotropic(1, l, s2, n2)).unwrap();
        // closed form for a 2x2 covariance [[a, b], [b, a]]
        let a = s2 + n2 + m.jitter();
        let b = s2 * (-0.5 * (0.4f64 / l).powi(2)).exp();
        let det = a * a - b * b;
        let (r0, r1) = (-1.0, 1.0);
        let quad = (a * r0 * r0 - 2.0 * b * r0 * r1 + a * r1 * r1) / det;
        let expect = -0.5 * quad - 0.5 * det.ln() - (2.0 * std::f64::consts::PI).ln();
        assert!((m.log_marginal_likelihood() - expect).abs() < 1e-10);
    }
}
