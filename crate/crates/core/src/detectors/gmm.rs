//! Diagonal-covariance Gaussian mixture fitted by EM.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use super::threshold::calibrate_threshold;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::stats::log_sum_exp;

pub const VARIANCE_FLOOR: f64 = 1e-6;
const MAX_AUTO_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KSelection {
    Fixed(usize),
    /// Fit k = 1..=5 and keep the lowest BIC.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmConfig {
    pub max_iter: usize,
    /// Stop when `|ΔLL| / |LL|` drops below this.
    pub tol: f64,
    pub variance_floor: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig { max_iter: 200, tol: 1e-6, variance_floor: VARIANCE_FLOOR }
    }
}

/// Fitted mixture. Parameters live in standardized space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub k: usize,
    pub weights: Vec<f64>,
    /// `k × d`
    pub means: Matrix,
    /// `k × d`, each entry at least the variance floor.
    pub variances: Matrix,
    pub feature_names: Vec<String>,
    pub threshold: Option<f64>,
    pub standardizer: Standardizer,
}

/// Result of a fit: the model plus the training trace.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Total training log-likelihood after initialization and after every M-step.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub bic: f64,
}

impl GmmModel {
    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim() {
            return Err(Error::invalid(format!(
                "{} feature names for a {}-dimensional model",
                names.len(),
                self.dim()
            )));
        }
        self.feature_names = names;
        Ok(self)
    }

    /// Negative log-likelihood of `x` under the mixture, evaluated in standardized space.
    pub fn nll(&self, x: &[f64]) -> Result<f64> {
        super::check_input(x, self.dim())?;
        let z = self.standardizer.apply(x);
        let mut terms = vec![0.0; self.k];
        self.joint_log_densities(&z, &self.log_norms(), &mut terms);
        Ok(-log_sum_exp(&terms))
    }

    /// Component means mapped back to the original feature units.
    pub fn original_means(&self) -> Matrix {
        let mut out = self.means.clone();
        for c in 0..self.k {
            let m = self.standardizer.invert(self.means.row(c));
            out.row_mut(c).copy_from_slice(&m);
        }
        out
    }

    /// Component variances in the original feature units.
    pub fn original_variances(&self) -> Matrix {
        let mut out = self.variances.clone();
        for c in 0..self.k {
            for (v, s) in out.row_mut(c).iter_mut().zip(&self.standardizer.scale) {
                *v *= s * s;
            }
        }
        out
    }

    /// Sets the threshold to the `quantile` of NLL scores over `reference` rows.
    pub fn calibrate(&mut self, reference: &Matrix, quantile: f64) -> Result<f64> {
        let scores = reference
            .iter_rows()
            .map(|r| self.nll(r))
            .collect::<Result<Vec<_>>>()?;
        let t = calibrate_threshold(&scores, quantile)?;
        self.threshold = Some(t);
        Ok(t)
    }

    /// `ln w_k - ½ Σ_d ln(2π σ²_kd)` per component.
    fn log_norms(&self) -> Vec<f64> {
        (0..self.k)
            .map(|c| {
                let lw = if self.weights[c] > 0.0 { libm::log(self.weights[c]) } else { f64::NEG_INFINITY };
                lw - 0.5 * self.variances.row(c).iter().map(|v| libm::log(2.0 * PI * v)).sum::<f64>()
            })
            .collect()
    }

    fn joint_log_densities(&self, z: &[f64], log_norms: &[f64], out: &mut [f64]) {
        for c in 0..self.k {
            let mu = self.means.row(c);
            let var = self.variances.row(c);
            let mut q = 0.0;
            for j in 0..z.len() {
                let d = z[j] - mu[j];
                q += d * d / var[j];
            }
            out[c] = log_norms[c] - 0.5 * q;
        }
    }
}

pub fn fit_gmm(data: &Matrix, k: KSelection, seed: u64) -> Result<GmmFit> {
    fit_gmm_with(data, k, seed, &GmmConfig::default())
}

pub fn fit_gmm_with(data: &Matrix, k: KSelection, seed: u64, config: &GmmConfig) -> Result<GmmFit> {
    if data.cols() == 0 {
        return Err(Error::invalid("data must have at least one column"));
    }
    if !data.all_finite() {
        return Err(Error::invalid("data contains non-finite values"));
    }
    match k {
        KSelection::Fixed(k) => {
            if k == 0 {
                return Err(Error::invalid("component count must be at least 1"));
            }
            if data.rows() < 2 * k {
                return Err(Error::InsufficientData { needed: 2 * k, got: data.rows() });
            }
            Ok(fit_fixed(data, k, seed, config))
        }
        KSelection::Auto => {
            if data.rows() < 2 {
                return Err(Error::InsufficientData { needed: 2, got: data.rows() });
            }
            let max_k = MAX_AUTO_K.min(data.rows() / 2);
            let mut best: Option<GmmFit> = None;
            for k in 1..=max_k {
                let fit = fit_fixed(data, k, seed, config);
                if best.as_ref().is_none_or(|b| fit.bic < b.bic) {
                    best = Some(fit);
                }
            }
            Ok(best.expect("max_k >= 1"))
        }
    }
}

fn fit_fixed(data: &Matrix, k: usize, seed: u64, config: &GmmConfig) -> GmmFit {
    let standardizer = Standardizer::fit(data);
    let z = standardizer.apply_matrix(data);
    let (n, d) = (z.rows(), z.cols());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans_pp_seeds(&z, k, &mut rng);

    // Start every component at the pooled per-dimension variance.
    let mut pooled = vec![0.0; d];
    for row in z.iter_rows() {
        for (p, x) in pooled.iter_mut().zip(row) {
            *p += x * x;
        }
    }
    let mut variances = Matrix::zeros(k, d);
    for c in 0..k {
        for (j, p) in pooled.iter().enumerate() {
            variances.set(c, j, (p / n as f64).max(config.variance_floor));
        }
    }
    let mut means = Matrix::zeros(k, d);
    for (c, &idx) in centers.iter().enumerate() {
        means.row_mut(c).copy_from_slice(z.row(idx));
    }

    let mut model = GmmModel {
        k,
        weights: vec![1.0 / k as f64; k],
        means,
        variances,
        feature_names: (0..d).map(|j| format!("x{j}")).collect(),
        threshold: None,
        standardizer,
    };

    let mut resp = Matrix::zeros(n, k);
    let mut ll = e_step(&model, &z, &mut resp);
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iter {
        m_step(&mut model, &z, &resp, config.variance_floor);
        iterations += 1;
        let next = e_step(&model, &z, &mut resp);
        trace.push(next);
        let rel = libm::fabs(next - ll) / libm::fabs(ll).max(f64::MIN_POSITIVE);
        ll = next;
        if rel < config.tol {
            converged = true;
            break;
        }
    }

    let params = (k - 1) + 2 * k * d;
    let bic = -2.0 * ll + params as f64 * libm::log(n as f64);
    GmmFit { model, log_likelihoods: trace, iterations, converged, bic }
}

/// Fills `resp` with posterior responsibilities and returns the total log-likelihood.
fn e_step(model: &GmmModel, z: &Matrix, resp: &mut Matrix) -> f64 {
    let log_norms = model.log_norms();
    let mut terms = vec![0.0; model.k];
    let mut total = 0.0;
    for i in 0..z.rows() {
        model.joint_log_densities(z.row(i), &log_norms, &mut terms);
        let lse = log_sum_exp(&terms);
        total += lse;
        for (r, t) in resp.row_mut(i).iter_mut().zip(&terms) {
            *r = libm::exp(t - lse);
        }
    }
    total
}

fn m_step(model: &mut GmmModel, z: &Matrix, resp: &Matrix, floor: f64) {
    let (n, d) = (z.rows(), z.cols());
    for c in 0..model.k {
        let nk: f64 = (0..n).map(|i| resp.get(i, c)).sum();
        model.weights[c] = nk / n as f64;
        if nk <= f64::MIN_POSITIVE {
            // empty component keeps its shape; weight zero removes it from the density
            continue;
        }
        let mut mu = vec![0.0; d];
        for i in 0..n {
            let r = resp.get(i, c);
            for (m, x) in mu.iter_mut().zip(z.row(i)) {
                *m += r * x;
            }
        }
        mu.iter_mut().for_each(|m| *m /= nk);
        let mut var = vec![0.0; d];
        for i in 0..n {
            let r = resp.get(i, c);
            for ((v, x), m) in var.iter_mut().zip(z.row(i)).zip(&mu) {
                *v += r * (x - m) * (x - m);
            }
        }
        model.means.row_mut(c).copy_from_slice(&mu);
        for (j, v) in var.into_iter().enumerate() {
            model.variances.set(c, j, (v / nk).max(floor));
        }
    }
    let total: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|w| *w /= total);
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// k-means++ seeding: first center uniform, then proportional to squared distance
/// from the nearest chosen center. Falls back to uniform picks when every point
/// already coincides with a center.
fn kmeans_pp_seeds(z: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = z.rows();
    let pick_uniform = |rng: &mut ChaCha8Rng| ((uniform(rng) * n as f64) as usize).min(n - 1);
    let mut centers = vec![pick_uniform(rng)];
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut dist: Vec<f64> = (0..n).map(|i| sq(z.row(i), z.row(centers[0]))).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = uniform(rng) * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in dist.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            pick_uniform(rng)
        };
        centers.push(next);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq(z.row(i), z.row(next)));
        }
    }
    centers
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_rows_hit_floor_quickly() {
        let data = Matrix::from_rows(&vec![[2.0, -1.0, 7.5]; 10]).unwrap();
        let fit = fit_gmm(&data, KSelection::Fixed(2), 3).unwrap();
        assert!(fit.iterations <= 2, "{}", fit.iterations);
        assert!(fit.converged);
        for v in fit.model.variances.as_slice() {
            assert_eq!(*v, VARIANCE_FLOOR);
        }
        assert!(fit.model.nll(&[2.0, -1.0, 7.5]).unwrap().is_finite());
        assert!(fit.log_likelihoods.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn at_mean_matches_closed_form() {
        let data = Matrix::from_rows(&[[0.0, 10.0], [1.0, 14.0], [2.0, 11.0], [5.0, 9.0]]).unwrap();
        let m = fit_gmm(&data, KSelection::Fixed(1), 0).unwrap().model;
        let mu = m.original_means();
        let expected = 0.5 * 2.0 * libm::log(2.0 * PI)
            + 0.5 * m.variances.row(0).iter().map(|v| libm::log(*v)).sum::<f64>();
        let got = m.nll(mu.row(0)).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn rejects_small_or_bad_data() {
        let data = Matrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        assert_eq!(
            fit_gmm(&data, KSelection::Fixed(2), 0).unwrap_err(),
            Error::InsufficientData { needed: 4, got: 3 }
        );
        let bad = Matrix::from_rows(&[[0.0], [f64::NAN], [2.0], [3.0]]).unwrap();
        assert!(matches!(fit_gmm(&bad, KSelection::Fixed(1), 0), Err(Error::InvalidInput(_))));
        let m = fit_gmm(&data, KSelection::Fixed(1), 0).unwrap().model;
        assert!(m.nll(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn nll_increases_along_ray() {
        let data = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.5], [0.2, 2.0], [3.0, 1.0], [-1.0, -2.0], [2.0, 2.0]]).unwrap();
        let m = fit_gmm(&data, KSelection::Fixed(2), 9).unwrap().model;
        let mut prev = f64::NEG_INFINITY;
        for step in 0..60 {
            let t = 5.0 + step as f64;
            let s = m.nll(&[t, 1.3 * t]).unwrap();
            assert!(s > prev);
            prev = s;
        }
    }

    #[test]
    fn nll_survives_far_points() {
        let data = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let m = fit_gmm(&data, KSelection::Fixed(2), 1).unwrap().model;
        let s = m.nll(&[150.0]).unwrap();
        assert!(s.is_finite() && s > 1e3);
    }

    #[test]
    fn deterministic_given_seed() {
        let rows: Vec<[f64; 2]> = (0..40).map(|i| [(i * 37 % 11) as f64, (i * 13 % 7) as f64]).collect();
        let data = Matrix::from_rows(&rows).unwrap();
        let a = fit_gmm(&data, KSelection::Auto, 42).unwrap();
        let b = fit_gmm(&data, KSelection::Auto, 42).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log_likelihoods, b.log_likelihoods);
    }
}
