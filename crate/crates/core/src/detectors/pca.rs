//! PCA reconstruction-loss detector.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use super::threshold::calibrate_threshold;
use crate::error::{Error, Result};
use crate::linalg::{dot, symmetric_eigen, Matrix};

pub const DEFAULT_VARIANCE_FRACTION: f64 = 0.90;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankPolicy {
    Explicit(usize),
    /// Smallest rank whose cumulative explained variance reaches the fraction.
    VarianceFraction(f64),
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy::VarianceFraction(DEFAULT_VARIANCE_FRACTION)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub scales: Vec<f64>,
    /// `r × d`, orthonormal rows in standardized space.
    pub components: Matrix,
    pub r: usize,
    pub explained_variance_ratio: Vec<f64>,
    pub feature_names: Vec<String>,
    pub threshold: Option<f64>,
}

pub fn fit_pca(data: &Matrix, policy: RankPolicy) -> Result<PcaModel> {
    let (n, d) = (data.rows(), data.cols());
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if d == 0 {
        return Err(Error::invalid("data must have at least one column"));
    }
    if !data.all_finite() {
        return Err(Error::invalid("data contains non-finite values"));
    }
    let max_rank = n.min(d);
    if let RankPolicy::Explicit(r) = policy {
        if r == 0 || r > max_rank {
            return Err(Error::InvalidRank { rank: r, max: max_rank });
        }
    }
    if let RankPolicy::VarianceFraction(tau) = policy {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::invalid(format!("variance fraction {tau} outside (0, 1]")));
        }
    }

    let standardizer = Standardizer::fit(data);
    let z = standardizer.apply_matrix(data);
    let mut cov = Matrix::zeros(d, d);
    for row in z.iter_rows() {
        for a in 0..d {
            let za = row[a];
            if za == 0.0 {
                continue;
            }
            for (b, zb) in row.iter().enumerate().skip(a) {
                cov.set(a, b, cov.get(a, b) + za * zb);
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov.get(a, b) / denom;
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }

    let (eigvals, eigvecs) = symmetric_eigen(&cov);
    let eigvals: Vec<f64> = eigvals.into_iter().map(|v| v.max(0.0)).collect();
    let total: f64 = eigvals.iter().sum();
    let ratios: Vec<f64> = if total > 0.0 {
        eigvals.iter().map(|v| (v / total).min(1.0)).collect()
    } else {
        vec![0.0; d]
    };

    let r = match policy {
        RankPolicy::Explicit(r) => r,
        RankPolicy::VarianceFraction(tau) => {
            let mut cum = 0.0;
            let mut r = max_rank;
            for (i, ratio) in ratios.iter().take(max_rank).enumerate() {
                cum += ratio;
                if cum >= tau - 1e-12 {
                    r = i + 1;
                    break;
                }
            }
            if total == 0.0 {
                1
            } else {
                r
            }
        }
    };

    let mut components = Matrix::zeros(r, d);
    for c in 0..r {
        let row = components.row_mut(c);
        row.copy_from_slice(eigvecs.row(c));
        let (mut pivot, mut best) = (0, 0.0);
        for (j, v) in row.iter().enumerate() {
            if libm::fabs(*v) > best {
                best = libm::fabs(*v);
                pivot = j;
            }
        }
        if row[pivot] < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
    }

    Ok(PcaModel {
        mean: standardizer.mean,
        scales: standardizer.scale,
        components,
        r,
        explained_variance_ratio: ratios[..r].to_vec(),
        feature_names: (0..d).map(|j| format!("x{j}")).collect(),
        threshold: None,
    })
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
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

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scales)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    /// `Cᵀ C z`
    fn project(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        for row in self.components.iter_rows().take(self.r) {
            let coef = dot(row, z);
            for (o, c) in out.iter_mut().zip(row) {
                *o += coef * c;
            }
        }
        out
    }

    /// Mean squared residual of the standardized input after projecting onto the
    /// retained components.
    pub fn loss(&self, x: &[f64]) -> Result<f64> {
        super::check_input(x, self.dim())?;
        let z = self.standardize(x);
        let p = self.project(&z);
        let sq: f64 = z.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(sq / self.dim() as f64)
    }

    /// Projection of `x` onto the component span, mapped back to input units.
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        super::check_input(x, self.dim())?;
        let p = self.project(&self.standardize(x));
        Ok(p.iter()
            .zip(&self.mean)
            .zip(&self.scales)
            .map(|((p, m), s)| p * s + m)
            .collect())
    }

    pub fn calibrate(&mut self, reference: &Matrix, quantile: f64) -> Result<f64> {
        let scores = reference
            .iter_rows()
            .map(|r| self.loss(r))
            .collect::<Result<Vec<_>>>()?;
        let t = calibrate_threshold(&scores, quantile)?;
        self.threshold = Some(t);
        Ok(t)
    }
}
