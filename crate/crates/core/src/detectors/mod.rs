//! Reference-distribution outlier detectors.
//!
//! Both detectors standardize their input with statistics captured at fit time,
//! produce a scalar score where larger means "less typical", and flag a sample
//! when its score is strictly above a calibrated threshold.

mod gmm;
mod pca;
mod standardize;
mod threshold;

use alloc::format;

use serde::{Deserialize, Serialize};

pub use gmm::{fit_gmm, fit_gmm_with, GmmConfig, GmmFit, GmmModel, KSelection, VARIANCE_FLOOR};
pub use pca::{fit_pca, PcaModel, RankPolicy, DEFAULT_VARIANCE_FRACTION};
pub use standardize::{Standardizer, STD_FLOOR};
pub use threshold::{calibrate_threshold, DEFAULT_QUANTILE, MIN_CALIBRATION_SCORES};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Gmm,
    Pca,
}

impl DetectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Gmm => "gmm",
            DetectorKind::Pca => "pca",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierVerdict {
    pub score: f64,
    pub threshold: f64,
    pub is_outlier: bool,
    pub detector_kind: DetectorKind,
}

impl OutlierVerdict {
    /// A sample sitting exactly on the threshold is an inlier.
    pub fn new(score: f64, threshold: f64, detector_kind: DetectorKind) -> Self {
        OutlierVerdict { score, threshold, is_outlier: score > threshold, detector_kind }
    }
}

/// A fitted detector of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Detector {
    Gmm(GmmModel),
    Pca(PcaModel),
}

impl Detector {
    pub fn kind(&self) -> DetectorKind {
        match self {
            Detector::Gmm(_) => DetectorKind::Gmm,
            Detector::Pca(_) => DetectorKind::Pca,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Detector::Gmm(m) => m.dim(),
            Detector::Pca(m) => m.dim(),
        }
    }

    pub fn threshold(&self) -> Option<f64> {
        match self {
            Detector::Gmm(m) => m.threshold,
            Detector::Pca(m) => m.threshold,
        }
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        match self {
            Detector::Gmm(m) => m.nll(x),
            Detector::Pca(m) => m.loss(x),
        }
    }
}

impl From<GmmModel> for Detector {
    fn from(m: GmmModel) -> Self {
        Detector::Gmm(m)
    }
}

impl From<PcaModel> for Detector {
    fn from(m: PcaModel) -> Self {
        Detector::Pca(m)
    }
}

pub fn detect(model: &Detector, x: &[f64]) -> Result<OutlierVerdict> {
    let threshold = model.threshold().ok_or(Error::NotCalibrated)?;
    let score = model.score(x)?;
    Ok(OutlierVerdict::new(score, threshold, model.kind()))
}

pub(crate) fn check_input(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::invalid(format!("expected {dim} values, got {}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("input contains non-finite values"));
    }
    Ok(())
}
