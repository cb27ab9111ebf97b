//! Numerical core of the obz monitoring stack.
//!
//! Everything here is pure computation over slices and owned buffers: first-order
//! image features, the GMM and PCA reference detectors, perturbation-curve and
//! compactness metrics for attribution maps, and the OBZT tensor codec. The crate
//! is `no_std` and only needs `alloc`, so it can be embedded next to a model
//! runtime without pulling in IO.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod detectors;
pub mod error;
pub mod features;
pub mod image;
pub mod linalg;
pub mod stats;
pub mod tensor;
pub mod xai_eval;

pub use detectors::{
    calibrate_threshold, detect, fit_gmm, fit_pca, Detector, DetectorKind, GmmConfig, GmmFit,
    GmmModel, KSelection, OutlierVerdict, PcaModel, RankPolicy, Standardizer,
};
pub use error::{Error, Result};
pub use features::{extract_batch, extract_first_order, FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
pub use image::{ImageSample, Timestamp};
pub use linalg::Matrix;
pub use tensor::{decode_tensor, encode_tensor, Tensor};
pub use xai_eval::{
    compactness, fidelity_score, perturbation_curve, AttributionMap, CurveMode, ModelOracle,
    PerturbationCurve, TargetClass,
};
