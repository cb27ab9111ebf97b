//! Quantitative checks for attribution maps.
//!
//! Fidelity replays the model on progressively masked (deletion) or revealed
//! (insertion) images, ordering pixels by attribution, and integrates the
//! resulting score curve. Compactness is the Gini coefficient of the absolute
//! attribution mass.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageSample;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetClass {
    Index(u64),
    Label(String),
}

/// Per-pixel signed importance at input resolution. Positive supports the
/// target class, negative opposes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    height: usize,
    width: usize,
    scores: Vec<f64>,
    pub method: String,
    pub target_class: Option<TargetClass>,
    pub source_sample: String,
}

impl AttributionMap {
    pub fn new(height: usize, width: usize, scores: Vec<f64>, method: impl Into<String>) -> Result<Self> {
        if height == 0 || width == 0 || height.checked_mul(width) != Some(scores.len()) {
            return Err(Error::invalid(format!(
                "attribution has {} scores for {height}x{width}",
                scores.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("attribution scores must be finite"));
        }
        Ok(AttributionMap {
            height,
            width,
            scores,
            method: method.into(),
            target_class: None,
            source_sample: String::new(),
        })
    }

    pub fn with_target(mut self, target: TargetClass) -> Self {
        self.target_class = Some(target);
        self
    }

    pub fn with_source(mut self, sample_id: impl Into<String>) -> Self {
        self.source_sample = sample_id.into();
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Pixel indices by descending attribution; ties go to the lower row-major index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx
    }
}

/// The model under explanation, reduced to "image in, target-class score out".
pub trait ModelOracle {
    fn score(&self, image: &ImageSample, target: Option<&TargetClass>) -> f64;

    /// Whether concurrent calls on one instance are allowed.
    fn is_reentrant(&self) -> bool {
        false
    }
}

impl<F> ModelOracle for F
where
    F: Fn(&ImageSample, Option<&TargetClass>) -> f64,
{
    fn score(&self, image: &ImageSample, target: Option<&TargetClass>) -> f64 {
        self(image, target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveMode {
    Deletion,
    Insertion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCurve {
    pub fractions: Vec<f64>,
    pub scores: Vec<f64>,
    pub mode: CurveMode,
}

impl PerturbationCurve {
    pub fn new(fractions: Vec<f64>, scores: Vec<f64>, mode: CurveMode) -> Result<Self> {
        validate_fractions(&fractions)?;
        if scores.len() != fractions.len() {
            return Err(Error::invalid(format!(
                "{} scores for {} fractions",
                scores.len(),
                fractions.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("curve scores must be finite"));
        }
        Ok(PerturbationCurve { fractions, scores, mode })
    }
}

/// `{0, 0.05, …, 0.5}`
pub fn default_fractions() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 20.0).collect()
}

fn validate_fractions(fractions: &[f64]) -> Result<()> {
    match fractions.first() {
        None => return Err(Error::invalid("fraction grid is empty")),
        Some(&f) if f != 0.0 => return Err(Error::invalid("fraction grid must start at 0")),
        _ => {}
    }
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::invalid("fractions must lie in [0, 1]"));
    }
    if fractions.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("fractions must be nondecreasing"));
    }
    Ok(())
}

/// Queries `oracle` on the image with the top-ranked `⌊f·N⌋` pixels replaced by
/// the image mean (deletion), or on the mean image with those pixels restored
/// (insertion), for every fraction `f`.
pub fn perturbation_curve<O: ModelOracle + ?Sized>(
    image: &ImageSample,
    map: &AttributionMap,
    oracle: &O,
    fractions: &[f64],
    mode: CurveMode,
) -> Result<PerturbationCurve> {
    if map.height != image.height() || map.width != image.width() {
        return Err(Error::invalid(format!(
            "attribution is {}x{} but image is {}x{}",
            map.height,
            map.width,
            image.height(),
            image.width()
        )));
    }
    validate_fractions(fractions)?;

    let n = image.len();
    let baseline = image.mean_intensity();
    let order = map.ranking();
    let original = image.pixels();
    let mut pixels = match mode {
        CurveMode::Deletion => original.to_vec(),
        CurveMode::Insertion => alloc::vec![baseline; n],
    };
    let target = map.target_class.as_ref();

    let mut done = 0;
    let mut scores = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let upto = (libm::floor(f * n as f64) as usize).min(n);
        for &p in &order[done..upto.max(done)] {
            pixels[p] = match mode {
                CurveMode::Deletion => baseline,
                CurveMode::Insertion => original[p],
            };
        }
        done = done.max(upto);
        let s = oracle.score(&image.with_pixels(pixels.clone()), target);
        if !s.is_finite() {
            return Err(Error::OracleError(format!("non-finite score {s} at fraction {f}")));
        }
        scores.push(s);
    }
    Ok(PerturbationCurve { fractions: fractions.to_vec(), scores, mode })
}

/// Trapezoidal area under the curve, divided by the first score when it is not
/// (numerically) zero. Lower is better for deletion, higher for insertion.
pub fn fidelity_score(curve: &PerturbationCurve) -> Result<f64> {
    if curve.fractions.len() < 2 || curve.scores.len() != curve.fractions.len() {
        return Err(Error::invalid("fidelity needs at least two curve points"));
    }
    let area: f64 = curve
        .fractions
        .windows(2)
        .zip(curve.scores.windows(2))
        .map(|(f, s)| (f[1] - f[0]) * (s[0] + s[1]) * 0.5)
        .sum();
    let first = curve.scores[0];
    Ok(if libm::fabs(first) > 1e-12 { area / first } else { area })
}

/// Gini coefficient of `|scores|`, in `[0, 1 - 1/N]`. An all-zero map scores 0.
pub fn compactness(map: &AttributionMap) -> Result<f64> {
    let n = map.scores.len();
    if n < 2 {
        return Err(Error::invalid("compactness needs at least two pixels"));
    }
    let mut a: Vec<f64> = map.scores.iter().map(|s| libm::fabs(*s)).collect();
    a.sort_unstable_by(f64::total_cmp);
    let total: f64 = a.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let weighted: f64 = a.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum();
    let nf = n as f64;
    let g = 2.0 * weighted / (nf * total) - (nf + 1.0) / nf;
    Ok(g.clamp(0.0, 1.0 - 1.0 / nf))
}
