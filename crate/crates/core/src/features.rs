//! First-order intensity statistics.
//!
//! Sixteen histogram/order statistics of a single-channel image. None of them
//! depend on pixel positions.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageSample;
use crate::stats::{quantile_sorted, sorted};

pub const FEATURE_COUNT: usize = 16;

/// Canonical feature order. These strings are part of the wire format.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "min",
    "max",
    "range",
    "mean",
    "median",
    "p10",
    "p90",
    "iqr",
    "variance",
    "std",
    "skewness",
    "kurtosis",
    "energy",
    "rms",
    "entropy",
    "uniformity",
];

/// Number of equal-width histogram bins spanning `[min, max]` for entropy and uniformity.
pub const HISTOGRAM_BINS: usize = 256;

/// Position of a canonical feature name, if it is one.
pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

/// The 16 first-order features of one image, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WireFeatureVector", into = "WireFeatureVector")]
pub struct FeatureVector {
    values: [f64; FEATURE_COUNT],
}

impl FeatureVector {
    pub fn from_values(values: [f64; FEATURE_COUNT]) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("feature {} is not finite", FEATURE_NAMES[i])));
        }
        Ok(FeatureVector { values })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; FEATURE_COUNT] = values.try_into().map_err(|_| {
            Error::invalid(format!("expected {FEATURE_COUNT} features, got {}", values.len()))
        })?;
        Self::from_values(arr)
    }

    pub fn names(&self) -> &'static [&'static str; FEATURE_COUNT] {
        &FEATURE_NAMES
    }

    pub fn values(&self) -> &[f64; FEATURE_COUNT] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.values[i])
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }
    pub fn max(&self) -> f64 {
        self.values[1]
    }
    pub fn range(&self) -> f64 {
        self.values[2]
    }
    pub fn mean(&self) -> f64 {
        self.values[3]
    }
    pub fn median(&self) -> f64 {
        self.values[4]
    }
    pub fn p10(&self) -> f64 {
        self.values[5]
    }
    pub fn p90(&self) -> f64 {
        self.values[6]
    }
    pub fn iqr(&self) -> f64 {
        self.values[7]
    }
    pub fn variance(&self) -> f64 {
        self.values[8]
    }
    pub fn std(&self) -> f64 {
        self.values[9]
    }
    pub fn skewness(&self) -> f64 {
        self.values[10]
    }
    pub fn kurtosis(&self) -> f64 {
        self.values[11]
    }
    pub fn energy(&self) -> f64 {
        self.values[12]
    }
    pub fn rms(&self) -> f64 {
        self.values[13]
    }
    pub fn entropy(&self) -> f64 {
        self.values[14]
    }
    pub fn uniformity(&self) -> f64 {
        self.values[15]
    }
}

#[derive(Serialize, Deserialize)]
struct WireFeatureVector {
    names: Vec<String>,
    values: Vec<f64>,
}

impl TryFrom<WireFeatureVector> for FeatureVector {
    type Error = Error;

    fn try_from(wire: WireFeatureVector) -> Result<Self> {
        if wire.names.len() != FEATURE_COUNT
            || wire.names.iter().zip(FEATURE_NAMES).any(|(a, b)| a != b)
        {
            return Err(Error::invalid("feature names are not in canonical order"));
        }
        FeatureVector::from_slice(&wire.values)
    }
}

impl From<FeatureVector> for WireFeatureVector {
    fn from(fv: FeatureVector) -> Self {
        WireFeatureVector {
            names: FEATURE_NAMES.iter().map(|s| String::from(*s)).collect(),
            values: fv.values.to_vec(),
        }
    }
}

/// Computes the canonical feature vector of one image.
///
/// Degenerate (constant) images report zero spread, zero skewness and excess
/// kurtosis, zero entropy and uniformity 1.
pub fn extract_first_order(image: &ImageSample) -> Result<FeatureVector> {
    let px = image.pixels();
    if px.is_empty() {
        return Err(Error::invalid("empty image"));
    }
    if let Some(i) = px.iter().position(|p| !p.is_finite()) {
        return Err(Error::invalid(format!("non-finite pixel at index {i}")));
    }

    let n = px.len() as f64;
    let s = sorted(px);
    let min = s[0];
    let max = s[s.len() - 1];
    let range = max - min;
    let median = quantile_sorted(&s, 0.5);
    let p10 = quantile_sorted(&s, 0.10);
    let p90 = quantile_sorted(&s, 0.90);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    let energy: f64 = px.iter().map(|x| x * x).sum();
    let rms = libm::sqrt(energy / n);

    let (mean, variance, skewness, kurtosis, entropy, uniformity) = if range == 0.0 {
        (min, 0.0, 0.0, 0.0, 0.0, 1.0)
    } else {
        let mean = px.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &x in px {
            let d = x - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
        let std = libm::sqrt(m2);
        let (skew, kurt) = if std == 0.0 {
            (0.0, 0.0)
        } else {
            (m3 / (m2 * std), m4 / (m2 * m2) - 3.0)
        };

        let mut hist = [0u32; HISTOGRAM_BINS];
        for &x in px {
            let b = libm::floor((x - min) / range * HISTOGRAM_BINS as f64) as usize;
            hist[b.min(HISTOGRAM_BINS - 1)] += 1;
        }
        let (mut ent, mut uni) = (0.0, 0.0);
        for &c in hist.iter().filter(|&&c| c > 0) {
            let p = c as f64 / n;
            ent -= p * libm::log(p);
            uni += p * p;
        }
        (mean, m2, skew, kurt, ent, uni)
    };

    FeatureVector::from_values([
        min,
        max,
        range,
        mean,
        median,
        p10,
        p90,
        iqr,
        variance,
        libm::sqrt(variance),
        skewness,
        kurtosis,
        energy,
        rms,
        entropy,
        uniformity,
    ])
}

pub fn extract_batch(images: &[ImageSample]) -> Result<Vec<FeatureVector>> {
    images
        .iter()
        .enumerate()
        .map(|(index, img)| {
            extract_first_order(img).map_err(|e| Error::InBatch {
                index,
                source: alloc::boxed::Box::new(e),
            })
        })
        .collect()
}
