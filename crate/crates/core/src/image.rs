use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Milliseconds since the Unix epoch, UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub const fn from_millis(ms: i64) -> Self {
        Timestamp(ms)
    }

    pub const fn as_millis(self) -> i64 {
        self.0
    }
}

/// A single-channel image in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pixels: Vec<f64>,
    height: usize,
    width: usize,
    pub sample_id: String,
    pub captured_at: Timestamp,
}

impl ImageSample {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        let expected = height
            .checked_mul(width)
            .ok_or_else(|| Error::invalid("image dimensions overflow"))?;
        if pixels.len() != expected {
            return Err(Error::invalid(format!(
                "pixel count {} does not match {}x{}",
                pixels.len(),
                height,
                width
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("non-finite pixel at index {i}")));
        }
        Ok(ImageSample {
            pixels,
            height,
            width,
            sample_id: String::new(),
            captured_at: Timestamp::default(),
        })
    }

    /// Builds a grayscale sample from interleaved `height × width × channels` data by
    /// averaging the channels of each pixel.
    pub fn from_channels(height: usize, width: usize, channels: usize, data: &[f64]) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid("channel count must be positive"));
        }
        let pixels_len = height
            .checked_mul(width)
            .ok_or_else(|| Error::invalid("image dimensions overflow"))?;
        if Some(data.len()) != pixels_len.checked_mul(channels) {
            return Err(Error::invalid(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        let pixels = data
            .chunks_exact(channels)
            .map(|px| px.iter().sum::<f64>() / channels as f64)
            .collect();
        Self::new(height, width, pixels)
    }

    pub fn with_id(mut self, sample_id: impl Into<String>) -> Self {
        self.sample_id = sample_id.into();
        self
    }

    pub fn with_timestamp(mut self, ts: Timestamp) -> Self {
        self.captured_at = ts;
        self
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn mean_intensity(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Same metadata and shape, different pixels. Used by perturbation.
    pub(crate) fn with_pixels(&self, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), self.pixels.len());
        ImageSample {
            pixels,
            height: self.height,
            width: self.width,
            sample_id: self.sample_id.clone(),
            captured_at: self.captured_at,
        }
    }
}
