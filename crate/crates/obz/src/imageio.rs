//! Image inputs: PGM files and OBZT tensors, reduced to one intensity per pixel.

use std::path::Path;

use obz_core::{decode_tensor, encode_tensor, ImageSample, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error(transparent)]
    Pgm(#[from] crate::pgm::PgmError),
    #[error(transparent)]
    Tensor(#[from] obz_core::Error),
    #[error("unsupported image extension {0:?} (expected .pgm or .obzt)")]
    Extension(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `[h, w]` as-is, `[h, w, c]` averaged over channels.
pub fn image_from_tensor(t: &Tensor) -> obz_core::Result<ImageSample> {
    let values: Vec<f64> = t.values.iter().map(|&v| v as f64).collect();
    match t.dims[..] {
        [h, w] => ImageSample::new(h as usize, w as usize, values),
        [h, w, c] => ImageSample::from_channels(h as usize, w as usize, c as usize, &values),
        _ => Err(obz_core::Error::InvalidInput(format!(
            "image must be 2-D or 3-D, got {} dims",
            t.dims.len()
        ))),
    }
}

/// A loaded image plus the OBZT bytes that carry it over the wire.
pub struct LoadedImage {
    pub sample: ImageSample,
    pub obzt: Vec<u8>,
}

pub fn load(path: &Path) -> Result<LoadedImage, ImageError> {
    let bytes = std::fs::read(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "pgm" => {
            let img = crate::pgm::decode(&bytes)?;
            // PGM samples are integers below 2^16, so the f32 payload is exact
            let values: Vec<f32> = img.pixels().iter().map(|&v| v as f32).collect();
            let obzt = encode_tensor(&[img.height() as u32, img.width() as u32], &values)?;
            let sample = image_from_tensor(&decode_tensor(&obzt)?)?;
            Ok(LoadedImage { sample, obzt })
        }
        "obzt" => {
            let sample = image_from_tensor(&decode_tensor(&bytes)?)?;
            Ok(LoadedImage { sample, obzt: bytes })
        }
        _ => Err(ImageError::Extension(ext)),
    }
}
