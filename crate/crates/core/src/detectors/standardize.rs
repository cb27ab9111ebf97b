use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

/// Standard deviations below this are treated as a constant dimension with scale 1.
pub const STD_FLOOR: f64 = 1e-12;

/// Per-dimension centering and scaling captured at fit time and reused for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation of each column.
    pub fn fit(data: &Matrix) -> Self {
        let n = data.rows() as f64;
        let d = data.cols();
        let mut mean = alloc::vec![0.0; d];
        for row in data.iter_rows() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = alloc::vec![0.0; d];
        for row in data.iter_rows() {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = libm::sqrt(v / n);
                if s < STD_FLOOR {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((z, m), s)| z * s + m)
            .collect()
    }

    pub fn apply_matrix(&self, data: &Matrix) -> Matrix {
        let mut out = data.clone();
        for i in 0..out.rows() {
            let z = self.apply(data.row(i));
            out.row_mut(i).copy_from_slice(&z);
        }
        out
    }
}
