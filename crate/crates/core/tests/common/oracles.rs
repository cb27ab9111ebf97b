//! Straightforward reference implementations used to cross-check the library.
//! Nothing here calls into the code under test.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Brute-force first-order features in canonical order.
pub fn fof_reference(px: &[f64]) -> [f64; 16] {
    let n = px.len() as f64;
    // insertion sort: deliberately not the library's sort
    let mut s: Vec<f64> = Vec::with_capacity(px.len());
    for &x in px {
        let pos = s.iter().position(|&y| y > x).unwrap_or(s.len());
        s.insert(pos, x);
    }
    let pct = |q: f64| {
        let pos = q * (s.len() as f64 - 1.0);
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
    };
    let min = s[0];
    let max = *s.last().unwrap();
    let range = max - min;
    let mut kahan = 0.0f64;
    let mut comp = 0.0f64;
    for &x in px {
        let y = x - comp;
        let t = kahan + y;
        comp = (t - kahan) - y;
        kahan = t;
    }
    let mean = kahan / n;
    let moment = |k: i32| px.iter().map(|x| (x - mean).powi(k)).sum::<f64>() / n;
    let var = if range == 0.0 { 0.0 } else { moment(2) };
    let std = var.sqrt();
    let (skew, kurt) = if range == 0.0 {
        (0.0, 0.0)
    } else {
        (moment(3) / std.powi(3), moment(4) / var.powi(2) - 3.0)
    };
    let energy: f64 = px.iter().map(|x| x.powi(2)).sum();
    let (entropy, uniformity) = if range == 0.0 {
        (0.0, 1.0)
    } else {
        let mut counts = vec![0usize; 256];
        for &x in px {
            let b = (((x - min) * 256.0) / range).floor() as usize;
            counts[b.min(255)] += 1;
        }
        let ps: Vec<f64> = counts.iter().filter(|&&c| c > 0).map(|&c| c as f64 / n).collect();
        (-ps.iter().map(|p| p * p.ln()).sum::<f64>(), ps.iter().map(|p| p * p).sum())
    };
    [
        min,
        max,
        range,
        if range == 0.0 { min } else { mean },
        pct(0.5),
        pct(0.1),
        pct(0.9),
        pct(0.75) - pct(0.25),
        var,
        std,
        skew,
        kurt,
        energy,
        (energy / n).sqrt(),
        entropy,
        uniformity,
    ]
}

/// `-ln Σ w N(z; μ, diag σ²)` by direct density summation (no log-sum-exp).
pub fn naive_mixture_nll(weights: &[f64], means: &[Vec<f64>], vars: &[Vec<f64>], z: &[f64]) -> f64 {
    let mut p = 0.0;
    for k in 0..weights.len() {
        let mut dens = 1.0;
        for j in 0..z.len() {
            let v = vars[k][j];
            dens *= (-(z[j] - means[k][j]).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
        }
        p += weights[k] * dens;
    }
    -p.ln()
}

/// Eigenpairs of the sample covariance of column-standardized data, descending.
pub fn covariance_eigen(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = rows.len();
    let d = rows[0].len();
    let mut z = nalgebra::DMatrix::<f64>::zeros(n, d);
    for j in 0..d {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let m = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        let sd = if sd < 1e-12 { 1.0 } else { sd };
        for i in 0..n {
            z[(i, j)] = (col[i] - m) / sd;
        }
    }
    let cov = z.transpose() * &z / (n as f64 - 1.0);
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..d)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().copied().collect()))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    pairs.into_iter().unzip()
}

/// Analytic deletion curve of `score(x) = Σ wᵢxᵢ` when pixels are masked to `m`
/// in the given order.
pub fn linear_deletion_curve(w: &[f64], x: &[f64], m: f64, order: &[usize], fractions: &[f64]) -> Vec<f64> {
    let full: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
    fractions
        .iter()
        .map(|f| {
            let k = (f * x.len() as f64).floor() as usize;
            full - order[..k].iter().map(|&i| w[i] * x[i] - w[i] * m).sum::<f64>()
        })
        .collect()
}

/// Midpoint-rule integral of the piecewise-linear interpolant, `sub` pieces per segment.
pub fn riemann_area(fr: &[f64], sc: &[f64], sub: usize) -> f64 {
    let mut area = 0.0;
    for i in 0..fr.len() - 1 {
        let h = (fr[i + 1] - fr[i]) / sub as f64;
        for j in 0..sub {
            let t = (j as f64 + 0.5) / sub as f64;
            area += h * (sc[i] + t * (sc[i + 1] - sc[i]));
        }
    }
    area
}

/// Gini coefficient as mean absolute pairwise difference over twice the mean.
pub fn pairwise_gini(scores: &[f64]) -> f64 {
    let a: Vec<f64> = scores.iter().map(|s| s.abs()).collect();
    let n = a.len() as f64;
    let total: f64 = a.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for x in &a {
        for y in &a {
            acc += (x - y).abs();
        }
    }
    acc / (2.0 * n * total)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}
