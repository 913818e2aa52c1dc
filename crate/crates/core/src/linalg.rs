//! Small dense matrix helpers: operator norm and the matrix exponential.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Spectral norm ‖A‖ (largest singular value).
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if a.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    a.clone().singular_values().max()
}

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371_920_351_148_152;

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// e^{tA} by scaling and squaring with a degree-13 Padé approximant.
pub fn matrix_exp(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return invalid(format!("matrix_exp needs a square matrix, got {}x{}", a.nrows(), a.ncols()));
    }
    if a.iter().any(|v| !v.is_finite()) || !t.is_finite() {
        return invalid("matrix_exp: non-finite entries");
    }
    let n = a.nrows();
    let ta = a * t;
    let norm = one_norm(&ta);
    if norm == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    if norm > 700.0 * n as f64 {
        return Err(Error::MatrixOverflow(norm));
    }
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let scaled = ta / 2f64.powi(s);
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let b = &PADE13;
    let u_inner = &a6 * (b[13] * &a6 + b[11] * &a4 + b[9] * &a2) + b[7] * &a6 + b[5] * &a4 + b[3] * &a2 + b[1] * &ident;
    let u = &scaled * u_inner;
    let v = &a6 * (b[12] * &a6 + b[10] * &a4 + b[8] * &a2) + b[6] * &a6 + b[4] * &a4 + b[2] * &a2 + b[0] * &ident;
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::InvalidParameter("matrix_exp: singular Padé denominator".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::MatrixOverflow(norm));
    }
    Ok(r)
}

/// Euclidean norm of a slice.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn mat_vec(a: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let out = a * DVector::from_column_slice(v);
    out.iter().copied().collect()
}
