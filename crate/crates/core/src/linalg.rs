//! Dense row-major kernels for small symmetric and triangular matrices.
//!
//! Square matrices are `d * d` slices in row-major order. Lower-triangular
//! factors keep zeros above the diagonal.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{ln, sqrt};

/// Lower Cholesky factor `L` with `L Lᵀ = a`. Only the lower triangle of `a`
/// is read.
pub fn cholesky(a: &[f64], d: usize) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), d * d);
    let mut l = alloc::vec![0.0; d * d];
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= l[j * d + k] * l[j * d + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: diag,
            });
        }
        let ljj = sqrt(diag);
        l[j * d + j] = ljj;
        for i in (j + 1)..d {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = s / ljj;
        }
    }
    Ok(l)
}

/// `2 Σ ln L_jj`.
pub fn log_det_from_cholesky(l: &[f64], d: usize) -> f64 {
    2.0 * (0..d).map(|j| ln(l[j * d + j])).sum::<f64>()
}

/// Solves `L y = b` in place.
pub fn solve_lower_in_place(l: &[f64], d: usize, b: &mut [f64]) {
    for i in 0..d {
        let row = &l[i * d..i * d + i];
        let s: f64 = row.iter().zip(&b[..i]).map(|(a, x)| a * x).sum();
        b[i] = (b[i] - s) / l[i * d + i];
    }
}

/// Solves `Lᵀ x = b` in place.
pub fn solve_lower_transpose_in_place(l: &[f64], d: usize, b: &mut [f64]) {
    for i in (0..d).rev() {
        let mut s = b[i];
        for k in (i + 1)..d {
            s -= l[k * d + i] * b[k];
        }
        b[i] = s / l[i * d + i];
    }
}

/// Inverse of a lower-triangular matrix (also lower-triangular).
pub fn lower_inverse(l: &[f64], d: usize) -> Vec<f64> {
    let mut inv = alloc::vec![0.0; d * d];
    let mut col = alloc::vec![0.0; d];
    for j in 0..d {
        col.iter_mut().for_each(|c| *c = 0.0);
        col[j] = 1.0;
        // Entries above j stay zero, so start the substitution at j.
        for i in j..d {
            let mut s = col[i];
            for k in j..i {
                s -= l[i * d + k] * col[k];
            }
            col[i] = s / l[i * d + i];
        }
        for i in j..d {
            inv[i * d + j] = col[i];
        }
    }
    inv
}

/// `L Lᵀ`.
pub fn lower_gram(l: &[f64], d: usize) -> Vec<f64> {
    let mut out = alloc::vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let m = j.min(i);
            let s: f64 = (0..=m).map(|k| l[i * d + k] * l[j * d + k]).sum();
            out[i * d + j] = s;
            out[j * d + i] = s;
        }
    }
    out
}

/// Squared Frobenius norm, i.e. `tr(A Aᵀ)`.
pub fn frobenius_sq(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// `(a + aᵀ) / 2` and the largest absolute asymmetry seen.
pub fn symmetrize(a: &[f64], d: usize) -> (Vec<f64>, f64) {
    let mut out = alloc::vec![0.0; d * d];
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let x = a[i * d + j];
            let y = a[j * d + i];
            worst = worst.max((x - y).abs());
            out[i * d + j] = 0.5 * (x + y);
        }
    }
    (out, worst)
}

/// Whitened scatter `L⁻¹ S L⁻ᵀ` given `m = L⁻¹` (lower) and symmetric `s`.
pub fn congruence_lower(m: &[f64], s: &[f64], d: usize) -> Vec<f64> {
    // t = m s
    let mut t = alloc::vec![0.0; d * d];
    for i in 0..d {
        for k in 0..=i {
            let mik = m[i * d + k];
            if mik == 0.0 {
                continue;
            }
            let srow = &s[k * d..(k + 1) * d];
            let trow = &mut t[i * d..(i + 1) * d];
            for (tv, sv) in trow.iter_mut().zip(srow) {
                *tv += mik * sv;
            }
        }
    }
    // out = t mᵀ, symmetric
    let mut out = alloc::vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..=j).map(|k| t[i * d + k] * m[j * d + k]).sum();
            out[i * d + j] = s;
            out[j * d + i] = s;
        }
    }
    out
}
