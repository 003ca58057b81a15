//! Dense helpers on row-major `d × d` matrices stored in flat slices.

use crate::error::{Error, Result};

/// Largest `|a_ij − a_ji|` and where it occurs.
pub fn symmetry_defect(a: &[f64], d: usize) -> (f64, usize, usize) {
    let mut worst = (0.0, 0, 0);
    for i in 0..d {
        for j in (i + 1)..d {
            let defect = (a[i * d + j] - a[j * d + i]).abs();
            if defect > worst.0 {
                worst = (defect, i, j);
            }
        }
    }
    worst
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `yᵀ a y`.
pub fn quadratic_form(a: &[f64], y: &[f64]) -> f64 {
    let d = y.len();
    let mut acc = 0.0;
    for i in 0..d {
        let mut row = 0.0;
        for j in 0..d {
            row += a[i * d + j] * y[j];
        }
        acc += y[i] * row;
    }
    acc
}

/// `out = m v`.
pub fn mat_vec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let d = v.len();
    for i in 0..d {
        let mut acc = 0.0;
        for j in 0..d {
            acc += m[i * d + j] * v[j];
        }
        out[i] = acc;
    }
}

/// `σ σᵀ` for a lower-triangular `σ`.
pub fn lower_gram(sigma: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..=i.min(j) {
                acc += sigma[i * d + k] * sigma[j * d + k];
            }
            out[i * d + j] = acc;
        }
    }
    out
}

/// Cholesky factorisation `a = σ σᵀ` with `σ` lower-triangular and a
/// strictly positive diagonal.
pub fn cholesky(a: &[f64], d: usize) -> Result<Vec<f64>> {
    if a.len() != d * d {
        return Err(Error::Dimension {
            expected: d * d,
            found: a.len(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= l[j * d + k] * l[j * d + k];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: diag,
            });
        }
        let ljj = diag.sqrt();
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

/// Cholesky variant for positive semi-definite input: pivots below
/// `tol · max|a|` are treated as zero and their column is dropped. Used by
/// the simulator, which must accept degenerate diffusions such as `a ≡ 0`.
pub fn cholesky_psd(a: &[f64], d: usize, out: &mut [f64]) -> Result<()> {
    let tol = 1e-14 * max_abs(a).max(f64::MIN_POSITIVE);
    out.iter_mut().for_each(|v| *v = 0.0);
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= out[j * d + k] * out[j * d + k];
        }
        if !diag.is_finite() {
            return Err(Error::Input("diffusion matrix has non-finite entries".into()));
        }
        if diag <= tol {
            if diag < -1e-9 * max_abs(a).max(1.0) {
                return Err(Error::NotPositiveDefinite {
                    pivot: j,
                    value: diag,
                });
            }
            continue;
        }
        let ljj = diag.sqrt();
        out[j * d + j] = ljj;
        for i in (j + 1)..d {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= out[i * d + k] * out[j * d + k];
            }
            out[i * d + j] = s / ljj;
        }
    }
    Ok(())
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
