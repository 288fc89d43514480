//! Thin helpers over `faer` for the Hermitian/PSD algebra used everywhere.

use faer::{Mat, MatRef, Side};

use crate::{Error, Result, C64};

pub type CMat = Mat<C64>;

/// Relative tolerance below which negative eigenvalues count as roundoff.
pub const PSD_TOL: f64 = 1e-10;

/// Keeps faer kernels single-threaded. Their blocking follows the rayon pool
/// size, so results would otherwise change in the last bits with `--jobs`.
pub fn pin_sequential_kernels() {
    faer::set_global_parallelism(faer::Par::Seq);
}

/// `(A + Aᴴ)/2`.
pub fn hermitian_part(a: MatRef<'_, C64>) -> CMat {
    assert_eq!(a.nrows(), a.ncols(), "hermitian part of a non-square matrix");
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

/// Eigenvalues (ascending) of the Hermitian part of `a`.
pub fn eigvalsh(a: MatRef<'_, C64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut vals =
        hermitian_part(a).self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Linalg(format!("{e:?}")))?;
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of the Hermitian part of `a`.
pub fn eigh(a: MatRef<'_, C64>) -> Result<(Vec<f64>, CMat)> {
    if a.nrows() == 0 {
        return Ok((Vec::new(), Mat::zeros(0, 0)));
    }
    let evd = hermitian_part(a).self_adjoint_eigen(Side::Lower).map_err(|e| Error::Linalg(format!("{e:?}")))?;
    let vals: Vec<f64> = evd.S().column_vector().iter().map(|x| x.re).collect();
    let order = argsort(&vals, f64::total_cmp);
    let u = evd.U();
    Ok((order.iter().map(|&i| vals[i]).collect(), Mat::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])])))
}

/// Singular values, nonincreasing.
pub fn singular_values(a: MatRef<'_, C64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    // faer deflates exact zero blocks separately and can return them out of order.
    let mut sv = a.singular_values().map_err(|e| Error::Linalg(format!("{e:?}")))?;
    sv.sort_by(|x, y| y.total_cmp(x));
    Ok(sv)
}

/// Thin SVD `a = U diag(s) Vᴴ`; returns `(U, s)`.
pub fn thin_left_svd(a: MatRef<'_, C64>) -> Result<(CMat, Vec<f64>)> {
    let k = a.nrows().min(a.ncols());
    if k == 0 {
        return Ok((Mat::zeros(a.nrows(), 0), Vec::new()));
    }
    let svd = a.thin_svd().map_err(|e| Error::Linalg(format!("{e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().map(|x| x.re).collect();
    let order = argsort(&s, |x, y| y.total_cmp(x));
    let u = svd.U();
    Ok((Mat::from_fn(u.nrows(), k, |r, c| u[(r, order[c])]), order.iter().map(|&i| s[i]).collect()))
}

fn argsort(v: &[f64], cmp: impl Fn(&f64, &f64) -> std::cmp::Ordering) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| cmp(&v[i], &v[j]));
    idx
}

pub fn frobenius(a: MatRef<'_, C64>) -> f64 {
    a.norm_l2()
}

pub fn trace(a: MatRef<'_, C64>) -> C64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// Largest absolute entry.
pub fn max_abs(a: MatRef<'_, C64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

/// Errors unless the spectrum is nonnegative up to `PSD_TOL` relative to its
/// largest magnitude.
pub fn check_psd_spectrum(vals: &[f64]) -> Result<()> {
    let (min, max) = min_max(vals);
    let scale = max.abs().max(min.abs());
    if min < -PSD_TOL * scale {
        return Err(Error::NotPsd { min, max });
    }
    Ok(())
}

pub fn min_max(vals: &[f64]) -> (f64, f64) {
    vals.iter().fold((0.0f64, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Applies a real function to the spectrum of a Hermitian matrix.
pub fn spectral_map(a: MatRef<'_, C64>, f: impl Fn(f64) -> f64) -> Result<CMat> {
    let (vals, vecs) = eigh(a)?;
    let n = vals.len();
    let scaled = Mat::from_fn(n, n, |i, j| vecs[(i, j)] * f(vals[j]));
    Ok(&scaled * vecs.adjoint())
}

/// PSD square root of a small Hermitian matrix, clamping roundoff negatives.
pub fn psd_sqrt(a: MatRef<'_, C64>) -> Result<CMat> {
    let vals = eigvalsh(a)?;
    check_psd_spectrum(&vals)?;
    spectral_map(a, |x| x.max(0.0).sqrt())
}

/// Clamps roundoff negatives in an already-checked PSD spectrum.
pub fn clamp_nonneg(vals: &[f64]) -> Vec<f64> {
    vals.iter().map(|v| v.max(0.0)).collect()
}
