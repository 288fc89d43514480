//! Spread functions `s(Ω_R, Ω_T)`: finite-rank scatterer sets, a smooth
//! exponential family, Hilbert–Schmidt norms and powers of the
//! Laplace–Beltrami operator applied on the receive side.

use faer::Mat;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::invalid;
use crate::linalg::CMat;
use crate::sphere::{dot, real_sh, sh_count, sh_index, Direction, QuadratureGrid, ShBasis};
use crate::{Error, Result, C64, COMPONENTS};

/// Relative squared HS mass allowed outside the harmonic basis before
/// `apply_lb_power` refuses to act.
pub const BAND_TAIL_TOL: f64 = 1e-8;

/// A band-limited element of `[L²(S²)]⁶`, given by real-harmonic
/// coefficients per component.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    l_max: usize,
    /// `coeffs[i][sh_index(l, m)]`.
    coeffs: Vec<Vec<C64>>,
}

impl Mode {
    pub fn zero(l_max: usize) -> Self {
        Self { l_max, coeffs: vec![vec![C64::new(0.0, 0.0); sh_count(l_max)]; COMPONENTS] }
    }

    pub fn from_coefficients(l_max: usize, coeffs: Vec<Vec<C64>>) -> Result<Self> {
        if coeffs.len() != COMPONENTS || coeffs.iter().any(|c| c.len() != sh_count(l_max)) {
            return Err(invalid(format!("mode needs 6 coefficient vectors of length {}", sh_count(l_max))));
        }
        if coeffs.iter().flatten().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(invalid("mode coefficients must be finite"));
        }
        Ok(Self { l_max, coeffs })
    }

    /// `coefficient · Y_l^m` in a single field component.
    pub fn single(component: usize, l: usize, m: i64, coefficient: C64) -> Self {
        let mut mode = Self::zero(l);
        mode.coeffs[component][sh_index(l, m)] = coefficient;
        mode
    }

    /// Gaussian coefficients in every component up to degree `l_max`.
    pub fn random<R: Rng>(l_max: usize, components: &[usize], rng: &mut R) -> Self {
        let mut mode = Self::zero(l_max);
        for &i in components {
            for c in mode.coeffs[i].iter_mut() {
                *c = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            }
        }
        mode
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn coefficients(&self) -> &[Vec<C64>] {
        &self.coeffs
    }

    /// `L²` norm, exact by orthonormality.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().flatten().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn value(&self, dir: &Direction) -> [C64; COMPONENTS] {
        let y = real_sh(self.l_max, dir);
        let mut out = [C64::new(0.0, 0.0); COMPONENTS];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.coeffs[i].iter().zip(&y).map(|(c, v)| c * v).sum();
        }
        out
    }
}

/// Samples modes at every grid node: `6Q × N`, row `6q + i`.
pub fn sample_modes(modes: &[Mode], grid: &QuadratureGrid) -> Result<CMat> {
    if let Some(m) = modes.iter().find(|m| m.l_max > grid.max_exact_degree()) {
        return Err(invalid(format!(
            "mode band limit {} exceeds grid exactness degree {}",
            m.l_max,
            grid.max_exact_degree()
        )));
    }
    let mut out = Mat::<C64>::zeros(grid.block_dim(), modes.len());
    for (q, dir) in grid.nodes().iter().enumerate() {
        for (j, mode) in modes.iter().enumerate() {
            let v = mode.value(dir);
            for (i, vi) in v.iter().enumerate() {
                out[(COMPONENTS * q + i, j)] = *vi;
            }
        }
    }
    Ok(out)
}

/// `S = Σ_{j,k} c_{jk} |f_j⟩⟨g_k|`, a model of `N` isolated scatterers.
#[derive(Debug, Clone, PartialEq)]
pub struct ScattererSet {
    coeffs: CMat,
    left: Vec<Mode>,
    right: Vec<Mode>,
}

impl ScattererSet {
    pub fn new(coeffs: CMat, left: Vec<Mode>, right: Vec<Mode>) -> Result<Self> {
        let n = coeffs.nrows();
        if n == 0 || coeffs.ncols() != n || left.len() != n || right.len() != n {
            return Err(invalid("scatterer set needs an N×N coefficient matrix and N left/right modes"));
        }
        Ok(Self { coeffs, left, right })
    }

    /// Random rank-`n` set whose modes live in the listed components with
    /// degree at most `l_max`.
    pub fn random<R: Rng>(n: usize, l_max: usize, components: &[usize], rng: &mut R) -> Result<Self> {
        let coeffs = Mat::from_fn(n, n, |_, _| {
            C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        });
        let scale = 1.0 / ((sh_count(l_max) * components.len().max(1)) as f64).sqrt();
        let normalized = |rng: &mut R| {
            let mut m = Mode::random(l_max, components, rng);
            for c in m.coeffs.iter_mut().flatten() {
                *c *= scale;
            }
            m
        };
        let left = (0..n).map(|_| normalized(rng)).collect();
        let right = (0..n).map(|_| normalized(rng)).collect();
        Self::new(coeffs, left, right)
    }

    pub fn rank_bound(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn coefficients(&self) -> &CMat {
        &self.coeffs
    }

    pub fn left_modes(&self) -> &[Mode] {
        &self.left
    }

    pub fn right_modes(&self) -> &[Mode] {
        &self.right
    }

    pub fn band_limit(&self) -> usize {
        self.left.iter().chain(&self.right).map(Mode::l_max).max().unwrap_or(0)
    }

    /// `Σ |c_jk| ‖f_j‖ ‖g_k‖`, an upper bound for the HS norm.
    pub fn dyad_norm_bound(&self) -> f64 {
        let n = self.rank_bound();
        let mut total = 0.0;
        for j in 0..n {
            for k in 0..n {
                total += self.coeffs[(j, k)].norm() * self.left[j].norm() * self.right[k].norm();
            }
        }
        total
    }
}

/// `s(Ω_R, Ω_T) = A · exp(κ (u(Ω_R)·u(μ_R) + u(Ω_T)·u(μ_T) − 2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothSpread {
    pub kappa: f64,
    pub amplitude: [[C64; COMPONENTS]; COMPONENTS],
    pub mu_r: Direction,
    pub mu_t: Direction,
}

impl SmoothSpread {
    pub fn new(
        kappa: f64,
        amplitude: [[C64; COMPONENTS]; COMPONENTS],
        mu_r: Direction,
        mu_t: Direction,
    ) -> Result<Self> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(invalid(format!("concentration must be a nonnegative number, got {kappa}")));
        }
        Ok(Self { kappa, amplitude, mu_r, mu_t })
    }

    /// Amplitude `a·E_{ij}` (a single matrix unit).
    pub fn matrix_unit(i: usize, j: usize, a: C64) -> [[C64; COMPONENTS]; COMPONENTS] {
        let mut m = [[C64::new(0.0, 0.0); COMPONENTS]; COMPONENTS];
        m[i][j] = a;
        m
    }

    pub fn value(&self, r: &Direction, t: &Direction) -> [[C64; COMPONENTS]; COMPONENTS] {
        let f = self.envelope(r.unit_vector(), t.unit_vector());
        self.amplitude.map(|row| row.map(|a| a * f))
    }

    fn envelope(&self, ur: [f64; 3], ut: [f64; 3]) -> f64 {
        (self.kappa * (dot(ur, self.mu_r.unit_vector()) + dot(ut, self.mu_t.unit_vector()) - 2.0)).exp()
    }
}

/// A spread kernel on all node pairs: `6Q × 6Q`, entry
/// `[6q+i, 6q'+j] = s_ij(Ω_q, Ω_q')` (unweighted).
#[derive(Debug, Clone)]
pub struct SpreadSamples {
    resolution: usize,
    values: CMat,
}

impl SpreadSamples {
    pub fn from_matrix(grid: &QuadratureGrid, values: CMat) -> Result<Self> {
        if values.nrows() != grid.block_dim() || values.ncols() != grid.block_dim() {
            return Err(invalid("spread samples must be 6Q × 6Q"));
        }
        Ok(Self { resolution: grid.resolution(), values })
    }

    pub fn zero(grid: &QuadratureGrid) -> Self {
        Self { resolution: grid.resolution(), values: Mat::zeros(grid.block_dim(), grid.block_dim()) }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn raw(&self) -> &CMat {
        &self.values
    }

    pub fn value(&self, qr: usize, qt: usize) -> [[C64; COMPONENTS]; COMPONENTS] {
        let mut out = [[C64::new(0.0, 0.0); COMPONENTS]; COMPONENTS];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.values[(COMPONENTS * qr + i, COMPONENTS * qt + j)];
            }
        }
        out
    }

    /// `√w_q s(Ω_q, Ω_q') √w_q'`, the block-operator matrix of `S`.
    pub fn weighted(&self, grid: &QuadratureGrid) -> Result<CMat> {
        self.check_grid(grid)?;
        let w = grid.weights();
        Ok(Mat::from_fn(self.values.nrows(), self.values.ncols(), |r, c| {
            self.values[(r, c)] * (w[r / COMPONENTS] * w[c / COMPONENTS]).sqrt()
        }))
    }

    pub(crate) fn check_grid(&self, grid: &QuadratureGrid) -> Result<()> {
        if grid.resolution() != self.resolution {
            return Err(invalid(format!(
                "spread sampled at resolution {} used with grid of resolution {}",
                self.resolution,
                grid.resolution()
            )));
        }
        Ok(())
    }
}

pub fn sample_finite_rank(set: &ScattererSet, grid: &QuadratureGrid) -> Result<SpreadSamples> {
    let f = sample_modes(&set.left, grid)?;
    let g = sample_modes(&set.right, grid)?;
    let fc = &f * &set.coeffs;
    Ok(SpreadSamples { resolution: grid.resolution(), values: &fc * g.adjoint() })
}

pub fn sample_smooth(spread: &SmoothSpread, grid: &QuadratureGrid) -> SpreadSamples {
    let units = grid.unit_vectors();
    let mu_r = spread.mu_r.unit_vector();
    let mu_t = spread.mu_t.unit_vector();
    let er: Vec<f64> = units.iter().map(|u| (spread.kappa * (dot(*u, mu_r) - 1.0)).exp()).collect();
    let et: Vec<f64> = units.iter().map(|u| (spread.kappa * (dot(*u, mu_t) - 1.0)).exp()).collect();
    let values = Mat::from_fn(grid.block_dim(), grid.block_dim(), |r, c| {
        spread.amplitude[r % COMPONENTS][c % COMPONENTS] * (er[r / COMPONENTS] * et[c / COMPONENTS])
    });
    SpreadSamples { resolution: grid.resolution(), values }
}

/// `(Σ_{q,q'} w_q w_q' ‖s(Ω_q, Ω_q')‖_F²)^{1/2}`.
pub fn hs_norm(samples: &SpreadSamples, grid: &QuadratureGrid) -> Result<f64> {
    samples.check_grid(grid)?;
    let w = grid.weights();
    let v = &samples.values;
    let mut total = 0.0;
    for c in 0..v.ncols() {
        let col: f64 = v.col(c).iter().enumerate().map(|(r, x)| w[r / COMPONENTS] * x.norm_sqr()).sum();
        total += w[c / COMPONENTS] * col;
    }
    Ok(total.sqrt())
}

/// Left (receive-side) harmonic analysis of a kernel: coefficient blocks
/// `coef_i[(l,m), k] = Σ_q w_q Y_lm(Ω_q) S[6q+i, live[k]]` for each
/// component. Columns that are identically zero are left out.
struct LeftCoefficients {
    live: Vec<usize>,
    blocks: Vec<Option<CMat>>,
}

fn left_coefficients(samples: &SpreadSamples, grid: &QuadratureGrid, sh: &ShBasis) -> LeftCoefficients {
    let q = grid.len();
    let v = &samples.values;
    let zero = C64::new(0.0, 0.0);
    let live: Vec<usize> = (0..v.ncols()).filter(|&c| v.col(c).iter().any(|x| *x != zero)).collect();
    let w = grid.weights();
    let yw = Mat::<C64>::from_fn(sh.len(), q, |c, n| C64::new(sh.values()[(n, c)] * w[n], 0.0));
    let blocks = (0..COMPONENTS)
        .map(|i| {
            let rows = Mat::<C64>::from_fn(q, live.len(), |n, k| v[(COMPONENTS * n + i, live[k])]);
            let empty = (0..live.len()).all(|k| (0..q).all(|n| rows[(n, k)] == zero));
            (!empty).then(|| &yw * &rows)
        })
        .collect();
    LeftCoefficients { live, blocks }
}

/// Re-synthesizes a kernel from left coefficients scaled per basis column.
fn synthesize(
    coefs: &LeftCoefficients,
    sh: &ShBasis,
    grid: &QuadratureGrid,
    cols: usize,
    scale: impl Fn(usize) -> f64,
) -> CMat {
    let q = grid.len();
    let y = Mat::<C64>::from_fn(q, sh.len(), |n, c| C64::new(sh.values()[(n, c)] * scale(c), 0.0));
    let mut out = Mat::<C64>::zeros(COMPONENTS * q, cols);
    for (i, coef) in coefs.blocks.iter().enumerate() {
        let Some(coef) = coef else { continue };
        let part = &y * coef;
        for (k, &c) in coefs.live.iter().enumerate() {
            for n in 0..q {
                out[(COMPONENTS * n + i, c)] = part[(n, k)];
            }
        }
    }
    out
}

/// Relative squared HS mass of the part of `samples` outside the span of
/// the basis (on the receive side).
pub fn band_tail(samples: &SpreadSamples, grid: &QuadratureGrid, sh: &ShBasis) -> Result<f64> {
    samples.check_grid(grid)?;
    let total = hs_norm(samples, grid)?;
    if total == 0.0 {
        return Ok(0.0);
    }
    let coefs = left_coefficients(samples, grid, sh);
    let proj = SpreadSamples {
        resolution: samples.resolution,
        values: synthesize(&coefs, sh, grid, samples.values.ncols(), |_| 1.0),
    };
    let diff = SpreadSamples { resolution: samples.resolution, values: &samples.values - &proj.values };
    let tail = hs_norm(&diff, grid)?;
    Ok((tail / total).powi(2))
}

/// Kernel of `L̃_B^n S`: multiplies each receive-side harmonic coefficient of
/// degree `l` by `(l(l+1))^n`.
pub fn apply_lb_power(samples: &SpreadSamples, grid: &QuadratureGrid, sh: &ShBasis, n: u32) -> Result<SpreadSamples> {
    let tail = band_tail(samples, grid, sh)?;
    if tail > BAND_TAIL_TOL {
        return Err(Error::Precondition {
            what: "spread kernel is not band-limited to the harmonic basis",
            measured: tail,
            limit: BAND_TAIL_TOL,
        });
    }
    if n == 0 {
        return Ok(samples.clone());
    }
    let coefs = left_coefficients(samples, grid, sh);
    let ev = sh.eigenvalues();
    let values = synthesize(&coefs, sh, grid, samples.values.ncols(), |c| ev[c].powi(n as i32));
    Ok(SpreadSamples { resolution: samples.resolution, values })
}

/// `P̃_E S`: keeps receive-side harmonics with `l(l+1) ≤ energy`.
pub fn project_left(
    samples: &SpreadSamples,
    grid: &QuadratureGrid,
    sh: &ShBasis,
    energy: f64,
) -> Result<SpreadSamples> {
    samples.check_grid(grid)?;
    let coefs = left_coefficients(samples, grid, sh);
    let ev = sh.eigenvalues();
    let values = synthesize(&coefs, sh, grid, samples.values.ncols(), |c| if ev[c] <= energy { 1.0 } else { 0.0 });
    Ok(SpreadSamples { resolution: samples.resolution, values })
}
