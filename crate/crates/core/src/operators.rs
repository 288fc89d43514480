//! Block operators on `[L²(S²)]⁶` in the weighted Nyström convention
//! `mat[6q+i, 6q'+j] = √w_q K_ij(Ω_q, Ω_q') √w_q'`, so that kernel
//! composition is a matrix product and adjoints are conjugate transposes.
//!
//! Operators built from antenna patterns are kept in Gram form `F Fᴴ`
//! with a thin factor `F`; spectra then come from the small matrix `FᴴF`.

use faer::Mat;

use crate::antenna::{LimitKernel, PatternSamples};
use crate::csv::{num, Table};
use crate::error::invalid;
use crate::linalg::{self, CMat, PSD_TOL};
use crate::sphere::QuadratureGrid;
use crate::spread::SpreadSamples;
use crate::{Error, Result, C64, COMPONENTS};

#[derive(Debug, Clone)]
enum Repr {
    Dense(CMat),
    /// `mat = F Fᴴ`.
    Gram(CMat),
}

#[derive(Debug, Clone)]
pub struct BlockOperator {
    resolution: usize,
    dim: usize,
    repr: Repr,
    self_adjoint: bool,
    psd: bool,
}

/// `op = U diag(λ) Uᴴ` with orthonormal columns `U` and `λ ≥ 0`.
#[derive(Debug, Clone)]
pub struct PsdFactors {
    pub vectors: CMat,
    pub values: Vec<f64>,
}

impl PsdFactors {
    /// `U diag(λ^p)`; `p = 1/2` gives a Gram factor of the operator and
    /// `p = 1/4` one of its square root.
    pub fn factor(&self, p: f64) -> CMat {
        Mat::from_fn(self.vectors.nrows(), self.vectors.ncols(), |r, c| self.vectors[(r, c)] * self.values[c].powf(p))
    }
}

impl BlockOperator {
    fn dense(grid: &QuadratureGrid, mat: CMat) -> Self {
        Self {
            resolution: grid.resolution(),
            dim: mat.nrows(),
            repr: Repr::Dense(mat),
            self_adjoint: false,
            psd: false,
        }
    }

    /// PSD operator `F Fᴴ`.
    pub fn from_gram_factor(grid: &QuadratureGrid, factor: CMat) -> Result<Self> {
        if factor.nrows() != grid.block_dim() {
            return Err(invalid("Gram factor must have 6Q rows"));
        }
        check_finite(&factor)?;
        Ok(Self {
            resolution: grid.resolution(),
            dim: factor.nrows(),
            repr: Repr::Gram(factor),
            self_adjoint: true,
            psd: true,
        })
    }

    /// Dense operator from an already weighted `6Q × 6Q` matrix.
    pub fn from_weighted(grid: &QuadratureGrid, mat: CMat) -> Result<Self> {
        if mat.nrows() != grid.block_dim() || mat.ncols() != grid.block_dim() {
            return Err(invalid("block matrix must be 6Q × 6Q"));
        }
        check_finite(&mat)?;
        Ok(Self::dense(grid, mat))
    }

    pub fn zero(grid: &QuadratureGrid) -> Self {
        let mut op = Self::dense(grid, Mat::zeros(grid.block_dim(), grid.block_dim()));
        op.self_adjoint = true;
        op.psd = true;
        op
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.self_adjoint
    }

    pub fn is_psd(&self) -> bool {
        self.psd
    }

    pub fn gram_factor(&self) -> Option<&CMat> {
        match &self.repr {
            Repr::Gram(f) => Some(f),
            Repr::Dense(_) => None,
        }
    }

    /// The full weighted matrix.
    pub fn matrix(&self) -> CMat {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            Repr::Gram(f) => f * f.adjoint(),
        }
    }

    /// `mat · x`.
    pub fn mul(&self, x: &CMat) -> CMat {
        match &self.repr {
            Repr::Dense(m) => m * x,
            Repr::Gram(f) => {
                let inner = f.adjoint() * x;
                f * &inner
            }
        }
    }

    /// `matᴴ · x`.
    pub fn adjoint_mul(&self, x: &CMat) -> CMat {
        match &self.repr {
            Repr::Dense(m) => m.adjoint() * x,
            Repr::Gram(_) => self.mul(x),
        }
    }

    pub fn frobenius(&self) -> f64 {
        match &self.repr {
            Repr::Dense(m) => m.norm_l2(),
            // ‖F Fᴴ‖_F = ‖Fᴴ F‖_F.
            Repr::Gram(f) => (f.adjoint() * f).norm_l2(),
        }
    }

    /// Applies the integral operator to a sampled function `ψ` (length 6Q)
    /// and returns the samples of `Kψ`.
    pub fn apply(&self, grid: &QuadratureGrid, psi: &[C64]) -> Result<Vec<C64>> {
        self.check_grid(grid)?;
        if psi.len() != self.dim {
            return Err(invalid("function samples must have length 6Q"));
        }
        let w = grid.weights();
        let x = Mat::from_fn(self.dim, 1, |r, _| psi[r] * w[r / COMPONENTS].sqrt());
        let y = self.mul(&x);
        Ok((0..self.dim).map(|r| y[(r, 0)] / w[r / COMPONENTS].sqrt()).collect())
    }

    /// `⟨ψ, K ψ⟩` by quadrature.
    pub fn quadratic_form(&self, grid: &QuadratureGrid, psi: &[C64]) -> Result<C64> {
        let kpsi = self.apply(grid, psi)?;
        let w = grid.weights();
        Ok(psi.iter().zip(&kpsi).enumerate().map(|(r, (a, b))| a.conj() * b * w[r / COMPONENTS]).sum())
    }

    /// Eigenvalues (ascending) of the Hermitian part. For Gram operators
    /// only the spectrum of `FᴴF` is returned; the rest is zero.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        match &self.repr {
            Repr::Dense(m) => compressed_eigvalsh(m),
            Repr::Gram(f) => linalg::eigvalsh((f.adjoint() * f).as_ref()),
        }
    }

    /// Verifies the PSD tag against the spectrum.
    pub fn verify_psd(&self) -> Result<()> {
        linalg::check_psd_spectrum(&self.eigenvalues()?)
    }

    /// `‖mat − matᴴ‖_F ≤ 1e-10 ‖mat‖_F`.
    pub fn verify_self_adjoint(&self) -> Result<()> {
        if let Repr::Dense(m) = &self.repr {
            let defect = (m - m.adjoint()).norm_l2();
            let scale = m.norm_l2();
            if defect > PSD_TOL * scale {
                return Err(Error::Precondition {
                    what: "operator is not self-adjoint",
                    measured: defect / scale.max(f64::MIN_POSITIVE),
                    limit: PSD_TOL,
                });
            }
        }
        Ok(())
    }

    /// Sets the self-adjoint and PSD tags after checking them.
    pub fn into_psd(mut self) -> Result<Self> {
        self.verify_self_adjoint()?;
        self.verify_psd()?;
        self.self_adjoint = true;
        self.psd = true;
        Ok(self)
    }

    /// Spectral factors `U diag(λ) Uᴴ` with the zero eigenspace dropped.
    pub fn psd_factors(&self) -> Result<PsdFactors> {
        if !self.psd {
            return Err(invalid("operator is not tagged positive semidefinite"));
        }
        match &self.repr {
            Repr::Gram(f) => {
                let (u, s) = linalg::thin_left_svd(f.as_ref())?;
                Ok(keep_positive(u, s.iter().map(|x| x * x).collect()))
            }
            Repr::Dense(m) => {
                let (idx, sub) = compress(m);
                let (vals, vecs) = linalg::eigh(sub.as_ref())?;
                linalg::check_psd_spectrum(&vals)?;
                let embedded = Mat::from_fn(self.dim, vecs.ncols(), |r, c| match idx.binary_search(&r) {
                    Ok(k) => vecs[(k, c)],
                    Err(_) => C64::new(0.0, 0.0),
                });
                Ok(keep_positive(embedded, linalg::clamp_nonneg(&vals)))
            }
        }
    }

    pub(crate) fn check_grid(&self, grid: &QuadratureGrid) -> Result<()> {
        if grid.resolution() != self.resolution || grid.block_dim() != self.dim {
            return Err(invalid(format!(
                "operator on resolution {} used with grid of resolution {}",
                self.resolution,
                grid.resolution()
            )));
        }
        Ok(())
    }

    fn check_same(&self, other: &BlockOperator) -> Result<()> {
        if self.resolution != other.resolution || self.dim != other.dim {
            return Err(invalid("operators live on different grids"));
        }
        Ok(())
    }

    /// Rows `(row, col, re, im)` of the weighted matrix.
    pub fn to_table(&self) -> Table {
        matrix_table(&self.matrix())
    }
}

fn keep_positive(vectors: CMat, values: Vec<f64>) -> PsdFactors {
    let keep: Vec<usize> = (0..values.len()).filter(|&c| values[c] > 0.0).collect();
    PsdFactors {
        vectors: Mat::from_fn(vectors.nrows(), keep.len(), |r, c| vectors[(r, keep[c])]),
        values: keep.iter().map(|&c| values[c]).collect(),
    }
}

/// Drops rows/columns that are identically zero in both directions; single
/// polarizations leave five sixths of a block matrix empty.
fn compress(m: &CMat) -> (Vec<usize>, CMat) {
    let n = m.nrows();
    let zero = C64::new(0.0, 0.0);
    let idx: Vec<usize> = (0..n).filter(|&i| (0..n).any(|j| m[(i, j)] != zero || m[(j, i)] != zero)).collect();
    let sub = Mat::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])]);
    (idx, sub)
}

fn compressed_eigvalsh(m: &CMat) -> Result<Vec<f64>> {
    let (idx, sub) = compress(m);
    let mut vals = linalg::eigvalsh(sub.as_ref())?;
    vals.extend(std::iter::repeat_n(0.0, m.nrows() - idx.len()));
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

fn check_finite(m: &CMat) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(invalid("matrix has non-finite entries"));
            }
        }
    }
    Ok(())
}

pub fn matrix_table(m: &CMat) -> Table {
    let mut t = Table::new(&["row", "col", "re", "im"]);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            t.push(vec![i.to_string(), j.to_string(), num(m[(i, j)].re), num(m[(i, j)].im)]);
        }
    }
    t
}

/// Applies the weighted convention to unweighted `6Q × 6Q` kernel samples.
pub fn lift_kernel(grid: &QuadratureGrid, samples: &CMat) -> Result<BlockOperator> {
    if samples.nrows() != grid.block_dim() || samples.ncols() != grid.block_dim() {
        return Err(invalid(format!(
            "kernel samples are {}×{}, grid needs {}×{}",
            samples.nrows(),
            samples.ncols(),
            grid.block_dim(),
            grid.block_dim()
        )));
    }
    let w = grid.weights();
    let mat = Mat::from_fn(samples.nrows(), samples.ncols(), |r, c| {
        samples[(r, c)] * (w[r / COMPONENTS] * w[c / COMPONENTS]).sqrt()
    });
    BlockOperator::from_weighted(grid, mat)
}

pub fn lift_spread(grid: &QuadratureGrid, spread: &SpreadSamples) -> Result<BlockOperator> {
    if spread.resolution() != grid.resolution() {
        return Err(invalid("spread sampled on a different grid"));
    }
    lift_kernel(grid, spread.raw())
}

/// Lifts a limit kernel (a positive kernel by construction) and verifies it.
pub fn lift_limit(grid: &QuadratureGrid, kernel: &LimitKernel) -> Result<BlockOperator> {
    if kernel.resolution() != grid.resolution() {
        return Err(invalid("kernel sampled on a different grid"));
    }
    lift_kernel(grid, kernel.raw())?.into_psd()
}

/// `A_T` or `A_R` in Gram form from sampled patterns.
#[allow(non_snake_case)]
pub fn build_A(grid: &QuadratureGrid, samples: &PatternSamples) -> Result<BlockOperator> {
    BlockOperator::from_gram_factor(grid, samples.gram_factor(grid)?)
}

/// PSD square root, returned in Gram form.
pub fn psd_sqrt(op: &BlockOperator) -> Result<BlockOperator> {
    let f = op.psd_factors()?;
    Ok(BlockOperator {
        resolution: op.resolution,
        dim: op.dim,
        repr: Repr::Gram(f.factor(0.25)),
        self_adjoint: true,
        psd: true,
    })
}

/// A Gram factor `F` with `op = F Fᴴ`.
pub fn psd_gram_factor(op: &BlockOperator) -> Result<CMat> {
    match &op.repr {
        Repr::Gram(f) if op.psd => Ok(f.clone()),
        _ => Ok(op.psd_factors()?.factor(0.5)),
    }
}

/// `𝒦 = √A_T 𝒮ᴴ A_R 𝒮 √A_T` in Gram form `Z Zᴴ` with `Z = √A_T 𝒮ᴴ F_R`,
/// where `A_R = F_R F_Rᴴ`.
#[allow(non_snake_case)]
pub fn build_K(a_t: &BlockOperator, a_r: &BlockOperator, s: &BlockOperator) -> Result<BlockOperator> {
    a_t.check_same(a_r)?;
    a_t.check_same(s)?;
    let root = a_t.psd_factors()?.factor(0.25);
    let right = psd_gram_factor(a_r)?;
    let s_adj_right = s.adjoint_mul(&right);
    let inner = root.adjoint() * &s_adj_right;
    BlockOperator::from_gram_factor_raw(a_t, &root * &inner)
}

/// `𝒦` by the defining product of dense matrices; only for small grids.
#[allow(non_snake_case)]
pub fn build_K_by_definition(a_t: &BlockOperator, a_r: &BlockOperator, s: &BlockOperator) -> Result<BlockOperator> {
    a_t.check_same(a_r)?;
    a_t.check_same(s)?;
    let root = psd_sqrt(a_t)?.matrix();
    let sm = s.matrix();
    let k = &(&(&(&root * sm.adjoint()) * &a_r.matrix()) * &sm) * &root;
    Ok(BlockOperator {
        resolution: a_t.resolution,
        dim: a_t.dim,
        repr: Repr::Dense(k),
        self_adjoint: false,
        psd: false,
    })
}

impl BlockOperator {
    fn from_gram_factor_raw(like: &BlockOperator, factor: CMat) -> Result<Self> {
        check_finite(&factor)?;
        Ok(Self { resolution: like.resolution, dim: like.dim, repr: Repr::Gram(factor), self_adjoint: true, psd: true })
    }
}

/// The `M_R × M_T` transfer matrix.
#[derive(Debug, Clone)]
pub struct ChannelMatrix {
    entries: CMat,
}

impl ChannelMatrix {
    pub fn new(entries: CMat) -> Result<Self> {
        check_finite(&entries)?;
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn to_table(&self) -> Table {
        matrix_table(&self.entries)
    }
}

/// `ℍ = Σ w_q w_q' a_R(Ω_q) s(Ω_q, Ω_q') a_T(Ω_q') = G_Rᴴ 𝒮 G_T`.
#[allow(non_snake_case)]
pub fn build_H(
    grid: &QuadratureGrid,
    a_t: &PatternSamples,
    a_r: &PatternSamples,
    s: &SpreadSamples,
) -> Result<ChannelMatrix> {
    let g_t = a_t.gram_factor(grid)?;
    let g_r = a_r.gram_factor(grid)?;
    let sw = s.weighted(grid)?;
    let right = &sw * &g_t;
    ChannelMatrix::new(g_r.adjoint() * &right)
}

/// `B = ℍℍᴴ`.
#[allow(non_snake_case)]
pub fn build_B(h: &ChannelMatrix) -> CMat {
    h.entries() * h.entries().adjoint()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventTraces {
    pub lhs: C64,
    pub rhs: C64,
}

/// Relative distance below which `z` counts as on the spectrum.
pub const RESOLVENT_MIN_DISTANCE: f64 = 1e-6;

/// `Tr{(z−B)⁻¹B}` on `C^{M_R}` (linear solve) and `Tr{(z−𝒦)⁻¹𝒦}` on the
/// block space (spectral sum).
pub fn resolvent_trace_identity(b: &CMat, k: &BlockOperator, z: C64) -> Result<ResolventTraces> {
    if b.nrows() != b.ncols() {
        return Err(invalid("B must be square"));
    }
    let spec_b = linalg::eigvalsh(b.as_ref())?;
    let mut spec_k = k.eigenvalues()?;
    if spec_k.len() < k.dim() {
        spec_k.push(0.0);
    }
    let scale = spec_b.iter().chain(&spec_k).fold(0.0f64, |m, v| m.max(v.abs()));
    let distance = spec_b.iter().chain(&spec_k).map(|v| (z - v).norm()).fold(f64::INFINITY, f64::min);
    let required = RESOLVENT_MIN_DISTANCE * scale;
    if distance.is_finite() && (distance < required || distance == 0.0) {
        return Err(Error::IllConditioned { re: z.re, im: z.im, distance, required });
    }

    let n = b.nrows();
    let lhs = if n == 0 {
        C64::new(0.0, 0.0)
    } else {
        use faer::linalg::solvers::Solve;
        let shifted = Mat::from_fn(n, n, |i, j| if i == j { z - b[(i, j)] } else { -b[(i, j)] });
        let x = shifted.partial_piv_lu().solve(b);
        linalg::trace(x.as_ref())
    };
    let rhs = spec_k.iter().map(|&kv| C64::new(kv, 0.0) / (z - kv)).sum();
    Ok(ResolventTraces { lhs, rhs })
}
