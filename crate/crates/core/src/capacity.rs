//! Shannon–Foschini capacity `log2 det(I + E_T/(M_T N_0) ℍℍᴴ)` by three
//! independent routes: singular values of `ℍ`, the spectrum of `𝒦`, and the
//! `N × N` determinant available for finite-rank spreads.

use faer::Mat;

use crate::antenna::{sample_pattern, AntennaArray};
use crate::csv::{num, Table};
use crate::error::invalid;
use crate::linalg::{self, CMat};
use crate::operators::{self, BlockOperator, ChannelMatrix};
use crate::sphere::QuadratureGrid;
use crate::spread::{sample_modes, ScattererSet, SpreadSamples};
use crate::{Execution, Result, C64, COMPONENTS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrConfig {
    e_t: f64,
    n_0: f64,
}

impl SnrConfig {
    pub fn new(e_t: f64, n_0: f64) -> Result<Self> {
        if !(e_t > 0.0 && e_t.is_finite() && n_0 > 0.0 && n_0.is_finite()) {
            return Err(invalid(format!("E_T and N_0 must be positive, got {e_t} and {n_0}")));
        }
        Ok(Self { e_t, n_0 })
    }

    pub fn e_t(&self) -> f64 {
        self.e_t
    }

    pub fn n_0(&self) -> f64 {
        self.n_0
    }

    pub fn ratio(&self) -> f64 {
        self.e_t / self.n_0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Route {
    Direct,
    Fredholm,
    FiniteRank,
}

impl Route {
    pub const ALL: [Route; 3] = [Route::Direct, Route::Fredholm, Route::FiniteRank];

    pub fn name(self) -> &'static str {
        match self {
            Route::Direct => "direct",
            Route::Fredholm => "fredholm",
            Route::FiniteRank => "finite_rank",
        }
    }

    pub fn parse(s: &str) -> Option<Route> {
        Route::ALL.into_iter().find(|r| r.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult {
    pub bits: f64,
    pub route: Route,
    /// Scaled eigenvalues `s_j` with `bits = Σ log2(1 + s_j)`.
    pub eigenvalues_used: Vec<f64>,
    pub grid_resolution: usize,
    pub snr: SnrConfig,
    pub m_t: usize,
    pub m_r: usize,
}

impl CapacityResult {
    fn from_scaled(route: Route, scaled: Vec<f64>, resolution: usize, snr: SnrConfig, m_t: usize, m_r: usize) -> Self {
        Self { bits: bits_from(&scaled), route, eigenvalues_used: scaled, grid_resolution: resolution, snr, m_t, m_r }
    }

    pub const HEADER: [&'static str; 7] = ["route", "M_T", "M_R", "E_T", "N_0", "resolution", "bits"];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.route.name().to_string(),
            self.m_t.to_string(),
            self.m_r.to_string(),
            num(self.snr.e_t),
            num(self.snr.n_0),
            self.grid_resolution.to_string(),
            num(self.bits),
        ]
    }

    pub fn table(results: &[CapacityResult]) -> Table {
        let mut t = Table::new(&Self::HEADER);
        for r in results {
            t.push(r.csv_row());
        }
        t
    }
}

/// `Σ log2(1 + s)`, accumulated in natural logs with `ln_1p`.
pub fn bits_from(scaled: &[f64]) -> f64 {
    // fold from +0.0: an empty float sum is -0.0.
    scaled.iter().fold(0.0, |acc, s| acc + s.ln_1p()) / std::f64::consts::LN_2
}

/// Relative agreement `|a − b| ≤ tol·(1 + max(|a|,|b|))`.
pub fn agree(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

pub fn capacity_direct(h: &ChannelMatrix, snr: SnrConfig, resolution: usize) -> Result<CapacityResult> {
    let m_t = h.cols();
    if m_t == 0 {
        return Err(invalid("channel has no transmit antennas"));
    }
    let scale = snr.ratio() / m_t as f64;
    let scaled = linalg::singular_values(h.entries().as_ref())?.iter().map(|s| scale * s * s).collect();
    Ok(CapacityResult::from_scaled(Route::Direct, scaled, resolution, snr, m_t, h.rows()))
}

/// `(1/ln2) Σ ln(1 + E_T/(M_T N_0) κ_j)` over the eigenvalues of `𝒦`.
pub fn capacity_fredholm(k: &BlockOperator, snr: SnrConfig, m_t: usize, m_r: usize) -> Result<CapacityResult> {
    if m_t == 0 {
        return Err(invalid("M_T must be positive"));
    }
    if !k.is_psd() {
        return Err(invalid("𝒦 must be tagged positive semidefinite"));
    }
    let vals = k.eigenvalues()?;
    linalg::check_psd_spectrum(&vals)?;
    let scale = snr.ratio() / m_t as f64;
    let scaled = linalg::clamp_nonneg(&vals).into_iter().filter(|v| *v > 0.0).map(|v| scale * v).collect();
    Ok(CapacityResult::from_scaled(Route::Fredholm, scaled, k.resolution(), snr, m_t, m_r))
}

/// The `N × N` matrices `d` and `φ` of a finite-rank spread.
#[derive(Debug, Clone)]
pub struct FiniteRankData {
    pub d: CMat,
    pub phi: CMat,
    /// `‖h_j‖ = √φ_jj`.
    pub h_norms: Vec<f64>,
    pub m: usize,
    pub m_r: usize,
    pub ratio: f64,
    pub resolution: usize,
    pub snr: SnrConfig,
}

fn weighted_modes(grid: &QuadratureGrid, modes: &[crate::spread::Mode]) -> Result<CMat> {
    let raw = sample_modes(modes, grid)?;
    let w = grid.weights();
    Ok(Mat::from_fn(raw.nrows(), raw.ncols(), |r, c| raw[(r, c)] * w[r / COMPONENTS].sqrt()))
}

/// `d_jk = E_T/(a N_0) ⟨Σ_i c_ij f_i, (A_R/M) Σ_m c_mk f_m⟩` and
/// `φ_jk = (1/M) ⟨g_j, A_T g_k⟩`.
#[allow(clippy::too_many_arguments)]
pub fn build_finite_rank_data(
    grid: &QuadratureGrid,
    set: &ScattererSet,
    a_t: &BlockOperator,
    a_r: &BlockOperator,
    m: usize,
    m_r: usize,
    ratio: f64,
    snr: SnrConfig,
) -> Result<FiniteRankData> {
    a_t.check_grid(grid)?;
    a_r.check_grid(grid)?;
    if m == 0 || !(ratio > 0.0) {
        return Err(invalid("M and the ratio a must be positive"));
    }
    let fc = &weighted_modes(grid, set.left_modes())? * set.coefficients();
    let g = weighted_modes(grid, set.right_modes())?;
    let mut d = fc.adjoint() * a_r.mul(&fc);
    d *= faer::Scale(C64::new(snr.ratio() / (ratio * m as f64), 0.0));
    let mut phi = g.adjoint() * a_t.mul(&g);
    phi *= faer::Scale(C64::new(1.0 / m as f64, 0.0));
    let d = linalg::hermitian_part(d.as_ref());
    let phi = linalg::hermitian_part(phi.as_ref());
    let h_norms = (0..phi.nrows()).map(|j| phi[(j, j)].re.max(0.0).sqrt()).collect();
    Ok(FiniteRankData { d, phi, h_norms, m, m_r, ratio, resolution: grid.resolution(), snr })
}

impl FiniteRankData {
    /// Eigenvalues (ascending) of `√d φ √d`.
    pub fn coupling_eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::check_psd_spectrum(&linalg::eigvalsh(self.d.as_ref())?)?;
        linalg::check_psd_spectrum(&linalg::eigvalsh(self.phi.as_ref())?)?;
        let root = linalg::psd_sqrt(self.d.as_ref())?;
        let x = &(&root * &self.phi) * &root;
        let vals = linalg::eigvalsh(x.as_ref())?;
        linalg::check_psd_spectrum(&vals)?;
        Ok(linalg::clamp_nonneg(&vals))
    }

    /// Right side of the log-growth bound
    /// `C ≤ (N/ln2)(ln M + ln(1 + aλ))`, `λ = max eig √d φ √d`.
    pub fn log_growth_bound(&self) -> Result<f64> {
        let lambda = self.coupling_eigenvalues()?.last().copied().unwrap_or(0.0);
        let n = self.d.nrows() as f64;
        Ok(n / std::f64::consts::LN_2 * ((self.m as f64).ln() + (self.ratio * lambda).ln_1p()))
    }
}

/// `(1/ln2) ln det(1 + aM √d φ √d)`.
pub fn capacity_finite_rank(data: &FiniteRankData) -> Result<CapacityResult> {
    let am = data.ratio * data.m as f64;
    let scaled = data.coupling_eigenvalues()?.into_iter().filter(|v| *v > 0.0).map(|v| am * v).collect();
    Ok(CapacityResult::from_scaled(Route::FiniteRank, scaled, data.resolution, data.snr, data.m, data.m_r))
}

/// Continuum matrices `d̃ = (E_T/N_0)⟨cf, 𝒜_R cf⟩`, `φ̃ = ⟨g, 𝒜_T g⟩` and
/// the distance of each finite-`M` sample to them.
#[derive(Debug, Clone)]
pub struct LimitReport {
    pub d_tilde: CMat,
    pub phi_tilde: CMat,
    /// `(M, ‖d(M) − d̃‖_F, ‖φ(M) − φ̃‖_F)`.
    pub distances: Vec<(usize, f64, f64)>,
}

pub fn limit_matrices(
    grid: &QuadratureGrid,
    set: &ScattererSet,
    continuum_t: &BlockOperator,
    continuum_r: &BlockOperator,
    snr: SnrConfig,
    sequence: &[FiniteRankData],
) -> Result<LimitReport> {
    let data = build_finite_rank_data(grid, set, continuum_t, continuum_r, 1, 1, 1.0, snr)?;
    let distances =
        sequence.iter().map(|s| (s.m, (&s.d - &data.d).norm_l2(), (&s.phi - &data.phi).norm_l2())).collect();
    Ok(LimitReport { d_tilde: data.d, phi_tilde: data.phi, distances })
}

/// `M_R = round(aM)`, ties rounded up.
pub fn receive_count(m: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(invalid(format!("ratio a must be positive, got {ratio}")));
    }
    let m_r = (ratio * m as f64 + 0.5).floor() as usize;
    if m_r == 0 {
        return Err(invalid(format!("round({ratio}·{m}) leaves no receive antennas")));
    }
    Ok(m_r)
}

/// Environment plus grid, shared by every array configuration evaluated
/// against it.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub grid: QuadratureGrid,
    pub spread: SpreadSamples,
    pub spread_op: BlockOperator,
    pub scatterers: Option<ScattererSet>,
    pub snr: SnrConfig,
}

/// Everything computed for one `(TX, RX)` pair.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub h: ChannelMatrix,
    pub a_t: BlockOperator,
    pub a_r: BlockOperator,
    pub results: Vec<CapacityResult>,
}

impl Pipeline {
    pub fn new(
        grid: QuadratureGrid,
        spread: SpreadSamples,
        scatterers: Option<ScattererSet>,
        snr: SnrConfig,
    ) -> Result<Self> {
        let spread_op = operators::lift_spread(&grid, &spread)?;
        Ok(Self { grid, spread, spread_op, scatterers, snr })
    }

    pub fn finite_rank(grid: QuadratureGrid, set: ScattererSet, snr: SnrConfig) -> Result<Self> {
        let spread = crate::spread::sample_finite_rank(&set, &grid)?;
        Self::new(grid, spread, Some(set), snr)
    }

    /// Evaluates the requested routes. The finite-rank route needs a
    /// scatterer set and uses `a = M_R / M_T`.
    pub fn evaluate(
        &self,
        tx: &AntennaArray,
        rx: &AntennaArray,
        routes: &[Route],
        exec: Execution,
    ) -> Result<Evaluation> {
        let pt = sample_pattern(tx, &self.grid, exec);
        let pr = sample_pattern(rx, &self.grid, exec);
        let h = operators::build_H(&self.grid, &pt, &pr, &self.spread)?;
        let a_t = operators::build_A(&self.grid, &pt)?;
        let a_r = operators::build_A(&self.grid, &pr)?;
        let res = self.grid.resolution();
        let mut results = Vec::new();
        for route in routes {
            results.push(match route {
                Route::Direct => capacity_direct(&h, self.snr, res)?,
                Route::Fredholm => {
                    let k = operators::build_K(&a_t, &a_r, &self.spread_op)?;
                    capacity_fredholm(&k, self.snr, tx.len(), rx.len())?
                }
                Route::FiniteRank => {
                    let set = self
                        .scatterers
                        .as_ref()
                        .ok_or_else(|| invalid("finite-rank route needs a finite-rank environment"))?;
                    let ratio = rx.len() as f64 / tx.len() as f64;
                    let data =
                        build_finite_rank_data(&self.grid, set, &a_t, &a_r, tx.len(), rx.len(), ratio, self.snr)?;
                    capacity_finite_rank(&data)?
                }
            });
        }
        Ok(Evaluation { h, a_t, a_r, results })
    }
}
