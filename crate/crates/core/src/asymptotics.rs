//! Sweeps over the antenna count with every array refilled inside the same
//! box, growth-law fits, and verdicts for the four asymptotic regimes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{self, BoundInputs};
use crate::antenna::{continuum_kernel, unit_polarization, AntennaArray, BoxRegion, FillScheme, Side};
use crate::capacity::{self, Pipeline, Route, SnrConfig};
use crate::csv::{num, Table};
use crate::error::invalid;
use crate::linalg;
use crate::operators::{self, BlockOperator};
use crate::sphere::{build_grid, build_sh_basis, Direction};
use crate::spread::{sample_smooth, ScattererSet, SmoothSpread, SpreadSamples};
use crate::{Execution, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    TxSaturation,
    RxLog,
    ProportionalFiniteRank,
    ProportionalSmooth,
}

impl Regime {
    pub const ALL: [Regime; 4] =
        [Regime::TxSaturation, Regime::RxLog, Regime::ProportionalFiniteRank, Regime::ProportionalSmooth];

    pub fn name(self) -> &'static str {
        match self {
            Regime::TxSaturation => "tx_saturation",
            Regime::RxLog => "rx_log",
            Regime::ProportionalFiniteRank => "proportional_finite_rank",
            Regime::ProportionalSmooth => "proportional_smooth",
        }
    }

    pub fn parse(s: &str) -> Option<Regime> {
        Regime::ALL.into_iter().find(|r| r.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Environment {
    /// Random scatterer set of the given rank; modes of degree ≤ `l_max`
    /// in the listed field components.
    FiniteRank {
        rank: usize,
        l_max: usize,
        components: Vec<usize>,
    },
    Smooth(SmoothSpread),
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub regime: Regime,
    /// Swept antenna counts, strictly increasing.
    pub counts: Vec<usize>,
    /// `M_R` for saturation, `M_T` for receive-log growth; unused otherwise.
    pub fixed_count: usize,
    /// `a = M_R / M` in the proportional regimes.
    pub ratio: f64,
    pub environment: Environment,
    pub region: BoxRegion,
    pub tx_scheme: FillScheme,
    pub rx_scheme: FillScheme,
    /// Field component of the common unit polarization.
    pub polarization: usize,
    pub wavenumber: f64,
    pub snr: SnrConfig,
    pub resolution: usize,
    pub seed: u64,
    /// Growth exponent threshold `ε` of the smooth regime.
    pub epsilon: f64,
    /// Smoothness order `n` used for the truncation bound.
    pub order: u32,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub saturation_delta: f64,
    pub limit_gap: f64,
    pub log_slope: f64,
    pub finite_rank_slope: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { saturation_delta: 0.02, limit_gap: 0.05, log_slope: 0.05, finite_rank_slope: 0.10 }
    }
}

impl SweepSpec {
    /// Shipped configuration of each regime.
    pub fn default_for(regime: Regime) -> Self {
        let base = SweepSpec {
            regime,
            counts: Vec::new(),
            fixed_count: 0,
            ratio: 1.0,
            environment: Environment::FiniteRank { rank: 2, l_max: 2, components: vec![0] },
            region: BoxRegion::centered_cube(0.5).expect("valid box"),
            tx_scheme: FillScheme::Lattice,
            rx_scheme: FillScheme::Lattice,
            polarization: 0,
            wavenumber: 2.0 * std::f64::consts::PI,
            snr: SnrConfig::new(1.0, 1.0).expect("positive"),
            resolution: 12,
            seed: 1,
            epsilon: 0.5,
            order: 2,
            tolerances: Tolerances::default(),
        };
        match regime {
            Regime::TxSaturation => SweepSpec { counts: vec![16, 32, 64, 128], fixed_count: 4, ..base },
            Regime::RxLog => SweepSpec {
                counts: vec![8, 16, 32, 64, 128, 256, 512],
                fixed_count: 2,
                rx_scheme: FillScheme::Halton,
                ..base
            },
            Regime::ProportionalFiniteRank => SweepSpec {
                counts: vec![16, 64, 256, 1024, 4096],
                environment: Environment::FiniteRank { rank: 3, l_max: 2, components: vec![0] },
                // The finite-M offset Σ log2(aλ_j) scales with the SNR.
                snr: SnrConfig::new(0.01, 1.0).expect("positive"),
                ..base
            },
            Regime::ProportionalSmooth => SweepSpec {
                counts: vec![16, 32, 64, 128, 256],
                environment: Environment::Smooth(
                    SmoothSpread::new(
                        5.0,
                        SmoothSpread::matrix_unit(0, 0, C64::new(1.0, 0.0)),
                        Direction::new(1.0, 0.5).expect("valid direction"),
                        Direction::new(2.0, 3.5).expect("valid direction"),
                    )
                    .expect("valid spread"),
                ),
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.len() < 4 {
            return Err(invalid(format!("sweep needs at least 4 antenna counts, got {}", self.counts.len())));
        }
        if self.counts[0] == 0 || self.counts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("antenna counts must be positive and strictly increasing"));
        }
        if self.polarization >= crate::COMPONENTS {
            return Err(invalid("polarization component must be in 0..6"));
        }
        if !(self.wavenumber >= 0.0) || !self.wavenumber.is_finite() {
            return Err(invalid("wavenumber must be a nonnegative number"));
        }
        if self.resolution < 2 {
            return Err(invalid("grid resolution must be at least 2"));
        }
        match self.regime {
            Regime::TxSaturation | Regime::RxLog if self.fixed_count == 0 => {
                return Err(invalid("fixed antenna count must be positive"));
            }
            Regime::ProportionalFiniteRank
                if !matches!(self.environment, Environment::FiniteRank { .. } | Environment::Zero) =>
            {
                return Err(invalid("finite-rank regime needs a finite-rank environment"));
            }
            Regime::ProportionalSmooth => {
                if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
                    return Err(invalid("ε must lie in (0, 1)"));
                }
                if self.order == 0 {
                    return Err(invalid("smoothness order must be positive"));
                }
            }
            _ => {}
        }
        if matches!(self.regime, Regime::ProportionalFiniteRank | Regime::ProportionalSmooth) {
            for &m in &self.counts {
                capacity::receive_count(m, self.ratio)?;
            }
        }
        if let Environment::FiniteRank { rank, l_max, components } = &self.environment {
            if *rank == 0 || components.is_empty() || components.iter().any(|&c| c >= crate::COMPONENTS) {
                return Err(invalid("finite-rank environment needs rank ≥ 1 and components in 0..6"));
            }
            if *l_max >= self.resolution {
                return Err(invalid("mode degree must be below the grid resolution"));
            }
        }
        Ok(())
    }

    pub fn array(&self, m: usize, side: Side) -> Result<AntennaArray> {
        let scheme = match side {
            Side::Tx => self.tx_scheme,
            Side::Rx => self.rx_scheme,
        };
        AntennaArray::filled(self.region, m, scheme, unit_polarization(self.polarization), self.wavenumber, side)
    }

    pub fn pipeline(&self) -> Result<Pipeline> {
        let grid = build_grid(self.resolution)?;
        match &self.environment {
            Environment::FiniteRank { rank, l_max, components } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let set = ScattererSet::random(*rank, *l_max, components, &mut rng)?;
                Pipeline::finite_rank(grid, set, self.snr)
            }
            Environment::Smooth(sp) => {
                let samples = sample_smooth(sp, &grid);
                Pipeline::new(grid, samples, None, self.snr)
            }
            Environment::Zero => {
                let samples = SpreadSamples::zero(&grid);
                Pipeline::new(grid, samples, None, self.snr)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub m: usize,
    pub m_t: usize,
    pub m_r: usize,
    pub bits: f64,
    /// Regime-specific columns, same names on every row.
    pub extra: Vec<(&'static str, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Verdict {
    fn at_most(name: &'static str, value: f64, limit: f64) -> Self {
        Self { name, value, limit, pass: value <= limit }
    }

    fn flag(name: &'static str, pass: bool) -> Self {
        Self { name, value: f64::from(u8::from(pass)), limit: 1.0, pass }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub regime: Regime,
    pub rows: Vec<SweepRow>,
    pub statistics: Vec<(&'static str, f64)>,
    pub verdicts: Vec<Verdict>,
}

impl SweepResult {
    pub fn pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn statistic(&self, name: &str) -> Option<f64> {
        self.statistics.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn rows_table(&self) -> Table {
        let mut header = vec!["M", "M_T", "M_R", "bits"];
        if let Some(first) = self.rows.first() {
            header.extend(first.extra.iter().map(|(n, _)| *n));
        }
        let mut t = Table::new(&header);
        for r in &self.rows {
            let mut row = vec![r.m.to_string(), r.m_t.to_string(), r.m_r.to_string(), num(r.bits)];
            row.extend(r.extra.iter().map(|(_, v)| num(*v)));
            t.push(row);
        }
        t
    }

    /// Two columns `(M, C)` for plotting.
    pub fn plot_table(&self) -> Table {
        let mut t = Table::new(&["M", "bits"]);
        for r in &self.rows {
            t.push(vec![r.m.to_string(), num(r.bits)]);
        }
        t
    }

    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(&["kind", "name", "value", "limit", "pass"]);
        for (n, v) in &self.statistics {
            t.push(vec!["statistic".into(), n.to_string(), num(*v), String::new(), String::new()]);
        }
        for v in &self.verdicts {
            t.push(vec!["verdict".into(), v.name.to_string(), num(v.value), num(v.limit), v.pass.to_string()]);
        }
        t
    }

    pub fn summary_line(&self) -> String {
        let parts: Vec<String> = self
            .verdicts
            .iter()
            .map(|v| {
                format!(
                    "{}={} ({} vs {})",
                    v.name,
                    if v.pass { "pass" } else { "FAIL" },
                    short(v.value),
                    short(v.limit)
                )
            })
            .collect();
        format!("{}: {} [{}]", self.regime.name(), if self.pass() { "PASS" } else { "FAIL" }, parts.join(", "))
    }
}

fn short(x: f64) -> String {
    format!("{x:.6}")
}

/// Least-squares slope of `C` against `ln M` and local exponents
/// `ln(C_{k+1}/C_k) / ln(M_{k+1}/M_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthFit {
    pub slope: f64,
    pub intercept: f64,
    /// Index of the first row in the fit window.
    pub window_start: usize,
    /// Exponent of each consecutive pair, keyed by the larger `M`;
    /// `None` when a capacity is not positive.
    pub exponents: Vec<(usize, Option<f64>)>,
}

pub fn fit_growth(rows: &[(usize, f64)], window_start: usize) -> Result<GrowthFit> {
    if rows.len() < 3 {
        return Err(invalid(format!("growth fit needs at least 3 rows, got {}", rows.len())));
    }
    if rows.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(invalid("rows must be sorted by strictly increasing M"));
    }
    let window =
        rows.get(window_start..).filter(|w| w.len() >= 2).ok_or_else(|| invalid("fit window has fewer than 2 rows"))?;
    let xs: Vec<f64> = window.iter().map(|(m, _)| (*m as f64).ln()).collect();
    let ys: Vec<f64> = window.iter().map(|(_, c)| *c).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let exponents = rows
        .windows(2)
        .map(|w| {
            let (m0, c0) = w[0];
            let (m1, c1) = w[1];
            let e = (c0 > 0.0 && c1 > 0.0).then(|| (c1 / c0).ln() / (m1 as f64 / m0 as f64).ln());
            (m1, e)
        })
        .collect();
    Ok(GrowthFit { slope, intercept: my - slope * mx, window_start, exponents })
}

/// Start of the top-half window.
pub fn top_half(len: usize) -> usize {
    len / 2
}

fn relative_change(new: f64, old: f64) -> f64 {
    if new == old {
        0.0
    } else {
        (new - old).abs() / new.abs().max(old.abs())
    }
}

pub fn run_sweep(spec: &SweepSpec, exec: Execution) -> Result<SweepResult> {
    spec.validate()?;
    let pipe = spec.pipeline()?;
    match spec.regime {
        Regime::TxSaturation => tx_saturation(spec, &pipe, exec),
        Regime::RxLog => rx_log(spec, &pipe, exec),
        Regime::ProportionalFiniteRank => proportional_finite_rank(spec, &pipe, exec),
        Regime::ProportionalSmooth => proportional_smooth(spec, &pipe, exec),
    }
}

fn fixed_volume(spec: &SweepSpec, arrays: &[&AntennaArray]) -> Verdict {
    let same =
        arrays.iter().all(|a| *a.region() == spec.region && a.positions().iter().all(|p| spec.region.contains(p)));
    Verdict::flag("fixed_volume", same)
}

/// Continuum kernel of a uniform fill of the sweep box, lifted to an operator.
fn continuum_operator(spec: &SweepSpec, pipe: &Pipeline) -> Result<BlockOperator> {
    let kernel = continuum_kernel(&spec.region, &unit_polarization(spec.polarization), spec.wavenumber, &pipe.grid)?;
    operators::lift_limit(&pipe.grid, &kernel)
}

fn tx_saturation(spec: &SweepSpec, pipe: &Pipeline, exec: Execution) -> Result<SweepResult> {
    let rx = spec.array(spec.fixed_count, Side::Rx)?;
    let txs: Vec<AntennaArray> = spec.counts.iter().map(|&m| spec.array(m, Side::Tx)).collect::<Result<_>>()?;
    let evals = exec.map(&txs, |tx| pipe.evaluate(tx, &rx, &[Route::Direct], Execution::Sequential));
    let mut rows = Vec::new();
    let mut a_r = None;
    for (tx, ev) in txs.iter().zip(evals) {
        let ev = ev?;
        rows.push(SweepRow { m: tx.len(), m_t: tx.len(), m_r: rx.len(), bits: ev.results[0].bits, extra: Vec::new() });
        a_r = Some(ev.a_r);
    }
    let a_r = a_r.expect("at least four counts");
    for k in 0..rows.len() {
        let delta = if k == 0 { f64::NAN } else { relative_change(rows[k].bits, rows[k - 1].bits) };
        rows[k].extra.push(("delta", delta));
    }

    // Limit with the continuum kernel: E_T/(M_T N_0) A_T → (E_T/N_0) 𝒜_T.
    let cont = continuum_operator(spec, pipe)?;
    let k_lim = operators::build_K(&cont, &a_r, &pipe.spread_op)?;
    let limit = capacity::capacity_fredholm(&k_lim, spec.snr, 1, rx.len())?.bits;

    let last = rows.len() - 1;
    let delta = rows[last].extra[0].1;
    let gap = relative_change(rows[last].bits, limit);
    let deltas: Vec<f64> = rows[1..].iter().map(|r| r.extra[0].1).collect();
    let decreasing = deltas.windows(2).all(|w| w[1] <= w[0]);
    let mut refs: Vec<&AntennaArray> = txs.iter().collect();
    refs.push(&rx);
    let t = spec.tolerances;
    Ok(SweepResult {
        regime: spec.regime,
        // Lattice shapes change with M, so the deltas need not be monotone;
        // reported, not asserted.
        statistics: vec![
            ("saturation_delta", delta),
            ("limit_bits", limit),
            ("limit_gap", gap),
            ("delta_decreasing", f64::from(u8::from(decreasing))),
        ],
        verdicts: vec![
            Verdict::at_most("saturation_delta", delta, t.saturation_delta),
            Verdict::at_most("limit_gap", gap, t.limit_gap),
            fixed_volume(spec, &refs),
        ],
        rows,
    })
}

/// Number of positive eigenvalues of `𝒟_R = ρ √A_T 𝒮* 𝒜_R 𝒮 √A_T`,
/// counted from its spectrum and from the rank of `L_Rᴴ 𝒮 F_T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LimitRank {
    pub by_spectrum: usize,
    pub by_factor_rank: usize,
}

pub const RANK_TOL: f64 = 1e-10;

pub fn limit_rank(
    a_t: &BlockOperator,
    continuum_r: &BlockOperator,
    spread: &BlockOperator,
    snr: SnrConfig,
) -> Result<LimitRank> {
    let d_r = operators::build_K(a_t, continuum_r, spread)?;
    let vals: Vec<f64> = d_r.eigenvalues()?.iter().map(|v| v * snr.ratio()).collect();
    let top = vals.iter().fold(0.0f64, |m, v| m.max(*v));
    let by_spectrum = vals.iter().filter(|&&v| top > 0.0 && v > RANK_TOL * top).count();

    let l_r = operators::psd_gram_factor(continuum_r)?;
    let f_t = operators::psd_gram_factor(a_t)?;
    let cross = l_r.adjoint() * spread.mul(&f_t);
    let sv = linalg::singular_values(cross.as_ref())?;
    let top = sv.first().map_or(0.0, |s| s * s);
    let by_factor_rank = sv.iter().filter(|s| top > 0.0 && *s * *s > RANK_TOL * top).count();
    Ok(LimitRank { by_spectrum, by_factor_rank })
}

fn rx_log(spec: &SweepSpec, pipe: &Pipeline, exec: Execution) -> Result<SweepResult> {
    let tx = spec.array(spec.fixed_count, Side::Tx)?;
    let rxs: Vec<AntennaArray> = spec.counts.iter().map(|&m| spec.array(m, Side::Rx)).collect::<Result<_>>()?;
    let evals = exec.map(&rxs, |rx| pipe.evaluate(&tx, rx, &[Route::Direct], Execution::Sequential));
    let mut rows = Vec::new();
    let mut a_t = None;
    for (rx, ev) in rxs.iter().zip(evals) {
        let ev = ev?;
        rows.push(SweepRow { m: rx.len(), m_t: tx.len(), m_r: rx.len(), bits: ev.results[0].bits, extra: Vec::new() });
        a_t = Some(ev.a_t);
    }
    let a_t = a_t.expect("at least four counts");
    let points: Vec<(usize, f64)> = rows.iter().map(|r| (r.m, r.bits)).collect();
    let fit = fit_growth(&points, top_half(points.len()))?;
    for r in rows.iter_mut() {
        r.extra.push(("bits_per_ln_m", r.bits / (r.m as f64).ln()));
    }

    let cont = continuum_operator(spec, pipe)?;
    let rank = limit_rank(&a_t, &cont, &pipe.spread_op, spec.snr)?;
    let d = rank.by_spectrum as f64;
    let slope_limit = d / std::f64::consts::LN_2 * (1.0 + spec.tolerances.log_slope);
    let nested = spec.rx_scheme == FillScheme::Halton;
    let monotone = rows.windows(2).all(|w| w[1].bits >= w[0].bits * (1.0 - 1e-12));
    let mut refs: Vec<&AntennaArray> = rxs.iter().collect();
    refs.push(&tx);
    let mut verdicts = vec![
        Verdict::at_most("log_slope", fit.slope, slope_limit),
        Verdict::at_most("limit_rank", d, tx.len() as f64),
        Verdict::flag("rank_methods_agree", rank.by_spectrum == rank.by_factor_rank),
        fixed_volume(spec, &refs),
    ];
    if nested {
        verdicts.push(Verdict::flag("nested_monotone", monotone));
    }
    Ok(SweepResult {
        regime: spec.regime,
        statistics: vec![
            ("log_slope", fit.slope),
            ("limit_rank", d),
            ("limit_rank_by_factor", rank.by_factor_rank as f64),
            ("theorem_slope_bound", tx.len() as f64 / std::f64::consts::LN_2),
        ],
        verdicts,
        rows,
    })
}

fn proportional_finite_rank(spec: &SweepSpec, pipe: &Pipeline, exec: Execution) -> Result<SweepResult> {
    let set = pipe.scatterers.as_ref();
    let n = match &spec.environment {
        Environment::FiniteRank { rank, .. } => *rank,
        _ => 0,
    };
    let per_m = exec.map(&spec.counts, |&m| -> Result<(SweepRow, bool, AntennaArray, AntennaArray)> {
        let m_r = capacity::receive_count(m, spec.ratio)?;
        let tx = spec.array(m, Side::Tx)?;
        let rx = spec.array(m_r, Side::Rx)?;
        let Some(set) = set else {
            let row = SweepRow { m, m_t: m, m_r, bits: 0.0, extra: vec![("lambda_max", 0.0), ("growth_bound", 0.0)] };
            return Ok((row, true, tx, rx));
        };
        let ev = pipe.evaluate(&tx, &rx, &[], Execution::Sequential)?;
        let data = capacity::build_finite_rank_data(&pipe.grid, set, &ev.a_t, &ev.a_r, m, m_r, spec.ratio, spec.snr)?;
        let bits = capacity::capacity_finite_rank(&data)?.bits;
        let lambda = data.coupling_eigenvalues()?.last().copied().unwrap_or(0.0);
        let bound = data.log_growth_bound()?;
        let row = SweepRow { m, m_t: m, m_r, bits, extra: vec![("lambda_max", lambda), ("growth_bound", bound)] };
        Ok((row, bits <= bound * (1.0 + 1e-12), tx, rx))
    });
    let mut rows = Vec::new();
    let mut bound_ok = true;
    let mut arrays = Vec::new();
    for r in per_m {
        let (row, ok, tx, rx) = r?;
        bound_ok &= ok;
        rows.push(row);
        arrays.push(tx);
        arrays.push(rx);
    }
    let last = rows.last().expect("at least four counts");
    let ratio = last.bits / (last.m as f64).ln();
    let limit = n as f64 / std::f64::consts::LN_2 * (1.0 + spec.tolerances.finite_rank_slope);
    let points: Vec<(usize, f64)> = rows.iter().map(|r| (r.m, r.bits)).collect();
    let fit = fit_growth(&points, top_half(points.len()))?;
    let refs: Vec<&AntennaArray> = arrays.iter().collect();
    Ok(SweepResult {
        regime: spec.regime,
        statistics: vec![("bits_per_ln_m", ratio), ("log_slope", fit.slope), ("rank", n as f64)],
        verdicts: vec![
            Verdict::at_most("bits_per_ln_m", ratio, limit),
            Verdict::flag("growth_bound_every_m", bound_ok),
            fixed_volume(spec, &refs),
        ],
        rows,
    })
}

fn proportional_smooth(spec: &SweepSpec, pipe: &Pipeline, exec: Execution) -> Result<SweepResult> {
    let l_max = spec.resolution - 1;
    let sh = build_sh_basis(&pipe.grid, l_max)?;
    let per_m = exec.map(&spec.counts, |&m| -> Result<(SweepRow, bool, AntennaArray, AntennaArray)> {
        let m_r = capacity::receive_count(m, spec.ratio)?;
        let tx = spec.array(m, Side::Tx)?;
        let rx = spec.array(m_r, Side::Rx)?;
        let ev = pipe.evaluate(&tx, &rx, &[Route::Direct], Execution::Sequential)?;
        let bits = ev.results[0].bits;
        let energy = (m as f64).powf((1.0 - spec.epsilon) / spec.order as f64);
        let plan = analysis::plan_truncation(&pipe.grid, &pipe.spread, &sh, energy, spec.order)?;
        let inputs = BoundInputs {
            grid: &pipe.grid,
            sh: &sh,
            spread: &pipe.spread_op,
            a_t: &ev.a_t,
            a_r: &ev.a_r,
            m,
            ratio: spec.ratio,
            snr: spec.snr,
            actual_bits: bits,
        };
        let bound = analysis::truncated_capacity_bound(&plan, &inputs)?;
        let row = SweepRow {
            m,
            m_t: m,
            m_r,
            bits,
            extra: vec![
                ("energy", energy),
                ("truncation_dim", plan.dim as f64),
                ("tail", plan.tail),
                ("tail_bound", plan.tail_bound),
                ("bound_bits", bound.bound_bits),
            ],
        };
        Ok((row, bound.holds, tx, rx))
    });
    let mut rows = Vec::new();
    let mut bound_ok = true;
    let mut arrays = Vec::new();
    for r in per_m {
        let (row, ok, tx, rx) = r?;
        bound_ok &= ok;
        rows.push(row);
        arrays.push(tx);
        arrays.push(rx);
    }
    let points: Vec<(usize, f64)> = rows.iter().map(|r| (r.m, r.bits)).collect();
    let fit = fit_growth(&points, top_half(points.len()))?;
    for (row, (_, e)) in rows.iter_mut().skip(1).zip(&fit.exponents) {
        row.extra.push(("exponent", e.unwrap_or(f64::NAN)));
    }
    rows[0].extra.push(("exponent", f64::NAN));

    let top: Vec<Option<f64>> = fit.exponents.iter().rev().take(3).rev().map(|(_, e)| *e).collect();
    let all_zero = rows.iter().all(|r| r.bits == 0.0);
    let decreasing = all_zero || (top.iter().all(Option::is_some) && top.windows(2).all(|w| w[1] < w[0]));
    let last_exponent = fit.exponents.last().and_then(|(_, e)| *e).unwrap_or(0.0);
    let refs: Vec<&AntennaArray> = arrays.iter().collect();
    Ok(SweepResult {
        regime: spec.regime,
        statistics: vec![("exponent_at_max", last_exponent), ("log_slope", fit.slope)],
        verdicts: vec![
            Verdict::at_most("exponent_at_max", last_exponent, spec.epsilon),
            Verdict::flag("exponent_decreasing", decreasing),
            Verdict::flag("truncation_bound_every_m", bound_ok),
            fixed_volume(spec, &refs),
        ],
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_examples() {
        let log_rows: Vec<(usize, f64)> = [2usize, 4, 8, 16].iter().map(|&m| (m, 3.0 * (m as f64).ln())).collect();
        assert!((fit_growth(&log_rows, 0).unwrap().slope - 3.0).abs() < 1e-12);
        let flat: Vec<(usize, f64)> = [2usize, 4, 8].iter().map(|&m| (m, 7.0)).collect();
        assert!(fit_growth(&flat, 0).unwrap().slope.abs() < 1e-12);
        let power: Vec<(usize, f64)> = [16usize, 32, 64, 128].iter().map(|&m| (m, (m as f64).powf(0.4))).collect();
        for (_, e) in fit_growth(&power, 1).unwrap().exponents {
            assert!((e.unwrap() - 0.4).abs() < 1e-12);
        }
        assert!(fit_growth(&power[..2], 0).is_err());
        assert!(fit_growth(&power, 3).is_err());
    }

    #[test]
    fn exponent_undefined_for_zero_capacity() {
        let rows = vec![(1, 0.0), (2, 1.0), (4, 2.0)];
        assert_eq!(fit_growth(&rows, 0).unwrap().exponents[0].1, None);
    }

    #[test]
    fn spec_validation() {
        let mut s = SweepSpec::default_for(Regime::TxSaturation);
        s.validate().unwrap();
        s.counts = vec![16, 32];
        assert!(s.validate().is_err());
        s.counts = vec![16, 32, 32, 64];
        assert!(s.validate().is_err());
        let mut s = SweepSpec::default_for(Regime::ProportionalSmooth);
        s.epsilon = 1.0;
        assert!(s.validate().is_err());
        for r in Regime::ALL {
            assert_eq!(Regime::parse(r.name()), Some(r));
            SweepSpec::default_for(r).validate().unwrap();
        }
    }

    #[test]
    fn zero_spread_saturation() {
        let mut s = SweepSpec::default_for(Regime::TxSaturation);
        s.environment = Environment::Zero;
        s.resolution = 4;
        let r = run_sweep(&s, Execution::Sequential).unwrap();
        assert!(r.rows.iter().all(|row| row.bits == 0.0));
        assert_eq!(r.statistic("saturation_delta"), Some(0.0));
    }

    #[test]
    fn zero_spread_rx_slope() {
        let mut s = SweepSpec::default_for(Regime::RxLog);
        s.environment = Environment::Zero;
        s.resolution = 4;
        s.counts = vec![4, 8, 16, 32];
        let r = run_sweep(&s, Execution::Sequential).unwrap();
        assert_eq!(r.statistic("log_slope"), Some(0.0));
    }

    #[test]
    fn small_sweeps_are_deterministic_across_execution_modes() {
        let mut s = SweepSpec::default_for(Regime::ProportionalFiniteRank);
        s.resolution = 5;
        s.counts = vec![4, 8, 16, 32];
        let a = run_sweep(&s, Execution::Sequential).unwrap();
        let b = run_sweep(&s, Execution::Parallel).unwrap();
        assert_eq!(a.rows_table().render(), b.rows_table().render());
    }
}
