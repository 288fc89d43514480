//! Executable forms of the trace inequalities for `F(x) = ln(1 + x)`, the
//! Berezin-type splitting, and the spectral truncation of a spread operator
//! with its certified capacity bound.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::capacity::{self, FiniteRankData, SnrConfig};
use crate::csv::{num, Table};
use crate::error::invalid;
use crate::linalg::{self, CMat};
use crate::operators::{psd_gram_factor, BlockOperator};
use crate::sphere::{weyl_count, QuadratureGrid, ShBasis};
use crate::spread::{self, SpreadSamples};
use crate::{Execution, Result, C64, COMPONENTS};

/// Inequalities are accepted when `rhs − lhs ≥ −INEQ_TOL · scale`.
pub const INEQ_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`, exactly as computed.
    pub margin: f64,
    pub scale: f64,
    pub pass: bool,
}

impl InequalityCheck {
    fn new(lhs: f64, rhs: f64, scale: f64) -> Self {
        let margin = rhs - lhs;
        Self { lhs, rhs, margin, scale, pass: margin >= -INEQ_TOL * scale }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceIneqReport {
    /// `|Tr F(T₂) − Tr F(T₁)| ≤ ‖T₂ − T₁‖₁`.
    pub lipschitz: InequalityCheck,
    /// `Tr F(T₂) ≤ Tr F(T₁) + Tr{F′(T₁)(T₂ − T₁)}`.
    pub tangent: InequalityCheck,
}

impl TraceIneqReport {
    pub fn pass(&self) -> bool {
        self.lipschitz.pass && self.tangent.pass
    }
}

fn checked_psd_eigs(t: &CMat, what: &str) -> Result<Vec<f64>> {
    if t.nrows() != t.ncols() {
        return Err(invalid(format!("{what} must be square")));
    }
    let vals = linalg::eigvalsh(t.as_ref())?;
    linalg::check_psd_spectrum(&vals)?;
    Ok(vals)
}

fn trace_log1p(vals: &[f64]) -> f64 {
    vals.iter().map(|v| v.max(0.0).ln_1p()).sum()
}

pub fn check_trace_inequalities(t1: &CMat, t2: &CMat) -> Result<TraceIneqReport> {
    if t1.nrows() != t2.nrows() || t1.ncols() != t2.ncols() {
        return Err(invalid("T₁ and T₂ must have the same dimension"));
    }
    let e1 = checked_psd_eigs(t1, "T₁")?;
    let e2 = checked_psd_eigs(t2, "T₂")?;
    let f1 = trace_log1p(&e1);
    let f2 = trace_log1p(&e2);
    let delta = linalg::hermitian_part((t2 - t1).as_ref());
    let trace_norm: f64 = linalg::eigvalsh(delta.as_ref())?.iter().map(|v| v.abs()).sum();
    let resolvent = linalg::spectral_map(t1.as_ref(), |x| 1.0 / (1.0 + x.max(0.0)))?;
    let tangent_term = linalg::trace((&resolvent * &delta).as_ref()).re;
    let scale = 1.0 + e1.iter().chain(&e2).map(|v| v.abs()).sum::<f64>();
    Ok(TraceIneqReport {
        lipschitz: InequalityCheck::new((f2 - f1).abs(), trace_norm, scale),
        tangent: InequalityCheck::new(f2, f1 + tangent_term, scale),
    })
}

/// `Tr F(T) ≤ Tr F(PTP) + Tr F(QTQ)` with `Q = 1 − P`.
pub fn berezin_split(t: &CMat, p: &CMat) -> Result<InequalityCheck> {
    let n = t.nrows();
    if p.nrows() != n || p.ncols() != n {
        return Err(invalid("projection and operator dimensions differ"));
    }
    let defect = linalg::max_abs((p * p - p).as_ref()).max(linalg::max_abs((p - p.adjoint()).as_ref()));
    if defect > 1e-12 {
        return Err(invalid(format!("P is not an orthogonal projection (defect {defect:e})")));
    }
    let vals = checked_psd_eigs(t, "T")?;
    let q = Mat::from_fn(n, n, |i, j| if i == j { C64::new(1.0, 0.0) - p[(i, j)] } else { -p[(i, j)] });
    let ptp = &(p * t) * p;
    let qtq = &(&q * t) * &q;
    let lhs = trace_log1p(&vals);
    let rhs = trace_log1p(&linalg::eigvalsh(ptp.as_ref())?) + trace_log1p(&linalg::eigvalsh(qtq.as_ref())?);
    let scale = 1.0 + vals.iter().map(|v| v.abs()).sum::<f64>();
    Ok(InequalityCheck::new(lhs, rhs, scale))
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMat {
    Mat::from_fn(rows, cols, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

/// Random PSD matrix of the given dimension, random rank and a scale
/// spread over four decades.
pub fn random_psd(dim: usize, rng: &mut ChaCha8Rng) -> CMat {
    let rank = rng.random_range(1..=dim);
    let x = gaussian(dim, rank, rng);
    let scale = 10f64.powf(rng.random_range(-2.0..2.0)) / (dim * rank) as f64;
    let mut t = linalg::hermitian_part((&x * x.adjoint()).as_ref());
    t *= faer::Scale(C64::new(scale, 0.0));
    t
}

/// Orthogonal projection onto the span of `k` random vectors.
pub fn random_projection(dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<CMat> {
    let (u, _) = linalg::thin_left_svd(gaussian(dim, k, rng).as_ref())?;
    Ok(linalg::hermitian_part((&u * u.adjoint()).as_ref()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzRow {
    pub check: &'static str,
    pub seed: u64,
    pub dim: usize,
    pub result: InequalityCheck,
}

impl FuzzRow {
    pub fn table(rows: &[FuzzRow]) -> Table {
        let mut t = Table::new(&["check", "seed", "dim", "lhs", "rhs", "margin", "pass"]);
        for r in rows {
            t.push(vec![
                r.check.to_string(),
                r.seed.to_string(),
                r.dim.to_string(),
                num(r.result.lhs),
                num(r.result.rhs),
                num(r.result.margin),
                r.result.pass.to_string(),
            ]);
        }
        t
    }
}

/// Seed of trial `i` in a fuzz run started from `base`.
pub fn trial_seed(base: u64, i: usize) -> u64 {
    base.wrapping_add(i as u64)
}

/// Both trace inequalities on `trials` random PSD pairs. Half the pairs are
/// independent; the other half are small PSD perturbations of each other.
pub fn fuzz_trace_inequalities(trials: usize, max_dim: usize, base_seed: u64, exec: Execution) -> Result<Vec<FuzzRow>> {
    let per_trial = exec.map_range(trials, |i| -> Result<[FuzzRow; 2]> {
        let seed = trial_seed(base_seed, i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.random_range(1..=max_dim);
        let t1 = random_psd(dim, &mut rng);
        let t2 = if i % 2 == 0 {
            random_psd(dim, &mut rng)
        } else {
            let mut bump = random_psd(dim, &mut rng);
            bump *= faer::Scale(C64::new(1e-3, 0.0));
            &t1 + &bump
        };
        let rep = check_trace_inequalities(&t1, &t2)?;
        Ok([
            FuzzRow { check: "lipschitz", seed, dim, result: rep.lipschitz },
            FuzzRow { check: "tangent", seed, dim, result: rep.tangent },
        ])
    });
    let mut rows = Vec::with_capacity(2 * trials);
    for r in per_trial {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Berezin splitting on random PSD operators and half-dimension projections.
pub fn fuzz_berezin(trials: usize, max_dim: usize, base_seed: u64, exec: Execution) -> Result<Vec<FuzzRow>> {
    exec.map_range(trials, |i| {
        let seed = trial_seed(base_seed, i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.random_range(2..=max_dim.max(2));
        let t = random_psd(dim, &mut rng);
        let p = random_projection(dim, dim / 2, &mut rng)?;
        Ok(FuzzRow { check: "berezin", seed, dim, result: berezin_split(&t, &p)? })
    })
    .into_iter()
    .collect()
}

/// Spectral truncation `P̃_E` of the receive variable at cutoff `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationPlan {
    pub energy: f64,
    pub order: u32,
    /// `dim P̃_E`, the six-component Weyl count.
    pub dim: usize,
    /// Measured `‖(1 − P̃_E)𝒮‖_HS`.
    pub tail: f64,
    /// `E^{−n} ‖𝒮_n‖_HS`.
    pub tail_bound: f64,
    pub spread_norm: f64,
    pub holds: bool,
}

/// Slack for `tail ≤ tail_bound`, relative to `‖𝒮‖_HS`.
pub const TAIL_SLACK: f64 = 1e-8;

pub fn plan_truncation(
    grid: &QuadratureGrid,
    samples: &SpreadSamples,
    sh: &ShBasis,
    energy: f64,
    order: u32,
) -> Result<TruncationPlan> {
    if !(energy >= 0.0) || !energy.is_finite() {
        return Err(invalid(format!("cutoff must be a nonnegative number, got {energy}")));
    }
    let needed = sphere_degree_cover(energy);
    if needed > sh.l_max() {
        return Err(invalid(format!(
            "cutoff {energy} needs harmonics up to degree {needed}, basis stops at {}",
            sh.l_max()
        )));
    }
    let lifted = spread::apply_lb_power(samples, grid, sh, order)?;
    let spread_norm = spread::hs_norm(samples, grid)?;
    let kept = spread::project_left(samples, grid, sh, energy)?;
    let rest = SpreadSamples::from_matrix(grid, samples.raw() - kept.raw())?;
    let tail = spread::hs_norm(&rest, grid)?;
    let tail_bound = energy.powi(-(order as i32)) * spread::hs_norm(&lifted, grid)?;
    let dim = weyl_count(energy).six_component_dim;
    let in_basis = sh.eigenvalues().iter().filter(|&&ev| ev <= energy).count() * COMPONENTS;
    debug_assert_eq!(dim, in_basis);
    Ok(TruncationPlan {
        energy,
        order,
        dim,
        tail,
        tail_bound,
        spread_norm,
        holds: tail <= tail_bound + TAIL_SLACK * spread_norm,
    })
}

/// Smallest degree whose harmonics all exceed `energy`, minus one.
fn sphere_degree_cover(energy: f64) -> usize {
    crate::sphere::max_degree_below(energy).unwrap_or(0)
}

/// Inputs for the truncated capacity bound: operators of one array pair.
pub struct BoundInputs<'a> {
    pub grid: &'a QuadratureGrid,
    pub sh: &'a ShBasis,
    pub spread: &'a BlockOperator,
    pub a_t: &'a BlockOperator,
    pub a_r: &'a BlockOperator,
    pub m: usize,
    pub ratio: f64,
    pub snr: SnrConfig,
    /// Exact capacity of the configuration, in bits.
    pub actual_bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityBound {
    pub actual_bits: f64,
    pub bound_bits: f64,
    /// Capacity with `𝒮` replaced by `P̃_E 𝒮`.
    pub truncated_bits: f64,
    /// `a · max|d_jk| · max|φ_jk|`.
    pub c2: f64,
    /// `2 (E_T/N_0) (‖A_T‖/M) (‖A_R‖/M) ‖𝒮‖_HS`.
    pub c1: f64,
    pub finite_rank_term: f64,
    pub tail_term: f64,
    pub holds: bool,
}

/// `C ≤ [N ln(1 + C₂ M N²) + C₁ M · tail_bound] / ln 2`.
///
/// `P̃_E 𝒮 = Σ_j |ψ_j⟩⟨𝒮*ψ_j|` over the harmonic basis `ψ_j` of `P̃_E`,
/// so the truncated problem is finite rank with `f = ψ`, `c = 1`,
/// `g = 𝒮*ψ`.
pub fn truncated_capacity_bound(plan: &TruncationPlan, inputs: &BoundInputs<'_>) -> Result<CapacityBound> {
    let BoundInputs { grid, sh, spread, a_t, a_r, m, ratio, snr, actual_bits } = *inputs;
    if m == 0 {
        return Err(invalid("M must be positive"));
    }
    let kept: Vec<usize> = (0..sh.len()).filter(|&c| sh.eigenvalues()[c] <= plan.energy).collect();
    let n = kept.len() * COMPONENTS;
    if n != plan.dim {
        return Err(invalid("truncation plan does not match the harmonic basis"));
    }
    let w = grid.weights();
    let psi = Mat::from_fn(grid.block_dim(), n, |r, col| {
        let (node, comp) = (r / COMPONENTS, r % COMPONENTS);
        if comp == col % COMPONENTS {
            C64::new(sh.values()[(node, kept[col / COMPONENTS])] * w[node].sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let g = spread.adjoint_mul(&psi);
    let mm = m as f64;
    let mut d = psi.adjoint() * a_r.mul(&psi);
    d *= faer::Scale(C64::new(snr.ratio() / (ratio * mm), 0.0));
    let mut phi = g.adjoint() * a_t.mul(&g);
    phi *= faer::Scale(C64::new(1.0 / mm, 0.0));
    let data = FiniteRankData {
        d: linalg::hermitian_part(d.as_ref()),
        phi: linalg::hermitian_part(phi.as_ref()),
        h_norms: Vec::new(),
        m,
        m_r: capacity::receive_count(m, ratio)?,
        ratio,
        resolution: grid.resolution(),
        snr,
    };
    let truncated_bits = if n == 0 { 0.0 } else { capacity::capacity_finite_rank(&data)?.bits };

    let c2 = ratio * linalg::max_abs(data.d.as_ref()) * linalg::max_abs(data.phi.as_ref());
    let nf = n as f64;
    let finite_rank_term = nf * (c2 * mm * nf * nf).ln_1p();
    let c1 = 2.0 * snr.ratio() * operator_norm(a_t)? / mm * operator_norm(a_r)? / mm * spread.frobenius();
    let tail_term = c1 * mm * plan.tail_bound;
    let bound_bits = (finite_rank_term + tail_term) / std::f64::consts::LN_2;
    Ok(CapacityBound {
        actual_bits,
        bound_bits,
        truncated_bits,
        c2,
        c1,
        finite_rank_term,
        tail_term,
        holds: actual_bits <= bound_bits * (1.0 + 1e-12) && plan.holds,
    })
}

/// Spectral norm of a PSD operator.
pub fn operator_norm(op: &BlockOperator) -> Result<f64> {
    let f = psd_gram_factor(op)?;
    Ok(linalg::singular_values(f.as_ref())?.first().map_or(0.0, |s| s * s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::antenna::{sample_pattern, unit_polarization, AntennaArray, BoxRegion, FillScheme, Side};
    use crate::capacity::Pipeline;
    use crate::operators;
    use crate::sphere::{build_grid, build_sh_basis, Direction};
    use crate::spread::{sample_smooth, SmoothSpread};
    use std::f64::consts::{LN_2, PI};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn diag(v: &[f64]) -> CMat {
        Mat::from_fn(v.len(), v.len(), |i, j| if i == j { c(v[i]) } else { c(0.0) })
    }

    #[test]
    fn equal_operators_are_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_psd(7, &mut rng);
        let r = check_trace_inequalities(&t, &t).unwrap();
        assert!(r.lipschitz.margin.abs() < 1e-14 && r.tangent.margin.abs() < 1e-12);
        assert!(r.pass());
    }

    #[test]
    fn hand_evaluated_pair() {
        let r = check_trace_inequalities(&diag(&[0.0]), &diag(&[1.0])).unwrap();
        assert!((r.lipschitz.lhs - LN_2).abs() < 1e-15 && (r.lipschitz.rhs - 1.0).abs() < 1e-15);
        assert!((r.tangent.lhs - LN_2).abs() < 1e-15 && (r.tangent.rhs - 1.0).abs() < 1e-15);
        assert!(r.pass());
    }

    #[test]
    fn rejects_non_psd() {
        assert!(check_trace_inequalities(&diag(&[-1.0]), &diag(&[1.0])).is_err());
        assert!(check_trace_inequalities(&diag(&[1.0]), &diag(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn fuzz_passes_and_is_deterministic() {
        let rows = fuzz_trace_inequalities(60, 40, 7, Execution::Sequential).unwrap();
        assert!(rows.iter().all(|r| r.result.pass));
        let again = fuzz_trace_inequalities(60, 40, 7, Execution::Parallel).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn berezin_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_psd(6, &mut rng);
        let r = berezin_split(&t, &diag(&[1.0; 6])).unwrap();
        assert!(r.margin.abs() < 1e-12);
        let block = diag(&[0.3, 2.0, 0.0, 5.0]);
        let p = diag(&[1.0, 0.0, 1.0, 0.0]);
        assert!(berezin_split(&block, &p).unwrap().margin.abs() < 1e-10);
        assert!(berezin_split(&block, &diag(&[0.5, 0.0, 1.0, 0.0])).is_err());
    }

    #[test]
    fn berezin_fuzz_has_strict_margins() {
        let rows = fuzz_berezin(100, 30, 11, Execution::Sequential).unwrap();
        assert!(rows.iter().all(|r| r.result.pass));
        assert!(rows.iter().any(|r| r.result.margin > 1e-6));
    }

    fn smooth(grid: &QuadratureGrid, kappa: f64) -> SpreadSamples {
        let sp = SmoothSpread::new(
            kappa,
            SmoothSpread::matrix_unit(0, 0, c(1.0)),
            Direction::new(1.1, 0.3).unwrap(),
            Direction::new(2.0, 4.0).unwrap(),
        )
        .unwrap();
        sample_smooth(&sp, grid)
    }

    #[test]
    fn truncation_plan_examples() {
        let grid = build_grid(18).unwrap();
        let sh = build_sh_basis(&grid, 17).unwrap();
        let s = smooth(&grid, 5.0);
        let p = plan_truncation(&grid, &s, &sh, 30.0, 2).unwrap();
        assert!(p.holds && p.tail > 0.0, "{p:?}");
        assert_eq!(p.dim, weyl_count(30.0).six_component_dim);
        let p0 = plan_truncation(&grid, &s, &sh, 10.0, 0).unwrap();
        assert!(p0.holds && (p0.tail_bound - p0.spread_norm).abs() < 1e-12 * p0.spread_norm);
        // A constant kernel lives entirely in l = 0.
        let flat = smooth(&grid, 0.0);
        let p = plan_truncation(&grid, &flat, &sh, 2.5, 3).unwrap();
        assert!(p.tail < 1e-10 * p.spread_norm && p.holds);
    }

    #[test]
    fn truncation_requires_covering_basis() {
        let grid = build_grid(8).unwrap();
        let sh = build_sh_basis(&grid, 3).unwrap();
        assert!(plan_truncation(&grid, &smooth(&grid, 0.0), &sh, 30.0, 1).is_err());
    }

    fn arrays(m: usize) -> (AntennaArray, AntennaArray) {
        let region = BoxRegion::centered_cube(0.5).unwrap();
        let mk =
            |side| AntennaArray::filled(region, m, FillScheme::Lattice, unit_polarization(0), 2.0 * PI, side).unwrap();
        (mk(Side::Tx), mk(Side::Rx))
    }

    #[test]
    fn capacity_bound_holds_for_smooth_spread() {
        let grid = build_grid(12).unwrap();
        let sh = build_sh_basis(&grid, 11).unwrap();
        let s = smooth(&grid, 5.0);
        let snr = SnrConfig::new(1.0, 1.0).unwrap();
        let pipe = Pipeline::new(grid.clone(), s.clone(), None, snr).unwrap();
        let m = 64;
        let (tx, rx) = arrays(m);
        let ev = pipe.evaluate(&tx, &rx, &[crate::capacity::Route::Direct], Execution::Sequential).unwrap();
        let energy = (m as f64).powf(0.25);
        let plan = plan_truncation(&grid, &s, &sh, energy, 2).unwrap();
        let inputs = BoundInputs {
            grid: &grid,
            sh: &sh,
            spread: &pipe.spread_op,
            a_t: &ev.a_t,
            a_r: &ev.a_r,
            m,
            ratio: 1.0,
            snr,
            actual_bits: ev.results[0].bits,
        };
        let b = truncated_capacity_bound(&plan, &inputs).unwrap();
        assert!(b.holds && b.actual_bits > 0.0, "{b:?}");
        assert!(b.truncated_bits <= b.finite_rank_term / LN_2 + 1e-12);
    }

    #[test]
    fn zero_spread_bound_is_zero() {
        let grid = build_grid(6).unwrap();
        let sh = build_sh_basis(&grid, 5).unwrap();
        let zero = SpreadSamples::zero(&grid);
        let s_op = operators::lift_spread(&grid, &zero).unwrap();
        let (tx, rx) = arrays(8);
        let a_t = operators::build_A(&grid, &sample_pattern(&tx, &grid, Execution::Sequential)).unwrap();
        let a_r = operators::build_A(&grid, &sample_pattern(&rx, &grid, Execution::Sequential)).unwrap();
        let plan = plan_truncation(&grid, &zero, &sh, 6.0, 1).unwrap();
        let inputs = BoundInputs {
            grid: &grid,
            sh: &sh,
            spread: &s_op,
            a_t: &a_t,
            a_r: &a_r,
            m: 8,
            ratio: 1.0,
            snr: SnrConfig::new(1.0, 1.0).unwrap(),
            actual_bits: 0.0,
        };
        let b = truncated_capacity_bound(&plan, &inputs).unwrap();
        assert_eq!((b.actual_bits, b.bound_bits), (0.0, 0.0));
    }
}
