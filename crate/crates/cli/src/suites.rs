//! Property suites behind `mimo verify` and `mimo weyl`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mimo_core::analysis::{fuzz_berezin, fuzz_trace_inequalities, FuzzRow};
use mimo_core::antenna::{unit_polarization, AntennaArray, BoxRegion, FillScheme, Side};
use mimo_core::capacity::{Evaluation, Pipeline, Route, SnrConfig};
use mimo_core::csv::{num, Table};
use mimo_core::operators::{build_B, build_K, resolvent_trace_identity, BlockOperator};
use mimo_core::sphere::{build_grid, weyl_count};
use mimo_core::spread::ScattererSet;
use mimo_core::{Execution, Result, C64};

use crate::CliError;

pub const FUZZ_TRIALS: usize = 200;
pub const FUZZ_MAX_DIM: usize = 40;
pub const IDENTITY_CONFIGS: usize = 3;
pub const IDENTITY_POINTS: usize = 8;
pub const IDENTITY_RESOLUTION: usize = 12;
/// `|lhs − rhs| ≤ IDENTITY_TOL·(1 + |lhs|)`.
pub const IDENTITY_TOL: f64 = 1e-6;
pub const WEYL_ENERGIES: [f64; 3] = [100.0, 1000.0, 10000.0];
/// Energy at which the Weyl ratios are asserted, with their brackets.
pub const WEYL_CHECK_ENERGY: f64 = 10000.0;
pub const WEYL_SCALAR_BRACKET: (f64, f64) = (0.99, 1.01);
pub const WEYL_SIX_BRACKET: (f64, f64) = (5.94, 6.06);

pub struct SuiteReport {
    pub table: Table,
    pub line: String,
    pub pass: bool,
}

fn in_bracket(x: f64, (lo, hi): (f64, f64)) -> bool {
    (lo..=hi).contains(&x)
}

pub fn weyl_table(energies: &[f64]) -> std::result::Result<Table, CliError> {
    let mut t = Table::new(&["E", "scalar_dim", "scalar_ratio", "six_component_dim", "six_component_ratio"]);
    for &e in energies {
        if !(e.is_finite() && e > 0.0) {
            return Err(CliError::Usage(format!("energy must be positive, got {e}")));
        }
        let w = weyl_count(e);
        t.push(vec![
            num(e),
            w.scalar_dim.to_string(),
            num(w.scalar_dim as f64 / e),
            w.six_component_dim.to_string(),
            num(w.six_component_dim as f64 / e),
        ]);
    }
    Ok(t)
}

pub fn weyl_suite() -> std::result::Result<SuiteReport, CliError> {
    let table = weyl_table(&WEYL_ENERGIES)?;
    let w = weyl_count(WEYL_CHECK_ENERGY);
    let scalar = w.scalar_dim as f64 / WEYL_CHECK_ENERGY;
    let six = w.six_component_dim as f64 / WEYL_CHECK_ENERGY;
    let pass = in_bracket(scalar, WEYL_SCALAR_BRACKET) && in_bracket(six, WEYL_SIX_BRACKET);
    let line = format!("weyl: scalar {scalar:.6}, six-component {six:.6} at E = {WEYL_CHECK_ENERGY}");
    Ok(SuiteReport { table, line, pass })
}

pub fn inequality_suite(seed: u64, exec: Execution) -> Result<SuiteReport> {
    let mut rows = fuzz_trace_inequalities(FUZZ_TRIALS, FUZZ_MAX_DIM, seed, exec)?;
    rows.extend(fuzz_berezin(FUZZ_TRIALS, FUZZ_MAX_DIM, seed, exec)?);
    let failures = rows.iter().filter(|r| !r.result.pass).count();
    let worst = rows.iter().map(|r| r.result.margin / r.result.scale).fold(f64::INFINITY, f64::min);
    let line = format!("inequalities: {} checks, {failures} failures, worst relative margin {worst:.3e}", rows.len());
    Ok(SuiteReport { table: FuzzRow::table(&rows), line, pass: failures == 0 })
}

/// A small random finite-rank scene: `N ≤ 4` scatterers, `M_T, M_R ≤ 8`.
#[derive(Debug, Clone)]
pub struct RandomScene {
    pub seed: u64,
    pub pipeline: Pipeline,
    pub tx: AntennaArray,
    pub rx: AntennaArray,
}

impl RandomScene {
    pub fn new(seed: u64, resolution: usize) -> Result<Self> {
        let grid = build_grid(resolution)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rank = rng.random_range(1..=4);
        let l_max = rng.random_range(1..=3.min(resolution - 1));
        let component = rng.random_range(0..6);
        let m_t = rng.random_range(1..=8);
        let m_r = rng.random_range(1..=8);
        let side = rng.random_range(0.25..1.0);
        let k = rng.random_range(2.0..8.0);
        let snr = SnrConfig::new(10f64.powf(rng.random_range(-1.0..1.0)), 1.0)?;
        let set = ScattererSet::random(rank, l_max, &[component], &mut rng)?;
        let region = BoxRegion::centered_cube(side)?;
        let pol = unit_polarization(component);
        let tx = AntennaArray::filled(region, m_t, FillScheme::Halton, pol, k, Side::Tx)?;
        let rx = AntennaArray::filled(region, m_r, FillScheme::Lattice, pol, k, Side::Rx)?;
        let pipeline = Pipeline::finite_rank(grid, set, snr)?;
        Ok(Self { seed, pipeline, tx, rx })
    }

    pub fn evaluate(&self, routes: &[Route], exec: Execution) -> Result<Evaluation> {
        self.pipeline.evaluate(&self.tx, &self.rx, routes, exec)
    }
}

/// Evaluation points on the circle of radius `2·max(‖B‖, ‖𝒦‖)`, offset
/// from the real axis.
pub fn circle_points(radius: f64, count: usize) -> Vec<C64> {
    (0..count)
        .map(|j| {
            let angle = std::f64::consts::PI * (2 * j + 1) as f64 / count as f64;
            C64::from_polar(radius, angle)
        })
        .collect()
}

pub struct IdentityRow {
    pub seed: u64,
    pub z: C64,
    pub lhs: C64,
    pub rhs: C64,
    pub pass: bool,
}

/// Resolvent trace identity of one scene at `IDENTITY_POINTS` points.
pub fn identity_rows(scene: &RandomScene, exec: Execution) -> Result<Vec<IdentityRow>> {
    let eval = scene.evaluate(&[], exec)?;
    let b = build_B(&eval.h);
    let k: BlockOperator = build_K(&eval.a_t, &eval.a_r, &scene.pipeline.spread_op)?;
    let norm_b = mimo_core::linalg::eigvalsh(b.as_ref())?.into_iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let norm_k = k.eigenvalues()?.into_iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // A zero channel still needs a nonzero circle.
    let radius = 2.0 * norm_b.max(norm_k).max(1e-3);
    circle_points(radius, IDENTITY_POINTS)
        .into_iter()
        .map(|z| {
            let tr = resolvent_trace_identity(&b, &k, z)?;
            let pass = (tr.lhs - tr.rhs).norm() <= IDENTITY_TOL * (1.0 + tr.lhs.norm());
            Ok(IdentityRow { seed: scene.seed, z, lhs: tr.lhs, rhs: tr.rhs, pass })
        })
        .collect()
}

pub fn identity_table(rows: &[IdentityRow]) -> Table {
    let mut t = Table::new(&["seed", "z_re", "z_im", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "abs_error", "pass"]);
    for r in rows {
        t.push(vec![
            r.seed.to_string(),
            num(r.z.re),
            num(r.z.im),
            num(r.lhs.re),
            num(r.lhs.im),
            num(r.rhs.re),
            num(r.rhs.im),
            num((r.lhs - r.rhs).norm()),
            r.pass.to_string(),
        ]);
    }
    t
}

pub fn identity_suite(seed: u64, resolution: usize, exec: Execution) -> Result<SuiteReport> {
    let mut rows = Vec::new();
    for i in 0..IDENTITY_CONFIGS {
        let scene = RandomScene::new(seed.wrapping_add(i as u64), resolution)?;
        rows.extend(identity_rows(&scene, exec)?);
    }
    let failures = rows.iter().filter(|r| !r.pass).count();
    let line = format!("identity: {} points, {failures} failures", rows.len());
    Ok(SuiteReport { table: identity_table(&rows), line, pass: failures == 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weyl_suite_passes_and_lists_three_energies() {
        let r = weyl_suite().unwrap();
        assert!(r.pass);
        assert_eq!(r.table.rows().len(), 3);
        assert_eq!(r.table.rows()[0][1], "100");
    }

    #[test]
    fn circle_points_avoid_real_axis() {
        let pts = circle_points(3.0, 8);
        assert_eq!(pts.len(), 8);
        for z in pts {
            assert!((z.norm() - 3.0).abs() < 1e-12);
            assert!(z.im.abs() > 1.0);
        }
    }

    #[test]
    fn scenes_respect_size_limits() {
        for seed in 0..20 {
            let s = RandomScene::new(seed, 6).unwrap();
            assert!((1..=8).contains(&s.tx.len()) && (1..=8).contains(&s.rx.len()));
            assert!(s.pipeline.scatterers.as_ref().unwrap().rank_bound() <= 4);
        }
    }
}
