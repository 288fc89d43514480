//! Property tests for the model's invariants, driven by proptest.

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use mimo_core::analysis::{berezin_split, check_trace_inequalities, plan_truncation, random_projection, random_psd};
use mimo_core::antenna::{fill_volume, sample_pattern, unit_polarization, AntennaArray, BoxRegion, FillScheme, Side};
use mimo_core::asymptotics::fit_growth;
use mimo_core::capacity::{build_finite_rank_data, capacity_direct, capacity_finite_rank, Pipeline, Route, SnrConfig};
use mimo_core::linalg::{eigvalsh, singular_values, thin_left_svd, CMat};
use mimo_core::operators::{build_A, build_K, ChannelMatrix};
use mimo_core::sphere::{build_grid, build_sh_basis, max_degree_below, weyl_count, Direction};
use mimo_core::spread::{apply_lb_power, hs_norm, sample_finite_rank, sample_smooth, ScattererSet, SmoothSpread};
use mimo_core::{Execution, C64};

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMat {
    CMat::from_fn(rows, cols, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> CMat {
    thin_left_svd(gaussian(n, n, rng).as_ref()).unwrap().0
}

fn array(region: BoxRegion, m: usize, scheme: FillScheme, comp: usize, side: Side) -> AntennaArray {
    AntennaArray::filled(region, m, scheme, unit_polarization(comp), 2.0 * PI, side).unwrap()
}

fn scheme() -> impl Strategy<Value = FillScheme> {
    prop_oneof![Just(FillScheme::Lattice), Just(FillScheme::Halton)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn grid_weights_are_positive_and_sum_to_sphere_area(res in 2usize..40) {
        let grid = build_grid(res).unwrap();
        prop_assert!(grid.weights().iter().all(|&w| w > 0.0));
        let total: f64 = grid.weights().iter().sum();
        prop_assert!((total - 4.0 * PI).abs() <= 1e-10);
    }

    #[test]
    fn harmonics_are_orthonormal_under_quadrature(res in 2usize..14) {
        let grid = build_grid(res).unwrap();
        let sh = build_sh_basis(&grid, res - 1).unwrap();
        let w = grid.weights();
        for a in 0..sh.len() {
            for b in 0..=a {
                let ip: f64 = (0..grid.len()).map(|q| w[q] * sh.values()[(q, a)] * sh.values()[(q, b)]).sum();
                let expected = if a == b { 1.0 } else { 0.0 };
                prop_assert!((ip - expected).abs() <= 1e-10, "({a},{b}) -> {ip}");
            }
        }
    }

    #[test]
    fn weyl_count_matches_enumeration(energy in 0.0f64..20000.0) {
        let brute: usize = (0..200usize).filter(|l| (l * (l + 1)) as f64 <= energy).map(|l| 2 * l + 1).sum();
        let w = weyl_count(energy);
        prop_assert_eq!(w.scalar_dim, brute);
        prop_assert_eq!(w.six_component_dim, 6 * brute);
    }

    #[test]
    fn fills_stay_inside_the_box(m in 1usize..600, scheme in scheme(), side in 0.1f64..3.0, cx in -1.0f64..1.0) {
        let region = BoxRegion::new([cx - side / 2.0, -side / 2.0, 0.0], [cx + side / 2.0, side / 2.0, side]).unwrap();
        let pts = fill_volume(&region, m, scheme).unwrap();
        prop_assert_eq!(pts.len(), m);
        prop_assert!(pts.iter().all(|p| region.contains(p)));
    }

    #[test]
    fn halton_fills_are_nested(m in 1usize..300, extra in 1usize..300) {
        let region = BoxRegion::centered_cube(0.5).unwrap();
        let small = fill_volume(&region, m, FillScheme::Halton).unwrap();
        let large = fill_volume(&region, m + extra, FillScheme::Halton).unwrap();
        prop_assert_eq!(&large[..m], &small[..]);
    }

    #[test]
    fn pattern_modulus_is_polarization_modulus(m in 1usize..12, comp in 0usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let region = BoxRegion::centered_cube(rng.random_range(0.1..2.0)).unwrap();
        let tx = array(region, m, FillScheme::Halton, comp, Side::Tx);
        let grid = build_grid(4).unwrap();
        let p = sample_pattern(&tx, &grid, Execution::Sequential);
        for r in 0..p.raw().nrows() {
            let expected = if r % 6 == comp { 1.0 } else { 0.0 };
            for c in 0..m {
                prop_assert!((p.raw()[(r, c)].norm() - expected).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn array_operators_have_nonnegative_quadratic_forms(m in 1usize..10, seed in any::<u64>(), side in prop_oneof![Just(Side::Tx), Just(Side::Rx)]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = build_grid(5).unwrap();
        let arr = array(BoxRegion::centered_cube(0.7).unwrap(), m, FillScheme::Halton, rng.random_range(0..6), side);
        let a = build_A(&grid, &sample_pattern(&arr, &grid, Execution::Sequential)).unwrap();
        for _ in 0..100 {
            let psi: Vec<C64> = (0..grid.block_dim()).map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
            let form = a.quadratic_form(&grid, &psi).unwrap();
            prop_assert!(form.re >= -1e-12 && form.im.abs() <= 1e-9 * (1.0 + form.re));
        }
    }

    #[test]
    fn finite_rank_samples_obey_norm_and_rank_bounds(n in 1usize..4, l_max in 0usize..3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = ScattererSet::random(n, l_max, &[0, 3], &mut rng).unwrap();
        let grid = build_grid(4).unwrap();
        let s = sample_finite_rank(&set, &grid).unwrap();
        prop_assert!(hs_norm(&s, &grid).unwrap() <= set.dyad_norm_bound() * (1.0 + 1e-12));
        let sv = singular_values(s.raw().as_ref()).unwrap();
        prop_assert!(sv.iter().skip(n).all(|&x| x <= 1e-9 * sv[0]));
    }

    #[test]
    fn laplacian_powers_compose(n in 1usize..3, l_max in 0usize..4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = ScattererSet::random(n, l_max, &[1], &mut rng).unwrap();
        let grid = build_grid(6).unwrap();
        let sh = build_sh_basis(&grid, 5).unwrap();
        let s = sample_finite_rank(&set, &grid).unwrap();
        let twice = apply_lb_power(&apply_lb_power(&s, &grid, &sh, 1).unwrap(), &grid, &sh, 1).unwrap();
        let once = apply_lb_power(&s, &grid, &sh, 2).unwrap();
        let diff = mimo_core::spread::SpreadSamples::from_matrix(&grid, twice.raw() - once.raw()).unwrap();
        let scale = hs_norm(&once, &grid).unwrap();
        prop_assert!(hs_norm(&diff, &grid).unwrap() <= 1e-8 * scale.max(1e-300));
    }

    #[test]
    fn capacity_is_unitarily_invariant(rows in 1usize..8, cols in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = gaussian(rows, cols, &mut rng);
        let u = random_unitary(rows, &mut rng);
        let v = random_unitary(cols, &mut rng);
        let snr = SnrConfig::new(2.0, 1.0).unwrap();
        let a = capacity_direct(&ChannelMatrix::new(h.clone()).unwrap(), snr, 1).unwrap().bits;
        let b = capacity_direct(&ChannelMatrix::new(&(&u * &h) * &v).unwrap(), snr, 1).unwrap().bits;
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a));
    }

    #[test]
    fn capacity_increases_with_snr(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>(), lo in 0.01f64..10.0, factor in 1.01f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = ChannelMatrix::new(gaussian(rows, cols, &mut rng)).unwrap();
        let a = capacity_direct(&h, SnrConfig::new(lo, 1.0).unwrap(), 1).unwrap().bits;
        let b = capacity_direct(&h, SnrConfig::new(lo * factor, 1.0).unwrap(), 1).unwrap().bits;
        prop_assert!(b > a);
    }

    #[test]
    fn trace_inequalities_hold(seed in any::<u64>(), dim in 1usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t1 = random_psd(dim, &mut rng);
        let t2 = random_psd(dim, &mut rng);
        prop_assert!(check_trace_inequalities(&t1, &t2).unwrap().pass());
        if dim >= 2 {
            let p = random_projection(dim, rng.random_range(1..dim), &mut rng).unwrap();
            prop_assert!(berezin_split(&t1, &p).unwrap().pass);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn routes_agree_and_obey_the_growth_bound(n in 1usize..4, m_t in 1usize..7, m_r in 1usize..7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = ScattererSet::random(n, 2, &[2], &mut rng).unwrap();
        let grid = build_grid(8).unwrap();
        let snr = SnrConfig::new(rng.random_range(0.1..10.0), 1.0).unwrap();
        let pipe = Pipeline::finite_rank(grid, set.clone(), snr).unwrap();
        let region = BoxRegion::centered_cube(0.6).unwrap();
        let tx = array(region, m_t, FillScheme::Halton, 2, Side::Tx);
        let rx = array(region, m_r, FillScheme::Lattice, 2, Side::Rx);
        let ev = pipe.evaluate(&tx, &rx, &Route::ALL, Execution::Sequential).unwrap();
        let bits: Vec<f64> = ev.results.iter().map(|r| r.bits).collect();
        for b in &bits[1..] {
            prop_assert!((b - bits[0]).abs() <= 1e-6 * bits[0].abs().max(1e-12), "{bits:?}");
        }
        let k = build_K(&ev.a_t, &ev.a_r, &pipe.spread_op).unwrap();
        let kv = eigvalsh(k.matrix().as_ref()).unwrap();
        let kmax = kv.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        prop_assert!(kv.iter().all(|&v| v >= -1e-10 * kmax));
        let rank_h = singular_values(ev.h.entries().as_ref()).unwrap();
        let s0 = rank_h.first().copied().unwrap_or(0.0);
        let numerical_rank = rank_h.iter().filter(|&&s| s > 1e-9 * s0).count();
        prop_assert!(numerical_rank <= m_t.min(m_r).min(n));

        let ratio = m_r as f64 / m_t as f64;
        let data = build_finite_rank_data(&pipe.grid, &set, &ev.a_t, &ev.a_r, m_t, m_r, ratio, snr).unwrap();
        for mat in [&data.d, &data.phi] {
            let vals = eigvalsh(mat.as_ref()).unwrap();
            let max = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            prop_assert!(vals.iter().all(|&v| v >= -1e-10 * max));
        }
        let c = capacity_finite_rank(&data).unwrap().bits;
        prop_assert!(c <= data.log_growth_bound().unwrap() * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn truncation_tail_bound_holds_on_smooth_family(kappa in 0.0f64..5.0, theta in 0.0f64..PI, phi in 0.0f64..6.0, energy in 2.0f64..100.0, order in 0u32..4) {
        let grid = build_grid(12).unwrap();
        let sh = build_sh_basis(&grid, 11).unwrap();
        let sp = SmoothSpread::new(
            kappa,
            SmoothSpread::matrix_unit(1, 4, C64::new(0.3, -0.8)),
            Direction::new(theta, phi).unwrap(),
            Direction::new(PI - theta, phi + 1.0).unwrap(),
        )
        .unwrap();
        let samples = sample_smooth(&sp, &grid);
        let plan = plan_truncation(&grid, &samples, &sh, energy, order).unwrap();
        prop_assert!(plan.holds, "tail {} bound {}", plan.tail, plan.tail_bound);
        prop_assert_eq!(plan.dim, weyl_count(energy).six_component_dim);
        prop_assert!(max_degree_below(energy).is_some());
    }
}

#[test]
fn weyl_ratios_tighten_with_energy() {
    for (energy, lo, hi) in [(100.0, 0.8, 1.2), (1000.0, 0.95, 1.05), (10000.0, 0.99, 1.01)] {
        let r = weyl_count(energy).scalar_dim as f64 / energy;
        assert!((lo..=hi).contains(&r), "E = {energy}: {r}");
    }
    let six = weyl_count(10000.0).six_component_dim as f64 / 10000.0;
    assert!((5.94..=6.06).contains(&six));
}

#[test]
fn growth_fits_are_exact_on_model_curves() {
    let log_rows: Vec<(usize, f64)> = [8, 16, 32, 64].iter().map(|&m| (m, 3.0 * (m as f64).ln())).collect();
    assert!((fit_growth(&log_rows, 0).unwrap().slope - 3.0).abs() <= 1e-12);
    let power_rows: Vec<(usize, f64)> = [8, 16, 32, 64].iter().map(|&m| (m, (m as f64).powf(0.4))).collect();
    let fit = fit_growth(&power_rows, 0).unwrap();
    for (_, e) in fit.exponents {
        assert!((e.unwrap() - 0.4).abs() <= 1e-12);
    }
}

#[test]
fn sweeps_are_deterministic() {
    use mimo_core::asymptotics::{run_sweep, Regime, SweepSpec};
    let spec = SweepSpec::default_for(Regime::TxSaturation);
    let a = run_sweep(&spec, Execution::Sequential).unwrap();
    let b = run_sweep(&spec, Execution::default()).unwrap();
    assert_eq!(a.rows_table().render(), b.rows_table().render());
    assert_eq!(a.summary_table().render(), b.summary_table().render());
}
