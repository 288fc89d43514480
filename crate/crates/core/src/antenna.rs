//! Antenna arrays filling a fixed box, their plane-wave radiation patterns,
//! and the Riemann-sum kernels `(1/M) Σ_m a^{im}(Ω) conj(a^{jm}(Ω'))` together
//! with their continuum limit.

use faer::Mat;

use crate::error::invalid;
use crate::exec::Execution;
use crate::linalg::{self, CMat};
use crate::sphere::{dot, QuadratureGrid};
use crate::{Error, Result, C64, COMPONENTS};

pub type Polarization = [C64; COMPONENTS];
pub type Point = [f64; 3];

/// Unit polarization along field component `i`.
pub fn unit_polarization(i: usize) -> Polarization {
    let mut p = [C64::new(0.0, 0.0); COMPONENTS];
    p[i] = C64::new(1.0, 0.0);
    p
}

fn polarization_norm(p: &Polarization) -> f64 {
    p.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Tx,
    Rx,
}

/// Axis-aligned box, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxRegion {
    pub min: Point,
    pub max: Point,
}

impl BoxRegion {
    pub fn new(min: Point, max: Point) -> Result<Self> {
        for d in 0..3 {
            if !(max[d] - min[d] > 0.0) || !min[d].is_finite() || !max[d].is_finite() {
                return Err(invalid(format!("box side {d} is degenerate: [{}, {}]", min[d], max[d])));
            }
        }
        Ok(Self { min, max })
    }

    /// Cube of the given side centered at the origin.
    pub fn centered_cube(side: f64) -> Result<Self> {
        Self::new([-side / 2.0; 3], [side / 2.0; 3])
    }

    pub fn sides(&self) -> Point {
        [0, 1, 2].map(|d| self.max[d] - self.min[d])
    }

    pub fn center(&self) -> Point {
        [0, 1, 2].map(|d| 0.5 * (self.max[d] + self.min[d]))
    }

    pub fn volume(&self) -> f64 {
        self.sides().iter().product()
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|d| {
            let slack = 1e-12 * (self.max[d] - self.min[d]);
            p[d] >= self.min[d] - slack && p[d] <= self.max[d] + slack
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillScheme {
    /// Cell-centered regular lattice.
    Lattice,
    /// Halton (2, 3, 5) low-discrepancy points; prefixes are nested.
    Halton,
}

/// Places `m` antenna positions inside `region`.
///
/// The lattice uses the most balanced exact factorization `n₁·n₂·n₃ = m`;
/// when every factorization is too elongated (aspect ratio above 4) it falls
/// back to the smallest enclosing cube lattice truncated to `m` points.
pub fn fill_volume(region: &BoxRegion, m: usize, scheme: FillScheme) -> Result<Vec<Point>> {
    BoxRegion::new(region.min, region.max)?;
    if m == 0 {
        return Err(invalid("antenna count must be positive"));
    }
    let sides = region.sides();
    let unit_points: Vec<Point> = match scheme {
        FillScheme::Lattice => lattice_unit_points(m),
        FillScheme::Halton => {
            (1..=m).map(|i| [radical_inverse(i, 2), radical_inverse(i, 3), radical_inverse(i, 5)]).collect()
        }
    };
    Ok(unit_points.into_iter().map(|u| [0, 1, 2].map(|d| region.min[d] + u[d] * sides[d])).collect())
}

fn lattice_dims(m: usize) -> Option<[usize; 3]> {
    let mut best: Option<([usize; 3], f64)> = None;
    for a in 1..=m {
        if a * a * a > m {
            break;
        }
        if !m.is_multiple_of(a) {
            continue;
        }
        let rest = m / a;
        for b in a..=rest {
            if b * b > rest {
                break;
            }
            if !rest.is_multiple_of(b) {
                continue;
            }
            let c = rest / b;
            let ratio = c as f64 / a as f64;
            if best.is_none_or(|(_, r)| ratio < r) {
                best = Some(([a, b, c], ratio));
            }
        }
    }
    best.filter(|&(_, r)| r <= 4.0).map(|(d, _)| d)
}

fn lattice_unit_points(m: usize) -> Vec<Point> {
    let dims = lattice_dims(m).unwrap_or_else(|| {
        let n = (m as f64).cbrt().ceil() as usize;
        let n = if n * n * n < m { n + 1 } else { n };
        [n, n, n]
    });
    let mut pts = Vec::with_capacity(m);
    'outer: for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                if pts.len() == m {
                    break 'outer;
                }
                pts.push([
                    (i as f64 + 0.5) / dims[0] as f64,
                    (j as f64 + 0.5) / dims[1] as f64,
                    (k as f64 + 0.5) / dims[2] as f64,
                ]);
            }
        }
    }
    pts
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Isotropic point elements with a fixed polarization 6-vector each.
#[derive(Debug, Clone, PartialEq)]
pub struct AntennaArray {
    positions: Vec<Point>,
    polarizations: Vec<Polarization>,
    wavenumber: f64,
    side: Side,
    region: BoxRegion,
}

impl AntennaArray {
    pub fn new(
        positions: Vec<Point>,
        polarizations: Vec<Polarization>,
        wavenumber: f64,
        side: Side,
        region: BoxRegion,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(invalid("an array needs at least one antenna"));
        }
        if positions.len() != polarizations.len() {
            return Err(invalid("one polarization per antenna required"));
        }
        if !(wavenumber > 0.0) || !wavenumber.is_finite() {
            return Err(invalid(format!("wavenumber must be positive, got {wavenumber}")));
        }
        if let Some(p) = positions.iter().find(|p| !region.contains(p)) {
            return Err(invalid(format!("antenna at {p:?} lies outside the box")));
        }
        for p in &polarizations {
            let n = polarization_norm(p);
            if !(n > 0.0 && n <= 1.0 + 1e-12) {
                return Err(invalid(format!("polarization norm {n} outside (0, 1]")));
            }
        }
        Ok(Self { positions, polarizations, wavenumber, side, region })
    }

    /// `m` antennas filling `region`, all with the same polarization.
    pub fn filled(
        region: BoxRegion,
        m: usize,
        scheme: FillScheme,
        polarization: Polarization,
        wavenumber: f64,
        side: Side,
    ) -> Result<Self> {
        let positions = fill_volume(&region, m, scheme)?;
        Self::new(positions, vec![polarization; m], wavenumber, side, region)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn polarizations(&self) -> &[Polarization] {
        &self.polarizations
    }

    pub fn wavenumber(&self) -> f64 {
        self.wavenumber
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn region(&self) -> &BoxRegion {
        &self.region
    }

    /// First `m` antennas as a new array.
    pub fn prefix(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.len() {
            return Err(invalid(format!("prefix length {m} out of range")));
        }
        Self::new(
            self.positions[..m].to_vec(),
            self.polarizations[..m].to_vec(),
            self.wavenumber,
            self.side,
            self.region,
        )
    }
}

/// Radiation pattern sampled at every grid node.
///
/// Stored as a `6Q × M` matrix with row `6q + i`. For TX the entry is
/// `a_T^{im}(Ω_q)`, for RX it is `a_R^{mi}(Ω_q)` (the `M × 6` matrix stored
/// transposed).
#[derive(Debug, Clone)]
pub struct PatternSamples {
    side: Side,
    resolution: usize,
    values: CMat,
}

impl PatternSamples {
    pub fn side(&self) -> Side {
        self.side
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn antennas(&self) -> usize {
        self.values.ncols()
    }

    pub fn nodes(&self) -> usize {
        self.values.nrows() / COMPONENTS
    }

    pub fn raw(&self) -> &CMat {
        &self.values
    }

    /// Pattern matrix at node `q` in its natural shape: `6×M` (TX) or `M×6` (RX).
    pub fn at(&self, q: usize) -> CMat {
        let m = self.antennas();
        match self.side {
            Side::Tx => Mat::from_fn(COMPONENTS, m, |i, a| self.values[(COMPONENTS * q + i, a)]),
            Side::Rx => Mat::from_fn(m, COMPONENTS, |a, j| self.values[(COMPONENTS * q + j, a)]),
        }
    }

    /// Weighted Gram factor `G` with `A = G Gᴴ` in the block convention:
    /// TX rows are `√w_q a_T^{im}(Ω_q)`, RX rows are `√w_q conj(a_R^{mi}(Ω_q))`.
    pub fn gram_factor(&self, grid: &QuadratureGrid) -> Result<CMat> {
        self.check_grid(grid)?;
        let w = grid.weights();
        Ok(Mat::from_fn(self.values.nrows(), self.values.ncols(), |r, a| {
            let v = self.values[(r, a)] * w[r / COMPONENTS].sqrt();
            match self.side {
                Side::Tx => v,
                Side::Rx => v.conj(),
            }
        }))
    }

    pub(crate) fn check_grid(&self, grid: &QuadratureGrid) -> Result<()> {
        if grid.resolution() != self.resolution || grid.len() != self.nodes() {
            return Err(invalid(format!(
                "pattern sampled at resolution {} used with grid of resolution {}",
                self.resolution,
                grid.resolution()
            )));
        }
        Ok(())
    }
}

/// Samples `a_T^{im}(Ω) = p_m[i] e^{i k x_m·u(Ω)}` (TX) or
/// `a_R^{mj}(Ω) = conj(p_m[j]) e^{-i k x_m·u(Ω)}` (RX) on the grid.
pub fn sample_pattern(array: &AntennaArray, grid: &QuadratureGrid, exec: Execution) -> PatternSamples {
    let units = grid.unit_vectors();
    let k = array.wavenumber;
    let sign = match array.side {
        Side::Tx => 1.0,
        Side::Rx => -1.0,
    };
    let columns = exec.map_range(array.len(), |a| {
        let x = array.positions[a];
        let p = array.polarizations[a];
        let mut col = Vec::with_capacity(grid.block_dim());
        for u in units {
            let phase = C64::from_polar(1.0, sign * k * dot(x, *u));
            for pi in p {
                let pol = match array.side {
                    Side::Tx => pi,
                    Side::Rx => pi.conj(),
                };
                col.push(pol * phase);
            }
        }
        col
    });
    let values = Mat::from_fn(grid.block_dim(), array.len(), |r, a| columns[a][r]);
    PatternSamples { side: array.side, resolution: grid.resolution(), values }
}

/// A `6×6` matrix-valued kernel sampled on all node pairs, stored as a
/// `6Q × 6Q` matrix with entry `[6q+i, 6q'+j] = 𝒜_ij(Ω_q, Ω_q')` (unweighted).
#[derive(Debug, Clone)]
pub struct LimitKernel {
    resolution: usize,
    values: CMat,
}

impl LimitKernel {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn raw(&self) -> &CMat {
        &self.values
    }

    pub fn value(&self, q: usize, qp: usize) -> [[C64; COMPONENTS]; COMPONENTS] {
        let mut out = [[C64::new(0.0, 0.0); COMPONENTS]; COMPONENTS];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.values[(COMPONENTS * q + i, COMPONENTS * qp + j)];
            }
        }
        out
    }

    /// `max ‖𝒜(Ω,Ω')ᴴ − 𝒜(Ω',Ω)‖` entrywise.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.values.nrows();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                worst = worst.max((self.values[(i, j)] - self.values[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Largest entrywise distance to another kernel on the same grid.
    pub fn sup_distance(&self, other: &LimitKernel) -> Result<f64> {
        if self.resolution != other.resolution {
            return Err(invalid("kernels sampled on different grids"));
        }
        let diff = &self.values - &other.values;
        Ok(linalg::max_abs(diff.as_ref()))
    }
}

/// `(1/M) Σ_m a^{im}(Ω) conj(a^{jm}(Ω'))` for TX and the Gram reading
/// `(1/M) Σ_m conj(a_R^{mi}(Ω)) a_R^{mj}(Ω')` for RX.
pub fn empirical_kernel(samples: &PatternSamples) -> LimitKernel {
    let m = samples.antennas() as f64;
    let p = match samples.side {
        Side::Tx => samples.values.clone(),
        Side::Rx => samples.values.as_ref().conjugate().to_owned(),
    };
    let mut values = &p * p.adjoint();
    values *= faer::Scale(C64::new(1.0 / m, 0.0));
    LimitKernel { resolution: samples.resolution, values }
}

/// Continuum limit for a uniform fill of `region` with a common
/// polarization: `p_i conj(p_j) · (1/|V|) ∫_V e^{i k x·(u(Ω)−u(Ω'))} dx`.
pub fn continuum_kernel(
    region: &BoxRegion,
    polarization: &Polarization,
    wavenumber: f64,
    grid: &QuadratureGrid,
) -> Result<LimitKernel> {
    BoxRegion::new(region.min, region.max)?;
    if !(wavenumber >= 0.0) {
        return Err(invalid("wavenumber must be nonnegative"));
    }
    let units = grid.unit_vectors();
    let q = grid.len();
    let scalar = Mat::from_fn(q, q, |a, b| box_average(region, wavenumber, units[a], units[b]));
    let pp = Mat::from_fn(COMPONENTS, COMPONENTS, |i, j| polarization[i] * polarization[j].conj());
    let values = Mat::from_fn(grid.block_dim(), grid.block_dim(), |r, c| {
        scalar[(r / COMPONENTS, c / COMPONENTS)] * pp[(r % COMPONENTS, c % COMPONENTS)]
    });
    Ok(LimitKernel { resolution: grid.resolution(), values })
}

/// `(1/|V|) ∫_V e^{i k x·(u − u')} dx` for an axis-aligned box.
pub fn box_average(region: &BoxRegion, k: f64, u: [f64; 3], up: [f64; 3]) -> C64 {
    let sides = region.sides();
    let center = region.center();
    (0..3)
        .map(|d| {
            let w = k * (u[d] - up[d]);
            C64::from_polar(sinc(w * sides[d] / 2.0), w * center[d])
        })
        .product()
}

pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Checks the positivity of a kernel matrix through its spectrum.
pub fn kernel_min_max_eig(kernel: &LimitKernel, grid: &QuadratureGrid) -> Result<(f64, f64)> {
    if kernel.resolution != grid.resolution() {
        return Err(Error::InvalidArgument("kernel/grid mismatch".into()));
    }
    let w = grid.weights();
    let weighted = Mat::from_fn(kernel.values.nrows(), kernel.values.ncols(), |r, c| {
        kernel.values[(r, c)] * (w[r / COMPONENTS] * w[c / COMPONENTS]).sqrt()
    });
    let vals = linalg::eigvalsh(weighted.as_ref())?;
    Ok(linalg::min_max(&vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{build_grid, Direction};
    use std::f64::consts::PI;

    fn unit_box() -> BoxRegion {
        BoxRegion::new([0.0; 3], [1.0; 3]).unwrap()
    }

    #[test]
    fn single_lattice_point_is_centered() {
        let pts = fill_volume(&unit_box(), 1, FillScheme::Lattice).unwrap();
        assert_eq!(pts, vec![[0.5, 0.5, 0.5]]);
    }

    #[test]
    fn eight_point_lattice() {
        let pts = fill_volume(&unit_box(), 8, FillScheme::Lattice).unwrap();
        assert_eq!(pts.len(), 8);
        for p in &pts {
            assert!(unit_box().contains(p));
            for c in p {
                assert!((c - 0.25).abs() < 1e-15 || (c - 0.75).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn lattice_counts_and_containment() {
        let b = BoxRegion::centered_cube(2.0).unwrap();
        for m in [2, 7, 16, 32, 64, 100, 128, 512, 1000] {
            let pts = fill_volume(&b, m, FillScheme::Lattice).unwrap();
            assert_eq!(pts.len(), m);
            assert!(pts.iter().all(|p| b.contains(p)));
        }
        assert_eq!(lattice_dims(128), Some([4, 4, 8]));
        assert_eq!(lattice_dims(7), None);
    }

    #[test]
    fn halton_octant_balance() {
        let pts = fill_volume(&unit_box(), 1000, FillScheme::Halton).unwrap();
        let mut counts = [0usize; 8];
        for p in &pts {
            let o = (p[0] >= 0.5) as usize | ((p[1] >= 0.5) as usize) << 1 | ((p[2] >= 0.5) as usize) << 2;
            counts[o] += 1;
        }
        for c in counts {
            assert!((c as f64 - 125.0).abs() <= 0.2 * 125.0, "{counts:?}");
        }
    }

    #[test]
    fn degenerate_box_rejected() {
        let flat = BoxRegion { min: [0.0; 3], max: [1.0, 0.0, 1.0] };
        assert!(fill_volume(&flat, 4, FillScheme::Lattice).is_err());
        assert!(BoxRegion::new([0.0; 3], [1.0, 1.0, 0.0]).is_err());
        assert!(fill_volume(&unit_box(), 0, FillScheme::Halton).is_err());
    }

    #[test]
    fn array_invariants() {
        let b = unit_box();
        let e1 = unit_polarization(0);
        assert!(AntennaArray::new(vec![[2.0, 0.5, 0.5]], vec![e1], 1.0, Side::Tx, b).is_err());
        let big = [C64::new(1.0, 0.0); COMPONENTS];
        assert!(AntennaArray::new(vec![[0.5; 3]], vec![big], 1.0, Side::Tx, b).is_err());
        let zero = [C64::new(0.0, 0.0); COMPONENTS];
        assert!(AntennaArray::new(vec![[0.5; 3]], vec![zero], 1.0, Side::Tx, b).is_err());
        assert!(AntennaArray::new(vec![], vec![], 1.0, Side::Tx, b).is_err());
    }

    #[test]
    fn origin_antenna_has_zero_phase() {
        let grid = build_grid(4).unwrap();
        let b = BoxRegion::centered_cube(1.0).unwrap();
        let arr = AntennaArray::new(vec![[0.0; 3]], vec![unit_polarization(0)], 2.0 * PI, Side::Tx, b).unwrap();
        let s = sample_pattern(&arr, &grid, Execution::Sequential);
        for q in 0..grid.len() {
            let a = s.at(q);
            assert_eq!((a.nrows(), a.ncols()), (6, 1));
            for i in 0..6 {
                let want = if i == 0 { 1.0 } else { 0.0 };
                assert!((a[(i, 0)] - C64::new(want, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn full_wavelength_offset_phase_is_one() {
        // k|x| = 2π with x along +z and the north pole direction.
        let b = BoxRegion::centered_cube(4.0).unwrap();
        let arr = AntennaArray::new(vec![[0.0, 0.0, 1.0]], vec![unit_polarization(0)], 2.0 * PI, Side::Tx, b).unwrap();
        let u = Direction::north_pole().unit_vector();
        let phase = C64::from_polar(1.0, arr.wavenumber() * dot(arr.positions()[0], u));
        assert!((phase - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn half_wavelength_pair_at_pole() {
        // x = ±λ/4 ẑ with k = 2π/λ gives phases e^{±iπ/2} = ±i at the pole.
        let grid = build_grid(3).unwrap();
        let b = BoxRegion::centered_cube(2.0).unwrap();
        let e1 = unit_polarization(0);
        let arr =
            AntennaArray::new(vec![[0.0, 0.0, 0.25], [0.0, 0.0, -0.25]], vec![e1, e1], 2.0 * PI, Side::Tx, b).unwrap();
        // Evaluate at the exact pole through a one-off direction, independently of the grid.
        let u = Direction::north_pole().unit_vector();
        let ph: Vec<C64> = arr.positions().iter().map(|x| C64::from_polar(1.0, 2.0 * PI * dot(*x, u))).collect();
        assert!((ph[0] - C64::new(0.0, 1.0)).norm() < 1e-12);
        assert!((ph[1] - C64::new(0.0, -1.0)).norm() < 1e-12);
        // Grid samples follow the same formula.
        let s = sample_pattern(&arr, &grid, Execution::Sequential);
        let u0 = grid.unit_vectors()[0];
        let want = C64::from_polar(1.0, 2.0 * PI * 0.25 * u0[2]);
        assert!((s.at(0)[(0, 0)] - want).norm() < 1e-12);
    }

    #[test]
    fn modulus_equals_polarization_modulus() {
        let grid = build_grid(5).unwrap();
        let b = BoxRegion::centered_cube(2.0).unwrap();
        let p = [0.3, 0.0, 0.4, 0.0, 0.1, 0.2].map(|x| C64::new(x, 0.5 * x));
        for side in [Side::Tx, Side::Rx] {
            let arr = AntennaArray::filled(b, 9, FillScheme::Halton, p, 2.0 * PI, side).unwrap();
            let s = sample_pattern(&arr, &grid, Execution::Sequential);
            for r in 0..s.raw().nrows() {
                for a in 0..s.antennas() {
                    assert!((s.raw()[(r, a)].norm() - p[r % 6].norm()).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn rx_pattern_is_conjugate_of_tx() {
        let grid = build_grid(4).unwrap();
        let b = BoxRegion::centered_cube(2.0).unwrap();
        let p = unit_polarization(2).map(|c| c * C64::new(0.6, 0.8));
        let tx = AntennaArray::filled(b, 5, FillScheme::Halton, p, 3.0, Side::Tx).unwrap();
        let rx = AntennaArray::filled(b, 5, FillScheme::Halton, p, 3.0, Side::Rx).unwrap();
        let st = sample_pattern(&tx, &grid, Execution::Sequential);
        let sr = sample_pattern(&rx, &grid, Execution::Sequential);
        let at = st.at(3);
        let ar = sr.at(3);
        for i in 0..6 {
            for m in 0..5 {
                assert!((ar[(m, i)] - at[(i, m)].conj()).norm() < 1e-15);
            }
        }
        let gt = st.gram_factor(&grid).unwrap();
        let gr = sr.gram_factor(&grid).unwrap();
        assert!(linalg::frobenius((&gt - &gr).as_ref()) < 1e-13);
    }

    #[test]
    fn single_origin_antenna_kernel_is_matrix_unit() {
        let grid = build_grid(4).unwrap();
        let b = BoxRegion::centered_cube(1.0).unwrap();
        let arr = AntennaArray::new(vec![[0.0; 3]], vec![unit_polarization(0)], 2.0 * PI, Side::Tx, b).unwrap();
        let k = empirical_kernel(&sample_pattern(&arr, &grid, Execution::Sequential));
        for (q, qp) in [(0, 0), (1, 7), (20, 3)] {
            let v = k.value(q, qp);
            for (i, row) in v.iter().enumerate() {
                for (j, x) in row.iter().enumerate() {
                    let want = if i == 0 && j == 0 { 1.0 } else { 0.0 };
                    assert!((x - C64::new(want, 0.0)).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn empirical_kernel_diagonal_trace_and_symmetry() {
        let grid = build_grid(5).unwrap();
        let b = BoxRegion::centered_cube(2.0).unwrap();
        let p = [0.5, 0.1, 0.0, 0.3, 0.0, 0.2].map(|x| C64::new(x, -x / 3.0));
        let pn2: f64 = p.iter().map(|c| c.norm_sqr()).sum();
        for side in [Side::Tx, Side::Rx] {
            let arr = AntennaArray::filled(b, 12, FillScheme::Halton, p, 2.0 * PI, side).unwrap();
            let k = empirical_kernel(&sample_pattern(&arr, &grid, Execution::Sequential));
            assert!(k.hermitian_defect() < 1e-12);
            for q in [0, 11, 40] {
                let v = k.value(q, q);
                let tr: C64 = (0..6).map(|i| v[i][i]).sum();
                assert!((tr.re - pn2).abs() < 1e-12 && tr.im.abs() < 1e-12);
            }
            let (min, max) = kernel_min_max_eig(&k, &grid).unwrap();
            assert!(min >= -1e-10 * max);
        }
    }

    #[test]
    fn continuum_kernel_closed_forms() {
        let grid = build_grid(4).unwrap();
        let b = BoxRegion::centered_cube(2.0).unwrap();
        let p = unit_polarization(0).map(|c| c * 0.8);
        let k = continuum_kernel(&b, &p, 2.0 * PI, &grid).unwrap();
        let v = k.value(5, 5);
        assert!((v[0][0].re - 0.64).abs() < 1e-14);
        let tr: f64 = (0..6).map(|i| v[i][i].re).sum();
        assert!((tr - 0.64).abs() < 1e-14);
        assert!(k.hermitian_defect() < 1e-14);
        let k0 = continuum_kernel(&b, &p, 0.0, &grid).unwrap();
        assert!((k0.value(1, 17)[0][0].re - 0.64).abs() < 1e-14);
    }

    #[test]
    fn box_average_matches_numerical_volume_integral() {
        // Off-center box so the phase factor is exercised too.
        let b = BoxRegion::new([-0.3, 0.1, -1.0], [0.9, 0.6, 0.4]).unwrap();
        let u = Direction::new(0.4, 1.3).unwrap().unit_vector();
        let up = Direction::new(2.2, 4.0).unwrap().unit_vector();
        let k = 5.0;
        // Midpoint rule per axis with many cells (independent of the closed form).
        let n = 4000;
        let sides = b.sides();
        let mut total = C64::new(1.0, 0.0);
        for d in 0..3 {
            let h = sides[d] / n as f64;
            let s: C64 =
                (0..n).map(|i| C64::from_polar(1.0, k * (u[d] - up[d]) * (b.min[d] + (i as f64 + 0.5) * h))).sum();
            total *= s / n as f64;
        }
        let closed = box_average(&b, k, u, up);
        assert!((closed - total).norm() < 1e-6, "{closed} vs {total}");
    }

    #[test]
    fn sinc_along_axis_for_centered_box() {
        let l = 1.5;
        let b = BoxRegion::centered_cube(l).unwrap();
        let u = [0.0, 0.0, 1.0];
        let up = [0.0, 0.0, -1.0];
        let k = 2.0;
        let v = box_average(&b, k, u, up);
        assert!((v.re - sinc(k * l * 2.0 / 2.0)).abs() < 1e-14 && v.im.abs() < 1e-14);
    }

    #[test]
    fn riemann_sums_approach_continuum() {
        let grid = build_grid(6).unwrap();
        let b = BoxRegion::centered_cube(2.0).unwrap();
        let e1 = unit_polarization(0);
        let cont = continuum_kernel(&b, &e1, 2.0 * PI, &grid).unwrap();
        let dists: Vec<f64> = [64, 216, 512]
            .iter()
            .map(|&m| {
                let arr = AntennaArray::filled(b, m, FillScheme::Lattice, e1, 2.0 * PI, Side::Tx).unwrap();
                empirical_kernel(&sample_pattern(&arr, &grid, Execution::Sequential)).sup_distance(&cont).unwrap()
            })
            .collect();
        assert!(dists[0] > dists[1] && dists[1] > dists[2], "{dists:?}");
    }
}
