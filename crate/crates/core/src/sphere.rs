//! Quadrature on the unit sphere, real spherical harmonics and Weyl counting
//! for the Laplace–Beltrami operator.

use std::f64::consts::PI;

use faer::Mat;

use crate::error::invalid;
use crate::{Result, C64, COMPONENTS};

/// A point on the unit sphere in polar coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    /// Colatitude in `[0, π]`.
    pub theta: f64,
    /// Azimuth in `[0, 2π)`.
    pub phi: f64,
}

impl Direction {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&theta) || !theta.is_finite() {
            return Err(invalid(format!("colatitude {theta} outside [0, π]")));
        }
        if !phi.is_finite() {
            return Err(invalid("azimuth must be finite"));
        }
        Ok(Self { theta, phi: phi.rem_euclid(2.0 * PI) })
    }

    pub fn north_pole() -> Self {
        Self { theta: 0.0, phi: 0.0 }
    }

    /// Direction of a nonzero vector.
    pub fn from_vector(v: [f64; 3]) -> Result<Self> {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if r == 0.0 || !r.is_finite() {
            return Err(invalid("cannot take the direction of a zero vector"));
        }
        let theta = (v[2] / r).clamp(-1.0, 1.0).acos();
        Self::new(theta, v[1].atan2(v[0]))
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    pub fn antipode(&self) -> Self {
        Self { theta: PI - self.theta, phi: (self.phi + PI).rem_euclid(2.0 * PI) }
    }
}

pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Tensor Gauss–Legendre (in `cos θ`) × trapezoid (in `φ`) grid.
///
/// Nodes are ordered by polar index, then azimuth index.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    resolution: usize,
    nodes: Vec<Direction>,
    units: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

/// Builds the grid with `resolution` polar and `2·resolution` azimuthal nodes.
pub fn build_grid(resolution: usize) -> Result<QuadratureGrid> {
    if resolution < 2 {
        return Err(invalid(format!("grid resolution must be at least 2, got {resolution}")));
    }
    let (xs, ws) = gauss_legendre(resolution);
    let n_phi = 2 * resolution;
    let dphi = 2.0 * PI / n_phi as f64;
    let mut nodes = Vec::with_capacity(resolution * n_phi);
    let mut weights = Vec::with_capacity(resolution * n_phi);
    // xs is ascending in cos θ; walk it backwards so θ increases.
    for (x, w) in xs.iter().zip(&ws).rev() {
        let theta = x.clamp(-1.0, 1.0).acos();
        for k in 0..n_phi {
            nodes.push(Direction { theta, phi: k as f64 * dphi });
            weights.push(w * dphi);
        }
    }
    let units = nodes.iter().map(Direction::unit_vector).collect();
    Ok(QuadratureGrid { resolution, nodes, units, weights })
}

impl QuadratureGrid {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Number of nodes `Q`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Direction] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Cartesian unit vectors of the nodes.
    pub fn unit_vectors(&self) -> &[[f64; 3]] {
        &self.units
    }

    /// Dimension of the discretized `[L²(S²)]⁶`, i.e. `6Q`.
    pub fn block_dim(&self) -> usize {
        COMPONENTS * self.len()
    }

    /// Highest degree `L` such that harmonic products up to degree `L` are
    /// integrated exactly.
    pub fn max_exact_degree(&self) -> usize {
        self.resolution - 1
    }

    /// `Σ_q w_q f_q`.
    pub fn integrate(&self, samples: &[C64]) -> Result<C64> {
        if samples.len() != self.len() {
            return Err(invalid(format!("expected {} samples, got {}", self.len(), samples.len())));
        }
        Ok(samples.iter().zip(&self.weights).map(|(s, w)| s * w).sum())
    }

    pub fn integrate_real(&self, samples: &[f64]) -> Result<f64> {
        if samples.len() != self.len() {
            return Err(invalid(format!("expected {} samples, got {}", self.len(), samples.len())));
        }
        Ok(samples.iter().zip(&self.weights).map(|(s, w)| s * w).sum())
    }
}

/// Gauss–Legendre nodes (ascending) and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[n - 1 - i] = x;
        ws[n - 1 - i] = w;
        xs[i] = -x;
        ws[i] = w;
    }
    (xs, ws)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// Column index of `(l, m)` in the lexicographic `(l, m)` layout.
pub fn sh_index(l: usize, m: i64) -> usize {
    debug_assert!(m.unsigned_abs() as usize <= l);
    (l * l) as i64 as usize + (m + l as i64) as usize
}

/// Number of real harmonics with degree at most `l_max`.
pub fn sh_count(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

/// All orthonormal real spherical harmonics up to `l_max` at one direction,
/// in `(l, m)` order.
pub fn real_sh(l_max: usize, dir: &Direction) -> Vec<f64> {
    let (st, ct) = dir.theta.sin_cos();
    let mut out = vec![0.0; sh_count(l_max)];
    // q[l] holds the normalized associated Legendre value for the current m.
    let mut qmm = 1.0 / (4.0 * PI).sqrt();
    for m in 0..=l_max {
        if m > 0 {
            qmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * st;
        }
        let (sin_m, cos_m) = (m as f64 * dir.phi).sin_cos();
        let mut put = |l: usize, q: f64| {
            if m == 0 {
                out[sh_index(l, 0)] = q;
            } else {
                let s2 = std::f64::consts::SQRT_2;
                out[sh_index(l, m as i64)] = s2 * q * cos_m;
                out[sh_index(l, -(m as i64))] = s2 * q * sin_m;
            }
        };
        put(m, qmm);
        if m == l_max {
            break;
        }
        let mut q_prev = qmm;
        let mut q_cur = ct * ((2 * m + 3) as f64).sqrt() * qmm;
        put(m + 1, q_cur);
        for l in (m + 2)..=l_max {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            let q_next = a * (ct * q_cur - b * q_prev);
            q_prev = q_cur;
            q_cur = q_next;
            put(l, q_cur);
        }
    }
    out
}

/// Real orthonormal spherical harmonics sampled on a grid.
#[derive(Debug, Clone)]
pub struct ShBasis {
    l_max: usize,
    /// `Q × (l_max+1)²`, node-major rows.
    values: Mat<f64>,
    degrees: Vec<(usize, i64)>,
    eigenvalues: Vec<f64>,
}

pub fn build_sh_basis(grid: &QuadratureGrid, l_max: usize) -> Result<ShBasis> {
    if l_max > grid.max_exact_degree() {
        return Err(invalid(format!(
            "l_max {l_max} exceeds the exactness degree {} of a resolution-{} grid",
            grid.max_exact_degree(),
            grid.resolution()
        )));
    }
    let count = sh_count(l_max);
    let mut values = Mat::<f64>::zeros(grid.len(), count);
    for (q, dir) in grid.nodes().iter().enumerate() {
        for (c, v) in real_sh(l_max, dir).into_iter().enumerate() {
            values[(q, c)] = v;
        }
    }
    let degrees: Vec<(usize, i64)> = (0..=l_max).flat_map(|l| (-(l as i64)..=l as i64).map(move |m| (l, m))).collect();
    let eigenvalues = degrees.iter().map(|&(l, _)| (l * (l + 1)) as f64).collect();
    Ok(ShBasis { l_max, values, degrees, eigenvalues })
}

impl ShBasis {
    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    /// `Q × (l_max+1)²` sample matrix.
    pub fn values(&self) -> &Mat<f64> {
        &self.values
    }

    pub fn value(&self, node: usize, l: usize, m: i64) -> f64 {
        self.values[(node, sh_index(l, m))]
    }

    /// `(l, m)` of each column.
    pub fn degrees(&self) -> &[(usize, i64)] {
        &self.degrees
    }

    /// Laplace–Beltrami eigenvalue `l(l+1)` of each column.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Samples of column `c` as complex values.
    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.values.nrows()).map(|q| C64::new(self.values[(q, c)], 0.0)).collect()
    }
}

/// Dimensions of the spectral projectors `P_E` and `⊕⁶ P_E`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeylCount {
    pub scalar_dim: usize,
    pub six_component_dim: usize,
}

/// Counts Laplace–Beltrami eigenvalues `l(l+1) ≤ energy` with multiplicity.
pub fn weyl_count(energy: f64) -> WeylCount {
    match max_degree_below(energy) {
        None => WeylCount { scalar_dim: 0, six_component_dim: 0 },
        Some(l) => {
            let scalar_dim = (l + 1) * (l + 1);
            WeylCount { scalar_dim, six_component_dim: COMPONENTS * scalar_dim }
        }
    }
}

/// Largest `l` with `l(l+1) ≤ energy`, if any.
pub fn max_degree_below(energy: f64) -> Option<usize> {
    if energy.is_nan() || energy < 0.0 {
        return None;
    }
    let mut l = ((energy + 0.25).sqrt() - 0.5).floor().max(0.0) as usize;
    while ((l + 1) * (l + 2)) as f64 <= energy {
        l += 1;
    }
    while l > 0 && ((l * (l + 1)) as f64) > energy {
        l -= 1;
    }
    Some(l)
}
