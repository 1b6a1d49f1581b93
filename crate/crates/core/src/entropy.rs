//! Entropy generators ψ, relative entropies e_ψ, Fisher information I_ψ and
//! the P-modified dissipation S_ψ, for Gaussian pairs (closed form) and
//! tensor-grid densities (trapezoid quadrature).

use crate::linalg::{self, Mat};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EntropyError {
    #[error("invalid entropy generator: {0}")]
    InvalidGenerator(String),
    #[error("mass mismatch: {0:.6e} vs {1:.6e}")]
    MassMismatch(f64, f64),
    #[error("integral diverges: {0}")]
    Divergent(String),
    #[error("grids differ")]
    GridMismatch,
    #[error("grid too coarse: axis {axis} has {nodes} nodes, need at least 6 (4 interior)")]
    GridTooCoarse { axis: usize, nodes: usize },
    #[error("grid axis {axis} covers [{min:.3}, {max:.3}] but f_inf needs [{need_lo:.3}, {need_hi:.3}] (±6 standard deviations)")]
    GridTooNarrow { axis: usize, min: f64, max: f64, need_lo: f64, need_hi: f64 },
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("matrix is not symmetric positive definite (min eigenvalue {0:.3e})")]
    NotSpd(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Floor applied to `f/f∞` for the logarithmic generator on grids.
pub const LOG_FLOOR: f64 = 1e-14;

/// Admissible entropy generator: `ψ₁(σ) = σ ln σ − σ + 1` or
/// `ψ_p(σ) = σ^p − 1 − p(σ − 1)`, `1 < p ≤ 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EntropyGenerator {
    Logarithmic,
    Power(f64),
}

impl EntropyGenerator {
    pub fn power(p: f64) -> Result<Self, EntropyError> {
        if !(p > 1.0 && p <= 2.0) {
            return Err(EntropyError::InvalidGenerator(format!("power exponent p = {p} outside (1, 2]")));
        }
        Ok(EntropyGenerator::Power(p))
    }

    pub fn quadratic() -> Self {
        EntropyGenerator::Power(2.0)
    }

    pub fn psi(&self, s: f64) -> f64 {
        match *self {
            EntropyGenerator::Logarithmic => {
                if s == 0.0 {
                    1.0
                } else {
                    s * s.ln() - s + 1.0
                }
            }
            EntropyGenerator::Power(p) => s.powf(p) - 1.0 - p * (s - 1.0),
        }
    }

    pub fn d1(&self, s: f64) -> f64 {
        match *self {
            EntropyGenerator::Logarithmic => s.ln(),
            EntropyGenerator::Power(p) => p * (s.powf(p - 1.0) - 1.0),
        }
    }

    pub fn d2(&self, s: f64) -> f64 {
        match *self {
            EntropyGenerator::Logarithmic => 1.0 / s,
            EntropyGenerator::Power(p) => p * (p - 1.0) * s.powf(p - 2.0),
        }
    }

    pub fn d3(&self, s: f64) -> f64 {
        match *self {
            EntropyGenerator::Logarithmic => -1.0 / (s * s),
            EntropyGenerator::Power(p) => p * (p - 1.0) * (p - 2.0) * s.powf(p - 3.0),
        }
    }

    pub fn d4(&self, s: f64) -> f64 {
        match *self {
            EntropyGenerator::Logarithmic => 2.0 / (s * s * s),
            EntropyGenerator::Power(p) => p * (p - 1.0) * (p - 2.0) * (p - 3.0) * s.powf(p - 4.0),
        }
    }

    /// Checks `ψ(1)=0`, `ψ ≥ 0`, `ψ'' > 0` and `(ψ''')² ≤ ψ''ψ⁗/2` on a
    /// logarithmic sample of `(0, ∞)`.
    pub fn check_admissible(&self) -> bool {
        if self.psi(1.0).abs() > 1e-15 {
            return false;
        }
        (0..=400).all(|i| {
            let s = 10f64.powf(-4.0 + 8.0 * i as f64 / 400.0);
            let (d2, d3, d4) = (self.d2(s), self.d3(s), self.d4(s));
            self.psi(s) >= -1e-14 && d2 > 0.0 && d3 * d3 <= 0.5 * d2 * d4 * (1.0 + 1e-12) + 1e-300
        })
    }
}

impl fmt::Display for EntropyGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntropyGenerator::Logarithmic => write!(f, "log"),
            EntropyGenerator::Power(p) => write!(f, "power:{p}"),
        }
    }
}

impl FromStr for EntropyGenerator {
    type Err = EntropyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "log" {
            return Ok(EntropyGenerator::Logarithmic);
        }
        if let Some(rest) = s.strip_prefix("power:") {
            let p: f64 = rest.parse().map_err(|_| EntropyError::InvalidGenerator(s.to_string()))?;
            return EntropyGenerator::power(p);
        }
        Err(EntropyError::InvalidGenerator(format!("expected `log` or `power:p`, got `{s}`")))
    }
}

fn check_masses(a: f64, b: f64) -> Result<(), EntropyError> {
    if (a - b).abs() > 1e-6 * a.abs().max(b.abs()).max(1e-300) {
        return Err(EntropyError::MassMismatch(a, b));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct GaussianDensity {
    pub mean: DVector<f64>,
    pub cov: Mat,
    pub mass: f64,
}

impl GaussianDensity {
    pub fn new(mean: DVector<f64>, cov: Mat) -> Result<Self, EntropyError> {
        Self::with_mass(mean, cov, 1.0)
    }

    pub fn with_mass(mean: DVector<f64>, cov: Mat, mass: f64) -> Result<Self, EntropyError> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(EntropyError::Dimension("mean and covariance sizes differ".into()));
        }
        let l = linalg::min_eig_sym(&cov);
        if l <= 0.0 {
            return Err(EntropyError::NotSpd(l));
        }
        if !(mass > 0.0) {
            return Err(EntropyError::InvalidDensity(format!("mass {mass} must be positive")));
        }
        Ok(GaussianDensity { mean, cov: linalg::sym(&cov), mass })
    }

    pub fn standard(d: usize) -> Self {
        GaussianDensity { mean: DVector::zeros(d), cov: Mat::identity(d, d), mass: 1.0 }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn precision(&self) -> Mat {
        linalg::sym(&self.cov.clone().try_inverse().expect("SPD covariance"))
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let dx = DVector::from_iterator(d, x.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        let q = dx.dot(&(self.precision() * &dx));
        self.mass * (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powi(d as i32) * self.cov.determinant()).sqrt()
    }

    /// Fast evaluator with a precomputed precision matrix.
    pub fn evaluator(&self) -> impl Fn(&[f64]) -> f64 + Sync + '_ {
        let prec = self.precision();
        let d = self.dim();
        let norm = self.mass / ((2.0 * std::f64::consts::PI).powi(d as i32) * self.cov.determinant()).sqrt();
        move |x: &[f64]| {
            let mut q = 0.0;
            for i in 0..d {
                let di = x[i] - self.mean[i];
                for j in 0..d {
                    q += di * prec[(i, j)] * (x[j] - self.mean[j]);
                }
            }
            norm * (-0.5 * q).exp()
        }
    }

    pub fn sample(&self, grid: &Grid) -> GridDensity {
        let eval = self.evaluator();
        GridDensity::from_fn(grid, |x| eval(x))
    }
}

/// `∫ N₁^p N₂^{1−p}` for normalized Gaussians, with the mean and covariance
/// of the tilted Gaussian proportional to the integrand.
struct Tilted {
    integral: f64,
    mean: DVector<f64>,
    cov: Mat,
}

fn tilted(f1: &GaussianDensity, f2: &GaussianDensity, p: f64) -> Result<Tilted, EntropyError> {
    let a1 = f1.precision();
    let a2 = f2.precision();
    let a = &a1 * p + &a2 * (1.0 - p);
    let l = linalg::min_eig_sym(&a);
    if l <= 1e-14 * (1.0 + a.norm()) {
        return Err(EntropyError::Divergent(format!(
            "p·Σ₁⁻¹ + (1−p)·Σ₂⁻¹ is not positive definite (min eigenvalue {l:.3e}) for p = {p}"
        )));
    }
    let cov = linalg::sym(&a.clone().try_inverse().unwrap());
    let b = &a1 * &f1.mean * p + &a2 * &f2.mean * (1.0 - p);
    let d = f1.dim() as f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    let logdet = |m: &Mat| m.determinant().ln();
    let c0 = -0.5 * (p * f1.mean.dot(&(&a1 * &f1.mean)) + (1.0 - p) * f2.mean.dot(&(&a2 * &f2.mean)))
        - 0.5 * (p * (d * two_pi.ln() + logdet(&f1.cov)) + (1.0 - p) * (d * two_pi.ln() + logdet(&f2.cov)));
    let mean = &cov * &b;
    let log_integral = c0 + 0.5 * b.dot(&mean) + 0.5 * d * two_pi.ln() + 0.5 * logdet(&cov);
    Ok(Tilted { integral: log_integral.exp(), mean, cov })
}

fn same_dim(f: &GaussianDensity, g: &GaussianDensity) -> Result<(), EntropyError> {
    if f.dim() != g.dim() {
        return Err(EntropyError::Dimension(format!("{} vs {}", f.dim(), g.dim())));
    }
    Ok(())
}

/// `e_ψ(f | f∞)` for Gaussians in closed form.
pub fn relative_entropy_gaussian(
    psi: EntropyGenerator,
    f: &GaussianDensity,
    f_inf: &GaussianDensity,
) -> Result<f64, EntropyError> {
    same_dim(f, f_inf)?;
    check_masses(f.mass, f_inf.mass)?;
    let m = f.mass;
    match psi {
        EntropyGenerator::Logarithmic => {
            let a2 = f_inf.precision();
            let dm = &f_inf.mean - &f.mean;
            let d = f.dim() as f64;
            let kl = 0.5
                * ((&a2 * &f.cov).trace() + dm.dot(&(&a2 * &dm)) - d + (f_inf.cov.determinant() / f.cov.determinant()).ln());
            Ok(m * kl)
        }
        EntropyGenerator::Power(p) => {
            let t = tilted(f, f_inf, p)?;
            Ok(m * (t.integral - 1.0))
        }
    }
}

/// `∫ ψ''(u) ∇uᵀ P ∇u f∞` with `u = f/f∞`, Gaussian closed form.
pub fn dissipation_gaussian(
    psi: EntropyGenerator,
    f: &GaussianDensity,
    f_inf: &GaussianDensity,
    p_mat: &Mat,
) -> Result<f64, EntropyError> {
    same_dim(f, f_inf)?;
    check_masses(f.mass, f_inf.mass)?;
    let a1 = f.precision();
    let a2 = f_inf.precision();
    // ∇ log u = G x + g
    let g_mat = &a2 - &a1;
    let g_vec = &a1 * &f.mean - &a2 * &f_inf.mean;
    let expect = |mean: &DVector<f64>, cov: &Mat| {
        let r = &g_mat * mean + &g_vec;
        (g_mat.transpose() * p_mat * &g_mat * cov).trace() + r.dot(&(p_mat * &r))
    };
    let m = f.mass;
    match psi {
        EntropyGenerator::Logarithmic => Ok(m * expect(&f.mean, &f.cov)),
        EntropyGenerator::Power(p) => {
            let t = tilted(f, f_inf, p)?;
            Ok(m * p * (p - 1.0) * t.integral * expect(&t.mean, &t.cov))
        }
    }
}

pub fn fisher_information_gaussian(
    psi: EntropyGenerator,
    f: &GaussianDensity,
    f_inf: &GaussianDensity,
    d: &Mat,
) -> Result<f64, EntropyError> {
    dissipation_gaussian(psi, f, f_inf, d)
}

pub fn modified_dissipation_gaussian(
    psi: EntropyGenerator,
    f: &GaussianDensity,
    f_inf: &GaussianDensity,
    p_mat: &Mat,
) -> Result<f64, EntropyError> {
    check_spd(p_mat)?;
    dissipation_gaussian(psi, f, f_inf, p_mat)
}

fn check_spd(p: &Mat) -> Result<(), EntropyError> {
    let asym = (p - p.transpose()).amax();
    let l = linalg::min_eig_sym(p);
    if asym > 1e-10 * (1.0 + p.amax()) || l <= 0.0 {
        return Err(EntropyError::NotSpd(l));
    }
    Ok(())
}

/// Uniform grid axis with nodes `min + i h`, `i = 0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub h: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, n: usize) -> Self {
        assert!(n >= 2 && max > min, "axis needs n >= 2 and max > min");
        Axis { min, h: (max - min) / (n - 1) as f64, n }
    }

    pub fn node(&self, i: usize) -> f64 {
        self.min + i as f64 * self.h
    }

    pub fn max(&self) -> f64 {
        self.node(self.n - 1)
    }

    pub fn trapezoid_weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            0.5 * self.h
        } else {
            self.h
        }
    }
}

/// Tensor-product grid, row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Self {
        Grid { axes }
    }

    /// Cube `[−l, l]^d` with `n` nodes per axis.
    pub fn cube(d: usize, l: f64, n: usize) -> Self {
        Grid { axes: vec![Axis::new(-l, l, n); d] }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for k in (0..self.dim().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.axes[k + 1].n;
        }
        s
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = flat % self.axes[k].n;
            flat /= self.axes[k].n;
        }
        idx
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).iter().zip(&self.axes).map(|(&i, a)| a.node(i)).collect()
    }

    pub fn weight(&self, flat: usize) -> f64 {
        self.multi_index(flat).iter().zip(&self.axes).map(|(&i, a)| a.trapezoid_weight(i)).product()
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.h).product()
    }

    /// Deterministic trapezoid sum of `g(flat_index)`: slabs along the first
    /// axis are summed in parallel and reduced in index order.
    pub fn integrate<F: Fn(usize) -> f64 + Sync>(&self, g: F) -> f64 {
        let n0 = self.axes[0].n;
        let slab = self.len() / n0;
        let partial: Vec<f64> = (0..n0)
            .into_par_iter()
            .map(|i| {
                let mut s = 0.0;
                for j in i * slab..(i + 1) * slab {
                    s += self.weight(j) * g(j);
                }
                s
            })
            .collect();
        partial.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct GridDensity {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub mass: f64,
}

impl GridDensity {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, EntropyError> {
        if values.len() != grid.len() {
            return Err(EntropyError::InvalidDensity(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(EntropyError::InvalidDensity(format!("value {v} is negative or non-finite")));
        }
        let mass = grid.integrate(|i| values[i]);
        Ok(GridDensity { grid, values, mass })
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: &Grid, f: F) -> Self {
        let values: Vec<f64> = (0..grid.len()).map(|i| f(&grid.point(i)).max(0.0)).collect();
        let mass = grid.integrate(|i| values[i]);
        GridDensity { grid: grid.clone(), values, mass }
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(|i| self.values[i])
    }

    pub fn scaled(&self, s: f64) -> Self {
        let values: Vec<f64> = self.values.iter().map(|v| v * s).collect();
        GridDensity { grid: self.grid.clone(), values, mass: self.mass * s }
    }

    /// Rescales to the given mass.
    pub fn with_mass(&self, mass: f64) -> Self {
        self.scaled(mass / self.mass)
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.grid.dim())
            .map(|k| self.grid.integrate(|i| self.grid.point(i)[k] * self.values[i]) / self.mass)
            .collect()
    }

    pub fn covariance(&self) -> Mat {
        let d = self.grid.dim();
        let m = self.mean();
        Mat::from_fn(d, d, |a, b| {
            self.grid.integrate(|i| {
                let x = self.grid.point(i);
                (x[a] - m[a]) * (x[b] - m[b]) * self.values[i]
            }) / self.mass
        })
    }

    pub fn max_abs_diff(&self, other: &GridDensity) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// `‖f₁ − f₂‖_{L¹}` by trapezoid quadrature.
pub fn l1_distance(f1: &GridDensity, f2: &GridDensity) -> Result<f64, EntropyError> {
    if f1.grid != f2.grid {
        return Err(EntropyError::GridMismatch);
    }
    Ok(f1.grid.integrate(|i| (f1.values[i] - f2.values[i]).abs()))
}

fn validate_pair(f: &GridDensity, f_inf: &GridDensity) -> Result<(), EntropyError> {
    if f.grid != f_inf.grid {
        return Err(EntropyError::GridMismatch);
    }
    check_masses(f.mass, f_inf.mass)?;
    for (k, a) in f.grid.axes.iter().enumerate() {
        if a.n < 6 {
            return Err(EntropyError::GridTooCoarse { axis: k, nodes: a.n });
        }
    }
    let mean = f_inf.mean();
    let cov = f_inf.covariance();
    for (k, a) in f.grid.axes.iter().enumerate() {
        let sd = cov[(k, k)].max(0.0).sqrt();
        let (lo, hi) = (mean[k] - 6.0 * sd, mean[k] + 6.0 * sd);
        let slack = 1e-9 * (1.0 + sd);
        if a.min > lo + slack || a.max() < hi - slack {
            return Err(EntropyError::GridTooNarrow { axis: k, min: a.min, max: a.max(), need_lo: lo, need_hi: hi });
        }
    }
    Ok(())
}

fn ratio(psi: EntropyGenerator, f: f64, finf: f64) -> f64 {
    let u = if finf > 0.0 { f / finf } else if f > 0.0 { f64::INFINITY } else { 1.0 };
    match psi {
        EntropyGenerator::Logarithmic => u.max(LOG_FLOOR),
        EntropyGenerator::Power(_) => u,
    }
}

/// `e_ψ(f | f∞)` by trapezoid quadrature.
pub fn relative_entropy_grid(psi: EntropyGenerator, f: &GridDensity, f_inf: &GridDensity) -> Result<f64, EntropyError> {
    validate_pair(f, f_inf)?;
    let e = f.grid.integrate(|i| {
        let fi = f_inf.values[i];
        if fi == 0.0 {
            return 0.0;
        }
        psi.psi(ratio(psi, f.values[i], fi)) * fi
    });
    if !e.is_finite() {
        return Err(EntropyError::Divergent("f/f_inf unbounded on the grid".into()));
    }
    Ok(e)
}

/// First derivative along `axis` of grid data: fourth-order centered
/// differences in the interior, second-order near and at the boundary.
pub fn grid_derivative(grid: &Grid, values: &[f64], axis: usize) -> Vec<f64> {
    let strides = grid.strides();
    let s = strides[axis];
    let ax = &grid.axes[axis];
    let (n, h) = (ax.n, ax.h);
    let mut out = vec![0.0; values.len()];
    for (flat, o) in out.iter_mut().enumerate() {
        let i = (flat / s) % n;
        let at = |k: isize| values[(flat as isize + k * s as isize) as usize];
        *o = if i >= 2 && i + 2 < n {
            (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h)
        } else if i >= 1 && i + 1 < n {
            (at(1) - at(-1)) / (2.0 * h)
        } else if i == 0 {
            (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
        } else {
            (3.0 * at(0) - 4.0 * at(-1) + at(-2)) / (2.0 * h)
        };
    }
    out
}

fn dissipation_grid(psi: EntropyGenerator, f: &GridDensity, f_inf: &GridDensity, p_mat: &Mat) -> Result<f64, EntropyError> {
    validate_pair(f, f_inf)?;
    let d = f.grid.dim();
    if p_mat.nrows() != d || p_mat.ncols() != d {
        return Err(EntropyError::Dimension(format!("matrix is {}x{} on a {d}-dimensional grid", p_mat.nrows(), p_mat.ncols())));
    }
    let u: Vec<f64> = f.values.iter().zip(&f_inf.values).map(|(&a, &b)| ratio(psi, a, b)).collect();
    let grads: Vec<Vec<f64>> = (0..d).map(|k| grid_derivative(&f.grid, &u, k)).collect();
    let s = f.grid.integrate(|i| {
        let fi = f_inf.values[i];
        if fi == 0.0 {
            return 0.0;
        }
        let mut q = 0.0;
        for a in 0..d {
            for b in 0..d {
                q += grads[a][i] * p_mat[(a, b)] * grads[b][i];
            }
        }
        psi.d2(u[i]) * q * fi
    });
    if !s.is_finite() {
        return Err(EntropyError::Divergent("dissipation integrand not finite".into()));
    }
    Ok(s)
}

/// `I_ψ(f | f∞)` with diffusion matrix `D`, by quadrature.
pub fn fisher_information_grid(psi: EntropyGenerator, f: &GridDensity, f_inf: &GridDensity, d: &Mat) -> Result<f64, EntropyError> {
    dissipation_grid(psi, f, f_inf, d)
}

/// `S_ψ(f)` with an SPD matrix `P`, by quadrature.
pub fn modified_dissipation_grid(psi: EntropyGenerator, f: &GridDensity, f_inf: &GridDensity, p_mat: &Mat) -> Result<f64, EntropyError> {
    check_spd(p_mat)?;
    dissipation_grid(psi, f, f_inf, p_mat)
}

/// Either representation of a density, for the dispatching entry points.
#[derive(Debug, Clone)]
pub enum Density {
    Gaussian(GaussianDensity),
    Grid(GridDensity),
}

pub fn relative_entropy(psi: EntropyGenerator, f: &Density, f_inf: &Density) -> Result<f64, EntropyError> {
    match (f, f_inf) {
        (Density::Gaussian(a), Density::Gaussian(b)) => relative_entropy_gaussian(psi, a, b),
        (Density::Grid(a), Density::Grid(b)) => relative_entropy_grid(psi, a, b),
        _ => Err(EntropyError::InvalidDensity("mixed Gaussian/grid arguments".into())),
    }
}

pub fn fisher_information(psi: EntropyGenerator, f: &Density, f_inf: &Density, d: &Mat) -> Result<f64, EntropyError> {
    match (f, f_inf) {
        (Density::Gaussian(a), Density::Gaussian(b)) => fisher_information_gaussian(psi, a, b, d),
        (Density::Grid(a), Density::Grid(b)) => fisher_information_grid(psi, a, b, d),
        _ => Err(EntropyError::InvalidDensity("mixed Gaussian/grid arguments".into())),
    }
}

pub fn modified_dissipation(psi: EntropyGenerator, f: &Density, f_inf: &Density, p_mat: &Mat) -> Result<f64, EntropyError> {
    match (f, f_inf) {
        (Density::Gaussian(a), Density::Gaussian(b)) => modified_dissipation_gaussian(psi, a, b, p_mat),
        (Density::Grid(a), Density::Grid(b)) => modified_dissipation_grid(psi, a, b, p_mat),
        _ => Err(EntropyError::InvalidDensity("mixed Gaussian/grid arguments".into())),
    }
}
