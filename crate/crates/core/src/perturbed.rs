//! Fokker–Planck operators with a convolution perturbation `Θf = ϑ * f` in
//! the weighted space `L²(ω)`, `ω(x) = Σ cosh(βxᵢ)`. Fields are stored as
//! physical samples together with their Fourier transforms on the real line
//! and on the lines `ξ ± i(β/2)e_ℓ`.
//!
//! Coordinates are reduced: `D = I`, `C = diag(c)` with `0 < c₁ ≤ … ≤ cₙ`.

use crate::linalg::{self, Mat};
use nalgebra::DVector;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PerturbedError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("field does not decay: e^(β|x|/2)|f| = {0:.3e} at the grid boundary (need < 1e-12)")]
    NotDecaying(f64),
    #[error("ψ̂ quadrature did not converge at z = {0}")]
    Quadrature(String),
    #[error("moment system is ill-conditioned (reciprocal condition {0:.3e})")]
    IllConditioned(f64),
    #[error("drift C̃ = D^(-1/2) C D^(1/2) is not symmetric (asymmetry {0:.3e})")]
    NotReducible(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

type Result<T> = std::result::Result<T, PerturbedError>;

const I: C64 = C64 { re: 0.0, im: 1.0 };

// ---------------------------------------------------------------------------
// Weighted space

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedSpace {
    pub beta: f64,
    pub dim: usize,
}

impl WeightedSpace {
    pub fn new(beta: f64, dim: usize) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(PerturbedError::Invalid(format!("β = {beta} must be positive")));
        }
        if dim == 0 {
            return Err(PerturbedError::Invalid("dimension must be positive".into()));
        }
        Ok(WeightedSpace { beta, dim })
    }

    pub fn omega(&self, x: &[f64]) -> f64 {
        x.iter().map(|xi| (self.beta * xi).cosh()).sum()
    }

    pub fn poincare_constant(&self) -> f64 {
        2.0 / self.beta
    }

    /// `‖f‖_ω` of grid samples.
    pub fn norm(&self, grid: &FieldGrid, samples: &[C64]) -> f64 {
        let s: f64 = (0..grid.len()).map(|j| samples[j].norm_sqr() * self.omega(&grid.point(j))).sum();
        (s * grid.h.powi(grid.dim as i32)).sqrt()
    }

    /// `‖∇f‖_ω` with `∇f` given as one sample vector per axis.
    pub fn gradient_norm(&self, grid: &FieldGrid, grads: &[Vec<C64>]) -> f64 {
        grads.iter().map(|g| self.norm(grid, g).powi(2)).sum::<f64>().sqrt()
    }
}

// ---------------------------------------------------------------------------
// Grids and transforms

/// Centered uniform grid `x_j = (j − N/2)h` per axis, paired with the
/// frequencies `ξ_k = (k − N/2)·2π/(Nh)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub dim: usize,
    pub n: usize,
    pub h: f64,
}

impl FieldGrid {
    pub fn new(dim: usize, n: usize, half_width: f64) -> Result<Self> {
        if dim == 0 || n < 8 || n % 2 != 0 || !(half_width > 0.0) {
            return Err(PerturbedError::Invalid("grid needs dim ≥ 1, even n ≥ 8, positive half width".into()));
        }
        Ok(FieldGrid { dim, n, h: 2.0 * half_width / n as f64 })
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, j: usize) -> f64 {
        (j as f64 - (self.n / 2) as f64) * self.h
    }

    pub fn dxi(&self) -> f64 {
        2.0 * PI / (self.n as f64 * self.h)
    }

    pub fn xi(&self, k: usize) -> f64 {
        (k as f64 - (self.n / 2) as f64) * self.dxi()
    }

    pub fn index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for a in (0..self.dim).rev() {
            idx[a] = flat % self.n;
            flat /= self.n;
        }
        idx
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.index(flat).into_iter().map(|j| self.x(j)).collect()
    }

    pub fn frequency(&self, flat: usize) -> Vec<f64> {
        self.index(flat).into_iter().map(|k| self.xi(k)).collect()
    }

    /// Frequencies of a line `ξ + i b`.
    pub fn line_points(&self, b: &[f64]) -> Vec<Vec<C64>> {
        (0..self.len()).map(|k| self.frequency(k).iter().zip(b).map(|(x, b)| C64::new(*x, *b)).collect()).collect()
    }
}

/// Applies `m` (rows: output index, cols: input index) along `axis` of a
/// row-major `n^dim` array.
fn apply_axis(data: &[C64], n: usize, dim: usize, axis: usize, m: &[Vec<C64>]) -> Vec<C64> {
    let inner = n.pow((dim - axis - 1) as u32);
    let outer = n.pow(axis as u32);
    let mut out = vec![C64::new(0.0, 0.0); data.len()];
    out.par_chunks_mut(n * inner).enumerate().for_each(|(o, chunk)| {
        debug_assert!(o < outer);
        let base = o * n * inner;
        for r in 0..inner {
            for (k, row) in m.iter().enumerate() {
                let mut s = C64::new(0.0, 0.0);
                for (j, w) in row.iter().enumerate() {
                    s += w * data[base + j * inner + r];
                }
                chunk[k * inner + r] = s;
            }
        }
    });
    out
}

/// `Σ_j h^n f(x_j) e^{−i x_j·z}` on the tensor set `z = (z₁[k₁], …, zₙ[kₙ])`.
fn forward(grid: &FieldGrid, samples: &[C64], axis_points: &[Vec<C64>]) -> Vec<C64> {
    let mut data = samples.to_vec();
    for (a, pts) in axis_points.iter().enumerate() {
        let m: Vec<Vec<C64>> =
            pts.iter().map(|z| (0..grid.n).map(|j| (-I * z * grid.x(j)).exp() * grid.h).collect()).collect();
        data = apply_axis(&data, grid.n, grid.dim, a, &m);
    }
    data
}

/// Inverse of the real-line transform on the frequency grid.
fn inverse(grid: &FieldGrid, spectrum: &[C64]) -> Vec<C64> {
    let scale = grid.dxi() / (2.0 * PI);
    let m: Vec<Vec<C64>> =
        (0..grid.n).map(|j| (0..grid.n).map(|k| (I * grid.x(j) * grid.xi(k)).exp() * scale).collect()).collect();
    let mut data = spectrum.to_vec();
    for a in 0..grid.dim {
        data = apply_axis(&data, grid.n, grid.dim, a, &m);
    }
    data
}

fn axis_line(grid: &FieldGrid, b: &[f64], scale: &[f64]) -> Vec<Vec<C64>> {
    (0..grid.dim).map(|a| (0..grid.n).map(|k| C64::new(grid.xi(k), b[a]) * scale[a]).collect()).collect()
}

// ---------------------------------------------------------------------------
// Fields

#[derive(Debug, Clone)]
pub struct Line {
    /// Imaginary offset `b` of the line `ξ + i b`.
    pub shift: Vec<f64>,
    pub values: Vec<C64>,
}

#[derive(Debug, Clone)]
pub struct SpectralField {
    pub grid: FieldGrid,
    pub beta: f64,
    pub samples: Vec<C64>,
    /// Real line first, then `+β/2 e_ℓ`, `−β/2 e_ℓ` for each axis `ℓ`.
    pub lines: Vec<Line>,
    pub triple_norm: f64,
}

fn line_shifts(dim: usize, beta: f64) -> Vec<Vec<f64>> {
    let mut v = vec![vec![0.0; dim]];
    for l in 0..dim {
        for s in [0.5, -0.5] {
            let mut b = vec![0.0; dim];
            b[l] = s * beta;
            v.push(b);
        }
    }
    v
}

fn triple_norm_of(grid: &FieldGrid, lines: &[Line]) -> f64 {
    let w = grid.dxi().powi(grid.dim as i32);
    lines[1..].iter().map(|l| l.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * w).sum::<f64>().sqrt()
}

impl SpectralField {
    /// Field from physical samples; line data are transforms of
    /// `f(x) e^{b·x}`.
    pub fn from_samples(grid: FieldGrid, beta: f64, samples: Vec<C64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(PerturbedError::Dimension(format!("{} samples for {} nodes", samples.len(), grid.len())));
        }
        if !(beta > 0.0) {
            return Err(PerturbedError::Invalid(format!("β = {beta} must be positive")));
        }
        let edge = boundary_excess(&grid, beta, &samples);
        if !(edge < 1e-12) {
            return Err(PerturbedError::NotDecaying(edge));
        }
        let ones = vec![1.0; grid.dim];
        let lines: Vec<Line> = line_shifts(grid.dim, beta)
            .into_iter()
            .map(|b| Line { values: forward(&grid, &samples, &axis_line(&grid, &b, &ones)), shift: b })
            .collect();
        let triple_norm = triple_norm_of(&grid, &lines);
        Ok(SpectralField { grid, beta, samples, lines, triple_norm })
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: FieldGrid, beta: f64, f: F) -> Result<Self> {
        let samples = (0..grid.len()).map(|j| C64::new(f(&grid.point(j)), 0.0)).collect();
        Self::from_samples(grid, beta, samples)
    }

    /// Field with a prescribed real-line transform; samples by inversion.
    pub fn from_spectrum<F: Fn(&[C64]) -> C64 + Sync>(grid: FieldGrid, beta: f64, fhat: F) -> Result<Self> {
        let pts = grid.line_points(&vec![0.0; grid.dim]);
        let spectrum: Vec<C64> = pts.par_iter().map(|z| fhat(z)).collect();
        Self::from_samples(grid, beta, inverse(&grid, &spectrum))
    }

    /// Field from per-line values; samples come from the real line.
    fn from_lines(grid: FieldGrid, beta: f64, lines: Vec<Line>) -> Self {
        let samples = inverse(&grid, &lines[0].values);
        let triple_norm = triple_norm_of(&grid, &lines);
        SpectralField { grid, beta, samples, lines, triple_norm }
    }

    /// `f̂` at the tensor set of per-axis complex points.
    pub fn transform_at(&self, axis_points: &[Vec<C64>]) -> Vec<C64> {
        forward(&self.grid, &self.samples, axis_points)
    }

    pub fn mass(&self) -> C64 {
        self.samples.iter().sum::<C64>() * self.grid.h.powi(self.grid.dim as i32)
    }

    pub fn weighted_norm(&self) -> f64 {
        WeightedSpace { beta: self.beta, dim: self.grid.dim }.norm(&self.grid, &self.samples)
    }

    pub fn combine(&self, a: C64, other: &SpectralField, b: C64) -> Result<SpectralField> {
        if self.grid != other.grid || self.beta != other.beta {
            return Err(PerturbedError::Dimension("fields live on different grids".into()));
        }
        let lines = self
            .lines
            .iter()
            .zip(&other.lines)
            .map(|(p, q)| Line { shift: p.shift.clone(), values: p.values.iter().zip(&q.values).map(|(x, y)| a * x + b * y).collect() })
            .collect();
        Ok(SpectralField::from_lines(self.grid, self.beta, lines))
    }

    /// `max |f̂(ξ+ib) − F[f e^{b·x}](ξ)|` over the stored lines, relative to
    /// the largest value: agreement of line data with the samples.
    pub fn line_consistency(&self) -> f64 {
        let ones = vec![1.0; self.grid.dim];
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for l in &self.lines {
            let direct = forward(&self.grid, &self.samples, &axis_line(&self.grid, &l.shift, &ones));
            for (a, b) in l.values.iter().zip(&direct) {
                worst = worst.max((a - b).norm());
                scale = scale.max(b.norm());
            }
        }
        worst / scale.max(1e-300)
    }

    /// Rows `(ξ…, line, Re f̂, Im f̂)`.
    pub fn dump_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let cols: Vec<String> = (0..self.grid.dim).map(|a| format!("xi{}", a + 1)).collect();
        writeln!(out, "{},line,re,im", cols.join(","))?;
        for (li, l) in self.lines.iter().enumerate() {
            for (k, v) in l.values.iter().enumerate() {
                let xi: Vec<String> = self.grid.frequency(k).iter().map(|x| format!("{x:.16e}")).collect();
                writeln!(out, "{},{li},{:.16e},{:.16e}", xi.join(","), v.re, v.im)?;
            }
        }
        Ok(())
    }
}

fn boundary_excess(grid: &FieldGrid, beta: f64, samples: &[C64]) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..grid.len() {
        let idx = grid.index(j);
        if idx.iter().any(|&i| i == 0 || i + 1 == grid.n) {
            let r = grid.point(j).iter().map(|x| x.abs()).fold(0.0, f64::max);
            worst = worst.max((0.5 * beta * r).exp() * samples[j].norm());
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Kernels

/// Spectrum `θ̂` of a convolution kernel, evaluable at complex points.
#[derive(Clone)]
pub enum Kernel {
    Zero,
    /// `Θf = f(x+α) − f(x−α)`, `θ̂(z) = 2i sin(α·z)`.
    ShiftDifference { alpha: Vec<f64> },
    /// 1D kernel from uniformly spaced real-line values of `θ̂`.
    Table(TableKernel),
    Constant(C64),
    /// `θ̂(Aᵀ z)`: the kernel after the change of variables `y = A x`.
    Mapped { inner: Box<Kernel>, a_t: Mat },
    Custom { dim: usize, f: Arc<dyn Fn(&[C64]) -> C64 + Send + Sync> },
}

impl std::fmt::Debug for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Kernel::Zero => write!(f, "Zero"),
            Kernel::ShiftDifference { alpha } => write!(f, "ShiftDifference({alpha:?})"),
            Kernel::Table(t) => write!(f, "Table({} nodes)", t.xi.len()),
            Kernel::Constant(c) => write!(f, "Constant({c})"),
            Kernel::Mapped { inner, .. } => write!(f, "Mapped({inner:?})"),
            Kernel::Custom { dim, .. } => write!(f, "Custom(dim {dim})"),
        }
    }
}

impl Kernel {
    pub fn theta_hat(&self, z: &[C64]) -> C64 {
        match self {
            Kernel::Zero => C64::new(0.0, 0.0),
            Kernel::ShiftDifference { alpha } => {
                let s: C64 = alpha.iter().zip(z).map(|(a, z)| z * *a).sum();
                2.0 * I * s.sin()
            }
            Kernel::Table(t) => t.eval(z[0]),
            Kernel::Constant(c) => *c,
            Kernel::Mapped { inner, a_t } => {
                let w: Vec<C64> = (0..a_t.nrows()).map(|r| (0..a_t.ncols()).map(|c| z[c] * a_t[(r, c)]).sum()).collect();
                inner.theta_hat(&w)
            }
            Kernel::Custom { f, .. } => f(z),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Kernel::ShiftDifference { alpha } => Some(alpha.len()),
            Kernel::Table(_) => Some(1),
            Kernel::Mapped { a_t, .. } => Some(a_t.ncols()),
            Kernel::Custom { dim, .. } => Some(*dim),
            Kernel::Zero | Kernel::Constant(_) => None,
        }
    }
}

/// Table kernel: `ϑ` is recovered on a grid by inverse quadrature and the
/// transform is continued off the real line by direct summation.
#[derive(Debug, Clone)]
pub struct TableKernel {
    pub xi: Vec<f64>,
    pub values: Vec<C64>,
    x: Vec<f64>,
    h: f64,
    kernel: Vec<C64>,
}

impl TableKernel {
    pub fn new(xi: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        let n = xi.len();
        if n < 8 || values.len() != n {
            return Err(PerturbedError::Invalid("table needs at least 8 matching ξ and θ̂ values".into()));
        }
        let d = xi[1] - xi[0];
        if !(d > 0.0) || xi.windows(2).any(|w| ((w[1] - w[0]) - d).abs() > 1e-9 * d.abs().max(1.0)) {
            return Err(PerturbedError::Invalid("table ξ values must be increasing and uniformly spaced".into()));
        }
        let h = 2.0 * PI / (n as f64 * d);
        let x: Vec<f64> = (0..n).map(|j| (j as f64 - (n / 2) as f64) * h).collect();
        let kernel = x
            .iter()
            .map(|&xj| {
                (0..n)
                    .map(|k| {
                        let w = if k == 0 || k + 1 == n { 0.5 * d } else { d };
                        values[k] * (I * xj * xi[k]).exp() * w
                    })
                    .sum::<C64>()
                    / (2.0 * PI)
            })
            .collect();
        Ok(TableKernel { xi, values, x, h, kernel })
    }

    pub fn eval(&self, z: C64) -> C64 {
        self.x.iter().zip(&self.kernel).map(|(x, k)| k * (-I * z * *x).exp()).sum::<C64>() * self.h
    }
}

/// JSON form of a kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    ShiftDifference { alpha: f64 },
    Table { xi: Vec<f64>, theta_hat_re: Vec<f64>, theta_hat_im: Vec<f64> },
    Zero,
}

impl KernelSpec {
    pub fn build(&self, dim: usize) -> Result<Kernel> {
        match self {
            KernelSpec::ShiftDifference { alpha } => {
                let mut a = vec![0.0; dim];
                a[0] = *alpha;
                Ok(Kernel::ShiftDifference { alpha: a })
            }
            KernelSpec::Table { xi, theta_hat_re, theta_hat_im } => {
                if dim != 1 {
                    return Err(PerturbedError::Dimension("table kernels are one-dimensional".into()));
                }
                if theta_hat_re.len() != xi.len() || theta_hat_im.len() != xi.len() {
                    return Err(PerturbedError::Invalid("table columns differ in length".into()));
                }
                let v = theta_hat_re.iter().zip(theta_hat_im).map(|(r, i)| C64::new(*r, *i)).collect();
                Ok(Kernel::Table(TableKernel::new(xi.clone(), v)?))
            }
            KernelSpec::Zero => Ok(Kernel::Zero),
        }
    }
}

// ---------------------------------------------------------------------------
// Perturbation, conditions (C), ψ̂

#[derive(Debug, Clone)]
pub struct Perturbation {
    pub kernel: Kernel,
    pub c: Vec<f64>,
}

impl Perturbation {
    pub fn new(kernel: Kernel, c: Vec<f64>) -> Result<Self> {
        if c.is_empty() || !(c[0] > 0.0) || c.windows(2).any(|w| w[1] < w[0]) || c.iter().any(|x| !x.is_finite()) {
            return Err(PerturbedError::Invalid(format!("drift entries {c:?} must satisfy 0 < c₁ ≤ … ≤ cₙ")));
        }
        if let Some(d) = kernel.dim() {
            if d != c.len() {
                return Err(PerturbedError::Dimension(format!("kernel acts in dimension {d}, drift has {}", c.len())));
            }
        }
        Ok(Perturbation { kernel, c })
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }
}

/// Reduces `∂t f = div(D∇f + Cxf) + ϑ*f` with SPD `D` and `D^{-1/2}CD^{1/2}`
/// symmetric to `D = I`, `C = diag(c)` via `y = A x`. Returns `c`, the
/// mapped kernel and `A`.
pub fn reduce(d: &Mat, c: &Mat, kernel: Kernel) -> Result<(Vec<f64>, Kernel, Mat)> {
    let n = d.nrows();
    if d.ncols() != n || c.nrows() != n || c.ncols() != n {
        return Err(PerturbedError::Dimension("D and C must be square and equal in size".into()));
    }
    let ds = linalg::sqrt_spd(d).map_err(|e| PerturbedError::Invalid(e.to_string()))?;
    let dsi = linalg::inv_sqrt_spd(d).map_err(|e| PerturbedError::Invalid(e.to_string()))?;
    let ct = &dsi * c * &ds;
    let asym = linalg::skew(&ct).norm();
    if asym > 1e-10 * (1.0 + ct.norm()) {
        return Err(PerturbedError::NotReducible(asym));
    }
    let eig = linalg::sym(&ct).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let u = Mat::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    let cvals: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let a = u.transpose() * dsi;
    let mapped = match kernel {
        Kernel::Zero => Kernel::Zero,
        k => Kernel::Mapped { inner: Box::new(k), a_t: a.transpose() },
    };
    Ok((cvals, mapped, a))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionBounds {
    /// Bound for `sup |θ̂|` on the sampled lines.
    pub theta_sup: f64,
    /// Tolerance for `|θ̂(0)|`.
    pub mass_tol: f64,
    /// Bound for `sup Re ∫₀¹ s⁻¹ θ̂(s^C ξ) ds`.
    pub re_integral_sup: f64,
}

impl Default for ConditionBounds {
    fn default() -> Self {
        ConditionBounds { theta_sup: 1e8, mass_tol: 1e-10, re_integral_sup: 50.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionReport {
    pub theta_sup: f64,
    pub theta_at_zero: f64,
    pub re_integral_sup: f64,
    pub bounded: bool,
    pub massless: bool,
    pub integral_bounded: bool,
}

impl ConditionReport {
    pub fn passes(&self) -> bool {
        self.bounded && self.massless && self.integral_bounded
    }
}

/// Samples (C)(i)–(iii) on `samples` points per axis of `|ξ| ≤ ξ_max` on the
/// lines `Im z = t·(±β/2)e_ℓ`, `t ∈ {0, ½, 1}`.
pub fn check_conditions_c(
    p: &Perturbation,
    space: &WeightedSpace,
    samples: usize,
    xi_max: f64,
    bounds: &ConditionBounds,
) -> ConditionReport {
    let n = p.dim();
    let zero = vec![C64::new(0.0, 0.0); n];
    let theta0 = p.kernel.theta_hat(&zero).norm();
    let massless = theta0 <= bounds.mass_tol;
    let m = samples.max(2);
    let mut pts: Vec<Vec<C64>> = Vec::new();
    for b in line_shifts(n, space.beta) {
        for scale in [0.0, 0.5, 1.0] {
            if scale == 0.0 && b.iter().any(|v| *v != 0.0) {
                continue;
            }
            for k in 0..m.pow(n as u32) {
                let mut r = k;
                let z: Vec<C64> = (0..n)
                    .map(|a| {
                        let i = r % m;
                        r /= m;
                        C64::new(-xi_max + 2.0 * xi_max * i as f64 / (m - 1) as f64, scale * b[a])
                    })
                    .collect();
                pts.push(z);
            }
        }
    }
    let theta_sup = pts.par_iter().map(|z| p.kernel.theta_hat(z).norm()).reduce(|| 0.0, f64::max);
    let re_integral_sup = if massless {
        pts.par_iter()
            .map(|z| log_psi_hat(p, z).map(|v| v.re).unwrap_or(f64::INFINITY))
            .reduce(|| f64::NEG_INFINITY, f64::max)
    } else {
        f64::INFINITY
    };
    ConditionReport {
        theta_sup,
        theta_at_zero: theta0,
        re_integral_sup,
        bounded: theta_sup.is_finite() && theta_sup <= bounds.theta_sup,
        massless,
        integral_bounded: re_integral_sup.is_finite() && re_integral_sup <= bounds.re_integral_sup,
    }
}

// Gauss–Kronrod 7/15 rule on [−1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let s = f(c - h * XGK[i]) + f(c + h * XGK[i]);
        k += s * WGK[i];
        if i % 2 == 1 {
            g += s * WG[i / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

fn adaptive<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> Option<C64> {
    let (k, err) = gk15(f, a, b);
    if err <= tol || (b - a) < 1e-12 {
        return Some(k);
    }
    if depth == 0 {
        return None;
    }
    let m = 0.5 * (a + b);
    Some(adaptive(f, a, m, 0.5 * tol, depth - 1)? + adaptive(f, m, b, 0.5 * tol, depth - 1)?)
}

/// Relative accuracy targeted by the ψ̂ quadrature.
pub const PSI_REL_TOL: f64 = 1e-12;

/// `∫₀¹ s⁻¹ θ̂(s^C z) ds = ∫₀^∞ θ̂(e^{−uC} z) du`, truncated where the
/// tail falls below 1e-15.
pub fn log_psi_hat(p: &Perturbation, z: &[C64]) -> Result<C64> {
    let theta = |u: f64| {
        let w: Vec<C64> = z.iter().zip(&p.c).map(|(z, c)| z * (-u * c).exp()).collect();
        p.kernel.theta_hat(&w)
    };
    let c1 = p.c[0];
    let mut u_max: f64 = 1.0;
    while theta(u_max).norm() / c1 > 1e-15 {
        u_max *= 2.0;
        if u_max > 4096.0 {
            return Err(PerturbedError::Quadrature(format!("{z:?}: integrand does not decay")));
        }
    }
    // split at unit intervals first so that early oscillations are seen
    let pieces = u_max.ceil() as usize;
    let coarse: C64 = (0..pieces).map(|i| gk15(&theta, i as f64, (i + 1) as f64).0.norm()).sum::<f64>().into();
    let tol = PSI_REL_TOL * coarse.re.max(1e-14);
    let mut total = C64::new(0.0, 0.0);
    for i in 0..pieces {
        total += adaptive(&theta, i as f64, (i + 1) as f64, tol / pieces as f64, 40)
            .ok_or_else(|| PerturbedError::Quadrature(format!("{z:?}")))?;
    }
    Ok(total)
}

pub fn psi_hat(p: &Perturbation, z: &[C64]) -> Result<C64> {
    if matches!(p.kernel, Kernel::Zero) {
        return Ok(C64::new(1.0, 0.0));
    }
    Ok(log_psi_hat(p, z)?.exp())
}

fn psi_on_points(p: &Perturbation, pts: &[Vec<C64>]) -> Result<Vec<C64>> {
    pts.par_iter().map(|z| psi_hat(p, z)).collect()
}

// ---------------------------------------------------------------------------
// Evolution

/// `exp(−Σ z_ℓ² (1 − e^{−2tc_ℓ})/(2c_ℓ))`
fn heat_factor(c: &[f64], t: f64, z: &[C64]) -> C64 {
    let s: C64 = z.iter().zip(c).map(|(z, c)| z * z * ((1.0 - (-2.0 * t * c).exp()) / (2.0 * c))).sum();
    (-s).exp()
}

fn check_field(field: &SpectralField, c: &[f64], t: f64) -> Result<()> {
    if field.grid.dim != c.len() {
        return Err(PerturbedError::Dimension(format!("field dimension {} vs drift dimension {}", field.grid.dim, c.len())));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(PerturbedError::Invalid(format!("t = {t} must be non-negative")));
    }
    Ok(())
}

/// Unperturbed semigroup in Fourier space, per line:
/// `f̂(t, z) = heat(t, z) · f̂(e^{−tC} z)`.
pub fn evolve_fourier(field: &SpectralField, c: &[f64], t: f64) -> Result<SpectralField> {
    evolve_with(field, c, t, None)
}

/// `e^{t(L+Θ)} = Ψ e^{tL} Ψ⁻¹` with `Ψ` multiplication by `ψ̂`, per line.
pub fn evolve_perturbed(p: &Perturbation, field: &SpectralField, t: f64) -> Result<SpectralField> {
    evolve_with(field, &p.c, t, Some(p))
}

fn evolve_with(field: &SpectralField, c: &[f64], t: f64, p: Option<&Perturbation>) -> Result<SpectralField> {
    check_field(field, c, t)?;
    if t == 0.0 {
        return Ok(field.clone());
    }
    let grid = field.grid;
    let compress: Vec<f64> = c.iter().map(|c| (-t * c).exp()).collect();
    let mut lines = Vec::with_capacity(field.lines.len());
    for l in &field.lines {
        let here = grid.line_points(&l.shift);
        let moved = field.transform_at(&axis_line(&grid, &l.shift, &compress));
        let mut values: Vec<C64> = here.par_iter().zip(&moved).map(|(z, m)| heat_factor(c, t, z) * m).collect();
        if let Some(p) = p {
            let there: Vec<Vec<C64>> = here.iter().map(|z| z.iter().zip(&compress).map(|(z, s)| z * *s).collect()).collect();
            let psi_here = psi_on_points(p, &here)?;
            let psi_there = psi_on_points(p, &there)?;
            for k in 0..values.len() {
                values[k] *= psi_here[k] / psi_there[k];
            }
        }
        lines.push(Line { shift: l.shift.clone(), values });
    }
    Ok(SpectralField::from_lines(grid, field.beta, lines))
}

/// `Ψ f` (multiply every line by `ψ̂`) or `Ψ⁻¹ f` (divide).
pub fn apply_psi(p: &Perturbation, field: &SpectralField, inverse: bool) -> Result<SpectralField> {
    check_field(field, &p.c, 0.0)?;
    let mut lines = Vec::with_capacity(field.lines.len());
    for l in &field.lines {
        let psi = psi_on_points(p, &field.grid.line_points(&l.shift))?;
        let values = l.values.iter().zip(&psi).map(|(v, s)| if inverse { v / s } else { v * s }).collect();
        lines.push(Line { shift: l.shift.clone(), values });
    }
    Ok(SpectralField::from_lines(field.grid, field.beta, lines))
}

/// 15-point Kronrod nodes and weights for the standard normal variable on
/// `[−10, 10]`, with panels no wider than `width`.
fn composite_normal_rule(width: f64) -> (Vec<f64>, Vec<f64>) {
    let panels = (20.0 / width.min(0.5)).ceil() as usize;
    let h = 10.0 / panels as f64;
    let norm = 1.0 / (2.0 * PI).sqrt();
    let (mut nodes, mut weights) = (Vec::new(), Vec::new());
    for p in 0..panels {
        let c = -10.0 + (2 * p + 1) as f64 * h;
        for i in 0..15 {
            let (x, w) = if i < 7 { (-XGK[i], WGK[i]) } else if i == 7 { (0.0, WGK[7]) } else { (XGK[14 - i], WGK[14 - i]) };
            let u = c + h * x;
            nodes.push(u);
            weights.push(w * h * norm * (-0.5 * u * u).exp());
        }
    }
    (nodes, weights)
}

/// Pointwise evaluation of the physical-space semigroup
/// `e^{t trC}/((4π)^{n/2} det Q_t^{1/2}) ∫ exp(−¼ yᵀQ_t⁻¹y) f(e^{tC}x − y) dy`,
/// `Q_t = (2C)⁻¹(e^{2tC} − I)`, by composite Kronrod quadrature in the
/// standardized variable. `scale` is a length below which `f` is smooth; each
/// panel spans at most that much of `y`.
pub fn semigroup_physical<F: Fn(&[f64]) -> f64 + Sync>(c: &[f64], f: F, x: &[f64], t: f64, scale: f64) -> f64 {
    let n = c.len();
    if t == 0.0 {
        return f(x);
    }
    // y_ℓ ~ N(0, 2 Q_ℓ)
    let sd: Vec<f64> = c.iter().map(|c| (2.0 * ((2.0 * t * c).exp() - 1.0) / (2.0 * c)).sqrt()).collect();
    let rules: Vec<(Vec<f64>, Vec<f64>)> = sd.iter().map(|s| composite_normal_rule(scale / s)).collect();
    let center: Vec<f64> = x.iter().zip(c).map(|(x, c)| (t * c).exp() * x).collect();
    let jac = (t * c.iter().sum::<f64>()).exp();
    let total: usize = rules.iter().map(|r| r.0.len()).product();
    let mut acc = 0.0;
    let mut y = vec![0.0; n];
    for k in 0..total {
        let (mut r, mut w) = (k, 1.0);
        for a in 0..n {
            let m = rules[a].0.len();
            y[a] = center[a] - sd[a] * rules[a].0[r % m];
            w *= rules[a].1[r % m];
            r /= m;
        }
        acc += w * f(&y);
    }
    jac * acc
}

// ---------------------------------------------------------------------------
// Eigenfunctions and projections

/// `μ̂₀(ξ) = exp(−Σ ξ_ℓ²/(2c_ℓ))`.
pub fn mu0_hat(c: &[f64], z: &[C64]) -> C64 {
    (-z.iter().zip(c).map(|(z, c)| z * z / (2.0 * c)).sum::<C64>()).exp()
}

fn monomial(z: &[C64], k: &[usize]) -> C64 {
    z.iter().zip(k).map(|(z, &k)| (I * z).powu(k as u32)).product()
}

/// Unperturbed eigenfunctions `μ_k = ∇^k μ₀`.
pub fn eigenfunctions(c: &[f64], grid: FieldGrid, beta: f64, multi_indices: &[Vec<usize>]) -> Result<Vec<SpectralField>> {
    multi_indices
        .iter()
        .map(|k| SpectralField::from_spectrum(grid, beta, |z| monomial(z, k) * mu0_hat(c, z)))
        .collect()
}

/// `f̂_k = ψ̂ (iξ)^k μ̂₀`, eigenfunctions of `L + Θ` for `−c·k`.
pub fn eigenfunctions_perturbed(
    p: &Perturbation,
    grid: FieldGrid,
    beta: f64,
    multi_indices: &[Vec<usize>],
) -> Result<Vec<SpectralField>> {
    let mut out = Vec::with_capacity(multi_indices.len());
    for k in multi_indices {
        if k.len() != p.dim() {
            return Err(PerturbedError::Dimension(format!("multi-index {k:?} in dimension {}", p.dim())));
        }
        let pts = grid.line_points(&vec![0.0; grid.dim]);
        let psi = psi_on_points(p, &pts)?;
        let spectrum: Vec<C64> = pts.iter().zip(&psi).map(|(z, s)| s * monomial(z, k) * mu0_hat(&p.c, z)).collect();
        out.push(SpectralField::from_samples(grid, beta, inverse(&grid, &spectrum))?);
    }
    Ok(out)
}

/// All multi-indices of dimension `n` with `|k|₁ ≤ order`.
pub fn multi_indices(n: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; n]];
    let mut frontier = out.clone();
    for _ in 0..order {
        let mut next = Vec::new();
        for k in &frontier {
            for a in 0..n {
                let mut m = k.clone();
                m[a] += 1;
                if !out.contains(&m) && !next.contains(&m) {
                    next.push(m);
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn moment(field: &SpectralField, k: &[usize]) -> C64 {
    let g = &field.grid;
    let w = g.h.powi(g.dim as i32);
    (0..g.len())
        .map(|j| {
            let x = g.point(j);
            field.samples[j] * x.iter().zip(k).map(|(x, &k)| x.powi(k as i32)).product::<f64>()
        })
        .sum::<C64>()
        * w
}

pub enum ProjectionBasis<'a> {
    Unperturbed(&'a [f64]),
    Perturbed(&'a Perturbation),
}

/// Removes the span of the basis functions with `|j|₁ ≤ k − 1` so that all
/// moments `∫ f x^j` with `|j|₁ ≤ k − 1` vanish.
pub fn moment_projection(field: &SpectralField, k: usize, basis: ProjectionBasis<'_>) -> Result<SpectralField> {
    if k == 0 {
        return Ok(field.clone());
    }
    if k > 5 {
        return Err(PerturbedError::Invalid(format!("projection order {k} too large (≤ 5)")));
    }
    let idx = multi_indices(field.grid.dim, k - 1);
    let funcs = match basis {
        ProjectionBasis::Unperturbed(c) => eigenfunctions(c, field.grid, field.beta, &idx)?,
        ProjectionBasis::Perturbed(p) => eigenfunctions_perturbed(p, field.grid, field.beta, &idx)?,
    };
    let m = idx.len();
    let a = nalgebra::DMatrix::<C64>::from_fn(m, m, |r, s| moment(&funcs[s], &idx[r]));
    let b = nalgebra::DVector::<C64>::from_fn(m, |r, _| moment(field, &idx[r]));
    let sv = a.clone().svd(false, false).singular_values;
    let rcond = sv.min() / sv.max();
    if !(rcond > 1e-12) {
        return Err(PerturbedError::IllConditioned(rcond));
    }
    let coef = a.lu().solve(&b).ok_or(PerturbedError::IllConditioned(0.0))?;
    let mut out = field.clone();
    for (s, f) in funcs.iter().enumerate() {
        out = out.combine(C64::new(1.0, 0.0), f, -coef[s])?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Collocation discretization (1D)

/// Dense Fourier-collocation matrix of
/// `(L + Θ)f = f'' + c x f' + c f + ϑ * f` on the periodic grid of `grid`
/// (one dimension).
pub fn collocation_operator(p: &Perturbation, grid: &FieldGrid) -> Result<Mat> {
    if p.dim() != 1 || grid.dim != 1 {
        return Err(PerturbedError::Dimension("collocation operator is one-dimensional".into()));
    }
    let n = grid.n;
    let c = p.c[0];
    // frequencies in DFT order; the Nyquist mode gets real multipliers
    let freq = |k: usize| -> f64 {
        let kk = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
        2.0 * PI * kk / (n as f64 * grid.h)
    };
    let x: Vec<f64> = (0..n).map(|j| grid.x(j)).collect();
    let mult = |k: usize, what: u8| -> C64 {
        let w = freq(k);
        let nyq = k == n / 2;
        match what {
            1 => {
                if nyq {
                    C64::new(0.0, 0.0)
                } else {
                    I * w
                }
            }
            2 => C64::new(-w * w, 0.0),
            _ => {
                let z = [C64::new(w, 0.0)];
                let th = p.kernel.theta_hat(&z);
                if nyq {
                    let zm = [C64::new(-w, 0.0)];
                    0.5 * (th + p.kernel.theta_hat(&zm))
                } else {
                    th
                }
            }
        }
    };
    // row j of the operator M = F⁻¹ diag(m) F with F_{kq} = e^{−2πikq/n}
    let build = |what: u8| -> Mat {
        let m: Vec<C64> = (0..n).map(|k| mult(k, what)).collect();
        Mat::from_fn(n, n, |j, q| {
            let mut s = C64::new(0.0, 0.0);
            for (k, mk) in m.iter().enumerate() {
                let phase = 2.0 * PI * ((k * ((j + n - q) % n)) % n) as f64 / n as f64;
                s += mk * C64::from_polar(1.0, phase);
            }
            s.re / n as f64
        })
    };
    let d1 = build(1);
    let d2 = build(2);
    let th = build(3);
    let xd = Mat::from_diagonal(&DVector::from_vec(x)) * d1;
    Ok(d2 + xd * c + Mat::identity(n, n) * c + th)
}

/// Eigenvalues of the collocation matrix, sorted by decreasing real part.
pub fn collocation_spectrum(p: &Perturbation, grid: &FieldGrid) -> Result<Vec<C64>> {
    let a = collocation_operator(p, grid)?;
    let mut ev: Vec<C64> = a.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.re.total_cmp(&a.re));
    Ok(ev)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedEigenvalue {
    pub value: C64,
    /// Share of `|v|²` on `|x| > 3/4` of the half width.
    pub boundary_fraction: f64,
}

/// Collocation eigenvalues whose eigenvectors live in the interior: the
/// periodic wrap of `x` creates modes trapped at the domain edge, which are
/// discarded when more than `max_boundary_fraction` of their energy sits in
/// the outer quarter. Returns the first `count` resolved values by
/// decreasing real part.
pub fn resolved_spectrum(p: &Perturbation, grid: &FieldGrid, count: usize, max_boundary_fraction: f64) -> Result<Vec<ResolvedEigenvalue>> {
    let a = collocation_operator(p, grid)?;
    let mut ev: Vec<C64> = a.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.re.total_cmp(&a.re));
    let n = grid.n;
    let ac = a.map(|v| C64::new(v, 0.0));
    let edge = 0.75 * grid.x(0).abs();
    let mut out = Vec::new();
    for lambda in ev {
        let shift = lambda + C64::new(1e-9 * (1.0 + lambda.norm()), 0.0);
        let lu = (&ac - nalgebra::DMatrix::<C64>::identity(n, n) * shift).lu();
        let mut v = nalgebra::DVector::<C64>::from_fn(n, |j, _| C64::new(1.0 + 0.1 * (j as f64).sin(), 0.0));
        for _ in 0..3 {
            let Some(w) = lu.solve(&v) else { break };
            let norm = w.norm();
            v = w / C64::new(norm, 0.0);
        }
        let total: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let outer: f64 = (0..n).filter(|&j| grid.x(j).abs() > edge).map(|j| v[j].norm_sqr()).sum();
        let fraction = outer / total;
        if fraction <= max_boundary_fraction {
            out.push(ResolvedEigenvalue { value: lambda, boundary_fraction: fraction });
            if out.len() == count {
                break;
            }
        }
    }
    Ok(out)
}

/// `‖A f − λ f‖ / ‖f‖` with the collocation matrix `A` (discrete 2-norms).
pub fn eigen_residual(p: &Perturbation, field: &SpectralField, lambda: f64) -> Result<f64> {
    let a = collocation_operator(p, &field.grid)?;
    let re = DVector::from_iterator(field.grid.n, field.samples.iter().map(|v| v.re));
    let im = DVector::from_iterator(field.grid.n, field.samples.iter().map(|v| v.im));
    let r1 = &a * &re - &re * lambda;
    let r2 = &a * &im - &im * lambda;
    Ok((r1.norm_squared() + r2.norm_squared()).sqrt() / (re.norm_squared() + im.norm_squared()).sqrt())
}
