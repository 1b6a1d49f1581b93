//! Time evolution: exact Gaussian propagation for linear drift, semigroup
//! quadrature on grids, a split-step phase-space solver for the kinetic
//! equation, and entropy traces.

use crate::entropy::{self, Axis, Density, EntropyError, EntropyGenerator, GaussianDensity, Grid, GridDensity};
use crate::fp_model::{self, FpModel, ModelError, SteadyState};
use crate::kinetic_cert::{KineticError, KineticParams};
use crate::linalg::{self, LinalgError, Mat};
use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Kinetic(#[from] KineticError),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("grid evolution supports d ≤ 2, got d = {0}")]
    Dimension(usize),
    #[error("grid under-resolved: relative mass drift {0:.3e}")]
    UnderResolved(f64),
    #[error("CFL violation: {0}")]
    Cfl(String),
    #[error("clipped mass {0:.3e} exceeds 1e-3")]
    ClippedMass(f64),
    #[error("rate fit failed: {0}")]
    Fit(String),
}

// ---------------------------------------------------------------------------
// Exact Gaussian propagation

#[derive(Debug, Clone)]
pub struct GaussianTrajectory {
    pub model: FpModel,
    pub m0: DVector<f64>,
    pub sigma0: Mat,
    pub times: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<Mat>,
    pub steady: GaussianDensity,
}

impl GaussianTrajectory {
    pub fn density(&self, i: usize) -> GaussianDensity {
        GaussianDensity { mean: self.means[i].clone(), cov: self.covs[i].clone(), mass: 1.0 }
    }

    pub fn samples(&self) -> Vec<(f64, Density)> {
        (0..self.times.len()).map(|i| (self.times[i], Density::Gaussian(self.density(i)))).collect()
    }

    /// `‖Σ(t) − K‖_F` non-increasing along the samples.
    pub fn covariance_monotone(&self) -> bool {
        let k = &self.steady.cov;
        let dist: Vec<f64> = self.covs.iter().map(|s| (s - k).norm()).collect();
        dist.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-14)
    }
}

fn check_times(times: &[f64]) -> Result<(), SimError> {
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(SimError::Invalid("sample times must be finite and non-negative".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(SimError::Invalid("sample times must be non-decreasing".into()));
    }
    Ok(())
}

/// Mean `e^{−tC} m₀` and covariance `K + e^{−tC}(Σ₀ − K)e^{−tCᵀ}`.
pub fn gaussian_at(ss: &SteadyState, c: &Mat, m0: &DVector<f64>, sigma0: &Mat, t: f64) -> (DVector<f64>, Mat) {
    if t == 0.0 {
        return (m0.clone(), sigma0.clone());
    }
    let e = linalg::expm(&(c * -t));
    let cov = &ss.k + &e * (sigma0 - &ss.k) * e.transpose();
    (&e * m0, linalg::sym(&cov))
}

pub fn propagate_gaussian(
    m: &FpModel,
    m0: &DVector<f64>,
    sigma0: &Mat,
    times: &[f64],
) -> Result<GaussianTrajectory, SimError> {
    let d = m.dim();
    if m0.len() != d || sigma0.nrows() != d || sigma0.ncols() != d {
        return Err(SimError::Invalid(format!("initial data must have dimension {d}")));
    }
    if !linalg::is_spd(sigma0) {
        return Err(SimError::Invalid("Σ₀ must be symmetric positive definite".into()));
    }
    check_times(times)?;
    let ss = fp_model::steady_state(m)?;
    let (means, covs): (Vec<_>, Vec<_>) =
        times.par_iter().map(|&t| gaussian_at(&ss, &m.drift, m0, sigma0, t)).unzip();
    if let Some(c) = covs.iter().find(|c| !linalg::is_spd(c)) {
        return Err(SimError::Invalid(format!("covariance lost definiteness (min eigenvalue {:.3e})", linalg::min_eig_sym(c))));
    }
    Ok(GaussianTrajectory {
        model: m.clone(),
        m0: m0.clone(),
        sigma0: sigma0.clone(),
        times: times.to_vec(),
        means,
        covs,
        steady: GaussianDensity { mean: DVector::zeros(d), cov: ss.k.clone(), mass: 1.0 },
    })
}

/// Finite mixture of Gaussians; each component evolves exactly.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    pub components: Vec<GaussianDensity>,
}

impl GaussianMixture {
    pub fn new(components: Vec<GaussianDensity>) -> Result<Self, SimError> {
        if components.is_empty() {
            return Err(SimError::Invalid("empty mixture".into()));
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(SimError::Invalid("mixture components differ in dimension".into()));
        }
        Ok(GaussianMixture { components })
    }

    pub fn mass(&self) -> f64 {
        self.components.iter().map(|c| c.mass).sum()
    }

    pub fn propagate(&self, ss: &SteadyState, c: &Mat, t: f64) -> GaussianMixture {
        let components = self
            .components
            .iter()
            .map(|g| {
                let (mean, cov) = gaussian_at(ss, c, &g.mean, &g.cov, t);
                GaussianDensity { mean, cov, mass: g.mass }
            })
            .collect();
        GaussianMixture { components }
    }

    pub fn sample(&self, grid: &Grid) -> GridDensity {
        let evals: Vec<_> = self.components.iter().map(|c| c.evaluator()).collect();
        let values: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let x = grid.point(i);
                evals.iter().map(|e| e(&x)).sum()
            })
            .collect();
        let mass = grid.integrate(|i| values[i]);
        GridDensity { grid: grid.clone(), values, mass }
    }
}

// ---------------------------------------------------------------------------
// Grid evolution by semigroup quadrature

/// Probabilists' Gauss–Hermite rule (weight `N(0,1)`), via the symmetric
/// Jacobi matrix.
pub fn gauss_hermite(m: usize) -> (Vec<f64>, Vec<f64>) {
    let j = Mat::from_fn(m, m, |a, b| if a + 1 == b || b + 1 == a { (a.max(b) as f64).sqrt() } else { 0.0 });
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> =
        (0..m).map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

const GH_NODES: usize = 16;
const MAX_SUBSTEPS: usize = 100_000;

/// Six-point Lagrange stencil on a uniform axis: start index and weights,
/// or `None` outside the axis.
fn stencil(ax: &Axis, x: f64) -> Option<(usize, [f64; 6])> {
    let s = (x - ax.min) / ax.h;
    if s < -1e-9 || s > (ax.n - 1) as f64 + 1e-9 {
        return None;
    }
    let i0 = ((s.floor() as isize) - 2).clamp(0, ax.n as isize - 6) as usize;
    let mut w = [0.0; 6];
    for (a, wa) in w.iter_mut().enumerate() {
        let mut p = 1.0;
        for b in 0..6 {
            if a != b {
                p *= (s - (i0 + b) as f64) / (a as f64 - b as f64);
            }
        }
        *wa = p;
    }
    Some((i0, w))
}

fn interpolate(grid: &Grid, strides: &[usize], values: &[f64], x: &[f64]) -> f64 {
    match grid.dim() {
        1 => match stencil(&grid.axes[0], x[0]) {
            Some((i0, w)) => (0..6).map(|a| w[a] * values[i0 + a]).sum(),
            None => 0.0,
        },
        2 => {
            let (Some((i0, wi)), Some((j0, wj))) = (stencil(&grid.axes[0], x[0]), stencil(&grid.axes[1], x[1])) else {
                return 0.0;
            };
            let mut s = 0.0;
            for a in 0..6 {
                let row = (i0 + a) * strides[0] + j0;
                let mut r = 0.0;
                for b in 0..6 {
                    r += wj[b] * values[row + b];
                }
                s += wi[a] * r;
            }
            s
        }
        d => unreachable!("interpolation in dimension {d}"),
    }
}

/// One application of `f(s,x) = e^{s tr C} ∫ N(w; 0, Σ̃_s) f(e^{sC}x − w) dw`
/// with `Σ̃_s = e^{sC}(K − e^{−sC}Ke^{−sCᵀ})e^{sCᵀ}`.
fn semigroup_step(ss: &SteadyState, c: &Mat, f: &GridDensity, s: f64, gh: &(Vec<f64>, Vec<f64>)) -> Result<Vec<f64>, SimError> {
    let grid = &f.grid;
    let d = grid.dim();
    let ep = linalg::expm(&(c * s));
    let em = linalg::expm(&(c * -s));
    let sigma_s = linalg::sym(&(&ss.k - &em * &ss.k * em.transpose()));
    let sigma_tilde = linalg::sym(&(&ep * sigma_s * ep.transpose()));
    let l = linalg::sqrt_psd(&sigma_tilde)?;
    let (nodes, weights) = gh;
    let m = nodes.len();
    let mut shifts: Vec<(Vec<f64>, f64)> = Vec::with_capacity(m.pow(d as u32));
    for k in 0..m.pow(d as u32) {
        let (mut xi, mut w, mut r) = (vec![0.0; d], 1.0, k);
        for slot in xi.iter_mut() {
            *slot = nodes[r % m];
            w *= weights[r % m];
            r /= m;
        }
        if w < 1e-300 {
            continue;
        }
        let shift: Vec<f64> = (0..d).map(|a| (0..d).map(|b| l[(a, b)] * xi[b]).sum()).collect();
        shifts.push((shift, w));
    }
    let jac = (s * c.trace()).exp();
    let strides = grid.strides();
    let out = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.point(i);
            let a: Vec<f64> = (0..d).map(|r| (0..d).map(|q| ep[(r, q)] * x[q]).sum()).collect();
            let mut acc = 0.0;
            let mut y = vec![0.0; d];
            for (shift, w) in &shifts {
                for r in 0..d {
                    y[r] = a[r] - shift[r];
                }
                acc += w * interpolate(grid, &strides, &f.values, &y);
            }
            (jac * acc).max(0.0)
        })
        .collect();
    Ok(out)
}

/// Evolves grid data over time `t` by repeated semigroup quadrature. The
/// substep keeps the kernel covariance below a quarter of the smallest
/// variance present in `K` or in the data.
pub fn evolve_grid(m: &FpModel, f0: &GridDensity, t: f64) -> Result<GridDensity, SimError> {
    let d = m.dim();
    if f0.grid.dim() != d {
        return Err(SimError::Invalid(format!("grid dimension {} differs from model dimension {d}", f0.grid.dim())));
    }
    if d > 2 {
        return Err(SimError::Dimension(d));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(SimError::Invalid(format!("t = {t} must be positive")));
    }
    if !(f0.mass > 0.0) {
        return Err(SimError::Invalid("initial data has no mass".into()));
    }
    let ss = fp_model::steady_state(m)?;
    let scale = linalg::min_eig_sym(&ss.k).min(linalg::min_eig_sym(&f0.covariance()));
    if !(scale > 0.0) {
        return Err(SimError::Invalid("initial data is degenerate on the grid".into()));
    }
    let target = 0.25 * scale;
    let kernel_size = |s: f64| {
        let ep = linalg::expm(&(&m.drift * s));
        let em = linalg::expm(&(&m.drift * -s));
        let sig = &ss.k - &em * &ss.k * em.transpose();
        linalg::max_eig_sym(&linalg::sym(&(&ep * sig * ep.transpose())))
    };
    let mut n = 1usize;
    while kernel_size(t / n as f64) > target {
        n *= 2;
        if n > MAX_SUBSTEPS {
            return Err(SimError::Invalid(format!("t = {t} needs more than {MAX_SUBSTEPS} substeps")));
        }
    }
    let gh = gauss_hermite(GH_NODES);
    let s = t / n as f64;
    let mut f = f0.clone();
    for _ in 0..n {
        let values = semigroup_step(&ss, &m.drift, &f, s, &gh)?;
        let mass = f.grid.integrate(|i| values[i]);
        f = GridDensity { grid: f.grid.clone(), values, mass };
    }
    let drift = (f.mass - f0.mass).abs() / f0.mass;
    if drift > 1e-4 {
        return Err(SimError::UnderResolved(drift));
    }
    Ok(f)
}

// ---------------------------------------------------------------------------
// Kinetic phase-space solver

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    /// `ω₀² x²/2`
    Quadratic { omega0_sq: f64 },
    /// `ω₀² x²/2 + a cos x`
    QuadraticCosine { omega0_sq: f64, a: f64 },
}

impl Potential {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Potential::Quadratic { omega0_sq } => 0.5 * omega0_sq * x * x,
            Potential::QuadraticCosine { omega0_sq, a } => 0.5 * omega0_sq * x * x + a * x.cos(),
        }
    }

    pub fn gradient(&self, x: f64) -> f64 {
        match *self {
            Potential::Quadratic { omega0_sq } => omega0_sq * x,
            Potential::QuadraticCosine { omega0_sq, a } => omega0_sq * x - a * x.sin(),
        }
    }

    /// `(γ1, γ2)` with `γ1 ≤ V'' ≤ γ2`.
    pub fn curvature_bounds(&self) -> (f64, f64) {
        match *self {
            Potential::Quadratic { omega0_sq } => (omega0_sq, omega0_sq),
            Potential::QuadraticCosine { omega0_sq, a } => (omega0_sq - a.abs(), omega0_sq + a.abs()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticProblem {
    pub nu: f64,
    pub sigma: f64,
    pub potential: Potential,
    pub x_axis: Axis,
    pub v_axis: Axis,
    pub dt: f64,
}

impl KineticProblem {
    pub fn params(&self) -> Result<KineticParams, SimError> {
        let (g1, g2) = self.potential.curvature_bounds();
        Ok(KineticParams::new(self.nu, self.sigma, g1, g2)?)
    }

    pub fn grid(&self) -> Grid {
        Grid::new(vec![self.x_axis.clone(), self.v_axis.clone()])
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let (g1, _) = self.potential.curvature_bounds();
        self.params()?;
        if !(g1 > 0.0) {
            return Err(SimError::Invalid("potential must be uniformly convex (γ1 > 0)".into()));
        }
        if !(self.dt > 0.0) {
            return Err(SimError::Invalid(format!("dt = {} must be positive", self.dt)));
        }
        for (name, ax) in [("x", &self.x_axis), ("v", &self.v_axis)] {
            if ax.n < 8 {
                return Err(SimError::Invalid(format!("{name} axis needs at least 8 nodes")));
            }
        }
        let sd_v = (self.sigma / self.nu).sqrt();
        let sd_x = (self.sigma / (self.nu * g1)).sqrt();
        for (name, ax, sd) in [("v", &self.v_axis, sd_v), ("x", &self.x_axis, sd_x)] {
            if ax.min > -6.0 * sd || ax.max() < 6.0 * sd {
                return Err(SimError::Invalid(format!("{name} axis must cover ±{:.3}", 6.0 * sd)));
            }
        }
        if self.nu * self.dt > 0.5 {
            return Err(SimError::Cfl(format!("ν·dt = {} > 0.5", self.nu * self.dt)));
        }
        let vmax = self.v_axis.min.abs().max(self.v_axis.max().abs());
        let cx = vmax * self.dt / self.x_axis.h;
        let amax = (0..self.x_axis.n).map(|i| self.potential.gradient(self.x_axis.node(i)).abs()).fold(0.0, f64::max);
        let cv = amax * self.dt / self.v_axis.h;
        if cx > 1.0 || cv > 1.0 {
            return Err(SimError::Cfl(format!("transport Courant numbers {cx:.3} (x), {cv:.3} (v) exceed 1")));
        }
        Ok(())
    }

    /// Normalized `exp(−(ν/σ)(V(x) + v²/2))` on the phase grid.
    pub fn steady_state(&self) -> GridDensity {
        let r = self.nu / self.sigma;
        let f = GridDensity::from_fn(&self.grid(), |p| (-r * (self.potential.value(p[0]) + 0.5 * p[1] * p[1])).exp());
        f.with_mass(1.0)
    }
}

#[derive(Debug, Clone)]
pub struct KineticSolution {
    pub times: Vec<f64>,
    pub densities: Vec<GridDensity>,
    pub clipped_mass: f64,
    pub steps: usize,
}

/// Exact periodic translation of each line by `shift(line)` via FFT.
fn spectral_shift(values: &mut [f64], lines: usize, len: usize, stride_line: usize, stride_elem: usize, h: f64, shift: &(dyn Fn(usize) -> f64 + Sync)) -> f64 {
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let period = len as f64 * h;
    let results: Vec<(Vec<f64>, f64)> = (0..lines)
        .into_par_iter()
        .map(|l| {
            let mut buf: Vec<Complex64> = (0..len).map(|k| Complex64::new(values[l * stride_line + k * stride_elem], 0.0)).collect();
            fwd.process(&mut buf);
            let s = shift(l);
            for (k, b) in buf.iter_mut().enumerate() {
                let kk = if 2 * k <= len { k as f64 } else { k as f64 - len as f64 };
                let omega = 2.0 * std::f64::consts::PI * kk / period;
                if 2 * k == len {
                    *b *= (omega * s).cos();
                } else {
                    *b *= Complex64::from_polar(1.0, -omega * s);
                }
            }
            inv.process(&mut buf);
            let mut clipped = 0.0;
            let line: Vec<f64> = buf
                .iter()
                .map(|z| {
                    let v = z.re / len as f64;
                    if v < 0.0 {
                        clipped -= v;
                        0.0
                    } else {
                        v
                    }
                })
                .collect();
            (line, clipped)
        })
        .collect();
    let mut clipped = 0.0;
    for (l, (line, c)) in results.into_iter().enumerate() {
        for (k, v) in line.into_iter().enumerate() {
            values[l * stride_line + k * stride_elem] = v;
        }
        clipped += c;
    }
    clipped
}

/// Crank–Nicolson step for `∂t f = ∂v(σ M ∂v(f/M))` on one line, with the
/// flux `σ√(M_j M_{j+1})(f_{j+1}/M_{j+1} − f_j/M_j)/h` and zero-flux ends.
struct OuLine {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs_lower: Vec<f64>,
    rhs_diag: Vec<f64>,
    rhs_upper: Vec<f64>,
}

impl OuLine {
    fn new(v: &Axis, nu: f64, sigma: f64, dt: f64) -> Self {
        let n = v.n;
        let h = v.h;
        // A f = (J_{j+1/2} − J_{j−1/2}) / w_j, J = σ/h (a f_{j+1} − f_j / a)
        let a: Vec<f64> = (0..n - 1)
            .map(|j| (nu * (v.node(j + 1).powi(2) - v.node(j).powi(2)) / (4.0 * sigma)).exp())
            .collect();
        let mut lo = vec![0.0; n];
        let mut di = vec![0.0; n];
        let mut up = vec![0.0; n];
        for j in 0..n {
            let w = v.trapezoid_weight(j);
            let c = sigma / (h * w);
            if j + 1 < n {
                up[j] += c * a[j];
                di[j] -= c / a[j];
            }
            if j > 0 {
                di[j] -= c * a[j - 1];
                lo[j] += c / a[j - 1];
            }
        }
        let half = 0.5 * dt;
        OuLine {
            lower: lo.iter().map(|x| -half * x).collect(),
            diag: di.iter().map(|x| 1.0 - half * x).collect(),
            upper: up.iter().map(|x| -half * x).collect(),
            rhs_lower: lo.iter().map(|x| half * x).collect(),
            rhs_diag: di.iter().map(|x| 1.0 + half * x).collect(),
            rhs_upper: up.iter().map(|x| half * x).collect(),
        }
    }

    fn apply(&self, f: &mut [f64]) {
        let n = f.len();
        let mut r: Vec<f64> = (0..n)
            .map(|j| {
                let mut s = self.rhs_diag[j] * f[j];
                if j > 0 {
                    s += self.rhs_lower[j] * f[j - 1];
                }
                if j + 1 < n {
                    s += self.rhs_upper[j] * f[j + 1];
                }
                s
            })
            .collect();
        // Thomas algorithm
        let mut c = vec![0.0; n];
        let mut b = self.diag[0];
        c[0] = self.upper[0] / b;
        r[0] /= b;
        for j in 1..n {
            b = self.diag[j] - self.lower[j] * c[j - 1];
            c[j] = self.upper[j] / b;
            r[j] = (r[j] - self.lower[j] * r[j - 1]) / b;
        }
        for j in (0..n - 1).rev() {
            r[j] -= c[j] * r[j + 1];
        }
        f.copy_from_slice(&r);
    }
}

/// Strang splitting: half x-transport, half v-acceleration, a full
/// Ornstein–Uhlenbeck step in v, then the half steps in reverse order.
pub fn solve_kinetic(p: &KineticProblem, f0: &GridDensity, times: &[f64]) -> Result<KineticSolution, SimError> {
    p.validate()?;
    check_times(times)?;
    let grid = p.grid();
    if f0.grid != grid {
        return Err(SimError::Invalid("initial data is not on the problem grid".into()));
    }
    let (nx, nv) = (p.x_axis.n, p.v_axis.n);
    let xs: Vec<f64> = (0..nx).map(|i| p.x_axis.node(i)).collect();
    let vs: Vec<f64> = (0..nv).map(|j| p.v_axis.node(j)).collect();
    let grads: Vec<f64> = xs.iter().map(|&x| p.potential.gradient(x)).collect();
    let mut f = f0.values.clone();
    let mut now = 0.0;
    let mut clipped = 0.0;
    let mut steps = 0;
    let mut densities = Vec::with_capacity(times.len());
    let mut cached: Option<(f64, OuLine)> = None;
    for &target in times {
        let remaining = target - now;
        if remaining > 0.0 {
            let n = (remaining / p.dt - 1e-9).ceil().max(1.0) as usize;
            let dt = remaining / n as f64;
            if cached.as_ref().map_or(true, |(c, _)| *c != dt) {
                cached = Some((dt, OuLine::new(&p.v_axis, p.nu, p.sigma, dt)));
            }
            let ou = &cached.as_ref().unwrap().1;
            for _ in 0..n {
                // layout: index = i * nv + j (x slow, v fast)
                clipped += spectral_shift(&mut f, nv, nx, 1, nv, p.x_axis.h, &|j| 0.5 * dt * vs[j]);
                clipped += spectral_shift(&mut f, nx, nv, nv, 1, p.v_axis.h, &|i| -0.5 * dt * grads[i]);
                f.par_chunks_mut(nv).for_each(|line| ou.apply(line));
                clipped += spectral_shift(&mut f, nx, nv, nv, 1, p.v_axis.h, &|i| -0.5 * dt * grads[i]);
                clipped += spectral_shift(&mut f, nv, nx, 1, nv, p.x_axis.h, &|j| 0.5 * dt * vs[j]);
                for v in f.iter_mut() {
                    if *v < 0.0 {
                        clipped -= *v;
                        *v = 0.0;
                    }
                }
                steps += 1;
            }
            now = target;
        }
        let mass = grid.integrate(|i| f[i]);
        densities.push(GridDensity { grid: grid.clone(), values: f.clone(), mass });
    }
    let clipped_mass = clipped * grid.cell_volume();
    if clipped_mass > 1e-3 {
        return Err(SimError::ClippedMass(clipped_mass));
    }
    Ok(KineticSolution { times: times.to_vec(), densities, clipped_mass, steps })
}

// ---------------------------------------------------------------------------
// Entropy traces and rate fits

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub e_psi: f64,
    #[serde(rename = "I_psi")]
    pub i_psi: f64,
    #[serde(rename = "S_psi")]
    pub s_psi: f64,
    pub bound: f64,
}

/// Distortion matrix, rate and constant for the bound column
/// `constant · S_ψ(f₀) · e^{−2κt}`.
#[derive(Debug, Clone)]
pub struct BoundSpec {
    pub p: Mat,
    pub kappa: f64,
    pub constant: f64,
}

/// Per-sample `e_ψ`, `I_ψ` (with `diffusion`), `S_ψ` and the bound. Columns
/// that need `P` are NaN without one; the bound is NaN when `S_ψ(f₀)` is
/// not finite.
pub fn entropy_trace(
    samples: &[(f64, Density)],
    f_inf: &Density,
    diffusion: &Mat,
    psi: EntropyGenerator,
    bound: Option<&BoundSpec>,
) -> Result<Vec<TraceRow>, SimError> {
    let rows: Vec<Result<(f64, f64, f64, f64), SimError>> = samples
        .par_iter()
        .map(|(t, f)| {
            let e = entropy::relative_entropy(psi, f, f_inf)?;
            let i = entropy::fisher_information(psi, f, f_inf, diffusion)?;
            let s = match bound {
                Some(b) => entropy::modified_dissipation(psi, f, f_inf, &b.p)?,
                None => f64::NAN,
            };
            Ok((*t, e, i, s))
        })
        .collect();
    let rows: Vec<(f64, f64, f64, f64)> = rows.into_iter().collect::<Result<_, _>>()?;
    let s0 = rows.first().map(|r| r.3).unwrap_or(f64::NAN);
    Ok(rows
        .into_iter()
        .map(|(t, e, i, s)| TraceRow {
            t,
            e_psi: e,
            i_psi: i,
            s_psi: s,
            bound: match bound {
                Some(b) if s0.is_finite() => b.constant * s0 * (-2.0 * b.kappa * t).exp(),
                _ => f64::NAN,
            },
        })
        .collect())
}

pub const TRACE_HEADER: &str = "t,e_psi,I_psi,S_psi,bound";

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", r.t, r.e_psi, r.i_psi, r.s_psi, r.bound)?;
    }
    Ok(())
}

/// Noise floor below which samples are ignored by [`fit_rate`].
pub const FIT_FLOOR: f64 = 1e-12;

/// Decay rate `r` of `e(t) ≈ C e^{−rt}`: least squares on `ln e` over the
/// last half of the samples, skipping values below [`FIT_FLOOR`].
pub fn fit_rate(times: &[f64], values: &[f64]) -> Result<f64, SimError> {
    if times.len() != values.len() {
        return Err(SimError::Fit("times and values differ in length".into()));
    }
    let start = times.len() / 2;
    let pts: Vec<(f64, f64)> = times[start..]
        .iter()
        .zip(&values[start..])
        .filter(|(_, v)| **v >= FIT_FLOOR && v.is_finite())
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(SimError::Fit(format!("only {} usable samples in the tail window", pts.len())));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(SimError::Fit("tail samples share one time".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    Ok(-sxy / sxx)
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

// ---------------------------------------------------------------------------
// Tangent initial data

#[derive(Debug, Clone)]
pub struct TangencyReport {
    pub m0: DVector<f64>,
    pub sigma0: Mat,
    /// `(c·S(f₀) − e(f₀)) / e(f₀) ≥ 0`
    pub value_gap: f64,
    /// `|I(f₀)/e(f₀) − 2κ| / 2κ`
    pub slope_gap: f64,
}

/// Searches initial Gaussians `N(m₀, K)` with small offsets `m₀` for the one
/// whose `e_ψ₂` curve comes closest to touching the bound at `t = 0`.
pub fn tangent_initial_gaussian(m: &FpModel, bound: &BoundSpec, directions: usize) -> Result<TangencyReport, SimError> {
    let ss = fp_model::steady_state(m)?;
    let d = m.dim();
    let psi = EntropyGenerator::quadratic();
    let f_inf = GaussianDensity { mean: DVector::zeros(d), cov: ss.k.clone(), mass: 1.0 };
    let dirs: Vec<DVector<f64>> = if d == 2 {
        (0..directions)
            .map(|k| {
                let a = std::f64::consts::PI * k as f64 / directions as f64;
                DVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect()
    } else {
        let mut v = Vec::new();
        for a in 0..d {
            v.push(DVector::from_fn(d, |i, _| if i == a { 1.0 } else { 0.0 }));
            for b in a + 1..d {
                for s in [1.0, -1.0] {
                    v.push(DVector::from_fn(d, |i, _| if i == a { 1.0 } else if i == b { s } else { 0.0 }).normalize());
                }
            }
        }
        v
    };
    let ks = &ss.k_sqrt;
    let mut best: Option<TangencyReport> = None;
    for u in dirs {
        let m0 = ks * u * 1e-2;
        let f0 = GaussianDensity { mean: m0.clone(), cov: ss.k.clone(), mass: 1.0 };
        let e = entropy::relative_entropy_gaussian(psi, &f0, &f_inf)?;
        let i = entropy::fisher_information_gaussian(psi, &f0, &f_inf, &m.diffusion)?;
        let s = entropy::modified_dissipation_gaussian(psi, &f0, &f_inf, &bound.p)?;
        let r = TangencyReport {
            m0,
            sigma0: ss.k.clone(),
            value_gap: (bound.constant * s - e) / e,
            slope_gap: (i / e - 2.0 * bound.kappa).abs() / (2.0 * bound.kappa),
        };
        if best.as_ref().map_or(true, |b| r.value_gap + r.slope_gap < b.value_gap + b.slope_gap) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| SimError::Invalid("no search directions".into()))
}
