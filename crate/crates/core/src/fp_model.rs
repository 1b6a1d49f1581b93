//! Constant-coefficient Fokker-Planck models `∂t f = div(D∇f + Cx f)`:
//! condition (A), steady state, normalization and the symmetric /
//! skew splitting of the drift.

use crate::linalg::{self, LinalgError, Mat};
use nalgebra::DVector;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("condition (A) violated: {0}")]
    ConditionA(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Tolerance for the symmetry of D at construction.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FpModel {
    pub diffusion: Mat,
    pub drift: Mat,
}

impl FpModel {
    pub fn new(diffusion: Mat, drift: Mat) -> Result<Self, ModelError> {
        if diffusion.nrows() != diffusion.ncols() || drift.nrows() != drift.ncols() {
            return Err(ModelError::Invalid("D and C must be square".into()));
        }
        if diffusion.nrows() != drift.nrows() {
            return Err(ModelError::Invalid(format!(
                "D is {0}x{0} but C is {1}x{1}",
                diffusion.nrows(),
                drift.nrows()
            )));
        }
        if diffusion.nrows() == 0 {
            return Err(ModelError::Invalid("empty model".into()));
        }
        if diffusion.iter().chain(drift.iter()).any(|x| !x.is_finite()) {
            return Err(ModelError::Invalid("non-finite entries".into()));
        }
        let asym = (&diffusion - diffusion.transpose()).amax();
        if asym > SYMMETRY_TOL * (1.0 + diffusion.amax()) {
            return Err(ModelError::Invalid(format!("D is not symmetric (asymmetry {asym:.3e})")));
        }
        if diffusion.amax() == 0.0 {
            return Err(ModelError::Invalid("D vanishes identically: no diffusion, no steady state".into()));
        }
        let diffusion = linalg::sym(&diffusion);
        let lmin = linalg::min_eig_sym(&diffusion);
        if lmin < -linalg::psd_tol(&diffusion) {
            return Err(ModelError::Invalid(format!("D is not positive semidefinite (min eigenvalue {lmin:.3e})")));
        }
        Ok(FpModel { diffusion, drift })
    }

    pub fn dim(&self) -> usize {
        self.diffusion.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionAReport {
    pub a1: bool,
    pub a2: bool,
    /// Minimal Hörmander order, `None` when A1 fails.
    pub tau: Option<usize>,
    /// Smallest eigenvalue of `Σ_{j≤τ} C^j D (Cᵀ)^j` (τ = d − rank D when A1 fails).
    pub kappa_a: f64,
    pub rank_d: usize,
    /// Smallest real part of the spectrum of C.
    pub min_re_spectrum: f64,
}

impl ConditionAReport {
    pub fn holds(&self) -> bool {
        self.a1 && self.a2
    }
}

/// Relative SVD tolerance for the bracket rank test.
pub const RANK_TOL: f64 = 1e-10;

fn bracket_matrix(m: &FpModel, tau: usize) -> Result<Mat, ModelError> {
    let d = m.dim();
    let root = truncated_root(&m.diffusion)?;
    let mut out = Mat::zeros(d, d * (tau + 1));
    let mut block = root;
    for j in 0..=tau {
        out.columns_mut(j * d, d).copy_from(&block);
        block = &m.drift * block;
    }
    Ok(out)
}

/// `V diag(√λ) Vᵀ` keeping only eigenvalues above `RANK_TOL·λmax`, so the
/// square root does not lift round-off in `ker D` into spurious rank.
fn truncated_root(a: &Mat) -> Result<Mat, ModelError> {
    linalg::sqrt_psd(a)?;
    let eig = linalg::sym(a).symmetric_eigen();
    let lmax = eig.eigenvalues.max().max(0.0);
    let roots = eig.eigenvalues.map(|l| if l > RANK_TOL * lmax { l.sqrt() } else { 0.0 });
    Ok(&eig.eigenvectors * Mat::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// `Σ_{j≤τ} C^j D (Cᵀ)^j`.
pub fn psd_sum(m: &FpModel, tau: usize) -> Mat {
    let d = m.dim();
    let mut total = Mat::zeros(d, d);
    let mut term = m.diffusion.clone();
    for _ in 0..=tau {
        total += &term;
        term = &m.drift * term * m.drift.transpose();
    }
    total
}

/// Minimal τ for which the PSD sum is positive definite, if any τ ≤ d − rank D.
pub fn tau_from_psd_sum(m: &FpModel) -> Option<usize> {
    let d = m.dim();
    let rank_d = linalg::rank_tol(&m.diffusion, RANK_TOL);
    (0..=d - rank_d).find(|&tau| {
        let s = psd_sum(m, tau);
        let l = linalg::min_eig_sym(&s);
        l > 1e-9 * (1.0 + s.norm())
    })
}

pub fn check_condition_a(m: &FpModel) -> ConditionAReport {
    let d = m.dim();
    let rank_d = linalg::rank_tol(&m.diffusion, RANK_TOL);
    let tau = (0..=d - rank_d).find(|&tau| match bracket_matrix(m, tau) {
        Ok(b) => linalg::rank_tol(&b, RANK_TOL) == d,
        Err(_) => false,
    });
    let kappa_a = linalg::min_eig_sym(&psd_sum(m, tau.unwrap_or(d - rank_d)));
    let min_re = m
        .drift
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::INFINITY, f64::min);
    let a2 = min_re > 1e-12 * (1.0 + m.drift.norm());
    ConditionAReport { a1: tau.is_some(), a2, tau, kappa_a, rank_d, min_re_spectrum: min_re }
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub k: Mat,
    pub k_inv: Mat,
    pub k_sqrt: Mat,
    pub k_inv_sqrt: Mat,
    /// Normalization constant `(2π)^{-d/2} det(K)^{-1/2}`.
    pub c_k: f64,
    pub residual: f64,
}

impl SteadyState {
    pub fn density(&self, x: &DVector<f64>) -> f64 {
        self.c_k * (-0.5 * x.dot(&(&self.k_inv * x))).exp()
    }
}

pub fn steady_state(m: &FpModel) -> Result<SteadyState, ModelError> {
    let rep = check_condition_a(m);
    if !rep.holds() {
        let mut why = Vec::new();
        if !rep.a1 {
            why.push("A1 (a subspace of ker D is invariant under Cᵀ)".to_string());
        }
        if !rep.a2 {
            why.push(format!("A2 (C not positively stable, min Re σ(C) = {:.3e})", rep.min_re_spectrum));
        }
        return Err(ModelError::ConditionA(why.join("; ")));
    }
    let k = linalg::solve_lyapunov(&m.drift, &m.diffusion)?;
    let residual = linalg::lyapunov_residual(&m.drift, &m.diffusion, &k);
    let k_sqrt = linalg::sqrt_spd(&k)?;
    let k_inv_sqrt = linalg::inv_sqrt_spd(&k)?;
    let k_inv = linalg::sym(&(&k_inv_sqrt * &k_inv_sqrt));
    let d = m.dim() as f64;
    let c_k = (2.0 * std::f64::consts::PI).powf(-d / 2.0) / k.determinant().sqrt();
    Ok(SteadyState { k, k_inv, k_sqrt, k_inv_sqrt, c_k, residual })
}

#[derive(Debug, Clone)]
pub struct NormalizedModel {
    pub d_hat: Mat,
    pub c_hat: Mat,
    pub k_inv_sqrt: Mat,
    pub k_sqrt: Mat,
    pub u: Mat,
}

impl NormalizedModel {
    /// Coordinate map `z = T x` with `T = Uᵀ K^{-1/2}`.
    pub fn transform(&self) -> Mat {
        self.u.transpose() * &self.k_inv_sqrt
    }

    pub fn inverse_transform(&self) -> Mat {
        &self.k_sqrt * &self.u
    }

    pub fn as_model(&self) -> Result<FpModel, ModelError> {
        FpModel::new(self.d_hat.clone(), self.c_hat.clone())
    }

    /// Residual of `D̂ = sym(Ĉ)`.
    pub fn symmetric_part_residual(&self) -> f64 {
        (&self.d_hat - linalg::sym(&self.c_hat)).amax()
    }
}

/// Eigenvectors of a symmetric matrix sorted by descending eigenvalue, with
/// the first nonzero component of each vector made positive.
pub fn sorted_symmetric_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.nrows();
    let eig = linalg::sym(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let mut u = Mat::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (col, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                v = -v;
            }
        }
        u.set_column(col, &v);
        vals.push(eig.eigenvalues[i]);
    }
    (vals, u)
}

pub fn normalize(m: &FpModel) -> Result<NormalizedModel, ModelError> {
    let ss = steady_state(m)?;
    Ok(normalize_with(m, &ss))
}

pub fn normalize_with(m: &FpModel, ss: &SteadyState) -> NormalizedModel {
    let d_tilde = linalg::sym(&(&ss.k_inv_sqrt * &m.diffusion * &ss.k_inv_sqrt));
    let (vals, u) = sorted_symmetric_eigen(&d_tilde);
    let d_hat = Mat::from_diagonal(&DVector::from_vec(vals));
    let c_hat = u.transpose() * &ss.k_inv_sqrt * &m.drift * &ss.k_sqrt * &u;
    NormalizedModel { d_hat, c_hat, k_inv_sqrt: ss.k_inv_sqrt.clone(), k_sqrt: ss.k_sqrt.clone(), u }
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub r: Mat,
    /// `‖R + Rᵀ‖`.
    pub skew_residual: f64,
    /// `‖CK − D − R‖`.
    pub reconstruction_residual: f64,
    pub nonzero: bool,
}

pub fn decompose(m: &FpModel, ss: &SteadyState) -> Decomposition {
    let ck = &m.drift * &ss.k;
    let r = (&ck - ck.transpose()) * 0.5;
    let skew_residual = (&r + r.transpose()).norm();
    let reconstruction_residual = (&ck - &m.diffusion - &r).norm();
    let nonzero = r.norm() > 1e-10 * (1.0 + ck.norm());
    Decomposition { r, skew_residual, reconstruction_residual, nonzero }
}

/// Reference models used throughout the tests and the command line tool.
pub mod fixtures {
    use super::FpModel;
    use crate::linalg::Mat;

    fn mat(rows: &[&[f64]]) -> Mat {
        Mat::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    /// `D = diag(1,0)`, `C = [[1,−ω],[ω,0]]`: degenerate diffusion, standard
    /// Gaussian steady state.
    pub fn rotating(omega: f64) -> FpModel {
        FpModel::new(mat(&[&[1.0, 0.0], &[0.0, 0.0]]), mat(&[&[1.0, -omega], &[omega, 0.0]])).unwrap()
    }

    /// `D = diag(1,0)` with a transposed Jordan block drift.
    pub fn jordan() -> FpModel {
        FpModel::new(mat(&[&[1.0, 0.0], &[0.0, 0.0]]), mat(&[&[1.0, 0.0], &[1.0, 1.0]])).unwrap()
    }

    /// Four-dimensional model with Hörmander order one.
    pub fn order_one() -> FpModel {
        FpModel::new(
            mat(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0], &[0.0; 4], &[0.0; 4]]),
            mat(&[
                &[1.0, 0.0, 1.0, 0.0],
                &[0.0, 1.0, 0.0, 1.0],
                &[-1.0, 0.0, 0.0, 0.0],
                &[0.0, -1.0, 0.0, 0.0],
            ]),
        )
        .unwrap()
    }

    /// Four-dimensional model with Hörmander order two.
    pub fn order_two() -> FpModel {
        FpModel::new(
            mat(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0], &[0.0; 4], &[0.0; 4]]),
            mat(&[
                &[1.0, 0.0, 0.0, 0.0],
                &[0.0, 1.0, 1.0, 0.0],
                &[0.0, -1.0, 0.0, 1.0],
                &[0.0, 0.0, -1.0, 0.0],
            ]),
        )
        .unwrap()
    }

    /// Non-degenerate normalized model with `λ_D = 1/4` and `μ = 5/8`.
    pub fn anisotropic() -> FpModel {
        FpModel::new(mat(&[&[0.25, 0.0], &[0.0, 1.0]]), mat(&[&[0.25, -4.0], &[4.0, 1.0]])).unwrap()
    }

    /// Three-dimensional normalized model where `λ_D = μ = 1/5`.
    pub fn rate_equality() -> FpModel {
        FpModel::new(
            mat(&[&[0.2, 0.0, 0.0], &[0.0, 0.25, 0.0], &[0.0, 0.0, 1.0]]),
            mat(&[&[0.2, 0.0, 0.0], &[0.0, 0.25, -4.0], &[0.0, 4.0, 1.0]]),
        )
        .unwrap()
    }

    pub fn identity(d: usize) -> FpModel {
        FpModel::new(Mat::identity(d, d), Mat::identity(d, d)).unwrap()
    }
}
