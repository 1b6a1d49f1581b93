//! Certificates for the 1D kinetic Fokker-Planck equation with
//! `γ1 ≤ V'' ≤ γ2`: admissibility conditions (C1)–(C5), the optimal rate
//! `κ_max` with its matrix `P`, and the older fixed-`ω₀` construction.

use crate::linalg::{self, Mat};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KineticError {
    #[error("invalid kinetic parameters: {0}")]
    Invalid(String),
    #[error("infeasible: sqrt(γ2) − sqrt(γ1) = {gap:.6} exceeds ν = {nu}")]
    Infeasible { gap: f64, nu: f64 },
    #[error("4ω₀² = ν² is the excluded defective interface")]
    DefectiveInterface,
    #[error("certificate verification failed: {0}")]
    Verification(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticParams {
    pub nu: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

fn one() -> f64 {
    1.0
}

impl KineticParams {
    pub fn new(nu: f64, sigma: f64, gamma1: f64, gamma2: f64) -> Result<Self, KineticError> {
        let k = KineticParams { nu, sigma, gamma1, gamma2 };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), KineticError> {
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(KineticError::Invalid(format!("ν = {} must be positive", self.nu)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(KineticError::Invalid(format!("σ = {} must be positive", self.sigma)));
        }
        if !(self.gamma1 >= 0.0 && self.gamma1 <= self.gamma2) || !self.gamma2.is_finite() {
            return Err(KineticError::Invalid(format!(
                "need 0 ≤ γ1 ≤ γ2, got γ1 = {}, γ2 = {}",
                self.gamma1, self.gamma2
            )));
        }
        Ok(())
    }

    /// `3γ1 + γ2 ≤ ν²` selects the first branch.
    pub fn in_first_branch(&self) -> bool {
        3.0 * self.gamma1 + self.gamma2 <= self.nu * self.nu
    }
}

pub fn feasibility(k: &KineticParams) -> bool {
    k.gamma2.sqrt() - k.gamma1.sqrt() <= k.nu
}

/// `Q_γ P + P Q_γᵀ − 2κP` for `P = [[1, p12], [p12, p22]]`.
pub fn condition_matrix(nu: f64, p12: f64, p22: f64, kappa: f64, gamma: f64) -> Mat {
    let off = -gamma + (nu - 2.0 * kappa) * p12 + p22;
    Mat::from_row_slice(2, 2, &[2.0 * (p12 - kappa), off, off, 2.0 * (-gamma * p12 + (nu - kappa) * p22)])
}

/// `c(κ) = 4κ(ν−κ)(p22 − p12²) + (νp12 − p22)²`.
pub fn c_kappa(nu: f64, p12: f64, p22: f64, kappa: f64) -> f64 {
    4.0 * kappa * (nu - kappa) * (p22 - p12 * p12) + (nu * p12 - p22).powi(2)
}

/// `δ(κ,γ)` in determinant form and in the expanded polynomial form.
pub fn delta_forms(nu: f64, p12: f64, p22: f64, kappa: f64, gamma: f64) -> (f64, f64) {
    let det = 4.0 * (p12 - kappa) * (-gamma * p12 + (nu - kappa) * p22) - (-gamma + (nu - 2.0 * kappa) * p12 + p22).powi(2);
    let poly = -gamma * gamma - (4.0 * p12 * p12 - 2.0 * nu * p12 - 2.0 * p22) * gamma - c_kappa(nu, p12, p22, kappa);
    (det, poly)
}

/// `δ(κ,γ)`; the determinant and expanded forms are cross-checked.
pub fn delta(k: &KineticParams, p12: f64, p22: f64, kappa: f64, gamma: f64) -> f64 {
    let (det, poly) = delta_forms(k.nu, p12, p22, kappa, gamma);
    let scale = 1.0 + det.abs().max(poly.abs()) + gamma * gamma + (k.nu * p12 + p22).powi(2);
    debug_assert!((det - poly).abs() <= 1e-12 * scale, "δ forms disagree: {det} vs {poly}");
    det
}

/// Roots `γ_{1,2}` of `δ(κ,·) = 0`, if real.
pub fn gamma_roots(nu: f64, p12: f64, p22: f64, kappa: f64) -> Option<(f64, f64)> {
    let b = -2.0 * p12 * p12 + nu * p12 + p22;
    let disc = b * b - c_kappa(nu, p12, p22, kappa);
    if disc < 0.0 {
        return None;
    }
    let r = disc.sqrt();
    Some((b - r, b + r))
}

/// Checks (C1)–(C5) for fixed `(p12, p22, κ)` on `[γ1, γ2]`, sampled at
/// `samples` points plus the parabola vertex. Returns the smallest
/// eigenvalue of the condition matrix seen, or `None` if a condition fails.
pub fn check_conditions(
    k: &KineticParams,
    p12: f64,
    p22: f64,
    kappa: f64,
    samples: usize,
    tol: f64,
) -> Option<f64> {
    if !(p22 > p12 * p12) || kappa < -tol || p12 < kappa - tol {
        return None;
    }
    let mut gammas: Vec<f64> = (0..samples)
        .map(|i| k.gamma1 + (k.gamma2 - k.gamma1) * i as f64 / (samples.max(2) - 1) as f64)
        .collect();
    let vertex = -(2.0 * p12 * p12 - k.nu * p12 - p22);
    if vertex > k.gamma1 && vertex < k.gamma2 {
        gammas.push(vertex);
    }
    let mut worst = f64::INFINITY;
    for g in gammas {
        let d = delta(k, p12, p22, kappa, g);
        let c5 = -g * p12 + (k.nu - kappa) * p22;
        let scale = 1.0 + g * g + p22 * p22 + k.nu * k.nu;
        if d < -tol * scale || c5 < -tol * (1.0 + p22 + g) {
            return None;
        }
        worst = worst.min(linalg::min_eig_sym(&condition_matrix(k.nu, p12, p22, kappa, g)));
    }
    Some(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaseTag {
    B1,
    B2,
    #[serde(rename = "quadratic")]
    Quadratic,
}

#[derive(Debug, Clone, Serialize)]
pub struct KineticCertificate {
    pub nu: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub feasible: bool,
    pub case_tag: CaseTag,
    pub kappa_max: f64,
    pub tau: f64,
    pub p12: f64,
    pub p22: f64,
    #[serde(rename = "P")]
    pub p: [[f64; 2]; 2],
    pub worst_gamma_residual: f64,
    /// Set when `κ_max = 0` (first branch with `γ1 = 0`).
    pub no_exponential_certificate: bool,
}

pub const GAMMA_SAMPLES: usize = 101;

/// Closed-form `κ_max` and `P` with family parameter `tau ∈ [−1, 1]`
/// (only used in the first branch).
pub fn kappa_max(k: &KineticParams, tau: f64) -> Result<KineticCertificate, KineticError> {
    k.validate()?;
    if !(-1.0..=1.0).contains(&tau) {
        return Err(KineticError::Invalid(format!("τ = {tau} outside [−1, 1]")));
    }
    if !feasibility(k) {
        return Err(KineticError::Infeasible { gap: k.gamma2.sqrt() - k.gamma1.sqrt(), nu: k.nu });
    }
    let (nu, g1, g2) = (k.nu, k.gamma1, k.gamma2);
    let quadratic = (g2 - g1) <= 1e-14 * (1.0 + g2);
    if quadratic && (4.0 * g1 - nu * nu).abs() <= 1e-14 * (1.0 + nu * nu) {
        return Err(KineticError::DefectiveInterface);
    }
    let (kappa, p12, p22, branch) = if k.in_first_branch() {
        let root = (nu * nu - 3.0 * g1 - g2).max(0.0).sqrt();
        (
            nu / 2.0 - 0.5 * (nu * nu - 4.0 * g1).max(0.0).sqrt(),
            nu / 2.0 + tau / 2.0 * root,
            0.5 * (nu * nu - 2.0 * g1 + tau * nu * root),
            CaseTag::B1,
        )
    } else {
        (
            nu / 2.0 - (g2 - g1) / (2.0 * (2.0 * (g1 + g2) - nu * nu).sqrt()),
            nu / 2.0,
            (g1 + g2) / 2.0,
            CaseTag::B2,
        )
    };
    let case_tag = if quadratic { CaseTag::Quadratic } else { branch };
    let kappa = kappa.max(0.0);
    let worst = check_conditions(k, p12, p22, kappa, GAMMA_SAMPLES, 1e-10).ok_or_else(|| {
        KineticError::Verification(format!("(C1)–(C5) fail for p12 = {p12}, p22 = {p22}, κ = {kappa}"))
    })?;
    Ok(KineticCertificate {
        nu,
        gamma1: g1,
        gamma2: g2,
        feasible: true,
        case_tag,
        kappa_max: kappa,
        tau,
        p12,
        p22,
        p: [[1.0, p12], [p12, p22]],
        worst_gamma_residual: worst,
        no_exponential_certificate: kappa <= 0.0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LegacyRate {
    pub omega0_sq: f64,
    pub kappa0: f64,
    #[serde(rename = "P")]
    pub p: [[f64; 2]; 2],
    /// `κ₀ − ‖V'' − ω₀²‖_∞ / sqrt|ν² − 4ω₀²|`; may be negative.
    pub rate: f64,
}

/// Fixed-`ω₀` construction: `P` from the quadratic part `ω₀² x²/2` and the
/// rate reduced by the sup-norm of the remainder of `V''`.
pub fn legacy_rate(k: &KineticParams, omega0_sq: f64) -> Result<LegacyRate, KineticError> {
    k.validate()?;
    let nu = k.nu;
    let gap = nu * nu - 4.0 * omega0_sq;
    if gap.abs() <= 1e-14 * (1.0 + nu * nu) {
        return Err(KineticError::DefectiveInterface);
    }
    let (kappa0, p) = if gap > 0.0 {
        (0.5 * (nu - gap.sqrt()), [[2.0, nu], [nu, nu * nu - 2.0 * omega0_sq]])
    } else {
        (0.5 * nu, [[2.0, nu], [nu, 2.0 * omega0_sq]])
    };
    let sup = (k.gamma2 - omega0_sq).abs().max((k.gamma1 - omega0_sq).abs());
    Ok(LegacyRate { omega0_sq, kappa0, p, rate: kappa0 - sup / gap.abs().sqrt() })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OptimalOmega {
    pub omega0_sq: f64,
    pub rate: f64,
}

/// Best splitting `V'' = ω₀² + remainder` for the fixed-`ω₀` construction.
pub fn optimize_omega0(k: &KineticParams) -> Result<OptimalOmega, KineticError> {
    k.validate()?;
    if !feasibility(k) {
        return Err(KineticError::Infeasible { gap: k.gamma2.sqrt() - k.gamma1.sqrt(), nu: k.nu });
    }
    if !(k.gamma1 > 0.0) {
        return Err(KineticError::Invalid("optimal ω₀ requires γ1 > 0".into()));
    }
    let omega0_sq = if (k.gamma2 - k.gamma1) <= 1e-14 * (1.0 + k.gamma2) {
        k.gamma1
    } else if k.in_first_branch() {
        k.nu * k.nu / 2.0 - k.gamma1
    } else {
        (k.gamma1 + k.gamma2) / 2.0
    };
    let l = legacy_rate(k, omega0_sq)?;
    Ok(OptimalOmega { omega0_sq, rate: l.rate })
}
