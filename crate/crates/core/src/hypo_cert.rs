//! Decay certificates for the modified entropy method: a symmetric
//! positive definite `P` and a rate `κ` with `PC + CᵀP ≥ 2κP`.

use crate::fp_model::{self, FpModel, ModelError, NormalizedModel};
use crate::linalg::{self, CMat, CVec, EigenCluster, LinalgError, Mat, CLUSTER_TOL};
use num_complex::Complex64;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CertError {
    #[error("C is not positively stable (μ = {0:.3e})")]
    NotStable(f64),
    #[error("minimal eigenvalue is defective: an epsilon in (0, μ = {mu}) is required")]
    EpsilonRequired { mu: f64 },
    #[error("epsilon = {epsilon} must lie in (0, μ = {mu})")]
    EpsilonOutOfRange { epsilon: f64, mu: f64 },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("certificate validation failed; residual history {history:?}")]
    ValidationFailed { history: Vec<(f64, f64)> },
    #[error("rate comparison needs non-degenerate diffusion (λ_D = {0:.3e})")]
    Degenerate(f64),
    #[error("rate comparison violated: λ_D = {lambda_d}, μ = {mu}, defective = {defective}")]
    RateComparisonViolated { lambda_d: f64, mu: f64, defective: bool },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone)]
pub struct SpectralGap {
    pub mu: f64,
    pub minimal: Vec<EigenCluster>,
    pub any_defective: bool,
}

pub fn spectral_gap(c: &Mat) -> Result<SpectralGap, CertError> {
    let eig = linalg::eigen(c, CLUSTER_TOL)?;
    let mu = eig.clusters.iter().map(|k| k.value.re).fold(f64::INFINITY, f64::min);
    let minimal: Vec<EigenCluster> =
        eig.clusters.into_iter().filter(|k| (k.value.re - mu).abs() <= eig.tol).collect();
    let any_defective = minimal.iter().any(|k| k.is_defective());
    Ok(SpectralGap { mu, minimal, any_defective })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayCertificate {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub mu: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub defective: bool,
    pub residual: f64,
    #[serde(rename = "lambda_P")]
    pub lambda_p: f64,
    /// Chain scaling used when some eigenvalue is defective.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

impl DecayCertificate {
    pub fn p_matrix(&self) -> Mat {
        let n = self.p.len();
        Mat::from_fn(n, n, |i, j| self.p[i][j])
    }
}

pub fn to_rows(a: &Mat) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect()
}

/// `min_eig_sym(PC + CᵀP − 2κP)`.
pub fn certificate_residual(p: &Mat, c: &Mat, kappa: f64) -> f64 {
    linalg::min_eig_sym(&(p * c + c.transpose() * p - p * (2.0 * kappa)))
}

fn residual_tol(p: &Mat, c: &Mat) -> f64 {
    linalg::PSD_TOL * (1.0 + p.norm() * (1.0 + c.norm()))
}

/// Basis of `Cᵀ`-invariant vectors: eigenvectors, or Jordan chains scaled by
/// `δ^r` for defective clusters. Conjugate clusters get conjugate vectors so
/// the assembled matrix is real.
struct Basis {
    /// (vector, chain position r ≥ 1 or 0 for plain eigenvectors)
    vectors: Vec<(CVec, usize)>,
    /// index of the conjugate partner for each vector
    partner: Vec<usize>,
}

fn unit(v: &CVec) -> CVec {
    v / Complex64::new(v.norm(), 0.0)
}

fn basis(ct: &Mat) -> Result<Basis, CertError> {
    let eig = linalg::eigen(ct, CLUSTER_TOL)?;
    let tol = eig.tol;
    let mut vectors: Vec<(CVec, usize)> = Vec::new();
    let mut partner: Vec<usize> = Vec::new();
    let mut used = vec![false; eig.clusters.len()];
    for (ci, cl) in eig.clusters.iter().enumerate() {
        if used[ci] {
            continue;
        }
        used[ci] = true;
        let own: Vec<(CVec, usize)> = if cl.is_defective() {
            let mut out = Vec::new();
            for chain in &cl.chains {
                // normalize the chain by the norm of its eigenvector
                let s = Complex64::new(chain[0].norm(), 0.0);
                for (r, v) in chain.iter().enumerate() {
                    out.push((v / s, r + 1));
                }
            }
            out
        } else {
            cl.eigenvectors.column_iter().map(|c| (unit(&c.into_owned()), 0)).collect()
        };
        let start = vectors.len();
        if cl.value.im.abs() <= tol {
            for (k, item) in own.into_iter().enumerate() {
                // real eigenvalue: make vectors real up to phase
                let v = realify(&item.0);
                vectors.push((v, item.1));
                partner.push(start + k);
            }
        } else {
            let conj = eig
                .clusters
                .iter()
                .enumerate()
                .position(|(j, other)| !used[j] && (other.value - cl.value.conj()).norm() <= 10.0 * tol)
                .ok_or_else(|| CertError::InvalidWeights("unpaired complex eigenvalue".into()))?;
            used[conj] = true;
            let m = own.len();
            for (k, item) in own.iter().enumerate() {
                vectors.push(item.clone());
                partner.push(start + m + k);
            }
            for (k, item) in own.iter().enumerate() {
                vectors.push((item.0.map(|z| z.conj()), item.1));
                partner.push(start + k);
            }
        }
    }
    Ok(Basis { vectors, partner })
}

/// Rotates a complex vector spanning a real line back to real form.
fn realify(v: &CVec) -> CVec {
    let (imax, _) = v.iter().enumerate().fold((0, 0.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
    let phase = v[imax] / Complex64::new(v[imax].norm(), 0.0);
    let w = v.map(|z| z / phase);
    w.map(|z| Complex64::new(z.re, 0.0))
}

fn assemble(b: &Basis, weights: &[f64], delta: f64) -> Mat {
    let n = b.vectors[0].0.len();
    let mut p = CMat::zeros(n, n);
    for ((v, r), &w) in b.vectors.iter().zip(weights) {
        let s = if *r == 0 { 1.0 } else { delta.powi(*r as i32) };
        let sv = v * Complex64::new(s, 0.0);
        p += &sv * sv.adjoint() * Complex64::new(w, 0.0);
    }
    linalg::sym(&p.map(|z| z.re))
}

/// Constructs `P` for the drift `C` (`Q` in the matrix inequality).
///
/// Non-defective minimal eigenvalues give `κ = μ`; otherwise `κ = μ − ε`
/// and the chain scaling `δ` is bisected until the inequality holds.
pub fn build_p(c: &Mat, weights: Option<&[f64]>, epsilon: f64) -> Result<DecayCertificate, CertError> {
    let n = linalg::ensure_square(c)?;
    let gap = spectral_gap(c)?;
    let mu = gap.mu;
    if mu <= 0.0 {
        return Err(CertError::NotStable(mu));
    }
    let defective = gap.any_defective;
    if defective && !(epsilon > 0.0) {
        return Err(CertError::EpsilonRequired { mu });
    }
    if epsilon < 0.0 || (epsilon > 0.0 && epsilon >= mu) {
        return Err(CertError::EpsilonOutOfRange { epsilon, mu });
    }
    let (kappa, epsilon) = if defective { (mu - epsilon, epsilon) } else { (mu, 0.0) };
    let ct = c.transpose();
    let b = basis(&ct)?;
    let w: Vec<f64> = match weights {
        None => vec![1.0; n],
        Some(w) => {
            if w.len() != n {
                return Err(CertError::InvalidWeights(format!("expected {n} weights, got {}", w.len())));
            }
            if w.iter().any(|x| !(*x > 0.0)) {
                return Err(CertError::InvalidWeights("weights must be positive".into()));
            }
            for (i, &j) in b.partner.iter().enumerate() {
                if (w[i] - w[j]).abs() > 1e-12 * w[i].abs().max(w[j].abs()) {
                    return Err(CertError::InvalidWeights(format!(
                        "weights {i} and {j} belong to conjugate eigenvectors and must agree"
                    )));
                }
            }
            w.to_vec()
        }
    };
    let needs_delta = b.vectors.iter().any(|(_, r)| *r > 0);
    let finish = |p: Mat, residual: f64, delta: Option<f64>| DecayCertificate {
        lambda_p: linalg::min_eig_sym(&p),
        p: to_rows(&p),
        mu,
        kappa,
        epsilon,
        defective,
        residual,
        delta,
    };
    if !needs_delta {
        let p = assemble(&b, &w, 1.0);
        let residual = certificate_residual(&p, c, kappa);
        if residual < -residual_tol(&p, c) || linalg::min_eig_sym(&p) <= 0.0 {
            return Err(CertError::ValidationFailed { history: vec![(1.0, residual)] });
        }
        return Ok(finish(p, residual, None));
    }
    let mut history = Vec::new();
    let feasible = |delta: f64, history: &mut Vec<(f64, f64)>| {
        let p = assemble(&b, &w, delta);
        let r = certificate_residual(&p, c, kappa);
        history.push((delta, r));
        let ok = r >= -residual_tol(&p, c) && linalg::min_eig_sym(&p) > 0.0;
        (ok, p, r)
    };
    let (ok, p, r) = feasible(1.0, &mut history);
    if ok {
        return Ok(finish(p, r, Some(1.0)));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best: Option<(f64, Mat, f64)> = None;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (ok, p, r) = feasible(mid, &mut history);
        if ok {
            lo = mid;
            best = Some((mid, p, r));
        } else {
            hi = mid;
        }
        if best.is_some() && hi - lo < 1e-3 * hi {
            break;
        }
    }
    match best {
        Some((delta, p, r)) => Ok(finish(p, r, Some(delta))),
        None => Err(CertError::ValidationFailed { history }),
    }
}

#[derive(Debug, Clone)]
pub struct Certification {
    pub certificate: DecayCertificate,
    /// Entropy decay rate `2κ`.
    pub rate_e: f64,
    /// `min_eig_sym(D̂)`, the Bakry-Émery basis rate.
    pub lambda_d: f64,
    /// Factor `1/(2λ_P)` in `e(t) ≤ S(f₀)/(2λ_P) e^{−2κt}`.
    pub constant_bound: f64,
    pub normalized: NormalizedModel,
}

impl Certification {
    /// `P` acting on gradients in the original coordinates: `T⁻¹ P T⁻ᵀ`
    /// with `z = T x` the normalizing map.
    pub fn p_original(&self) -> Mat {
        let tinv = self.normalized.inverse_transform();
        linalg::sym(&(&tinv * self.certificate.p_matrix() * tinv.transpose()))
    }
}

pub fn certify(m: &FpModel, epsilon: Option<f64>) -> Result<Certification, CertError> {
    let normalized = fp_model::normalize(m)?;
    let certificate = build_p(&normalized.c_hat, None, epsilon.unwrap_or(0.0))?;
    let lambda_d = linalg::min_eig_sym(&normalized.d_hat);
    Ok(Certification {
        rate_e: 2.0 * certificate.kappa,
        lambda_d,
        constant_bound: 1.0 / (2.0 * certificate.lambda_p),
        certificate,
        normalized,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateComparison {
    pub lambda_d: f64,
    pub mu: f64,
    pub strict: bool,
}

pub fn compare_rates(m: &FpModel) -> Result<RateComparison, CertError> {
    let n = fp_model::normalize(m)?;
    let lambda_d = linalg::min_eig_sym(&n.d_hat);
    if lambda_d <= linalg::psd_tol(&n.d_hat) {
        return Err(CertError::Degenerate(lambda_d));
    }
    let gap = spectral_gap(&n.c_hat)?;
    let tol = 1e-9 * (1.0 + n.c_hat.norm());
    let defective = gap.any_defective;
    if lambda_d > gap.mu + tol || (defective && lambda_d >= gap.mu - 1e-12) {
        return Err(CertError::RateComparisonViolated { lambda_d, mu: gap.mu, defective });
    }
    Ok(RateComparison { lambda_d, mu: gap.mu, strict: defective })
}
