//! Dense small-matrix linear algebra: clustered eigendecompositions with
//! Jordan chains, Lyapunov solves, SPD square roots and tolerance-aware
//! predicates.
//!
//! Real matrices are `DMatrix<f64>`; complex data (eigenvectors, chains)
//! uses `DMatrix<Complex64>`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric (asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (min eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),
    #[error("Lyapunov system is singular: C is not positively stable (min |Re λ_i + λ_j| = {0:.3e})")]
    SingularLyapunov(f64),
    #[error("eigen iteration failed to converge (residual {0:.3e})")]
    EigenNonConvergence(f64),
    #[error("Jordan chain extraction failed: {0}")]
    JordanChains(String),
}

/// Default relative cluster tolerance for eigenvalues.
pub const CLUSTER_TOL: f64 = 1e-8;
/// Relative distance below which eigenvalues with nearly parallel
/// eigenvectors are merged into one (defective) cluster.
pub const NEAR_DEFECTIVE_TOL: f64 = 1e-6;
/// Default relative tolerance for positive semidefiniteness checks.
pub const PSD_TOL: f64 = 1e-10;

/// One group of numerically coincident eigenvalues.
#[derive(Debug, Clone)]
pub struct EigenCluster {
    /// Mean of the member eigenvalues.
    pub value: Complex64,
    pub members: Vec<Complex64>,
    pub algebraic: usize,
    pub geometric: usize,
    /// Orthonormal basis of the (numerical) eigenspace, one column per vector.
    pub eigenvectors: CMat,
    /// Jordan chains `[v_1, .., v_r]` with `(A - λ) v_1 = 0` and
    /// `(A - λ) v_k = v_{k-1}`; only filled for defective clusters.
    pub chains: Vec<Vec<CVec>>,
}

impl EigenCluster {
    pub fn is_defective(&self) -> bool {
        self.geometric < self.algebraic
    }
}

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub dim: usize,
    pub eigenvalues: Vec<Complex64>,
    pub clusters: Vec<EigenCluster>,
    /// Absolute cluster tolerance actually used.
    pub tol: f64,
}

impl EigenDecomposition {
    pub fn any_defective(&self) -> bool {
        self.clusters.iter().any(|c| c.is_defective())
    }
}

pub fn frobenius(a: &Mat) -> f64 {
    a.norm()
}

pub fn sym(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

pub fn skew(a: &Mat) -> Mat {
    (a - a.transpose()) * 0.5
}

pub fn psd_tol(a: &Mat) -> f64 {
    PSD_TOL * (1.0 + a.norm())
}

pub fn ensure_square(a: &Mat) -> Result<usize, LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    Ok(a.nrows())
}

pub fn is_symmetric(a: &Mat, tol: f64) -> bool {
    a.nrows() == a.ncols() && (a - a.transpose()).amax() <= tol
}

pub fn is_psd(a: &Mat) -> bool {
    min_eig_sym(a) >= -psd_tol(a)
}

pub fn is_spd(a: &Mat) -> bool {
    min_eig_sym(a) > psd_tol(a)
}

pub fn to_complex(a: &Mat) -> CMat {
    a.map(|x| Complex64::new(x, 0.0))
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_eig_sym(a: &Mat) -> f64 {
    let s = sym(a);
    s.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn max_eig_sym(a: &Mat) -> f64 {
    let s = sym(a);
    s.symmetric_eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

fn sorted_singular_values(a: &Mat) -> Vec<f64> {
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().cloned().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

/// Number of singular values above `tol · σ_max`.
pub fn rank_tol(a: &Mat, tol: f64) -> usize {
    let s = sorted_singular_values(a);
    match s.first() {
        None => 0,
        Some(&smax) if smax == 0.0 => 0,
        Some(&smax) => s.iter().filter(|&&x| x > tol * smax).count(),
    }
}

/// Symmetric positive definite square root.
pub fn sqrt_spd(a: &Mat) -> Result<Mat, LinalgError> {
    spd_power(a, 0.5)
}

/// Square root of a symmetric positive semidefinite matrix; eigenvalues
/// above `-psd_tol` are clamped to zero.
pub fn sqrt_psd(a: &Mat) -> Result<Mat, LinalgError> {
    ensure_square(a)?;
    let eig = sym(a).symmetric_eigen();
    let lmin = eig.eigenvalues.min();
    if lmin < -psd_tol(a) {
        return Err(LinalgError::NotPositiveDefinite(lmin));
    }
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    Ok(sym(&(q * Mat::from_diagonal(&d) * q.transpose())))
}

/// Inverse of the SPD square root.
pub fn inv_sqrt_spd(a: &Mat) -> Result<Mat, LinalgError> {
    spd_power(a, -0.5)
}

fn spd_power(a: &Mat, p: f64) -> Result<Mat, LinalgError> {
    ensure_square(a)?;
    let asym = (a - a.transpose()).amax();
    if asym > 1e-8 * (1.0 + a.amax()) {
        return Err(LinalgError::NotSymmetric(asym));
    }
    let eig = sym(a).symmetric_eigen();
    let lmin = eig.eigenvalues.min();
    if lmin <= 0.0 {
        return Err(LinalgError::NotPositiveDefinite(lmin));
    }
    let d = eig.eigenvalues.map(|l| l.powf(p));
    let q = &eig.eigenvectors;
    Ok(sym(&(q * Mat::from_diagonal(&d) * q.transpose())))
}

/// Matrix exponential (scaling and squaring with Padé approximants).
pub fn expm(a: &Mat) -> Mat {
    a.clone().exp()
}

/// Solves `C K + K Cᵀ = 2 D` by Kronecker vectorization.
pub fn solve_lyapunov(c: &Mat, d: &Mat) -> Result<Mat, LinalgError> {
    let n = ensure_square(c)?;
    if d.shape() != (n, n) {
        return Err(LinalgError::Dimension(format!(
            "C is {n}x{n} but D is {}x{}",
            d.nrows(),
            d.ncols()
        )));
    }
    let eye = Mat::identity(n, n);
    let big = eye.kronecker(c) + c.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, (d * 2.0).iter().cloned());
    let singular = || {
        let ev = c.complex_eigenvalues();
        let mut m = f64::INFINITY;
        for a in ev.iter() {
            for b in ev.iter() {
                m = m.min((a + b).norm());
            }
        }
        LinalgError::SingularLyapunov(m)
    };
    let svals = sorted_singular_values(&big);
    if svals.last().copied().unwrap_or(0.0) <= 1e-13 * svals[0].max(1.0) {
        return Err(singular());
    }
    let x = big.lu().solve(&rhs).ok_or_else(singular)?;
    let k = Mat::from_iterator(n, n, x.iter().cloned());
    Ok(sym(&k))
}

pub fn lyapunov_residual(c: &Mat, d: &Mat, k: &Mat) -> f64 {
    (c * k + k * c.transpose() - d * 2.0).norm()
}

/// Orthonormal basis of the numerical null space of `a` (singular values
/// `<= thr`), as columns.
fn null_space(a: &CMat, thr: f64) -> CMat {
    let n = a.ncols();
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^H");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[i].partial_cmp(&svd.singular_values[j]).unwrap());
    // svd of an n x n matrix returns n singular values
    let cols: Vec<CVec> = idx
        .into_iter()
        .filter(|&i| svd.singular_values[i] <= thr)
        .map(|i| vt.row(i).adjoint())
        .collect();
    if cols.is_empty() {
        CMat::zeros(n, 0)
    } else {
        CMat::from_columns(&cols)
    }
}

fn smallest_singular_vector(a: &CMat) -> CVec {
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^H");
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    vt.row(imin).adjoint()
}

fn crank(a: &CMat, thr: f64) -> usize {
    if a.ncols() == 0 {
        return 0;
    }
    a.clone().svd(false, false).singular_values.iter().filter(|&&s| s > thr).count()
}

/// Clustered eigendecomposition with multiplicities and Jordan chains.
///
/// `cluster_tol` is relative: eigenvalues within `cluster_tol·(1+‖A‖_F)`
/// of each other (transitively) form one cluster.
pub fn eigen(a: &Mat, cluster_tol: f64) -> Result<EigenDecomposition, LinalgError> {
    let n = ensure_square(a)?;
    let scale = 1.0 + a.norm();
    let tol = cluster_tol * scale;
    let ev: Vec<Complex64> = a.complex_eigenvalues().iter().cloned().collect();
    if ev.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::EigenNonConvergence(f64::NAN));
    }
    // single-linkage clustering
    let mut group: Vec<usize> = (0..n).collect();
    fn find(g: &mut Vec<usize>, i: usize) -> usize {
        let mut r = i;
        while g[r] != r {
            r = g[r];
        }
        g[i] = r;
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (ev[i] - ev[j]).norm() <= tol {
                let (ri, rj) = (find(&mut group, i), find(&mut group, j));
                if ri != rj {
                    group[rj.max(ri)] = rj.min(ri);
                }
            }
        }
    }
    // A perturbed Jordan block splits its eigenvalue by ~sqrt(rounding), well
    // above `tol`, but its computed eigenvectors stay nearly parallel.
    let ac = to_complex(a);
    let near = NEAR_DEFECTIVE_TOL * scale;
    let vecs: Vec<Option<CVec>> = (0..n)
        .map(|i| {
            let close = (0..n).any(|j| j != i && (ev[i] - ev[j]).norm() <= near && (ev[i] - ev[j]).norm() > tol);
            close.then(|| smallest_singular_vector(&(&ac - CMat::identity(n, n) * ev[i])))
        })
        .collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if let (Some(vi), Some(vj)) = (&vecs[i], &vecs[j]) {
                if (ev[i] - ev[j]).norm() <= near && vi.dotc(vj).norm() >= 1.0 - 1e-6 {
                    let (ri, rj) = (find(&mut group, i), find(&mut group, j));
                    if ri != rj {
                        group[rj.max(ri)] = rj.min(ri);
                    }
                }
            }
        }
    }
    let mut roots: Vec<usize> = Vec::new();
    for i in 0..n {
        let r = find(&mut group, i);
        if !roots.contains(&r) {
            roots.push(r);
        }
    }
    let null_thr = 10.0 * tol.max(1e-12 * scale);
    let mut clusters = Vec::with_capacity(roots.len());
    for r in roots {
        let members: Vec<Complex64> =
            (0..n).filter(|&i| find(&mut group, i) == r).map(|i| ev[i]).collect();
        let m = members.len();
        let value = members.iter().sum::<Complex64>() / m as f64;
        let shifted = &ac - CMat::identity(n, n) * value;
        let mut kernel = null_space(&shifted, null_thr);
        if kernel.ncols() == 0 {
            // fall back to the single smallest singular direction
            let svd = shifted.clone().svd(false, true);
            let vt = svd.v_t.unwrap();
            let (imin, smin) = svd
                .singular_values
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
            if smin > 1e-6 * scale {
                return Err(LinalgError::EigenNonConvergence(smin));
            }
            kernel = CMat::from_columns(&[vt.row(imin).adjoint()]);
        }
        let geometric = kernel.ncols().min(m);
        if kernel.ncols() > m {
            kernel = kernel.columns(0, m).into_owned();
        }
        let mut cluster = EigenCluster {
            value,
            members,
            algebraic: m,
            geometric,
            eigenvectors: kernel,
            chains: Vec::new(),
        };
        if cluster.is_defective() {
            cluster.chains = jordan_chains(&shifted, m, null_thr)?;
        }
        clusters.push(cluster);
    }
    clusters.sort_by(|x, y| {
        x.value
            .re
            .partial_cmp(&y.value.re)
            .unwrap()
            .then(x.value.im.partial_cmp(&y.value.im).unwrap())
    });
    let mut eigenvalues = ev;
    eigenvalues.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap().then(x.im.partial_cmp(&y.im).unwrap()));
    Ok(EigenDecomposition { dim: n, eigenvalues, clusters, tol })
}

/// Jordan chains of the nilpotent part `nmat = A − λI` restricted to the
/// generalized eigenspace of dimension `m`.
fn jordan_chains(nmat: &CMat, m: usize, thr: f64) -> Result<Vec<Vec<CVec>>, LinalgError> {
    let n = nmat.nrows();
    // kernels of N^k, k = 0..=q
    let mut kernels: Vec<CMat> = vec![CMat::zeros(n, 0)];
    let mut power = CMat::identity(n, n);
    let nnorm = nmat.norm().max(1.0);
    for k in 1..=m {
        power = nmat * power;
        let kn = null_space(&power, thr * nnorm.powi(k as i32 - 1));
        let done = kn.ncols() >= m;
        kernels.push(kn);
        if done {
            break;
        }
    }
    let q = kernels.len() - 1;
    if kernels[q].ncols() < m {
        return Err(LinalgError::JordanChains(format!(
            "generalized eigenspace has dimension {} < algebraic multiplicity {m}",
            kernels[q].ncols()
        )));
    }
    let mut tops: Vec<(usize, CVec)> = Vec::new();
    for k in (1..=q).rev() {
        // span that new tops at level k must avoid
        let mut avoid: Vec<CVec> = kernels[k - 1].column_iter().map(|c| c.into_owned()).collect();
        for (len, v) in &tops {
            let mut w = v.clone();
            for _ in 0..(len - k) {
                w = nmat * w;
            }
            avoid.push(w);
        }
        for cand in kernels[k].column_iter() {
            let base = avoid.len();
            let mut trial = avoid.clone();
            trial.push(cand.into_owned());
            let r = crank(&CMat::from_columns(&trial), 1e-6);
            let r0 = if base == 0 { 0 } else { crank(&CMat::from_columns(&avoid), 1e-6) };
            if r > r0 {
                avoid.push(cand.into_owned());
                tops.push((k, cand.into_owned()));
            }
        }
    }
    let chains: Vec<Vec<CVec>> = tops
        .into_iter()
        .map(|(len, top)| {
            let mut chain = vec![top];
            for _ in 1..len {
                let next = nmat * chain.last().unwrap();
                chain.push(next);
            }
            chain.reverse();
            chain
        })
        .collect();
    let total: usize = chains.iter().map(|c| c.len()).sum();
    if total != m {
        return Err(LinalgError::JordanChains(format!("chains span {total} vectors, expected {m}")));
    }
    Ok(chains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[&[f64]]) -> Mat {
        let n = rows.len();
        let c = rows[0].len();
        Mat::from_fn(n, c, |i, j| rows[i][j])
    }

    #[test]
    fn eigen_of_rotation_like_matrix() {
        let e = eigen(&m(&[&[1.0, -1.0], &[1.0, 0.0]]), CLUSTER_TOL).unwrap();
        assert_eq!(e.clusters.len(), 2);
        let s3 = 3f64.sqrt() / 2.0;
        assert_abs_diff_eq!(e.clusters[0].value.re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(e.clusters[0].value.im, -s3, epsilon = 1e-12);
        assert_abs_diff_eq!(e.clusters[1].value.im, s3, epsilon = 1e-12);
        assert!(e.clusters.iter().all(|c| c.algebraic == 1 && c.geometric == 1));
    }

    #[test]
    fn eigen_identity_is_semisimple() {
        let e = eigen(&Mat::identity(2, 2), CLUSTER_TOL).unwrap();
        assert_eq!(e.clusters.len(), 1);
        assert_eq!((e.clusters[0].algebraic, e.clusters[0].geometric), (2, 2));
        assert!(!e.any_defective());
    }

    #[test]
    fn eigen_jordan_block_is_defective() {
        let a = m(&[&[1.0, 0.0], &[1.0, 1.0]]);
        let e = eigen(&a, CLUSTER_TOL).unwrap();
        assert_eq!(e.clusters.len(), 1);
        let c = &e.clusters[0];
        assert_eq!((c.algebraic, c.geometric), (2, 1));
        assert_eq!(c.chains.len(), 1);
        let chain = &c.chains[0];
        let nm = to_complex(&a) - CMat::identity(2, 2);
        assert!((&nm * &chain[0]).norm() < 1e-10);
        assert!((&nm * &chain[1] - &chain[0]).norm() < 1e-10);
        assert!(chain[0].norm() > 1e-3);
    }

    #[test]
    fn jordan_chains_mixed_block_sizes() {
        // blocks of size 3 and 1 for eigenvalue 2, similarity-transformed
        let mut j = Mat::identity(4, 4) * 2.0;
        j[(0, 1)] = 1.0;
        j[(1, 2)] = 1.0;
        let s = m(&[
            &[1.0, 0.5, 0.0, 0.2],
            &[0.0, 1.0, 0.3, 0.0],
            &[0.1, 0.0, 1.0, 0.4],
            &[0.0, 0.2, 0.0, 1.0],
        ]);
        let a = &s * j * s.clone().try_inverse().unwrap();
        let e = eigen(&a, 1e-5).unwrap();
        assert_eq!(e.clusters.len(), 1);
        let c = &e.clusters[0];
        assert_eq!((c.algebraic, c.geometric), (4, 2));
        let mut lens: Vec<usize> = c.chains.iter().map(|ch| ch.len()).collect();
        lens.sort();
        assert_eq!(lens, vec![1, 3]);
    }

    #[test]
    fn lyapunov_examples() {
        let k = solve_lyapunov(&m(&[&[1.0, -1.0], &[1.0, 0.0]]), &m(&[&[1.0, 0.0], &[0.0, 0.0]])).unwrap();
        assert!((k - Mat::identity(2, 2)).amax() < 1e-12);
        let k = solve_lyapunov(&Mat::identity(3, 3), &Mat::identity(3, 3)).unwrap();
        assert!((k - Mat::identity(3, 3)).amax() < 1e-12);
        let c = m(&[&[1.0, 0.0], &[1.0, 1.0]]);
        let d = m(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let k = solve_lyapunov(&c, &d).unwrap();
        // oracle: inverse of the potential matrix [[2,2],[2,4]]
        let kinv = m(&[&[2.0, 2.0], &[2.0, 4.0]]);
        assert!((&k * kinv - Mat::identity(2, 2)).amax() < 1e-12);
        assert!(lyapunov_residual(&c, &d, &k) < 1e-12);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let c = m(&[&[1.0, 0.0], &[0.0, -1.0]]);
        assert!(matches!(
            solve_lyapunov(&c, &Mat::identity(2, 2)),
            Err(LinalgError::SingularLyapunov(_))
        ));
    }

    #[test]
    fn spd_helpers() {
        assert!((sqrt_spd(&Mat::identity(3, 3)).unwrap() - Mat::identity(3, 3)).amax() < 1e-14);
        let a = m(&[&[4.0, 1.0], &[1.0, 3.0]]);
        let r = sqrt_spd(&a).unwrap();
        assert!((&r * &r - &a).amax() < 1e-12);
        assert!((inv_sqrt_spd(&a).unwrap() * &r - Mat::identity(2, 2)).amax() < 1e-12);
        assert!(matches!(sqrt_spd(&m(&[&[1.0, 0.0], &[0.0, -1.0]])), Err(LinalgError::NotPositiveDefinite(_))));
        assert_abs_diff_eq!(min_eig_sym(&m(&[&[0.25, 0.0], &[0.0, 1.0]])), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn rank_of_fp_ex3_bracket() {
        let d_half = Mat::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]));
        let c1 = m(&[
            &[1.0, 0.0, 1.0, 0.0],
            &[0.0, 1.0, 0.0, 1.0],
            &[-1.0, 0.0, 0.0, 0.0],
            &[0.0, -1.0, 0.0, 0.0],
        ]);
        let bracket = {
            let b = &c1 * &d_half;
            let mut out = Mat::zeros(4, 8);
            out.columns_mut(0, 4).copy_from(&d_half);
            out.columns_mut(4, 4).copy_from(&b);
            out
        };
        assert_eq!(rank_tol(&bracket, 1e-10), 4);
        assert_eq!(rank_tol(&d_half, 1e-10), 2);
    }

    #[test]
    fn expm_zero_is_identity() {
        assert!((expm(&Mat::zeros(3, 3)) - Mat::identity(3, 3)).amax() < 1e-15);
    }
}
