#![allow(dead_code)]

use rayon::prelude::*;

/// `Q_γ P + P Q_γᵀ − 2κP ⪰ 0` for every `γ ∈ [γ1, γ2]`. The determinant is
/// concave in `γ` and the diagonal is affine, so the endpoints decide.
pub fn lmi_holds(nu: f64, g1: f64, g2: f64, p12: f64, p22: f64, kappa: f64) -> bool {
    if p22 <= p12 * p12 {
        return false;
    }
    [g1, g2].iter().all(|&g| {
        let a = 2.0 * (p12 - kappa);
        let c = 2.0 * (-g * p12 + (nu - kappa) * p22);
        let b = -g + (nu - 2.0 * kappa) * p12 + p22;
        a >= 0.0 && c >= 0.0 && a * c - b * b >= 0.0
    })
}

/// Largest lattice `κ` feasible for a fixed `P`; feasibility is monotone in
/// `κ` because the matrix decreases by `2κP`.
pub fn best_kappa(nu: f64, g1: f64, g2: f64, p12: f64, p22: f64, n: usize) -> Option<f64> {
    let kap = |i: usize| 0.5 * nu * i as f64 / (n - 1) as f64;
    if !lmi_holds(nu, g1, g2, p12, p22, 0.0) {
        return None;
    }
    let (mut lo, mut hi) = (0usize, n);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if lmi_holds(nu, g1, g2, p12, p22, kap(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // refine between lattice points for a sharper lower bound
    let (mut a, mut b) = (kap(lo), kap((lo + 1).min(n - 1)));
    for _ in 0..40 {
        let m = 0.5 * (a + b);
        if lmi_holds(nu, g1, g2, p12, p22, m) {
            a = m;
        } else {
            b = m;
        }
    }
    Some(a)
}

/// Multi-level `n × n` search over `(p12, p22)` with an `n`-point `κ` lattice.
pub fn lattice_oracle(nu: f64, g1: f64, g2: f64, n: usize, levels: usize) -> f64 {
    let mut box12 = (0.0, nu);
    let mut box22 = (0.0, 2.0 * (nu * nu + g2) + 1.0);
    let mut best = (0.0, 0.0, -1.0);
    for _ in 0..levels {
        let (w12, w22) = (box12.1 - box12.0, box22.1 - box22.0);
        let cand = (0..n * n)
            .into_par_iter()
            .filter_map(|idx| {
                let p12 = box12.0 + w12 * (idx / n) as f64 / (n - 1) as f64;
                let p22 = box22.0 + w22 * (idx % n) as f64 / (n - 1) as f64;
                best_kappa(nu, g1, g2, p12, p22, n).map(|k| (p12, p22, k))
            })
            .reduce(|| (0.0, 0.0, -1.0), |a, b| if b.2 > a.2 { b } else { a });
        if cand.2 > best.2 {
            best = cand;
        }
        let (r12, r22) = (4.0 * w12 / n as f64, 4.0 * w22 / n as f64);
        box12 = ((best.0 - r12).max(0.0), best.0 + r12);
        box22 = ((best.1 - r22).max(0.0), best.1 + r22);
    }
    best.2
}

