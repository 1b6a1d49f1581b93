use std::f64::consts::PI;
use std::sync::Arc;

use hypocoerce::perturbed::{self, FieldGrid, Kernel, Perturbation, ProjectionBasis, SpectralField, WeightedSpace};
use hypocoerce::simulate;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

const I: C64 = C64 { re: 0.0, im: 1.0 };

fn grid() -> FieldGrid {
    FieldGrid::new(1, 256, 16.0).unwrap()
}

fn shift(alpha: f64) -> Perturbation {
    Perturbation::new(Kernel::ShiftDifference { alpha: vec![alpha] }, vec![1.0]).unwrap()
}

/// Sum of Gaussian bumps `a e^{−(x−m)²/(2s²)}` and its derivative.
#[derive(Debug, Clone)]
struct Bumps(Vec<(f64, f64, f64)>);

impl Bumps {
    fn value(&self, x: f64) -> f64 {
        self.0.iter().map(|&(a, m, s)| a * (-(x - m).powi(2) / (2.0 * s * s)).exp()).sum()
    }

    fn derivative(&self, x: f64) -> f64 {
        self.0.iter().map(|&(a, m, s)| -a * (x - m) / (s * s) * (-(x - m).powi(2) / (2.0 * s * s)).exp()).sum()
    }
}

fn bumps() -> impl Strategy<Value = Bumps> {
    prop::collection::vec((-1.0f64..1.0, -2.0f64..2.0, 0.4f64..1.2), 1..4).prop_map(Bumps)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn weighted_poincare_inequality(f in bumps(), beta in 0.5f64..2.0) {
        let g = grid();
        let space = WeightedSpace::new(beta, 1).unwrap();
        let vals: Vec<C64> = (0..g.n).map(|j| C64::new(f.value(g.x(j)), 0.0)).collect();
        let der: Vec<C64> = (0..g.n).map(|j| C64::new(f.derivative(g.x(j)), 0.0)).collect();
        let lhs = space.norm(&g, &vals);
        let rhs = space.poincare_constant() * space.gradient_norm(&g, &[der]);
        prop_assert!(lhs <= rhs * (1.0 + 1e-10), "{lhs} > {rhs}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn psi_round_trip(f in bumps(), alpha in 0.1f64..1.0) {
        let p = shift(alpha);
        let field = SpectralField::from_fn(grid(), 1.0, |x| f.value(x[0])).unwrap();
        let back = perturbed::apply_psi(&p, &perturbed::apply_psi(&p, &field, true).unwrap(), false).unwrap();
        for (a, b) in back.lines.iter().zip(&field.lines) {
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).norm() <= 1e-11 * (1.0 + y.norm()));
            }
        }
    }

    #[test]
    fn perturbed_flow_is_a_semigroup(f in bumps(), s in 0.1f64..1.0, t in 0.1f64..1.0) {
        let p = shift(0.5);
        let field = SpectralField::from_fn(grid(), 1.0, |x| f.value(x[0])).unwrap();
        let once = perturbed::evolve_perturbed(&p, &field, s + t).unwrap();
        let twice = perturbed::evolve_perturbed(&p, &perturbed::evolve_perturbed(&p, &field, s).unwrap(), t).unwrap();
        let scale = once.samples.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (a, b) in once.samples.iter().zip(&twice.samples) {
            prop_assert!((a - b).norm() <= 1e-8 * (1.0 + scale));
        }
    }
}

#[test]
fn triple_norm_constant_is_resolution_independent() {
    let f = |x: &[f64]| (-(x[0] - 0.4).powi(2)).exp() - 0.5 * (-(x[0] + 1.0).powi(2) / 0.5).exp();
    for (n, l) in [(128, 14.0), (256, 16.0), (512, 18.0)] {
        let field = SpectralField::from_fn(FieldGrid::new(1, n, l).unwrap(), 1.0, f).unwrap();
        let ratio = field.triple_norm.powi(2) / field.weighted_norm().powi(2);
        assert!((ratio - 4.0 * PI).abs() <= 1e-9 * 4.0 * PI, "N = {n}: {ratio}");
    }
    let g2 = FieldGrid::new(2, 64, 12.0).unwrap();
    let field = SpectralField::from_fn(g2, 1.0, |x| (-(x[0] * x[0] + 2.0 * x[1] * x[1])).exp()).unwrap();
    let ratio = field.triple_norm.powi(2) / field.weighted_norm().powi(2);
    assert!((ratio - 2.0 * (2.0 * PI).powi(2)).abs() <= 1e-9 * ratio);
}

/// `∫₀^∞ θ̂(e^{−uc} z) du` for `θ̂(ξ) = iξ e^{−ξ²}`; substituting
/// `s = τ z` turns it into `(i/c) ∫₀¹ z e^{−τ²z²} dτ`, integrated here with
/// composite Simpson.
fn oracle_log_psi(z: C64, c: f64) -> C64 {
    let n = 20_000;
    let h = 1.0 / n as f64;
    let g = |tau: f64| z * (-(z * tau) * (z * tau)).exp();
    let mut s = g(0.0) + g(1.0);
    for k in 1..n {
        s += g(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    I / c * s * h / 3.0
}

#[test]
fn psi_hat_matches_independent_quadrature() {
    for c in [0.5, 1.0, 2.5] {
        let kernel = Kernel::Custom { dim: 1, f: Arc::new(|z: &[C64]| I * z[0] * (-z[0] * z[0]).exp()) };
        let p = Perturbation::new(kernel, vec![c]).unwrap();
        for z in [C64::new(0.3, 0.0), C64::new(2.0, 0.0), C64::new(-1.1, 0.4), C64::new(0.7, -0.9), C64::new(4.0, 0.2)] {
            let got = perturbed::log_psi_hat(&p, &[z]).unwrap();
            let want = oracle_log_psi(z, c);
            assert!((got - want).norm() <= 1e-10 * (1.0 + want.norm()), "c = {c}, z = {z}: {got} vs {want}");
        }
    }
}

#[test]
fn second_order_projection_decays_at_twice_the_gap() {
    let p = shift(0.5);
    let f = Bumps(vec![(1.0, 1.0, 0.7), (-0.8, -0.5, 0.6), (0.3, 0.2, 1.1)]);
    let field = SpectralField::from_fn(grid(), 1.0, |x| f.value(x[0])).unwrap();
    let field = perturbed::moment_projection(&field, 2, ProjectionBasis::Perturbed(&p)).unwrap();
    assert!(field.mass().norm() < 1e-10);
    let times = simulate::linspace(0.0, 6.0, 31);
    let norms: Vec<f64> = times.iter().map(|&t| perturbed::evolve_perturbed(&p, &field, t).unwrap().triple_norm).collect();
    let rate = simulate::fit_rate(&times, &norms).unwrap();
    assert!(rate >= 2.0 * p.c[0] - 0.05, "rate {rate}");
}
