use hypocoerce::kinetic_cert::{self, CaseTag, KineticError, KineticParams, GAMMA_SAMPLES};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{lattice_oracle, lmi_holds};

fn random_params(rng: &mut ChaCha8Rng) -> KineticParams {
    loop {
        let nu = rng.gen_range(0.3..3.0);
        let g1 = rng.gen_range(0.05..3.0);
        let g2 = g1 + rng.gen_range(0.0..3.0);
        let Ok(k) = KineticParams::new(nu, 1.0, g1, g2) else { continue };
        if !kinetic_cert::feasibility(&k) || (k.gamma2.sqrt() - k.gamma1.sqrt() - nu).abs() < 0.05 {
            continue;
        }
        if (3.0 * g1 + g2 - nu * nu).abs() < 1e-3 {
            continue;
        }
        return k;
    }
}

#[test]
fn closed_form_matches_lattice_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut b1 = 0;
    let mut b2 = 0;
    for _ in 0..20 {
        let k = random_params(&mut rng);
        let cert = kinetic_cert::kappa_max(&k, 0.0).unwrap();
        let oracle = lattice_oracle(k.nu, k.gamma1, k.gamma2, 200, 3);
        match cert.case_tag {
            CaseTag::B1 => b1 += 1,
            CaseTag::B2 => b2 += 1,
            CaseTag::Quadratic => {}
        }
        assert!(
            (oracle - cert.kappa_max).abs() <= 1e-3,
            "{k:?}: closed form {} vs lattice {oracle}",
            cert.kappa_max
        );
        assert!(oracle <= cert.kappa_max + 1e-9, "{k:?}: lattice beats the closed form");
    }
    assert!(b1 > 0 && b2 > 0, "both branches exercised ({b1}, {b2})");
}

#[test]
fn branches_are_continuous() {
    for &(nu, g1) in &[(2.0, 0.5), (1.5, 0.3), (3.0, 1.0), (1.0, 0.2)] {
        let g2 = nu * nu - 3.0 * g1;
        let below = kinetic_cert::kappa_max(&KineticParams::new(nu, 1.0, g1, g2 - 1e-12).unwrap(), 0.0).unwrap();
        let above = kinetic_cert::kappa_max(&KineticParams::new(nu, 1.0, g1, g2 + 1e-12).unwrap(), 0.0).unwrap();
        assert_eq!(below.case_tag, CaseTag::B1);
        assert_eq!(above.case_tag, CaseTag::B2);
        assert!((below.kappa_max - above.kappa_max).abs() <= 1e-9);
    }
}

#[test]
fn infeasible_and_degenerate_inputs() {
    let k = KineticParams::new(0.5, 1.0, 0.1, 4.0).unwrap();
    assert!(matches!(kinetic_cert::kappa_max(&k, 0.0), Err(KineticError::Infeasible { .. })));
    let k = KineticParams::new(2.0, 1.0, 1.0, 1.0).unwrap();
    assert!(matches!(kinetic_cert::kappa_max(&k, 0.0), Err(KineticError::DefectiveInterface)));
    let k = KineticParams::new(2.0, 1.0, 0.0, 1.0).unwrap();
    let c = kinetic_cert::kappa_max(&k, 0.0).unwrap();
    assert_eq!(c.kappa_max, 0.0);
    assert!(c.no_exponential_certificate);
}

fn params() -> impl Strategy<Value = KineticParams> {
    (0.3f64..3.0, 0.05f64..3.0, 0.0f64..3.0).prop_filter_map("infeasible", |(nu, g1, dg)| {
        let k = KineticParams::new(nu, 1.0, g1, g1 + dg).ok()?;
        let interface = dg < 1e-9 && (4.0 * g1 - nu * nu).abs() < 1e-6;
        (kinetic_cert::feasibility(&k) && !interface).then_some(k)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn certificate_bounds(k in params()) {
        let c = kinetic_cert::kappa_max(&k, 0.0).unwrap();
        prop_assert!(c.kappa_max >= 0.0 && c.kappa_max <= k.nu / 2.0 + 1e-12);
        prop_assert!(c.p12 <= k.nu - c.kappa_max + 1e-12);
        prop_assert!(c.p22 > c.p12 * c.p12);
        prop_assert!(lmi_holds(k.nu, k.gamma1, k.gamma2, c.p12, c.p22, c.kappa_max - 1e-9));
    }

    #[test]
    fn smaller_rates_stay_certified(k in params(), frac in 0.0f64..1.0) {
        let c = kinetic_cert::kappa_max(&k, 0.0).unwrap();
        let kappa = frac * c.kappa_max;
        prop_assert!(kinetic_cert::check_conditions(&k, c.p12, c.p22, kappa, GAMMA_SAMPLES, 1e-10).is_some());
    }

    #[test]
    fn widening_the_curvature_band_never_helps(k in params(), extra in 0.0f64..1.0) {
        let wider = KineticParams::new(k.nu, 1.0, k.gamma1, k.gamma2 + extra).unwrap();
        prop_assume!(kinetic_cert::feasibility(&wider));
        prop_assume!(!((wider.gamma2 - wider.gamma1) < 1e-9 && (4.0 * wider.gamma1 - k.nu * k.nu).abs() < 1e-6));
        let a = kinetic_cert::kappa_max(&k, 0.0).unwrap().kappa_max;
        let b = kinetic_cert::kappa_max(&wider, 0.0).unwrap().kappa_max;
        prop_assert!(b <= a + 1e-9);
    }

    #[test]
    fn optimal_split_reaches_kappa_max(k in params()) {
        let c = kinetic_cert::kappa_max(&k, 0.0).unwrap();
        let opt = kinetic_cert::optimize_omega0(&k).unwrap();
        prop_assert!((opt.rate - c.kappa_max).abs() <= 1e-12 * (1.0 + k.nu), "{} vs {}", opt.rate, c.kappa_max);
    }
}

#[test]
fn brute_force_split_never_beats_kappa_max() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let k = random_params(&mut rng);
        let c = kinetic_cert::kappa_max(&k, 0.0).unwrap();
        let top = 2.0 * (k.gamma2 + k.nu * k.nu);
        let sup = (0..20_000)
            .filter_map(|i| kinetic_cert::legacy_rate(&k, top * (i as f64 + 0.5) / 20_000.0).ok())
            .map(|l| l.rate)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(sup <= c.kappa_max + 1e-9, "{k:?}: {sup} > {}", c.kappa_max);
        assert!(sup >= c.kappa_max - 1e-3, "{k:?}: {sup} << {}", c.kappa_max);
    }
}
