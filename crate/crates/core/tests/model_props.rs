use hypocoerce::fp_model::{self, fixtures, FpModel};
use hypocoerce::hypo_cert::{self, CertError};
use hypocoerce::linalg::{self, Mat};
use proptest::prelude::*;

/// `C = (D + R) K⁻¹` for a random PSD `D` of rank `r`, skew `R` and SPD `K`;
/// by construction `CK + KCᵀ = 2D`.
fn model(d: usize) -> impl Strategy<Value = FpModel> {
    (
        1..=d,
        prop::collection::vec(-1.0f64..1.0, d * d),
        prop::collection::vec(-2.0f64..2.0, d * d),
        prop::collection::vec(-1.0f64..1.0, d * d),
    )
        .prop_map(move |(rank, a, r, k)| {
            let b = Mat::from_fn(d, rank, |i, j| a[i * d + j]);
            let dm = &b * b.transpose();
            let rm = linalg::skew(&Mat::from_row_slice(d, d, &r));
            let km = Mat::from_row_slice(d, d, &k);
            let km = &km * km.transpose() + Mat::identity(d, d) * 0.5;
            let c = (&dm + rm) * km.try_inverse().unwrap();
            FpModel::new(linalg::sym(&dm), c).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn rank_and_psd_sum_characterizations_agree(m in (2usize..5).prop_flat_map(model)) {
        let rep = fp_model::check_condition_a(&m);
        prop_assume!(rep.holds());
        // both tests are exact; near the rank boundary neither is decidable in floating point
        let s = fp_model::psd_sum(&m, rep.tau.unwrap());
        prop_assume!(rep.kappa_a > 1e-6 * (1.0 + s.norm()));
        prop_assert_eq!(rep.tau, fp_model::tau_from_psd_sum(&m));
        let ss = fp_model::steady_state(&m).unwrap();
        prop_assert!(linalg::is_spd(&ss.k));
        prop_assert!(ss.residual < 1e-8);
    }

    #[test]
    fn normalization_invariants(m in (2usize..4).prop_flat_map(model)) {
        prop_assume!(fp_model::check_condition_a(&m).holds());
        let ss = fp_model::steady_state(&m).unwrap();
        prop_assume!(linalg::min_eig_sym(&ss.k) > 1e-6);
        let n = fp_model::normalize(&m).unwrap();
        let mut a: Vec<f64> = m.drift.complex_eigenvalues().iter().map(|z| z.re).collect();
        let mut b: Vec<f64> = n.c_hat.complex_eigenvalues().iter().map(|z| z.re).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-6 * (1.0 + x.abs()));
        }
        let again = fp_model::normalize(&n.as_model().unwrap()).unwrap();
        prop_assert!((&again.d_hat - &n.d_hat).norm() < 1e-8);
        let dec = fp_model::decompose(&m, &ss);
        prop_assert!(dec.skew_residual < 1e-12 * (1.0 + dec.r.norm()));
        prop_assert!(dec.reconstruction_residual < 1e-8);
    }

    #[test]
    fn certificates_satisfy_matrix_inequality(m in (2usize..5).prop_flat_map(model)) {
        prop_assume!(fp_model::check_condition_a(&m).holds());
        let cert = match hypo_cert::certify(&m, Some(1e-3)) {
            Ok(c) => c,
            Err(CertError::EpsilonOutOfRange { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let p = cert.certificate.p_matrix();
        let c = &cert.normalized.c_hat;
        prop_assert!(hypo_cert::certificate_residual(&p, c, cert.certificate.kappa) >= -1e-10 * (1.0 + p.norm() * (1.0 + c.norm())));
    }
}

/// Normalized model with diagonal `D̂` and `Ĉ = D̂ + R̂`.
fn normalized(d: usize) -> impl Strategy<Value = FpModel> {
    (prop::collection::vec(0.05f64..3.0, d), prop::collection::vec(-3.0f64..3.0, d * d)).prop_map(move |(dd, r)| {
        let dm = Mat::from_diagonal(&nalgebra::DVector::from_vec(dd));
        let rm = linalg::skew(&Mat::from_row_slice(d, d, &r));
        FpModel::new(dm.clone(), dm + rm).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn rate_comparison(m in (2usize..5).prop_flat_map(normalized)) {
        let r = hypo_cert::compare_rates(&m).unwrap();
        prop_assert!(r.lambda_d <= r.mu + 1e-9 * (1.0 + m.drift.norm()));
    }

    #[test]
    fn rate_comparison_strict_when_defective(a in 0.1f64..3.0, gap in 0.05f64..2.0) {
        // [[a, −r], [r, b]] with r = (b − a)/2 has a double, defective eigenvalue
        let b = a + gap;
        let r = 0.5 * gap;
        let m = FpModel::new(Mat::from_row_slice(2, 2, &[a, 0.0, 0.0, b]), Mat::from_row_slice(2, 2, &[a, -r, r, b])).unwrap();
        let c = hypo_cert::compare_rates(&m).unwrap();
        prop_assert!(c.strict);
        prop_assert!(c.lambda_d < c.mu);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn characteristic_decay(m in (2usize..4).prop_flat_map(normalized), x0 in prop::collection::vec(-1.0f64..1.0, 3)) {
        let cert = match hypo_cert::certify(&m, Some(1e-2)) {
            Ok(c) => c,
            Err(_) => return Ok(()),
        };
        let d = m.dim();
        let c = &cert.normalized.c_hat;
        let p = cert.certificate.p_matrix();
        let x0 = nalgebra::DVector::from_iterator(d, x0.into_iter().take(d));
        let mut last = f64::INFINITY;
        for k in 0..60 {
            let t = 0.1 * k as f64;
            let x = linalg::expm(&(c * -t)) * &x0;
            let q = x.dot(&(&p * &x)) * (2.0 * cert.certificate.kappa * t).exp();
            prop_assert!(q <= last * (1.0 + 1e-8) + 1e-14, "t = {t}: {q} > {last}");
            last = q;
        }
    }

    #[test]
    fn build_p_scales_with_weights(m in (2usize..4).prop_flat_map(normalized), s in 0.1f64..10.0) {
        let c = &m.drift;
        let Ok(p1) = hypo_cert::build_p(c, None, 0.0) else { return Ok(()) };
        let w = vec![s; m.dim()];
        let p2 = hypo_cert::build_p(c, Some(&w), 0.0).unwrap();
        prop_assert!((p2.p_matrix() - p1.p_matrix() * s).norm() < 1e-9 * s * (1.0 + p1.p_matrix().norm()));
        prop_assert!((p2.kappa - p1.kappa).abs() < 1e-12);
        prop_assert!((p2.lambda_p / p2.p_matrix().norm() - p1.lambda_p / p1.p_matrix().norm()).abs() < 1e-9);
    }
}

#[test]
fn fixture_certificates_are_real_and_valid() {
    for m in [fixtures::rotating(1.0), fixtures::anisotropic(), fixtures::order_one(), fixtures::order_two()] {
        let cert = hypo_cert::certify(&m, Some(1e-2)).unwrap();
        let p = cert.certificate.p_matrix();
        assert!(linalg::is_symmetric(&p, 1e-12));
        assert!(hypo_cert::certificate_residual(&p, &cert.normalized.c_hat, cert.certificate.kappa) >= -1e-10);
    }
}
