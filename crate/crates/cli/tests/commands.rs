mod common;

use common::*;
use tempfile::tempdir;

fn path(name: &str) -> String {
    data(name).to_str().unwrap().to_owned()
}

#[test]
fn analyze_hoermander_orders() {
    for (file, tau) in [("order_one.json", 1), ("order_two.json", 2), ("ou1d.json", 0), ("rotating.json", 1)] {
        let dir = tempdir().unwrap();
        let o = run(dir.path(), &["analyze", &path(file)]);
        assert_eq!(code(&o), 0, "{file}: {}", String::from_utf8_lossy(&o.stderr));
        let a = read(dir.path(), "analysis.json");
        assert_valid("analysis.schema.json", &a);
        assert_eq!(a["condition_a"]["tau"], tau, "{file}");
        assert_eq!(a["within_tol"], true);
    }
}

#[test]
fn analyze_steady_state_of_rotating_model() {
    let dir = tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["analyze", &path("rotating.json")])), 0);
    let a = read(dir.path(), "analysis.json");
    // D = diag(1,0), C = [[1,-1],[1,0]] has K = I.
    let k = matrix(&a["K"]);
    for (i, row) in k.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            assert!((x - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }
}

#[test]
fn analyze_without_diffusion_exits_2() {
    let dir = tempdir().unwrap();
    let o = run(dir.path(), &["analyze", &path("no_diffusion.json")]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));
    let a = read(dir.path(), "analysis.json");
    assert_valid("analysis.schema.json", &a);
    assert_eq!(a["condition_a"]["holds"], false);
    assert!(a["K"].is_null());
}

#[test]
fn malformed_input_exits_1() {
    let dir = tempdir().unwrap();
    for args in [
        vec!["analyze".to_owned(), path("malformed.json")],
        vec!["certificate".to_owned(), path("malformed.json")],
        vec!["kinetic".to_owned(), path("malformed.json")],
        vec!["analyze".to_owned(), path("does_not_exist.json")],
    ] {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = run(dir.path(), &args);
        assert_eq!(code(&o), 1, "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn ragged_and_nonsymmetric_models_exit_1() {
    let dir = tempdir().unwrap();
    let ragged = dir.path().join("ragged.json");
    std::fs::write(&ragged, r#"{"D": [[1, 0], [0]], "C": [[1, 0], [0, 1]]}"#).unwrap();
    let skew = dir.path().join("skew.json");
    std::fs::write(&skew, r#"{"D": [[1, 0.5], [0, 1]], "C": [[1, 0], [0, 1]]}"#).unwrap();
    for f in [ragged, skew] {
        assert_eq!(code(&run(dir.path(), &["analyze", f.to_str().unwrap()])), 1);
    }
}

#[test]
fn certificate_rotating_rate_one_half() {
    let dir = tempdir().unwrap();
    let o = run(dir.path(), &["certificate", &path("rotating.json")]);
    assert_eq!(code(&o), 0);
    let c = read(dir.path(), "certificate.json");
    assert_valid("certificate.schema.json", &c);
    assert!((c["kappa"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(c["defective"], false);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("2κ") && stdout.contains("2λ_D"), "{stdout}");
}

#[test]
fn certificate_anisotropic_gap_and_lambda_d() {
    let dir = tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["certificate", &path("anisotropic.json")])), 0);
    let c = read(dir.path(), "certificate.json");
    assert_valid("certificate.schema.json", &c);
    assert!((c["mu"].as_f64().unwrap() - 0.625).abs() < 1e-12);
    assert!((c["lambda_d"].as_f64().unwrap() - 0.25).abs() < 1e-12);
}

#[test]
fn certificate_defective_needs_epsilon() {
    let dir = tempdir().unwrap();
    let o = run(dir.path(), &["certificate", &path("jordan.json")]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--epsilon"));
    assert!(!dir.path().join("certificate.json").exists());

    let o = run(dir.path(), &["certificate", &path("jordan.json"), "--epsilon", "0.1"]);
    assert_eq!(code(&o), 0);
    let c = read(dir.path(), "certificate.json");
    assert_valid("certificate.schema.json", &c);
    assert_eq!(c["defective"], true);
    assert!((c["kappa"].as_f64().unwrap() - 0.9).abs() < 1e-9);

    assert_eq!(code(&run(dir.path(), &["certificate", &path("jordan.json"), "--epsilon", "5"])), 1);
}

fn trace(dir: &std::path::Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,e_psi,I_psi,S_psi,bound");
    lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect()
}

fn second_differences(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.windows(3).map(|w| w[0][1] - 2.0 * w[1][1] + w[2][1]).collect()
}

#[test]
fn simulate_writes_trace_and_script() {
    let dir = tempdir().unwrap();
    let o = run(dir.path(), &["simulate", &path("rotating.json"), "--psi", "log", "--t-grid", "0:8:200"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = trace(dir.path());
    assert_eq!(rows.len(), 200);
    assert!(rows.windows(2).all(|w| w[1][1] <= w[0][1] * (1.0 + 1e-12)));
    assert!(rows.iter().all(|r| r[4] >= r[1] * (1.0 - 1e-9)), "bound dominates");
    // Degenerate hypocoercive model: the trace is not convex.
    assert!(second_differences(&rows).iter().any(|d| *d < 0.0));
    let script = std::fs::read_to_string(dir.path().join("plot_trace.py")).unwrap();
    assert!(script.contains("trace.csv") && script.contains("matplotlib"));
}

#[test]
fn simulate_symmetric_trace_is_convex() {
    let dir = tempdir().unwrap();
    let model = dir.path().join("identity.json");
    std::fs::write(&model, r#"{"D": [[1, 0], [0, 1]], "C": [[1, 0], [0, 1]]}"#).unwrap();
    assert_eq!(code(&run(dir.path(), &["simulate", model.to_str().unwrap(), "--psi", "log"])), 0);
    let rows = trace(dir.path());
    let scale = rows[0][1];
    assert!(second_differences(&rows).iter().all(|d| *d >= -1e-12 * scale));
}

#[test]
fn simulate_custom_init_and_bad_grid() {
    let dir = tempdir().unwrap();
    let init = dir.path().join("init.json");
    std::fs::write(&init, r#"{"mean": [1, -1], "cov": [[0.5, 0], [0, 0.5]]}"#).unwrap();
    let o = run(dir.path(), &["simulate", &path("anisotropic.json"), "--init", init.to_str().unwrap(), "--psi", "power:1.5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(trace(dir.path()).len(), 400);
    let o = run(dir.path(), &["simulate", &path("anisotropic.json"), "--t-grid", "2:1:10"]);
    assert_ne!(code(&o), 0);
}

#[test]
fn kinetic_certificate_b2() {
    let dir = tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["kinetic", &path("kinetic_b2.json")])), 0);
    let k = read(dir.path(), "kinetic_certificate.json");
    assert_valid("kinetic_certificate.schema.json", &k);
    let kappa = k["kappa_max"].as_f64().unwrap();
    assert!((kappa - 0.3845).abs() < 1e-4);
    assert!((k["optimal_fixed_omega"]["rate"].as_f64().unwrap() - kappa).abs() < 1e-12);
}

#[test]
fn kinetic_tau_flag_overrides_file() {
    let dir = tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["kinetic", &path("kinetic_b1.json"), "--tau", "-0.5"])), 0);
    let k = read(dir.path(), "kinetic_certificate.json");
    assert_valid("kinetic_certificate.schema.json", &k);
    assert_eq!(k["tau"].as_f64().unwrap(), -0.5);
    assert_eq!(k["case_tag"], "B1");
}

#[test]
fn kinetic_invalid_band_exits_1() {
    let dir = tempdir().unwrap();
    let f = dir.path().join("bad.json");
    std::fs::write(&f, r#"{"nu": 1, "gamma1": 1.2, "gamma2": 0.8}"#).unwrap();
    assert_eq!(code(&run(dir.path(), &["kinetic", f.to_str().unwrap()])), 1);
}

fn low_spectrum(dir: &std::path::Path) -> Vec<f64> {
    let r = read(dir, "perturb.json");
    assert_valid("perturb.schema.json", &r);
    r["spectrum"].as_array().unwrap().iter().map(|e| e["re"].as_f64().unwrap()).collect()
}

#[test]
fn perturb_shift_difference_is_isospectral_to_zero_kernel() {
    let shifted = tempdir().unwrap();
    let o = run(shifted.path(), &["perturb", &path("shift.json"), &path("ou1d.json")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let zero = tempdir().unwrap();
    assert_eq!(code(&run(zero.path(), &["perturb", &path("zero.json"), &path("ou1d.json")])), 0);

    let a = low_spectrum(shifted.path());
    let b = low_spectrum(zero.path());
    for k in 0..4 {
        assert!((a[k] + k as f64).abs() < 1e-4, "{a:?}");
        assert!((a[k] - b[k]).abs() < 1e-4);
    }
    let r = read(zero.path(), "perturb.json");
    assert_eq!(r["conditions"]["theta_sup"].as_f64().unwrap(), 0.0);
    assert_eq!(r["conditions_pass"], true);
    assert!(r["decay"]["rate"].as_f64().unwrap() >= 1.0 - 0.05);
    let csv = std::fs::read_to_string(zero.path().join("field.csv")).unwrap();
    assert!(csv.lines().count() > 256);
}
