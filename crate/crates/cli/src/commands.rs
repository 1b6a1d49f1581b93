use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hypocoerce::entropy::{Density, EntropyGenerator, GaussianDensity};
use hypocoerce::fp_model::{self, FpModel};
use hypocoerce::hypo_cert::{self, CertError, DecayCertificate};
use hypocoerce::kinetic_cert::{self, KineticCertificate, KineticError, OptimalOmega};
use hypocoerce::perturbed::{self, ConditionBounds, ConditionReport, FieldGrid, Perturbation, ProjectionBasis, SpectralField, WeightedSpace};
use hypocoerce::simulate::{self, BoundSpec};
use nalgebra::DVector;
use serde::Serialize;

use crate::input::{self, ParsedModel, TimeGrid};
use crate::{plot, CliError};

pub struct Common {
    pub out: PathBuf,
    pub tol: f64,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok((path, BufWriter::new(f)))
}

// ---------------------------------------------------------------------------
// analyze

#[derive(Serialize)]
struct ConditionA {
    holds: bool,
    a1: bool,
    a2: bool,
    tau: Option<usize>,
    kappa_a: f64,
    rank_d: usize,
    min_re_spectrum: f64,
}

#[derive(Serialize)]
struct Analysis {
    dim: usize,
    condition_a: ConditionA,
    #[serde(rename = "K")]
    k: Option<Vec<Vec<f64>>>,
    lyapunov_residual: Option<f64>,
    within_tol: Option<bool>,
    #[serde(rename = "R")]
    r: Option<Vec<Vec<f64>>>,
    #[serde(rename = "D_hat")]
    d_hat: Option<Vec<Vec<f64>>>,
    #[serde(rename = "C_hat")]
    c_hat: Option<Vec<Vec<f64>>>,
    #[serde(rename = "T")]
    t: Option<Vec<Vec<f64>>>,
}

pub fn analyze(model: &Path, common: &Common) -> Result<(), CliError> {
    let m = match input::read_model(model)? {
        ParsedModel::Model(m) => m,
        ParsedModel::NoDiffusion(c) => {
            let min_re = c.complex_eigenvalues().iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
            let a = Analysis {
                dim: c.nrows(),
                condition_a: ConditionA { holds: false, a1: false, a2: min_re > 0.0, tau: None, kappa_a: 0.0, rank_d: 0, min_re_spectrum: min_re },
                k: None,
                lyapunov_residual: None,
                within_tol: None,
                r: None,
                d_hat: None,
                c_hat: None,
                t: None,
            };
            write_json(&common.out, "analysis.json", &a)?;
            return Err(CliError::ConditionA("D vanishes identically; ker D = ℝ^d is Cᵀ-invariant".into()));
        }
    };
    let rep = fp_model::check_condition_a(&m);
    let cond = ConditionA {
        holds: rep.holds(),
        a1: rep.a1,
        a2: rep.a2,
        tau: rep.tau,
        kappa_a: rep.kappa_a,
        rank_d: rep.rank_d,
        min_re_spectrum: rep.min_re_spectrum,
    };
    if !rep.holds() {
        let a = Analysis { dim: m.dim(), condition_a: cond, k: None, lyapunov_residual: None, within_tol: None, r: None, d_hat: None, c_hat: None, t: None };
        write_json(&common.out, "analysis.json", &a)?;
        return Err(CliError::ConditionA(format!("A1 = {}, A2 = {}", rep.a1, rep.a2)));
    }
    let ss = fp_model::steady_state(&m).map_err(|e| CliError::Numeric(e.to_string()))?;
    let n = fp_model::normalize(&m).map_err(|e| CliError::Numeric(e.to_string()))?;
    let dec = fp_model::decompose(&m, &ss);
    let a = Analysis {
        dim: m.dim(),
        condition_a: cond,
        k: Some(input::rows(&ss.k)),
        lyapunov_residual: Some(ss.residual),
        within_tol: Some(ss.residual <= common.tol),
        r: Some(input::rows(&dec.r)),
        d_hat: Some(input::rows(&n.d_hat)),
        c_hat: Some(input::rows(&n.c_hat)),
        t: Some(input::rows(&n.transform())),
    };
    let path = write_json(&common.out, "analysis.json", &a)?;
    println!("condition (A) holds, τ = {}, Lyapunov residual {:.3e}", rep.tau.unwrap_or(0), ss.residual);
    println!("wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// certificate

#[derive(Serialize)]
struct CertificateReport {
    #[serde(flatten)]
    certificate: DecayCertificate,
    rate_e: f64,
    lambda_d: f64,
    constant_bound: f64,
    #[serde(rename = "P_original")]
    p_original: Vec<Vec<f64>>,
    within_tol: bool,
}

fn model_or_exit(path: &Path) -> Result<FpModel, CliError> {
    match input::read_model(path)? {
        ParsedModel::Model(m) => Ok(m),
        ParsedModel::NoDiffusion(_) => Err(CliError::ConditionA("D vanishes identically".into())),
    }
}

fn certify(m: &FpModel, epsilon: Option<f64>) -> Result<hypo_cert::Certification, CliError> {
    hypo_cert::certify(m, epsilon).map_err(|e| match e {
        CertError::EpsilonRequired { .. } => CliError::ConditionA(format!("{e}; pass --epsilon")),
        CertError::NotStable(_) | CertError::Model(fp_model::ModelError::ConditionA(_)) => CliError::ConditionA(e.to_string()),
        CertError::EpsilonOutOfRange { .. } => CliError::Input(e.to_string()),
        e => CliError::Numeric(e.to_string()),
    })
}

pub fn certificate(model: &Path, epsilon: Option<f64>, common: &Common) -> Result<(), CliError> {
    let m = model_or_exit(model)?;
    let cert = certify(&m, epsilon)?;
    let tol = common.tol;
    let report = CertificateReport {
        rate_e: cert.rate_e,
        lambda_d: cert.lambda_d,
        constant_bound: cert.constant_bound,
        p_original: input::rows(&cert.p_original()),
        within_tol: cert.certificate.residual >= -tol,
        certificate: cert.certificate.clone(),
    };
    let path = write_json(&common.out, "certificate.json", &report)?;
    println!("2κ = {:.12}   2λ_D = {:.12}   (μ = {:.12})", cert.rate_e, 2.0 * cert.lambda_d, cert.certificate.mu);
    println!("wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate

pub fn simulate(
    model: &Path,
    psi: EntropyGenerator,
    grid: TimeGrid,
    init: Option<&Path>,
    epsilon: Option<f64>,
    common: &Common,
) -> Result<(), CliError> {
    let m = model_or_exit(model)?;
    let ss = fp_model::steady_state(&m).map_err(|e| match e {
        fp_model::ModelError::ConditionA(s) => CliError::ConditionA(s),
        e => CliError::Numeric(e.to_string()),
    })?;
    let d = m.dim();
    let (m0, sigma0) = match init {
        Some(p) => {
            let f: input::InitFile = input::read_json(p)?;
            let cov = input::matrix("cov", &f.cov)?;
            if f.mean.len() != d || cov.shape() != (d, d) {
                return Err(CliError::Input(format!("initial datum must have dimension {d}")));
            }
            (DVector::from_vec(f.mean), cov)
        }
        None => {
            let mut mean = DVector::zeros(d);
            mean[0] = 0.5;
            (&ss.k_sqrt * mean, ss.k.clone())
        }
    };
    let times = simulate::linspace(grid.start, grid.end, grid.count);
    let tr = simulate::propagate_gaussian(&m, &m0, &sigma0, &times).map_err(|e| CliError::Input(e.to_string()))?;
    let bound = match certify(&m, epsilon) {
        Ok(c) => Some(BoundSpec { p: c.p_original(), kappa: c.certificate.kappa, constant: c.constant_bound }),
        Err(CliError::ConditionA(why)) => {
            eprintln!("note: no bound column ({why})");
            None
        }
        Err(e) => return Err(e),
    };
    let f_inf = Density::Gaussian(GaussianDensity::new(DVector::zeros(d), ss.k.clone()).map_err(|e| CliError::Numeric(e.to_string()))?);
    let rows = simulate::entropy_trace(&tr.samples(), &f_inf, &m.diffusion, psi, bound.as_ref())
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    let (csv, mut w) = create(&common.out, "trace.csv")?;
    simulate::write_trace_csv(&rows, &mut w).map_err(|e| CliError::Io(e.to_string()))?;
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    let (script, mut w) = create(&common.out, "plot_trace.py")?;
    w.write_all(plot::TRACE_SCRIPT.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?;
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    let e: Vec<f64> = rows.iter().map(|r| r.e_psi).collect();
    match simulate::fit_rate(&times, &e) {
        Ok(rate) => println!("fitted entropy decay rate {rate:.6}"),
        Err(err) => eprintln!("note: {err}"),
    }
    println!("wrote {} and {}", csv.display(), script.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// kinetic

#[derive(Serialize)]
struct KineticReport {
    sigma: f64,
    #[serde(flatten)]
    certificate: KineticCertificate,
    optimal_fixed_omega: Option<OptimalOmega>,
}

pub fn kinetic(params: &Path, tau: Option<f64>, common: &Common) -> Result<(), CliError> {
    let (k, file_tau) = input::read_kinetic(params)?;
    let tau = tau.unwrap_or(file_tau);
    let cert = kinetic_cert::kappa_max(&k, tau).map_err(|e| match e {
        KineticError::Infeasible { .. } | KineticError::DefectiveInterface => CliError::ConditionA(e.to_string()),
        KineticError::Invalid(_) => CliError::Input(e.to_string()),
        e => CliError::Numeric(e.to_string()),
    })?;
    let optimal = if k.gamma1 > 0.0 { kinetic_cert::optimize_omega0(&k).ok() } else { None };
    let report = KineticReport { sigma: k.sigma, certificate: cert.clone(), optimal_fixed_omega: optimal };
    let path = write_json(&common.out, "kinetic_certificate.json", &report)?;
    println!("κ_max = {:.12} ({:?}), P = [[1, {:.6}], [{:.6}, {:.6}]]", cert.kappa_max, cert.case_tag, cert.p12, cert.p12, cert.p22);
    println!("wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// perturb

#[derive(Serialize)]
struct Eigenvalue {
    re: f64,
    im: f64,
    boundary_fraction: f64,
}

#[derive(Serialize)]
struct Decay {
    times: Vec<f64>,
    triple_norm: Vec<f64>,
    rate: f64,
    gap: f64,
}

#[derive(Serialize)]
struct PerturbReport {
    dim: usize,
    beta: f64,
    c: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    grid_points: usize,
    half_width: f64,
    conditions: ConditionReport,
    conditions_pass: bool,
    spectrum: Option<Vec<Eigenvalue>>,
    decay: Decay,
}

pub struct PerturbOptions {
    pub beta: f64,
    pub n: Option<usize>,
    pub half_width: Option<f64>,
    pub re_integral_bound: f64,
}

pub fn perturb(perturbation: &Path, model: &Path, opts: &PerturbOptions, common: &Common) -> Result<(), CliError> {
    let spec = input::read_perturbation(perturbation)?;
    let m = model_or_exit(model)?;
    let dim = m.dim();
    let kernel = spec.build(dim).map_err(|e| CliError::Input(e.to_string()))?;
    let (c, kernel, a) = perturbed::reduce(&m.diffusion, &m.drift, kernel).map_err(|e| CliError::ConditionA(e.to_string()))?;
    let p = Perturbation::new(kernel, c.clone()).map_err(|e| CliError::Input(e.to_string()))?;
    let space = WeightedSpace::new(opts.beta, dim).map_err(|e| CliError::Input(e.to_string()))?;
    let bounds = ConditionBounds { re_integral_sup: opts.re_integral_bound, ..ConditionBounds::default() };
    let conditions = perturbed::check_conditions_c(&p, &space, if dim == 1 { 81 } else { 21 }, 20.0, &bounds);

    let n = opts.n.unwrap_or(if dim == 1 { 256 } else { 64 });
    let half_width = opts.half_width.unwrap_or(if dim == 1 { 16.0 } else { 12.0 });
    let grid = FieldGrid::new(dim, n, half_width).map_err(|e| CliError::Input(e.to_string()))?;
    let spectrum = if dim == 1 {
        let ev = perturbed::resolved_spectrum(&p, &grid, 6, 1e-6).map_err(|e| CliError::Numeric(e.to_string()))?;
        Some(ev.iter().map(|e| Eigenvalue { re: e.value.re, im: e.value.im, boundary_fraction: e.boundary_fraction }).collect())
    } else {
        None
    };

    // zero-mass test datum: two Gaussian bumps projected off the ground state
    let bumps = |x: &[f64]| {
        let r1: f64 = x.iter().enumerate().map(|(i, v)| (v - 1.0 + 0.3 * i as f64).powi(2)).sum();
        let r2: f64 = x.iter().map(|v| (v + 0.5).powi(2)).sum();
        (-r1 / (2.0 * 0.49)).exp() - 0.8 * (-r2 / (2.0 * 0.36)).exp()
    };
    let field = SpectralField::from_fn(grid, opts.beta, bumps).map_err(|e| CliError::Numeric(e.to_string()))?;
    let field = perturbed::moment_projection(&field, 1, ProjectionBasis::Perturbed(&p)).map_err(|e| CliError::Numeric(e.to_string()))?;
    let times = simulate::linspace(0.0, 8.0, 41);
    let norms: Vec<f64> = times
        .iter()
        .map(|&t| perturbed::evolve_perturbed(&p, &field, t).map(|f| f.triple_norm))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    let rate = simulate::fit_rate(&times, &norms).map_err(|e| CliError::Numeric(e.to_string()))?;

    let report = PerturbReport {
        dim,
        beta: opts.beta,
        c: c.clone(),
        a: input::rows(&a),
        grid_points: n,
        half_width,
        conditions,
        conditions_pass: conditions.passes(),
        spectrum,
        decay: Decay { times, triple_norm: norms, rate, gap: c[0] },
    };
    let path = write_json(&common.out, "perturb.json", &report)?;
    let (csv, mut w) = create(&common.out, "field.csv")?;
    field.dump_csv(&mut w).map_err(|e| CliError::Io(e.to_string()))?;
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    println!("c = {c:?}; conditions (C) {}; triple-norm decay rate {rate:.6} (c₁ = {})", if conditions.passes() { "hold" } else { "fail" }, c[0]);
    println!("wrote {} and {}", path.display(), csv.display());
    Ok(())
}
