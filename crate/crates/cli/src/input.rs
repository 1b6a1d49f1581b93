use std::path::Path;

use hypocoerce::fp_model::FpModel;
use hypocoerce::kinetic_cert::KineticParams;
use hypocoerce::linalg::Mat;
use hypocoerce::perturbed::KernelSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticFile {
    pub nu: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    #[serde(default)]
    pub tau: f64,
}

fn one() -> f64 {
    1.0
}

/// Gaussian initial datum for `simulate`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitFile {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<Mat, CliError> {
    let n = rows.len();
    if n == 0 {
        return Err(CliError::Input(format!("{name} is empty")));
    }
    let m = rows[0].len();
    if let Some(r) = rows.iter().position(|r| r.len() != m) {
        return Err(CliError::Input(format!("{name} is ragged: row {r} has {} entries, row 0 has {m}", rows[r].len())));
    }
    Ok(Mat::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub enum ParsedModel {
    Model(FpModel),
    /// `D ≡ 0`, carrying `C`: reported as a condition-(A) failure.
    NoDiffusion(Mat),
}

pub fn read_model(path: &Path) -> Result<ParsedModel, CliError> {
    let f: ModelFile = read_json(path)?;
    let d = matrix("D", &f.d)?;
    let c = matrix("C", &f.c)?;
    if d.nrows() == d.ncols() && d.iter().all(|x| *x == 0.0) && c.shape() == d.shape() {
        return Ok(ParsedModel::NoDiffusion(c));
    }
    FpModel::new(d, c).map(ParsedModel::Model).map_err(|e| CliError::Input(e.to_string()))
}

pub fn read_kinetic(path: &Path) -> Result<(KineticParams, f64), CliError> {
    let f: KineticFile = read_json(path)?;
    let k = KineticParams::new(f.nu, f.sigma, f.gamma1, f.gamma2).map_err(|e| CliError::Input(e.to_string()))?;
    Ok((k, f.tau))
}

pub fn read_perturbation(path: &Path) -> Result<KernelSpec, CliError> {
    read_json(path)
}

/// `start:end:count` with `count ≥ 2` and `end > start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

impl std::str::FromStr for TimeGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts[..] else {
            return Err(format!("expected start:end:count, got {s:?}"));
        };
        let start: f64 = a.parse().map_err(|e| format!("start: {e}"))?;
        let end: f64 = b.parse().map_err(|e| format!("end: {e}"))?;
        let count: usize = n.parse().map_err(|e| format!("count: {e}"))?;
        if !(end > start) || count < 2 || !start.is_finite() || !end.is_finite() {
            return Err(format!("time grid {s:?} is not strictly increasing with at least two samples"));
        }
        Ok(TimeGrid { start, end, count })
    }
}

/// `log` or `power:p`.
pub fn parse_psi(s: &str) -> Result<hypocoerce::entropy::EntropyGenerator, String> {
    use hypocoerce::entropy::EntropyGenerator;
    match s.split_once(':') {
        None if s == "log" => Ok(EntropyGenerator::Logarithmic),
        Some(("power", p)) => {
            let p: f64 = p.parse().map_err(|e| format!("power exponent: {e}"))?;
            EntropyGenerator::power(p).map_err(|e| e.to_string())
        }
        _ => Err(format!("expected log or power:p, got {s:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_grid_parsing() {
        let g: TimeGrid = "0:8:400".parse().unwrap();
        assert_eq!(g, TimeGrid { start: 0.0, end: 8.0, count: 400 });
        assert!("1:1:5".parse::<TimeGrid>().is_err());
        assert!("0:1".parse::<TimeGrid>().is_err());
        assert!("0:1:1".parse::<TimeGrid>().is_err());
    }

    #[test]
    fn psi_parsing() {
        use hypocoerce::entropy::EntropyGenerator;
        assert_eq!(parse_psi("log").unwrap(), EntropyGenerator::Logarithmic);
        assert_eq!(parse_psi("power:2").unwrap(), EntropyGenerator::Power(2.0));
        assert!(parse_psi("power:3").is_err());
        assert!(parse_psi("square").is_err());
    }

    #[test]
    fn ragged_matrix_rejected() {
        assert!(matrix("D", &[vec![1.0, 0.0], vec![0.0]]).is_err());
        assert_eq!(matrix("D", &[vec![1.0, 2.0]]).unwrap().ncols(), 2);
    }
}
