//! File formats: JSON loaders for chains, densities, and transport
//! parameters; JSON report types; CSV exports for paths and trajectories.
//!
//! All reports serialize with a fixed field order and contain no
//! timestamps, so identical inputs produce byte-identical output.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{build_chain, MarkovChain, SpectrumReport};
use crate::distance::{DiscretePath, DistanceEstimate, L1Bounds};
use crate::flow::{DecayReport, FlowTrajectory};
use crate::operators::TransportParams;
use crate::{Density, Error as DomainError};

/// Errors from loading input files, split so callers can distinguish
/// I/O and parse failures (CLI exit code 2) from domain rejections
/// (exit code 1).
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// On-disk chain: row-major kernel plus optional state labels.
#[derive(Debug, Serialize, Deserialize)]
pub struct ChainFile {
    pub kernel: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

/// Load and validate a chain from `{"kernel": [[...], ...]}`.
pub fn load_chain(path: &Path) -> Result<MarkovChain, LoadError> {
    let file: ChainFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    let n = file.kernel.len();
    for row in &file.kernel {
        if row.len() != n {
            return Err(DomainError::NotSquare(n, row.len()).into());
        }
    }
    let kernel = DMatrix::from_fn(n, n, |x, y| file.kernel[x][y]);
    Ok(build_chain(kernel)?)
}

/// On-disk density: `{"values": [...]}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct DensityFile {
    pub values: Vec<f64>,
}

/// Load a nonnegative density; a negative entry is rejected with its index.
pub fn load_density(path: &Path) -> Result<Density, LoadError> {
    let file: DensityFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    for (index, &value) in file.values.iter().enumerate() {
        if value < 0.0 {
            return Err(DomainError::NegativeEntry { index, value }.into());
        }
    }
    Ok(DVector::from_vec(file.values))
}

/// On-disk transport parameters.
#[derive(Debug, Serialize, Deserialize)]
pub struct ParamsFile {
    pub a: f64,
    pub b: f64,
    pub p: Vec<f64>,
    #[serde(default)]
    pub normalize_p: bool,
}

/// Load transport parameters against a chain. With `normalize_p` the
/// direction is rescaled to unit weighted mass; otherwise the invariant is
/// checked and violation is an error.
pub fn load_params(path: &Path, chain: &MarkovChain) -> Result<TransportParams, LoadError> {
    let file: ParamsFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    let p = DVector::from_vec(file.p);
    let params = if file.normalize_p {
        TransportParams::normalized(file.a, file.b, p, chain)?
    } else {
        TransportParams::new(file.a, file.b, p, chain)?
    };
    Ok(params)
}

/// Chain summary printed by `validate` and `spectrum`.
#[derive(Debug, Serialize)]
pub struct ChainReport {
    pub n: usize,
    pub stationary: Vec<f64>,
    pub reversibility_defect: f64,
    pub irreducible: bool,
}

impl ChainReport {
    pub fn new(chain: &MarkovChain) -> Self {
        Self {
            n: chain.n(),
            stationary: chain.stationary().iter().copied().collect(),
            reversibility_defect: chain.reversibility_defect(),
            irreducible: true,
        }
    }
}

/// JSON form of a spectrum report.
#[derive(Debug, Serialize)]
pub struct SpectrumJson {
    pub eigenvalues: Vec<f64>,
    pub spectral_gap: f64,
    pub top_eigenvector_defect: f64,
}

impl From<&SpectrumReport> for SpectrumJson {
    fn from(report: &SpectrumReport) -> Self {
        Self {
            eigenvalues: report.eigenvalues.iter().copied().collect(),
            spectral_gap: report.spectral_gap,
            top_eigenvector_defect: report.top_eigenvector_defect,
        }
    }
}

/// Path serialized inside a distance report.
#[derive(Debug, Serialize)]
pub struct PathJson {
    pub times: Vec<f64>,
    pub measures: Vec<Vec<f64>>,
    pub sources: Vec<f64>,
}

impl From<&DiscretePath> for PathJson {
    fn from(path: &DiscretePath) -> Self {
        Self {
            times: path.times.clone(),
            measures: path.measures.iter().map(|m| m.iter().copied().collect()).collect(),
            sources: path.sources.clone(),
        }
    }
}

/// Distance report with the L1-equivalence sandwich appended.
#[derive(Debug, Serialize)]
pub struct DistanceReport {
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub n_steps: usize,
    pub restarts_used: usize,
    pub converged: bool,
    pub path: PathJson,
    pub trace: Vec<(usize, f64)>,
    pub l1_distance: f64,
    pub l1_lower_factor: f64,
    pub l1_upper_factor: f64,
    pub l1_samples: usize,
    pub sandwich_lower_ok: bool,
    pub sandwich_upper_ok: bool,
}

impl DistanceReport {
    pub fn new(estimate: &DistanceEstimate, bounds: &L1Bounds, l1_distance: f64) -> Self {
        Self {
            upper_bound: estimate.upper_bound,
            lower_bound: estimate.lower_bound,
            n_steps: estimate.n_steps,
            restarts_used: estimate.restarts_used,
            converged: estimate.converged,
            path: PathJson::from(&estimate.path),
            trace: estimate.optimizer_trace.clone(),
            l1_distance,
            l1_lower_factor: bounds.lower_factor,
            l1_upper_factor: bounds.upper_factor,
            l1_samples: bounds.samples,
            sandwich_lower_ok: l1_distance
                <= bounds.lower_factor * estimate.upper_bound + 1e-9,
            sandwich_upper_ok: estimate.upper_bound
                <= bounds.upper_factor * l1_distance + 1e-9,
        }
    }
}

/// Decay report plus the chain's spectral gap for correlation studies.
#[derive(Debug, Serialize)]
pub struct DecayJson {
    pub fitted_rate: f64,
    pub r_squared: f64,
    pub loja_constant: f64,
    pub l2_distance_final: f64,
    pub l2_fitted_rate: Option<f64>,
    pub spectral_gap: f64,
    pub converged: bool,
}

impl DecayJson {
    pub fn new(report: &DecayReport, spectral_gap: f64, converged: bool) -> Self {
        Self {
            fitted_rate: report.fitted_rate,
            r_squared: report.r_squared,
            loja_constant: report.loja_constant,
            l2_distance_final: report.l2_distance_final,
            l2_fitted_rate: report.l2_fitted_rate,
            spectral_gap,
            converged,
        }
    }
}

/// Path CSV: one row per time node with columns `t, mu_1..mu_N, h`. The
/// source column holds the rate of the interval starting at that node; the
/// final row carries 0.
pub fn path_to_csv(path: &DiscretePath) -> String {
    let n = path.measures.first().map_or(0, |m| m.len());
    let mut out = String::from("t");
    for i in 1..=n {
        out.push_str(&format!(",mu_{i}"));
    }
    out.push_str(",h\n");
    for (k, t) in path.times.iter().enumerate() {
        out.push_str(&format!("{t}"));
        for v in path.measures[k].iter() {
            out.push_str(&format!(",{v}"));
        }
        let h = if k < path.sources.len() { path.sources[k] } else { 0.0 };
        out.push_str(&format!(",{h}\n"));
    }
    out
}

/// Trajectory CSV with columns
/// `t, rho_1..rho_N, entropy, grad_norm_sq, min_state, mass`.
pub fn trajectory_to_csv(trajectory: &FlowTrajectory) -> String {
    let n = trajectory.states.first().map_or(0, |s| s.len());
    let mut out = String::from("t");
    for i in 1..=n {
        out.push_str(&format!(",rho_{i}"));
    }
    out.push_str(",entropy,grad_norm_sq,min_state,mass\n");
    for k in 0..trajectory.len() {
        out.push_str(&format!("{}", trajectory.times[k]));
        for v in trajectory.states[k].iter() {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(
            ",{},{},{},{}\n",
            trajectory.entropy[k],
            trajectory.grad_norm_sq[k],
            trajectory.min_state[k],
            trajectory.mass[k]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(name: &str, contents: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("wab-io-tests");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        let mut file = fs::File::create(&path).unwrap();
        file.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn chain_round_trip() {
        let path = write_temp("chain.json", r#"{"kernel": [[0.9, 0.1], [0.2, 0.8]]}"#);
        let chain = load_chain(&path).unwrap();
        assert_eq!(chain.n(), 2);
        assert!((chain.stationary()[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ragged_kernel_is_rejected() {
        let path = write_temp("ragged.json", r#"{"kernel": [[0.5, 0.5], [1.0]]}"#);
        assert!(matches!(load_chain(&path), Err(LoadError::Domain(_))));
    }

    #[test]
    fn density_negative_entry_reports_index() {
        let path = write_temp("density.json", r#"{"values": [1.0, -0.5, 2.0]}"#);
        match load_density(&path) {
            Err(LoadError::Domain(DomainError::NegativeEntry { index: 1, .. })) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn params_normalization_flag() {
        let chain_path = write_temp("chain2.json", r#"{"kernel": [[0.5, 0.5], [0.5, 0.5]]}"#);
        let chain = load_chain(&chain_path).unwrap();

        let strict = write_temp("params1.json", r#"{"a": 1.0, "b": 2.0, "p": [2.0, 2.0]}"#);
        assert!(matches!(load_params(&strict, &chain), Err(LoadError::Domain(_))));

        let relaxed = write_temp(
            "params2.json",
            r#"{"a": 1.0, "b": 2.0, "p": [2.0, 2.0], "normalize_p": true}"#,
        );
        let params = load_params(&relaxed, &chain).unwrap();
        assert!((params.p()[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn csv_headers_are_stable() {
        let path = DiscretePath {
            times: vec![0.0, 1.0],
            measures: vec![DVector::from_vec(vec![1.0, 2.0]); 2],
            potentials: vec![DVector::zeros(2)],
            sources: vec![0.25],
        };
        let csv = path_to_csv(&path);
        assert!(csv.starts_with("t,mu_1,mu_2,h\n"));
        assert!(csv.lines().count() == 3);
    }
}
