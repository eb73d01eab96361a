//! Run configuration, read from and written to TOML.
//!
//! ```toml
//! [mesh]
//! dim = 2
//! extents = [10.0, 2.5]
//! counts = [100, 50]
//!
//! [model]
//! eps_p = 1e-3
//! tau = 1e-4
//!
//! [solver]
//! outer_tol = 1e-7
//! inner_tol = 1e-4
//!
//! [output]
//! dir = "out"
//! snapshot_times = [0.02, 0.06]
//!
//! [bench]
//! steps = 20
//! ```
//!
//! Every key is optional and falls back to its default; unknown keys and
//! values that break a constraint are errors carrying a line and column.

use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::MeshGrid;
use crate::physics::ModelParams;
use crate::simulation::SolverOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSpec {
    pub dim: usize,
    pub extents: Vec<f64>,
    /// Grid points per axis.
    pub counts: Vec<usize>,
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self {
            dim: 2,
            extents: vec![10.0, 2.5],
            counts: vec![100, 50],
        }
    }
}

impl MeshSpec {
    pub fn new(extents: &[f64], counts: &[usize]) -> Self {
        Self {
            dim: counts.len(),
            extents: extents.to_vec(),
            counts: counts.to_vec(),
        }
    }

    /// Same domain, different resolution. A 2D domain lifted to 3D gets a
    /// depth equal to its width.
    pub fn with_counts(&self, counts: &[usize]) -> Self {
        let mut extents = self.extents.clone();
        extents.truncate(counts.len());
        while extents.len() < counts.len() {
            extents.push(self.extents.first().copied().unwrap_or(1.0));
        }
        Self {
            dim: counts.len(),
            extents,
            counts: counts.to_vec(),
        }
    }

    pub fn build(&self) -> Result<MeshGrid> {
        MeshGrid::new(self.dim, &self.extents, &self.counts)
    }

    /// `"200x100"` style label.
    pub fn label(&self) -> String {
        self.counts
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join("x")
    }

    fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.dim != 2 && self.dim != 3 {
            return Err(("dim", format!("dim must be 2 or 3, got {}", self.dim)));
        }
        if self.extents.len() != self.dim || self.extents.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err((
                "extents",
                format!("extents must hold {} positive lengths", self.dim),
            ));
        }
        if self.counts.len() != self.dim || self.counts.iter().any(|&c| c < 2) {
            return Err((
                "counts",
                format!("counts must hold {} grid point counts of at least 2", self.dim),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinarizeRule {
    /// 1 where `phi_p > phi_nfa`.
    #[default]
    Compare,
    /// 1 where `phi_p > binarize_threshold`.
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub snapshot_times: Vec<f64>,
    pub write_vtk: bool,
    pub binarize_rule: BinarizeRule,
    pub binarize_threshold: f64,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            snapshot_times: Vec::new(),
            write_vtk: true,
            binarize_rule: BinarizeRule::Compare,
            binarize_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMode {
    #[default]
    None,
    Mesh,
    Params,
    Eoc,
    Eig,
}

/// Settings of the benchmark and study commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSpec {
    pub mode: BenchMode,
    /// Timed steps per configuration.
    pub steps: usize,
    /// Untimed steps before the timed ones.
    pub warmup_steps: usize,
    pub meshes: Vec<Vec<usize>>,
    /// Steps per parameter-sweep run. Longer than `steps` so that an
    /// unresolved interface has time to blow up.
    pub param_steps: usize,
    /// Mesh of the parameter sweep.
    pub param_mesh: Vec<usize>,
    pub eps_list: Vec<f64>,
    pub tau_list: Vec<f64>,
    pub eoc_taus: Vec<f64>,
    pub eoc_tau_ref: f64,
    pub eoc_final_time: f64,
    pub eig_meshes: Vec<Vec<usize>>,
    pub eig_taus: Vec<f64>,
    pub eig_eps: Vec<f64>,
    pub eig_cap: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            mode: BenchMode::None,
            steps: 20,
            warmup_steps: 0,
            meshes: vec![vec![100, 50], vec![200, 100], vec![400, 200]],
            param_steps: 100,
            param_mesh: vec![200, 100],
            eps_list: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0],
            tau_list: vec![1e-7, 1e-6, 1e-5, 1e-4],
            eoc_taus: vec![2e-4, 4e-4, 8e-4, 1.6e-3, 3.2e-3],
            eoc_tau_ref: 1e-5,
            eoc_final_time: 6.4e-3,
            eig_meshes: vec![vec![4, 2], vec![8, 4], vec![12, 6]],
            eig_taus: vec![1e-7, 1e-4, 1e-1, 1.0, 10.0],
            eig_eps: vec![1e-7, 1e-4, 1e-1, 1.0, 10.0],
            eig_cap: 2000,
        }
    }
}

impl BenchSpec {
    fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.steps == 0 {
            return Err(("steps", "steps must be positive".into()));
        }
        if self.param_steps == 0 {
            return Err(("param_steps", "param_steps must be positive".into()));
        }
        if !(self.param_mesh.len() == 2 || self.param_mesh.len() == 3) || self.param_mesh.iter().any(|&c| c < 2) {
            return Err(("param_mesh", "param_mesh must be 2 or 3 counts of at least 2".into()));
        }
        for (key, list) in [
            ("eps_list", &self.eps_list),
            ("tau_list", &self.tau_list),
            ("eoc_taus", &self.eoc_taus),
            ("eig_taus", &self.eig_taus),
            ("eig_eps", &self.eig_eps),
        ] {
            if list.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err((key, format!("{key} entries must be positive")));
            }
        }
        for (key, meshes) in [("meshes", &self.meshes), ("eig_meshes", &self.eig_meshes)] {
            if meshes.iter().any(|m| !(m.len() == 2 || m.len() == 3) || m.iter().any(|&c| c < 2)) {
                return Err((key, format!("{key} entries must be 2 or 3 counts of at least 2")));
            }
        }
        if !(self.eoc_tau_ref > 0.0) {
            return Err(("eoc_tau_ref", "eoc_tau_ref must be positive".into()));
        }
        if !(self.eoc_final_time > 0.0) {
            return Err(("eoc_final_time", "eoc_final_time must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshSpec,
    pub model: ModelParams,
    pub solver: SolverOptions,
    pub output: OutputSpec,
    pub bench: BenchSpec,
}

impl RunConfig {
    /// Checks every section; the error names `section` and `key`.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, &'static str, String)> {
        self.mesh.validate().map_err(|(k, m)| ("mesh", k, m))?;
        self.model.validate().map_err(|(k, m)| ("model", k, m))?;
        self.solver.validate().map_err(|(k, m)| ("solver", k, m))?;
        if self.output.snapshot_times.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
            return Err(("output", "snapshot_times", "snapshot times must be non-negative".into()));
        }
        if !self.output.binarize_threshold.is_finite() {
            return Err(("output", "binarize_threshold", "binarize_threshold must be finite".into()));
        }
        self.bench.validate().map_err(|(k, m)| ("bench", k, m))?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(offset, |p| offset - p - 1) + 1;
    (line, col)
}

/// Position of `key` inside `[section]`, or of the section header, or 1:1.
fn locate_key(text: &str, section: &str, key: &str) -> (usize, usize) {
    let mut current = String::new();
    let mut header = None;
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix('[') {
            current = rest.split(']').next().unwrap_or("").trim().to_string();
            if current == section && header.is_none() {
                header = Some((i + 1, line.len() - trimmed.len() + 1));
            }
            continue;
        }
        if current != section {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return (i + 1, line.len() - trimmed.len() + 1);
            }
        }
    }
    header.unwrap_or((1, 1))
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| {
        let span: Range<usize> = e.span().unwrap_or(0..0);
        let (line, column) = line_col(text, span.start);
        Error::Config {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    config.validate().map_err(|(section, key, message)| {
        let (line, column) = locate_key(text, section, key);
        Error::Config {
            line,
            column,
            message: format!("[{section}] {message}"),
        }
    })?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// TOML text that [`parse_config`] reads back into an equal value.
pub fn emit_config(config: &RunConfig) -> String {
    config.to_toml()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::Potential;
    use crate::simulation::InitialGuess;

    #[test]
    fn empty_document_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.model.eps_p, 1e-3);
        assert_eq!(c.model.k_evap, 5e-3);
        assert_eq!(c.model.g_p, 0.01);
        assert_eq!(c.model.h_p, 0.0);
        assert_eq!((c.model.chi_p_nfa, c.model.chi_p_s, c.model.chi_nfa_s), (1.0, 0.3, 0.3));
        assert_eq!((c.model.n_p, c.model.n_nfa, c.model.n_s), (20.0, 20.0, 1.0));
        assert_eq!((c.model.init_mean, c.model.init_ampl), (0.35, 0.01));
        assert_eq!(c.solver.outer_tol, 1e-7);
        assert_eq!(c.solver.inner_tol, 1e-4);
    }

    #[test]
    fn constraint_error_has_position() {
        let err = parse_config("[model]\n\n  eps_p = -1\n").unwrap_err();
        match err {
            Error::Config { line, column, message } => {
                assert_eq!((line, column), (3, 3));
                assert!(message.contains("eps_p"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = parse_config("[model]\neps_q = 1.0\n").unwrap_err();
        match err {
            Error::Config { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("eps_q"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_config("[nonsense]\n").is_err());
    }

    #[test]
    fn type_mismatch_is_rejected() {
        let err = parse_config("[mesh]\ncounts = \"many\"\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }), "{err:?}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.mesh = MeshSpec::new(&[10.0, 2.5, 10.0], &[30, 15, 30]);
        c.model.potential = Potential::Logarithmic;
        c.model.tau = 2e-4;
        c.model.patterning = true;
        c.model.seed = 99;
        c.solver.initial_guess = InitialGuess::Extrapolate;
        c.output.snapshot_times = vec![0.02, 0.06, 0.4, 2.0, 10.0];
        c.bench.mode = BenchMode::Eoc;
        c.bench.eoc_taus = vec![0.1 + 0.2, 1.0 / 3.0];
        let text = emit_config(&c);
        let back = parse_config(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(emit_config(&back), text);
    }

    #[test]
    fn uppercase_polymerisation_keys() {
        let c = parse_config("[model]\nN_p = 30\nN_s = 2\n").unwrap();
        assert_eq!((c.model.n_p, c.model.n_s), (30.0, 2.0));
    }

    #[test]
    fn mesh_spec_checks() {
        assert!(parse_config("[mesh]\ndim = 3\n").is_err());
        assert!(parse_config("[mesh]\ncounts = [1, 5]\n").is_err());
        let c = parse_config("[mesh]\ncounts = [20, 10]\n").unwrap();
        assert_eq!(c.mesh.build().unwrap().num_nodes(), 200);
        assert_eq!(c.mesh.label(), "20x10");
    }
}
