//! Run configuration: JSON file keys, defaults and validation.

use std::path::{Path, PathBuf};

use rbto_core::random_field::CorrLengthMode;
use rbto_core::verification::SampleSource;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    /// Half MBB beam, symmetric about its left edge.
    Mbb,
    /// L-shaped beam with the upper-right quarter removed.
    Lbeam,
    /// MBB-type half beam on a user-sized grid.
    Custom,
}

/// Every key accepted in a config file. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub nx: usize,
    pub ny: usize,
    pub u_max: f64,
    pub beta: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub l1: f64,
    pub l2: f64,
    pub kl_terms: usize,
    pub corr_length_mode: CorrLengthMode,
    pub kl_rescale_pointwise_variance: bool,
    pub simp_p: f64,
    pub rmin: f64,
    pub dto_tol: f64,
    pub dto_max_iter: usize,
    pub sora_tol: f64,
    pub sora_max: usize,
    pub warm_start: bool,
    pub pce_p: usize,
    pub colloc_count: usize,
    pub mcs_n: usize,
    pub mcs_source: SampleSource,
    pub seed: u64,
    /// Point load magnitude of the preset.
    pub load: f64,
    /// Upper bounds swept by `sweep` (defaults to `[b]`).
    pub sweep_b: Vec<f64>,
    /// Design to verify instead of optimizing one.
    pub design_csv: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults for a problem kind before any user value is applied.
    pub fn defaults(problem: ProblemKind) -> Self {
        let (nx, ny, u_max) = match problem {
            ProblemKind::Mbb | ProblemKind::Custom => (60, 20, 170.0),
            ProblemKind::Lbeam => (60, 60, 100.0),
        };
        Self {
            problem,
            nx,
            ny,
            u_max,
            beta: vec![2.0],
            a: 1.0,
            b: 1.1,
            l1: 0.6,
            l2: 0.6,
            kl_terms: 2,
            corr_length_mode: CorrLengthMode::Absolute,
            kl_rescale_pointwise_variance: false,
            simp_p: 3.0,
            rmin: 1.5,
            dto_tol: 1e-3,
            dto_max_iter: 400,
            sora_tol: 1e-3,
            sora_max: 20,
            warm_start: true,
            pce_p: 3,
            colloc_count: 17,
            mcs_n: 50_000,
            mcs_source: SampleSource::FullFea,
            seed: 0,
            load: 1.0,
            sweep_b: Vec::new(),
            design_csv: None,
            output: None,
        }
    }

    /// Resolves a config from a JSON object of user values: defaults of the
    /// chosen problem first, user keys on top, then validation.
    pub fn from_json(user: &Map<String, Value>) -> Result<Self> {
        let problem = match user.get("problem") {
            None => ProblemKind::Mbb,
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| CliError::Config(format!("key `problem`: {e}")))?,
        };
        let mut merged = match serde_json::to_value(Self::defaults(problem)) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("config serializes to an object"),
        };
        for (k, v) in user {
            if !merged.contains_key(k) {
                return Err(CliError::Config(format!("unknown key `{k}`")));
            }
            if problem != ProblemKind::Custom && matches!(k.as_str(), "nx" | "ny") {
                log::warn!("`{k}` is fixed by the `{problem:?}` preset and ignored");
                continue;
            }
            merged.insert(k.clone(), v.clone());
        }
        let mut cfg: Self = serde_json::from_value(Value::Object(merged))
            .map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.sweep_b.is_empty() {
            cfg.sweep_b = vec![cfg.b];
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&read_object(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("u_max", self.u_max),
            ("a", self.a),
            ("l1", self.l1),
            ("l2", self.l2),
            ("rmin", self.rmin),
            ("dto_tol", self.dto_tol),
            ("sora_tol", self.sora_tol),
            ("load", self.load),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CliError::Config(format!("`{key}` must be a positive number, got {v}")));
            }
        }
        let counts = [
            ("nx", self.nx),
            ("ny", self.ny),
            ("kl_terms", self.kl_terms),
            ("dto_max_iter", self.dto_max_iter),
            ("sora_max", self.sora_max),
            ("pce_p", self.pce_p),
            ("colloc_count", self.colloc_count),
            ("mcs_n", self.mcs_n),
        ];
        for (key, v) in counts {
            if v == 0 {
                return Err(CliError::Config(format!("`{key}` must be ≥ 1")));
            }
        }
        if self.beta.is_empty() {
            return Err(CliError::Config("`beta` needs at least one value".into()));
        }
        if let Some(b) = self.beta.iter().find(|b| !(**b >= 0.0) || !b.is_finite()) {
            return Err(CliError::Config(format!("`beta` values must be ≥ 0, got {b}")));
        }
        for &b in std::iter::once(&self.b).chain(&self.sweep_b) {
            if !(b > self.a) || !b.is_finite() {
                return Err(CliError::Config(format!("upper modulus bound must exceed a = {}, got {b}", self.a)));
            }
        }
        if !(self.simp_p >= 1.0) {
            return Err(CliError::Config(format!("`simp_p` must be ≥ 1, got {}", self.simp_p)));
        }
        Ok(())
    }

    /// Config hash over everything except the output location.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut c = self.clone();
        c.output = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Parses a JSON file that must hold an object.
pub fn read_object(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(CliError::Malformed { path: path.display().to_string(), message: "expected a JSON object".into() }),
        Err(e) => Err(CliError::Malformed { path: path.display().to_string(), message: e.to_string() }),
    }
}
