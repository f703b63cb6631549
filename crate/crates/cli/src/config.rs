//! Run configuration: strict JSON with every default spelled out.

// Negated comparisons such as `!(x > 0.0)` are used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use vqt_core::circuit::RotationScheme;
use vqt_core::statevector::MAX_DENSE_QUBITS;
use vqt_core::tomography::{AdamConfig, EstimatorConfig, EstimatorMode, Init, LbfgsConfig, OptimizerConfig, TargetKind, TrainConfig};
use vqt_core::Error;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every sweep cell derives its own seed from it.
    pub seed: u64,
    pub spinchain: SpinchainSection,
    pub target: TargetSection,
    pub ansatz: AnsatzSection,
    pub estimator: EstimatorSection,
    pub training: TrainingSection,
    pub reconstruction: ReconstructionSection,
    pub gradcheck: GradcheckSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpinchainSection {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "Delta")]
    pub delta: Vec<f64>,
    pub h: f64,
    pub lanczos_tol: f64,
    pub lanczos_max_restarts: usize,
}

impl Default for SpinchainSection {
    fn default() -> Self {
        Self { l: 6, j: 1.0, delta: vec![0.5, 1.0, 1.5], h: 1.0, lanczos_tol: 1e-10, lanczos_max_restarts: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSource {
    /// Ground state of the configured chain, one target per Delta.
    GroundState,
    /// A statevector binary file.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    pub source: TargetSource,
    pub path: Option<PathBuf>,
    /// Mixed mode: leading qubits kept when tracing the pure state down to a density matrix
    /// (null keeps half, rounded down).
    pub keep: Option<usize>,
}

impl Default for TargetSection {
    fn default() -> Self {
        Self { source: TargetSource::GroundState, path: None, keep: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnsatzSection {
    pub depth: Vec<usize>,
    pub rotation_scheme: RotationScheme,
    pub mode: TargetKind,
}

impl Default for AnsatzSection {
    fn default() -> Self {
        Self { depth: vec![5], rotation_scheme: RotationScheme::RyOnly, mode: TargetKind::Pure }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub mode: EstimatorMode,
    pub shots: u64,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self { mode: EstimatorMode::Exact, shots: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Lbfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Uniform,
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSection {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self { lr: a.lr, beta1: a.beta1, beta2: a.beta2, eps: a.eps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsSection {
    pub memory: usize,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsSection {
    fn default() -> Self {
        let l = LbfgsConfig::default();
        Self { memory: l.memory, c1: l.c1, c2: l.c2, max_line_search: l.max_line_search }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub optimizer: OptimizerKind,
    pub iterations: usize,
    pub seeds: Vec<u64>,
    pub loss_tolerance: f64,
    pub grad_tolerance: f64,
    pub init: InitKind,
    pub adam: AdamSection,
    pub lbfgs: LbfgsSection,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Lbfgs,
            iterations: 500,
            seeds: vec![0, 1, 2],
            loss_tolerance: 1e-10,
            grad_tolerance: 1e-10,
            init: InitKind::Uniform,
            adam: AdamSection::default(),
            lbfgs: LbfgsSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionSection {
    /// null leaves the bond dimension unbounded.
    pub chi_max: Option<usize>,
    pub svd_tol: f64,
    /// Run summary to reconstruct from; `--summary` overrides it.
    pub summary: Option<PathBuf>,
    /// Largest width for which a dense state or density matrix is also written.
    pub dense_max_qubits: usize,
}

impl Default for ReconstructionSection {
    fn default() -> Self {
        Self { chi_max: None, svd_tol: 1e-12, summary: None, dense_max_qubits: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    pub trials: usize,
    pub max_qubits: usize,
    pub max_depth: usize,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self { trials: 20, max_qubits: 6, max_depth: 4, step: 1e-5, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), formats: vec![Format::Csv, Format::Json, Format::Binary] }
    }
}

impl OutputSection {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

fn invalid(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.into(), message: message.into() }
}

/// Overlays `patch` onto `base`, recursing into objects; other values replace.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

/// Strict parse; unknown keys and type errors report the offending field path.
pub fn parse(value: Value) -> Result<RunConfig, Error> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        invalid(if path.is_empty() { "." } else { &path }, e.into_inner().to_string())
    })
}

pub fn read_value(path: &Path) -> Result<Value, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(&path.display().to_string(), e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| invalid(&path.display().to_string(), e.to_string()))
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let s = &self.spinchain;
        if s.l == 0 || s.l > MAX_DENSE_QUBITS {
            return Err(Error::Capacity(format!("spinchain.L = {} outside 1..={}", s.l, MAX_DENSE_QUBITS)));
        }
        if s.delta.is_empty() {
            return Err(invalid("spinchain.Delta", "at least one value required"));
        }
        if !s.j.is_finite() || !s.h.is_finite() || s.delta.iter().any(|d| !d.is_finite()) {
            return Err(invalid("spinchain", "couplings must be finite"));
        }
        if !(s.lanczos_tol > 0.0) {
            return Err(invalid("spinchain.lanczos_tol", "must be positive"));
        }
        if s.lanczos_max_restarts == 0 {
            return Err(invalid("spinchain.lanczos_max_restarts", "must be at least 1"));
        }
        if self.target.source == TargetSource::File && self.target.path.is_none() {
            return Err(invalid("target.path", "required when target.source is \"file\""));
        }
        if let Some(k) = self.target.keep {
            if k == 0 {
                return Err(invalid("target.keep", "must be at least 1"));
            }
        }
        if self.ansatz.depth.is_empty() {
            return Err(invalid("ansatz.depth", "at least one depth required"));
        }
        let t = &self.training;
        if t.seeds.is_empty() {
            return Err(invalid("training.seeds", "at least one seed required"));
        }
        let r = &self.reconstruction;
        if r.chi_max == Some(0) {
            return Err(invalid("reconstruction.chi_max", "must be at least 1 or null"));
        }
        if !(r.svd_tol >= 0.0) {
            return Err(invalid("reconstruction.svd_tol", "must be non-negative"));
        }
        let g = &self.gradcheck;
        if g.trials == 0 {
            return Err(invalid("gradcheck.trials", "must be at least 1"));
        }
        if g.max_qubits == 0 || g.max_qubits > 12 {
            return Err(invalid("gradcheck.max_qubits", "must lie in 1..=12"));
        }
        if !(g.step > 0.0) || !(g.tolerance > 0.0) {
            return Err(invalid("gradcheck.step", "step and tolerance must be positive"));
        }
        // Shared checks for the optimizer and estimator live in the core crate.
        self.train_config(0).validate(&self.estimator_config(0))
    }

    pub fn estimator_config(&self, master_seed: u64) -> EstimatorConfig {
        EstimatorConfig { mode: self.estimator.mode, shots: self.estimator.shots, master_seed }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.training;
        let optimizer = match t.optimizer {
            OptimizerKind::Adam => {
                let a = &t.adam;
                OptimizerConfig::Adam(AdamConfig { lr: a.lr, beta1: a.beta1, beta2: a.beta2, eps: a.eps })
            }
            OptimizerKind::Lbfgs => {
                let l = &t.lbfgs;
                OptimizerConfig::Lbfgs(LbfgsConfig { memory: l.memory, c1: l.c1, c2: l.c2, max_line_search: l.max_line_search })
            }
        };
        let init = match t.init {
            InitKind::Uniform => Init::Uniform,
            InitKind::Zeros => Init::Zeros,
        };
        TrainConfig {
            optimizer,
            max_iterations: t.iterations,
            loss_tolerance: t.loss_tolerance,
            grad_tolerance: t.grad_tolerance,
            init,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = parse(json!({})).unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn defaults_round_trip() {
        let v = serde_json::to_value(RunConfig::default()).unwrap();
        assert_eq!(v["spinchain"]["L"], 6);
        assert_eq!(v["reconstruction"]["chi_max"], Value::Null);
        assert_eq!(parse(v).unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_report_their_path() {
        match parse(json!({"training": {"iteratons": 5}})) {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "training.iteratons");
                assert!(message.contains("unknown field"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse(json!({"bogus": 1})), Err(Error::Config { .. })));
    }

    #[test]
    fn type_errors_report_their_path() {
        match parse(json!({"spinchain": {"Delta": [0.5, "x"]}})) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "spinchain.Delta[1]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn swap_test_with_lbfgs_is_rejected() {
        let cfg = parse(json!({"estimator": {"mode": "swap_test"}, "training": {"optimizer": "lbfgs"}})).unwrap();
        match cfg.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "training.optimizer"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_checks() {
        let bad = [
            json!({"training": {"iterations": 0}}),
            json!({"training": {"optimizer": "adam", "adam": {"lr": -1.0}}}),
            json!({"spinchain": {"Delta": []}}),
            json!({"ansatz": {"depth": []}}),
            json!({"target": {"source": "file"}}),
            json!({"estimator": {"mode": "swap_test", "shots": 0}, "training": {"optimizer": "adam"}}),
        ];
        for v in bad {
            assert!(matches!(parse(v.clone()).unwrap().validate(), Err(Error::Config { .. })), "{v}");
        }
        let too_big = parse(json!({"spinchain": {"L": 40}})).unwrap();
        assert!(matches!(too_big.validate(), Err(Error::Capacity(_))));
    }

    #[test]
    fn merge_overlays_nested_keys() {
        let mut base = json!({"a": {"b": 1, "c": 2}, "d": [1, 2]});
        merge(&mut base, json!({"a": {"c": 5}, "d": [3]}));
        assert_eq!(base, json!({"a": {"b": 1, "c": 5}, "d": [3]}));
    }
}
