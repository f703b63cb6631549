//! Fidelity estimation, parameter-shift gradients and the training loop.
//!
//! The objective is `f(θ) = 1 - sqrt(F(θ))`. For a pure target `F = |<ψ|ψo(θ)>|²`;
//! for a mixed target `ρ` on `n` qubits the ansatz spans `2n` qubits and
//! `F = tr(ρ ρS)` with `ρS` the reduced state of the first `n`.

pub mod optim;

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_ansatz, parameter_count, rotation_matrix, shift_parameter, AnsatzSpec, GateKind, RotationAxis, ShiftSign};
use crate::error::{bail, Error, Result};
use crate::mps::{partial_trace_to_mpo, run_circuit_mps, MpoOperator, MpsState};
use crate::statevector::{
    estimate_from_p1, exact_mixed_fidelity, overlap, run_circuit, sandwich_single_qubit, stream_seed, swap_test_p1, swap_test_p1_partial,
    DensityMatrix, ShotPlan, StateVector, MAX_DENSE_QUBITS,
};
use crate::tensor::ComplexTensor;

pub use optim::{adam_step, lbfgs_minimize, AdamConfig, AdamState, LbfgsConfig, OptimResult, OptimStep, StopRule, Termination};

/// Below this fidelity the chain-rule factor `-1/(2 sqrt F)` is regularized.
pub const CHAIN_RULE_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Pure,
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl Target {
    /// Qubits of the target state itself.
    pub fn n_qubits(&self) -> usize {
        match self {
            Target::Pure(s) => s.n_qubits(),
            Target::Mixed(r) => r.n_qubits(),
        }
    }

    pub fn kind(&self) -> TargetKind {
        match self {
            Target::Pure(_) => TargetKind::Pure,
            Target::Mixed(_) => TargetKind::Mixed,
        }
    }

    /// Width the ansatz must have to learn this target.
    pub fn circuit_width(&self) -> usize {
        match self {
            Target::Pure(s) => s.n_qubits(),
            Target::Mixed(r) => 2 * r.n_qubits(),
        }
    }

    /// Largest eigenvalue of a mixed target, the ceiling for `tr(ρ ρS)` over pure `ρS`.
    pub fn lambda_max(&self) -> Result<Option<f64>> {
        match self {
            Target::Pure(_) => Ok(None),
            Target::Mixed(r) => r.max_eigenvalue().map(Some),
        }
    }

    fn check_spec(&self, spec: &AnsatzSpec) -> Result<()> {
        if spec.n_qubits != self.circuit_width() {
            bail!(
                Dimension,
                "{:?} target on {} qubits needs a {}-qubit ansatz, got {}",
                self.kind(),
                self.n_qubits(),
                self.circuit_width(),
                spec.n_qubits
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    Exact,
    SwapTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub mode: EstimatorMode,
    /// Shots per fidelity evaluation; ignored in exact mode.
    pub shots: u64,
    pub master_seed: u64,
}

impl EstimatorConfig {
    pub fn exact() -> Self {
        Self { mode: EstimatorMode::Exact, shots: 0, master_seed: 0 }
    }

    pub fn swap_test(shots: u64, master_seed: u64) -> Self {
        Self { mode: EstimatorMode::SwapTest, shots, master_seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == EstimatorMode::SwapTest && self.shots == 0 {
            return Err(Error::Config { path: "estimator.shots".into(), message: "must be at least 1 in swap_test mode".into() });
        }
        Ok(())
    }

    fn plan(&self, tag: u64) -> Result<ShotPlan> {
        match self.mode {
            EstimatorMode::Exact => Ok(ShotPlan::exact()),
            EstimatorMode::SwapTest => ShotPlan::sampled(self.shots, stream_seed(self.master_seed, tag)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Adam(AdamConfig),
    Lbfgs(LbfgsConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Independent uniform draws on (−π, π).
    Uniform,
    Zeros,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub max_iterations: usize,
    pub loss_tolerance: f64,
    /// L-BFGS stops once the gradient ∞-norm falls below this.
    pub grad_tolerance: f64,
    pub init: Init,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::Lbfgs(LbfgsConfig::default()),
            max_iterations: 500,
            loss_tolerance: 1e-10,
            grad_tolerance: 1e-10,
            init: Init::Uniform,
            seed: 0,
        }
    }
}

fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.into(), message: message.into() }
}

impl TrainConfig {
    pub fn validate(&self, est: &EstimatorConfig) -> Result<()> {
        est.validate()?;
        if self.max_iterations == 0 {
            return Err(config_err("training.max_iterations", "must be at least 1"));
        }
        if !(self.loss_tolerance >= 0.0) {
            return Err(config_err("training.loss_tolerance", "must be non-negative"));
        }
        if !(self.grad_tolerance >= 0.0) {
            return Err(config_err("training.grad_tolerance", "must be non-negative"));
        }
        match self.optimizer {
            OptimizerConfig::Adam(a) => {
                if !(a.lr > 0.0) || !a.lr.is_finite() {
                    return Err(config_err("training.optimizer.lr", "learning rate must be positive"));
                }
                if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
                    return Err(config_err("training.optimizer.beta1", "moment decay rates must lie in [0, 1)"));
                }
                if !(a.eps > 0.0) {
                    return Err(config_err("training.optimizer.eps", "must be positive"));
                }
            }
            OptimizerConfig::Lbfgs(l) => {
                if est.mode == EstimatorMode::SwapTest {
                    return Err(config_err("training.optimizer", "swap_test estimates are noisy; use adam"));
                }
                if l.memory == 0 {
                    return Err(config_err("training.optimizer.memory", "must be at least 1"));
                }
                if !(0.0 < l.c1 && l.c1 < l.c2 && l.c2 < 1.0) {
                    return Err(config_err("training.optimizer.c1", "need 0 < c1 < c2 < 1"));
                }
                if l.max_line_search == 0 {
                    return Err(config_err("training.optimizer.max_line_search", "must be at least 1"));
                }
            }
        }
        if let Init::Explicit(v) = &self.init {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(config_err("training.init", "explicit parameters must be finite"));
            }
        }
        Ok(())
    }

    pub fn initial_theta(&self, p: usize) -> Result<Vec<f64>> {
        match &self.init {
            Init::Uniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                Ok((0..p).map(|_| rng.random_range(-PI..PI)).collect())
            }
            Init::Zeros => Ok(vec![0.0; p]),
            Init::Explicit(v) => {
                if v.len() != p {
                    bail!(Parameter, "explicit initial vector has {} entries, ansatz needs {}", v.len(), p);
                }
                Ok(v.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub iteration: usize,
    pub loss: f64,
    pub fidelity: f64,
    pub grad_norm: f64,
    /// Cumulative fidelity evaluations issued so far.
    pub evals: u64,
    /// Loss and fidelity recomputed without shot noise (equal to the above in exact mode).
    pub exact_loss: f64,
    pub exact_fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub rows: Vec<IterationRow>,
    pub final_theta: Vec<f64>,
    pub termination: Termination,
    /// Ceiling `λ_max(ρ)` for mixed targets.
    pub lambda_max: Option<f64>,
}

impl TrainRecord {
    pub fn final_row(&self) -> Option<&IterationRow> {
        self.rows.last()
    }

    pub fn final_exact_fidelity(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.exact_fidelity)
    }

    /// First iteration whose noise-free loss is at or below `threshold`.
    pub fn iterations_to_loss(&self, threshold: f64) -> Option<usize> {
        self.rows.iter().find(|r| r.exact_loss <= threshold).map(|r| r.iteration)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,loss,fidelity,grad_norm,evals,exact_loss,exact_fidelity\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{},{:e},{:e}",
                r.iteration, r.loss, r.fidelity, r.grad_norm, r.evals, r.exact_loss, r.exact_fidelity
            )
            .expect("writing to a String");
        }
        out
    }
}

/// `1 - sqrt(F)`; identical for both target kinds.
pub fn loss(fidelity: f64, kind: TargetKind) -> Result<f64> {
    let _ = kind;
    if !(0.0..=1.0).contains(&fidelity) {
        bail!(Domain, "fidelity {} outside [0, 1]", fidelity);
    }
    Ok(1.0 - fidelity.sqrt())
}

/// Tag of the central evaluation at `iteration`.
pub fn central_tag(iteration: usize) -> u64 {
    (iteration as u64) << 32
}

/// Tag of the shifted evaluation of parameter `i` at `iteration`.
pub fn shift_tag(iteration: usize, i: usize, sign: ShiftSign) -> u64 {
    let slot = 1 + 2 * i as u64 + matches!(sign, ShiftSign::Minus) as u64;
    central_tag(iteration) | slot
}

/// Route used for exact pure-target gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientRoute {
    /// One reverse sweep yields every shifted overlap; falls back to `Shifted` elsewhere.
    Adjoint,
    /// 2P independent circuit simulations.
    Shifted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub fidelity: f64,
    pub loss: f64,
    /// Gradient of the loss.
    pub grad: Vec<f64>,
    pub fidelity_grad: Vec<f64>,
}

/// Fidelity oracle bound to one target, ansatz and estimator, with an evaluation counter.
pub struct Objective<'a> {
    spec: AnsatzSpec,
    target: &'a Target,
    est: EstimatorConfig,
    route: GradientRoute,
    purification: Option<StateVector>,
    evals: AtomicU64,
}

impl<'a> Objective<'a> {
    pub fn new(spec: &AnsatzSpec, target: &'a Target, est: &EstimatorConfig) -> Result<Self> {
        target.check_spec(spec)?;
        est.validate()?;
        let purification = match (target, est.mode) {
            (Target::Mixed(rho), EstimatorMode::SwapTest) => {
                if 2 * spec.n_qubits + 1 > MAX_DENSE_QUBITS {
                    bail!(
                        Capacity,
                        "mixed SWAP test on a {}-qubit output needs {} qubits (limit {})",
                        spec.n_qubits,
                        2 * spec.n_qubits + 1,
                        MAX_DENSE_QUBITS
                    );
                }
                Some(purify(rho)?)
            }
            _ => None,
        };
        Ok(Self { spec: *spec, target, est: *est, route: GradientRoute::Adjoint, purification, evals: AtomicU64::new(0) })
    }

    pub fn with_route(mut self, route: GradientRoute) -> Self {
        self.route = route;
        self
    }

    pub fn evaluations(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    pub fn parameter_count(&self) -> usize {
        parameter_count(&self.spec)
    }

    /// One (possibly noisy) fidelity evaluation; counted.
    pub fn fidelity(&self, theta: &[f64], tag: u64) -> Result<f64> {
        self.evals.fetch_add(1, Ordering::Relaxed);
        let psi_o = run_circuit(&build_ansatz(&self.spec, theta)?)?;
        self.fidelity_of_output(&psi_o, tag)
    }

    /// Noise-free fidelity; not counted.
    pub fn exact_fidelity(&self, theta: &[f64]) -> Result<f64> {
        let psi_o = run_circuit(&build_ansatz(&self.spec, theta)?)?;
        exact_fidelity_of_output(self.target, &psi_o)
    }

    fn fidelity_of_output(&self, psi_o: &StateVector, tag: u64) -> Result<f64> {
        match self.est.mode {
            EstimatorMode::Exact => exact_fidelity_of_output(self.target, psi_o),
            EstimatorMode::SwapTest => {
                let plan = self.est.plan(tag)?;
                let p1 = match (self.target, &self.purification) {
                    (Target::Pure(t), _) => swap_test_p1(t, psi_o)?,
                    (Target::Mixed(rho), Some(phi)) => swap_test_p1_partial(phi, psi_o, rho.n_qubits())?,
                    (Target::Mixed(_), None) => unreachable!("purification prepared in constructor"),
                };
                let e = estimate_from_p1(p1, &plan);
                Ok((e * e).clamp(0.0, 1.0))
            }
        }
    }

    /// Central fidelity plus parameter-shift gradient at `iteration`: exactly 2P + 1 evaluations.
    pub fn evaluate(&self, theta: &[f64], iteration: usize) -> Result<Evaluation> {
        let p = self.parameter_count();
        if theta.len() != p {
            bail!(Parameter, "ansatz expects {} parameters, got {}", p, theta.len());
        }
        let (fidelity, pairs) = match (self.route, self.est.mode, self.target) {
            (GradientRoute::Adjoint, EstimatorMode::Exact, Target::Pure(t)) => {
                let out = adjoint_shifted_fidelities(&self.spec, t, theta)?;
                self.evals.fetch_add(2 * p as u64 + 1, Ordering::Relaxed);
                out
            }
            _ => {
                let central = self.fidelity(theta, central_tag(iteration))?;
                let shifted: Vec<(f64, f64)> = (0..p)
                    .into_par_iter()
                    .map(|i| -> Result<(f64, f64)> {
                        let plus = self.fidelity(&shift_parameter(theta, i, ShiftSign::Plus)?, shift_tag(iteration, i, ShiftSign::Plus))?;
                        let minus =
                            self.fidelity(&shift_parameter(theta, i, ShiftSign::Minus)?, shift_tag(iteration, i, ShiftSign::Minus))?;
                        Ok((plus, minus))
                    })
                    .collect::<Result<_>>()?;
                (central, shifted)
            }
        };
        let fidelity_grad: Vec<f64> = pairs.iter().map(|(plus, minus)| 0.5 * plus - 0.5 * minus).collect();
        let guarded = if fidelity < CHAIN_RULE_GUARD { fidelity + CHAIN_RULE_GUARD } else { fidelity };
        // A sampled estimate cannot resolve F below one shot; a zero reading would otherwise
        // produce a ~1e6 gradient that pins ADAM's second moment for hundreds of steps.
        let guarded = match self.est.mode {
            EstimatorMode::SwapTest => guarded.max(1.0 / self.est.shots as f64),
            EstimatorMode::Exact => guarded,
        };
        let factor = -1.0 / (2.0 * guarded.sqrt());
        let grad = fidelity_grad.iter().map(|g| factor * g).collect();
        let loss = if fidelity.is_finite() { loss(fidelity, self.target.kind())? } else { f64::NAN };
        Ok(Evaluation { fidelity, loss, grad, fidelity_grad })
    }
}

fn exact_fidelity_of_output(target: &Target, psi_o: &StateVector) -> Result<f64> {
    match target {
        Target::Pure(t) => Ok(overlap(t, psi_o)?.norm_sqr().clamp(0.0, 1.0)),
        Target::Mixed(rho) => exact_mixed_fidelity(psi_o, rho),
    }
}

/// A `2n`-qubit pure state whose first `n` qubits carry `rho`: `|Φ> = Σ A_ik |i>|k>` with `A A† = ρ`.
fn purify(rho: &DensityMatrix) -> Result<StateVector> {
    let d = rho.dim();
    let m = ComplexTensor::new(vec![d, d], rho.entries().to_vec())?;
    let svd = m.svd()?;
    let u = svd.u.data();
    let mut amps = vec![Complex64::new(0.0, 0.0); d * d];
    for i in 0..d {
        for k in 0..svd.s.len() {
            amps[i * d + k] = u[i * svd.s.len() + k] * svd.s[k].max(0.0).sqrt();
        }
    }
    StateVector::normalized(amps)
}

/// Central fidelity and every `(F(θi+π/2), F(θi−π/2))` for a pure target in one reverse sweep.
fn adjoint_shifted_fidelities(spec: &AnsatzSpec, target: &StateVector, theta: &[f64]) -> Result<(f64, Vec<(f64, f64)>)> {
    let circuit = build_ansatz(spec, theta)?;
    let gates = circuit.gates();
    let mut param_of_gate = vec![usize::MAX; gates.len()];
    for (i, &g) in circuit.param_slots().iter().enumerate() {
        param_of_gate[g] = i;
    }
    let mut phi = run_circuit(&circuit)?;
    let central = overlap(target, &phi)?.norm_sqr().clamp(0.0, 1.0);
    let mut lambda = target.clone();
    let mut pairs = vec![(0.0, 0.0); theta.len()];
    for (k, gate) in gates.iter().enumerate().rev() {
        phi.apply_gate_mut(&gate.inverse())?;
        let i = param_of_gate[k];
        if i != usize::MAX {
            let q = gate.qubits[0];
            let (axis, angle) = match gate.kind {
                GateKind::Rx(a) => (RotationAxis::X, a),
                GateKind::Ry(a) => (RotationAxis::Y, a),
                _ => unreachable!("ansatz parameters live on rotations"),
            };
            let shifted = |sign: ShiftSign| {
                let m = rotation_matrix(axis, angle + sign.offset());
                sandwich_single_qubit(&lambda, &phi, q, &m).norm_sqr().clamp(0.0, 1.0)
            };
            pairs[i] = (shifted(ShiftSign::Plus), shifted(ShiftSign::Minus));
        }
        lambda.apply_gate_mut(&gate.inverse())?;
    }
    Ok((central, pairs))
}

/// Single fidelity evaluation, deterministic in `(est.master_seed, eval_tag)`.
pub fn fidelity(theta: &[f64], spec: &AnsatzSpec, target: &Target, est: &EstimatorConfig, eval_tag: u64) -> Result<f64> {
    Objective::new(spec, target, est)?.fidelity(theta, eval_tag)
}

/// Gradient of the loss by the parameter-shift rule through independent shifted circuits.
pub fn gradient_parameter_shift(
    theta: &[f64],
    spec: &AnsatzSpec,
    target: &Target,
    est: &EstimatorConfig,
    iteration: usize,
) -> Result<Vec<f64>> {
    let obj = Objective::new(spec, target, est)?.with_route(GradientRoute::Shifted);
    Ok(obj.evaluate(theta, iteration)?.grad)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Runs the configured optimizer from the configured starting point.
pub fn train(target: &Target, spec: &AnsatzSpec, est: &EstimatorConfig, cfg: &TrainConfig) -> Result<TrainRecord> {
    cfg.validate(est)?;
    let obj = Objective::new(spec, target, est)?;
    let theta0 = cfg.initial_theta(obj.parameter_count())?;
    let lambda_max = target.lambda_max()?;
    match cfg.optimizer {
        OptimizerConfig::Adam(adam) => train_adam(&obj, theta0, adam, cfg, lambda_max),
        OptimizerConfig::Lbfgs(lbfgs) => train_lbfgs(&obj, theta0, lbfgs, cfg, lambda_max),
    }
}

fn train_adam(obj: &Objective<'_>, theta0: Vec<f64>, adam: AdamConfig, cfg: &TrainConfig, lambda_max: Option<f64>) -> Result<TrainRecord> {
    let mut state = AdamState::new(theta0, adam);
    let mut rows = Vec::with_capacity(cfg.max_iterations + 1);
    let noisy = obj.est.mode == EstimatorMode::SwapTest;
    let mut termination = Termination::MaxIterations;
    for t in 0..=cfg.max_iterations {
        let ev = obj.evaluate(&state.theta, t)?;
        let exact_fidelity = if noisy { obj.exact_fidelity(&state.theta)? } else { ev.fidelity };
        let row = IterationRow {
            iteration: t,
            loss: ev.loss,
            fidelity: ev.fidelity,
            grad_norm: inf_norm(&ev.grad),
            evals: obj.evaluations(),
            exact_loss: loss(exact_fidelity, obj.target.kind())?,
            exact_fidelity,
        };
        rows.push(row);
        if !ev.loss.is_finite() || ev.grad.iter().any(|g| !g.is_finite()) {
            termination = Termination::NonFiniteLoss;
            break;
        }
        if ev.loss <= cfg.loss_tolerance {
            termination = Termination::LossTolerance;
            break;
        }
        if t == cfg.max_iterations {
            break;
        }
        adam_step(&mut state, &ev.grad);
    }
    Ok(TrainRecord { rows, final_theta: state.theta, termination, lambda_max })
}

fn train_lbfgs(
    obj: &Objective<'_>,
    theta0: Vec<f64>,
    lbfgs: LbfgsConfig,
    cfg: &TrainConfig,
    lambda_max: Option<f64>,
) -> Result<TrainRecord> {
    let stop = StopRule { max_iterations: cfg.max_iterations, loss_tolerance: cfg.loss_tolerance, grad_tolerance: cfg.grad_tolerance };
    let mut calls = 0usize;
    let mut rows = Vec::new();
    let fg = |theta: &[f64]| -> Result<(f64, Vec<f64>)> {
        let ev = obj.evaluate(theta, calls)?;
        calls += 1;
        Ok((ev.loss, ev.grad))
    };
    let result = lbfgs_minimize(fg, &theta0, &lbfgs, &stop, |step| {
        let fidelity = if step.value.is_finite() { (1.0 - step.value).powi(2) } else { f64::NAN };
        rows.push(IterationRow {
            iteration: step.iteration,
            loss: step.value,
            fidelity,
            grad_norm: inf_norm(step.grad),
            evals: obj.evaluations(),
            exact_loss: step.value,
            exact_fidelity: fidelity,
        });
        Ok(())
    })?;
    Ok(TrainRecord { rows, final_theta: result.theta, termination: result.termination, lambda_max })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reconstruction {
    Pure(MpsState),
    Mixed(MpoOperator),
}

impl Reconstruction {
    pub fn bond_dimension(&self) -> usize {
        match self {
            Reconstruction::Pure(m) => m.bond_dimension(),
            Reconstruction::Mixed(o) => o.bond_dimension(),
        }
    }
}

/// Replays the trained circuit on the MPS simulator; mixed mode traces out the second half.
pub fn reconstruct(theta: &[f64], spec: &AnsatzSpec, kind: TargetKind, chi_max: Option<usize>, svd_tol: f64) -> Result<Reconstruction> {
    let circuit = build_ansatz(spec, theta)?;
    let mps = run_circuit_mps(&circuit, chi_max, svd_tol)?;
    match kind {
        TargetKind::Pure => Ok(Reconstruction::Pure(mps)),
        TargetKind::Mixed => {
            if !spec.n_qubits.is_multiple_of(2) {
                bail!(Dimension, "mixed reconstruction needs an even width, got {}", spec.n_qubits);
            }
            Ok(Reconstruction::Mixed(partial_trace_to_mpo(&mps, spec.n_qubits / 2)?))
        }
    }
}

/// `|<ψ|ψS>|²` or `tr(ρ ρS)` between a reconstruction and the target, via dense export.
pub fn reconstruction_fidelity(rec: &Reconstruction, target: &Target) -> Result<f64> {
    match (rec, target) {
        (Reconstruction::Pure(mps), Target::Pure(t)) => {
            if mps.n_sites() != t.n_qubits() {
                bail!(Dimension, "reconstruction has {} sites, target {} qubits", mps.n_sites(), t.n_qubits());
            }
            Ok(overlap(t, &mps.to_statevector()?)?.norm_sqr().clamp(0.0, 1.0))
        }
        (Reconstruction::Mixed(mpo), Target::Mixed(rho)) => {
            if mpo.n_sites() != rho.n_qubits() {
                bail!(Dimension, "reconstruction has {} sites, target {} qubits", mpo.n_sites(), rho.n_qubits());
            }
            let dense = mpo.to_dense()?;
            let d = rho.dim();
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..d {
                for j in 0..d {
                    acc += rho.get(i, j) * dense.get(j, i);
                }
            }
            Ok(acc.re.clamp(0.0, 1.0))
        }
        _ => bail!(Usage, "reconstruction kind does not match the target kind"),
    }
}
