//! Gates, the layered RX/RY + brickwork-CNOT ansatz, and the mapping between
//! the flat parameter vector and rotation angles.
//!
//! Qubits are 0-based here; `Display` prints them 1-based.
//! Layer `l` (1-based) holds parameters `(l-1)*width .. l*width`, one per qubit.
//! CNOT layer `l` pairs (1,2),(3,4),... when `l` is odd and (2,3),(4,5),...
//! when even (1-based labels), control on the lower qubit.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

pub type Mat2 = [[Complex64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "angle")]
pub enum GateKind {
    #[serde(rename = "RX")]
    Rx(f64),
    #[serde(rename = "RY")]
    Ry(f64),
    H,
    X,
    #[serde(rename = "CNOT")]
    Cnot,
    #[serde(rename = "SWAP")]
    Swap,
    #[serde(rename = "CSWAP")]
    Cswap,
}

impl GateKind {
    pub fn arity(&self) -> usize {
        match self {
            GateKind::Rx(_) | GateKind::Ry(_) | GateKind::H | GateKind::X => 1,
            GateKind::Cnot | GateKind::Swap => 2,
            GateKind::Cswap => 3,
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match *self {
            GateKind::Rx(a) | GateKind::Ry(a) => Some(a),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GateKind::Rx(_) => "RX",
            GateKind::Ry(_) => "RY",
            GateKind::H => "H",
            GateKind::X => "X",
            GateKind::Cnot => "CNOT",
            GateKind::Swap => "SWAP",
            GateKind::Cswap => "CSWAP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    #[serde(flatten)]
    pub kind: GateKind,
    pub qubits: Vec<usize>,
}

impl Gate {
    pub fn new(kind: GateKind, qubits: Vec<usize>) -> Result<Self> {
        if qubits.len() != kind.arity() {
            bail!(Parameter, "{} acts on {} qubits, got {:?}", kind.name(), kind.arity(), qubits);
        }
        for (k, q) in qubits.iter().enumerate() {
            if qubits[..k].contains(q) {
                bail!(Parameter, "repeated qubit {} in {}", q, kind.name());
            }
        }
        if let Some(a) = kind.angle() {
            if !a.is_finite() {
                bail!(Parameter, "non-finite rotation angle");
            }
        }
        Ok(Self { kind, qubits })
    }

    pub fn rx(q: usize, angle: f64) -> Self {
        Self { kind: GateKind::Rx(angle), qubits: vec![q] }
    }

    pub fn ry(q: usize, angle: f64) -> Self {
        Self { kind: GateKind::Ry(angle), qubits: vec![q] }
    }

    pub fn h(q: usize) -> Self {
        Self { kind: GateKind::H, qubits: vec![q] }
    }

    pub fn x(q: usize) -> Self {
        Self { kind: GateKind::X, qubits: vec![q] }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        assert_ne!(control, target);
        Self { kind: GateKind::Cnot, qubits: vec![control, target] }
    }

    pub fn swap(a: usize, b: usize) -> Self {
        assert_ne!(a, b);
        Self { kind: GateKind::Swap, qubits: vec![a, b] }
    }

    pub fn cswap(control: usize, a: usize, b: usize) -> Self {
        assert!(control != a && control != b && a != b);
        Self { kind: GateKind::Cswap, qubits: vec![control, a, b] }
    }

    pub fn is_parametric(&self) -> bool {
        self.kind.angle().is_some()
    }

    pub fn inverse(&self) -> Self {
        let kind = match self.kind {
            GateKind::Rx(a) => GateKind::Rx(-a),
            GateKind::Ry(a) => GateKind::Ry(-a),
            k => k,
        };
        Self { kind, qubits: self.qubits.clone() }
    }

    /// 2x2 unitary of a single-qubit gate.
    pub fn single_qubit_matrix(&self) -> Option<Mat2> {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let re = |x: f64| Complex64::new(x, 0.0);
        match self.kind {
            GateKind::Rx(a) => Some(rotation_matrix(RotationAxis::X, a)),
            GateKind::Ry(a) => Some(rotation_matrix(RotationAxis::Y, a)),
            GateKind::H => Some([[re(r), re(r)], [re(r), re(-r)]]),
            GateKind::X => Some([[re(0.0), re(1.0)], [re(1.0), re(0.0)]]),
            _ => None,
        }
    }

    /// 4x4 unitary of a two-qubit gate over `|q0 q1>` with `q0 = qubits[0]` as the high bit.
    pub fn two_qubit_matrix(&self) -> Option<[[Complex64; 4]; 4]> {
        let perm: [usize; 4] = match self.kind {
            GateKind::Cnot => [0, 1, 3, 2],
            GateKind::Swap => [0, 2, 1, 3],
            _ => return None,
        };
        let mut m = [[Complex64::new(0.0, 0.0); 4]; 4];
        for (col, &row) in perm.iter().enumerate() {
            m[row][col] = Complex64::new(1.0, 0.0);
        }
        Some(m)
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind.angle() {
            Some(a) => write!(f, "{}({})", self.kind.name(), a)?,
            None => write!(f, "{}", self.kind.name())?,
        }
        let labels: Vec<String> = self.qubits.iter().map(|q| (q + 1).to_string()).collect();
        write!(f, "@{}", labels.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationAxis {
    X,
    Y,
}

pub fn rotation_matrix(axis: RotationAxis, angle: f64) -> Mat2 {
    let (s, c) = (angle / 2.0).sin_cos();
    match axis {
        RotationAxis::X => [[Complex64::new(c, 0.0), Complex64::new(0.0, -s)], [Complex64::new(0.0, -s), Complex64::new(c, 0.0)]],
        RotationAxis::Y => [[Complex64::new(c, 0.0), Complex64::new(-s, 0.0)], [Complex64::new(s, 0.0), Complex64::new(c, 0.0)]],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationScheme {
    AlternatingXy,
    RyOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CnotPattern {
    #[default]
    Brickwork,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub n_qubits: usize,
    pub depth: usize,
    pub rotation_scheme: RotationScheme,
    #[serde(default)]
    pub cnot_pattern: CnotPattern,
}

impl AnsatzSpec {
    pub fn new(n_qubits: usize, depth: usize, rotation_scheme: RotationScheme) -> Self {
        Self { n_qubits, depth, rotation_scheme, cnot_pattern: CnotPattern::Brickwork }
    }

    pub fn parameter_count(&self) -> usize {
        parameter_count(self)
    }

    /// Rotation axis used in layer `layer` (1-based, `depth + 1` is the closing layer).
    pub fn layer_axis(&self, layer: usize) -> RotationAxis {
        match self.rotation_scheme {
            RotationScheme::RyOnly => RotationAxis::Y,
            RotationScheme::AlternatingXy if layer % 2 == 1 => RotationAxis::X,
            RotationScheme::AlternatingXy => RotationAxis::Y,
        }
    }
}

pub fn parameter_count(spec: &AnsatzSpec) -> usize {
    spec.n_qubits * (spec.depth + 1)
}

/// CNOT pairs `(control, target)` of brickwork layer `layer` (1-based).
pub fn brickwork_pairs(width: usize, layer: usize) -> Vec<(usize, usize)> {
    let start = if layer % 2 == 1 { 0 } else { 1 };
    (start..width.saturating_sub(1)).step_by(2).map(|q| (q, q + 1)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    width: usize,
    gates: Vec<Gate>,
    /// `param_slots[i]` is the position in `gates` of the rotation holding parameter `i`.
    param_slots: Vec<usize>,
}

impl Circuit {
    pub fn new(width: usize) -> Result<Self> {
        if width == 0 {
            bail!(Parameter, "circuit width must be positive");
        }
        Ok(Self { width, gates: Vec::new(), param_slots: Vec::new() })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn param_slots(&self) -> &[usize] {
        &self.param_slots
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    fn check(&self, gate: &Gate) -> Result<()> {
        if let Some(q) = gate.qubits.iter().find(|&&q| q >= self.width) {
            bail!(Parameter, "qubit {} outside circuit of width {}", q, self.width);
        }
        // Re-run arity/distinctness checks for gates built through struct literals.
        Gate::new(gate.kind, gate.qubits.clone()).map(|_| ())
    }

    /// Appends a fixed gate; rotations pushed this way are not parameter slots.
    pub fn push(&mut self, gate: Gate) -> Result<()> {
        self.check(&gate)?;
        self.gates.push(gate);
        Ok(())
    }

    /// Appends a rotation bound to the next parameter index.
    pub fn push_parametric(&mut self, gate: Gate) -> Result<usize> {
        if !gate.is_parametric() {
            bail!(Parameter, "{} carries no parameter", gate.kind.name());
        }
        self.check(&gate)?;
        self.param_slots.push(self.gates.len());
        self.gates.push(gate);
        Ok(self.param_slots.len() - 1)
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.param_slots.iter().map(|&g| self.gates[g].kind.angle().unwrap()).collect()
    }

    pub fn cnot_count(&self) -> usize {
        self.gates.iter().filter(|g| g.kind == GateKind::Cnot).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.gates)?)
    }

    pub fn from_json(width: usize, json: &str) -> Result<Self> {
        let gates: Vec<Gate> = serde_json::from_str(json)?;
        let mut c = Self::new(width)?;
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }
}

pub fn build_ansatz(spec: &AnsatzSpec, theta: &[f64]) -> Result<Circuit> {
    let p = parameter_count(spec);
    if theta.len() != p {
        bail!(Parameter, "ansatz expects {} parameters, got {}", p, theta.len());
    }
    let w = spec.n_qubits;
    let mut circuit = Circuit::new(w)?;
    circuit.gates.reserve(p + spec.depth * w / 2);
    let mut next = theta.iter();
    for layer in 1..=spec.depth + 1 {
        let axis = spec.layer_axis(layer);
        for q in 0..w {
            let angle = *next.next().expect("length checked");
            let gate = match axis {
                RotationAxis::X => Gate::rx(q, angle),
                RotationAxis::Y => Gate::ry(q, angle),
            };
            circuit.push_parametric(gate)?;
        }
        if layer <= spec.depth {
            for (c, t) in brickwork_pairs(w, layer) {
                circuit.push(Gate::cnot(c, t))?;
            }
        }
    }
    Ok(circuit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftSign {
    Plus,
    Minus,
}

impl ShiftSign {
    pub fn offset(self) -> f64 {
        match self {
            ShiftSign::Plus => FRAC_PI_2,
            ShiftSign::Minus => -FRAC_PI_2,
        }
    }
}

pub fn shift_parameter(theta: &[f64], i: usize, sign: ShiftSign) -> Result<Vec<f64>> {
    if i >= theta.len() {
        bail!(Parameter, "parameter index {} out of range for {} parameters", i, theta.len());
    }
    let mut out = theta.to_vec();
    out[i] += sign.offset();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn close(a: Mat2, b: Mat2, tol: f64) -> bool {
        (0..2).all(|i| (0..2).all(|j| (a[i][j] - b[i][j]).norm() <= tol))
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(parameter_count(&AnsatzSpec::new(15, 15, RotationScheme::RyOnly)), 240);
        assert_eq!(parameter_count(&AnsatzSpec::new(1, 0, RotationScheme::RyOnly)), 1);
        assert_eq!(parameter_count(&AnsatzSpec::new(6, 5, RotationScheme::RyOnly)), 36);
    }

    #[test]
    fn smallest_ry_ansatz_layout() {
        let spec = AnsatzSpec::new(2, 1, RotationScheme::RyOnly);
        let circ = build_ansatz(&spec, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let expect = [Gate::ry(0, 0.1), Gate::ry(1, 0.2), Gate::cnot(0, 1), Gate::ry(0, 0.3), Gate::ry(1, 0.4)];
        assert_eq!(circ.gates(), &expect[..]);
        assert_eq!(circ.param_slots(), &[0, 1, 3, 4]);
        assert_eq!(circ.gates()[2].to_string(), "CNOT@1,2");
    }

    #[test]
    fn alternating_layers_and_brickwork() {
        let spec = AnsatzSpec::new(3, 2, RotationScheme::AlternatingXy);
        let circ = build_ansatz(&spec, &[0.0; 9]).unwrap();
        let kinds: Vec<&str> = circ.gates().iter().map(|g| g.kind.name()).collect();
        assert_eq!(kinds, ["RX", "RX", "RX", "CNOT", "RY", "RY", "RY", "CNOT", "RX", "RX", "RX"]);
        assert_eq!(circ.gates()[3].qubits, vec![0, 1]);
        assert_eq!(circ.gates()[7].qubits, vec![1, 2]);
    }

    #[test]
    fn depth_zero_has_no_cnots() {
        let circ = build_ansatz(&AnsatzSpec::new(4, 0, RotationScheme::AlternatingXy), &[0.5; 4]).unwrap();
        assert_eq!(circ.len(), 4);
        assert_eq!(circ.cnot_count(), 0);
    }

    #[test]
    fn theta_length_is_checked() {
        let spec = AnsatzSpec::new(2, 1, RotationScheme::RyOnly);
        assert!(build_ansatz(&spec, &[0.0; 3]).is_err());
    }

    #[test]
    fn rotation_values() {
        let id = [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
        assert!(close(rotation_matrix(RotationAxis::X, 0.0), id, 0.0));
        let ry = [[c(0.0, 0.0), c(-1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]];
        assert!(close(rotation_matrix(RotationAxis::Y, PI), ry, 1e-15));
        let rx = [[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, -1.0), c(0.0, 0.0)]];
        assert!(close(rotation_matrix(RotationAxis::X, PI), rx, 1e-15));
    }

    #[test]
    fn shifts() {
        assert_eq!(shift_parameter(&[0.0], 0, ShiftSign::Plus).unwrap(), vec![FRAC_PI_2]);
        assert_eq!(shift_parameter(&[1.0, 2.0], 1, ShiftSign::Minus).unwrap(), vec![1.0, 2.0 - FRAC_PI_2]);
        assert!(shift_parameter(&[1.0], 1, ShiftSign::Plus).is_err());
    }

    #[test]
    fn gate_validation() {
        assert!(Gate::new(GateKind::Cnot, vec![1, 1]).is_err());
        assert!(Gate::new(GateKind::H, vec![0, 1]).is_err());
        let mut circ = Circuit::new(2).unwrap();
        assert!(circ.push(Gate::x(2)).is_err());
        assert!(circ.push_parametric(Gate::h(0)).is_err());
    }

    #[test]
    fn json_round_trip() {
        let circ = build_ansatz(&AnsatzSpec::new(3, 2, RotationScheme::AlternatingXy), &[0.25; 9]).unwrap();
        let json = circ.to_json().unwrap();
        assert!(json.contains("\"kind\": \"RX\""));
        assert!(json.contains("\"angle\": 0.25"));
        let back = Circuit::from_json(3, &json).unwrap();
        assert_eq!(back.gates(), circ.gates());
    }

    proptest! {
        #[test]
        fn rotations_are_unitary(angle in -20.0f64..20.0, x in any::<bool>()) {
            let u = rotation_matrix(if x { RotationAxis::X } else { RotationAxis::Y }, angle);
            for i in 0..2 {
                for j in 0..2 {
                    let dot: Complex64 = (0..2).map(|k| u[k][i].conj() * u[k][j]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((dot - want).norm() < 1e-12);
                }
            }
        }

        #[test]
        fn ansatz_gate_counts(w in 1usize..9, d in 0usize..8, seed in any::<u64>()) {
            let spec = AnsatzSpec::new(w, d, RotationScheme::AlternatingXy);
            let theta: Vec<f64> = (0..spec.parameter_count()).map(|i| (seed.wrapping_add(i as u64) % 97) as f64 * 0.1).collect();
            let circ = build_ansatz(&spec, &theta).unwrap();
            prop_assert_eq!(circ.param_slots().len(), w * (d + 1));
            let expected_cnots: usize = (1..=d).map(|l| if l % 2 == 1 { w / 2 } else { (w - 1) / 2 }).sum();
            prop_assert_eq!(circ.cnot_count(), expected_cnots);
            prop_assert_eq!(circ.parameters(), theta.clone());
            prop_assert_eq!(build_ansatz(&spec, &theta).unwrap(), circ);
        }

        #[test]
        fn shift_is_an_involution(theta in prop::collection::vec(-10.0f64..10.0, 1..10), idx in any::<prop::sample::Index>()) {
            let i = idx.index(theta.len());
            let there = shift_parameter(&theta, i, ShiftSign::Plus).unwrap();
            let back = shift_parameter(&there, i, ShiftSign::Minus).unwrap();
            // x + pi/2 - pi/2 need not be bit-exact for every x, but it is within one ulp.
            prop_assert!((back[i] - theta[i]).abs() <= f64::EPSILON * theta[i].abs().max(1.0) * 2.0);
        }
    }
}
