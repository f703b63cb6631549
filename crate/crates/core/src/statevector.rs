//! Dense state-vector simulator, exact fidelities and the shot-sampled SWAP test.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::circuit::{Circuit, Gate, GateKind, Mat2};
use crate::error::{bail, Result};
use crate::tensor::ComplexTensor;

/// 2^26 amplitudes is about 1 GiB of complex doubles.
pub const MAX_DENSE_QUBITS: usize = 26;

const PAR_THRESHOLD: usize = 1 << 14;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

fn check_capacity(n: usize) -> Result<()> {
    if n == 0 || n > MAX_DENSE_QUBITS {
        bail!(Capacity, "{} qubits outside dense range 1..={}", n, MAX_DENSE_QUBITS);
    }
    Ok(())
}

pub fn zero_state(n: usize) -> Result<StateVector> {
    check_capacity(n)?;
    let mut amplitudes = vec![ZERO; 1 << n];
    amplitudes[0] = Complex64::new(1.0, 0.0);
    Ok(StateVector { n_qubits: n, amplitudes })
}

impl StateVector {
    /// Wraps raw amplitudes; the length must be a power of two and the norm 1 within 1e-8.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            bail!(Dimension, "amplitude count {} is not a power of two >= 2", len);
        }
        let n = len.trailing_zeros() as usize;
        check_capacity(n)?;
        let sv = Self { n_qubits: n, amplitudes };
        let norm = sv.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-8 {
            bail!(Domain, "state norm {} is not 1", norm);
        }
        Ok(sv)
    }

    /// Like `from_amplitudes` but rescales to unit norm first.
    pub fn normalized(mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            bail!(Domain, "cannot normalize a zero or non-finite vector");
        }
        amplitudes.iter_mut().for_each(|z| *z /= norm);
        Self::from_amplitudes(amplitudes)
    }

    pub fn basis_state(n: usize, index: usize) -> Result<Self> {
        let mut s = zero_state(n)?;
        if index >= s.amplitudes.len() {
            bail!(Parameter, "basis index {} out of range", index);
        }
        s.amplitudes[0] = ZERO;
        s.amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Tensor product `self ⊗ other`, `self` on the high qubits.
    pub fn kron(&self, other: &Self) -> Result<Self> {
        check_capacity(self.n_qubits + other.n_qubits)?;
        let mut out = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amplitudes {
            out.extend(other.amplitudes.iter().map(|b| a * b));
        }
        Ok(Self { n_qubits: self.n_qubits + other.n_qubits, amplitudes: out })
    }

    fn mask(&self, q: usize) -> usize {
        1 << (self.n_qubits - 1 - q)
    }

    fn check_gate(&self, gate: &Gate) -> Result<()> {
        if let Some(q) = gate.qubits.iter().find(|&&q| q >= self.n_qubits) {
            bail!(Parameter, "qubit {} outside state of {} qubits", q, self.n_qubits);
        }
        Gate::new(gate.kind, gate.qubits.clone()).map(|_| ())
    }

    pub(crate) fn apply_single_qubit_matrix(&mut self, q: usize, m: &Mat2) {
        let mask = self.mask(q);
        let kernel = |block: &mut [Complex64]| {
            let (lo, hi) = block.split_at_mut(mask);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a0, *a1);
                *a0 = m[0][0] * x + m[0][1] * y;
                *a1 = m[1][0] * x + m[1][1] * y;
            }
        };
        if self.amplitudes.len() >= PAR_THRESHOLD {
            self.amplitudes.par_chunks_mut(2 * mask).for_each(kernel);
        } else {
            self.amplitudes.chunks_mut(2 * mask).for_each(kernel);
        }
    }

    /// `pick(i)` returns the partner of `i` when `i` is the smaller index of a swapped pair.
    fn permute_where(&mut self, pick: impl Fn(usize) -> Option<usize>) {
        for i in 0..self.amplitudes.len() {
            if let Some(j) = pick(i) {
                self.amplitudes.swap(i, j);
            }
        }
    }

    /// Applies `gate` in place.
    pub fn apply_gate_mut(&mut self, gate: &Gate) -> Result<()> {
        self.check_gate(gate)?;
        if let Some(m) = gate.single_qubit_matrix() {
            self.apply_single_qubit_matrix(gate.qubits[0], &m);
            return Ok(());
        }
        match gate.kind {
            GateKind::Cnot => {
                let (c, t) = (self.mask(gate.qubits[0]), self.mask(gate.qubits[1]));
                self.permute_where(|i| (i & c != 0 && i & t == 0).then_some(i | t));
            }
            GateKind::Swap => {
                let (a, b) = (self.mask(gate.qubits[0]), self.mask(gate.qubits[1]));
                self.permute_where(|i| (i & a != 0 && i & b == 0).then_some((i & !a) | b));
            }
            GateKind::Cswap => {
                let c = self.mask(gate.qubits[0]);
                let (a, b) = (self.mask(gate.qubits[1]), self.mask(gate.qubits[2]));
                self.permute_where(|i| (i & c != 0 && i & a != 0 && i & b == 0).then_some((i & !a) | b));
            }
            _ => unreachable!("single-qubit kinds handled above"),
        }
        Ok(())
    }

    pub fn apply_gate(&self, gate: &Gate) -> Result<Self> {
        let mut out = self.clone();
        out.apply_gate_mut(gate)?;
        Ok(out)
    }

    pub fn apply_circuit_mut(&mut self, circuit: &Circuit) -> Result<()> {
        if circuit.width() != self.n_qubits {
            bail!(Dimension, "circuit width {} vs state width {}", circuit.width(), self.n_qubits);
        }
        circuit.gates().iter().try_for_each(|g| self.apply_gate_mut(g))
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.n_qubits as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.dim() * 16);
        for z in &self.amplitudes {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 4];
        r.read_exact(&mut head)?;
        let n = u32::from_le_bytes(head) as usize;
        check_capacity(n)?;
        let mut buf = vec![0u8; 16 << n];
        r.read_exact(&mut buf)?;
        let amplitudes = buf
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        Self::from_amplitudes(amplitudes)
    }
}

pub fn apply_gate(state: &StateVector, gate: &Gate) -> Result<StateVector> {
    state.apply_gate(gate)
}

pub fn run_circuit(circuit: &Circuit) -> Result<StateVector> {
    let mut s = zero_state(circuit.width())?;
    s.apply_circuit_mut(circuit)?;
    Ok(s)
}

/// `<a|b>`, conjugate-linear in `a`.
pub fn overlap(a: &StateVector, b: &StateVector) -> Result<Complex64> {
    if a.n_qubits != b.n_qubits {
        bail!(Dimension, "overlap of {}- and {}-qubit states", a.n_qubits, b.n_qubits);
    }
    Ok(a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| x.conj() * y).sum())
}

/// `<bra| M_q |ket>` for a 2x2 matrix acting on qubit `q`, without materializing `M_q |ket>`.
pub(crate) fn sandwich_single_qubit(bra: &StateVector, ket: &StateVector, q: usize, m: &Mat2) -> Complex64 {
    let mask = ket.mask(q);
    let block = |(b, k): (&[Complex64], &[Complex64])| -> Complex64 {
        let (b0, b1) = b.split_at(mask);
        let (k0, k1) = k.split_at(mask);
        let mut acc = ZERO;
        for i in 0..mask {
            let (x, y) = (k0[i], k1[i]);
            acc += b0[i].conj() * (m[0][0] * x + m[0][1] * y) + b1[i].conj() * (m[1][0] * x + m[1][1] * y);
        }
        acc
    };
    let zipped = bra.amplitudes.chunks(2 * mask).zip(ket.amplitudes.chunks(2 * mask));
    // Sequential reduction keeps the summation order fixed.
    zipped.map(block).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    entries: Vec<Complex64>,
}

impl DensityMatrix {
    /// Validates Hermiticity and unit trace to 1e-10.
    pub fn new(n_qubits: usize, entries: Vec<Complex64>) -> Result<Self> {
        if n_qubits == 0 || 2 * n_qubits > MAX_DENSE_QUBITS {
            bail!(Capacity, "{}-qubit density matrix exceeds dense capacity", n_qubits);
        }
        let dim = 1usize << n_qubits;
        if entries.len() != dim * dim {
            bail!(Dimension, "{}-qubit density matrix needs {} entries", n_qubits, dim * dim);
        }
        let rho = Self { n_qubits, entries };
        for i in 0..dim {
            for j in i..dim {
                if (rho.get(i, j) - rho.get(j, i).conj()).norm() > 1e-10 {
                    bail!(Domain, "density matrix is not Hermitian at ({}, {})", i, j);
                }
            }
        }
        let tr = rho.trace();
        if (tr - 1.0).abs() > 1e-10 {
            bail!(Domain, "density matrix trace {} is not 1", tr);
        }
        Ok(rho)
    }

    pub fn from_pure(state: &StateVector) -> Result<Self> {
        let d = state.dim();
        let a = state.amplitudes();
        let mut entries = Vec::with_capacity(d * d);
        for i in 0..d {
            entries.extend(a.iter().map(|aj| a[i] * aj.conj()));
        }
        Self::new(state.n_qubits(), entries)
    }

    /// Convex mixture `sum_k p_k |psi_k><psi_k|`; weights must sum to 1.
    pub fn mixture(states: &[(f64, StateVector)]) -> Result<Self> {
        let Some((_, first)) = states.first() else {
            bail!(Parameter, "empty mixture");
        };
        let n = first.n_qubits();
        let d = first.dim();
        let mut entries = vec![ZERO; d * d];
        for (p, s) in states {
            if s.n_qubits() != n || *p < 0.0 {
                bail!(Parameter, "mixture components must share width and have p >= 0");
            }
            let a = s.amplitudes();
            for i in 0..d {
                for j in 0..d {
                    entries[i * d + j] += *p * a[i] * a[j].conj();
                }
            }
        }
        Self::new(n, entries)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim() + col]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.get(i, i).re).sum()
    }

    /// Eigenvalues in descending order. For a positive semidefinite matrix these
    /// coincide with its singular values.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let d = self.dim();
        let t = ComplexTensor::new(vec![d, d], self.entries.clone())?;
        Ok(t.svd()?.s)
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?[0])
    }
}

/// Reduced density operator of the first `keep_first` qubits.
pub fn reduced_density(state: &StateVector, keep_first: usize) -> Result<DensityMatrix> {
    let n = state.n_qubits();
    if keep_first == 0 || keep_first >= n {
        bail!(Parameter, "keep_first {} must lie in 1..{}", keep_first, n);
    }
    if 2 * keep_first > MAX_DENSE_QUBITS {
        bail!(Capacity, "reduced density on {} qubits exceeds dense capacity", keep_first);
    }
    let dk = 1usize << keep_first;
    let de = 1usize << (n - keep_first);
    let a = state.amplitudes();
    let mut entries = vec![ZERO; dk * dk];
    entries.par_chunks_mut(dk).enumerate().for_each(|(i, row)| {
        let ri = &a[i * de..(i + 1) * de];
        for (j, out) in row.iter_mut().enumerate() {
            let rj = &a[j * de..(j + 1) * de];
            *out = ri.iter().zip(rj).map(|(x, y)| x * y.conj()).sum();
        }
    });
    Ok(DensityMatrix { n_qubits: keep_first, entries })
}

/// `<psi_o| rho ⊗ I |psi_o>` with `rho` on the first half of `psi_o`, clamped to [0, 1].
pub fn exact_mixed_fidelity(psi_o: &StateVector, rho: &DensityMatrix) -> Result<f64> {
    let n = rho.n_qubits();
    if psi_o.n_qubits() != 2 * n {
        bail!(Dimension, "mixed fidelity needs a {}-qubit output for a {}-qubit target", 2 * n, n);
    }
    let dk = rho.dim();
    let de = psi_o.dim() / dk;
    let a = psi_o.amplitudes();
    let mut acc = ZERO;
    for e in 0..de {
        for i in 0..dk {
            let mut row = ZERO;
            for j in 0..dk {
                row += rho.get(i, j) * a[j * de + e];
            }
            acc += a[i * de + e].conj() * row;
        }
    }
    Ok(acc.re.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shots {
    Exact,
    Count(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShotPlan {
    pub shots: Shots,
    pub rng_seed: u64,
}

impl ShotPlan {
    pub fn exact() -> Self {
        Self { shots: Shots::Exact, rng_seed: 0 }
    }

    pub fn sampled(shots: u64, rng_seed: u64) -> Result<Self> {
        if shots == 0 {
            bail!(Parameter, "shot count must be positive");
        }
        Ok(Self { shots: Shots::Count(shots), rng_seed })
    }
}

/// Seed for the private random stream of one evaluation (splitmix64 finalizer
/// over the master seed and the evaluation tag).
pub fn stream_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Probability of reading the ancilla as 1 after `(H⊗I)(c-SWAP)(H⊗I)|0>|psi>|psi_o>`.
///
/// Register layout: ancilla is qubit 0, `psi` occupies qubits `1..=n`, `psi_o` the rest.
pub fn swap_test_p1(psi: &StateVector, psi_o: &StateVector) -> Result<f64> {
    if psi_o.n_qubits() != psi.n_qubits() {
        bail!(Dimension, "SWAP test on {}- and {}-qubit registers", psi.n_qubits(), psi_o.n_qubits());
    }
    swap_test_p1_partial(psi, psi_o, psi.n_qubits())
}

/// SWAP test where only the first `compare` qubits of each register are swapped.
///
/// The result is `(1 - tr(rho_a rho_b)) / 2` for the reduced states of those qubits.
pub fn swap_test_p1_partial(a: &StateVector, b: &StateVector, compare: usize) -> Result<f64> {
    let (na, nb) = (a.n_qubits(), b.n_qubits());
    if compare == 0 || compare > na || compare > nb {
        bail!(Dimension, "cannot compare {} qubits of {}- and {}-qubit registers", compare, na, nb);
    }
    if na + nb + 1 > MAX_DENSE_QUBITS {
        bail!(Capacity, "SWAP test needs {} qubits", na + nb + 1);
    }
    let mut joint = zero_state(1)?.kron(a)?.kron(b)?;
    joint.apply_gate_mut(&Gate::h(0))?;
    for k in 0..compare {
        joint.apply_gate_mut(&Gate::cswap(0, 1 + k, 1 + na + k))?;
    }
    joint.apply_gate_mut(&Gate::h(0))?;
    let half = joint.dim() / 2;
    let p1: f64 = joint.amplitudes()[half..].iter().map(|z| z.norm_sqr()).sum();
    Ok(p1.clamp(0.0, 1.0))
}

/// Turns an exact ancilla probability into an overlap estimate, sampling when shots are finite.
pub fn estimate_from_p1(p1: f64, plan: &ShotPlan) -> f64 {
    let p_hat = match plan.shots {
        Shots::Exact => p1,
        Shots::Count(shots) => {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.rng_seed);
            let dist = Binomial::new(shots, p1.clamp(0.0, 1.0)).expect("probability in [0, 1]");
            dist.sample(&mut rng) as f64 / shots as f64
        }
    };
    (1.0 - 2.0 * p_hat).max(0.0).sqrt()
}

/// Estimate of `|<psi|psi_o>|` from the SWAP test, exact or from `shots` binomial samples.
pub fn swap_test(psi: &StateVector, psi_o: &StateVector, plan: &ShotPlan) -> Result<f64> {
    Ok(estimate_from_p1(swap_test_p1(psi, psi_o)?, plan))
}
