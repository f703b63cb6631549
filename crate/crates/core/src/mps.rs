//! Matrix-product-state circuit simulator.
//!
//! Site tensors have index order (left bond, physical, right bond) and are
//! kept right-canonical: `sum_{s,b} B[a,s,b] conj(B[a',s,b]) = delta(a,a')`.
//! Two-qubit gates merge the neighbouring pair, apply the 4x4 unitary and split
//! it again by SVD with the singular values pushed into the left tensor, so
//! every site stays right-canonical without a re-sweep. Tracing out the tail
//! of such a chain leaves the identity on the cut bond, which is what makes the
//! reduced density operator a product of the kept tensors and their conjugates.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate, GateKind};
use crate::error::{bail, Result};
use crate::statevector::{DensityMatrix, StateVector, MAX_DENSE_QUBITS};
use crate::tensor::{matmul_raw, ComplexTensor};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub const DEFAULT_SVD_TOL: f64 = 1e-12;

/// Bond truncation: drop singular values below `svd_tol * s_max`, keep at most `chi_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub chi_max: Option<usize>,
    pub svd_tol: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { chi_max: None, svd_tol: DEFAULT_SVD_TOL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpsState {
    sites: Vec<ComplexTensor>,
    /// Sum of squared singular values dropped by truncation so far.
    #[serde(default)]
    discarded_weight: f64,
}

pub fn product_state_mps(n: usize) -> Result<MpsState> {
    if n == 0 {
        bail!(Parameter, "MPS needs at least one site");
    }
    let site = ComplexTensor::new(vec![1, 2, 1], vec![ONE, ZERO])?;
    Ok(MpsState { sites: vec![site; n], discarded_weight: 0.0 })
}

fn bits_from_index(index: usize, n: usize) -> Vec<u8> {
    (0..n).map(|l| ((index >> (n - 1 - l)) & 1) as u8).collect()
}

fn check_bits(bits: &[u8], n: usize) -> Result<()> {
    if bits.len() != n {
        bail!(Dimension, "bitstring of length {} for {} sites", bits.len(), n);
    }
    if bits.iter().any(|&b| b > 1) {
        bail!(Parameter, "bitstring entries must be 0 or 1");
    }
    Ok(())
}

/// Row vector `v` (length = left bond) times the `sigma` slice of `site`.
fn chain_step(v: &[Complex64], site: &ComplexTensor, sigma: usize) -> Vec<Complex64> {
    let (l, r) = (site.shape()[0], site.shape()[2]);
    let data = site.data();
    let mut out = vec![ZERO; r];
    for (a, va) in v.iter().enumerate().take(l) {
        if *va == ZERO {
            continue;
        }
        let row = &data[(a * 2 + sigma) * r..(a * 2 + sigma + 1) * r];
        for (o, b) in out.iter_mut().zip(row) {
            *o += va * b;
        }
    }
    out
}

/// All partial amplitudes of the first `sites.len()` qubits: a (2^k x right bond) row-major matrix.
fn contract_all(sites: &[ComplexTensor]) -> (Vec<Complex64>, usize) {
    let mut rows = 1usize;
    let mut cur = vec![ONE];
    let mut bond = 1usize;
    for site in sites {
        let (l, r) = (site.shape()[0], site.shape()[2]);
        debug_assert_eq!(l, bond);
        // [rows, l] x [l, 2*r] -> [rows, 2, r] -> [2*rows, r]
        cur = matmul_raw(&cur, site.data(), rows, l, 2 * r);
        rows *= 2;
        bond = r;
    }
    (cur, bond)
}

impl MpsState {
    pub fn from_sites(sites: Vec<ComplexTensor>) -> Result<Self> {
        if sites.is_empty() {
            bail!(Parameter, "MPS needs at least one site");
        }
        for (k, s) in sites.iter().enumerate() {
            if s.rank() != 3 || s.shape()[1] != 2 {
                bail!(Dimension, "site {} has shape {:?}, expected [l, 2, r]", k, s.shape());
            }
        }
        if sites[0].shape()[0] != 1 || sites[sites.len() - 1].shape()[2] != 1 {
            bail!(Dimension, "boundary bonds must have extent 1");
        }
        for (k, w) in sites.windows(2).enumerate() {
            if w[0].shape()[2] != w[1].shape()[0] {
                bail!(Dimension, "bond mismatch between sites {} and {}", k, k + 1);
            }
        }
        Ok(Self { sites, discarded_weight: 0.0 })
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[ComplexTensor] {
        &self.sites
    }

    pub fn sites_mut(&mut self) -> &mut [ComplexTensor] {
        &mut self.sites
    }

    pub fn discarded_weight(&self) -> f64 {
        self.discarded_weight
    }

    /// Extents of the n-1 internal bonds.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.sites.len() - 1].iter().map(|s| s.shape()[2]).collect()
    }

    pub fn bond_dimension(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn apply_single_qubit_mut(&mut self, gate: &Gate, site: usize) -> Result<()> {
        let Some(u) = gate.single_qubit_matrix() else {
            bail!(Usage, "{} is not a single-qubit gate", gate.kind.name());
        };
        if site >= self.sites.len() {
            bail!(Parameter, "site {} outside {}-site MPS", site, self.sites.len());
        }
        let t = &mut self.sites[site];
        let (l, r) = (t.shape()[0], t.shape()[2]);
        let data = t.data_mut();
        for a in 0..l {
            let base = a * 2 * r;
            for b in 0..r {
                let x = data[base + b];
                let y = data[base + r + b];
                data[base + b] = u[0][0] * x + u[0][1] * y;
                data[base + r + b] = u[1][0] * x + u[1][1] * y;
            }
        }
        Ok(())
    }

    /// Applies a nearest-neighbour two-qubit gate on `(left_site, left_site + 1)`.
    pub fn apply_two_qubit_mut(&mut self, gate: &Gate, left_site: usize, trunc: &Truncation) -> Result<()> {
        let Some(mut u) = gate.two_qubit_matrix() else {
            bail!(Usage, "{} is not a two-qubit gate", gate.kind.name());
        };
        let right_site = left_site + 1;
        if right_site >= self.sites.len() {
            bail!(Parameter, "sites ({}, {}) outside {}-site MPS", left_site, right_site, self.sites.len());
        }
        match gate.qubits[..] {
            [a, b] if a == left_site && b == right_site => {}
            [a, b] if a == right_site && b == left_site => {
                // Gate matrix is over |q_a q_b>; reorder to |left right>.
                let p = [0usize, 2, 1, 3];
                let orig = u;
                for i in 0..4 {
                    for j in 0..4 {
                        u[i][j] = orig[p[i]][p[j]];
                    }
                }
            }
            _ => bail!(Usage, "gate on {:?} does not act on sites ({}, {})", gate.qubits, left_site, right_site),
        }

        let (b1, b2) = (&self.sites[left_site], &self.sites[right_site]);
        let (cl, cm, cr) = (b1.shape()[0], b1.shape()[2], b2.shape()[2]);
        // theta[(a, s1), (s2, c)] = sum_m B1[a, s1, m] B2[m, s2, c]
        let theta = matmul_raw(b1.data(), b2.data(), cl * 2, cm, 2 * cr);
        let mut merged = vec![ZERO; cl * 2 * 2 * cr];
        for a in 0..cl {
            for c in 0..cr {
                let mut v = [ZERO; 4];
                for s1 in 0..2 {
                    for s2 in 0..2 {
                        v[s1 * 2 + s2] = theta[(a * 2 + s1) * 2 * cr + s2 * cr + c];
                    }
                }
                for t1 in 0..2 {
                    for t2 in 0..2 {
                        let row = &u[t1 * 2 + t2];
                        let val = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
                        merged[(a * 2 + t1) * 2 * cr + t2 * cr + c] = val;
                    }
                }
            }
        }
        let m = ComplexTensor::new(vec![cl * 2, 2 * cr], merged)?;
        let svd = m.svd()?;
        let smax = svd.s.first().copied().unwrap_or(0.0);
        let mut keep = svd.s.iter().take_while(|&&s| s >= trunc.svd_tol * smax).count().max(1);
        if let Some(chi) = trunc.chi_max {
            keep = keep.min(chi.max(1));
        }
        self.discarded_weight += svd.s[keep..].iter().map(|s| s * s).sum::<f64>();

        let k_all = svd.s.len();
        let mut left = Vec::with_capacity(cl * 2 * keep);
        for row in 0..cl * 2 {
            for k in 0..keep {
                left.push(svd.u.data()[row * k_all + k] * svd.s[k]);
            }
        }
        let right = svd.vdag.data()[..keep * 2 * cr].to_vec();
        self.sites[left_site] = ComplexTensor::new(vec![cl, 2, keep], left)?;
        self.sites[right_site] = ComplexTensor::new(vec![keep, 2, cr], right)?;
        Ok(())
    }

    pub fn apply_gate_mut(&mut self, gate: &Gate, trunc: &Truncation) -> Result<()> {
        if let Some(q) = gate.qubits.iter().find(|&&q| q >= self.sites.len()) {
            bail!(Parameter, "qubit {} outside {}-site MPS", q, self.sites.len());
        }
        match gate.kind.arity() {
            1 => self.apply_single_qubit_mut(gate, gate.qubits[0]),
            2 => {
                let (a, b) = (gate.qubits[0], gate.qubits[1]);
                if a.abs_diff(b) != 1 {
                    bail!(Usage, "{} on non-adjacent qubits {} and {}", gate.kind.name(), a + 1, b + 1);
                }
                self.apply_two_qubit_mut(gate, a.min(b), trunc)
            }
            _ => bail!(Usage, "{} acts on more than two qubits", gate.kind.name()),
        }
    }

    pub fn amplitude(&self, bits: &[u8]) -> Result<Complex64> {
        check_bits(bits, self.sites.len())?;
        let mut v = vec![ONE];
        for (site, &s) in self.sites.iter().zip(bits) {
            v = chain_step(&v, site, s as usize);
        }
        Ok(v[0])
    }

    pub fn amplitude_at(&self, index: usize) -> Result<Complex64> {
        self.amplitude(&bits_from_index(index, self.sites.len()))
    }

    pub fn to_statevector(&self) -> Result<StateVector> {
        let n = self.sites.len();
        if n > MAX_DENSE_QUBITS {
            bail!(Capacity, "{}-site MPS exceeds dense capacity", n);
        }
        let (amps, bond) = contract_all(&self.sites);
        debug_assert_eq!(bond, 1);
        StateVector::normalized(amps)
    }

    /// Largest deviation of any site from the right-canonical identity.
    pub fn canonical_error(&self) -> f64 {
        self.sites.iter().map(site_canonical_error).fold(0.0, f64::max)
    }

    pub fn is_right_canonical(&self, tol: f64) -> bool {
        self.canonical_error() <= tol
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Export<'a> {
            format: &'static str,
            n_sites: usize,
            index_order: &'static str,
            tensors: &'a [ComplexTensor],
        }
        Ok(serde_json::to_string(&Export {
            format: "mps",
            n_sites: self.sites.len(),
            index_order: "left_bond,physical,right_bond",
            tensors: &self.sites,
        })?)
    }
}

fn site_canonical_error(t: &ComplexTensor) -> f64 {
    let l = t.shape()[0];
    let w = t.shape()[1] * t.shape()[2];
    let d = t.data();
    let mut worst: f64 = 0.0;
    for a in 0..l {
        for a2 in a..l {
            let s: Complex64 = d[a * w..(a + 1) * w].iter().zip(&d[a2 * w..(a2 + 1) * w]).map(|(x, y)| x * y.conj()).sum();
            let want = if a == a2 { ONE } else { ZERO };
            worst = worst.max((s - want).norm());
        }
    }
    worst
}

pub fn apply_single_qubit_mps(state: &MpsState, gate: &Gate, site: usize) -> Result<MpsState> {
    let mut out = state.clone();
    out.apply_single_qubit_mut(gate, site)?;
    Ok(out)
}

pub fn apply_two_qubit_mps(state: &MpsState, gate: &Gate, left_site: usize, chi_max: Option<usize>, svd_tol: f64) -> Result<MpsState> {
    let mut out = state.clone();
    out.apply_two_qubit_mut(gate, left_site, &Truncation { chi_max, svd_tol })?;
    Ok(out)
}

pub fn run_circuit_mps(circuit: &Circuit, chi_max: Option<usize>, svd_tol: f64) -> Result<MpsState> {
    let trunc = Truncation { chi_max, svd_tol };
    let mut state = product_state_mps(circuit.width())?;
    for gate in circuit.gates() {
        if gate.kind == GateKind::Cswap {
            bail!(Usage, "CSWAP is not supported by the MPS simulator");
        }
        state.apply_gate_mut(gate, &trunc)?;
    }
    Ok(state)
}

pub fn amplitude(state: &MpsState, bits: &[u8]) -> Result<Complex64> {
    state.amplitude(bits)
}

pub fn mps_to_statevector(state: &MpsState) -> Result<StateVector> {
    state.to_statevector()
}

pub fn check_right_canonical(state: &MpsState, tol: f64) -> bool {
    state.is_right_canonical(tol)
}

/// Reduced density operator of the first sites of a right-canonical MPS.
///
/// Stored as the kept ket tensors; the bra layer is their elementwise
/// conjugate and the two layers share the terminal bond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpoOperator {
    sites: Vec<ComplexTensor>,
}

pub const CANONICAL_TOL: f64 = 1e-8;

pub fn partial_trace_to_mpo(state: &MpsState, keep_first: usize) -> Result<MpoOperator> {
    let n = state.n_sites();
    if keep_first == 0 || keep_first >= n {
        bail!(Parameter, "keep_first {} must lie in 1..{}", keep_first, n);
    }
    for (k, site) in state.sites()[keep_first..].iter().enumerate() {
        let err = site_canonical_error(site);
        if err > CANONICAL_TOL {
            bail!(Consistency, "traced site {} violates right-canonical form by {:e}", keep_first + k, err);
        }
    }
    Ok(MpoOperator { sites: state.sites()[..keep_first].to_vec() })
}

impl MpoOperator {
    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn ket_tensors(&self) -> &[ComplexTensor] {
        &self.sites
    }

    pub fn bond_dimension(&self) -> usize {
        self.sites.iter().map(|s| s.shape()[2]).max().unwrap_or(1)
    }

    /// `<bra| rho |ket>`.
    pub fn element(&self, ket_bits: &[u8], bra_bits: &[u8]) -> Result<Complex64> {
        check_bits(ket_bits, self.sites.len())?;
        check_bits(bra_bits, self.sites.len())?;
        let mut vk = vec![ONE];
        let mut vb = vec![ONE];
        for ((site, &k), &b) in self.sites.iter().zip(ket_bits).zip(bra_bits) {
            vk = chain_step(&vk, site, k as usize);
            vb = chain_step(&vb, site, b as usize);
        }
        Ok(vb.iter().zip(&vk).map(|(b, k)| b * k.conj()).sum())
    }

    pub fn element_at(&self, ket_index: usize, bra_index: usize) -> Result<Complex64> {
        let n = self.sites.len();
        self.element(&bits_from_index(ket_index, n), &bits_from_index(bra_index, n))
    }

    pub fn trace(&self) -> Complex64 {
        // env[a, a'] = sum over kept bits of chain[a] * conj(chain[a'])
        let mut env = vec![ONE];
        let mut dim = 1usize;
        for site in &self.sites {
            let (l, r) = (site.shape()[0], site.shape()[2]);
            debug_assert_eq!(l, dim);
            let d = site.data();
            let mut next = vec![ZERO; r * r];
            for s in 0..2 {
                let slice = |a: usize| &d[(a * 2 + s) * r..(a * 2 + s + 1) * r];
                // tmp[a, b'] = sum_a' env[a, a'] conj(B_s[a', b'])
                let mut tmp = vec![ZERO; l * r];
                for a in 0..l {
                    for a2 in 0..l {
                        let e = env[a * l + a2];
                        if e == ZERO {
                            continue;
                        }
                        for (t, x) in tmp[a * r..(a + 1) * r].iter_mut().zip(slice(a2)) {
                            *t += e * x.conj();
                        }
                    }
                }
                for a in 0..l {
                    for (b, x) in slice(a).iter().enumerate() {
                        if *x == ZERO {
                            continue;
                        }
                        for (nx, t) in next[b * r..(b + 1) * r].iter_mut().zip(&tmp[a * r..(a + 1) * r]) {
                            *nx += x * t;
                        }
                    }
                }
            }
            env = next;
            dim = r;
        }
        (0..dim).map(|a| env[a * dim + a]).sum()
    }

    /// Doubled site operator `B[a,s,b] conj(B[a',s',b'])` with index order
    /// ((a, a'), s, s', (b, b')): `s` selects the row of rho and `s'` the column.
    /// The last kept site has its shared terminal bond summed, leaving a right extent of 1.
    pub fn site_operator(&self, l: usize) -> Result<ComplexTensor> {
        let Some(site) = self.sites.get(l) else {
            bail!(Parameter, "site {} outside {}-site MPO", l, self.sites.len());
        };
        let (cl, cr) = (site.shape()[0], site.shape()[2]);
        let last = l + 1 == self.sites.len();
        let out_r = if last { 1 } else { cr * cr };
        let mut out = ComplexTensor::zeros(vec![cl * cl, 2, 2, out_r]);
        for a in 0..cl {
            for a2 in 0..cl {
                for s in 0..2 {
                    for s2 in 0..2 {
                        for b in 0..cr {
                            for b2 in 0..cr {
                                if last && b != b2 {
                                    continue;
                                }
                                let v = site.get(&[a, s, b]) * site.get(&[a2, s2, b2]).conj();
                                let ridx = if last { 0 } else { b * cr + b2 };
                                let idx = [a * cl + a2, s, s2, ridx];
                                let cur = out.get(&idx);
                                out.set(&idx, cur + v);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Dense `rho` with `rho[i][j] = <i| rho |j>`.
    pub fn to_dense(&self) -> Result<DensityMatrix> {
        let n = self.sites.len();
        if 2 * n > MAX_DENSE_QUBITS {
            bail!(Capacity, "{}-site MPO exceeds dense capacity", n);
        }
        let (chains, bond) = contract_all(&self.sites);
        let d = 1usize << n;
        let mut entries = vec![ZERO; d * d];
        for i in 0..d {
            let ci = &chains[i * bond..(i + 1) * bond];
            for j in 0..d {
                let cj = &chains[j * bond..(j + 1) * bond];
                entries[i * d + j] = ci.iter().zip(cj).map(|(x, y)| x * y.conj()).sum();
            }
        }
        DensityMatrix::new(n, entries)
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Export<'a> {
            format: &'static str,
            n_sites: usize,
            index_order: &'static str,
            bra_layer: &'static str,
            tensors: &'a [ComplexTensor],
        }
        Ok(serde_json::to_string(&Export {
            format: "mpo",
            n_sites: self.sites.len(),
            index_order: "left_bond,physical,right_bond",
            bra_layer: "elementwise conjugate of the ket tensors; terminal right bond shared",
            tensors: &self.sites,
        })?)
    }
}

pub fn mpo_element(op: &MpoOperator, ket_bits: &[u8], bra_bits: &[u8]) -> Result<Complex64> {
    op.element(ket_bits, bra_bits)
}
