//! Open XXZ chain and its ground state.
//!
//! `H = sum_{l<L} [J (X_l X_{l+1} + Y_l Y_{l+1}) + Delta Z_l Z_{l+1}] + h sum_l Z_l`
//! with `Z|0> = +|0>`. The ground state comes from a restarted Lanczos
//! iteration with full reorthogonalization; the Hamiltonian is never stored.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};
use crate::statevector::{StateVector, MAX_DENSE_QUBITS};

pub const MAX_DENSE_HAMILTONIAN_SITES: usize = 12;
/// Second Ritz value closer than this to the ground energy marks the ground space as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XxzParams {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "Delta")]
    pub delta: f64,
    pub h: f64,
}

impl XxzParams {
    pub fn new(l: usize, j: f64, delta: f64, h: f64) -> Result<Self> {
        let p = Self { l, j, delta, h };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.l > MAX_DENSE_QUBITS {
            bail!(Capacity, "chain length {} outside 1..={}", self.l, MAX_DENSE_QUBITS);
        }
        if ![self.j, self.delta, self.h].iter().all(|c| c.is_finite()) {
            bail!(Parameter, "couplings must be finite");
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1 << self.l
    }

    fn diagonal(&self, index: usize) -> f64 {
        let l = self.l;
        let z = |site: usize| if (index >> (l - 1 - site)) & 1 == 0 { 1.0 } else { -1.0 };
        let field: f64 = (0..l).map(z).sum::<f64>() * self.h;
        let bonds: f64 = (0..l.saturating_sub(1)).map(|s| z(s) * z(s + 1)).sum::<f64>() * self.delta;
        field + bonds
    }

    /// `out = H v` on real vectors.
    fn apply_real(&self, v: &[f64], out: &mut [f64]) {
        let l = self.l;
        let hop = 2.0 * self.j;
        let kernel = |(i, o): (usize, &mut f64)| {
            let mut acc = self.diagonal(i) * v[i];
            if hop != 0.0 {
                for s in 0..l.saturating_sub(1) {
                    let pair = 0b11 << (l - 2 - s);
                    let bits = i & pair;
                    if bits != 0 && bits != pair {
                        acc += hop * v[i ^ pair];
                    }
                }
            }
            *o = acc;
        };
        if v.len() >= 1 << 12 {
            out.par_iter_mut().enumerate().for_each(kernel);
        } else {
            out.iter_mut().enumerate().for_each(kernel);
        }
    }
}

/// `H v` (unnormalized).
pub fn hamiltonian_matvec(params: &XxzParams, v: &StateVector) -> Result<Vec<Complex64>> {
    params.validate()?;
    if v.n_qubits() != params.l {
        bail!(Dimension, "{}-qubit vector for an L={} chain", v.n_qubits(), params.l);
    }
    let re: Vec<f64> = v.amplitudes().iter().map(|z| z.re).collect();
    let im: Vec<f64> = v.amplitudes().iter().map(|z| z.im).collect();
    let mut hre = vec![0.0; re.len()];
    let mut him = vec![0.0; im.len()];
    params.apply_real(&re, &mut hre);
    params.apply_real(&im, &mut him);
    Ok(hre.into_iter().zip(him).map(|(r, i)| Complex64::new(r, i)).collect())
}

/// Explicit Hamiltonian (row-major, real) assembled from Kronecker products of Pauli matrices.
pub fn dense_hamiltonian(params: &XxzParams) -> Result<Vec<f64>> {
    params.validate()?;
    if params.l > MAX_DENSE_HAMILTONIAN_SITES {
        bail!(Capacity, "dense Hamiltonian limited to L <= {}", MAX_DENSE_HAMILTONIAN_SITES);
    }
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let x = vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)];
    let y = vec![c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)];
    let z = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)];
    let id = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];

    fn kron(a: &[Complex64], da: usize, b: &[Complex64], db: usize) -> Vec<Complex64> {
        let d = da * db;
        let mut out = vec![Complex64::new(0.0, 0.0); d * d];
        for i in 0..da {
            for j in 0..da {
                for k in 0..db {
                    for m in 0..db {
                        out[(i * db + k) * d + j * db + m] = a[i * da + j] * b[k * db + m];
                    }
                }
            }
        }
        out
    }
    // Product of single-site operators placed on the given sites, identity elsewhere.
    let string = |ops: &[(usize, &Vec<Complex64>)]| -> Vec<Complex64> {
        let mut acc = vec![c(1.0, 0.0)];
        let mut d = 1;
        for site in 0..params.l {
            let op = ops.iter().find(|(s, _)| *s == site).map_or(&id, |(_, o)| *o);
            acc = kron(&acc, d, op, 2);
            d *= 2;
        }
        acc
    };

    let dim = params.dim();
    let mut h = vec![c(0.0, 0.0); dim * dim];
    let mut add = |term: Vec<Complex64>, w: f64| {
        for (hv, t) in h.iter_mut().zip(term) {
            *hv += t * w;
        }
    };
    for s in 0..params.l.saturating_sub(1) {
        add(string(&[(s, &x), (s + 1, &x)]), params.j);
        add(string(&[(s, &y), (s + 1, &y)]), params.j);
        add(string(&[(s, &z), (s + 1, &z)]), params.delta);
    }
    for s in 0..params.l {
        add(string(&[(s, &z)]), params.h);
    }
    debug_assert!(h.iter().all(|v| v.im == 0.0));
    Ok(h.into_iter().map(|v| v.re).collect())
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    pub vector: StateVector,
    pub params: XxzParams,
    /// `||H v - E v||`.
    pub residual: f64,
    /// Lowest eigenvalue orthogonal to `vector`, when it could be resolved.
    pub next_energy: Option<f64>,
    pub degenerate: bool,
}

impl GroundState {
    pub fn gap(&self) -> Option<f64> {
        self.next_energy.map(|e| e - self.energy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanczosConfig {
    pub tol: f64,
    pub max_restarts: usize,
    pub krylov_dim: usize,
    pub seed: u64,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        Self { tol: 1e-9, max_restarts: 50, krylov_dim: 80, seed: 0 }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(b, v);
        axpy(-c, b, v);
    }
}

/// Eigen-decomposition of a symmetric tridiagonal matrix by implicit QL.
/// Returns ascending eigenvalues and column eigenvectors `z[row][col]`.
pub(crate) fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n.saturating_sub(1)].copy_from_slice(&off[..n.saturating_sub(1)]);
    let mut z: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter <= 200, "tridiagonal QL failed to converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in z.iter_mut() {
                    let f = row[i + 1];
                    row[i + 1] = s * row[i] + c * f;
                    row[i] = c * row[i] - s * f;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let vals = order.iter().map(|&k| d[k]).collect();
    let vecs = z.iter().map(|row| order.iter().map(|&k| row[k]).collect()).collect();
    (vals, vecs)
}

struct LanczosOutcome {
    energy: f64,
    vector: Vec<f64>,
    residual: f64,
}

/// Lowest eigenpair of `H` restricted to the orthogonal complement of `deflate`.
fn lanczos_lowest(params: &XxzParams, cfg: &LanczosConfig, deflate: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Result<LanczosOutcome> {
    let dim = params.dim();
    let avail = dim - deflate.len();
    if avail == 0 {
        bail!(Parameter, "nothing left after deflation");
    }
    // Keep the stored Krylov basis under ~2 GiB.
    let mem_cap = ((1usize << 31) / (8 * dim)).max(8);
    let m_max = cfg.krylov_dim.max(2).min(avail).min(mem_cap);

    let mut start: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    project_out(&mut start, deflate);
    normalize(&mut start);

    let mut best = LanczosOutcome { energy: f64::NAN, vector: start.clone(), residual: f64::INFINITY };
    let mut hv = vec![0.0; dim];
    for _restart in 0..cfg.max_restarts.max(1) {
        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        loop {
            let j = basis.len() - 1;
            params.apply_real(&basis[j], &mut hv);
            let mut w = hv.clone();
            let alpha = dot(&basis[j], &w);
            alphas.push(alpha);
            // Full reorthogonalization, twice.
            for _ in 0..2 {
                project_out(&mut w, deflate);
                project_out(&mut w, &basis);
            }
            let beta = dot(&w, &w).sqrt();
            let scale = alphas.iter().chain(&betas).fold(1.0f64, |m, x| m.max(x.abs()));
            if beta <= 1e-13 * scale {
                break;
            }
            if basis.len() == m_max {
                betas.push(beta);
                break;
            }
            betas.push(beta);
            w.iter_mut().for_each(|x| *x /= beta);
            basis.push(w);
            // Cheap convergence probe every few steps.
            if basis.len().is_multiple_of(10) {
                let (_, vecs) = tridiagonal_eigen(&alphas, &betas);
                let k = alphas.len();
                let est = betas[k - 1] * vecs[k - 1][0].abs();
                if est < 0.1 * cfg.tol {
                    break;
                }
            }
        }
        let k = alphas.len();
        let (_, vecs) = tridiagonal_eigen(&alphas, &betas[..k - 1]);
        let mut ritz = vec![0.0; dim];
        for (i, b) in basis.iter().take(k).enumerate() {
            axpy(vecs[i][0], b, &mut ritz);
        }
        project_out(&mut ritz, deflate);
        normalize(&mut ritz);
        params.apply_real(&ritz, &mut hv);
        let energy = dot(&ritz, &hv);
        axpy(-energy, &ritz, &mut hv);
        let residual = dot(&hv, &hv).sqrt();
        if residual < best.residual {
            best = LanczosOutcome { energy, vector: ritz.clone(), residual };
        }
        if residual <= cfg.tol {
            return Ok(best);
        }
        start = ritz;
    }
    if best.residual <= cfg.tol {
        Ok(best)
    } else {
        Err(Error::Convergence { iterations: cfg.max_restarts, residual: best.residual })
    }
}

fn fix_phase(v: &mut [f64]) {
    let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-10 * peak).copied() {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

pub fn ground_state_lanczos(params: &XxzParams, tol: f64, max_iter: usize, seed: u64) -> Result<GroundState> {
    let cfg = LanczosConfig { tol, max_restarts: max_iter, seed, ..LanczosConfig::default() };
    ground_state_with(params, &cfg)
}

pub fn ground_state_with(params: &XxzParams, cfg: &LanczosConfig) -> Result<GroundState> {
    params.validate()?;
    if !(cfg.tol > 0.0) {
        bail!(Parameter, "Lanczos tolerance must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ground = lanczos_lowest(params, cfg, &[], &mut rng)?;
    let mut vector = ground.vector;
    fix_phase(&mut vector);

    // Second pass in the orthogonal complement resolves the next level.
    let next_energy =
        if params.dim() > 1 { lanczos_lowest(params, cfg, std::slice::from_ref(&vector), &mut rng).ok().map(|o| o.energy) } else { None };
    let degenerate = next_energy.is_some_and(|e| (e - ground.energy).abs() <= DEGENERACY_TOL);
    let amps = vector.into_iter().map(|x| Complex64::new(x, 0.0)).collect();
    Ok(GroundState {
        energy: ground.energy,
        vector: StateVector::normalized(amps)?,
        params: *params,
        residual: ground.residual,
        next_energy,
        degenerate,
    })
}

pub fn energy_expectation(state: &StateVector, params: &XxzParams) -> Result<f64> {
    let hv = hamiltonian_matvec(params, state)?;
    let e: Complex64 = state.amplitudes().iter().zip(&hv).map(|(a, b)| a.conj() * b).sum();
    Ok(e.re)
}
