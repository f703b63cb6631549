//! Dense complex tensors stored flat in row-major order.
//!
//! Reshapes only swap shape metadata. Contraction permutes both operands into
//! matrix form and runs a single matrix product.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexTensor {
    shape: Vec<usize>,
    data: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct SvdResult {
    /// m x k, orthonormal columns.
    pub u: ComplexTensor,
    /// Length k = min(m, n), descending.
    pub s: Vec<f64>,
    /// k x n, orthonormal rows.
    pub vdag: ComplexTensor,
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut st = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        st[i] = st[i + 1] * shape[i + 1];
    }
    st
}

impl ComplexTensor {
    pub fn new(shape: Vec<usize>, data: Vec<Complex64>) -> Result<Self> {
        if shape.contains(&0) {
            bail!(Dimension, "zero extent in shape {:?}", shape);
        }
        let size: usize = shape.iter().product();
        if size != data.len() {
            bail!(Dimension, "shape {:?} needs {} entries, got {}", shape, size, data.len());
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            bail!(Domain, "tensor entries must be finite");
        }
        Ok(Self { shape, data })
    }

    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let size = shape.iter().product();
        Self { shape, data: vec![ZERO; size] }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = ONE;
        }
        t
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            bail!(Dimension, "ragged rows");
        }
        Self::new(vec![m, n], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &e)| {
            debug_assert!(i < e);
            acc * e + i
        })
    }

    pub fn get(&self, index: &[usize]) -> Complex64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: Complex64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    pub fn scale(&self, alpha: Complex64) -> Self {
        Self::from_parts_unchecked(self.shape.clone(), self.data.iter().map(|z| z * alpha).collect())
    }

    pub fn conj(&self) -> Self {
        Self::from_parts_unchecked(self.shape.clone(), self.data.iter().map(|z| z.conj()).collect())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape, "shape mismatch in max_abs_diff");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn reshape(&self, new_shape: Vec<usize>) -> Result<Self> {
        let size: usize = new_shape.iter().product();
        if size != self.data.len() || new_shape.contains(&0) {
            bail!(Dimension, "cannot reshape {:?} into {:?}", self.shape, new_shape);
        }
        Ok(Self::from_parts_unchecked(new_shape, self.data.clone()))
    }

    /// Reorders axes so that axis `perm[k]` of `self` becomes axis `k`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if perm.len() != r || perm.iter().any(|&p| p >= r || std::mem::replace(&mut seen[p], true)) {
            bail!(Dimension, "invalid permutation {:?} for rank {}", perm, r);
        }
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return Ok(self.clone());
        }
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let old_strides = strides(&self.shape);
        let src_strides: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
        let mut out = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; r];
        let mut src = 0usize;
        for _ in 0..self.data.len() {
            out.push(self.data[src]);
            for ax in (0..r).rev() {
                idx[ax] += 1;
                src += src_strides[ax];
                if idx[ax] < new_shape[ax] {
                    break;
                }
                src -= src_strides[ax] * new_shape[ax];
                idx[ax] = 0;
            }
        }
        Ok(Self::from_parts_unchecked(new_shape, out))
    }

    /// Sums over the paired axes; the result keeps the free axes of `a`
    /// followed by the free axes of `b`, each in their original order.
    pub fn contract(a: &Self, axes_a: &[usize], b: &Self, axes_b: &[usize]) -> Result<Self> {
        if axes_a.len() != axes_b.len() {
            bail!(Dimension, "contracting {} axes against {}", axes_a.len(), axes_b.len());
        }
        for (&i, &j) in axes_a.iter().zip(axes_b) {
            if i >= a.rank() || j >= b.rank() {
                bail!(Dimension, "axis pair ({}, {}) out of range", i, j);
            }
            if a.shape[i] != b.shape[j] {
                bail!(Dimension, "extent mismatch on axes ({}, {}): {} vs {}", i, j, a.shape[i], b.shape[j]);
            }
        }
        let free_a: Vec<usize> = (0..a.rank()).filter(|k| !axes_a.contains(k)).collect();
        let free_b: Vec<usize> = (0..b.rank()).filter(|k| !axes_b.contains(k)).collect();
        let perm_a: Vec<usize> = free_a.iter().chain(axes_a).copied().collect();
        let perm_b: Vec<usize> = axes_b.iter().chain(&free_b).copied().collect();
        let m: usize = free_a.iter().map(|&k| a.shape[k]).product();
        let k: usize = axes_a.iter().map(|&k| a.shape[k]).product();
        let n: usize = free_b.iter().map(|&k| b.shape[k]).product();
        let pa = a.permute(&perm_a)?;
        let pb = b.permute(&perm_b)?;
        let data = matmul_raw(&pa.data, &pb.data, m, k, n);
        let shape: Vec<usize> = free_a.iter().map(|&i| a.shape[i]).chain(free_b.iter().map(|&j| b.shape[j])).collect();
        Ok(Self::from_parts_unchecked(shape, data))
    }

    fn as_matrix_dims(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [m, n] => Ok((m, n)),
            _ => Err(Error::Dimension(format!("expected rank-2 tensor, got shape {:?}", self.shape))),
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.as_matrix_dims()?;
        let (k2, n) = other.as_matrix_dims()?;
        if k != k2 {
            bail!(Dimension, "matmul of {}x{} by {}x{}", m, k, k2, n);
        }
        Ok(Self::from_parts_unchecked(vec![m, n], matmul_raw(&self.data, &other.data, m, k, n)))
    }

    pub fn adjoint(&self) -> Result<Self> {
        self.as_matrix_dims()?;
        Ok(self.permute(&[1, 0])?.conj())
    }

    /// Thin SVD by one-sided (Hestenes) Jacobi rotations.
    pub fn svd(&self) -> Result<SvdResult> {
        let (m, n) = self.as_matrix_dims()?;
        if m >= n {
            let (u, s, v) = jacobi_svd(&self.data, m, n);
            let u = Self::from_parts_unchecked(vec![m, n], u);
            let vdag = Self::from_parts_unchecked(vec![n, n], v).adjoint()?;
            Ok(SvdResult { u, s, vdag })
        } else {
            // A = (A^dagger)^dagger = (U S V^dagger)^dagger = V S U^dagger
            let at = self.adjoint()?;
            let (u, s, v) = jacobi_svd(&at.data, n, m);
            let vdag = Self::from_parts_unchecked(vec![n, m], u).adjoint()?;
            let u = Self::from_parts_unchecked(vec![m, m], v);
            Ok(SvdResult { u, s, vdag })
        }
    }
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> ComplexTensor {
        let (m, k) = (self.u.shape[0], self.u.shape[1]);
        let mut us = self.u.clone();
        for i in 0..m {
            for j in 0..k {
                us.data[i * k + j] *= self.s[j];
            }
        }
        us.matmul(&self.vdag).expect("svd factor shapes agree")
    }
}

pub(crate) fn matmul_raw(a: &[Complex64], b: &[Complex64], m: usize, k: usize, n: usize) -> Vec<Complex64> {
    let mut out = vec![ZERO; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == ZERO {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// One-sided Jacobi on an m x n matrix with m >= n. Returns (U m x n, s, V n x n),
/// all row-major, with s sorted descending.
fn jacobi_svd(a: &[Complex64], m: usize, n: usize) -> (Vec<Complex64>, Vec<f64>, Vec<Complex64>) {
    // Work on columns, stored column-major for contiguous access.
    let mut cols: Vec<Vec<Complex64>> = (0..n).map(|j| (0..m).map(|i| a[i * n + j]).collect()).collect();
    let mut vcols: Vec<Vec<Complex64>> = (0..n).map(|j| (0..n).map(|i| if i == j { ONE } else { ZERO }).collect()).collect();

    const MAX_SWEEPS: usize = 80;
    let eps = f64::EPSILON;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = ZERO;
                    for (x, y) in cp.iter().zip(cq) {
                        alpha += x.norm_sqr();
                        beta += y.norm_sqr();
                        gamma += x.conj() * y;
                    }
                    (alpha, beta, gamma)
                };
                let g = gamma.norm();
                if g == 0.0 || g <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // Absorb the phase of gamma into column q, then rotate as in the real case.
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for block in [&mut cols, &mut vcols] {
                    let (lo, hi) = block.split_at_mut(q);
                    let (cp, cq) = (&mut lo[p], &mut hi[0]);
                    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                        let yq = *y * phase;
                        let xp = *x;
                        *x = xp * c - yq * s;
                        *y = xp * s + yq * c;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));

    let smax = norms.iter().cloned().fold(0.0, f64::max);
    let null_cut = smax * (m.max(n) as f64) * eps;

    let mut ucols: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for &j in &order {
        let nj = norms[j];
        if nj > null_cut && nj > 0.0 {
            ucols.push(cols[j].iter().map(|z| z / nj).collect());
            s.push(nj);
        } else {
            s.push(0.0);
            ucols.push(Vec::new());
            pending.push(ucols.len() - 1);
        }
    }
    // Complete U for (numerically) zero singular values with Gram-Schmidt on basis vectors.
    let mut candidate = 0;
    for slot in pending {
        loop {
            assert!(candidate < m, "basis completion ran out of candidates");
            let mut v: Vec<Complex64> = (0..m).map(|i| if i == candidate { ONE } else { ZERO }).collect();
            candidate += 1;
            for _ in 0..2 {
                for u in ucols.iter().filter(|u| !u.is_empty()) {
                    let proj: Complex64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                    for (vi, ui) in v.iter_mut().zip(u) {
                        *vi -= proj * ui;
                    }
                }
            }
            let nv = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if nv > 1e-6 {
                ucols[slot] = v.into_iter().map(|z| z / nv).collect();
                break;
            }
        }
    }

    let mut u = vec![ZERO; m * n];
    let mut v = vec![ZERO; n * n];
    for (k, &j) in order.iter().enumerate() {
        for i in 0..m {
            u[i * n + k] = ucols[k][i];
        }
        for i in 0..n {
            v[i * n + k] = vcols[j][i];
        }
    }
    (u, s, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> ComplexTensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        ComplexTensor::new(shape, data).unwrap()
    }

    fn naive_matmul(a: &ComplexTensor, b: &ComplexTensor) -> ComplexTensor {
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = ComplexTensor::zeros(vec![m, n]);
        for i in 0..m {
            for j in 0..n {
                let mut acc = ZERO;
                for p in 0..k {
                    acc += a.get(&[i, p]) * b.get(&[p, j]);
                }
                out.set(&[i, j], acc);
            }
        }
        out
    }

    #[test]
    fn contract_identity_and_orthogonality() {
        let id = ComplexTensor::identity(2);
        let v = ComplexTensor::new(vec![2], vec![c(0.3, -1.0), c(2.0, 0.5)]).unwrap();
        let out = ComplexTensor::contract(&id, &[1], &v, &[0]).unwrap();
        assert_eq!(out, v);

        let row = ComplexTensor::new(vec![2], vec![ONE, ZERO]).unwrap();
        let col = ComplexTensor::new(vec![2], vec![ZERO, ONE]).unwrap();
        let s = ComplexTensor::contract(&row, &[0], &col, &[0]).unwrap();
        assert!(s.shape().is_empty());
        assert_eq!(s.data(), &[ZERO]);
    }

    #[test]
    fn contract_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(vec![2, 3], &mut rng);
        let b = random(vec![3, 4], &mut rng);
        let got = ComplexTensor::contract(&a, &[1], &b, &[0]).unwrap();
        assert!(got.max_abs_diff(&naive_matmul(&a, &b)) < 1e-14);
        // contracting a's first axis sees a^T
        let at = a.permute(&[1, 0]).unwrap();
        let b2 = random(vec![2, 5], &mut rng);
        let got = ComplexTensor::contract(&a, &[0], &b2, &[0]).unwrap();
        assert!(got.max_abs_diff(&naive_matmul(&at, &b2)) < 1e-14);
    }

    #[test]
    fn contract_rejects_extent_mismatch() {
        let a = ComplexTensor::zeros(vec![2, 3]);
        let b = ComplexTensor::zeros(vec![2, 3]);
        assert!(matches!(ComplexTensor::contract(&a, &[1], &b, &[0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn reshape_is_row_major() {
        let data: Vec<Complex64> = (0..8).map(|i| c(i as f64, 0.0)).collect();
        let t = ComplexTensor::new(vec![2, 2, 2], data).unwrap();
        let r = t.reshape(vec![2, 4]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    assert_eq!(t.get(&[i, j, k]), r.get(&[i, 2 * j + k]));
                }
            }
        }
        let flat = ComplexTensor::new(vec![4], (0..4).map(|i| c(i as f64, 1.0)).collect()).unwrap();
        let sq = flat.reshape(vec![2, 2]).unwrap();
        assert_eq!(sq.data(), flat.data());
        assert_eq!(sq.reshape(vec![4]).unwrap().reshape(vec![2, 2]).unwrap(), sq);
        assert!(matches!(flat.reshape(vec![3]), Err(Error::Dimension(_))));
    }

    #[test]
    fn new_rejects_bad_input() {
        assert!(ComplexTensor::new(vec![2], vec![ONE]).is_err());
        assert!(ComplexTensor::new(vec![1], vec![c(f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn svd_small_cases() {
        let s = ComplexTensor::identity(2).svd().unwrap();
        assert_eq!(s.s, vec![1.0, 1.0]);
        let d = ComplexTensor::from_rows(&[vec![c(3.0, 0.0), ZERO], vec![ZERO, ZERO]]).unwrap();
        let r = d.svd().unwrap();
        assert_eq!(r.s, vec![3.0, 0.0]);
        let uu = r.u.adjoint().unwrap().matmul(&r.u).unwrap();
        assert!(uu.max_abs_diff(&ComplexTensor::identity(2)) < 1e-12);
        assert!(r.reconstruct().max_abs_diff(&d) < 1e-14);
        assert!(matches!(ComplexTensor::zeros(vec![2, 2, 2]).svd(), Err(Error::Dimension(_))));
    }

    #[test]
    fn svd_wide_and_tall() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for shape in [vec![3, 7], vec![7, 3], vec![1, 5], vec![5, 1]] {
            let a = random(shape.clone(), &mut rng);
            let r = a.svd().unwrap();
            assert_eq!(r.s.len(), shape[0].min(shape[1]));
            assert!(r.reconstruct().max_abs_diff(&a) < 1e-12);
        }
    }

    #[test]
    fn svd_matches_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (m, n) in [(4, 4), (6, 3), (2, 8), (9, 5)] {
            let a = random(vec![m, n], &mut rng);
            let mut got = a.svd().unwrap().s;
            let oracle = nalgebra::DMatrix::from_row_slice(m, n, a.data());
            let mut want: Vec<f64> = oracle.singular_values().iter().copied().collect();
            got.sort_by(|x, y| y.total_cmp(x));
            want.sort_by(|x, y| y.total_cmp(x));
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12, "{m}x{n}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn svd_values_are_sorted_and_unitaries_have_unit_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        // The U factor of any square matrix is unitary.
        let q = random(vec![6, 6], &mut rng).svd().unwrap().u;
        let r = q.svd().unwrap();
        assert!(r.s.iter().all(|s| (s - 1.0).abs() < 1e-12));
        let r = random(vec![5, 8], &mut rng).svd().unwrap();
        assert!(r.s.windows(2).all(|w| w[0] >= w[1]));
        assert!(r.s.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn contract_is_bilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let (a1, a2) = (random(vec![2, 3, 4], &mut rng), random(vec![2, 3, 4], &mut rng));
        let b = random(vec![4, 3, 5], &mut rng);
        let (x, y) = (c(0.7, -1.2), c(-0.4, 0.3));
        let mut mix = a1.scale(x);
        for (m, v) in mix.data_mut().iter_mut().zip(a2.data()) {
            *m += y * v;
        }
        let lhs = ComplexTensor::contract(&mix, &[1, 2], &b, &[1, 0]).unwrap();
        let mut rhs = ComplexTensor::contract(&a1, &[1, 2], &b, &[1, 0]).unwrap().scale(x);
        let t2 = ComplexTensor::contract(&a2, &[1, 2], &b, &[1, 0]).unwrap().scale(y);
        for (r, v) in rhs.data_mut().iter_mut().zip(t2.data()) {
            *r += v;
        }
        assert_eq!(lhs.shape(), &[2, 5]);
        assert!(lhs.max_abs_diff(&rhs) < 1e-13);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(100))]
        #[test]
        fn svd_reconstructs(m in 1usize..9, n in 1usize..9, seed in proptest::prelude::any::<u64>()) {
            let a = random(vec![m, n], &mut ChaCha8Rng::seed_from_u64(seed));
            let r = a.svd().unwrap();
            proptest::prop_assert!(r.reconstruct().max_abs_diff(&a) < 1e-12);
            let uu = r.u.adjoint().unwrap().matmul(&r.u).unwrap();
            proptest::prop_assert!(uu.max_abs_diff(&ComplexTensor::identity(m.min(n))) < 1e-12);
            let vv = r.vdag.matmul(&r.vdag.adjoint().unwrap()).unwrap();
            proptest::prop_assert!(vv.max_abs_diff(&ComplexTensor::identity(m.min(n))) < 1e-12);
        }
    }
}
