//! Small dense complex-matrix layer: row-major storage, parallel matmul,
//! Kronecker products, Hilbert-Schmidt geometry, and wrappers around
//! nalgebra's hermitian eigendecomposition and SVD.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::{Error, Result};

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn scale(&self, s: C64) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    pub fn adjoint(&self) -> CMat {
        let mut out = CMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> CMat {
        let mut out = CMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        assert_eq!(self.rows, self.cols);
        (0..self.rows).map(|i| self.data[i * self.cols + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Largest absolute imaginary part over all entries.
    pub fn max_imag(&self) -> f64 {
        self.data.iter().map(|c| c.im.abs()).fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .map(|(&a, &b)| a * b)
                    .fold(ZERO, |s, v| s + v)
            })
            .collect()
    }

    /// (self + self^H) / 2.
    pub fn hermitize(&self) -> CMat {
        assert_eq!(self.rows, self.cols);
        let adj = self.adjoint();
        self.add(&adj).scale(C64::new(0.5, 0.0))
    }

}

/// Hilbert-Schmidt inner product Tr(a^H b).
pub fn hs_dot(a: &CMat, b: &CMat) -> C64 {
    assert_eq!((a.rows, a.cols), (b.rows, b.cols));
    a.data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| x.conj() * y)
        .fold(ZERO, |s, v| s + v)
}

/// Dense product a * b, parallel over output rows for larger sizes.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.cols, b.rows, "matmul dimension mismatch");
    let (m, kk, n) = (a.rows, a.cols, b.cols);
    let mut data = vec![ZERO; m * n];
    let row_work = |i: usize, orow: &mut [C64]| {
        let arow = &a.data[i * kk..(i + 1) * kk];
        for (k, &aik) in arow.iter().enumerate() {
            if aik.re == 0.0 && aik.im == 0.0 {
                continue;
            }
            let brow = &b.data[k * n..(k + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    };
    if m * n * kk > 1 << 21 {
        data.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, orow)| row_work(i, orow));
    } else {
        for (i, orow) in data.chunks_mut(n).enumerate() {
            row_work(i, orow);
        }
    }
    CMat { rows: m, cols: n, data }
}

/// Kronecker product, leftmost factor most significant.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let mut out = CMat::zeros(a.rows * b.rows, a.cols * b.cols);
    for i1 in 0..a.rows {
        for j1 in 0..a.cols {
            let av = a.data[i1 * a.cols + j1];
            if av.re == 0.0 && av.im == 0.0 {
                continue;
            }
            for i2 in 0..b.rows {
                let orow = (i1 * b.rows + i2) * out.cols + j1 * b.cols;
                let brow = i2 * b.cols;
                for j2 in 0..b.cols {
                    out.data[orow + j2] = av * b.data[brow + j2];
                }
            }
        }
    }
    out
}

fn to_na(m: &CMat) -> DMatrix<C64> {
    DMatrix::from_fn(m.rows, m.cols, |i, j| m.get(i, j))
}

/// Eigendecomposition of a hermitian matrix. Returns eigenvalues in
/// ascending order and the matching orthonormal eigenvectors as columns.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    assert_eq!(m.rows, m.cols);
    if m.rows == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let se = nalgebra::SymmetricEigen::new(to_na(&m.hermitize()));
    let mut order: Vec<usize> = (0..m.rows).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(m.rows, m.rows, |i, j| se.eigenvectors[(i, order[j])]);
    (vals, vecs)
}

/// Eigenvalues of a real symmetric matrix (ascending) with eigenvectors.
pub fn sym_eigen(entries: &[f64], side: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(entries.len(), side * side);
    let m = DMatrix::from_fn(side, side, |i, j| {
        0.5 * (entries[i * side + j] + entries[j * side + i])
    });
    let se = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..side).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = vec![0.0; side * side];
    for (jj, &col) in order.iter().enumerate() {
        for i in 0..side {
            vecs[i * side + jj] = se.eigenvectors[(i, col)];
        }
    }
    (vals, vecs)
}

/// Singular values (ascending) and an orthonormal basis of the numerical
/// kernel (right singular vectors with singular value below `tol`).
pub fn singular_kernel(m: &CMat, tol: f64) -> Result<(Vec<f64>, Vec<Vec<C64>>)> {
    // the thin SVD only carries min(rows, cols) right singular vectors;
    // pad with zero rows so the whole kernel is represented
    let padded;
    let m = if m.rows < m.cols {
        let mut p = CMat::zeros(m.cols, m.cols);
        for i in 0..m.rows {
            for j in 0..m.cols {
                p.set(i, j, m.get(i, j));
            }
        }
        padded = p;
        &padded
    } else {
        m
    };
    let svd = nalgebra::SVD::new(to_na(m), false, true);
    let vt = svd
        .v_t
        .ok_or_else(|| Error::Domain("SVD did not return right singular vectors".into()))?;
    let mut sv: Vec<(f64, usize)> = svd
        .singular_values
        .iter()
        .copied()
        .zip(0..)
        .collect();
    sv.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let values: Vec<f64> = sv.iter().map(|p| p.0).collect();
    let mut kernel = Vec::new();
    for &(s, row) in &sv {
        if s < tol {
            // rows of v_t are the conjugated right singular vectors
            let v: Vec<C64> = (0..m.cols).map(|j| vt[(row, j)].conj()).collect();
            kernel.push(v);
        }
    }
    Ok((values, kernel))
}

/// Operator (spectral) norm. Exact eigendecomposition of m^H m for small
/// sizes, deterministic power iteration above.
pub fn spectral_norm(m: &CMat) -> f64 {
    let gram_side = m.cols.min(m.rows);
    let w = if m.cols <= m.rows {
        matmul(&m.adjoint(), m)
    } else {
        matmul(m, &m.adjoint())
    };
    if gram_side <= 128 {
        let (vals, _) = hermitian_eigen(&w);
        return vals.last().copied().unwrap_or(0.0).max(0.0).sqrt();
    }
    // power iteration on the PSD matrix w
    let n = w.rows;
    let mut x: Vec<C64> = (0..n)
        .map(|i| C64::new(1.0 / (1.0 + i as f64), 0.0))
        .collect();
    let norm = |v: &[C64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let nx = norm(&x);
    x.iter_mut().for_each(|c| *c /= nx);
    let mut lambda = 0.0f64;
    for _ in 0..5000 {
        let y = w.matvec(&x);
        let ny = norm(&y);
        if ny == 0.0 {
            return 0.0;
        }
        let rayleigh: f64 = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a.conj() * b).re)
            .sum();
        x = y;
        x.iter_mut().for_each(|c| *c /= ny);
        if (rayleigh - lambda).abs() <= 1e-14 * rayleigh.abs().max(1e-300) {
            lambda = rayleigh;
            break;
        }
        lambda = rayleigh;
    }
    lambda.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_and_kron() {
        let a = CMat::from_fn(2, 2, |i, j| C64::new((i * 2 + j) as f64, 1.0));
        let id = CMat::identity(2);
        assert_eq!(matmul(&a, &id), a);
        let k = kron(&id, &a);
        assert_eq!(k.get(0, 1), a.get(0, 1));
        assert_eq!(k.get(2, 3), a.get(0, 1));
        assert_eq!(k.get(1, 2), ZERO);
    }

    #[test]
    fn hermitian_eigen_known() {
        // [[2, i], [-i, 2]] has eigenvalues 1 and 3
        let mut m = CMat::zeros(2, 2);
        m.set(0, 0, C64::new(2.0, 0.0));
        m.set(0, 1, C64::new(0.0, 1.0));
        m.set(1, 0, C64::new(0.0, -1.0));
        m.set(1, 1, C64::new(2.0, 0.0));
        let (vals, vecs) = hermitian_eigen(&m);
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        // eigenvector residual
        for j in 0..2 {
            let v: Vec<C64> = (0..2).map(|i| vecs.get(i, j)).collect();
            let mv = m.matvec(&v);
            let resid: f64 = mv
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b * C64::new(vals[j], 0.0)).norm())
                .sum();
            assert!(resid < 1e-12);
        }
    }

    #[test]
    fn kernel_of_rank_deficient() {
        // 3x3 rank-2 matrix
        let m = CMat::from_fn(3, 3, |i, j| C64::new((i + j) as f64, 0.0));
        let (vals, kernel) = singular_kernel(&m, 1e-10).unwrap();
        assert_eq!(kernel.len(), 1);
        assert!(vals[0] < 1e-12);
        let mv = m.matvec(&kernel[0]);
        assert!(mv.iter().map(|c| c.norm()).sum::<f64>() < 1e-12);
    }

    #[test]
    fn spectral_norm_matches_eigen() {
        let m = CMat::from_fn(5, 3, |i, j| {
            C64::new((i as f64 - j as f64) * 0.3, (i + j) as f64 * 0.1)
        });
        let s = spectral_norm(&m);
        let w = matmul(&m.adjoint(), &m);
        let (vals, _) = hermitian_eigen(&w);
        assert!((s - vals.last().unwrap().sqrt()).abs() < 1e-10);
    }
}
