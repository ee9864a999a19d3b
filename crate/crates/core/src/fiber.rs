//! Brute-force ground truth: concrete matrices on (C^N)^(tensor n)
//! realizing diagrams, Jones-Wenzl projectors, the rotation map, the
//! doubly-traceless subspaces B(H_n)^oo, embedded operators X_{i,j}, Gram
//! entries, traced projectors Pi_{a,b,c}, kappa constants and convolution
//! products.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64 as C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diagram::{TLDiagram, TLElement};
use crate::gram::GramBlock;
use crate::jones_wenzl::jw;
use crate::linalg::{hermitian_eigen, hs_dot, kron, matmul, spectral_norm, CMat, ONE, ZERO};
use crate::scalars::{coeff_abc, qdim, RecCoeffParams, ScalarContext};
use crate::{Error, Result};

/// Hard strand budget: no realized space larger than 3^8.
pub const STRAND_BUDGET: usize = 6561;
/// Dense matrices are only materialized up to this side.
const DENSE_SIDE_BUDGET: usize = 2187;

/// A complex matrix acting between tensor powers of C^N.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    /// Fiber dimension N.
    pub n_fiber: usize,
    /// Domain strand count (diagram top).
    pub strands_in: u16,
    /// Codomain strand count (diagram bottom).
    pub strands_out: u16,
    /// N^strands_out x N^strands_in matrix.
    pub mat: CMat,
}

impl DenseOperator {
    pub fn is_square(&self) -> bool {
        self.strands_in == self.strands_out
    }

    pub fn strands(&self) -> Result<u16> {
        if !self.is_square() {
            return Err(Error::ArityMismatch(format!(
                "expected a square operator, got {} -> {}",
                self.strands_in, self.strands_out
            )));
        }
        Ok(self.strands_in)
    }
}

fn fiber_n(ctx: &ScalarContext) -> Result<usize> {
    ctx.n_int
        .map(|n| n as usize)
        .ok_or_else(|| Error::Domain("fiber oracle needs an integer-N context".into()))
}

pub(crate) fn pow_checked(n_fiber: usize, strands: u16) -> Result<usize> {
    let mut p = 1usize;
    for _ in 0..strands {
        p = p.saturating_mul(n_fiber);
        if p > STRAND_BUDGET {
            return Err(Error::BudgetExceeded(format!(
                "{n_fiber}^{strands} exceeds the strand budget {STRAND_BUDGET}"
            )));
        }
    }
    Ok(p)
}

/// 0/1 realization of a single diagram, stored as (row, col) index pairs.
#[derive(Debug, Clone)]
pub struct SparseReal {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(u32, u32)>,
}

/// Realizes a single diagram: the entry at (bottom index, top index) is 1
/// iff the fiber indices agree within each block of the pairing.
pub fn realize_diagram(d: &TLDiagram, n_fiber: usize) -> Result<SparseReal> {
    let top = d.top() as usize;
    let bot = d.bot() as usize;
    let rows = pow_checked(n_fiber, d.bot())?;
    let cols = pow_checked(n_fiber, d.top())?;
    let pairs = d.pairs();
    let npairs = pairs.len();
    let mut pair_of = vec![0usize; top + bot];
    for (pi, &(a, b)) in pairs.iter().enumerate() {
        pair_of[a as usize] = pi;
        pair_of[b as usize] = pi;
    }
    let mut count = 1usize;
    for _ in 0..npairs {
        count = count.saturating_mul(n_fiber);
        if count > STRAND_BUDGET {
            return Err(Error::BudgetExceeded(
                "diagram realization exceeds the strand budget".into(),
            ));
        }
    }
    let mut entries = Vec::with_capacity(count);
    let mut digits = vec![0usize; npairs.max(1)];
    for _ in 0..count {
        let mut col = 0usize;
        for p in 0..top {
            col = col * n_fiber + digits[pair_of[p]];
        }
        let mut row = 0usize;
        for p in top..top + bot {
            row = row * n_fiber + digits[pair_of[p]];
        }
        entries.push((row as u32, col as u32));
        // odometer
        for d in digits.iter_mut() {
            *d += 1;
            if *d < n_fiber {
                break;
            }
            *d = 0;
        }
    }
    Ok(SparseReal { rows, cols, entries })
}

/// Realizes a linear combination of diagrams as a dense matrix.
pub fn realize(e: &TLElement, n_fiber: usize) -> Result<DenseOperator> {
    if n_fiber < 2 {
        return Err(Error::Domain("fiber dimension must be at least 2".into()));
    }
    let rows = pow_checked(n_fiber, e.bot())?;
    let cols = pow_checked(n_fiber, e.top())?;
    if rows.max(cols) > DENSE_SIDE_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "dense realization of side {} exceeds {DENSE_SIDE_BUDGET}; use the sparse interface",
            rows.max(cols)
        )));
    }
    let mut mat = CMat::zeros(rows, cols);
    for (d, c) in e.terms() {
        let sp = realize_diagram(d, n_fiber)?;
        for &(r, cl) in &sp.entries {
            mat.add_at(r as usize, cl as usize, c);
        }
    }
    Ok(DenseOperator {
        n_fiber,
        strands_in: e.top(),
        strands_out: e.bot(),
        mat,
    })
}

/// Applies the realization of `e` to a vector without materializing it.
pub fn apply_element(e: &TLElement, n_fiber: usize, x: &[C64]) -> Result<Vec<C64>> {
    let rows = pow_checked(n_fiber, e.bot())?;
    let cols = pow_checked(n_fiber, e.top())?;
    if x.len() != cols {
        return Err(Error::ArityMismatch("apply_element: vector length".into()));
    }
    let mut y = vec![ZERO; rows];
    for (d, c) in e.terms() {
        let sp = realize_diagram(d, n_fiber)?;
        for &(r, cl) in &sp.entries {
            y[r as usize] += c * x[cl as usize];
        }
    }
    Ok(y)
}

/// Matrix trace of the realization of `e`, evaluated by enumerating the
/// diagonal of each diagram's sparse pattern (independently of the
/// diagram-closure loop count).
pub fn realized_trace(e: &TLElement, n_fiber: usize) -> Result<C64> {
    if e.top() != e.bot() {
        return Err(Error::ArityMismatch("trace needs a square element".into()));
    }
    let mut total = ZERO;
    for (d, c) in e.terms() {
        let sp = realize_diagram(d, n_fiber)?;
        let diag = sp.entries.iter().filter(|&&(r, cl)| r == cl).count();
        total += c * C64::new(diag as f64, 0.0);
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// strand-aware dense helpers

/// (id x Tr_b): traces out the last b strands of a square operator.
pub fn partial_trace_last(op: &DenseOperator, b: u16) -> Result<DenseOperator> {
    let n = op.strands()?;
    if b > n {
        return Err(Error::Domain("cannot trace more strands than present".into()));
    }
    let nb = op.n_fiber.pow(b as u32);
    let s2 = op.n_fiber.pow((n - b) as u32);
    let mut out = CMat::zeros(s2, s2);
    for r in 0..s2 {
        for c in 0..s2 {
            let mut acc = ZERO;
            for t in 0..nb {
                acc += op.mat.get(r * nb + t, c * nb + t);
            }
            out.set(r, c, acc);
        }
    }
    Ok(DenseOperator {
        n_fiber: op.n_fiber,
        strands_in: n - b,
        strands_out: n - b,
        mat: out,
    })
}

/// (Tr_b x id): traces out the first b strands of a square operator.
pub fn partial_trace_first(op: &DenseOperator, b: u16) -> Result<DenseOperator> {
    let n = op.strands()?;
    if b > n {
        return Err(Error::Domain("cannot trace more strands than present".into()));
    }
    let nb = op.n_fiber.pow(b as u32);
    let s2 = op.n_fiber.pow((n - b) as u32);
    let mut out = CMat::zeros(s2, s2);
    for t in 0..nb {
        for r in 0..s2 {
            for c in 0..s2 {
                out.add_at(r, c, op.mat.get(t * s2 + r, t * s2 + c));
            }
        }
    }
    Ok(DenseOperator {
        n_fiber: op.n_fiber,
        strands_in: n - b,
        strands_out: n - b,
        mat: out,
    })
}

/// (id_a x Tr_b x id_c): traces out the middle b strands.
fn partial_trace_middle(mat: &CMat, n_fiber: usize, a: u16, b: u16, c: u16) -> CMat {
    let na = n_fiber.pow(a as u32);
    let nb = n_fiber.pow(b as u32);
    let nc = n_fiber.pow(c as u32);
    let side = na * nc;
    let mut out = CMat::zeros(side, side);
    for ra in 0..na {
        for rc in 0..nc {
            for ca in 0..na {
                for cc in 0..nc {
                    let mut acc = ZERO;
                    for t in 0..nb {
                        acc += mat.get((ra * nb + t) * nc + rc, (ca * nb + t) * nc + cc);
                    }
                    out.set(ra * nc + rc, ca * nc + cc, acc);
                }
            }
        }
    }
    out
}

/// (id_i x X x id_j) * P computed without materializing the Kronecker
/// factor; X is k-strand, P has N^(i+k+j) rows.
fn kron_mid_apply_left(x: &CMat, i: u16, j: u16, n_fiber: usize, p: &CMat) -> CMat {
    let nk = x.rows();
    let ni = n_fiber.pow(i as u32);
    let nj = n_fiber.pow(j as u32);
    let side = ni * nk * nj;
    assert_eq!(p.rows(), side);
    let cols = p.cols();
    let mut out = CMat::zeros(side, cols);
    for aa in 0..ni {
        for xx in 0..nk {
            for y in 0..nk {
                let w = x.get(xx, y);
                if w.re == 0.0 && w.im == 0.0 {
                    continue;
                }
                for bb in 0..nj {
                    let orow = (aa * nk + xx) * nj + bb;
                    let prow = (aa * nk + y) * nj + bb;
                    let (od, pd) = (orow * cols, prow * cols);
                    for cidx in 0..cols {
                        out.add_at(orow, cidx, w * p.data()[pd + cidx]);
                    }
                    let _ = od;
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// cached dense Jones-Wenzl projectors and H_n isometries

type FiberKey = (u16, u32);

fn jw_dense_cache() -> &'static Mutex<HashMap<FiberKey, Arc<CMat>>> {
    static CACHE: OnceLock<Mutex<HashMap<FiberKey, Arc<CMat>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Dense realization of P_n, cached by (n, N).
pub fn jw_dense(n: u16, ctx: &ScalarContext) -> Result<Arc<CMat>> {
    let nf = fiber_n(ctx)?;
    let key = (n, nf as u32);
    if let Some(hit) = jw_dense_cache().lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }
    let p = if n == 0 {
        CMat::identity(1)
    } else {
        realize(jw(n, ctx)?.as_ref(), nf)?.mat
    };
    let arc = Arc::new(p);
    jw_dense_cache().lock().unwrap().insert(key, arc.clone());
    Ok(arc)
}

fn isometry_cache() -> &'static Mutex<HashMap<FiberKey, Arc<CMat>>> {
    static CACHE: OnceLock<Mutex<HashMap<FiberKey, Arc<CMat>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Orthonormal basis of H_n inside (C^N)^(tensor n), as the columns of an
/// N^n x d_n isometry; cached by (n, N).
pub fn hn_isometry(n: u16, ctx: &ScalarContext) -> Result<Arc<CMat>> {
    let nf = fiber_n(ctx)?;
    let key = (n, nf as u32);
    if let Some(hit) = isometry_cache().lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }
    if n == 0 {
        let arc = Arc::new(CMat::identity(1));
        isometry_cache().lock().unwrap().insert(key, arc.clone());
        return Ok(arc);
    }
    let p = jw_dense(n, ctx)?;
    let (vals, vecs) = hermitian_eigen(&p);
    let dn = qdim(n as i64, ctx).round() as usize;
    let side = p.rows();
    let kept: Vec<usize> = (0..side).filter(|&i| vals[i] > 0.5).collect();
    if kept.len() != dn {
        return Err(Error::RankAmbiguity(format!(
            "projector P_{n} has numerical rank {} but d_{n} = {dn}",
            kept.len()
        )));
    }
    for &i in &kept {
        if vals[i] < 0.75 {
            return Err(Error::RankAmbiguity(format!(
                "projector P_{n} eigenvalue {} too far from 1",
                vals[i]
            )));
        }
    }
    let mut u = CMat::zeros(side, dn);
    for (col, &src) in kept.iter().enumerate() {
        // canonical phase: the largest entry is made real positive
        let mut best = 0usize;
        let mut best_norm = -1.0f64;
        for r in 0..side {
            let nn = vecs.get(r, src).norm_sqr();
            if nn > best_norm + 1e-15 {
                best_norm = nn;
                best = r;
            }
        }
        let pivot = vecs.get(best, src);
        let phase = if pivot.norm() > 0.0 {
            pivot.conj() / pivot.norm()
        } else {
            ONE
        };
        for r in 0..side {
            u.set(r, col, vecs.get(r, src) * phase);
        }
    }
    let arc = Arc::new(u);
    isometry_cache().lock().unwrap().insert(key, arc.clone());
    Ok(arc)
}

// ---------------------------------------------------------------------------
// rotation and the doubly-traceless basis

/// rho(X) = (P_k x t*) (id_1 x X x id_1) (t x P_k).
pub fn rotation(x: &DenseOperator, ctx: &ScalarContext) -> Result<DenseOperator> {
    let k = x.strands()?;
    let nf = fiber_n(ctx)?;
    pow_checked(nf, k + 2)?;
    let p = jw_dense(k, ctx)?;
    // support check: X must live in B(H_k)
    let pxp = matmul(&p, &matmul(&x.mat, &p));
    let dev = pxp.sub(&x.mat).frobenius_norm();
    if dev > ctx.tol_oracle * x.mat.frobenius_norm().max(1.0) {
        return Err(Error::Domain(format!(
            "rotation input is not supported in B(H_k): deviation {dev:e}"
        )));
    }
    let nk = nf.pow(k as u32);
    // A = t x P_k : N^(k+2) x N^k
    let mut a = CMat::zeros(nf * nf * nk, nk);
    for i in 0..nf {
        for r in 0..nk {
            for c in 0..nk {
                a.set((i * nf + i) * nk + r, c, p.get(r, c));
            }
        }
    }
    // B = P_k x t* : N^k x N^(k+2)
    let mut b = CMat::zeros(nk, nk * nf * nf);
    for r in 0..nk {
        for c in 0..nk {
            let v = p.get(r, c);
            if v.re == 0.0 && v.im == 0.0 {
                continue;
            }
            for j in 0..nf {
                b.set(r, c * nf * nf + j * nf + j, v);
            }
        }
    }
    let mid = kron(&kron(&CMat::identity(nf), &x.mat), &CMat::identity(nf));
    let out = matmul(&b, &matmul(&mid, &a));
    Ok(DenseOperator {
        n_fiber: nf,
        strands_in: k,
        strands_out: k,
        mat: out,
    })
}

/// Orthogonal basis of B(H_n)^oo refined into rotation eigenvectors.
#[derive(Debug, Clone)]
pub struct CcircBasis {
    pub n: u16,
    pub n_fiber: usize,
    /// Basis elements, normalized so that ||X||_2^2 = d_n.
    pub vectors: Vec<DenseOperator>,
    /// Rotation eigenvalue attached to each basis element.
    pub rho_eigenvalues: Vec<C64>,
    /// Max residual ||rho(v) - eigenvalue * v||_2 over the basis.
    pub eigen_residual: f64,
    /// Residuals of unitarity and rho^(2n) = id on the subspace.
    pub unitarity_residual: f64,
    pub period_residual: f64,
}

impl CcircBasis {
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    /// First basis vector whose eigenvalue is exp(i pi s / n).
    pub fn branch_vector(&self, s: u32) -> Result<(&DenseOperator, C64)> {
        let target = root_of_unity(s, self.n);
        for (v, &ev) in self.vectors.iter().zip(&self.rho_eigenvalues) {
            if (ev - target).norm() < 1e-6 {
                return Ok((v, ev));
            }
        }
        Err(Error::NoSuchEigenbranch(format!(
            "no eigenvector with mu = exp(i pi {s}/{})",
            self.n
        )))
    }

    /// Distinct eigenvalue indices s (mu = exp(i pi s/n)) present.
    pub fn branches(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for s in 0..2 * self.n as u32 {
            let target = root_of_unity(s, self.n);
            if self
                .rho_eigenvalues
                .iter()
                .any(|ev| (ev - target).norm() < 1e-6)
            {
                out.push(s);
            }
        }
        out
    }
}

fn root_of_unity(s: u32, n: u16) -> C64 {
    let th = std::f64::consts::PI * s as f64 / n as f64;
    C64::new(th.cos(), th.sin())
}

fn ccirc_cache() -> &'static Mutex<HashMap<FiberKey, Arc<CcircBasis>>> {
    static CACHE: OnceLock<Mutex<HashMap<FiberKey, Arc<CcircBasis>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Builds (and caches) the basis of
/// B(H_n)^oo = {X in B(H_n) : (Tr_1 x id)(X) = 0 = (id x Tr_1)(X)}.
pub fn ccirc_basis(n: u16, ctx: &ScalarContext) -> Result<Arc<CcircBasis>> {
    let nf = fiber_n(ctx)?;
    let key = (n, nf as u32);
    if let Some(hit) = ccirc_cache().lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }
    let built = build_ccirc(n, ctx, nf)?;
    let arc = Arc::new(built);
    ccirc_cache().lock().unwrap().insert(key, arc.clone());
    Ok(arc)
}

fn build_ccirc(n: u16, ctx: &ScalarContext, nf: usize) -> Result<CcircBasis> {
    let side = pow_checked(nf, n)?;
    if side > DENSE_SIDE_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "ccirc basis at side {side} exceeds the dense budget"
        )));
    }
    let u = hn_isometry(n, ctx)?;
    let dn = u.cols();
    let s2 = nf.pow(n as u32 - 1);
    // constraint map: coefficients on B(H_n) -> both one-strand traces
    let mut l = CMat::zeros(2 * s2 * s2, dn * dn);
    for a in 0..dn {
        for b in 0..dn {
            let col = a * dn + b;
            // X = u_a u_b^H
            let x = CMat::from_fn(side, side, |r, c| u.get(r, a) * u.get(c, b).conj());
            let op = DenseOperator {
                n_fiber: nf,
                strands_in: n,
                strands_out: n,
                mat: x,
            };
            let t1 = partial_trace_first(&op, 1)?;
            let t2 = partial_trace_last(&op, 1)?;
            for r in 0..s2 {
                for c in 0..s2 {
                    l.set(r * s2 + c, col, t1.mat.get(r, c));
                    l.set(s2 * s2 + r * s2 + c, col, t2.mat.get(r, c));
                }
            }
        }
    }
    let (svals, kernel) = crate::linalg::singular_kernel(&l, 1e-8)?;
    let dim = kernel.len();
    // spectral gap between kept and discarded singular values
    if dim > 0 && dim < dn * dn {
        let gap = svals[dim] - svals[dim - 1];
        if gap < 1e-6 {
            return Err(Error::RankAmbiguity(format!(
                "ccirc kernel gap {gap:e} below 1e-6 at (n={n}, N={nf})"
            )));
        }
    }
    let expected = if n >= 2 {
        (qdim(2 * n as i64, ctx) - qdim(2 * n as i64 - 2, ctx)).round() as usize
    } else {
        qdim(2, ctx).round() as usize
    };
    if dim != expected {
        return Err(Error::RankAmbiguity(format!(
            "dim B(H_{n})^oo = {dim}, expected {expected} at N = {nf}"
        )));
    }

    // materialize the kernel as matrices on (C^N)^n
    let kernel_mats: Vec<CMat> = kernel
        .iter()
        .map(|v| {
            let m = CMat::from_fn(dn, dn, |a, b| v[a * dn + b]);
            matmul(&matmul(&u, &m), &u.adjoint())
        })
        .collect();

    // rotation restricted to the kernel, in the orthonormal kernel basis
    let mut r = CMat::zeros(dim, dim);
    for (beta, xb) in kernel_mats.iter().enumerate() {
        let rx = rotation(
            &DenseOperator {
                n_fiber: nf,
                strands_in: n,
                strands_out: n,
                mat: xb.clone(),
            },
            ctx,
        )?;
        for (alpha, xa) in kernel_mats.iter().enumerate() {
            r.set(alpha, beta, hs_dot(xa, &rx.mat));
        }
    }
    let unitarity_residual = matmul(&r.adjoint(), &r)
        .sub(&CMat::identity(dim))
        .max_abs();
    if unitarity_residual > 1e-6 {
        return Err(Error::EigenSnap(format!(
            "rotation not unitary on B(H_{n})^oo: residual {unitarity_residual:e}"
        )));
    }

    // powers of R up to 2n, then eigenprojections onto each 2n-th root
    let order = 2 * n as usize;
    let mut powers = Vec::with_capacity(order + 1);
    powers.push(CMat::identity(dim));
    for t in 1..=order {
        let prev = &powers[t - 1];
        powers.push(matmul(prev, &r));
    }
    let period_residual = powers[order].sub(&CMat::identity(dim)).max_abs();

    let mut vectors = Vec::with_capacity(dim);
    let mut eigenvalues = Vec::with_capacity(dim);
    let mut eigen_residual = 0.0f64;
    for s in 0..order as u32 {
        let omega = root_of_unity(s, n);
        let mut proj = CMat::zeros(dim, dim);
        for (t, pw) in powers.iter().enumerate().take(order) {
            let w = omega.powi(-(t as i32)) / order as f64;
            proj = proj.add(&pw.scale(w));
        }
        let rank = proj.trace().re.round() as usize;
        if rank == 0 {
            continue;
        }
        let cols = range_basis(&proj, rank)?;
        for v in cols {
            // residual against the claimed eigenvalue
            let rv = r.matvec(&v);
            let resid: f64 = rv
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - omega * b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if resid > 1e-6 {
                return Err(Error::EigenSnap(format!(
                    "eigenvalue residual {resid:e} exceeds 1e-6 on branch s={s}"
                )));
            }
            eigen_residual = eigen_residual.max(resid);
            // assemble the matrix and normalize ||X||_2^2 = d_n
            let mut xm = CMat::zeros(side, side);
            for (alpha, km) in kernel_mats.iter().enumerate() {
                xm = xm.add(&km.scale(v[alpha]));
            }
            let scale = qdim(n as i64, ctx).sqrt() / xm.frobenius_norm();
            vectors.push(DenseOperator {
                n_fiber: nf,
                strands_in: n,
                strands_out: n,
                mat: xm.scale(C64::new(scale, 0.0)),
            });
            eigenvalues.push(omega);
        }
    }
    if vectors.len() != dim {
        return Err(Error::EigenSnap(format!(
            "eigenbranches account for {} of {dim} dimensions",
            vectors.len()
        )));
    }
    Ok(CcircBasis {
        n,
        n_fiber: nf,
        vectors,
        rho_eigenvalues: eigenvalues,
        eigen_residual,
        unitarity_residual,
        period_residual,
    })
}

/// Orthonormal basis of the range of a (near-)projection of known rank,
/// by pivoted modified Gram-Schmidt over its columns.
fn range_basis(proj: &CMat, rank: usize) -> Result<Vec<Vec<C64>>> {
    let dim = proj.rows();
    let mut cols: Vec<Vec<C64>> = (0..dim)
        .map(|j| (0..dim).map(|i| proj.get(i, j)).collect())
        .collect();
    let norm = |v: &[C64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let mut out: Vec<Vec<C64>> = Vec::with_capacity(rank);
    for _ in 0..rank {
        let (mut best, mut best_n) = (0usize, -1.0f64);
        for (j, cvec) in cols.iter().enumerate() {
            let nn = norm(cvec);
            if nn > best_n + 1e-15 {
                best_n = nn;
                best = j;
            }
        }
        if best_n < 1e-8 {
            return Err(Error::RankAmbiguity(
                "projection range collapsed before reaching its trace rank".into(),
            ));
        }
        let mut v = cols[best].clone();
        let nv = norm(&v);
        v.iter_mut().for_each(|c| *c /= nv);
        for cvec in cols.iter_mut() {
            let inner: C64 = v
                .iter()
                .zip(cvec.iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            for (ci, vi) in cvec.iter_mut().zip(&v) {
                *ci -= inner * vi;
            }
        }
        out.push(v);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// embedded operators and the Gram oracle

/// X_{i,j} = P_{i+k+j} (id_i x X x id_j) P_{i+k+j}.
pub fn embed_x(x: &DenseOperator, i: u16, j: u16, ctx: &ScalarContext) -> Result<DenseOperator> {
    let k = x.strands()?;
    let nf = fiber_n(ctx)?;
    let n = i + k + j;
    let side = pow_checked(nf, n)?;
    if side > DENSE_SIDE_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "embedding at side {side} exceeds the dense budget"
        )));
    }
    let p = jw_dense(n, ctx)?;
    let kp = kron_mid_apply_left(&x.mat, i, j, nf, &p);
    Ok(DenseOperator {
        n_fiber: nf,
        strands_in: n,
        strands_out: n,
        mat: matmul(&p, &kp),
    })
}

/// Gram block of the family (x_{n;i})_i for the first eigenvector on the
/// requested rotation branch: G_{n;i,p} = Tr(X_{n;i}^H X_{n;p}) / d_n.
///
/// Entries are assembled from the one-sided products (id x X x id) P_n, so
/// no full embedded operator is materialized.
pub fn gram_direct(k: u16, mu_index: u32, n: u16, ctx: &ScalarContext) -> Result<GramBlock> {
    if n < k {
        return Err(Error::Domain("gram block needs n >= k".into()));
    }
    let nf = fiber_n(ctx)?;
    let basis = ccirc_basis(k, ctx)?;
    let (x, mu) = basis.branch_vector(mu_index)?;
    let p = jw_dense(n, ctx)?;
    let dn = qdim(n as i64, ctx);
    let side = n as usize - k as usize + 1;

    // A_i = (id_i x X x id_j) P ; B_i = P (id_i x X x id_j) = (A'_i)^H
    let mut a_list = Vec::with_capacity(side);
    let mut b_list = Vec::with_capacity(side);
    let xadj = x.mat.adjoint();
    for i in 0..side as u16 {
        let j = n - k - i;
        a_list.push(kron_mid_apply_left(&x.mat, i, j, nf, &p));
        b_list.push(kron_mid_apply_left(&xadj, i, j, nf, &p).adjoint());
    }

    let mut entries = vec![0.0f64; side * side];
    let mut max_imag = 0.0f64;
    for i in 0..side {
        for pp in 0..side {
            // Tr(P X_i^H P X_p P) = Tr((X_i P)^H (P X_p)) with X = kron factor
            let val = hs_dot(&a_list[i], &b_list[pp]) / dn;
            max_imag = max_imag.max(val.im.abs());
            entries[i * side + pp] = val.re;
        }
    }
    if max_imag > ctx.tol_oracle {
        return Err(Error::Domain(format!(
            "gram oracle entries have imaginary part {max_imag:e}"
        )));
    }
    GramBlock::from_entries(k, mu.re, ctx.q, n, entries)
}

/// Cache of embedded operators X_{i,j} for one fixed X, so neighboring
/// identity checks share the expensive projector sandwiches.
pub struct EmbedCache<'a> {
    x: &'a DenseOperator,
    ctx: &'a ScalarContext,
    map: HashMap<(u16, u16), Arc<CMat>>,
}

impl<'a> EmbedCache<'a> {
    pub fn new(x: &'a DenseOperator, ctx: &'a ScalarContext) -> Self {
        EmbedCache {
            x,
            ctx,
            map: HashMap::new(),
        }
    }

    pub fn get(&mut self, i: u16, j: u16) -> Result<Arc<CMat>> {
        if let Some(hit) = self.map.get(&(i, j)) {
            return Ok(hit.clone());
        }
        let built = Arc::new(embed_x(self.x, i, j, self.ctx)?.mat);
        self.map.insert((i, j), built.clone());
        Ok(built)
    }
}

/// Frobenius residual of the one-step trace identity
/// (d_{n-1}/d_n) (id x Tr_1)(X_{p,q}) =
///   [q>0] (1-A^n_p) X_{p,q-1} + [p>0] B^n_p X_{p-1,q} + [p>1] C^n_p X_{p-2,q+1}
/// for a rotation eigenvector X.
pub fn check_general_rec(
    x: &DenseOperator,
    mu_re: f64,
    p: u16,
    q: u16,
    ctx: &ScalarContext,
) -> Result<f64> {
    let mut cache = EmbedCache::new(x, ctx);
    check_general_rec_cached(&mut cache, mu_re, p, q)
}

/// Same identity, sharing embedded operators through the cache.
pub fn check_general_rec_cached(
    cache: &mut EmbedCache<'_>,
    mu_re: f64,
    p: u16,
    q: u16,
) -> Result<f64> {
    let ctx = cache.ctx;
    let k = cache.x.strands()?;
    let nf = cache.x.n_fiber;
    let n = (p + k + q) as i64;
    let params = RecCoeffParams::new(k as u32, mu_re)?;
    let xpq = cache.get(p, q)?;
    let lhs = partial_trace_last(
        &DenseOperator {
            n_fiber: nf,
            strands_in: n as u16,
            strands_out: n as u16,
            mat: (*xpq).clone(),
        },
        1,
    )?
    .mat
    .scale(C64::new(qdim(n - 1, ctx) / qdim(n, ctx), 0.0));
    let (ca, cb, cc) = coeff_abc(n, p as i64, &params, ctx);
    let sm1 = nf_side(ctx, n as u16 - 1)?;
    let mut rhs = CMat::zeros(sm1, sm1);
    if q > 0 {
        rhs = rhs.add(&cache.get(p, q - 1)?.scale(C64::new(1.0 - ca, 0.0)));
    }
    if p > 0 {
        rhs = rhs.add(&cache.get(p - 1, q)?.scale(C64::new(cb, 0.0)));
    }
    if p > 1 {
        rhs = rhs.add(&cache.get(p - 2, q + 1)?.scale(C64::new(cc, 0.0)));
    }
    Ok(lhs.sub(&rhs).frobenius_norm())
}

fn nf_side(ctx: &ScalarContext, strands: u16) -> Result<usize> {
    pow_checked(fiber_n(ctx)?, strands)
}

// ---------------------------------------------------------------------------
// trace projections, kappa constants, convolution

#[derive(Debug, Clone, Copy)]
pub struct PiProbe {
    /// Scalar minimizing the operator-norm deviation from lambda * id.
    pub best_lambda: f64,
    /// That minimal deviation, ||Pi - lambda id|| on H_a x H_c.
    pub deviation: f64,
    /// q^{-a-c} / (d_a d_c).
    pub lambda_ref: f64,
}

/// Pi_{a,b,c} = (id_a x tr_b x id_c)(P_{a+b+c}) restricted to H_a x H_c.
pub fn pi_abc(a: u16, b: u16, c: u16, ctx: &ScalarContext) -> Result<PiProbe> {
    let nf = fiber_n(ctx)?;
    let n = a + b + c;
    let side = pow_checked(nf, n)?;
    if side > DENSE_SIDE_BUDGET {
        return Err(Error::BudgetExceeded("pi probe exceeds dense budget".into()));
    }
    let p = jw_dense(n, ctx)?;
    let traced = partial_trace_middle(&p, nf, a, b, c).scale(C64::new(
        1.0 / qdim(b as i64, ctx),
        0.0,
    ));
    let ua = hn_isometry(a, ctx)?;
    let uc = hn_isometry(c, ctx)?;
    let w = kron(&ua, &uc);
    let compressed = matmul(&w.adjoint(), &matmul(&traced, &w)).hermitize();
    let (vals, _) = hermitian_eigen(&compressed);
    let (lo, hi) = (vals[0], vals[vals.len() - 1]);
    let q = ctx.q;
    Ok(PiProbe {
        best_lambda: 0.5 * (lo + hi),
        deviation: 0.5 * (hi - lo),
        lambda_ref: q.powi(-(a as i32 + c as i32)) / (qdim(a as i64, ctx) * qdim(c as i64, ctx)),
    })
}

/// Matrix form of t_1^a: the mirror pairing sum_u e_u x e_{rev(u)}.
fn t1a_matrix(a: u16, nf: usize) -> CMat {
    let na = nf.pow(a as u32);
    let mut m = CMat::zeros(na, na);
    for u in 0..na {
        // reverse base-N digits of u
        let mut rev = 0usize;
        let mut tmp = u;
        for _ in 0..a {
            rev = rev * nf + tmp % nf;
            tmp /= nf;
        }
        m.set(u, rev, ONE);
    }
    m
}

/// t_a = (P_a x P_a) t_1^a in matrix form (N^a x N^a).
fn ta_matrix(a: u16, ctx: &ScalarContext) -> Result<CMat> {
    let nf = fiber_n(ctx)?;
    if a == 0 {
        return Ok(CMat::identity(1));
    }
    let p = jw_dense(a, ctx)?;
    let m = t1a_matrix(a, nf);
    Ok(matmul(&p, &matmul(&m, &p.transpose())))
}

/// The basic intertwiner V_m^{k,l} = (P_k x P_l)(id_{k-a} x t_a x id_{l-a}) P_m
/// with m = k + l - 2a, as an N^(k+l) x N^m matrix.
pub fn basic_intertwiner(k: u16, l: u16, a: u16, ctx: &ScalarContext) -> Result<CMat> {
    if a > k.min(l) {
        return Err(Error::Domain("need a <= min(k, l)".into()));
    }
    let nf = fiber_n(ctx)?;
    let m = k + l - 2 * a;
    let big = pow_checked(nf, k + l)?;
    if big > DENSE_SIDE_BUDGET {
        return Err(Error::BudgetExceeded("intertwiner exceeds dense budget".into()));
    }
    if a == 0 {
        // V = (P_k x P_l) P_{k+l} = P_{k+l}
        return Ok((*jw_dense(k + l, ctx)?).clone());
    }
    let pm = jw_dense(m, ctx)?;
    let ta = ta_matrix(a, ctx)?;
    let (nx, na, ny) = (
        nf.pow((k - a) as u32),
        nf.pow(a as u32),
        nf.pow((l - a) as u32),
    );
    let mcols = pm.cols();
    // S P_m where S = id_{k-a} x t_a x id_{l-a}
    let mut sp = CMat::zeros(big, mcols);
    for x in 0..nx {
        for u in 0..na {
            for v in 0..na {
                let w = ta.get(u, v);
                if w.re == 0.0 && w.im == 0.0 {
                    continue;
                }
                for y in 0..ny {
                    let row = ((x * na + u) * na + v) * ny + y;
                    let prow = x * ny + y;
                    for c in 0..mcols {
                        sp.add_at(row, c, w * pm.get(prow, c));
                    }
                }
            }
        }
    }
    let pk = jw_dense(k, ctx)?;
    let pl = jw_dense(l, ctx)?;
    let pkl = kron(&pk, &pl);
    Ok(matmul(&pkl, &sp))
}

/// kappa_m^{k,l} = 1 / ||V_m^{k,l}||.
pub fn kappa(k: u16, l: u16, a: u16, ctx: &ScalarContext) -> Result<f64> {
    let v = basic_intertwiner(k, l, a, ctx)?;
    Ok(1.0 / spectral_norm(&v))
}

/// X *_m Y = V_m^{k,l H} (X x Y) V_m^{k,l}.
pub fn convolve(
    x: &DenseOperator,
    y: &DenseOperator,
    a: u16,
    ctx: &ScalarContext,
) -> Result<DenseOperator> {
    let k = x.strands()?;
    let l = y.strands()?;
    let nf = fiber_n(ctx)?;
    let v = basic_intertwiner(k, l, a, ctx)?;
    let big = kron(&x.mat, &y.mat);
    let m = k + l - 2 * a;
    Ok(DenseOperator {
        n_fiber: nf,
        strands_in: m,
        strands_out: m,
        mat: matmul(&v.adjoint(), &matmul(&big, &v)),
    })
}

// ---------------------------------------------------------------------------
// section-4 orthogonality probe

#[derive(Debug, Clone, Copy)]
pub struct ProbeRow {
    pub i: u16,
    pub j: u16,
    pub ip: u16,
    pub jp: u16,
    pub abs_inner: f64,
}

/// Tabulates |(x_{i,j} y | y x'_{i',j'})| over a small index grid at fixed
/// weights k = k' and y of weight n, via the convolution product formula
/// and the Peter-Weyl pairing.
pub fn orthogonality_probe(
    k: u16,
    n: u16,
    max_ij: u16,
    seed: u64,
    ctx: &ScalarContext,
) -> Result<Vec<ProbeRow>> {
    let nf = fiber_n(ctx)?;
    let basis = ccirc_basis(k, ctx)?;
    let x = &basis.vectors[0];
    let xp = basis.vectors.get(1).unwrap_or(&basis.vectors[0]);

    // random traceless Y in B(H_n)
    let un = hn_isometry(n, ctx)?;
    let dn = un.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = CMat::from_fn(dn, dn, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let tr = m.trace() / dn as f64;
    for i in 0..dn {
        m.add_at(i, i, -tr);
    }
    let y = matmul(&matmul(&un, &m), &un.adjoint());

    // precompute: for each (i, j) and fusion level m, the products needed
    // for the Peter-Weyl pairing
    let mut rows = Vec::new();
    let idx: Vec<(u16, u16)> = (0..=max_ij)
        .flat_map(|i| (0..=max_ij).map(move |j| (i, j)))
        .collect();
    // kappa table per (big, m)
    let mut kappas: HashMap<(u16, u16, u16), f64> = HashMap::new();

    for &(i, j) in &idx {
        for &(ip, jp) in &idx {
            let kk = i + k + j;
            let kkp = ip + k + jp;
            let mut inner = ZERO;
            for a2 in 0..=n.min(kk) {
                let m2 = kk + n - 2 * a2;
                // the right side must reach the same fusion level
                if m2 < n || (n + kkp < m2) || !(n + kkp - m2).is_multiple_of(2) {
                    continue;
                }
                let a2p = (n + kkp - m2) / 2;
                if a2p > n.min(kkp) {
                    continue;
                }
                if pow_checked(nf, kk + n).is_err() || pow_checked(nf, kkp + n).is_err() {
                    continue;
                }
                let xij = embed_x(x, i, j, ctx)?;
                let xpij = embed_x(xp, ip, jp, ctx)?;
                let yop = DenseOperator {
                    n_fiber: nf,
                    strands_in: n,
                    strands_out: n,
                    mat: y.clone(),
                };
                let s = convolve(&xij, &yop, a2, ctx)?;
                let t = convolve(&yop, &xpij, a2p, ctx)?;
                let k1 = *kappas
                    .entry((kk, n, a2))
                    .or_insert(kappa(kk, n, a2, ctx)?);
                let k2 = *kappas
                    .entry((n, kkp, a2p))
                    .or_insert(kappa(n, kkp, a2p, ctx)?);
                let dm = qdim(m2 as i64, ctx);
                inner += hs_dot(&s.mat, &t.mat) * (k1 * k1 * k2 * k2 / dm);
            }
            rows.push(ProbeRow {
                i,
                j,
                ip,
                jp,
                abs_inner: inner.norm(),
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// rank of the realized Jones-Wenzl projector

/// Numerical rank of realize(P_n) on (C^N)^n. Small sides go through a
/// full eigendecomposition; larger ones through matrix-free idempotence
/// and hermiticity checks plus the sparse diagonal trace.
pub fn rank_jw(n: u16, ctx: &ScalarContext) -> Result<usize> {
    let nf = fiber_n(ctx)?;
    let side = pow_checked(nf, n)?;
    let p = jw(n, ctx)?;
    if side <= 128 {
        let dense = realize(&p, nf)?;
        let sq = matmul(&dense.mat, &dense.mat);
        let idem = sq.sub(&dense.mat).frobenius_norm();
        if idem > 1e-8 {
            return Err(Error::RankAmbiguity(format!(
                "realized P_{n} not idempotent: {idem:e}"
            )));
        }
        let (vals, _) = hermitian_eigen(&dense.mat);
        let rank = vals.iter().filter(|&&v| v > 0.5).count();
        for &v in &vals {
            if !!(0.25..=0.75).contains(&v) {
                return Err(Error::RankAmbiguity(format!(
                    "realized P_{n} has ambiguous eigenvalue {v}"
                )));
            }
        }
        return Ok(rank);
    }
    // matrix-free route
    let mut rng = ChaCha8Rng::seed_from_u64(7 + n as u64);
    for _ in 0..3 {
        let x: Vec<C64> = (0..side)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let px = apply_element(&p, nf, &x)?;
        let ppx = apply_element(&p, nf, &px)?;
        let ny = px.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let resid = ppx
            .iter()
            .zip(&px)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if resid > 1e-9 * ny.max(1.0) {
            return Err(Error::RankAmbiguity(format!(
                "matrix-free idempotence residual {resid:e} at n={n}"
            )));
        }
        // hermiticity: <x, P y> = <P x, y>
        let yv: Vec<C64> = (0..side)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let py = apply_element(&p, nf, &yv)?;
        let lhs: C64 = x.iter().zip(&py).map(|(a, b)| a.conj() * b).sum();
        let rhs: C64 = px.iter().zip(&yv).map(|(a, b)| a.conj() * b).sum();
        if (lhs - rhs).norm() > 1e-8 * lhs.norm().max(1.0) {
            return Err(Error::RankAmbiguity("realized P_n not hermitian".into()));
        }
    }
    let tr = realized_trace(&p, nf)?;
    let rank = tr.re.round();
    if (tr.re - rank).abs() > 1e-6 * rank.abs().max(1.0) || tr.im.abs() > 1e-6 {
        return Err(Error::RankAmbiguity(format!(
            "trace {tr} of realized P_{n} is not close to an integer"
        )));
    }
    Ok(rank as usize)
}

// ---------------------------------------------------------------------------
// trace exponent probe for iterated rotations

#[derive(Debug, Clone, Copy)]
pub struct RhoTraceProbe {
    /// Max residual of Tr(rho^r(X)* rho^s(X)) against mu^(s-r) ||X||^2.
    pub residual_s_minus_r: f64,
    /// Same against the exponent s - k.
    pub residual_s_minus_k: f64,
}

/// Measures the exponent in Tr(rho^r(X)* rho^s(X)) = mu^t ||X||_2^2 on
/// rotation eigenvectors; reports residuals for t = s - r and t = s - k.
pub fn rho_trace_exponent_probe(k: u16, ctx: &ScalarContext) -> Result<RhoTraceProbe> {
    let basis = ccirc_basis(k, ctx)?;
    let mut worst_sr = 0.0f64;
    let mut worst_sk = 0.0f64;
    // one vector per eigenbranch; branches with mu != 1 discriminate the
    // two exponent candidates
    let picks: Vec<(DenseOperator, C64)> = basis
        .branches()
        .iter()
        .map(|&s| {
            let (v, ev) = basis.branch_vector(s).expect("branch listed");
            (v.clone(), ev)
        })
        .collect();
    for (x, mu) in &picks {
        let mu = *mu;
        let norm2 = C64::new(x.mat.frobenius_norm().powi(2), 0.0);
        let mut pows: Vec<DenseOperator> = vec![x.clone()];
        for _ in 0..2 * k as usize {
            pows.push(rotation(pows.last().unwrap(), ctx)?);
        }
        for r in 0..=k as usize {
            for s in 0..=2 * k as usize {
                let val = hs_dot(&pows[r].mat, &pows[s].mat);
                let t_sr = mu.powi(s as i32 - r as i32) * norm2;
                let t_sk = mu.powi(s as i32 - k as i32) * norm2;
                worst_sr = worst_sr.max((val - t_sr).norm() / norm2.re);
                worst_sk = worst_sk.max((val - t_sk).norm() / norm2.re);
            }
        }
    }
    Ok(RhoTraceProbe {
        residual_s_minus_r: worst_sr,
        residual_s_minus_k: worst_sk,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{compose, enumerate_nc2, markov_trace, tensor};
    use crate::gram::gram_recursive;

    fn ctx3() -> ScalarContext {
        ScalarContext::from_n(3).unwrap()
    }

    #[test]
    fn realize_identity_and_cup() {
        let ctx = ctx3();
        let _ = &ctx;
        let idn = realize(&TLElement::identity(3), 3).unwrap();
        assert_eq!(idn.mat, CMat::identity(27));
        // e = t t* has matrix trace N
        let e = realize(&TLElement::cup_cap(), 3).unwrap();
        assert!((e.mat.trace().re - 3.0).abs() < 1e-14);
        // t realizes as sum e_i x e_i
        let t = realize(&TLElement::t(), 3).unwrap();
        assert_eq!(t.mat.rows(), 9);
        assert_eq!(t.mat.cols(), 1);
        for i in 0..3 {
            assert_eq!(t.mat.get(i * 3 + i, 0), ONE);
        }
        assert_eq!(t.mat.data().iter().map(|c| c.norm_sqr()).sum::<f64>(), 3.0);
    }

    #[test]
    fn functoriality_on_random_diagrams() {
        // realize(f o g) * delta^loops bookkeeping matches matrix products
        let ctx = ctx3();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            // keep the tensor factors within the dense budget
            let k = 2 * rng.gen_range(0..2u16);
            let l = 2 + 2 * rng.gen_range(0..2u16);
            let m = 2 * rng.gen_range(0..2u16);
            let gs = enumerate_nc2(k, l).unwrap();
            let fs = enumerate_nc2(l, m).unwrap();
            if gs.is_empty() || fs.is_empty() {
                continue;
            }
            let g = TLElement::from_diagram(gs[rng.gen_range(0..gs.len())].clone());
            let f = TLElement::from_diagram(fs[rng.gen_range(0..fs.len())].clone());
            let prod = matmul(
                &realize(&f, 3).unwrap().mat,
                &realize(&g, 3).unwrap().mat,
            );
            let composed = realize(&compose(&f, &g, &ctx).unwrap(), 3).unwrap();
            assert!(prod.sub(&composed.mat).max_abs() < 1e-12);
            // tensor vs kron
            let tens = realize(&tensor(&f, &g), 3).unwrap();
            let kr = kron(&realize(&f, 3).unwrap().mat, &realize(&g, 3).unwrap().mat);
            assert!(tens.mat.sub(&kr).max_abs() < 1e-12);
        }
    }

    #[test]
    fn markov_matches_matrix_trace() {
        let ctx = ctx3();
        for n in 1..=4u16 {
            for d in enumerate_nc2(n, n).unwrap() {
                let e = TLElement::from_diagram(d);
                let mt = markov_trace(&e, &ctx).unwrap();
                let rt = realized_trace(&e, 3).unwrap();
                assert!((mt - rt).norm() < 1e-12 * mt.norm().max(1.0));
            }
        }
    }

    #[test]
    fn jw_rank_small() {
        let ctx = ctx3();
        // rank(P_3) = d_3 = 21 = N^3 - 2N by dense eigendecomposition
        assert_eq!(rank_jw(3, &ctx).unwrap(), 21);
        assert_eq!(rank_jw(2, &ctx).unwrap(), 8);
        // matrix-free route
        assert_eq!(rank_jw(5, &ctx).unwrap(), qdim(5, &ctx).round() as usize);
    }

    #[test]
    fn rotation_on_weight_one() {
        // on B(H_1), rho is the transpose; it fixes symmetric matrices
        // and negates nothing, but satisfies rho^2 = id
        let ctx = ctx3();
        let mut m = CMat::zeros(3, 3);
        m.set(0, 1, ONE);
        m.set(2, 0, C64::new(0.0, 1.0));
        let x = DenseOperator {
            n_fiber: 3,
            strands_in: 1,
            strands_out: 1,
            mat: m.clone(),
        };
        let r = rotation(&x, &ctx).unwrap();
        assert!(r.mat.sub(&m.transpose()).max_abs() < 1e-12);
        let rr = rotation(&r, &ctx).unwrap();
        assert!(rr.mat.sub(&m).max_abs() < 1e-12);
    }

    #[test]
    fn ccirc_dimensions() {
        let ctx = ctx3();
        let b1 = ccirc_basis(1, &ctx).unwrap();
        assert_eq!(b1.dim(), 8); // d_2
        let b2 = ccirc_basis(2, &ctx).unwrap();
        assert_eq!(b2.dim(), 47); // d_4 - d_2 = 55 - 8
        let ctx4 = ScalarContext::from_n(4).unwrap();
        let b24 = ccirc_basis(2, &ctx4).unwrap();
        assert_eq!(b24.dim(), 194); // 209 - 15
    }

    #[test]
    fn ccirc_vectors_are_doubly_traceless() {
        let ctx = ctx3();
        let b = ccirc_basis(2, &ctx).unwrap();
        for v in b.vectors.iter().take(5) {
            let t1 = partial_trace_first(v, 1).unwrap();
            let t2 = partial_trace_last(v, 1).unwrap();
            assert!(t1.mat.max_abs() < 1e-9);
            assert!(t2.mat.max_abs() < 1e-9);
            // normalization ||X||_2^2 = d_2
            assert!((v.mat.frobenius_norm().powi(2) - 8.0).abs() < 1e-8);
        }
        // rho-eigenvalues are 4th roots of unity for k = 2
        for ev in &b.rho_eigenvalues {
            assert!((ev.norm() - 1.0).abs() < 1e-8);
            let fourth = ev.powi(4);
            assert!((fourth - ONE).norm() < 1e-6);
        }
    }

    #[test]
    fn embed_basics() {
        let ctx = ctx3();
        let b = ccirc_basis(1, &ctx).unwrap();
        let x = &b.vectors[0];
        // X_{0,0} = X
        let x00 = embed_x(x, 0, 0, &ctx).unwrap();
        assert!(x00.mat.sub(&x.mat).max_abs() < 1e-10);
        // norm bound ||X_{i,j}||_2 <= sqrt(d_i d_j) ||X||_2
        let x11 = embed_x(x, 1, 1, &ctx).unwrap();
        let bound = (3.0f64 * 3.0).sqrt() * x.mat.frobenius_norm();
        assert!(x11.mat.frobenius_norm() <= bound * (1.0 + 1e-12));
        // support rank <= d_3 = 21
        let w = matmul(&x11.mat.adjoint(), &x11.mat);
        let (vals, _) = hermitian_eigen(&w);
        let top = vals.last().copied().unwrap_or(0.0);
        let rank = vals.iter().filter(|&&v| v > 1e-10 * top).count();
        assert!(rank <= 21, "rank {rank}");
    }

    #[test]
    fn gram_oracle_matches_hand_value() {
        // k=1, N=3, mu=+1, n=2: G_2 = [[7/8, -1/4], [-1/4, 7/8]]
        let ctx = ctx3();
        let g = gram_direct(1, 0, 2, &ctx).unwrap();
        assert!((g.get(0, 0) - 0.875).abs() < 1e-9);
        assert!((g.get(0, 1) + 0.25).abs() < 1e-9);
        assert!((g.get(1, 0) + 0.25).abs() < 1e-9);
        assert!((g.get(1, 1) - 0.875).abs() < 1e-9);
        // n = k gives the 1x1 identity
        let gk = gram_direct(1, 0, 1, &ctx).unwrap();
        assert!((gk.get(0, 0) - 1.0).abs() < 1e-9);
        // mu = -1 branch flips the off-diagonal sign
        let gm = gram_direct(1, 1, 2, &ctx).unwrap();
        assert!((gm.get(0, 1) - 0.25).abs() < 1e-9);
    }

    #[test]
    fn gram_oracle_vs_recursion() {
        let ctx = ctx3();
        for (k, s) in [(1u16, 0u32), (1, 1), (2, 0)] {
            let basis = ccirc_basis(k, &ctx).unwrap();
            let (_, mu) = basis.branch_vector(s).unwrap();
            let blocks = gram_recursive(k as u32, mu.re, ctx.q, 5).unwrap();
            for n in k..=5u16 {
                let direct = gram_direct(k, s, n, &ctx).unwrap();
                let rec = &blocks[(n - k) as usize];
                let side = direct.side();
                for i in 0..side {
                    for p in 0..side {
                        assert!(
                            (direct.get(i, p) - rec.get(i, p)).abs() < 1e-8,
                            "k={k} s={s} n={n} ({i},{p}): {} vs {}",
                            direct.get(i, p),
                            rec.get(i, p)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn general_rec_residuals() {
        let ctx = ctx3();
        let basis = ccirc_basis(1, &ctx).unwrap();
        let (x, mu) = basis.branch_vector(0).unwrap();
        for (p, q) in [(0u16, 0u16), (1, 0), (0, 1), (1, 1), (2, 1)] {
            let r = check_general_rec(x, mu.re, p, q, &ctx).unwrap();
            assert!(r < 1e-9, "(p,q)=({p},{q}): {r:e}");
        }
        let basis2 = ccirc_basis(2, &ctx).unwrap();
        let (x2, mu2) = basis2.branch_vector(0).unwrap();
        let r = check_general_rec(x2, mu2.re, 1, 1, &ctx).unwrap();
        assert!(r < 1e-9, "k=2: {r:e}");
    }

    #[test]
    fn pi_probe_scalar_when_c_zero() {
        let ctx = ctx3();
        for (a, b) in [(1u16, 1u16), (2, 2), (1, 3)] {
            let probe = pi_abc(a, b, 0, &ctx).unwrap();
            assert!(probe.deviation < 1e-12, "a={a} b={b}: {}", probe.deviation);
        }
    }

    #[test]
    fn pi_probe_decay() {
        let ctx = ctx3();
        let mut prev = f64::INFINITY;
        for b in 1..=4u16 {
            let probe = pi_abc(1, b, 1, &ctx).unwrap();
            assert!(probe.deviation < prev, "b={b}");
            prev = probe.deviation;
        }
    }

    #[test]
    fn kappa_values() {
        let ctx = ctx3();
        // a = 0: isometric inclusion
        assert!((kappa(1, 1, 0, &ctx).unwrap() - 1.0).abs() < 1e-10);
        assert!((kappa(2, 1, 0, &ctx).unwrap() - 1.0).abs() < 1e-10);
        // kappa_0^{1,1} = 1/sqrt(N)
        let k011 = kappa(1, 1, 1, &ctx).unwrap();
        assert!((k011 - 1.0 / 3.0f64.sqrt()).abs() < 1e-10, "{k011}");
        // sqrt(d_a) kappa >= 1
        for k in 1..=3u16 {
            for l in 1..=3u16 {
                for a in 0..=k.min(l) {
                    let kap = kappa(k, l, a, &ctx).unwrap();
                    let lower = qdim(a as i64, &ctx).sqrt() * kap;
                    assert!(lower >= 1.0 - 1e-10, "k={k} l={l} a={a}: {lower}");
                }
            }
        }
    }

    #[test]
    fn convolve_identities() {
        let ctx = ctx3();
        let b = ccirc_basis(1, &ctx).unwrap();
        let x = &b.vectors[0];
        let y = &b.vectors[1];
        // a = 0: X *_m Y = P_m (X x Y) P_m
        let conv = convolve(x, y, 0, &ctx).unwrap();
        let p2 = jw_dense(2, &ctx).unwrap();
        let direct = matmul(&p2, &matmul(&kron(&x.mat, &y.mat), &p2));
        assert!(conv.mat.sub(&direct).max_abs() < 1e-10);
        // norm bound ||X *_m Y||_2 <= d_a ||X||_2 ||Y||_2
        let conv1 = convolve(x, y, 1, &ctx).unwrap();
        let bound = 3.0 * x.mat.frobenius_norm() * y.mat.frobenius_norm();
        assert!(conv1.mat.frobenius_norm() <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn rho_trace_exponent() {
        let ctx = ctx3();
        let probe = rho_trace_exponent_probe(2, &ctx).unwrap();
        // the s - r exponent is the correct one
        assert!(probe.residual_s_minus_r < 1e-8, "{:?}", probe);
        assert!(probe.residual_s_minus_k > 1e-3, "{:?}", probe);
    }
}
