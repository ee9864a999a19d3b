//! Coefficient model of one cyclic bimodule: chi_1 multiplication and
//! commutators on the basis grid, the recursive f/g/phi coefficient
//! families, the iterated-move identity, the phi growth bound, and the
//! support-localization inequality with its E_m/Q_m masks.
//!
//! Every formula carries the conventions z_{i,j} = 0 for negative indices
//! and d_l = 0 for l < 0 internally, so call sites can be transcribed
//! verbatim.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64 as C64;

use crate::scalars::{coeff_a, coeff_b, coeff_c, coeff_d, RecCoeffParams, ScalarContext};
use crate::{Error, Result};

/// A finitely supported map N x N -> C representing z = sum z_{i,j} w_{i,j}
/// in the coefficient model of a cyclic bimodule of weight params.k.
#[derive(Debug, Clone)]
pub struct CoeffGrid {
    pub params: RecCoeffParams,
    pub ctx: ScalarContext,
    support: BTreeMap<(u32, u32), C64>,
}

impl CoeffGrid {
    pub fn new(params: RecCoeffParams, ctx: ScalarContext) -> Self {
        CoeffGrid {
            params,
            ctx,
            support: BTreeMap::new(),
        }
    }

    pub fn delta(params: RecCoeffParams, ctx: ScalarContext, i: u32, j: u32) -> Self {
        let mut g = Self::new(params, ctx);
        g.set(i, j, C64::new(1.0, 0.0));
        g
    }

    pub fn set(&mut self, i: u32, j: u32, c: C64) {
        if c.re == 0.0 && c.im == 0.0 {
            self.support.remove(&(i, j));
        } else {
            self.support.insert((i, j), c);
        }
    }

    /// Entry with the negative-index convention z_{i,j} = 0.
    pub fn get(&self, i: i64, j: i64) -> C64 {
        if i < 0 || j < 0 {
            return C64::new(0.0, 0.0);
        }
        self.support
            .get(&(i as u32, j as u32))
            .copied()
            .unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, C64)> + '_ {
        self.support.iter().map(|(&(i, j), &c)| (i, j, c))
    }

    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    pub fn l2_norm(&self) -> f64 {
        self.support
            .values()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Largest i + j over the support (None when empty).
    pub fn max_degree(&self) -> Option<u32> {
        self.support.keys().map(|&(i, j)| i + j).max()
    }

    pub fn sub(&self, other: &CoeffGrid) -> CoeffGrid {
        let mut out = self.clone();
        for (i, j, c) in other.iter() {
            let cur = out.get(i as i64, j as i64);
            out.set(i, j, cur - c);
        }
        out
    }

    pub fn sup_norm(&self) -> f64 {
        self.support.values().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

fn gather_targets(z: &CoeffGrid, offsets: &[(i64, i64)]) -> BTreeSet<(u32, u32)> {
    let mut out = BTreeSet::new();
    for (i, j, _) in z.iter() {
        for &(di, dj) in offsets {
            let (ti, tj) = (i as i64 + di, j as i64 + dj);
            if ti >= 0 && tj >= 0 {
                out.insert((ti as u32, tj as u32));
            }
        }
    }
    out
}

/// (chi_1 z)_{i,j} = z_{i-1,j} + (1 - A^{n+1}_j) z_{i+1,j}
///   + B^{n+1}_{j+1} z_{i,j+1} + C^{n+1}_{j+2} z_{i-1,j+2}, n = i + k + j.
pub fn left_mult_chi(z: &CoeffGrid) -> CoeffGrid {
    let params = &z.params;
    let ctx = &z.ctx;
    let k = params.k as i64;
    let mut out = CoeffGrid::new(*params, *ctx);
    for (i, j) in gather_targets(z, &[(1, 0), (-1, 0), (0, -1), (1, -2)]) {
        let (i_, j_) = (i as i64, j as i64);
        let n = i_ + k + j_;
        let v = z.get(i_ - 1, j_)
            + z.get(i_ + 1, j_) * (1.0 - coeff_a(n + 1, j_, params, ctx))
            + z.get(i_, j_ + 1) * coeff_b(n + 1, j_ + 1, params, ctx)
            + z.get(i_ - 1, j_ + 2) * coeff_c(n + 1, j_ + 2, params, ctx);
        out.set(i, j, v);
    }
    out
}

/// (z chi_1)_{i,j}: the left formula with the roles of i and j exchanged.
pub fn right_mult_chi(z: &CoeffGrid) -> CoeffGrid {
    let params = &z.params;
    let ctx = &z.ctx;
    let k = params.k as i64;
    let mut out = CoeffGrid::new(*params, *ctx);
    for (i, j) in gather_targets(z, &[(0, 1), (0, -1), (-1, 0), (-2, 1)]) {
        let (i_, j_) = (i as i64, j as i64);
        let n = i_ + k + j_;
        let v = z.get(i_, j_ - 1)
            + z.get(i_, j_ + 1) * (1.0 - coeff_a(n + 1, i_, params, ctx))
            + z.get(i_ + 1, j_) * coeff_b(n + 1, i_ + 1, params, ctx)
            + z.get(i_ + 2, j_ - 1) * coeff_c(n + 1, i_ + 2, params, ctx);
        out.set(i, j, v);
    }
    out
}

/// [chi_1, z]_{i,j} = z_{i-1,j} - z_{i,j-1} + D^{n+1}_j z_{i+1,j}
///   - D^{n+1}_i z_{i,j+1} + C^{n+1}_{j+2} z_{i-1,j+2}
///   - C^{n+1}_{i+2} z_{i+2,j-1}, n = i + k + j.
pub fn commutator(z: &CoeffGrid) -> CoeffGrid {
    let params = &z.params;
    let ctx = &z.ctx;
    let k = params.k as i64;
    let mut out = CoeffGrid::new(*params, *ctx);
    for (i, j) in gather_targets(
        z,
        &[(1, 0), (0, 1), (-1, 0), (0, -1), (1, -2), (-2, 1)],
    ) {
        let (i_, j_) = (i as i64, j as i64);
        let n = i_ + k + j_;
        let v = z.get(i_ - 1, j_) - z.get(i_, j_ - 1)
            + z.get(i_ + 1, j_) * coeff_d(n + 1, j_, params, ctx)
            - z.get(i_, j_ + 1) * coeff_d(n + 1, i_, params, ctx)
            + z.get(i_ - 1, j_ + 2) * coeff_c(n + 1, j_ + 2, params, ctx)
            - z.get(i_ + 2, j_ - 1) * coeff_c(n + 1, i_ + 2, params, ctx);
        out.set(i, j, v);
    }
    out
}

/// Coefficient mask E_m: keeps w_{i,j} with i >= m and j >= m.
pub fn project_em(z: &CoeffGrid, m: u32) -> CoeffGrid {
    let mut out = CoeffGrid::new(z.params, z.ctx);
    for (i, j, c) in z.iter() {
        if i >= m && j >= m {
            out.set(i, j, c);
        }
    }
    out
}

/// Coefficient mask Q_m: keeps w_{i,j} with j >= i = m.
pub fn project_qm(z: &CoeffGrid, m: u32) -> CoeffGrid {
    let mut out = CoeffGrid::new(z.params, z.ctx);
    for (i, j, c) in z.iter() {
        if i == m && j >= i {
            out.set(i, j, c);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// recursive coefficient families

/// The family phi^{l,p}_i for one (m, l), stored for p = 0..=p_max and
/// -p <= i <= m + p; zero outside those bands.
#[derive(Debug, Clone)]
pub struct PhiTable {
    pub m: u32,
    pub l: u32,
    pub params: RecCoeffParams,
    pub q: f64,
    /// rows[p][(i + p) as usize] = phi^{l,p}_i
    rows: Vec<Vec<f64>>,
}

impl PhiTable {
    pub fn p_max(&self) -> u32 {
        self.rows.len() as u32 - 1
    }

    pub fn phi(&self, p: u32, i: i64) -> f64 {
        if p >= self.rows.len() as u32 {
            return 0.0;
        }
        let off = i + p as i64;
        if off < 0 || off >= self.rows[p as usize].len() as i64 {
            return 0.0;
        }
        self.rows[p as usize][off as usize]
    }
}

/// f rows together with the phi table they came from; g entries are
/// recovered from earlier phi rows.
#[derive(Debug, Clone)]
pub struct FgTables {
    pub m: u32,
    pub l: u32,
    /// f_rows[p][i] = f^{l,p}_{i, m+l+2p-i} for 0 <= i <= m + 2p.
    f_rows: Vec<Vec<f64>>,
    pub phi: PhiTable,
}

impl FgTables {
    /// f^{l,p}_{i,j}: zero unless i + j = m + l + 2p and i <= m + 2p.
    pub fn f(&self, p: u32, i: i64, j: i64) -> f64 {
        if p >= self.f_rows.len() as u32 || i < 0 || j < 0 {
            return 0.0;
        }
        if i + j != (self.m + self.l + 2 * p) as i64 {
            return 0.0;
        }
        let row = &self.f_rows[p as usize];
        if i >= row.len() as i64 {
            return 0.0;
        }
        row[i as usize]
    }

    /// g^{l,p}_{i,j}: equals phi^{l,r}_{r+m-i} on the diagonal
    /// i + j = m + l + 2r + 1 for some 0 <= r < p, zero otherwise.
    pub fn g(&self, p: u32, i: i64, j: i64) -> f64 {
        if i < 0 || j < 0 {
            return 0.0;
        }
        let s = i + j - (self.m + self.l) as i64 - 1;
        if s < 0 || s % 2 != 0 {
            return 0.0;
        }
        let r = (s / 2) as u32;
        if r >= p {
            return 0.0;
        }
        self.phi.phi(r, r as i64 + self.m as i64 - i)
    }
}

/// Builds the f and phi families by the inductive definition:
/// f^{l,0} = delta_{(m,l)}, phi as partial sums of f, and
/// f^{l,p+1}_{i,j} = D^n_i phi_{m+p-i} - D^n_j phi_{m+p-i+1}
///                 + C^n_i phi_{m+p-i+2} - C^n_j phi_{m+p-i-1}
/// on i + j = m + l + 2p + 2 with n = i + k + j.
pub fn fg_tables(
    m: u32,
    l: u32,
    p_max: u32,
    params: &RecCoeffParams,
    ctx: &ScalarContext,
) -> Result<FgTables> {
    if l < m {
        return Err(Error::Domain("fg tables need l >= m".into()));
    }
    let mut f_rows: Vec<Vec<f64>> = Vec::with_capacity(p_max as usize + 1);
    let mut phi_rows: Vec<Vec<f64>> = Vec::with_capacity(p_max as usize + 1);
    let mut f = vec![0.0f64; m as usize + 1];
    f[m as usize] = 1.0;
    f_rows.push(f.clone());
    for p in 0..=p_max {
        // phi_i = - sum over s in [-p, i] of f_{m+p-s, l+p+s}
        //       = - sum of the f row over first index from m+p-i to m+2p
        let width = (m + 2 * p) as usize + 1;
        let mut suffix = vec![0.0f64; width + 1];
        for u in (0..width).rev() {
            suffix[u] = suffix[u + 1] + f_rows[p as usize][u];
        }
        let mut phi = vec![0.0f64; width];
        for off in 0..width {
            let i = off as i64 - p as i64;
            let u_min = (m + p) as i64 - i;
            phi[off] = -suffix[u_min as usize];
        }
        phi_rows.push(phi);
        if p == p_max {
            break;
        }
        // next f row on the diagonal i + j = m + l + 2p + 2
        let phi_at = |i: i64| -> f64 {
            let off = i + p as i64;
            if off < 0 || off >= width as i64 {
                0.0
            } else {
                phi_rows[p as usize][off as usize]
            }
        };
        let next_width = (m + 2 * p + 2) as usize + 1;
        let mut fnext = vec![0.0f64; next_width];
        let diag = (m + l + 2 * p + 2) as i64;
        for (i, slot) in fnext.iter_mut().enumerate() {
            let i = i as i64;
            let j = diag - i;
            let n = i + params.k as i64 + j;
            *slot = coeff_d(n, i, params, ctx) * phi_at((m + p) as i64 - i)
                - coeff_d(n, j, params, ctx) * phi_at((m + p) as i64 - i + 1)
                + coeff_c(n, i, params, ctx) * phi_at((m + p) as i64 - i + 2)
                - coeff_c(n, j, params, ctx) * phi_at((m + p) as i64 - i - 1);
        }
        f_rows.push(fnext);
    }
    Ok(FgTables {
        m,
        l,
        f_rows,
        phi: PhiTable {
            m,
            l,
            params: *params,
            q: ctx.q,
            rows: phi_rows,
        },
    })
}

/// The phi family via the Notation-built f rows.
pub fn phi_table(
    m: u32,
    l: u32,
    p_max: u32,
    params: &RecCoeffParams,
    ctx: &ScalarContext,
) -> Result<PhiTable> {
    Ok(fg_tables(m, l, p_max, params, ctx)?.phi)
}

/// Independent construction: the direct one-step recursion for phi from
/// the growth-estimate proof,
/// phi^{l,p+1}_i = phi^{l,p}_i (D^n_{l+p+1+i} - C^n_{m+p-i+2})
///   - phi^{l,p}_{i+1} C^n_{m+p-i+1}
///   + sum_{s=-p}^{i-1} phi^{l,p}_s (D^n_{l+p+1+s} - D^n_{m+p-s}
///   + [s <= i-2] C^n_{l+p+s+3} - C^n_{m+p-s+2}), with n = m+l+2p+k+2.
pub fn phi_table_direct(
    m: u32,
    l: u32,
    p_max: u32,
    params: &RecCoeffParams,
    ctx: &ScalarContext,
) -> Result<PhiTable> {
    if l < m {
        return Err(Error::Domain("phi table needs l >= m".into()));
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(p_max as usize + 1);
    let mut row0 = vec![0.0f64; m as usize + 1];
    row0.iter_mut().for_each(|v| *v = -1.0);
    rows.push(row0);
    for p in 0..p_max {
        let cur = &rows[p as usize];
        let phi_at = |i: i64| -> f64 {
            let off = i + p as i64;
            if off < 0 || off >= cur.len() as i64 {
                0.0
            } else {
                cur[off as usize]
            }
        };
        let n = (m + l + 2 * p) as i64 + params.k as i64 + 2;
        let width = (m + 2 * (p + 1)) as usize + 1;
        let mut next = vec![0.0f64; width];
        for (off, slot) in next.iter_mut().enumerate() {
            let i = off as i64 - (p as i64 + 1);
            let mp = (m + p) as i64;
            let lp = (l + p) as i64;
            let mut v = phi_at(i)
                * (coeff_d(n, lp + 1 + i, params, ctx) - coeff_c(n, mp - i + 2, params, ctx))
                - phi_at(i + 1) * coeff_c(n, mp - i + 1, params, ctx);
            let mut s = -(p as i64);
            while s < i {
                let mut w = coeff_d(n, lp + 1 + s, params, ctx)
                    - coeff_d(n, mp - s, params, ctx)
                    - coeff_c(n, mp - s + 2, params, ctx);
                if s <= i - 2 {
                    w += coeff_c(n, lp + s + 3, params, ctx);
                }
                v += phi_at(s) * w;
                s += 1;
            }
            *slot = v;
        }
        rows.push(next);
    }
    Ok(PhiTable {
        m,
        l,
        params: *params,
        q: ctx.q,
        rows,
    })
}

// ---------------------------------------------------------------------------
// iterated move identity

/// |z_{m,l} - sum f^{l,p} z - sum g^{l,p} [chi_1, z]| for the tables at
/// (m, l) and depth p.
pub fn verify_iterated_move(z: &CoeffGrid, m: u32, l: u32, p: u32) -> Result<f64> {
    if l < m {
        return Err(Error::Domain("iterated move needs l >= m".into()));
    }
    let tables = fg_tables(m, l, p, &z.params, &z.ctx)?;
    let comm = commutator(z);
    let mut acc = C64::new(0.0, 0.0);
    // f sum along the diagonal i + j = m + l + 2p
    let diag = (m + l + 2 * p) as i64;
    for i in 0..=(m + 2 * p) as i64 {
        let j = diag - i;
        let fv = tables.f(p, i, j);
        if fv != 0.0 {
            acc += z.get(i, j) * fv;
        }
    }
    // g sums along diagonals i + j = m + l + 2r + 1 for r < p
    for r in 0..p {
        let diag = (m + l + 2 * r + 1) as i64;
        for i in 0..=diag {
            let j = diag - i;
            let gv = tables.g(p, i, j);
            if gv != 0.0 {
                acc += comm.get(i, j) * gv;
            }
        }
    }
    Ok((z.get(m as i64, l as i64) - acc).norm())
}

// ---------------------------------------------------------------------------
// phi growth bound and support localization

/// Admissible default R: min(4, 0.9 * 0.995/(2 q^2)), pushed into the
/// interval (3.4, 0.995/(2 q^2)) when that squeeze clips it.
pub fn default_r(q: f64) -> Result<f64> {
    let upper = 0.995 / (2.0 * q * q);
    let mut r = (0.9 * upper).min(4.0);
    if r <= 3.4 {
        r = 0.5 * (3.4 + upper);
    }
    validate_r(q, r)?;
    Ok(r)
}

fn validate_r(q: f64, r: f64) -> Result<()> {
    let upper = 0.995 / (2.0 * q * q);
    if !(r > 3.4 && r < upper) {
        return Err(Error::Domain(format!(
            "R = {r} outside the admissible interval (3.4, {upper})"
        )));
    }
    Ok(())
}

/// Outcome of the empirical phi growth measurement.
#[derive(Debug, Clone)]
pub struct PhiBound {
    /// max over scanned (l, p, i) of |phi^{l,p}_i| q^{-2|i|} (2R)^{-i}.
    pub k_empirical: f64,
    /// Whether the running max stayed constant over the last half of the
    /// p levels.
    pub stable: bool,
    /// Running max after each p level.
    pub running_max: Vec<f64>,
    pub r: f64,
}

/// Scans phi tables for l = m..=m+l_span and p <= p_max, recording the
/// empirical constant of the bound |phi^{l,p}_i| <= K q^{2|i|} (2R)^i.
pub fn phi_bound_check(
    m: u32,
    params: &RecCoeffParams,
    ctx: &ScalarContext,
    p_max: u32,
    r: f64,
    l_span: u32,
) -> Result<PhiBound> {
    validate_r(ctx.q, r)?;
    let q = ctx.q;
    let mut running = vec![0.0f64; p_max as usize + 1];
    for l in m..=m + l_span {
        let table = phi_table(m, l, p_max, params, ctx)?;
        for p in 0..=p_max {
            for off in 0..(m + 2 * p) as usize + 1 {
                let i = off as i64 - p as i64;
                let v = table.phi(p, i).abs();
                if v == 0.0 {
                    continue;
                }
                let weight = q.powi(2 * i.unsigned_abs() as i32) * (2.0 * r).powi(i as i32);
                running[p as usize] = running[p as usize].max(v / weight);
            }
        }
    }
    for p in 1..running.len() {
        running[p] = running[p].max(running[p - 1]);
    }
    let k_empirical = *running.last().unwrap();
    let window = (p_max / 2) as usize;
    let stable = running[running.len() - 1 - window] == k_empirical;
    Ok(PhiBound {
        k_empirical,
        stable,
        running_max: running,
        r,
    })
}

/// Both sides of the support-localization inequality
/// ||(1 - E_m) z||^2 <= L_m p^{-1} ||z||^2 + L_m p ||[chi_1, z]||^2
/// with the constant L_m = 16 S^2 sum_{m' < m} K_{m'}^2 computed from
/// empirical K values covering every coefficient the averaging argument
/// touches for this z.
#[derive(Debug, Clone)]
pub struct SupportLocCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
    pub l_constant: f64,
}

pub fn support_localization_check(z: &CoeffGrid, m: u32, p: u32) -> Result<SupportLocCheck> {
    if p < 1 {
        return Err(Error::Domain("support localization needs p >= 1".into()));
    }
    let ctx = &z.ctx;
    let r = default_r(ctx.q)?;
    let q = ctx.q;
    let s_plus = 1.0 / (1.0 - 2.0 * r * q * q);
    let ratio = q * q / (2.0 * r);
    let s_minus = ratio / (1.0 - ratio);
    let s_const = s_plus + s_minus;

    let max_degree = z.max_degree().unwrap_or(0);
    let mut l_sum = 0.0f64;
    for mp in 0..m {
        // K_{m'} must dominate every phi entry used by the averaging over
        // p' < p at row/column m', i.e. tables for l up to the largest
        // populated diagonal
        let l_span = (max_degree + 1).saturating_sub(mp);
        let kb = phi_bound_check(mp, &z.params, ctx, p.max(1), r, l_span)?;
        l_sum += kb.k_empirical * kb.k_empirical;
    }
    let l_constant = 16.0 * s_const * s_const * l_sum;

    let masked = z.sub(&project_em(z, m));
    let lhs = masked.l2_norm().powi(2);
    let comm = commutator(z);
    let rhs = l_constant * (z.l2_norm().powi(2) / p as f64 + p as f64 * comm.l2_norm().powi(2));
    Ok(SupportLocCheck {
        lhs,
        rhs,
        ok: lhs <= rhs * (1.0 + 1e-12),
        l_constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(k: u32, n_int: u32, mu_re: f64) -> (RecCoeffParams, ScalarContext) {
        (
            RecCoeffParams::new(k, mu_re).unwrap(),
            ScalarContext::from_n(n_int).unwrap(),
        )
    }

    fn random_grid(
        params: RecCoeffParams,
        ctx: ScalarContext,
        rng: &mut ChaCha8Rng,
        extent: u32,
        count: usize,
    ) -> CoeffGrid {
        let mut z = CoeffGrid::new(params, ctx);
        for _ in 0..count {
            let i = rng.gen_range(0..=extent);
            let j = rng.gen_range(0..=extent);
            z.set(
                i,
                j,
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            );
        }
        z
    }

    #[test]
    fn chi_on_delta() {
        let (params, ctx) = setup(1, 3, 1.0);
        let z = CoeffGrid::delta(params, ctx, 0, 0);
        let lz = left_mult_chi(&z);
        // chi_1 w_{0,0} = w_{1,0}: all corrections vanish by convention
        assert_eq!(lz.support_len(), 1);
        assert!((lz.get(1, 0) - C64::new(1.0, 0.0)).norm() < 1e-15);
        let c = commutator(&z);
        assert!((c.get(1, 0) - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((c.get(0, 1) + C64::new(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(c.support_len(), 2);
    }

    #[test]
    fn support_grading() {
        let (params, ctx) = setup(2, 5, -1.0);
        let z = CoeffGrid::delta(params, ctx, 3, 4);
        for out in [left_mult_chi(&z), right_mult_chi(&z), commutator(&z)] {
            for (i, j, _) in out.iter() {
                let s = i + j;
                assert!(s == 6 || s == 8, "({i},{j})");
            }
        }
    }

    #[test]
    fn commutator_is_left_minus_right() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for k in 1..=4u32 {
            for n_int in [3u32, 5, 7] {
                for _ in 0..8 {
                    let s = rng.gen_range(0..2 * k);
                    let params = RecCoeffParams::from_root_index(k, s).unwrap();
                    let ctx = ScalarContext::from_n(n_int).unwrap();
                    let z = random_grid(params, ctx, &mut rng, 9, 18);
                    let direct = commutator(&z);
                    let via = left_mult_chi(&z).sub(&right_mult_chi(&z));
                    assert!(
                        direct.sub(&via).sup_norm() < 1e-12,
                        "k={k} N={n_int} s={s}"
                    );
                }
            }
        }
    }

    #[test]
    fn phi_row_zero() {
        let (params, ctx) = setup(1, 7, 1.0);
        let t = fg_tables(2, 4, 6, &params, &ctx).unwrap();
        // f^{l,0} = delta_{(m,l)}, g^{l,0} = 0, phi^{l,0}_i = -1 on 0..=m
        assert_eq!(t.f(0, 2, 4), 1.0);
        assert_eq!(t.f(0, 1, 5), 0.0);
        assert_eq!(t.g(0, 3, 4), 0.0);
        for i in 0..=2i64 {
            assert_eq!(t.phi.phi(0, i), -1.0);
        }
        assert_eq!(t.phi.phi(0, -1), 0.0);
        assert_eq!(t.phi.phi(0, 3), 0.0);
    }

    #[test]
    fn f_recovered_from_phi() {
        let (params, ctx) = setup(2, 3, 0.0);
        let (m, l) = (1u32, 3u32);
        let t = fg_tables(m, l, 8, &params, &ctx).unwrap();
        for p in 0..=8u32 {
            for i in 0..=(m + 2 * p) as i64 {
                let j = (m + l + 2 * p) as i64 - i;
                let expect = t.phi.phi(p, (m + p) as i64 - i - 1) - t.phi.phi(p, (m + p) as i64 - i);
                assert!(
                    (t.f(p, i, j) - expect).abs() < 1e-12,
                    "p={p} i={i}"
                );
            }
            // support and parity: f vanishes off its diagonal
            assert_eq!(t.f(p, 0, 0), 0.0);
        }
    }

    #[test]
    fn phi_two_routes_agree() {
        for (k, n_int, mu_re) in [(1u32, 3u32, 1.0), (2, 7, -1.0), (3, 5, 0.5)] {
            let (params, ctx) = setup(k, n_int, mu_re);
            for (m, l) in [(0u32, 0u32), (1, 2), (2, 5)] {
                let a = phi_table(m, l, 10, &params, &ctx).unwrap();
                let b = phi_table_direct(m, l, 10, &params, &ctx).unwrap();
                for p in 0..=10u32 {
                    for i in -(p as i64)..=(m + p) as i64 {
                        assert!(
                            (a.phi(p, i) - b.phi(p, i)).abs() < 1e-12,
                            "k={k} m={m} l={l} p={p} i={i}: {} vs {}",
                            a.phi(p, i),
                            b.phi(p, i)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn f_vanishes_beyond_support() {
        // the inductive formula itself returns 0 for i > m + 2p on its
        // diagonal, because every phi index falls outside [-p, m+p]
        let (params, ctx) = setup(2, 5, 0.5);
        let (m, l) = (1u32, 4u32);
        let t = fg_tables(m, l, 6, &params, &ctx).unwrap();
        for p in 1..=6u32 {
            let diag = (m + l + 2 * p) as i64;
            for extra in 1..=3i64 {
                let i = (m + 2 * p) as i64 + extra;
                let j = diag - i;
                if j < 0 {
                    continue;
                }
                assert_eq!(t.f(p, i, j), 0.0, "p={p} i={i}");
                // every phi factor of the defining formula sits below
                // -(p-1) there, so the formula itself gives 0 as well
                let pm = (m + p - 1) as i64;
                for off in [-1i64, 0, 1, 2] {
                    assert_eq!(t.phi.phi(p - 1, pm - i + off), 0.0);
                }
            }
        }
    }

    #[test]
    fn g_support_and_parity() {
        let (params, ctx) = setup(1, 7, -0.5);
        let (m, l) = (2u32, 4u32);
        let t = fg_tables(m, l, 8, &params, &ctx).unwrap();
        for p in 1..=8u32 {
            for i in 0..=20i64 {
                for j in 0..=20i64 {
                    let v = t.g(p, i, j);
                    if v != 0.0 {
                        let s = (i + j) as u32;
                        assert!(s >= m + l + 1 && s <= m + l + 2 * p - 1, "({i},{j})");
                        assert_eq!((s - (m + l + 1)) % 2, 0, "parity at ({i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn phi_support_exact() {
        let (params, ctx) = setup(1, 7, 1.0);
        let t = phi_table(2, 3, 12, &params, &ctx).unwrap();
        for p in 0..=12u32 {
            assert_eq!(t.phi(p, -(p as i64) - 1), 0.0);
            assert_eq!(t.phi(p, (2 + p) as i64 + 1), 0.0);
        }
    }

    #[test]
    fn iterated_move_p0_and_p1() {
        let (params, ctx) = setup(1, 3, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = random_grid(params, ctx, &mut rng, 8, 25);
        // p = 0 is the tautology z_{m,l} = z_{m,l}
        assert_eq!(verify_iterated_move(&z, 1, 2, 0).unwrap(), 0.0);
        // p = 1 is the commutator relation rearranged
        let r = verify_iterated_move(&z, 1, 2, 1).unwrap();
        assert!(r < 1e-12 * z.l2_norm().max(1.0), "{r:e}");
    }

    #[test]
    fn iterated_move_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..60 {
            let k = rng.gen_range(1..=3u32);
            let s = rng.gen_range(0..2 * k);
            let n_int = [3u32, 7][rng.gen_range(0..2usize)];
            let params = RecCoeffParams::from_root_index(k, s).unwrap();
            let ctx = ScalarContext::from_n(n_int).unwrap();
            let z = random_grid(params, ctx, &mut rng, 12, 30);
            let m = rng.gen_range(0..=3u32);
            let l = rng.gen_range(m..=6u32);
            let p = rng.gen_range(0..=8u32);
            let r = verify_iterated_move(&z, m, l, p).unwrap();
            assert!(
                r <= 1e-9 * z.l2_norm().max(1e-12),
                "k={k} N={n_int} m={m} l={l} p={p}: {r:e}"
            );
        }
    }

    #[test]
    fn masks() {
        let (params, ctx) = setup(1, 3, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = random_grid(params, ctx, &mut rng, 6, 20);
        // E_0 = identity
        assert_eq!(project_em(&z, 0).sub(&z).sup_norm(), 0.0);
        // idempotence
        let e2 = project_em(&z, 2);
        assert_eq!(project_em(&e2, 2).sub(&e2).sup_norm(), 0.0);
        let q2 = project_qm(&z, 2);
        assert_eq!(project_qm(&q2, 2).sub(&q2).sup_norm(), 0.0);
        // (1 - E_m) z supported on i < m or j < m
        let rest = z.sub(&e2);
        for (i, j, c) in rest.iter() {
            if c.norm() > 0.0 {
                assert!(i < 2 || j < 2);
            }
        }
    }

    #[test]
    fn phi_bound_stability() {
        let (params, ctx) = setup(1, 7, 1.0);
        let b = phi_bound_check(0, &params, &ctx, 60, 4.0, 8).unwrap();
        assert!(b.stable, "running max {:?}", &b.running_max[50..]);
        assert!(b.k_empirical >= 1.0); // phi^{l,0}_0 = -1
        assert!(b.k_empirical.is_finite());
        // K does not decrease with m
        let b1 = phi_bound_check(1, &params, &ctx, 40, 4.0, 6).unwrap();
        let b2 = phi_bound_check(2, &params, &ctx, 40, 4.0, 6).unwrap();
        assert!(b1.k_empirical >= b.k_empirical * (1.0 - 1e-12));
        assert!(b2.k_empirical >= b1.k_empirical * (1.0 - 1e-12));
    }

    #[test]
    fn r_domain() {
        let (params, ctx) = setup(1, 3, 1.0);
        // for N = 3 the admissible interval is extremely narrow
        assert!(phi_bound_check(0, &params, &ctx, 10, 4.0, 2).is_err());
        let r = default_r(ctx.q).unwrap();
        assert!(r > 3.4);
        assert!(phi_bound_check(0, &params, &ctx, 10, r, 2).is_ok());
        let ctx7 = ScalarContext::from_n(7).unwrap();
        assert!((default_r(ctx7.q).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn support_localization_trivial_and_random() {
        let (params, ctx) = setup(1, 7, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        // z supported in {i, j >= m} gives lhs = 0
        let mut z = CoeffGrid::new(params, ctx);
        z.set(3, 5, C64::new(1.0, -0.5));
        z.set(4, 3, C64::new(0.25, 0.0));
        let chk = support_localization_check(&z, 2, 4).unwrap();
        assert_eq!(chk.lhs, 0.0);
        assert!(chk.ok);
        // random instances
        for _ in 0..20 {
            let z = random_grid(params, ctx, &mut rng, 10, 25);
            for m in 1..=2u32 {
                let p = rng.gen_range(1..=20u32);
                let chk = support_localization_check(&z, m, p).unwrap();
                assert!(chk.ok, "m={m} p={p}: lhs {} rhs {}", chk.lhs, chk.rhs);
            }
        }
    }
}
