//! Scalable computation of the radial Gram blocks G_n(k, Re mu, q) through
//! the three-term recursion, plus norms, diagonal-dominance certification,
//! off-diagonal decay profiling and the smallest-N sweep.

use rayon::prelude::*;
use serde::Serialize;

use crate::linalg::sym_eigen;
use crate::scalars::{coeff_abc, q_from_n, RecCoeffParams, ScalarContext};
use crate::{Error, Result};

/// One diagonal block of the Gram matrix: the pairings of the vectors
/// x_{n;i} for i + k + j = n, a real symmetric matrix of side n - k + 1.
#[derive(Debug, Clone, Serialize)]
pub struct GramBlock {
    pub k: u32,
    pub mu_re: f64,
    pub q: f64,
    pub n: u32,
    entries: Vec<f64>,
}

impl GramBlock {
    pub fn from_entries(k: u16, mu_re: f64, q: f64, n: u16, entries: Vec<f64>) -> Result<Self> {
        let side = n as usize - k as usize + 1;
        if entries.len() != side * side {
            return Err(Error::Domain("gram block side mismatch".into()));
        }
        Ok(GramBlock {
            k: k as u32,
            mu_re,
            q,
            n: n as u32,
            entries,
        })
    }

    pub fn side(&self) -> usize {
        (self.n - self.k + 1) as usize
    }

    pub fn get(&self, i: usize, p: usize) -> f64 {
        self.entries[i * self.side() + p]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Max deviation from symmetry.
    pub fn symmetry_residual(&self) -> f64 {
        let s = self.side();
        let mut worst = 0.0f64;
        for i in 0..s {
            for p in 0..i {
                worst = worst.max((self.get(i, p) - self.get(p, i)).abs());
            }
        }
        worst
    }

    /// Max deviation from persymmetry G_{i,p} = G_{s-1-i, s-1-p}.
    pub fn persymmetry_residual(&self) -> f64 {
        let s = self.side();
        let mut worst = 0.0f64;
        for i in 0..s {
            for p in 0..s {
                worst = worst.max((self.get(i, p) - self.get(s - 1 - i, s - 1 - p)).abs());
            }
        }
        worst
    }
}

/// The blocks G_n for n = k..=n_max, built by the recursion
/// G_{n;i,p} = [p < n-k](1 - A^n_p) G_{n-1;i,p} + [p > 0] B^n_p G_{n-1;i,p-1}
///           + [p > 1] C^n_p G_{n-1;i,p-2}
/// for rows i < n-k, the last row filled by symmetry and the corner by the
/// product formula G_{n;s,s} = prod_{l=k+1..n} (1 - A^l_0).
pub fn gram_recursive(k: u32, mu_re: f64, q: f64, n_max: u16) -> Result<Vec<GramBlock>> {
    if k < 1 {
        return Err(Error::Domain("gram recursion needs k >= 1".into()));
    }
    if !(0.0..1.0).contains(&q) || q == 0.0 {
        return Err(Error::Domain(format!("q must lie in (0,1), got {q}")));
    }
    if (n_max as u32) < k {
        return Err(Error::Domain("need n_max >= k".into()));
    }
    let params = RecCoeffParams::new(k, mu_re)?;
    let ctx = context_for(q)?;

    let mut blocks: Vec<GramBlock> = Vec::with_capacity((n_max as u32 - k + 1) as usize);
    blocks.push(GramBlock {
        k,
        mu_re,
        q,
        n: k,
        entries: vec![1.0],
    });
    let mut corner = 1.0f64;
    for n in (k + 1)..=(n_max as u32) {
        let side = (n - k + 1) as usize;
        let prev = blocks.last().unwrap();
        let mut entries = vec![0.0f64; side * side];
        let last = side - 1; // row/col index n - k
        for p in 0..side {
            let (ca, cb, cc) = coeff_abc(n as i64, p as i64, &params, &ctx);
            for i in 0..last {
                let mut v = 0.0;
                if p < last {
                    v += (1.0 - ca) * prev.get(i, p);
                }
                if p >= 1 {
                    v += cb * prev.get(i, p - 1);
                }
                if p >= 2 {
                    v += cc * prev.get(i, p - 2);
                }
                entries[i * side + p] = v;
            }
        }
        // last row by symmetry
        for p in 0..last {
            entries[last * side + p] = entries[p * side + last];
        }
        // corner from the mu-independent product formula
        let a0 = coeff_abc(n as i64, 0, &params, &ctx).0;
        corner *= 1.0 - a0;
        entries[last * side + last] = corner;
        blocks.push(GramBlock {
            k,
            mu_re,
            q,
            n,
            entries,
        });
    }
    Ok(blocks)
}

fn context_for(q: f64) -> Result<ScalarContext> {
    // recover integer mode when q matches some q(N) to full precision
    let n_guess = (q + 1.0 / q).round();
    if n_guess >= 3.0 && n_guess <= u32::MAX as f64 {
        let n = n_guess as u32;
        if let Ok(qn) = q_from_n(n) {
            if (qn - q).abs() <= 4.0 * f64::EPSILON * q {
                return ScalarContext::from_n(n);
            }
        }
    }
    ScalarContext::from_q(q)
}

/// Operator norm, inverse norm and condition number of a block.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GramNorms {
    pub norm: f64,
    pub inv_norm: f64,
    pub cond: f64,
}

/// Norms via the symmetric eigendecomposition; a non-positive smallest
/// eigenvalue flags the inverse norm (and condition number) as infinite.
pub fn norms(g: &GramBlock) -> GramNorms {
    let side = g.side();
    let (vals, _) = sym_eigen(&g.entries, side);
    let norm = vals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let smallest = vals[0];
    let inv_norm = if smallest <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / smallest
    };
    GramNorms {
        norm,
        inv_norm,
        cond: norm * inv_norm,
    }
}

/// Diagonal-dominance data for one chain of blocks.
#[derive(Debug, Clone, Serialize)]
pub struct RieszReport {
    pub k: u32,
    pub mu_re: f64,
    pub q: f64,
    pub n_max: u16,
    /// max over n of the splitting norm || off(G_n) diag(G_n)^{-1} ||.
    pub margin: f64,
    pub sup_norm: f64,
    pub sup_inv_norm: f64,
    pub sup_cond: f64,
    /// per-n rows (n, norm, inv_norm, cond, margin_n)
    pub per_n: Vec<(u32, f64, f64, f64, f64)>,
}

/// Splits each G_n into diagonal + off-diagonal part and certifies
/// invertibility through the Neumann-series mechanism: margin < 1 makes
/// G_n = (I + off diag^{-1}) diag invertible with uniform bounds.
pub fn riesz_margin(k: u32, mu_re: f64, q: f64, n_max: u16) -> Result<RieszReport> {
    let blocks = gram_recursive(k, mu_re, q, n_max)?;
    let mut margin = 0.0f64;
    let mut sup_norm = 0.0f64;
    let mut sup_inv = 0.0f64;
    let mut sup_cond = 0.0f64;
    let mut per_n = Vec::with_capacity(blocks.len());
    for g in &blocks {
        let side = g.side();
        for p in 0..side {
            if g.get(p, p) <= 0.0 {
                return Err(Error::NonPositiveDiagonal { n: g.n, p: p as u32 });
            }
        }
        // M = off(G) diag(G)^{-1}; spectral norm via M^T M
        let mut m = vec![0.0f64; side * side];
        for i in 0..side {
            for p in 0..side {
                if i != p {
                    m[i * side + p] = g.get(i, p) / g.get(p, p);
                }
            }
        }
        let mut mtm = vec![0.0f64; side * side];
        for i in 0..side {
            for j in 0..side {
                let mut acc = 0.0;
                for t in 0..side {
                    acc += m[t * side + i] * m[t * side + j];
                }
                mtm[i * side + j] = acc;
            }
        }
        let (vals, _) = sym_eigen(&mtm, side);
        let mn = vals.last().copied().unwrap_or(0.0).max(0.0).sqrt();
        let nm = norms(g);
        margin = margin.max(mn);
        sup_norm = sup_norm.max(nm.norm);
        sup_inv = sup_inv.max(nm.inv_norm);
        sup_cond = sup_cond.max(nm.cond);
        per_n.push((g.n, nm.norm, nm.inv_norm, nm.cond, mn));
    }
    Ok(RieszReport {
        k,
        mu_re,
        q,
        n_max,
        margin,
        sup_norm,
        sup_inv_norm: sup_inv,
        sup_cond,
        per_n,
    })
}

/// Per-band maxima of |G_{n;i,p}| over |i-p| = b, plus the least-squares
/// slope of log max against b (over strictly positive maxima).
#[derive(Debug, Clone, Serialize)]
pub struct DecayProfile {
    pub bands: Vec<(u32, f64)>,
    pub log_slope: Option<f64>,
}

pub fn decay_profile(g: &GramBlock) -> DecayProfile {
    let side = g.side();
    let mut bands = Vec::with_capacity(side);
    for b in 0..side {
        let mut mx = 0.0f64;
        for i in 0..side - b {
            mx = mx.max(g.get(i, i + b).abs());
        }
        bands.push((b as u32, mx));
    }
    let pts: Vec<(f64, f64)> = bands
        .iter()
        .filter(|&&(_, m)| m > 1e-300)
        .map(|&(b, m)| (b as f64, m.ln()))
        .collect();
    let log_slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let denom = n * sxx - sx * sx;
        if denom.abs() > 0.0 {
            Some((n * sxy - sx * sy) / denom)
        } else {
            None
        }
    } else {
        None
    };
    DecayProfile { bands, log_slope }
}

/// One row of the smallest-N sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub n_int: u32,
    pub q: f64,
    pub margin: f64,
    pub sup_norm: f64,
    pub sup_inv_norm: f64,
    pub sup_cond: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Smallest N in range whose margin stays below 1.
    pub smallest_pass: Option<u32>,
    /// Whether margins were monotone non-increasing in N.
    pub monotone: bool,
}

/// For each N in range, the worst diagonal-dominance margin over k <= k_max
/// and all rotation-root values of Re mu, with n running up to n_max.
pub fn estimate_n0(k_max: u32, n_max: u16, n_range: (u32, u32)) -> Result<SweepReport> {
    if n_range.0 < 3 || n_range.1 < n_range.0 {
        return Err(Error::Domain("sweep needs 3 <= N_min <= N_max".into()));
    }
    let ns: Vec<u32> = (n_range.0..=n_range.1).collect();
    let rows: Vec<Result<SweepRow>> = ns
        .par_iter()
        .map(|&n_int| {
            let q = q_from_n(n_int)?;
            let mut margin = 0.0f64;
            let mut sup_norm = 0.0f64;
            let mut sup_inv = 0.0f64;
            let mut sup_cond = 0.0f64;
            for k in 1..=k_max {
                for mu_re in RecCoeffParams::mu_re_values(k) {
                    let nm = (n_max as u32).max(k) as u16;
                    let rep = riesz_margin(k, mu_re, q, nm)?;
                    margin = margin.max(rep.margin);
                    sup_norm = sup_norm.max(rep.sup_norm);
                    sup_inv = sup_inv.max(rep.sup_inv_norm);
                    sup_cond = sup_cond.max(rep.sup_cond);
                }
            }
            Ok(SweepRow {
                n_int,
                q,
                margin,
                sup_norm,
                sup_inv_norm: sup_inv,
                sup_cond,
                pass: margin < 1.0,
            })
        })
        .collect();
    let rows: Vec<SweepRow> = rows.into_iter().collect::<Result<_>>()?;
    let smallest_pass = rows.iter().find(|r| r.pass).map(|r| r.n_int);
    let monotone = rows.windows(2).all(|w| w[1].margin <= w[0].margin * (1.0 + 1e-12));
    Ok(SweepReport {
        rows,
        smallest_pass,
        monotone,
    })
}
