//! Abstract Temperley-Lieb diagram calculus: non-crossing pair partitions,
//! composition with exact loop counting, tensor products, partial traces,
//! the Markov trace, and formal linear combinations of diagrams.
//!
//! Point convention for a diagram with `top` upper and `bot` lower points:
//! top points are indexed `0..top` left to right, bottom points
//! `top..top+bot` left to right. The circular order used by the
//! non-crossing condition is top-left to top-right, then bottom-right back
//! to bottom-left.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::{BuildHasherDefault, Hasher};

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::scalars::ScalarContext;
use crate::{Error, Result};

/// Largest supported strand count for square diagram spaces.
pub const MAX_STRANDS: u16 = 16;

/// Enumeration is capped where Catalan growth starts to thrash.
const MAX_ENUM_PAIRS: u16 = 14;

const UNSET: u16 = u16::MAX;

/// Word-chunked FNV variant: a cheap deterministic hasher for diagram keys.
#[derive(Default)]
pub struct FnvHasher(u64);

impl Hasher for FnvHasher {
    #[inline]
    fn write(&mut self, bytes: &[u8]) {
        let mut h = if self.0 == 0 { 0xcbf29ce484222325 } else { self.0 };
        let mut chunks = bytes.chunks_exact(8);
        for c in &mut chunks {
            let w = u64::from_le_bytes(c.try_into().unwrap());
            h = (h ^ w).wrapping_mul(0x100000001b3);
        }
        for &b in chunks.remainder() {
            h = (h ^ b as u64).wrapping_mul(0x100000001b3);
        }
        self.0 = h;
    }
    #[inline]
    fn finish(&self) -> u64 {
        self.0
    }
}

type FnvBuild = BuildHasherDefault<FnvHasher>;
pub(crate) type MateMap<V> = HashMap<Box<[u16]>, V, FnvBuild>;

/// A single non-crossing pair partition of `top + bot` boundary points.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TLDiagram {
    top: u16,
    bot: u16,
    /// Fixed-point-free involution; `mate[i]` is the partner of point `i`.
    mate: Box<[u16]>,
}

impl TLDiagram {
    /// Builds a diagram from a pair list, validating the involution, the
    /// parity and the non-crossing condition.
    pub fn new(top: u16, bot: u16, pairs: &[(u16, u16)]) -> Result<Self> {
        let m = top as usize + bot as usize;
        if !m.is_multiple_of(2) {
            return Err(Error::Domain(format!(
                "diagram needs an even point count, got {top}+{bot}"
            )));
        }
        if pairs.len() * 2 != m {
            return Err(Error::Domain(format!(
                "expected {} pairs for {top}+{bot} points",
                m / 2
            )));
        }
        let mut mate = vec![UNSET; m];
        for &(a, b) in pairs {
            let (a, b) = (a as usize, b as usize);
            if a >= m || b >= m || a == b || mate[a] != UNSET || mate[b] != UNSET {
                return Err(Error::Domain(format!(
                    "pairs do not form a fixed-point-free involution on 0..{m}"
                )));
            }
            mate[a] = b as u16;
            mate[b] = a as u16;
        }
        let d = TLDiagram {
            top,
            bot,
            mate: mate.into_boxed_slice(),
        };
        if !d.is_non_crossing() {
            return Err(Error::Domain("pairing has crossing strings".into()));
        }
        Ok(d)
    }

    pub(crate) fn from_mate_unchecked(top: u16, bot: u16, mate: Box<[u16]>) -> Self {
        debug_assert!({
            let d = TLDiagram {
                top,
                bot,
                mate: mate.clone(),
            };
            d.is_non_crossing()
        });
        TLDiagram { top, bot, mate }
    }

    /// Identity diagram on `n` strands.
    pub fn identity(n: u16) -> Self {
        let mut mate = vec![0u16; 2 * n as usize];
        for i in 0..n {
            mate[i as usize] = n + i;
            mate[(n + i) as usize] = i;
        }
        TLDiagram {
            top: n,
            bot: n,
            mate: mate.into_boxed_slice(),
        }
    }

    /// The duality vector t as a diagram 0 -> 2 (both points on the bottom).
    pub fn cup() -> Self {
        TLDiagram {
            top: 0,
            bot: 2,
            mate: vec![1u16, 0u16].into_boxed_slice(),
        }
    }

    /// The adjoint t* as a diagram 2 -> 0 (both points on top).
    pub fn cap() -> Self {
        TLDiagram {
            top: 2,
            bot: 0,
            mate: vec![1u16, 0u16].into_boxed_slice(),
        }
    }

    pub fn top(&self) -> u16 {
        self.top
    }

    pub fn bot(&self) -> u16 {
        self.bot
    }

    pub(crate) fn mate(&self) -> &[u16] {
        &self.mate
    }

    pub fn is_identity(&self) -> bool {
        self.top == self.bot && (0..self.top).all(|i| self.mate[i as usize] == self.top + i)
    }

    /// Sorted pair list, each pair `(min, max)`.
    pub fn pairs(&self) -> Vec<(u16, u16)> {
        let mut out = Vec::with_capacity(self.mate.len() / 2);
        for (i, &j) in self.mate.iter().enumerate() {
            if (i as u16) < j {
                out.push((i as u16, j));
            }
        }
        out
    }

    /// Serialization used in JSON debug output, e.g. `[(0,3),(1,2)]`.
    pub fn pair_string(&self) -> String {
        let parts: Vec<String> = self
            .pairs()
            .iter()
            .map(|&(a, b)| format!("({a},{b})"))
            .collect();
        format!("[{}]", parts.join(","))
    }

    /// Vertical flip: top and bottom edges exchanged, left-right order kept.
    pub fn flip(&self) -> Self {
        let (k, l) = (self.top as usize, self.bot as usize);
        let map = |p: usize| -> u16 {
            if p < k {
                (l + p) as u16
            } else {
                (p - k) as u16
            }
        };
        let mut mate = vec![UNSET; k + l];
        for (i, &j) in self.mate.iter().enumerate() {
            mate[map(i) as usize] = map(j as usize);
        }
        TLDiagram {
            top: self.bot,
            bot: self.top,
            mate: mate.into_boxed_slice(),
        }
    }

    /// Position of point `p` in the circular order.
    fn circ_pos(&self, p: usize) -> usize {
        let k = self.top as usize;
        if p < k {
            p
        } else {
            let l = self.bot as usize;
            k + (k + l - 1 - p)
        }
    }

    fn is_non_crossing(&self) -> bool {
        let m = self.mate.len();
        // partner in circular coordinates
        let mut circ_mate = vec![UNSET; m];
        for (i, &j) in self.mate.iter().enumerate() {
            if j as usize >= m || self.mate[j as usize] as usize != i || j as usize == i {
                return false;
            }
            circ_mate[self.circ_pos(i)] = self.circ_pos(j as usize) as u16;
        }
        // proper nesting along the circle cut at position 0
        let mut stack: Vec<u16> = Vec::with_capacity(m / 2);
        for pos in 0..m {
            let q = circ_mate[pos] as usize;
            if q > pos {
                stack.push(pos as u16);
            } else {
                match stack.pop() {
                    Some(open) if open as usize == q => {}
                    _ => return false,
                }
            }
        }
        stack.is_empty()
    }
}

impl fmt::Display for TLDiagram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{} {}", self.top, self.bot, self.pair_string())
    }
}

/// All non-crossing perfect matchings of `k` top and `l` bottom points in
/// a fixed deterministic order; empty when `k + l` is odd.
pub fn enumerate_nc2(k: u16, l: u16) -> Result<Vec<TLDiagram>> {
    let m = k as usize + l as usize;
    if m % 2 == 1 {
        return Ok(Vec::new());
    }
    if m / 2 > MAX_ENUM_PAIRS as usize {
        return Err(Error::BudgetExceeded(format!(
            "enumerating {} pairs exceeds the Catalan budget ({MAX_ENUM_PAIRS})",
            m / 2
        )));
    }
    // point ids listed in circular order
    let mut circ: Vec<u16> = (0..k).collect();
    circ.extend((k..k + l).rev());
    let matchings = nc_matchings(&circ);
    let mut out = Vec::with_capacity(matchings.len());
    for pairing in matchings {
        let mut mate = vec![UNSET; m];
        for (a, b) in pairing {
            mate[a as usize] = b;
            mate[b as usize] = a;
        }
        out.push(TLDiagram::from_mate_unchecked(k, l, mate.into_boxed_slice()));
    }
    Ok(out)
}

fn nc_matchings(points: &[u16]) -> Vec<Vec<(u16, u16)>> {
    if points.is_empty() {
        return vec![Vec::new()];
    }
    let mut res = Vec::new();
    let mut t = 1;
    while t < points.len() {
        let inside = nc_matchings(&points[1..t]);
        let outside = nc_matchings(&points[t + 1..]);
        for pi in &inside {
            for po in &outside {
                let mut m = Vec::with_capacity(points.len() / 2);
                m.push((points[0], points[t]));
                m.extend_from_slice(pi);
                m.extend_from_slice(po);
                res.push(m);
            }
        }
        t += 2;
    }
    res
}

/// Composes the single diagrams `f` after `g` (first `g: k -> l`, then
/// `f: l -> m`), writing the resulting involution into `mate_out` and
/// returning the number of closed loops.
///
/// Hot kernel: index arithmetic is unchecked, the involution invariants of
/// `TLDiagram` guarantee every access stays in range.
pub(crate) fn compose_diagrams_into(
    f: &TLDiagram,
    g: &TLDiagram,
    visited: &mut Vec<bool>,
    mate_out: &mut Vec<u16>,
) -> u32 {
    let k = g.top as usize;
    let l = g.bot as usize;
    let m = f.bot as usize;
    debug_assert_eq!(f.top as usize, l);
    let gm: &[u16] = &g.mate;
    let fm: &[u16] = &f.mate;

    visited.clear();
    visited.resize(l, false);
    mate_out.clear();
    mate_out.resize(k + m, UNSET);
    let vis = visited.as_mut_slice();
    let out = mate_out.as_mut_slice();

    unsafe {
        let walk = |start_on_g: bool, start: usize, vis: &mut [bool]| -> usize {
            let mut on_g = start_on_g;
            let mut pt = start;
            loop {
                if on_g {
                    let x = *gm.get_unchecked(pt) as usize;
                    if x < k {
                        return x;
                    }
                    *vis.get_unchecked_mut(x - k) = true;
                    on_g = false;
                    pt = x - k;
                } else {
                    let y = *fm.get_unchecked(pt) as usize;
                    if y >= l {
                        return k + (y - l);
                    }
                    *vis.get_unchecked_mut(y) = true;
                    on_g = true;
                    pt = k + y;
                }
            }
        };

        for u in 0..k + m {
            if *out.get_unchecked(u) != UNSET {
                continue;
            }
            let v = if u < k {
                walk(true, u, vis)
            } else {
                walk(false, l + (u - k), vis)
            };
            *out.get_unchecked_mut(u) = v as u16;
            *out.get_unchecked_mut(v) = u as u16;
        }

        let mut loops = 0u32;
        for j in 0..l {
            if *vis.get_unchecked(j) {
                continue;
            }
            loops += 1;
            let mut jj = j;
            loop {
                *vis.get_unchecked_mut(jj) = true;
                let x = *gm.get_unchecked(k + jj) as usize;
                debug_assert!(x >= k);
                let j2 = x - k;
                *vis.get_unchecked_mut(j2) = true;
                let y = *fm.get_unchecked(j2) as usize;
                debug_assert!(y < l);
                jj = y;
                if jj == j {
                    break;
                }
            }
        }
        loops
    }
}

/// A finite formal linear combination of diagrams sharing one arity.
#[derive(Debug, Clone, PartialEq)]
pub struct TLElement {
    top: u16,
    bot: u16,
    terms: BTreeMap<TLDiagram, C64>,
}

impl TLElement {
    pub fn zero(top: u16, bot: u16) -> Self {
        TLElement {
            top,
            bot,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_diagram(d: TLDiagram) -> Self {
        let (top, bot) = (d.top, d.bot);
        let mut terms = BTreeMap::new();
        terms.insert(d, C64::new(1.0, 0.0));
        TLElement { top, bot, terms }
    }

    pub fn identity(n: u16) -> Self {
        Self::from_diagram(TLDiagram::identity(n))
    }

    /// The duality morphism t: 0 -> 2.
    pub fn t() -> Self {
        Self::from_diagram(TLDiagram::cup())
    }

    /// The co-duality morphism t*: 2 -> 0.
    pub fn t_star() -> Self {
        Self::from_diagram(TLDiagram::cap())
    }

    /// The cup-cap generator e = t t* of TL_2.
    pub fn cup_cap() -> Self {
        let d = TLDiagram::new(2, 2, &[(0, 1), (2, 3)]).expect("cup-cap is non-crossing");
        Self::from_diagram(d)
    }

    pub fn top(&self) -> u16 {
        self.top
    }

    pub fn bot(&self) -> u16 {
        self.bot
    }

    pub fn terms(&self) -> impl Iterator<Item = (&TLDiagram, C64)> {
        self.terms.iter().map(|(d, &c)| (d, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, d: &TLDiagram) -> C64 {
        self.terms.get(d).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn is_square(&self) -> bool {
        self.top == self.bot
    }

    fn insert_term(&mut self, d: TLDiagram, c: C64) {
        if c.re == 0.0 && c.im == 0.0 {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(d) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s.re == 0.0 && s.im == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn add(&self, other: &TLElement) -> Result<TLElement> {
        if self.top != other.top || self.bot != other.bot {
            return Err(Error::ArityMismatch(format!(
                "add: ({},{}) vs ({},{})",
                self.top, self.bot, other.top, other.bot
            )));
        }
        let mut out = self.clone();
        for (d, c) in other.terms() {
            out.insert_term(d.clone(), c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &TLElement) -> Result<TLElement> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: C64) -> TLElement {
        if s.re == 0.0 && s.im == 0.0 {
            return TLElement::zero(self.top, self.bot);
        }
        TLElement {
            top: self.top,
            bot: self.bot,
            terms: self.terms.iter().map(|(d, c)| (d.clone(), c * s)).collect(),
        }
    }

    pub fn scale_re(&self, s: f64) -> TLElement {
        self.scale(C64::new(s, 0.0))
    }

    /// Drops coefficients of magnitude at most `threshold`. Opt-in: no
    /// operation prunes small coefficients on its own.
    pub fn cleanup(&self, threshold: f64) -> TLElement {
        TLElement {
            top: self.top,
            bot: self.bot,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.norm() > threshold)
                .map(|(d, c)| (d.clone(), *c))
                .collect(),
        }
    }

    /// Largest coefficient magnitude.
    pub fn coeff_sup(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Adjoint: vertical flip of every diagram, coefficients conjugated.
    pub fn adjoint(&self) -> TLElement {
        TLElement {
            top: self.bot,
            bot: self.top,
            terms: self
                .terms
                .iter()
                .map(|(d, c)| (d.flip(), c.conj()))
                .collect(),
        }
    }
}

/// Diagrammatic composition `f` after `g` (`g: k -> l`, `f: l -> m`); each
/// closed loop contributes a factor delta = q + 1/q.
pub fn compose(f: &TLElement, g: &TLElement, ctx: &ScalarContext) -> Result<TLElement> {
    if f.top != g.bot {
        return Err(Error::ArityMismatch(format!(
            "compose: f has top {}, g has bot {}",
            f.top, g.bot
        )));
    }
    let fv: Vec<(&TLDiagram, C64)> = f.terms().collect();
    let gv: Vec<(&TLDiagram, C64)> = g.terms().collect();
    let delta_pow = delta_powers(ctx.delta, g.bot as usize);

    let pairs = fv.len().saturating_mul(gv.len());
    let accumulate = |chunk: &[(&TLDiagram, C64)]| -> MateMap<C64> {
        let mut local: MateMap<C64> = MateMap::default();
        let mut visited = Vec::new();
        let mut mate_out = Vec::new();
        for &(df, cf) in chunk {
            for &(dg, cg) in &gv {
                let loops = compose_diagrams_into(df, dg, &mut visited, &mut mate_out);
                let c = cf * cg * delta_pow[loops as usize];
                if let Some(slot) = local.get_mut(&mate_out[..]) {
                    *slot += c;
                } else {
                    local.insert(mate_out.clone().into_boxed_slice(), c);
                }
            }
        }
        local
    };

    // fixed chunk size keeps results identical for any thread count
    let chunked: Vec<MateMap<C64>> = if pairs > 1 << 14 {
        fv.par_chunks(128).map(accumulate).collect()
    } else {
        fv.chunks(128).map(accumulate).collect()
    };

    let mut out = TLElement::zero(g.top, f.bot);
    for local in chunked {
        for (mate, c) in local {
            out.insert_term(TLDiagram::from_mate_unchecked(g.top, f.bot, mate), c);
        }
    }
    Ok(out)
}

fn delta_powers(delta: f64, max_loops: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(max_loops + 1);
    let mut p = 1.0;
    for _ in 0..=max_loops {
        v.push(p);
        p *= delta;
    }
    v
}

/// Horizontal juxtaposition; coefficients multiply, no loops can close.
pub fn tensor(f: &TLElement, g: &TLElement) -> TLElement {
    let (k1, l1) = (f.top as usize, f.bot as usize);
    let (k2, l2) = (g.top as usize, g.bot as usize);
    let top = (k1 + k2) as u16;
    let bot = (l1 + l2) as u16;
    let map_f = |p: usize| -> u16 {
        if p < k1 {
            p as u16
        } else {
            (k1 + k2 + (p - k1)) as u16
        }
    };
    let map_g = |p: usize| -> u16 {
        if p < k2 {
            (k1 + p) as u16
        } else {
            (k1 + k2 + l1 + (p - k2)) as u16
        }
    };
    let mut out = TLElement::zero(top, bot);
    for (df, cf) in f.terms() {
        for (dg, cg) in g.terms() {
            let mut mate = vec![UNSET; k1 + k2 + l1 + l2];
            for (i, &j) in df.mate.iter().enumerate() {
                mate[map_f(i) as usize] = map_f(j as usize);
            }
            for (i, &j) in dg.mate.iter().enumerate() {
                mate[map_g(i) as usize] = map_g(j as usize);
            }
            out.insert_term(
                TLDiagram::from_mate_unchecked(top, bot, mate.into_boxed_slice()),
                cf * cg,
            );
        }
    }
    out
}

fn trace_diagram(
    d: &TLDiagram,
    r: usize,
    right: bool,
    visited: &mut Vec<bool>,
    mate_out: &mut Vec<u16>,
) -> u32 {
    let n = d.top as usize;
    debug_assert_eq!(d.bot as usize, n);
    let closed_top = |p: usize| -> bool {
        if right {
            p >= n - r && p < n
        } else {
            p < r
        }
    };
    let closed = |p: usize| -> bool {
        if p < n {
            closed_top(p)
        } else {
            closed_top(p - n)
        }
    };
    // closure arcs join top p with bottom p + n
    let partner = |p: usize| -> usize {
        if p < n {
            p + n
        } else {
            p - n
        }
    };

    visited.clear();
    visited.resize(2 * n, false);
    let keep = n - r;
    mate_out.clear();
    mate_out.resize(2 * keep, UNSET);

    // old index of the u-th surviving point
    let off = if right { 0 } else { r };
    let old_of_new = |u: usize| -> usize {
        if u < keep {
            u + off
        } else {
            n + (u - keep) + off
        }
    };
    let new_of_old = |p: usize| -> usize {
        if p < n {
            p - off
        } else {
            keep + (p - n - off)
        }
    };

    for u in 0..2 * keep {
        if mate_out[u] != UNSET {
            continue;
        }
        let mut x = d.mate[old_of_new(u)] as usize;
        while closed(x) {
            visited[x] = true;
            let cp = partner(x);
            visited[cp] = true;
            x = d.mate[cp] as usize;
        }
        let v = new_of_old(x);
        mate_out[u] = v as u16;
        mate_out[v] = u as u16;
    }

    let mut loops = 0u32;
    for p in 0..n {
        if !closed_top(p) || visited[p] {
            continue;
        }
        loops += 1;
        let mut cur = p;
        loop {
            visited[cur] = true;
            let cp = partner(cur);
            visited[cp] = true;
            let nx = d.mate[cp] as usize;
            if nx == p {
                break;
            }
            cur = nx;
        }
    }
    loops
}

fn partial_trace(f: &TLElement, r: u16, right: bool, ctx: &ScalarContext) -> Result<TLElement> {
    if f.top != f.bot {
        return Err(Error::ArityMismatch(format!(
            "partial trace needs a square element, got {} -> {}",
            f.top, f.bot
        )));
    }
    if r > f.top {
        return Err(Error::Domain(format!(
            "cannot close {r} of {} strands",
            f.top
        )));
    }
    let n = f.top;
    let delta_pow = delta_powers(ctx.delta, n as usize);
    let mut out = TLElement::zero(n - r, n - r);
    let mut visited = Vec::new();
    let mut mate_out = Vec::new();
    for (d, c) in f.terms() {
        let loops = trace_diagram(d, r as usize, right, &mut visited, &mut mate_out);
        out.insert_term(
            TLDiagram::from_mate_unchecked(n - r, n - r, mate_out.clone().into_boxed_slice()),
            c * delta_pow[loops as usize],
        );
    }
    Ok(out)
}

/// Closes the rightmost `r` strands top-to-bottom; each loop contributes delta.
pub fn partial_trace_right(f: &TLElement, r: u16, ctx: &ScalarContext) -> Result<TLElement> {
    partial_trace(f, r, true, ctx)
}

/// Closes the leftmost `r` strands top-to-bottom.
pub fn partial_trace_left(f: &TLElement, r: u16, ctx: &ScalarContext) -> Result<TLElement> {
    partial_trace(f, r, false, ctx)
}

/// Closure of all strands: the sum of coeff * delta^loops.
pub fn markov_trace(f: &TLElement, ctx: &ScalarContext) -> Result<C64> {
    let closed = partial_trace(f, f.top, true, ctx)?;
    Ok(closed
        .terms
        .values()
        .copied()
        .fold(C64::new(0.0, 0.0), |a, b| a + b))
}

/// Index of the full diagram basis of a square space TL_n. Slots are the
/// lexicographic ranks of the Dyck words read off the circular boundary,
/// so composition results are located by O(n) arithmetic with no hashing.
pub struct SquareIndex {
    n: u16,
    diagrams: Vec<TLDiagram>,
    /// ballot[p * stride + o] = number of balanced completions of a prefix
    /// of length p with o unmatched opening steps.
    ballot: Vec<u64>,
    ballot_stride: usize,
    /// slot of the vertical flip of each diagram
    flip_slot: Vec<u32>,
}

impl SquareIndex {
    pub fn new(n: u16) -> Result<Self> {
        let raw = enumerate_nc2(n, n)?;
        let m = 2 * n as usize;
        let stride = m + 2;
        let mut ballot = vec![0u64; (m + 1) * stride];
        ballot[m * stride] = 1;
        for p in (0..m).rev() {
            for o in 0..=m {
                let mut v = ballot[(p + 1) * stride + o + 1];
                if o > 0 {
                    v += ballot[(p + 1) * stride + o - 1];
                }
                ballot[p * stride + o] = v;
            }
        }
        let count = raw.len();
        let mut diagrams: Vec<Option<TLDiagram>> = vec![None; count];
        let mut idx = SquareIndex {
            n,
            diagrams: Vec::new(),
            ballot,
            ballot_stride: stride,
            flip_slot: Vec::new(),
        };
        for d in raw {
            let slot = idx.rank_mate(d.mate()) as usize;
            assert!(slot < count && diagrams[slot].is_none(), "rank not bijective");
            diagrams[slot] = Some(d);
        }
        idx.diagrams = diagrams.into_iter().map(|d| d.unwrap()).collect();
        idx.flip_slot = idx
            .diagrams
            .iter()
            .map(|d| idx.rank_mate(d.flip().mate()))
            .collect();
        Ok(idx)
    }

    /// Rank of the diagram with the given involution among all of TL_n.
    #[inline]
    fn rank_mate(&self, mate: &[u16]) -> u32 {
        let n = self.n as usize;
        let m = 2 * n;
        debug_assert_eq!(mate.len(), m);
        // circular position of point id
        let circ = |id: usize| -> usize { if id < n { id } else { n + (m - 1 - id) } };
        let mut rank = 0u64;
        let mut open = 0usize;
        unsafe {
            for p in 0..m {
                // id sitting at circular position p
                let id = if p < n { p } else { n + (m - 1 - p) };
                let partner = *mate.get_unchecked(id) as usize;
                if circ(partner) > p {
                    open += 1;
                } else {
                    rank += self
                        .ballot
                        .get_unchecked((p + 1) * self.ballot_stride + open + 1);
                    open -= 1;
                }
            }
        }
        rank as u32
    }

    pub fn len(&self) -> usize {
        self.diagrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagrams.is_empty()
    }

    pub fn diagrams(&self) -> &[TLDiagram] {
        &self.diagrams
    }

    pub fn slot_of(&self, d: &TLDiagram) -> u32 {
        self.rank_mate(d.mate())
    }

    /// Coefficients of `e` on the index order.
    pub fn vectorize(&self, e: &TLElement) -> Result<Vec<C64>> {
        if e.top != self.n || e.bot != self.n {
            return Err(Error::ArityMismatch(format!(
                "vectorize: element is {} -> {}, index is TL_{}",
                e.top, e.bot, self.n
            )));
        }
        let mut v = vec![C64::new(0.0, 0.0); self.diagrams.len()];
        for (d, c) in e.terms() {
            v[self.rank_mate(d.mate()) as usize] = c;
        }
        Ok(v)
    }

    /// The element with the given coefficients over the index order.
    pub fn devectorize(&self, coeffs: &[C64]) -> TLElement {
        let mut out = TLElement::zero(self.n, self.n);
        for (i, &c) in coeffs.iter().enumerate() {
            if c.re != 0.0 || c.im != 0.0 {
                out.insert_term(self.diagrams[i].clone(), c);
            }
        }
        out
    }
}

/// Composes several coefficient channels that live over the same square
/// diagram index, sharing the diagram-level gluing work across channels.
/// Channel `c` uses loop factor `deltas[c]`; `a` acts after `b`.
pub fn compose_channels(
    index: &SquareIndex,
    a: &[Vec<C64>],
    b: &[Vec<C64>],
    deltas: &[f64],
) -> Vec<Vec<C64>> {
    assert_eq!(a.len(), deltas.len());
    assert_eq!(b.len(), deltas.len());
    let nchan = deltas.len();
    let ndiag = index.diagrams.len();
    let n = index.n as usize;
    // channel-contiguous layouts keep each accumulation on one cache line
    let zero = C64::new(0.0, 0.0);
    let mut a_flat = vec![zero; ndiag * nchan];
    let mut b_flat = vec![zero; ndiag * nchan];
    for c in 0..nchan {
        for i in 0..ndiag {
            a_flat[i * nchan + c] = a[c][i];
            b_flat[i * nchan + c] = b[c][i];
        }
    }
    let mut pow = vec![0.0f64; (n + 1) * nchan];
    for (c, &d) in deltas.iter().enumerate() {
        let mut p = 1.0;
        for l in 0..=n {
            pow[l * nchan + c] = p;
            p *= d;
        }
    }

    let active = |flat: &[C64]| -> Vec<u32> {
        (0..ndiag as u32)
            .filter(|&i| {
                flat[i as usize * nchan..(i as usize + 1) * nchan]
                    .iter()
                    .any(|c| c.norm_sqr() > 0.0)
            })
            .collect()
    };
    let ai = active(&a_flat);
    let bi = active(&b_flat);

    let work = |chunk: &[u32]| -> Vec<C64> {
        let mut acc = vec![zero; ndiag * nchan];
        let mut visited = Vec::new();
        let mut mate_out = Vec::new();
        for &i in chunk {
            let df = &index.diagrams[i as usize];
            let arow = &a_flat[i as usize * nchan..i as usize * nchan + nchan];
            for &j in &bi {
                let dg = &index.diagrams[j as usize];
                let loops = compose_diagrams_into(df, dg, &mut visited, &mut mate_out) as usize;
                let slot = index.rank_mate(&mate_out) as usize;
                let brow = &b_flat[j as usize * nchan..j as usize * nchan + nchan];
                let prow = &pow[loops * nchan..loops * nchan + nchan];
                let orow = &mut acc[slot * nchan..slot * nchan + nchan];
                for c in 0..nchan {
                    orow[c] += arow[c] * brow[c] * prow[c];
                }
            }
        }
        acc
    };

    let partials: Vec<Vec<C64>> = if ai.len() * bi.len() > 1 << 14 {
        ai.par_chunks(1024).map(work).collect()
    } else {
        ai.chunks(1024).map(work).collect()
    };

    let mut flat_out = vec![zero; ndiag * nchan];
    for part in partials {
        for (o, p) in flat_out.iter_mut().zip(part) {
            *o += p;
        }
    }
    let mut out = vec![vec![zero; ndiag]; nchan];
    for c in 0..nchan {
        for i in 0..ndiag {
            out[c][i] = flat_out[i * nchan + c];
        }
    }
    out
}

/// Self-composition a o a over a square index. Exploits the mirror
/// symmetry of pair contributions: the pair (flip j, flip i) composes to
/// the flip of what (i, j) composes to, with the same loop count, so each
/// mirror orbit is walked once.
pub fn self_compose_channels(
    index: &SquareIndex,
    a: &[Vec<C64>],
    deltas: &[f64],
) -> Vec<Vec<C64>> {
    assert_eq!(a.len(), deltas.len());
    let nchan = deltas.len();
    let ndiag = index.diagrams.len();
    let n = index.n as usize;
    let zero = C64::new(0.0, 0.0);
    let mut a_flat = vec![zero; ndiag * nchan];
    for c in 0..nchan {
        for i in 0..ndiag {
            a_flat[i * nchan + c] = a[c][i];
        }
    }
    let mut pow = vec![0.0f64; (n + 1) * nchan];
    for (c, &d) in deltas.iter().enumerate() {
        let mut p = 1.0;
        for l in 0..=n {
            pow[l * nchan + c] = p;
            p *= d;
        }
    }
    let active: Vec<u32> = (0..ndiag as u32)
        .filter(|&i| {
            a_flat[i as usize * nchan..(i as usize + 1) * nchan]
                .iter()
                .any(|c| c.norm_sqr() > 0.0)
        })
        .collect();
    let fl = &index.flip_slot;

    let work = |chunk: &[u32]| -> Vec<C64> {
        let mut acc = vec![zero; ndiag * nchan];
        let mut visited = Vec::new();
        let mut mate_out = Vec::new();
        for &i in chunk {
            let fi = fl[i as usize];
            let df = &index.diagrams[i as usize];
            for &j in &active {
                let fj = fl[j as usize];
                // canonical representative of the orbit {(i,j), (fj,fi)}
                if (fj, fi) < (i, j) {
                    continue;
                }
                let dg = &index.diagrams[j as usize];
                let loops = compose_diagrams_into(df, dg, &mut visited, &mut mate_out) as usize;
                let slot = index.rank_mate(&mate_out) as usize;
                let prow = &pow[loops * nchan..loops * nchan + nchan];
                let arow = &a_flat[i as usize * nchan..i as usize * nchan + nchan];
                let brow = &a_flat[j as usize * nchan..j as usize * nchan + nchan];
                {
                    let orow = &mut acc[slot * nchan..slot * nchan + nchan];
                    for c in 0..nchan {
                        orow[c] += arow[c] * brow[c] * prow[c];
                    }
                }
                if (fj, fi) != (i, j) {
                    let mslot = fl[slot] as usize;
                    let marow = &a_flat[fj as usize * nchan..fj as usize * nchan + nchan];
                    let mbrow = &a_flat[fi as usize * nchan..fi as usize * nchan + nchan];
                    let orow = &mut acc[mslot * nchan..mslot * nchan + nchan];
                    for c in 0..nchan {
                        orow[c] += marow[c] * mbrow[c] * prow[c];
                    }
                }
            }
        }
        acc
    };

    let partials: Vec<Vec<C64>> = if active.len() * active.len() > 1 << 14 {
        active.par_chunks(1024).map(work).collect()
    } else {
        active.chunks(1024).map(work).collect()
    };

    let mut flat_out = vec![zero; ndiag * nchan];
    for part in partials {
        for (o, p) in flat_out.iter_mut().zip(part) {
            *o += p;
        }
    }
    let mut out = vec![vec![zero; ndiag]; nchan];
    for c in 0..nchan {
        for i in 0..ndiag {
            out[c][i] = flat_out[i * nchan + c];
        }
    }
    out
}

/// Mirror of a coefficient vector: entry for D moves to the slot of
/// flip(D). No conjugation is applied.
pub fn flip_vector(index: &SquareIndex, v: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); v.len()];
    for (i, &c) in v.iter().enumerate() {
        out[index.flip_slot[i] as usize] = c;
    }
    out
}
