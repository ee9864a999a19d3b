//! Jones-Wenzl projections built through both recursion relations, with
//! their trace and annihilation identities.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::diagram::{
    compose, markov_trace, partial_trace_right, tensor, TLElement, MAX_STRANDS,
};
use crate::scalars::{qdim, ScalarContext};
use crate::{Error, Result};

/// Cache key: strand count and the exact bit pattern of q. No cross-q reuse.
type CacheKey = (u16, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<TLElement>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<TLElement>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// The tangle id^(l-1) x t x id^(n-l-1) x t* of arity n -> n.
fn wenzl_tangle(n: u16, l: u16) -> TLElement {
    let mut e = TLElement::identity(l - 1);
    e = tensor(&e, &TLElement::t());
    e = tensor(&e, &TLElement::identity(n - l - 1));
    tensor(&e, &TLElement::t_star())
}

fn build_jw(n: u16, ctx: &ScalarContext) -> Result<TLElement> {
    if n == 1 {
        return Ok(TLElement::identity(1));
    }
    let prev = jw(n - 1, ctx)?;
    let base = tensor(&prev, &TLElement::identity(1));
    let mut acc = base.clone();
    let dn1 = qdim(n as i64 - 1, ctx);
    for l in 1..n {
        let sign = if (n - l).is_multiple_of(2) { 1.0 } else { -1.0 };
        let coeff = sign * qdim(l as i64 - 1, ctx) / dn1;
        let term = compose(&wenzl_tangle(n, l), &base, ctx)?;
        acc = acc.add(&term.scale_re(coeff))?;
    }
    Ok(acc)
}

/// The n-th Jones-Wenzl projection as a TL element, via the one-sided
/// recursion; results are cached per (n, q).
pub fn jw(n: u16, ctx: &ScalarContext) -> Result<Arc<TLElement>> {
    if !(1..=MAX_STRANDS).contains(&n) {
        return Err(Error::Domain(format!(
            "Jones-Wenzl index must satisfy 1 <= n <= {MAX_STRANDS}, got {n}"
        )));
    }
    let key = (n, ctx.q.to_bits());
    if let Some(hit) = cache().lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }
    let built = Arc::new(build_jw(n, ctx)?);
    // idempotence guard where it is cheap; the larger projections are
    // covered by the verification battery
    if n <= 8 {
        let sq = compose(&built, &built, ctx)?;
        let residual = sq.sub(&built)?.coeff_sup();
        if residual > ctx.tol_identity {
            return Err(Error::Domain(format!(
                "built P_{n} fails idempotence: residual {residual:e}"
            )));
        }
    }
    cache().lock().unwrap().insert(key, built.clone());
    Ok(built)
}

/// P_n assembled from the bilateral recursion around a middle P_{n-2}
/// (five terms for n = 3, six for n >= 4).
pub fn jw_bilateral(n: u16, ctx: &ScalarContext) -> Result<TLElement> {
    if !(3..=MAX_STRANDS).contains(&n) {
        return Err(Error::Domain(format!(
            "bilateral recursion needs 3 <= n <= {MAX_STRANDS}, got {n}"
        )));
    }
    let mid = jw(n - 2, ctx)?;
    let frame = tensor(
        &tensor(&TLElement::identity(1), &mid),
        &TLElement::identity(1),
    );
    let dn1 = qdim(n as i64 - 1, ctx);
    let dn2 = qdim(n as i64 - 2, ctx);
    let dn3 = qdim(n as i64 - 3, ctx);
    let d1 = qdim(1, ctx);
    let sign = if n.is_multiple_of(2) { -1.0 } else { 1.0 }; // (-1)^(n-1)

    let e = TLElement::cup_cap();
    let mut terms: Vec<(TLElement, f64)> = vec![
        (
            tensor(&e, &TLElement::identity(n - 2)),
            -dn2 / dn1,
        ),
        (
            tensor(&TLElement::identity(n - 2), &e),
            -dn2 / dn1,
        ),
        (
            tensor(
                &tensor(&TLElement::t(), &TLElement::identity(n - 2)),
                &TLElement::t_star(),
            ),
            sign / dn1,
        ),
        (
            tensor(
                &tensor(&TLElement::t_star(), &TLElement::identity(n - 2)),
                &TLElement::t(),
            ),
            sign / dn1,
        ),
    ];
    if n >= 4 {
        terms.push((
            tensor(&tensor(&e, &TLElement::identity(n - 4)), &e),
            (d1 + dn3 * dn2) / (dn1 * dn2),
        ));
    }

    let mut acc = frame.clone();
    for (m, c) in terms {
        let inner = compose(&m, &frame, ctx)?;
        let sandwiched = compose(&frame, &inner, ctx)?;
        acc = acc.add(&sandwiched.scale_re(c))?;
    }
    Ok(acc)
}

/// Max coefficient of (id x Tr_b)(P_n) - (d_n / d_{n-b}) P_{n-b}, taken
/// relative to the scale d_n / d_{n-b}.
pub fn jw_partial_trace_residual(n: u16, b: u16, ctx: &ScalarContext) -> Result<f64> {
    if n < 2 || b < 1 || b >= n {
        return Err(Error::Domain(format!(
            "partial trace check needs 1 <= b < n, got n={n} b={b}"
        )));
    }
    let pn = jw(n, ctx)?;
    let traced = partial_trace_right(&pn, b, ctx)?;
    let scale = qdim(n as i64, ctx) / qdim((n - b) as i64, ctx);
    let expected = jw(n - b, ctx)?.scale_re(scale);
    Ok(traced.sub(&expected)?.coeff_sup() / scale)
}

/// Max over i of the coefficient norm of (id_i x t* x id_{n-i-2}) P_n.
pub fn jw_annihilation_residual(n: u16, ctx: &ScalarContext) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain("annihilation check needs n >= 2".into()));
    }
    let pn = jw(n, ctx)?;
    let mut worst: f64 = 0.0;
    for i in 0..=n - 2 {
        let cap = tensor(
            &tensor(&TLElement::identity(i), &TLElement::t_star()),
            &TLElement::identity(n - i - 2),
        );
        let hit = compose(&cap, &pn, ctx)?;
        worst = worst.max(hit.coeff_sup());
    }
    Ok(worst)
}

/// Relative deviation of the Markov trace of P_n from d_n.
pub fn jw_trace_residual(n: u16, ctx: &ScalarContext) -> Result<f64> {
    let pn = jw(n, ctx)?;
    let tr = markov_trace(&pn, ctx)?;
    let dn = qdim(n as i64, ctx);
    Ok((tr - dn).norm() / dn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::TLDiagram;

    fn ctx3() -> ScalarContext {
        ScalarContext::from_n(3).unwrap()
    }

    #[test]
    fn jw_one_is_identity() {
        let ctx = ctx3();
        assert_eq!(*jw(1, &ctx).unwrap(), TLElement::identity(1));
    }

    #[test]
    fn jw_two_closed_form() {
        // P_2 = id_2 - (1/N) e
        let ctx = ctx3();
        let p2 = jw(2, &ctx).unwrap();
        let idd = TLDiagram::identity(2);
        let cup = TLDiagram::new(2, 2, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(p2.num_terms(), 2);
        assert!((p2.coefficient(&idd).re - 1.0).abs() < 1e-15);
        assert!((p2.coefficient(&cup).re + 1.0 / 3.0).abs() < 1e-15);
        // idempotence
        let sq = compose(&p2, &p2, &ctx).unwrap();
        assert!(sq.sub(&p2).unwrap().coeff_sup() < 1e-14);
    }

    #[test]
    fn jw_idempotent_small() {
        for n_int in [3u32, 5] {
            let ctx = ScalarContext::from_n(n_int).unwrap();
            for n in 2..=6u16 {
                let p = jw(n, &ctx).unwrap();
                let sq = compose(&p, &p, &ctx).unwrap();
                assert!(
                    sq.sub(&p).unwrap().coeff_sup() < 1e-11,
                    "n={n} N={n_int}"
                );
            }
        }
    }

    #[test]
    fn jw_out_of_range() {
        let ctx = ctx3();
        assert!(jw(0, &ctx).is_err());
        assert!(jw(17, &ctx).is_err());
        assert!(jw_bilateral(2, &ctx).is_err());
    }

    #[test]
    fn bilateral_matches_onesided() {
        let ctx = ctx3();
        // n = 3 uses the five-term variant
        let b3 = jw_bilateral(3, &ctx).unwrap();
        let p3 = jw(3, &ctx).unwrap();
        assert!(b3.sub(&p3).unwrap().coeff_sup() < 1e-12);
        for n in 4..=6u16 {
            let b = jw_bilateral(n, &ctx).unwrap();
            let p = jw(n, &ctx).unwrap();
            assert!(b.sub(&p).unwrap().coeff_sup() < 1e-11, "n={n}");
        }
        let ctx5 = ScalarContext::from_n(5).unwrap();
        for n in 3..=6u16 {
            let b = jw_bilateral(n, &ctx5).unwrap();
            let p = jw(n, &ctx5).unwrap();
            assert!(b.sub(&p).unwrap().coeff_sup() < 1e-11, "n={n} N=5");
        }
    }

    #[test]
    fn partial_trace_identity() {
        let ctx = ctx3();
        // n=2: tr_1(id - e/N) = (N - 1/N) id_1 = (d_2/d_1) id_1
        assert!(jw_partial_trace_residual(2, 1, &ctx).unwrap() < 1e-13);
        for n in 3..=6u16 {
            assert!(jw_partial_trace_residual(n, 1, &ctx).unwrap() < 1e-11, "n={n}");
            for b in 2..n {
                assert!(
                    jw_partial_trace_residual(n, b, &ctx).unwrap() < 1e-11,
                    "n={n} b={b}"
                );
            }
        }
    }

    #[test]
    fn annihilation() {
        let ctx = ctx3();
        // n=2: t* P_2 = t* - (1/N) delta t* = 0 exactly
        let cap = TLElement::t_star();
        let hit = compose(&cap, &jw(2, &ctx).unwrap(), &ctx).unwrap();
        assert_eq!(hit.num_terms(), 0);
        for n in 2..=5u16 {
            assert!(jw_annihilation_residual(n, &ctx).unwrap() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn markov_trace_is_qdim() {
        let ctx = ctx3();
        for n in 1..=6u16 {
            assert!(jw_trace_residual(n, &ctx).unwrap() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn self_adjoint() {
        let ctx = ctx3();
        for n in 2..=6u16 {
            let p = jw(n, &ctx).unwrap();
            assert!(p.adjoint().sub(&p).unwrap().coeff_sup() < 1e-12, "n={n}");
        }
    }
}
