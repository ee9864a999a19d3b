//! Acceptance battery: one test per criterion, each printing a pass/fail
//! line (visible with `cargo test -- --nocapture` or on failure).

use std::time::Instant;

use tlnum::suite::{self, Report};

const SEED: u64 = 1;

fn run(
    criterion: &str,
    budget_secs: Option<f64>,
    battery: impl FnOnce() -> tlnum::Result<Report>,
) {
    let t0 = Instant::now();
    let report = battery().unwrap_or_else(|e| panic!("{criterion}: suite error: {e}"));
    let elapsed = t0.elapsed();
    let failures = report.failures();
    let status = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!(
        "{criterion}: {status} ({} cases, {:.2?})",
        report.cases.len(),
        elapsed
    );
    for f in &failures {
        println!(
            "  FAILED {} [{}] residual {:e} tol {:e}",
            f.name, f.params, f.residual, f.tol
        );
    }
    assert!(failures.is_empty(), "{criterion} has failing cases");
    if let Some(budget) = budget_secs {
        assert!(
            elapsed.as_secs_f64() <= budget,
            "{criterion} exceeded its runtime budget: {elapsed:.2?} > {budget}s"
        );
    }
}

#[test]
fn c01_jones_wenzl_battery() {
    run("criterion 01 (jones-wenzl battery)", Some(60.0), || {
        suite::jw_battery(10)
    });
}

#[test]
fn c02_partial_trace_identities() {
    run("criterion 02 (partial trace identities)", None, || {
        suite::partial_trace_battery(10)
    });
}

#[test]
fn c03_fiber_functoriality() {
    run("criterion 03 (fiber functoriality and ranks)", None, || {
        suite::fiber_functor_battery(SEED)
    });
}

#[test]
fn c04_ccirc_dimensions() {
    run("criterion 04 (doubly traceless dimensions)", None, || {
        suite::ccirc_dimension_battery()
    });
}

#[test]
fn c05_rotation_unitary_of_finite_order() {
    run("criterion 05 (rotation map)", None, || {
        suite::rotation_battery()
    });
}

#[test]
fn c06_gram_recursion_vs_oracle() {
    run("criterion 06 (gram recursion vs oracle)", Some(120.0), || {
        suite::gram_oracle_battery()
    });
}

#[test]
fn c07_one_step_trace_identity() {
    run("criterion 07 (one-step trace identity)", None, || {
        suite::one_step_trace_battery()
    });
}

#[test]
fn c08_riesz_certification() {
    run(
        "criterion 08 (diagonal dominance certification)",
        Some(30.0),
        || suite::riesz_battery(),
    );
}

#[test]
fn c09_iterated_move_identity() {
    run("criterion 09 (iterated move identity)", None, || {
        suite::iterated_move_battery(SEED)
    });
}

#[test]
fn c10_phi_bound_stability() {
    run("criterion 10 (phi growth bound)", None, || {
        suite::phi_bound_battery()
    });
}

#[test]
fn c11_support_localization() {
    run("criterion 11 (support localization)", None, || {
        suite::support_localization_battery(SEED)
    });
}

#[test]
fn c12_qualitative_decay_probes() {
    run("criterion 12 (qualitative decay probes)", None, || {
        suite::decay_probe_battery(SEED)
    });
}

#[test]
fn c13_alpha_closed_form() {
    run("criterion 13 (alpha closed form)", None, || {
        suite::alpha_battery()
    });
}
