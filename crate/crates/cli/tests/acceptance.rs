//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line with its measurements (`cargo test --test acceptance --
//! --nocapture` shows them).

use hvprox::validate::{self, CheckOutcome};

fn report(o: CheckOutcome) {
    println!("criterion {}", o.line());
    assert!(
        o.pass,
        "criterion {} ({}) failed: {}",
        o.id, o.name, o.detail
    );
}

#[test]
fn criterion_01_recursion_step() {
    report(validate::recursion_step());
}

#[test]
fn criterion_02_recursion_unrolled() {
    report(validate::recursion_unrolled());
}

#[test]
fn criterion_03_schedule_constraint() {
    report(validate::schedule_constraint());
}

#[test]
fn criterion_04_rate_bound() {
    report(validate::rate_bound_check());
}

#[test]
fn criterion_05_rate_exponent() {
    report(validate::rate_exponent());
}

#[test]
fn criterion_06_oracle_accounting() {
    report(validate::oracle_accounting());
}

#[test]
fn criterion_07_degenerate_cases() {
    report(validate::degenerate_cases());
}

#[test]
fn criterion_08_prox_toolkit() {
    report(validate::prox_toolkit());
}

#[test]
fn criterion_09_gradient_correctness() {
    report(validate::gradient_correctness());
}

#[test]
fn criterion_10_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    report(validate::reproducibility(dir.path()));
}
