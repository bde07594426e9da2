//! Acceptance suite: one test per criterion. Each prints a PASS/FAIL line
//! straight to stderr so the verdicts show up even when output is captured.

use std::io::Write;

use lbddnn::checks::{self, CheckResult};

fn report(result: CheckResult) {
    let _ = writeln!(std::io::stderr(), "{}", result.line());
    assert!(result.passed, "{}", result.line());
}

#[test]
fn criterion_1_jacobian_oracle() {
    let r = checks::jacobian_oracle();
    assert!(r.seconds < 60.0, "took {:.1} s", r.seconds);
    report(r);
}

#[test]
fn criterion_2_kronecker_identity() {
    let r = checks::kronecker_identity();
    assert!(r.seconds < 1.0, "took {:.3} s", r.seconds);
    report(r);
}

#[test]
fn criterion_3_dropped_weight_freezing() {
    report(checks::dropped_weight_freezing());
}

#[test]
fn criterion_4_projection_confinement() {
    report(checks::projection_confinement());
}

#[test]
fn criterion_5_table1_reproduction() {
    let r = checks::table1_reproduction();
    assert!(r.seconds < 600.0, "took {:.1} s", r.seconds);
    report(r);
}

#[test]
fn criterion_6_convergence() {
    report(checks::convergence());
}

#[test]
fn criterion_7_lyapunov_monitor() {
    report(checks::lyapunov_monitor());
}

#[test]
fn criterion_8_determinism_and_schedule() {
    report(checks::determinism_and_schedule());
}

#[test]
fn criterion_9_step_halving() {
    report(checks::step_halving());
}
