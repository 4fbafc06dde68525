mod common;

use common::jacobians;

#[test]
fn analytic_jacobians_match_central_differences() {
    let report = jacobians::run(200, 11);
    let bad: Vec<_> = report.iter().filter(|(_, &e)| e.is_nan() || e > 1e-5).collect();
    assert!(bad.is_empty(), "{bad:?}");
    assert!(report.len() >= 25, "{} checks", report.len());
}
