//! The acceptance gate: runs the full fifteen-criterion suite at the
//! standard tolerances and requires every criterion to pass.

#[test]
fn acceptance_suite_all_criteria_pass() {
    let code = wiener_lab_cli::acceptance::acceptance_suite(1, 1.0).unwrap();
    assert_eq!(code, 0, "at least one acceptance criterion failed");
}
