mod common;

#[test]
fn analytic_gradients_match_central_differences() {
    let worst = common::gradcheck::check_gradients().unwrap_or_else(|e| panic!("{e}"));
    for (name, w) in common::gradcheck::LOSS_NAMES.iter().zip(worst) {
        assert!(w <= common::gradcheck::REL_TOL, "{name}: {w}");
    }
}
