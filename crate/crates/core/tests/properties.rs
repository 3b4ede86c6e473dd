//! Property suites for block norms, amalgam norms, norm brackets and scaling.

#[path = "support/properties.rs"]
mod suites;

fn check(suite: suites::Suite) {
    if let Err(e) = suite() {
        panic!("{e}");
    }
}

#[test]
fn schur_bound_dominates_measured_norms() {
    check(suites::schur_soundness);
}

#[test]
fn embedding_constant_is_sound() {
    check(suites::embedding_soundness);
}

#[test]
fn block_norms_are_subadditive_under_splitting() {
    check(suites::block_subadditivity);
}

#[test]
fn adjoint_blocks_transpose_and_heat_sums_agree() {
    check(suites::duality_symmetry);
}

#[test]
fn norms_at_dual_exponents_agree_within_brackets() {
    check(suites::dual_exponents);
}

#[test]
fn brackets_contain_exhaustive_norms_of_sign_kernels() {
    check(suites::bracket_validity);
}

#[test]
fn scaling_covariance_residuals_are_round_off() {
    check(suites::scaling_covariance);
}
