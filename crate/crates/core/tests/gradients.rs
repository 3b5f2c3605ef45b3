//! Analytic gradients against central finite differences in f64.

mod support;

use support::gradcheck::{joint_case, recurrent_case, TOL};

#[test]
fn recurrent_gradients_match_finite_differences() {
    for seed in 0..5 {
        let err = recurrent_case(seed);
        assert!(err <= TOL, "seed {seed}: max relative error {err:e}");
    }
}

#[test]
fn joint_gradients_match_finite_differences() {
    for seed in 0..5 {
        let err = joint_case(seed);
        assert!(err <= TOL, "seed {seed}: max relative error {err:e}");
    }
}
