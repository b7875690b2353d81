mod common;

use common::{fd_gradient_error, geometric_fd_problem, loading_fd_problem};

#[test]
fn loading_gradient_matches_central_differences() {
    let p = loading_fd_problem();
    for lambda in [0.0, 1.0] {
        let err = fd_gradient_error(&p, lambda, 1e-6);
        assert!(err < 1e-5, "lambda {lambda}: {err:.3e}");
    }
}

#[test]
fn geometric_gradient_matches_central_differences() {
    let p = geometric_fd_problem();
    for lambda in [0.0, 1.0] {
        let err = fd_gradient_error(&p, lambda, 1e-6);
        assert!(err < 1e-5, "lambda {lambda}: {err:.3e}");
    }
}
