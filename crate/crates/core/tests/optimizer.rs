mod common;

use common::problem;
use topopt_core::{run_bifidelity, run_single_resolution, OptOutcome};

fn non_monotone_steps(o: &OptOutcome, first: usize) -> usize {
    o.state.history.iter().take(first).collect::<Vec<_>>().windows(2).filter(|w| w[1].q > w[0].q).count()
}

#[test]
fn volume_target_met_every_iteration() {
    let p = problem(
        r#"{"benchmark": "carrier_plate", "lambda": 0.5, "fine_mesh": [16, 16], "coarse_mesh": [8, 8],
            "kl": {"n_modes": 4}, "sampling": {"kind": "monte_carlo", "n": 20, "seed": 4}, "max_iters": 25}"#,
    );
    let s = p.config.opt_settings();
    for o in [
        run_single_resolution(&p.fine, &p.samples, &s).unwrap(),
        run_bifidelity(&p.fine, &p.coarse, &p.samples, &s, &p.config.bifi_settings()).unwrap(),
    ] {
        for h in &o.state.history {
            assert!(h.volume <= p.config.vbar + 1e-4, "iteration {}: volume {}", h.iter, h.volume);
        }
    }
}

#[test]
fn fine_solve_bookkeeping() {
    let p = problem(
        r#"{"benchmark": "l_bracket", "lambda": 0.1, "fine_mesh": [20, 20], "coarse_mesh": [10, 10],
            "n_important": 6, "max_iters": 4, "tol_change": 0.0}"#,
    );
    let s = p.config.opt_settings();
    let bf = run_bifidelity(&p.fine, &p.coarse, &p.samples, &s, &p.config.bifi_settings()).unwrap();
    let total: usize = bf.state.history.iter().map(|h| h.n_hi_solves).sum();
    assert_eq!(total, 4 * 6);
    let hi = run_single_resolution(&p.fine, &p.samples, &s).unwrap();
    assert!(hi.state.history.iter().all(|h| h.n_hi_solves == p.samples.len()));
}

#[test]
fn deterministic_run_settles() {
    let p = problem(
        r#"{"benchmark": "carrier_plate", "lambda": 0.0, "fine_mesh": [30, 30], "coarse_mesh": [30, 30],
            "uncertainty": "none", "max_iters": 60, "tol_change": 0.0}"#,
    );
    assert_eq!(p.samples.len(), 1);
    let o = run_single_resolution(&p.fine, &p.samples, &p.config.opt_settings()).unwrap();
    let h = &o.state.history;
    assert_eq!(o.state.sigma, 0.0);
    for w in h[10..].windows(2) {
        assert!(w[1].q <= 1.01 * w[0].q, "iteration {}: {} -> {}", w[1].iter, w[0].q, w[1].q);
    }
    assert!(h.last().unwrap().q < 0.01 * h[0].q);
}

#[test]
fn carrier_preset_trend() {
    let p = problem(
        r#"{"benchmark": "carrier_plate", "lambda": 0.1, "sampling": {"kind": "monte_carlo", "n": 148, "seed": 2024},
            "max_iters": 50, "tol_change": 0.0}"#,
    );
    let o = run_bifidelity(&p.fine, &p.coarse, &p.samples, &p.config.opt_settings(), &p.config.bifi_settings()).unwrap();
    let bad = non_monotone_steps(&o, 50);
    assert!(bad <= 5, "{bad} increases of Q in the first 50 iterations");
}

#[test]
fn bracket_preset_trend() {
    let p = problem(r#"{"benchmark": "l_bracket", "lambda": 0.1, "max_iters": 50, "tol_change": 0.0}"#);
    let o = run_bifidelity(&p.fine, &p.coarse, &p.samples, &p.config.opt_settings(), &p.config.bifi_settings()).unwrap();
    let bad = non_monotone_steps(&o, 50);
    assert!(bad <= 5, "{bad} increases of Q in the first 50 iterations");
}
