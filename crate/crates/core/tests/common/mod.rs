#![allow(dead_code)]

use topopt_core::optimize::evaluate_moments;
use topopt_core::{parse_config_str, Problem};

pub fn problem(json: &str) -> Problem {
    parse_config_str(json).expect("config").build().expect("problem")
}

/// Largest deviation between the adjoint gradient of `Q` and central
/// differences, relative to the largest gradient entry. Also checks the
/// expected-volume gradient the same way; returns the worse of the two.
pub fn fd_gradient_error(p: &Problem, lambda: f64, h: f64) -> f64 {
    let model = &p.fine;
    let beta = p.config.beta;
    let mut rho = model.initial_design(0.4);
    // break symmetry so the filter and projection see varied input
    for (k, r) in rho.iter_mut().enumerate() {
        if model.designable()[k] {
            *r = 0.3 + 0.4 * ((k * 7919) % 13) as f64 / 13.0;
        }
    }
    let m = evaluate_moments(model, &p.samples, &rho, beta).unwrap();
    let grad = m.objective_gradient(lambda);
    let prep = model.prepare(&rho, beta, p.samples.len()).unwrap();
    let (_, grad_v) = prep.volume(&p.samples.weights);
    drop(prep);
    let q = |r: &[f64]| evaluate_moments(model, &p.samples, r, beta).unwrap().objective(lambda);
    let v = |r: &[f64]| model.expected_volume(r, beta, &p.samples.weights);
    let scale_q = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    let scale_v = grad_v.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    let mut worst = 0.0f64;
    for k in 0..rho.len() {
        if !model.designable()[k] {
            continue;
        }
        let mut up = rho.clone();
        let mut dn = rho.clone();
        up[k] += h;
        dn[k] -= h;
        let fd_q = (q(&up) - q(&dn)) / (2.0 * h);
        let fd_v = (v(&up) - v(&dn)) / (2.0 * h);
        worst = worst.max((fd_q - grad[k]).abs() / scale_q);
        worst = worst.max((fd_v - grad_v[k]).abs() / scale_v);
    }
    worst
}

pub fn loading_fd_problem() -> Problem {
    problem(
        r#"{"benchmark": "carrier_plate", "lambda": 1.0, "fine_mesh": [5, 4], "coarse_mesh": [5, 4],
            "kl": {"n_modes": 3}, "filter_radius": 1.5, "coarse_filter_radius": 1.5,
            "sampling": {"kind": "monte_carlo", "n": 3, "seed": 11}}"#,
    )
}

pub fn geometric_fd_problem() -> Problem {
    problem(
        r#"{"benchmark": "custom", "lambda": 1.0, "fine_mesh": [5, 5], "coarse_mesh": [5, 5],
            "uncertainty": "geometric", "domain_width": 1.0, "kl": {"lc": 0.85, "n_modes": 2, "a1": 0.3, "a2": 0.35},
            "filter_radius": 1.5, "coarse_filter_radius": 1.5,
            "sampling": {"kind": "monte_carlo", "n": 3, "seed": 5}}"#,
    )
}
