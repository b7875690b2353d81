//! Robust objective `Q = μ + λσ`, its sensitivities, the optimality-criteria
//! update and the optimization drivers.

pub(crate) mod driver;
mod model;

pub use driver::{
    evaluate_moments, run_bifidelity, run_single_resolution, BiFidelitySettings, ElementChoice, ImportantBudget, OptOutcome,
    OptSettings, PhaseTimings,
};
pub use model::{Loads, Prepared, ResolutionModel, SampleResponse, Thresholds};

use serde::Serialize;

use crate::design::RHO_MIN;
use crate::error::{Error, Result};

/// Compliance statistics and their design gradients.
#[derive(Debug, Clone)]
pub struct MomentResult {
    pub mu: f64,
    pub sigma: f64,
    pub grad_mu: Vec<f64>,
    pub grad_sigma: Vec<f64>,
    pub per_sample_c: Vec<f64>,
}

impl MomentResult {
    pub fn objective(&self, lambda: f64) -> f64 {
        self.mu + lambda * self.sigma
    }

    pub fn objective_gradient(&self, lambda: f64) -> Vec<f64> {
        self.grad_mu.iter().zip(&self.grad_sigma).map(|(m, s)| m + lambda * s).collect()
    }
}

/// `μ = Σ Cᵢwᵢ`, `σ = √(Σ Cᵢ²wᵢ − μ²)`.
pub fn moments(per_sample_c: &[f64], weights: &[f64]) -> (f64, f64) {
    let mu: f64 = per_sample_c.iter().zip(weights).map(|(c, w)| c * w).sum();
    let var: f64 = per_sample_c.iter().zip(weights).map(|(c, w)| w * (c - mu) * (c - mu)).sum();
    if var < -1e-12 * mu * mu {
        log::warn!("negative variance {var:.3e} clamped to zero");
    }
    (mu, var.max(0.0).sqrt())
}

/// Below `SIGMA_FLOOR · μ` the σ-gradient is dropped.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// `∂μ = Σ wᵢ∂Cᵢ`, `∂σ = Σ wᵢ(Cᵢ − μ)∂Cᵢ / σ`.
pub fn moment_sensitivities(
    per_sample_c: &[f64],
    per_sample_dc: &[Vec<f64>],
    weights: &[f64],
    mu: f64,
    sigma: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = per_sample_dc.first().map_or(0, Vec::len);
    let mut grad_mu = vec![0.0; n];
    let mut weighted = vec![0.0; n];
    for ((c, dc), w) in per_sample_c.iter().zip(per_sample_dc).zip(weights) {
        for k in 0..n {
            grad_mu[k] += w * dc[k];
            weighted[k] += w * (c - mu) * dc[k];
        }
    }
    let grad_sigma = if sigma > SIGMA_FLOOR * mu.abs() {
        weighted.iter().map(|a| a / sigma).collect()
    } else {
        vec![0.0; n]
    };
    (grad_mu, grad_sigma)
}

pub fn compute_moments(per_sample_c: Vec<f64>, per_sample_dc: &[Vec<f64>], weights: &[f64]) -> MomentResult {
    let (mu, sigma) = moments(&per_sample_c, weights);
    let (grad_mu, grad_sigma) = moment_sensitivities(&per_sample_c, per_sample_dc, weights, mu, sigma);
    MomentResult { mu, sigma, grad_mu, grad_sigma, per_sample_c }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OcParams {
    /// Upper bound on the per-element step.
    pub move_limit: f64,
    /// Shrink an element's move limit when its step reverses direction and
    /// regrow it towards `move_limit` otherwise.
    pub adaptive_move: bool,
    pub eta: f64,
    pub volume_tol: f64,
    pub rho_min: f64,
}

impl Default for OcParams {
    fn default() -> Self {
        OcParams { move_limit: 0.2, adaptive_move: true, eta: 0.5, volume_tol: 1e-4, rho_min: RHO_MIN }
    }
}

const MOVE_SHRINK: f64 = 0.7;
const MOVE_GROW: f64 = 1.2;
const MOVE_FLOOR: f64 = 0.01;

/// Per-element move limits carried across OC updates.
#[derive(Debug, Clone)]
pub struct MoveLimits {
    pub limits: Vec<f64>,
    last_step: Vec<f64>,
}

impl MoveLimits {
    pub fn new(n: usize, params: &OcParams) -> Self {
        MoveLimits { limits: vec![params.move_limit; n], last_step: vec![0.0; n] }
    }

    /// Adapts the limits after the step `old -> new`.
    pub fn observe(&mut self, old: &[f64], new: &[f64], params: &OcParams) {
        for i in 0..self.limits.len() {
            let step = new[i] - old[i];
            if params.adaptive_move {
                let m = &mut self.limits[i];
                *m = if step * self.last_step[i] < 0.0 {
                    (*m * MOVE_SHRINK).max(MOVE_FLOOR.min(params.move_limit))
                } else {
                    (*m * MOVE_GROW).min(params.move_limit)
                };
            }
            self.last_step[i] = step;
        }
    }
}

#[derive(Debug, Clone)]
pub struct OcStep {
    pub rho: Vec<f64>,
    pub multiplier: f64,
    pub volume: f64,
    pub change: f64,
}

/// Optimality-criteria update with the multiplier bisected in log space on
/// `[1e-9, 1e9]` against the processed volume `volume(ρ)`.
///
/// Entries with `designable[i] == false` are left untouched.
pub fn oc_update(
    rho: &[f64],
    grad_q: &[f64],
    grad_v: &[f64],
    vbar: f64,
    params: &OcParams,
    designable: &[bool],
    volume: impl Fn(&[f64]) -> f64,
) -> Result<OcStep> {
    let moves = vec![params.move_limit; rho.len()];
    oc_update_with_moves(rho, grad_q, grad_v, vbar, params, &moves, designable, volume)
}

/// [`oc_update`] with a per-element move limit.
#[allow(clippy::too_many_arguments)]
pub fn oc_update_with_moves(
    rho: &[f64],
    grad_q: &[f64],
    grad_v: &[f64],
    vbar: f64,
    params: &OcParams,
    moves: &[f64],
    designable: &[bool],
    volume: impl Fn(&[f64]) -> f64,
) -> Result<OcStep> {
    if !(vbar > 0.0 && vbar < 1.0) {
        return Err(Error::config(format!("volume fraction must lie in (0, 1), got {vbar}")));
    }
    let n = rho.len();
    if grad_q.len() != n || grad_v.len() != n || designable.len() != n || moves.len() != n {
        return Err(Error::invalid("OC inputs differ in length"));
    }
    let candidate = |lam: f64| -> Vec<f64> {
        (0..n)
            .map(|i| {
                if !designable[i] {
                    return rho[i];
                }
                let g = grad_q[i].min(-1e-10);
                let v = grad_v[i].max(1e-300);
                let lo = (rho[i] - moves[i]).max(params.rho_min);
                let hi = (rho[i] + moves[i]).min(1.0);
                (rho[i] * (-g / (lam * v)).powf(params.eta)).clamp(lo, hi)
            })
            .collect()
    };
    let (mut lo, mut hi) = (1e-9f64, 1e9f64);
    let v_hi = volume(&candidate(hi));
    if v_hi > vbar + params.volume_tol {
        return Err(Error::Bisection(format!(
            "smallest reachable volume {v_hi:.6} exceeds the target {vbar}; move limit {} too tight",
            params.move_limit
        )));
    }
    let v_lo = volume(&candidate(lo));
    let lam = if v_lo <= vbar {
        lo
    } else {
        while hi / lo > 1.0 + 1e-12 {
            let mid = (lo * hi).sqrt();
            if volume(&candidate(mid)) > vbar {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let new = candidate(lam);
    let vol = volume(&new);
    let change = (0..n).filter(|&i| designable[i]).map(|i| (new[i] - rho[i]).abs()).fold(0.0, f64::max);
    Ok(OcStep { rho: new, multiplier: lam, volume: vol, change })
}

/// One row of the optimization history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryRecord {
    pub iter: usize,
    pub q: f64,
    pub mu: f64,
    pub sigma: f64,
    pub volume: f64,
    pub change: f64,
    pub n_hi_solves: usize,
}

#[derive(Debug, Clone)]
pub struct OptState {
    pub iteration: usize,
    /// Raw fine-resolution densities over the active elements.
    pub rho: Vec<f64>,
    pub q: f64,
    pub mu: f64,
    pub sigma: f64,
    pub volume: f64,
    pub change: f64,
    pub history: Vec<HistoryRecord>,
    /// Raw design after each update, when requested.
    pub designs: Vec<Vec<f64>>,
}
