use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::bifidelity::{certify, collect_snapshots, pivoted_qr, BiFidelitySurrogate, Certificate, ImportantSet};
use crate::design::restrict_values;
use crate::error::{Error, Result};
use crate::sampling::SampleSet;

use super::model::{Prepared, ResolutionModel, SampleResponse};
use super::{compute_moments, oc_update_with_moves, HistoryRecord, MomentResult, MoveLimits, OcParams, OptState};

#[derive(Debug, Clone, Serialize)]
pub struct OptSettings {
    pub lambda: f64,
    pub vbar: f64,
    pub max_iters: usize,
    /// Stop once the largest density change drops below this.
    pub tol_change: f64,
    pub oc: OcParams,
    pub beta: f64,
    /// Double β every 50 iterations, up to 64.
    pub beta_continuation: bool,
    pub record_designs: bool,
}

impl OptSettings {
    pub fn new(lambda: f64, vbar: f64) -> Self {
        OptSettings {
            lambda,
            vbar,
            max_iters: 500,
            tol_change: 0.01,
            oc: OcParams::default(),
            beta: 8.0,
            beta_continuation: false,
            record_designs: false,
        }
    }

    pub fn beta_at(&self, iteration: usize) -> f64 {
        if !self.beta_continuation {
            return self.beta;
        }
        let doublings = (iteration.saturating_sub(1) / 50) as i32;
        (self.beta * 2f64.powi(doublings)).min(64.0f64.max(self.beta))
    }
}

/// How many important samples to take each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ImportantBudget {
    /// Numerical rank of the coarse snapshots, at most `cap`.
    Rank { cap: usize },
    Fixed(usize),
}

/// Element whose sensitivity the certificate tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ElementChoice {
    /// Largest |∂μ/∂ρ_e| at the current iterate.
    LargestSensitivity,
    /// Active-element index.
    Index(usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct BiFidelitySettings {
    pub budget: ImportantBudget,
    /// Probe count for a certificate every iteration; `None` disables it.
    pub certify: Option<usize>,
    pub element: ElementChoice,
}

/// Accumulated wall-clock per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub coarse_solves: Duration,
    pub fine_solves: Duration,
    pub qr: Duration,
    pub lift: Duration,
    pub update: Duration,
}

impl Serialize for PhaseTimings {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("PhaseTimings", 5)?;
        st.serialize_field("coarse_solves_s", &self.coarse_solves.as_secs_f64())?;
        st.serialize_field("fine_solves_s", &self.fine_solves.as_secs_f64())?;
        st.serialize_field("qr_s", &self.qr.as_secs_f64())?;
        st.serialize_field("lift_s", &self.lift.as_secs_f64())?;
        st.serialize_field("update_s", &self.update.as_secs_f64())?;
        st.end()
    }
}

#[derive(Debug, Clone)]
pub struct OptOutcome {
    pub state: OptState,
    /// `(iteration, certificate)` when certification is enabled.
    pub certificates: Vec<(usize, Certificate)>,
    pub timings: PhaseTimings,
}

fn timed<T>(acc: &mut Duration, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    *acc += t.elapsed();
    out
}

fn check_samples(model: &ResolutionModel, samples: &SampleSet) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::config("sample set is empty"));
    }
    if let Some(n) = model.sample_count() {
        if n != samples.len() {
            return Err(Error::config(format!("model has {n} samples but the rule has {}", samples.len())));
        }
    }
    Ok(())
}

fn solve_all(prep: &Prepared<'_>, ids: &[usize]) -> Result<Vec<Vec<f64>>> {
    ids.par_iter().map(|&s| prep.solve(s).map_err(|e| e.at_sample(s))).collect()
}

fn responses(prep: &Prepared<'_>, fields: &[Vec<f64>]) -> Vec<SampleResponse> {
    fields.par_iter().enumerate().map(|(s, u)| prep.response(s, u)).collect()
}

struct Update {
    moments: MomentResult,
    rho: Vec<f64>,
    volume: f64,
    change: f64,
}

fn update(
    model: &ResolutionModel,
    prep: &Prepared<'_>,
    rho: &[f64],
    responses: Vec<SampleResponse>,
    samples: &SampleSet,
    settings: &OptSettings,
    moves: &MoveLimits,
    beta: f64,
) -> Result<Update> {
    let (c, dc): (Vec<f64>, Vec<Vec<f64>>) = responses.into_iter().map(|r| (r.compliance, r.gradient)).unzip();
    let moments = compute_moments(c, &dc, &samples.weights);
    let grad_q = moments.objective_gradient(settings.lambda);
    let (_, grad_v) = prep.volume(&samples.weights);
    let step = oc_update_with_moves(
        rho,
        &grad_q,
        &grad_v,
        settings.vbar,
        &settings.oc,
        &moves.limits,
        model.designable(),
        |r| model.expected_volume(r, beta, &samples.weights),
    )?;
    Ok(Update { moments, rho: step.rho, volume: step.volume, change: step.change })
}

struct Loop {
    state: OptState,
    moves: MoveLimits,
}

impl Loop {
    fn new(rho: Vec<f64>, oc: &OcParams) -> Self {
        Loop {
            moves: MoveLimits::new(rho.len(), oc),
            state: OptState {
                iteration: 0,
                rho,
                q: f64::NAN,
                mu: f64::NAN,
                sigma: f64::NAN,
                volume: f64::NAN,
                change: f64::INFINITY,
                history: Vec::new(),
                designs: Vec::new(),
            },
        }
    }

    fn record(&mut self, it: usize, up: Update, settings: &OptSettings, n_hi: usize) -> bool {
        let s = &mut self.state;
        s.iteration = it;
        s.mu = up.moments.mu;
        s.sigma = up.moments.sigma;
        s.q = up.moments.objective(settings.lambda);
        s.volume = up.volume;
        s.change = up.change;
        self.moves.observe(&s.rho, &up.rho, &settings.oc);
        s.rho = up.rho;
        s.history.push(HistoryRecord {
            iter: it,
            q: s.q,
            mu: s.mu,
            sigma: s.sigma,
            volume: s.volume,
            change: s.change,
            n_hi_solves: n_hi,
        });
        log::info!("it {it:4}  Q {:.6e}  mu {:.6e}  sigma {:.3e}  V {:.4}  ch {:.4}", s.q, s.mu, s.sigma, s.volume, s.change);
        if settings.record_designs {
            s.designs.push(s.rho.clone());
        }
        s.change < settings.tol_change
    }
}

/// Exact compliance moments and their raw gradients at `rho`.
pub fn evaluate_moments(model: &ResolutionModel, samples: &SampleSet, rho: &[f64], beta: f64) -> Result<MomentResult> {
    check_samples(model, samples)?;
    let ids: Vec<usize> = (0..samples.len()).collect();
    let prep = model.prepare(rho, beta, samples.len())?;
    let fields = solve_all(&prep, &ids)?;
    let (c, dc): (Vec<f64>, Vec<Vec<f64>>) =
        responses(&prep, &fields).into_iter().map(|r| (r.compliance, r.gradient)).unzip();
    Ok(compute_moments(c, &dc, &samples.weights))
}

/// Solves every sample on one mesh each iteration.
pub fn run_single_resolution(model: &ResolutionModel, samples: &SampleSet, settings: &OptSettings) -> Result<OptOutcome> {
    check_samples(model, samples)?;
    let ids: Vec<usize> = (0..samples.len()).collect();
    let mut timings = PhaseTimings::default();
    let mut lp = Loop::new(model.initial_design(settings.vbar), &settings.oc);
    for it in 1..=settings.max_iters {
        let beta = settings.beta_at(it);
        let mut step = || -> Result<Update> {
            let prep = timed(&mut timings.fine_solves, || model.prepare(&lp.state.rho, beta, samples.len()))?;
            let fields = timed(&mut timings.fine_solves, || solve_all(&prep, &ids))?;
            timed(&mut timings.update, || {
                let resp = responses(&prep, &fields);
                update(model, &prep, &lp.state.rho, resp, samples, settings, &lp.moves, beta)
            })
        };
        let up = step().map_err(|e| e.at_iteration(it))?;
        if lp.record(it, up, settings, samples.len()) {
            break;
        }
    }
    Ok(OptOutcome { state: lp.state, certificates: Vec::new(), timings })
}

/// Per-iteration bi-fidelity state exposed for experiments.
pub(crate) struct BiFidelityStep {
    pub surrogate: BiFidelitySurrogate,
    pub coarse: crate::bifidelity::SnapshotMatrix,
    /// Fine fields for every sample: exact at important samples, lifted elsewhere.
    pub fields: Vec<Vec<f64>>,
}

/// Steps 1 to 6: restrict, coarse snapshots, QR selection, fine solves at the
/// important samples and lifting of the rest.
pub(crate) fn bifidelity_fields(
    fine: &Prepared<'_>,
    coarse_model: &ResolutionModel,
    rho: &[f64],
    beta: f64,
    budget: ImportantBudget,
    timings: &mut PhaseTimings,
) -> Result<BiFidelityStep> {
    let n_samples = fine.n_samples();
    let ids: Vec<usize> = (0..n_samples).collect();
    let rho_c = restrict_values(rho, &fine.model().mesh, &coarse_model.mesh)?;
    let snapshots = timed(&mut timings.coarse_solves, || -> Result<_> {
        let prep_c = coarse_model.prepare(&rho_c, beta, n_samples)?;
        collect_snapshots(&prep_c, &ids)
    })?;
    let important = timed(&mut timings.qr, || -> Result<ImportantSet> {
        let qr = pivoted_qr(&snapshots.columns);
        let n = match budget {
            ImportantBudget::Rank { cap } => qr.numerical_rank().min(cap).max(1),
            ImportantBudget::Fixed(n) => n,
        };
        let max = n_samples.min(snapshots.n_dofs());
        if n == 0 || n > max {
            return Err(Error::config(format!("important-sample budget {n} outside 1..={max}")));
        }
        ImportantSet::from_qr(&qr, n)
    })?;
    let fine_basis = timed(&mut timings.fine_solves, || solve_all(fine, &important.indices))?;
    let surrogate = BiFidelitySurrogate::new(&snapshots, important, fine_basis)?;
    let fields = timed(&mut timings.lift, || {
        let mut slot: Vec<Option<usize>> = vec![None; n_samples];
        for (j, &s) in surrogate.important.indices.iter().enumerate() {
            slot[s] = Some(j);
        }
        ids.par_iter()
            .map(|&s| match slot[s] {
                Some(j) => surrogate.fine_basis[j].clone(),
                None => surrogate.lift(&surrogate.coefficients(snapshots.column(s))),
            })
            .collect()
    });
    Ok(BiFidelityStep { surrogate, coarse: snapshots, fields })
}

/// Coarse snapshots pick `n` important samples; only those are solved on the
/// fine mesh and the rest are lifted.
pub fn run_bifidelity(
    fine: &ResolutionModel,
    coarse: &ResolutionModel,
    samples: &SampleSet,
    settings: &OptSettings,
    bifi: &BiFidelitySettings,
) -> Result<OptOutcome> {
    check_samples(fine, samples)?;
    check_samples(coarse, samples)?;
    let mut timings = PhaseTimings::default();
    let mut certificates = Vec::new();
    let mut lp = Loop::new(fine.initial_design(settings.vbar), &settings.oc);
    for it in 1..=settings.max_iters {
        let beta = settings.beta_at(it);
        let mut step = || -> Result<(Update, usize, Option<Certificate>)> {
            let prep = timed(&mut timings.fine_solves, || fine.prepare(&lp.state.rho, beta, samples.len()))?;
            let bf = bifidelity_fields(&prep, coarse, &lp.state.rho, beta, bifi.budget, &mut timings)?;
            let n_hi = bf.surrogate.important.n;
            let up = timed(&mut timings.update, || {
                let resp = responses(&prep, &bf.fields);
                update(fine, &prep, &lp.state.rho, resp, samples, settings, &lp.moves, beta)
            })?;
            let cert = match bifi.certify {
                Some(probes) if samples.len() > n_hi => {
                    let element = match bifi.element {
                        ElementChoice::Index(e) => e,
                        ElementChoice::LargestSensitivity => argmax_abs(&up.moments.grad_mu),
                    };
                    Some(certify(&bf.surrogate, &bf.coarse, &prep, probes.min(samples.len() - n_hi), element)?)
                }
                _ => None,
            };
            Ok((up, n_hi, cert))
        };
        let (up, n_hi, cert) = step().map_err(|e| e.at_iteration(it))?;
        if let Some(c) = cert {
            certificates.push((it, c));
        }
        if lp.record(it, up, settings, n_hi) {
            break;
        }
    }
    Ok(OptOutcome { state: lp.state, certificates, timings })
}

pub(crate) fn argmax_abs(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    best
}
