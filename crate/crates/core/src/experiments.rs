//! Studies built on the drivers: error versus n, certificates at a chosen
//! iterate, and stress moments against Monte Carlo.

use rayon::prelude::*;

use crate::bifidelity::{certify, collect_snapshots, euclid, norm, pivoted_qr, BiFidelitySurrogate, Certificate, ImportantSet};
use crate::config::{Problem, RunConfig};
use crate::design::restrict_values;
use crate::error::{Error, Result};
use crate::fem::mean_von_mises;
use crate::optimize::driver::{argmax_abs, bifidelity_fields};
use crate::optimize::{run_bifidelity, ElementChoice, ImportantBudget, PhaseTimings, Prepared, ResolutionModel};
use crate::output::{StressRow, SweepRow};
use crate::sampling::{monte_carlo, SampleSet};

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn relative(err: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

/// `‖a − b‖ / √len`.
pub fn design_difference(a: &[f64], b: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (s / a.len() as f64).sqrt()
}

/// Weighted mean and standard deviation of the projected design over the samples.
pub fn projected_moments(model: &ResolutionModel, rho: &[f64], beta: f64, samples: &SampleSet) -> Result<(Vec<f64>, Vec<f64>)> {
    let prep = model.prepare(rho, beta, samples.len())?;
    let n = rho.len();
    let mut mean = vec![0.0; n];
    let mut second = vec![0.0; n];
    for (s, w) in samples.weights.iter().enumerate() {
        for (k, &r) in prep.design(s).rho_bar.iter().enumerate() {
            mean[k] += w * r;
            second[k] += w * r * r;
        }
    }
    let std = mean.iter().zip(&second).map(|(m, q)| (q - m * m).max(0.0).sqrt()).collect();
    Ok((mean, std))
}

/// Median relative errors of the lifted fields for `n = 1..=n_max`, at a
/// fixed fine design. Errors are taken over the samples that stay unimportant
/// for every `n`, so each row is measured on the same set.
pub fn sweep_n(problem: &Problem, rho: &[f64], n_max: usize) -> Result<Vec<SweepRow>> {
    let cfg = &problem.config;
    let n_samples = problem.samples.len();
    let ids: Vec<usize> = (0..n_samples).collect();
    let prep = problem.fine.prepare(rho, cfg.beta, n_samples)?;
    let rho_c = restrict_values(rho, &problem.fine.mesh, &problem.coarse.mesh)?;
    let prep_c = problem.coarse.prepare(&rho_c, cfg.beta, n_samples)?;
    let coarse = collect_snapshots(&prep_c, &ids)?;
    let qr = pivoted_qr(&coarse.columns);
    let exact: Vec<Vec<f64>> =
        ids.par_iter().map(|&s| prep.solve(s).map_err(|e| e.at_sample(s))).collect::<Result<_>>()?;
    let exact_resp: Vec<_> = ids.par_iter().map(|&s| prep.response(s, &exact[s])).collect();
    let top = n_max.min(n_samples.saturating_sub(1)).min(coarse.n_dofs());
    let rest = qr.pivots[top..].to_vec();
    (1..=top)
        .map(|n| {
            let important = ImportantSet::from_qr(&qr, n)?;
            let basis = important.indices.iter().map(|&i| exact[i].clone()).collect();
            let surrogate = BiFidelitySurrogate::new(&coarse, important, basis)?;
            let errs: Vec<(f64, f64, f64)> = rest
                .par_iter()
                .map(|&s| {
                    let lifted = surrogate.lift(&surrogate.coefficients(coarse.column(s)));
                    let r = prep.response(s, &lifted);
                    let e = &exact_resp[s];
                    let du: Vec<f64> = exact[s].iter().zip(&lifted).map(|(a, b)| a - b).collect();
                    let dg: Vec<f64> = e.gradient.iter().zip(&r.gradient).map(|(a, b)| a - b).collect();
                    (
                        relative(norm(&du), norm(&exact[s])),
                        relative((e.compliance - r.compliance).abs(), e.compliance.abs()),
                        relative(euclid(&dg), euclid(&e.gradient)),
                    )
                })
                .collect();
            Ok(SweepRow {
                n,
                displacement: median(errs.iter().map(|e| e.0).collect()),
                compliance: median(errs.iter().map(|e| e.1).collect()),
                sensitivity: median(errs.iter().map(|e| e.2).collect()),
            })
        })
        .collect()
}

/// Certificate of the bi-fidelity approximation at the fine design `rho`.
pub fn certify_design(problem: &Problem, rho: &[f64], element: ElementChoice) -> Result<Certificate> {
    let cfg = &problem.config;
    let n_samples = problem.samples.len();
    let prep = problem.fine.prepare(rho, cfg.beta, n_samples)?;
    let mut timings = PhaseTimings::default();
    let bf = bifidelity_fields(&prep, &problem.coarse, rho, cfg.beta, cfg.n_important, &mut timings)?;
    let n = bf.surrogate.important.n;
    if n >= n_samples {
        return Err(Error::config(format!("all {n_samples} samples are important; nothing left to probe")));
    }
    let element = match element {
        ElementChoice::Index(e) => e,
        ElementChoice::LargestSensitivity => {
            let mut grad = vec![0.0; rho.len()];
            for (s, u) in bf.fields.iter().enumerate() {
                let w = problem.samples.weights[s];
                for (g, d) in grad.iter_mut().zip(prep.response(s, u).gradient) {
                    *g += w * d;
                }
            }
            argmax_abs(&grad)
        }
    };
    certify(&bf.surrogate, &bf.coarse, &prep, cfg.certify_probes.min(n_samples - n), element)
}

/// Runs `iter - 1` bi-fidelity updates and certifies the resulting design.
pub fn certify_at(problem: &Problem, iter: usize) -> Result<(Vec<f64>, Certificate)> {
    if iter == 0 {
        return Err(Error::config("iterations are numbered from 1"));
    }
    let cfg = &problem.config;
    let rho = if iter == 1 {
        problem.fine.initial_design(cfg.vbar)
    } else {
        let mut settings = cfg.opt_settings();
        settings.max_iters = iter - 1;
        settings.tol_change = 0.0;
        let mut bifi = cfg.bifi_settings();
        bifi.certify = None;
        run_bifidelity(&problem.fine, &problem.coarse, &problem.samples, &settings, &bifi)?.state.rho
    };
    let cert = certify_design(problem, &rho, ElementChoice::LargestSensitivity)?;
    Ok((rho, cert))
}

fn stress_values(prep: &Prepared<'_>, fields: &[Vec<f64>]) -> Vec<f64> {
    let m = prep.model();
    fields
        .par_iter()
        .enumerate()
        .map(|(s, u)| mean_von_mises(&m.mesh, &m.material, u, &prep.design(s).rho_bar, m.simp.iota))
        .collect()
}

fn weighted_moments(values: &[f64], weights: &[f64]) -> (f64, f64) {
    let mean: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
    let var: f64 = values.iter().zip(weights).map(|(v, w)| w * (v - mean) * (v - mean)).sum();
    (mean, var.max(0.0).sqrt())
}

/// Exact per-sample spatially averaged Von-Mises stress on the fine mesh.
pub fn exact_stress(cfg: &RunConfig, rho: &[f64], samples: &SampleSet) -> Result<Vec<f64>> {
    let mesh = cfg.mesh(cfg.fine_mesh)?;
    let field = cfg.field(&mesh)?;
    let model = cfg.model(mesh, field.as_ref(), samples, cfg.filter_radius)?;
    let prep = model.prepare(rho, cfg.beta, samples.len())?;
    let ids: Vec<usize> = (0..samples.len()).collect();
    let fields: Vec<Vec<f64>> =
        ids.par_iter().map(|&s| prep.solve(s).map_err(|e| e.at_sample(s))).collect::<Result<_>>()?;
    Ok(stress_values(&prep, &fields))
}

#[derive(Debug, Clone)]
pub struct StressStudy {
    pub reference_mean: f64,
    pub reference_std: f64,
    pub reference_points: usize,
    /// `bifi` row from the configured rule, `mc` row as the RMS over batches of `mc_batch`.
    pub rows: Vec<StressRow>,
}

/// Moments of the spatially averaged Von-Mises stress at design `rho`:
/// bi-fidelity with `n_bifi` fine solves against Monte Carlo batches of
/// `mc_batch` solves, both measured against the `reference` rule.
pub fn stress_study(
    problem: &Problem,
    rho: &[f64],
    reference: &SampleSet,
    n_bifi: usize,
    mc_samples: usize,
    mc_batch: usize,
    seed: u64,
) -> Result<StressStudy> {
    let cfg = &problem.config;
    let d = cfg.parameter_dim();
    if d == 0 {
        return Err(Error::config("the stress study needs an uncertain parameter"));
    }
    if mc_batch == 0 || mc_samples < mc_batch {
        return Err(Error::config(format!("need at least one Monte Carlo batch of {mc_batch}, got {mc_samples} samples")));
    }
    let ref_vals = exact_stress(cfg, rho, reference)?;
    let (ref_mean, ref_std) = weighted_moments(&ref_vals, &reference.weights);

    let prep = problem.fine.prepare(rho, cfg.beta, problem.samples.len())?;
    let mut timings = PhaseTimings::default();
    let bf = bifidelity_fields(&prep, &problem.coarse, rho, cfg.beta, ImportantBudget::Fixed(n_bifi), &mut timings)?;
    let (bm, bs) = weighted_moments(&stress_values(&prep, &bf.fields), &problem.samples.weights);

    let mc = monte_carlo(d, mc_samples, seed)?;
    let mc_vals = exact_stress(cfg, rho, &mc)?;
    let batches = mc_samples / mc_batch;
    let (mut se_mean, mut se_std) = (0.0, 0.0);
    for b in 0..batches {
        let vals = &mc_vals[b * mc_batch..(b + 1) * mc_batch];
        let (m, s) = weighted_moments(vals, &vec![1.0 / mc_batch as f64; mc_batch]);
        se_mean += (m - ref_mean).powi(2);
        se_std += (s - ref_std).powi(2);
    }
    let rows = vec![
        StressRow {
            method: "bifi".into(),
            n_hi: n_bifi,
            mean_err: relative((bm - ref_mean).abs(), ref_mean.abs()),
            std_err: relative((bs - ref_std).abs(), ref_std),
        },
        StressRow {
            method: "mc".into(),
            n_hi: mc_batch,
            mean_err: relative((se_mean / batches as f64).sqrt(), ref_mean.abs()),
            std_err: relative((se_std / batches as f64).sqrt(), ref_std),
        },
    ];
    Ok(StressStudy { reference_mean: ref_mean, reference_std: ref_std, reference_points: reference.len(), rows })
}
