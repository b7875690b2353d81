//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the criteria execute in order and the
//! expensive L-bracket optimization is shared by criteria 8 and 9.
//!
//! `ACCEPTANCE_ONLY=5,6` selects criteria; `ACCEPTANCE_STRICT=1` turns any
//! FAIL into a non-zero exit.

mod common;

use std::sync::OnceLock;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use topopt_core::bifidelity::{pivoted_qr, BiFidelitySurrogate, Gramian, ImportantSet, SnapshotMatrix};
use topopt_core::design::{build_filter, heaviside_scalar, restrict_values};
use topopt_core::experiments::{certify_at, design_difference, projected_moments, stress_study, sweep_n};
use topopt_core::fem::{assemble, element_stiffness};
use topopt_core::optimize::{oc_update, run_bifidelity, run_single_resolution, OcParams, OptOutcome};
use topopt_core::random_field::{kl_decompose, kl_decompose_grid, covariance_matrix};
use topopt_core::sampling::sparse_grid;
use topopt_core::{build_mesh, BcPreset, DomainShape, Mesh, Problem};

use common::{fd_gradient_error, geometric_fd_problem, loading_fd_problem, problem};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_soundness() -> Outcome {
    let loading = fd_gradient_error(&loading_fd_problem(), 1.0, 1e-6);
    let geometric = fd_gradient_error(&geometric_fd_problem(), 1.0, 1e-6);
    check(
        loading < 1e-5 && geometric < 1e-5,
        format!("max rel FD error loading {loading:.2e}, geometric {geometric:.2e} (< 1e-5)"),
    )
}

fn carrier(fine: usize, coarse: usize, extra: &str) -> Problem {
    problem(&format!(
        r#"{{"benchmark": "carrier_plate", "lambda": 0.1, "fine_mesh": [{fine}, {fine}], "coarse_mesh": [{coarse}, {coarse}],
            "sampling": {{"kind": "monte_carlo", "n": 148, "seed": 2024}}{extra}}}"#
    ))
}

fn certificate_soundness() -> Outcome {
    let p = carrier(60, 10, r#", "certify_probes": 40"#);
    let (_, cert) = certify_at(&p, 1).map_err(|e| e.to_string())?;
    let slack = |a: f64, b: f64| a <= b * (1.0 + 1e-9);
    let (gu, gc, gdc) = (cert.bound_u, cert.bound_c, cert.bound_dc);
    let every = cert.probes.iter().all(|r| slack(r.actual_u, gu) && slack(r.actual_c, gc) && slack(r.actual_dc, gdc));
    let rel = cert.probes.iter().map(|r| r.relative_u).fold(0.0, f64::max);
    check(
        every && rel < 1e-3,
        format!(
            "{} probes; worst ‖u−û‖ {:.2e} ≤ {:.2e}, |C−Ĉ| {:.2e} ≤ {:.2e}, |∂C−∂Ĉ| {:.2e} ≤ {:.2e}; rel u err {:.2e} (< 1e-3); ε {:.2e}, δ {:.3}",
            cert.probes.len(),
            cert.actual_u,
            gu,
            cert.actual_c,
            gc,
            cert.actual_dc,
            gdc,
            rel,
            cert.epsilon,
            cert.delta
        ),
    )
}

fn coarse_rank(p: &Problem) -> Result<usize, String> {
    use topopt_core::bifidelity::collect_snapshots;
    let rho = p.coarse.initial_design(0.35);
    let prep = p.coarse.prepare(&rho, p.config.beta, p.samples.len()).map_err(|e| e.to_string())?;
    let ids: Vec<usize> = (0..p.samples.len()).collect();
    let snaps = collect_snapshots(&prep, &ids).map_err(|e| e.to_string())?;
    Ok(pivoted_qr(&snaps.columns).numerical_rank())
}

fn rank_reproduction() -> Outcome {
    let r10 = coarse_rank(&carrier(100, 10, ""))?;
    let r4 = coarse_rank(&carrier(100, 4, ""))?;
    check(r10 == 11 && r4 < 11, format!("rank 10x10 = {r10} (want 11), 4x4 = {r4} (want < 11)"))
}

fn kl_energy() -> Outcome {
    let h = 2.4 / 100.0;
    let coords: Vec<[f64; 2]> = (0..=100).map(|i| [i as f64 * h, 0.0]).collect();
    let edge = kl_decompose(&covariance_matrix(&coords, 0.2).map_err(|e| e.to_string())?, 10)
        .map_err(|e| e.to_string())?
        .energy_ratio();
    let xs: Vec<f64> = (0..60).map(|i| (i as f64 + 0.5) / 60.0).collect();
    let grid = kl_decompose_grid(&xs, &xs, 0.85, 4).map_err(|e| e.to_string())?.energy_ratio();
    check(
        (edge - 0.90).abs() <= 0.03 && (grid - 0.88).abs() <= 0.04,
        format!("top edge lc 0.2, 10 modes: {edge:.4} (0.90 ± 0.03); 60x60 centroids lc 0.85, 4 modes: {grid:.4} (0.88 ± 0.04)"),
    )
}

fn error_decay() -> Outcome {
    let p = carrier(60, 10, "");
    let rank = coarse_rank(&p)?;
    let rho = p.fine.initial_design(p.config.vbar);
    let rows = sweep_n(&p, &rho, rank).map_err(|e| e.to_string())?;
    let mut worst_rise: f64 = 0.0;
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        for r in [b.displacement / a.displacement, b.compliance / a.compliance, b.sensitivity / a.sensitivity] {
            worst_rise = worst_rise.max(r);
        }
    }
    let monotone = worst_rise <= 1.1;
    let (first, last) = (&rows[0], &rows[rows.len() - 1]);
    let drop = |a: f64, b: f64| a / b.max(f64::MIN_POSITIVE);
    let drops = [
        drop(first.displacement, last.displacement),
        drop(first.compliance, last.compliance),
        drop(first.sensitivity, last.sensitivity),
    ];
    check(
        monotone && drops.iter().all(|&d| d >= 1e4),
        format!(
            "n = 1..{rank}: worst step-to-step ratio {worst_rise:.2} (≤ 1.1); drops u {:.1e}, C {:.1e}, dC {:.1e} (≥ 1e4); median u err {}",
            drops[0],
            drops[1],
            drops[2],
            rows.iter().map(|r| format!("{:.1e}", r.displacement)).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn degenerate_equivalence() -> Outcome {
    let p = problem(
        r#"{"benchmark": "carrier_plate", "lambda": 0.1, "fine_mesh": [30, 30], "coarse_mesh": [30, 30],
            "sampling": {"kind": "monte_carlo", "n": 40, "seed": 7}, "max_iters": 50, "tol_change": 0.0}"#,
    );
    let mut s = p.config.opt_settings();
    s.record_designs = true;
    let single = run_single_resolution(&p.fine, &p.samples, &s).map_err(|e| e.to_string())?;
    let bifi = run_bifidelity(&p.fine, &p.coarse, &p.samples, &s, &p.config.bifi_settings()).map_err(|e| e.to_string())?;
    let gap = |a: &OptOutcome, b: &OptOutcome| {
        a.state
            .designs
            .iter()
            .zip(&b.state.designs)
            .map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    };
    let worst = gap(&single, &bifi);
    // Control: the same single-resolution run with the volume target moved by one ulp.
    let mut nudged = s.clone();
    nudged.vbar = f64::from_bits(s.vbar.to_bits() + 1);
    let control = run_single_resolution(&p.fine, &p.samples, &nudged).map_err(|e| e.to_string())?;
    let iters = single.state.designs.len().min(bifi.state.designs.len());
    check(
        iters == 50 && worst < 1e-10,
        format!(
            "{iters} iterations, max |Δρ| {worst:.2e} (< 1e-10); single run vs itself with V̄ one ulp higher: {:.2e}",
            gap(&single, &control)
        ),
    )
}

fn objective_gap(a: &OptOutcome, b: &OptOutcome) -> f64 {
    (a.state.q - b.state.q).abs() / b.state.q.abs()
}

fn carrier_fidelity() -> Outcome {
    let p = carrier(60, 10, r#", "max_iters": 150"#);
    let s = p.config.opt_settings();
    let hi = run_single_resolution(&p.fine, &p.samples, &s).map_err(|e| e.to_string())?;
    let bf = run_bifidelity(&p.fine, &p.coarse, &p.samples, &s, &p.config.bifi_settings()).map_err(|e| e.to_string())?;
    let e_rho = design_difference(&bf.state.rho, &hi.state.rho);
    let e_q = objective_gap(&bf, &hi);
    let max_n = bf.state.history.iter().map(|h| h.n_hi_solves).max().unwrap_or(0);
    check(
        e_rho < 0.05 && e_q < 1e-2 && max_n <= 12,
        format!(
            "e_ρ {e_rho:.2e} (< 0.05), e_Q {e_q:.2e} (< 1e-2), fine solves/iter {max_n} vs {} ({} / {} iterations)",
            p.samples.len(),
            bf.state.iteration,
            hi.state.iteration
        ),
    )
}

struct BracketRuns {
    problem: Problem,
    hi: OptOutcome,
    bf: OptOutcome,
}

fn bracket() -> &'static Result<BracketRuns, String> {
    static RUNS: OnceLock<Result<BracketRuns, String>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let p = problem(r#"{"benchmark": "l_bracket", "lambda": 0.1, "max_iters": 200}"#);
        let s = p.config.opt_settings();
        let hi = run_single_resolution(&p.fine, &p.samples, &s).map_err(|e| e.to_string())?;
        let bf = run_bifidelity(&p.fine, &p.coarse, &p.samples, &s, &p.config.bifi_settings()).map_err(|e| e.to_string())?;
        Ok(BracketRuns { problem: p, hi, bf })
    })
}

fn bracket_fidelity() -> Outcome {
    let runs = bracket().as_ref().map_err(Clone::clone)?;
    let p = &runs.problem;
    let e_rho = design_difference(&runs.bf.state.rho, &runs.hi.state.rho);
    let e_q = objective_gap(&runs.bf, &runs.hi);
    let moments = |rho: &[f64]| projected_moments(&p.fine, rho, p.config.beta, &p.samples).map_err(|e| e.to_string());
    let (mb, sb) = moments(&runs.bf.state.rho)?;
    let (mh, sh) = moments(&runs.hi.state.rho)?;
    let e_mu = design_difference(&mb, &mh);
    let e_sigma = design_difference(&sb, &sh);
    check(
        e_rho < 0.05 && e_q < 1e-2 && e_mu < 0.02 && e_sigma < 0.02,
        format!(
            "e_ρ {e_rho:.2e} (< 0.05), e_Q {e_q:.2e} (< 1e-2), e_μ(ρ̄) {e_mu:.2e}, e_σ(ρ̄) {e_sigma:.2e} (< 0.02); {} samples, {} / {} iterations",
            p.samples.len(),
            runs.bf.state.iteration,
            runs.hi.state.iteration
        ),
    )
}

fn stress_moments() -> Outcome {
    let runs = bracket().as_ref().map_err(Clone::clone)?;
    let p = &runs.problem;
    let reference = sparse_grid(p.config.parameter_dim(), 6).map_err(|e| e.to_string())?;
    let study = stress_study(p, &runs.hi.state.rho, &reference, 10, 1000, 100, 99).map_err(|e| e.to_string())?;
    let (bf, mc) = (&study.rows[0], &study.rows[1]);
    check(
        bf.mean_err < mc.mean_err && bf.std_err < mc.std_err,
        format!(
            "reference {} points; bi-fidelity n = {}: mean err {:.2e}, std err {:.2e}; MC {} (RMS of 10 batches): mean err {:.2e}, std err {:.2e}",
            study.reference_points, bf.n_hi, bf.mean_err, bf.std_err, mc.n_hi, mc.mean_err, mc.std_err
        ),
    )
}

fn property_suites() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 64, failure_persistence: None, ..Config::default() });
    let mut failures = Vec::new();
    let mut record = |name: &str, r: Result<(), String>| {
        if let Err(e) = r {
            failures.push(format!("{name}: {e}"));
        }
    };

    record(
        "filter rows",
        runner.run(&(1usize..12, 1usize..12, 0.5f64..4.0), |(nx, ny, r)| {
            let m = build_mesh(nx, ny, DomainShape::Rectangle, BcPreset::Custom).unwrap();
            let f = build_filter(&m, r).unwrap();
            for i in 0..f.dim() {
                let s: f64 = f.row(i).map(|(_, w)| w).sum();
                prop_assert!((s - 1.0).abs() < 1e-12 && f.row(i).all(|(_, w)| w >= 0.0));
            }
            Ok(())
        })
        .map_err(|e| e.to_string()),
    );
    record(
        "projection endpoints",
        runner.run(&(1e-3f64..512.0, 0.0f64..=1.0), |(beta, tau)| {
            prop_assert_eq!(heaviside_scalar(0.0, beta, tau), 0.0);
            prop_assert_eq!(heaviside_scalar(1.0, beta, tau), 1.0);
            Ok(())
        })
        .map_err(|e| e.to_string()),
    );
    record(
        "oc volume",
        runner.run(&(proptest::collection::vec(0.05f64..1.0, 20), proptest::collection::vec(-5.0f64..0.5, 20), 0.2f64..0.6), |(rho, g, vbar)| {
            let mean = |r: &[f64]| r.iter().sum::<f64>() / r.len() as f64;
            let gv = vec![0.05; 20];
            if let Ok(step) = oc_update(&rho, &g, &gv, vbar, &OcParams::default(), &[true; 20], mean) {
                prop_assert!(step.volume <= vbar + 1e-4);
            }
            Ok(())
        })
        .map_err(|e| e.to_string()),
    );
    record(
        "solve residual",
        runner.run(&(2usize..9, 2usize..9, proptest::collection::vec(0.01f64..1.0, 64)), |(nx, ny, dens)| {
            let m = build_mesh(nx, ny, DomainShape::Rectangle, BcPreset::CarrierPlate).unwrap();
            let rho: Vec<f64> = (0..m.n_active()).map(|i| dens[i % dens.len()]).collect();
            let ke = element_stiffness(1.0, 0.3);
            let k = assemble(&m, &ke, &rho, 3.0).unwrap().apply_bc();
            let mut f = vec![0.0; m.n_dofs()];
            for (i, v) in f.iter_mut().enumerate() {
                *v = ((i * 37) % 11) as f64 - 5.0;
            }
            for &d in &m.fixed_dofs {
                f[d] = 0.0;
            }
            let u = k.factorize().unwrap().solve(&f).unwrap();
            let r = k.matvec(&u);
            let res: f64 = r.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let nf: f64 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(res <= 1e-10 * nf, "residual {}", res / nf);
            Ok(())
        })
        .map_err(|e| e.to_string()),
    );
    record(
        "gramian psd and interpolation",
        runner.run(&(proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 12), 2..8)), |cols| {
            let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
            let g = Gramian::from_columns(&refs);
            prop_assert!(g.min_eigenvalue() >= -1e-12 * g.sigma_max().max(1.0));
            let qr = pivoted_qr(&cols);
            let n = qr.numerical_rank().min(cols.len());
            let set = ImportantSet::from_qr(&qr, n).unwrap();
            let snaps = SnapshotMatrix::new(cols.clone(), (1, 1), (0..cols.len()).collect()).unwrap();
            let basis = set.indices.iter().map(|&i| cols[i].clone()).collect();
            let sur = BiFidelitySurrogate::new(&snaps, set, basis).unwrap();
            for (j, &i) in sur.important.indices.iter().enumerate() {
                let c = sur.coefficients(&cols[i]);
                for (k, ck) in c.iter().enumerate() {
                    let want = if k == j { 1.0 } else { 0.0 };
                    prop_assert!((ck - want).abs() < 1e-8, "c[{}] = {} for pivot {}", k, ck, j);
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string()),
    );
    let restrict_ok = {
        let fine = build_mesh(20, 20, DomainShape::LBracket, BcPreset::LBracket).unwrap();
        let coarse: Mesh = build_mesh(10, 10, DomainShape::LBracket, BcPreset::LBracket).unwrap();
        restrict_values(&vec![0.35; fine.n_active()], &fine, &coarse).map(|v| v.iter().all(|x| (x - 0.35).abs() < 1e-15))
    };
    if !matches!(restrict_ok, Ok(true)) {
        failures.push("restriction of a uniform field".into());
    }
    check(failures.is_empty(), if failures.is_empty() { "6 property groups, 64 cases each".into() } else { failures.join("; ") })
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient soundness", gradient_soundness),
        ("certificate soundness", certificate_soundness),
        ("rank reproduction", rank_reproduction),
        ("KL energy ratios", kl_energy),
        ("error-vs-n decay", error_decay),
        ("degenerate-fidelity equivalence", degenerate_equivalence),
        ("carrier-plate design fidelity", carrier_fidelity),
        ("L-bracket design fidelity", bracket_fidelity),
        ("stress-moment study", stress_moments),
        ("property suites", property_suites),
    ];
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let outcome = run();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:2} FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        if std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
