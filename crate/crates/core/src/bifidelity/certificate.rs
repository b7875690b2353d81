use rayon::prelude::*;

use crate::error::{Error, Result};

use super::{combine, diff, euclid, norm, BiFidelitySurrogate, Gramian, SnapshotMatrix};

/// Fine-resolution quantities the certificate needs for a probe sample.
///
/// Compliance is the energy `uᵀK u` of an arbitrary displacement, and the
/// element sensitivity is `-uᵀ(∂K/∂ρ_e)u`.
pub trait FineModel: Sync {
    fn solve(&self, sample: usize) -> Result<Vec<f64>>;
    fn compliance(&self, sample: usize, u: &[f64]) -> f64;
    fn element_sensitivity(&self, sample: usize, u: &[f64], element: usize) -> f64;
    fn sigma_max_stiffness(&self, sample: usize) -> f64;
    fn sigma_max_stiffness_derivative(&self, sample: usize, element: usize) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    pub sample: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub coeff_norm: f64,
    pub actual_u: f64,
    pub relative_u: f64,
    pub actual_c: f64,
    pub actual_dc: f64,
    pub sigma_max_k: f64,
    pub sigma_max_dk: f64,
}

/// Worst-case certificate over the probe samples.
///
/// Displacement quantities use the normalized norm; `bound_c` and `bound_dc`
/// carry the factor `dim` that converts it to the Euclidean norm in `uᵀK u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub epsilon: f64,
    pub delta: f64,
    pub sigma_max_gh: f64,
    pub bound_u: f64,
    pub actual_u: f64,
    pub bound_c: f64,
    pub actual_c: f64,
    pub bound_dc: f64,
    pub actual_dc: f64,
    pub element: usize,
    pub probes: Vec<ProbeRecord>,
}

impl Certificate {
    /// `actual ≤ bound` for all three quantities, with a relative slack for rounding.
    pub fn is_sound(&self) -> bool {
        let ok = |a: f64, b: f64| a <= b * (1.0 + 1e-9) + 1e-300;
        ok(self.actual_u, self.bound_u) && ok(self.actual_c, self.bound_c) && ok(self.actual_dc, self.bound_dc)
    }
}

/// Estimates ε and δ on the first `probes` unimportant samples and bounds the
/// lifting error of displacement, compliance and the sensitivity of `element`.
pub fn certify<M: FineModel + ?Sized>(
    surrogate: &BiFidelitySurrogate,
    coarse: &SnapshotMatrix,
    model: &M,
    probes: usize,
    element: usize,
) -> Result<Certificate> {
    let n_total = coarse.n_samples();
    let n = surrogate.important.n;
    if probes == 0 || probes > n_total - n {
        return Err(Error::config(format!("probe budget {probes} outside 1..={}", n_total - n)));
    }
    let fine_cols: Vec<&[f64]> = surrogate.fine_basis.iter().map(Vec::as_slice).collect();
    let fine_gramian = Gramian::from_columns(&fine_cols);
    let sigma_gh = fine_gramian.sigma_max();
    let dim = surrogate.fine_dofs() as f64;

    let probe_ids = surrogate.important.unimportant(probes).to_vec();
    let records = probe_ids
        .par_iter()
        .map(|&s| -> Result<ProbeRecord> {
            let u = model.solve(s).map_err(|e| e.at_sample(s))?;
            let c_low = surrogate.coefficients(coarse.column(s));
            let lifted = surrogate.lift(&c_low);
            let c_high = fine_gramian.coefficients(&u);
            let projected = combine(&surrogate.fine_basis, &c_high);
            let epsilon = euclid(&diff(&c_high, &c_low));
            let num = norm(&diff(&u, &projected));
            let den = norm(&diff(&projected, &lifted));
            let delta = if num == 0.0 { 0.0 } else { num / den };
            let actual_u = norm(&diff(&u, &lifted));
            let u_norm = norm(&u);
            Ok(ProbeRecord {
                sample: s,
                epsilon,
                delta,
                coeff_norm: euclid(&c_low),
                actual_u,
                relative_u: if u_norm > 0.0 { actual_u / u_norm } else { actual_u },
                actual_c: (model.compliance(s, &u) - model.compliance(s, &lifted)).abs(),
                actual_dc: (model.element_sensitivity(s, &u, element)
                    - model.element_sensitivity(s, &lifted, element))
                .abs(),
                sigma_max_k: model.sigma_max_stiffness(s),
                sigma_max_dk: model.sigma_max_stiffness_derivative(s, element),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let epsilon = records.iter().map(|r| r.epsilon).fold(0.0, f64::max);
    let delta = records.iter().map(|r| r.delta).fold(0.0, f64::max);
    let gap = epsilon * (1.0 + delta);
    let bound_u = gap * sigma_gh.sqrt();
    let mut bound_c: f64 = 0.0;
    let mut bound_dc: f64 = 0.0;
    for r in &records {
        let a = gap * sigma_gh * (2.0 * r.coeff_norm + gap);
        bound_c = bound_c.max(dim * a * r.sigma_max_k);
        bound_dc = bound_dc.max(dim * a * r.sigma_max_dk);
    }
    let worst = |f: fn(&ProbeRecord) -> f64| records.iter().map(f).fold(0.0, f64::max);
    Ok(Certificate {
        epsilon,
        delta,
        sigma_max_gh: sigma_gh,
        bound_u,
        actual_u: worst(|r| r.actual_u),
        bound_c,
        actual_c: worst(|r| r.actual_c),
        bound_dc,
        actual_dc: worst(|r| r.actual_dc),
        element,
        probes: records,
    })
}
