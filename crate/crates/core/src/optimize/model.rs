use std::sync::OnceLock;

use crate::bifidelity::{FineModel, SnapshotSource};
use crate::design::{
    build_filter, chain_to_raw, compliance_wrt_projected, element_energies, heaviside_scalar, project_filtered,
    FilterOperator, ProcessedDesign, Simp, Threshold,
};
use crate::error::{Error, Result};
use crate::fem::{assemble_with_floor, element_stiffness, power_iteration, ElementMatrix, Factorization, Material};
use crate::mesh::Mesh;

/// Load vectors of the sample set at one resolution.
#[derive(Debug, Clone)]
pub enum Loads {
    Shared(Vec<f64>),
    PerSample(Vec<Vec<f64>>),
}

/// Projection thresholds of the sample set at one resolution.
#[derive(Debug, Clone)]
pub enum Thresholds {
    Shared(f64),
    /// One `Threshold::PerElement` over the active elements per sample.
    PerSample(Vec<Threshold>),
}

/// Everything needed to analyse the sample set on one mesh.
#[derive(Debug, Clone)]
pub struct ResolutionModel {
    pub mesh: Mesh,
    pub filter: FilterOperator,
    pub material: Material,
    pub ke: ElementMatrix,
    pub simp: Simp,
    pub loads: Loads,
    pub thresholds: Thresholds,
    solid: Vec<bool>,
    designable: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct SampleResponse {
    /// `Fᵀu`.
    pub compliance: f64,
    /// Gradient with respect to the raw densities, zero on solid elements.
    pub gradient: Vec<f64>,
}

impl ResolutionModel {
    pub fn new(
        mesh: Mesh,
        filter_radius: f64,
        material: Material,
        simp: Simp,
        loads: Loads,
        thresholds: Thresholds,
    ) -> Result<Self> {
        material.validate()?;
        let filter = build_filter(&mesh, filter_radius)?;
        let n_dofs = mesh.n_dofs();
        let ok = match &loads {
            Loads::Shared(f) => f.len() == n_dofs,
            Loads::PerSample(fs) => fs.iter().all(|f| f.len() == n_dofs),
        };
        if !ok {
            return Err(Error::invalid("load vector length does not match the mesh"));
        }
        if let Thresholds::PerSample(ts) = &thresholds {
            if ts.iter().any(|t| !matches!(t, Threshold::PerElement(v) if v.len() == mesh.n_active())) {
                return Err(Error::invalid("per-sample thresholds must cover every active element"));
            }
        }
        if let (Loads::PerSample(a), Thresholds::PerSample(b)) = (&loads, &thresholds) {
            if a.len() != b.len() {
                return Err(Error::invalid("per-sample loads and thresholds differ in count"));
            }
        }
        let solid = mesh.active_solid();
        let designable = solid.iter().map(|s| !s).collect();
        let ke = element_stiffness(material.youngs_modulus, material.poisson_ratio);
        Ok(ResolutionModel { mesh, filter, material, ke, simp, loads, thresholds, solid, designable })
    }

    pub fn designable(&self) -> &[bool] {
        &self.designable
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.mesh.nx, self.mesh.ny)
    }

    /// Number of samples fixed by per-sample data, if any.
    pub fn sample_count(&self) -> Option<usize> {
        match (&self.loads, &self.thresholds) {
            (Loads::PerSample(f), _) => Some(f.len()),
            (_, Thresholds::PerSample(t)) => Some(t.len()),
            _ => None,
        }
    }

    /// Uniform `vbar` on designable elements, 1 on solid ones.
    pub fn initial_design(&self, vbar: f64) -> Vec<f64> {
        self.solid.iter().map(|&s| if s { 1.0 } else { vbar }).collect()
    }

    fn load(&self, s: usize) -> &[f64] {
        match &self.loads {
            Loads::Shared(f) => f,
            Loads::PerSample(fs) => &fs[s],
        }
    }

    fn check_design(&self, rho: &[f64]) -> Result<()> {
        if rho.len() != self.mesh.n_active() {
            return Err(Error::invalid(format!(
                "design length {} does not match {} active elements",
                rho.len(),
                self.mesh.n_active()
            )));
        }
        Ok(())
    }

    /// Filters and projects `rho` for every sample, and factorizes the shared
    /// stiffness when the thresholds do not vary.
    pub fn prepare(&self, rho: &[f64], beta: f64, n_samples: usize) -> Result<Prepared<'_>> {
        self.check_design(rho)?;
        if let Some(n) = self.sample_count() {
            if n != n_samples {
                return Err(Error::invalid(format!("model holds {n} samples, {n_samples} requested")));
            }
        }
        let rho_hat = self.filter.apply(rho);
        let (designs, shared) = match &self.thresholds {
            Thresholds::Shared(t) => {
                let d = project_filtered(&rho_hat, &self.solid, beta, &Threshold::Uniform(*t));
                let k = self.stiffness(&d)?;
                let f = k.factorize()?;
                (vec![d], Some(f))
            }
            Thresholds::PerSample(ts) => {
                (ts.iter().map(|t| project_filtered(&rho_hat, &self.solid, beta, t)).collect(), None)
            }
        };
        Ok(Prepared { model: self, designs, shared, n_samples, sigma_k: OnceLock::new() })
    }

    fn stiffness(&self, d: &ProcessedDesign) -> Result<crate::fem::StiffnessMatrix> {
        Ok(assemble_with_floor(&self.mesh, &self.ke, &d.rho_bar, self.simp.iota, self.simp.e_min)?.apply_bc())
    }

    /// Expected processed volume of `rho` under `weights`.
    pub fn expected_volume(&self, rho: &[f64], beta: f64, weights: &[f64]) -> f64 {
        let rho_hat = self.filter.apply(rho);
        let n = rho_hat.len() as f64;
        let volume_for = |tau: &Threshold| -> f64 {
            rho_hat
                .iter()
                .enumerate()
                .map(|(i, &x)| if self.solid[i] { 1.0 } else { heaviside_scalar(x, beta, tau.at(i)) })
                .sum::<f64>()
                / n
        };
        match &self.thresholds {
            Thresholds::Shared(t) => volume_for(&Threshold::Uniform(*t)),
            Thresholds::PerSample(ts) => ts.iter().zip(weights).map(|(t, w)| w * volume_for(t)).sum(),
        }
    }
}

/// A design processed for every sample, ready to solve.
#[derive(Debug)]
pub struct Prepared<'a> {
    model: &'a ResolutionModel,
    designs: Vec<ProcessedDesign>,
    shared: Option<Factorization>,
    n_samples: usize,
    sigma_k: OnceLock<f64>,
}

impl Prepared<'_> {
    pub fn model(&self) -> &ResolutionModel {
        self.model
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn design(&self, s: usize) -> &ProcessedDesign {
        if self.designs.len() == 1 {
            &self.designs[0]
        } else {
            &self.designs[s]
        }
    }

    pub fn solve(&self, s: usize) -> Result<Vec<f64>> {
        let load = self.model.load(s);
        match &self.shared {
            Some(f) => f.solve(load),
            None => self.model.stiffness(self.design(s))?.factorize()?.solve(load),
        }
    }

    /// Work `Fᵀu` and raw-density gradient of an arbitrary displacement.
    pub fn response(&self, s: usize, u: &[f64]) -> SampleResponse {
        let m = self.model;
        let d = self.design(s);
        let energies = element_energies(&m.mesh, &m.ke, u);
        let (_, d_bar) = compliance_wrt_projected(&m.mesh, &energies, d, &m.simp);
        let compliance = m.load(s).iter().zip(u).map(|(f, v)| f * v).sum();
        let mut gradient = chain_to_raw(&m.filter, d, &d_bar);
        for (g, &free) in gradient.iter_mut().zip(&m.designable) {
            if !free {
                *g = 0.0;
            }
        }
        SampleResponse { compliance, gradient }
    }

    /// Weighted processed volume and its raw gradient.
    pub fn volume(&self, weights: &[f64]) -> (f64, Vec<f64>) {
        let m = self.model;
        let n = m.mesh.n_active() as f64;
        let single = |d: &ProcessedDesign| -> (f64, Vec<f64>) {
            let v = d.rho_bar.iter().sum::<f64>() / n;
            let slope: Vec<f64> = d.slope.iter().map(|s| s / n).collect();
            (v, m.filter.apply_transpose(&slope))
        };
        let (v, mut g) = if self.designs.len() == 1 {
            single(&self.designs[0])
        } else {
            let mut v = 0.0;
            let mut g = vec![0.0; m.mesh.n_active()];
            for (d, w) in self.designs.iter().zip(weights) {
                let (vs, gs) = single(d);
                v += w * vs;
                for (a, b) in g.iter_mut().zip(&gs) {
                    *a += w * b;
                }
            }
            (v, g)
        };
        for (x, &free) in g.iter_mut().zip(&m.designable) {
            if !free {
                *x = 0.0;
            }
        }
        (v, g)
    }

    fn masked_power_iteration(&self, apply: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
        let fixed = self.model.mesh.is_fixed();
        power_iteration(self.model.mesh.n_dofs(), |x| {
            let xm: Vec<f64> = x.iter().zip(&fixed).map(|(v, &f)| if f { 0.0 } else { *v }).collect();
            let mut y = apply(&xm);
            for (v, &f) in y.iter_mut().zip(&fixed) {
                if f {
                    *v = 0.0;
                }
            }
            y
        })
    }
}

impl SnapshotSource for Prepared<'_> {
    fn resolution(&self) -> (usize, usize) {
        self.model.resolution()
    }

    fn solve_sample(&self, sample: usize) -> Result<Vec<f64>> {
        self.solve(sample)
    }
}

impl FineModel for Prepared<'_> {
    fn solve(&self, sample: usize) -> Result<Vec<f64>> {
        Prepared::solve(self, sample)
    }

    fn compliance(&self, sample: usize, u: &[f64]) -> f64 {
        let m = self.model;
        let energies = element_energies(&m.mesh, &m.ke, u);
        compliance_wrt_projected(&m.mesh, &energies, self.design(sample), &m.simp).0
    }

    fn element_sensitivity(&self, sample: usize, u: &[f64], element: usize) -> f64 {
        self.response(sample, u).gradient[element]
    }

    fn sigma_max_stiffness(&self, sample: usize) -> f64 {
        let compute = || match self.model.stiffness(self.design(sample)) {
            Ok(k) => k.sigma_max(),
            Err(_) => f64::INFINITY,
        };
        if self.shared.is_some() {
            *self.sigma_k.get_or_init(compute)
        } else {
            compute()
        }
    }

    fn sigma_max_stiffness_derivative(&self, sample: usize, element: usize) -> f64 {
        let m = self.model;
        let d = self.design(sample);
        let active = m.mesh.active_elements();
        let terms: Vec<(usize, f64)> = m
            .filter
            .column(element)
            .into_iter()
            .filter(|&(k, _)| m.designable[k])
            .map(|(k, w)| (active[k], w * d.slope[k] * m.simp.slope(d.rho_bar[k])))
            .filter(|&(_, c)| c > 0.0)
            .collect();
        self.masked_power_iteration(|x| {
            let mut y = vec![0.0; x.len()];
            for &(e, c) in &terms {
                let dofs = &m.mesh.elem_dof_map[e];
                for i in 0..8 {
                    let mut acc = 0.0;
                    for j in 0..8 {
                        acc += m.ke[i][j] * x[dofs[j]];
                    }
                    y[dofs[i]] += c * acc;
                }
            }
            y
        })
    }
}
