//! Density processing chain: raw ρ → filtered ρ̂ → projected ρ̄, its chain-rule
//! derivatives, compliance/volume sensitivities and fine-to-coarse restriction.
//!
//! All vectors are indexed by active element. Solid elements keep ρ̄ = 1 and
//! carry no sensitivity; their raw values still feed the filter of their
//! neighbours.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{element_energy, ElementMatrix};
use crate::mesh::Mesh;

/// Lower bound on raw densities.
pub const RHO_MIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Raw,
    Filtered,
    Projected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub values: Vec<f64>,
    pub stage: Stage,
    /// Element counts `(nx, ny)` of the mesh the field lives on.
    pub resolution: (usize, usize),
}

impl DensityField {
    pub fn raw(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_active() {
            return Err(Error::invalid(format!(
                "density length {} does not match {} active elements",
                values.len(),
                mesh.n_active()
            )));
        }
        Ok(DensityField { values, stage: Stage::Raw, resolution: (mesh.nx, mesh.ny) })
    }

    pub fn uniform(mesh: &Mesh, value: f64) -> Self {
        let values = mesh
            .active_elements()
            .iter()
            .map(|&e| if mesh.solid_mask[e] { 1.0 } else { value })
            .collect();
        DensityField { values, stage: Stage::Raw, resolution: (mesh.nx, mesh.ny) }
    }

    fn expect(&self, stage: Stage) -> Result<()> {
        if self.stage != stage {
            return Err(Error::invalid(format!("expected a {stage:?} field, got {:?}", self.stage)));
        }
        Ok(())
    }
}

/// Row-normalized cone filter over the active elements.
#[derive(Debug, Clone)]
pub struct FilterOperator {
    pub r_min: f64,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

/// Cone weights `max(r_min − d, 0)` on centroid distances measured in element sizes.
pub fn build_filter(mesh: &Mesh, r_min: f64) -> Result<FilterOperator> {
    if !(r_min > 0.0) {
        return Err(Error::config(format!("filter radius must be positive, got {r_min}")));
    }
    let reach = r_min.ceil() as isize;
    let mut row_ptr = vec![0];
    let mut cols = Vec::new();
    let mut weights = Vec::new();
    for &e in mesh.active_elements() {
        let (ix, iy) = ((e % mesh.nx) as isize, (e / mesh.nx) as isize);
        let start = weights.len();
        for jy in (iy - reach).max(0)..=(iy + reach).min(mesh.ny as isize - 1) {
            for jx in (ix - reach).max(0)..=(ix + reach).min(mesh.nx as isize - 1) {
                let j = jy as usize * mesh.nx + jx as usize;
                let Some(aj) = mesh.active_index(j) else { continue };
                let d = (((jx - ix).pow(2) + (jy - iy).pow(2)) as f64).sqrt();
                let w = r_min - d;
                if w > 0.0 {
                    cols.push(aj);
                    weights.push(w);
                }
            }
        }
        let total: f64 = weights[start..].iter().sum();
        weights[start..].iter_mut().for_each(|w| *w /= total);
        row_ptr.push(weights.len());
    }
    Ok(FilterOperator { r_min, row_ptr, cols, weights })
}

impl FilterOperator {
    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// `(column, weight)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }

    /// Nonzeros `(row, weight)` of column `j`.
    pub fn column(&self, j: usize) -> Vec<(usize, f64)> {
        (0..self.dim()).filter_map(|i| self.row(i).find(|&(c, _)| c == j).map(|(_, w)| (i, w))).collect()
    }

    /// `W x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|i| self.row(i).map(|(j, w)| w * x[j]).sum()).collect()
    }

    /// `Wᵀ y`.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (i, &yi) in y.iter().enumerate() {
            for (j, w) in self.row(i) {
                out[j] += w * yi;
            }
        }
        out
    }
}

pub fn apply_filter(op: &FilterOperator, rho: &DensityField) -> Result<DensityField> {
    rho.expect(Stage::Raw)?;
    if rho.values.len() != op.dim() {
        return Err(Error::invalid("density field does not match the filter operator"));
    }
    Ok(DensityField { values: op.apply(&rho.values), stage: Stage::Filtered, resolution: rho.resolution })
}

/// Projection threshold, shared or per active element.
#[derive(Debug, Clone, PartialEq)]
pub enum Threshold {
    Uniform(f64),
    PerElement(Vec<f64>),
}

impl Threshold {
    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        match self {
            Threshold::Uniform(t) => *t,
            Threshold::PerElement(v) => v[i],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParams {
    pub beta: f64,
    pub tau: Threshold,
}

/// Smoothed Heaviside `H_{β,τ}(x)`.
#[inline]
pub fn heaviside_scalar(x: f64, beta: f64, tau: f64) -> f64 {
    let a = (beta * tau).tanh();
    (a + (beta * (x - tau)).tanh()) / (a + (beta * (1.0 - tau)).tanh())
}

/// `dH_{β,τ}/dx`.
#[inline]
pub fn heaviside_slope(x: f64, beta: f64, tau: f64) -> f64 {
    // sech² without the cancellation in 1 - tanh²
    let e = (-2.0 * (beta * (x - tau)).abs()).exp();
    let sech2 = 4.0 * e / ((1.0 + e) * (1.0 + e));
    beta * sech2 / ((beta * tau).tanh() + (beta * (1.0 - tau)).tanh())
}

pub fn heaviside(rho_hat: &DensityField, params: &ProjectionParams) -> Result<DensityField> {
    rho_hat.expect(Stage::Filtered)?;
    let values = rho_hat
        .values
        .iter()
        .enumerate()
        .map(|(i, &x)| heaviside_scalar(x, params.beta, params.tau.at(i)))
        .collect();
    Ok(DensityField { values, stage: Stage::Projected, resolution: rho_hat.resolution })
}

pub fn heaviside_derivative(rho_hat: &DensityField, params: &ProjectionParams) -> Result<Vec<f64>> {
    rho_hat.expect(Stage::Filtered)?;
    Ok(rho_hat
        .values
        .iter()
        .enumerate()
        .map(|(i, &x)| heaviside_slope(x, params.beta, params.tau.at(i)))
        .collect())
}

/// Stiffness interpolation `e_min + (1 − e_min) ρ̄^ι`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Simp {
    pub iota: f64,
    pub e_min: f64,
}

impl Simp {
    /// Modified SIMP with the void stiffness `RHO_MIN^ι`.
    pub fn new(iota: f64) -> Self {
        Simp { iota, e_min: RHO_MIN.powf(iota) }
    }

    /// Pure power law, no void stiffness.
    pub fn pure(iota: f64) -> Self {
        Simp { iota, e_min: 0.0 }
    }

    #[inline]
    pub fn factor(&self, r: f64) -> f64 {
        self.e_min + (1.0 - self.e_min) * r.powf(self.iota)
    }

    #[inline]
    pub fn slope(&self, r: f64) -> f64 {
        (1.0 - self.e_min) * self.iota * r.powf(self.iota - 1.0)
    }
}

/// A design pushed through the filter and projection, with the projection slope.
#[derive(Debug, Clone)]
pub struct ProcessedDesign {
    pub rho_hat: Vec<f64>,
    pub rho_bar: Vec<f64>,
    /// `dρ̄/dρ̂`, zero on solid elements.
    pub slope: Vec<f64>,
}

/// Projects a filtered field, forcing solid elements to ρ̄ = 1.
pub fn project_filtered(rho_hat: &[f64], solid: &[bool], beta: f64, tau: &Threshold) -> ProcessedDesign {
    let mut rho_bar = Vec::with_capacity(rho_hat.len());
    let mut slope = Vec::with_capacity(rho_hat.len());
    for (i, &x) in rho_hat.iter().enumerate() {
        if solid[i] {
            rho_bar.push(1.0);
            slope.push(0.0);
        } else {
            let t = tau.at(i);
            rho_bar.push(heaviside_scalar(x, beta, t));
            slope.push(heaviside_slope(x, beta, t));
        }
    }
    ProcessedDesign { rho_hat: rho_hat.to_vec(), rho_bar, slope }
}

/// Full chain for a raw design.
pub fn process(mesh: &Mesh, filter: &FilterOperator, rho: &[f64], params: &ProjectionParams) -> ProcessedDesign {
    let rho_hat = filter.apply(rho);
    project_filtered(&rho_hat, &mesh.active_solid(), params.beta, &params.tau)
}

/// Per-element energies `u_eᵀ K_e u_e` in active order.
pub fn element_energies(mesh: &Mesh, ke: &ElementMatrix, u: &[f64]) -> Vec<f64> {
    mesh.active_elements().iter().map(|&e| element_energy(ke, &mesh.elem_dof_map[e], u)).collect()
}

/// Compliance `Σ E(ρ̄_e) u_eᵀK_eu_e` and `∂C/∂ρ̄`.
pub fn compliance_wrt_projected(mesh: &Mesh, energies: &[f64], design: &ProcessedDesign, simp: &Simp) -> (f64, Vec<f64>) {
    let mut c = 0.0;
    let mut grad = vec![0.0; energies.len()];
    for (a, &e) in mesh.active_elements().iter().enumerate() {
        if mesh.solid_mask[e] {
            c += energies[a];
        } else {
            let r = design.rho_bar[a];
            c += simp.factor(r) * energies[a];
            grad[a] = -simp.slope(r) * energies[a];
        }
    }
    (c, grad)
}

/// Compliance and its gradient with respect to the raw densities,
/// `∂C/∂ρ = Wᵀ diag(dρ̄/dρ̂) ∂C/∂ρ̄`.
pub fn compliance_sensitivity(
    mesh: &Mesh,
    ke: &ElementMatrix,
    u: &[f64],
    design: &ProcessedDesign,
    simp: &Simp,
    filter: &FilterOperator,
) -> (f64, Vec<f64>) {
    let energies = element_energies(mesh, ke, u);
    let (c, d_bar) = compliance_wrt_projected(mesh, &energies, design, simp);
    (c, chain_to_raw(filter, design, &d_bar))
}

/// Pulls a gradient with respect to ρ̄ back to the raw densities.
pub fn chain_to_raw(filter: &FilterOperator, design: &ProcessedDesign, d_bar: &[f64]) -> Vec<f64> {
    let d_hat: Vec<f64> = d_bar.iter().zip(&design.slope).map(|(g, s)| g * s).collect();
    filter.apply_transpose(&d_hat)
}

/// Volume fraction (mean ρ̄ over active elements, solids counted as 1) and its raw gradient.
pub fn volume_and_sensitivity(design: &ProcessedDesign, filter: &FilterOperator) -> (f64, Vec<f64>) {
    let n = design.rho_bar.len() as f64;
    let v = design.rho_bar.iter().sum::<f64>() / n;
    let d_hat: Vec<f64> = design.slope.iter().map(|s| s / n).collect();
    (v, filter.apply_transpose(&d_hat))
}

/// Coarse raw densities as block means of the fine raw densities.
pub fn restrict_density(rho_fine: &DensityField, fine: &Mesh, coarse: &Mesh) -> Result<DensityField> {
    rho_fine.expect(Stage::Raw)?;
    if rho_fine.values.len() != fine.n_active() {
        return Err(Error::invalid("fine density does not match the fine mesh"));
    }
    let values = restrict_values(&rho_fine.values, fine, coarse)?;
    Ok(DensityField { values, stage: Stage::Raw, resolution: (coarse.nx, coarse.ny) })
}

pub fn restrict_values(fine_vals: &[f64], fine: &Mesh, coarse: &Mesh) -> Result<Vec<f64>> {
    if !fine.nx.is_multiple_of(coarse.nx) || !fine.ny.is_multiple_of(coarse.ny) || fine.nx / coarse.nx != fine.ny / coarse.ny {
        return Err(Error::config(format!(
            "fine mesh {}x{} is not an integer refinement of coarse mesh {}x{}",
            fine.nx, fine.ny, coarse.nx, coarse.ny
        )));
    }
    let ratio = fine.nx / coarse.nx;
    let mut out = Vec::with_capacity(coarse.n_active());
    for &ce in coarse.active_elements() {
        let (cx, cy) = (ce % coarse.nx, ce / coarse.nx);
        let mut sum = 0.0;
        let mut count = 0usize;
        for fy in cy * ratio..(cy + 1) * ratio {
            for fx in cx * ratio..(cx + 1) * ratio {
                if let Some(a) = fine.active_index(fy * fine.nx + fx) {
                    sum += fine_vals[a];
                    count += 1;
                }
            }
        }
        if count == 0 {
            return Err(Error::invalid(format!("coarse element {ce} covers no active fine element")));
        }
        out.push(sum / count as f64);
    }
    Ok(out)
}
