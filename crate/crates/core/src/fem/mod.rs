//! Plane-stress bilinear quadrilateral finite elements on a structured grid.

mod band;
mod stress;

pub use band::{BandCholesky, SymBand};
pub use stress::{mean_von_mises, von_mises};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

pub type ElementMatrix = [[f64; 8]; 8];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
}

impl Default for Material {
    fn default() -> Self {
        Material { youngs_modulus: 1.0, poisson_ratio: 0.3 }
    }
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        if !(self.youngs_modulus > 0.0) {
            return Err(Error::config("Young's modulus must be positive"));
        }
        if !(self.poisson_ratio > 0.0 && self.poisson_ratio < 0.5) {
            return Err(Error::config("Poisson ratio must lie in (0, 0.5)"));
        }
        Ok(())
    }

    /// Plane-stress constitutive matrix.
    pub fn plane_stress(&self) -> [[f64; 3]; 3] {
        let (e, nu) = (self.youngs_modulus, self.poisson_ratio);
        let c = e / (1.0 - nu * nu);
        [[c, c * nu, 0.0], [c * nu, c, 0.0], [0.0, 0.0, c * (1.0 - nu) / 2.0]]
    }
}

/// Closed-form stiffness of a square bilinear element with unit thickness.
///
/// Nodes run counter-clockwise from the lower-left corner; the matrix does not
/// depend on the element edge length in 2D.
pub fn element_stiffness(youngs_modulus: f64, poisson_ratio: f64) -> ElementMatrix {
    let nu = poisson_ratio;
    let k = [
        0.5 - nu / 6.0,
        0.125 + nu / 8.0,
        -0.25 - nu / 12.0,
        -0.125 + 3.0 * nu / 8.0,
        -0.25 + nu / 12.0,
        -0.125 - nu / 8.0,
        nu / 6.0,
        0.125 - 3.0 * nu / 8.0,
    ];
    const PATTERN: [[usize; 8]; 8] = [
        [0, 1, 2, 3, 4, 5, 6, 7],
        [1, 0, 7, 6, 5, 4, 3, 2],
        [2, 7, 0, 5, 6, 3, 4, 1],
        [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3],
        [5, 4, 3, 2, 1, 0, 7, 6],
        [6, 3, 4, 1, 2, 7, 0, 5],
        [7, 2, 1, 4, 3, 6, 5, 0],
    ];
    let c = youngs_modulus / (1.0 - nu * nu);
    let mut ke = [[0.0; 8]; 8];
    for i in 0..8 {
        for j in 0..8 {
            ke[i][j] = c * k[PATTERN[i][j]];
        }
    }
    ke
}

/// `u_eᵀ K_e u_e` for the element DOFs of `u`.
#[inline]
pub fn element_energy(ke: &ElementMatrix, dofs: &[usize; 8], u: &[f64]) -> f64 {
    let ue: [f64; 8] = std::array::from_fn(|k| u[dofs[k]]);
    let mut e = 0.0;
    for i in 0..8 {
        let mut row = 0.0;
        for j in 0..8 {
            row += ke[i][j] * ue[j];
        }
        e += ue[i] * row;
    }
    e
}

/// Global stiffness in band storage.
#[derive(Debug, Clone)]
pub struct StiffnessMatrix {
    band: SymBand,
    fixed: Vec<usize>,
    bc_applied: bool,
}

/// `K = Σ ρ̄ᵢ^ι K_e` over active elements; solid elements contribute with ρ̄ = 1.
///
/// `rho_bar` is indexed by active element.
pub fn assemble(mesh: &Mesh, ke: &ElementMatrix, rho_bar: &[f64], iota: f64) -> Result<StiffnessMatrix> {
    assemble_with_floor(mesh, ke, rho_bar, iota, 0.0)
}

/// Modified SIMP assembly: element factor `e_min + (1 - e_min) ρ̄^ι`.
pub fn assemble_with_floor(
    mesh: &Mesh,
    ke: &ElementMatrix,
    rho_bar: &[f64],
    iota: f64,
    e_min: f64,
) -> Result<StiffnessMatrix> {
    if rho_bar.len() != mesh.n_active() {
        return Err(Error::invalid(format!(
            "density length {} does not match {} active elements",
            rho_bar.len(),
            mesh.n_active()
        )));
    }
    if !(iota > 0.0) {
        return Err(Error::invalid("penalization exponent must be positive"));
    }
    let mut band = SymBand::zeros(mesh.n_dofs(), mesh.half_bandwidth());
    for (a, &e) in mesh.active_elements().iter().enumerate() {
        let r = rho_bar[a];
        if r.is_nan() {
            return Err(Error::invalid(format!("NaN density at active element {a}")));
        }
        let factor = if mesh.solid_mask[e] { 1.0 } else { e_min + (1.0 - e_min) * r.powf(iota) };
        let dofs = &mesh.elem_dof_map[e];
        for i in 0..8 {
            for j in 0..8 {
                if dofs[i] >= dofs[j] {
                    band.add_lower(dofs[i], dofs[j], factor * ke[i][j]);
                }
            }
        }
    }
    Ok(StiffnessMatrix { band, fixed: mesh.fixed_dofs.clone(), bc_applied: false })
}

impl StiffnessMatrix {
    pub fn dim(&self) -> usize {
        self.band.dim()
    }

    pub fn bc_applied(&self) -> bool {
        self.bc_applied
    }

    pub fn band(&self) -> &SymBand {
        &self.band
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.band.get(i, j)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.band.matvec(x)
    }

    /// Replaces constrained rows and columns with identity rows.
    pub fn apply_bc(mut self) -> Self {
        if !self.bc_applied {
            for &d in &self.fixed {
                self.band.constrain(d);
            }
            self.bc_applied = true;
        }
        self
    }

    pub fn factorize(&self) -> Result<Factorization> {
        if !self.bc_applied {
            return Err(Error::invalid("boundary conditions must be applied before factorization"));
        }
        let chol = self.band.cholesky()?;
        Ok(Factorization { chol: Arc::new(chol), fixed: self.fixed.clone() })
    }

    /// Largest eigenvalue restricted to the free DOFs.
    pub fn sigma_max(&self) -> f64 {
        let mut free = vec![true; self.dim()];
        for &d in &self.fixed {
            free[d] = false;
        }
        power_iteration(self.dim(), |x| {
            let mut xm = x.to_vec();
            for (v, &f) in xm.iter_mut().zip(&free) {
                if !f {
                    *v = 0.0;
                }
            }
            let mut y = self.band.matvec(&xm);
            for (v, &f) in y.iter_mut().zip(&free) {
                if !f {
                    *v = 0.0;
                }
            }
            y
        })
    }
}

/// Factorized stiffness with boundary conditions; cheap to clone and share.
#[derive(Debug, Clone)]
pub struct Factorization {
    chol: Arc<BandCholesky>,
    fixed: Vec<usize>,
}

impl Factorization {
    /// Solves `K U = F`; loads on constrained DOFs are ignored and `U` is zero there.
    pub fn solve(&self, load: &[f64]) -> Result<Vec<f64>> {
        if load.len() != self.chol.dim() {
            return Err(Error::invalid(format!(
                "load length {} does not match {} DOFs",
                load.len(),
                self.chol.dim()
            )));
        }
        let mut f = load.to_vec();
        for &d in &self.fixed {
            f[d] = 0.0;
        }
        let mut u = self.chol.solve(&f);
        for &d in &self.fixed {
            u[d] = 0.0;
        }
        Ok(u)
    }
}

/// One-shot `K U = F` solve.
pub fn solve(k: &StiffnessMatrix, load: &[f64]) -> Result<Vec<f64>> {
    k.factorize()?.solve(load)
}

/// `C = Uᵀ F`.
pub fn compliance(u: &[f64], load: &[f64]) -> f64 {
    u.iter().zip(load).map(|(a, b)| a * b).sum()
}

/// Largest eigenvalue of a symmetric positive semidefinite operator.
///
/// Relative tolerance 1e-6 on the Rayleigh quotient, at most 500 iterations.
pub fn power_iteration(n: usize, apply: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
    if n == 0 {
        return 0.0;
    }
    // deterministic start with components in every direction
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_7).fract()).collect();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= norm);
    let mut lambda = 0.0;
    for _ in 0..500 {
        let y = apply(&x);
        let rq: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if ny == 0.0 {
            return 0.0;
        }
        x = y.into_iter().map(|v| v / ny).collect();
        let done = (rq - lambda).abs() <= 1e-6 * rq.abs();
        lambda = rq;
        if done {
            break;
        }
    }
    // the Rayleigh quotient converges from below; ‖Ax‖ bounds it from above
    let y = apply(&x);
    y.iter().map(|v| v * v).sum::<f64>().sqrt().max(lambda)
}
