//! Karhunen–Loève random fields for the horizontal load and the projection
//! threshold.
//!
//! The expansion is computed once on the fine support and carried to coarser
//! meshes by interpolating the modes, so both resolutions see the same field.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::design::Threshold;
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Number of leading eigenvalues in the denominator of the energy ratio.
pub const ENERGY_REFERENCE_MODES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    /// Nodes of the top edge, left to right.
    TopEdge,
    /// Element centroids of the full rectangular grid, element order.
    Centroids,
}

/// Squared-exponential covariance `exp(-|x - x'|² / (2 lc²))`.
pub fn covariance_matrix(coords: &[[f64; 2]], lc: f64) -> Result<DMatrix<f64>> {
    if !(lc > 0.0) {
        return Err(Error::config(format!("correlation length must be positive, got {lc}")));
    }
    let n = coords.len();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let dx = coords[i][0] - coords[j][0];
        let dy = coords[i][1] - coords[j][1];
        (-(dx * dx + dy * dy) / (2.0 * lc * lc)).exp()
    }))
}

/// Eigenpairs of a covariance matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct KlDecomposition {
    /// Every eigenvalue, descending, clipped at zero.
    pub spectrum: Vec<f64>,
    /// Retained unit eigenvectors.
    pub modes: Vec<Vec<f64>>,
}

impl KlDecomposition {
    pub fn lambdas(&self) -> &[f64] {
        &self.spectrum[..self.modes.len()]
    }

    /// `Σ_{i≤n_M} √λᵢ / Σ_{i≤100} √λᵢ`.
    pub fn energy_ratio(&self) -> f64 {
        energy_ratio(&self.spectrum, self.modes.len())
    }
}

fn energy_ratio(spectrum: &[f64], kept: usize) -> f64 {
    let total: f64 = spectrum.iter().take(ENERGY_REFERENCE_MODES).map(|l| l.sqrt()).sum();
    if total == 0.0 {
        return 0.0;
    }
    spectrum.iter().take(kept).map(|l| l.sqrt()).sum::<f64>() / total
}

/// Flips `v` so that its largest-magnitude entry (first on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn sorted_eigen(r: DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let eig = SymmetricEigen::new(r);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let vectors = order
        .iter()
        .map(|&k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            fix_sign(&mut v);
            v
        })
        .collect();
    (values, vectors)
}

/// Leading `n_modes` eigenpairs of a dense covariance matrix.
pub fn kl_decompose(r: &DMatrix<f64>, n_modes: usize) -> Result<KlDecomposition> {
    if n_modes == 0 || n_modes > r.nrows() {
        return Err(Error::config(format!(
            "cannot retain {n_modes} modes of a {}-point covariance",
            r.nrows()
        )));
    }
    let (spectrum, mut modes) = sorted_eigen(r.clone());
    modes.truncate(n_modes);
    Ok(KlDecomposition { spectrum, modes })
}

/// Eigenpairs of the covariance on a tensor grid, `R = R_y ⊗ R_x`.
///
/// Points are ordered x-fastest, matching element numbering. The kernel is
/// separable, so the eigenpairs are products of the 1D ones.
pub fn kl_decompose_grid(xs: &[f64], ys: &[f64], lc: f64, n_modes: usize) -> Result<KlDecomposition> {
    let n = xs.len() * ys.len();
    if n_modes == 0 || n_modes > n {
        return Err(Error::config(format!("cannot retain {n_modes} modes of a {n}-point covariance")));
    }
    let line = |c: &[f64]| -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let pts: Vec<[f64; 2]> = c.iter().map(|&v| [v, 0.0]).collect();
        Ok(sorted_eigen(covariance_matrix(&pts, lc)?))
    };
    let (lx, vx) = line(xs)?;
    let (ly, vy) = line(ys)?;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n);
    for (j, a) in ly.iter().enumerate() {
        for (i, b) in lx.iter().enumerate() {
            pairs.push((a * b, i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1 + a.2).cmp(&(b.1 + b.2))).then(a.2.cmp(&b.2)));
    let spectrum = pairs.iter().map(|p| p.0).collect();
    let modes = pairs[..n_modes]
        .iter()
        .map(|&(_, i, j)| {
            let mut v = Vec::with_capacity(n);
            for y in &vy[j] {
                for x in &vx[i] {
                    v.push(y * x);
                }
            }
            fix_sign(&mut v);
            v
        })
        .collect();
    Ok(KlDecomposition { spectrum, modes })
}

/// Point in parameter space with its integration weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterPoint {
    pub coords: Vec<f64>,
    pub weight: f64,
}

/// Truncated KL expansion `Z = γ₀ + Σ √λᵢ γᵢ pᵢ` on the fine support.
#[derive(Debug, Clone)]
pub struct KLModel {
    pub lc: f64,
    pub gamma0: f64,
    pub support: Support,
    /// Element counts of the mesh the modes were computed on.
    pub fine_resolution: (usize, usize),
    /// Physical domain extent `(width, height)`.
    pub extent: (f64, f64),
    pub lambdas: Vec<f64>,
    pub modes: Vec<Vec<f64>>,
    pub energy_ratio: f64,
}

impl KLModel {
    /// Expansion over the top-edge nodes of `mesh`.
    pub fn top_edge(mesh: &Mesh, lc: f64, n_modes: usize, gamma0: f64) -> Result<Self> {
        let coords: Vec<[f64; 2]> = mesh.top_edge_nodes().iter().map(|&n| mesh.node_coords[n]).collect();
        let kl = kl_decompose(&covariance_matrix(&coords, lc)?, n_modes)?;
        Ok(Self::from_parts(mesh, Support::TopEdge, lc, gamma0, kl))
    }

    /// Expansion over all element centroids of the rectangular grid of `mesh`.
    pub fn centroids(mesh: &Mesh, lc: f64, n_modes: usize, gamma0: f64) -> Result<Self> {
        let h = mesh.element_size;
        let xs: Vec<f64> = (0..mesh.nx).map(|i| (i as f64 + 0.5) * h).collect();
        let ys: Vec<f64> = (0..mesh.ny).map(|i| (i as f64 + 0.5) * h).collect();
        let kl = kl_decompose_grid(&xs, &ys, lc, n_modes)?;
        Ok(Self::from_parts(mesh, Support::Centroids, lc, gamma0, kl))
    }

    fn from_parts(mesh: &Mesh, support: Support, lc: f64, gamma0: f64, kl: KlDecomposition) -> Self {
        KLModel {
            lc,
            gamma0,
            support,
            fine_resolution: (mesh.nx, mesh.ny),
            extent: (mesh.width(), mesh.height()),
            lambdas: kl.lambdas().to_vec(),
            energy_ratio: kl.energy_ratio(),
            modes: kl.modes,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.lambdas.len()
    }

    /// Modes scaled by `√λᵢ` and carried to a mesh of `resolution` elements.
    pub fn basis(&self, resolution: (usize, usize)) -> Result<FieldBasis> {
        let (fx, fy) = self.fine_resolution;
        let (cx, cy) = resolution;
        if cx == 0 || cy == 0 || fx % cx != 0 || fy % cy != 0 {
            return Err(Error::config(format!(
                "resolution {cx}x{cy} does not divide the field resolution {fx}x{fy}"
            )));
        }
        let scaled = self
            .modes
            .iter()
            .zip(&self.lambdas)
            .map(|(m, l)| {
                let s = l.sqrt();
                let values = match self.support {
                    Support::TopEdge => {
                        let ratio = fx / cx;
                        (0..=cx).map(|i| m[i * ratio]).collect::<Vec<_>>()
                    }
                    Support::Centroids => interpolate_centroids(m, (fx, fy), (cx, cy)),
                };
                values.into_iter().map(|v| s * v).collect()
            })
            .collect();
        Ok(FieldBasis { gamma0: self.gamma0, scaled_modes: scaled })
    }

    /// `Z(x, p)` at the support points of a mesh of `resolution` elements.
    pub fn evaluate_field(&self, p: &[f64], resolution: (usize, usize)) -> Result<Vec<f64>> {
        self.basis(resolution)?.evaluate(p)
    }
}

/// Bilinear interpolation of a centroid field to the centroids of a coarser grid.
fn interpolate_centroids(values: &[f64], fine: (usize, usize), coarse: (usize, usize)) -> Vec<f64> {
    let (fx, fy) = fine;
    let (cx, cy) = coarse;
    let ratio = fx as f64 / cx as f64;
    // coarse centroid in fine centroid-index coordinates
    let locate = |c: usize, n: usize| -> (usize, usize, f64) {
        let t = (c as f64 + 0.5) * ratio - 0.5;
        let i0 = (t.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, t - i0 as f64)
    };
    let mut out = Vec::with_capacity(cx * cy);
    for j in 0..cy {
        let (y0, y1, ty) = locate(j, fy);
        for i in 0..cx {
            let (x0, x1, tx) = locate(i, fx);
            let v = |x: usize, y: usize| values[y * fx + x];
            out.push(
                (1.0 - ty) * ((1.0 - tx) * v(x0, y0) + tx * v(x1, y0))
                    + ty * ((1.0 - tx) * v(x0, y1) + tx * v(x1, y1)),
            );
        }
    }
    out
}

/// KL modes at one resolution, premultiplied by `√λᵢ`.
#[derive(Debug, Clone)]
pub struct FieldBasis {
    pub gamma0: f64,
    pub scaled_modes: Vec<Vec<f64>>,
}

impl FieldBasis {
    pub fn len(&self) -> usize {
        self.scaled_modes.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn evaluate(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.scaled_modes.len() {
            return Err(Error::invalid(format!(
                "parameter dimension {} does not match {} modes",
                p.len(),
                self.scaled_modes.len()
            )));
        }
        let mut z = vec![self.gamma0; self.len()];
        for (m, &pi) in self.scaled_modes.iter().zip(p) {
            for (zk, mk) in z.iter_mut().zip(m) {
                *zk += pi * mk;
            }
        }
        Ok(z)
    }

    /// Pointwise variance `Σ λᵢ γᵢ(x)² / 3` under uniform `pᵢ` on [-1, 1].
    pub fn variance(&self) -> Vec<f64> {
        let mut var = vec![0.0; self.len()];
        for m in &self.scaled_modes {
            for (v, mk) in var.iter_mut().zip(m) {
                *v += mk * mk / 3.0;
            }
        }
        var
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Maps a field realization to thresholds `a1 Φ(Z / std Z) + a2`.
pub fn threshold_from_field(z: &[f64], variance: &[f64], a1: f64, a2: f64) -> Result<Vec<f64>> {
    z.iter()
        .zip(variance)
        .map(|(&zk, &vk)| {
            let s = vk.sqrt();
            let standardized = if s > 0.0 { zk / s } else { 0.0 };
            let tau = a1 * normal_cdf(standardized) + a2;
            if !(0.0..=1.0).contains(&tau) {
                return Err(Error::config(format!("threshold {tau} outside [0, 1]; check a1 and a2")));
            }
            Ok(tau)
        })
        .collect()
}

/// Per-element thresholds (all grid elements, element order) at `resolution`.
pub fn threshold_field(model: &KLModel, p: &[f64], a1: f64, a2: f64, resolution: (usize, usize)) -> Result<Vec<f64>> {
    if model.support != Support::Centroids {
        return Err(Error::config("threshold fields need a centroid-supported expansion"));
    }
    let basis = model.basis(resolution)?;
    threshold_from_field(&basis.evaluate(p)?, &basis.variance(), a1, a2)
}

/// Restricts a per-element field to the active elements of `mesh`.
pub fn active_threshold(mesh: &Mesh, per_element: &[f64]) -> Threshold {
    Threshold::PerElement(mesh.active_elements().iter().map(|&e| per_element[e]).collect())
}

/// Trapezoidal nodal weights along the top edge.
pub fn edge_weights(mesh: &Mesh) -> Vec<f64> {
    let h = mesh.element_size;
    (0..=mesh.nx).map(|i| if i == 0 || i == mesh.nx { 0.5 * h } else { h }).collect()
}

/// Affine load family `F(p) = base + Σ pᵢ modes[i]` over the top edge.
#[derive(Debug, Clone)]
pub struct LoadFamily {
    pub base: Vec<f64>,
    pub modes: Vec<Vec<f64>>,
}

impl LoadFamily {
    /// Vertical `-f2` per unit length and horizontal `Z(x, p)`, lumped trapezoidally.
    pub fn top_edge(mesh: &Mesh, model: &KLModel, f2: f64) -> Result<Self> {
        if model.support != Support::TopEdge {
            return Err(Error::config("load vectors need a top-edge expansion"));
        }
        let basis = model.basis((mesh.nx, mesh.ny))?;
        let nodes = mesh.top_edge_nodes();
        let w = edge_weights(mesh);
        let mut base = vec![0.0; mesh.n_dofs()];
        for (k, &n) in nodes.iter().enumerate() {
            base[2 * n] = basis.gamma0 * w[k];
            base[2 * n + 1] = -f2 * w[k];
        }
        let modes = basis
            .scaled_modes
            .iter()
            .map(|m| {
                let mut f = vec![0.0; mesh.n_dofs()];
                for (k, &n) in nodes.iter().enumerate() {
                    f[2 * n] = m[k] * w[k];
                }
                f
            })
            .collect();
        Ok(LoadFamily { base, modes })
    }

    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn at(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.modes.len() {
            return Err(Error::invalid(format!(
                "parameter dimension {} does not match {} load modes",
                p.len(),
                self.modes.len()
            )));
        }
        let mut f = self.base.clone();
        for (m, &pi) in self.modes.iter().zip(p) {
            for (fk, mk) in f.iter_mut().zip(m) {
                *fk += pi * mk;
            }
        }
        Ok(f)
    }
}

/// Load vector of the top-edge field at `p`.
pub fn load_vector(mesh: &Mesh, model: &KLModel, p: &[f64], f2: f64) -> Result<Vec<f64>> {
    LoadFamily::top_edge(mesh, model, f2)?.at(p)
}
