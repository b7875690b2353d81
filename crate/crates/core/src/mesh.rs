//! Structured quadrilateral grids with the benchmark boundary conditions.
//!
//! Nodes are numbered column by column, `node = ix * (ny + 1) + iy` with `iy = 0`
//! on the bottom edge, so the stiffness matrix half-bandwidth is `2 * ny + 5`.
//! Elements are numbered row by row from the bottom, `elem = iy * nx + ix`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainShape {
    Rectangle,
    /// Square with the upper-right 2/5 x 2/5 block removed.
    LBracket,
}

/// Support and load layout of a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcPreset {
    /// Bottom corners pinned, distributed load on the top edge, top element rows solid.
    CarrierPlate,
    /// Top edge of the left limb clamped, point load at the tip of the right limb.
    LBracket,
    /// Carrier-plate supports and loading without solid rows.
    Custom,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    /// Physical edge length of one element.
    pub element_size: f64,
    pub shape: DomainShape,
    pub preset: BcPreset,
    pub active_mask: Vec<bool>,
    pub solid_mask: Vec<bool>,
    /// Sorted, deduplicated constrained DOF indices.
    pub fixed_dofs: Vec<usize>,
    pub node_coords: Vec<[f64; 2]>,
    pub elem_dof_map: Vec<[usize; 8]>,
    pub elem_centroids: Vec<[f64; 2]>,
    active: Vec<usize>,
    active_index: Vec<Option<usize>>,
}

/// Builds a unit-element mesh (element size 1).
pub fn build_mesh(nx: usize, ny: usize, shape: DomainShape, preset: BcPreset) -> Result<Mesh> {
    Mesh::new(nx, ny, shape, preset, 1.0)
}

impl Mesh {
    pub fn new(
        nx: usize,
        ny: usize,
        shape: DomainShape,
        preset: BcPreset,
        element_size: f64,
    ) -> Result<Mesh> {
        if nx == 0 || ny == 0 {
            return Err(Error::config(format!("mesh must have at least one element per axis, got {nx}x{ny}")));
        }
        if !(element_size > 0.0) {
            return Err(Error::config(format!("element size must be positive, got {element_size}")));
        }
        match (shape, preset) {
            (DomainShape::Rectangle, BcPreset::CarrierPlate | BcPreset::Custom) => {}
            (DomainShape::LBracket, BcPreset::LBracket) => {
                if nx != ny || !nx.is_multiple_of(5) {
                    return Err(Error::config(format!(
                        "l_bracket needs a square mesh divisible by 5, got {nx}x{ny}"
                    )));
                }
            }
            _ => {
                return Err(Error::config(format!(
                    "boundary preset {preset:?} is not defined on shape {shape:?}"
                )))
            }
        }

        let n_nodes = (nx + 1) * (ny + 1);
        let n_elem = nx * ny;
        let node = |ix: usize, iy: usize| ix * (ny + 1) + iy;

        let mut node_coords = vec![[0.0; 2]; n_nodes];
        for ix in 0..=nx {
            for iy in 0..=ny {
                node_coords[node(ix, iy)] = [ix as f64 * element_size, iy as f64 * element_size];
            }
        }

        let mut elem_dof_map = Vec::with_capacity(n_elem);
        let mut elem_centroids = Vec::with_capacity(n_elem);
        for iy in 0..ny {
            for ix in 0..nx {
                // counter-clockwise from the lower-left corner
                let n = [node(ix, iy), node(ix + 1, iy), node(ix + 1, iy + 1), node(ix, iy + 1)];
                elem_dof_map.push([
                    2 * n[0],
                    2 * n[0] + 1,
                    2 * n[1],
                    2 * n[1] + 1,
                    2 * n[2],
                    2 * n[2] + 1,
                    2 * n[3],
                    2 * n[3] + 1,
                ]);
                elem_centroids.push([(ix as f64 + 0.5) * element_size, (iy as f64 + 0.5) * element_size]);
            }
        }

        let void_from_x = 3 * nx / 5;
        let void_from_y = 3 * ny / 5;
        let active_mask: Vec<bool> = (0..n_elem)
            .map(|e| match shape {
                DomainShape::Rectangle => true,
                DomainShape::LBracket => !(e % nx >= void_from_x && e / nx >= void_from_y),
            })
            .collect();

        let mut solid_mask = vec![false; n_elem];
        if preset == BcPreset::CarrierPlate {
            let rows = if ny >= 20 { 2 } else { 1 };
            for iy in ny.saturating_sub(rows)..ny {
                for ix in 0..nx {
                    solid_mask[iy * nx + ix] = true;
                }
            }
        }

        let mut fixed = Vec::new();
        match preset {
            BcPreset::CarrierPlate | BcPreset::Custom => {
                for n in [node(0, 0), node(nx, 0)] {
                    fixed.extend([2 * n, 2 * n + 1]);
                }
            }
            BcPreset::LBracket => {
                for ix in 0..=void_from_x {
                    let n = node(ix, ny);
                    fixed.extend([2 * n, 2 * n + 1]);
                }
            }
        }
        // nodes that touch no active element carry no stiffness
        let mut supported = vec![false; n_nodes];
        for (e, dofs) in elem_dof_map.iter().enumerate() {
            if active_mask[e] {
                for k in 0..4 {
                    supported[dofs[2 * k] / 2] = true;
                }
            }
        }
        for (n, &s) in supported.iter().enumerate() {
            if !s {
                fixed.extend([2 * n, 2 * n + 1]);
            }
        }
        fixed.sort_unstable();
        fixed.dedup();

        let mut active = Vec::new();
        let mut active_index = vec![None; n_elem];
        for (e, &a) in active_mask.iter().enumerate() {
            if a {
                active_index[e] = Some(active.len());
                active.push(e);
            }
        }

        Ok(Mesh {
            nx,
            ny,
            element_size,
            shape,
            preset,
            active_mask,
            solid_mask,
            fixed_dofs: fixed,
            node_coords,
            elem_dof_map,
            elem_centroids,
            active,
            active_index,
        })
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.n_nodes()
    }

    pub fn n_elements(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        ix * (self.ny + 1) + iy
    }

    /// Element indices of the active (non-void) elements, in element order.
    pub fn active_elements(&self) -> &[usize] {
        &self.active
    }

    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    /// Position of element `e` in the active list.
    pub fn active_index(&self, e: usize) -> Option<usize> {
        self.active_index[e]
    }

    /// Solid flags in active-element order.
    pub fn active_solid(&self) -> Vec<bool> {
        self.active.iter().map(|&e| self.solid_mask[e]).collect()
    }

    /// Physical width of the domain.
    pub fn width(&self) -> f64 {
        self.nx as f64 * self.element_size
    }

    pub fn height(&self) -> f64 {
        self.ny as f64 * self.element_size
    }

    /// Top-edge nodes ordered left to right.
    pub fn top_edge_nodes(&self) -> Vec<usize> {
        (0..=self.nx).map(|ix| self.node_index(ix, self.ny)).collect()
    }

    /// Tip node of the right limb of the L-bracket (top-right corner of the arm).
    pub fn lbracket_tip_node(&self) -> usize {
        self.node_index(self.nx, 3 * self.ny / 5)
    }

    /// Half-bandwidth of the assembled stiffness matrix.
    pub fn half_bandwidth(&self) -> usize {
        self.elem_dof_map
            .iter()
            .map(|d| d.iter().max().unwrap() - d.iter().min().unwrap())
            .max()
            .unwrap_or(0)
    }

    pub fn is_fixed(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_dofs()];
        for &d in &self.fixed_dofs {
            mask[d] = true;
        }
        mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn carrier_small_mesh_counts() {
        let m = build_mesh(4, 4, DomainShape::Rectangle, BcPreset::CarrierPlate).unwrap();
        assert_eq!(m.n_nodes(), 25);
        assert_eq!(m.n_dofs(), 50);
        let solid_rows: Vec<usize> = (0..4).filter(|iy| m.solid_mask[iy * 4]).collect();
        assert_eq!(solid_rows, vec![3]);
        assert_eq!(m.solid_mask.iter().filter(|&&s| s).count(), 4);
    }

    #[test]
    fn carrier_fine_mesh_two_solid_rows() {
        let m = build_mesh(100, 100, DomainShape::Rectangle, BcPreset::CarrierPlate).unwrap();
        assert_eq!(m.n_nodes(), 10201);
        assert_eq!(m.solid_mask.iter().filter(|&&s| s).count(), 200);
        assert!(m.solid_mask[99 * 100] && m.solid_mask[98 * 100] && !m.solid_mask[97 * 100]);
    }

    #[test]
    fn lbracket_void_block() {
        let m = build_mesh(10, 10, DomainShape::LBracket, BcPreset::LBracket).unwrap();
        let passive: Vec<usize> = (0..100).filter(|&e| !m.active_mask[e]).collect();
        assert_eq!(passive.len(), 16);
        for iy in 0..10 {
            let row: usize = (0..10).filter(|&ix| !m.active_mask[iy * 10 + ix]).count();
            assert_eq!(row, if iy >= 6 { 4 } else { 0 });
        }
        // interior void nodes are constrained
        let n = m.node_index(9, 9);
        assert!(m.fixed_dofs.contains(&(2 * n)));
        assert_eq!(m.n_active(), 84);
    }

    #[test]
    fn dof_map_valid_and_distinct() {
        let m = build_mesh(5, 3, DomainShape::Rectangle, BcPreset::Custom).unwrap();
        for dofs in &m.elem_dof_map {
            let mut d = dofs.to_vec();
            d.sort_unstable();
            d.dedup();
            assert_eq!(d.len(), 8);
            assert!(d.iter().all(|&x| x < m.n_dofs()));
        }
        assert_eq!(m.half_bandwidth(), 2 * 3 + 5);
        assert!(!m.fixed_dofs.is_empty());
    }

    #[test]
    fn rejects_bad_combinations() {
        assert!(build_mesh(10, 10, DomainShape::LBracket, BcPreset::CarrierPlate).is_err());
        assert!(build_mesh(12, 12, DomainShape::LBracket, BcPreset::LBracket).is_err());
        assert!(build_mesh(10, 5, DomainShape::LBracket, BcPreset::LBracket).is_err());
        assert!(build_mesh(0, 5, DomainShape::Rectangle, BcPreset::Custom).is_err());
    }
}
