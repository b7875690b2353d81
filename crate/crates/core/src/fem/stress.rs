use crate::fem::Material;
use crate::mesh::Mesh;

/// Element centroid Von-Mises stress, `σ = ρ̄^ι D B u_e`.
///
/// Returns one value per element (passive elements report 0). `rho_bar` is
/// indexed by active element; solid elements use ρ̄ = 1.
pub fn von_mises(mesh: &Mesh, material: &Material, u: &[f64], rho_bar: &[f64], iota: f64) -> Vec<f64> {
    let d = material.plane_stress();
    let h = mesh.element_size;
    let dndx = [-1.0, 1.0, 1.0, -1.0].map(|v: f64| v / (2.0 * h));
    let dndy = [-1.0, -1.0, 1.0, 1.0].map(|v: f64| v / (2.0 * h));
    let mut out = vec![0.0; mesh.n_elements()];
    for (a, &e) in mesh.active_elements().iter().enumerate() {
        let dofs = &mesh.elem_dof_map[e];
        let (mut ex, mut ey, mut gxy) = (0.0, 0.0, 0.0);
        for k in 0..4 {
            let (ux, uy) = (u[dofs[2 * k]], u[dofs[2 * k + 1]]);
            ex += dndx[k] * ux;
            ey += dndy[k] * uy;
            gxy += dndy[k] * ux + dndx[k] * uy;
        }
        let scale = if mesh.solid_mask[e] { 1.0 } else { rho_bar[a].powf(iota) };
        let sx = scale * (d[0][0] * ex + d[0][1] * ey);
        let sy = scale * (d[1][0] * ex + d[1][1] * ey);
        let txy = scale * d[2][2] * gxy;
        out[e] = (sx * sx + sy * sy - sx * sy + 3.0 * txy * txy).max(0.0).sqrt();
    }
    out
}

/// Spatial average of [`von_mises`] over the active elements.
pub fn mean_von_mises(mesh: &Mesh, material: &Material, u: &[f64], rho_bar: &[f64], iota: f64) -> f64 {
    let vm = von_mises(mesh, material, u, rho_bar, iota);
    mesh.active_elements().iter().map(|&e| vm[e]).sum::<f64>() / mesh.n_active() as f64
}
