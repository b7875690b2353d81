//! Bi-fidelity approximation: important-sample selection on cheap coarse
//! snapshots, Gramian interpolation coefficients, lifting onto fine snapshots,
//! and computable error certificates.

mod certificate;
mod qr;

pub use certificate::{certify, Certificate, FineModel, ProbeRecord};
pub use qr::{pivoted_qr, select_important, ImportantSet, PivotedQr, RANK_TOLERANCE};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// `⟨a, b⟩ = aᵀb / dim`.
pub fn inner_product(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

/// Norm induced by [`inner_product`].
pub fn norm(a: &[f64]) -> f64 {
    inner_product(a, a).sqrt()
}

pub fn euclid(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Solutions at one resolution, one column per sample.
#[derive(Debug, Clone)]
pub struct SnapshotMatrix {
    pub columns: Vec<Vec<f64>>,
    pub resolution: (usize, usize),
    pub sample_ids: Vec<usize>,
}

impl SnapshotMatrix {
    pub fn new(columns: Vec<Vec<f64>>, resolution: (usize, usize), sample_ids: Vec<usize>) -> Result<Self> {
        if columns.len() != sample_ids.len() {
            return Err(Error::invalid("snapshot columns and sample ids differ in length"));
        }
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(Error::invalid("snapshot columns differ in length"));
            }
        }
        if let Some(i) = columns.iter().position(|c| c.iter().any(|v| v.is_nan())) {
            return Err(Error::invalid("NaN in snapshot column").at_sample(sample_ids[i]));
        }
        Ok(SnapshotMatrix { columns, resolution, sample_ids })
    }

    pub fn n_samples(&self) -> usize {
        self.columns.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }
}

/// A parametric model that can be solved sample by sample.
pub trait SnapshotSource: Sync {
    fn resolution(&self) -> (usize, usize);
    fn solve_sample(&self, sample: usize) -> Result<Vec<f64>>;
}

/// Solves `samples` in parallel; column order follows `samples`.
pub fn collect_snapshots<S: SnapshotSource + ?Sized>(source: &S, samples: &[usize]) -> Result<SnapshotMatrix> {
    let columns = samples
        .par_iter()
        .map(|&i| source.solve_sample(i).map_err(|e| e.at_sample(i)))
        .collect::<Result<Vec<_>>>()?;
    SnapshotMatrix::new(columns, source.resolution(), samples.to_vec())
}

/// Gramian `G_ij = ⟨u_i, u_j⟩` of a snapshot basis `B`.
///
/// Since `G = BᵀB / dim`, the minimum-norm solution of `G c = Bᵀt / dim` is
/// `c = B⁺ t`. It is applied through a QR factorization of `B` rather than by
/// inverting `G`, whose condition number is the square of that of `B`. A
/// rank-deficient basis falls back to an SVD pseudo-inverse.
#[derive(Debug, Clone)]
pub struct Gramian {
    pub matrix: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    solver: CoefficientSolver,
    /// Singular values of `B` at or below `GRAMIAN_CUTOFF · s_max` were dropped.
    pub truncated: bool,
}

#[derive(Debug, Clone)]
enum CoefficientSolver {
    /// Thin `Q` (`dim × n`) and upper-triangular `R` (`n × n`).
    Qr { q: DMatrix<f64>, r: DMatrix<f64> },
    /// `B⁺`, `n × dim`.
    Pinv(DMatrix<f64>),
}

/// Relative singular-value cutoff of the basis pseudo-inverse.
pub const GRAMIAN_CUTOFF: f64 = 1e-12;

impl Gramian {
    pub fn from_columns(cols: &[&[f64]]) -> Self {
        let n = cols.len();
        let dim = cols.first().map_or(0, |c| c.len());
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = inner_product(cols[i], cols[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        let eigenvalues = SymmetricEigen::new(g.clone()).eigenvalues.iter().copied().collect();
        let basis = DMatrix::from_fn(dim, n, |r, c| cols[c][r]);
        let svd = basis.clone().svd(true, true);
        let s_max = svd.singular_values.iter().fold(0.0f64, |m, &v| m.max(v));
        let kept = svd.singular_values.iter().filter(|&&v| v > GRAMIAN_CUTOFF * s_max).count();
        let truncated = kept < n;
        let solver = if !truncated {
            let qr = basis.qr();
            CoefficientSolver::Qr { q: qr.q(), r: qr.r() }
        } else {
            let (u, v_t) = (svd.u.expect("left vectors requested"), svd.v_t.expect("right vectors requested"));
            let mut pinv = DMatrix::zeros(n, dim);
            for (k, &sk) in svd.singular_values.iter().enumerate() {
                if sk > GRAMIAN_CUTOFF * s_max {
                    pinv += v_t.row(k).transpose() * u.column(k).transpose() / sk;
                }
            }
            CoefficientSolver::Pinv(pinv)
        };
        Gramian { matrix: g, eigenvalues, solver, truncated }
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn sigma_max(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Coefficients `c = G⁺ ⟨B, target⟩` of the projection of `target` onto the basis.
    pub fn coefficients(&self, target: &[f64]) -> Vec<f64> {
        let t = DVector::from_column_slice(target);
        match &self.solver {
            CoefficientSolver::Qr { q, r } => {
                let y = q.tr_mul(&t);
                r.solve_upper_triangular(&y).expect("nonsingular R").iter().copied().collect()
            }
            CoefficientSolver::Pinv(p) => (p * t).iter().copied().collect(),
        }
    }
}

pub fn build_gramian(coarse: &SnapshotMatrix, important: &ImportantSet) -> Gramian {
    let cols: Vec<&[f64]> = important.indices.iter().map(|&i| coarse.column(i)).collect();
    Gramian::from_columns(&cols)
}

/// Important samples with their coarse and fine snapshots.
#[derive(Debug, Clone)]
pub struct BiFidelitySurrogate {
    pub important: ImportantSet,
    pub coarse_basis: Vec<Vec<f64>>,
    pub fine_basis: Vec<Vec<f64>>,
    pub coarse_gramian: Gramian,
}

impl BiFidelitySurrogate {
    /// `fine_basis[j]` must be the fine solution at `important.indices[j]`.
    pub fn new(coarse: &SnapshotMatrix, important: ImportantSet, fine_basis: Vec<Vec<f64>>) -> Result<Self> {
        if fine_basis.len() != important.n {
            return Err(Error::invalid(format!(
                "{} fine snapshots for {} important samples",
                fine_basis.len(),
                important.n
            )));
        }
        let coarse_gramian = build_gramian(coarse, &important);
        let coarse_basis = important.indices.iter().map(|&i| coarse.column(i).to_vec()).collect();
        Ok(BiFidelitySurrogate { important, coarse_basis, fine_basis, coarse_gramian })
    }

    pub fn fine_dofs(&self) -> usize {
        self.fine_basis.first().map_or(0, Vec::len)
    }

    /// Coefficients of the coarse projection of `target`.
    pub fn coefficients(&self, target: &[f64]) -> Vec<f64> {
        interpolation_coeffs(self, target)
    }

    pub fn lift(&self, c: &[f64]) -> Vec<f64> {
        lift(self, c)
    }
}

/// `c = G⁺ f` with `fᵢ = ⟨u_L(pᵢ), target⟩`.
pub fn interpolation_coeffs(surrogate: &BiFidelitySurrogate, target: &[f64]) -> Vec<f64> {
    surrogate.coarse_gramian.coefficients(target)
}

/// `û = Σ cⱼ u_H(pⱼ)`.
pub fn lift(surrogate: &BiFidelitySurrogate, c: &[f64]) -> Vec<f64> {
    combine(&surrogate.fine_basis, c)
}

pub(crate) fn combine(basis: &[Vec<f64>], c: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; basis.first().map_or(0, Vec::len)];
    for (u, &cj) in basis.iter().zip(c) {
        for (o, v) in out.iter_mut().zip(u) {
            *o += cj * v;
        }
    }
    out
}
