use crate::error::{Error, Result};

use super::SnapshotMatrix;

/// Pivots with `|R_ii| ≤ RANK_TOLERANCE · |R_11|` do not count toward the rank.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Column-pivoted Householder QR, R factor not kept.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// Column indices in pivot order (all columns).
    pub pivots: Vec<usize>,
    /// `|R_ii|` in pivot order; zero past `min(rows, cols)`.
    pub r_diag: Vec<f64>,
}

impl PivotedQr {
    pub fn numerical_rank(&self) -> usize {
        let r11 = self.r_diag.first().copied().unwrap_or(0.0);
        self.r_diag.iter().filter(|&&r| r > RANK_TOLERANCE * r11).count()
    }
}

/// Greedy QR: each step takes the column with the largest residual norm,
/// lowest index on ties.
pub fn pivoted_qr(columns: &[Vec<f64>]) -> PivotedQr {
    let n = columns.len();
    let m = columns.first().map_or(0, Vec::len);
    let mut a: Vec<Vec<f64>> = columns.to_vec();
    let mut used = vec![false; n];
    let mut pivots = Vec::with_capacity(n);
    let mut r_diag = Vec::with_capacity(n);
    for k in 0..m.min(n) {
        let mut best = None;
        let mut best_norm = -1.0;
        for j in 0..n {
            if used[j] {
                continue;
            }
            let s: f64 = a[j][k..].iter().map(|v| v * v).sum();
            if s > best_norm {
                best_norm = s;
                best = Some(j);
            }
        }
        let p = best.expect("an unused column remains");
        used[p] = true;
        pivots.push(p);
        let norm = best_norm.sqrt();
        r_diag.push(norm);
        if norm == 0.0 {
            continue;
        }
        // Householder vector mapping a[p][k..] onto -sign(x0)·norm·e1
        let mut v = a[p][k..].to_vec();
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv == 0.0 {
            continue;
        }
        for j in 0..n {
            if used[j] {
                continue;
            }
            let col = &mut a[j][k..];
            let s = 2.0 * v.iter().zip(col.iter()).map(|(x, y)| x * y).sum::<f64>() / vtv;
            for (c, x) in col.iter_mut().zip(&v) {
                *c -= s * x;
            }
        }
    }
    for j in 0..n {
        if !used[j] {
            pivots.push(j);
            r_diag.push(0.0);
        }
    }
    PivotedQr { pivots, r_diag }
}

/// Leading pivots of the coarse snapshot QR.
#[derive(Debug, Clone)]
pub struct ImportantSet {
    /// Selected sample positions, pivot order.
    pub indices: Vec<usize>,
    pub n: usize,
    /// `|R_ii|` for every pivot.
    pub pivot_singular_values: Vec<f64>,
    /// Complete pivot order; entries past `n` are the unimportant samples.
    pub pivot_order: Vec<usize>,
    pub numerical_rank: usize,
}

impl ImportantSet {
    pub fn from_qr(qr: &PivotedQr, n: usize) -> Result<Self> {
        let cap = qr.pivots.len();
        if n == 0 || n > cap {
            return Err(Error::config(format!("important-sample budget {n} outside 1..={cap}")));
        }
        let rank = qr.numerical_rank();
        if n > rank {
            log::warn!("important-sample budget {n} exceeds the numerical rank {rank}");
        }
        Ok(ImportantSet {
            indices: qr.pivots[..n].to_vec(),
            n,
            pivot_singular_values: qr.r_diag.clone(),
            pivot_order: qr.pivots.clone(),
            numerical_rank: rank,
        })
    }

    /// The first `count` samples after the important ones, in pivot order.
    pub fn unimportant(&self, count: usize) -> &[usize] {
        let end = (self.n + count).min(self.pivot_order.len());
        &self.pivot_order[self.n..end]
    }
}

pub fn select_important(coarse: &SnapshotMatrix, n: usize) -> Result<ImportantSet> {
    let max = coarse.n_samples().min(coarse.n_dofs());
    if n == 0 || n > max {
        return Err(Error::config(format!("important-sample budget {n} outside 1..={max}")));
    }
    ImportantSet::from_qr(&pivoted_qr(&coarse.columns), n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_columns_first_wins() {
        let cols = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let qr = pivoted_qr(&cols);
        assert_eq!(&qr.pivots[..2], &[0, 2]);
        assert_eq!(qr.numerical_rank(), 2);
    }

    #[test]
    fn orthogonal_columns_sorted_by_norm() {
        let cols = vec![vec![3.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 2.0]];
        let qr = pivoted_qr(&cols);
        assert_eq!(qr.pivots, vec![0, 2, 1]);
        assert!((qr.r_diag[0] - 3.0).abs() < 1e-15 && (qr.r_diag[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn wide_matrix_lists_every_column() {
        let cols = vec![vec![1.0], vec![2.0], vec![0.5]];
        let qr = pivoted_qr(&cols);
        assert_eq!(qr.pivots, vec![1, 0, 2]);
        assert_eq!(qr.numerical_rank(), 1);
    }
}
