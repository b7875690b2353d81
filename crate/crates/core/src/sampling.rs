//! Parameter sample sets on [-1, 1]^d with weights summing to one.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random_field::ParameterPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    MonteCarlo,
    SparseGrid,
    TensorGauss,
}

#[derive(Debug, Clone)]
pub struct SampleSet {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub kind: SampleKind,
    pub seed: Option<u64>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn point(&self, i: usize) -> ParameterPoint {
        ParameterPoint { coords: self.points[i].clone(), weight: self.weights[i] }
    }

    /// Single point at the origin with unit weight.
    pub fn nominal(d: usize) -> Self {
        SampleSet { points: vec![vec![0.0; d]], weights: vec![1.0], kind: SampleKind::TensorGauss, seed: None }
    }

    /// Weighted mean of `f` over the set.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }
}

/// `n` i.i.d. uniform points with weights `1/n`.
pub fn monte_carlo(d: usize, n: usize, seed: u64) -> Result<SampleSet> {
    if d == 0 || n == 0 {
        return Err(Error::config(format!("Monte Carlo needs d ≥ 1 and N ≥ 1, got d = {d}, N = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-1.0, 1.0);
    let points = (0..n).map(|_| (0..d).map(|_| dist.sample(&mut rng)).collect()).collect();
    Ok(SampleSet { points, weights: vec![1.0 / n as f64; n], kind: SampleKind::MonteCarlo, seed: Some(seed) })
}

/// Gauss–Legendre nodes (ascending) and weights normalized to the uniform
/// probability measure on [-1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        // Chebyshev-like initial guess for the i-th largest root
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 1.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[m - 1 - i] = z;
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    if m % 2 == 1 {
        x[m / 2] = 0.0;
    }
    (x, w)
}

fn tensor_accumulate(
    rules: &[(Vec<f64>, Vec<f64>)],
    scale: f64,
    acc: &mut BTreeMap<Vec<i64>, (Vec<f64>, f64)>,
) {
    let d = rules.len();
    let mut idx = vec![0usize; d];
    loop {
        let mut w = scale;
        let mut p = Vec::with_capacity(d);
        for (k, &i) in idx.iter().enumerate() {
            p.push(rules[k].0[i]);
            w *= rules[k].1[i];
        }
        // coincident nodes of different rules merge on a 1e-12 lattice
        let key: Vec<i64> = p.iter().map(|v| (v * 1e12).round() as i64).collect();
        acc.entry(key).or_insert_with(|| (p, 0.0)).1 += w;
        let mut k = 0;
        loop {
            if k == d {
                return;
            }
            idx[k] += 1;
            if idx[k] < rules[k].0.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Smolyak combination of Gauss–Legendre rules with `2ℓ - 1` points at level ℓ.
///
/// Exact for total degree `2·level - 1`. Points are ordered lexicographically.
/// Some weights are negative for `d ≥ 2`.
pub fn sparse_grid(d: usize, level: usize) -> Result<SampleSet> {
    if level < 1 || d == 0 {
        return Err(Error::config(format!("sparse grid needs level ≥ 1 and d ≥ 1, got level {level}, d = {d}")));
    }
    let rules: Vec<(Vec<f64>, Vec<f64>)> = (1..=level).map(|l| gauss_legendre(2 * l - 1)).collect();
    let q = level + d - 1;
    let mut acc = BTreeMap::new();
    let mut multi = vec![1usize; d];
    loop {
        let s: usize = multi.iter().sum();
        if s + d > q && s <= q {
            let coef = binomial(d - 1, q - s) * if (q - s).is_multiple_of(2) { 1.0 } else { -1.0 };
            let chosen: Vec<_> = multi.iter().map(|&l| rules[l - 1].clone()).collect();
            tensor_accumulate(&chosen, coef, &mut acc);
        }
        let mut k = 0;
        loop {
            if k == d {
                return finish(acc, SampleKind::SparseGrid);
            }
            multi[k] += 1;
            if multi[k] <= level {
                break;
            }
            multi[k] = 1;
            k += 1;
        }
    }
}

/// Full tensor product of `m`-point Gauss–Legendre rules.
pub fn tensor_gauss(d: usize, m: usize) -> Result<SampleSet> {
    if d == 0 || m == 0 {
        return Err(Error::config(format!("tensor rule needs d ≥ 1 and m ≥ 1, got d = {d}, m = {m}")));
    }
    let rule = gauss_legendre(m);
    let mut acc = BTreeMap::new();
    tensor_accumulate(&vec![rule; d], 1.0, &mut acc);
    finish(acc, SampleKind::TensorGauss)
}

fn finish(acc: BTreeMap<Vec<i64>, (Vec<f64>, f64)>, kind: SampleKind) -> Result<SampleSet> {
    let (points, weights): (Vec<_>, Vec<_>) = acc.into_values().filter(|(_, w)| w.abs() > 1e-15).unzip();
    let total: f64 = weights.iter().sum();
    let weights = weights.into_iter().map(|w| w / total).collect();
    Ok(SampleSet { points, weights, kind, seed: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_point_rule() {
        let s = sparse_grid(1, 2).unwrap();
        let r = (0.6f64).sqrt();
        let expect = [(-r, 5.0 / 18.0), (0.0, 8.0 / 18.0), (r, 5.0 / 18.0)];
        assert_eq!(s.len(), 3);
        for (k, (x, w)) in expect.iter().enumerate() {
            assert!((s.points[k][0] - x).abs() < 1e-15);
            assert!((s.weights[k] - w).abs() < 1e-15);
        }
    }

    #[test]
    fn gauss_legendre_known_rules() {
        let (x, w) = gauss_legendre(1);
        assert_eq!((x[0], w[0]), (0.0, 1.0));
        let (x, w) = gauss_legendre(2);
        assert!((x[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15 && (w[0] - 0.5).abs() < 1e-15);
        for m in 1..20 {
            let (_, w) = gauss_legendre(m);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn four_dim_level_three_size() {
        let s = sparse_grid(4, 3).unwrap();
        assert_eq!(s.len(), 49);
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_reproducible() {
        let a = monte_carlo(3, 20, 7).unwrap();
        let b = monte_carlo(3, 20, 7).unwrap();
        assert_eq!(a.points, b.points);
        assert!(a.points.iter().flatten().all(|v| v.abs() <= 1.0));
        assert!(monte_carlo(3, 0, 1).is_err());
    }

    #[test]
    fn rejects_level_zero() {
        assert!(sparse_grid(2, 0).is_err());
    }
}
