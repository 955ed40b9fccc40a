//! Brute-force reference: the dense graph Laplacian on the augmented vertex set
//! `{κ_t·x_i}` and spectrum comparison against the block method.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::affinity::{sq_dist, AffinityParams, OrbitTable};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::operator::GammaFunction;
use crate::spectral::SpectralBundle;

/// Largest augmented vertex count `N·Q` the oracle accepts.
pub const MAX_VERTICES: usize = 20_000;

/// Default spectrum tolerance when the quadrature is exact (finite groups and
/// the `SO(2)` grid, which is itself a finite subgroup).
pub const EXACT_TOL: f64 = 1e-8;
/// Default tolerance for `SO(3)`, where the node set is not a subgroup.
pub const QUADRATURE_TOL: f64 = 1e-6;

/// Dense augmented-graph operator. Vertex `(i, t)` has index `i·Q + t`.
#[derive(Debug, Clone)]
pub struct DenseOracle {
    /// `A[(i,t),(j,u)] = W_ij(κ_t, κ_u)·w_u`.
    pub affinity: DMatrix<f64>,
    pub degree: Vec<f64>,
    weights: Vec<f64>,
    n: usize,
    q: usize,
}

pub fn dense_laplacian(dataset: &Dataset, params: &AffinityParams) -> Result<DenseOracle> {
    let g = dataset.group();
    let (n, q) = (dataset.len(), g.num_nodes());
    let size = n * q;
    if size > MAX_VERTICES {
        return Err(Error::input(format!(
            "dense oracle needs N·Q = {n}·{q} = {size} vertices, above the limit of {MAX_VERTICES}"
        )));
    }
    let orbits = OrbitTable::new(dataset);
    let weights: Vec<f64> = g.quadrature().iter().map(|nd| nd.weight).collect();
    let rows: Vec<Vec<f64>> = (0..size)
        .into_par_iter()
        .map(|r| {
            let (i, t) = (r / q, r % q);
            (0..size)
                .map(|c| {
                    let (j, u) = (c / q, c % q);
                    params.kernel(sq_dist(orbits.get(i, t), orbits.get(j, u))) * weights[u]
                })
                .collect()
        })
        .collect();
    let affinity = DMatrix::from_fn(size, size, |r, c| rows[r][c]);
    let degree = rows.iter().map(|r| r.iter().sum()).collect();
    Ok(DenseOracle {
        affinity,
        degree,
        weights,
        n,
        q,
    })
}

impl DenseOracle {
    pub fn size(&self) -> usize {
        self.n * self.q
    }

    /// `diag(deg) − A`, as it acts on node samples.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = -self.affinity.clone();
        for (k, d) in self.degree.iter().enumerate() {
            l[(k, k)] += d;
        }
        l
    }

    /// Symmetric matrix similar to the (unnormalized or normalized) Laplacian:
    /// conjugation by `diag(w)^{1/2}` makes the weighted affinity symmetric, and
    /// the normalized form is `I − D^{-1/2} A_sym D^{-1/2}`.
    pub fn symmetric(&self, normalized: bool) -> DMatrix<f64> {
        let size = self.size();
        let sw: Vec<f64> = (0..size).map(|k| self.weights[k % self.q].sqrt()).collect();
        DMatrix::from_fn(size, size, |r, c| {
            // A[r,c]·sqrt(w_r / w_c) = W·sqrt(w_r·w_c)
            let a = self.affinity[(r, c)] * sw[r] / sw[c];
            let a = 0.5 * (a + self.affinity[(c, r)] * sw[c] / sw[r]);
            if normalized {
                let v = a / (self.degree[r] * self.degree[c]).sqrt();
                if r == c {
                    1.0 - v
                } else {
                    -v
                }
            } else if r == c {
                self.degree[r] - a
            } else {
                -a
            }
        })
    }

    /// Ascending eigenvalues.
    pub fn spectrum(&self, normalized: bool) -> Result<Vec<f64>> {
        let eig = SymmetricEigen::try_new(self.symmetric(normalized), f64::EPSILON, 100_000)
            .ok_or_else(|| Error::Numerical("dense oracle eigensolver did not converge".into()))?;
        let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        Ok(v)
    }

    /// The dense Laplacian applied to node samples of `f`.
    pub fn apply(&self, f: &GammaFunction) -> Result<DMatrix<Complex64>> {
        let v = f.values();
        if v.nrows() != self.n || v.ncols() != self.q {
            return Err(Error::input("function shape does not match the oracle"));
        }
        let flat = nalgebra::DVector::from_fn(self.size(), |k, _| v[(k / self.q, k % self.q)]);
        let out = self.laplacian().map(|x| Complex64::new(x, 0.0)) * flat;
        Ok(DMatrix::from_fn(self.n, self.q, |i, t| out[i * self.q + t]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IrrepDeviation {
    pub label: i64,
    pub max_abs_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub max_abs_dev: f64,
    /// Block eigenvalues (counted with m-multiplicity) matched within tolerance.
    pub matched: usize,
    pub unmatched: usize,
    /// Dense eigenvalues left over after matching (nonzero when irreps are truncated).
    pub dense_surplus: usize,
    pub tolerance: f64,
    pub per_irrep_dev: Vec<IrrepDeviation>,
    pub passed: bool,
}

impl OracleReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Smallest achievable maximum deviation over order-preserving injections of
/// sorted `b` into sorted `a` (`a.len() ≥ b.len()`), by dynamic programming.
fn bottleneck(a: &[f64], b: &[f64]) -> f64 {
    let (n, k) = (a.len(), b.len());
    if k == 0 {
        return 0.0;
    }
    // prev[j] = best over the first i−1 b's placed within a[..j]
    let mut prev = vec![0.0f64; n + 1];
    let mut cur = vec![f64::INFINITY; n + 1];
    for (i, bi) in b.iter().enumerate() {
        cur[..=i].fill(f64::INFINITY);
        for j in (i + 1)..=n {
            let take = prev[j - 1].max((a[j - 1] - bi).abs());
            cur[j] = cur[j - 1].min(take);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[n]
}

/// Multiplicity-aware comparison of the dense spectrum with a block bundle.
/// Each block eigenvalue is expanded by `dim E_ℓ` and matched, in sorted order,
/// to a distinct dense eigenvalue so that the worst deviation is minimal.
pub fn compare_spectra(dense: &[f64], bundle: &SpectralBundle, tol: f64) -> OracleReport {
    let mut a = dense.to_vec();
    a.sort_by(f64::total_cmp);
    let mut blocks: Vec<(f64, i64)> = bundle
        .pairs
        .iter()
        .flat_map(|p| std::iter::repeat_n((p.value, p.irrep.label), p.irrep.dim))
        .collect();
    blocks.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let b: Vec<f64> = blocks.iter().map(|x| x.0).collect();

    let mut devs = Vec::with_capacity(b.len());
    let mut unmatched = 0;
    if b.len() > a.len() {
        // more block eigenvalues than vertices: align the prefix, the rest is unmatched
        unmatched = b.len() - a.len();
        devs.extend(a.iter().zip(&b).map(|(x, y)| (x - y).abs()));
        devs.extend(std::iter::repeat_n(f64::INFINITY, unmatched));
    } else if b.len() == a.len() {
        devs.extend(a.iter().zip(&b).map(|(x, y)| (x - y).abs()));
    } else {
        let tau = bottleneck(&a, &b);
        let mut j = 0;
        for bi in &b {
            while (a[j] - bi).abs() > tau {
                j += 1;
            }
            devs.push((a[j] - bi).abs());
            j += 1;
        }
    }
    let max_abs_dev = devs.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max);
    unmatched += devs.iter().filter(|d| d.is_finite() && **d > tol).count();
    let mut per: BTreeMap<i64, f64> = BTreeMap::new();
    for ((_, label), d) in blocks.iter().zip(&devs) {
        let e = per.entry(*label).or_insert(0.0);
        if d.is_finite() {
            *e = e.max(*d);
        }
    }
    OracleReport {
        max_abs_dev,
        matched: b.len() - unmatched,
        unmatched,
        dense_surplus: a.len().saturating_sub(b.len()),
        tolerance: tol,
        per_irrep_dev: per
            .into_iter()
            .map(|(label, max_abs_dev)| IrrepDeviation { label, max_abs_dev })
            .collect(),
        passed: unmatched == 0 && max_abs_dev <= tol,
    }
}
