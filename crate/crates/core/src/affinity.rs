//! Group-aware Gaussian affinity `W_ij(κ, λ) = exp(−‖κ·x_i − λ·x_j‖² / ε)`.
//!
//! Because the group acts by isometries, `W_ij(κ, λ) = W_ij(Id, κ⁻¹λ)`, so the
//! single profile `κ ↦ W_ij(Id, κ)` sampled on the quadrature nodes carries all
//! the information. [`ProfileTable`] caches those profiles for every pair.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinityParams {
    epsilon: f64,
}

impl AffinityParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::input(format!("epsilon must be positive and finite, got {epsilon}")));
        }
        Ok(AffinityParams { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    #[inline]
    pub fn kernel(&self, sq_dist: f64) -> f64 {
        (-sq_dist / self.epsilon).exp()
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// `W_ij(κ, λ)` evaluated directly from the definition.
pub fn affinity(
    xi: &[f64],
    xj: &[f64],
    kappa: &GroupElement,
    lambda: &GroupElement,
    params: &AffinityParams,
    group: &GroupModel,
) -> f64 {
    params.kernel(sq_dist(&group.act(kappa, xi), &group.act(lambda, xj)))
}

/// `κ_t ↦ W_ij(Id, κ_t)` on all quadrature nodes.
pub fn affinity_profile(xi: &[f64], xj: &[f64], params: &AffinityParams, group: &GroupModel) -> Vec<f64> {
    let d = group.ambient_dim();
    let mut y = vec![0.0; d];
    (0..group.num_nodes())
        .map(|t| {
            rotate_into(group, t, xj, &mut y);
            params.kernel(sq_dist(xi, &y))
        })
        .collect()
}

#[inline]
pub(crate) fn rotate_into(group: &GroupModel, t: usize, x: &[f64], out: &mut [f64]) {
    let m = group.node_matrix(t);
    let d = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for c in 0..d {
            acc += m[(r, c)] * x[c];
        }
        *o = acc;
    }
}

/// Orbit samples `κ_t · x_j`, stored point-major: `[(j·Q + t)·D + c]`.
#[derive(Debug, Clone)]
pub struct OrbitTable {
    data: Vec<f64>,
    nodes: usize,
    dim: usize,
}

impl OrbitTable {
    pub fn new(dataset: &Dataset) -> Self {
        let g = dataset.group();
        let (q, d) = (g.num_nodes(), dataset.ambient_dim());
        let data: Vec<f64> = (0..dataset.len())
            .into_par_iter()
            .flat_map_iter(|j| {
                let x = dataset.point(j);
                let mut block = vec![0.0; q * d];
                for t in 0..q {
                    rotate_into(g, t, &x, &mut block[t * d..(t + 1) * d]);
                }
                block
            })
            .collect();
        OrbitTable { data, nodes: q, dim: d }
    }

    #[inline]
    pub fn get(&self, j: usize, t: usize) -> &[f64] {
        let k = (j * self.nodes + t) * self.dim;
        &self.data[k..k + self.dim]
    }
}

/// Profiles `W_ij(Id, κ_t)` for every ordered pair, stored `[(i·N + j)·Q + t]`.
#[derive(Debug, Clone)]
pub struct ProfileTable {
    data: Vec<f64>,
    n: usize,
    q: usize,
}

impl ProfileTable {
    pub fn new(dataset: &Dataset, params: &AffinityParams) -> Self {
        let orbits = OrbitTable::new(dataset);
        let (n, q) = (dataset.len(), dataset.group().num_nodes());
        let data: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let xi = dataset.point(i);
                let mut row = Vec::with_capacity(n * q);
                for j in 0..n {
                    for t in 0..q {
                        row.push(params.kernel(sq_dist(&xi, orbits.get(j, t))));
                    }
                }
                row
            })
            .collect();
        ProfileTable { data, n, q }
    }

    #[inline]
    pub fn profile(&self, i: usize, j: usize) -> &[f64] {
        let k = (i * self.n + j) * self.q;
        &self.data[k..k + self.q]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn num_nodes(&self) -> usize {
        self.q
    }
}

/// Diagonal of the degree matrix, `D_ii = Σ_j ∫ W_ij(Id, λ) dλ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeVector(pub Vec<f64>);

impl DegreeVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_positive(&self) -> Result<()> {
        match self.0.iter().position(|d| !(*d > 0.0)) {
            Some(i) => Err(Error::Numerical(format!(
                "degree D_{}{} = {} is not positive; increase epsilon",
                i + 1,
                i + 1,
                self.0[i]
            ))),
            None => Ok(()),
        }
    }
}

pub fn degree_from_profiles(table: &ProfileTable, group: &GroupModel) -> DegreeVector {
    let w: Vec<f64> = group.quadrature().iter().map(|n| n.weight).collect();
    DegreeVector(
        (0..table.len())
            .map(|i| {
                (0..table.len())
                    .map(|j| table.profile(i, j).iter().zip(&w).map(|(p, w)| p * w).sum::<f64>())
                    .sum()
            })
            .collect(),
    )
}

pub fn degree(dataset: &Dataset, params: &AffinityParams) -> DegreeVector {
    degree_from_profiles(&ProfileTable::new(dataset, params), dataset.group())
}

/// Median of the squared pairwise distances of the raw points (default ε).
/// Falls back to 1 for a single point.
pub fn median_sq_distance(dataset: &Dataset) -> f64 {
    let n = dataset.len();
    if n < 2 {
        return 1.0;
    }
    let pts: Vec<Vec<f64>> = (0..n).map(|i| dataset.point(i)).collect();
    let mut d: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| sq_dist(&pts[i], &pts[j]))
        .collect();
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}
