//! Compact groups acting linearly and isometrically on `R^D`.
//!
//! A [`GroupModel`] bundles a Haar quadrature rule (weights summing to one), a
//! truncated list of irreducible unitary representations and the linear action
//! on the ambient space. Three families are provided: cyclic groups `Z_n`
//! (exact Haar rule), `SO(2)` (uniform trapezoid rule) and `SO(3)` (Euler-angle
//! product rule with Gauss–Legendre nodes in `cos β`).

mod descriptor;
pub mod quadrature;
pub mod so3;

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;

pub use descriptor::GroupDescriptor;

use crate::error::{Error, Result};
use so3::Quaternion;

const STRUCTURE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    Cyclic { order: usize },
    So2,
    So3,
}

impl GroupKind {
    /// Dimension of the group manifold.
    pub fn manifold_dim(&self) -> usize {
        match self {
            GroupKind::Cyclic { .. } => 0,
            GroupKind::So2 => 1,
            GroupKind::So3 => 3,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, GroupKind::Cyclic { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GroupElement {
    /// `g^index` for the generator `g` of `Z_order`.
    Cyclic { index: usize, order: usize },
    /// Rotation angle in `[0, 2π)`.
    So2 { angle: f64 },
    /// Unit quaternion `(w, x, y, z)`.
    So3 { quat: Quaternion },
}

impl GroupElement {
    pub fn cyclic(index: usize, order: usize) -> Self {
        GroupElement::Cyclic {
            index: index % order,
            order,
        }
    }

    pub fn so2(angle: f64) -> Self {
        let mut a = angle.rem_euclid(2.0 * PI);
        if a >= 2.0 * PI {
            a = 0.0;
        }
        GroupElement::So2 { angle: a }
    }

    pub fn so3(quat: Quaternion) -> Self {
        GroupElement::So3 {
            quat: so3::quat_normalize(&quat),
        }
    }

    pub fn identity(kind: GroupKind) -> Self {
        match kind {
            GroupKind::Cyclic { order } => GroupElement::cyclic(0, order),
            GroupKind::So2 => GroupElement::so2(0.0),
            GroupKind::So3 => GroupElement::So3 {
                quat: [1.0, 0.0, 0.0, 0.0],
            },
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        match (self, other) {
            (
                GroupElement::Cyclic { index: a, order },
                GroupElement::Cyclic {
                    index: b,
                    order: order_b,
                },
            ) if order == order_b => GroupElement::cyclic(a + b, *order),
            (GroupElement::So2 { angle: a }, GroupElement::So2 { angle: b }) => GroupElement::so2(a + b),
            (GroupElement::So3 { quat: a }, GroupElement::So3 { quat: b }) => {
                GroupElement::so3(so3::quat_mul(a, b))
            }
            _ => panic!("composing elements of different groups: {self:?} and {other:?}"),
        }
    }

    pub fn inverse(&self) -> GroupElement {
        match self {
            GroupElement::Cyclic { index, order } => GroupElement::cyclic(order - index % order, *order),
            GroupElement::So2 { angle } => GroupElement::so2(-angle),
            GroupElement::So3 { quat } => GroupElement::So3 {
                quat: so3::quat_conj(quat),
            },
        }
    }

    /// Rotation matrix of an `SO(3)` element.
    fn rotation3(&self) -> Matrix3<f64> {
        match self {
            GroupElement::So3 { quat } => so3::rotation_matrix(quat),
            _ => panic!("not an SO(3) element: {self:?}"),
        }
    }
}

/// Irreducible unitary representation, identified by its label.
///
/// Labels: `k = 0..n` for `Z_n`, `m ∈ [-m_max, m_max]` for `SO(2)`, `l = 0..=l_max`
/// for `SO(3)`. Label 0 is always the trivial representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Irrep {
    pub label: i64,
    pub dim: usize,
}

impl Irrep {
    pub fn is_trivial(&self) -> bool {
        self.label == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureNode {
    pub element: GroupElement,
    pub weight: f64,
}

#[derive(Debug, Clone)]
enum Action {
    /// Powers `g^0 .. g^{n-1}` of the generator.
    Powers(Vec<DMatrix<f64>>),
    /// Coordinate pairs rotated by the same angle.
    Pairs(Vec<[usize; 2]>),
    /// Coordinate triples rotated as 3-vectors.
    Triples(Vec<[usize; 3]>),
}

/// A compact group with its quadrature, irreps and action on `R^D`.
///
/// Immutable after construction; cheap to share across threads.
#[derive(Debug, Clone)]
pub struct GroupModel {
    kind: GroupKind,
    ambient_dim: usize,
    quadrature: Vec<QuadratureNode>,
    irreps: Vec<Irrep>,
    action: Action,
    node_matrices: Vec<DMatrix<f64>>,
    /// `node_irreps[r][t] = U_r(κ_t)` for the irreps in `irreps`.
    node_irreps: Vec<Vec<DMatrix<Complex64>>>,
    /// Highest label the quadrature integrates exactly against its conjugate
    /// (Schur orthogonality). Equals the truncation ceiling.
    band_limit: usize,
    quadrature_order: usize,
}

impl GroupModel {
    /// Trivial group `{Id}` acting on `R^dim`.
    pub fn trivial(dim: usize) -> Result<Self> {
        Self::cyclic(1, DMatrix::identity(dim, dim))
    }

    /// `Z_n` generated by the orthogonal matrix `generator` (which must have order
    /// dividing `n`). Irreps are the `n` characters `χ_k(j) = exp(2πi k j / n)`.
    pub fn cyclic(n: usize, generator: DMatrix<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::input("cyclic group order must be positive"));
        }
        let dim = generator.nrows();
        if dim == 0 || generator.ncols() != dim {
            return Err(Error::input(format!(
                "cyclic generator must be square and nonempty, got {}x{}",
                generator.nrows(),
                generator.ncols()
            )));
        }
        let id = DMatrix::<f64>::identity(dim, dim);
        let ortho_dev = (generator.transpose() * &generator - &id).amax();
        if ortho_dev > STRUCTURE_TOL {
            return Err(Error::input(format!(
                "cyclic generator is not orthogonal (|G^T G - I| = {ortho_dev:.3e})"
            )));
        }
        let mut powers = Vec::with_capacity(n);
        let mut p = id.clone();
        for _ in 0..n {
            powers.push(p.clone());
            p = &generator * p;
        }
        let order_dev = (&p - &id).amax();
        if order_dev > STRUCTURE_TOL {
            return Err(Error::input(format!(
                "cyclic generator raised to the power {n} is not the identity (deviation {order_dev:.3e})"
            )));
        }
        let kind = GroupKind::Cyclic { order: n };
        let quadrature = (0..n)
            .map(|j| QuadratureNode {
                element: GroupElement::cyclic(j, n),
                weight: 1.0 / n as f64,
            })
            .collect();
        let irreps = (0..n as i64).map(|k| Irrep { label: k, dim: 1 }).collect();
        Ok(Self::finish(kind, dim, quadrature, irreps, Action::Powers(powers), n - 1, n))
    }

    /// `Z_n` rotating every listed coordinate pair by `2π/n`.
    pub fn cyclic_rotation(n: usize, dim: usize, pairs: &[[usize; 2]]) -> Result<Self> {
        check_disjoint(dim, pairs.iter().flat_map(|p| p.iter().copied()))?;
        let g = pair_rotation(dim, pairs, 2.0 * PI / n.max(1) as f64);
        Self::cyclic(n, g)
    }

    /// `SO(2)` rotating the listed coordinate pairs, with a `q`-point trapezoid
    /// rule and characters `e^{imθ}` for `|m| ≤ m_max`.
    ///
    /// `m_max` is capped by aliasing on the grid: `2 m_max < q`.
    pub fn so2(dim: usize, q: usize, m_max: usize, pairs: &[[usize; 2]]) -> Result<Self> {
        if q == 0 {
            return Err(Error::input("SO(2) quadrature order must be at least 1"));
        }
        if pairs.is_empty() {
            return Err(Error::input("SO(2) embedding needs at least one coordinate pair"));
        }
        check_disjoint(dim, pairs.iter().flat_map(|p| p.iter().copied()))?;
        let band = (q - 1) / 2;
        if m_max > band {
            return Err(Error::input(format!(
                "m_max = {m_max} aliases on a {q}-point grid (maximum {band})"
            )));
        }
        let quadrature = quadrature::uniform_angles(q)
            .into_iter()
            .map(|a| QuadratureNode {
                element: GroupElement::so2(a),
                weight: 1.0 / q as f64,
            })
            .collect();
        let m = m_max as i64;
        let irreps = (-m..=m).map(|label| Irrep { label, dim: 1 }).collect();
        Ok(Self::finish(
            GroupKind::So2,
            dim,
            quadrature,
            irreps,
            Action::Pairs(pairs.to_vec()),
            band,
            q,
        ))
    }

    /// `SO(3)` rotating the listed coordinate triples, with a `q × q × q` Euler
    /// product rule (ZYZ; uniform in α and γ, Gauss–Legendre in cos β) and
    /// Wigner-D irreps `l = 0..=l_max`.
    pub fn so3(dim: usize, q: usize, l_max: usize, triples: &[[usize; 3]]) -> Result<Self> {
        if q == 0 {
            return Err(Error::input("SO(3) quadrature order must be at least 1"));
        }
        if triples.is_empty() {
            return Err(Error::input("SO(3) embedding needs at least one coordinate triple"));
        }
        check_disjoint(dim, triples.iter().flat_map(|p| p.iter().copied()))?;
        let band = (q - 1) / 2;
        if l_max > band {
            return Err(Error::input(format!(
                "l_max = {l_max} is not integrated exactly by quadrature order {q} (maximum {band})"
            )));
        }
        let (cos_beta, gl_w) = quadrature::gauss_legendre(q);
        let angles = quadrature::uniform_angles(q);
        let mut nodes = Vec::with_capacity(q * q * q);
        for &alpha in &angles {
            for (cb, wb) in cos_beta.iter().zip(&gl_w) {
                let beta = cb.clamp(-1.0, 1.0).acos();
                for &gamma in &angles {
                    nodes.push(QuadratureNode {
                        element: GroupElement::so3(so3::quat_from_zyz(alpha, beta, gamma)),
                        weight: wb / 2.0 / (q * q) as f64,
                    });
                }
            }
        }
        let irreps = (0..=l_max as i64)
            .map(|l| Irrep {
                label: l,
                dim: (2 * l + 1) as usize,
            })
            .collect();
        Ok(Self::finish(
            GroupKind::So3,
            dim,
            nodes,
            irreps,
            Action::Triples(triples.to_vec()),
            band,
            q,
        ))
    }

    fn finish(
        kind: GroupKind,
        ambient_dim: usize,
        quadrature: Vec<QuadratureNode>,
        irreps: Vec<Irrep>,
        action: Action,
        band_limit: usize,
        quadrature_order: usize,
    ) -> Self {
        let mut g = GroupModel {
            kind,
            ambient_dim,
            quadrature,
            irreps,
            action,
            node_matrices: Vec::new(),
            node_irreps: Vec::new(),
            band_limit,
            quadrature_order,
        };
        g.node_matrices = g.quadrature.iter().map(|n| g.element_matrix(&n.element)).collect();
        g.node_irreps = g.tabulate_irreps(&g.irreps.clone());
        g
    }

    /// Same group and quadrature with the irrep list truncated (or extended up to
    /// the band limit) to labels `|label| ≤ max_label`. Cyclic groups always keep
    /// their full irrep set.
    pub fn with_truncation(&self, max_label: usize) -> Result<Self> {
        if self.kind.is_finite() {
            return Ok(self.clone());
        }
        if max_label > self.band_limit {
            return Err(Error::input(format!(
                "truncation {max_label} exceeds the quadrature band limit {}",
                self.band_limit
            )));
        }
        let irreps = self.irreps_up_to(max_label);
        let mut g = self.clone();
        g.node_irreps = g.tabulate_irreps(&irreps);
        g.irreps = irreps;
        Ok(g)
    }

    /// Irreps with `|label| ≤ max_label` (clamped to the band limit), in canonical order.
    pub fn irreps_up_to(&self, max_label: usize) -> Vec<Irrep> {
        let l = max_label.min(self.band_limit) as i64;
        match self.kind {
            GroupKind::Cyclic { order } => (0..order as i64).map(|k| Irrep { label: k, dim: 1 }).collect(),
            GroupKind::So2 => (-l..=l).map(|label| Irrep { label, dim: 1 }).collect(),
            GroupKind::So3 => (0..=l)
                .map(|label| Irrep {
                    label,
                    dim: (2 * label + 1) as usize,
                })
                .collect(),
        }
    }

    /// `U_r(κ_t)` for every irrep in `irreps` and every quadrature node.
    pub fn tabulate_irreps(&self, irreps: &[Irrep]) -> Vec<Vec<DMatrix<Complex64>>> {
        match self.kind {
            GroupKind::So3 => {
                let lmax = irreps.iter().map(|r| r.label).max().unwrap_or(0) as usize;
                let per_node: Vec<Vec<DMatrix<Complex64>>> = self
                    .quadrature
                    .iter()
                    .map(|n| so3::wigner_d_all(&n.element.rotation3(), lmax))
                    .collect();
                irreps
                    .iter()
                    .map(|r| per_node.iter().map(|d| d[r.label as usize].clone()).collect())
                    .collect()
            }
            _ => irreps
                .iter()
                .map(|r| {
                    self.quadrature
                        .iter()
                        .map(|n| self.irrep_matrix(r, &n.element))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Dimension of the group manifold (0, 1 or 3).
    pub fn manifold_dim(&self) -> usize {
        self.kind.manifold_dim()
    }

    pub fn quadrature(&self) -> &[QuadratureNode] {
        &self.quadrature
    }

    pub fn quadrature_order(&self) -> usize {
        self.quadrature_order
    }

    pub fn num_nodes(&self) -> usize {
        self.quadrature.len()
    }

    pub fn irreps(&self) -> &[Irrep] {
        &self.irreps
    }

    pub fn band_limit(&self) -> usize {
        self.band_limit
    }

    /// Largest `|label|` among the retained irreps.
    pub fn truncation(&self) -> usize {
        self.irreps.iter().map(|r| r.label.unsigned_abs() as usize).max().unwrap_or(0)
    }

    pub fn irrep(&self, label: i64) -> Result<Irrep> {
        self.irreps
            .iter()
            .copied()
            .find(|r| r.label == label)
            .ok_or_else(|| Error::input(format!("irrep label {label} is not in this group's index set")))
    }

    pub fn irrep_position(&self, label: i64) -> Result<usize> {
        self.irreps
            .iter()
            .position(|r| r.label == label)
            .ok_or_else(|| Error::input(format!("irrep label {label} is not in this group's index set")))
    }

    /// Precomputed `U(κ_t)` for the irrep at `position` in [`Self::irreps`].
    pub fn node_irrep_table(&self, position: usize) -> &[DMatrix<Complex64>] {
        &self.node_irreps[position]
    }

    /// Orthogonal `D × D` matrix of the action of the `t`-th quadrature node.
    pub fn node_matrix(&self, t: usize) -> &DMatrix<f64> {
        &self.node_matrices[t]
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement::identity(self.kind)
    }

    /// Quadrature index of `κ_s^{-1} ∘ κ_t` when the node set is a subgroup
    /// (cyclic groups and the `SO(2)` grid); `None` for `SO(3)`.
    pub fn node_quotient(&self, s: usize, t: usize) -> Option<usize> {
        match self.kind {
            GroupKind::Cyclic { .. } | GroupKind::So2 => {
                let q = self.quadrature.len();
                Some((t + q - s) % q)
            }
            GroupKind::So3 => None,
        }
    }

    /// Quadrature index of `κ_t^{-1}`, when the node set is a subgroup.
    pub fn node_inverse(&self, t: usize) -> Option<usize> {
        self.node_quotient(t, 0)
    }

    /// Orthogonal matrix of the action of `el` on `R^D`.
    pub fn element_matrix(&self, el: &GroupElement) -> DMatrix<f64> {
        let d = self.ambient_dim;
        match (&self.action, el) {
            (Action::Powers(p), GroupElement::Cyclic { index, .. }) => p[*index].clone(),
            (Action::Pairs(pairs), GroupElement::So2 { angle }) => pair_rotation(d, pairs, *angle),
            (Action::Triples(triples), GroupElement::So3 { quat }) => {
                let r = so3::rotation_matrix(quat);
                let mut m = DMatrix::identity(d, d);
                for t in triples {
                    for a in 0..3 {
                        for b in 0..3 {
                            m[(t[a], t[b])] = r[(a, b)];
                        }
                    }
                }
                m
            }
            _ => panic!("element {el:?} does not belong to this group"),
        }
    }

    /// `κ · x`.
    pub fn act(&self, el: &GroupElement, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ambient_dim, "point dimension does not match the group action");
        let m = self.element_matrix(el);
        (0..self.ambient_dim)
            .map(|r| (0..self.ambient_dim).map(|c| m[(r, c)] * x[c]).sum())
            .collect()
    }

    /// `U_ℓ(κ)`.
    pub fn irrep_matrix(&self, irrep: &Irrep, el: &GroupElement) -> DMatrix<Complex64> {
        match (self.kind, el) {
            (GroupKind::Cyclic { order }, GroupElement::Cyclic { index, .. }) => {
                let phase = 2.0 * PI * (irrep.label as f64) * (*index as f64) / order as f64;
                DMatrix::from_element(1, 1, Complex64::from_polar(1.0, phase))
            }
            (GroupKind::So2, GroupElement::So2 { angle }) => {
                DMatrix::from_element(1, 1, Complex64::from_polar(1.0, irrep.label as f64 * angle))
            }
            (GroupKind::So3, GroupElement::So3 { quat }) => {
                let r = so3::rotation_matrix(quat);
                so3::wigner_d_all(&r, irrep.label as usize).pop().unwrap()
            }
            _ => panic!("element {el:?} does not belong to this group"),
        }
    }

    /// `Σ_t w_t f(κ_t)`; the exact Haar integral for finite groups.
    pub fn haar_integrate<F>(&self, f: F) -> Complex64
    where
        F: Fn(&GroupElement) -> Complex64,
    {
        self.quadrature.iter().map(|n| f(&n.element) * n.weight).sum()
    }

    /// Real-valued convenience wrapper around [`Self::haar_integrate`].
    pub fn haar_integrate_real<F>(&self, f: F) -> f64
    where
        F: Fn(&GroupElement) -> f64,
    {
        self.quadrature.iter().map(|n| f(&n.element) * n.weight).sum()
    }

    /// Descriptor that rebuilds this model (used for `group.json`).
    pub fn descriptor(&self) -> GroupDescriptor {
        match (&self.action, self.kind) {
            (Action::Powers(p), GroupKind::Cyclic { order }) => {
                if order == 1 {
                    GroupDescriptor::Trivial {}
                } else {
                    let g = &p[1 % order];
                    GroupDescriptor::Cyclic {
                        order,
                        generator: Some(
                            (0..g.nrows()).map(|r| (0..g.ncols()).map(|c| g[(r, c)]).collect()).collect(),
                        ),
                        pairs: None,
                    }
                }
            }
            (Action::Pairs(pairs), GroupKind::So2) => GroupDescriptor::So2 {
                quadrature_order: self.quadrature_order,
                m_max: Some(self.truncation()),
                pairs: pairs.clone(),
            },
            (Action::Triples(triples), GroupKind::So3) => GroupDescriptor::So3 {
                quadrature_order: self.quadrature_order,
                l_max: Some(self.truncation()),
                triples: triples.clone(),
            },
            _ => unreachable!("action and kind always agree"),
        }
    }
}

fn check_disjoint(dim: usize, coords: impl Iterator<Item = usize>) -> Result<()> {
    let mut seen = vec![false; dim];
    for c in coords {
        if c >= dim {
            return Err(Error::input(format!(
                "embedding coordinate {c} is out of range for ambient dimension {dim}"
            )));
        }
        if seen[c] {
            return Err(Error::input(format!("embedding coordinate {c} appears more than once")));
        }
        seen[c] = true;
    }
    Ok(())
}

fn pair_rotation(dim: usize, pairs: &[[usize; 2]], angle: f64) -> DMatrix<f64> {
    let (s, c) = angle.sin_cos();
    let mut m = DMatrix::identity(dim, dim);
    for &[a, b] in pairs {
        m[(a, a)] = c;
        m[(a, b)] = -s;
        m[(b, a)] = s;
        m[(b, b)] = c;
    }
    m
}
