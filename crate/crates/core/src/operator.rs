//! Direct quadrature application of `W`, `L = D − W` and `L_N = D⁻¹L` to
//! functions on `Γ = {1..N} × K`, independent of the Fourier blocks.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::affinity::{degree_from_profiles, sq_dist, AffinityParams, DegreeVector, OrbitTable, ProfileTable};
use crate::dataset::{rng_from_seed, Dataset};
use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupModel, Irrep};
use crate::harmonic::ShiftedBlock;

/// A function on `Γ` sampled on the quadrature nodes: entry `(i, t) = f(i, κ_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaFunction {
    values: DMatrix<Complex64>,
}

impl GammaFunction {
    pub fn new(values: DMatrix<Complex64>, group: &GroupModel) -> Result<Self> {
        if values.ncols() != group.num_nodes() {
            return Err(Error::input(format!(
                "function has {} node samples but the group quadrature has {}",
                values.ncols(),
                group.num_nodes()
            )));
        }
        if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::input("function values must be finite"));
        }
        Ok(GammaFunction { values })
    }

    pub fn constant(n: usize, group: &GroupModel, c: Complex64) -> Self {
        GammaFunction {
            values: DMatrix::from_element(n, group.num_nodes(), c),
        }
    }

    /// Samples `f(i, κ_t)`.
    pub fn from_fn<F>(n: usize, group: &GroupModel, f: F) -> Self
    where
        F: Fn(usize, &GroupElement) -> Complex64,
    {
        let nodes = group.quadrature();
        GammaFunction {
            values: DMatrix::from_fn(n, nodes.len(), |i, t| f(i, &nodes[t].element)),
        }
    }

    pub fn values(&self) -> &DMatrix<Complex64> {
        &self.values
    }

    pub fn n_points(&self) -> usize {
        self.values.nrows()
    }

    pub fn at(&self, i: usize, t: usize) -> Complex64 {
        self.values[(i, t)]
    }

    /// `⟨f, g⟩ = Σ_i ∫ f(i, κ) conj(g(i, κ)) dκ` by quadrature.
    pub fn inner(&self, other: &GammaFunction, group: &GroupModel) -> Complex64 {
        let w = group.quadrature();
        let mut acc = Complex64::new(0.0, 0.0);
        for t in 0..self.values.ncols() {
            let mut col = Complex64::new(0.0, 0.0);
            for i in 0..self.values.nrows() {
                col += self.values[(i, t)] * other.values[(i, t)].conj();
            }
            acc += col * w[t].weight;
        }
        acc
    }

    pub fn norm(&self, group: &GroupModel) -> f64 {
        self.inner(self, group).re.max(0.0).sqrt()
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &GammaFunction) -> GammaFunction {
        GammaFunction {
            values: &self.values - &other.values,
        }
    }

    pub fn scale(&self, c: Complex64) -> GammaFunction {
        GammaFunction {
            values: self.values.map(|z| z * c),
        }
    }

    /// Projection onto the given irreps:
    /// `V_ℓ[i·d + n, m] = dim E_ℓ ∫ f(i, κ) conj(U_ℓ(κ)_{mn}) dκ`.
    pub fn fourier_coefficients(&self, group: &GroupModel) -> BandLimited {
        let n = self.n_points();
        let nodes = group.quadrature();
        let coeffs = group
            .irreps()
            .iter()
            .enumerate()
            .map(|(pos, r)| {
                let d = r.dim;
                let table = group.node_irrep_table(pos);
                let mut v = DMatrix::zeros(n * d, d);
                for (t, u) in table.iter().enumerate() {
                    let w = nodes[t].weight * d as f64;
                    for i in 0..n {
                        let f = self.values[(i, t)] * w;
                        for m in 0..d {
                            for k in 0..d {
                                v[(i * d + k, m)] += f * u[(m, k)].conj();
                            }
                        }
                    }
                }
                (*r, v)
            })
            .collect();
        BandLimited { coeffs }
    }
}

/// A band-limited function
/// `f(i, κ) = Σ_ℓ Σ_{m,n} U_ℓ(κ)_{mn} · V_ℓ[i·d + n, m]`.
///
/// Column `m` of `V_ℓ` is a vector on which the block `S_ℓ` acts directly.
#[derive(Debug, Clone, PartialEq)]
pub struct BandLimited {
    pub coeffs: Vec<(Irrep, DMatrix<Complex64>)>,
}

impl BandLimited {
    /// Gaussian coefficients for every retained irrep of `group`.
    pub fn random(group: &GroupModel, n: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let coeffs = group
            .irreps()
            .iter()
            .map(|r| {
                let d = r.dim;
                let v = DMatrix::from_fn(n * d, d, |_, _| {
                    Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
                });
                (*r, v)
            })
            .collect();
        BandLimited { coeffs }
    }

    /// Values on the quadrature nodes.
    pub fn synthesize(&self, group: &GroupModel) -> Result<GammaFunction> {
        let q = group.num_nodes();
        let n = self.coeffs.first().map_or(0, |(r, v)| v.nrows() / r.dim);
        let mut values = DMatrix::zeros(n, q);
        for (r, v) in &self.coeffs {
            let d = r.dim;
            if v.nrows() != n * d || v.ncols() != d {
                return Err(Error::input(format!("coefficient matrix for irrep {} has the wrong shape", r.label)));
            }
            let table = group.node_irrep_table(group.irrep_position(r.label)?);
            for (t, u) in table.iter().enumerate() {
                for i in 0..n {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for m in 0..d {
                        for k in 0..d {
                            acc += u[(m, k)] * v[(i * d + k, m)];
                        }
                    }
                    values[(i, t)] += acc;
                }
            }
        }
        GammaFunction::new(values, group)
    }

    /// `V_ℓ ↦ S_ℓ V_ℓ` for each irrep, using the matching shifted block.
    pub fn apply_blocks(&self, blocks: &[ShiftedBlock]) -> Result<BandLimited> {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(r, v)| {
                let b = blocks
                    .iter()
                    .find(|b| b.irrep.label == r.label)
                    .ok_or_else(|| Error::input(format!("no block for irrep {}", r.label)))?;
                Ok((*r, &b.s * v))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BandLimited { coeffs })
    }
}

/// Precomputed kernel data for repeated operator applications.
#[derive(Debug, Clone)]
pub struct LaplacianOperator<'a> {
    dataset: &'a Dataset,
    params: AffinityParams,
    profiles: Option<ProfileTable>,
    orbits: Option<OrbitTable>,
    degree: DegreeVector,
}

impl<'a> LaplacianOperator<'a> {
    pub fn new(dataset: &'a Dataset, params: &AffinityParams) -> Result<Self> {
        let g = dataset.group();
        let table = ProfileTable::new(dataset, params);
        let degree = degree_from_profiles(&table, g);
        degree.check_positive()?;
        // Subgroup grids use the reduction W_ij(κ_t, κ_u) = W_ij(Id, κ_t⁻¹κ_u);
        // otherwise both arguments are applied explicitly.
        let (profiles, orbits) = if g.node_quotient(0, 0).is_some() {
            (Some(table), None)
        } else {
            (None, Some(OrbitTable::new(dataset)))
        };
        Ok(LaplacianOperator {
            dataset,
            params: *params,
            profiles,
            orbits,
            degree,
        })
    }

    pub fn degree(&self) -> &DegreeVector {
        &self.degree
    }

    fn check(&self, f: &GammaFunction) -> Result<()> {
        let g = self.dataset.group();
        if f.n_points() != self.dataset.len() || f.values.ncols() != g.num_nodes() {
            return Err(Error::input(format!(
                "function shape {}x{} does not match dataset {}x{}",
                f.n_points(),
                f.values.ncols(),
                self.dataset.len(),
                g.num_nodes()
            )));
        }
        Ok(())
    }

    /// `(Wf)(i, κ_t) = Σ_j ∫ W_ij(κ_t, λ) f(j, λ) dλ`.
    pub fn apply_w(&self, f: &GammaFunction) -> Result<GammaFunction> {
        self.check(f)?;
        let g = self.dataset.group();
        let (n, q) = (self.dataset.len(), g.num_nodes());
        let w: Vec<f64> = g.quadrature().iter().map(|nd| nd.weight).collect();
        let rows: Vec<Vec<Complex64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row = vec![Complex64::new(0.0, 0.0); q];
                for (t, out) in row.iter_mut().enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for j in 0..n {
                        for u in 0..q {
                            let k = match (&self.profiles, &self.orbits) {
                                (Some(p), _) => p.profile(i, j)[g.node_quotient(t, u).expect("subgroup grid")],
                                (None, Some(o)) => self.params.kernel(sq_dist(o.get(i, t), o.get(j, u))),
                                _ => unreachable!(),
                            };
                            acc += f.values[(j, u)] * (k * w[u]);
                        }
                    }
                    *out = acc;
                }
                row
            })
            .collect();
        Ok(GammaFunction {
            values: DMatrix::from_fn(n, q, |i, t| rows[i][t]),
        })
    }

    pub fn apply_l(&self, f: &GammaFunction) -> Result<GammaFunction> {
        let wf = self.apply_w(f)?;
        let d = self.degree.as_slice();
        Ok(GammaFunction {
            values: DMatrix::from_fn(f.n_points(), f.values.ncols(), |i, t| f.values[(i, t)] * d[i] - wf.values[(i, t)]),
        })
    }

    pub fn apply_ln(&self, f: &GammaFunction) -> Result<GammaFunction> {
        let wf = self.apply_w(f)?;
        let d = self.degree.as_slice();
        Ok(GammaFunction {
            values: DMatrix::from_fn(f.n_points(), f.values.ncols(), |i, t| f.values[(i, t)] - wf.values[(i, t)] / d[i]),
        })
    }
}

pub fn apply_w(f: &GammaFunction, dataset: &Dataset, params: &AffinityParams) -> Result<GammaFunction> {
    LaplacianOperator::new(dataset, params)?.apply_w(f)
}

pub fn apply_l(f: &GammaFunction, dataset: &Dataset, params: &AffinityParams) -> Result<GammaFunction> {
    LaplacianOperator::new(dataset, params)?.apply_l(f)
}

pub fn apply_ln(f: &GammaFunction, dataset: &Dataset, params: &AffinityParams) -> Result<GammaFunction> {
    LaplacianOperator::new(dataset, params)?.apply_ln(f)
}

/// `F_{i,κ}(x) = ∫ exp(−‖κ·x_i − λ·x‖²/ε) f(λ·x) dλ` and `G_{i,κ}(x)`, the same with `f ≡ 1`.
pub fn estimate_fg<F>(
    i: usize,
    kappa: &GroupElement,
    x: &[f64],
    f: F,
    dataset: &Dataset,
    params: &AffinityParams,
) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let g = dataset.group();
    let anchor = g.act(kappa, &dataset.point(i));
    let mut y = vec![0.0; x.len()];
    let (mut big_f, mut big_g) = (0.0, 0.0);
    for (t, node) in g.quadrature().iter().enumerate() {
        crate::affinity::rotate_into(g, t, x, &mut y);
        let k = params.kernel(sq_dist(&anchor, &y)) * node.weight;
        big_f += k * f(&y);
        big_g += k;
    }
    (big_f, big_g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::affinity;
    use crate::dataset::{sample_so3_embedded, sample_torus_r4, ManifoldSpec};
    use crate::group::GroupDescriptor;
    use crate::harmonic::{assemble_all, shift_block};
    use proptest::prelude::*;
    use rand::Rng;

    fn torus(n: usize, desc: GroupDescriptor, seed: u64) -> Dataset {
        sample_torus_r4(n, [1.0, 2.0], seed, &desc).unwrap()
    }

    fn z(n: usize) -> GroupDescriptor {
        GroupDescriptor::Cyclic {
            order: n,
            generator: None,
            pairs: Some(vec![[0, 1]]),
        }
    }

    fn so2(q: usize, m: usize) -> GroupDescriptor {
        GroupDescriptor::So2 {
            quadrature_order: q,
            m_max: Some(m),
            pairs: vec![[0, 1]],
        }
    }

    fn random_fn(n: usize, g: &GroupModel, seed: u64) -> GammaFunction {
        let mut rng = rng_from_seed(seed);
        GammaFunction::new(
            DMatrix::from_fn(n, g.num_nodes(), |_, _| {
                Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
            }),
            g,
        )
        .unwrap()
    }

    #[test]
    fn constants_map_to_degree_and_zero() {
        let ds = torus(5, so2(16, 3), 1);
        let p = AffinityParams::new(0.5).unwrap();
        let op = LaplacianOperator::new(&ds, &p).unwrap();
        let one = GammaFunction::constant(5, ds.group(), Complex64::new(1.0, 0.0));
        let wf = op.apply_w(&one).unwrap();
        for i in 0..5 {
            for t in 0..16 {
                assert!((wf.at(i, t).re - op.degree().0[i]).abs() < 1e-12);
            }
        }
        assert!(op.apply_l(&one.scale(Complex64::new(3.0, -1.0))).unwrap().max_abs() < 1e-10);
        assert!(op.apply_ln(&one).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn single_point_trivial_group_is_identity() {
        let ds = Dataset::new(DMatrix::from_row_slice(1, 2, &[0.2, 0.3]), GroupModel::trivial(2).unwrap(), None).unwrap();
        let p = AffinityParams::new(1.0).unwrap();
        let f = GammaFunction::constant(1, ds.group(), Complex64::new(2.5, 1.0));
        assert_eq!(apply_w(&f, &ds, &p).unwrap(), f);
    }

    #[test]
    fn z4_matches_exhaustive_double_sum() {
        let ds = torus(2, z(4), 7);
        let g = ds.group();
        let p = AffinityParams::new(0.9).unwrap();
        let f = random_fn(2, g, 3);
        let wf = apply_w(&f, &ds, &p).unwrap();
        let nodes = g.quadrature();
        for i in 0..2 {
            for t in 0..4 {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..2 {
                    for u in 0..4 {
                        acc += f.at(j, u) * affinity(&ds.point(i), &ds.point(j), &nodes[t].element, &nodes[u].element, &p, g) / 4.0;
                    }
                }
                assert!((acc - wf.at(i, t)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn trivial_group_is_classical_random_walk() {
        let pts = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.5, 0.1, -0.3, 0.8]);
        let ds = Dataset::new(pts, GroupModel::trivial(2).unwrap(), None).unwrap();
        let p = AffinityParams::new(0.6).unwrap();
        let w = DMatrix::from_fn(3, 3, |i, j| p.kernel(sq_dist(&ds.point(i), &ds.point(j))));
        let d: Vec<f64> = (0..3).map(|i| w.row(i).sum()).collect();
        let v = [1.0, -2.0, 0.5];
        let f = GammaFunction::from_fn(3, ds.group(), |i, _| Complex64::new(v[i], 0.0));
        let out = apply_ln(&f, &ds, &p).unwrap();
        for i in 0..3 {
            let expect = v[i] - (0..3).map(|j| w[(i, j)] * v[j]).sum::<f64>() / d[i];
            assert!((out.at(i, 0).re - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn quadratic_form_matches_double_sum() {
        // ⟨f, Lf⟩ = ½ Σ_ij ∫∫ W_ij(κ, λ) |f(i, κ) − f(j, λ)|² dκ dλ
        let ds = torus(3, so2(8, 2), 4);
        let g = ds.group();
        let p = AffinityParams::new(0.7).unwrap();
        let f = random_fn(3, g, 9);
        let lf = apply_l(&f, &ds, &p).unwrap();
        let lhs = f.inner(&lf, g);
        let nodes = g.quadrature();
        let mut rhs = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for t in 0..8 {
                    for u in 0..8 {
                        let k = affinity(&ds.point(i), &ds.point(j), &nodes[t].element, &nodes[u].element, &p, g);
                        rhs += 0.5 * k * (f.at(i, t) - f.at(j, u)).norm_sqr() * nodes[t].weight * nodes[u].weight;
                    }
                }
            }
        }
        assert!((lhs.re - rhs).abs() < 1e-8 * rhs.max(1.0));
        assert!(lhs.im.abs() < 1e-10);
    }

    #[test]
    fn operator_matches_block_action_on_band_limited_functions() {
        for (ds, eps) in [(torus(4, z(8), 2), 0.5), (torus(4, so2(17, 8), 3), 0.5)] {
            let g = ds.group();
            let p = AffinityParams::new(eps).unwrap();
            let blocks: Vec<_> = assemble_all(&ds, &p)
                .unwrap()
                .iter()
                .map(|b| shift_block(b, false).unwrap())
                .collect();
            let op = LaplacianOperator::new(&ds, &p).unwrap();
            for seed in 0..5 {
                let bl = BandLimited::random(g, 4, seed);
                let f = bl.synthesize(g).unwrap();
                let direct = op.apply_l(&f).unwrap();
                let via = bl.apply_blocks(&blocks).unwrap().synthesize(g).unwrap();
                let rel = direct.sub(&via).max_abs() / direct.max_abs();
                assert!(rel < 1e-10, "rel {rel}");
            }
        }
    }

    #[test]
    fn fourier_projection_round_trip() {
        let ds = torus(3, so2(9, 4), 5);
        let g = ds.group();
        let bl = BandLimited::random(g, 3, 1);
        let back = bl.synthesize(g).unwrap().fourier_coefficients(g);
        for ((_, a), (_, b)) in bl.coeffs.iter().zip(&back.coeffs) {
            assert!((a - b).norm() < 1e-12);
        }
        let g3 = ManifoldSpec::So3EmbeddedR9 {}.default_group(6, Some(2)).build(9).unwrap();
        let bl = BandLimited::random(&g3, 2, 4);
        let back = bl.synthesize(&g3).unwrap().fourier_coefficients(&g3);
        for ((_, a), (_, b)) in bl.coeffs.iter().zip(&back.coeffs) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn rejects_shape_mismatch() {
        let ds = torus(3, so2(8, 2), 4);
        let p = AffinityParams::new(0.7).unwrap();
        let wrong = GammaFunction::constant(2, ds.group(), Complex64::new(1.0, 0.0));
        assert!(apply_l(&wrong, &ds, &p).is_err());
        assert!(GammaFunction::new(DMatrix::zeros(3, 5), ds.group()).is_err());
        let mut bad = DMatrix::zeros(3, 8);
        bad[(0, 0)] = Complex64::new(f64::NAN, 0.0);
        assert!(GammaFunction::new(bad, ds.group()).is_err());
    }

    #[test]
    fn fg_examples() {
        let ds = torus(4, so2(16, 3), 8);
        let g = ds.group();
        let p = AffinityParams::new(0.4).unwrap();
        let x = ds.point(2);
        let (f, gg) = estimate_fg(1, &g.quadrature()[3].element, &x, |_| 1.0, &ds, &p);
        assert!((f - gg).abs() < 1e-15);

        let triv = Dataset::new(ds.points().clone(), GroupModel::trivial(4).unwrap(), None).unwrap();
        let x1 = triv.point(1);
        let (f, gg) = estimate_fg(1, &triv.group().identity(), &x1, |y| y[2], &triv, &p);
        assert!((f - x1[2]).abs() < 1e-15 && (gg - 1.0).abs() < 1e-15);
    }

    #[test]
    fn so3_operator_handles_non_subgroup_grid() {
        let g = ManifoldSpec::So3EmbeddedR9 {}.default_group(4, Some(1));
        let ds = sample_so3_embedded(2, 3, &g).unwrap();
        let p = AffinityParams::new(3.0).unwrap();
        let op = LaplacianOperator::new(&ds, &p).unwrap();
        let one = GammaFunction::constant(2, ds.group(), Complex64::new(1.0, 0.0));
        // for non-subgroup grids W·1 is constant only up to quadrature error
        let wf = op.apply_w(&one).unwrap();
        for i in 0..2 {
            for t in 0..ds.group().num_nodes() {
                assert!((wf.at(i, t).re - op.degree().0[i]).abs() < 1e-3);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn self_adjoint_and_psd(seed in 0u64..1000, eps in 0.2f64..2.0) {
            let ds = torus(3, so2(8, 3), seed);
            let g = ds.group();
            let p = AffinityParams::new(eps).unwrap();
            let op = LaplacianOperator::new(&ds, &p).unwrap();
            let f = random_fn(3, g, seed + 1);
            let h = random_fn(3, g, seed + 2);
            let a = h.inner(&op.apply_l(&f).unwrap(), g);
            let b = f.inner(&op.apply_l(&h).unwrap(), g).conj();
            prop_assert!((a - b).norm() < 1e-8);
            prop_assert!(f.inner(&op.apply_l(&f).unwrap(), g).re >= -1e-10);
        }

        #[test]
        fn fg_is_invariant_under_node_shifts(seed in 0u64..1000, s in 0usize..16, e in 0usize..16) {
            let ds = torus(3, so2(16, 3), seed);
            let g = ds.group();
            let p = AffinityParams::new(0.5).unwrap();
            let x = ds.point(2);
            let eta = g.quadrature()[e].element;
            let kappa = g.quadrature()[s].element;
            let f = |y: &[f64]| y[2] + y[3] * y[3];
            let a = estimate_fg(0, &kappa, &x, f, &ds, &p);
            let b = estimate_fg(0, &kappa, &g.act(&eta, &x), f, &ds, &p);
            prop_assert!((a.0 - b.0).abs() < 1e-10 && (a.1 - b.1).abs() < 1e-10);
        }
    }
}
