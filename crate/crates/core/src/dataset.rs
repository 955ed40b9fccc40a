//! Point clouds on group-invariant manifolds.
//!
//! Synthetic generators sample uniformly from manifolds whose Laplace–Beltrami
//! operator is known in closed form; [`load_points`] ingests external clouds.
//! A dataset bundle on disk is a directory holding `points.csv`, `group.json`
//! and `meta.json`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binfmt;
use crate::error::{Error, Result};
use crate::group::{GroupDescriptor, GroupModel};

/// Portable seeded generator used for every random draw in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Test manifolds. JSON form: `{"name": "torus_r4", "radii": [1.0, 2.0]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifoldSpec {
    /// Flat torus `(r1 cos α, r1 sin α, r2 cos β, r2 sin β)` in `R^4`.
    TorusR4 { radii: [f64; 2] },
    /// Circle of the given radius in `R^2`.
    CircleR2 { radius: f64 },
    /// Rotation matrices flattened row-major into `R^9`.
    So3EmbeddedR9 {},
    /// Externally supplied manifold; only its intrinsic dimension is known.
    Custom { intrinsic_dim: usize, ambient_dim: usize },
}

impl ManifoldSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ManifoldSpec::TorusR4 { radii } => {
                if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                    return Err(Error::input(format!("manifold.radii must be positive, got {radii:?}")));
                }
            }
            ManifoldSpec::CircleR2 { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::input(format!("manifold.radius must be positive, got {radius}")));
                }
            }
            ManifoldSpec::So3EmbeddedR9 {} => {}
            ManifoldSpec::Custom {
                intrinsic_dim,
                ambient_dim,
            } => {
                if intrinsic_dim > ambient_dim || *ambient_dim == 0 {
                    return Err(Error::input("manifold.intrinsic_dim must not exceed ambient_dim"));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            ManifoldSpec::TorusR4 { .. } => "torus_r4",
            ManifoldSpec::CircleR2 { .. } => "circle_r2",
            ManifoldSpec::So3EmbeddedR9 {} => "so3_embedded_r9",
            ManifoldSpec::Custom { .. } => "custom",
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self {
            ManifoldSpec::TorusR4 { .. } => 2,
            ManifoldSpec::CircleR2 { .. } => 1,
            ManifoldSpec::So3EmbeddedR9 {} => 3,
            ManifoldSpec::Custom { intrinsic_dim, .. } => *intrinsic_dim,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            ManifoldSpec::TorusR4 { .. } => 4,
            ManifoldSpec::CircleR2 { .. } => 2,
            ManifoldSpec::So3EmbeddedR9 {} => 9,
            ManifoldSpec::Custom { ambient_dim, .. } => *ambient_dim,
        }
    }

    /// Natural symmetry group: `SO(2)` on the first circle factor for the torus,
    /// `SO(2)` on the plane for the circle, left multiplication by `SO(3)` for
    /// rotation matrices.
    pub fn default_group(&self, quadrature_order: usize, truncation: Option<usize>) -> GroupDescriptor {
        match self {
            ManifoldSpec::TorusR4 { .. } | ManifoldSpec::CircleR2 { .. } => GroupDescriptor::So2 {
                quadrature_order,
                m_max: truncation,
                pairs: vec![[0, 1]],
            },
            ManifoldSpec::So3EmbeddedR9 {} => GroupDescriptor::So3 {
                quadrature_order,
                l_max: truncation,
                triples: vec![[0, 3, 6], [1, 4, 7], [2, 5, 8]],
            },
            ManifoldSpec::Custom { .. } => GroupDescriptor::Trivial {},
        }
    }

    /// Distance of `x` from the manifold's defining equations; `None` for custom.
    pub fn residual(&self, x: &[f64]) -> Option<f64> {
        match self {
            ManifoldSpec::TorusR4 { radii } => {
                let a = (x[0] * x[0] + x[1] * x[1]).sqrt() - radii[0];
                let b = (x[2] * x[2] + x[3] * x[3]).sqrt() - radii[1];
                Some(a.abs().max(b.abs()))
            }
            ManifoldSpec::CircleR2 { radius } => Some(((x[0] * x[0] + x[1] * x[1]).sqrt() - radius).abs()),
            ManifoldSpec::So3EmbeddedR9 {} => {
                let r = nalgebra::Matrix3::from_row_slice(x);
                let dev = (r * r.transpose() - nalgebra::Matrix3::identity()).amax();
                Some(dev.max((r.determinant() - 1.0).abs()))
            }
            ManifoldSpec::Custom { .. } => None,
        }
    }

    /// `n` points drawn from the uniform (Riemannian volume) distribution.
    pub fn sample(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        self.validate()?;
        let mut rng = rng_from_seed(seed);
        let d = self.ambient_dim();
        let mut pts = DMatrix::zeros(n, d);
        match self {
            ManifoldSpec::TorusR4 { radii } => {
                for i in 0..n {
                    let a = rng.random::<f64>() * 2.0 * PI;
                    let b = rng.random::<f64>() * 2.0 * PI;
                    pts[(i, 0)] = radii[0] * a.cos();
                    pts[(i, 1)] = radii[0] * a.sin();
                    pts[(i, 2)] = radii[1] * b.cos();
                    pts[(i, 3)] = radii[1] * b.sin();
                }
            }
            ManifoldSpec::CircleR2 { radius } => {
                for i in 0..n {
                    let a = rng.random::<f64>() * 2.0 * PI;
                    pts[(i, 0)] = radius * a.cos();
                    pts[(i, 1)] = radius * a.sin();
                }
            }
            ManifoldSpec::So3EmbeddedR9 {} => {
                // normalized Gaussian quaternions are Haar-uniform on SO(3)
                for i in 0..n {
                    let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
                    let r = crate::group::so3::rotation_matrix(&crate::group::so3::quat_normalize(&q));
                    for a in 0..3 {
                        for b in 0..3 {
                            pts[(i, 3 * a + b)] = r[(a, b)];
                        }
                    }
                }
            }
            ManifoldSpec::Custom { .. } => {
                return Err(Error::input("manifold.name `custom` cannot be sampled; load points instead"));
            }
        }
        Ok(pts)
    }

    /// Deterministic uniform-measure grid with weights summing to one, used for
    /// the large-sample limit of kernel averages. `resolution` is the number of
    /// nodes per angular coordinate.
    pub fn volume_grid(&self, resolution: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let angles = crate::group::quadrature::uniform_angles(resolution);
        match self {
            ManifoldSpec::TorusR4 { radii } => {
                let n = resolution * resolution;
                let mut pts = DMatrix::zeros(n, 4);
                let mut k = 0;
                for a in &angles {
                    for b in &angles {
                        pts[(k, 0)] = radii[0] * a.cos();
                        pts[(k, 1)] = radii[0] * a.sin();
                        pts[(k, 2)] = radii[1] * b.cos();
                        pts[(k, 3)] = radii[1] * b.sin();
                        k += 1;
                    }
                }
                Ok((pts, vec![1.0 / n as f64; n]))
            }
            ManifoldSpec::CircleR2 { radius } => {
                let pts = DMatrix::from_fn(resolution, 2, |i, c| {
                    if c == 0 {
                        radius * angles[i].cos()
                    } else {
                        radius * angles[i].sin()
                    }
                });
                Ok((pts, vec![1.0 / resolution as f64; resolution]))
            }
            ManifoldSpec::So3EmbeddedR9 {} => {
                let g = GroupModel::so3(3, resolution, 0, &[[0, 1, 2]])?;
                let nodes = g.quadrature();
                let mut pts = DMatrix::zeros(nodes.len(), 9);
                for (k, node) in nodes.iter().enumerate() {
                    let r = g.element_matrix(&node.element);
                    for a in 0..3 {
                        for b in 0..3 {
                            pts[(k, 3 * a + b)] = r[(a, b)];
                        }
                    }
                }
                Ok((pts, nodes.iter().map(|n| n.weight).collect()))
            }
            ManifoldSpec::Custom { .. } => Err(Error::input("custom manifolds have no volume grid")),
        }
    }
}

/// Smooth test function with a closed-form Laplace–Beltrami image.
///
/// Coordinates are 1-based in JSON (`"x3"` is the third ambient coordinate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    Constant(f64),
    Coordinate(usize),
}

impl TestFunction {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(idx) = s.strip_prefix('x') {
            let k: usize = idx
                .parse()
                .map_err(|_| Error::input(format!("test_function: cannot parse `{s}`")))?;
            if k == 0 {
                return Err(Error::input("test_function: coordinates are 1-based"));
            }
            return Ok(TestFunction::Coordinate(k - 1));
        }
        if let Some(c) = s.strip_prefix("const:") {
            let v: f64 = c
                .parse()
                .map_err(|_| Error::input(format!("test_function: cannot parse `{s}`")))?;
            return Ok(TestFunction::Constant(v));
        }
        Err(Error::input(format!(
            "test_function: expected `x<k>` or `const:<value>`, got `{s}`"
        )))
    }

    pub fn label(&self) -> String {
        match self {
            TestFunction::Constant(v) => format!("const:{v}"),
            TestFunction::Coordinate(k) => format!("x{}", k + 1),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Constant(v) => *v,
            TestFunction::Coordinate(k) => x[*k],
        }
    }

    /// `Δ_M f(x)` with the positive-semidefinite sign convention (so `Δ x3 = x3/r2²`
    /// on the torus).
    pub fn laplacian(&self, manifold: &ManifoldSpec, x: &[f64]) -> Result<f64> {
        let k = match self {
            TestFunction::Constant(_) => return Ok(0.0),
            TestFunction::Coordinate(k) => *k,
        };
        if k >= manifold.ambient_dim() {
            return Err(Error::input(format!(
                "test_function x{} exceeds ambient dimension {}",
                k + 1,
                manifold.ambient_dim()
            )));
        }
        match manifold {
            ManifoldSpec::TorusR4 { radii } => {
                let r = if k < 2 { radii[0] } else { radii[1] };
                Ok(x[k] / (r * r))
            }
            ManifoldSpec::CircleR2 { radius } => Ok(x[k] / (radius * radius)),
            // matrix entries of SO(3) with the metric induced from R^9
            ManifoldSpec::So3EmbeddedR9 {} => Ok(x[k]),
            ManifoldSpec::Custom { .. } => Err(Error::input("custom manifolds have no Laplacian oracle")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldMeta {
    pub manifold: ManifoldSpec,
    pub seed: u64,
}

/// `N` points in `R^D` together with the group acting on them.
#[derive(Debug, Clone)]
pub struct Dataset {
    points: DMatrix<f64>,
    group: GroupModel,
    meta: Option<ManifoldMeta>,
}

impl Dataset {
    pub fn new(points: DMatrix<f64>, group: GroupModel, meta: Option<ManifoldMeta>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::input("dataset has no points"));
        }
        if points.ncols() == 0 {
            return Err(Error::input("dataset points have dimension 0"));
        }
        if let Some((pos, _)) = points.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let n = points.nrows();
            return Err(Error::input(format!(
                "non-finite coordinate at row {}, column {}",
                pos % n + 1,
                pos / n + 1
            )));
        }
        if group.ambient_dim() != points.ncols() {
            return Err(Error::input(format!(
                "group acts on R^{} but points live in R^{}",
                group.ambient_dim(),
                points.ncols()
            )));
        }
        Ok(Dataset { points, group, meta })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn ambient_dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().copied().collect()
    }

    pub fn group(&self) -> &GroupModel {
        &self.group
    }

    pub fn meta(&self) -> Option<&ManifoldMeta> {
        self.meta.as_ref()
    }

    /// Same points under a different group (e.g. the trivial group for a
    /// symmetry-unaware baseline, or another irrep truncation).
    pub fn with_group(&self, group: GroupModel) -> Result<Self> {
        Dataset::new(self.points.clone(), group, self.meta.clone())
    }

    /// Hex SHA-256 over the little-endian point coordinates (row-major) and the
    /// compact group descriptor JSON.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        h.update((self.ambient_dim() as u64).to_le_bytes());
        for i in 0..self.len() {
            for c in 0..self.ambient_dim() {
                h.update(self.points[(i, c)].to_le_bytes());
            }
        }
        h.update(serde_json::to_vec(&self.group.descriptor()).expect("descriptor serializes"));
        hex::encode(h.finalize())
    }

    /// Largest distance from the manifold over the orbit samples `κ_t · x_i`.
    pub fn orbit_residual(&self) -> Option<f64> {
        let m = &self.meta.as_ref()?.manifold;
        let mut worst: f64 = 0.0;
        for i in 0..self.len() {
            let x = self.point(i);
            for node in self.group.quadrature() {
                worst = worst.max(m.residual(&self.group.act(&node.element, &x))?);
            }
        }
        Some(worst)
    }

    /// `min ‖κ·x_i − x_i‖` over non-identity quadrature nodes and all points; zero
    /// signals a nontrivial stabilizer among the nodes. `None` for the trivial group.
    pub fn free_action_margin(&self) -> Option<f64> {
        let id = self.group.element_matrix(&self.group.identity());
        let mut best = f64::INFINITY;
        let mut any = false;
        for t in 0..self.group.num_nodes() {
            let m = self.group.node_matrix(t);
            if (m - &id).amax() < 1e-14 {
                continue;
            }
            any = true;
            for i in 0..self.len() {
                let x = self.points.row(i).transpose();
                best = best.min((m * &x - &x).norm());
            }
        }
        any.then_some(best)
    }

    pub fn save_bundle(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let points_path = dir.join("points.csv");
        std::fs::write(&points_path, points_to_csv(&self.points)).map_err(|e| Error::io(&points_path, e))?;
        let group_path = dir.join("group.json");
        std::fs::write(&group_path, self.group.descriptor().to_json() + "\n")
            .map_err(|e| Error::io(&group_path, e))?;
        let meta = BundleMeta {
            n: self.len(),
            ambient_dim: self.ambient_dim(),
            intrinsic_dim: self.meta.as_ref().map(|m| m.manifold.intrinsic_dim()),
            manifold: self.meta.as_ref().map(|m| m.manifold.clone()),
            seed: self.meta.as_ref().map(|m| m.seed),
            hash: self.hash(),
        };
        let meta_path = dir.join("meta.json");
        let text = serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n";
        std::fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))
    }

    /// Reads a bundle directory. `meta.json` is optional.
    pub fn load_bundle(dir: &Path) -> Result<Self> {
        let mut ds = load_points(&dir.join("points.csv"), &dir.join("group.json"))?;
        let meta_path = dir.join("meta.json");
        if meta_path.exists() {
            let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
            let meta: BundleMeta = serde_json::from_str(&text).map_err(|source| Error::Json {
                path: meta_path.clone(),
                source,
            })?;
            if let (Some(manifold), Some(seed)) = (meta.manifold, meta.seed) {
                ds.meta = Some(ManifoldMeta { manifold, seed });
            }
        }
        Ok(ds)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BundleMeta {
    n: usize,
    ambient_dim: usize,
    intrinsic_dim: Option<usize>,
    manifold: Option<ManifoldSpec>,
    seed: Option<u64>,
    hash: String,
}

/// Rows with 17 significant digits so that values round-trip exactly.
pub fn points_to_csv(points: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..points.nrows() {
        for c in 0..points.ncols() {
            if c > 0 {
                s.push(',');
            }
            write!(s, "{:.16e}", points[(i, c)]).unwrap();
        }
        s.push('\n');
    }
    s
}

fn parse_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::input(format!("{}: row {}: {e}", path.display(), idx + 1)))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>().map_err(|_| {
                    Error::input(format!(
                        "{}: row {}, column {}: non-numeric cell `{cell}`",
                        path.display(),
                        idx + 1,
                        c + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::input(format!(
                    "{}: row {} has {} columns, expected {}",
                    path.display(),
                    idx + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::input(format!("{}: no points", path.display())));
    }
    let d = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]))
}

/// Loads a point cloud (CSV, one point per row; or the binary matrix format for
/// `.bin` files) and the group descriptor acting on it.
pub fn load_points(path: &Path, group_descriptor_path: &Path) -> Result<Dataset> {
    let points = if path.extension().is_some_and(|e| e == "bin") {
        let (_, m) = binfmt::read_real(path)?;
        if m.nrows() == 0 {
            return Err(Error::input(format!("{}: no points", path.display())));
        }
        m
    } else {
        parse_csv(path)?
    };
    let descriptor = GroupDescriptor::load(group_descriptor_path)?;
    let group = descriptor.build(points.ncols())?;
    Dataset::new(points, group, None)
}

/// Uniform sample of the flat torus with `SO(2)` acting on coordinates (0, 1).
pub fn sample_torus_r4(n: usize, radii: [f64; 2], seed: u64, group: &GroupDescriptor) -> Result<Dataset> {
    generate(&ManifoldSpec::TorusR4 { radii }, n, seed, group)
}

pub fn sample_circle_r2(n: usize, radius: f64, seed: u64, group: &GroupDescriptor) -> Result<Dataset> {
    generate(&ManifoldSpec::CircleR2 { radius }, n, seed, group)
}

/// Haar-uniform rotation matrices in `R^9`; `SO(3)` acts by left multiplication.
pub fn sample_so3_embedded(n: usize, seed: u64, group: &GroupDescriptor) -> Result<Dataset> {
    generate(&ManifoldSpec::So3EmbeddedR9 {}, n, seed, group)
}

pub fn generate(manifold: &ManifoldSpec, n: usize, seed: u64, group: &GroupDescriptor) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::input("n must be at least 1"));
    }
    let points = manifold.sample(n, seed)?;
    let group = group.build(manifold.ambient_dim())?;
    Dataset::new(
        points,
        group,
        Some(ManifoldMeta {
            manifold: manifold.clone(),
            seed,
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupElement;

    fn so2_on_01() -> GroupDescriptor {
        GroupDescriptor::So2 {
            quadrature_order: 16,
            m_max: Some(4),
            pairs: vec![[0, 1]],
        }
    }

    fn so3_left() -> GroupDescriptor {
        ManifoldSpec::So3EmbeddedR9 {}.default_group(4, Some(1))
    }

    #[test]
    fn single_torus_point_satisfies_embedding() {
        let ds = sample_torus_r4(1, [1.5, 0.5], 11, &so2_on_01()).unwrap();
        let x = ds.point(0);
        assert!(((x[0] * x[0] + x[1] * x[1]).sqrt() - 1.5).abs() < 1e-14);
        assert!(((x[2] * x[2] + x[3] * x[3]).sqrt() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn half_turn_acts_on_first_circle_only() {
        let g = so2_on_01().build(4).unwrap();
        let y = g.act(&GroupElement::so2(PI), &[2.0, 0.0, 3.0, 0.0]);
        let expect = [-2.0, 0.0, 3.0, 0.0];
        assert!(y.iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn torus_sample_mean_is_zero_within_four_standard_errors() {
        let n = 100_000;
        let radii = [1.0, 2.0];
        let ds = sample_torus_r4(n, radii, 3, &so2_on_01()).unwrap();
        for c in 0..4 {
            let mean = ds.points().column(c).sum() / n as f64;
            // Var(r cos α) = r²/2
            let se = (radii[c / 2].powi(2) / 2.0 / n as f64).sqrt();
            assert!(mean.abs() < 4.0 * se, "column {c}: mean {mean}, se {se}");
        }
    }

    #[test]
    fn so3_samples_are_rotations_with_frobenius_norm_sqrt3() {
        let ds = sample_so3_embedded(50, 5, &so3_left()).unwrap();
        let m = ManifoldSpec::So3EmbeddedR9 {};
        for i in 0..ds.len() {
            let x = ds.point(i);
            assert!(m.residual(&x).unwrap() < 1e-12);
            let norm2: f64 = x.iter().map(|v| v * v).sum();
            assert!((norm2 - 3.0).abs() < 1e-12);
        }
        // left multiplication by a node keeps samples on SO(3) and is an isometry
        assert!(ds.orbit_residual().unwrap() < 1e-10);
        let g = ds.group();
        let k = g.quadrature()[7].element;
        let (a, b) = (ds.point(0), ds.point(1));
        let dist = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        assert!((dist(&g.act(&k, &a), &g.act(&k, &b)) - dist(&a, &b)).abs() < 1e-10);
    }

    #[test]
    fn generators_are_reproducible() {
        let a = sample_torus_r4(64, [1.0, 2.0], 9, &so2_on_01()).unwrap();
        let b = sample_torus_r4(64, [1.0, 2.0], 9, &so2_on_01()).unwrap();
        let c = sample_torus_r4(64, [1.0, 2.0], 10, &so2_on_01()).unwrap();
        assert_eq!(a.points(), b.points());
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn orbits_stay_on_manifold_and_action_is_free() {
        let torus = sample_torus_r4(40, [1.0, 2.0], 1, &so2_on_01()).unwrap();
        assert!(torus.orbit_residual().unwrap() < 1e-10);
        assert!(torus.free_action_margin().unwrap() > 0.0);
        let circle = sample_circle_r2(20, 0.7, 1, &so2_on_01()).unwrap();
        assert!(circle.orbit_residual().unwrap() < 1e-10);
        let so3 = sample_so3_embedded(10, 2, &so3_left()).unwrap();
        assert!(so3.free_action_margin().unwrap() > 0.0);
    }

    #[test]
    fn load_csv_with_so2_descriptor() {
        let dir = tempfile::tempdir().unwrap();
        let pts = dir.path().join("p.csv");
        std::fs::write(&pts, "1,0,2,0\n0,1,0,2\n-1,0,2,0\n").unwrap();
        let grp = dir.path().join("g.json");
        std::fs::write(&grp, r#"{"kind":"so2","quadrature_order":8,"m_max":2,"pairs":[[0,1]]}"#).unwrap();
        let ds = load_points(&pts, &grp).unwrap();
        assert_eq!((ds.len(), ds.ambient_dim()), (3, 4));
        assert!(ds.meta().is_none());
    }

    #[test]
    fn load_errors_are_descriptive() {
        let dir = tempfile::tempdir().unwrap();
        let grp = dir.path().join("g.json");
        std::fs::write(&grp, r#"{"kind":"so2","quadrature_order":8,"pairs":[[0,1]]}"#).unwrap();
        let pts = dir.path().join("p.csv");

        std::fs::write(&pts, "").unwrap();
        let err = load_points(&pts, &grp).unwrap_err().to_string();
        assert!(err.contains("no points"), "{err}");

        std::fs::write(&pts, "1,2,3,4\n1,2,3\n1,2,3,4\n").unwrap();
        let err = load_points(&pts, &grp).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");

        std::fs::write(&pts, "1,2,3,4\n1,x,3,4\n").unwrap();
        let err = load_points(&pts, &grp).unwrap_err().to_string();
        assert!(err.contains("non-numeric") && err.contains("row 2"), "{err}");

        // pair (4, 5) does not fit in R^4
        std::fs::write(&grp, r#"{"kind":"so2","quadrature_order":8,"pairs":[[4,5]]}"#).unwrap();
        std::fs::write(&pts, "1,2,3,4\n").unwrap();
        assert!(load_points(&pts, &grp).is_err());
    }

    #[test]
    fn bundle_round_trip_preserves_points_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample_torus_r4(17, [1.0, 2.0], 4, &so2_on_01()).unwrap();
        ds.save_bundle(dir.path()).unwrap();
        let back = Dataset::load_bundle(dir.path()).unwrap();
        assert_eq!(back.points(), ds.points());
        assert_eq!(back.hash(), ds.hash());
        assert_eq!(back.meta(), ds.meta());
    }

    #[test]
    fn binary_points_load() {
        let dir = tempfile::tempdir().unwrap();
        let pts = dir.path().join("p.bin");
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        binfmt::write_real(&pts, &m, serde_json::Value::Null).unwrap();
        let grp = dir.path().join("g.json");
        std::fs::write(&grp, r#"{"kind":"trivial"}"#).unwrap();
        let ds = load_points(&pts, &grp).unwrap();
        assert_eq!(ds.points(), &m);
    }

    #[test]
    fn manifold_spec_json_and_validation() {
        let m: ManifoldSpec = serde_json::from_str(r#"{"name":"torus_r4","radii":[1.0,2.0]}"#).unwrap();
        assert_eq!(m.intrinsic_dim(), 2);
        assert!(serde_json::from_str::<ManifoldSpec>(r#"{"name":"klein_bottle"}"#).is_err());
        let bad = ManifoldSpec::TorusR4 { radii: [1.0, -1.0] };
        assert!(bad.validate().is_err());
        assert_eq!(ManifoldSpec::So3EmbeddedR9 {}.intrinsic_dim(), 3);
    }

    #[test]
    fn test_function_laplacians() {
        let m = ManifoldSpec::TorusR4 { radii: [1.0, 2.0] };
        let f = TestFunction::parse("x3").unwrap();
        assert_eq!(f, TestFunction::Coordinate(2));
        let x = [1.0, 0.0, 2.0, 0.0];
        assert_eq!(f.laplacian(&m, &x).unwrap(), 0.5);
        assert_eq!(TestFunction::parse("const:2").unwrap().laplacian(&m, &x).unwrap(), 0.0);
        assert!(TestFunction::parse("x0").is_err());
        assert!(TestFunction::parse("x9").unwrap().laplacian(&m, &x).is_err());
    }
}
