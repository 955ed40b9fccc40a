//! Per-irrep Fourier blocks of the affinity profile.
//!
//! `Ŵ_ij^(ℓ) = ∫ W_ij(Id, κ) U_ℓ(κ) dκ`, placed at block `(i, j)` of the
//! `N·dim E_ℓ` square matrix `Ŵ^(ℓ)`. Row `i·d + m`, column `j·d + n`.
//!
//! Reconstruction convention: with these coefficients the profile expands as
//!
//! ```text
//! W_ij(Id, κ) = Σ_ℓ dim E_ℓ Σ_{m,n} [Ŵ_ij^(ℓ)]_{mn} · conj(U_ℓ(κ)_{mn})
//! ```
//!
//! i.e. the basis function is `conj(U_ℓ(κ)_{mn}) = U_ℓ(κ⁻¹)_{nm}`: the transpose
//! of the index pair that a literal reading of `U_ℓ(κ⁻¹)_{mn}` would suggest.
//! This is the form that makes the round trip exact on finite groups.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::affinity::{affinity_profile, degree_from_profiles, AffinityParams, DegreeVector, ProfileTable};
use crate::binfmt::{self, Dtype};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::group::{GroupDescriptor, GroupModel, Irrep};

/// Pre-symmetrization Hermiticity deviation above which assembly fails.
pub const HERMITIAN_HARD_TOL: f64 = 1e-6;
/// Deviation above which the block is flagged (but still symmetrized).
pub const HERMITIAN_WARN_TOL: f64 = 1e-8;

/// `Ŵ_ij^(ℓ)` for one pair, straight from the quadrature.
pub fn fourier_block(i: usize, j: usize, label: i64, dataset: &Dataset, params: &AffinityParams) -> Result<DMatrix<Complex64>> {
    let g = dataset.group();
    let n = dataset.len();
    if i >= n || j >= n {
        return Err(Error::input(format!("point index out of range (N = {n})")));
    }
    let pos = g.irrep_position(label)?;
    let prof = affinity_profile(&dataset.point(i), &dataset.point(j), params, g);
    Ok(coefficient(&prof, g, g.node_irrep_table(pos)))
}

fn coefficient(profile: &[f64], g: &GroupModel, table: &[DMatrix<Complex64>]) -> DMatrix<Complex64> {
    let d = table[0].nrows();
    let mut acc = DMatrix::zeros(d, d);
    for ((p, node), u) in profile.iter().zip(g.quadrature()).zip(table) {
        let c = p * node.weight;
        for (a, b) in acc.iter_mut().zip(u.iter()) {
            *a += b * c;
        }
    }
    acc
}

#[derive(Debug, Clone)]
pub struct IrrepBlock {
    pub irrep: Irrep,
    pub w_hat: DMatrix<Complex64>,
    pub degree: DegreeVector,
    /// Max entrywise `|Ŵ − Ŵᴴ|` before symmetrization.
    pub hermitian_deviation: f64,
}

impl IrrepBlock {
    pub fn n_points(&self) -> usize {
        self.degree.len()
    }

    pub fn needs_warning(&self) -> bool {
        self.hermitian_deviation > HERMITIAN_WARN_TOL
    }

    /// The `(i, j)` sub-block `Ŵ_ij^(ℓ)`.
    pub fn sub_block(&self, i: usize, j: usize) -> DMatrix<Complex64> {
        let d = self.irrep.dim;
        self.w_hat.view((i * d, j * d), (d, d)).into_owned()
    }
}

/// Assembles `Ŵ^(ℓ)` from precomputed profiles.
pub fn assemble_from_profiles(table: &ProfileTable, group: &GroupModel, degree: &DegreeVector, label: i64) -> Result<IrrepBlock> {
    let pos = group.irrep_position(label)?;
    let irrep = group.irreps()[pos];
    let units = group.node_irrep_table(pos);
    let (n, d) = (table.len(), irrep.dim);
    let rows: Vec<Vec<DMatrix<Complex64>>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| coefficient(table.profile(i, j), group, units)).collect())
        .collect();
    let mut w = DMatrix::zeros(n * d, n * d);
    for (i, row) in rows.iter().enumerate() {
        for (j, b) in row.iter().enumerate() {
            w.view_mut((i * d, j * d), (d, d)).copy_from(b);
        }
    }
    let adj = w.adjoint();
    let dev = w.iter().zip(adj.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    if !(dev <= HERMITIAN_HARD_TOL) {
        return Err(Error::Integrity(format!(
            "block for irrep {label} deviates from Hermitian by {dev:e} (limit {HERMITIAN_HARD_TOL:e}); \
             the quadrature is too coarse or not closed under inversion"
        )));
    }
    let w_hat = (&w + adj).scale(0.5);
    Ok(IrrepBlock {
        irrep,
        w_hat,
        degree: degree.clone(),
        hermitian_deviation: dev,
    })
}

pub fn assemble_block(label: i64, dataset: &Dataset, params: &AffinityParams) -> Result<IrrepBlock> {
    let table = ProfileTable::new(dataset, params);
    let deg = degree_from_profiles(&table, dataset.group());
    deg.check_positive()?;
    assemble_from_profiles(&table, dataset.group(), &deg, label)
}

/// Every retained irrep of the dataset's group, in canonical order.
pub fn assemble_all(dataset: &Dataset, params: &AffinityParams) -> Result<Vec<IrrepBlock>> {
    let g = dataset.group();
    let table = ProfileTable::new(dataset, params);
    let deg = degree_from_profiles(&table, g);
    deg.check_positive()?;
    g.irreps()
        .par_iter()
        .map(|r| assemble_from_profiles(&table, g, &deg, r.label))
        .collect()
}

/// `S_ℓ = D⊗I − Ŵ^(ℓ)` or `S_{N,ℓ} = I − (D⁻¹⊗I)Ŵ^(ℓ)`.
#[derive(Debug, Clone)]
pub struct ShiftedBlock {
    pub irrep: Irrep,
    pub s: DMatrix<Complex64>,
    pub normalized: bool,
    pub degree: DegreeVector,
    /// Hermitian matrix similar to `s`: `s` itself, or `I − (D^{-1/2}⊗I)Ŵ(D^{-1/2}⊗I)`.
    pub hermitian: DMatrix<Complex64>,
}

pub fn shift_block(block: &IrrepBlock, normalized: bool) -> Result<ShiftedBlock> {
    block.degree.check_positive()?;
    let d = block.irrep.dim;
    let deg = block.degree.as_slice();
    let size = block.w_hat.nrows();
    let point = |r: usize| r / d;
    let (s, hermitian) = if normalized {
        let s = DMatrix::from_fn(size, size, |r, c| {
            let id = if r == c { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
            id - block.w_hat[(r, c)] / deg[point(r)]
        });
        let h = DMatrix::from_fn(size, size, |r, c| {
            let id = if r == c { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
            id - block.w_hat[(r, c)] / (deg[point(r)] * deg[point(c)]).sqrt()
        });
        (s, h)
    } else {
        let s = DMatrix::from_fn(size, size, |r, c| {
            let dd = if r == c { Complex64::new(deg[point(r)], 0.0) } else { Complex64::new(0.0, 0.0) };
            dd - block.w_hat[(r, c)]
        });
        (s.clone(), s)
    };
    Ok(ShiftedBlock {
        irrep: block.irrep,
        s,
        normalized,
        degree: block.degree.clone(),
        hermitian,
    })
}

/// `Σ_ℓ dim E_ℓ Σ_{m,n} [Ŵ_ij^(ℓ)]_{mn} conj(U_ℓ(κ_t)_{mn})` over the given blocks,
/// for every quadrature node `t`.
pub fn reconstruct_profile(blocks: &[IrrepBlock], group: &GroupModel, i: usize, j: usize) -> Result<Vec<f64>> {
    let mut out = vec![Complex64::new(0.0, 0.0); group.num_nodes()];
    for b in blocks {
        let pos = group.irrep_position(b.irrep.label)?;
        let table = group.node_irrep_table(pos);
        let c = b.sub_block(i, j);
        let dim = b.irrep.dim as f64;
        for (o, u) in out.iter_mut().zip(table) {
            *o += c.iter().zip(u.iter()).map(|(a, u)| a * u.conj()).sum::<Complex64>() * dim;
        }
    }
    Ok(out.into_iter().map(|z| z.re).collect())
}

/// Per-pair spectral energy `dim E_ℓ ‖Ŵ_ij^(ℓ)‖_F²` for every irrep up to the
/// band limit, computed on the first `max_points` points. `energy[ℓ-index][pair]`.
fn irrep_energies(dataset: &Dataset, params: &AffinityParams, max_points: usize) -> Result<(Vec<Irrep>, Vec<Vec<f64>>)> {
    let g = dataset.group();
    let full = g.with_truncation(g.band_limit())?;
    let irreps = full.irreps().to_vec();
    let n = dataset.len().min(max_points);
    let pts: Vec<Vec<f64>> = (0..n).map(|i| dataset.point(i)).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let per_pair: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let prof = affinity_profile(&pts[i], &pts[j], params, &full);
            (0..irreps.len())
                .map(|p| {
                    let c = coefficient(&prof, &full, full.node_irrep_table(p));
                    irreps[p].dim as f64 * c.norm_squared()
                })
                .collect()
        })
        .collect();
    let energies = (0..irreps.len()).map(|p| per_pair.iter().map(|e| e[p]).collect()).collect();
    Ok((irreps, energies))
}

/// How a truncation was chosen.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TruncationReport {
    pub truncation: usize,
    pub band_limit: usize,
    /// Largest per-pair Fourier tail energy beyond the truncation.
    pub tail_energy: f64,
    pub tolerance: f64,
    /// Whether `tail_energy < tolerance` was reached within the band limit.
    pub converged: bool,
}

/// Default tolerance on the kernel's Fourier tail energy.
pub const DEFAULT_TAIL_ENERGY_TOL: f64 = 1e-8;

/// Smallest truncation whose worst-pair tail energy (irreps beyond it, up to the
/// band limit) is below `tol`. Finite groups keep every irrep.
pub fn auto_truncation(dataset: &Dataset, params: &AffinityParams, tol: f64) -> Result<TruncationReport> {
    let g = dataset.group();
    let band = g.band_limit();
    if g.kind().is_finite() {
        return Ok(TruncationReport {
            truncation: g.truncation(),
            band_limit: band,
            tail_energy: 0.0,
            tolerance: tol,
            converged: true,
        });
    }
    let (irreps, energies) = irrep_energies(dataset, params, 64)?;
    let pairs = energies.first().map_or(0, Vec::len);
    let tail_after = |l: usize| -> f64 {
        (0..pairs)
            .map(|p| {
                irreps
                    .iter()
                    .zip(&energies)
                    .filter(|(r, _)| r.label.unsigned_abs() as usize > l)
                    .map(|(_, e)| e[p])
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    };
    for l in 0..=band {
        let tail = tail_after(l);
        if tail < tol {
            return Ok(TruncationReport {
                truncation: l,
                band_limit: band,
                tail_energy: tail,
                tolerance: tol,
                converged: true,
            });
        }
    }
    Ok(TruncationReport {
        truncation: band,
        band_limit: band,
        tail_energy: 0.0,
        tolerance: tol,
        converged: false,
    })
}

/// Same group with the quadrature order multiplied by `factor`.
fn refined(group: &GroupModel, factor: usize) -> Result<GroupModel> {
    let d = group.descriptor();
    let refined = match d {
        GroupDescriptor::So2 { quadrature_order, pairs, .. } => GroupDescriptor::So2 {
            quadrature_order: quadrature_order * factor,
            m_max: None,
            pairs,
        },
        GroupDescriptor::So3 { quadrature_order, triples, .. } => GroupDescriptor::So3 {
            quadrature_order: quadrature_order * factor,
            l_max: None,
            triples,
        },
        other => other,
    };
    refined.build(group.ambient_dim())
}

/// Declared pointwise bound on the reconstruction error of the profile
/// `W_ij(Id, ·)` from the retained irreps, for all pairs among the first
/// `max_points` points. Zero for finite groups.
///
/// With `|U_mn| ≤ 1`, one irrep contributes at most `dim^{3/2} ‖Ŵ^(ℓ)‖_F`
/// pointwise. The bound sums that over the irreps beyond the truncation, using
/// a quadrature refined by `refine`, plus the same norm of the difference
/// between coarse and refined coefficients of the retained irreps (aliasing).
pub fn reconstruction_tail_bound(dataset: &Dataset, params: &AffinityParams, refine: usize, max_points: usize) -> Result<f64> {
    let g = dataset.group();
    if g.kind().is_finite() {
        return Ok(0.0);
    }
    let fine = refined(g, refine.max(2))?;
    let trunc = g.truncation();
    let n = dataset.len().min(max_points);
    let pts: Vec<Vec<f64>> = (0..n).map(|i| dataset.point(i)).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let bounds: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let fp = affinity_profile(&pts[i], &pts[j], params, &fine);
            let cp = affinity_profile(&pts[i], &pts[j], params, g);
            let mut b = 0.0;
            for (p, r) in fine.irreps().iter().enumerate() {
                let dim = r.dim as f64;
                let cf = coefficient(&fp, &fine, fine.node_irrep_table(p));
                if r.label.unsigned_abs() as usize > trunc {
                    b += dim.powf(1.5) * cf.norm();
                } else {
                    let pos = g.irrep_position(r.label).expect("retained irrep");
                    let cc = coefficient(&cp, g, g.node_irrep_table(pos));
                    b += dim.powf(1.5) * (cc - cf).norm();
                }
            }
            b
        })
        .collect();
    Ok(bounds.into_iter().fold(0.0, f64::max))
}

/// On-disk cache of assembled blocks keyed by (dataset hash, ε, ℓ).
#[derive(Debug, Clone)]
pub struct BlockCache {
    dir: PathBuf,
    dtype: Dtype,
}

impl BlockCache {
    pub fn new(dir: impl Into<PathBuf>, dtype: Dtype) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(BlockCache { dir, dtype })
    }

    pub fn path_for(&self, hash: &str, params: &AffinityParams, label: i64) -> PathBuf {
        self.dir
            .join(format!("{hash}_eps{:016x}_l{label}.bin", params.epsilon().to_bits()))
    }

    pub fn load(&self, hash: &str, params: &AffinityParams, irrep: Irrep, degree: &DegreeVector) -> Result<Option<IrrepBlock>> {
        let path = self.path_for(hash, params, irrep.label);
        if !path.exists() {
            return Ok(None);
        }
        let (header, w_hat) = binfmt::read_complex(&path)?;
        let expect = degree.len() * irrep.dim;
        if w_hat.nrows() != expect || w_hat.ncols() != expect {
            return Err(Error::Integrity(format!("cached block {} has the wrong shape", path.display())));
        }
        let dev = header.meta.get("hermitian_deviation").and_then(|v| v.as_f64()).unwrap_or(0.0);
        Ok(Some(IrrepBlock {
            irrep,
            w_hat,
            degree: degree.clone(),
            hermitian_deviation: dev,
        }))
    }

    pub fn store(&self, hash: &str, params: &AffinityParams, block: &IrrepBlock) -> Result<PathBuf> {
        let path = self.path_for(hash, params, block.irrep.label);
        let meta = serde_json::json!({
            "dataset_hash": hash,
            "epsilon": params.epsilon(),
            "label": block.irrep.label,
            "dim": block.irrep.dim,
            "hermitian_deviation": block.hermitian_deviation,
        });
        binfmt::write_complex(&path, &block.w_hat, self.dtype, meta)?;
        Ok(path)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

/// [`assemble_all`] through a cache: blocks already on disk are reused, the rest
/// are computed and stored.
pub fn assemble_all_cached(dataset: &Dataset, params: &AffinityParams, cache: &BlockCache) -> Result<Vec<IrrepBlock>> {
    let g = dataset.group();
    let hash = dataset.hash();
    let table = ProfileTable::new(dataset, params);
    let deg = degree_from_profiles(&table, g);
    deg.check_positive()?;
    g.irreps()
        .iter()
        .map(|r| match cache.load(&hash, params, *r, &deg)? {
            Some(b) => Ok(b),
            None => {
                let b = assemble_from_profiles(&table, g, &deg, r.label)?;
                cache.store(&hash, params, &b)?;
                Ok(b)
            }
        })
        .collect()
}
