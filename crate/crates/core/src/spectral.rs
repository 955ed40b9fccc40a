//! Eigendecomposition of the shifted blocks and synthesis of the Laplacian's
//! eigenfunctions on `Γ`.
//!
//! Indices `s` and `m` are 1-based throughout, as in the eigenfunction formula
//! `Φ_m^(ℓ,s)(i, κ) = Σ_n U_ℓ(κ)_{mn} v^(ℓ,s)_{(i−1)·dim + n}`.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::affinity::AffinityParams;
use crate::binfmt::{self, Dtype};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupModel, Irrep};
use crate::harmonic::{assemble_all, shift_block, IrrepBlock, ShiftedBlock};
use crate::operator::GammaFunction;

/// Eigenvalues closer than this share a cluster id.
pub const CLUSTER_GAP: f64 = 1e-9;

const MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub irrep: Irrep,
    pub s: usize,
    pub value: f64,
    /// Unit-norm for `S_ℓ`; `(D⊗I)`-orthonormal for `S_{N,ℓ}`.
    pub vector: DVector<Complex64>,
    pub normalized: bool,
    /// Pairs of one irrep with numerically coincident eigenvalues share an id;
    /// vectors inside a cluster are not individually stable.
    pub cluster: usize,
}

/// Hermitian eigensolve of `S_ℓ`, or of its symmetric conjugate for `S_{N,ℓ}`
/// with vectors mapped back by `D^{-1/2}⊗I`. Ascending eigenvalues.
pub fn eigensolve_block(block: &ShiftedBlock) -> Result<Vec<EigenPair>> {
    let label = block.irrep.label;
    let eig = SymmetricEigen::try_new(block.hermitian.clone(), f64::EPSILON, MAX_SWEEPS)
        .ok_or_else(|| Error::Numerical(format!("eigensolver did not converge on the block for irrep {label}")))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let d = block.irrep.dim;
    let deg = block.degree.as_slice();
    let mut pairs = Vec::with_capacity(order.len());
    let mut cluster = 0;
    let mut prev: Option<f64> = None;
    for (k, &c) in order.iter().enumerate() {
        let value = eig.eigenvalues[c];
        if let Some(p) = prev {
            if value - p >= CLUSTER_GAP {
                cluster += 1;
            }
        }
        prev = Some(value);
        let mut v: DVector<Complex64> = eig.eigenvectors.column(c).into_owned();
        if block.normalized {
            for (r, z) in v.iter_mut().enumerate() {
                *z /= deg[r / d].sqrt();
            }
        }
        fix_phase(&mut v);
        pairs.push(EigenPair {
            irrep: block.irrep,
            s: k + 1,
            value,
            vector: v,
            normalized: block.normalized,
            cluster,
        });
    }
    Ok(pairs)
}

/// Rotates `v` so that its first entry of near-maximal modulus is real positive.
fn fix_phase(v: &mut DVector<Complex64>) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = v.iter().find(|z| z.norm() >= 0.5 * max).copied().unwrap();
    let phase = pivot.conj() / pivot.norm();
    for z in v.iter_mut() {
        *z *= phase;
    }
}

/// `‖S v − λ v‖ / ‖v‖`.
pub fn residual(block: &ShiftedBlock, pair: &EigenPair) -> f64 {
    let r = &block.s * &pair.vector - pair.vector.scale(pair.value);
    r.norm() / pair.vector.norm()
}

/// `Φ_m^(ℓ,s)` (or `Ψ_m^(ℓ,s)` for a normalized pair).
#[derive(Debug, Clone)]
pub struct EigenFunction {
    pub irrep: Irrep,
    pub s: usize,
    pub m: usize,
    pub value: f64,
    vector: DVector<Complex64>,
}

pub fn synthesize_eigenfunction(pair: &EigenPair, m: usize) -> Result<EigenFunction> {
    if m == 0 || m > pair.irrep.dim {
        return Err(Error::input(format!(
            "row index m = {m} is outside 1..={} for irrep {}",
            pair.irrep.dim, pair.irrep.label
        )));
    }
    Ok(EigenFunction {
        irrep: pair.irrep,
        s: pair.s,
        m,
        value: pair.value,
        vector: pair.vector.clone(),
    })
}

impl EigenFunction {
    fn combine(&self, u: &DMatrix<Complex64>, i: usize) -> Complex64 {
        let d = self.irrep.dim;
        (0..d).map(|n| u[(self.m - 1, n)] * self.vector[i * d + n]).sum()
    }

    pub fn eval(&self, group: &GroupModel, i: usize, kappa: &GroupElement) -> Complex64 {
        self.combine(&group.irrep_matrix(&self.irrep, kappa), i)
    }

    pub fn on_nodes(&self, group: &GroupModel) -> Result<GammaFunction> {
        let table = group.node_irrep_table(group.irrep_position(self.irrep.label)?);
        let n = self.vector.len() / self.irrep.dim;
        GammaFunction::new(DMatrix::from_fn(n, table.len(), |i, t| self.combine(&table[t], i)), group)
    }
}

/// Quality numbers for one irrep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockStats {
    pub label: i64,
    pub dim: usize,
    pub hermitian_deviation: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone)]
pub struct SpectralBundle {
    /// Sorted ascending by eigenvalue, ties broken by `(ℓ, s)`.
    pub pairs: Vec<EigenPair>,
    pub normalized: bool,
    pub stats: Vec<BlockStats>,
    pub irreps: Vec<Irrep>,
}

fn label_order(a: i64, b: i64) -> Ordering {
    a.cmp(&b)
}

impl SpectralBundle {
    pub fn from_blocks(blocks: &[IrrepBlock], normalized: bool) -> Result<Self> {
        let solved: Vec<(Vec<EigenPair>, BlockStats)> = blocks
            .par_iter()
            .map(|b| {
                let shifted = shift_block(b, normalized)?;
                let pairs = eigensolve_block(&shifted)?;
                let max_residual = pairs.iter().map(|p| residual(&shifted, p)).fold(0.0, f64::max);
                Ok((
                    pairs,
                    BlockStats {
                        label: b.irrep.label,
                        dim: b.irrep.dim,
                        hermitian_deviation: b.hermitian_deviation,
                        max_residual,
                    },
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut pairs = Vec::new();
        let mut stats = Vec::new();
        for (p, s) in solved {
            pairs.extend(p);
            stats.push(s);
        }
        pairs.sort_by(|a, b| {
            a.value
                .total_cmp(&b.value)
                .then(label_order(a.irrep.label, b.irrep.label))
                .then(a.s.cmp(&b.s))
        });
        Ok(SpectralBundle {
            pairs,
            normalized,
            stats,
            irreps: blocks.iter().map(|b| b.irrep).collect(),
        })
    }

    /// Eigenvalues repeated by their m-multiplicity `dim E_ℓ`.
    pub fn expanded_values(&self) -> Vec<f64> {
        self.pairs
            .iter()
            .flat_map(|p| std::iter::repeat_n(p.value, p.irrep.dim))
            .collect()
    }

    pub fn for_irrep(&self, label: i64) -> Vec<&EigenPair> {
        let mut v: Vec<&EigenPair> = self.pairs.iter().filter(|p| p.irrep.label == label).collect();
        v.sort_by_key(|p| p.s);
        v
    }

    /// Spectrum table `l,s,m,lambda,normalized`, one row per eigenfunction.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("l,s,m,lambda,normalized\n");
        for p in &self.pairs {
            for m in 1..=p.irrep.dim {
                writeln!(out, "{},{},{},{:.16e},{}", p.irrep.label, p.s, m, p.value, self.normalized).unwrap();
            }
        }
        out
    }

    /// Writes `spectrum.csv` and one eigenvector file per irrep
    /// (`eigvecs_l{label}.bin`, columns ordered by `s`). Returns the written paths.
    pub fn export(&self, dir: &Path, dtype: Dtype) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join("spectrum.csv");
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let mut written = vec![csv];
        for r in &self.irreps {
            let pairs = self.for_irrep(r.label);
            let size = pairs.first().map_or(0, |p| p.vector.len());
            let m = DMatrix::from_fn(size, pairs.len(), |row, col| pairs[col].vector[row]);
            let meta = serde_json::json!({
                "label": r.label,
                "dim": r.dim,
                "normalized": self.normalized,
                "eigenvalues": pairs.iter().map(|p| p.value).collect::<Vec<_>>(),
            });
            let path = dir.join(eigvec_file_name(r.label));
            binfmt::write_complex(&path, &m, dtype, meta)?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn eigvec_file_name(label: i64) -> String {
    format!("eigvecs_l{label}.bin")
}

/// Reads an eigenvector file written by [`SpectralBundle::export`]:
/// the vectors (as columns) and their eigenvalues.
pub fn read_eigvecs(path: &Path) -> Result<(DMatrix<Complex64>, Vec<f64>)> {
    let (header, m) = binfmt::read_complex(path)?;
    let values: Vec<f64> = header
        .meta
        .get("eigenvalues")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .ok_or_else(|| Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, "missing eigenvalues in header")))?;
    if values.len() != m.ncols() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidData, "eigenvalue count does not match the vectors"),
        ));
    }
    Ok((m, values))
}

/// Assembles, shifts and solves every retained irrep, optionally truncated to
/// `|ℓ| ≤ lmax`.
pub fn full_spectrum(dataset: &Dataset, params: &AffinityParams, lmax: Option<usize>, normalized: bool) -> Result<SpectralBundle> {
    let ds;
    let dataset = match lmax {
        Some(l) => {
            ds = dataset.with_group(dataset.group().with_truncation(l)?)?;
            &ds
        }
        None => dataset,
    };
    let blocks = assemble_all(dataset, params)?;
    SpectralBundle::from_blocks(&blocks, normalized)
}
