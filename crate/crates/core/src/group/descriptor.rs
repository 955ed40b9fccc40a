use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::GroupModel;
use crate::error::{Error, Result};

/// JSON form of a group, e.g.
/// `{"kind": "so2", "quadrature_order": 64, "m_max": 16, "pairs": [[0,1],[2,3]]}`.
///
/// A cyclic group is given either by an explicit orthogonal `generator` or by
/// coordinate `pairs` rotated by `2π/order`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GroupDescriptor {
    Trivial {},
    Cyclic {
        order: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        generator: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pairs: Option<Vec<[usize; 2]>>,
    },
    So2 {
        quadrature_order: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m_max: Option<usize>,
        pairs: Vec<[usize; 2]>,
    },
    So3 {
        quadrature_order: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        l_max: Option<usize>,
        triples: Vec<[usize; 3]>,
    },
}

impl GroupDescriptor {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::input(format!("group descriptor: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serializes")
    }

    /// Explicit irrep truncation, if the descriptor fixes one.
    pub fn truncation(&self) -> Option<usize> {
        match self {
            GroupDescriptor::So2 { m_max, .. } => *m_max,
            GroupDescriptor::So3 { l_max, .. } => *l_max,
            _ => None,
        }
    }

    /// Builds the model acting on `R^dim`. A missing truncation defaults to the
    /// quadrature band limit.
    pub fn build(&self, dim: usize) -> Result<GroupModel> {
        match self {
            GroupDescriptor::Trivial {} => GroupModel::trivial(dim),
            GroupDescriptor::Cyclic {
                order,
                generator,
                pairs,
            } => match (generator, pairs) {
                (Some(rows), None) => {
                    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                        return Err(Error::input(format!(
                            "cyclic generator must be {dim}x{dim} to act on the dataset"
                        )));
                    }
                    let g = DMatrix::from_fn(dim, dim, |r, c| rows[r][c]);
                    GroupModel::cyclic(*order, g)
                }
                (None, Some(pairs)) => GroupModel::cyclic_rotation(*order, dim, pairs),
                _ => Err(Error::input(
                    "cyclic descriptor needs exactly one of `generator` or `pairs`",
                )),
            },
            GroupDescriptor::So2 {
                quadrature_order,
                m_max,
                pairs,
            } => {
                let m = m_max.unwrap_or(quadrature_order.saturating_sub(1) / 2);
                GroupModel::so2(dim, *quadrature_order, m, pairs)
            }
            GroupDescriptor::So3 {
                quadrature_order,
                l_max,
                triples,
            } => {
                let l = l_max.unwrap_or(quadrature_order.saturating_sub(1) / 2);
                GroupModel::so3(dim, *quadrature_order, l, triples)
            }
        }
    }
}
