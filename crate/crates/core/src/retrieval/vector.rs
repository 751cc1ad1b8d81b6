use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{top_k, Ranked};
use crate::error::{Error, Result};
use crate::store::{self, FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub unit_norm: bool,
}

impl EmbeddingVector {
    pub fn raw(values: Vec<f64>) -> Self {
        Self {
            values,
            unit_norm: false,
        }
    }

    /// Scales to unit L2 norm. Zero and non-finite vectors are rejected.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        let norm = l2(&values);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::invalid("cannot normalize a zero or non-finite vector"));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(Self {
            values,
            unit_norm: true,
        })
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity clamped to [-1, 1].
pub fn cosine_sim(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dims() != v.dims() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            u.dims(),
            v.dims()
        )));
    }
    let (nu, nv) = (l2(&u.values), l2(&v.values));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero vector"));
    }
    Ok((dot(&u.values, &v.values) / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dims: usize,
    entries: Vec<(u32, EmbeddingVector)>,
}

impl VectorIndex {
    pub fn new(dims: usize, mut entries: Vec<(u32, EmbeddingVector)>) -> Result<Self> {
        if dims == 0 {
            return Err(Error::invalid("vector index needs dims > 0"));
        }
        let mut seen = HashSet::with_capacity(entries.len());
        for (id, v) in &entries {
            if v.dims() != dims {
                return Err(Error::invalid(format!(
                    "unit {id} has {} dims, index has {dims}",
                    v.dims()
                )));
            }
            if !seen.insert(*id) {
                return Err(Error::invalid(format!("duplicate unit id {id}")));
            }
        }
        entries.sort_by_key(|(id, _)| *id);
        Ok(Self { dims, entries })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(u32, EmbeddingVector)] {
        &self.entries
    }

    /// Restricts the index to the given unit ids.
    pub fn subset(&self, keep: &HashSet<u32>) -> Self {
        Self {
            dims: self.dims,
            entries: self
                .entries
                .iter()
                .filter(|(id, _)| keep.contains(id))
                .cloned()
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = VectorHeader {
            format_version: FORMAT_VERSION,
            dims: self.dims,
        };
        let records: Vec<VectorRecord> = self
            .entries
            .iter()
            .map(|(id, v)| VectorRecord {
                unit_id: *id,
                unit_norm: v.unit_norm,
                values: v.values.clone(),
            })
            .collect();
        store::write_jsonl(path, &header, &records)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, records): (VectorHeader, Vec<VectorRecord>) = store::read_jsonl(path)?;
        store::check_version(path, header.format_version)?;
        let entries = records
            .into_iter()
            .map(|r| {
                (
                    r.unit_id,
                    EmbeddingVector {
                        values: r.values,
                        unit_norm: r.unit_norm,
                    },
                )
            })
            .collect();
        Self::new(header.dims, entries).map_err(|e| store::format_err(path, &e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct VectorHeader {
    format_version: u32,
    dims: usize,
}

#[derive(Serialize, Deserialize)]
struct VectorRecord {
    unit_id: u32,
    unit_norm: bool,
    values: Vec<f64>,
}

/// Exact scan. Unit-norm pairs are scored by dot product, others by full
/// cosine.
pub fn vector_topk(index: &VectorIndex, query: &EmbeddingVector, k: usize) -> Result<Ranked> {
    if query.dims() != index.dims {
        return Err(Error::invalid(format!(
            "query has {} dims, index has {}",
            query.dims(),
            index.dims
        )));
    }
    let scored = index
        .entries
        .iter()
        .map(|(id, v)| {
            let s = if v.unit_norm && query.unit_norm {
                dot(&v.values, &query.values).clamp(-1.0, 1.0)
            } else {
                cosine_sim(v, query)?
            };
            Ok((*id, s))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(top_k(scored, k))
}
