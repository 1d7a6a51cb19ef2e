//! Hashed unigram + bigram features, and externally supplied embeddings.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;

use crate::corpus::{read_to_string, CorpusError, TokenSequence};
use crate::scalar::Real;

/// Sparse vector with sorted, unique indices below `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector<F> {
    dim: usize,
    entries: Vec<(u32, F)>,
}

impl<F: Real> SparseVector<F> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    /// Builds from (index, value) pairs; duplicate indices are summed and
    /// zeros dropped.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (u32, F)>) -> Self {
        let mut acc: BTreeMap<u32, F> = BTreeMap::new();
        for (i, v) in pairs {
            assert!((i as usize) < dim, "index {i} out of range for dim {dim}");
            let slot = acc.entry(i).or_insert_with(F::zero);
            *slot = *slot + v;
        }
        Self {
            dim,
            entries: acc.into_iter().filter(|(_, v)| !v.is_zero()).collect(),
        }
    }

    pub fn from_dense(values: &[F]) -> Self {
        Self::from_pairs(
            values.len(),
            values.iter().enumerate().map(|(i, v)| (i as u32, *v)),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, F)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn norm(&self) -> F {
        self.entries.iter().map(|(_, v)| *v * *v).sum::<F>().sqrt()
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > F::zero() {
            for (_, v) in self.entries.iter_mut() {
                *v = *v / n;
            }
        }
        self
    }

    pub fn cast<G: Real>(&self) -> SparseVector<G> {
        SparseVector {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .map(|(i, v)| (*i, G::from(*v).expect("finite")))
                .collect(),
        }
    }
}

fn bucket(key: &str, dim: usize) -> u32 {
    let mut h = FnvHasher::default();
    h.write(key.as_bytes());
    (h.finish() % dim as u64) as u32
}

/// Counts unigrams and adjacent bigrams hashed into `[0, dim)`, then
/// L2-normalizes. Empty input gives the zero vector.
pub fn featurize<F: Real>(tokens: &TokenSequence, dim: usize) -> SparseVector<F> {
    assert!(dim >= 2, "feature dimension must be at least 2");
    let t = tokens.tokens();
    let unigrams = t.iter().map(|w| bucket(w, dim));
    let bigrams = t.windows(2).map(|w| bucket(&format!("{} {}", w[0], w[1]), dim));
    SparseVector::from_pairs(dim, unigrams.chain(bigrams).map(|i| (i, F::one()))).normalized()
}

/// Reads `id<TAB>comma-separated reals`. All rows must share one width.
pub fn load_embeddings(path: &Path) -> Result<HashMap<String, Vec<f64>>, CorpusError> {
    parse_embeddings(&read_to_string(path)?)
}

pub fn parse_embeddings(input: &str) -> Result<HashMap<String, Vec<f64>>, CorpusError> {
    let mut out = HashMap::new();
    let mut width = None;
    for (i, raw) in input.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| CorpusError::Malformed { line, reason };
        let (id, values) = raw
            .split_once('\t')
            .ok_or_else(|| bad("expected id<TAB>values".into()))?;
        let values: Vec<f64> = values
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("bad value: {e}")))?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite value".into()));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(bad(format!("expected {w} values, got {}", values.len())))
            }
            Some(_) => {}
        }
        if out.insert(id.trim().to_string(), values).is_some() {
            return Err(CorpusError::DuplicateId {
                line,
                id: id.trim().to_string(),
            });
        }
    }
    Ok(out)
}
