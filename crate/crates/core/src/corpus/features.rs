use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub const DEFAULT_DIMENSION: usize = 4096;

/// Fixed-dimension real feature vector stored sparsely (sorted bucket indices).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    dimension: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn zeros(dimension: usize) -> Self {
        FeatureVector {
            dimension,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        let mut out = FeatureVector::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            if v != 0.0 {
                out.indices.push(i as u32);
                out.values.push(v);
            }
        }
        out
    }

    /// Builds from `(index, value)` pairs; repeated indices are summed.
    pub fn from_pairs(dimension: usize, pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, v) in pairs {
            if i >= dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: i + 1,
                });
            }
            *acc.entry(i).or_insert(0.0) += v;
        }
        let mut out = FeatureVector::zeros(dimension);
        for (i, v) in acc {
            if v != 0.0 {
                out.indices.push(i as u32);
                out.values.push(v);
            }
        }
        Ok(out)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dimension];
        for (i, v) in self.iter() {
            dense[i] = v;
        }
        dense
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Dot product with a dense vector of the same dimension.
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        debug_assert_eq!(dense.len(), self.dimension);
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    /// Sparse-sparse dot product.
    pub fn dot(&self, other: &FeatureVector) -> f64 {
        let (mut a, mut b) = (0, 0);
        let mut sum = 0.0;
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    sum += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        sum
    }

    /// Scales to unit L2 norm; the zero vector is returned unchanged.
    pub fn normalized(mut self) -> Self {
        let norm = self.norm();
        if norm > 0.0 {
            for v in &mut self.values {
                *v /= norm;
            }
        }
        self
    }
}

/// Per-bucket document frequencies, fitted on the training split only.
#[derive(Clone, Debug, PartialEq)]
pub struct DocumentFrequency {
    documents: usize,
    counts: Vec<u32>,
}

impl DocumentFrequency {
    pub fn fit<'a, I, S>(documents: I, dimension: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        if dimension == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        let mut counts = vec![0u32; dimension];
        let mut n = 0;
        let mut seen = Vec::new();
        for doc in documents {
            n += 1;
            seen.clear();
            seen.extend(doc.iter().map(|t| bucket(t.as_ref(), dimension)));
            seen.sort_unstable();
            seen.dedup();
            for &b in &seen {
                counts[b] += 1;
            }
        }
        Ok(DocumentFrequency { documents: n, counts })
    }

    pub fn dimension(&self) -> usize {
        self.counts.len()
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    /// Smoothed inverse document frequency, `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, bucket: usize) -> f64 {
        let n = self.documents as f64;
        let df = f64::from(self.counts[bucket]);
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }
}

/// FNV-1a, so bucket assignment is stable across platforms and releases.
fn bucket(token: &str, dimension: usize) -> usize {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let hash = token
        .bytes()
        .fold(OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(PRIME));
    (hash % dimension as u64) as usize
}

/// Hashed TF-IDF vector, L2-normalized. An empty token list maps to the zero vector.
pub fn vectorize<S: AsRef<str>>(tokens: &[S], stats: &DocumentFrequency) -> FeatureVector {
    let dimension = stats.dimension();
    let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
    for t in tokens {
        *tf.entry(bucket(t.as_ref(), dimension)).or_insert(0.0) += 1.0;
    }
    let mut out = FeatureVector::zeros(dimension);
    for (b, count) in tf {
        out.indices.push(b as u32);
        out.values.push(count * stats.idf(b));
    }
    out.normalized()
}
