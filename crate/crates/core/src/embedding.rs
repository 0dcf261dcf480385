//! Word-vector table, mean-pooled post vectors and exact cosine top-k.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::textprep::{self, TokenizedText};

const FIXTURE_50D: &str = include_str!("../data/embeddings_fixture_50d.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<F: Real> {
    dim: usize,
    index: HashMap<String, usize>,
    data: Vec<F>,
    skipped: usize,
}

impl<F: Real> EmbeddingTable<F> {
    /// Parse GloVe text: `token v1 ... vd` per line. The dimension comes
    /// from the first well-formed line. Lines of another arity or with
    /// unparsable or non-finite values are skipped; the first occurrence
    /// of a token wins.
    pub fn parse(text: &str, expected_dim: Option<usize>) -> Result<Self> {
        let mut dim: Option<usize> = None;
        let mut index = HashMap::new();
        let mut data = Vec::new();
        let mut skipped = 0;
        let mut row: Vec<F> = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else {
                continue;
            };
            row.clear();
            let mut ok = true;
            for field in fields {
                match field.parse::<f64>() {
                    Ok(v) if v.is_finite() => row.push(F::lit(v)),
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok || row.is_empty() {
                skipped += 1;
                continue;
            }
            let d = *dim.get_or_insert(row.len());
            if let Some(expected) = expected_dim {
                if d != expected {
                    return Err(Error::DimensionMismatch { expected, found: d });
                }
            }
            if row.len() != d {
                skipped += 1;
                continue;
            }
            if index.contains_key(token) {
                continue;
            }
            index.insert(token.to_string(), index.len());
            data.extend_from_slice(&row);
        }
        let Some(dim) = dim.filter(|_| !index.is_empty()) else {
            return Err(Error::NoValidEmbeddings(format!("{skipped} lines skipped")));
        };
        Ok(EmbeddingTable {
            dim,
            index,
            data,
            skipped,
        })
    }

    pub fn load(path: &Path, expected_dim: Option<usize>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, expected_dim).map_err(|e| match e {
            Error::NoValidEmbeddings(msg) => Error::NoValidEmbeddings(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Small 50-dimensional table covering the bundled sample corpus.
    pub fn builtin() -> Self {
        Self::parse(FIXTURE_50D, Some(50)).expect("bundled embeddings parse")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn get(&self, token: &str) -> Option<&[F]> {
        self.index
            .get(token)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// Lookup that falls back to the `#`-stripped form.
    fn lookup(&self, token: &str) -> Option<&[F]> {
        self.get(token).or_else(|| {
            let bare = textprep::strip_hash(token);
            (bare.len() != token.len()).then(|| self.get(bare)).flatten()
        })
    }

    /// Mean of the in-vocabulary token vectors.
    pub fn embed(&self, post_id: &str, t: &TokenizedText) -> PostVector<F> {
        let mut sum = vec![F::zero(); self.dim];
        let mut found = 0usize;
        for token in &t.tokens {
            if let Some(v) = self.lookup(token) {
                for (s, &x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
                found += 1;
            }
        }
        if found > 0 {
            let n = F::from_count(found);
            sum.iter_mut().for_each(|s| *s /= n);
        }
        PostVector {
            post_id: post_id.to_string(),
            vector: sum,
            coverage: if t.tokens.is_empty() {
                0.0
            } else {
                found as f64 / t.tokens.len() as f64
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PostVector<F: Real> {
    pub post_id: String,
    pub vector: Vec<F>,
    /// Fraction of tokens found in the table.
    pub coverage: f64,
}

impl<F: Real> PostVector<F> {
    pub fn is_empty(&self) -> bool {
        self.coverage == 0.0
    }
}

fn norm_f64<F: Real>(a: &[F]) -> f64 {
    a.iter().map(|&x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt()
}

fn dot_f64<F: Real>(a: &[F], b: &[F]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x.as_f64() * y.as_f64()).sum()
}

/// `a·b / (|a| |b|)` accumulated in f64, clamped to [-1, 1]; 0 when either
/// norm is 0.
pub fn cosine<F: Real>(a: &[F], b: &[F]) -> f64 {
    cosine_with_norms(a, b, norm_f64(a), norm_f64(b))
}

fn cosine_with_norms<F: Real>(a: &[F], b: &[F], na: f64, nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot_f64(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub similarity: f64,
}

/// Heap entry whose ordering puts the weakest neighbor on top: lower
/// similarity, then larger id.
struct Ranked<'a> {
    similarity: f64,
    id: &'a str,
}

impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .similarity
            .total_cmp(&self.similarity)
            .then_with(|| self.id.cmp(other.id))
    }
}

impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked<'_> {}

/// Post vectors indexed by id, with cached norms.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore<F: Real> {
    dim: usize,
    vectors: Vec<PostVector<F>>,
    norms: Vec<f64>,
    index: HashMap<String, usize>,
}

impl<F: Real> VectorStore<F> {
    pub fn new(dim: usize, vectors: Vec<PostVector<F>>) -> Result<Self> {
        let mut index = HashMap::with_capacity(vectors.len());
        for (i, v) in vectors.iter().enumerate() {
            if v.vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.vector.len(),
                });
            }
            if index.insert(v.post_id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate vector for {}", v.post_id)));
            }
        }
        let norms = vectors.iter().map(|v| norm_f64(&v.vector)).collect();
        Ok(VectorStore {
            dim,
            vectors,
            norms,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&PostVector<F>> {
        self.position(id).map(|i| &self.vectors[i])
    }

    pub fn vectors(&self) -> &[PostVector<F>] {
        &self.vectors
    }

    pub fn similarity(&self, a: &str, b: &str) -> Option<f64> {
        let (i, j) = (self.position(a)?, self.position(b)?);
        Some(cosine_with_norms(
            &self.vectors[i].vector,
            &self.vectors[j].vector,
            self.norms[i],
            self.norms[j],
        ))
    }

    /// Exact top-k by cosine to `query`, best first, ties by id ascending.
    /// Unknown ids and zero-coverage candidates are skipped; repeated ids
    /// count once. An empty query vector yields no neighbors.
    pub fn top_k<'a, I>(&self, query: &PostVector<F>, candidates: I, k: usize) -> Vec<Neighbor>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let qn = norm_f64(&query.vector);
        if k == 0 || query.is_empty() || qn == 0.0 {
            return Vec::new();
        }
        let mut seen = HashSet::new();
        let mut heap: BinaryHeap<Ranked<'_>> = BinaryHeap::with_capacity(k + 1);
        for id in candidates {
            let Some(i) = self.position(id) else {
                continue;
            };
            let candidate = &self.vectors[i];
            if candidate.is_empty() || !seen.insert(i) {
                continue;
            }
            let similarity = cosine_with_norms(&query.vector, &candidate.vector, qn, self.norms[i]);
            heap.push(Ranked {
                similarity,
                id: &candidate.post_id,
            });
            if heap.len() > k {
                heap.pop();
            }
        }
        heap.into_sorted_vec()
            .into_iter()
            .map(|r| Neighbor {
                id: r.id.to_string(),
                similarity: r.similarity,
            })
            .collect()
    }

    /// Rank every candidate (no cutoff).
    pub fn rank<'a, I>(&self, query: &PostVector<F>, candidates: I) -> Vec<Neighbor>
    where
        I: IntoIterator<Item = &'a str>,
    {
        self.top_k(query, candidates, usize::MAX / 2)
    }
}
