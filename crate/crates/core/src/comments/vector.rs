use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;

use super::{Comment, CommentError};
use crate::Scalar;

/// Sparse document vector: `(term id, weight)` pairs sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct DocVector<F> {
    pub entries: Vec<(u32, F)>,
}

impl<F: Scalar> DocVector<F> {
    pub fn from_dense(values: &[F]) -> Self {
        DocVector {
            entries: values.iter().enumerate().filter(|(_, v)| !v.is_zero()).map(|(i, v)| (i as u32, *v)).collect(),
        }
    }

    pub fn norm(&self) -> F {
        self.entries.iter().map(|(_, w)| *w * *w).sum::<F>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|(_, w)| w.is_zero())
    }

    /// Scales to unit length; zero vectors are left alone.
    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > F::zero() {
            for (_, w) in &mut self.entries {
                *w = *w / n;
            }
        }
        self
    }

    pub fn dot_dense(&self, dense: &[F]) -> F {
        self.entries.iter().map(|(i, w)| *w * dense[*i as usize]).sum()
    }

    pub fn dot(&self, other: &DocVector<F>) -> F {
        let (mut i, mut j, mut acc) = (0, 0, F::zero());
        while i < self.entries.len() && j < other.entries.len() {
            let (a, b) = (self.entries[i], other.entries[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc = acc + a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// One past the largest term id.
    pub fn dim(&self) -> usize {
        self.entries.last().map_or(0, |(i, _)| *i as usize + 1)
    }

    pub fn add_to(&self, dense: &mut [F]) {
        for (i, w) in &self.entries {
            dense[*i as usize] = dense[*i as usize] + *w;
        }
    }
}

/// TF-IDF model over a comment corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdf<F> {
    pub vocabulary: Vec<String>,
    pub idf: Vec<F>,
    /// Unit length, or empty when every term of the comment has zero idf.
    pub vectors: Vec<DocVector<F>>,
}

impl<F: Scalar> TfIdf<F> {
    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.vocabulary.binary_search_by(|t| t.as_str().cmp(term)).ok().map(|i| i as u32)
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }
}

/// Weights each stopword-free term by its count in the comment times
/// `ln(N / df)`, then scales every vector to unit length.
pub fn vectorize<F: Scalar>(corpus: &[Comment]) -> Result<TfIdf<F>, CommentError> {
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for c in corpus {
        let mut seen: Vec<&str> = c.terms.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1;
        }
    }
    if df.is_empty() {
        return Err(CommentError::EmptyVocabulary);
    }
    let n = F::from_usize(corpus.len()).expect("corpus size fits");
    let vocabulary: Vec<String> = df.keys().map(|t| t.to_string()).collect();
    let idf: Vec<F> = df.values().map(|&d| (n / F::from_usize(d).expect("df fits")).ln()).collect();
    let ids: HashMap<&str, u32> = df.keys().enumerate().map(|(i, t)| (*t, i as u32)).collect();

    let vectors = corpus
        .par_iter()
        .map(|c| {
            let mut tf: BTreeMap<u32, usize> = BTreeMap::new();
            for t in &c.terms {
                *tf.entry(ids[t.as_str()]).or_default() += 1;
            }
            DocVector {
                entries: tf
                    .into_iter()
                    .map(|(id, count)| (id, F::from_usize(count).expect("count fits") * idf[id as usize]))
                    .filter(|(_, w)| !w.is_zero())
                    .collect(),
            }
            .normalized()
        })
        .collect();
    Ok(TfIdf { vocabulary, idf, vectors })
}

/// Precomputed embeddings keyed by comment id: a JSON object mapping each
/// id to an array of numbers.
pub fn parse_dense_vectors(text: &str) -> Result<HashMap<String, Vec<f64>>, CommentError> {
    Ok(serde_json::from_str(text)?)
}

pub fn load_dense_vectors(path: impl AsRef<Path>) -> Result<HashMap<String, Vec<f64>>, CommentError> {
    parse_dense_vectors(&super::read(path.as_ref())?)
}

/// Looks up each comment's embedding and scales it to unit length.
pub fn dense_for_comments<F: Scalar>(
    comments: &[Comment],
    table: &HashMap<String, Vec<f64>>,
) -> Result<Vec<DocVector<F>>, CommentError> {
    let mut dim = None;
    comments
        .iter()
        .map(|c| {
            let v = table.get(&c.id).ok_or_else(|| CommentError::MissingVector(c.id.clone()))?;
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(CommentError::DimensionMismatch { id: c.id.clone(), expected: d, found: v.len() })
                }
                _ => {}
            }
            let values: Vec<F> = v.iter().map(|x| F::from_f64(*x).expect("finite")).collect();
            Ok(DocVector::from_dense(&values).normalized())
        })
        .collect()
}
