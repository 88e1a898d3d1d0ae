//! Spherical k-means under cosine distance, silhouettes, and choice of k by
//! separation times the number of compact clusters.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::vector::DocVector;
use super::CommentError;
use crate::Scalar;

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_RESTARTS: usize = 5;
/// A cluster is compact when at least this share of its members score
/// above the cluster's mean silhouette (numerator, denominator).
pub const COMPACT_SHARE: (usize, usize) = (3, 10);

pub fn default_k_grid() -> Vec<usize> {
    (1..=20).map(|i| i * 5).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansConfig {
    pub max_iter: usize,
    pub restarts: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig { max_iter: DEFAULT_MAX_ITER, restarts: DEFAULT_RESTARTS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterModel<F> {
    pub k: usize,
    /// Unit-length centers (a center with no members is all zeros).
    pub centers: Vec<Vec<F>>,
    pub assignment: Vec<usize>,
    pub silhouette: Vec<F>,
    pub iterations: usize,
}

impl<F: Scalar> ClusterModel<F> {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == cluster).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &a in &self.assignment {
            s[a] += 1;
        }
        s
    }
}

pub fn cosine_distance<F: Scalar>(a: &[F], b: &[F]) -> F {
    let dot: F = a.iter().zip(b).map(|(x, y)| *x * *y).sum();
    let na: F = a.iter().map(|x| *x * *x).sum::<F>().sqrt();
    let nb: F = b.iter().map(|x| *x * *x).sum::<F>().sqrt();
    if na.is_zero() || nb.is_zero() {
        F::one()
    } else {
        F::one() - dot / (na * nb)
    }
}

fn dimension<F: Scalar>(vectors: &[DocVector<F>]) -> usize {
    vectors.iter().map(DocVector::dim).max().unwrap_or(0)
}

fn check_input<F: Scalar>(vectors: &[DocVector<F>], k: usize) -> Result<(), CommentError> {
    if let Some(i) = vectors.iter().position(DocVector::is_zero) {
        return Err(CommentError::ZeroVector(i));
    }
    if k < 2 || k > vectors.len() {
        return Err(CommentError::KTooLarge { k, n: vectors.len() });
    }
    Ok(())
}

/// Clusters unit-length vectors. Runs `config.restarts` k-means++ starts
/// from one ChaCha stream and keeps the start with the highest total
/// similarity to assigned centers.
pub fn cluster<F: Scalar>(
    vectors: &[DocVector<F>],
    k: usize,
    seed: u64,
    config: &KMeansConfig,
) -> Result<ClusterModel<F>, CommentError> {
    check_input(vectors, k)?;
    let dim = dimension(vectors);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (total similarity, centers, assignment, iterations)
    #[allow(clippy::type_complexity)]
    let mut best: Option<(F, Vec<Vec<F>>, Vec<usize>, usize)> = None;
    for _ in 0..config.restarts.max(1) {
        let init = plus_plus(vectors, k, dim, &mut rng);
        let (centers, assignment, iterations) = lloyd(vectors, init, config.max_iter);
        let score: F = vectors.iter().zip(&assignment).map(|(v, &c)| v.dot_dense(&centers[c])).sum();
        if best.as_ref().map_or(true, |(s, ..)| score > *s) {
            best = Some((score, centers, assignment, iterations));
        }
    }
    let (_, centers, assignment, iterations) = best.expect("at least one restart");
    let silhouette = silhouettes(vectors, &assignment, k, dim);
    Ok(ClusterModel { k, centers, assignment, silhouette, iterations })
}

fn plus_plus<F: Scalar>(vectors: &[DocVector<F>], k: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<F>> {
    let dense = |i: usize| {
        let mut c = vec![F::zero(); dim];
        vectors[i].add_to(&mut c);
        c
    };
    let first = rng.gen_range(0..vectors.len());
    let mut centers = vec![dense(first)];
    let mut nearest: Vec<f64> = vectors.iter().map(|v| gap(v, &centers[0])).collect();
    while centers.len() < k {
        let weights: Vec<f64> = nearest.iter().map(|d| d * d).collect();
        let pick = match WeightedIndex::new(&weights) {
            Ok(w) => w.sample(rng),
            Err(_) => rng.gen_range(0..vectors.len()),
        };
        let c = dense(pick);
        for (d, v) in nearest.iter_mut().zip(vectors) {
            *d = d.min(gap(v, &c));
        }
        centers.push(c);
    }
    centers
}

fn gap<F: Scalar>(v: &DocVector<F>, center: &[F]) -> f64 {
    (F::one() - v.dot_dense(center)).to_f64().unwrap_or(0.0).max(0.0)
}

fn nearest<F: Scalar>(v: &DocVector<F>, centers: &[Vec<F>], current: Option<usize>) -> usize {
    let mut best = current.unwrap_or(0);
    let mut best_sim = v.dot_dense(&centers[best]);
    for (c, center) in centers.iter().enumerate() {
        let sim = v.dot_dense(center);
        if sim > best_sim {
            best = c;
            best_sim = sim;
        }
    }
    best
}

fn lloyd<F: Scalar>(
    vectors: &[DocVector<F>],
    mut centers: Vec<Vec<F>>,
    max_iter: usize,
) -> (Vec<Vec<F>>, Vec<usize>, usize) {
    let k = centers.len();
    let dim = centers[0].len();
    let mut assignment: Vec<usize> = vectors.iter().map(|v| nearest(v, &centers, None)).collect();
    let mut iterations = 0;
    loop {
        iterations += 1;
        // Update step, with empty clusters taking the point farthest from
        // its own center.
        let mut sums = vec![vec![F::zero(); dim]; k];
        let mut sizes = vec![0usize; k];
        for (v, &c) in vectors.iter().zip(&assignment) {
            v.add_to(&mut sums[c]);
            sizes[c] += 1;
        }
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let far = (0..vectors.len())
                .filter(|&i| sizes[assignment[i]] > 1)
                .map(|i| (i, vectors[i].dot_dense(&centers[assignment[i]])))
                .fold(None, |acc: Option<(usize, F)>, (i, s)| match acc {
                    Some((_, best)) if best <= s => acc,
                    _ => Some((i, s)),
                });
            if let Some((i, _)) = far {
                let old = assignment[i];
                for (id, w) in &vectors[i].entries {
                    let idx = *id as usize;
                    sums[old][idx] = sums[old][idx] - *w;
                }
                sizes[old] -= 1;
                vectors[i].add_to(&mut sums[c]);
                sizes[c] = 1;
                assignment[i] = c;
            }
        }
        for (c, sum) in sums.into_iter().enumerate() {
            let n: F = sum.iter().map(|x| *x * *x).sum::<F>().sqrt();
            if n > F::zero() {
                centers[c] = sum.into_iter().map(|x| x / n).collect();
            }
        }

        let next: Vec<usize> = vectors.iter().zip(&assignment).map(|(v, &c)| nearest(v, &centers, Some(c))).collect();
        if next == assignment || iterations >= max_iter {
            assignment = next;
            break;
        }
        assignment = next;
    }
    (centers, assignment, iterations)
}

/// Silhouette of every point. Inputs must be unit length so that the mean
/// cosine distance to a cluster follows from the cluster's vector sum.
/// Points alone in their cluster score 0.
pub fn silhouettes<F: Scalar>(vectors: &[DocVector<F>], assignment: &[usize], k: usize, dim: usize) -> Vec<F> {
    let mut sums = vec![vec![F::zero(); dim]; k];
    let mut sizes = vec![0usize; k];
    for (v, &c) in vectors.iter().zip(assignment) {
        v.add_to(&mut sums[c]);
        sizes[c] += 1;
    }
    vectors
        .par_iter()
        .zip(assignment)
        .map(|(v, &own)| {
            if sizes[own] <= 1 {
                return F::zero();
            }
            let self_sim = v.dot(v);
            let n_own = F::from_usize(sizes[own] - 1).expect("size fits");
            let a = (n_own - (v.dot_dense(&sums[own]) - self_sim)) / n_own;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| {
                    let n = F::from_usize(sizes[c]).expect("size fits");
                    (n - v.dot_dense(&sums[c])) / n
                })
                .fold(None, |m: Option<F>, d| Some(m.map_or(d, |m| m.min(d))));
            let Some(b) = b else {
                return F::zero();
            };
            let denom = a.max(b);
            if denom <= F::zero() {
                F::zero()
            } else {
                ((b - a) / denom).max(-F::one()).min(F::one())
            }
        })
        .collect()
}

/// Members scoring strictly above their cluster's mean silhouette, as a
/// count per cluster, plus sizes.
fn above_mean<F: Scalar>(model: &ClusterModel<F>) -> Vec<(usize, usize)> {
    (0..model.k)
        .map(|c| {
            let members = model.members(c);
            if members.is_empty() {
                return (0, 0);
            }
            let mean = members.iter().map(|&i| model.silhouette[i]).sum::<F>()
                / F::from_usize(members.len()).expect("size fits");
            let above = members.iter().filter(|&&i| model.silhouette[i] > mean).count();
            (above, members.len())
        })
        .collect()
}

pub fn compact_clusters<F: Scalar>(model: &ClusterModel<F>) -> usize {
    let (num, den) = COMPACT_SHARE;
    above_mean(model).into_iter().filter(|&(above, size)| size > 0 && above * den >= num * size).count()
}

/// Smallest cosine distance between two centers.
pub fn min_center_distance<F: Scalar>(model: &ClusterModel<F>) -> F {
    let mut best: Option<F> = None;
    for i in 0..model.centers.len() {
        for j in (i + 1)..model.centers.len() {
            let d = cosine_distance(&model.centers[i], &model.centers[j]);
            best = Some(best.map_or(d, |b| b.min(d)));
        }
    }
    best.unwrap_or(F::zero())
}

/// Separation times the number of compact clusters; 0 when `k < 2`.
pub fn summarization_metric<F: Scalar>(model: &ClusterModel<F>) -> F {
    if model.k < 2 {
        return F::zero();
    }
    min_center_distance(model) * F::from_usize(compact_clusters(model)).expect("count fits")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSelection<F> {
    pub k: usize,
    /// `(k, metric)` for every grid value that could be fitted.
    pub scores: Vec<(usize, F)>,
    pub model: ClusterModel<F>,
}

/// Fits every usable grid value concurrently and keeps the best metric,
/// preferring the smaller k on ties.
pub fn select_k<F: Scalar>(
    vectors: &[DocVector<F>],
    grid: &[usize],
    seed: u64,
    config: &KMeansConfig,
) -> Result<KSelection<F>, CommentError> {
    if let Some(i) = vectors.iter().position(DocVector::is_zero) {
        return Err(CommentError::ZeroVector(i));
    }
    let mut ks: Vec<usize> = grid.iter().copied().filter(|&k| k >= 2 && k <= vectors.len()).collect();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(CommentError::NoValidK);
    }
    let fitted: Vec<(usize, F, ClusterModel<F>)> = ks
        .par_iter()
        .map(|&k| {
            let m = cluster(vectors, k, seed, config)?;
            Ok((k, summarization_metric(&m), m))
        })
        .collect::<Result<_, CommentError>>()?;
    let scores = fitted.iter().map(|(k, s, _)| (*k, *s)).collect();
    let (k, _, model) =
        fitted.into_iter().reduce(|best, next| if next.1 > best.1 { next } else { best }).expect("non-empty grid");
    Ok(KSelection { k, scores, model })
}

/// Per cluster, up to `n` member indices by descending silhouette, then
/// nearest to the center, then input order.
pub fn representatives<F: Scalar>(model: &ClusterModel<F>, vectors: &[DocVector<F>], n: usize) -> Vec<Vec<usize>> {
    (0..model.k)
        .map(|c| {
            let mut members = model.members(c);
            members.sort_by(|&i, &j| {
                let (si, sj) = (model.silhouette[i], model.silhouette[j]);
                sj.partial_cmp(&si)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| {
                        let di = F::one() - vectors[i].dot_dense(&model.centers[c]);
                        let dj = F::one() - vectors[j].dot_dense(&model.centers[c]);
                        di.partial_cmp(&dj).unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .then(i.cmp(&j))
            });
            members.truncate(n);
            members
        })
        .collect()
}

/// Per cluster, terms by descending mean TF-IDF weight over the members,
/// ties alphabetical.
pub fn cluster_keywords<F: Scalar>(
    model: &ClusterModel<F>,
    vectors: &[DocVector<F>],
    vocabulary: &[String],
    top: usize,
) -> Vec<Vec<(String, F)>> {
    (0..model.k)
        .map(|c| {
            let members = model.members(c);
            let mut sum = vec![F::zero(); vocabulary.len()];
            for &i in &members {
                vectors[i].add_to(&mut sum);
            }
            let n = F::from_usize(members.len().max(1)).expect("size fits");
            let mut words: Vec<(String, F)> = sum
                .into_iter()
                .enumerate()
                .filter(|(_, w)| *w > F::zero())
                .map(|(i, w)| (vocabulary[i].clone(), w / n))
                .collect();
            words
                .sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
            words.truncate(top);
            words
        })
        .collect()
}
