//! Cluster cohesion and category stability diagnostics.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::vecmath::{self, squared_distance, CategoryModel};

/// Vectors keyed by id, in a fixed order.
pub type VectorSet = IndexMap<String, Vec<f64>>;

/// Subcategory id to member article ids.
pub type SubcategoryMap = IndexMap<String, Vec<String>>;

pub fn corpus_vectors(corpus: &Corpus) -> VectorSet {
    corpus
        .iter()
        .map(|a| (a.id.clone(), a.embedding.clone()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: IndexMap<String, usize>,
    pub k: usize,
}

impl ClusterAssignment {
    /// Fails unless every label is below `k` and every cluster is used.
    pub fn new(labels: IndexMap<String, usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be positive".into()));
        }
        let mut used = vec![false; k];
        for (id, &l) in &labels {
            if l >= k {
                return Err(Error::InvalidArgument(format!(
                    "label {l} of `{id}` is not below k = {k}"
                )));
            }
            used[l] = true;
        }
        if let Some(empty) = used.iter().position(|u| !u) {
            return Err(Error::InvalidArgument(format!(
                "cluster {empty} has no members"
            )));
        }
        Ok(Self { labels, k })
    }

    pub fn label(&self, id: &str) -> Option<usize> {
        self.labels.get(id).copied()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in self.labels.values() {
            sizes[l] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansRun {
    pub assignment: ClusterAssignment,
    /// Within-cluster sum of squares after each accepted assignment.
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Lloyd's algorithm with k-means++ seeding from a seeded generator.
pub fn kmeans(
    vectors: &VectorSet,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<ClusterAssignment> {
    Ok(kmeans_run(vectors, k, seed, max_iters)?.assignment)
}

pub fn kmeans_run(vectors: &VectorSet, k: usize, seed: u64, max_iters: usize) -> Result<KmeansRun> {
    let n = vectors.len();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {n} points"
        )));
    }
    if max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be positive".into()));
    }
    let points: Vec<&[f64]> = vectors.values().map(Vec::as_slice).collect();
    let dim = points[0].len();
    if let Some((id, v)) = vectors.iter().find(|(_, v)| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            id: id.clone(),
            expected: dim,
            found: v.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_seeds(&points, k, &mut rng);
    let mut labels = nearest_labels(&points, &centers);
    repair_empty(&points, &mut labels, &centers, k);
    let mut history = vec![wcss_of(&points, &labels, k)];
    let mut iterations = 1;
    let mut converged = false;
    while iterations < max_iters {
        centers = means(&points, &labels, k);
        let mut next = nearest_labels(&points, &centers);
        repair_empty(&points, &mut next, &centers, k);
        iterations += 1;
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
        history.push(wcss_of(&points, &labels, k));
    }
    let labels = vectors.keys().cloned().zip(labels).collect();
    Ok(KmeansRun {
        assignment: ClusterAssignment::new(labels, k)?,
        wcss_history: history,
        iterations,
        converged,
    })
}

fn plus_plus_seeds(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut best: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, points[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, w) in best.iter().enumerate() {
                acc += w;
                if *w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave the target just past the last positive weight
            pick.unwrap_or_else(|| best.iter().rposition(|w| *w > 0.0).expect("total > 0"))
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(pick);
        for (b, p) in best.iter_mut().zip(points) {
            *b = b.min(squared_distance(p, points[pick]));
        }
    }
    chosen.into_iter().map(|i| points[i].to_vec()).collect()
}

fn nearest_labels(points: &[&[f64]], centers: &[Vec<f64>]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            centers
                .iter()
                .enumerate()
                .map(|(c, center)| (squared_distance(p, center), c))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .expect("k >= 1")
                .1
        })
        .collect()
}

/// Moves the worst-fitting point of a multi-member cluster into each empty
/// cluster.
fn repair_empty(points: &[&[f64]], labels: &mut [usize], centers: &[Vec<f64>], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let donor = (0..points.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .map(|i| (squared_distance(points[i], &centers[labels[i]]), i))
            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
            .expect("k <= n leaves a cluster with a spare point")
            .1;
        labels[donor] = empty;
    }
}

fn means(points: &[&[f64]], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(*p) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|x| *x /= c.max(1) as f64);
    }
    sums
}

fn wcss_of(points: &[&[f64]], labels: &[usize], k: usize) -> f64 {
    let centers = means(points, labels, k);
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| squared_distance(p, &centers[l]))
        .sum()
}

/// Within-cluster sum of squared distances to the cluster means.
pub fn wcss(vectors: &VectorSet, assignment: &ClusterAssignment) -> Result<f64> {
    let (points, labels) = aligned(vectors, assignment)?;
    Ok(wcss_of(&points, &labels, assignment.k))
}

fn aligned<'a>(
    vectors: &'a VectorSet,
    assignment: &ClusterAssignment,
) -> Result<(Vec<&'a [f64]>, Vec<usize>)> {
    let mut points = Vec::with_capacity(assignment.labels.len());
    let mut labels = Vec::with_capacity(assignment.labels.len());
    for (id, &l) in &assignment.labels {
        let v = vectors
            .get(id)
            .ok_or_else(|| Error::UnknownId(id.clone()))?;
        points.push(v.as_slice());
        labels.push(l);
    }
    Ok((points, labels))
}

/// Mean silhouette over the labeled points.
pub fn silhouette(vectors: &VectorSet, assignment: &ClusterAssignment) -> Result<f64> {
    let (points, labels) = aligned(vectors, assignment)?;
    silhouette_score(&points, &labels, assignment.k)
}

/// Mean of `(b - a) / max(a, b)` over points. Points alone in their cluster
/// contribute 0, as do points with `a = b = 0`.
pub fn silhouette_score<V: AsRef<[f64]>>(points: &[V], labels: &[usize], k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "silhouette needs k >= 2, got {k}"
        )));
    }
    if points.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: points.len(),
            right: labels.len(),
        });
    }
    if points.is_empty() {
        return Err(Error::EmptyInput("silhouette of no points"));
    }
    let mut sizes = vec![0usize; k];
    for &l in labels {
        if l >= k {
            return Err(Error::InvalidArgument(format!(
                "label {l} is not below k = {k}"
            )));
        }
        sizes[l] += 1;
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for (i, p) in points.iter().enumerate() {
        let own = labels[i];
        if sizes[own] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (j, q) in points.iter().enumerate() {
            if i != j {
                sums[labels[j]] += squared_distance(p.as_ref(), q.as_ref()).sqrt();
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if !b.is_finite() {
            continue;
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / points.len() as f64)
}

/// Centroid of each subcategory's member embeddings.
pub fn hierarchical_vectors(
    corpus: &Corpus,
    subcategories: &SubcategoryMap,
) -> Result<Vec<(String, Vec<f64>)>> {
    subcategories
        .iter()
        .map(|(sub, members)| {
            if members.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "subcategory `{sub}` is empty"
                )));
            }
            let vectors = members
                .iter()
                .map(|id| {
                    corpus
                        .get(id)
                        .map(|a| a.embedding.as_slice())
                        .ok_or_else(|| Error::UnknownId(id.clone()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((sub.clone(), vecmath::centroid(&vectors)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohesionExperiment {
    pub score_base: f64,
    pub score_augmented: f64,
    /// `(augmented - base) / |base|`; absent when the base score is 0.
    pub relative_change: Option<f64>,
    pub n_base: usize,
    pub n_hierarchical: usize,
}

/// Silhouette of the labeled articles before and after appending each
/// subcategory's mean vector to the cluster its members share.
pub fn cohesion_experiment(
    corpus: &Corpus,
    assignment: &ClusterAssignment,
    subcategories: &SubcategoryMap,
) -> Result<CohesionExperiment> {
    let mut points: Vec<Vec<f64>> =
        Vec::with_capacity(assignment.labels.len() + subcategories.len());
    let mut labels: Vec<usize> = Vec::with_capacity(points.capacity());
    for (id, &l) in &assignment.labels {
        let article = corpus.get(id).ok_or_else(|| Error::UnknownId(id.clone()))?;
        points.push(article.embedding.clone());
        labels.push(l);
    }
    let n_base = points.len();
    let score_base = silhouette_score(&points, &labels, assignment.k)?;

    let hier = hierarchical_vectors(corpus, subcategories)?;
    for ((sub, members), (_, vector)) in subcategories.iter().zip(hier) {
        let mut label = None;
        for id in members {
            let l = assignment
                .label(id)
                .ok_or_else(|| Error::UnknownId(id.clone()))?;
            if *label.get_or_insert(l) != l {
                return Err(Error::AmbiguousSubcategory(sub.clone()));
            }
        }
        points.push(vector);
        labels.push(label.expect("non-empty subcategory"));
    }
    let score_augmented = silhouette_score(&points, &labels, assignment.k)?;
    let relative_change =
        (score_base != 0.0).then(|| (score_augmented - score_base) / score_base.abs());
    Ok(CohesionExperiment {
        score_base,
        score_augmented,
        relative_change,
        n_base,
        n_hierarchical: points.len() - n_base,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityResult {
    pub n_samples: usize,
    pub fraction: f64,
    /// Members drawn per resample.
    pub sample_size: usize,
    pub mean_shift: f64,
    /// Population standard deviation of the shifts.
    pub std_shift: f64,
    pub seed: u64,
}

/// Repeatedly draws `floor(fraction * |members|)` members without
/// replacement and measures how far their centroid lands from the full one.
pub fn centroid_stability(
    corpus: &Corpus,
    model: &CategoryModel,
    n_samples: usize,
    fraction: f64,
    seed: u64,
) -> Result<StabilityResult> {
    Ok(stability_shifts(corpus, model, n_samples, fraction, seed)?.0)
}

/// Like [`centroid_stability`], also returning every individual shift.
pub fn stability_shifts(
    corpus: &Corpus,
    model: &CategoryModel,
    n_samples: usize,
    fraction: f64,
    seed: u64,
) -> Result<(StabilityResult, Vec<f64>)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} outside (0, 1]"
        )));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one resample".into()));
    }
    let members = model
        .member_ids
        .iter()
        .map(|id| {
            corpus
                .get(id)
                .map(|a| a.embedding.as_slice())
                .ok_or_else(|| Error::UnknownId(id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let sample_size = (fraction * members.len() as f64).floor() as usize;
    if sample_size == 0 {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} of {} members selects nobody",
            members.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shifts = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut picked = rand::seq::index::sample(&mut rng, members.len(), sample_size).into_vec();
        picked.sort_unstable();
        let subset: Vec<&[f64]> = picked.iter().map(|&i| members[i]).collect();
        let sub = vecmath::centroid(&subset)?;
        shifts.push(squared_distance(&sub, &model.centroid).sqrt());
    }
    let n = shifts.len() as f64;
    let mean_shift = shifts.iter().sum::<f64>() / n;
    let std_shift = (shifts.iter().map(|s| (s - mean_shift).powi(2)).sum::<f64>() / n).sqrt();
    Ok((
        StabilityResult {
            n_samples,
            fraction,
            sample_size,
            mean_shift,
            std_shift,
            seed,
        },
        shifts,
    ))
}

#[derive(Serialize, Deserialize)]
struct SubcategoryRecord {
    subcategory_id: String,
    member_article_ids: Vec<String>,
}

pub fn save_subcategory_map(map: &SubcategoryMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (sub, members) in map {
        let rec = SubcategoryRecord {
            subcategory_id: sub.clone(),
            member_article_ids: members.clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_subcategory_map(path: impl AsRef<Path>) -> Result<SubcategoryMap> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_subcategory_map(BufReader::new(file))
}

/// Reads `{subcategory_id, member_article_ids}` line records.
pub fn read_subcategory_map(reader: impl BufRead) -> Result<SubcategoryMap> {
    let mut map = SubcategoryMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SubcategoryRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if map
            .insert(rec.subcategory_id.clone(), rec.member_article_ids)
            .is_some()
        {
            return Err(Error::Parse {
                line: line_no,
                message: format!("duplicate subcategory `{}`", rec.subcategory_id),
            });
        }
    }
    Ok(map)
}
