//! Planar projection of embeddings and convex-hull breach auditing.
//!
//! The built-in projection is PCA onto the two leading principal axes.
//! Externally computed coordinates (UMAP or anything else) can be supplied
//! through [`load_projection`] instead.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::audit::count_blindness_pairs;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::vecmath::{squared_distance, CategoryModel, Histogram};

/// Tolerance on the orientation cross product used by [`contains`].
pub const ORIENTATION_EPS: f64 = 1e-12;
/// Bin width of the breach-distance histogram.
pub const BREACH_BIN_WIDTH: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub article_id: String,
    pub x: f64,
    pub y: f64,
}

impl ProjectedPoint {
    pub fn new(article_id: impl Into<String>, x: f64, y: f64) -> Self {
        Self {
            article_id: article_id.into(),
            x,
            y,
        }
    }
}

/// `(b - a) x (c - a)`; positive for a left turn.
#[inline]
pub fn cross(a: &ProjectedPoint, b: &ProjectedPoint, c: &ProjectedPoint) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn lex_cmp(a: &ProjectedPoint, b: &ProjectedPoint) -> Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y))
}

/// Result of a PCA fit: the projected points plus the axes they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    pub points: Vec<ProjectedPoint>,
    pub mean: Vec<f64>,
    /// Unit principal axes, largest variance first.
    pub axes: [Vec<f64>; 2],
    /// Variances along `axes` (covariance normalized by `n`).
    pub variances: [f64; 2],
}

/// Mean-centered projection onto the top two principal axes. Each axis is
/// oriented so that its largest-magnitude loading is positive.
pub fn project_pca(corpus: &Corpus) -> Result<Vec<ProjectedPoint>> {
    Ok(fit_pca(corpus)?.points)
}

pub fn fit_pca(corpus: &Corpus) -> Result<PcaProjection> {
    let n = corpus.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "projection needs at least 2 articles, got {n}"
        )));
    }
    let first = &corpus.articles()[0].embedding;
    if corpus.iter().all(|a| &a.embedding == first) {
        return Err(Error::ZeroVariance);
    }
    let d = corpus.dimension();
    let rows: Vec<&[f64]> = corpus.iter().map(|a| a.embedding.as_slice()).collect();
    let mean = crate::vecmath::centroid(&rows)?;
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);

    // Decompose whichever of the covariance (d x d) or Gram (n x n) matrix is smaller.
    let (values, axes): (Vec<f64>, Vec<Vec<f64>>) = if d <= n {
        let cov = centered.transpose() * &centered / n as f64;
        let eig = cov.symmetric_eigen();
        let order = descending(eig.eigenvalues.as_slice());
        let take = order.iter().take(2);
        (
            take.clone().map(|&i| eig.eigenvalues[i]).collect(),
            take.map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
                .collect(),
        )
    } else {
        let gram = &centered * centered.transpose() / n as f64;
        let eig = gram.symmetric_eigen();
        let order = descending(eig.eigenvalues.as_slice());
        let mut values = Vec::new();
        let mut axes = Vec::new();
        for &i in order.iter().take(2) {
            let u = eig.eigenvectors.column(i);
            let v = centered.transpose() * u;
            let norm = v.norm();
            let axis: Vec<f64> = if norm > 0.0 {
                v.iter().map(|x| x / norm).collect()
            } else {
                // null direction: any unit vector orthogonal to the first axis
                orthogonal_unit(axes.first(), d)
            };
            values.push(eig.eigenvalues[i]);
            axes.push(axis);
        }
        (values, axes)
    };

    let mut axes: Vec<Vec<f64>> = axes.into_iter().map(orient).collect();
    let second = axes.pop().expect("two axes");
    let first_axis = axes.pop().expect("two axes");
    let points = corpus
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let row = centered.row(i);
            let x = row.iter().zip(&first_axis).map(|(c, w)| c * w).sum();
            let y = row.iter().zip(&second).map(|(c, w)| c * w).sum();
            ProjectedPoint::new(&a.id, x, y)
        })
        .collect();
    Ok(PcaProjection {
        points,
        mean,
        axes: [first_axis, second],
        variances: [values[0].max(0.0), values[1].max(0.0)],
    })
}

fn descending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

fn orient(mut axis: Vec<f64>) -> Vec<f64> {
    let pivot = axis
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |best, (i, v)| {
            if v.abs() > best.1.abs() {
                (i, *v)
            } else {
                best
            }
        })
        .1;
    if pivot < 0.0 {
        axis.iter_mut().for_each(|v| *v = -*v);
    }
    axis
}

fn orthogonal_unit(other: Option<&Vec<f64>>, d: usize) -> Vec<f64> {
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        if let Some(o) = other {
            let dot = o[j];
            e.iter_mut().zip(o).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return e.into_iter().map(|x| x / norm).collect();
        }
    }
    unreachable!("d >= 2 always admits an orthogonal direction")
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Coord {
    Number(f64),
    Text(String),
}

#[derive(Deserialize)]
struct RawPoint {
    article_id: String,
    x: Coord,
    y: Coord,
}

fn coord(value: Coord, id: &str, what: &'static str, line: usize) -> Result<f64> {
    let v = match value {
        Coord::Number(v) => v,
        Coord::Text(s) => s.trim().parse::<f64>().map_err(|_| Error::Parse {
            line,
            message: format!("article `{id}`: {what} `{s}` is not a number"),
        })?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            id: id.to_string(),
            what,
        })
    }
}

/// Reads `{article_id, x, y}` line records.
pub fn load_projection(path: impl AsRef<Path>) -> Result<Vec<ProjectedPoint>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_projection(BufReader::new(file))
}

pub fn read_projection(reader: impl BufRead) -> Result<Vec<ProjectedPoint>> {
    let mut points = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawPoint = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let x = coord(raw.x, &raw.article_id, "x coordinate", line_no)?;
        let y = coord(raw.y, &raw.article_id, "y coordinate", line_no)?;
        points.push(ProjectedPoint::new(raw.article_id, x, y));
    }
    Ok(points)
}

pub fn save_projection(points: &[ProjectedPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for p in points {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// A strictly convex hull, counterclockwise from the lexicographically
/// smallest vertex. One or two vertices mean a degenerate point or segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hull2D {
    pub vertices: Vec<ProjectedPoint>,
}

impl Hull2D {
    pub fn is_degenerate(&self) -> bool {
        self.vertices.len() < 3
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        0.5 * (0..n)
            .map(|i| {
                let (a, b) = (&self.vertices[i], &self.vertices[(i + 1) % n]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
    }

    /// Containment that also accepts degenerate hulls: a point hull covers
    /// only its own location, a segment hull covers points on the segment.
    pub fn covers(&self, p: &ProjectedPoint) -> bool {
        match self.vertices.as_slice() {
            [] => false,
            [a] => a.x == p.x && a.y == p.y,
            [a, b] => {
                cross(a, b, p).abs() <= ORIENTATION_EPS
                    && p.x >= a.x.min(b.x)
                    && p.x <= a.x.max(b.x)
                    && p.y >= a.y.min(b.y)
                    && p.y <= a.y.max(b.y)
            }
            _ => contains_polygon(&self.vertices, p),
        }
    }
}

/// Andrew's monotone chain. Collinear boundary points and duplicates are
/// dropped.
pub fn convex_hull(points: &[ProjectedPoint]) -> Hull2D {
    let mut sorted: Vec<&ProjectedPoint> = points.iter().collect();
    sorted.sort_by(|a, b| lex_cmp(a, b).then_with(|| a.article_id.cmp(&b.article_id)));
    sorted.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    if sorted.len() <= 1 {
        return Hull2D {
            vertices: sorted.into_iter().cloned().collect(),
        };
    }

    let mut hull: Vec<&ProjectedPoint> = Vec::with_capacity(2 * sorted.len());
    for p in sorted.iter().copied() {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for p in sorted.iter().rev().skip(1).copied() {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    Hull2D {
        vertices: hull.into_iter().cloned().collect(),
    }
}

fn contains_polygon(vertices: &[ProjectedPoint], p: &ProjectedPoint) -> bool {
    let n = vertices.len();
    (0..n).all(|i| cross(&vertices[i], &vertices[(i + 1) % n], p) >= -ORIENTATION_EPS)
}

/// True when `p` is inside or on the boundary of a non-degenerate hull.
pub fn contains(hull: &Hull2D, p: &ProjectedPoint) -> Result<bool> {
    if hull.is_degenerate() {
        return Err(Error::DegenerateHull(hull.len()));
    }
    Ok(contains_polygon(&hull.vertices, p))
}

/// Hull of the category members' projections.
pub fn category_hull(projected: &[ProjectedPoint], model: &CategoryModel) -> Result<Hull2D> {
    let members: HashSet<&str> = model.member_ids.iter().map(String::as_str).collect();
    let pts: Vec<ProjectedPoint> = projected
        .iter()
        .filter(|p| members.contains(p.article_id.as_str()))
        .cloned()
        .collect();
    if pts.len() != members.len() {
        let have: HashSet<&str> = pts.iter().map(|p| p.article_id.as_str()).collect();
        let missing = model
            .member_ids
            .iter()
            .find(|m| !have.contains(m.as_str()))
            .expect("some member lacks a projection");
        return Err(Error::MissingProjection(missing.clone()));
    }
    Ok(convex_hull(&pts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breach {
    pub article_id: String,
    pub x: f64,
    pub y: f64,
    /// Distance to the centroid in the original embedding space.
    pub d_to_centroid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreachReport {
    /// Breaching non-category articles, nearest to the centroid first.
    pub breaches: Vec<Breach>,
    pub histogram: Histogram,
    /// Pairs (breaching, non-breaching) where the breaching article is the
    /// farther of the two from the centroid.
    pub blindness_pairs_count: u64,
    pub hull_vertices: usize,
}

/// Flags every non-category article whose projection falls inside or on the
/// hull, attaching its true distance to the centroid.
pub fn breach_audit(
    hull: &Hull2D,
    projected: &[ProjectedPoint],
    model: &CategoryModel,
    corpus: &Corpus,
) -> Result<BreachReport> {
    let mut by_id: HashMap<&str, &ProjectedPoint> = HashMap::with_capacity(projected.len());
    for p in projected {
        if !corpus.contains(&p.article_id) {
            return Err(Error::UnknownId(p.article_id.clone()));
        }
        by_id.insert(p.article_id.as_str(), p);
    }
    if corpus.dimension() != model.centroid.len() {
        return Err(Error::LengthMismatch {
            left: corpus.dimension(),
            right: model.centroid.len(),
        });
    }

    let members: HashSet<&str> = model.member_ids.iter().map(String::as_str).collect();
    let mut breaches = Vec::new();
    let mut ignored = Vec::new();
    for article in corpus {
        let p = by_id
            .get(article.id.as_str())
            .ok_or_else(|| Error::MissingProjection(article.id.clone()))?;
        if members.contains(article.id.as_str()) {
            continue;
        }
        let d = squared_distance(&article.embedding, &model.centroid).sqrt();
        if hull.covers(p) {
            breaches.push(Breach {
                article_id: article.id.clone(),
                x: p.x,
                y: p.y,
                d_to_centroid: d,
            });
        } else {
            ignored.push(d);
        }
    }
    breaches.sort_by(|a, b| {
        a.d_to_centroid
            .total_cmp(&b.d_to_centroid)
            .then_with(|| a.article_id.cmp(&b.article_id))
    });
    let flagged: Vec<f64> = breaches.iter().map(|b| b.d_to_centroid).collect();
    Ok(BreachReport {
        histogram: Histogram::with_width(&flagged, BREACH_BIN_WIDTH)?,
        blindness_pairs_count: count_blindness_pairs(&flagged, &ignored),
        breaches,
        hull_vertices: hull.len(),
    })
}
