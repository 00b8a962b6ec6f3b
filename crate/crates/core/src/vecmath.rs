//! Distance kernels, centroids, order statistics and the category model.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Percentile used for the category radius.
pub const CATEGORY_RADIUS_PERCENTILE: f64 = 75.0;

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(squared_distance(a, b).sqrt())
}

/// Squared Euclidean distance. Callers guarantee equal lengths.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Componentwise arithmetic mean, accumulated in input order.
pub fn centroid<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or(Error::EmptyInput("centroid of no vectors"))?;
    let dim = first.as_ref().len();
    let mut sum = vec![0.0; dim];
    for v in vectors {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(Error::LengthMismatch {
                left: dim,
                right: v.len(),
            });
        }
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    let n = vectors.len() as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Ok(sum)
}

/// Linear-interpolation percentile: with the values sorted ascending, rank
/// `r = p/100 * (n - 1)` is interpolated between `floor(r)` and `ceil(r)`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("percentile of no values"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "percentile {p} outside [0, 100]"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&sorted, p))
}

pub(crate) fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn median(values: &[f64]) -> Result<f64> {
    percentile(values, 50.0)
}

/// A category summarized by its centroid and how far its members sit from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryModel {
    pub category_id: String,
    /// Member ids in corpus order.
    pub member_ids: Vec<String>,
    pub centroid: Vec<f64>,
    /// One distance per member, aligned with `member_ids`.
    pub member_distances: Vec<f64>,
    /// 75th-percentile member distance.
    pub d_c: f64,
}

impl CategoryModel {
    pub fn is_member(&self, id: &str) -> bool {
        self.member_ids.iter().any(|m| m == id)
    }

    pub fn max_member_distance(&self) -> f64 {
        self.member_distances.iter().copied().fold(0.0, f64::max)
    }
}

pub fn build_category_model(corpus: &Corpus, category_id: &str) -> Result<CategoryModel> {
    let members: Vec<_> = corpus.members(category_id).collect();
    if members.is_empty() {
        return Err(Error::UnknownCategory(category_id.to_string()));
    }
    let vectors: Vec<&[f64]> = members.iter().map(|a| a.embedding.as_slice()).collect();
    let center = centroid(&vectors)?;
    let member_distances: Vec<f64> = vectors
        .iter()
        .map(|v| squared_distance(v, &center).sqrt())
        .collect();
    let d_c = percentile(&member_distances, CATEGORY_RADIUS_PERCENTILE)?;
    Ok(CategoryModel {
        category_id: category_id.to_string(),
        member_ids: members.iter().map(|a| a.id.clone()).collect(),
        centroid: center,
        member_distances,
        d_c,
    })
}

/// Distance from every corpus article (members included) to the model centroid,
/// in corpus order.
pub fn distances_to_centroid(
    corpus: &Corpus,
    model: &CategoryModel,
) -> Result<IndexMap<String, f64>> {
    if corpus.dimension() != model.centroid.len() {
        return Err(Error::LengthMismatch {
            left: corpus.dimension(),
            right: model.centroid.len(),
        });
    }
    Ok(corpus
        .iter()
        .map(|a| {
            (
                a.id.clone(),
                squared_distance(&a.embedding, &model.centroid).sqrt(),
            )
        })
        .collect())
}

/// Fixed-width histogram. Bin `i` covers `[origin + i*width, origin + (i+1)*width)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub origin: f64,
    pub width: f64,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: usize,
}

impl Histogram {
    /// Bins `values` with bin edges on multiples of `width`. An empty input
    /// yields no bins.
    pub fn with_width(values: &[f64], width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bin width {width} must be positive"
            )));
        }
        if values.is_empty() {
            return Ok(Self {
                origin: 0.0,
                width,
                counts: Vec::new(),
            });
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let first = (lo / width).floor() as i64;
        let last = (hi / width).floor() as i64;
        let mut counts = vec![0; (last - first + 1) as usize];
        for v in values {
            counts[((v / width).floor() as i64 - first) as usize] += 1;
        }
        Ok(Self {
            origin: first as f64 * width,
            width,
            counts,
        })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn bins(&self) -> Vec<HistogramBin> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &count)| HistogramBin {
                bin_low: self.origin + i as f64 * self.width,
                bin_high: self.origin + (i + 1) as f64 * self.width,
                count,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EmbeddedArticle;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-5.0..5.0)).collect()
    }

    #[test]
    fn three_four_five() {
        assert_eq!(euclidean_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        let v = [1.5, -2.0, 7.0];
        assert_eq!(euclidean_distance(&v, &v).unwrap(), 0.0);
        assert!(euclidean_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn distance_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..50 {
            let a = random_vec(&mut rng, 16);
            let b = random_vec(&mut rng, 16);
            let mut acc = 0.0f64;
            for i in 0..16 {
                acc += (b[i] - a[i]).powi(2);
            }
            let oracle = acc.sqrt();
            assert_relative_eq!(
                euclidean_distance(&a, &b).unwrap(),
                oracle,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn centroid_basics() {
        assert_eq!(
            centroid(&[vec![1.0, 1.0], vec![3.0, 3.0]]).unwrap(),
            vec![2.0, 2.0]
        );
        assert_eq!(centroid(&[vec![4.0, -1.0]]).unwrap(), vec![4.0, -1.0]);
        assert!(centroid::<Vec<f64>>(&[]).is_err());
        assert!(centroid(&[vec![1.0, 1.0], vec![1.0]]).is_err());
    }

    #[test]
    fn centroid_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let vs: Vec<Vec<f64>> = (0..100).map(|_| random_vec(&mut rng, 12)).collect();
        let got = centroid(&vs).unwrap();
        for j in 0..12 {
            let mut total = 0.0;
            for v in &vs {
                total += v[j];
            }
            assert_relative_eq!(got[j], total / 100.0, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn percentile_rule() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 50.0).unwrap(), 2.5);
        assert_eq!(percentile(&[5.0], 13.0).unwrap(), 5.0);
        // sorted [1,2,3,4,5], rank 0.75*4 = 3 -> 4.0
        assert_eq!(percentile(&[5.0, 3.0, 1.0, 4.0, 2.0], 75.0).unwrap(), 4.0);
        // rank 0.75*3 = 2.25 -> 3 + 0.25*(4-3)
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0], 75.0).unwrap(), 3.25);
        assert!(percentile(&[], 50.0).is_err());
        assert!(percentile(&[1.0], 100.5).is_err());
        assert!(percentile(&[1.0], -1.0).is_err());
    }

    fn corpus_of(rows: &[(&str, &[f64], bool)]) -> Corpus {
        Corpus::new(
            rows.iter()
                .map(|(id, v, member)| {
                    let a = EmbeddedArticle::new(*id, *id, v.to_vec());
                    if *member {
                        a.with_category("cat")
                    } else {
                        a
                    }
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn two_member_model() {
        let corpus = corpus_of(&[
            ("a", &[0.0, 0.0], true),
            ("b", &[2.0, 0.0], true),
            ("z", &[9.0, 9.0], false),
        ]);
        let m = build_category_model(&corpus, "cat").unwrap();
        assert_eq!(m.centroid, vec![1.0, 0.0]);
        assert_eq!(m.member_distances, vec![1.0, 1.0]);
        assert_eq!(m.d_c, 1.0);
        assert!(m.is_member("a") && !m.is_member("z"));
    }

    #[test]
    fn single_member_model() {
        let corpus = corpus_of(&[("a", &[3.0, 4.0], true), ("b", &[0.0, 0.0], false)]);
        let m = build_category_model(&corpus, "cat").unwrap();
        assert_eq!(m.centroid, vec![3.0, 4.0]);
        assert_eq!(m.member_distances, vec![0.0]);
        assert_eq!(m.d_c, 0.0);
        assert!(matches!(
            build_category_model(&corpus, "other"),
            Err(Error::UnknownCategory(_))
        ));
    }

    #[test]
    fn gaussian_cloud_radius_matches_oracle() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let articles: Vec<_> = (0..50)
            .map(|i| {
                let v: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut rng)).collect();
                EmbeddedArticle::new(format!("m{i}"), "", v).with_category("cat")
            })
            .collect();
        let corpus = Corpus::new(articles.clone()).unwrap();
        let m = build_category_model(&corpus, "cat").unwrap();

        let mut mean = [0.0; 8];
        for a in &articles {
            for j in 0..8 {
                mean[j] += a.embedding[j] / 50.0;
            }
        }
        let mut dists: Vec<f64> = articles
            .iter()
            .map(|a| {
                (0..8)
                    .map(|j| (a.embedding[j] - mean[j]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // rank 0.75 * 49 = 36.75
        let oracle = dists[36] + 0.75 * (dists[37] - dists[36]);
        assert_relative_eq!(m.d_c, oracle, epsilon = 1e-9);
    }

    #[test]
    fn distances_cover_every_article() {
        let corpus = corpus_of(&[("a", &[0.0, 0.0], true), ("b", &[2.0, 0.0], true)]);
        let m = build_category_model(&corpus, "cat").unwrap();
        let d = distances_to_centroid(&corpus, &m).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d["a"], m.member_distances[0]);
        assert_eq!(d["b"], m.member_distances[1]);

        let corpus = corpus_of(&[
            ("a", &[0.0, 0.0], true),
            ("b", &[2.0, 0.0], true),
            ("mid", &[1.0, 0.0], false),
        ]);
        let d = distances_to_centroid(&corpus, &m).unwrap();
        assert_eq!(d["mid"], 0.0);
    }

    #[test]
    fn histogram_of_distances_matches_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(200);
        let rows: Vec<(String, Vec<f64>)> = (0..200)
            .map(|i| (format!("a{i}"), random_vec(&mut rng, 6)))
            .collect();
        let corpus = Corpus::new(
            rows.iter()
                .enumerate()
                .map(|(i, (id, v))| {
                    let a = EmbeddedArticle::new(id, "", v.clone());
                    if i < 20 {
                        a.with_category("cat")
                    } else {
                        a
                    }
                })
                .collect(),
        )
        .unwrap();
        let m = build_category_model(&corpus, "cat").unwrap();
        let d: Vec<f64> = distances_to_centroid(&corpus, &m)
            .unwrap()
            .values()
            .copied()
            .collect();
        let h = Histogram::with_width(&d, 0.5).unwrap();
        assert_eq!(h.total(), 200);
        for bin in h.bins() {
            let oracle = rows
                .iter()
                .filter(|(_, v)| {
                    let dist = v
                        .iter()
                        .zip(&m.centroid)
                        .map(|(x, c)| (x - c) * (x - c))
                        .sum::<f64>()
                        .sqrt();
                    dist >= bin.bin_low && dist < bin.bin_high
                })
                .count();
            assert_eq!(bin.count, oracle, "bin [{}, {})", bin.bin_low, bin.bin_high);
        }
    }

    #[test]
    fn histogram_edges() {
        let h = Histogram::with_width(&[0.0, 0.49, 0.5, 1.2], 0.5).unwrap();
        assert_eq!(h.counts, vec![2, 1, 1]);
        assert_eq!(h.origin, 0.0);
        assert!(Histogram::with_width(&[], 0.5).unwrap().counts.is_empty());
        assert!(Histogram::with_width(&[1.0], 0.0).is_err());
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0..100.0f64, 5)
    }

    proptest! {
        #[test]
        fn triangle_inequality(a in vec3(), b in vec3(), c in vec3()) {
            let ab = euclidean_distance(&a, &b).unwrap();
            let bc = euclidean_distance(&b, &c).unwrap();
            let ac = euclidean_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
            prop_assert_eq!(ab, euclidean_distance(&b, &a).unwrap());
        }

        #[test]
        fn centroid_minimizes_squared_cost(
            pts in prop::collection::vec(vec3(), 1..20),
            delta in vec3(),
        ) {
            prop_assume!(delta.iter().any(|d| d.abs() > 1e-3));
            let c = centroid(&pts).unwrap();
            let shifted: Vec<f64> = c.iter().zip(&delta).map(|(x, d)| x + d).collect();
            let cost = |q: &[f64]| pts.iter().map(|p| squared_distance(p, q)).sum::<f64>();
            prop_assert!(cost(&shifted) > cost(&c));
        }

        #[test]
        fn percentile_monotone_and_bounded(
            values in prop::collection::vec(-1e3..1e3f64, 1..40),
            p1 in 0.0..=100.0f64,
            p2 in 0.0..=100.0f64,
        ) {
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let a = percentile(&values, lo).unwrap();
            let b = percentile(&values, hi).unwrap();
            prop_assert!(a <= b);
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(a >= min && b <= max);
        }
    }
}
