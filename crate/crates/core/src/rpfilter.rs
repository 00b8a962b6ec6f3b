//! Reconsideration-probability (RP) filter.
//!
//! RP decays exponentially with an article's distance to the category
//! centroid, shifted so that it is 100% at the category radius `d_c`:
//!
//! ```text
//! RP(d) = min(100, 100 * exp(-k * (d - d_c)))
//! ```
//!
//! The decay constant `k` is calibrated either so the median non-category
//! distance lands on 50% ([`calibrate_median`]), or so the farthest article
//! lands on 0.1% ([`calibrate_farthest`]).

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::vecmath::{self, CategoryModel};

/// RP assigned to the median non-category distance.
pub const HALF_LIFE_PERCENT: f64 = 50.0;
/// RP assigned to the farthest article in anchor mode.
pub const FARTHEST_ANCHOR_PERCENT: f64 = 0.1;
/// Default reporting threshold.
pub const DEFAULT_THRESHOLD_PERCENT: f64 = 75.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CalibrationMode {
    MedianHalfLife {
        median_noncat: f64,
    },
    FarthestAnchor {
        d_farthest: f64,
    },
    /// `k` supplied directly, e.g. a rounded value.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpCalibration {
    pub d_c: f64,
    pub k: f64,
    #[serde(flatten)]
    pub mode: CalibrationMode,
}

impl RpCalibration {
    pub fn with_k(d_c: f64, k: f64) -> Result<Self> {
        check_radius(d_c)?;
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidCalibration(format!(
                "decay constant {k} must be positive"
            )));
        }
        Ok(Self {
            d_c,
            k,
            mode: CalibrationMode::Fixed,
        })
    }

    /// Raw, unsaturated exponential. Exceeds 100 inside the radius.
    pub fn raw_rp(&self, d_ea: f64) -> f64 {
        100.0 * (-self.k * (d_ea - self.d_c)).exp()
    }

    /// RP in percent, saturated at 100.
    pub fn rp(&self, d_ea: f64) -> f64 {
        if d_ea <= self.d_c {
            100.0
        } else {
            self.raw_rp(d_ea).min(100.0)
        }
    }
}

fn check_radius(d_c: f64) -> Result<()> {
    if d_c.is_finite() && d_c >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidCalibration(format!(
            "radius {d_c} must be a non-negative number"
        )))
    }
}

/// `k = -ln(0.5) / (median(noncat) - d_c)`.
pub fn calibrate_median(d_c: f64, noncat_distances: &[f64]) -> Result<RpCalibration> {
    check_radius(d_c)?;
    let median = vecmath::median(noncat_distances)?;
    if median <= d_c {
        return Err(Error::InvalidCalibration(format!(
            "median non-category distance {median} does not exceed the category radius {d_c}"
        )));
    }
    Ok(RpCalibration {
        d_c,
        k: -(HALF_LIFE_PERCENT / 100.0_f64).ln() / (median - d_c),
        mode: CalibrationMode::MedianHalfLife {
            median_noncat: median,
        },
    })
}

/// `k = -ln(0.001) / (d_farthest - d_c)`.
pub fn calibrate_farthest(d_c: f64, d_farthest: f64) -> Result<RpCalibration> {
    check_radius(d_c)?;
    if !(d_farthest > d_c) || !d_farthest.is_finite() {
        return Err(Error::InvalidCalibration(format!(
            "farthest distance {d_farthest} does not exceed the category radius {d_c}"
        )));
    }
    Ok(RpCalibration {
        d_c,
        k: -(FARTHEST_ANCHOR_PERCENT / 100.0_f64).ln() / (d_farthest - d_c),
        mode: CalibrationMode::FarthestAnchor { d_farthest },
    })
}

/// Distances of every article outside the category, in corpus order.
pub fn noncategory_distances(corpus: &Corpus, model: &CategoryModel) -> Result<Vec<(String, f64)>> {
    Ok(vecmath::distances_to_centroid(corpus, model)?
        .into_iter()
        .filter(|(id, _)| !model.is_member(id))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RpMode {
    #[default]
    Median,
    Farthest,
}

/// Calibrates against the model's non-category distances in the given mode.
pub fn calibrate_for(
    corpus: &Corpus,
    model: &CategoryModel,
    mode: RpMode,
) -> Result<RpCalibration> {
    let distances: Vec<f64> = noncategory_distances(corpus, model)?
        .into_iter()
        .map(|(_, d)| d)
        .collect();
    if distances.is_empty() {
        return Err(Error::InvalidCalibration(
            "no non-category articles to calibrate against".into(),
        ));
    }
    match mode {
        RpMode::Median => calibrate_median(model.d_c, &distances),
        RpMode::Farthest => {
            let farthest = distances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            calibrate_farthest(model.d_c, farthest)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpFlag {
    pub article_id: String,
    pub d_ea: f64,
    pub rp_percent: f64,
}

/// Non-category articles whose RP exceeds `threshold_percent`, highest RP
/// first. Ties go to the smaller distance, then the smaller id.
pub fn audit_category(
    corpus: &Corpus,
    model: &CategoryModel,
    cal: &RpCalibration,
    threshold_percent: f64,
) -> Result<Vec<RpFlag>> {
    let mut flags: Vec<RpFlag> = noncategory_distances(corpus, model)?
        .into_iter()
        .filter_map(|(article_id, d_ea)| {
            let rp_percent = cal.rp(d_ea);
            (rp_percent > threshold_percent).then_some(RpFlag {
                article_id,
                d_ea,
                rp_percent,
            })
        })
        .collect();
    flags.sort_by(|a, b| {
        b.rp_percent
            .total_cmp(&a.rp_percent)
            .then(a.d_ea.total_cmp(&b.d_ea))
            .then_with(|| a.article_id.cmp(&b.article_id))
    });
    Ok(flags)
}

const STOPWORDS: &[&str] = &[
    "a",
    "about",
    "above",
    "after",
    "again",
    "against",
    "all",
    "also",
    "am",
    "an",
    "and",
    "any",
    "are",
    "as",
    "at",
    "be",
    "because",
    "been",
    "before",
    "being",
    "below",
    "between",
    "both",
    "but",
    "by",
    "can",
    "could",
    "did",
    "do",
    "does",
    "doing",
    "down",
    "during",
    "each",
    "few",
    "for",
    "from",
    "further",
    "had",
    "has",
    "have",
    "having",
    "he",
    "her",
    "here",
    "hers",
    "herself",
    "him",
    "himself",
    "his",
    "how",
    "i",
    "if",
    "in",
    "into",
    "is",
    "it",
    "its",
    "itself",
    "just",
    "me",
    "more",
    "most",
    "my",
    "myself",
    "no",
    "nor",
    "not",
    "now",
    "of",
    "off",
    "on",
    "once",
    "only",
    "or",
    "other",
    "our",
    "ours",
    "ourselves",
    "out",
    "over",
    "own",
    "same",
    "she",
    "should",
    "so",
    "some",
    "such",
    "than",
    "that",
    "the",
    "their",
    "theirs",
    "them",
    "themselves",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "through",
    "to",
    "too",
    "under",
    "until",
    "up",
    "very",
    "was",
    "we",
    "were",
    "what",
    "when",
    "where",
    "which",
    "while",
    "who",
    "whom",
    "why",
    "will",
    "with",
    "would",
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
];

fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Most frequent non-stopword tokens of `text`, lowercased. Ties are broken
/// alphabetically.
pub fn extract_keywords(text: &str, top_k: usize) -> Vec<String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for token in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !is_stopword(t))
    {
        *counts.entry(token).or_default() += 1;
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|(wa, ca), (wb, cb)| match cb.cmp(ca) {
        Ordering::Equal => wa.cmp(wb),
        o => o,
    });
    ranked.into_iter().take(top_k).map(|(w, _)| w).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EmbeddedArticle;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn stopwords_sorted() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn median_half_life_decay_constant() {
        // median 5.447 from an odd-sized set
        let cal = calibrate_median(3.151, &[3.143, 5.447, 11.737]).unwrap();
        assert_abs_diff_eq!(cal.k, 0.302, epsilon = 5e-4);
        assert_abs_diff_eq!(cal.k, 0.301_893, epsilon = 1e-6);
        assert!(
            matches!(cal.mode, CalibrationMode::MedianHalfLife { median_noncat } if median_noncat == 5.447)
        );
    }

    #[test]
    fn unit_half_life() {
        let cal = calibrate_median(0.0, &[2f64.ln()]).unwrap();
        assert_abs_diff_eq!(cal.k, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn median_of_three_with_bisection_oracle() {
        let cal = calibrate_median(2.0, &[3.0, 5.0, 4.0]).unwrap();
        // solve exp(-k * 2) = 0.5 by bisection
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (-mid * 2.0).exp() > 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_abs_diff_eq!(cal.k, 0.5 * (lo + hi), epsilon = 1e-12);
        assert_abs_diff_eq!(cal.k, 0.346_573_590_279_972_6, epsilon = 1e-12);
    }

    #[test]
    fn median_not_beyond_radius_is_invalid() {
        assert!(matches!(
            calibrate_median(5.0, &[1.0, 5.0, 9.0]),
            Err(Error::InvalidCalibration(_))
        ));
        assert!(calibrate_median(1.0, &[]).is_err());
    }

    #[test]
    fn farthest_anchor() {
        let cal = calibrate_farthest(0.0, 1000f64.ln()).unwrap();
        assert_abs_diff_eq!(cal.k, 1.0, epsilon = 1e-12);

        let cal = calibrate_farthest(3.151, 11.737).unwrap();
        assert_abs_diff_eq!(cal.k, 1000f64.ln() / 8.586, epsilon = 1e-12);
        assert_abs_diff_eq!(cal.k, 0.804_54, epsilon = 1e-5);
        assert_abs_diff_eq!(cal.rp(11.737), 0.1, epsilon = 1e-9);

        assert!(calibrate_farthest(1.0, 1.0).is_err());
        assert!(calibrate_farthest(1.0, 0.5).is_err());
    }

    #[test]
    fn rp_values_at_rounded_k() {
        let cal = RpCalibration::with_k(3.151, 0.302).unwrap();
        assert_abs_diff_eq!(cal.raw_rp(3.143), 100.241, epsilon = 0.01);
        assert_eq!(cal.rp(3.143), 100.0);
        assert_abs_diff_eq!(cal.rp(5.447), 49.988, epsilon = 0.01);
        assert_abs_diff_eq!(cal.rp(11.737), 7.479, epsilon = 0.01);
        assert_eq!(cal.rp(3.151), 100.0);
    }

    fn planted_corpus() -> Corpus {
        let mut articles = vec![
            EmbeddedArticle::new("m1", "", vec![1.0, 0.0]).with_category("cat"),
            EmbeddedArticle::new("m2", "", vec![-1.0, 0.0]).with_category("cat"),
            EmbeddedArticle::new("m3", "", vec![0.0, 1.0]).with_category("cat"),
            EmbeddedArticle::new("m4", "", vec![0.0, -1.0]).with_category("cat"),
            EmbeddedArticle::new("near-b", "", vec![0.3, 0.0]),
            EmbeddedArticle::new("near-a", "", vec![0.0, 0.1]),
        ];
        for i in 0..9 {
            let r = 10.0 + i as f64;
            articles.push(EmbeddedArticle::new(format!("far{i}"), "", vec![r, r]));
        }
        Corpus::new(articles).unwrap()
    }

    #[test]
    fn planted_intruders_come_back_in_distance_order() {
        let corpus = planted_corpus();
        let model = vecmath::build_category_model(&corpus, "cat").unwrap();
        let cal = calibrate_for(&corpus, &model, RpMode::Median).unwrap();
        let flags = audit_category(&corpus, &model, &cal, 75.0).unwrap();
        let ids: Vec<_> = flags.iter().map(|f| f.article_id.as_str()).collect();
        assert_eq!(ids, ["near-a", "near-b"]);
        assert!(flags.iter().all(|f| f.rp_percent == 100.0));
    }

    #[test]
    fn full_threshold_with_nothing_inside_is_empty() {
        let corpus = planted_corpus();
        let model = vecmath::build_category_model(&corpus, "cat").unwrap();
        let cal = calibrate_for(&corpus, &model, RpMode::Median).unwrap();
        // rp never exceeds 100
        assert!(audit_category(&corpus, &model, &cal, 100.0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn keywords_by_frequency() {
        assert_eq!(
            extract_keywords("the cat sat on the cat", 2),
            ["cat", "sat"]
        );
        assert!(extract_keywords("", 5).is_empty());
        assert!(extract_keywords("the and of", 5).is_empty());
    }

    #[test]
    fn keywords_hand_counted() {
        let text = "Belgrade film festival screens Serbian films. \
                    The festival in Belgrade opened with a Serbian drama. \
                    Critics praised the drama and the festival jury.";
        // festival 3; belgrade 2, drama 2, serbian 2; critics 1, film 1, films 1, ...
        assert_eq!(
            extract_keywords(text, 6),
            ["festival", "belgrade", "drama", "serbian", "critics", "film"]
        );
    }

    proptest! {
        #[test]
        fn half_life_and_anchor_are_exact(
            d_c in 0.0..20.0f64,
            gaps in prop::collection::vec(0.01..30.0f64, 1..25),
        ) {
            let distances: Vec<f64> = gaps.iter().map(|g| d_c + g).collect();
            let cal = calibrate_median(d_c, &distances).unwrap();
            let median = vecmath::median(&distances).unwrap();
            prop_assert!((cal.rp(median) - 50.0).abs() < 1e-9);

            let farthest = distances.iter().copied().fold(f64::MIN, f64::max);
            let cal = calibrate_farthest(d_c, farthest).unwrap();
            prop_assert!((cal.rp(farthest) - 0.1).abs() < 1e-9);
        }

        #[test]
        fn saturated_inside_and_decreasing_outside(
            d_c in 0.0..10.0f64,
            k in 0.01..5.0f64,
            a in 0.0..10.0f64,
            b in 0.0..10.0f64,
        ) {
            let cal = RpCalibration::with_k(d_c, k).unwrap();
            prop_assert_eq!(cal.rp(d_c * a / 10.0), 100.0);
            let (d1, d2) = (d_c + a.min(b), d_c + a.max(b));
            if d1 < d2 && cal.rp(d1) < 100.0 {
                prop_assert!(cal.rp(d1) > cal.rp(d2));
            }
            prop_assert!(cal.rp(d2) > 0.0 && cal.rp(d2) <= 100.0);
        }
    }
}
