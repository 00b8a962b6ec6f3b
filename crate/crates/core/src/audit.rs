//! Cross-method evidence: which articles each strategy flagged, and whether
//! the flags respect the true distance ordering.

use serde::{Deserialize, Serialize};

/// Number of (flagged, ignored) pairs where the flagged article is strictly
/// farther from the centroid than the ignored one.
pub fn count_blindness_pairs(flagged: &[f64], ignored: &[f64]) -> u64 {
    let mut ignored = ignored.to_vec();
    ignored.sort_by(f64::total_cmp);
    flagged
        .iter()
        .map(|&d| ignored.partition_point(|&u| u < d) as u64)
        .sum()
}

/// A flagged article with its distance in the original space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedItem {
    pub article_id: String,
    pub distance: f64,
}

/// One strategy's flags over the non-category articles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodFlags {
    pub method: String,
    /// Flagged articles, nearest first.
    pub flagged: Vec<FlaggedItem>,
    pub blindness_pairs_count: u64,
    /// True when the flags are exactly the `n` closest non-category articles
    /// for some `n`.
    pub is_distance_prefix: bool,
}

impl MethodFlags {
    /// `noncategory` holds every non-category article with its distance;
    /// `is_flagged` selects the flagged subset.
    pub fn from_selection(
        method: impl Into<String>,
        noncategory: &[(String, f64)],
        is_flagged: impl Fn(&str) -> bool,
    ) -> Self {
        let mut flagged = Vec::new();
        let mut ignored = Vec::new();
        for (id, d) in noncategory {
            if is_flagged(id) {
                flagged.push(FlaggedItem {
                    article_id: id.clone(),
                    distance: *d,
                });
            } else {
                ignored.push(*d);
            }
        }
        flagged.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then_with(|| a.article_id.cmp(&b.article_id))
        });
        let distances: Vec<f64> = flagged.iter().map(|f| f.distance).collect();
        let blindness_pairs_count = count_blindness_pairs(&distances, &ignored);
        Self {
            method: method.into(),
            flagged,
            blindness_pairs_count,
            is_distance_prefix: blindness_pairs_count == 0,
        }
    }
}
