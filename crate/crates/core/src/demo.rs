//! Seeded synthetic corpora with known answers.
//!
//! * [`demo_corpus`]: a Gaussian category cloud, a far background made of a
//!   few topical clusters, and planted non-category intruders sitting inside
//!   the category cloud. The RP filter at 75% flags exactly the intruders.
//! * [`distorting_corpus`]: a layout where the 2D projection hides the
//!   direction that separates articles from the category, and where a tight
//!   pocket of near-duplicate articles starves the HNSW graph of links.
//! * [`cohesion_corpus`]: two well separated Gaussian clusters, each split
//!   into subcategories.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohesion::SubcategoryMap;
use crate::corpus::{Corpus, EmbeddedArticle};
use crate::error::Result;
use crate::hnsw::HnswParams;

pub const DEMO_CATEGORY: &str = "demo-films";

const CATEGORY_WORDS: &[&str] = &[
    "film",
    "director",
    "premiere",
    "drama",
    "actor",
    "festival",
    "cinema",
    "screenplay",
    "belgrade",
    "studio",
];
const BACKGROUND_TOPICS: &[&[&str]] = &[
    &["river", "basin", "tributary", "delta", "valley", "flood"],
    &["protein", "enzyme", "cell", "membrane", "receptor", "gene"],
    &["league", "season", "goal", "striker", "stadium", "coach"],
    &[
        "compiler",
        "kernel",
        "thread",
        "memory",
        "cache",
        "scheduler",
    ],
];

/// Parameters of the demo corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoSpec {
    pub seed: u64,
    pub dimension: usize,
    pub members: usize,
    pub background: usize,
    /// Intruders drawn from the category's own distribution.
    pub lookalike_intruders: usize,
    /// Intruders placed close to the centroid.
    pub core_intruders: usize,
}

impl Default for DemoSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            dimension: 32,
            members: 60,
            background: 400,
            lookalike_intruders: 6,
            core_intruders: 4,
        }
    }
}

/// A generated corpus together with what was planted in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub corpus: Corpus,
    pub category_id: String,
    /// Non-category articles that belong near the category.
    pub planted: Vec<String>,
    /// Non-category articles the 2D projection places inside the category
    /// region although they are far away (empty for the plain demo).
    pub hidden: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub kind: String,
    pub seed: u64,
    pub category_id: String,
    pub planted: Vec<String>,
    pub hidden: Vec<String>,
    pub articles: usize,
    pub dimension: usize,
}

impl Fixture {
    pub fn manifest(&self, kind: &str, seed: u64) -> FixtureManifest {
        FixtureManifest {
            kind: kind.to_string(),
            seed,
            category_id: self.category_id.clone(),
            planted: self.planted.clone(),
            hidden: self.hidden.clone(),
            articles: self.corpus.len(),
            dimension: self.corpus.dimension(),
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize, sigma: f64) -> Vec<f64> {
    (0..d).map(|_| sigma * normal(rng)).collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v = gaussian(rng, d, 1.0);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn sentence(rng: &mut ChaCha8Rng, words: &[&str], len: usize) -> String {
    let mut out: Vec<&str> = (0..len)
        .map(|_| words[rng.random_range(0..words.len())])
        .collect();
    out.insert(len / 2, "the");
    out.join(" ")
}

pub fn demo_corpus(spec: &DemoSpec) -> Result<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dimension;
    let center = gaussian(&mut rng, d, 2.0);
    let mut articles = Vec::new();

    for i in 0..spec.members {
        let v = add(&center, &gaussian(&mut rng, d, 1.0));
        let text = sentence(&mut rng, CATEGORY_WORDS, 8);
        articles.push(
            EmbeddedArticle::new(format!("member-{i:03}"), format!("Category film {i}"), v)
                .with_category(DEMO_CATEGORY)
                .with_text(text),
        );
    }

    let radii = [18.0, 21.0, 24.0, 27.0];
    let directions: Vec<Vec<f64>> = (0..BACKGROUND_TOPICS.len())
        .map(|_| unit(&mut rng, d))
        .collect();
    for i in 0..spec.background {
        let topic = i % BACKGROUND_TOPICS.len();
        let offset: Vec<f64> = directions[topic].iter().map(|x| x * radii[topic]).collect();
        let v = add(&add(&center, &offset), &gaussian(&mut rng, d, 1.0));
        let text = sentence(&mut rng, BACKGROUND_TOPICS[topic], 8);
        articles.push(
            EmbeddedArticle::new(
                format!("background-{i:03}"),
                format!("Background topic {topic} #{i}"),
                v,
            )
            .with_category(format!("topic-{topic}"))
            .with_text(text),
        );
    }

    let mut planted = Vec::new();
    let intruders = (0..spec.lookalike_intruders)
        .map(|_| 1.0)
        .chain((0..spec.core_intruders).map(|_| 0.4));
    for (i, sigma) in intruders.enumerate() {
        let v = add(&center, &gaussian(&mut rng, d, sigma));
        let text = sentence(&mut rng, CATEGORY_WORDS, 8);
        let id = format!("intruder-{i:02}");
        planted.push(id.clone());
        articles
            .push(EmbeddedArticle::new(&id, format!("Uncategorized film {i}"), v).with_text(text));
    }

    // interleave so that planted articles are not all inserted last
    articles.shuffle(&mut rng);
    Ok(Fixture {
        corpus: Corpus::new(articles)?,
        category_id: DEMO_CATEGORY.to_string(),
        planted,
        hidden: Vec::new(),
    })
}

pub const DISTORTING_CATEGORY: &str = "distorted";

pub const DISTORTING_SEED: u64 = 0;

/// HNSW settings used with [`distorting_corpus`]: a sparse graph in which
/// the pocket loses its links to the rest of the index.
pub fn distorting_hnsw_params() -> HnswParams {
    HnswParams::with_m(2, 8)
}

/// Category members spread in every direction; background articles far out in
/// the plane of the first two coordinates (so PCA keeps that plane); "hidden"
/// articles at the projected centroid but far away along the other
/// coordinates; "near" articles close to the centroid but pushed outside the
/// projected hull; and a pocket of near-duplicate non-category articles
/// inside the category radius.
pub fn distorting_corpus(seed: u64) -> Result<Fixture> {
    const D: usize = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut articles = Vec::new();
    let mut planted = Vec::new();
    let mut hidden = Vec::new();

    // pocket first: its nodes fill their link lists with each other
    let pocket_center = {
        let mut v = vec![0.0; D];
        v[2] = 2.5;
        v
    };
    for i in 0..24 {
        let v = add(&pocket_center, &gaussian(&mut rng, D, 0.01));
        let id = format!("pocket-{i:02}");
        planted.push(id.clone());
        articles.push(EmbeddedArticle::new(id, format!("Pocket {i}"), v));
    }

    for i in 0..40 {
        let v = gaussian(&mut rng, D, 1.0);
        articles.push(
            EmbeddedArticle::new(format!("member-{i:02}"), format!("Member {i}"), v)
                .with_category(DISTORTING_CATEGORY),
        );
    }

    let ring = Normal::new(14.0, 3.0).expect("valid normal");
    for i in 0..200 {
        let r: f64 = ring.sample(&mut rng);
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let mut v = gaussian(&mut rng, D, 1.0);
        v[0] = r * theta.cos();
        v[1] = r * theta.sin();
        articles.push(EmbeddedArticle::new(
            format!("background-{i:03}"),
            format!("Background {i}"),
            v,
        ));
    }

    for i in 0..10 {
        let mut v = gaussian(&mut rng, D, 3.0);
        v[0] = 0.2 * normal(&mut rng);
        v[1] = 0.2 * normal(&mut rng);
        let id = format!("hidden-{i:02}");
        hidden.push(id.clone());
        articles.push(EmbeddedArticle::new(id, format!("Hidden {i}"), v));
    }

    for i in 0..10 {
        let theta = std::f64::consts::TAU * i as f64 / 10.0;
        let mut v = gaussian(&mut rng, D, 0.2);
        v[0] = 3.6 * theta.cos();
        v[1] = 3.6 * theta.sin();
        let id = format!("near-{i:02}");
        planted.push(id.clone());
        articles.push(EmbeddedArticle::new(id, format!("Near {i}"), v));
    }

    Ok(Fixture {
        corpus: Corpus::new(articles)?,
        category_id: DISTORTING_CATEGORY.to_string(),
        planted,
        hidden,
    })
}

/// Two Gaussian clusters (`sigma = 1`) whose centers are `separation` apart,
/// each split evenly into `subcategories_per_cluster` subcategories. Cluster
/// membership is recorded as categories `cluster-0` and `cluster-1`.
pub fn cohesion_corpus(
    seed: u64,
    dimension: usize,
    per_cluster: usize,
    separation: f64,
    subcategories_per_cluster: usize,
) -> Result<(Corpus, SubcategoryMap)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut offset = vec![0.0; dimension];
    offset[0] = separation;
    let centers = [vec![0.0; dimension], offset];
    let mut articles = Vec::new();
    let mut map = SubcategoryMap::new();
    for (c, center) in centers.iter().enumerate() {
        for i in 0..per_cluster {
            let id = format!("c{c}-{i:03}");
            let v = add(center, &gaussian(&mut rng, dimension, 1.0));
            let sub = format!("cluster-{c}/sub-{}", i % subcategories_per_cluster);
            map.entry(sub).or_default().push(id.clone());
            articles.push(
                EmbeddedArticle::new(id, format!("Cluster {c} article {i}"), v)
                    .with_category(format!("cluster-{c}")),
            );
        }
    }
    Ok((Corpus::new(articles)?, map))
}
