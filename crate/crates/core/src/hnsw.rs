//! Hierarchical Navigable Small World index and centroid-anchored fishnet
//! retrieval.
//!
//! Construction is serial and seeded: node levels are drawn as
//! `floor(-ln(U) * level_norm)` with `U` uniform on `(0, 1]`, so the same
//! input order and seed always give the same graph. Neighbors are chosen by
//! plain closest-M selection and links are kept symmetric: when a node
//! overflows its degree cap, the dropped edge is removed from both ends.
//!
//! The built index is immutable and can be searched from any number of
//! threads.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::vecmath::{squared_distance, CategoryModel};

const FORMAT_VERSION: u32 = 1;

/// Smallest `k` the fishnet starts from.
pub const FISHNET_MIN_K: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HnswParams {
    /// Max neighbors per node on layers above 0.
    pub m: usize,
    pub ef_construction: usize,
    /// Max neighbors per node on layer 0.
    pub m_max0: usize,
    pub level_norm: f64,
}

impl HnswParams {
    /// Standard settings for a given `m`: `m_max0 = 2m`, `level_norm = 1/ln(m)`.
    pub fn with_m(m: usize, ef_construction: usize) -> Self {
        Self {
            m,
            ef_construction,
            m_max0: 2 * m,
            level_norm: 1.0 / (m as f64).ln(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidArgument(format!(
                "M must be at least 2, got {}",
                self.m
            )));
        }
        if self.m_max0 < self.m {
            return Err(Error::InvalidArgument("M_max0 must be at least M".into()));
        }
        if self.ef_construction == 0 {
            return Err(Error::InvalidArgument(
                "ef_construction must be positive".into(),
            ));
        }
        if !(self.level_norm.is_finite() && self.level_norm > 0.0) {
            return Err(Error::InvalidArgument("level_norm must be positive".into()));
        }
        Ok(())
    }

    fn cap(&self, layer: usize) -> usize {
        if layer == 0 {
            self.m_max0
        } else {
            self.m
        }
    }
}

impl Default for HnswParams {
    fn default() -> Self {
        Self::with_m(16, 200)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub distance: f64,
}

/// Search candidate ordered by distance, then by node index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand {
    dist: f64,
    node: usize,
}

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.node.cmp(&other.node))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Node {
    id: String,
    vector: Vec<f64>,
    /// `links[layer]` for every layer from 0 to the node's level.
    links: Vec<Vec<usize>>,
}

impl Node {
    fn level(&self) -> usize {
        self.links.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HnswIndex {
    format_version: u32,
    params: HnswParams,
    seed: u64,
    dimension: usize,
    entry_point: usize,
    nodes: Vec<Node>,
    #[serde(skip)]
    by_id: HashMap<String, usize>,
}

impl HnswIndex {
    /// Inserts `items` in order. Fails on empty input, repeated ids, or
    /// mismatched dimensions.
    pub fn build<I, S, V>(items: I, params: HnswParams, seed: u64) -> Result<Self>
    where
        I: IntoIterator<Item = (S, V)>,
        S: Into<String>,
        V: Into<Vec<f64>>,
    {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut index: Option<HnswIndex> = None;
        for (id, vector) in items {
            let id = id.into();
            let vector = vector.into();
            if vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    id,
                    what: "vector component",
                });
            }
            let level = draw_level(&mut rng, params.level_norm);
            match index.as_mut() {
                None => {
                    let mut idx = HnswIndex {
                        format_version: FORMAT_VERSION,
                        params,
                        seed,
                        dimension: vector.len(),
                        entry_point: 0,
                        nodes: Vec::new(),
                        by_id: HashMap::new(),
                    };
                    idx.insert(id, vector, level)?;
                    index = Some(idx);
                }
                Some(idx) => idx.insert(id, vector, level)?,
            }
        }
        let mut index = index.ok_or(Error::EmptyInput("cannot build an index over no vectors"))?;
        if index.nodes.len() == 1 {
            // a lone node has nothing to route through on upper layers
            index.nodes[0].links.truncate(1);
        }
        Ok(index)
    }

    pub fn from_corpus(corpus: &Corpus, params: HnswParams, seed: u64) -> Result<Self> {
        Self::build(
            corpus
                .iter()
                .map(|a| (a.id.as_str(), a.embedding.as_slice())),
            params,
            seed,
        )
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entry_point(&self) -> &str {
        &self.nodes[self.entry_point].id
    }

    pub fn max_level(&self) -> usize {
        self.nodes[self.entry_point].level()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn level_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).map(|&i| self.nodes[i].level())
    }

    /// Neighbor ids of `id` on `layer`, or `None` if the node is absent there.
    pub fn neighbors(&self, id: &str, layer: usize) -> Option<Vec<&str>> {
        let node = &self.nodes[*self.by_id.get(id)?];
        node.links
            .get(layer)
            .map(|l| l.iter().map(|&n| self.nodes[n].id.as_str()).collect())
    }

    /// Number of nodes present on each layer, from layer 0 upward.
    pub fn layer_populations(&self) -> Vec<usize> {
        let mut pops = vec![0; self.max_level() + 1];
        for node in &self.nodes {
            for p in pops.iter_mut().take(node.level() + 1) {
                *p += 1;
            }
        }
        pops
    }

    fn dist(&self, query: &[f64], node: usize) -> f64 {
        squared_distance(query, &self.nodes[node].vector).sqrt()
    }

    fn insert(&mut self, id: String, vector: Vec<f64>, level: usize) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                id,
                expected: self.dimension,
                found: vector.len(),
            });
        }
        if self.by_id.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        let q = self.nodes.len();
        self.by_id.insert(id.clone(), q);
        self.nodes.push(Node {
            id,
            vector,
            links: vec![Vec::new(); level + 1],
        });
        if q == 0 {
            self.entry_point = 0;
            return Ok(());
        }

        let query = self.nodes[q].vector.clone();
        let top = self.max_level();
        let mut entry = vec![self.entry_point];
        for layer in (level + 1..=top).rev() {
            let found = self.search_layer(&query, &entry, 1, layer);
            entry = vec![found[0].node];
        }
        for layer in (0..=level.min(top)).rev() {
            let found = self.search_layer(&query, &entry, self.params.ef_construction, layer);
            let selected: Vec<usize> = found.iter().take(self.params.m).map(|c| c.node).collect();
            self.nodes[q].links[layer] = selected.clone();
            for &e in &selected {
                self.nodes[e].links[layer].push(q);
                if self.nodes[e].links[layer].len() > self.params.cap(layer) {
                    self.shrink(e, layer);
                }
            }
            entry = found.iter().map(|c| c.node).collect();
        }
        if level > top {
            self.entry_point = q;
        }
        Ok(())
    }

    /// Drops one edge of an overfull node: the farthest neighbor that keeps at
    /// least one other link, falling back to the farthest outright.
    fn shrink(&mut self, node: usize, layer: usize) {
        let base = &self.nodes[node].vector;
        let mut ranked: Vec<Cand> = self.nodes[node].links[layer]
            .iter()
            .map(|&n| Cand {
                dist: squared_distance(base, &self.nodes[n].vector),
                node: n,
            })
            .collect();
        ranked.sort();
        let victim = ranked
            .iter()
            .rev()
            .find(|c| self.nodes[c.node].links[layer].len() > 1)
            .unwrap_or(ranked.last().expect("overfull node has neighbors"))
            .node;
        self.nodes[node].links[layer].retain(|&n| n != victim);
        self.nodes[victim].links[layer].retain(|&n| n != node);
    }

    /// Beam search on one layer. Returns up to `ef` nodes, nearest first.
    fn search_layer(&self, query: &[f64], entry: &[usize], ef: usize, layer: usize) -> Vec<Cand> {
        let mut visited: HashSet<usize> = HashSet::with_capacity(ef * 4);
        let mut candidates: BinaryHeap<Reverse<Cand>> = BinaryHeap::new();
        let mut results: BinaryHeap<Cand> = BinaryHeap::new();
        for &e in entry {
            if visited.insert(e) {
                let c = Cand {
                    dist: self.dist(query, e),
                    node: e,
                };
                candidates.push(Reverse(c));
                results.push(c);
                if results.len() > ef {
                    results.pop();
                }
            }
        }
        while let Some(Reverse(current)) = candidates.pop() {
            let worst = *results.peek().expect("results seeded from entry points");
            if current > worst && results.len() >= ef {
                break;
            }
            for &n in &self.nodes[current.node].links[layer] {
                if !visited.insert(n) {
                    continue;
                }
                let c = Cand {
                    dist: self.dist(query, n),
                    node: n,
                };
                let worst = *results.peek().expect("non-empty");
                if results.len() < ef || c < worst {
                    candidates.push(Reverse(c));
                    results.push(c);
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        results.into_sorted_vec()
    }

    /// Approximate k nearest neighbors, nearest first. The beam width at layer
    /// 0 is `max(ef, k)`.
    pub fn knn_search(&self, query: &[f64], k: usize, ef: usize) -> Result<Vec<Neighbor>> {
        if query.len() != self.dimension {
            return Err(Error::LengthMismatch {
                left: self.dimension,
                right: query.len(),
            });
        }
        if k == 0 {
            return Err(Error::InvalidArgument("k must be positive".into()));
        }
        let ef = ef.max(k);
        let mut entry = vec![self.entry_point];
        for layer in (1..=self.max_level()).rev() {
            let found = self.search_layer(query, &entry, 1, layer);
            entry = vec![found[0].node];
        }
        Ok(self
            .search_layer(query, &entry, ef, 0)
            .into_iter()
            .take(k)
            .map(|c| Neighbor {
                id: self.nodes[c.node].id.clone(),
                distance: c.dist,
            })
            .collect())
    }

    /// Every node within `radius` of `query` by exhaustive scan, nearest first.
    pub fn exact_range(&self, query: &[f64], radius: f64) -> Result<Vec<Neighbor>> {
        if query.len() != self.dimension {
            return Err(Error::LengthMismatch {
                left: self.dimension,
                right: query.len(),
            });
        }
        let mut hits: Vec<Cand> = (0..self.nodes.len())
            .map(|n| Cand {
                dist: self.dist(query, n),
                node: n,
            })
            .filter(|c| c.dist <= radius)
            .collect();
        hits.sort();
        Ok(hits
            .into_iter()
            .map(|c| Neighbor {
                id: self.nodes[c.node].id.clone(),
                distance: c.dist,
            })
            .collect())
    }

    /// Expands a kNN query around the category centroid until every member has
    /// been retrieved, then keeps the non-members no farther than the farthest
    /// member.
    ///
    /// `k` starts at `max(16, |members|)` and doubles, capped at the index size.
    /// The beam width for each round is `max(k, ef_search)`.
    pub fn fishnet_retrieval(
        &self,
        model: &CategoryModel,
        ef_search: usize,
    ) -> Result<FishnetResult> {
        for id in &model.member_ids {
            if !self.contains(id) {
                return Err(Error::MissingMember(id.clone()));
            }
        }
        let n = self.len();
        let members: HashSet<&str> = model.member_ids.iter().map(String::as_str).collect();
        let mut k = FISHNET_MIN_K.max(members.len()).min(n);
        let mut rounds = 0;
        let retrieved = loop {
            rounds += 1;
            let found = self.knn_search(&model.centroid, k, ef_search.max(k))?;
            let seen = found
                .iter()
                .filter(|nb| members.contains(nb.id.as_str()))
                .count();
            if seen == members.len() || k >= n {
                break found;
            }
            k = (2 * k).min(n);
        };
        let members_retrieved = retrieved
            .iter()
            .filter(|nb| members.contains(nb.id.as_str()))
            .count();
        let radius = model.max_member_distance();
        let intruders = retrieved
            .iter()
            .filter(|nb| !members.contains(nb.id.as_str()) && nb.distance <= radius)
            .cloned()
            .collect();
        Ok(FishnetResult {
            intruders,
            retrieved,
            final_k: k,
            rounds,
            members_retrieved,
            radius,
        })
    }

    /// Checks the structural invariants: membership across layers, symmetric
    /// links, degree caps, in-range indices and a top-level entry point.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("corrupt index: {msg}")));
        if self.nodes.is_empty() {
            return bad("no nodes".into());
        }
        if self.entry_point >= self.nodes.len() {
            return bad("entry point out of range".into());
        }
        let top = self.max_level();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.links.is_empty() {
                return bad(format!("node `{}` is missing layer 0", node.id));
            }
            if node.level() > top {
                return bad(format!("node `{}` sits above the entry point", node.id));
            }
            if node.vector.len() != self.dimension {
                return bad(format!("node `{}` has the wrong dimension", node.id));
            }
            for (layer, links) in node.links.iter().enumerate() {
                if links.len() > self.params.cap(layer) {
                    return bad(format!(
                        "node `{}` exceeds the degree cap on layer {layer}",
                        node.id
                    ));
                }
                for &n in links {
                    if n >= self.nodes.len() || n == i {
                        return bad(format!("node `{}` has an invalid link", node.id));
                    }
                    let back = self.nodes[n].links.get(layer);
                    if !back.is_some_and(|b| b.contains(&i)) {
                        return bad(format!(
                            "link {} -> {} on layer {layer} is one-way",
                            node.id, self.nodes[n].id
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer(&mut out, self)?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut index: HnswIndex = serde_json::from_reader(BufReader::new(file))?;
        if index.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(index.format_version));
        }
        index.by_id = index
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();
        if index.by_id.len() != index.nodes.len() {
            return Err(Error::InvalidArgument("corrupt index: repeated ids".into()));
        }
        index.validate()?;
        Ok(index)
    }
}

fn draw_level(rng: &mut ChaCha8Rng, level_norm: f64) -> usize {
    let u: f64 = 1.0 - rng.random::<f64>();
    (-u.ln() * level_norm).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FishnetResult {
    /// Non-members within `radius` of the centroid, nearest first.
    pub intruders: Vec<Neighbor>,
    /// Everything returned by the final expansion round.
    pub retrieved: Vec<Neighbor>,
    pub final_k: usize,
    pub rounds: usize,
    pub members_retrieved: usize,
    /// Farthest member distance.
    pub radius: f64,
}
