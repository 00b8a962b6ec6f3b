//! Article records, corpus loading/saving, seeded sampling, and the embedding
//! service client.
//!
//! A corpus file holds one JSON record per line:
//!
//! ```text
//! {"id":"a1","title":"Some title","vector":[0.1,0.2],"categories":["films"],"text":"..."}
//! ```
//!
//! `categories` and `text` are optional. Blank lines are ignored. The corpus
//! dimension is taken from the first record and enforced on every other one.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedArticle {
    pub id: String,
    pub title: String,
    #[serde(rename = "vector")]
    pub embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub categories: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl EmbeddedArticle {
    pub fn new(id: impl Into<String>, title: impl Into<String>, embedding: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            embedding,
            categories: BTreeSet::new(),
            text: None,
        }
    }

    pub fn with_category(mut self, category: impl Into<String>) -> Self {
        self.categories.insert(category.into());
        self
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }

    pub fn in_category(&self, category: &str) -> bool {
        self.categories.contains(category)
    }
}

/// An immutable, validated collection of articles sharing one dimension.
#[derive(Debug, Clone)]
pub struct Corpus {
    dimension: usize,
    articles: Vec<EmbeddedArticle>,
    by_id: HashMap<String, usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.dimension == other.dimension && self.articles == other.articles
    }
}

impl Corpus {
    /// Validates and wraps `articles`. Fails on an empty list, a dimension
    /// below 2, inconsistent dimensions, non-finite components, or repeated ids.
    pub fn new(articles: Vec<EmbeddedArticle>) -> Result<Self> {
        let first = articles.first().ok_or(Error::EmptyCorpus)?;
        let dimension = first.embedding.len();
        if dimension < 2 {
            return Err(Error::DimensionTooSmall(dimension));
        }
        let mut by_id = HashMap::with_capacity(articles.len());
        for (i, article) in articles.iter().enumerate() {
            validate_article(article, dimension)?;
            if by_id.insert(article.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(article.id.clone()));
            }
        }
        Ok(Self {
            dimension,
            articles,
            by_id,
        })
    }

    /// A corpus with no articles and dimension 0. Only produced by
    /// [`fetch_embeddings`] for an empty request.
    pub fn empty() -> Self {
        Self {
            dimension: 0,
            articles: Vec::new(),
            by_id: HashMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn articles(&self) -> &[EmbeddedArticle] {
        &self.articles
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddedArticle> {
        self.by_id.get(id).map(|&i| &self.articles[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, EmbeddedArticle> {
        self.articles.iter()
    }

    /// Members of `category`, in corpus order.
    pub fn members<'a>(
        &'a self,
        category: &'a str,
    ) -> impl Iterator<Item = &'a EmbeddedArticle> + 'a {
        self.articles
            .iter()
            .filter(move |a| a.in_category(category))
    }

    pub fn into_articles(self) -> Vec<EmbeddedArticle> {
        self.articles
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a EmbeddedArticle;
    type IntoIter = std::slice::Iter<'a, EmbeddedArticle>;

    fn into_iter(self) -> Self::IntoIter {
        self.articles.iter()
    }
}

fn validate_article(article: &EmbeddedArticle, dimension: usize) -> Result<()> {
    if article.embedding.len() != dimension {
        return Err(Error::DimensionMismatch {
            id: article.id.clone(),
            expected: dimension,
            found: article.embedding.len(),
        });
    }
    if article.embedding.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            id: article.id.clone(),
            what: "embedding component",
        });
    }
    Ok(())
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file))
}

/// Parses line-delimited article records. Errors carry the 1-based line number.
pub fn read_corpus(reader: impl BufRead) -> Result<Corpus> {
    let mut articles = Vec::new();
    let mut dimension = None;
    let mut seen = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let article: EmbeddedArticle = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let dim = *dimension.get_or_insert(article.embedding.len());
        validate_article(&article, dim)?;
        if seen.insert(article.id.clone(), line_no).is_some() {
            return Err(Error::DuplicateId(article.id));
        }
        articles.push(article);
    }
    Corpus::new(articles)
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_corpus(corpus, &mut out).map_err(|e| match e {
        Error::Json(j) if j.is_io() => Error::io(path, j.into()),
        other => other,
    })?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_corpus(corpus: &Corpus, mut out: impl Write) -> Result<()> {
    for article in corpus {
        serde_json::to_writer(&mut out, article)?;
        out.write_all(b"\n").map_err(serde_json::Error::io)?;
    }
    Ok(())
}

/// Draws `n` distinct articles with a seeded generator. The selection is kept
/// in corpus order.
pub fn sample_random(corpus: &Corpus, n: usize, seed: u64) -> Result<Corpus> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sample size must be positive".into(),
        ));
    }
    if n > corpus.len() {
        return Err(Error::InvalidArgument(format!(
            "sample size {n} exceeds corpus size {}",
            corpus.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, corpus.len(), n).into_vec();
    picked.sort_unstable();
    let articles = picked
        .into_iter()
        .map(|i| corpus.articles[i].clone())
        .collect();
    Corpus::new(articles)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingProviderConfig {
    pub endpoint: String,
    pub model_name: String,
    pub batch_size: usize,
    /// Per-request timeout in seconds.
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_retries() -> u32 {
    3
}

impl EmbeddingProviderConfig {
    pub fn new(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model_name: model_name.into(),
            batch_size: 32,
            timeout_secs: 30.0,
            max_retries: default_retries(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "batch_size must be at least 1".into(),
            ));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(Error::InvalidArgument("timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchItem {
    pub id: String,
    pub title: String,
    pub text: String,
}

impl FetchItem {
    pub fn new(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            text: text.into(),
        }
    }
}

/// Something that turns a batch of texts into vectors, one per input, in order.
pub trait EmbeddingTransport {
    fn embed(&self, model: &str, inputs: &[String]) -> Result<Vec<Vec<f64>>>;
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    inputs: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// JSON-over-HTTP transport: `POST {model, inputs}` → `{vectors}`.
pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    max_retries: u32,
}

impl HttpTransport {
    pub fn new(cfg: &EmbeddingProviderConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            endpoint: cfg.endpoint.clone(),
            max_retries: cfg.max_retries,
        }
    }

    fn post_once(
        &self,
        body: &EmbedRequest<'_>,
    ) -> std::result::Result<(u16, String), ureq::Error> {
        let mut resp = self.agent.post(&self.endpoint).send_json(body)?;
        let status = resp.status().as_u16();
        let mut text = String::new();
        resp.body_mut()
            .as_reader()
            .read_to_string(&mut text)
            .map_err(ureq::Error::Io)?;
        Ok((status, text))
    }
}

fn is_retryable(err: &ureq::Error) -> bool {
    matches!(
        err,
        ureq::Error::Io(_)
            | ureq::Error::Timeout(_)
            | ureq::Error::HostNotFound
            | ureq::Error::ConnectionFailed
    )
}

impl EmbeddingTransport for HttpTransport {
    fn embed(&self, model: &str, inputs: &[String]) -> Result<Vec<Vec<f64>>> {
        let body = EmbedRequest { model, inputs };
        let mut attempt = 0;
        let (status, text) = loop {
            match self.post_once(&body) {
                Ok(ok) => break ok,
                Err(e) if is_retryable(&e) && attempt < self.max_retries => {
                    attempt += 1;
                    std::thread::sleep(Duration::from_millis(50 * u64::from(attempt)));
                }
                Err(e) => return Err(Error::Transport(e.to_string())),
            }
        };
        if !(200..300).contains(&status) {
            return Err(Error::Provider(text));
        }
        let parsed: EmbedResponse =
            serde_json::from_str(&text).map_err(|_| Error::Provider(text.clone()))?;
        Ok(parsed.vectors)
    }
}

/// Embeds `items` through the configured HTTP service.
pub fn fetch_embeddings(cfg: &EmbeddingProviderConfig, items: &[FetchItem]) -> Result<Corpus> {
    cfg.validate()?;
    if items.is_empty() {
        return Ok(Corpus::empty());
    }
    fetch_with(&HttpTransport::new(cfg), cfg, items)
}

/// Embeds `items` through any transport. Each distinct text is requested once,
/// so repeated texts share one vector within a run.
pub fn fetch_with(
    transport: &dyn EmbeddingTransport,
    cfg: &EmbeddingProviderConfig,
    items: &[FetchItem],
) -> Result<Corpus> {
    cfg.validate()?;
    if items.is_empty() {
        return Ok(Corpus::empty());
    }

    let mut unique: Vec<String> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for item in items {
        slot.entry(item.text.as_str()).or_insert_with(|| {
            unique.push(item.text.clone());
            unique.len() - 1
        });
    }

    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(unique.len());
    for chunk in unique.chunks(cfg.batch_size) {
        let got = transport.embed(&cfg.model_name, chunk)?;
        if got.len() != chunk.len() {
            return Err(Error::Provider(format!(
                "expected {} vectors, got {}",
                chunk.len(),
                got.len()
            )));
        }
        vectors.extend(got);
    }

    let articles = items
        .iter()
        .map(|item| {
            let v = vectors[slot[item.text.as_str()]].clone();
            EmbeddedArticle::new(&item.id, &item.title, v).with_text(&item.text)
        })
        .collect();
    Corpus::new(articles)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, v: &[f64]) -> String {
        serde_json::to_string(&EmbeddedArticle::new(id, id, v.to_vec())).unwrap()
    }

    #[test]
    fn parses_three_records() {
        let data = [
            rec("a", &[1.0, 2.0, 3.0, 4.0]),
            rec("b", &[0.0; 4]),
            rec("c", &[1.5, -2.0, 0.0, 9.0]),
        ]
        .join("\n");
        let corpus = read_corpus(data.as_bytes()).unwrap();
        assert_eq!(corpus.dimension(), 4);
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.get("c").unwrap().embedding[3], 9.0);
    }

    #[test]
    fn dimension_mismatch_names_offender() {
        let data = [
            rec("first", &[1.0, 2.0, 3.0, 4.0]),
            rec("second", &[1.0, 2.0, 3.0]),
        ]
        .join("\n");
        match read_corpus(data.as_bytes()) {
            Err(Error::DimensionMismatch {
                id,
                expected,
                found,
            }) => {
                assert_eq!(id, "second");
                assert_eq!((expected, found), (4, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_rejected() {
        let err = read_corpus("".as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "empty corpus");
        assert!(matches!(
            read_corpus("\n\n".as_bytes()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn duplicate_and_parse_errors() {
        let dup = [rec("x", &[1.0, 2.0]), rec("x", &[3.0, 4.0])].join("\n");
        assert!(matches!(read_corpus(dup.as_bytes()), Err(Error::DuplicateId(id)) if id == "x"));

        let bad = format!("{}\n{{not json", rec("x", &[1.0, 2.0]));
        assert!(matches!(
            read_corpus(bad.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn optional_fields_parse() {
        let line = r#"{"id":"a","title":"A","vector":[1,2],"categories":["x","y"],"text":"hello"}"#;
        let corpus = read_corpus(line.as_bytes()).unwrap();
        let a = corpus.get("a").unwrap();
        assert!(a.in_category("x") && a.in_category("y"));
        assert_eq!(a.text.as_deref(), Some("hello"));
    }

    #[test]
    fn rejects_one_dimensional_vectors() {
        assert!(matches!(
            read_corpus(rec("a", &[1.0]).as_bytes()),
            Err(Error::DimensionTooSmall(1))
        ));
    }

    fn numbered(n: usize) -> Corpus {
        Corpus::new(
            (0..n)
                .map(|i| EmbeddedArticle::new(format!("a{i}"), "", vec![i as f64, 0.0]))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn full_sample_keeps_everything() {
        let corpus = numbered(10);
        let s = sample_random(&corpus, 10, 99).unwrap();
        let mut ids: Vec<_> = s.iter().map(|a| a.id.clone()).collect();
        ids.sort();
        let mut all: Vec<_> = corpus.iter().map(|a| a.id.clone()).collect();
        all.sort();
        assert_eq!(ids, all);
    }

    #[test]
    fn sampling_is_seeded() {
        let corpus = numbered(100);
        let ids = |seed| -> Vec<String> {
            sample_random(&corpus, 5, seed)
                .unwrap()
                .iter()
                .map(|a| a.id.clone())
                .collect()
        };
        assert_eq!(ids(7), ids(7));
        let (s7, s8) = (ids(7), ids(8));
        assert_eq!(s7.len(), 5);
        assert_ne!(s7, s8, "seeds 7 and 8 picked {s7:?} and {s8:?}");
    }

    #[test]
    fn oversized_sample_fails() {
        assert!(sample_random(&numbered(3), 4, 0).is_err());
        assert!(sample_random(&numbered(3), 0, 0).is_err());
    }

    struct Fixed;

    impl EmbeddingTransport for Fixed {
        fn embed(&self, _model: &str, inputs: &[String]) -> Result<Vec<Vec<f64>>> {
            Ok(inputs.iter().map(|s| vec![s.len() as f64, 1.0]).collect())
        }
    }

    #[test]
    fn zero_items_is_empty_corpus() {
        let cfg = EmbeddingProviderConfig::new("http://127.0.0.1:9/unused", "m");
        let corpus = fetch_embeddings(&cfg, &[]).unwrap();
        assert!(corpus.is_empty());
    }

    #[test]
    fn zero_batch_size_rejected() {
        let mut cfg = EmbeddingProviderConfig::new("http://x", "m");
        cfg.batch_size = 0;
        assert!(fetch_with(&Fixed, &cfg, &[FetchItem::new("a", "a", "t")]).is_err());
    }
}
