use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use catsift_core::{HnswParams, RpMode};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rp,
    Hull,
    Hnsw,
    #[default]
    All,
}

impl Method {
    pub fn runs_rp(self) -> bool {
        matches!(self, Method::Rp | Method::All)
    }

    pub fn runs_hull(self) -> bool {
        matches!(self, Method::Hull | Method::All)
    }

    pub fn runs_hnsw(self) -> bool {
        matches!(self, Method::Hnsw | Method::All)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Jsonlines,
    Csv,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Jsonlines => "jsonl",
            OutputFormat::Csv => "csv",
        }
    }
}

/// Where the 2D coordinates for the hull audit come from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionSource {
    #[default]
    Pca,
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HnswConfig {
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for HnswConfig {
    fn default() -> Self {
        let p = HnswParams::default();
        Self {
            m: p.m,
            ef_construction: p.ef_construction,
            ef_search: 64,
            seed: 42,
        }
    }
}

impl HnswConfig {
    pub fn params(&self) -> HnswParams {
        HnswParams::with_m(self.m, self.ef_construction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohesionConfig {
    pub subcategory_path: Option<PathBuf>,
    /// Use these categories as cluster labels instead of running k-means.
    pub label_categories: Vec<String>,
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
}

impl Default for CohesionConfig {
    fn default() -> Self {
        Self {
            subcategory_path: None,
            label_categories: Vec::new(),
            k: 2,
            seed: 0,
            max_iters: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub n_samples: usize,
    pub fraction: f64,
    pub seed: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            n_samples: 100,
            fraction: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_path: Option<PathBuf>,
    pub category_id: Option<String>,
    pub method: Method,
    pub rp_threshold_percent: f64,
    pub rp_mode: RpMode,
    /// Keywords extracted per flagged article.
    pub keywords: usize,
    pub hnsw: HnswConfig,
    pub projection: ProjectionSource,
    /// Subsample the non-category articles to this many.
    pub sample_size: Option<usize>,
    pub sample_seed: u64,
    pub output_dir: PathBuf,
    pub output_format: OutputFormat,
    pub cohesion: CohesionConfig,
    pub stability: StabilityConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus_path: None,
            category_id: None,
            method: Method::All,
            rp_threshold_percent: catsift_core::rpfilter::DEFAULT_THRESHOLD_PERCENT,
            rp_mode: RpMode::Median,
            keywords: 5,
            hnsw: HnswConfig::default(),
            projection: ProjectionSource::Pca,
            sample_size: None,
            sample_seed: 0,
            output_dir: PathBuf::from("catsift-out"),
            output_format: OutputFormat::Jsonlines,
            cohesion: CohesionConfig::default(),
            stability: StabilityConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML config. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.corpus_path.as_mut() {
            fix(p);
        }
        if let ProjectionSource::File(p) = &mut self.projection {
            fix(p);
        }
        if let Some(p) = self.cohesion.subcategory_path.as_mut() {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn corpus_path(&self) -> Result<&Path> {
        let path = self
            .corpus_path
            .as_deref()
            .context("no corpus path given (--corpus or corpus_path)")?;
        if !path.is_file() {
            bail!("corpus file not found: {}", path.display());
        }
        Ok(path)
    }

    pub fn category_id(&self) -> Result<&str> {
        self.category_id
            .as_deref()
            .context("no category given (--category or category_id)")
    }

    /// Checks what every audit-style command needs.
    pub fn validate_audit(&self) -> Result<()> {
        self.corpus_path()?;
        self.category_id()?;
        let t = self.rp_threshold_percent;
        if !(t > 0.0 && t <= 100.0) {
            bail!("rp_threshold_percent must be in (0, 100], got {t}");
        }
        if self.hnsw.m < 2 {
            bail!("hnsw.m must be at least 2, got {}", self.hnsw.m);
        }
        if self.hnsw.ef_construction == 0 || self.hnsw.ef_search == 0 {
            bail!("hnsw ef values must be positive");
        }
        if self.sample_size == Some(0) {
            bail!("sample_size must be positive");
        }
        if let ProjectionSource::File(p) = &self.projection {
            if !p.is_file() {
                bail!("projection file not found: {}", p.display());
            }
        }
        Ok(())
    }

    pub fn validate_stability(&self) -> Result<()> {
        self.corpus_path()?;
        self.category_id()?;
        let f = self.stability.fraction;
        if !(f > 0.0 && f <= 1.0) {
            bail!("stability fraction must be in (0, 1], got {f}");
        }
        if self.stability.n_samples == 0 {
            bail!("stability n_samples must be positive");
        }
        Ok(())
    }

    pub fn validate_cohesion(&self) -> Result<()> {
        self.corpus_path()?;
        if let Some(p) = &self.cohesion.subcategory_path {
            if !p.is_file() {
                bail!("subcategory file not found: {}", p.display());
            }
        }
        if self.cohesion.label_categories.is_empty() && self.cohesion.k < 2 {
            bail!("cohesion needs k >= 2 clusters");
        }
        if self.cohesion.label_categories.len() == 1 {
            bail!("cohesion needs at least two label categories");
        }
        Ok(())
    }
}
