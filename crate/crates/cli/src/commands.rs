use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use catsift_core::audit::MethodFlags;
use catsift_core::cohesion::{
    cohesion_experiment, corpus_vectors, kmeans, load_subcategory_map, save_subcategory_map,
    stability_shifts, ClusterAssignment, CohesionExperiment, StabilityResult, SubcategoryMap,
};
use catsift_core::corpus::{load_corpus, sample_random, save_corpus, Corpus};
use catsift_core::demo::{self, DemoSpec, Fixture};
use catsift_core::geometry::{
    breach_audit, category_hull, load_projection, project_pca, Breach, BreachReport, ProjectedPoint,
};
use catsift_core::hnsw::{FishnetResult, HnswIndex, Neighbor};
use catsift_core::rpfilter::{
    audit_category, calibrate_for, extract_keywords, noncategory_distances, RpCalibration,
};
use catsift_core::vecmath::{build_category_model, CategoryModel, Histogram, HistogramBin};
use indexmap::IndexMap;
use serde::Serialize;

use crate::config::{OutputFormat, ProjectionSource, RunConfig};
use crate::report::Output;

/// Corpus and category model shared by the audit-style commands.
pub struct Setup {
    pub corpus: Corpus,
    pub model: CategoryModel,
}

fn load(path: &Path) -> Result<Corpus> {
    load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))
}

impl Setup {
    /// Loads the corpus, builds the category model and applies the optional
    /// subsample of non-category articles. Members are always kept.
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let corpus = load(cfg.corpus_path()?)?;
        let category = cfg.category_id()?;
        let model = build_category_model(&corpus, category)?;
        let corpus = match cfg.sample_size {
            None => corpus,
            Some(n) => {
                let others: Vec<_> = corpus
                    .iter()
                    .filter(|a| !model.is_member(&a.id))
                    .cloned()
                    .collect();
                if others.is_empty() {
                    bail!("no non-category articles to sample from");
                }
                let picked = sample_random(&Corpus::new(others)?, n, cfg.sample_seed)?;
                let keep: HashSet<&str> = picked.iter().map(|a| a.id.as_str()).collect();
                let kept = corpus
                    .iter()
                    .filter(|a| model.is_member(&a.id) || keep.contains(a.id.as_str()))
                    .cloned()
                    .collect();
                Corpus::new(kept)?
            }
        };
        Ok(Self { corpus, model })
    }

    fn title(&self, id: &str) -> String {
        self.corpus
            .get(id)
            .map(|a| a.title.clone())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RpRecord {
    pub article_id: String,
    pub title: String,
    pub d_ea: f64,
    pub rp_percent: f64,
    pub keywords: Vec<String>,
}

#[derive(Serialize)]
struct RpCsvRecord<'a> {
    article_id: &'a str,
    title: &'a str,
    d_ea: f64,
    rp_percent: f64,
    keywords: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct HnswRecord {
    pub article_id: String,
    pub title: String,
    pub d_to_centroid: f64,
}

#[derive(Debug, Clone, Serialize)]
struct HistogramRow {
    series: &'static str,
    bin_low: f64,
    bin_high: f64,
    count: usize,
}

pub struct RpOutcome {
    pub calibration: RpCalibration,
    pub records: Vec<RpRecord>,
}

pub fn run_rp(cfg: &RunConfig, setup: &Setup) -> Result<RpOutcome> {
    let calibration = calibrate_for(&setup.corpus, &setup.model, cfg.rp_mode)?;
    let flags = audit_category(
        &setup.corpus,
        &setup.model,
        &calibration,
        cfg.rp_threshold_percent,
    )?;
    let records = flags
        .into_iter()
        .map(|f| {
            let article = setup.corpus.get(&f.article_id).expect("flag from corpus");
            RpRecord {
                keywords: article
                    .text
                    .as_deref()
                    .map(|t| extract_keywords(t, cfg.keywords))
                    .unwrap_or_default(),
                title: article.title.clone(),
                article_id: f.article_id,
                d_ea: f.d_ea,
                rp_percent: f.rp_percent,
            }
        })
        .collect();
    Ok(RpOutcome {
        calibration,
        records,
    })
}

pub fn projection(cfg: &RunConfig, corpus: &Corpus) -> Result<Vec<ProjectedPoint>> {
    match &cfg.projection {
        ProjectionSource::Pca => Ok(project_pca(corpus)?),
        ProjectionSource::File(path) => {
            let points = load_projection(path)
                .with_context(|| format!("loading projection {}", path.display()))?;
            if cfg.sample_size.is_some() {
                // the file covers the full corpus; keep the sampled part
                Ok(points
                    .into_iter()
                    .filter(|p| corpus.contains(&p.article_id))
                    .collect())
            } else {
                Ok(points)
            }
        }
    }
}

pub fn run_hull(cfg: &RunConfig, setup: &Setup) -> Result<BreachReport> {
    let points = projection(cfg, &setup.corpus)?;
    let hull = category_hull(&points, &setup.model)?;
    Ok(breach_audit(&hull, &points, &setup.model, &setup.corpus)?)
}

pub struct HnswOutcome {
    pub fishnet: FishnetResult,
    /// Non-category articles within the fishnet radius, by exact scan.
    pub exact_in_range: Vec<Neighbor>,
    pub layer_populations: Vec<usize>,
}

pub fn run_hnsw(cfg: &RunConfig, setup: &Setup) -> Result<HnswOutcome> {
    let index = HnswIndex::from_corpus(&setup.corpus, cfg.hnsw.params(), cfg.hnsw.seed)?;
    let fishnet = index.fishnet_retrieval(&setup.model, cfg.hnsw.ef_search)?;
    let exact_in_range = index
        .exact_range(&setup.model.centroid, fishnet.radius)?
        .into_iter()
        .filter(|n| !setup.model.is_member(&n.id))
        .collect();
    Ok(HnswOutcome {
        fishnet,
        exact_in_range,
        layer_populations: index.layer_populations(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: &'static str,
    pub flagged_count: usize,
    pub blindness_pairs_count: u64,
    pub is_distance_prefix: bool,
    pub parameters: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub category_id: String,
    pub articles: usize,
    pub members: usize,
    pub d_c: f64,
    pub k: Option<f64>,
    pub calibration: Option<RpCalibration>,
    pub methods: Vec<MethodSummary>,
}

fn histogram_rows(
    series: &'static str,
    values: &[f64],
    rows: &mut Vec<HistogramRow>,
) -> Result<()> {
    if values.is_empty() {
        return Ok(());
    }
    let h = Histogram::with_width(values, catsift_core::geometry::BREACH_BIN_WIDTH)?;
    rows.extend(h.bins().into_iter().map(
        |HistogramBin {
             bin_low,
             bin_high,
             count,
         }| HistogramRow {
            series,
            bin_low,
            bin_high,
            count,
        },
    ));
    Ok(())
}

/// Runs the selected methods and writes their reports, the distance
/// histogram and the summary. Returns the summary and the files written.
pub fn cmd_audit(cfg: &RunConfig) -> Result<(Summary, Vec<PathBuf>)> {
    cfg.validate_audit()?;
    let setup = Setup::from_config(cfg)?;
    let out = Output::new(cfg)?;
    let noncat = noncategory_distances(&setup.corpus, &setup.model)?;
    let mut files = Vec::new();
    let mut methods = Vec::new();
    let mut calibration = None;
    let mut hist = Vec::new();
    histogram_rows("category", &setup.model.member_distances, &mut hist)?;
    histogram_rows(
        "noncategory",
        &noncat.iter().map(|(_, d)| *d).collect::<Vec<_>>(),
        &mut hist,
    )?;

    if cfg.method.runs_rp() {
        let rp = run_rp(cfg, &setup)?;
        let ids: HashSet<&str> = rp.records.iter().map(|r| r.article_id.as_str()).collect();
        let flags = MethodFlags::from_selection("rp", &noncat, |id| ids.contains(id));
        methods.push(MethodSummary {
            method: "rp",
            flagged_count: rp.records.len(),
            blindness_pairs_count: flags.blindness_pairs_count,
            is_distance_prefix: flags.is_distance_prefix,
            parameters: serde_json::json!({
                "threshold_percent": cfg.rp_threshold_percent,
                "mode": cfg.rp_mode,
            }),
        });
        files.push(match cfg.output_format {
            OutputFormat::Jsonlines => out.records("rp_report", &rp.records)?,
            OutputFormat::Csv => {
                let rows: Vec<_> = rp
                    .records
                    .iter()
                    .map(|r| RpCsvRecord {
                        article_id: &r.article_id,
                        title: &r.title,
                        d_ea: r.d_ea,
                        rp_percent: r.rp_percent,
                        keywords: r.keywords.join(" "),
                    })
                    .collect();
                out.records("rp_report", &rows)?
            }
        });
        calibration = Some(rp.calibration);
    }

    if cfg.method.runs_hull() {
        let report = run_hull(cfg, &setup)?;
        let ids: HashSet<&str> = report
            .breaches
            .iter()
            .map(|b| b.article_id.as_str())
            .collect();
        let flags = MethodFlags::from_selection("hull", &noncat, |id| ids.contains(id));
        methods.push(MethodSummary {
            method: "hull",
            flagged_count: report.breaches.len(),
            blindness_pairs_count: report.blindness_pairs_count,
            is_distance_prefix: flags.is_distance_prefix,
            parameters: serde_json::json!({
                "projection": cfg.projection,
                "hull_vertices": report.hull_vertices,
                "bin_width": report.histogram.width,
            }),
        });
        let distances: Vec<f64> = report.breaches.iter().map(|b| b.d_to_centroid).collect();
        histogram_rows("hull_breaches", &distances, &mut hist)?;
        files.push(out.records::<Breach>("hull_report", &report.breaches)?);
    }

    if cfg.method.runs_hnsw() {
        let h = run_hnsw(cfg, &setup)?;
        let ids: HashSet<&str> = h.fishnet.intruders.iter().map(|n| n.id.as_str()).collect();
        let flags = MethodFlags::from_selection("hnsw", &noncat, |id| ids.contains(id));
        let records: Vec<HnswRecord> = h
            .fishnet
            .intruders
            .iter()
            .map(|n| HnswRecord {
                article_id: n.id.clone(),
                title: setup.title(&n.id),
                d_to_centroid: n.distance,
            })
            .collect();
        methods.push(MethodSummary {
            method: "hnsw",
            flagged_count: records.len(),
            blindness_pairs_count: flags.blindness_pairs_count,
            is_distance_prefix: flags.is_distance_prefix,
            parameters: serde_json::json!({
                "hnsw": cfg.hnsw,
                "final_k": h.fishnet.final_k,
                "rounds": h.fishnet.rounds,
                "members_retrieved": h.fishnet.members_retrieved,
                "radius": h.fishnet.radius,
                "exact_in_range": h.exact_in_range.len(),
                "layer_populations": h.layer_populations,
            }),
        });
        files.push(out.records("hnsw_report", &records)?);
    }

    files.push(out.records_as("histogram", OutputFormat::Csv, &hist)?);
    let summary = Summary {
        category_id: setup.model.category_id.clone(),
        articles: setup.corpus.len(),
        members: setup.model.member_ids.len(),
        d_c: setup.model.d_c,
        k: calibration.map(|c| c.k),
        calibration,
        methods,
    };
    files.push(out.document("summary.json", &summary)?);
    Ok((summary, files))
}

#[derive(Debug, Clone, Serialize)]
pub struct FishnetDiagnostic {
    pub radius: f64,
    pub fishnet_intruders: usize,
    pub exact_in_range: usize,
    pub members_retrieved: usize,
    pub members: usize,
    /// In range by exact scan but not returned by the fishnet.
    pub missed: Vec<Neighbor>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub category_id: String,
    pub noncategory_articles: usize,
    pub methods: Vec<MethodFlags>,
    pub fishnet_vs_exact: FishnetDiagnostic,
}

/// Runs all three methods and reports, per method, the flagged articles with
/// their true distances and the blindness pair count.
pub fn cmd_compare(cfg: &RunConfig) -> Result<(Comparison, PathBuf)> {
    cfg.validate_audit()?;
    let setup = Setup::from_config(cfg)?;
    let out = Output::new(cfg)?;
    let noncat = noncategory_distances(&setup.corpus, &setup.model)?;

    let rp = run_rp(cfg, &setup)?;
    let rp_ids: HashSet<&str> = rp.records.iter().map(|r| r.article_id.as_str()).collect();
    let hull = run_hull(cfg, &setup)?;
    let hull_ids: HashSet<&str> = hull
        .breaches
        .iter()
        .map(|b| b.article_id.as_str())
        .collect();
    let hnsw = run_hnsw(cfg, &setup)?;
    let hnsw_ids: HashSet<&str> = hnsw
        .fishnet
        .intruders
        .iter()
        .map(|n| n.id.as_str())
        .collect();

    let methods = vec![
        MethodFlags::from_selection("rp", &noncat, |id| rp_ids.contains(id)),
        MethodFlags::from_selection("hull", &noncat, |id| hull_ids.contains(id)),
        MethodFlags::from_selection("hnsw", &noncat, |id| hnsw_ids.contains(id)),
    ];
    let missed = hnsw
        .exact_in_range
        .iter()
        .filter(|n| !hnsw_ids.contains(n.id.as_str()))
        .cloned()
        .collect();
    let comparison = Comparison {
        category_id: setup.model.category_id.clone(),
        noncategory_articles: noncat.len(),
        methods,
        fishnet_vs_exact: FishnetDiagnostic {
            radius: hnsw.fishnet.radius,
            fishnet_intruders: hnsw.fishnet.intruders.len(),
            exact_in_range: hnsw.exact_in_range.len(),
            members_retrieved: hnsw.fishnet.members_retrieved,
            members: setup.model.member_ids.len(),
            missed,
        },
    };
    let path = out.document("compare.json", &comparison)?;
    Ok((comparison, path))
}

#[derive(Debug, Clone, Serialize)]
pub struct CohesionReport {
    pub label_source: String,
    pub k: usize,
    pub cluster_sizes: Vec<usize>,
    pub subcategories: usize,
    pub experiment: CohesionExperiment,
}

fn category_labels(corpus: &Corpus, categories: &[String]) -> Result<ClusterAssignment> {
    let mut labels = IndexMap::new();
    for article in corpus {
        let mut hit = categories
            .iter()
            .enumerate()
            .filter(|(_, c)| article.in_category(c));
        if let Some((l, _)) = hit.next() {
            if hit.next().is_some() {
                bail!(
                    "article `{}` belongs to more than one label category",
                    article.id
                );
            }
            labels.insert(article.id.clone(), l);
        }
    }
    Ok(ClusterAssignment::new(labels, categories.len())?)
}

pub fn cmd_cohesion(cfg: &RunConfig) -> Result<(CohesionReport, PathBuf)> {
    cfg.validate_cohesion()?;
    let corpus = load(cfg.corpus_path()?)?;
    let c = &cfg.cohesion;
    let (assignment, label_source) = if c.label_categories.is_empty() {
        let vectors = corpus_vectors(&corpus);
        (
            kmeans(&vectors, c.k, c.seed, c.max_iters)?,
            "kmeans".to_string(),
        )
    } else {
        (
            category_labels(&corpus, &c.label_categories)?,
            "categories".to_string(),
        )
    };
    let map = match &c.subcategory_path {
        Some(path) => load_subcategory_map(path)
            .with_context(|| format!("loading subcategory map {}", path.display()))?,
        None => SubcategoryMap::new(),
    };
    let experiment = cohesion_experiment(&corpus, &assignment, &map)?;
    let report = CohesionReport {
        label_source,
        k: assignment.k,
        cluster_sizes: assignment.sizes(),
        subcategories: map.len(),
        experiment,
    };
    let out = Output::new(cfg)?;
    let path = out.document("cohesion.json", &report)?;
    Ok((report, path))
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub category_id: String,
    pub members: usize,
    pub result: StabilityResult,
    pub min_shift: f64,
    pub max_shift: f64,
}

pub fn cmd_stability(cfg: &RunConfig) -> Result<(StabilityReport, PathBuf)> {
    cfg.validate_stability()?;
    let corpus = load(cfg.corpus_path()?)?;
    let model = build_category_model(&corpus, cfg.category_id()?)?;
    let s = &cfg.stability;
    let (result, shifts) = stability_shifts(&corpus, &model, s.n_samples, s.fraction, s.seed)?;
    let report = StabilityReport {
        category_id: model.category_id.clone(),
        members: model.member_ids.len(),
        min_shift: shifts.iter().copied().fold(f64::INFINITY, f64::min),
        max_shift: shifts.iter().copied().fold(0.0, f64::max),
        result,
    };
    let out = Output::new(cfg)?;
    let path = out.document("stability.json", &report)?;
    Ok((report, path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DemoKind {
    /// Category cloud, far background, planted intruders.
    Demo,
    /// Layout that blinds the hull and HNSW audits.
    Distorting,
    /// Two Gaussian clusters with subcategories.
    Cohesion,
}

/// Writes `corpus.jsonl`, `manifest.json` and a ready-to-use `catsift.toml`
/// (plus `subcategories.jsonl` for the cohesion fixture) into `dir`.
pub fn cmd_gen_demo(kind: DemoKind, seed: Option<u64>, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut cfg = RunConfig {
        corpus_path: Some("corpus.jsonl".into()),
        output_dir: "report".into(),
        ..RunConfig::default()
    };
    let mut files = Vec::new();
    let (fixture, kind_name, seed): (Option<Fixture>, &str, u64) = match kind {
        DemoKind::Demo => {
            let spec = DemoSpec {
                seed: seed.unwrap_or(DemoSpec::default().seed),
                ..DemoSpec::default()
            };
            (Some(demo::demo_corpus(&spec)?), "demo", spec.seed)
        }
        DemoKind::Distorting => {
            let seed = seed.unwrap_or(demo::DISTORTING_SEED);
            let p = demo::distorting_hnsw_params();
            cfg.hnsw.m = p.m;
            cfg.hnsw.ef_construction = p.ef_construction;
            cfg.hnsw.seed = seed;
            (Some(demo::distorting_corpus(seed)?), "distorting", seed)
        }
        DemoKind::Cohesion => {
            let seed = seed.unwrap_or(1);
            let (corpus, map) = demo::cohesion_corpus(seed, 8, 60, 10.0, 3)?;
            let corpus_path = dir.join("corpus.jsonl");
            save_corpus(&corpus, &corpus_path)?;
            let sub_path = dir.join("subcategories.jsonl");
            save_subcategory_map(&map, &sub_path)?;
            files.extend([corpus_path, sub_path]);
            cfg.category_id = Some("cluster-0".into());
            cfg.cohesion.subcategory_path = Some("subcategories.jsonl".into());
            cfg.cohesion.label_categories = vec!["cluster-0".into(), "cluster-1".into()];
            (None, "cohesion", seed)
        }
    };
    if let Some(fx) = fixture {
        let corpus_path = dir.join("corpus.jsonl");
        save_corpus(&fx.corpus, &corpus_path)?;
        let manifest_path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&fx.manifest(kind_name, seed))?;
        std::fs::write(&manifest_path, text + "\n")?;
        cfg.category_id = Some(fx.category_id.clone());
        files.extend([corpus_path, manifest_path]);
    }
    let cfg_path = dir.join("catsift.toml");
    std::fs::write(&cfg_path, cfg.to_toml()?)
        .with_context(|| format!("writing {}", cfg_path.display()))?;
    files.push(cfg_path);
    Ok(files)
}
