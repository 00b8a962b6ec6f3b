//! `catsift` command-line front end: configuration, report files and the
//! subcommands built on `catsift-core`.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use anyhow::Result;
use catsift_core::RpMode;
use clap::{Args, Parser, Subcommand};

use crate::commands::DemoKind;
use crate::config::{Method, OutputFormat, ProjectionSource, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "catsift",
    version,
    about = "Audit category membership in an embedding space"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Flag non-category articles with the RP filter, hull breaches and/or
    /// HNSW fishnet retrieval.
    Audit(RunArgs),
    /// Run all three methods and report their blindness against true distances.
    Compare(RunArgs),
    /// Silhouette before and after adding subcategory mean vectors.
    Cohesion(RunArgs),
    /// Centroid stability under member resampling.
    Stability(RunArgs),
    /// Write a synthetic corpus, its manifest and a matching config.
    GenDemo(GenDemoArgs),
}

#[derive(Debug, Args)]
pub struct GenDemoArgs {
    #[arg(long, value_enum, default_value = "demo")]
    pub kind: DemoKind,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, short = 'o', default_value = "demo")]
    pub out_dir: PathBuf,
}

/// Flags overriding the config file. Commands ignore flags they do not use.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// TOML config file; flags win over its values.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub category: Option<String>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// RP threshold in percent, in (0, 100].
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_parser = parse_rp_mode)]
    pub rp_mode: Option<RpMode>,
    #[arg(long)]
    pub keywords: Option<usize>,
    #[arg(long)]
    pub hnsw_m: Option<usize>,
    #[arg(long)]
    pub ef_construction: Option<usize>,
    #[arg(long)]
    pub ef_search: Option<usize>,
    #[arg(long)]
    pub hnsw_seed: Option<u64>,
    /// Read 2D coordinates from this file instead of computing PCA.
    #[arg(long)]
    pub projection_file: Option<PathBuf>,
    #[arg(long)]
    pub sample_size: Option<usize>,
    #[arg(long)]
    pub sample_seed: Option<u64>,
    #[arg(long, short = 'o')]
    pub output_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    #[arg(long)]
    pub subcategories: Option<PathBuf>,
    /// Comma-separated categories used as cluster labels.
    #[arg(long, value_delimiter = ',')]
    pub label_categories: Option<Vec<String>>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub kmeans_seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub stability_seed: Option<u64>,
}

fn parse_rp_mode(s: &str) -> Result<RpMode, String> {
    match s {
        "median" => Ok(RpMode::Median),
        "farthest" => Ok(RpMode::Farthest),
        _ => Err(format!(
            "unknown rp mode `{s}` (expected median or farthest)"
        )),
    }
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:expr => $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        if let Some(p) = &self.corpus {
            cfg.corpus_path = Some(p.clone());
        }
        if let Some(c) = &self.category {
            cfg.category_id = Some(c.clone());
        }
        if let Some(p) = &self.projection_file {
            cfg.projection = ProjectionSource::File(p.clone());
        }
        if let Some(n) = self.sample_size {
            cfg.sample_size = Some(n);
        }
        if let Some(p) = &self.subcategories {
            cfg.cohesion.subcategory_path = Some(p.clone());
        }
        set!(self.method => cfg.method);
        set!(self.threshold => cfg.rp_threshold_percent);
        set!(self.rp_mode => cfg.rp_mode);
        set!(self.keywords => cfg.keywords);
        set!(self.hnsw_m => cfg.hnsw.m);
        set!(self.ef_construction => cfg.hnsw.ef_construction);
        set!(self.ef_search => cfg.hnsw.ef_search);
        set!(self.hnsw_seed => cfg.hnsw.seed);
        set!(self.sample_seed => cfg.sample_seed);
        set!(self.output_dir => cfg.output_dir);
        set!(self.format => cfg.output_format);
        set!(self.label_categories => cfg.cohesion.label_categories);
        set!(self.clusters => cfg.cohesion.k);
        set!(self.kmeans_seed => cfg.cohesion.seed);
        set!(self.samples => cfg.stability.n_samples);
        set!(self.fraction => cfg.stability.fraction);
        set!(self.stability_seed => cfg.stability.seed);
        Ok(cfg)
    }
}

/// Runs a parsed command line, printing a short summary to stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Audit(args) => {
            let cfg = args.resolve()?;
            let (summary, files) = commands::cmd_audit(&cfg)?;
            println!(
                "category {} (d_c = {:.4})",
                summary.category_id, summary.d_c
            );
            for m in &summary.methods {
                println!(
                    "{:<5} flagged {:>5}  blindness pairs {}",
                    m.method, m.flagged_count, m.blindness_pairs_count
                );
            }
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Compare(args) => {
            let cfg = args.resolve()?;
            let (cmp, path) = commands::cmd_compare(&cfg)?;
            for m in &cmp.methods {
                println!(
                    "{:<5} flagged {:>5}  blindness pairs {:>7}  distance prefix {}",
                    m.method,
                    m.flagged.len(),
                    m.blindness_pairs_count,
                    m.is_distance_prefix
                );
            }
            let d = &cmp.fishnet_vs_exact;
            println!(
                "fishnet returned {} of {} in-range articles ({} missed)",
                d.fishnet_intruders,
                d.exact_in_range,
                d.missed.len()
            );
            println!("wrote {}", path.display());
        }
        Command::Cohesion(args) => {
            let cfg = args.resolve()?;
            let (report, path) = commands::cmd_cohesion(&cfg)?;
            let e = &report.experiment;
            println!(
                "silhouette base {:.6} augmented {:.6}",
                e.score_base, e.score_augmented
            );
            match e.relative_change {
                Some(c) => println!("relative change {:+.4}", c),
                None => println!("relative change undefined (base score 0)"),
            }
            println!("wrote {}", path.display());
        }
        Command::Stability(args) => {
            let cfg = args.resolve()?;
            let (report, path) = commands::cmd_stability(&cfg)?;
            let r = &report.result;
            println!(
                "{} resamples of {} members: mean shift {:.6}, std {:.6}",
                r.n_samples, r.sample_size, r.mean_shift, r.std_shift
            );
            println!("wrote {}", path.display());
        }
        Command::GenDemo(args) => {
            for f in commands::cmd_gen_demo(args.kind, args.seed, &args.out_dir)? {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}
