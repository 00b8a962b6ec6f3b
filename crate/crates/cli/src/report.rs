//! Report files. Each file starts with the resolved run configuration: a
//! `{"config": ...}` line for line-delimited output, a `# config: ...`
//! comment line for CSV.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::{OutputFormat, RunConfig};

#[derive(Serialize)]
struct Header<'a> {
    config: &'a RunConfig,
}

pub struct Output<'a> {
    pub dir: &'a Path,
    pub format: OutputFormat,
    pub config: &'a RunConfig,
}

impl<'a> Output<'a> {
    pub fn new(config: &'a RunConfig) -> Result<Self> {
        std::fs::create_dir_all(&config.output_dir)
            .with_context(|| format!("creating output dir {}", config.output_dir.display()))?;
        Ok(Self {
            dir: &config.output_dir,
            format: config.output_format,
            config,
        })
    }

    fn create(&self, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok((path, BufWriter::new(file)))
    }

    /// Writes `stem.jsonl` or `stem.csv` depending on the configured format.
    pub fn records<T: Serialize>(&self, stem: &str, records: &[T]) -> Result<PathBuf> {
        self.records_as(stem, self.format, records)
    }

    pub fn records_as<T: Serialize>(
        &self,
        stem: &str,
        format: OutputFormat,
        records: &[T],
    ) -> Result<PathBuf> {
        let (path, mut out) = self.create(&format!("{stem}.{}", format.extension()))?;
        match format {
            OutputFormat::Jsonlines => {
                serde_json::to_writer(
                    &mut out,
                    &Header {
                        config: self.config,
                    },
                )?;
                out.write_all(b"\n")?;
                for r in records {
                    serde_json::to_writer(&mut out, r)?;
                    out.write_all(b"\n")?;
                }
            }
            OutputFormat::Csv => {
                writeln!(out, "# config: {}", serde_json::to_string(self.config)?)?;
                let mut w = csv::Writer::from_writer(&mut out);
                for r in records {
                    w.serialize(r)?;
                }
                w.flush()?;
            }
        }
        out.flush()?;
        Ok(path)
    }

    /// Writes a single JSON document `name` with the config embedded.
    pub fn document<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Doc<'a, T> {
            config: &'a RunConfig,
            #[serde(flatten)]
            body: &'a T,
        }
        let (path, mut out) = self.create(name)?;
        serde_json::to_writer_pretty(
            &mut out,
            &Doc {
                config: self.config,
                body,
            },
        )?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(path)
    }
}
