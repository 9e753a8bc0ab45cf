//! Deterministic output files: CSV with a commented parameter header and a
//! JSON summary, each written through a temporary file and renamed.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::{Format, RunConfig};

/// Float with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Columnar table destined for a CSV file.
pub struct Csv {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn render(&self, header: &str) -> String {
        let mut out = String::from(header);
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Comment block echoing the effective configuration and its hash.
pub fn header(config: &RunConfig, subcommand: &str, problem_hash: &str) -> String {
    let mut h = String::new();
    writeln!(h, "# vibfano {} {subcommand}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(h, "# config_hash = {}", config.hash()).unwrap();
    writeln!(h, "# problem_hash = {problem_hash}").unwrap();
    for line in config.to_toml().lines().filter(|l| !l.trim().is_empty()) {
        writeln!(h, "# {line}").unwrap();
    }
    h
}

/// Writes `contents` to `dir/name` atomically.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let target = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(&target)
        .with_context(|| format!("renaming into {}", target.display()))?;
    Ok(target)
}

/// Writes the CSV and JSON outputs requested by the config.
pub struct Writer<'a> {
    pub config: &'a RunConfig,
    pub subcommand: &'a str,
    pub problem_hash: String,
    pub written: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    pub fn new(config: &'a RunConfig, subcommand: &'a str, problem_hash: String) -> Self {
        Self {
            config,
            subcommand,
            problem_hash,
            written: Vec::new(),
        }
    }

    pub fn csv(&mut self, name: &str, table: &Csv) -> Result<()> {
        if self.config.wants(Format::Csv) {
            let text = table.render(&header(self.config, self.subcommand, &self.problem_hash));
            self.written.push(write_atomic(&self.config.output.directory, name, &text)?);
        }
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, summary: &T) -> Result<()> {
        if self.config.wants(Format::Json) {
            #[derive(Serialize)]
            struct Envelope<'b, T> {
                subcommand: &'b str,
                version: &'b str,
                config_hash: String,
                problem_hash: &'b str,
                config: &'b RunConfig,
                summary: &'b T,
            }
            let env = Envelope {
                subcommand: self.subcommand,
                version: env!("CARGO_PKG_VERSION"),
                config_hash: self.config.hash(),
                problem_hash: &self.problem_hash,
                config: self.config,
                summary,
            };
            let mut text = serde_json::to_string_pretty(&env)?;
            text.push('\n');
            self.written.push(write_atomic(&self.config.output.directory, name, &text)?);
        }
        Ok(())
    }
}
