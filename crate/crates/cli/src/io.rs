use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;

/// Output directory that records a checksum for every file written into it.
pub struct OutputDir {
    root: PathBuf,
    checksums: BTreeMap<String, String>,
    started: Instant,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutputDir { root: root.to_path_buf(), checksums: BTreeMap::new(), started: Instant::now() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Render a file in memory, then write it and record its checksum.
    pub fn write<F>(&mut self, name: &str, render: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        render(&mut buf).with_context(|| format!("rendering {name}"))?;
        let path = self.path(name);
        fs::write(&path, &buf).with_context(|| format!("writing {}", path.display()))?;
        self.checksums.insert(name.to_string(), hex::encode(Sha256::digest(&buf)));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |b| {
            serde_json::to_writer_pretty(&mut *b, value)?;
            b.push(b'\n');
            Ok(())
        })
    }

    /// Write `manifest.json` via a temporary file and rename.
    pub fn finish(self, command: &str, cfg: &Config, threads: usize, steps: u64) -> Result<()> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_hash: cfg.hash(),
            seed: cfg.seed(),
            threads,
            steps,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            outputs: &self.checksums,
        };
        let tmp = self.path(".manifest.json.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp).with_context(|| format!("writing {}", tmp.display()))?);
            serde_json::to_writer_pretty(&mut w, &manifest)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        fs::rename(&tmp, self.path("manifest.json")).context("finalizing manifest")?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    config_hash: String,
    seed: u64,
    threads: usize,
    steps: u64,
    wall_clock_seconds: f64,
    outputs: &'a BTreeMap<String, String>,
}

pub fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

pub fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}
