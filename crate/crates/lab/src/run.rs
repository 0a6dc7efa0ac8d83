//! Output directory, artifact hashing and the run manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;

/// Name of the manifest written at the end of every run.
pub const MANIFEST: &str = "manifest.json";

fn hex(d: impl AsRef<[u8]>) -> String {
    d.as_ref().iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a byte slice as lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(Sha256::digest(bytes))
}

/// One subcommand execution writing into an output directory.
pub struct Run {
    dir: PathBuf,
    files: Vec<String>,
    timings: BTreeMap<String, f64>,
    start: Instant,
}

#[derive(Serialize)]
struct FileEntry {
    name: String,
    sha256: String,
    bytes: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    subcommand: &'a str,
    versions: BTreeMap<&'static str, &'static str>,
    input_sha256: String,
    outputs_sha256: String,
    outputs: Vec<FileEntry>,
    timings_s: &'a BTreeMap<String, f64>,
    config: &'a Config,
}

impl Run {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Run {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            timings: BTreeMap::new(),
            start: Instant::now(),
        })
    }

    fn register(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.dir.join(name)
    }

    /// Write an artifact through a buffered writer.
    pub fn write<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.register(name);
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Write a pretty-printed JSON artifact.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    /// Run a stage and record its wall time.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f();
        self.timings.insert(name.to_string(), t.elapsed().as_secs_f64());
        out
    }

    /// Hash the artifacts and write the manifest; returns the combined output hash.
    pub fn finish(mut self, subcommand: &str, input: &[u8], cfg: &Config) -> Result<String> {
        self.timings.insert("total".into(), self.start.elapsed().as_secs_f64());
        let mut names = self.files.clone();
        names.sort();
        let mut all = Sha256::new();
        let mut outputs = Vec::new();
        for n in &names {
            let bytes = std::fs::read(self.dir.join(n))?;
            let h = sha256_hex(&bytes);
            all.update(n.as_bytes());
            all.update([0u8]);
            all.update(h.as_bytes());
            outputs.push(FileEntry {
                name: n.clone(),
                sha256: h,
                bytes: bytes.len() as u64,
            });
        }
        let outputs_sha256 = hex(all.finalize());
        let mut versions = BTreeMap::new();
        versions.insert("lab", env!("CARGO_PKG_VERSION"));
        versions.insert("wavelab", wavelab::VERSION);
        let m = Manifest {
            subcommand,
            versions,
            input_sha256: sha256_hex(input),
            outputs_sha256: outputs_sha256.clone(),
            outputs,
            timings_s: &self.timings,
            config: cfg,
        };
        let path = self.dir.join(MANIFEST);
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, &m)?;
        writeln!(w)?;
        w.flush()?;
        Ok(outputs_sha256)
    }
}
