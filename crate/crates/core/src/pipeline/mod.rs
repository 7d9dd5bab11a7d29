//! File-based pipeline stages behind the `epimob` binary.
//!
//! Every stage reads the artifacts of earlier stages from disk, writes its own
//! outputs atomically (temporary file, then rename) and records a JSON
//! manifest with its parameters and the SHA-256 digests of inputs and
//! outputs. Nothing time-dependent goes into any artifact, so reruns with
//! the same configuration are byte-identical.

mod config;
mod report;
mod stages;
pub mod svg;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{
    DelayParams, FdaParams, FlowsParams, FofParams, Paths, PipelineConfig, RtParams,
};
pub use report::report;
pub use stages::{
    delay, fda_fcc, fda_register, fda_smooth, flows_ingest, fof, rt, simulate, DelayFit, FofSummary,
    SmoothSelection,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    FlowsIngest,
    Simulate,
    Rt,
    FdaSmooth,
    FdaFcc,
    FdaRegister,
    Fof,
    Delay,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::FlowsIngest => "flows",
            Stage::Simulate => "simulate",
            Stage::Rt => "rt",
            Stage::FdaSmooth => "fda-smooth",
            Stage::FdaFcc => "fda-fcc",
            Stage::FdaRegister => "fda-register",
            Stage::Fof => "fof",
            Stage::Delay => "delay",
            Stage::Report => "report",
        }
    }
}

/// What a stage wrote, relative to its output location.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageReport {
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<StageReport> {
    cfg.validate()?;
    match stage {
        Stage::FlowsIngest => flows_ingest(cfg),
        Stage::Simulate => simulate(cfg),
        Stage::Rt => rt(cfg),
        Stage::FdaSmooth => fda_smooth(cfg),
        Stage::FdaFcc => fda_fcc(cfg),
        Stage::FdaRegister => fda_register(cfg),
        Stage::Fof => fof(cfg),
        Stage::Delay => delay(cfg),
        Stage::Report => report(cfg),
    }
}

/// Simulation followed by every analysis stage.
pub fn run_synthetic(cfg: &PipelineConfig) -> Result<Vec<StageReport>> {
    [
        Stage::Simulate,
        Stage::Rt,
        Stage::FdaSmooth,
        Stage::FdaFcc,
        Stage::FdaRegister,
        Stage::Fof,
        Stage::Delay,
        Stage::Report,
    ]
    .into_iter()
    .map(|s| run_stage(s, cfg))
    .collect()
}

/// 0 success, 2 missing prerequisite, 3 parameter out of range, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::MissingArtifact(_) => 2,
        Error::InvalidParameter(_) => 3,
        _ => 1,
    }
}

pub(crate) fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact(path.to_path_buf()))
    }
}

/// Writes `bytes` to a sibling temporary file, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a file, or of every file below a directory in path order.
pub fn digest_path(path: &Path) -> Result<String> {
    if path.is_file() {
        return Ok(sha256_hex(&fs::read(path)?));
    }
    let mut files = Vec::new();
    collect_files(path, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        if f.file_name().is_some_and(|n| n == "manifest.json") {
            continue;
        }
        h.update(f.strip_prefix(path).unwrap_or(&f).to_string_lossy().as_bytes());
        h.update(fs::read(&f)?);
    }
    Ok(hex::encode(h.finalize()))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Unit ids of the `<unit>.csv` series files in a directory, sorted.
pub fn list_units(dir: &Path) -> Result<Vec<String>> {
    require(dir)?;
    let mut units = BTreeSet::new();
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == "csv") {
            if let Some(stem) = p.file_stem() {
                units.insert(stem.to_string_lossy().into_owned());
            }
        }
    }
    Ok(units.into_iter().collect())
}

/// Collects outputs under one root and writes the stage manifest last.
pub(crate) struct Outputs {
    root: PathBuf,
    written: Vec<(PathBuf, String)>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a, P: Serialize> {
    stage: &'a str,
    version: &'a str,
    parameters: &'a P,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    warnings: &'a [String],
}

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

impl Outputs {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Outputs { root: root.into(), written: Vec::new(), warnings: Vec::new() }
    }

    pub fn put(&mut self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
        let rel = rel.as_ref().to_path_buf();
        write_atomic(&self.root.join(&rel), bytes)?;
        self.written.push((rel, sha256_hex(bytes)));
        Ok(())
    }

    pub fn put_json<T: Serialize>(&mut self, rel: impl AsRef<Path>, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.put(rel, &bytes)
    }

    /// Writes the manifest to `manifest` (relative to the root) and returns the report.
    pub fn finish<P: Serialize>(
        self,
        stage: Stage,
        manifest: impl AsRef<Path>,
        parameters: &P,
        inputs: &[&Path],
    ) -> Result<StageReport> {
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(FileDigest {
                    path: p.to_string_lossy().into_owned(),
                    sha256: digest_path(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let m = Manifest {
            stage: stage.name(),
            version: env!("CARGO_PKG_VERSION"),
            parameters,
            inputs,
            outputs: self
                .written
                .iter()
                .map(|(p, d)| FileDigest { path: p.to_string_lossy().into_owned(), sha256: d.clone() })
                .collect(),
            warnings: &self.warnings,
        };
        let mut bytes = serde_json::to_vec_pretty(&m)?;
        bytes.push(b'\n');
        write_atomic(&self.root.join(manifest), &bytes)?;
        Ok(StageReport {
            outputs: self.written.into_iter().map(|(p, _)| p).collect(),
            warnings: self.warnings,
        })
    }
}
