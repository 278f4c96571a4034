//! Plumbing shared by the subcommands: dataset loading, input checks,
//! hashing and manifests.

use std::fs;
use std::path::{Path, PathBuf};

use afk_core::nn::{checkpoint, ingest_corpus, synth_keywords_split, IngestOptions};
use afk_core::{LabeledDataset, Model, Split};
use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.cfg";

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Fails with every missing path listed, before any work starts.
pub fn require_existing(paths: &[PathBuf]) -> Result<()> {
    let missing: Vec<String> = paths
        .iter()
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        bail!("missing inputs: {}", missing.join(", "));
    }
    Ok(())
}

pub fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg.path("out")?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

/// The dataset named by the `data` keys.
pub fn load_data(cfg: &RunConfig) -> Result<LabeledDataset> {
    let source = cfg.str("data")?;
    let tf = |auto: f64| -> Result<f64> {
        match cfg.str("test-fraction")? {
            "auto" => Ok(auto),
            _ => cfg.parse("test-fraction"),
        }
    };
    if source == "synth" {
        Ok(synth_keywords_split(
            cfg.parse("classes")?,
            cfg.parse("per-class")?,
            cfg.parse("data-seed")?,
            tf(afk_core::nn::data::SYNTH_TEST_FRACTION)?,
        )?)
    } else {
        let root = PathBuf::from(source);
        require_existing(&[root.clone()])?;
        let opts = IngestOptions {
            target_rate: Some(cfg.parse("target-rate")?),
            clip_secs: cfg.parse("clip-secs")?,
            test_fraction: tf(IngestOptions::default().test_fraction)?,
        };
        let report = ingest_corpus(&root, &opts)?;
        for s in &report.skipped {
            eprintln!("warning: skipped unreadable clip {}", s.display());
        }
        Ok(report.dataset)
    }
}

pub fn select_split(data: &LabeledDataset, split: &str) -> Result<LabeledDataset> {
    Ok(match split {
        "train" => data.subset(Split::Train)?,
        "test" => data.subset(Split::Test)?,
        "all" => data.clone(),
        other => bail!("unknown split `{other}` (expected train|test|all)"),
    })
}

pub fn load_model(path: &Path) -> Result<Model> {
    checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

/// Expands directories into their `*.<ext>` files in name order. Paths
/// that are not directories pass through unchecked.
pub fn expand(paths: &[String], ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        let p = PathBuf::from(p);
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(&p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|e| e == ext))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p);
        }
    }
    Ok(out)
}

pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Records what a command read and wrote. The manifest is itself a config
/// file: `afk <command> --config manifest.cfg` reruns the command.
pub struct Manifest {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    notes: Vec<String>,
}

impl Manifest {
    pub fn new() -> Self {
        Self {
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn input(&mut self, p: impl Into<PathBuf>) {
        self.inputs.push(p.into());
    }

    pub fn output(&mut self, p: impl Into<PathBuf>) {
        self.outputs.push(p.into());
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    /// Writes the manifest; fails listing any declared output that is absent.
    pub fn finish(self, cfg: &RunConfig, dir: &Path) -> Result<()> {
        let missing: Vec<String> = self
            .outputs
            .iter()
            .filter(|p| !p.exists())
            .map(|p| p.display().to_string())
            .collect();
        if !missing.is_empty() {
            for m in &missing {
                eprintln!("missing output: {m}");
            }
            bail!("{} output(s) not written", missing.len());
        }
        let mut text = format!(
            "# afk {} manifest; rerun with: afk {} --config {MANIFEST}\n",
            env!("CARGO_PKG_VERSION"),
            cfg.cmd.name()
        );
        for n in &self.notes {
            text.push_str(&format!("# {n}\n"));
        }
        for p in &self.inputs {
            text.push_str(&format!(
                "# input {} sha256={}\n",
                p.display(),
                hash_path(p)?
            ));
        }
        for p in &self.outputs {
            let name = p.strip_prefix(dir).unwrap_or(p);
            text.push_str(&format!(
                "# output {} sha256={}\n",
                name.display(),
                hash_path(p)?
            ));
        }
        text.push_str(&cfg.to_text());
        fs::write(dir.join(MANIFEST), text)?;
        Ok(())
    }
}

/// File digest, or a digest over the sorted file digests of a directory.
fn hash_path(p: &Path) -> Result<String> {
    if p.is_dir() {
        let mut h = Sha256::new();
        let mut entries: Vec<PathBuf> = walk(p)?;
        entries.sort();
        for e in entries {
            h.update(e.strip_prefix(p).unwrap_or(&e).to_string_lossy().as_bytes());
            h.update(sha256_file(&e)?.as_bytes());
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    } else {
        sha256_file(p)
    }
}

fn walk(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_dir() {
            out.extend(walk(&p)?);
        } else {
            out.push(p);
        }
    }
    Ok(out)
}
