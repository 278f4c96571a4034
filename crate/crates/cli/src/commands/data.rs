//! `afk synth-data` and `afk ingest-data`: corpora on disk as
//! `<class>/<clip>.wav` plus an `index.csv` of `file, class, split`.

use std::fs;
use std::path::Path;

use afk_core::dsp::csvio::write_csv;
use afk_core::dsp::wav::write_wav;
use afk_core::nn::{ingest_corpus, synth_keywords_split, IngestOptions};
use afk_core::{LabeledDataset, Split};
use anyhow::Result;

use crate::common::{out_dir, require_existing, Manifest};
use crate::config::RunConfig;

fn split_tag(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Test => "test",
    }
}

fn write_corpus(
    data: &LabeledDataset,
    names: &[String],
    out: &Path,
    manifest: &mut Manifest,
) -> Result<()> {
    for class in &data.class_names {
        fs::create_dir_all(out.join(class))?;
    }
    for (clip, name) in data.clips.iter().zip(names) {
        let p = out.join(name);
        write_wav(&p, clip)?;
        manifest.output(p);
    }
    let index = out.join("index.csv");
    write_csv(
        &index,
        &["file", "class", "split"],
        names.iter().enumerate().map(|(i, n)| {
            vec![
                n.clone(),
                data.class_names[data.labels[i]].clone(),
                split_tag(data.splits[i]).to_string(),
            ]
        }),
    )?;
    manifest.output(index);
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let out = out_dir(cfg)?;
    let data = synth_keywords_split(
        cfg.parse("classes")?,
        cfg.parse("per-class")?,
        cfg.parse("data-seed")?,
        cfg.parse("test-fraction")?,
    )?;
    let mut per_class = vec![0usize; data.num_classes()];
    let names: Vec<String> = data
        .labels
        .iter()
        .map(|&l| {
            per_class[l] += 1;
            format!("{}/{:05}.wav", data.class_names[l], per_class[l] - 1)
        })
        .collect();
    let mut manifest = Manifest::new();
    manifest.note(format!("corpus sha256={}", data.content_hash()));
    write_corpus(&data, &names, &out, &mut manifest)?;
    manifest.finish(cfg, &out)?;
    println!("wrote {} clips to {}", data.len(), out.display());
    Ok(())
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let root = cfg.path("root")?;
    require_existing(&[root.clone()])?;
    let out = out_dir(cfg)?;
    let opts = IngestOptions {
        target_rate: Some(cfg.parse("target-rate")?),
        clip_secs: cfg.parse("clip-secs")?,
        test_fraction: cfg.parse("test-fraction")?,
    };
    let report = ingest_corpus(&root, &opts)?;
    let mut manifest = Manifest::new();
    manifest.input(&root);
    for s in &report.skipped {
        eprintln!("warning: skipped unreadable clip {}", s.display());
        manifest.note(format!("skipped {}", s.display()));
    }
    manifest.note(format!("corpus sha256={}", report.dataset.content_hash()));
    write_corpus(&report.dataset, &report.files, &out, &mut manifest)?;
    manifest.finish(cfg, &out)?;
    println!(
        "ingested {} clips in {} classes ({} skipped)",
        report.dataset.len(),
        report.dataset.num_classes(),
        report.skipped.len()
    );
    Ok(())
}
