//! `afk train`: fit a classifier, write the checkpoint and per-epoch metrics.

use afk_core::dsp::csvio::{fmt_f64, write_csv};
use afk_core::nn::{accuracy, checkpoint, TrainConfig};
use afk_core::{Arch, Model, SeedStreams, Split};
use anyhow::Result;

use crate::common::{load_data, out_dir, Manifest};
use crate::config::RunConfig;

pub fn run(cfg: &RunConfig) -> Result<()> {
    let arch: Arch = cfg.parse("model")?;
    let seed: u64 = cfg.parse("seed")?;
    let tc = TrainConfig {
        epochs: cfg.parse("epochs")?,
        batch_size: cfg.parse("batch-size")?,
        rho: cfg.parse("rho")?,
        eps: cfg.parse("eps")?,
        lr: cfg.parse("lr")?,
        seed,
    };
    let out = out_dir(cfg)?;
    let data = load_data(cfg)?;
    let mut rng = SeedStreams::new(seed).rng("init");
    let mut model = Model::new(
        arch,
        data.clip_len(),
        data.sample_rate(),
        data.num_classes(),
        &mut rng,
    )?;
    let report = model.train(&data, &tc)?;
    checkpoint::quantize(&mut model);

    let mut manifest = Manifest::new();
    manifest.note(format!("corpus sha256={}", data.content_hash()));
    let ck = out.join("model.afk");
    checkpoint::save(&model, &ck)?;
    manifest.output(&ck);

    let metrics = out.join("metrics.csv");
    write_csv(
        &metrics,
        &["epoch", "loss", "train_acc", "test_acc"],
        report.epochs.iter().map(|e| {
            vec![
                (e.epoch + 1).to_string(),
                fmt_f64(e.loss),
                fmt_f64(e.train_acc),
                e.test_acc.map(fmt_f64).unwrap_or_default(),
            ]
        }),
    )?;
    manifest.output(&metrics);

    let test = data.subset(Split::Test);
    if let Ok(test) = test {
        let acc = accuracy(&model, &test)?;
        manifest.note(format!("checkpoint test accuracy {acc}"));
        println!("test accuracy {acc:.4} ({} clips)", test.len());
    }
    manifest.finish(cfg, &out)?;
    println!("wrote {}", ck.display());
    Ok(())
}
