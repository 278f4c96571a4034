//! `afk evaluate`: SNR, shift, transfer and channel sweeps over stored attacks.

use std::path::{Path, PathBuf};

use afk_core::dsp::csvio::{fmt_f64, write_csv};
use afk_core::eval::{
    channel_fool_rate, shift_grid, shift_sweep, snr_grid, snr_sweep, transfer_matrix,
    write_regions_csv, write_shift_csv, write_snr_csv, write_transfer_csv, ChannelParams,
    Evaluator, SweepMeta, TransferAttack,
};
use afk_core::{AttackArtifact, Classifier, Domain, LabeledDataset, Model};
use anyhow::{bail, Context, Result};

use crate::common::{
    expand, load_data, load_model, out_dir, require_existing, select_split, stem, Manifest,
};
use crate::config::RunConfig;

/// A loaded attack artifact with its path.
pub struct Attack {
    pub path: PathBuf,
    pub artifact: AttackArtifact,
    pub v: Vec<f64>,
}

pub fn load_attacks(paths: &[PathBuf], clip_len: usize) -> Result<Vec<Attack>> {
    paths
        .iter()
        .map(|p| {
            let artifact = AttackArtifact::load(p)
                .with_context(|| format!("loading attack {}", p.display()))?;
            if artifact.signal_len != clip_len {
                bail!(
                    "attack {} renders {} samples, the data has {}",
                    p.display(),
                    artifact.signal_len,
                    clip_len
                );
            }
            let v = artifact.render()?;
            Ok(Attack {
                path: p.clone(),
                artifact,
                v,
            })
        })
        .collect()
}

/// The `model = <path>` line of an attack's config echo, as a file stem.
pub fn source_model(a: &AttackArtifact) -> Option<String> {
    a.config_echo.lines().find_map(|l| {
        let (k, v) = l.split_once('=')?;
        (k.trim() == "model").then(|| stem(Path::new(v.trim())))
    })
}

/// The shared domain of `attacks`, if there is one.
fn common_domain(attacks: &[Attack]) -> Option<Domain> {
    let d = attacks.first()?.artifact.domain;
    attacks.iter().all(|a| a.artifact.domain == d).then_some(d)
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let sweep = cfg.str("sweep")?.to_string();
    if !["snr", "shift", "transfer", "channel"].contains(&sweep.as_str()) {
        bail!("unknown sweep `{sweep}` (expected snr|shift|transfer|channel)");
    }
    let model_paths = expand(&cfg.list("models"), "afk")?;
    let attack_paths = expand(&cfg.list("attacks"), "afa")?;
    if model_paths.is_empty() {
        bail!("`models` is empty");
    }
    if attack_paths.is_empty() {
        bail!("`attacks` is empty");
    }
    require_existing(&[model_paths.clone(), attack_paths.clone()].concat())?;
    if sweep != "transfer" && model_paths.len() != 1 {
        bail!(
            "the {sweep} sweep takes exactly one model, got {}",
            model_paths.len()
        );
    }
    let out = out_dir(cfg)?;
    let data = select_split(&load_data(cfg)?, cfg.str("split")?)?;
    let models: Vec<Model> = model_paths
        .iter()
        .map(|p| load_model(p))
        .collect::<Result<_>>()?;
    let attacks = load_attacks(&attack_paths, data.clip_len())?;
    let vs: Vec<Vec<f64>> = attacks.iter().map(|a| a.v.clone()).collect();

    let mut manifest = Manifest::new();
    manifest.note(format!("corpus sha256={}", data.content_hash()));
    for p in model_paths.iter().chain(&attack_paths) {
        manifest.input(p);
    }
    let meta = SweepMeta {
        model_id: stem(&model_paths[0]),
        domain: common_domain(&attacks),
        snr_db: None,
    };
    match sweep.as_str() {
        "snr" => {
            let grid: Vec<f64> = match cfg.list("snr-grid") {
                g if g.is_empty() => snr_grid(),
                g => g
                    .iter()
                    .map(|s| {
                        s.parse()
                            .with_context(|| format!("bad snr-grid value `{s}`"))
                    })
                    .collect::<Result<_>>()?,
            };
            let eval = Evaluator::new(&models[0], &data)?;
            let r = snr_sweep(&eval, &vs, &grid, meta)?;
            let (snr, regions) = (out.join("snr.csv"), out.join("regions.csv"));
            write_snr_csv(&snr, &r)?;
            write_regions_csv(&regions, &r.regions)?;
            for g in &r.regions {
                println!(
                    "region {}: mean fool rate {:.3} over {} points",
                    g.region.tag(),
                    g.fool_rate_mean,
                    g.points
                );
            }
            manifest.output(snr);
            manifest.output(regions);
        }
        "shift" => {
            let shifts = shift_grid(data.clip_len(), cfg.parse("grid")?)?;
            let eval = Evaluator::new(&models[0], &data)?;
            let r = shift_sweep(&eval, &vs, &shifts, meta)?;
            let (shift, per) = (out.join("shift.csv"), out.join("shift_attacks.csv"));
            write_shift_csv(&shift, &r)?;
            write_csv(
                &per,
                &["attack", "fool_rate_std"],
                attacks
                    .iter()
                    .zip(&r.per_attack_std)
                    .map(|(a, s)| vec![a.path.display().to_string(), fmt_f64(*s)]),
            )?;
            println!(
                "mean per-attack fool rate std across shifts: {:.4}",
                r.mean_per_attack_std
            );
            manifest.output(shift);
            manifest.output(per);
        }
        "transfer" => {
            let sources = attacks
                .iter()
                .map(|a| {
                    let source_model = source_model(&a.artifact).with_context(|| {
                        format!("attack {} does not name its model", a.path.display())
                    })?;
                    Ok(TransferAttack {
                        source_model,
                        domain: a.artifact.domain,
                        v: a.v.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let targets: Vec<(String, &dyn Classifier)> = model_paths
                .iter()
                .zip(&models)
                .map(|(p, m)| (stem(p), m as &dyn Classifier))
                .collect();
            let entries = transfer_matrix(&sources, &targets, &data)?;
            let path = out.join("transfer.csv");
            write_transfer_csv(&path, &entries)?;
            manifest.output(path);
        }
        _ => {
            let name = cfg.str("channel")?;
            let ch = ChannelParams::preset(name)?;
            ch.validate(data.sample_rate())?;
            let path = out.join("channel.csv");
            write_channel_csv(
                &path,
                &models[0],
                &data,
                &attacks,
                name,
                &ch,
                cfg.parse("seed")?,
            )?;
            manifest.output(path);
        }
    }
    manifest.finish(cfg, &out)
}

/// `attack, domain, channel, fool_rate_direct, fool_rate_channel`.
fn write_channel_csv(
    path: &Path,
    model: &Model,
    data: &LabeledDataset,
    attacks: &[Attack],
    name: &str,
    ch: &ChannelParams,
    seed: u64,
) -> Result<()> {
    let eval = Evaluator::new(model, data)?;
    let rows = attacks
        .iter()
        .map(|a| {
            let direct = eval.fool_rate(&a.v)?;
            let through = channel_fool_rate(&eval, &a.v, ch, seed)?;
            Ok(vec![
                a.path.display().to_string(),
                a.artifact.domain.tag().to_string(),
                name.to_string(),
                fmt_f64(direct),
                fmt_f64(through),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    write_csv(
        path,
        &[
            "attack",
            "domain",
            "channel",
            "fool_rate_direct",
            "fool_rate_channel",
        ],
        rows,
    )?;
    Ok(())
}
