//! `afk attack`: build a universal perturbation against one checkpoint.

use afk_core::attack::{
    fool_report, write_history_csv, write_updates_csv, AttackArtifact, AttackConfig,
    DeepFoolConfig, SnrConvention,
};
use afk_core::dsp::csvio::{fmt_f64, write_csv};
use afk_core::dsp::wav::write_wav;
use afk_core::{
    mapping_for, universal_attack, Classifier, Domain, LabeledDataset, Split, Waveform,
};
use anyhow::{bail, Result};

use crate::common::{load_data, load_model, out_dir, require_existing, Manifest};
use crate::config::RunConfig;

/// `n` clips of `data` at evenly spaced positions, or all of them.
pub fn spread(data: &LabeledDataset, n: Option<usize>) -> Result<LabeledDataset> {
    match n {
        Some(n) if n < data.len() => {
            if n == 0 {
                bail!("s-size must be at least 1");
            }
            let idx: Vec<usize> = (0..n).map(|i| i * data.len() / n).collect();
            Ok(data.select(&idx)?)
        }
        _ => Ok(data.clone()),
    }
}

pub fn attack_config(cfg: &RunConfig) -> Result<AttackConfig> {
    Ok(AttackConfig {
        target_fool_rate: cfg.parse("target-foolrate")?,
        max_iter: cfg.parse("max-iter")?,
        snr_db: cfg.parse("snr")?,
        snr_convention: cfg.parse::<SnrConvention>("snr-convention")?,
        lr: cfg.parse("lr")?,
        momentum: cfg.parse("momentum")?,
        batch_size: cfg.parse("batch-size")?,
        deepfool: DeepFoolConfig {
            max_steps: cfg.parse("deepfool-steps")?,
            overshoot: cfg.parse("overshoot")?,
            candidates: cfg.parse("candidates")?,
        },
        seed: cfg.parse("seed")?,
    })
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let model_path = cfg.path("model")?;
    require_existing(&[model_path.clone()])?;
    let domain: Domain = cfg.parse("domain")?;
    let acfg = attack_config(cfg)?;
    acfg.validate()?;
    let out = out_dir(cfg)?;
    let model = load_model(&model_path)?;
    let data = load_data(cfg)?;
    if data.clip_len() != model.input_len() {
        bail!(
            "checkpoint {} expects clips of {} samples, the data has {}",
            model_path.display(),
            model.input_len(),
            data.clip_len()
        );
    }
    let s = spread(&data.subset(Split::Train)?, cfg.count_or_all("s-size")?)?;
    let g = mapping_for(domain, data.clip_len(), cfg.parse("period")?)?;
    let state = universal_attack(&model, &s, g.as_ref(), &acfg)?;
    let artifact = AttackArtifact::from_state(&state, data.sample_rate(), cfg.echo());
    let v = artifact.render()?;

    let mut manifest = Manifest::new();
    manifest.input(&model_path);
    manifest.note(format!("corpus sha256={}", data.content_hash()));
    let files = [
        "attack.afa",
        "history.csv",
        "updates.csv",
        "attack.wav",
        "summary.csv",
        "classes.csv",
    ];
    let [afa, hist, upd, wav, summary, classes] = files.map(|f| out.join(f));
    artifact.save(&afa)?;
    write_history_csv(&hist, &state)?;
    write_updates_csv(&upd, &state)?;
    write_wav(&wav, &Waveform::new(v.clone(), data.sample_rate())?)?;

    let test = data.subset(Split::Test)?;
    let rep = fool_report(&model, &test, &v, state.l2target)?;
    write_csv(
        &summary,
        &["metric", "value"],
        [
            ("domain", domain.tag().to_string()),
            ("iterations", state.iteration.to_string()),
            ("fool_rate_s", fmt_f64(state.fool_rate)),
            ("fool_rate_test", fmt_f64(rep.fool_rate)),
            ("l2target", fmt_f64(rep.l2target)),
            ("perturbation_norm", fmt_f64(rep.perturbation_norm)),
            ("mean_snr_db_test", fmt_f64(rep.mean_snr_db)),
        ]
        .map(|(k, v)| vec![k.to_string(), v]),
    )?;
    write_csv(
        &classes,
        &["class", "clean", "perturbed"],
        rep.class_deltas.iter().map(|d| {
            vec![
                data.class_names[d.class].clone(),
                d.clean.to_string(),
                d.perturbed.to_string(),
            ]
        }),
    )?;
    for p in [afa, hist, upd, wav, summary, classes] {
        manifest.output(p);
    }
    manifest.finish(cfg, &out)?;
    println!(
        "{} attack: {} iterations, fool rate {:.3} on S, {:.3} on test, ||g(U)|| {:.4} <= {:.4}",
        domain.tag(),
        state.iteration,
        state.fool_rate,
        rep.fool_rate,
        rep.perturbation_norm,
        state.l2target
    );
    Ok(())
}
