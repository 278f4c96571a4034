//! `afk analyze`: sphere scans, update angles, spectral composition and
//! convergence bands. Any combination of the four runs in one call.

use std::path::PathBuf;

use afk_core::attack::{read_history_csv, read_updates_csv};
use afk_core::dsp::wav::read_wav;
use afk_core::eval::{
    angle_bands, convergence_track, first_valid_mean, freq_composition, sphere_sweep,
    update_angles, write_angles_csv, write_composition_csv, write_convergence_csv,
    write_sphere_csv, Evaluator, SphereBasis,
};
use afk_core::{AttackArtifact, Waveform};
use anyhow::{bail, Context, Result};

use super::attack::spread;
use super::evaluate::load_attacks;
use crate::common::{
    expand, load_data, load_model, out_dir, require_existing, select_split, Manifest,
};
use crate::config::RunConfig;

fn paths(cfg: &RunConfig, key: &str) -> Vec<PathBuf> {
    cfg.list(key).into_iter().map(PathBuf::from).collect()
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let sphere = paths(cfg, "sphere");
    let angles = paths(cfg, "angles");
    let composition = paths(cfg, "composition");
    let convergence = paths(cfg, "convergence");
    if sphere.is_empty() && angles.is_empty() && composition.is_empty() && convergence.is_empty() {
        bail!("nothing to analyze: give sphere, angles, composition or convergence");
    }
    if !sphere.is_empty() && sphere.len() != 3 {
        bail!("sphere takes exactly three attacks, got {}", sphere.len());
    }
    let mut all: Vec<PathBuf> = [&sphere, &angles, &composition, &convergence]
        .into_iter()
        .flatten()
        .cloned()
        .collect();
    if !sphere.is_empty() {
        all.push(cfg.path("model").context("sphere needs `model`")?);
    }
    require_existing(&all)?;
    let out = out_dir(cfg)?;
    let mut manifest = Manifest::new();
    for p in &all {
        manifest.input(p);
    }

    if !sphere.is_empty() {
        let model = load_model(&cfg.path("model")?)?;
        let full = load_data(cfg)?;
        let data = spread(
            &select_split(&full, cfg.str("split")?)?,
            cfg.count_or_all("max-clips")?,
        )?;
        manifest.note(format!("corpus sha256={}", full.content_hash()));
        let mut vs = load_attacks(&sphere, data.clip_len())?
            .into_iter()
            .map(|a| a.v);
        let basis = SphereBasis::new(vs.next().unwrap(), vs.next().unwrap(), vs.next().unwrap())
            .context("sphere basis")?;
        let eval = Evaluator::new(&model, &data)?;
        let surface = sphere_sweep(
            &eval,
            &basis,
            cfg.parse("phi-steps")?,
            cfg.parse("theta-steps")?,
        )?;
        let path = out.join("sphere.csv");
        write_sphere_csv(&path, &surface)?;
        manifest.output(path);
    }

    if !angles.is_empty() {
        let runs = angles
            .iter()
            .map(|p| {
                let du = read_updates_csv(p)?;
                Ok((p.display().to_string(), update_angles(&du)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let path = out.join("angles.csv");
        write_angles_csv(&path, &runs)?;
        let records: Vec<_> = runs.iter().map(|(_, r)| r.clone()).collect();
        let firsts: Vec<f64> = records
            .iter()
            .filter_map(|r| first_valid_mean(r, 3))
            .collect();
        if !firsts.is_empty() {
            println!(
                "mean of the first three update angles: {:.2} deg over {} runs",
                firsts.iter().sum::<f64>() / firsts.len() as f64,
                firsts.len()
            );
        }
        for b in angle_bands(&records).iter().take(5) {
            println!(
                "iteration {}: theta {:.2} +- {:.2} deg",
                b.iteration, b.mean, b.std
            );
        }
        manifest.output(path);
    }

    if !composition.is_empty() {
        let files = expand(&path_strings(&composition), "afa")?;
        let waves = files
            .iter()
            .map(|p| -> Result<Waveform> {
                if p.extension().is_some_and(|e| e == "wav") {
                    Ok(read_wav(p)?)
                } else {
                    let a = AttackArtifact::load(p)?;
                    Ok(Waveform::new(a.render()?, a.sample_rate)?)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let c = freq_composition(&waves)?;
        let path = out.join("composition.csv");
        write_composition_csv(&path, &c)?;
        let peaks: Vec<String> = c
            .peaks
            .iter()
            .map(|&k| format!("{:.0}", c.freq_hz[k]))
            .collect();
        println!("composition peaks (Hz): {}", peaks.join(", "));
        manifest.output(path);
    }

    if !convergence.is_empty() {
        let histories = convergence
            .iter()
            .map(|p| Ok(read_history_csv(p)?))
            .collect::<Result<Vec<_>>>()?;
        let bands = convergence_track(&histories)?;
        let path = out.join("convergence.csv");
        write_convergence_csv(&path, &bands)?;
        manifest.output(path);
    }
    manifest.finish(cfg, &out)
}

fn path_strings(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}
