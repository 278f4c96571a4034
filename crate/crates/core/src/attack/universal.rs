//! Universal perturbation search: minibatch aggregation of per-sample
//! candidates with momentum, projected onto an SNR-derived L2 ball.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::deepfool::{deepfool, DeepFoolConfig};
use crate::codomain::{Domain, DomainMapping};
use crate::dsp::{l2_norm, snr_db};
use crate::error::{ensure_len, Error, Result};
use crate::nn::{Classifier, LabeledDataset};
use crate::seed::SeedStreams;

/// How the SNR target converts the mean clip norm into an L2 budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SnrConvention {
    /// `10^(-snr/10)` applied to the amplitude norm.
    #[default]
    Power,
    /// `10^(-snr/20)`, the physically conventional amplitude ratio.
    Amplitude,
}

impl SnrConvention {
    pub fn tag(&self) -> &'static str {
        match self {
            SnrConvention::Power => "power",
            SnrConvention::Amplitude => "amplitude",
        }
    }

    pub fn factor(&self, snr_db: f64) -> f64 {
        match self {
            SnrConvention::Power => 10f64.powf(-snr_db / 10.0),
            SnrConvention::Amplitude => 10f64.powf(-snr_db / 20.0),
        }
    }
}

impl std::str::FromStr for SnrConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power" => Ok(SnrConvention::Power),
            "amplitude" => Ok(SnrConvention::Amplitude),
            other => Err(Error::invalid(format!(
                "unknown snr convention '{other}' (expected power|amplitude)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub target_fool_rate: f64,
    pub max_iter: usize,
    pub snr_db: f64,
    pub snr_convention: SnrConvention,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub deepfool: DeepFoolConfig,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            target_fool_rate: 0.8,
            max_iter: 30,
            snr_db: 10.0,
            snr_convention: SnrConvention::Power,
            lr: 1.0,
            momentum: 0.9,
            batch_size: 64,
            deepfool: DeepFoolConfig::default(),
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.target_fool_rate) {
            return Err(Error::invalid("target fool rate must lie in [0, 1]"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum decay must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::invalid("snr must be finite"));
        }
        Ok(())
    }
}

/// Mean clip L2 norm of `data` times the SNR factor.
pub fn l2_target_from_snr(
    data: &LabeledDataset,
    snr_db: f64,
    convention: SnrConvention,
) -> Result<f64> {
    Ok(data.mean_l2_norm()? * convention.factor(snr_db))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub iteration: usize,
    pub fool_rate: f64,
    pub du_norm: f64,
    pub gu_norm: f64,
    pub batch_len: usize,
    pub successes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackState {
    pub domain: Domain,
    pub period: usize,
    pub signal_len: usize,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub fool_rate: f64,
    pub iteration: usize,
    pub l2target: f64,
    pub history: Vec<IterationRecord>,
    /// `du_history[i]` is the momentum after iteration `i`; entry 0 is the zero start.
    pub du_history: Vec<Vec<f64>>,
}

impl AttackState {
    pub fn render(&self, g: &dyn DomainMapping) -> Result<Vec<f64>> {
        g.map(&self.u)
    }
}

/// Clean and perturbed predictions of every clip.
fn predictions(
    model: &dyn Classifier,
    data: &LabeledDataset,
    v: Option<&[f64]>,
) -> Result<Vec<usize>> {
    match v {
        None => model.predict_batch(&data.samples()),
        Some(v) => {
            let shifted: Vec<Vec<f64>> = data
                .clips
                .iter()
                .map(|c| c.samples().iter().zip(v).map(|(a, b)| a + b).collect())
                .collect();
            let refs: Vec<&[f64]> = shifted.iter().map(Vec::as_slice).collect();
            model.predict_batch(&refs)
        }
    }
}

/// Fraction of clips whose predicted class changes when `v` is added.
pub fn fool_rate(model: &dyn Classifier, data: &LabeledDataset, v: &[f64]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    ensure_len(data.clip_len(), v.len())?;
    let clean = predictions(model, data, None)?;
    let pert = predictions(model, data, Some(v))?;
    Ok(changed_fraction(&clean, &pert))
}

fn changed_fraction(a: &[usize], b: &[usize]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / a.len() as f64
}

/// Runs the universal search over `data`, which plays the role of `S`.
pub fn universal_attack(
    model: &dyn Classifier,
    data: &LabeledDataset,
    g: &dyn DomainMapping,
    cfg: &AttackConfig,
) -> Result<AttackState> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    ensure_len(model.input_len(), data.clip_len())?;
    ensure_len(g.signal_len(), data.clip_len())?;
    let l2target = l2_target_from_snr(data, cfg.snr_db, cfg.snr_convention)?;
    let d = g.code_len();
    let mut state = AttackState {
        domain: g.domain(),
        period: g.period(),
        signal_len: g.signal_len(),
        u: vec![0.0; d],
        du: vec![0.0; d],
        fool_rate: 0.0,
        iteration: 0,
        l2target,
        history: Vec::new(),
        du_history: vec![vec![0.0; d]],
    };
    if !(state.fool_rate < cfg.target_fool_rate) || cfg.max_iter == 0 {
        return Ok(state);
    }
    let clean = predictions(model, data, None)?;
    let mut current = clean.clone();
    let mut rng = SeedStreams::new(cfg.seed).rng("batch");

    while state.fool_rate < cfg.target_fool_rate && state.iteration < cfg.max_iter {
        let mut unfooled: Vec<usize> = (0..data.len())
            .filter(|&i| clean[i] == current[i])
            .collect();
        if unfooled.is_empty() {
            break;
        }
        unfooled.shuffle(&mut rng);
        unfooled.truncate(cfg.batch_size);

        let outcomes: Vec<Result<(bool, Vec<f64>)>> = unfooled
            .par_iter()
            .map(|&i| {
                let out = deepfool(model, data.clips[i].samples(), g, &cfg.deepfool)?;
                Ok((out.success, out.z))
            })
            .collect();
        let mut r = vec![0.0; d];
        let mut successes = 0;
        for o in outcomes {
            let (ok, z) = o?;
            if ok {
                r.iter_mut().zip(&z).for_each(|(a, b)| *a += b);
                successes += 1;
            }
        }
        for (du, ri) in state.du.iter_mut().zip(&r) {
            let step = if successes > 0 {
                ri / successes as f64
            } else {
                0.0
            };
            *du = cfg.momentum * *du + cfg.lr * step;
        }
        state
            .u
            .iter_mut()
            .zip(&state.du)
            .for_each(|(u, du)| *u += du);
        state.u = g.project(&state.u, l2target)?;
        let v = g.map(&state.u)?;
        current = predictions(model, data, Some(&v))?;
        state.fool_rate = changed_fraction(&clean, &current);
        state.iteration += 1;
        state.history.push(IterationRecord {
            iteration: state.iteration,
            fool_rate: state.fool_rate,
            du_norm: l2_norm(&state.du),
            gu_norm: l2_norm(&v),
            batch_len: unfooled.len(),
            successes,
        });
        state.du_history.push(state.du.clone());
        log::debug!(
            "iteration {}: fool rate {:.3}, {successes}/{} candidates",
            state.iteration,
            state.fool_rate,
            unfooled.len()
        );
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDelta {
    pub class: usize,
    pub clean: usize,
    pub perturbed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoolReport {
    pub fool_rate: f64,
    /// Prediction counts per class without and with the perturbation.
    pub class_deltas: Vec<ClassDelta>,
    pub l2target: f64,
    pub perturbation_norm: f64,
    /// Mean over clips of `snr_db(clip, v)`.
    pub mean_snr_db: f64,
}

pub fn fool_report(
    model: &dyn Classifier,
    data: &LabeledDataset,
    v: &[f64],
    l2target: f64,
) -> Result<FoolReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    ensure_len(data.clip_len(), v.len())?;
    let clean = predictions(model, data, None)?;
    let pert = predictions(model, data, Some(v))?;
    let k = model.num_classes();
    let mut class_deltas: Vec<ClassDelta> = (0..k)
        .map(|class| ClassDelta {
            class,
            clean: 0,
            perturbed: 0,
        })
        .collect();
    for (&c, &p) in clean.iter().zip(&pert) {
        class_deltas[c].clean += 1;
        class_deltas[p].perturbed += 1;
    }
    Ok(FoolReport {
        fool_rate: changed_fraction(&clean, &pert),
        class_deltas,
        l2target,
        perturbation_norm: l2_norm(v),
        mean_snr_db: mean_snr_db(data, v)?,
    })
}

/// Mean per-clip SNR of `v` against the clips of `data`.
pub fn mean_snr_db(data: &LabeledDataset, v: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    for c in &data.clips {
        sum += snr_db(c.samples(), v)?;
    }
    Ok(sum / data.len() as f64)
}
