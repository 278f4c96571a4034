//! Minibatch AdaDelta on softmax cross-entropy.

use rand::seq::SliceRandom;

use super::data::{LabeledDataset, Split};
use super::{argmax, Classifier, Mode, Network};
use crate::error::{Error, Result};
use crate::seed::SeedStreams;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// AdaDelta decay.
    pub rho: f64,
    /// AdaDelta stability term.
    pub eps: f64,
    /// Multiplier on the AdaDelta step (1.0 is the plain method).
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            rho: 0.95,
            eps: 1e-6,
            lr: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    /// Accuracy of the training-mode predictions made while fitting.
    pub train_acc: f64,
    /// Inference-mode accuracy on the test split, `None` when it is empty.
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn final_test_acc(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.test_acc)
    }
}

/// Softmax cross-entropy for one row: returns the loss and writes dL/dlogits.
pub fn softmax_xent(logits: &[f64], label: usize, grad: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    for (g, l) in grad.iter_mut().zip(logits) {
        *g = (l - max).exp() / sum;
    }
    grad[label] -= 1.0;
    sum.ln() + max - logits[label]
}

/// Fraction of `data` rows whose prediction matches the label.
pub fn accuracy(model: &dyn Classifier, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let preds = model.predict_batch(&data.samples())?;
    let hits = preds
        .iter()
        .zip(&data.labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

struct AdaDelta {
    sq_grad: Vec<Vec<f64>>,
    sq_step: Vec<Vec<f64>>,
}

/// Fits `model` on the training split of `data`. Deterministic for a fixed seed.
pub fn train<N: Network>(
    model: &mut N,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if !(0.0..1.0).contains(&cfg.rho) || cfg.eps <= 0.0 || cfg.lr <= 0.0 {
        return Err(Error::invalid(
            "AdaDelta needs 0 <= rho < 1, eps > 0, lr > 0",
        ));
    }
    let train_idx = data.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.num_classes() != model.num_classes() || data.clip_len() != model.input_len() {
        return Err(Error::invalid(format!(
            "dataset ({} classes, {} samples) does not fit model ({} classes, {} samples)",
            data.num_classes(),
            data.clip_len(),
            model.num_classes(),
            model.input_len()
        )));
    }
    let test = data.subset(Split::Test).ok();
    let k = model.num_classes();
    let len = model.input_len();
    let sizes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
    let trainable: Vec<bool> = model.tensors().iter().map(|t| t.trainable).collect();
    let mut opt = AdaDelta {
        sq_grad: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        sq_step: sizes.iter().map(|&n| vec![0.0; n]).collect(),
    };
    let mut rng = SeedStreams::new(cfg.seed).rng("train");
    let mut order = train_idx;
    let mut report = TrainReport::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut hits = 0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let b = chunk.len();
            let mut xs = Vec::with_capacity(b * len);
            for &i in chunk {
                xs.extend_from_slice(data.clips[i].samples());
            }
            let (logits, cache) = model.forward(&xs, b, Mode::Train)?;
            let mut glogits = vec![0.0; b * k];
            let mut batch_loss = 0.0;
            for (r, &i) in chunk.iter().enumerate() {
                let row = &logits[r * k..(r + 1) * k];
                batch_loss += softmax_xent(row, data.labels[i], &mut glogits[r * k..(r + 1) * k]);
                hits += usize::from(argmax(row) == data.labels[i]);
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            loss_sum += batch_loss;
            glogits.iter_mut().for_each(|g| *g /= b as f64);

            let mut grads: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
            model.backward(&cache, &glogits, b, Some(&mut grads))?;
            model.update_running_stats(&cache);
            for (ti, t) in model.tensors_mut().into_iter().enumerate() {
                if !trainable[ti] {
                    continue;
                }
                let (eg, ex) = (&mut opt.sq_grad[ti], &mut opt.sq_step[ti]);
                for (j, p) in t.data.iter_mut().enumerate() {
                    let g = grads[ti][j];
                    eg[j] = cfg.rho * eg[j] + (1.0 - cfg.rho) * g * g;
                    let step = -((ex[j] + cfg.eps).sqrt() / (eg[j] + cfg.eps).sqrt()) * g;
                    ex[j] = cfg.rho * ex[j] + (1.0 - cfg.rho) * step * step;
                    *p += cfg.lr * step;
                }
            }
        }
        let n = order.len() as f64;
        let test_acc = match &test {
            Some(t) => Some(accuracy(&*model, t)?),
            None => None,
        };
        let stats = EpochStats {
            epoch,
            loss: loss_sum / n,
            train_acc: hits as f64 / n,
            test_acc,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} train {:.3} test {:?}",
            stats.loss,
            stats.train_acc,
            stats.test_acc
        );
        report.epochs.push(stats);
    }
    Ok(report)
}
