//! Keyword classifiers, training, and corpora.

mod audionet;
pub mod checkpoint;
pub mod data;
pub mod layers;
mod speccrnn;
pub mod train;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

pub use audionet::AudioNetMini;
pub use data::{
    ingest_corpus, synth_keywords, synth_keywords_split, IngestOptions, IngestReport,
    LabeledDataset, Split,
};
pub use layers::{Mode, Tensor};
pub use speccrnn::SpecCrnnMini;
pub use train::{accuracy, train, EpochStats, TrainConfig, TrainReport};

use crate::error::{ensure_len, Error, Result};

/// First-order view of a classifier at one input.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub logits: Vec<f64>,
    /// Classes sorted by descending logit; `classes[0]` is the prediction.
    pub classes: Vec<usize>,
    /// `gradients[i]` is d logit(classes[i]) / d input.
    pub gradients: Vec<Vec<f64>>,
}

/// A differentiable k-class audio model.
pub trait Classifier: Send + Sync {
    fn num_classes(&self) -> usize;

    fn input_len(&self) -> usize;

    fn logits_batch(&self, xs: &[&[f64]]) -> Result<Vec<Vec<f64>>>;

    fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.logits_batch(&[x])?.remove(0))
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    fn predict_batch(&self, xs: &[&[f64]]) -> Result<Vec<usize>> {
        Ok(self.logits_batch(xs)?.iter().map(|l| argmax(l)).collect())
    }

    /// Gradient of `sum_k class_weights[k] * logit_k` with respect to the input.
    fn input_gradient(&self, x: &[f64], class_weights: &[f64]) -> Result<Vec<f64>>;

    /// Logits plus the input gradients of the `top` highest-scoring classes.
    fn linearize(&self, x: &[f64], top: usize) -> Result<Linearization>;
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Internal forward/backward contract shared by the concrete architectures.
pub trait Network: Send + Sync {
    type Cache;

    fn input_len(&self) -> usize;
    fn num_classes(&self) -> usize;

    /// `xs` is `(B, input_len)` row-major; returns `(B, k)` logits.
    fn forward(&self, xs: &[f64], batch: usize, mode: Mode) -> Result<(Vec<f64>, Self::Cache)>;

    /// Pulls `(grad_batch, k)` logit cotangents back to `(grad_batch, input_len)`.
    /// `grads`, aligned with [`Network::tensors`], receives parameter gradients.
    fn backward(
        &self,
        cache: &Self::Cache,
        glogits: &[f64],
        grad_batch: usize,
        grads: Option<&mut [Vec<f64>]>,
    ) -> Result<Vec<f64>>;

    fn update_running_stats(&mut self, cache: &Self::Cache);

    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;
}

const EVAL_CHUNK: usize = 16;

impl<N: Network> Classifier for N {
    fn num_classes(&self) -> usize {
        Network::num_classes(self)
    }

    fn input_len(&self) -> usize {
        Network::input_len(self)
    }

    fn logits_batch(&self, xs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let len = Network::input_len(self);
        let k = Network::num_classes(self);
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(EVAL_CHUNK) {
            let mut flat = Vec::with_capacity(chunk.len() * len);
            for x in chunk {
                ensure_len(len, x.len())?;
                flat.extend_from_slice(x);
            }
            let (logits, _) = self.forward(&flat, chunk.len(), Mode::Infer)?;
            out.extend(logits.chunks(k).map(<[f64]>::to_vec));
        }
        Ok(out)
    }

    fn input_gradient(&self, x: &[f64], class_weights: &[f64]) -> Result<Vec<f64>> {
        ensure_len(Network::input_len(self), x.len())?;
        ensure_len(Network::num_classes(self), class_weights.len())?;
        let (_, cache) = self.forward(x, 1, Mode::Infer)?;
        self.backward(&cache, class_weights, 1, None)
    }

    fn linearize(&self, x: &[f64], top: usize) -> Result<Linearization> {
        let len = Network::input_len(self);
        let k = Network::num_classes(self);
        ensure_len(len, x.len())?;
        let (logits, cache) = self.forward(x, 1, Mode::Infer)?;
        let mut classes: Vec<usize> = (0..k).collect();
        classes.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
        classes.truncate(top.clamp(1, k));
        let m = classes.len();
        let mut seeds = vec![0.0; m * k];
        for (i, &c) in classes.iter().enumerate() {
            seeds[i * k + c] = 1.0;
        }
        let g = self.backward(&cache, &seeds, m, None)?;
        Ok(Linearization {
            logits,
            classes,
            gradients: g.chunks(len).map(<[f64]>::to_vec).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arch {
    AudioNetMini,
    SpecCrnnMini,
}

impl Arch {
    pub fn tag(&self) -> &'static str {
        match self {
            Arch::AudioNetMini => "audionet-mini",
            Arch::SpecCrnnMini => "speccrnn-mini",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "audionet-mini" => Ok(Arch::AudioNetMini),
            "speccrnn-mini" => Ok(Arch::SpecCrnnMini),
            other => Err(Error::invalid(format!(
                "unknown model '{other}' (expected audionet-mini|speccrnn-mini)"
            ))),
        }
    }
}

/// Either architecture behind one type.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    AudioNet(AudioNetMini),
    SpecCrnn(SpecCrnnMini),
}

impl Model {
    pub fn new(
        arch: Arch,
        input_len: usize,
        sample_rate: u32,
        num_classes: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(match arch {
            Arch::AudioNetMini => Model::AudioNet(AudioNetMini::new(input_len, num_classes, rng)?),
            Arch::SpecCrnnMini => {
                Model::SpecCrnn(SpecCrnnMini::new(input_len, sample_rate, num_classes, rng)?)
            }
        })
    }

    pub fn arch(&self) -> Arch {
        match self {
            Model::AudioNet(_) => Arch::AudioNetMini,
            Model::SpecCrnn(_) => Arch::SpecCrnnMini,
        }
    }

    pub fn sample_rate(&self) -> u32 {
        match self {
            Model::AudioNet(m) => m.sample_rate(),
            Model::SpecCrnn(m) => m.sample_rate(),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        match self {
            Model::AudioNet(m) => m.tensors(),
            Model::SpecCrnn(m) => m.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Model::AudioNet(m) => m.tensors_mut(),
            Model::SpecCrnn(m) => m.tensors_mut(),
        }
    }

    pub fn train(&mut self, data: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainReport> {
        match self {
            Model::AudioNet(m) => train(m, data, cfg),
            Model::SpecCrnn(m) => train(m, data, cfg),
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            Model::AudioNet(m) => m,
            Model::SpecCrnn(m) => m,
        }
    }
}

impl Classifier for Model {
    fn num_classes(&self) -> usize {
        self.inner().num_classes()
    }

    fn input_len(&self) -> usize {
        self.inner().input_len()
    }

    fn logits_batch(&self, xs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        self.inner().logits_batch(xs)
    }

    fn input_gradient(&self, x: &[f64], class_weights: &[f64]) -> Result<Vec<f64>> {
        self.inner().input_gradient(x, class_weights)
    }

    fn linearize(&self, x: &[f64], top: usize) -> Result<Linearization> {
        self.inner().linearize(x, top)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0]), 0);
    }

    #[test]
    fn arch_round_trip() {
        for a in [Arch::AudioNetMini, Arch::SpecCrnnMini] {
            assert_eq!(a.tag().parse::<Arch>().unwrap(), a);
        }
        assert!("resnet".parse::<Arch>().is_err());
    }
}
