//! MFCC front end, two same-padded 3x3 conv layers, an LSTM over frames, and a
//! dense read-out. Differentiable end to end, including the MFCC stage.

use rand::Rng;

use super::audionet::pair;
use super::layers::{
    relu_backward, relu_forward, BatchNorm, BatchNormCache, Conv, ConvCache, Dense, Lstm, Mode,
    Tensor,
};
use super::Network;
use crate::dsp::{Mfcc, MfccCache, MfccConfig};
use crate::error::{ensure_len, Error, Result};

const CONV_CHANNELS: usize = 16;
const HIDDEN: usize = 64;
/// MFCC values span roughly +-100; this keeps the first conv in a sane range before training.
const FEATURE_SCALE: f64 = 0.1;

pub struct SpecCrnnMini {
    input_len: usize,
    num_classes: usize,
    sample_rate: u32,
    mfcc: Mfcc,
    frames: usize,
    coeffs: usize,
    conv1: Conv,
    bn1: BatchNorm,
    conv2: Conv,
    bn2: BatchNorm,
    lstm: Lstm,
    dense: Dense,
}

impl std::fmt::Debug for SpecCrnnMini {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpecCrnnMini")
            .field("input_len", &self.input_len)
            .field("num_classes", &self.num_classes)
            .field("frames", &self.frames)
            .field("coeffs", &self.coeffs)
            .finish_non_exhaustive()
    }
}

impl Clone for SpecCrnnMini {
    fn clone(&self) -> Self {
        Self {
            input_len: self.input_len,
            num_classes: self.num_classes,
            sample_rate: self.sample_rate,
            mfcc: Mfcc::new(self.mfcc.config().clone()).expect("config was validated"),
            frames: self.frames,
            coeffs: self.coeffs,
            conv1: self.conv1.clone(),
            bn1: self.bn1.clone(),
            conv2: self.conv2.clone(),
            bn2: self.bn2.clone(),
            lstm: self.lstm.clone(),
            dense: self.dense.clone(),
        }
    }
}

impl PartialEq for SpecCrnnMini {
    fn eq(&self, other: &Self) -> bool {
        self.input_len == other.input_len
            && self.num_classes == other.num_classes
            && self.sample_rate == other.sample_rate
            && self.tensors() == other.tensors()
    }
}

pub struct SpecCrnnCache {
    batch: usize,
    mfcc: Vec<MfccCache>,
    conv1: ConvCache,
    bn1: BatchNormCache,
    mask1: Vec<bool>,
    conv2: ConvCache,
    bn2: BatchNormCache,
    mask2: Vec<bool>,
    seq: Vec<f64>,
    lstm: super::layers::LstmCache,
    hidden: Vec<f64>,
}

impl SpecCrnnMini {
    pub fn new(
        input_len: usize,
        sample_rate: u32,
        num_classes: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        let mfcc = Mfcc::new(MfccConfig::for_rate(sample_rate))?;
        let frames = mfcc.config().frame_count(input_len);
        if frames == 0 {
            return Err(Error::invalid(format!(
                "input length {input_len} shorter than one MFCC frame"
            )));
        }
        let coeffs = mfcc.config().n_coeffs;
        let grid = (frames, coeffs);
        let conv1 = Conv::new("conv1", 1, CONV_CHANNELS, (3, 3), grid, rng);
        let conv2 = Conv::new("conv2", CONV_CHANNELS, CONV_CHANNELS, (3, 3), grid, rng);
        let lstm = Lstm::new("lstm", CONV_CHANNELS * coeffs, HIDDEN, rng);
        let dense = Dense::new("dense", HIDDEN, num_classes, rng);
        Ok(Self {
            input_len,
            num_classes,
            sample_rate,
            mfcc,
            frames,
            coeffs,
            conv1,
            bn1: BatchNorm::new("bn1", CONV_CHANNELS),
            conv2,
            bn2: BatchNorm::new("bn2", CONV_CHANNELS),
            lstm,
            dense,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn frames(&self) -> usize {
        self.frames
    }
}

impl Network for SpecCrnnMini {
    type Cache = SpecCrnnCache;

    fn input_len(&self) -> usize {
        self.input_len
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn forward(&self, xs: &[f64], batch: usize, mode: Mode) -> Result<(Vec<f64>, SpecCrnnCache)> {
        ensure_len(batch * self.input_len, xs.len())?;
        let tf = self.frames * self.coeffs;
        let mut act = Vec::with_capacity(batch * tf);
        let mut mfcc = Vec::with_capacity(batch);
        for x in xs.chunks(self.input_len) {
            let (feat, cache) = self.mfcc.forward(x)?;
            act.extend(feat.values.iter().map(|v| v * FEATURE_SCALE));
            mfcc.push(cache);
        }

        let (mut h1, conv1) = self.conv1.forward(&act, batch);
        let bn1 = self.bn1.forward(&mut h1, mode);
        let mask1 = relu_forward(&mut h1);
        let (mut h2, conv2) = self.conv2.forward(&h1, batch);
        let bn2 = self.bn2.forward(&mut h2, mode);
        let mask2 = relu_forward(&mut h2);

        let d = CONV_CHANNELS * self.coeffs;
        let mut seq = vec![0.0; batch * self.frames * d];
        for c in 0..CONV_CHANNELS {
            for b in 0..batch {
                for t in 0..self.frames {
                    let src = (c * batch + b) * tf + t * self.coeffs;
                    let dst = (b * self.frames + t) * d + c * self.coeffs;
                    seq[dst..dst + self.coeffs].copy_from_slice(&h2[src..src + self.coeffs]);
                }
            }
        }
        let (hidden, lstm) = self.lstm.forward(&seq, batch, self.frames);
        let logits = self.dense.forward(&hidden, batch);
        Ok((
            logits,
            SpecCrnnCache {
                batch,
                mfcc,
                conv1,
                bn1,
                mask1,
                conv2,
                bn2,
                mask2,
                seq,
                lstm,
                hidden,
            },
        ))
    }

    fn backward(
        &self,
        cache: &SpecCrnnCache,
        glogits: &[f64],
        grad_batch: usize,
        mut grads: Option<&mut [Vec<f64>]>,
    ) -> Result<Vec<f64>> {
        ensure_len(grad_batch * self.num_classes, glogits.len())?;
        if grads.is_some() && cache.batch != grad_batch {
            return Err(Error::invalid(
                "parameter gradients need a matching forward batch",
            ));
        }
        let gh = self.dense.backward(
            &cache.hidden,
            glogits,
            grad_batch,
            grads.as_deref_mut().map(|g| pair(g, 15)),
        );
        let lstm_grads = grads.as_deref_mut().map(|g| {
            let (a, rest) = g[12..].split_at_mut(1);
            let (b, c) = rest.split_at_mut(1);
            (&mut a[0][..], &mut b[0][..], &mut c[0][..])
        });
        let gseq = self
            .lstm
            .backward(&cache.lstm, &cache.seq, &gh, grad_batch, lstm_grads)?;

        let tf = self.frames * self.coeffs;
        let d = CONV_CHANNELS * self.coeffs;
        let mut g = vec![0.0; CONV_CHANNELS * grad_batch * tf];
        for c in 0..CONV_CHANNELS {
            for b in 0..grad_batch {
                for t in 0..self.frames {
                    let dst = (c * grad_batch + b) * tf + t * self.coeffs;
                    let src = (b * self.frames + t) * d + c * self.coeffs;
                    g[dst..dst + self.coeffs].copy_from_slice(&gseq[src..src + self.coeffs]);
                }
            }
        }
        relu_backward(
            &cache.mask2,
            &mut g,
            CONV_CHANNELS,
            tf,
            cache.batch,
            grad_batch,
        )?;
        self.bn2
            .backward(&cache.bn2, &mut g, grads.as_deref_mut().map(|g| pair(g, 8)))?;
        let mut g = self.conv2.backward(
            &cache.conv2,
            &g,
            grad_batch,
            grads.as_deref_mut().map(|g| pair(g, 6)),
        )?;
        relu_backward(
            &cache.mask1,
            &mut g,
            CONV_CHANNELS,
            tf,
            cache.batch,
            grad_batch,
        )?;
        self.bn1
            .backward(&cache.bn1, &mut g, grads.as_deref_mut().map(|g| pair(g, 2)))?;
        let g = self.conv1.backward(
            &cache.conv1,
            &g,
            grad_batch,
            grads.as_deref_mut().map(|g| pair(g, 0)),
        )?;

        let mut out = Vec::with_capacity(grad_batch * self.input_len);
        for (b, gf) in g.chunks(tf).enumerate() {
            let mc = &cache.mfcc[if cache.batch == 1 { 0 } else { b }];
            let scaled: Vec<f64> = gf.iter().map(|v| v * FEATURE_SCALE).collect();
            out.extend(self.mfcc.backward(mc, &scaled)?);
        }
        Ok(out)
    }

    fn update_running_stats(&mut self, cache: &SpecCrnnCache) {
        self.bn1.update_running(&cache.bn1);
        self.bn2.update_running(&cache.bn2);
    }

    fn tensors(&self) -> Vec<&Tensor> {
        vec![
            &self.conv1.weight,
            &self.conv1.bias,
            &self.bn1.gamma,
            &self.bn1.beta,
            &self.bn1.running_mean,
            &self.bn1.running_var,
            &self.conv2.weight,
            &self.conv2.bias,
            &self.bn2.gamma,
            &self.bn2.beta,
            &self.bn2.running_mean,
            &self.bn2.running_var,
            &self.lstm.w_ih,
            &self.lstm.w_hh,
            &self.lstm.bias,
            &self.dense.weight,
            &self.dense.bias,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.bn1.gamma,
            &mut self.bn1.beta,
            &mut self.bn1.running_mean,
            &mut self.bn1.running_var,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
            &mut self.bn2.running_mean,
            &mut self.bn2.running_var,
            &mut self.lstm.w_ih,
            &mut self.lstm.w_hh,
            &mut self.lstm.bias,
            &mut self.dense.weight,
            &mut self.dense.bias,
        ]
    }
}
