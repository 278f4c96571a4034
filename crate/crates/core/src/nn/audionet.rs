//! Raw-waveform convolutional classifier: four {conv1d, batchnorm, relu, maxpool}
//! blocks (16/32/32/64 channels, kernel 9, pool 4) and a dense read-out.

use rand::Rng;

use super::layers::{
    maxpool_backward, maxpool_forward, relu_backward, relu_forward, BatchNorm, BatchNormCache,
    Conv, ConvCache, Dense, Mode, Tensor,
};
use super::Network;
use crate::error::{ensure_len, Error, Result};

const CHANNELS: [usize; 4] = [8, 16, 32, 64];
const KERNEL: usize = 9;
const POOL: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioNetMini {
    input_len: usize,
    num_classes: usize,
    sample_rate: u32,
    convs: Vec<Conv>,
    norms: Vec<BatchNorm>,
    dense: Dense,
}

struct BlockCache {
    conv: ConvCache,
    norm: BatchNormCache,
    mask: Vec<bool>,
    arg: Vec<u32>,
}

pub struct AudioNetCache {
    batch: usize,
    blocks: Vec<BlockCache>,
    features: Vec<f64>,
}

pub(crate) fn pair(grads: &mut [Vec<f64>], i: usize) -> (&mut [f64], &mut [f64]) {
    let (a, b) = grads[i..].split_at_mut(1);
    (&mut a[0], &mut b[0])
}

impl AudioNetMini {
    pub fn new(input_len: usize, num_classes: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::with_rate(input_len, 8000, num_classes, rng)
    }

    pub fn with_rate(
        input_len: usize,
        sample_rate: u32,
        num_classes: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        if input_len < POOL.pow(CHANNELS.len() as u32) {
            return Err(Error::invalid(format!(
                "input length {input_len} too short for four pooling stages"
            )));
        }
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        let mut c_in = 1;
        let mut len = input_len;
        for (i, &c) in CHANNELS.iter().enumerate() {
            convs.push(Conv::new(
                &format!("block{i}.conv"),
                c_in,
                c,
                (1, KERNEL),
                (1, len),
                rng,
            ));
            norms.push(BatchNorm::new(&format!("block{i}.bn"), c));
            c_in = c;
            len /= POOL;
        }
        let dense = Dense::new("dense", c_in * len, num_classes, rng);
        Ok(Self {
            input_len,
            num_classes,
            sample_rate,
            convs,
            norms,
            dense,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    fn final_len(&self) -> usize {
        self.convs.last().map(|c| c.w / POOL).unwrap_or(0)
    }
}

impl Network for AudioNetMini {
    type Cache = AudioNetCache;

    fn input_len(&self) -> usize {
        self.input_len
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn forward(&self, xs: &[f64], batch: usize, mode: Mode) -> Result<(Vec<f64>, AudioNetCache)> {
        ensure_len(batch * self.input_len, xs.len())?;
        let mut act = xs.to_vec();
        let mut blocks = Vec::with_capacity(self.convs.len());
        for (conv, norm) in self.convs.iter().zip(&self.norms) {
            let (mut out, conv_cache) = conv.forward(&act, batch);
            let norm_cache = norm.forward(&mut out, mode);
            let mask = relu_forward(&mut out);
            let (pooled, arg) = maxpool_forward(&out, conv.c_out, batch, conv.w, POOL);
            act = pooled;
            blocks.push(BlockCache {
                conv: conv_cache,
                norm: norm_cache,
                mask,
                arg,
            });
        }
        let c = CHANNELS[CHANNELS.len() - 1];
        let l = self.final_len();
        let mut features = vec![0.0; batch * c * l];
        for ch in 0..c {
            for b in 0..batch {
                features[b * c * l + ch * l..b * c * l + (ch + 1) * l]
                    .copy_from_slice(&act[(ch * batch + b) * l..(ch * batch + b + 1) * l]);
            }
        }
        let logits = self.dense.forward(&features, batch);
        Ok((
            logits,
            AudioNetCache {
                batch,
                blocks,
                features,
            },
        ))
    }

    fn backward(
        &self,
        cache: &AudioNetCache,
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
        let n_tensors = 6 * self.convs.len();
        let gfeat = self.dense.backward(
            &cache.features,
            glogits,
            grad_batch,
            grads.as_deref_mut().map(|g| pair(g, n_tensors)),
        );
        let c = CHANNELS[CHANNELS.len() - 1];
        let l = self.final_len();
        let mut g = vec![0.0; c * grad_batch * l];
        for ch in 0..c {
            for b in 0..grad_batch {
                g[(ch * grad_batch + b) * l..(ch * grad_batch + b + 1) * l]
                    .copy_from_slice(&gfeat[b * c * l + ch * l..b * c * l + (ch + 1) * l]);
            }
        }
        for (i, ((conv, norm), bc)) in self
            .convs
            .iter()
            .zip(&self.norms)
            .zip(&cache.blocks)
            .enumerate()
            .rev()
        {
            let mut gi = maxpool_backward(
                &bc.arg,
                &g,
                conv.c_out,
                conv.w,
                POOL,
                cache.batch,
                grad_batch,
            )?;
            relu_backward(
                &bc.mask,
                &mut gi,
                conv.c_out,
                conv.w,
                cache.batch,
                grad_batch,
            )?;
            norm.backward(
                &bc.norm,
                &mut gi,
                grads.as_deref_mut().map(|g| pair(g, 6 * i + 2)),
            )?;
            g = conv.backward(
                &bc.conv,
                &gi,
                grad_batch,
                grads.as_deref_mut().map(|g| pair(g, 6 * i)),
            )?;
        }
        Ok(g)
    }

    fn update_running_stats(&mut self, cache: &AudioNetCache) {
        for (norm, bc) in self.norms.iter_mut().zip(&cache.blocks) {
            norm.update_running(&bc.norm);
        }
    }

    fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for (conv, norm) in self.convs.iter().zip(&self.norms) {
            out.extend([
                &conv.weight,
                &conv.bias,
                &norm.gamma,
                &norm.beta,
                &norm.running_mean,
                &norm.running_var,
            ]);
        }
        out.extend([&self.dense.weight, &self.dense.bias]);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for (conv, norm) in self.convs.iter_mut().zip(self.norms.iter_mut()) {
            out.push(&mut conv.weight);
            out.push(&mut conv.bias);
            out.push(&mut norm.gamma);
            out.push(&mut norm.beta);
            out.push(&mut norm.running_mean);
            out.push(&mut norm.running_var);
        }
        out.push(&mut self.dense.weight);
        out.push(&mut self.dense.bias);
        out
    }
}
