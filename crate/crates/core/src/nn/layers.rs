//! Hand-differentiated layers.
//!
//! Activations of convolutional stages are stored channel-major as
//! `(C, B, S)` where `S` is the flattened spatial extent of one sample. Every
//! `backward` accepts a cotangent batch `Bg` that is either equal to the
//! cached forward batch `Bc` or a multiple of a single cached sample
//! (`Bc == 1`); the latter is how a per-class Jacobian is pulled back
//! from one forward pass.

use rand::Rng;

use crate::error::{Error, Result};

/// Named parameter or buffer tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub trainable: bool,
}

impl Tensor {
    pub fn new(
        name: impl Into<String>,
        shape: Vec<usize>,
        data: Vec<f64>,
        trainable: bool,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            name: name.into(),
            shape,
            data,
            trainable,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>, trainable: bool) -> Self {
        let n = shape.iter().product();
        Self::new(name, shape, vec![0.0; n], trainable)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// `C[m x n] = beta * C + A[m x k] * B[k x n]`, with optional transposed storage of A / B.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if a_trans {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_trans {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: the debug_assert above documents the extents; every caller
    // passes buffers sized from the same m, k, n.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[inline]
fn cache_row(b: usize, cached_batch: usize) -> usize {
    if cached_batch == 1 {
        0
    } else {
        b
    }
}

fn check_broadcast(cached: usize, grad: usize) -> Result<()> {
    if cached == grad || cached == 1 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "cotangent batch {grad} incompatible with cached batch {cached}"
        )))
    }
}

/// Same-padded convolution over an `h x w` grid (1-D when `h == 1`, `kh == 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub c_in: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub h: usize,
    pub w: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub struct ConvCache {
    cols: Vec<f64>,
    batch: usize,
}

impl Conv {
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        (kh, kw): (usize, usize),
        (h, w): (usize, usize),
        rng: &mut impl Rng,
    ) -> Self {
        assert!(kh % 2 == 1 && kw % 2 == 1, "same padding needs odd kernels");
        let fan_in = c_in * kh * kw;
        let bound = (6.0 / fan_in as f64).sqrt();
        let data = (0..c_out * fan_in)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self {
            c_in,
            c_out,
            kh,
            kw,
            h,
            w,
            weight: Tensor::new(
                format!("{name}.weight"),
                vec![c_out, c_in, kh, kw],
                data,
                true,
            ),
            bias: Tensor::zeros(format!("{name}.bias"), vec![c_out], true),
        }
    }

    fn spatial(&self) -> usize {
        self.h * self.w
    }

    fn patch(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn im2col(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let s = self.spatial();
        let bs = batch * s;
        let (ph, pw) = (self.kh / 2, self.kw / 2);
        let mut cols = vec![0.0; self.patch() * bs];
        for ci in 0..self.c_in {
            for dy in 0..self.kh {
                for dx in 0..self.kw {
                    let row = (ci * self.kh + dy) * self.kw + dx;
                    let dst_row = &mut cols[row * bs..(row + 1) * bs];
                    for b in 0..batch {
                        let src = &x[ci * bs + b * s..ci * bs + (b + 1) * s];
                        let dst = &mut dst_row[b * s..(b + 1) * s];
                        for y in 0..self.h {
                            let sy = y as isize + dy as isize - ph as isize;
                            if sy < 0 || sy >= self.h as isize {
                                continue;
                            }
                            let sy = sy as usize;
                            let x_lo = pw.saturating_sub(dx);
                            let x_hi = (self.w + pw).saturating_sub(dx).min(self.w);
                            if x_lo >= x_hi {
                                continue;
                            }
                            let src_lo = x_lo + dx - pw;
                            let n = x_hi - x_lo;
                            dst[y * self.w + x_lo..y * self.w + x_hi].copy_from_slice(
                                &src[sy * self.w + src_lo..sy * self.w + src_lo + n],
                            );
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, gcols: &[f64], batch: usize) -> Vec<f64> {
        let s = self.spatial();
        let bs = batch * s;
        let (ph, pw) = (self.kh / 2, self.kw / 2);
        let mut gx = vec![0.0; self.c_in * bs];
        for ci in 0..self.c_in {
            for dy in 0..self.kh {
                for dx in 0..self.kw {
                    let row = (ci * self.kh + dy) * self.kw + dx;
                    let src_row = &gcols[row * bs..(row + 1) * bs];
                    for b in 0..batch {
                        let src = &src_row[b * s..(b + 1) * s];
                        let dst = &mut gx[ci * bs + b * s..ci * bs + (b + 1) * s];
                        for y in 0..self.h {
                            let sy = y as isize + dy as isize - ph as isize;
                            if sy < 0 || sy >= self.h as isize {
                                continue;
                            }
                            let sy = sy as usize;
                            let x_lo = pw.saturating_sub(dx);
                            let x_hi = (self.w + pw).saturating_sub(dx).min(self.w);
                            if x_lo >= x_hi {
                                continue;
                            }
                            let dst_lo = x_lo + dx - pw;
                            let n = x_hi - x_lo;
                            let d = &mut dst[sy * self.w + dst_lo..sy * self.w + dst_lo + n];
                            for (o, v) in
                                d.iter_mut().zip(&src[y * self.w + x_lo..y * self.w + x_hi])
                            {
                                *o += v;
                            }
                        }
                    }
                }
            }
        }
        gx
    }

    pub fn forward(&self, x: &[f64], batch: usize) -> (Vec<f64>, ConvCache) {
        let bs = batch * self.spatial();
        debug_assert_eq!(x.len(), self.c_in * bs);
        let cols = self.im2col(x, batch);
        let mut out = vec![0.0; self.c_out * bs];
        for (co, row) in out.chunks_mut(bs).enumerate() {
            row.iter_mut().for_each(|v| *v = self.bias.data[co]);
        }
        gemm(
            self.c_out,
            self.patch(),
            bs,
            &self.weight.data,
            false,
            &cols,
            false,
            &mut out,
            1.0,
        );
        (out, ConvCache { cols, batch })
    }

    /// Returns the input cotangent; accumulates weight/bias gradients when `grads` is given.
    pub fn backward(
        &self,
        cache: &ConvCache,
        gout: &[f64],
        batch: usize,
        grads: Option<(&mut [f64], &mut [f64])>,
    ) -> Result<Vec<f64>> {
        let bs = batch * self.spatial();
        if gout.len() != self.c_out * bs {
            return Err(Error::LengthMismatch {
                expected: self.c_out * bs,
                actual: gout.len(),
            });
        }
        if let Some((gw, gb)) = grads {
            if cache.batch != batch {
                return Err(Error::invalid(
                    "weight gradients need a matching forward batch",
                ));
            }
            gemm(
                self.c_out,
                bs,
                self.patch(),
                gout,
                false,
                &cache.cols,
                true,
                gw,
                1.0,
            );
            for (co, row) in gout.chunks(bs).enumerate() {
                gb[co] += row.iter().sum::<f64>();
            }
        }
        let mut gcols = vec![0.0; self.patch() * bs];
        gemm(
            self.patch(),
            self.c_out,
            bs,
            &self.weight.data,
            true,
            gout,
            false,
            &mut gcols,
            0.0,
        );
        Ok(self.col2im(&gcols, batch))
    }
}

/// Per-channel batch normalization over `(B, S)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f64,
    pub momentum: f64,
}

pub enum BatchNormCache {
    Infer {
        scale: Vec<f64>,
    },
    Train {
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        means: Vec<f64>,
        /// Unbiased batch variances.
        vars: Vec<f64>,
    },
}

impl BatchNorm {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            channels,
            gamma: Tensor::new(
                format!("{name}.gamma"),
                vec![channels],
                vec![1.0; channels],
                true,
            ),
            beta: Tensor::zeros(format!("{name}.beta"), vec![channels], true),
            running_mean: Tensor::zeros(format!("{name}.running_mean"), vec![channels], false),
            running_var: Tensor::new(
                format!("{name}.running_var"),
                vec![channels],
                vec![1.0; channels],
                false,
            ),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    /// Normalizes in place. Training mode uses batch statistics; fold them into the
    /// running estimates with [`BatchNorm::update_running`].
    pub fn forward(&self, x: &mut [f64], mode: Mode) -> BatchNormCache {
        let per = x.len() / self.channels;
        match mode {
            Mode::Infer => {
                let scale: Vec<f64> = (0..self.channels)
                    .map(|c| self.gamma.data[c] / (self.running_var.data[c] + self.eps).sqrt())
                    .collect();
                for (c, row) in x.chunks_mut(per).enumerate() {
                    let shift = self.beta.data[c] - self.running_mean.data[c] * scale[c];
                    row.iter_mut().for_each(|v| *v = *v * scale[c] + shift);
                }
                BatchNormCache::Infer { scale }
            }
            Mode::Train => {
                let mut xhat = vec![0.0; x.len()];
                let mut inv_std = vec![0.0; self.channels];
                let mut means = vec![0.0; self.channels];
                let mut vars = vec![0.0; self.channels];
                for (c, row) in x.chunks_mut(per).enumerate() {
                    let mean = row.iter().sum::<f64>() / per as f64;
                    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / per as f64;
                    let istd = 1.0 / (var + self.eps).sqrt();
                    inv_std[c] = istd;
                    means[c] = mean;
                    vars[c] = if per > 1 {
                        var * per as f64 / (per - 1) as f64
                    } else {
                        var
                    };
                    let (g, b) = (self.gamma.data[c], self.beta.data[c]);
                    for (v, xh) in row.iter_mut().zip(&mut xhat[c * per..(c + 1) * per]) {
                        *xh = (*v - mean) * istd;
                        *v = g * *xh + b;
                    }
                }
                BatchNormCache::Train {
                    xhat,
                    inv_std,
                    means,
                    vars,
                }
            }
        }
    }

    pub fn update_running(&mut self, cache: &BatchNormCache) {
        if let BatchNormCache::Train { means, vars, .. } = cache {
            let m = self.momentum;
            for c in 0..self.channels {
                self.running_mean.data[c] = (1.0 - m) * self.running_mean.data[c] + m * means[c];
                self.running_var.data[c] = (1.0 - m) * self.running_var.data[c] + m * vars[c];
            }
        }
    }

    pub fn backward(
        &self,
        cache: &BatchNormCache,
        gout: &mut [f64],
        grads: Option<(&mut [f64], &mut [f64])>,
    ) -> Result<()> {
        let per = gout.len() / self.channels;
        match cache {
            BatchNormCache::Infer { scale } => {
                if grads.is_some() {
                    return Err(Error::invalid(
                        "parameter gradients require a training-mode forward",
                    ));
                }
                for (c, row) in gout.chunks_mut(per).enumerate() {
                    row.iter_mut().for_each(|v| *v *= scale[c]);
                }
            }
            BatchNormCache::Train { xhat, inv_std, .. } => {
                let (gg, gbeta) = grads
                    .ok_or_else(|| Error::invalid("training backward needs gradient buffers"))?;
                if xhat.len() != gout.len() {
                    return Err(Error::invalid(
                        "training-mode batch norm cannot broadcast cotangents",
                    ));
                }
                let n = per as f64;
                for (c, row) in gout.chunks_mut(per).enumerate() {
                    let xh = &xhat[c * per..(c + 1) * per];
                    let sum_g: f64 = row.iter().sum();
                    let sum_gx: f64 = row.iter().zip(xh).map(|(g, x)| g * x).sum();
                    gbeta[c] += sum_g;
                    gg[c] += sum_gx;
                    let k = self.gamma.data[c] * inv_std[c] / n;
                    for (g, x) in row.iter_mut().zip(xh) {
                        *g = k * (n * *g - sum_g - x * sum_gx);
                    }
                }
            }
        }
        Ok(())
    }
}

/// In-place ReLU; returns the activation mask (`(C, B, S)` of the forward batch).
pub fn relu_forward(x: &mut [f64]) -> Vec<bool> {
    x.iter_mut()
        .map(|v| {
            if *v > 0.0 {
                true
            } else {
                *v = 0.0;
                false
            }
        })
        .collect()
}

pub fn relu_backward(
    mask: &[bool],
    gout: &mut [f64],
    channels: usize,
    spatial: usize,
    cached_batch: usize,
    grad_batch: usize,
) -> Result<()> {
    check_broadcast(cached_batch, grad_batch)?;
    for c in 0..channels {
        for b in 0..grad_batch {
            let cb = cache_row(b, cached_batch);
            let m = &mask[(c * cached_batch + cb) * spatial..(c * cached_batch + cb + 1) * spatial];
            let g = &mut gout[(c * grad_batch + b) * spatial..(c * grad_batch + b + 1) * spatial];
            for (gv, &keep) in g.iter_mut().zip(m) {
                if !keep {
                    *gv = 0.0;
                }
            }
        }
    }
    Ok(())
}

/// Non-overlapping 1-D max pooling on `(C, B, L)`; trailing samples that do not fill a window are dropped.
pub fn maxpool_forward(
    x: &[f64],
    channels: usize,
    batch: usize,
    len: usize,
    pool: usize,
) -> (Vec<f64>, Vec<u32>) {
    let out_len = len / pool;
    let mut out = Vec::with_capacity(channels * batch * out_len);
    let mut arg = Vec::with_capacity(channels * batch * out_len);
    for row in x.chunks(len).take(channels * batch) {
        for o in 0..out_len {
            let win = &row[o * pool..(o + 1) * pool];
            let mut best = 0;
            for (i, v) in win.iter().enumerate() {
                if *v > win[best] {
                    best = i;
                }
            }
            out.push(win[best]);
            arg.push((o * pool + best) as u32);
        }
    }
    (out, arg)
}

pub fn maxpool_backward(
    arg: &[u32],
    gout: &[f64],
    channels: usize,
    len: usize,
    pool: usize,
    cached_batch: usize,
    grad_batch: usize,
) -> Result<Vec<f64>> {
    check_broadcast(cached_batch, grad_batch)?;
    let out_len = len / pool;
    let mut gx = vec![0.0; channels * grad_batch * len];
    for c in 0..channels {
        for b in 0..grad_batch {
            let cb = cache_row(b, cached_batch);
            let a = &arg[(c * cached_batch + cb) * out_len..(c * cached_batch + cb + 1) * out_len];
            let g = &gout[(c * grad_batch + b) * out_len..(c * grad_batch + b + 1) * out_len];
            let dst = &mut gx[(c * grad_batch + b) * len..(c * grad_batch + b + 1) * len];
            for (&i, &v) in a.iter().zip(g) {
                dst[i as usize] += v;
            }
        }
    }
    Ok(gx)
}

/// `(B, in) -> (B, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new(name: &str, n_in: usize, n_out: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (n_in + n_out) as f64).sqrt();
        let data = (0..n_in * n_out)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self {
            n_in,
            n_out,
            weight: Tensor::new(format!("{name}.weight"), vec![n_out, n_in], data, true),
            bias: Tensor::zeros(format!("{name}.bias"), vec![n_out], true),
        }
    }

    pub fn forward(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(batch * self.n_out);
        for _ in 0..batch {
            out.extend_from_slice(&self.bias.data);
        }
        gemm(
            batch,
            self.n_in,
            self.n_out,
            x,
            false,
            &self.weight.data,
            true,
            &mut out,
            1.0,
        );
        out
    }

    pub fn backward(
        &self,
        x: &[f64],
        gout: &[f64],
        batch: usize,
        grads: Option<(&mut [f64], &mut [f64])>,
    ) -> Vec<f64> {
        if let Some((gw, gb)) = grads {
            gemm(self.n_out, batch, self.n_in, gout, true, x, false, gw, 1.0);
            for row in gout.chunks(self.n_out) {
                for (g, v) in gb.iter_mut().zip(row) {
                    *g += v;
                }
            }
        }
        let mut gx = vec![0.0; batch * self.n_in];
        gemm(
            batch,
            self.n_out,
            self.n_in,
            gout,
            false,
            &self.weight.data,
            false,
            &mut gx,
            0.0,
        );
        gx
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Single-layer LSTM over `(B, T, D)` returning the final hidden state `(B, H)`.
/// Gate order: input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub n_in: usize,
    pub hidden: usize,
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub bias: Tensor,
}

pub struct LstmCache {
    batch: usize,
    steps: usize,
    /// Gate activations `(T, B, 4H)`.
    gates: Vec<f64>,
    /// Cell states `(T + 1, B, H)`, index 0 is the zero initial state.
    cells: Vec<f64>,
    /// Hidden states `(T + 1, B, H)`.
    hiddens: Vec<f64>,
}

impl Lstm {
    pub fn new(name: &str, n_in: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut draw =
            |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-bound..bound)).collect() };
        let w_ih = draw(4 * hidden * n_in);
        let w_hh = draw(4 * hidden * hidden);
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
        Self {
            n_in,
            hidden,
            w_ih: Tensor::new(format!("{name}.w_ih"), vec![4 * hidden, n_in], w_ih, true),
            w_hh: Tensor::new(format!("{name}.w_hh"), vec![4 * hidden, hidden], w_hh, true),
            bias: Tensor::new(format!("{name}.bias"), vec![4 * hidden], bias, true),
        }
    }

    pub fn forward(&self, x: &[f64], batch: usize, steps: usize) -> (Vec<f64>, LstmCache) {
        let h = self.hidden;
        let g4 = 4 * h;
        let mut pre = Vec::with_capacity(batch * steps * g4);
        for _ in 0..batch * steps {
            pre.extend_from_slice(&self.bias.data);
        }
        // (B*T, D) x (D, 4H)
        gemm(
            batch * steps,
            self.n_in,
            g4,
            x,
            false,
            &self.w_ih.data,
            true,
            &mut pre,
            1.0,
        );

        let mut gates = vec![0.0; steps * batch * g4];
        let mut cells = vec![0.0; (steps + 1) * batch * h];
        let mut hiddens = vec![0.0; (steps + 1) * batch * h];
        let mut a = vec![0.0; batch * g4];
        for t in 0..steps {
            for b in 0..batch {
                a[b * g4..(b + 1) * g4]
                    .copy_from_slice(&pre[(b * steps + t) * g4..(b * steps + t + 1) * g4]);
            }
            let (prev_h, _) = hiddens.split_at(((t + 1) * batch) * h);
            let prev_h = &prev_h[t * batch * h..];
            gemm(
                batch,
                h,
                g4,
                prev_h,
                false,
                &self.w_hh.data,
                true,
                &mut a,
                1.0,
            );
            for b in 0..batch {
                let ab = &a[b * g4..(b + 1) * g4];
                let gt = &mut gates[(t * batch + b) * g4..(t * batch + b + 1) * g4];
                for j in 0..h {
                    let i = sigmoid(ab[j]);
                    let f = sigmoid(ab[h + j]);
                    let g = ab[2 * h + j].tanh();
                    let o = sigmoid(ab[3 * h + j]);
                    gt[j] = i;
                    gt[h + j] = f;
                    gt[2 * h + j] = g;
                    gt[3 * h + j] = o;
                    let c_prev = cells[(t * batch + b) * h + j];
                    let c = f * c_prev + i * g;
                    cells[((t + 1) * batch + b) * h + j] = c;
                    hiddens[((t + 1) * batch + b) * h + j] = o * c.tanh();
                }
            }
        }
        let out = hiddens[steps * batch * h..].to_vec();
        (
            out,
            LstmCache {
                batch,
                steps,
                gates,
                cells,
                hiddens,
            },
        )
    }

    /// `x` is the forward input; only read when parameter gradients are requested.
    pub fn backward(
        &self,
        cache: &LstmCache,
        x: &[f64],
        gout: &[f64],
        grad_batch: usize,
        grads: Option<(&mut [f64], &mut [f64], &mut [f64])>,
    ) -> Result<Vec<f64>> {
        check_broadcast(cache.batch, grad_batch)?;
        let (h, g4, steps, cb) = (self.hidden, 4 * self.hidden, cache.steps, cache.batch);
        let mut dh = gout.to_vec();
        let mut dc = vec![0.0; grad_batch * h];
        let mut da_all = vec![0.0; grad_batch * steps * g4];
        let mut da = vec![0.0; grad_batch * g4];
        let mut grads = grads;
        if grads.is_some() && cb != grad_batch {
            return Err(Error::invalid(
                "weight gradients need a matching forward batch",
            ));
        }
        for t in (0..steps).rev() {
            for b in 0..grad_batch {
                let bc = cache_row(b, cb);
                let gt = &cache.gates[(t * cb + bc) * g4..(t * cb + bc + 1) * g4];
                let c = &cache.cells[((t + 1) * cb + bc) * h..((t + 1) * cb + bc + 1) * h];
                let c_prev = &cache.cells[(t * cb + bc) * h..(t * cb + bc + 1) * h];
                let dab = &mut da[b * g4..(b + 1) * g4];
                for j in 0..h {
                    let (i, f, g, o) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
                    let tc = c[j].tanh();
                    let dhv = dh[b * h + j];
                    let d_o = dhv * tc;
                    let dcv = dc[b * h + j] + dhv * o * (1.0 - tc * tc);
                    let di = dcv * g;
                    let dg = dcv * i;
                    let df = dcv * c_prev[j];
                    dc[b * h + j] = dcv * f;
                    dab[j] = di * i * (1.0 - i);
                    dab[h + j] = df * f * (1.0 - f);
                    dab[2 * h + j] = dg * (1.0 - g * g);
                    dab[3 * h + j] = d_o * o * (1.0 - o);
                }
                da_all[(b * steps + t) * g4..(b * steps + t + 1) * g4].copy_from_slice(dab);
            }
            if let Some((_, gw_hh, _)) = grads.as_mut() {
                let prev_h = &cache.hiddens[t * cb * h..(t + 1) * cb * h];
                gemm(g4, grad_batch, h, &da, true, prev_h, false, gw_hh, 1.0);
            }
            gemm(
                grad_batch,
                g4,
                h,
                &da,
                false,
                &self.w_hh.data,
                false,
                &mut dh,
                0.0,
            );
        }
        if let Some((gw_ih, _, gbias)) = grads {
            gemm(
                g4,
                grad_batch * steps,
                self.n_in,
                &da_all,
                true,
                x,
                false,
                gw_ih,
                1.0,
            );
            for row in da_all.chunks(g4) {
                for (g, v) in gbias.iter_mut().zip(row) {
                    *g += v;
                }
            }
        }
        let mut gx = vec![0.0; grad_batch * steps * self.n_in];
        gemm(
            grad_batch * steps,
            g4,
            self.n_in,
            &da_all,
            false,
            &self.w_ih.data,
            false,
            &mut gx,
            0.0,
        );
        Ok(gx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn dotp(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn gemm_transposes() {
        // A = [[1,2],[3,4]], B = [[5,6],[7,8]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, &a, false, &b, false, &mut c, 0.0);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        gemm(2, 2, 2, &a, true, &b, false, &mut c, 0.0);
        assert_eq!(c, [26.0, 30.0, 38.0, 44.0]);
        gemm(2, 2, 2, &a, false, &b, true, &mut c, 0.0);
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
    }

    #[test]
    fn conv1d_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let conv = Conv::new("c", 2, 3, (1, 5), (1, 11), &mut rng);
        let x = rand_vec(&mut rng, 2 * 2 * 11);
        let (out, _) = conv.forward(&x, 2);
        for co in 0..3 {
            for b in 0..2 {
                for l in 0..11 {
                    let mut acc = conv.bias.data[co];
                    for ci in 0..2 {
                        for j in 0..5 {
                            let src = l as isize + j as isize - 2;
                            if (0..11).contains(&src) {
                                acc += conv.weight.data[(co * 2 + ci) * 5 + j]
                                    * x[ci * 22 + b * 11 + src as usize];
                            }
                        }
                    }
                    assert!((out[co * 22 + b * 11 + l] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conv2d_adjoint_and_weight_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let conv = Conv::new("c", 2, 3, (3, 3), (4, 5), &mut rng);
        let x = rand_vec(&mut rng, 2 * 2 * 20);
        let w = rand_vec(&mut rng, 3 * 2 * 20);
        let (out, cache) = conv.forward(&x, 2);
        let mut gw = vec![0.0; conv.weight.len()];
        let mut gb = vec![0.0; 3];
        let gx = conv
            .backward(&cache, &w, 2, Some((&mut gw, &mut gb)))
            .unwrap();
        let base = dotp(&out, &w);
        // Input gradient: the map is affine in x.
        let d = rand_vec(&mut rng, x.len());
        let xp: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
        let (outp, _) = conv.forward(&xp, 2);
        assert!((dotp(&outp, &w) - base - dotp(&gx, &d)).abs() < 1e-10);
        // Weight gradient: also affine in the weights.
        let mut conv2 = conv.clone();
        let dw = rand_vec(&mut rng, gw.len());
        conv2
            .weight
            .data
            .iter_mut()
            .zip(&dw)
            .for_each(|(a, b)| *a += b);
        let (outw, _) = conv2.forward(&x, 2);
        assert!((dotp(&outw, &w) - base - dotp(&gw, &dw)).abs() < 1e-10);
        assert!((gb[0] - w[..40].iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_train_gradient_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut bn = BatchNorm::new("bn", 2);
        bn.running_mean.data = vec![0.0, 0.0];
        bn.gamma.data = vec![1.5, -0.5];
        bn.beta.data = vec![0.1, 0.2];
        let x = rand_vec(&mut rng, 2 * 3 * 4);
        let w = rand_vec(&mut rng, x.len());
        let f = |x: &[f64]| {
            let mut y = x.to_vec();
            bn.forward(&mut y, Mode::Train);
            dotp(&y, &w)
        };
        let mut y = x.clone();
        let cache = bn.forward(&mut y, Mode::Train);
        let mut g = w.clone();
        let mut gg = vec![0.0; 2];
        let mut gbeta = vec![0.0; 2];
        bn.backward(&cache, &mut g, Some((&mut gg, &mut gbeta)))
            .unwrap();
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "i={i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn pool_and_relu_broadcast() {
        let x = vec![1.0, 3.0, 2.0, 0.0, -1.0, 5.0, 4.0, 4.5, 9.0];
        let (out, arg) = maxpool_forward(&x, 1, 1, 9, 4);
        assert_eq!(out, vec![3.0, 5.0]);
        assert_eq!(arg, vec![1, 5]);
        let g = maxpool_backward(&arg, &[1.0, 2.0, 10.0, 20.0], 1, 9, 4, 1, 2).unwrap();
        assert_eq!(g[1], 1.0);
        assert_eq!(g[5], 2.0);
        assert_eq!(g[9 + 1], 10.0);
        assert_eq!(g[9 + 5], 20.0);
        assert_eq!(g.iter().sum::<f64>(), 33.0);

        let mut y = vec![1.0, -1.0, 0.5];
        let mask = relu_forward(&mut y);
        assert_eq!(y, vec![1.0, 0.0, 0.5]);
        let mut gy = vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0];
        relu_backward(&mask, &mut gy, 1, 3, 1, 2).unwrap();
        assert_eq!(gy, vec![1.0, 0.0, 1.0, 2.0, 0.0, 2.0]);
        assert!(relu_backward(&mask, &mut gy, 1, 1, 2, 3).is_err());
    }

    #[test]
    fn lstm_gradients_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let lstm = Lstm::new("l", 3, 4, &mut rng);
        let (batch, steps) = (2, 5);
        let x = rand_vec(&mut rng, batch * steps * 3);
        let w = rand_vec(&mut rng, batch * 4);
        let (_, cache) = lstm.forward(&x, batch, steps);
        let mut gih = vec![0.0; lstm.w_ih.len()];
        let mut ghh = vec![0.0; lstm.w_hh.len()];
        let mut gb = vec![0.0; lstm.bias.len()];
        let gx = lstm
            .backward(&cache, &x, &w, batch, Some((&mut gih, &mut ghh, &mut gb)))
            .unwrap();
        let h = 1e-6;
        let f = |l: &Lstm, x: &[f64]| dotp(&l.forward(x, batch, steps).0, &w);
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (f(&lstm, &xp) - f(&lstm, &xm)) / (2.0 * h);
            assert!((fd - gx[i]).abs() < 1e-7);
        }
        for (which, grad) in [(0usize, &gih), (1, &ghh), (2, &gb)] {
            for i in (0..grad.len()).step_by(7) {
                let mut lp = lstm.clone();
                let mut lm = lstm.clone();
                let (tp, tm) = match which {
                    0 => (&mut lp.w_ih, &mut lm.w_ih),
                    1 => (&mut lp.w_hh, &mut lm.w_hh),
                    _ => (&mut lp.bias, &mut lm.bias),
                };
                tp.data[i] += h;
                tm.data[i] -= h;
                let fd = (f(&lp, &x) - f(&lm, &x)) / (2.0 * h);
                assert!((fd - grad[i]).abs() < 1e-7, "tensor {which} idx {i}");
            }
        }
    }

    #[test]
    fn lstm_broadcast_matches_per_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lstm = Lstm::new("l", 3, 4, &mut rng);
        let x = rand_vec(&mut rng, 6 * 3);
        let (_, cache) = lstm.forward(&x, 1, 6);
        let w = rand_vec(&mut rng, 2 * 4);
        let both = lstm.backward(&cache, &x, &w, 2, None).unwrap();
        let first = lstm.backward(&cache, &x, &w[..4], 1, None).unwrap();
        let second = lstm.backward(&cache, &x, &w[4..], 1, None).unwrap();
        assert_eq!(&both[..18], &first[..]);
        assert_eq!(&both[18..], &second[..]);
    }
}
