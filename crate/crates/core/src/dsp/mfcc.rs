//! Differentiable MFCC front end.
//!
//! Pipeline per frame: Hann window, zero-padded FFT, power spectrum, triangular
//! mel filterbank, `ln(e + floor)`, orthonormal DCT-II truncated to the first
//! `n_coeffs` coefficients. [`Mfcc::backward`] is the exact adjoint of the
//! Jacobian at the cached point, so gradients flow back onto raw samples.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::fft::{plan_forward, plan_inverse};
use crate::error::{ensure_len, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub log_floor: f64,
}

impl MfccConfig {
    /// 25 ms frames, 10 ms hop, 64 mel filters, 40 coefficients.
    pub fn for_rate(sample_rate: u32) -> Self {
        let frame_len = (sample_rate as usize * 25) / 1000;
        let hop = (sample_rate as usize * 10) / 1000;
        Self {
            sample_rate,
            frame_len,
            hop,
            n_fft: (2 * frame_len).next_power_of_two(),
            n_mels: 64,
            n_coeffs: 40,
            log_floor: 1e-10,
        }
    }

    pub fn frame_count(&self, n: usize) -> usize {
        if n < self.frame_len {
            0
        } else {
            1 + (n - self.frame_len) / self.hop
        }
    }

    fn validate(&self) -> Result<()> {
        if self.frame_len == 0 || self.hop == 0 {
            return Err(Error::invalid("frame length and hop must be positive"));
        }
        if self.n_fft < self.frame_len {
            return Err(Error::invalid("n_fft must be at least the frame length"));
        }
        if self.n_coeffs == 0 || self.n_coeffs > self.n_mels {
            return Err(Error::invalid("coefficient count must be in 1..=n_mels"));
        }
        if self.log_floor <= 0.0 {
            return Err(Error::invalid("log floor must be positive"));
        }
        Ok(())
    }
}

/// `frames x coeffs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub frames: usize,
    pub coeffs: usize,
    pub frame_len: usize,
    pub hop: usize,
    pub values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn row(&self, frame: usize) -> &[f64] {
        &self.values[frame * self.coeffs..(frame + 1) * self.coeffs]
    }
}

struct MelFilter {
    start: usize,
    weights: Vec<f64>,
}

pub struct Mfcc {
    cfg: MfccConfig,
    window: Vec<f64>,
    filters: Vec<MelFilter>,
    /// `n_coeffs x n_mels`.
    dct: Vec<f64>,
}

/// Forward state needed by [`Mfcc::backward`].
pub struct MfccCache {
    len: usize,
    frames: usize,
    spectra: Vec<Complex64>,
    mel: Vec<f64>,
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

impl Mfcc {
    pub fn new(cfg: MfccConfig) -> Result<Self> {
        cfg.validate()?;
        let window = (0..cfg.frame_len)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / cfg.frame_len as f64).cos())
            .collect();

        let n_bins = cfg.n_fft / 2 + 1;
        let lo = hz_to_mel(0.0);
        let hi = hz_to_mel(cfg.sample_rate as f64 / 2.0);
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let bin_hz = cfg.sample_rate as f64 / cfg.n_fft as f64;
        let filters = (0..cfg.n_mels)
            .map(|m| {
                let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
                let mut start = None;
                let mut weights = Vec::new();
                for k in 0..n_bins {
                    let f = k as f64 * bin_hz;
                    let w = ((f - l) / (c - l)).min((r - f) / (r - c)).max(0.0);
                    if w > 0.0 {
                        if start.is_none() {
                            start = Some(k);
                        }
                        weights.push(w);
                    } else if start.is_some() {
                        break;
                    }
                }
                MelFilter {
                    start: start.unwrap_or(0),
                    weights,
                }
            })
            .collect();

        let m = cfg.n_mels as f64;
        let mut dct = vec![0.0; cfg.n_coeffs * cfg.n_mels];
        for j in 0..cfg.n_coeffs {
            let s = if j == 0 {
                (1.0 / m).sqrt()
            } else {
                (2.0 / m).sqrt()
            };
            for i in 0..cfg.n_mels {
                dct[j * cfg.n_mels + i] =
                    s * (PI * j as f64 * (2 * i + 1) as f64 / (2.0 * m)).cos();
            }
        }

        Ok(Self {
            cfg,
            window,
            filters,
            dct,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    /// Center frequency in Hz of each mel filter.
    pub fn filter_centers_hz(&self) -> Vec<f64> {
        let lo = hz_to_mel(0.0);
        let hi = hz_to_mel(self.cfg.sample_rate as f64 / 2.0);
        (1..=self.cfg.n_mels)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (self.cfg.n_mels + 1) as f64))
            .collect()
    }

    pub fn compute(&self, x: &[f64]) -> Result<FeatureMatrix> {
        Ok(self.forward(x)?.0)
    }

    /// Mel filterbank energies per frame (`frames x n_mels`, row-major), before the log.
    pub fn mel_energies(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.1.mel)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(FeatureMatrix, MfccCache)> {
        let cfg = &self.cfg;
        if x.len() < cfg.frame_len {
            return Err(Error::invalid(format!(
                "frame length {} exceeds signal length {}",
                cfg.frame_len,
                x.len()
            )));
        }
        let frames = cfg.frame_count(x.len());
        let n_bins = cfg.n_fft / 2 + 1;
        let fft = plan_forward(cfg.n_fft);

        let mut spectra = Vec::with_capacity(frames * n_bins);
        let mut mel = Vec::with_capacity(frames * cfg.n_mels);
        let mut values = Vec::with_capacity(frames * cfg.n_coeffs);
        let mut buf = vec![Complex64::new(0.0, 0.0); cfg.n_fft];
        let mut logs = vec![0.0; cfg.n_mels];

        for f in 0..frames {
            let start = f * cfg.hop;
            buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for (n, w) in self.window.iter().enumerate() {
                buf[n].re = x[start + n] * w;
            }
            fft.process(&mut buf);
            spectra.extend_from_slice(&buf[..n_bins]);
            for (filter, log) in self.filters.iter().zip(logs.iter_mut()) {
                let e: f64 = filter
                    .weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| w * buf[filter.start + i].norm_sqr())
                    .sum();
                mel.push(e);
                *log = (e + cfg.log_floor).ln();
            }
            for j in 0..cfg.n_coeffs {
                let row = &self.dct[j * cfg.n_mels..(j + 1) * cfg.n_mels];
                values.push(row.iter().zip(&logs).map(|(d, l)| d * l).sum());
            }
        }

        Ok((
            FeatureMatrix {
                frames,
                coeffs: cfg.n_coeffs,
                frame_len: cfg.frame_len,
                hop: cfg.hop,
                values,
            },
            MfccCache {
                len: x.len(),
                frames,
                spectra,
                mel,
            },
        ))
    }

    /// Pulls a cotangent on the feature matrix back onto the waveform.
    pub fn backward(&self, cache: &MfccCache, grad: &[f64]) -> Result<Vec<f64>> {
        let cfg = &self.cfg;
        ensure_len(cache.frames * cfg.n_coeffs, grad.len())?;
        let n_bins = cfg.n_fft / 2 + 1;
        let ifft = plan_inverse(cfg.n_fft);
        let mut gx = vec![0.0; cache.len];
        let mut g_mel = vec![0.0; cfg.n_mels];
        let mut g_pow = vec![0.0; n_bins];
        let mut buf = vec![Complex64::new(0.0, 0.0); cfg.n_fft];

        for f in 0..cache.frames {
            let g = &grad[f * cfg.n_coeffs..(f + 1) * cfg.n_coeffs];
            let mel = &cache.mel[f * cfg.n_mels..(f + 1) * cfg.n_mels];
            for (i, gm) in g_mel.iter_mut().enumerate() {
                let gl: f64 = g
                    .iter()
                    .enumerate()
                    .map(|(j, gj)| gj * self.dct[j * cfg.n_mels + i])
                    .sum();
                *gm = gl / (mel[i] + cfg.log_floor);
            }
            g_pow.iter_mut().for_each(|v| *v = 0.0);
            for (filter, gm) in self.filters.iter().zip(&g_mel) {
                for (i, w) in filter.weights.iter().enumerate() {
                    g_pow[filter.start + i] += w * gm;
                }
            }
            let spec = &cache.spectra[f * n_bins..(f + 1) * n_bins];
            buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for k in 0..n_bins {
                buf[k] = spec[k] * g_pow[k];
            }
            // d|X_k|^2 / dx_n = 2 Re(X_k e^{+i 2 pi k n / n_fft})
            ifft.process(&mut buf);
            let start = f * cfg.hop;
            for (n, w) in self.window.iter().enumerate() {
                gx[start + n] += 2.0 * buf[n].re * w;
            }
        }
        Ok(gx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mfcc() -> Mfcc {
        Mfcc::new(MfccConfig::for_rate(8000)).unwrap()
    }

    #[test]
    fn shape_for_one_second_clip() {
        let m = mfcc();
        let cfg = m.config();
        assert_eq!((cfg.frame_len, cfg.hop), (200, 80));
        let f = m.compute(&vec![0.1; 8000]).unwrap();
        assert_eq!(f.coeffs, 40);
        assert_eq!(f.frames, 1 + (8000 - 200) / 80);
        assert_eq!(f.values.len(), f.frames * 40);
    }

    #[test]
    fn silence_is_dct_of_log_floor() {
        let m = mfcc();
        let f = m.compute(&vec![0.0; 1000]).unwrap();
        // DCT-II (orthonormal) of a constant vector c over 64 mels is [8c, 0, 0, ...].
        let c0 = 64f64.sqrt() * (1e-10f64).ln();
        for row in 0..f.frames {
            let r = f.row(row);
            assert!((r[0] - c0).abs() < 1e-9);
            assert!(r[1..].iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn tone_peaks_in_band_containing_it() {
        let m = mfcc();
        let x: Vec<f64> = (0..8000)
            .map(|n| (2.0 * PI * 1000.0 * n as f64 / 8000.0).sin())
            .collect();
        let energies = m.mel_energies(&x).unwrap();
        let frame = &energies[..64];
        let argmax = (0..64)
            .max_by(|&a, &b| frame[a].total_cmp(&frame[b]))
            .unwrap();

        // Independent oracle: triangular response of each filter evaluated at 1 kHz.
        let lo = hz_to_mel(0.0);
        let hi = hz_to_mel(4000.0);
        let edge = |i: usize| mel_to_hz(lo + (hi - lo) * i as f64 / 65.0);
        let resp: Vec<f64> = (0..64)
            .map(|i| {
                let (l, c, r) = (edge(i), edge(i + 1), edge(i + 2));
                ((1000.0 - l) / (c - l))
                    .min((r - 1000.0) / (r - c))
                    .max(0.0)
            })
            .collect();
        let expected = (0..64)
            .max_by(|&a, &b| resp[a].total_cmp(&resp[b]))
            .unwrap();
        assert_eq!(argmax, expected);
    }

    #[test]
    fn frame_longer_than_signal_errors() {
        assert!(mfcc().compute(&[0.0; 100]).is_err());
    }

    #[test]
    fn adjoint_matches_finite_differences() {
        let m = mfcc();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..3 {
            let x: Vec<f64> = (0..800).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let d: Vec<f64> = (0..800).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (feat, cache) = m.forward(&x).unwrap();
            let w: Vec<f64> = (0..feat.values.len())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let g = m.backward(&cache, &w).unwrap();
            let analytic: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            let h = 1e-6;
            let eval = |s: f64| {
                let xp: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + s * b).collect();
                let f = m.compute(&xp).unwrap();
                f.values.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            assert!(
                (fd - analytic).abs() / fd.abs().max(analytic.abs()) < 1e-4,
                "{fd} vs {analytic}"
            );
        }
    }
}
