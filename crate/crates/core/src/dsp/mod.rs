//! Signal types and the transforms everything else is built on.

pub mod csvio;
mod fft;
mod mfcc;
mod resample;
mod smooth;
pub mod wav;

pub use fft::{inverse_real_fft, real_fft, ComplexSpectrum};
pub use mfcc::{FeatureMatrix, Mfcc, MfccCache, MfccConfig};
pub use num_complex::Complex64;
pub use resample::decimate;
pub use smooth::{gaussian_kernel, gaussian_smooth};

use crate::error::{ensure_len, Error, Result};

/// Fixed-rate mono audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("waveform must contain at least one sample"));
        }
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len.max(1)],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            samples: self.samples.iter().map(|&s| f(s)).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Rotates `x` so that `out[i] = x[(i + tau) mod N]`.
pub fn cyclic_shift(x: &Waveform, tau: i64) -> Waveform {
    Waveform {
        samples: cyclic_shift_slice(x.samples(), tau),
        sample_rate: x.sample_rate,
    }
}

pub fn cyclic_shift_slice(x: &[f64], tau: i64) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let r = tau.rem_euclid(n as i64) as usize;
    let mut out = Vec::with_capacity(n);
    out.extend_from_slice(&x[r..]);
    out.extend_from_slice(&x[..r]);
    out
}

pub fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean squared amplitude.
pub fn power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// `10 log10(P_signal / P_noise)`. A noise of zero power yields `f64::INFINITY`.
pub fn snr_db(signal: &[f64], noise: &[f64]) -> Result<f64> {
    ensure_len(signal.len(), noise.len())?;
    let pn = power(noise);
    if pn == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (power(signal) / pn).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shift_examples() {
        let x = Waveform::new(vec![1.0, 2.0, 3.0, 4.0], 8000).unwrap();
        assert_eq!(cyclic_shift(&x, 1).samples(), &[2.0, 3.0, 4.0, 1.0]);
        assert_eq!(cyclic_shift(&x, 0), x);
        assert_eq!(cyclic_shift(&x, 4), x);
        assert_eq!(cyclic_shift(&x, -1).samples(), &[4.0, 1.0, 2.0, 3.0]);
        assert_eq!(cyclic_shift(&x, 1).sample_rate(), 8000);
    }

    #[test]
    fn snr_examples() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 * 0.3).sin()).collect();
        assert!(snr_db(&x, &x).unwrap().abs() < 1e-12);
        let n: Vec<f64> = x.iter().map(|v| v / 10f64.sqrt()).collect();
        assert!((snr_db(&x, &n).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(snr_db(&x, &vec![0.0; 100]).unwrap(), f64::INFINITY);
        assert!(snr_db(&x, &x[..50]).is_err());
        assert_eq!(l2_norm(&[0.0; 16]), 0.0);
    }

    #[test]
    fn waveform_rejects_bad_input() {
        assert!(Waveform::new(vec![], 8000).is_err());
        assert!(Waveform::new(vec![f64::NAN], 8000).is_err());
        assert!(Waveform::new(vec![0.0], 0).is_err());
    }

    proptest! {
        #[test]
        fn shift_composition(xs in prop::collection::vec(-1.0f64..1.0, 1..64), a in -200i64..200, b in -200i64..200) {
            let x = Waveform::new(xs, 8000).unwrap();
            prop_assert_eq!(cyclic_shift(&cyclic_shift(&x, a), b), cyclic_shift(&x, a + b));
        }

        #[test]
        fn snr_of_scaled_copy(xs in prop::collection::vec(-1.0f64..1.0, 4..64), alpha in 0.01f64..100.0) {
            prop_assume!(power(&xs) > 1e-6);
            let noise: Vec<f64> = xs.iter().map(|v| v * alpha).collect();
            let got = snr_db(&xs, &noise).unwrap();
            prop_assert!((got + 20.0 * alpha.log10()).abs() < 1e-9);
        }
    }
}
