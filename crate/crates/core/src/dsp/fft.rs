//! Single-sided real FFT pair.
//!
//! Forward is unnormalized; the inverse carries the `1/N`.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn plan_forward(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub(crate) fn plan_inverse(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Single-sided spectrum of a real signal of length `len`: `len / 2 + 1` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    pub bins: Vec<Complex64>,
    pub len: usize,
}

impl ComplexSpectrum {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm()).collect()
    }

    /// Frequency in Hz of bin `k` for a signal sampled at `sample_rate`.
    pub fn bin_hz(&self, k: usize, sample_rate: u32) -> f64 {
        k as f64 * sample_rate as f64 / self.len as f64
    }
}

pub fn real_fft(x: &[f64]) -> Result<ComplexSpectrum> {
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid(format!("fft length must be >= 2, got {n}")));
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan_forward(n).process(&mut buf);
    buf.truncate(n / 2 + 1);
    // Exact zeros where a real input forces them.
    buf[0].im = 0.0;
    if n % 2 == 0 {
        buf[n / 2].im = 0.0;
    }
    Ok(ComplexSpectrum { bins: buf, len: n })
}

pub fn inverse_real_fft(spectrum: &ComplexSpectrum, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::invalid(format!("fft length must be >= 2, got {n}")));
    }
    if spectrum.bins.len() != n / 2 + 1 {
        return Err(Error::LengthMismatch {
            expected: n / 2 + 1,
            actual: spectrum.bins.len(),
        });
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[..spectrum.bins.len()].copy_from_slice(&spectrum.bins);
    buf[0].im = 0.0;
    if n % 2 == 0 {
        buf[n / 2].im = 0.0;
    }
    for k in 1..n.div_ceil(2) {
        buf[n - k] = spectrum.bins[k].conj();
    }
    plan_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    Ok(buf.iter().map(|c| c.re * scale).collect())
}
