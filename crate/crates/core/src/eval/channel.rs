//! Emulated playback channel: attenuation, cyclic shift, additive noise and
//! an optional band-stop applied to the mixture.

use rand::RngCore;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::Evaluator;
use crate::dsp::{cyclic_shift_slice, inverse_real_fft, power, real_fft, Complex64, Waveform};
use crate::error::{ensure_len, Error, Result};
use crate::seed::SeedStreams;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    /// Linear gain on the perturbation.
    pub attenuation: f64,
    /// Cyclic shift of the perturbation in samples.
    pub shift: i64,
    /// Additive white noise, in dB below the clip power; `None` for silence.
    pub noise_db: Option<f64>,
    /// Band-stop `(low_hz, high_hz)` applied to the mixture.
    pub band_stop: Option<(f64, f64)>,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            attenuation: 1.0,
            shift: 0,
            noise_db: None,
            band_stop: None,
        }
    }
}

impl ChannelParams {
    pub fn identity() -> Self {
        Self::default()
    }

    /// Named playback scenarios: `clean`, `suburb` (quiet outdoor, mild loss
    /// and a top-octave rolloff) and `commons` (busy indoor, loud babble and
    /// a small-speaker low cut).
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "clean" => Ok(Self::identity()),
            "suburb" => Ok(Self {
                attenuation: 0.8,
                shift: 0,
                noise_db: Some(30.0),
                band_stop: Some((3600.0, 3990.0)),
            }),
            "commons" => Ok(Self {
                attenuation: 0.6,
                shift: 0,
                noise_db: Some(15.0),
                band_stop: Some((10.0, 200.0)),
            }),
            other => Err(Error::invalid(format!(
                "unknown channel preset '{other}' (expected clean|suburb|commons)"
            ))),
        }
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if !(self.attenuation >= 0.0) || !self.attenuation.is_finite() {
            return Err(Error::invalid("attenuation must be finite and >= 0"));
        }
        if let Some(db) = self.noise_db {
            if !db.is_finite() {
                return Err(Error::invalid("noise level must be finite"));
            }
        }
        if let Some((lo, hi)) = self.band_stop {
            let nyquist = sample_rate as f64 / 2.0;
            if !(lo > 0.0 && lo < hi && hi < nyquist) {
                return Err(Error::invalid(format!(
                    "band-stop edges ({lo}, {hi}) must satisfy 0 < low < high < {nyquist}"
                )));
            }
        }
        Ok(())
    }
}

/// `x + attenuation * shift(v, s) + noise`, then band-stop of the mixture.
/// `rng` is only drawn from when noise is enabled.
pub fn apply_channel(
    x: &Waveform,
    v: &[f64],
    ch: &ChannelParams,
    rng: &mut dyn RngCore,
) -> Result<Waveform> {
    ensure_len(x.len(), v.len())?;
    ch.validate(x.sample_rate())?;
    let shifted = cyclic_shift_slice(v, ch.shift);
    let mut out: Vec<f64> = x
        .samples()
        .iter()
        .zip(&shifted)
        .map(|(a, b)| a + ch.attenuation * b)
        .collect();
    if let Some(db) = ch.noise_db {
        let std = (power(x.samples()) * 10f64.powf(-db / 10.0)).sqrt();
        if std > 0.0 {
            let noise = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
            for s in out.iter_mut() {
                *s += noise.sample(rng);
            }
        }
    }
    if let Some((lo, hi)) = ch.band_stop {
        out = band_stop(&out, x.sample_rate(), lo, hi)?;
    }
    Waveform::new(out, x.sample_rate())
}

/// Zeroes every FFT bin whose center frequency lies in `[lo, hi]`.
fn band_stop(x: &[f64], sample_rate: u32, lo: f64, hi: f64) -> Result<Vec<f64>> {
    let mut spec = real_fft(x)?;
    for k in 0..spec.bins.len() {
        let f = spec.bin_hz(k, sample_rate);
        if f >= lo && f <= hi {
            spec.bins[k] = Complex64::new(0.0, 0.0);
        }
    }
    inverse_real_fft(&spec, x.len())
}

/// Fool rate of `v` played through `ch`, judged against clean predictions.
/// Noise for clip `i` comes from stream `("channel", i)` under `seed`.
pub fn channel_fool_rate(
    eval: &Evaluator,
    v: &[f64],
    ch: &ChannelParams,
    seed: u64,
) -> Result<f64> {
    let streams = SeedStreams::new(seed);
    let clips = &eval.data().clips;
    let mixed = clips
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut rng = streams.rng_indexed("channel", i as u64);
            apply_channel(c, v, ch, &mut rng).map(Waveform::into_samples)
        })
        .collect::<Result<Vec<_>>>()?;
    let preds = eval.predictions_with(|i, _| Ok(mixed[i].clone()))?;
    Ok(eval.changed(&preds))
}
