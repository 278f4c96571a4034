use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Integer-factor decimation with a Blackman-windowed sinc low-pass.
///
/// Only the retained output samples are computed (the polyphase form of
/// filter-then-drop). Output length is `ceil(len / factor)`.
pub fn decimate(x: &[f64], factor: usize) -> Result<Vec<f64>> {
    if factor == 0 {
        return Err(Error::invalid("decimation factor must be positive"));
    }
    if factor == 1 {
        return Ok(x.to_vec());
    }
    let half = 16 * factor;
    let cutoff = 0.45 / factor as f64;
    let taps: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let t = i as f64 - half as f64;
            let sinc = if t == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * t).sin() / (PI * t)
            };
            let a = 2.0 * PI * i as f64 / (2 * half) as f64;
            sinc * (0.42 - 0.5 * a.cos() + 0.08 * (2.0 * a).cos())
        })
        .collect();
    let gain: f64 = taps.iter().sum();

    let n = x.len();
    let out_len = n.div_ceil(factor);
    Ok((0..out_len)
        .map(|m| {
            let center = (m * factor) as isize;
            let mut acc = 0.0;
            for (i, h) in taps.iter().enumerate() {
                let idx = center + half as isize - i as isize;
                if idx >= 0 && (idx as usize) < n {
                    acc += h * x[idx as usize];
                }
            }
            acc / gain
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halves_length_and_keeps_passband() {
        let x: Vec<f64> = (0..16000)
            .map(|n| (2.0 * PI * 500.0 * n as f64 / 16000.0).sin())
            .collect();
        let y = decimate(&x, 2).unwrap();
        assert_eq!(y.len(), 8000);
        // Interior samples follow the 500 Hz tone at the new rate.
        for m in 100..7900 {
            let expected = (2.0 * PI * 500.0 * m as f64 / 8000.0).sin();
            assert!((y[m] - expected).abs() < 1e-2);
        }
    }

    #[test]
    fn rejects_stopband() {
        let x: Vec<f64> = (0..16000)
            .map(|n| (2.0 * PI * 6000.0 * n as f64 / 16000.0).sin())
            .collect();
        let y = decimate(&x, 2).unwrap();
        let peak = y[100..7900].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(peak < 1e-2, "alias leaked: {peak}");
    }
}
