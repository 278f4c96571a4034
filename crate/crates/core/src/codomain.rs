//! Search domains and their linear maps into waveform space.
//!
//! An attack is optimized over a code vector `z` and rendered with a linear
//! map `g(z)`. Two maps are provided: the identity (search directly over
//! samples) and the zero-phase spectral map, which renders a real magnitude
//! spectrum of length `N_T / 2 + 1` into an even-symmetric block of `N_T`
//! samples and tiles it to the clip length. The tiled image repeats with
//! period `N_T`, which bounds how much a cyclic shift can change it.

use std::fmt;
use std::str::FromStr;

use crate::dsp::{inverse_real_fft, l2_norm, real_fft, Complex64, ComplexSpectrum};
use crate::error::{ensure_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    Waveform,
    Frequency,
}

impl Domain {
    pub fn tag(&self) -> &'static str {
        match self {
            Domain::Waveform => "wav",
            Domain::Frequency => "freq",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wav" | "waveform" => Ok(Domain::Waveform),
            "freq" | "frequency" => Ok(Domain::Frequency),
            other => Err(Error::invalid(format!(
                "unknown domain '{other}' (expected wav|freq)"
            ))),
        }
    }
}

/// A linear map `g: Z -> X` with its exact transpose.
pub trait DomainMapping: Send + Sync {
    fn domain(&self) -> Domain;

    /// Dimension of the code space `Z`.
    fn code_len(&self) -> usize;

    /// Length `N` of rendered waveforms.
    fn signal_len(&self) -> usize;

    /// Base period of rendered signals (`N` for the identity).
    fn period(&self) -> usize;

    fn map(&self, z: &[f64]) -> Result<Vec<f64>>;

    /// Transpose of [`DomainMapping::map`]: pulls a waveform cotangent back into `Z`.
    fn adjoint(&self, w: &[f64]) -> Result<Vec<f64>>;

    /// Scales `z` down so that `||map(z)||_2 <= l2target`; leaves it alone otherwise.
    fn project(&self, z: &[f64], l2target: f64) -> Result<Vec<f64>> {
        if !(l2target > 0.0) {
            return Err(Error::invalid(format!(
                "l2 target must be positive, got {l2target}"
            )));
        }
        let norm = l2_norm(&self.map(z)?);
        if norm <= l2target {
            return Ok(z.to_vec());
        }
        let s = l2target / norm;
        Ok(z.iter().map(|v| v * s).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityMapping {
    len: usize,
}

impl IdentityMapping {
    pub fn new(len: usize) -> Self {
        Self { len }
    }
}

impl DomainMapping for IdentityMapping {
    fn domain(&self) -> Domain {
        Domain::Waveform
    }

    fn code_len(&self) -> usize {
        self.len
    }

    fn signal_len(&self) -> usize {
        self.len
    }

    fn period(&self) -> usize {
        self.len
    }

    fn map(&self, z: &[f64]) -> Result<Vec<f64>> {
        ensure_len(self.len, z.len())?;
        Ok(z.to_vec())
    }

    fn adjoint(&self, w: &[f64]) -> Result<Vec<f64>> {
        ensure_len(self.len, w.len())?;
        Ok(w.to_vec())
    }
}

/// Zero-phase magnitude vector together with the lengths it renders to.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroPhaseSpectrum {
    pub magnitudes: Vec<f64>,
    pub base_len: usize,
    pub target_len: usize,
}

impl ZeroPhaseSpectrum {
    pub fn zeros(base_len: usize, target_len: usize) -> Self {
        Self {
            magnitudes: vec![0.0; base_len / 2 + 1],
            base_len,
            target_len,
        }
    }

    pub fn mapping(&self) -> Result<ZeroPhaseMapping> {
        ZeroPhaseMapping::new(self.base_len, self.target_len)
    }

    pub fn render(&self) -> Result<Vec<f64>> {
        self.mapping()?.map(&self.magnitudes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroPhaseMapping {
    base_len: usize,
    target_len: usize,
}

impl ZeroPhaseMapping {
    pub fn new(base_len: usize, target_len: usize) -> Result<Self> {
        if base_len < 2 {
            return Err(Error::invalid(format!(
                "base length must be >= 2, got {base_len}"
            )));
        }
        if target_len < base_len {
            return Err(Error::invalid(format!(
                "target length {target_len} is shorter than base length {base_len}"
            )));
        }
        Ok(Self {
            base_len,
            target_len,
        })
    }

    pub fn base_len(&self) -> usize {
        self.base_len
    }

    /// One period of the rendered signal.
    pub fn base_block(&self, z: &[f64]) -> Result<Vec<f64>> {
        ensure_len(self.code_len(), z.len())?;
        let spectrum = ComplexSpectrum {
            bins: z.iter().map(|&m| Complex64::new(m, 0.0)).collect(),
            len: self.base_len,
        };
        inverse_real_fft(&spectrum, self.base_len)
    }
}

impl DomainMapping for ZeroPhaseMapping {
    fn domain(&self) -> Domain {
        Domain::Frequency
    }

    fn code_len(&self) -> usize {
        self.base_len / 2 + 1
    }

    fn signal_len(&self) -> usize {
        self.target_len
    }

    fn period(&self) -> usize {
        self.base_len
    }

    fn map(&self, z: &[f64]) -> Result<Vec<f64>> {
        let block = self.base_block(z)?;
        Ok(block
            .iter()
            .copied()
            .cycle()
            .take(self.target_len)
            .collect())
    }

    fn adjoint(&self, w: &[f64]) -> Result<Vec<f64>> {
        ensure_len(self.target_len, w.len())?;
        let mut folded = vec![0.0; self.base_len];
        for chunk in w.chunks(self.base_len) {
            for (f, v) in folded.iter_mut().zip(chunk) {
                *f += v;
            }
        }
        let spectrum = real_fft(&folded)?;
        let n = self.base_len as f64;
        let last = self.code_len() - 1;
        let even = self.base_len % 2 == 0;
        Ok(spectrum
            .bins
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let weight = if k == 0 || (even && k == last) {
                    1.0
                } else {
                    2.0
                };
                weight * c.re / n
            })
            .collect())
    }
}

pub fn mapping_for(
    domain: Domain,
    signal_len: usize,
    base_len: usize,
) -> Result<Box<dyn DomainMapping>> {
    Ok(match domain {
        Domain::Waveform => Box::new(IdentityMapping::new(signal_len)),
        Domain::Frequency => Box::new(ZeroPhaseMapping::new(base_len, signal_len)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{cyclic_shift_slice, dot};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Direct cosine-sum reconstruction, independent of the FFT path.
    fn cosine_block(z: &[f64], nt: usize) -> Vec<f64> {
        let k_max = nt / 2;
        (0..nt)
            .map(|n| {
                let mut acc = z[0];
                let interior_end = if nt % 2 == 0 { k_max } else { k_max + 1 };
                for (k, zk) in z.iter().enumerate().take(interior_end).skip(1) {
                    acc += 2.0 * zk * (2.0 * PI * (k * n) as f64 / nt as f64).cos();
                }
                if nt % 2 == 0 {
                    acc += if n % 2 == 0 { z[k_max] } else { -z[k_max] };
                }
                acc / nt as f64
            })
            .collect()
    }

    #[test]
    fn zero_spectrum_renders_silence() {
        let g = ZeroPhaseMapping::new(8, 20).unwrap();
        assert!(g.map(&[0.0; 5]).unwrap().iter().all(|&v| v == 0.0));
        assert!(g.adjoint(&[0.0; 20]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_bin_is_a_cosine() {
        let g = ZeroPhaseMapping::new(8, 8).unwrap();
        let mut z = vec![0.0; 5];
        z[1] = 1.0;
        let x = g.map(&z).unwrap();
        for (n, v) in x.iter().enumerate() {
            assert!((v - 0.25 * (2.0 * PI * n as f64 / 8.0).cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn tiles_with_base_period() {
        let g = ZeroPhaseMapping::new(8, 16).unwrap();
        let z = [0.3, -1.0, 0.5, 2.0, 0.7];
        let x = g.map(&z).unwrap();
        assert_eq!(&x[..8], &x[8..]);
        assert_eq!(cyclic_shift_slice(&x, 8), x);
    }

    #[test]
    fn matches_cosine_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &nt in &[2usize, 7, 8, 240, 241] {
            let g = ZeroPhaseMapping::new(nt, 3 * nt + 5).unwrap();
            let z: Vec<f64> = (0..g.code_len())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let block = g.base_block(&z).unwrap();
            for (a, b) in block.iter().zip(cosine_block(&z, nt)) {
                assert!((a - b).abs() < 1e-12);
            }
            let x = g.map(&z).unwrap();
            assert_eq!(x.len(), 3 * nt + 5);
            let tail: Vec<f64> = (0..5).map(|i| block[i % nt]).collect();
            assert_eq!(&x[3 * nt..], &tail[..]);
        }
    }

    #[test]
    fn gf_rejects_bad_lengths() {
        assert!(ZeroPhaseMapping::new(1, 10).is_err());
        assert!(ZeroPhaseMapping::new(16, 8).is_err());
        let g = ZeroPhaseMapping::new(8, 16).unwrap();
        assert!(g.map(&[0.0; 4]).is_err());
        assert!(g.adjoint(&[0.0; 15]).is_err());
    }

    #[test]
    fn adjoint_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..100 {
            let nt = [8usize, 9, 240][trial % 3];
            let n = nt * 4 + trial;
            let g = ZeroPhaseMapping::new(nt, n).unwrap();
            let z: Vec<f64> = (0..g.code_len())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs = dot(&g.map(&z).unwrap(), &w);
            let rhs = dot(&z, &g.adjoint(&w).unwrap());
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()));
        }
    }

    #[test]
    fn squared_norm_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = ZeroPhaseMapping::new(24, 100).unwrap();
        let z: Vec<f64> = (0..g.code_len())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let grad: Vec<f64> = g
            .adjoint(&g.map(&z).unwrap())
            .unwrap()
            .iter()
            .map(|v| 2.0 * v)
            .collect();
        let f = |z: &[f64]| l2_norm(&g.map(z).unwrap()).powi(2);
        let h = 1e-5;
        for k in 0..g.code_len() {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[k] += h;
            zm[k] -= h;
            let fd = (f(&zp) - f(&zm)) / (2.0 * h);
            assert!(
                (fd - grad[k]).abs() / grad[k].abs().max(1e-12) < 1e-6,
                "k={k}"
            );
        }
    }

    #[test]
    fn identity_mapping() {
        let g = IdentityMapping::new(4);
        let v = [1.0, -2.0, 2.0, 4.0];
        assert_eq!(g.map(&v).unwrap(), v);
        assert_eq!(g.adjoint(&v).unwrap(), v);
        let t = l2_norm(&v) / 2.0;
        let p = g.project(&v, t).unwrap();
        for (a, b) in p.iter().zip(&v) {
            assert!((a - b / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_cases() {
        let g = ZeroPhaseMapping::new(8, 24).unwrap();
        let z = [1.0, 0.5, -0.25, 0.0, 2.0];
        let norm = l2_norm(&g.map(&z).unwrap());
        assert_eq!(g.project(&z, 2.0 * norm).unwrap(), z);
        let p = g.project(&z, norm / 2.0).unwrap();
        for (a, b) in p.iter().zip(&z) {
            assert!((a - 0.5 * b).abs() < 1e-15);
        }
        assert!((l2_norm(&g.map(&p).unwrap()) - norm / 2.0).abs() < 1e-12);
        assert_eq!(
            g.project(&p, norm / 2.0).unwrap(),
            g.project(&z, norm / 2.0).unwrap().clone()
        );
        assert!(g.project(&z, 0.0).is_err());
        assert!(g.project(&z, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn block_is_even_symmetric(z in prop::collection::vec(-1.0f64..1.0, 5), nt in prop::sample::select(vec![8usize])) {
            let g = ZeroPhaseMapping::new(nt, nt).unwrap();
            let b = g.base_block(&z).unwrap();
            for n in 1..nt {
                prop_assert!((b[n] - b[nt - n]).abs() < 1e-12);
            }
        }

        #[test]
        fn map_is_linear(
            z1 in prop::collection::vec(-1.0f64..1.0, 121),
            z2 in prop::collection::vec(-1.0f64..1.0, 121),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let g = ZeroPhaseMapping::new(240, 8000).unwrap();
            let combo: Vec<f64> = z1.iter().zip(&z2).map(|(x, y)| a * x + b * y).collect();
            let lhs = g.map(&combo).unwrap();
            let m1 = g.map(&z1).unwrap();
            let m2 = g.map(&z2).unwrap();
            for i in 0..lhs.len() {
                prop_assert!((lhs[i] - (a * m1[i] + b * m2[i])).abs() < 1e-12);
            }
        }

        #[test]
        fn projection_is_idempotent(z in prop::collection::vec(-1.0f64..1.0, 5), t in 0.01f64..2.0) {
            let g = ZeroPhaseMapping::new(8, 30).unwrap();
            let p = g.project(&z, t).unwrap();
            let pp = g.project(&p, t).unwrap();
            prop_assert!(l2_norm(&g.map(&p).unwrap()) <= t * (1.0 + 1e-12));
            for (a, b) in p.iter().zip(&pp) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
