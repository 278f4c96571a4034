//! `AFA1` attack artifacts and the per-iteration CSV side files.
//!
//! Binary layout (little-endian): magic `AFA1`; u8 domain (0 wav, 1 freq);
//! u32 base period; u32 signal length; u32 sample rate; u32 code length and
//! that many f64 code values; f64 l2 target; f64 fool rate; u32 iterations;
//! u32 length + UTF-8 config echo.

use std::fs;
use std::path::Path;

use super::universal::AttackState;
use crate::bytes::{put_str, put_u32, ByteReader};
use crate::codomain::{mapping_for, Domain};
use crate::dsp::csvio::{fmt_f64, write_csv};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"AFA1";

#[derive(Debug, Clone, PartialEq)]
pub struct AttackArtifact {
    pub domain: Domain,
    pub period: usize,
    pub signal_len: usize,
    pub sample_rate: u32,
    pub u: Vec<f64>,
    pub l2target: f64,
    pub fool_rate: f64,
    pub iterations: usize,
    pub config_echo: String,
}

impl AttackArtifact {
    pub fn from_state(
        state: &AttackState,
        sample_rate: u32,
        config_echo: impl Into<String>,
    ) -> Self {
        Self {
            domain: state.domain,
            period: state.period,
            signal_len: state.signal_len,
            sample_rate,
            u: state.u.clone(),
            l2target: state.l2target,
            fool_rate: state.fool_rate,
            iterations: state.iteration,
            config_echo: config_echo.into(),
        }
    }

    /// The waveform perturbation `g(U)`.
    pub fn render(&self) -> Result<Vec<f64>> {
        mapping_for(self.domain, self.signal_len, self.period)?.map(&self.u)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.u.len() + self.config_echo.len());
        out.extend_from_slice(MAGIC);
        out.push(match self.domain {
            Domain::Waveform => 0,
            Domain::Frequency => 1,
        });
        put_u32(&mut out, self.period as u32);
        put_u32(&mut out, self.signal_len as u32);
        put_u32(&mut out, self.sample_rate);
        put_u32(&mut out, self.u.len() as u32);
        for v in &self.u {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.l2target.to_le_bytes());
        out.extend_from_slice(&self.fool_rate.to_le_bytes());
        put_u32(&mut out, self.iterations as u32);
        put_str(&mut out, &self.config_echo);
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = ByteReader::new(bytes, origin);
        if r.take(4)? != MAGIC {
            return Err(r.bad("bad magic (expected AFA1)"));
        }
        let domain = match r.u8()? {
            0 => Domain::Waveform,
            1 => Domain::Frequency,
            t => return Err(r.bad(format!("unknown domain tag {t}"))),
        };
        let period = r.u32()? as usize;
        let signal_len = r.u32()? as usize;
        let sample_rate = r.u32()?;
        let n = r.u32()? as usize;
        if n > r.remaining() / 8 {
            return Err(r.bad("implausible code length"));
        }
        let u = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let l2target = r.f64()?;
        let fool_rate = r.f64()?;
        let iterations = r.u32()? as usize;
        let config_echo = r.string(1 << 20)?;
        r.finish()?;
        let g = mapping_for(domain, signal_len, period).map_err(|e| r.bad(e.to_string()))?;
        if g.code_len() != u.len() {
            return Err(r.bad("code length does not match domain and lengths"));
        }
        Ok(Self {
            domain,
            period,
            signal_len,
            sample_rate,
            u,
            l2target,
            fool_rate,
            iterations,
            config_echo,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path)?, path)
    }
}

/// `iteration, fool_rate, du_norm, gu_norm`, one row per iteration.
pub fn write_history_csv(path: impl AsRef<Path>, state: &AttackState) -> Result<()> {
    write_csv(
        path,
        &["iteration", "fool_rate", "du_norm", "gu_norm"],
        state.history.iter().map(|h| {
            vec![
                h.iteration.to_string(),
                fmt_f64(h.fool_rate),
                fmt_f64(h.du_norm),
                fmt_f64(h.gu_norm),
            ]
        }),
    )
}

/// Momentum vectors, one row per iteration starting with the zero start:
/// `iteration, du_0, ..., du_{d-1}`.
pub fn write_updates_csv(path: impl AsRef<Path>, state: &AttackState) -> Result<()> {
    let d = state.du.len();
    let header: Vec<String> = std::iter::once("iteration".to_string())
        .chain((0..d).map(|j| format!("du_{j}")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        path,
        &header,
        state.du_history.iter().enumerate().map(|(i, du)| {
            std::iter::once(i.to_string())
                .chain(du.iter().map(|v| fmt_f64(*v)))
                .collect::<Vec<_>>()
        }),
    )
}

/// Reads an updates CSV back into its momentum vectors, in iteration order.
pub fn read_updates_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let (header, rows) = crate::dsp::csvio::read_csv(path)?;
    if header.first().map(String::as_str) != Some("iteration") {
        return Err(Error::malformed(path, "missing iteration column"));
    }
    rows.iter()
        .map(|r| {
            r[1..]
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::malformed(path, format!("bad number '{s}'")))
                })
                .collect()
        })
        .collect()
}

/// Reads the fool-rate column of a history CSV.
pub fn read_history_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let (header, rows) = crate::dsp::csvio::read_csv(path)?;
    let col = header
        .iter()
        .position(|h| h == "fool_rate")
        .ok_or_else(|| Error::malformed(path, "missing fool_rate column"))?;
    rows.iter()
        .map(|r| {
            r.get(col)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::malformed(path, "bad fool_rate value"))
        })
        .collect()
}
