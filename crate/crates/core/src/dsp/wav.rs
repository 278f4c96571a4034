//! 16-bit PCM mono WAV reading and writing.

use std::path::Path;

use hound::{SampleFormat, WavSpec};

use super::{decimate, Waveform};
use crate::error::{Error, Result};

fn map_read_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::malformed(path, io.to_string()),
        hound::Error::FormatError(msg) => Error::malformed(path, msg),
        hound::Error::Unsupported => Error::UnsupportedEncoding("unsupported wav feature".into()),
        other => Error::Wav(other),
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| map_read_err(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedChannelCount(spec.channels));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedEncoding(format!(
            "{:?} {}-bit",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let expected = reader.len() as usize;
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| map_read_err(path, e))?;
    if samples.len() != expected {
        return Err(Error::malformed(path, "data chunk shorter than declared"));
    }
    if samples.is_empty() {
        return Err(Error::malformed(path, "no samples"));
    }
    Waveform::new(samples, spec.sample_rate)
}

/// Reads a clip and, when `target_rate` divides the file's rate, decimates to it.
pub fn read_wav_at(path: impl AsRef<Path>, target_rate: Option<u32>) -> Result<Waveform> {
    let w = read_wav(path)?;
    match target_rate {
        None => Ok(w),
        Some(r) if r == w.sample_rate() => Ok(w),
        Some(r) if r > 0 && w.sample_rate() % r == 0 => {
            let factor = (w.sample_rate() / r) as usize;
            Waveform::new(decimate(w.samples(), factor)?, r)
        }
        Some(r) => Err(Error::invalid(format!(
            "cannot resample {} Hz to {r} Hz by integer decimation",
            w.sample_rate()
        ))),
    }
}

pub fn write_wav(path: impl AsRef<Path>, x: &Waveform) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: x.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in x.samples() {
        let q = (s.clamp(-1.0, 1.0) * 32768.0)
            .round()
            .clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q)?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..4000).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let w = Waveform::new(x, 8000).unwrap();
        write_wav(&path, &w).unwrap();
        let r = read_wav(&path).unwrap();
        assert_eq!(r.sample_rate(), 8000);
        assert_eq!(r.len(), w.len());
        let max_err = w
            .samples()
            .iter()
            .zip(r.samples())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(max_err <= 2f64.powi(-15));
    }

    #[test]
    fn clips_on_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.wav");
        write_wav(&path, &Waveform::new(vec![3.0, -3.0], 8000).unwrap()).unwrap();
        let r = read_wav(&path).unwrap();
        assert!((r.samples()[0] - 1.0).abs() <= 2f64.powi(-15));
        assert_eq!(r.samples()[1], -1.0);
    }

    #[test]
    fn stereo_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..8 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        let err = read_wav(&path).unwrap_err();
        assert!(matches!(err, Error::UnsupportedChannelCount(2)));
        assert!(err.to_string().contains("unsupported channel count"));
    }

    #[test]
    fn float_encoding_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(0.5f32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(
            read_wav(&path),
            Err(Error::UnsupportedEncoding(_))
        ));
    }

    #[test]
    fn truncated_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        write_wav(&path, &Waveform::new(vec![0.25; 1000], 8000).unwrap()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 501]).unwrap();
        assert!(matches!(read_wav(&path), Err(Error::Malformed { .. })));
    }

    #[test]
    fn downsample_16k_to_8k() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.wav");
        let x: Vec<f64> = (0..16000).map(|n| 0.5 * (n as f64 * 0.05).sin()).collect();
        write_wav(&path, &Waveform::new(x, 16000).unwrap()).unwrap();
        let r = read_wav_at(&path, Some(8000)).unwrap();
        assert_eq!(r.sample_rate(), 8000);
        assert_eq!(r.len(), 8000);
        assert!(read_wav_at(&path, Some(7000)).is_err());
    }
}
