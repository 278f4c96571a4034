//! Labeled clip collections: a synthetic keyword corpus and on-disk ingestion.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::dsp::wav::read_wav_at;
use crate::dsp::{l2_norm, Waveform};
use crate::error::{Error, Result};
use crate::seed::SeedStreams;

pub const SYNTH_RATE: u32 = 8000;
pub const SYNTH_LEN: usize = 8000;
pub const SYNTH_TEST_FRACTION: f64 = 0.2;
const BAND_AMP: (f64, f64) = (0.02, 0.05);
const PARTIALS: usize = 7;
const PARTIAL_SPACING_HZ: f64 = 20.0;
const FREQ_JITTER: f64 = 0.03;
/// Background noise std range: one to three 16-bit quantization steps.
const NOISE_STD: (f64, f64) = (3e-5, 1e-4);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub clips: Vec<Waveform>,
    pub labels: Vec<usize>,
    pub splits: Vec<Split>,
    pub class_names: Vec<String>,
    pub test_fraction: f64,
    pub seed: u64,
}

impl LabeledDataset {
    /// Validates shapes and labels.
    pub fn new(
        clips: Vec<Waveform>,
        labels: Vec<usize>,
        splits: Vec<Split>,
        class_names: Vec<String>,
        test_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        if clips.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if labels.len() != clips.len() || splits.len() != clips.len() {
            return Err(Error::invalid("clips, labels and splits differ in length"));
        }
        let (len, rate) = (clips[0].len(), clips[0].sample_rate());
        if clips
            .iter()
            .any(|c| c.len() != len || c.sample_rate() != rate)
        {
            return Err(Error::invalid("clips differ in length or sample rate"));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::invalid(format!(
                "label {l} outside {} classes",
                class_names.len()
            )));
        }
        Ok(Self {
            clips,
            labels,
            splits,
            class_names,
            test_fraction,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn clip_len(&self) -> usize {
        self.clips.first().map_or(0, Waveform::len)
    }

    pub fn sample_rate(&self) -> u32 {
        self.clips.first().map_or(0, Waveform::sample_rate)
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.splits[i] == split)
            .collect()
    }

    /// A dataset holding only the rows of one split (still tagged with it).
    pub fn subset(&self, split: Split) -> Result<Self> {
        self.select(&self.indices(split))
    }

    /// Rows `idx`, in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        Self::new(
            idx.iter().map(|&i| self.clips[i].clone()).collect(),
            idx.iter().map(|&i| self.labels[i]).collect(),
            idx.iter().map(|&i| self.splits[i]).collect(),
            self.class_names.clone(),
            self.test_fraction,
            self.seed,
        )
    }

    /// The first `n` rows (or all of them).
    pub fn take(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    pub fn samples(&self) -> Vec<&[f64]> {
        self.clips.iter().map(Waveform::samples).collect()
    }

    pub fn mean_l2_norm(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(self.clips.iter().map(|c| l2_norm(c.samples())).sum::<f64>() / self.len() as f64)
    }

    /// Hex SHA-256 over rate, class names, labels, splits and sample bits.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.sample_rate().to_le_bytes());
        for name in &self.class_names {
            h.update((name.len() as u32).to_le_bytes());
            h.update(name.as_bytes());
        }
        for ((clip, &label), &split) in self.clips.iter().zip(&self.labels).zip(&self.splits) {
            h.update((label as u32).to_le_bytes());
            h.update([split as u8]);
            for s in clip.samples() {
                h.update(s.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unit_hash(key: &str) -> f64 {
    let d = Sha256::digest(key.as_bytes());
    let v = u64::from_le_bytes(d[..8].try_into().expect("32-byte digest"));
    (v >> 11) as f64 / (1u64 << 53) as f64
}

/// One spectral band of a class template: a tone that swells and fades
/// around `center` seconds, optionally gliding by `glide` Hz over its life.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub freq_hz: f64,
    pub center_s: f64,
    pub width_s: f64,
    pub glide_hz: f64,
}

/// The deterministic template of class `class`. Independent of the seed.
pub fn class_template(class: usize) -> Vec<Band> {
    const PHI: f64 = 0.618_033_988_749_895;
    let bands = 3;
    (0..bands)
        .map(|j| {
            let u = ((3 * class + j) as f64 * PHI + 0.05).fract();
            let v = (class as f64 * 0.7548 + j as f64 * 0.5698).fract();
            Band {
                freq_hz: 250.0 + 3000.0 * u,
                center_s: 0.4 + 0.2 * v,
                width_s: 0.5 + 0.1 * ((class + j) % 3) as f64,
                glide_hz: if (class + j) % 2 == 0 { 80.0 } else { -60.0 },
            }
        })
        .collect()
}

struct Jitter {
    onset_s: f64,
    f0_hz: f64,
    voicing_amp: f64,
    freq_scale: Vec<f64>,
    amps: Vec<f64>,
    phases: Vec<f64>,
    width_scale: f64,
    noise_std: f64,
}

fn render_clip(
    bands: &[Band],
    jitter: Option<&Jitter>,
    rng: Option<&mut dyn rand::RngCore>,
) -> Vec<f64> {
    let rate = SYNTH_RATE as f64;
    let mut x = vec![0.0; SYNTH_LEN];
    for (j, band) in bands.iter().enumerate() {
        let (onset, fs, amp, phase, ws) = match jitter {
            Some(jt) => (
                jt.onset_s,
                jt.freq_scale[j],
                jt.amps[j],
                jt.phases[j],
                jt.width_scale,
            ),
            None => (0.0, 1.0, 0.3, 0.0, 1.0),
        };
        let center = band.center_s + onset;
        let half = 0.5 * band.width_s * ws;
        let f0 = band.freq_hz * fs;
        let glide = band.glide_hz * fs;
        // A formant-like cluster of partials around f0 rather than a single tone.
        let partials: Vec<(f64, f64, f64)> = (0..PARTIALS)
            .map(|p| {
                let off = p as f64 - (PARTIALS - 1) as f64 / 2.0;
                let w = 0.5 * (1.0 + (PI * off / ((PARTIALS + 1) as f64 / 2.0)).cos());
                (
                    f0 + off * PARTIAL_SPACING_HZ,
                    w,
                    phase + p as f64 * 2.399_963,
                )
            })
            .collect();
        let wsum: f64 = partials.iter().map(|p| p.1).sum();
        for (n, out) in x.iter_mut().enumerate() {
            let t = n as f64 / rate;
            let d = (t - center) / half;
            if d.abs() >= 1.0 {
                continue;
            }
            let env = 0.5 * (1.0 + (PI * d).cos());
            // instantaneous frequency f + glide * (d + 1) / 2, integrated over time
            let tau = t - (center - half);
            let sweep = glide * tau * tau / (4.0 * half);
            let mut v = 0.0;
            for &(f, w, ph) in &partials {
                v += w * (2.0 * PI * (f * tau + sweep) + ph).sin();
            }
            *out += amp * env * v / wsum * 2.0;
        }
    }
    if let Some(jt) = jitter {
        add_voicing(&mut x, jt);
    }
    if let (Some(jt), Some(rng)) = (jitter, rng) {
        let noise = Normal::new(0.0, jt.noise_std).expect("finite std");
        for v in x.iter_mut() {
            *v += noise.sample(rng);
        }
    }
    x
}

/// Class-independent voiced carrier: a harmonic complex on `f0` with 1/h
/// rolloff up to 1.2 kHz under a slow swell, standing in for the shared
/// excitation that carries most of a spoken word's energy.
fn add_voicing(x: &mut [f64], jt: &Jitter) {
    let rate = SYNTH_RATE as f64;
    let center = 0.5 + jt.onset_s;
    let half = 0.4;
    let harmonics = (1200.0 / jt.f0_hz) as usize;
    let norm: f64 = (1..=harmonics).map(|h| 1.0 / h as f64).sum();
    for (n, out) in x.iter_mut().enumerate() {
        let t = n as f64 / rate;
        let d = (t - center) / half;
        if d.abs() >= 1.0 {
            continue;
        }
        let env = 0.5 * (1.0 + (PI * d).cos());
        let mut v = 0.0;
        for h in 1..=harmonics {
            v += (2.0 * PI * jt.f0_hz * h as f64 * t).sin() / h as f64;
        }
        *out += jt.voicing_amp * env * v / norm;
    }
}

/// Noise-free template waveform for a class; used to check class separation.
pub fn template_waveform(class: usize) -> Vec<f64> {
    render_clip(&class_template(class), None, None)
}

/// A synthetic `k`-class keyword corpus of 1 s, 8 kHz clips with the default
/// 20% test split.
pub fn synth_keywords(k: usize, per_class: usize, seed: u64) -> Result<LabeledDataset> {
    synth_keywords_split(k, per_class, seed, SYNTH_TEST_FRACTION)
}

pub fn synth_keywords_split(
    k: usize,
    per_class: usize,
    seed: u64,
    test_fraction: f64,
) -> Result<LabeledDataset> {
    if k < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    if per_class == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::invalid("test fraction must lie in [0, 1)"));
    }
    let streams = SeedStreams::new(seed);
    let mut clips = Vec::with_capacity(k * per_class);
    let mut labels = Vec::with_capacity(k * per_class);
    let mut splits = Vec::with_capacity(k * per_class);
    for class in 0..k {
        let bands = class_template(class);
        let mut rng = streams.rng_indexed("synth", class as u64);
        let ids: Vec<String> = (0..per_class)
            .map(|i| format!("{seed}/{class}/{i}"))
            .collect();
        let mut order: Vec<usize> = (0..per_class).collect();
        order.sort_by(|&a, &b| unit_hash(&ids[a]).total_cmp(&unit_hash(&ids[b])));
        let n_test = (per_class as f64 * test_fraction).round() as usize;
        let mut is_test = vec![false; per_class];
        for &i in &order[..n_test] {
            is_test[i] = true;
        }
        for test in is_test {
            let jitter = Jitter {
                onset_s: rng.gen_range(-0.12..0.12),
                f0_hz: rng.gen_range(100.0..180.0),
                voicing_amp: rng.gen_range(0.5..0.8),
                freq_scale: bands
                    .iter()
                    .map(|_| 1.0 + FREQ_JITTER * rng.gen_range(-1.0..1.0))
                    .collect(),
                amps: bands
                    .iter()
                    .map(|_| rng.gen_range(BAND_AMP.0..BAND_AMP.1))
                    .collect(),
                phases: bands.iter().map(|_| rng.gen_range(0.0..2.0 * PI)).collect(),
                width_scale: rng.gen_range(0.8..1.2),
                noise_std: rng.gen_range(NOISE_STD.0..NOISE_STD.1),
            };
            let x = render_clip(&bands, Some(&jitter), Some(&mut rng));
            clips.push(Waveform::new(x, SYNTH_RATE)?);
            labels.push(class);
            splits.push(if test { Split::Test } else { Split::Train });
        }
    }
    let names = (0..k).map(|c| format!("kw{c:02}")).collect();
    LabeledDataset::new(clips, labels, splits, names, test_fraction, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    /// Resample target; `None` keeps the native rate (which must then agree across files).
    pub target_rate: Option<u32>,
    pub clip_secs: f64,
    pub test_fraction: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            target_rate: Some(8000),
            clip_secs: 1.0,
            test_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub dataset: LabeledDataset,
    /// `class/file` of every loaded clip, aligned with the dataset.
    pub files: Vec<String>,
    pub skipped: Vec<PathBuf>,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    out.sort();
    Ok(out)
}

/// Loads `<root>/<class>/*.wav`. Classes are subfolders in name order; the
/// train/test assignment hashes `class/file` so re-ingestion is split-stable.
pub fn ingest_corpus(root: impl AsRef<Path>, opts: &IngestOptions) -> Result<IngestReport> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::invalid(format!(
            "corpus root {} is not a directory",
            root.display()
        )));
    }
    let mut class_names = Vec::new();
    let mut clips = Vec::new();
    let mut labels = Vec::new();
    let mut splits = Vec::new();
    let mut skipped = Vec::new();
    let mut files = Vec::new();
    let mut rate = opts.target_rate;
    for dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let label = class_names.len();
        let mut loaded = 0;
        for file in sorted_entries(&dir)? {
            let is_wav = file
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
            if !is_wav || !file.is_file() {
                continue;
            }
            let w = match read_wav_at(&file, rate) {
                Ok(w) => w,
                Err(e) => {
                    log::warn!("skipping {}: {e}", file.display());
                    skipped.push(file);
                    continue;
                }
            };
            let r = *rate.get_or_insert(w.sample_rate());
            if w.sample_rate() != r {
                log::warn!(
                    "skipping {}: rate {} differs from {r}",
                    file.display(),
                    w.sample_rate()
                );
                skipped.push(file);
                continue;
            }
            let len = (opts.clip_secs * r as f64).round() as usize;
            let mut samples = w.into_samples();
            samples.resize(len, 0.0);
            let key = format!(
                "{name}/{}",
                file.file_name().unwrap_or_default().to_string_lossy()
            );
            clips.push(Waveform::new(samples, r)?);
            labels.push(label);
            splits.push(if unit_hash(&key) < opts.test_fraction {
                Split::Test
            } else {
                Split::Train
            });
            files.push(key);
            loaded += 1;
        }
        if loaded == 0 {
            return Err(Error::EmptyClass(dir));
        }
        class_names.push(name);
    }
    if clips.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dataset = LabeledDataset::new(clips, labels, splits, class_names, opts.test_fraction, 0)?;
    Ok(IngestReport {
        dataset,
        files,
        skipped,
    })
}
