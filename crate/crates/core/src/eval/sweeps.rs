//! Fool-rate sweeps over loudness and shift, the cross-model transfer table
//! and convergence bands.

use rayon::prelude::*;

use super::{mean_std, Evaluator};
use crate::attack::mean_snr_db;
use crate::codomain::Domain;
use crate::dsp::cyclic_shift_slice;
use crate::error::{ensure_len, Error, Result};
use crate::nn::{Classifier, LabeledDataset};

/// Identifies what a sweep was run against.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepMeta {
    pub model_id: String,
    pub domain: Option<Domain>,
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: f64,
    pub mean: f64,
    pub std: f64,
    /// Fool rate of each attack replicate at this axis value.
    pub per_attack: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub meta: SweepMeta,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    fn from_matrix(meta: SweepMeta, axis: &[f64], per_point: Vec<Vec<f64>>) -> Self {
        let rows = axis
            .iter()
            .zip(per_point)
            .map(|(&a, per_attack)| {
                let (mean, std) = mean_std(&per_attack);
                SweepRow {
                    axis: a,
                    mean,
                    std,
                    per_attack,
                }
            })
            .collect();
        Self { meta, rows }
    }

    pub fn attacks(&self) -> usize {
        self.rows.first().map_or(0, |r| r.per_attack.len())
    }

    /// Fool rates of attack `a` across the axis.
    pub fn attack_series(&self, a: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.per_attack[a]).collect()
    }
}

/// Loudness regions split at 4 dB and 15 dB.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// SNR at or below 4 dB: the attack drowns the signal.
    A,
    /// Between 4 dB and 15 dB.
    B,
    /// SNR at or above 15 dB: the attack fades out.
    C,
}

impl Region {
    pub fn tag(&self) -> &'static str {
        match self {
            Region::A => "A",
            Region::B => "B",
            Region::C => "C",
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Region::A => (f64::NEG_INFINITY, REGION_LOW_DB),
            Region::B => (REGION_LOW_DB, REGION_HIGH_DB),
            Region::C => (REGION_HIGH_DB, f64::INFINITY),
        }
    }
}

pub const REGION_LOW_DB: f64 = 4.0;
pub const REGION_HIGH_DB: f64 = 15.0;

pub fn region_of(snr_db: f64) -> Region {
    if snr_db <= REGION_LOW_DB {
        Region::A
    } else if snr_db < REGION_HIGH_DB {
        Region::B
    } else {
        Region::C
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSummary {
    pub region: Region,
    pub points: usize,
    /// Mean of the row means falling in the region; NaN when empty.
    pub fool_rate_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnrSweep {
    pub report: SweepReport,
    pub regions: Vec<RegionSummary>,
}

/// `-5, -2.5, ..., 30` dB.
pub fn snr_grid() -> Vec<f64> {
    (0..15).map(|i| -5.0 + 2.5 * i as f64).collect()
}

/// Rescales each attack so that the dataset-mean SNR hits every grid value,
/// then measures the fool rate. Rows follow ascending SNR.
pub fn snr_sweep(
    eval: &Evaluator,
    attacks: &[Vec<f64>],
    grid: &[f64],
    meta: SweepMeta,
) -> Result<SnrSweep> {
    if grid.is_empty() {
        return Err(Error::invalid("snr grid is empty"));
    }
    if attacks.is_empty() {
        return Err(Error::invalid("no attacks to sweep"));
    }
    let mut axis = grid.to_vec();
    axis.sort_by(f64::total_cmp);
    let base = attacks
        .iter()
        .map(|v| {
            let s = mean_snr_db(eval.data(), v)?;
            if !s.is_finite() {
                return Err(Error::invalid("cannot rescale a silent attack"));
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let per_point = axis
        .par_iter()
        .map(|&target| {
            attacks
                .iter()
                .zip(&base)
                .map(|(v, &s0)| {
                    let c = 10f64.powf((s0 - target) / 20.0);
                    let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
                    eval.fool_rate(&scaled)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let report = SweepReport::from_matrix(meta, &axis, per_point);
    let regions = [Region::A, Region::B, Region::C]
        .into_iter()
        .map(|region| {
            let means: Vec<f64> = report
                .rows
                .iter()
                .filter(|r| region_of(r.axis) == region)
                .map(|r| r.mean)
                .collect();
            RegionSummary {
                region,
                points: means.len(),
                fool_rate_mean: mean_std(&means).0,
            }
        })
        .collect();
    Ok(SnrSweep { report, regions })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSweep {
    pub report: SweepReport,
    pub sample_rate: u32,
    /// Per attack, the population std of its fool rate across shifts.
    pub per_attack_std: Vec<f64>,
    /// Mean of `per_attack_std`: the domain-level robustness summary.
    pub mean_per_attack_std: f64,
}

/// `steps + 1` shifts from 0 to `n` inclusive, `round_down(j * n / steps)`.
pub fn shift_grid(n: usize, steps: usize) -> Result<Vec<i64>> {
    if steps == 0 {
        return Err(Error::invalid("shift grid needs at least one step"));
    }
    Ok((0..=steps).map(|j| (j * n / steps) as i64).collect())
}

/// Fool rate of every attack under every cyclic shift of the attack.
pub fn shift_sweep(
    eval: &Evaluator,
    attacks: &[Vec<f64>],
    shifts: &[i64],
    meta: SweepMeta,
) -> Result<ShiftSweep> {
    if attacks.is_empty() {
        return Err(Error::invalid("no attacks to sweep"));
    }
    if shifts.is_empty() {
        return Err(Error::invalid("shift grid is empty"));
    }
    for v in attacks {
        ensure_len(eval.data().clip_len(), v.len())?;
    }
    let mut axis = shifts.to_vec();
    axis.sort_unstable();
    let per_point = axis
        .par_iter()
        .map(|&tau| {
            attacks
                .iter()
                .map(|v| eval.fool_rate(&cyclic_shift_slice(v, tau)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let axis_f: Vec<f64> = axis.iter().map(|&t| t as f64).collect();
    let report = SweepReport::from_matrix(meta, &axis_f, per_point);
    let per_attack_std: Vec<f64> = (0..attacks.len())
        .map(|a| mean_std(&report.attack_series(a)).1)
        .collect();
    let mean_per_attack_std = mean_std(&per_attack_std).0;
    Ok(ShiftSweep {
        report,
        sample_rate: eval.data().sample_rate(),
        per_attack_std,
        mean_per_attack_std,
    })
}

/// One constructed attack entering the transfer table.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferAttack {
    pub source_model: String,
    pub domain: Domain,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferEntry {
    pub source_model: String,
    pub domain: Domain,
    pub target_model: String,
    pub fool_rate: f64,
}

/// Evaluates every attack against every model, attacks outermost.
pub fn transfer_matrix(
    attacks: &[TransferAttack],
    models: &[(String, &dyn Classifier)],
    data: &LabeledDataset,
) -> Result<Vec<TransferEntry>> {
    if attacks.is_empty() {
        return Err(Error::invalid("transfer table needs at least one attack"));
    }
    if models.is_empty() {
        return Err(Error::invalid("transfer table needs at least one model"));
    }
    let mut out = Vec::with_capacity(attacks.len() * models.len());
    for (name, model) in models {
        let eval = Evaluator::new(*model, data)?;
        for a in attacks {
            out.push(TransferEntry {
                source_model: a.source_model.clone(),
                domain: a.domain,
                target_model: name.clone(),
                fool_rate: eval.fool_rate(&a.v)?,
            });
        }
    }
    let key = |e: &TransferEntry| {
        let ai = attacks
            .iter()
            .position(|a| a.source_model == e.source_model && a.domain == e.domain)
            .unwrap_or(usize::MAX);
        let mi = models
            .iter()
            .position(|(n, _)| *n == e.target_model)
            .unwrap_or(usize::MAX);
        (ai, mi)
    };
    out.sort_by_key(key);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceBand {
    /// 1-based iteration.
    pub iteration: usize,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

/// Aligns fool-rate histories by iteration, padding short runs with their
/// final value, and reports mean and population std per iteration.
pub fn convergence_track(histories: &[Vec<f64>]) -> Result<Vec<ConvergenceBand>> {
    if histories.is_empty() || histories.iter().any(Vec::is_empty) {
        return Err(Error::invalid(
            "convergence tracking needs non-empty histories",
        ));
    }
    let len = histories.iter().map(Vec::len).max().unwrap_or(0);
    Ok((0..len)
        .map(|i| {
            let vals: Vec<f64> = histories.iter().map(|h| h[i.min(h.len() - 1)]).collect();
            let (mean, std) = mean_std(&vals);
            ConvergenceBand {
                iteration: i + 1,
                mean,
                std,
                runs: histories.len(),
            }
        })
        .collect())
}

/// First 1-based iteration whose fool rate reaches `fraction` of the final one.
pub fn iterations_to_fraction(history: &[f64], fraction: f64) -> Result<usize> {
    let last = *history
        .last()
        .ok_or_else(|| Error::invalid("empty history"))?;
    let goal = fraction * last;
    Ok(history
        .iter()
        .position(|&f| f >= goal)
        .map_or(history.len(), |i| i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g = shift_grid(8000, 32).unwrap();
        assert_eq!(g.len(), 33);
        assert_eq!((g[0], g[1], g[32]), (0, 250, 8000));
        let s = snr_grid();
        assert_eq!((s[0], s[14], s.len()), (-5.0, 30.0, 15));
        assert!(shift_grid(10, 0).is_err());
    }

    #[test]
    fn regions() {
        assert_eq!(region_of(-5.0), Region::A);
        assert_eq!(region_of(4.0), Region::A);
        assert_eq!(region_of(4.5), Region::B);
        assert_eq!(region_of(15.0), Region::C);
    }

    #[test]
    fn convergence_pads_and_bands() {
        let bands = convergence_track(&[vec![0.2, 0.5], vec![0.4, 0.6, 0.7]]).unwrap();
        assert_eq!(bands.len(), 3);
        assert!((bands[2].mean - 0.6).abs() < 1e-12);
        assert!((bands[2].std - 0.1).abs() < 1e-12);
        let single = convergence_track(&[vec![0.1, 0.3]]).unwrap();
        assert!(single.iter().all(|b| b.std == 0.0));
        assert!(convergence_track(&[]).is_err());
        assert!(convergence_track(&[vec![]]).is_err());
    }

    #[test]
    fn iterations_to_eighty_percent() {
        assert_eq!(
            iterations_to_fraction(&[0.1, 0.7, 0.8, 0.9], 0.8).unwrap(),
            3
        );
        assert_eq!(iterations_to_fraction(&[0.5], 0.8).unwrap(), 1);
        assert!(iterations_to_fraction(&[], 0.8).is_err());
    }
}
