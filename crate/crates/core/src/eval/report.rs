//! CSV emitters for the evaluation results. Rows follow axis order.

use std::path::Path;

use super::analysis::{AngleRecord, Composition, SphereSurface};
use super::sweeps::{
    region_of, ConvergenceBand, RegionSummary, ShiftSweep, SnrSweep, TransferEntry,
};
use crate::dsp::csvio::{fmt_f64, write_csv};
use crate::error::Result;

/// `snr_db, fool_rate_mean, fool_rate_std, region`.
pub fn write_snr_csv(path: impl AsRef<Path>, sweep: &SnrSweep) -> Result<()> {
    write_csv(
        path,
        &["snr_db", "fool_rate_mean", "fool_rate_std", "region"],
        sweep.report.rows.iter().map(|r| {
            vec![
                fmt_f64(r.axis),
                fmt_f64(r.mean),
                fmt_f64(r.std),
                region_of(r.axis).tag().to_string(),
            ]
        }),
    )
}

/// `region, snr_low_db, snr_high_db, points, fool_rate_mean`.
pub fn write_regions_csv(path: impl AsRef<Path>, regions: &[RegionSummary]) -> Result<()> {
    write_csv(
        path,
        &[
            "region",
            "snr_low_db",
            "snr_high_db",
            "points",
            "fool_rate_mean",
        ],
        regions.iter().map(|r| {
            let (lo, hi) = r.region.bounds();
            vec![
                r.region.tag().to_string(),
                fmt_f64(lo),
                fmt_f64(hi),
                r.points.to_string(),
                fmt_f64(r.fool_rate_mean),
            ]
        }),
    )
}

/// `shift_samples, shift_ms, fool_rate_mean, fool_rate_std`.
pub fn write_shift_csv(path: impl AsRef<Path>, sweep: &ShiftSweep) -> Result<()> {
    let rate = sweep.sample_rate as f64;
    write_csv(
        path,
        &[
            "shift_samples",
            "shift_ms",
            "fool_rate_mean",
            "fool_rate_std",
        ],
        sweep.report.rows.iter().map(|r| {
            vec![
                (r.axis as i64).to_string(),
                fmt_f64(r.axis * 1000.0 / rate),
                fmt_f64(r.mean),
                fmt_f64(r.std),
            ]
        }),
    )
}

/// `source_model, domain, target_model, fool_rate`.
pub fn write_transfer_csv(path: impl AsRef<Path>, entries: &[TransferEntry]) -> Result<()> {
    write_csv(
        path,
        &["source_model", "domain", "target_model", "fool_rate"],
        entries.iter().map(|e| {
            vec![
                e.source_model.clone(),
                e.domain.tag().to_string(),
                e.target_model.clone(),
                fmt_f64(e.fool_rate),
            ]
        }),
    )
}

/// `iteration, fool_rate_mean, fool_rate_std, runs`.
pub fn write_convergence_csv(path: impl AsRef<Path>, bands: &[ConvergenceBand]) -> Result<()> {
    write_csv(
        path,
        &["iteration", "fool_rate_mean", "fool_rate_std", "runs"],
        bands.iter().map(|b| {
            vec![
                b.iteration.to_string(),
                fmt_f64(b.mean),
                fmt_f64(b.std),
                b.runs.to_string(),
            ]
        }),
    )
}

/// `freq_hz, magnitude, peak_rank` with the rank empty off-peak.
pub fn write_composition_csv(path: impl AsRef<Path>, c: &Composition) -> Result<()> {
    write_csv(
        path,
        &["freq_hz", "magnitude", "peak_rank"],
        (0..c.freq_hz.len()).map(|k| {
            let rank = c
                .peaks
                .iter()
                .position(|&p| p == k)
                .map(|r| (r + 1).to_string());
            vec![
                fmt_f64(c.freq_hz[k]),
                fmt_f64(c.magnitude[k]),
                rank.unwrap_or_default(),
            ]
        }),
    )
}

/// `phi_deg, theta_deg, accuracy, fool_rate`.
pub fn write_sphere_csv(path: impl AsRef<Path>, s: &SphereSurface) -> Result<()> {
    write_csv(
        path,
        &["phi_deg", "theta_deg", "accuracy", "fool_rate"],
        s.points.iter().map(|p| {
            vec![
                fmt_f64(p.phi_deg),
                fmt_f64(p.theta_deg),
                fmt_f64(p.accuracy),
                fmt_f64(p.fool_rate),
            ]
        }),
    )
}

/// `run_id, iteration, theta_deg` with missing angles left empty.
pub fn write_angles_csv(path: impl AsRef<Path>, runs: &[(String, Vec<AngleRecord>)]) -> Result<()> {
    write_csv(
        path,
        &["run_id", "iteration", "theta_deg"],
        runs.iter().flat_map(|(id, recs)| {
            recs.iter().map(move |r| {
                vec![
                    id.clone(),
                    r.iteration.to_string(),
                    r.theta_deg.map(fmt_f64).unwrap_or_default(),
                ]
            })
        }),
    )
}
