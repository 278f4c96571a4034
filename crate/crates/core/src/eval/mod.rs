//! Evaluation and analysis procedures over constructed perturbations:
//! channel emulation, SNR/shift sweeps, transfer, convergence, spectral
//! composition, sphere scans and update angles.

mod analysis;
mod channel;
mod report;
mod sweeps;

pub use analysis::{
    angle_bands, first_valid_mean, freq_composition, sincos_deg, sphere_sweep, update_angles,
    AngleBand, AngleRecord, Composition, SphereBasis, SpherePoint, SphereSurface,
    COMPOSITION_KERNEL, SPHERE_NORM_TOL,
};
pub use channel::{apply_channel, channel_fool_rate, ChannelParams};
pub use report::{
    write_angles_csv, write_composition_csv, write_convergence_csv, write_regions_csv,
    write_shift_csv, write_snr_csv, write_sphere_csv, write_transfer_csv,
};
pub use sweeps::{
    convergence_track, iterations_to_fraction, region_of, shift_grid, shift_sweep, snr_grid,
    snr_sweep, transfer_matrix, ConvergenceBand, Region, RegionSummary, ShiftSweep, SnrSweep,
    SweepMeta, SweepReport, SweepRow, TransferAttack, TransferEntry, REGION_HIGH_DB, REGION_LOW_DB,
};

use crate::error::{ensure_len, Error, Result};
use crate::nn::{Classifier, LabeledDataset};

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// A model and dataset with clean predictions computed once, so repeated
/// fool-rate queries only pay for the perturbed pass.
pub struct Evaluator<'a> {
    model: &'a dyn Classifier,
    data: &'a LabeledDataset,
    clean: Vec<usize>,
}

impl<'a> Evaluator<'a> {
    pub fn new(model: &'a dyn Classifier, data: &'a LabeledDataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        ensure_len(model.input_len(), data.clip_len())?;
        let clean = model.predict_batch(&data.samples())?;
        Ok(Self { model, data, clean })
    }

    pub fn data(&self) -> &LabeledDataset {
        self.data
    }

    pub fn clean_predictions(&self) -> &[usize] {
        &self.clean
    }

    /// Predictions on `x + v` for every clip.
    pub fn perturbed_predictions(&self, v: &[f64]) -> Result<Vec<usize>> {
        ensure_len(self.data.clip_len(), v.len())?;
        self.predictions_with(|_, x| Ok(x.iter().zip(v).map(|(a, b)| a + b).collect()))
    }

    /// Predictions on `transform(index, clip)` for every clip.
    pub fn predictions_with(
        &self,
        transform: impl Fn(usize, &[f64]) -> Result<Vec<f64>>,
    ) -> Result<Vec<usize>> {
        let inputs = self
            .data
            .clips
            .iter()
            .enumerate()
            .map(|(i, c)| transform(i, c.samples()))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
        self.model.predict_batch(&refs)
    }

    pub fn fool_rate(&self, v: &[f64]) -> Result<f64> {
        Ok(self.changed(&self.perturbed_predictions(v)?))
    }

    /// Accuracy against the true labels on `x + v`.
    pub fn accuracy(&self, v: &[f64]) -> Result<f64> {
        Ok(self.correct(&self.perturbed_predictions(v)?))
    }

    /// Fraction of `preds` differing from the clean predictions.
    pub fn changed(&self, preds: &[usize]) -> f64 {
        self.clean.iter().zip(preds).filter(|(a, b)| a != b).count() as f64
            / self.clean.len() as f64
    }

    pub fn correct(&self, preds: &[usize]) -> f64 {
        self.data
            .labels
            .iter()
            .zip(preds)
            .filter(|(a, b)| a == b)
            .count() as f64
            / preds.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_is_population() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        assert_eq!(mean_std(&[5.0]).1, 0.0);
        assert!(mean_std(&[]).0.is_nan());
    }
}
