//! Search-space analysis: spectral composition of attacks, accuracy over a
//! sphere spanned by three attacks, and angles between successive updates.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{mean_std, Evaluator};
use crate::dsp::{dot, gaussian_smooth, l2_norm, real_fft, Waveform};
use crate::error::{ensure_len, Error, Result};

/// Mean FFT magnitude of a set of attacks, Gaussian-smoothed.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    pub freq_hz: Vec<f64>,
    pub magnitude: Vec<f64>,
    /// Bin indices of local maxima, strongest first.
    pub peaks: Vec<usize>,
}

pub const COMPOSITION_KERNEL: usize = 5;
const MAX_PEAKS: usize = 5;

pub fn freq_composition(attacks: &[Waveform]) -> Result<Composition> {
    let first = attacks
        .first()
        .ok_or_else(|| Error::invalid("no attacks to analyze"))?;
    let (n, rate) = (first.len(), first.sample_rate());
    let mut acc = vec![0.0; n / 2 + 1];
    for a in attacks {
        ensure_len(n, a.len())?;
        if a.sample_rate() != rate {
            return Err(Error::invalid("attacks disagree on sample rate"));
        }
        let spec = real_fft(a.samples())?;
        for (s, m) in acc.iter_mut().zip(spec.magnitudes()) {
            *s += m;
        }
    }
    let mean: Vec<f64> = acc.iter().map(|s| s / attacks.len() as f64).collect();
    let magnitude = gaussian_smooth(&mean, COMPOSITION_KERNEL)?;
    let freq_hz = (0..magnitude.len())
        .map(|k| k as f64 * rate as f64 / n as f64)
        .collect();
    let peaks = local_maxima(&magnitude, MAX_PEAKS);
    Ok(Composition {
        freq_hz,
        magnitude,
        peaks,
    })
}

fn local_maxima(v: &[f64], limit: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len())
        .filter(|&i| {
            let left = i == 0 || v[i] > v[i - 1];
            let right = i + 1 == v.len() || v[i] >= v[i + 1];
            left && right && v[i] > 0.0
        })
        .collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx.truncate(limit);
    idx
}

/// `(sin, cos)` of an angle in degrees, exact at multiples of 90.
pub fn sincos_deg(deg: f64) -> (f64, f64) {
    let r = deg.rem_euclid(360.0);
    if r == 0.0 {
        (0.0, 1.0)
    } else if r == 90.0 {
        (1.0, 0.0)
    } else if r == 180.0 {
        (0.0, -1.0)
    } else if r == 270.0 {
        (-1.0, 0.0)
    } else {
        r.to_radians().sin_cos()
    }
}

/// Three equal-norm, pairwise non-collinear perturbations.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereBasis {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub p3: Vec<f64>,
}

pub const SPHERE_NORM_TOL: f64 = 1e-6;
const COLLINEAR_TOL: f64 = 1e-9;

impl SphereBasis {
    pub fn new(p1: Vec<f64>, p2: Vec<f64>, p3: Vec<f64>) -> Result<Self> {
        ensure_len(p1.len(), p2.len())?;
        ensure_len(p1.len(), p3.len())?;
        let norms = [l2_norm(&p1), l2_norm(&p2), l2_norm(&p3)];
        if norms.iter().any(|n| !(*n > 0.0)) {
            return Err(Error::DegenerateBasis(
                "a basis vector has zero norm".into(),
            ));
        }
        let hi = norms.iter().cloned().fold(f64::MIN, f64::max);
        let lo = norms.iter().cloned().fold(f64::MAX, f64::min);
        if (hi - lo) / hi > SPHERE_NORM_TOL {
            return Err(Error::NormMismatch(format!(
                "{:.9e}, {:.9e}, {:.9e} differ by more than {SPHERE_NORM_TOL} relative",
                norms[0], norms[1], norms[2]
            )));
        }
        let vs = [&p1, &p2, &p3];
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let c = dot(vs[i], vs[j]) / (norms[i] * norms[j]);
            if c.abs() >= 1.0 - COLLINEAR_TOL {
                return Err(Error::DegenerateBasis(format!(
                    "P{} and P{} are collinear",
                    i + 1,
                    j + 1
                )));
            }
        }
        Ok(Self { p1, p2, p3 })
    }

    /// `sin(phi) cos(theta) P3 + sin(phi) sin(theta) P2 + cos(phi) P1`.
    pub fn point(&self, phi_deg: f64, theta_deg: f64) -> Vec<f64> {
        let (sp, cp) = sincos_deg(phi_deg);
        let (st, ct) = sincos_deg(theta_deg);
        let (a, b) = (sp * ct, sp * st);
        (0..self.p1.len())
            .map(|i| a * self.p3[i] + b * self.p2[i] + cp * self.p1[i])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint {
    pub phi_deg: f64,
    pub theta_deg: f64,
    pub accuracy: f64,
    pub fool_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereSurface {
    pub phi_deg: Vec<f64>,
    pub theta_deg: Vec<f64>,
    /// Row-major with `phi` outermost.
    pub points: Vec<SpherePoint>,
}

impl SphereSurface {
    pub fn at(&self, i_phi: usize, i_theta: usize) -> &SpherePoint {
        &self.points[i_phi * self.theta_deg.len() + i_theta]
    }
}

/// `phi` spans `[0, 180]` inclusive in `n_phi` points; `theta` spans
/// `[0, 360)` in `n_theta` points.
pub fn sphere_sweep(
    eval: &Evaluator,
    basis: &SphereBasis,
    n_phi: usize,
    n_theta: usize,
) -> Result<SphereSurface> {
    if n_phi < 2 || n_theta < 1 {
        return Err(Error::invalid(
            "sphere grid needs n_phi >= 2 and n_theta >= 1",
        ));
    }
    ensure_len(eval.data().clip_len(), basis.p1.len())?;
    let phi_deg: Vec<f64> = (0..n_phi)
        .map(|i| 180.0 * i as f64 / (n_phi - 1) as f64)
        .collect();
    let theta_deg: Vec<f64> = (0..n_theta)
        .map(|j| 360.0 * j as f64 / n_theta as f64)
        .collect();
    let grid: Vec<(f64, f64)> = phi_deg
        .iter()
        .flat_map(|&p| theta_deg.iter().map(move |&t| (p, t)))
        .collect();
    let points = grid
        .par_iter()
        .map(|&(phi, theta)| {
            let preds = eval.perturbed_predictions(&basis.point(phi, theta))?;
            Ok(SpherePoint {
                phi_deg: phi,
                theta_deg: theta,
                accuracy: eval.correct(&preds),
                fool_rate: eval.changed(&preds),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SphereSurface {
        phi_deg,
        theta_deg,
        points,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleRecord {
    pub iteration: usize,
    /// `None` when either update has zero norm.
    pub theta_deg: Option<f64>,
}

/// Angles between successive updates `grad_i = du_i - du_{i-1}`, where
/// `du_history[0]` is the zero start. One record per `i >= 2`.
pub fn update_angles(du_history: &[Vec<f64>]) -> Result<Vec<AngleRecord>> {
    if du_history.len() < 3 {
        return Err(Error::invalid(
            "angles need at least three momentum vectors",
        ));
    }
    let d = du_history[0].len();
    for v in du_history {
        ensure_len(d, v.len())?;
    }
    let grads: Vec<Vec<f64>> = du_history
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect())
        .collect();
    Ok(grads
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let (na, nb) = (l2_norm(&w[0]), l2_norm(&w[1]));
            let theta_deg = (na > 0.0 && nb > 0.0).then(|| {
                let c = (dot(&w[0], &w[1]) / (na * nb)).clamp(-1.0, 1.0);
                c.acos().to_degrees()
            });
            AngleRecord {
                iteration: i + 2,
                theta_deg,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleBand {
    pub iteration: usize,
    pub mean: f64,
    pub std: f64,
    /// Runs contributing a defined angle at this iteration.
    pub count: usize,
}

/// Per-iteration mean and population std over runs, skipping missing angles.
pub fn angle_bands(runs: &[Vec<AngleRecord>]) -> Vec<AngleBand> {
    let mut by_iter: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for run in runs {
        for r in run {
            let slot = by_iter.entry(r.iteration).or_default();
            if let Some(t) = r.theta_deg {
                slot.push(t);
            }
        }
    }
    by_iter
        .into_iter()
        .map(|(iteration, vals)| {
            let (mean, std) = mean_std(&vals);
            AngleBand {
                iteration,
                mean,
                std,
                count: vals.len(),
            }
        })
        .collect()
}

/// Mean of the first `n` defined angles of a run, if it has that many.
pub fn first_valid_mean(run: &[AngleRecord], n: usize) -> Option<f64> {
    let vals: Vec<f64> = run.iter().filter_map(|r| r.theta_deg).take(n).collect();
    (n > 0 && vals.len() == n).then(|| vals.iter().sum::<f64>() / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn composition_peaks_at_tone() {
        let tone = Waveform::new(
            (0..8000)
                .map(|i| (2.0 * PI * 1000.0 * i as f64 / 8000.0).sin())
                .collect(),
            8000,
        )
        .unwrap();
        let c = freq_composition(&[tone.clone()]).unwrap();
        assert_eq!(c.freq_hz[c.peaks[0]], 1000.0);
        assert_eq!(*c.freq_hz.last().unwrap(), 4000.0);
        let double = freq_composition(&[tone.map(|v| 2.0 * v)]).unwrap();
        for (a, b) in c.magnitude.iter().zip(&double.magnitude) {
            assert!((2.0 * a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn sincos_exact_at_right_angles() {
        assert_eq!(sincos_deg(0.0), (0.0, 1.0));
        assert_eq!(sincos_deg(90.0), (1.0, 0.0));
        assert_eq!(sincos_deg(180.0), (0.0, -1.0));
        assert_eq!(sincos_deg(-90.0), (-1.0, 0.0));
        let (s, c) = sincos_deg(30.0);
        assert!((s - 0.5).abs() < 1e-15 && (c - 0.75f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sphere_basis_rules() {
        let e = |i: usize| {
            let mut v = vec![0.0; 3];
            v[i] = 2.0;
            v
        };
        let b = SphereBasis::new(e(0), e(1), e(2)).unwrap();
        for t in [0.0, 45.0, 200.0] {
            assert_eq!(b.point(0.0, t), e(0));
        }
        assert_eq!(b.point(90.0, 0.0), e(2));
        assert_eq!(b.point(180.0, 10.0), vec![-2.0, 0.0, 0.0]);
        assert!((l2_norm(&b.point(37.0, 123.0)) - 2.0).abs() < 1e-12);
        assert!(matches!(
            SphereBasis::new(e(0), e(1), vec![0.0, 0.0, 3.0]),
            Err(Error::NormMismatch(_))
        ));
        assert!(matches!(
            SphereBasis::new(e(0), e(0), e(2)),
            Err(Error::DegenerateBasis(_))
        ));
    }

    #[test]
    fn angle_cases() {
        let z = vec![0.0, 0.0];
        let v = vec![1.0, 0.5];
        let constant = update_angles(&[v.clone(), v.clone(), v.clone(), v]).unwrap();
        assert_eq!(constant.len(), 2);
        assert!(constant.iter().all(|r| r.theta_deg.is_none()));
        // grads: (1,0), (0,1), (1,0) -> 90, 90
        let alt =
            update_angles(&[z.clone(), vec![1.0, 0.0], vec![1.0, 1.0], vec![2.0, 1.0]]).unwrap();
        assert!(alt
            .iter()
            .all(|r| (r.theta_deg.unwrap() - 90.0).abs() < 1e-12));
        assert_eq!(
            alt.iter().map(|r| r.iteration).collect::<Vec<_>>(),
            vec![2, 3]
        );
        // grads: (1,0), (2,0) -> 0
        let same = update_angles(&[z.clone(), vec![1.0, 0.0], vec![3.0, 0.0]]).unwrap();
        assert_eq!(same[0].theta_deg, Some(0.0));
        assert!(update_angles(&[z.clone(), z]).is_err());
    }

    #[test]
    fn bands_skip_missing() {
        let runs = vec![
            vec![
                AngleRecord {
                    iteration: 2,
                    theta_deg: Some(10.0),
                },
                AngleRecord {
                    iteration: 3,
                    theta_deg: None,
                },
            ],
            vec![AngleRecord {
                iteration: 2,
                theta_deg: Some(20.0),
            }],
        ];
        let b = angle_bands(&runs);
        assert_eq!((b[0].mean, b[0].std, b[0].count), (15.0, 5.0, 2));
        assert_eq!(b[1].count, 0);
        assert_eq!(first_valid_mean(&runs[0], 1), Some(10.0));
        assert_eq!(first_valid_mean(&runs[0], 2), None);
    }
}
