//! Minimal-L2 per-sample attack, taken in the code space of a domain mapping.

use crate::codomain::DomainMapping;
use crate::dsp::dot;
use crate::error::{ensure_len, Error, Result};
use crate::nn::{Classifier, Linearization};

#[derive(Debug, Clone, PartialEq)]
pub struct DeepFoolConfig {
    pub max_steps: usize,
    /// Final candidate is `(1 + overshoot) * z`.
    pub overshoot: f64,
    /// Competing classes considered per step (top scorers, excluding the current one).
    pub candidates: usize,
}

impl Default for DeepFoolConfig {
    fn default() -> Self {
        Self {
            max_steps: 50,
            overshoot: 0.02,
            candidates: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepFoolOutcome {
    /// Code-space candidate, already scaled by `1 + overshoot`.
    pub z: Vec<f64>,
    /// `predict(x + g(z)) != predict(x)`.
    pub success: bool,
    pub steps: usize,
    pub original: usize,
    pub reached: usize,
}

/// One linearized step in `Z` away from `original` toward the nearest
/// competing boundary among `lin.classes`. Returns `None` when every
/// competitor has a zero pulled-back gradient difference.
pub fn deepfool_step(
    lin: &Linearization,
    original: usize,
    g: &dyn DomainMapping,
) -> Result<Option<Vec<f64>>> {
    let pos = lin
        .classes
        .iter()
        .position(|&c| c == original)
        .ok_or_else(|| Error::invalid("linearization does not include the original class"))?;
    let g0 = &lin.gradients[pos];
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for (i, &k) in lin.classes.iter().enumerate() {
        if k == original {
            continue;
        }
        let diff: Vec<f64> = lin.gradients[i]
            .iter()
            .zip(g0)
            .map(|(a, b)| a - b)
            .collect();
        let w = g.adjoint(&diff)?;
        let wn2 = dot(&w, &w);
        if !(wn2 > 0.0) {
            continue;
        }
        let f = (lin.logits[k] - lin.logits[original]).abs();
        let dist = f / wn2.sqrt();
        if best.as_ref().map_or(true, |(d, _, _)| dist < *d) {
            best = Some((dist, f / wn2, w));
        }
    }
    Ok(best.map(|(_, scale, w)| w.into_iter().map(|v| v * scale).collect()))
}

/// Iterates linearized steps from `z = 0` until `x + g((1+eta) z)` changes
/// class or the step budget runs out.
pub fn deepfool(
    model: &dyn Classifier,
    x: &[f64],
    g: &dyn DomainMapping,
    cfg: &DeepFoolConfig,
) -> Result<DeepFoolOutcome> {
    ensure_len(model.input_len(), x.len())?;
    ensure_len(g.signal_len(), x.len())?;
    let top = cfg.candidates.clamp(2, model.num_classes().max(2));
    let scale = 1.0 + cfg.overshoot;
    let mut z = vec![0.0; g.code_len()];
    let mut candidate = z.clone();
    let mut original = None;
    for step in 0..=cfg.max_steps {
        let v = g.map(&candidate)?;
        let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + b).collect();
        let lin = model.linearize(&xp, top)?;
        let current = lin.classes[0];
        let orig = *original.get_or_insert(current);
        if current != orig {
            return Ok(DeepFoolOutcome {
                z: candidate,
                success: true,
                steps: step,
                original: orig,
                reached: current,
            });
        }
        if step == cfg.max_steps {
            break;
        }
        let Some(r) = deepfool_step(&lin, orig, g)? else {
            break;
        };
        z.iter_mut().zip(&r).for_each(|(a, b)| *a += b);
        candidate = z.iter().map(|v| v * scale).collect();
    }
    let orig = original.unwrap_or(0);
    Ok(DeepFoolOutcome {
        z: candidate,
        success: false,
        steps: cfg.max_steps,
        original: orig,
        reached: orig,
    })
}
