use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelOutput, OutputGrads, Real};
use crate::valabel::VALabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub w_v: f64,
    pub w_a: f64,
    pub w_e: f64,
    pub w_s: f64,
    pub w_g: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { w_v: 1.0, w_a: 1.0, w_e: 0.3, w_s: 0.2, w_g: 0.1 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w_v, self.w_a, self.w_e, self.w_s, self.w_g];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        if !(self.w_v > 0.0 && self.w_a > 0.0) {
            return Err(Error::Config("valence and arousal weights must be positive".into()));
        }
        Ok(())
    }
}

/// Supervision for one clip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub label: VALabel,
    pub emotion: usize,
    pub size: usize,
    pub gender: usize,
}

/// Unweighted per-task losses and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub l_v: f64,
    pub l_a: f64,
    pub l_e: f64,
    pub l_s: f64,
    pub l_g: f64,
    pub total: f64,
}

impl LossComponents {
    fn weighted(l_v: f64, l_a: f64, l_e: f64, l_s: f64, l_g: f64, w: &LossWeights) -> Self {
        let total = w.w_v * l_v + w.w_a * l_a + w.w_e * l_e + w.w_s * l_s + w.w_g * l_g;
        Self { l_v, l_a, l_e, l_s, l_g, total }
    }

    /// Mean of per-sample components, summed in slice order.
    pub fn mean(parts: &[LossComponents], w: &LossWeights) -> Self {
        let n = parts.len() as f64;
        let avg = |f: fn(&LossComponents) -> f64| parts.iter().map(f).sum::<f64>() / n;
        Self::weighted(avg(|c| c.l_v), avg(|c| c.l_a), avg(|c| c.l_e), avg(|c| c.l_s), avg(|c| c.l_g), w)
    }

    pub fn is_finite(&self) -> bool {
        [self.l_v, self.l_a, self.l_e, self.l_s, self.l_g, self.total].iter().all(|v| v.is_finite())
    }
}

/// Cross-entropy of `target` under softmax(`logits`) and its gradient w.r.t. the logits.
fn cross_entropy<T: Real>(head: &'static str, logits: &[T], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= logits.len() {
        return Err(Error::ClassIndex { head, index: target, classes: logits.len() });
    }
    let z: Vec<f64> = logits.iter().map(|v| v.to_f64().unwrap()).collect();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    let mut grad: Vec<f64> = z.iter().map(|v| (v - lse).exp()).collect();
    grad[target] -= 1.0;
    Ok((lse - z[target], grad))
}

/// Loss of a single clip and the (weighted, unscaled) gradient w.r.t. its outputs.
pub fn sample_loss<T: Real>(out: &ModelOutput<T>, t: &Targets, w: &LossWeights) -> Result<(LossComponents, OutputGrads<T>)> {
    let v = out.valence.to_f64().unwrap();
    let a = out.arousal.to_f64().unwrap();
    let dv = v - t.label.valence;
    let da = a - t.label.arousal;
    let (l_e, g_e) = cross_entropy("emotion", &out.emotion_logits, t.emotion)?;
    let (l_s, g_s) = cross_entropy("size", &out.size_logits, t.size)?;
    let (l_g, g_g) = cross_entropy("gender", &out.gender_logits, t.gender)?;
    let cast = |g: Vec<f64>, k: f64| g.into_iter().map(|x| T::lit(k * x)).collect::<Vec<T>>();
    let grads = OutputGrads {
        valence: T::lit(w.w_v * 2.0 * dv),
        arousal: T::lit(w.w_a * 2.0 * da),
        emotion_logits: cast(g_e, w.w_e),
        size_logits: cast(g_s, w.w_s),
        gender_logits: cast(g_g, w.w_g),
    };
    Ok((LossComponents::weighted(dv * dv, da * da, l_e, l_s, l_g, w), grads))
}

/// Batch-mean multi-task loss: squared error for valence and arousal,
/// cross-entropy for the three classification heads. Returns the components
/// and, per sample, the gradient of the batch loss w.r.t. that sample's outputs.
pub fn multitask_loss<T: Real>(
    outputs: &[ModelOutput<T>],
    targets: &[Targets],
    w: &LossWeights,
) -> Result<(LossComponents, Vec<OutputGrads<T>>)> {
    if outputs.len() != targets.len() || outputs.is_empty() {
        return Err(Error::Argument(format!("{} outputs for {} targets", outputs.len(), targets.len())));
    }
    let inv_b = T::lit(1.0 / outputs.len() as f64);
    let mut parts = Vec::with_capacity(outputs.len());
    let mut grads = Vec::with_capacity(outputs.len());
    for (o, t) in outputs.iter().zip(targets) {
        let (c, g) = sample_loss(o, t, w)?;
        parts.push(c);
        grads.push(g.scaled(inv_b));
    }
    Ok((LossComponents::mean(&parts, w), grads))
}
