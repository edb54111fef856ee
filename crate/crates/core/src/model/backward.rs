use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

use super::forward::{ActivationCache, HeadCache, NormCache};
use super::params::{Head, LayerNorm, Linear, ModelParams, ParamGrads};
use super::Real;
use crate::error::{Error, Result};

/// Upstream gradient of the loss with respect to the network outputs:
/// the activated valence/arousal values and the raw class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrads<T> {
    pub valence: T,
    pub arousal: T,
    pub emotion_logits: Vec<T>,
    pub size_logits: Vec<T>,
    pub gender_logits: Vec<T>,
}

impl<T: Real> OutputGrads<T> {
    pub fn zeros(n_emotions: usize, n_sizes: usize, n_genders: usize) -> Self {
        Self {
            valence: T::zero(),
            arousal: T::zero(),
            emotion_logits: vec![T::zero(); n_emotions],
            size_logits: vec![T::zero(); n_sizes],
            gender_logits: vec![T::zero(); n_genders],
        }
    }

    pub fn scaled(&self, k: T) -> Self {
        Self {
            valence: self.valence * k,
            arousal: self.arousal * k,
            emotion_logits: self.emotion_logits.iter().map(|&g| g * k).collect(),
            size_logits: self.size_logits.iter().map(|&g| g * k).collect(),
            gender_logits: self.gender_logits.iter().map(|&g| g * k).collect(),
        }
    }
}

/// `dx` for `y = x W^T + b`, accumulating `dW` and `db`.
fn linear_backward<T: Real>(x: ArrayView2<T>, dy: &Array2<T>, l: &Linear<T>, g: &mut Linear<T>) -> Array2<T> {
    general_mat_mul(T::one(), &dy.t(), &x, T::one(), &mut g.weight);
    g.bias += &dy.sum_axis(Axis(0));
    dy.dot(&l.weight)
}

fn layer_norm_backward<T: Real>(dy: &Array2<T>, cache: &NormCache<T>, ln: &LayerNorm<T>, g: &mut LayerNorm<T>) -> Array2<T> {
    g.gain += &(dy * &cache.xhat).sum_axis(Axis(0));
    g.offset += &dy.sum_axis(Axis(0));
    let d = T::lit(dy.ncols() as f64);
    let mut dx = dy * &ln.gain;
    for ((mut row, xhat), &inv) in dx.rows_mut().into_iter().zip(cache.xhat.rows()).zip(&cache.inv_std) {
        let mean_d = row.sum() / d;
        let mean_dx = row.iter().zip(xhat).map(|(&a, &b)| a * b).sum::<T>() / d;
        Zip::from(&mut row).and(&xhat).for_each(|r, &xh| *r = inv * (*r - mean_d - xh * mean_dx));
    }
    dx
}

/// Accumulates head parameter grads and returns `dL/dh` for the pooled vector.
fn head_backward<T: Real>(head: &Head<T>, cache: &HeadCache<T>, pooled: &Array1<T>, dz: &Array1<T>, g: &mut Head<T>) -> Array1<T> {
    let outer = |a: &Array1<T>, b: &Array1<T>| {
        a.view().insert_axis(Axis(1)).dot(&b.view().insert_axis(Axis(0)))
    };
    g.out.weight += &outer(dz, &cache.act);
    g.out.bias += dz;
    let mut du = head.out.weight.t().dot(dz);
    Zip::from(&mut du).and(&cache.pre).for_each(|d, &p| {
        if p <= T::zero() {
            *d = T::zero();
        }
    });
    g.hidden.weight += &outer(&du, pooled);
    g.hidden.bias += &du;
    head.hidden.weight.t().dot(&du)
}

/// Gradients of the loss with respect to every parameter, for one forward pass.
pub fn backward<T: Real>(params: &ModelParams<T>, cache: &ActivationCache<T>, grads: &OutputGrads<T>) -> Result<ParamGrads<T>> {
    let mut acc = params.zero_grads();
    backward_into(params, cache, grads, &mut acc)?;
    Ok(acc)
}

/// Adds this sample's parameter gradients into `acc`.
pub fn backward_into<T: Real>(
    params: &ModelParams<T>,
    cache: &ActivationCache<T>,
    grads: &OutputGrads<T>,
    acc: &mut ParamGrads<T>,
) -> Result<()> {
    if cache.stamp != params.stamp() {
        return Err(Error::StaleCache);
    }
    let cfg = params.config();
    if grads.emotion_logits.len() != cfg.n_emotions
        || grads.size_logits.len() != cfg.n_sizes
        || grads.gender_logits.len() != cfg.n_genders
    {
        return Err(Error::Shape("output gradient lengths do not match the model heads".into()));
    }
    let w = params.weights();
    let g = &mut acc.weights;
    let out = &cache.output;

    let dz_v = Array1::from_elem(1, grads.valence * (T::one() - out.valence * out.valence));
    let dz_a = Array1::from_elem(1, grads.arousal * out.arousal * (T::one() - out.arousal));
    let dz_e = Array1::from(grads.emotion_logits.clone());
    let dz_s = Array1::from(grads.size_logits.clone());
    let dz_g = Array1::from(grads.gender_logits.clone());

    let pooled = &cache.pooled;
    let mut dh = head_backward(&w.valence, &cache.heads[0], pooled, &dz_v, &mut g.valence);
    dh += &head_backward(&w.arousal, &cache.heads[1], pooled, &dz_a, &mut g.arousal);
    dh += &head_backward(&w.emotion, &cache.heads[2], pooled, &dz_e, &mut g.emotion);
    dh += &head_backward(&w.size, &cache.heads[3], pooled, &dz_s, &mut g.size);
    dh += &head_backward(&w.gender, &cache.heads[4], pooled, &dz_g, &mut g.gender);

    let seq = cache.seq_len();
    let d = cfg.d_model;
    let dh_avg = dh / T::lit(seq as f64);
    let mut dz = dh_avg.broadcast((seq, d)).unwrap().to_owned();

    let dh_cols = cfg.head_dim();
    let scale = T::lit(1.0 / (dh_cols as f64).sqrt());

    for ((layer, lc), lg) in w.layers.iter().zip(&cache.layers).zip(g.layers.iter_mut()).rev() {
        // feed-forward sublayer
        let dr2 = layer_norm_backward(&dz, &lc.norm2, &layer.ff_norm, &mut lg.ff_norm);
        let mut dff = dr2.clone();
        if let Some(m) = &lc.ff_mask {
            dff *= m;
        }
        let mut dact = linear_backward(lc.ff_act.view(), &dff, &layer.ff_out, &mut lg.ff_out);
        Zip::from(&mut dact).and(&lc.ff_pre).for_each(|d, &p| {
            if p <= T::zero() {
                *d = T::zero();
            }
        });
        let mut dy1 = linear_backward(lc.y1.view(), &dact, &layer.ff_in, &mut lg.ff_in);
        dy1 += &dr2;

        // attention sublayer
        let dr1 = layer_norm_backward(&dy1, &lc.norm1, &layer.attn_norm, &mut lg.attn_norm);
        let mut dattn = dr1.clone();
        if let Some(m) = &lc.attn_mask {
            dattn *= m;
        }
        let dcontext = linear_backward(lc.context.view(), &dattn, &layer.output, &mut lg.output);
        let mut dq = Array2::zeros((seq, d));
        let mut dk = Array2::zeros((seq, d));
        let mut dv = Array2::zeros((seq, d));
        for (h, probs) in lc.probs.iter().enumerate() {
            let cols = s![.., h * dh_cols..(h + 1) * dh_cols];
            let dctx = dcontext.slice(cols);
            let mut dscores = dctx.dot(&lc.v.slice(cols).t());
            dv.slice_mut(cols).assign(&probs.t().dot(&dctx));
            for (mut drow, prow) in dscores.rows_mut().into_iter().zip(probs.rows()) {
                let dot = drow.iter().zip(prow).map(|(&a, &b)| a * b).sum::<T>();
                Zip::from(&mut drow).and(&prow).for_each(|d, &p| *d = p * (*d - dot) * scale);
            }
            dq.slice_mut(cols).assign(&dscores.dot(&lc.k.slice(cols)));
            dk.slice_mut(cols).assign(&dscores.t().dot(&lc.q.slice(cols)));
        }
        let x = lc.input.view();
        let mut dx = dr1;
        dx += &linear_backward(x, &dq, &layer.query, &mut lg.query);
        dx += &linear_backward(x, &dk, &layer.key, &mut lg.key);
        dx += &linear_backward(x, &dv, &layer.value, &mut lg.value);
        dz = dx;
    }

    // positional encodings are constants; only the projection learns
    general_mat_mul(T::one(), &dz.t(), &cache.input, T::one(), &mut g.input_proj.weight);
    g.input_proj.bias += &dz.sum_axis(Axis(0));
    Ok(())
}
