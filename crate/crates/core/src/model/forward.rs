use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, RngCore};

use super::params::{Head, LayerNorm, Linear, ModelParams};
use super::Real;
use crate::audio::MelSpectrogram;
use crate::error::{Error, Result};

pub(crate) const LN_EPS: f64 = 1e-5;

/// Head outputs for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput<T> {
    /// tanh, in [-1, 1].
    pub valence: T,
    /// sigmoid, in [0, 1].
    pub arousal: T,
    pub emotion_probs: Vec<T>,
    pub size_probs: Vec<T>,
    pub gender_probs: Vec<T>,
    pub emotion_logits: Vec<T>,
    pub size_logits: Vec<T>,
    pub gender_logits: Vec<T>,
}

#[derive(Debug, Clone)]
pub(crate) struct NormCache<T> {
    pub xhat: Array2<T>,
    pub inv_std: Array1<T>,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache<T> {
    pub input: Array2<T>,
    pub q: Array2<T>,
    pub k: Array2<T>,
    pub v: Array2<T>,
    /// Attention weights per head, `[seq, seq]`.
    pub probs: Vec<Array2<T>>,
    pub context: Array2<T>,
    pub attn_mask: Option<Array2<T>>,
    pub norm1: NormCache<T>,
    pub y1: Array2<T>,
    pub ff_pre: Array2<T>,
    pub ff_act: Array2<T>,
    pub ff_mask: Option<Array2<T>>,
    pub norm2: NormCache<T>,
}

#[derive(Debug, Clone)]
pub(crate) struct HeadCache<T> {
    pub pre: Array1<T>,
    pub act: Array1<T>,
}

/// Intermediate activations of one forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct ActivationCache<T> {
    pub(crate) stamp: u64,
    /// `[seq, input_dim]`
    pub(crate) input: Array2<T>,
    pub(crate) layers: Vec<LayerCache<T>>,
    pub(crate) pooled: Array1<T>,
    pub(crate) heads: [HeadCache<T>; 5],
    pub(crate) output: ModelOutput<T>,
}

impl<T: Real> ActivationCache<T> {
    /// Time-averaged encoder output fed to the heads.
    pub fn pooled(&self) -> &Array1<T> {
        &self.pooled
    }

    pub fn seq_len(&self) -> usize {
        self.input.nrows()
    }
}

/// Fixed sinusoidal encoding of position `pos` into `dim` channels.
pub fn positional_encoding<T: Real>(pos: usize, dim: usize) -> Array1<T> {
    Array1::from_shape_fn(dim, |j| {
        let rate = 1.0 / 10000f64.powf((2 * (j / 2)) as f64 / dim as f64);
        let angle = pos as f64 * rate;
        T::lit(if j % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

pub(crate) fn affine<T: Real>(x: &ArrayView2<T>, l: &Linear<T>) -> Array2<T> {
    let mut y = x.dot(&l.weight.t());
    y += &l.bias;
    y
}

fn layer_norm<T: Real>(x: &Array2<T>, ln: &LayerNorm<T>) -> (Array2<T>, NormCache<T>) {
    let d = T::lit(x.ncols() as f64);
    let eps = T::lit(LN_EPS);
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<T>() / d;
        *inv = T::one() / (var + eps).sqrt();
        let s = *inv;
        row.mapv_inplace(|v| v * s);
    }
    let mut y = &xhat * &ln.gain;
    y += &ln.offset;
    (y, NormCache { xhat, inv_std })
}

pub(crate) fn softmax_in_place<T: Real>(v: &mut [T]) {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Inverted dropout mask: entries are 0 with probability `p`, else `1/(1-p)`.
fn dropout_mask<T: Real>(shape: (usize, usize), p: f64, rng: &mut dyn RngCore) -> Array2<T> {
    let keep = T::lit(1.0 / (1.0 - p));
    Array2::from_shape_simple_fn(shape, || if rng.gen::<f64>() < p { T::zero() } else { keep })
}

fn head_forward<T: Real>(head: &Head<T>, h: &Array1<T>) -> (HeadCache<T>, Vec<T>) {
    let pre = head.hidden.weight.dot(h) + &head.hidden.bias;
    let act = pre.mapv(|v| v.max(T::zero()));
    let out = head.out.weight.dot(&act) + &head.out.bias;
    (HeadCache { pre, act }, out.to_vec())
}

/// Runs the network on one spectrogram `[input_dim, n_frames]`.
///
/// Dropout is applied only when `train_mode` is set, drawing masks from `rng`;
/// evaluation mode never touches `rng`.
pub fn forward<T: Real>(
    params: &ModelParams<T>,
    input: ArrayView2<T>,
    train_mode: bool,
    rng: &mut dyn RngCore,
) -> Result<(ModelOutput<T>, ActivationCache<T>)> {
    let positions: Vec<usize> = (0..input.ncols()).collect();
    forward_with_positions(params, input, &positions, train_mode, rng)
}

/// Like [`forward`], but frame `i` receives the positional encoding of
/// `positions[i]`.
pub fn forward_with_positions<T: Real>(
    params: &ModelParams<T>,
    input: ArrayView2<T>,
    positions: &[usize],
    train_mode: bool,
    rng: &mut dyn RngCore,
) -> Result<(ModelOutput<T>, ActivationCache<T>)> {
    let cfg = params.config();
    let w = params.weights();
    if input.nrows() != cfg.input_dim {
        return Err(Error::Shape(format!("input has {} mel bins, model expects {}", input.nrows(), cfg.input_dim)));
    }
    if input.ncols() == 0 || positions.len() != input.ncols() {
        return Err(Error::Shape(format!("{} frames with {} positions", input.ncols(), positions.len())));
    }
    let seq = input.ncols();
    let d = cfg.d_model;
    let dh = cfg.head_dim();
    let p = if train_mode { cfg.dropout_p } else { 0.0 };
    let scale = T::lit(1.0 / (dh as f64).sqrt());

    let frames = input.t().to_owned();
    let mut z = affine(&frames.view(), &w.input_proj);
    for (mut row, &pos) in z.rows_mut().into_iter().zip(positions) {
        row += &positional_encoding::<T>(pos, d);
    }

    let mut layers = Vec::with_capacity(w.layers.len());
    for layer in &w.layers {
        let zin = z.view();
        let q = affine(&zin, &layer.query);
        let k = affine(&zin, &layer.key);
        let v = affine(&zin, &layer.value);
        let mut context = Array2::zeros((seq, d));
        let mut probs = Vec::with_capacity(cfg.n_heads);
        for h in 0..cfg.n_heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t());
            scores.mapv_inplace(|x| x * scale);
            for mut row in scores.rows_mut() {
                softmax_in_place(row.as_slice_mut().unwrap());
            }
            context.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            probs.push(scores);
        }
        let mut attn = affine(&context.view(), &layer.output);
        let attn_mask = (p > 0.0).then(|| dropout_mask::<T>((seq, d), p, rng));
        if let Some(m) = &attn_mask {
            attn *= m;
        }
        attn += &zin;
        let (y1, norm1) = layer_norm(&attn, &layer.attn_norm);

        let ff_pre = affine(&y1.view(), &layer.ff_in);
        let ff_act = ff_pre.mapv(|x| x.max(T::zero()));
        let mut ff = affine(&ff_act.view(), &layer.ff_out);
        let ff_mask = (p > 0.0).then(|| dropout_mask::<T>((seq, d), p, rng));
        if let Some(m) = &ff_mask {
            ff *= m;
        }
        ff += &y1;
        let (next, norm2) = layer_norm(&ff, &layer.ff_norm);

        layers.push(LayerCache {
            input: std::mem::replace(&mut z, next),
            q,
            k,
            v,
            probs,
            context,
            attn_mask,
            norm1,
            y1,
            ff_pre,
            ff_act,
            ff_mask,
            norm2,
        });
    }

    let pooled = z.mean_axis(Axis(0)).unwrap();

    let (c_v, o_v) = head_forward(&w.valence, &pooled);
    let (c_a, o_a) = head_forward(&w.arousal, &pooled);
    let (c_e, emotion_logits) = head_forward(&w.emotion, &pooled);
    let (c_s, size_logits) = head_forward(&w.size, &pooled);
    let (c_g, gender_logits) = head_forward(&w.gender, &pooled);
    let probs = |logits: &[T]| {
        let mut v = logits.to_vec();
        softmax_in_place(&mut v);
        v
    };
    let output = ModelOutput {
        valence: o_v[0].tanh(),
        arousal: T::one() / (T::one() + (-o_a[0]).exp()),
        emotion_probs: probs(&emotion_logits),
        size_probs: probs(&size_logits),
        gender_probs: probs(&gender_logits),
        emotion_logits,
        size_logits,
        gender_logits,
    };
    let cache = ActivationCache {
        stamp: params.stamp(),
        input: frames,
        layers,
        pooled,
        heads: [c_v, c_a, c_e, c_s, c_g],
        output: output.clone(),
    };
    Ok((output, cache))
}

/// Evaluation-mode forward pass on a (normalized) spectrogram.
pub fn predict<T: Real>(params: &ModelParams<T>, spec: &MelSpectrogram) -> Result<ModelOutput<T>> {
    let input = spec.values.mapv(|v| T::lit(v as f64));
    let (out, _) = forward(params, input.view(), false, &mut rand::rngs::mock::StepRng::new(0, 0))?;
    Ok(out)
}
