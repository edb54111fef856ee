use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::Real;
use crate::error::{Error, Result};

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

/// `y = W x + b` with `W: [out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Linear<T> {
    fn zeros(input: usize, output: usize) -> Self {
        Self { weight: Array2::zeros((output, input)), bias: Array1::zeros(output) }
    }

    fn xavier(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((output, input), || T::from_f64(rng.gen_range(-limit..limit)).unwrap());
        Self { weight, bias: Array1::zeros(output) }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T> {
    pub gain: Array1<T>,
    pub offset: Array1<T>,
}

impl<T: Real> LayerNorm<T> {
    fn identity(dim: usize) -> Self {
        Self { gain: Array1::ones(dim), offset: Array1::zeros(dim) }
    }

    fn zeros(dim: usize) -> Self {
        Self { gain: Array1::zeros(dim), offset: Array1::zeros(dim) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<T> {
    pub query: Linear<T>,
    pub key: Linear<T>,
    pub value: Linear<T>,
    pub output: Linear<T>,
    pub attn_norm: LayerNorm<T>,
    pub ff_in: Linear<T>,
    pub ff_out: Linear<T>,
    pub ff_norm: LayerNorm<T>,
}

/// Two-layer MLP head: `W2 relu(W1 h + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Head<T> {
    pub hidden: Linear<T>,
    pub out: Linear<T>,
}

/// Every learnable tensor of the network, in a fixed traversal order.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T> {
    pub input_proj: Linear<T>,
    pub layers: Vec<EncoderLayer<T>>,
    pub valence: Head<T>,
    pub arousal: Head<T>,
    pub emotion: Head<T>,
    pub size: Head<T>,
    pub gender: Head<T>,
}

/// Shape, name and contents of one tensor.
#[derive(Debug)]
pub struct TensorRef<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [T],
}

#[derive(Debug)]
pub struct TensorMut<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [T],
}

impl<T: Real> Weights<T> {
    fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        let h = &cfg.head_hidden;
        let head = |hidden: usize, out: usize| Head { hidden: Linear::zeros(d, hidden), out: Linear::zeros(hidden, out) };
        Self {
            input_proj: Linear::zeros(cfg.input_dim, d),
            layers: (0..cfg.n_layers)
                .map(|_| EncoderLayer {
                    query: Linear::zeros(d, d),
                    key: Linear::zeros(d, d),
                    value: Linear::zeros(d, d),
                    output: Linear::zeros(d, d),
                    attn_norm: LayerNorm::zeros(d),
                    ff_in: Linear::zeros(d, cfg.d_ff),
                    ff_out: Linear::zeros(cfg.d_ff, d),
                    ff_norm: LayerNorm::zeros(d),
                })
                .collect(),
            valence: head(h.valence, 1),
            arousal: head(h.arousal, 1),
            emotion: head(h.emotion, cfg.n_emotions),
            size: head(h.size, cfg.n_sizes),
            gender: head(h.gender, cfg.n_genders),
        }
    }

    fn xavier(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = cfg.d_model;
        let h = &cfg.head_hidden;
        let input_proj = Linear::xavier(cfg.input_dim, d, rng);
        let layers = (0..cfg.n_layers)
            .map(|_| EncoderLayer {
                query: Linear::xavier(d, d, rng),
                key: Linear::xavier(d, d, rng),
                value: Linear::xavier(d, d, rng),
                output: Linear::xavier(d, d, rng),
                attn_norm: LayerNorm::identity(d),
                ff_in: Linear::xavier(d, cfg.d_ff, rng),
                ff_out: Linear::xavier(cfg.d_ff, d, rng),
                ff_norm: LayerNorm::identity(d),
            })
            .collect();
        let mut head = |hidden: usize, out: usize| Head {
            hidden: Linear::xavier(d, hidden, rng),
            out: Linear::xavier(hidden, out, rng),
        };
        let valence = head(h.valence, 1);
        let arousal = head(h.arousal, 1);
        let emotion = head(h.emotion, cfg.n_emotions);
        let size = head(h.size, cfg.n_sizes);
        let gender = head(h.gender, cfg.n_genders);
        Self { input_proj, layers, valence, arousal, emotion, size, gender }
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_, T>> {
        fn lin<'a, T: Real>(out: &mut Vec<TensorRef<'a, T>>, name: String, l: &'a Linear<T>) {
            out.push(tref(format!("{name}.weight"), l.weight.shape(), l.weight.as_slice().unwrap()));
            out.push(tref(format!("{name}.bias"), l.bias.shape(), l.bias.as_slice().unwrap()));
        }
        fn norm<'a, T: Real>(out: &mut Vec<TensorRef<'a, T>>, name: String, n: &'a LayerNorm<T>) {
            out.push(tref(format!("{name}.gain"), n.gain.shape(), n.gain.as_slice().unwrap()));
            out.push(tref(format!("{name}.offset"), n.offset.shape(), n.offset.as_slice().unwrap()));
        }
        fn tref<'a, T>(name: String, shape: &[usize], data: &'a [T]) -> TensorRef<'a, T> {
            TensorRef { name, shape: shape.to_vec(), data }
        }
        let mut out = Vec::new();
        lin(&mut out, "input_proj".into(), &self.input_proj);
        for (i, layer) in self.layers.iter().enumerate() {
            let p = format!("layers.{i}");
            lin(&mut out, format!("{p}.attn.query"), &layer.query);
            lin(&mut out, format!("{p}.attn.key"), &layer.key);
            lin(&mut out, format!("{p}.attn.value"), &layer.value);
            lin(&mut out, format!("{p}.attn.output"), &layer.output);
            norm(&mut out, format!("{p}.attn_norm"), &layer.attn_norm);
            lin(&mut out, format!("{p}.ff.in"), &layer.ff_in);
            lin(&mut out, format!("{p}.ff.out"), &layer.ff_out);
            norm(&mut out, format!("{p}.ff_norm"), &layer.ff_norm);
        }
        for (name, head) in self.heads() {
            lin(&mut out, format!("heads.{name}.hidden"), &head.hidden);
            lin(&mut out, format!("heads.{name}.out"), &head.out);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_, T>> {
        fn lin<'a, T: Real>(out: &mut Vec<TensorMut<'a, T>>, name: String, l: &'a mut Linear<T>) {
            let shape = l.weight.shape().to_vec();
            out.push(TensorMut { name: format!("{name}.weight"), shape, data: l.weight.as_slice_mut().unwrap() });
            let shape = l.bias.shape().to_vec();
            out.push(TensorMut { name: format!("{name}.bias"), shape, data: l.bias.as_slice_mut().unwrap() });
        }
        fn norm<'a, T: Real>(out: &mut Vec<TensorMut<'a, T>>, name: String, n: &'a mut LayerNorm<T>) {
            let shape = n.gain.shape().to_vec();
            out.push(TensorMut { name: format!("{name}.gain"), shape: shape.clone(), data: n.gain.as_slice_mut().unwrap() });
            out.push(TensorMut { name: format!("{name}.offset"), shape, data: n.offset.as_slice_mut().unwrap() });
        }
        let mut out = Vec::new();
        lin(&mut out, "input_proj".into(), &mut self.input_proj);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let p = format!("layers.{i}");
            lin(&mut out, format!("{p}.attn.query"), &mut layer.query);
            lin(&mut out, format!("{p}.attn.key"), &mut layer.key);
            lin(&mut out, format!("{p}.attn.value"), &mut layer.value);
            lin(&mut out, format!("{p}.attn.output"), &mut layer.output);
            norm(&mut out, format!("{p}.attn_norm"), &mut layer.attn_norm);
            lin(&mut out, format!("{p}.ff.in"), &mut layer.ff_in);
            lin(&mut out, format!("{p}.ff.out"), &mut layer.ff_out);
            norm(&mut out, format!("{p}.ff_norm"), &mut layer.ff_norm);
        }
        for (name, head) in [
            ("valence", &mut self.valence),
            ("arousal", &mut self.arousal),
            ("emotion", &mut self.emotion),
            ("size", &mut self.size),
            ("gender", &mut self.gender),
        ] {
            lin(&mut out, format!("heads.{name}.hidden"), &mut head.hidden);
            lin(&mut out, format!("heads.{name}.out"), &mut head.out);
        }
        out
    }

    pub fn heads(&self) -> [(&'static str, &Head<T>); 5] {
        [
            ("valence", &self.valence),
            ("arousal", &self.arousal),
            ("emotion", &self.emotion),
            ("size", &self.size),
            ("gender", &self.gender),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Weights<T>) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, &s) in dst.data.iter_mut().zip(src.data) {
                *d += s;
            }
        }
    }

    pub fn scale(&mut self, k: T) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn cast<U: Real>(&self, cfg: &ModelConfig) -> Weights<U> {
        let mut out = Weights::<U>::zeros(cfg);
        for (dst, src) in out.tensors_mut().into_iter().zip(self.tensors()) {
            for (d, &s) in dst.data.iter_mut().zip(src.data) {
                *d = U::from_f64(s.to_f64().unwrap()).unwrap();
            }
        }
        out
    }
}

/// Learnable parameters plus the configuration that shapes them.
///
/// Each instance carries a stamp that changes whenever the tensors may have
/// been mutated, so activation caches from an older forward pass are rejected.
#[derive(Debug, Clone)]
pub struct ModelParams<T> {
    config: ModelConfig,
    weights: Weights<T>,
    stamp: u64,
}

impl<T: Real> PartialEq for ModelParams<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.weights == other.weights
    }
}

impl<T: Real> ModelParams<T> {
    /// Xavier-uniform affine weights, zero biases, identity layer norms.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self { config: config.clone(), weights: Weights::xavier(config, &mut rng), stamp: fresh_stamp() })
    }

    /// All-zero tensors laid out for `config`.
    pub fn init_zeroed(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config: config.clone(), weights: Weights::zeros(config), stamp: fresh_stamp() })
    }

    pub fn from_weights(config: ModelConfig, weights: Weights<T>) -> Result<Self> {
        config.validate()?;
        let expected = Weights::<T>::zeros(&config);
        for (a, b) in expected.tensors().iter().zip(weights.tensors()) {
            if a.shape != b.shape || a.name != b.name {
                return Err(Error::Shape(format!("tensor {} has shape {:?}, expected {:?}", b.name, b.shape, a.shape)));
            }
        }
        if expected.tensors().len() != weights.tensors().len() {
            return Err(Error::Shape("tensor count does not match configuration".into()));
        }
        Ok(Self { config, weights, stamp: fresh_stamp() })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &Weights<T> {
        &self.weights
    }

    /// Mutable access; invalidates outstanding activation caches.
    pub fn weights_mut(&mut self) -> &mut Weights<T> {
        self.stamp = fresh_stamp();
        &mut self.weights
    }

    pub fn stamp(&self) -> u64 {
        self.stamp
    }

    pub fn zero_grads(&self) -> ParamGrads<T> {
        ParamGrads { weights: Weights::zeros(&self.config) }
    }

    pub fn param_count(&self) -> usize {
        self.weights.param_count()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams { config: self.config.clone(), weights: self.weights.cast(&self.config), stamp: fresh_stamp() }
    }
}

/// Gradient of a scalar loss with respect to every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<T> {
    pub weights: Weights<T>,
}

impl<T: Real> ParamGrads<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        Self { weights: Weights::zeros(config) }
    }

    pub fn accumulate(&mut self, other: &ParamGrads<T>) {
        self.weights.add_assign(&other.weights);
    }

    pub fn scale(&mut self, k: T) {
        self.weights.scale(k);
    }

    pub fn is_zero(&self) -> bool {
        self.weights.tensors().iter().all(|t| t.data.iter().all(|v| *v == T::zero()))
    }

    pub fn is_finite(&self) -> bool {
        self.weights.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}
