use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden width of the first affine map in each prediction head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadDims {
    pub valence: usize,
    pub arousal: usize,
    pub emotion: usize,
    pub size: usize,
    pub gender: usize,
}

impl Default for HeadDims {
    fn default() -> Self {
        Self { valence: 256, arousal: 256, emotion: 256, size: 128, gender: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub dropout_p: f64,
    /// Mel bins per input frame.
    pub input_dim: usize,
    pub head_hidden: HeadDims,
    pub n_emotions: usize,
    pub n_sizes: usize,
    pub n_genders: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_layers: 6,
            d_model: 512,
            n_heads: 8,
            d_ff: 2048,
            dropout_p: 0.1,
            input_dim: 128,
            head_hidden: HeadDims::default(),
            n_emotions: 8,
            n_sizes: 3,
            n_genders: 2,
        }
    }
}

/// Parameter counts broken down by component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamCounts {
    pub input_projection: usize,
    /// Encoder layers including their layer norms, excluding the input projection.
    pub encoder: usize,
    pub valence_head: usize,
    pub arousal_head: usize,
    pub emotion_head: usize,
    pub size_head: usize,
    pub gender_head: usize,
}

impl ParamCounts {
    pub fn heads(&self) -> usize {
        self.valence_head + self.arousal_head + self.emotion_head + self.size_head + self.gender_head
    }

    pub fn total(&self) -> usize {
        self.input_projection + self.encoder + self.heads()
    }
}

impl ModelConfig {
    /// The downsized architecture used for desk-scale training runs.
    pub fn tiny() -> Self {
        Self {
            n_layers: 2,
            d_model: 64,
            n_heads: 4,
            d_ff: 256,
            head_hidden: HeadDims { valence: 64, arousal: 64, emotion: 64, size: 32, gender: 32 },
            ..Self::default()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_layers", self.n_layers),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("input_dim", self.input_dim),
            ("head_hidden.valence", self.head_hidden.valence),
            ("head_hidden.arousal", self.head_hidden.arousal),
            ("head_hidden.emotion", self.head_hidden.emotion),
            ("head_hidden.size", self.head_hidden.size),
            ("head_hidden.gender", self.head_hidden.gender),
            ("n_emotions", self.n_emotions),
            ("n_sizes", self.n_sizes),
            ("n_genders", self.n_genders),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model `{name}` must be positive")));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p {} outside [0, 1)", self.dropout_p)));
        }
        Ok(())
    }

    /// Closed-form parameter arithmetic from the layer shapes.
    pub fn param_counts(&self) -> ParamCounts {
        let affine = |i: usize, o: usize| i * o + o;
        let d = self.d_model;
        let per_layer = 4 * affine(d, d) + affine(d, self.d_ff) + affine(self.d_ff, d) + 2 * 2 * d;
        let head = |hidden: usize, out: usize| affine(d, hidden) + affine(hidden, out);
        ParamCounts {
            input_projection: affine(self.input_dim, d),
            encoder: self.n_layers * per_layer,
            valence_head: head(self.head_hidden.valence, 1),
            arousal_head: head(self.head_hidden.arousal, 1),
            emotion_head: head(self.head_hidden.emotion, self.n_emotions),
            size_head: head(self.head_hidden.size, self.n_sizes),
            gender_head: head(self.head_hidden.gender, self.n_genders),
        }
    }
}
