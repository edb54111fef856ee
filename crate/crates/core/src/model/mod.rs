//! Multi-task audio transformer: per-frame input projection, sinusoidal
//! positions, post-norm encoder layers, mean pooling over time, and five
//! prediction heads (valence, arousal, emotion, size, gender).
//!
//! Forward and backward passes are written out by hand and are generic over
//! the float type so gradients can be checked in 64-bit precision.

mod backward;
pub mod checkpoint;
mod config;
mod forward;
mod params;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub use backward::{backward, backward_into, OutputGrads};
pub use config::{HeadDims, ModelConfig, ParamCounts};
pub use forward::{forward, forward_with_positions, positional_encoding, predict, ActivationCache, ModelOutput};
pub use params::{EncoderLayer, Head, LayerNorm, Linear, ModelParams, ParamGrads, TensorMut, TensorRef, Weights};

/// Floating-point element type the network can run in.
pub trait Real:
    Float + NumAssign + LinalgScalar + ScalarOperand + FromPrimitive + ToPrimitive + Sum + Send + Sync + Debug + Display + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).unwrap()
    }
}

impl Real for f32 {}
impl Real for f64 {}
