use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use vabark::audio::SpectrogramConfig;
use vabark::model::ModelConfig;
use vabark::training::{LossWeights, TrainConfig};
use vabark::{Error, Result};

/// Everything a training run depends on, except the worker count.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub spectrogram: SpectrogramConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub loss: LossWeights,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.spectrogram.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.loss.validate()?;
        if self.model.input_dim != self.spectrogram.n_mels {
            return Err(Error::Config(format!(
                "model.input_dim {} must equal spectrogram.n_mels {}",
                self.model.input_dim, self.spectrogram.n_mels
            )));
        }
        Ok(())
    }
}

/// Command-line overrides, applied last.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Recursively overlays `top` onto `base`. Objects merge key by key; any
/// other value replaces what was there.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Defaults, then `config`, then the per-section files, then flags.
pub fn resolve(
    base: RunConfig,
    config: Option<&Path>,
    model_config: Option<&Path>,
    train_config: Option<&Path>,
    flags: &Overrides,
) -> Result<RunConfig> {
    let mut v = serde_json::to_value(&base)?;
    if let Some(p) = config {
        merge(&mut v, read_json(p)?);
    }
    if let Some(p) = model_config {
        merge(&mut v, serde_json::json!({ "model": read_json(p)? }));
    }
    if let Some(p) = train_config {
        merge(&mut v, serde_json::json!({ "train": read_json(p)? }));
    }
    let mut cfg: RunConfig = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(s) = flags.seed {
        cfg.train.seed = s;
    }
    if let Some(e) = flags.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = flags.lr {
        cfg.train.lr = lr;
    }
    if let Some(b) = flags.batch_size {
        cfg.train.batch_size = b;
    }
    cfg.validate()?;
    Ok(cfg)
}
