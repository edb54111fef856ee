/// Early-stopping bookkeeping over a validation metric (lower is better).
///
/// An epoch counts as progress only if it beats the last reference value by
/// more than `min_delta`; after `patience` epochs without progress training
/// stops. The retained best epoch is the plain argmin of the metric
/// (first occurrence).
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    reference: f64,
    wait: usize,
    best_value: f64,
    best_epoch: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    /// This epoch is the new argmin.
    pub new_best: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        assert!(patience >= 1, "patience must be at least 1");
        Self { patience, min_delta, reference: f64::INFINITY, wait: 0, best_value: f64::INFINITY, best_epoch: None }
    }

    pub fn observe(&mut self, epoch: usize, value: f64) -> StopDecision {
        let new_best = value < self.best_value;
        if new_best {
            self.best_value = value;
            self.best_epoch = Some(epoch);
        }
        if value < self.reference - self.min_delta {
            self.reference = value;
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        StopDecision { new_best, stop: self.wait >= self.patience }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best_value(&self) -> f64 {
        self.best_value
    }
}

/// Replays a metric sequence (epochs numbered from 1) and returns
/// `(last epoch run, best epoch)`.
pub fn trace_early_stopping(values: &[f64], patience: usize, min_delta: f64) -> (usize, Option<usize>) {
    let mut es = EarlyStopping::new(patience, min_delta);
    for (i, &v) in values.iter().enumerate() {
        if es.observe(i + 1, v).stop {
            return (i + 1, es.best_epoch());
        }
    }
    (values.len(), es.best_epoch())
}
