//! Mini-batch Adam training with checkpoint-based early stopping.

use std::io::Write;

use fsmt_core::{Error, Result};
use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{batch_nll, loss_and_grad, Example, Mode};
use crate::optim::{Adam, AdamConfig};
use crate::params::{ModelConfig, Params};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub checkpoint_interval: usize,
    pub patience: usize,
    pub adam: AdamConfig,
    pub max_updates: usize,
    pub beam: usize,
    pub num_replicas: usize,
    /// Average log-probabilities instead of probabilities when ensembling.
    pub ensemble_log_space: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            checkpoint_interval: 200,
            patience: 8,
            adam: AdamConfig::default(),
            max_updates: 5000,
            beam: 5,
            num_replicas: 4,
            ensemble_log_space: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("checkpoint_interval", self.checkpoint_interval),
            ("patience", self.patience),
            ("max_updates", self.max_updates),
            ("beam", self.beam),
            ("num_replicas", self.num_replicas),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Argument(format!("{name} must be at least 1")));
            }
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Argument("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Improved,
    NoImprovement,
    Stop,
}

/// Tracks the best dev score; an improvement must be strict.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    seen: usize,
    best: Option<(usize, f64)>,
    bad: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            seen: 0,
            best: None,
            bad: 0,
        }
    }

    /// Records checkpoint `self.seen + 1` with dev score `v` (lower is better).
    pub fn observe(&mut self, v: f64) -> Decision {
        self.seen += 1;
        if self.best.is_none_or(|(_, b)| v < b) {
            self.best = Some((self.seen, v));
            self.bad = 0;
            return Decision::Improved;
        }
        self.bad += 1;
        if self.bad >= self.patience {
            Decision::Stop
        } else {
            Decision::NoImprovement
        }
    }

    /// 1-based index and score of the best checkpoint.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    pub fn checkpoints(&self) -> usize {
        self.seen
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub update: usize,
    pub train_loss: f64,
    pub dev_ppl: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Patience,
    MaxUpdates,
    /// Loss or parameters went non-finite; the outcome holds the last good checkpoint.
    Diverged,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Params,
    pub best_update: usize,
    pub best_dev_ppl: f64,
    pub log: Vec<LogRecord>,
    pub updates: usize,
    pub stop: StopReason,
}

impl TrainOutcome {
    pub fn write_log<W: Write>(&self, w: W) -> Result<()> {
        write_log(&self.log, w)
    }
}

pub fn write_log<W: Write>(log: &[LogRecord], mut w: W) -> Result<()> {
    for r in log {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        writeln!(w)?;
    }
    Ok(())
}

/// exp of the mean per-token NLL over `dev`, in eval mode.
pub fn perplexity(p: &Params, dev: &[Example]) -> Result<f64> {
    if dev.is_empty() {
        return Err(Error::Argument("empty dev set".into()));
    }
    let (sum, n) = batch_nll(p, dev, Mode::Eval, 0)?;
    Ok((sum / n as f64).exp())
}

/// Trains one model. Batches come from a seeded shuffle each epoch; the
/// same inputs always yield the same log and parameters.
pub fn train(train: &[Example], dev: &[Example], model: ModelConfig, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Argument("empty training set".into()));
    }
    if dev.is_empty() {
        return Err(Error::Argument("empty dev set".into()));
    }
    let mut params = Params::init(model)?;
    let mut adam = Adam::new(config.adam, params.num_params());
    let mut rng = ChaCha8Rng::seed_from_u64(params.config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();

    let mut stopper = EarlyStopper::new(config.patience);
    let mut best = params.clone();
    let mut best_update = 0;
    let mut best_ppl = f64::INFINITY;
    let mut log = Vec::new();
    let mut interval_loss = 0.0;
    let mut interval_n = 0usize;
    let mut stop = StopReason::MaxUpdates;
    let mut batch = Vec::with_capacity(config.batch_size);

    for update in 1..=config.max_updates {
        batch.clear();
        while batch.len() < config.batch_size.min(train.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(train[order[cursor]].clone());
            cursor += 1;
        }
        let (loss, grad) = loss_and_grad(&params, &batch, Mode::Train, update as u64)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            warn!("non-finite loss at update {update}; keeping update {best_update}");
            stop = StopReason::Diverged;
            break;
        }
        adam.step(&mut params.data, &grad);
        if !params.all_finite() {
            warn!("non-finite parameters at update {update}; keeping update {best_update}");
            stop = StopReason::Diverged;
            break;
        }
        interval_loss += loss;
        interval_n += 1;

        let at_checkpoint = update % config.checkpoint_interval == 0 || update == config.max_updates;
        if !at_checkpoint {
            continue;
        }
        let ppl = perplexity(&params, dev)?;
        let decision = stopper.observe(ppl);
        let record = LogRecord {
            update,
            train_loss: interval_loss / interval_n as f64,
            dev_ppl: ppl,
            decision,
        };
        debug!("{record:?}");
        info!(
            "update {update}: train loss {:.4}, dev ppl {ppl:.4} ({decision:?})",
            record.train_loss
        );
        log.push(record);
        interval_loss = 0.0;
        interval_n = 0;
        if decision == Decision::Improved {
            best = params.clone();
            best_update = update;
            best_ppl = ppl;
        }
        if decision == Decision::Stop {
            stop = StopReason::Patience;
            break;
        }
    }
    if best_update == 0 {
        best_ppl = perplexity(&best, dev)?;
    }
    Ok(TrainOutcome {
        updates: log.last().map_or(0, |r| r.update),
        best,
        best_update,
        best_dev_ppl: best_ppl,
        log,
        stop,
    })
}

/// Trains `config.num_replicas` models in parallel, replica `i` seeded with
/// `model.seed + i`.
pub fn train_replicas(
    train_set: &[Example],
    dev: &[Example],
    model: &ModelConfig,
    config: &TrainConfig,
) -> Result<Vec<TrainOutcome>> {
    (0..config.num_replicas as u64)
        .into_par_iter()
        .map(|i| {
            let mc = ModelConfig {
                seed: model.seed.wrapping_add(i),
                ..model.clone()
            };
            train(train_set, dev, mc, config)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stop_stream() {
        let mut s = EarlyStopper::new(8);
        let stream = [5.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0];
        let decisions: Vec<Decision> = stream.iter().map(|&v| s.observe(v)).collect();
        assert_eq!(decisions[0], Decision::Improved);
        assert_eq!(decisions[1], Decision::Improved);
        assert!(decisions[2..9].iter().all(|&d| d == Decision::NoImprovement));
        assert_eq!(decisions[9], Decision::Stop);
        assert_eq!(s.checkpoints(), 10);
        assert_eq!(s.best(), Some((2, 4.0)));
    }

    #[test]
    fn patience_one_stops_at_first_stall() {
        let mut s = EarlyStopper::new(1);
        assert_eq!(s.observe(3.0), Decision::Improved);
        assert_eq!(s.observe(3.0), Decision::Stop);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { patience: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
    }
}
