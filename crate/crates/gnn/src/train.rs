//! Supervised training against exact-solver witnesses.

use std::sync::Arc;

use maxsat_core::graph::{batch_graphs, FactorGraph};
use maxsat_core::rng::{derive_seed, Rng};
use rayon::prelude::*;
use thiserror::Error;

use crate::checkpoint::Checkpoint;
use crate::data::LabeledInstance;
use crate::metrics::{evaluate, pack_batches, EvalMetrics};
use crate::model::{forward, InitEmbeddings, ModelConfig, ModelError, ModelKind};
use crate::optim::{AdamConfig, ParamStore};
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("loss diverged to {loss} at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize, loss: f32 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub lr: f32,
    pub weight_decay: f32,
    pub epochs: usize,
    /// Upper bound on graph nodes per batch.
    pub node_cap: usize,
    /// Drives batch shuffling and training-time initial embeddings.
    pub seed: u64,
    /// Drives validation/test initial embeddings.
    pub eval_seed: u64,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        TrainConfig {
            model,
            lr: 2e-5,
            weight_decay: 1e-10,
            epochs: 150,
            node_cap: 4000,
            seed: 0,
            eval_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.model.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::InvalidConfig(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(TrainError::InvalidConfig("weight decay must be non-negative".into()));
        }
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.node_cap == 0 {
            return Err(TrainError::InvalidConfig("node cap must be at least 1".into()));
        }
        Ok(())
    }

    /// Preset for a model kind at desk-scale defaults (`d = 64`, `T = 10`).
    pub fn desk(kind: ModelKind) -> Self {
        Self::new(ModelConfig {
            kind,
            dim: 64,
            layers: 10,
            init_seed: 0,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_gap: f64,
    pub val_ratio: f64,
    pub val_accuracy: f64,
}

pub const LOG_HEADER: &str = "# epoch\ttrain_loss\tval_gap\tval_ratio\tval_accuracy";

impl EpochRecord {
    pub fn render(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.4}\t{:.6}\t{:.6}",
            self.epoch, self.train_loss, self.val_gap, self.val_ratio, self.val_accuracy
        )
    }
}

pub fn render_log(log: &[EpochRecord]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in log {
        out.push_str(&r.render());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the highest validation ratio (earliest on ties).
    pub best: Checkpoint,
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
}

/// Seed of an instance's initial embeddings during a training epoch.
pub fn train_init_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    derive_seed(derive_seed(seed, epoch as u64), index as u64)
}

/// Train on `train`, selecting by mean ratio on `val` (or on `train` when `val` is empty).
/// `on_epoch` sees each log record as soon as it is produced.
pub fn train(
    config: &TrainConfig,
    train_set: &[LabeledInstance],
    val_set: &[LabeledInstance],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    let val_set = if val_set.is_empty() { train_set } else { val_set };
    let model = config.model;
    let kind = model.kind.graph_kind();
    let graphs: Vec<FactorGraph> = train_set
        .par_iter()
        .map(|i| FactorGraph::build(kind, &i.formula))
        .collect();
    let sizes: Vec<usize> = graphs.iter().map(FactorGraph::num_nodes).collect();
    let labels: Vec<Vec<f32>> = train_set
        .iter()
        .map(|i| i.witness.values().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut store = ParamStore::new(model.init_params());
    let adam = AdamConfig::new(config.lr, config.weight_decay);
    let mut shuffler = Rng::new(config.seed);
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Checkpoint)> = None;

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        shuffler.shuffle(&mut order);
        let batches = pack_batches(&sizes, &order, config.node_cap);
        let mut loss_sum = 0.0f64;
        for (b, batch) in batches.iter().enumerate() {
            let members: Vec<FactorGraph> = batch.iter().map(|&i| graphs[i].clone()).collect();
            let graph = batch_graphs(&members).expect("non-empty batch of one kind");
            let seeds: Vec<u64> = batch
                .iter()
                .map(|&i| train_init_seed(config.seed, epoch, train_set[i].index))
                .collect();
            let init = InitEmbeddings::sample(&graph, model.dim, &seeds)?;

            // Mean over variables within an instance, then over instances.
            let mut targets = Vec::new();
            let mut weights = Vec::new();
            for &i in batch {
                let n = labels[i].len();
                targets.extend_from_slice(&labels[i]);
                weights.extend(std::iter::repeat_n(1.0 / (n * batch.len()) as f32, n));
            }

            let mut tape = Tape::new();
            let z = forward(&mut tape, store.params(), &model, &graph, &init)?;
            let loss = tape.bce_with_logits(z, Arc::new(targets), Arc::new(weights))?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(TrainError::Divergence {
                    epoch,
                    batch: b,
                    loss: value,
                });
            }
            loss_sum += f64::from(value);
            let mut grads = tape.backward(loss)?;
            // Parameters that never reach the logits (the clause path when T = 1) have zero gradient.
            for (name, p) in store.params() {
                grads
                    .entry(name.clone())
                    .or_insert_with(|| Tensor::zeros(p.rows(), p.cols()));
            }
            store.adam_step(&grads, &adam)?;
        }

        let val: EvalMetrics = evaluate(store.params(), &model, val_set, config.eval_seed, config.node_cap)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches.len() as f64,
            val_gap: val.mean_gap,
            val_ratio: val.mean_ratio,
            val_accuracy: val.accuracy,
        };
        on_epoch(&record);
        if best.as_ref().is_none_or(|(r, _, _)| val.mean_ratio > *r) {
            let ckpt = Checkpoint::new(model, store.params().clone()).expect("params match config");
            best = Some((val.mean_ratio, epoch, ckpt));
        }
        log.push(record);
    }

    let (_, best_epoch, best) = best.expect("at least one epoch");
    Ok(TrainOutcome { best, best_epoch, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use maxsat_core::generator::{generate_instance, GenSpec, Split};

    fn toy(count: usize, k: usize, n: usize, m: usize, seed: u64) -> Vec<LabeledInstance> {
        (0..count)
            .map(|i| {
                let f = generate_instance(&GenSpec::new(k, n, m, derive_seed(seed, i as u64)).unwrap()).unwrap();
                LabeledInstance::solve(i, Split::Train, format!("t{i}"), f)
            })
            .collect()
    }

    fn cfg(kind: ModelKind, dim: usize, layers: usize, epochs: usize) -> TrainConfig {
        TrainConfig {
            lr: 1e-3,
            epochs,
            ..TrainConfig::new(ModelConfig::new(kind, dim, layers, 1).unwrap())
        }
    }

    #[test]
    fn zero_epochs_rejected() {
        let c = cfg(ModelKind::Nsfg, 4, 1, 0);
        assert!(matches!(
            train(&c, &toy(1, 2, 4, 6, 0), &[], |_| {}),
            Err(TrainError::InvalidConfig(_))
        ));
        let c = TrainConfig {
            lr: 0.0,
            ..cfg(ModelKind::Nsfg, 4, 1, 1)
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_layer_trains_without_clause_gradients() {
        let data = toy(3, 2, 5, 10, 1);
        for kind in [ModelKind::Nsfg, ModelKind::Esfg] {
            let out = train(&cfg(kind, 4, 1, 2), &data, &[], |_| {}).unwrap();
            assert_eq!(out.log.len(), 2);
        }
    }

    #[test]
    fn training_is_deterministic_and_logs_every_epoch() {
        let data = toy(6, 2, 6, 12, 5);
        let c = TrainConfig {
            node_cap: 40,
            ..cfg(ModelKind::Esfg, 6, 2, 3)
        };
        let a = train(&c, &data, &data[..2], |_| {}).unwrap();
        let b = train(&c, &data, &data[..2], |_| {}).unwrap();
        assert_eq!(a.log.len(), 3);
        assert_eq!(render_log(&a.log), render_log(&b.log));
        assert_eq!(a.best.to_bytes(), b.best.to_bytes());
        let best = a.log.iter().map(|r| r.val_ratio).fold(f64::MIN, f64::max);
        assert_eq!(a.log[a.best_epoch - 1].val_ratio, best);
    }
}
