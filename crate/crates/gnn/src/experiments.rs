//! Layer-count sweeps and train-set × test-set generalization grids.

use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::data::LabeledInstance;
use crate::metrics::{evaluate, EvalMetrics};
use crate::model::{ModelConfig, ModelError};
use crate::train::{train, EpochRecord, TrainConfig, TrainError};

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub layers: usize,
    pub best_epoch: usize,
    pub metrics: EvalMetrics,
    pub checkpoint: Checkpoint,
}

/// Train one model per layer count with otherwise identical settings and
/// evaluate each best-validation checkpoint on `test`.
pub fn layer_sweep(
    base: &TrainConfig,
    train_set: &[LabeledInstance],
    val_set: &[LabeledInstance],
    test_set: &[LabeledInstance],
    layer_counts: &[usize],
    mut on_epoch: impl FnMut(usize, &EpochRecord),
) -> Result<Vec<SweepRow>, TrainError> {
    let mut rows = Vec::with_capacity(layer_counts.len());
    for &layers in layer_counts {
        let config = TrainConfig {
            model: ModelConfig { layers, ..base.model },
            ..*base
        };
        let outcome = train(&config, train_set, val_set, |r| on_epoch(layers, r))?;
        let metrics = evaluate(
            &outcome.best.params,
            &outcome.best.config,
            test_set,
            config.eval_seed,
            config.node_cap,
        )?;
        rows.push(SweepRow {
            layers,
            best_epoch: outcome.best_epoch,
            metrics,
            checkpoint: outcome.best,
        });
    }
    Ok(rows)
}

pub fn render_sweep(rows: &[SweepRow]) -> String {
    let mut out = format!(
        "{:>4}  {:>10}  {:>8}  {:>9}  {:>10}\n",
        "T", "best_epoch", "gap", "ratio", "accuracy"
    );
    for r in rows {
        out.push_str(&format!(
            "{:>4}  {:>10}  {:>8.3}  {:>8.2}%  {:>9.2}%\n",
            r.layers,
            r.best_epoch,
            r.metrics.mean_gap,
            100.0 * r.metrics.mean_ratio,
            100.0 * r.metrics.accuracy
        ));
    }
    out
}

pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from("layers\tbest_epoch\tgap\tratio\taccuracy\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\n",
            r.layers, r.best_epoch, r.metrics.mean_gap, r.metrics.mean_ratio, r.metrics.accuracy
        ));
    }
    out
}

/// Metrics for every (model, dataset) pair; rows follow `models`, columns `datasets`.
#[derive(Clone, Debug)]
pub struct CrossTable {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    pub cells: Vec<Vec<EvalMetrics>>,
}

pub fn cross_eval(
    models: &[(String, Checkpoint)],
    datasets: &[(String, Vec<LabeledInstance>)],
    eval_seed: u64,
    node_cap: usize,
) -> Result<CrossTable, ModelError> {
    let cells = models
        .iter()
        .map(|(_, ck)| {
            datasets
                .par_iter()
                .map(|(_, insts)| evaluate(&ck.params, &ck.config, insts, eval_seed, node_cap))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CrossTable {
        models: models.iter().map(|(n, _)| n.clone()).collect(),
        datasets: datasets.iter().map(|(n, _)| n.clone()).collect(),
        cells,
    })
}

impl CrossTable {
    pub fn cell(&self, model: usize, dataset: usize) -> &EvalMetrics {
        &self.cells[model][dataset]
    }

    /// Two text lines per model: `gap (ratio%)` above `accuracy%`.
    pub fn render(&self) -> String {
        let first = self
            .models
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max("train \\ test".len());
        let width = self
            .datasets
            .iter()
            .map(String::len)
            .chain(self.cells.iter().flatten().map(|m| gap_ratio(m).len()))
            .max()
            .unwrap_or(0);
        let mut out = format!("{:<first$}", "train \\ test");
        for d in &self.datasets {
            out.push_str(&format!("  {d:>width$}"));
        }
        out.push('\n');
        for (name, row) in self.models.iter().zip(&self.cells) {
            out.push_str(&format!("{name:<first$}"));
            for m in row {
                out.push_str(&format!("  {:>width$}", gap_ratio(m)));
            }
            out.push('\n');
            out.push_str(&format!("{:<first$}", ""));
            for m in row {
                out.push_str(&format!("  {:>width$}", format!("{:.1}%", 100.0 * m.accuracy)));
            }
            out.push('\n');
        }
        out
    }

    pub fn tsv(&self) -> String {
        let mut out = String::from("train\ttest\tgap\tratio\taccuracy\n");
        for (name, row) in self.models.iter().zip(&self.cells) {
            for (d, m) in self.datasets.iter().zip(row) {
                out.push_str(&format!(
                    "{name}\t{d}\t{:.6}\t{:.6}\t{:.6}\n",
                    m.mean_gap, m.mean_ratio, m.accuracy
                ));
            }
        }
        out
    }
}

fn gap_ratio(m: &EvalMetrics) -> String {
    format!("{:.2} ({:.1}%)", m.mean_gap, 100.0 * m.mean_ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;
    use maxsat_core::generator::{generate_instance, GenSpec, Split};

    fn set(k: usize, n: usize, m: usize, count: usize) -> Vec<LabeledInstance> {
        (0..count)
            .map(|i| {
                let f = generate_instance(&GenSpec::new(k, n, m, i as u64).unwrap()).unwrap();
                LabeledInstance::solve(i, Split::Test, format!("i{i}"), f)
            })
            .collect()
    }

    #[test]
    fn cross_grid_has_every_cell() {
        let models: Vec<(String, Checkpoint)> = [ModelKind::Nsfg, ModelKind::Esfg]
            .into_iter()
            .map(|k| {
                let cfg = ModelConfig::new(k, 4, 2, 0).unwrap();
                (k.to_string(), Checkpoint::new(cfg, cfg.init_params()).unwrap())
            })
            .collect();
        let datasets = vec![
            ("R2(6,12)".to_string(), set(2, 6, 12, 3)),
            ("R2(8,16)".to_string(), set(2, 8, 16, 3)),
            ("R3(5,20)".to_string(), set(3, 5, 20, 3)),
        ];
        let table = cross_eval(&models, &datasets, 0, 100).unwrap();
        assert_eq!(table.cells.iter().map(Vec::len).sum::<usize>(), 6);
        assert_eq!(table.tsv().lines().count(), 7);
        let text = table.render();
        assert_eq!(text.lines().count(), 5);
        assert!(text.contains("R3(5,20)") && text.contains('%'));
    }

    #[test]
    fn sweep_has_one_row_per_layer_count() {
        let data = set(2, 5, 10, 4);
        let base = TrainConfig {
            lr: 1e-3,
            epochs: 1,
            ..TrainConfig::new(ModelConfig::new(ModelKind::Nsfg, 4, 1, 0).unwrap())
        };
        let rows = layer_sweep(&base, &data, &[], &data, &[1, 2, 3], |_, _| {}).unwrap();
        assert_eq!(rows.iter().map(|r| r.layers).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(render_sweep(&rows).lines().count(), 4);
        assert_eq!(sweep_tsv(&rows).lines().count(), 4);
    }
}
