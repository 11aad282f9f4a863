//! Solution-quality metrics for learned models and fixed baselines.

use std::fmt;

use maxsat_core::dla::{run_dla, PickPolicy};
use maxsat_core::graph::{batch_graphs, FactorGraph};
use maxsat_core::rng::{derive_seed, Rng};
use maxsat_core::Assignment;
use rayon::prelude::*;

use crate::data::LabeledInstance;
use crate::model::{logits, predict_assignment, InitEmbeddings, ModelConfig, ModelError};
use crate::optim::Params;

/// Outcome on a single instance.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceRecord {
    pub index: usize,
    pub optimum: usize,
    pub satisfied: usize,
    /// Variables agreeing with the label witness.
    pub matching: usize,
    pub num_vars: usize,
}

impl InstanceRecord {
    pub fn new(inst: &LabeledInstance, predicted: &Assignment) -> Self {
        let satisfied = inst
            .formula
            .eval(predicted)
            .expect("prediction covers every variable")
            .satisfied;
        let matching = predicted
            .values()
            .iter()
            .zip(inst.witness.values())
            .filter(|(a, b)| a == b)
            .count();
        InstanceRecord {
            index: inst.index,
            optimum: inst.optimum,
            satisfied,
            matching,
            num_vars: inst.formula.num_vars(),
        }
    }

    pub fn gap(&self) -> usize {
        self.optimum - self.satisfied
    }

    pub fn ratio(&self) -> f64 {
        if self.optimum == 0 {
            1.0
        } else {
            self.satisfied as f64 / self.optimum as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        if self.num_vars == 0 {
            1.0
        } else {
            self.matching as f64 / self.num_vars as f64
        }
    }
}

/// Unweighted means over instances.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalMetrics {
    pub mean_gap: f64,
    pub mean_ratio: f64,
    pub accuracy: f64,
    pub records: Vec<InstanceRecord>,
}

impl EvalMetrics {
    pub fn from_records(records: Vec<InstanceRecord>) -> Self {
        let n = records.len().max(1) as f64;
        EvalMetrics {
            mean_gap: records.iter().map(|r| r.gap() as f64).sum::<f64>() / n,
            mean_ratio: records.iter().map(InstanceRecord::ratio).sum::<f64>() / n,
            accuracy: records.iter().map(InstanceRecord::accuracy).sum::<f64>() / n,
            records,
        }
    }

    /// `gap (ratio%) / accuracy%`, e.g. `0.86 (99.8%) / 91.9%`.
    pub fn cell(&self) -> String {
        format!(
            "{:.2} ({:.1}%) / {:.1}%",
            self.mean_gap,
            100.0 * self.mean_ratio,
            100.0 * self.accuracy
        )
    }

    pub fn min_ratio(&self) -> f64 {
        self.records.iter().map(InstanceRecord::ratio).fold(1.0, f64::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    /// The one-round distributed local algorithm, first-literal picks.
    Dla,
    AllTrue,
    /// Independent fair coins per variable, seeded per instance.
    Random(u64),
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Baseline::Dla => f.write_str("dla"),
            Baseline::AllTrue => f.write_str("all-true"),
            Baseline::Random(seed) => write!(f, "random({seed})"),
        }
    }
}

impl Baseline {
    pub fn assign(&self, inst: &LabeledInstance) -> Assignment {
        let n = inst.formula.num_vars();
        match *self {
            Baseline::Dla => run_dla(&inst.formula, PickPolicy::FirstLiteral).assignment,
            Baseline::AllTrue => Assignment::all(n, true),
            Baseline::Random(seed) => {
                let mut rng = Rng::new(derive_seed(seed, inst.index as u64));
                Assignment::new((0..n).map(|_| rng.coin()).collect())
            }
        }
    }
}

pub fn evaluate_baseline(instances: &[LabeledInstance], baseline: Baseline) -> EvalMetrics {
    let records = instances
        .par_iter()
        .map(|inst| InstanceRecord::new(inst, &baseline.assign(inst)))
        .collect();
    EvalMetrics::from_records(records)
}

/// Consecutive runs of instances whose graphs fit under `node_cap` nodes
/// (a single oversized instance forms its own batch).
pub fn pack_batches(node_counts: &[usize], order: &[usize], node_cap: usize) -> Vec<Vec<usize>> {
    let mut batches = Vec::new();
    let mut current = Vec::new();
    let mut nodes = 0;
    for &i in order {
        let size = node_counts[i];
        if !current.is_empty() && nodes + size > node_cap {
            batches.push(std::mem::take(&mut current));
            nodes = 0;
        }
        current.push(i);
        nodes += size;
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches
}

/// Per-instance seed of the evaluation initial embeddings.
pub fn eval_init_seed(eval_seed: u64, inst: &LabeledInstance) -> u64 {
    derive_seed(eval_seed, inst.index as u64)
}

/// Predicted assignments for `instances`, in order.
pub fn predict(
    params: &Params,
    config: &ModelConfig,
    instances: &[LabeledInstance],
    eval_seed: u64,
    node_cap: usize,
) -> Result<Vec<Assignment>, ModelError> {
    let kind = config.kind.graph_kind();
    let graphs: Vec<FactorGraph> = instances
        .par_iter()
        .map(|i| FactorGraph::build(kind, &i.formula))
        .collect();
    let sizes: Vec<usize> = graphs.iter().map(FactorGraph::num_nodes).collect();
    let order: Vec<usize> = (0..instances.len()).collect();
    let batches = pack_batches(&sizes, &order, node_cap);
    let per_batch = batches
        .par_iter()
        .map(|batch| {
            let members: Vec<FactorGraph> = batch.iter().map(|&i| graphs[i].clone()).collect();
            let graph = batch_graphs(&members).expect("non-empty batch of one kind");
            let seeds: Vec<u64> = batch
                .iter()
                .map(|&i| eval_init_seed(eval_seed, &instances[i]))
                .collect();
            let init = InitEmbeddings::sample(&graph, config.dim, &seeds)?;
            let z = logits(params, config, &graph, &init)?;
            Ok(graph
                .split_by_instance(&z)
                .into_iter()
                .map(predict_assignment)
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(per_batch.into_iter().flatten().collect())
}

pub fn evaluate(
    params: &Params,
    config: &ModelConfig,
    instances: &[LabeledInstance],
    eval_seed: u64,
    node_cap: usize,
) -> Result<EvalMetrics, ModelError> {
    let predictions = predict(params, config, instances, eval_seed, node_cap)?;
    let records = instances
        .iter()
        .zip(&predictions)
        .map(|(inst, a)| InstanceRecord::new(inst, a))
        .collect();
    Ok(EvalMetrics::from_records(records))
}
