//! Analytic gradients against central finite differences.
//!
//! The analytic side runs the production `f32` tape; the finite differences
//! run the same code in `f64`. The shadow replays the ReLU activation pattern
//! of the analytic pass: a step of 1e-3 routinely moves some pre-activation
//! across zero, and a difference quotient straddling a kink measures neither
//! one-sided derivative.

use std::sync::Arc;

use maxsat_core::graph::BatchedGraph;
use maxsat_core::rng::Rng;
use maxsat_core::Assignment;

use crate::model::{forward, InitEmbeddings, ModelConfig, ModelError};
use crate::optim::Params;
use crate::tape::{NodeId, Tape};
use crate::tensor::{Scalar, Tensor};

/// A scalar objective that can be recorded at any precision.
pub trait Objective {
    fn record<S: Scalar>(&self, tape: &mut Tape<S>, params: &Params<S>) -> Result<NodeId, ModelError>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    /// `‖analytic − fd‖ / max(‖analytic‖, ‖fd‖)` over the whole tensor.
    pub rel_error: f64,
    pub max_abs_error: f64,
    pub grad_norm: f64,
}

pub fn check_gradients<O: Objective>(objective: &O, params: &Params, step: f64) -> Result<Vec<ParamCheck>, ModelError> {
    let mut tape = Tape::<f32>::new();
    let loss = objective.record(&mut tape, params)?;
    let pattern = tape.relu_pattern();
    let grads = tape.backward(loss)?;

    let p64: Params<f64> = params.iter().map(|(k, v)| (k.clone(), v.cast())).collect();
    let eval = |p: &Params<f64>| -> Result<f64, ModelError> {
        let mut tape = Tape::<f64>::with_relu_pattern(pattern.clone());
        let loss = objective.record(&mut tape, p)?;
        Ok(tape.value(loss).data()[0])
    };

    let mut out = Vec::with_capacity(p64.len());
    for (name, value) in &p64 {
        let mut fd = Tensor::<f64>::zeros(value.rows(), value.cols());
        let mut probe = p64.clone();
        for i in 0..value.len() {
            let orig = value.data()[i];
            probe.get_mut(name).expect("present").data_mut()[i] = orig + step;
            let up = eval(&probe)?;
            probe.get_mut(name).expect("present").data_mut()[i] = orig - step;
            let down = eval(&probe)?;
            probe.get_mut(name).expect("present").data_mut()[i] = orig;
            fd.data_mut()[i] = (up - down) / (2.0 * step);
        }
        let analytic: Tensor<f64> = grads[name].cast();
        let mut diff2 = 0.0;
        let mut max_abs: f64 = 0.0;
        for (a, b) in analytic.data().iter().zip(fd.data()) {
            diff2 += (a - b) * (a - b);
            max_abs = max_abs.max((a - b).abs());
        }
        let scale = analytic.norm().max(fd.norm());
        let rel_error = if scale == 0.0 { 0.0 } else { diff2.sqrt() / scale };
        out.push(ParamCheck {
            name: name.clone(),
            rel_error,
            max_abs_error: max_abs,
            grad_norm: analytic.norm(),
        });
    }
    Ok(out)
}

/// Per-variable BCE of a model's logits against a label assignment.
pub struct ModelObjective<'a> {
    pub config: ModelConfig,
    pub graph: &'a BatchedGraph,
    pub init: InitEmbeddings,
    pub labels: Assignment,
}

impl Objective for ModelObjective<'_> {
    fn record<S: Scalar>(&self, tape: &mut Tape<S>, params: &Params<S>) -> Result<NodeId, ModelError> {
        let z = forward(tape, params, &self.config, self.graph, &self.init.cast())?;
        let n = self.labels.len();
        let y = self
            .labels
            .values()
            .iter()
            .map(|&b| if b { S::one() } else { S::zero() })
            .collect();
        let w = vec![S::one() / S::of(n as f64); n];
        Ok(tape.bce_with_logits(z, Arc::new(y), Arc::new(w))?)
    }
}

/// Initialized weights with biases redrawn from `U(−0.1, 0.1)`.
///
/// Zero biases put ReLU pre-activations exactly on the kink whenever a whole
/// hidden layer is inactive, where the derivative is undefined.
pub fn check_params(config: &ModelConfig, seed: u64) -> Params {
    let mut rng = Rng::new(seed);
    let mut params = config.init_params();
    for (name, p) in params.iter_mut() {
        if name.ends_with(".b") {
            p.data_mut().iter_mut().for_each(|v| *v += 0.2 * rng.unit_f32() - 0.1);
        }
    }
    params
}

/// Finite-difference check of a full model on `graph`.
pub fn check_model(
    config: &ModelConfig,
    graph: &BatchedGraph,
    labels: Assignment,
    init_seed: u64,
    step: f64,
) -> Result<Vec<ParamCheck>, ModelError> {
    let seeds: Vec<u64> = (0..graph.instances.len() as u64).map(|i| init_seed + i).collect();
    let init = InitEmbeddings::sample(graph, config.dim, &seeds)?;
    let objective = ModelObjective {
        config: *config,
        graph,
        init,
        labels,
    };
    check_gradients(&objective, &check_params(config, init_seed), step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;
    use maxsat_core::cnf::example_formula;
    use maxsat_core::graph::FactorGraph;

    #[test]
    fn example_models_match_finite_differences() {
        let f = example_formula();
        for (kind, seed) in [ModelKind::Nsfg, ModelKind::Esfg]
            .into_iter()
            .flat_map(|k| (0..4u64).map(move |s| (k, s)))
        {
            let cfg = ModelConfig::new(kind, 4, 2, 17 + seed).unwrap();
            let g = BatchedGraph::single(FactorGraph::build(kind.graph_kind(), &f));
            let labels = Assignment::new(vec![true, false, true]);
            let checks = check_model(&cfg, &g, labels, 3, 1e-3).unwrap();
            assert_eq!(checks.len(), cfg.param_shapes().len());
            for c in &checks {
                assert!(c.rel_error < 1e-4, "{kind} {}: {c:?}", c.name);
            }

            assert!(checks.iter().any(|c| c.grad_norm > 0.0));
        }
    }
}
