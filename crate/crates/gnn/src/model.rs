//! MS-NSFG and MS-ESFG forward passes.
//!
//! Both models keep one embedding per left node (literal or variable) and per
//! clause, plus an LSTM cell state for each. Every layer computes the new
//! clause embeddings from the previous literal embeddings and the new literal
//! embeddings from the previous clause embeddings, with one parameter set
//! shared across all layers.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use maxsat_core::graph::{Adjacency, BatchedGraph, FactorGraph, GraphKind};
use maxsat_core::rng::Rng;
use maxsat_core::Assignment;
use thiserror::Error;

use crate::nn::{init_param, lstm_param_shapes, lstm_step, mlp, mlp_param_shapes};
use crate::optim::Params;
use crate::tape::{NodeId, Tape};
use crate::tensor::{Scalar, Tensor};
use crate::TensorError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("model is {model} but graph is {graph}")]
    KindMismatch { model: ModelKind, graph: ModelKind },
    #[error("initial embeddings have shape {got:?}, expected {expected:?}")]
    InitShape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("expected {expected} init seeds, got {got}")]
    SeedCount { expected: usize, got: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Nsfg,
    Esfg,
}

impl ModelKind {
    pub fn graph_kind(self) -> GraphKind {
        match self {
            ModelKind::Nsfg => GraphKind::Nsfg,
            ModelKind::Esfg => GraphKind::Esfg,
        }
    }

    fn of_graph(kind: GraphKind) -> Self {
        match kind {
            GraphKind::Nsfg => ModelKind::Nsfg,
            GraphKind::Esfg => ModelKind::Esfg,
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Nsfg => "MS-NSFG",
            ModelKind::Esfg => "MS-ESFG",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Nsfg => "nsfg",
            ModelKind::Esfg => "esfg",
        })
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nsfg" | "ms-nsfg" => Ok(ModelKind::Nsfg),
            "esfg" | "ms-esfg" => Ok(ModelKind::Esfg),
            _ => Err(ModelError::InvalidConfig(format!("unknown model kind `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Embedding and message dimension.
    pub dim: usize,
    /// Message-passing iterations.
    pub layers: usize,
    /// Seeds parameter initialization.
    pub init_seed: u64,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, dim: usize, layers: usize, init_seed: u64) -> Result<Self, ModelError> {
        let cfg = ModelConfig {
            kind,
            dim,
            layers,
            init_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.dim == 0 {
            return Err(ModelError::InvalidConfig("dim must be at least 1".into()));
        }
        if self.layers == 0 {
            return Err(ModelError::InvalidConfig("layers must be at least 1".into()));
        }
        Ok(())
    }

    /// Every learnable tensor of the architecture, in a fixed order.
    pub fn param_shapes(&self) -> Vec<(String, (usize, usize))> {
        let d = self.dim;
        let mut shapes = Vec::new();
        match self.kind {
            ModelKind::Nsfg => {
                shapes.extend(mlp_param_shapes("agg_l", d, d, d));
                shapes.extend(mlp_param_shapes("agg_c", d, d, d));
                shapes.extend(lstm_param_shapes("upd_c", d, d));
                shapes.extend(lstm_param_shapes("upd_l", 2 * d, d));
            }
            ModelKind::Esfg => {
                for prefix in ["agg_l_pos", "agg_l_neg", "agg_c_pos", "agg_c_neg"] {
                    shapes.extend(mlp_param_shapes(prefix, d, d, d));
                }
                shapes.extend(lstm_param_shapes("upd_c", d, d));
                shapes.extend(lstm_param_shapes("upd_l", d, d));
            }
        }
        shapes.extend(mlp_param_shapes("pred", d, d, 1));
        shapes
    }

    pub fn init_params(&self) -> Params {
        let mut rng = Rng::new(self.init_seed);
        self.param_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let t = init_param(&name, shape, &mut rng);
                (name, t)
            })
            .collect()
    }

    /// Checks that `params` holds exactly the architecture's tensors.
    pub fn check_params<S: Scalar>(&self, params: &Params<S>) -> Result<(), ModelError> {
        let shapes = self.param_shapes();
        for (name, shape) in &shapes {
            let p = params
                .get(name)
                .ok_or_else(|| TensorError::MissingParam(name.clone()))?;
            if p.shape() != *shape {
                return Err(TensorError::Shape {
                    op: "check_params",
                    left: *shape,
                    right: p.shape(),
                }
                .into());
            }
        }
        if params.len() != shapes.len() {
            let extra = params
                .keys()
                .find(|k| !shapes.iter().any(|(n, _)| n == *k))
                .cloned()
                .unwrap_or_default();
            return Err(ModelError::InvalidConfig(format!("unexpected parameter `{extra}`")));
        }
        Ok(())
    }
}

/// `L⁰` and `C⁰` for a (batched) graph.
#[derive(Clone, Debug, PartialEq)]
pub struct InitEmbeddings<S = f32> {
    pub left: Tensor<S>,
    pub clauses: Tensor<S>,
}

impl InitEmbeddings<f32> {
    /// i.i.d. `U(0,1)` entries; instance `i` draws its left rows, then its
    /// clause rows, from a stream seeded with `seeds[i]`.
    pub fn sample(graph: &BatchedGraph, dim: usize, seeds: &[u64]) -> Result<Self, ModelError> {
        if seeds.len() != graph.instances.len() {
            return Err(ModelError::SeedCount {
                expected: graph.instances.len(),
                got: seeds.len(),
            });
        }
        let mut left = Tensor::zeros(graph.graph.num_left_nodes(), dim);
        let mut clauses = Tensor::zeros(graph.graph.num_clauses(), dim);
        let per_var = graph.graph.num_left_nodes() / graph.graph.num_vars().max(1);
        for (span, &seed) in graph.instances.iter().zip(seeds) {
            let mut rng = Rng::new(seed);
            let num_left = span.num_vars * per_var;
            for r in span.left_offset..span.left_offset + num_left {
                left.row_mut(r).iter_mut().for_each(|v| *v = rng.unit_f32());
            }
            for r in span.clause_offset..span.clause_offset + span.num_clauses {
                clauses.row_mut(r).iter_mut().for_each(|v| *v = rng.unit_f32());
            }
        }
        Ok(InitEmbeddings { left, clauses })
    }
}

impl<S: Scalar> InitEmbeddings<S> {
    pub fn cast<T: Scalar>(&self) -> InitEmbeddings<T> {
        InitEmbeddings {
            left: self.left.cast(),
            clauses: self.clauses.cast(),
        }
    }

    fn check(&self, graph: &FactorGraph, dim: usize) -> Result<(), ModelError> {
        let expected = [(graph.num_left_nodes(), dim), (graph.num_clauses(), dim)];
        for (t, e) in [&self.left, &self.clauses].into_iter().zip(expected) {
            if t.shape() != e {
                return Err(ModelError::InitShape {
                    expected: e,
                    got: t.shape(),
                });
            }
        }
        Ok(())
    }
}

fn check_inputs<S: Scalar>(
    config: &ModelConfig,
    graph: &BatchedGraph,
    init: &InitEmbeddings<S>,
) -> Result<(), ModelError> {
    config.validate()?;
    let graph_kind = ModelKind::of_graph(graph.kind());
    if graph_kind != config.kind {
        return Err(ModelError::KindMismatch {
            model: config.kind,
            graph: graph_kind,
        });
    }
    init.check(&graph.graph, config.dim)
}

/// Final left-node embeddings `L^T`: all `2n` literal rows (NSFG) or `n` variable rows (ESFG).
fn final_left<S: Scalar>(
    tape: &mut Tape<S>,
    params: &Params<S>,
    config: &ModelConfig,
    graph: &BatchedGraph,
    init: &InitEmbeddings<S>,
) -> Result<NodeId, ModelError> {
    check_inputs(config, graph, init)?;
    match &graph.graph {
        FactorGraph::Nsfg(g) => forward_msnsfg(tape, params, config, &g.edges, &g.flip, init),
        FactorGraph::Esfg(g) => forward_msesfg(tape, params, config, &g.positive, &g.negative, init),
    }
}

/// Records a forward pass and returns the `n×1` logit column (one per variable).
pub fn forward<S: Scalar>(
    tape: &mut Tape<S>,
    params: &Params<S>,
    config: &ModelConfig,
    graph: &BatchedGraph,
    init: &InitEmbeddings<S>,
) -> Result<NodeId, ModelError> {
    let mut left = final_left(tape, params, config, graph, init)?;
    if let FactorGraph::Nsfg(g) = &graph.graph {
        left = tape.gather_rows(left, Arc::new(g.positive_rows()))?;
    }
    Ok(mlp(tape, params, "pred", left)?)
}

/// NSFG only: the prediction head applied to every literal row (`2i` = `x(i+1)`, `2i+1` = `¬x(i+1)`).
pub fn literal_logits(
    params: &Params,
    config: &ModelConfig,
    graph: &BatchedGraph,
    init: &InitEmbeddings,
) -> Result<Vec<f32>, ModelError> {
    if config.kind != ModelKind::Nsfg {
        return Err(ModelError::InvalidConfig("literal logits need an NSFG model".into()));
    }
    let mut tape = Tape::new();
    let left = final_left(&mut tape, params, config, graph, init)?;
    let out = mlp(&mut tape, params, "pred", left)?;
    Ok(tape.value(out).data().to_vec())
}

/// Literal → clause messages summed per clause.
fn to_clauses<S: Scalar>(tape: &mut Tape<S>, adj: &Adjacency, msg: NodeId) -> Result<NodeId, TensorError> {
    tape.aggregate(msg, adj.by_clause().clone(), adj.by_left().clone())
}

/// Clause → literal messages summed per literal.
fn to_left<S: Scalar>(tape: &mut Tape<S>, adj: &Adjacency, msg: NodeId) -> Result<NodeId, TensorError> {
    tape.aggregate(msg, adj.by_left().clone(), adj.by_clause().clone())
}

struct State {
    left: NodeId,
    left_cell: NodeId,
    clauses: NodeId,
    clause_cell: NodeId,
}

fn initial_state<S: Scalar>(tape: &mut Tape<S>, init: &InitEmbeddings<S>) -> State {
    let (nl, d) = init.left.shape();
    let nc = init.clauses.rows();
    State {
        left: tape.input(init.left.clone()),
        left_cell: tape.input(Tensor::zeros(nl, d)),
        clauses: tape.input(init.clauses.clone()),
        clause_cell: tape.input(Tensor::zeros(nc, d)),
    }
}

/// Final literal embeddings `L^T` (all `2n` rows).
fn forward_msnsfg<S: Scalar>(
    tape: &mut Tape<S>,
    params: &Params<S>,
    config: &ModelConfig,
    edges: &Adjacency,
    flip: &Arc<Vec<usize>>,
    init: &InitEmbeddings<S>,
) -> Result<NodeId, ModelError> {
    let mut s = initial_state(tape, init);
    for k in 1..=config.layers {
        let prev_clauses = s.clauses;
        // The clause update of the last layer cannot reach the logits.
        if k < config.layers {
            let msg = mlp(tape, params, "agg_l", s.left)?;
            let input = to_clauses(tape, edges, msg)?;
            (s.clauses, s.clause_cell) = lstm_step(tape, params, "upd_c", input, s.clauses, s.clause_cell)?;
        }
        let msg = mlp(tape, params, "agg_c", prev_clauses)?;
        let agg = to_left(tape, edges, msg)?;
        let negation = tape.gather_rows(s.left, flip.clone())?;
        let input = tape.concat_cols(agg, negation)?;
        (s.left, s.left_cell) = lstm_step(tape, params, "upd_l", input, s.left, s.left_cell)?;
    }
    Ok(s.left)
}

/// Final variable embeddings `L^T`.
fn forward_msesfg<S: Scalar>(
    tape: &mut Tape<S>,
    params: &Params<S>,
    config: &ModelConfig,
    positive: &Adjacency,
    negative: &Adjacency,
    init: &InitEmbeddings<S>,
) -> Result<NodeId, ModelError> {
    let mut s = initial_state(tape, init);
    for k in 1..=config.layers {
        let prev_clauses = s.clauses;
        if k < config.layers {
            let mp = mlp(tape, params, "agg_l_pos", s.left)?;
            let mn = mlp(tape, params, "agg_l_neg", s.left)?;
            let ap = to_clauses(tape, positive, mp)?;
            let an = to_clauses(tape, negative, mn)?;
            let input = tape.add(ap, an)?;
            (s.clauses, s.clause_cell) = lstm_step(tape, params, "upd_c", input, s.clauses, s.clause_cell)?;
        }
        let mp = mlp(tape, params, "agg_c_pos", prev_clauses)?;
        let mn = mlp(tape, params, "agg_c_neg", prev_clauses)?;
        let ap = to_left(tape, positive, mp)?;
        let an = to_left(tape, negative, mn)?;
        let input = tape.add(ap, an)?;
        (s.left, s.left_cell) = lstm_step(tape, params, "upd_l", input, s.left, s.left_cell)?;
    }
    Ok(s.left)
}

/// Forward without keeping the tape; returns one logit per variable.
pub fn logits(
    params: &Params,
    config: &ModelConfig,
    graph: &BatchedGraph,
    init: &InitEmbeddings,
) -> Result<Vec<f32>, ModelError> {
    let mut tape = Tape::new();
    let out = forward(&mut tape, params, config, graph, init)?;
    Ok(tape.value(out).data().to_vec())
}

/// Variable `i` is true iff `σ(logit_i) ≥ 0.5`, i.e. `logit_i ≥ 0`.
pub fn predict_assignment(logits: &[f32]) -> Assignment {
    Assignment::new(logits.iter().map(|&z| z >= 0.0).collect())
}
