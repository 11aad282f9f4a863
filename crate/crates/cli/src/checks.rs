//! Invariant suites shared by `maxsat selftest` and the acceptance run.

use maxsat_core::cnf::example_formula;
use maxsat_core::dla::{run_dla, verify_half_bound, PickPolicy};
use maxsat_core::exact::{solve_branch_bound, solve_exhaustive, SolveError};
use maxsat_core::generator::{generate_instance, GenSpec};
use maxsat_core::graph::{batch_graphs, BatchedGraph, FactorGraph};
use maxsat_core::rng::{derive_seed, Rng};
use maxsat_core::{Clause, CnfFormula, Literal};
use maxsat_gnn::checkpoint::Checkpoint;
use maxsat_gnn::gradcheck::check_model;
use maxsat_gnn::model::{logits, InitEmbeddings, ModelConfig, ModelError, ModelKind};
use maxsat_gnn::optim::{AdamConfig, ParamStore};
use maxsat_gnn::tape::bce_loss;
use maxsat_gnn::{Gradients, Tensor};
use rayon::prelude::*;

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BoundSweep {
    pub formulas: usize,
    pub runs: usize,
    pub violations: usize,
}

impl BoundSweep {
    fn merge(self, other: BoundSweep) -> BoundSweep {
        BoundSweep {
            formulas: self.formulas + other.formulas,
            runs: self.runs + other.runs,
            violations: self.violations + other.violations,
        }
    }
}

fn dla_runs(f: &CnfFormula, policies: &[PickPolicy]) -> BoundSweep {
    let violations = policies
        .iter()
        .filter(|&&p| !verify_half_bound(f, &run_dla(f, p).assignment))
        .count();
    BoundSweep {
        formulas: 1,
        runs: policies.len(),
        violations,
    }
}

/// Every ordered width-`k` clause over `n` variables (distinct variables, literal order significant).
fn ordered_clauses(n: usize, k: usize) -> Vec<Clause> {
    fn extend(n: usize, k: usize, prefix: &mut Vec<Literal>, out: &mut Vec<Clause>) {
        if prefix.len() == k {
            out.push(Clause::new(prefix.clone()).expect("distinct variables"));
            return;
        }
        for v in 1..=n as u32 {
            if prefix.iter().any(|l| l.var() == v) {
                continue;
            }
            for positive in [true, false] {
                prefix.push(Literal::new(v, positive).expect("positive variable"));
                extend(n, k, prefix, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    extend(n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// All Max-kSAT formulas for `k ∈ widths`, `n ≤ max_vars`, `1 ≤ m ≤ max_clauses`, as clause
/// sequences. First-literal picks over all literal orders cover every possible pick vector.
pub fn dla_exhaustive(max_vars: usize, max_clauses: usize, widths: &[usize], random_seeds: u64) -> BoundSweep {
    let mut total = BoundSweep::default();
    for &k in widths {
        for n in k.max(1)..=max_vars {
            let clauses = ordered_clauses(n, k);
            for m in 1..=max_clauses {
                let count = clauses.len().pow(m as u32);
                let sweep = (0..count)
                    .into_par_iter()
                    .map(|code| {
                        let mut rest = code;
                        let picked: Vec<Clause> = (0..m)
                            .map(|_| {
                                let c = clauses[rest % clauses.len()].clone();
                                rest /= clauses.len();
                                c
                            })
                            .collect();
                        let f = CnfFormula::new(n, picked).expect("valid clauses");
                        let mut policies = vec![PickPolicy::FirstLiteral];
                        policies
                            .extend((0..random_seeds).map(|s| PickPolicy::SeededRandom(derive_seed(s, code as u64))));
                        dla_runs(&f, &policies)
                    })
                    .reduce(BoundSweep::default, BoundSweep::merge);
                total = total.merge(sweep);
            }
        }
    }
    total
}

/// Random Max-kSAT instances with `k ≤ max_k`, `k ≤ n ≤ max_vars`, `1 ≤ m ≤ max_clauses`.
pub fn random_spec(rng: &mut Rng, max_k: usize, max_vars: usize, max_clauses: usize) -> GenSpec {
    let k = 1 + rng.below(max_k as u64) as usize;
    let n = k + rng.below((max_vars - k + 1) as u64) as usize;
    let m = 1 + rng.below(max_clauses as u64) as usize;
    GenSpec::new(k, n, m, rng.next_u64()).expect("valid random spec")
}

pub fn dla_random(count: usize, seed: u64) -> BoundSweep {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::new(derive_seed(seed, i as u64));
            let spec = random_spec(&mut rng, 3, 30, 300);
            let f = generate_instance(&spec).expect("valid spec");
            dla_runs(&f, &[PickPolicy::FirstLiteral, PickPolicy::SeededRandom(spec.seed)])
        })
        .reduce(BoundSweep::default, BoundSweep::merge)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OracleSweep {
    pub instances: usize,
    pub mismatches: usize,
    pub bad_witnesses: usize,
}

/// Branch and bound versus exhaustive search on random mixed-width instances with `n ≤ 12`.
pub fn oracle_equivalence(count: usize, seed: u64) -> Result<OracleSweep, SolveError> {
    let results = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::new(derive_seed(seed, i as u64));
            let spec = random_spec(&mut rng, 3, 12, 60);
            let f = generate_instance(&spec).expect("valid spec");
            let bb = solve_branch_bound(&f);
            let ex = solve_exhaustive(&f)?;
            let witness_ok = f.eval(&bb.witness).map(|r| r.satisfied == bb.optimum).unwrap_or(false)
                && f.eval(&ex.witness).map(|r| r.satisfied == ex.optimum).unwrap_or(false);
            Ok((bb.optimum != ex.optimum, !witness_ok))
        })
        .collect::<Result<Vec<_>, SolveError>>()?;
    Ok(OracleSweep {
        instances: count,
        mismatches: results.iter().filter(|r| r.0).count(),
        bad_witnesses: results.iter().filter(|r| r.1).count(),
    })
}

/// Largest per-tensor relative gradient error over `seeds` (d = 4, T = 2, three-clause example).
pub fn gradient_check(kind: ModelKind, seeds: u64) -> Result<(f64, String), ModelError> {
    let f = example_formula();
    let labels = solve_branch_bound(&f).witness;
    let config = ModelConfig::new(kind, 4, 2, 0)?;
    let graph = BatchedGraph::single(FactorGraph::build(kind.graph_kind(), &f));
    let mut worst = (0.0, String::new());
    for seed in 0..seeds {
        for c in check_model(&config, &graph, labels.clone(), seed, 1e-3)? {
            if c.rel_error >= worst.0 {
                worst = (c.rel_error, c.name);
            }
        }
    }
    Ok(worst)
}

/// Largest absolute logit difference between a batch of `count` instances and per-instance forwards.
pub fn batch_equivalence(kind: ModelKind, count: usize) -> Result<f32, ModelError> {
    let config = ModelConfig::new(kind, 16, 4, 3)?;
    let params = config.init_params();
    let graphs: Vec<FactorGraph> = (0..count)
        .map(|i| {
            let spec = GenSpec::new(2 + i % 2, 8 + i, 24 + 4 * i, i as u64).expect("valid spec");
            FactorGraph::build(kind.graph_kind(), &generate_instance(&spec).expect("valid spec"))
        })
        .collect();
    let seeds: Vec<u64> = (0..count as u64).map(|i| 40 + i).collect();
    let batch = batch_graphs(&graphs).expect("same kind");
    let init = InitEmbeddings::sample(&batch, config.dim, &seeds)?;
    let z = logits(&params, &config, &batch, &init)?;
    let mut worst = 0.0f32;
    for ((g, part), &seed) in graphs.iter().zip(batch.split_by_instance(&z)).zip(&seeds) {
        let one = BatchedGraph::single(g.clone());
        let init = InitEmbeddings::sample(&one, config.dim, &[seed])?;
        for (a, b) in part.iter().zip(logits(&params, &config, &one, &init)?) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// Serialize and reload a checkpoint; the bytes and the logits must be identical.
pub fn checkpoint_round_trip(kind: ModelKind) -> Result<bool, Box<dyn std::error::Error + Send + Sync>> {
    let config = ModelConfig::new(kind, 8, 3, 17)?;
    let ckpt = Checkpoint::new(config, config.init_params())?;
    let bytes = ckpt.to_bytes();
    let back = Checkpoint::from_bytes(&bytes)?;
    let graph = BatchedGraph::single(FactorGraph::build(kind.graph_kind(), &example_formula()));
    let init = InitEmbeddings::sample(&graph, 8, &[1])?;
    Ok(back.to_bytes() == bytes
        && logits(&ckpt.params, &config, &graph, &init)? == logits(&back.params, &back.config, &graph, &init)?)
}

/// `|bce(p = 0.5, y = 1) − ln 2|`.
pub fn bce_oracle_error() -> f64 {
    (bce_loss(&[0.5], &[1.0]).expect("matching lengths") - std::f64::consts::LN_2).abs()
}

/// `|θ' − 0.9|` after one Adam step from `θ = 1` with `g = 1`, `lr = 0.1`.
pub fn adam_oracle_error() -> f64 {
    let mut store = ParamStore::new([("theta".to_string(), Tensor::scalar(1.0))].into());
    let grads: Gradients = [("theta".to_string(), Tensor::scalar(1.0))].into();
    let cfg = AdamConfig {
        lr: 0.1,
        weight_decay: 0.0,
        ..AdamConfig::default()
    };
    store.adam_step(&grads, &cfg).expect("matching gradient");
    (f64::from(store.get("theta").expect("registered").data()[0]) - 0.9).abs()
}
