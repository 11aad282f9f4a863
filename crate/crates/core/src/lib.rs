//! Instance-side building blocks for learning MaxSAT solutions: CNF formulas
//! and DIMACS I/O, a reproducible random Max-kSAT generator, exact solvers
//! for labels, the one-round local approximation algorithm, and the factor
//! graphs the message-passing models run on.

pub mod cnf;
pub mod dla;
pub mod exact;
pub mod generator;
pub mod graph;
pub mod rng;

pub use cnf::{Assignment, Clause, CnfFormula, EvalResult, Literal};
