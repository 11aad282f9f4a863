//! Exact MaxSAT: an exhaustive reference and a depth-first branch and bound.
//!
//! Both report the lexicographically smallest optimal assignment (variable 1
//! first, `false < true`), so the witness is a function of the formula alone.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::cnf::{Assignment, CnfFormula};
use crate::dla::{run_dla, PickPolicy};
use crate::generator::{io_err, DatasetManifest, GenError};

/// Largest variable count accepted by [`solve_exhaustive`].
pub const EXHAUSTIVE_MAX_VARS: usize = 26;

pub const LABEL_FILE: &str = "labels.txt";

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("exhaustive search limited to {max} variables, formula has {n}")]
    TooManyVariables { n: usize, max: usize },
    #[error(transparent)]
    Dataset(#[from] GenError),
    #[error("witness for {path} satisfies {evaluated} clauses, expected optimum {optimum}")]
    WitnessMismatch {
        path: String,
        optimum: usize,
        evaluated: usize,
    },
    #[error("label file {path}, line {line}: {reason}")]
    LabelFormat { path: PathBuf, line: usize, reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OptResult {
    pub optimum: usize,
    pub witness: Assignment,
    pub nodes_explored: u64,
}

/// Try every assignment in lexicographic order and keep the first maximum.
pub fn solve_exhaustive(formula: &CnfFormula) -> Result<OptResult, SolveError> {
    let n = formula.num_vars();
    if n > EXHAUSTIVE_MAX_VARS {
        return Err(SolveError::TooManyVariables {
            n,
            max: EXHAUSTIVE_MAX_VARS,
        });
    }
    // Bit (n-1-i) of the mask holds variable i+1, so numeric order is
    // lexicographic order over the assignment vector.
    let masks: Vec<(u32, u32)> = formula
        .clauses()
        .iter()
        .map(|c| {
            c.literals().iter().fold((0u32, 0u32), |(pos, neg), l| {
                let bit = 1u32 << (n - 1 - l.var_index());
                if l.is_positive() {
                    (pos | bit, neg)
                } else {
                    (pos, neg | bit)
                }
            })
        })
        .collect();
    let mut best = 0usize;
    let mut best_mask = 0u32;
    let total: u64 = 1u64 << n;
    let m = masks.len();
    for a in 0..total {
        let a = a as u32;
        let sat = masks
            .iter()
            .filter(|&&(pos, neg)| a & pos != 0 || !a & neg != 0)
            .count();
        if a == 0 || sat > best {
            best = sat;
            best_mask = a;
            if best == m {
                break;
            }
        }
    }
    let witness = Assignment::new((0..n).map(|i| best_mask & (1u32 << (n - 1 - i)) != 0).collect());
    Ok(OptResult {
        optimum: best,
        witness,
        nodes_explored: total,
    })
}

/// Incremental search state over clause counters.
struct Search<'a> {
    /// Per variable: (clause index, literal is positive).
    occurrences: Vec<Vec<(usize, bool)>>,
    /// Per clause: literals still unassigned.
    unassigned: Vec<u32>,
    /// Per clause: literals currently true.
    true_count: Vec<u32>,
    satisfied: usize,
    falsified: usize,
    m: usize,
    values: Vec<bool>,
    nodes: u64,
    formula: &'a CnfFormula,
}

impl<'a> Search<'a> {
    fn new(formula: &'a CnfFormula) -> Self {
        let n = formula.num_vars();
        let mut occurrences = vec![Vec::new(); n];
        for (j, c) in formula.clauses().iter().enumerate() {
            for l in c.literals() {
                occurrences[l.var_index()].push((j, l.is_positive()));
            }
        }
        Search {
            occurrences,
            unassigned: formula.clauses().iter().map(|c| c.width() as u32).collect(),
            true_count: vec![0; formula.num_clauses()],
            satisfied: 0,
            falsified: 0,
            m: formula.num_clauses(),
            values: vec![false; n],
            nodes: 0,
            formula,
        }
    }

    /// Clauses that can still be satisfied on this branch.
    fn upper_bound(&self) -> usize {
        self.m - self.falsified
    }

    fn assign(&mut self, var: usize, value: bool) {
        self.values[var] = value;
        for &(j, positive) in &self.occurrences[var] {
            self.unassigned[j] -= 1;
            if positive == value {
                self.true_count[j] += 1;
                if self.true_count[j] == 1 {
                    self.satisfied += 1;
                }
            } else if self.unassigned[j] == 0 && self.true_count[j] == 0 {
                self.falsified += 1;
            }
        }
    }

    fn unassign(&mut self, var: usize, value: bool) {
        for &(j, positive) in &self.occurrences[var] {
            if positive == value {
                if self.true_count[j] == 1 {
                    self.satisfied -= 1;
                }
                self.true_count[j] -= 1;
            } else if self.unassigned[j] == 0 && self.true_count[j] == 0 {
                self.falsified -= 1;
            }
            self.unassigned[j] += 1;
        }
    }

    /// Maximize over `order`, pruning when the bound cannot beat the incumbent.
    fn optimize(&mut self, order: &[usize], depth: usize, best: &mut usize) {
        self.nodes += 1;
        if self.upper_bound() <= *best {
            return;
        }
        if depth == order.len() {
            // All clauses are decided at a leaf, so the bound is exact.
            *best = self.satisfied;
            return;
        }
        let var = order[depth];
        for value in [true, false] {
            self.assign(var, value);
            self.optimize(order, depth + 1, best);
            self.unassign(var, value);
        }
    }

    /// Find the first assignment in `order` (false before true) reaching `target`.
    fn first_reaching(&mut self, order: &[usize], depth: usize, target: usize) -> bool {
        self.nodes += 1;
        if self.upper_bound() < target {
            return false;
        }
        if depth == order.len() {
            return true;
        }
        let var = order[depth];
        for value in [false, true] {
            self.assign(var, value);
            if self.first_reaching(order, depth + 1, target) {
                return true;
            }
            self.unassign(var, value);
        }
        false
    }
}

/// Branch and bound over variables in descending occurrence order.
///
/// The bound is `satisfied + undecided = m − falsified`; a branch is cut
/// when it cannot exceed the incumbent, which starts at the objective of the
/// first-literal local algorithm. A second pass in variable order recovers
/// the lexicographically smallest witness for the proven optimum.
pub fn solve_branch_bound(formula: &CnfFormula) -> OptResult {
    let n = formula.num_vars();
    let mut search = Search::new(formula);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| std::cmp::Reverse(search.occurrences[v].len()));

    let seed = run_dla(formula, PickPolicy::FirstLiteral).assignment;
    let seed_value = formula.eval(&seed).expect("DLA assignment has n values").satisfied;
    // Start one below the known feasible value so the search also proves it.
    let mut best = seed_value.saturating_sub(1);
    search.optimize(&order, 0, &mut best);
    let optimum = best.max(seed_value);

    let natural: Vec<usize> = (0..n).collect();
    let found = search.first_reaching(&natural, 0, optimum);
    debug_assert!(found, "optimum must be reachable");
    let witness = Assignment::new(search.values.clone());
    debug_assert_eq!(search.formula.eval(&witness).unwrap().satisfied, optimum);
    OptResult {
        optimum,
        witness,
        nodes_explored: search.nodes,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelRecord {
    pub path: String,
    pub optimum: usize,
    pub witness: Assignment,
}

impl LabelRecord {
    pub fn render(&self) -> String {
        format!("{} {} {}", self.path, self.optimum, self.witness.to_bits())
    }
}

pub fn label_path(manifest: &DatasetManifest) -> PathBuf {
    manifest.root.join(LABEL_FILE)
}

/// Solve every instance of a dataset and write `labels.txt` next to the manifest.
///
/// Every witness is re-evaluated before the file is written.
pub fn label_dataset(manifest: &DatasetManifest) -> Result<Vec<LabelRecord>, SolveError> {
    let records = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let formula = manifest.read_instance(entry)?;
            let result = solve_branch_bound(&formula);
            let record = LabelRecord {
                path: entry.path.clone(),
                optimum: result.optimum,
                witness: result.witness,
            };
            check_witness(&formula, &record)?;
            Ok(record)
        })
        .collect::<Result<Vec<_>, SolveError>>()?;
    let mut text = String::new();
    for r in &records {
        text.push_str(&r.render());
        text.push('\n');
    }
    let path = label_path(manifest);
    fs::write(&path, text).map_err(|e| SolveError::Dataset(io_err(&path)(e)))?;
    Ok(records)
}

pub fn check_witness(formula: &CnfFormula, record: &LabelRecord) -> Result<(), SolveError> {
    let evaluated = formula.eval(&record.witness).map(|r| r.satisfied).unwrap_or(usize::MAX);
    if evaluated != record.optimum {
        return Err(SolveError::WitnessMismatch {
            path: record.path.clone(),
            optimum: record.optimum,
            evaluated,
        });
    }
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>, SolveError> {
    let text = fs::read_to_string(path).map_err(|e| SolveError::Dataset(io_err(path)(e)))?;
    let bad = |line: usize, reason: &str| SolveError::LabelFormat {
        path: path.to_path_buf(),
        line,
        reason: reason.to_string(),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() != 3 {
                return Err(bad(i + 1, "expected `path optimum bitstring`"));
            }
            let optimum = fields[1].parse().map_err(|_| bad(i + 1, "bad optimum"))?;
            let witness = Assignment::from_bits(fields[2]).ok_or_else(|| bad(i + 1, "bad bitstring"))?;
            Ok(LabelRecord {
                path: fields[0].to_string(),
                optimum,
                witness,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::example_formula;
    use crate::generator::{generate_dataset, generate_instance, GenSpec};

    #[test]
    fn example_optimum() {
        let f = example_formula();
        let ex = solve_exhaustive(&f).unwrap();
        assert_eq!(ex.optimum, 3);
        // (F,T,F) is the smallest assignment satisfying all three clauses.
        assert_eq!(ex.witness.to_bits(), "010");
        let bb = solve_branch_bound(&f);
        assert_eq!(bb.optimum, 3);
        assert_eq!(bb.witness, ex.witness);
    }

    #[test]
    fn complementary_units() {
        let f = CnfFormula::from_clauses(1, &[&[1], &[-1]]).unwrap();
        let ex = solve_exhaustive(&f).unwrap();
        assert_eq!(ex.optimum, 1);
        assert_eq!(ex.witness.to_bits(), "0");
        assert_eq!(solve_branch_bound(&f).optimum, 1);
    }

    #[test]
    fn single_positive_unit() {
        let f = CnfFormula::from_clauses(1, &[&[1]]).unwrap();
        let ex = solve_exhaustive(&f).unwrap();
        assert_eq!((ex.optimum, ex.witness.to_bits().as_str()), (1, "1"));
        let bb = solve_branch_bound(&f);
        assert_eq!((bb.optimum, bb.witness.to_bits().as_str()), (1, "1"));
    }

    #[test]
    fn all_true_satisfiable_prunes_early() {
        let f =
            CnfFormula::from_clauses(6, &[&[1, 2], &[3, 4], &[5, 6], &[1, 6], &[2, 3], &[4, 5], &[1], &[6]]).unwrap();
        let bb = solve_branch_bound(&f);
        assert_eq!(bb.optimum, f.num_clauses());
        assert!(bb.nodes_explored < 2 * (1u64 << 6));
    }

    #[test]
    fn guard_on_large_formulas() {
        let f = generate_instance(&GenSpec::new(2, 27, 5, 1).unwrap()).unwrap();
        assert!(matches!(
            solve_exhaustive(&f),
            Err(SolveError::TooManyVariables { n: 27, .. })
        ));
    }

    #[test]
    fn branch_bound_matches_exhaustive() {
        for seed in 0..300u64 {
            let k = 1 + (seed % 3) as usize;
            let n = k.max(1 + (seed % 10) as usize);
            let m = 1 + (seed % 25) as usize;
            let f = generate_instance(&GenSpec::new(k, n, m, seed).unwrap()).unwrap();
            let ex = solve_exhaustive(&f).unwrap();
            let bb = solve_branch_bound(&f);
            assert_eq!(bb.optimum, ex.optimum, "seed {seed}");
            assert_eq!(bb.witness, ex.witness, "seed {seed}");
            assert_eq!(f.eval(&bb.witness).unwrap().satisfied, bb.optimum);
        }
    }

    #[test]
    fn optimum_dominates_local_algorithm() {
        for seed in 0..50u64 {
            let f = generate_instance(&GenSpec::new(3, 10, 40, seed).unwrap()).unwrap();
            let dla = run_dla(&f, PickPolicy::FirstLiteral).assignment;
            assert!(solve_branch_bound(&f).optimum >= f.eval(&dla).unwrap().satisfied);
        }
    }

    #[test]
    fn labels_roundtrip_and_are_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GenSpec::new(2, 10, 40, 9).unwrap();
        let manifest = generate_dataset(&spec, 10, dir.path()).unwrap();
        let records = label_dataset(&manifest).unwrap();
        assert_eq!(records.len(), 10);
        let first = fs::read(label_path(&manifest)).unwrap();
        label_dataset(&manifest).unwrap();
        assert_eq!(fs::read(label_path(&manifest)).unwrap(), first);
        let loaded = read_labels(&label_path(&manifest)).unwrap();
        assert_eq!(loaded, records);
        for (entry, record) in manifest.entries.iter().zip(&loaded) {
            let f = manifest.read_instance(entry).unwrap();
            assert_eq!(f.eval(&record.witness).unwrap().satisfied, record.optimum);
            assert_eq!(record.witness.len(), 10);
        }
    }

    #[test]
    fn witness_check_catches_mismatch() {
        let f = example_formula();
        let record = LabelRecord {
            path: "x".into(),
            optimum: 3,
            witness: Assignment::all(3, true),
        };
        assert!(matches!(
            check_witness(&f, &record),
            Err(SolveError::WitnessMismatch { evaluated: 2, .. })
        ));
    }
}
