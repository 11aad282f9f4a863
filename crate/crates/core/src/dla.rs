//! One-round distributed local algorithm for MaxSAT.
//!
//! Literals announce themselves to their clauses, every clause picks one of
//! its literals and sends it a vote, and each variable takes the polarity
//! whose literal received at least as many votes as its negation. Reducing
//! each clause to its picked literal gives a Max1SAT instance on which this
//! majority rule satisfies at least half the clauses, so the output always
//! satisfies at least `m / 2` clauses of the original formula.

use crate::cnf::{Assignment, CnfFormula, Literal};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PickPolicy {
    /// The first literal of each clause, as written.
    FirstLiteral,
    /// A uniformly random literal per clause from a seeded stream.
    SeededRandom(u64),
}

/// Per-literal vote counters and per-clause received literal sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DlaState {
    /// Indexed by literal node: `2i` is `x(i+1)`, `2i+1` is `¬x(i+1)`.
    pub votes: Vec<u32>,
    pub received: Vec<Vec<Literal>>,
    pub picks: Vec<Literal>,
}

impl DlaState {
    pub fn votes_for(&self, literal: Literal) -> u32 {
        self.votes[literal.node_index()]
    }

    pub fn total_votes(&self) -> u64 {
        self.votes.iter().map(|&w| u64::from(w)).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DlaOutcome {
    pub assignment: Assignment,
    pub state: DlaState,
}

pub fn run_dla(formula: &CnfFormula, policy: PickPolicy) -> DlaOutcome {
    let n = formula.num_vars();
    let mut votes = vec![0u32; 2 * n];

    // Literal -> clause round: each clause learns which literals it holds.
    let received: Vec<Vec<Literal>> = formula.clauses().iter().map(|c| c.literals().to_vec()).collect();

    // Clause -> literal round: one vote per clause.
    let mut rng = match policy {
        PickPolicy::SeededRandom(seed) => Some(Rng::new(seed)),
        PickPolicy::FirstLiteral => None,
    };
    let picks: Vec<Literal> = received
        .iter()
        .map(|lits| match rng.as_mut() {
            Some(rng) => lits[rng.below(lits.len() as u64) as usize],
            None => lits[0],
        })
        .collect();
    for lit in &picks {
        votes[lit.node_index()] += 1;
    }

    // Decided per variable so x and ¬x never both end up true.
    let assignment = Assignment::new((0..n).map(|i| votes[2 * i] >= votes[2 * i + 1]).collect());
    DlaOutcome {
        assignment,
        state: DlaState { votes, received, picks },
    }
}

/// `2 × satisfied ≥ m`.
pub fn verify_half_bound(formula: &CnfFormula, assignment: &Assignment) -> bool {
    match formula.eval(assignment) {
        Ok(r) => 2 * r.satisfied >= r.total,
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::{example_formula, Clause};
    use crate::generator::{generate_instance, GenSpec};

    #[test]
    fn example_trace_first_literal() {
        let f = example_formula();
        let out = run_dla(&f, PickPolicy::FirstLiteral);
        assert_eq!(
            out.state.picks,
            vec![Literal::positive(1), Literal::positive(1), Literal::negative(1)]
        );
        assert_eq!(out.state.votes_for(Literal::positive(1)), 2);
        assert_eq!(out.state.votes_for(Literal::negative(1)), 1);
        assert_eq!(out.assignment, Assignment::all(3, true));
        assert_eq!(f.eval(&out.assignment).unwrap().satisfied, 2);
        assert!(verify_half_bound(&f, &out.assignment));
    }

    #[test]
    fn tight_complementary_units() {
        let f = CnfFormula::from_clauses(1, &[&[1], &[-1]]).unwrap();
        let out = run_dla(&f, PickPolicy::FirstLiteral);
        assert_eq!(out.state.votes, vec![1, 1]);
        assert_eq!(out.assignment, Assignment::all(1, true));
        assert_eq!(f.eval(&out.assignment).unwrap().satisfied, 1);
        assert!(verify_half_bound(&f, &out.assignment));
    }

    #[test]
    fn negative_unit() {
        let f = CnfFormula::from_clauses(2, &[&[-2]]).unwrap();
        let out = run_dla(&f, PickPolicy::FirstLiteral);
        assert_eq!(out.state.votes_for(Literal::negative(2)), 1);
        assert_eq!(out.state.votes_for(Literal::positive(2)), 0);
        assert!(!out.assignment.get(1));
        assert_eq!(f.eval(&out.assignment).unwrap().satisfied, 1);
    }

    #[test]
    fn half_bound_check_is_not_vacuous() {
        let f = CnfFormula::from_clauses(3, &[&[1], &[2], &[3]]).unwrap();
        assert!(!verify_half_bound(&f, &Assignment::all(3, false)));
    }

    #[test]
    fn votes_are_conserved_and_bound_holds() {
        for seed in 0..500u64 {
            let k = 1 + (seed % 3) as usize;
            let f = generate_instance(&GenSpec::new(k, 15, 1 + (seed % 60) as usize, seed).unwrap()).unwrap();
            for policy in [PickPolicy::FirstLiteral, PickPolicy::SeededRandom(seed ^ 0xABCD)] {
                let out = run_dla(&f, policy);
                assert_eq!(out.state.total_votes(), f.num_clauses() as u64);
                assert!(verify_half_bound(&f, &out.assignment));
            }
        }
    }

    #[test]
    fn seeded_policy_is_reproducible() {
        let f = generate_instance(&GenSpec::new(3, 20, 80, 4).unwrap()).unwrap();
        let a = run_dla(&f, PickPolicy::SeededRandom(1));
        assert_eq!(a, run_dla(&f, PickPolicy::SeededRandom(1)));
        assert!(a
            .state
            .picks
            .iter()
            .zip(f.clauses())
            .all(|(p, c)| c.literals().contains(p)));
    }

    #[test]
    fn votes_are_local() {
        let f = CnfFormula::from_clauses(4, &[&[1, -2], &[2, 3], &[-1, 3]]).unwrap();
        let before = run_dla(&f, PickPolicy::FirstLiteral).state.votes;
        let mut clauses = f.clauses().to_vec();
        clauses.push(Clause::from_dimacs(&[4]).unwrap());
        let g = CnfFormula::new(4, clauses).unwrap();
        let after = run_dla(&g, PickPolicy::FirstLiteral).state.votes;
        assert_eq!(before[..6], after[..6]);
        assert_eq!(after[Literal::positive(4).node_index()], 1);
    }
}
