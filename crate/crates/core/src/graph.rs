//! Bipartite factor graphs over formulas and their batched disjoint unions.
//!
//! NSFG has one node per literal (`2i` = `x(i+1)`, `2i+1` = `¬x(i+1)`) and
//! one per clause. ESFG has one node per variable and per clause with
//! separate positive and negative edge sets. Edges are kept in canonical
//! order (by clause, then by left node) and both grouping directions are
//! prebuilt, since message passing aggregates both ways every layer.

use std::sync::Arc;

use thiserror::Error;

use crate::cnf::CnfFormula;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("cannot batch an empty list of graphs")]
    Empty,
    #[error("cannot batch NSFG and ESFG graphs together")]
    MixedKinds,
    #[error("edge ({0}, {1}) out of range")]
    EdgeOutOfRange(usize, usize),
}

/// Row-grouped index lists: row `r` owns `indices[offsets[r]..offsets[r + 1]]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Csr {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl Csr {
    /// Group `(row, col)` pairs by row; columns within a row keep ascending order.
    pub fn from_pairs(num_rows: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut pairs: Vec<(usize, usize)> = pairs.into_iter().collect();
        pairs.sort_unstable();
        let mut offsets = vec![0usize; num_rows + 1];
        for &(r, _) in &pairs {
            offsets[r + 1] += 1;
        }
        for r in 0..num_rows {
            offsets[r + 1] += offsets[r];
        }
        Csr {
            offsets,
            indices: pairs.into_iter().map(|(_, c)| c).collect(),
        }
    }

    pub fn num_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.indices[self.offsets[r]..self.offsets[r + 1]]
    }

    pub fn max_index(&self) -> Option<usize> {
        self.indices.iter().copied().max()
    }
}

/// Edges between `num_left` left nodes (literals or variables) and `num_clauses` clause nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    num_left: usize,
    num_clauses: usize,
    /// For each clause, its left neighbours.
    by_clause: Arc<Csr>,
    /// For each left node, its clause neighbours.
    by_left: Arc<Csr>,
}

impl Adjacency {
    pub fn new(
        num_left: usize,
        num_clauses: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let edges: Vec<(usize, usize)> = edges.into_iter().collect();
        if let Some(&(l, c)) = edges.iter().find(|&&(l, c)| l >= num_left || c >= num_clauses) {
            return Err(GraphError::EdgeOutOfRange(l, c));
        }
        Ok(Adjacency {
            num_left,
            num_clauses,
            by_clause: Arc::new(Csr::from_pairs(num_clauses, edges.iter().map(|&(l, c)| (c, l)))),
            by_left: Arc::new(Csr::from_pairs(num_left, edges.iter().copied())),
        })
    }

    pub fn num_left(&self) -> usize {
        self.num_left
    }

    pub fn num_clauses(&self) -> usize {
        self.num_clauses
    }

    pub fn num_edges(&self) -> usize {
        self.by_clause.nnz()
    }

    pub fn by_clause(&self) -> &Arc<Csr> {
        &self.by_clause
    }

    pub fn by_left(&self) -> &Arc<Csr> {
        &self.by_left
    }

    /// Canonical edge list `(left, clause)`, ordered by clause then left node.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.num_clauses)
            .flat_map(|c| self.by_clause.row(c).iter().map(move |&l| (l, c)))
            .collect()
    }

    pub fn clause_degree(&self, clause: usize) -> usize {
        self.by_clause.row(clause).len()
    }

    pub fn left_degree(&self, left: usize) -> usize {
        self.by_left.row(left).len()
    }

    fn shifted(&self, left_offset: usize, clause_offset: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges()
            .into_iter()
            .map(move |(l, c)| (l + left_offset, c + clause_offset))
    }
}

/// Node-splitting factor graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Nsfg {
    pub num_vars: usize,
    pub num_clauses: usize,
    pub edges: Adjacency,
    /// `flip[l]` is the node of the negation of literal node `l`.
    pub flip: Arc<Vec<usize>>,
}

impl Nsfg {
    pub fn num_literal_nodes(&self) -> usize {
        2 * self.num_vars
    }

    /// Rows of positive literal nodes, one per variable.
    pub fn positive_rows(&self) -> Vec<usize> {
        (0..self.num_vars).map(|i| 2 * i).collect()
    }
}

/// Edge-splitting factor graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Esfg {
    pub num_vars: usize,
    pub num_clauses: usize,
    pub positive: Adjacency,
    pub negative: Adjacency,
}

pub fn build_nsfg(formula: &CnfFormula) -> Nsfg {
    let n = formula.num_vars();
    let m = formula.num_clauses();
    let edges = formula
        .clauses()
        .iter()
        .enumerate()
        .flat_map(|(j, c)| c.literals().iter().map(move |l| (l.node_index(), j)));
    Nsfg {
        num_vars: n,
        num_clauses: m,
        edges: Adjacency::new(2 * n, m, edges).expect("literal nodes within range"),
        flip: Arc::new((0..2 * n).map(|l| l ^ 1).collect()),
    }
}

pub fn build_esfg(formula: &CnfFormula) -> Esfg {
    let n = formula.num_vars();
    let m = formula.num_clauses();
    let occurrences = || {
        formula
            .clauses()
            .iter()
            .enumerate()
            .flat_map(|(j, c)| c.literals().iter().map(move |l| (l, j)))
    };
    let positive = occurrences()
        .filter(|(l, _)| l.is_positive())
        .map(|(l, j)| (l.var_index(), j));
    let negative = occurrences()
        .filter(|(l, _)| !l.is_positive())
        .map(|(l, j)| (l.var_index(), j));
    Esfg {
        num_vars: n,
        num_clauses: m,
        positive: Adjacency::new(n, m, positive).expect("variables within range"),
        negative: Adjacency::new(n, m, negative).expect("variables within range"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphKind {
    Nsfg,
    Esfg,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FactorGraph {
    Nsfg(Nsfg),
    Esfg(Esfg),
}

impl FactorGraph {
    pub fn build(kind: GraphKind, formula: &CnfFormula) -> Self {
        match kind {
            GraphKind::Nsfg => FactorGraph::Nsfg(build_nsfg(formula)),
            GraphKind::Esfg => FactorGraph::Esfg(build_esfg(formula)),
        }
    }

    pub fn kind(&self) -> GraphKind {
        match self {
            FactorGraph::Nsfg(_) => GraphKind::Nsfg,
            FactorGraph::Esfg(_) => GraphKind::Esfg,
        }
    }

    pub fn num_vars(&self) -> usize {
        match self {
            FactorGraph::Nsfg(g) => g.num_vars,
            FactorGraph::Esfg(g) => g.num_vars,
        }
    }

    pub fn num_clauses(&self) -> usize {
        match self {
            FactorGraph::Nsfg(g) => g.num_clauses,
            FactorGraph::Esfg(g) => g.num_clauses,
        }
    }

    /// Literal (NSFG) or variable (ESFG) node count.
    pub fn num_left_nodes(&self) -> usize {
        match self {
            FactorGraph::Nsfg(g) => g.num_literal_nodes(),
            FactorGraph::Esfg(g) => g.num_vars,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_left_nodes() + self.num_clauses()
    }

    pub fn num_edges(&self) -> usize {
        match self {
            FactorGraph::Nsfg(g) => g.edges.num_edges(),
            FactorGraph::Esfg(g) => g.positive.num_edges() + g.negative.num_edges(),
        }
    }
}

/// Node count of a formula's graph, used for batch packing.
pub fn node_count(kind: GraphKind, formula: &CnfFormula) -> usize {
    let left = match kind {
        GraphKind::Nsfg => 2 * formula.num_vars(),
        GraphKind::Esfg => formula.num_vars(),
    };
    left + formula.num_clauses()
}

/// Where one instance lives inside a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InstanceSpan {
    pub num_vars: usize,
    pub num_clauses: usize,
    /// Offset in the combined node numbering (instance-major, left nodes then clauses).
    pub node_offset: usize,
    pub left_offset: usize,
    pub clause_offset: usize,
    pub var_offset: usize,
}

/// Disjoint union of same-kind graphs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchedGraph {
    pub graph: FactorGraph,
    pub instances: Vec<InstanceSpan>,
}

impl BatchedGraph {
    pub fn single(graph: FactorGraph) -> Self {
        let span = InstanceSpan {
            num_vars: graph.num_vars(),
            num_clauses: graph.num_clauses(),
            node_offset: 0,
            left_offset: 0,
            clause_offset: 0,
            var_offset: 0,
        };
        BatchedGraph {
            graph,
            instances: vec![span],
        }
    }

    pub fn kind(&self) -> GraphKind {
        self.graph.kind()
    }

    pub fn node_offsets(&self) -> Vec<usize> {
        self.instances.iter().map(|s| s.node_offset).collect()
    }

    pub fn total_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    /// Split a per-variable vector back into per-instance slices.
    pub fn split_by_instance<'a, T>(&self, per_var: &'a [T]) -> Vec<&'a [T]> {
        self.instances
            .iter()
            .map(|s| &per_var[s.var_offset..s.var_offset + s.num_vars])
            .collect()
    }
}

pub fn batch_graphs(graphs: &[FactorGraph]) -> Result<BatchedGraph, GraphError> {
    let first = graphs.first().ok_or(GraphError::Empty)?;
    let kind = first.kind();
    if graphs.iter().any(|g| g.kind() != kind) {
        return Err(GraphError::MixedKinds);
    }
    let mut instances = Vec::with_capacity(graphs.len());
    let (mut node, mut left, mut clause, mut var) = (0, 0, 0, 0);
    for g in graphs {
        instances.push(InstanceSpan {
            num_vars: g.num_vars(),
            num_clauses: g.num_clauses(),
            node_offset: node,
            left_offset: left,
            clause_offset: clause,
            var_offset: var,
        });
        node += g.num_nodes();
        left += g.num_left_nodes();
        clause += g.num_clauses();
        var += g.num_vars();
    }
    let spans = instances.iter().zip(graphs);
    let graph = match kind {
        GraphKind::Nsfg => {
            let mut edges = Vec::new();
            let mut flip = Vec::with_capacity(left);
            for (s, g) in spans {
                let FactorGraph::Nsfg(g) = g else { unreachable!() };
                edges.extend(g.edges.shifted(s.left_offset, s.clause_offset));
                flip.extend(g.flip.iter().map(|&f| f + s.left_offset));
            }
            FactorGraph::Nsfg(Nsfg {
                num_vars: var,
                num_clauses: clause,
                edges: Adjacency::new(left, clause, edges)?,
                flip: Arc::new(flip),
            })
        }
        GraphKind::Esfg => {
            let mut pos = Vec::new();
            let mut neg = Vec::new();
            for (s, g) in spans {
                let FactorGraph::Esfg(g) = g else { unreachable!() };
                pos.extend(g.positive.shifted(s.left_offset, s.clause_offset));
                neg.extend(g.negative.shifted(s.left_offset, s.clause_offset));
            }
            FactorGraph::Esfg(Esfg {
                num_vars: var,
                num_clauses: clause,
                positive: Adjacency::new(left, clause, pos)?,
                negative: Adjacency::new(left, clause, neg)?,
            })
        }
    };
    Ok(BatchedGraph { graph, instances })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::example_formula;
    use crate::generator::{generate_instance, GenSpec};

    #[test]
    fn example_nsfg_counts() {
        let g = build_nsfg(&example_formula());
        assert_eq!(g.num_literal_nodes(), 6);
        assert_eq!(g.num_clauses, 3);
        assert_eq!(g.edges.num_edges(), 8);
        assert_eq!(g.edges.by_clause().row(0), &[0, 2, 4]);
        assert_eq!(g.edges.by_clause().row(1), &[0, 5]);
        assert_eq!(g.edges.by_clause().row(2), &[1, 3, 5]);
        assert_eq!(g.edges.by_left().row(0), &[0, 1]);
    }

    #[test]
    fn unit_clause_nsfg() {
        let f = CnfFormula::from_clauses(1, &[&[1]]).unwrap();
        let g = build_nsfg(&f);
        assert_eq!((g.num_literal_nodes(), g.num_clauses, g.edges.num_edges()), (2, 1, 1));
        assert_eq!(g.edges.left_degree(1), 0);
    }

    #[test]
    fn example_esfg_edges() {
        let g = build_esfg(&example_formula());
        assert_eq!(g.positive.edges(), vec![(0, 0), (1, 0), (2, 0), (0, 1)]);
        assert_eq!(g.negative.edges(), vec![(2, 1), (0, 2), (1, 2), (2, 2)]);
    }

    #[test]
    fn all_positive_has_no_negative_edges() {
        let f = CnfFormula::from_clauses(3, &[&[1, 2], &[2, 3]]).unwrap();
        assert_eq!(build_esfg(&f).negative.num_edges(), 0);
    }

    #[test]
    fn degree_sums_and_flip() {
        for seed in 0..20 {
            let f = generate_instance(&GenSpec::new(3, 9, 30, seed).unwrap()).unwrap();
            let nsfg = build_nsfg(&f);
            let esfg = build_esfg(&f);
            let widths = f.num_occurrences();
            assert_eq!(nsfg.edges.num_edges(), widths);
            assert_eq!(esfg.positive.num_edges() + esfg.negative.num_edges(), widths);
            let clause_degrees: usize = (0..f.num_clauses()).map(|c| nsfg.edges.clause_degree(c)).sum();
            assert_eq!(clause_degrees, widths);
            for (c, clause) in f.clauses().iter().enumerate() {
                assert_eq!(nsfg.edges.clause_degree(c), clause.width());
                assert!(nsfg.edges.clause_degree(c) >= 1);
            }
            for l in 0..nsfg.num_literal_nodes() {
                assert_ne!(nsfg.flip[l], l);
                assert_eq!(nsfg.flip[nsfg.flip[l]], l);
            }
            let pos: std::collections::HashSet<_> = esfg.positive.edges().into_iter().collect();
            assert!(esfg.negative.edges().iter().all(|e| !pos.contains(e)));
        }
    }

    #[test]
    fn batching_two_examples() {
        let g = FactorGraph::Nsfg(build_nsfg(&example_formula()));
        let b = batch_graphs(&[g.clone(), g.clone()]).unwrap();
        let FactorGraph::Nsfg(ref n) = b.graph else { panic!() };
        assert_eq!(n.num_literal_nodes(), 12);
        assert_eq!(n.num_clauses, 6);
        assert_eq!(n.edges.num_edges(), 16);
        assert_eq!(b.node_offsets(), vec![0, 9]);
        assert_eq!(n.flip[7], 6);
        // No cross-instance edges.
        for (l, c) in n.edges.edges() {
            assert_eq!(l / 6, c / 3);
        }
    }

    #[test]
    fn single_batch_is_identity() {
        let g = FactorGraph::Esfg(build_esfg(&example_formula()));
        let b = batch_graphs(std::slice::from_ref(&g)).unwrap();
        assert_eq!(b.graph, g);
        assert_eq!(b.node_offsets(), vec![0]);
        assert_eq!(b, BatchedGraph::single(g));
    }

    #[test]
    fn unit_instances_are_disconnected() {
        let f = CnfFormula::from_clauses(1, &[&[-1]]).unwrap();
        let graphs: Vec<_> = (0..4).map(|_| FactorGraph::build(GraphKind::Esfg, &f)).collect();
        let b = batch_graphs(&graphs).unwrap();
        let FactorGraph::Esfg(ref e) = b.graph else { panic!() };
        assert_eq!(e.negative.edges(), vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert_eq!(b.total_nodes(), 8);
    }

    #[test]
    fn batching_errors() {
        assert_eq!(batch_graphs(&[]), Err(GraphError::Empty));
        let f = example_formula();
        let mixed = [
            FactorGraph::build(GraphKind::Nsfg, &f),
            FactorGraph::build(GraphKind::Esfg, &f),
        ];
        assert_eq!(batch_graphs(&mixed), Err(GraphError::MixedKinds));
    }
}
