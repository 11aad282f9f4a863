//! CNF formulas, truth assignments and the DIMACS exchange format.
//!
//! Literals are stored DIMACS-style as signed integers: `3` is `x3` and `-3`
//! is `¬x3`. Polarity is a view over the sign.

use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CnfError {
    #[error("literal must reference a variable >= 1")]
    ZeroVariable,
    #[error("empty clause")]
    EmptyClause,
    #[error("variable {0} occurs more than once in a clause")]
    DuplicateVariable(u32),
    #[error("variable {var} out of range (formula has {num_vars} variables)")]
    VariableOutOfRange { var: u32, num_vars: usize },
    #[error("formula must have at least one variable")]
    NoVariables,
    #[error("assignment has {got} values but the formula has {expected} variables")]
    AssignmentLength { expected: usize, got: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: missing `p cnf` header before clauses")]
    MissingHeader { line: usize },
    #[error("line {line}: duplicate `p cnf` header")]
    DuplicateHeader { line: usize },
    #[error("line {line}: malformed header: {reason}")]
    BadHeader { line: usize, reason: String },
    #[error("line {line}: invalid token `{token}`")]
    BadToken { line: usize, token: String },
    #[error("line {line}: {source}")]
    Clause {
        line: usize,
        #[source]
        source: CnfError,
    },
    #[error("header declares {expected} clauses but {found} were read")]
    ClauseCount { expected: usize, found: usize },
    #[error("last clause is not terminated by 0")]
    Unterminated,
    #[error("no `p cnf` header found")]
    NoHeader,
}

/// A literal in DIMACS encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal(i32);

impl Literal {
    pub fn new(var: u32, positive: bool) -> Result<Self, CnfError> {
        if var == 0 || var > i32::MAX as u32 {
            return Err(CnfError::ZeroVariable);
        }
        let v = var as i32;
        Ok(Literal(if positive { v } else { -v }))
    }

    pub fn from_dimacs(code: i32) -> Result<Self, CnfError> {
        if code == 0 || code == i32::MIN {
            return Err(CnfError::ZeroVariable);
        }
        Ok(Literal(code))
    }

    pub fn positive(var: u32) -> Self {
        Self::new(var, true).expect("variable index must be >= 1")
    }

    pub fn negative(var: u32) -> Self {
        Self::new(var, false).expect("variable index must be >= 1")
    }

    /// 1-based variable index.
    pub fn var(self) -> u32 {
        self.0.unsigned_abs()
    }

    /// 0-based variable index.
    pub fn var_index(self) -> usize {
        self.var() as usize - 1
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn negate(self) -> Self {
        Literal(-self.0)
    }

    pub fn dimacs(self) -> i32 {
        self.0
    }

    /// Literal node index in the interleaved layout: `2i` for `x(i+1)`, `2i+1` for `¬x(i+1)`.
    pub fn node_index(self) -> usize {
        2 * self.var_index() + usize::from(!self.is_positive())
    }

    pub fn eval(self, assignment: &Assignment) -> bool {
        assignment.get(self.var_index()) == self.is_positive()
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_positive() {
            write!(f, "x{}", self.var())
        } else {
            write!(f, "¬x{}", self.var())
        }
    }
}

/// A non-empty disjunction of literals over pairwise distinct variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Clause {
    literals: Vec<Literal>,
}

impl Clause {
    pub fn new(literals: Vec<Literal>) -> Result<Self, CnfError> {
        if literals.is_empty() {
            return Err(CnfError::EmptyClause);
        }
        for (i, a) in literals.iter().enumerate() {
            if literals[..i].iter().any(|b| b.var() == a.var()) {
                return Err(CnfError::DuplicateVariable(a.var()));
            }
        }
        Ok(Clause { literals })
    }

    pub fn from_dimacs(codes: &[i32]) -> Result<Self, CnfError> {
        let literals = codes
            .iter()
            .map(|&c| Literal::from_dimacs(c))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(literals)
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }

    pub fn width(&self) -> usize {
        self.literals.len()
    }

    pub fn is_satisfied(&self, assignment: &Assignment) -> bool {
        self.literals.iter().any(|l| l.eval(assignment))
    }
}

/// A CNF formula over variables `1..=num_vars`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CnfFormula {
    num_vars: usize,
    clauses: Vec<Clause>,
    k: Option<usize>,
}

impl CnfFormula {
    pub fn new(num_vars: usize, clauses: Vec<Clause>) -> Result<Self, CnfError> {
        if num_vars == 0 {
            return Err(CnfError::NoVariables);
        }
        for lit in clauses.iter().flat_map(|c| c.literals()) {
            if lit.var() as usize > num_vars {
                return Err(CnfError::VariableOutOfRange {
                    var: lit.var(),
                    num_vars,
                });
            }
        }
        let k = match clauses.first() {
            Some(first) if clauses.iter().all(|c| c.width() == first.width()) => Some(first.width()),
            _ => None,
        };
        Ok(CnfFormula { num_vars, clauses, k })
    }

    /// Convenience constructor from DIMACS-coded clauses.
    pub fn from_clauses(num_vars: usize, clauses: &[&[i32]]) -> Result<Self, CnfError> {
        let clauses = clauses
            .iter()
            .map(|c| Clause::from_dimacs(c))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(num_vars, clauses)
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    /// Uniform clause width, when every clause has the same number of literals.
    pub fn k(&self) -> Option<usize> {
        self.k
    }

    /// Total number of literal occurrences.
    pub fn num_occurrences(&self) -> usize {
        self.clauses.iter().map(Clause::width).sum()
    }

    pub fn eval(&self, assignment: &Assignment) -> Result<EvalResult, CnfError> {
        if assignment.len() != self.num_vars {
            return Err(CnfError::AssignmentLength {
                expected: self.num_vars,
                got: assignment.len(),
            });
        }
        let satisfied = self.clauses.iter().filter(|c| c.is_satisfied(assignment)).count();
        Ok(EvalResult {
            satisfied,
            total: self.clauses.len(),
        })
    }

    /// Formula with every literal's polarity flipped.
    pub fn flip_polarities(&self) -> CnfFormula {
        let clauses = self
            .clauses
            .iter()
            .map(|c| Clause {
                literals: c.literals.iter().map(|l| l.negate()).collect(),
            })
            .collect();
        CnfFormula {
            num_vars: self.num_vars,
            clauses,
            k: self.k,
        }
    }
}

/// Count clauses satisfied by `assignment`.
pub fn eval_assignment(formula: &CnfFormula, assignment: &Assignment) -> Result<EvalResult, CnfError> {
    formula.eval(assignment)
}

/// Truth values indexed by 0-based variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Assignment {
    values: Vec<bool>,
}

impl Assignment {
    pub fn new(values: Vec<bool>) -> Self {
        Assignment { values }
    }

    pub fn all(num_vars: usize, value: bool) -> Self {
        Assignment {
            values: vec![value; num_vars],
        }
    }

    /// Parse a `0`/`1` bitstring, index i = variable i+1.
    pub fn from_bits(bits: &str) -> Option<Self> {
        bits.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(Assignment::new)
    }

    pub fn to_bits(&self) -> String {
        self.values.iter().map(|&v| if v { '1' } else { '0' }).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, index: usize) -> bool {
        self.values[index]
    }

    pub fn set(&mut self, index: usize, value: bool) {
        self.values[index] = value;
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn complement(&self) -> Assignment {
        Assignment {
            values: self.values.iter().map(|v| !v).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalResult {
    pub satisfied: usize,
    pub total: usize,
}

/// Parse DIMACS CNF text.
///
/// Comment lines (`c ...`) may appear anywhere. Clauses may span lines;
/// each is terminated by `0`.
pub fn parse_dimacs(text: &str) -> Result<CnfFormula, ParseError> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses = Vec::new();
    let mut current: Vec<i32> = Vec::new();
    let mut current_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
            continue;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(ParseError::DuplicateHeader { line: line_no });
            }
            header = Some(parse_header(line, line_no)?);
            continue;
        }
        let Some((num_vars, _)) = header else {
            return Err(ParseError::MissingHeader { line: line_no });
        };
        for token in line.split_whitespace() {
            let code: i32 = token.parse().map_err(|_| ParseError::BadToken {
                line: line_no,
                token: token.to_string(),
            })?;
            if current.is_empty() {
                current_line = line_no;
            }
            if code == 0 {
                let clause = Clause::from_dimacs(&current).map_err(|source| ParseError::Clause {
                    line: current_line,
                    source,
                })?;
                if let Some(lit) = clause.literals().iter().find(|l| l.var() as usize > num_vars) {
                    return Err(ParseError::Clause {
                        line: current_line,
                        source: CnfError::VariableOutOfRange {
                            var: lit.var(),
                            num_vars,
                        },
                    });
                }
                clauses.push(clause);
                current.clear();
            } else {
                current.push(code);
            }
        }
    }

    let (num_vars, num_clauses) = header.ok_or(ParseError::NoHeader)?;
    if !current.is_empty() {
        return Err(ParseError::Unterminated);
    }
    if clauses.len() != num_clauses {
        return Err(ParseError::ClauseCount {
            expected: num_clauses,
            found: clauses.len(),
        });
    }
    CnfFormula::new(num_vars, clauses).map_err(|source| ParseError::Clause { line: 0, source })
}

fn parse_header(line: &str, line_no: usize) -> Result<(usize, usize), ParseError> {
    let bad = |reason: &str| ParseError::BadHeader {
        line: line_no,
        reason: reason.to_string(),
    };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "p" || fields[1] != "cnf" {
        return Err(bad("expected `p cnf <vars> <clauses>`"));
    }
    let n: usize = fields[2].parse().map_err(|_| bad("variable count"))?;
    let m: usize = fields[3].parse().map_err(|_| bad("clause count"))?;
    if n == 0 {
        return Err(bad("variable count must be positive"));
    }
    Ok((n, m))
}

/// Serialize to DIMACS: header line then one zero-terminated clause per line.
pub fn write_dimacs(formula: &CnfFormula) -> String {
    let mut out = String::new();
    writeln!(out, "p cnf {} {}", formula.num_vars(), formula.num_clauses()).unwrap();
    for clause in formula.clauses() {
        for lit in clause.literals() {
            write!(out, "{} ", lit.dimacs()).unwrap();
        }
        out.push_str("0\n");
    }
    out
}

/// The three-clause example used throughout the tests:
/// `(x1 ∨ x2 ∨ x3) ∧ (x1 ∨ ¬x3) ∧ (¬x1 ∨ ¬x2 ∨ ¬x3)`.
pub fn example_formula() -> CnfFormula {
    CnfFormula::from_clauses(3, &[&[1, 2, 3], &[1, -3], &[-1, -2, -3]]).unwrap()
}
