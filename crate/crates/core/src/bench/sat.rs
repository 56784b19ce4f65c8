//! 3-CNF formulas: generation, satisfiability and DIMACS.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Largest variable count decided by exhaustive enumeration.
pub const BRUTE_FORCE_MAX_VARS: u32 = 12;
/// Default clause-to-variable ratio for generation.
pub const DEFAULT_CLAUSE_RATIO: f64 = 4.26;
/// Node limit for the search used above the brute-force range.
pub const DPLL_NODE_LIMIT: u64 = 5_000_000;

pub type Clause = [i32; 3];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CnfFormula {
    pub num_vars: u32,
    pub clauses: Vec<Clause>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SatError {
    #[error("clause {index}: {message}")]
    BadClause { index: usize, message: String },
    #[error("{0}")]
    Generation(String),
    #[error("DIMACS line {line}: {message}")]
    Dimacs { line: usize, message: String },
}

impl CnfFormula {
    /// Checks every clause has three distinct in-range variables.
    pub fn new(num_vars: u32, clauses: Vec<Clause>) -> Result<Self, SatError> {
        for (index, c) in clauses.iter().enumerate() {
            let bad = |message: String| SatError::BadClause { index, message };
            for &lit in c {
                if lit == 0 || lit.unsigned_abs() > num_vars {
                    return Err(bad(format!("literal {lit} outside 1..={num_vars}")));
                }
            }
            let vars: BTreeSet<u32> = c.iter().map(|l| l.unsigned_abs()).collect();
            if vars.len() != 3 {
                return Err(bad("variables must be distinct".into()));
            }
        }
        Ok(CnfFormula { num_vars, clauses })
    }

    /// Index of the first clause `values` (indexed from x1) leaves false.
    pub fn first_unsatisfied(&self, values: &[bool]) -> Option<usize> {
        self.clauses.iter().position(|c| {
            !c.iter().any(|&l| {
                let v = values[l.unsigned_abs() as usize - 1];
                if l > 0 { v } else { !v }
            })
        })
    }

    pub fn is_satisfied_by(&self, values: &[bool]) -> bool {
        self.first_unsatisfied(values).is_none()
    }

    /// Satisfiability by enumerating all assignments. Only for small
    /// formulas.
    pub fn brute_force_sat(&self) -> Option<Vec<bool>> {
        assert!(self.num_vars <= 24, "enumeration over {} variables", self.num_vars);
        let n = self.num_vars as usize;
        (0u64..1 << n)
            .map(|bits| (0..n).map(|i| bits >> i & 1 == 1).collect::<Vec<_>>())
            .find(|vals| self.is_satisfied_by(vals))
    }

    /// Exhaustive below [`BRUTE_FORCE_MAX_VARS`], bounded search above.
    /// `None` when the search ran out of nodes.
    pub fn satisfiable(&self) -> Option<bool> {
        if self.num_vars <= BRUTE_FORCE_MAX_VARS {
            Some(self.brute_force_sat().is_some())
        } else {
            self.dpll(DPLL_NODE_LIMIT).map(|m| m.is_some())
        }
    }

    /// Davis-Putnam-Logemann-Loveland search with unit propagation.
    /// Returns `None` if more than `node_limit` branches were tried.
    pub fn dpll(&self, node_limit: u64) -> Option<Option<Vec<bool>>> {
        let mut assign = vec![None; self.num_vars as usize];
        let mut nodes = 0;
        let r = dpll_rec(&self.clauses, &mut assign, &mut nodes, node_limit)?;
        Some(r.then(|| assign.iter().map(|v| v.unwrap_or(false)).collect()))
    }

    /// Readable rendering used in task questions.
    pub fn render(&self) -> String {
        let lit = |l: i32| if l > 0 { format!("x{l}") } else { format!("¬x{}", -l) };
        self.clauses
            .iter()
            .map(|c| format!("({} ∨ {} ∨ {})", lit(c[0]), lit(c[1]), lit(c[2])))
            .collect::<Vec<_>>()
            .join(" ∧ ")
    }

    pub fn to_dimacs(&self) -> String {
        let mut s = format!("p cnf {} {}\n", self.num_vars, self.clauses.len());
        for c in &self.clauses {
            let _ = writeln!(s, "{} {} {} 0", c[0], c[1], c[2]);
        }
        s
    }

    pub fn from_dimacs(text: &str) -> Result<Self, SatError> {
        let mut header: Option<(u32, usize)> = None;
        let mut lits: Vec<(i32, usize)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('c') || t.starts_with('%') {
                continue;
            }
            if t.starts_with('p') {
                let parts: Vec<&str> = t.split_whitespace().collect();
                let parsed = match parts.as_slice() {
                    ["p", "cnf", v, c] => v.parse().ok().zip(c.parse().ok()),
                    _ => None,
                };
                header = Some(parsed.ok_or(SatError::Dimacs { line: line_no, message: "bad header".into() })?);
                continue;
            }
            if header.is_none() {
                return Err(SatError::Dimacs { line: line_no, message: "clause before header".into() });
            }
            for tok in t.split_whitespace() {
                let l: i32 = tok
                    .parse()
                    .map_err(|_| SatError::Dimacs { line: line_no, message: format!("bad literal `{tok}`") })?;
                lits.push((l, line_no));
            }
        }
        let (num_vars, num_clauses) =
            header.ok_or(SatError::Dimacs { line: 0, message: "missing `p cnf` header".into() })?;
        let mut clauses = Vec::new();
        let mut cur = Vec::new();
        for (l, line) in lits {
            if l == 0 {
                let c: Clause = cur
                    .as_slice()
                    .try_into()
                    .map_err(|_| SatError::Dimacs { line, message: format!("clause has {} literals, expected 3", cur.len()) })?;
                clauses.push(c);
                cur.clear();
            } else {
                cur.push(l);
            }
        }
        if !cur.is_empty() {
            return Err(SatError::Dimacs { line: text.lines().count(), message: "unterminated clause".into() });
        }
        if clauses.len() != num_clauses {
            return Err(SatError::Dimacs {
                line: 0,
                message: format!("header declares {num_clauses} clauses, found {}", clauses.len()),
            });
        }
        CnfFormula::new(num_vars, clauses)
    }
}

fn dpll_rec(clauses: &[Clause], assign: &mut Vec<Option<bool>>, nodes: &mut u64, limit: u64) -> Option<bool> {
    *nodes += 1;
    if *nodes > limit {
        return None;
    }
    let mut trail = Vec::new();
    // Unit propagation.
    loop {
        let mut unit = None;
        let mut conflict = false;
        for c in clauses {
            let mut unassigned = None;
            let mut free = 0;
            let mut sat = false;
            for &l in c {
                match assign[l.unsigned_abs() as usize - 1] {
                    Some(v) if v == (l > 0) => {
                        sat = true;
                        break;
                    }
                    Some(_) => {}
                    None => {
                        free += 1;
                        unassigned = Some(l);
                    }
                }
            }
            if sat {
                continue;
            }
            if free == 0 {
                conflict = true;
                break;
            }
            if free == 1 {
                unit = unassigned;
                break;
            }
        }
        if conflict {
            for v in trail {
                assign[v] = None;
            }
            return Some(false);
        }
        match unit {
            Some(l) => {
                let v = l.unsigned_abs() as usize - 1;
                assign[v] = Some(l > 0);
                trail.push(v);
            }
            None => break,
        }
    }
    let Some(branch) = assign.iter().position(Option::is_none) else {
        return Some(true);
    };
    for value in [true, false] {
        assign[branch] = Some(value);
        match dpll_rec(clauses, assign, nodes, limit) {
            Some(true) => return Some(true),
            Some(false) => {}
            None => {
                assign[branch] = None;
                for v in trail {
                    assign[v] = None;
                }
                return None;
            }
        }
    }
    assign[branch] = None;
    for v in trail {
        assign[v] = None;
    }
    Some(false)
}

/// Random 3-CNF with `round(num_vars × ratio)` distinct clauses.
pub fn random_formula(num_vars: u32, clause_ratio: f64, seed: u64) -> Result<CnfFormula, SatError> {
    if num_vars < 3 {
        return Err(SatError::Generation("need at least 3 variables".into()));
    }
    if !(clause_ratio > 0.0) || !clause_ratio.is_finite() {
        return Err(SatError::Generation(format!("clause ratio {clause_ratio} must be positive")));
    }
    let m = (num_vars as f64 * clause_ratio).round() as u64;
    let n = num_vars as u64;
    let distinct = n * (n - 1) * (n - 2) / 6 * 8;
    if m > distinct / 2 {
        return Err(SatError::Generation(format!(
            "{m} clauses over {num_vars} variables is too many to sample without duplicates"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut clauses = Vec::with_capacity(m as usize);
    while clauses.len() < m as usize {
        let mut vars: Vec<usize> = sample(&mut rng, num_vars as usize, 3).into_vec();
        vars.sort_unstable();
        let c: Clause = [0, 1, 2].map(|i| {
            let v = vars[i] as i32 + 1;
            if rng.random_bool(0.5) { v } else { -v }
        });
        if seen.insert(c) {
            clauses.push(c);
        }
    }
    CnfFormula::new(num_vars, clauses)
}
