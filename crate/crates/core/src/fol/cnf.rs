//! Clause-form conversion by distribution (no auxiliary variables).

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

use super::{Atom, Formula};

/// Clause-count ceiling for the distribution step.
const MAX_CLAUSES: usize = 1 << 18;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub atom: Atom,
    pub positive: bool,
}

impl Literal {
    pub fn negated(&self) -> Literal {
        Literal {
            atom: self.atom.clone(),
            positive: !self.positive,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.positive {
            write!(f, "{}", self.atom)
        } else {
            write!(f, "~{}", self.atom)
        }
    }
}

/// A disjunction of literals, kept sorted and duplicate-free.
pub type Clause = BTreeSet<Literal>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClauseSet {
    pub clauses: Vec<Clause>,
}

impl ClauseSet {
    pub fn is_trivially_true(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn has_empty_clause(&self) -> bool {
        self.clauses.iter().any(|c| c.is_empty())
    }

    pub fn to_formula(&self) -> Formula {
        let clauses: Vec<Formula> = self
            .clauses
            .iter()
            .map(|c| {
                let lits: Vec<Formula> = c
                    .iter()
                    .map(|l| {
                        let a = Formula::Atom(l.atom.clone());
                        if l.positive {
                            a
                        } else {
                            Formula::not(a)
                        }
                    })
                    .collect();
                match lits.len() {
                    0 => Formula::False,
                    1 => lits.into_iter().next().expect("one literal"),
                    _ => Formula::Or(lits),
                }
            })
            .collect();
        match clauses.len() {
            0 => Formula::True,
            1 => clauses.into_iter().next().expect("one clause"),
            _ => Formula::And(clauses),
        }
    }
}

impl fmt::Display for ClauseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, c) in self.clauses.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "[")?;
            for (j, l) in c.iter().enumerate() {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{l}")?;
            }
            write!(f, "]")?;
        }
        write!(f, "}}")
    }
}

/// Converts a ground formula to an equivalent clause set.
///
/// `true` yields no clauses and `false` a single empty clause.
pub fn to_cnf(f: &Formula) -> Result<ClauseSet> {
    if !f.is_ground() {
        return Err(Error::NotGround);
    }
    let clauses = cnf(f, true)?;
    Ok(ClauseSet { clauses })
}

fn tautology(c: &Clause) -> bool {
    c.iter().any(|l| !l.positive && c.contains(&l.negated()))
}

/// Removes subsumed clauses while keeping first-seen order.
fn reduce(mut clauses: Vec<Clause>) -> Vec<Clause> {
    clauses.retain(|c| !tautology(c));
    let mut seen = BTreeSet::new();
    clauses.retain(|c| seen.insert(c.clone()));
    let mut order: Vec<usize> = (0..clauses.len()).collect();
    order.sort_by_key(|&i| clauses[i].len());
    let mut keep = vec![true; clauses.len()];
    for (pos, &i) in order.iter().enumerate() {
        if !keep[i] {
            continue;
        }
        for &j in &order[pos + 1..] {
            if keep[j] && clauses[i].is_subset(&clauses[j]) {
                keep[j] = false;
            }
        }
    }
    clauses
        .into_iter()
        .zip(keep)
        .filter_map(|(c, k)| k.then_some(c))
        .collect()
}

// CNF of `f` when `positive`, of `~f` otherwise.
fn cnf(f: &Formula, positive: bool) -> Result<Vec<Clause>> {
    Ok(match (f, positive) {
        (Formula::True, true) | (Formula::False, false) => Vec::new(),
        (Formula::True, false) | (Formula::False, true) => vec![Clause::new()],
        (Formula::Atom(a), _) => vec![Clause::from([Literal {
            atom: a.clone(),
            positive,
        }])],
        (Formula::Not(a), _) => cnf(a, !positive)?,
        (Formula::And(xs), true) | (Formula::Or(xs), false) => {
            let mut out = Vec::new();
            for x in xs {
                out.extend(cnf(x, positive)?);
            }
            reduce(out)
        }
        (Formula::And(xs), false) | (Formula::Or(xs), true) => {
            let mut acc: Vec<Clause> = vec![Clause::new()];
            for x in xs {
                let part = cnf(x, positive)?;
                acc = distribute(&acc, &part)?;
            }
            acc
        }
        (Formula::Implies(a, b), true) => {
            distribute(&cnf(a, false)?, &cnf(b, true)?)?
        }
        (Formula::Implies(a, b), false) => {
            let mut out = cnf(a, true)?;
            out.extend(cnf(b, false)?);
            reduce(out)
        }
        (Formula::Iff(a, b), _) => {
            // a <=> b  ==  (~a | b) & (a | ~b); its negation swaps one side.
            let mut out = distribute(&cnf(a, false)?, &cnf(b, positive)?)?;
            out.extend(distribute(&cnf(a, true)?, &cnf(b, !positive)?)?);
            reduce(out)
        }
        (Formula::Forall(..) | Formula::Exists(..), _) => return Err(Error::NotGround),
    })
}

// CNF of the disjunction of two CNFs.
fn distribute(a: &[Clause], b: &[Clause]) -> Result<Vec<Clause>> {
    if a.len().saturating_mul(b.len()) > MAX_CLAUSES {
        return Err(Error::UniverseTooLarge {
            what: "clause set".to_string(),
            size: (a.len() as u128) * (b.len() as u128),
            cap: MAX_CLAUSES as u128,
        });
    }
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            let mut c = x.clone();
            c.extend(y.iter().cloned());
            out.push(c);
        }
    }
    Ok(reduce(out))
}
