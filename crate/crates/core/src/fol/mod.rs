//! Finite-domain first-order logic over fluent atoms.
//!
//! Formulas are plain immutable trees. Truth is always decided over a fixed
//! finite universe: quantifiers are expanded into conjunctions/disjunctions
//! over the constants before any evaluation (see [`ground`]).

mod cnf;
pub(crate) mod parse;
pub(crate) mod qm;
mod simplify;
mod universe;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub use cnf::{to_cnf, Clause, ClauseSet, Literal};
pub use parse::{parse_atom, parse_formula};
pub(crate) use parse::{Parser, Token};
pub use simplify::simplify;
pub use universe::{
    enumeration_cap, models, CompiledFormula, FluentSignature, ModelSet, State, Universe,
    DEFAULT_ENUMERATION_CAP,
};

/// Interned-ish identifier. Cheap to clone and shareable across threads.
pub type Name = Arc<str>;

pub fn name(s: &str) -> Name {
    Arc::from(s)
}

/// Variables are written `?x` in text; the stored name omits the `?`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(Name),
    Const(Name),
}

impl Term {
    pub fn var(s: &str) -> Term {
        Term::Var(name(s.trim_start_matches('?')))
    }

    pub fn constant(s: &str) -> Term {
        Term::Const(name(s))
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn as_const(&self) -> Option<&Name> {
        match self {
            Term::Const(c) => Some(c),
            Term::Var(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub predicate: Name,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: &str, args: Vec<Term>) -> Atom {
        Atom {
            predicate: name(predicate),
            args,
        }
    }

    /// Ground atom from constant names.
    pub fn ground(predicate: &str, args: &[&str]) -> Atom {
        Atom::new(predicate, args.iter().map(|a| Term::constant(a)).collect())
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| !t.is_var())
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.predicate)?;
        if !self.args.is_empty() {
            write!(f, "(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{a}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
    Forall(Name, Box<Formula>),
    Exists(Name, Box<Formula>),
}

impl From<Atom> for Formula {
    fn from(a: Atom) -> Self {
        Formula::Atom(a)
    }
}

impl Formula {
    pub fn atom(predicate: &str, args: &[&str]) -> Formula {
        Formula::Atom(Atom::ground(predicate, args))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(fs: Vec<Formula>) -> Formula {
        Formula::And(fs)
    }

    pub fn or(fs: Vec<Formula>) -> Formula {
        Formula::Or(fs)
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: Formula, b: Formula) -> Formula {
        Formula::Iff(Box::new(a), Box::new(b))
    }

    pub fn forall(v: &str, body: Formula) -> Formula {
        Formula::Forall(name(v.trim_start_matches('?')), Box::new(body))
    }

    pub fn exists(v: &str, body: Formula) -> Formula {
        Formula::Exists(name(v.trim_start_matches('?')), Box::new(body))
    }

    pub fn is_quantifier_free(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => true,
            Formula::Not(a) => a.is_quantifier_free(),
            Formula::And(xs) | Formula::Or(xs) => xs.iter().all(Formula::is_quantifier_free),
            Formula::Implies(a, b) | Formula::Iff(a, b) => {
                a.is_quantifier_free() && b.is_quantifier_free()
            }
            Formula::Forall(..) | Formula::Exists(..) => false,
        }
    }

    /// Quantifier-free and variable-free.
    pub fn is_ground(&self) -> bool {
        self.is_quantifier_free() && self.free_vars().is_empty()
    }

    pub fn free_vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => {
                for t in &a.args {
                    if let Term::Var(v) = t {
                        if !bound.contains(v) {
                            out.insert(v.clone());
                        }
                    }
                }
            }
            Formula::Not(a) => a.collect_free(bound, out),
            Formula::And(xs) | Formula::Or(xs) => {
                for x in xs {
                    x.collect_free(bound, out);
                }
            }
            Formula::Implies(a, b) | Formula::Iff(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Formula::Forall(v, body) | Formula::Exists(v, body) => {
                bound.push(v.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    /// All atoms in the formula, in first-occurrence order, without duplicates.
    pub fn atoms(&self) -> Vec<Atom> {
        let mut out = Vec::new();
        self.visit_atoms(&mut |a| {
            if !out.contains(a) {
                out.push(a.clone());
            }
        });
        out
    }

    pub fn visit_atoms(&self, f: &mut impl FnMut(&Atom)) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => f(a),
            Formula::Not(a) => a.visit_atoms(f),
            Formula::And(xs) | Formula::Or(xs) => xs.iter().for_each(|x| x.visit_atoms(f)),
            Formula::Implies(a, b) | Formula::Iff(a, b) => {
                a.visit_atoms(f);
                b.visit_atoms(f);
            }
            Formula::Forall(_, body) | Formula::Exists(_, body) => body.visit_atoms(f),
        }
    }

    /// Replaces free variables by terms, renaming bound variables where a
    /// replacement term would otherwise be captured.
    pub fn subst_terms(&self, map: &HashMap<Name, Term>) -> Formula {
        if map.is_empty() {
            return self.clone();
        }
        match self {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Atom(a) => Formula::Atom(Atom {
                predicate: a.predicate.clone(),
                args: a
                    .args
                    .iter()
                    .map(|t| match t {
                        Term::Var(v) => map.get(v).cloned().unwrap_or_else(|| t.clone()),
                        Term::Const(_) => t.clone(),
                    })
                    .collect(),
            }),
            Formula::Not(a) => Formula::Not(Box::new(a.subst_terms(map))),
            Formula::And(xs) => Formula::And(xs.iter().map(|x| x.subst_terms(map)).collect()),
            Formula::Or(xs) => Formula::Or(xs.iter().map(|x| x.subst_terms(map)).collect()),
            Formula::Implies(a, b) => {
                Formula::Implies(Box::new(a.subst_terms(map)), Box::new(b.subst_terms(map)))
            }
            Formula::Iff(a, b) => {
                Formula::Iff(Box::new(a.subst_terms(map)), Box::new(b.subst_terms(map)))
            }
            Formula::Forall(v, body) | Formula::Exists(v, body) => {
                let mut inner = map.clone();
                inner.remove(v);
                let captured = inner
                    .values()
                    .any(|t| matches!(t, Term::Var(w) if w == v));
                let (var, body) = if captured {
                    let mut avoid = body.free_vars();
                    for t in inner.values() {
                        if let Term::Var(w) = t {
                            avoid.insert(w.clone());
                        }
                    }
                    let fresh = fresh_name(v, &avoid);
                    let mut rename = HashMap::new();
                    rename.insert(v.clone(), Term::Var(fresh.clone()));
                    (fresh, body.subst_terms(&rename))
                } else {
                    (v.clone(), (**body).clone())
                };
                let body = Box::new(body.subst_terms(&inner));
                match self {
                    Formula::Forall(..) => Formula::Forall(var, body),
                    _ => Formula::Exists(var, body),
                }
            }
        }
    }

    /// Structural normal form used for equality: flattened and/or, sorted
    /// and deduplicated children.
    pub fn canonical(&self) -> Formula {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => self.clone(),
            Formula::Not(a) => Formula::Not(Box::new(a.canonical())),
            Formula::And(xs) => {
                let mut kids = Vec::new();
                for x in xs {
                    match x.canonical() {
                        Formula::And(inner) => kids.extend(inner),
                        other => kids.push(other),
                    }
                }
                kids.sort();
                kids.dedup();
                Formula::And(kids)
            }
            Formula::Or(xs) => {
                let mut kids = Vec::new();
                for x in xs {
                    match x.canonical() {
                        Formula::Or(inner) => kids.extend(inner),
                        other => kids.push(other),
                    }
                }
                kids.sort();
                kids.dedup();
                Formula::Or(kids)
            }
            Formula::Implies(a, b) => Formula::implies(a.canonical(), b.canonical()),
            Formula::Iff(a, b) => {
                let (a, b) = (a.canonical(), b.canonical());
                if a <= b {
                    Formula::iff(a, b)
                } else {
                    Formula::iff(b, a)
                }
            }
            Formula::Forall(v, b) => Formula::Forall(v.clone(), Box::new(b.canonical())),
            Formula::Exists(v, b) => Formula::Exists(v.clone(), Box::new(b.canonical())),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => 1,
            Formula::Not(a) => 1 + a.size(),
            Formula::And(xs) | Formula::Or(xs) => 1 + xs.iter().map(Formula::size).sum::<usize>(),
            Formula::Implies(a, b) | Formula::Iff(a, b) => 1 + a.size() + b.size(),
            Formula::Forall(_, b) | Formula::Exists(_, b) => 1 + b.size(),
        }
    }
}

fn fresh_name(base: &Name, avoid: &BTreeSet<Name>) -> Name {
    (1..)
        .map(|i| name(&format!("{base}_{i}")))
        .find(|n| !avoid.contains(n))
        .expect("unbounded iterator")
}

/// Binds free variables to constants. Every binding target must be one of
/// `constants`.
pub fn substitute(
    f: &Formula,
    binding: &HashMap<Name, Name>,
    constants: &[Name],
) -> Result<Formula> {
    let mut map = HashMap::with_capacity(binding.len());
    for (v, c) in binding {
        if !constants.contains(c) {
            return Err(Error::UnknownConstant(c.to_string()));
        }
        map.insert(v.clone(), Term::Const(c.clone()));
    }
    Ok(f.subst_terms(&map))
}

/// Expands every quantifier over `constants`: `forall` becomes a conjunction
/// and `exists` a disjunction of the instantiated bodies.
pub fn ground(f: &Formula, constants: &[Name]) -> Result<Formula> {
    match f {
        Formula::True | Formula::False | Formula::Atom(_) => Ok(f.clone()),
        Formula::Not(a) => Ok(Formula::Not(Box::new(ground(a, constants)?))),
        Formula::And(xs) => Ok(Formula::And(
            xs.iter().map(|x| ground(x, constants)).collect::<Result<_>>()?,
        )),
        Formula::Or(xs) => Ok(Formula::Or(
            xs.iter().map(|x| ground(x, constants)).collect::<Result<_>>()?,
        )),
        Formula::Implies(a, b) => Ok(Formula::implies(ground(a, constants)?, ground(b, constants)?)),
        Formula::Iff(a, b) => Ok(Formula::iff(ground(a, constants)?, ground(b, constants)?)),
        Formula::Forall(v, body) | Formula::Exists(v, body) => {
            if constants.is_empty() {
                return Err(Error::EmptyUniverse);
            }
            let mut parts = Vec::with_capacity(constants.len());
            for c in constants {
                let mut map = HashMap::new();
                map.insert(v.clone(), Term::Const(c.clone()));
                parts.push(ground(&body.subst_terms(&map), constants)?);
            }
            if parts.len() == 1 {
                return Ok(parts.pop().expect("one part"));
            }
            Ok(match f {
                Formula::Forall(..) => Formula::And(parts),
                _ => Formula::Or(parts),
            })
        }
    }
}

// Binding strength, loosest first.
fn precedence(f: &Formula) -> u8 {
    match f {
        Formula::Forall(..) | Formula::Exists(..) => 0,
        Formula::Iff(..) => 1,
        Formula::Implies(..) => 2,
        Formula::Or(xs) if xs.len() > 1 => 3,
        Formula::And(xs) if xs.len() > 1 => 4,
        _ => 5,
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Formula, min: u8) -> fmt::Result {
    if precedence(child) < min {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::Not(a) => {
                write!(f, "~")?;
                write_child(f, a, 5)
            }
            Formula::And(xs) | Formula::Or(xs) => {
                if xs.is_empty() {
                    let unit = matches!(self, Formula::And(_));
                    return write!(f, "{unit}");
                }
                let (sep, prec) = if matches!(self, Formula::And(_)) {
                    (" & ", 5)
                } else {
                    (" | ", 4)
                };
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, "{sep}")?;
                    }
                    write_child(f, x, if xs.len() == 1 { 0 } else { prec })?;
                }
                Ok(())
            }
            Formula::Implies(a, b) => {
                write_child(f, a, 3)?;
                write!(f, " => ")?;
                write_child(f, b, 2)
            }
            Formula::Iff(a, b) => {
                write_child(f, a, 2)?;
                write!(f, " <=> ")?;
                write_child(f, b, 2)
            }
            Formula::Forall(v, b) => write!(f, "forall ?{v} . {b}"),
            Formula::Exists(v, b) => write!(f, "exists ?{v} . {b}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts(cs: &[&str]) -> Vec<Name> {
        cs.iter().map(|c| name(c)).collect()
    }

    fn f(s: &str) -> Formula {
        parse_formula(s).unwrap()
    }

    #[test]
    fn substitute_binds_free_variable() {
        let mut b = HashMap::new();
        b.insert(name("o"), name("O"));
        let out = substitute(&f("In(?o)"), &b, &consts(&["O"])).unwrap();
        assert_eq!(out, f("In(O)"));
    }

    #[test]
    fn substitute_empty_binding_is_identity() {
        let g = f("forall ?o . In(?o) => At(?o,L2)");
        assert_eq!(substitute(&g, &HashMap::new(), &[]).unwrap(), g);
    }

    #[test]
    fn substitute_partial_leaves_other_vars_free() {
        let mut b = HashMap::new();
        b.insert(name("o"), name("O"));
        let out = substitute(&f("At(?o,?l)"), &b, &consts(&["O", "L1"])).unwrap();
        assert_eq!(out, f("At(O,?l)"));
        assert_eq!(out.free_vars().into_iter().collect::<Vec<_>>(), vec![name("l")]);
    }

    #[test]
    fn substitute_rejects_unknown_constant() {
        let mut b = HashMap::new();
        b.insert(name("o"), name("Q"));
        assert!(matches!(
            substitute(&f("In(?o)"), &b, &consts(&["O"])),
            Err(Error::UnknownConstant(c)) if c == "Q"
        ));
    }

    #[test]
    fn substitution_avoids_capture() {
        let g = f("exists ?y . R(?x,?y)");
        let mut m = HashMap::new();
        m.insert(name("x"), Term::var("y"));
        let out = g.subst_terms(&m);
        assert_eq!(out, f("exists ?y_1 . R(?y,?y_1)"));
    }

    #[test]
    fn ground_forall_and_exists() {
        let cs = consts(&["O", "D"]);
        assert_eq!(ground(&f("forall ?o . In(?o)"), &cs).unwrap(), f("In(O) & In(D)"));
        let ls = consts(&["L1", "L2"]);
        assert_eq!(
            ground(&f("exists ?l . At(B,?l)"), &ls).unwrap(),
            f("At(B,L1) | At(B,L2)")
        );
        assert_eq!(
            ground(&f("forall ?o . In(?o) => At(?o,L2)"), &consts(&["O"])).unwrap(),
            f("In(O) => At(O,L2)")
        );
    }

    #[test]
    fn ground_empty_universe_errors() {
        assert!(matches!(
            ground(&f("forall ?o . In(?o)"), &[]),
            Err(Error::EmptyUniverse)
        ));
        assert_eq!(ground(&f("In(O)"), &[]).unwrap(), f("In(O)"));
    }

    #[test]
    fn ground_is_idempotent() {
        let cs = consts(&["A", "B"]);
        let g = ground(&f("forall ?x . exists ?y . R(?x,?y) | P(?y)"), &cs).unwrap();
        assert_eq!(ground(&g, &cs).unwrap(), g);
    }

    #[test]
    fn display_round_trips_through_parser() {
        for s in [
            "In(O) | At(O,L2)",
            "~(A & B) => C | D",
            "(A <=> B) <=> C",
            "forall ?o . In(?o) => At(?o,L2)",
            "A & (exists ?x . P(?x)) & B",
            "~~A",
            "(A => B) => C",
        ] {
            let g = f(s);
            assert_eq!(f(&g.to_string()), g, "{s} printed as {g}");
        }
        assert_eq!(f("In(O) | At(O,L2)").to_string(), "In(O) | At(O,L2)");
    }

    #[test]
    fn canonical_ignores_order_and_nesting() {
        assert_eq!(f("A & (B & A)").canonical(), f("B & A").canonical());
        assert_ne!(f("A & B").canonical(), f("A | B").canonical());
    }
}
