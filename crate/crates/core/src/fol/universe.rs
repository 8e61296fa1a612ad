//! The finite set of ground fluents, states over it, and compiled evaluation.
//!
//! Each fluent is declared with one constant domain per argument position. Ground
//! atoms outside those domains are rigidly false: they never belong to a state
//! and fold to `false` wherever they occur.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

use super::{ground, name, simplify, Atom, Formula, Name, Term};

pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 22;

/// State-enumeration cap, overridable through `LOGIPARTICLE_CAP`.
pub fn enumeration_cap() -> u64 {
    std::env::var("LOGIPARTICLE_CAP")
        .ok()
        .and_then(|v| v.trim().parse::<u64>().ok())
        .filter(|&v| v > 0)
        .unwrap_or(DEFAULT_ENUMERATION_CAP)
}

/// Total truth assignment: bit `i` is the value of ground fluent `i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State(pub u64);

impl State {
    #[inline]
    pub fn get(self, i: usize) -> bool {
        (self.0 >> i) & 1 == 1
    }

    #[inline]
    pub fn with(self, i: usize, value: bool) -> State {
        if value {
            State(self.0 | (1 << i))
        } else {
            State(self.0 & !(1 << i))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FluentSignature {
    pub name: Name,
    pub domains: Vec<Vec<Name>>,
}

#[derive(Clone, Debug)]
pub struct Universe {
    constants: Vec<Name>,
    signatures: Vec<FluentSignature>,
    fluents: Vec<Atom>,
    index: HashMap<Atom, usize>,
    cap: u64,
}

impl Universe {
    pub fn new(constants: Vec<Name>, signatures: Vec<FluentSignature>) -> Result<Universe> {
        let mut fluents = Vec::new();
        for sig in &signatures {
            for d in &sig.domains {
                for c in d {
                    if !constants.contains(c) {
                        return Err(Error::UnknownConstant(c.to_string()));
                    }
                }
            }
            let mut tuples: Vec<Vec<Name>> = vec![Vec::new()];
            for d in &sig.domains {
                tuples = tuples
                    .into_iter()
                    .flat_map(|t| {
                        d.iter().map(move |c| {
                            let mut t = t.clone();
                            t.push(c.clone());
                            t
                        })
                    })
                    .collect();
            }
            for t in tuples {
                fluents.push(Atom {
                    predicate: sig.name.clone(),
                    args: t.into_iter().map(Term::Const).collect(),
                });
            }
        }
        if fluents.len() > 64 {
            return Err(Error::UniverseTooLarge {
                what: "ground fluents".to_string(),
                size: fluents.len() as u128,
                cap: 64,
            });
        }
        let index = fluents
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        Ok(Universe {
            constants,
            signatures,
            fluents,
            index,
            cap: enumeration_cap(),
        })
    }

    /// Universe where every fluent ranges over all constants.
    pub fn full(constants: &[&str], fluents: &[(&str, usize)]) -> Result<Universe> {
        let cs: Vec<Name> = constants.iter().map(|c| name(c)).collect();
        let sigs = fluents
            .iter()
            .map(|(f, k)| FluentSignature {
                name: name(f),
                domains: vec![cs.clone(); *k],
            })
            .collect();
        Universe::new(cs, sigs)
    }

    pub fn with_cap(mut self, cap: u64) -> Universe {
        self.cap = cap;
        self
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    pub fn constants(&self) -> &[Name] {
        &self.constants
    }

    pub fn signatures(&self) -> &[FluentSignature] {
        &self.signatures
    }

    pub fn signature(&self, predicate: &str) -> Option<&FluentSignature> {
        self.signatures.iter().find(|s| &*s.name == predicate)
    }

    pub fn len(&self) -> usize {
        self.fluents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fluents.is_empty()
    }

    pub fn fluents(&self) -> &[Atom] {
        &self.fluents
    }

    pub fn fluent(&self, i: usize) -> &Atom {
        &self.fluents[i]
    }

    pub fn index_of(&self, a: &Atom) -> Option<usize> {
        self.index.get(a).copied()
    }

    pub fn num_states(&self) -> u128 {
        1u128 << self.fluents.len()
    }

    /// Errors unless all states can be enumerated under the cap.
    pub fn check_enumerable(&self) -> Result<()> {
        if self.num_states() > self.cap as u128 {
            return Err(Error::UniverseTooLarge {
                what: format!("2^{} states", self.fluents.len()),
                size: self.num_states(),
                cap: self.cap as u128,
            });
        }
        Ok(())
    }

    pub fn states(&self) -> impl Iterator<Item = State> {
        let n = self.num_states() as u64;
        (0..n).map(State)
    }

    /// Whether `a` can ever be true: declared predicate, right arity, and every
    /// constant argument inside its domain. Variables are treated as possible.
    pub fn atom_possible(&self, a: &Atom) -> bool {
        match self.signature(&a.predicate) {
            Some(sig) if sig.domains.len() == a.args.len() => {
                a.args.iter().zip(&sig.domains).all(|(t, d)| match t {
                    Term::Const(c) => d.contains(c),
                    Term::Var(_) => true,
                })
            }
            _ => false,
        }
    }

    fn check_atom(&self, a: &Atom) -> Result<()> {
        match self.signature(&a.predicate) {
            None => Err(Error::UnknownFluent(a.predicate.to_string())),
            Some(sig) if sig.domains.len() != a.args.len() => Err(Error::UnknownFluent(format!(
                "{}/{}",
                a.predicate,
                a.args.len()
            ))),
            Some(_) => {
                for t in &a.args {
                    if let Term::Const(c) = t {
                        if !self.constants.contains(c) {
                            return Err(Error::UnknownConstant(c.to_string()));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// Checks every atom against the declared fluents and constants.
    pub fn check_formula(&self, f: &Formula) -> Result<()> {
        let mut err = None;
        f.visit_atoms(&mut |a| {
            if err.is_none() {
                if let Err(e) = self.check_atom(a) {
                    err = Some(e);
                }
            }
        });
        err.map_or(Ok(()), Err)
    }

    /// Replaces ground atoms that lie outside the fluent domains by `false`.
    pub fn fold_rigid(&self, f: &Formula) -> Formula {
        simplify(&self.fold_rigid_raw(f))
    }

    fn fold_rigid_raw(&self, f: &Formula) -> Formula {
        match f {
            Formula::True | Formula::False => f.clone(),
            Formula::Atom(a) => {
                if a.is_ground() && !self.index.contains_key(a) {
                    Formula::False
                } else {
                    f.clone()
                }
            }
            Formula::Not(a) => Formula::not(self.fold_rigid_raw(a)),
            Formula::And(xs) => Formula::And(xs.iter().map(|x| self.fold_rigid_raw(x)).collect()),
            Formula::Or(xs) => Formula::Or(xs.iter().map(|x| self.fold_rigid_raw(x)).collect()),
            Formula::Implies(a, b) => {
                Formula::implies(self.fold_rigid_raw(a), self.fold_rigid_raw(b))
            }
            Formula::Iff(a, b) => Formula::iff(self.fold_rigid_raw(a), self.fold_rigid_raw(b)),
            Formula::Forall(v, b) => Formula::Forall(v.clone(), Box::new(self.fold_rigid_raw(b))),
            Formula::Exists(v, b) => Formula::Exists(v.clone(), Box::new(self.fold_rigid_raw(b))),
        }
    }

    /// Grounds quantifiers and folds rigid atoms: the quantifier-free form
    /// over this universe.
    pub fn ground(&self, f: &Formula) -> Result<Formula> {
        if let Some(v) = f.free_vars().into_iter().next() {
            return Err(Error::FreeVariable(v.to_string()));
        }
        self.check_formula(f)?;
        Ok(self.fold_rigid(&ground(f, &self.constants)?))
    }

    pub fn compile(&self, f: &Formula) -> Result<CompiledFormula> {
        if let Some(v) = f.free_vars().into_iter().next() {
            return Err(Error::FreeVariable(v.to_string()));
        }
        self.check_formula(f)?;
        let g = ground(f, &self.constants)?;
        Ok(CompiledFormula {
            root: self.compile_node(&g),
        })
    }

    fn compile_node(&self, f: &Formula) -> Node {
        match f {
            Formula::True => Node::Const(true),
            Formula::False => Node::Const(false),
            Formula::Atom(a) => match self.index.get(a) {
                Some(&i) => Node::Lit(i),
                None => Node::Const(false),
            },
            Formula::Not(a) => Node::Not(Box::new(self.compile_node(a))),
            Formula::And(xs) => Node::And(xs.iter().map(|x| self.compile_node(x)).collect()),
            Formula::Or(xs) => Node::Or(xs.iter().map(|x| self.compile_node(x)).collect()),
            Formula::Implies(a, b) => Node::Or(vec![
                Node::Not(Box::new(self.compile_node(a))),
                self.compile_node(b),
            ]),
            Formula::Iff(a, b) => Node::Iff(
                Box::new(self.compile_node(a)),
                Box::new(self.compile_node(b)),
            ),
            Formula::Forall(..) | Formula::Exists(..) => {
                unreachable!("formula grounded before compilation")
            }
        }
    }

    pub fn evaluate(&self, s: State, f: &Formula) -> Result<bool> {
        Ok(self.compile(f)?.eval(s))
    }

    pub fn models(&self, f: &Formula) -> Result<ModelSet> {
        self.check_enumerable()?;
        Ok(self.compile(f)?.models(self.len()))
    }

    /// The conjunction of literals pinning down exactly `s`.
    pub fn state_formula(&self, s: State) -> Formula {
        let lits: Vec<Formula> = self
            .fluents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let atom = Formula::Atom(a.clone());
                if s.get(i) {
                    atom
                } else {
                    Formula::not(atom)
                }
            })
            .collect();
        match lits.len() {
            0 => Formula::True,
            1 => lits.into_iter().next().expect("one literal"),
            _ => Formula::And(lits),
        }
    }

    /// State with exactly the listed ground atoms true.
    pub fn state_of(&self, true_atoms: &[Atom]) -> Result<State> {
        let mut s = State(0);
        for a in true_atoms {
            let i = self
                .index_of(a)
                .ok_or_else(|| Error::UnknownFluent(a.to_string()))?;
            s = s.with(i, true);
        }
        Ok(s)
    }

    pub fn describe(&self, s: State) -> String {
        let on: Vec<String> = self
            .fluents
            .iter()
            .enumerate()
            .filter(|(i, _)| s.get(*i))
            .map(|(_, a)| a.to_string())
            .collect();
        format!("{{{}}}", on.join(", "))
    }
}

/// `models(f)` over `u`, refusing above the enumeration cap.
pub fn models(u: &Universe, f: &Formula) -> Result<ModelSet> {
    u.models(f)
}

#[derive(Clone, Debug)]
enum Node {
    Const(bool),
    Lit(usize),
    Not(Box<Node>),
    And(Vec<Node>),
    Or(Vec<Node>),
    Iff(Box<Node>, Box<Node>),
}

/// A ground formula with atoms resolved to fluent indices.
#[derive(Clone, Debug)]
pub struct CompiledFormula {
    root: Node,
}

// Bit j of LOW_PATTERNS[i] is bit i of j.
const LOW_PATTERNS: [u64; 6] = [
    0xAAAA_AAAA_AAAA_AAAA,
    0xCCCC_CCCC_CCCC_CCCC,
    0xF0F0_F0F0_F0F0_F0F0,
    0xFF00_FF00_FF00_FF00,
    0xFFFF_0000_FFFF_0000,
    0xFFFF_FFFF_0000_0000,
];

impl CompiledFormula {
    pub fn eval(&self, s: State) -> bool {
        eval_node(&self.root, s)
    }

    /// Fluent indices the formula depends on, sorted.
    pub fn support(&self) -> Vec<usize> {
        let mut out = Vec::new();
        collect_support(&self.root, &mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Model set over a universe of `n` fluents, computed 64 states at a time.
    pub fn models(&self, n: usize) -> ModelSet {
        let words = ModelSet::word_count(n);
        let mut bits = Vec::with_capacity(words);
        for w in 0..words {
            bits.push(word_node(&self.root, w as u64));
        }
        let mut m = ModelSet { n, bits };
        m.mask_tail();
        m
    }
}

fn eval_node(n: &Node, s: State) -> bool {
    match n {
        Node::Const(b) => *b,
        Node::Lit(i) => s.get(*i),
        Node::Not(a) => !eval_node(a, s),
        Node::And(xs) => xs.iter().all(|x| eval_node(x, s)),
        Node::Or(xs) => xs.iter().any(|x| eval_node(x, s)),
        Node::Iff(a, b) => eval_node(a, s) == eval_node(b, s),
    }
}

fn word_node(n: &Node, w: u64) -> u64 {
    match n {
        Node::Const(b) => {
            if *b {
                u64::MAX
            } else {
                0
            }
        }
        Node::Lit(i) => {
            if *i < 6 {
                LOW_PATTERNS[*i]
            } else if (w >> (*i - 6)) & 1 == 1 {
                u64::MAX
            } else {
                0
            }
        }
        Node::Not(a) => !word_node(a, w),
        Node::And(xs) => xs.iter().fold(u64::MAX, |acc, x| acc & word_node(x, w)),
        Node::Or(xs) => xs.iter().fold(0, |acc, x| acc | word_node(x, w)),
        Node::Iff(a, b) => !(word_node(a, w) ^ word_node(b, w)),
    }
}

fn collect_support(n: &Node, out: &mut Vec<usize>) {
    match n {
        Node::Const(_) => {}
        Node::Lit(i) => out.push(*i),
        Node::Not(a) => collect_support(a, out),
        Node::And(xs) | Node::Or(xs) => xs.iter().for_each(|x| collect_support(x, out)),
        Node::Iff(a, b) => {
            collect_support(a, out);
            collect_support(b, out);
        }
    }
}

/// A set of states over `n` fluents, stored as a bitmap of length 2^n.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ModelSet {
    n: usize,
    bits: Vec<u64>,
}

impl ModelSet {
    fn word_count(n: usize) -> usize {
        if n <= 6 {
            1
        } else {
            1 << (n - 6)
        }
    }

    fn mask_tail(&mut self) {
        if self.n < 6 {
            self.bits[0] &= (1u64 << (1u32 << self.n)) - 1;
        }
    }

    pub fn empty(n: usize) -> ModelSet {
        ModelSet {
            n,
            bits: vec![0; Self::word_count(n)],
        }
    }

    pub fn all(n: usize) -> ModelSet {
        let mut m = ModelSet {
            n,
            bits: vec![u64::MAX; Self::word_count(n)],
        };
        m.mask_tail();
        m
    }

    pub fn from_states(n: usize, states: impl IntoIterator<Item = State>) -> ModelSet {
        let mut m = ModelSet::empty(n);
        for s in states {
            m.insert(s);
        }
        m
    }

    pub fn fluent_count(&self) -> usize {
        self.n
    }

    pub fn contains(&self, s: State) -> bool {
        let i = s.0 as usize;
        (self.bits[i >> 6] >> (i & 63)) & 1 == 1
    }

    pub fn insert(&mut self, s: State) {
        let i = s.0 as usize;
        self.bits[i >> 6] |= 1 << (i & 63);
    }

    pub fn remove(&mut self, s: State) {
        let i = s.0 as usize;
        self.bits[i >> 6] &= !(1 << (i & 63));
    }

    pub fn len(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = State> + '_ {
        self.bits.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let b = rest.trailing_zeros() as u64;
                rest &= rest - 1;
                Some(State(((wi as u64) << 6) | b))
            })
        })
    }

    pub fn intersect(&self, other: &ModelSet) -> ModelSet {
        assert_eq!(self.n, other.n, "model sets over different universes");
        ModelSet {
            n: self.n,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| a & b).collect(),
        }
    }

    pub fn union(&self, other: &ModelSet) -> ModelSet {
        assert_eq!(self.n, other.n, "model sets over different universes");
        ModelSet {
            n: self.n,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| a | b).collect(),
        }
    }

    pub fn complement(&self) -> ModelSet {
        let mut m = ModelSet {
            n: self.n,
            bits: self.bits.iter().map(|w| !w).collect(),
        };
        m.mask_tail();
        m
    }

    pub fn is_subset(&self, other: &ModelSet) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0)
    }
}

impl fmt::Debug for ModelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|s| s.0)).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fol::parse_formula;

    fn briefcase() -> Universe {
        let c = |s: &str| name(s);
        Universe::new(
            vec![c("B"), c("O"), c("L1"), c("L2")],
            vec![
                FluentSignature {
                    name: c("At"),
                    domains: vec![vec![c("B"), c("O")], vec![c("L1"), c("L2")]],
                },
                FluentSignature {
                    name: c("In"),
                    domains: vec![vec![c("O")]],
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn ground_fluents_follow_domains() {
        let u = briefcase();
        let names: Vec<String> = u.fluents().iter().map(|a| a.to_string()).collect();
        assert_eq!(names, ["At(B,L1)", "At(B,L2)", "At(O,L1)", "At(O,L2)", "In(O)"]);
    }

    #[test]
    fn rigid_atoms_are_false() {
        let u = briefcase();
        let f = parse_formula("In(B)").unwrap();
        assert!(u.models(&f).unwrap().is_empty());
        assert_eq!(u.fold_rigid(&parse_formula("In(B) | In(O)").unwrap()).to_string(), "In(O)");
        assert!(matches!(
            u.compile(&parse_formula("Holds(O)").unwrap()),
            Err(Error::UnknownFluent(_))
        ));
    }

    #[test]
    fn bitwise_models_match_pointwise() {
        let u = Universe::full(&["A", "B", "C"], &[("P", 1), ("R", 2)]).unwrap();
        assert_eq!(u.len(), 12);
        let f = parse_formula("forall ?x . P(?x) => exists ?y . R(?x,?y) & ~P(?y)").unwrap();
        let c = u.compile(&f).unwrap();
        let m = c.models(u.len());
        for s in u.states() {
            assert_eq!(m.contains(s), c.eval(s));
        }
    }

    #[test]
    fn small_model_sets_are_masked() {
        let u = Universe::full(&["O"], &[("In", 1)]).unwrap();
        let m = u.models(&parse_formula("In(O)").unwrap()).unwrap();
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![State(1)]);
        assert_eq!(u.models(&Formula::True).unwrap().len(), 2);
        assert!(u.models(&Formula::False).unwrap().is_empty());
        assert_eq!(m.complement().len(), 1);
    }

    #[test]
    fn cap_is_enforced() {
        let u = Universe::full(&["A", "B", "C"], &[("R", 2)]).unwrap().with_cap(256);
        assert!(matches!(
            u.models(&Formula::True),
            Err(Error::UniverseTooLarge { .. })
        ));
    }
}
