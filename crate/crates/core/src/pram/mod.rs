//! Probabilistic relational action models: language, deterministic action
//! axioms, partitioned probabilistic actions and the weighted-formula prior.

mod parse;
mod validate;
mod write;

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::fol::{
    name, parse_atom, substitute, Atom, FluentSignature, Formula, Name, State, Term, Universe,
};

pub use parse::parse_domain;
pub use validate::{validate, ValidationReport, Violation};
pub use write::write_domain;

#[derive(Clone, Debug, PartialEq)]
pub struct FluentDecl {
    pub name: Name,
    /// One constant domain per argument position.
    pub domains: Vec<Vec<Name>>,
    /// Whether the domains were written out (otherwise every position ranges
    /// over all constants).
    pub explicit_domains: bool,
}

impl FluentDecl {
    pub fn arity(&self) -> usize {
        self.domains.len()
    }
}

#[derive(Clone, Debug)]
pub struct Language {
    pub constants: Vec<Name>,
    pub fluents: Vec<FluentDecl>,
    universe: Universe,
}

impl PartialEq for Language {
    fn eq(&self, other: &Self) -> bool {
        self.constants == other.constants && self.fluents == other.fluents
    }
}

impl Language {
    pub fn new(constants: Vec<Name>, fluents: Vec<FluentDecl>) -> Result<Language> {
        let sigs = fluents
            .iter()
            .map(|f| FluentSignature {
                name: f.name.clone(),
                domains: f.domains.clone(),
            })
            .collect();
        let universe = Universe::new(constants.clone(), sigs)?;
        Ok(Language {
            constants,
            fluents,
            universe,
        })
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn fluent(&self, name: &str) -> Option<&FluentDecl> {
        self.fluents.iter().find(|f| &*f.name == name)
    }

    pub fn is_constant(&self, c: &str) -> bool {
        self.constants.iter().any(|k| &**k == c)
    }
}

/// One successor-state entry: for ground fluents matching `pattern`, the
/// value after the action is `formula` evaluated before it.
///
/// Pattern arguments are action parameters, constants, or fresh variables
/// that bind to the matched argument. The first matching entry of a fluent
/// wins; fluents no entry matches keep their value.
#[derive(Clone, Debug, PartialEq)]
pub struct SuccessorAxiom {
    pub pattern: Atom,
    pub formula: Formula,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetActionSchema {
    pub name: Name,
    pub params: Vec<Name>,
    pub precondition: Formula,
    pub successors: Vec<SuccessorAxiom>,
}

impl DetActionSchema {
    /// Whether any entry can change `predicate`.
    pub fn touches(&self, predicate: &str) -> bool {
        self.successors.iter().any(|s| &*s.pattern.predicate == predicate)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub action: Name,
    pub args: Vec<Term>,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Guard {
    When(Formula),
    /// The negation of every earlier guard of the same action.
    Otherwise,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub guard: Guard,
    pub outcomes: Vec<Outcome>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbActionSchema {
    pub name: Name,
    pub params: Vec<Name>,
    pub partitions: Vec<Partition>,
}

impl ProbActionSchema {
    /// Guard `i` with `otherwise` expanded.
    pub fn guard(&self, i: usize) -> Formula {
        match &self.partitions[i].guard {
            Guard::When(f) => f.clone(),
            Guard::Otherwise => {
                let prior: Vec<Formula> = self.partitions[..i]
                    .iter()
                    .filter_map(|p| match &p.guard {
                        Guard::When(f) => Some(f.clone()),
                        Guard::Otherwise => None,
                    })
                    .collect();
                match prior.len() {
                    0 => Formula::True,
                    1 => Formula::not(prior.into_iter().next().expect("one guard")),
                    _ => Formula::not(Formula::Or(prior)),
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedFormula {
    pub weight: f64,
    pub formula: Formula,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MlnPrior {
    pub formulas: Vec<WeightedFormula>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pram {
    pub language: Language,
    pub det_actions: Vec<DetActionSchema>,
    pub prob_actions: Vec<ProbActionSchema>,
    pub prior: MlnPrior,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundDetAction {
    pub name: Name,
    pub args: Vec<Name>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundProbAction {
    pub name: Name,
    pub args: Vec<Name>,
}

fn write_call(f: &mut fmt::Formatter<'_>, n: &Name, args: &[Name]) -> fmt::Result {
    write!(f, "{n}")?;
    if !args.is_empty() {
        write!(f, "({})", args.iter().map(|a| &**a).collect::<Vec<_>>().join(","))?;
    }
    Ok(())
}

impl fmt::Display for GroundDetAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_call(f, &self.name, &self.args)
    }
}

impl fmt::Display for GroundProbAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_call(f, &self.name, &self.args)
    }
}

fn call_parts(src: &str) -> Result<(Name, Vec<Name>)> {
    let a = parse_atom(src)?;
    let mut args = Vec::with_capacity(a.args.len());
    for t in a.args {
        match t {
            Term::Const(c) => args.push(c),
            Term::Var(v) => return Err(Error::FreeVariable(v.to_string())),
        }
    }
    Ok((a.predicate, args))
}

impl GroundDetAction {
    pub fn new(name_: &str, args: &[&str]) -> GroundDetAction {
        GroundDetAction {
            name: name(name_),
            args: args.iter().map(|a| name(a)).collect(),
        }
    }
}

impl GroundProbAction {
    pub fn new(name_: &str, args: &[&str]) -> GroundProbAction {
        GroundProbAction {
            name: name(name_),
            args: args.iter().map(|a| name(a)).collect(),
        }
    }
}

fn binding(params: &[Name], args: &[Name]) -> HashMap<Name, Name> {
    params.iter().cloned().zip(args.iter().cloned()).collect()
}

impl Pram {
    pub fn universe(&self) -> &Universe {
        self.language.universe()
    }

    pub fn det_action(&self, n: &str) -> Option<&DetActionSchema> {
        self.det_actions.iter().find(|d| &*d.name == n)
    }

    pub fn prob_action(&self, n: &str) -> Option<&ProbActionSchema> {
        self.prob_actions.iter().find(|p| &*p.name == n)
    }

    fn check_args(&self, what: &str, params: usize, args: &[Name]) -> Result<()> {
        if params != args.len() {
            return Err(Error::InvalidArgument(format!(
                "{what} takes {params} argument(s), got {}",
                args.len()
            )));
        }
        for a in args {
            if !self.language.is_constant(a) {
                return Err(Error::UnknownConstant(a.to_string()));
            }
        }
        Ok(())
    }

    /// Checks a ground deterministic action against its schema.
    pub fn check_det(&self, da: &GroundDetAction) -> Result<&DetActionSchema> {
        let schema = self
            .det_action(&da.name)
            .ok_or_else(|| Error::UnknownAction(da.name.to_string()))?;
        self.check_args(&da.name, schema.params.len(), &da.args)?;
        Ok(schema)
    }

    pub fn check_prob(&self, a: &GroundProbAction) -> Result<&ProbActionSchema> {
        let schema = self
            .prob_action(&a.name)
            .ok_or_else(|| Error::UnknownAction(a.name.to_string()))?;
        self.check_args(&a.name, schema.params.len(), &a.args)?;
        Ok(schema)
    }

    /// Parses text like `MvWithObj(B,L1,L2)` into a checked ground action.
    pub fn parse_det(&self, src: &str) -> Result<GroundDetAction> {
        let (n, args) = call_parts(src)?;
        let da = GroundDetAction { name: n, args };
        self.check_det(&da)?;
        Ok(da)
    }

    pub fn parse_prob(&self, src: &str) -> Result<GroundProbAction> {
        let (n, args) = call_parts(src)?;
        let a = GroundProbAction { name: n, args };
        self.check_prob(&a)?;
        Ok(a)
    }

    /// Ground precondition of `da`.
    pub fn precondition(&self, da: &GroundDetAction) -> Result<Formula> {
        let schema = self.check_det(da)?;
        substitute(
            &schema.precondition,
            &binding(&schema.params, &da.args),
            &self.language.constants,
        )
    }

    /// Guard `i` of `a`, closed under `a`'s binding.
    pub fn guard(&self, a: &GroundProbAction, i: usize) -> Result<Formula> {
        let schema = self.check_prob(a)?;
        substitute(
            &schema.guard(i),
            &binding(&schema.params, &a.args),
            &self.language.constants,
        )
    }

    pub fn partition_count(&self, a: &GroundProbAction) -> Result<usize> {
        Ok(self.check_prob(a)?.partitions.len())
    }

    /// Distribution of partition `i` of `a` over ground deterministic actions.
    pub fn outcomes(&self, a: &GroundProbAction, i: usize) -> Result<Vec<(GroundDetAction, f64)>> {
        let schema = self.check_prob(a)?;
        let bind = binding(&schema.params, &a.args);
        schema.partitions[i]
            .outcomes
            .iter()
            .map(|o| {
                let args = o
                    .args
                    .iter()
                    .map(|t| match t {
                        Term::Const(c) => Ok(c.clone()),
                        Term::Var(v) => bind
                            .get(v)
                            .cloned()
                            .ok_or_else(|| Error::FreeVariable(v.to_string())),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((
                    GroundDetAction {
                        name: o.action.clone(),
                        args,
                    },
                    o.probability,
                ))
            })
            .collect()
    }

    /// Every ground deterministic action that some partition of `a` can emit,
    /// in first-appearance order.
    pub fn executions(&self, a: &GroundProbAction) -> Result<Vec<GroundDetAction>> {
        let mut out: Vec<GroundDetAction> = Vec::new();
        for i in 0..self.partition_count(a)? {
            for (da, _) in self.outcomes(a, i)? {
                if !out.contains(&da) {
                    out.push(da);
                }
            }
        }
        Ok(out)
    }

    /// The unique partition of `a` whose guard `s` satisfies, with its
    /// distribution.
    pub fn select_partition(
        &self,
        a: &GroundProbAction,
        s: State,
    ) -> Result<(usize, Vec<(GroundDetAction, f64)>)> {
        let mut hit = None;
        for i in 0..self.partition_count(a)? {
            if self.universe().evaluate(s, &self.guard(a, i)?)? {
                if hit.is_some() {
                    return Err(Error::MultiplePartitions(a.to_string()));
                }
                hit = Some(i);
            }
        }
        let i = hit.ok_or_else(|| Error::NoPartition(a.to_string()))?;
        Ok((i, self.outcomes(a, i)?))
    }

    /// All groundings of a schema's parameters over the constants.
    pub fn groundings(&self, params: usize) -> Vec<Vec<Name>> {
        let mut out: Vec<Vec<Name>> = vec![Vec::new()];
        for _ in 0..params {
            out = out
                .into_iter()
                .flat_map(|t| {
                    self.language.constants.iter().map(move |c| {
                        let mut t = t.clone();
                        t.push(c.clone());
                        t
                    })
                })
                .collect();
        }
        out
    }

    /// All ground probabilistic actions.
    pub fn ground_prob_actions(&self) -> Vec<GroundProbAction> {
        self.prob_actions
            .iter()
            .flat_map(|p| {
                self.groundings(p.params.len())
                    .into_iter()
                    .map(|args| GroundProbAction {
                        name: p.name.clone(),
                        args,
                    })
            })
            .collect()
    }

    /// Parses and checks a closed formula against this language.
    pub fn formula(&self, src: &str) -> Result<Formula> {
        let f = crate::fol::parse_formula(src)?;
        if let Some(v) = f.free_vars().into_iter().next() {
            return Err(Error::FreeVariable(v.to_string()));
        }
        self.universe().check_formula(&f)?;
        Ok(f)
    }
}
