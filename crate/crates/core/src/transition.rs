//! Deterministic-action semantics: applicability, the transition function,
//! regression through successor axioms, and progression of the current-state
//! formula.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::fol::{qm, Atom, CompiledFormula, Formula, ModelSet, Name, State, Term, Universe};
use crate::pram::{DetActionSchema, GroundDetAction, GroundProbAction, Pram};

/// A ground deterministic action with its precondition and every non-frame
/// successor compiled against the universe.
#[derive(Debug)]
pub struct CompiledAction {
    pub action: GroundDetAction,
    pub precondition: Formula,
    pre: CompiledFormula,
    effects: Vec<(usize, CompiledFormula)>,
}

impl CompiledAction {
    pub fn applicable(&self, s: State) -> bool {
        self.pre.eval(s)
    }

    /// Successor state; the caller has checked applicability.
    pub fn apply_unchecked(&self, s: State) -> State {
        let mut t = s;
        for (i, c) in &self.effects {
            t = t.with(*i, c.eval(s));
        }
        t
    }

    pub fn apply(&self, s: State) -> Result<State> {
        if !self.applicable(s) {
            return Err(Error::PreconditionViolated(self.action.to_string()));
        }
        Ok(self.apply_unchecked(s))
    }
}

/// Ground probabilistic action with compiled guards and distributions.
#[derive(Debug)]
pub struct CompiledProb {
    pub action: GroundProbAction,
    pub guards: Vec<Formula>,
    compiled_guards: Vec<CompiledFormula>,
    pub outcomes: Vec<Vec<(GroundDetAction, f64)>>,
}

impl CompiledProb {
    /// Index of the unique partition `s` satisfies.
    pub fn select(&self, s: State) -> Result<usize> {
        let mut hit = None;
        for (i, g) in self.compiled_guards.iter().enumerate() {
            if g.eval(s) {
                if hit.is_some() {
                    return Err(Error::MultiplePartitions(self.action.to_string()));
                }
                hit = Some(i);
            }
        }
        hit.ok_or_else(|| Error::NoPartition(self.action.to_string()))
    }
}

/// Set of states consistent with the history so far, with a formula
/// describing it.
#[derive(Clone, Debug)]
pub struct CurrentStateFormula {
    pub symbolic: Formula,
    pub models: ModelSet,
}

impl CurrentStateFormula {
    pub fn new(u: &Universe, f: &Formula) -> Result<CurrentStateFormula> {
        Ok(CurrentStateFormula {
            symbolic: f.clone(),
            models: u.models(f)?,
        })
    }

    pub fn from_models(u: &Universe, models: ModelSet) -> CurrentStateFormula {
        CurrentStateFormula {
            symbolic: qm::formula_of(u, &models),
            models,
        }
    }

    pub fn is_satisfiable(&self) -> bool {
        !self.models.is_empty()
    }
}

/// A sampled sequence of ground deterministic actions.
#[derive(Clone, Debug)]
pub struct FoParticle {
    pub actions: Vec<GroundDetAction>,
    pub weight: f64,
    pub cur: CurrentStateFormula,
}

/// Transition semantics of one model, caching compiled ground actions.
#[derive(Debug)]
pub struct Dynamics {
    pram: Arc<Pram>,
    det_cache: RwLock<HashMap<GroundDetAction, Arc<CompiledAction>>>,
    prob_cache: RwLock<HashMap<GroundProbAction, Arc<CompiledProb>>>,
}

enum Match {
    Yes(HashMap<Name, Term>),
    No,
}

fn match_pattern(
    pattern: &Atom,
    target: &Atom,
    bind: &HashMap<Name, Name>,
) -> Match {
    if pattern.predicate != target.predicate || pattern.args.len() != target.args.len() {
        return Match::No;
    }
    let mut fresh: HashMap<Name, Term> = HashMap::new();
    for (p, t) in pattern.args.iter().zip(&target.args) {
        let want = match p {
            Term::Const(c) => Some(c),
            Term::Var(v) => bind.get(v),
        };
        let got = match t {
            Term::Const(c) => c,
            Term::Var(_) => return Match::No,
        };
        match (want, p) {
            (Some(c), _) => {
                if c != got {
                    return Match::No;
                }
            }
            (None, Term::Var(v)) => match fresh.get(v) {
                Some(Term::Const(prev)) if prev != got => return Match::No,
                Some(_) => {}
                None => {
                    fresh.insert(v.clone(), Term::Const(got.clone()));
                }
            },
            (None, Term::Const(_)) => unreachable!("constant pattern terms always bind"),
        }
    }
    Match::Yes(fresh)
}

impl Dynamics {
    pub fn new(pram: Arc<Pram>) -> Dynamics {
        Dynamics {
            pram,
            det_cache: RwLock::new(HashMap::new()),
            prob_cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn pram(&self) -> &Pram {
        &self.pram
    }

    pub fn pram_arc(&self) -> &Arc<Pram> {
        &self.pram
    }

    pub fn universe(&self) -> &Universe {
        self.pram.universe()
    }

    fn binding(schema: &DetActionSchema, da: &GroundDetAction) -> HashMap<Name, Name> {
        schema
            .params
            .iter()
            .cloned()
            .zip(da.args.iter().cloned())
            .collect()
    }

    /// Successor condition of ground fluent `g` under the action with the
    /// given schema and binding: the first matching entry, else `g` itself.
    fn successor(schema: &DetActionSchema, bind: &HashMap<Name, Name>, g: &Atom) -> Formula {
        for entry in &schema.successors {
            if let Match::Yes(fresh) = match_pattern(&entry.pattern, g, bind) {
                let mut map: HashMap<Name, Term> = bind
                    .iter()
                    .map(|(k, v)| (k.clone(), Term::Const(v.clone())))
                    .collect();
                map.extend(fresh);
                return entry.formula.subst_terms(&map);
            }
        }
        Formula::Atom(g.clone())
    }

    pub fn compiled(&self, da: &GroundDetAction) -> Result<Arc<CompiledAction>> {
        if let Some(c) = self.det_cache.read().expect("cache lock").get(da) {
            return Ok(c.clone());
        }
        let schema = self.pram.check_det(da)?;
        let u = self.universe();
        let bind = Self::binding(schema, da);
        let precondition = self.pram.precondition(da)?;
        let pre = u.compile(&precondition)?;
        let mut effects = Vec::new();
        for (i, g) in u.fluents().iter().enumerate() {
            let succ = Self::successor(schema, &bind, g);
            if succ != Formula::Atom(g.clone()) {
                effects.push((i, u.compile(&succ)?));
            }
        }
        let c = Arc::new(CompiledAction {
            action: da.clone(),
            precondition,
            pre,
            effects,
        });
        self.det_cache
            .write()
            .expect("cache lock")
            .insert(da.clone(), c.clone());
        Ok(c)
    }

    pub fn compiled_prob(&self, a: &GroundProbAction) -> Result<Arc<CompiledProb>> {
        if let Some(c) = self.prob_cache.read().expect("cache lock").get(a) {
            return Ok(c.clone());
        }
        let k = self.pram.partition_count(a)?;
        let mut guards = Vec::with_capacity(k);
        let mut compiled_guards = Vec::with_capacity(k);
        let mut outcomes = Vec::with_capacity(k);
        for i in 0..k {
            let g = self.pram.guard(a, i)?;
            compiled_guards.push(self.universe().compile(&g)?);
            guards.push(g);
            outcomes.push(self.pram.outcomes(a, i)?);
        }
        let c = Arc::new(CompiledProb {
            action: a.clone(),
            guards,
            compiled_guards,
            outcomes,
        });
        self.prob_cache
            .write()
            .expect("cache lock")
            .insert(a.clone(), c.clone());
        Ok(c)
    }

    pub fn applicable(&self, s: State, da: &GroundDetAction) -> Result<bool> {
        Ok(self.compiled(da)?.applicable(s))
    }

    pub fn apply(&self, s: State, da: &GroundDetAction) -> Result<State> {
        self.compiled(da)?.apply(s)
    }

    /// Formula true before `da` exactly when `f` is true after it, for
    /// states where `da` is applicable.
    pub fn regress(&self, f: &Formula, da: &GroundDetAction) -> Result<Formula> {
        if let Some(v) = f.free_vars().into_iter().next() {
            return Err(Error::FreeVariable(v.to_string()));
        }
        let schema = self.pram.check_det(da)?;
        let bind = Self::binding(schema, da);
        let raw = self.regress_rec(f, schema, &bind)?;
        Ok(self.universe().fold_rigid(&raw))
    }

    fn regress_rec(
        &self,
        f: &Formula,
        schema: &DetActionSchema,
        bind: &HashMap<Name, Name>,
    ) -> Result<Formula> {
        let u = self.universe();
        Ok(match f {
            Formula::True | Formula::False => f.clone(),
            Formula::Atom(a) => {
                if a.is_ground() {
                    if u.index_of(a).is_none() {
                        Formula::False
                    } else {
                        Self::successor(schema, bind, a)
                    }
                } else if schema.touches(&a.predicate) {
                    // Quantifiers over touched predicates are expanded first.
                    unreachable!("variable atom over a changed fluent survived expansion")
                } else {
                    f.clone()
                }
            }
            Formula::Not(a) => Formula::not(self.regress_rec(a, schema, bind)?),
            Formula::And(xs) => Formula::And(
                xs.iter()
                    .map(|x| self.regress_rec(x, schema, bind))
                    .collect::<Result<_>>()?,
            ),
            Formula::Or(xs) => Formula::Or(
                xs.iter()
                    .map(|x| self.regress_rec(x, schema, bind))
                    .collect::<Result<_>>()?,
            ),
            Formula::Implies(a, b) => Formula::implies(
                self.regress_rec(a, schema, bind)?,
                self.regress_rec(b, schema, bind)?,
            ),
            Formula::Iff(a, b) => Formula::iff(
                self.regress_rec(a, schema, bind)?,
                self.regress_rec(b, schema, bind)?,
            ),
            Formula::Forall(v, body) | Formula::Exists(v, body) => {
                let universal = matches!(f, Formula::Forall(..));
                if mentions_touched(body, v, schema) {
                    let constants = u.constants();
                    if constants.is_empty() {
                        return Err(Error::EmptyUniverse);
                    }
                    let mut parts = Vec::with_capacity(constants.len());
                    for c in constants {
                        let mut map = HashMap::new();
                        map.insert(v.clone(), Term::Const(c.clone()));
                        parts.push(self.regress_rec(&body.subst_terms(&map), schema, bind)?);
                    }
                    if universal {
                        Formula::And(parts)
                    } else {
                        Formula::Or(parts)
                    }
                } else {
                    let body = Box::new(self.regress_rec(body, schema, bind)?);
                    if universal {
                        Formula::Forall(v.clone(), body)
                    } else {
                        Formula::Exists(v.clone(), body)
                    }
                }
            }
        })
    }

    /// Regression through a whole action sequence, last action first.
    pub fn reg_seq(&self, f: &Formula, actions: &[GroundDetAction]) -> Result<Formula> {
        let mut g = f.clone();
        for da in actions.iter().rev() {
            g = self.regress(&g, da)?;
        }
        Ok(g)
    }

    /// Forward image of `states` under `da`; inapplicable states drop out.
    pub fn image(&self, states: &ModelSet, da: &GroundDetAction) -> Result<ModelSet> {
        let c = self.compiled(da)?;
        let mut out = ModelSet::empty(states.fluent_count());
        for s in states.iter() {
            if c.applicable(s) {
                out.insert(c.apply_unchecked(s));
            }
        }
        Ok(out)
    }

    /// Progression through `da` followed by filtering with observation `o`.
    /// An empty result means no model survives.
    pub fn progress(
        &self,
        cur: &CurrentStateFormula,
        da: &GroundDetAction,
        o: &Formula,
    ) -> Result<CurrentStateFormula> {
        let u = self.universe();
        let obs = u.models(o)?;
        let next = self.image(&cur.models, da)?.intersect(&obs);
        Ok(CurrentStateFormula::from_models(u, next))
    }
}

/// Whether `v` (free in `f`) occurs as an argument of a fluent the action
/// may change.
fn mentions_touched(f: &Formula, v: &Name, schema: &DetActionSchema) -> bool {
    match f {
        Formula::True | Formula::False => false,
        Formula::Atom(a) => {
            schema.touches(&a.predicate)
                && a.args.iter().any(|t| matches!(t, Term::Var(w) if w == v))
        }
        Formula::Not(a) => mentions_touched(a, v, schema),
        Formula::And(xs) | Formula::Or(xs) => xs.iter().any(|x| mentions_touched(x, v, schema)),
        Formula::Implies(a, b) | Formula::Iff(a, b) => {
            mentions_touched(a, v, schema) || mentions_touched(b, v, schema)
        }
        Formula::Forall(w, body) | Formula::Exists(w, body) => {
            w != v && mentions_touched(body, v, schema)
        }
    }
}

/// Whether `da` can execute in `s`.
pub fn applicable(pram: &Arc<Pram>, s: State, da: &GroundDetAction) -> Result<bool> {
    Dynamics::new(pram.clone()).applicable(s, da)
}

pub fn apply(pram: &Arc<Pram>, s: State, da: &GroundDetAction) -> Result<State> {
    Dynamics::new(pram.clone()).apply(s, da)
}

pub fn regress(pram: &Arc<Pram>, f: &Formula, da: &GroundDetAction) -> Result<Formula> {
    Dynamics::new(pram.clone()).regress(f, da)
}

pub fn reg_seq(pram: &Arc<Pram>, f: &Formula, actions: &[GroundDetAction]) -> Result<Formula> {
    Dynamics::new(pram.clone()).reg_seq(f, actions)
}

pub fn progress(
    pram: &Arc<Pram>,
    cur: &CurrentStateFormula,
    da: &GroundDetAction,
    o: &Formula,
) -> Result<CurrentStateFormula> {
    Dynamics::new(pram.clone()).progress(cur, da, o)
}
