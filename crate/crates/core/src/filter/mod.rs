//! First-order particle filtering.
//!
//! A particle is a sequence of ground deterministic actions. Its value for a
//! query is the prior probability of the regressed query given the set of
//! initial states from which the sequence runs and agrees with every
//! observation (the particle's origin).

mod resample;
mod sample;

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::fol::{qm, to_cnf, ClauseSet, Formula};
use crate::pram::{GroundDetAction, GroundProbAction, Pram};
use crate::prior::PriorModel;
use crate::transition::{CurrentStateFormula, Dynamics, FoParticle};

pub use resample::{
    derive_seed, ess, normalize, resample, rng_for, sample_index, splitmix64, ResampleScheme,
};
pub use sample::{fofa, s_actions, sr_actions, FilterOptions, Sampler, SampleSet, DEFAULT_RETRIES};

/// A query over a sequence of probabilistic actions and observations.
/// `observations[0]` holds before the first action and `observations[t]`
/// after action `t`.
#[derive(Clone, Debug)]
pub struct FilterProblem {
    pub pram: Arc<Pram>,
    pub actions: Vec<GroundProbAction>,
    pub observations: Vec<Formula>,
    pub query: Formula,
}

impl FilterProblem {
    pub fn new(
        pram: Arc<Pram>,
        actions: Vec<GroundProbAction>,
        observations: Vec<Formula>,
        query: Formula,
    ) -> Result<FilterProblem> {
        if observations.len() != actions.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} actions need {} observations, got {}",
                actions.len(),
                actions.len() + 1,
                observations.len()
            )));
        }
        for a in &actions {
            pram.check_prob(a)?;
        }
        let u = pram.universe();
        for f in observations.iter().chain(std::iter::once(&query)) {
            if let Some(v) = f.free_vars().into_iter().next() {
                return Err(Error::FreeVariable(v.to_string()));
            }
            u.check_formula(f)?;
        }
        Ok(FilterProblem {
            pram,
            actions,
            observations,
            query,
        })
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn with_query(&self, query: Formula) -> Result<FilterProblem> {
        FilterProblem::new(
            self.pram.clone(),
            self.actions.clone(),
            self.observations.clone(),
            query,
        )
    }
}

#[derive(Clone, Debug)]
pub struct PosteriorEstimate {
    pub value: f64,
    pub particles: Vec<FoParticle>,
    pub ess_history: Vec<f64>,
    pub killed: usize,
    pub seed: u64,
}

/// Per-prefix state shared by all particles with that prefix.
#[derive(Debug)]
struct Node {
    /// Origin as a formula over the initial situation.
    origin: Formula,
    /// Clause form of `origin`.
    evidence: ClauseSet,
    /// States consistent with the prefix at its last step.
    cur: CurrentStateFormula,
}

type Prefix = Vec<GroundDetAction>;
type Distribution = Arc<Vec<(GroundDetAction, f64)>>;

/// Filtering state for one problem, memoized over action prefixes.
#[derive(Debug)]
pub struct FilterContext {
    problem: FilterProblem,
    dynamics: Dynamics,
    prior: PriorModel,
    nodes: RwLock<HashMap<Prefix, Arc<Node>>>,
    posteriors: RwLock<HashMap<Prefix, Distribution>>,
    proposals: RwLock<HashMap<Prefix, Distribution>>,
    values: RwLock<HashMap<Prefix, f64>>,
    masses: RwLock<HashMap<Prefix, bool>>,
}

fn conjoin(a: &ClauseSet, b: &ClauseSet) -> ClauseSet {
    let mut clauses = a.clauses.clone();
    for c in &b.clauses {
        if !clauses.contains(c) {
            clauses.push(c.clone());
        }
    }
    ClauseSet { clauses }
}

fn cached<V: Clone>(
    map: &RwLock<HashMap<Prefix, V>>,
    key: &[GroundDetAction],
    make: impl FnOnce() -> Result<V>,
) -> Result<V> {
    if let Some(v) = map.read().expect("cache lock").get(key) {
        return Ok(v.clone());
    }
    let v = make()?;
    map.write()
        .expect("cache lock")
        .entry(key.to_vec())
        .or_insert_with(|| v.clone());
    Ok(v)
}

impl FilterContext {
    pub fn new(problem: FilterProblem) -> Result<FilterContext> {
        let dynamics = Dynamics::new(problem.pram.clone());
        let prior = PriorModel::new(&problem.pram.prior, problem.pram.universe())?;
        let ctx = FilterContext {
            problem,
            dynamics,
            prior,
            nodes: RwLock::new(HashMap::new()),
            posteriors: RwLock::new(HashMap::new()),
            proposals: RwLock::new(HashMap::new()),
            values: RwLock::new(HashMap::new()),
            masses: RwLock::new(HashMap::new()),
        };
        if !ctx.node(&[])?.cur.is_satisfiable() {
            return Err(Error::ZeroEvidence);
        }
        Ok(ctx)
    }

    pub fn problem(&self) -> &FilterProblem {
        &self.problem
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn prior(&self) -> &PriorModel {
        &self.prior
    }

    /// Clause form, falling back to a minimized form of the model set when
    /// direct conversion grows too large.
    fn clauses(&self, f: &Formula) -> Result<ClauseSet> {
        match self.prior.clauses(f) {
            Err(Error::UniverseTooLarge { .. }) => {
                let u = self.dynamics.universe();
                to_cnf(&qm::formula_of(u, &u.models(f)?))
            }
            r => r,
        }
    }

    fn node(&self, prefix: &[GroundDetAction]) -> Result<Arc<Node>> {
        if prefix.len() > self.problem.horizon() {
            return Err(Error::InvalidArgument(format!(
                "prefix of length {} exceeds horizon {}",
                prefix.len(),
                self.problem.horizon()
            )));
        }
        cached(&self.nodes, prefix, || {
            let u = self.dynamics.universe();
            let Some((da, head)) = prefix.split_last() else {
                let o0 = u.ground(&self.problem.observations[0])?;
                return Ok(Arc::new(Node {
                    evidence: self.clauses(&o0)?,
                    cur: CurrentStateFormula::new(u, &o0)?,
                    origin: o0,
                }));
            };
            let parent = self.node(head)?;
            let t = prefix.len();
            let obs = &self.problem.observations[t];
            let pre = self.dynamics.reg_seq(&self.problem.pram.precondition(da)?, head)?;
            let seen = self.dynamics.reg_seq(obs, prefix)?;
            let step = crate::fol::simplify(&Formula::and(vec![pre, seen]));
            let evidence = conjoin(&parent.evidence, &self.clauses(&step)?);
            Ok(Arc::new(Node {
                origin: crate::fol::simplify(&Formula::and(vec![parent.origin.clone(), step])),
                evidence,
                cur: self.dynamics.progress(&parent.cur, da, obs)?,
            }))
        })
    }

    /// Whether some initial state runs `prefix` consistently with the
    /// observations so far.
    pub fn is_live(&self, prefix: &[GroundDetAction]) -> Result<bool> {
        Ok(self.node(prefix)?.cur.is_satisfiable())
    }

    /// Current-state formula after `prefix`.
    pub fn current(&self, prefix: &[GroundDetAction]) -> Result<CurrentStateFormula> {
        Ok(self.node(prefix)?.cur.clone())
    }

    /// Formula over the initial situation whose models are the states from
    /// which `prefix` runs and matches every observation up to its length.
    pub fn origin(&self, prefix: &[GroundDetAction]) -> Result<Formula> {
        Ok(self.node(prefix)?.origin.clone())
    }

    /// Whether the origin of `prefix` has positive prior mass, decided on
    /// the formula alone.
    pub fn origin_has_mass(&self, prefix: &[GroundDetAction]) -> Result<bool> {
        cached(&self.masses, prefix, || {
            let node = self.node(prefix)?;
            match self
                .prior
                .prior_fof_clauses(&ClauseSet { clauses: vec![] }, &node.evidence, true)
            {
                Ok(_) => Ok(true),
                Err(Error::ZeroEvidence) => Ok(false),
                Err(e) => Err(e),
            }
        })
    }

    /// Probability of closed formula `q` after `prefix`, given the prefix
    /// and the observations up to its length.
    pub fn pfof(&self, q: &Formula, prefix: &[GroundDetAction]) -> Result<f64> {
        let node = self.node(prefix)?;
        let q0 = self.dynamics.reg_seq(q, prefix)?;
        self.prior
            .prior_fof_clauses(&self.clauses(&q0)?, &node.evidence, true)
    }

    /// Probability of the problem's query for a complete particle.
    pub fn query_value(&self, prefix: &[GroundDetAction]) -> Result<f64> {
        cached(&self.values, prefix, || {
            self.pfof(&self.problem.query, prefix)
        })
    }

    /// Distribution of `a`'s deterministic executions after `prefix`: the
    /// partition probabilities, conditioned on the prefix's origin when
    /// `informed`, mixed with each partition's distribution.
    pub fn execution_distribution(
        &self,
        a: &GroundProbAction,
        prefix: &[GroundDetAction],
        informed: bool,
    ) -> Result<Vec<(GroundDetAction, f64)>> {
        let c = self.dynamics.compiled_prob(a)?;
        let truth = ClauseSet { clauses: vec![] };
        let evidence = if informed {
            self.node(prefix)?.evidence.clone()
        } else {
            truth
        };
        let mut out: Vec<(GroundDetAction, f64)> = Vec::new();
        for (guard, outcomes) in c.guards.iter().zip(&c.outcomes) {
            let g0 = self.dynamics.reg_seq(guard, prefix)?;
            let occupancy = self
                .prior
                .prior_fof_clauses(&self.clauses(&g0)?, &evidence, true)?;
            for (da, p) in outcomes {
                match out.iter_mut().find(|(d, _)| d == da) {
                    Some(entry) => entry.1 += occupancy * p,
                    None => out.push((da.clone(), occupancy * p)),
                }
            }
        }
        Ok(out)
    }

    fn next_action(&self, prefix: &[GroundDetAction]) -> Result<&GroundProbAction> {
        self.problem.actions.get(prefix.len()).ok_or_else(|| {
            Error::InvalidArgument(format!("no action follows a prefix of length {}", prefix.len()))
        })
    }

    /// Posterior over the next action's executions given `prefix`.
    pub fn det_posterior(&self, prefix: &[GroundDetAction]) -> Result<Distribution> {
        cached(&self.posteriors, prefix, || {
            let a = self.next_action(prefix)?;
            Ok(Arc::new(self.execution_distribution(a, prefix, true)?))
        })
    }

    /// Importance distribution over the next action's executions: the same
    /// mixture with the current-state evidence ignored.
    pub fn proposal(&self, prefix: &[GroundDetAction]) -> Result<Distribution> {
        cached(&self.proposals, prefix, || {
            let a = self.next_action(prefix)?;
            Ok(Arc::new(self.execution_distribution(a, prefix, false)?))
        })
    }

    pub fn particle(&self, prefix: Vec<GroundDetAction>, weight: f64) -> Result<FoParticle> {
        let cur = self.current(&prefix)?;
        Ok(FoParticle {
            actions: prefix,
            weight,
            cur,
        })
    }
}

/// Probability of `q` after the particle's actions given the problem's
/// observations.
pub fn pfof(ctx: &FilterContext, q: &Formula, particle: &FoParticle) -> Result<f64> {
    ctx.pfof(q, &particle.actions)
}

/// Distribution over the executions of the action following the particle.
pub fn det_posterior(
    ctx: &FilterContext,
    a: &GroundProbAction,
    particle: &FoParticle,
) -> Result<Vec<(GroundDetAction, f64)>> {
    ctx.execution_distribution(a, &particle.actions, true)
}
