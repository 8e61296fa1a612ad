//! Ground-level reference computations: exact posteriors, the bootstrap
//! particle filter baseline, and the experiment driver.

mod experiment;
mod trace;

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::filter::{ess, normalize, resample, rng_for, FilterProblem, ResampleScheme};
use crate::fol::{ModelSet, State};
use crate::pram::GroundDetAction;
use crate::prior::PriorModel;
use crate::transition::{CompiledAction, CompiledProb, Dynamics};

pub use experiment::{
    problem_of, run_experiment, write_rows, Algorithm, ExperimentConfig, ResultRow, TraceSource, CSV_HEADER,
};
pub use trace::{parse_trace, random_trace, write_trace, Trace, TraceGenerator};

/// Floor and ceiling applied to estimates before taking logarithms.
pub const KL_EPSILON: f64 = 1e-12;

/// KL divergence between Bernoulli(`p`) and Bernoulli(`q`), natural log,
/// with `q` clamped to `[KL_EPSILON, 1 - KL_EPSILON]`.
pub fn kl(p: f64, q: f64) -> f64 {
    let q = q.clamp(KL_EPSILON, 1.0 - KL_EPSILON);
    let term = |a: f64, b: f64| if a <= 0.0 { 0.0 } else { a * (a / b).ln() };
    (term(p, q) + term(1.0 - p, 1.0 - q)).max(0.0)
}

/// Normalized prior probability of every state.
pub fn state_probabilities(problem: &FilterProblem) -> Result<Vec<f64>> {
    let u = problem.pram.universe();
    let logw = PriorModel::state_log_weights(&problem.pram.prior, u)?;
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// A problem compiled over explicit ground states.
#[derive(Debug)]
pub struct GroundModel {
    problem: FilterProblem,
    dynamics: Dynamics,
    prior: Vec<f64>,
    observations: Vec<ModelSet>,
    query: ModelSet,
    actions: Vec<Arc<CompiledProb>>,
    /// States satisfying the first observation with cumulative prior mass.
    initial: Vec<(State, f64)>,
}

impl GroundModel {
    pub fn new(problem: &FilterProblem) -> Result<GroundModel> {
        let u = problem.pram.universe();
        u.check_enumerable()?;
        let dynamics = Dynamics::new(problem.pram.clone());
        let prior = state_probabilities(problem)?;
        let observations = problem
            .observations
            .iter()
            .map(|o| u.models(o))
            .collect::<Result<Vec<_>>>()?;
        let query = u.models(&problem.query)?;
        let actions = problem
            .actions
            .iter()
            .map(|a| dynamics.compiled_prob(a))
            .collect::<Result<Vec<_>>>()?;
        let mut initial = Vec::new();
        let mut acc = 0.0;
        for s in observations[0].iter() {
            let p = prior[s.0 as usize];
            if p > 0.0 {
                acc += p;
                initial.push((s, acc));
            }
        }
        if initial.is_empty() {
            return Err(Error::ZeroEvidence);
        }
        Ok(GroundModel {
            problem: problem.clone(),
            dynamics,
            prior,
            observations,
            query,
            actions,
            initial,
        })
    }

    pub fn problem(&self) -> &FilterProblem {
        &self.problem
    }

    fn compiled(&self, da: &GroundDetAction) -> Result<Arc<CompiledAction>> {
        self.dynamics.compiled(da)
    }

    /// Every execution sequence of the problem's actions.
    fn sequences(&self) -> Result<Vec<Vec<GroundDetAction>>> {
        let pram = &self.problem.pram;
        let mut seqs: Vec<Vec<GroundDetAction>> = vec![Vec::new()];
        let mut count: u128 = 1;
        let cap = pram.universe().cap() as u128;
        for a in &self.problem.actions {
            let execs = pram.executions(a)?;
            count = count.saturating_mul(execs.len() as u128);
            if count.saturating_mul(pram.universe().num_states()) > cap {
                return Err(Error::UniverseTooLarge {
                    what: "execution sequences times states".into(),
                    size: count.saturating_mul(pram.universe().num_states()),
                    cap,
                });
            }
            seqs = seqs
                .into_iter()
                .flat_map(|s| {
                    execs.iter().map(move |da| {
                        let mut s = s.clone();
                        s.push(da.clone());
                        s
                    })
                })
                .collect();
        }
        Ok(seqs)
    }

    /// Joint mass of the sequence with the observations, and the part of it
    /// ending in query states, by pushing the prior forward.
    fn sequence_mass(&self, seq: &[GroundDetAction]) -> Result<(f64, f64)> {
        let mut mass: Vec<(State, f64)> = self
            .observations[0]
            .iter()
            .map(|s| (s, self.prior[s.0 as usize]))
            .filter(|(_, p)| *p > 0.0)
            .collect();
        for (t, da) in seq.iter().enumerate() {
            let act = &self.actions[t];
            let c = self.compiled(da)?;
            let mut next: std::collections::BTreeMap<u64, f64> = std::collections::BTreeMap::new();
            for (s, w) in mass {
                let i = act.select(s)?;
                let pa: f64 = act.outcomes[i]
                    .iter()
                    .filter(|(d, _)| d == da)
                    .map(|(_, p)| p)
                    .sum();
                if pa == 0.0 || !c.applicable(s) {
                    continue;
                }
                let s2 = c.apply_unchecked(s);
                if self.observations[t + 1].contains(s2) {
                    *next.entry(s2.0).or_insert(0.0) += w * pa;
                }
            }
            mass = next.into_iter().map(|(s, w)| (State(s), w)).collect();
        }
        let total: f64 = mass.iter().map(|(_, w)| w).sum();
        let hit: f64 = mass
            .iter()
            .filter(|(s, _)| self.query.contains(*s))
            .map(|(_, w)| w)
            .sum();
        Ok((total, hit))
    }

    /// Posterior of the query as a sum over execution sequences of the
    /// query's probability given the sequence times the sequence's
    /// posterior.
    pub fn exact(&self) -> Result<f64> {
        let masses = self
            .sequences()?
            .iter()
            .map(|seq| self.sequence_mass(seq))
            .collect::<Result<Vec<_>>>()?;
        let evidence: f64 = masses.iter().map(|(z, _)| z).sum();
        if !(evidence > 0.0) {
            return Err(Error::ZeroEvidence);
        }
        let mut value = 0.0;
        for (z, hit) in masses {
            if z > 0.0 {
                value += (hit / z) * z;
            }
        }
        Ok((value / evidence).clamp(0.0, 1.0))
    }

    /// Posterior of the query by depth-first enumeration of initial state
    /// and execution together.
    pub fn exact_joint(&self) -> Result<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for s in self.observations[0].iter() {
            let p = self.prior[s.0 as usize];
            if p > 0.0 {
                self.walk(0, s, p, &mut num, &mut den)?;
            }
        }
        if !(den > 0.0) {
            return Err(Error::ZeroEvidence);
        }
        Ok((num / den).clamp(0.0, 1.0))
    }

    fn walk(&self, t: usize, s: State, w: f64, num: &mut f64, den: &mut f64) -> Result<()> {
        if t == self.actions.len() {
            *den += w;
            if self.query.contains(s) {
                *num += w;
            }
            return Ok(());
        }
        let act = &self.actions[t];
        let i = act.select(s)?;
        for (da, p) in &act.outcomes[i] {
            let c = self.compiled(da)?;
            if *p > 0.0 && c.applicable(s) {
                let s2 = c.apply_unchecked(s);
                if self.observations[t + 1].contains(s2) {
                    self.walk(t + 1, s2, w * p, num, den)?;
                }
            }
        }
        Ok(())
    }

    fn sample_initial<R: Rng>(&self, rng: &mut R) -> State {
        let total = self.initial.last().expect("non-empty").1;
        let u = rng.gen::<f64>() * total;
        let i = self.initial.partition_point(|(_, c)| *c <= u);
        self.initial[i.min(self.initial.len() - 1)].0
    }

    /// Bootstrap particle filter over ground states.
    pub fn smc(&self, n: usize, seed: u64) -> Result<SmcEstimate> {
        if n == 0 {
            return Err(Error::InvalidArgument("number of particles must be positive".into()));
        }
        let mut rng = rng_for(seed, &[]);
        let mut states: Vec<State> = (0..n).map(|_| self.sample_initial(&mut rng)).collect();
        let mut weights = vec![1.0 / n as f64; n];
        let mut ess_history = Vec::new();
        let horizon = self.actions.len();
        for t in 0..horizon {
            let act = &self.actions[t];
            for k in 0..n {
                let s = states[k];
                let i = act.select(s)?;
                let probs: Vec<f64> = act.outcomes[i].iter().map(|(_, p)| *p).collect();
                let j = crate::filter::sample_index(&probs, &mut rng)
                    .ok_or_else(|| Error::NoPartition(act.action.to_string()))?;
                let c = self.compiled(&act.outcomes[i][j].0)?;
                if !c.applicable(s) {
                    weights[k] = 0.0;
                    continue;
                }
                let s2 = c.apply_unchecked(s);
                states[k] = s2;
                if !self.observations[t + 1].contains(s2) {
                    weights[k] = 0.0;
                }
            }
            normalize(&mut weights)?;
            ess_history.push(ess(&weights));
            if t + 1 < horizon {
                let ancestors = resample(&weights, ResampleScheme::Multinomial, &mut rng)?;
                states = ancestors.iter().map(|&a| states[a]).collect();
                weights = vec![1.0 / n as f64; n];
            }
        }
        let hit: f64 = states
            .iter()
            .zip(&weights)
            .filter(|(s, _)| self.query.contains(**s))
            .map(|(_, w)| w)
            .sum();
        let value = hit / weights.iter().sum::<f64>();
        let killed = weights.iter().filter(|w| **w == 0.0).count();
        Ok(SmcEstimate {
            value: value.clamp(0.0, 1.0),
            ess_history,
            killed,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SmcEstimate {
    pub value: f64,
    pub ess_history: Vec<f64>,
    pub killed: usize,
}

/// Exact posterior of the problem's query.
pub fn exact_posterior(problem: &FilterProblem) -> Result<f64> {
    GroundModel::new(problem)?.exact()
}

/// Exact posterior by joint enumeration, independent of [`exact_posterior`].
pub fn exact_posterior_joint(problem: &FilterProblem) -> Result<f64> {
    GroundModel::new(problem)?.exact_joint()
}

/// Bootstrap particle filter estimate of the problem's query.
pub fn smc_baseline(problem: &FilterProblem, n: usize, seed: u64) -> Result<SmcEstimate> {
    GroundModel::new(problem)?.smc(n, seed)
}
