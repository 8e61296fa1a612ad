//! Action/observation traces.
//!
//! The text form has one `obs: <formula>` or `act: <Action>(<constants>)`
//! per line; `#` starts a comment. Observations before the first action
//! describe the initial situation, those after action `t` the situation
//! following it. Several observations at one step are conjoined; a step
//! without one observes `true`.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Position, Result};
use crate::filter::{rng_for, sample_index};
use crate::fol::{simplify, Formula, State};
use crate::pram::{GroundProbAction, Pram};
use crate::transition::Dynamics;

use super::state_probabilities;

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub actions: Vec<GroundProbAction>,
    /// One more entry than `actions`.
    pub observations: Vec<Formula>,
}

fn at_line(e: Error, line: usize) -> Error {
    match e {
        Error::Syntax { pos, message } => Error::Syntax {
            pos: Position {
                line,
                column: pos.column,
            },
            message,
        },
        Error::UndeclaredSymbol { name, pos } => Error::UndeclaredSymbol {
            name,
            pos: Position {
                line,
                column: pos.column,
            },
        },
        Error::ArityMismatch {
            name,
            expected,
            found,
            pos,
        } => Error::ArityMismatch {
            name,
            expected,
            found,
            pos: Position {
                line,
                column: pos.column,
            },
        },
        e => e,
    }
}

pub fn parse_trace(pram: &Pram, src: &str) -> Result<Trace> {
    let mut actions = Vec::new();
    let mut steps: Vec<Vec<Formula>> = vec![Vec::new()];
    for (k, raw) in src.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let syntax = |message: String| Error::Syntax {
            pos: Position {
                line: k + 1,
                column: 1,
            },
            message,
        };
        let (key, rest) = line
            .split_once(':')
            .ok_or_else(|| syntax(format!("expected `obs:` or `act:`, found `{line}`")))?;
        match key.trim() {
            "obs" => {
                let f = pram.formula(rest.trim()).map_err(|e| at_line(e, k + 1))?;
                steps.last_mut().expect("a step").push(f);
            }
            "act" => {
                actions.push(pram.parse_prob(rest.trim()).map_err(|e| at_line(e, k + 1))?);
                steps.push(Vec::new());
            }
            other => return Err(syntax(format!("unknown trace entry `{other}`"))),
        }
    }
    let observations = steps
        .into_iter()
        .map(|fs| match fs.len() {
            0 => Formula::True,
            1 => fs.into_iter().next().expect("one"),
            _ => Formula::and(fs),
        })
        .collect();
    Ok(Trace {
        actions,
        observations,
    })
}

pub fn write_trace(trace: &Trace) -> String {
    let mut out = String::new();
    let obs = |out: &mut String, f: &Formula| {
        if *f != Formula::True {
            let _ = writeln!(out, "obs: {f}");
        }
    };
    obs(&mut out, &trace.observations[0]);
    for (a, o) in trace.actions.iter().zip(&trace.observations[1..]) {
        let _ = writeln!(out, "act: {a}");
        obs(&mut out, o);
    }
    out
}

const TRACE_ATTEMPTS: u64 = 100;

/// Reusable simulator for [`random_trace`].
#[derive(Debug)]
pub struct TraceGenerator {
    dynamics: Dynamics,
    ground: Vec<GroundProbAction>,
    prior: Vec<f64>,
}

impl TraceGenerator {
    pub fn new(pram: &Pram) -> Result<TraceGenerator> {
        let pram = std::sync::Arc::new(pram.clone());
        pram.universe().check_enumerable()?;
        let prior = state_probabilities(&crate::filter::FilterProblem {
            pram: pram.clone(),
            actions: vec![],
            observations: vec![Formula::True],
            query: Formula::True,
        })?;
        Ok(TraceGenerator {
            ground: pram.ground_prob_actions(),
            dynamics: Dynamics::new(pram),
            prior,
        })
    }

    pub fn generate(&self, horizon: usize, obs_rate: f64, seed: u64) -> Result<Trace> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("trace length must be positive".into()));
        }
        if !(0.0..=1.0).contains(&obs_rate) {
            return Err(Error::InvalidArgument(format!(
                "observation rate {obs_rate} outside [0, 1]"
            )));
        }
        let mut last = Error::NoApplicableAction(1);
        for attempt in 0..TRACE_ATTEMPTS {
            let mut rng = rng_for(seed, &[attempt]);
            match simulate(&self.dynamics, &self.ground, &self.prior, horizon, obs_rate, &mut rng) {
                Ok(t) => return Ok(t),
                Err(e @ Error::NoApplicableAction(_)) => last = e,
                Err(e) => return Err(e),
            }
        }
        Err(last)
    }
}

/// Simulates a trajectory from a prior sample. Each step picks uniformly
/// among ground probabilistic actions that can change the current state
/// (any action with an executable outcome if none can), and with
/// probability `obs_rate` observes one random ground literal that holds.
pub fn random_trace(pram: &Pram, horizon: usize, obs_rate: f64, seed: u64) -> Result<Trace> {
    TraceGenerator::new(pram)?.generate(horizon, obs_rate, seed)
}

fn observe<R: Rng>(dynamics: &Dynamics, s: State, obs_rate: f64, rng: &mut R) -> Formula {
    if obs_rate == 0.0 || rng.gen::<f64>() >= obs_rate {
        return Formula::True;
    }
    let u = dynamics.universe();
    let i = rng.gen_range(0..u.len());
    let atom = Formula::Atom(u.fluent(i).clone());
    if s.get(i) {
        atom
    } else {
        Formula::not(atom)
    }
}

fn simulate<R: Rng>(
    dynamics: &Dynamics,
    ground: &[GroundProbAction],
    prior: &[f64],
    horizon: usize,
    obs_rate: f64,
    rng: &mut R,
) -> Result<Trace> {
    let mut s = State(sample_index(prior, rng).expect("prior has mass") as u64);
    let mut observations = vec![observe(dynamics, s, obs_rate, rng)];
    let mut actions = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let mut moving = Vec::new();
        let mut runnable = Vec::new();
        for a in ground {
            let c = dynamics.compiled_prob(a)?;
            let i = c.select(s)?;
            let mut can_run = false;
            let mut can_move = false;
            for (da, p) in &c.outcomes[i] {
                let d = dynamics.compiled(da)?;
                if *p > 0.0 && d.applicable(s) {
                    can_run = true;
                    can_move |= d.apply_unchecked(s) != s;
                }
            }
            if can_move {
                moving.push((a, c.clone(), i));
            } else if can_run {
                runnable.push((a, c.clone(), i));
            }
        }
        let pool = if moving.is_empty() { runnable } else { moving };
        if pool.is_empty() {
            return Err(Error::NoApplicableAction(t));
        }
        let (a, c, i) = &pool[rng.gen_range(0..pool.len())];
        let probs: Vec<f64> = c.outcomes[*i].iter().map(|(_, p)| *p).collect();
        let j = sample_index(&probs, rng).ok_or(Error::NoApplicableAction(t))?;
        let d = dynamics.compiled(&c.outcomes[*i][j].0)?;
        if !d.applicable(s) {
            return Err(Error::NoApplicableAction(t));
        }
        s = d.apply_unchecked(s);
        actions.push((*a).clone());
        observations.push(observe(dynamics, s, obs_rate, rng));
    }
    Ok(Trace {
        actions,
        observations: observations.iter().map(simplify).collect(),
    })
}
