use rayon::prelude::*;

use super::resample::{ess, normalize, resample, rng_for, sample_index, ResampleScheme};
use super::{FilterContext, PosteriorEstimate};
use crate::error::{Error, Result};
use crate::pram::GroundDetAction;
use crate::transition::FoParticle;

/// Retry budget for re-drawing an execution whose successor contradicts the
/// next observation.
pub const DEFAULT_RETRIES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampler {
    /// Exact sequential sampling of executions with state tracking.
    S,
    /// Sampling from the state-blind mixture with importance weights and
    /// resampling.
    Sr,
    /// Like `Sr` with no state tracking: particles are only dropped when
    /// their origin loses all prior mass, and weights stay uniform.
    SrNoState,
}

impl Sampler {
    pub fn name(self) -> &'static str {
        match self {
            Sampler::S => "fofa-s",
            Sampler::Sr => "fofa-sr",
            Sampler::SrNoState => "fofa-sr-nostate",
        }
    }
}

#[derive(Clone, Debug)]
pub struct FilterOptions {
    pub n: usize,
    pub seed: u64,
    /// Resample when the effective sample size drops below this count.
    pub ess_threshold: f64,
    pub scheme: ResampleScheme,
    pub max_retries: usize,
}

impl FilterOptions {
    pub fn new(n: usize, seed: u64) -> FilterOptions {
        FilterOptions {
            n,
            seed,
            ess_threshold: n as f64 / 2.0,
            scheme: ResampleScheme::Multinomial,
            max_retries: DEFAULT_RETRIES,
        }
    }

    fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("number of particles must be positive".into()));
        }
        if !(self.ess_threshold > 0.0 && self.ess_threshold <= self.n as f64) {
            return Err(Error::InvalidArgument(format!(
                "ESS threshold {} outside (0, {}]",
                self.ess_threshold, self.n
            )));
        }
        Ok(())
    }
}

/// Weighted particles with sampling diagnostics.
#[derive(Clone, Debug)]
pub struct SampleSet {
    pub particles: Vec<FoParticle>,
    pub ess_history: Vec<f64>,
    pub killed: usize,
}

/// Stream tags keeping particle draws and resampling draws apart.
const PARTICLE_STREAM: u64 = 0;
const RESAMPLE_STREAM: u64 = 1;

/// Builds one particle by sequential exact sampling; `None` if it dies.
fn grow(ctx: &FilterContext, n: usize, opts: &FilterOptions) -> Result<Option<Vec<GroundDetAction>>> {
    let mut rng = rng_for(opts.seed, &[PARTICLE_STREAM, n as u64]);
    let mut prefix: Vec<GroundDetAction> = Vec::with_capacity(ctx.problem().horizon());
    for _ in 0..ctx.problem().horizon() {
        let dist = ctx.det_posterior(&prefix)?;
        let mut weights: Vec<f64> = dist.iter().map(|(_, p)| *p).collect();
        let mut retries = 0;
        loop {
            let Some(i) = sample_index(&weights, &mut rng) else {
                return Ok(None);
            };
            prefix.push(dist[i].0.clone());
            if ctx.is_live(&prefix)? {
                break;
            }
            prefix.pop();
            weights[i] = 0.0;
            retries += 1;
            if retries > opts.max_retries {
                return Ok(None);
            }
        }
    }
    Ok(Some(prefix))
}

/// Draws `opts.n` particles, each execution from its exact posterior given
/// the particle so far. Surviving particles share equal weight.
pub fn s_actions(ctx: &FilterContext, opts: &FilterOptions) -> Result<SampleSet> {
    opts.check()?;
    let grown: Vec<Option<Vec<GroundDetAction>>> = (0..opts.n)
        .into_par_iter()
        .map(|n| grow(ctx, n, opts))
        .collect::<Result<_>>()?;
    let alive = grown.iter().filter(|p| p.is_some()).count();
    if alive == 0 {
        return Err(Error::AllParticlesDead);
    }
    let w = 1.0 / alive as f64;
    let particles = grown
        .into_iter()
        .flatten()
        .map(|p| ctx.particle(p, w))
        .collect::<Result<_>>()?;
    Ok(SampleSet {
        particles,
        ess_history: vec![alive as f64],
        killed: opts.n - alive,
    })
}

fn lookup(dist: &[(GroundDetAction, f64)], da: &GroundDetAction) -> f64 {
    dist.iter()
        .find(|(d, _)| d == da)
        .map(|(_, p)| *p)
        .unwrap_or(0.0)
}

/// Sequential importance sampling with resampling. Executions are drawn
/// from the state-blind proposal; with `track_state` each draw is weighted
/// by its exact posterior over the proposal and particles contradicting an
/// observation get weight zero.
pub fn sr_actions(ctx: &FilterContext, opts: &FilterOptions, track_state: bool) -> Result<SampleSet> {
    opts.check()?;
    let n = opts.n;
    let mut prefixes: Vec<Vec<GroundDetAction>> = vec![Vec::new(); n];
    let mut weights = vec![1.0 / n as f64; n];
    let mut rngs: Vec<_> = (0..n)
        .map(|i| rng_for(opts.seed, &[PARTICLE_STREAM, i as u64]))
        .collect();
    let mut ess_history = Vec::with_capacity(ctx.problem().horizon());
    for t in 0..ctx.problem().horizon() {
        for i in 0..n {
            if weights[i] == 0.0 {
                continue;
            }
            let proposal = ctx.proposal(&prefixes[i])?;
            let pw: Vec<f64> = proposal.iter().map(|(_, p)| *p).collect();
            let Some(k) = sample_index(&pw, &mut rngs[i]) else {
                weights[i] = 0.0;
                continue;
            };
            let (da, pi) = proposal[k].clone();
            let factor = if track_state {
                let target = lookup(&ctx.det_posterior(&prefixes[i])?, &da);
                prefixes[i].push(da);
                if ctx.is_live(&prefixes[i])? {
                    target / pi
                } else {
                    0.0
                }
            } else {
                prefixes[i].push(da);
                if ctx.origin_has_mass(&prefixes[i])? {
                    1.0
                } else {
                    0.0
                }
            };
            weights[i] *= factor;
        }
        normalize(&mut weights)?;
        let e = ess(&weights);
        ess_history.push(e);
        if e < opts.ess_threshold {
            let mut rng = rng_for(opts.seed, &[RESAMPLE_STREAM, t as u64]);
            let ancestors = resample(&weights, opts.scheme, &mut rng)?;
            prefixes = ancestors.iter().map(|&a| prefixes[a].clone()).collect();
            weights = vec![1.0 / n as f64; n];
        }
    }
    let killed = weights.iter().filter(|w| **w == 0.0).count();
    let particles = prefixes
        .into_iter()
        .zip(weights)
        .filter(|(_, w)| *w > 0.0)
        .map(|(p, w)| ctx.particle(p, w))
        .collect::<Result<_>>()?;
    Ok(SampleSet {
        particles,
        ess_history,
        killed,
    })
}

/// Weighted average of the query's particle values.
pub fn fofa(ctx: &FilterContext, sampler: Sampler, opts: &FilterOptions) -> Result<PosteriorEstimate> {
    let set = match sampler {
        Sampler::S => s_actions(ctx, opts)?,
        Sampler::Sr => sr_actions(ctx, opts, true)?,
        Sampler::SrNoState => sr_actions(ctx, opts, false)?,
    };
    // Dividing by the summed weights (one in exact arithmetic) makes
    // unanimous particles give exactly 0 or 1.
    let (mut num, mut den) = (0.0, 0.0);
    for p in &set.particles {
        num += p.weight * ctx.query_value(&p.actions)?;
        den += p.weight;
    }
    Ok(PosteriorEstimate {
        value: (num / den).clamp(0.0, 1.0),
        particles: set.particles,
        ess_history: set.ess_history,
        killed: set.killed,
        seed: opts.seed,
    })
}
