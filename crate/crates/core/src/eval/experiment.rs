//! Expected-KL sweeps over algorithms and particle counts.
//!
//! Config files hold `key = value` lines (`#` comments):
//!
//! ```text
//! domain = ../domains/briefcase.pram
//! trace = ../domains/briefcase_t4.trc     # or: random_trace = 4, 0.5
//! trace_seed = 3                          # seed for random_trace
//! query = At(O,L2)
//! samples = 50, 100, 500
//! runs = 50
//! algorithms = fofa-s, fofa-sr, smc
//! seed = 2024
//! ess_threshold = 0.5                     # fraction of N
//! timing = false
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Position, Result};
use crate::filter::{derive_seed, fofa, FilterContext, FilterOptions, FilterProblem, Sampler};
use crate::fol::Formula;
use crate::pram::{parse_domain, Pram};

use super::{kl, parse_trace, random_trace, GroundModel, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Fofa(Sampler),
    Smc,
    Exact,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fofa(s) => s.name(),
            Algorithm::Smc => "smc",
            Algorithm::Exact => "exact",
        }
    }

    pub fn parse(s: &str) -> Result<Algorithm> {
        Ok(match s {
            "fofa-s" => Algorithm::Fofa(Sampler::S),
            "fofa-sr" => Algorithm::Fofa(Sampler::Sr),
            "fofa-sr-nostate" => Algorithm::Fofa(Sampler::SrNoState),
            "smc" => Algorithm::Smc,
            "exact" => Algorithm::Exact,
            other => return Err(Error::InvalidArgument(format!("unknown algorithm `{other}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TraceSource {
    File(PathBuf),
    Random { length: usize, obs_rate: f64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub domain: PathBuf,
    pub trace: TraceSource,
    pub query: String,
    pub samples: Vec<usize>,
    pub runs: usize,
    pub algorithms: Vec<Algorithm>,
    pub seed: u64,
    /// Resampling threshold as a fraction of the particle count.
    pub ess_threshold: f64,
    pub timing: bool,
}

fn config_error(line: usize, message: String) -> Error {
    Error::Syntax {
        pos: Position { line, column: 1 },
        message,
    }
}

fn list<T: std::str::FromStr>(v: &str, line: usize, key: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|x| x.trim())
        .filter(|x| !x.is_empty())
        .map(|x| {
            x.parse()
                .map_err(|_| config_error(line, format!("bad value `{x}` for `{key}`")))
        })
        .collect()
}

fn one<T: std::str::FromStr>(v: &str, line: usize, key: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| config_error(line, format!("bad value `{}` for `{key}`", v.trim())))
}

impl ExperimentConfig {
    /// Parses a config; relative paths are joined to `base`.
    pub fn parse(src: &str, base: &Path) -> Result<ExperimentConfig> {
        let mut domain = None;
        let mut trace_file = None;
        let mut random: Option<(usize, f64)> = None;
        let mut trace_seed = 0u64;
        let mut query = None;
        let mut samples = None;
        let mut runs = 50usize;
        let mut algorithms = None;
        let mut seed = 0u64;
        let mut ess_threshold = 0.5f64;
        let mut timing = false;
        for (k, raw) in src.lines().enumerate() {
            let line = k + 1;
            let text = raw.split('#').next().unwrap_or("").trim();
            if text.is_empty() {
                continue;
            }
            let (key, value) = text
                .split_once('=')
                .ok_or_else(|| config_error(line, format!("expected `key = value`, found `{text}`")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "domain" => domain = Some(base.join(value)),
                "trace" => trace_file = Some(base.join(value)),
                "random_trace" => {
                    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                    if parts.len() != 2 {
                        return Err(config_error(line, "random_trace takes `length, rate`".into()));
                    }
                    random = Some((one(parts[0], line, key)?, one(parts[1], line, key)?));
                }
                "trace_seed" => trace_seed = one(value, line, key)?,
                "query" => query = Some(value.to_string()),
                "samples" => samples = Some(list::<usize>(value, line, key)?),
                "runs" => runs = one(value, line, key)?,
                "algorithms" => {
                    algorithms = Some(
                        value
                            .split(',')
                            .map(str::trim)
                            .filter(|x| !x.is_empty())
                            .map(Algorithm::parse)
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                "seed" => seed = one(value, line, key)?,
                "ess_threshold" => ess_threshold = one(value, line, key)?,
                "timing" => timing = one(value, line, key)?,
                other => return Err(config_error(line, format!("unknown key `{other}`"))),
            }
        }
        let missing = |what: &str| Error::InvalidArgument(format!("config is missing `{what}`"));
        let trace = match (trace_file, random) {
            (Some(p), None) => TraceSource::File(p),
            (None, Some((length, obs_rate))) => TraceSource::Random {
                length,
                obs_rate,
                seed: trace_seed,
            },
            (Some(_), Some(_)) => {
                return Err(Error::InvalidArgument(
                    "config sets both `trace` and `random_trace`".into(),
                ))
            }
            (None, None) => return Err(missing("trace")),
        };
        let cfg = ExperimentConfig {
            domain: domain.ok_or_else(|| missing("domain"))?,
            trace,
            query: query.ok_or_else(|| missing("query"))?,
            samples: samples.ok_or_else(|| missing("samples"))?,
            runs,
            algorithms: algorithms.ok_or_else(|| missing("algorithms"))?,
            seed,
            ess_threshold,
            timing,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        ExperimentConfig::parse(&src, path.parent().unwrap_or(Path::new(".")))
    }

    fn check(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidArgument("runs must be at least 1".into()));
        }
        if self.samples.is_empty() || self.samples.contains(&0) {
            return Err(Error::InvalidArgument("sample counts must be positive".into()));
        }
        if !(self.ess_threshold > 0.0 && self.ess_threshold <= 1.0) {
            return Err(Error::InvalidArgument("ess_threshold must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Loads the domain and trace and builds the filtering problem.
    pub fn problem(&self) -> Result<FilterProblem> {
        let src = std::fs::read_to_string(&self.domain)
            .map_err(|e| Error::Io(format!("{}: {e}", self.domain.display())))?;
        let pram = Arc::new(parse_domain(&src)?);
        let trace = match &self.trace {
            TraceSource::File(p) => {
                let src = std::fs::read_to_string(p)
                    .map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
                parse_trace(&pram, &src)?
            }
            TraceSource::Random {
                length,
                obs_rate,
                seed,
            } => random_trace(&pram, *length, *obs_rate, *seed)?,
        };
        problem_of(pram, trace, &self.query)
    }
}

/// Builds a problem from a parsed domain, a trace, and query text.
pub fn problem_of(pram: Arc<Pram>, trace: Trace, query: &str) -> Result<FilterProblem> {
    let q: Formula = pram.formula(query)?;
    FilterProblem::new(pram, trace.actions, trace.observations, q)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub algorithm: String,
    /// `None` for rows not tied to a particle count.
    pub n: Option<usize>,
    pub run: usize,
    pub seed: u64,
    /// `None` when every particle died.
    pub estimate: Option<f64>,
    pub exact: f64,
    pub kl: Option<f64>,
    pub ess_min: Option<f64>,
    pub killed: usize,
    pub wall_ms: Option<f64>,
}

pub const CSV_HEADER: [&str; 10] = [
    "algorithm", "N", "run", "seed", "estimate", "exact", "kl", "ess_min", "killed", "wall_ms",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ResultRow {
    fn record(&self) -> Vec<String> {
        vec![
            self.algorithm.clone(),
            opt(self.n),
            self.run.to_string(),
            self.seed.to_string(),
            opt(self.estimate),
            self.exact.to_string(),
            opt(self.kl),
            opt(self.ess_min),
            self.killed.to_string(),
            opt(self.wall_ms),
        ]
    }
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn summary(algorithm: &str, n: usize, rows: &[ResultRow]) -> [Vec<String>; 2] {
    let est: Vec<f64> = rows.iter().filter_map(|r| r.estimate).collect();
    let kls: Vec<f64> = rows.iter().filter_map(|r| r.kl).collect();
    let exact = rows.first().map(|r| r.exact.to_string()).unwrap_or_default();
    let row = |tag: &str, e: Option<f64>, k: Option<f64>| {
        vec![
            algorithm.to_string(),
            n.to_string(),
            tag.to_string(),
            String::new(),
            opt(e),
            exact.clone(),
            opt(k),
            String::new(),
            String::new(),
            String::new(),
        ]
    };
    let (em, es) = if est.is_empty() { (None, None) } else {
        let (m, s) = mean_stderr(&est);
        (Some(m), Some(s))
    };
    let (km, ks) = if kls.is_empty() { (None, None) } else {
        let (m, s) = mean_stderr(&kls);
        (Some(m), Some(s))
    };
    [row("mean", em, km), row("stderr", es, ks)]
}

/// Writes rows in CSV with a header, without summaries.
pub fn write_rows(rows: &[ResultRow], out: &mut dyn Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

fn run_one(
    algorithm: Algorithm,
    ctx: &FilterContext,
    ground: &GroundModel,
    cfg: &ExperimentConfig,
    n: usize,
    run: usize,
    exact: f64,
) -> Result<ResultRow> {
    let seed = derive_seed(cfg.seed, &[n as u64, run as u64]);
    let start = Instant::now();
    let outcome = match algorithm {
        Algorithm::Fofa(sampler) => {
            let mut opts = FilterOptions::new(n, seed);
            opts.ess_threshold = (cfg.ess_threshold * n as f64).max(f64::MIN_POSITIVE);
            fofa(ctx, sampler, &opts).map(|e| {
                let ess_min = e.ess_history.iter().copied().fold(f64::INFINITY, f64::min);
                (e.value, ess_min, e.killed)
            })
        }
        Algorithm::Smc => ground.smc(n, seed).map(|e| {
            let ess_min = e.ess_history.iter().copied().fold(n as f64, f64::min);
            (e.value, ess_min, e.killed)
        }),
        Algorithm::Exact => Ok((exact, f64::NAN, 0)),
    };
    let wall_ms = cfg
        .timing
        .then(|| start.elapsed().as_secs_f64() * 1000.0);
    let row = |estimate: Option<f64>, ess_min: Option<f64>, killed: usize| ResultRow {
        algorithm: algorithm.name().to_string(),
        n: Some(n),
        run,
        seed,
        estimate,
        exact,
        kl: estimate.map(|q| kl(exact, q)),
        ess_min,
        killed,
        wall_ms,
    };
    match outcome {
        Ok((v, e, k)) => Ok(row(Some(v), e.is_finite().then_some(e), k)),
        Err(Error::AllParticlesDead) => Ok(row(None, Some(0.0), n)),
        Err(e) => Err(e),
    }
}

/// Runs every algorithm at every particle count `runs` times, streaming
/// CSV rows to `out` (flushed per group) and progress lines to `progress`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out: &mut dyn Write,
    progress: &mut dyn FnMut(&str),
) -> Result<Vec<ResultRow>> {
    let problem = cfg.problem()?;
    let ground = GroundModel::new(&problem)?;
    let exact = ground.exact()?;
    let ctx = FilterContext::new(problem)?;
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(CSV_HEADER)?;
    w.flush()?;
    let mut all = Vec::new();
    for &alg in &cfg.algorithms {
        if alg == Algorithm::Exact {
            let row = ResultRow {
                algorithm: alg.name().to_string(),
                n: None,
                run: 0,
                seed: cfg.seed,
                estimate: Some(exact),
                exact,
                kl: Some(0.0),
                ess_min: None,
                killed: 0,
                wall_ms: None,
            };
            w.write_record(row.record())?;
            w.flush()?;
            all.push(row);
            continue;
        }
        for &n in &cfg.samples {
            progress(&format!("{} N={} ({} runs)", alg.name(), n, cfg.runs));
            let rows: Vec<ResultRow> = (0..cfg.runs)
                .into_par_iter()
                .map(|run| run_one(alg, &ctx, &ground, cfg, n, run, exact))
                .collect::<Result<_>>()?;
            for r in &rows {
                w.write_record(r.record())?;
            }
            for s in summary(alg.name(), n, &rows) {
                w.write_record(s)?;
            }
            w.flush()?;
            all.extend(rows);
        }
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_config() {
        let cfg = ExperimentConfig::parse(
            "domain = d.pram\nrandom_trace = 3, 0.5\ntrace_seed = 4\nquery = In(O)\n\
             samples = 10, 20\nalgorithms = fofa-s, smc\nseed = 7 # root\n",
            Path::new("/x"),
        )
        .unwrap();
        assert_eq!(cfg.domain, PathBuf::from("/x/d.pram"));
        assert_eq!(
            cfg.trace,
            TraceSource::Random {
                length: 3,
                obs_rate: 0.5,
                seed: 4
            }
        );
        assert_eq!(cfg.samples, vec![10, 20]);
        assert_eq!(cfg.runs, 50);
        assert_eq!(cfg.algorithms, vec![Algorithm::Fofa(Sampler::S), Algorithm::Smc]);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = Path::new(".");
        assert!(ExperimentConfig::parse("domain = d\nquery = q\n", base).is_err());
        assert!(ExperimentConfig::parse(
            "domain = d\ntrace = t\nquery = q\nsamples = 0\nalgorithms = smc\n",
            base
        )
        .is_err());
        assert!(ExperimentConfig::parse("bogus = 1\n", base).is_err());
        assert!(ExperimentConfig::parse(
            "domain = d\ntrace = t\nquery = q\nsamples = 5\nalgorithms = magic\n",
            base
        )
        .is_err());
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        assert_eq!(mean_stderr(&[2.0, 2.0, 2.0]), (2.0, 0.0));
    }
}
