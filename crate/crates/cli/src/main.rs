use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use logiparticle::eval::{kl, parse_trace, problem_of, run_experiment, Algorithm, ExperimentConfig, GroundModel};
use logiparticle::filter::{fofa, FilterContext, FilterOptions, ResampleScheme, Sampler};
use logiparticle::fol::enumeration_cap;
use logiparticle::pram::{parse_domain, validate, Pram};
use logiparticle::prior::{FactorSource, PriorModel};
use logiparticle::transition::Dynamics;
use logiparticle::Error;

#[derive(Parser)]
#[command(name = "logiparticle", version, about = "First-order particle filtering for relational action models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    FofaS,
    FofaSr,
    FofaSrNostate,
    Smc,
    Exact,
}

impl From<Algo> for Algorithm {
    fn from(a: Algo) -> Algorithm {
        match a {
            Algo::FofaS => Algorithm::Fofa(Sampler::S),
            Algo::FofaSr => Algorithm::Fofa(Sampler::Sr),
            Algo::FofaSrNostate => Algorithm::Fofa(Sampler::SrNoState),
            Algo::Smc => Algorithm::Smc,
            Algo::Exact => Algorithm::Exact,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Multinomial,
    Systematic,
}

#[derive(Subcommand)]
enum Command {
    /// Check guard partitions and outcome distributions of a domain.
    Validate { domain: PathBuf },
    /// Estimate the posterior probability of a query after a trace.
    Filter {
        domain: PathBuf,
        trace: PathBuf,
        query: String,
        #[arg(long, value_enum, default_value = "fofa-s")]
        algo: Algo,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Resampling threshold as a fraction of the particle count.
        #[arg(long, default_value_t = 0.5)]
        ess_threshold: f64,
        #[arg(long, value_enum, default_value = "multinomial")]
        resample: Scheme,
        /// Also compute the exact posterior and the KL divergence to it.
        #[arg(long)]
        with_exact: bool,
        #[arg(long)]
        json: bool,
    },
    /// Run an expected-KL sweep described by a config file and write CSV.
    Experiment {
        config: PathBuf,
        /// Output file, or `-` for standard output.
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Show regressed formulas or the ground prior network of a query.
    Inspect {
        domain: PathBuf,
        /// Regress a closed formula through the deterministic actions that
        /// follow it, last action first.
        #[arg(long, num_args = 1.., value_names = ["QUERY", "ACTION"], conflicts_with = "network")]
        regress: Option<Vec<String>>,
        /// Print the network used to answer a closed formula.
        #[arg(long, value_name = "FORMULA")]
        network: Option<String>,
    },
}

/// 1 for problems with the model or the input text, 2 for failures while
/// running.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_)
        | Error::ZeroEvidence
        | Error::AllParticlesDead
        | Error::UniverseTooLarge { .. }
        | Error::NoApplicableAction(_)
        | Error::PreconditionViolated(_)
        | Error::NoPartition(_)
        | Error::MultiplePartitions(_) => 2,
        _ => 1,
    }
}

fn hint(e: &Error) -> Option<&'static str> {
    match e {
        Error::ZeroEvidence => Some("the observations contradict the initial observation or the prior"),
        Error::AllParticlesDead => Some("every sampled execution contradicted an observation; try more particles"),
        _ => None,
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn load_domain(path: &Path) -> Result<Pram, Error> {
    parse_domain(&read(path)?)
}

#[derive(Serialize)]
struct FilterReport {
    algorithm: &'static str,
    n: Option<usize>,
    seed: Option<u64>,
    estimate: f64,
    exact: Option<f64>,
    kl: Option<f64>,
    killed: usize,
    ess_min: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_filter(
    domain: &Path,
    trace: &Path,
    query: &str,
    algo: Algo,
    n: usize,
    seed: u64,
    ess_threshold: f64,
    resample: Scheme,
    with_exact: bool,
    json: bool,
) -> Result<(), Error> {
    let pram = Arc::new(load_domain(domain)?);
    let trace = parse_trace(&pram, &read(trace)?)?;
    let problem = problem_of(pram, trace, query)?;
    if !(ess_threshold > 0.0 && ess_threshold <= 1.0) {
        return Err(Error::InvalidArgument("--ess-threshold must lie in (0, 1]".into()));
    }
    let algorithm = Algorithm::from(algo);
    let stochastic = algorithm != Algorithm::Exact;
    let mut exact = None;
    let (estimate, killed, ess_min) = match algorithm {
        Algorithm::Exact => {
            let v = GroundModel::new(&problem)?.exact()?;
            exact = Some(v);
            (v, 0, None)
        }
        Algorithm::Smc => {
            let e = GroundModel::new(&problem)?.smc(n, seed)?;
            let m = e.ess_history.iter().copied().fold(n as f64, f64::min);
            (e.value, e.killed, Some(m))
        }
        Algorithm::Fofa(sampler) => {
            let mut opts = FilterOptions::new(n, seed);
            opts.ess_threshold = ess_threshold * n as f64;
            opts.scheme = match resample {
                Scheme::Multinomial => ResampleScheme::Multinomial,
                Scheme::Systematic => ResampleScheme::Systematic,
            };
            let ctx = FilterContext::new(problem.clone())?;
            let e = fofa(&ctx, sampler, &opts)?;
            let m = e.ess_history.iter().copied().fold(f64::INFINITY, f64::min);
            (e.value, e.killed, m.is_finite().then_some(m))
        }
    };
    if with_exact && exact.is_none() {
        exact = Some(GroundModel::new(&problem)?.exact()?);
    }
    let report = FilterReport {
        algorithm: algorithm.name(),
        n: stochastic.then_some(n),
        seed: stochastic.then_some(seed),
        estimate,
        exact: exact.filter(|_| with_exact || !stochastic),
        kl: exact.filter(|_| with_exact).map(|p| kl(p, estimate)),
        killed,
        ess_min,
    };
    let mut out = io::stdout().lock();
    if json {
        serde_json::to_writer(&mut out, &report).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(out)?;
    } else {
        writeln!(out, "estimate: {}", report.estimate)?;
        if with_exact {
            writeln!(out, "exact: {}", report.exact.unwrap_or(estimate))?;
            writeln!(out, "kl: {}", report.kl.unwrap_or(0.0))?;
        }
        if stochastic {
            write!(out, "algorithm={} n={n} seed={seed} killed={killed}", report.algorithm)?;
            if let Some(m) = ess_min {
                write!(out, " ess_min={m}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

fn cmd_experiment(config: &Path, out: &str) -> Result<(), Error> {
    let cfg = ExperimentConfig::load(config)?;
    let mut progress = |msg: &str| eprintln!("{msg}");
    if out == "-" {
        let stdout = io::stdout();
        let mut lock = stdout.lock();
        run_experiment(&cfg, &mut lock, &mut progress)?;
    } else {
        let mut file = fs::File::create(out).map_err(|e| Error::Io(format!("{out}: {e}")))?;
        run_experiment(&cfg, &mut file, &mut progress)?;
    }
    Ok(())
}

fn cmd_inspect(domain: &Path, regress: Option<&[String]>, network: Option<&str>) -> Result<(), Error> {
    let pram = Arc::new(load_domain(domain)?);
    let mut out = io::stdout().lock();
    if let Some(args) = regress {
        let query = pram.formula(&args[0])?;
        let actions = args[1..]
            .iter()
            .map(|a| pram.parse_det(a))
            .collect::<Result<Vec<_>, _>>()?;
        let dynamics = Dynamics::new(pram.clone());
        let f = logiparticle::fol::simplify(&dynamics.reg_seq(&query, &actions)?);
        writeln!(out, "{f}")?;
    } else if let Some(src) = network {
        let f = pram.formula(src)?;
        let model = PriorModel::new(&pram.prior, pram.universe())?;
        let clauses = model.clauses(&f)?;
        let net = model.query_network(&[&clauses], true);
        let u = pram.universe();
        writeln!(out, "nodes: {}", net.nodes.len())?;
        for &v in &net.nodes {
            writeln!(out, "  {}", u.fluent(v))?;
        }
        writeln!(out, "factors: {}", net.factors.len())?;
        for factor in &net.factors {
            let scope: Vec<String> = factor.scope.iter().map(|&v| u.fluent(v).to_string()).collect();
            let what = match &factor.source {
                FactorSource::Prior { formula, grounding } => format!("prior #{formula}: {grounding}"),
                FactorSource::Indicator { clause } => format!("indicator: {clause}"),
                FactorSource::Derived => "derived".to_string(),
            };
            writeln!(out, "  [{}] {what}", scope.join(", "))?;
        }
        writeln!(out, "treewidth: {}", net.treewidth_estimate())?;
    } else {
        return Err(Error::InvalidArgument("inspect needs --regress or --network".into()));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Validate { domain } => {
            let pram = load_domain(&domain)?;
            let report = validate(&pram, enumeration_cap());
            println!("{report}");
            Ok(if report.ok() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Filter {
            domain,
            trace,
            query,
            algo,
            n,
            seed,
            ess_threshold,
            resample,
            with_exact,
            json,
        } => {
            cmd_filter(&domain, &trace, &query, algo, n, seed, ess_threshold, resample, with_exact, json)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Experiment { config, out } => {
            cmd_experiment(&config, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Inspect {
            domain,
            regress,
            network,
        } => {
            cmd_inspect(&domain, regress.as_deref(), network.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(h) = hint(&e) {
                eprintln!("hint: {h}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
