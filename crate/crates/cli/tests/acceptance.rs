//! Acceptance checks, one line per criterion. Exits nonzero if any fails.

use std::io;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use logiparticle::eval::{
    parse_trace, problem_of, run_experiment, state_probabilities, Algorithm, ExperimentConfig,
    GroundModel, ResultRow, TraceGenerator,
};
use logiparticle::filter::{fofa, s_actions, FilterContext, FilterOptions, FilterProblem, Sampler};
use logiparticle::fol::{parse_formula, Atom, Formula, Term, Universe};
use logiparticle::pram::{parse_domain, GroundDetAction, MlnPrior, Pram, WeightedFormula};
use logiparticle::prior::{brute_force_prior, PriorModel};
use logiparticle::transition::{CurrentStateFormula, Dynamics};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn domain(name: &str) -> Arc<Pram> {
    let src = std::fs::read_to_string(root().join("domains").join(name)).unwrap();
    Arc::new(parse_domain(&src).unwrap())
}

fn config(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&root().join("configs").join(name)).unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn literal(rng: &mut ChaCha8Rng, u: &Universe) -> Formula {
    let a = Formula::Atom(u.fluent(rng.gen_range(0..u.len())).clone());
    if rng.gen_bool(0.5) {
        Formula::not(a)
    } else {
        a
    }
}

/// Random ground formula over the universe's fluents.
fn random_formula(rng: &mut ChaCha8Rng, u: &Universe, depth: usize) -> Formula {
    if depth == 0 || rng.gen_bool(0.3) {
        return literal(rng, u);
    }
    let sub = |rng: &mut ChaCha8Rng| random_formula(rng, u, depth - 1);
    match rng.gen_range(0..5) {
        0 => Formula::and((0..rng.gen_range(2..4)).map(|_| sub(rng)).collect()),
        1 => Formula::or((0..rng.gen_range(2..4)).map(|_| sub(rng)).collect()),
        2 => Formula::implies(sub(rng), sub(rng)),
        3 => Formula::iff(sub(rng), sub(rng)),
        _ => Formula::not(sub(rng)),
    }
}

/// Random closed formula that may quantify over the first argument of a
/// fluent. Only valid where every fluent ranges over every constant.
fn random_closed(rng: &mut ChaCha8Rng, u: &Universe) -> Formula {
    if !rng.gen_bool(0.3) {
        return random_formula(rng, u, 2);
    }
    let mut atom: Atom = u.fluent(rng.gen_range(0..u.len())).clone();
    atom.args[0] = Term::var("x");
    let body = Formula::or(vec![Formula::Atom(atom), literal(rng, u)]);
    if rng.gen_bool(0.5) {
        Formula::forall("x", body)
    } else {
        Formula::exists("x", body)
    }
}

fn random_prior(rng: &mut ChaCha8Rng, u: &Universe, closed: bool) -> MlnPrior {
    let formulas = (0..rng.gen_range(1..=5))
        .map(|_| WeightedFormula {
            weight: rng.gen_range(-3.0..=3.0),
            formula: if closed {
                random_closed(rng, u)
            } else {
                random_formula(rng, u, 2)
            },
        })
        .collect();
    MlnPrior { formulas }
}

fn ground_det_actions(p: &Pram) -> Vec<GroundDetAction> {
    p.det_actions
        .iter()
        .flat_map(|d| {
            p.groundings(d.params.len())
                .into_iter()
                .map(move |args| GroundDetAction {
                    name: d.name.clone(),
                    args,
                })
        })
        .collect()
}

const REGRESSION_SUITE: [&str; 30] = [
    "true",
    "false",
    "In(O)",
    "~In(D)",
    "At(O,L2)",
    "At(B,L1)",
    "At(D,L2) & In(D)",
    "At(O,L1) | At(O,L2)",
    "At(B,L1) <=> At(O,L1)",
    "In(O) => At(O,L2)",
    "~(At(B,L2) & In(O))",
    "At(O,L1) & At(D,L1) & At(B,L1)",
    "In(O) | In(D)",
    "In(O) <=> In(D)",
    "At(B,L2) => (In(D) => At(D,L2))",
    "forall ?o . In(?o) => At(?o,L2)",
    "exists ?o . In(?o)",
    "forall ?x . At(?x,L1) | At(?x,L2)",
    "exists ?x . At(?x,L1) & ~In(?x)",
    "forall ?l . At(B,?l) => At(O,?l)",
    "exists ?l . At(O,?l) & At(B,?l)",
    "forall ?x . ~(At(?x,L1) & At(?x,L2))",
    "exists ?x . exists ?l . At(?x,?l) & In(?x)",
    "forall ?o . forall ?l . In(?o) & At(B,?l) => At(?o,?l)",
    "~In(D) | At(D,L1)",
    "(At(O,L1) & ~In(O)) | (At(O,L2) & In(O))",
    "~At(B,L1) & ~At(B,L2)",
    "exists ?l . At(D,?l) & ~At(B,?l)",
    "forall ?x . In(?x) => exists ?l . At(?x,?l) & At(B,?l)",
    "(In(O) => At(O,L1)) & (In(D) => At(D,L1))",
];

fn regression_soundness() -> Outcome {
    let start = Instant::now();
    let p = domain("briefcase.pram");
    let dy = Dynamics::new(p.clone());
    let u = p.universe();
    let actions = ground_det_actions(&p);
    let (mut checks, mut mismatches) = (0usize, 0usize);
    for src in REGRESSION_SUITE {
        let f = parse_formula(src).unwrap();
        let fc = u.compile(&f).unwrap();
        for a in &actions {
            let g = u.compile(&dy.regress(&f, a).unwrap()).unwrap();
            let step = dy.compiled(a).unwrap();
            for s in u.states() {
                if step.applicable(s) {
                    checks += 1;
                    if g.eval(s) != fc.eval(step.apply(s).unwrap()) {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    let took = start.elapsed();
    outcome(
        mismatches == 0 && checks > 0 && took < Duration::from_secs(10),
        format!("{mismatches} mismatches in {checks} checks"),
    )
}

fn progression_soundness() -> Outcome {
    let start = Instant::now();
    let p = domain("briefcase.pram");
    let dy = Dynamics::new(p.clone());
    let u = p.universe();
    let actions = ground_det_actions(&p);
    // Successor values come from regressing each fluent, not from `apply`.
    let fluent_regressions: Vec<Vec<Formula>> = actions
        .iter()
        .map(|a| {
            (0..u.len())
                .map(|i| dy.regress(&Formula::Atom(u.fluent(i).clone()), a).unwrap())
                .collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for _ in 0..500 {
        let cur_f = random_formula(&mut rng, u, 3);
        let o = if rng.gen_bool(0.3) {
            Formula::True
        } else {
            random_formula(&mut rng, u, 2)
        };
        let k = rng.gen_range(0..actions.len());
        let a = &actions[k];
        let cur = CurrentStateFormula::new(u, &cur_f).unwrap();
        let next = dy.progress(&cur, a, &o).unwrap();
        let pre = p.precondition(a).unwrap();
        let mut expect = logiparticle::fol::ModelSet::empty(u.len());
        for s in u.states() {
            if !u.evaluate(s, &cur_f).unwrap() || !u.evaluate(s, &pre).unwrap() {
                continue;
            }
            let mut t = s;
            for (i, g) in fluent_regressions[k].iter().enumerate() {
                t = t.with(i, u.evaluate(s, g).unwrap());
            }
            if u.evaluate(t, &o).unwrap() {
                expect.insert(t);
            }
        }
        if next.models != expect || u.models(&next.symbolic).unwrap() != expect {
            mismatches += 1;
        }
    }
    let took = start.elapsed();
    outcome(
        mismatches == 0 && took < Duration::from_secs(30),
        format!("{mismatches} mismatches in 500 triples"),
    )
}

/// Query probability after a fixed execution sequence, by pushing every
/// initial state forward and dropping runs that break a precondition or an
/// observation.
fn forward_oracle(p: &FilterProblem, q: &Formula, seq: &[GroundDetAction]) -> f64 {
    let u = p.pram.universe();
    let dy = Dynamics::new(p.pram.clone());
    let prior = state_probabilities(p).unwrap();
    let obs: Vec<_> = p.observations.iter().map(|o| u.compile(o).unwrap()).collect();
    let q = u.compile(q).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    'states: for s0 in u.states() {
        if !obs[0].eval(s0) {
            continue;
        }
        let mut s = s0;
        for (t, da) in seq.iter().enumerate() {
            if !dy.applicable(s, da).unwrap() {
                continue 'states;
            }
            s = dy.apply(s, da).unwrap();
            if !obs[t + 1].eval(s) {
                continue 'states;
            }
        }
        den += prior[s0.0 as usize];
        if q.eval(s) {
            num += prior[s0.0 as usize];
        }
    }
    num / den
}

fn particle_equivalence() -> Outcome {
    let doms = [domain("briefcase.pram"), domain("depots.pram")];
    let gens: Vec<TraceGenerator> = doms.iter().map(|d| TraceGenerator::new(d).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut checked, mut worst) = (0, 0.0f64);
    let mut attempt = 0u64;
    while checked < 200 {
        attempt += 1;
        let k = rng.gen_range(0..doms.len());
        let pram = &doms[k];
        let u = pram.universe();
        let h = rng.gen_range(1..=5);
        let trace = gens[k].generate(h, rng.gen_range(0.0..1.0), attempt).unwrap();
        let q = random_formula(&mut rng, u, 2);
        let p = problem_of(pram.clone(), trace, &q.to_string()).unwrap();
        let ctx = FilterContext::new(p.clone()).unwrap();
        let mut prefix = Vec::new();
        for a in &p.actions {
            let live: Vec<GroundDetAction> = pram
                .executions(a)
                .unwrap()
                .into_iter()
                .filter(|da| {
                    let mut next = prefix.clone();
                    next.push(da.clone());
                    ctx.is_live(&next).unwrap()
                })
                .collect();
            let Some(da) = live.choose(&mut rng) else {
                break;
            };
            prefix.push(da.clone());
        }
        if prefix.len() < p.actions.len() {
            continue;
        }
        let v = ctx.pfof(&p.query, &prefix).unwrap();
        worst = worst.max((v - forward_oracle(&p, &p.query, &prefix)).abs());
        checked += 1;
    }
    outcome(worst <= 1e-9, format!("max error {worst:.2e} over {checked} particles"))
}

fn prior_vs_brute_force() -> Outcome {
    let layouts: [(&[&str], &[(&str, usize)]); 4] = [
        (&["A", "B"], &[("P", 1), ("Q", 1), ("R", 2)]),
        (&["A", "B"], &[("P", 2), ("Q", 1)]),
        (&["A", "B", "C"], &[("P", 1), ("Q", 1), ("S", 1)]),
        (&["A", "B"], &[("P", 1), ("Q", 2), ("S", 1), ("T", 1)]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst, mut identity) = (0.0f64, 0.0f64);
    let mut cases = 0;
    while cases < 200 {
        let (cs, fs) = layouts[rng.gen_range(0..layouts.len())];
        let u = Universe::full(cs, fs).unwrap();
        let prior = random_prior(&mut rng, &u, true);
        let a = random_closed(&mut rng, &u);
        let b = random_closed(&mut rng, &u);
        let g = if rng.gen_bool(0.3) {
            Formula::True
        } else {
            random_closed(&mut rng, &u)
        };
        let bg = Formula::and(vec![b.clone(), g.clone()]);
        if u.models(&bg).unwrap().is_empty() {
            continue;
        }
        cases += 1;
        let model = PriorModel::new(&prior, &u).unwrap();
        let fast = model.prior_fof(&a, &g).unwrap();
        let slow = brute_force_prior(&a, &g, &prior, &u).unwrap();
        worst = worst.max((fast - slow).abs());
        let ab = Formula::and(vec![a.clone(), b.clone()]);
        let joint = model.prior_fof(&ab, &g).unwrap();
        let chain = model.prior_fof(&a, &bg).unwrap() * model.prior_fof(&b, &g).unwrap();
        identity = identity.max((joint - chain).abs());
        let not_a = model.prior_fof(&Formula::not(a.clone()), &g).unwrap();
        identity = identity.max((fast + not_a - 1.0).abs());
    }
    outcome(
        worst <= 1e-9 && identity <= 1e-9,
        format!("max error {worst:.2e}, identity error {identity:.2e} over {cases} priors"),
    )
}

fn rows_for<'a>(rows: &'a [ResultRow], alg: &str, n: usize) -> Vec<&'a ResultRow> {
    let mut out: Vec<&ResultRow> = rows
        .iter()
        .filter(|r| r.algorithm == alg && r.n == Some(n))
        .collect();
    out.sort_by_key(|r| r.run);
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn kls(rows: &[&ResultRow]) -> Option<Vec<f64>> {
    rows.iter().map(|r| r.kl).collect()
}

fn weights_and_convergence() -> Outcome {
    let pram = domain("briefcase.pram");
    let src = "obs: At(B,L1) & ~At(B,L2) & At(O,L1) & ~At(O,L2) & ~In(O)\nact: PutIn(O)\n";
    let p = problem_of(pram.clone(), parse_trace(&pram, src).unwrap(), "In(O)").unwrap();
    let exact = GroundModel::new(&p).unwrap().exact().unwrap();
    let ctx = FilterContext::new(p).unwrap();

    let mut uniform = true;
    let fig8 = FilterContext::new(config("fig8.cfg").problem().unwrap()).unwrap();
    for (c, n) in [(&ctx, 1000usize), (&fig8, 500)] {
        let set = s_actions(c, &FilterOptions::new(n, 1)).unwrap();
        uniform &= set.killed == 0
            && set.particles.len() == n
            && set.particles.iter().all(|x| x.weight == 1.0 / n as f64);
    }

    let n = 10_000;
    let band = 3.0 * (0.9f64 * 0.1 / n as f64).sqrt();
    let inside = (0..50u64)
        .filter(|&seed| {
            let e = fofa(&ctx, Sampler::S, &FilterOptions::new(n, seed)).unwrap();
            (e.value - 0.9).abs() <= band
        })
        .count();

    let mut cfg = config("fig8.cfg");
    cfg.samples = vec![50, 2000];
    cfg.algorithms = vec![Algorithm::Fofa(Sampler::S)];
    let rows = run_experiment(&cfg, &mut io::sink(), &mut |_| {}).unwrap();
    let small = kls(&rows_for(&rows, "fofa-s", 50)).map(|k| mean(&k));
    let large = kls(&rows_for(&rows, "fofa-s", 2000)).map(|k| mean(&k));
    let ordered = matches!((small, large), (Some(s), Some(l)) if l < s);
    outcome(
        uniform && (exact - 0.9).abs() < 1e-12 && inside >= 48 && ordered,
        format!(
            "uniform weights {uniform}, {inside}/50 runs within 3 sigma, mean KL {:.2e} at N=50 vs {:.2e} at N=2000",
            small.unwrap_or(f64::NAN),
            large.unwrap_or(f64::NAN)
        ),
    )
}

/// One-sided paired t-test that `b` exceeds `a` on average.
fn paired_p_value(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let m = mean(&d);
    let sd = (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd == 0.0 {
        return if m > 0.0 { 0.0 } else { 1.0 };
    }
    let t = m / (sd / n.sqrt());
    1.0 - StudentsT::new(0.0, 1.0, n - 1.0).unwrap().cdf(t)
}

fn ordering_against_smc() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["fig8.cfg", "fig7.cfg"] {
        let mut cfg = config(name);
        cfg.samples = vec![50, 100, 500];
        cfg.runs = 50;
        cfg.algorithms = vec![Algorithm::Fofa(Sampler::S), Algorithm::Smc];
        let rows = run_experiment(&cfg, &mut io::sink(), &mut |_| {}).unwrap();
        for n in [50, 100, 500] {
            let f = kls(&rows_for(&rows, "fofa-s", n));
            let s = kls(&rows_for(&rows, "smc", n));
            let (Some(f), Some(s)) = (f, s) else {
                pass = false;
                parts.push(format!("{name} N={n}: dead runs"));
                continue;
            };
            let p = paired_p_value(&f, &s);
            let ok = f.len() == 50 && s.len() == 50 && mean(&f) <= mean(&s) && p < 0.05;
            pass &= ok;
            parts.push(format!("{name} N={n}: {:.1e} vs {:.1e} p={p:.1e}", mean(&f), mean(&s)));
        }
    }
    outcome(pass, parts.join("; "))
}

fn exact_oracles_agree() -> Outcome {
    let bases = [domain("briefcase.pram"), domain("depots.pram")];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut cases, mut worst) = (0, 0.0f64);
    let mut attempt = 0u64;
    while cases < 100 {
        attempt += 1;
        let mut pram = (*bases[rng.gen_range(0..bases.len())]).clone();
        let u = pram.universe().clone();
        pram.prior = random_prior(&mut rng, &u, false);
        let pram = Arc::new(pram);
        let trace = TraceGenerator::new(&pram)
            .unwrap()
            .generate(rng.gen_range(1..=4), rng.gen_range(0.0..1.0), attempt)
            .unwrap();
        let q = random_formula(&mut rng, &u, 2);
        let p = problem_of(pram, trace, &q.to_string()).unwrap();
        let g = GroundModel::new(&p).unwrap();
        let (Ok(a), Ok(b)) = (g.exact(), g.exact_joint()) else {
            continue;
        };
        worst = worst.max((a - b).abs());
        cases += 1;
    }
    outcome(worst <= 1e-12, format!("max difference {worst:.2e} over {cases} problems"))
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_logiparticle"))
}

fn deterministic_csv() -> Outcome {
    let cfg = root().join("configs/fig8.cfg");
    let run = || binary().arg("experiment").arg(&cfg).args(["--out", "-"]).output().unwrap();
    let (a, b) = (run(), run());
    let ok = a.status.success() && b.status.success() && !a.stdout.is_empty() && a.stdout == b.stdout;
    let lines = a.stdout.iter().filter(|&&c| c == b'\n').count();
    outcome(ok, format!("{lines} lines, identical: {}", a.stdout == b.stdout))
}

fn validation_catches_defects() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/broken");
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    let missed: Vec<String> = files
        .iter()
        .filter(|f| binary().arg("validate").arg(f).output().unwrap().status.code() != Some(1))
        .map(|f| f.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let mut detail = format!("{}/{} rejected with exit 1", files.len() - missed.len(), files.len());
    if !missed.is_empty() {
        detail.push_str(&format!("; missed {}", missed.join(", ")));
    }
    outcome(files.len() == 10 && missed.is_empty(), detail)
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("regression soundness", regression_soundness),
        ("progression soundness", progression_soundness),
        ("particle value vs forward simulation", particle_equivalence),
        ("prior inference vs brute force", prior_vs_brute_force),
        ("uniform weights and convergence", weights_and_convergence),
        ("exact sampling beats ground SMC", ordering_against_smc),
        ("exact routes agree", exact_oracles_agree),
        ("deterministic experiment output", deterministic_csv),
        ("validation mutation suite", validation_catches_defects),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] {} {name}: {} ({:.1}s)",
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
