use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use logiparticle::eval::{
    exact_posterior, exact_posterior_joint, kl, parse_trace, problem_of, random_trace, run_experiment,
    smc_baseline, write_trace, TraceGenerator, Algorithm, ExperimentConfig, GroundModel, TraceSource,
};
use logiparticle::fol::Formula;
use logiparticle::pram::{parse_domain, Pram};

fn domains_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../domains")
}

fn domain(name: &str) -> Arc<Pram> {
    Arc::new(parse_domain(&std::fs::read_to_string(domains_dir().join(name)).unwrap()).unwrap())
}

const KNOWN_START: &str = "obs: At(B,L1) & ~At(B,L2) & At(O,L1) & ~At(O,L2) & ~In(O)\n";

#[test]
fn single_put_in_has_posterior_point_nine() {
    let pram = domain("briefcase.pram");
    let trace = parse_trace(&pram, &format!("{KNOWN_START}act: PutIn(O)\n")).unwrap();
    let p = problem_of(pram.clone(), trace.clone(), "In(O)").unwrap();
    assert!((exact_posterior(&p).unwrap() - 0.9).abs() < 1e-12);
    assert!((exact_posterior_joint(&p).unwrap() - 0.9).abs() < 1e-12);
    let t = problem_of(pram, trace, "true").unwrap();
    assert_eq!(exact_posterior(&t).unwrap(), 1.0);
}

#[test]
fn exact_routes_agree_on_random_traces() {
    for name in ["briefcase.pram", "depots.pram"] {
        let pram = domain(name);
        let u = pram.universe();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for k in 0..20u64 {
            let trace = random_trace(&pram, 1 + (k as usize % 4), 0.5, k).unwrap();
            let i = rng.gen_range(0..u.len());
            let j = rng.gen_range(0..u.len());
            let q = Formula::or(vec![
                Formula::Atom(u.fluent(i).clone()),
                Formula::not(Formula::Atom(u.fluent(j).clone())),
            ]);
            let p = problem_of(pram.clone(), trace, &q.to_string()).unwrap();
            let a = exact_posterior(&p).unwrap();
            let b = exact_posterior_joint(&p).unwrap();
            assert!((a - b).abs() < 1e-12, "{name} #{k}: {a} vs {b}");
        }
    }
}

#[test]
fn smc_is_unbiased_on_single_step() {
    let pram = domain("briefcase.pram");
    let trace = parse_trace(&pram, &format!("{KNOWN_START}act: PutIn(O)\n")).unwrap();
    let p = problem_of(pram, trace, "In(O)").unwrap();
    let g = GroundModel::new(&p).unwrap();
    let n = 100;
    let runs = 200;
    let mean = (0..runs).map(|r| g.smc(n, r).unwrap().value).sum::<f64>() / runs as f64;
    let sigma = (0.9f64 * 0.1 / (n as f64 * runs as f64)).sqrt();
    assert!((mean - 0.9).abs() <= 3.0 * sigma, "{mean}");
}

#[test]
fn smc_on_certain_world_is_exact() {
    let pram = domain("briefcase.pram");
    let trace = parse_trace(&pram, &format!("{KNOWN_START}act: TakeOut(O)\n")).unwrap();
    let p = problem_of(pram, trace, "~In(O) & At(O,L1)").unwrap();
    for n in [1, 7, 50] {
        assert_eq!(smc_baseline(&p, n, 3).unwrap().value, 1.0);
    }
}

#[test]
fn kl_properties() {
    assert_eq!(kl(0.4, 0.4), 0.0);
    assert!((kl(0.5, 0.9) - 0.5108256237659907).abs() < 1e-12);
    for &(p, q) in &[(0.0, 0.3), (1.0, 0.2), (0.3, 0.0), (0.7, 1.0), (0.5, 0.51)] {
        let d = kl(p, q);
        assert!(d.is_finite() && d >= 0.0);
    }
}

#[test]
fn unobserved_random_traces_observe_nothing() {
    let pram = domain("briefcase.pram");
    let t = random_trace(&pram, 5, 0.0, 9).unwrap();
    assert_eq!(t.actions.len(), 5);
    assert!(t.observations.iter().all(|o| *o == Formula::True));
}

#[test]
fn fully_observed_random_traces_are_consistent() {
    let pram = domain("depots.pram");
    for seed in 0..20 {
        let t = random_trace(&pram, 4, 1.0, seed).unwrap();
        assert!(t.observations.iter().all(|o| *o != Formula::True));
        let text = write_trace(&t);
        assert_eq!(parse_trace(&pram, &text).unwrap(), t);
        let p = problem_of(pram.clone(), t, "true").unwrap();
        assert_eq!(exact_posterior(&p).unwrap(), 1.0);
    }
}

#[test]
fn random_traces_never_contradict_themselves() {
    let mut failures = 0;
    for (k, name) in ["briefcase.pram", "depots.pram"].iter().enumerate() {
        let pram = domain(name);
        let gen = TraceGenerator::new(&pram).unwrap();
        for seed in 0..500u64 {
            let rate = (seed % 5) as f64 / 4.0;
            let t = gen.generate(1 + (seed as usize % 5), rate, seed * 2 + k as u64).unwrap();
            let p = problem_of(pram.clone(), t, "true").unwrap();
            if exact_posterior(&p).is_err() {
                failures += 1;
            }
        }
    }
    assert_eq!(failures, 0);
}

#[test]
fn trace_parse_errors_carry_line_numbers() {
    let pram = domain("briefcase.pram");
    let err = parse_trace(&pram, "obs: In(O)\n\nact: Fly(O)\n").unwrap_err();
    assert!(err.to_string().contains("Fly"), "{err}");
    let err = parse_trace(&pram, "obs: In(O)\nwat: x\n").unwrap_err();
    assert!(err.to_string().contains("2:1"), "{err}");
    let t = parse_trace(&pram, "obs: In(O)\nobs: At(B,L1)\nact: PutIn(D)\n").unwrap();
    assert_eq!(t.observations.len(), 2);
    assert_eq!(t.observations[0], pram.formula("In(O) & At(B,L1)").unwrap());
    assert_eq!(t.observations[1], Formula::True);
}

fn config(algorithms: Vec<Algorithm>, runs: usize) -> ExperimentConfig {
    ExperimentConfig {
        domain: domains_dir().join("briefcase.pram"),
        trace: TraceSource::File(domains_dir().join("briefcase_t4.trc")),
        query: "At(O,L2) & At(D,L1)".into(),
        samples: vec![20, 40],
        runs,
        algorithms,
        seed: 5,
        ess_threshold: 0.5,
        timing: false,
    }
}

#[test]
fn exact_only_experiment_has_zero_kl() {
    let mut out = Vec::new();
    let rows = run_experiment(&config(vec![Algorithm::Exact], 3), &mut out, &mut |_| {}).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].kl, Some(0.0));
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("algorithm,N,run,seed,estimate,exact,kl,ess_min,killed,wall_ms\n"));
}

#[test]
fn experiment_csv_is_deterministic() {
    use logiparticle::filter::Sampler;
    let algs = vec![
        Algorithm::Fofa(Sampler::S),
        Algorithm::Fofa(Sampler::Sr),
        Algorithm::Fofa(Sampler::SrNoState),
        Algorithm::Smc,
    ];
    let cfg = config(algs, 6);
    let mut a = Vec::new();
    let mut b = Vec::new();
    let rows = run_experiment(&cfg, &mut a, &mut |_| {}).unwrap();
    run_experiment(&cfg, &mut b, &mut |_| {}).unwrap();
    assert_eq!(a, b);
    assert_eq!(rows.len(), 4 * 2 * 6);
    let text = String::from_utf8(a).unwrap();
    // header + runs + mean and stderr per (algorithm, N)
    assert_eq!(text.lines().count(), 1 + rows.len() + 4 * 2 * 2);
    assert!(rows.iter().all(|r| r.kl.map_or(true, |k| k >= 0.0)));
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["fig7.cfg", "fig8.cfg"] {
        let cfg = ExperimentConfig::load(&dir.join(name)).unwrap();
        let p = cfg.problem().unwrap();
        let v = exact_posterior(&p).unwrap();
        assert!(v > 0.05 && v < 0.95, "{name}: {v}");
    }
}
