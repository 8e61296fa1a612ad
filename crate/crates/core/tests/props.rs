use proptest::prelude::*;

use logiparticle::fol::{parse_formula, simplify, to_cnf, Atom, Formula, Term, Universe};
use logiparticle::pram::{parse_domain, write_domain, MlnPrior, WeightedFormula};
use logiparticle::prior::{brute_force_prior, PriorModel};

fn universe() -> Universe {
    Universe::full(&["A", "B"], &[("P", 1), ("Q", 1), ("R", 2)]).unwrap()
}

fn leaf() -> impl Strategy<Value = Formula> {
    let u = universe();
    let atoms: Vec<Formula> = u.fluents().iter().cloned().map(Formula::Atom).collect();
    prop_oneof![
        1 => Just(Formula::True),
        1 => Just(Formula::False),
        8 => proptest::sample::select(atoms),
    ]
}

fn formula() -> impl Strategy<Value = Formula> {
    leaf().prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            proptest::collection::vec(inner.clone(), 2..4).prop_map(Formula::And),
            proptest::collection::vec(inner.clone(), 2..4).prop_map(Formula::Or),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::iff(a, b)),
            (inner, any::<bool>(), any::<bool>()).prop_map(|(body, all, first)| {
                let arg = if first { "A" } else { "B" };
                let atom = Atom::new("R", vec![Term::var("x"), Term::constant(arg)]);
                let body = Formula::and(vec![Formula::Atom(atom), body]);
                if all {
                    Formula::forall("x", body)
                } else {
                    Formula::exists("x", body)
                }
            }),
        ]
    })
}

fn prior() -> impl Strategy<Value = MlnPrior> {
    proptest::collection::vec((-3.0f64..3.0, formula()), 1..5).prop_map(|fs| MlnPrior {
        formulas: fs
            .into_iter()
            .map(|(weight, formula)| WeightedFormula { weight, formula })
            .collect(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn printed_formulas_parse_back(f in formula()) {
        let back = parse_formula(&f.to_string()).unwrap();
        let u = universe();
        prop_assert_eq!(u.models(&back).unwrap(), u.models(&f).unwrap());
        prop_assert_eq!(back.to_string(), f.to_string());
    }

    #[test]
    fn simplification_keeps_models(f in formula()) {
        let u = universe();
        prop_assert_eq!(u.models(&simplify(&f)).unwrap(), u.models(&f).unwrap());
    }

    #[test]
    fn clause_form_keeps_models(f in formula()) {
        let u = universe();
        let g = u.ground(&f).unwrap();
        let cnf = to_cnf(&g).unwrap();
        prop_assert_eq!(u.models(&cnf.to_formula()).unwrap(), u.models(&f).unwrap());
    }

    #[test]
    fn prior_inference_matches_enumeration(p in prior(), q in formula(), e in formula()) {
        let u = universe();
        prop_assume!(!u.models(&e).unwrap().is_empty());
        let fast = PriorModel::new(&p, &u).unwrap().prior_fof(&q, &e).unwrap();
        let slow = brute_force_prior(&q, &e, &p, &u).unwrap();
        prop_assert!((fast - slow).abs() < 1e-9, "{} vs {}", fast, slow);
    }
}

#[test]
fn shipped_domains_survive_printing() {
    for name in ["briefcase.pram", "depots.pram"] {
        let path = format!("{}/../../domains/{name}", env!("CARGO_MANIFEST_DIR"));
        let p = parse_domain(&std::fs::read_to_string(path).unwrap()).unwrap();
        let text = write_domain(&p);
        assert_eq!(parse_domain(&text).unwrap(), p, "{name}");
    }
}
