//! Model-preserving formula simplification.
//!
//! Negations are never pushed inward, so `simplify(~g)` stays `~simplify(g)`
//! unless `g` folds to a constant or is itself a negation.

use std::collections::HashSet;

use super::{Atom, Formula, Name, Term};

pub fn simplify(f: &Formula) -> Formula {
    match f {
        Formula::True | Formula::False | Formula::Atom(_) => f.clone(),
        Formula::Not(a) => negate(simplify(a)),
        Formula::And(xs) => junction(xs.iter().map(simplify).collect(), true),
        Formula::Or(xs) => junction(xs.iter().map(simplify).collect(), false),
        Formula::Implies(a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            match (&a, &b) {
                (Formula::True, _) => b,
                (Formula::False, _) | (_, Formula::True) => Formula::True,
                (_, Formula::False) => negate(a),
                _ if a == b => Formula::True,
                _ => Formula::implies(a, b),
            }
        }
        Formula::Iff(a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            match (&a, &b) {
                (Formula::True, _) => b,
                (_, Formula::True) => a,
                (Formula::False, _) => negate(b),
                (_, Formula::False) => negate(a),
                _ if a == b => Formula::True,
                _ if is_negation_of(&a, &b) => Formula::False,
                _ => Formula::iff(a, b),
            }
        }
        Formula::Forall(v, body) | Formula::Exists(v, body) => {
            let body = simplify(body);
            if matches!(body, Formula::True | Formula::False) || !body.free_vars().contains(v) {
                return body;
            }
            match f {
                Formula::Forall(..) => Formula::Forall(v.clone(), Box::new(body)),
                _ => Formula::Exists(v.clone(), Box::new(body)),
            }
        }
    }
}

fn negate(f: Formula) -> Formula {
    match f {
        Formula::True => Formula::False,
        Formula::False => Formula::True,
        Formula::Not(inner) => *inner,
        other => Formula::not(other),
    }
}

fn is_negation_of(a: &Formula, b: &Formula) -> bool {
    matches!(a, Formula::Not(x) if **x == *b) || matches!(b, Formula::Not(x) if **x == *a)
}

fn as_literal(f: &Formula) -> Option<(&Atom, bool)> {
    match f {
        Formula::Atom(a) => Some((a, true)),
        Formula::Not(inner) => match &**inner {
            Formula::Atom(a) => Some((a, false)),
            _ => None,
        },
        _ => None,
    }
}

/// Simplifies an n-ary conjunction (`conj`) or disjunction of already
/// simplified children.
fn junction(children: Vec<Formula>, conj: bool) -> Formula {
    // The absorbing element for this connective, and its identity.
    let (zero, one) = if conj {
        (Formula::False, Formula::True)
    } else {
        (Formula::True, Formula::False)
    };
    let mut kids = children;
    loop {
        let mut flat: Vec<Formula> = Vec::with_capacity(kids.len());
        let mut seen = HashSet::new();
        for k in kids {
            let parts = match k {
                Formula::And(xs) if conj => xs,
                Formula::Or(xs) if !conj => xs,
                other => vec![other],
            };
            for p in parts {
                if p == zero {
                    return zero;
                }
                if p == one {
                    continue;
                }
                if seen.insert(p.clone()) {
                    flat.push(p);
                }
            }
        }
        for k in &flat {
            if let Formula::Not(inner) = k {
                if seen.contains(&**inner) {
                    return zero;
                }
            }
        }
        // Absorption: a & (a | b) = a, and dually.
        flat.retain(|k| {
            let inner = match k {
                Formula::Or(ys) if conj => ys,
                Formula::And(ys) if !conj => ys,
                _ => return true,
            };
            !inner.iter().any(|y| seen.contains(y))
        });

        // Unit propagation. In a conjunction each literal can be assumed true
        // inside its siblings; in a disjunction each literal can be assumed false.
        let units: Vec<(Atom, bool)> = flat
            .iter()
            .filter_map(as_literal)
            .map(|(a, pos)| (a.clone(), if conj { pos } else { !pos }))
            .collect();
        let mut changed = false;
        if !units.is_empty() {
            for k in flat.iter_mut() {
                if as_literal(k).is_some() {
                    continue;
                }
                let mut bound = Vec::new();
                let assigned = assign(k, &units, &mut bound);
                if assigned != *k {
                    *k = simplify(&assigned);
                    changed = true;
                }
            }
        }
        if !changed {
            return match flat.len() {
                0 => one,
                1 => flat.pop().expect("one child"),
                _ if conj => Formula::And(flat),
                _ => Formula::Or(flat),
            };
        }
        kids = flat;
    }
}

/// Replaces occurrences of the given ground-or-free literals by constants.
/// An atom is left alone where one of its variables is rebound.
fn assign(f: &Formula, units: &[(Atom, bool)], bound: &mut Vec<Name>) -> Formula {
    match f {
        Formula::True | Formula::False => f.clone(),
        Formula::Atom(a) => {
            for (u, value) in units {
                if u == a {
                    let shadowed = a
                        .args
                        .iter()
                        .any(|t| matches!(t, Term::Var(v) if bound.contains(v)));
                    if !shadowed {
                        return if *value { Formula::True } else { Formula::False };
                    }
                }
            }
            f.clone()
        }
        Formula::Not(a) => Formula::not(assign(a, units, bound)),
        Formula::And(xs) => Formula::And(xs.iter().map(|x| assign(x, units, bound)).collect()),
        Formula::Or(xs) => Formula::Or(xs.iter().map(|x| assign(x, units, bound)).collect()),
        Formula::Implies(a, b) => {
            Formula::implies(assign(a, units, bound), assign(b, units, bound))
        }
        Formula::Iff(a, b) => Formula::iff(assign(a, units, bound), assign(b, units, bound)),
        Formula::Forall(v, body) | Formula::Exists(v, body) => {
            bound.push(v.clone());
            let body = Box::new(assign(body, units, bound));
            bound.pop();
            match f {
                Formula::Forall(..) => Formula::Forall(v.clone(), body),
                _ => Formula::Exists(v.clone(), body),
            }
        }
    }
}
