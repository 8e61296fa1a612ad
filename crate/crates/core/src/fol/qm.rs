//! Rebuilding a compact formula from a model set (Quine–McCluskey over the
//! non-models, then a greedy cover; the result is read back as CNF).

use std::collections::HashSet;

use super::{Formula, ModelSet, State, Universe};

const MAX_QM_FLUENTS: usize = 14;

/// A cube: the states `s` with `s & !mask == value`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Cube {
    value: u64,
    mask: u64,
}

impl Cube {
    fn covers(self, s: u64) -> bool {
        s & !self.mask == self.value
    }
}

fn prime_implicants(minterms: &[u64], n: usize) -> Vec<Cube> {
    let mut level: Vec<Cube> = minterms.iter().map(|&v| Cube { value: v, mask: 0 }).collect();
    let mut primes = Vec::new();
    while !level.is_empty() {
        let present: HashSet<Cube> = level.iter().copied().collect();
        let mut used: HashSet<Cube> = HashSet::new();
        let mut next: Vec<Cube> = Vec::new();
        let mut next_seen: HashSet<Cube> = HashSet::new();
        for &c in &level {
            for b in 0..n {
                let bit = 1u64 << b;
                if c.mask & bit != 0 || c.value & bit != 0 {
                    continue;
                }
                let partner = Cube {
                    value: c.value | bit,
                    mask: c.mask,
                };
                if present.contains(&partner) {
                    used.insert(c);
                    used.insert(partner);
                    let merged = Cube {
                        value: c.value,
                        mask: c.mask | bit,
                    };
                    if next_seen.insert(merged) {
                        next.push(merged);
                    }
                }
            }
        }
        primes.extend(level.iter().copied().filter(|c| !used.contains(c)));
        level = next;
    }
    primes.sort();
    primes
}

fn greedy_cover(primes: &[Cube], minterms: &[u64]) -> Vec<Cube> {
    let mut uncovered: Vec<u64> = minterms.to_vec();
    let mut chosen = Vec::new();
    // Essential primes first.
    for &m in minterms {
        let covering: Vec<&Cube> = primes.iter().filter(|p| p.covers(m)).collect();
        if covering.len() == 1 && !chosen.contains(covering[0]) {
            chosen.push(*covering[0]);
        }
    }
    uncovered.retain(|&m| !chosen.iter().any(|c| c.covers(m)));
    while !uncovered.is_empty() {
        let best = primes
            .iter()
            .filter(|p| !chosen.contains(p))
            .max_by(|a, b| {
                let ca = uncovered.iter().filter(|&&m| a.covers(m)).count();
                let cb = uncovered.iter().filter(|&&m| b.covers(m)).count();
                ca.cmp(&cb)
                    .then(a.mask.count_ones().cmp(&b.mask.count_ones()))
                    .then(b.cmp(a))
            })
            .copied()
            .expect("primes cover every minterm");
        chosen.push(best);
        uncovered.retain(|&m| !best.covers(m));
    }
    chosen.sort();
    chosen
}

fn literal(u: &Universe, i: usize, positive: bool) -> Formula {
    let a = Formula::Atom(u.fluent(i).clone());
    if positive {
        a
    } else {
        Formula::not(a)
    }
}

fn junction(mut parts: Vec<Formula>, conj: bool) -> Formula {
    match parts.len() {
        0 => {
            if conj {
                Formula::True
            } else {
                Formula::False
            }
        }
        1 => parts.pop().expect("one part"),
        _ if conj => Formula::And(parts),
        _ => Formula::Or(parts),
    }
}

/// A formula whose models over `u` are exactly `m`.
pub(crate) fn formula_of(u: &Universe, m: &ModelSet) -> Formula {
    let n = u.len();
    let off: Vec<u64> = m.complement().iter().map(|s| s.0).collect();
    if off.is_empty() {
        return Formula::True;
    }
    if m.is_empty() {
        return Formula::False;
    }
    if n > MAX_QM_FLUENTS {
        return enumerate(u, m, off);
    }
    let primes = prime_implicants(&off, n);
    let cover = greedy_cover(&primes, &off);
    // Each cube of non-models becomes one clause excluding it.
    let clauses = cover
        .into_iter()
        .map(|c| {
            let lits = (0..n)
                .filter(|&i| c.mask & (1 << i) == 0)
                .map(|i| literal(u, i, c.value & (1 << i) == 0))
                .collect();
            junction(lits, false)
        })
        .collect();
    junction(clauses, true)
}

fn enumerate(u: &Universe, m: &ModelSet, off: Vec<u64>) -> Formula {
    if m.len() <= off.len() {
        junction(m.iter().map(|s| u.state_formula(s)).collect(), false)
    } else {
        junction(
            off.into_iter()
                .map(|s| Formula::not(u.state_formula(State(s))))
                .collect(),
            true,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fol::parse_formula;

    #[test]
    fn reproduces_model_sets() {
        let u = Universe::full(&["A", "B"], &[("P", 1), ("R", 2)]).unwrap();
        for src in [
            "P(A) & ~R(A,B)",
            "P(A) | P(B)",
            "P(A) <=> R(B,B)",
            "exists ?x . R(?x,?x) & ~P(?x)",
            "true",
            "false",
        ] {
            let m = u.models(&parse_formula(src).unwrap()).unwrap();
            let g = formula_of(&u, &m);
            assert_eq!(u.models(&g).unwrap(), m, "{src} rebuilt as {g}");
        }
    }

    #[test]
    fn conjunction_of_units_stays_small() {
        let u = Universe::full(&["A", "B"], &[("P", 1)]).unwrap();
        let m = u.models(&parse_formula("P(A) & ~P(B)").unwrap()).unwrap();
        assert_eq!(formula_of(&u, &m).to_string(), "P(A) & ~P(B)");
    }
}
