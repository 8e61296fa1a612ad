//! Exact inference over the weighted-formula prior.
//!
//! Each grounding of a weighted formula becomes a factor worth `exp(weight)`
//! where it holds and 1 elsewhere. A query is answered by attaching one 0/1
//! indicator factor per clause of its clause form, keeping only the part of
//! the network connected to those clauses, and summing everything out by
//! variable elimination.

mod factor;

use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::fol::{to_cnf, ClauseSet, Formula, Name, State, Term, Universe};
use crate::pram::MlnPrior;

pub use factor::{
    eliminate_in_order, elimination_order, treewidth_estimate, Factor, FactorSource,
    MAX_FACTOR_SCOPE,
};

/// Ground formulas per weighted formula beyond which building is refused.
const MAX_GROUNDINGS: u128 = 1 << 20;

#[derive(Clone, Debug)]
pub struct GroundMarkovNet {
    /// Fluent indices, ascending.
    pub nodes: Vec<usize>,
    pub factors: Vec<Factor>,
}

impl GroundMarkovNet {
    pub fn treewidth_estimate(&self) -> usize {
        treewidth_estimate(&self.factors, &self.nodes)
    }

    /// Sums out every node outside `keep`.
    pub fn eliminate(&self, keep: &[usize]) -> Result<Factor> {
        let vars: Vec<usize> = self
            .nodes
            .iter()
            .copied()
            .filter(|v| !keep.contains(v))
            .collect();
        let order = elimination_order(&self.factors, &vars);
        eliminate_in_order(self.factors.clone(), &order, keep)
    }
}

/// All bindings of `vars` to constants, in lexicographic order.
fn bindings(vars: &[Name], constants: &[Name]) -> Vec<HashMap<Name, Term>> {
    let mut out = vec![HashMap::new()];
    for v in vars {
        out = out
            .into_iter()
            .flat_map(|m| {
                constants.iter().map(move |c| {
                    let mut m = m.clone();
                    m.insert(v.clone(), Term::Const(c.clone()));
                    m
                })
            })
            .collect();
    }
    out
}

/// Ground instances of a weighted formula: free variables range over all
/// constants. Each comes back grounded and folded over the universe.
pub(crate) fn groundings(f: &Formula, u: &Universe) -> Result<Vec<(String, Formula)>> {
    let vars: Vec<Name> = f.free_vars().into_iter().collect();
    let count = (u.constants().len() as u128).pow(vars.len() as u32);
    if count > MAX_GROUNDINGS {
        return Err(Error::UniverseTooLarge {
            what: "prior groundings".to_string(),
            size: count,
            cap: MAX_GROUNDINGS,
        });
    }
    bindings(&vars, u.constants())
        .into_iter()
        .map(|b| {
            let inst = f.subst_terms(&b);
            let label = inst.to_string();
            Ok((label, u.ground(&inst)?))
        })
        .collect()
}

/// Factor of one ground formula with weight `w`: `w` (log space) where it
/// holds, 0 elsewhere. `None` when the grounding does not depend on any fluent.
fn formula_factor(
    g: &Formula,
    w: f64,
    u: &Universe,
    source: FactorSource,
) -> Result<Option<Factor>> {
    let compiled = u.compile(g)?;
    let scope = compiled.support();
    if scope.is_empty() {
        return Ok(None);
    }
    if scope.len() > MAX_FACTOR_SCOPE {
        return Err(Error::UniverseTooLarge {
            what: "ground formula scope".to_string(),
            size: scope.len() as u128,
            cap: MAX_FACTOR_SCOPE as u128,
        });
    }
    Ok(Some(Factor::from_fn(scope.clone(), source, |a| {
        let s = scatter(a, &scope);
        if compiled.eval(s) {
            w
        } else {
            0.0
        }
    })))
}

fn scatter(local: u64, scope: &[usize]) -> State {
    State(
        scope
            .iter()
            .enumerate()
            .fold(0u64, |acc, (k, &v)| acc | (((local >> k) & 1) << v)),
    )
}

/// The prior network: one factor per grounding of each weighted formula that
/// depends on at least one fluent. Groundings that fold to a constant scale
/// every state alike and are dropped.
pub fn build_prior_network(prior: &MlnPrior, u: &Universe) -> Result<GroundMarkovNet> {
    let mut factors = Vec::new();
    for (fi, wf) in prior.formulas.iter().enumerate() {
        for (label, g) in groundings(&wf.formula, u)? {
            let source = FactorSource::Prior {
                formula: fi,
                grounding: label,
            };
            if let Some(f) = formula_factor(&g, wf.weight, u, source)? {
                factors.push(f);
            }
        }
    }
    let nodes: BTreeSet<usize> = factors.iter().flat_map(|f| f.scope.iter().copied()).collect();
    Ok(GroundMarkovNet {
        nodes: nodes.into_iter().collect(),
        factors,
    })
}

/// Indicator factors for the clauses of a clause set.
fn indicators(cs: &ClauseSet, u: &Universe) -> Vec<Factor> {
    cs.clauses
        .iter()
        .map(|c| {
            let lits: Vec<(usize, bool)> = c
                .iter()
                .map(|l| (u.index_of(&l.atom).expect("folded clauses use universe atoms"), l.positive))
                .collect();
            let mut scope: Vec<usize> = lits.iter().map(|l| l.0).collect();
            scope.sort_unstable();
            scope.dedup();
            let label = c.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" | ");
            let sc = scope.clone();
            Factor::from_fn(scope, FactorSource::Indicator { clause: label }, move |a| {
                let s = scatter(a, &sc);
                if lits.iter().any(|&(i, pos)| s.get(i) == pos) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            })
        })
        .collect()
}

/// A prior compiled against one universe, answering conditional queries.
#[derive(Clone, Debug)]
pub struct PriorModel {
    universe: Universe,
    network: GroundMarkovNet,
    /// Prior factor indices touching each fluent.
    touching: Vec<Vec<usize>>,
}

impl PriorModel {
    pub fn new(prior: &MlnPrior, u: &Universe) -> Result<PriorModel> {
        let network = build_prior_network(prior, u)?;
        let mut touching = vec![Vec::new(); u.len()];
        for (fi, f) in network.factors.iter().enumerate() {
            for &v in &f.scope {
                touching[v].push(fi);
            }
        }
        Ok(PriorModel {
            universe: u.clone(),
            network,
            touching,
        })
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn network(&self) -> &GroundMarkovNet {
        &self.network
    }

    /// Clause form of a closed formula over this universe.
    pub fn clauses(&self, f: &Formula) -> Result<ClauseSet> {
        to_cnf(&self.universe.ground(f)?)
    }

    /// Prior factors reachable from `seeds` through shared scopes, with the
    /// nodes they cover (the seeds included).
    fn connected(&self, seeds: impl IntoIterator<Item = usize>) -> (Vec<usize>, Vec<usize>) {
        let mut seen_node = vec![false; self.universe.len()];
        let mut seen_factor = vec![false; self.network.factors.len()];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for s in seeds {
            if !seen_node[s] {
                seen_node[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(v) = queue.pop_front() {
            for &fi in &self.touching[v] {
                if seen_factor[fi] {
                    continue;
                }
                seen_factor[fi] = true;
                for &w in &self.network.factors[fi].scope {
                    if !seen_node[w] {
                        seen_node[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        let nodes = (0..seen_node.len()).filter(|&i| seen_node[i]).collect();
        let factors = (0..seen_factor.len()).filter(|&i| seen_factor[i]).collect();
        (nodes, factors)
    }

    /// The subnetwork relevant to the given clause sets, with their
    /// indicator factors attached. With `minimal = false` the whole prior
    /// network is kept.
    pub fn query_network(&self, sets: &[&ClauseSet], minimal: bool) -> GroundMarkovNet {
        let seeds: Vec<usize> = sets
            .iter()
            .flat_map(|cs| cs.clauses.iter())
            .flatten()
            .filter_map(|l| self.universe.index_of(&l.atom))
            .collect();
        let (mut nodes, factor_ids) = if minimal {
            self.connected(seeds)
        } else {
            let mut nodes: Vec<usize> = self.network.nodes.iter().copied().chain(seeds).collect();
            nodes.sort_unstable();
            nodes.dedup();
            (nodes, (0..self.network.factors.len()).collect())
        };
        let mut factors: Vec<Factor> = factor_ids
            .into_iter()
            .map(|i| self.network.factors[i].clone())
            .collect();
        for cs in sets {
            factors.extend(indicators(cs, &self.universe));
        }
        nodes.sort_unstable();
        GroundMarkovNet { nodes, factors }
    }

    /// `ln` of the unnormalized mass of the states satisfying every clause
    /// set, summed over the given network's nodes.
    fn log_mass(&self, net: &GroundMarkovNet) -> Result<f64> {
        Ok(net.eliminate(&[])?.log[0])
    }

    /// `P(q | given)` under the prior.
    pub fn prior_fof(&self, q: &Formula, given: &Formula) -> Result<f64> {
        let e = self.clauses(given)?;
        let qc = self.clauses(q)?;
        self.prior_fof_clauses(&qc, &e, true)
    }

    /// `P(q | given)` from clause forms; `minimal` restricts the network to
    /// the part connected to the clauses.
    pub fn prior_fof_clauses(&self, q: &ClauseSet, given: &ClauseSet, minimal: bool) -> Result<f64> {
        if given.has_empty_clause() {
            return Err(Error::ZeroEvidence);
        }
        // One network for both sums: prior factors, then evidence
        // indicators, then query indicators.
        let joint = self.query_network(&[given, q], minimal);
        let e_net = GroundMarkovNet {
            nodes: joint.nodes.clone(),
            factors: joint.factors[..joint.factors.len() - q.clauses.len()].to_vec(),
        };
        let log_e = self.log_mass(&e_net)?;
        if log_e == f64::NEG_INFINITY {
            return Err(Error::ZeroEvidence);
        }
        if q.is_trivially_true() {
            return Ok(1.0);
        }
        if q.has_empty_clause() {
            return Ok(0.0);
        }
        let log_qe = self.log_mass(&joint)?;
        Ok((log_qe - log_e).exp().clamp(0.0, 1.0))
    }

    /// `ln` of the unnormalized weight of every state, by direct evaluation
    /// of the ground formulas (no elimination).
    pub fn state_log_weights(prior: &MlnPrior, u: &Universe) -> Result<Vec<f64>> {
        u.check_enumerable()?;
        let mut compiled = Vec::new();
        for wf in &prior.formulas {
            for (_, g) in groundings(&wf.formula, u)? {
                compiled.push((u.compile(&g)?, wf.weight));
            }
        }
        Ok(u.states()
            .map(|s| {
                compiled
                    .iter()
                    .filter(|(c, _)| c.eval(s))
                    .map(|(_, w)| *w)
                    .sum()
            })
            .collect())
    }
}

/// `P(q | given)` by variable elimination over the prior network.
pub fn prior_fof(q: &Formula, given: &Formula, prior: &MlnPrior, u: &Universe) -> Result<f64> {
    PriorModel::new(prior, u)?.prior_fof(q, given)
}

/// `P(q | given)` by enumerating every state: the reference for
/// [`prior_fof`].
pub fn brute_force_prior(q: &Formula, given: &Formula, prior: &MlnPrior, u: &Universe) -> Result<f64> {
    let logw = PriorModel::state_log_weights(prior, u)?;
    let qm = u.models(q)?;
    let em = u.models(given)?;
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for s in em.iter() {
        let w = (logw[s.0 as usize] - max).exp();
        den += w;
        if qm.contains(s) {
            num += w;
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroEvidence);
    }
    Ok((num / den).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fol::parse_formula;
    use crate::pram::WeightedFormula;

    fn f(s: &str) -> Formula {
        parse_formula(s).unwrap()
    }

    fn prior(items: &[(f64, &str)]) -> MlnPrior {
        MlnPrior {
            formulas: items
                .iter()
                .map(|(w, s)| WeightedFormula {
                    weight: *w,
                    formula: f(s),
                })
                .collect(),
        }
    }

    #[test]
    fn unary_factors_per_grounding() {
        let u = Universe::full(&["O", "D"], &[("In", 1)]).unwrap();
        let net = build_prior_network(&prior(&[(1.3, "In(?o)")]), &u).unwrap();
        assert_eq!(net.factors.len(), 2);
        for fct in &net.factors {
            assert!((fct.value(1) - 1.3f64.exp()).abs() < 1e-12);
            assert!((fct.value(0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_fluent_closed_form() {
        let u = Universe::full(&["O"], &[("In", 1)]).unwrap();
        let w = -0.8f64;
        let p = prior_fof(&f("In(O)"), &Formula::True, &prior(&[(w, "In(O)")]), &u).unwrap();
        assert!((p - w.exp() / (w.exp() + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn uniform_and_counting_cases() {
        let u = Universe::full(&["A", "B", "C"], &[("P", 1)]).unwrap();
        let empty = MlnPrior::default();
        assert!((prior_fof(&f("P(A)"), &Formula::True, &empty, &u).unwrap() - 0.5).abs() < 1e-12);
        let one = f("P(A) & ~P(B) & ~P(C) | ~P(A) & P(B) & ~P(C) | ~P(A) & ~P(B) & P(C)");
        assert!((prior_fof(&one, &Formula::True, &empty, &u).unwrap() - 0.375).abs() < 1e-12);
        assert_eq!(prior_fof(&f("P(A) | ~P(A)"), &Formula::True, &empty, &u).unwrap(), 1.0);
        assert!(matches!(
            prior_fof(&f("P(A)"), &f("P(B) & ~P(B)"), &empty, &u),
            Err(Error::ZeroEvidence)
        ));
    }

    #[test]
    fn matches_brute_force_with_evidence() {
        let u = Universe::full(&["A", "B", "C"], &[("P", 1), ("R", 2)]).unwrap();
        let pr = prior(&[(1.5, "P(?x) => R(?x,?x)"), (-2.0, "R(?x,?y) & R(?y,?x)"), (0.4, "P(A)")]);
        let q = f("exists ?x . R(?x,B) & P(?x)");
        let e = f("P(A) | ~R(C,C)");
        let a = prior_fof(&q, &e, &pr, &u).unwrap();
        let b = brute_force_prior(&q, &e, &pr, &u).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}
