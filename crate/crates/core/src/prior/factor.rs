//! Log-space factors over binary fluent variables and variable elimination.

use crate::error::{Error, Result};

/// Largest scope an intermediate factor may reach during elimination.
pub const MAX_FACTOR_SCOPE: usize = 24;

/// Where a factor came from, for inspection output.
#[derive(Clone, Debug, PartialEq)]
pub enum FactorSource {
    /// Grounding of weighted formula `formula` (index into the prior).
    Prior { formula: usize, grounding: String },
    /// 0/1 indicator of one ground clause.
    Indicator { clause: String },
    /// Intermediate result of elimination.
    Derived,
}

/// A potential over `scope` (ascending fluent indices). Entry `i` of `log`
/// is the log-potential of the assignment whose bit `k` is the value of
/// `scope[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    pub scope: Vec<usize>,
    pub log: Vec<f64>,
    pub source: FactorSource,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

impl Factor {
    pub fn scalar(log: f64) -> Factor {
        Factor {
            scope: Vec::new(),
            log: vec![log],
            source: FactorSource::Derived,
        }
    }

    /// Builds a factor from a predicate over assignments of `scope`.
    pub fn from_fn(scope: Vec<usize>, source: FactorSource, f: impl Fn(u64) -> f64) -> Factor {
        let log = (0..1u64 << scope.len()).map(f).collect();
        Factor { scope, log, source }
    }

    pub fn value(&self, assignment: u64) -> f64 {
        self.log[assignment as usize].exp()
    }

    /// Local assignment of this factor read off a full state bitmask.
    pub fn local(&self, state: u64) -> usize {
        self.scope
            .iter()
            .enumerate()
            .fold(0, |acc, (k, &v)| acc | ((((state >> v) & 1) as usize) << k))
    }

    pub fn multiply(&self, other: &Factor) -> Result<Factor> {
        let mut scope: Vec<usize> = self.scope.iter().chain(&other.scope).copied().collect();
        scope.sort_unstable();
        scope.dedup();
        if scope.len() > MAX_FACTOR_SCOPE {
            return Err(too_wide(scope.len()));
        }
        let pos = |s: &[usize]| -> Vec<usize> {
            s.iter()
                .map(|v| scope.binary_search(v).expect("variable in union"))
                .collect()
        };
        let (pa, pb) = (pos(&self.scope), pos(&other.scope));
        let project = |idx: usize, ps: &[usize]| -> usize {
            ps.iter()
                .enumerate()
                .fold(0, |acc, (k, &p)| acc | (((idx >> p) & 1) << k))
        };
        let log = (0..1usize << scope.len())
            .map(|i| {
                let (x, y) = (self.log[project(i, &pa)], other.log[project(i, &pb)]);
                if x == f64::NEG_INFINITY || y == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    x + y
                }
            })
            .collect();
        Ok(Factor {
            scope,
            log,
            source: FactorSource::Derived,
        })
    }

    pub fn sum_out(&self, var: usize) -> Factor {
        let Ok(k) = self.scope.binary_search(&var) else {
            // Summing a variable the factor ignores doubles it.
            return Factor {
                scope: self.scope.clone(),
                log: self.log.iter().map(|l| l + std::f64::consts::LN_2).collect(),
                source: FactorSource::Derived,
            };
        };
        let mut scope = self.scope.clone();
        scope.remove(k);
        let low = (1usize << k) - 1;
        let log = (0..1usize << scope.len())
            .map(|i| {
                let base = ((i & !low) << 1) | (i & low);
                log_add(self.log[base], self.log[base | (1 << k)])
            })
            .collect();
        Factor {
            scope,
            log,
            source: FactorSource::Derived,
        }
    }

    /// Extends the scope with variables the factor does not depend on.
    pub fn extend(&self, vars: &[usize]) -> Result<Factor> {
        let uniform = Factor::from_fn(
            {
                let mut v: Vec<usize> = vars
                    .iter()
                    .copied()
                    .filter(|x| !self.scope.contains(x))
                    .collect();
                v.sort_unstable();
                v.dedup();
                v
            },
            FactorSource::Derived,
            |_| 0.0,
        );
        self.multiply(&uniform)
    }
}

fn too_wide(width: usize) -> Error {
    Error::UniverseTooLarge {
        what: "elimination factor scope".to_string(),
        size: width as u128,
        cap: MAX_FACTOR_SCOPE as u128,
    }
}

/// Elimination order by minimum degree, ties broken by the smaller index.
pub fn elimination_order(factors: &[Factor], eliminate: &[usize]) -> Vec<usize> {
    let mut scopes: Vec<Vec<usize>> = factors.iter().map(|f| f.scope.clone()).collect();
    let mut left: Vec<usize> = eliminate.to_vec();
    left.sort_unstable();
    left.dedup();
    let mut order = Vec::with_capacity(left.len());
    while !left.is_empty() {
        let degree = |v: usize| -> usize {
            let mut nb: Vec<usize> = scopes
                .iter()
                .filter(|s| s.contains(&v))
                .flatten()
                .copied()
                .filter(|&w| w != v)
                .collect();
            nb.sort_unstable();
            nb.dedup();
            nb.len()
        };
        let (at, &v) = left
            .iter()
            .enumerate()
            .min_by_key(|(_, &v)| (degree(v), v))
            .expect("non-empty");
        left.remove(at);
        let mut merged: Vec<usize> = Vec::new();
        scopes.retain(|s| {
            if s.contains(&v) {
                merged.extend(s.iter().copied().filter(|&w| w != v));
                false
            } else {
                true
            }
        });
        merged.sort_unstable();
        merged.dedup();
        scopes.push(merged);
        order.push(v);
    }
    order
}

/// Sums `vars` out of the product of `factors` in the given order and
/// returns the product of what remains over `keep`.
pub fn eliminate_in_order(factors: Vec<Factor>, order: &[usize], keep: &[usize]) -> Result<Factor> {
    let mut pool = factors;
    let mut scalar = 0.0f64;
    for &v in order {
        let (with, without): (Vec<Factor>, Vec<Factor>) =
            pool.into_iter().partition(|f| f.scope.contains(&v));
        pool = without;
        if with.is_empty() {
            scalar += std::f64::consts::LN_2;
            continue;
        }
        let mut prod = with[0].clone();
        for f in &with[1..] {
            prod = prod.multiply(f)?;
        }
        pool.push(prod.sum_out(v));
    }
    let mut result = Factor::scalar(scalar);
    for f in &pool {
        result = result.multiply(f)?;
    }
    result.extend(keep)
}

/// Width of the largest factor the min-degree order creates, minus one.
pub fn treewidth_estimate(factors: &[Factor], vars: &[usize]) -> usize {
    let mut scopes: Vec<Vec<usize>> = factors.iter().map(|f| f.scope.clone()).collect();
    let mut width = scopes.iter().map(|s| s.len()).max().unwrap_or(0);
    for v in elimination_order(factors, vars) {
        let mut merged: Vec<usize> = Vec::new();
        scopes.retain(|s| {
            if s.contains(&v) {
                merged.extend(s.iter().copied());
                false
            } else {
                true
            }
        });
        merged.sort_unstable();
        merged.dedup();
        width = width.max(merged.len());
        merged.retain(|&w| w != v);
        scopes.push(merged);
    }
    width.saturating_sub(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_net_sums_to_power_of_two() {
        let fs = vec![
            Factor::from_fn(vec![0, 1], FactorSource::Derived, |_| 0.0),
            Factor::from_fn(vec![1, 2], FactorSource::Derived, |_| 0.0),
        ];
        let order = elimination_order(&fs, &[0, 1, 2, 3]);
        let r = eliminate_in_order(fs, &order, &[]).unwrap();
        assert!((r.log[0].exp() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn chain_of_two_matches_direct_sum() {
        let table = [0.3f64, 1.2, 2.0, 0.5];
        let f = Factor::from_fn(vec![0, 1], FactorSource::Derived, |i| table[i as usize].ln());
        let r = eliminate_in_order(vec![f], &[0], &[1]).unwrap();
        assert_eq!(r.scope, vec![1]);
        assert!((r.value(0) - (0.3 + 1.2)).abs() < 1e-12);
        assert!((r.value(1) - (2.0 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn order_does_not_change_result() {
        let a = Factor::from_fn(vec![0, 1], FactorSource::Derived, |i| (i as f64) * 0.3 - 0.2);
        let b = Factor::from_fn(vec![1, 2], FactorSource::Derived, |i| (i as f64) * -0.7);
        let c = Factor::from_fn(vec![0, 2], FactorSource::Derived, |i| if i == 3 { f64::NEG_INFINITY } else { 0.1 });
        let fs = vec![a, b, c];
        let r1 = eliminate_in_order(fs.clone(), &[0, 1, 2], &[]).unwrap();
        let r2 = eliminate_in_order(fs, &[2, 0, 1], &[]).unwrap();
        assert!((r1.log[0] - r2.log[0]).abs() < 1e-12);
    }
}
