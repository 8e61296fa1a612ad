//! Static checks: partition guards disjoint and exhaustive for every
//! grounding, distributions positive and normalized, no dead definitions.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fol::{ModelSet, State};

use super::{GroundProbAction, Pram};

const NORMALIZATION_TOLERANCE: f64 = 1e-9;
const SAMPLED_STATES: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    OverlappingGuards {
        action: String,
        first: usize,
        second: usize,
        witness: String,
    },
    NonExhaustiveGuards {
        action: String,
        witness: String,
    },
    Unnormalized {
        action: String,
        partition: usize,
        sum: f64,
    },
    NonPositiveProbability {
        action: String,
        partition: usize,
        outcome: String,
        probability: f64,
    },
    UnreferencedDetAction {
        action: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OverlappingGuards {
                action,
                first,
                second,
                witness,
            } => write!(
                f,
                "{action}: guards {first} and {second} overlap; witness state {witness}"
            ),
            Violation::NonExhaustiveGuards { action, witness } => {
                write!(f, "{action}: no guard covers witness state {witness}")
            }
            Violation::Unnormalized {
                action,
                partition,
                sum,
            } => write!(f, "{action}: partition {partition} probabilities sum to {sum}"),
            Violation::NonPositiveProbability {
                action,
                partition,
                outcome,
                probability,
            } => write!(
                f,
                "{action}: partition {partition} gives {outcome} non-positive probability {probability}"
            ),
            Violation::UnreferencedDetAction { action } => {
                write!(f, "det-action {action} is never used by any prob-action")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Guards were checked on sampled states only (universe beyond the cap).
    pub partial: bool,
    pub groundings_checked: usize,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok() {
            write!(f, "ok: {} ground action(s) checked", self.groundings_checked)?;
        } else {
            write!(f, "{} violation(s):", self.violations.len())?;
            for v in &self.violations {
                write!(f, "\n  - {v}")?;
            }
        }
        if self.partial {
            write!(f, "\nnote: partial check on {SAMPLED_STATES} sampled states")?;
        }
        Ok(())
    }
}

/// Checks the model. Guard disjointness and exhaustiveness are decided by
/// enumeration when the universe has at most `cap` states, otherwise on
/// sampled states and the report is flagged partial.
pub fn validate(pram: &Pram, cap: u64) -> ValidationReport {
    let mut report = ValidationReport::default();
    let u = pram.universe();
    let n = u.len();
    let exhaustive = u.num_states() <= cap as u128;
    report.partial = !exhaustive;
    let sample: Vec<State> = if exhaustive {
        Vec::new()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        (0..SAMPLED_STATES).map(|_| State(rng.gen::<u64>() & mask)).collect()
    };

    for schema in &pram.prob_actions {
        for (i, part) in schema.partitions.iter().enumerate() {
            let mut sum = 0.0;
            for o in &part.outcomes {
                if !(o.probability > 0.0) {
                    report.violations.push(Violation::NonPositiveProbability {
                        action: schema.name.to_string(),
                        partition: i,
                        outcome: o.action.to_string(),
                        probability: o.probability,
                    });
                }
                sum += o.probability;
            }
            if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                report.violations.push(Violation::Unnormalized {
                    action: schema.name.to_string(),
                    partition: i,
                    sum,
                });
            }
        }

        let mut overlap_found = false;
        let mut gap_found = false;
        for args in pram.groundings(schema.params.len()) {
            if overlap_found && gap_found {
                break;
            }
            report.groundings_checked += 1;
            let a = GroundProbAction {
                name: schema.name.clone(),
                args,
            };
            let mut guards = Vec::with_capacity(schema.partitions.len());
            for i in 0..schema.partitions.len() {
                let g = pram.guard(&a, i).expect("schema grounding is well formed");
                let compiled = u.compile(&g).expect("guards are checked at parse time");
                guards.push(compiled);
            }
            if exhaustive {
                let sets: Vec<ModelSet> = guards.iter().map(|g| g.models(n)).collect();
                let mut covered = ModelSet::empty(n);
                for i in 0..sets.len() {
                    for j in i + 1..sets.len() {
                        let both = sets[i].intersect(&sets[j]);
                        if !overlap_found {
                            if let Some(s) = both.iter().next() {
                                overlap_found = true;
                                report.violations.push(Violation::OverlappingGuards {
                                    action: a.to_string(),
                                    first: i,
                                    second: j,
                                    witness: u.describe(s),
                                });
                            }
                        }
                    }
                    covered = covered.union(&sets[i]);
                }
                if !gap_found {
                    if let Some(s) = covered.complement().iter().next() {
                        gap_found = true;
                        report.violations.push(Violation::NonExhaustiveGuards {
                            action: a.to_string(),
                            witness: u.describe(s),
                        });
                    }
                }
            } else {
                for &s in &sample {
                    let hits: Vec<usize> = (0..guards.len()).filter(|&i| guards[i].eval(s)).collect();
                    if hits.len() > 1 && !overlap_found {
                        overlap_found = true;
                        report.violations.push(Violation::OverlappingGuards {
                            action: a.to_string(),
                            first: hits[0],
                            second: hits[1],
                            witness: u.describe(s),
                        });
                    }
                    if hits.is_empty() && !gap_found {
                        gap_found = true;
                        report.violations.push(Violation::NonExhaustiveGuards {
                            action: a.to_string(),
                            witness: u.describe(s),
                        });
                    }
                }
            }
        }
    }

    for d in &pram.det_actions {
        let used = pram
            .prob_actions
            .iter()
            .flat_map(|p| &p.partitions)
            .flat_map(|part| &part.outcomes)
            .any(|o| o.action == d.name);
        if !used {
            report.violations.push(Violation::UnreferencedDetAction {
                action: d.name.to_string(),
            });
        }
    }
    report
}
