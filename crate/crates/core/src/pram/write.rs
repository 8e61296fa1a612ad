//! Canonical domain-file serialization; `parse_domain(write_domain(p)) == p`.

use std::fmt::Write;

use crate::fol::Name;

use super::{Guard, Pram};

fn param_list(ps: &[Name]) -> String {
    if ps.is_empty() {
        return String::new();
    }
    let vs: Vec<String> = ps.iter().map(|p| format!("?{p}")).collect();
    format!("({})", vs.join(", "))
}

fn name_list(ns: &[Name]) -> String {
    ns.iter().map(|n| &**n).collect::<Vec<_>>().join(", ")
}

pub fn write_domain(p: &Pram) -> String {
    let mut out = String::new();
    let lang = &p.language;
    out.push_str("language {\n");
    let _ = writeln!(out, "  constants {};", name_list(&lang.constants));
    for f in &lang.fluents {
        let _ = write!(out, "  fluent {}/{}", f.name, f.arity());
        if f.explicit_domains {
            let ds: Vec<String> = f
                .domains
                .iter()
                .map(|d| format!("{{{}}}", name_list(d)))
                .collect();
            let _ = write!(out, " over {}", ds.join(" x "));
        }
        out.push_str(";\n");
    }
    out.push_str("}\n");

    for d in &p.det_actions {
        let _ = writeln!(out, "\ndet-action {}{} {{", d.name, param_list(&d.params));
        let _ = writeln!(out, "  precond: {};", d.precondition);
        for s in &d.successors {
            let _ = writeln!(out, "  succ {}: {};", s.pattern, s.formula);
        }
        out.push_str("}\n");
    }

    for a in &p.prob_actions {
        let _ = writeln!(out, "\nprob-action {}{} {{", a.name, param_list(&a.params));
        for part in &a.partitions {
            match &part.guard {
                Guard::When(f) => {
                    let _ = write!(out, "  when {f}: ");
                }
                Guard::Otherwise => out.push_str("  otherwise: "),
            }
            let outs: Vec<String> = part
                .outcomes
                .iter()
                .map(|o| {
                    let args: Vec<String> = o.args.iter().map(|t| t.to_string()).collect();
                    if args.is_empty() {
                        format!("{} {}", o.action, o.probability)
                    } else {
                        format!("{}({}) {}", o.action, args.join(","), o.probability)
                    }
                })
                .collect();
            let _ = writeln!(out, "{};", outs.join(", "));
        }
        out.push_str("}\n");
    }

    if !p.prior.formulas.is_empty() {
        out.push_str("\nprior {\n");
        for wf in &p.prior.formulas {
            let _ = writeln!(out, "  {}: {};", wf.weight, wf.formula);
        }
        out.push_str("}\n");
    }
    out
}
