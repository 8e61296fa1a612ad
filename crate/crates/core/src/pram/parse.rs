//! Domain-file parser.
//!
//! ```text
//! language {
//!   constants B, O, L1, L2;
//!   fluent In/1 over {O};
//!   fluent At/2 over {B, O} x {L1, L2};
//! }
//! det-action PutInSucc(?o) {
//!   precond: ~In(?o);
//!   succ In(?o): true;
//! }
//! prob-action PutIn(?o) {
//!   when ~In(?o): PutInSucc(?o) 0.9, PutInFail(?o) 0.1;
//!   otherwise: PutInNoop(?o) 1;
//! }
//! prior {
//!   1.5: At(B, L1);
//! }
//! ```

use std::collections::BTreeSet;

use crate::error::{Error, Position, Result};
use crate::fol::{name, parse::syntax, Formula, Name, Parser, Term, Token};

use super::{
    DetActionSchema, FluentDecl, Guard, Language, MlnPrior, Outcome, Partition, Pram,
    ProbActionSchema, SuccessorAxiom, WeightedFormula,
};

/// Parses a domain file into a model. Static checks on partitions and
/// distributions are left to [`validate`](super::validate).
pub fn parse_domain(src: &str) -> Result<Pram> {
    let mut p = Parser::new(src)?;
    let language = parse_language(&mut p)?;
    let mut det_actions: Vec<DetActionSchema> = Vec::new();
    let mut prob_actions: Vec<ProbActionSchema> = Vec::new();
    let mut outcome_refs: Vec<(Name, usize, Position)> = Vec::new();
    let mut prior = MlnPrior::default();
    let mut seen_prior = false;
    let mut names: BTreeSet<Name> = language
        .fluents
        .iter()
        .map(|f| f.name.clone())
        .chain(language.constants.iter().cloned())
        .collect();

    while !p.at_eof() {
        let pos = p.pos();
        if p.is_keyword("det-action") {
            p.bump();
            let d = parse_det(&mut p, &language)?;
            if !names.insert(d.name.clone()) {
                return Err(syntax(pos, &format!("duplicate name `{}`", d.name)));
            }
            det_actions.push(d);
        } else if p.is_keyword("prob-action") {
            p.bump();
            let (a, refs) = parse_prob(&mut p, &language)?;
            if !names.insert(a.name.clone()) {
                return Err(syntax(pos, &format!("duplicate name `{}`", a.name)));
            }
            outcome_refs.extend(refs);
            prob_actions.push(a);
        } else if p.is_keyword("prior") {
            if seen_prior {
                return Err(syntax(pos, "duplicate `prior` section"));
            }
            seen_prior = true;
            p.bump();
            prior = parse_prior(&mut p, &language)?;
        } else {
            return Err(p.unexpected("`det-action`, `prob-action` or `prior`"));
        }
    }

    for (action, arity, pos) in outcome_refs {
        match det_actions.iter().find(|d| d.name == action) {
            None => {
                return Err(Error::UndeclaredSymbol {
                    name: action.to_string(),
                    pos,
                })
            }
            Some(d) if d.params.len() != arity => {
                return Err(Error::ArityMismatch {
                    name: action.to_string(),
                    expected: d.params.len(),
                    found: arity,
                    pos,
                })
            }
            Some(_) => {}
        }
    }

    Ok(Pram {
        language,
        det_actions,
        prob_actions,
        prior,
    })
}

fn parse_language(p: &mut Parser) -> Result<Language> {
    p.keyword("language")?;
    p.expect(&Token::LBrace)?;
    let mut constants: Vec<Name> = Vec::new();
    let mut raw_fluents: Vec<(Name, usize, Option<Vec<Vec<Name>>>, Position)> = Vec::new();
    while !p.eat(&Token::RBrace) {
        let pos = p.pos();
        if p.is_keyword("constants") {
            p.bump();
            loop {
                let c = p.ident()?;
                if constants.iter().any(|k| **k == *c) {
                    return Err(syntax(p.last_pos(), &format!("duplicate constant `{c}`")));
                }
                constants.push(name(&c));
                if !p.eat(&Token::Comma) {
                    break;
                }
            }
            p.expect(&Token::Semi)?;
        } else if p.is_keyword("fluent") {
            p.bump();
            let f = p.ident()?;
            if raw_fluents.iter().any(|r| *r.0 == *f) {
                return Err(syntax(pos, &format!("duplicate fluent `{f}`")));
            }
            p.expect(&Token::Slash)?;
            let arity = p.number()?;
            if arity < 0.0 || arity.fract() != 0.0 || arity > 16.0 {
                return Err(syntax(p.last_pos(), "fluent arity must be a small whole number"));
            }
            let arity = arity as usize;
            let domains = if p.is_keyword("over") {
                p.bump();
                let mut ds = vec![constant_set(p)?];
                while p.is_keyword("x") {
                    p.bump();
                    ds.push(constant_set(p)?);
                }
                if ds.len() != arity {
                    return Err(Error::ArityMismatch {
                        name: f.clone(),
                        expected: arity,
                        found: ds.len(),
                        pos,
                    });
                }
                Some(ds)
            } else {
                None
            };
            p.expect(&Token::Semi)?;
            raw_fluents.push((name(&f), arity, domains, pos));
        } else {
            return Err(p.unexpected("`constants`, `fluent` or `}`"));
        }
    }
    let mut fluents = Vec::new();
    for (f, arity, domains, pos) in raw_fluents {
        if let Some(ds) = &domains {
            for d in ds {
                for c in d {
                    if !constants.contains(c) {
                        return Err(Error::UndeclaredSymbol {
                            name: c.to_string(),
                            pos,
                        });
                    }
                }
            }
        }
        if constants.contains(&f) {
            return Err(syntax(pos, &format!("`{f}` is both a fluent and a constant")));
        }
        fluents.push(FluentDecl {
            name: f,
            explicit_domains: domains.is_some(),
            domains: domains.unwrap_or_else(|| vec![constants.clone(); arity]),
        });
    }
    if constants.is_empty() {
        return Err(syntax(p.last_pos(), "language declares no constants"));
    }
    Language::new(constants, fluents)
}

fn constant_set(p: &mut Parser) -> Result<Vec<Name>> {
    p.expect(&Token::LBrace)?;
    let mut out = Vec::new();
    loop {
        out.push(name(&p.ident()?));
        if !p.eat(&Token::Comma) {
            break;
        }
    }
    p.expect(&Token::RBrace)?;
    Ok(out)
}

fn params(p: &mut Parser) -> Result<Vec<Name>> {
    let mut out: Vec<Name> = Vec::new();
    if !p.eat(&Token::LParen) {
        return Ok(out);
    }
    if p.eat(&Token::RParen) {
        return Ok(out);
    }
    loop {
        match p.bump() {
            Token::Var(v) => {
                if out.iter().any(|o| **o == *v) {
                    return Err(syntax(p.last_pos(), &format!("duplicate parameter ?{v}")));
                }
                out.push(name(&v));
            }
            other => {
                return Err(syntax(
                    p.last_pos(),
                    &format!("expected parameter variable, found {other}"),
                ))
            }
        }
        if p.eat(&Token::RParen) {
            return Ok(out);
        }
        p.expect(&Token::Comma)?;
    }
}

/// Parses a formula and checks its atoms and free variables.
fn checked_formula(p: &mut Parser, lang: &Language, allowed: Option<&[Name]>) -> Result<Formula> {
    let start = p.pos();
    p.seen_atoms.clear();
    let f = p.formula()?;
    for (a, pos) in std::mem::take(&mut p.seen_atoms) {
        check_atom(lang, &a, pos)?;
    }
    if let Some(allowed) = allowed {
        for v in f.free_vars() {
            if !allowed.contains(&v) {
                return Err(Error::UndeclaredSymbol {
                    name: format!("?{v}"),
                    pos: start,
                });
            }
        }
    }
    Ok(f)
}

fn check_atom(lang: &Language, a: &crate::fol::Atom, pos: Position) -> Result<()> {
    let decl = lang.fluent(&a.predicate).ok_or_else(|| Error::UndeclaredSymbol {
        name: a.predicate.to_string(),
        pos,
    })?;
    if decl.arity() != a.args.len() {
        return Err(Error::ArityMismatch {
            name: a.predicate.to_string(),
            expected: decl.arity(),
            found: a.args.len(),
            pos,
        });
    }
    for t in &a.args {
        if let Term::Const(c) = t {
            if !lang.is_constant(c) {
                return Err(Error::UndeclaredSymbol {
                    name: c.to_string(),
                    pos,
                });
            }
        }
    }
    Ok(())
}

fn parse_det(p: &mut Parser, lang: &Language) -> Result<DetActionSchema> {
    let n = p.ident()?;
    let ps = params(p)?;
    p.expect(&Token::LBrace)?;
    let mut precondition = None;
    let mut successors = Vec::new();
    while !p.eat(&Token::RBrace) {
        let pos = p.pos();
        if p.is_keyword("precond") {
            p.bump();
            p.expect(&Token::Colon)?;
            if precondition.is_some() {
                return Err(syntax(pos, "duplicate `precond`"));
            }
            precondition = Some(checked_formula(p, lang, Some(&ps))?);
            p.expect(&Token::Semi)?;
        } else if p.is_keyword("succ") {
            p.bump();
            p.seen_atoms.clear();
            let pattern = p.atom()?;
            check_atom(lang, &pattern, pos)?;
            p.expect(&Token::Colon)?;
            let mut allowed = ps.clone();
            for t in &pattern.args {
                if let Term::Var(v) = t {
                    allowed.push(v.clone());
                }
            }
            let formula = checked_formula(p, lang, Some(&allowed))?;
            p.expect(&Token::Semi)?;
            successors.push(SuccessorAxiom { pattern, formula });
        } else {
            return Err(p.unexpected("`precond`, `succ` or `}`"));
        }
    }
    Ok(DetActionSchema {
        name: name(&n),
        params: ps,
        precondition: precondition.unwrap_or(Formula::True),
        successors,
    })
}

type OutcomeRef = (Name, usize, Position);

fn parse_prob(p: &mut Parser, lang: &Language) -> Result<(ProbActionSchema, Vec<OutcomeRef>)> {
    let n = p.ident()?;
    let ps = params(p)?;
    p.expect(&Token::LBrace)?;
    let mut partitions = Vec::new();
    let mut refs = Vec::new();
    while !p.eat(&Token::RBrace) {
        let guard = if p.is_keyword("when") {
            p.bump();
            Guard::When(checked_formula(p, lang, Some(&ps))?)
        } else if p.is_keyword("otherwise") {
            p.bump();
            Guard::Otherwise
        } else {
            return Err(p.unexpected("`when`, `otherwise` or `}`"));
        };
        p.expect(&Token::Colon)?;
        let mut outcomes = Vec::new();
        loop {
            let pos = p.pos();
            let action = name(&p.ident()?);
            let mut args = Vec::new();
            if p.eat(&Token::LParen) && !p.eat(&Token::RParen) {
                loop {
                    let t = p.term()?;
                    match &t {
                        Term::Var(v) if !ps.contains(v) => {
                            return Err(Error::UndeclaredSymbol {
                                name: format!("?{v}"),
                                pos: p.last_pos(),
                            })
                        }
                        Term::Const(c) if !lang.is_constant(c) => {
                            return Err(Error::UndeclaredSymbol {
                                name: c.to_string(),
                                pos: p.last_pos(),
                            })
                        }
                        _ => {}
                    }
                    args.push(t);
                    if p.eat(&Token::RParen) {
                        break;
                    }
                    p.expect(&Token::Comma)?;
                }
            }
            let probability = p.number()?;
            refs.push((action.clone(), args.len(), pos));
            outcomes.push(Outcome {
                action,
                args,
                probability,
            });
            if !p.eat(&Token::Comma) {
                break;
            }
        }
        p.expect(&Token::Semi)?;
        partitions.push(Partition { guard, outcomes });
    }
    if partitions.is_empty() {
        return Err(syntax(p.last_pos(), &format!("prob-action `{n}` has no partitions")));
    }
    Ok((
        ProbActionSchema {
            name: name(&n),
            params: ps,
            partitions,
        },
        refs,
    ))
}

fn parse_prior(p: &mut Parser, lang: &Language) -> Result<MlnPrior> {
    p.expect(&Token::LBrace)?;
    let mut formulas = Vec::new();
    while !p.eat(&Token::RBrace) {
        let weight = p.number()?;
        if !weight.is_finite() {
            return Err(syntax(p.last_pos(), "prior weights must be finite"));
        }
        p.expect(&Token::Colon)?;
        let formula = checked_formula(p, lang, None)?;
        p.expect(&Token::Semi)?;
        formulas.push(WeightedFormula { weight, formula });
    }
    Ok(MlnPrior { formulas })
}
