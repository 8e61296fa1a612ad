//! Tokenizer and recursive-descent parser for the formula syntax.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! formula := quant | iff
//! quant   := ("forall" | "exists") var+ "." formula
//! iff     := imp ("<=>" imp)*
//! imp     := or ("=>" imp)?
//! or      := and ("|" and)*
//! and     := unary ("&" unary)*
//! unary   := "~" unary | quant | primary
//! primary := "true" | "false" | atom | "(" formula ")"
//! atom    := Ident ("(" term ("," term)* ")")?
//! ```

use crate::error::{Error, Position, Result};

use super::{name, Atom, Formula, Term};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Token {
    Ident(String),
    Var(String),
    Number(f64),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Colon,
    Slash,
    Dot,
    Not,
    And,
    Or,
    Implies,
    Iff,
    Eof,
}

impl std::fmt::Display for Token {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Token::Ident(s) => write!(f, "`{s}`"),
            Token::Var(s) => write!(f, "`?{s}`"),
            Token::Number(n) => write!(f, "`{n}`"),
            Token::LParen => write!(f, "`(`"),
            Token::RParen => write!(f, "`)`"),
            Token::LBrace => write!(f, "`{{`"),
            Token::RBrace => write!(f, "`}}`"),
            Token::Comma => write!(f, "`,`"),
            Token::Semi => write!(f, "`;`"),
            Token::Colon => write!(f, "`:`"),
            Token::Slash => write!(f, "`/`"),
            Token::Dot => write!(f, "`.`"),
            Token::Not => write!(f, "`~`"),
            Token::And => write!(f, "`&`"),
            Token::Or => write!(f, "`|`"),
            Token::Implies => write!(f, "`=>`"),
            Token::Iff => write!(f, "`<=>`"),
            Token::Eof => write!(f, "end of input"),
        }
    }
}

pub(crate) struct Lexer;

impl Lexer {
    /// Splits `src` into tokens. `#` starts a comment running to end of line.
    pub(crate) fn tokenize(src: &str) -> Result<Vec<(Token, Position)>> {
        let chars: Vec<char> = src.chars().collect();
        let mut out = Vec::new();
        let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
        while i < chars.len() {
            let c = chars[i];
            let pos = Position { line, column: col };
            let advance = |n: usize, i: &mut usize, col: &mut usize| {
                *i += n;
                *col += n;
            };
            if c == '\n' {
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            if c.is_whitespace() {
                advance(1, &mut i, &mut col);
                continue;
            }
            if c == '#' {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            let simple = match c {
                '(' => Some(Token::LParen),
                ')' => Some(Token::RParen),
                '{' => Some(Token::LBrace),
                '}' => Some(Token::RBrace),
                ',' => Some(Token::Comma),
                ';' => Some(Token::Semi),
                ':' => Some(Token::Colon),
                '/' => Some(Token::Slash),
                '.' if !chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) => Some(Token::Dot),
                '~' | '!' => Some(Token::Not),
                '&' => Some(Token::And),
                '|' => Some(Token::Or),
                _ => None,
            };
            if let Some(t) = simple {
                out.push((t, pos));
                advance(1, &mut i, &mut col);
                continue;
            }
            if c == '=' && chars.get(i + 1) == Some(&'>') {
                out.push((Token::Implies, pos));
                advance(2, &mut i, &mut col);
                continue;
            }
            if c == '<' && chars.get(i + 1) == Some(&'=') && chars.get(i + 2) == Some(&'>') {
                out.push((Token::Iff, pos));
                advance(3, &mut i, &mut col);
                continue;
            }
            if c == '?' {
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && is_ident_char(chars[j]) {
                    j += 1;
                }
                if j == start {
                    return Err(syntax(pos, "expected variable name after `?`"));
                }
                out.push((Token::Var(chars[start..j].iter().collect()), pos));
                advance(j - i, &mut i, &mut col);
                continue;
            }
            if c.is_ascii_digit() || ((c == '-' || c == '+' || c == '.') && i + 1 < chars.len()) {
                if let Some((value, len)) = scan_number(&chars[i..]) {
                    out.push((Token::Number(value), pos));
                    advance(len, &mut i, &mut col);
                    continue;
                }
            }
            if c.is_alphabetic() || c == '_' {
                let mut j = i;
                while j < chars.len()
                    && (is_ident_char(chars[j])
                        || (chars[j] == '-'
                            && chars.get(j + 1).is_some_and(|d| d.is_alphabetic())))
                {
                    j += 1;
                }
                out.push((Token::Ident(chars[i..j].iter().collect()), pos));
                advance(j - i, &mut i, &mut col);
                continue;
            }
            return Err(syntax(pos, &format!("unexpected character `{c}`")));
        }
        out.push((Token::Eof, Position { line, column: col }));
        Ok(out)
    }
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn scan_number(chars: &[char]) -> Option<(f64, usize)> {
    let mut j = 0;
    if matches!(chars.first(), Some('-') | Some('+')) {
        j += 1;
    }
    let digits_start = j;
    while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
        j += 1;
    }
    if j == digits_start {
        return None;
    }
    if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
        let mut k = j + 1;
        if k < chars.len() && (chars[k] == '-' || chars[k] == '+') {
            k += 1;
        }
        let exp_start = k;
        while k < chars.len() && chars[k].is_ascii_digit() {
            k += 1;
        }
        if k > exp_start {
            j = k;
        }
    }
    let text: String = chars[..j].iter().collect();
    text.parse::<f64>().ok().map(|v| (v, j))
}

pub(crate) fn syntax(pos: Position, message: &str) -> Error {
    Error::Syntax {
        pos,
        message: message.to_string(),
    }
}

pub(crate) struct Parser {
    tokens: Vec<(Token, Position)>,
    at: usize,
    /// Every atom parsed so far with its source position, for callers that
    /// check symbols against declarations.
    pub(crate) seen_atoms: Vec<(Atom, Position)>,
}

impl Parser {
    pub(crate) fn new(src: &str) -> Result<Parser> {
        Ok(Parser {
            tokens: Lexer::tokenize(src)?,
            at: 0,
            seen_atoms: Vec::new(),
        })
    }

    pub(crate) fn peek(&self) -> &Token {
        &self.tokens[self.at].0
    }

    pub(crate) fn pos(&self) -> Position {
        self.tokens[self.at].1
    }

    pub(crate) fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].0.clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    pub(crate) fn eat(&mut self, t: &Token) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    pub(crate) fn expect(&mut self, t: &Token) -> Result<()> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.unexpected(&t.to_string()))
        }
    }

    pub(crate) fn unexpected(&self, wanted: &str) -> Error {
        syntax(
            self.pos(),
            &format!("expected {wanted}, found {}", self.peek()),
        )
    }

    pub(crate) fn ident(&mut self) -> Result<String> {
        match self.peek().clone() {
            Token::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    pub(crate) fn keyword(&mut self, kw: &str) -> Result<()> {
        match self.peek() {
            Token::Ident(s) if s == kw => {
                self.bump();
                Ok(())
            }
            _ => Err(self.unexpected(&format!("`{kw}`"))),
        }
    }

    pub(crate) fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Token::Ident(s) if s == kw)
    }

    pub(crate) fn number(&mut self) -> Result<f64> {
        match self.peek().clone() {
            Token::Number(v) => {
                self.bump();
                Ok(v)
            }
            _ => Err(self.unexpected("number")),
        }
    }

    pub(crate) fn at_eof(&self) -> bool {
        matches!(self.peek(), Token::Eof)
    }

    pub(crate) fn formula(&mut self) -> Result<Formula> {
        if self.is_keyword("forall") || self.is_keyword("exists") {
            return self.quantified();
        }
        let mut lhs = self.implication()?;
        while self.eat(&Token::Iff) {
            let rhs = self.implication()?;
            lhs = Formula::iff(lhs, rhs);
        }
        Ok(lhs)
    }

    fn quantified(&mut self) -> Result<Formula> {
        let universal = self.is_keyword("forall");
        self.bump();
        let mut vars = Vec::new();
        while let Token::Var(v) = self.peek().clone() {
            self.bump();
            vars.push(v);
        }
        if vars.is_empty() {
            return Err(self.unexpected("quantified variable"));
        }
        self.expect(&Token::Dot)?;
        let mut body = self.formula()?;
        for v in vars.into_iter().rev() {
            body = if universal {
                Formula::forall(&v, body)
            } else {
                Formula::exists(&v, body)
            };
        }
        Ok(body)
    }

    fn implication(&mut self) -> Result<Formula> {
        let lhs = self.disjunction()?;
        if self.eat(&Token::Implies) {
            let rhs = if self.is_keyword("forall") || self.is_keyword("exists") {
                self.quantified()?
            } else {
                self.implication()?
            };
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Formula> {
        let mut parts = vec![self.conjunction()?];
        while self.eat(&Token::Or) {
            parts.push(self.conjunction()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().expect("one part")
        } else {
            Formula::Or(parts)
        })
    }

    fn conjunction(&mut self) -> Result<Formula> {
        let mut parts = vec![self.unary()?];
        while self.eat(&Token::And) {
            parts.push(self.unary()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().expect("one part")
        } else {
            Formula::And(parts)
        })
    }

    fn unary(&mut self) -> Result<Formula> {
        if self.eat(&Token::Not) {
            return Ok(Formula::not(self.unary()?));
        }
        if self.is_keyword("forall") || self.is_keyword("exists") {
            return self.quantified();
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Formula> {
        match self.peek().clone() {
            Token::LParen => {
                self.bump();
                let f = self.formula()?;
                self.expect(&Token::RParen)?;
                Ok(f)
            }
            Token::Ident(s) if s == "true" => {
                self.bump();
                Ok(Formula::True)
            }
            Token::Ident(s) if s == "false" => {
                self.bump();
                Ok(Formula::False)
            }
            Token::Ident(_) => Ok(Formula::Atom(self.atom()?)),
            _ => Err(self.unexpected("formula")),
        }
    }

    pub(crate) fn atom(&mut self) -> Result<Atom> {
        let pos = self.pos();
        let predicate = self.ident()?;
        let mut args = Vec::new();
        if self.eat(&Token::LParen) {
            if !self.eat(&Token::RParen) {
                loop {
                    args.push(self.term()?);
                    if self.eat(&Token::RParen) {
                        break;
                    }
                    self.expect(&Token::Comma)?;
                }
            }
        }
        let atom = Atom {
            predicate: name(&predicate),
            args,
        };
        self.seen_atoms.push((atom.clone(), pos));
        Ok(atom)
    }

    pub(crate) fn term(&mut self) -> Result<Term> {
        match self.bump() {
            Token::Var(v) => Ok(Term::Var(name(&v))),
            Token::Ident(c) => Ok(Term::Const(name(&c))),
            other => Err(syntax(
                self.tokens[self.at.saturating_sub(1)].1,
                &format!("expected term, found {other}"),
            )),
        }
    }

    /// Position of the token just consumed.
    pub(crate) fn last_pos(&self) -> Position {
        self.tokens[self.at.saturating_sub(1)].1
    }
}

/// Parses a complete formula; trailing input is an error.
pub fn parse_formula(src: &str) -> Result<Formula> {
    let mut p = Parser::new(src)?;
    let f = p.formula()?;
    if !p.at_eof() {
        return Err(p.unexpected("end of formula"));
    }
    Ok(f)
}

/// Parses a single atom such as `MvWithObj(B,L1,L2)`.
pub fn parse_atom(src: &str) -> Result<Atom> {
    let mut p = Parser::new(src)?;
    let a = p.atom()?;
    if !p.at_eof() {
        return Err(p.unexpected("end of input"));
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_associativity() {
        let f = parse_formula("A & B | C => D <=> E").unwrap();
        let expected = Formula::iff(
            Formula::implies(
                Formula::Or(vec![
                    Formula::And(vec![Formula::atom("A", &[]), Formula::atom("B", &[])]),
                    Formula::atom("C", &[]),
                ]),
                Formula::atom("D", &[]),
            ),
            Formula::atom("E", &[]),
        );
        assert_eq!(f, expected);
        let r = parse_formula("A => B => C").unwrap();
        assert_eq!(
            r,
            Formula::implies(
                Formula::atom("A", &[]),
                Formula::implies(Formula::atom("B", &[]), Formula::atom("C", &[]))
            )
        );
    }

    #[test]
    fn quantifier_scope_extends_right() {
        let f = parse_formula("forall ?o . In(?o) => At(?o, L2)").unwrap();
        assert!(matches!(f, Formula::Forall(_, ref b) if matches!(**b, Formula::Implies(..))));
        let g = parse_formula("exists ?x ?y . R(?x,?y)").unwrap();
        assert_eq!(
            g,
            Formula::exists("x", Formula::exists("y", Formula::Atom(Atom::new("R", vec![Term::var("x"), Term::var("y")]))))
        );
    }

    #[test]
    fn errors_carry_positions() {
        match parse_formula("In(O) &\n  & At(B)") {
            Err(Error::Syntax { pos, .. }) => assert_eq!((pos.line, pos.column), (2, 3)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_formula("").is_err());
        assert!(parse_formula("In(O) In(D)").is_err());
    }

    #[test]
    fn numbers_and_hyphenated_keywords() {
        let toks: Vec<Token> = Lexer::tokenize("det-action -2.5: 1e-3 .5")
            .unwrap()
            .into_iter()
            .map(|t| t.0)
            .collect();
        assert_eq!(
            toks,
            vec![
                Token::Ident("det-action".into()),
                Token::Number(-2.5),
                Token::Colon,
                Token::Number(1e-3),
                Token::Number(0.5),
                Token::Eof
            ]
        );
    }
}
