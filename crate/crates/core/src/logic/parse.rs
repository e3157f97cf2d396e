use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use thiserror::Error;

use super::{Atom, Head, Predicate, Rule, RuleParams, MAX_BODY_LEN};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected character `{0}`")]
    UnexpectedChar(char),
    #[error("unexpected end of input, expected {0}")]
    UnexpectedEnd(&'static str),
    #[error("expected {expected}, found `{found}`")]
    Expected { expected: &'static str, found: String },
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("`{predicate}` takes {expected} argument(s), got {found}")]
    Arity { predicate: &'static str, expected: usize, found: usize },
    #[error("variables start with an uppercase letter: `{0}`")]
    BadVariable(String),
    #[error("head variable `{0}` does not appear in the body")]
    UnboundHeadVar(String),
    #[error("rule body has more than {MAX_BODY_LEN} atoms")]
    BodyTooLong,
    #[error("rule has {atoms} body atoms, parameters need {expected} numbers, got {found}")]
    ParamCount { atoms: usize, expected: usize, found: usize },
    #[error("invalid number `{0}`")]
    BadNumber(String),
}

/// A parse failure at a 1-based line and column.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Arrow,
    And,
    Not,
    At,
    Dot,
}

impl Tok {
    fn text(&self) -> String {
        match self {
            Tok::Ident(s) | Tok::Number(s) => s.clone(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
            Tok::LBracket => "[".into(),
            Tok::RBracket => "]".into(),
            Tok::Comma => ",".into(),
            Tok::Arrow => "<-".into(),
            Tok::And => "&".into(),
            Tok::Not => "!".into(),
            Tok::At => "@".into(),
            Tok::Dot => ".".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);
    while let Some(&c) = chars.peek() {
        let (l, col) = (line, column);
        let mut bump = |chars: &mut core::iter::Peekable<core::str::Chars<'_>>| {
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                column = 1;
            } else {
                column += 1;
            }
            c
        };
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            '&' | '∧' => Some(Tok::And),
            '!' | '¬' => Some(Tok::Not),
            '@' => Some(Tok::At),
            '←' => Some(Tok::Arrow),
            _ => None,
        };
        if let Some(tok) = single {
            bump(&mut chars);
            out.push(Spanned { tok, line: l, column: col });
        } else if c.is_whitespace() {
            bump(&mut chars);
        } else if c == '#' {
            while chars.peek().is_some_and(|&c| c != '\n') {
                bump(&mut chars);
            }
        } else if c == '<' {
            bump(&mut chars);
            if chars.peek() != Some(&'-') {
                return Err(ParseError { line: l, column: col, kind: ParseErrorKind::UnexpectedChar('<') });
            }
            bump(&mut chars);
            out.push(Spanned { tok: Tok::Arrow, line: l, column: col });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(&c) = chars.peek().filter(|c| c.is_ascii_alphanumeric() || **c == '_') {
                s.push(c);
                bump(&mut chars);
            }
            out.push(Spanned { tok: Tok::Ident(s), line: l, column: col });
        } else if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' {
            // A '.' not followed by a digit terminates a rule.
            if c == '.' {
                let mut look = chars.clone();
                look.next();
                if !look.peek().is_some_and(|d| d.is_ascii_digit()) {
                    bump(&mut chars);
                    out.push(Spanned { tok: Tok::Dot, line: l, column: col });
                    continue;
                }
            }
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                let exp_sign = (c == '-' || c == '+') && s.ends_with(['e', 'E']);
                let continues = c.is_ascii_digit() || c == 'e' || c == 'E' || exp_sign || (s.is_empty() && (c == '-' || c == '+'));
                let dot = c == '.' && !s.contains(['.', 'e', 'E']) && {
                    let mut look = chars.clone();
                    look.next();
                    look.peek().is_some_and(|d| d.is_ascii_digit())
                };
                if !(continues || dot) {
                    break;
                }
                s.push(c);
                bump(&mut chars);
            }
            out.push(Spanned { tok: Tok::Number(s), line: l, column: col });
        } else {
            return Err(ParseError { line: l, column: col, kind: ParseErrorKind::UnexpectedChar(c) });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn err_at(&self, i: usize, kind: ParseErrorKind) -> ParseError {
        let (line, column) = self.toks.get(i).map_or(self.end, |t| (t.line, t.column));
        ParseError { line, column, kind }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn next(&mut self, expected: &'static str) -> Result<Tok, ParseError> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.tok.clone())
            }
            None => Err(self.err_at(self.pos, ParseErrorKind::UnexpectedEnd(expected))),
        }
    }

    fn expect(&mut self, want: Tok, expected: &'static str) -> Result<(), ParseError> {
        let at = self.pos;
        let t = self.next(expected)?;
        if t == want {
            Ok(())
        } else {
            Err(self.err_at(at, ParseErrorKind::Expected { expected, found: t.text() }))
        }
    }

    fn ident(&mut self, expected: &'static str) -> Result<String, ParseError> {
        let at = self.pos;
        match self.next(expected)? {
            Tok::Ident(s) => Ok(s),
            t => Err(self.err_at(at, ParseErrorKind::Expected { expected, found: t.text() })),
        }
    }

    fn var(&mut self) -> Result<String, ParseError> {
        let at = self.pos;
        let v = self.ident("a variable")?;
        if v.starts_with(|c: char| c.is_ascii_uppercase()) {
            Ok(v)
        } else {
            Err(self.err_at(at, ParseErrorKind::BadVariable(v)))
        }
    }

    fn args(&mut self) -> Result<Vec<String>, ParseError> {
        self.expect(Tok::LParen, "`(`")?;
        let mut args = alloc::vec![self.var()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            args.push(self.var()?);
        }
        self.expect(Tok::RParen, "`)` or `,`")?;
        Ok(args)
    }

    fn atom(&mut self) -> Result<Atom, ParseError> {
        let negated = self.peek() == Some(&Tok::Not);
        if negated {
            self.pos += 1;
        }
        let at = self.pos;
        let name = self.ident("a predicate")?;
        let predicate =
            Predicate::from_name(&name).ok_or_else(|| self.err_at(at, ParseErrorKind::UnknownPredicate(name)))?;
        let args = self.args()?;
        if args.len() != predicate.arity() {
            return Err(self.err_at(
                at,
                ParseErrorKind::Arity { predicate: predicate.name(), expected: predicate.arity(), found: args.len() },
            ));
        }
        Ok(Atom { predicate, args, negated })
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let at = self.pos;
        match self.next("a number")? {
            Tok::Number(s) => s.parse().map_err(|_| self.err_at(at, ParseErrorKind::BadNumber(s))),
            t => Err(self.err_at(at, ParseErrorKind::Expected { expected: "a number", found: t.text() })),
        }
    }

    fn rule(&mut self) -> Result<(Rule, Option<RuleParams>), ParseError> {
        let start = self.pos;
        let name = self.ident("a rule head")?;
        let head_at = self.pos;
        let head_args = self.args()?;
        if head_args.len() != 1 {
            return Err(self.err_at(
                head_at,
                ParseErrorKind::Expected { expected: "a single head variable", found: head_args.join(",") },
            ));
        }
        self.expect(Tok::Arrow, "`<-`")?;
        let mut body = alloc::vec![self.atom()?];
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            body.push(self.atom()?);
            if body.len() > MAX_BODY_LEN {
                return Err(self.err_at(start, ParseErrorKind::BodyTooLong));
            }
        }
        let head = Head { name, var: head_args.into_iter().next().unwrap_or_default() };
        if !body.iter().any(|a| a.args.contains(&head.var)) {
            return Err(self.err_at(start, ParseErrorKind::UnboundHeadVar(head.var)));
        }
        let mut params = None;
        if self.peek() == Some(&Tok::At) {
            let at = self.pos;
            self.pos += 1;
            self.expect(Tok::LBracket, "`[`")?;
            let mut flat = alloc::vec![self.number()?];
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                flat.push(self.number()?);
            }
            self.expect(Tok::RBracket, "`]` or `,`")?;
            if flat.len() != body.len() + 1 {
                return Err(self.err_at(
                    at,
                    ParseErrorKind::ParamCount { atoms: body.len(), expected: body.len() + 1, found: flat.len() },
                ));
            }
            params = RuleParams::from_flat(&flat);
        }
        self.expect(Tok::Dot, "`&`, `@` or `.`")?;
        Ok((Rule { head, body }, params))
    }
}

/// Parses a rule file. Each rule may carry its conjunction parameters as
/// `@ [b₁, .., bₙ, c]` before the final `.`.
pub fn parse_rules(text: &str) -> Result<Vec<(Rule, Option<RuleParams>)>, ParseError> {
    let toks = lex(text)?;
    let last_line = text.split('\n').count();
    let last_col = text.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    let mut p = Parser { toks, pos: 0, end: (last_line, last_col) };
    let mut rules = Vec::new();
    while p.peek().is_some() {
        rules.push(p.rule()?);
    }
    Ok(rules)
}

/// Renders rules in the syntax accepted by [`parse_rules`].
pub fn format_rules(rules: &[(Rule, Option<RuleParams>)]) -> String {
    let mut out = String::new();
    for (rule, params) in rules {
        let text = rule.to_string();
        match params {
            Some(p) => {
                let nums: Vec<String> = p.to_flat().iter().map(|x| alloc::format!("{x:?}")).collect();
                let _ = writeln!(out, "{} @ [{}].", &text[..text.len() - 1], nums.join(", "));
            }
            None => {
                let _ = writeln!(out, "{text}");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE_RULES: &str = "\
# oil-area rules
OilArea(A) <- SuspectedArea(A) & Ground(B) & On(A,B).
OilArea(A) <- SuspectedArea(A) & OilStorageDevice(B) & Around(A,B).
OilArea(A) <- SuspectedArea(A) & Ground(B) & OilStorageDevice(C) & On(A,B) & Around(A,C).
";

    fn err(text: &str) -> ParseError {
        parse_rules(text).unwrap_err()
    }

    #[test]
    fn parses_rule_four() {
        let rules = parse_rules("OilArea(A) <- SuspectedArea(A) & Ground(B) & On(A,B).").unwrap();
        assert_eq!(rules.len(), 1);
        let (r, p) = &rules[0];
        assert!(p.is_none());
        assert_eq!(r.head, Head { name: "OilArea".into(), var: "A".into() });
        let preds: Vec<_> = r.body.iter().map(|a| a.predicate).collect();
        assert_eq!(preds, [Predicate::SuspectedArea, Predicate::Ground, Predicate::On]);
        assert_eq!(r.body[2].args, ["A", "B"]);
        assert_eq!(r.vars(), ["A", "B"]);
    }

    #[test]
    fn parses_negation() {
        let rules = parse_rules("OilArea(A) <- !Ground(A).").unwrap();
        assert!(rules[0].0.body[0].negated);
        assert_eq!(rules[0].0.to_string(), "OilArea(A) <- !Ground(A).");
    }

    #[test]
    fn unicode_operators() {
        let a = parse_rules("OilArea(A) ← SuspectedArea(A) ∧ ¬Ground(A).").unwrap();
        let b = parse_rules("OilArea(A) <- SuspectedArea(A) & !Ground(A).").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn round_trips_reference_rules() {
        let rules = parse_rules(REFERENCE_RULES).unwrap();
        assert_eq!(rules.len(), 3);
        assert_eq!(parse_rules(&format_rules(&rules)).unwrap(), rules);
    }

    #[test]
    fn round_trips_params() {
        let text = "OilArea(A) <- SuspectedArea(A) & Ground(B) & On(A,B) @ [0.645, 0.181, 0.162, 0.012].\n\
                    OilArea(A) <- SuspectedArea(A) & Around(A,B) @ [1e-3, -.5, -2.25E+1].";
        let rules = parse_rules(text).unwrap();
        assert_eq!(rules[0].1.as_ref().unwrap().to_flat(), [0.645, 0.181, 0.162, 0.012]);
        assert_eq!(rules[1].1.as_ref().unwrap().to_flat(), [1e-3, -0.5, -22.5]);
        assert_eq!(parse_rules(&format_rules(&rules)).unwrap(), rules);
    }

    #[test]
    fn unknown_predicate_has_position() {
        let e = err("OilArea(A) <- SuspectedArea(A).\nOilArea(A) <- Puddle(A).");
        assert_eq!((e.line, e.column), (2, 15));
        assert_eq!(e.kind, ParseErrorKind::UnknownPredicate("Puddle".into()));
    }

    #[test]
    fn rejects_bad_rules() {
        assert!(matches!(err("OilArea(A) <- On(A).").kind, ParseErrorKind::Arity { expected: 2, found: 1, .. }));
        assert!(matches!(err("OilArea(A) <- Ground(B).").kind, ParseErrorKind::UnboundHeadVar(_)));
        assert!(matches!(err("OilArea(A) <- Ground(a).").kind, ParseErrorKind::BadVariable(_)));
        assert!(matches!(err("OilArea(A) <- Ground(A)").kind, ParseErrorKind::UnexpectedEnd(_)));
        assert!(matches!(err("OilArea(A) <- Ground(A) @ [1].").kind, ParseErrorKind::ParamCount { .. }));
        assert!(matches!(err("OilArea(A) <- Ground(A) % .").kind, ParseErrorKind::UnexpectedChar('%')));
        let long = alloc::format!("H(A) <- {}.", alloc::vec!["Ground(A)"; 17].join(" & "));
        assert_eq!(err(&long).kind, ParseErrorKind::BodyTooLong);
        let ok = alloc::format!("H(A) <- {}.", alloc::vec!["Ground(A)"; 16].join(" & "));
        assert!(parse_rules(&ok).is_ok());
    }

    #[test]
    fn empty_and_comment_only_input() {
        assert!(parse_rules("").unwrap().is_empty());
        assert!(parse_rules("# nothing here\n   \n").unwrap().is_empty());
    }
}
