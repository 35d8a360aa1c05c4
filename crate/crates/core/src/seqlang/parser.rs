use std::collections::HashMap;
use std::fmt;

use super::ast::{Anchor, Dimension, Expr, MwRotation, Placement, SequenceProgram, Statement, Value};
use super::lexer::{lex, Tok, Token};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl Diagnostic {
    pub fn new(line: usize, col: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            col,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ParseError {
    pub diagnostics: Vec<Diagnostic>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

pub(crate) const KEYWORDS: &[&str] = &[
    "param", "trigger", "laser", "mw", "wait", "at", "until", "center", "for", "phase", "detune", "pi",
];

/// Name of the built-in rotation-period constant.
pub const TROT: &str = "Trot";

pub fn parse_sequence(text: &str) -> Result<SequenceProgram, ParseError> {
    let mut diags = Vec::new();
    let tokens = lex(text, &mut diags);
    let mut p = Parser {
        toks: tokens,
        pos: 0,
        diags,
    };
    let prog = p.program();
    if p.diags.is_empty() {
        Ok(prog)
    } else {
        p.diags.sort_by_key(|d| (d.line, d.col));
        p.diags.dedup();
        Err(ParseError { diagnostics: p.diags })
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    diags: Vec<Diagnostic>,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn at_ident(&self, word: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(w) if w == word)
    }

    fn error_here(&self, msg: impl Into<String>) -> Diagnostic {
        let t = self.peek();
        Diagnostic::new(t.line, t.col, msg)
    }

    fn expect(&mut self, tok: Tok) -> PResult<Token> {
        if self.peek().tok == tok {
            Ok(self.bump())
        } else {
            Err(self.error_here(format!("expected {}, found {}", tok.describe(), self.peek().tok.describe())))
        }
    }

    fn skip_statement(&mut self) {
        while !matches!(self.peek().tok, Tok::Sep | Tok::Eof) {
            self.bump();
        }
    }

    fn program(&mut self) -> SequenceProgram {
        let mut statements = Vec::new();
        let mut lines = Vec::new();
        let mut env: HashMap<String, Value> = HashMap::new();
        env.insert(TROT.into(), (f64::NAN, Dimension::Time));
        let mut trigger_seen = false;
        let mut any_statement = false;
        loop {
            while self.peek().tok == Tok::Sep {
                self.bump();
            }
            if self.peek().tok == Tok::Eof {
                break;
            }
            any_statement = true;
            let head = self.peek().clone();
            if self.at_ident("trigger") {
                self.bump();
                if trigger_seen {
                    self.diags
                        .push(Diagnostic::new(head.line, head.col, "duplicate trigger anchor"));
                }
                if statements.iter().any(|s| !matches!(s, Statement::Param { .. })) {
                    self.diags.push(Diagnostic::new(
                        head.line,
                        head.col,
                        "trigger must precede all timed statements",
                    ));
                }
                trigger_seen = true;
                self.end_of_statement();
                continue;
            }
            match self.statement(&mut env) {
                Ok(s) => {
                    statements.push(s);
                    lines.push(head.line);
                    self.end_of_statement();
                }
                Err(d) => {
                    self.diags.push(d);
                    self.skip_statement();
                }
            }
        }
        if !any_statement {
            self.diags.push(Diagnostic::new(1, 1, "empty program"));
        } else if self.diags.is_empty() && !statements.iter().any(|s| !matches!(s, Statement::Param { .. })) {
            self.diags.push(Diagnostic::new(1, 1, "program has no events"));
        }
        SequenceProgram { statements, lines }
    }

    fn end_of_statement(&mut self) {
        if !matches!(self.peek().tok, Tok::Sep | Tok::Eof) {
            let d = self.error_here(format!("unexpected {} after statement", self.peek().tok.describe()));
            self.diags.push(d);
            self.skip_statement();
        }
    }

    fn statement(&mut self, env: &mut HashMap<String, Value>) -> PResult<Statement> {
        let head = self.bump();
        let word = match &head.tok {
            Tok::Ident(w) => w.clone(),
            other => {
                return Err(Diagnostic::new(
                    head.line,
                    head.col,
                    format!("expected a statement keyword, found {}", other.describe()),
                ))
            }
        };
        match word.as_str() {
            "param" => self.param(env),
            "wait" => {
                let duration = self.checked(env, Dimension::Time, Check::Duration)?;
                Ok(Statement::Wait { duration })
            }
            "laser" => self.laser(env, &head),
            "mw" => self.mw(env),
            _ => Err(Diagnostic::new(
                head.line,
                head.col,
                format!("unknown keyword '{word}' (expected param, trigger, laser, mw or wait)"),
            )),
        }
    }

    fn param(&mut self, env: &mut HashMap<String, Value>) -> PResult<Statement> {
        let name_tok = self.bump();
        let name = match &name_tok.tok {
            Tok::Ident(n) => n.clone(),
            other => {
                return Err(Diagnostic::new(
                    name_tok.line,
                    name_tok.col,
                    format!("expected parameter name, found {}", other.describe()),
                ))
            }
        };
        if KEYWORDS.contains(&name.as_str()) || name == TROT {
            return Err(Diagnostic::new(
                name_tok.line,
                name_tok.col,
                format!("'{name}' is reserved and cannot name a parameter"),
            ));
        }
        if env.contains_key(&name) {
            return Err(Diagnostic::new(
                name_tok.line,
                name_tok.col,
                format!("duplicate parameter '{name}'"),
            ));
        }
        self.expect(Tok::Eq)?;
        let at = self.peek().clone();
        let value = self.expr()?;
        let v = value
            .eval(env)
            .map_err(|e| Diagnostic::new(at.line, at.col, e.to_string()))?;
        if v.1 == Dimension::Time && v.0 < 0.0 {
            return Err(Diagnostic::new(
                at.line,
                at.col,
                format!("negative duration for parameter '{name}'"),
            ));
        }
        env.insert(name.clone(), v);
        Ok(Statement::Param { name, value })
    }

    fn laser(&mut self, env: &HashMap<String, Value>, head: &Token) -> PResult<Statement> {
        let mut duration = None;
        let mut placement = None;
        while let Tok::Ident(w) = &self.peek().tok {
            let w = w.clone();
            let kw = self.peek().clone();
            match w.as_str() {
                "for" => {
                    self.bump();
                    if duration.is_some() {
                        return Err(Diagnostic::new(kw.line, kw.col, "duplicate 'for' clause"));
                    }
                    duration = Some(self.checked(env, Dimension::Time, Check::Duration)?);
                }
                "at" | "until" | "center" => {
                    self.bump();
                    if placement.is_some() {
                        return Err(Diagnostic::new(kw.line, kw.col, "duplicate placement clause"));
                    }
                    placement = Some(self.placement(env, &w)?);
                }
                _ => {
                    return Err(Diagnostic::new(
                        kw.line,
                        kw.col,
                        format!("unknown laser clause '{w}' (expected for, at, until or center)"),
                    ))
                }
            }
        }
        let duration =
            duration.ok_or_else(|| Diagnostic::new(head.line, head.col, "laser needs a 'for <duration>' clause"))?;
        Ok(Statement::Laser { duration, placement })
    }

    fn mw(&mut self, env: &HashMap<String, Value>) -> PResult<Statement> {
        let rot_tok = self.peek().clone();
        let rotation = if self.at_ident("pi") {
            self.bump();
            if self.peek().tok == Tok::Slash {
                self.bump();
                let t = self.bump();
                if t.tok != Tok::Number(2.0) {
                    return Err(Diagnostic::new(
                        t.line,
                        t.col,
                        "only pi and pi/2 rotations are supported",
                    ));
                }
                MwRotation::HalfPi
            } else {
                MwRotation::Pi
            }
        } else if self.at_ident("for") {
            self.bump();
            MwRotation::Duration(self.checked(env, Dimension::Time, Check::Duration)?)
        } else {
            return Err(Diagnostic::new(
                rot_tok.line,
                rot_tok.col,
                format!(
                    "expected pi, pi/2 or 'for <duration>' after mw, found {}",
                    rot_tok.tok.describe()
                ),
            ));
        };
        let mut placement = None;
        let mut phase = None;
        let mut detune = None;
        while let Tok::Ident(w) = &self.peek().tok {
            let w = w.clone();
            let kw = self.peek().clone();
            self.bump();
            let dup = |what: &str| Diagnostic::new(kw.line, kw.col, format!("duplicate {what} clause"));
            match w.as_str() {
                "at" | "until" | "center" => {
                    if placement.is_some() {
                        return Err(dup("placement"));
                    }
                    placement = Some(self.placement(env, &w)?);
                }
                "phase" => {
                    if phase.is_some() {
                        return Err(dup("'phase'"));
                    }
                    phase = Some(self.checked(env, Dimension::Angle, Check::None)?);
                }
                "detune" => {
                    if detune.is_some() {
                        return Err(dup("'detune'"));
                    }
                    detune = Some(self.checked(env, Dimension::Frequency, Check::None)?);
                }
                _ => {
                    return Err(Diagnostic::new(
                        kw.line,
                        kw.col,
                        format!("unknown mw clause '{w}' (expected at, until, center, phase or detune)"),
                    ))
                }
            }
        }
        Ok(Statement::Mw {
            rotation,
            placement,
            phase,
            detune,
        })
    }

    fn placement(&mut self, env: &HashMap<String, Value>, word: &str) -> PResult<Placement> {
        let anchor = match word {
            "at" => Anchor::At,
            "until" => Anchor::Until,
            _ => Anchor::Center,
        };
        let time = self.checked(env, Dimension::Time, Check::NonNegativeTime)?;
        Ok(Placement { anchor, time })
    }

    /// Parse an expression and check its dimension (and sign when known).
    fn checked(&mut self, env: &HashMap<String, Value>, want: Dimension, check: Check) -> PResult<Expr> {
        let at = self.peek().clone();
        if matches!(at.tok, Tok::Sep | Tok::Eof) {
            return Err(Diagnostic::new(at.line, at.col, format!("expected a {want} value")));
        }
        let e = self.expr()?;
        let (v, dim) = e.eval(env).map_err(|err| Diagnostic::new(at.line, at.col, err.to_string()))?;
        if dim != want {
            let msg = if dim == Dimension::Scalar {
                format!("missing unit: expected a {want}")
            } else {
                format!("dimension mismatch: expected a {want}, found a {dim}")
            };
            return Err(Diagnostic::new(at.line, at.col, msg));
        }
        match check {
            Check::Duration if v < 0.0 => Err(Diagnostic::new(at.line, at.col, "negative duration")),
            Check::NonNegativeTime if v < 0.0 => Err(Diagnostic::new(at.line, at.col, "negative time")),
            _ => Ok(e),
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek().tok {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.peek().tok == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<Expr> {
        let t = self.bump();
        match t.tok {
            Tok::Quantity(v, u) => Ok(Expr::Quantity(v, u)),
            Tok::Number(v) => Ok(Expr::Number(v)),
            Tok::Ident(name) => {
                if KEYWORDS.contains(&name.as_str()) {
                    Err(Diagnostic::new(
                        t.line,
                        t.col,
                        format!("keyword '{name}' cannot be used as a value"),
                    ))
                } else {
                    Ok(Expr::Ident(name))
                }
            }
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            other => Err(Diagnostic::new(
                t.line,
                t.col,
                format!("expected a value, found {}", other.describe()),
            )),
        }
    }
}

#[derive(Clone, Copy)]
enum Check {
    None,
    Duration,
    NonNegativeTime,
}
