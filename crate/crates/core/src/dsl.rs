//! Textual model format (`.hynet`): lexer, recursive-descent parser and
//! canonical printer.
//!
//! ```text
//! network        := "network" IDENT "{" decl* automaton+ "}"
//! decl           := "const" IDENT "=" NUMBER [unit] ";"
//!                 | "var" IDENT "init" NUMBER [unit] ";"
//!                 | "channel" ["urgent"] IDENT ";"
//! unit           := "unit" STRING
//! automaton      := "automaton" IDENT "{" ["clock" IDENT ";"] location+ edge* "}"
//! location       := "location" IDENT ["init"] "{" flow* ["invariant" expr ";"]
//!                   ["dwell" ("eager" | "exponential" "(" NUMBER ")") ";"] "}"
//! flow           := "d" "(" IDENT ")" "=" expr ["while" expr] ";"
//! edge           := "edge" IDENT "->" IDENT "{" ["guard" expr ";"]
//!                   ["emit" IDENT ";" | "receive" IDENT ";"]
//!                   ("reset" IDENT "=" expr ";")* ["weight" NUMBER ";"] "}"
//! ```
//!
//! Expressions use the usual precedence (`||` < `&&` < comparison <
//! additive < multiplicative < unary); `and`/`or` are accepted as spellings
//! of `&&`/`||`. A leading minus negates the multiplicative chain after it,
//! so `-a*b` is `-(a*b)`. Comments run from `//` to end of line.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::expr::{BinaryOp, Expr, UnaryOp, WithClock};
use crate::model::{
    validate_network, ChannelDecl, DwellPolicy, Edge, ElementRef, Flow, HybridAutomaton, Issue,
    Location, NetworkModel, Reset, Severity, SyncLabel, VarDecl, VarKind,
};

/// 1-based line and column (in characters).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{pos}: {}, found {found}", expected_text(.expected))]
pub struct SyntaxError {
    pub pos: Pos,
    pub expected: Vec<String>,
    pub found: String,
}

fn expected_text(expected: &[String]) -> String {
    match expected {
        [] => "unexpected input".to_string(),
        [one] => format!("expected {}", one),
        many => format!("expected one of {}", many.join(", ")),
    }
}

/// A validation problem located in the source text.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceIssue {
    pub issue: Issue,
    pub pos: Option<Pos>,
    pub related_pos: Option<Pos>,
}

impl fmt::Display for SourceIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.issue.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}[{}]", level, self.issue.code)?;
        if let Some(p) = self.pos {
            write!(f, " at {}", p)?;
        }
        write!(f, ": {}", self.issue.message)?;
        if let Some(p) = self.related_pos {
            write!(f, " (first declared at {})", p)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("input is not valid UTF-8 (byte {0})")]
    Encoding(usize),
    #[error("{}", semantic_text(.0))]
    Semantic(Vec<SourceIssue>),
}

fn semantic_text(issues: &[SourceIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n")
}

impl DslError {
    pub fn issues(&self) -> &[SourceIssue] {
        match self {
            DslError::Semantic(issues) => issues,
            _ => &[],
        }
    }
}

/// Source positions of model elements, as recorded by the parser.
#[derive(Debug, Clone, Default)]
pub struct SourceMap {
    positions: HashMap<ElementRef, Pos>,
}

impl SourceMap {
    pub fn position(&self, element: ElementRef) -> Option<Pos> {
        self.positions.get(&element).copied()
    }

    /// Attaches source positions to every issue in a validation report.
    pub fn locate(&self, issues: &[Issue]) -> Vec<SourceIssue> {
        issues
            .iter()
            .map(|issue| SourceIssue {
                issue: issue.clone(),
                pos: self.position(issue.element),
                related_pos: issue.related.and_then(|r| self.position(r)),
            })
            .collect()
    }
}

// ---------------------------------------------------------------- lexer

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Num(f64),
    Str(String),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "'{}'", s),
            Tok::Num(x) => write!(f, "number {}", x),
            Tok::Str(s) => write!(f, "string \"{}\"", s),
            Tok::Sym(s) => write!(f, "'{}'", s),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

const SYMBOLS: &[&str] = &[
    "->", "<=", ">=", "==", "&&", "||", "<>", "{", "}", "(", ")", "[", "]", ";", "=", ".", "+",
    "-", "*", "/", "<", ">",
];

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

pub(crate) fn lex(text: &str) -> Result<Vec<Token>, SyntaxError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let advance = |i: &mut usize, line: &mut u32, col: &mut u32, n: usize| {
        for _ in 0..n {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        if c.is_ascii_digit() {
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            let mut plain = true;
            if j < chars.len() && chars[j] == '.' && chars.get(j + 1).is_some_and(|d| d.is_ascii_digit()) {
                plain = false;
                j += 1;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
            }
            if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    plain = false;
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                    j = k;
                }
            }
            if j < chars.len() && is_ident_char(chars[j]) {
                if plain {
                    // digit-led names such as `80_to_20`
                    let mut k = j;
                    while k < chars.len() && is_ident_char(chars[k]) {
                        k += 1;
                    }
                    let word: String = chars[i..k].iter().collect();
                    out.push(Token { tok: Tok::Ident(word), pos });
                    { let n = k - i; advance(&mut i, &mut line, &mut col, n); }
                    continue;
                }
                return Err(SyntaxError {
                    pos,
                    expected: vec!["a well-formed number".into()],
                    found: format!("'{}'", chars[i..=j].iter().collect::<String>()),
                });
            }
            let literal: String = chars[i..j].iter().collect();
            let value: f64 = literal.parse().map_err(|_| SyntaxError {
                pos,
                expected: vec!["a number".into()],
                found: format!("'{}'", literal),
            })?;
            if !value.is_finite() {
                return Err(SyntaxError {
                    pos,
                    expected: vec!["a finite number".into()],
                    found: format!("'{}'", literal),
                });
            }
            out.push(Token { tok: Tok::Num(value), pos });
            { let n = j - i; advance(&mut i, &mut line, &mut col, n); }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && is_ident_char(chars[j]) {
                j += 1;
            }
            let word: String = chars[i..j].iter().collect();
            out.push(Token { tok: Tok::Ident(word), pos });
            { let n = j - i; advance(&mut i, &mut line, &mut col, n); }
            continue;
        }
        if c == '"' {
            let mut j = i + 1;
            while j < chars.len() && chars[j] != '"' && chars[j] != '\n' {
                j += 1;
            }
            if j >= chars.len() || chars[j] != '"' {
                return Err(SyntaxError {
                    pos,
                    expected: vec!["closing '\"'".into()],
                    found: "end of line".into(),
                });
            }
            let s: String = chars[i + 1..j].iter().collect();
            out.push(Token { tok: Tok::Str(s), pos });
            { let n = j + 1 - i; advance(&mut i, &mut line, &mut col, n); }
            continue;
        }
        let sym = SYMBOLS.iter().find(|s| {
            s.chars()
                .enumerate()
                .all(|(k, sc)| chars.get(i + k) == Some(&sc))
        });
        match sym {
            Some(s) => {
                out.push(Token { tok: Tok::Sym(s), pos });
                advance(&mut i, &mut line, &mut col, s.len());
            }
            None => {
                return Err(SyntaxError {
                    pos,
                    expected: vec![],
                    found: format!("character {:?}", c),
                })
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: Pos { line, col },
    });
    Ok(out)
}

// ---------------------------------------------------------------- parser

const EXPR_START: &[&str] = &["a number", "an identifier", "'('", "'-'", "'exp'", "'true'", "'false'"];
const RESERVED: &[&str] = &["exp", "true", "false", "and", "or"];

pub(crate) struct Parser {
    toks: Vec<Token>,
    at: usize,
    clock: Option<String>,
}

impl Parser {
    pub(crate) fn new(text: &str) -> Result<Self, SyntaxError> {
        Ok(Parser {
            toks: lex(text)?,
            at: 0,
            clock: None,
        })
    }

    fn peek(&self) -> &Token {
        &self.toks[self.at]
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.at + k).min(self.toks.len() - 1)].tok
    }

    pub(crate) fn pos(&self) -> Pos {
        self.peek().pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    pub(crate) fn fail<T>(&self, expected: &[&str]) -> Result<T, SyntaxError> {
        Err(SyntaxError {
            pos: self.pos(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().tok.to_string(),
        })
    }

    pub(crate) fn is_sym(&self, s: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(t) if *t == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(w) if w == kw)
    }

    pub(crate) fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub(crate) fn expect_sym(&mut self, s: &str) -> Result<(), SyntaxError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.fail(&[&format!("'{}'", s)])
        }
    }

    pub(crate) fn expect_kw(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.fail(&[&format!("'{}'", kw)])
        }
    }

    pub(crate) fn ident(&mut self) -> Result<(String, Pos), SyntaxError> {
        match &self.peek().tok {
            Tok::Ident(w) => {
                let w = w.clone();
                let pos = self.bump().pos;
                Ok((w, pos))
            }
            _ => self.fail(&["an identifier"]),
        }
    }

    pub(crate) fn number(&mut self) -> Result<f64, SyntaxError> {
        match self.peek().tok {
            Tok::Num(x) => {
                self.bump();
                Ok(x)
            }
            _ => self.fail(&["a number"]),
        }
    }

    fn signed_number(&mut self) -> Result<f64, SyntaxError> {
        if self.eat_sym("-") {
            Ok(-self.number()?)
        } else {
            self.number()
        }
    }

    pub(crate) fn at_end(&self) -> bool {
        self.peek().tok == Tok::Eof
    }

    pub(crate) fn expect_end(&self) -> Result<(), SyntaxError> {
        if self.at_end() {
            Ok(())
        } else {
            self.fail(&["end of input"])
        }
    }

    // ---- expressions

    pub(crate) fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.and_expr()?;
        while self.eat_sym("||") || self.eat_kw("or") {
            let rhs = self.and_expr()?;
            lhs = Expr::binary(BinaryOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.cmp_expr()?;
        while self.eat_sym("&&") || self.eat_kw("and") {
            let rhs = self.cmp_expr()?;
            lhs = Expr::binary(BinaryOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn cmp_expr(&mut self) -> Result<Expr, SyntaxError> {
        let lhs = self.add_expr()?;
        let op = match &self.peek().tok {
            Tok::Sym("<") => BinaryOp::Lt,
            Tok::Sym("<=") => BinaryOp::Le,
            Tok::Sym(">") => BinaryOp::Gt,
            Tok::Sym(">=") => BinaryOp::Ge,
            Tok::Sym("==") => BinaryOp::Eq,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.add_expr()?;
        Ok(Expr::binary(op, lhs, rhs))
    }

    fn add_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = if self.eat_sym("+") {
                BinaryOp::Add
            } else if self.eat_sym("-") {
                BinaryOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.mul_expr()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn mul_expr(&mut self) -> Result<Expr, SyntaxError> {
        if self.eat_sym("-") {
            let inner = self.mul_expr()?;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        let mut lhs = self.primary()?;
        loop {
            let op = if self.eat_sym("*") {
                BinaryOp::Mul
            } else if self.eat_sym("/") {
                BinaryOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = if self.eat_sym("-") {
                Expr::Unary(UnaryOp::Neg, Box::new(self.mul_expr()?))
            } else {
                self.primary()?
            };
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek().tok.clone() {
            Tok::Num(x) => {
                self.bump();
                Ok(Expr::Const(x))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(w) if w == "exp" => {
                self.bump();
                self.expect_sym("(")?;
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e.exp())
            }
            Tok::Ident(w) if w == "true" || w == "false" => {
                self.bump();
                Ok(Expr::Bool(w == "true"))
            }
            Tok::Ident(w) if !RESERVED.contains(&w.as_str()) => {
                self.bump();
                if self.is_sym(".") && matches!(self.peek_at(1), Tok::Ident(_)) {
                    self.bump();
                    let (location, _) = self.ident()?;
                    return Ok(Expr::Loc {
                        automaton: w,
                        location,
                    });
                }
                if self.clock.as_deref() == Some(w.as_str()) {
                    Ok(Expr::Clock)
                } else {
                    Ok(Expr::Var(w))
                }
            }
            _ => self.fail(EXPR_START),
        }
    }

    // ---- models

    fn network(&mut self, spans: &mut SourceMap) -> Result<NetworkModel, SyntaxError> {
        self.expect_kw("network")?;
        let (name, pos) = self.ident()?;
        spans.positions.insert(ElementRef::Network, pos);
        self.expect_sym("{")?;
        let mut model = NetworkModel {
            name,
            variables: Vec::new(),
            channels: Vec::new(),
            automata: Vec::new(),
        };
        loop {
            if self.eat_kw("const") || self.is_kw("var") {
                let kind = if self.eat_kw("var") {
                    VarKind::Var
                } else {
                    VarKind::Const
                };
                let (name, pos) = self.ident()?;
                match kind {
                    VarKind::Const => self.expect_sym("=")?,
                    VarKind::Var => self.expect_kw("init")?,
                }
                let init = self.signed_number()?;
                let unit = if self.eat_kw("unit") {
                    match self.peek().tok.clone() {
                        Tok::Str(s) => {
                            self.bump();
                            Some(s)
                        }
                        _ => return self.fail(&["a quoted unit string"]),
                    }
                } else {
                    None
                };
                self.expect_sym(";")?;
                spans
                    .positions
                    .insert(ElementRef::Variable(model.variables.len()), pos);
                model.variables.push(VarDecl {
                    name,
                    kind,
                    init,
                    unit,
                });
            } else if self.eat_kw("channel") {
                let urgent = self.eat_kw("urgent");
                let (name, pos) = self.ident()?;
                self.expect_sym(";")?;
                spans
                    .positions
                    .insert(ElementRef::Channel(model.channels.len()), pos);
                model.channels.push(ChannelDecl { name, urgent });
            } else {
                break;
            }
        }
        if !self.is_kw("automaton") {
            return self.fail(&["'const'", "'var'", "'channel'", "'automaton'"]);
        }
        while self.is_kw("automaton") {
            let index = model.automata.len();
            let aut = self.automaton(index, spans)?;
            model.automata.push(aut);
        }
        if !self.is_sym("}") {
            return self.fail(&["'automaton'", "'}'"]);
        }
        self.bump();
        self.expect_end()?;
        Ok(model)
    }

    fn automaton(&mut self, ai: usize, spans: &mut SourceMap) -> Result<HybridAutomaton, SyntaxError> {
        self.expect_kw("automaton")?;
        let (name, pos) = self.ident()?;
        spans.positions.insert(ElementRef::Automaton(ai), pos);
        self.expect_sym("{")?;
        let clock = if self.eat_kw("clock") {
            let (c, _) = self.ident()?;
            self.expect_sym(";")?;
            Some(c)
        } else {
            None
        };
        self.clock = clock.clone();
        let mut locations = Vec::new();
        let mut initial: Option<String> = None;
        let mut init_pos = pos;
        if !self.is_kw("location") {
            return self.fail(if clock.is_some() {
                &["'location'"]
            } else {
                &["'clock'", "'location'"]
            });
        }
        while self.is_kw("location") {
            self.bump();
            let (lname, lpos) = self.ident()?;
            if self.eat_kw("init") {
                if initial.is_some() {
                    return Err(SyntaxError {
                        pos: lpos,
                        expected: vec!["a single initial location".into()],
                        found: format!("second 'init' on '{}'", lname),
                    });
                }
                initial = Some(lname.clone());
                init_pos = lpos;
            }
            spans
                .positions
                .insert(ElementRef::Location(ai, locations.len()), lpos);
            self.expect_sym("{")?;
            let mut flows = Vec::new();
            while self.is_kw("d") && matches!(self.peek_at(1), Tok::Sym("(")) {
                self.bump();
                self.bump();
                let (var, _) = self.ident()?;
                self.expect_sym(")")?;
                self.expect_sym("=")?;
                let rhs = self.expr()?;
                let gate = if self.eat_kw("while") {
                    Some(self.expr()?)
                } else {
                    None
                };
                self.expect_sym(";")?;
                flows.push(Flow { var, rhs, gate });
            }
            let invariant = if self.eat_kw("invariant") {
                let e = self.expr()?;
                self.expect_sym(";")?;
                Some(e)
            } else {
                None
            };
            let dwell = if self.eat_kw("dwell") {
                let d = if self.eat_kw("eager") {
                    DwellPolicy::Eager
                } else if self.eat_kw("exponential") {
                    self.expect_sym("(")?;
                    let rate = self.number()?;
                    self.expect_sym(")")?;
                    DwellPolicy::Exponential { rate }
                } else {
                    return self.fail(&["'eager'", "'exponential'"]);
                };
                self.expect_sym(";")?;
                d
            } else {
                DwellPolicy::Eager
            };
            if !self.is_sym("}") {
                return self.fail(&["'d'", "'invariant'", "'dwell'", "'}'"]);
            }
            self.bump();
            locations.push(Location {
                name: lname,
                flows,
                invariant,
                dwell,
            });
        }
        let mut edges = Vec::new();
        while self.is_kw("edge") {
            self.bump();
            let (source, epos) = self.ident()?;
            self.expect_sym("->")?;
            let (target, _) = self.ident()?;
            spans.positions.insert(ElementRef::Edge(ai, edges.len()), epos);
            self.expect_sym("{")?;
            let guard = if self.eat_kw("guard") {
                let g = self.expr()?;
                self.expect_sym(";")?;
                Some(g)
            } else {
                None
            };
            let sync = if self.eat_kw("emit") {
                let (c, _) = self.ident()?;
                self.expect_sym(";")?;
                SyncLabel::Emit(c)
            } else if self.eat_kw("receive") {
                let (c, _) = self.ident()?;
                self.expect_sym(";")?;
                SyncLabel::Receive(c)
            } else {
                SyncLabel::None
            };
            let mut resets = Vec::new();
            while self.eat_kw("reset") {
                let (target, _) = self.ident()?;
                self.expect_sym("=")?;
                let value = self.expr()?;
                self.expect_sym(";")?;
                resets.push(Reset { target, value });
            }
            let weight = if self.eat_kw("weight") {
                let w = self.number()?;
                self.expect_sym(";")?;
                w
            } else {
                1.0
            };
            if !self.is_sym("}") {
                return self.fail(&["'guard'", "'emit'", "'receive'", "'reset'", "'weight'", "'}'"]);
            }
            self.bump();
            edges.push(Edge {
                source,
                target,
                guard,
                sync,
                resets,
                weight,
            });
        }
        if !self.is_sym("}") {
            return self.fail(&["'location'", "'edge'", "'}'"]);
        }
        self.bump();
        self.clock = None;
        let initial = match initial {
            Some(i) => i,
            None => {
                return Err(SyntaxError {
                    pos: init_pos,
                    expected: vec!["a location marked 'init'".into()],
                    found: format!("none in automaton '{}'", name),
                })
            }
        };
        Ok(HybridAutomaton {
            name,
            clock,
            locations,
            edges,
            initial,
        })
    }
}

/// Parses a standalone expression. Every identifier is a variable.
pub fn parse_expression(text: &str) -> Result<Expr, SyntaxError> {
    parse_expression_in(text, None)
}

/// Parses an expression in which `clock` (if given) names the local clock.
pub fn parse_expression_in(text: &str, clock: Option<&str>) -> Result<Expr, SyntaxError> {
    let mut p = Parser::new(text)?;
    p.clock = clock.map(str::to_string);
    let e = p.expr()?;
    p.expect_end()?;
    Ok(e)
}

/// Parses model text without semantic validation.
pub fn parse_model_unchecked(text: &str) -> Result<(NetworkModel, SourceMap), SyntaxError> {
    let mut spans = SourceMap::default();
    let mut p = Parser::new(text)?;
    let model = p.network(&mut spans)?;
    Ok((model, spans))
}

/// Parses and validates model text. Warnings do not fail the parse.
pub fn parse_model(text: &str) -> Result<NetworkModel, DslError> {
    let (model, spans) = parse_model_unchecked(text)?;
    let report = validate_network(&model);
    if report.has_errors() {
        let errors: Vec<Issue> = report.errors().cloned().collect();
        return Err(DslError::Semantic(spans.locate(&errors)));
    }
    Ok(model)
}

/// Like [`parse_model`] but over raw bytes, rejecting invalid UTF-8.
pub fn parse_model_bytes(bytes: &[u8]) -> Result<NetworkModel, DslError> {
    let text = std::str::from_utf8(bytes).map_err(|e| DslError::Encoding(e.valid_up_to()))?;
    parse_model(text)
}

/// Canonical text for a model; `parse_model(pretty_print(m)) == m`.
pub fn pretty_print(model: &NetworkModel) -> String {
    let mut out = String::new();
    let _ = write_model(&mut out, model);
    out
}

fn write_model(out: &mut String, model: &NetworkModel) -> fmt::Result {
    writeln!(out, "network {} {{", model.name)?;
    for v in &model.variables {
        match v.kind {
            VarKind::Const => write!(out, "  const {} = {}", v.name, v.init)?,
            VarKind::Var => write!(out, "  var {} init {}", v.name, v.init)?,
        }
        if let Some(unit) = &v.unit {
            write!(out, " unit \"{}\"", unit)?;
        }
        writeln!(out, ";")?;
    }
    for c in &model.channels {
        let urgent = if c.urgent { "urgent " } else { "" };
        writeln!(out, "  channel {}{};", urgent, c.name)?;
    }
    for aut in &model.automata {
        writeln!(out)?;
        writeln!(out, "  automaton {} {{", aut.name)?;
        let clock = aut.clock.as_deref().unwrap_or("clock");
        if let Some(c) = &aut.clock {
            writeln!(out, "    clock {};", c)?;
        }
        for loc in &aut.locations {
            let init = if loc.name == aut.initial { " init" } else { "" };
            let empty = loc.flows.is_empty()
                && loc.invariant.is_none()
                && loc.dwell == DwellPolicy::Eager;
            if empty {
                writeln!(out, "    location {}{} {{ }}", loc.name, init)?;
                continue;
            }
            writeln!(out, "    location {}{} {{", loc.name, init)?;
            for flow in &loc.flows {
                write!(out, "      d({}) = {}", flow.var, WithClock(&flow.rhs, clock))?;
                if let Some(gate) = &flow.gate {
                    write!(out, " while {}", WithClock(gate, clock))?;
                }
                writeln!(out, ";")?;
            }
            if let Some(inv) = &loc.invariant {
                writeln!(out, "      invariant {};", WithClock(inv, clock))?;
            }
            if let DwellPolicy::Exponential { rate } = loc.dwell {
                writeln!(out, "      dwell exponential({});", rate)?;
            }
            writeln!(out, "    }}")?;
        }
        for edge in &aut.edges {
            writeln!(out, "    edge {} -> {} {{", edge.source, edge.target)?;
            if let Some(g) = &edge.guard {
                writeln!(out, "      guard {};", WithClock(g, clock))?;
            }
            match &edge.sync {
                SyncLabel::None => {}
                SyncLabel::Emit(c) => writeln!(out, "      emit {};", c)?,
                SyncLabel::Receive(c) => writeln!(out, "      receive {};", c)?,
            }
            for r in &edge.resets {
                writeln!(out, "      reset {} = {};", r.target, WithClock(&r.value, clock))?;
            }
            if edge.weight != 1.0 {
                writeln!(out, "      weight {};", edge.weight)?;
            }
            writeln!(out, "    }}")?;
        }
        writeln!(out, "  }}")?;
    }
    writeln!(out, "}}")
}
