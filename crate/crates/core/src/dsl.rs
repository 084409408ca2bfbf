//! Textual component language: parser, printer and flattener.
//!
//! ```text
//! Component Name(param = default, ...) {
//!   Interface { Places: a, b; Transitions: c; }
//!   Behaviour {
//!     Places: B;  Transitions: A, C;
//!     Arcs: A -> B, B -> C * 2;
//!     Components: x = Sub(B.marking = 1'[token]), y = Sub();
//!     Links: fusion(x.A, y.C) as Start; split(x.B) as (In, Out);
//!            copy(x.C) as C2; split-copy(x.B) as (Req, Ret);
//!            impl(x.B, y.D, y.F); impl(a, b, c, d);
//!     Rename: x.B -> Busy;
//!     B.marking = 1'[token];
//!     A.time = exp(0.1);
//!     A.action = "z = a * x + y";
//!   }
//! }
//! ```
//!
//! Comments run from `//` or `#` to the end of the line. Flattened node
//! names are `instance.node`, nested as needed.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::composition::{CompositionError, MarkingRule, TimedNet};
use crate::net::NetError;
use crate::timing::{Family, Timing};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DslError {
    #[error("{pos}: syntax error: expected {expected}, found {found}")]
    SyntaxError { pos: Pos, expected: String, found: String },
    #[error("{pos}: unsupported feature: {feature}")]
    Unsupported { pos: Pos, feature: String },
    #[error("unresolved name `{name}` in component `{component}`")]
    UnresolvedName { component: String, name: String },
    #[error("`{op}` takes {expected} argument(s), got {got} (component `{component}`)")]
    ArityMismatch { component: String, op: String, expected: String, got: usize },
    #[error("duplicate definition of `{name}` in {scope}")]
    DuplicateDefinition { scope: String, name: String },
    #[error("cyclic instantiation: {}", .0.join(" -> "))]
    CyclicInstantiation(Vec<String>),
    #[error("component `{component}`: invalid value for `{attr}`: {reason}")]
    InvalidValue { component: String, attr: String, reason: String },
    #[error("component `{component}`: {source}")]
    Composition {
        component: String,
        #[source]
        source: CompositionError,
    },
}

impl DslError {
    /// `file:line:col: message` when a position is known.
    pub fn diagnostic(&self, file: &str) -> String {
        match self {
            DslError::SyntaxError { .. } | DslError::Unsupported { .. } => format!("{file}:{self}"),
            _ => format!("{file}: {self}"),
        }
    }
}

type Result<T> = std::result::Result<T, DslError>;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Str(String),
    Ident(String),
    /// `k'[token]`
    Marking(u32, String),
    Call(String, Vec<Value>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(x) => write!(f, "{x}"),
            Value::Str(s) => write!(f, "\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\"")),
            Value::Ident(s) => f.write_str(s),
            Value::Marking(k, tok) => write!(f, "{k}'[{tok}]"),
            Value::Call(name, args) => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkOp {
    Split,
    Fusion,
    Copy,
    SplitCopy,
    Impl,
}

impl LinkOp {
    fn keyword(self) -> &'static str {
        match self {
            LinkOp::Split => "split",
            LinkOp::Fusion => "fusion",
            LinkOp::Copy => "copy",
            LinkOp::SplitCopy => "split-copy",
            LinkOp::Impl => "impl",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub op: LinkOp,
    pub args: Vec<String>,
    pub results: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub from: String,
    pub to: String,
    pub weight: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assign {
    /// dotted target; the last segment is the attribute (or a parameter
    /// name when the target has one segment)
    pub target: Vec<String>,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: String,
    pub component: String,
    pub args: Vec<Assign>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub default: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Interface {
    pub places: Vec<String>,
    pub transitions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Behaviour {
    pub places: Vec<String>,
    pub transitions: Vec<String>,
    pub arcs: Vec<Arc>,
    pub components: Vec<Instance>,
    pub links: Vec<Link>,
    pub renames: Vec<(String, String)>,
    pub attributes: Vec<Assign>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub name: String,
    pub params: Vec<Param>,
    pub interface: Interface,
    pub behaviour: Behaviour,
}

impl Component {
    pub fn exports(&self, name: &str) -> bool {
        self.interface.places.iter().chain(&self.interface.transitions).any(|n| n == name)
    }
}

// ---------------------------------------------------------------- lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    Punct(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Number(x) => write!(f, "number {x}"),
            Tok::Str(_) => f.write_str("string"),
            Tok::Punct(p) => write!(f, "`{p}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

const PUNCT: [&str; 14] = ["->", "{", "}", "(", ")", ",", ";", ":", ".", "=", "'", "[", "]", "*"];

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
            while i < chars.len() && chars[i] != '\n' {
                let d = chars[i];
                advance(&mut i, &mut line, &mut col, d);
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() {
                let d = chars[i];
                let hyphen = d == '-' && chars.get(i + 1).is_some_and(|n| n.is_ascii_alphabetic());
                if d.is_ascii_alphanumeric() || d == '_' || hyphen {
                    s.push(d);
                    advance(&mut i, &mut line, &mut col, d);
                } else {
                    break;
                }
            }
            out.push((Tok::Ident(s), pos));
            continue;
        }
        if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let mut s = String::new();
            s.push(c);
            advance(&mut i, &mut line, &mut col, c);
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = (d == '-' || d == '+') && matches!(s.chars().last(), Some('e' | 'E'));
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    s.push(d);
                    advance(&mut i, &mut line, &mut col, d);
                } else {
                    break;
                }
            }
            let x: f64 = s.parse().map_err(|_| DslError::SyntaxError {
                pos,
                expected: "a number".into(),
                found: format!("`{s}`"),
            })?;
            out.push((Tok::Number(x), pos));
            continue;
        }
        if c == '"' {
            let mut s = String::new();
            advance(&mut i, &mut line, &mut col, c);
            loop {
                let Some(&d) = chars.get(i) else {
                    return Err(DslError::SyntaxError {
                        pos,
                        expected: "closing `\"`".into(),
                        found: "end of input".into(),
                    });
                };
                advance(&mut i, &mut line, &mut col, d);
                match d {
                    '"' => break,
                    '\\' => {
                        if let Some(&e) = chars.get(i) {
                            s.push(e);
                            advance(&mut i, &mut line, &mut col, e);
                        }
                    }
                    _ => s.push(d),
                }
            }
            out.push((Tok::Str(s), pos));
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let Some(p) = PUNCT.iter().find(|p| rest.starts_with(**p)) else {
            return Err(DslError::SyntaxError {
                pos,
                expected: "a token".into(),
                found: format!("`{c}`"),
            });
        };
        for _ in 0..p.len() {
            let d = chars[i];
            advance(&mut i, &mut line, &mut col, d);
        }
        out.push((Tok::Punct(p), pos));
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

// --------------------------------------------------------------- parser

struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn err<T>(&self, expected: &str) -> Result<T> {
        Err(DslError::SyntaxError {
            pos: self.pos(),
            expected: expected.into(),
            found: self.peek().to_string(),
        })
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn punct(&mut self, p: &str) -> Result<()> {
        if self.is_punct(p) {
            self.bump();
            Ok(())
        } else {
            self.err(&format!("`{p}`"))
        }
    }

    fn eat(&mut self, p: &str) -> bool {
        let hit = self.is_punct(p);
        if hit {
            self.bump();
        }
        hit
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek() {
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.err("an identifier"),
        }
    }

    fn path(&mut self) -> Result<Vec<String>> {
        let mut p = vec![self.ident()?];
        while self.eat(".") {
            p.push(self.ident()?);
        }
        Ok(p)
    }

    fn ident_list(&mut self) -> Result<Vec<String>> {
        let mut v = vec![self.ident()?];
        while self.eat(",") {
            v.push(self.ident()?);
        }
        Ok(v)
    }

    fn value(&mut self) -> Result<Value> {
        match self.peek().clone() {
            Tok::Number(x) => {
                self.bump();
                if self.eat("'") {
                    if x < 0.0 || x.fract() != 0.0 {
                        return self.err("a nonnegative integer multiplicity");
                    }
                    self.punct("[")?;
                    let tok = self.ident()?;
                    if self.is_punct("(") {
                        return Err(DslError::Unsupported {
                            pos: self.pos(),
                            feature: format!("object-net token `{tok}(...)`"),
                        });
                    }
                    self.punct("]")?;
                    return Ok(Value::Marking(x as u32, tok));
                }
                Ok(Value::Number(x))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Value::Str(s))
            }
            Tok::Ident(s) => {
                self.bump();
                if self.eat("(") {
                    let mut args = Vec::new();
                    if !self.is_punct(")") {
                        args.push(self.value()?);
                        while self.eat(",") {
                            args.push(self.value()?);
                        }
                    }
                    self.punct(")")?;
                    Ok(Value::Call(s, args))
                } else {
                    Ok(Value::Ident(s))
                }
            }
            _ => self.err("a value"),
        }
    }

    fn assign(&mut self) -> Result<Assign> {
        let target = self.path()?;
        self.punct("=")?;
        let value = self.value()?;
        Ok(Assign { target, value })
    }

    fn source(&mut self) -> Result<Vec<Component>> {
        let mut out = Vec::new();
        while *self.peek() != Tok::Eof {
            out.push(self.component()?);
        }
        Ok(out)
    }

    fn component(&mut self) -> Result<Component> {
        if !self.is_kw("Component") {
            return self.err("`Component`");
        }
        self.bump();
        let name = self.ident()?;
        let mut params = Vec::new();
        if self.eat("(") {
            if !self.is_punct(")") {
                loop {
                    let name = self.ident()?;
                    let default = if self.eat("=") { Some(self.value()?) } else { None };
                    params.push(Param { name, default });
                    if !self.eat(",") {
                        break;
                    }
                }
            }
            self.punct(")")?;
        }
        if self.is_kw("extends") || self.is_kw("inherits") || self.is_kw("Inherits") || self.is_punct(":") {
            return Err(DslError::Unsupported {
                pos: self.pos(),
                feature: "component inheritance".into(),
            });
        }
        self.punct("{")?;
        let mut c = Component {
            name,
            params,
            interface: Interface::default(),
            behaviour: Behaviour::default(),
        };
        while !self.eat("}") {
            match self.peek() {
                Tok::Ident(s) if s == "Interface" => {
                    self.bump();
                    self.punct("{")?;
                    while !self.eat("}") {
                        let (places, list) = self.node_section()?;
                        if places {
                            c.interface.places.extend(list);
                        } else {
                            c.interface.transitions.extend(list);
                        }
                    }
                }
                Tok::Ident(s) if s == "Behaviour" || s == "Behavior" => {
                    self.bump();
                    self.punct("{")?;
                    while !self.eat("}") {
                        self.behaviour_item(&mut c.behaviour)?;
                    }
                }
                Tok::Ident(s) if s == "Inherits" || s == "Inheritance" || s == "inherit" => {
                    return Err(DslError::Unsupported {
                        pos: self.pos(),
                        feature: "component inheritance".into(),
                    });
                }
                _ => return self.err("`Interface`, `Behaviour` or `}`"),
            }
        }
        Ok(c)
    }

    fn node_section(&mut self) -> Result<(bool, Vec<String>)> {
        let places = if self.is_kw("Places") {
            true
        } else if self.is_kw("Transitions") {
            false
        } else {
            return self.err("`Places` or `Transitions`");
        };
        self.bump();
        self.punct(":")?;
        let list = self.ident_list()?;
        self.punct(";")?;
        Ok((places, list))
    }

    fn behaviour_item(&mut self, b: &mut Behaviour) -> Result<()> {
        let Tok::Ident(kw) = self.peek().clone() else {
            return self.err("a behaviour section or attribute");
        };
        match kw.as_str() {
            "Places" | "Transitions" => {
                let (places, list) = self.node_section()?;
                if places {
                    b.places.extend(list);
                } else {
                    b.transitions.extend(list);
                }
            }
            "Arcs" => {
                self.bump();
                self.punct(":")?;
                loop {
                    let from = self.ident()?;
                    self.punct("->")?;
                    let to = self.ident()?;
                    let weight = if self.eat("*") {
                        match self.bump() {
                            Tok::Number(w) if w >= 1.0 && w.fract() == 0.0 => w as u32,
                            _ => {
                                self.i -= 1;
                                return self.err("a positive integer arc weight");
                            }
                        }
                    } else {
                        1
                    };
                    b.arcs.push(Arc { from, to, weight });
                    if !self.eat(",") {
                        break;
                    }
                }
                self.punct(";")?;
            }
            "Components" => {
                self.bump();
                self.punct(":")?;
                loop {
                    let name = self.ident()?;
                    self.punct("=")?;
                    let component = self.ident()?;
                    let mut args = Vec::new();
                    if self.eat("(") {
                        if !self.is_punct(")") {
                            args.push(self.assign()?);
                            while self.eat(",") {
                                args.push(self.assign()?);
                            }
                        }
                        self.punct(")")?;
                    }
                    b.components.push(Instance { name, component, args });
                    if !self.eat(",") {
                        break;
                    }
                }
                self.punct(";")?;
            }
            "Links" => {
                self.bump();
                self.punct(":")?;
                while !self.is_section_start() && !self.is_punct("}") {
                    b.links.push(self.link()?);
                }
            }
            "Rename" => {
                self.bump();
                self.punct(":")?;
                loop {
                    let from = self.path()?.join(".");
                    self.punct("->")?;
                    let to = self.ident()?;
                    b.renames.push((from, to));
                    if !self.eat(",") {
                        break;
                    }
                }
                self.punct(";")?;
            }
            _ => {
                let a = self.assign()?;
                if a.target.len() < 2 {
                    self.i -= 1;
                    return self.err("an attribute assignment `node.attr = value`");
                }
                self.punct(";")?;
                b.attributes.push(a);
            }
        }
        Ok(())
    }

    fn is_section_start(&self) -> bool {
        ["Places", "Transitions", "Arcs", "Components", "Links", "Rename"]
            .iter()
            .any(|k| self.is_kw(k))
            || self.is_attribute_start()
    }

    fn is_attribute_start(&self) -> bool {
        // `name . attr =` rather than a link operator call
        matches!(self.peek(), Tok::Ident(_))
            && matches!(self.toks.get(self.i + 1), Some((Tok::Punct("."), _)))
    }

    fn link(&mut self) -> Result<Link> {
        let pos = self.pos();
        let kw = self.ident()?;
        let op = match kw.as_str() {
            "split" => LinkOp::Split,
            "fusion" => LinkOp::Fusion,
            "copy" => LinkOp::Copy,
            "split-copy" => LinkOp::SplitCopy,
            "impl" => LinkOp::Impl,
            _ => {
                return Err(DslError::SyntaxError {
                    pos,
                    expected: "a link operator (split, fusion, copy, split-copy, impl)".into(),
                    found: format!("`{kw}`"),
                })
            }
        };
        self.punct("(")?;
        let mut args = vec![self.path()?.join(".")];
        while self.eat(",") {
            args.push(self.path()?.join("."));
        }
        self.punct(")")?;
        let mut results = Vec::new();
        if self.is_kw("as") {
            self.bump();
            if self.eat("(") {
                results = self.ident_list()?;
                self.punct(")")?;
            } else {
                results.push(self.ident()?);
            }
        }
        self.punct(";")?;
        Ok(Link { op, args, results })
    }
}

/// Parses a source text into its components.
pub fn parse(source: &str) -> Result<Vec<Component>> {
    let mut p = Parser { toks: lex(source)?, i: 0 };
    let comps = p.source()?;
    let mut seen = HashSet::new();
    for c in &comps {
        if !seen.insert(c.name.clone()) {
            return Err(DslError::DuplicateDefinition {
                scope: "source".into(),
                name: c.name.clone(),
            });
        }
        check_component(c)?;
    }
    Ok(comps)
}

fn check_component(c: &Component) -> Result<()> {
    let scope = format!("component `{}`", c.name);
    let dup = |name: &str| DslError::DuplicateDefinition {
        scope: scope.clone(),
        name: name.to_string(),
    };
    let mut nodes = HashSet::new();
    for n in c.behaviour.places.iter().chain(&c.behaviour.transitions) {
        if !nodes.insert(n.as_str()) {
            return Err(dup(n));
        }
    }
    let mut inst = HashSet::new();
    for i in &c.behaviour.components {
        if !inst.insert(i.name.as_str()) || nodes.contains(i.name.as_str()) {
            return Err(dup(&i.name));
        }
    }
    let mut params = HashSet::new();
    for p in &c.params {
        if !params.insert(p.name.as_str()) {
            return Err(dup(&p.name));
        }
    }
    for a in &c.behaviour.arcs {
        let (fp, ft) = (c.behaviour.places.contains(&a.from), c.behaviour.transitions.contains(&a.from));
        let (tp, tt) = (c.behaviour.places.contains(&a.to), c.behaviour.transitions.contains(&a.to));
        for (name, known) in [(&a.from, fp || ft), (&a.to, tp || tt)] {
            if !known {
                return Err(DslError::UnresolvedName {
                    component: c.name.clone(),
                    name: name.clone(),
                });
            }
        }
        if fp == tp {
            return Err(DslError::InvalidValue {
                component: c.name.clone(),
                attr: format!("{} -> {}", a.from, a.to),
                reason: "arcs must connect a place and a transition".into(),
            });
        }
    }
    for l in &c.behaviour.links {
        let (ok, expected) = match l.op {
            LinkOp::Fusion => (l.args.len() >= 2, "at least 2"),
            LinkOp::Split | LinkOp::Copy | LinkOp::SplitCopy => (l.args.len() == 1, "1"),
            LinkOp::Impl => (l.args.len() == 3 || l.args.len() == 4, "3 or 4"),
        };
        if !ok {
            return Err(DslError::ArityMismatch {
                component: c.name.clone(),
                op: l.op.keyword().into(),
                expected: expected.into(),
                got: l.args.len(),
            });
        }
        let (ok, expected) = match l.op {
            LinkOp::Fusion | LinkOp::Copy => (l.results.len() == 1, "1 result name"),
            LinkOp::Split | LinkOp::SplitCopy => (l.results.len() == 2, "2 result names"),
            LinkOp::Impl => (l.results.is_empty(), "no result names"),
        };
        if !ok {
            return Err(DslError::ArityMismatch {
                component: c.name.clone(),
                op: format!("{} ... as", l.op.keyword()),
                expected: expected.into(),
                got: l.results.len(),
            });
        }
    }
    Ok(())
}

// -------------------------------------------------------------- printer

fn write_list(out: &mut String, indent: &str, kw: &str, items: &[String]) {
    if !items.is_empty() {
        let _ = writeln!(out, "{indent}{kw}: {};", items.join(", "));
    }
}

/// Canonical text; `parse(&print(c)) == c`.
pub fn print(components: &[Component]) -> String {
    let mut out = String::new();
    for (k, c) in components.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        let _ = write!(out, "Component {}", c.name);
        if !c.params.is_empty() {
            let ps: Vec<String> = c
                .params
                .iter()
                .map(|p| match &p.default {
                    Some(v) => format!("{} = {v}", p.name),
                    None => p.name.clone(),
                })
                .collect();
            let _ = write!(out, "({})", ps.join(", "));
        }
        out.push_str(" {\n  Interface {\n");
        write_list(&mut out, "    ", "Places", &c.interface.places);
        write_list(&mut out, "    ", "Transitions", &c.interface.transitions);
        out.push_str("  }\n  Behaviour {\n");
        let b = &c.behaviour;
        write_list(&mut out, "    ", "Places", &b.places);
        write_list(&mut out, "    ", "Transitions", &b.transitions);
        if !b.arcs.is_empty() {
            let arcs: Vec<String> = b
                .arcs
                .iter()
                .map(|a| {
                    if a.weight == 1 {
                        format!("{} -> {}", a.from, a.to)
                    } else {
                        format!("{} -> {} * {}", a.from, a.to, a.weight)
                    }
                })
                .collect();
            let _ = writeln!(out, "    Arcs: {};", arcs.join(", "));
        }
        if !b.components.is_empty() {
            let insts: Vec<String> = b
                .components
                .iter()
                .map(|i| {
                    let args: Vec<String> = i.args.iter().map(|a| format!("{} = {}", a.target.join("."), a.value)).collect();
                    format!("{} = {}({})", i.name, i.component, args.join(", "))
                })
                .collect();
            let _ = writeln!(out, "    Components: {};", insts.join(",\n      "));
        }
        if !b.links.is_empty() {
            out.push_str("    Links:\n");
            for l in &b.links {
                let _ = write!(out, "      {}({})", l.op.keyword(), l.args.join(", "));
                match l.results.len() {
                    0 => {}
                    1 => {
                        let _ = write!(out, " as {}", l.results[0]);
                    }
                    _ => {
                        let _ = write!(out, " as ({})", l.results.join(", "));
                    }
                }
                out.push_str(";\n");
            }
        }
        if !b.renames.is_empty() {
            let rs: Vec<String> = b.renames.iter().map(|(a, b)| format!("{a} -> {b}")).collect();
            let _ = writeln!(out, "    Rename: {};", rs.join(", "));
        }
        for a in &b.attributes {
            let _ = writeln!(out, "    {} = {};", a.target.join("."), a.value);
        }
        out.push_str("  }\n}\n");
    }
    out
}

// ------------------------------------------------------------- flatten

struct Flattener<'a> {
    defs: HashMap<&'a str, &'a Component>,
    stack: Vec<String>,
}

fn resolve(value: &Value, scope: &BTreeMap<String, Value>) -> Value {
    match value {
        Value::Ident(s) => scope.get(s).cloned().unwrap_or_else(|| value.clone()),
        Value::Call(f, args) => Value::Call(f.clone(), args.iter().map(|a| resolve(a, scope)).collect()),
        other => other.clone(),
    }
}

fn number(v: &Value, component: &str, attr: &str) -> Result<f64> {
    match v {
        Value::Number(x) => Ok(*x),
        other => Err(DslError::InvalidValue {
            component: component.into(),
            attr: attr.into(),
            reason: format!("expected a number, got `{other}`"),
        }),
    }
}

/// Interprets a `time` attribute: a bare number is a deterministic delay.
pub fn timing_value(v: &Value, component: &str, attr: &str) -> Result<Timing> {
    let bad = |reason: String| DslError::InvalidValue {
        component: component.into(),
        attr: attr.into(),
        reason,
    };
    let t = match v {
        Value::Number(d) => Timing::Deterministic { delay: *d },
        Value::Call(f, args) => {
            let nums: Vec<f64> = args.iter().map(|a| number(a, component, attr)).collect::<Result<_>>()?;
            let want = |k: usize| {
                if nums.len() == k {
                    Ok(())
                } else {
                    Err(bad(format!("`{f}` takes {k} argument(s)")))
                }
            };
            match f.as_str() {
                "det" | "deterministic" => {
                    want(1)?;
                    Timing::Deterministic { delay: nums[0] }
                }
                "imm" | "immediate" => {
                    want(1)?;
                    Timing::Immediate { weight: nums[0] }
                }
                "exp" | "exponential" => {
                    want(1)?;
                    Timing::exponential(nums[0])
                }
                other => {
                    let family: Family = other.parse().map_err(bad)?;
                    want(2)?;
                    Timing::with_cov(family, nums[0], nums[1])
                }
            }
        }
        other => return Err(bad(format!("cannot interpret `{other}` as a timing"))),
    };
    t.validate(attr).map_err(|e| bad(e.to_string()))?;
    Ok(t)
}

fn marking_value(v: &Value, component: &str, attr: &str) -> Result<u32> {
    let bad = |reason: String| DslError::InvalidValue {
        component: component.into(),
        attr: attr.into(),
        reason,
    };
    match v {
        Value::Number(x) if *x >= 0.0 && x.fract() == 0.0 => Ok(*x as u32),
        Value::Marking(k, tok) if tok == "token" => Ok(*k),
        Value::Marking(_, tok) => Err(bad(format!("only black tokens are supported, got `{tok}`"))),
        other => Err(bad(format!("expected a marking, got `{other}`"))),
    }
}

impl<'a> Flattener<'a> {
    fn comp_err(component: &str) -> impl Fn(CompositionError) -> DslError + '_ {
        move |source| match source {
            CompositionError::Net(NetError::UnknownNode(name)) => DslError::UnresolvedName {
                component: component.into(),
                name,
            },
            CompositionError::Net(NetError::Duplicate { name, .. }) => DslError::DuplicateDefinition {
                scope: format!("component `{component}`"),
                name,
            },
            source => DslError::Composition {
                component: component.into(),
                source,
            },
        }
    }

    fn apply_attribute(&self, net: &mut TimedNet, c: &Component, node: &str, attr: &str, value: &Value) -> Result<()> {
        let err = Self::comp_err(&c.name);
        let label = format!("{node}.{attr}");
        match attr {
            "marking" | "m0" => {
                let p = net.net.place(node).map_err(|e| err(e.into()))?;
                net.net.set_initial_tokens(p, marking_value(value, &c.name, &label)?);
            }
            "time" => {
                net.net.transition(node).map_err(|e| err(e.into()))?;
                net.timing.set(node, timing_value(value, &c.name, &label)?);
            }
            "action" | "label" => {
                let text = match value {
                    Value::Str(s) => s.clone(),
                    other => other.to_string(),
                };
                net.net.set_label(node, text).map_err(|e| err(e.into()))?;
            }
            // opaque annotations
            _ => {
                net.net.node(node).map_err(|e| err(e.into()))?;
            }
        }
        Ok(())
    }

    fn check_export(&self, c: &Component, path: &str) -> Result<()> {
        let Some((inst, rest)) = path.split_once('.') else {
            return Ok(());
        };
        let Some(i) = c.behaviour.components.iter().find(|i| i.name == inst) else {
            return Ok(());
        };
        let sub = self.defs[i.component.as_str()];
        if !sub.exports(rest) {
            return Err(DslError::UnresolvedName {
                component: c.name.clone(),
                name: format!("{path} (not in the interface of `{}`)", sub.name),
            });
        }
        Ok(())
    }

    fn flatten(&mut self, name: &str, bindings: &BTreeMap<String, Value>) -> Result<TimedNet> {
        let c = *self.defs.get(name).ok_or_else(|| DslError::UnresolvedName {
            component: self.stack.last().cloned().unwrap_or_default(),
            name: name.to_string(),
        })?;
        if self.stack.iter().any(|s| s == name) {
            let mut cycle = self.stack.clone();
            cycle.push(name.to_string());
            return Err(DslError::CyclicInstantiation(cycle));
        }
        self.stack.push(name.to_string());
        let mut scope = BTreeMap::new();
        for p in &c.params {
            match bindings.get(&p.name).or(p.default.as_ref()) {
                Some(v) => {
                    scope.insert(p.name.clone(), v.clone());
                }
                None => {
                    return Err(DslError::InvalidValue {
                        component: c.name.clone(),
                        attr: p.name.clone(),
                        reason: "parameter has no value".into(),
                    })
                }
            }
        }
        for k in bindings.keys() {
            if !c.params.iter().any(|p| &p.name == k) {
                return Err(DslError::UnresolvedName {
                    component: c.name.clone(),
                    name: k.clone(),
                });
            }
        }
        let err = Self::comp_err(&c.name);
        let b = &c.behaviour;
        let mut net = TimedNet::new();
        for p in &b.places {
            net.net.add_place(p, 0).map_err(|e| err(e.into()))?;
        }
        for t in &b.transitions {
            net.net.add_transition(t).map_err(|e| err(e.into()))?;
        }
        for a in &b.arcs {
            if b.places.contains(&a.from) {
                net.net.add_input_arc(&a.from, &a.to, a.weight)
            } else {
                net.net.add_output_arc(&a.from, &a.to, a.weight)
            }
            .map_err(|e| err(e.into()))?;
        }
        for inst in &b.components {
            let sub = *self.defs.get(inst.component.as_str()).ok_or_else(|| DslError::UnresolvedName {
                component: c.name.clone(),
                name: inst.component.clone(),
            })?;
            let mut sub_bindings = BTreeMap::new();
            let mut overrides = Vec::new();
            for a in &inst.args {
                let v = resolve(&a.value, &scope);
                if a.target.len() == 1 {
                    sub_bindings.insert(a.target[0].clone(), v);
                } else {
                    overrides.push((a.target.clone(), v));
                }
            }
            let mut part = self.flatten(&sub.name, &sub_bindings)?;
            for (target, v) in overrides {
                let (attr, node) = target.split_last().expect("two segments");
                self.apply_attribute(&mut part, sub, &node.join("."), attr, &v)?;
            }
            net.merge(&part, Some(&inst.name)).map_err(&err)?;
        }
        for l in &b.links {
            for a in &l.args {
                self.check_export(c, a)?;
            }
            let args: Vec<&str> = l.args.iter().map(String::as_str).collect();
            match l.op {
                LinkOp::Fusion => net.fuse_all(&args, &l.results[0], MarkingRule::Max),
                LinkOp::Split => net.split_node(args[0], &l.results[0], &l.results[1]),
                LinkOp::Copy => net.copy_node(args[0], &l.results[0]),
                LinkOp::SplitCopy => net.split_copy(args[0], &l.results[0], &l.results[1]),
                LinkOp::Impl if args.len() == 3 => net.impl_places(args[0], args[1], args[2]),
                LinkOp::Impl => net.impl_pairs(args[0], args[1], args[2], args[3]),
            }
            .map_err(&err)?;
        }
        for (from, to) in &b.renames {
            net.rename(from, to).map_err(&err)?;
        }
        for a in &b.attributes {
            let (attr, node) = a.target.split_last().expect("two segments");
            let v = resolve(&a.value, &scope);
            self.apply_attribute(&mut net, c, &node.join("."), attr, &v)?;
        }
        for n in c.interface.places.iter() {
            net.net.place(n).map_err(|e| err(e.into()))?;
        }
        for n in c.interface.transitions.iter() {
            net.net.transition(n).map_err(|e| err(e.into()))?;
        }
        self.stack.pop();
        Ok(net)
    }
}

/// Instantiates `root` with constructor `bindings` and flattens the
/// hierarchy into one timed net.
pub fn flatten(components: &[Component], root: &str, bindings: &BTreeMap<String, Value>) -> Result<TimedNet> {
    let mut f = Flattener {
        defs: components.iter().map(|c| (c.name.as_str(), c)).collect(),
        stack: Vec::new(),
    };
    f.flatten(root, bindings)
}

/// Parses and flattens; the root defaults to the last component.
pub fn load(source: &str, root: Option<&str>) -> Result<TimedNet> {
    let comps = parse(source)?;
    let root = match root {
        Some(r) => r.to_string(),
        None => comps
            .last()
            .map(|c| c.name.clone())
            .ok_or_else(|| DslError::UnresolvedName {
                component: String::new(),
                name: "<root component>".into(),
            })?,
    };
    flatten(&comps, &root, &BTreeMap::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BC: &str = r#"
        // basic components
        Component BC1 {
          Interface { Transitions: A, C; }
          Behaviour {
            Places: B;
            Transitions: A, C;
            Arcs: A -> B, B -> C;
            B.type = token;
          }
        }
        Component BC2(t = 1) {
          Interface { Places: D, F; }
          Behaviour {
            Places: D, F;
            Transitions: E;
            Arcs: D -> E, E -> F;
            E.time = t;
          }
        }
    "#;

    #[test]
    fn parses_basic_components() {
        let c = parse(BC).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].interface.transitions, vec!["A", "C"]);
        assert_eq!(c[0].behaviour.places, vec!["B"]);
        assert_eq!(c[1].params[0].default, Some(Value::Number(1.0)));
    }

    #[test]
    fn empty_source() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("  // nothing\n").unwrap().is_empty());
    }

    #[test]
    fn round_trip() {
        let c = parse(BC).unwrap();
        assert_eq!(parse(&print(&c)).unwrap(), c);
    }

    #[test]
    fn syntax_error_has_position() {
        let e = parse("Component X {\n  Interface { Places A; }\n}").unwrap_err();
        match e {
            DslError::SyntaxError { pos, .. } => assert_eq!(pos, Pos { line: 2, col: 22 }),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inheritance_is_rejected() {
        let e = parse("Component DataOp extends Op { }").unwrap_err();
        assert!(matches!(e, DslError::Unsupported { .. }), "{e:?}");
    }

    #[test]
    fn object_tokens_are_rejected() {
        let e = parse("Component X { Behaviour { Places: P; P.marking = 3'[PU(1.0, 0.5)]; } }").unwrap_err();
        assert!(matches!(e, DslError::Unsupported { .. }), "{e:?}");
    }

    #[test]
    fn arity_checked() {
        let src = format!("{BC} Component Y {{ Behaviour {{ Components: a = BC1(); Links: fusion(a.A) as Z; }} }}");
        assert!(matches!(parse(&src), Err(DslError::ArityMismatch { .. })));
        let src = format!("{BC} Component Y {{ Behaviour {{ Components: a = BC1(); Links: impl(a.A, a.C); }} }}");
        assert!(matches!(parse(&src), Err(DslError::ArityMismatch { .. })));
    }

    #[test]
    fn duplicates_detected() {
        assert!(matches!(
            parse("Component X { } Component X { }"),
            Err(DslError::DuplicateDefinition { .. })
        ));
        assert!(matches!(
            parse("Component X { Behaviour { Places: P, P; } }"),
            Err(DslError::DuplicateDefinition { .. })
        ));
    }

    #[test]
    fn cyclic_instantiation() {
        let src = "Component A { Behaviour { Components: b = B(); } } Component B { Behaviour { Components: a = A(); } }";
        let comps = parse(src).unwrap();
        assert!(matches!(
            flatten(&comps, "A", &BTreeMap::new()),
            Err(DslError::CyclicInstantiation(_))
        ));
    }

    #[test]
    fn flatten_computational_process() {
        let src = format!(
            "{BC}
            Component Op {{
              Interface {{ Places: Idle; Transitions: InputDataStream, OutputDataStream; }}
              Behaviour {{
                Components: op = BC1(), res = BC1(B.marking = 1'[token]);
                Links:
                  fusion(op.A, res.C) as InputDataStream;
                  fusion(op.C, res.A) as OutputDataStream;
                Rename: res.B -> Idle, op.B -> Operation1;
              }}
            }}"
        );
        let net = load(&src, Some("Op")).unwrap().net;
        let cp = crate::composition::make_cp(1, 1, &[]).unwrap().net;
        assert_eq!(net.num_places(), cp.num_places());
        assert_eq!(net.num_transitions(), cp.num_transitions());
        for t in cp.transitions() {
            let (a, b) = (net.transition(t).unwrap(), cp.transition(t).unwrap());
            for p in cp.places() {
                let (pa, pb) = (net.place(p).unwrap(), cp.place(p).unwrap());
                assert_eq!(net.pre(pa, a), cp.pre(pb, b));
                assert_eq!(net.post(pa, a), cp.post(pb, b));
                assert_eq!(net.m0(pa), cp.m0(pb));
            }
        }
    }

    #[test]
    fn unexported_node_is_unresolved() {
        let src = format!("{BC} Component Y {{ Behaviour {{ Components: a = BC1(), b = BC1(); Links: fusion(a.B, b.B) as Q; }} }}");
        let comps = parse(&src).unwrap();
        assert!(matches!(
            flatten(&comps, "Y", &BTreeMap::new()),
            Err(DslError::UnresolvedName { .. })
        ));
    }

    #[test]
    fn timing_values() {
        assert_eq!(timing_value(&Value::Number(2.0), "c", "t").unwrap(), Timing::Deterministic { delay: 2.0 });
        assert_eq!(
            timing_value(&Value::Call("exp".into(), vec![Value::Number(0.1)]), "c", "t").unwrap(),
            Timing::exponential(0.1)
        );
        assert!(timing_value(&Value::Call("uniform".into(), vec![Value::Number(1.0), Value::Number(0.9)]), "c", "t").is_err());
        assert!(timing_value(&Value::Str("x".into()), "c", "t").is_err());
    }

    #[test]
    fn parameter_binding() {
        let comps = parse(BC).unwrap();
        let mut b = BTreeMap::new();
        b.insert("t".to_string(), Value::Call("exp".into(), vec![Value::Number(0.5)]));
        let net = flatten(&comps, "BC2", &b).unwrap();
        assert_eq!(net.timing.get("E"), Timing::exponential(0.5));
        b.insert("zzz".to_string(), Value::Number(1.0));
        assert!(flatten(&comps, "BC2", &b).is_err());
    }
}
