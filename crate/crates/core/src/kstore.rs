//! Time-indexed triple store used as the episodic memory of the pipeline.
//!
//! Every assertion is a `subject predicate object` triple annotated with the
//! interval in which it holds. Queries match any subset of bound positions and
//! keep only triples whose interval overlaps the requested window. Results are
//! always sorted by rendered form so downstream text generation is
//! reproducible.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed set of vocabulary prefixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Namespace {
    Dul,
    Ocra,
    Rdf,
    App,
}

impl Namespace {
    pub fn as_str(self) -> &'static str {
        match self {
            Namespace::Dul => "dul",
            Namespace::Ocra => "ocra",
            Namespace::Rdf => "rdf",
            Namespace::App => "app",
        }
    }
}

impl FromStr for Namespace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dul" => Ok(Namespace::Dul),
            "ocra" => Ok(Namespace::Ocra),
            "rdf" => Ok(Namespace::Rdf),
            "app" => Ok(Namespace::App),
            other => Err(Error::MalformedTerm(format!("unknown namespace `{other}`"))),
        }
    }
}

/// A namespaced entity, rendered as `namespace:local`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Term {
    pub namespace: Namespace,
    pub local: String,
}

impl Term {
    pub fn new(namespace: Namespace, local: impl Into<String>) -> Result<Self> {
        let local = local.into();
        if local.is_empty() {
            return Err(Error::MalformedTerm("empty local name".into()));
        }
        if local.chars().any(|c| c.is_whitespace() || c == ':') {
            return Err(Error::MalformedTerm(format!(
                "local name `{local}` contains whitespace or ':'"
            )));
        }
        Ok(Term { namespace, local })
    }

    pub fn dul(local: &str) -> Self {
        Term::new(Namespace::Dul, local).expect("static vocabulary term")
    }

    pub fn ocra(local: &str) -> Self {
        Term::new(Namespace::Ocra, local).expect("static vocabulary term")
    }

    pub fn rdf(local: &str) -> Self {
        Term::new(Namespace::Rdf, local).expect("static vocabulary term")
    }

    pub fn app(local: impl Into<String>) -> Result<Self> {
        Term::new(Namespace::App, local)
    }

    pub fn rendered(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.namespace.as_str(), self.local)
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (ns, local) = s
            .split_once(':')
            .ok_or_else(|| Error::MalformedTerm(format!("`{s}` is not namespace:local")))?;
        Term::new(ns.parse()?, local)
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Term {
    fn cmp(&self, other: &Self) -> Ordering {
        self.namespace
            .as_str()
            .cmp(other.namespace.as_str())
            .then_with(|| self.local.cmp(&other.local))
    }
}

/// Numeric or textual literal. Floats remember how many decimals to render
/// with so that `28.20` survives a round trip as `28.20`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Literal {
    Integer(i64),
    Float { value: f64, decimals: u8 },
    Text(String),
}

impl Literal {
    pub fn float(value: f64, decimals: u8) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::MalformedTerm(format!("non-finite literal {value}")));
        }
        Ok(Literal::Float { value, decimals })
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Literal::Integer(i) => Some(*i as f64),
            Literal::Float { value, .. } => Some(*value),
            Literal::Text(_) => None,
        }
    }

    /// The lexical form, without quotes or type marker.
    pub fn lexical(&self) -> String {
        match self {
            Literal::Integer(i) => i.to_string(),
            Literal::Float { value, decimals } => format!("{:.*}", *decimals as usize, value),
            Literal::Text(s) => s.clone(),
        }
    }

    fn sort_key(&self) -> String {
        self.to_string()
    }
}

impl PartialEq for Literal {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

impl Eq for Literal {}

impl std::hash::Hash for Literal {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.to_string().hash(state)
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Integer(i) => write!(f, "\"{i}\"^^int"),
            Literal::Float { .. } => write!(f, "\"{}\"^^float", self.lexical()),
            Literal::Text(s) => write!(f, "\"{}\"", escape(s)),
        }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Object {
    Term(Term),
    Literal(Literal),
}

impl Object {
    pub fn as_term(&self) -> Option<&Term> {
        match self {
            Object::Term(t) => Some(t),
            Object::Literal(_) => None,
        }
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            Object::Literal(l) => Some(l),
            Object::Term(_) => None,
        }
    }
}

impl From<Term> for Object {
    fn from(t: Term) -> Self {
        Object::Term(t)
    }
}

impl From<Literal> for Object {
    fn from(l: Literal) -> Self {
        Object::Literal(l)
    }
}

impl fmt::Display for Object {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Object::Term(t) => t.fmt(f),
            Object::Literal(l) => l.fmt(f),
        }
    }
}

impl PartialOrd for Object {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Object {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Object::Term(a), Object::Term(b)) => a.cmp(b),
            (Object::Literal(a), Object::Literal(b)) => a.sort_key().cmp(&b.sort_key()),
            (Object::Term(a), Object::Literal(b)) => a.to_string().cmp(&b.sort_key()),
            (Object::Literal(a), Object::Term(b)) => a.sort_key().cmp(&b.to_string()),
        }
    }
}

/// Validity interval; `None` on either side means unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct TimeInterval {
    pub start: Option<f64>,
    pub end: Option<f64>,
}

impl TimeInterval {
    pub const ALWAYS: TimeInterval = TimeInterval { start: None, end: None };

    pub fn new(start: Option<f64>, end: Option<f64>) -> Result<Self> {
        for v in [start, end].into_iter().flatten() {
            if !v.is_finite() {
                return Err(Error::InvalidInterval(format!("non-finite bound {v}")));
            }
        }
        if let (Some(s), Some(e)) = (start, end) {
            if s > e {
                return Err(Error::InvalidInterval(format!("start {s} after end {e}")));
            }
        }
        Ok(TimeInterval { start, end })
    }

    pub fn bounded(start: f64, end: f64) -> Result<Self> {
        TimeInterval::new(Some(start), Some(end))
    }

    /// Inclusive overlap; unbounded ends overlap everything on that side.
    pub fn overlaps(&self, other: &TimeInterval) -> bool {
        let starts_before_other_ends = match (self.start, other.end) {
            (Some(s), Some(e)) => s <= e,
            _ => true,
        };
        let other_starts_before_self_ends = match (other.start, self.end) {
            (Some(s), Some(e)) => s <= e,
            _ => true,
        };
        starts_before_other_ends && other_starts_before_self_ends
    }

    /// Intersection used for inferred triples. Disjoint premises yield `None`.
    pub fn intersect(&self, other: &TimeInterval) -> Option<TimeInterval> {
        let start = match (self.start, other.start) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        let end = match (self.end, other.end) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        TimeInterval::new(start, end).ok()
    }

    fn key(&self) -> (u8, u64, u8, u64) {
        // Unbounded start sorts first, unbounded end sorts last.
        let s = self.start.map_or((0, 0), |v| (1, ordered_bits(v)));
        let e = self.end.map_or((1, 0), |v| (0, ordered_bits(v)));
        (s.0, s.1, e.0, e.1)
    }
}

impl Eq for TimeInterval {}

impl std::hash::Hash for TimeInterval {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.key().hash(state)
    }
}

impl PartialOrd for TimeInterval {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TimeInterval {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

fn ordered_bits(v: f64) -> u64 {
    let bits = (v + 0.0).to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

fn fmt_bound(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: Term,
    pub predicate: Term,
    pub object: Object,
    pub holds: TimeInterval,
}

impl Triple {
    pub fn new(subject: Term, predicate: Term, object: impl Into<Object>, holds: TimeInterval) -> Self {
        Triple {
            subject,
            predicate,
            object: object.into(),
            holds,
        }
    }

    /// Triple holding over the unbounded interval.
    pub fn always(subject: Term, predicate: Term, object: impl Into<Object>) -> Self {
        Triple::new(subject, predicate, object, TimeInterval::ALWAYS)
    }

    pub fn involves(&self, e: &Term) -> bool {
        &self.subject == e || self.object.as_term() == Some(e)
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} .",
            self.subject,
            self.predicate,
            self.object,
            fmt_bound(self.holds.start),
            fmt_bound(self.holds.end)
        )
    }
}

/// Query pattern; `None` positions are wildcards.
#[derive(Debug, Clone, Default)]
pub struct Pattern {
    pub subject: Option<Term>,
    pub predicate: Option<Term>,
    pub object: Option<Object>,
}

impl Pattern {
    pub fn any() -> Self {
        Pattern::default()
    }

    pub fn s(mut self, t: Term) -> Self {
        self.subject = Some(t);
        self
    }

    pub fn p(mut self, t: Term) -> Self {
        self.predicate = Some(t);
        self
    }

    pub fn o(mut self, o: impl Into<Object>) -> Self {
        self.object = Some(o.into());
        self
    }

    pub fn matches(&self, t: &Triple) -> bool {
        self.subject.as_ref().is_none_or(|s| s == &t.subject)
            && self.predicate.as_ref().is_none_or(|p| p == &t.predicate)
            && self.object.as_ref().is_none_or(|o| o == &t.object)
    }
}

type Id = usize;

/// In-memory triple store with subject, predicate and object indices.
///
/// Concurrency is left to the caller: wrap in a `RwLock` to get the
/// many-readers/one-writer behaviour the pipeline relies on.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    triples: Vec<Triple>,
    ids: BTreeMap<Triple, Id>,
    by_subject: BTreeMap<Term, BTreeSet<Id>>,
    by_predicate: BTreeMap<Term, BTreeSet<Id>>,
    by_object: BTreeMap<Object, BTreeSet<Id>>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Inserts `t`. Returns `true` when the store grew.
    pub fn assert_triple(&mut self, t: Triple) -> Result<bool> {
        for term in [&t.subject, &t.predicate]
            .into_iter()
            .chain(t.object.as_term())
        {
            if term.local.is_empty() {
                return Err(Error::MalformedTerm("empty local name".into()));
            }
        }
        if let Some(Literal::Float { value, .. }) = t.object.as_literal() {
            if !value.is_finite() {
                return Err(Error::MalformedTerm(format!("non-finite literal {value}")));
            }
        }
        if self.ids.contains_key(&t) {
            return Ok(false);
        }
        let id = self.triples.len();
        self.by_subject.entry(t.subject.clone()).or_default().insert(id);
        self.by_predicate.entry(t.predicate.clone()).or_default().insert(id);
        self.by_object.entry(t.object.clone()).or_default().insert(id);
        self.ids.insert(t.clone(), id);
        self.triples.push(t);
        Ok(true)
    }

    pub fn query(&self, pattern: &Pattern, within: &TimeInterval) -> Vec<Triple> {
        let mut sets: Vec<Option<&BTreeSet<Id>>> = Vec::with_capacity(3);
        if let Some(s) = &pattern.subject {
            sets.push(self.by_subject.get(s));
        }
        if let Some(p) = &pattern.predicate {
            sets.push(self.by_predicate.get(p));
        }
        if let Some(o) = &pattern.object {
            sets.push(self.by_object.get(o));
        }
        if sets.iter().any(Option::is_none) {
            return Vec::new();
        }
        let candidates = sets.into_iter().flatten().min_by_key(|s| s.len());
        let mut out: Vec<Triple> = match candidates {
            Some(ids) => ids
                .iter()
                .map(|&i| &self.triples[i])
                .filter(|t| pattern.matches(t) && t.holds.overlaps(within))
                .cloned()
                .collect(),
            None => self
                .triples
                .iter()
                .filter(|t| t.holds.overlaps(within))
                .cloned()
                .collect(),
        };
        out.sort();
        out
    }

    /// Triples where `e` is the subject or the object.
    pub fn neighborhood(&self, e: &Term, within: &TimeInterval) -> Vec<Triple> {
        let mut ids: BTreeSet<Id> = BTreeSet::new();
        if let Some(s) = self.by_subject.get(e) {
            ids.extend(s);
        }
        if let Some(o) = self.by_object.get(&Object::Term(e.clone())) {
            ids.extend(o);
        }
        let mut out: Vec<Triple> = ids
            .into_iter()
            .map(|i| &self.triples[i])
            .filter(|t| t.holds.overlaps(within))
            .cloned()
            .collect();
        out.sort();
        out
    }

    /// Every triple, sorted.
    pub fn triples(&self) -> Vec<Triple> {
        let mut all = self.triples.clone();
        all.sort();
        all
    }

    /// Objects of `(subject, predicate, ?)` over the unbounded window.
    pub fn objects(&self, subject: &Term, predicate: &Term) -> Vec<Object> {
        self.query(
            &Pattern::any().s(subject.clone()).p(predicate.clone()),
            &TimeInterval::ALWAYS,
        )
        .into_iter()
        .map(|t| t.object)
        .collect()
    }

    /// Subjects of `(?, predicate, object)` over the unbounded window.
    pub fn subjects(&self, predicate: &Term, object: impl Into<Object>) -> Vec<Term> {
        self.query(
            &Pattern::any().p(predicate.clone()).o(object),
            &TimeInterval::ALWAYS,
        )
        .into_iter()
        .map(|t| t.subject)
        .collect()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.ids.contains_key(t)
    }

    /// Line-oriented export: `subject predicate object start end .`
    pub fn export(&self) -> String {
        let mut out = String::new();
        for t in self.triples() {
            out.push_str(&t.to_string());
            out.push('\n');
        }
        out
    }

    pub fn import(text: &str) -> Result<Self> {
        let mut kb = KnowledgeBase::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let t = parse_line(line).map_err(|msg| Error::Parse {
                line: n + 1,
                msg,
            })?;
            kb.assert_triple(t)?;
        }
        Ok(kb)
    }
}

fn parse_line(line: &str) -> std::result::Result<Triple, String> {
    let (subject, rest) = next_token(line)?;
    let (predicate, rest) = next_token(rest)?;
    let rest = rest.trim_start();
    let (object, rest) = if rest.starts_with('"') {
        parse_literal(rest)?
    } else {
        let (tok, rest) = next_token(rest)?;
        (Object::Term(tok.parse().map_err(|e: Error| e.to_string())?), rest)
    };
    let (start, rest) = next_token(rest)?;
    let (end, rest) = next_token(rest)?;
    if rest.trim() != "." {
        return Err(format!("expected terminating '.', found `{}`", rest.trim()));
    }
    let bound = |s: &str| -> std::result::Result<Option<f64>, String> {
        if s == "-" {
            Ok(None)
        } else {
            s.parse::<f64>()
                .map(Some)
                .map_err(|_| format!("bad interval bound `{s}`"))
        }
    };
    let holds = TimeInterval::new(bound(start)?, bound(end)?).map_err(|e| e.to_string())?;
    Ok(Triple {
        subject: subject.parse().map_err(|e: Error| e.to_string())?,
        predicate: predicate.parse().map_err(|e: Error| e.to_string())?,
        object,
        holds,
    })
}

fn next_token(s: &str) -> std::result::Result<(&str, &str), String> {
    let s = s.trim_start();
    if s.is_empty() {
        return Err("unexpected end of line".into());
    }
    let end = s.find(char::is_whitespace).unwrap_or(s.len());
    Ok((&s[..end], &s[end..]))
}

fn parse_literal(s: &str) -> std::result::Result<(Object, &str), String> {
    let mut value = String::new();
    let mut chars = s[1..].char_indices();
    let close = loop {
        match chars.next() {
            None => return Err("unterminated literal".into()),
            Some((i, '"')) => break i + 1,
            Some((_, '\\')) => match chars.next() {
                Some((_, 'n')) => value.push('\n'),
                Some((_, 't')) => value.push('\t'),
                Some((_, c)) => value.push(c),
                None => return Err("dangling escape".into()),
            },
            Some((_, c)) => value.push(c),
        }
    };
    let rest = &s[close + 1..];
    let (lit, rest) = if let Some(r) = rest.strip_prefix("^^int") {
        let v = value
            .parse::<i64>()
            .map_err(|_| format!("bad integer literal `{value}`"))?;
        (Literal::Integer(v), r)
    } else if let Some(r) = rest.strip_prefix("^^float") {
        let v = value
            .parse::<f64>()
            .map_err(|_| format!("bad float literal `{value}`"))?;
        let decimals = value.split_once('.').map_or(0, |(_, f)| f.len()) as u8;
        (Literal::float(v, decimals).map_err(|e| e.to_string())?, r)
    } else {
        (Literal::Text(value), rest)
    };
    Ok((Object::Literal(lit), rest))
}
