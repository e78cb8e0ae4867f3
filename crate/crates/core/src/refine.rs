//! Narrative-to-explanation refinement through a chat model.
//!
//! A session starts with the fixed system prompt, sends the narrative as the
//! first user message and keeps the reply as revision 0. Follow-up requests
//! ("Make the explanation shorter") append to the same history.
//!
//! Two backends implement [`RefinerBackend`]: [`RemoteBackend`] talks to an
//! HTTP chat endpoint, [`DeterministicBackend`] rewrites narratives with fixed
//! rules so the whole pipeline runs without a model.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::narrative::{parse_sentences, NarrativeRecord, SentenceSketch, Specificity};

pub const SYSTEM_PROMPT: &str = "You are an agent that based on a given ontology-based narrative, shall provide a new narrative that: (a) is shorter than the original, (b) uses an easier language than the original, and (c) keeps the semantic meaning of the original.";

pub const SHORTEN_REQUEST: &str = "Make the explanation shorter";

pub fn system_prompt() -> &'static str {
    SYSTEM_PROMPT
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Result<Self> {
        let content = content.into();
        if content.trim().is_empty() {
            return Err(Error::InvalidArgument("chat message content is empty".into()));
        }
        Ok(ChatMessage { role, content })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementSession {
    pub session_id: String,
    pub narrative_ref: String,
    pub level: Specificity,
    pub messages: Vec<ChatMessage>,
}

impl RefinementSession {
    /// Number of assistant replies minus one; `None` before the first reply.
    pub fn revision(&self) -> Option<u32> {
        let replies = self.messages.iter().filter(|m| m.role == Role::Assistant).count() as u32;
        replies.checked_sub(1)
    }

    pub fn latest(&self) -> Option<Explanation> {
        let revision = self.revision()?;
        let text = self
            .messages
            .iter()
            .rev()
            .find(|m| m.role == Role::Assistant)?
            .content
            .clone();
        Some(Explanation {
            text,
            narrative_ref: self.narrative_ref.clone(),
            level: self.level,
            revision,
        })
    }

    /// Every assistant reply in order, as explanations.
    pub fn revisions(&self) -> Vec<Explanation> {
        self.messages
            .iter()
            .filter(|m| m.role == Role::Assistant)
            .enumerate()
            .map(|(i, m)| Explanation {
                text: m.content.clone(),
                narrative_ref: self.narrative_ref.clone(),
                level: self.level,
                revision: i as u32,
            })
            .collect()
    }

    /// System message first, then strictly alternating user/assistant.
    pub fn is_well_formed(&self) -> bool {
        let mut it = self.messages.iter();
        if it.next().map(|m| m.role) != Some(Role::System) {
            return false;
        }
        it.enumerate().all(|(i, m)| {
            m.role
                == if i % 2 == 0 {
                    Role::User
                } else {
                    Role::Assistant
                }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub text: String,
    pub narrative_ref: String,
    pub level: Specificity,
    pub revision: u32,
}

/// A chat model: full history in, one assistant message out.
pub trait RefinerBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, messages: &[ChatMessage]) -> Result<String>;
}

fn reply(backend: &dyn RefinerBackend, messages: &[ChatMessage]) -> Result<String> {
    let out = backend.complete(messages)?;
    if out.trim().is_empty() {
        return Err(Error::Backend(format!("{} returned an empty response", backend.name())));
    }
    Ok(out.trim().to_string())
}

/// Revision 0 for `narrative` and the session that produced it.
pub fn refine(narrative: &NarrativeRecord, backend: &dyn RefinerBackend) -> Result<(Explanation, RefinementSession)> {
    if narrative.text.trim().is_empty() {
        return Err(Error::InvalidArgument("narrative text is empty".into()));
    }
    let narrative_ref = format!("{}@L{}", narrative.pair_id(), narrative.level);
    let mut session = RefinementSession {
        session_id: narrative_ref.clone(),
        narrative_ref,
        level: narrative.level,
        messages: vec![
            ChatMessage::new(Role::System, SYSTEM_PROMPT)?,
            ChatMessage::new(Role::User, narrative.text.clone())?,
        ],
    };
    let text = reply(backend, &session.messages)?;
    session.messages.push(ChatMessage::new(Role::Assistant, text)?);
    let explanation = session.latest().expect("one reply recorded");
    Ok((explanation, session))
}

/// Sends `request` on top of the session history. On failure the session is
/// left untouched.
pub fn follow_up(session: &mut RefinementSession, request: &str, backend: &dyn RefinerBackend) -> Result<Explanation> {
    if session.revision().is_none() {
        return Err(Error::InvalidArgument("session has no initial explanation yet".into()));
    }
    let user = ChatMessage::new(Role::User, request.trim())?;
    let mut history = session.messages.clone();
    history.push(user.clone());
    let text = reply(backend, &history)?;
    session.messages.push(user);
    session.messages.push(ChatMessage::new(Role::Assistant, text)?);
    Ok(session.latest().expect("reply recorded"))
}

/// Refines every narrative with at most `in_flight` concurrent backend calls.
/// Results keep input order.
pub fn refine_all(
    narratives: &[NarrativeRecord],
    backend: &dyn RefinerBackend,
    in_flight: usize,
) -> Result<Vec<Result<(Explanation, RefinementSession)>>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(in_flight.max(1))
        .build()
        .map_err(|e| Error::Backend(format!("worker pool: {e}")))?;
    Ok(pool.install(|| narratives.par_iter().map(|n| refine(n, backend)).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefineMode {
    Initial,
    Shorten,
}

/// Facts read back from a rendered narrative.
#[derive(Debug, Default)]
struct NarrativeFacts {
    /// (subject, adjectives, object), in text order.
    comparisons: Vec<(String, Vec<String>, String)>,
    no_relations: Option<(String, String)>,
    /// (plan, property phrase, quality label).
    attributions: Vec<(String, String, String)>,
    /// (plan, concept).
    classes: Vec<(String, String)>,
    /// (quality label, value).
    values: Vec<(String, String)>,
    /// Clauses with predicates this refiner does not know, kept verbatim.
    other: Vec<(String, String, String)>,
}

const ADJECTIVE_ORDER: [&str; 8] = [
    "cheaper",
    "faster",
    "shorter",
    "better",
    "more expensive",
    "slower",
    "longer",
    "worse",
];

fn property_of(phrase: &str) -> Option<&'static str> {
    match phrase {
        "has makespan" => Some("makespan"),
        "has number of tasks" => Some("number of tasks"),
        "has cost" => Some("cost"),
        _ => None,
    }
}

fn facts(text: &str) -> Result<NarrativeFacts> {
    let mut f = NarrativeFacts::default();
    for sentence in parse_sentences(text)? {
        let clauses = match sentence {
            SentenceSketch::NoRelations(a, b) => {
                f.no_relations = Some((a, b));
                continue;
            }
            SentenceSketch::Contrast(c) => c,
        };
        for c in clauses {
            let mut adjectives = Vec::new();
            for p in &c.predicates {
                if let Some(adj) = p.strip_prefix("is ").and_then(|r| r.strip_suffix(" plan than")) {
                    adjectives.push(adj.to_string());
                } else if p == "is classified by" {
                    f.classes.push((c.subject.clone(), c.object.clone()));
                } else if let Some(prop) = property_of(p) {
                    f.attributions.push((c.subject.clone(), prop.to_string(), c.object.clone()));
                } else if p == "has value" {
                    f.values.push((c.subject.clone(), c.object.clone()));
                } else {
                    f.other.push((c.subject.clone(), p.clone(), c.object.clone()));
                }
            }
            if !adjectives.is_empty() {
                adjectives.sort_by_key(|a| ADJECTIVE_ORDER.iter().position(|o| o == a).unwrap_or(usize::MAX));
                f.comparisons.push((c.subject, adjectives, c.object));
            }
        }
    }
    Ok(f)
}

fn join_list(items: &[String], with_and: bool) -> String {
    match items.len() {
        0 => String::new(),
        1 => items[0].clone(),
        2 if with_and => format!("{} and {}", items[0], items[1]),
        _ if with_and => format!("{}, and {}", items[..items.len() - 1].join(", "), items[items.len() - 1]),
        _ => items.join(", "),
    }
}

fn concept_phrase(concept: &str) -> String {
    match concept {
        "TypicalPlan" => "a typical plan".into(),
        "AtypicalPlan" => "an atypical plan".into(),
        other => format!("classified as {other}"),
    }
}

fn concept_tag(concept: &str) -> String {
    match concept {
        "TypicalPlan" => "typical".into(),
        "AtypicalPlan" => "atypical".into(),
        other => other.to_string(),
    }
}

impl NarrativeFacts {
    /// Plans in order of first appearance.
    fn plans(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |p: &String| {
            if !out.contains(p) {
                out.push(p.clone());
            }
        };
        if let Some((a, b)) = &self.no_relations {
            push(a);
            push(b);
        }
        for (s, _, o) in &self.comparisons {
            push(s);
            push(o);
        }
        for (p, _, _) in &self.attributions {
            push(p);
        }
        for (p, _) in &self.classes {
            push(p);
        }
        out
    }

    fn class_of(&self, plan: &str) -> Option<&str> {
        self.classes.iter().find(|(p, _)| p == plan).map(|(_, c)| c.as_str())
    }

    /// (property, value) pairs of a plan in attribution order.
    fn values_of(&self, plan: &str) -> Vec<(String, String)> {
        self.attributions
            .iter()
            .filter(|(p, _, _)| p == plan)
            .filter_map(|(_, prop, q)| {
                self.values
                    .iter()
                    .find(|(ql, _)| ql == q)
                    .map(|(_, v)| (prop.clone(), v.clone()))
            })
            .collect()
    }

    fn other_sentences(&self) -> Vec<String> {
        self.other.iter().map(|(s, p, o)| format!("{s} {p} {o}.")).collect()
    }
}

fn value_clause_long(prop: &str, v: &str) -> String {
    match prop {
        "makespan" => format!("takes {v} time units"),
        "number of tasks" => format!("has {v} tasks"),
        "cost" => format!("costs {v}"),
        other => format!("has {other} {v}"),
    }
}

fn value_clause_short(prop: &str, v: &str, lead: bool) -> String {
    match prop {
        "makespan" if lead => format!("runs in {v} units"),
        "makespan" => format!("{v} units"),
        "number of tasks" if lead => format!("has {v} tasks"),
        "number of tasks" => format!("{v} tasks"),
        "cost" if lead => format!("costs {v}"),
        "cost" => format!("cost {v}"),
        other => format!("{other} {v}"),
    }
}

fn capitalized(sentence: String) -> String {
    let mut chars = sentence.chars();
    match chars.next() {
        Some(c) if c.is_lowercase() => c.to_uppercase().chain(chars).collect(),
        _ => sentence,
    }
}

fn initial_text(f: &NarrativeFacts) -> String {
    let mut out = Vec::new();
    if let Some((a, b)) = &f.no_relations {
        out.push(format!("{a} and {b} do not differ."));
    }
    for (s, adjs, o) in &f.comparisons {
        out.push(format!("{s} is {} than {o}.", join_list(adjs, true)));
    }
    let plans = f.plans();
    let any_values = plans.iter().any(|p| !f.values_of(p).is_empty());
    if any_values {
        for p in &plans {
            let vals: Vec<String> = f.values_of(p).iter().map(|(k, v)| value_clause_long(k, v)).collect();
            if !vals.is_empty() {
                out.push(format!("{p} {}.", join_list(&vals, true)));
            }
        }
    } else if !f.attributions.is_empty() {
        let props_of = |p: &str| -> Vec<String> {
            f.attributions
                .iter()
                .filter(|(q, _, _)| q == p)
                .map(|(_, k, _)| k.clone())
                .collect()
        };
        let first = props_of(&plans[0]);
        if plans.len() == 2 && props_of(&plans[1]) == first {
            out.push(format!("Both plans have {}.", join_list(&first, true)));
        } else {
            for p in &plans {
                let props = props_of(p);
                if !props.is_empty() {
                    out.push(format!("{p} has {}.", join_list(&props, true)));
                }
            }
        }
    }
    let classes: Vec<String> = f
        .classes
        .iter()
        .map(|(p, c)| format!("{p} is {}", concept_phrase(c)))
        .collect();
    if !classes.is_empty() {
        out.push(format!("{}.", classes.join("; ")));
    }
    out.extend(f.other_sentences());
    out.into_iter().map(capitalized).collect::<Vec<_>>().join(" ")
}

fn shorten_text(f: &NarrativeFacts) -> String {
    let mut out = Vec::new();
    let mut tagged: Vec<String> = Vec::new();
    let name = |p: &str, tagged: &mut Vec<String>| -> String {
        match f.class_of(p) {
            Some(c) if !tagged.iter().any(|t| t == p) => {
                tagged.push(p.to_string());
                format!("{p} ({})", concept_tag(c))
            }
            _ => p.to_string(),
        }
    };
    let terse = f.classes.is_empty();
    if let Some((a, b)) = &f.no_relations {
        let (na, nb) = (name(a, &mut tagged), name(b, &mut tagged));
        out.push(format!("{na} matches {nb}."));
    }
    for (s, adjs, o) in &f.comparisons {
        let (ns, no) = (name(s, &mut tagged), name(o, &mut tagged));
        if terse {
            out.push(format!("{ns}: {} than {no}.", join_list(adjs, false)));
        } else {
            out.push(format!("{ns} is {} than {no}.", join_list(adjs, true)));
        }
    }
    let plans = f.plans();
    let with_values: Vec<(&String, Vec<(String, String)>)> = plans
        .iter()
        .map(|p| (p, f.values_of(p)))
        .filter(|(_, v)| !v.is_empty())
        .collect();
    if !with_values.is_empty() {
        let (first, vals) = &with_values[0];
        let subject = if f.comparisons.first().map(|c| &c.0) == Some(*first)
            || (f.comparisons.is_empty() && f.no_relations.as_ref().map(|n| &n.0) == Some(*first))
        {
            "It".to_string()
        } else {
            name(first, &mut tagged)
        };
        let lead: Vec<String> = vals.iter().map(|(k, v)| value_clause_short(k, v, true)).collect();
        let mut sentence = format!("{subject} {}", join_list(&lead, true));
        for (p, vals) in &with_values[1..] {
            let rest: Vec<String> = vals.iter().map(|(k, v)| value_clause_short(k, v, false)).collect();
            sentence.push_str(&format!(", versus {}'s {}", name(p, &mut tagged), join_list(&rest, true)));
        }
        sentence.push('.');
        out.push(sentence);
    }
    // Plans never named in a comparison still get their class.
    for (p, c) in &f.classes {
        if !tagged.iter().any(|t| t == p) {
            out.push(format!("{p} is {}.", concept_tag(c)));
        }
    }
    out.extend(f.other_sentences());
    out.into_iter().map(capitalized).collect::<Vec<_>>().join(" ")
}

/// Rule-based rewrite of a rendered narrative.
pub fn deterministic_refine(narrative_text: &str, mode: RefineMode) -> Result<String> {
    let f = facts(narrative_text)?;
    let text = match mode {
        RefineMode::Initial => initial_text(&f),
        RefineMode::Shorten => shorten_text(&f),
    };
    if text.is_empty() {
        return Err(Error::InvalidArgument("narrative contains no sentences".into()));
    }
    Ok(text)
}

/// Offline backend: the first user message is treated as the narrative; a
/// follow-up asking for something shorter/briefer yields the shortened form,
/// any other follow-up repeats the previous answer.
#[derive(Debug, Clone, Default)]
pub struct DeterministicBackend;

impl RefinerBackend for DeterministicBackend {
    fn name(&self) -> &str {
        "deterministic"
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let mut users = messages.iter().filter(|m| m.role == Role::User);
        let narrative = users
            .next()
            .ok_or_else(|| Error::Backend("no user message to refine".into()))?;
        let last = messages.last().expect("non-empty");
        if last.role != Role::User {
            return Err(Error::Backend("last message must come from the user".into()));
        }
        if std::ptr::eq(last, narrative) {
            return deterministic_refine(&narrative.content, RefineMode::Initial)
                .map_err(|e| Error::Backend(e.to_string()));
        }
        let request = last.content.to_lowercase();
        if ["short", "brief", "concise", "compress"].iter().any(|k| request.contains(k)) {
            return deterministic_refine(&narrative.content, RefineMode::Shorten)
                .map_err(|e| Error::Backend(e.to_string()));
        }
        messages
            .iter()
            .rev()
            .find(|m| m.role == Role::Assistant)
            .map(|m| m.content.clone())
            .ok_or_else(|| Error::Backend("no previous answer to revise".into()))
    }
}

/// Connection settings for a chat endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Server root, e.g. `http://localhost:11434`.
    pub base_url: String,
    #[serde(default = "default_chat_path")]
    pub chat_path: String,
    pub model: String,
    /// Bearer token; never logged.
    #[serde(default, skip_serializing)]
    pub token: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default)]
    pub verbose: bool,
}

fn default_chat_path() -> String {
    "/api/chat".into()
}
fn default_timeout() -> u64 {
    120
}
fn default_attempts() -> u32 {
    3
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteConfig {
            base_url: base_url.into(),
            chat_path: default_chat_path(),
            model: model.into(),
            token: None,
            timeout_secs: default_timeout(),
            max_attempts: default_attempts(),
            verbose: false,
        }
    }

    pub fn endpoint(&self) -> String {
        format!(
            "{}/{}",
            self.base_url.trim_end_matches('/'),
            self.chat_path.trim_start_matches('/')
        )
    }
}

#[derive(Deserialize)]
struct ChatReply {
    message: Option<ReplyMessage>,
    #[serde(default)]
    choices: Vec<ReplyChoice>,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: String,
}

#[derive(Deserialize)]
struct ReplyChoice {
    message: ReplyMessage,
}

/// Chat-completions client. Retries transport errors and 5xx responses with
/// exponential backoff, up to `max_attempts` in total.
pub struct RemoteBackend {
    cfg: RemoteConfig,
    http: reqwest::blocking::Client,
    backoff: Duration,
}

impl RemoteBackend {
    pub fn new(cfg: RemoteConfig) -> Result<Self> {
        if cfg.base_url.trim().is_empty() || cfg.model.trim().is_empty() {
            return Err(Error::InvalidArgument("remote backend needs base_url and model".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| Error::Backend(e.to_string()))?;
        Ok(RemoteBackend {
            cfg,
            http,
            backoff: Duration::from_millis(500),
        })
    }

    /// Base delay between attempts (doubled after each failure).
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn attempt(&self, body: &serde_json::Value) -> std::result::Result<String, (bool, String)> {
        let mut req = self.http.post(self.cfg.endpoint()).json(body);
        if let Some(token) = &self.cfg.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| (true, format!("request failed: {e}")))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| (true, format!("reading body: {e}")))?;
        if self.cfg.verbose {
            tracing::debug!(%status, body = %text, "chat response");
        }
        if status.is_server_error() {
            return Err((true, format!("server error {status}")));
        }
        if !status.is_success() {
            return Err((false, format!("endpoint answered {status}: {text}")));
        }
        let parsed: ChatReply =
            serde_json::from_str(&text).map_err(|e| (false, format!("unexpected response shape: {e}")))?;
        parsed
            .message
            .or_else(|| parsed.choices.into_iter().next().map(|c| c.message))
            .map(|m| m.content)
            .ok_or_else(|| (false, "response carries no message".to_string()))
    }
}

impl RefinerBackend for RemoteBackend {
    fn name(&self) -> &str {
        &self.cfg.model
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let body = json!({
            "model": self.cfg.model,
            "messages": messages,
            "stream": false,
            "options": {"temperature": 0, "seed": 0},
            "temperature": 0,
        });
        if self.cfg.verbose {
            tracing::debug!(endpoint = %self.cfg.endpoint(), request = %body, auth = if self.cfg.token.is_some() { "Bearer ***" } else { "none" }, "chat request");
        }
        let attempts = self.cfg.max_attempts.max(1);
        let mut delay = self.backoff;
        let mut last = String::new();
        for n in 1..=attempts {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err((retryable, msg)) => {
                    tracing::warn!(attempt = n, "chat backend: {msg}");
                    last = msg;
                    if !retryable {
                        break;
                    }
                    if n < attempts {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(Error::Backend(last))
    }
}
