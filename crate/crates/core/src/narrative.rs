//! Contrastive narratives for plan pairs.
//!
//! Retrieval walks the vicinity of the two plans in the store and keeps the
//! tuples allowed by the specificity level:
//!
//! * level 1: plan-level comparison predicates between the two plans
//! * level 2: level 1, plus plan-to-quality attributions and plan classifications
//! * level 3: level 2, plus the data value of every quality
//!
//! Rendering is a fixed set of connector rules. Predicates sharing a subject
//! and object are chained with "and", the two sides of a contrast are joined
//! with "; while", and every entity is wrapped in single quotes. The
//! [`parse_sentences`] reader inverts the rendering so text can be checked
//! against (and rewritten from) its tuples.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiences::{grounded_plans, plan_term};
use crate::inference::unordered_pairs;
use crate::kstore::{KnowledgeBase, Object, Pattern, Term, TimeInterval, Triple};
use crate::vocab::{self, Concept, PropertyKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Specificity(u8);

impl Specificity {
    pub const ONE: Specificity = Specificity(1);
    pub const TWO: Specificity = Specificity(2);
    pub const THREE: Specificity = Specificity(3);
    pub const ALL: [Specificity; 3] = [Specificity::ONE, Specificity::TWO, Specificity::THREE];

    pub fn new(level: u8) -> Result<Self> {
        match level {
            1..=3 => Ok(Specificity(level)),
            _ => Err(Error::InvalidArgument(format!("specificity must be 1, 2 or 3, got {level}"))),
        }
    }

    pub fn level(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Specificity {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        Specificity::new(v)
    }
}

impl From<Specificity> for u8 {
    fn from(s: Specificity) -> u8 {
        s.0
    }
}

impl fmt::Display for Specificity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Narrative {
    pub pair: (String, String),
    pub level: Specificity,
    pub tuples: Vec<Triple>,
    pub text: String,
}

impl Narrative {
    /// Stable identifier of the pair, e.g. `plan_01__plan_02`.
    pub fn pair_id(&self) -> String {
        pair_id(&self.pair.0, &self.pair.1)
    }

    pub fn id(&self) -> String {
        format!("{}@L{}", self.pair_id(), self.level)
    }

    pub fn record(&self) -> NarrativeRecord {
        NarrativeRecord {
            pair: self.pair.clone(),
            level: self.level,
            text: self.text.clone(),
            tuple_count: self.tuples.len(),
        }
    }
}

pub fn pair_id(a: &str, b: &str) -> String {
    format!("{a}__{b}")
}

/// One line of the JSON-lines export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrativeRecord {
    pub pair: (String, String),
    pub level: Specificity,
    pub text: String,
    pub tuple_count: usize,
}

impl NarrativeRecord {
    pub fn pair_id(&self) -> String {
        pair_id(&self.pair.0, &self.pair.1)
    }
}

/// Display label of a term as it appears between quotes.
pub fn label(t: &Term) -> String {
    const CONCEPTS: [Concept; 4] = [
        Concept::TypicalPlanQualityValue,
        Concept::AtypicalPlanQualityValue,
        Concept::TypicalPlan,
        Concept::AtypicalPlan,
    ];
    if CONCEPTS.iter().any(|c| c.local() == t.local) {
        t.local.clone()
    } else {
        vocab::instance_label(&t.local)
    }
}

fn object_label(o: &Object) -> String {
    match o {
        Object::Term(t) => label(t),
        Object::Literal(l) => l.lexical(),
    }
}

fn quote(s: &str) -> String {
    format!("'{s}'")
}

/// One "subject predicates object" clause, possibly with chained predicates.
struct Clause {
    subject: String,
    predicates: Vec<String>,
    object: String,
}

impl Clause {
    fn render(&self) -> String {
        format!(
            "{} {} {}",
            quote(&self.subject),
            self.predicates.join(" and "),
            quote(&self.object)
        )
    }
}

fn render_sentence(clauses: &[Clause]) -> String {
    let parts: Vec<String> = clauses.iter().map(Clause::render).collect();
    format!("{}.", parts.join("; while "))
}

fn fallback_sentence(a: &Term, b: &Term) -> String {
    format!(
        "{} and {} have no contrastive relations.",
        quote(&label(a)),
        quote(&label(b))
    )
}

fn check_inferred(kb: &KnowledgeBase, plan: &Term) -> Result<()> {
    if kb.objects(plan, &vocab::is_classified_by()).is_empty() {
        return Err(Error::MissingKnowledge(format!(
            "plan `{}` has not been through inference",
            plan.local
        )));
    }
    Ok(())
}

/// Retrieves and renders the narrative for `(a, b)`; `a` leads every contrast.
pub fn retrieve_pair(
    kb: &KnowledgeBase,
    a: &str,
    b: &str,
    level: Specificity,
    within: &TimeInterval,
) -> Result<Narrative> {
    if a == b {
        return Err(Error::InvalidArgument(format!("cannot contrast plan `{a}` with itself")));
    }
    let (ta, tb) = (plan_term(a)?, plan_term(b)?);
    check_inferred(kb, &ta)?;
    check_inferred(kb, &tb)?;

    let mut tuples = Vec::new();
    let mut sentences = Vec::new();

    // Comparisons: one chained clause per direction, `a` first.
    let order = vocab::plan_comparisons_in_order();
    let neighborhood_a = kb.neighborhood(&ta, within);
    let mut any_comparison = false;
    for (s, o) in [(&ta, &tb), (&tb, &ta)] {
        let mut found: Vec<&Triple> = neighborhood_a
            .iter()
            .filter(|t| &t.subject == s && t.object.as_term() == Some(o) && order.contains(&t.predicate))
            .collect();
        if found.is_empty() {
            continue;
        }
        found.sort_by_key(|t| order.iter().position(|p| p == &t.predicate));
        found.dedup_by(|x, y| x.predicate == y.predicate);
        any_comparison = true;
        sentences.push(render_sentence(&[Clause {
            subject: label(s),
            predicates: found.iter().map(|t| vocab::predicate_phrase(&t.predicate)).collect(),
            object: label(o),
        }]));
        tuples.extend(found.into_iter().cloned());
    }
    if !any_comparison {
        sentences.push(fallback_sentence(&ta, &tb));
    }

    if level >= Specificity::TWO {
        let mut qualities: Vec<(Option<Triple>, Option<Triple>)> = Vec::new();
        for kind in PropertyKind::ALL {
            let pick = |plan: &Term| {
                kb.query(
                    &Pattern::any().s(plan.clone()).p(kind.attribution()),
                    within,
                )
                .into_iter()
                .next()
            };
            let pair = (pick(&ta), pick(&tb));
            let clauses: Vec<Clause> = [&pair.0, &pair.1]
                .into_iter()
                .flatten()
                .map(|t| Clause {
                    subject: label(&t.subject),
                    predicates: vec![vocab::predicate_phrase(&t.predicate)],
                    object: object_label(&t.object),
                })
                .collect();
            if !clauses.is_empty() {
                sentences.push(render_sentence(&clauses));
                tuples.extend([&pair.0, &pair.1].into_iter().flatten().cloned());
            }
            qualities.push(pair);
        }

        let classes: Vec<Triple> = [&ta, &tb]
            .into_iter()
            .filter_map(|plan| {
                kb.query(&Pattern::any().s(plan.clone()).p(vocab::is_classified_by()), within)
                    .into_iter()
                    .next()
            })
            .collect();
        if !classes.is_empty() {
            sentences.push(render_sentence(
                &classes
                    .iter()
                    .map(|t| Clause {
                        subject: label(&t.subject),
                        predicates: vec![vocab::predicate_phrase(&t.predicate)],
                        object: object_label(&t.object),
                    })
                    .collect::<Vec<_>>(),
            ));
            tuples.extend(classes);
        }

        if level >= Specificity::THREE {
            for (qa, qb) in &qualities {
                let values: Vec<Triple> = [qa, qb]
                    .into_iter()
                    .flatten()
                    .filter_map(|attr| attr.object.as_term())
                    .filter_map(|q| {
                        kb.query(&Pattern::any().s(q.clone()).p(vocab::has_data_value()), within)
                            .into_iter()
                            .next()
                    })
                    .collect();
                if values.is_empty() {
                    continue;
                }
                sentences.push(render_sentence(
                    &values
                        .iter()
                        .map(|t| Clause {
                            subject: label(&t.subject),
                            predicates: vec![vocab::predicate_phrase(&t.predicate)],
                            object: object_label(&t.object),
                        })
                        .collect::<Vec<_>>(),
                ));
                tuples.extend(values);
            }
        }
    }

    Ok(Narrative {
        pair: (a.to_string(), b.to_string()),
        level,
        tuples,
        text: sentences.join(" "),
    })
}

/// Every pairwise narrative over the grounded plans, in lexicographic pair
/// order.
pub fn narrate_all(kb: &KnowledgeBase, level: Specificity, within: &TimeInterval) -> Result<Vec<Narrative>> {
    let plans = grounded_plans(kb);
    if plans.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two plans to contrast, found {}",
            plans.len()
        )));
    }
    unordered_pairs(&plans)
        .par_iter()
        .map(|(a, b)| retrieve_pair(kb, a, b, level, within))
        .collect()
}

/// A parsed clause: quoted subject, one or more predicate phrases, quoted
/// object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClauseSketch {
    pub subject: String,
    pub predicates: Vec<String>,
    pub object: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SentenceSketch {
    /// Clauses joined by "; while".
    Contrast(Vec<ClauseSketch>),
    /// The no-relations fallback for the two named plans.
    NoRelations(String, String),
}

enum Tok<'a> {
    Quoted(&'a str),
    Words(&'a str),
}

fn tokenize(text: &str) -> Result<Vec<Tok<'_>>> {
    let mut toks = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        if let Some(after) = rest.strip_prefix('\'') {
            let end = after
                .find('\'')
                .ok_or_else(|| Error::InvalidArgument("unterminated quote in narrative".into()))?;
            toks.push(Tok::Quoted(&after[..end]));
            rest = &after[end + 1..];
        } else {
            let end = rest.find('\'').unwrap_or(rest.len());
            toks.push(Tok::Words(&rest[..end]));
            rest = &rest[end..];
        }
    }
    Ok(toks)
}

/// Reads rendered narrative text back into clause sketches.
pub fn parse_sentences(text: &str) -> Result<Vec<SentenceSketch>> {
    let bad = |m: &str| Error::InvalidArgument(format!("unparseable narrative: {m}"));
    let toks = tokenize(text.trim())?;
    let mut out = Vec::new();
    let mut current: Vec<ClauseSketch> = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let Tok::Quoted(subject) = toks[i] else {
            return Err(bad("expected a quoted subject"));
        };
        let (Some(Tok::Words(middle)), Some(Tok::Quoted(object))) = (toks.get(i + 1), toks.get(i + 2)) else {
            return Err(bad("incomplete clause"));
        };
        let sep = match toks.get(i + 3) {
            Some(Tok::Words(w)) => *w,
            None => "",
            Some(Tok::Quoted(_)) => return Err(bad("missing separator")),
        };
        i += 4;
        if middle.trim() == "and" && sep.trim_start().starts_with("have no contrastive relations.") {
            if !current.is_empty() {
                return Err(bad("fallback inside a contrast"));
            }
            out.push(SentenceSketch::NoRelations(subject.to_string(), object.to_string()));
            continue;
        }
        let predicates: Vec<String> = middle.trim().split(" and ").map(str::to_string).collect();
        if predicates.iter().any(|p| p.is_empty()) {
            return Err(bad("empty predicate"));
        }
        current.push(ClauseSketch {
            subject: subject.to_string(),
            predicates,
            object: object.to_string(),
        });
        match sep.trim() {
            "; while" => {}
            "." => out.push(SentenceSketch::Contrast(std::mem::take(&mut current))),
            other => return Err(bad(&format!("unexpected connector `{other}`"))),
        }
    }
    if !current.is_empty() {
        return Err(bad("text ends inside a sentence"));
    }
    Ok(out)
}

/// `true` when every clause of the text is backed by one of the tuples.
pub fn text_is_grounded(n: &Narrative) -> bool {
    let Ok(sentences) = parse_sentences(&n.text) else {
        return false;
    };
    sentences.iter().all(|s| match s {
        SentenceSketch::NoRelations(a, b) => {
            a == &vocab::instance_label(&n.pair.0) && b == &vocab::instance_label(&n.pair.1)
        }
        SentenceSketch::Contrast(clauses) => clauses.iter().all(|c| {
            c.predicates.iter().all(|p| {
                n.tuples.iter().any(|t| {
                    label(&t.subject) == c.subject
                        && &vocab::predicate_phrase(&t.predicate) == p
                        && object_label(&t.object) == c.object
                })
            })
        }),
    })
}

pub fn to_jsonl(narratives: &[Narrative]) -> Result<String> {
    let mut out = String::new();
    for n in narratives {
        out.push_str(&serde_json::to_string(&n.record())?);
        out.push('\n');
    }
    Ok(out)
}

pub fn from_jsonl(text: &str) -> Result<Vec<NarrativeRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Plain-text export, one narrative per paragraph.
pub fn to_plain_text(narratives: &[Narrative]) -> String {
    narratives
        .iter()
        .map(|n| format!("[{} L{}]\n{}\n", n.pair_id(), n.level, n.text))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiences::{ground_properties, PlanProperties};
    use crate::inference::run_all;
    use crate::typicality::classify_corpus;

    fn store(plans: &[(&str, u64, f64, u64)], alpha: f64) -> KnowledgeBase {
        let mut kb = KnowledgeBase::new();
        let props: Vec<PlanProperties> = plans
            .iter()
            .map(|&(id, n, m, c)| PlanProperties {
                plan_id: id.into(),
                num_tasks: n,
                makespan: m,
                cost: c,
            })
            .collect();
        for p in &props {
            ground_properties(&mut kb, p).unwrap();
        }
        classify_corpus(&mut kb, &props, alpha).unwrap();
        let ids: Vec<String> = plans.iter().map(|p| p.0.to_string()).collect();
        run_all(&mut kb, &ids).unwrap();
        kb
    }

    #[test]
    fn level_one_single_sentence() {
        let kb = store(&[("PlanX", 12, 28.20, 0), ("PlanY", 18, 40.35, 3)], 0.4);
        let n = retrieve_pair(&kb, "PlanX", "PlanY", Specificity::ONE, &TimeInterval::ALWAYS).unwrap();
        assert_eq!(
            n.text,
            "'Plan X' is cheaper plan than and is shorter plan than and is faster plan than and is better plan than 'Plan Y'."
        );
        assert_eq!(n.tuples.len(), 4);
        assert!(text_is_grounded(&n));
    }

    #[test]
    fn fallback_for_identical_plans() {
        let kb = store(&[("PlanA", 12, 30.0, 1), ("PlanB", 12, 30.0, 1)], 0.5);
        let n = retrieve_pair(&kb, "PlanA", "PlanB", Specificity::ONE, &TimeInterval::ALWAYS).unwrap();
        assert_eq!(n.text, "'Plan A' and 'Plan B' have no contrastive relations.");
        assert!(n.tuples.is_empty());
        assert!(text_is_grounded(&n));
        let n3 = retrieve_pair(&kb, "PlanA", "PlanB", Specificity::THREE, &TimeInterval::ALWAYS).unwrap();
        assert!(n3.text.starts_with(&n.text));
        assert!(text_is_grounded(&n3));
    }

    #[test]
    fn mixed_directions_render_two_sentences() {
        let kb = store(&[("A", 10, 30.0, 5), ("B", 12, 25.0, 5)], 0.5);
        let n = retrieve_pair(&kb, "A", "B", Specificity::ONE, &TimeInterval::ALWAYS).unwrap();
        assert_eq!(n.text, "'A' is shorter plan than 'B'. 'B' is faster plan than 'A'.");
    }

    #[test]
    fn levels_nest() {
        let kb = store(&[("p1", 12, 28.2, 0), ("p2", 14, 31.0, 1), ("p3", 13, 27.5, 2)], 0.68);
        for (a, b) in [("p1", "p2"), ("p1", "p3"), ("p2", "p3")] {
            let ns: Vec<Narrative> = Specificity::ALL
                .iter()
                .map(|&l| retrieve_pair(&kb, a, b, l, &TimeInterval::ALWAYS).unwrap())
                .collect();
            for w in ns.windows(2) {
                assert!(w[0].tuples.iter().all(|t| w[1].tuples.contains(t)));
                assert!(w[0].text.split_whitespace().count() <= w[1].text.split_whitespace().count());
            }
            for n in &ns {
                assert!(text_is_grounded(n), "{}", n.text);
            }
        }
    }

    #[test]
    fn errors() {
        let kb = store(&[("A", 10, 30.0, 5), ("B", 12, 25.0, 5)], 0.5);
        assert!(retrieve_pair(&kb, "A", "A", Specificity::ONE, &TimeInterval::ALWAYS).is_err());
        let mut bare = KnowledgeBase::new();
        ground_properties(
            &mut bare,
            &PlanProperties {
                plan_id: "A".into(),
                num_tasks: 1,
                makespan: 1.0,
                cost: 0,
            },
        )
        .unwrap();
        ground_properties(
            &mut bare,
            &PlanProperties {
                plan_id: "B".into(),
                num_tasks: 2,
                makespan: 1.0,
                cost: 0,
            },
        )
        .unwrap();
        assert!(retrieve_pair(&bare, "A", "B", Specificity::ONE, &TimeInterval::ALWAYS).is_err());
        assert!(narrate_all(&KnowledgeBase::new(), Specificity::ONE, &TimeInterval::ALWAYS).is_err());
        assert!(Specificity::new(0).is_err());
        assert!(Specificity::new(4).is_err());
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(parse_sentences("no quotes at all").is_err());
        assert!(parse_sentences("'a' is 'b' but").is_err());
        assert!(parse_sentences("'a' is 'b'; while 'c' is 'd'").is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let kb = store(&[("A", 10, 30.0, 5), ("B", 12, 25.0, 5), ("C", 9, 20.0, 1)], 0.5);
        let ns = narrate_all(&kb, Specificity::TWO, &TimeInterval::ALWAYS).unwrap();
        assert_eq!(ns.len(), 3);
        assert_eq!(ns[0].pair, ("A".to_string(), "B".to_string()));
        let text = to_jsonl(&ns).unwrap();
        let back = from_jsonl(&text).unwrap();
        assert_eq!(back, ns.iter().map(Narrative::record).collect::<Vec<_>>());
        assert!(to_plain_text(&ns).contains("[A__B L2]"));
    }
}
