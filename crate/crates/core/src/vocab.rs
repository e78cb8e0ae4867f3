//! Fixed vocabulary shared by grounding, inference and narration.

use serde::{Deserialize, Serialize};

use crate::kstore::Term;

pub fn rdf_type() -> Term {
    Term::rdf("type")
}
pub fn plan_class() -> Term {
    Term::dul("Plan")
}
pub fn quality_class() -> Term {
    Term::dul("Quality")
}
pub fn is_quality_of() -> Term {
    Term::dul("isQualityOf")
}
pub fn has_data_value() -> Term {
    Term::dul("hasDataValue")
}
/// Plan classification predicate.
pub fn is_classified_by() -> Term {
    Term::dul("isClassifiedBy")
}
/// Quality classification predicate, spelled as in the original rule.
pub fn is_classify_by() -> Term {
    Term::dul("isClassifyBy")
}
pub fn has_better_quality_value_than() -> Term {
    Term::ocra("hasBetterQualityValueThan")
}

pub fn concept(c: Concept) -> Term {
    Term::app(c.local()).expect("static concept")
}

/// The four classification concepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Concept {
    TypicalPlanQualityValue,
    AtypicalPlanQualityValue,
    TypicalPlan,
    AtypicalPlan,
}

impl Concept {
    pub fn local(self) -> &'static str {
        match self {
            Concept::TypicalPlanQualityValue => "TypicalPlanQualityValue",
            Concept::AtypicalPlanQualityValue => "AtypicalPlanQualityValue",
            Concept::TypicalPlan => "TypicalPlan",
            Concept::AtypicalPlan => "AtypicalPlan",
        }
    }
}

/// The three measured plan properties, in narration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyKind {
    Makespan,
    NumTasks,
    Cost,
}

impl PropertyKind {
    pub const ALL: [PropertyKind; 3] = [PropertyKind::Makespan, PropertyKind::NumTasks, PropertyKind::Cost];

    /// Suffix of the quality entity's local name.
    pub fn suffix(self) -> &'static str {
        match self {
            PropertyKind::Makespan => "makespan",
            PropertyKind::NumTasks => "number_of_tasks",
            PropertyKind::Cost => "cost",
        }
    }

    /// Class of the quality entity.
    pub fn class(self) -> Term {
        match self {
            PropertyKind::Makespan => Term::ocra("PlanMakespan"),
            PropertyKind::NumTasks => Term::ocra("PlanNumberOfTasks"),
            PropertyKind::Cost => Term::ocra("PlanCost"),
        }
    }

    /// Plan-to-quality attribution predicate.
    pub fn attribution(self) -> Term {
        match self {
            PropertyKind::Makespan => Term::ocra("hasMakespan"),
            PropertyKind::NumTasks => Term::ocra("hasNumberOfTasks"),
            PropertyKind::Cost => Term::ocra("hasCost"),
        }
    }

    /// `(winner predicate, inverse)`; lower values win for every property.
    pub fn comparison(self) -> (Term, Term) {
        match self {
            PropertyKind::Makespan => (Term::ocra("isFasterPlanThan"), Term::ocra("isSlowerPlanThan")),
            PropertyKind::NumTasks => (Term::ocra("isShorterPlanThan"), Term::ocra("isLongerPlanThan")),
            PropertyKind::Cost => (Term::ocra("isCheaperPlanThan"), Term::ocra("isMoreExpensivePlanThan")),
        }
    }

    pub fn from_class(t: &Term) -> Option<Self> {
        PropertyKind::ALL.into_iter().find(|k| &k.class() == t)
    }
}

pub fn better_plan() -> (Term, Term) {
    (Term::ocra("isBetterPlanThan"), Term::ocra("isWorsePlanThan"))
}

/// Plan-level comparison predicates in the order they are chained in text.
pub fn plan_comparisons_in_order() -> Vec<Term> {
    vec![
        Term::ocra("isCheaperPlanThan"),
        Term::ocra("isShorterPlanThan"),
        Term::ocra("isFasterPlanThan"),
        Term::ocra("isBetterPlanThan"),
        Term::ocra("isMoreExpensivePlanThan"),
        Term::ocra("isLongerPlanThan"),
        Term::ocra("isSlowerPlanThan"),
        Term::ocra("isWorsePlanThan"),
    ]
}

/// Human label for an instance local name: underscores become spaces and a
/// capital letter following a lowercase one starts a new word
/// (`PlanX_number_of_tasks` -> `Plan X number of tasks`).
pub fn instance_label(local: &str) -> String {
    let mut out = String::with_capacity(local.len() + 4);
    let mut prev: Option<char> = None;
    for c in local.chars() {
        if c == '_' {
            out.push(' ');
        } else {
            if c.is_uppercase() && prev.is_some_and(|p| p.is_lowercase()) {
                out.push(' ');
            }
            out.push(c);
        }
        prev = Some(c);
    }
    out
}

/// Rendering of a predicate in narrative text. Unknown predicates fall back to
/// camel-case splitting.
pub fn predicate_phrase(p: &Term) -> String {
    let fixed = match p.local.as_str() {
        "isCheaperPlanThan" => Some("is cheaper plan than"),
        "isMoreExpensivePlanThan" => Some("is more expensive plan than"),
        "isShorterPlanThan" => Some("is shorter plan than"),
        "isLongerPlanThan" => Some("is longer plan than"),
        "isFasterPlanThan" => Some("is faster plan than"),
        "isSlowerPlanThan" => Some("is slower plan than"),
        "isBetterPlanThan" => Some("is better plan than"),
        "isWorsePlanThan" => Some("is worse plan than"),
        "isClassifiedBy" | "isClassifyBy" => Some("is classified by"),
        "hasDataValue" => Some("has value"),
        "hasMakespan" => Some("has makespan"),
        "hasNumberOfTasks" => Some("has number of tasks"),
        "hasCost" => Some("has cost"),
        "hasBetterQualityValueThan" => Some("has better quality value than"),
        "isQualityOf" => Some("is quality of"),
        _ => None,
    };
    match fixed {
        Some(s) => s.to_string(),
        None => camel_split(&p.local),
    }
}

fn camel_split(s: &str) -> String {
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if c.is_uppercase() && i > 0 {
            out.push(' ');
        }
        out.extend(c.to_lowercase());
    }
    out
}
