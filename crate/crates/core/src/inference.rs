//! Rule layer: pairwise quality/plan comparisons and the typical-plan rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiences::{plan_term, quality_term, read_properties};
use crate::kstore::{KnowledgeBase, Object, Term, Triple};
use crate::typicality::TypicalityLabel;
use crate::vocab::{self, Concept, PropertyKind};

/// Comparison triples for `a` vs `b` without touching the store. Lower values
/// win on every property; the winning plan is always the subject.
pub fn derive_comparisons(kb: &KnowledgeBase, a: &str, b: &str) -> Result<Vec<Triple>> {
    if a == b {
        return Err(Error::InvalidArgument(format!("plan `{a}` compared with itself")));
    }
    let pa = read_properties(kb, a)?;
    let pb = read_properties(kb, b)?;
    let (ta, tb) = (plan_term(a)?, plan_term(b)?);
    let mut out = Vec::new();
    let (mut a_wins, mut b_wins) = (0, 0);
    for kind in PropertyKind::ALL {
        let (va, vb) = (pa.value(kind), pb.value(kind));
        if va == vb {
            continue;
        }
        let (winner, loser, wq, lq) = if va < vb {
            a_wins += 1;
            (&ta, &tb, quality_term(a, kind)?, quality_term(b, kind)?)
        } else {
            b_wins += 1;
            (&tb, &ta, quality_term(b, kind)?, quality_term(a, kind)?)
        };
        out.push(Triple::always(wq, vocab::has_better_quality_value_than(), lq));
        out.push(Triple::always(winner.clone(), kind.comparison().0, loser.clone()));
    }
    let better = vocab::better_plan().0;
    if a_wins > 0 && b_wins == 0 {
        out.push(Triple::always(ta, better, tb));
    } else if b_wins > 0 && a_wins == 0 {
        out.push(Triple::always(tb, better, ta));
    }
    Ok(out)
}

pub fn compare_pair(kb: &mut KnowledgeBase, a: &str, b: &str) -> Result<Vec<Triple>> {
    let triples = derive_comparisons(kb, a, b)?;
    for t in &triples {
        kb.assert_triple(t.clone())?;
    }
    Ok(triples)
}

/// Qualities of a plan, following the rule's premises: typed as quality,
/// linked by `isQualityOf` to a plan typed as plan.
pub fn plan_qualities(kb: &KnowledgeBase, plan: &Term) -> Vec<Term> {
    if !kb.contains(&Triple::always(plan.clone(), vocab::rdf_type(), vocab::plan_class())) {
        return Vec::new();
    }
    kb.subjects(&vocab::is_quality_of(), plan.clone())
        .into_iter()
        .filter(|q| kb.contains(&Triple::always(q.clone(), vocab::rdf_type(), vocab::quality_class())))
        .collect()
}

/// Result of the typical-plan rule plus how many qualities it looked at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanVerdict {
    pub label: TypicalityLabel,
    pub inspected: usize,
}

/// Evaluates the rule without asserting. Stops at the first atypical quality.
pub fn evaluate_plan_rule(kb: &KnowledgeBase, plan: &Term) -> Result<PlanVerdict> {
    let qualities = plan_qualities(kb, plan);
    if qualities.is_empty() {
        return Err(Error::MissingKnowledge(format!("plan `{}` has no qualities", plan.local)));
    }
    let typical = Object::Term(vocab::concept(Concept::TypicalPlanQualityValue));
    let atypical = Object::Term(vocab::concept(Concept::AtypicalPlanQualityValue));
    let mut inspected = 0;
    for q in &qualities {
        inspected += 1;
        let labels = kb.objects(q, &vocab::is_classify_by());
        if labels.contains(&atypical) {
            return Ok(PlanVerdict {
                label: TypicalityLabel::Atypical,
                inspected,
            });
        }
        if !labels.contains(&typical) {
            return Err(Error::MissingKnowledge(format!(
                "quality `{}` has not been classified",
                q.local
            )));
        }
    }
    Ok(PlanVerdict {
        label: TypicalityLabel::Typical,
        inspected,
    })
}

pub fn classify_plan(kb: &mut KnowledgeBase, plan: &Term) -> Result<TypicalityLabel> {
    let verdict = evaluate_plan_rule(kb, plan)?;
    kb.assert_triple(Triple::always(
        plan.clone(),
        vocab::is_classified_by(),
        vocab::concept(verdict.label.plan_concept()),
    ))?;
    Ok(verdict.label)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceSummary {
    pub pairs_compared: usize,
    pub typical: usize,
    pub atypical: usize,
}

/// All unordered pairs `(plans[i], plans[j])`, `i < j`.
pub fn unordered_pairs<T: Clone>(items: &[T]) -> Vec<(T, T)> {
    let mut out = Vec::with_capacity(items.len() * items.len().saturating_sub(1) / 2);
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            out.push((items[i].clone(), items[j].clone()));
        }
    }
    out
}

pub fn run_all(kb: &mut KnowledgeBase, plans: &[String]) -> Result<InferenceSummary> {
    let pairs = unordered_pairs(plans);
    let derived: Vec<Vec<Triple>> = {
        let snapshot: &KnowledgeBase = kb;
        pairs
            .par_iter()
            .map(|(a, b)| derive_comparisons(snapshot, a, b))
            .collect::<Result<_>>()?
    };
    for t in derived.into_iter().flatten() {
        kb.assert_triple(t)?;
    }
    let mut summary = InferenceSummary {
        pairs_compared: pairs.len(),
        typical: 0,
        atypical: 0,
    };
    for p in plans {
        match classify_plan(kb, &plan_term(p)?)? {
            TypicalityLabel::Typical => summary.typical += 1,
            TypicalityLabel::Atypical => summary.atypical += 1,
        }
    }
    Ok(summary)
}

/// The label a plan was classified with, if the rule has run.
pub fn plan_label(kb: &KnowledgeBase, plan: &Term) -> Option<TypicalityLabel> {
    let labels = kb.objects(plan, &vocab::is_classified_by());
    if labels.contains(&Object::Term(vocab::concept(Concept::AtypicalPlan))) {
        Some(TypicalityLabel::Atypical)
    } else if labels.contains(&Object::Term(vocab::concept(Concept::TypicalPlan))) {
        Some(TypicalityLabel::Typical)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiences::{ground_properties, PlanProperties};
    use crate::kstore::{Pattern, TimeInterval};

    fn grounded(plans: &[(&str, u64, f64, u64)]) -> KnowledgeBase {
        let mut kb = KnowledgeBase::new();
        for &(id, n, m, c) in plans {
            ground_properties(
                &mut kb,
                &PlanProperties {
                    plan_id: id.into(),
                    num_tasks: n,
                    makespan: m,
                    cost: c,
                },
            )
            .unwrap();
        }
        kb
    }

    fn has(kb: &KnowledgeBase, s: &str, p: &str, o: &str) -> bool {
        kb.contains(&Triple::always(Term::app(s).unwrap(), Term::ocra(p), Term::app(o).unwrap()))
    }

    #[test]
    fn worked_pair_dominates() {
        let mut kb = grounded(&[("PlanX", 12, 28.20, 0), ("PlanY", 18, 40.35, 3)]);
        let asserted = compare_pair(&mut kb, "PlanX", "PlanY").unwrap();
        // three quality-level and three plan-level triples plus dominance
        assert_eq!(asserted.len(), 7);
        for p in ["isCheaperPlanThan", "isShorterPlanThan", "isFasterPlanThan", "isBetterPlanThan"] {
            assert!(has(&kb, "PlanX", p, "PlanY"), "{p}");
        }
        assert!(kb.contains(&Triple::always(
            Term::app("PlanX_cost").unwrap(),
            vocab::has_better_quality_value_than(),
            Term::app("PlanY_cost").unwrap()
        )));
    }

    #[test]
    fn identical_vectors_assert_nothing() {
        let mut kb = grounded(&[("A", 12, 30.0, 1), ("B", 12, 30.0, 1)]);
        let before = kb.len();
        assert!(compare_pair(&mut kb, "A", "B").unwrap().is_empty());
        assert_eq!(kb.len(), before);
    }

    #[test]
    fn mixed_outcome_has_no_better_plan() {
        let mut kb = grounded(&[("A", 10, 30.0, 5), ("B", 12, 25.0, 5)]);
        compare_pair(&mut kb, "A", "B").unwrap();
        assert!(has(&kb, "A", "isShorterPlanThan", "B"));
        assert!(has(&kb, "B", "isFasterPlanThan", "A"));
        assert!(!has(&kb, "A", "isBetterPlanThan", "B"));
        assert!(!has(&kb, "B", "isBetterPlanThan", "A"));
        assert!(!has(&kb, "A", "isCheaperPlanThan", "B"));
        assert!(!has(&kb, "B", "isCheaperPlanThan", "A"));
    }

    #[test]
    fn self_comparison_and_missing_quality() {
        let mut kb = grounded(&[("A", 10, 30.0, 5)]);
        assert!(compare_pair(&mut kb, "A", "A").is_err());
        assert!(compare_pair(&mut kb, "A", "ghost").is_err());
    }

    /// Store with one plan whose `labels.len()` qualities carry the given labels.
    fn labelled_plan(labels: &[TypicalityLabel]) -> (KnowledgeBase, Term) {
        let mut kb = KnowledgeBase::new();
        let d = Term::app("D").unwrap();
        kb.assert_triple(Triple::always(d.clone(), vocab::rdf_type(), vocab::plan_class())).unwrap();
        for (i, l) in labels.iter().enumerate() {
            let q = Term::app(format!("D_q{i}")).unwrap();
            kb.assert_triple(Triple::always(q.clone(), vocab::rdf_type(), vocab::quality_class())).unwrap();
            kb.assert_triple(Triple::always(q.clone(), vocab::is_quality_of(), d.clone())).unwrap();
            kb.assert_triple(Triple::always(q, vocab::is_classify_by(), vocab::concept(l.quality_concept())))
                .unwrap();
        }
        (kb, d)
    }

    #[test]
    fn rule_truth_table_three_qualities() {
        use TypicalityLabel::*;
        for mask in 0..8u32 {
            let labels: Vec<_> = (0..3).map(|i| if mask >> i & 1 == 1 { Atypical } else { Typical }).collect();
            let (mut kb, d) = labelled_plan(&labels);
            let got = classify_plan(&mut kb, &d).unwrap();
            assert_eq!(got == Typical, mask == 0, "{labels:?}");
            assert_eq!(plan_label(&kb, &d), Some(got));
        }
    }

    #[test]
    fn early_exit_counts() {
        use TypicalityLabel::*;
        let (kb, d) = labelled_plan(&[Atypical, Typical, Typical]);
        assert_eq!(evaluate_plan_rule(&kb, &d).unwrap().inspected, 1);
        let (kb, d) = labelled_plan(&[Typical, Typical, Typical]);
        assert_eq!(evaluate_plan_rule(&kb, &d).unwrap().inspected, 3);
    }

    #[test]
    fn plan_without_qualities_is_malformed() {
        let (mut kb, d) = labelled_plan(&[]);
        assert!(classify_plan(&mut kb, &d).is_err());
    }

    #[test]
    fn unclassified_quality_is_an_error() {
        let mut kb = grounded(&[("A", 10, 30.0, 5)]);
        assert!(classify_plan(&mut kb, &Term::app("A").unwrap()).is_err());
    }

    #[test]
    fn run_all_is_idempotent_and_partitions() {
        let props = [("A", 10, 30.0, 5), ("B", 12, 25.0, 5), ("C", 12, 25.0, 0), ("D", 9, 50.0, 2)];
        let mut kb = grounded(&props);
        let pp: Vec<PlanProperties> = props
            .iter()
            .map(|&(id, n, m, c)| PlanProperties {
                plan_id: id.into(),
                num_tasks: n,
                makespan: m,
                cost: c,
            })
            .collect();
        crate::typicality::classify_corpus(&mut kb, &pp, 0.5).unwrap();
        let ids: Vec<String> = props.iter().map(|p| p.0.to_string()).collect();
        let s1 = run_all(&mut kb, &ids).unwrap();
        let snapshot = kb.triples();
        let s2 = run_all(&mut kb, &ids).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(kb.triples(), snapshot);
        assert_eq!(s1.pairs_compared, 6);
        assert_eq!(s1.typical + s1.atypical, 4);

        // antisymmetry for every pair and predicate pair
        for (a, b) in unordered_pairs(&ids) {
            for kind in PropertyKind::ALL {
                let (win, inv) = kind.comparison();
                let (ta, tb) = (Term::app(&a).unwrap(), Term::app(&b).unwrap());
                let ab = kb.contains(&Triple::always(ta.clone(), win.clone(), tb.clone()));
                let ba = kb.contains(&Triple::always(tb.clone(), win.clone(), ta.clone()));
                assert!(!(ab && ba));
                assert!(kb
                    .query(&Pattern::any().p(inv), &TimeInterval::ALWAYS)
                    .is_empty());
            }
        }
    }

    #[test]
    fn pair_counts() {
        assert_eq!(unordered_pairs(&[1, 2]).len(), 1);
        assert_eq!(unordered_pairs(&(0..18).collect::<Vec<_>>()).len(), 153);
    }
}
