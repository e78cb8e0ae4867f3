//! Empirical highest density intervals and typical/atypical labelling.
//!
//! The interval for a sample of `n` values and mass `alpha` is the narrowest
//! run of `k = ceil(alpha * n)` consecutive order statistics. Ties on width go
//! to the leftmost run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiences::{quality_term, PlanProperties};
use crate::kstore::{KnowledgeBase, Triple};
use crate::vocab::{self, Concept, PropertyKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HdiInterval {
    pub lo: f64,
    pub hi: f64,
    pub k: usize,
    pub alpha: f64,
    pub property_kind: Option<PropertyKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypicalityLabel {
    Typical,
    Atypical,
}

impl TypicalityLabel {
    pub fn name(self) -> &'static str {
        match self {
            TypicalityLabel::Typical => "typical",
            TypicalityLabel::Atypical => "atypical",
        }
    }

    pub fn quality_concept(self) -> Concept {
        match self {
            TypicalityLabel::Typical => Concept::TypicalPlanQualityValue,
            TypicalityLabel::Atypical => Concept::AtypicalPlanQualityValue,
        }
    }

    pub fn plan_concept(self) -> Concept {
        match self {
            TypicalityLabel::Typical => Concept::TypicalPlan,
            TypicalityLabel::Atypical => Concept::AtypicalPlan,
        }
    }
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// `ceil(alpha * n)`, clamped to `[1, n]`. The product is nudged down by a
/// few ulps first so that e.g. `0.3 * 10` gives 3 and not 4.
pub fn window_size(alpha: f64, n: usize) -> usize {
    let exact = alpha * n as f64;
    ((exact - exact * 4.0 * f64::EPSILON).ceil() as usize).clamp(1, n)
}

pub fn empirical_hdi(sample: &[f64], alpha: f64) -> Result<HdiInterval> {
    check_alpha(alpha)?;
    if sample.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    if let Some(v) = sample.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite sample value {v}")));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(hdi_sorted(&sorted, alpha))
}

/// Sliding-window scan over an already sorted, validated sample.
fn hdi_sorted(sorted: &[f64], alpha: f64) -> HdiInterval {
    let n = sorted.len();
    let k = window_size(alpha, n);
    let mut best_width = f64::INFINITY;
    let mut best_start = 0;
    for i in 0..=(n - k) {
        let width = sorted[i + k - 1] - sorted[i];
        if width < best_width {
            best_width = width;
            best_start = i;
        }
    }
    HdiInterval {
        lo: sorted[best_start],
        hi: sorted[best_start + k - 1],
        k,
        alpha,
        property_kind: None,
    }
}

pub fn classify_value(iv: &HdiInterval, v: f64) -> Result<TypicalityLabel> {
    if !v.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite value {v}")));
    }
    Ok(if iv.lo <= v && v <= iv.hi {
        TypicalityLabel::Typical
    } else {
        TypicalityLabel::Atypical
    })
}

/// Computes one interval per property and classifies every quality of the
/// listed plans in the store.
pub fn classify_corpus(
    kb: &mut KnowledgeBase,
    props: &[PlanProperties],
    alpha: f64,
) -> Result<BTreeMap<PropertyKind, HdiInterval>> {
    check_alpha(alpha)?;
    if props.is_empty() {
        return Err(Error::InvalidArgument("no plans to classify".into()));
    }
    let mut intervals = BTreeMap::new();
    for kind in PropertyKind::ALL {
        let sample: Vec<f64> = props.iter().map(|p| p.value(kind)).collect();
        let mut iv = empirical_hdi(&sample, alpha)?;
        iv.property_kind = Some(kind);
        intervals.insert(kind, iv);
    }
    // Check every quality exists before mutating anything.
    let mut labelled = Vec::with_capacity(props.len() * 3);
    for p in props {
        for kind in PropertyKind::ALL {
            let q = quality_term(&p.plan_id, kind)?;
            if kb.objects(&q, &vocab::is_quality_of()).is_empty() {
                return Err(Error::MissingKnowledge(format!(
                    "plan `{}` has no grounded {} quality",
                    p.plan_id,
                    kind.suffix()
                )));
            }
            let label = classify_value(&intervals[&kind], p.value(kind))?;
            labelled.push((q, label));
        }
    }
    for (q, label) in labelled {
        kb.assert_triple(Triple::always(
            q,
            vocab::is_classify_by(),
            vocab::concept(label.quality_concept()),
        ))?;
    }
    Ok(intervals)
}
