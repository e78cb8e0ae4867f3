//! Plan-execution experiences: loading, synthesis, property extraction and
//! grounding into the knowledge base.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kstore::{KnowledgeBase, Literal, Object, Term, Triple};
use crate::vocab::{self, PropertyKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Actor {
    Human,
    Robot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Inspect,
    ReInspect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEvent {
    pub actor: Actor,
    pub action: Action,
    pub item: String,
    pub start: f64,
    pub end: f64,
    pub doubted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperienceRecord {
    pub plan_id: String,
    pub events: Vec<TaskEvent>,
}

impl ExperienceRecord {
    /// Checks the record-level invariants. `index` is only used in messages.
    pub fn validate(&self, index: usize) -> Result<()> {
        let at = |field: &str| format!("record {index} (`{}`), {field}", self.plan_id);
        if self.plan_id.is_empty() {
            return Err(Error::Schema(format!("record {index}, plan_id: empty")));
        }
        if !self
            .plan_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        {
            return Err(Error::Schema(format!(
                "record {index}, plan_id: `{}` may only contain ASCII letters, digits, '_', '-' and '.'",
                self.plan_id
            )));
        }
        if self.events.is_empty() {
            return Err(Error::Schema(format!("{}: no events", at("events"))));
        }
        let mut prev_start = f64::NEG_INFINITY;
        for (i, e) in self.events.iter().enumerate() {
            if !e.start.is_finite() || !e.end.is_finite() {
                return Err(Error::Schema(format!("{}: non-finite time", at(&format!("events[{i}].start")))));
            }
            if e.start < 0.0 {
                return Err(Error::Schema(format!("{}: negative start {}", at(&format!("events[{i}].start")), e.start)));
            }
            if e.start > e.end {
                return Err(Error::Schema(format!(
                    "{}: end {} precedes start {}",
                    at(&format!("events[{i}].end")),
                    e.end,
                    e.start
                )));
            }
            if e.start < prev_start {
                return Err(Error::Schema(format!(
                    "{}: events not ordered by start time ({} after {})",
                    at(&format!("events[{i}].start")),
                    e.start,
                    prev_start
                )));
            }
            if e.doubted && e.actor != Actor::Robot {
                return Err(Error::Schema(format!(
                    "{}: only robot events can be doubted",
                    at(&format!("events[{i}].doubted"))
                )));
            }
            if e.item.is_empty() {
                return Err(Error::Schema(format!("{}: empty item", at(&format!("events[{i}].item")))));
            }
            prev_start = e.start;
        }
        Ok(())
    }
}

/// The three measured properties of one plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanProperties {
    pub plan_id: String,
    pub num_tasks: u64,
    pub makespan: f64,
    pub cost: u64,
}

impl PlanProperties {
    pub fn value(&self, kind: PropertyKind) -> f64 {
        match kind {
            PropertyKind::Makespan => self.makespan,
            PropertyKind::NumTasks => self.num_tasks as f64,
            PropertyKind::Cost => self.cost as f64,
        }
    }

    fn literal(&self, kind: PropertyKind) -> Literal {
        match kind {
            PropertyKind::Makespan => Literal::Float {
                value: self.makespan,
                decimals: 2,
            },
            PropertyKind::NumTasks => Literal::Integer(self.num_tasks as i64),
            PropertyKind::Cost => Literal::Integer(self.cost as i64),
        }
    }
}

pub fn extract_properties(rec: &ExperienceRecord) -> Result<PlanProperties> {
    if rec.events.is_empty() {
        return Err(Error::InvalidArgument(format!("plan `{}` has no events", rec.plan_id)));
    }
    let start = rec.events.iter().map(|e| e.start).fold(f64::INFINITY, f64::min);
    let end = rec.events.iter().map(|e| e.end).fold(f64::NEG_INFINITY, f64::max);
    let makespan = end - start;
    if makespan <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "plan `{}` has zero makespan",
            rec.plan_id
        )));
    }
    Ok(PlanProperties {
        plan_id: rec.plan_id.clone(),
        num_tasks: rec.events.len() as u64,
        makespan,
        cost: rec.events.iter().filter(|e| e.doubted).count() as u64,
    })
}

/// Parses and validates a corpus. Whitespace-only input is an empty corpus.
pub fn parse_experiences(text: &str) -> Result<Vec<ExperienceRecord>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let records: Vec<ExperienceRecord> = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    validate_corpus(&records)?;
    Ok(records)
}

pub fn validate_corpus(records: &[ExperienceRecord]) -> Result<()> {
    let mut seen = HashSet::new();
    for (i, r) in records.iter().enumerate() {
        r.validate(i)?;
        if !seen.insert(r.plan_id.as_str()) {
            return Err(Error::DuplicatePlan(r.plan_id.clone()));
        }
    }
    Ok(())
}

pub fn load_experiences(path: &Path) -> Result<Vec<ExperienceRecord>> {
    parse_experiences(&std::fs::read_to_string(path)?)
}

pub fn save_experiences(path: &Path, records: &[ExperienceRecord]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(records)?)?;
    Ok(())
}

/// Synthetic corpus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    /// Items on the tray; each is inspected once by its first assignee.
    pub tray_size: u32,
    /// Probability that a robot inspection ends in doubt.
    pub doubt_prob: f64,
    /// Bounds of the uniform robot inspection duration, seconds.
    pub duration_min: f64,
    pub duration_max: f64,
    /// Multiplier applied to human durations.
    pub human_speed_factor: f64,
    /// Probability that an item is assigned to the human up front.
    #[serde(default)]
    pub human_assign_prob: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            tray_size: 12,
            doubt_prob: 0.15,
            duration_min: 1.5,
            duration_max: 3.0,
            human_speed_factor: 1.5,
            human_assign_prob: 0.0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.tray_size == 0 {
            return bad("tray_size must be at least 1".into());
        }
        for (name, p) in [("doubt_prob", self.doubt_prob), ("human_assign_prob", self.human_assign_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(self.duration_min > 0.0 && self.duration_min.is_finite()) {
            return bad(format!("duration_min must be positive, got {}", self.duration_min));
        }
        if !(self.duration_max >= self.duration_min && self.duration_max.is_finite()) {
            return bad(format!(
                "duration_max must be finite and >= duration_min, got {}",
                self.duration_max
            ));
        }
        if !(self.human_speed_factor > 0.0 && self.human_speed_factor.is_finite()) {
            return bad(format!(
                "human_speed_factor must be positive, got {}",
                self.human_speed_factor
            ));
        }
        Ok(())
    }
}

fn centi(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Deterministic synthetic corpus. The robot works through its items in
/// order; every doubted inspection is followed by a human re-inspection of the
/// same item once the human is free.
pub fn generate_synthetic(seed: u64, n: usize, cfg: &GenConfig) -> Result<Vec<ExperienceRecord>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n.to_string().len().max(2);
    let mut records = Vec::with_capacity(n);
    for p in 0..n {
        let duration = |rng: &mut ChaCha8Rng| {
            if cfg.duration_max > cfg.duration_min {
                rng.gen_range(cfg.duration_min..=cfg.duration_max)
            } else {
                cfg.duration_min
            }
        };
        let mut events = Vec::new();
        let mut robot_clock = 0.0_f64;
        let mut human_clock = 0.0_f64;
        let mut pending_reinspect = Vec::new();
        for i in 0..cfg.tray_size {
            let item = format!("case_{:02}", i + 1);
            let to_human = cfg.human_assign_prob > 0.0 && rng.gen_bool(cfg.human_assign_prob);
            if to_human {
                let d = duration(&mut rng) * cfg.human_speed_factor;
                let start = centi(human_clock);
                let end = centi(human_clock + d).max(start);
                events.push(TaskEvent {
                    actor: Actor::Human,
                    action: Action::Inspect,
                    item,
                    start,
                    end,
                    doubted: false,
                });
                human_clock = end;
                continue;
            }
            let d = duration(&mut rng);
            let start = centi(robot_clock);
            let end = centi(robot_clock + d).max(start);
            let doubted = cfg.doubt_prob > 0.0 && rng.gen_bool(cfg.doubt_prob);
            events.push(TaskEvent {
                actor: Actor::Robot,
                action: Action::Inspect,
                item: item.clone(),
                start,
                end,
                doubted,
            });
            robot_clock = end;
            if doubted {
                pending_reinspect.push((item, end));
            }
        }
        for (item, ready) in pending_reinspect {
            let d = duration(&mut rng) * cfg.human_speed_factor;
            let start = centi(human_clock.max(ready));
            let end = centi(start + d).max(start);
            events.push(TaskEvent {
                actor: Actor::Human,
                action: Action::ReInspect,
                item,
                start,
                end,
                doubted: false,
            });
            human_clock = end;
        }
        events.sort_by(|a, b| a.start.total_cmp(&b.start));
        records.push(ExperienceRecord {
            plan_id: format!("plan_{:0width$}", p + 1),
            events,
        });
    }
    Ok(records)
}

pub fn plan_term(plan_id: &str) -> Result<Term> {
    Term::app(plan_id)
}

pub fn quality_term(plan_id: &str, kind: PropertyKind) -> Result<Term> {
    Term::app(format!("{plan_id}_{}", kind.suffix()))
}

/// Asserts the plan, its three qualities and their values.
pub fn ground_properties(kb: &mut KnowledgeBase, p: &PlanProperties) -> Result<()> {
    let plan = plan_term(&p.plan_id)?;
    // Reject conflicting values before writing anything.
    for kind in PropertyKind::ALL {
        let q = quality_term(&p.plan_id, kind)?;
        let existing = kb.objects(&q, &vocab::has_data_value());
        let lit = Object::Literal(p.literal(kind));
        if existing.iter().any(|o| o != &lit) {
            return Err(Error::Regrounding(p.plan_id.clone()));
        }
    }
    kb.assert_triple(Triple::always(plan.clone(), vocab::rdf_type(), vocab::plan_class()))?;
    for kind in PropertyKind::ALL {
        let q = quality_term(&p.plan_id, kind)?;
        kb.assert_triple(Triple::always(q.clone(), vocab::rdf_type(), vocab::quality_class()))?;
        kb.assert_triple(Triple::always(q.clone(), vocab::rdf_type(), kind.class()))?;
        kb.assert_triple(Triple::always(q.clone(), vocab::is_quality_of(), plan.clone()))?;
        kb.assert_triple(Triple::always(plan.clone(), kind.attribution(), q.clone()))?;
        kb.assert_triple(Triple::always(q, vocab::has_data_value(), p.literal(kind)))?;
    }
    Ok(())
}

/// Reads a plan's properties back from the store.
pub fn read_properties(kb: &KnowledgeBase, plan_id: &str) -> Result<PlanProperties> {
    let mut vals = [0.0; 3];
    for (slot, kind) in PropertyKind::ALL.into_iter().enumerate() {
        let q = quality_term(plan_id, kind)?;
        let v = kb
            .objects(&q, &vocab::has_data_value())
            .into_iter()
            .find_map(|o| o.as_literal().and_then(Literal::as_f64))
            .ok_or_else(|| Error::MissingKnowledge(format!("no {} value for plan `{plan_id}`", kind.suffix())))?;
        vals[slot] = v;
    }
    Ok(PlanProperties {
        plan_id: plan_id.to_string(),
        makespan: vals[0],
        num_tasks: vals[1] as u64,
        cost: vals[2] as u64,
    })
}

/// Plan ids known to the store, sorted.
pub fn grounded_plans(kb: &KnowledgeBase) -> Vec<String> {
    kb.subjects(&vocab::rdf_type(), vocab::plan_class())
        .into_iter()
        .map(|t| t.local)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kstore::{Pattern, TimeInterval};

    fn ev(actor: Actor, action: Action, item: &str, start: f64, end: f64, doubted: bool) -> TaskEvent {
        TaskEvent {
            actor,
            action,
            item: item.into(),
            start,
            end,
            doubted,
        }
    }

    fn robot_run(n: usize, span: f64) -> ExperienceRecord {
        let step = span / n as f64;
        let events = (0..n)
            .map(|i| {
                let s = i as f64 * step;
                let e = if i + 1 == n { span } else { (i + 1) as f64 * step };
                ev(Actor::Robot, Action::Inspect, &format!("c{i}"), s, e, false)
            })
            .collect();
        ExperienceRecord {
            plan_id: "PlanX".into(),
            events,
        }
    }

    #[test]
    fn worked_plan_x_properties() {
        let p = extract_properties(&robot_run(12, 28.20)).unwrap();
        assert_eq!((p.num_tasks, p.cost), (12, 0));
        assert!((p.makespan - 28.20).abs() < 1e-12);
    }

    #[test]
    fn doubts_and_reinspections() {
        let mut rec = robot_run(12, 30.0);
        for i in [2, 5, 9] {
            rec.events[i].doubted = true;
        }
        rec.events.push(ev(Actor::Human, Action::ReInspect, "c2", 31.0, 34.0, false));
        rec.events.push(ev(Actor::Human, Action::ReInspect, "c5", 34.0, 37.5, false));
        rec.events.push(ev(Actor::Human, Action::ReInspect, "c9", 37.5, 40.35, false));
        let p = extract_properties(&rec).unwrap();
        // oracle: direct count and max-min over the list
        assert_eq!(p.num_tasks, rec.events.len() as u64);
        assert_eq!(p.num_tasks, 15);
        assert_eq!(p.cost, 3);
        assert!((p.makespan - 40.35).abs() < 1e-12);
    }

    #[test]
    fn single_event() {
        let rec = ExperienceRecord {
            plan_id: "p".into(),
            events: vec![ev(Actor::Robot, Action::Inspect, "a", 0.0, 5.0, false)],
        };
        let p = extract_properties(&rec).unwrap();
        assert_eq!((p.num_tasks, p.makespan, p.cost), (1, 5.0, 0));
    }

    #[test]
    fn empty_events_rejected() {
        let rec = ExperienceRecord {
            plan_id: "p".into(),
            events: vec![],
        };
        assert!(extract_properties(&rec).is_err());
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        assert!(parse_experiences("").unwrap().is_empty());
        assert!(parse_experiences("  \n").unwrap().is_empty());
    }

    #[test]
    fn duplicate_plan_id_named() {
        let recs = generate_synthetic(1, 2, &GenConfig::default()).unwrap();
        let mut dup = recs.clone();
        dup[1].plan_id = dup[0].plan_id.clone();
        let err = parse_experiences(&serde_json::to_string(&dup).unwrap()).unwrap_err();
        assert!(err.to_string().contains(&dup[0].plan_id), "{err}");
    }

    #[test]
    fn missing_field_reports_line() {
        let text = "[\n {\"plan_id\": \"a\",\n  \"events\": [{\"actor\": \"robot\", \"action\": \"inspect\",\n \"item\": \"c\", \"start\": 0}]}]";
        match parse_experiences(text).unwrap_err() {
            Error::Parse { line, msg } => {
                assert!(msg.contains("end"), "{msg}");
                assert!(line >= 3);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn non_monotone_timestamps_rejected() {
        let rec = ExperienceRecord {
            plan_id: "p".into(),
            events: vec![
                ev(Actor::Robot, Action::Inspect, "a", 5.0, 6.0, false),
                ev(Actor::Robot, Action::Inspect, "b", 1.0, 2.0, false),
            ],
        };
        let err = parse_experiences(&serde_json::to_string(&[rec]).unwrap()).unwrap_err();
        assert!(err.to_string().contains("events[1].start"), "{err}");
        let rec = ExperienceRecord {
            plan_id: "p".into(),
            events: vec![ev(Actor::Robot, Action::Inspect, "a", 5.0, 4.0, false)],
        };
        let err = parse_experiences(&serde_json::to_string(&[rec]).unwrap()).unwrap_err();
        assert!(err.to_string().contains("events[0].end"), "{err}");
    }

    #[test]
    fn human_cannot_doubt() {
        let rec = ExperienceRecord {
            plan_id: "p".into(),
            events: vec![ev(Actor::Human, Action::Inspect, "a", 0.0, 1.0, true)],
        };
        assert!(rec.validate(0).is_err());
    }

    #[test]
    fn generator_is_deterministic_and_valid() {
        let a = generate_synthetic(42, 18, &GenConfig::default()).unwrap();
        let b = generate_synthetic(42, 18, &GenConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 18);
        validate_corpus(&a).unwrap();
    }

    #[test]
    fn generator_doubt_extremes() {
        let cfg = GenConfig {
            doubt_prob: 0.0,
            ..GenConfig::default()
        };
        for r in generate_synthetic(3, 10, &cfg).unwrap() {
            assert_eq!(extract_properties(&r).unwrap().cost, 0);
        }
        let cfg = GenConfig {
            doubt_prob: 1.0,
            ..GenConfig::default()
        };
        for r in generate_synthetic(3, 10, &cfg).unwrap() {
            let p = extract_properties(&r).unwrap();
            let robot = r.events.iter().filter(|e| e.actor == Actor::Robot).count() as u64;
            assert_eq!(p.cost, robot);
            assert_eq!(p.num_tasks, 2 * cfg.tray_size as u64);
        }
    }

    #[test]
    fn generator_rejects_bad_config() {
        let bad = [
            GenConfig { doubt_prob: 1.5, ..GenConfig::default() },
            GenConfig { duration_min: 0.0, ..GenConfig::default() },
            GenConfig { duration_max: 0.5, ..GenConfig::default() },
            GenConfig { human_speed_factor: -1.0, ..GenConfig::default() },
            GenConfig { tray_size: 0, ..GenConfig::default() },
        ];
        for cfg in bad {
            assert!(generate_synthetic(1, 3, &cfg).is_err(), "{cfg:?}");
        }
        assert!(generate_synthetic(1, 0, &GenConfig::default()).is_err());
    }

    #[test]
    fn grounding_worked_plan() {
        let mut kb = KnowledgeBase::new();
        let p = PlanProperties {
            plan_id: "PlanX".into(),
            num_tasks: 12,
            makespan: 28.20,
            cost: 0,
        };
        ground_properties(&mut kb, &p).unwrap();
        let q = quality_term("PlanX", PropertyKind::Makespan).unwrap();
        let vals = kb.objects(&q, &vocab::has_data_value());
        assert_eq!(vals.len(), 1);
        assert_eq!(vals[0].as_literal().unwrap().lexical(), "28.20");
        let of_plan = kb.query(
            &Pattern::any().p(vocab::is_quality_of()).o(plan_term("PlanX").unwrap()),
            &TimeInterval::ALWAYS,
        );
        assert_eq!(of_plan.len(), 3);
        assert_eq!(read_properties(&kb, "PlanX").unwrap(), p);

        // same values again: fine; different values: error
        ground_properties(&mut kb, &p).unwrap();
        let changed = PlanProperties { cost: 2, ..p };
        assert!(matches!(ground_properties(&mut kb, &changed), Err(Error::Regrounding(_))));
    }

    #[test]
    fn grounding_n_plans_gives_3n_qualities() {
        let mut kb = KnowledgeBase::new();
        let recs = generate_synthetic(5, 7, &GenConfig::default()).unwrap();
        for r in &recs {
            ground_properties(&mut kb, &extract_properties(r).unwrap()).unwrap();
        }
        let qualities = kb.subjects(&vocab::rdf_type(), vocab::quality_class());
        assert_eq!(qualities.len(), 21);
        assert_eq!(grounded_plans(&kb).len(), 7);
    }
}
