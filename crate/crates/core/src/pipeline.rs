//! Stage-by-stage execution over a run directory.
//!
//! A run directory holds one corpus and the artifacts of every completed
//! stage as flat files. Stages advance strictly in order and a completed
//! stage is never rerun; only follow-up requests append revisions to the
//! stored refinement sessions.
//!
//! ```text
//! state.json                       stage reached, parameters, artifact list
//! corpus.json, properties.json     ingested
//! store_ingested.nt                ingested
//! intervals.json, store_classified.nt
//! inference.json, store_inferred.nt
//! narratives_L{1,2,3}.jsonl        narrated
//! explanations.jsonl               refined
//! report.json, report.txt          evaluated
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalmetrics::{self, MetricsReport};
use crate::experiences::{
    extract_properties, ground_properties, grounded_plans, plan_term, validate_corpus, ExperienceRecord,
    PlanProperties,
};
use crate::inference::{self, unordered_pairs, InferenceSummary};
use crate::kstore::{KnowledgeBase, TimeInterval};
use crate::narrative::{self, pair_id, NarrativeRecord, Specificity};
use crate::refine::{self, Explanation, RefinementSession, RefinerBackend};
use crate::stats::{self, LevelRuns, Method, MethodRuns, PairMetrics, SummaryTable};
use crate::typicality::{self, HdiInterval};
use crate::vocab::PropertyKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingested,
    Classified,
    Inferred,
    Narrated,
    Refined,
    Evaluated,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingested,
        Stage::Classified,
        Stage::Inferred,
        Stage::Narrated,
        Stage::Refined,
        Stage::Evaluated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingested => "ingested",
            Stage::Classified => "classified",
            Stage::Inferred => "inferred",
            Stage::Narrated => "narrated",
            Stage::Refined => "refined",
            Stage::Evaluated => "evaluated",
        }
    }

    pub fn previous(self) -> Option<Stage> {
        let i = Stage::ALL.iter().position(|s| *s == self).expect("listed");
        i.checked_sub(1).map(|j| Stage::ALL[j])
    }

    pub fn next(self) -> Option<Stage> {
        let i = Stage::ALL.iter().position(|s| *s == self).expect("listed");
        Stage::ALL.get(i + 1).copied()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub corpus_id: String,
    pub stage: Stage,
    pub plans: Vec<String>,
    /// Files written by each completed stage, relative to the run directory.
    pub artifacts: BTreeMap<Stage, Vec<String>>,
    /// Parameters each completed stage ran with.
    pub params: BTreeMap<Stage, serde_json::Value>,
}

impl RunState {
    pub fn has(&self, stage: Stage) -> bool {
        self.stage >= stage
    }

    pub fn pair_count(&self) -> usize {
        self.plans.len() * self.plans.len().saturating_sub(1) / 2
    }
}

/// The standard follow-up request for batch interaction runs.
pub const DEFAULT_FOLLOW_UP: &str = refine::SHORTEN_REQUEST;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineParams {
    /// Maximum concurrent backend calls.
    #[serde(default = "default_in_flight")]
    pub in_flight: usize,
    /// Follow-up sent to every session after revision 0; `None` skips it.
    #[serde(default)]
    pub follow_up: Option<String>,
}

fn default_in_flight() -> usize {
    4
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            in_flight: default_in_flight(),
            follow_up: None,
        }
    }
}

/// One line of `explanations.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub pair: (String, String),
    pub session: RefinementSession,
}

impl SessionRecord {
    pub fn pair_id(&self) -> String {
        pair_id(&self.pair.0, &self.pair.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub pair_id: String,
    pub specificity: Specificity,
    pub baseline: PairMetrics,
    pub refined: PairMetrics,
    pub interactive: Option<PairMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mu0: f64,
    pub pairs: Vec<PairReport>,
    /// Baseline narratives against first explanations.
    pub refinement: SummaryTable,
    /// First explanations against their follow-up revision, when every
    /// session has one.
    pub interaction: Option<SummaryTable>,
}

impl EvaluationReport {
    pub fn render_text(&self) -> String {
        let mut out = String::from("Narratives vs. refined explanations\n");
        out.push_str(&self.refinement.render_text());
        if let Some(t) = &self.interaction {
            out.push_str("\nRefined vs. interactive (follow-up) explanations\n");
            out.push_str(&t.render_text());
        }
        out
    }
}

/// Everything known about one pair at one specificity level. Fields of
/// stages that have not run are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairView {
    pub pair_id: String,
    pub plans: (String, String),
    pub labels: (Option<String>, Option<String>),
    pub level: Specificity,
    pub narrative: Option<String>,
    pub explanation: Option<Explanation>,
    pub metrics: Option<MetricsReport>,
    pub session: Option<RefinementSession>,
}

/// Writes through a temporary file so readers never see partial content.
fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn narratives_file(level: Specificity) -> String {
    format!("narratives_L{level}.jsonl")
}

const STATE: &str = "state.json";
const EXPLANATIONS: &str = "explanations.jsonl";

pub fn valid_run_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !id.starts_with('.')
}

/// An opened run directory.
#[derive(Debug, Clone)]
pub struct Run {
    dir: PathBuf,
    state: RunState,
}

impl Run {
    /// Validates `corpus`, grounds it and persists the run at `ingested`.
    /// Fails if `dir` already holds a run.
    pub fn create(dir: &Path, corpus_id: &str, corpus: &[ExperienceRecord]) -> Result<Run> {
        if !valid_run_id(corpus_id) {
            return Err(Error::InvalidArgument(format!("invalid run id `{corpus_id}`")));
        }
        validate_corpus(corpus)?;
        if corpus.is_empty() {
            return Err(Error::InvalidArgument("corpus has no plans".into()));
        }
        if dir.join(STATE).exists() {
            return Err(Error::Stage(format!("run `{corpus_id}` already exists")));
        }
        let props = corpus.iter().map(extract_properties).collect::<Result<Vec<_>>>()?;
        let mut kb = KnowledgeBase::new();
        for p in &props {
            ground_properties(&mut kb, p)?;
        }
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("corpus.json"), &to_json(&corpus)?)?;
        write_atomic(&dir.join("properties.json"), &to_json(&props)?)?;
        write_atomic(&dir.join("store_ingested.nt"), &kb.export())?;
        let mut run = Run {
            dir: dir.to_path_buf(),
            state: RunState {
                corpus_id: corpus_id.to_string(),
                stage: Stage::Ingested,
                plans: grounded_plans(&kb),
                artifacts: BTreeMap::new(),
                params: BTreeMap::new(),
            },
        };
        run.complete(
            Stage::Ingested,
            &["corpus.json", "properties.json", "store_ingested.nt"],
            serde_json::json!({ "plans": props.len() }),
        )?;
        Ok(run)
    }

    pub fn open(dir: &Path) -> Result<Run> {
        let text = std::fs::read_to_string(dir.join(STATE)).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingKnowledge(format!("no run at {}", dir.display()))
            } else {
                Error::Io(e)
            }
        })?;
        Ok(Run {
            dir: dir.to_path_buf(),
            state: serde_json::from_str(&text)?,
        })
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn complete(&mut self, stage: Stage, files: &[&str], params: serde_json::Value) -> Result<()> {
        self.state.stage = stage;
        self.state
            .artifacts
            .insert(stage, files.iter().map(|f| f.to_string()).collect());
        self.state.params.insert(stage, params);
        write_atomic(&self.dir.join(STATE), &to_json(&self.state)?)
    }

    /// Errors unless `stage` is the next one to run.
    pub fn check_next(&self, stage: Stage) -> Result<()> {
        if stage.previous() != Some(self.state.stage) {
            let why = if self.state.stage >= stage {
                format!("stage `{stage}` already completed")
            } else {
                format!(
                    "stage `{stage}` needs `{}` first (run is at `{}`)",
                    stage.previous().map_or("", Stage::name),
                    self.state.stage
                )
            };
            return Err(Error::Stage(why));
        }
        Ok(())
    }

    fn require(&self, stage: Stage) -> Result<()> {
        if !self.state.has(stage) {
            return Err(Error::Stage(format!(
                "run `{}` has not reached `{stage}` (at `{}`)",
                self.state.corpus_id, self.state.stage
            )));
        }
        Ok(())
    }

    fn read(&self, file: &str) -> Result<String> {
        Ok(std::fs::read_to_string(self.dir.join(file))?)
    }

    pub fn corpus(&self) -> Result<Vec<ExperienceRecord>> {
        Ok(serde_json::from_str(&self.read("corpus.json")?)?)
    }

    pub fn properties(&self) -> Result<Vec<PlanProperties>> {
        Ok(serde_json::from_str(&self.read("properties.json")?)?)
    }

    /// The store as left by the latest completed store-writing stage.
    pub fn store(&self) -> Result<KnowledgeBase> {
        let stage = [Stage::Inferred, Stage::Classified, Stage::Ingested]
            .into_iter()
            .find(|s| self.state.has(*s))
            .expect("ingested always completed");
        KnowledgeBase::import(&self.read(&format!("store_{stage}.nt"))?)
    }

    pub fn intervals(&self) -> Result<Option<BTreeMap<PropertyKind, HdiInterval>>> {
        if !self.state.has(Stage::Classified) {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&self.read("intervals.json")?)?))
    }

    pub fn inference(&self) -> Result<Option<InferenceSummary>> {
        if !self.state.has(Stage::Inferred) {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&self.read("inference.json")?)?))
    }

    pub fn classify(&mut self, alpha: f64) -> Result<BTreeMap<PropertyKind, HdiInterval>> {
        self.check_next(Stage::Classified)?;
        typicality::check_alpha(alpha)?;
        let mut kb = self.store()?;
        let intervals = typicality::classify_corpus(&mut kb, &self.properties()?, alpha)?;
        write_atomic(&self.dir.join("intervals.json"), &to_json(&intervals)?)?;
        write_atomic(&self.dir.join("store_classified.nt"), &kb.export())?;
        self.complete(
            Stage::Classified,
            &["intervals.json", "store_classified.nt"],
            serde_json::json!({ "alpha": alpha }),
        )?;
        Ok(intervals)
    }

    pub fn infer(&mut self) -> Result<InferenceSummary> {
        self.check_next(Stage::Inferred)?;
        let mut kb = self.store()?;
        let summary = inference::run_all(&mut kb, &self.state.plans)?;
        write_atomic(&self.dir.join("inference.json"), &to_json(&summary)?)?;
        write_atomic(&self.dir.join("store_inferred.nt"), &kb.export())?;
        self.complete(
            Stage::Inferred,
            &["inference.json", "store_inferred.nt"],
            serde_json::json!({}),
        )?;
        Ok(summary)
    }

    /// Narrates every pair at each requested level (all three when empty).
    pub fn narrate(&mut self, levels: &[Specificity]) -> Result<usize> {
        self.check_next(Stage::Narrated)?;
        let mut levels: Vec<Specificity> = if levels.is_empty() {
            Specificity::ALL.to_vec()
        } else {
            levels.to_vec()
        };
        levels.sort();
        levels.dedup();
        let kb = self.store()?;
        let mut files = Vec::new();
        let mut total = 0;
        for &level in &levels {
            let narratives = narrative::narrate_all(&kb, level, &TimeInterval::ALWAYS)?;
            total += narratives.len();
            let file = narratives_file(level);
            write_atomic(&self.dir.join(&file), &narrative::to_jsonl(&narratives)?)?;
            files.push(file);
        }
        let files: Vec<&str> = files.iter().map(String::as_str).collect();
        self.complete(
            Stage::Narrated,
            &files,
            serde_json::json!({ "levels": levels.iter().map(|l| l.level()).collect::<Vec<_>>() }),
        )?;
        Ok(total)
    }

    pub fn levels(&self) -> Vec<Specificity> {
        self.state
            .params
            .get(&Stage::Narrated)
            .and_then(|p| p.get("levels"))
            .and_then(|v| serde_json::from_value::<Vec<Specificity>>(v.clone()).ok())
            .unwrap_or_default()
    }

    pub fn narratives(&self, level: Specificity) -> Result<Vec<NarrativeRecord>> {
        self.require(Stage::Narrated)?;
        if !self.levels().contains(&level) {
            return Err(Error::MissingKnowledge(format!("level {level} was not narrated")));
        }
        narrative::from_jsonl(&self.read(&narratives_file(level))?)
    }

    /// Refines every narrative of every narrated level. With a follow-up
    /// configured, each session also receives it. `progress` is called with
    /// the number of finished narratives.
    pub fn refine(
        &mut self,
        backend: &dyn RefinerBackend,
        params: &RefineParams,
        progress: &(dyn Fn(usize, usize) + Sync),
    ) -> Result<usize> {
        self.check_next(Stage::Refined)?;
        if params.in_flight == 0 {
            return Err(Error::InvalidArgument("in_flight must be at least 1".into()));
        }
        if let Some(f) = &params.follow_up {
            if f.trim().is_empty() {
                return Err(Error::InvalidArgument("follow-up request is empty".into()));
            }
        }
        let mut narratives = Vec::new();
        for level in self.levels() {
            narratives.extend(self.narratives(level)?);
        }
        let total = narratives.len();
        let done = std::sync::atomic::AtomicUsize::new(0);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(params.in_flight)
            .build()
            .map_err(|e| Error::Backend(format!("worker pool: {e}")))?;
        let sessions: Vec<SessionRecord> = pool.install(|| {
            narratives
                .par_iter()
                .map(|n| {
                    let (_, mut session) = refine::refine(n, backend)?;
                    if let Some(request) = &params.follow_up {
                        refine::follow_up(&mut session, request, backend)?;
                    }
                    let finished = done.fetch_add(1, std::sync::atomic::Ordering::SeqCst) + 1;
                    progress(finished, total);
                    Ok(SessionRecord {
                        pair: n.pair.clone(),
                        session,
                    })
                })
                .collect::<Result<_>>()
        })?;
        self.write_sessions(&sessions)?;
        self.complete(
            Stage::Refined,
            &[EXPLANATIONS],
            serde_json::json!({
                "backend": backend.name(),
                "in_flight": params.in_flight,
                "follow_up": params.follow_up,
            }),
        )?;
        Ok(total)
    }

    fn write_sessions(&self, sessions: &[SessionRecord]) -> Result<()> {
        let mut out = String::new();
        for s in sessions {
            out.push_str(&serde_json::to_string(s)?);
            out.push('\n');
        }
        write_atomic(&self.dir.join(EXPLANATIONS), &out)
    }

    pub fn sessions(&self) -> Result<Vec<SessionRecord>> {
        self.require(Stage::Refined)?;
        self.read(EXPLANATIONS)?
            .lines()
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

    /// The stored session of `pair` at `level`.
    pub fn session(&self, pair: &str, level: Specificity) -> Result<SessionRecord> {
        self.sessions()?
            .into_iter()
            .find(|s| s.pair_id() == pair && s.session.level == level)
            .ok_or_else(|| Error::MissingKnowledge(format!("no explanation for `{pair}` at level {level}")))
    }

    /// Replaces a stored session with a longer version of itself.
    pub fn replace_session(&mut self, rec: SessionRecord) -> Result<()> {
        let mut sessions = self.sessions()?;
        let slot = sessions
            .iter_mut()
            .find(|s| s.pair == rec.pair && s.session.level == rec.session.level)
            .ok_or_else(|| Error::MissingKnowledge(format!("no explanation for `{}`", rec.pair_id())))?;
        let extends = rec.session.messages.len() > slot.session.messages.len()
            && rec.session.messages.starts_with(&slot.session.messages);
        if !extends {
            return Err(Error::Stage(format!(
                "session `{}` changed concurrently",
                rec.session.session_id
            )));
        }
        *slot = rec;
        self.write_sessions(&sessions)
    }

    /// Appends a revision to the stored session of `pair` at `level`.
    pub fn follow_up(
        &mut self,
        pair: &str,
        level: Specificity,
        request: &str,
        backend: &dyn RefinerBackend,
    ) -> Result<(Explanation, RefinementSession)> {
        if request.trim().is_empty() {
            return Err(Error::InvalidArgument("follow-up request is empty".into()));
        }
        let mut rec = self.session(pair, level)?;
        let explanation = refine::follow_up(&mut rec.session, request, backend)?;
        let session = rec.session.clone();
        self.replace_session(rec)?;
        Ok((explanation, session))
    }

    /// Most detailed narrated level, if any.
    pub fn top_level(&self) -> Option<Specificity> {
        self.levels().into_iter().max()
    }

    pub fn evaluate(&mut self, mu0: f64) -> Result<EvaluationReport> {
        self.check_next(Stage::Evaluated)?;
        if !mu0.is_finite() {
            return Err(Error::InvalidArgument("mu0 must be a finite number".into()));
        }
        let sessions = self.sessions()?;
        let mut pairs = Vec::new();
        let mut refinement = Vec::new();
        let mut interaction = Vec::new();
        let mut all_followed = true;
        for level in self.levels() {
            let narratives = self.narratives(level)?;
            let mut base = Vec::new();
            let mut refined = Vec::new();
            let mut inter = Vec::new();
            for n in &narratives {
                let pid = n.pair_id();
                let s = sessions
                    .iter()
                    .find(|s| s.pair_id() == pid && s.session.level == level)
                    .ok_or_else(|| Error::MissingKnowledge(format!("no explanation for `{pid}` at level {level}")))?;
                let revs = s.session.revisions();
                let b = PairMetrics {
                    pair_id: pid.clone(),
                    n_words: evalmetrics::word_count(&n.text) as f64,
                    fres: evalmetrics::fres(&n.text)?,
                    cosine: None,
                };
                let metrics = |e: &Explanation| -> Result<PairMetrics> {
                    let r = evalmetrics::report(&n.text, &e.text)?;
                    Ok(PairMetrics {
                        pair_id: pid.clone(),
                        n_words: r.n_words as f64,
                        fres: r.fres,
                        cosine: r.cosine,
                    })
                };
                let r0 = metrics(&revs[0])?;
                let r1 = match revs.get(1) {
                    Some(e) => Some(metrics(e)?),
                    None => {
                        all_followed = false;
                        None
                    }
                };
                base.push(b.clone());
                refined.push(r0.clone());
                if let Some(r) = &r1 {
                    inter.push(r.clone());
                }
                pairs.push(PairReport {
                    pair_id: pid,
                    specificity: level,
                    baseline: b,
                    refined: r0,
                    interactive: r1,
                });
            }
            refinement.push(LevelRuns {
                specificity: level,
                reference: MethodRuns {
                    method: Method::Baseline,
                    rows: base,
                },
                treatment: MethodRuns {
                    method: Method::Refined,
                    rows: refined.clone(),
                },
            });
            interaction.push(LevelRuns {
                specificity: level,
                reference: MethodRuns {
                    method: Method::Refined,
                    rows: refined,
                },
                treatment: MethodRuns {
                    method: Method::Interactive,
                    rows: inter,
                },
            });
        }
        let report = EvaluationReport {
            mu0,
            pairs,
            refinement: stats::build_summary(&refinement, mu0)?,
            interaction: if all_followed {
                Some(stats::build_summary(&interaction, mu0)?)
            } else {
                None
            },
        };
        write_atomic(&self.dir.join("report.json"), &to_json(&report)?)?;
        write_atomic(&self.dir.join("report.txt"), &report.render_text())?;
        self.complete(
            Stage::Evaluated,
            &["report.json", "report.txt"],
            serde_json::json!({ "mu0": mu0 }),
        )?;
        Ok(report)
    }

    pub fn report(&self) -> Result<Option<EvaluationReport>> {
        if !self.state.has(Stage::Evaluated) {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&self.read("report.json")?)?))
    }

    /// Typicality label of every plan once inference has run.
    pub fn plan_labels(&self) -> Result<BTreeMap<String, String>> {
        if !self.state.has(Stage::Inferred) {
            return Ok(BTreeMap::new());
        }
        let kb = self.store()?;
        let mut out = BTreeMap::new();
        for p in &self.state.plans {
            if let Some(l) = inference::plan_label(&kb, &plan_term(p)?) {
                out.insert(p.clone(), l.name().to_string());
            }
        }
        Ok(out)
    }

    /// Pair ids in lexicographic order.
    pub fn pair_ids(&self) -> Vec<String> {
        unordered_pairs(&self.state.plans)
            .into_iter()
            .map(|(a, b)| pair_id(&a, &b))
            .collect()
    }

    fn split_pair(&self, pid: &str) -> Result<(String, String)> {
        let unknown = || Error::MissingKnowledge(format!("unknown pair `{pid}`"));
        let (a, b) = pid.split_once("__").ok_or_else(unknown)?;
        let known = |p: &str| self.state.plans.iter().any(|x| x == p);
        if a >= b || !known(a) || !known(b) {
            return Err(unknown());
        }
        Ok((a.to_string(), b.to_string()))
    }

    /// Snapshot of one pair. `level` defaults to the most detailed narrated
    /// level (3 before narration).
    pub fn pair_view(&self, pid: &str, level: Option<Specificity>) -> Result<PairView> {
        let (a, b) = self.split_pair(pid)?;
        let level = level.unwrap_or_else(|| self.levels().into_iter().max().unwrap_or(Specificity::THREE));
        let labels = if self.state.has(Stage::Inferred) {
            let kb = self.store()?;
            let label = |p: &str| -> Result<Option<String>> {
                Ok(inference::plan_label(&kb, &plan_term(p)?).map(|l| l.name().to_string()))
            };
            (label(&a)?, label(&b)?)
        } else {
            (None, None)
        };
        let narrative = if self.state.has(Stage::Narrated) && self.levels().contains(&level) {
            self.narratives(level)?
                .into_iter()
                .find(|n| n.pair_id() == pid)
                .map(|n| n.text)
        } else {
            None
        };
        let session = if self.state.has(Stage::Refined) {
            self.sessions()?
                .into_iter()
                .find(|s| s.pair_id() == pid && s.session.level == level)
                .map(|s| s.session)
        } else {
            None
        };
        let explanation = session.as_ref().and_then(RefinementSession::latest);
        let metrics = match (&narrative, &explanation) {
            (Some(n), Some(e)) => Some(evalmetrics::report(n, &e.text)?),
            _ => None,
        };
        Ok(PairView {
            pair_id: pid.to_string(),
            plans: (a, b),
            labels,
            level,
            narrative,
            explanation,
            metrics,
            session,
        })
    }
}

/// Parameters of a complete pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub alpha: f64,
    pub levels: Vec<Specificity>,
    pub refine: RefineParams,
    pub mu0: f64,
}

/// Runs every stage from ingestion to evaluation.
pub fn run_pipeline(
    dir: &Path,
    corpus_id: &str,
    corpus: &[ExperienceRecord],
    params: &PipelineParams,
    backend: &dyn RefinerBackend,
) -> Result<(Run, EvaluationReport)> {
    let mut run = Run::create(dir, corpus_id, corpus)?;
    run.classify(params.alpha)?;
    run.infer()?;
    run.narrate(&params.levels)?;
    run.refine(backend, &params.refine, &|_, _| {})?;
    let report = run.evaluate(params.mu0)?;
    Ok((run, report))
}
