//! Request and response bodies of the HTTP service, shared by the server and
//! its client.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::evalmetrics::MetricsReport;
use crate::experiences::{ExperienceRecord, GenConfig};
use crate::inference::InferenceSummary;
use crate::narrative::Specificity;
use crate::pipeline::{EvaluationReport, RunState, Stage};
use crate::refine::{Explanation, RefinementSession};
use crate::typicality::HdiInterval;
use crate::vocab::PropertyKind;

/// `POST /runs`: an uploaded corpus or a generator request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRun {
    /// Run name; assigned by the server when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiences: Option<Vec<ExperienceRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenerateRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub seed: u64,
    pub n: usize,
    #[serde(default)]
    pub config: Option<GenConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    #[default]
    Deterministic,
    Remote,
}

/// `POST /runs/{id}/advance`. Which `params` fields apply depends on the
/// stage: `alpha` (classified), `specificity` or `levels` (narrated),
/// `backend`, `in_flight`, `follow_up`, `wait` (refined), `mu0` (evaluated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvanceRequest {
    pub stage: Stage,
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyParams {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

pub fn default_alpha() -> f64 {
    0.68
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NarrateParams {
    #[serde(default)]
    pub specificity: Option<Specificity>,
    #[serde(default)]
    pub levels: Option<Vec<Specificity>>,
}

impl NarrateParams {
    /// Requested levels; empty means all three.
    pub fn levels(&self) -> Vec<Specificity> {
        let mut out = self.levels.clone().unwrap_or_default();
        out.extend(self.specificity);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineStageParams {
    #[serde(default)]
    pub backend: BackendChoice,
    #[serde(default = "default_in_flight")]
    pub in_flight: usize,
    /// Follow-up sent to each session after revision 0; `null` disables it.
    #[serde(default)]
    pub follow_up: Option<String>,
    /// Run in the request instead of as a background job.
    #[serde(default)]
    pub wait: bool,
}

fn default_in_flight() -> usize {
    4
}

impl Default for RefineStageParams {
    fn default() -> Self {
        RefineStageParams {
            backend: BackendChoice::default(),
            in_flight: default_in_flight(),
            follow_up: None,
            wait: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateParams {
    pub mu0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Running,
    Succeeded,
    Failed,
}

/// Progress of the background refinement job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub stage: Stage,
    pub state: JobState,
    pub done: usize,
    pub total: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// `GET /runs/{id}` and the answer to `create` and `advance`. Outputs of
/// stages that have not run are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunView {
    #[serde(flatten)]
    pub state: RunState,
    pub job: Option<JobStatus>,
    pub intervals: Option<BTreeMap<PropertyKind, HdiInterval>>,
    pub inference: Option<InferenceSummary>,
    /// Narratives per level.
    pub narratives: Option<BTreeMap<u8, usize>>,
    pub report: Option<EvaluationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunList {
    pub runs: Vec<RunState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub pair_id: String,
    pub plans: (String, String),
    pub labels: (Option<String>, Option<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairList {
    pub corpus_id: String,
    pub count: usize,
    pub pairs: Vec<PairSummary>,
}

/// `POST /runs/{id}/pairs/{pid}/followup`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowUpRequest {
    pub request: String,
    /// Defaults to the most detailed narrated level.
    #[serde(default)]
    pub level: Option<Specificity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowUpResponse {
    pub explanation: Explanation,
    pub metrics: MetricsReport,
    pub session: RefinementSession,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    /// Machine-readable category, e.g. `out_of_order`.
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}
