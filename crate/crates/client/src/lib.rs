//! Blocking client for the plan-explanation service.
//!
//! Request and response bodies are the shared types in
//! `planexplain_core::api`.

use std::time::{Duration, Instant};

use planexplain_core::api::{
    AdvanceRequest, CreateRun, ErrorBody, FollowUpRequest, FollowUpResponse, Health, JobState,
    PairList, RunList, RunView,
};
use planexplain_core::pipeline::{PairView, Stage};
use planexplain_core::Specificity;
use reqwest::blocking::{Client as Http, RequestBuilder};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The service answered with an error body.
    #[error("{status}: {message}")]
    Api {
        status: StatusCode,
        kind: String,
        message: String,
    },
    #[error("cannot reach service: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("unexpected response: {0}")]
    Decode(String),
    #[error("timed out waiting for the {0} job")]
    Timeout(Stage),
}

impl ClientError {
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: Http,
}

impl Client {
    pub fn new(base_url: &str) -> Result<Client> {
        let http = Http::builder().timeout(Duration::from_secs(600)).build()?;
        Ok(Client {
            base: base_url.trim_end_matches('/').to_string(),
            http,
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn send<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<T> {
        let resp = req.send()?;
        let status = resp.status();
        let bytes = resp.bytes()?;
        if !status.is_success() {
            let (kind, message) = match serde_json::from_slice::<ErrorBody>(&bytes) {
                Ok(b) => (b.kind, b.error),
                Err(_) => ("http".to_string(), String::from_utf8_lossy(&bytes).into_owned()),
            };
            return Err(ClientError::Api { status, kind, message });
        }
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        self.send(self.http.get(self.url(path)))
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        self.send(self.http.post(self.url(path)).json(body))
    }

    pub fn health(&self) -> Result<Health> {
        self.get("/healthz")
    }

    pub fn schema(&self) -> Result<serde_json::Value> {
        self.get("/schema")
    }

    pub fn list_runs(&self) -> Result<RunList> {
        self.get("/runs")
    }

    pub fn create_run(&self, req: &CreateRun) -> Result<RunView> {
        self.post("/runs", req)
    }

    pub fn run(&self, id: &str) -> Result<RunView> {
        self.get(&format!("/runs/{id}"))
    }

    /// Requests a stage. Refinement may come back with a running job; see
    /// [`Client::wait_for_job`].
    pub fn advance(&self, id: &str, stage: Stage, params: serde_json::Value) -> Result<RunView> {
        self.post(&format!("/runs/{id}/advance"), &AdvanceRequest { stage, params })
    }

    /// Polls until the run's job has finished. `progress` sees `(done, total)`.
    pub fn wait_for_job(&self, id: &str, timeout: Duration, progress: &dyn Fn(usize, usize)) -> Result<RunView> {
        let start = Instant::now();
        loop {
            let view = self.run(id)?;
            let Some(job) = &view.job else { return Ok(view) };
            match job.state {
                JobState::Succeeded => return Ok(view),
                JobState::Failed => {
                    return Err(ClientError::Api {
                        status: StatusCode::BAD_GATEWAY,
                        kind: "backend".into(),
                        message: job.error.clone().unwrap_or_else(|| "job failed".into()),
                    })
                }
                JobState::Running => {
                    progress(job.done, job.total);
                    if start.elapsed() > timeout {
                        return Err(ClientError::Timeout(job.stage));
                    }
                    std::thread::sleep(Duration::from_millis(200));
                }
            }
        }
    }

    pub fn pairs(&self, id: &str) -> Result<PairList> {
        self.get(&format!("/runs/{id}/pairs"))
    }

    pub fn pair(&self, id: &str, pid: &str, level: Option<Specificity>) -> Result<PairView> {
        let mut path = format!("/runs/{id}/pairs/{pid}");
        if let Some(l) = level {
            path.push_str(&format!("?level={l}"));
        }
        self.get(&path)
    }

    pub fn follow_up(&self, id: &str, pid: &str, request: &str, level: Option<Specificity>) -> Result<FollowUpResponse> {
        let body = FollowUpRequest {
            request: request.to_string(),
            level,
        };
        self.post(&format!("/runs/{id}/pairs/{pid}/followup"), &body)
    }
}
