//! `planexplain`: command-line front end.
//!
//! Every command is a client of the HTTP service. With `--server` it talks
//! to a running instance; otherwise it starts one in-process on a loopback
//! port over the same data directory, so runs stay on disk between calls.

mod config;
mod repl;

use std::io::{IsTerminal, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use planexplain_client::{Client, ClientError};
use planexplain_core::api::{BackendChoice, CreateRun, GenerateRequest, RunView};
use planexplain_core::experiences::{generate_synthetic, load_experiences, save_experiences, GenConfig};
use planexplain_core::pipeline::Stage;
use planexplain_core::refine::{RemoteConfig, SHORTEN_REQUEST};
use planexplain_core::Specificity;
use planexplain_service::{serve, AppState, ServiceConfig};
use serde_json::json;

use crate::config::{parse_alpha, parse_specificity, remote_config, CliConfig, RemoteSection};

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 1, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    pub fn backend(message: impl Into<String>) -> Self {
        CliError { code: 3, message: message.into() }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        match e.status().map(|s| s.as_u16()) {
            Some(422) => CliError::usage(e.to_string()),
            Some(502) => CliError::backend(e.to_string()),
            Some(_) => CliError::data(e.to_string()),
            None => match e {
                ClientError::Decode(_) => CliError::data(e.to_string()),
                _ => CliError::backend(e.to_string()),
            },
        }
    }
}

#[derive(Parser)]
#[command(name = "planexplain", version, about = "Typicality, contrastive narratives and refined explanations for plan executions")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON configuration file; flags override its fields.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory holding one subdirectory per run [default: runs].
    #[arg(long, global = true, env = "PLANEXPLAIN_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Use a running service instead of an in-process one.
    #[arg(long, global = true, env = "PLANEXPLAIN_SERVER", value_name = "URL")]
    server: Option<String>,
    /// Refinement backend [default: deterministic].
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
    /// Chat server root for the remote backend.
    #[arg(long, global = true, value_name = "URL")]
    remote_url: Option<String>,
    #[arg(long, global = true, value_name = "NAME")]
    remote_model: Option<String>,
    /// Environment variable holding the remote bearer token.
    #[arg(long, global = true, value_name = "VAR")]
    token_env: Option<String>,
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Deterministic,
    Remote,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and ingest it as a new run.
    Generate {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 18)]
        n: usize,
        /// Run name [default: assigned].
        #[arg(long)]
        run: Option<String>,
        /// Also write the corpus as JSON.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Ingest an experiences JSON file as a new run.
    Ingest {
        file: PathBuf,
        #[arg(long)]
        run: Option<String>,
    },
    /// Compute the typicality intervals of each quality.
    Classify {
        #[arg(long)]
        run: Option<String>,
        /// HDI mass, strictly between 0 and 1 [default: 0.68].
        #[arg(long, value_parser = parse_alpha)]
        alpha: Option<f64>,
    },
    /// Label plans and derive pairwise comparisons.
    Infer {
        #[arg(long)]
        run: Option<String>,
    },
    /// Write the contrastive narrative of every pair.
    Narrate {
        #[arg(long)]
        run: Option<String>,
        /// Level 1, 2 or 3; repeatable [default: all].
        #[arg(long, value_parser = parse_specificity)]
        specificity: Vec<Specificity>,
    },
    /// Refine every narrative into an explanation.
    Explain {
        #[arg(long)]
        run: Option<String>,
        /// Concurrent backend calls.
        #[arg(long, default_value_t = 4)]
        in_flight: usize,
        /// Send a follow-up to every session after the first explanation
        /// [default text: "Make the explanation shorter"].
        #[arg(long, value_name = "TEXT", num_args = 0..=1, default_missing_value = SHORTEN_REQUEST)]
        follow_up: Option<String>,
    },
    /// Compare narratives and explanations and print the summary tables.
    Evaluate {
        #[arg(long)]
        run: Option<String>,
        /// Reference mean for the one-sample cosine test.
        #[arg(long)]
        mu0: Option<f64>,
    },
    /// Refine one pair's explanation interactively.
    Repl {
        pair: String,
        #[arg(long)]
        run: Option<String>,
        #[arg(long, value_parser = parse_specificity)]
        level: Option<Specificity>,
    },
    /// Show a run, or list runs.
    Status {
        #[arg(long)]
        run: Option<String>,
    },
    /// Run the HTTP service until interrupted.
    Serve {
        #[arg(long, env = "PLANEXPLAIN_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Allowed browser origin; repeatable [default: any].
        #[arg(long)]
        cors_origin: Vec<String>,
    },
}

/// Flags merged over the configuration file.
struct Settings {
    data_dir: PathBuf,
    backend: BackendChoice,
    remote: RemoteSection,
    file: CliConfig,
    server: Option<String>,
}

impl Settings {
    fn new(g: &Global) -> Result<Settings, CliError> {
        let file = match &g.config {
            Some(p) => CliConfig::load(p)?,
            None => CliConfig::default(),
        };
        let mut remote = file.remote.clone().unwrap_or_default();
        if g.remote_url.is_some() {
            remote.base_url = g.remote_url.clone();
        }
        if g.remote_model.is_some() {
            remote.model = g.remote_model.clone();
        }
        if g.token_env.is_some() {
            remote.token_env = g.token_env.clone();
        }
        let backend = match g.backend {
            Some(BackendArg::Deterministic) => BackendChoice::Deterministic,
            Some(BackendArg::Remote) => BackendChoice::Remote,
            None => file.backend.unwrap_or_default(),
        };
        Ok(Settings {
            data_dir: g.data_dir.clone().or(file.data_dir.clone()).unwrap_or_else(|| "runs".into()),
            backend,
            remote,
            server: g.server.clone().or(file.server.clone()),
            file,
        })
    }

    /// Remote settings when the remote backend is selected, or when
    /// `optional` and a base URL is configured.
    fn remote(&self, optional: bool) -> Result<Option<RemoteConfig>, CliError> {
        if self.backend == BackendChoice::Remote || (optional && self.remote.base_url.is_some()) {
            remote_config(&self.remote).map(Some)
        } else {
            Ok(None)
        }
    }

    fn service(&self, optional_remote: bool) -> Result<ServiceConfig, CliError> {
        let mut cfg = ServiceConfig::new(&self.data_dir);
        cfg.remote = self.remote(optional_remote)?;
        cfg.cors_origins = self.file.cors_origins.clone();
        Ok(cfg)
    }

    fn connect(&self, optional_remote: bool) -> Result<Client, CliError> {
        if let Some(url) = &self.server {
            return Ok(Client::new(url)?);
        }
        start_local(self.service(optional_remote)?)
    }
}

/// Starts the service on a loopback port in a background thread.
fn start_local(cfg: ServiceConfig) -> Result<Client, CliError> {
    let state = AppState::open(cfg).map_err(|e| CliError::data(format!("data directory: {e}")))?;
    let (tx, rx) = std::sync::mpsc::channel::<std::io::Result<SocketAddr>>();
    std::thread::spawn(move || {
        let rt = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
            Ok(rt) => rt,
            Err(e) => {
                let _ = tx.send(Err(e));
                return;
            }
        };
        rt.block_on(async move {
            match tokio::net::TcpListener::bind(("127.0.0.1", 0)).await {
                Ok(listener) => {
                    let _ = tx.send(listener.local_addr());
                    let _ = serve(listener, state, std::future::pending()).await;
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                }
            }
        });
    });
    let addr = rx
        .recv()
        .map_err(|_| CliError::backend("in-process service failed to start"))?
        .map_err(|e| CliError::backend(format!("in-process service: {e}")))?;
    Ok(Client::new(&format!("http://{addr}"))?)
}

/// The named run, or the only run in the data directory.
fn resolve_run(client: &Client, run: Option<String>) -> Result<String, CliError> {
    if let Some(r) = run {
        return Ok(r);
    }
    let runs = client.list_runs()?.runs;
    match runs.as_slice() {
        [only] => Ok(only.corpus_id.clone()),
        [] => Err(CliError::data("no runs yet; start one with `generate` or `ingest`")),
        _ => Err(CliError::usage(format!(
            "{} runs exist; choose one with --run",
            runs.len()
        ))),
    }
}

/// Writes to standard output; a closed pipe is not an error.
fn emit(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::data(e.to_string())),
        _ => Ok(()),
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<(), CliError> {
    let s = serde_json::to_string_pretty(v).map_err(|e| CliError::data(e.to_string()))?;
    emit(&format!("{s}\n"))
}

fn advance(client: &Client, id: &str, stage: Stage, params: serde_json::Value) -> Result<RunView, CliError> {
    let view = client.advance(id, stage, params)?;
    eprintln!("{id}: {stage}");
    Ok(view)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let s = Settings::new(&cli.global)?;
    match cli.command {
        Command::Generate { seed, n, run, out } => {
            let seed = seed
                .or(s.file.seed)
                .ok_or_else(|| CliError::usage("generate needs --seed (or `seed` in the config file)"))?;
            let client = s.connect(false)?;
            let req = match out {
                Some(path) => {
                    let corpus =
                        generate_synthetic(seed, n, &GenConfig::default()).map_err(|e| CliError::usage(e.to_string()))?;
                    save_experiences(&path, &corpus).map_err(|e| CliError::data(e.to_string()))?;
                    CreateRun {
                        corpus_id: run,
                        experiences: Some(corpus),
                        generate: None,
                    }
                }
                None => CreateRun {
                    corpus_id: run,
                    experiences: None,
                    generate: Some(GenerateRequest { seed, n, config: None }),
                },
            };
            let view = client.create_run(&req)?;
            eprintln!("{}: ingested {} plans", view.state.corpus_id, view.state.plans.len());
            emit(&format!("{}\n", view.state.corpus_id))?;
        }
        Command::Ingest { file, run } => {
            let corpus = load_experiences(&file).map_err(|e| CliError::data(format!("{}: {e}", file.display())))?;
            let client = s.connect(false)?;
            let view = client.create_run(&CreateRun {
                corpus_id: run,
                experiences: Some(corpus),
                generate: None,
            })?;
            eprintln!("{}: ingested {} plans", view.state.corpus_id, view.state.plans.len());
            emit(&format!("{}\n", view.state.corpus_id))?;
        }
        Command::Classify { run, alpha } => {
            let client = s.connect(false)?;
            let id = resolve_run(&client, run)?;
            let alpha = alpha.or(s.file.alpha).unwrap_or_else(planexplain_core::api::default_alpha);
            let view = advance(&client, &id, Stage::Classified, json!({ "alpha": alpha }))?;
            print_json(&view.intervals)?;
        }
        Command::Infer { run } => {
            let client = s.connect(false)?;
            let id = resolve_run(&client, run)?;
            let view = advance(&client, &id, Stage::Inferred, json!({}))?;
            print_json(&view.inference)?;
        }
        Command::Narrate { run, specificity } => {
            let client = s.connect(false)?;
            let id = resolve_run(&client, run)?;
            let mut levels = specificity;
            if levels.is_empty() {
                levels.extend(s.file.specificity);
            }
            let view = advance(&client, &id, Stage::Narrated, json!({ "levels": levels }))?;
            print_json(&view.narratives)?;
        }
        Command::Explain { run, in_flight, follow_up } => {
            let client = s.connect(false)?;
            let id = resolve_run(&client, run)?;
            let params = json!({
                "backend": s.backend,
                "in_flight": in_flight,
                "follow_up": follow_up,
            });
            let started = advance(&client, &id, Stage::Refined, params)?;
            let total = started.job.as_ref().map_or(0, |j| j.total);
            let last = std::cell::Cell::new(usize::MAX);
            let show = std::io::stderr().is_terminal();
            let view = client.wait_for_job(&id, Duration::from_secs(24 * 3600), &|done, total| {
                if show && done != last.replace(done) {
                    eprint!("\rrefined {done}/{total}");
                }
            })?;
            if show {
                eprintln!();
            }
            if view.state.stage != Stage::Refined {
                return Err(CliError::backend("refinement did not complete"));
            }
            print_json(&json!({ "run": id, "explanations": total }))?;
        }
        Command::Evaluate { run, mu0 } => {
            let mu0 = mu0
                .or(s.file.mu0)
                .ok_or_else(|| CliError::usage("evaluate needs --mu0 (or `mu0` in the config file)"))?;
            let client = s.connect(false)?;
            let id = resolve_run(&client, run)?;
            let view = advance(&client, &id, Stage::Evaluated, json!({ "mu0": mu0 }))?;
            let report = view.report.ok_or_else(|| CliError::data("service returned no report"))?;
            emit(&report.render_text())?;
        }
        Command::Repl { pair, run, level } => {
            let client = s.connect(true)?;
            let id = resolve_run(&client, run)?;
            let stdin = std::io::stdin();
            let interactive = stdin.is_terminal();
            repl::run(&client, &id, &pair, level, stdin.lock(), std::io::stdout(), interactive)?;
        }
        Command::Status { run } => {
            let client = s.connect(false)?;
            match run {
                Some(id) => print_json(&client.run(&id)?)?,
                None => {
                    let mut text = String::new();
                    for r in client.list_runs()?.runs {
                        text.push_str(&format!("{}\t{}\t{} plans\n", r.corpus_id, r.stage, r.plans.len()));
                    }
                    emit(&text)?;
                }
            }
        }
        Command::Serve { port, host, cors_origin } => {
            let mut cfg = s.service(true)?;
            if !cors_origin.is_empty() {
                cfg.cors_origins = cors_origin;
            }
            serve_forever(cfg, &host, port)?;
        }
    }
    Ok(())
}

fn serve_forever(cfg: ServiceConfig, host: &str, port: u16) -> Result<(), CliError> {
    let state = AppState::open(cfg).map_err(|e| CliError::data(format!("data directory: {e}")))?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::data(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port)).await.map_err(|e| {
            if e.kind() == std::io::ErrorKind::AddrInUse {
                CliError::data(format!("port {port} is already in use"))
            } else {
                CliError::data(format!("cannot listen on {host}:{port}: {e}"))
            }
        })?;
        let addr = listener.local_addr().map_err(|e| CliError::data(e.to_string()))?;
        eprintln!("listening on http://{addr}");
        let _ = std::io::stderr().flush();
        serve(listener, state, shutdown_signal())
            .await
            .map_err(|e| CliError::data(e.to_string()))
    })?;
    eprintln!("stopped");
    Ok(())
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = match signal(SignalKind::terminate()) {
            Ok(s) => s,
            Err(_) => return std::future::pending().await,
        };
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let default = if cli.global.verbose || matches!(cli.command, Command::Serve { .. }) {
        "info"
    } else {
        "warn"
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
