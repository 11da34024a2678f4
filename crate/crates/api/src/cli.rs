//! Command-line front end. Each subcommand builds one [`ApiRequest`] and
//! prints the response, so the CLI and the HTTP API cannot drift apart.
//!
//! The configuration file comes from `--config`, falling back to the
//! `RCM_CONFIG` environment variable. The audit log path comes from `--log`
//! (or `RCM_LOG`), then from `log_path` in the configuration, which is
//! resolved against the configuration file's directory.
//!
//! Exit codes: 0 success, 1 the service refused the request (the error code
//! is printed first), 2 usage error, 3 the service could not start.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rcm_core::config::ServiceConfig;
use rcm_core::domain::{RequirementDelta, RequirementId};
use rcm_core::engine::{Engine, FormulateRequest, SubmitRequest};
use rcm_core::persistence::FileStore;
use rcm_core::workflow::{TriageDecision, VoteDecision};
use serde_json::{json, Value};

use crate::router::{ApiRequest, ApiResponse, Service, TallyBody, TickBody, TriageBody, VoteBody};

pub const EXIT_OK: i32 = 0;
pub const EXIT_REFUSED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_STARTUP: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "rcm", about = "Requirement change management service")]
pub struct Cli {
    /// Service configuration (TOML).
    #[arg(long, env = "RCM_CONFIG", global = true)]
    pub config: Option<PathBuf>,
    /// Audit log file; overrides `log_path` from the configuration.
    #[arg(long, env = "RCM_LOG", global = true)]
    pub log: Option<PathBuf>,
    /// Acting actor id.
    #[arg(long, env = "RCM_ACTOR", global = true)]
    pub actor: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TriageArg {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VoteArg {
    Approve,
    Reject,
    Abstain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhaseArg {
    Preliminary,
    Final,
}

#[derive(Debug, Args)]
pub struct CrArg {
    /// Change request id, e.g. CR-0001.
    pub cr: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// POST /change-requests
    Submit {
        #[arg(long = "target", required = true)]
        targets: Vec<String>,
        #[arg(long)]
        severity: u8,
        #[arg(long, default_value = "")]
        description: String,
    },
    /// POST /change-requests/{id}/formulate
    Formulate {
        #[command(flatten)]
        cr: CrArg,
        /// JSON array of requirement deltas.
        #[arg(long)]
        deltas: String,
        #[arg(long = "goal")]
        goals: Vec<String>,
        #[arg(long = "measurement")]
        measurements: Vec<String>,
    },
    /// POST /change-requests/{id}/triage
    Triage {
        #[command(flatten)]
        cr: CrArg,
        #[arg(value_enum)]
        decision: TriageArg,
        #[arg(long, default_value = "")]
        rationale: String,
    },
    /// POST /change-requests/{id}/votes
    Vote {
        #[command(flatten)]
        cr: CrArg,
        #[arg(value_enum)]
        decision: VoteArg,
        #[arg(long, default_value = "")]
        rationale: String,
    },
    /// POST /change-requests/{id}/tally
    Tally {
        #[command(flatten)]
        cr: CrArg,
        #[arg(long)]
        quorum: Option<u32>,
    },
    /// GET /change-requests/{id}/impact
    Impact {
        #[command(flatten)]
        cr: CrArg,
        #[arg(long, value_enum, default_value = "preliminary")]
        phase: PhaseArg,
        /// Print the trace graph in DOT format instead of JSON.
        #[arg(long)]
        dot: bool,
    },
    /// POST /change-requests/{id}/implement
    Implement {
        #[command(flatten)]
        cr: CrArg,
    },
    /// POST /harness/tick
    Tick {
        #[arg(long, default_value_t = 1)]
        count: u64,
    },
    /// GET /sites
    Status,
    /// GET /change-requests
    List {
        #[arg(long)]
        state: Option<String>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// GET /change-requests/{id}/report
    Report {
        #[command(flatten)]
        cr: CrArg,
        /// Print the JSON document instead of the text rendering.
        #[arg(long)]
        json: bool,
    },
    /// GET /transition-table
    Transitions,
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

fn body(value: impl serde::Serialize) -> String {
    serde_json::to_string(&value).expect("request bodies serialize")
}

fn cr_path(cr: &CrArg, tail: &str) -> String {
    format!("/change-requests/{}/{tail}", cr.cr)
}

impl Command {
    /// The API request this subcommand stands for; `None` for `serve`.
    pub fn to_request(&self, actor: &str) -> Result<Option<ApiRequest>, String> {
        let post = |path: String, b: String| Some(ApiRequest::post(&path, actor, b));
        Ok(match self {
            Command::Submit { targets, severity, description } => {
                let targets = targets
                    .iter()
                    .map(|t| RequirementId::new(t.as_str()).map_err(|e| e.to_string()))
                    .collect::<Result<_, _>>()?;
                post(
                    "/change-requests".into(),
                    body(SubmitRequest { targets, description: description.clone(), severity: *severity }),
                )
            }
            Command::Formulate { cr, deltas, goals, measurements } => {
                let deltas: Vec<RequirementDelta> =
                    serde_json::from_str(deltas).map_err(|e| format!("--deltas is not a JSON delta list: {e}"))?;
                let req = FormulateRequest { deltas, goals: goals.clone(), measurements: measurements.clone() };
                post(cr_path(cr, "formulate"), body(req))
            }
            Command::Triage { cr, decision, rationale } => {
                let decision = match decision {
                    TriageArg::Accept => TriageDecision::Accept,
                    TriageArg::Reject => TriageDecision::Reject,
                };
                post(cr_path(cr, "triage"), body(TriageBody { decision, rationale: rationale.clone() }))
            }
            Command::Vote { cr, decision, rationale } => {
                let decision = match decision {
                    VoteArg::Approve => VoteDecision::Approve,
                    VoteArg::Reject => VoteDecision::Reject,
                    VoteArg::Abstain => VoteDecision::Abstain,
                };
                post(cr_path(cr, "votes"), body(VoteBody { decision, rationale: rationale.clone() }))
            }
            Command::Tally { cr, quorum } => post(cr_path(cr, "tally"), body(TallyBody { quorum: *quorum })),
            Command::Impact { cr, phase, dot } => {
                let phase = match phase {
                    PhaseArg::Preliminary => "preliminary",
                    PhaseArg::Final => "final",
                };
                let format = if *dot { "dot" } else { "json" };
                Some(ApiRequest::get(&format!("{}?phase={phase}&format={format}", cr_path(cr, "impact"))))
            }
            Command::Implement { cr } => post(cr_path(cr, "implement"), body(json!({}))),
            Command::Tick { count } => post("/harness/tick".into(), body(TickBody { count: *count })),
            Command::Status => Some(ApiRequest::get("/sites")),
            Command::List { state, limit } => {
                let mut query = Vec::new();
                query.extend(state.as_ref().map(|s| format!("state={s}")));
                query.extend(limit.map(|l| format!("limit={l}")));
                let path = if query.is_empty() {
                    "/change-requests".to_string()
                } else {
                    format!("/change-requests?{}", query.join("&"))
                };
                Some(ApiRequest::get(&path))
            }
            Command::Report { cr, json } => {
                let format = if *json { "json" } else { "text" };
                Some(ApiRequest::get(&format!("{}?format={format}", cr_path(cr, "report"))))
            }
            Command::Transitions => Some(ApiRequest::get("/transition-table")),
            Command::Serve { .. } => None,
        })
    }
}

/// Renders a response for the terminal: JSON pretty-printed, text verbatim,
/// errors as `CODE: message`.
pub fn render(response: &ApiResponse) -> String {
    if !response.is_success() {
        let value: Value = serde_json::from_str(&response.body).unwrap_or(Value::Null);
        let code = value.pointer("/error/code").and_then(Value::as_str).unwrap_or("Error");
        let message = value.pointer("/error/message").and_then(Value::as_str).unwrap_or_default();
        return format!("{code}: {message}\n");
    }
    let mut out = match serde_json::from_str::<Value>(&response.body) {
        Ok(value) if response.content_type == "application/json" => {
            serde_json::to_string_pretty(&value).expect("values serialize")
        }
        _ => response.body.clone(),
    };
    if !out.ends_with('\n') {
        out.push('\n');
    }
    out
}

fn load_config(cli: &Cli) -> Result<(ServiceConfig, PathBuf), (i32, String)> {
    let path = cli.config.as_ref().ok_or((EXIT_USAGE, "UsageError: --config or RCM_CONFIG is required\n".to_string()))?;
    let text = std::fs::read_to_string(path).map_err(|e| (EXIT_STARTUP, format!("StartupError: {}: {e}\n", path.display())))?;
    let config = ServiceConfig::from_toml(&text).map_err(|e| (EXIT_STARTUP, format!("InvalidConfig: {e}\n")))?;
    let log = match (&cli.log, &config.log_path) {
        (Some(log), _) => log.clone(),
        (None, Some(log)) => path.parent().unwrap_or(Path::new(".")).join(log),
        (None, None) => return Err((EXIT_USAGE, "UsageError: no audit log path; pass --log or set log_path\n".into())),
    };
    Ok((config, log))
}

fn open_service(cli: &Cli) -> Result<Service<FileStore>, (i32, String)> {
    let (config, log) = load_config(cli)?;
    let engine = Engine::open(&config.system, FileStore::new(log))
        .map_err(|e| (EXIT_STARTUP, format!("{}: {e}\n", e.code())))?;
    Ok(Service::new(engine))
}

/// Runs one invocation. `argv` includes the program name.
pub fn run<I, T>(argv: I) -> (i32, String)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            return (EXIT_OK, e.to_string());
        }
        Err(e) => return (EXIT_USAGE, format!("UsageError: {e}")),
    };
    let actor = cli.actor.clone().unwrap_or_default();
    let request = match cli.command.to_request(&actor) {
        Ok(request) => request,
        Err(e) => return (EXIT_USAGE, format!("UsageError: {e}\n")),
    };
    let mut service = match open_service(&cli) {
        Ok(service) => service,
        Err(failure) => return failure,
    };
    match (request, &cli.command) {
        (Some(request), _) => {
            let response = service.handle(&request);
            let code = if response.is_success() { EXIT_OK } else { EXIT_REFUSED };
            (code, render(&response))
        }
        (None, Command::Serve { addr }) => match crate::http::serve(service, *addr) {
            Ok(()) => (EXIT_OK, String::new()),
            Err(e) => (EXIT_STARTUP, format!("StartupError: {e}\n")),
        },
        (None, _) => unreachable!("only serve has no request"),
    }
}
