//! `obz` command-line interface.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use base64::Engine;
use clap::{Args, Parser, Subcommand};
use obz_core::extract_first_order;
use obz_core::xai_eval::TargetClass;
use serde::Serialize;
use serde_json::json;

use crate::client::{Client, ClientError, Window};
use crate::config::{ClientConfig, ClientOverrides, ConfigFile, ServerConfig};
use crate::error::StoreError;
use crate::records::Prediction;
use crate::storage::Storage;
use crate::wire::{IngestEnvelope, IngestResponse, RefUpload};

pub const BATCH_PARALLELISM: usize = 4;

#[derive(Debug, Parser)]
#[command(name = "obz", version, about = "Inference monitoring client and server")]
pub struct Cli {
    /// Server base URL
    #[arg(long, global = true, env = "OBZ_SERVER")]
    pub server: Option<String>,
    /// API token
    #[arg(long, global = true, env = "OBZ_TOKEN", hide_env_values = true)]
    pub token: Option<String>,
    /// Project id used by project-scoped commands
    #[arg(long, global = true, env = "OBZ_PROJECT")]
    pub project: Option<String>,
    /// Client config file (TOML)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print structured JSON instead of text
    #[arg(long, global = true)]
    pub json: bool,
    /// Request timeout in seconds
    #[arg(long, global = true)]
    pub timeout: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the token and list its projects
    Init,
    #[command(subcommand)]
    Project(ProjectCmd),
    #[command(subcommand)]
    Ref(RefCmd),
    /// Log one inference (or a directory of them with --batch)
    Log(LogArgs),
    /// Counts and feature series over a time window
    Summary {
        #[command(flatten)]
        window: WindowArgs,
        /// Comma-separated feature names
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<String>,
    },
    /// List logs
    Logs {
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value_t = 0)]
        offset: usize,
    },
    /// Download logs as CSV
    Export {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        window: WindowArgs,
    },
    /// Show one log with its reference comparison
    Get { log_id: String },
    /// Save a stored heatmap (OBZT) to a file
    Heatmap {
        log_id: String,
        method: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Delete a log and its blobs
    Delete { log_id: String },
    #[command(subcommand)]
    Admin(AdminCmd),
    /// Run the HTTP service
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum ProjectCmd {
    Create { name: String },
    List,
    Show { id: Option<String> },
}

#[derive(Debug, Subcommand)]
pub enum RefCmd {
    /// Upload a reference matrix; FOF when the header is the 16 canonical names
    Upload {
        csv: PathBuf,
        #[arg(long)]
        refit: bool,
        /// GMM component count (BIC selection when omitted)
        #[arg(long)]
        k: Option<usize>,
        /// PCA rank
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        variance_fraction: Option<f64>,
        #[arg(long)]
        quantile: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Args)]
pub struct LogArgs {
    /// Image file (.pgm or .obzt)
    #[arg(required_unless_present = "batch", conflicts_with = "batch")]
    pub image: Option<PathBuf>,
    /// Log every .pgm/.obzt file in a directory
    #[arg(long)]
    pub batch: Option<PathBuf>,
    /// method=file.obzt
    #[arg(long = "heatmap", value_parser = parse_heatmap)]
    pub heatmaps: Vec<(String, PathBuf)>,
    /// label:probability
    #[arg(long = "pred", value_parser = parse_pred)]
    pub preds: Vec<Prediction>,
    #[arg(long)]
    pub sample_id: Option<String>,
    /// Milliseconds since the Unix epoch
    #[arg(long)]
    pub timestamp: Option<i64>,
    #[arg(long)]
    pub target: Option<String>,
    /// Compute first-order features here and send them instead of the image
    #[arg(long)]
    pub local_features: bool,
    /// Store without scoring
    #[arg(long)]
    pub no_score: bool,
}

#[derive(Debug, Clone, Args)]
pub struct WindowArgs {
    /// Window start, ms since epoch (inclusive)
    #[arg(long)]
    pub from: Option<i64>,
    /// Window end, ms since epoch (exclusive)
    #[arg(long)]
    pub to: Option<i64>,
    #[arg(long)]
    pub outlier_only: bool,
}

impl WindowArgs {
    fn window(&self) -> Window {
        Window { from: self.from, to: self.to, outlier_only: self.outlier_only, ..Window::default() }
    }
}

#[derive(Debug, Subcommand)]
pub enum AdminCmd {
    #[command(subcommand)]
    Token(TokenCmd),
}

#[derive(Debug, Subcommand)]
pub enum TokenCmd {
    /// Issue a token for a user (created if new) directly in the data root
    New {
        user: String,
        #[arg(long, env = "OBZ_DATA_ROOT")]
        data_root: Option<PathBuf>,
    },
    /// Revoke a raw token directly in the data root
    Revoke {
        token: String,
        #[arg(long, env = "OBZ_DATA_ROOT")]
        data_root: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bind: Option<std::net::SocketAddr>,
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    #[arg(long)]
    pub quantile: Option<f64>,
}

fn parse_heatmap(s: &str) -> Result<(String, PathBuf), String> {
    let (m, f) = s.split_once('=').ok_or("expected method=file.obzt")?;
    if m.is_empty() || f.is_empty() {
        return Err("expected method=file.obzt".into());
    }
    Ok((m.to_owned(), PathBuf::from(f)))
}

fn parse_pred(s: &str) -> Result<Prediction, String> {
    let (label, p) = s.rsplit_once(':').ok_or("expected label:probability")?;
    let probability = p.parse().map_err(|e| format!("probability {p:?}: {e}"))?;
    Ok(Prediction { label: label.to_owned(), probability })
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{path}: {reason}")]
    File { path: PathBuf, reason: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Other(String),
}

impl From<crate::config::ConfigError> for CliError {
    fn from(e: crate::config::ConfigError) -> Self {
        match e {
            crate::config::ConfigError::File { path, reason } => CliError::File { path, reason },
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl CliError {
    fn file(path: &Path, reason: impl ToString) -> Self {
        CliError::File { path: path.to_owned(), reason: reason.to_string() }
    }

    /// 2 connection, 3 client-side HTTP error, 4 malformed input file, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Client(ClientError::Connect(_)) => 2,
            CliError::Client(ClientError::Api { status, .. }) if (400..500).contains(status) => 3,
            CliError::File { .. } => 4,
            _ => 1,
        }
    }

    pub fn error_line(&self) -> String {
        let (kind, status) = match self {
            CliError::Client(ClientError::Connect(_)) => ("connection", None),
            CliError::Client(ClientError::Api { status, error, .. }) => (error.as_str(), Some(*status)),
            CliError::Client(_) => ("client", None),
            CliError::File { .. } => ("malformed_file", None),
            CliError::Usage(_) => ("usage", None),
            CliError::Store(_) => ("store", None),
            CliError::Other(_) => ("error", None),
        };
        let message = match self {
            CliError::Client(ClientError::Api { message, .. }) => message.clone(),
            other => other.to_string(),
        };
        let mut v = json!({ "error": kind, "message": message, "exit_code": self.exit_code() });
        if let Some(s) = status {
            v["status"] = json!(s);
        }
        v.to_string()
    }
}

type CliResult<T = ()> = Result<T, CliError>;

struct Out {
    json: bool,
}

impl Out {
    fn emit<T: Serialize>(&self, value: &T, human: impl FnOnce() -> String) {
        let mut stdout = std::io::stdout().lock();
        if self.json {
            let _ = writeln!(stdout, "{}", serde_json::to_string(value).unwrap_or_default());
        } else {
            let text = human();
            let _ = write!(stdout, "{text}");
            if !text.ends_with('\n') {
                let _ = writeln!(stdout);
            }
        }
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.error_line());
            e.exit_code()
        }
    }
}

fn client_config(cli: &Cli) -> CliResult<ClientConfig> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    Ok(ClientConfig::resolve(
        ClientOverrides {
            server_url: cli.server.clone(),
            api_token: cli.token.clone(),
            project: cli.project.clone(),
            timeout_secs: cli.timeout,
        },
        file,
    )?)
}

fn dispatch(cli: Cli) -> CliResult {
    let out = Out { json: cli.json };
    match &cli.command {
        Command::Admin(AdminCmd::Token(cmd)) => return admin_token(cmd, &out),
        Command::Serve(args) => return serve(args),
        _ => {}
    }
    let config = client_config(&cli)?;
    let client = Client::new(&config)?;
    let project = || {
        config
            .default_project
            .clone()
            .ok_or_else(|| CliError::Usage("no project selected (use --project, OBZ_PROJECT or default_project)".into()))
    };
    match &cli.command {
        Command::Init => {
            let me = client.whoami()?;
            let projects = client.list_projects()?;
            out.emit(&json!({ "user_id": me.user_id, "projects": projects }), || {
                let mut s = format!("user={}\n", me.user_id);
                for p in &projects {
                    let _ = writeln!(s, "{}\t{}", p.project_id, p.name);
                }
                s
            });
        }
        Command::Project(ProjectCmd::Create { name }) => {
            let p = client.create_project(name)?;
            out.emit(&p, || format!("project_id={}", p.project_id));
        }
        Command::Project(ProjectCmd::List) => {
            let ps = client.list_projects()?;
            out.emit(&ps, || ps.iter().map(|p| format!("{}\t{}\n", p.project_id, p.name)).collect());
        }
        Command::Project(ProjectCmd::Show { id }) => {
            let id = match id {
                Some(id) => id.clone(),
                None => project()?,
            };
            let p = client.project(&id)?;
            out.emit(&p, || format!("{}\t{}\t{:?}", p.project_id, p.name, p.task_mode));
        }
        Command::Ref(RefCmd::Upload { csv, refit, k, rank, variance_fraction, quantile, seed }) => {
            let file = std::fs::File::open(csv).map_err(|e| CliError::file(csv, e))?;
            let table = crate::csvio::read_ref_table(file).map_err(|e| CliError::file(csv, e))?;
            let upload = RefUpload {
                kind: Some(table.inferred_kind()),
                feature_names: table.feature_names,
                rows: table.rows,
                k: *k,
                rank: *rank,
                variance_fraction: *variance_fraction,
                quantile: *quantile,
                seed: *seed,
            };
            let resp = client.upload_ref(&project()?, &upload, *refit)?;
            out.emit(&resp, || {
                resp.models
                    .iter()
                    .map(|m| {
                        let shape = match (m.k, m.r) {
                            (Some(k), _) => format!(" k={k}"),
                            (_, Some(r)) => format!(" r={r}"),
                            _ => String::new(),
                        };
                        format!(
                            "{} rows={} dim={}{shape} threshold={}\n",
                            m.detector.as_str(),
                            m.rows,
                            m.dim,
                            m.threshold
                        )
                    })
                    .collect()
            });
        }
        Command::Log(args) => log_cmd(&client, &project()?, args, &out)?,
        Command::Summary { window, metrics } => {
            let mut w = window.window();
            w.metrics = metrics.clone();
            let r = client.summary(&project()?, &w)?;
            out.emit(&r, || {
                let mut s = format!("total={} outliers={}\n", r.total_samples, r.outlier_count);
                for (name, points) in &r.series {
                    let vals: Vec<String> =
                        points.iter().map(|p| p.value.map_or("-".into(), |v| v.to_string())).collect();
                    let _ = writeln!(s, "{name}: {}", vals.join(" "));
                }
                s
            });
        }
        Command::Logs { window, limit, offset } => {
            let mut w = window.window();
            w.limit = *limit;
            w.offset = *offset;
            let page = client.list_logs(&project()?, &w)?;
            out.emit(&page, || {
                let mut s = format!("total={}\n", page.total);
                for l in &page.items {
                    let _ = writeln!(s, "{}\t{}\t{}\toutlier={}", l.log_id, l.timestamp.0, l.sample_id, l.is_outlier());
                }
                s
            });
        }
        Command::Export { out: path, window } => {
            let bytes = client.export_csv(&project()?, &window.window())?;
            std::fs::write(path, &bytes).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
            let rows = bytes.iter().filter(|&&b| b == b'\n').count().saturating_sub(1);
            out.emit(&json!({ "path": path, "rows": rows }), || format!("wrote {rows} rows to {}", path.display()));
        }
        Command::Get { log_id } => {
            let d = client.log(log_id)?;
            out.emit(&d, || {
                let mut s = format!(
                    "log_id={} sample_id={} timestamp={} outlier={}\n",
                    d.log.log_id,
                    d.log.sample_id,
                    d.log.timestamp.0,
                    d.log.is_outlier()
                );
                for v in &d.log.verdicts {
                    let _ = writeln!(s, "{} score={} threshold={} outlier={}", v.detector_kind.as_str(), v.score, v.threshold, v.is_outlier);
                }
                for c in &d.feature_comparison {
                    let r = &c.reference;
                    let v = c.value.map_or("-".into(), |v| v.to_string());
                    let _ = writeln!(s, "{}: {v} [min {} p10 {} median {} p90 {} max {}]", c.name, r.min, r.p10, r.median, r.p90, r.max);
                }
                s
            });
        }
        Command::Heatmap { log_id, method, out: path } => {
            let bytes = client.heatmap(log_id, method)?;
            std::fs::write(path, &bytes).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
            out.emit(&json!({ "path": path, "bytes": bytes.len() }), || format!("wrote {} bytes to {}", bytes.len(), path.display()));
        }
        Command::Delete { log_id } => {
            client.delete_log(log_id)?;
            out.emit(&json!({ "deleted": log_id }), || format!("deleted {log_id}"));
        }
        Command::Admin(_) | Command::Serve(_) => unreachable!(),
    }
    Ok(())
}

fn build_envelope(path: &Path, args: &LogArgs, sample_id: String) -> CliResult<IngestEnvelope> {
    let img = crate::imageio::load(path).map_err(|e| CliError::file(path, e))?;
    let b64 = base64::engine::general_purpose::STANDARD;
    let mut env = IngestEnvelope::new(sample_id);
    env.timestamp = args.timestamp.map(obz_core::Timestamp);
    env.prediction = args.preds.clone();
    env.score = !args.no_score;
    env.target_class = args.target.as_ref().map(|t| match t.parse::<u64>() {
        Ok(i) => TargetClass::Index(i),
        Err(_) => TargetClass::Label(t.clone()),
    });
    if args.local_features {
        env.features = Some(extract_first_order(&img.sample).map_err(|e| CliError::file(path, e))?);
    } else {
        env.image = Some(b64.encode(&img.obzt));
    }
    for (method, file) in &args.heatmaps {
        let bytes = std::fs::read(file).map_err(|e| CliError::file(file, e))?;
        obz_core::decode_tensor(&bytes).map_err(|e| CliError::file(file, e))?;
        env.heatmaps.insert(method.clone(), b64.encode(&bytes));
    }
    Ok(env)
}

fn print_ingest(out: &Out, r: &IngestResponse) {
    out.emit(r, || {
        let mut s = format!("log_id={} sample_id={} outlier={}", r.log_id, r.sample_id, r.is_outlier);
        for v in &r.verdicts {
            let _ = write!(s, " {}={}/{}", v.detector_kind.as_str(), v.score, v.threshold);
        }
        s
    });
}

fn log_cmd(client: &Client, project: &str, args: &LogArgs, out: &Out) -> CliResult {
    if let Some(image) = &args.image {
        let sample_id = args.sample_id.clone().unwrap_or_else(|| file_stem(image));
        let env = build_envelope(image, args, sample_id)?;
        print_ingest(out, &client.ingest(project, &env)?);
        return Ok(());
    }
    let dir = args.batch.as_ref().expect("clap requires image or batch");
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::file(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("pgm" | "obzt")))
        .collect();
    files.sort();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CliResult<IngestResponse>>>> =
        Mutex::new((0..files.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..BATCH_PARALLELISM.min(files.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(path) = files.get(i) else { break };
                let r = build_envelope(path, args, file_stem(path))
                    .and_then(|env| client.ingest(project, &env).map_err(CliError::from));
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let mut first_err = None;
    for (path, r) in files.iter().zip(results.into_inner().unwrap()) {
        match r.expect("every file processed") {
            Ok(resp) => print_ingest(out, &resp),
            Err(e) => {
                eprintln!("{}: {}", path.display(), e.error_line());
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn data_root(explicit: &Option<PathBuf>) -> CliResult<PathBuf> {
    match explicit {
        Some(p) => Ok(p.clone()),
        None => Ok(ServerConfig::from_env()?.data_root),
    }
}

fn admin_token(cmd: &TokenCmd, out: &Out) -> CliResult {
    match cmd {
        TokenCmd::New { user, data_root: root } => {
            let storage = Storage::open_dir(data_root(root)?)?;
            let token = storage.issue_token(user)?;
            out.emit(&json!({ "user_id": user, "token": token }), || token.clone());
        }
        TokenCmd::Revoke { token, data_root: root } => {
            let storage = Storage::open_dir(data_root(root)?)?;
            storage.revoke_token(token)?;
            out.emit(&json!({ "revoked": true }), || "revoked".into());
        }
    }
    Ok(())
}

fn serve(args: &ServeArgs) -> CliResult {
    let mut config = ServerConfig::from_env()?;
    if let Some(b) = args.bind {
        config.bind = b;
    }
    if let Some(r) = &args.data_root {
        config.data_root = r.clone();
    }
    if let Some(q) = args.quantile {
        config.default_quantile =
            crate::config::parse_quantile(&q.to_string()).map_err(|e| CliError::Usage(format!("--quantile: {e}")))?;
    }
    let _ = tracing_subscriber::fmt().with_writer(std::io::stderr).try_init();
    let storage = Storage::open_dir(&config.data_root)?;
    let state = crate::api::AppState::new(storage, config.default_quantile);
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Other(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(config.bind)
            .await
            .map_err(|e| CliError::Other(format!("bind {}: {e}", config.bind)))?;
        tracing::info!(addr = %listener.local_addr().map_err(|e| CliError::Other(e.to_string()))?, root = %config.data_root.display(), "listening");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        crate::api::serve(listener, state, shutdown).await.map_err(|e| CliError::Other(e.to_string()))
    })
}
