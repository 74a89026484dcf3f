use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use pausepoint_cli::error::{CliError, Result};
use pausepoint_cli::export::{self, Format};
use pausepoint_cli::local::{self, LocalService};
use pausepoint_cli::sim::SimProfile;
use pausepoint_cli::{import, simulate};
use pausepoint_client::Client;
use pausepoint_core::gallery::GalleryQuery;
use pausepoint_core::{ExerciseId, Store};
use pausepoint_service::{bind, termination_signal, ServeError, Service, ServiceConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "pausepoint", version, about = "Operate a lecture-exercise service")]
struct Cli {
    #[command(flatten)]
    target: Target,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Target {
    /// Base URL of a running service.
    #[arg(long, global = true, env = "PAUSEPOINT_SERVER_URL")]
    server_url: Option<String>,
    /// Bearer token for --server-url.
    #[arg(long, global = true, env = "PAUSEPOINT_TOKEN", hide_env_values = true)]
    token: Option<String>,
    /// Data directory to open in-process instead of talking to a server.
    #[arg(long, global = true, env = "PAUSEPOINT_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Teacher to act as with --data-dir.
    #[arg(long, global = true, default_value = "operator")]
    user: String,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service until SIGTERM or Ctrl-C.
    Serve {
        /// TOML config file; the flags below override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        bind: Option<IpAddr>,
        /// JSON file mapping bearer tokens to principals.
        #[arg(long)]
        auth_tokens: Option<PathBuf>,
        #[arg(long)]
        student_gallery_access: bool,
    },
    /// Create a lesson from a JSON manifest.
    ImportLesson {
        manifest: PathBuf,
        /// Publish the lesson after import.
        #[arg(long)]
        publish: bool,
    },
    /// Submit a seeded synthetic population to an exercise.
    Simulate {
        #[arg(long)]
        exercise: u64,
        #[arg(long, default_value_t = 30)]
        students: usize,
        #[arg(long, default_value_t = 0.8)]
        ink_prob: f64,
        #[arg(long, default_value_t = 0.2)]
        silence_prob: f64,
        #[arg(long, default_value_t = 5_000)]
        min_duration_ms: u64,
        #[arg(long, default_value_t = 60_000)]
        max_duration_ms: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Submissions in flight at once.
        #[arg(long, default_value_t = 8)]
        parallelism: usize,
    },
    /// Write an exercise's gallery as CSV or JSON.
    ExportGallery {
        #[arg(long)]
        exercise: u64,
        /// Defaults to the output file's extension, else CSV.
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Output file; `-` or absent for stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "submitted_at")]
        sort: String,
        #[arg(long, default_value = "asc")]
        dir: String,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        review: Option<String>,
        /// How long to wait for post-processing to catch up.
        #[arg(long, default_value_t = 120)]
        wait_secs: u64,
    },
    /// Re-run labeling and thumbnails for an exercise's responses.
    Reprocess {
        #[arg(long)]
        exercise: u64,
    },
    /// Delete blobs no record references. Needs --data-dir and a stopped server.
    Gc {
        /// Keep unreferenced blobs younger than this.
        #[arg(long, default_value_t = 3600)]
        window_secs: u64,
    },
}

enum Backend {
    Remote(Client),
    Local(LocalService),
}

impl Backend {
    async fn connect(target: &Target) -> Result<Self> {
        match (&target.server_url, &target.data_dir) {
            (Some(url), _) => {
                let token = target
                    .token
                    .clone()
                    .ok_or_else(|| CliError::new("bad-config", "--server-url needs --token"))?;
                Ok(Backend::Remote(Client::new(url.clone(), token)))
            }
            (None, Some(dir)) => Ok(Backend::Local(local::open(dir, &target.user).await?)),
            (None, None) => Err(CliError::new("bad-config", "give --server-url or --data-dir")),
        }
    }

    fn client(&self) -> &Client {
        match self {
            Backend::Remote(c) => c,
            Backend::Local(l) => &l.client,
        }
    }

    async fn close(self) -> Result<()> {
        match self {
            Backend::Remote(_) => Ok(()),
            Backend::Local(l) => l.close().await,
        }
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer(&mut out, value).map_err(|e| CliError::new("io-error", e.to_string()))?;
    writeln!(out).map_err(|e| CliError::new("io-error", e.to_string()))?;
    out.flush().map_err(|e| CliError::new("io-error", e.to_string()))
}

async fn serve(
    target: &Target,
    config: Option<PathBuf>,
    port: Option<u16>,
    bind_addr: Option<IpAddr>,
    auth_tokens: Option<PathBuf>,
    student_gallery_access: bool,
) -> Result<()> {
    let mut cfg = match (&config, &target.data_dir) {
        (Some(path), _) => ServiceConfig::load(path)?,
        (None, Some(dir)) => ServiceConfig::new(dir),
        (None, None) => return Err(CliError::new("bad-config", "give --config or --data-dir")),
    };
    if let (Some(_), Some(dir)) = (&config, &target.data_dir) {
        cfg.data_dir = dir.clone();
    }
    if let Some(p) = port {
        cfg.port = p;
    }
    if let Some(b) = bind_addr {
        cfg.bind = b;
    }
    if auth_tokens.is_some() {
        cfg.auth_tokens = auth_tokens;
    }
    cfg.student_gallery_access |= student_gallery_access;
    let service = Service::from_config(&cfg)?;
    let listener = bind(&cfg).await?;
    let addr = listener.local_addr().map_err(ServeError::from)?;
    print_json(&json!({ "listening": addr.to_string() }))?;
    tracing::info!(%addr, "listening");
    service
        .run(listener, termination_signal())
        .await
        .map_err(|e| CliError::new("io-error", e.to_string()))?;
    tracing::info!("stopped");
    Ok(())
}

fn format_for(format: Option<Format>, out: Option<&Path>) -> Format {
    format.unwrap_or_else(|| match out.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some("json") => Format::Json,
        _ => Format::Csv,
    })
}

async fn run(cli: Cli) -> Result<()> {
    let target = cli.target;
    match cli.command {
        Command::Serve {
            config,
            port,
            bind,
            auth_tokens,
            student_gallery_access,
        } => serve(&target, config, port, bind, auth_tokens, student_gallery_access).await,
        Command::Gc { window_secs } => {
            let dir = target
                .data_dir
                .as_ref()
                .ok_or_else(|| CliError::new("bad-config", "gc needs --data-dir"))?;
            let store = Store::open(dir).map_err(ServeError::from)?;
            let removed = store
                .gc_orphans(Duration::from_secs(window_secs))
                .map_err(ServeError::from)?;
            store.checkpoint().map_err(ServeError::from)?;
            print_json(&json!({ "removed_blobs": removed }))
        }
        command => {
            let backend = Backend::connect(&target).await?;
            let result = client_command(backend.client(), command).await;
            let closed = backend.close().await;
            result.and(closed)
        }
    }
}

async fn client_command(client: &Client, command: Command) -> Result<()> {
    match command {
        Command::ImportLesson { manifest, publish } => {
            let prepared = import::prepare(&manifest)?;
            let lesson = import::import(client, &prepared, publish).await?;
            print_json(&json!({
                "lesson_id": lesson.lesson_id,
                "published": lesson.published,
                "exercises": lesson.exercises().map(|e| e.exercise_id).collect::<Vec<_>>(),
            }))
        }
        Command::Simulate {
            exercise,
            students,
            ink_prob,
            silence_prob,
            min_duration_ms,
            max_duration_ms,
            seed,
            parallelism,
        } => {
            let profile = SimProfile {
                n_students: students,
                ink_prob,
                silence_prob,
                duration_range_ms: (min_duration_ms, max_duration_ms),
                seed,
            };
            let done = simulate::simulate(client, ExerciseId(exercise), &profile, parallelism).await?;
            print_json(&done)
        }
        Command::ExportGallery {
            exercise,
            format,
            out,
            sort,
            dir,
            mode,
            review,
            wait_secs,
        } => {
            let query = GalleryQuery::parse(Some(&sort), Some(&dir), mode.as_deref(), review.as_deref())?;
            let records = export::export(client, ExerciseId(exercise), &query, Duration::from_secs(wait_secs)).await?;
            let out = out.filter(|p| p.as_os_str() != "-");
            let format = format_for(format, out.as_deref());
            match &out {
                Some(path) => {
                    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
                    export::write_records(&records, format, BufWriter::new(file))
                }
                None => export::write_records(&records, format, io::stdout().lock()),
            }
        }
        Command::Reprocess { exercise } => {
            let report = client.reprocess(ExerciseId(exercise)).await?;
            print_json(&report)
        }
        Command::Serve { .. } | Command::Gc { .. } => unreachable!("handled without a client"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if matches!(cli.command, Command::Serve { .. }) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default_level)),
        )
        .init();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("{}", CliError::new("internal", e.to_string()).diagnostic());
            return ExitCode::from(1);
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
