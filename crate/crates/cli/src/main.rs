use std::io::BufReader;
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use clap::{Parser, Subcommand};
use smartclass_core::device::{run_node, serve_stream, NodeDescriptor, NodeType, ScenarioScript, StreamConnection};
use smartclass_core::server::{
    handle, load_config, read_log, replay, run_scenario, ApiRequest, DeviceGateway, Platform,
    PlatformConfig, PlatformState, ScenarioFile,
};
use tracing::{info, warn};

#[derive(Parser)]
#[command(name = "smartclass", version, about = "Smart classroom platform server and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API and the device listener.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Rebuild state from an event log and print its digest.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Run a scripted deployment against a fresh in-process platform.
    Scenario {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Persist the event log here instead of keeping it in memory.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run one virtual node against a running server's device listener.
    Node {
        #[arg(long)]
        connect: String,
        #[arg(long)]
        id: String,
        #[arg(long = "type", value_parser = parse_node_type)]
        node_type: NodeType,
        #[arg(long)]
        room: String,
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_node_type(s: &str) -> Result<NodeType, String> {
    match s {
        "attendance" => Ok(NodeType::Attendance),
        "eco" => Ok(NodeType::Eco),
        _ => Err(format!("expected attendance or eco, got {s:?}")),
    }
}

fn config_from(path: Option<&Path>) -> Result<PlatformConfig> {
    match path {
        Some(p) => Ok(load_config(p)?),
        None => Ok(PlatformConfig::default()),
    }
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve { config } => serve(config_from(config.as_deref())?),
        Command::Replay { log } => {
            let records = read_log(&log).with_context(|| format!("replaying {}", log.display()))?;
            let state = replay(&records);
            println!("records {}", records.len());
            print!("{}", attendance_tables(&state));
            println!("digest {}", state.digest());
            Ok(())
        }
        Command::Scenario { script, config, log, json } => {
            let mut config = config_from(config.as_deref())?;
            config.server.log_path = log;
            let platform = Arc::new(Platform::open(config)?);
            let scenario = ScenarioFile::load(&script)?;
            let report = run_scenario(&platform, &scenario)?;
            let replayed = replay(&platform.records()).digest();
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.render());
            }
            if replayed != report.digest {
                bail!("replayed digest {replayed} differs from live digest {}", report.digest);
            }
            eprintln!("replay digest matches ({} records, {:?})", report.last_seq, report.elapsed);
            Ok(())
        }
        Command::Node { connect, id, node_type, room, script, config } => {
            let config = config_from(config.as_deref())?;
            let text = std::fs::read_to_string(&script).with_context(|| format!("reading {}", script.display()))?;
            let script: ScenarioScript = text.parse()?;
            let stream = TcpStream::connect(&connect).with_context(|| format!("connecting to {connect}"))?;
            let mut conn = StreamConnection::new(BufReader::new(stream.try_clone()?), stream);
            let desc = NodeDescriptor { node_id: id, node_type, room_id: room };
            let run = run_node(&desc, &script, &config.device, &mut conn);
            println!("sent {} received {}", run.sent().count(), run.received().count());
            println!("display {:?}", run.display());
            println!("actuators {}", serde_json::to_string(&run.actuators)?);
            match run.error {
                Some(e) => bail!("node stopped early: {e}"),
                None => Ok(()),
            }
        }
    }
}

fn attendance_tables(state: &PlatformState) -> String {
    let mut out = String::new();
    for id in state.sessions.keys() {
        out.push_str(&format!("session {id}\n"));
        for r in state.session_results(id).expect("session exists") {
            out.push_str(&format!("  {:<16} {:<8} {}\n", r.student_id, format!("{:?}", r.status), r.reason));
        }
    }
    out
}

fn serve(config: PlatformConfig) -> Result<()> {
    if config.server.admin_token.is_none() {
        warn!("no admin token configured; administrative routes are open");
    }
    let http_addr = config.server.http_addr.clone();
    let device_addr = config.server.device_addr.clone();
    let platform = Arc::new(Platform::open(config)?);
    info!(records = platform.snapshot().last_seq, digest = %platform.digest(), "platform ready");

    let listener = TcpListener::bind(&device_addr).with_context(|| format!("binding {device_addr}"))?;
    info!(addr = %device_addr, "device listener up");
    let devices = platform.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let platform = devices.clone();
            std::thread::spawn(move || {
                let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
                let reader = match stream.try_clone() {
                    Ok(s) => BufReader::new(s),
                    Err(e) => return warn!(%peer, error = %e, "cannot clone stream"),
                };
                let mut gateway = DeviceGateway::new(platform);
                match serve_stream(reader, stream, &mut gateway) {
                    Ok(()) => info!(%peer, "device disconnected"),
                    Err(e) => warn!(%peer, error = %e, "device connection failed"),
                }
            });
        }
    });

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let app = Router::new()
            .fallback(api)
            .layer(DefaultBodyLimit::max(16 * 1024 * 1024))
            .with_state(platform);
        let listener = tokio::net::TcpListener::bind(&http_addr).await.with_context(|| format!("binding {http_addr}"))?;
        info!(addr = %http_addr, "http api up");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

async fn api(State(platform): State<Arc<Platform>>, method: Method, uri: Uri, headers: HeaderMap, body: Bytes) -> Response {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::to_string);
    let req = ApiRequest { method: method.to_string(), path: uri.path().to_string(), body: body.to_vec(), token };
    let result = tokio::task::spawn_blocking(move || handle(&platform, &req)).await;
    let mut response = match result {
        Ok(r) => {
            let status = StatusCode::from_u16(r.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            if r.body.is_null() {
                status.into_response()
            } else {
                (status, [(header::CONTENT_TYPE, "application/json")], r.body.to_string()).into_response()
            }
        }
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    };
    let h = response.headers_mut();
    h.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    h.insert(header::ACCESS_CONTROL_ALLOW_METHODS, HeaderValue::from_static("GET, POST, OPTIONS"));
    h.insert(header::ACCESS_CONTROL_ALLOW_HEADERS, HeaderValue::from_static("content-type, authorization"));
    response
}
