use std::io::BufRead;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use bloclaw::{router, AppState};
use bloclaw_core::bench::{run_bench, BenchConfig, Suite};
use bloclaw_core::config::Config;
use bloclaw_core::session::{ReplayScript, SessionService};
use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "bloclaw", version, about = "Agent workspace for chemistry and structural biology")]
struct Cli {
    /// Config file; falls back to $BLOCLAW_CONFIG, then built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve {
        /// Overrides `server.bind`.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Run a stress suite and print its report.
    Bench {
        suite: Suite,
        /// Samples (routing), scripts per row (sandbox) or probe repeats (intake).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 2026)]
        seed: u64,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Chat on stdin, or play a scripted conversation.
    Repl {
        /// Replay script; events are printed as JSON lines.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Serve { bind } => serve(config, bind).await,
        Command::Bench { suite, n, seed, out } => bench(config, suite, n, seed, out).await,
        Command::Repl { replay } => repl(config, replay).await,
    }
}

async fn serve(config: Config, bind: Option<String>) -> anyhow::Result<()> {
    let services = config.services(config.provider()?)?;
    let service = Arc::new(SessionService::new(config.session.clone(), services));
    let addr = bind.unwrap_or(config.server.bind.clone());
    let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState { service }))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn bench(config: Config, suite: Suite, n: Option<usize>, seed: u64, out: Option<PathBuf>) -> anyhow::Result<()> {
    let mut bench = BenchConfig::new(suite, seed);
    bench.n = n.unwrap_or(bench.n);
    bench.sandbox = config.sandbox;
    bench.intake = config.intake;
    let report = run_bench(suite, &bench).await;
    print!("{}", report.to_table());
    let json = report.to_json();
    match out {
        Some(path) => std::fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => println!("{json}"),
    }
    Ok(())
}

async fn repl(config: Config, replay: Option<PathBuf>) -> anyhow::Result<()> {
    if let Some(path) = replay {
        let script = ReplayScript::load(&path).with_context(|| format!("loading {}", path.display()))?;
        let services = config.services(Arc::new(script.provider()))?;
        let service = SessionService::new(config.session.clone(), services);
        let id = format!("replay-{}", std::process::id());
        for event in service.replay(&id, &script).await? {
            println!("{}", event.to_json());
        }
        return Ok(());
    }

    let services = config.services(config.provider()?)?;
    let service = SessionService::new(config.session.clone(), services);
    let session = service.create_session()?;
    eprintln!("session {} (ctrl-d to quit)", session.id);
    let stdin = std::io::stdin();
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        for event in service.handle_user_message(&session.id, &line).await? {
            println!("{}", event.to_json());
        }
    }
    Ok(())
}
