use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use chrono::NaiveDate;
use clap::Parser;
use tracing_subscriber::EnvFilter;

use wayfinder::config::{self, CachePolicy, ProxyConfig};
use wayfinder::reports::{daily_report, render_daily};
use wayfinder::store::read_sessions;
use wayfinder::{open_hub, start, utc_offset, SessionSource};

/// Local proxy that draws a live map of your browsing.
#[derive(Debug, Parser)]
#[command(name = "wayfinder", version)]
struct Cli {
    /// Address the browser uses as its HTTP proxy.
    #[arg(long, default_value = config::DEFAULT_LISTEN)]
    listen: SocketAddr,
    /// Address of the control API and map UI.
    #[arg(long, default_value = config::DEFAULT_CONTROL)]
    control: SocketAddr,
    /// Where sessions are stored.
    #[arg(long, env = "WAYFINDER_DATA_DIR", default_value = "wayfinder-data")]
    data_dir: PathBuf,
    /// Seconds after which time on a page stops counting.
    #[arg(long, default_value_t = config::DEFAULT_IDLE_THRESHOLD_SECS)]
    idle_threshold: u64,
    /// Longest time a document may stay cached, in seconds.
    #[arg(long, default_value_t = config::DEFAULT_CACHE_MAX_RESIDENCE_SECS)]
    cache_max_residence: u64,
    /// Longest time a cached document may go unused, in seconds.
    #[arg(long, default_value_t = config::DEFAULT_CACHE_MAX_IDLE_SECS)]
    cache_max_idle: u64,
    /// Cache size limit in bytes.
    #[arg(long, default_value_t = config::DEFAULT_CACHE_CAPACITY_BYTES)]
    cache_capacity: u64,
    /// Reopen a saved map and keep recording into it.
    #[arg(long, conflicts_with = "seed")]
    session: Option<PathBuf>,
    /// Start from a file listing pre-selected page URLs, one per line.
    #[arg(long)]
    seed: Option<PathBuf>,
    /// Accept control API requests from other machines.
    #[arg(long)]
    control_allow_remote: bool,
    /// Directory with the built map UI.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
    /// Local time offset from UTC in minutes, used for daily reports.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    tz_offset: i32,
    /// Print a report and exit, e.g. `daily:2024-03-01`.
    #[arg(long, value_name = "KIND:DATE")]
    report: Option<String>,
}

impl Cli {
    fn config(&self) -> ProxyConfig {
        let mut cfg = ProxyConfig::new(&self.data_dir);
        cfg.listen_address = self.listen;
        cfg.control_address = self.control;
        cfg.idle_threshold = self.idle_threshold;
        cfg.cache = CachePolicy {
            max_residence: self.cache_max_residence,
            max_idle: self.cache_max_idle,
            capacity_bytes: self.cache_capacity,
        };
        cfg.utc_offset_minutes = self.tz_offset;
        cfg.allow_remote_control = self.control_allow_remote;
        cfg.ui_dir = self.ui_dir.clone();
        cfg
    }
}

fn print_report(cfg: &ProxyConfig, spec: &str) -> anyhow::Result<()> {
    let Some(date) = spec.strip_prefix("daily:") else {
        bail!("unknown report {spec:?}; expected daily:YYYY-MM-DD");
    };
    let date = NaiveDate::parse_from_str(date, "%Y-%m-%d").with_context(|| format!("bad date {date:?}"))?;
    let records = read_sessions(&cfg.sessions_dir())?;
    print!("{}", render_daily(&daily_report(&records, date, utc_offset(cfg)?)));
    Ok(())
}

async fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = cli.config();
    cfg.validate()?;
    if let Some(spec) = &cli.report {
        return print_report(&cfg, spec);
    }
    let source = match (&cli.session, &cli.seed) {
        (Some(path), _) => SessionSource::Reopen(path.clone()),
        (None, Some(path)) => SessionSource::Seed(path.clone()),
        (None, None) => SessionSource::Fresh,
    };
    let hub = open_hub(&cfg, &source).context("opening session")?;
    let services = start(&cfg, hub).await.context("starting services")?;
    println!("proxy:   http://{}", services.proxy_addr);
    println!("map:     http://{}", services.control_addr);
    println!("session: {}", services.hub.status().session_dir.display());
    tokio::signal::ctrl_c().await?;
    let saved = services.shutdown()?;
    println!("saved {}", saved.display());
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .init();
    match run(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wayfinder: {e:#}");
            ExitCode::FAILURE
        }
    }
}
