use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use thirdview::harness::sim::check_assertions;
use thirdview::harness::{compute_metrics, read_log, Replay, Scenario, Simulation};
use thirdview_telemetry::{Server, SimRunner};

/// Aerial third-person-view teleoperation simulator.
#[derive(Parser)]
#[command(name = "thirdview", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario headless and check its assertions.
    Run {
        /// Scenario TOML path or `builtin:<name>`.
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// JSONL log output.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Metrics JSON output (stdout when omitted).
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Re-emit the snapshots of a log as JSON lines, paced by `--speed`.
    Replay {
        log: PathBuf,
        /// Simulated seconds per wall second; 0 prints the first snapshot
        /// only, `inf` prints everything at once.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
    },
    /// Recompute the metrics of a finished log.
    Metrics { log: PathBuf },
    /// Run a scenario in real time behind the WebSocket protocol.
    Serve {
        scenario: String,
        #[arg(long, default_value = "127.0.0.1:8765")]
        bind: String,
        /// Snapshot rate per client, Hz.
        #[arg(long, default_value_t = 20.0)]
        rate: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

fn load(spec: &str, seed: Option<u64>) -> Result<Scenario> {
    let scenario = Scenario::load(spec).with_context(|| format!("loading scenario {spec}"))?;
    Ok(match seed {
        Some(s) => scenario.with_seed(s),
        None => scenario,
    })
}

fn log_sink(path: Option<&Path>) -> Result<Box<dyn Write + Send>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::sink()),
    })
}

fn open_log(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn run(scenario: &str, seed: Option<u64>, log: Option<&Path>, metrics_out: Option<&Path>) -> Result<ExitCode> {
    let scenario = load(scenario, seed)?;
    let mut sim = Simulation::new(&scenario, log_sink(log)?)?;
    let metrics = sim.run_to_end()?;
    let json = serde_json::to_string_pretty(&metrics)?;
    match metrics_out {
        Some(p) => std::fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{json}"),
    }
    let results = check_assertions(&scenario.asserts, &metrics);
    for a in &results {
        eprintln!(
            "{} {} {} {} (got {})",
            if a.passed { "ok  " } else { "FAIL" },
            a.assertion.metric,
            a.assertion.op.symbol(),
            a.assertion.value,
            a.actual.map_or("n/a".into(), |v| format!("{v}")),
        );
    }
    Ok(if results.iter().all(|a| a.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn replay(log: &Path, speed: f64) -> Result<()> {
    if speed.is_nan() || speed < 0.0 {
        bail!("speed must be non-negative");
    }
    let replay = Replay::from_reader(open_log(log)?)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if speed.is_infinite() {
        for s in replay.snapshots() {
            writeln!(out, "{}", serde_json::to_string(s)?)?;
        }
        return Ok(());
    }
    let mut stream = replay.stream(speed);
    let mut wait = 0.0;
    loop {
        for s in stream.advance(wait) {
            writeln!(out, "{}", serde_json::to_string(s)?)?;
        }
        out.flush()?;
        if stream.is_done() || stream.is_paused() {
            return Ok(());
        }
        wait = stream.wall_time_to_next().unwrap_or(0.0);
        std::thread::sleep(Duration::from_secs_f64(wait));
    }
}

fn metrics(log: &Path) -> Result<()> {
    let records = read_log(open_log(log)?)?;
    println!("{}", serde_json::to_string_pretty(&compute_metrics(&records)?)?);
    Ok(())
}

fn serve(scenario: &str, bind: &str, rate: f64, seed: Option<u64>, log: Option<&Path>) -> Result<()> {
    let scenario = load(scenario, seed)?;
    let runner = SimRunner::start(&scenario, log_sink(log)?, 1.0)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let server = Server::bind(bind, runner.handle(), rate).await?;
        eprintln!("serving {} on ws://{}", scenario.name, server.local_addr());
        server
            .run_until(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })?;
    let metrics = runner.stop()?;
    eprintln!("{}", serde_json::to_string_pretty(&metrics)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Run {
            scenario,
            seed,
            log,
            metrics,
        } => run(scenario, *seed, log.as_deref(), metrics.as_deref()),
        Cmd::Replay { log, speed } => replay(log, *speed).map(|()| ExitCode::SUCCESS),
        Cmd::Metrics { log } => metrics(log).map(|()| ExitCode::SUCCESS),
        Cmd::Serve {
            scenario,
            bind,
            rate,
            seed,
            log,
        } => serve(scenario, bind, *rate, *seed, log.as_deref()).map(|()| ExitCode::SUCCESS),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
