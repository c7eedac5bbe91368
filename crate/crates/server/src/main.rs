use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use hyperchat_core::analytics::{report, SurveySet};
use hyperchat_core::lm::prompts::PromptSet;
use hyperchat_core::lm::{HttpBackend, LanguageModel, MockBackend};
use hyperchat_core::lm::http::HttpConfig;
use hyperchat_core::session::log::{append_events, read_events};
use hyperchat_core::session::{Clock, Session, SessionState, WallClock};
use hyperchat_core::sim::{check_expectations, propagation_probe, run_scenario, study_pair, Scenario};
use hyperchat_server::{router, AppState};

#[derive(Parser)]
#[command(name = "hyperchat", version, about = "Conversational swarm deliberation server and tools")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    /// Deterministic marker-grammar backend.
    Mock,
    /// OpenAI-compatible chat completions endpoint (LM_ENDPOINT, LM_API_KEY, LM_MODEL).
    Http,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the WebSocket/REST session service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "0.0.0.0")]
        host: String,
        #[arg(long, default_value = "state")]
        state_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Backend::Mock)]
        backend: Backend,
        /// Directory of prompt templates overriding the built-in ones.
        #[arg(long)]
        prompts: Option<PathBuf>,
    },
    /// Rebuild a session from its event log and print a summary.
    Replay { events: PathBuf },
    /// Finalize a logged session offline, appending to its log.
    Finalize {
        session: String,
        #[arg(long, default_value = "state")]
        state_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Backend::Mock)]
        backend: Backend,
    },
    /// Compare a single-room and a swarm session.
    Analyze {
        #[arg(long)]
        chat: PathBuf,
        #[arg(long)]
        swarm: PathBuf,
        #[arg(long)]
        survey: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scripted sessions on virtual time with the mock backend.
    Sim {
        #[command(subcommand)]
        command: SimCmd,
    },
}

#[derive(Subcommand)]
enum SimCmd {
    /// Run scenarios and write event logs, results and propagation traces.
    Run {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Measure first-arrival time of one proposal around the ring.
    Probe {
        #[arg(long)]
        rooms: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the 48-person single-room and swarm study scenarios.
    Study {
        #[arg(long, default_value_t = 2023)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn model(backend: Backend, prompts: Option<&Path>) -> Result<Arc<dyn LanguageModel>> {
    Ok(match backend {
        Backend::Mock => Arc::new(MockBackend),
        Backend::Http => {
            let config = HttpConfig::from_env().context("LM_ENDPOINT must be set for the http backend")?;
            let prompts = match prompts {
                Some(dir) => PromptSet::from_dir(dir).with_context(|| format!("reading prompts from {}", dir.display()))?,
                None => PromptSet::default(),
            };
            Arc::new(HttpBackend::new(config, prompts))
        }
    })
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Cmd::Serve { port, host, state_dir, backend, prompts } => serve(&host, port, state_dir, model(backend, prompts.as_deref())?),
        Cmd::Replay { events } => replay(&events),
        Cmd::Finalize { session, state_dir, backend } => finalize(&session, &state_dir, model(backend, None)?),
        Cmd::Analyze { chat, swarm, survey, out } => analyze(&chat, &swarm, survey.as_deref(), &out),
        Cmd::Sim { command } => match command {
            SimCmd::Run { scenarios, seed, out, jobs } => sim_run(&scenarios, seed, &out, jobs),
            SimCmd::Probe { rooms, seed } => sim_probe(rooms, seed),
            SimCmd::Study { seed, out } => sim_study(seed, &out),
        },
    }
}

fn serve(host: &str, port: u16, state_dir: PathBuf, model: Arc<dyn LanguageModel>) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let clock: Arc<dyn Clock> = Arc::new(WallClock::new());
        let state = AppState::open(state_dir.clone(), model, clock).with_context(|| format!("opening {}", state_dir.display()))?;
        let addr: SocketAddr = format!("{host}:{port}").parse().context("bad listen address")?;
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        tracing::info!(%addr, state_dir = %state_dir.display(), "listening");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn replay(path: &Path) -> Result<()> {
    let events = read_events(path).with_context(|| format!("reading {}", path.display()))?;
    let state = SessionState::replay(&events).with_context(|| format!("replaying {}", path.display()))?;
    let messages: usize = state.rooms.values().map(|r| r.messages.len()).sum();
    let summary = serde_json::json!({
        "session": state.config.session_id,
        "events": events.len(),
        "phase": state.phase,
        "participants": state.roster.len(),
        "rooms": state.rooms.len(),
        "messages": messages,
        "catalog": state.catalog.items().iter().map(|i| &i.canonical_label).collect::<Vec<_>>(),
        "result": state.result,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn finalize(id: &str, state_dir: &Path, model: Arc<dyn LanguageModel>) -> Result<()> {
    let path = state_dir.join(format!("{id}.events.jsonl"));
    let events = read_events(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut session = Session::from_events(events)?;
    let now = WallClock::new().now_ms();
    let result = session.finalize_with(model.as_ref(), now)?;
    append_events(&path, &session.drain_new_events())?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}

fn analyze(chat: &Path, swarm: &Path, survey: Option<&Path>, out: &Path) -> Result<()> {
    let chat_events = read_events(chat).with_context(|| format!("reading {}", chat.display()))?;
    let swarm_events = read_events(swarm).with_context(|| format!("reading {}", swarm.display()))?;
    let survey = match survey {
        Some(p) if p.exists() => Some(SurveySet::read_csv(fs::File::open(p)?).with_context(|| format!("reading {}", p.display()))?),
        Some(p) => {
            tracing::warn!(path = %p.display(), "survey file missing; survey section omitted");
            None
        }
        None => None,
    };
    let rep = report(&chat_events, &swarm_events, survey.as_ref())?;
    rep.write_to(out)?;
    print!("{}", rep.to_markdown());
    Ok(())
}

fn sim_run(paths: &[PathBuf], seed: u64, out: &Path, jobs: usize) -> Result<()> {
    let scenarios: Vec<Scenario> = paths.iter().map(|p| Scenario::load(p)).collect::<Result<_, _>>()?;
    let run_one = |s: &Scenario| -> Result<Vec<String>> {
        let result = run_scenario(s, seed)?;
        let dir = out.join(&s.name);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(format!("{}.events.jsonl", s.name)), result.event_log_jsonl())?;
        fs::write(dir.join("result.json"), result.result_json() + "\n")?;
        fs::write(dir.join("propagation.csv"), result.trace.to_csv())?;
        Ok(check_expectations(s, &result))
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let outcomes: Vec<Result<Vec<String>>> = pool.install(|| scenarios.par_iter().map(run_one).collect());
    let mut failed = 0;
    for (s, outcome) in scenarios.iter().zip(outcomes) {
        match outcome {
            Ok(f) if f.is_empty() => println!("ok    {}", s.name),
            Ok(f) => {
                failed += 1;
                println!("FAIL  {}: {}", s.name, f.join("; "));
            }
            Err(e) => {
                failed += 1;
                println!("ERROR {}: {e:#}", s.name);
            }
        }
    }
    if failed > 0 {
        bail!("{failed} scenario(s) failed");
    }
    Ok(())
}

fn sim_probe(rooms: usize, seed: u64) -> Result<()> {
    let r = propagation_probe(rooms, seed)?;
    print!("{}", r.to_csv());
    if !r.all_within_bound() || !r.monotone() {
        bail!("propagation exceeded the {} ms per-hop bound", r.hop_bound_ms);
    }
    Ok(())
}

fn sim_study(seed: u64, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let (chat, swarm) = study_pair(seed);
    for s in [chat, swarm] {
        let path = out.join(format!("{}.json", s.name));
        fs::write(&path, serde_json::to_string_pretty(&s)? + "\n")?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
