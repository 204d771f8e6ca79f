use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rubricflow_cli::analyze::{analyze_dir, load_expert};
use rubricflow_cli::api::{self, AppConfig, AppState};
use rubricflow_cli::llm_http::{llm_from_env, BoundedLlm};
use rubricflow_cli::replay::Replayer;
use rubricflow_cli::simulate::{simulate, Mix, PersonaConfig};
use rubricflow_core::rubric::SynthesisConfig;
use rubricflow_core::scenario::load_scenario_file;
use rubricflow_core::{LlmClient, Scenario, Store, StubLlm};

#[derive(Parser)]
#[command(name = "rubricflow", version, about = "Segment grading, rubric reports and cohort analytics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP gateway.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Scenario JSON; block templates are read from `templates/` beside it.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Journal file. Without it the store lives in memory.
        #[arg(long)]
        store: Option<PathBuf>,
        /// Model requests allowed in flight across the whole service.
        #[arg(long, default_value_t = 2)]
        llm_concurrency: usize,
        /// Expert scores CSV used for the agreement section of cohort analytics.
        #[arg(long)]
        expert: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Re-grade a submission log and report verdict differences.
    Replay {
        file: PathBuf,
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Print the summary as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Generate a synthetic cohort of finalized sessions.
    Simulate {
        #[arg(long, default_value_t = 42)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Persona counts as high,mid,low,erratic. Overrides --n.
        #[arg(long)]
        mix: Option<Mix>,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Compute cohort statistics and write the artifact files.
    Analyze {
        /// Directory with sessions.jsonl or cohort.csv, or either file.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        expert: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Print one session from a journal as JSONL.
    ExportSession {
        id: String,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn scenario(path: Option<&Path>) -> Result<Scenario> {
    match path {
        Some(p) => load_scenario_file(p).with_context(|| format!("loading scenario {}", p.display())),
        None => Ok(Scenario::default_scenario()),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Serve { port, host, scenario: path, store, llm_concurrency, expert, seed } => {
            let scenario = Arc::new(scenario(path.as_deref())?);
            let store = match &store {
                Some(p) => Store::open(p).with_context(|| format!("opening journal {}", p.display()))?,
                None => Store::in_memory(),
            };
            let inner = llm_from_env().context("configuring the model client")?;
            let llm: Arc<dyn LlmClient> = Arc::new(BoundedLlm::new(inner, llm_concurrency));
            let mut cfg = AppConfig::new(scenario, llm);
            cfg.store = Arc::new(store);
            cfg.synthesis = SynthesisConfig { max_in_flight: llm_concurrency.max(1), ..SynthesisConfig::default() };
            cfg.expert = expert.as_deref().map(load_expert).transpose()?;
            cfg.analytics_seed = seed;
            let addr: SocketAddr =
                format!("{host}:{port}").parse().with_context(|| format!("bad address {host}:{port}"))?;
            let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
                log::info!("listening on http://{}", listener.local_addr()?);
                let shutdown = async {
                    let _ = tokio::signal::ctrl_c().await;
                    log::info!("shutting down; draining in-flight requests");
                };
                api::serve(listener, AppState::new(cfg), shutdown).await?;
                anyhow::Ok(())
            })
        }
        Command::Replay { file, scenario: path, json } => {
            let llm: Arc<dyn LlmClient> = Arc::from(llm_from_env()?);
            let summary = Replayer::new(Arc::new(scenario(path.as_deref())?), llm)
                .replay_file(&file)
                .with_context(|| format!("replaying {}", file.display()))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&summary)?);
            } else {
                for d in &summary.diffs {
                    println!(
                        "line {}: {} {} attempt {}: recorded {:?}, regraded {:?}",
                        d.line, d.session_id, d.segment_id, d.attempt_index, d.recorded, d.regraded
                    );
                }
                println!("{summary}");
            }
            Ok(())
        }
        Command::Simulate { n, seed, out, mix, scenario: path } => {
            let scenario = Arc::new(scenario(path.as_deref())?);
            let config = match mix {
                Some(Mix([high, mid, low, erratic])) => {
                    PersonaConfig { high, mid, low, erratic, seed, scenario_id: scenario.id.clone() }
                }
                None => PersonaConfig::even(n, seed, &scenario.id),
            };
            let sim = simulate(&config, scenario, Arc::new(StubLlm::heuristic()))?;
            sim.write_to(&out)?;
            println!("{} finalized sessions written to {}", sim.session_ids.len(), out.display());
            Ok(())
        }
        Command::Analyze { input, expert, out, seed, scenario: path } => {
            let scenario = scenario(path.as_deref())?;
            let analysis = analyze_dir(&input, expert.as_deref(), &out, &scenario, seed)?;
            for (name, _) in &analysis.files {
                println!("{}", out.join(name).display());
            }
            Ok(())
        }
        Command::ExportSession { id, store, out } => {
            if !store.is_file() {
                bail!("journal {} does not exist", store.display());
            }
            let text = Store::open(&store)?.export_session(&id)?;
            match out {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}
