use std::path::{Path, PathBuf};
use std::process::ExitCode;

use airstar_core::config::{load_or_default, Config};
use airstar_core::mission::MissionState;
use airstar_core::runtime::run_headless;
use airstar_core::station::{MissionResult, MissionSummary};
use airstar_core::world::{load_scenario, World};
use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use crate::eval;
use crate::live::{self, LiveOptions};
use crate::replay;

#[derive(Debug, Parser)]
#[command(name = "airstar", version, about = "UAV agent station, onboard loop and headless tools")]
pub struct Cli {
    /// Config file (JSON). AIRSTAR_CONFIG takes precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Combined,
    Onboard,
    Station,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run missions against a scenario and exit.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Mission instruction; repeat for several, run in order.
        #[arg(long = "mission", required = true)]
        missions: Vec<String>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write every wire message as NDJSON.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Simulated time, no server.
        #[arg(long)]
        headless: bool,
        /// Listen address when not headless (defaults to the config's).
        #[arg(long)]
        listen: Option<String>,
    },
    /// Serve clients interactively in real time.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "combined")]
        mode: Mode,
        /// Client listen address (combined/station) or `/link` address (onboard).
        #[arg(long)]
        listen: Option<String>,
        /// Onboard `/link` URL for station mode, e.g. ws://127.0.0.1:8766/link.
        #[arg(long)]
        onboard_url: Option<String>,
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Inspect or re-serve a recorded run.
    Replay {
        #[arg(long)]
        record: PathBuf,
        /// Stream the record to clients at the original cadence.
        #[arg(long)]
        serve: bool,
        #[arg(long)]
        listen: Option<String>,
        /// Scenario to serve at /scenario while replaying.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Exit once the record has been streamed.
        #[arg(long)]
        once: bool,
    },
    /// Run a named evaluation suite and report metrics.
    Eval {
        #[arg(long)]
        suite: String,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn world(path: &Path, seed: Option<u64>) -> anyhow::Result<World> {
    let mut w = load_scenario(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        w.scene_mut().seed = s;
    }
    Ok(w)
}

fn print_summaries(summaries: &[MissionSummary]) {
    for s in summaries {
        println!(
            "{:?}: {:?} after {} attempt(s), {:.1} m, ticks {}..{}, final {}",
            s.instruction,
            s.result,
            s.attempts,
            s.path_length,
            s.start_tick,
            s.end_tick,
            s.final_state.name()
        );
        for a in &s.answers {
            println!("  answer: {a}");
        }
    }
}

fn all_ok(summaries: &[MissionSummary], expected: usize) -> bool {
    summaries.len() == expected
        && summaries.iter().all(|s| s.result == MissionResult::Succeeded && s.final_state == MissionState::StandbyHover)
}

pub fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let mut cfg: Config = load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Run { scenario, missions, seed, record, headless, listen } => {
            let w = world(&scenario, seed)?;
            let ok = if headless {
                cfg.auto_acknowledge = true;
                let report = run_headless(w, &cfg, &missions, vec![], None)?;
                if let Some(p) = &record {
                    std::fs::write(p, report.ndjson()).with_context(|| format!("writing {}", p.display()))?;
                }
                print_summaries(&report.summaries);
                report.ok() && report.summaries.len() == missions.len()
            } else {
                let listen = listen.unwrap_or_else(|| cfg.listen.clone());
                let opts = LiveOptions { listen: Some(&listen), record: record.as_deref(), missions: &missions };
                let summaries = live::run_combined(w, &cfg, &opts)?;
                print_summaries(&summaries);
                all_ok(&summaries, missions.len())
            };
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Serve { scenario, mode, listen, onboard_url, record } => {
            let w = world(&scenario, None)?;
            let listen = listen.unwrap_or_else(|| cfg.listen.clone());
            let opts = LiveOptions { listen: Some(&listen), record: record.as_deref(), missions: &[] };
            match mode {
                Mode::Combined => print_summaries(&live::run_combined(w, &cfg, &opts)?),
                Mode::Onboard => live::run_onboard(w, &cfg, &listen)?,
                Mode::Station => {
                    let url = onboard_url.context("--onboard-url is required in station mode")?;
                    print_summaries(&live::run_station(w, &cfg, &url, &opts)?);
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { record, serve, listen, scenario, once } => {
            let msgs = replay::load(&record)?;
            if serve {
                let scenario = match scenario {
                    Some(p) => Some(live::scenario_json(&world(&p, None)?.scene)),
                    None => None,
                };
                let listen = listen.unwrap_or_else(|| cfg.listen.clone());
                replay::serve(msgs, &listen, scenario, once)?;
            } else {
                println!("{}", serde_json::to_string_pretty(&replay::summarize(&msgs))?);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval { suite, out } => {
            cfg.auto_acknowledge = true;
            let report = eval::evaluate(&suite, &cfg)?;
            let json = serde_json::to_string_pretty(&report)?;
            match out {
                Some(p) => {
                    std::fs::write(&p, json + "\n").with_context(|| format!("writing {}", p.display()))?;
                    print!("{}", eval::table(&report));
                }
                None => println!("{json}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
