use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use wmprobe::agents::{HumanGenParams, MockPolicy, SimKind, StyleParams};
use wmprobe::design::CenteringScope;
use wmprobe::inference::Parameterization;
use wmprobe::paradigm::TaskConfig;

mod collect;
mod pipeline;
mod serve;

#[derive(Parser)]
#[command(name = "wmprobe", version, about = "Probed serial recall: collection, fitting and participant screening")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the session plan for a seed.
    Gen {
        #[arg(long)]
        seed: u64,
        /// Task configuration (TOML); defaults to the standard paradigm.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the plan here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a cohort of participants into a cohort directory.
    Simulate {
        kind: Kind,
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Task configuration (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Generator parameters (TOML with `[human]` and `[style]` tables).
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Run LLM participants against a chat-completions endpoint.
    LlmRun {
        /// Endpoint configuration (TOML).
        #[arg(long)]
        endpoint: PathBuf,
        /// Overrides the prompt in the endpoint file.
        #[arg(long, value_enum)]
        prompt: Option<Prompt>,
        /// Comma-separated session seeds; overrides the endpoint file.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Task configuration (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the endpoint file's concurrency.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Fit the hierarchical model to the training split of one label.
    Fit {
        #[arg(long)]
        cohort: PathBuf,
        /// Participant type forming the normative cohort.
        #[arg(long)]
        label: String,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        /// Only trials with at least this set size enter the fit.
        #[arg(long, default_value_t = 9)]
        min_set_size: u32,
        #[arg(long, value_enum, default_value_t = Centering::All)]
        centering: Centering,
        #[arg(long, value_enum, default_value_t = Param::NonCentered)]
        parameterization: Param,
        #[arg(long, default_value_t = 4)]
        chains: usize,
        #[arg(long, default_value_t = 2000)]
        warmup: usize,
        #[arg(long, default_value_t = 2000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.8)]
        target_accept: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every held-out participant under a fit artifact.
    Score {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        cohort: PathBuf,
        /// Defaults to the value the artifact was fitted with.
        #[arg(long)]
        min_set_size: Option<u32>,
        /// Random-effect draws per posterior draw (pointwise score).
        #[arg(long, default_value_t = wmprobe::anomaly::DEFAULT_M_POINTWISE)]
        m: usize,
        /// Random-effect draws per posterior draw (joint score).
        #[arg(long, default_value_t = wmprobe::anomaly::DEFAULT_M_JOINT)]
        m_joint: usize,
        /// Posterior draws kept after thinning.
        #[arg(long, default_value_t = wmprobe::anomaly::DEFAULT_THIN_TO)]
        thin_to: usize,
        #[arg(long)]
        no_joint: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// ROC curves and AUROC table from a scores CSV.
    Roc {
        #[arg(long)]
        scores: PathBuf,
        /// Participant type treated as the positive (human) class.
        #[arg(long)]
        positive: String,
        #[arg(long, value_enum, default_value_t = ScoreKind::Pointwise)]
        score: ScoreKind,
        /// Operating point: largest threshold with FNR at most this.
        #[arg(long, default_value_t = 0.1)]
        max_fnr: f64,
        /// Directory for roc.csv and auroc_table.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// List participants whose main-trial accuracy reaches the threshold.
    Screen {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long, default_value_t = wmprobe::anomaly::DEFAULT_SCREEN_THRESHOLD)]
        threshold: f64,
        /// Restrict to one participant type.
        #[arg(long)]
        label: Option<String>,
        /// Also write the list as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the web task and the session-ingestion endpoint.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long)]
        cohort: PathBuf,
        /// Task configuration (TOML) served to the web client.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory with the built web task bundle.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
    /// Offline chat-completions endpoint answering with a fixed policy.
    MockEndpoint {
        #[arg(long, default_value_t = 8090)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long, value_enum, default_value_t = Policy::Echo)]
        policy: Policy,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Human,
    Perfect,
    Wm,
}

#[derive(Clone, Copy, ValueEnum)]
enum Prompt {
    Human,
    Wm,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum Centering {
    All,
    LoadOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    NonCentered,
    Centered,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreKind {
    Pointwise,
    Joint,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Echo,
    Malformed,
}

fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn task_config(path: Option<&Path>) -> Result<TaskConfig> {
    let config = match path {
        Some(p) => read_toml(p)?,
        None => TaskConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

#[derive(serde::Deserialize, Default)]
#[serde(default)]
struct GenParams {
    human: HumanGenParams,
    style: StyleParams,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { seed, config, out } => {
            let plan = wmprobe::paradigm::SessionPlan::new(seed, &task_config(config.as_deref())?)?;
            let text = serde_json::to_string_pretty(&plan)? + "\n";
            match out {
                Some(path) => {
                    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
                    println!("{}", path.display());
                }
                None => print!("{text}"),
            }
        }
        Command::Simulate { kind, n, seed, out, config, params } => {
            let config = task_config(config.as_deref())?;
            let params: GenParams = match params {
                Some(p) => read_toml(&p)?,
                None => GenParams::default(),
            };
            let kind = match kind {
                Kind::Human => SimKind::Human,
                Kind::Perfect => SimKind::Perfect,
                Kind::Wm => SimKind::Wm,
            };
            let sessions = wmprobe::agents::simulate_cohort(kind, n, seed, &config, &params.human, &params.style)?;
            for s in &sessions {
                wmprobe::store::Cohort::append(&out, s)?;
            }
            eprintln!("simulated {n} {} sessions", kind.participant_type());
            println!("{}", out.display());
        }
        Command::LlmRun { endpoint, prompt, seeds, out, config, threads } => {
            let mut ep: wmprobe::agents::EndpointConfig = read_toml(&endpoint)?;
            if let Some(p) = prompt {
                ep.system_prompt = match p {
                    Prompt::Human => wmprobe::agents::SystemPrompt::LlmHuman,
                    Prompt::Wm => wmprobe::agents::SystemPrompt::LlmWm,
                    Prompt::None => wmprobe::agents::SystemPrompt::None,
                };
            }
            if !seeds.is_empty() {
                ep.seeds = seeds;
            }
            if let Some(t) = threads {
                ep.concurrency = t;
            }
            if ep.seeds.is_empty() {
                bail!("no session seeds given (use --seeds or `seeds` in {})", endpoint.display());
            }
            collect::llm_run(&ep, &task_config(config.as_deref())?, &out)?;
            println!("{}", out.display());
        }
        Command::Fit {
            cohort,
            label,
            split_seed,
            train_fraction,
            min_set_size,
            centering,
            parameterization,
            chains,
            warmup,
            draws,
            seed,
            target_accept,
            out,
        } => {
            let args = pipeline::FitArgs {
                label,
                split_seed,
                train_fraction,
                min_set_size,
                scope: match centering {
                    Centering::All => CenteringScope::All,
                    Centering::LoadOnly => CenteringScope::LoadOnly,
                },
                parameterization: match parameterization {
                    Param::NonCentered => Parameterization::NonCentered,
                    Param::Centered => Parameterization::Centered,
                },
                nuts: wmprobe::inference::NutsConfig {
                    chains,
                    warmup,
                    draws,
                    seed,
                    target_accept,
                    ..Default::default()
                },
            };
            pipeline::fit(&cohort, &args, &out)?;
            println!("{}", out.display());
        }
        Command::Score { artifact, cohort, min_set_size, m, m_joint, thin_to, no_joint, seed, out } => {
            let opts = wmprobe::anomaly::ScoringOptions {
                m_pointwise: m,
                m_joint,
                min_set_size: min_set_size.unwrap_or(0),
                seed,
                joint: !no_joint,
            };
            pipeline::score(&artifact, &cohort, opts, min_set_size.is_none(), thin_to, &out)?;
            println!("{}", out.display());
        }
        Command::Roc { scores, positive, score, max_fnr, out } => {
            pipeline::roc(&scores, &positive, matches!(score, ScoreKind::Joint), max_fnr, &out)?;
            println!("{}", out.display());
        }
        Command::Screen { cohort, threshold, label, out } => {
            let cohort = wmprobe::store::Cohort::load(&cohort)?;
            let pool: Vec<_> = cohort
                .sessions
                .iter()
                .filter(|s| s.complete && label.as_ref().is_none_or(|l| &s.participant_type == l))
                .collect();
            let hits = wmprobe::anomaly::accuracy_screen(pool.iter().copied(), threshold);
            for h in &hits {
                println!("{}\t{}\t{:.3}", h.participant_id, h.participant_type, h.accuracy);
            }
            eprintln!("flagged {} of {} sessions at accuracy >= {threshold}", hits.len(), pool.len());
            if let Some(path) = out {
                let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
                for h in &hits {
                    w.serialize(h)?;
                }
                w.flush()?;
                println!("{}", path.display());
            }
        }
        Command::Serve { port, bind, cohort, config, assets } => {
            let config = task_config(config.as_deref())?;
            std::fs::create_dir_all(&cohort).with_context(|| format!("creating {}", cohort.display()))?;
            serve::serve(&bind, port, cohort, config, assets)?;
        }
        Command::MockEndpoint { port, bind, policy } => {
            let policy = match policy {
                Policy::Echo => MockPolicy::EchoLastLetter,
                Policy::Malformed => MockPolicy::Malformed,
            };
            serve::mock_endpoint(&bind, port, policy)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
