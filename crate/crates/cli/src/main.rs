use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vtraj::data::{generate, write_scenes_json, Scenario, SyntheticSpec};
use vtraj::harness::{self, Checkpoint, HarnessError, RunConfig, Trainer};
use vtraj::predictor::write_metrics_csv;

#[derive(Parser)]
#[command(name = "vtraj", version, about = "Multi-agent trajectory forecasting with virtual-hub graph experts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoints plus a per-epoch metrics log.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Continue from a checkpoint written with the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// minADE_k / minFDE_k of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Constant-velocity extrapolation scored like `eval`.
    Baseline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 8)]
        t_obs: usize,
        #[arg(long, default_value_t = 12)]
        t_pred: usize,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Effective resistance between agents before and after adding hubs.
    AnalyzeGraph {
        /// Report the 5-node chain with one hub instead of reading data.
        #[arg(long)]
        demo_chain: bool,
        #[arg(long, required_unless_present = "demo_chain")]
        data: Option<PathBuf>,
        /// Build graphs from this checkpoint's embeddings.
        #[arg(long, conflicts_with = "config")]
        checkpoint: Option<PathBuf>,
        /// Build graphs from a freshly initialized model for this config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of hubs; defaults to the model's virtual_count.
        #[arg(long = "virtual")]
        n_virtual: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Per-agent routing probabilities and active experts.
    ExportGates {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train on all files but one, evaluate on the held-out file, in turn.
    LeaveOneOut {
        #[arg(long)]
        config: PathBuf,
        /// Dataset files; repeat once per subset.
        #[arg(long = "data", required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        #[arg(long, default_value = "loo")]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write synthetic scenes as a scene JSON file.
    Synth {
        #[arg(long, default_value = "mixed")]
        scenario: Scenario,
        #[arg(long, default_value_t = 4)]
        agents: usize,
        #[arg(long, default_value_t = 100)]
        scenes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn sink(output: Option<&Path>) -> harness::Result<Box<dyn Write>> {
    Ok(match output {
        Some(p) => Box::new(File::create(p).map_err(|source| HarnessError::Io {
            path: p.to_path_buf(),
            source,
        })?),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit(output: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> harness::Result<()> {
    let mut w = sink(output)?;
    f(&mut w).map_err(|source| HarnessError::Io {
        path: output.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf),
        source,
    })
}

fn run(cli: Cli) -> harness::Result<()> {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            resume,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let outcome = harness::train(&cfg, &out, resume.as_deref())?;
            eprintln!(
                "wrote {} and {}",
                outcome.checkpoint.display(),
                outcome.metrics_log.display()
            );
            Ok(())
        }
        Command::Eval {
            checkpoint,
            data,
            k,
            output,
        } => {
            let row = harness::evaluate(&checkpoint, &data, k)?;
            emit(output.as_deref(), |w| write_metrics_csv(w, &[row]))
        }
        Command::Baseline {
            data,
            t_obs,
            t_pred,
            stride,
            output,
        } => {
            let row = harness::baseline(&data, t_obs, t_pred, stride)?;
            emit(output.as_deref(), |w| write_metrics_csv(w, &[row]))
        }
        Command::AnalyzeGraph {
            demo_chain,
            data,
            checkpoint,
            config,
            n_virtual,
            output,
        } => {
            let reports = if demo_chain {
                vec![harness::demo_chain_report()?]
            } else {
                let (cfg, model) = match (checkpoint, config) {
                    (Some(ck), _) => {
                        let ck = Checkpoint::load(ck)?;
                        let model = ck.model()?;
                        (ck.config, model)
                    }
                    (None, cfg) => {
                        let cfg = match cfg {
                            Some(p) => RunConfig::load(p)?,
                            None => RunConfig::default(),
                        };
                        let model = Trainer::new(cfg.clone())?.model().clone();
                        (cfg, model)
                    }
                };
                let data = data.expect("clap requires --data without --demo-chain");
                let scenes = harness::load_scenes(&data, cfg.t_obs, cfg.t_pred, cfg.stride)?;
                let v = n_virtual.unwrap_or(cfg.virtual_count);
                if v == 0 {
                    return Err(HarnessError::Input("--virtual must be positive".into()));
                }
                harness::analyze_graph(&scenes, &model, v)?
            };
            emit(output.as_deref(), |w| harness::write_analysis_csv(w, &reports))
        }
        Command::ExportGates {
            checkpoint,
            data,
            output,
        } => {
            let rows = harness::export_gates(&checkpoint, &data)?;
            emit(output.as_deref(), |w| harness::write_gates_csv(w, &rows))
        }
        Command::LeaveOneOut {
            config,
            data,
            out,
            k,
            output,
        } => {
            let cfg = RunConfig::load(&config)?;
            let rows = harness::leave_one_out(&cfg, &data, &out, k)?;
            emit(output.as_deref(), |w| write_metrics_csv(w, &rows))
        }
        Command::Synth {
            scenario,
            agents,
            scenes,
            seed,
            noise,
            out,
        } => {
            let spec = SyntheticSpec {
                noise_std: noise,
                ..SyntheticSpec::new(scenario, agents, scenes, seed)
            };
            write_scenes_json(&out, &generate(&spec)?)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
