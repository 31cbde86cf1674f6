use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hotelgen::{generate_pairs, write_pairs, CorpusSpec, CorrelationMode, TiePlan};
use lab_harness::presets::{find, PRESETS};
use lab_harness::{emit_outputs, run_experiment, ExperimentConfig, Format, HarnessError};

#[derive(Parser)]
#[command(name = "lab", about = "Run preference-learning experiment presets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the available presets.
    List,
    /// Run one preset and write its table, sidecar and plot.
    Run {
        preset: String,
        /// Override a parameter, e.g. `--set betas=[0.1,1.0]`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv,svg")]
        format: String,
        /// JSON experiment config; flags given here take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write hotel preference pairs as JSONL.
    HotelGen {
        #[arg(long, value_enum, default_value = "normal")]
        mode: ModeArg,
        #[arg(long, default_value_t = 1000)]
        n_strict: usize,
        /// Strict fraction of the emitted pairs.
        #[arg(long, default_value_t = 0.7)]
        alpha: f64,
        /// Probability a tie is informative.
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value_t = 0.05)]
        tau: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "tabular")]
        format: HotelFormat,
        #[arg(long, default_value_t = 10_000)]
        corpus_size: usize,
        #[arg(long, default_value_t = 4)]
        contexts: usize,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Normal,
    Suppression,
    Adversarial,
}

#[derive(Clone, Copy, ValueEnum)]
enum HotelFormat {
    Tabular,
    Text,
}

fn run(cli: Cli) -> lab_harness::Result<()> {
    match cli.command {
        Command::List => {
            for p in PRESETS {
                println!("{:<22} {}", p.name, p.summary);
            }
            Ok(())
        }
        Command::Run {
            preset,
            set,
            seed,
            replicates,
            out,
            format,
            config,
        } => {
            find(&preset)?;
            let formats = Format::parse_list(&format)?;
            let mut cfg = match config {
                Some(path) => {
                    let c = ExperimentConfig::from_json(&std::fs::read_to_string(&path)?)?;
                    if c.preset != preset {
                        return Err(HarnessError::Config(format!(
                            "config names preset {:?} but {preset:?} was requested",
                            c.preset
                        )));
                    }
                    c
                }
                None => ExperimentConfig::new(&preset),
            };
            for s in &set {
                cfg.set(s)?;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if replicates.is_some() {
                cfg.replicates = replicates;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let result = run_experiment(&cfg)?;
            for path in emit_outputs(&result, &cfg.output_dir, &preset, &formats)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::HotelGen {
            mode,
            n_strict,
            alpha,
            p,
            tau,
            seed,
            format,
            corpus_size,
            contexts,
            out,
        } => {
            let mode = match mode {
                ModeArg::Normal => CorrelationMode::Normal,
                ModeArg::Suppression => CorrelationMode::Suppression,
                ModeArg::Adversarial => CorrelationMode::Adversarial,
            };
            let spec = CorpusSpec {
                corpus_size,
                n_contexts: contexts,
            };
            let plan = TiePlan {
                tie_fraction: 1.0 - alpha,
                informative_prob: p,
                tau,
            };
            let fmt = match format {
                HotelFormat::Tabular => hotelgen::Format::TabularJsonl,
                HotelFormat::Text => hotelgen::Format::TextJsonl,
            };
            let hotel_err = |source| HarnessError::Hotel {
                cell: "hotel-gen".into(),
                source,
            };
            let pairs = generate_pairs(&spec, mode, n_strict, &plan, seed).map_err(hotel_err)?;
            let mut buf = Vec::new();
            write_pairs(&pairs, fmt, &mut buf).map_err(hotel_err)?;
            match out {
                Some(path) => std::fs::write(path, buf)?,
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(&buf)?;
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
