//! `sepcost`: train, run and evaluate separators from the command line.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sepcost::aet_net::{basis_csv, separate};
use sepcost::metrics::{evaluate, CSV_HEADER};
use sepcost::signal_io::{read_wav, resample, write_wav, Waveform};
use sepcost::trainer::{build_dataset, write_log, Checkpoint, Config, Split, Trainer};
use sepcost::verify::{self, CheckTarget};
use sepcost::Error;

use config::Overrides;

#[derive(Parser, Debug)]
#[command(name = "sepcost", version, about = "Separation training with differentiable quality costs")]
struct Cli {
    /// JSON config with `network`, `stoi` and `train` sections
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a separator on paired target/interference recordings
    Train {
        #[arg(long = "target-dir")]
        target_dir: PathBuf,
        #[arg(long = "interference-dir")]
        interference_dir: PathBuf,
        /// Directory for checkpoint.json and train_log.jsonl
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        /// Continue from a checkpoint written by an earlier run
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Separate the target from a mixture WAV
    Separate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Print SDR, SIR, SAR and STOI of an estimate as CSV
    Evaluate {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        interference: PathBuf,
        /// Skip the CSV header line
        #[arg(long = "no-header")]
        no_header: bool,
    },
    /// Compare analytic gradients with finite differences
    Gradcheck {
        /// mse, sdr, sir, sar, stoi or network
        #[arg(long)]
        loss: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write analysis filters sorted by dominant frequency as CSV
    ExportBases {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Print the effective configuration as JSON
    PrintConfig {
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NumericalDivergence { .. } => 3,
            _ => 2,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn effective_config(path: Option<&Path>, overrides: &Overrides) -> Result<Config, CliError> {
    let mut cfg = config::load(path)?;
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Ok(Checkpoint::load(path)?)
}

fn train(
    cfg: Config,
    target_dir: &Path,
    interference_dir: &Path,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<(), CliError> {
    let dataset = build_dataset(
        target_dir,
        interference_dir,
        cfg.train.snr_db,
        cfg.train.seed,
        cfg.network.sample_rate,
        Split::Train,
    )?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut trainer = match resume {
        Some(p) => Trainer::resume(&load_checkpoint(p)?)?,
        None => Trainer::new(cfg, &dataset)?,
    };
    let result = trainer.run(&dataset, None, |_, e| {
        eprintln!("epoch {} step {} total {:.6}", e.epoch, e.step, e.total);
    });
    // On divergence the trainer still holds the last good parameters.
    trainer.checkpoint().save(out_dir.join("checkpoint.json"))?;
    write_log(trainer.log(), out_dir.join("train_log.jsonl"))?;
    result.map_err(CliError::from)
}

const HEADROOM: f64 = 0.99;

/// Pads (at the end, keeping alignment) or trims symmetrically to `len`.
/// Estimates louder than full scale are attenuated rather than clipped.
fn fit_length(w: Waveform, len: usize) -> Result<Waveform, CliError> {
    let rate = w.sample_rate();
    let mut s = w.into_samples();
    let peak = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > HEADROOM {
        let g = HEADROOM / peak;
        s.iter_mut().for_each(|v| *v *= g);
    }
    if s.len() > len {
        let cut = s.len() - len;
        s = s[cut / 2..cut / 2 + len].to_vec();
    } else {
        s.resize(len, 0.0);
    }
    Ok(Waveform::new(s, rate)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config_path = cli.config.as_deref();
    match cli.command {
        Command::Train {
            target_dir,
            interference_dir,
            out_dir,
            resume,
            overrides,
        } => {
            let cfg = effective_config(config_path, &overrides)?;
            train(cfg, &target_dir, &interference_dir, &out_dir, resume.as_deref())
        }
        Command::Separate {
            checkpoint,
            input,
            output,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let params = ckpt.params(&checkpoint)?;
            let mix = read_wav(&input)?;
            let rate = params.config().sample_rate;
            if mix.sample_rate() != rate {
                return Err(CliError::usage(format!(
                    "{} is at {} Hz but the checkpoint expects {rate} Hz",
                    input.display(),
                    mix.sample_rate()
                )));
            }
            let out = fit_length(separate(&mix, &params)?, mix.len())?;
            write_wav(&out, &output)?;
            Ok(())
        }
        Command::Evaluate {
            estimate,
            target,
            interference,
            no_header,
        } => {
            let cfg = config::load(config_path)?;
            let y = read_wav(&target)?;
            let rate = y.sample_rate();
            let x = resample(&read_wav(&estimate)?, rate)?;
            let z = resample(&read_wav(&interference)?, rate)?;
            if x.len() != y.len() || z.len() != y.len() {
                return Err(CliError::usage(format!(
                    "lengths differ at {rate} Hz: estimate {}, target {}, interference {}",
                    x.len(),
                    y.len(),
                    z.len()
                )));
            }
            let report = evaluate(&x, &y, &z, &cfg.stoi)?;
            if !no_header {
                println!("{CSV_HEADER}");
            }
            println!("{}", report.csv_row(&estimate.display().to_string()));
            Ok(())
        }
        Command::Gradcheck { loss, seed } => {
            let target: CheckTarget = loss.parse().map_err(|_| {
                CliError::usage(format!("unknown loss `{loss}` (mse, sdr, sir, sar, stoi, network)"))
            })?;
            let r = verify::check(target, seed)?;
            println!(
                "{loss}: max relative error {:.3e} over {} coordinates (tolerance {:e})",
                r.max_rel_error,
                r.checked,
                verify::TOLERANCE
            );
            if r.passed() {
                Ok(())
            } else {
                Err(CliError {
                    code: 1,
                    message: "gradient check failed".into(),
                })
            }
        }
        Command::ExportBases { checkpoint, output } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let params = ckpt.params(&checkpoint)?;
            let csv = basis_csv(&params, params.config().sample_rate);
            std::fs::write(&output, csv)
                .map_err(|e| CliError::usage(format!("cannot write {}: {e}", output.display())))
        }
        Command::PrintConfig { overrides } => {
            let cfg = effective_config(config_path, &overrides)?;
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
