use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::config::{preset_names, ExperimentConfig};
use crate::error::CliError;
use crate::{evaluate, oracle_cmd, train, verify};

#[derive(Debug, Parser)]
#[command(
    name = "wigner",
    version,
    about = "Weak adversarial pushforward solver for the Wigner equation"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment file (TOML).
    #[arg(long, global = true, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Shipped experiment preset.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Root seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 gives byte-identical reruns.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the invariant suite and write verify_report.json.
    Verify,
    /// Train the signed pushforward (or audit a frozen exact flow).
    Train {
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Sample a trained checkpoint: sample clouds, marginals, moments.
    Evaluate {
        /// Defaults to <out>/checkpoint.bin.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated times in [0, T].
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Grid reference computations (one-dimensional only).
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
    /// Print the resolved configuration.
    Config,
    /// List the shipped presets.
    Presets,
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Operator against shifted-difference integrals over the fixed sweep.
    EquivalenceSweep,
    /// Split-step evolution with Wigner grids at both ends.
    Evolve {
        /// Potential name (defaults to the configured one).
        potential: Option<String>,
    },
    /// Wigner function of the initial state.
    Wigner,
}

impl GlobalArgs {
    /// Loads, overrides and fully validates the configuration.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => ExperimentConfig::preset(name)?,
            (None, None) => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set_threads(n: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Presets = cli.command {
        for name in preset_names() {
            println!("{name}");
        }
        return Ok(());
    }
    let cfg = cli.global.resolve()?;
    set_threads(cli.global.threads)?;
    let out = cfg.out_dir();
    match cli.command {
        Command::Presets => unreachable!(),
        Command::Config => print!("{}", cfg.to_toml()),
        Command::Verify => {
            verify::run(&cfg, &out, &mut |c| println!("{}", verify::format_check(c)))?;
            println!(
                "all checks passed; report in {}",
                out.join(verify::REPORT_FILE).display()
            );
        }
        Command::Train { resume } => {
            let stop = Arc::new(AtomicBool::new(false));
            let flag = stop.clone();
            // A second handler cannot be installed (tests call run repeatedly);
            // training then simply runs without interrupt support.
            let _ = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst));
            train::run(&cfg, &out, resume.as_deref(), Some(stop))?;
        }
        Command::Evaluate {
            checkpoint,
            times,
            samples,
        } => {
            let checkpoint = checkpoint.unwrap_or_else(|| out.join(train::CHECKPOINT_FILE));
            let times = times.unwrap_or_else(|| cfg.evaluation_times());
            let samples = samples.unwrap_or(cfg.evaluate.samples);
            evaluate::run(
                &checkpoint,
                &times,
                samples,
                cfg.evaluate.bins,
                cfg.seed,
                &out,
            )?;
        }
        Command::Oracle { which } => match which {
            OracleCommand::EquivalenceSweep => {
                oracle_cmd::sweep(&cfg, &out)?;
            }
            OracleCommand::Evolve { potential } => {
                oracle_cmd::evolve(&cfg, potential.as_deref(), &out)?;
            }
            OracleCommand::Wigner => {
                oracle_cmd::wigner(&cfg, &out)?;
            }
        },
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("wigner").chain(args.iter().copied()))
    }

    #[test]
    fn flags_work_before_and_after_the_subcommand() {
        let a = parse(&["--seed", "4", "train"]).unwrap();
        let b = parse(&["train", "--seed", "4"]).unwrap();
        assert_eq!(a.global.seed, Some(4));
        assert_eq!(b.global.seed, Some(4));
        let e = parse(&["evaluate", "--times", "0,0.5,1"]).unwrap();
        match e.command {
            Command::Evaluate { times, .. } => assert_eq!(times, Some(vec![0.0, 0.5, 1.0])),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn usage_errors() {
        assert!(parse(&["oracle", "bogus"]).is_err());
        assert!(parse(&["--config", "a.toml", "--preset", "free-1d", "verify"]).is_err());
        assert!(parse(&[]).is_err());
    }

    #[test]
    fn overrides_apply_before_validation() {
        let cli = parse(&[
            "--preset",
            "free-1d",
            "--seed",
            "99",
            "--out",
            "elsewhere",
            "config",
        ])
        .unwrap();
        let cfg = cli.global.resolve().unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.out_dir(), PathBuf::from("elsewhere"));
        let bad = parse(&["--preset", "nope", "config"]).unwrap();
        assert!(matches!(bad.global.resolve(), Err(CliError::Config(_))));
    }
}
