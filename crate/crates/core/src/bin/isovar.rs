use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use isovar::config::RunConfig;
use isovar::dist::MixtureTable;
use isovar::gibbs::SUpdateMode;
use isovar::pipeline::{self, ALGORITHM, RESIDUALS_FILE};
use isovar::{Error, Result};

/// Quantify ODE discretization error with a monotone-variance Bayesian model.
#[derive(Debug, Parser)]
#[command(name = "isovar", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,

    /// Built-in configuration: fn-v, fn-r, fn-v-pred, fn-r-pred, kepler.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,

    /// Override the seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Override the output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// How mixture labels are redrawn.
    #[arg(long, global = true, value_name = "MODE")]
    s_mode: Option<SUpdateMode>,

    /// Number of independent chains, run concurrently and merged.
    #[arg(long, global = true, value_name = "N")]
    chains: Option<usize>,

    /// Print the sampler's update order and conventions, then exit.
    #[arg(long)]
    print_algorithm: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate, observe and write residuals.
    Simulate,
    /// Sample the posterior from a residual file.
    Fit {
        /// Defaults to residuals.csv in the output directory.
        #[arg(long)]
        residuals: Option<PathBuf>,
    },
    /// Means and bands for sigma, error sd, |residual| and |error|.
    Summarize {
        /// Defaults to draws.bin (or draws.csv) in the output directory.
        #[arg(long)]
        draws: Option<PathBuf>,
        /// Source of observation times; defaults to residuals.csv in the
        /// output directory when present.
        #[arg(long)]
        residuals: Option<PathBuf>,
    },
    /// Isotonic maximum-likelihood variances.
    Baseline {
        #[arg(long)]
        residuals: Option<PathBuf>,
    },
    /// simulate, fit, summarize and baseline, plus a manifest of hashes.
    Quantify,
    /// Print the mixture table as CSV.
    DumpTable,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match (&cli.config, &cli.preset) {
        (Some(path), _) => RunConfig::from_file(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => return Err(Error::Config {
            field: "--config".into(),
            msg: "pass --config PATH or --preset NAME".into(),
        }),
    };
    config.apply_env()?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output.dir = out.clone();
    }
    if let Some(mode) = cli.s_mode {
        config.gibbs.s_mode = mode;
    }
    if let Some(chains) = cli.chains {
        config.gibbs.chains = chains;
    }
    config.validate()?;
    Ok(config)
}

fn dump_table() {
    let t = MixtureTable::standard();
    println!("k,weight,mean,variance");
    for k in 0..t.weights().len() {
        println!("{},{},{},{}", k + 1, t.weights()[k], t.means()[k], t.variances()[k]);
    }
}

fn report(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.print_algorithm {
        print!("{ALGORITHM}");
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(Error::Config {
            field: "command".into(),
            msg: "no subcommand given (see --help)".into(),
        });
    };
    if let Command::DumpTable = command {
        dump_table();
        return Ok(());
    }
    let config = load_config(&cli)?;
    let out = config.output.dir.clone();
    let default_resid = out.join(RESIDUALS_FILE);
    match command {
        Command::Simulate => report(&pipeline::cmd_simulate(&config)?),
        Command::Fit { residuals } => {
            report(&pipeline::cmd_fit(&config, residuals.as_ref().unwrap_or(&default_resid))?)
        }
        Command::Summarize { draws, residuals } => {
            let draws = draws
                .clone()
                .unwrap_or_else(|| out.join(config.output.draws_format.file_name()));
            let residuals = residuals.clone().or_else(|| default_resid.exists().then(|| default_resid.clone()));
            report(&pipeline::cmd_summarize(&config, &draws, residuals.as_deref())?)
        }
        Command::Baseline { residuals } => {
            report(&pipeline::cmd_baseline(&config, residuals.as_ref().unwrap_or(&default_resid))?)
        }
        Command::Quantify => println!("{}", pipeline::cmd_quantify(&config)?.display()),
        Command::DumpTable => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
