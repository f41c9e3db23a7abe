//! `spheroest`: simulate spheroid systems, section them, and estimate the
//! size, shape and orientation distribution from section ellipses.

mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use files::CliError;

#[derive(Debug, Parser)]
#[command(name = "spheroest", version, about)]
struct Cli {
    /// Seed overriding the one in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Class layout options shared by the unfolding commands.
#[derive(Debug, Args)]
struct BinningArgs {
    /// Preset class layout, 1 to 5.
    #[arg(long, default_value_t = 2, conflicts_with = "classes")]
    preset: usize,
    /// Explicit class counts as `n_c,n_s,n_theta`.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    classes: Option<Vec<usize>>,
    /// Upper edge of the size classes (default: factor times largest C).
    #[arg(long)]
    c_max: Option<f64>,
    #[arg(long, default_value_t = 1.25)]
    c_max_factor: f64,
    /// Monte Carlo draws per kernel column.
    #[arg(long, default_value_t = 10_000)]
    mc_reps: usize,
    /// Kernel file: loaded when present, written after estimation otherwise.
    #[arg(long)]
    kernel: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the spheroids hitting a window; writes a spheroid CSV and a
    /// metadata JSON.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Metadata file (default: the output path with a .json extension).
        #[arg(long)]
        meta: Option<PathBuf>,
    },
    /// Intersect spheroids with a plane; writes an ellipse CSV.
    Section {
        #[arg(long)]
        spheroids: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Unfold binned ellipses into spheroid class frequencies.
    Unfold {
        #[arg(long)]
        ellipses: PathBuf,
        #[command(flatten)]
        binning: BinningArgs,
        /// Use the identity kernel (debugging: the output is the input
        /// histogram).
        #[arg(long)]
        identity_kernel: bool,
        /// Unfolded relative frequencies as `i,j,k,value`.
        #[arg(long)]
        out: PathBuf,
        /// Observed section counts as `i,j,k,value`.
        #[arg(long)]
        counts: Option<PathBuf>,
        /// EM diagnostics as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Unfold and fit the model by binned maximum likelihood.
    FitUmle {
        #[arg(long)]
        ellipses: PathBuf,
        #[command(flatten)]
        binning: BinningArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the model by simulation-based quasi-likelihood.
    FitQle {
        #[arg(long)]
        ellipses: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a simulation study; writes rmse, bootstrap and estimate tables.
    Study {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Monte Carlo KS tests and c.d.f. envelopes of A, C, S and alpha.
    Gof {
        #[arg(long)]
        ellipses: PathBuf,
        /// Model parameters, or the output of fit-qle or fit-umle.
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("cannot set up {n} threads: {e}")))?;
    }
    let seed = cli.seed;
    match cli.command {
        Command::Simulate { config, out, meta } => commands::simulate(config.as_deref(), seed, &out, meta.as_deref()),
        Command::Section { spheroids, config, out } => commands::section(&spheroids, config.as_deref(), &out),
        Command::Unfold {
            ellipses,
            binning,
            identity_kernel,
            out,
            counts,
            report,
        } => commands::unfold(
            &ellipses,
            &binning,
            seed,
            identity_kernel,
            &out,
            counts.as_deref(),
            report.as_deref(),
        ),
        Command::FitUmle { ellipses, binning, out } => commands::fit_umle(&ellipses, &binning, seed, &out),
        Command::FitQle { ellipses, config, out } => commands::fit_qle(&ellipses, config.as_deref(), seed, &out),
        Command::Study { config, out_dir } => commands::study(config.as_deref(), seed, &out_dir),
        Command::Gof {
            ellipses,
            params,
            config,
            out_dir,
        } => commands::gof(&ellipses, &params, config.as_deref(), seed, &out_dir),
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
