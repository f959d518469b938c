use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gasket_core::commands::{
    anisotropy_tables, energy_tables, gasket_tables, lyapunov_tables, measure_tables,
    sample_tables, theta_tables, vfield_tables, write_tables, LyapunovInput, LYAPUNOV_LENGTH,
};
use gasket_core::config::{ConfigOverrides, RunConfig};
use gasket_core::report::OutputFormat;
use gasket_core::verify::{run_verify, VerifyOptions};
use gasket_core::{GasketError, Word};

#[derive(Parser)]
#[command(
    name = "gasket",
    version,
    about = "Numerical experiments on the harmonic Sierpinski gasket"
)]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Flags {
    /// Cell depth.
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// Sub-cell depth of the Lipschitz estimate.
    #[arg(long, global = true)]
    sub_depth: Option<usize>,
    /// Strictly decreasing θ grid, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    theta: Option<Vec<f64>>,
    /// Number of sampled words.
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Normalization constant c in τ(S) = c·Id.
    #[arg(long, global = true)]
    norm_c: Option<f64>,
    #[arg(long, global = true)]
    format: Option<OutputFormat>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Cell vertices, junctions and boundary polylines.
    Gasket,
    /// Matrix and scalar cell masses.
    Measure,
    /// Projection field on κ-sampled cells.
    Vfield,
    /// Lyapunov exponents of sampled or given words.
    Lyapunov {
        /// Use this word instead of sampling.
        #[arg(long)]
        word: Option<Word>,
        /// Repetitions of --word.
        #[arg(long, default_value_t = 1, requires = "word")]
        repeat: usize,
        /// Length of sampled words.
        #[arg(long, default_value_t = LYAPUNOV_LENGTH, conflicts_with = "word")]
        length: usize,
    },
    /// Cell anisotropy and alignment.
    Anisotropy,
    /// Mass of S_θ and F_θ over the θ grid.
    Theta,
    /// Energy estimators over the test field battery.
    Energy {
        /// Also write per-cell Lipschitz and directional derivative pairs.
        #[arg(long)]
        pairs: bool,
    },
    /// κ-sampled words.
    Sample,
    /// Run every registered check.
    Verify {
        /// Run only these checks, comma separated.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<String>>,
    },
}

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

fn exit_code(err: &GasketError) -> u8 {
    match err {
        GasketError::Io(_) => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

fn run(cli: Cli) -> Result<bool, GasketError> {
    let f = cli.flags;
    let overrides = ConfigOverrides {
        depth: f.depth,
        sub_depth: f.sub_depth,
        theta: f.theta,
        samples: f.samples,
        seed: f.seed,
        norm_c: f.norm_c,
        format: f.format,
        out: f.out,
    };
    let cfg = RunConfig::resolve(f.config.as_deref(), overrides)?;
    let tables = match cli.command {
        Command::Gasket => gasket_tables(&cfg)?,
        Command::Measure => measure_tables(&cfg)?,
        Command::Vfield => vfield_tables(&cfg)?,
        Command::Lyapunov {
            word,
            repeat,
            length,
        } => {
            let input = match word {
                Some(word) => LyapunovInput::Word { word, repeat },
                None => LyapunovInput::Sampled { length },
            };
            lyapunov_tables(&cfg, &input)?
        }
        Command::Anisotropy => anisotropy_tables(&cfg)?,
        Command::Theta => theta_tables(&cfg)?,
        Command::Energy { pairs } => energy_tables(&cfg, pairs)?,
        Command::Sample => sample_tables(&cfg)?,
        Command::Verify { only } => {
            let summary = run_verify(
                &cfg,
                &VerifyOptions {
                    only,
                    beta_override: None,
                },
            )?;
            print!("{}", summary.render());
            let path = summary.table(&cfg).write(&cfg.out, cfg.format)?;
            println!("wrote {}", path.display());
            if !summary.passed() {
                eprintln!("failing checks:");
                for c in summary.failures() {
                    eprintln!("  {} (threshold {})", c.name, c.threshold);
                }
            }
            return Ok(summary.passed());
        }
    };
    for path in write_tables(&tables, &cfg)? {
        println!("wrote {}", path.display());
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VERIFY_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
