//! `pfgsim`: verification runs and repeater sweeps from the command line.
//!
//! Exit codes: 0 pass, 1 verification failure, 2 usage or capacity error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigFile, FloatList, Format, GenList, GridSpec, IndexSet, Spacing};

/// Environment variable naming the default directory for output files.
pub const OUT_DIR_ENV: &str = "PFGSIM_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "pfgsim", version, about = "Pairwise fusion gates on photonic qudits")]
pub struct Cli {
    /// Optional key=value file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Report format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Output file for the report (default: stdout, or a file in $PFGSIM_OUT_DIR for csv/json).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Derive the Kraus set of the fusion gate from the photon-level circuit and check it.
    PfgVerify(PfgVerifyArgs),
    /// Enumerate fusion and boosted swapping along a chain.
    SwapDemo(SwapDemoArgs),
    /// Optimized distribution times over a distance grid.
    RepeaterSweep(SweepArgs),
    /// Check the parity classification of detector patterns.
    LemmaCheck(LemmaArgs),
}

#[derive(Debug, Args)]
pub struct PfgVerifyArgs {
    /// Qudit dimensions, e.g. `3`, `2,3` or `2..5`.
    #[arg(long)]
    pub d: Option<IndexSet>,
    /// Ancilla levels, e.g. `0..1`.
    #[arg(long)]
    pub k: Option<IndexSet>,
    /// Amplitude and probability tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// List every outcome label with its weight.
    #[arg(long)]
    pub labels: bool,
}

#[derive(Debug, Args)]
pub struct SwapDemoArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of boosted swaps after the initial fusion.
    #[arg(long)]
    pub chain: Option<usize>,
    /// Also follow one randomly sampled branch with this seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Branch trace file (JSON lines).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Efficiencies, e.g. `0.95,0.99`.
    #[arg(long)]
    pub eta: Option<FloatList>,
    /// Dimensions; `2` selects the standard scheme.
    #[arg(long)]
    pub d: Option<IndexSet>,
    /// Ancilla level of the pairwise scheme.
    #[arg(long)]
    pub k: Option<usize>,
    /// Distance grid `start:stop:points` in km.
    #[arg(long = "L", alias = "l")]
    pub l: Option<GridSpec>,
    /// Grid spacing.
    #[arg(long, value_enum)]
    pub spacing: Option<Spacing>,
    /// Generations, e.g. `first,second`.
    #[arg(long)]
    pub gen: Option<GenList>,
}

#[derive(Debug, Args)]
pub struct LemmaArgs {
    #[arg(long)]
    pub k: Option<IndexSet>,
    /// X positions; defaults to every `p <= k`.
    #[arg(long)]
    pub p: Option<IndexSet>,
    #[arg(long)]
    pub d: Option<IndexSet>,
    #[arg(long)]
    pub tol: Option<f64>,
}

/// Why a run did not pass.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Verification(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

impl From<pfgsim::Error> for Failure {
    fn from(e: pfgsim::Error) -> Self {
        use pfgsim::Error as E;
        match e {
            E::ImpossiblePattern(_) | E::LemmaPrecondition(_) | E::MalformedRegister(_) | E::NonUnitary { .. } => {
                Failure::Verification(e.to_string())
            }
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<String> for Failure {
    fn from(s: String) -> Self {
        Failure::Usage(s)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let out = match cli.out {
        Some(p) => Some(p),
        None => cfg.get("out").map(PathBuf::from),
    };
    let ctx = commands::Context {
        format: cli.format,
        out,
        cfg,
    };
    match cli.command {
        Command::PfgVerify(a) => commands::pfg_verify(&ctx, a),
        Command::SwapDemo(a) => commands::swap_demo(&ctx, a),
        Command::RepeaterSweep(a) => commands::repeater_sweep(&ctx, a),
        Command::LemmaCheck(a) => commands::lemma_check(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Verification(m) => eprintln!("FAIL: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
