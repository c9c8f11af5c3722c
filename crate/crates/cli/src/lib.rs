//! Command-line front end: `train`, `fuse`, `eval` and `selfcheck`.
//!
//! [`run`] parses arguments and returns the process exit code: 0 on success,
//! 1 on a runtime failure and 2 on a usage error.

pub mod eval;
pub mod fuse;
pub mod selfcheck;
pub mod train;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "wmamba", version, about = "Infrared/visible image fusion with a wavelet state-space network")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on a directory of <name>_ir / <name>_vi image pairs.
    Train(TrainArgs),
    /// Fuse one infrared/visible pair with a trained checkpoint.
    Fuse(FuseArgs),
    /// Score a fused image against its sources.
    Eval(EvalArgs),
    /// Run the built-in invariant checks and report each one.
    Selfcheck,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory holding <name>_ir.{pgm,png} and <name>_vi.{pgm,png} pairs.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss log CSV; defaults to the checkpoint path with a `.csv` extension.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
    /// Square patch side; must be divisible by 4.
    #[arg(long, default_value_t = 64)]
    pub patch: usize,
    #[arg(long, default_value_t = 2.5e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10.0)]
    pub lambda_int: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_grad: f64,
    /// Feature width C'.
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    /// State size of each selective scan.
    #[arg(long, default_value_t = 16)]
    pub n_state: usize,
    /// Also write the checkpoint every this many steps.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Disable global gradient-norm clipping.
    #[arg(long)]
    pub no_clip: bool,
    #[arg(long)]
    pub disable_wfe: bool,
    #[arg(long)]
    pub disable_cafm: bool,
    #[arg(long)]
    pub disable_gam: bool,
    /// Apply the state-space path to the low-frequency band instead.
    #[arg(long)]
    pub reverse_frequency: bool,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub ir: PathBuf,
    #[arg(long)]
    pub vi: PathBuf,
    /// Output image; `.png` writes PNG, anything else binary PGM.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ir: PathBuf,
    #[arg(long)]
    pub vi: PathBuf,
    #[arg(long)]
    pub fused: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Comma-separated subset of mi,ncie,qabf,qp,qy,vif.
    #[arg(long, default_value = "mi,ncie,qabf,qp,qy,vif")]
    pub metrics: String,
}

/// Parse `argv` (program name first), execute, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(args) => train::run(&args),
        Command::Fuse(args) => fuse::run(&args),
        Command::Eval(args) => eval::run(&args),
        Command::Selfcheck => {
            if selfcheck::run(&mut std::io::stdout()) {
                Ok(())
            } else {
                Err(anyhow::anyhow!("selfcheck failed"))
            }
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
