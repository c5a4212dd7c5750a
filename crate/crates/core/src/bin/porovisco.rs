use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use porovisco::cli::{run_batch, run_verify, DenseMode, RunFlags, EXIT_CONFIG};
use porovisco::verify::{Fault, Level};

#[derive(Parser)]
#[command(
    name = "porovisco",
    version,
    about = "Poro-visco-elastic finite element runs and verification"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenario files (TOML, or a previous manifest.json).
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Exit 4 when identity or ledger residuals exceed `outputs.tolerance`.
        #[arg(long)]
        strict: bool,
        /// Dense matrices for spectra: auto, off or force.
        #[arg(long, default_value = "auto")]
        dense_mode: DenseMode,
        /// Output directory (overrides `outputs.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance criteria and emit a JSON report.
    Verify {
        #[arg(long, value_enum, default_value = "quick")]
        level: LevelArg,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Test hook: deliberately break a property the suite checks.
        #[arg(long, value_enum)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    BreakBSymmetry,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    }
    let code = match cli.command {
        Command::Run {
            configs,
            strict,
            dense_mode,
            out,
        } => {
            let flags = RunFlags {
                strict,
                dense_mode,
                out,
            };
            let mut worst = 0;
            for (path, res) in run_batch(&configs, &flags) {
                match res {
                    Ok(o) => eprintln!("{}: {} -> {}", path.display(), o.regime, o.dir.display()),
                    Err(e) => {
                        eprintln!("{}: error: {e}", path.display());
                        worst = worst.max(e.code);
                    }
                }
            }
            worst
        }
        Command::Verify {
            level,
            out,
            inject_fault,
        } => {
            let level = match level {
                LevelArg::Quick => Level::Quick,
                LevelArg::Full => Level::Full,
            };
            let fault = inject_fault.map(|FaultArg::BreakBSymmetry| Fault::BreakBSymmetry);
            match run_verify(level, fault, out.as_deref()) {
                Ok((report, code)) => {
                    for c in &report.criteria {
                        eprintln!("{}", c.summary_line());
                    }
                    if out.is_none() {
                        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
                    }
                    code
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.code
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
