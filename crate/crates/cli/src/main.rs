//! `bkm`: run, verify and export BKM finite-gap solution scenarios.
//!
//! Exit status: 0 all checks passed, 1 numerical failure or failed check,
//! 2 configuration error, 3 singularity abort. The worker thread count can
//! be set with `BKM_THREADS` (or `--threads`).

use bkm_core::runner::{self, ExportFormat, Summary};
use bkm_core::{presets, Error, Scenario};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bkm", version, about = "Finite-gap solutions of BKM systems via Stäckel reductions")]
struct Cli {
    /// Worker threads (overrides BKM_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or a preset name) and write its artifacts.
    Run {
        scenario: String,
        /// Output directory (default: out/<scenario name>).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Re-check a stored solution directory against its scenario thresholds.
    Verify { dir: PathBuf },
    /// Built-in scenarios.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Export a stored solution.
    Export {
        dir: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Target directory (default: the solution directory).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// List preset names with descriptions.
    List,
    /// Print a preset's scenario file.
    Show { name: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Frames,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ExportFormat::Csv,
            Format::Frames => ExportFormat::Frames,
        }
    }
}

fn configure_threads(flag: Option<usize>) -> Result<(), Error> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("BKM_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::config("BKM_THREADS", format!("not a thread count: `{v}`")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config("threads", e.to_string()))?;
    }
    Ok(())
}

fn load_scenario(arg: &str) -> Result<Scenario, Error> {
    let path = Path::new(arg);
    if path.exists() {
        Scenario::from_file(path)
    } else if presets::names().any(|n| n == arg) {
        presets::load(arg)
    } else {
        Err(Error::Io(format!("{arg}: no such file or preset")))
    }
}

fn print_summary(s: &Summary) {
    for c in &s.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("{tag} {:<28} {:.3e} (threshold {:.1e})", c.name, c.value, c.threshold);
    }
    for r in &s.reports {
        let extra = if r.inconclusive { " [inconclusive]" } else { "" };
        println!("     {:<28} max {:.3e} rms {:.3e}{extra}", r.name, r.max_abs, r.rms);
    }
    for msg in &s.skipped {
        println!("skip {msg}");
    }
    println!("{}: {}", s.scenario, if s.passed { "passed" } else { "FAILED" });
}

fn execute(cli: Cli) -> Result<bool, Error> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Run { scenario, out } => {
            let sc = load_scenario(&scenario)?;
            let dir = out.unwrap_or_else(|| PathBuf::from("out").join(&sc.name));
            let result = runner::run_scenario(&sc)?;
            runner::write_run(&dir, &sc, &result)?;
            print_summary(&result.summary);
            println!("artifacts written to {}", dir.display());
            Ok(result.summary.passed)
        }
        Command::Verify { dir } => {
            let s = runner::verify_dir(&dir)?;
            print_summary(&s);
            Ok(s.passed)
        }
        Command::Presets { action } => {
            match action {
                PresetAction::List => {
                    for name in presets::names() {
                        println!("{name:<18} {}", presets::load(name)?.description);
                    }
                }
                PresetAction::Show { name } => print!("{}", presets::source(&name)?),
            }
            Ok(true)
        }
        Command::Export { dir, format, out } => {
            let sol = runner::load_solution(&dir)?;
            for p in runner::export(&sol, format.into(), out.as_deref().unwrap_or(&dir))? {
                println!("{}", p.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
