use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fsobolev_cli::config::{ExperimentConfig, Format};
use fsobolev_cli::{list_experiments, resolve_output, run, thread_count, CliError};

#[derive(Parser)]
#[command(name = "fsobolev", about = "Run heat-kernel and fractional Sobolev experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named experiment.
    Run {
        name: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Worker threads (overrides FSOBOLEV_THREADS).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List experiments.
    List,
    /// Print the library version.
    Version,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.command {
        Command::List => {
            for (name, desc) in list_experiments() {
                println!("{name:<18} {desc}");
            }
            ExitCode::SUCCESS
        }
        Command::Version => {
            println!("fsobolev {}", fsobolev::VERSION);
            ExitCode::SUCCESS
        }
        Command::Run { name, config, out, format, threads } => {
            match run_command(&name, &config, out, format, threads) {
                Ok(code) => ExitCode::from(code as u8),
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}

fn run_command(
    name: &str,
    config: &PathBuf,
    out: Option<PathBuf>,
    format: Option<Format>,
    threads: Option<usize>,
) -> Result<i32, CliError> {
    let cfg = ExperimentConfig::load(config)?;
    let threads = thread_count(threads)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Config(e.to_string()))?;
    let report = pool.install(|| run(name, &cfg))?;
    let (out, format) = resolve_output(&cfg, out, format);
    let text = report.render(format);
    match out {
        Some(path) => std::fs::write(&path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    let failed = report.rows.iter().filter(|r| !r.pass).count();
    eprintln!("{name}: {} rows, {failed} failing, {:.2}s", report.rows.len(), report.wall_time);
    Ok(report.exit_code())
}
