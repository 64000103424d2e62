mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use commands::Command;

#[derive(Parser, Debug)]
#[command(
    name = "pivotscope",
    version,
    about = "Cross-lingual pivot analysis and pivot-aware data curation"
)]
struct Cli {
    /// Threads for shard-parallel work. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Log warnings (-v) or progress (-vv) to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

struct StderrLogger;

impl log::Log for StderrLogger {
    fn enabled(&self, metadata: &log::Metadata) -> bool {
        metadata.level() <= log::max_level()
    }

    fn log(&self, record: &log::Record) {
        if self.enabled(record.metadata()) {
            eprintln!(
                "{}: {}",
                record.level().as_str().to_lowercase(),
                record.args()
            );
        }
    }

    fn flush(&self) {}
}

fn report(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{line}");
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<pivotscope::Error>() {
            return e.kind();
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "invalid_input"
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp
                    | ErrorKind::DisplayVersion
                    | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                let _ = e.print();
                return if e.use_stderr() {
                    ExitCode::from(2)
                } else {
                    ExitCode::SUCCESS
                };
            }
            report("usage", e.to_string().trim());
            return ExitCode::from(2);
        }
    };
    static LOGGER: StderrLogger = StderrLogger;
    let _ = log::set_logger(&LOGGER);
    log::set_max_level(match cli.verbose {
        0 => log::LevelFilter::Error,
        1 => log::LevelFilter::Warn,
        _ => log::LevelFilter::Info,
    });
    if cli.workers == 0 {
        report("usage", "--workers must be at least 1");
        return ExitCode::from(2);
    }
    match commands::run(&cli.command, cli.workers) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            report(error_kind(&e), &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}
