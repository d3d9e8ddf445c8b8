use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use lglstm_cli::{run, CliError, Command, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Synth,
    Train,
    Eval,
    Infer,
    Gradcheck,
}

/// Local-global grid LSTM for semantic part parsing.
#[derive(Debug, Parser)]
#[command(name = "lglstm", version)]
struct Args {
    command: Cmd,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Replace a configuration value, e.g. `train.epochs=3` or `model.use_global=false`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("LGLSTM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("LGLSTM_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let cmd = match args.command {
        Cmd::Synth => Command::Synth,
        Cmd::Train => Command::Train,
        Cmd::Eval => Command::Eval,
        Cmd::Infer => Command::Infer,
        Cmd::Gradcheck => Command::Gradcheck,
    };
    let result = threads()
        .and_then(|()| RunConfig::load(&args.config, &args.overrides))
        .and_then(|cfg| run(cmd, &cfg, &mut std::io::stdout().lock()));
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("lglstm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
