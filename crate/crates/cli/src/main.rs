use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use semsql_cli::config::{BackendKind, OutputFormat, SessionConfig};
use semsql_cli::fixturegen;
use semsql_cli::shell::{Shell, ShellError};

#[derive(Parser, Debug)]
#[command(name = "semsql", version, about = "SQL with semantic operators over documents")]
struct Cli {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Persistent catalog directory (in-memory when absent).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Model backend: mock or http.
    #[arg(long)]
    backend: Option<String>,
    /// Fixture directory for the mock backend.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Cost/accuracy trade-off; 0 picks the cheapest plan.
    #[arg(long)]
    lambda: Option<f64>,
    /// Result format: table, csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Run statements from a script file.
    #[arg(short = 'f', value_name = "SCRIPT", conflicts_with = "command")]
    file: Option<PathBuf>,
    /// Run one statement.
    #[arg(short = 'c', value_name = "STATEMENT")]
    command: Option<String>,
    /// Write the final relation to this file.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    sub: Option<Sub>,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Rebuild mock fixtures from truth tables by running scripts.
    #[command(hide = true)]
    GenFixtures {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        scripts: Vec<PathBuf>,
    },
}

fn usage(e: anyhow::Error) -> ShellError {
    ShellError {
        code: 2,
        message: format!("{e:#}"),
    }
}

fn build_config(cli: &Cli) -> Result<SessionConfig, ShellError> {
    let mut cfg = match &cli.config {
        Some(p) => SessionConfig::load(p).map_err(usage)?,
        None => SessionConfig::default(),
    };
    if let Some(d) = &cli.data_dir {
        cfg.data_dir = Some(d.clone());
    }
    if let Some(b) = &cli.backend {
        cfg.backend = BackendKind::parse(b).map_err(usage)?;
    }
    if let Some(f) = &cli.fixtures {
        cfg.fixtures = Some(f.clone());
    }
    if let Some(l) = cli.lambda {
        cfg.lambda = l;
    }
    if let Some(f) = &cli.format {
        cfg.format = OutputFormat::parse(f).map_err(usage)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), ShellError> {
    let cfg = build_config(&cli)?;
    if let Some(Sub::GenFixtures { truth, out, scripts }) = &cli.sub {
        let report = fixturegen::generate(scripts, truth, out, &cfg).map_err(|e| ShellError {
            code: 1,
            message: format!("{e:#}"),
        })?;
        println!(
            "{} queries, {} plans run, {} fixtures written to {}",
            report.queries,
            report.plans_run,
            report.fixtures,
            out.display()
        );
        for d in &report.disagreements {
            eprintln!("warning: plans disagree: {d}");
        }
        return Ok(());
    }
    let session = cfg.open_session().map_err(usage)?;
    let mut shell = Shell::new(session, cfg.format, cfg.chunk, std::io::stdout().lock(), std::io::stderr());
    let result = match (&cli.file, &cli.command) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| ShellError {
                code: 2,
                message: format!("reading {}: {e}", path.display()),
            })?;
            shell.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            shell.run_script(&text)
        }
        (None, Some(stmt)) => {
            let mut text = stmt.clone();
            if !text.trim_end().ends_with(';') && !text.trim_start().starts_with('\\') {
                text.push(';');
            }
            shell.run_script(&text)
        }
        (None, None) => {
            let stdin = std::io::stdin();
            let interactive = stdin.is_terminal();
            shell.repl(stdin.lock(), interactive)
        }
    };
    if let (Some(out), Some(rel)) = (&cli.output, shell.last_relation()) {
        let text = shell.render(rel)?;
        std::fs::write(out, text).map_err(|e| ShellError {
            code: 1,
            message: format!("writing {}: {e}", out.display()),
        })?;
    }
    let _ = std::io::stdout().flush();
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
