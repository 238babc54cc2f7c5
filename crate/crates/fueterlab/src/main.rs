use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use fueterlab::runner::{self, SchemaError, Subcommand, REPORT_SCHEMA};

#[derive(Debug, Parser)]
#[command(name = "fueterlab", version, about = "Run a fueterlab experiment from a TOML config")]
struct Cli {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads for the parallel kernels.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (default: `output.dir` from the config, else `out/<subcommand>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long)]
    plots: bool,
}

fn schema_exit(e: &SchemaError) -> ExitCode {
    eprintln!("fueterlab: {e}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("fueterlab: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => return schema_exit(&SchemaError { path: "<file>".into(), message: format!("{}: {e}", cli.config.display()) }),
    };
    let cfg = match runner::parse_config(&text) {
        Ok(c) => c,
        Err(e) => return schema_exit(&e),
    };
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cli.subcommand.id()));
    let resolved = match runner::resolve(cfg, cli.subcommand) {
        Ok(r) => r,
        Err(e) => return schema_exit(&e),
    };
    let outcome = match runner::run(&resolved) {
        Ok(o) => o,
        Err(e) => {
            let report = json!({
                "schema": REPORT_SCHEMA,
                "subcommand": cli.subcommand.id(),
                "pass": false,
                "error": e.to_string(),
            });
            println!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
            let _ = std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(dir.join("report.json"), report.to_string()));
            return ExitCode::from(1);
        }
    };
    if let Err(e) = runner::write_artifacts(&outcome, &resolved, &dir, cli.plots) {
        eprintln!("fueterlab: writing {}: {e}", dir.display());
        return ExitCode::from(1);
    }
    for c in &outcome.checks {
        eprintln!("{} {:<40} {:>14.6e}  {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.requirement);
    }
    eprintln!("artifacts in {}", dir.display());
    if outcome.pass() {
        ExitCode::SUCCESS
    } else {
        println!("{}", serde_json::to_string_pretty(&outcome.report_json()).unwrap_or_default());
        ExitCode::from(1)
    }
}
