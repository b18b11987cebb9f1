use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stochphase::sweep::{run_experiment, validate_config};

#[derive(Parser)]
#[command(name = "stochphase", version, about = "Wiener estimation of a stochastic optical phase: figure presets and sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset (fig2, fig3, fig4, fig5) or a custom sweep.
    Run {
        preset: String,
        /// Parameter override, repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Monte Carlo replicas per overlay point (fig3, fig4).
        #[arg(long)]
        replicas: Option<usize>,
        /// Comma-separated list of csv, json.
        #[arg(long)]
        format: Option<String>,
        /// linearized or exact
        #[arg(long)]
        fidelity: Option<String>,
        /// TOML file with the same keys; flags take precedence.
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
        /// Record the wall-clock time in file headers.
        #[arg(long)]
        timestamp: bool,
    },
}

fn toml_scalar(key: &str, v: &toml::Value) -> Result<String, String> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        toml::Value::Array(items) => items
            .iter()
            .map(|i| toml_scalar(key, i))
            .collect::<Result<Vec<_>, _>>()
            .map(|v| v.join(",")),
        _ => Err(format!("{key}: unsupported value type")),
    }
}

fn read_config(path: &PathBuf, doc: &mut BTreeMap<String, String>) -> Result<(), String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| format!("{}: {e}", path.display()))?;
    for (key, value) in &table {
        match (key.as_str(), value) {
            ("parameters", toml::Value::Table(params)) => {
                for (k, v) in params {
                    doc.insert(k.clone(), toml_scalar(k, v)?);
                }
            }
            _ => {
                doc.insert(key.clone(), toml_scalar(key, value)?);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let Command::Run {
        preset,
        set,
        out,
        seed,
        replicas,
        format,
        fidelity,
        config,
        timestamp,
    } = cli.command;

    let mut doc = BTreeMap::new();
    if let Some(path) = &config {
        if let Err(e) = read_config(path, &mut doc) {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    doc.insert("preset".into(), preset);
    for kv in &set {
        match kv.split_once('=') {
            Some((k, v)) => {
                doc.insert(k.trim().to_string(), v.trim().to_string());
            }
            None => {
                eprintln!("error: --set expects KEY=VALUE, got {kv:?}");
                return ExitCode::from(1);
            }
        }
    }
    let flags = [
        ("out", out.map(|p| p.display().to_string())),
        ("seed", seed.map(|s| s.to_string())),
        ("replicas", replicas.map(|r| r.to_string())),
        ("format", format),
        ("fidelity", fidelity),
        ("timestamp", timestamp.then(|| "true".to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            doc.insert(k.into(), v);
        }
    }

    let outcome = validate_config(&doc).and_then(|spec| run_experiment(&spec));
    match outcome {
        Ok(run) => {
            for (k, v) in &run.result.summary {
                println!("{k} = {v:e}");
            }
            for f in &run.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

