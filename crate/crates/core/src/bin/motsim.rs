use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use motsim::config::{preset_document, ConfigDocument, MethodKind, Mode, RunConfig, PRESET_DOCUMENTS};
use motsim::output;
use motsim::{Error, Result};

#[derive(Parser)]
#[command(name = "motsim", version, about = "Multi-frequency MOT force maps and Monte Carlo trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration in its own mode.
    Run(RunArgs),
    /// Run a configuration as a force-map sweep.
    Sweep(RunArgs),
    /// List or print the built-in configurations.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Parse and resolve a configuration without running it.
    Validate(Source),
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    Show { name: String },
}

#[derive(Args)]
struct Source {
    /// JSON config document, or a CSV written by an earlier run.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Name of a built-in configuration (see `presets list`).
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Output directory (default: the document's `output`, else `.`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Does not change the output.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long, value_parser = parse_method)]
    method: Option<MethodKind>,
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown mode `{s}` (sweep, point, trajectory)"))
}

fn parse_method(s: &str) -> std::result::Result<MethodKind, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown method `{s}` (steady, kmc)"))
}

fn load(source: &Source) -> Result<ConfigDocument> {
    match (&source.config, &source.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
            ConfigDocument::parse(&text)
        }
        (None, Some(name)) => preset_document(name),
        (None, None) => Err(Error::config("--config", "give --config or --preset")),
    }
}

fn execute(args: RunArgs, force_sweep: bool) -> Result<()> {
    let mut doc = load(&args.source)?;
    if let Some(seed) = args.seed {
        doc.seed = seed;
    }
    if let Some(mode) = args.mode {
        doc.mode = mode;
    }
    if force_sweep {
        doc.mode = Mode::Sweep;
    }
    if let Some(method) = args.method {
        doc.method = method;
    }
    let jobs = args.jobs.or(doc.jobs);
    if jobs == Some(0) {
        return Err(Error::config("--jobs", "must be at least 1"));
    }
    let dir = args
        .out
        .or_else(|| doc.output.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let run = RunConfig::from_document(doc)?;
    for path in output::run(&run, &dir, jobs)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn validate(source: Source) -> Result<()> {
    let run = RunConfig::from_document(load(&source)?)?;
    println!("config `{}` is valid (sha256:{})", run.document.name, run.hash);
    for case in &run.cases {
        let s = &case.setup;
        println!(
            "  case {}: scheme {} ({} sublevels), {} beams, Γ = {:.6e} s⁻¹, accel unit {:.6e} m/s²",
            case.name,
            s.scheme.name(),
            s.scheme.len(),
            s.beams.len(),
            s.gamma(),
            s.accel_unit()
        );
        for b in &s.beams {
            println!(
                "    {}: link {}, δ = {:+.4} Γ, s = {:.5}",
                b.label,
                s.scheme.links()[b.target_link].name,
                b.detuning / s.scheme.links()[b.target_link].gamma_total,
                b.saturation
            );
        }
        for (name, grid) in &case.grids {
            println!("    map {name}: {} ({} points)", grid.axis.name(), grid.len());
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => execute(args, false),
        Command::Sweep(args) => execute(args, true),
        Command::Presets { action } => {
            match action {
                PresetAction::List => {
                    for (name, description) in PRESET_DOCUMENTS {
                        println!("{name:<12} {description}");
                    }
                }
                PresetAction::Show { name } => println!("{}", preset_document(&name)?.to_pretty_json()),
            }
            Ok(())
        }
        Command::Validate(source) => validate(source),
    }
}

fn error_record(e: &Error) -> serde_json::Value {
    let mut record = json!({
        "error": e.kind(),
        "message": e.to_string(),
        "exit_code": e.exit_code(),
    });
    if let Error::Config { path, .. } = e {
        record["path"] = json!(path);
    }
    if let Error::AtGridPoint { z, v, .. } = e {
        record["z_m"] = json!(z);
        record["v_m_s"] = json!(v);
    }
    record
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
        assert!(Cli::try_parse_from(["motsim", "run"]).is_err());
        assert!(Cli::try_parse_from(["motsim", "run", "--preset", "fig2", "--config", "x.json"]).is_err());
        assert!(Cli::try_parse_from(["motsim", "sweep", "--preset", "fig2", "--jobs", "2"]).is_ok());
    }

    #[test]
    fn mode_and_method_names() {
        assert_eq!(parse_mode("trajectory").unwrap(), Mode::Trajectory);
        assert_eq!(parse_method("kmc").unwrap(), MethodKind::Kmc);
        assert!(parse_mode("orbit").is_err());
        assert!(parse_method("exact").is_err());
    }

    #[test]
    fn dark_preset_reports_the_grid_point() {
        let dir = tempfile::tempdir().unwrap();
        let cli = Cli::try_parse_from([
            "motsim",
            "run",
            "--preset",
            "lambda_dark",
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .unwrap();
        let e = dispatch(cli).unwrap_err();
        let record = error_record(&e);
        assert_eq!(record["exit_code"], 3);
        assert!(record["z_m"].is_f64() && record["v_m_s"].is_f64());
    }

    #[test]
    fn bad_config_names_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, r#"{"name": "x", "cases": [{"name": "a"}]}"#).unwrap();
        let cli = Cli::try_parse_from(["motsim", "validate", "--config", path.to_str().unwrap()]).unwrap();
        let record = error_record(&dispatch(cli).unwrap_err());
        assert_eq!(record["error"], "config");
        assert!(record["path"].as_str().unwrap().starts_with("cases[0]"), "{record}");
    }
}
