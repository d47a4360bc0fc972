use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::Value;

use floqskin::harness::{self, Experiment, ExperimentConfig};
use floqskin::Error;

/// Floquet spectra, generalized Brillouin zones and wavepacket transport of
/// driven dissipative Aubry-Andre-Harper chains.
#[derive(Parser, Debug)]
#[command(name = "floqskin", version, about)]
struct Cli {
    /// Experiment name or preset name.
    target: Option<String>,
    /// JSON configuration. With a preset it is merged on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `path.to.key=value` applied after the config file; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Print the preset catalog and exit.
    #[arg(long)]
    list_presets: bool,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

fn load(cli: &Cli, target: &str) -> Result<ExperimentConfig, Error> {
    let file = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            Some(serde_json::from_str::<Value>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let mut config = if let Some(preset) = harness::find_preset(target) {
        let mut v = preset.config().to_value();
        if let Some(f) = file {
            merge(&mut v, f);
        }
        ExperimentConfig::from_value(v)?
    } else if let Some(exp) = Experiment::from_name(target) {
        let mut v = file.ok_or_else(|| Error::Config(format!("experiment `{exp}` needs --config with a model")))?;
        if let Value::Object(m) = &mut v {
            match m.get("experiment") {
                Some(Value::String(s)) if s != exp.name() => {
                    return Err(Error::Config(format!("config names experiment `{s}`, command line `{exp}`")))
                }
                _ => {
                    m.insert("experiment".into(), Value::String(exp.name().into()));
                }
            }
        }
        ExperimentConfig::from_value(v)?
    } else {
        return Err(Error::Config(format!("unknown experiment or preset `{target}`")));
    };
    for o in &cli.overrides {
        config = config.with_override(o)?;
    }
    if let Some(out) = &cli.out {
        config.output_dir = Some(out.clone());
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.list_presets {
        for (name, description) in harness::list_presets() {
            println!("{name:<12} {description}");
        }
        return ExitCode::SUCCESS;
    }
    let target = cli.target.clone().unwrap_or_default();
    if target.is_empty() {
        eprintln!("error: no experiment given; expected one of {} or a preset (see --list-presets)",
            Experiment::ALL.map(|e| e.name()).join(", "));
        return ExitCode::from(EXIT_CONFIG);
    }
    let config = match load(&cli, &target) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("experiment `{target}`: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let Some(out) = config.output_dir.clone() else {
        eprintln!("experiment `{target}`: no output directory (use --out or output_dir)");
        return ExitCode::from(EXIT_CONFIG);
    };
    match harness::run(&config, &out) {
        Ok(m) => {
            println!("{} files written to {} in {:.1} s", m.files.len() + 1, out.display(), m.wall_clock_seconds);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("experiment `{}`: {e}", config.experiment);
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_NUMERICAL })
        }
    }
}
