//! Command-line parsing and the simulate / sweep drivers.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{set_path, ExperimentConfig, ExperimentKind, UnitSystem};
use crate::error::CliError;
use crate::experiments;
use crate::output::{sha256_hex, write_outputs, Column, Provenance, RunOutput, Scalar, Table};
use crate::presets;

#[derive(Debug, Parser)]
#[command(name = "gemxpm", version, about = "Gradient echo memory XPM simulator")]
struct Cli {
    /// Directory for CSV tables and the JSON summary.
    #[arg(long, global = true, default_value = "gemxpm-out")]
    out: PathBuf,
    /// Worker threads for sweeps and amplitude scans.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Recorded in the outputs; every solver is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment from a config file or `preset:<name>`.
    Simulate { config: String },
    /// Run a sweep config.
    Sweep { config: String },
    /// List or print the built-in presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Debug, Subcommand)]
enum PresetAction {
    List,
    Show { name: String },
}

#[derive(Debug, Clone)]
pub struct Options {
    pub out: PathBuf,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

impl Options {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            out: out.into(),
            workers: None,
            seed: None,
        }
    }
}

/// Result of a finished run.
#[derive(Debug)]
pub struct Completed {
    pub config: ExperimentConfig,
    pub output: RunOutput,
    pub files: Vec<PathBuf>,
}

/// Parse arguments, run, report, and return the process exit code.
pub fn run_cli<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let opts = Options {
        out: cli.out,
        workers: cli.workers,
        seed: cli.seed,
    };
    let result = match cli.command {
        Command::Simulate { config } => load(&config).and_then(|text| simulate(&text, &opts)),
        Command::Sweep { config } => load(&config).and_then(|text| {
            let cfg = ExperimentConfig::from_toml(&text)?;
            if cfg.experiment != ExperimentKind::Sweep {
                return Err(CliError::Config(format!(
                    "experiment: `sweep` needs a sweep config, found `{}`",
                    cfg.experiment.name()
                )));
            }
            simulate(&text, &opts)
        }),
        Command::Presets { action } => return presets_command(action),
    };
    match result {
        Ok(done) => {
            for s in &done.output.scalars {
                match s.value {
                    Some(v) => println!("{:<28} {:>24.12e} {}", s.name, v, s.unit),
                    None => println!("{:<28} {:>24} {}", s.name, "-", s.unit),
                }
            }
            println!("wrote {} files to {}", done.files.len(), opts.out.display());
            0
        }
        Err(e) => {
            eprintln!("gemxpm: {e}");
            e.exit_code()
        }
    }
}

fn presets_command(action: PresetAction) -> u8 {
    match action {
        PresetAction::List => {
            for p in presets::PRESETS {
                println!("{:<18} {}", p.name, p.summary);
            }
            0
        }
        PresetAction::Show { name } => match presets::get(&name) {
            Some(p) => {
                print!("{}", p.text);
                0
            }
            None => {
                eprintln!("gemxpm: config error: no preset named `{name}`");
                2
            }
        },
    }
}

/// Config text from a path or from `preset:<name>`.
pub fn load(source: &str) -> Result<String, CliError> {
    if let Some(name) = source.strip_prefix("preset:") {
        return presets::get(name)
            .map(|p| p.text.to_string())
            .ok_or_else(|| CliError::Config(format!("no preset named `{name}`")));
    }
    std::fs::read_to_string(source).map_err(|e| CliError::Config(format!("{source}: {e}")))
}

/// Parse, run and write one config (single experiment or sweep).
pub fn simulate(text: &str, opts: &Options) -> Result<Completed, CliError> {
    let start = Instant::now();
    let raw: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    if raw.is_empty() {
        return Err(CliError::Config("config is empty".into()));
    }
    let config = ExperimentConfig::from_table(raw.clone())?;
    let output = in_pool(opts.workers, || {
        if config.experiment == ExperimentKind::Sweep {
            run_sweep(&raw, &config)
        } else {
            run_single(&config)
        }
    })??;
    let files = write(&config, &output, opts, start.elapsed().as_secs_f64())?;
    Ok(Completed { config, output, files })
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(CliError::Config("--workers: must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| CliError::Io(std::io::Error::other(e))),
    }
}

/// Run a non-sweep config, converting lab units in and out.
pub fn run_single(config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let mut output = experiments::run(&config.to_gamma_units()?)?;
    if config.units.system == UnitSystem::Lab {
        to_lab_units(&mut output, config.units.gamma.expect("checked"));
    }
    Ok(output)
}

fn run_sweep(raw: &toml::Table, config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let spec = config.sweep.as_ref().expect("checked");
    let mut base = raw.clone();
    base.remove("sweep");
    base.insert("experiment".into(), toml::Value::String(spec.base.name().into()));
    let points: Vec<ExperimentConfig> = spec
        .values
        .iter()
        .map(|&v| {
            let mut t = base.clone();
            set_path(&mut t, &spec.parameter, v)?;
            ExperimentConfig::from_table(t)
        })
        .collect::<Result<_, _>>()?;
    let outputs: Vec<RunOutput> = points.par_iter().map(run_single).collect::<Result<_, _>>()?;

    let names: Vec<(String, String)> = outputs[0]
        .scalars
        .iter()
        .map(|s| (s.name.clone(), s.unit.clone()))
        .collect();
    let mut columns = vec![Column {
        name: spec.parameter.clone(),
        unit: "as configured".into(),
    }];
    columns.extend(names.iter().map(|(n, u)| Column {
        name: n.clone(),
        unit: u.clone(),
    }));
    let mut table = Table::with_columns("sweep", columns);
    for (v, out) in spec.values.iter().zip(&outputs) {
        let mut row = vec![*v];
        for (name, _) in &names {
            let s = out
                .scalars
                .iter()
                .find(|s| &s.name == name)
                .ok_or_else(|| CliError::Config(format!("sweep: scalar `{name}` missing at {} = {v}", spec.parameter)))?;
            row.push(s.value.unwrap_or(f64::NAN));
        }
        table.push(row);
    }
    Ok(RunOutput {
        tables: vec![table],
        scalars: vec![Scalar::new("points", spec.values.len() as f64, "1")],
        chois: Vec::new(),
    })
}

enum Scale {
    Mul(f64),
    Div(f64),
}

impl Scale {
    fn apply(&self, x: f64) -> f64 {
        match self {
            Self::Mul(g) => x * g,
            Self::Div(g) => x / g,
        }
    }
}

/// Lab-unit counterpart of a gamma-unit tag.
fn lab_unit(unit: &str, gamma: f64) -> Option<(Scale, &'static str)> {
    match unit {
        "gamma" => Some((Scale::Mul(gamma), "rad/us")),
        "1/gamma" => Some((Scale::Div(gamma), "us")),
        "gamma/L" => Some((Scale::Mul(gamma), "rad/us/L")),
        "rad/gamma^2" => Some((Scale::Div(gamma * gamma), "rad us^2")),
        _ => None,
    }
}

fn to_lab_units(output: &mut RunOutput, gamma: f64) {
    for t in &mut output.tables {
        for (i, c) in t.columns.iter_mut().enumerate() {
            if let Some((scale, unit)) = lab_unit(&c.unit, gamma) {
                c.unit = unit.into();
                if let Some(stem) = c.name.strip_suffix("_gamma") {
                    c.name = format!("{stem}_us");
                }
                for r in &mut t.rows {
                    r[i] = scale.apply(r[i]);
                }
            }
        }
    }
    for s in &mut output.scalars {
        if let Some((scale, unit)) = lab_unit(&s.unit, gamma) {
            s.unit = unit.into();
            s.value = s.value.map(|v| scale.apply(v));
        }
    }
}

fn units_label(config: &ExperimentConfig) -> String {
    match (config.units.system, config.units.gamma) {
        (UnitSystem::Lab, Some(g)) => format!("lab (rad/us, us; gamma = {g} rad/us)"),
        _ => "gamma (rates in gamma; times in 1/gamma)".into(),
    }
}

fn write(config: &ExperimentConfig, output: &RunOutput, opts: &Options, wall: f64) -> Result<Vec<PathBuf>, CliError> {
    let echo = serde_json::to_value(config)?;
    let prov = Provenance {
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: sha256_hex(serde_json::to_string(&echo)?.as_bytes()),
        wall_time_s: wall,
        units: units_label(config),
        seed: opts.seed,
    };
    write_outputs(Path::new(&opts.out), output, &echo, &config.to_toml(), &prov)
}
