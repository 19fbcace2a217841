//! Command-line surface: dataset generation, colorization, training,
//! evaluation, parameter sweeps, and PCA visualization.

mod commands;
mod config;

use config::RunConfig;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::process::ExitCode;

/// Exit-code contract: 0 ok, 2 config error, 3 I/O error, 4 numeric
/// failure.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl From<omnialign_core::Error> for CliError {
    fn from(e: omnialign_core::Error) -> Self {
        use omnialign_core::Error::*;
        match e {
            Io { .. } | DataMissing { .. } => CliError::Io(e.to_string()),
            NonFiniteLoss { .. } | ZeroVector | TauOutOfRange { .. } => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

/// Parsed command-line arguments: `--flag value` pairs, bare `--switch`es,
/// and `--section.key value` config overrides.
pub struct Args {
    flags: BTreeMap<String, String>,
    switches: BTreeSet<String>,
    overrides: Vec<(String, String, String)>,
}

impl Args {
    fn parse(argv: &[String], value_flags: &[&str], switch_flags: &[&str]) -> Result<Args, CliError> {
        let mut flags = BTreeMap::new();
        let mut switches = BTreeSet::new();
        let mut overrides = Vec::new();
        let mut i = 0;
        while i < argv.len() {
            let arg = &argv[i];
            let name = arg.strip_prefix("--").ok_or_else(|| {
                CliError::Config(format!("unexpected positional argument {arg:?}"))
            })?;
            if switch_flags.contains(&name) {
                switches.insert(name.to_string());
                i += 1;
                continue;
            }
            let value = argv
                .get(i + 1)
                .ok_or_else(|| CliError::Config(format!("--{name} expects a value")))?
                .clone();
            if value_flags.contains(&name) {
                flags.insert(name.to_string(), value);
            } else if let Some((section, key)) = name.split_once('.') {
                overrides.push((section.to_string(), key.to_string(), value));
            } else {
                return Err(CliError::Config(format!("unknown flag --{name}")));
            }
            i += 2;
        }
        Ok(Args {
            flags,
            switches,
            overrides,
        })
    }

    pub fn required(&self, name: &str) -> Result<&str, CliError> {
        self.flags
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| CliError::Config(format!("missing required flag --{name}")))
    }

    pub fn optional(&self, name: &str) -> Option<&str> {
        self.flags.get(name).map(String::as_str)
    }

    pub fn switch(&self, name: &str) -> bool {
        self.switches.contains(name)
    }

    /// Load the config file named by --config (or defaults when allowed)
    /// and apply `--section.key value` overrides.
    pub fn load_config(&self, config_required: bool) -> Result<RunConfig, CliError> {
        let mut cfg = match self.optional("config") {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Io(format!("cannot read {path}: {e}")))?;
                RunConfig::parse(&text).map_err(CliError::Config)?
            }
            None if config_required => {
                return Err(CliError::Config("missing required flag --config".into()))
            }
            None => RunConfig::default(),
        };
        for (section, key, value) in &self.overrides {
            cfg.set(section, key, value).map_err(CliError::Config)?;
        }
        Ok(cfg)
    }
}

const TOP_HELP: &str = "\
omnialign — cross-modal alignment at desk scale

usage: omnialign <command> [flags]

commands:
  gen-data   write a synthetic scene dataset and print its manifest
  colorize   re-render a scalar map with a palette from an RGB image
  train      run the training loop, write a checkpoint and a metrics log
  eval       evaluate a checkpoint: retrieval, diagnostics, k-NN, PCK
  sweep      train and evaluate across a parameter grid
  pca        emit PCA visualizations of frozen and adapted features

run `omnialign <command> --help` for per-command flags. Every command
accepts `--<section>.<key> <value>` overrides for any config key; the
config file format and defaults are listed in each command's help.
";

fn command_help(cmd: &str) -> String {
    let usage = match cmd {
        "gen-data" => "usage: omnialign gen-data --config FILE --out DIR [--force]\n\nWrites [data] n_scenes scenes as scene_%05d/{rgb.ppm, depth.f32, seg.pgm}\nand prints a JSON manifest with content hashes. Refuses a non-empty\noutput directory without --force.",
        "colorize" => "usage: omnialign colorize --rgb FILE.ppm --raw FILE[.f32|.pgm] --out FILE.ppm [--bins 64] [--kernel 5]\n\nRuns natural colorization of the scalar map with the palette aggregated\nfrom the RGB image.",
        "train" => "usage: omnialign train --config FILE --out-checkpoint FILE --log FILE\n\nRuns the training loop; the log holds one JSON object per step with\nfields step, total, align, anchor, tau.",
        "eval" => "usage: omnialign eval --checkpoint FILE --report FILE [--data DIR] [--which retrieval|diagnostics|knn|pck|all]\n\nEmbeds the dataset with alpha = 0, runs the selected evaluations, writes\na JSON report, and prints text tables. Without --data, the held-out\nsynthetic split from the config's [data] section is used.",
        "sweep" => "usage: omnialign sweep --param lambda_anchor|alpha_max --values V1,V2,... --config FILE --out DIR [--jobs N]\n\nTrains one model per value with fixed seeds, evaluates each, and emits a\nfrontier table (JSON + text). --jobs runs trainings concurrently, capped\nby the OMNIALIGN_THREADS environment variable.",
        "pca" => "usage: omnialign pca --checkpoint FILE --scene DIR --out-prefix PREFIX\n\nEmits six PPM images: frozen (teacher) and adapted (student) PCA\nrenderings for each of the three modalities of one scene directory.",
        _ => "",
    };
    format!(
        "{usage}\n\nconfig keys and defaults (override with --<section>.<key> <value>):\n\n{}",
        RunConfig::default().canonical()
    )
}

fn dispatch(cmd: &str, rest: &[String]) -> Result<(), CliError> {
    match cmd {
        "gen-data" => {
            let args = Args::parse(rest, &["config", "out"], &["force"])?;
            commands::gen_data(&args)
        }
        "colorize" => {
            let args = Args::parse(rest, &["rgb", "raw", "out", "bins", "kernel"], &[])?;
            commands::colorize(&args)
        }
        "train" => {
            let args = Args::parse(rest, &["config", "out-checkpoint", "log"], &[])?;
            commands::train(&args)
        }
        "eval" => {
            let args = Args::parse(rest, &["checkpoint", "data", "report", "which", "config"], &[])?;
            commands::eval(&args)
        }
        "sweep" => {
            let args = Args::parse(rest, &["param", "values", "config", "out", "jobs"], &[])?;
            commands::sweep(&args)
        }
        "pca" => {
            let args = Args::parse(rest, &["checkpoint", "scene", "out-prefix", "config"], &[])?;
            commands::pca(&args)
        }
        _ => Err(CliError::Config(format!("unknown command {cmd:?}"))),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    if argv.is_empty() || argv[0] == "--help" || argv[0] == "-h" {
        print!("{TOP_HELP}");
        return ExitCode::SUCCESS;
    }
    let cmd = argv[0].as_str();
    let rest = &argv[1..];
    if rest.iter().any(|a| a == "--help" || a == "-h") {
        print!("{}", command_help(cmd));
        return ExitCode::SUCCESS;
    }
    match dispatch(cmd, rest) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
