//! Command-line front end.
//!
//! Every command writes into one output directory: its artifacts, a
//! `config.txt` snapshot holding every resolved flag as `key=value`, and
//! `run.log`. Passing the snapshot back with `--config` reproduces the run.

mod commands;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::report::{emit_svg, PlotSpec};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "SALESCAST_OUT";
pub const DEFAULT_OUT_ROOT: &str = "salescast-runs";
pub const SNAPSHOT_FILE: &str = "config.txt";

#[derive(Parser, Debug)]
#[command(name = "salescast", version, about = "Sales forecasting, copula dependence models and Bayesian regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic multi-store sales panel
    Synth(commands::SynthArgs),
    /// Load and validate a sales CSV, writing the canonical panel
    Ingest(commands::IngestArgs),
    /// Fit one forecasting method and score it on the validation window
    Forecast(commands::ForecastArgs),
    /// ARIMA + GBT linear blend
    Blend(commands::EnsembleArgs),
    /// LASSO + residual GBT stack
    Stack(commands::EnsembleArgs),
    /// Validation RMSE of several methods across stores
    Backtest(commands::BacktestArgs),
    /// Fit a bivariate copula with gamma marginals
    CopulaFit(commands::CopulaFitArgs),
    /// Sample a fitted copula model and compute value at risk
    CopulaSample(commands::CopulaSampleArgs),
    /// Fit and resample a C-vine copula
    VineFit(commands::VineFitArgs),
    /// Gibbs sampler for Gaussian-error regression
    BayesGaussian(commands::BayesArgs),
    /// Gibbs sampler for Student-t-error regression
    BayesStudent(commands::BayesArgs),
    /// Re-render report tables and figures from an earlier run
    Report(commands::ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Ingest(_) => "ingest",
            Command::Forecast(_) => "forecast",
            Command::Blend(_) => "blend",
            Command::Stack(_) => "stack",
            Command::Backtest(_) => "backtest",
            Command::CopulaFit(_) => "copula-fit",
            Command::CopulaSample(_) => "copula-sample",
            Command::VineFit(_) => "vine-fit",
            Command::BayesGaussian(_) => "bayes-gaussian",
            Command::BayesStudent(_) => "bayes-student",
            Command::Report(_) => "report",
        }
    }
}

/// Flags shared by every command.
#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CommonArgs {
    /// Output directory; defaults to a per-run directory under $SALESCAST_OUT
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flat key=value file; flags on the command line take precedence
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Fixed output directory name and timestamp-free run log
    #[arg(long)]
    pub deterministic: bool,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

/// Parse `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("config line {}: expected key=value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

/// Insert the flags of a `--config` file directly after the subcommand so
/// that later command-line flags override them. A file may name the
/// subcommand with `command=`.
pub fn expand_config(mut argv: Vec<String>) -> Result<Vec<String>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::Io(format!("{path}: {e}")))?;
    let entries = parse_config(&text)?;
    let has_subcommand = argv.get(1).is_some_and(|a| !a.starts_with('-'));
    let mut flags = Vec::new();
    let mut command = None;
    for (k, v) in entries {
        match (k.as_str(), v.as_str()) {
            ("command", _) => command = Some(v),
            (_, "false") | (_, "") => {}
            (_, "true") => flags.push(format!("--{k}")),
            _ => {
                flags.push(format!("--{k}"));
                flags.push(v);
            }
        }
    }
    if !has_subcommand {
        let command = command.ok_or_else(|| Error::InvalidArgument(format!("{path}: no subcommand given")))?;
        argv.insert(1.min(argv.len()), command);
    }
    let at = 2.min(argv.len());
    argv.splice(at..at, flags);
    Ok(argv)
}

/// Render parsed arguments as a sorted `key=value` snapshot.
pub fn snapshot<T: Serialize>(command: &str, args: &T) -> Result<String> {
    let Value::Object(map) = serde_json::to_value(args)? else {
        return Err(Error::Serde("arguments must serialize to an object".into()));
    };
    let mut out = format!("command={command}\n");
    for (k, v) in map {
        let s = match v {
            Value::Null => continue,
            Value::String(s) => s,
            Value::Array(items) => items
                .iter()
                .map(|x| match x {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            other => other.to_string(),
        };
        out.push_str(&format!("{k}={s}\n"));
    }
    Ok(out)
}

/// Output directory of one command invocation.
pub struct RunDir {
    pub dir: PathBuf,
    deterministic: bool,
    log: Vec<String>,
}

impl RunDir {
    pub fn create(common: &CommonArgs, command: &str) -> Result<Self> {
        let dir = match &common.out {
            Some(d) => d.clone(),
            None => {
                let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| DEFAULT_OUT_ROOT.into());
                if common.deterministic {
                    root.join(command)
                } else {
                    root.join(format!("{command}-{}", chrono::Local::now().format("%Y%m%dT%H%M%S%.3f")))
                }
            }
        };
        fs::create_dir_all(dir.join("figures")).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir, deterministic: common.deterministic, log: Vec::new() })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.path(rel);
        fs::write(&path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.log(format!("wrote {rel}"));
        Ok(())
    }

    pub fn figure(&mut self, name: &str, spec: &PlotSpec) -> Result<()> {
        let svg = emit_svg(spec)?;
        self.write(&format!("figures/{name}.svg"), svg)
    }

    pub fn log(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        if self.deterministic {
            self.log.push(msg);
        } else {
            self.log.push(format!("{} {msg}", chrono::Local::now().format("%Y-%m-%dT%H:%M:%S%.3f")));
        }
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.log("done");
        let text = self.log.join("\n") + "\n";
        let path = self.path("run.log");
        fs::write(&path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Ok(self.dir)
    }
}

fn dispatch(command: Command) -> Result<PathBuf> {
    let name = command.name();
    macro_rules! go {
        ($args:expr, $f:expr) => {{
            let args = $args;
            let mut common = args.common.clone();
            let mut run = RunDir::create(&common, name)?;
            common.out = Some(run.dir.clone());
            let mut snap_args = args.clone();
            snap_args.common = common;
            run.write(SNAPSHOT_FILE, snapshot(name, &snap_args)?)?;
            run.log(format!("command {name} seed {}", args.common.seed));
            $f(&args, &mut run)?;
            run.finish()
        }};
    }
    match command {
        Command::Synth(a) => go!(a, commands::synth),
        Command::Ingest(a) => go!(a, commands::ingest),
        Command::Forecast(a) => go!(a, commands::forecast),
        Command::Blend(a) => go!(a, commands::blend),
        Command::Stack(a) => go!(a, commands::stack),
        Command::Backtest(a) => go!(a, commands::backtest),
        Command::CopulaFit(a) => go!(a, commands::copula_fit),
        Command::CopulaSample(a) => go!(a, commands::copula_sample),
        Command::VineFit(a) => go!(a, commands::vine_fit),
        Command::BayesGaussian(a) => go!(a, commands::bayes_gaussian),
        Command::BayesStudent(a) => go!(a, commands::bayes_student),
        Command::Report(a) => go!(a, commands::report),
    }
}

/// Parse `argv` (program name first) and execute. Returns the process exit
/// code: 0 on success, 2 on usage errors, 1 on runtime errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<String> = argv.into_iter().map(|a| a.into().to_string_lossy().into_owned()).collect();
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cmd = Cli::command().mut_subcommands(|s| s.args_override_self(true));
    let parsed = cmd.try_get_matches_from(&argv).and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_flags_go_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        fs::write(&p, "# comment\ncommand=synth\nstores=5\ndeterministic=true\nout=x\n").unwrap();
        let argv =
            vec!["salescast".to_string(), "--config".into(), p.display().to_string(), "--stores".into(), "2".into()];
        let out = expand_config(argv).unwrap();
        assert_eq!(&out[..2], ["salescast", "synth"]);
        assert_eq!(&out[2..7], ["--stores", "5", "--deterministic", "--out", "x"]);
        assert_eq!(&out[out.len() - 2..], ["--stores", "2"]);
    }

    #[test]
    fn bad_config_line() {
        assert!(parse_config("a=1\nnonsense\n").is_err());
        assert_eq!(parse_config(" a = 1 \n\n#x\n").unwrap(), vec![("a".to_string(), "1".to_string())]);
    }
}
