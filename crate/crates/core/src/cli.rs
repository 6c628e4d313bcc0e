//! Command-line front end: resolves the configuration, runs the sweep and
//! writes `spectrum.csv`, `spectrum.meta.json` and requested trajectories.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use toml::Value;

use crate::config::{parse_grid, parse_override, ConfigError, RunConfig, RunScenario};
use crate::dressed::PredictedComb;
use crate::model::SystemParams;
use crate::oracle::run_classical_sweep;
use crate::spectra::{match_peaks, MatchReport, Peak};
use crate::sweep::{run_sweep, PointFailure, ResonanceSpectrum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_POINT_FAILURES: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "lambda-resonance", version, about = "Pulse-train driven Λ atom: repetition-rate sweeps and resonance detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a sweep and write its artifacts.
    Run(RunArgs),
    /// Print the fully resolved configuration as TOML.
    Config(RunArgs),
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// fig2 | fig3 | fig5 | classical | custom
    #[arg(value_name = "SCENARIO")]
    pub scenario_pos: Option<String>,
    #[arg(long)]
    pub scenario: Option<String>,
    /// TOML configuration file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub omega_ab: Option<f64>,
    #[arg(long)]
    pub rabi_ac: Option<f64>,
    #[arg(long)]
    pub rabi_bc: Option<f64>,
    /// Classical natural frequency.
    #[arg(long)]
    pub omega0: Option<f64>,
    /// Classical damping rate.
    #[arg(long)]
    pub damping: Option<f64>,
    /// min:max:points
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Exit nonzero if any grid point failed.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the analysed trajectory at the grid point nearest this rate.
    #[arg(long, value_name = "OMEGA_REP")]
    pub dump_trajectory: Vec<f64>,
    /// Override any configuration key, e.g. `--set f2.pulse_height=4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl RunArgs {
    fn overrides(&self) -> Result<Vec<(String, Value)>, ConfigError> {
        let mut out = Vec::new();
        if let Some(s) = self.scenario.as_ref().or(self.scenario_pos.as_ref()) {
            out.push(("scenario".to_string(), Value::String(s.clone())));
        }
        let floats = [
            ("system.omega_ab", self.omega_ab),
            ("system.rabi_ac", self.rabi_ac),
            ("system.rabi_bc", self.rabi_bc),
            ("classical.omega0", self.omega0),
            ("classical.damping", self.damping),
        ];
        for (k, v) in floats {
            if let Some(v) = v {
                out.push((k.to_string(), Value::Float(v)));
            }
        }
        if let Some(g) = &self.grid {
            let (min, max, points) = parse_grid(g)?;
            out.push(("grid.min".into(), Value::Float(min)));
            out.push(("grid.max".into(), Value::Float(max)));
            out.push(("grid.points".into(), Value::Integer(points as i64)));
        }
        if let Some(w) = self.workers {
            out.push(("workers".into(), Value::Integer(w as i64)));
        }
        if self.strict {
            out.push(("strict".into(), Value::Boolean(true)));
        }
        if let Some(o) = &self.out {
            out.push(("out".into(), Value::String(o.display().to_string())));
        }
        if !self.dump_trajectory.is_empty() {
            let arr = self.dump_trajectory.iter().map(|&w| Value::Float(w)).collect();
            out.push(("dump_trajectory".into(), Value::Array(arr)));
        }
        for s in &self.set {
            out.push(parse_override(s)?);
        }
        Ok(out)
    }

    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
                Some(text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?)
            }
            None => None,
        };
        RunConfig::resolve(file, &self.overrides()?)
    }
}

#[derive(Debug, Serialize)]
struct Meta<'a> {
    config: &'a RunConfig,
    /// System parameters with cross couplings resolved.
    params: SystemParams,
    predicted: &'a PredictedComb,
    peaks: &'a [Peak],
    unmatched_predictions: usize,
    failures: &'a [PointFailure],
    diagnostics: Option<Diagnostics>,
    version: &'static str,
}

#[derive(Debug, Serialize)]
struct Diagnostics {
    max_trace_error: f64,
    min_eigenvalue: f64,
    total_steps: usize,
}

fn diagnostics(s: &ResonanceSpectrum) -> Diagnostics {
    let d = s.diagnostics.iter().flatten();
    Diagnostics {
        max_trace_error: d.clone().map(|d| d.max_trace_error).fold(0.0, f64::max),
        min_eigenvalue: d.clone().map(|d| d.min_eigenvalue).fold(f64::INFINITY, f64::min),
        total_steps: d.map(|d| d.steps).sum(),
    }
}

/// Outcome of a completed run.
#[derive(Debug)]
pub struct RunSummary {
    pub config: RunConfig,
    pub report: MatchReport,
    pub failures: Vec<PointFailure>,
    pub spectrum: Option<ResonanceSpectrum>,
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()
}

/// Runs a resolved configuration and writes its artifacts under `cfg.out`.
pub fn execute(cfg: &RunConfig) -> Result<RunSummary, Box<dyn std::error::Error>> {
    fs::create_dir_all(&cfg.out)?;
    let predicted = cfg.predicted();
    let (peaks, failures, spectrum) = if cfg.scenario == RunScenario::Classical {
        let s = run_classical_sweep(&cfg.classical_config(), cfg.workers)?;
        write_file(&cfg.out.join("spectrum.csv"), |w| s.write_csv(w))?;
        (s.peaks, s.failures, None)
    } else {
        let sweep = cfg.sweep_config();
        let s = run_sweep(&sweep, cfg.workers)?;
        write_file(&cfg.out.join("spectrum.csv"), |w| s.write_csv(w))?;
        for &w in &cfg.dump_trajectory {
            let i = s.nearest_index(w).expect("grid is not empty");
            let omega = s.omega_rep[i];
            let (traj, _) = sweep.trajectory_at(omega)?;
            write_file(&cfg.out.join(format!("trajectory_{omega}.csv")), |f| traj.write_csv(f))?;
        }
        (s.peaks.clone(), s.failures.clone(), Some(s))
    };
    let report = match_peaks(&peaks, &predicted, cfg.detection.match_tol_frac);
    let meta = Meta {
        config: cfg,
        params: cfg.system.params(),
        predicted: &predicted,
        peaks: &report.peaks,
        unmatched_predictions: report.unmatched_predictions.len(),
        failures: &failures,
        diagnostics: spectrum.as_ref().map(diagnostics),
        version: env!("CARGO_PKG_VERSION"),
    };
    write_file(&cfg.out.join("spectrum.meta.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &meta)?;
        writeln!(w)
    })?;
    Ok(RunSummary { config: cfg.clone(), report, failures, spectrum })
}

/// Human-readable peak table.
pub fn format_report(summary: &RunSummary) -> String {
    let mut s = String::new();
    let cfg = &summary.config;
    s += &format!(
        "{:?}: {} grid points, {} failed, output in {}\n",
        cfg.scenario,
        cfg.grid.points,
        summary.failures.len(),
        cfg.out.display()
    );
    s += "  location     height       prominence   fwhm         label\n";
    for p in &summary.report.peaks {
        let label = match &p.label {
            Some(l) if l.m == 1 => format!("{:?} {:.4}/{}", l.kind, l.base, l.n),
            Some(l) => format!("{:?} {}·{:.4}/{}", l.kind, l.m, l.base, l.n),
            None => "-".to_string(),
        };
        s += &format!("  {:<12.6} {:<12.5e} {:<12.5e} {:<12.5e} {}\n", p.location, p.height, p.prominence, p.fwhm, label);
    }
    for e in &summary.report.unmatched_predictions {
        s += &format!("  unmatched prediction {:.6} ({:?}, m={}, n={})\n", e.frequency, e.kind, e.m, e.n);
    }
    for f in &summary.failures {
        s += &format!("  point {} (ω_Rep = {}) failed: {}\n", f.index, f.omega_rep, f.error);
    }
    s
}

/// Entry point shared by the binary and tests; returns the exit code.
pub fn main_with(cli: Cli) -> i32 {
    let (args, print_only) = match cli.command {
        Command::Run(a) => (a, false),
        Command::Config(a) => (a, true),
    };
    let cfg = match args.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if print_only {
        print!("{}", cfg.to_toml());
        return EXIT_OK;
    }
    match execute(&cfg) {
        Ok(summary) => {
            print!("{}", format_report(&summary));
            if cfg.strict && !summary.failures.is_empty() {
                eprintln!("error: {} grid point(s) failed", summary.failures.len());
                EXIT_POINT_FAILURES
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_IO
        }
    }
}
