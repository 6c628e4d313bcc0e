//! Repetition-rate sweeps: one integration per grid point, run in parallel,
//! gathered in grid order.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drive::{rep_rate_to_period, DriveEnvelope, Drives, EnvelopeKind};
use crate::error::{IntegrationError, ParamError};
use crate::integrator::{integrate_with, IntegrateOptions, Trajectory};
use crate::io::fmt_f64;
use crate::model::{DensityState, SystemParams};
use crate::observables::{analyze, Channel, ObservableSet, Window};
use crate::spectra::{detect_peaks_flagged, fill_gaps, Peak, QUANTUM_MIN_PROMINENCE};

pub const SPECTRUM_CSV_HEADER: &str =
    "omega_rep,osc_amp_bc,pop_a,pop_b,pop_c,abs_pump,abs_probe,inv_pump,inv_probe,coh_ab";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// cw E_ac, pulsed E_bc.
    Fig2,
    /// E_ac with cw and pulsed parts, E_bc absent.
    Fig3,
    /// Strong pulsed E_ac, weak cw E_bc.
    Fig5,
    /// Envelopes taken verbatim from the configuration.
    Custom,
}

/// Shape of one envelope, independent of the repetition rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSpec {
    pub kind: EnvelopeKind,
    #[serde(default)]
    pub cw_level: f64,
    /// Gaussian σ.
    #[serde(default)]
    pub pulse_width: f64,
    #[serde(default)]
    pub pulse_height: f64,
}

impl EnvelopeSpec {
    pub fn off() -> Self {
        Self::cw(0.0)
    }

    pub fn cw(level: f64) -> Self {
        Self { kind: EnvelopeKind::Cw, cw_level: level, pulse_width: 0.0, pulse_height: 0.0 }
    }

    pub fn pulses(width: f64, height: f64) -> Self {
        Self { kind: EnvelopeKind::PulseTrain, cw_level: 0.0, pulse_width: width, pulse_height: height }
    }

    pub fn mixed(cw_level: f64, width: f64, height: f64) -> Self {
        Self { kind: EnvelopeKind::Mixed, ..Self::pulses(width, height) }.with_cw(cw_level)
    }

    fn with_cw(mut self, level: f64) -> Self {
        self.cw_level = level;
        self
    }

    pub fn has_pulses(&self) -> bool {
        self.kind != EnvelopeKind::Cw
    }

    /// The envelope at repetition period `tau` with pulse height `height`.
    pub fn build(&self, tau: f64, height: f64) -> DriveEnvelope {
        match self.kind {
            EnvelopeKind::Cw => DriveEnvelope::cw(self.cw_level),
            EnvelopeKind::PulseTrain => DriveEnvelope::pulse_train(tau, self.pulse_width, height),
            EnvelopeKind::Mixed => DriveEnvelope::mixed(self.cw_level, tau, self.pulse_width, height),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Linear,
    AdaptiveRefine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub kind: GridKind,
    pub refine_rounds: u32,
    /// Refine where neighbours differ by more than this fraction of the
    /// channel's largest magnitude.
    pub refine_threshold: f64,
}

impl GridSpec {
    pub const DEFAULT_POINTS: usize = 600;

    pub fn linear(min: f64, max: f64, points: usize) -> Self {
        Self { min, max, points, kind: GridKind::Linear, refine_rounds: 3, refine_threshold: 0.1 }
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points.max(2) - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        let last = self.points - 1;
        (0..self.points)
            .map(|i| if i == last { self.max } else { self.min + (self.max - self.min) * i as f64 / last as f64 })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min > 0.0) {
            return Err(ParamError::new("min", format!("must be finite and > 0, got {}", self.min)));
        }
        if !(self.min < self.max) {
            return Err(ParamError::new("max", format!("must exceed min = {}, got {}", self.min, self.max)));
        }
        if self.points < 2 {
            return Err(ParamError::new("points", format!("must be >= 2, got {}", self.points)));
        }
        if !(self.refine_threshold > 0.0) {
            return Err(ParamError::new("refine_threshold", "must be > 0"));
        }
        Ok(())
    }
}

/// Run length, analysis window and sampling of each grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSettings {
    pub tol: f64,
    /// Minimum run length in units of the slowest decay time.
    pub decay_times: f64,
    /// Minimum run length in repetition periods.
    pub min_periods: f64,
    /// Trailing fraction of the run that is analysed.
    pub window_fraction: f64,
    /// Samples per period of ω_ab.
    pub samples_per_ab_period: f64,
    /// Samples per pulse σ.
    pub samples_per_sigma: f64,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            decay_times: 50.0,
            min_periods: 200.0,
            window_fraction: 0.25,
            samples_per_ab_period: 20.0,
            samples_per_sigma: 2.0,
        }
    }
}

impl IntegrationSettings {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(1e-12..=1e-4).contains(&self.tol) {
            return Err(ParamError::new("tol", format!("must lie in [1e-12, 1e-4], got {}", self.tol)));
        }
        for (name, v) in [
            ("decay_times", self.decay_times),
            ("min_periods", self.min_periods),
            ("samples_per_ab_period", self.samples_per_ab_period),
            ("samples_per_sigma", self.samples_per_sigma),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ParamError::new(name, format!("must be > 0, got {v}")));
            }
        }
        if self.samples_per_ab_period < 20.0 {
            return Err(ParamError::new("samples_per_ab_period", "must be >= 20"));
        }
        if !(self.window_fraction > 0.0 && self.window_fraction < 1.0) {
            return Err(ParamError::new("window_fraction", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub scenario: Scenario,
    pub params: SystemParams,
    pub f1: EnvelopeSpec,
    pub f2: EnvelopeSpec,
    /// When set, pulse heights scale ∝ τ so the mean power equals that of
    /// the configured height at this repetition rate.
    pub fixed_average_power: Option<f64>,
    pub grid: GridSpec,
    pub integration: IntegrationSettings,
    /// Channel used for grid refinement and peak detection.
    pub channel: Channel,
    pub min_prominence_frac: f64,
}

/// Scenario defaults. The pulse parameters are not fixed by the physics;
/// these values keep light shifts of the resonances below a grid step.
pub mod defaults {
    pub const OMEGA_AB: f64 = 11.0;
    pub const FIG2_RABI_AC: f64 = 0.05;
    pub const FIG2_RABI_BC: f64 = 1.0;
    pub const FIG2_SIGMA: f64 = 0.01;
    pub const FIG2_HEIGHT: f64 = 8.0;
    pub const FIG3_RABI_AC: f64 = 1.0;
    pub const FIG3_SIGMA: f64 = 0.01;
    pub const FIG3_HEIGHT: f64 = 8.0;
    pub const FIG5_RABI_AC: f64 = 20.0;
    pub const FIG5_RABI_BC: f64 = 0.1;
    pub const FIG5_SIGMA: f64 = 0.01;
    pub const FIG5_HEIGHT: f64 = 2.0;
    pub const GRID_MIN: f64 = 1.0;
    pub const GRID_MAX: f64 = 13.0;
}

impl SweepConfig {
    /// Defaults for a scenario at the given ω_ab. `Custom` starts from the
    /// fig2 envelopes.
    pub fn for_scenario(scenario: Scenario, omega_ab: f64) -> Self {
        use defaults::*;
        let (params, f1, f2, channel) = match scenario {
            Scenario::Fig2 | Scenario::Custom => (
                SystemParams::new(omega_ab, FIG2_RABI_AC, FIG2_RABI_BC),
                EnvelopeSpec::cw(1.0),
                EnvelopeSpec::pulses(FIG2_SIGMA, FIG2_HEIGHT),
                Channel::CoherenceAb,
            ),
            Scenario::Fig3 => (
                SystemParams::new(omega_ab, FIG3_RABI_AC, 0.0),
                EnvelopeSpec::mixed(1.0, FIG3_SIGMA, FIG3_HEIGHT),
                EnvelopeSpec::off(),
                Channel::PopC,
            ),
            Scenario::Fig5 => (
                SystemParams::new(omega_ab, FIG5_RABI_AC, FIG5_RABI_BC),
                EnvelopeSpec::pulses(FIG5_SIGMA, FIG5_HEIGHT),
                EnvelopeSpec::cw(1.0),
                Channel::PopB,
            ),
        };
        Self {
            scenario,
            params,
            f1,
            f2,
            fixed_average_power: None,
            grid: GridSpec::linear(GRID_MIN, GRID_MAX, GridSpec::DEFAULT_POINTS),
            integration: IntegrationSettings::default(),
            channel,
            min_prominence_frac: QUANTUM_MIN_PROMINENCE,
        }
    }

    pub fn with_grid(mut self, min: f64, max: f64, points: usize) -> Self {
        self.grid.min = min;
        self.grid.max = max;
        self.grid.points = points;
        self
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        self.params.validate().map_err(|e| e.within("system"))?;
        self.grid.validate().map_err(|e| e.within("grid"))?;
        self.integration.validate().map_err(|e| e.within("integration"))?;
        if let Some(w) = self.fixed_average_power {
            if !(w.is_finite() && w > 0.0) {
                return Err(ParamError::new("fixed_average_power", format!("must be > 0, got {w}")));
            }
        }
        if !(self.min_prominence_frac > 0.0 && self.min_prominence_frac < 1.0) {
            return Err(ParamError::new("min_prominence_frac", "must lie in (0, 1)"));
        }
        // pulses must stay resolvable at the fastest repetition rate
        let tau_min = rep_rate_to_period(self.grid.max).map_err(|e| e.within("grid"))?;
        let tau_max = rep_rate_to_period(self.grid.min).map_err(|e| e.within("grid"))?;
        for (name, spec) in [("f1", &self.f1), ("f2", &self.f2)] {
            for tau in [tau_min, tau_max] {
                let h = self.pulse_height(spec, tau);
                spec.build(tau, h).validate().map_err(|e| e.within(name))?;
            }
        }
        Ok(())
    }

    fn pulse_height(&self, spec: &EnvelopeSpec, tau: f64) -> f64 {
        match self.fixed_average_power {
            Some(reference) => spec.pulse_height * tau / (TAU / reference),
            None => spec.pulse_height,
        }
    }

    /// Envelopes at repetition rate `omega_rep`.
    pub fn drives_at(&self, omega_rep: f64) -> Result<Drives, ParamError> {
        let tau = rep_rate_to_period(omega_rep)?;
        Ok(Drives::new(
            self.f1.build(tau, self.pulse_height(&self.f1, tau)),
            self.f2.build(tau, self.pulse_height(&self.f2, tau)),
        ))
    }

    /// Run plan for one grid point.
    pub fn plan(&self, omega_rep: f64) -> Result<PointPlan, ParamError> {
        let tau = rep_rate_to_period(omega_rep)?;
        let s = &self.integration;
        let decay = self.params.slowest_decay().map_or(0.0, |g| s.decay_times / g);
        let periods = (decay.max(s.min_periods * tau) / tau).ceil();
        let start_period = ((1.0 - s.window_fraction) * periods).floor();
        let mut dt_max = f64::INFINITY;
        if self.params.omega_ab > 0.0 {
            dt_max = TAU / (s.samples_per_ab_period * self.params.omega_ab);
        }
        for spec in [&self.f1, &self.f2] {
            if spec.has_pulses() {
                dt_max = dt_max.min(spec.pulse_width / s.samples_per_sigma);
            }
        }
        let per_period = if dt_max.is_finite() { (tau / dt_max).ceil() } else { 1.0 };
        Ok(PointPlan {
            tau,
            t_end: periods * tau,
            window: Window::new(start_period * tau, periods * tau),
            sample_dt: tau / per_period,
        })
    }
}

impl SweepConfig {
    /// Integrates one grid point, recording the analysis window only.
    pub fn trajectory_at(&self, omega_rep: f64) -> Result<(Trajectory, PointPlan), IntegrationError> {
        let plan = self.plan(omega_rep)?;
        let drives = self.drives_at(omega_rep)?;
        let opts = IntegrateOptions::new(self.integration.tol, plan.sample_dt).recording_from(plan.window.start);
        let traj = integrate_with(DensityState::ground_a(), plan.t_end, &self.params, &drives, &opts)?;
        Ok((traj, plan))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPlan {
    pub tau: f64,
    pub t_end: f64,
    pub window: Window,
    pub sample_dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointDiagnostics {
    pub max_trace_error: f64,
    pub min_eigenvalue: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub index: usize,
    pub omega_rep: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointOutcome {
    pub omega_rep: f64,
    pub result: Result<(ObservableSet, PointDiagnostics), String>,
}

/// Integrates and analyses a single grid point.
pub fn compute_point(cfg: &SweepConfig, omega_rep: f64) -> PointOutcome {
    let run = || -> Result<(ObservableSet, PointDiagnostics), String> {
        let (traj, plan) = cfg.trajectory_at(omega_rep).map_err(|e| e.to_string())?;
        let obs = analyze(&traj, plan.window).map_err(|e| e.to_string())?;
        let diag = PointDiagnostics {
            max_trace_error: traj.max_trace_error,
            min_eigenvalue: traj.min_eigenvalue,
            steps: traj.steps,
        };
        Ok((obs, diag))
    };
    PointOutcome { omega_rep, result: run() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceSpectrum {
    pub omega_rep: Vec<f64>,
    pub observables: Vec<Option<ObservableSet>>,
    pub diagnostics: Vec<Option<PointDiagnostics>>,
    pub failures: Vec<PointFailure>,
    pub channel: Channel,
    pub peaks: Vec<Peak>,
}

impl ResonanceSpectrum {
    fn from_outcomes(outcomes: Vec<PointOutcome>, channel: Channel) -> Self {
        let mut s = Self {
            omega_rep: Vec::with_capacity(outcomes.len()),
            observables: Vec::with_capacity(outcomes.len()),
            diagnostics: Vec::with_capacity(outcomes.len()),
            failures: Vec::new(),
            channel,
            peaks: Vec::new(),
        };
        for (index, o) in outcomes.into_iter().enumerate() {
            s.omega_rep.push(o.omega_rep);
            match o.result {
                Ok((obs, diag)) => {
                    s.observables.push(Some(obs));
                    s.diagnostics.push(Some(diag));
                }
                Err(error) => {
                    s.observables.push(None);
                    s.diagnostics.push(None);
                    s.failures.push(PointFailure { index, omega_rep: o.omega_rep, error });
                }
            }
        }
        s
    }

    pub fn len(&self) -> usize {
        self.omega_rep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega_rep.is_empty()
    }

    /// Values of `channel`, `None` at failed points.
    pub fn series(&self, channel: Channel) -> Vec<Option<f64>> {
        self.observables.iter().map(|o| o.as_ref().map(|o| channel.value(o))).collect()
    }

    /// Detects peaks on `channel`, interpolating across failed points.
    pub fn detect(&self, channel: Channel, min_prominence_frac: f64) -> Vec<Peak> {
        let (y, filled) = fill_gaps(&self.omega_rep, &self.series(channel));
        detect_peaks_flagged(&self.omega_rep, &y, &filled, min_prominence_frac)
    }

    /// Index of the grid point closest to `omega`.
    pub fn nearest_index(&self, omega: f64) -> Option<usize> {
        (0..self.len()).min_by(|&i, &j| (self.omega_rep[i] - omega).abs().total_cmp(&(self.omega_rep[j] - omega).abs()))
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{SPECTRUM_CSV_HEADER}")?;
        for (omega, o) in self.omega_rep.iter().zip(&self.observables) {
            let vals = match o {
                Some(o) => [
                    o.osc_amplitude_bc,
                    o.mean_pops[0],
                    o.mean_pops[1],
                    o.mean_pops[2],
                    o.absorption_pump,
                    o.absorption_probe,
                    o.inversion_pump,
                    o.inversion_probe,
                    o.coherence_ab,
                ],
                None => [f64::NAN; 9],
            };
            write!(w, "{}", fmt_f64(*omega))?;
            for v in vals {
                write!(w, ",{}", fmt_f64(v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Runs `jobs` on a pool of `workers` threads (0 = one per core), returning
/// results in input order.
pub fn run_parallel<T, R, F>(workers: usize, jobs: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool");
    pool.install(|| jobs.par_iter().map(&f).collect())
}

fn refine(cfg: &SweepConfig, workers: usize, mut outcomes: Vec<PointOutcome>) -> Vec<PointOutcome> {
    for _ in 0..cfg.grid.refine_rounds {
        let values: Vec<Option<f64>> =
            outcomes.iter().map(|o| o.result.as_ref().ok().map(|(obs, _)| cfg.channel.value(obs))).collect();
        let scale = values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(scale > 0.0) {
            break;
        }
        let mids: Vec<f64> = values
            .windows(2)
            .zip(outcomes.windows(2))
            .filter_map(|(v, o)| match (v[0], v[1]) {
                (Some(a), Some(b)) if (b - a).abs() > cfg.grid.refine_threshold * scale => {
                    Some(0.5 * (o[0].omega_rep + o[1].omega_rep))
                }
                _ => None,
            })
            .collect();
        if mids.is_empty() {
            break;
        }
        let new = run_parallel(workers, &mids, |&w| compute_point(cfg, w));
        outcomes.extend(new);
        outcomes.sort_by(|a, b| a.omega_rep.total_cmp(&b.omega_rep));
    }
    outcomes
}

/// Sweeps the repetition rate over the configured grid. Points that fail are
/// recorded and do not abort the sweep. Results do not depend on `workers`.
pub fn run_sweep(cfg: &SweepConfig, workers: usize) -> Result<ResonanceSpectrum, ParamError> {
    cfg.validate()?;
    let grid = cfg.grid.values();
    let mut outcomes = run_parallel(workers, &grid, |&w| compute_point(cfg, w));
    if cfg.grid.kind == GridKind::AdaptiveRefine {
        outcomes = refine(cfg, workers, outcomes);
    }
    let mut spectrum = ResonanceSpectrum::from_outcomes(outcomes, cfg.channel);
    spectrum.peaks = spectrum.detect(cfg.channel, cfg.min_prominence_frac);
    Ok(spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quick(mut cfg: SweepConfig) -> SweepConfig {
        cfg.integration.decay_times = 0.5;
        cfg.integration.min_periods = 40.0;
        cfg
    }

    #[test]
    fn grid_values() {
        let g = GridSpec::linear(1.0, 13.0, 600);
        let v = g.values();
        assert_eq!(v.len(), 600);
        assert_eq!(v[0], 1.0);
        assert_eq!(v[599], 13.0);
        assert_abs_diff_eq!(g.step(), 12.0 / 599.0);
        assert!(GridSpec::linear(2.0, 1.0, 5).validate().is_err());
        assert!(GridSpec::linear(1.0, 2.0, 1).validate().is_err());
    }

    #[test]
    fn plan_follows_transient_rule() {
        let cfg = SweepConfig::for_scenario(Scenario::Fig2, 11.0);
        // 50/γ_ab = 5000 dominates 200 periods at ω_Rep = 11
        let p = cfg.plan(11.0).unwrap();
        let periods = (5000.0 / p.tau).ceil();
        assert_abs_diff_eq!(p.t_end, periods * p.tau, epsilon = 1e-9);
        assert!(p.window.len() >= 0.25 * p.t_end - p.tau);
        assert_abs_diff_eq!((p.window.start / p.tau).round() * p.tau, p.window.start, epsilon = 1e-9);
        assert!(p.sample_dt <= TAU / 220.0 && p.sample_dt <= defaults::FIG2_SIGMA / 2.0);
        assert_abs_diff_eq!((p.tau / p.sample_dt).round(), p.tau / p.sample_dt, epsilon = 1e-9);
        // slow trains are governed by the period count
        let slow = cfg.plan(0.05).unwrap();
        assert!(slow.t_end >= 200.0 * slow.tau - 1e-9);
    }

    #[test]
    fn drives_off_is_flat() {
        let mut cfg = SweepConfig::for_scenario(Scenario::Custom, 11.0).with_grid(2.0, 4.0, 2);
        cfg.f1 = EnvelopeSpec::off();
        cfg.f2 = EnvelopeSpec::pulses(0.01, 0.0);
        let s = run_sweep(&quick(cfg), 1).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.failures.is_empty());
        for o in s.observables.iter().flatten() {
            assert_eq!(o.osc_amplitude_bc, 0.0);
            assert_eq!(o.coherence_ab, 0.0);
        }
        assert!(s.peaks.is_empty());
    }

    #[test]
    fn invalid_config_names_field() {
        let mut cfg = SweepConfig::for_scenario(Scenario::Fig2, 11.0);
        cfg.params.gamma_ac = -1.0;
        assert_eq!(cfg.validate().unwrap_err().field, "system.gamma_ac");
        let mut cfg = SweepConfig::for_scenario(Scenario::Fig2, 11.0);
        cfg.f2.pulse_width = 0.2;
        assert_eq!(cfg.validate().unwrap_err().field, "f2.pulse_width");
    }

    #[test]
    fn fixed_average_power_scales_height() {
        let mut cfg = SweepConfig::for_scenario(Scenario::Fig2, 11.0);
        cfg.fixed_average_power = Some(11.0);
        let at_ref = cfg.drives_at(11.0).unwrap().f2.pulse_height;
        let at_half = cfg.drives_at(5.5).unwrap().f2.pulse_height;
        assert_abs_diff_eq!(at_ref, defaults::FIG2_HEIGHT, epsilon = 1e-12);
        assert_abs_diff_eq!(at_half, 2.0 * defaults::FIG2_HEIGHT, epsilon = 1e-12);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = quick(SweepConfig::for_scenario(Scenario::Fig2, 11.0).with_grid(3.0, 12.0, 6));
        let a = run_sweep(&cfg, 1).unwrap();
        let b = run_sweep(&cfg, 3).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a, b);
    }

    #[test]
    fn refinement_keeps_coarse_points() {
        let mut cfg = quick(SweepConfig::for_scenario(Scenario::Fig2, 11.0).with_grid(9.0, 13.0, 5));
        let coarse = run_sweep(&cfg, 2).unwrap();
        cfg.grid.kind = GridKind::AdaptiveRefine;
        cfg.grid.refine_rounds = 2;
        let fine = run_sweep(&cfg, 2).unwrap();
        assert!(fine.len() > coarse.len());
        for (w, o) in coarse.omega_rep.iter().zip(&coarse.observables) {
            let i = fine.omega_rep.iter().position(|x| x == w).unwrap();
            assert_eq!(&fine.observables[i], o);
        }
        assert!(fine.omega_rep.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn failures_are_recorded_per_point() {
        let cfg = quick(SweepConfig::for_scenario(Scenario::Fig2, 11.0).with_grid(4.0, 6.0, 3));
        let s = run_sweep(&cfg, 1).unwrap();
        assert!(s.failures.is_empty());
        let mut bad = s.clone();
        bad.observables[1] = None;
        bad.failures.push(PointFailure { index: 1, omega_rep: 5.0, error: "x".into() });
        let mut out = Vec::new();
        bad.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(2).unwrap().ends_with("NaN"));
    }

    #[test]
    fn csv_round_trips_values() {
        let cfg = quick(SweepConfig::for_scenario(Scenario::Fig2, 11.0).with_grid(5.0, 6.0, 2));
        let s = run_sweep(&cfg, 1).unwrap();
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), SPECTRUM_CSV_HEADER);
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        let o = s.observables[0].unwrap();
        assert_eq!(row[0], 5.0);
        assert_eq!(row[1], o.osc_amplitude_bc);
        assert_eq!(row[9], o.coherence_ab);
    }
}
