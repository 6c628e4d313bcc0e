//! Classical reference: the damped oscillator ẍ + bẋ + ω₀²x = Σ δ(t − nτ).
//! Its periodic response peaks at ω = ω₀/n, the same comb the atom shows.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::drive::DriveEnvelope;
use crate::error::{IntegrationError, ParamError};
use crate::integrator::{solve_sampled, OdeSystem, StepControl};
use crate::io::fmt_f64;
use crate::spectra::{detect_peaks_flagged, fill_gaps, Peak, CLASSICAL_MIN_PROMINENCE};
use crate::sweep::{run_parallel, GridSpec, PointFailure, SPECTRUM_CSV_HEADER};

/// Relative size at which Fourier terms stop being summed.
pub const SERIES_TOL: f64 = 1e-12;

/// Transient is over once e^{−bt/2} falls below this.
pub const TRANSIENT_FLOOR: f64 = 1e-6;

/// Periods over which the time-domain amplitude is measured.
pub const MEASURE_PERIODS: f64 = 10.0;

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;
const PHASE_SAMPLES: usize = 2048;
const MAX_TERMS: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    pub omega0: f64,
    pub damping: f64,
    pub rep_period: f64,
}

impl OscillatorParams {
    pub fn new(omega0: f64, damping: f64, rep_period: f64) -> Self {
        Self { omega0, damping, rep_period }
    }

    pub fn at_rate(omega0: f64, damping: f64, omega: f64) -> Self {
        Self::new(omega0, damping, TAU / omega)
    }

    pub fn rep_rate(&self) -> f64 {
        TAU / self.rep_period
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(ParamError::new("omega0", format!("must be > 0, got {}", self.omega0)));
        }
        if !(self.damping.is_finite() && self.damping > 0.0) {
            return Err(ParamError::new("damping", format!("must be > 0, got {}", self.damping)));
        }
        if self.damping >= 2.0 * self.omega0 {
            return Err(ParamError::new(
                "damping",
                format!("{} is not below 2·omega0 = {} (overdamped)", self.damping, 2.0 * self.omega0),
            ));
        }
        if !(self.rep_period.is_finite() && self.rep_period > 0.0) {
            return Err(ParamError::new("rep_period", format!("must be > 0, got {}", self.rep_period)));
        }
        Ok(())
    }
}

/// Σ_{k≥1} cos(kθ)/k² for θ ∈ [0, 2π].
fn clausen_cos2(theta: f64) -> f64 {
    PI * PI / 6.0 - PI * theta / 2.0 + theta * theta / 4.0
}

/// Σ_{k≥1} sin(kθ)/k³ for θ ∈ [0, 2π].
fn clausen_sin3(theta: f64) -> f64 {
    PI * PI * theta / 6.0 - PI * theta * theta / 4.0 + theta.powi(3) / 12.0
}

/// Periodic response as a Fourier series in the phase θ = ωt.
///
/// The slowly decaying tail −1/(kω)² − ib/(kω)³ of each coefficient is summed
/// in closed form; the remainder falls off as k⁻⁴ and is truncated once its
/// terms drop below [`SERIES_TOL`] of the running sum.
struct FourierSeries {
    scale: f64,
    omega: f64,
    damping: f64,
    dc: f64,
    remainder: Vec<Complex64>,
}

impl FourierSeries {
    fn new(p: &OscillatorParams) -> Self {
        let (w0, b, w) = (p.omega0, p.damping, p.rep_rate());
        let resonant = (w0 / w).ceil() as usize + 2;
        let mut remainder = Vec::new();
        let mut running = 0.0;
        for k in 1..=MAX_TERMS {
            let kw = k as f64 * w;
            let c = 1.0 / Complex64::new(w0 * w0 - kw * kw, b * kw);
            let tail = Complex64::new(-1.0 / (kw * kw), -b / (kw * kw * kw));
            let r = c - tail;
            running += r.norm();
            remainder.push(r);
            if k > resonant && r.norm() < SERIES_TOL * running {
                break;
            }
        }
        Self { scale: 1.0 / p.rep_period, omega: w, damping: b, dc: 1.0 / (w0 * w0), remainder }
    }

    fn eval(&self, theta: f64) -> f64 {
        let theta = theta.rem_euclid(TAU);
        let (w, b) = (self.omega, self.damping);
        let tail = -clausen_cos2(theta) / (w * w) + b * clausen_sin3(theta) / (w * w * w);
        let step = Complex64::from_polar(1.0, theta);
        let mut phase = step;
        let mut rest = 0.0;
        for (k, r) in self.remainder.iter().enumerate() {
            if k % 64 == 63 {
                // re-anchor the rotation to keep round-off bounded
                phase = Complex64::from_polar(1.0, (k + 1) as f64 * theta);
            }
            rest += (r * phase).re;
            phase *= step;
        }
        self.scale * (self.dc + 2.0 * (tail + rest))
    }
}

/// Golden-section search for an extremum of `f` on `[a, b]`; `sign` = 1 for a
/// maximum, −1 for a minimum.
fn golden_extremum(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, sign: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (sign * f(c), sign * f(d));
    for _ in 0..60 {
        if fc > fd {
            b = d;
            (d, fd) = (c, fc);
            c = b - g * (b - a);
            fc = sign * f(c);
        } else {
            a = c;
            (c, fc) = (d, fd);
            d = a + g * (b - a);
            fd = sign * f(d);
        }
    }
    sign * fc.max(fd)
}

fn half_range(f: impl Fn(f64) -> f64) -> f64 {
    let h = TAU / PHASE_SAMPLES as f64;
    let vals: Vec<f64> = (0..PHASE_SAMPLES).map(|i| f(i as f64 * h)).collect();
    let imax = (0..PHASE_SAMPLES).max_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap_or(0);
    let imin = (0..PHASE_SAMPLES).min_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap_or(0);
    // the impulse kink sits at θ = 0, so the brackets must not wrap past it
    let bracket = |i: usize| (((i as f64) - 1.0).max(0.0) * h, ((i + 1) as f64 * h).min(TAU));
    let (a, b) = bracket(imax);
    let hi = golden_extremum(&f, a, b, 1.0).max(vals[imax]);
    let (a, b) = bracket(imin);
    let lo = golden_extremum(&f, a, b, -1.0).min(vals[imin]);
    0.5 * (hi - lo)
}

/// Half peak-to-peak excursion of the periodic response to a Dirac comb,
/// from its Fourier series.
pub fn classical_amplitude_analytic(p: &OscillatorParams) -> Result<f64, ParamError> {
    p.validate()?;
    let series = FourierSeries::new(p);
    Ok(half_range(|theta| series.eval(theta)))
}

/// Periodic response to a Dirac comb at time `t`, summed over past impulses
/// in closed form.
pub fn classical_periodic_response(p: &OscillatorParams, t: f64) -> f64 {
    let tau = p.rep_period;
    let t = t.rem_euclid(tau);
    let wd = (p.omega0 * p.omega0 - 0.25 * p.damping * p.damping).sqrt();
    let s = Complex64::new(-0.5 * p.damping, wd);
    ((s * t).exp() / (1.0 - (s * tau).exp())).im / wd
}

struct Oscillator {
    omega0_sq: f64,
    damping: f64,
    forcing: DriveEnvelope,
}

impl OdeSystem<2> for Oscillator {
    fn rhs(&self, t: f64, y: &[f64; 2]) -> [f64; 2] {
        [y[1], self.forcing.evaluate(t) - self.damping * y[1] - self.omega0_sq * y[0]]
    }

    fn max_step(&self, t: f64) -> f64 {
        self.forcing.max_step(t)
    }
}

/// Amplitude under a train of Gaussian pulses of full width at half maximum
/// `pulse_width` and area `area`, integrated until the transient has decayed
/// and measured over the last [`MEASURE_PERIODS`] periods.
pub fn classical_amplitude_pulsed(p: &OscillatorParams, pulse_width: f64, area: f64) -> Result<f64, IntegrationError> {
    p.validate()?;
    let tau = p.rep_period;
    if !(pulse_width > 0.0 && pulse_width <= tau / 20.0) {
        return Err(ParamError::new("pulse_width", format!("must lie in (0, τ/20 = {}], got {pulse_width}", tau / 20.0)).into());
    }
    let sigma = pulse_width / FWHM_PER_SIGMA;
    let forcing = DriveEnvelope::pulse_train(tau, sigma, area / (sigma * TAU.sqrt()));
    let sys = Oscillator { omega0_sq: p.omega0 * p.omega0, damping: p.damping, forcing };
    let settle = (2.0 * (1.0 / TRANSIENT_FLOOR).ln() / p.damping / tau).ceil();
    let t_end = (settle + MEASURE_PERIODS) * tau;
    let per_period = (200.0 * p.omega0 * tau / TAU).max(200.0).ceil();
    let dt = tau / per_period;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    solve_sampled(&sys, 0.0, [0.0, 0.0], t_end, dt, settle * tau, &StepControl::with_tol(1e-10), |_, y| {
        if !y[0].is_finite() {
            return Err(IntegrationError::NonFinite { t: 0.0 });
        }
        lo = lo.min(y[0]);
        hi = hi.max(y[0]);
        Ok(())
    })?;
    Ok(0.5 * (hi - lo))
}

/// Time-domain counterpart of [`classical_amplitude_analytic`] with each δ
/// replaced by a unit-area Gaussian of FWHM `pulse_width`.
pub fn classical_amplitude_timedomain(p: &OscillatorParams, pulse_width: f64) -> Result<f64, IntegrationError> {
    classical_amplitude_pulsed(p, pulse_width, 1.0)
}

/// Classical sweep settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalConfig {
    pub omega0: f64,
    pub damping: f64,
    pub grid: GridSpec,
    /// Pulse FWHM as a fraction of the natural period 2π/ω0, fixed across
    /// the grid like the quantum drive's pulses.
    pub width_fraction: f64,
    pub min_prominence_frac: f64,
}

impl ClassicalConfig {
    pub fn new(omega0: f64, damping: f64) -> Self {
        Self {
            omega0,
            damping,
            grid: GridSpec::linear(2.0, 12.0, 500),
            width_fraction: 1.0 / 50.0,
            min_prominence_frac: CLASSICAL_MIN_PROMINENCE,
        }
    }

    /// Pulse FWHM used at every grid point.
    pub fn pulse_width(&self) -> f64 {
        self.width_fraction * TAU / self.omega0
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        OscillatorParams::at_rate(self.omega0, self.damping, self.grid.max).validate()?;
        self.grid.validate().map_err(|e| e.within("grid"))?;
        let limit = self.omega0 / (20.0 * self.grid.max);
        if !(self.width_fraction > 0.0 && self.width_fraction <= limit) {
            return Err(ParamError::new(
                "width_fraction",
                format!("must lie in (0, {limit}] so pulses stay below τ/20 at the top of the grid"),
            ));
        }
        if !(self.min_prominence_frac > 0.0 && self.min_prominence_frac < 1.0) {
            return Err(ParamError::new("min_prominence_frac", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalSpectrum {
    pub omega: Vec<f64>,
    pub amplitude: Vec<Option<f64>>,
    pub failures: Vec<PointFailure>,
    pub peaks: Vec<Peak>,
}

impl ClassicalSpectrum {
    /// Writes the quantum spectrum layout with the amplitude in `osc_amp_bc`
    /// and the atomic columns empty (NaN).
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{SPECTRUM_CSV_HEADER}")?;
        let nan = fmt_f64(f64::NAN);
        for (omega, a) in self.omega.iter().zip(&self.amplitude) {
            write!(w, "{},{}", fmt_f64(*omega), fmt_f64(a.unwrap_or(f64::NAN)))?;
            for _ in 0..8 {
                write!(w, ",{nan}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Time-domain amplitude over the grid, with peak detection.
pub fn run_classical_sweep(cfg: &ClassicalConfig, workers: usize) -> Result<ClassicalSpectrum, ParamError> {
    cfg.validate()?;
    let omega = cfg.grid.values();
    let results = run_parallel(workers, &omega, |&w| {
        let p = OscillatorParams::at_rate(cfg.omega0, cfg.damping, w);
        classical_amplitude_timedomain(&p, cfg.pulse_width())
    });
    let mut amplitude = Vec::with_capacity(omega.len());
    let mut failures = Vec::new();
    for (index, (r, &w)) in results.into_iter().zip(&omega).enumerate() {
        match r {
            Ok(a) => amplitude.push(Some(a)),
            Err(e) => {
                amplitude.push(None);
                failures.push(PointFailure { index, omega_rep: w, error: e.to_string() });
            }
        }
    }
    let (y, filled) = fill_gaps(&omega, &amplitude);
    let peaks = detect_peaks_flagged(&omega, &y, &filled, cfg.min_prominence_frac);
    Ok(ClassicalSpectrum { omega, amplitude, failures, peaks })
}
