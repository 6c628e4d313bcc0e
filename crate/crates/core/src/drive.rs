//! Field envelopes f1(t), f2(t): constant (cw), Gaussian pulse trains, or both.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::ParamError;

/// Pulses must satisfy `pulse_width < rep_period / DEFAULT_WIDTH_GUARD`.
pub const DEFAULT_WIDTH_GUARD: f64 = 6.0;

/// Half-width, in standard deviations, of the region around a pulse centre
/// where the integrator's step is capped.
pub const PULSE_SUPPORT_SIGMAS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    Cw,
    PulseTrain,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveEnvelope {
    pub kind: EnvelopeKind,
    pub cw_level: f64,
    pub rep_period: f64,
    /// Gaussian standard deviation σ.
    pub pulse_width: f64,
    pub pulse_height: f64,
    /// Pulses sit at t = nτ for n ≥ n_start.
    pub n_start: i64,
}

impl DriveEnvelope {
    pub fn cw(level: f64) -> Self {
        Self {
            kind: EnvelopeKind::Cw,
            cw_level: level,
            rep_period: f64::INFINITY,
            pulse_width: 0.0,
            pulse_height: 0.0,
            n_start: 0,
        }
    }

    pub fn off() -> Self {
        Self::cw(0.0)
    }

    pub fn pulse_train(rep_period: f64, pulse_width: f64, pulse_height: f64) -> Self {
        Self {
            kind: EnvelopeKind::PulseTrain,
            cw_level: 0.0,
            rep_period,
            pulse_width,
            pulse_height,
            n_start: 0,
        }
    }

    pub fn mixed(cw_level: f64, rep_period: f64, pulse_width: f64, pulse_height: f64) -> Self {
        Self { kind: EnvelopeKind::Mixed, cw_level, ..Self::pulse_train(rep_period, pulse_width, pulse_height) }
    }

    pub fn has_pulses(&self) -> bool {
        !matches!(self.kind, EnvelopeKind::Cw)
    }

    pub fn is_off(&self) -> bool {
        let pulses_off = !self.has_pulses() || self.pulse_height == 0.0;
        let cw_off = matches!(self.kind, EnvelopeKind::PulseTrain) || self.cw_level == 0.0;
        pulses_off && cw_off
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        self.validate_with_guard(DEFAULT_WIDTH_GUARD)
    }

    /// Checks the envelope, requiring `pulse_width < rep_period / guard`.
    pub fn validate_with_guard(&self, guard: f64) -> Result<(), ParamError> {
        if !self.cw_level.is_finite() {
            return Err(ParamError::new("cw_level", "must be finite"));
        }
        if !self.has_pulses() {
            return Ok(());
        }
        if !(self.rep_period.is_finite() && self.rep_period > 0.0) {
            return Err(ParamError::new("rep_period", format!("must be > 0, got {}", self.rep_period)));
        }
        if !(self.pulse_width.is_finite() && self.pulse_width > 0.0) {
            return Err(ParamError::new("pulse_width", format!("must be > 0, got {}", self.pulse_width)));
        }
        if !self.pulse_height.is_finite() {
            return Err(ParamError::new("pulse_height", "must be finite"));
        }
        if self.pulse_width >= self.rep_period / guard {
            return Err(ParamError::new(
                "pulse_width",
                format!(
                    "{} is not below rep_period/{guard} = {} (pulses would overlap)",
                    self.pulse_width,
                    self.rep_period / guard
                ),
            ));
        }
        Ok(())
    }

    /// Index of the pulse centre nearest to `t`, respecting `n_start`.
    fn nearest_pulse(&self, t: f64) -> i64 {
        ((t / self.rep_period).round() as i64).max(self.n_start)
    }

    fn pulse_sum(&self, t: f64) -> f64 {
        let k = (t / self.rep_period).round() as i64;
        let inv_two_var = 0.5 / (self.pulse_width * self.pulse_width);
        let mut acc = 0.0;
        for n in (k - 1)..=(k + 1) {
            if n < self.n_start {
                continue;
            }
            let dt = t - n as f64 * self.rep_period;
            acc += (-dt * dt * inv_two_var).exp();
        }
        self.pulse_height * acc
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        match self.kind {
            EnvelopeKind::Cw => self.cw_level,
            EnvelopeKind::PulseTrain => self.pulse_sum(t),
            EnvelopeKind::Mixed => self.cw_level + self.pulse_sum(t),
        }
    }

    /// Area of a single pulse, height·σ·√(2π).
    pub fn pulse_area(&self) -> f64 {
        self.pulse_height * self.pulse_width * (2.0 * PI).sqrt()
    }

    /// Largest step an integrator may take from `t` without entering or
    /// crossing a pulse unresolved: σ/4 inside a pulse's 6σ support, otherwise
    /// the distance to the next support window.
    pub fn max_step(&self, t: f64) -> f64 {
        if !self.has_pulses() || self.pulse_height == 0.0 {
            return f64::INFINITY;
        }
        let support = PULSE_SUPPORT_SIGMAS * self.pulse_width;
        let inner = 0.25 * self.pulse_width;
        let n = self.nearest_pulse(t);
        let centre = n as f64 * self.rep_period;
        if (t - centre).abs() <= support {
            return inner;
        }
        let next = if centre > t { centre } else { centre + self.rep_period };
        (next - support - t).max(inner)
    }
}

/// Repetition period τ = 2π/ω_Rep.
pub fn rep_rate_to_period(omega_rep: f64) -> Result<f64, ParamError> {
    if !(omega_rep.is_finite() && omega_rep > 0.0) {
        return Err(ParamError::new("omega_rep", format!("must be > 0, got {omega_rep}")));
    }
    Ok(TAU / omega_rep)
}

/// The two envelopes of a run: f1 shapes E_ac, f2 shapes E_bc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drives {
    pub f1: DriveEnvelope,
    pub f2: DriveEnvelope,
}

impl Drives {
    pub fn new(f1: DriveEnvelope, f2: DriveEnvelope) -> Self {
        Self { f1, f2 }
    }

    pub fn off() -> Self {
        Self::new(DriveEnvelope::off(), DriveEnvelope::off())
    }

    #[inline]
    pub fn evaluate(&self, t: f64) -> (f64, f64) {
        (self.f1.evaluate(t), self.f2.evaluate(t))
    }

    pub fn max_step(&self, t: f64) -> f64 {
        self.f1.max_step(t).min(self.f2.max_step(t))
    }

    /// Longest repetition period among the pulsed envelopes.
    pub fn rep_period(&self) -> Option<f64> {
        [self.f1, self.f2]
            .iter()
            .filter(|e| e.has_pulses())
            .map(|e| e.rep_period)
            .reduce(f64::max)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        self.f1.validate().map_err(|e| e.within("f1"))?;
        self.f2.validate().map_err(|e| e.within("f2"))
    }
}
