//! Steady-state quantities extracted from a trajectory: oscillation
//! amplitudes, mean populations, absorption on both transitions and the
//! interference flags (CPT, gain without inversion, absorption despite
//! inversion).

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::integrator::Trajectory;

/// CPT is flagged when the mean population of |b⟩ exceeds this.
pub const CPT_THRESHOLD: f64 = 0.6;

/// Absorption and inversion signs below this magnitude count as zero.
pub const SIGN_FLOOR: f64 = 1e-4;

/// Shortest admissible analysis window, in repetition periods.
pub const MIN_WINDOW_PERIODS: f64 = 5.0;

/// Half-open time interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Flags {
    pub cpt: bool,
    pub gwi_probe: bool,
    pub adi_pump: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableSet {
    /// Half peak-to-peak excursion of Im ρ_bc.
    pub osc_amplitude_bc: f64,
    /// Time-mean of |ρ_ab|, the amplitude of the ground-state coherence that
    /// precesses at ω_ab in the laboratory frame.
    pub coherence_ab: f64,
    /// Mean (ρ_aa, ρ_bb, ρ_cc).
    pub mean_pops: [f64; 3],
    /// Mean power taken from the fields on a–c; positive is absorption.
    pub absorption_pump: f64,
    /// Mean power taken from the fields on b–c; negative is gain.
    pub absorption_probe: f64,
    /// Mean ρ_cc − ρ_aa.
    pub inversion_pump: f64,
    /// Mean ρ_cc − ρ_bb.
    pub inversion_probe: f64,
    pub flags: Flags,
}

/// Scalar series of a spectrum that peak detection can run on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    OscAmplitudeBc,
    CoherenceAb,
    PopA,
    PopB,
    PopC,
    AbsorptionPump,
    AbsorptionProbe,
    InversionPump,
    InversionProbe,
}

impl Channel {
    pub fn value(self, o: &ObservableSet) -> f64 {
        match self {
            Channel::OscAmplitudeBc => o.osc_amplitude_bc,
            Channel::CoherenceAb => o.coherence_ab,
            Channel::PopA => o.mean_pops[0],
            Channel::PopB => o.mean_pops[1],
            Channel::PopC => o.mean_pops[2],
            Channel::AbsorptionPump => o.absorption_pump,
            Channel::AbsorptionProbe => o.absorption_probe,
            Channel::InversionPump => o.inversion_pump,
            Channel::InversionProbe => o.inversion_probe,
        }
    }
}

fn strict_sign(x: f64) -> i8 {
    if x > SIGN_FLOOR {
        1
    } else if x < -SIGN_FLOOR {
        -1
    } else {
        0
    }
}

impl Flags {
    pub fn classify(mean_pops: [f64; 3], absorption_pump: f64, absorption_probe: f64) -> Self {
        let [aa, bb, cc] = mean_pops;
        let (inv_pump, inv_probe) = (cc - aa, cc - bb);
        Self {
            cpt: bb > CPT_THRESHOLD,
            gwi_probe: strict_sign(absorption_probe) == -1 && strict_sign(inv_probe) == -1,
            adi_pump: strict_sign(absorption_pump) == 1 && strict_sign(inv_pump) == 1,
        }
    }
}

/// Reduces the samples of `traj` falling in `window` to an [`ObservableSet`].
///
/// Means are plain sample averages; on a uniform grid over a whole number of
/// repetition periods they are exact for the periodic part of the response.
pub fn analyze(traj: &Trajectory, window: Window) -> Result<ObservableSet, AnalysisError> {
    if let Some(tau) = traj.drives.rep_period() {
        let required = MIN_WINDOW_PERIODS * tau;
        if window.len() < required * (1.0 - 1e-9) {
            return Err(AnalysisError::WindowTooShort { start: window.start, end: window.end, required });
        }
    }
    let slack = 1e-9 * window.len().abs().max(1.0);
    let mut count = 0usize;
    let (mut im_min, mut im_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut sums = [0.0f64; 6];
    for (&t, s) in traj.times.iter().zip(&traj.states) {
        if t < window.start - slack || t >= window.end - slack {
            continue;
        }
        count += 1;
        im_min = im_min.min(s.rho_bc.im);
        im_max = im_max.max(s.rho_bc.im);
        let (f1, f2) = traj.drives.evaluate(t);
        let (v_a, v_b) = traj.params.couplings(t, f1, f2);
        sums[0] += s.rho_aa;
        sums[1] += s.rho_bb;
        sums[2] += s.rho_cc();
        sums[3] += -2.0 * (v_a * s.rho_ac).im;
        sums[4] += -2.0 * (v_b * s.rho_bc).im;
        sums[5] += s.rho_ab.norm();
    }
    if count == 0 {
        return Err(AnalysisError::EmptyWindow { start: window.start, end: window.end });
    }
    let n = count as f64;
    let mean_pops = [sums[0] / n, sums[1] / n, sums[2] / n];
    let (absorption_pump, absorption_probe) = (sums[3] / n, sums[4] / n);
    Ok(ObservableSet {
        osc_amplitude_bc: 0.5 * (im_max - im_min),
        coherence_ab: sums[5] / n,
        mean_pops,
        absorption_pump,
        absorption_probe,
        inversion_pump: mean_pops[2] - mean_pops[0],
        inversion_probe: mean_pops[2] - mean_pops[1],
        flags: Flags::classify(mean_pops, absorption_pump, absorption_probe),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive::{DriveEnvelope, Drives};
    use crate::integrator::{integrate, integrate_with, IntegrateOptions};
    use crate::model::{DensityState, SystemParams};
    use approx::assert_abs_diff_eq;

    fn dt(omega_ab: f64) -> f64 {
        std::f64::consts::TAU / (20.0 * omega_ab)
    }

    #[test]
    fn dark_atom() {
        let p = SystemParams::new(11.0, 0.0, 0.0);
        let tr = integrate(DensityState::ground_a(), 20.0, dt(11.0), &p, &Drives::off(), 1e-9).unwrap();
        let o = analyze(&tr, Window::new(10.0, 20.0)).unwrap();
        assert_eq!(o.osc_amplitude_bc, 0.0);
        assert_eq!(o.coherence_ab, 0.0);
        assert_abs_diff_eq!(o.mean_pops[0], 1.0, epsilon = 1e-12);
        assert_eq!(o.flags, Flags::default());
    }

    #[test]
    fn weak_cw_drive_absorbs() {
        // undressed atom under weak resonant light on a–c only
        let p = SystemParams::new(11.0, 0.05, 0.0).with_cross(0.0, 0.0);
        let drives = Drives::new(DriveEnvelope::cw(1.0), DriveEnvelope::off());
        let tr = integrate(DensityState::ground_a(), 60.0, dt(11.0), &p, &drives, 1e-10).unwrap();
        let o = analyze(&tr, Window::new(40.0, 60.0)).unwrap();
        assert!(o.absorption_pump > 0.0);
        assert!(o.inversion_pump < 0.0);
        assert_abs_diff_eq!(o.absorption_probe, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn pulsed_balance_identities() {
        // over whole periods of the periodic state the mean field work on
        // each transition equals the decay flux it has to replace
        let tau = std::f64::consts::TAU / 5.0;
        let p = SystemParams::new(11.0, 1.0, 0.7);
        let drives = Drives::new(DriveEnvelope::cw(1.0), DriveEnvelope::pulse_train(tau, 0.05, 3.0));
        let t_end = 1200.0 * tau;
        let sample = tau / 60.0;
        let opts = IntegrateOptions::new(1e-10, sample).recording_from(900.0 * tau);
        let tr = integrate_with(DensityState::ground_a(), t_end, &p, &drives, &opts).unwrap();
        let o = analyze(&tr, Window::new(900.0 * tau, t_end)).unwrap();
        let [_, bb, cc] = o.mean_pops;
        // the sums are sample means, so they agree up to the residual slow drift
        assert_abs_diff_eq!(o.absorption_pump, p.gamma_ab * bb + p.gamma_ac * cc, epsilon = 2e-3);
        assert_abs_diff_eq!(o.absorption_probe, p.gamma_bc * cc - p.gamma_ab * bb, epsilon = 2e-3);
    }

    #[test]
    fn window_checks() {
        let tau = 1.0;
        let p = SystemParams::new(11.0, 0.0, 0.5);
        let drives = Drives::new(DriveEnvelope::off(), DriveEnvelope::pulse_train(tau, 0.05, 1.0));
        let tr = integrate(DensityState::ground_a(), 10.0, dt(11.0), &p, &drives, 1e-8).unwrap();
        assert!(matches!(analyze(&tr, Window::new(6.0, 10.0)), Err(AnalysisError::WindowTooShort { .. })));
        assert!(analyze(&tr, Window::new(5.0, 10.0)).is_ok());
        assert!(matches!(analyze(&tr, Window::new(20.0, 30.0)), Err(AnalysisError::EmptyWindow { .. })));
    }

    #[test]
    fn flag_thresholds() {
        let f = Flags::classify([0.1, 0.85, 0.05], 0.02, -0.003);
        assert!(f.cpt && f.gwi_probe && !f.adi_pump);
        let f = Flags::classify([0.02, 0.9, 0.08], 0.02, 0.01);
        assert!(f.cpt && f.adi_pump && !f.gwi_probe);
        // below the floor nothing is asserted
        let f = Flags::classify([0.2, 0.6, 0.2], 5e-5, -5e-5);
        assert_eq!(f, Flags::default());
    }

    #[test]
    fn channels_select_fields() {
        let o = ObservableSet {
            osc_amplitude_bc: 1.0,
            coherence_ab: 2.0,
            mean_pops: [3.0, 4.0, 5.0],
            absorption_pump: 6.0,
            absorption_probe: 7.0,
            inversion_pump: 8.0,
            inversion_probe: 9.0,
            flags: Flags::default(),
        };
        let all = [
            Channel::OscAmplitudeBc,
            Channel::CoherenceAb,
            Channel::PopA,
            Channel::PopB,
            Channel::PopC,
            Channel::AbsorptionPump,
            Channel::AbsorptionProbe,
            Channel::InversionPump,
            Channel::InversionProbe,
        ];
        for (i, c) in all.into_iter().enumerate() {
            assert_eq!(c.value(&o), (i + 1) as f64);
        }
    }
}
