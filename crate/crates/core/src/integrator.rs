//! Adaptive Dormand–Prince 5(4) integration with 4th-order dense output,
//! and the density-matrix driver that resamples onto a uniform grid.

use serde::{Deserialize, Serialize};

use crate::drive::Drives;
use crate::error::{IntegrationError, ParamError};
use crate::model::{rhs_with_envelopes, DensityState, SystemParams};

/// States outside the physical set by more than this abort the run.
pub const HARD_INVARIANT_TOL: f64 = 1e-4;

pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N]) -> [f64; N];

    /// Upper bound on the step that starts at `t`.
    fn max_step(&self, _t: f64) -> f64 {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl StepControl {
    pub fn with_tol(tol: f64) -> Self {
        Self { rtol: tol, atol: tol, max_steps: 50_000_000 }
    }
}

// Dormand–Prince coefficients
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with its continuous extension.
#[derive(Debug, Clone, Copy)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    pub y1: [f64; N],
    r: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval(&self, t: f64) -> [f64; N] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let r = &self.r;
        std::array::from_fn(|i| r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i]))))
    }
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

/// Integrates from `t0` to `t_end`, handing every accepted step to `on_step`.
/// Returns the final state and the number of accepted steps.
pub fn solve_dense<const N: usize, S, F>(
    sys: &S,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    ctl: &StepControl,
    mut on_step: F,
) -> Result<([f64; N], usize), IntegrationError>
where
    S: OdeSystem<N>,
    F: FnMut(&DenseStep<N>) -> Result<(), IntegrationError>,
{
    let mut t = t0;
    let mut y = y0;
    let mut k1 = sys.rhs(t, &y);
    if t_end <= t0 {
        return Ok((y, 0));
    }
    let span = t_end - t0;
    let mut h = initial_step(sys, t, &y, &k1, ctl).min(span);
    let mut accepted = 0usize;
    let mut attempts = 0usize;
    let mut last_rejected = false;

    while t < t_end {
        attempts += 1;
        if attempts > ctl.max_steps {
            return Err(IntegrationError::TooManySteps { t, max_steps: ctl.max_steps });
        }
        h = h.min(sys.max_step(t));
        let mut last = false;
        if t + h >= t_end || t_end - (t + h) < 1e-12 * span {
            h = t_end - t;
            last = true;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(IntegrationError::StepUnderflow { t, step: h });
        }

        let k2 = sys.rhs(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = sys.rhs(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = sys.rhs(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = sys.rhs(t + C5 * h, &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = sys.rhs(
            t + h,
            &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y1 = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let t1 = if last { t_end } else { t + h };
        let k7 = sys.rhs(t1, &y1);

        let mut err = 0.0;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = ctl.atol + ctl.rtol * y[i].abs().max(y1[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / N as f64).sqrt();
        if !err.is_finite() {
            return Err(IntegrationError::NonFinite { t });
        }

        if err <= 1.0 {
            let mut r = [[0.0; N]; 5];
            for i in 0..N {
                let ydiff = y1[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                r[0][i] = y[i];
                r[1][i] = ydiff;
                r[2][i] = bspl;
                r[3][i] = ydiff - h * k7[i] - bspl;
                r[4][i] =
                    h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            on_step(&DenseStep { t0: t, h: t1 - t, y1, r })?;
            accepted += 1;
            t = t1;
            y = y1;
            k1 = k7;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= if last_rejected { fac.min(1.0) } else { fac };
            last_rejected = false;
        } else {
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            last_rejected = true;
        }
    }
    Ok((y, accepted))
}

fn initial_step<const N: usize, S: OdeSystem<N>>(
    sys: &S,
    t: f64,
    y: &[f64; N],
    f0: &[f64; N],
    ctl: &StepControl,
) -> f64 {
    let norm = |v: &[f64; N]| {
        let s: f64 = (0..N)
            .map(|i| {
                let sc = ctl.atol + ctl.rtol * y[i].abs();
                (v[i] / sc).powi(2)
            })
            .sum();
        (s / N as f64).sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(sys.max_step(t));
    let y1 = axpy(y, h0, &[(1.0, f0)]);
    let f1 = sys.rhs(t + h0, &y1);
    let diff: [f64; N] = std::array::from_fn(|i| f1[i] - f0[i]);
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(sys.max_step(t))
}

/// Integrates and calls `sink` at t0 + k·dt for every k with the sample time
/// in `[record_from, t_end]`. Sample times are formed by multiplication so the
/// grid is independent of the adaptive steps.
#[allow(clippy::too_many_arguments)]
pub fn solve_sampled<const N: usize, S, F>(
    sys: &S,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    dt: f64,
    record_from: f64,
    ctl: &StepControl,
    mut sink: F,
) -> Result<usize, IntegrationError>
where
    S: OdeSystem<N>,
    F: FnMut(f64, &[f64; N]) -> Result<(), IntegrationError>,
{
    let first = ((record_from - t0) / dt).ceil().max(0.0) as u64;
    let mut k = first;
    let sample_time = |k: u64| t0 + k as f64 * dt;
    let eps = 1e-9 * dt;
    if sample_time(k) <= t0 + eps {
        sink(t0, &y0)?;
        k += 1;
    }
    let (_, steps) = solve_dense(sys, t0, y0, t_end, ctl, |step| {
        let t1 = step.t1();
        loop {
            let ts = sample_time(k);
            if ts > t1 + eps || ts > t_end + eps {
                break;
            }
            if (ts - t1).abs() <= eps {
                sink(ts, &step.y1)?;
            } else {
                sink(ts, &step.eval(ts))?;
            }
            k += 1;
        }
        Ok(())
    })?;
    Ok(steps)
}

/// Master equation with a redundant, independently evolved ρ_cc in slot 8.
#[derive(Debug, Clone, Copy)]
pub struct LambdaSystem {
    pub params: SystemParams,
    pub drives: Drives,
}

impl OdeSystem<9> for LambdaSystem {
    #[inline]
    fn rhs(&self, t: f64, y: &[f64; 9]) -> [f64; 9] {
        let (f1, f2) = self.drives.evaluate(t);
        let s = DensityState::from_slice(y);
        let d = rhs_with_envelopes(t, &s, &self.params, f1, f2);
        let p = &self.params;
        let rho_cc = 1.0 - s.rho_aa - s.rho_bb;
        // field-driven parts of the lower-level equations feed the upper level
        let field_a = d.rho_aa - p.gamma_ab * s.rho_bb - p.gamma_ac * rho_cc;
        let field_b = d.rho_bb + p.gamma_ab * s.rho_bb - p.gamma_bc * rho_cc;
        let d_cc = -(p.gamma_ac + p.gamma_bc) * y[8] - field_a - field_b;
        let a = d.to_array();
        [a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], d_cc]
    }

    fn max_step(&self, t: f64) -> f64 {
        self.drives.max_step(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub tol: f64,
    pub sample_dt: f64,
    pub t_start: f64,
    /// Samples earlier than this are integrated but not stored.
    pub record_from: f64,
}

impl IntegrateOptions {
    pub fn new(tol: f64, sample_dt: f64) -> Self {
        Self { tol, sample_dt, t_start: 0.0, record_from: 0.0 }
    }

    pub fn recording_from(mut self, t: f64) -> Self {
        self.record_from = t;
        self
    }

    fn validate(&self, params: &SystemParams) -> Result<(), ParamError> {
        if !(1e-12..=1e-4).contains(&self.tol) {
            return Err(ParamError::new("tol", format!("must lie in [1e-12, 1e-4], got {}", self.tol)));
        }
        if !(self.sample_dt.is_finite() && self.sample_dt > 0.0) {
            return Err(ParamError::new("sample_dt", "must be > 0"));
        }
        if params.omega_ab > 0.0 {
            let limit = std::f64::consts::TAU / (20.0 * params.omega_ab);
            if self.sample_dt > limit * (1.0 + 1e-12) {
                return Err(ParamError::new(
                    "sample_dt",
                    format!("{} does not resolve omega_ab (needs <= {limit})", self.sample_dt),
                ));
            }
        }
        Ok(())
    }
}

/// Uniformly sampled solution of one integration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityState>,
    pub params: SystemParams,
    pub drives: Drives,
    /// Largest |ρ_aa + ρ_bb + ρ_cc − 1| with ρ_cc taken from the redundant component.
    pub max_trace_error: f64,
    /// Smallest eigenvalue of the reconstructed density matrix over all samples.
    pub min_eigenvalue: f64,
    pub steps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&DensityState> {
        self.states.last()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,rho_aa,rho_bb,rho_cc,re_ac,im_ac,re_bc,im_bc,re_ab,im_ab")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                crate::io::fmt_f64(*t),
                crate::io::fmt_f64(s.rho_aa),
                crate::io::fmt_f64(s.rho_bb),
                crate::io::fmt_f64(s.rho_cc()),
                crate::io::fmt_f64(s.rho_ac.re),
                crate::io::fmt_f64(s.rho_ac.im),
                crate::io::fmt_f64(s.rho_bc.re),
                crate::io::fmt_f64(s.rho_bc.im),
                crate::io::fmt_f64(s.rho_ab.re),
                crate::io::fmt_f64(s.rho_ab.im),
            )?;
        }
        Ok(())
    }
}

fn check_physical(t: f64, s: &DensityState) -> Result<f64, IntegrationError> {
    let checks = [
        ("rho_aa", -s.rho_aa),
        ("rho_bb", -s.rho_bb),
        ("rho_cc", -s.rho_cc_raw()),
        ("cauchy_schwarz", s.cauchy_schwarz_excess()),
    ];
    for (what, excess) in checks {
        if excess > HARD_INVARIANT_TOL {
            return Err(IntegrationError::InvariantViolation { t, what, value: excess });
        }
    }
    let lambda = s.min_eigenvalue();
    if lambda < -HARD_INVARIANT_TOL {
        return Err(IntegrationError::InvariantViolation { t, what: "min_eigenvalue", value: lambda });
    }
    Ok(lambda)
}

/// Integrates the master equation and returns the uniformly sampled trajectory.
pub fn integrate_with(
    initial: DensityState,
    t_end: f64,
    params: &SystemParams,
    drives: &Drives,
    opts: &IntegrateOptions,
) -> Result<Trajectory, IntegrationError> {
    params.validate()?;
    drives.validate()?;
    opts.validate(params)?;
    let sys = LambdaSystem { params: *params, drives: *drives };
    let a = initial.to_array();
    let y0 = [a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], initial.rho_cc_raw()];
    let expected = ((t_end - opts.record_from.max(opts.t_start)) / opts.sample_dt).max(0.0) as usize + 2;
    let expected = expected.min(1 << 20);
    let mut times = Vec::with_capacity(expected);
    let mut states = Vec::with_capacity(expected);
    let mut max_trace_error: f64 = 0.0;
    let mut min_eigenvalue = f64::INFINITY;
    let steps = solve_sampled(
        &sys,
        opts.t_start,
        y0,
        t_end,
        opts.sample_dt,
        opts.record_from,
        &StepControl::with_tol(opts.tol),
        |t, y| {
            let s = DensityState::from_slice(y);
            min_eigenvalue = min_eigenvalue.min(check_physical(t, &s)?);
            max_trace_error = max_trace_error.max((y[0] + y[1] + y[8] - 1.0).abs());
            times.push(t);
            states.push(s);
            Ok(())
        },
    )?;
    Ok(Trajectory {
        times,
        states,
        params: *params,
        drives: *drives,
        max_trace_error,
        min_eigenvalue,
        steps,
    })
}

/// Integrates from t = 0 to `t_end`, sampling every `sample_dt`.
pub fn integrate(
    initial: DensityState,
    t_end: f64,
    sample_dt: f64,
    params: &SystemParams,
    drives: &Drives,
    tol: f64,
) -> Result<Trajectory, IntegrationError> {
    integrate_with(initial, t_end, params, drives, &IntegrateOptions::new(tol, sample_dt))
}
