//! Physical parameters of the Λ atom and the right-hand side of its
//! semiclassical master equation.
//!
//! Levels: |a⟩ and |b⟩ are the lower doublet split by `omega_ab`, |c⟩ is the
//! common upper level. Field E_ac (envelope f1) drives a–c resonantly and b–c
//! detuned by ω_ab; field E_bc (envelope f2) drives b–c resonantly and a–c
//! detuned by −ω_ab. Only ρ_aa, ρ_bb, ρ_ac, ρ_bc and ρ_ab are evolved; the
//! conjugate coherences and ρ_cc are derived.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::drive::DriveEnvelope;
use crate::error::ParamError;

/// Tolerance below which a negative upper population is treated as round-off.
pub const RHO_CC_CLAMP: f64 = 1e-9;

/// How the b–c coherence is damped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoherenceDecay {
    /// ρ_bc damps at (γ_ac+γ_bc+γ_ab)/2, ρ_ac at (γ_ac+γ_bc)/2.
    #[default]
    Lindblad,
    /// Both optical coherences damp at (γ_ac+γ_bc)/2. Sensitivity check only.
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub omega_ab: f64,
    pub gamma_ab: f64,
    pub gamma_ac: f64,
    pub gamma_bc: f64,
    pub rabi_ac: f64,
    pub rabi_bc: f64,
    /// Field E_ac acting on the b–c transition.
    pub rabi_acb: f64,
    /// Field E_bc acting on the a–c transition.
    pub rabi_bca: f64,
    #[serde(default)]
    pub coherence_decay: CoherenceDecay,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::new(11.0, 0.0, 0.0)
    }
}

impl SystemParams {
    pub const DEFAULT_GAMMA_AB: f64 = 0.01;
    pub const DEFAULT_GAMMA_AC: f64 = 1.0;
    pub const DEFAULT_GAMMA_BC: f64 = 1.0;

    /// Default decay rates, cross couplings equal to the direct coupling of
    /// the same field (equal dipole moments).
    pub fn new(omega_ab: f64, rabi_ac: f64, rabi_bc: f64) -> Self {
        Self {
            omega_ab,
            gamma_ab: Self::DEFAULT_GAMMA_AB,
            gamma_ac: Self::DEFAULT_GAMMA_AC,
            gamma_bc: Self::DEFAULT_GAMMA_BC,
            rabi_ac,
            rabi_bc,
            rabi_acb: rabi_ac,
            rabi_bca: rabi_bc,
            coherence_decay: CoherenceDecay::Lindblad,
        }
    }

    pub fn with_decay(mut self, gamma_ab: f64, gamma_ac: f64, gamma_bc: f64) -> Self {
        self.gamma_ab = gamma_ab;
        self.gamma_ac = gamma_ac;
        self.gamma_bc = gamma_bc;
        self
    }

    pub fn with_cross(mut self, rabi_acb: f64, rabi_bca: f64) -> Self {
        self.rabi_acb = rabi_acb;
        self.rabi_bca = rabi_bca;
        self
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let nonneg = [
            ("omega_ab", self.omega_ab),
            ("gamma_ab", self.gamma_ab),
            ("gamma_ac", self.gamma_ac),
            ("gamma_bc", self.gamma_bc),
        ];
        for (name, value) in nonneg {
            if !value.is_finite() || value < 0.0 {
                return Err(ParamError::new(name, format!("must be finite and >= 0, got {value}")));
            }
        }
        let finite = [
            ("rabi_ac", self.rabi_ac),
            ("rabi_bc", self.rabi_bc),
            ("rabi_acb", self.rabi_acb),
            ("rabi_bca", self.rabi_bca),
        ];
        for (name, value) in finite {
            if !value.is_finite() {
                return Err(ParamError::new(name, format!("must be finite, got {value}")));
            }
        }
        Ok(())
    }

    /// Smallest strictly positive decay rate, if any.
    pub fn slowest_decay(&self) -> Option<f64> {
        [self.gamma_ab, self.gamma_ac, self.gamma_bc]
            .into_iter()
            .filter(|g| *g > 0.0)
            .reduce(f64::min)
    }

    fn coherence_rates(&self) -> (f64, f64, f64) {
        let upper = 0.5 * (self.gamma_ac + self.gamma_bc);
        let bc = match self.coherence_decay {
            CoherenceDecay::Lindblad => upper + 0.5 * self.gamma_ab,
            CoherenceDecay::Symmetric => upper,
        };
        (upper, bc, 0.5 * self.gamma_ab)
    }

    /// Complex couplings (V_a, V_b) of the a–c and b–c transitions at time
    /// `t` for envelope values `f1`, `f2`.
    pub fn couplings(&self, t: f64, f1: f64, f2: f64) -> (Complex64, Complex64) {
        let phase = Complex64::from_polar(1.0, self.omega_ab * t);
        let v_a = self.rabi_ac * f1 + self.rabi_bca * f2 * phase.conj();
        let v_b = self.rabi_bc * f2 + self.rabi_acb * f1 * phase;
        (v_a, v_b)
    }
}

/// The independent density-matrix components. Also used for their time
/// derivatives, where `rho_cc` of the derivative is `-(rho_aa + rho_bb)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DensityState {
    pub rho_aa: f64,
    pub rho_bb: f64,
    pub rho_ac: Complex64,
    pub rho_bc: Complex64,
    pub rho_ab: Complex64,
}

impl DensityState {
    pub const REAL_DIM: usize = 8;

    pub fn ground_a() -> Self {
        Self { rho_aa: 1.0, ..Self::default() }
    }

    pub fn ground_b() -> Self {
        Self { rho_bb: 1.0, ..Self::default() }
    }

    pub fn excited() -> Self {
        Self::default()
    }

    /// Upper-level population, with round-off below [`RHO_CC_CLAMP`] clamped to 0.
    pub fn rho_cc(&self) -> f64 {
        let raw = self.rho_cc_raw();
        if raw < 0.0 && raw > -RHO_CC_CLAMP {
            0.0
        } else {
            raw
        }
    }

    pub fn rho_cc_raw(&self) -> f64 {
        1.0 - self.rho_aa - self.rho_bb
    }

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.rho_aa,
            self.rho_bb,
            self.rho_ac.re,
            self.rho_ac.im,
            self.rho_bc.re,
            self.rho_bc.im,
            self.rho_ab.re,
            self.rho_ab.im,
        ]
    }

    pub fn from_slice(y: &[f64]) -> Self {
        Self {
            rho_aa: y[0],
            rho_bb: y[1],
            rho_ac: Complex64::new(y[2], y[3]),
            rho_bc: Complex64::new(y[4], y[5]),
            rho_ab: Complex64::new(y[6], y[7]),
        }
    }

    /// Full 3×3 matrix in the basis (a, b, c).
    pub fn matrix(&self) -> [[Complex64; 3]; 3] {
        let re = |x: f64| Complex64::new(x, 0.0);
        [
            [re(self.rho_aa), self.rho_ab, self.rho_ac],
            [self.rho_ab.conj(), re(self.rho_bb), self.rho_bc],
            [self.rho_ac.conj(), self.rho_bc.conj(), re(self.rho_cc_raw())],
        ]
    }

    /// Largest violation of |ρ_ij|² ≤ ρ_ii ρ_jj over the three pairs.
    pub fn cauchy_schwarz_excess(&self) -> f64 {
        let cc = self.rho_cc_raw();
        [
            self.rho_ac.norm_sqr() - self.rho_aa * cc,
            self.rho_bc.norm_sqr() - self.rho_bb * cc,
            self.rho_ab.norm_sqr() - self.rho_aa * self.rho_bb,
        ]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest eigenvalue of the reconstructed Hermitian density matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        hermitian3_min_eigenvalue(&self.matrix())
    }
}

/// Smallest eigenvalue of a 3×3 Hermitian matrix via the trigonometric
/// solution of its characteristic cubic, polished by Newton steps.
pub fn hermitian3_min_eigenvalue(m: &[[Complex64; 3]; 3]) -> f64 {
    let a = m[0][0].re;
    let b = m[1][1].re;
    let c = m[2][2].re;
    let p1 = m[0][1].norm_sqr() + m[0][2].norm_sqr() + m[1][2].norm_sqr();
    if p1 == 0.0 {
        return a.min(b).min(c);
    }
    let q = (a + b + c) / 3.0;
    let (da, db, dc) = (a - q, b - q, c - q);
    let p2 = da * da + db * db + dc * dc + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let shifted_det = |x: f64| {
        let (xa, xb, xc) = (a - x, b - x, c - x);
        xa * xb * xc + 2.0 * (m[0][1] * m[1][2] * m[0][2].conj()).re
            - xa * m[1][2].norm_sqr()
            - xb * m[0][2].norm_sqr()
            - xc * m[0][1].norm_sqr()
    };
    let r = (shifted_det(q) / (2.0 * p * p * p)).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let mut lambda = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
    for _ in 0..2 {
        let (xa, xb, xc) = (a - lambda, b - lambda, c - lambda);
        let slope = -(xa * xb + xa * xc + xb * xc - p1);
        let f = shifted_det(lambda);
        if slope.abs() <= f64::EPSILON * p * p {
            break;
        }
        let next = lambda - f / slope;
        if shifted_det(next).abs() >= f.abs() {
            break;
        }
        lambda = next;
    }
    lambda
}

/// Time derivative of the state with the envelopes already evaluated.
#[inline]
pub fn rhs_with_envelopes(t: f64, s: &DensityState, p: &SystemParams, f1: f64, f2: f64) -> DensityState {
    let i = Complex64::i();
    let (v_a, v_b) = p.couplings(t, f1, f2);
    let (g_ac, g_bc, g_ab) = p.coherence_rates();
    let rho_cc = s.rho_cc_raw();
    let (rho_ca, rho_cb, rho_ba) = (s.rho_ac.conj(), s.rho_bc.conj(), s.rho_ab.conj());

    let d_aa = p.gamma_ab * s.rho_bb + p.gamma_ac * rho_cc + (i * v_a.conj() * rho_ca - i * v_a * s.rho_ac).re;
    let d_bb = -p.gamma_ab * s.rho_bb + p.gamma_bc * rho_cc + (i * v_b.conj() * rho_cb - i * v_b * s.rho_bc).re;
    let d_bc = -g_bc * s.rho_bc - i * v_a.conj() * rho_ba + i * v_b.conj() * (rho_cc - s.rho_bb);
    let d_ac = -g_ac * s.rho_ac - i * v_b.conj() * s.rho_ab + i * v_a.conj() * (rho_cc - s.rho_aa);
    let d_ab = -g_ab * s.rho_ab - i * v_b * s.rho_ac + i * v_a.conj() * rho_cb;

    DensityState { rho_aa: d_aa, rho_bb: d_bb, rho_ac: d_ac, rho_bc: d_bc, rho_ab: d_ab }
}

/// Right-hand side of the master equation at time `t`.
pub fn master_rhs(
    t: f64,
    state: &DensityState,
    params: &SystemParams,
    f1: &DriveEnvelope,
    f2: &DriveEnvelope,
) -> DensityState {
    rhs_with_envelopes(t, state, params, f1.evaluate(t), f2.evaluate(t))
}
