//! Predicted resonance locations: the subharmonic comb ω_ab/n, the
//! combination combs |ω_ab ± Ω_ac|/n of the dressed atom, and the rational
//! comb m·ω_ab/n.

use serde::{Deserialize, Serialize};

use crate::sweep::Scenario;

/// Entries closer than this are merged.
pub const DEDUP_TOL: f64 = 1e-9;

/// Difference frequencies below this many grid steps are dropped.
pub const DIFFERENCE_MIN_STEPS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombKind {
    Eigen,
    Sum,
    Difference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombEntry {
    pub frequency: f64,
    pub base: f64,
    pub m: u32,
    pub n: u32,
    pub kind: CombKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedComb {
    pub base_frequencies: Vec<f64>,
    pub max_n: u32,
    /// Sorted by descending frequency.
    pub entries: Vec<CombEntry>,
}

impl PredictedComb {
    fn from_entries(base_frequencies: Vec<f64>, max_n: u32, mut entries: Vec<CombEntry>) -> Self {
        entries.retain(|e| e.frequency > 0.0 && e.frequency.is_finite());
        entries.sort_by(|x, y| y.frequency.total_cmp(&x.frequency).then(x.n.cmp(&y.n)));
        entries.dedup_by(|later, kept| (kept.frequency - later.frequency).abs() <= DEDUP_TOL);
        Self { base_frequencies, max_n, entries }
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.frequency).collect()
    }

    pub fn find(&self, kind: CombKind, m: u32, n: u32) -> Option<&CombEntry> {
        self.entries.iter().find(|e| e.kind == kind && e.m == m && e.n == n)
    }
}

fn subharmonics(base: f64, max_n: u32, kind: CombKind) -> impl Iterator<Item = CombEntry> {
    (1..=max_n).map(move |n| CombEntry { frequency: base / n as f64, base, m: 1, n, kind })
}

/// Resonances expected for `scenario`: ω_ab/n, or for the mixed-pump
/// scenario the sum and difference combs |ω_ab ± Ω_ac|/n. A difference
/// frequency within [`DIFFERENCE_MIN_STEPS`] grid steps of zero is dropped.
pub fn predict_resonances(
    omega_ab: f64,
    rabi_ac: f64,
    max_n: u32,
    scenario: Scenario,
    grid_step: f64,
) -> PredictedComb {
    let max_n = max_n.max(1);
    match scenario {
        Scenario::Fig3 => {
            let sum = (omega_ab + rabi_ac).abs();
            let diff = (omega_ab - rabi_ac).abs();
            let mut bases = vec![sum];
            let mut entries: Vec<_> = subharmonics(sum, max_n, CombKind::Sum).collect();
            if diff > 0.0 && diff >= DIFFERENCE_MIN_STEPS * grid_step {
                bases.push(diff);
                entries.extend(subharmonics(diff, max_n, CombKind::Difference));
            }
            PredictedComb::from_entries(bases, max_n, entries)
        }
        _ => PredictedComb::from_entries(vec![omega_ab], max_n, subharmonics(omega_ab, max_n, CombKind::Eigen).collect()),
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// All m·ω_ab/n with m/n ≤ 1 in lowest terms, m ≤ `max_m`, n ≤ `max_n`.
pub fn predict_rational_comb(omega_ab: f64, max_m: u32, max_n: u32) -> PredictedComb {
    let mut entries = Vec::new();
    for n in 1..=max_n.max(1) {
        for m in 1..=max_m.max(1).min(n) {
            if gcd(m, n) == 1 {
                entries.push(CombEntry {
                    frequency: omega_ab * m as f64 / n as f64,
                    base: omega_ab,
                    m,
                    n,
                    kind: CombKind::Eigen,
                });
            }
        }
    }
    PredictedComb::from_entries(vec![omega_ab], max_n.max(1), entries)
}
