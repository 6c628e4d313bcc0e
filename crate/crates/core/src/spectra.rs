//! Peak detection on sampled spectra and matching of peaks to a predicted
//! comb.

use serde::{Deserialize, Serialize};

use crate::dressed::{CombEntry, CombKind, PredictedComb};

/// Default prominence threshold for quantum spectra, as a fraction of the
/// spectrum's full range.
pub const QUANTUM_MIN_PROMINENCE: f64 = 0.02;
/// Default prominence threshold for the classical oscillator.
pub const CLASSICAL_MIN_PROMINENCE: f64 = 0.05;
/// Default matching tolerance relative to each predicted frequency.
pub const MATCH_TOL_FRAC: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakLabel {
    pub base: f64,
    pub m: u32,
    pub n: u32,
    pub kind: CombKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub location: f64,
    pub height: f64,
    pub prominence: f64,
    pub fwhm: f64,
    pub label: Option<PeakLabel>,
    /// Grid index of the sampled maximum.
    pub index: usize,
    /// Some point of the three-point stencil was filled in by interpolation.
    pub interpolated: bool,
}

/// Replaces missing values by linear interpolation between the nearest
/// present neighbours (nearest value at the ends). Returns the filled series
/// and which entries were filled. An entirely missing series becomes zeros.
pub fn fill_gaps(x: &[f64], y: &[Option<f64>]) -> (Vec<f64>, Vec<bool>) {
    let present: Vec<usize> = (0..y.len()).filter(|&i| y[i].is_some()).collect();
    let filled_mask: Vec<bool> = y.iter().map(Option::is_none).collect();
    if present.is_empty() {
        return (vec![0.0; y.len()], filled_mask);
    }
    let value = |i: usize| y[i].unwrap();
    let mut out = Vec::with_capacity(y.len());
    let mut next = 0usize;
    for i in 0..y.len() {
        if let Some(v) = y[i] {
            out.push(v);
            next += 1;
            continue;
        }
        let right = present.get(next).copied();
        let left = next.checked_sub(1).map(|k| present[k]);
        out.push(match (left, right) {
            (Some(l), Some(r)) => {
                let w = (x[i] - x[l]) / (x[r] - x[l]);
                value(l) + w * (value(r) - value(l))
            }
            (Some(l), None) => value(l),
            (None, Some(r)) => value(r),
            (None, None) => unreachable!(),
        });
    }
    (out, filled_mask)
}

/// Vertex of the parabola through three points, clamped to their span.
fn parabolic_vertex(x: [f64; 3], y: [f64; 3]) -> (f64, f64) {
    let (x0, x1, x2) = (x[0] - x[1], 0.0, x[2] - x[1]);
    let d0 = (y[0] - y[1]) / (x0 - x1);
    let d2 = (y[2] - y[1]) / (x2 - x1);
    let a = (d2 - d0) / (x2 - x0);
    if !(a < 0.0) {
        return (x[1], y[1]);
    }
    let b = d0 - a * x0;
    let v = (-b / (2.0 * a)).clamp(x0, x2);
    (x[1] + v, y[1] + b * v + a * v * v)
}

fn crossing(x: &[f64], y: &[f64], inside: usize, outside: usize, level: f64) -> f64 {
    let (ya, yb) = (y[inside], y[outside]);
    let w = (ya - level) / (ya - yb);
    x[inside] + w * (x[outside] - x[inside])
}

/// Local maxima of `y` over the strictly increasing grid `x` whose
/// topographic prominence is at least `min_prominence_frac` times the full
/// range of `y`, in order of location.
pub fn detect_peaks(x: &[f64], y: &[f64], min_prominence_frac: f64) -> Vec<Peak> {
    detect_peaks_flagged(x, y, &vec![false; y.len()], min_prominence_frac)
}

/// As [`detect_peaks`], with a mask of interpolated samples to propagate.
pub fn detect_peaks_flagged(x: &[f64], y: &[f64], filled: &[bool], min_prominence_frac: f64) -> Vec<Peak> {
    assert_eq!(x.len(), y.len());
    let n = y.len();
    if n < 3 {
        return Vec::new();
    }
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi - lo;
    if !(range > 0.0) || !range.is_finite() {
        return Vec::new();
    }
    let threshold = min_prominence_frac * range;
    let mut peaks = Vec::new();
    let mut i = 1;
    while i < n - 1 {
        if !(y[i] > y[i - 1]) {
            i += 1;
            continue;
        }
        // extend over a plateau
        let mut j = i;
        while j + 1 < n && y[j + 1] == y[i] {
            j += 1;
        }
        if j + 1 >= n || y[j + 1] > y[i] {
            i = j + 1;
            continue;
        }
        let k = (i + j) / 2;
        let top = y[k];
        let mut left_min = top;
        let mut l = i;
        while l > 0 && y[l - 1] <= top {
            l -= 1;
            left_min = left_min.min(y[l]);
        }
        let mut right_min = top;
        let mut r = j;
        while r + 1 < n && y[r + 1] <= top {
            r += 1;
            right_min = right_min.min(y[r]);
        }
        let prominence = top - left_min.max(right_min);
        if prominence > 0.0 && prominence >= threshold {
            let (location, height) = parabolic_vertex([x[k - 1], x[k], x[k + 1]], [y[k - 1], top, y[k + 1]]);
            let level = top - 0.5 * prominence;
            let mut a = k;
            while a > 0 && y[a] > level {
                a -= 1;
            }
            let left = if y[a] <= level && a < k { crossing(x, y, a + 1, a, level) } else { x[a] };
            let mut b = k;
            while b + 1 < n && y[b] > level {
                b += 1;
            }
            let right = if y[b] <= level && b > k { crossing(x, y, b - 1, b, level) } else { x[b] };
            peaks.push(Peak {
                location,
                height,
                prominence,
                fwhm: (right - left).max(f64::MIN_POSITIVE),
                label: None,
                index: k,
                interpolated: filled[k - 1] || filled[k] || filled[k + 1],
            });
        }
        i = j + 1;
    }
    peaks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakMatch {
    pub peak: usize,
    pub entry: CombEntry,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// Input peaks with labels filled in where matched.
    pub peaks: Vec<Peak>,
    pub matches: Vec<PeakMatch>,
    pub unmatched_predictions: Vec<CombEntry>,
    pub unlabeled_peaks: Vec<usize>,
}

impl MatchReport {
    /// The peak matched to the comb entry of the given kind and order.
    pub fn peak_for(&self, kind: CombKind, m: u32, n: u32) -> Option<&Peak> {
        self.matches
            .iter()
            .find(|pm| pm.entry.kind == kind && pm.entry.m == m && pm.entry.n == n)
            .map(|pm| &self.peaks[pm.peak])
    }
}

/// Greedy nearest-first assignment of peaks to comb entries lying within
/// `tol_frac` of the predicted frequency. Each peak and each entry is used
/// at most once.
pub fn match_peaks(peaks: &[Peak], comb: &PredictedComb, tol_frac: f64) -> MatchReport {
    let mut pairs = Vec::new();
    for (pi, p) in peaks.iter().enumerate() {
        for (ei, e) in comb.entries.iter().enumerate() {
            let d = (p.location - e.frequency).abs();
            if d <= tol_frac * e.frequency {
                pairs.push((d, ei, pi));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut peak_used = vec![false; peaks.len()];
    let mut entry_used = vec![false; comb.entries.len()];
    let mut labeled = peaks.to_vec();
    let mut matches = Vec::new();
    for (d, ei, pi) in pairs {
        if peak_used[pi] || entry_used[ei] {
            continue;
        }
        peak_used[pi] = true;
        entry_used[ei] = true;
        let e = comb.entries[ei];
        labeled[pi].label = Some(PeakLabel { base: e.base, m: e.m, n: e.n, kind: e.kind });
        matches.push(PeakMatch { peak: pi, entry: e, distance: d });
    }
    matches.sort_by(|a, b| b.entry.frequency.total_cmp(&a.entry.frequency));
    MatchReport {
        peaks: labeled,
        matches,
        unmatched_predictions: comb.entries.iter().zip(&entry_used).filter(|(_, u)| !**u).map(|(e, _)| *e).collect(),
        unlabeled_peaks: (0..peaks.len()).filter(|&i| !peak_used[i]).collect(),
    }
}
