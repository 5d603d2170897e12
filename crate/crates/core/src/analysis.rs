//! Recovering intermediate-state energies from eTPA spectra.
//!
//! A spectrum taken at pump setting ω_0 shows lines at ±Δ_j, ±(Δ_j − Δ_k)
//! and ±(Δ_j + Δ_k) with Δ_j = ε_j − ω_0. Changing ω_0 moves the three
//! families with slopes ∓1, 0 and ∓2, so lines seen at two or more pump
//! settings can be sorted into families without knowing N. Only the ±Δ_j
//! family carries a single energy, ε_j = Δ_j + ω_0.
//!
//! Matching and classification work on the positive-frequency half of each
//! spectrum. There a state with Δ_j > 0 shows up at f = Δ_j (slope −1) and
//! one with Δ_j < 0 at f = −Δ_j (slope +1). Peak heights are never used to
//! judge which lines are physical.

use rayon::prelude::*;
use serde::Serialize;
use std::cmp::Ordering;

use crate::physics::{distinct_nonzero, predicted_frequencies, DetuningSet};
use crate::scan::Spectrum;
use crate::{Error, Result};

/// Largest |slope − law| accepted for a linked trajectory.
pub const SLOPE_TOLERANCE: f64 = 0.25;
/// Default C(peaks, n) cap for [`educated_guess`].
pub const DEFAULT_GUESS_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    /// Sub-bin refined position, eV.
    pub frequency: f64,
    pub magnitude: f64,
    pub prominence: f64,
}

/// Peaks detected in one spectrum, sorted by frequency.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakSet {
    pub peaks: Vec<Peak>,
    pub omega0: f64,
    pub omega_res: f64,
}

impl PeakSet {
    pub fn new(mut peaks: Vec<Peak>, omega0: f64, omega_res: f64) -> Self {
        peaks.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
        Self {
            peaks,
            omega0,
            omega_res,
        }
    }

    /// Peaks at the given frequencies, with unit magnitude and prominence.
    pub fn from_frequencies(freqs: &[f64], omega0: f64, omega_res: f64) -> Self {
        let peaks = freqs
            .iter()
            .map(|&frequency| Peak {
                frequency,
                magnitude: 1.0,
                prominence: 1.0,
            })
            .collect();
        Self::new(peaks, omega0, omega_res)
    }

    pub fn positive(&self) -> Vec<Peak> {
        self.peaks.iter().copied().filter(|p| p.frequency > 0.0).collect()
    }

    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }
}

/// Local maxima of `sp` whose topographic prominence reaches
/// `min_prominence` times the largest magnitude outside |f| < `dc_exclusion`.
pub fn detect_peaks(sp: &Spectrum, min_prominence: f64, dc_exclusion: f64) -> PeakSet {
    let m = &sp.magnitudes;
    let n = m.len();
    let outside = |i: usize| sp.frequencies[i].abs() >= dc_exclusion;
    let global = (0..n).filter(|&i| outside(i)).map(|i| m[i]).fold(0.0_f64, f64::max);
    let mut peaks = Vec::new();
    if global <= 0.0 || n < 3 {
        return PeakSet::new(peaks, sp.omega0, sp.omega_res);
    }
    let threshold = min_prominence * global;
    for i in 1..n - 1 {
        if !(m[i] > m[i - 1] && m[i] >= m[i + 1]) || !outside(i) {
            continue;
        }
        let prominence = prominence(m, i);
        if prominence < threshold || prominence <= 0.0 {
            continue;
        }
        let (a, b, c) = (m[i - 1], m[i], m[i + 1]);
        let denom = a - 2.0 * b + c;
        let offset = if denom != 0.0 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        let magnitude = b - 0.25 * (a - c) * offset;
        peaks.push(Peak {
            frequency: sp.frequencies[i] + offset * sp.omega_res,
            magnitude,
            prominence,
        });
    }
    PeakSet::new(peaks, sp.omega0, sp.omega_res)
}

/// Height of `m[i]` above the higher of the two minima separating it from
/// taller samples (or the array ends).
fn prominence(m: &[f64], i: usize) -> f64 {
    let h = m[i];
    let mut left_min = h;
    for &v in m[..i].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &m[i + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Family of a spectral line judged from how it moves with ω_0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyLabel {
    /// ±Δ_j: shifts by ∓ω_0.
    ShiftOmega0,
    /// ±(Δ_j − Δ_k): does not move.
    Invariant,
    /// ±(Δ_j + Δ_k): shifts by ∓2ω_0.
    ShiftTwoOmega0,
    Unclassified,
}

impl FamilyLabel {
    fn from_law(law: i32) -> Self {
        match law.abs() {
            0 => FamilyLabel::Invariant,
            1 => FamilyLabel::ShiftOmega0,
            2 => FamilyLabel::ShiftTwoOmega0,
            _ => FamilyLabel::Unclassified,
        }
    }
}

/// A positive-side peak in scan `scan`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPeak {
    pub scan: usize,
    pub frequency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabeledPeak {
    pub scan: usize,
    pub frequency: f64,
    pub family: FamilyLabel,
    /// Fitted d f/d ω_0 of the trajectory the peak belongs to.
    pub slope: Option<f64>,
}

/// Line followed across all scans under one slope law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    /// Hypothesised d f/d ω_0 on the positive side: one of −2, −1, 0, 1, 2.
    pub law: i32,
    pub family: FamilyLabel,
    /// One positive-side peak per scan in which the line was found, in scan
    /// order.
    pub points: Vec<ScanPeak>,
    /// Least-squares slope of frequency against ω_0.
    pub fitted_slope: f64,
    /// Largest distance between a linked peak and the law's prediction.
    pub residual: f64,
}

impl Trajectory {
    /// ε_j implied by each point of a ±Δ_j trajectory.
    fn energies(&self, omega0: &[f64]) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| omega0[p.scan] - self.law as f64 * p.frequency)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub trajectories: Vec<Trajectory>,
    pub labels: Vec<LabeledPeak>,
}

/// One ±Δ_j line seen in two scans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    /// Scans the two peaks come from.
    pub scans: (usize, usize),
    /// Positive-side position in the first scan, eV.
    pub peak_a: f64,
    /// Positive-side position in the second scan, eV.
    pub peak_b: f64,
    /// Signed Δ_j at the first scan's ω_0, eV.
    pub detuning: f64,
    /// ε_j, averaged over the two scans' Δ_j + ω_0, eV.
    pub epsilon: f64,
    /// Deviation of the observed separation from ±(ω_0^a − ω_0^b), eV.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchReport {
    pub omega0: Vec<f64>,
    pub matched_pairs: Vec<MatchedPair>,
    pub family_labels: Vec<LabeledPeak>,
    pub unmatched: Vec<ScanPeak>,
}

/// Pairs the ±Δ_j lines of two scans.
///
/// A positive-side line at f_a in `a` and f_b in `b` is a ±Δ_j pair when
/// f_a − f_b = ±(ω_0^b − ω_0^a) within `tol`; the sign tells whether Δ_j is
/// positive (+) or negative (−). Pairs are accepted greedily by smallest
/// residual, ties going to the larger summed prominence, and each peak is
/// used at most once.
pub fn pair_match(a: &PeakSet, b: &PeakSet, tol: f64) -> Result<MatchReport> {
    let shift = b.omega0 - a.omega0;
    if shift.abs() <= f64::EPSILON * a.omega0.abs().max(1.0) {
        return Err(Error::DegenerateConfiguration(format!(
            "both scans use omega0 = {} eV; matching needs two distinct pump wavelengths",
            a.omega0
        )));
    }
    if tol < a.omega_res.max(b.omega_res) {
        log::debug!("matching tolerance {tol} eV is below the frequency resolution");
    }
    let pa = a.positive();
    let pb = b.positive();

    struct Candidate {
        i: usize,
        j: usize,
        sign: f64,
        residual: f64,
        prominence: f64,
    }
    let mut candidates = Vec::new();
    for (i, x) in pa.iter().enumerate() {
        for (j, y) in pb.iter().enumerate() {
            for sign in [1.0, -1.0] {
                let residual = (x.frequency - y.frequency - sign * shift).abs();
                if residual <= tol {
                    candidates.push(Candidate {
                        i,
                        j,
                        sign,
                        residual,
                        prominence: x.prominence + y.prominence,
                    });
                }
            }
        }
    }
    candidates.sort_by(|p, q| {
        p.residual
            .total_cmp(&q.residual)
            .then(q.prominence.total_cmp(&p.prominence))
    });

    let mut used_a = vec![false; pa.len()];
    let mut used_b = vec![false; pb.len()];
    let mut matched_pairs = Vec::new();
    for c in candidates {
        if used_a[c.i] || used_b[c.j] {
            continue;
        }
        used_a[c.i] = true;
        used_b[c.j] = true;
        let (fa, fb) = (pa[c.i].frequency, pb[c.j].frequency);
        let detuning = c.sign * fa;
        let epsilon = 0.5 * ((detuning + a.omega0) + (c.sign * fb + b.omega0));
        matched_pairs.push(MatchedPair {
            scans: (0, 1),
            peak_a: fa,
            peak_b: fb,
            detuning,
            epsilon,
            residual: c.residual,
        });
    }
    matched_pairs.sort_by(|p, q| p.epsilon.total_cmp(&q.epsilon));

    let mut unmatched = Vec::new();
    for (scan, (peaks, used)) in [(&pa, &used_a), (&pb, &used_b)].into_iter().enumerate() {
        for (p, &u) in peaks.iter().zip(used) {
            if !u {
                unmatched.push(ScanPeak {
                    scan,
                    frequency: p.frequency,
                });
            }
        }
    }

    let omega0 = vec![a.omega0, b.omega0];
    let mut family_labels = Vec::new();
    for m in &matched_pairs {
        let slope = Some((m.peak_a - m.peak_b) / (a.omega0 - b.omega0));
        family_labels.push(LabeledPeak {
            scan: 0,
            frequency: m.peak_a,
            family: FamilyLabel::ShiftOmega0,
            slope,
        });
        family_labels.push(LabeledPeak {
            scan: 1,
            frequency: m.peak_b,
            family: FamilyLabel::ShiftOmega0,
            slope,
        });
    }
    // The remaining lines are sorted into the other two families.
    let rest = [unused_peaks(&pa, &used_a, a), unused_peaks(&pb, &used_b, b)];
    let other = classify_with_laws(&rest, tol, &[0, -2, 2]);
    family_labels.extend(other.labels);
    family_labels.sort_by(|p, q| p.scan.cmp(&q.scan).then(p.frequency.total_cmp(&q.frequency)));

    Ok(MatchReport {
        omega0,
        matched_pairs,
        family_labels,
        unmatched,
    })
}

fn unused_peaks(peaks: &[Peak], used: &[bool], like: &PeakSet) -> PeakSet {
    let kept = peaks.iter().zip(used).filter(|(_, u)| !**u).map(|(p, _)| *p).collect();
    PeakSet::new(kept, like.omega0, like.omega_res)
}

/// Sorts the positive-side peaks of several scans into the three slope
/// families.
///
/// Every peak seeds one trial trajectory per slope law in {−2, −1, 0, 1, 2};
/// a trial survives when each other scan has a peak within `tol` of the
/// law's prediction and the fitted slope is within [`SLOPE_TOLERANCE`] of
/// the law. Surviving trials are accepted greedily by smallest residual.
/// With three or more scans, a second pass links still-unexplained peaks
/// that are missing from a single scan. Peaks left over are `Unclassified`.
pub fn classify_families(scans: &[PeakSet], tol: f64) -> Result<Classification> {
    if scans.len() < 2 {
        return Err(Error::DegenerateConfiguration(format!(
            "family classification needs at least two scans, got {}",
            scans.len()
        )));
    }
    check_distinct_pumps(scans)?;
    Ok(classify_with_laws(scans, tol, &[-2, -1, 0, 1, 2]))
}

fn check_distinct_pumps(scans: &[PeakSet]) -> Result<()> {
    for (i, a) in scans.iter().enumerate() {
        for b in &scans[i + 1..] {
            if a.omega0 == b.omega0 {
                return Err(Error::DegenerateConfiguration(format!(
                    "two scans share omega0 = {} eV",
                    a.omega0
                )));
            }
        }
    }
    Ok(())
}

fn classify_with_laws(scans: &[PeakSet], tol: f64, laws: &[i32]) -> Classification {
    let positives: Vec<Vec<Peak>> = scans.iter().map(PeakSet::positive).collect();
    let omega0: Vec<f64> = scans.iter().map(|s| s.omega0).collect();

    // A peak may carry coincident lines of different families, but belongs
    // to at most one trajectory per family. Bit |law| marks the family.
    let mut used: Vec<Vec<u8>> = positives.iter().map(|p| vec![0; p.len()]).collect();
    let mut trajectories = Vec::new();

    // Complete trajectories first. With three or more scans a line may then
    // be missing from one scan (its amplitude can vanish at a particular
    // pump setting), provided every linked peak is still unexplained.
    let full = scans.len();
    let passes: &[usize] = if full >= 3 { &[full, full - 1] } else { &[full] };
    for &min_support in passes {
        let partial = min_support < full;
        let snapshot = used.clone();
        let eligible = |t: usize, k: usize| !partial || snapshot[t][k] == 0;
        let trials = link_trials(&positives, &omega0, tol, laws, min_support, &eligible);
        for trial in trials {
            let bit = 1u8 << trial.law.unsigned_abs();
            if trial.members.iter().any(|&(t, k)| used[t][k] & bit != 0) {
                continue;
            }
            let points: Vec<ScanPeak> = trial
                .members
                .iter()
                .map(|&(t, k)| {
                    used[t][k] |= bit;
                    ScanPeak {
                        scan: t,
                        frequency: positives[t][k].frequency,
                    }
                })
                .collect();
            let xy: Vec<(f64, f64)> = points.iter().map(|p| (omega0[p.scan], p.frequency)).collect();
            trajectories.push(Trajectory {
                law: trial.law,
                family: FamilyLabel::from_law(trial.law),
                fitted_slope: fit_slope(&xy),
                residual: trial.residual,
                points,
            });
        }
    }
    trajectories.sort_by(|p, q| p.points[0].frequency.total_cmp(&q.points[0].frequency));

    // One label per peak: the best-residual trajectory through it.
    let mut labels = Vec::new();
    let mut by_residual: Vec<&Trajectory> = trajectories.iter().collect();
    by_residual.sort_by(|p, q| p.residual.total_cmp(&q.residual));
    let mut labelled: Vec<Vec<bool>> = positives.iter().map(|p| vec![false; p.len()]).collect();
    for tr in by_residual {
        for p in &tr.points {
            let k = nearest(&positives[p.scan], p.frequency).expect("linked peak exists");
            if labelled[p.scan][k] {
                continue;
            }
            labelled[p.scan][k] = true;
            labels.push(LabeledPeak {
                scan: p.scan,
                frequency: p.frequency,
                family: tr.family,
                slope: Some(tr.fitted_slope),
            });
        }
    }
    for (t, peaks) in positives.iter().enumerate() {
        for (k, p) in peaks.iter().enumerate() {
            if used[t][k] == 0 {
                labels.push(LabeledPeak {
                    scan: t,
                    frequency: p.frequency,
                    family: FamilyLabel::Unclassified,
                    slope: None,
                });
            }
        }
    }
    labels.sort_by(|p, q| p.scan.cmp(&q.scan).then(p.frequency.total_cmp(&q.frequency)));
    Classification { trajectories, labels }
}

struct Trial {
    law: i32,
    /// (scan, peak index) of each linked point, in scan order.
    members: Vec<(usize, usize)>,
    residual: f64,
    prominence: f64,
    seed: (usize, usize),
}

/// Trial trajectories through eligible peaks with at least `min_support`
/// points, best first.
fn link_trials(
    positives: &[Vec<Peak>],
    omega0: &[f64],
    tol: f64,
    laws: &[i32],
    min_support: usize,
    eligible: &dyn Fn(usize, usize) -> bool,
) -> Vec<Trial> {
    let mut trials = Vec::new();
    for (s, seeds) in positives.iter().enumerate() {
        for (si, seed) in seeds.iter().enumerate() {
            if !eligible(s, si) {
                continue;
            }
            for &law in laws {
                let mut members = Vec::with_capacity(positives.len());
                let mut residual: f64 = 0.0;
                let mut prominence = 0.0;
                for (t, peaks) in positives.iter().enumerate() {
                    if t == s {
                        members.push((s, si));
                        prominence += seed.prominence;
                        continue;
                    }
                    let predicted = seed.frequency + law as f64 * (omega0[t] - omega0[s]);
                    if predicted <= 0.0 {
                        continue;
                    }
                    if let Some(k) = nearest(peaks, predicted) {
                        let miss = (peaks[k].frequency - predicted).abs();
                        if miss <= tol && eligible(t, k) {
                            residual = residual.max(miss);
                            prominence += peaks[k].prominence;
                            members.push((t, k));
                        }
                    }
                }
                if members.len() < min_support.max(2) {
                    continue;
                }
                let points: Vec<(f64, f64)> = members
                    .iter()
                    .map(|&(t, k)| (omega0[t], positives[t][k].frequency))
                    .collect();
                if (fit_slope(&points) - law as f64).abs() > SLOPE_TOLERANCE {
                    continue;
                }
                trials.push(Trial {
                    law,
                    members,
                    residual,
                    prominence,
                    seed: (s, si),
                });
            }
        }
    }
    trials.sort_by(|p, q| {
        q.members
            .len()
            .cmp(&p.members.len())
            .then(p.residual.total_cmp(&q.residual))
            .then(q.prominence.total_cmp(&p.prominence))
            .then(p.seed.cmp(&q.seed))
            .then(p.law.cmp(&q.law))
    });
    trials
}

/// Index of the peak closest to `f` in a frequency-sorted slice.
fn nearest(peaks: &[Peak], f: f64) -> Option<usize> {
    if peaks.is_empty() {
        return None;
    }
    let idx = peaks.partition_point(|p| p.frequency < f);
    let mut best = None;
    for k in [idx.wrapping_sub(1), idx] {
        if k < peaks.len() {
            let d = (peaks[k].frequency - f).abs();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((k, d));
            }
        }
    }
    best.map(|(k, _)| k)
}

fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuessOptions {
    /// Distance within which a predicted line counts as observed, eV.
    pub tol: f64,
    /// Largest C(peaks, n) the search may enumerate.
    pub cap: u128,
    /// Number of ranked candidates returned.
    pub top: usize,
}

impl GuessOptions {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            cap: DEFAULT_GUESS_CAP,
            top: 10,
        }
    }
}

/// Candidate detuning set ranked by [`educated_guess`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuessCandidate {
    pub deltas: Vec<f64>,
    /// Fraction of predicted positive lines found among the observed peaks.
    pub score: f64,
    /// Fraction of observed positive peaks explained by the prediction.
    pub explained: f64,
}

/// Number of n-subsets of `k` items, saturating.
pub fn binomial(k: usize, n: usize) -> u128 {
    if n > k {
        return 0;
    }
    let n = n.min(k - n);
    let mut acc: u128 = 1;
    for i in 0..n {
        acc = acc.saturating_mul((k - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Brute-force baseline: tries every n-subset of the positive peaks as the
/// detuning magnitudes, with every relative sign pattern, and scores how
/// many of the implied lines are observed.
///
/// Fails with [`Error::BudgetExceeded`] when C(peaks, n) exceeds the cap.
pub fn educated_guess(p: &PeakSet, n: usize, opts: &GuessOptions) -> Result<Vec<GuessCandidate>> {
    let observed: Vec<f64> = p.positive().iter().map(|q| q.frequency).collect();
    if n > observed.len() {
        return Err(Error::Domain(format!(
            "cannot pick {n} detunings from {} positive peaks",
            observed.len()
        )));
    }
    let subsets = binomial(observed.len(), n);
    if subsets > opts.cap {
        return Err(Error::BudgetExceeded {
            peaks: observed.len(),
            n,
            subsets,
            cap: opts.cap,
        });
    }
    if n == 0 {
        // Only the DC line is predicted, and it is always present.
        return Ok(vec![GuessCandidate {
            deltas: Vec::new(),
            score: 1.0,
            explained: if observed.is_empty() { 1.0 } else { 0.0 },
        }]);
    }

    let combos = combinations(observed.len(), n);
    let mut ranked: Vec<GuessCandidate> = combos
        .par_iter()
        .filter_map(|combo| {
            let mut best: Option<GuessCandidate> = None;
            // The first sign is fixed: flipping every sign predicts the same lines.
            for pattern in 0..(1u64 << (n - 1)) {
                let deltas: Vec<f64> = combo
                    .iter()
                    .enumerate()
                    .map(|(pos, &idx)| {
                        let negative = pos > 0 && (pattern >> (pos - 1)) & 1 == 1;
                        if negative {
                            -observed[idx]
                        } else {
                            observed[idx]
                        }
                    })
                    .collect();
                let Some(candidate) = score_candidate(deltas, &observed, opts.tol) else {
                    continue;
                };
                if best.as_ref().is_none_or(|b| rank(&candidate, b) == Ordering::Less) {
                    best = Some(candidate);
                }
            }
            best
        })
        .collect();
    ranked.sort_by(rank);
    ranked.truncate(opts.top.max(1));
    Ok(ranked)
}

fn rank(a: &GuessCandidate, b: &GuessCandidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(b.explained.total_cmp(&a.explained))
        .then_with(|| {
            a.deltas
                .iter()
                .zip(&b.deltas)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

fn score_candidate(deltas: Vec<f64>, observed: &[f64], tol: f64) -> Option<GuessCandidate> {
    let set = DetuningSet::with_unit_dipoles(deltas.clone()).ok()?;
    let predicted: Vec<f64> = distinct_nonzero(&predicted_frequencies(&set), 1e-12)
        .into_iter()
        .filter(|f| *f > 0.0)
        .collect();
    let hit = |f: f64, pool: &[f64]| pool.iter().any(|g| (f - g).abs() <= tol);
    let matched = predicted.iter().filter(|&&f| hit(f, observed)).count();
    let explained = observed.iter().filter(|&&f| hit(f, &predicted)).count();
    Some(GuessCandidate {
        deltas,
        score: matched as f64 / predicted.len() as f64,
        explained: if observed.is_empty() {
            1.0
        } else {
            explained as f64 / observed.len() as f64
        },
    })
}

fn combinations(k: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        out.push(idx.clone());
        let mut i = n;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + k - n {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveredEnergy {
    pub epsilon: f64,
    pub uncertainty: f64,
    /// Scans in which the ±Δ_j line was found.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extraction {
    pub energies: Vec<RecoveredEnergy>,
    pub report: MatchReport,
    pub trajectories: Vec<Trajectory>,
    pub diagnostics: Vec<String>,
}

/// Intermediate-state energies from peak sets measured at distinct pump
/// settings.
///
/// Two scans go through [`pair_match`]; three or more through
/// [`classify_families`], keeping the ±Δ_j trajectories. The uncertainty of
/// each energy is max(residual, ω_res/2).
pub fn extract_energies(scans: &[PeakSet], tol: f64) -> Result<Extraction> {
    if scans.len() < 2 {
        return Err(Error::DegenerateConfiguration(format!(
            "energy extraction needs at least two pump settings, got {}",
            scans.len()
        )));
    }
    check_distinct_pumps(scans)?;
    let omega_res = scans.iter().map(|s| s.omega_res).fold(0.0, f64::max);
    let omega0: Vec<f64> = scans.iter().map(|s| s.omega0).collect();
    let mut diagnostics = Vec::new();

    let (mut energies, report, trajectories) = if scans.len() == 2 {
        let report = pair_match(&scans[0], &scans[1], tol)?;
        let energies = report
            .matched_pairs
            .iter()
            .map(|m| RecoveredEnergy {
                epsilon: m.epsilon,
                uncertainty: m.residual.max(omega_res / 2.0),
                support: 2,
            })
            .collect();
        (energies, report, Vec::new())
    } else {
        let class = classify_families(scans, tol)?;
        let mut energies = Vec::new();
        let mut matched_pairs = Vec::new();
        for tr in class.trajectories.iter().filter(|t| t.law.abs() == 1) {
            let eps = tr.energies(&omega0);
            let mean = eps.iter().sum::<f64>() / eps.len() as f64;
            let spread = eps.iter().map(|e| (e - mean).abs()).fold(0.0, f64::max);
            energies.push(RecoveredEnergy {
                epsilon: mean,
                uncertainty: tr.residual.max(spread).max(omega_res / 2.0),
                support: tr.points.len(),
            });
            let (first, second) = (tr.points[0], tr.points[1]);
            let sign = -(tr.law as f64);
            matched_pairs.push(MatchedPair {
                scans: (first.scan, second.scan),
                peak_a: first.frequency,
                peak_b: second.frequency,
                detuning: sign * first.frequency,
                epsilon: mean,
                residual: tr.residual,
            });
        }
        let unmatched = class
            .labels
            .iter()
            .filter(|l| l.family != FamilyLabel::ShiftOmega0)
            .map(|l| ScanPeak {
                scan: l.scan,
                frequency: l.frequency,
            })
            .collect();
        let report = MatchReport {
            omega0: omega0.clone(),
            matched_pairs,
            family_labels: class.labels,
            unmatched,
        };
        (energies, report, class.trajectories)
    };

    // Every true state also shows its self-sum line at |2Δ_j|, whose
    // amplitude A_j²/2 cannot cancel. Chance alignments rarely have one.
    let needed = scans.len().div_ceil(2);
    energies.retain(|e| {
        let seen = self_sum_support(scans, e.epsilon, tol);
        if seen < needed {
            diagnostics.push(format!(
                "rejected epsilon = {:.5} eV: self-sum line seen in {seen} of {} scans",
                e.epsilon,
                scans.len()
            ));
        }
        seen >= needed
    });
    energies.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
    let before = energies.len();
    energies.dedup_by(|b, a| {
        if (a.epsilon - b.epsilon).abs() <= tol {
            a.uncertainty = a.uncertainty.max(b.uncertainty).max((a.epsilon - b.epsilon).abs());
            true
        } else {
            false
        }
    });
    if energies.len() < before {
        diagnostics.push(format!("merged {} duplicate energies", before - energies.len()));
    }
    if energies.is_empty() {
        let peaks: usize = scans.iter().map(|s| s.positive().len()).sum();
        diagnostics.push(format!(
            "no ±Δ_j lines found across {} scans ({peaks} positive peaks)",
            scans.len()
        ));
    }
    Ok(Extraction {
        energies,
        report,
        trajectories,
        diagnostics,
    })
}

/// Number of scans with a peak at |2(ε − ω_0)|.
fn self_sum_support(scans: &[PeakSet], epsilon: f64, tol: f64) -> usize {
    scans
        .iter()
        .filter(|s| {
            let target = (2.0 * (epsilon - s.omega0)).abs();
            s.peaks.iter().any(|p| (p.frequency - target).abs() <= tol)
        })
        .count()
}
