//! Spectrum analysis: antiresonance location, phase-jump classification,
//! coupling-regime classification, the antiresonance-excursion metric, the
//! coupling-suppression search, and the avoided-crossing coupling fit.
//!
//! The quantitative heart of the module is a dip tracker. A transmission
//! antiresonance (destructive-interference dip) moves with the static field
//! when a magnon mode couples to the cavity modes; how far it moves, and the
//! topology of the dip branches near the magnon crossing, decide whether the
//! effective coupling is attractive, repulsive, or negligible.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{AnalysisError, NumericsError};
use crate::model::{magnon_decay, magnon_frequency, wrap_phase, FieldPoint, SystemModel};
use crate::numerics::ScatteringKernel;
use crate::sweep::{linspace, run_sweep, unwrap_phase, Grid, SElem, SpectrumMap};

// ---------------------------------------------------------------------------
// Dip detection
// ---------------------------------------------------------------------------

/// One transmission dip: refined frequency plus the interference-zero depth
/// proxy ("axis distance", the distance from the fitted power parabola's
/// vertex to the zero-power axis). `None` when the three-point fit is not
/// convex upward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dip {
    pub f_ghz: f64,
    pub axis_distance_ghz: Option<f64>,
}

/// Detect transmission dips on one fixed-field row and estimate how close
/// each comes to a true transmission zero.
///
/// A dip is an interior local minimum of the dB magnitude with at least
/// `prominence_db` of rise on both sides (walking to the nearest flanking
/// peaks). A parabola through the three linear-power samples around the
/// minimum gives the refined frequency and, when convex, the axis distance
/// `sqrt(v/a)` (`v` = vertex power, `a` = curvature): near-zero values mean
/// the dip is a genuine interference zero rather than a shallow ripple.
pub fn dips_with_axis_distance(
    f_ghz: &[f64],
    s21: &[Complex64],
    prominence_db: f64,
) -> Vec<Dip> {
    let n = f_ghz.len();
    debug_assert_eq!(n, s21.len());
    let mag2: Vec<f64> = s21.iter().map(|z| z.norm_sqr()).collect();
    let mag_db: Vec<f64> = mag2.iter().map(|m| 10.0 * m.log10()).collect();
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    for i in 1..n - 1 {
        if !(mag_db[i] <= mag_db[i - 1] && mag_db[i] < mag_db[i + 1]) {
            continue;
        }
        let mut j = i;
        while j > 0 && mag_db[j - 1] >= mag_db[j] {
            j -= 1;
        }
        let mut k = i;
        while k < n - 1 && mag_db[k + 1] >= mag_db[k] {
            k += 1;
        }
        let prom = mag_db[j].min(mag_db[k]) - mag_db[i];
        if prom < prominence_db {
            continue;
        }
        // Parabola a x^2 + b x + c through the three linear-power samples,
        // with x relative to the center sample (so c = center power).
        let x0 = f_ghz[i - 1] - f_ghz[i];
        let x2 = f_ghz[i + 1] - f_ghz[i];
        let y0 = mag2[i - 1] - mag2[i];
        let y2 = mag2[i + 1] - mag2[i];
        let det = x0 * x2 * (x0 - x2);
        let a = (y0 * x2 - y2 * x0) / det;
        let b = (y2 * x0 * x0 - y0 * x2 * x2) / det;
        let c = mag2[i];
        if a <= 0.0 {
            out.push(Dip {
                f_ghz: f_ghz[i],
                axis_distance_ghz: None,
            });
        } else {
            let f0 = f_ghz[i] - b / (2.0 * a);
            let v = (c - b * b / (4.0 * a)).max(0.0);
            out.push(Dip {
                f_ghz: f0,
                axis_distance_ghz: Some((v / a).sqrt()),
            });
        }
    }
    out
}

/// The dip closest to a transmission zero (smallest axis distance; dips
/// without a convex fit rank last). `None` when the set is empty.
fn sharpest_dip(dips: &[Dip]) -> Option<Dip> {
    let mut best: Option<(f64, Dip)> = None;
    for d in dips {
        let key = d.axis_distance_ghz.unwrap_or(1e9);
        match best {
            Some((bk, _)) if key >= bk => {}
            _ => best = Some((key, *d)),
        }
    }
    best.map(|(_, d)| d)
}

/// Locate antiresonances in a magnitude trace: interior local minima of the
/// dB magnitude inside `window` with at least `prominence_db` of rise toward
/// the nearest flanking peaks, refined by parabolic interpolation on the dB
/// values. Returns frequencies sorted ascending.
pub fn find_antiresonances(
    f_ghz: &[f64],
    s21_mag: &[f64],
    window: (f64, f64),
    prominence_db: f64,
) -> Result<Vec<f64>, AnalysisError> {
    let (lo, hi) = window;
    if f_ghz.is_empty() || lo >= hi || lo < f_ghz[0] || hi > *f_ghz.last().unwrap() {
        return Err(AnalysisError::WindowOutsideTrace { lo, hi });
    }
    let start = f_ghz.partition_point(|&f| f < lo);
    let end = f_ghz.partition_point(|&f| f <= hi);
    let f = &f_ghz[start..end];
    let mag_db: Vec<f64> = s21_mag[start..end]
        .iter()
        .map(|m| 20.0 * m.log10())
        .collect();
    let n = f.len();
    let mut out = Vec::new();
    if n < 3 {
        return Ok(out);
    }
    for i in 1..n - 1 {
        if !(mag_db[i] <= mag_db[i - 1] && mag_db[i] < mag_db[i + 1]) {
            continue;
        }
        let mut j = i;
        while j > 0 && mag_db[j - 1] >= mag_db[j] {
            j -= 1;
        }
        let mut k = i;
        while k < n - 1 && mag_db[k + 1] >= mag_db[k] {
            k += 1;
        }
        let prom = mag_db[j].min(mag_db[k]) - mag_db[i];
        if prom < prominence_db {
            continue;
        }
        // Vertex of the parabola through the three dB samples.
        let (x0, x1, x2) = (f[i - 1], f[i], f[i + 1]);
        let (y0, y1, y2) = (mag_db[i - 1], mag_db[i], mag_db[i + 1]);
        let num = (x1 - x0).powi(2) * (y1 - y2) - (x1 - x2).powi(2) * (y1 - y0);
        let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
        let refined = if den.abs() > 1e-300 && y0.is_finite() && y1.is_finite() && y2.is_finite()
        {
            x1 - 0.5 * num / den
        } else {
            x1
        };
        out.push(refined);
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(out)
}

// ---------------------------------------------------------------------------
// Phase-jump classification
// ---------------------------------------------------------------------------

/// Direction of a pi-scale transmission-phase transition, as read on the
/// wrapped (-pi, pi] phase trace: `Left` when the visible step goes up
/// (0 toward pi), `Right` when it goes down (pi toward 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JumpDirection {
    Left,
    Right,
}

/// One classified phase jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseJump {
    /// Location of the steepest phase step near the feature (GHz).
    pub f_ghz: f64,
    pub direction: JumpDirection,
    /// Net plateau-to-plateau step magnitude, in (pi/2, pi].
    pub magnitude_rad: f64,
}

/// Classify the pi-scale phase transition at a spectral feature.
///
/// Compares median phase plateaus on either side of `f0` (offsets between
/// `radius/4` and `radius`), reduces each plateau to its wrapped (-pi, pi]
/// representative, and reads the step between them exactly as it appears on
/// a wrapped phase plot: the plain difference of the two representatives.
/// A transition that carries the phase across the +-pi cut therefore steps
/// opposite to one that passes through zero — the distinction that separates
/// the two families of resonance features in a multi-mode trace. The step is
/// accepted as a jump when its folded magnitude exceeds pi/2. The result is
/// invariant under global 2 pi re-wrapping of the trace (and under constant
/// offsets that leave both plateaus on the same side of the +-pi cut).
pub fn classify_phase_jump(
    f_ghz: &[f64],
    phi_rad: &[f64],
    f0: f64,
    radius_ghz: f64,
) -> Result<PhaseJump, AnalysisError> {
    let r = radius_ghz;
    let left: Vec<f64> = plateau(f_ghz, phi_rad, f0 - r, f0 - r / 4.0);
    let right: Vec<f64> = plateau(f_ghz, phi_rad, f0 + r / 4.0, f0 + r);
    if left.is_empty() || right.is_empty() {
        return Err(AnalysisError::WindowOutsideTrace {
            lo: f0 - r,
            hi: f0 + r,
        });
    }
    let m_left = wrap_phase(median(left));
    let m_right = wrap_phase(median(right));
    // The step as drawn on the wrapped plot, in (-2 pi, 2 pi): its sign keeps
    // the cut-crossing information that a mod-2-pi reduction would erase.
    let visible = m_right - m_left;
    let magnitude = wrap_phase(visible).abs();
    if magnitude <= PI / 2.0 {
        return Err(AnalysisError::NoPhaseJump { f0, radius: r });
    }
    // Steepest single-step location inside the full radius.
    let mut f_jump = f0;
    let mut steepest = -1.0;
    for i in 1..f_ghz.len() {
        let mid = 0.5 * (f_ghz[i - 1] + f_ghz[i]);
        if mid < f0 - r || mid > f0 + r {
            continue;
        }
        let step = (phi_rad[i] - phi_rad[i - 1]).abs();
        if step > steepest {
            steepest = step;
            f_jump = mid;
        }
    }
    Ok(PhaseJump {
        f_ghz: f_jump,
        direction: if visible > 0.0 {
            JumpDirection::Left
        } else {
            JumpDirection::Right
        },
        magnitude_rad: magnitude,
    })
}

fn plateau(f: &[f64], phi: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    f.iter()
        .zip(phi)
        .filter(|(&fi, &p)| fi >= lo && fi <= hi && p.is_finite())
        .map(|(_, &p)| p)
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// ---------------------------------------------------------------------------
// Antiresonance tracking across field
// ---------------------------------------------------------------------------

/// Rectangular analysis window: the frequency span bracketing the
/// antiresonance and the field span bracketing the magnon crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeWindows {
    pub f_lo_ghz: f64,
    pub f_hi_ghz: f64,
    pub nf: usize,
    pub h_lo_t: f64,
    pub h_hi_t: f64,
    pub nh: usize,
}

impl Default for RegimeWindows {
    /// The antiresonance window around 11.5 GHz and the field window whose
    /// magnon-crossing sits at 0.4 T, at 2 MHz / 0.5 mT resolution.
    fn default() -> Self {
        Self {
            f_lo_ghz: 10.6,
            f_hi_ghz: 12.4,
            nf: 901,
            h_lo_t: 0.36,
            h_hi_t: 0.44,
            nh: 161,
        }
    }
}

impl RegimeWindows {
    pub fn grid(&self) -> Result<Grid, AnalysisError> {
        Ok(Grid::uniform(
            self.f_lo_ghz,
            self.f_hi_ghz,
            self.nf,
            self.h_lo_t,
            self.h_hi_t,
            self.nh,
        )?)
    }

    pub fn f_step(&self) -> f64 {
        (self.f_hi_ghz - self.f_lo_ghz) / (self.nf.max(2) - 1) as f64
    }
}

/// Tunable constants of the dip tracker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingOptions {
    /// Minimum dip prominence (dB).
    pub prominence_db: f64,
    /// Field-to-field continuity capture radius (GHz).
    pub capture_ghz: f64,
    /// Half-width of the excluded hybridization zone around the magnon
    /// crossing (GHz): samples whose magnon frequency is this close to the
    /// unperturbed antiresonance are skipped by the tracker.
    pub exclusion_ghz: f64,
    /// Axis-distance qualification gate floor (GHz): a tracked sample
    /// contributes to the excursion only if its axis distance is below
    /// max(gate floor, twice the chain's sharpest axis distance).
    pub gate_floor_ghz: f64,
    /// Maximum tolerated fraction of lost (untrackable) field samples.
    pub loss_limit: f64,
}

impl Default for TrackingOptions {
    fn default() -> Self {
        Self {
            prominence_db: 3.0,
            capture_ghz: 0.35,
            exclusion_ghz: 0.35,
            gate_floor_ghz: 0.060,
            loss_limit: 0.20,
        }
    }
}

/// One tracked dip sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchSample {
    pub h_index: usize,
    pub f_ghz: f64,
    pub axis_distance_ghz: Option<f64>,
}

/// Everything the tracker extracts from one map. Internal currency of
/// [`antiresonance_excursion`], [`classify_regime`], and the suppression
/// search.
#[derive(Debug, Clone)]
pub struct Tracking {
    /// Unperturbed (zero-coupling) antiresonance frequency.
    pub far0_ghz: f64,
    /// Uncoupled-excursion threshold: max(2 k_m, 2 frequency steps), GHz.
    pub tau_ghz: f64,
    /// Excursion of the qualified antiresonance samples (GHz); `None` when
    /// no sample qualifies.
    pub excursion_ghz: Option<f64>,
    /// Fraction of non-excluded field samples where the chain lost the dip.
    pub lost_fraction: f64,
    /// Dip chains walked inward from the low-field and high-field edges.
    pub chains: [Vec<BranchSample>; 2],
    /// Dip count per field sample (full sets, exclusion ignored).
    pub dip_counts: Vec<usize>,
    /// An interior single-dip run is bracketed by multi-dip samples
    /// (branches coalesce and re-split: the attraction signature).
    pub merge: bool,
    /// Multi-dip branches stay clear of the unperturbed antiresonance on
    /// both sides by more than tau (persistent gap: repulsion signature).
    pub straddle: bool,
    /// Signed dispersive pull of the sharpest chain edge (GHz): positive
    /// means the antiresonance is pushed away from the approaching magnon.
    pub pull_ghz: f64,
}

fn field_axis_magnon_ghz(model: &SystemModel, h: f64) -> Vec<f64> {
    model
        .magnons
        .iter()
        .map(|m| magnon_frequency(m, FieldPoint { mu0_h_t: h }))
        .collect()
}

/// Track the antiresonance dip across the field window.
fn track(
    model: &SystemModel,
    windows: &RegimeWindows,
    opts: &TrackingOptions,
) -> Result<Tracking, AnalysisError> {
    model.validate()?;
    let grid = windows.grid()?;
    let map = run_sweep(model, &grid)?;
    let f_axis = grid.f_axis().to_vec();
    let nh = grid.nh();

    let dipsets: Vec<Vec<Dip>> = (0..nh)
        .map(|k| {
            let row: Vec<Complex64> = map
                .row(k)
                .iter()
                .map(|s| s[SElem::S21.index()])
                .collect();
            dips_with_axis_distance(&f_axis, &row, opts.prominence_db)
        })
        .collect();

    // Unperturbed reference: the sharpest dip of the zero-coupling model at
    // the low-field edge.
    let bare = model.with_zero_couplings();
    let kernel = ScatteringKernel::new(&bare, FieldPoint { mu0_h_t: grid.h_axis()[0] })
        .map_err(numerics_to_analysis)?;
    let bare_row: Vec<Complex64> = f_axis
        .iter()
        .map(|&f| match kernel.evaluate(f) {
            Ok(s) => s[SElem::S21.index()],
            Err(_) => Complex64::new(f64::NAN, f64::NAN),
        })
        .collect();
    let bare_dips = dips_with_axis_distance(&f_axis, &bare_row, opts.prominence_db);
    let far0 = sharpest_dip(&bare_dips)
        .ok_or(AnalysisError::NoAntiresonance {
            lo: windows.f_lo_ghz,
            hi: windows.f_hi_ghz,
        })?
        .f_ghz;

    // Uncoupled threshold: twice the magnon linewidth or twice the grid
    // step, whichever is coarser.
    let h_mid = 0.5 * (windows.h_lo_t + windows.h_hi_t);
    let km_ghz = model
        .magnons
        .iter()
        .map(|m| {
            let fm = magnon_frequency(m, FieldPoint { mu0_h_t: h_mid });
            magnon_decay(m, fm) * 1e-3
        })
        .fold(0.0, f64::max);
    let tau = (2.0 * km_ghz).max(2.0 * windows.f_step());

    // Hybridization-zone exclusion: skip field samples whose magnon line is
    // within the exclusion radius of the unperturbed antiresonance.
    let excluded: Vec<bool> = grid
        .h_axis()
        .iter()
        .map(|&h| {
            field_axis_magnon_ghz(model, h)
                .iter()
                .any(|fm| (fm - far0).abs() < opts.exclusion_ghz)
        })
        .collect();

    // Continuity chains walked inward from each field edge: seeded at the
    // dip nearest the unperturbed antiresonance, then nearest-to-previous
    // within the capture radius.
    let chain = |indices: Vec<usize>| -> (Vec<BranchSample>, usize) {
        let mut prev: Option<f64> = None;
        let mut out = Vec::new();
        let mut lost = 0usize;
        for k in indices {
            if excluded[k] {
                continue;
            }
            if dipsets[k].is_empty() {
                lost += 1;
                continue;
            }
            let cand = match prev {
                None => dipsets[k]
                    .iter()
                    .min_by(|a, b| {
                        (a.f_ghz - far0)
                            .abs()
                            .partial_cmp(&(b.f_ghz - far0).abs())
                            .unwrap()
                    })
                    .copied(),
                Some(p) => {
                    let near: Vec<Dip> = dipsets[k]
                        .iter()
                        .filter(|d| (d.f_ghz - p).abs() <= opts.capture_ghz)
                        .copied()
                        .collect();
                    if near.is_empty() {
                        lost += 1;
                        continue;
                    }
                    near.iter()
                        .min_by(|a, b| {
                            (a.f_ghz - p)
                                .abs()
                                .partial_cmp(&(b.f_ghz - p).abs())
                                .unwrap()
                        })
                        .copied()
                }
            };
            if let Some(c) = cand {
                out.push(BranchSample {
                    h_index: k,
                    f_ghz: c.f_ghz,
                    axis_distance_ghz: c.axis_distance_ghz,
                });
                prev = Some(c.f_ghz);
            }
        }
        (out, lost)
    };
    let (chain_lo, lost_lo) = chain((0..nh).collect());
    let (chain_hi, lost_hi) = chain((0..nh).rev().collect());
    let n_ok = excluded.iter().filter(|&&e| !e).count();
    let lost_fraction = (lost_lo + lost_hi) as f64 / (2 * n_ok).max(1) as f64;

    // Per-chain qualified excursion: only samples whose axis distance says
    // "this really is the interference zero" count, gated at
    // max(floor, 2 * sharpest distance in the chain); the excursion is the
    // largest drift from the chain's first qualified sample.
    let qexc = |ch: &[BranchSample]| -> Option<f64> {
        let min_d = ch
            .iter()
            .filter_map(|s| s.axis_distance_ghz)
            .fold(f64::INFINITY, f64::min);
        if !min_d.is_finite() {
            return None;
        }
        let gate = opts.gate_floor_ghz.max(2.0 * min_d);
        let qualified: Vec<f64> = ch
            .iter()
            .filter(|s| s.axis_distance_ghz.is_some_and(|d| d <= gate))
            .map(|s| s.f_ghz)
            .collect();
        let reference = *qualified.first()?;
        qualified
            .iter()
            .map(|f| (f - reference).abs())
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
    };
    let excursion_ghz = [qexc(&chain_lo), qexc(&chain_hi)]
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a: f64| a.max(v))));

    // Branch topology on the full dip sets.
    let dip_counts: Vec<usize> = dipsets.iter().map(Vec::len).collect();
    let mut merge = false;
    let mut i = 0;
    while i < dip_counts.len() {
        if dip_counts[i] == 1 {
            let mut j = i;
            while j + 1 < dip_counts.len() && dip_counts[j + 1] == 1 {
                j += 1;
            }
            if dip_counts[..i].iter().any(|&c| c >= 2)
                && dip_counts[j + 1..].iter().any(|&c| c >= 2)
            {
                merge = true;
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    let mut up_min = f64::INFINITY;
    let mut lo_max = f64::NEG_INFINITY;
    let mut any_multi = false;
    for set in &dipsets {
        if set.len() >= 2 {
            any_multi = true;
            let mut fs: Vec<f64> = set.iter().map(|d| d.f_ghz).collect();
            fs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let hi = *fs.last().unwrap();
            let lo = fs[0];
            if hi > far0 {
                up_min = up_min.min(hi);
            }
            if lo < far0 {
                lo_max = lo_max.max(lo);
            }
        }
    }
    let straddle = any_multi && (up_min - far0 > tau) && (far0 - lo_max > tau);

    // Dispersive pull at the sharper chain edge: sign-corrected so that
    // positive = pushed away from the approaching magnon line.
    let mut pull = 0.0;
    let mut best_d = f64::INFINITY;
    for (ch, sign) in [(&chain_lo, 1.0), (&chain_hi, -1.0)] {
        if let Some(first) = ch.first() {
            if let Some(d) = first.axis_distance_ghz {
                if d < best_d {
                    best_d = d;
                    pull = (first.f_ghz - far0) * sign;
                }
            }
        }
    }

    Ok(Tracking {
        far0_ghz: far0,
        tau_ghz: tau,
        excursion_ghz,
        lost_fraction,
        chains: [chain_lo, chain_hi],
        dip_counts,
        merge,
        straddle,
        pull_ghz: pull,
    })
}

fn numerics_to_analysis(err: NumericsError) -> AnalysisError {
    AnalysisError::Sweep(crate::error::SweepError::InvalidModel(err.to_string()))
}

/// Excursion of the antiresonance across the field window, in MHz, plus the
/// tracked branch data.
#[derive(Debug, Clone)]
pub struct ExcursionReport {
    pub excursion_mhz: f64,
    pub f_ar_ghz: f64,
    pub tau_mhz: f64,
    pub lost_fraction: f64,
    pub chains: [Vec<BranchSample>; 2],
    pub dip_counts: Vec<usize>,
}

/// Track the antiresonance dip across the field window and measure its
/// largest qualified drift from the window edge.
pub fn antiresonance_excursion(
    model: &SystemModel,
    windows: &RegimeWindows,
    opts: &TrackingOptions,
) -> Result<ExcursionReport, AnalysisError> {
    let t = track(model, windows, opts)?;
    if t.lost_fraction > opts.loss_limit {
        return Err(AnalysisError::TrackingFailure {
            lost_percent: t.lost_fraction * 100.0,
            limit_percent: opts.loss_limit * 100.0,
        });
    }
    let exc = t.excursion_ghz.ok_or(AnalysisError::NoTrackableSamples)?;
    Ok(ExcursionReport {
        excursion_mhz: exc * 1e3,
        f_ar_ghz: t.far0_ghz,
        tau_mhz: t.tau_ghz * 1e3,
        lost_fraction: t.lost_fraction,
        chains: t.chains,
        dip_counts: t.dip_counts,
    })
}

// ---------------------------------------------------------------------------
// Regime classification
// ---------------------------------------------------------------------------

/// How a cavity mode's phase jump relates to the antiresonance's: a mode
/// whose transmission-phase step has the same sign as the antiresonance's
/// contributes an attractive effective coupling; opposite sign, repulsive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModeTag {
    #[serde(rename = "AttractiveToAR")]
    AttractiveToAr,
    #[serde(rename = "RepulsiveToAR")]
    RepulsiveToAr,
}

/// Overall effective-coupling regime at the antiresonance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Attraction,
    Repulsion,
    Uncoupled,
}

/// Classification of one model at one analysis window.
#[derive(Debug, Clone, Serialize)]
pub struct RegimeReport {
    #[serde(rename = "f_ar_GHz")]
    pub f_ar_ghz: f64,
    #[serde(rename = "excursion_MHz")]
    pub excursion_mhz: f64,
    pub per_mode_tags: Vec<ModeTag>,
    pub overall: Regime,
}

/// Phase-jump directions of every cavity mode and of the antiresonance,
/// measured on the magnon-stripped model over the full mode span.
fn mode_and_ar_jumps(
    model: &SystemModel,
    f_ar_ghz: f64,
) -> Result<(Vec<JumpDirection>, JumpDirection), AnalysisError> {
    let stripped = model.without_magnons();
    let f_min = stripped
        .cavity_modes
        .iter()
        .map(|m| m.f_ghz)
        .fold(f64::INFINITY, f64::min);
    let f_max = stripped
        .cavity_modes
        .iter()
        .map(|m| m.f_ghz)
        .fold(f64::NEG_INFINITY, f64::max);
    let lo = (f_min - 0.5).min(f_ar_ghz - 0.5);
    let hi = (f_max + 0.5).max(f_ar_ghz + 0.5);
    let n = ((hi - lo) / 0.001).round() as usize + 1;
    let f_axis = linspace(lo, hi, n);
    let kernel = ScatteringKernel::new(&stripped, FieldPoint { mu0_h_t: 0.0 })
        .map_err(numerics_to_analysis)?;
    let phases: Vec<f64> = f_axis
        .iter()
        .map(|&f| match kernel.evaluate(f) {
            Ok(s) => s[SElem::S21.index()].arg(),
            Err(_) => f64::NAN,
        })
        .collect();
    let phi = unwrap_phase(&phases)?;
    let mut dirs = Vec::with_capacity(stripped.cavity_modes.len());
    for mode in &stripped.cavity_modes {
        dirs.push(classify_phase_jump(&f_axis, &phi, mode.f_ghz, 0.3)?.direction);
    }
    let ar = classify_phase_jump(&f_axis, &phi, f_ar_ghz, 0.3)?.direction;
    Ok((dirs, ar))
}

/// Classify the effective coupling regime of a model at the antiresonance.
///
/// The overall label comes from the tracked dip topology:
/// excursion below the tau threshold means no meaningful coupling
/// (`Uncoupled`); branches that coalesce into a single dip and re-split mean
/// `Attraction`; branches holding a persistent gap on both sides of the
/// unperturbed antiresonance mean `Repulsion`; otherwise the sign of the
/// dispersive edge pull decides, with a dead-band of tau/4 around zero.
pub fn classify_regime(
    model: &SystemModel,
    windows: &RegimeWindows,
    opts: &TrackingOptions,
) -> Result<RegimeReport, AnalysisError> {
    let t = track(model, windows, opts)?;
    if t.lost_fraction > opts.loss_limit {
        return Err(AnalysisError::TrackingFailure {
            lost_percent: t.lost_fraction * 100.0,
            limit_percent: opts.loss_limit * 100.0,
        });
    }
    let exc = t.excursion_ghz.ok_or(AnalysisError::NoTrackableSamples)?;
    let overall = if exc < t.tau_ghz {
        Regime::Uncoupled
    } else if t.merge {
        Regime::Attraction
    } else if t.straddle {
        Regime::Repulsion
    } else if t.pull_ghz.abs() < t.tau_ghz / 4.0 {
        Regime::Uncoupled
    } else if t.pull_ghz > 0.0 {
        Regime::Repulsion
    } else {
        Regime::Attraction
    };
    let (dirs, ar_dir) = mode_and_ar_jumps(model, t.far0_ghz)?;
    let per_mode_tags = dirs
        .into_iter()
        .map(|d| {
            if d == ar_dir {
                ModeTag::AttractiveToAr
            } else {
                ModeTag::RepulsiveToAr
            }
        })
        .collect();
    Ok(RegimeReport {
        f_ar_ghz: t.far0_ghz,
        excursion_mhz: exc * 1e3,
        per_mode_tags,
        overall,
    })
}

// ---------------------------------------------------------------------------
// Suppression-ratio search
// ---------------------------------------------------------------------------

/// Options of the coupling-suppression search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuppressionOptions {
    /// Analysis window; wider in field than the classifier windows so the
    /// excursion is measured far from the crossing, where it is linear in
    /// the couplings.
    pub windows: RegimeWindows,
    /// Hybridization-zone exclusion radius (GHz). Much wider than the
    /// classifier's: the search needs the far-field dispersive drift only,
    /// and the second-order bend near the crossing would bias the argmin.
    pub exclusion_ghz: f64,
    /// Common normalization amplitude (MHz) applied to the reference mode;
    /// the varied mode gets `ratio` times this. Small enough that the
    /// excursion stays in its linear-response regime.
    pub base_amplitude_mhz: f64,
    /// Ratio bracket searched (dimensionless).
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    /// Log-spaced coarse scan size used to bracket the minimum and to list
    /// local minima.
    pub prescan_points: usize,
    /// Golden-section termination tolerance on the log-ratio.
    pub log_tol: f64,
    pub prominence_db: f64,
    pub capture_ghz: f64,
    pub gate_floor_ghz: f64,
}

impl Default for SuppressionOptions {
    fn default() -> Self {
        Self {
            windows: RegimeWindows {
                f_lo_ghz: 10.6,
                f_hi_ghz: 12.4,
                nf: 901,
                h_lo_t: 0.34,
                h_hi_t: 0.46,
                nh: 241,
            },
            exclusion_ghz: 1.0,
            base_amplitude_mhz: 25.0,
            ratio_lo: 0.01,
            ratio_hi: 20.0,
            prescan_points: 49,
            log_tol: 1e-3,
            prominence_db: 3.0,
            capture_ghz: 0.35,
            gate_floor_ghz: 0.060,
        }
    }
}

/// Result of one suppression search.
#[derive(Debug, Clone, Serialize)]
pub struct SuppressionResult {
    /// Argmin of the excursion over the coupling ratio g_varied / g_reference.
    pub ratio: f64,
    /// Excursion at the argmin (MHz).
    pub residual: f64,
    /// All local minima seen by the coarse scan (ratios); more than one
    /// entry means the excursion was not unimodal over the bracket.
    pub local_minima: Vec<f64>,
}

fn suppression_tracking_options(opts: &SuppressionOptions) -> TrackingOptions {
    TrackingOptions {
        prominence_db: opts.prominence_db,
        capture_ghz: opts.capture_ghz,
        exclusion_ghz: opts.exclusion_ghz,
        gate_floor_ghz: opts.gate_floor_ghz,
        loss_limit: 1.0,
    }
}

/// The template with the (varied, reference) pair normalized to the search's
/// base amplitude and every other coupling zeroed. Normalizing makes the
/// returned ratio exactly invariant under rescaling the template's coupling
/// magnitudes.
fn pair_model(
    template: &SystemModel,
    varied: usize,
    reference: usize,
    ratio: f64,
    base_mhz: f64,
) -> SystemModel {
    let mut m = template.clone();
    for magnon in &mut m.magnons {
        for (u, c) in magnon.couplings.iter_mut().enumerate() {
            c.g_mhz = if u == varied {
                base_mhz * ratio
            } else if u == reference {
                base_mhz
            } else {
                0.0
            };
        }
    }
    m
}

fn validate_pair(
    template: &SystemModel,
    varied: usize,
    reference: usize,
) -> Result<(), AnalysisError> {
    template.validate()?;
    if template.n_magnon() != 1 {
        return Err(AnalysisError::TemplateNeedsOneMagnon(template.n_magnon()));
    }
    let n = template.n_cavity();
    for index in [varied, reference] {
        if index >= n {
            return Err(AnalysisError::ModeIndexOutOfRange { index, n_modes: n });
        }
    }
    if varied == reference {
        return Err(AnalysisError::DegenerateScan { varied, reference });
    }
    Ok(())
}

/// Excursion (MHz) of the normalized pair model at one ratio; +infinity when
/// no trackable sample qualifies (maximal penalty, never the argmin).
fn pair_excursion(
    template: &SystemModel,
    varied: usize,
    reference: usize,
    ratio: f64,
    opts: &SuppressionOptions,
) -> Result<f64, AnalysisError> {
    let model = pair_model(template, varied, reference, ratio, opts.base_amplitude_mhz);
    let t = track(&model, &opts.windows, &suppression_tracking_options(opts))?;
    Ok(t.excursion_ghz.map_or(f64::INFINITY, |e| e * 1e3))
}

/// Find the coupling ratio `g_varied / g_reference` that minimizes the
/// antiresonance excursion: a coarse log-spaced scan brackets the minimum
/// (and records every local minimum), then golden-section search refines it.
pub fn suppression_ratio(
    template: &SystemModel,
    varied: usize,
    reference: usize,
    opts: &SuppressionOptions,
) -> Result<SuppressionResult, AnalysisError> {
    validate_pair(template, varied, reference)?;
    let n = opts.prescan_points.max(3);
    let lrs = linspace(opts.ratio_lo.ln(), opts.ratio_hi.ln(), n);

    #[cfg(feature = "parallel")]
    let vals: Vec<f64> = lrs
        .par_iter()
        .map(|&lr| pair_excursion(template, varied, reference, lr.exp(), opts))
        .collect::<Result<_, _>>()?;
    #[cfg(not(feature = "parallel"))]
    let vals: Vec<f64> = lrs
        .iter()
        .map(|&lr| pair_excursion(template, varied, reference, lr.exp(), opts))
        .collect::<Result<_, _>>()?;

    let mut i0 = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v < vals[i0] {
            i0 = i;
        }
    }
    let mut local_minima = Vec::new();
    for i in 1..n - 1 {
        if vals[i] < vals[i - 1] && vals[i] <= vals[i + 1] {
            local_minima.push(lrs[i].exp());
        }
    }

    let eval = |lr: f64| pair_excursion(template, varied, reference, lr.exp(), opts);
    let mut a = lrs[i0.saturating_sub(1)];
    let mut b = lrs[(i0 + 1).min(n - 1)];
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while b - a > opts.log_tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = eval(d)?;
        }
    }
    let mid = 0.5 * (a + b);
    let ratio = mid.exp();
    let residual = eval(mid)?;
    Ok(SuppressionResult {
        ratio,
        residual,
        local_minima,
    })
}

/// The two readings of "how much more strongly one jump-class couples than
/// the other", measured by suppressing each of two same-class modes against
/// a common opposite-class reference.
#[derive(Debug, Clone, Serialize)]
pub struct InfluenceReadings {
    /// Argmin reading: ratio of the two suppression ratios (the weaker mode
    /// needs this many times more amplitude to null the same reference).
    pub argmin_ratio: f64,
    pub weak_mode: SuppressionResult,
    pub strong_mode: SuppressionResult,
    /// Excursion-impact reading: sqrt of the single-mode excursion ratio
    /// (the excursion is quadratic in the coupling, so the square root is
    /// the per-unit-coupling impact ratio).
    pub sqrt_excursion_ratio: f64,
}

/// Compare the influence of two same-class modes by suppressing each against
/// the same opposite-class reference mode.
pub fn influence_ratio(
    template: &SystemModel,
    weak: usize,
    strong: usize,
    reference: usize,
    opts: &SuppressionOptions,
) -> Result<InfluenceReadings, AnalysisError> {
    let weak_res = suppression_ratio(template, weak, reference, opts)?;
    let strong_res = suppression_ratio(template, strong, reference, opts)?;
    // Single-mode excursions at the common base amplitude (the "other" index
    // is zeroed by using the mode itself as the pair's reference slot).
    let exc_weak = pair_excursion(template, weak, weak, 1.0, opts)?;
    let exc_strong = pair_excursion(template, strong, strong, 1.0, opts)?;
    let sqrt_ratio = if exc_weak > 0.0 && exc_weak.is_finite() && exc_strong.is_finite() {
        (exc_strong / exc_weak).sqrt()
    } else {
        f64::NAN
    };
    Ok(InfluenceReadings {
        argmin_ratio: weak_res.ratio / strong_res.ratio,
        weak_mode: weak_res,
        strong_mode: strong_res,
        sqrt_excursion_ratio: sqrt_ratio,
    })
}

// ---------------------------------------------------------------------------
// Avoided-crossing coupling fit
// ---------------------------------------------------------------------------

/// Options of the two-branch avoided-crossing fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArCouplingOptions {
    pub windows: RegimeWindows,
    /// Dips farther than this from the unperturbed antiresonance are not
    /// branch candidates (GHz).
    pub branch_window_ghz: f64,
    /// Half-span of the crossing-center scan around the unperturbed
    /// antiresonance (GHz).
    pub center_scan_ghz: f64,
    pub center_scan_points: usize,
    /// Re-centering passes: the effective crossing center shifts away from
    /// the unperturbed antiresonance when several modes dress the
    /// antiresonance, so the pair selection is re-anchored on the fitted
    /// center and the fit repeated.
    pub passes: usize,
    pub prominence_db: f64,
}

impl Default for ArCouplingOptions {
    fn default() -> Self {
        Self {
            windows: RegimeWindows::default(),
            branch_window_ghz: 0.9,
            center_scan_ghz: 0.4,
            center_scan_points: 1601,
            passes: 3,
            prominence_db: 3.0,
        }
    }
}

/// Fitted effective coupling between the antiresonance and the magnon line.
#[derive(Debug, Clone, Serialize)]
pub struct ArCouplingFit {
    /// |g_ar| in MHz.
    pub g_ar_mhz: f64,
    /// One-sigma uncertainty on g_ar from the fit covariance (MHz).
    pub sigma_g_ar_mhz: f64,
    /// Fitted crossing center (GHz).
    pub center_ghz: f64,
    /// Sign of the fitted g^2: true = level repulsion (real-valued
    /// separation gap), false = attraction.
    pub repulsive: bool,
    /// Number of two-branch field samples used.
    pub n_samples: usize,
    /// Model-free cross-check: half the minimum observed branch separation
    /// (MHz).
    pub half_min_separation_mhz: f64,
}

/// Fit the two antiresonance-polariton branch frequencies vs field to a
/// two-level avoided-crossing law.
///
/// At each field sample the two dips nearest the current crossing center
/// that straddle it form a branch pair; their separation obeys
/// `sep^2 = (f_m - f_c)^2 + 4 g^2` for a two-level crossing, which is linear
/// in `g^2` given the center, so the fit scans the center and solves `g^2`
/// in closed form, re-anchoring the pair selection on the fitted center for
/// a few passes. `g_ar` is half the minimum branch separation of the fitted
/// law, i.e. `sqrt(|g^2|)`.
pub fn effective_ar_coupling(
    model: &SystemModel,
    opts: &ArCouplingOptions,
) -> Result<ArCouplingFit, AnalysisError> {
    model.validate()?;
    let coupled = model
        .magnons
        .iter()
        .any(|m| m.couplings.iter().any(|c| c.g_mhz > 0.0));
    if model.magnons.is_empty() || !coupled {
        // No coupling: the branches are the bare lines and the gap is zero.
        let windows = &opts.windows;
        let grid = windows.grid()?;
        let bare = model.with_zero_couplings();
        let kernel = ScatteringKernel::new(&bare, FieldPoint { mu0_h_t: windows.h_lo_t })
            .map_err(numerics_to_analysis)?;
        let f_axis = grid.f_axis();
        let row: Vec<Complex64> = f_axis
            .iter()
            .map(|&f| match kernel.evaluate(f) {
                Ok(s) => s[SElem::S21.index()],
                Err(_) => Complex64::new(f64::NAN, f64::NAN),
            })
            .collect();
        let far0 = sharpest_dip(&dips_with_axis_distance(f_axis, &row, opts.prominence_db))
            .ok_or(AnalysisError::NoAntiresonance {
                lo: windows.f_lo_ghz,
                hi: windows.f_hi_ghz,
            })?
            .f_ghz;
        return Ok(ArCouplingFit {
            g_ar_mhz: 0.0,
            sigma_g_ar_mhz: 0.0,
            center_ghz: far0,
            repulsive: false,
            n_samples: 0,
            half_min_separation_mhz: 0.0,
        });
    }

    let windows = &opts.windows;
    let grid = windows.grid()?;
    let map: SpectrumMap = run_sweep(model, &grid)?;
    let f_axis = grid.f_axis().to_vec();

    // Unperturbed antiresonance from the zero-coupling model.
    let bare = model.with_zero_couplings();
    let kernel = ScatteringKernel::new(&bare, FieldPoint { mu0_h_t: windows.h_lo_t })
        .map_err(numerics_to_analysis)?;
    let bare_row: Vec<Complex64> = f_axis
        .iter()
        .map(|&f| match kernel.evaluate(f) {
            Ok(s) => s[SElem::S21.index()],
            Err(_) => Complex64::new(f64::NAN, f64::NAN),
        })
        .collect();
    let far0 = sharpest_dip(&dips_with_axis_distance(
        &f_axis,
        &bare_row,
        opts.prominence_db,
    ))
    .ok_or(AnalysisError::NoAntiresonance {
        lo: windows.f_lo_ghz,
        hi: windows.f_hi_ghz,
    })?
    .f_ghz;

    // Candidate dips near the antiresonance, per field sample.
    let dipsets: Vec<Vec<Dip>> = (0..grid.nh())
        .map(|k| {
            let row: Vec<Complex64> = map
                .row(k)
                .iter()
                .map(|s| s[SElem::S21.index()])
                .collect();
            dips_with_axis_distance(&f_axis, &row, opts.prominence_db)
                .into_iter()
                .filter(|d| (d.f_ghz - far0).abs() < opts.branch_window_ghz)
                .collect()
        })
        .collect();

    let gyro = model.magnons[0].gyro_ghz_per_t;
    let h_axis = grid.h_axis().to_vec();

    // One fit pass at a given crossing-center anchor.
    let fit_pass = |center: f64| -> Option<(f64, f64, Vec<(f64, f64)>, f64)> {
        //

        let mut pairs: Vec<(f64, f64)> = Vec::new(); // (f_m, separation)
        let mut min_sep = f64::INFINITY;
        for (k, set) in dipsets.iter().enumerate() {
            if set.len() < 2 {
                continue;
            }
            let mut sorted: Vec<&Dip> = set.iter().collect();
            sorted.sort_by(|a, b| {
                (a.f_ghz - center)
                    .abs()
                    .partial_cmp(&(b.f_ghz - center).abs())
                    .unwrap()
            });
            let lo = sorted[0].f_ghz.min(sorted[1].f_ghz);
            let hi = sorted[0].f_ghz.max(sorted[1].f_ghz);
            if lo < center && center < hi {
                let fm = gyro * h_axis[k];
                pairs.push((fm, hi - lo));
                min_sep = min_sep.min(hi - lo);
            }
        }
        if pairs.len() < 3 {
            return None;
        }
        // sep^2 = (f_m - f_c)^2 + 4 g^2: scan f_c, solve g^2 by the mean.
        let mut best: Option<(f64, f64, f64)> = None; // (sse, fc, g2)
        let centers = linspace(
            far0 - opts.center_scan_ghz,
            far0 + opts.center_scan_ghz,
            opts.center_scan_points,
        );
        for fc in centers {
            let mut g2_sum = 0.0;
            for &(fm, sep) in &pairs {
                g2_sum += sep * sep - (fm - fc) * (fm - fc);
            }
            let g2 = g2_sum / (4.0 * pairs.len() as f64);
            let mut sse = 0.0;
            for &(fm, sep) in &pairs {
                let r = sep * sep - (fm - fc) * (fm - fc) - 4.0 * g2;
                sse += r * r;
            }
            match best {
                Some((bs, _, _)) if sse >= bs => {}
                _ => best = Some((sse, fc, g2)),
            }
        }
        best.map(|(_, fc, g2)| (fc, g2, pairs, min_sep))
    };

    let mut center = far0;
    let mut last = None;
    for _ in 0..opts.passes.max(1) {
        match fit_pass(center) {
            Some(result) => {
                center = result.0;
                last = Some(result);
            }
            None => break,
        }
    }
    let (fc, g2, pairs, min_sep) = last.ok_or_else(|| {
        AnalysisError::BranchesNotResolvable(
            "fewer than 3 field samples show two dips straddling the crossing".into(),
        )
    })?;

    let g_ar_ghz = g2.abs().sqrt();

    // Gauss-Newton covariance of (f_c, g^2) at the optimum of
    // r_i = sep_i^2 - (f_m,i - f_c)^2 - 4 g^2.
    let m = pairs.len();
    let mut jtj = [[0.0f64; 2]; 2];
    let mut sse = 0.0;
    for &(fm, sep) in &pairs {
        let j0 = 2.0 * (fm - fc);
        let j1 = -4.0;
        jtj[0][0] += j0 * j0;
        jtj[0][1] += j0 * j1;
        jtj[1][0] += j1 * j0;
        jtj[1][1] += j1 * j1;
        let r = sep * sep - (fm - fc) * (fm - fc) - 4.0 * g2;
        sse += r * r;
    }
    let sigma_g_ar_mhz = if m > 2 {
        let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
        if det.abs() > 1e-300 && g_ar_ghz > 0.0 {
            let var = sse / (m - 2) as f64;
            let cov_g2 = var * jtj[0][0] / det;
            (cov_g2.max(0.0).sqrt() / (2.0 * g_ar_ghz)) * 1e3
        } else {
            f64::NAN
        }
    } else {
        f64::NAN
    };

    Ok(ArCouplingFit {
        g_ar_mhz: g_ar_ghz * 1e3,
        sigma_g_ar_mhz,
        center_ghz: fc,
        repulsive: g2 > 0.0,
        n_samples: m,
        half_min_separation_mhz: 0.5 * min_sep * 1e3,
    })
}
