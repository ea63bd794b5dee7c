//! Displacement sweep: interpolates per-mode coupling parameters along the
//! sample-position axis, rebuilds the model at each position, classifies the
//! coupling regime, and locates the positions where the regime changes.

use std::f64::consts::PI;
use std::path::Path;

use serde::Serialize;

use crate::analysis::{classify_regime, Regime, RegimeWindows, TrackingOptions};
use crate::error::{PositionError, TraceError};
use crate::model::{
    wrap_phase, CavityMode, Conventions, MagnonCoupling, MagnonMode, SystemModel,
};

// ---------------------------------------------------------------------------
// Position table
// ---------------------------------------------------------------------------

/// Per-mode parameters at one position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeParams {
    pub f_ghz: f64,
    pub g_mhz: f64,
    pub phi0_rad: f64,
    pub phi1_rad: f64,
    pub theta_rad: f64,
}

/// One table row: a position and its per-mode parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionRow {
    pub y_mm: f64,
    pub modes: Vec<ModeParams>,
}

/// Coupling parameters tabulated against sample displacement, with monotone
/// piecewise-cubic interpolation between the nodes. Rows are kept sorted by
/// position, so a reversed input produces the identical table.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionTable {
    rows: Vec<PositionRow>,
    n_modes: usize,
}

impl PositionTable {
    pub fn new(mut rows: Vec<PositionRow>) -> Result<Self, PositionError> {
        if rows.len() < 2 {
            return Err(PositionError::TooFewRows(rows.len()));
        }
        rows.sort_by(|a, b| a.y_mm.partial_cmp(&b.y_mm).unwrap());
        for pair in rows.windows(2) {
            if !(pair[0].y_mm < pair[1].y_mm) {
                return Err(PositionError::NonMonotone);
            }
        }
        let n_modes = rows[0].modes.len();
        for row in &rows {
            if row.modes.len() != n_modes {
                return Err(PositionError::ModeCountMismatch {
                    y: row.y_mm,
                    got: row.modes.len(),
                    expected: n_modes,
                });
            }
        }
        Ok(Self { rows, n_modes })
    }

    /// Load the CSV schema
    /// `y_mm, mode_index, f_GHz, g_MHz, phi0_rad, phi1_rad, theta_rad`
    /// (one line per position-mode pair, any row order).
    pub fn from_csv(path: &Path) -> Result<Self, PositionError> {
        let to_io = |e: std::io::Error| {
            PositionError::Trace(TraceError::Io {
                path: path.display().to_string(),
                source: e,
            })
        };
        let parse = |line: usize, message: String| {
            PositionError::Trace(TraceError::Parse {
                path: path.display().to_string(),
                line,
                message,
            })
        };
        let text = std::fs::read_to_string(path).map_err(to_io)?;
        // Grouped by exact position value, in first-seen order.
        let mut groups: Vec<(f64, Vec<(usize, ModeParams)>)> = Vec::new();
        let mut data_rows = 0usize;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if idx == 0 && cells[0].parse::<f64>().is_err() {
                continue; // header
            }
            if cells.len() != 7 {
                return Err(parse(idx + 1, format!("expected 7 columns, got {}", cells.len())));
            }
            let mut nums = [0.0f64; 7];
            for (k, cell) in cells.iter().enumerate() {
                nums[k] = cell
                    .parse()
                    .map_err(|_| parse(idx + 1, format!("bad number '{cell}'")))?;
            }
            let y = nums[0];
            let mode_index = nums[1] as usize;
            if nums[1].fract() != 0.0 || nums[1] < 0.0 {
                return Err(parse(idx + 1, format!("mode_index must be a non-negative integer, got {}", cells[1])));
            }
            let params = ModeParams {
                f_ghz: nums[2],
                g_mhz: nums[3],
                phi0_rad: nums[4],
                phi1_rad: nums[5],
                theta_rad: nums[6],
            };
            match groups.iter_mut().find(|(gy, _)| *gy == y) {
                Some((_, entries)) => entries.push((mode_index, params)),
                None => groups.push((y, vec![(mode_index, params)])),
            }
            data_rows += 1;
        }
        if data_rows == 0 {
            return Err(PositionError::Trace(TraceError::Empty(
                path.display().to_string(),
            )));
        }
        let mut rows = Vec::with_capacity(groups.len());
        for (y, mut entries) in groups {
            entries.sort_by_key(|(idx, _)| *idx);
            let indices: Vec<usize> = entries.iter().map(|(idx, _)| *idx).collect();
            let expected: Vec<usize> = (0..entries.len()).collect();
            if indices != expected {
                return Err(PositionError::ModeCountMismatch {
                    y,
                    got: entries.len(),
                    expected: indices.iter().max().map_or(0, |m| m + 1),
                });
            }
            rows.push(PositionRow {
                y_mm: y,
                modes: entries.into_iter().map(|(_, p)| p).collect(),
            });
        }
        Self::new(rows)
    }

    pub fn rows(&self) -> &[PositionRow] {
        &self.rows
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn y_range(&self) -> (f64, f64) {
        (self.rows[0].y_mm, self.rows[self.rows.len() - 1].y_mm)
    }

    /// Interpolate the per-mode parameters at a position inside the table
    /// range. Frequencies and couplings interpolate with a monotone
    /// piecewise cubic (no overshoot between nodes); phases are first
    /// unwrapped onto the shorter arc across rows, interpolated the same
    /// way, then wrapped back. An exact node position returns the stored
    /// row verbatim.
    pub fn interpolate(&self, y_mm: f64) -> Result<Vec<ModeParams>, PositionError> {
        let (lo, hi) = self.y_range();
        if y_mm < lo || y_mm > hi {
            return Err(PositionError::Extrapolation { y: y_mm, lo, hi });
        }
        if let Some(row) = self.rows.iter().find(|r| r.y_mm == y_mm) {
            return Ok(row.modes.clone());
        }
        let ys: Vec<f64> = self.rows.iter().map(|r| r.y_mm).collect();
        let mut out = Vec::with_capacity(self.n_modes);
        for u in 0..self.n_modes {
            let f: Vec<f64> = self.rows.iter().map(|r| r.modes[u].f_ghz).collect();
            let g: Vec<f64> = self.rows.iter().map(|r| r.modes[u].g_mhz).collect();
            let phi0 = unwrap_series(self.rows.iter().map(|r| r.modes[u].phi0_rad));
            let phi1 = unwrap_series(self.rows.iter().map(|r| r.modes[u].phi1_rad));
            let theta = unwrap_series(self.rows.iter().map(|r| r.modes[u].theta_rad));
            out.push(ModeParams {
                f_ghz: pchip(&ys, &f, y_mm),
                g_mhz: pchip(&ys, &g, y_mm),
                phi0_rad: wrap_phase(pchip(&ys, &phi0, y_mm)),
                phi1_rad: wrap_phase(pchip(&ys, &phi1, y_mm)),
                theta_rad: wrap_phase(pchip(&ys, &theta, y_mm)),
            });
        }
        Ok(out)
    }

    /// Flag table segments where a phase swings by more than the threshold
    /// between adjacent nodes: the interpolated arc there is a guess, not a
    /// measurement.
    pub fn phase_arc_warnings(&self, threshold_rad: f64) -> Vec<String> {
        let mut warnings = Vec::new();
        for u in 0..self.n_modes {
            for pair in self.rows.windows(2) {
                let d = wrap_phase(pair[1].modes[u].theta_rad - pair[0].modes[u].theta_rad);
                if d.abs() > threshold_rad {
                    warnings.push(format!(
                        "mode {u}: theta swings {:.3} rad between y = {} mm and y = {} mm; \
                         interpolated values between these nodes are unconstrained",
                        d,
                        pair[0].y_mm,
                        pair[1].y_mm
                    ));
                }
            }
        }
        warnings
    }
}

/// Unwrap a phase sequence onto the shorter arc: each step is moved by
/// multiples of 2 pi into (-pi, pi].
fn unwrap_series(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for v in values {
        match out.last() {
            None => out.push(v),
            Some(&prev) => {
                let mut d = v - prev;
                while d > PI {
                    d -= 2.0 * PI;
                }
                while d <= -PI {
                    d += 2.0 * PI;
                }
                out.push(prev + d);
            }
        }
    }
    out
}

/// Monotone piecewise-cubic interpolation (shape-preserving slopes: the
/// weighted harmonic mean of adjacent secants, zeroed at local extrema).
fn pchip(x: &[f64], y: &[f64], xq: f64) -> f64 {
    let n = x.len();
    debug_assert!(n >= 2);
    let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    let i = x
        .partition_point(|&v| v < xq)
        .saturating_sub(1)
        .min(n - 2);
    if xq == x[i] {
        return y[i];
    }
    let t = (xq - x[i]) / h[i];
    let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
    let h10 = t * (1.0 - t) * (1.0 - t);
    let h01 = t * t * (3.0 - 2.0 * t);
    let h11 = t * t * (t - 1.0);
    h00 * y[i] + h10 * h[i] * m[i] + h01 * y[i + 1] + h11 * h[i] * m[i + 1]
}

// ---------------------------------------------------------------------------
// Model assembly at a position
// ---------------------------------------------------------------------------

/// Position-independent dissipation rates (per mode; external rate applied
/// to both ports).
#[derive(Debug, Clone, PartialEq)]
pub struct DissipationSet {
    pub gamma_int_mhz: Vec<f64>,
    pub gamma_ext_mhz: Vec<f64>,
}

/// Position-independent magnon settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnonSettings {
    pub gyro_ghz_per_t: f64,
    pub alpha: f64,
    pub k_m_mhz: Option<f64>,
}

/// Build the full model at one position: interpolated frequencies, coupling
/// amplitudes, and phases, combined with the fixed dissipation rates and
/// magnon settings.
pub fn model_at(
    table: &PositionTable,
    y_mm: f64,
    diss: &DissipationSet,
    magnon: &MagnonSettings,
) -> Result<SystemModel, PositionError> {
    let params = table.interpolate(y_mm)?;
    if diss.gamma_int_mhz.len() != params.len() || diss.gamma_ext_mhz.len() != params.len() {
        return Err(PositionError::ModeCountMismatch {
            y: y_mm,
            got: diss.gamma_int_mhz.len().min(diss.gamma_ext_mhz.len()),
            expected: params.len(),
        });
    }
    let cavity_modes = params
        .iter()
        .enumerate()
        .map(|(u, p)| CavityMode {
            f_ghz: p.f_ghz,
            gamma_int_mhz: diss.gamma_int_mhz[u],
            gamma_ext_mhz: [diss.gamma_ext_mhz[u], diss.gamma_ext_mhz[u]],
            phi_ext_rad: [p.phi0_rad, p.phi1_rad],
        })
        .collect();
    let couplings = params
        .iter()
        .map(|p| MagnonCoupling {
            g_mhz: p.g_mhz,
            theta_rad: p.theta_rad,
        })
        .collect();
    Ok(SystemModel {
        cavity_modes,
        magnons: vec![MagnonMode {
            gyro_ghz_per_t: magnon.gyro_ghz_per_t,
            alpha: magnon.alpha,
            k_m_mhz: magnon.k_m_mhz,
            couplings,
        }],
        xi: 0.0,
        conventions: Conventions::default(),
    })
}

// ---------------------------------------------------------------------------
// Regime profile
// ---------------------------------------------------------------------------

/// A position where the regime label changes, located by bisection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeBoundary {
    pub y_mm: f64,
    pub from: Regime,
    pub to: Regime,
}

/// Regime labels along the displacement axis, with boundary positions,
/// coupling-amplitude curves, and interpolation caveats.
#[derive(Debug, Clone, Serialize)]
pub struct RegimeProfile {
    pub y_mm: Vec<f64>,
    /// Label per position; `None` where classification failed (see `errors`).
    pub labels: Vec<Option<Regime>>,
    pub excursions_mhz: Vec<Option<f64>>,
    pub errors: Vec<Option<String>>,
    pub boundaries: Vec<RegimeBoundary>,
    /// `g_curves_mhz[mode][position]`.
    pub g_curves_mhz: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Classify the regime across the table span at the given position step and
/// locate every label change by bisection to 0.01 mm. Classification
/// failures are isolated per position; the profile always completes.
pub fn regime_profile(
    table: &PositionTable,
    step_mm: f64,
    diss: &DissipationSet,
    magnon: &MagnonSettings,
    windows: &RegimeWindows,
    tracking: &TrackingOptions,
) -> Result<RegimeProfile, PositionError> {
    if !(step_mm > 0.0) {
        return Err(PositionError::BadStep(step_mm));
    }
    let (lo, hi) = table.y_range();
    let count = ((hi - lo) / step_mm + 1e-9).floor() as usize + 1;
    let mut y_mm: Vec<f64> = (0..count).map(|i| lo + i as f64 * step_mm).collect();
    if (y_mm[y_mm.len() - 1] - hi).abs() > 1e-9 {
        y_mm.push(hi);
    }

    let classify_at = |y: f64| -> Result<Regime, String> {
        let model = model_at(table, y, diss, magnon).map_err(|e| e.to_string())?;
        classify_regime(&model, windows, tracking)
            .map(|rep| rep.overall)
            .map_err(|e| e.to_string())
    };

    let mut labels = Vec::with_capacity(y_mm.len());
    let mut errors = Vec::with_capacity(y_mm.len());
    let mut excursions = Vec::with_capacity(y_mm.len());
    for &y in &y_mm {
        match model_at(table, y, diss, magnon)
            .map_err(|e| e.to_string())
            .and_then(|model| {
                classify_regime(&model, windows, tracking).map_err(|e| e.to_string())
            }) {
            Ok(report) => {
                labels.push(Some(report.overall));
                excursions.push(Some(report.excursion_mhz));
                errors.push(None);
            }
            Err(msg) => {
                labels.push(None);
                excursions.push(None);
                errors.push(Some(msg));
            }
        }
    }

    let mut boundaries = Vec::new();
    for i in 0..y_mm.len() - 1 {
        let (Some(a), Some(b)) = (labels[i], labels[i + 1]) else {
            continue;
        };
        if a == b {
            continue;
        }
        let mut left = y_mm[i];
        let mut right = y_mm[i + 1];
        while right - left > 0.01 {
            let mid = 0.5 * (left + right);
            match classify_at(mid) {
                Ok(label) if label == a => left = mid,
                Ok(_) => right = mid,
                Err(_) => break,
            }
        }
        boundaries.push(RegimeBoundary {
            y_mm: 0.5 * (left + right),
            from: a,
            to: b,
        });
    }

    let mut g_curves_mhz = vec![Vec::with_capacity(y_mm.len()); table.n_modes()];
    for &y in &y_mm {
        let params = table.interpolate(y)?;
        for (u, p) in params.iter().enumerate() {
            g_curves_mhz[u].push(p.g_mhz);
        }
    }

    Ok(RegimeProfile {
        y_mm,
        labels,
        excursions_mhz: excursions,
        errors,
        boundaries,
        g_curves_mhz,
        warnings: table.phase_arc_warnings(PI / 3.0),
    })
}
