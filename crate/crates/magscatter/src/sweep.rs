//! Frequency x field sweeps and their derived layers.
//!
//! A sweep evaluates the scattering relation on a rectangular grid (field
//! outer, frequency inner) and exposes magnitude, phase, and isolation
//! layers plus CSV/JSON export. Grid points are independent work items; the
//! parallel path (feature `parallel`, on by default) splits work by field
//! row and reassembles rows in index order, so output is bit-identical to
//! the sequential path regardless of scheduling.

use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::SweepError;
use crate::model::{wrap_phase, Conventions, FieldPoint, SystemModel};
use crate::error::NumericsError;
use crate::numerics::{ScatteringKernel, SParams};

/// Rectangular sweep grid. Both axes are strictly increasing; a single-point
/// axis is allowed (a one-row map degenerates to a single trace).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    f_ghz: Vec<f64>,
    mu0_h_t: Vec<f64>,
}

impl Grid {
    pub fn new(f_ghz: Vec<f64>, mu0_h_t: Vec<f64>) -> Result<Self, SweepError> {
        if f_ghz.is_empty() || !strictly_increasing(&f_ghz) {
            return Err(SweepError::BadAxis { axis: "frequency" });
        }
        if mu0_h_t.is_empty() || !strictly_increasing(&mu0_h_t) {
            return Err(SweepError::BadAxis { axis: "field" });
        }
        Ok(Self { f_ghz, mu0_h_t })
    }

    /// Uniform grid from inclusive endpoints and point counts.
    pub fn uniform(
        f_lo: f64,
        f_hi: f64,
        nf: usize,
        h_lo: f64,
        h_hi: f64,
        nh: usize,
    ) -> Result<Self, SweepError> {
        Self::new(linspace(f_lo, f_hi, nf), linspace(h_lo, h_hi, nh))
    }

    /// Single-field grid (one spectrum trace).
    pub fn single_field(f_lo: f64, f_hi: f64, nf: usize, mu0_h_t: f64) -> Result<Self, SweepError> {
        Self::new(linspace(f_lo, f_hi, nf), vec![mu0_h_t])
    }

    pub fn f_axis(&self) -> &[f64] {
        &self.f_ghz
    }

    pub fn h_axis(&self) -> &[f64] {
        &self.mu0_h_t
    }

    pub fn nf(&self) -> usize {
        self.f_ghz.len()
    }

    pub fn nh(&self) -> usize {
        self.mu0_h_t.len()
    }
}

/// Inclusive linear spacing; `n = 1` collapses to the lower endpoint.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0]) && v.iter().all(|x| x.is_finite())
}

/// Which scattering element a layer refers to. `S_ab`: response at port `a`
/// to a drive at port `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SElem {
    S11,
    S12,
    S21,
    S22,
}

impl SElem {
    #[inline]
    pub fn index(self) -> usize {
        match self {
            SElem::S11 => 0,
            SElem::S12 => 1,
            SElem::S21 => 2,
            SElem::S22 => 3,
        }
    }
}

/// Scattering evaluated on a grid, stored field-row by field-row
/// (index = h_index * nf + f_index). Immutable once built.
#[derive(Debug, Clone)]
pub struct SpectrumMap {
    grid: Grid,
    s: Vec<SParams>,
    singular: Vec<bool>,
    worst_condition: f64,
}

impl SpectrumMap {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Largest linear-solve condition proxy seen anywhere on the grid; a
    /// value near 1/eps means the scattering values lose most of their
    /// significant digits around some resonance.
    pub fn worst_condition(&self) -> f64 {
        self.worst_condition
    }

    #[inline]
    pub fn at(&self, h_index: usize, f_index: usize) -> SParams {
        self.s[h_index * self.grid.nf() + f_index]
    }

    #[inline]
    pub fn is_singular(&self, h_index: usize, f_index: usize) -> bool {
        self.singular[h_index * self.grid.nf() + f_index]
    }

    pub fn any_singular(&self) -> bool {
        self.singular.iter().any(|&s| s)
    }

    /// Magnitude layer in dB: `20 log10 |S_ab|`; NaN at flagged points.
    pub fn mag_db(&self, elem: SElem) -> Vec<f64> {
        let k = elem.index();
        self.s
            .iter()
            .zip(&self.singular)
            .map(|(s, &bad)| {
                if bad {
                    f64::NAN
                } else {
                    20.0 * s[k].norm().log10()
                }
            })
            .collect()
    }

    /// Raw phase layer in rad (wrapped); NaN at flagged points.
    pub fn phase(&self, elem: SElem) -> Vec<f64> {
        let k = elem.index();
        self.s
            .iter()
            .zip(&self.singular)
            .map(|(s, &bad)| if bad { f64::NAN } else { s[k].arg() })
            .collect()
    }

    /// Phase layer unwrapped along the frequency axis, row by row.
    pub fn phase_unwrapped(&self, elem: SElem) -> Result<Vec<f64>, SweepError> {
        let raw = self.phase(elem);
        let nf = self.grid.nf();
        let mut out = Vec::with_capacity(raw.len());
        for row in raw.chunks(nf) {
            out.extend(unwrap_phase(row)?);
        }
        Ok(out)
    }

    /// Isolation layer: `mag_dB(S21) - mag_dB(S12)` pointwise.
    pub fn iso_db(&self) -> Vec<f64> {
        self.s
            .iter()
            .zip(&self.singular)
            .map(|(s, &bad)| {
                if bad {
                    f64::NAN
                } else {
                    20.0 * (s[SElem::S21.index()].norm() / s[SElem::S12.index()].norm()).log10()
                }
            })
            .collect()
    }

    /// One field row of the complex scattering data.
    pub fn row(&self, h_index: usize) -> &[SParams] {
        let nf = self.grid.nf();
        &self.s[h_index * nf..(h_index + 1) * nf]
    }
}

fn sweep_row(
    model: &SystemModel,
    f_axis: &[f64],
    mu0_h_t: f64,
) -> Result<(Vec<SParams>, Vec<bool>, f64), SweepError> {
    let field = FieldPoint::new(mu0_h_t)?;
    let kernel = ScatteringKernel::new(model, field).map_err(numerics_to_sweep)?;
    let mut values = Vec::with_capacity(f_axis.len());
    let mut flags = Vec::with_capacity(f_axis.len());
    let nan = Complex64::new(f64::NAN, f64::NAN);
    for &f in f_axis {
        match kernel.evaluate(f) {
            Ok(s) => {
                values.push(s);
                flags.push(false);
            }
            // A singular resolvent (exactly lossless on resonance) flags the
            // point instead of aborting the sweep.
            Err(NumericsError::Singular { .. }) => {
                values.push([nan; 4]);
                flags.push(true);
            }
            Err(other) => return Err(numerics_to_sweep(other)),
        }
    }
    Ok((values, flags, kernel.worst_condition.get()))
}

fn numerics_to_sweep(err: NumericsError) -> SweepError {
    match err {
        NumericsError::Model(msg) => SweepError::InvalidModel(msg),
        other => SweepError::InvalidModel(other.to_string()),
    }
}

/// Evaluate the model over the grid sequentially.
pub fn run_sweep_seq(model: &SystemModel, grid: &Grid) -> Result<SpectrumMap, SweepError> {
    model.validate()?;
    let nf = grid.nf();
    let nh = grid.nh();
    let mut s = Vec::with_capacity(nf * nh);
    let mut singular = Vec::with_capacity(nf * nh);
    let mut worst_condition = 1.0f64;
    for &h in grid.h_axis() {
        let (values, flags, cond) = sweep_row(model, grid.f_axis(), h)?;
        s.extend(values);
        singular.extend(flags);
        worst_condition = worst_condition.max(cond);
    }
    Ok(SpectrumMap {
        grid: grid.clone(),
        s,
        singular,
        worst_condition,
    })
}

/// Evaluate the model over the grid with field rows as parallel work items.
/// Rows are reassembled in index order, so the result is bit-identical to
/// the sequential path.
#[cfg(feature = "parallel")]
pub fn run_sweep_par(model: &SystemModel, grid: &Grid) -> Result<SpectrumMap, SweepError> {
    model.validate()?;
    let rows: Result<Vec<(Vec<SParams>, Vec<bool>, f64)>, SweepError> = grid
        .h_axis()
        .par_iter()
        .map(|&h| sweep_row(model, grid.f_axis(), h))
        .collect();
    let rows = rows?;
    let mut s = Vec::with_capacity(grid.nf() * grid.nh());
    let mut singular = Vec::with_capacity(grid.nf() * grid.nh());
    let mut worst_condition = 1.0f64;
    for (values, flags, cond) in rows {
        s.extend(values);
        singular.extend(flags);
        worst_condition = worst_condition.max(cond);
    }
    Ok(SpectrumMap {
        grid: grid.clone(),
        s,
        singular,
        worst_condition,
    })
}

/// Evaluate the model over the grid: parallel when the `parallel` feature is
/// enabled, sequential otherwise. Both paths produce identical maps.
pub fn run_sweep(model: &SystemModel, grid: &Grid) -> Result<SpectrumMap, SweepError> {
    #[cfg(feature = "parallel")]
    {
        run_sweep_par(model, grid)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_sweep_seq(model, grid)
    }
}

/// Unwrap a phase trace: keeps the first sample, then accumulates successive
/// differences mapped into (-pi, pi], so only 2 pi multiples are added. NaN
/// samples pass through without breaking the accumulated offset.
pub fn unwrap_phase(trace: &[f64]) -> Result<Vec<f64>, SweepError> {
    if trace.len() < 2 {
        return Err(SweepError::TooFewSamples(trace.len()));
    }
    let mut out = Vec::with_capacity(trace.len());
    let mut anchor_raw: Option<f64> = None;
    let mut anchor_out = 0.0;
    for &p in trace {
        if p.is_nan() {
            out.push(f64::NAN);
            continue;
        }
        let value = match anchor_raw {
            None => p,
            Some(prev) => anchor_out + wrap_phase(p - prev),
        };
        anchor_raw = Some(p);
        anchor_out = value;
        out.push(value);
    }
    Ok(out)
}

/// Isolation layer of a map (free-function spelling of
/// [`SpectrumMap::iso_db`]).
pub fn isolation(map: &SpectrumMap) -> Vec<f64> {
    map.iso_db()
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// Fixed-precision float formatting so exports are byte-stable.
fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.9e}")
    }
}

fn fmt_axis(x: f64) -> String {
    format!("{x:.9}")
}

/// Write the complex map in long format:
/// `f_GHz, mu0H_T, re_S11, im_S11, re_S12, im_S12, re_S21, im_S21, re_S22, im_S22`.
pub fn export_csv(map: &SpectrumMap, path: &Path) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "f_GHz", "mu0H_T", "re_S11", "im_S11", "re_S12", "im_S12", "re_S21", "im_S21", "re_S22",
        "im_S22",
    ])?;
    for (hi, &h) in map.grid().h_axis().iter().enumerate() {
        for (fi, &f) in map.grid().f_axis().iter().enumerate() {
            let s = map.at(hi, fi);
            let mut record = vec![fmt_axis(f), fmt_axis(h)];
            for v in s {
                record.push(fmt_float(v.re));
                record.push(fmt_float(v.im));
            }
            w.write_record(&record)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write the derived layers in long format:
/// `f_GHz, mu0H_T, s21_dB, s12_dB, iso_dB, phi21_rad`.
pub fn export_layers_csv(map: &SpectrumMap, path: &Path) -> Result<(), SweepError> {
    let s21 = map.mag_db(SElem::S21);
    let s12 = map.mag_db(SElem::S12);
    let iso = map.iso_db();
    let phi21 = if map.grid().nf() >= 2 {
        map.phase_unwrapped(SElem::S21)?
    } else {
        map.phase(SElem::S21)
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_to_sweep)?;
    w.write_record(["f_GHz", "mu0H_T", "s21_dB", "s12_dB", "iso_dB", "phi21_rad"])
        .map_err(csv_to_sweep)?;
    let nf = map.grid().nf();
    for (hi, &h) in map.grid().h_axis().iter().enumerate() {
        for (fi, &f) in map.grid().f_axis().iter().enumerate() {
            let k = hi * nf + fi;
            w.write_record([
                fmt_axis(f),
                fmt_axis(h),
                fmt_float(s21[k]),
                fmt_float(s12[k]),
                fmt_float(iso[k]),
                fmt_float(phi21[k]),
            ])
            .map_err(csv_to_sweep)?;
        }
    }
    w.flush().map_err(|e| csv_to_sweep(csv::Error::from(e)))?;
    Ok(())
}

fn csv_to_sweep(err: csv::Error) -> SweepError {
    SweepError::Export(err.to_string())
}

/// 64-bit FNV-1a over the canonical JSON serialization of the model; stable
/// across runs and platforms (unlike the std hasher, which is seeded).
pub fn model_hash(model: &SystemModel) -> String {
    let text = serde_json::to_string(model).expect("model serialization cannot fail");
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in text.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("fnv1a64:{hash:016x}")
}

/// Sidecar metadata describing one sweep run. The timestamp is the only
/// non-reproducible field and lives here so data files stay byte-identical.
#[derive(Debug, Serialize)]
pub struct SweepMetadata<'a> {
    pub model_hash: String,
    pub f_ghz_lo: f64,
    pub f_ghz_hi: f64,
    pub n_f: usize,
    pub mu0_h_t_lo: f64,
    pub mu0_h_t_hi: f64,
    pub n_h: usize,
    pub conventions: &'a Conventions,
    pub singular_points: usize,
    pub worst_condition: f64,
    pub timestamp_unix_s: u64,
}

/// Write the JSON metadata sidecar for a sweep.
pub fn export_metadata(
    model: &SystemModel,
    map: &SpectrumMap,
    path: &Path,
) -> std::io::Result<()> {
    let grid = map.grid();
    let meta = SweepMetadata {
        model_hash: model_hash(model),
        f_ghz_lo: grid.f_axis()[0],
        f_ghz_hi: *grid.f_axis().last().unwrap(),
        n_f: grid.nf(),
        mu0_h_t_lo: grid.h_axis()[0],
        mu0_h_t_hi: *grid.h_axis().last().unwrap(),
        n_h: grid.nh(),
        conventions: &model.conventions,
        singular_points: map.singular.iter().filter(|&&b| b).count(),
        worst_condition: map.worst_condition,
        timestamp_unix_s: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, &meta)?;
    file.write_all(b"\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_hits_both_endpoints() {
        let v = linspace(1.0, 2.0, 5);
        assert_eq!(v.len(), 5);
        assert_eq!(v[0], 1.0);
        assert_eq!(v[4], 2.0);
    }

    #[test]
    fn unwrap_keeps_constant_trace() {
        let v = unwrap_phase(&[0.3, 0.3, 0.3]).unwrap();
        assert_eq!(v, vec![0.3, 0.3, 0.3]);
    }

    #[test]
    fn unwrap_straightens_sawtooth() {
        use std::f64::consts::PI;
        let raw: Vec<f64> = (0..20).map(|i| wrap_phase(0.8 * i as f64)).collect();
        let unwrapped = unwrap_phase(&raw).unwrap();
        for (i, v) in unwrapped.iter().enumerate() {
            assert!((v - 0.8 * i as f64).abs() < 1e-12, "sample {i}");
        }
        assert!(raw.iter().all(|p| *p <= PI && *p > -PI));
    }
}
