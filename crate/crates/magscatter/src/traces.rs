//! Measured-trace ingestion: two-column dB transmission traces from CSV and
//! two-port network data in Touchstone version-1 format.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::TraceError;
use crate::numerics::SParams;
use crate::sweep::SElem;

/// A transmission-magnitude trace in dB versus frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct DbTrace {
    pub f_ghz: Vec<f64>,
    pub s21_db: Vec<f64>,
}

impl DbTrace {
    /// Linear magnitudes `10^(dB/20)`.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.s21_db.iter().map(|db| 10f64.powf(db / 20.0)).collect()
    }
}

/// A full two-port trace with all four scattering parameters per frequency,
/// stored in `[S11, S12, S21, S22]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPortTrace {
    pub f_ghz: Vec<f64>,
    pub s: Vec<SParams>,
}

impl TwoPortTrace {
    /// Extract one element as a dB trace.
    pub fn db_trace(&self, elem: SElem) -> DbTrace {
        DbTrace {
            f_ghz: self.f_ghz.clone(),
            s21_db: self
                .s
                .iter()
                .map(|s| 20.0 * s[elem.index()].norm().log10())
                .collect(),
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> TraceError {
    TraceError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> TraceError {
    TraceError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Load a two-column `f_GHz,S21_dB` CSV trace. A first row that does not
/// parse as numbers is treated as a header; later rows must parse.
pub fn load_db_trace(path: &Path) -> Result<DbTrace, TraceError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut f_ghz = Vec::new();
    let mut s21_db = Vec::new();
    let mut first_data_seen = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() < 2 {
            return Err(parse_err(path, idx + 1, "expected two comma-separated columns"));
        }
        let parsed: Option<(f64, f64)> = match (cells[0].parse(), cells[1].parse()) {
            (Ok(a), Ok(b)) => Some((a, b)),
            _ => None,
        };
        match parsed {
            Some((f, db)) => {
                f_ghz.push(f);
                s21_db.push(db);
                first_data_seen = true;
            }
            None if !first_data_seen => {} // header row
            None => {
                return Err(parse_err(path, idx + 1, "non-numeric data row"));
            }
        }
    }
    if f_ghz.is_empty() {
        return Err(TraceError::Empty(path.display().to_string()));
    }
    Ok(DbTrace { f_ghz, s21_db })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum SnpFormat {
    MagAngle,
    RealImag,
}

/// Load a two-port Touchstone version-1 file (`.s2p`).
///
/// `!` starts a comment, the `#` option line sets the frequency unit and the
/// data format (`MA` magnitude/angle-in-degrees or `RI` real/imaginary; `DB`
/// is rejected), and each record carries nine numbers: frequency then the
/// four parameter pairs in file order S11, S21, S12, S22. Records wrapped
/// over multiple lines are accepted.
pub fn load_touchstone(path: &Path) -> Result<TwoPortTrace, TraceError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut unit_to_ghz = 1.0; // Touchstone default unit is GHz.
    let mut format = SnpFormat::MagAngle;
    let mut numbers: Vec<f64> = Vec::new();
    let mut option_seen = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = match raw.find('!') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if option_seen {
                return Err(parse_err(path, idx + 1, "duplicate option line"));
            }
            option_seen = true;
            let mut tokens = rest.split_whitespace().peekable();
            while let Some(tok) = tokens.next() {
                match tok.to_ascii_uppercase().as_str() {
                    "HZ" => unit_to_ghz = 1e-9,
                    "KHZ" => unit_to_ghz = 1e-6,
                    "MHZ" => unit_to_ghz = 1e-3,
                    "GHZ" => unit_to_ghz = 1.0,
                    "S" => {}
                    "MA" => format = SnpFormat::MagAngle,
                    "RI" => format = SnpFormat::RealImag,
                    "DB" => return Err(TraceError::UnsupportedFormat("DB".into())),
                    "R" => {
                        tokens.next(); // reference impedance value
                    }
                    other if matches!(other, "Y" | "Z" | "H" | "G") => {
                        return Err(parse_err(
                            path,
                            idx + 1,
                            format!("only S-parameters are supported, got '{other}'"),
                        ));
                    }
                    other => {
                        return Err(parse_err(
                            path,
                            idx + 1,
                            format!("unknown option token '{other}'"),
                        ));
                    }
                }
            }
            continue;
        }
        for tok in line.split_whitespace() {
            let value: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, idx + 1, format!("bad number '{tok}'")))?;
            numbers.push(value);
        }
    }
    if numbers.is_empty() {
        return Err(TraceError::Empty(path.display().to_string()));
    }
    if numbers.len() % 9 != 0 {
        return Err(parse_err(
            path,
            text.lines().count(),
            format!(
                "two-port records need 9 numbers each; {} values do not divide evenly",
                numbers.len()
            ),
        ));
    }
    let make = |pair: &[f64]| -> Complex64 {
        match format {
            SnpFormat::MagAngle => {
                Complex64::from_polar(pair[0], pair[1] * PI / 180.0)
            }
            SnpFormat::RealImag => Complex64::new(pair[0], pair[1]),
        }
    };
    let mut f_ghz = Vec::new();
    let mut s = Vec::new();
    for rec in numbers.chunks_exact(9) {
        f_ghz.push(rec[0] * unit_to_ghz);
        let s11 = make(&rec[1..3]);
        let s21 = make(&rec[3..5]);
        let s12 = make(&rec[5..7]);
        let s22 = make(&rec[7..9]);
        s.push([s11, s12, s21, s22]);
    }
    Ok(TwoPortTrace { f_ghz, s })
}

/// Load the S21 magnitude from either accepted trace format, deciding by the
/// file extension (`.s2p` and `.snp` parse as Touchstone, anything else as
/// two-column CSV).
pub fn load_s21_db(path: &Path) -> Result<DbTrace, TraceError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("s2p") | Some("snp") => Ok(load_touchstone(path)?.db_trace(SElem::S21)),
        _ => load_db_trace(path),
    }
}
