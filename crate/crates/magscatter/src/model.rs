//! Physical parameter types and assembly of the coupled-mode matrices.
//!
//! A system is `N` cavity modes and `M` magnon modes behind a two-port
//! network. All user-facing numbers are linear frequencies: mode
//! frequencies in GHz, dissipation rates and coupling magnitudes in MHz.
//! Matrix assembly converts to angular units (rad/ns) so that the
//! scattering relation `S = C + D [-i w I - A]^{-1} B` holds with
//! `w = 2 pi f`.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::numerics::CMatrix;

/// Angular frequency (rad/ns) of a linear frequency in GHz.
#[inline]
pub fn angular_ghz(f_ghz: f64) -> f64 {
    TAU * f_ghz
}

/// Angular rate (rad/ns) of a linear rate in MHz.
#[inline]
pub fn angular_mhz(rate_mhz: f64) -> f64 {
    TAU * rate_mhz * 1e-3
}

/// One cavity mode: frequency, internal loss, and per-port external coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityMode {
    /// Mode frequency in GHz.
    #[serde(rename = "f_GHz")]
    pub f_ghz: f64,
    /// Internal dissipation rate in MHz.
    #[serde(rename = "gamma_int_MHz")]
    pub gamma_int_mhz: f64,
    /// External dissipation rate toward ports 0 and 1, in MHz.
    #[serde(rename = "gamma_ext_MHz")]
    pub gamma_ext_mhz: [f64; 2],
    /// External coupling phase at ports 0 and 1, in rad.
    #[serde(rename = "phi_ext_rad")]
    pub phi_ext_rad: [f64; 2],
}

/// Coupling of one magnon mode to one cavity mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnonCoupling {
    /// Coupling magnitude in MHz.
    #[serde(rename = "g_MHz")]
    pub g_mhz: f64,
    /// Internal phase in rad, in (-pi, pi].
    #[serde(rename = "theta_rad")]
    pub theta_rad: f64,
}

/// One magnon mode: field-to-frequency law, damping, and its couplings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnonMode {
    /// Gyromagnetic ratio in GHz per tesla.
    #[serde(rename = "gyro_GHz_per_T")]
    pub gyro_ghz_per_t: f64,
    /// Dimensionless Gilbert damping.
    pub alpha: f64,
    /// Optional fixed decay-rate override in MHz; when set it replaces the
    /// damping law.
    #[serde(rename = "k_m_MHz", default, skip_serializing_if = "Option::is_none")]
    pub k_m_mhz: Option<f64>,
    /// One coupling entry per cavity mode.
    pub couplings: Vec<MagnonCoupling>,
}

/// Which decay rates sit on the diagonal of the internal matrix `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DiagonalConvention {
    /// Internal plus all external rates (standard input-output bookkeeping;
    /// makes lossless-internal networks flux conserving).
    #[default]
    #[serde(rename = "total-decay")]
    TotalDecay,
    /// Only the internal rate (literal reading of the matrix as often
    /// displayed; retained for reproduction).
    #[serde(rename = "internal-only")]
    InternalOnly,
}

/// Scale factor applied to the off-diagonal coupling entries of `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CouplingScale {
    /// Entries `i g e^{+/- i theta}` exactly.
    #[default]
    #[serde(rename = "full")]
    Full,
    /// Entries scaled by 1/2 (rotating-wave Hamiltonian convention).
    #[serde(rename = "half")]
    Half,
}

/// Convention switches for matrix assembly and validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Conventions {
    #[serde(default)]
    pub diagonal: DiagonalConvention,
    #[serde(default)]
    pub coupling_scale: CouplingScale,
    /// When set, validation additionally requires the two port phases of
    /// every mode to differ by 0 or pi (mod 2 pi).
    #[serde(default)]
    pub symmetric_cavity: bool,
}

/// The full parameter set behind the scattering relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemModel {
    pub cavity_modes: Vec<CavityMode>,
    #[serde(default)]
    pub magnons: Vec<MagnonMode>,
    /// Port-to-port crosstalk in [0, 1]; 0 means no direct background path.
    #[serde(default)]
    pub xi: f64,
    #[serde(default)]
    pub conventions: Conventions,
}

/// A static-field sample point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldPoint {
    /// mu0 H in tesla.
    pub mu0_h_t: f64,
}

impl FieldPoint {
    pub fn new(mu0_h_t: f64) -> Result<Self, ModelError> {
        if mu0_h_t < 0.0 {
            return Err(ModelError::NegativeField(mu0_h_t));
        }
        Ok(Self { mu0_h_t })
    }
}

impl SystemModel {
    /// Number of cavity modes.
    pub fn n_cavity(&self) -> usize {
        self.cavity_modes.len()
    }

    /// Number of magnon modes.
    pub fn n_magnon(&self) -> usize {
        self.magnons.len()
    }

    /// Dimension of the internal matrix `A`.
    pub fn dim(&self) -> usize {
        self.n_cavity() + self.n_magnon()
    }

    /// Check every structural invariant of the parameter set.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.cavity_modes.is_empty() {
            return Err(ModelError::NoCavityModes);
        }
        for (u, mode) in self.cavity_modes.iter().enumerate() {
            if !(mode.f_ghz > 0.0) {
                return Err(ModelError::NonPositiveFrequency {
                    index: u,
                    value: mode.f_ghz,
                });
            }
            if mode.gamma_int_mhz < 0.0 {
                return Err(ModelError::NegativeRate {
                    index: u,
                    value: mode.gamma_int_mhz,
                });
            }
            for &g in &mode.gamma_ext_mhz {
                if g < 0.0 {
                    return Err(ModelError::NegativeRate { index: u, value: g });
                }
            }
            if self.conventions.symmetric_cavity {
                let delta = wrap_phase(mode.phi_ext_rad[1] - mode.phi_ext_rad[0]);
                if delta.abs() > 1e-9 && (delta.abs() - PI).abs() > 1e-9 {
                    return Err(ModelError::AsymmetricPortPhases { index: u, delta });
                }
            }
        }
        for (v, magnon) in self.magnons.iter().enumerate() {
            if !(magnon.gyro_ghz_per_t > 0.0) {
                return Err(ModelError::NonPositiveGyro {
                    index: v,
                    value: magnon.gyro_ghz_per_t,
                });
            }
            if magnon.alpha < 0.0 {
                return Err(ModelError::NegativeAlpha {
                    index: v,
                    value: magnon.alpha,
                });
            }
            if magnon.couplings.len() != self.n_cavity() {
                return Err(ModelError::CouplingCountMismatch {
                    index: v,
                    got: magnon.couplings.len(),
                    expected: self.n_cavity(),
                });
            }
            for c in &magnon.couplings {
                if c.g_mhz < 0.0 {
                    return Err(ModelError::NegativeCoupling {
                        index: v,
                        value: c.g_mhz,
                    });
                }
                if !(c.theta_rad > -PI - 1e-12 && c.theta_rad <= PI + 1e-12) {
                    return Err(ModelError::PhaseOutOfRange {
                        index: v,
                        value: c.theta_rad,
                    });
                }
            }
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return Err(ModelError::CrosstalkOutOfRange(self.xi));
        }
        Ok(())
    }

    /// Parse and validate a model definition file (JSON schema with keys
    /// `cavity_modes`, `magnons`, `xi`, `conventions`).
    pub fn from_json_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read '{}': {e}", path.display()))?;
        let model: SystemModel = serde_json::from_str(&text)
            .map_err(|e| format!("invalid model file '{}': {e}", path.display()))?;
        model
            .validate()
            .map_err(|e| format!("invalid model in '{}': {e}", path.display()))?;
        Ok(model)
    }

    /// A copy with every magnon removed (bare-cavity counterpart).
    pub fn without_magnons(&self) -> SystemModel {
        SystemModel {
            magnons: Vec::new(),
            ..self.clone()
        }
    }

    /// A copy with every coupling magnitude set to zero.
    pub fn with_zero_couplings(&self) -> SystemModel {
        let mut out = self.clone();
        for magnon in &mut out.magnons {
            for c in &mut magnon.couplings {
                c.g_mhz = 0.0;
            }
        }
        out
    }
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_phase(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    a
}

/// Internal phase accumulated by a mode at the magnetic sample, from the two
/// pre-integrated complex field integrals: `arg(Ix + i Iy)` in (-pi, pi].
pub fn internal_phase(ix: Complex64, iy: Complex64) -> Result<f64, ModelError> {
    if ix == Complex64::ZERO && iy == Complex64::ZERO {
        return Err(ModelError::DegeneratePhase);
    }
    let z = ix + Complex64::i() * iy;
    Ok(wrap_phase(z.arg()))
}

/// Magnon frequency at a static field: `f_m = gyro * mu0 H` (GHz), the
/// uniform-precession law for a sphere.
pub fn magnon_frequency(magnon: &MagnonMode, field: FieldPoint) -> f64 {
    magnon.gyro_ghz_per_t * field.mu0_h_t
}

/// Magnon decay rate in MHz: the fixed override when present, otherwise the
/// damping law `2 alpha f_m` (with `f_m` in MHz).
pub fn magnon_decay(magnon: &MagnonMode, f_m_ghz: f64) -> f64 {
    match magnon.k_m_mhz {
        Some(k) => k,
        None => 2.0 * magnon.alpha * (f_m_ghz * 1e3),
    }
}

/// Assemble the internal dynamics matrix `A` at a field point
/// ((N+M) x (N+M), angular units).
///
/// Cavity diagonal: `-i w_cu - gamma_u / 2` with `gamma_u` the internal rate
/// alone or the total rate depending on the diagonal convention. Magnon
/// diagonal: `-i w_m - k_m / 2`. Cavity-magnon off-diagonals:
/// `+i g e^{+i theta}` in the cavity row and `+i g e^{-i theta}` in the
/// magnon row (optionally scaled by 1/2). Cavity-cavity and magnon-magnon
/// off-diagonals are zero.
pub fn build_a(model: &SystemModel, field: FieldPoint) -> Result<CMatrix, ModelError> {
    model.validate()?;
    if field.mu0_h_t < 0.0 {
        return Err(ModelError::NegativeField(field.mu0_h_t));
    }
    let n = model.n_cavity();
    let dim = model.dim();
    let mut a = CMatrix::zeros(dim, dim);
    for (u, mode) in model.cavity_modes.iter().enumerate() {
        let gamma_mhz = match model.conventions.diagonal {
            DiagonalConvention::InternalOnly => mode.gamma_int_mhz,
            DiagonalConvention::TotalDecay => {
                mode.gamma_int_mhz + mode.gamma_ext_mhz[0] + mode.gamma_ext_mhz[1]
            }
        };
        a[(u, u)] = Complex64::new(
            -0.5 * angular_mhz(gamma_mhz),
            -angular_ghz(mode.f_ghz),
        );
    }
    let scale = match model.conventions.coupling_scale {
        CouplingScale::Full => 1.0,
        CouplingScale::Half => 0.5,
    };
    for (v, magnon) in model.magnons.iter().enumerate() {
        let row = n + v;
        let f_m = magnon_frequency(magnon, field);
        let k_m = magnon_decay(magnon, f_m);
        a[(row, row)] = Complex64::new(-0.5 * angular_mhz(k_m), -angular_ghz(f_m));
        for (u, c) in magnon.couplings.iter().enumerate() {
            let g = scale * angular_mhz(c.g_mhz);
            let phase = Complex64::from_polar(1.0, c.theta_rad);
            a[(u, row)] = Complex64::i() * g * phase;
            a[(row, u)] = Complex64::i() * g * phase.conj();
        }
    }
    Ok(a)
}

/// Assemble the port-coupling matrix `B` ((N+M) x 2, angular units).
///
/// Cavity row `u`, port `p`: `sqrt(gamma_up_ext) e^{i phi_up}`. Magnon rows
/// are zero (magnons couple to the ports only through the cavity modes).
pub fn build_b(model: &SystemModel) -> Result<CMatrix, ModelError> {
    model.validate()?;
    let mut b = CMatrix::zeros(model.dim(), 2);
    for (u, mode) in model.cavity_modes.iter().enumerate() {
        for p in 0..2 {
            b[(u, p)] = Complex64::from_polar(
                angular_mhz(mode.gamma_ext_mhz[p]).sqrt(),
                mode.phi_ext_rad[p],
            );
        }
    }
    Ok(b)
}

/// Assemble the background scattering matrix `C` (real 2x2):
/// `[[sqrt(1-xi), sqrt(xi)], [sqrt(xi), sqrt(1-xi)]]`.
pub fn build_c(xi: f64) -> Result<CMatrix, ModelError> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(ModelError::CrosstalkOutOfRange(xi));
    }
    let direct = Complex64::new((1.0 - xi).sqrt(), 0.0);
    let cross = Complex64::new(xi.sqrt(), 0.0);
    let mut c = CMatrix::zeros(2, 2);
    c[(0, 0)] = direct;
    c[(1, 1)] = direct;
    c[(0, 1)] = cross;
    c[(1, 0)] = cross;
    Ok(c)
}

/// Assemble `D = -C B^\dagger` (2 x (N+M)).
pub fn build_d(c: &CMatrix, b: &CMatrix) -> CMatrix {
    let bh = b.conjugate_transpose();
    let mut d = c.matmul(&bh);
    for entry in d.data_mut() {
        *entry = -*entry;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_phase_maps_into_half_open_interval() {
        assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(0.5) - 0.5).abs() < 1e-15);
    }
}
