//! The reference four-mode two-port cavity configuration that ships with
//! the fixtures: dissipation rates, port phases, the intrinsic
//! coupling-phase lattice, magnon settings, and the displacement table.
//! Builders here are the in-code twins of the JSON/CSV files under
//! `fixtures/`.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::model::{
    CavityMode, Conventions, MagnonCoupling, MagnonMode, SystemModel,
};
use crate::possweep::{
    DissipationSet, MagnonSettings, ModeParams, PositionRow, PositionTable,
};

/// Gyromagnetic ratio of the magnon spheres, GHz per tesla.
pub const GYRO_GHZ_PER_T: f64 = 28.74;
/// Gilbert damping constant (used when no fixed linewidth is set).
pub const GILBERT_ALPHA: f64 = 4e-4;
/// Fixed magnon linewidth override, MHz.
pub const MAGNON_LINEWIDTH_MHZ: f64 = 10.0;

/// Unloaded mode frequencies, GHz.
pub const MODE_F_GHZ: [f64; 4] = [3.78, 7.78, 15.22, 16.08];
/// Internal dissipation rates, MHz.
pub const GAMMA_INT_MHZ: [f64; 4] = [3.4, 20.2, 38.1, 40.2];
/// External dissipation rates (equal at both ports), MHz.
pub const GAMMA_EXT_MHZ: [f64; 4] = [1.186, 0.2334, 7.56, 8.89];
/// Port-0 external phases, rad.
pub const PHI_PORT0_RAD: [f64; 4] = [-FRAC_PI_2, -FRAC_PI_2, -FRAC_PI_2, -FRAC_PI_2];
/// Port-1 external phases, rad: alternating, which is what makes the
/// transmission antiresonances and their phase jumps interleave.
pub const PHI_PORT1_RAD: [f64; 4] = [FRAC_PI_2, -FRAC_PI_2, FRAC_PI_2, -FRAC_PI_2];
/// Idealized coupling-phase lattice, rad: modes 0 and 2 real-coupled with
/// opposite signs, modes 1 and 3 imaginary-coupled with opposite signs.
pub const THETA_LATTICE_RAD: [f64; 4] = [0.0, -FRAC_PI_2, PI, FRAC_PI_2];

fn reference_modes(f_ghz: [f64; 4]) -> Vec<CavityMode> {
    (0..4)
        .map(|u| CavityMode {
            f_ghz: f_ghz[u],
            gamma_int_mhz: GAMMA_INT_MHZ[u],
            gamma_ext_mhz: [GAMMA_EXT_MHZ[u], GAMMA_EXT_MHZ[u]],
            phi_ext_rad: [PHI_PORT0_RAD[u], PHI_PORT1_RAD[u]],
        })
        .collect()
}

/// The reference cavity with no magnon loaded.
pub fn empty_cavity() -> SystemModel {
    SystemModel {
        cavity_modes: reference_modes(MODE_F_GHZ),
        magnons: Vec::new(),
        xi: 0.0,
        conventions: Conventions::default(),
    }
}

/// The reference cavity with one magnon sphere: per-mode coupling
/// amplitudes and phases as given, everything else from the reference
/// configuration.
pub fn loaded_cavity(
    f_ghz: [f64; 4],
    g_mhz: [f64; 4],
    theta_rad: [f64; 4],
) -> SystemModel {
    SystemModel {
        cavity_modes: reference_modes(f_ghz),
        magnons: vec![MagnonMode {
            gyro_ghz_per_t: GYRO_GHZ_PER_T,
            alpha: GILBERT_ALPHA,
            k_m_mhz: Some(MAGNON_LINEWIDTH_MHZ),
            couplings: (0..4)
                .map(|u| MagnonCoupling {
                    g_mhz: g_mhz[u],
                    theta_rad: theta_rad[u],
                })
                .collect(),
        }],
        xi: 0.0,
        conventions: Conventions::default(),
    }
}

/// Template for the suppression search: unloaded mode frequencies, the
/// idealized coupling-phase lattice, and zero coupling amplitudes (the
/// search normalizes amplitudes itself).
pub fn suppression_template() -> SystemModel {
    loaded_cavity(MODE_F_GHZ, [0.0; 4], THETA_LATTICE_RAD)
}

/// The reference dissipation rates as a possweep input.
pub fn dissipation() -> DissipationSet {
    DissipationSet {
        gamma_int_mhz: GAMMA_INT_MHZ.to_vec(),
        gamma_ext_mhz: GAMMA_EXT_MHZ.to_vec(),
    }
}

/// The reference magnon settings as a possweep input.
pub fn magnon_settings() -> MagnonSettings {
    MagnonSettings {
        gyro_ghz_per_t: GYRO_GHZ_PER_T,
        alpha: GILBERT_ALPHA,
        k_m_mhz: Some(MAGNON_LINEWIDTH_MHZ),
    }
}

/// Displacement rows: `(y_mm, f_GHz x4, g_MHz x4, theta_rad x4)`, sampled
/// from the fitted coupling parameters along the sphere-position axis.
/// Port phases are position-independent.
#[allow(clippy::type_complexity)]
pub fn displacement_rows() -> [(f64, [f64; 4], [f64; 4], [f64; 4]); 8] {
    [
        (
            -11.40,
            [3.772, 7.775, 15.221, 16.076],
            [27.872, 0.733, 86.925, 7.343],
            [0.000, -1.552, 3.140, 1.183],
        ),
        (
            -10.00,
            [3.772, 7.776, 15.218, 16.076],
            [31.561, 2.984, 81.438, 25.717],
            [0.000, -1.563, 3.134, 1.474],
        ),
        (
            -8.33,
            [3.773, 7.776, 15.214, 16.076],
            [37.469, 7.374, 51.703, 51.914],
            [0.000, -1.571, 3.117, 1.540],
        ),
        (
            -8.00,
            [3.771, 7.774, 15.213, 16.076],
            [38.939, 8.626, 42.799, 57.073],
            [0.000, -1.571, 3.108, 1.548],
        ),
        (
            -6.75,
            [3.772, 7.776, 15.212, 16.076],
            [46.171, 15.715, 1.866, 75.036],
            [0.000, -1.571, 1.626, 1.572],
        ),
        (
            -6.00,
            [3.773, 7.776, 15.212, 16.076],
            [52.479, 23.345, 32.403, 82.726],
            [0.000, -1.571, 0.064, 1.584],
        ),
        (
            -5.08,
            [3.773, 7.776, 15.214, 16.076],
            [64.055, 41.691, 80.723, 85.710],
            [0.000, -1.571, 0.027, 1.600],
        ),
        (
            -3.60,
            [3.771, 7.774, 15.219, 16.076],
            [97.922, 188.450, 183.590, 28.728],
            [0.000, -1.571, 0.004, 1.759],
        ),
    ]
}

/// The loaded-cavity model at one displacement node.
pub fn loaded_cavity_at_node(y_mm: f64) -> Option<SystemModel> {
    displacement_rows()
        .into_iter()
        .find(|(y, _, _, _)| *y == y_mm)
        .map(|(_, f, g, theta)| loaded_cavity(f, g, theta))
}

/// The displacement table as a possweep input (the in-code twin of
/// `fixtures/position_table.csv`).
pub fn displacement_table() -> PositionTable {
    let rows = displacement_rows()
        .into_iter()
        .map(|(y, f, g, theta)| PositionRow {
            y_mm: y,
            modes: (0..4)
                .map(|u| ModeParams {
                    f_ghz: f[u],
                    g_mhz: g[u],
                    phi0_rad: PHI_PORT0_RAD[u],
                    phi1_rad: PHI_PORT1_RAD[u],
                    theta_rad: theta[u],
                })
                .collect(),
        })
        .collect();
    PositionTable::new(rows).expect("reference displacement table is well-formed")
}

/// Two identical magnon spheres, both carrying the couplings of the
/// `y = -6.00 mm` node: the configuration whose hybridized antiresonance
/// shows a resolvable two-branch avoided crossing.
pub fn two_sphere() -> SystemModel {
    let (_, f, g, theta) = displacement_rows()[5];
    let mut model = loaded_cavity(f, g, theta);
    let sphere = model.magnons[0].clone();
    model.magnons.push(sphere);
    model
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builders_validate() {
        empty_cavity().validate().unwrap();
        suppression_template().validate().unwrap();
        two_sphere().validate().unwrap();
        for (_, f, g, theta) in displacement_rows() {
            loaded_cavity(f, g, theta).validate().unwrap();
        }
        assert_eq!(displacement_table().n_modes(), 4);
    }
}
