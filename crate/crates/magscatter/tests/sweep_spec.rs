//! Grid-sweep contract tests: phase unwrapping, reciprocity and isolation,
//! parallel/sequential parity, singularity flagging, and export stability.

use std::f64::consts::PI;

use magscatter::model::{CavityMode, Conventions, FieldPoint, MagnonCoupling, MagnonMode, SystemModel};
use magscatter::sweep::{
    export_csv, export_layers_csv, export_metadata, linspace, model_hash, run_sweep_seq,
    unwrap_phase, Grid, SElem,
};
use magscatter::reference;

fn lcg(state: &mut u64) -> f64 {
    *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (*state >> 11) as f64 / (1u64 << 53) as f64
}

/// A random two-mode, one-magnon model whose couplings and port phases are
/// restricted to {0, pi}: such a system is reciprocal (S21 = S12 exactly).
fn random_reciprocal_model(seed: &mut u64) -> SystemModel {
    let binary_phase = |s: &mut u64| if lcg(s) < 0.5 { 0.0 } else { PI };
    let modes = (0..2)
        .map(|u| {
            let gamma = 0.5 + 4.0 * lcg(seed);
            CavityMode {
                f_ghz: 9.0 + u as f64 + lcg(seed),
                gamma_int_mhz: 1.0 + 10.0 * lcg(seed),
                gamma_ext_mhz: [gamma, gamma],
                phi_ext_rad: [binary_phase(seed), binary_phase(seed)],
            }
        })
        .collect();
    SystemModel {
        cavity_modes: modes,
        magnons: vec![MagnonMode {
            gyro_ghz_per_t: 28.74,
            alpha: 4e-4,
            k_m_mhz: Some(5.0 + 10.0 * lcg(seed)),
            couplings: (0..2)
                .map(|_| MagnonCoupling {
                    g_mhz: 30.0 * lcg(seed),
                    theta_rad: binary_phase(seed),
                })
                .collect(),
        }],
        xi: 0.0,
        conventions: Conventions::default(),
    }
}

#[test]
fn unwrap_recovers_a_linear_phase_ramp() {
    let n = 400;
    let truth: Vec<f64> = (0..n).map(|i| -1.0 + 0.11 * i as f64).collect();
    let wrapped: Vec<f64> = truth
        .iter()
        .map(|&p| magscatter::model::wrap_phase(p))
        .collect();
    let unwrapped = unwrap_phase(&wrapped).unwrap();
    // Unwrapping preserves the first sample and removes every 2 pi seam.
    for (u, t) in unwrapped.iter().zip(&truth) {
        assert!((u - t).abs() < 1e-9, "unwrapped {u} vs truth {t}");
    }
    assert!(unwrap_phase(&[1.0]).is_err());
}

#[test]
fn unwrap_skips_nan_gaps_without_losing_the_anchor() {
    let wrapped = [0.0, 0.5, f64::NAN, 1.5, 2.0];
    let out = unwrap_phase(&wrapped).unwrap();
    assert!(out[2].is_nan());
    assert!((out[3] - 1.5).abs() < 1e-12);
    assert!((out[4] - 2.0).abs() < 1e-12);
}

#[test]
fn binary_phase_models_are_reciprocal() {
    let grid = Grid::uniform(8.5, 11.5, 151, 0.30, 0.45, 7).unwrap();
    let mut seed = 0xabcdef12u64;
    for case in 0..10 {
        let model = random_reciprocal_model(&mut seed);
        let map = run_sweep_seq(&model, &grid).unwrap();
        assert!(!map.any_singular());
        let worst = map
            .iso_db()
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v.abs()));
        assert!(worst < 1e-10, "case {case}: max |isolation| = {worst} dB");
    }
}

#[test]
fn swapping_the_ports_negates_the_isolation() {
    // A deliberately nonreciprocal model: unequal port phases off {0, pi}.
    let model = reference::loaded_cavity_at_node(-10.0).unwrap();
    let swapped = SystemModel {
        cavity_modes: model
            .cavity_modes
            .iter()
            .map(|m| CavityMode {
                f_ghz: m.f_ghz,
                gamma_int_mhz: m.gamma_int_mhz,
                gamma_ext_mhz: [m.gamma_ext_mhz[1], m.gamma_ext_mhz[0]],
                phi_ext_rad: [m.phi_ext_rad[1], m.phi_ext_rad[0]],
            })
            .collect(),
        ..model.clone()
    };
    let grid = Grid::uniform(11.0, 12.0, 101, 0.38, 0.42, 5).unwrap();
    let iso = run_sweep_seq(&model, &grid).unwrap().iso_db();
    let iso_swapped = run_sweep_seq(&swapped, &grid).unwrap().iso_db();
    let worst = iso
        .iter()
        .zip(&iso_swapped)
        .fold(0.0f64, |acc, (a, b)| acc.max((a + b).abs()));
    assert!(worst < 1e-9, "port swap should negate isolation, worst {worst}");
    // And the model is actually nonreciprocal on this window.
    let peak = iso.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    assert!(peak > 1.0, "expected visible nonreciprocity, got {peak} dB");
}

#[cfg(feature = "parallel")]
#[test]
fn parallel_and_sequential_sweeps_agree_bitwise() {
    use magscatter::sweep::run_sweep_par;
    let model = reference::loaded_cavity_at_node(-6.0).unwrap();
    let grid = Grid::uniform(10.6, 12.4, 101, 0.36, 0.44, 9).unwrap();
    let seq = run_sweep_seq(&model, &grid).unwrap();
    let par = run_sweep_par(&model, &grid).unwrap();
    for hi in 0..grid.nh() {
        for fi in 0..grid.nf() {
            let a = seq.at(hi, fi);
            let b = par.at(hi, fi);
            for k in 0..4 {
                assert!(
                    a[k].re.to_bits() == b[k].re.to_bits()
                        && a[k].im.to_bits() == b[k].im.to_bits(),
                    "bitwise mismatch at ({hi},{fi}) element {k}"
                );
            }
            assert_eq!(seq.is_singular(hi, fi), par.is_singular(hi, fi));
        }
    }
}

#[test]
fn lossless_resonance_is_flagged_singular_not_crashed() {
    // Under the internal-only decay convention a mode with zero internal
    // loss has a purely imaginary diagonal: at f = f_c the response matrix
    // is exactly singular while the ports stay coupled.
    let model = SystemModel {
        cavity_modes: vec![CavityMode {
            f_ghz: 10.0,
            gamma_int_mhz: 0.0,
            gamma_ext_mhz: [2.0, 3.0],
            phi_ext_rad: [0.0, 0.0],
        }],
        magnons: Vec::new(),
        xi: 0.0,
        conventions: Conventions {
            diagonal: magscatter::model::DiagonalConvention::InternalOnly,
            ..Conventions::default()
        },
    };
    // Grid that hits 10.0 exactly.
    let grid = Grid::new(linspace(9.0, 11.0, 5), vec![0.0]).unwrap();
    let map = run_sweep_seq(&model, &grid).unwrap();
    assert!(map.any_singular());
    assert!(map.is_singular(0, 2), "f = 10.0 is grid index 2");
    let mags = map.mag_db(SElem::S21);
    assert!(mags[2].is_nan());
    assert!(mags[0].is_finite() && mags[4].is_finite());
}

#[test]
fn exports_are_byte_stable_and_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let model = reference::empty_cavity();
    let grid = Grid::uniform(10.0, 10.1, 3, 0.38, 0.40, 2).unwrap();
    let map = run_sweep_seq(&model, &grid).unwrap();

    let raw = dir.path().join("map.csv");
    export_csv(&map, &raw).unwrap();
    let text = std::fs::read_to_string(&raw).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "f_GHz,mu0H_T,re_S11,im_S11,re_S12,im_S12,re_S21,im_S21,re_S22,im_S22"
    );
    let first = lines.next().unwrap();
    assert!(first.starts_with("10.000000000,0.380000000,"), "line: {first}");
    assert_eq!(text.lines().count(), 1 + 3 * 2);
    // Field-major ordering: the second row stays at the same field value.
    assert!(text.lines().nth(2).unwrap().starts_with("10.050000000,0.380000000,"));

    let layers = dir.path().join("layers.csv");
    export_layers_csv(&map, &layers).unwrap();
    let text2 = std::fs::read_to_string(&layers).unwrap();
    assert_eq!(
        text2.lines().next().unwrap(),
        "f_GHz,mu0H_T,s21_dB,s12_dB,iso_dB,phi21_rad"
    );
    assert_eq!(text2.lines().count(), 1 + 3 * 2);

    // Determinism: a second run writes byte-identical data files.
    let raw2 = dir.path().join("map2.csv");
    export_csv(&run_sweep_seq(&model, &grid).unwrap(), &raw2).unwrap();
    assert_eq!(std::fs::read(&raw).unwrap(), std::fs::read(&raw2).unwrap());
}

#[test]
fn model_hash_is_stable_and_parameter_sensitive() {
    let a = reference::loaded_cavity_at_node(-10.0).unwrap();
    let h1 = model_hash(&a);
    let h2 = model_hash(&a.clone());
    assert_eq!(h1, h2);
    assert!(h1.starts_with("fnv1a64:") && h1.len() == "fnv1a64:".len() + 16);
    let mut b = a.clone();
    b.cavity_modes[0].gamma_int_mhz += 1e-9;
    assert_ne!(model_hash(&b), h1);
}

#[test]
fn metadata_sidecar_carries_the_run_description() {
    let dir = tempfile::tempdir().unwrap();
    let model = reference::loaded_cavity_at_node(-10.0).unwrap();
    let grid = Grid::uniform(11.0, 12.0, 11, 0.38, 0.42, 3).unwrap();
    let map = run_sweep_seq(&model, &grid).unwrap();
    let path = dir.path().join("map.meta.json");
    export_metadata(&model, &map, &path).unwrap();
    let value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(value["model_hash"], serde_json::json!(model_hash(&model)));
    assert_eq!(value["n_f"], serde_json::json!(11));
    assert_eq!(value["n_h"], serde_json::json!(3));
    assert_eq!(value["f_ghz_lo"], serde_json::json!(11.0));
    assert_eq!(value["mu0_h_t_hi"], serde_json::json!(0.42));
    assert_eq!(value["singular_points"], serde_json::json!(0));
    assert!(value["timestamp_unix_s"].as_u64().is_some());
    assert!(value["conventions"].is_object());
}

#[test]
fn grid_construction_rejects_bad_axes() {
    assert!(Grid::new(vec![], vec![0.0]).is_err());
    assert!(Grid::new(vec![1.0, 1.0], vec![0.0]).is_err());
    assert!(Grid::new(vec![2.0, 1.0], vec![0.0]).is_err());
    assert!(Grid::new(vec![1.0, 2.0], vec![]).is_err());
    assert!(Grid::uniform(1.0, 2.0, 5, 0.4, 0.3, 2).is_err());
    let g = Grid::single_field(1.0, 2.0, 5, 0.4).unwrap();
    assert_eq!(g.nh(), 1);
    assert_eq!(g.nf(), 5);
    // FieldPoint still guards negative fields at evaluation time.
    assert!(FieldPoint::new(-0.1).is_err());
}
