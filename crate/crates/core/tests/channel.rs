use std::f64::consts::PI;

use isac_ee::channel::{channel_from_paths, generate_channel, steering_vector, ClusterParams, PathComponent};
use isac_ee::config::Scenario;
use isac_ee::harness::{channel_for_trial, derive_seed, Purpose};
use isac_ee::linalg::C64;
use isac_ee::system::{Architecture, SystemConfig};
use proptest::prelude::*;

proptest! {
    // half-wavelength ULA at the carrier: a_n = exp(-j pi n sin(theta))
    #[test]
    fn steering_matches_the_textbook_ula(theta in -1.5f64..1.5, n in 1usize..24) {
        let a = steering_vector(28e9, 28e9, theta, n, 0.5).unwrap();
        for (i, z) in a.iter().enumerate() {
            let expect = C64::new(0.0, -PI * i as f64 * theta.sin()).exp();
            prop_assert!((z - expect).norm() < 1e-12);
        }
    }

    // off-carrier responses scale the phase progression by f / f_c
    #[test]
    fn squint_scales_the_phase(theta in -1.2f64..1.2, ratio in 0.9f64..1.1) {
        let a = steering_vector(ratio * 73e9, 73e9, theta, 6, 0.5).unwrap();
        let expect = -PI * ratio * theta.sin();
        let step = (a[1] * a[0].conj()).arg();
        prop_assert!((C64::from_polar(1.0, step) - C64::from_polar(1.0, expect)).norm() < 1e-12);
    }
}

#[test]
fn delayed_path_rotates_across_subcarriers() {
    let cfg = SystemConfig::setup1_fd();
    let tau = 37e-9;
    let path = PathComponent { gain: C64::new(0.4, -0.3), aod_rad: 0.2, aoa_rad: -0.5, delay_s: tau };
    let h = channel_from_paths(&cfg, &vec![vec![path]; cfg.n_users]).unwrap();
    for k in 0..cfg.n_sub {
        let phase = C64::from_polar(1.0, -2.0 * PI * k as f64 * cfg.subcarrier_spacing_hz * tau);
        assert!((h.get(k, 0) - h.get(0, 0) * phase).norm() < 1e-12);
    }
    // the outer product of unit-modulus responses has Frobenius norm |g| sqrt(N_r N_t)
    let expect = 0.5 * ((cfg.n_rx * cfg.n_tx) as f64).sqrt();
    assert!((h.get(0, 0).norm() - expect).abs() < 1e-12);
}

#[test]
fn average_channel_energy_is_array_size() {
    let cfg = SystemConfig::setup1_fd();
    let params = ClusterParams::default();
    let draws: Vec<f64> = (0..400)
        .map(|s| {
            let h = generate_channel(&cfg, &params, s).unwrap();
            h.get(0, 0).norm_squared()
        })
        .collect();
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let expect = (cfg.n_rx * cfg.n_tx) as f64;
    assert!((mean - expect).abs() <= 5.0 * sd / n.sqrt(), "mean {mean}, expected {expect}");
}

#[test]
fn trial_channels_are_reproducible_and_independent() {
    let sc = Scenario::preset("setup1").unwrap();
    let cfg = sc.system(Architecture::Fd, None).unwrap();
    assert_eq!(channel_for_trial(&sc, &cfg, 7, 3).unwrap(), channel_for_trial(&sc, &cfg, 7, 3).unwrap());
    assert_ne!(channel_for_trial(&sc, &cfg, 7, 3).unwrap(), channel_for_trial(&sc, &cfg, 7, 4).unwrap());
    assert_ne!(channel_for_trial(&sc, &cfg, 7, 3).unwrap(), channel_for_trial(&sc, &cfg, 8, 3).unwrap());
    let mut seeds: Vec<u64> = (0..50)
        .flat_map(|t| [Purpose::Channel, Purpose::Sensing, Purpose::Search, Purpose::Calibration].map(|p| derive_seed(1, t, p)))
        .collect();
    seeds.sort_unstable();
    seeds.dedup();
    assert_eq!(seeds.len(), 200);
}

#[test]
fn scenario_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["setup1", "setup2"] {
        let sc = Scenario::preset(name).unwrap();
        let path = dir.path().join(format!("{name}.toml"));
        std::fs::write(&path, sc.to_toml_string().unwrap()).unwrap();
        assert_eq!(Scenario::load(&path).unwrap(), sc);
    }
    assert!(Scenario::load(&dir.path().join("missing.toml")).is_err());
    let broken = dir.path().join("broken.toml");
    std::fs::write(&broken, "name = \"x\"\n[system]\nn_rx = \"two\"\n").unwrap();
    assert!(Scenario::load(&broken).is_err());
}
