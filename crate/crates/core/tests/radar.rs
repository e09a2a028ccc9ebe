use std::f64::consts::PI;

use isac_ee::channel::{AngleGrid, Target, TargetScene, SPEED_OF_LIGHT};
use isac_ee::config::Scenario;
use isac_ee::linalg::{CMat, CVec, C64};
use isac_ee::radar::{
    beamform_and_divide, ca_cfar_detect, calibrate_cfar, dedup_across_angles, detect_scene, qam64, random_symbols,
    rd_map, rd_transform, read_rd_map, synthesize_from_tx, target_bins, transmit_grid, write_rd_map, CfarConfig,
    Detection, TxGrid, VectorGrid,
};
use isac_ee::system::{Architecture, PrecoderSet, SystemConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

fn cn(rng: &mut ChaCha20Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn setup1() -> (Scenario, SystemConfig) {
    let sc = Scenario::preset("setup1").unwrap();
    let cfg = sc.system(Architecture::Fd, None).unwrap();
    (sc, cfg)
}

fn random_precoder(rng: &mut ChaCha20Rng, cfg: &SystemConfig) -> PrecoderSet {
    let mats = (0..cfg.n_sub).map(|_| CMat::from_fn(cfg.n_tx, cfg.n_cols(), |_, _| cn(rng))).collect();
    PrecoderSet::new(mats, cfg.n_streams).unwrap()
}

fn on_grid_target(cfg: &SystemConfig, theta: f64, d: usize, v: i64, gain: C64) -> Target {
    Target {
        angle_rad: theta,
        range_m: d as f64 * cfg.delay_resolution() * SPEED_OF_LIGHT / 2.0,
        velocity_mps: v as f64 * cfg.doppler_resolution() * SPEED_OF_LIGHT / (2.0 * cfg.carrier_hz),
        rcs_gain: [gain.re, gain.im],
    }
}

#[test]
fn preset_targets_fall_on_expected_bins() {
    for (name, expect) in [("setup1", vec![(1, 10)]), ("setup2", vec![(4, 12), (19, 3)])] {
        let sc = Scenario::preset(name).unwrap();
        let cfg = sc.system(Architecture::Fd, None).unwrap();
        let scene = sc.scene(Architecture::Fd).unwrap();
        let bins: Vec<_> = scene.targets.iter().map(|t| target_bins(t, &cfg)).collect();
        assert_eq!(bins, expect, "{name}");
    }
}

#[test]
fn qam64_is_a_unit_energy_lattice() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let levels: Vec<f64> = (0..8).map(|i| (2 * i - 7) as f64 / 42f64.sqrt()).collect();
    // exact average over the 64 points
    let exact: f64 = levels.iter().flat_map(|a| levels.iter().map(move |b| a * a + b * b)).sum::<f64>() / 64.0;
    assert!((exact - 1.0).abs() < 1e-15);
    let n = 200_000;
    let mut energy = 0.0;
    for _ in 0..n {
        let s = qam64(&mut rng);
        assert!(levels.iter().any(|l| (l - s.re).abs() < 1e-15) && levels.iter().any(|l| (l - s.im).abs() < 1e-15));
        energy += s.norm_sqr();
    }
    assert!((energy / n as f64 - 1.0).abs() < 0.01);
}

#[test]
fn noiseless_synthesis_is_linear_in_the_scene() {
    let (_, cfg) = setup1();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let f = random_precoder(&mut rng, &cfg);
    let x = transmit_grid(&f, &random_symbols(&cfg, &mut rng)).unwrap();
    let a = Target { angle_rad: 0.3, range_m: 140.0, velocity_mps: 20.0, rcs_gain: [0.4, -0.1] };
    let b = Target { angle_rad: -0.7, range_m: 610.0, velocity_mps: -33.0, rcs_gain: [0.05, 0.2] };
    let none: Option<&mut ChaCha20Rng> = None;
    let ya = synthesize_from_tx(&x, &TargetScene::new(vec![a]), &cfg, none).unwrap();
    let yb = synthesize_from_tx::<ChaCha20Rng>(&x, &TargetScene::new(vec![b]), &cfg, None).unwrap();
    let yab = synthesize_from_tx::<ChaCha20Rng>(&x, &TargetScene::new(vec![a, b]), &cfg, None).unwrap();
    for ((p, q), r) in ya.cells().iter().zip(yb.cells()).zip(yab.cells()) {
        assert!((p + q - r).norm() < 1e-12);
    }
    let empty = synthesize_from_tx::<ChaCha20Rng>(&x, &TargetScene::default(), &cfg, None).unwrap();
    assert!(empty.cells().iter().all(|c| c.norm() == 0.0));
}

#[test]
fn single_target_echo_matches_direct_formula() {
    let (_, cfg) = setup1();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let f = random_precoder(&mut rng, &cfg);
    let x = transmit_grid(&f, &random_symbols(&cfg, &mut rng)).unwrap();
    let t = Target { angle_rad: 0.2, range_m: 90.0, velocity_mps: 12.0, rcs_gain: [0.3, 0.4] };
    let y = synthesize_from_tx::<ChaCha20Rng>(&x, &TargetScene::new(vec![t]), &cfg, None).unwrap();
    let tau = 2.0 * 90.0 / SPEED_OF_LIGHT;
    let fd = 2.0 * 12.0 * cfg.carrier_hz / SPEED_OF_LIGHT;
    let t_sym = (1.0 + cfg.cp_len as f64 / cfg.n_sub as f64) / cfg.subcarrier_spacing_hz;
    for k in 0..cfg.n_sub {
        let fk = cfg.carrier_hz + (k as f64 - cfg.n_sub as f64 / 2.0) * cfg.subcarrier_spacing_hz;
        let ula = |i: usize| C64::from_polar(1.0, -2.0 * PI * fk / cfg.carrier_hz * 0.5 * 0.2f64.sin() * i as f64);
        for l in 0..cfg.n_sym {
            let atx: C64 = (0..cfg.n_tx).map(|i| ula(i).conj() * x.get(k, l)[i]).sum();
            let phase = C64::from_polar(1.0, -2.0 * PI * k as f64 * cfg.subcarrier_spacing_hz * tau + 2.0 * PI * fd * l as f64 * t_sym);
            for r in 0..cfg.n_rx_sen {
                let expect = C64::new(0.3, 0.4) * phase * atx * ula(r);
                assert!((y.get(k, l)[r] - expect).norm() < 1e-10, "k {k} l {l} r {r}");
            }
        }
    }
}

#[test]
fn division_preserves_beamformed_power() {
    let (_, cfg) = setup1();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let f = random_precoder(&mut rng, &cfg);
    let x = transmit_grid(&f, &random_symbols(&cfg, &mut rng)).unwrap();
    let y = synthesize_from_tx(&x, &TargetScene::default(), &cfg, Some(&mut rng)).unwrap();
    for theta in [-0.9, 0.0, 0.47] {
        let d = beamform_and_divide(&y, &x, theta, &cfg).unwrap();
        let ytil: f64 = (0..cfg.n_sub)
            .flat_map(|k| (0..cfg.n_sym).map(move |l| (k, l)))
            .map(|(k, l)| cfg.rx_sen_steering(k, theta).dotc(y.get(k, l)).norm_sqr())
            .sum();
        let z: f64 = d.values.iter().map(|v| v.norm_sqr()).sum();
        assert_eq!(d.n_guarded(), 0);
        assert!((z - ytil).abs() < 1e-10 * ytil);
    }
}

#[test]
fn zero_beam_symbols_are_guarded() {
    let (_, cfg) = setup1();
    // transmit vectors orthogonal to the steering vector at broadside
    let mut cells = Vec::new();
    for _ in 0..cfg.n_sub * cfg.n_sym {
        let mut v = CVec::zeros(cfg.n_tx);
        v[0] = C64::new(1.0, 0.0);
        v[1] = C64::new(-1.0, 0.0);
        cells.push(v);
    }
    let x: TxGrid = VectorGrid::new(cfg.n_sub, cfg.n_sym, cells).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let y = synthesize_from_tx(&x, &TargetScene::default(), &cfg, Some(&mut rng)).unwrap();
    // at broadside the steering vector is all ones, so a^H x = 0 everywhere
    let d = beamform_and_divide(&y, &x, 0.0, &cfg).unwrap();
    assert_eq!(d.n_guarded(), cfg.n_sub * cfg.n_sym);
    assert!(d.values.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
    assert!(d.values.iter().zip(&d.guarded).all(|(v, g)| !g || v.norm() == 0.0));
}

#[test]
fn constant_modulus_beam_noise_variance() {
    // x = a_t s / N_t gives |a^H x| = 1, so each RD noise cell has variance N_rx sigma^2.
    let (_, cfg) = setup1();
    let theta = 0.35;
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let n_trials = 400;
    let mut emp = 0.0;
    for _ in 0..n_trials {
        let cells = (0..cfg.n_sub * cfg.n_sym)
            .map(|i| {
                let s = C64::from_polar(1.0, PI / 2.0 * rng.random_range(0..4) as f64 + PI / 4.0);
                cfg.tx_steering(i / cfg.n_sym, theta) * (s / C64::new(cfg.n_tx as f64, 0.0))
            })
            .collect();
        let x = VectorGrid::new(cfg.n_sub, cfg.n_sym, cells).unwrap();
        let y = synthesize_from_tx(&x, &TargetScene::default(), &cfg, Some(&mut rng)).unwrap();
        let map = rd_map(&y, &x, theta, &cfg).unwrap();
        let expect = cfg.n_rx_sen as f64 * cfg.noise_var_sen;
        assert!((map.predicted_noise_var - expect).abs() < 1e-9 * expect);
        emp += map.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / map.values.len() as f64;
    }
    let emp = emp / n_trials as f64;
    // 25600 unit-exponential cells after normalization: 3% is several standard errors
    assert!((emp / (cfg.n_rx_sen as f64 * cfg.noise_var_sen) - 1.0).abs() < 0.03, "{emp}");
}

#[test]
fn noiseless_on_grid_target_peaks_on_its_bins() {
    let (sc, cfg) = setup1();
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let f = random_precoder(&mut rng, &cfg);
    let grid = sc.angle_grid().unwrap();
    for (d, v) in [(0usize, 0i64), (1, 10), (3, -8), (2, 7)] {
        let theta = grid.angles()[11];
        let t = on_grid_target(&cfg, theta, d, v, C64::new(0.2, 0.1));
        let x = transmit_grid(&f, &random_symbols(&cfg, &mut rng)).unwrap();
        let y = synthesize_from_tx::<ChaCha20Rng>(&x, &TargetScene::new(vec![t]), &cfg, None).unwrap();
        let map = rd_map(&y, &x, theta, &cfg).unwrap();
        let expect = (d, v.rem_euclid(cfg.n_sym as i64) as usize);
        assert_eq!(map.peak(), expect);
        assert_eq!(target_bins(&t, &cfg), expect);
        let total: f64 = map.power().iter().sum();
        assert!(map.at(expect.0, expect.1).norm_sqr() > (1.0 - 1e-12) * total);
    }
}

#[test]
fn cfar_closed_form_on_iid_exponential_maps() {
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let cfar = CfarConfig::new(8, 2, 0.01).unwrap();
    let (rows, cols) = (32, 32);
    let maps = 300;
    let mut alarms = 0;
    for _ in 0..maps {
        let power: Vec<f64> = (0..rows * cols).map(|_| Exp1.sample(&mut rng)).collect();
        alarms += ca_cfar_detect(&power, rows, cols, &cfar).unwrap().len();
    }
    let cells = (maps * rows * cols) as f64;
    let p = alarms as f64 / cells;
    let sigma = (0.01 * 0.99 / cells).sqrt();
    assert!((p - 0.01).abs() < 5.0 * sigma, "p_fa {p}");
}

#[test]
fn cfar_finds_a_strong_cell_and_respects_override() {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let (rows, cols) = (16, 16);
    let mut power: Vec<f64> = (0..rows * cols).map(|_| Exp1.sample(&mut rng)).collect();
    power[5 * cols + 9] = 500.0;
    let cfar = CfarConfig::new(4, 1, 1e-4).unwrap();
    let hits = ca_cfar_detect(&power, rows, cols, &cfar).unwrap();
    assert!(hits.iter().any(|h| (h.delay_bin, h.doppler_bin) == (5, 9)));
    let strict = cfar.with_alpha(1e6).unwrap();
    assert!(ca_cfar_detect(&power, rows, cols, &strict).unwrap().is_empty());
    assert!(cfar.with_alpha(0.0).is_err());
    assert!(CfarConfig::new(0, 1, 0.1).is_err());
    assert!(CfarConfig::new(4, 1, 1.0).is_err());
}

#[test]
fn dedup_keeps_the_strongest_angle() {
    let det = |m: usize, d: usize, v: usize, p: f64| Detection { angle_index: m, angle: m as f64, delay_bin: d, doppler_bin: v, power: p };
    let out = dedup_across_angles(&[det(4, 1, 2, 3.0), det(2, 1, 2, 5.0), det(7, 1, 2, 5.0), det(3, 0, 0, 1.0)]);
    assert_eq!(out.len(), 2);
    let cell = out.iter().find(|d| (d.delay_bin, d.doppler_bin) == (1, 2)).unwrap();
    assert_eq!((cell.angle_index, cell.power), (2, 5.0));
    assert!(dedup_across_angles(&[]).is_empty());
}

#[test]
fn rd_export_round_trip() {
    let (_, cfg) = setup1();
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let f = random_precoder(&mut rng, &cfg);
    let x = transmit_grid(&f, &random_symbols(&cfg, &mut rng)).unwrap();
    let y = synthesize_from_tx(&x, &TargetScene::default(), &cfg, Some(&mut rng)).unwrap();
    let map = rd_map(&y, &x, 0.1, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (bin, json) = write_rd_map(&map, dir.path(), "rd").unwrap();
    assert_eq!(std::fs::metadata(bin).unwrap().len() as usize, 16 * cfg.n_sub * cfg.n_sym);
    assert_eq!(read_rd_map(&json).unwrap(), map);
}

#[test]
fn detection_is_seed_deterministic_and_finds_loud_targets() {
    let (sc, cfg) = setup1();
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let f = random_precoder(&mut rng, &cfg);
    let grid = sc.angle_grid().unwrap();
    let theta = grid.angles()[30];
    let scene = TargetScene::new(vec![on_grid_target(&cfg, theta, 2, 5, C64::new(3.0, 0.0))]);
    let cfar = sc.cfar(cfg.p_fa).unwrap();
    let a = detect_scene(&f, &scene, &grid, &cfar, &cfg, 99, 12).unwrap();
    let b = detect_scene(&f, &scene, &grid, &cfar, &cfg, 99, 12).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.p_d, Some(1.0));
    assert!(a.p_fa < 0.05);
    assert!(detect_scene(&f, &scene, &grid, &cfar, &cfg, 99, 0).is_err());
    assert!(AngleGrid::new(Vec::new(), 1e-3).is_err());
}

#[test]
fn calibration_hits_its_own_rate() {
    let (sc, cfg) = setup1();
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let f = random_precoder(&mut rng, &cfg);
    let grid = sc.angle_grid().unwrap();
    let cfar = sc.cfar(cfg.p_fa).unwrap();
    let cal = calibrate_cfar(&f, &grid, &cfar, &cfg, 5, 60).unwrap();
    assert_eq!(cal.cells, 60 * grid.len() * cfg.n_sub * cfg.n_sym);
    let applied = cal.apply(&cfar).unwrap();
    assert_eq!(applied.alpha_override, Some(cal.alpha));
    // the same trials reproduce the quantile
    let again = detect_scene(&f, &TargetScene::default(), &grid, &applied, &cfg, 5, 60).unwrap();
    let n = again.noise_cells as f64;
    assert!((again.p_fa - cfg.p_fa).abs() <= 1.0 / n + 1e-12, "{}", again.p_fa);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rd_transform_is_unitary_and_linear(seed in any::<u64>(), n in 1usize..40, m in 1usize..24, c in -3.0f64..3.0) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let a: Vec<C64> = (0..n * m).map(|_| cn(&mut rng)).collect();
        let b: Vec<C64> = (0..n * m).map(|_| cn(&mut rng)).collect();
        let ta = rd_transform(&a, n, m).unwrap();
        let tb = rd_transform(&b, n, m).unwrap();
        let ea: f64 = a.iter().map(|v| v.norm_sqr()).sum();
        let eta: f64 = ta.iter().map(|v| v.norm_sqr()).sum();
        prop_assert!((ea - eta).abs() <= 1e-10 * ea);
        let mix: Vec<C64> = a.iter().zip(&b).map(|(x, y)| x * c + y).collect();
        let tm = rd_transform(&mix, n, m).unwrap();
        for i in 0..n * m {
            prop_assert!((tm[i] - (ta[i] * c + tb[i])).norm() <= 1e-10 * (1.0 + tm[i].norm()));
        }
    }

    // A delay-Doppler tone maps to a single cell; modulating shifts the map.
    #[test]
    fn shift_theorem(seed in any::<u64>(), n in 1usize..33, m in 1usize..17, d in 0usize..33, v in 0usize..17) {
        let (d, v) = (d % n, v % m);
        let tone: Vec<C64> = (0..n * m)
            .map(|i| {
                let (k, l) = (i / m, i % m);
                C64::from_polar(1.0, -2.0 * PI * (k * d) as f64 / n as f64 + 2.0 * PI * (l * v) as f64 / m as f64)
            })
            .collect();
        let t = rd_transform(&tone, n, m).unwrap();
        let peak = ((n * m) as f64).sqrt();
        for (i, z) in t.iter().enumerate() {
            let expect = if i == d * m + v { peak } else { 0.0 };
            prop_assert!((z.norm() - expect).abs() < 1e-9 * peak);
        }

        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let z: Vec<C64> = (0..n * m).map(|_| cn(&mut rng)).collect();
        let base = rd_transform(&z, n, m).unwrap();
        let shifted: Vec<C64> = z.iter().zip(&tone).map(|(a, b)| a * b).collect();
        let ts = rd_transform(&shifted, n, m).unwrap();
        for r in 0..n {
            for c in 0..m {
                let src = ((r + n - d) % n) * m + (c + m - v) % m;
                prop_assert!((ts[r * m + c] - base[src]).norm() < 1e-9 * (1.0 + base[src].norm()));
            }
        }
    }
}
