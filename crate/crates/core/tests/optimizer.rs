use isac_ee::channel::{generate_channel, ChannelSet};
use isac_ee::config::Scenario;
use isac_ee::metrics::spectral_efficiency;
use isac_ee::optimizer::{
    design_precoder_given_selection, optimal_mu, pc_equivalent_fd, run_alg1, run_tradeoff, Design, OptimizerOptions,
    PowerModel,
};
use isac_ee::selection::{brute_force_search, greedy_search, random_selection};
use isac_ee::system::{min_beam_power, Architecture, SelectionMask, SystemConfig};
use proptest::prelude::*;

fn setup1(n_tx: Option<usize>) -> (Scenario, SystemConfig) {
    let sc = Scenario::preset("setup1").unwrap();
    let mut cfg = sc.system(Architecture::Fd, None).unwrap();
    if let Some(n) = n_tx {
        cfg.n_tx = n;
        cfg.n_rf = n;
    }
    (sc, cfg)
}

// Power recomputed from the design's own precoder and the configuration.
fn power_oracle(d: &Design, cfg: &SystemConfig) -> f64 {
    let radiated: f64 = d.precoder.mats().iter().map(|m| m.norm_squared()).sum();
    let chains = match d.model {
        PowerModel::Fd => d.precoder.row_norms().iter().filter(|r| **r > 0.0).count() as f64 * cfg.p_rf_w,
        PowerModel::PcEquivalent => {
            d.mask.count() as f64 * (cfg.p_rf_w + cfg.subarray_size() as f64 * cfg.p_ps_w)
        }
        PowerModel::FcEquivalent => d.mask.count() as f64 * (cfg.p_rf_w + cfg.n_tx as f64 * cfg.p_ps_w),
    };
    radiated / cfg.eta_pa + cfg.p_bb_w + chains
}

fn check_design(d: &Design, cfg: &SystemConfig, h: &ChannelSet) {
    assert!(d.precoder.frob_sq() <= cfg.p_tx_w * (1.0 + 1e-9), "power {}", d.precoder.frob_sq());
    let beam = min_beam_power(&d.precoder, &cfg.target_steering()).unwrap();
    assert!(beam >= cfg.p_th * (1.0 - 1e-6), "beam {beam} below {}", cfg.p_th);
    let rate = spectral_efficiency(h, &d.precoder, cfg.noise_var_comm).unwrap();
    assert!((rate - d.rate).abs() <= 1e-9 * rate.max(1.0));
    let p = power_oracle(d, cfg);
    assert!((p - d.power).abs() <= 1e-9 * p, "{p} vs {}", d.power);
    assert!((d.ee - rate / p).abs() <= 1e-9 * d.ee.max(1.0));
    let keep = d.model.keep_rows(&d.mask, cfg);
    for (i, r) in d.precoder.row_norms().iter().enumerate() {
        assert!(keep[i] || *r == 0.0, "row {i} of an inactive chain carries power");
    }
}

#[test]
fn designs_meet_every_constraint() {
    let (sc, cfg) = setup1(None);
    for seed in 0..3 {
        let h = generate_channel(&cfg, &sc.channel, seed).unwrap();
        let d = run_alg1(&cfg, &h, &sc.optimizer).unwrap();
        check_design(&d, &cfg, &h);
        assert!(d.mask.count() >= 1);
        assert!(d.trace.worst_relative_decrease() <= sc.optimizer.tol_obj);
    }
}

#[test]
fn pc_equivalent_switches_whole_subarrays() {
    let sc = Scenario::preset("setup1").unwrap();
    let cfg = sc.system(Architecture::Pc, None).unwrap();
    let h = generate_channel(&cfg, &sc.channel, 4).unwrap();
    let d = pc_equivalent_fd(&cfg, &h, &sc.optimizer).unwrap();
    assert_eq!(d.mask.len(), cfg.n_rf);
    check_design(&d, &cfg, &h);
}

#[test]
fn runs_are_deterministic() {
    let (sc, cfg) = setup1(None);
    let h = generate_channel(&cfg, &sc.channel, 9).unwrap();
    let a = run_alg1(&cfg, &h, &sc.optimizer).unwrap();
    let b = run_alg1(&cfg, &h, &sc.optimizer).unwrap();
    assert_eq!(a.precoder, b.precoder);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn unreachable_beam_floor_is_infeasible() {
    let (sc, cfg) = setup1(None);
    let h = generate_channel(&cfg, &sc.channel, 1).unwrap();
    // the beam power toward any angle is at most N_t P_tx
    let cfg = cfg.with_p_th(cfg.n_tx as f64 * cfg.p_tx_w * 1.5);
    let err = run_alg1(&cfg, &h, &sc.optimizer).unwrap_err();
    assert!(err.is_infeasible(), "{err}");
}

#[test]
fn zero_channel_falls_back_to_minimum_power() {
    let (sc, cfg) = setup1(None);
    let h = generate_channel(&cfg, &sc.channel, 1).unwrap().scaled(0.0);
    let d = run_alg1(&cfg, &h, &sc.optimizer).unwrap();
    assert_eq!(d.rate, 0.0);
    check_design(&d, &cfg, &h);
    // |a^H F_k|^2 <= n ||F_k||^2 over n active rows, so each subcarrier radiates at least P_th / n
    let n = d.mask.count() as f64;
    let floor = cfg.n_sub as f64 * cfg.p_th / n;
    let radiated = d.precoder.frob_sq();
    assert!(radiated >= floor * (1.0 - 1e-6) && radiated <= floor * 1.05, "{radiated} vs {floor}");
}

#[test]
fn selection_ordering_on_small_arrays() {
    let (sc, cfg) = setup1(Some(5));
    let opts = OptimizerOptions::default();
    for seed in 0..3u64 {
        let h = generate_channel(&cfg, &sc.channel, 50 + seed).unwrap();
        let brute = brute_force_search(&cfg, &h, PowerModel::Fd, &opts).unwrap();
        assert_eq!(brute.evaluations.len(), (1 << cfg.n_tx) - 1);
        let best = brute.evaluations.iter().filter_map(|e| e.ee).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(brute.design.ee, best);
        let all_on = design_precoder_given_selection(&SelectionMask::all_on(cfg.n_tx), &cfg, &h, PowerModel::Fd, &opts).unwrap();
        for g in 0..3 {
            let greedy = greedy_search(&cfg, &h, PowerModel::Fd, &opts, g).unwrap();
            assert!(greedy.design.ee <= brute.design.ee);
            assert!(greedy.design.ee >= all_on.ee);
        }
        let random = random_selection(&cfg, &h, PowerModel::Fd, &opts, seed).unwrap();
        assert!(random.design.ee <= brute.design.ee);
        check_design(&brute.design, &cfg, &h);
    }
}

#[test]
fn tradeoff_weights_order_rate_and_power() {
    let (sc, cfg) = setup1(None);
    let h = generate_channel(&cfg, &sc.channel, 3).unwrap();
    let rate_only = run_tradeoff(&cfg, &h, 1.0, 0.0, &sc.optimizer).unwrap();
    let power_heavy = run_tradeoff(&cfg, &h, 1.0, 4.0, &sc.optimizer).unwrap();
    let power_only = run_tradeoff(&cfg, &h, 0.0, 1.0, &sc.optimizer).unwrap();
    check_design(&rate_only, &cfg, &h);
    check_design(&power_only, &cfg, &h);
    assert!(rate_only.rate >= power_heavy.rate);
    assert!(power_heavy.power >= power_only.power);
    assert!(run_tradeoff(&cfg, &h, 0.0, 0.0, &sc.optimizer).is_err());
    assert!(run_tradeoff(&cfg, &h, -1.0, 1.0, &sc.optimizer).is_err());
}

#[test]
fn mismatched_channel_is_rejected() {
    let (sc, cfg) = setup1(None);
    let (_, small) = setup1(Some(4));
    let h = generate_channel(&small, &sc.channel, 0).unwrap();
    assert!(run_alg1(&cfg, &h, &sc.optimizer).is_err());
    let mut bad = sc.optimizer.clone();
    bad.r_inner = 0;
    assert!(bad.validate().is_err());
}

proptest! {
    // mu* maximizes 2 mu sqrt(R) - mu^2 P over a dense scan
    #[test]
    fn optimal_mu_beats_a_scan(rate in 0.0f64..50.0, p in 0.01f64..30.0) {
        let mu = optimal_mu(rate, p).unwrap();
        let q = |m: f64| 2.0 * m * rate.sqrt() - m * m * p;
        let best = (0..=4000).map(|i| q(i as f64 * 4.0 * mu.max(1e-3) / 4000.0)).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(q(mu) >= best - 1e-12 * best.abs().max(1.0));
        // at the optimum the quadratic transform equals R / P
        prop_assert!((q(mu) - rate / p).abs() <= 1e-10 * (rate / p).max(1.0));
    }
}
