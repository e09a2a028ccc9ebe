use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cfar::{ca_cfar_detect, cfar_ratios, CfarConfig};
use super::process::{rd_map, RdMap};
use super::synth::{random_symbols, synthesize_from_tx, transmit_grid};
use crate::channel::{AngleGrid, Target, TargetScene};
use crate::error::{IsacError, Result};
use crate::system::{PrecoderSet, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub angle_index: usize,
    pub angle: f64,
    pub delay_bin: usize,
    pub doppler_bin: usize,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub trial: usize,
    /// Detections after keeping the strongest angle per delay-Doppler cell.
    pub detections: Vec<Detection>,
    /// One flag per scene target.
    pub hits: Vec<bool>,
    /// Threshold crossings away from every target, counted per angle map.
    pub false_alarms: usize,
    pub noise_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingOutcome {
    pub trials: usize,
    pub hits: usize,
    pub targets: usize,
    /// Absent for an empty scene.
    pub p_d: Option<f64>,
    pub false_alarms: usize,
    pub noise_cells: usize,
    pub p_fa: f64,
    pub reports: Vec<DetectionReport>,
}

/// Delay and Doppler bins a target falls on, wrapped onto the grid.
pub fn target_bins(t: &Target, cfg: &SystemConfig) -> (usize, usize) {
    let d = (t.delay_s() / cfg.delay_resolution()).round() as i64;
    let v = (t.doppler_hz(cfg.carrier_hz) / cfg.doppler_resolution()).round() as i64;
    (d.rem_euclid(cfg.n_sub as i64) as usize, v.rem_euclid(cfg.n_sym as i64) as usize)
}

fn circ_dist(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b) % n;
    d.min(n - d)
}

fn near(cell: (usize, usize), bins: (usize, usize), cfg: &SystemConfig) -> bool {
    circ_dist(cell.0, bins.0, cfg.n_sub) <= 1 && circ_dist(cell.1, bins.1, cfg.n_sym) <= 1
}

/// Keeps, for each delay-Doppler cell, the detection with the largest power.
/// Equal powers go to the smaller angle index.
pub fn dedup_across_angles(detections: &[Detection]) -> Vec<Detection> {
    let mut best: BTreeMap<(usize, usize), Detection> = BTreeMap::new();
    for d in detections {
        let key = (d.delay_bin, d.doppler_bin);
        match best.get(&key) {
            Some(b) if b.power > d.power || (b.power == d.power && b.angle_index <= d.angle_index) => {}
            _ => {
                best.insert(key, *d);
            }
        }
    }
    best.into_values().collect()
}

/// RD maps of every grid angle for radar trial `trial` of `seed`, exactly as
/// [`detect_scene`] sees them.
pub fn trial_maps(
    f: &PrecoderSet,
    scene: &TargetScene,
    grid: &AngleGrid,
    cfg: &SystemConfig,
    seed: u64,
    trial: usize,
) -> Result<Vec<RdMap>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    let symbols = random_symbols(cfg, &mut rng);
    let x = transmit_grid(f, &symbols)?;
    let y = synthesize_from_tx(&x, scene, cfg, Some(&mut rng))?;
    grid.angles().iter().map(|&theta| rd_map(&y, &x, theta, cfg)).collect()
}

fn run_trial(
    f: &PrecoderSet,
    scene: &TargetScene,
    grid: &AngleGrid,
    cfar: &CfarConfig,
    cfg: &SystemConfig,
    seed: u64,
    trial: usize,
) -> Result<DetectionReport> {
    let maps = trial_maps(f, scene, grid, cfg, seed, trial)?;
    let bins: Vec<(usize, usize)> = scene.targets.iter().map(|t| target_bins(t, cfg)).collect();
    let target_cells = (0..cfg.n_sub)
        .flat_map(|k| (0..cfg.n_sym).map(move |l| (k, l)))
        .filter(|&c| bins.iter().any(|&b| near(c, b, cfg)))
        .count();
    let mut raw = Vec::new();
    let mut false_alarms = 0;
    for (m, map) in maps.iter().enumerate() {
        for c in ca_cfar_detect(&map.power(), map.n_delay, map.n_doppler, cfar)? {
            if !bins.iter().any(|&b| near((c.delay_bin, c.doppler_bin), b, cfg)) {
                false_alarms += 1;
            }
            raw.push(Detection { angle_index: m, angle: map.angle, delay_bin: c.delay_bin, doppler_bin: c.doppler_bin, power: c.power });
        }
    }
    let detections = dedup_across_angles(&raw);
    let hits = scene
        .targets
        .iter()
        .zip(&bins)
        .map(|(t, &b)| {
            let m0 = grid.nearest_index(t.angle_rad);
            detections.iter().any(|d| d.angle_index.abs_diff(m0) <= 1 && near((d.delay_bin, d.doppler_bin), b, cfg))
        })
        .collect();
    let noise_cells = grid.len() * (cfg.n_sub * cfg.n_sym - target_cells);
    Ok(DetectionReport { trial, detections, hits, false_alarms, noise_cells })
}

/// Monte-Carlo detection and false-alarm rates of precoders `f` against `scene`.
///
/// Trial `i` draws symbols and noise from stream `i` of a ChaCha generator
/// seeded with `seed`, so results do not depend on thread scheduling.
pub fn detect_scene(
    f: &PrecoderSet,
    scene: &TargetScene,
    grid: &AngleGrid,
    cfar: &CfarConfig,
    cfg: &SystemConfig,
    seed: u64,
    n_trials: usize,
) -> Result<SensingOutcome> {
    if grid.is_empty() {
        return Err(IsacError::InvalidArgument("empty angle grid".into()));
    }
    if n_trials == 0 {
        return Err(IsacError::InvalidArgument("need at least one trial".into()));
    }
    f.check_against(cfg)?;
    let reports: Vec<DetectionReport> = (0..n_trials)
        .into_par_iter()
        .map(|t| run_trial(f, scene, grid, cfar, cfg, seed, t))
        .collect::<Result<_>>()?;
    let hits = reports.iter().map(|r| r.hits.iter().filter(|&&h| h).count()).sum();
    let targets = scene.targets.len() * n_trials;
    let false_alarms = reports.iter().map(|r| r.false_alarms).sum();
    let noise_cells: usize = reports.iter().map(|r| r.noise_cells).sum();
    Ok(SensingOutcome {
        trials: n_trials,
        hits,
        targets,
        p_d: (targets > 0).then(|| hits as f64 / targets as f64),
        false_alarms,
        noise_cells,
        p_fa: if noise_cells > 0 { false_alarms as f64 / noise_cells as f64 } else { 0.0 },
        reports,
    })
}

/// Threshold scale measured on noise-only maps of the actual pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfarCalibration {
    pub alpha: f64,
    pub closed_form_alpha: f64,
    pub cells: usize,
    /// False-alarm rate the closed-form scale produced on the same cells.
    pub closed_form_p_fa: f64,
}

impl CfarCalibration {
    pub fn apply(&self, cfar: &CfarConfig) -> Result<CfarConfig> {
        cfar.with_alpha(self.alpha)
    }
}

/// Picks the CFAR scale whose empirical exceedance rate on noise-only maps
/// equals `cfar.p_fa`.
pub fn calibrate_cfar(
    f: &PrecoderSet,
    grid: &AngleGrid,
    cfar: &CfarConfig,
    cfg: &SystemConfig,
    seed: u64,
    n_trials: usize,
) -> Result<CfarCalibration> {
    if grid.is_empty() || n_trials == 0 {
        return Err(IsacError::InvalidArgument("calibration needs angles and trials".into()));
    }
    f.check_against(cfg)?;
    let empty = TargetScene::new(Vec::new());
    let per_trial: Vec<Vec<f64>> = (0..n_trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(grid.len() * cfg.n_sub * cfg.n_sym);
            for map in trial_maps(f, &empty, grid, cfg, seed, trial)? {
                out.extend(cfar_ratios(&map.power(), map.n_delay, map.n_doppler, cfar)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut ratios: Vec<f64> = per_trial.into_iter().flatten().filter(|r| r.is_finite()).collect();
    if ratios.is_empty() {
        return Err(IsacError::Numerical("noise-only maps are identically zero".into()));
    }
    let cells = ratios.len();
    let closed_form_alpha = cfar.closed_form_alpha(cfar.window(cfg.n_sub, cfg.n_sym)?.n_train_cells());
    let closed_form_p_fa = ratios.iter().filter(|&&r| r > closed_form_alpha).count() as f64 / cells as f64;
    let idx = (((1.0 - cfar.p_fa) * cells as f64).floor() as usize).min(cells - 1);
    let (_, alpha, _) = ratios.select_nth_unstable_by(idx, f64::total_cmp);
    Ok(CfarCalibration { alpha: *alpha, closed_form_alpha, cells, closed_form_p_fa })
}
