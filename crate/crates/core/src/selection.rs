//! Chain-selection searches built on the fixed-selection precoder design.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{IsacError, Result};
use crate::hybrid::{fc_match, MatchOptions, MatchReport};
use crate::metrics::spectral_efficiency;
use crate::optimizer::{design_precoder_given_selection, Design, OptimizerOptions, PowerModel};
use crate::system::{total_power_fc, total_power_pc, HybridArchitecture, HybridPrecoder, SelectionMask, SystemConfig};

/// Largest mask length brute force accepts.
pub const MAX_BRUTE_FORCE_CHAINS: usize = 16;
/// Relative EE margin used for ties and strict improvements.
pub const EE_MARGIN: f64 = 1e-9;
pub const RANDOM_RESAMPLES: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskEvaluation {
    pub mask: SelectionMask,
    pub feasible: bool,
    pub ee: Option<f64>,
    pub rate: Option<f64>,
    pub power: Option<f64>,
}

impl MaskEvaluation {
    fn from_result(mask: &SelectionMask, r: &Result<Design>) -> Self {
        match r {
            Ok(d) => Self { mask: mask.clone(), feasible: true, ee: Some(d.ee), rate: Some(d.rate), power: Some(d.power) },
            Err(_) => Self { mask: mask.clone(), feasible: false, ee: None, rate: None, power: None },
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub design: Design,
    pub evaluations: Vec<MaskEvaluation>,
}

fn evaluate(mask: &SelectionMask, cfg: &SystemConfig, h: &ChannelSet, model: PowerModel, opts: &OptimizerOptions) -> Result<Option<Design>> {
    match design_precoder_given_selection(mask, cfg, h, model, opts) {
        Ok(d) => Ok(Some(d)),
        Err(e) if e.is_infeasible() => Ok(None),
        Err(e) => Err(e),
    }
}

/// `a` beats `b`: higher EE beyond the margin, else fewer chains, else the smaller mask.
fn preferred(a: &Design, b: &Design) -> bool {
    let scale = a.ee.abs().max(b.ee.abs()).max(f64::MIN_POSITIVE);
    if (a.ee - b.ee).abs() > EE_MARGIN * scale {
        return a.ee > b.ee;
    }
    (a.mask.count(), a.mask.active()) < (b.mask.count(), b.mask.active())
}

/// Exhaustive search over every nonempty selection mask.
pub fn brute_force_search(cfg: &SystemConfig, h: &ChannelSet, model: PowerModel, opts: &OptimizerOptions) -> Result<SearchOutcome> {
    let n = model.mask_len(cfg);
    if n == 0 || n > MAX_BRUTE_FORCE_CHAINS {
        return Err(IsacError::InvalidArgument(format!(
            "brute force supports 1..={MAX_BRUTE_FORCE_CHAINS} chains, got {n}"
        )));
    }
    let masks: Vec<SelectionMask> = (1u64..(1u64 << n)).map(|b| SelectionMask::from_bits(b, n)).collect();
    let results: Vec<Result<Option<Design>>> = masks.par_iter().map(|m| evaluate(m, cfg, h, model, opts)).collect();
    let mut evaluations = Vec::with_capacity(masks.len());
    let mut best: Option<Design> = None;
    for (mask, r) in masks.iter().zip(results) {
        let d = r?;
        evaluations.push(match &d {
            Some(d) => MaskEvaluation::from_result(mask, &Ok(d.clone())),
            None => MaskEvaluation { mask: mask.clone(), feasible: false, ee: None, rate: None, power: None },
        });
        if let Some(d) = d {
            if best.as_ref().is_none_or(|b| preferred(&d, b)) {
                best = Some(d);
            }
        }
    }
    let design = best.ok_or_else(|| IsacError::Infeasible("no selection mask satisfies the constraints".into()))?;
    Ok(SearchOutcome { design, evaluations })
}

/// Randomized greedy deactivation starting from all chains on.
pub fn greedy_search(cfg: &SystemConfig, h: &ChannelSet, model: PowerModel, opts: &OptimizerOptions, seed: u64) -> Result<SearchOutcome> {
    let n = model.mask_len(cfg);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let start = SelectionMask::all_on(n);
    let mut evaluations = Vec::new();
    let first = design_precoder_given_selection(&start, cfg, h, model, opts);
    evaluations.push(MaskEvaluation::from_result(&start, &first));
    let mut incumbent = first?;
    while incumbent.mask.count() > 1 {
        let mut order = incumbent.mask.indices();
        order.shuffle(&mut rng);
        let mut accepted = None;
        for i in order {
            let trial = incumbent.mask.with(i, false);
            let r = evaluate(&trial, cfg, h, model, opts)?;
            evaluations.push(match &r {
                Some(d) => MaskEvaluation::from_result(&trial, &Ok(d.clone())),
                None => MaskEvaluation { mask: trial.clone(), feasible: false, ee: None, rate: None, power: None },
            });
            if let Some(d) = r {
                if d.ee > incumbent.ee + EE_MARGIN * incumbent.ee.abs() {
                    accepted = Some(d);
                    break;
                }
            }
        }
        match accepted {
            Some(d) => incumbent = d,
            None => break,
        }
    }
    Ok(SearchOutcome { design: incumbent, evaluations })
}

/// Uniformly random mask size and members, resampled until feasible.
pub fn random_selection(cfg: &SystemConfig, h: &ChannelSet, model: PowerModel, opts: &OptimizerOptions, seed: u64) -> Result<SearchOutcome> {
    let n = model.mask_len(cfg);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut evaluations = Vec::new();
    for _ in 0..RANDOM_RESAMPLES {
        let size = rng.random_range(1..=n);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let mut active = vec![false; n];
        for &i in &idx[..size] {
            active[i] = true;
        }
        let mask = SelectionMask::new(active);
        let r = evaluate(&mask, cfg, h, model, opts)?;
        evaluations.push(match &r {
            Some(d) => MaskEvaluation::from_result(&mask, &Ok(d.clone())),
            None => MaskEvaluation { mask: mask.clone(), feasible: false, ee: None, rate: None, power: None },
        });
        if let Some(design) = r {
            return Ok(SearchOutcome { design, evaluations });
        }
    }
    Err(IsacError::Infeasible(format!("no feasible random selection in {RANDOM_RESAMPLES} draws")))
}

/// Rate, exact power and EE of a hybrid precoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridMetrics {
    pub rate: f64,
    pub power: f64,
    pub ee: f64,
}

pub fn evaluate_hybrid(hp: &HybridPrecoder, cfg: &SystemConfig, h: &ChannelSet) -> Result<HybridMetrics> {
    let eff = hp.effective(cfg.n_streams)?;
    let rate = spectral_efficiency(h, &eff, cfg.noise_var_comm)?;
    let power = match hp.architecture() {
        HybridArchitecture::FullyConnected => total_power_fc(hp, cfg)?,
        HybridArchitecture::PartiallyConnected => total_power_pc(hp, cfg)?,
    };
    Ok(HybridMetrics { rate, power, ee: rate / power })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcCandidate {
    pub n_active: usize,
    pub feasible: bool,
    pub metrics: Option<HybridMetrics>,
}

#[derive(Debug, Clone)]
pub struct FcSweepOutcome {
    pub hybrid: HybridPrecoder,
    pub metrics: HybridMetrics,
    pub reference: Design,
    pub report: MatchReport,
    pub candidates: Vec<FcCandidate>,
}

/// Tries the first `n` chains for every `n`, factorizing each FD-equivalent design.
pub fn fc_candidate_sweep(cfg: &SystemConfig, h: &ChannelSet, opts: &OptimizerOptions, match_opts: &MatchOptions) -> Result<FcSweepOutcome> {
    let mut best: Option<FcSweepOutcome> = None;
    let mut candidates = Vec::with_capacity(cfg.n_rf);
    for n in 1..=cfg.n_rf {
        let mask = SelectionMask::first_n(n, cfg.n_rf);
        let Some(design) = evaluate(&mask, cfg, h, PowerModel::FcEquivalent, opts)? else {
            candidates.push(FcCandidate { n_active: n, feasible: false, metrics: None });
            continue;
        };
        let (hp, report) = fc_match(&design.precoder, n, cfg, match_opts)?;
        let metrics = evaluate_hybrid(&hp, cfg, h)?;
        candidates.push(FcCandidate { n_active: n, feasible: true, metrics: Some(metrics) });
        let replace = best.as_ref().is_none_or(|b| metrics.ee > b.metrics.ee + EE_MARGIN * b.metrics.ee.abs());
        if replace {
            best = Some(FcSweepOutcome { hybrid: hp, metrics, reference: design, report, candidates: Vec::new() });
        }
    }
    let mut out = best.ok_or_else(|| IsacError::Infeasible("every FC candidate is infeasible".into()))?;
    out.candidates = candidates;
    Ok(out)
}

/// Writes `mask,n_active,feasible,ee,rate,power` rows.
pub fn write_mask_log<W: Write>(evaluations: &[MaskEvaluation], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["mask", "n_active", "feasible", "ee", "rate", "power"])?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.12e}")).unwrap_or_default();
    for e in evaluations {
        wr.write_record([
            e.mask.to_string(),
            e.mask.count().to_string(),
            e.feasible.to_string(),
            opt(e.ee),
            opt(e.rate),
            opt(e.power),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
