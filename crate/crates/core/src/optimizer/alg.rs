use crate::channel::ChannelSet;
use crate::error::{IsacError, Result};
use crate::linalg::CVec;
use crate::metrics::{optimal_receivers_and_weights, spectral_efficiency, surrogate_terms};
use crate::system::{min_beam_power, PrecoderSet, SelectionMask, SystemConfig};

use super::init::initial_precoder;
use super::subproblem::{solve_convex_subproblem, CircuitTerm, Objective, SubproblemInput};
use super::surrogate::{linearize_rf_count, optimal_mu};
use super::{OptimizerOptions, OptimizerTrace, PowerModel, TraceRecord};

/// A precoder together with the chain selection it was designed for.
#[derive(Debug, Clone)]
pub struct Design {
    pub precoder: PrecoderSet,
    pub mask: SelectionMask,
    pub model: PowerModel,
    pub rate: f64,
    /// `||F||^2 / eta + P_BB + chain_cost * active chains`.
    pub power: f64,
    pub ee: f64,
    /// Value of the design goal (EE, or `omega1 R - omega2 P` for tradeoff runs).
    pub goal_value: f64,
    pub trace: OptimizerTrace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Goal {
    Ee,
    Tradeoff { omega1: f64, omega2: f64 },
}

#[derive(Debug, Clone, Copy)]
enum Count {
    Relaxed(f64),
    Fixed(usize),
}

struct Engine<'a> {
    cfg: &'a SystemConfig,
    h: &'a ChannelSet,
    opts: &'a OptimizerOptions,
    group_size: usize,
    chain_cost: f64,
    steering: Vec<Vec<CVec>>,
    goal: Goal,
}

fn check_inputs(cfg: &SystemConfig, h: &ChannelSet, opts: &OptimizerOptions, model: PowerModel) -> Result<()> {
    cfg.validate()?;
    opts.validate()?;
    if h.n_sub() != cfg.n_sub || h.n_users() != cfg.n_users || h.n_tx() != cfg.n_tx {
        return Err(IsacError::Dimension("channel does not match the configuration".into()));
    }
    if model == PowerModel::PcEquivalent && !cfg.n_tx.is_multiple_of(cfg.n_rf) {
        return Err(IsacError::Config("N_t must be divisible by N_RF for the PC model".into()));
    }
    Ok(())
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SystemConfig, h: &'a ChannelSet, opts: &'a OptimizerOptions, model: PowerModel, goal: Goal) -> Result<Self> {
        check_inputs(cfg, h, opts, model)?;
        let group_size = match model {
            PowerModel::FcEquivalent => 1,
            m => m.group_size(cfg),
        };
        Ok(Self {
            cfg,
            h,
            opts,
            group_size,
            chain_cost: model.chain_cost(cfg),
            steering: cfg.target_steering(),
            goal,
        })
    }

    fn count_value(&self, f: &PrecoderSet, count: Count) -> f64 {
        match count {
            Count::Fixed(n) => n as f64,
            Count::Relaxed(lambda) => f.group_norms(self.group_size).iter().map(|r| (lambda * r).tanh()).sum(),
        }
    }

    fn power_of(&self, f: &PrecoderSet, count: Count) -> f64 {
        f.frob_sq() / self.cfg.eta_pa + self.cfg.p_bb_w + self.chain_cost * self.count_value(f, count)
    }

    fn exact_count(&self, f: &PrecoderSet, count: Count) -> usize {
        match count {
            Count::Fixed(n) => n,
            Count::Relaxed(_) => f.group_norms(self.group_size).iter().filter(|r| **r > 0.0).count(),
        }
    }

    fn goal_value(&self, rate: f64, power: f64) -> f64 {
        match self.goal {
            Goal::Ee => rate / power,
            Goal::Tradeoff { omega1, omega2 } => omega1 * rate - omega2 * power,
        }
    }

    fn record(&self, f: &PrecoderSet, count: Count, phase: &str, outer: usize, inner: usize, mu: Option<f64>, sub_iterations: usize) -> Result<TraceRecord> {
        let rate = spectral_efficiency(self.h, f, self.cfg.noise_var_comm)?;
        let surrogate = self.goal_value(rate, self.power_of(f, count));
        let power = f.frob_sq() / self.cfg.eta_pa + self.cfg.p_bb_w + self.chain_cost * self.exact_count(f, count) as f64;
        let beam_slack = if self.cfg.theta_targets.is_empty() {
            f64::INFINITY
        } else {
            min_beam_power(f, &self.steering)? - self.cfg.p_th
        };
        Ok(TraceRecord {
            phase: phase.to_string(),
            outer,
            inner,
            lambda: match count {
                Count::Relaxed(l) => Some(l),
                Count::Fixed(_) => None,
            },
            mu,
            surrogate,
            rate,
            power,
            exact_ee: rate / power,
            group_norms: f.group_norms(self.group_size),
            beam_slack,
            power_slack: self.cfg.p_tx_w - f.frob_sq(),
            sub_iterations,
        })
    }

    /// One update of `(mu, U, W)` followed by the convex subproblem.
    fn step(&self, f: &PrecoderSet, keep: &[bool], count: Count) -> Result<(PrecoderSet, Option<f64>, usize)> {
        let sigma2 = self.cfg.noise_var_comm;
        let state = optimal_receivers_and_weights(self.h, f, sigma2)?;
        let terms = surrogate_terms(self.h, &state, self.cfg.n_streams, sigma2)?;
        let (objective, mu) = match self.goal {
            Goal::Ee => {
                let rate = spectral_efficiency(self.h, f, sigma2)?;
                let mu = optimal_mu(rate, self.power_of(f, count))?;
                (Objective::EnergyEfficiency { mu }, Some(mu))
            }
            Goal::Tradeoff { omega1, omega2 } => (Objective::Tradeoff { omega1, omega2 }, None),
        };
        let circuit = match count {
            Count::Fixed(n) => CircuitTerm::Fixed(n as f64),
            Count::Relaxed(lambda) => CircuitTerm::Relaxed(linearize_rf_count(&f.group_norms(self.group_size), lambda)?),
        };
        let input = SubproblemInput {
            cfg: self.cfg,
            terms: &terms,
            objective,
            f_ref: f,
            group_size: self.group_size,
            keep_rows: keep,
            chain_cost: self.chain_cost,
            circuit,
            steering: &self.steering,
        };
        let sol = solve_convex_subproblem(&input, self.opts)?;
        Ok((sol.f, mu, sol.iterations))
    }

    fn inner_loop(&self, f0: PrecoderSet, keep: &[bool], count: Count, phase: &str, outer: usize) -> Result<(PrecoderSet, Vec<TraceRecord>)> {
        let mut f = f0;
        let mut recs = vec![self.record(&f, count, phase, outer, 0, None, 0)?];
        for r in 1..=self.opts.r_inner {
            let (next, mu, iters) = self.step(&f, keep, count)?;
            f = next;
            let rec = self.record(&f, count, phase, outer, r, mu, iters)?;
            let prev = recs.last().map(|p| p.surrogate).unwrap_or(f64::NEG_INFINITY);
            let gain = rec.surrogate - prev;
            recs.push(rec);
            if gain <= self.opts.tol_obj * prev.abs().max(1e-12) {
                break;
            }
        }
        Ok((f, recs))
    }
}

fn goal_for_channel(cfg: &SystemConfig, h: &ChannelSet, f: &PrecoderSet, goal: Goal) -> Result<Goal> {
    // Without any achievable rate the EE is identically zero; fall back to the
    // minimum-power feasible point.
    if goal == Goal::Ee && spectral_efficiency(h, f, cfg.noise_var_comm)? <= 1e-12 {
        return Ok(Goal::Tradeoff { omega1: 0.0, omega2: 1.0 });
    }
    Ok(goal)
}

/// Scales a warm start into feasibility for `keep`, if that is possible.
fn prepare_warm(cfg: &SystemConfig, warm: &PrecoderSet, keep: &[bool]) -> Result<Option<PrecoderSet>> {
    let mut w = warm.with_rows_zeroed(keep);
    if w.frob_sq() == 0.0 {
        return Ok(None);
    }
    if w.frob_sq() > cfg.p_tx_w {
        w = w.scaled((cfg.p_tx_w / w.frob_sq()).sqrt());
    }
    if cfg.p_th > 0.0 && !cfg.theta_targets.is_empty() {
        let b = min_beam_power(&w, &cfg.target_steering())?;
        if b < cfg.p_th {
            if b <= 0.0 {
                return Ok(None);
            }
            let c2 = cfg.p_th * (1.0 + 1e-9) / b;
            if w.frob_sq() * c2 > cfg.p_tx_w {
                return Ok(None);
            }
            w = w.scaled(c2.sqrt());
        }
    }
    Ok(Some(w))
}

fn design_fixed(
    mask: &SelectionMask,
    cfg: &SystemConfig,
    h: &ChannelSet,
    model: PowerModel,
    opts: &OptimizerOptions,
    goal: Goal,
    warm: Option<&PrecoderSet>,
    phase: &str,
) -> Result<Design> {
    check_inputs(cfg, h, opts, model)?;
    if mask.len() != model.mask_len(cfg) {
        return Err(IsacError::Dimension(format!(
            "mask has {} entries, the {:?} model needs {}",
            mask.len(),
            model,
            model.mask_len(cfg)
        )));
    }
    if mask.count() == 0 {
        return Err(IsacError::InvalidArgument("selection mask has no active chain".into()));
    }
    let keep = model.keep_rows(mask, cfg);
    let f0 = match warm {
        Some(w) => prepare_warm(cfg, w, &keep)?
            .ok_or_else(|| IsacError::Infeasible("warm start cannot be made feasible".into()))?,
        None => initial_precoder(cfg, h, &keep)?,
    };
    let goal = goal_for_channel(cfg, h, &f0, goal)?;
    let engine = Engine::new(cfg, h, opts, model, goal)?;
    let count = Count::Fixed(mask.count());
    let (f, recs) = engine.inner_loop(f0, &keep, count, phase, 0)?;
    let rate = spectral_efficiency(h, &f, cfg.noise_var_comm)?;
    let power = engine.power_of(&f, count);
    Ok(Design {
        precoder: f,
        mask: mask.clone(),
        model,
        rate,
        power,
        ee: rate / power,
        goal_value: engine.goal_value(rate, power),
        trace: OptimizerTrace { records: recs },
    })
}

/// EE-maximizing precoder with the chains outside `mask` switched off and the
/// circuit power fixed by the model. Deterministic (cold start).
pub fn design_precoder_given_selection(
    mask: &SelectionMask,
    cfg: &SystemConfig,
    h: &ChannelSet,
    model: PowerModel,
    opts: &OptimizerOptions,
) -> Result<Design> {
    design_fixed(mask, cfg, h, model, opts, Goal::Ee, None, "fixed")
}

/// As [`design_precoder_given_selection`] but warm-started from `warm`.
pub fn design_precoder_given_selection_from(
    mask: &SelectionMask,
    cfg: &SystemConfig,
    h: &ChannelSet,
    model: PowerModel,
    opts: &OptimizerOptions,
    warm: &PrecoderSet,
) -> Result<Design> {
    design_fixed(mask, cfg, h, model, opts, Goal::Ee, Some(warm), "fixed")
}

fn better(goal: Goal, a: &Design, b: &Design) -> bool {
    match goal {
        Goal::Ee => a.ee > b.ee,
        Goal::Tradeoff { .. } => a.goal_value > b.goal_value,
    }
}

fn run_relaxed(cfg: &SystemConfig, h: &ChannelSet, opts: &OptimizerOptions, model: PowerModel, goal: Goal) -> Result<Design> {
    check_inputs(cfg, h, opts, model)?;
    let keep = vec![true; cfg.n_tx];
    let f0 = initial_precoder(cfg, h, &keep)?;
    let goal = goal_for_channel(cfg, h, &f0, goal)?;
    let engine = Engine::new(cfg, h, opts, model, goal)?;
    let mut trace = OptimizerTrace::default();
    let mut f = f0;
    let mut lambda = opts.lambda0;
    for outer in 0..opts.r_outer.max(1) {
        let (next, recs) = engine.inner_loop(f, &keep, Count::Relaxed(lambda), "relaxed", outer)?;
        f = next;
        trace.records.extend(recs);
        let norms = f.group_norms(engine.group_size);
        let max = norms.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            break;
        }
        let min_active = norms.iter().cloned().filter(|r| *r >= opts.round_eps * max).fold(f64::INFINITY, f64::min);
        if lambda * min_active > opts.lambda_saturation {
            break;
        }
        lambda *= opts.nu;
    }

    // Rounding, then re-solve with the selection fixed. Groups are added back
    // by decreasing norm if the rounded selection cannot meet the constraints.
    let norms = f.group_norms(engine.group_size);
    let max = norms.iter().cloned().fold(0.0, f64::max);
    let mut active: Vec<bool> = norms.iter().map(|r| max > 0.0 && *r >= opts.round_eps * max).collect();
    if !active.iter().any(|a| *a) {
        active.iter_mut().for_each(|a| *a = true);
    }
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    loop {
        let mask = SelectionMask::new(active.clone());
        let cold = design_fixed(&mask, cfg, h, model, opts, goal, None, "repair");
        match cold {
            Ok(cold) => {
                let warm = design_fixed(&mask, cfg, h, model, opts, goal, Some(&f), "repair").ok();
                let mut best = cold;
                if let Some(w) = warm {
                    if better(goal, &w, &best) {
                        best = w;
                    }
                }
                trace.extend(std::mem::take(&mut best.trace));
                best.trace = trace;
                return Ok(best);
            }
            Err(e) if e.is_infeasible() => match order.iter().find(|&&g| !active[g]) {
                Some(&g) => active[g] = true,
                None => return Err(e),
            },
            Err(e) => return Err(e),
        }
    }
}

/// Joint precoding and per-antenna chain selection maximizing EE.
pub fn run_alg1(cfg: &SystemConfig, h: &ChannelSet, opts: &OptimizerOptions) -> Result<Design> {
    run_relaxed(cfg, h, opts, PowerModel::Fd, Goal::Ee)
}

/// Subarray-level selection for the partially-connected architecture.
pub fn pc_equivalent_fd(cfg: &SystemConfig, h: &ChannelSet, opts: &OptimizerOptions) -> Result<Design> {
    if !cfg.n_tx.is_multiple_of(cfg.n_rf) {
        return Err(IsacError::Config("N_t must be divisible by N_RF".into()));
    }
    run_relaxed(cfg, h, opts, PowerModel::PcEquivalent, Goal::Ee)
}

/// Maximizes `omega1 R - omega2 P` with per-antenna chain selection.
pub fn run_tradeoff(cfg: &SystemConfig, h: &ChannelSet, omega1: f64, omega2: f64, opts: &OptimizerOptions) -> Result<Design> {
    if !(omega1 >= 0.0 && omega2 >= 0.0) || (omega1 == 0.0 && omega2 == 0.0) {
        return Err(IsacError::InvalidArgument("tradeoff weights must be nonnegative and not both zero".into()));
    }
    run_relaxed(cfg, h, opts, PowerModel::Fd, Goal::Tradeoff { omega1, omega2 })
}
