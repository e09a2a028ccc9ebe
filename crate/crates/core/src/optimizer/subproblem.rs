//! The convexified per-iteration problem, solved by a monotone accelerated
//! proximal-gradient method. The proximal step (group shrinkage intersected
//! with the linearized beam half-spaces and the power ball) is computed
//! exactly through a small dual problem.

use std::f64::consts::LN_2;

use crate::error::{IsacError, Result};
use crate::linalg::{frob_sq, re_inner, CMat, CVec};
use crate::metrics::SurrogateTerms;
use crate::system::{PrecoderSet, SystemConfig};

use super::surrogate::{linearize_beam_power, BeamLinearization, RfCountLinearization};
use super::OptimizerOptions;

/// Below this value the square root is continued by its tangent line.
const SQRT_FLOOR: f64 = 1e-12;
/// Accepted relative shortfall of the warm start on the beam constraints.
const WARM_START_SLACK: f64 = 1e-6;
const MAX_DUAL_ITERS: usize = 20_000;
const MAX_RHO_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// `2 mu sqrt(R) - mu^2 P`.
    EnergyEfficiency { mu: f64 },
    /// `omega1 R - omega2 P`.
    Tradeoff { omega1: f64, omega2: f64 },
}

impl Objective {
    fn power_weight(&self) -> f64 {
        match *self {
            Objective::EnergyEfficiency { mu } => mu * mu,
            Objective::Tradeoff { omega2, .. } => omega2,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum CircuitTerm {
    Relaxed(RfCountLinearization),
    Fixed(f64),
}

/// Everything defining one convex subproblem.
pub struct SubproblemInput<'a> {
    pub cfg: &'a SystemConfig,
    /// WMMSE quadratic forms per subcarrier (nats).
    pub terms: &'a [SurrogateTerms],
    pub objective: Objective,
    pub f_ref: &'a PrecoderSet,
    /// Rows per switchable group.
    pub group_size: usize,
    /// Rows allowed to be nonzero.
    pub keep_rows: &'a [bool],
    /// Circuit power per active group.
    pub chain_cost: f64,
    pub(crate) circuit: CircuitTerm,
    /// Transmit steering vectors `[k][theta]`.
    pub steering: &'a [Vec<CVec>],
}

#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub f: PrecoderSet,
    pub objective: f64,
    pub ref_objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Smooth<'a> {
    terms: &'a [SurrogateTerms],
    objective: Objective,
    inv_eta: f64,
    to_bits: f64,
}

fn sqrt_cont(x: f64) -> (f64, f64) {
    if x >= SQRT_FLOOR {
        let s = x.sqrt();
        (s, 0.5 / s)
    } else {
        let s = SQRT_FLOOR.sqrt();
        (s + (x - SQRT_FLOOR) * 0.5 / s, 0.5 / s)
    }
}

impl Smooth<'_> {
    fn rate_bits(&self, f: &[CMat], qf: &[CMat]) -> f64 {
        let nats: f64 = self
            .terms
            .iter()
            .zip(f.iter().zip(qf))
            .map(|(t, (fk, qfk))| t.constant - re_inner(fk, qfk) + 2.0 * re_inner(&t.c, fk))
            .sum();
        nats * self.to_bits
    }

    fn value(&self, f: &[CMat]) -> f64 {
        let qf: Vec<CMat> = self.terms.iter().zip(f).map(|(t, fk)| &t.q * fk).collect();
        self.combine(f, &qf).0
    }

    fn value_grad(&self, f: &[CMat]) -> (f64, Vec<CMat>) {
        let qf: Vec<CMat> = self.terms.iter().zip(f).map(|(t, fk)| &t.q * fk).collect();
        let (val, rate_coef, power_coef) = self.combine(f, &qf);
        let grad = self
            .terms
            .iter()
            .zip(f.iter().zip(&qf))
            .map(|(t, (fk, qfk))| (&t.c - qfk).scale(2.0 * rate_coef * self.to_bits) - fk.scale(2.0 * power_coef * self.inv_eta))
            .collect();
        (val, grad)
    }

    /// Returns the value and the derivative weights on `R` (bits) and `||F||^2 / eta`.
    fn combine(&self, f: &[CMat], qf: &[CMat]) -> (f64, f64, f64) {
        let rate = self.rate_bits(f, qf);
        let p: f64 = f.iter().map(frob_sq).sum::<f64>() * self.inv_eta;
        match self.objective {
            Objective::EnergyEfficiency { mu } => {
                let (s, ds) = sqrt_cont(rate);
                (2.0 * mu * s - mu * mu * p, 2.0 * mu * ds, mu * mu)
            }
            Objective::Tradeoff { omega1, omega2 } => (omega1 * rate - omega2 * p, omega1, omega2),
        }
    }
}

struct HalfSpace {
    k: usize,
    lin: BeamLinearization,
    g_norm: f64,
    /// Normalized right-hand side `b / ||G||`.
    b_hat: f64,
}

impl HalfSpace {
    fn value(&self, f: &[CMat]) -> f64 {
        self.lin.inner(&f[self.k]) / self.g_norm
    }
}

/// Exact proximal map of the group penalty restricted to the feasible set.
struct Prox {
    group_size: usize,
    keep_rows: Vec<bool>,
    halfspaces: Vec<HalfSpace>,
    gram_bound: f64,
    p_max: f64,
    nu: Vec<f64>,
    rho: f64,
}

fn add_scaled(dst: &mut [CMat], src: &[CMat], c: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s.scale(c);
    }
}

fn total_sq(f: &[CMat]) -> f64 {
    f.iter().map(frob_sq).sum()
}

impl Prox {
    fn group_norms(&self, f: &[CMat]) -> Vec<f64> {
        let n_rows = self.keep_rows.len();
        let mut out = vec![0.0; n_rows / self.group_size];
        for fk in f {
            for i in 0..n_rows {
                out[i / self.group_size] += fk.row(i).norm_squared();
            }
        }
        out.iter_mut().for_each(|x| *x = x.sqrt());
        out
    }

    /// `s * shrink(V + sum_j nu_j g_hat_j, kappa)`.
    fn primal(&self, v: &[CMat], nu: &[f64], kappa: &[f64], s: f64) -> Vec<CMat> {
        let mut x = v.to_vec();
        for (hs, &n) in self.halfspaces.iter().zip(nu) {
            if n != 0.0 {
                hs.lin.add_scaled_g(&mut x[hs.k], n / hs.g_norm);
            }
        }
        let norms = self.group_norms(&x);
        let n_rows = self.keep_rows.len();
        for fk in &mut x {
            for i in 0..n_rows {
                let g = i / self.group_size;
                let factor = if !self.keep_rows[i] || norms[g] <= kappa[g] {
                    0.0
                } else {
                    s * (1.0 - kappa[g] / norms[g])
                };
                fk.row_mut(i).scale_mut(factor);
            }
        }
        x
    }

    /// Projected accelerated dual ascent for fixed ball multiplier (`s = 1/(1+rho)`).
    fn dual_solve(&mut self, v: &[CMat], kappa: &[f64], s: f64) -> Vec<CMat> {
        let j = self.halfspaces.len();
        if j == 0 {
            return self.primal(v, &[], kappa, s);
        }
        let vnorm = total_sq(v).sqrt();
        let bscale = self.halfspaces.iter().map(|h| h.b_hat.abs()).fold(0.0, f64::max);
        let tol_f = 1e-11 * (bscale + vnorm).max(1e-300);
        let tol_cs = 1e-11 * (bscale + vnorm).powi(2).max(1e-300);
        let step = 1.0 / (s * self.gram_bound);
        let mut nu = self.nu.clone();
        let mut y = nu.clone();
        let mut t = 1.0_f64;
        let mut best = self.primal(v, &nu, kappa, s);
        for _ in 0..MAX_DUAL_ITERS {
            let fy = self.primal(v, &y, kappa, s);
            let new_nu: Vec<f64> = (0..j)
                .map(|i| (y[i] + step * (self.halfspaces[i].b_hat - self.halfspaces[i].value(&fy))).max(0.0))
                .collect();
            let fnew = self.primal(v, &new_nu, kappa, s);
            let mut viol = 0.0_f64;
            let mut cs = 0.0_f64;
            for (i, hs) in self.halfspaces.iter().enumerate() {
                let gap = hs.value(&fnew) - hs.b_hat;
                viol = viol.max(-gap);
                cs = cs.max(new_nu[i] * gap);
            }
            let restart: f64 = (0..j).map(|i| (y[i] - new_nu[i]) * (new_nu[i] - nu[i])).sum();
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            if restart > 0.0 {
                t = 1.0;
                y = new_nu.clone();
            } else {
                y = (0..j).map(|i| new_nu[i] + (t - 1.0) / t_new * (new_nu[i] - nu[i])).collect();
                t = t_new;
            }
            nu = new_nu;
            best = fnew;
            if viol <= tol_f && cs <= tol_cs {
                break;
            }
        }
        self.nu = nu;
        best
    }

    fn apply(&mut self, v: &[CMat], kappa: &[f64]) -> Vec<CMat> {
        let f0 = self.dual_solve(v, kappa, 1.0);
        let n0 = total_sq(&f0);
        if n0 <= self.p_max {
            self.rho = 0.0;
            return f0;
        }
        let target = self.p_max;
        let mut lo = 0.0_f64;
        let mut hi: Option<(f64, Vec<CMat>)> = None;
        let mut rho = ((n0 / target).sqrt() - 1.0).max(self.rho);
        for step in 0..MAX_RHO_STEPS {
            let f = self.dual_solve(v, kappa, 1.0 / (1.0 + rho));
            let n2 = total_sq(&f);
            if n2 <= target {
                let done = n2 >= target * (1.0 - 1e-10);
                hi = Some((rho, f));
                if done {
                    break;
                }
            } else {
                lo = rho;
            }
            // Fixed-point proposal assuming F scales like 1/(1+rho), safeguarded by the bracket.
            let mut next = (1.0 + rho) * (n2 / target).sqrt() - 1.0;
            match hi.as_ref().map(|h| h.0) {
                Some(u) => {
                    if u - lo <= 1e-15 * (1.0 + u) {
                        break;
                    }
                    if !(next > lo && next < u) || step % 3 == 2 {
                        next = 0.5 * (lo + u);
                    }
                }
                None => {
                    if next <= lo {
                        next = 2.0 * lo + 1e-9;
                    }
                }
            }
            rho = next;
        }
        match hi {
            Some((rho, f)) => {
                self.rho = rho;
                f
            }
            None => {
                // The bracket never closed; fall back to a radial projection of the last point.
                let mut f = self.dual_solve(v, kappa, 1.0 / (1.0 + rho));
                let n2 = total_sq(&f);
                if n2 > target {
                    let c = (target / n2).sqrt();
                    f.iter_mut().for_each(|m| *m *= crate::linalg::C64::new(c, 0.0));
                }
                self.rho = rho;
                f
            }
        }
    }

    fn max_violation(&self, f: &[CMat]) -> f64 {
        self.halfspaces.iter().map(|h| (h.b_hat - h.value(f)) * h.g_norm).fold(0.0, f64::max)
    }
}

/// Maximizes the convexified surrogate starting from `f_ref`.
///
/// The returned iterate never has a lower objective than `f_ref`; the
/// accelerated method keeps the best iterate seen.
pub fn solve_convex_subproblem(input: &SubproblemInput<'_>, opts: &OptimizerOptions) -> Result<SubproblemSolution> {
    let cfg = input.cfg;
    input.f_ref.check_against(cfg)?;
    if input.keep_rows.len() != cfg.n_tx || !cfg.n_tx.is_multiple_of(input.group_size) {
        return Err(IsacError::Dimension("row flags or group size do not match N_t".into()));
    }
    if input.terms.len() != cfg.n_sub || input.steering.len() != cfg.n_sub {
        return Err(IsacError::Dimension("subproblem data does not cover every subcarrier".into()));
    }
    let n_groups = cfg.n_tx / input.group_size;
    let f_ref = input.f_ref.with_rows_zeroed(input.keep_rows);
    let ref_sq = f_ref.frob_sq();
    if ref_sq > cfg.p_tx_w * (1.0 + 1e-9) {
        return Err(IsacError::Infeasible(format!(
            "warm start uses {ref_sq} W, above the budget {} W",
            cfg.p_tx_w
        )));
    }

    let mut halfspaces = Vec::new();
    if cfg.p_th > 0.0 {
        for (k, per_k) in input.steering.iter().enumerate() {
            for a in per_k {
                let mut a = a.clone();
                for (i, &keep) in input.keep_rows.iter().enumerate() {
                    if !keep {
                        a[i] = crate::linalg::ZERO;
                    }
                }
                let lin = linearize_beam_power(f_ref.get(k), &a)?;
                if lin.b_ref < cfg.p_th * (1.0 - WARM_START_SLACK) {
                    return Err(IsacError::Infeasible(format!(
                        "warm start beam power {} on subcarrier {k} is below P_th = {}",
                        lin.b_ref, cfg.p_th
                    )));
                }
                let g_norm = lin.g_norm();
                let b = 0.5 * (cfg.p_th + lin.b_ref);
                halfspaces.push(HalfSpace { k, b_hat: b / g_norm, g_norm, lin });
            }
        }
    }
    // Gershgorin bound on the Gram matrix of the normalized half-space normals.
    let mut gram_bound = 1.0_f64;
    for hi in &halfspaces {
        let mut row = 0.0;
        for hj in halfspaces.iter().filter(|h| h.k == hi.k) {
            let ga = hi.lin.steering.dotc(&hj.lin.steering);
            let gv = hj.lin.v.dotc(&hi.lin.v);
            row += (ga * gv).norm() / (hi.g_norm * hj.g_norm);
        }
        gram_bound = gram_bound.max(row);
    }

    let (w, offset_const) = match &input.circuit {
        CircuitTerm::Relaxed(lin) => {
            if lin.weights.len() != n_groups {
                return Err(IsacError::Dimension("count linearization has the wrong number of groups".into()));
            }
            (lin.weights.clone(), lin.offset)
        }
        CircuitTerm::Fixed(count) => (vec![0.0; n_groups], *count),
    };
    let pw = input.objective.power_weight();
    let pen_coef = pw * input.chain_cost;
    let constant = pw * (cfg.p_bb_w + input.chain_cost * offset_const);

    let smooth = Smooth {
        terms: input.terms,
        objective: input.objective,
        inv_eta: 1.0 / cfg.eta_pa,
        to_bits: 1.0 / (cfg.n_sub as f64 * LN_2),
    };
    let mut prox = Prox {
        group_size: input.group_size,
        keep_rows: input.keep_rows.to_vec(),
        nu: vec![0.0; halfspaces.len()],
        halfspaces,
        gram_bound,
        p_max: cfg.p_tx_w,
        rho: 0.0,
    };
    let penalty = |f: &[CMat], prox: &Prox| -> f64 {
        if pen_coef == 0.0 {
            return 0.0;
        }
        pen_coef * prox.group_norms(f).iter().zip(&w).map(|(r, wg)| r * wg).sum::<f64>()
    };
    let phi = |f: &[CMat], prox: &Prox| smooth.value(f) - penalty(f, prox) - constant;

    let x_ref: Vec<CMat> = f_ref.mats().to_vec();
    let ref_objective = phi(&x_ref, &prox);

    // Step-size seed from a cheap curvature bound.
    let qmax = input.terms.iter().map(|t| t.q.norm()).fold(0.0, f64::max);
    let (_, rate_coef, power_coef) = smooth.combine(&x_ref, &input.terms.iter().zip(&x_ref).map(|(t, f)| &t.q * f).collect::<Vec<_>>());
    let mut l = (2.0 * rate_coef * smooth.to_bits * qmax + 2.0 * power_coef * smooth.inv_eta).max(1e-12) * 0.25;

    let mut x = x_ref.clone();
    let mut phi_x = ref_objective;
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut stall = 0;
    let mut iterations = 0;
    let mut converged = false;
    let scale0 = ref_objective.abs().max(1e-12);
    for it in 0..opts.sub_max_iter {
        iterations = it + 1;
        let (s_y, g_y) = smooth.value_grad(&y);
        let (z, s_z) = loop {
            let mut v = y.clone();
            add_scaled(&mut v, &g_y, 1.0 / l);
            let kappa: Vec<f64> = w.iter().map(|wg| pen_coef * wg / l).collect();
            let z = prox.apply(&v, &kappa);
            let s_z = smooth.value(&z);
            let mut d = z.clone();
            add_scaled(&mut d, &y, -1.0);
            let lin: f64 = g_y.iter().zip(&d).map(|(g, dd)| re_inner(g, dd)).sum();
            let model = s_y + lin - 0.5 * l * total_sq(&d);
            if s_z >= model - 1e-12 * (s_y.abs() + 1.0) || l > 1e300 {
                break (z, s_z);
            }
            l *= 2.0;
        };
        let phi_z = s_z - penalty(&z, &prox) - constant;
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let improved = phi_z > phi_x;
        let gain = if improved { phi_z - phi_x } else { 0.0 };
        let x_new = if improved { z.clone() } else { x.clone() };
        let mut y_new = x_new.clone();
        add_scaled(&mut y_new, &z, t / t_new);
        add_scaled(&mut y_new, &x_new, -t / t_new);
        add_scaled(&mut y_new, &x_new, (t - 1.0) / t_new);
        add_scaled(&mut y_new, &x, -(t - 1.0) / t_new);
        if improved {
            phi_x = phi_z;
        }
        x = x_new;
        y = y_new;
        t = t_new;
        let scale = phi_x.abs().max(scale0);
        if gain <= opts.sub_tol * scale {
            stall += 1;
        } else {
            stall = 0;
        }
        if stall >= 5 {
            converged = true;
            break;
        }
        l *= 0.9;
    }

    if !converged && opts.strict_subproblem {
        return Err(IsacError::NoConvergence(format!(
            "subproblem stopped after {} iterations",
            opts.sub_max_iter
        )));
    }
    let viol = prox.max_violation(&x);
    if viol > 1e-6 * cfg.p_th.max(1e-12) {
        log::debug!("subproblem iterate violates a linearized beam constraint by {viol:.3e}; keeping the reference");
        x = x_ref;
        phi_x = ref_objective;
    }
    Ok(SubproblemSolution {
        f: PrecoderSet::new(x, cfg.n_streams)?,
        objective: phi_x,
        ref_objective,
        iterations,
        converged,
    })
}
