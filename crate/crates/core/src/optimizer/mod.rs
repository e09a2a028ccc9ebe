//! Energy-efficient precoding: quadratic transform + WMMSE + successive
//! convex approximation, with a tanh relaxation of the RF-chain count.

mod alg;
mod init;
mod subproblem;
mod surrogate;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{IsacError, Result};
use crate::system::{Architecture, SelectionMask, SystemConfig};

pub use alg::{
    design_precoder_given_selection, design_precoder_given_selection_from, pc_equivalent_fd, run_alg1,
    run_tradeoff, Design,
};
pub use init::initial_precoder;
pub use subproblem::{solve_convex_subproblem, Objective, SubproblemInput, SubproblemSolution};
pub use surrogate::{
    approx_group_power, linearize_beam_power, linearize_rf_count, optimal_mu, BeamLinearization,
    RfCountLinearization,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    /// Initial tanh sharpness.
    pub lambda0: f64,
    /// Growth factor applied to lambda after every outer iteration.
    pub nu: f64,
    pub r_inner: usize,
    pub r_outer: usize,
    /// Relative surrogate improvement below which the inner loop stops.
    pub tol_obj: f64,
    /// A chain is kept when its row norm is at least `round_eps` times the largest.
    pub round_eps: f64,
    /// Outer loop stops once `lambda * min active row norm` exceeds this.
    pub lambda_saturation: f64,
    pub sub_tol: f64,
    pub sub_max_iter: usize,
    /// Return an error instead of the best iterate when the subproblem hits its cap.
    pub strict_subproblem: bool,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            lambda0: 1.0,
            nu: 4.0,
            r_inner: 50,
            r_outer: 8,
            tol_obj: 1e-5,
            round_eps: 1e-2,
            lambda_saturation: 6.0,
            sub_tol: 1e-6,
            sub_max_iter: 300,
            strict_subproblem: false,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !(self.nu > 1.0) {
            return Err(IsacError::Config(format!("nu must exceed 1, got {}", self.nu)));
        }
        if !(pos(self.lambda0) && pos(self.tol_obj) && pos(self.sub_tol) && pos(self.lambda_saturation)) {
            return Err(IsacError::Config("optimizer tolerances and lambda0 must be positive".into()));
        }
        if !(self.round_eps > 0.0 && self.round_eps < 1.0) {
            return Err(IsacError::Config("round_eps must lie in (0, 1)".into()));
        }
        if self.r_inner == 0 || self.sub_max_iter == 0 {
            return Err(IsacError::Config("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

/// How chain activity is priced when designing an FD (or FD-equivalent) precoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerModel {
    /// One chain per antenna row, each costing `P_RF`.
    Fd,
    /// Chains feed every antenna: `n (P_RF + N_t P_PS)`; no rows are switched off.
    FcEquivalent,
    /// Chains feed a subarray of `N_t/N_RF` rows: `P_RF + (N_t/N_RF) P_PS` each.
    PcEquivalent,
}

impl PowerModel {
    pub fn for_architecture(arch: Architecture) -> Self {
        match arch {
            Architecture::Fd => PowerModel::Fd,
            Architecture::Fc => PowerModel::FcEquivalent,
            Architecture::Pc => PowerModel::PcEquivalent,
        }
    }

    /// Length of the selection mask under this model.
    pub fn mask_len(self, cfg: &SystemConfig) -> usize {
        match self {
            PowerModel::Fd => cfg.n_tx,
            _ => cfg.n_rf,
        }
    }

    /// Rows per switchable group (FC chains do not own rows).
    pub fn group_size(self, cfg: &SystemConfig) -> usize {
        match self {
            PowerModel::Fd => 1,
            PowerModel::PcEquivalent => cfg.subarray_size(),
            PowerModel::FcEquivalent => cfg.n_tx,
        }
    }

    pub fn chain_cost(self, cfg: &SystemConfig) -> f64 {
        match self {
            PowerModel::Fd => cfg.p_rf_w,
            PowerModel::FcEquivalent => cfg.p_rf_w + cfg.n_tx as f64 * cfg.p_ps_w,
            PowerModel::PcEquivalent => cfg.p_rf_w + cfg.subarray_size() as f64 * cfg.p_ps_w,
        }
    }

    /// Per-row flags of rows allowed to be nonzero under `mask`.
    pub fn keep_rows(self, mask: &SelectionMask, cfg: &SystemConfig) -> Vec<bool> {
        match self {
            PowerModel::Fd => mask.active().to_vec(),
            PowerModel::PcEquivalent => mask.expand(cfg.subarray_size()),
            PowerModel::FcEquivalent => vec![true; cfg.n_tx],
        }
    }
}

/// One inner iteration of an optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// `relaxed` (tanh count), `fixed` (given selection) or `repair` (after rounding).
    pub phase: String,
    pub outer: usize,
    pub inner: usize,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    /// Surrogate objective with auxiliaries at their optimum (EE: `R / P_hat`).
    pub surrogate: f64,
    pub rate: f64,
    pub power: f64,
    pub exact_ee: f64,
    pub group_norms: Vec<f64>,
    /// `min_{k,theta} B_k - P_th` (infinite without sensing angles).
    pub beam_slack: f64,
    /// `P_tx - sum ||F_k||^2`.
    pub power_slack: f64,
    pub sub_iterations: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub records: Vec<TraceRecord>,
}

impl OptimizerTrace {
    pub fn extend(&mut self, other: OptimizerTrace) {
        self.records.extend(other.records);
    }

    /// Consecutive runs of records sharing `(phase, outer)`: one per fixed lambda.
    pub fn segments(&self) -> Vec<&[TraceRecord]> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.records.len() {
            let split = i == self.records.len()
                || self.records[i].phase != self.records[start].phase
                || self.records[i].outer != self.records[start].outer;
            if split {
                if i > start {
                    out.push(&self.records[start..i]);
                }
                start = i;
            }
        }
        out
    }

    /// Largest relative drop of the surrogate between consecutive records of a segment.
    pub fn worst_relative_decrease(&self) -> f64 {
        let mut worst = 0.0_f64;
        for seg in self.segments() {
            for w in seg.windows(2) {
                let scale = w[0].surrogate.abs().max(1e-12);
                worst = worst.max((w[0].surrogate - w[1].surrogate) / scale);
            }
        }
        worst
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}
