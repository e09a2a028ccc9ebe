use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::synth::{RxGrid, SymbolGrid, TxGrid, transmit_grid};
use crate::error::{dim_check, IsacError, Result};
use crate::linalg::C64;
use crate::system::{PrecoderSet, SystemConfig};

/// Relative threshold below which `|a^H x|` counts as a null.
pub const DIVISION_GUARD: f64 = 1e-9;

/// Beamformed, symbol-divided grid for one angle.
#[derive(Debug, Clone, PartialEq)]
pub struct DividedGrid {
    pub angle: f64,
    /// `z_{k,l}` subcarrier-major; guarded cells hold zero.
    pub values: Vec<C64>,
    pub alpha: f64,
    /// `a_t^H x_{k,l}`, kept for the noise prediction.
    pub beam: Vec<C64>,
    pub guarded: Vec<bool>,
}

impl DividedGrid {
    pub fn n_guarded(&self) -> usize {
        self.guarded.iter().filter(|&&g| g).count()
    }
}

/// Receive beamforming toward `theta` followed by division by the beamformed
/// transmit symbol, scaled so that the grid power is preserved.
pub fn beamform_and_divide(y: &RxGrid, x: &TxGrid, theta: f64, cfg: &SystemConfig) -> Result<DividedGrid> {
    dim_check(y.n_sub() == cfg.n_sub && y.n_sym() == cfg.n_sym, || "receive grid does not match configuration".into())?;
    dim_check(x.n_sub() == y.n_sub() && x.n_sym() == y.n_sym(), || "transmit and receive grids differ".into())?;
    dim_check(y.vec_len() == cfg.n_rx_sen, || format!("{} receive elements, expected {}", y.vec_len(), cfg.n_rx_sen))?;
    let n = cfg.n_sub * cfg.n_sym;
    let mut ytil = Vec::with_capacity(n);
    let mut beam = Vec::with_capacity(n);
    let mut guarded = Vec::with_capacity(n);
    for k in 0..cfg.n_sub {
        let ar = cfg.rx_sen_steering(k, theta);
        let at = cfg.tx_steering(k, theta);
        for l in 0..cfg.n_sym {
            let xv = x.get(k, l);
            let b = at.dotc(xv);
            ytil.push(ar.dotc(y.get(k, l)));
            beam.push(b);
            guarded.push(b.norm() < DIVISION_GUARD * xv.norm() || b.norm() == 0.0);
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        if !guarded[i] {
            num += (ytil[i] / beam[i]).norm_sqr();
            den += ytil[i].norm_sqr();
        }
    }
    let alpha = if den > 0.0 && num > 0.0 { (num / den).sqrt() } else { 1.0 };
    let values = (0..n)
        .map(|i| if guarded[i] { C64::new(0.0, 0.0) } else { ytil[i] / (beam[i] * alpha) })
        .collect();
    Ok(DividedGrid { angle: theta, values, alpha, beam, guarded })
}

/// Delay-Doppler map of one beamforming angle, row-major `delay x doppler`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdMap {
    pub n_delay: usize,
    pub n_doppler: usize,
    pub angle: f64,
    pub values: Vec<C64>,
    pub predicted_noise_var: f64,
}

impl RdMap {
    pub fn at(&self, delay: usize, doppler: usize) -> C64 {
        self.values[delay * self.n_doppler + doppler]
    }

    pub fn power(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// Row and column of the strongest cell.
    pub fn peak(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if v.norm_sqr() > self.values[best].norm_sqr() {
                best = i;
            }
        }
        (best / self.n_doppler, best % self.n_doppler)
    }
}

/// Unitary 2-D transform: inverse DFT over subcarriers, forward DFT over symbols.
pub fn rd_transform(z: &[C64], n_sub: usize, n_sym: usize) -> Result<Vec<C64>> {
    dim_check(z.len() == n_sub * n_sym, || format!("{} values for a {n_sub}x{n_sym} grid", z.len()))?;
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(n_sub);
    let fft = planner.plan_fft_forward(n_sym);
    let mut out = z.to_vec();
    // rows are subcarriers; forward transform each row in place
    for row in out.chunks_mut(n_sym) {
        fft.process(row);
    }
    let mut col = vec![C64::new(0.0, 0.0); n_sub];
    for l in 0..n_sym {
        for k in 0..n_sub {
            col[k] = out[k * n_sym + l];
        }
        ifft.process(&mut col);
        for k in 0..n_sub {
            out[k * n_sym + l] = col[k];
        }
    }
    let scale = 1.0 / ((n_sub * n_sym) as f64).sqrt();
    out.iter_mut().for_each(|v| *v *= scale);
    Ok(out)
}

/// Predicted variance of noise-only RD cells.
///
/// Uses the realized beamformed symbols when `symbols` is given, otherwise the
/// beam power `a^H F_k F_k^H a` in place of `|a^H x_{k,l}|^2`.
pub fn predict_rd_noise_var(
    f: &PrecoderSet,
    symbols: Option<&SymbolGrid>,
    theta: f64,
    alpha: f64,
    cfg: &SystemConfig,
) -> Result<f64> {
    f.check_against(cfg)?;
    if !(alpha > 0.0) {
        return Err(IsacError::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let mut sum = 0.0;
    match symbols {
        Some(s) => {
            let x = transmit_grid(f, s)?;
            for k in 0..cfg.n_sub {
                let at = cfg.tx_steering(k, theta);
                for l in 0..cfg.n_sym {
                    let xv = x.get(k, l);
                    let b = at.dotc(xv).norm();
                    if b < DIVISION_GUARD * xv.norm() || b == 0.0 {
                        continue;
                    }
                    sum += 1.0 / (b * b);
                }
            }
        }
        None => {
            for k in 0..cfg.n_sub {
                let at = cfg.tx_steering(k, theta);
                let b = (f.get(k).adjoint() * &at).norm_squared();
                if b <= 0.0 {
                    return Err(IsacError::Numerical(format!("no beam power toward {theta} rad on subcarrier {k}")));
                }
                sum += cfg.n_sym as f64 / b;
            }
        }
    }
    Ok(predicted_var_from_sum(sum, alpha, cfg))
}

fn predicted_var_from_sum(sum: f64, alpha: f64, cfg: &SystemConfig) -> f64 {
    let nm = (cfg.n_sub * cfg.n_sym) as f64;
    cfg.n_rx_sen as f64 * cfg.noise_var_sen * sum / (alpha * alpha * nm)
}

/// Prediction from a divided grid's own beamformed symbols.
pub fn predict_from_divided(d: &DividedGrid, cfg: &SystemConfig) -> f64 {
    let sum: f64 = d
        .beam
        .iter()
        .zip(&d.guarded)
        .filter(|(_, &g)| !g)
        .map(|(b, _)| 1.0 / b.norm_sqr())
        .sum();
    predicted_var_from_sum(sum, d.alpha, cfg)
}

/// Full per-angle chain: beamform, divide, transform.
pub fn rd_map(y: &RxGrid, x: &TxGrid, theta: f64, cfg: &SystemConfig) -> Result<RdMap> {
    let d = beamform_and_divide(y, x, theta, cfg)?;
    let values = rd_transform(&d.values, cfg.n_sub, cfg.n_sym)?;
    Ok(RdMap { n_delay: cfg.n_sub, n_doppler: cfg.n_sym, angle: theta, values, predicted_noise_var: predict_from_divided(&d, cfg) })
}
