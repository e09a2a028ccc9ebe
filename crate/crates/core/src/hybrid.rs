//! Factorization of fully-digital precoders into analog (unit-modulus) and
//! digital parts for fully- and partially-connected hybrid transmitters.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, IsacError, Result};
use crate::linalg::{frob_sq, hpd_cholesky, sorted_left_singular, unit_phase, CMat, CVec, C64, ONE, ZERO};
use crate::system::{HybridArchitecture, HybridPrecoder, PrecoderSet, SelectionMask, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchOptions {
    /// Stop when a sweep improves the residual by less than this fraction.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Extra FC runs from seeded random analog phases, tried while the best
    /// relative residual exceeds `1e-12`; the best run is kept.
    pub restarts: usize,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self { tol: 1e-4, max_sweeps: 50, restarts: 0 }
    }
}

/// Residual bookkeeping of one factorization.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// `||F_opt - F_RF F_BB||_F` after every individual update (FC), or per
    /// block (PC, concatenated in block order).
    pub residual_history: Vec<f64>,
    /// Residual before power normalization.
    pub residual: f64,
    /// Residual of the returned (possibly rescaled) precoder.
    pub normalized_residual: f64,
    pub normalized: bool,
    pub jittered: bool,
}

fn residual(f_opt: &CMat, analog: &CMat, digital: &CMat) -> f64 {
    frob_sq(&(f_opt - analog * digital)).sqrt()
}

fn phases_of(v: &CVec) -> CVec {
    v.map(|z| unit_phase(z).unwrap_or(ONE))
}

/// Least-squares digital precoder `(F_RF^H F_RF)^{-1} F_RF^H F_opt`; the flag
/// reports a regularized solve.
pub fn fc_digital_ls(f_rf: &CMat, f_opt: &CMat) -> Result<(CMat, bool)> {
    dim_check(f_rf.nrows() == f_opt.nrows(), || {
        format!("analog has {} rows, reference {}", f_rf.nrows(), f_opt.nrows())
    })?;
    let (ch, jittered) = hpd_cholesky(&(f_rf.adjoint() * f_rf))?;
    Ok((ch.solve(&(f_rf.adjoint() * f_opt)), jittered))
}

/// Closed-form phase update of analog column `q` with everything else fixed.
pub fn fc_analog_column_update(q: usize, f_rf: &CMat, f_bb: &CMat, f_opt: &CMat) -> Result<CVec> {
    dim_check(q < f_rf.ncols() && f_bb.nrows() == f_rf.ncols() && f_bb.ncols() == f_opt.ncols(), || {
        "column index or factor shapes are inconsistent".into()
    })?;
    let b_q = f_bb.row(q).transpose();
    let mut e = f_opt - f_rf * f_bb;
    e += f_rf.column(q) * f_bb.row(q);
    let f_fix: CVec = e * b_q.conjugate();
    Ok(CVec::from_iterator(
        f_fix.len(),
        f_fix.iter().zip(f_rf.column(q).iter()).map(|(z, old)| unit_phase(*z).unwrap_or(*old)),
    ))
}

/// Analog (`N_t x n`, unit modulus) and digital (`n x W`) factors of a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub analog: CMat,
    pub digital: CMat,
    pub residual_history: Vec<f64>,
    pub jittered: bool,
}

impl Factorization {
    pub fn residual(&self) -> f64 {
        *self.residual_history.last().expect("history starts with the initial residual")
    }
}

/// Block-coordinate descent on `||F_opt - F_RF F_BB||_F` with `n_active` analog
/// columns, started from the phases of the leading left singular vectors.
pub fn fc_factorize(f_opt: &CMat, n_active: usize, opts: &MatchOptions) -> Result<Factorization> {
    if n_active == 0 || n_active > f_opt.nrows() {
        return Err(IsacError::InvalidArgument(format!("cannot use {n_active} analog columns")));
    }
    let (u, _) = sorted_left_singular(f_opt);
    let mut analog = CMat::from_element(f_opt.nrows(), n_active, ONE);
    for q in 0..n_active.min(u.ncols()) {
        analog.set_column(q, &phases_of(&u.column(q).into_owned()));
    }
    let mut best = fc_factorize_from(f_opt, analog, opts)?;
    let scale = f_opt.norm().max(f64::MIN_POSITIVE);
    for r in 0..opts.restarts {
        if best.residual() <= 1e-12 * scale {
            break;
        }
        let mut rng = ChaCha20Rng::seed_from_u64(r as u64);
        let init = CMat::from_fn(f_opt.nrows(), n_active, |_, _| C64::from_polar(1.0, rng.random_range(0.0..TAU)));
        let cand = fc_factorize_from(f_opt, init, opts)?;
        if cand.residual() < best.residual() {
            best = cand;
        }
    }
    Ok(best)
}

/// BCD from a given unit-modulus analog matrix.
pub fn fc_factorize_from(f_opt: &CMat, mut analog: CMat, opts: &MatchOptions) -> Result<Factorization> {
    dim_check(analog.nrows() == f_opt.nrows() && analog.ncols() >= 1, || "initial analog matrix has the wrong shape".into())?;
    let n_active = analog.ncols();
    let (mut digital, mut jittered) = fc_digital_ls(&analog, f_opt)?;
    let mut history = vec![residual(f_opt, &analog, &digital)];
    for _ in 0..opts.max_sweeps {
        let start = *history.last().expect("nonempty");
        for q in 0..n_active {
            let col = fc_analog_column_update(q, &analog, &digital, f_opt)?;
            analog.set_column(q, &col);
            history.push(residual(f_opt, &analog, &digital));
        }
        let (d, jit) = fc_digital_ls(&analog, f_opt)?;
        digital = d;
        jittered |= jit;
        let end = residual(f_opt, &analog, &digital);
        history.push(end);
        if start - end <= opts.tol * start || end == 0.0 {
            break;
        }
    }
    Ok(Factorization { analog, digital, residual_history: history, jittered })
}

fn split_digital(stacked: &CMat, n_rf: usize, rows: &[usize], n_sub: usize) -> Vec<CMat> {
    let w = stacked.ncols() / n_sub;
    (0..n_sub)
        .map(|k| {
            let mut d = CMat::zeros(n_rf, w);
            for (r, &row) in rows.iter().enumerate() {
                d.row_mut(row).copy_from(&stacked.row(r).columns(k * w, w));
            }
            d
        })
        .collect()
}

/// Fully-connected factorization using the first `n_active` of `N_RF` chains.
pub fn fc_match(f_opt: &PrecoderSet, n_active: usize, cfg: &SystemConfig, opts: &MatchOptions) -> Result<(HybridPrecoder, MatchReport)> {
    f_opt.check_against(cfg)?;
    if n_active == 0 || n_active > cfg.n_rf {
        return Err(IsacError::InvalidArgument(format!("n_active = {n_active} outside 1..={}", cfg.n_rf)));
    }
    let stacked = f_opt.stacked();
    let fac = fc_factorize(&stacked, n_active, opts)?;
    let mut analog = CMat::zeros(cfg.n_tx, cfg.n_rf);
    analog.columns_mut(0, n_active).copy_from(&fac.analog);
    let rows: Vec<usize> = (0..n_active).collect();
    let digital = split_digital(&fac.digital, cfg.n_rf, &rows, cfg.n_sub);
    let hp = HybridPrecoder::new(analog, digital, SelectionMask::first_n(n_active, cfg.n_rf), HybridArchitecture::FullyConnected)?;
    finish(hp, f_opt, cfg, fac.residual_history, fac.jittered)
}

fn finish(hp: HybridPrecoder, f_opt: &PrecoderSet, cfg: &SystemConfig, history: Vec<f64>, jittered: bool) -> Result<(HybridPrecoder, MatchReport)> {
    let stacked = f_opt.stacked();
    let res = frob_sq(&(&stacked - hp.effective(cfg.n_streams)?.stacked())).sqrt();
    let before = hp.effective(cfg.n_streams)?.frob_sq();
    let hp = power_normalize(hp, cfg)?;
    let after = frob_sq(&(&stacked - hp.effective(cfg.n_streams)?.stacked())).sqrt();
    Ok((
        hp,
        MatchReport {
            residual_history: history,
            residual: res,
            normalized_residual: after,
            normalized: before > cfg.p_tx_w,
            jittered,
        },
    ))
}

/// Least-squares digital row for one subarray: `(f^H f)^{-1} f^H F_block`.
pub fn pc_digital_row(f_rf_i: &CVec, block: &CMat) -> Result<CVec> {
    dim_check(f_rf_i.len() == block.nrows(), || "analog vector and block row count differ".into())?;
    let g = f_rf_i.norm_squared();
    if g == 0.0 {
        return Err(IsacError::InvalidArgument("analog vector is zero".into()));
    }
    Ok((block.adjoint() * f_rf_i).conjugate() / C64::new(g, 0.0))
}

/// Unit-modulus maximizer of `Re tr(F_block f_bb^H f^H)`; entries whose
/// correlation is exactly zero keep the phase from `previous`.
pub fn pc_analog_update(block: &CMat, f_bb_row: &CVec, previous: &CVec) -> Result<CVec> {
    dim_check(block.ncols() == f_bb_row.len() && previous.len() == block.nrows(), || {
        "block, digital row and previous analog vector disagree".into()
    })?;
    let corr: CVec = block * f_bb_row.conjugate();
    Ok(CVec::from_iterator(
        corr.len(),
        corr.iter().zip(previous.iter()).map(|(z, old)| unit_phase(*z).unwrap_or(*old)),
    ))
}

/// Rank-one unit-modulus factorization `F_block ~ f row^T` of one subarray.
pub fn pc_factorize_block(block: &CMat, opts: &MatchOptions) -> Result<(CVec, CVec, Vec<f64>)> {
    let (u, _) = sorted_left_singular(block);
    let mut f = phases_of(&u.column(0).into_owned());
    let mut row = pc_digital_row(&f, block)?;
    let res = |f: &CVec, row: &CVec| frob_sq(&(block - f * row.transpose())).sqrt();
    let mut history = vec![res(&f, &row)];
    for _ in 0..opts.max_sweeps {
        let start = *history.last().expect("nonempty");
        f = pc_analog_update(block, &row, &f)?;
        history.push(res(&f, &row));
        row = pc_digital_row(&f, block)?;
        let end = res(&f, &row);
        history.push(end);
        if start - end <= opts.tol * start || end == 0.0 {
            break;
        }
    }
    Ok((f, row, history))
}

/// Partially-connected factorization; subarrays whose reference rows are all
/// zero are switched off.
pub fn pc_match(f_pc_opt: &PrecoderSet, cfg: &SystemConfig, opts: &MatchOptions) -> Result<(HybridPrecoder, MatchReport)> {
    f_pc_opt.check_against(cfg)?;
    if !cfg.n_tx.is_multiple_of(cfg.n_rf) {
        return Err(IsacError::Config("N_t must be divisible by N_RF".into()));
    }
    let g = cfg.subarray_size();
    let stacked = f_pc_opt.stacked();
    let mut analog = CMat::zeros(cfg.n_tx, cfg.n_rf);
    let mut dig_rows = CMat::zeros(cfg.n_rf, stacked.ncols());
    let mut active = vec![false; cfg.n_rf];
    let mut history = Vec::new();
    for i in 0..cfg.n_rf {
        let block = stacked.rows(i * g, g).into_owned();
        if block.iter().all(|z| *z == ZERO) {
            continue;
        }
        let (f, row, h) = pc_factorize_block(&block, opts)?;
        analog.view_mut((i * g, i), (g, 1)).copy_from(&f);
        dig_rows.row_mut(i).copy_from(&row.transpose());
        active[i] = true;
        history.extend(h);
    }
    if !active.iter().any(|a| *a) {
        return Err(IsacError::InvalidArgument("reference precoder is identically zero".into()));
    }
    let rows: Vec<usize> = (0..cfg.n_rf).collect();
    let digital = split_digital(&dig_rows, cfg.n_rf, &rows, cfg.n_sub);
    let hp = HybridPrecoder::new(analog, digital, SelectionMask::new(active), HybridArchitecture::PartiallyConnected)?;
    finish(hp, f_pc_opt, cfg, history, false)
}

/// Scales the digital precoders so the radiated power does not exceed `P_tx`.
pub fn power_normalize(mut h: HybridPrecoder, cfg: &SystemConfig) -> Result<HybridPrecoder> {
    let p = h.effective(cfg.n_streams)?.frob_sq();
    if p > cfg.p_tx_w {
        h.scale_digital((cfg.p_tx_w / p).sqrt());
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phase_vec(n: usize, seed: f64) -> CVec {
        CVec::from_iterator(n, (0..n).map(|i| C64::from_polar(1.0, seed * (i as f64 + 1.0).powi(2))))
    }

    #[test]
    fn orthogonal_ls_case() {
        // Columns of a DFT matrix are orthogonal with squared norm N.
        let n = 8;
        let f_rf = CMat::from_fn(n, 3, |i, j| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * (i * j) as f64 / n as f64));
        let f_opt = CMat::from_fn(n, 4, |i, j| C64::new(i as f64 * 0.3 - j as f64, 0.1 * (i + j) as f64));
        let (bb, jit) = fc_digital_ls(&f_rf, &f_opt).unwrap();
        assert!(!jit);
        assert!((bb - f_rf.adjoint() * &f_opt / C64::new(n as f64, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn column_update_simple_cases() {
        let f_rf = CMat::from_element(3, 1, ONE);
        let f_bb = CMat::from_element(1, 1, ONE);
        let pos = CMat::from_element(3, 1, C64::new(2.0, 0.0));
        let col = fc_analog_column_update(0, &f_rf, &f_bb, &pos).unwrap();
        assert!(col.iter().all(|z| (z - ONE).norm() < 1e-15));
        let neg = CMat::from_element(3, 1, C64::new(-1.0, 0.0));
        let col = fc_analog_column_update(0, &f_rf, &f_bb, &neg).unwrap();
        assert!(col.iter().all(|z| (z + ONE).norm() < 1e-15));
    }

    #[test]
    fn rank_one_recovery() {
        let a = phase_vec(8, 0.37);
        let b = CVec::from_iterator(6, (0..6).map(|j| C64::new(1.0 + j as f64, -0.5 * j as f64)));
        let f_opt = &a * b.transpose();
        let fac = fc_factorize(&f_opt, 1, &MatchOptions::default()).unwrap();
        assert!(*fac.residual_history.last().unwrap() < 1e-10);
        let ratio = fac.analog[(0, 0)] / a[0];
        assert!((fac.analog.column(0) - &a * ratio).norm() < 1e-10);
    }

    #[test]
    fn pc_digital_row_is_column_mean_for_ones() {
        let f = CVec::from_element(4, ONE);
        let block = CMat::from_fn(4, 3, |i, j| C64::new((i * 3 + j) as f64, 1.0));
        let row = pc_digital_row(&f, &block).unwrap();
        for j in 0..3 {
            let mean: C64 = block.column(j).iter().sum::<C64>() / C64::new(4.0, 0.0);
            assert!((row[j] - mean).norm() < 1e-12);
        }
    }

    #[test]
    fn group_size_one_pc_is_exact() {
        let mut cfg = SystemConfig::setup1_fd();
        cfg.architecture = crate::system::Architecture::Pc;
        let mut f = PrecoderSet::zeros(&cfg);
        for (k, m) in f.mats_mut().iter_mut().enumerate() {
            for (i, z) in m.iter_mut().enumerate() {
                *z = C64::new(0.1 * ((i + k) % 3) as f64, 0.05 * (i % 5) as f64 - 0.1);
            }
        }
        let (hp, rep) = pc_match(&f, &cfg, &MatchOptions::default()).unwrap();
        assert!(rep.residual < 1e-10, "{}", rep.residual);
        assert_eq!(hp.mask().count(), cfg.n_rf);
    }
}
