//! Spectral efficiency and the WMMSE reformulation of the rate.

use std::f64::consts::LN_2;

use crate::channel::ChannelSet;
use crate::error::{dim_check, IsacError, Result};
use crate::linalg::{hermitize, hpd_logdet, hpd_solve, identity, re_inner, CMat};
use crate::system::PrecoderSet;

fn check_pair(h: &ChannelSet, f: &PrecoderSet) -> Result<()> {
    dim_check(
        h.n_sub() == f.n_sub() && h.n_tx() == f.n_tx() && h.n_users() == f.n_users(),
        || {
            format!(
                "channel ({} sub, {} users, {} tx) and precoder ({} sub, {} users, {} tx) disagree",
                h.n_sub(),
                h.n_users(),
                h.n_tx(),
                f.n_sub(),
                f.n_users(),
                f.n_tx()
            )
        },
    )
}

/// `sum_{i != u} H F_i F_i^H H^H + sigma2 I` for user `u` on one subcarrier.
pub fn interference_covariance(h: &CMat, f_k: &CMat, u: usize, n_streams: usize, sigma2: f64) -> Result<CMat> {
    dim_check(h.ncols() == f_k.nrows() && f_k.ncols().is_multiple_of(n_streams), || {
        format!("H is {}x{}, F_k is {}x{}", h.nrows(), h.ncols(), f_k.nrows(), f_k.ncols())
    })?;
    let n_users = f_k.ncols() / n_streams;
    if u >= n_users {
        return Err(IsacError::InvalidArgument(format!("user {u} out of range")));
    }
    let mut r = identity(h.nrows()).scale(sigma2);
    for i in (0..n_users).filter(|&i| i != u) {
        let g = h * f_k.columns(i * n_streams, n_streams);
        r += &g * g.adjoint();
    }
    Ok(hermitize(&r))
}

/// Sum rate over users, averaged over subcarriers, in bits/s/Hz.
pub fn spectral_efficiency(h: &ChannelSet, f: &PrecoderSet, sigma2: f64) -> Result<f64> {
    check_pair(h, f)?;
    let ns = f.n_streams();
    let mut total = 0.0;
    for k in 0..f.n_sub() {
        for u in 0..f.n_users() {
            let hk = h.get(k, u);
            let r_in = interference_covariance(hk, f.get(k), u, ns, sigma2)?;
            let g = hk * f.user_block(k, u);
            let r_tot = &r_in + &g * g.adjoint();
            // log|I + R_in^{-1} G G^H| = log|R_tot| - log|R_in|
            total += (hpd_logdet(&r_tot)? - hpd_logdet(&r_in)?).max(0.0);
        }
    }
    Ok(total / (f.n_sub() as f64 * LN_2))
}

/// `E = (I - U^H H F_u)(I - U^H H F_u)^H + sum_{i != u} U^H H F_i F_i^H H^H U + sigma2 U^H U`.
pub fn mse_matrix(h: &CMat, f_k: &CMat, u_mat: &CMat, u: usize, n_streams: usize, sigma2: f64) -> Result<CMat> {
    dim_check(u_mat.nrows() == h.nrows() && u_mat.ncols() == n_streams, || {
        format!("receiver must be {}x{}, got {}x{}", h.nrows(), n_streams, u_mat.nrows(), u_mat.ncols())
    })?;
    let r_in = interference_covariance(h, f_k, u, n_streams, sigma2)?;
    let d = identity(n_streams) - u_mat.adjoint() * h * f_k.columns(u * n_streams, n_streams);
    Ok(hermitize(&(&d * d.adjoint() + u_mat.adjoint() * r_in * u_mat)))
}

/// Receivers `U[k][u]` and weights `W[k][u]` of the WMMSE reformulation.
#[derive(Debug, Clone, PartialEq)]
pub struct WmmseState {
    pub u: Vec<Vec<CMat>>,
    pub w: Vec<Vec<CMat>>,
}

/// Closed-form maximizers of the WMMSE surrogate for fixed `F`.
pub fn optimal_receivers_and_weights(h: &ChannelSet, f: &PrecoderSet, sigma2: f64) -> Result<WmmseState> {
    if !(sigma2 > 0.0) {
        return Err(IsacError::InvalidArgument("noise variance must be positive".into()));
    }
    check_pair(h, f)?;
    let ns = f.n_streams();
    let mut us = Vec::with_capacity(f.n_sub());
    let mut ws = Vec::with_capacity(f.n_sub());
    for k in 0..f.n_sub() {
        let mut uk = Vec::with_capacity(f.n_users());
        let mut wk = Vec::with_capacity(f.n_users());
        for u in 0..f.n_users() {
            let hk = h.get(k, u);
            let g = hk * f.user_block(k, u);
            let r_tot = interference_covariance(hk, f.get(k), u, ns, sigma2)? + &g * g.adjoint();
            let u_opt = hpd_solve(&r_tot, &g)?;
            // At the optimum E = I - U^H H F_u.
            let e = hermitize(&(identity(ns) - u_opt.adjoint() * &g));
            let w_opt = hpd_solve(&e, &identity(ns))?;
            uk.push(u_opt);
            wk.push(hermitize(&w_opt));
        }
        us.push(uk);
        ws.push(wk);
    }
    Ok(WmmseState { u: us, w: ws })
}

/// Surrogate rate `(1/N_sub) sum [ln|W| - tr(W E) + N_s]`, converted to bits.
pub fn wmmse_rate(f: &PrecoderSet, state: &WmmseState, h: &ChannelSet, sigma2: f64) -> Result<f64> {
    check_pair(h, f)?;
    let ns = f.n_streams();
    dim_check(state.u.len() == f.n_sub() && state.w.len() == f.n_sub(), || "WMMSE state size mismatch".into())?;
    let mut total = 0.0;
    for k in 0..f.n_sub() {
        for u in 0..f.n_users() {
            let e = mse_matrix(h.get(k, u), f.get(k), &state.u[k][u], u, ns, sigma2)?;
            let w = &state.w[k][u];
            total += hpd_logdet(w)? - re_inner(&w.adjoint(), &e) + ns as f64;
        }
    }
    Ok(total / (f.n_sub() as f64 * LN_2))
}

/// Quadratic form of the WMMSE surrogate for one subcarrier, in nats:
/// `rate_k(F) = constant - tr(F^H Q F) + 2 Re tr(C^H F)`.
#[derive(Debug, Clone)]
pub struct SurrogateTerms {
    pub q: CMat,
    pub c: CMat,
    pub constant: f64,
}

pub fn surrogate_terms(h: &ChannelSet, state: &WmmseState, n_streams: usize, sigma2: f64) -> Result<Vec<SurrogateTerms>> {
    let n_users = h.n_users();
    let n_tx = h.n_tx();
    let mut out = Vec::with_capacity(h.n_sub());
    for k in 0..h.n_sub() {
        let mut q = CMat::zeros(n_tx, n_tx);
        let mut c = CMat::zeros(n_tx, n_users * n_streams);
        let mut constant = 0.0;
        for u in 0..n_users {
            let hk = h.get(k, u);
            let um = &state.u[k][u];
            let w = &state.w[k][u];
            let hu = hk.adjoint() * um; // N_t x N_s
            q += &hu * w * hu.adjoint();
            c.columns_mut(u * n_streams, n_streams).copy_from(&(&hu * w));
            constant += hpd_logdet(w)? - w.trace().re - sigma2 * re_inner(&w.adjoint(), &(um.adjoint() * um))
                + n_streams as f64;
        }
        out.push(SurrogateTerms { q: hermitize(&q), c, constant });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;
    use crate::system::SystemConfig;

    fn scalar_cfg() -> SystemConfig {
        let mut cfg = SystemConfig::setup1_fd();
        cfg.n_tx = 1;
        cfg.n_rf = 1;
        cfg.n_rx = 1;
        cfg.n_users = 1;
        cfg.n_streams = 1;
        cfg.n_sub = 1;
        cfg
    }

    #[test]
    fn scalar_rate_and_weights() {
        let cfg = scalar_cfg();
        let h = ChannelSet::new(vec![vec![CMat::from_element(1, 1, C64::new(0.0, 1.0))]], &cfg).unwrap();
        let f = PrecoderSet::new(vec![CMat::from_element(1, 1, C64::new(0.6, 0.8))], 1).unwrap();
        assert!((spectral_efficiency(&h, &f, 1.0).unwrap() - 1.0).abs() < 1e-14);
        let st = optimal_receivers_and_weights(&h, &f, 1.0).unwrap();
        assert!((st.w[0][0][(0, 0)] - C64::new(2.0, 0.0)).norm() < 1e-12);
        let e = mse_matrix(h.get(0, 0), f.get(0), &st.u[0][0], 0, 1, 1.0).unwrap();
        assert!((e[(0, 0)].re - 0.5).abs() < 1e-12);
        assert!((wmmse_rate(&f, &st, &h, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_precoder_gives_identity_state() {
        let cfg = SystemConfig::setup1_fd();
        let h = crate::channel::generate_channel(&cfg, &Default::default(), 3).unwrap();
        let f = PrecoderSet::zeros(&cfg);
        assert_eq!(spectral_efficiency(&h, &f, 1.0).unwrap(), 0.0);
        let st = optimal_receivers_and_weights(&h, &f, 1.0).unwrap();
        assert!(st.u[1][0].norm() == 0.0);
        assert!((&st.w[1][0] - identity(2)).norm() < 1e-14);
        assert!(wmmse_rate(&f, &st, &h, 1.0).unwrap().abs() < 1e-14);
        let r = interference_covariance(h.get(0, 0), f.get(0), 0, 2, 1.0).unwrap();
        assert!((r - identity(2)).norm() == 0.0);
    }

    #[test]
    fn surrogate_terms_reproduce_the_rate() {
        let cfg = SystemConfig::setup1_fd();
        let h = crate::channel::generate_channel(&cfg, &Default::default(), 5).unwrap();
        let mut f = PrecoderSet::zeros(&cfg);
        for (k, m) in f.mats_mut().iter_mut().enumerate() {
            for (i, z) in m.iter_mut().enumerate() {
                *z = C64::new(((i * 7 + k) % 5) as f64 * 0.1 - 0.2, ((i * 3 + k) % 4) as f64 * 0.1);
            }
        }
        let st = optimal_receivers_and_weights(&h, &f, 1.0).unwrap();
        let terms = surrogate_terms(&h, &st, cfg.n_streams, 1.0).unwrap();
        let nats: f64 = terms
            .iter()
            .zip(f.mats())
            .map(|(t, fk)| t.constant - re_inner(fk, &(&t.q * fk)) + 2.0 * re_inner(&t.c, fk))
            .sum();
        let bits = nats / (cfg.n_sub as f64 * LN_2);
        let direct = wmmse_rate(&f, &st, &h, 1.0).unwrap();
        assert!((bits - direct).abs() < 1e-10 * direct.abs().max(1.0));
    }
}
