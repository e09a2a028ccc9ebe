use crate::channel::ChannelSet;
use crate::error::{IsacError, Result};
use crate::linalg::{sorted_right_singular, CMat, CVec, C64, ZERO};
use crate::system::{min_beam_power, PrecoderSet, SystemConfig};

fn masked(v: &CVec, keep: &[bool]) -> CVec {
    CVec::from_iterator(v.len(), v.iter().zip(keep).map(|(z, &k)| if k { *z } else { ZERO }))
}

/// Unit-power matched-filter style communication precoder (top right singular
/// vectors of each user channel restricted to the kept rows).
fn comm_directions(cfg: &SystemConfig, h: &ChannelSet, keep: &[bool]) -> PrecoderSet {
    let ns = cfg.n_streams;
    let blocks = (cfg.n_sub * cfg.n_users) as f64;
    let mats = (0..cfg.n_sub)
        .map(|k| {
            let mut fk = CMat::zeros(cfg.n_tx, cfg.n_cols());
            for u in 0..cfg.n_users {
                let mut hm = h.get(k, u).clone();
                for (j, &on) in keep.iter().enumerate() {
                    if !on {
                        hm.column_mut(j).fill(ZERO);
                    }
                }
                let (v, s) = sorted_right_singular(&hm);
                let mut block = CMat::zeros(cfg.n_tx, ns);
                let mut used = 0;
                for (c, &sv) in s.iter().enumerate().take(ns) {
                    if sv > 0.0 {
                        block.set_column(c, &masked(&v.column(c).into_owned(), keep));
                        used += 1;
                    }
                }
                let n = block.norm();
                if used > 0 && n > 0.0 {
                    block /= C64::new(n * blocks.sqrt(), 0.0);
                }
                fk.columns_mut(u * ns, ns).copy_from(&block);
            }
            fk
        })
        .collect();
    PrecoderSet::new(mats, ns).expect("shapes follow the configuration")
}

/// Sensing component aligned with the communication part's beam response.
fn sensing_directions(comm: &PrecoderSet, steering: &[Vec<CVec>], keep: &[bool]) -> PrecoderSet {
    let cols = comm.n_cols();
    let mats = comm
        .mats()
        .iter()
        .zip(steering)
        .map(|(ck, per_k)| {
            let mut d = CMat::zeros(ck.nrows(), cols);
            for a in per_k {
                let am = masked(a, keep);
                let an = am.norm();
                if an == 0.0 {
                    continue;
                }
                let resp: CVec = ck.adjoint() * &am;
                let rn = resp.norm();
                let dir: CVec = if rn > 1e-12 * ck.norm().max(1e-300) {
                    resp.conjugate() / C64::new(rn, 0.0)
                } else {
                    CVec::from_element(cols, C64::new(1.0 / (cols as f64).sqrt(), 0.0))
                };
                d += (am / C64::new(an, 0.0)) * dir.transpose();
            }
            d
        })
        .collect();
    PrecoderSet::new(mats, comm.n_streams()).expect("same shape as the communication part")
}

fn combine(c: &PrecoderSet, cs: f64, d: &PrecoderSet, beta: f64) -> PrecoderSet {
    PrecoderSet::new(
        c.mats().iter().zip(d.mats()).map(|(a, b)| a * C64::new(cs, 0.0) + b * C64::new(beta, 0.0)).collect(),
        c.n_streams(),
    )
    .expect("matching shapes")
}

/// A precoder satisfying the beam-power floor and the power budget with only
/// `keep` rows nonzero. Communication power is halved until the sensing part
/// fits; an error is returned when even a pure sensing beam cannot meet `P_th`.
pub fn initial_precoder(cfg: &SystemConfig, h: &ChannelSet, keep: &[bool]) -> Result<PrecoderSet> {
    if keep.len() != cfg.n_tx || !keep.iter().any(|k| *k) {
        return Err(IsacError::InvalidArgument("initialization needs at least one active row".into()));
    }
    let comm = comm_directions(cfg, h, keep);
    let steering = cfg.target_steering();
    let has_sensing = cfg.p_th > 0.0 && !cfg.theta_targets.is_empty();
    if !has_sensing {
        return Ok(comm.scaled((0.5 * cfg.p_tx_w).sqrt()));
    }
    let sense = sensing_directions(&comm, &steering, keep);
    let goal = cfg.p_th * (1.0 + 1e-9);
    let feasible_beam = |f: &PrecoderSet| min_beam_power(f, &steering).map(|b| b >= goal);
    const ATTEMPTS: usize = 24;
    for attempt in 0..=ATTEMPTS {
        let pc = if attempt == ATTEMPTS { 0.0 } else { cfg.p_tx_w * 0.5f64.powi(attempt as i32 + 1) };
        let cs = pc.sqrt();
        let beta = if feasible_beam(&combine(&comm, cs, &sense, 0.0))? {
            0.0
        } else {
            let mut hi = (cfg.p_th / cfg.n_tx as f64).sqrt().max(1e-12);
            let mut grown = 0;
            while !feasible_beam(&combine(&comm, cs, &sense, hi))? {
                hi *= 2.0;
                grown += 1;
                if grown > 200 {
                    break;
                }
            }
            if grown > 200 {
                continue;
            }
            let mut lo = 0.0;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if feasible_beam(&combine(&comm, cs, &sense, mid))? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        let f = combine(&comm, cs, &sense, beta);
        if f.frob_sq() <= cfg.p_tx_w {
            return Ok(f);
        }
    }
    Err(IsacError::Infeasible(format!(
        "no precoder on {} active rows reaches beam power {} within {} W",
        keep.iter().filter(|k| **k).count(),
        cfg.p_th,
        cfg.p_tx_w
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channel, ClusterParams};

    #[test]
    fn init_is_feasible_and_respects_mask() {
        let cfg = SystemConfig::setup1_fd().with_p_th(6.0);
        let h = generate_channel(&cfg, &ClusterParams::default(), 9).unwrap();
        let keep = vec![true, false, true, true, false, true, true, true];
        let f = initial_precoder(&cfg, &h, &keep).unwrap();
        assert!(f.frob_sq() <= cfg.p_tx_w);
        assert!(min_beam_power(&f, &cfg.target_steering()).unwrap() >= cfg.p_th);
        assert_eq!(f.row_norms()[1], 0.0);
        assert_eq!(f.row_norms()[4], 0.0);
    }

    #[test]
    fn single_row_limit() {
        // One row: B_k = ||row_k||^2 <= P_tx / N_sub when spread evenly.
        let base = SystemConfig::setup1_fd();
        let h = generate_channel(&base, &ClusterParams::default(), 1).unwrap();
        let mut keep = vec![false; base.n_tx];
        keep[2] = true;
        let cap = base.p_tx_w / base.n_sub as f64;
        assert!(initial_precoder(&base.with_p_th(0.9 * cap), &h, &keep).is_ok());
        let err = initial_precoder(&base.with_p_th(1.1 * cap), &h, &keep).unwrap_err();
        assert!(err.is_infeasible());
    }
}
