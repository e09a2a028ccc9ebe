use crate::error::{dim_check, IsacError, Result};
use crate::linalg::{CMat, CVec};

/// Optimal quadratic-transform variable `sqrt(R) / P_hat`.
pub fn optimal_mu(rate: f64, approx_power: f64) -> Result<f64> {
    if !(approx_power > 0.0) {
        return Err(IsacError::InvalidArgument(format!("approximate power must be positive, got {approx_power}")));
    }
    Ok(rate.max(0.0).sqrt() / approx_power)
}

/// `P_BB + ||F||^2/eta + cost * sum_g tanh(lambda r_g)` given group norms.
pub fn approx_group_power(frob_sq: f64, group_norms: &[f64], lambda: f64, cost: f64, eta: f64, p_bb: f64) -> f64 {
    frob_sq / eta + p_bb + cost * group_norms.iter().map(|r| (lambda * r).tanh()).sum::<f64>()
}

/// First-order expansion of `sum_g tanh(lambda r_g)` around reference group norms.
#[derive(Debug, Clone, PartialEq)]
pub struct RfCountLinearization {
    pub lambda: f64,
    pub ref_norms: Vec<f64>,
    /// `lambda sech^2(lambda r_g^ref)`.
    pub weights: Vec<f64>,
    /// `tanh(lambda r_g^ref) - w_g r_g^ref`, summed.
    pub offset: f64,
}

impl RfCountLinearization {
    pub fn eval(&self, norms: &[f64]) -> f64 {
        self.offset + self.weights.iter().zip(norms).map(|(w, r)| w * r).sum::<f64>()
    }
}

pub fn linearize_rf_count(ref_norms: &[f64], lambda: f64) -> Result<RfCountLinearization> {
    if !(lambda > 0.0) {
        return Err(IsacError::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let mut weights = Vec::with_capacity(ref_norms.len());
    let mut offset = 0.0;
    for &r in ref_norms {
        let t = (lambda * r).tanh();
        let w = lambda * (1.0 - t * t);
        offset += t - w * r;
        weights.push(w);
    }
    Ok(RfCountLinearization { lambda, ref_norms: ref_norms.to_vec(), weights, offset })
}

/// Minorizer of `||F_k^H a||^2` at `F_ref`: `2 Re<G, F> - B_ref` with `G = a a^H F_ref`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamLinearization {
    pub steering: CVec,
    /// `a^H F_ref` as a column vector of length `n_cols`.
    pub v: CVec,
    pub b_ref: f64,
}

impl BeamLinearization {
    /// `Re<G, F>`.
    pub fn inner(&self, f: &CMat) -> f64 {
        let w = f.transpose() * self.steering.conjugate();
        self.v.iter().zip(w.iter()).map(|(v, w)| (v.conj() * w).re).sum()
    }

    pub fn eval(&self, f: &CMat) -> f64 {
        2.0 * self.inner(f) - self.b_ref
    }

    /// `||G||_F`.
    pub fn g_norm(&self) -> f64 {
        self.steering.norm() * self.v.norm()
    }

    /// `F += c G`.
    pub fn add_scaled_g(&self, f: &mut CMat, c: f64) {
        for j in 0..f.ncols() {
            let vj = self.v[j] * c;
            for i in 0..f.nrows() {
                f[(i, j)] += self.steering[i] * vj;
            }
        }
    }
}

pub fn linearize_beam_power(f_ref: &CMat, steering: &CVec) -> Result<BeamLinearization> {
    dim_check(f_ref.nrows() == steering.len(), || {
        format!("steering length {} vs {} rows", steering.len(), f_ref.nrows())
    })?;
    let v: CVec = f_ref.transpose() * steering.conjugate();
    let b_ref = v.norm_squared();
    Ok(BeamLinearization { steering: steering.clone(), v, b_ref })
}
