//! Scenario constants, precoder containers and the power / EE models.

use serde::{Deserialize, Serialize};

use crate::channel::steering_vector;
use crate::error::{dim_check, IsacError, Result};
use crate::linalg::{frob_sq, CMat, CVec, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Fd,
    Fc,
    Pc,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Fd => "fd",
            Architecture::Fc => "fc",
            Architecture::Pc => "pc",
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = IsacError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fd" => Ok(Architecture::Fd),
            "fc" => Ok(Architecture::Fc),
            "pc" => Ok(Architecture::Pc),
            other => Err(IsacError::Config(format!("unknown architecture '{other}'"))),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Every constant describing one transmitter/receiver scenario. Powers are in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub architecture: Architecture,
    pub n_tx: usize,
    pub n_rf: usize,
    pub n_rx: usize,
    pub n_rx_sen: usize,
    pub n_users: usize,
    pub n_streams: usize,
    pub n_sub: usize,
    pub n_sym: usize,
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub cp_len: usize,
    pub tx_spacing: f64,
    pub rx_spacing: f64,
    pub p_tx_w: f64,
    pub p_rf_w: f64,
    pub p_bb_w: f64,
    pub p_ps_w: f64,
    pub eta_pa: f64,
    pub noise_var_comm: f64,
    pub noise_var_sen: f64,
    pub p_th: f64,
    pub theta_targets: Vec<f64>,
    pub p_fa: f64,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(IsacError::Config(m));
        for (name, v) in [
            ("n_tx", self.n_tx),
            ("n_rf", self.n_rf),
            ("n_rx", self.n_rx),
            ("n_rx_sen", self.n_rx_sen),
            ("n_users", self.n_users),
            ("n_streams", self.n_streams),
            ("n_sub", self.n_sub),
            ("n_sym", self.n_sym),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.n_rf > self.n_tx {
            return bad(format!("n_rf ({}) exceeds n_tx ({})", self.n_rf, self.n_tx));
        }
        match self.architecture {
            Architecture::Fd if self.n_rf != self.n_tx => {
                return bad("a fully-digital transmitter needs n_rf == n_tx".into());
            }
            Architecture::Pc if !self.n_tx.is_multiple_of(self.n_rf) => {
                return bad(format!("n_tx ({}) is not divisible by n_rf ({})", self.n_tx, self.n_rf));
            }
            _ => {}
        }
        for (name, v) in [
            ("p_tx_w", self.p_tx_w),
            ("p_rf_w", self.p_rf_w),
            ("p_bb_w", self.p_bb_w),
            ("p_ps_w", self.p_ps_w),
            ("noise_var_sen", self.noise_var_sen),
            ("p_th", self.p_th),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        if !(self.noise_var_comm > 0.0 && self.noise_var_comm.is_finite()) {
            return bad("noise_var_comm must be positive".into());
        }
        if !(self.eta_pa > 0.0 && self.eta_pa <= 1.0) {
            return bad(format!("eta_pa must lie in (0, 1], got {}", self.eta_pa));
        }
        if !(self.p_fa > 0.0 && self.p_fa < 1.0) {
            return bad(format!("p_fa must lie in (0, 1), got {}", self.p_fa));
        }
        if !(self.carrier_hz > 0.0 && self.subcarrier_spacing_hz > 0.0) {
            return bad("carrier and subcarrier spacing must be positive".into());
        }
        if self.theta_targets.iter().any(|t| !(t.abs() < std::f64::consts::FRAC_PI_2)) {
            return bad("target angles must lie in (-pi/2, pi/2)".into());
        }
        Ok(())
    }

    /// Columns of each `F_k`: streams times users.
    pub fn n_cols(&self) -> usize {
        self.n_streams * self.n_users
    }

    /// Antennas per subarray (`N_t / N_RF`).
    pub fn subarray_size(&self) -> usize {
        self.n_tx / self.n_rf
    }

    /// Baseband offset `k * df` used for delay phases.
    pub fn baseband_offset(&self, k: usize) -> f64 {
        k as f64 * self.subcarrier_spacing_hz
    }

    /// RF frequency of subcarrier `k`, centred on the carrier.
    pub fn subcarrier_freq(&self, k: usize) -> f64 {
        self.carrier_hz + (k as f64 - self.n_sub as f64 / 2.0) * self.subcarrier_spacing_hz
    }

    pub fn symbol_duration(&self) -> f64 {
        1.0 / self.subcarrier_spacing_hz
    }

    pub fn cp_duration(&self) -> f64 {
        self.cp_len as f64 * self.symbol_duration() / self.n_sub as f64
    }

    /// Time between consecutive OFDM symbols, `T_sym + T_CP`.
    pub fn symbol_period(&self) -> f64 {
        self.symbol_duration() + self.cp_duration()
    }

    pub fn delay_resolution(&self) -> f64 {
        1.0 / (self.n_sub as f64 * self.subcarrier_spacing_hz)
    }

    pub fn doppler_resolution(&self) -> f64 {
        1.0 / (self.n_sym as f64 * self.symbol_period())
    }

    pub fn tx_steering(&self, k: usize, theta: f64) -> CVec {
        steering_vector(self.subcarrier_freq(k), self.carrier_hz, theta, self.n_tx, self.tx_spacing)
            .expect("validated configuration")
    }

    pub fn rx_sen_steering(&self, k: usize, theta: f64) -> CVec {
        steering_vector(self.subcarrier_freq(k), self.carrier_hz, theta, self.n_rx_sen, self.rx_spacing)
            .expect("validated configuration")
    }

    /// Transmit steering vectors toward every sensing angle, indexed `[k][theta]`.
    pub fn target_steering(&self) -> Vec<Vec<CVec>> {
        (0..self.n_sub)
            .map(|k| self.theta_targets.iter().map(|&t| self.tx_steering(k, t)).collect())
            .collect()
    }

    pub fn with_p_th(&self, p_th: f64) -> Self {
        Self { p_th, ..self.clone() }
    }
}

/// Per-subcarrier fully-digital precoders `F_k`, each `N_t x (N_s N_UE)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    mats: Vec<CMat>,
    n_streams: usize,
}

impl PrecoderSet {
    pub fn new(mats: Vec<CMat>, n_streams: usize) -> Result<Self> {
        if mats.is_empty() || n_streams == 0 {
            return Err(IsacError::Dimension("precoder set needs subcarriers and streams".into()));
        }
        let (r, c) = mats[0].shape();
        if c % n_streams != 0 || c == 0 {
            return Err(IsacError::Dimension(format!("{c} columns do not split into blocks of {n_streams}")));
        }
        if mats.iter().any(|m| m.shape() != (r, c)) {
            return Err(IsacError::Dimension("precoders differ in shape across subcarriers".into()));
        }
        Ok(Self { mats, n_streams })
    }

    pub fn zeros(cfg: &SystemConfig) -> Self {
        Self {
            mats: vec![CMat::zeros(cfg.n_tx, cfg.n_cols()); cfg.n_sub],
            n_streams: cfg.n_streams,
        }
    }

    pub fn check_against(&self, cfg: &SystemConfig) -> Result<()> {
        dim_check(
            self.mats.len() == cfg.n_sub
                && self.n_streams == cfg.n_streams
                && self.n_tx() == cfg.n_tx
                && self.n_cols() == cfg.n_cols(),
            || {
                format!(
                    "precoder set {}x{}x{} (N_s={}) does not match config {}x{}x{} (N_s={})",
                    self.mats.len(),
                    self.n_tx(),
                    self.n_cols(),
                    self.n_streams,
                    cfg.n_sub,
                    cfg.n_tx,
                    cfg.n_cols(),
                    cfg.n_streams
                )
            },
        )
    }

    pub fn mats(&self) -> &[CMat] {
        &self.mats
    }

    pub fn mats_mut(&mut self) -> &mut [CMat] {
        &mut self.mats
    }

    pub fn into_mats(self) -> Vec<CMat> {
        self.mats
    }

    pub fn get(&self, k: usize) -> &CMat {
        &self.mats[k]
    }

    pub fn n_sub(&self) -> usize {
        self.mats.len()
    }

    pub fn n_tx(&self) -> usize {
        self.mats[0].nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.mats[0].ncols()
    }

    pub fn n_streams(&self) -> usize {
        self.n_streams
    }

    pub fn n_users(&self) -> usize {
        self.n_cols() / self.n_streams
    }

    /// Column block `F_{k,u}`.
    pub fn user_block(&self, k: usize, u: usize) -> CMat {
        self.mats[k].columns(u * self.n_streams, self.n_streams).into_owned()
    }

    pub fn frob_sq(&self) -> f64 {
        self.mats.iter().map(frob_sq).sum()
    }

    /// Norm of row `i` of the horizontally stacked precoder.
    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.n_tx())
            .map(|i| self.mats.iter().map(|m| m.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>()).sum::<f64>().sqrt())
            .collect()
    }

    /// Frobenius norms of consecutive row groups of size `group`.
    pub fn group_norms(&self, group: usize) -> Vec<f64> {
        let rows = self.row_norms();
        rows.chunks(group).map(|c| c.iter().map(|r| r * r).sum::<f64>().sqrt()).collect()
    }

    /// `[F_1 | ... | F_K]`.
    pub fn stacked(&self) -> CMat {
        let (r, c) = (self.n_tx(), self.n_cols());
        let mut out = CMat::zeros(r, c * self.mats.len());
        for (k, m) in self.mats.iter().enumerate() {
            out.columns_mut(k * c, c).copy_from(m);
        }
        out
    }

    pub fn from_stacked(stacked: &CMat, n_sub: usize, n_streams: usize) -> Result<Self> {
        if n_sub == 0 || !stacked.ncols().is_multiple_of(n_sub) {
            return Err(IsacError::Dimension("stacked width is not a multiple of n_sub".into()));
        }
        let c = stacked.ncols() / n_sub;
        Self::new((0..n_sub).map(|k| stacked.columns(k * c, c).into_owned()).collect(), n_streams)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { mats: self.mats.iter().map(|m| m.scale(s)).collect(), n_streams: self.n_streams }
    }

    /// Copy with the rows whose flag in `keep` is false set to zero.
    pub fn with_rows_zeroed(&self, keep: &[bool]) -> Self {
        let mut out = self.clone();
        for m in &mut out.mats {
            for (i, &k) in keep.iter().enumerate() {
                if !k {
                    m.row_mut(i).fill(C64::new(0.0, 0.0));
                }
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.mats.iter().all(|m| m.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }
}

/// Diagonal of the selection matrix `A`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SelectionMask {
    active: Vec<bool>,
}

impl SelectionMask {
    pub fn new(active: Vec<bool>) -> Self {
        Self { active }
    }

    pub fn all_on(n: usize) -> Self {
        Self { active: vec![true; n] }
    }

    /// First `n` of `len` chains active.
    pub fn first_n(n: usize, len: usize) -> Self {
        Self { active: (0..len).map(|i| i < n).collect() }
    }

    /// Mask whose bit `i` is `(bits >> i) & 1`.
    pub fn from_bits(bits: u64, len: usize) -> Self {
        Self { active: (0..len).map(|i| (bits >> i) & 1 == 1).collect() }
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn is_on(&self, i: usize) -> bool {
        self.active[i]
    }

    pub fn with(&self, i: usize, on: bool) -> Self {
        let mut active = self.active.clone();
        active[i] = on;
        Self { active }
    }

    pub fn indices(&self) -> Vec<usize> {
        self.active.iter().enumerate().filter(|(_, a)| **a).map(|(i, _)| i).collect()
    }

    /// Expands a per-group mask to per-row flags with `group` rows per entry.
    pub fn expand(&self, group: usize) -> Vec<bool> {
        self.active.iter().flat_map(|&a| std::iter::repeat_n(a, group)).collect()
    }
}

impl std::fmt::Display for SelectionMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &a in &self.active {
            f.write_str(if a { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HybridArchitecture {
    FullyConnected,
    PartiallyConnected,
}

/// Analog/digital precoder pair with its chain-selection mask.
///
/// Fields are private: every constructor and mutator re-checks the
/// unit-modulus and connection-structure invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridPrecoder {
    analog: CMat,
    digital: Vec<CMat>,
    mask: SelectionMask,
    architecture: HybridArchitecture,
}

const MODULUS_TOL: f64 = 1e-9;

impl HybridPrecoder {
    pub fn new(analog: CMat, digital: Vec<CMat>, mask: SelectionMask, architecture: HybridArchitecture) -> Result<Self> {
        let h = Self { analog, digital, mask, architecture };
        h.check_invariants()?;
        Ok(h)
    }

    pub fn check_invariants(&self) -> Result<()> {
        let (n_t, n_rf) = self.analog.shape();
        if self.mask.len() != n_rf || self.digital.is_empty() {
            return Err(IsacError::Dimension("mask length or digital count mismatch".into()));
        }
        let cols = self.digital[0].ncols();
        if self.digital.iter().any(|d| d.nrows() != n_rf || d.ncols() != cols) {
            return Err(IsacError::Dimension("digital precoders must be N_RF x columns".into()));
        }
        let unit = |z: &C64| (z.norm() - 1.0).abs() <= MODULUS_TOL;
        let zero = |z: &C64| z.norm() == 0.0;
        match self.architecture {
            HybridArchitecture::FullyConnected => {
                for j in 0..n_rf {
                    let col = self.analog.column(j);
                    let ok = if self.mask.is_on(j) { col.iter().all(unit) } else { col.iter().all(zero) };
                    if !ok {
                        return Err(IsacError::InvalidArgument(format!("FC analog column {j} violates its structure")));
                    }
                }
            }
            HybridArchitecture::PartiallyConnected => {
                if n_t % n_rf != 0 {
                    return Err(IsacError::Config("PC analog needs N_t divisible by N_RF".into()));
                }
                let g = n_t / n_rf;
                for j in 0..n_rf {
                    for i in 0..n_t {
                        let z = &self.analog[(i, j)];
                        let in_block = i / g == j;
                        let ok = if in_block && self.mask.is_on(j) { unit(z) } else { zero(z) };
                        if !ok {
                            return Err(IsacError::InvalidArgument(format!(
                                "PC analog entry ({i},{j}) violates the block-diagonal structure"
                            )));
                        }
                    }
                }
            }
        }
        for (j, on) in self.mask.active().iter().enumerate() {
            if !on && self.digital.iter().any(|d| d.row(j).iter().any(|z| z.norm() != 0.0)) {
                return Err(IsacError::InvalidArgument(format!("digital row {j} of an inactive chain is nonzero")));
            }
        }
        Ok(())
    }

    pub fn analog(&self) -> &CMat {
        &self.analog
    }

    pub fn digital(&self) -> &[CMat] {
        &self.digital
    }

    pub fn mask(&self) -> &SelectionMask {
        &self.mask
    }

    pub fn architecture(&self) -> HybridArchitecture {
        self.architecture
    }

    pub fn n_tx(&self) -> usize {
        self.analog.nrows()
    }

    pub fn n_rf(&self) -> usize {
        self.analog.ncols()
    }

    /// Replaces the digital precoders, keeping the invariants.
    pub fn set_digital(&mut self, digital: Vec<CMat>) -> Result<()> {
        let old = std::mem::replace(&mut self.digital, digital);
        if let Err(e) = self.check_invariants() {
            self.digital = old;
            return Err(e);
        }
        Ok(())
    }

    pub fn set_analog(&mut self, analog: CMat) -> Result<()> {
        let old = std::mem::replace(&mut self.analog, analog);
        if let Err(e) = self.check_invariants() {
            self.analog = old;
            return Err(e);
        }
        Ok(())
    }

    pub fn scale_digital(&mut self, s: f64) {
        for d in &mut self.digital {
            *d *= C64::new(s, 0.0);
        }
    }

    /// Effective per-subcarrier FD precoders `F_RF A F_BB,k`.
    pub fn effective(&self, n_streams: usize) -> Result<PrecoderSet> {
        let mut a = self.analog.clone();
        for (j, on) in self.mask.active().iter().enumerate() {
            if !on {
                a.column_mut(j).fill(C64::new(0.0, 0.0));
            }
        }
        PrecoderSet::new(self.digital.iter().map(|d| &a * d).collect(), n_streams)
    }
}

fn circuit_rows_active(f: &PrecoderSet) -> usize {
    f.row_norms().iter().filter(|r| **r > 0.0).count()
}

/// Exact fully-digital power model with a strict nonzero-row count.
pub fn total_power_fd(f: &PrecoderSet, cfg: &SystemConfig) -> Result<f64> {
    f.check_against(cfg)?;
    Ok(f.frob_sq() / cfg.eta_pa + cfg.p_bb_w + cfg.p_rf_w * circuit_rows_active(f) as f64)
}

/// Smooth surrogate of [`total_power_fd`] using `tanh(lambda * row norm)`.
pub fn approx_total_power_fd(f: &PrecoderSet, lambda: f64, cfg: &SystemConfig) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(IsacError::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    f.check_against(cfg)?;
    let count: f64 = f.row_norms().iter().map(|r| (lambda * r).tanh()).sum();
    Ok(f.frob_sq() / cfg.eta_pa + cfg.p_bb_w + cfg.p_rf_w * count)
}

pub fn total_power_fc(h: &HybridPrecoder, cfg: &SystemConfig) -> Result<f64> {
    if h.architecture() != HybridArchitecture::FullyConnected {
        return Err(IsacError::InvalidArgument("expected a fully-connected precoder".into()));
    }
    let eff = h.effective(cfg.n_streams)?;
    eff.check_against(cfg)?;
    let chains = h.mask().count() as f64;
    Ok(eff.frob_sq() / cfg.eta_pa + cfg.p_bb_w + (cfg.p_rf_w + cfg.n_tx as f64 * cfg.p_ps_w) * chains)
}

pub fn total_power_pc(h: &HybridPrecoder, cfg: &SystemConfig) -> Result<f64> {
    if h.architecture() != HybridArchitecture::PartiallyConnected {
        return Err(IsacError::InvalidArgument("expected a partially-connected precoder".into()));
    }
    if !cfg.n_tx.is_multiple_of(cfg.n_rf) {
        return Err(IsacError::Config("n_tx not divisible by n_rf".into()));
    }
    let eff = h.effective(cfg.n_streams)?;
    eff.check_against(cfg)?;
    let g = cfg.subarray_size();
    let active = eff.group_norms(g).iter().filter(|n| **n > 0.0).count() as f64;
    let digital: f64 = h.digital().iter().map(frob_sq).sum();
    Ok(g as f64 * digital / cfg.eta_pa + cfg.p_bb_w + (cfg.p_rf_w + g as f64 * cfg.p_ps_w) * active)
}

/// `||F_k^H a||^2`.
pub fn beam_power(f_k: &CMat, steering: &CVec) -> Result<f64> {
    dim_check(f_k.nrows() == steering.len(), || {
        format!("steering length {} does not match {} antennas", steering.len(), f_k.nrows())
    })?;
    Ok((f_k.adjoint() * steering).norm_squared())
}

/// Smallest beam power over all subcarriers and sensing angles (infinite when there are none).
pub fn min_beam_power(f: &PrecoderSet, steering: &[Vec<CVec>]) -> Result<f64> {
    let mut lo = f64::INFINITY;
    for (k, per_k) in steering.iter().enumerate() {
        for a in per_k {
            lo = lo.min(beam_power(f.get(k), a)?);
        }
    }
    Ok(lo)
}

pub fn energy_efficiency(rate: f64, power: f64) -> Result<f64> {
    if !(power > 0.0) {
        return Err(IsacError::InvalidArgument(format!("power must be positive, got {power}")));
    }
    Ok(rate / power)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> SystemConfig {
        SystemConfig::setup1_fd()
    }

    #[test]
    fn zero_precoder_costs_only_baseband() {
        let cfg = tiny_cfg();
        let f = PrecoderSet::zeros(&cfg);
        assert!((total_power_fd(&f, &cfg).unwrap() - 0.2).abs() < 1e-15);
        assert!((approx_total_power_fd(&f, 3.0, &cfg).unwrap() - 0.2).abs() < 1e-15);
        assert!(approx_total_power_fd(&f, 0.0, &cfg).is_err());
    }

    #[test]
    fn single_row_power() {
        let cfg = tiny_cfg();
        let mut f = PrecoderSet::zeros(&cfg);
        f.mats_mut()[0][(3, 1)] = C64::new(0.6, 0.8);
        assert!((total_power_fd(&f, &cfg).unwrap() - 1.5).abs() < 1e-12);
        let approx = approx_total_power_fd(&f, 1.0, &cfg).unwrap();
        assert!((approx - (1.2 + 0.3 * 1f64.tanh())).abs() < 1e-12);
    }

    #[test]
    fn beam_power_of_matched_column() {
        let cfg = tiny_cfg();
        let a = cfg.tx_steering(1, 0.4);
        let f = CMat::from_columns(&[a.unscale((cfg.n_tx as f64).sqrt())]);
        assert!((beam_power(&f, &a).unwrap() - cfg.n_tx as f64).abs() < 1e-10);
        assert_eq!(beam_power(&CMat::zeros(cfg.n_tx, 2), &a).unwrap(), 0.0);
        assert!(beam_power(&CMat::zeros(3, 2), &a).is_err());
    }

    #[test]
    fn energy_efficiency_basic() {
        assert_eq!(energy_efficiency(4.0, 2.0).unwrap(), 2.0);
        assert_eq!(energy_efficiency(0.0, 1.3).unwrap(), 0.0);
        assert!(energy_efficiency(1.0, 0.0).is_err());
    }

    #[test]
    fn stacking_round_trip() {
        let cfg = tiny_cfg();
        let mut f = PrecoderSet::zeros(&cfg);
        for (k, m) in f.mats_mut().iter_mut().enumerate() {
            m[(k, k)] = C64::new(k as f64 + 1.0, -1.0);
        }
        let back = PrecoderSet::from_stacked(&f.stacked(), cfg.n_sub, cfg.n_streams).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn mask_helpers() {
        let m = SelectionMask::from_bits(0b1010, 4);
        assert_eq!(m.to_string(), "0101");
        assert_eq!(m.count(), 2);
        assert_eq!(m.indices(), vec![1, 3]);
        assert_eq!(SelectionMask::new(vec![true, false]).expand(2), vec![true, true, false, false]);
    }
}
