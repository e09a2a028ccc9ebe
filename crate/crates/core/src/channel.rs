//! Array responses, user channels and radar target scenes.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{IsacError, Result};
use crate::linalg::{CMat, CVec, C64};
use crate::system::SystemConfig;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Uniform linear array response at frequency `freq_hz`.
///
/// The element spacing is given in wavelengths of `carrier_hz`, so the
/// phase progression grows with `freq_hz / carrier_hz` (beam squint) and
/// reduces to the textbook ULA vector when `freq_hz == carrier_hz`.
pub fn steering_vector(
    freq_hz: f64,
    carrier_hz: f64,
    theta_rad: f64,
    n_elem: usize,
    spacing_wavelengths: f64,
) -> Result<CVec> {
    if n_elem == 0 {
        return Err(IsacError::InvalidArgument("steering vector needs at least one element".into()));
    }
    if !(carrier_hz > 0.0) || !freq_hz.is_finite() || !theta_rad.is_finite() {
        return Err(IsacError::InvalidArgument(format!(
            "bad steering arguments: f={freq_hz}, fc={carrier_hz}, theta={theta_rad}"
        )));
    }
    let step = -2.0 * PI * (freq_hz / carrier_hz) * spacing_wavelengths * theta_rad.sin();
    Ok(CVec::from_iterator(n_elem, (0..n_elem).map(|n| C64::from_polar(1.0, step * n as f64))))
}

pub fn delay_of_range(range_m: f64) -> f64 {
    2.0 * range_m / SPEED_OF_LIGHT
}

pub fn doppler_of_velocity(v_mps: f64, carrier_hz: f64) -> f64 {
    2.0 * v_mps * carrier_hz / SPEED_OF_LIGHT
}

/// Geometry of the clustered channel model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterParams {
    pub n_clusters: usize,
    pub rays_per_cluster: usize,
    /// Standard deviation (radians) of ray angles around their cluster centre.
    pub angle_spread_rad: f64,
    /// Cluster delays are drawn uniformly in `[0, delay_spread_s)`.
    pub delay_spread_s: f64,
    /// Cluster centres are uniform in `[-max_angle_rad, max_angle_rad]`.
    #[serde(default = "default_max_angle")]
    pub max_angle_rad: f64,
}

fn default_max_angle() -> f64 {
    PI / 3.0
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            n_clusters: 3,
            rays_per_cluster: 4,
            angle_spread_rad: 5f64.to_radians(),
            delay_spread_s: 50e-9,
            max_angle_rad: default_max_angle(),
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.rays_per_cluster == 0 {
            return Err(IsacError::InvalidArgument("cluster and ray counts must be positive".into()));
        }
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !finite_nonneg(self.angle_spread_rad)
            || !finite_nonneg(self.delay_spread_s)
            || !finite_nonneg(self.max_angle_rad)
            || self.max_angle_rad >= PI / 2.0
        {
            return Err(IsacError::InvalidArgument(format!("bad cluster parameters: {self:?}")));
        }
        Ok(())
    }

    pub fn n_paths(&self) -> usize {
        self.n_clusters * self.rays_per_cluster
    }
}

/// One propagation path from the transmitter to a user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    pub gain: C64,
    pub aod_rad: f64,
    pub aoa_rad: f64,
    pub delay_s: f64,
}

/// User channels indexed by subcarrier then user, each `n_rx x n_tx`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    h: Vec<Vec<CMat>>,
}

impl ChannelSet {
    pub fn new(h: Vec<Vec<CMat>>, cfg: &SystemConfig) -> Result<Self> {
        if h.len() != cfg.n_sub {
            return Err(IsacError::Dimension(format!("expected {} subcarriers, got {}", cfg.n_sub, h.len())));
        }
        for per_k in &h {
            if per_k.len() != cfg.n_users {
                return Err(IsacError::Dimension(format!("expected {} users, got {}", cfg.n_users, per_k.len())));
            }
            for m in per_k {
                if m.nrows() != cfg.n_rx || m.ncols() != cfg.n_tx {
                    return Err(IsacError::Dimension(format!(
                        "channel must be {}x{}, got {}x{}",
                        cfg.n_rx,
                        cfg.n_tx,
                        m.nrows(),
                        m.ncols()
                    )));
                }
                if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(IsacError::InvalidArgument("channel has non-finite entries".into()));
                }
            }
        }
        Ok(Self { h })
    }

    pub fn get(&self, k: usize, u: usize) -> &CMat {
        &self.h[k][u]
    }

    pub fn n_sub(&self) -> usize {
        self.h.len()
    }

    pub fn n_users(&self) -> usize {
        self.h.first().map_or(0, Vec::len)
    }

    pub fn n_tx(&self) -> usize {
        self.h[0][0].ncols()
    }

    /// Channel with transmit columns outside `active` set to zero.
    pub fn masked(&self, active: &[bool]) -> Self {
        let h = self
            .h
            .iter()
            .map(|per_k| {
                per_k
                    .iter()
                    .map(|m| {
                        let mut m = m.clone();
                        for (j, &on) in active.iter().enumerate() {
                            if !on {
                                m.column_mut(j).fill(C64::new(0.0, 0.0));
                            }
                        }
                        m
                    })
                    .collect()
            })
            .collect();
        Self { h }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { h: self.h.iter().map(|v| v.iter().map(|m| m.scale(c)).collect()).collect() }
    }
}

/// Builds `H_{k,u} = sum_p g_p a_r(aoa_p) a_t(aod_p)^H exp(-j 2 pi k df tau_p)`.
///
/// Array responses are evaluated at the carrier; only the delay phase varies with `k`.
pub fn channel_from_paths(cfg: &SystemConfig, paths: &[Vec<PathComponent>]) -> Result<ChannelSet> {
    if paths.len() != cfg.n_users {
        return Err(IsacError::Dimension(format!("expected paths for {} users, got {}", cfg.n_users, paths.len())));
    }
    let mut h = Vec::with_capacity(cfg.n_sub);
    for k in 0..cfg.n_sub {
        let f = cfg.carrier_hz;
        let mut per_k = Vec::with_capacity(cfg.n_users);
        for user_paths in paths {
            let mut m = CMat::zeros(cfg.n_rx, cfg.n_tx);
            for p in user_paths {
                let ar = steering_vector(f, cfg.carrier_hz, p.aoa_rad, cfg.n_rx, cfg.rx_spacing)?;
                let at = steering_vector(f, cfg.carrier_hz, p.aod_rad, cfg.n_tx, cfg.tx_spacing)?;
                let phase = C64::from_polar(1.0, -2.0 * PI * cfg.baseband_offset(k) * p.delay_s);
                m += (&ar * at.adjoint()) * (p.gain * phase);
            }
            per_k.push(m);
        }
        h.push(per_k);
    }
    ChannelSet::new(h, cfg)
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Random clustered geometric paths for every user, `CN(0, 1/L)` gains.
pub fn draw_paths<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    params: &ClusterParams,
    rng: &mut R,
) -> Result<Vec<Vec<PathComponent>>> {
    params.validate()?;
    let scale = 1.0 / (params.n_paths() as f64).sqrt();
    let mut all = Vec::with_capacity(cfg.n_users);
    for _ in 0..cfg.n_users {
        let mut paths = Vec::with_capacity(params.n_paths());
        for _ in 0..params.n_clusters {
            let aod_c = rng.random_range(-params.max_angle_rad..=params.max_angle_rad);
            let aoa_c = rng.random_range(-params.max_angle_rad..=params.max_angle_rad);
            let tau_c = if params.delay_spread_s > 0.0 { rng.random_range(0.0..params.delay_spread_s) } else { 0.0 };
            for _ in 0..params.rays_per_cluster {
                let da: f64 = StandardNormal.sample(rng);
                let db: f64 = StandardNormal.sample(rng);
                paths.push(PathComponent {
                    gain: complex_normal(rng) * scale,
                    aod_rad: (aod_c + params.angle_spread_rad * da).clamp(-1.5, 1.5),
                    aoa_rad: (aoa_c + params.angle_spread_rad * db).clamp(-1.5, 1.5),
                    delay_s: tau_c,
                });
            }
        }
        all.push(paths);
    }
    Ok(all)
}

/// Clustered wideband channel, a pure function of `(cfg, params, seed)`.
pub fn generate_channel(cfg: &SystemConfig, params: &ClusterParams, seed: u64) -> Result<ChannelSet> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    generate_channel_with(cfg, params, &mut rng)
}

pub fn generate_channel_with<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    params: &ClusterParams,
    rng: &mut R,
) -> Result<ChannelSet> {
    let paths = draw_paths(cfg, params, rng)?;
    channel_from_paths(cfg, &paths)
}

/// A point target seen by the sensing receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub angle_rad: f64,
    pub range_m: f64,
    pub velocity_mps: f64,
    /// Complex reflection gain `[re, im]`.
    pub rcs_gain: [f64; 2],
}

impl Target {
    pub fn beta(&self) -> C64 {
        C64::new(self.rcs_gain[0], self.rcs_gain[1])
    }

    pub fn delay_s(&self) -> f64 {
        delay_of_range(self.range_m)
    }

    pub fn doppler_hz(&self, carrier_hz: f64) -> f64 {
        doppler_of_velocity(self.velocity_mps, carrier_hz)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TargetScene {
    pub targets: Vec<Target>,
}

impl TargetScene {
    pub fn new(targets: Vec<Target>) -> Self {
        Self { targets }
    }

    /// Rejects malformed targets; returns human-readable warnings for targets
    /// whose echo delay exceeds the cyclic prefix (they alias in the RD map).
    pub fn validate(&self, cfg: &SystemConfig) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        for (i, t) in self.targets.iter().enumerate() {
            if !(t.angle_rad.abs() < PI / 2.0) || !t.range_m.is_finite() || t.range_m < 0.0 || !t.velocity_mps.is_finite() {
                return Err(IsacError::InvalidArgument(format!("target {i} is malformed: {t:?}")));
            }
            if t.delay_s() >= cfg.cp_duration() {
                warnings.push(format!(
                    "target {i}: delay {:.3e} s exceeds the cyclic prefix {:.3e} s",
                    t.delay_s(),
                    cfg.cp_duration()
                ));
            }
        }
        Ok(warnings)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let targets: Vec<Target> = serde_json::from_str(s)?;
        Ok(Self { targets })
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// Ordered receive-beamforming angles with the association tolerance `epsilon_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    angles: Vec<f64>,
    tolerance: f64,
}

impl AngleGrid {
    pub fn new(angles: Vec<f64>, tolerance: f64) -> Result<Self> {
        if angles.is_empty() {
            return Err(IsacError::InvalidArgument("angle grid is empty".into()));
        }
        if !(tolerance > 0.0) {
            return Err(IsacError::InvalidArgument("angle tolerance must be positive".into()));
        }
        for w in angles.windows(2) {
            let gap = w[1] - w[0];
            if !(gap > 0.0) {
                return Err(IsacError::InvalidArgument("angle grid must be strictly increasing".into()));
            }
            if gap > tolerance * (1.0 + 1e-12) {
                return Err(IsacError::InvalidArgument(format!(
                    "grid spacing {gap} exceeds the tolerance {tolerance}"
                )));
            }
        }
        Ok(Self { angles, tolerance })
    }

    /// Grid from `start` to `stop` (inclusive when it lands on a step) with spacing `step`.
    pub fn uniform(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(stop >= start) {
            return Err(IsacError::InvalidArgument("bad uniform angle grid".into()));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
        Self::new((0..n).map(|i| start + step * i as f64).collect(), step)
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn nearest_index(&self, theta: f64) -> usize {
        let mut best = 0;
        for (i, a) in self.angles.iter().enumerate() {
            if (a - theta).abs() < (self.angles[best] - theta).abs() {
                best = i;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::SystemConfig;

    #[test]
    fn steering_broadside_is_all_ones() {
        let a = steering_vector(73e9, 73e9, 0.0, 6, 0.5).unwrap();
        assert!(a.iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn steering_unit_modulus_and_conjugate_symmetry() {
        for &theta in &[0.3, -1.1, 0.47] {
            let a = steering_vector(73.1e9, 73e9, theta, 9, 0.5).unwrap();
            let b = steering_vector(73.1e9, 73e9, -theta, 9, 0.5).unwrap();
            assert!(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
            assert!((a.dotc(&a).re - 9.0).abs() < 1e-12);
            assert!((a.conjugate() - b).norm() < 1e-12);
        }
        assert!(steering_vector(1.0, 1.0, 0.0, 0, 0.5).is_err());
    }

    #[test]
    fn setup_one_range_and_velocity_conversions() {
        assert_eq!(delay_of_range(0.0), 0.0);
        let tau = delay_of_range(156.0);
        assert!((tau - 312.0 / 299_792_458.0).abs() < 1e-18);
        assert!((tau - 1.0407e-6).abs() < 1e-9);
        let fd = doppler_of_velocity(-61.0, 73e9);
        assert!((fd + 29_707.3).abs() < 5.0, "{fd}");
    }

    #[test]
    fn single_path_channel_is_rank_one_and_flat() {
        let cfg = SystemConfig::setup1_fd();
        let paths = vec![
            vec![PathComponent { gain: C64::new(1.0, 0.0), aod_rad: 0.0, aoa_rad: 0.0, delay_s: 0.0 }];
            cfg.n_users
        ];
        let h = channel_from_paths(&cfg, &paths).unwrap();
        for k in 0..cfg.n_sub {
            assert!((h.get(k, 0) - h.get(0, 0)).norm() < 1e-12);
        }
        let s = h.get(0, 0).clone().singular_values();
        assert!(s.iter().filter(|v| **v > 1e-9).count() == 1);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SystemConfig::setup1_fd();
        let p = ClusterParams::default();
        assert_eq!(generate_channel(&cfg, &p, 11).unwrap(), generate_channel(&cfg, &p, 11).unwrap());
        assert_ne!(generate_channel(&cfg, &p, 11).unwrap(), generate_channel(&cfg, &p, 12).unwrap());
    }

    #[test]
    fn angle_grid_validation() {
        assert!(AngleGrid::new(vec![], 0.1).is_err());
        assert!(AngleGrid::new(vec![0.0, 0.3], 0.1).is_err());
        let g = AngleGrid::uniform(-0.2, 0.2, 0.1).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.nearest_index(0.04), 2);
    }
}
