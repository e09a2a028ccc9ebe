//! Scenario files: TOML with a shared `[system]` section, per-architecture
//! array sizes, channel geometry, the target list and sensing settings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{AngleGrid, ClusterParams, Target, TargetScene};
use crate::error::{IsacError, Result};
use crate::optimizer::OptimizerOptions;
use crate::radar::CfarConfig;
use crate::system::{Architecture, SystemConfig};

const SETUP1: &str = include_str!("../presets/setup1.toml");
const SETUP2: &str = include_str!("../presets/setup2.toml");

pub const PRESET_NAMES: [&str; 2] = ["setup1", "setup2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommonSection {
    pub n_rx: usize,
    pub n_rx_sen: usize,
    pub n_users: usize,
    pub n_streams: usize,
    pub n_sub: usize,
    pub n_sym: usize,
    pub cp_len: usize,
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub tx_spacing: f64,
    pub rx_spacing: f64,
    pub eta_pa: f64,
    /// `P_tx / noise_var_comm` in dB; used when `p_tx_w` is absent.
    pub comm_snr_db: f64,
    pub noise_var_comm: f64,
    pub noise_var_sen: f64,
    #[serde(default)]
    pub p_tx_w: Option<f64>,
    pub p_rf_mw: f64,
    pub p_bb_mw: f64,
    pub p_ps_mw: f64,
    pub p_th: f64,
    pub p_fa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSection {
    pub n_tx: usize,
    pub n_rf: usize,
    /// Target reflection SNR `|beta|^2 / noise_var_sen` in dB.
    pub target_snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSections {
    pub fd: Option<ArchSection>,
    pub fc: Option<ArchSection>,
    pub pc: Option<ArchSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub angle_deg: f64,
    pub range_m: f64,
    pub velocity_mps: f64,
    /// Overrides the architecture's target SNR for this target.
    #[serde(default)]
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingSection {
    pub angle_min_deg: f64,
    pub angle_max_deg: f64,
    pub angle_step_deg: f64,
    pub n_train: usize,
    pub n_guard: usize,
    #[serde(default)]
    pub p_th_grid: Vec<f64>,
    /// Radar Monte-Carlo trials per channel draw.
    #[serde(default = "default_trials_per_draw")]
    pub trials_per_draw: usize,
    /// Fixed CFAR threshold scale, e.g. from `calibrate-cfar`; closed form when absent.
    #[serde(default)]
    pub cfar_alpha: Option<f64>,
}

fn default_trials_per_draw() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub system: CommonSection,
    pub arch: ArchSections,
    #[serde(default)]
    pub channel: ClusterParams,
    #[serde(default)]
    pub targets: Vec<TargetSpec>,
    pub sensing: SensingSection,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
}

impl Scenario {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "setup1" => Self::from_toml_str(SETUP1),
            "setup2" => Self::from_toml_str(SETUP2),
            other => Err(IsacError::Config(format!(
                "unknown preset '{other}' (available: {})",
                PRESET_NAMES.join(", ")
            ))),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(s).map_err(|e| IsacError::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| IsacError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.optimizer.validate()?;
        for arch in [Architecture::Fd, Architecture::Fc, Architecture::Pc] {
            if self.arch_section(arch).is_ok() {
                self.system(arch, None)?;
            }
        }
        self.angle_grid()?;
        self.cfar(self.system.p_fa)?;
        Ok(())
    }

    pub fn arch_section(&self, arch: Architecture) -> Result<&ArchSection> {
        match arch {
            Architecture::Fd => self.arch.fd.as_ref(),
            Architecture::Fc => self.arch.fc.as_ref(),
            Architecture::Pc => self.arch.pc.as_ref(),
        }
        .ok_or_else(|| IsacError::Config(format!("scenario '{}' has no [arch.{arch}] section", self.name)))
    }

    /// System configuration for `arch`, optionally overriding the RF-chain count.
    pub fn system(&self, arch: Architecture, n_rf: Option<usize>) -> Result<SystemConfig> {
        let a = self.arch_section(arch)?;
        let c = &self.system;
        let p_tx_w = c.p_tx_w.unwrap_or(c.noise_var_comm * 10f64.powf(c.comm_snr_db / 10.0));
        let cfg = SystemConfig {
            architecture: arch,
            n_tx: a.n_tx,
            n_rf: n_rf.unwrap_or(a.n_rf),
            n_rx: c.n_rx,
            n_rx_sen: c.n_rx_sen,
            n_users: c.n_users,
            n_streams: c.n_streams,
            n_sub: c.n_sub,
            n_sym: c.n_sym,
            carrier_hz: c.carrier_hz,
            subcarrier_spacing_hz: c.subcarrier_spacing_hz,
            cp_len: c.cp_len,
            tx_spacing: c.tx_spacing,
            rx_spacing: c.rx_spacing,
            p_tx_w,
            p_rf_w: c.p_rf_mw * 1e-3,
            p_bb_w: c.p_bb_mw * 1e-3,
            p_ps_w: c.p_ps_mw * 1e-3,
            eta_pa: c.eta_pa,
            noise_var_comm: c.noise_var_comm,
            noise_var_sen: c.noise_var_sen,
            p_th: c.p_th,
            theta_targets: self.targets.iter().map(|t| t.angle_deg.to_radians()).collect(),
            p_fa: c.p_fa,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Ground-truth targets with real reflection gains set by the target SNR.
    pub fn scene(&self, arch: Architecture) -> Result<TargetScene> {
        let a = self.arch_section(arch)?;
        let targets = self
            .targets
            .iter()
            .map(|t| {
                let snr = t.snr_db.unwrap_or(a.target_snr_db);
                let amp = (self.system.noise_var_sen * 10f64.powf(snr / 10.0)).sqrt();
                Target {
                    angle_rad: t.angle_deg.to_radians(),
                    range_m: t.range_m,
                    velocity_mps: t.velocity_mps,
                    rcs_gain: [amp, 0.0],
                }
            })
            .collect();
        Ok(TargetScene::new(targets))
    }

    pub fn angle_grid(&self) -> Result<AngleGrid> {
        let s = &self.sensing;
        AngleGrid::uniform(s.angle_min_deg.to_radians(), s.angle_max_deg.to_radians(), s.angle_step_deg.to_radians())
    }

    pub fn cfar(&self, p_fa: f64) -> Result<CfarConfig> {
        let c = CfarConfig::new(self.sensing.n_train, self.sensing.n_guard, p_fa)?;
        match self.sensing.cfar_alpha {
            Some(a) => c.with_alpha(a),
            None => Ok(c),
        }
    }
}

impl SystemConfig {
    /// Table-level preset lookup, e.g. `("setup1", Fc, Some(8))`.
    pub fn preset(name: &str, arch: Architecture, n_rf: Option<usize>) -> Result<Self> {
        Scenario::preset(name)?.system(arch, n_rf)
    }

    pub fn setup1_fd() -> Self {
        Self::preset("setup1", Architecture::Fd, None).expect("bundled preset is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_load_with_unit_conversion() {
        let sc = Scenario::preset("setup1").unwrap();
        let fd = sc.system(Architecture::Fd, None).unwrap();
        assert_eq!((fd.n_tx, fd.n_rf, fd.n_sub), (8, 8, 4));
        assert!((fd.p_rf_w - 0.3).abs() < 1e-15 && (fd.p_bb_w - 0.2).abs() < 1e-15 && (fd.p_ps_w - 0.05).abs() < 1e-15);
        assert!((fd.p_tx_w - 10.0).abs() < 1e-12);
        let pc8 = sc.system(Architecture::Pc, Some(8)).unwrap();
        assert_eq!((pc8.n_tx, pc8.n_rf), (16, 8));
        let scene = sc.scene(Architecture::Fd).unwrap();
        let b = scene.targets[0].beta().norm_sqr();
        assert!((10.0 * b.log10() + 15.0).abs() < 1e-9);

        let s2 = Scenario::preset("setup2").unwrap();
        assert_eq!(s2.system(Architecture::Fd, None).unwrap().n_tx, 32);
        assert_eq!(s2.targets.len(), 2);
        assert!(Scenario::preset("setup3").is_err());
    }

    #[test]
    fn invalid_combinations_are_rejected() {
        let sc = Scenario::preset("setup1").unwrap();
        assert!(sc.system(Architecture::Pc, Some(5)).is_err());
        assert!(sc.system(Architecture::Fd, Some(4)).is_err());
        let bad = SETUP1.replace("eta_pa = 1.0", "eta_pa = 1.5");
        assert!(Scenario::from_toml_str(&bad).is_err());
        let unknown = SETUP1.replace("name = \"setup1\"", "name = \"x\"\nbogus = 1");
        assert!(Scenario::from_toml_str(&unknown).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let sc = Scenario::preset("setup2").unwrap();
        let back = Scenario::from_toml_str(&sc.to_toml_string().unwrap()).unwrap();
        assert_eq!(sc, back);
    }
}
