use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::process::RdMap;
use crate::error::Result;

/// Sidecar describing a raw RD grid file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdSidecar {
    pub n_delay: usize,
    pub n_doppler: usize,
    pub angle_rad: f64,
    pub predicted_noise_var: f64,
    /// Always `"row-major delay x doppler, interleaved re/im, little-endian f64"`.
    pub layout: String,
    pub data_file: String,
}

/// Writes `<stem>.bin` and `<stem>.json`; returns both paths.
pub fn write_rd_map(map: &RdMap, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let bin = dir.join(format!("{stem}.bin"));
    let json = dir.join(format!("{stem}.json"));
    let mut bytes = Vec::with_capacity(map.values.len() * 16);
    for v in &map.values {
        bytes.extend_from_slice(&v.re.to_le_bytes());
        bytes.extend_from_slice(&v.im.to_le_bytes());
    }
    fs::File::create(&bin)?.write_all(&bytes)?;
    let side = RdSidecar {
        n_delay: map.n_delay,
        n_doppler: map.n_doppler,
        angle_rad: map.angle,
        predicted_noise_var: map.predicted_noise_var,
        layout: "row-major delay x doppler, interleaved re/im, little-endian f64".into(),
        data_file: format!("{stem}.bin"),
    };
    fs::write(&json, serde_json::to_string_pretty(&side)?)?;
    Ok((bin, json))
}

/// Reads a grid written by [`write_rd_map`].
pub fn read_rd_map(json: &Path) -> Result<RdMap> {
    let side: RdSidecar = serde_json::from_str(&fs::read_to_string(json)?)?;
    let bin = json.with_file_name(&side.data_file);
    let bytes = fs::read(bin)?;
    let n = side.n_delay * side.n_doppler;
    if bytes.len() != 16 * n {
        return Err(crate::IsacError::Dimension(format!("{} bytes for {n} complex cells", bytes.len())));
    }
    let f = |i: usize| f64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().expect("8-byte slice"));
    let values = (0..n).map(|i| crate::linalg::C64::new(f(2 * i), f(2 * i + 1))).collect();
    Ok(RdMap { n_delay: side.n_delay, n_doppler: side.n_doppler, angle: side.angle_rad, values, predicted_noise_var: side.predicted_noise_var })
}
