//! OFDM radar processing: echo synthesis, per-angle delay-Doppler maps,
//! CA-CFAR detection and Monte-Carlo scoring.

mod cfar;
mod detect;
mod export;
mod process;
mod synth;

pub use cfar::{ca_cfar_detect, cfar_ratios, CellDetection, CfarConfig, CfarWindow};
pub use detect::{calibrate_cfar, dedup_across_angles, detect_scene, target_bins, trial_maps, CfarCalibration, Detection, DetectionReport, SensingOutcome};
pub use export::{read_rd_map, write_rd_map, RdSidecar};
pub use process::{
    beamform_and_divide, predict_from_divided, predict_rd_noise_var, rd_map, rd_transform, DividedGrid, RdMap,
    DIVISION_GUARD,
};
pub use synth::{qam64, random_symbols, synthesize_from_tx, synthesize_rx, transmit_grid, RxGrid, SymbolGrid, TxGrid, VectorGrid};
