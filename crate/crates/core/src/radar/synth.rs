use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::TargetScene;
use crate::error::{dim_check, Result};
use crate::linalg::{CVec, C64};
use crate::system::{PrecoderSet, SystemConfig};

/// A `n_sub x n_sym` grid of vectors stored subcarrier-major (`k * n_sym + l`).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorGrid {
    n_sub: usize,
    n_sym: usize,
    cells: Vec<CVec>,
}

impl VectorGrid {
    pub fn new(n_sub: usize, n_sym: usize, cells: Vec<CVec>) -> Result<Self> {
        dim_check(cells.len() == n_sub * n_sym, || format!("{} cells for a {n_sub}x{n_sym} grid", cells.len()))?;
        if let Some(first) = cells.first() {
            let len = first.len();
            dim_check(cells.iter().all(|c| c.len() == len), || "grid vectors differ in length".into())?;
        }
        Ok(Self { n_sub, n_sym, cells })
    }

    pub fn zeros(n_sub: usize, n_sym: usize, len: usize) -> Self {
        Self { n_sub, n_sym, cells: vec![CVec::zeros(len); n_sub * n_sym] }
    }

    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    pub fn n_sym(&self) -> usize {
        self.n_sym
    }

    pub fn vec_len(&self) -> usize {
        self.cells.first().map_or(0, |c| c.len())
    }

    pub fn get(&self, k: usize, l: usize) -> &CVec {
        &self.cells[k * self.n_sym + l]
    }

    pub fn get_mut(&mut self, k: usize, l: usize) -> &mut CVec {
        &mut self.cells[k * self.n_sym + l]
    }

    pub fn cells(&self) -> &[CVec] {
        &self.cells
    }
}

/// Transmitted data symbols `s_{k,l}`, one entry per stream column of `F_k`.
pub type SymbolGrid = VectorGrid;
/// Precoded transmit vectors `x_{k,l} = F_k s_{k,l}`.
pub type TxGrid = VectorGrid;
/// Radar receive vectors, one per sensing antenna.
pub type RxGrid = VectorGrid;

/// Unit-average-energy square 64-QAM symbol.
pub fn qam64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let scale = 1.0 / 42f64.sqrt();
    let level = |r: &mut R| (2 * r.random_range(0..8i32) - 7) as f64;
    C64::new(level(rng), level(rng)) * scale
}

pub fn random_symbols<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> SymbolGrid {
    let n = cfg.n_cols();
    let cells = (0..cfg.n_sub * cfg.n_sym).map(|_| CVec::from_fn(n, |_, _| qam64(rng))).collect();
    VectorGrid { n_sub: cfg.n_sub, n_sym: cfg.n_sym, cells }
}

pub fn transmit_grid(f: &PrecoderSet, symbols: &SymbolGrid) -> Result<TxGrid> {
    dim_check(symbols.n_sub == f.n_sub(), || format!("{} symbol subcarriers vs {} precoders", symbols.n_sub, f.n_sub()))?;
    dim_check(symbols.vec_len() == f.n_cols(), || format!("{} symbols per cell vs {} precoder columns", symbols.vec_len(), f.n_cols()))?;
    let cells = symbols
        .cells
        .iter()
        .enumerate()
        .map(|(i, s)| f.get(i / symbols.n_sym) * s)
        .collect();
    Ok(VectorGrid { n_sub: symbols.n_sub, n_sym: symbols.n_sym, cells })
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

/// Echo of `scene` for transmit grid `x`; adds white noise of variance
/// `noise_var_sen` per element when `rng` is given.
pub fn synthesize_from_tx<R: Rng + ?Sized>(
    x: &TxGrid,
    scene: &TargetScene,
    cfg: &SystemConfig,
    rng: Option<&mut R>,
) -> Result<RxGrid> {
    dim_check(x.n_sub == cfg.n_sub && x.n_sym == cfg.n_sym, || "transmit grid does not match configuration".into())?;
    dim_check(x.vec_len() == cfg.n_tx, || format!("transmit vectors of length {} for {} antennas", x.vec_len(), cfg.n_tx))?;
    let mut y = VectorGrid::zeros(cfg.n_sub, cfg.n_sym, cfg.n_rx_sen);
    let period = cfg.symbol_period();
    for t in &scene.targets {
        let tau = t.delay_s();
        let fd = t.doppler_hz(cfg.carrier_hz);
        for k in 0..cfg.n_sub {
            let at = cfg.tx_steering(k, t.angle_rad);
            let ar = cfg.rx_sen_steering(k, t.angle_rad);
            let delay = C64::from_polar(1.0, -2.0 * PI * cfg.baseband_offset(k) * tau);
            for l in 0..cfg.n_sym {
                let doppler = C64::from_polar(1.0, 2.0 * PI * fd * l as f64 * period);
                let gain = t.beta() * delay * doppler * at.dotc(x.get(k, l));
                y.get_mut(k, l).axpy(gain, &ar, ONE_C);
            }
        }
    }
    if let Some(rng) = rng {
        if cfg.noise_var_sen > 0.0 {
            for c in y.cells.iter_mut() {
                for v in c.iter_mut() {
                    *v += complex_normal(rng, cfg.noise_var_sen);
                }
            }
        }
    }
    Ok(y)
}

const ONE_C: C64 = C64 { re: 1.0, im: 0.0 };

/// Received radar grid for precoders `f` carrying `symbols`.
pub fn synthesize_rx<R: Rng + ?Sized>(
    f: &PrecoderSet,
    symbols: &SymbolGrid,
    scene: &TargetScene,
    cfg: &SystemConfig,
    rng: Option<&mut R>,
) -> Result<RxGrid> {
    f.check_against(cfg)?;
    synthesize_from_tx(&transmit_grid(f, symbols)?, scene, cfg, rng)
}
