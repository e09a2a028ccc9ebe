use serde::{Deserialize, Serialize};

use crate::error::{IsacError, Result};

/// Cell-averaging CFAR settings for a 2-D cross-shaped window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfarConfig {
    /// Training cells on each side along each dimension.
    pub n_train: usize,
    /// Guard cells on each side along each dimension.
    pub n_guard: usize,
    pub p_fa: f64,
    /// Threshold scale to use instead of the closed form, e.g. from a
    /// Monte-Carlo calibration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_override: Option<f64>,
}

/// Training geometry after fitting the window to an actual grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CfarWindow {
    pub guard_rows: usize,
    pub train_rows: usize,
    pub guard_cols: usize,
    pub train_cols: usize,
}

impl CfarWindow {
    pub fn n_train_cells(&self) -> usize {
        2 * (self.train_rows + self.train_cols)
    }
}

fn fit(n: usize, guard: usize, train: usize) -> (usize, usize) {
    // Wrap-around must not reuse a cell: guard + train on both sides stays below n.
    let half = n.saturating_sub(1) / 2;
    let g = guard.min(half.saturating_sub(1));
    let t = train.min(half - g.min(half));
    (g, t)
}

impl CfarConfig {
    pub fn new(n_train: usize, n_guard: usize, p_fa: f64) -> Result<Self> {
        if n_train == 0 {
            return Err(IsacError::InvalidArgument("CFAR needs training cells".into()));
        }
        if !(p_fa > 0.0 && p_fa < 1.0) {
            return Err(IsacError::InvalidArgument(format!("p_fa must lie in (0, 1), got {p_fa}")));
        }
        Ok(Self { n_train, n_guard, p_fa, alpha_override: None })
    }

    pub fn with_alpha(self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(IsacError::InvalidArgument(format!("threshold scale must be positive, got {alpha}")));
        }
        Ok(Self { alpha_override: Some(alpha), ..self })
    }

    /// Window clipped per dimension so that wrap-around never double counts.
    pub fn window(&self, rows: usize, cols: usize) -> Result<CfarWindow> {
        let (guard_rows, train_rows) = fit(rows, self.n_guard, self.n_train);
        let (guard_cols, train_cols) = fit(cols, self.n_guard, self.n_train);
        let w = CfarWindow { guard_rows, train_rows, guard_cols, train_cols };
        if w.n_train_cells() == 0 {
            return Err(IsacError::InvalidArgument(format!("a {rows}x{cols} map leaves no training cells")));
        }
        Ok(w)
    }

    /// Threshold scale in use for `n_cells` training cells.
    pub fn alpha_for(&self, n_cells: usize) -> f64 {
        self.alpha_override.unwrap_or_else(|| self.closed_form_alpha(n_cells))
    }

    /// `N (P_FA^{-1/N} - 1)`, exact for `N` i.i.d. exponential training cells.
    pub fn closed_form_alpha(&self, n_cells: usize) -> f64 {
        let n = n_cells as f64;
        n * (self.p_fa.powf(-1.0 / n) - 1.0)
    }

    pub fn alpha(&self, rows: usize, cols: usize) -> Result<f64> {
        Ok(self.alpha_for(self.window(rows, cols)?.n_train_cells()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellDetection {
    pub delay_bin: usize,
    pub doppler_bin: usize,
    pub power: f64,
    pub threshold: f64,
}

fn training_mean(power: &[f64], rows: usize, cols: usize, w: &CfarWindow, r: usize, c: usize) -> f64 {
    let mut sum = 0.0;
    for d in (w.guard_rows + 1)..=(w.guard_rows + w.train_rows) {
        sum += power[((r + d) % rows) * cols + c];
        sum += power[((r + rows - d % rows) % rows) * cols + c];
    }
    for d in (w.guard_cols + 1)..=(w.guard_cols + w.train_cols) {
        sum += power[r * cols + (c + d) % cols];
        sum += power[r * cols + (c + cols - d % cols) % cols];
    }
    sum / w.n_train_cells() as f64
}

/// Ratio of each cell's power to its training mean (`NaN` when the mean is zero).
pub fn cfar_ratios(power: &[f64], rows: usize, cols: usize, cfar: &CfarConfig) -> Result<Vec<f64>> {
    if power.len() != rows * cols {
        return Err(IsacError::Dimension(format!("{} cells for a {rows}x{cols} map", power.len())));
    }
    let w = cfar.window(rows, cols)?;
    Ok((0..rows * cols)
        .map(|i| {
            let m = training_mean(power, rows, cols, &w, i / cols, i % cols);
            if m > 0.0 { power[i] / m } else { f64::NAN }
        })
        .collect())
}

/// Detects cells whose power exceeds `alpha` times the mean of the training cells
/// along the cell's row and column (wrapping around the periodic grid).
///
/// `power` is row-major with `rows` delay bins and `cols` Doppler bins.
pub fn ca_cfar_detect(power: &[f64], rows: usize, cols: usize, cfar: &CfarConfig) -> Result<Vec<CellDetection>> {
    if power.len() != rows * cols {
        return Err(IsacError::Dimension(format!("{} cells for a {rows}x{cols} map", power.len())));
    }
    let w = cfar.window(rows, cols)?;
    let alpha = cfar.alpha_for(w.n_train_cells());
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let threshold = alpha * training_mean(power, rows, cols, &w, r, c);
            let p = power[r * cols + c];
            if p > threshold && p > 0.0 {
                out.push(CellDetection { delay_bin: r, doppler_bin: c, power: p, threshold });
            }
        }
    }
    Ok(out)
}
