//! Kernel density estimates, moving block bootstrap, quantile bands and box-plot
//! summaries.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::mean_std;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::metrics::divergence_of_masses;

pub const DEFAULT_GRID_POINTS: usize = 512;
/// Grid margin beyond the data range, in bandwidths.
pub const GRID_MARGIN: f64 = 5.0;
/// One reference period at the usual sampling.
pub const DEFAULT_BLOCK_LEN: usize = 32;
pub const DEFAULT_REPLICATES: usize = 100;
pub const P_LOW: f64 = 0.025;
pub const P_HIGH: f64 = 0.975;
pub const WHISKER_IQR: f64 = 1.5;

/// Rule-of-thumb bandwidth `σ · 𝒯^(−1/5)` with population σ.
pub fn bandwidth(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::InsufficientData(format!("KDE needs at least 2 samples, got {}", series.len())));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("KDE input contains non-finite values".into()));
    }
    let (_, sd) = mean_std(series.iter().copied());
    if !(sd > 0.0) {
        return Err(Error::DegenerateChannel { channel: "series".into() });
    }
    Ok(sd * (series.len() as f64).powf(-0.2))
}

/// `points` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (points - 1) as f64;
            (0..points).map(|k| if k + 1 == points { hi } else { lo + k as f64 * step }).collect()
        }
    }
}

/// Default evaluation grid: the data range widened by five bandwidths each side.
pub fn default_grid(series: &[f64], h: f64, points: usize) -> Vec<f64> {
    let (lo, hi) = series.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    linspace(lo - GRID_MARGIN * h, hi + GRID_MARGIN * h, points)
}

pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2).zip(values.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

/// Trapezoidal quadrature weights for a (possibly uneven) grid.
fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; grid.len()];
    for k in 1..grid.len() {
        let half = 0.5 * (grid[k] - grid[k - 1]);
        w[k - 1] += half;
        w[k] += half;
    }
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl KdeEstimate {
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }
}

/// Gaussian-kernel density estimate evaluated on `grid`.
pub fn kde_pdf(series: &[f64], grid: &[f64]) -> Result<KdeEstimate> {
    let h = bandwidth(series)?;
    let norm = 1.0 / (series.len() as f64 * h * (2.0 * PI).sqrt());
    let density = grid
        .iter()
        .map(|y| {
            let s: f64 = series.iter().map(|x| (-0.5 * ((y - x) / h).powi(2)).exp()).sum();
            s * norm
        })
        .collect();
    Ok(KdeEstimate { grid: grid.to_vec(), density, bandwidth: h })
}

/// [`kde_pdf`] on [`default_grid`] with the default point count.
pub fn kde_default(series: &[f64]) -> Result<KdeEstimate> {
    let h = bandwidth(series)?;
    kde_pdf(series, &default_grid(series, h, DEFAULT_GRID_POINTS))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSet {
    pub replicates: Vec<Vec<f64>>,
    pub block_len: usize,
    pub seed: u64,
}

/// Replicate `index` of a bootstrap run; each replicate has its own stream.
fn bootstrap_replicate(series: &[f64], block_len: usize, seed: u64, index: usize) -> Vec<f64> {
    let len = series.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let starts = len - block_len + 1;
    let mut out = Vec::with_capacity(len + block_len);
    while out.len() < len {
        let s = rng.random_range(0..starts);
        out.extend_from_slice(&series[s..s + block_len]);
    }
    out.truncate(len);
    out
}

/// Moving block bootstrap: concatenated random overlapping blocks, cut to the source length.
pub fn moving_block_bootstrap(
    series: &[f64],
    block_len: usize,
    n_replicates: usize,
    seed: u64,
    exec: Execution,
) -> Result<BootstrapSet> {
    if block_len == 0 || block_len > series.len() {
        return Err(Error::InvalidInput(format!(
            "block length {block_len} outside 1..={}",
            series.len()
        )));
    }
    let replicates = exec.map(n_replicates, |i| bootstrap_replicate(series, block_len, seed, i));
    Ok(BootstrapSet { replicates, block_len, seed })
}

/// Type-7 quantile (linear interpolation between order statistics) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let k = (pos.floor() as usize).min(n - 2);
    let frac = pos - k as f64;
    let (lo, hi) = (sorted[k], sorted[k + 1]);
    if lo == hi || frac == 0.0 {
        lo
    } else if frac == 1.0 {
        hi
    } else {
        lo + frac * (hi - lo)
    }
}

pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    Ok(quantile_sorted(&sorted_copy(values)?, p))
}

fn sorted_copy(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InsufficientData("no values".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("values contain NaN".into()));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Pointwise quantile band over replicate densities.
#[derive(Debug, Clone, PartialEq)]
pub struct PdfBand {
    pub grid: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `upper − lower`.
    pub width: Vec<f64>,
}

pub fn pdf_confidence(replicates: &[KdeEstimate], p_low: f64, p_high: f64) -> Result<PdfBand> {
    if replicates.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 replicates, got {}", replicates.len())));
    }
    if !(0.0..=1.0).contains(&p_low) || !(p_low..=1.0).contains(&p_high) {
        return Err(Error::InvalidInput(format!("bad probability levels {p_low}, {p_high}")));
    }
    let grid = &replicates[0].grid;
    if replicates.iter().any(|r| r.grid != *grid) {
        return Err(Error::InvalidInput("replicate densities are on different grids".into()));
    }
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    let mut column = vec![0.0; replicates.len()];
    for k in 0..grid.len() {
        for (c, r) in column.iter_mut().zip(replicates) {
            *c = r.density[k];
        }
        column.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&column, p_low));
        upper.push(quantile_sorted(&column, p_high));
    }
    let width = upper.iter().zip(&lower).map(|(u, l)| u - l).collect();
    Ok(PdfBand { grid: grid.clone(), lower, upper, width })
}

/// Jensen-Shannon divergence of two densities on a shared grid, via trapezoidal masses.
pub fn jsd_of_kdes(a: &KdeEstimate, b: &KdeEstimate) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::InvalidInput("densities are on different grids".into()));
    }
    let w = trapezoid_weights(&a.grid);
    let pa: Vec<f64> = a.density.iter().zip(&w).map(|(d, w)| d * w).collect();
    let pb: Vec<f64> = b.density.iter().zip(&w).map(|(d, w)| d * w).collect();
    divergence_of_masses(&pa, &pb)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxPlotStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub mean: f64,
    pub outliers: usize,
    pub count: usize,
}

/// Quartiles by type-7 interpolation, whiskers at the farthest datum within
/// 1.5 IQR of the box. Infinite values are valid data.
pub fn boxplot_stats(values: &[f64]) -> Result<BoxPlotStats> {
    let s = sorted_copy(values)?;
    let (q1, median, q3) = (quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.5), quantile_sorted(&s, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = if iqr.is_finite() {
        (q1 - WHISKER_IQR * iqr, q3 + WHISKER_IQR * iqr)
    } else {
        (f64::NEG_INFINITY, f64::INFINITY)
    };
    let inside = |v: &&f64| **v >= lo_fence && **v <= hi_fence;
    let whisker_low = *s.iter().find(inside).unwrap_or(&q1);
    let whisker_high = *s.iter().rev().find(inside).unwrap_or(&q3);
    let outliers = s.iter().filter(|v| !inside(v)).count();
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    Ok(BoxPlotStats { q1, median, q3, whisker_low, whisker_high, mean, outliers, count: s.len() })
}

/// Bootstrap comparison of one reference/prediction channel pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PdfValidation {
    pub reference: KdeEstimate,
    pub prediction: KdeEstimate,
    pub reference_band: PdfBand,
    pub prediction_band: PdfBand,
    /// Divergence between paired replicates, one entry per replicate.
    pub jsd_samples: Vec<f64>,
    pub jsd_expected: f64,
    pub jsd_low: f64,
    pub jsd_high: f64,
}

impl PdfValidation {
    /// `q_high − q_low` of the replicate divergences.
    pub fn jsd_width(&self) -> f64 {
        self.jsd_high - self.jsd_low
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdfValidationConfig {
    pub replicates: usize,
    pub block_len: usize,
    pub grid_points: usize,
    pub seed: u64,
}

impl Default for PdfValidationConfig {
    fn default() -> Self {
        PdfValidationConfig {
            replicates: DEFAULT_REPLICATES,
            block_len: DEFAULT_BLOCK_LEN,
            grid_points: DEFAULT_GRID_POINTS,
            seed: 0,
        }
    }
}

/// Bootstraps both series, estimates every replicate density on one shared grid
/// and summarizes the paired replicate divergences.
pub fn validate_pdf(reference: &[f64], prediction: &[f64], cfg: &PdfValidationConfig, exec: Execution) -> Result<PdfValidation> {
    if cfg.replicates < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 replicates, got {}", cfg.replicates)));
    }
    let ref_set = moving_block_bootstrap(reference, cfg.block_len, cfg.replicates, cfg.seed, exec)?;
    // distinct stream family for the prediction replicates
    let pred_set = moving_block_bootstrap(prediction, cfg.block_len, cfg.replicates, cfg.seed ^ 0x9E37_79B9_7F4A_7C15, exec)?;

    let all: Vec<&[f64]> = std::iter::once(reference)
        .chain(std::iter::once(prediction))
        .chain(ref_set.replicates.iter().map(Vec::as_slice))
        .chain(pred_set.replicates.iter().map(Vec::as_slice))
        .collect();
    let hs: Vec<f64> = exec.map(all.len(), |i| bandwidth(all[i])).into_iter().collect::<Result<_>>()?;
    let h_max = hs.iter().copied().fold(0.0, f64::max);
    let (lo, hi) = reference
        .iter()
        .chain(prediction)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let grid = linspace(lo - GRID_MARGIN * h_max, hi + GRID_MARGIN * h_max, cfg.grid_points);

    let kdes: Vec<KdeEstimate> = exec.map(all.len(), |i| kde_pdf(all[i], &grid)).into_iter().collect::<Result<_>>()?;
    let r = cfg.replicates;
    let ref_kdes = &kdes[2..2 + r];
    let pred_kdes = &kdes[2 + r..];
    let jsd_samples: Vec<f64> = (0..r).map(|i| jsd_of_kdes(&ref_kdes[i], &pred_kdes[i])).collect::<Result<_>>()?;
    let sorted = sorted_copy(&jsd_samples)?;
    Ok(PdfValidation {
        reference: kdes[0].clone(),
        prediction: kdes[1].clone(),
        reference_band: pdf_confidence(ref_kdes, P_LOW, P_HIGH)?,
        prediction_band: pdf_confidence(pred_kdes, P_LOW, P_HIGH)?,
        jsd_expected: jsd_samples.iter().sum::<f64>() / r as f64,
        jsd_low: quantile_sorted(&sorted, P_LOW),
        jsd_high: quantile_sorted(&sorted, P_HIGH),
        jsd_samples,
    })
}
