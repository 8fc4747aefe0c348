//! Prediction-quality indices averaged over state channels.
//!
//! Both matrices are `channels × samples`. Normalizations use the population
//! standard deviation of the reference channel over the compared window.

use std::f64::consts::LN_2;

use crate::dataset::mean_std;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const DEFAULT_BINS: usize = 64;

/// Multiple of the reference standard deviation used as the error scale.
pub const SIGMA_SCALE: f64 = 8.0;

/// Normalization reading of the extrema index, recorded in output metadata.
pub const NAMMAE_CONVENTION: &str = "per channel (|min p - min r| + |max p - max r|) / (2 * 8 * sigma_r), then averaged over channels";

fn check_pair(reference: &Matrix, prediction: &Matrix) -> Result<()> {
    if reference.shape() != prediction.shape() {
        return Err(Error::InvalidInput(format!(
            "reference is {:?} but prediction is {:?}",
            reference.shape(),
            prediction.shape()
        )));
    }
    if reference.ncols() == 0 || reference.nrows() == 0 {
        return Err(Error::InvalidInput("nothing to compare".into()));
    }
    for (m, what) in [(reference, "reference"), (prediction, "prediction")] {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("{what} contains non-finite values")));
        }
    }
    Ok(())
}

fn reference_scales(reference: &Matrix) -> Result<Vec<f64>> {
    (0..reference.nrows())
        .map(|i| {
            let (_, sd) = mean_std(reference.row(i).iter().copied());
            if sd > 0.0 {
                Ok(SIGMA_SCALE * sd)
            } else {
                Err(Error::DegenerateReference { channel: i })
            }
        })
        .collect()
}

pub fn nrmse_per_channel(reference: &Matrix, prediction: &Matrix) -> Result<Vec<f64>> {
    check_pair(reference, prediction)?;
    let scales = reference_scales(reference)?;
    let t = reference.ncols() as f64;
    Ok(scales
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let sq: f64 = reference.row(i).iter().zip(prediction.row(i).iter()).map(|(r, p)| (p - r) * (p - r)).sum();
            (sq / t).sqrt() / s
        })
        .collect())
}

/// Normalized root mean square error.
pub fn nrmse(reference: &Matrix, prediction: &Matrix) -> Result<f64> {
    Ok(channel_mean(&nrmse_per_channel(reference, prediction)?))
}

/// Per channel `(|min p − min r| + |max p − max r|) / (2 · 8σ)`.
pub fn nammae_per_channel(reference: &Matrix, prediction: &Matrix) -> Result<Vec<f64>> {
    check_pair(reference, prediction)?;
    let scales = reference_scales(reference)?;
    let extrema = |row: &[f64]| row.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    Ok(scales
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (rlo, rhi) = extrema(&reference.row(i).iter().copied().collect::<Vec<_>>());
            let (plo, phi) = extrema(&prediction.row(i).iter().copied().collect::<Vec<_>>());
            ((plo - rlo).abs() + (phi - rhi).abs()) / (2.0 * s)
        })
        .collect())
}

/// Normalized average minimum/maximum absolute error.
pub fn nammae(reference: &Matrix, prediction: &Matrix) -> Result<f64> {
    Ok(channel_mean(&nammae_per_channel(reference, prediction)?))
}

/// Jensen-Shannon divergence between two probability mass vectors, natural log.
///
/// Inputs are renormalized to unit sum; empty bins contribute nothing.
pub fn divergence_of_masses(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidInput(format!("mass vectors of length {} and {}", p.len(), q.len())));
    }
    let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    if !(sp > 0.0 && sq > 0.0) || p.iter().chain(q).any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidInput("masses must be non-negative with positive total".into()));
    }
    let kl = |a: f64, m: f64| if a > 0.0 { a * (a / m).ln() } else { 0.0 };
    let mut total = 0.0;
    for (a, b) in p.iter().zip(q) {
        let (a, b) = (a / sp, b / sq);
        let m = 0.5 * (a + b);
        total += 0.5 * (kl(a, m) + kl(b, m));
    }
    Ok(total.clamp(0.0, LN_2))
}

/// Counts of `a` and `b` on `bins` equal-width bins spanning their joint range.
pub fn shared_histograms(a: &[f64], b: &[f64], bins: usize) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = a.iter().chain(b).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let width = hi - lo;
    let index = |v: f64| {
        if width > 0.0 {
            (((v - lo) / width * bins as f64) as usize).min(bins - 1)
        } else {
            0
        }
    };
    let mut ha = vec![0.0; bins];
    let mut hb = vec![0.0; bins];
    for v in a {
        ha[index(*v)] += 1.0;
    }
    for v in b {
        hb[index(*v)] += 1.0;
    }
    (ha, hb)
}

pub fn jsd_per_channel(reference: &Matrix, prediction: &Matrix, bins: usize) -> Result<Vec<f64>> {
    check_pair(reference, prediction)?;
    if bins < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 bins, got {bins}")));
    }
    (0..reference.nrows())
        .map(|i| {
            let r: Vec<f64> = reference.row(i).iter().copied().collect();
            let p: Vec<f64> = prediction.row(i).iter().copied().collect();
            let (hr, hp) = shared_histograms(&r, &p, bins);
            divergence_of_masses(&hr, &hp)
        })
        .collect()
}

/// Histogram-based Jensen-Shannon divergence of the value distributions.
pub fn jsd(reference: &Matrix, prediction: &Matrix, bins: usize) -> Result<f64> {
    Ok(channel_mean(&jsd_per_channel(reference, prediction, bins)?))
}

fn channel_mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Channel-averaged absolute error over time, scaled to a unit maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorEvolution {
    pub epsilon: Vec<f64>,
    /// Maximum of the unscaled curve; zero when the signals coincide.
    pub max: f64,
}

pub fn error_evolution(reference: &Matrix, prediction: &Matrix) -> Result<ErrorEvolution> {
    check_pair(reference, prediction)?;
    let n = reference.nrows() as f64;
    let raw: Vec<f64> = (0..reference.ncols())
        .map(|j| reference.column(j).iter().zip(prediction.column(j).iter()).map(|(r, p)| (p - r).abs()).sum::<f64>() / n)
        .collect();
    let max = raw.iter().copied().fold(0.0, f64::max);
    let epsilon = if max > 0.0 { raw.iter().map(|e| e / max).collect() } else { raw };
    Ok(ErrorEvolution { epsilon, max })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub nrmse: f64,
    pub nammae: f64,
    pub jsd: f64,
    pub nrmse_channels: Vec<f64>,
    pub nammae_channels: Vec<f64>,
    pub jsd_channels: Vec<f64>,
    /// Compared samples.
    pub samples: usize,
    pub channels: usize,
}

impl MetricsReport {
    pub fn compute(reference: &Matrix, prediction: &Matrix, bins: usize) -> Result<Self> {
        let nrmse_channels = nrmse_per_channel(reference, prediction)?;
        let nammae_channels = nammae_per_channel(reference, prediction)?;
        let jsd_channels = jsd_per_channel(reference, prediction, bins)?;
        Ok(MetricsReport {
            nrmse: channel_mean(&nrmse_channels),
            nammae: channel_mean(&nammae_channels),
            jsd: channel_mean(&jsd_channels),
            nrmse_channels,
            nammae_channels,
            jsd_channels,
            samples: reference.ncols(),
            channels: reference.nrows(),
        })
    }

    /// Placeholder for a prediction that blew up: every index is `+inf`.
    pub fn diverged(channels: usize, samples: usize) -> Self {
        let inf = vec![f64::INFINITY; channels];
        MetricsReport {
            nrmse: f64::INFINITY,
            nammae: f64::INFINITY,
            jsd: f64::INFINITY,
            nrmse_channels: inf.clone(),
            nammae_channels: inf.clone(),
            jsd_channels: inf,
            samples,
            channels,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.nrmse.is_finite() && self.nammae.is_finite() && self.jsd.is_finite()
    }
}
