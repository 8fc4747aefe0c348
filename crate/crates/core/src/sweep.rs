//! Full-factorial hyperparameter sweeps.
//!
//! Every grid configuration is fitted once per training record and scored on
//! every validation record, giving `|grid| × |train| × |validation|` cells.

use std::io::Write;

use crate::bayes::{HyperPrior, Interval};
use crate::dataset::Record;
use crate::dmdc::INSTABILITY_THRESHOLD;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::hankel::{durations_to_counts, fit_with_hyperparams, HyperParams};
use crate::metrics::{MetricsReport, DEFAULT_BINS};
use crate::stats::{boxplot_stats, BoxPlotStats};

/// Hyperparameter levels in reference periods.
#[derive(Debug, Clone, PartialEq)]
pub struct DoeGrid {
    pub l_tr: Vec<f64>,
    pub l_dx: Vec<f64>,
    pub l_du: Vec<f64>,
    /// Length of each scored validation window.
    pub l_te: f64,
}

impl Default for DoeGrid {
    fn default() -> Self {
        let delays = vec![0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0];
        DoeGrid { l_tr: vec![1.0, 2.0, 3.0, 5.0, 7.0, 10.0], l_dx: delays.clone(), l_du: delays, l_te: 15.0 }
    }
}

fn max_level(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

impl DoeGrid {
    pub fn validate(&self) -> Result<()> {
        if self.l_tr.is_empty() || self.l_dx.is_empty() || self.l_du.is_empty() {
            return Err(Error::InvalidConfig("every hyperparameter needs at least one level".into()));
        }
        if self.l_tr.iter().any(|v| !(*v > 0.0)) || self.l_dx.iter().chain(&self.l_du).any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidConfig("levels must be positive (l_tr) or non-negative (delays)".into()));
        }
        if !(self.l_te > 0.0) {
            return Err(Error::InvalidConfig(format!("l_te must be positive, got {}", self.l_te)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.l_tr.len() * self.l_dx.len() * self.l_du.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All configurations, `l_tr` slowest and `l_du` fastest.
    pub fn configs(&self) -> Vec<HyperParams> {
        let mut out = Vec::with_capacity(self.len());
        for &l_tr in &self.l_tr {
            for &l_dx in &self.l_dx {
                for &l_du in &self.l_du {
                    out.push(HyperParams { l_tr, l_dx, l_du });
                }
            }
        }
        out
    }

    pub fn max_delay(&self) -> f64 {
        max_level(&self.l_dx).max(max_level(&self.l_du))
    }

    /// Sample where every validation window starts: the largest delay on the grid.
    pub fn validation_start(&self, samples_per_that: f64) -> usize {
        (self.max_delay() * samples_per_that).round() as usize
    }

    pub fn test_samples(&self, samples_per_that: f64) -> usize {
        (self.l_te * samples_per_that).round() as usize
    }

    /// Checks the record-length bounds for training and validation records.
    pub fn check_lengths(&self, train_len: usize, validation_len: usize, samples_per_that: f64) -> Result<()> {
        let d = self.validation_start(samples_per_that);
        let n_tr = (max_level(&self.l_tr) * samples_per_that).round() as usize;
        if n_tr + d > train_len {
            return Err(Error::Bounds(format!(
                "longest training window ({n_tr}) plus largest delay ({d}) exceeds training record of {train_len} samples"
            )));
        }
        let n_te = self.test_samples(samples_per_that);
        if d + n_te > validation_len {
            return Err(Error::Bounds(format!(
                "validation window of {n_te} samples after {d} delay samples exceeds record of {validation_len} samples"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Nrmse,
    Nammae,
    Jsd,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Nrmse, Metric::Nammae, Metric::Jsd];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Nrmse => "nrmse",
            Metric::Nammae => "nammae",
            Metric::Jsd => "jsd",
        }
    }

    pub fn of(self, r: &MetricsReport) -> f64 {
        match self {
            Metric::Nrmse => r.nrmse,
            Metric::Nammae => r.nammae,
            Metric::Jsd => r.jsd,
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown metric {s:?}; expected nrmse, nammae or jsd")))
    }
}

/// One configuration fitted on one training record and scored on one validation record.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub config: usize,
    pub train: usize,
    pub validation: usize,
    pub metrics: Option<MetricsReport>,
    pub spectral_radius: f64,
    pub unstable: bool,
    /// The prediction left the finite range; metrics are `+inf`.
    pub diverged: bool,
    /// Why the cell has no metrics, if it failed.
    pub error: Option<String>,
}

impl SweepCell {
    pub fn value(&self, m: Metric) -> Option<f64> {
        self.metrics.as_ref().map(|r| m.of(r))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigAggregate {
    pub config: HyperParams,
    pub cells: usize,
    pub failed: usize,
    pub unstable: usize,
    /// Box statistics per metric over cells with metrics, infinite values included.
    pub boxes: Vec<(Metric, Option<BoxPlotStats>)>,
}

impl ConfigAggregate {
    pub fn box_of(&self, m: Metric) -> Option<&BoxPlotStats> {
        self.boxes.iter().find(|(k, _)| *k == m).and_then(|(_, b)| b.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub grid: DoeGrid,
    pub configs: Vec<HyperParams>,
    pub n_train: usize,
    pub n_validation: usize,
    pub samples_per_that: f64,
    /// Config-major, then training record, then validation record.
    pub cells: Vec<SweepCell>,
    pub aggregates: Vec<ConfigAggregate>,
}

impl SweepResult {
    pub fn cells_of(&self, config: usize) -> &[SweepCell] {
        let per = self.n_train * self.n_validation;
        &self.cells[config * per..(config + 1) * per]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub samples_per_that: f64,
    pub bins: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { samples_per_that: 32.0, bins: DEFAULT_BINS }
    }
}

fn failed_cell(config: usize, train: usize, validation: usize, radius: f64, unstable: bool, why: String) -> SweepCell {
    SweepCell { config, train, validation, metrics: None, spectral_radius: radius, unstable, diverged: false, error: Some(why) }
}

fn run_pair(
    h: &HyperParams,
    config: usize,
    train_idx: usize,
    train: &Record,
    validation: &[Record],
    grid: &DoeGrid,
    opts: &SweepOptions,
) -> Vec<SweepCell> {
    let start = grid.validation_start(opts.samples_per_that);
    let n_te = grid.test_samples(opts.samples_per_that);
    let model = match fit_with_hyperparams(train, h, opts.samples_per_that, train.len()) {
        Ok(m) => m,
        Err(e) => {
            return (0..validation.len()).map(|v| failed_cell(config, train_idx, v, f64::NAN, false, e.to_string())).collect();
        }
    };
    let (radius, unstable) = match model.stability() {
        Ok(s) => (s.spectral_radius, s.unstable),
        Err(_) => (f64::NAN, false),
    };
    validation
        .iter()
        .enumerate()
        .map(|(v, rec)| {
            let outcome = model.predict_record(rec, start, n_te.saturating_sub(1)).and_then(|pred| {
                let reference = rec.state.columns(start, n_te);
                if pred.iter().all(|x| x.is_finite()) {
                    MetricsReport::compute(&reference.into_owned(), &pred, opts.bins).map(|r| (r, false))
                } else {
                    Ok((MetricsReport::diverged(rec.n_state(), n_te), true))
                }
            });
            match outcome {
                Ok((metrics, diverged)) => SweepCell {
                    config,
                    train: train_idx,
                    validation: v,
                    metrics: Some(metrics),
                    spectral_radius: radius,
                    unstable,
                    diverged,
                    error: None,
                },
                Err(e) => failed_cell(config, train_idx, v, radius, unstable, e.to_string()),
            }
        })
        .collect()
}

/// Box statistics per configuration, recomputed from the cells.
pub fn aggregate(configs: &[HyperParams], cells: &[SweepCell], per_config: usize) -> Result<Vec<ConfigAggregate>> {
    configs
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let mine = &cells[i * per_config..(i + 1) * per_config];
            let boxes = Metric::ALL
                .into_iter()
                .map(|m| {
                    let vals: Vec<f64> = mine.iter().filter_map(|c| c.value(m)).collect();
                    let b = if vals.is_empty() { None } else { Some(boxplot_stats(&vals)?) };
                    Ok((m, b))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ConfigAggregate {
                config: *h,
                cells: mine.len(),
                failed: mine.iter().filter(|c| c.metrics.is_none()).count(),
                unstable: mine.iter().filter(|c| c.unstable).count(),
                boxes,
            })
        })
        .collect()
}

/// Fits every configuration on every training record and scores it on every
/// validation record. Cell failures are recorded and the sweep continues.
pub fn run_full_factorial(
    train: &[Record],
    validation: &[Record],
    grid: &DoeGrid,
    opts: &SweepOptions,
    exec: Execution,
) -> Result<SweepResult> {
    grid.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::InvalidConfig("need at least one training and one validation record".into()));
    }
    for h in grid.configs() {
        durations_to_counts(&h, opts.samples_per_that)?;
    }
    let configs = grid.configs();
    let pairs = configs.len() * train.len();
    let per_pair = exec.map(pairs, |p| {
        let (c, t) = (p / train.len(), p % train.len());
        run_pair(&configs[c], c, t, &train[t], validation, grid, opts)
    });
    let cells: Vec<SweepCell> = per_pair.into_iter().flatten().collect();
    let aggregates = aggregate(&configs, &cells, train.len() * validation.len())?;
    Ok(SweepResult {
        grid: grid.clone(),
        configs,
        n_train: train.len(),
        n_validation: validation.len(),
        samples_per_that: opts.samples_per_that,
        cells,
        aggregates,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedConfig {
    pub index: usize,
    pub config: HyperParams,
    /// Mean of the ranking metric over finite cells.
    pub mean: f64,
    pub finite_cells: usize,
}

fn finite_mean(cells: &[SweepCell], m: Metric) -> (f64, usize) {
    let vals: Vec<f64> = cells.iter().filter_map(|c| c.value(m)).filter(|v| v.is_finite()).collect();
    (vals.iter().sum::<f64>() / vals.len() as f64, vals.len())
}

fn lexicographic(a: &HyperParams, b: &HyperParams) -> std::cmp::Ordering {
    a.l_tr.total_cmp(&b.l_tr).then(a.l_dx.total_cmp(&b.l_dx)).then(a.l_du.total_cmp(&b.l_du))
}

/// Configurations ascending by mean metric over finite cells; configurations
/// without any finite cell are left out.
pub fn rank_configs(r: &SweepResult, m: Metric) -> Vec<RankedConfig> {
    let mut ranked: Vec<RankedConfig> = r
        .configs
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            let (mean, n) = finite_mean(r.cells_of(i), m);
            (n > 0).then_some(RankedConfig { index: i, config: *h, mean, finite_cells: n })
        })
        .collect();
    ranked.sort_by(|a, b| a.mean.total_cmp(&b.mean).then_with(|| lexicographic(&a.config, &b.config)));
    ranked
}

/// Best configuration under one metric, with its mean value for all three.
#[derive(Debug, Clone, PartialEq)]
pub struct BestRow {
    pub criterion: Metric,
    pub config: HyperParams,
    pub nrmse: f64,
    pub nammae: f64,
    pub jsd: f64,
}

pub fn best_table(r: &SweepResult) -> Vec<BestRow> {
    Metric::ALL
        .into_iter()
        .filter_map(|m| {
            let top = rank_configs(r, m).into_iter().next()?;
            let cells = r.cells_of(top.index);
            Some(BestRow {
                criterion: m,
                config: top.config,
                nrmse: finite_mean(cells, Metric::Nrmse).0,
                nammae: finite_mean(cells, Metric::Nammae).0,
                jsd: finite_mean(cells, Metric::Jsd).0,
            })
        })
        .collect()
}

/// Uniform prior spanning the grid levels that fall inside the given bounds.
pub fn subdomain_filter(r: &SweepResult, l_tr: Interval, l_dx: Interval, l_du: Interval) -> Result<HyperPrior> {
    let hull = |levels: &[f64], iv: Interval, name: &str| -> Result<Interval> {
        let lo = levels.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = max_level(levels);
        if iv.lower < lo || iv.upper > hi || iv.lower > iv.upper {
            return Err(Error::InvalidInput(format!(
                "{name} bounds [{}, {}] are outside the grid range [{lo}, {hi}]",
                iv.lower, iv.upper
            )));
        }
        let inside: Vec<f64> = levels.iter().copied().filter(|v| iv.contains(*v)).collect();
        if inside.is_empty() {
            return Err(Error::InvalidInput(format!("no {name} level lies in [{}, {}]", iv.lower, iv.upper)));
        }
        Ok(Interval::new(
            inside.iter().copied().fold(f64::INFINITY, f64::min),
            max_level(&inside),
        ))
    };
    HyperPrior::new(
        hull(&r.grid.l_tr, l_tr, "l_tr")?,
        hull(&r.grid.l_dx, l_dx, "l_dx")?,
        hull(&r.grid.l_du, l_du, "l_du")?,
    )
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_cells_csv(out: &mut impl Write, r: &SweepResult) -> std::io::Result<()> {
    writeln!(out, "config,l_tr,l_dx,l_du,train,validation,nrmse,nammae,jsd,spectral_radius,unstable,diverged,status")?;
    for c in &r.cells {
        let h = r.configs[c.config];
        let status = c.error.as_deref().map_or("ok".to_string(), |e| format!("\"error: {}\"", e.replace('"', "'")));
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.config,
            h.l_tr,
            h.l_dx,
            h.l_du,
            c.train,
            c.validation,
            fmt_opt(c.value(Metric::Nrmse)),
            fmt_opt(c.value(Metric::Nammae)),
            fmt_opt(c.value(Metric::Jsd)),
            c.spectral_radius,
            c.unstable,
            c.diverged,
            status
        )?;
    }
    Ok(())
}

pub fn write_aggregate_csv(out: &mut impl Write, r: &SweepResult) -> std::io::Result<()> {
    let mut header = vec!["config", "l_tr", "l_dx", "l_du", "cells", "failed", "unstable"].into_iter().map(String::from).collect::<Vec<_>>();
    for m in Metric::ALL {
        for s in ["q1", "median", "q3", "whisker_low", "whisker_high", "mean", "outliers"] {
            header.push(format!("{}_{s}", m.name()));
        }
    }
    writeln!(out, "{}", header.join(","))?;
    for (i, a) in r.aggregates.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            a.config.l_tr.to_string(),
            a.config.l_dx.to_string(),
            a.config.l_du.to_string(),
            a.cells.to_string(),
            a.failed.to_string(),
            a.unstable.to_string(),
        ];
        for m in Metric::ALL {
            match a.box_of(m) {
                Some(b) => {
                    for v in [b.q1, b.median, b.q3, b.whisker_low, b.whisker_high, b.mean] {
                        row.push(v.to_string());
                    }
                    row.push(b.outliers.to_string());
                }
                None => row.extend(std::iter::repeat_n(String::new(), 7)),
            }
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_best_csv(out: &mut impl Write, rows: &[BestRow]) -> std::io::Result<()> {
    writeln!(out, "criterion,l_tr,l_dx,l_du,nrmse,nammae,jsd")?;
    for b in rows {
        writeln!(
            out,
            "best_{},{},{},{},{},{},{}",
            b.criterion.name(),
            b.config.l_tr,
            b.config.l_dx,
            b.config.l_du,
            b.nrmse,
            b.nammae,
            b.jsd
        )?;
    }
    Ok(())
}

/// True when the spectral radius exceeds the instability threshold.
pub fn is_unstable_radius(radius: f64) -> bool {
    radius > INSTABILITY_THRESHOLD
}
