//! Subcommand arguments and their implementations.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use hdmdc::bayes::{chebyshev_band, ensemble_predict, write_ensemble_csv, EnsembleSetup, HyperPrior, Interval};
use hdmdc::dataset::{Record, Schema, SplitManifest, Standardizer, Table};
use hdmdc::exec::Execution;
use hdmdc::hankel::{fit_with_hyperparams, HyperParams, DEFAULT_SAMPLES_PER_PERIOD};
use hdmdc::metrics::{MetricsReport, DEFAULT_BINS, NAMMAE_CONVENTION};
use hdmdc::model_file::{self, StoredModel};
use hdmdc::numerics::{Matrix, Vector};
use hdmdc::stats::{validate_pdf, PdfValidation, PdfValidationConfig, DEFAULT_BLOCK_LEN, DEFAULT_GRID_POINTS, DEFAULT_REPLICATES};
use hdmdc::sweep::{best_table, run_full_factorial, write_aggregate_csv, write_best_csv, write_cells_csv, DoeGrid, SweepOptions};
use hdmdc::synth::{prbs, synthesize_wave, DuffingOracle, LinearOracle, WaveSpec};

use crate::config::{CliError, CliResult, RunHeader};
use crate::io::{align, create, fmt_row, load_record, out_path, required, schema, write_file};

/// Everything a command needs besides its own arguments.
pub struct Context {
    pub out_dir: PathBuf,
    pub exec: Execution,
}

/// Integration rate for the oscillator, independent of the output sampling.
const DUFFING_MIN_SAMPLES_PER_PERIOD: f64 = 64.0;

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| crate::config::io_error(dir, e))
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, rename_all = "kebab-case")]
#[command(allow_negative_numbers = true)]
pub struct SynthArgs {
    /// wave, duffing or linear
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Significant wave height, m.
    #[arg(long)]
    pub hs: Option<f64>,
    /// Peak period, s. Also the reference period of wave and Duffing records.
    #[arg(long)]
    pub tp: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub omega_min: Option<f64>,
    #[arg(long)]
    pub omega_max: Option<f64>,
    /// Record length in reference periods.
    #[arg(long)]
    pub periods: Option<f64>,
    #[arg(long)]
    pub samples_per_that: Option<f64>,
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long)]
    pub stiffness: Option<f64>,
    #[arg(long)]
    pub cubic: Option<f64>,
    #[arg(long)]
    pub gain: Option<f64>,
    /// State dimension of the linear system.
    #[arg(long)]
    pub n: Option<usize>,
    /// Input dimension of the linear system.
    #[arg(long)]
    pub l: Option<usize>,
    /// Spectral radius of the linear system.
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn synth(args: &SynthArgs, ctx: &Context) -> CliResult<()> {
    let kind = args.kind.clone().unwrap_or_else(|| "wave".into());
    let seed = args.seed.unwrap_or(0);
    let periods = args.periods.unwrap_or(100.0);
    let spt = args.samples_per_that.unwrap_or(DEFAULT_SAMPLES_PER_PERIOD);
    if !(periods > 0.0 && spt > 0.0) {
        return Err(CliError::config("periods and samples-per-that must be positive"));
    }
    let samples = (periods * spt).round() as usize + 1;
    let defaults = WaveSpec::default();
    let wave = WaveSpec {
        n_components: args.components.unwrap_or(defaults.n_components),
        omega_min: args.omega_min.unwrap_or(defaults.omega_min),
        omega_max: args.omega_max.unwrap_or(defaults.omega_max),
        hs: args.hs.unwrap_or(defaults.hs),
        tp: args.tp.unwrap_or(defaults.tp),
        gamma: args.gamma.unwrap_or(defaults.gamma),
        seed,
    };
    wave.validate()?;
    let dt = wave.tp / spt;
    let grid: Vec<f64> = (0..samples).map(|j| j as f64 * dt).collect();

    let record = match kind.as_str() {
        "wave" => {
            let eta = synthesize_wave(&wave, &grid)?;
            let state = Matrix::from_row_slice(1, samples, &eta);
            Record::new(Schema::new(["eta"], Vec::<&str>::new()), 0.0, dt, wave.tp, state, Matrix::zeros(0, samples))?
        }
        "duffing" => {
            let sub = (DUFFING_MIN_SAMPLES_PER_PERIOD / spt).ceil().max(1.0) as usize;
            let fine: Vec<f64> = (0..(samples - 1) * sub + 1).map(|j| j as f64 * dt / sub as f64).collect();
            let eta = synthesize_wave(&wave, &fine)?;
            let omega_p = wave.peak_frequency();
            let stiffness = args.stiffness.unwrap_or(omega_p * omega_p);
            let osc = DuffingOracle {
                damping: args.damping.unwrap_or(0.2 * omega_p),
                stiffness,
                cubic: args.cubic.unwrap_or(0.05 * stiffness),
                gain: args.gain.unwrap_or(stiffness),
                dt: dt / sub as f64,
            };
            osc.record([0.0, 0.0], &eta, wave.tp)?.downsample(sub)?
        }
        "linear" => {
            let n = args.n.unwrap_or(6);
            let l = args.l.unwrap_or(2);
            let dt = 1.0 / spt;
            let sys = LinearOracle::random_stable(n, l, args.radius.unwrap_or(0.9), dt, seed)?;
            let hold = (spt / 8.0).round().max(1.0) as usize;
            let inputs = prbs(l, samples, hold, 1.0, seed.wrapping_add(1));
            sys.record(&Vector::zeros(n), &inputs, 1.0, Schema::generic(n, l))?
        }
        other => return Err(CliError::config(format!("unknown synth kind `{other}` (wave, duffing, linear)"))),
    };

    let header = RunHeader::new("synth", args)?.with_seed("seed", seed);
    let path = out_path(args.out.as_ref(), &ctx.out_dir, &format!("{kind}.csv"));
    let mut f = create(&path)?;
    record
        .write_csv(&mut f, &header.pairs())
        .and_then(|_| f.flush())
        .map_err(|e| crate::config::io_error(&path, e))?;
    println!("{}", serde_json::json!({ "output": path, "samples": record.len(), "kind": kind }));
    Ok(())
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, rename_all = "kebab-case")]
pub struct FitArgs {
    /// Training record CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `ship`, `duffing`, or `state,names;input,names`.
    #[arg(long)]
    pub schema: Option<String>,
    /// Overrides the record's reference period.
    #[arg(long)]
    pub t_hat: Option<f64>,
    /// Decimate to this many samples per reference period.
    #[arg(long)]
    pub samples_per_that: Option<f64>,
    /// Training window length in reference periods.
    #[arg(long)]
    pub l_tr: Option<f64>,
    /// State delay span in reference periods.
    #[arg(long)]
    pub l_dx: Option<f64>,
    /// Input delay span in reference periods.
    #[arg(long)]
    pub l_du: Option<f64>,
    /// Exclusive end sample of the training window; defaults to the record end.
    #[arg(long)]
    pub window_end: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn fit(args: &FitArgs, ctx: &Context) -> CliResult<()> {
    let schema = schema(args.schema.as_deref(), "ship")?;
    let input = required(args.input.as_ref(), "input")?;
    let rec = load_record(input, &schema, args.t_hat, args.samples_per_that)?;
    let spt = rec.samples_per_period();
    let h = HyperParams::new(args.l_tr.unwrap_or(10.0), args.l_dx.unwrap_or(0.0), args.l_du.unwrap_or(0.0));
    let model = fit_with_hyperparams(&rec, &h, spt, args.window_end.unwrap_or(rec.len()))?;
    let stability = model.stability()?;

    let header = RunHeader::new("fit", args)?;
    let mut lines = header.lines();
    lines.push(format!("state: {}", schema.state.join(",")));
    lines.push(format!("input: {}", schema.input.join(",")));
    let path = out_path(args.out.as_ref(), &ctx.out_dir, "model.txt");
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let residual = model.inner.residual;
    model_file::save(&path, &StoredModel::Hankel(model), &lines)?;
    println!(
        "{}",
        serde_json::json!({
            "model": path,
            "residual": residual,
            "spectral_radius": stability.spectral_radius,
            "unstable": stability.unstable,
        })
    );
    Ok(())
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, rename_all = "kebab-case")]
pub struct PredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Record providing the initial history and the forcing.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<String>,
    #[arg(long)]
    pub t_hat: Option<f64>,
    #[arg(long)]
    pub samples_per_that: Option<f64>,
    /// Sample the prediction starts from.
    #[arg(long)]
    pub start: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Start from a single state with zero-filled history.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub iic: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn predict(args: &PredictArgs, ctx: &Context) -> CliResult<()> {
    let schema = schema(args.schema.as_deref(), "ship")?;
    let model = model_file::load(required(args.model.as_ref(), "model")?)?.into_hankel()?;
    let rec = load_record(required(args.input.as_ref(), "input")?, &schema, args.t_hat, args.samples_per_that)?;
    if model.n != rec.n_state() || model.l != rec.n_input() {
        return Err(CliError::data(format!(
            "model has {} states and {} inputs, record has {} and {}",
            model.n,
            model.l,
            rec.n_state(),
            rec.n_input()
        )));
    }
    let iic = args.iic.unwrap_or(false);
    let start = args.start.unwrap_or(if iic { 0 } else { model.config.max_delay() });
    let steps = match args.steps {
        Some(s) => s,
        None => rec.len().checked_sub(start + 1).ok_or_else(|| CliError::data("start lies beyond the record"))?,
    };
    let (trajectory, transient) = if iic {
        let p = model.predict_record_iic(&rec, start, steps)?;
        (p.trajectory, Some(p.transient))
    } else {
        (model.predict_record(&rec, start, steps)?, None)
    };

    let header = RunHeader::new("predict", args)?;
    let mut names = vec!["t".to_string()];
    names.extend(schema.state.iter().cloned());
    if transient.is_some() {
        names.push("transient".into());
    }
    let path = out_path(args.out.as_ref(), &ctx.out_dir, "prediction.csv");
    let mut meta = header.pairs();
    meta.push(("t_hat".into(), rec.t_hat.to_string()));
    write_file(&path, &meta, |f| {
        writeln!(f, "{}", names.join(","))?;
        for k in 0..trajectory.ncols() {
            let mut row = vec![rec.time(start + k)];
            row.extend(trajectory.column(k).iter().copied());
            if let Some(tr) = transient {
                row.push(if k < tr { 1.0 } else { 0.0 });
            }
            writeln!(f, "{}", fmt_row(row))?;
        }
        Ok(())
    })?;
    println!("{}", serde_json::json!({ "output": path, "steps": steps, "iic": iic }));
    Ok(())
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, rename_all = "kebab-case")]
pub struct MetricsArgs {
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub prediction: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<String>,
    /// Histogram bins for the divergence.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Ignore rows flagged as transient.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub skip_transient: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn metrics(args: &MetricsArgs, ctx: &Context) -> CliResult<()> {
    let schema = schema(args.schema.as_deref(), "ship")?;
    let reference = Table::read(required(args.reference.as_ref(), "reference")?)?;
    let prediction = Table::read(required(args.prediction.as_ref(), "prediction")?)?;
    let a = align(&reference, &prediction, &schema.state, args.skip_transient.unwrap_or(true))?;
    let report = MetricsReport::compute(&a.reference, &a.prediction, args.bins.unwrap_or(DEFAULT_BINS))?;

    let header = RunHeader::new("metrics", args)?;
    let path = out_path(args.out.as_ref(), &ctx.out_dir, "metrics.csv");
    let mut meta = header.pairs();
    meta.push(("nammae".into(), NAMMAE_CONVENTION.into()));
    write_file(&path, &meta, |f| {
        writeln!(f, "channel,nrmse,nammae,jsd,samples")?;
        writeln!(f, "all,{},{},{},{}", report.nrmse, report.nammae, report.jsd, report.samples)?;
        for (i, name) in schema.state.iter().enumerate() {
            writeln!(
                f,
                "{name},{},{},{},{}",
                report.nrmse_channels[i], report.nammae_channels[i], report.jsd_channels[i], report.samples
            )?;
        }
        Ok(())
    })?;
    println!(
        "{}",
        serde_json::json!({ "output": path, "nrmse": report.nrmse, "nammae": report.nammae, "jsd": report.jsd })
    );
    Ok(())
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, rename_all = "kebab-case")]
pub struct SweepArgs {
    /// Manifest of `<role> <path>` lines.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<String>,
    #[arg(long)]
    pub t_hat: Option<f64>,
    #[arg(long)]
    pub samples_per_that: Option<f64>,
    /// Training lengths in reference periods, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub l_tr: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub l_dx: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub l_du: Option<Vec<f64>>,
    /// Scored horizon in reference periods.
    #[arg(long)]
    pub l_te: Option<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Z-score every record with training-set statistics.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub standardize: Option<bool>,
}

pub fn sweep(args: &SweepArgs, ctx: &Context) -> CliResult<()> {
    let schema = schema(args.schema.as_deref(), "ship")?;
    let manifest = SplitManifest::read(required(args.split.as_ref(), "split")?)?;
    let load = |paths: &[PathBuf]| -> CliResult<Vec<Record>> {
        paths.iter().map(|p| load_record(p, &schema, args.t_hat, args.samples_per_that)).collect()
    };
    let mut train = load(&manifest.train)?;
    let mut validation = load(&manifest.validation)?;
    if train.is_empty() || validation.is_empty() {
        return Err(CliError::config("split needs at least one train and one validation record"));
    }
    let spt = train[0].samples_per_period();
    if train.iter().chain(&validation).any(|r| (r.samples_per_period() - spt).abs() > 1e-6 * spt) {
        return Err(CliError::data("records differ in samples per reference period"));
    }
    if args.standardize.unwrap_or(true) {
        let z = Standardizer::fit(&train)?;
        train = train.iter().map(|r| z.standardize(r)).collect::<Result<_, _>>()?;
        validation = validation.iter().map(|r| z.standardize(r)).collect::<Result<_, _>>()?;
    }
    let defaults = DoeGrid::default();
    let grid = DoeGrid {
        l_tr: args.l_tr.clone().unwrap_or(defaults.l_tr),
        l_dx: args.l_dx.clone().unwrap_or(defaults.l_dx),
        l_du: args.l_du.clone().unwrap_or(defaults.l_du),
        l_te: args.l_te.unwrap_or(defaults.l_te),
    };
    let opts = SweepOptions { samples_per_that: spt, bins: args.bins.unwrap_or(DEFAULT_BINS) };
    let result = run_full_factorial(&train, &validation, &grid, &opts, ctx.exec)?;

    ensure_dir(&ctx.out_dir)?;
    let mut meta = RunHeader::new("sweep", args)?.pairs();
    meta.push(("nammae".into(), NAMMAE_CONVENTION.into()));
    let cells = ctx.out_dir.join("cells.csv");
    let aggregate = ctx.out_dir.join("aggregate.csv");
    let best = ctx.out_dir.join("best.csv");
    write_file(&cells, &meta, |f| write_cells_csv(f, &result))?;
    write_file(&aggregate, &meta, |f| write_aggregate_csv(f, &result))?;
    write_file(&best, &meta, |f| write_best_csv(f, &best_table(&result)))?;
    let failed: usize = result.aggregates.iter().map(|a| a.failed).sum();
    println!(
        "{}",
        serde_json::json!({
            "configs": result.configs.len(),
            "cells": result.cells.len(),
            "failed_cells": failed,
            "cells_csv": cells,
            "aggregate_csv": aggregate,
            "best_csv": best,
        })
    );
    Ok(())
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, rename_all = "kebab-case")]
pub struct BayesArgs {
    /// Record the models are trained on.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Record providing history and forcing for the prediction.
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<String>,
    #[arg(long)]
    pub t_hat: Option<f64>,
    #[arg(long)]
    pub samples_per_that: Option<f64>,
    #[arg(long)]
    pub l_tr_min: Option<f64>,
    #[arg(long)]
    pub l_tr_max: Option<f64>,
    #[arg(long)]
    pub l_dx_min: Option<f64>,
    #[arg(long)]
    pub l_dx_max: Option<f64>,
    #[arg(long)]
    pub l_du_min: Option<f64>,
    #[arg(long)]
    pub l_du_max: Option<f64>,
    /// Monte Carlo draws.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Band half-width in standard deviations.
    #[arg(long)]
    pub k: Option<f64>,
    /// Exclusive end of the training window.
    #[arg(long)]
    pub train_end: Option<usize>,
    #[arg(long)]
    pub start: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub standardize: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn bayes(args: &BayesArgs, ctx: &Context) -> CliResult<()> {
    let schema = schema(args.schema.as_deref(), "ship")?;
    let train = load_record(required(args.train.as_ref(), "train")?, &schema, args.t_hat, args.samples_per_that)?;
    let target = load_record(required(args.target.as_ref(), "target")?, &schema, args.t_hat, args.samples_per_that)?;
    let spt = train.samples_per_period();
    if (target.samples_per_period() - spt).abs() > 1e-6 * spt {
        return Err(CliError::data("train and target records differ in samples per reference period"));
    }
    let d = HyperPrior::default();
    let prior = HyperPrior::new(
        Interval::new(args.l_tr_min.unwrap_or(d.l_tr.lower), args.l_tr_max.unwrap_or(d.l_tr.upper)),
        Interval::new(args.l_dx_min.unwrap_or(d.l_dx.lower), args.l_dx_max.unwrap_or(d.l_dx.upper)),
        Interval::new(args.l_du_min.unwrap_or(d.l_du.lower), args.l_du_max.unwrap_or(d.l_du.upper)),
    )?;
    let seed = args.seed.unwrap_or(0);
    let draws = args.draws.unwrap_or(hdmdc::bayes::DEFAULT_DRAWS);
    let k = args.k.unwrap_or(hdmdc::bayes::DEFAULT_COVERAGE_FACTOR);
    let start = args.start.unwrap_or((prior.max_delay() * spt).round() as usize);
    let steps = match args.steps {
        Some(s) => s,
        None => target.len().checked_sub(start + 1).ok_or_else(|| CliError::data("start lies beyond the target record"))?,
    };
    let setup = EnsembleSetup { samples_per_that: spt, train_end: args.train_end.unwrap_or(train.len()), start, steps };

    let (mut ensemble, scaler) = if args.standardize.unwrap_or(true) {
        let z = Standardizer::fit(std::slice::from_ref(&train))?;
        let e = ensemble_predict(&z.standardize(&train)?, &z.standardize(&target)?, &prior, draws, &setup, seed, ctx.exec)?;
        (e, Some(z))
    } else {
        (ensemble_predict(&train, &target, &prior, draws, &setup, seed, ctx.exec)?, None)
    };
    if let Some(z) = scaler {
        ensemble.mu = z.destandardize_state(&ensemble.mu);
        for (r, s) in z.state_std.iter().enumerate() {
            ensemble.sigma.row_mut(r).scale_mut(*s);
        }
    }
    let band = chebyshev_band(&ensemble, k)?;

    let mut meta = RunHeader::new("bayes", args)?.with_seed("seed", seed).pairs();
    meta.push(("realizations".into(), ensemble.n_realizations.to_string()));
    meta.push(("excluded".into(), ensemble.excluded.to_string()));
    meta.push(("nominal_coverage".into(), band.nominal_coverage().to_string()));
    let path = out_path(args.out.as_ref(), &ctx.out_dir, "ensemble.csv");
    write_file(&path, &meta, |f| write_ensemble_csv(f, &ensemble, &band, &schema.state, |c| target.time(start + c)))?;
    println!(
        "{}",
        serde_json::json!({
            "output": path,
            "realizations": ensemble.n_realizations,
            "excluded": ensemble.excluded,
            "seed": seed,
        })
    );
    Ok(())
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, rename_all = "kebab-case")]
pub struct ValidatePdfArgs {
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub prediction: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<String>,
    /// Bootstrap replicates per series.
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub block_len: Option<usize>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub skip_transient: Option<bool>,
}

pub fn validate_pdf_cmd(args: &ValidatePdfArgs, ctx: &Context) -> CliResult<()> {
    let schema = schema(args.schema.as_deref(), "ship")?;
    let reference = Table::read(required(args.reference.as_ref(), "reference")?)?;
    let prediction = Table::read(required(args.prediction.as_ref(), "prediction")?)?;
    let a = align(&reference, &prediction, &schema.state, args.skip_transient.unwrap_or(true))?;
    let seed = args.seed.unwrap_or(0);
    let cfg = PdfValidationConfig {
        replicates: args.replicates.unwrap_or(DEFAULT_REPLICATES),
        block_len: args.block_len.unwrap_or(DEFAULT_BLOCK_LEN),
        grid_points: args.grid_points.unwrap_or(DEFAULT_GRID_POINTS),
        seed,
    };
    let results: Vec<PdfValidation> = (0..schema.n_state())
        .map(|i| {
            let r: Vec<f64> = a.reference.row(i).iter().copied().collect();
            let p: Vec<f64> = a.prediction.row(i).iter().copied().collect();
            validate_pdf(&r, &p, &cfg, ctx.exec)
        })
        .collect::<Result<_, _>>()?;

    ensure_dir(&ctx.out_dir)?;
    let meta = RunHeader::new("validate-pdf", args)?.with_seed("seed", seed).pairs();
    let kde = ctx.out_dir.join("kde.csv");
    let summary = ctx.out_dir.join("jsd_summary.csv");
    write_file(&kde, &meta, |f| {
        writeln!(f, "channel,x,ref_pdf,ref_lower,ref_upper,pred_pdf,pred_lower,pred_upper")?;
        for (name, v) in schema.state.iter().zip(&results) {
            for j in 0..v.reference.grid.len() {
                writeln!(
                    f,
                    "{name},{}",
                    fmt_row([
                        v.reference.grid[j],
                        v.reference.density[j],
                        v.reference_band.lower[j],
                        v.reference_band.upper[j],
                        v.prediction.density[j],
                        v.prediction_band.lower[j],
                        v.prediction_band.upper[j],
                    ])
                )?;
            }
        }
        Ok(())
    })?;
    write_file(&summary, &meta, |f| {
        writeln!(f, "channel,expected,q_low,q_high,width")?;
        for (name, v) in schema.state.iter().zip(&results) {
            writeln!(f, "{name},{}", fmt_row([v.jsd_expected, v.jsd_low, v.jsd_high, v.jsd_width()]))?;
        }
        let n = results.len() as f64;
        let avg = |g: fn(&PdfValidation) -> f64| results.iter().map(g).sum::<f64>() / n;
        writeln!(
            f,
            "avg,{}",
            fmt_row([avg(|v| v.jsd_expected), avg(|v| v.jsd_low), avg(|v| v.jsd_high), avg(|v| v.jsd_width())])
        )
    })?;
    println!("{}", serde_json::json!({ "kde_csv": kde, "summary_csv": summary, "channels": results.len() }));
    Ok(())
}
