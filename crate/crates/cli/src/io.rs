//! Record loading and output helpers shared by the subcommands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hdmdc::dataset::{load_csv, CsvOptions, Record, Schema, Table, TIME_COLUMN};
use hdmdc::numerics::Matrix;

use crate::config::{io_error, CliError, CliResult};

pub fn schema(spec: Option<&str>, default: &str) -> CliResult<Schema> {
    Ok(Schema::parse(spec.unwrap_or(default))?)
}

/// Integer factor taking `native` samples per period down to `target`.
pub fn decimation_factor(native: f64, target: f64) -> CliResult<usize> {
    if !(target > 0.0) {
        return Err(CliError::config(format!("samples-per-that must be positive, got {target}")));
    }
    let ratio = native / target;
    let factor = ratio.round();
    if factor < 1.0 || (ratio - factor).abs() > 1e-6 * ratio {
        return Err(CliError::config(format!(
            "cannot reach {target} samples per period from {native} by integer decimation"
        )));
    }
    Ok(factor as usize)
}

/// Loads a record, optionally decimating it to `samples_per_that`.
pub fn load_record(path: &Path, schema: &Schema, t_hat: Option<f64>, samples_per_that: Option<f64>) -> CliResult<Record> {
    let rec = load_csv(path, &CsvOptions { schema: schema.clone(), t_hat })?;
    match samples_per_that {
        None => Ok(rec),
        Some(target) => {
            let factor = decimation_factor(rec.samples_per_period(), target)?;
            if factor == 1 {
                Ok(rec)
            } else {
                Ok(rec.downsample(factor)?)
            }
        }
    }
}

pub fn required<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::config(format!("missing required option --{flag}")))
}

pub fn out_path(explicit: Option<&PathBuf>, dir: &Path, default_name: &str) -> PathBuf {
    explicit.cloned().unwrap_or_else(|| dir.join(default_name))
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

/// Writes `# key: value` lines followed by whatever `body` emits.
pub fn write_file(
    path: &Path,
    meta: &[(String, String)],
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> CliResult<()> {
    let mut f = create(path)?;
    let res = (|| {
        for (k, v) in meta {
            writeln!(f, "# {k}: {v}")?;
        }
        body(&mut f)?;
        f.flush()
    })();
    res.map_err(|e| io_error(path, e))
}

pub fn fmt_row(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Reference and prediction state matrices over their common time stamps.
pub struct Aligned {
    pub reference: Matrix,
    pub prediction: Matrix,
}

/// Matches prediction rows to reference rows by time stamp.
///
/// Prediction rows flagged in a `transient` column are dropped when `skip_transient`.
pub fn align(reference: &Table, prediction: &Table, names: &[String], skip_transient: bool) -> CliResult<Aligned> {
    let t_ref = reference
        .column(TIME_COLUMN)
        .ok_or_else(|| CliError::data("reference has no `t` column"))?;
    let t_pred = prediction
        .column(TIME_COLUMN)
        .ok_or_else(|| CliError::data("prediction has no `t` column"))?;
    let keep: Vec<usize> = match prediction.column("transient") {
        Some(flags) if skip_transient => (0..t_pred.len()).filter(|&j| flags[j] == 0.0).collect(),
        _ => (0..t_pred.len()).collect(),
    };
    if keep.is_empty() || t_ref.len() < 2 {
        return Err(CliError::data("no samples to compare"));
    }
    let dt = (t_ref[t_ref.len() - 1] - t_ref[0]) / (t_ref.len() - 1) as f64;
    let tol = 1e-6 * dt;
    let ref_rows: Vec<usize> = keep
        .iter()
        .map(|&j| {
            let t = t_pred[j];
            let i = ((t - t_ref[0]) / dt).round();
            let i = if i >= 0.0 { i as usize } else { usize::MAX };
            match t_ref.get(i) {
                Some(tr) if (tr - t).abs() <= tol => Ok(i),
                _ => Err(CliError::data(format!("prediction time {t} has no matching reference sample"))),
            }
        })
        .collect::<CliResult<_>>()?;
    let r = reference.channels(names)?;
    let p = prediction.channels(names)?;
    Ok(Aligned {
        reference: r.select_columns(&ref_rows),
        prediction: p.select_columns(&keep),
    })
}
