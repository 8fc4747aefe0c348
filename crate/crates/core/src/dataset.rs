//! Multichannel forced time series: CSV ingestion, decimation, windowing,
//! z-score standardization and train/validation/test splits.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Name of the time column in every record CSV.
pub const TIME_COLUMN: &str = "t";

/// Relative deviation of a time stamp from the uniform grid that is still accepted.
pub const GRID_TOLERANCE: f64 = 1e-6;

/// Ordered channel names: state channels first, then exogenous inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub state: Vec<String>,
    pub input: Vec<String>,
}

impl Schema {
    pub fn new<S: Into<String>>(state: impl IntoIterator<Item = S>, input: impl IntoIterator<Item = S>) -> Self {
        Schema {
            state: state.into_iter().map(Into::into).collect(),
            input: input.into_iter().map(Into::into).collect(),
        }
    }

    /// Ship motions: heave, roll, pitch, yaw, surge and sway velocity, forced by
    /// rudder angle and wave elevation at the centre of gravity.
    pub fn ship() -> Self {
        Schema::new(
            ["x3", "phi", "theta", "psi", "v1", "v2"],
            ["alpha", "eta_cg"],
        )
    }

    /// Forced Duffing oscillator: displacement and velocity, one forcing input.
    pub fn duffing() -> Self {
        Schema::new(["x", "v"], ["u"])
    }

    /// `x1..xn` states and `u1..ul` inputs.
    pub fn generic(n: usize, l: usize) -> Self {
        Schema {
            state: (1..=n).map(|i| format!("x{i}")).collect(),
            input: (1..=l).map(|i| format!("u{i}")).collect(),
        }
    }

    /// Parses `ship`, `duffing`, or an explicit list `a,b,c;u,w`.
    pub fn parse(spec: &str) -> Result<Self> {
        match spec.trim() {
            "ship" => Ok(Schema::ship()),
            "duffing" => Ok(Schema::duffing()),
            other => {
                let (s, u) = other.split_once(';').ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "schema `{other}`: expected `ship`, `duffing` or `states;inputs`"
                    ))
                })?;
                let names = |list: &str| -> Vec<String> {
                    list.split(',').map(str::trim).filter(|n| !n.is_empty()).map(String::from).collect()
                };
                let schema = Schema { state: names(s), input: names(u) };
                if schema.state.is_empty() {
                    return Err(Error::InvalidConfig("schema has no state channels".into()));
                }
                Ok(schema)
            }
        }
    }

    pub fn n_state(&self) -> usize {
        self.state.len()
    }

    pub fn n_input(&self) -> usize {
        self.input.len()
    }
}

/// A uniformly sampled forced time series.
///
/// `state` is `n × m` and `input` is `l × m`; column `j` is the sample at
/// `t0 + j·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub schema: Schema,
    pub t0: f64,
    pub dt: f64,
    /// Reference encounter period in seconds.
    pub t_hat: f64,
    pub state: Matrix,
    pub input: Matrix,
}

impl Record {
    pub fn new(schema: Schema, t0: f64, dt: f64, t_hat: f64, state: Matrix, input: Matrix) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        if !(t_hat > 0.0 && t_hat.is_finite()) {
            return Err(Error::InvalidInput(format!("t_hat must be positive, got {t_hat}")));
        }
        if state.nrows() != schema.n_state() || input.nrows() != schema.n_input() {
            return Err(Error::Schema(format!(
                "record has {}+{} channels, schema names {}+{}",
                state.nrows(),
                input.nrows(),
                schema.n_state(),
                schema.n_input()
            )));
        }
        if state.ncols() != input.ncols() {
            return Err(Error::InvalidInput(format!(
                "state has {} samples but input has {}",
                state.ncols(),
                input.ncols()
            )));
        }
        crate::numerics::ensure_finite(&state, "state")?;
        crate::numerics::ensure_finite(&input, "input")?;
        Ok(Record { schema, t0, dt, t_hat, state, input })
    }

    pub fn len(&self) -> usize {
        self.state.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_state(&self) -> usize {
        self.state.nrows()
    }

    pub fn n_input(&self) -> usize {
        self.input.nrows()
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    /// Samples per reference period, `t_hat / dt`.
    pub fn samples_per_period(&self) -> f64 {
        self.t_hat / self.dt
    }

    /// Keeps every `factor`-th sample starting at index 0.
    pub fn downsample(&self, factor: usize) -> Result<Record> {
        if factor == 0 || factor > self.len() {
            return Err(Error::InvalidInput(format!(
                "decimation factor {factor} not in 1..={}",
                self.len()
            )));
        }
        let keep: Vec<usize> = (0..self.len()).step_by(factor).collect();
        Ok(Record {
            schema: self.schema.clone(),
            t0: self.t0,
            dt: self.dt * factor as f64,
            t_hat: self.t_hat,
            state: self.state.select_columns(&keep),
            input: self.input.select_columns(&keep),
        })
    }

    /// Contiguous sub-record of `length` samples starting at `start`.
    pub fn slice_window(&self, start: usize, length: usize) -> Result<Record> {
        let end = start.checked_add(length).filter(|e| *e <= self.len() && length > 0);
        if end.is_none() {
            return Err(Error::Bounds(format!(
                "window [{start}, {start}+{length}) outside record of {} samples",
                self.len()
            )));
        }
        Ok(Record {
            schema: self.schema.clone(),
            t0: self.time(start),
            dt: self.dt,
            t_hat: self.t_hat,
            state: self.state.columns(start, length).into_owned(),
            input: self.input.columns(start, length).into_owned(),
        })
    }

    /// Writes the record as CSV preceded by `# key: value` metadata lines.
    pub fn write_csv(&self, out: &mut impl Write, meta: &[(String, String)]) -> std::io::Result<()> {
        for (k, v) in meta {
            writeln!(out, "# {k}: {v}")?;
        }
        writeln!(out, "# t_hat: {}", self.t_hat)?;
        let mut header = vec![TIME_COLUMN.to_string()];
        header.extend(self.schema.state.iter().cloned());
        header.extend(self.schema.input.iter().cloned());
        writeln!(out, "{}", header.join(","))?;
        let mut line = String::new();
        for j in 0..self.len() {
            line.clear();
            line.push_str(&self.time(j).to_string());
            for v in self.state.column(j).iter().chain(self.input.column(j).iter()) {
                line.push(',');
                line.push_str(&v.to_string());
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, meta: &[(String, String)]) -> Result<()> {
        let io = |source| Error::Io { path: path.to_path_buf(), source };
        let mut f = std::io::BufWriter::new(File::create(path).map_err(io)?);
        self.write_csv(&mut f, meta).map_err(io)?;
        f.flush().map_err(io)
    }
}

/// A numeric CSV table with optional `# key: value` metadata lines.
#[derive(Debug, Clone)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    /// Column-major values: `columns[c][row]`.
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Table> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Table::parse(&text).map_err(|e| match e {
            Error::Csv { source, .. } => Error::Csv { path: path.to_path_buf(), source },
            Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Table> {
        let meta = text
            .lines()
            .filter_map(|l| l.trim_start().strip_prefix('#'))
            .filter_map(|l| l.split_once(':'))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let csv_err = |source| Error::Csv { path: PathBuf::new(), source };
        let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(String::from).collect();
        let mut columns = vec![Vec::new(); header.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            for (c, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Schema(format!("row {}: `{field}` in column `{}` is not a number", row + 1, header[c]))
                })?;
                columns[c].push(v);
            }
        }
        Ok(Table { meta, header, columns })
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.header.iter().position(|h| h == name).map(|i| self.columns[i].as_slice())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    /// Stacks the named columns into a `names.len() × rows` matrix.
    pub fn channels(&self, names: &[String]) -> Result<Matrix> {
        let mut m = Matrix::zeros(names.len(), self.rows());
        for (i, name) in names.iter().enumerate() {
            let col = self
                .column(name)
                .ok_or_else(|| Error::Schema(format!("missing channel `{name}`")))?;
            for (j, v) in col.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub schema: Schema,
    /// Overrides the `t_hat` metadata line when set.
    pub t_hat: Option<f64>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions { schema: Schema::ship(), t_hat: None }
    }
}

/// Loads a record CSV: a `t` column plus one column per schema channel, in any order.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Record> {
    let table = Table::read(path)?;
    record_from_table(&table, opts).map_err(|e| match e {
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        Error::Grid(m) => Error::Grid(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn record_from_table(table: &Table, opts: &CsvOptions) -> Result<Record> {
    let t = table
        .column(TIME_COLUMN)
        .ok_or_else(|| Error::Schema("missing time column `t`".into()))?;
    if t.len() < 2 {
        return Err(Error::InsufficientData(format!("{} samples, need at least 2", t.len())));
    }
    let dt = check_uniform_grid(t)?;
    let t_hat = match opts.t_hat {
        Some(v) => v,
        None => {
            let raw = table
                .meta("t_hat")
                .ok_or_else(|| Error::Schema("no `t_hat` metadata line and no override given".into()))?;
            raw.parse()
                .map_err(|_| Error::Schema(format!("t_hat `{raw}` is not a number")))?
        }
    };
    let state = table.channels(&opts.schema.state)?;
    let input = table.channels(&opts.schema.input)?;
    Record::new(opts.schema.clone(), t[0], dt, t_hat, state, input)
}

/// Returns the grid step, or an error when any stamp strays from the uniform grid.
fn check_uniform_grid(t: &[f64]) -> Result<f64> {
    let m = t.len();
    let dt = (t[m - 1] - t[0]) / (m - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::Grid(format!("time column is not increasing (dt = {dt})")));
    }
    for (j, tj) in t.iter().enumerate() {
        let dev = (tj - (t[0] + j as f64 * dt)).abs();
        if dev > GRID_TOLERANCE * dt {
            return Err(Error::Grid(format!(
                "sample {j} deviates from the uniform grid by {dev:e} s (dt = {dt})"
            )));
        }
    }
    Ok(dt)
}

/// Per-channel z-score statistics fitted on a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
}

impl Standardizer {
    /// Pooled mean and population standard deviation over every sample of every record.
    pub fn fit(records: &[Record]) -> Result<Standardizer> {
        let first = records
            .first()
            .ok_or_else(|| Error::InsufficientData("standardizer needs at least one record".into()))?;
        if records.iter().any(|r| r.schema != first.schema) {
            return Err(Error::Schema("training records use different schemas".into()));
        }
        let stats = |rows: usize, get: &dyn Fn(&Record) -> &Matrix, names: &[String]| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut means = Vec::with_capacity(rows);
            let mut stds = Vec::with_capacity(rows);
            for (i, name) in names.iter().enumerate().take(rows) {
                let values = records.iter().flat_map(|r| get(r).row(i).iter().copied().collect::<Vec<_>>());
                let (mean, std) = mean_std(values);
                if !(std > 0.0) {
                    return Err(Error::DegenerateChannel { channel: name.clone() });
                }
                means.push(mean);
                stds.push(std);
            }
            Ok((means, stds))
        };
        let (state_mean, state_std) = stats(first.n_state(), &|r| &r.state, &first.schema.state)?;
        let (input_mean, input_std) = stats(first.n_input(), &|r| &r.input, &first.schema.input)?;
        Ok(Standardizer { state_mean, state_std, input_mean, input_std })
    }

    fn check(&self, r: &Record) -> Result<()> {
        if r.n_state() != self.state_mean.len() || r.n_input() != self.input_mean.len() {
            return Err(Error::Schema("record does not match the standardizer's channels".into()));
        }
        Ok(())
    }

    pub fn standardize(&self, r: &Record) -> Result<Record> {
        self.check(r)?;
        let mut out = r.clone();
        affine_rows(&mut out.state, &self.state_mean, &self.state_std, true);
        affine_rows(&mut out.input, &self.input_mean, &self.input_std, true);
        Ok(out)
    }

    pub fn destandardize(&self, r: &Record) -> Result<Record> {
        self.check(r)?;
        let mut out = r.clone();
        affine_rows(&mut out.state, &self.state_mean, &self.state_std, false);
        affine_rows(&mut out.input, &self.input_mean, &self.input_std, false);
        Ok(out)
    }

    /// Maps a standardized state trajectory (`n × T`) back to physical units.
    pub fn destandardize_state(&self, m: &Matrix) -> Matrix {
        let mut out = m.clone();
        affine_rows(&mut out, &self.state_mean, &self.state_std, false);
        out
    }
}

fn affine_rows(m: &mut Matrix, mean: &[f64], std: &[f64], forward: bool) {
    for (i, (mu, sd)) in mean.iter().zip(std).enumerate() {
        for v in m.row_mut(i).iter_mut() {
            *v = if forward { (*v - mu) / sd } else { *v * sd + mu };
        }
    }
}

/// Mean and population (1/N) standard deviation, two-pass.
pub fn mean_std(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Record indices assigned to each role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    pub fn new(train: Vec<usize>, validation: Vec<usize>, test: Vec<usize>) -> Result<Self> {
        let mut seen = HashSet::new();
        for i in train.iter().chain(&validation).chain(&test) {
            if !seen.insert(*i) {
                return Err(Error::InvalidConfig(format!("record {i} assigned to more than one role")));
            }
        }
        Ok(SplitSpec { train, validation, test })
    }
}

/// Record paths per role, read from a plain-text manifest.
///
/// Each non-blank line is `<role> <path>` with role `train`, `validation` or
/// `test`; `#` starts a comment. Relative paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitManifest {
    pub train: Vec<PathBuf>,
    pub validation: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
}

impl SplitManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut m = SplitManifest::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (role, file) = line
                .split_once(char::is_whitespace)
                .map(|(r, f)| (r, f.trim()))
                .ok_or_else(|| Error::InvalidConfig(format!("manifest line {}: expected `<role> <path>`", no + 1)))?;
            let p = base.join(file);
            match role.trim_end_matches(':') {
                "train" => m.train.push(p),
                "validation" => m.validation.push(p),
                "test" => m.test.push(p),
                other => {
                    return Err(Error::InvalidConfig(format!("manifest line {}: unknown role `{other}`", no + 1)))
                }
            }
        }
        let mut seen = HashSet::new();
        for p in m.train.iter().chain(&m.validation).chain(&m.test) {
            if !seen.insert(p) {
                return Err(Error::InvalidConfig(format!("{} listed under more than one role", p.display())));
            }
        }
        Ok(m)
    }
}
