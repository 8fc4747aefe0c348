//! Plain-text model files.
//!
//! ```text
//! # optional comment lines
//! hdmdc-model 1
//! kind hankel
//! n 2
//! l 1
//! s 3
//! z 2
//! n_tr 60
//! samples_per_that 8
//! dt 0.1
//! residual 1.5e-14
//! A 8 8
//! <8 rows of 8 values>
//! B 8 3
//! <8 rows of 3 values>
//! ```
//!
//! Matrices are written row by row. Values use the shortest decimal form that
//! parses back to the same `f64`, so a save/load cycle is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::dmdc::DmdcModel;
use crate::error::{Error, Result};
use crate::hankel::{HankelConfig, HankelDmdcModel};
use crate::numerics::Matrix;

pub const FORMAT_TAG: &str = "hdmdc-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Dmdc(DmdcModel),
    Hankel(HankelDmdcModel),
}

impl StoredModel {
    pub fn operators(&self) -> &DmdcModel {
        match self {
            StoredModel::Dmdc(m) => m,
            StoredModel::Hankel(h) => &h.inner,
        }
    }

    /// Views either kind as an augmented model; a plain model has no delays.
    pub fn into_hankel(self) -> Result<HankelDmdcModel> {
        match self {
            StoredModel::Hankel(h) => Ok(h),
            StoredModel::Dmdc(m) => {
                let (n, l) = (m.n(), m.l());
                HankelDmdcModel::new(m, n, l, HankelConfig { s: 0, z: 0, n_tr: 2, samples_per_that: 1.0 })
            }
        }
    }
}

fn push_matrix(out: &mut String, name: &str, m: &Matrix) {
    let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
    if m.ncols() == 0 {
        return;
    }
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

/// Serializes `model`, prefixing each `header` line with `# `.
pub fn to_string(model: &StoredModel, header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    let _ = writeln!(out, "{FORMAT_TAG} {FORMAT_VERSION}");
    let ops = model.operators();
    match model {
        StoredModel::Dmdc(m) => {
            let _ = writeln!(out, "kind dmdc\nn {}\nl {}", m.n(), m.l());
        }
        StoredModel::Hankel(h) => {
            let c = &h.config;
            let _ = writeln!(
                out,
                "kind hankel\nn {}\nl {}\ns {}\nz {}\nn_tr {}\nsamples_per_that {}",
                h.n, h.l, c.s, c.z, c.n_tr, c.samples_per_that
            );
        }
    }
    let _ = writeln!(out, "dt {}", ops.dt);
    match ops.residual {
        Some(r) => {
            let _ = writeln!(out, "residual {r}");
        }
        None => out.push_str("residual none\n"),
    }
    push_matrix(&mut out, "A", &ops.a);
    push_matrix(&mut out, "B", &ops.b);
    out
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Ok((i + 1, t));
        }
        Err(Error::Schema("model file ends early".into()))
    }

    fn field<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (no, line) = self.next()?;
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(k), Some(v), None) if k == key => v
                .parse()
                .map_err(|_| Error::Schema(format!("line {no}: cannot parse {key} value {v:?}"))),
            _ => Err(Error::Schema(format!("line {no}: expected `{key} <value>`, found {line:?}"))),
        }
    }

    fn matrix(&mut self, name: &str) -> Result<Matrix> {
        let (no, line) = self.next()?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        let dims = match parts.as_slice() {
            [k, r, c] if *k == name => r.parse::<usize>().ok().zip(c.parse::<usize>().ok()),
            _ => None,
        };
        let (rows, cols) =
            dims.ok_or_else(|| Error::Schema(format!("line {no}: expected `{name} <rows> <cols>`, found {line:?}")))?;
        let mut m = Matrix::zeros(rows, cols);
        if cols == 0 {
            return Ok(m);
        }
        for r in 0..rows {
            let (no, line) = self.next()?;
            let values: Vec<&str> = line.split_whitespace().collect();
            if values.len() != cols {
                return Err(Error::Schema(format!(
                    "line {no}: row {r} of {name} has {} values, expected {cols}",
                    values.len()
                )));
            }
            for (c, v) in values.iter().enumerate() {
                m[(r, c)] = v
                    .parse()
                    .map_err(|_| Error::Schema(format!("line {no}: bad number {v:?} in {name}")))?;
            }
        }
        Ok(m)
    }
}

pub fn from_str(text: &str) -> Result<StoredModel> {
    let mut lines = Lines { inner: text.lines().enumerate().peekable() };
    let (no, tag) = lines.next()?;
    let version = tag
        .strip_prefix(FORMAT_TAG)
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| Error::Schema(format!("line {no}: not a model file (found {tag:?})")))?;
    if version != FORMAT_VERSION {
        return Err(Error::Schema(format!("unsupported model file version {version}")));
    }
    let kind: String = lines.field("kind")?;
    let n: usize = lines.field("n")?;
    let l: usize = lines.field("l")?;
    let config = match kind.as_str() {
        "dmdc" => None,
        "hankel" => {
            let s = lines.field("s")?;
            let z = lines.field("z")?;
            let n_tr = lines.field("n_tr")?;
            let spt = lines.field("samples_per_that")?;
            Some(HankelConfig::new(s, z, n_tr, spt)?)
        }
        other => return Err(Error::Schema(format!("unknown model kind {other:?}"))),
    };
    let dt: f64 = lines.field("dt")?;
    let residual: String = lines.field("residual")?;
    let residual = match residual.as_str() {
        "none" => None,
        v => Some(v.parse().map_err(|_| Error::Schema(format!("bad residual {v:?}")))?),
    };
    let a = lines.matrix("A")?;
    let b = lines.matrix("B")?;
    let mut ops = DmdcModel::new(a, b, dt)?;
    ops.residual = residual;
    match config {
        None => {
            if ops.n() != n || ops.l() != l {
                return Err(Error::Schema(format!(
                    "header says n={n}, l={l} but operators are {}x{} and {} inputs",
                    ops.n(),
                    ops.n(),
                    ops.l()
                )));
            }
            Ok(StoredModel::Dmdc(ops))
        }
        Some(c) => HankelDmdcModel::new(ops, n, l, c)
            .map(StoredModel::Hankel)
            .map_err(|e| Error::Schema(e.to_string())),
    }
}

pub fn save(path: &Path, model: &StoredModel, header: &[String]) -> Result<()> {
    std::fs::write(path, to_string(model, header)).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn load(path: &Path) -> Result<StoredModel> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    from_str(&text)
}
