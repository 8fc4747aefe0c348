//! Dynamic mode decomposition with control.
//!
//! Snapshots `y_j = (x_j; u_j)` and their successors `x_{j+1}` are collected
//! column-wise into `Y` and `X'`; the operator `G = [A B]` minimizing
//! `‖X' − G Y‖_F` is `X' V Σ⁻¹ Uᵀ` from the full SVD of `Y`, and splitting the
//! rows of `U` into the state block `U₁` and input block `U₂` gives
//! `A = X' V Σ⁻¹ U₁ᵀ` and `B = X' V Σ⁻¹ U₂ᵀ`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{self, Matrix, Vector, DEFAULT_REL_TOL};

/// Spectral radius above which a discrete operator is flagged unstable.
pub const INSTABILITY_THRESHOLD: f64 = 1.0 + 1e-9;

/// Column-aligned regression data: `y` is `(n+l) × c`, `xp` is `n × c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotPair {
    pub y: Matrix,
    pub xp: Matrix,
    /// Rows of `y` that hold state (the rest hold inputs).
    pub n_state: usize,
}

impl SnapshotPair {
    pub fn new(y: Matrix, xp: Matrix, n_state: usize) -> Result<Self> {
        if y.ncols() != xp.ncols() || n_state > y.nrows() {
            return Err(Error::InvalidInput(format!(
                "snapshot shapes disagree: Y {}x{}, X' {}x{}, {} state rows",
                y.nrows(),
                y.ncols(),
                xp.nrows(),
                xp.ncols(),
                n_state
            )));
        }
        Ok(SnapshotPair { y, xp, n_state })
    }

    pub fn columns(&self) -> usize {
        self.y.ncols()
    }
}

/// Builds `Y` (column j = `(x_j; u_j)`, j = 0..m−2) and `X'` (column j = `x_{j+1}`).
pub fn assemble_snapshots(states: &Matrix, inputs: &Matrix) -> Result<SnapshotPair> {
    let m = states.ncols();
    if inputs.ncols() != m {
        return Err(Error::InvalidInput(format!(
            "states have {m} samples, inputs {}",
            inputs.ncols()
        )));
    }
    if m < 2 {
        return Err(Error::InsufficientData(format!("{m} snapshots, need at least 2")));
    }
    let c = m - 1;
    let y = numerics::vstack(&[&states.columns(0, c).into_owned(), &inputs.columns(0, c).into_owned()])?;
    let xp = states.columns(1, c).into_owned();
    SnapshotPair::new(y, xp, states.nrows())
}

/// Identified discrete-time model `x_{j+1} = A x_j + B u_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DmdcModel {
    pub a: Matrix,
    pub b: Matrix,
    pub dt: f64,
    /// Frobenius norm of `X' − [A B] Y` on the fitting data, when fitted.
    pub residual: Option<f64>,
}

impl DmdcModel {
    pub fn new(a: Matrix, b: Matrix, dt: f64) -> Result<Self> {
        if !a.is_square() || b.nrows() != a.nrows() {
            return Err(Error::InvalidInput(format!(
                "A is {}x{} and B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        numerics::ensure_finite(&a, "A")?;
        numerics::ensure_finite(&b, "B")?;
        Ok(DmdcModel { a, b, dt, residual: None })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn l(&self) -> usize {
        self.b.ncols()
    }

    /// `[A B]`.
    pub fn operator(&self) -> Matrix {
        let mut g = Matrix::zeros(self.n(), self.n() + self.l());
        g.columns_mut(0, self.n()).copy_from(&self.a);
        g.columns_mut(self.n(), self.l()).copy_from(&self.b);
        g
    }

    pub fn residual_on(&self, pair: &SnapshotPair) -> f64 {
        (&pair.xp - self.operator() * &pair.y).norm()
    }
}

/// Least-squares operator through the untruncated SVD of `Y`.
pub fn fit_dmdc(pair: &SnapshotPair, dt: f64) -> Result<DmdcModel> {
    numerics::ensure_finite(&pair.y, "Y")?;
    numerics::ensure_finite(&pair.xp, "X'")?;
    if pair.y.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidInput("snapshot matrix Y is identically zero".into()));
    }
    let n = pair.n_state;
    let l = pair.y.nrows() - n;
    let f = numerics::svd(&pair.y)?;
    let inv = f.inverse_singular_values(DEFAULT_REL_TOL);
    // X' V Σ⁻¹
    let mut core = &pair.xp * &f.v;
    for (j, w) in inv.iter().enumerate() {
        core.column_mut(j).scale_mut(*w);
    }
    let u1 = f.u.rows(0, n);
    let u2 = f.u.rows(n, l);
    let a = &core * u1.transpose();
    let b = &core * u2.transpose();
    let mut model = DmdcModel::new(a, b, dt)
        .map_err(|e| Error::NumericalFailure(format!("fitted operator is not finite: {e}")))?;
    model.residual = Some(model.residual_on(pair));
    Ok(model)
}

/// Iterates the model from `x0` over `T` input columns; returns `n × (T+1)`.
pub fn predict(model: &DmdcModel, x0: &Vector, inputs: &Matrix) -> Result<Matrix> {
    if x0.len() != model.n() || inputs.nrows() != model.l() {
        return Err(Error::InvalidInput(format!(
            "x0 has {} entries and inputs {} rows; model is n={}, l={}",
            x0.len(),
            inputs.nrows(),
            model.n(),
            model.l()
        )));
    }
    let steps = inputs.ncols();
    let mut traj = Matrix::zeros(model.n(), steps + 1);
    traj.set_column(0, x0);
    let mut x = x0.clone();
    for j in 0..steps {
        x = &model.a * &x + &model.b * inputs.column(j);
        traj.set_column(j + 1, &x);
    }
    Ok(traj)
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub eigenvalues: Vec<Complex64>,
    pub spectral_radius: f64,
    /// `ln|λ| / dt` for each discrete eigenvalue.
    pub continuous_growth_rates: Vec<f64>,
    pub unstable: bool,
}

pub fn stability_report(model: &DmdcModel) -> Result<StabilityReport> {
    stability_of(&model.a, model.dt)
}

pub(crate) fn stability_of(a: &Matrix, dt: f64) -> Result<StabilityReport> {
    let eigenvalues = numerics::eigenvalues(a)?;
    let spectral_radius = numerics::spectral_radius(&eigenvalues);
    let continuous_growth_rates = eigenvalues.iter().map(|l| l.norm().ln() / dt).collect();
    Ok(StabilityReport {
        unstable: spectral_radius > INSTABILITY_THRESHOLD,
        eigenvalues,
        spectral_radius,
        continuous_growth_rates,
    })
}
