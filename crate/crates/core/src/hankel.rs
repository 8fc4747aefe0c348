//! Hankel (time-delay) augmented DMD with control.
//!
//! The state is extended with `s` delayed copies of itself and the input with
//! `z` delayed copies, independently. Column `j` of the regression data is
//!
//! ```text
//! Ŷ_j  = [x_j; x_{j−1}; …; x_{j−s}; u_j; u_{j−1}; …; u_{j−z}]
//! X̂'_j = [x_{j+1}; x_j; …; x_{j+1−s}]
//! ```
//!
//! and the augmented operators follow from the same SVD solve as plain DMDc.

use crate::dataset::Record;
use crate::dmdc::{self, DmdcModel, SnapshotPair, StabilityReport};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

/// Samples per reference period after the usual decimation.
pub const DEFAULT_SAMPLES_PER_PERIOD: f64 = 32.0;

/// Length, in reference periods, of the start-up transient flagged after an
/// incomplete-initial-condition start.
pub const IIC_TRANSIENT_PERIODS: f64 = 5.0;

/// Training length and maximum state/input delays, in reference periods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub l_tr: f64,
    pub l_dx: f64,
    pub l_du: f64,
}

impl HyperParams {
    pub fn new(l_tr: f64, l_dx: f64, l_du: f64) -> Self {
        HyperParams { l_tr, l_dx, l_du }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l_tr > 0.0 && self.l_dx >= 0.0 && self.l_du >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "need l_tr > 0, l_dx >= 0, l_du >= 0; got ({}, {}, {})",
                self.l_tr, self.l_dx, self.l_du
            )));
        }
        Ok(())
    }
}

/// Delay counts and training-window length in samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HankelConfig {
    /// Delayed state copies.
    pub s: usize,
    /// Delayed input copies.
    pub z: usize,
    /// Training samples (the regression uses `n_tr − 1` snapshot pairs).
    pub n_tr: usize,
    pub samples_per_that: f64,
}

impl HankelConfig {
    pub fn new(s: usize, z: usize, n_tr: usize, samples_per_that: f64) -> Result<Self> {
        if n_tr < 2 {
            return Err(Error::InvalidConfig(format!("n_tr = {n_tr}, need at least 2")));
        }
        if !(samples_per_that >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "samples per reference period must be >= 1, got {samples_per_that}"
            )));
        }
        Ok(HankelConfig { s, z, n_tr, samples_per_that })
    }

    pub fn max_delay(&self) -> usize {
        self.s.max(self.z)
    }

    /// Samples consumed by a training window: the window itself plus delay history.
    pub fn span(&self) -> usize {
        self.n_tr + self.max_delay()
    }

    pub fn transient_samples(&self) -> usize {
        (IIC_TRANSIENT_PERIODS * self.samples_per_that).ceil() as usize
    }
}

/// Rounds durations to the nearest sample counts (half away from zero).
pub fn durations_to_counts(h: &HyperParams, samples_per_that: f64) -> Result<HankelConfig> {
    h.validate()?;
    if !(samples_per_that >= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "samples per reference period must be >= 1, got {samples_per_that}"
        )));
    }
    let count = |d: f64| (d * samples_per_that).round() as usize;
    HankelConfig::new(count(h.l_dx), count(h.l_du), count(h.l_tr), samples_per_that)
}

/// Augmented regression data with `n(s+1) + l(z+1)` rows in `y`.
pub fn build_hankel_blocks(states: &Matrix, inputs: &Matrix, s: usize, z: usize) -> Result<SnapshotPair> {
    let (n, m) = states.shape();
    let l = inputs.nrows();
    if inputs.ncols() != m {
        return Err(Error::InvalidInput(format!("states have {m} samples, inputs {}", inputs.ncols())));
    }
    let d = s.max(z);
    if m < d + 2 {
        return Err(Error::InsufficientData(format!(
            "{m} samples cannot fill delays up to {d}: need at least {}, short by {}",
            d + 2,
            d + 2 - m
        )));
    }
    let cols = m - 1 - d;
    let state_rows = n * (s + 1);
    let mut y = Matrix::zeros(state_rows + l * (z + 1), cols);
    let mut xp = Matrix::zeros(state_rows, cols);
    for c in 0..cols {
        let j = d + c;
        for k in 0..=s {
            y.view_mut((k * n, c), (n, 1)).copy_from(&states.column(j - k));
            xp.view_mut((k * n, c), (n, 1)).copy_from(&states.column(j + 1 - k));
        }
        for k in 0..=z {
            y.view_mut((state_rows + k * l, c), (l, 1)).copy_from(&inputs.column(j - k));
        }
    }
    SnapshotPair::new(y, xp, state_rows)
}

/// Fitted augmented model.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelDmdcModel {
    /// Augmented operators: `A` is `n(s+1)` square, `B` has `l(z+1)` columns.
    pub inner: DmdcModel,
    pub n: usize,
    pub l: usize,
    pub config: HankelConfig,
}

/// Trajectory started from zero-filled delay slots.
#[derive(Debug, Clone, PartialEq)]
pub struct IicPrediction {
    pub trajectory: Matrix,
    /// Leading columns that belong to the start-up transient.
    pub transient: usize,
}

impl IicPrediction {
    pub fn in_transient(&self, column: usize) -> bool {
        column < self.transient
    }
}

impl HankelDmdcModel {
    pub fn new(inner: DmdcModel, n: usize, l: usize, config: HankelConfig) -> Result<Self> {
        if inner.n() != n * (config.s + 1) || inner.l() != l * (config.z + 1) {
            return Err(Error::InvalidInput(format!(
                "operators are {}x{} / {} inputs, expected n(s+1) = {} and l(z+1) = {}",
                inner.n(),
                inner.n(),
                inner.l(),
                n * (config.s + 1),
                l * (config.z + 1)
            )));
        }
        Ok(HankelDmdcModel { inner, n, l, config })
    }

    pub fn a(&self) -> &Matrix {
        &self.inner.a
    }

    pub fn b(&self) -> &Matrix {
        &self.inner.b
    }

    pub fn stability(&self) -> Result<StabilityReport> {
        dmdc::stability_report(&self.inner)
    }

    /// Runs the augmented recurrence from `x̂` and `û`; `next_input(k)` supplies
    /// `u` for the step that produces column `k + 2`.
    fn rollout(&self, mut x_hat: Vector, mut u_hat: Vector, steps: usize, next_input: impl Fn(usize) -> Vector) -> Matrix {
        let (n, l) = (self.n, self.l);
        let mut traj = Matrix::zeros(n, steps + 1);
        traj.set_column(0, &x_hat.rows(0, n).into_owned());
        for k in 0..steps {
            x_hat = &self.inner.a * &x_hat + &self.inner.b * &u_hat;
            traj.set_column(k + 1, &x_hat.rows(0, n).into_owned());
            if k + 1 < steps && l > 0 {
                let z = self.config.z;
                // shift the input register one slot and insert the newest sample
                for slot in (1..=z).rev() {
                    let prev = u_hat.rows((slot - 1) * l, l).into_owned();
                    u_hat.rows_mut(slot * l, l).copy_from(&prev);
                }
                u_hat.rows_mut(0, l).copy_from(&next_input(k));
            }
        }
        traj
    }

    /// Prediction from a complete history.
    ///
    /// `state_history` is `n × (s+1)` and `input_history` is `l × (z+1)`, both in
    /// chronological order with the current sample `j` in the last column.
    /// `future_inputs` holds `u_{j+1} … u_{j+T}`, aligned with the predicted
    /// columns `1..=T`; the final one pairs with the last predicted state and
    /// does not influence it.
    pub fn predict(&self, state_history: &Matrix, input_history: &Matrix, future_inputs: &Matrix) -> Result<Matrix> {
        let HankelConfig { s, z, .. } = self.config;
        if state_history.shape() != (self.n, s + 1) || input_history.shape() != (self.l, z + 1) || future_inputs.nrows() != self.l {
            return Err(Error::InvalidInput(format!(
                "histories are {:?} and {:?}, future inputs have {} rows; expected ({}, {}), ({}, {}) and {} rows",
                state_history.shape(),
                input_history.shape(),
                future_inputs.nrows(),
                self.n,
                s + 1,
                self.l,
                z + 1,
                self.l
            )));
        }
        let mut x_hat = Vector::zeros(self.n * (s + 1));
        for k in 0..=s {
            x_hat.rows_mut(k * self.n, self.n).copy_from(&state_history.column(s - k));
        }
        let mut u_hat = Vector::zeros(self.l * (z + 1));
        for k in 0..=z {
            u_hat.rows_mut(k * self.l, self.l).copy_from(&input_history.column(z - k));
        }
        Ok(self.rollout(x_hat, u_hat, future_inputs.ncols(), |k| future_inputs.column(k).into_owned()))
    }

    /// Prediction from the current state alone, delay slots zero-filled.
    ///
    /// `inputs` holds `u_j … u_{j+T−1}`; the delayed-input register fills with
    /// these as they become available.
    pub fn predict_iic(&self, x0: &Vector, inputs: &Matrix) -> Result<IicPrediction> {
        if x0.len() != self.n || inputs.nrows() != self.l {
            return Err(Error::InvalidInput(format!(
                "x0 has {} entries and inputs {} rows; model is n={}, l={}",
                x0.len(),
                inputs.nrows(),
                self.n,
                self.l
            )));
        }
        let mut x_hat = Vector::zeros(self.inner.n());
        x_hat.rows_mut(0, self.n).copy_from(x0);
        let mut u_hat = Vector::zeros(self.inner.l());
        let steps = inputs.ncols();
        if steps > 0 {
            u_hat.rows_mut(0, self.l).copy_from(&inputs.column(0));
        }
        let trajectory = self.rollout(x_hat, u_hat, steps, |k| inputs.column(k + 1).into_owned());
        Ok(IicPrediction { trajectory, transient: self.config.transient_samples().min(steps + 1) })
    }

    /// Predicts `steps` samples past `start` in `record`, taking the delay history
    /// and inputs from the record itself.
    pub fn predict_record(&self, record: &Record, start: usize, steps: usize) -> Result<Matrix> {
        let HankelConfig { s, z, .. } = self.config;
        if start < s.max(z) || start + steps >= record.len() {
            return Err(Error::Bounds(format!(
                "prediction from sample {start} over {steps} steps needs history {} and {} samples; record has {}",
                s.max(z),
                start + steps + 1,
                record.len()
            )));
        }
        self.predict(
            &record.state.columns(start - s, s + 1).into_owned(),
            &record.input.columns(start - z, z + 1).into_owned(),
            &record.input.columns(start + 1, steps).into_owned(),
        )
    }

    pub fn predict_record_iic(&self, record: &Record, start: usize, steps: usize) -> Result<IicPrediction> {
        if start + steps >= record.len() {
            return Err(Error::Bounds(format!(
                "prediction from sample {start} over {steps} steps exceeds record of {} samples",
                record.len()
            )));
        }
        self.predict_iic(&record.state.column(start).into_owned(), &record.input.columns(start, steps).into_owned())
    }
}

/// Fits on the `n_tr` samples ending just before `window_end`, preceded by
/// `max(s, z)` samples of delay history.
pub fn fit_hankel_dmdc(record: &Record, config: &HankelConfig, window_end: usize) -> Result<HankelDmdcModel> {
    let span = config.span();
    if window_end > record.len() || window_end < span {
        return Err(Error::Bounds(format!(
            "training window of {} samples plus {} delay samples ending at {window_end} does not fit a record of {} samples",
            config.n_tr,
            config.max_delay(),
            record.len()
        )));
    }
    let start = window_end - span;
    let states = record.state.columns(start, span).into_owned();
    let inputs = record.input.columns(start, span).into_owned();
    let pair = build_hankel_blocks(&states, &inputs, config.s, config.z)?;
    let inner = dmdc::fit_dmdc(&pair, record.dt)?;
    HankelDmdcModel::new(inner, record.n_state(), record.n_input(), *config)
}

/// [`fit_hankel_dmdc`] with durations converted through [`durations_to_counts`].
pub fn fit_with_hyperparams(record: &Record, h: &HyperParams, samples_per_that: f64, window_end: usize) -> Result<HankelDmdcModel> {
    fit_hankel_dmdc(record, &durations_to_counts(h, samples_per_that)?, window_end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Schema;
    use crate::synth::{prbs, LinearOracle};

    fn oracle_record(m: usize, seed: u64) -> (LinearOracle, Record) {
        let sys = LinearOracle::random_stable(2, 1, 0.9, 0.1, seed).unwrap();
        let u = prbs(1, m, 3, 1.0, seed + 100);
        let rec = sys.record(&Vector::from_vec(vec![0.5, -0.5]), &u, 3.2, Schema::generic(2, 1)).unwrap();
        (sys, rec)
    }

    #[test]
    fn durations_round_to_sample_counts() {
        let c = durations_to_counts(&HyperParams::new(1.0, 2.0, 1.0), 32.0).unwrap();
        assert_eq!((c.n_tr, c.s, c.z), (32, 64, 32));
        let c = durations_to_counts(&HyperParams::new(1.0, 0.0, 0.5), 32.0).unwrap();
        assert_eq!((c.s, c.z), (0, 16));
        let c = durations_to_counts(&HyperParams::new(1.0, 1.5 / 32.0, 0.0), 32.0).unwrap();
        assert_eq!(c.s, 2);
        assert!(durations_to_counts(&HyperParams::new(0.01, 0.0, 0.0), 32.0).is_err());
        assert!(durations_to_counts(&HyperParams::new(1.0, -1.0, 0.0), 32.0).is_err());
    }

    #[test]
    fn table_levels_map_to_sample_counts() {
        let tr: Vec<usize> = [1.0, 2.0, 3.0, 5.0, 7.0, 10.0]
            .iter()
            .map(|l| durations_to_counts(&HyperParams::new(*l, 0.0, 0.0), 32.0).unwrap().n_tr)
            .collect();
        assert_eq!(tr, vec![32, 64, 96, 160, 224, 320]);
        let dx: Vec<usize> = [0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0]
            .iter()
            .map(|l| durations_to_counts(&HyperParams::new(1.0, *l, *l), 32.0).unwrap().s)
            .collect();
        assert_eq!(dx, vec![0, 16, 32, 64, 96, 128, 160]);
    }

    #[test]
    fn no_delays_reduce_to_plain_snapshots() {
        let (_, rec) = oracle_record(12, 1);
        let h = build_hankel_blocks(&rec.state, &rec.input, 0, 0).unwrap();
        let p = dmdc::assemble_snapshots(&rec.state, &rec.input).unwrap();
        assert_eq!(h, p);
    }

    #[test]
    fn block_entries_follow_delay_indexing() {
        let x = Matrix::from_row_slice(1, 5, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let u = Matrix::from_row_slice(1, 5, &[10.0, 20.0, 30.0, 40.0, 50.0]);
        let p = build_hankel_blocks(&x, &u, 1, 2).unwrap();
        // first usable column is j = 2 (0-based), giving columns j = 2, 3
        assert_eq!(p.y.shape(), (2 + 3, 2));
        assert_eq!(p.y.row(0).iter().copied().collect::<Vec<_>>(), vec![3.0, 4.0]);
        assert_eq!(p.y.row(1).iter().copied().collect::<Vec<_>>(), vec![2.0, 3.0]);
        assert_eq!(p.y.row(2).iter().copied().collect::<Vec<_>>(), vec![30.0, 40.0]);
        assert_eq!(p.y.row(3).iter().copied().collect::<Vec<_>>(), vec![20.0, 30.0]);
        assert_eq!(p.y.row(4).iter().copied().collect::<Vec<_>>(), vec![10.0, 20.0]);
        assert_eq!(p.xp.row(0).iter().copied().collect::<Vec<_>>(), vec![4.0, 5.0]);
        assert_eq!(p.xp.row(1).iter().copied().collect::<Vec<_>>(), vec![3.0, 4.0]);
    }

    #[test]
    fn delay_blocks_are_shifted_copies() {
        let (_, rec) = oracle_record(40, 2);
        let (s, z) = (4, 3);
        let p = build_hankel_blocks(&rec.state, &rec.input, s, z).unwrap();
        let n = 2;
        assert_eq!(p.y.nrows(), n * (s + 1) + (z + 1));
        for k in 1..=s {
            let prev = p.y.view(((k - 1) * n, 0), (n, p.columns() - 1)).into_owned();
            let cur = p.y.view((k * n, 1), (n, p.columns() - 1)).into_owned();
            assert_eq!(prev, cur);
        }
        // X̂' block k equals Ŷ block k−1
        for k in 1..=s {
            assert_eq!(p.xp.rows(k * n, n).into_owned(), p.y.rows((k - 1) * n, n).into_owned());
        }
    }

    #[test]
    fn insufficient_history_is_reported() {
        let x = Matrix::zeros(1, 4);
        match build_hankel_blocks(&x, &x, 3, 0) {
            Err(Error::InsufficientData(m)) => assert!(m.contains("short by 1"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_delay_fit_equals_plain_dmdc() {
        let (_, rec) = oracle_record(60, 3);
        let cfg = HankelConfig::new(0, 0, 30, 8.0).unwrap();
        let model = fit_hankel_dmdc(&rec, &cfg, 50).unwrap();
        let plain = dmdc::fit_dmdc(
            &dmdc::assemble_snapshots(&rec.state.columns(20, 30).into_owned(), &rec.input.columns(20, 30).into_owned()).unwrap(),
            rec.dt,
        )
        .unwrap();
        assert_eq!(model.inner, plain);
        let x0 = rec.state.column(50).into_owned();
        let u = rec.input.columns(50, 9).into_owned();
        let a = dmdc::predict(&plain, &x0, &u).unwrap();
        let b = model.predict(&rec.state.columns(50, 1).into_owned(), &rec.input.columns(50, 1).into_owned(), &rec.input.columns(51, 9).into_owned()).unwrap();
        assert_eq!(a, b);
        let c = model.predict_iic(&x0, &u).unwrap();
        assert_eq!(a, c.trajectory);
    }

    #[test]
    fn shape_law_and_window_bounds() {
        let (_, rec) = oracle_record(80, 4);
        let cfg = HankelConfig::new(5, 2, 20, 8.0).unwrap();
        let m = fit_hankel_dmdc(&rec, &cfg, 80).unwrap();
        assert_eq!(m.a().shape(), (12, 12));
        assert_eq!(m.b().ncols(), 3);
        assert!(matches!(fit_hankel_dmdc(&rec, &cfg, 24), Err(Error::Bounds(_))));
        assert!(matches!(fit_hankel_dmdc(&rec, &cfg, 81), Err(Error::Bounds(_))));
        assert!(fit_hankel_dmdc(&rec, &cfg, 25).is_ok());
    }

    #[test]
    fn augmented_model_reproduces_linear_oracle() {
        let (sys, rec) = oracle_record(300, 5);
        let cfg = HankelConfig::new(3, 2, 60, 8.0).unwrap();
        let model = fit_hankel_dmdc(&rec, &cfg, 100).unwrap();
        let start = 150;
        let pred = model.predict_record(&rec, start, 100).unwrap();
        let truth = sys.simulate(&rec.state.column(start).into_owned(), &rec.input.columns(start, 100).into_owned()).unwrap();
        assert_eq!(pred.column(0), truth.column(0));
        let err = (&pred - &truth).abs().max();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn iic_zero_state_and_input_stays_zero() {
        let (_, rec) = oracle_record(100, 6);
        let model = fit_hankel_dmdc(&rec, &HankelConfig::new(4, 4, 40, 4.0).unwrap(), 100).unwrap();
        let out = model.predict_iic(&Vector::zeros(2), &Matrix::zeros(1, 30)).unwrap();
        assert!(out.trajectory.iter().all(|v| *v == 0.0));
        assert_eq!(out.transient, 20);
        assert!(out.in_transient(19) && !out.in_transient(20));
    }

    #[test]
    fn history_shape_mismatch_is_rejected() {
        let (_, rec) = oracle_record(100, 7);
        let model = fit_hankel_dmdc(&rec, &HankelConfig::new(2, 1, 40, 4.0).unwrap(), 100).unwrap();
        let bad = model.predict(&Matrix::zeros(2, 2), &Matrix::zeros(1, 2), &Matrix::zeros(1, 5));
        assert!(matches!(bad, Err(Error::InvalidInput(_))));
        assert!(model.predict_record(&rec, 1, 5).is_err());
    }
}
