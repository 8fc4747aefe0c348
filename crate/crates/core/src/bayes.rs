//! Monte Carlo ensembles over uniformly distributed hyperparameters.
//!
//! Each draw of `(l_tr, l_dx, l_du)` gives one augmented model and one
//! prediction over a common window. The ensemble reports the pointwise mean,
//! the population standard deviation and a Chebyshev band.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Record;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::hankel::{fit_with_hyperparams, HyperParams};
use crate::numerics::Matrix;

pub const DEFAULT_DRAWS: usize = 100;
/// Coverage factor giving at least 93.75% by Chebyshev's inequality.
pub const DEFAULT_COVERAGE_FACTOR: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Interval { lower, upper }
    }

    pub fn point(v: f64) -> Self {
        Interval { lower: v, upper: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.lower == self.upper {
            self.lower
        } else {
            self.lower + (self.upper - self.lower) * rng.random::<f64>()
        }
    }
}

/// Independent uniform priors on the three durations, in reference periods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperPrior {
    pub l_tr: Interval,
    pub l_dx: Interval,
    pub l_du: Interval,
}

impl Default for HyperPrior {
    fn default() -> Self {
        HyperPrior {
            l_tr: Interval::new(1.0, 3.0),
            l_dx: Interval::new(1.0, 5.0),
            l_du: Interval::new(1.0, 2.0),
        }
    }
}

impl HyperPrior {
    pub fn new(l_tr: Interval, l_dx: Interval, l_du: Interval) -> Result<Self> {
        let p = HyperPrior { l_tr, l_dx, l_du };
        p.validate()?;
        Ok(p)
    }

    pub fn point(h: HyperParams) -> Self {
        HyperPrior { l_tr: Interval::point(h.l_tr), l_dx: Interval::point(h.l_dx), l_du: Interval::point(h.l_du) }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, iv) in [("l_tr", self.l_tr), ("l_dx", self.l_dx), ("l_du", self.l_du)] {
            if !(iv.lower >= 0.0 && iv.upper >= iv.lower && iv.upper.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} bounds [{}, {}] must satisfy 0 <= lower <= upper",
                    iv.lower, iv.upper
                )));
            }
        }
        if !(self.l_tr.upper > 0.0) {
            return Err(Error::InvalidConfig("l_tr upper bound must be positive".into()));
        }
        Ok(())
    }

    pub fn is_point_mass(&self) -> bool {
        [self.l_tr, self.l_dx, self.l_du].iter().all(|iv| iv.lower == iv.upper)
    }

    /// Largest delay the prior can produce, in reference periods.
    pub fn max_delay(&self) -> f64 {
        self.l_dx.upper.max(self.l_du.upper)
    }
}

/// `count` independent draws, reproducible for a given seed.
pub fn sample_hyperparams(prior: &HyperPrior, count: usize, seed: u64) -> Result<Vec<HyperParams>> {
    prior.validate()?;
    if count == 0 {
        return Err(Error::InvalidConfig("need at least one draw".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let l_tr = prior.l_tr.sample(&mut rng);
            let l_dx = prior.l_dx.sample(&mut rng);
            let l_du = prior.l_du.sample(&mut rng);
            HyperParams { l_tr, l_dx, l_du }
        })
        .collect())
}

/// Where the ensemble is trained and what it predicts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSetup {
    pub samples_per_that: f64,
    /// Exclusive end of every training window in the training record.
    pub train_end: usize,
    /// Sample of the target record the predictions start from.
    pub start: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePrediction {
    pub mu: Matrix,
    pub sigma: Matrix,
    pub n_realizations: usize,
    /// Draws whose prediction was not finite.
    pub excluded: usize,
    pub seed: u64,
    pub draws: Vec<HyperParams>,
    /// Finite trajectories, in draw order.
    pub realizations: Vec<Matrix>,
}

/// Sum of values in ascending order, so the result does not depend on input order.
fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// Pointwise mean and population standard deviation of equally shaped matrices.
///
/// Per entry the values are sorted before summation, which makes both results
/// exactly invariant to the order of `trajectories`.
pub fn pointwise_moments(trajectories: &[Matrix]) -> Result<(Matrix, Matrix)> {
    let first = trajectories.first().ok_or(Error::EnsembleFailure { count: 0 })?;
    let (rows, cols) = first.shape();
    if trajectories.iter().any(|t| t.shape() != (rows, cols)) {
        return Err(Error::InvalidInput("realizations differ in shape".into()));
    }
    let n = trajectories.len() as f64;
    let mut mu = Matrix::zeros(rows, cols);
    let mut sigma = Matrix::zeros(rows, cols);
    let mut buf = vec![0.0; trajectories.len()];
    for c in 0..cols {
        for r in 0..rows {
            for (b, t) in buf.iter_mut().zip(trajectories) {
                *b = t[(r, c)];
            }
            let m = ordered_sum(&mut buf) / n;
            if buf[0] == buf[buf.len() - 1] {
                // identical realizations keep their exact value
                mu[(r, c)] = buf[0];
                continue;
            }
            for b in buf.iter_mut() {
                *b = (*b - m) * (*b - m);
            }
            mu[(r, c)] = m;
            sigma[(r, c)] = (ordered_sum(&mut buf) / n).sqrt();
        }
    }
    Ok((mu, sigma))
}

fn realization(train: &Record, target: &Record, h: &HyperParams, setup: &EnsembleSetup) -> Result<Option<Matrix>> {
    let model = match fit_with_hyperparams(train, h, setup.samples_per_that, setup.train_end) {
        Ok(m) => m,
        Err(Error::NumericalFailure(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let traj = model.predict_record(target, setup.start, setup.steps)?;
    Ok(traj.iter().all(|v| v.is_finite()).then_some(traj))
}

/// Ensemble over explicit draws, evaluated with `exec` and reduced in draw order.
pub fn ensemble_for_draws(
    train: &Record,
    target: &Record,
    draws: &[HyperParams],
    setup: &EnsembleSetup,
    seed: u64,
    exec: Execution,
) -> Result<EnsemblePrediction> {
    if draws.is_empty() {
        return Err(Error::InvalidConfig("no hyperparameter draws".into()));
    }
    if train.n_state() != target.n_state() || train.n_input() != target.n_input() {
        return Err(Error::InvalidInput("training and target records have different channels".into()));
    }
    let outcomes = exec.map(draws.len(), |i| realization(train, target, &draws[i], setup));
    let mut realizations = Vec::with_capacity(draws.len());
    for o in outcomes {
        if let Some(t) = o? {
            realizations.push(t);
        }
    }
    if realizations.is_empty() {
        return Err(Error::EnsembleFailure { count: draws.len() });
    }
    let (mu, sigma) = pointwise_moments(&realizations)?;
    Ok(EnsemblePrediction {
        mu,
        sigma,
        n_realizations: realizations.len(),
        excluded: draws.len() - realizations.len(),
        seed,
        draws: draws.to_vec(),
        realizations,
    })
}

/// Samples `n_mc` draws from `prior` and runs [`ensemble_for_draws`].
pub fn ensemble_predict(
    train: &Record,
    target: &Record,
    prior: &HyperPrior,
    n_mc: usize,
    setup: &EnsembleSetup,
    seed: u64,
    exec: Execution,
) -> Result<EnsemblePrediction> {
    let draws = sample_hyperparams(prior, n_mc, seed)?;
    ensemble_for_draws(train, target, &draws, setup, seed, exec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevBand {
    pub lower: Matrix,
    pub upper: Matrix,
    pub coverage_factor: f64,
}

impl ChebyshevBand {
    /// Distribution-free lower bound on coverage, `1 − 1/k²`.
    pub fn nominal_coverage(&self) -> f64 {
        1.0 - 1.0 / (self.coverage_factor * self.coverage_factor)
    }

    /// Per sample and channel, the fraction of `realizations` inside the band.
    pub fn empirical_coverage(&self, realizations: &[Matrix]) -> Matrix {
        let mut inside = Matrix::zeros(self.lower.nrows(), self.lower.ncols());
        for t in realizations {
            for ((c, v), (lo, hi)) in inside.iter_mut().zip(t.iter()).zip(self.lower.iter().zip(self.upper.iter())) {
                if lo <= v && v <= hi {
                    *c += 1.0;
                }
            }
        }
        inside / realizations.len().max(1) as f64
    }
}

pub fn chebyshev_band(e: &EnsemblePrediction, k: f64) -> Result<ChebyshevBand> {
    if !(k > 0.0) {
        return Err(Error::InvalidConfig(format!("coverage factor must be positive, got {k}")));
    }
    Ok(ChebyshevBand {
        lower: &e.mu - &e.sigma * k,
        upper: &e.mu + &e.sigma * k,
        coverage_factor: k,
    })
}

/// Columns `t`, then `<name>_mu`, `<name>_sigma`, `<name>_lower`, `<name>_upper` per channel.
///
/// `time(c)` gives the time stamp of prediction column `c`.
pub fn write_ensemble_csv(
    out: &mut impl Write,
    e: &EnsemblePrediction,
    band: &ChebyshevBand,
    names: &[String],
    time: impl Fn(usize) -> f64,
) -> std::io::Result<()> {
    let mut header = vec!["t".to_string()];
    for n in names {
        for suffix in ["mu", "sigma", "lower", "upper"] {
            header.push(format!("{n}_{suffix}"));
        }
    }
    writeln!(out, "{}", header.join(","))?;
    for c in 0..e.mu.ncols() {
        let mut row = vec![time(c).to_string()];
        for r in 0..e.mu.nrows() {
            for m in [&e.mu, &e.sigma, &band.lower, &band.upper] {
                row.push(m[(r, c)].to_string());
            }
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Schema;
    use crate::numerics::Vector;
    use crate::synth::{prbs, DuffingOracle, LinearOracle};

    fn linear_record(m: usize, seed: u64) -> (LinearOracle, Record) {
        let sys = LinearOracle::random_stable(2, 1, 0.9, 0.25, seed).unwrap();
        let u = prbs(1, m, 2, 1.0, seed + 1);
        let rec = sys.record(&Vector::from_vec(vec![0.2, 0.1]), &u, 2.0, Schema::generic(2, 1)).unwrap();
        (sys, rec)
    }

    fn duffing_record(m: usize) -> Record {
        let d = DuffingOracle { damping: 0.3, stiffness: 1.0, cubic: 0.8, gain: 1.0, dt: 0.2 };
        let f: Vec<f64> = (0..m).map(|k| (0.7 * k as f64 * 0.2).sin() + 0.5 * (1.3 * k as f64 * 0.2).cos()).collect();
        d.record([0.0, 0.0], &f, 8.0 * 0.2).unwrap()
    }

    #[test]
    fn point_mass_prior_repeats_its_value() {
        let h = HyperParams::new(2.0, 1.5, 0.5);
        let draws = sample_hyperparams(&HyperPrior::point(h), 20, 3).unwrap();
        assert!(draws.iter().all(|d| *d == h));
    }

    #[test]
    fn uniform_draws_obey_bounds_and_mean() {
        let prior = HyperPrior::new(Interval::new(1.0, 3.0), Interval::new(1.0, 5.0), Interval::new(1.0, 2.0)).unwrap();
        let draws = sample_hyperparams(&prior, 10_000, 7).unwrap();
        let mean = draws.iter().map(|d| d.l_tr).sum::<f64>() / 1e4;
        assert!((mean - 2.0).abs() < 0.02, "{mean}");
        assert!(draws.iter().all(|d| prior.l_tr.contains(d.l_tr) && prior.l_dx.contains(d.l_dx) && prior.l_du.contains(d.l_du)));
        assert_eq!(draws, sample_hyperparams(&prior, 10_000, 7).unwrap());
        assert_ne!(draws[0], sample_hyperparams(&prior, 1, 8).unwrap()[0]);
    }

    #[test]
    fn default_prior_is_the_promising_subdomain() {
        let p = HyperPrior::default();
        assert_eq!((p.l_tr.lower, p.l_tr.upper, p.l_dx.lower, p.l_dx.upper, p.l_du.lower, p.l_du.upper), (1.0, 3.0, 1.0, 5.0, 1.0, 2.0));
        assert!(HyperPrior::new(Interval::new(2.0, 1.0), Interval::point(0.0), Interval::point(0.0)).is_err());
        assert!(sample_hyperparams(&p, 0, 0).is_err());
    }

    #[test]
    fn point_mass_ensemble_equals_deterministic_prediction() {
        let rec = duffing_record(600);
        let h = HyperParams::new(12.0, 1.0, 0.5);
        let setup = EnsembleSetup { samples_per_that: 8.0, train_end: 300, start: 350, steps: 60 };
        let e = ensemble_predict(&rec, &rec, &HyperPrior::point(h), 5, &setup, 1, Execution::Parallel).unwrap();
        let model = fit_with_hyperparams(&rec, &h, 8.0, 300).unwrap();
        let det = model.predict_record(&rec, 350, 60).unwrap();
        assert_eq!(e.mu, det);
        assert!(e.sigma.iter().all(|s| *s == 0.0));
        assert_eq!((e.n_realizations, e.excluded), (5, 0));
    }

    #[test]
    fn moments_are_order_independent() {
        let rec = duffing_record(600);
        let setup = EnsembleSetup { samples_per_that: 8.0, train_end: 300, start: 350, steps: 40 };
        let points = [HyperParams::new(10.0, 1.0, 0.5), HyperParams::new(12.0, 2.0, 1.0), HyperParams::new(15.0, 0.5, 1.5)];
        let enumerated = ensemble_for_draws(&rec, &rec, &points, &setup, 0, Execution::Sequential).unwrap();
        let shuffled = [points[2], points[0], points[1]];
        let mc = ensemble_for_draws(&rec, &rec, &shuffled, &setup, 0, Execution::Parallel).unwrap();
        assert_eq!(enumerated.mu, mc.mu);
        assert_eq!(enumerated.sigma, mc.sigma);

        // direct oracle: fit and predict each point by hand
        let trajs: Vec<Matrix> = points
            .iter()
            .map(|h| fit_with_hyperparams(&rec, h, 8.0, 300).unwrap().predict_record(&rec, 350, 40).unwrap())
            .collect();
        let mean = (&trajs[0] + &trajs[1] + &trajs[2]) / 3.0;
        let var = trajs.iter().fold(Matrix::zeros(2, 41), |acc, t| acc + (t - &mean).map(|v| v * v)) / 3.0;
        let scale = mean.abs().max().max(1.0);
        assert!((&enumerated.mu - &mean).abs().max() < 1e-12 * scale);
        assert!((&enumerated.sigma - var.map(f64::sqrt)).abs().max() < 1e-12 * scale);
    }

    #[test]
    fn ensemble_is_reproducible_across_execution_modes() {
        let rec = duffing_record(600);
        let setup = EnsembleSetup { samples_per_that: 8.0, train_end: 300, start: 350, steps: 50 };
        let prior = HyperPrior::new(Interval::new(10.0, 15.0), Interval::new(0.5, 2.0), Interval::new(0.5, 1.0)).unwrap();
        let a = ensemble_predict(&rec, &rec, &prior, 12, &setup, 5, Execution::Sequential).unwrap();
        let b = ensemble_predict(&rec, &rec, &prior, 12, &setup, 5, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn chebyshev_band_covers_realizations() {
        let rec = duffing_record(600);
        let setup = EnsembleSetup { samples_per_that: 8.0, train_end: 300, start: 350, steps: 50 };
        let prior = HyperPrior::new(Interval::new(10.0, 15.0), Interval::new(0.5, 2.0), Interval::new(0.5, 1.0)).unwrap();
        let e = ensemble_predict(&rec, &rec, &prior, 30, &setup, 2, Execution::Parallel).unwrap();
        let band = chebyshev_band(&e, 4.0).unwrap();
        assert_eq!(band.nominal_coverage(), 0.9375);
        let cov = band.empirical_coverage(&e.realizations);
        assert!(cov.iter().all(|c| *c >= 0.9375));
        let wide = chebyshev_band(&e, 5.0).unwrap();
        assert!(wide.lower.iter().zip(band.lower.iter()).all(|(w, b)| w <= b));
        assert!(wide.upper.iter().zip(band.upper.iter()).all(|(w, b)| w >= b));
        assert!(chebyshev_band(&e, 0.0).is_err());
    }

    #[test]
    fn linear_ensemble_tracks_oracle() {
        let (sys, rec) = linear_record(400, 4);
        let setup = EnsembleSetup { samples_per_that: 8.0, train_end: 200, start: 250, steps: 100 };
        let prior = HyperPrior::new(Interval::new(2.0, 4.0), Interval::new(0.0, 1.0), Interval::new(0.0, 1.0)).unwrap();
        let e = ensemble_predict(&rec, &rec, &prior, 10, &setup, 9, Execution::Parallel).unwrap();
        let truth = sys.simulate(&rec.state.column(250).into_owned(), &rec.input.columns(250, 100).into_owned()).unwrap();
        assert!((&e.mu - &truth).abs().max() < 1e-8);
        assert!(e.sigma.max() < 1e-8);
    }

    #[test]
    fn all_diverging_realizations_fail_the_ensemble() {
        let growing = LinearOracle::new(Matrix::from_element(1, 1, 2.0), Matrix::from_element(1, 1, 1.0), 1.0).unwrap();
        let train = growing.record(&Vector::from_element(1, 1.0), &prbs(1, 40, 1, 1.0, 1), 4.0, Schema::generic(1, 1)).unwrap();
        let decaying = LinearOracle::new(Matrix::from_element(1, 1, 0.5), Matrix::from_element(1, 1, 1.0), 1.0).unwrap();
        let rec = decaying.record(&Vector::from_element(1, 1.0), &prbs(1, 1200, 1, 1.0, 2), 4.0, Schema::generic(1, 1)).unwrap();
        let setup = EnsembleSetup { samples_per_that: 4.0, train_end: 20, start: 20, steps: 1100 };
        let h = HyperParams::new(2.0, 0.0, 0.0);
        match ensemble_for_draws(&train, &rec, &[h, h], &setup, 0, Execution::Sequential) {
            Err(Error::EnsembleFailure { count: 2 }) => {}
            other => panic!("{other:?}"),
        }
        let short = EnsembleSetup { steps: 10, ..setup };
        let ok = ensemble_for_draws(&train, &rec, &[h, h], &short, 0, Execution::Sequential).unwrap();
        assert_eq!((ok.n_realizations, ok.excluded), (2, 0));
    }

    #[test]
    fn csv_layout() {
        let e = EnsemblePrediction {
            mu: Matrix::from_row_slice(1, 2, &[1.0, 2.0]),
            sigma: Matrix::from_row_slice(1, 2, &[0.5, 0.0]),
            n_realizations: 2,
            excluded: 0,
            seed: 0,
            draws: vec![],
            realizations: vec![],
        };
        let band = chebyshev_band(&e, 4.0).unwrap();
        let mut buf = Vec::new();
        write_ensemble_csv(&mut buf, &e, &band, &["x".into()], |c| c as f64 * 0.5).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,x_mu,x_sigma,x_lower,x_upper\n0,1,0.5,-1,3\n0.5,2,0,2,2\n");
    }
}
