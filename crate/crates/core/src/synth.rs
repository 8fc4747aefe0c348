//! Synthetic ground truth: long-crested irregular waves from a JONSWAP
//! spectrum, and forced linear / Duffing systems to identify.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Record, Schema};
use crate::error::{Error, Result};
use crate::numerics::{self, Matrix, Vector};

const GRAVITY: f64 = 9.81;

/// Sea-state and discretization parameters for wave synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveSpec {
    pub n_components: usize,
    /// rad/s
    pub omega_min: f64,
    /// rad/s
    pub omega_max: f64,
    /// Significant wave height, m.
    pub hs: f64,
    /// Peak period, s.
    pub tp: f64,
    /// Peak-enhancement factor.
    pub gamma: f64,
    pub seed: u64,
}

impl Default for WaveSpec {
    /// Sea state 7: 100 components over 0.41..1.47 rad/s, Hs = 7 m, Tp = 9.2 s.
    fn default() -> Self {
        WaveSpec {
            n_components: 100,
            omega_min: 0.41,
            omega_max: 1.47,
            hs: 7.0,
            tp: 9.2,
            gamma: 3.3,
            seed: 0,
        }
    }
}

impl WaveSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_components == 0 {
            return Err(Error::InvalidConfig("n_components must be at least 1".into()));
        }
        if !(self.omega_min > 0.0 && self.omega_max > self.omega_min) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < omega_min < omega_max, got {} and {}",
                self.omega_min, self.omega_max
            )));
        }
        // hs = 0 is the null sea, kept as a valid degenerate case
        if !(self.hs >= 0.0 && self.tp > 0.0 && self.gamma >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need hs >= 0, tp > 0, gamma >= 1; got hs={}, tp={}, gamma={}",
                self.hs, self.tp, self.gamma
            )));
        }
        Ok(())
    }

    pub fn peak_frequency(&self) -> f64 {
        2.0 * PI / self.tp
    }

    /// Evenly spaced component frequencies and their common spacing.
    pub fn frequencies(&self) -> (Vec<f64>, f64) {
        let n = self.n_components;
        let d_omega = if n > 1 {
            (self.omega_max - self.omega_min) / (n - 1) as f64
        } else {
            self.omega_max - self.omega_min
        };
        ((0..n).map(|i| self.omega_min + i as f64 * d_omega).collect(), d_omega)
    }
}

/// JONSWAP density scaled so that its zeroth moment equals `hs² / 16`.
#[derive(Debug, Clone)]
pub struct Jonswap {
    omega_p: f64,
    gamma: f64,
    scale: f64,
}

impl Jonswap {
    pub fn new(spec: &WaveSpec) -> Self {
        let mut s = Jonswap { omega_p: spec.peak_frequency(), gamma: spec.gamma, scale: 1.0 };
        let m0 = s.unit_moment();
        s.scale = if m0 > 0.0 { spec.hs * spec.hs / 16.0 / m0 } else { 0.0 };
        s
    }

    fn shape(&self, omega: f64) -> f64 {
        if omega <= 0.0 {
            return 0.0;
        }
        let wp = self.omega_p;
        let sigma = if omega <= wp { 0.07 } else { 0.09 };
        let r = (-(omega - wp).powi(2) / (2.0 * sigma * sigma * wp * wp)).exp();
        GRAVITY * GRAVITY * omega.powi(-5) * (-1.25 * (wp / omega).powi(4)).exp() * self.gamma.powf(r)
    }

    /// ∫₀^∞ shape dω by Simpson's rule in log-frequency plus an ω⁻⁵ tail.
    fn unit_moment(&self) -> f64 {
        let (lo, hi) = ((0.1f64).ln(), (100.0f64).ln());
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let f = |x: f64| {
            let w = self.omega_p * x.exp();
            self.shape(w) * w
        };
        let mut acc = f(lo) + f(hi);
        for k in 1..n {
            acc += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        let upper = self.omega_p * hi.exp();
        acc * h / 3.0 + GRAVITY * GRAVITY * upper.powi(-4) / 4.0
    }

    /// Spectral density in m²·s.
    pub fn density(&self, omega: f64) -> f64 {
        self.scale * self.shape(omega)
    }
}

pub fn jonswap_density(omega: f64, spec: &WaveSpec) -> f64 {
    Jonswap::new(spec).density(omega)
}

/// Frequencies, amplitudes and random phases of the superposed wave components.
#[derive(Debug, Clone)]
pub struct WaveComponents {
    pub omega: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
}

impl WaveComponents {
    pub fn new(spec: &WaveSpec) -> Result<Self> {
        spec.validate()?;
        let spectrum = Jonswap::new(spec);
        let (omega, d_omega) = spec.frequencies();
        let amplitude = omega
            .iter()
            .map(|w| (2.0 * spectrum.density(*w) * d_omega).sqrt())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let phase = omega.iter().map(|_| rng.random::<f64>() * 2.0 * PI).collect();
        Ok(WaveComponents { omega, amplitude, phase })
    }

    pub fn elevation(&self, t: f64) -> f64 {
        self.omega
            .iter()
            .zip(&self.amplitude)
            .zip(&self.phase)
            .map(|((w, a), p)| a * (w * t + p).cos())
            .sum()
    }

    /// Σ ζᵢ² / 2, the variance of the stationary process.
    pub fn variance(&self) -> f64 {
        self.amplitude.iter().map(|a| a * a / 2.0).sum()
    }
}

/// Wave elevation η(t) = Σ ζᵢ cos(ωᵢ t + φᵢ) on the given time stamps.
pub fn synthesize_wave(spec: &WaveSpec, t_grid: &[f64]) -> Result<Vec<f64>> {
    let comps = WaveComponents::new(spec)?;
    Ok(t_grid.iter().map(|t| comps.elevation(*t)).collect())
}

/// Discrete-time linear system `x_{j+1} = A x_j + B u_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOracle {
    pub a: Matrix,
    pub b: Matrix,
    pub dt: f64,
}

impl LinearOracle {
    pub fn new(a: Matrix, b: Matrix, dt: f64) -> Result<Self> {
        if !a.is_square() || b.nrows() != a.nrows() {
            return Err(Error::InvalidInput(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        Ok(LinearOracle { a, b, dt })
    }

    /// Gaussian random `A` rescaled to the requested spectral radius, Gaussian `B`.
    pub fn random_stable(n: usize, l: usize, radius: f64, dt: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = move || gaussian(&mut rng);
        let a0 = Matrix::from_fn(n, n, |_, _| normal());
        let b = Matrix::from_fn(n, l, |_, _| normal());
        let rho = numerics::spectral_radius(&numerics::eigenvalues(&a0)?);
        let a = if rho > 0.0 { a0 * (radius / rho) } else { a0 };
        LinearOracle::new(a, b, dt)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn l(&self) -> usize {
        self.b.ncols()
    }

    /// Iterates the recurrence over `T` input columns, returning `n × (T+1)` states.
    pub fn simulate(&self, x0: &Vector, inputs: &Matrix) -> Result<Matrix> {
        if x0.len() != self.n() || inputs.nrows() != self.l() {
            return Err(Error::InvalidInput(format!(
                "x0 has {} entries and inputs {} rows; system is n={}, l={}",
                x0.len(),
                inputs.nrows(),
                self.n(),
                self.l()
            )));
        }
        let steps = inputs.ncols();
        let mut traj = Matrix::zeros(self.n(), steps + 1);
        traj.set_column(0, x0);
        for j in 0..steps {
            let next = &self.a * traj.column(j) + &self.b * inputs.column(j);
            traj.set_column(j + 1, &next);
        }
        Ok(traj)
    }

    /// Record of `m` samples driven by the `l × m` inputs; the last input sample
    /// is recorded but has no successor state to drive.
    pub fn record(&self, x0: &Vector, inputs: &Matrix, t_hat: f64, schema: Schema) -> Result<Record> {
        let m = inputs.ncols();
        if m == 0 {
            return Err(Error::InsufficientData("no input samples".into()));
        }
        let state = self.simulate(x0, &inputs.columns(0, m - 1).into_owned())?;
        Record::new(schema, 0.0, self.dt, t_hat, state, inputs.clone())
    }
}

/// `ẍ + δẋ + αx + βx³ = g·u(t)` integrated with fixed-step RK4.
#[derive(Debug, Clone, PartialEq)]
pub struct DuffingOracle {
    pub damping: f64,
    pub stiffness: f64,
    pub cubic: f64,
    pub gain: f64,
    pub dt: f64,
}

impl DuffingOracle {
    fn accel(&self, x: f64, v: f64, u: f64) -> f64 {
        self.gain * u - self.damping * v - self.stiffness * x - self.cubic * x * x * x
    }

    /// One RK4 step with the forcing interpolated linearly across the step.
    fn step(&self, x: f64, v: f64, u0: f64, u1: f64) -> (f64, f64) {
        let h = self.dt;
        let um = 0.5 * (u0 + u1);
        let (k1x, k1v) = (v, self.accel(x, v, u0));
        let (k2x, k2v) = (v + 0.5 * h * k1v, self.accel(x + 0.5 * h * k1x, v + 0.5 * h * k1v, um));
        let (k3x, k3v) = (v + 0.5 * h * k2v, self.accel(x + 0.5 * h * k2x, v + 0.5 * h * k2v, um));
        let (k4x, k4v) = (v + h * k3v, self.accel(x + h * k3x, v + h * k3v, u1));
        (
            x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
            v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
        )
    }

    /// State `(x, ẋ)` at every forcing sample; column 0 is `x0`.
    pub fn simulate(&self, x0: [f64; 2], forcing: &[f64]) -> Result<Matrix> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        let m = forcing.len();
        let mut traj = Matrix::zeros(2, m.max(1));
        let (mut x, mut v) = (x0[0], x0[1]);
        traj[(0, 0)] = x;
        traj[(1, 0)] = v;
        for k in 1..m {
            (x, v) = self.step(x, v, forcing[k - 1], forcing[k]);
            if !(x.is_finite() && v.is_finite()) || x.abs().max(v.abs()) > 1e150 {
                return Err(Error::Divergence { step: k });
            }
            traj[(0, k)] = x;
            traj[(1, k)] = v;
        }
        Ok(traj)
    }

    pub fn record(&self, x0: [f64; 2], forcing: &[f64], t_hat: f64) -> Result<Record> {
        let state = self.simulate(x0, forcing)?;
        let input = Matrix::from_row_slice(1, forcing.len(), forcing);
        Record::new(Schema::duffing(), 0.0, self.dt, t_hat, state, input)
    }
}

/// A ground-truth system to generate identification data from.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleSystem {
    Linear(LinearOracle),
    Duffing(DuffingOracle),
}

impl OracleSystem {
    pub fn dt(&self) -> f64 {
        match self {
            OracleSystem::Linear(s) => s.dt,
            OracleSystem::Duffing(s) => s.dt,
        }
    }
}

/// Standard normal draw by Box-Muller.
pub fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Pseudo-random binary sequence of ±`amplitude` holding each level for `hold` samples.
pub fn prbs(channels: usize, len: usize, hold: usize, amplitude: f64, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hold = hold.max(1);
    let mut m = Matrix::zeros(channels, len);
    for i in 0..channels {
        let mut level = amplitude;
        for j in 0..len {
            if j % hold == 0 {
                level = if rng.random::<bool>() { amplitude } else { -amplitude };
            }
            m[(i, j)] = level;
        }
    }
    m
}
