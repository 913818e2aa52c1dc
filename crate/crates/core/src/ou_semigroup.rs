//! Ornstein–Uhlenbeck paths `dX = AX dt + dL`, Monte Carlo estimates of
//! `P_t f(x)` and the characteristic-function factorization check.

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::levy_core::{compute_c0, mu_hat_exponent, OUSpec};
use crate::linalg::{mat_vec, matrix_exp, norm};
use crate::sampling::{generate, IncrementSampler, Samples, SeedSpec, CHUNK};

/// Bounded nonnegative test functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    BallIndicator { center: Vec<f64>, radius: f64 },
    /// `exp(-|x - center|² / (2 width²))`.
    GaussianBump { center: Vec<f64>, width: f64 },
    Constant { value: f64 },
    /// `min(e^{|x|}, level)`, at least 1 everywhere.
    ExpCap { level: f64 },
    Sum { terms: Vec<TestFunction> },
}

impl TestFunction {
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        TestFunction::BallIndicator { center, radius }
    }

    pub fn bump(center: Vec<f64>, width: f64) -> Self {
        TestFunction::GaussianBump { center, width }
    }

    pub fn constant(value: f64) -> Self {
        TestFunction::Constant { value }
    }

    /// `1 + f`.
    pub fn one_plus(f: TestFunction) -> Self {
        TestFunction::Sum { terms: vec![TestFunction::constant(1.0), f] }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            TestFunction::BallIndicator { center, radius } => {
                if center.len() != d || !(*radius > 0.0) {
                    return invalid(format!("ball needs a {d}-dimensional center and positive radius"));
                }
            }
            TestFunction::GaussianBump { center, width } => {
                if center.len() != d || !(*width > 0.0) {
                    return invalid(format!("bump needs a {d}-dimensional center and positive width"));
                }
            }
            TestFunction::Constant { value } => {
                if !(*value >= 0.0 && value.is_finite()) {
                    return invalid(format!("constant must be finite and nonnegative, got {value}"));
                }
            }
            TestFunction::ExpCap { level } => {
                if !(*level >= 1.0 && level.is_finite()) {
                    return invalid(format!("cap level must be finite and at least 1, got {level}"));
                }
            }
            TestFunction::Sum { terms } => {
                for t in terms {
                    t.validate(d)?;
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::BallIndicator { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                if r2 < radius * radius {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::GaussianBump { center, width } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                (-0.5 * r2 / (width * width)).exp()
            }
            TestFunction::Constant { value } => *value,
            TestFunction::ExpCap { level } => norm(x).exp().min(*level),
            TestFunction::Sum { terms } => terms.iter().map(|t| t.eval(x)).sum(),
        }
    }

    /// `sup f`.
    pub fn upper_bound(&self) -> f64 {
        match self {
            TestFunction::BallIndicator { .. } | TestFunction::GaussianBump { .. } => 1.0,
            TestFunction::Constant { value } => *value,
            TestFunction::ExpCap { level } => *level,
            TestFunction::Sum { terms } => terms.iter().map(|t| t.upper_bound()).sum(),
        }
    }

    /// `inf f`.
    pub fn lower_bound(&self) -> f64 {
        match self {
            TestFunction::BallIndicator { .. } | TestFunction::GaussianBump { .. } => 0.0,
            TestFunction::Constant { value } => *value,
            TestFunction::ExpCap { .. } => 1.0,
            TestFunction::Sum { terms } => terms.iter().map(|t| t.lower_bound()).sum(),
        }
    }

    /// `z ↦ f(z + δ)`.
    pub fn shifted(&self, delta: &[f64]) -> Result<Self> {
        let move_center = |c: &[f64]| c.iter().zip(delta).map(|(a, b)| a - b).collect::<Vec<_>>();
        Ok(match self {
            TestFunction::BallIndicator { center, radius } => {
                TestFunction::BallIndicator { center: move_center(center), radius: *radius }
            }
            TestFunction::GaussianBump { center, width } => {
                TestFunction::GaussianBump { center: move_center(center), width: *width }
            }
            TestFunction::Constant { .. } => self.clone(),
            TestFunction::ExpCap { .. } => return invalid("capped exponential is not translation covariant"),
            TestFunction::Sum { terms } => {
                TestFunction::Sum { terms: terms.iter().map(|t| t.shifted(delta)).collect::<Result<_>>()? }
            }
        })
    }
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::BallIndicator { center, radius } => write!(f, "ball_indicator({};{radius})", fmt_vec(center)),
            TestFunction::GaussianBump { center, width } => write!(f, "gaussian_bump({};{width})", fmt_vec(center)),
            TestFunction::Constant { value } => write!(f, "constant({value})"),
            TestFunction::ExpCap { level } => write!(f, "exp_cap({level})"),
            TestFunction::Sum { terms } => {
                let parts: Vec<String> = terms.iter().map(|t| t.to_string()).collect();
                write!(f, "{}", parts.join("+"))
            }
        }
    }
}

/// Horizon and number of convolution steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OUPathConfig {
    pub t: f64,
    pub n_steps: usize,
}

impl OUPathConfig {
    /// `ceil(50 ‖A‖ t) ∨ 1` steps.
    pub fn for_spec(spec: &OUSpec, t: f64) -> Self {
        let n = (50.0 * spec.op_norm() * t).ceil();
        OUPathConfig { t, n_steps: if n.is_finite() && n >= 1.0 { n as usize } else { 1 } }
    }
}

/// Endpoints of the stochastic convolution `Σ_k e^{(t-t_k)A} ΔL_k`,
/// shared by every starting point.
#[derive(Clone, Debug)]
pub struct OUNoise {
    pub cfg: OUPathConfig,
    pub seed: SeedSpec,
    pub exp_ta: DMatrix<f64>,
    pub noise: Samples,
}

/// Simulates the convolution term with the driver's increments over a
/// uniform grid, left-point weights.
pub fn sample_ou_noise(spec: &OUSpec, cfg: OUPathConfig, n: usize, seed: SeedSpec) -> Result<OUNoise> {
    let step = IncrementSampler::for_driver(spec.driver(), cfg.t / cfg.n_steps.max(1) as f64)?;
    sample_noise_with(spec, &step, cfg, n, seed)
}

/// As [`sample_ou_noise`] with an explicit increment law.
pub fn sample_noise_with(
    spec: &OUSpec,
    step: &IncrementSampler,
    cfg: OUPathConfig,
    n: usize,
    seed: SeedSpec,
) -> Result<OUNoise> {
    if n == 0 || cfg.n_steps == 0 || !(cfg.t > 0.0) {
        return invalid("need n ≥ 1, n_steps ≥ 1 and t > 0");
    }
    let d = spec.d();
    let h = cfg.t / cfg.n_steps as f64;
    let e_h = matrix_exp(spec.drift(), h)?;
    let exp_ta = matrix_exp(spec.drift(), cfg.t)?;
    let zero_drift = spec.op_norm() == 0.0;
    let noise = generate(n, d, seed, |rng, row| {
        row.fill(0.0);
        if zero_drift {
            for _ in 0..cfg.n_steps {
                step.add(rng, row);
            }
            return;
        }
        // y ← e^{hA}(y + ΔL_k) gives Σ_k e^{(n-k)hA} ΔL_k
        for _ in 0..cfg.n_steps {
            step.add(rng, row);
            let next = mat_vec(&e_h, row);
            row.copy_from_slice(&next);
        }
    });
    Ok(OUNoise { cfg, seed, exp_ta, noise })
}

impl OUNoise {
    pub fn len(&self) -> usize {
        self.noise.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noise.is_empty()
    }

    /// `e^{tA} x`.
    pub fn mean_shift(&self, x: &[f64]) -> Vec<f64> {
        mat_vec(&self.exp_ta, x)
    }

    /// Endpoints from `x0`.
    pub fn endpoints(&self, x0: &[f64]) -> Samples {
        let m = self.mean_shift(x0);
        let mut out = self.noise.clone();
        for row in out.data.chunks_exact_mut(self.noise.d) {
            for (v, s) in row.iter_mut().zip(&m) {
                *v += s;
            }
        }
        out
    }

    /// Sums of `g(row)` and `g(row)²` over all rows, with a fixed chunk
    /// order so the result does not depend on the thread count.
    pub fn moments(&self, g: impl Fn(&[f64]) -> f64 + Sync) -> (f64, f64) {
        let d = self.noise.d;
        let parts: Vec<(f64, f64)> = self
            .noise
            .data
            .par_chunks(CHUNK * d)
            .map(|chunk| {
                let mut s = (0.0, 0.0);
                for row in chunk.chunks_exact(d) {
                    let v = g(row);
                    s.0 += v;
                    s.1 += v * v;
                }
                s
            })
            .collect();
        parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1))
    }

    /// Monte Carlo `P_t f(x)`.
    pub fn estimate(&self, f: &TestFunction, x: &[f64]) -> SemigroupEstimate {
        let m = self.mean_shift(x);
        let d = self.noise.d;
        let (s, s2) = self.moments(|row| {
            let mut buf = [0.0f64; 8];
            if d <= 8 {
                for i in 0..d {
                    buf[i] = m[i] + row[i];
                }
                f.eval(&buf[..d])
            } else {
                let z: Vec<f64> = m.iter().zip(row).map(|(a, b)| a + b).collect();
                f.eval(&z)
            }
        });
        let (mean, std_err) = mean_and_se(s, s2, self.len());
        SemigroupEstimate {
            t: self.cfg.t,
            x: x.to_vec(),
            f_tag: f.to_string(),
            mean,
            std_err,
            n: self.len(),
            seed: self.seed,
        }
    }
}

/// Sample mean and `sd/√n` from running sums.
pub fn mean_and_se(s: f64, s2: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = s / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
    // constant integrands leave pure rounding in var
    let var = if var <= 1e-14 * (s2 / nf).abs() { 0.0 } else { var };
    (mean, (var / nf).sqrt())
}

/// Endpoints `X_t` from `x0`.
pub fn sample_ou(spec: &OUSpec, x0: &[f64], cfg: OUPathConfig, n: usize, seed: SeedSpec) -> Result<Samples> {
    if x0.len() != spec.d() {
        return invalid("starting point dimension does not match the process dimension");
    }
    Ok(sample_ou_noise(spec, cfg, n, seed)?.endpoints(x0))
}

/// Monte Carlo estimate of `P_t f(x)` with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemigroupEstimate {
    pub t: f64,
    pub x: Vec<f64>,
    pub f_tag: String,
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
    pub seed: SeedSpec,
}

/// `P_t f(x)` from `n ≥ 10³` paths with the default step count.
pub fn estimate_ptf(
    spec: &OUSpec,
    f: &TestFunction,
    x: &[f64],
    t: f64,
    n: usize,
    seed: SeedSpec,
) -> Result<SemigroupEstimate> {
    if n < 1000 {
        return invalid(format!("need at least 10^3 paths, got {n}"));
    }
    if x.len() != spec.d() {
        return invalid("starting point dimension does not match the process dimension");
    }
    f.validate(spec.d())?;
    let noise = sample_ou_noise(spec, OUPathConfig::for_spec(spec, t), n, seed)?;
    Ok(noise.estimate(f, x))
}

/// One probe of the factorization `μ̂_t = exp(-t c₀ c |ξ|^α) π̂_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationProbe {
    pub xi: Vec<f64>,
    pub mu_hat: f64,
    pub stable_factor: f64,
    pub pi_hat: f64,
    /// `max(|π̂_t| - 1, 0)`.
    pub excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationReport {
    pub t: f64,
    pub op_norm: f64,
    pub c0: f64,
    pub probes: Vec<FactorizationProbe>,
    pub max_excess: f64,
    pub passed: bool,
}

/// Largest tolerated `|π̂_t| - 1`.
pub const FACTOR_TOL: f64 = 1e-8;

/// Splits `μ̂_t` into the stable factor with symbol `c₀ c |ξ|^α` and the
/// remainder `π̂_t`, and checks `|π̂_t| ≤ 1` at each probe.
pub fn factorization_check(spec: &OUSpec, t: f64, probes: &[Vec<f64>]) -> Result<FactorizationReport> {
    if !(t > 0.0 && t <= 1.0) {
        return invalid(format!("time must lie in (0, 1], got {t}"));
    }
    let floor = spec
        .driver()
        .stable_floor()
        .ok_or_else(|| Error::InvalidParameter("factorization needs a driver dominating a stable law".into()))?;
    let c0 = compute_c0(spec.op_norm(), spec.d())?;
    let out: Vec<FactorizationProbe> = probes
        .iter()
        .map(|xi| {
            let k = norm(xi);
            let sub = t * c0 * floor.c() * k.powf(floor.alpha());
            let e = if k == 0.0 { 0.0 } else { mu_hat_exponent(spec, xi, t)? };
            let pi_hat = (sub - e).exp();
            Ok(FactorizationProbe {
                xi: xi.clone(),
                mu_hat: (-e).exp(),
                stable_factor: (-sub).exp(),
                pi_hat,
                excess: (pi_hat - 1.0).max(0.0),
            })
        })
        .collect::<Result<_>>()?;
    let max_excess = out.iter().map(|p| p.excess).fold(0.0, f64::max);
    Ok(FactorizationReport { t, op_norm: spec.op_norm(), c0, probes: out, max_excess, passed: max_excess <= FACTOR_TOL })
}
