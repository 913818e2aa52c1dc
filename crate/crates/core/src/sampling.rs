//! Random variates for stable, truncated stable and residual Lévy parts,
//! generated from keyed ChaCha streams in fixed-size chunks so that output
//! does not depend on the number of worker threads.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::levy_core::{split_levy_measure, Driver, ResidualDensity, StableSpec, TruncatedStableSpec};
use crate::quadrature::{integrate, QuadOpts};
use crate::special::sphere_area;

/// Samples per independently seeded chunk.
pub const CHUNK: usize = 8192;

/// Master seed plus stream index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        SeedSpec { master_seed, stream_id }
    }

    /// A derived stream, e.g. one per grid node or per time step.
    pub fn substream(&self, index: u64) -> SeedSpec {
        SeedSpec {
            master_seed: self.master_seed,
            stream_id: splitmix(self.stream_id ^ splitmix(index.wrapping_add(0x5851_F42D_4C95_7F2D))),
        }
    }

    /// Generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut s = self.master_seed;
        for chunk in key.chunks_mut(8) {
            s = splitmix(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// `n` rows of dimension `d`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    pub d: usize,
    pub data: Vec<f64>,
}

impl Samples {
    pub fn zeros(n: usize, d: usize) -> Self {
        Samples { d, data: vec![0.0; n * d] }
    }
    pub fn len(&self) -> usize {
        self.data.len() / self.d
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.d)
    }
    pub fn norms(&self) -> Vec<f64> {
        self.rows().map(crate::linalg::norm).collect()
    }
    /// First coordinate of every row.
    pub fn first_coords(&self) -> Vec<f64> {
        self.rows().map(|r| r[0]).collect()
    }

    /// Little-endian f64 dump plus a JSON sidecar next to it.
    pub fn write_dump(&self, path: &Path, sidecar: &serde_json::Value) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for v in &self.data {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
        let side = path.with_extension("json");
        std::fs::write(side, serde_json::to_string_pretty(sidecar)?)?;
        Ok(())
    }

    pub fn read_dump(path: &Path, d: usize) -> std::io::Result<Samples> {
        let bytes = std::fs::read(path)?;
        let data = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        Ok(Samples { d, data })
    }
}

/// Fills `n` rows chunk by chunk, each chunk on its own substream.
pub fn generate<F>(n: usize, d: usize, seed: SeedSpec, fill: F) -> Samples
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let rows = CHUNK.min(n - k * CHUNK);
            let mut rng = seed.substream(k as u64).rng();
            let mut buf = vec![0.0; rows * d];
            for row in buf.chunks_exact_mut(d) {
                fill(&mut rng, row);
            }
            buf
        })
        .collect();
    Samples { d, data: parts.concat() }
}

fn open01(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(Open01)
}

/// One draw with characteristic function `exp(-|ξ|^α)` (Chambers–Mallows–Stuck).
pub fn cms_standard(alpha: f64, rng: &mut ChaCha8Rng) -> f64 {
    let v = PI * (open01(rng) - 0.5);
    if alpha == 1.0 {
        return v.tan();
    }
    let w: f64 = rng.sample(Exp1);
    (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Positive `a`-stable draw with Laplace transform `exp(-u^a)`, `0 < a < 1`
/// (Kanter's representation, evaluated in logs).
pub fn one_sided_stable(a: f64, rng: &mut ChaCha8Rng) -> f64 {
    let u = PI * open01(rng);
    let w: f64 = rng.sample(Exp1);
    let ln_s = (a * u).sin().ln() - u.sin().ln() / a + (1.0 - a) / a * (((1.0 - a) * u).sin().ln() - w.ln());
    ln_s.exp()
}

/// `n` i.i.d. draws with characteristic function `exp(-scale^α |ξ|^α)`.
pub fn sample_sym_stable_1d(alpha: f64, scale: f64, n: usize, seed: SeedSpec) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha < 2.0) || !(scale > 0.0) || n == 0 {
        return invalid("need alpha in (0, 2), scale > 0 and n ≥ 1");
    }
    Ok(generate(n, 1, seed, |rng, row| row[0] = scale * cms_standard(alpha, rng)).data)
}

static CALIBRATED: Mutex<Option<HashSet<(usize, u64)>>> = Mutex::new(None);

/// Probe sample size for the one-off subordinator check.
const CALIBRATION_N: usize = 1_000_000;

/// Checks once per `(d, α)` that `√(2S) G` has characteristic function
/// `exp(-|ξ|^α)` at `|ξ| = 1` within three Monte Carlo standard errors.
fn check_subordination(d: usize, alpha: f64) -> Result<()> {
    let key = (d, alpha.to_bits());
    if CALIBRATED.lock().unwrap().as_ref().is_some_and(|s| s.contains(&key)) {
        return Ok(());
    }
    let seed = SeedSpec::new(0xC0FF_EE00_D15E_A5E5, key.1 ^ d as u64);
    let s = generate(CALIBRATION_N, d, seed, |rng, row| rot_standard(d, alpha, rng, row));
    let cf = crate::stats::empirical_cf(&s, &unit(d));
    let target = (-1.0f64).exp();
    if (cf.re - target).abs() > 3.0 * cf.se_re {
        return Err(Error::Calibration { xi: 1.0, empirical: cf.re, target, std_err: cf.se_re });
    }
    CALIBRATED.lock().unwrap().get_or_insert_with(HashSet::new).insert(key);
    Ok(())
}

fn unit(d: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[0] = 1.0;
    e
}

/// Standard rotationally invariant draw: cf `exp(-|ξ|^α)`.
fn rot_standard(d: usize, alpha: f64, rng: &mut ChaCha8Rng, row: &mut [f64]) {
    row.fill(0.0);
    add_rot_scaled(d, alpha, 1.0, rng, row);
}

fn add_rot_scaled(d: usize, alpha: f64, scale: f64, rng: &mut ChaCha8Rng, row: &mut [f64]) {
    let s = one_sided_stable(alpha / 2.0, rng);
    let amp = scale * (2.0 * s).sqrt();
    for v in row.iter_mut().take(d) {
        let g: f64 = rng.sample(StandardNormal);
        *v += amp * g;
    }
}

/// Increments at time `t` of the rotationally invariant stable process,
/// `λ √(2S) G` with `λ = (tσc)^{1/α}`.
pub fn sample_rot_stable(spec: &StableSpec, t: f64, n: usize, seed: SeedSpec) -> Result<Samples> {
    if !(t > 0.0) || n == 0 {
        return invalid("need t > 0 and n ≥ 1");
    }
    check_subordination(spec.d(), spec.alpha())?;
    let lambda = (t * spec.symbol_coefficient()).powf(1.0 / spec.alpha());
    let (d, alpha) = (spec.d(), spec.alpha());
    Ok(generate(n, d, seed, |rng, row| {
        rot_standard(d, alpha, rng, row);
        for v in row.iter_mut() {
            *v *= lambda;
        }
    }))
}

/// Compound-Poisson plus Gaussian split of a truncated stable law at `ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpDecomposition {
    pub epsilon: f64,
    pub poisson_intensity: f64,
    pub gaussian_sd_per_coord: f64,
}

pub fn make_jump_decomposition(spec: &TruncatedStableSpec, epsilon: f64) -> Result<JumpDecomposition> {
    if !(epsilon > 0.0 && epsilon < spec.r()) {
        return invalid(format!("cutoff must lie in (0, r = {}), got {epsilon}", spec.r()));
    }
    let (a, d) = (spec.alpha(), spec.d() as f64);
    let mass = spec.c() * sphere_area(spec.d());
    let intensity = mass * (epsilon.powf(-a) - spec.r().powf(-a)) / a;
    let var = mass * epsilon.powf(2.0 - a) / (d * (2.0 - a));
    Ok(JumpDecomposition { epsilon, poisson_intensity: intensity, gaussian_sd_per_coord: var.sqrt() })
}

/// `min(r/10, t^{1/α}/10)`.
pub fn default_epsilon(spec: &TruncatedStableSpec, t: f64) -> f64 {
    (spec.r() / 10.0).min(t.powf(1.0 / spec.alpha()) / 10.0)
}

/// Bound on the characteristic-function error of the Gaussian small-jump
/// replacement: `t ∫_{|z|<ε} ⟨ξ,z⟩⁴ ν(dz) / 24`.
pub fn small_jump_tolerance(spec: &TruncatedStableSpec, t: f64, xi_norm: f64, epsilon: f64) -> f64 {
    let d = spec.d() as f64;
    let a = spec.alpha();
    let fourth = spec.c() * sphere_area(spec.d()) * epsilon.powf(4.0 - a) / (4.0 - a);
    t * xi_norm.powi(4) * 3.0 / (d * (d + 2.0)) * fourth / 24.0
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0)
}

fn add_uniform_direction(rng: &mut ChaCha8Rng, radius: f64, row: &mut [f64]) {
    if row.len() == 1 {
        row[0] += if rng.random::<bool>() { radius } else { -radius };
        return;
    }
    let mut g = [0.0f64; 16];
    let d = row.len();
    let mut dir: Vec<f64> = Vec::new();
    let buf: &mut [f64] = if d <= 16 {
        &mut g[..d]
    } else {
        dir.resize(d, 0.0);
        &mut dir
    };
    loop {
        for v in buf.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let n = crate::linalg::norm(buf);
        if n > 0.0 {
            for (r, v) in row.iter_mut().zip(buf.iter()) {
                *r += radius * v / n;
            }
            return;
        }
    }
}

/// Truncated stable increments at time `t`: Gaussian small jumps plus a
/// compound Poisson sum of jumps with radii in `[ε, r]`.
pub fn sample_truncated_stable(
    spec: &TruncatedStableSpec,
    t: f64,
    epsilon: f64,
    n: usize,
    seed: SeedSpec,
) -> Result<Samples> {
    if n == 0 {
        return invalid("need n ≥ 1");
    }
    let step = IncrementSampler::truncated(spec, t, epsilon)?;
    Ok(generate(n, spec.d(), seed, |rng, row| {
        row.fill(0.0);
        step.add(rng, row);
    }))
}

/// Draws increments of a driving Lévy process over a fixed time step.
#[derive(Clone, Debug)]
pub enum IncrementSampler {
    /// Rotationally invariant stable, `scale = (dt σ c)^{1/α}`.
    Stable { d: usize, alpha: f64, scale: f64 },
    /// Gaussian part plus jumps with radius density `∝ ρ^{-1-α}` on `[ε, r]`.
    Truncated { alpha: f64, lo: f64, span: f64, sd: f64, mean: f64 },
    Residual { sampler: ResidualSampler, dt: f64 },
    Sum(Vec<IncrementSampler>),
}

impl IncrementSampler {
    pub fn stable(spec: &StableSpec, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return invalid(format!("time step must be positive, got {dt}"));
        }
        if spec.d() > 1 {
            check_subordination(spec.d(), spec.alpha())?;
        }
        let scale = (dt * spec.symbol_coefficient()).powf(1.0 / spec.alpha());
        Ok(IncrementSampler::Stable { d: spec.d(), alpha: spec.alpha(), scale })
    }

    pub fn truncated(spec: &TruncatedStableSpec, dt: f64, epsilon: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return invalid(format!("time step must be positive, got {dt}"));
        }
        let dec = make_jump_decomposition(spec, epsilon)?;
        let (a, r) = (spec.alpha(), spec.r());
        let lo = epsilon.powf(-a);
        Ok(IncrementSampler::Truncated {
            alpha: a,
            lo,
            span: lo - r.powf(-a),
            sd: dt.sqrt() * dec.gaussian_sd_per_coord,
            mean: dt * dec.poisson_intensity,
        })
    }

    pub fn residual(sampler: ResidualSampler, dt: f64) -> Self {
        IncrementSampler::Residual { sampler, dt }
    }

    /// Increments of `driver` over `dt`. A dominating driver is sampled as
    /// its stable floor plus the residual jump law.
    pub fn for_driver(driver: &Driver, dt: f64) -> Result<Self> {
        match driver {
            Driver::Stable(s) => Self::stable(s, dt),
            Driver::Truncated(s) => Self::truncated(s, dt, default_epsilon(s, dt)),
            Driver::Dominating(s) => {
                let floor = Self::stable(&s.stable_floor, dt)?;
                let residual = split_levy_measure(s)?;
                if residual.is_zero() {
                    return Ok(floor);
                }
                let sampler = ResidualSampler::new(&residual, ResidualConfig::default())?;
                Ok(IncrementSampler::Sum(vec![floor, Self::residual(sampler, dt)]))
            }
        }
    }

    /// Adds one increment to `row`.
    pub fn add(&self, rng: &mut ChaCha8Rng, row: &mut [f64]) {
        match self {
            IncrementSampler::Stable { d, alpha, scale } => {
                if *d == 1 {
                    row[0] += scale * cms_standard(*alpha, rng);
                } else {
                    add_rot_scaled(*d, *alpha, *scale, rng, row);
                }
            }
            IncrementSampler::Truncated { alpha, lo, span, sd, mean } => {
                for v in row.iter_mut() {
                    let g: f64 = rng.sample(StandardNormal);
                    *v += sd * g;
                }
                for _ in 0..poisson(rng, *mean) {
                    let u: f64 = rng.random();
                    let rad = (lo - u * span).powf(-1.0 / alpha);
                    add_uniform_direction(rng, rad, row);
                }
            }
            IncrementSampler::Residual { sampler, dt } => sampler.add_increment(rng, *dt, row),
            IncrementSampler::Sum(parts) => {
                for p in parts {
                    p.add(rng, row);
                }
            }
        }
    }
}

/// Settings for the tabulated residual sampler.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualConfig {
    pub epsilon: f64,
    pub r_max: f64,
    pub cells_per_decade: usize,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        ResidualConfig { epsilon: 1e-3, r_max: 1e9, cells_per_decade: 40 }
    }
}

/// Compound Poisson plus Gaussian sampler for a residual radial density,
/// with jump radii drawn from a log-grid table.
#[derive(Clone, Debug)]
pub struct ResidualSampler {
    d: usize,
    edges: Vec<f64>,
    /// cumulative radial mass at each edge
    cumulative: Vec<f64>,
    /// local power-law exponent of the radial mass density in each cell
    slopes: Vec<f64>,
    pub intensity: f64,
    pub gaussian_sd_per_coord: f64,
    pub neglected_mass: f64,
    pub config: ResidualConfig,
}

/// Largest tolerated neglected-to-total mass ratio beyond `r_max`.
pub const NEGLECTED_LIMIT: f64 = 1e-4;

impl ResidualSampler {
    pub fn new(residual: &ResidualDensity, config: ResidualConfig) -> Result<Self> {
        let d = residual.d();
        if !(config.epsilon > 0.0 && config.r_max > config.epsilon && config.cells_per_decade > 0) {
            return invalid("residual sampler needs 0 < epsilon < r_max and a positive cell count");
        }
        let area = sphere_area(d);
        let dd = d as i32;
        let w = |rho: f64| if rho <= 0.0 { 0.0 } else { area * residual.eval(rho) * rho.powi(dd - 1) };
        let opts = QuadOpts { abs_tol: 1e-300, rel_tol: 1e-10, max_intervals: 400 };
        let decades = (config.r_max / config.epsilon).log10();
        let cells = ((decades * config.cells_per_decade as f64).ceil() as usize).max(1);
        let ratio = (config.r_max / config.epsilon).powf(1.0 / cells as f64);
        let mut edges = Vec::with_capacity(cells + 1);
        let mut cumulative = Vec::with_capacity(cells + 1);
        let mut slopes = Vec::with_capacity(cells);
        let mut acc = 0.0;
        edges.push(config.epsilon);
        cumulative.push(0.0);
        let mut lo = config.epsilon;
        for i in 0..cells {
            let hi = if i + 1 == cells { config.r_max } else { lo * ratio };
            acc += integrate(w, lo, hi, opts, "residual mass cell")?;
            let (wl, wh) = (w(lo), w(hi));
            slopes.push(if wl > 0.0 && wh > 0.0 { (wh / wl).ln() / (hi / lo).ln() } else { 0.0 });
            edges.push(hi);
            cumulative.push(acc);
            lo = hi;
        }
        let r_max = config.r_max;
        let neglected = integrate(
            |u: f64| if u <= 0.0 { 0.0 } else { w(r_max / u) * r_max / (u * u) },
            0.0,
            1.0,
            opts,
            "residual mass beyond the outer radius",
        )?;
        let total = acc + neglected;
        if total > 0.0 && neglected > NEGLECTED_LIMIT * total {
            return Err(Error::NeglectedMass { neglected, total, limit: NEGLECTED_LIMIT, r_max });
        }
        let second = integrate(|rho: f64| rho * rho * w(rho), 0.0, config.epsilon, opts, "residual small-jump variance")?;
        Ok(ResidualSampler {
            d,
            edges,
            cumulative,
            slopes,
            intensity: acc,
            gaussian_sd_per_coord: (second / d as f64).sqrt(),
            neglected_mass: neglected,
            config,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    fn radius(&self, u: f64) -> f64 {
        let target = u * self.intensity;
        let i = self.cumulative.partition_point(|&c| c <= target).clamp(1, self.edges.len() - 1) - 1;
        let (lo, hi) = (self.edges[i], self.edges[i + 1]);
        let cell = self.cumulative[i + 1] - self.cumulative[i];
        let v = if cell > 0.0 { ((target - self.cumulative[i]) / cell).clamp(0.0, 1.0) } else { 0.5 };
        // inverse CDF of a density ∝ ρ^{k} on [lo, hi]
        let k1 = self.slopes[i] + 1.0;
        if k1.abs() < 1e-9 {
            lo * (hi / lo).powf(v)
        } else {
            let (a, b) = (lo.powf(k1), hi.powf(k1));
            (a + v * (b - a)).powf(1.0 / k1)
        }
    }

    /// Adds one increment over time `dt` to `row`.
    pub fn add_increment(&self, rng: &mut ChaCha8Rng, dt: f64, row: &mut [f64]) {
        let sd = dt.sqrt() * self.gaussian_sd_per_coord;
        if sd > 0.0 {
            for v in row.iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *v += sd * g;
            }
        }
        for _ in 0..poisson(rng, dt * self.intensity) {
            let u: f64 = rng.random();
            let rad = self.radius(u);
            add_uniform_direction(rng, rad, row);
        }
    }
}

/// Increments at time `t` of the Lévy process with the residual density.
pub fn sample_residual(sampler: &ResidualSampler, t: f64, n: usize, seed: SeedSpec) -> Result<Samples> {
    if !(t > 0.0) || n == 0 {
        return invalid("need t > 0 and n ≥ 1");
    }
    Ok(generate(n, sampler.d(), seed, |rng, row| {
        row.fill(0.0);
        sampler.add_increment(rng, t, row);
    }))
}

/// Poisson counts used by the residual sampler over time `t`, for moment
/// checks.
pub fn residual_jump_counts(sampler: &ResidualSampler, t: f64, n: usize, seed: SeedSpec) -> Vec<f64> {
    let mean = t * sampler.intensity;
    generate(n, 1, seed, |rng, row| row[0] = poisson(rng, mean) as f64).data
}
