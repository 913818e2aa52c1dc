//! Process parameters, Lévy symbols, Lévy-measure splitting and the
//! constants used by the Ornstein–Uhlenbeck factorization.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{mat_vec, matrix_exp, norm, operator_norm};
use crate::quadrature::{integrate, integrate_panels, PanelOpts, QuadOpts};
use crate::special::{
    sphere_area, sphere_mean_cos, sphere_mean_cos_remainder, sphere_mean_one_minus_cos,
};

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return invalid(format!("alpha must lie in (0, 2), got {alpha}"));
    }
    Ok(())
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return invalid("dimension must be at least 1");
    }
    Ok(())
}

/// Rotationally invariant symmetric α-stable law with Lévy measure
/// `c |z|^{-d-α} dz`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StableRaw", into = "StableRaw")]
pub struct StableSpec {
    d: usize,
    alpha: f64,
    c: f64,
    sigma: f64,
}

#[derive(Serialize, Deserialize)]
struct StableRaw {
    d: usize,
    alpha: f64,
    c: f64,
}

impl TryFrom<StableRaw> for StableSpec {
    type Error = Error;
    fn try_from(raw: StableRaw) -> Result<Self> {
        StableSpec::new(raw.d, raw.alpha, raw.c)
    }
}

impl From<StableSpec> for StableRaw {
    fn from(s: StableSpec) -> Self {
        StableRaw { d: s.d, alpha: s.alpha, c: s.c }
    }
}

impl StableSpec {
    pub fn new(d: usize, alpha: f64, c: f64) -> Result<Self> {
        check_dim(d)?;
        check_alpha(alpha)?;
        if !(c > 0.0 && c.is_finite()) {
            return invalid(format!("c must be positive and finite, got {c}"));
        }
        let sigma = compute_sigma(d, alpha)?;
        if !(sigma * c > 0.0 && (sigma * c).is_finite()) {
            return invalid(format!("symbol coefficient sigma*c = {} is not positive", sigma * c));
        }
        Ok(StableSpec { d, alpha, c, sigma })
    }

    /// The spec whose symbol is exactly `|ξ|^α` times `coeff`.
    pub fn with_symbol_coefficient(d: usize, alpha: f64, coeff: f64) -> Result<Self> {
        let sigma = compute_sigma(d, alpha)?;
        Self::new(d, alpha, coeff / sigma)
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Coefficient of `|ξ|^α` in the symbol.
    pub fn symbol_coefficient(&self) -> f64 {
        self.sigma * self.c
    }

    /// Lévy density at radius `rho`.
    pub fn levy_density(&self, rho: f64) -> f64 {
        self.c * rho.powf(-(self.d as f64) - self.alpha)
    }

    pub fn symbol_radial(&self, k: f64) -> f64 {
        if k == 0.0 {
            return 0.0;
        }
        self.symbol_coefficient() * k.abs().powf(self.alpha)
    }

    pub fn symbol(&self, xi: &[f64]) -> f64 {
        self.symbol_radial(norm(xi))
    }
}

/// Stable law with jumps restricted to `|z| ≤ r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TruncatedRaw", into = "TruncatedRaw")]
pub struct TruncatedStableSpec {
    d: usize,
    alpha: f64,
    c: f64,
    r: f64,
}

#[derive(Serialize, Deserialize)]
struct TruncatedRaw {
    d: usize,
    alpha: f64,
    c: f64,
    r: f64,
}

impl TryFrom<TruncatedRaw> for TruncatedStableSpec {
    type Error = Error;
    fn try_from(raw: TruncatedRaw) -> Result<Self> {
        TruncatedStableSpec::new(raw.d, raw.alpha, raw.c, raw.r)
    }
}

impl From<TruncatedStableSpec> for TruncatedRaw {
    fn from(s: TruncatedStableSpec) -> Self {
        TruncatedRaw { d: s.d, alpha: s.alpha, c: s.c, r: s.r }
    }
}

impl TruncatedStableSpec {
    pub fn new(d: usize, alpha: f64, c: f64, r: f64) -> Result<Self> {
        check_dim(d)?;
        check_alpha(alpha)?;
        if !(c > 0.0 && c.is_finite()) {
            return invalid(format!("c must be positive and finite, got {c}"));
        }
        if !(r > 0.0 && r.is_finite()) {
            return invalid(format!("truncation radius must be positive and finite, got {r}"));
        }
        Ok(TruncatedStableSpec { d, alpha, c, r })
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn levy_density(&self, rho: f64) -> f64 {
        if rho <= self.r {
            self.c * rho.powf(-(self.d as f64) - self.alpha)
        } else {
            0.0
        }
    }

    /// `ψ(k) = c |S^{d-1}| k^α ∫_0^{kr} (1 - Λ_d(u)) u^{-1-α} du`.
    pub fn symbol_radial(&self, k: f64) -> Result<f64> {
        let k = k.abs();
        if k == 0.0 {
            return Ok(0.0);
        }
        let g = radial_power_integral(self.d, self.alpha, k * self.r)?;
        Ok(self.c * sphere_area(self.d) * k.powf(self.alpha) * g)
    }

    pub fn symbol(&self, xi: &[f64]) -> Result<f64> {
        self.symbol_radial(norm(xi))
    }

    /// `lim_{ξ→0} ψ(ξ)/|ξ|²`, i.e. `(1/2)∫⟨e, z⟩² ν(dz)`.
    pub fn quadratic_coefficient(&self) -> f64 {
        let d = self.d as f64;
        self.c * sphere_area(self.d) * self.r.powf(2.0 - self.alpha) / (2.0 * d * (2.0 - self.alpha))
    }
}

/// A radial function wrapped for use inside specs.
#[derive(Clone)]
pub struct RadialFn {
    pub name: String,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for RadialFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RadialFn({})", self.name)
    }
}

/// One additive component of a radial Lévy density `m(ρ)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialTerm {
    /// `c ρ^{-d-α}`
    Power { c: f64, alpha: f64 },
    /// `c ρ^{-d-α} 1{ρ ≤ r}`
    TruncatedPower { c: f64, alpha: f64, r: f64 },
    /// `c e^{-rate ρ} ρ^{-d-α}`
    Tempered { c: f64, alpha: f64, rate: f64 },
    #[serde(skip)]
    Custom(RadialFn),
}

impl RadialTerm {
    fn validate(&self) -> Result<()> {
        match *self {
            RadialTerm::Power { c, alpha } => {
                check_alpha(alpha)?;
                if !(c >= 0.0) {
                    return invalid("power term coefficient must be nonnegative");
                }
            }
            RadialTerm::TruncatedPower { c, alpha, r } => {
                check_alpha(alpha)?;
                if !(c >= 0.0 && r > 0.0) {
                    return invalid("truncated power term needs c ≥ 0 and r > 0");
                }
            }
            RadialTerm::Tempered { c, alpha, rate } => {
                check_alpha(alpha)?;
                if !(c >= 0.0 && rate > 0.0) {
                    return invalid("tempered term needs c ≥ 0 and rate > 0");
                }
            }
            RadialTerm::Custom(_) => {}
        }
        Ok(())
    }

    pub fn eval(&self, d: usize, rho: f64) -> f64 {
        let d = d as f64;
        match self {
            RadialTerm::Power { c, alpha } => c * rho.powf(-d - alpha),
            RadialTerm::TruncatedPower { c, alpha, r } => {
                if rho <= *r {
                    c * rho.powf(-d - alpha)
                } else {
                    0.0
                }
            }
            RadialTerm::Tempered { c, alpha, rate } => c * (-rate * rho).exp() * rho.powf(-d - alpha),
            RadialTerm::Custom(g) => (g.f)(rho),
        }
    }

    fn symbol_radial(&self, d: usize, k: f64) -> Result<f64> {
        if k == 0.0 {
            return Ok(0.0);
        }
        match *self {
            RadialTerm::Power { c, alpha } => {
                if c == 0.0 {
                    return Ok(0.0);
                }
                Ok(StableSpec::new(d, alpha, c)?.symbol_radial(k))
            }
            RadialTerm::TruncatedPower { c, alpha, r } => {
                if c == 0.0 {
                    return Ok(0.0);
                }
                TruncatedStableSpec::new(d, alpha, c, r)?.symbol_radial(k)
            }
            _ => {
                let area = sphere_area(d);
                let dd = d as i32;
                radial_symbol_generic(d, k, |rho| area * self.eval(d, rho) * rho.powi(dd - 1))
            }
        }
    }
}

/// Radial Lévy density `m` required to dominate a stable floor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DominatingLevySpec {
    pub terms: Vec<RadialTerm>,
    pub stable_floor: StableSpec,
}

impl DominatingLevySpec {
    pub fn new(terms: Vec<RadialTerm>, stable_floor: StableSpec) -> Result<Self> {
        for t in &terms {
            t.validate()?;
        }
        Ok(DominatingLevySpec { terms, stable_floor })
    }

    /// Floor plus an extra stable component with the same index.
    pub fn stable_plus(floor: StableSpec, extra_c: f64) -> Result<Self> {
        let term = RadialTerm::Power { c: floor.c() + extra_c, alpha: floor.alpha() };
        Self::new(vec![term], floor)
    }

    pub fn d(&self) -> usize {
        self.stable_floor.d()
    }

    pub fn radial_density(&self, rho: f64) -> f64 {
        self.terms.iter().map(|t| t.eval(self.d(), rho)).sum()
    }

    pub fn symbol_radial(&self, k: f64) -> Result<f64> {
        let mut s = 0.0;
        for t in &self.terms {
            s += t.symbol_radial(self.d(), k.abs())?;
        }
        Ok(s)
    }

    pub fn symbol(&self, xi: &[f64]) -> Result<f64> {
        self.symbol_radial(norm(xi))
    }
}

/// The driving Lévy process of an OU equation.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Driver {
    Stable(StableSpec),
    Truncated(TruncatedStableSpec),
    Dominating(DominatingLevySpec),
}

impl Driver {
    pub fn d(&self) -> usize {
        match self {
            Driver::Stable(s) => s.d(),
            Driver::Truncated(s) => s.d(),
            Driver::Dominating(s) => s.d(),
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            Driver::Stable(s) => s.alpha(),
            Driver::Truncated(s) => s.alpha(),
            Driver::Dominating(s) => s.stable_floor.alpha(),
        }
    }

    pub fn symbol_radial(&self, k: f64) -> Result<f64> {
        match self {
            Driver::Stable(s) => Ok(s.symbol_radial(k)),
            Driver::Truncated(s) => s.symbol_radial(k),
            Driver::Dominating(s) => s.symbol_radial(k),
        }
    }

    pub fn symbol(&self, xi: &[f64]) -> Result<f64> {
        self.symbol_radial(norm(xi))
    }

    /// The stable floor usable for the Harnack machinery, if any. Truncated
    /// drivers have none.
    pub fn stable_floor(&self) -> Option<&StableSpec> {
        match self {
            Driver::Stable(s) => Some(s),
            Driver::Truncated(_) => None,
            Driver::Dominating(s) => Some(&s.stable_floor),
        }
    }
}

/// `dX_t = A X_t dt + dL_t`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "OURaw", into = "OURaw")]
pub struct OUSpec {
    drift: DMatrix<f64>,
    driver: Driver,
    op_norm: f64,
}

#[derive(Serialize, Deserialize)]
struct OURaw {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    driver: Driver,
}

impl TryFrom<OURaw> for OUSpec {
    type Error = Error;
    fn try_from(raw: OURaw) -> Result<Self> {
        let n = raw.a.len();
        if raw.a.iter().any(|row| row.len() != n) {
            return invalid("drift matrix must be square");
        }
        let flat: Vec<f64> = raw.a.into_iter().flatten().collect();
        OUSpec::new(DMatrix::from_row_slice(n, n, &flat), raw.driver)
    }
}

impl From<OUSpec> for OURaw {
    fn from(s: OUSpec) -> Self {
        let n = s.drift.nrows();
        let a = (0..n).map(|i| (0..n).map(|j| s.drift[(i, j)]).collect()).collect();
        OURaw { a, driver: s.driver }
    }
}

impl OUSpec {
    pub fn new(drift: DMatrix<f64>, driver: Driver) -> Result<Self> {
        let d = driver.d();
        if drift.nrows() != d || drift.ncols() != d {
            return invalid(format!(
                "drift is {}x{} but the driver has dimension {d}",
                drift.nrows(),
                drift.ncols()
            ));
        }
        if drift.iter().any(|v| !v.is_finite()) {
            return invalid("drift matrix has non-finite entries");
        }
        let op_norm = operator_norm(&drift);
        if !op_norm.is_finite() {
            return invalid("operator norm of the drift is not finite");
        }
        Ok(OUSpec { drift, driver, op_norm })
    }

    /// Pure Lévy process (zero drift).
    pub fn levy(driver: Driver) -> Self {
        let d = driver.d();
        OUSpec { drift: DMatrix::zeros(d, d), driver, op_norm: 0.0 }
    }

    pub fn d(&self) -> usize {
        self.driver.d()
    }
    pub fn drift(&self) -> &DMatrix<f64> {
        &self.drift
    }
    pub fn driver(&self) -> &Driver {
        &self.driver
    }
    pub fn op_norm(&self) -> f64 {
        self.op_norm
    }
}

/// Characteristic function value as modulus and phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuHat {
    pub modulus: f64,
    pub phase: f64,
}

/// `σ(d, α) = ∫ (1 - cos z₁) |z|^{-d-α} dz`, so that the stable symbol is
/// `σ c |ξ|^α`. Computed as the radial integral times the spherical moment
/// `∫_{S^{d-1}} |θ₁|^α dθ`.
pub fn compute_sigma(d: usize, alpha: f64) -> Result<f64> {
    check_dim(d)?;
    check_alpha(alpha)?;
    thread_local! {
        static MEMO: RefCell<HashMap<(usize, u64), f64>> = RefCell::new(HashMap::new());
    }
    let key = (d, alpha.to_bits());
    if let Some(v) = MEMO.with(|m| m.borrow().get(&key).copied()) {
        return Ok(v);
    }
    let radial = power_cosine_integral(alpha, f64::INFINITY)?;
    let v = radial * spherical_moment(d, alpha)?;
    MEMO.with(|m| m.borrow_mut().insert(key, v));
    Ok(v)
}

/// `∫_{S^{d-1}} |θ₁|^α dθ`.
fn spherical_moment(d: usize, alpha: f64) -> Result<f64> {
    if d == 1 {
        return Ok(2.0);
    }
    let p = (d - 2) as i32;
    let v = integrate(
        |phi: f64| phi.cos().powf(alpha) * phi.sin().powi(p),
        0.0,
        PI / 2.0,
        QuadOpts::with_rel(1e-13),
        "spherical moment over [0, pi/2]",
    )?;
    Ok(2.0 * sphere_area(d - 1) * v)
}

/// `∫_0^M (1 - cos u) u^{-1-α} du`, `M` possibly infinite.
pub fn power_cosine_integral(alpha: f64, m: f64) -> Result<f64> {
    radial_power_integral(1, alpha, m)
}

/// `∫_0^M (1 - Λ_d(u)) u^{-1-α} du` where `Λ_d` is the sphere-averaged
/// cosine. `α = 0` is allowed for finite `M`.
pub fn radial_power_integral(d: usize, alpha: f64, m: f64) -> Result<f64> {
    if !(m >= 0.0) {
        return invalid("upper limit must be nonnegative");
    }
    if m == 0.0 {
        return Ok(0.0);
    }
    let head_end = m.min(1.0);
    let mut total = radial_head(d, alpha, head_end)?;
    if m <= 1.0 {
        return Ok(total);
    }
    if alpha == 0.0 && m.is_infinite() {
        return invalid("integral diverges for alpha = 0 on an infinite range");
    }
    // ∫_1^M u^{-1-α} du
    total += if alpha == 0.0 { m.ln() } else { (1.0 - m.powf(-alpha)) / alpha };
    total -= oscillatory_part(d, alpha, 1.0, m)?;
    Ok(total)
}

/// `∫_0^m (1 - Λ_d(u)) u^{-1-α} du` for `m ≤ 1`, with the quadratic term
/// done analytically.
fn radial_head(d: usize, alpha: f64, m: f64) -> Result<f64> {
    let dd = d as f64;
    let quad = m.powf(2.0 - alpha) / (2.0 * dd * (2.0 - alpha));
    let rest = integrate(
        |u: f64| {
            if u == 0.0 {
                0.0
            } else {
                sphere_mean_cos_remainder(d, u) * u.powf(-1.0 - alpha)
            }
        },
        0.0,
        m,
        QuadOpts { abs_tol: 1e-300, rel_tol: 1e-13, max_intervals: 200 },
        "quadratic remainder near the origin",
    )?;
    Ok(quad + rest)
}

/// `∫_a^b Λ_d(u) u^{-1-α} du` for `1 ≤ a < b ≤ ∞`.
fn oscillatory_part(d: usize, alpha: f64, a: f64, b: f64) -> Result<f64> {
    const DIRECT_LIMIT: f64 = 200.0;
    let f = |u: f64| sphere_mean_cos(d, u) * u.powf(-1.0 - alpha);
    if b <= DIRECT_LIMIT {
        return panel_sum(&f, a, b);
    }
    let near = if a < DIRECT_LIMIT { panel_sum(&f, a, DIRECT_LIMIT)? } else { 0.0 };
    let start = a.max(DIRECT_LIMIT);
    let tail_start = oscillatory_tail(d, alpha, start)?;
    let tail_end = if b.is_finite() { oscillatory_tail(d, alpha, b)? } else { 0.0 };
    Ok(near + tail_start - tail_end)
}

fn panel_sum(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    let mut s = 0.0;
    let mut lo = a;
    let opts = QuadOpts { abs_tol: 1e-300, rel_tol: 1e-13, max_intervals: 200 };
    while lo < b {
        let hi = (lo + PI).min(b);
        s += integrate(f, lo, hi, opts, "oscillatory panel")?;
        lo = hi;
    }
    Ok(s)
}

/// `∫_a^∞ Λ_d(u) u^{-1-α} du` by half-period panels and acceleration.
fn oscillatory_tail(d: usize, alpha: f64, a: f64) -> Result<f64> {
    let decay = 0.5 * (d as f64 - 1.0) + 1.0 + alpha;
    let amp = if d == 1 { 1.0 } else { 2.0 * crate::special::gamma(d as f64 / 2.0) * 2f64.powf(d as f64 / 2.0) };
    let res = integrate_panels(
        |u| sphere_mean_cos(d, u) * u.powf(-1.0 - alpha),
        a,
        (1..).map(|k| a + k as f64 * PI),
        |u| amp * u.powf(-decay),
        PanelOpts { rel_tol: 1e-13, abs_tol: 1e-300, ..PanelOpts::default() },
        "oscillatory tail of the radial symbol integral",
    )?;
    Ok(res.value)
}

/// `∫_0^∞ (1 - Λ_d(kρ)) w(ρ) dρ` for a general radial mass density `w`.
fn radial_symbol_generic(d: usize, k: f64, w: impl Fn(f64) -> f64) -> Result<f64> {
    let opts = QuadOpts { abs_tol: 1e-300, rel_tol: 1e-12, max_intervals: 4000 };
    let rho0 = 1.0 / k;
    let mut total = integrate(
        |rho: f64| if rho == 0.0 { 0.0 } else { sphere_mean_one_minus_cos(d, k * rho) * w(rho) },
        0.0,
        rho0,
        opts,
        "generic radial symbol near the origin",
    )?;
    let mut lo = rho0;
    let mut quiet = 0;
    for _ in 0..200 {
        let hi = 2.0 * lo;
        // Far out the oscillating part averages away relative to the mass.
        let piece = if k * hi < 2000.0 {
            integrate(|rho| sphere_mean_one_minus_cos(d, k * rho) * w(rho), lo, hi, opts, "generic radial symbol")?
        } else {
            integrate(&w, lo, hi, opts, "generic radial symbol, far field")?
        };
        total += piece;
        if piece.abs() <= 1e-15 * total.abs() {
            quiet += 1;
            if quiet >= 3 {
                return Ok(total);
            }
        } else {
            quiet = 0;
        }
        lo = hi;
    }
    Err(Error::Quadrature {
        context: "generic radial symbol did not settle".into(),
        lo: rho0,
        hi: lo,
        estimate: total,
        error: f64::NAN,
    })
}

/// `c₀ = ∫_{|z| ≤ e^{-‖A‖}} (1 - cos z₁) |z|^{-d} dz`.
pub fn compute_c0(op_norm_a: f64, d: usize) -> Result<f64> {
    check_dim(d)?;
    if !(op_norm_a >= 0.0) {
        return invalid(format!("operator norm must be nonnegative, got {op_norm_a}"));
    }
    let radius = (-op_norm_a).exp();
    if radius == 0.0 {
        return Ok(0.0);
    }
    Ok(sphere_area(d) * radial_head(d, 0.0, radius)?)
}

/// Radial Lévy density of the part left after removing the stable floor.
#[derive(Clone, Debug)]
pub struct ResidualDensity {
    spec: DominatingLevySpec,
}

impl ResidualDensity {
    pub fn d(&self) -> usize {
        self.spec.d()
    }

    /// `m(ρ) - c ρ^{-d-α}`, clamped at zero off the verification grid.
    pub fn eval(&self, rho: f64) -> f64 {
        (self.spec.radial_density(rho) - self.spec.stable_floor.levy_density(rho)).max(0.0)
    }

    pub fn source(&self) -> &DominatingLevySpec {
        &self.spec
    }

    /// True when the residual vanishes on the verification grid.
    pub fn is_zero(&self) -> bool {
        domination_grid().iter().all(|&rho| self.eval(rho) == 0.0)
    }
}

/// 200 log-spaced radii on `[1e-6, 1e6]`.
pub fn domination_grid() -> Vec<f64> {
    let n = 200;
    (0..n).map(|i| 10f64.powf(-6.0 + 12.0 * i as f64 / (n - 1) as f64)).collect()
}

/// Splits `ν` into the stable floor and a nonnegative residual, rejecting
/// measures that fail to dominate the floor on the verification grid.
pub fn split_levy_measure(spec: &DominatingLevySpec) -> Result<ResidualDensity> {
    for rho in domination_grid() {
        let m = spec.radial_density(rho);
        let floor = spec.stable_floor.levy_density(rho);
        if !m.is_finite() {
            return Err(Error::NonFinite { node: format!("rho = {rho:e}"), detail: "radial density".into() });
        }
        if m < floor * (1.0 - 1e-12) {
            return Err(Error::DominationViolated { radius: rho, value: m, floor });
        }
    }
    Ok(ResidualDensity { spec: spec.clone() })
}

/// `μ̂_t(ξ) = exp(-∫_0^t ψ(e^{sA*} ξ) ds)`.
pub fn compute_mu_hat(spec: &OUSpec, xi: &[f64], t: f64) -> Result<MuHat> {
    let exponent = mu_hat_exponent(spec, xi, t)?;
    Ok(MuHat { modulus: (-exponent).exp(), phase: 0.0 })
}

/// `∫_0^t ψ(e^{sA*} ξ) ds`.
pub fn mu_hat_exponent(spec: &OUSpec, xi: &[f64], t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return invalid(format!("time must be positive, got {t}"));
    }
    if xi.len() != spec.d() {
        return invalid("frequency dimension does not match the process dimension");
    }
    if norm(xi) == 0.0 {
        return Ok(0.0);
    }
    if spec.op_norm() == 0.0 {
        return Ok(t * spec.driver().symbol(xi)?);
    }
    mu_hat_exponent_quadrature(spec, xi, t)
}

/// Same integral by adaptive quadrature, with no closed-form shortcut for `A = 0`.
pub fn mu_hat_exponent_quadrature(spec: &OUSpec, xi: &[f64], t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return invalid(format!("time must be positive, got {t}"));
    }
    if xi.len() != spec.d() {
        return invalid("frequency dimension does not match the process dimension");
    }
    let at = spec.drift().transpose();
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let integrand = |s: f64| -> f64 {
        let r = matrix_exp(&at, s).and_then(|e| spec.driver().symbol(&mat_vec(&e, xi)));
        match r {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let v = integrate(integrand, 0.0, t, QuadOpts::with_rel(1e-12), "time integral of the symbol")?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gamma;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn sigma_closed_form(d: usize, a: f64) -> f64 {
        let h = d as f64 / 2.0;
        PI.powf(h) * gamma(1.0 - a / 2.0) / (a * 2f64.powf(a - 1.0) * gamma(h + a / 2.0))
    }

    #[test]
    fn sigma_reference_values() {
        // high-precision quadrature references
        let table = [
            (1, 1.0, PI),
            (1, 1.99, 100.929_210_058_253_18),
            (1, 0.5, 5.013_256_549_262_001),
            (1, 1.5, 3.342_171_032_841_334),
            (1, 0.1, 21.109_442_190_171_32),
            (2, 1.0, 2.0 * PI),
            (2, 1.5, 5.842_243_202_931_944),
            (3, 0.7, 14.341_966_043_347_223),
        ];
        for (d, a, want) in table {
            let got = compute_sigma(d, a).unwrap();
            assert!(rel(got, want) < 1e-9, "d={d} a={a}: {got} vs {want}");
        }
    }

    #[test]
    fn cauchy_calibration() {
        let s = StableSpec::new(1, 1.0, 1.0 / PI).unwrap();
        assert!((s.symbol(&[2.0]) - 2.0).abs() < 1e-10);
        assert_eq!(s.symbol(&[0.0]), 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(StableSpec::new(1, 2.0, 1.0).is_err());
        assert!(StableSpec::new(0, 1.0, 1.0).is_err());
        assert!(StableSpec::new(1, 1.0, -1.0).is_err());
        assert!(TruncatedStableSpec::new(1, 1.0, 1.0, 0.0).is_err());
        let bad: std::result::Result<StableSpec, _> = serde_json::from_str(r#"{"d":1,"alpha":2.5,"c":1}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn serde_round_trip() {
        let s = StableSpec::new(2, 1.5, 0.3).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"d":2,"alpha":1.5,"c":0.3}"#);
        let back: StableSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let ou = OUSpec::new(DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -1.0]), Driver::Stable(s)).unwrap();
        let json = serde_json::to_string(&ou).unwrap();
        let back: OUSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.drift(), ou.drift());
    }

    #[test]
    fn truncated_symbol_reference_values() {
        // (d, α, c, r, |ξ|, ψ) from high-precision quadrature
        let table = [
            (1, 1.0, 1.0, 1.0, 1.0, 0.972_770_752_470_645_464_47),
            (1, 0.5, 2.0, 1.5, 3.0, 11.419_580_183_003_216),
            (2, 1.5, 1.0, 1.0, 2.0, 11.975_209_169_802_056),
            (3, 0.7, 1.0, 2.0, 5.0, 33.127_163_700_921_374),
            (2, 1.0, 1.0, 1.0, 0.01, 0.000_157_079_305_430_800_33),
            (1, 1.5, 1.0, 1.0, 50.0, 1180.314_943_521_766_9),
        ];
        for (d, a, c, r, k, want) in table {
            let s = TruncatedStableSpec::new(d, a, c, r).unwrap();
            let got = s.symbol_radial(k).unwrap();
            assert!(rel(got, want) < 1e-9, "d={d} a={a} k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn truncated_symbol_limits() {
        let s = TruncatedStableSpec::new(2, 1.2, 0.7, 1.5).unwrap();
        let k = 1e-5;
        let q = s.symbol_radial(k).unwrap() / (k * k);
        assert!(rel(q, s.quadratic_coefficient()) < 1e-8);
        // Large frequencies: the stable symbol minus the mass beyond r.
        let s = TruncatedStableSpec::new(1, 1.0, 1.0, 1.0).unwrap();
        let k = 1e4;
        let want = PI * k - 2.0;
        assert!(rel(s.symbol_radial(k).unwrap(), want) < 1e-8);
    }

    #[test]
    fn c0_reference_values() {
        let table = [
            (0.0, 1, 0.479_623_484_001_129_452),
            (0.0, 2, 0.761_303_699_660_201_235),
            (1.0, 2, 0.105_843_674_325_946_210),
            (1.0, 1, 0.067_287_211_301_075_195_3),
            (0.5, 1, 0.181_143_171_893_249_868),
        ];
        for (a, d, want) in table {
            let got = compute_c0(a, d).unwrap();
            assert!(rel(got, want) < 1e-10, "norm={a} d={d}: {got}");
        }
        assert!(compute_c0(50.0, 1).unwrap() < 1e-40);
    }

    #[test]
    fn c0_decreasing_in_norm() {
        for d in 1..4 {
            let vals: Vec<f64> = (0..20).map(|i| compute_c0(0.25 * i as f64, d).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] < w[0]), "d={d}");
        }
    }

    #[test]
    fn split_examples() {
        let floor = StableSpec::new(2, 1.0, 0.5).unwrap();
        let exact = DominatingLevySpec::stable_plus(floor.clone(), 0.0).unwrap();
        let res = split_levy_measure(&exact).unwrap();
        assert!(res.is_zero());

        let double = DominatingLevySpec::stable_plus(floor.clone(), 0.5).unwrap();
        let res = split_levy_measure(&double).unwrap();
        for rho in domination_grid() {
            assert!(rel(res.eval(rho), floor.levy_density(rho)) < 1e-12);
        }

        let cut = DominatingLevySpec::new(vec![RadialTerm::TruncatedPower { c: 0.5, alpha: 1.0, r: 2.0 }], floor).unwrap();
        match split_levy_measure(&cut) {
            Err(Error::DominationViolated { radius, .. }) => assert!(radius > 2.0),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn dominating_symbol_adds_terms() {
        let floor = StableSpec::new(1, 1.0, 1.0 / PI).unwrap();
        let spec = DominatingLevySpec::new(
            vec![
                RadialTerm::Power { c: 1.0 / PI, alpha: 1.0 },
                RadialTerm::TruncatedPower { c: 1.0, alpha: 1.0, r: 1.0 },
            ],
            floor,
        )
        .unwrap();
        let want = 1.0 + 0.972_770_752_470_645_464_47;
        assert!(rel(spec.symbol_radial(1.0).unwrap(), want) < 1e-9);
    }

    #[test]
    fn tempered_symbol_matches_direct_quadrature() {
        // e^{-ρ} ρ^{-2} in d = 1: ψ(k) = 2 ∫ (1 - cos kρ) e^{-ρ} ρ^{-2} dρ
        //   = 2 (k atan k - ln(1 + k²)/2)
        let floor = StableSpec::new(1, 1.0, 1e-3).unwrap();
        let spec = DominatingLevySpec::new(vec![RadialTerm::Tempered { c: 1.0, alpha: 1.0, rate: 1.0 }], floor).unwrap();
        for k in [0.3, 1.0, 4.0] {
            let want = 2.0 * (k * f64::atan(k) - 0.5 * (1.0 + k * k).ln());
            assert!(rel(spec.symbol_radial(k).unwrap(), want) < 1e-8, "k={k}");
        }
    }

    #[test]
    fn mu_hat_examples() {
        let cauchy = StableSpec::new(1, 1.0, 1.0 / PI).unwrap();
        let levy = OUSpec::levy(Driver::Stable(cauchy.clone()));
        assert_eq!(compute_mu_hat(&levy, &[0.0], 1.0).unwrap().modulus, 1.0);
        let m = compute_mu_hat(&levy, &[1.0], 2.0).unwrap();
        assert!(rel(m.modulus, (-2.0f64).exp()) < 1e-12);
        assert_eq!(m.phase, 0.0);

        // A = -1: ∫_0^t σc|ξ|^α e^{-αs} ds = σc|ξ|^α (1 - e^{-αt}) / α
        let s = StableSpec::new(1, 1.5, 0.8).unwrap();
        let ou = OUSpec::new(DMatrix::from_element(1, 1, -1.0), Driver::Stable(s.clone())).unwrap();
        let (xi, t) = (1.7_f64, 0.9_f64);
        let want = s.symbol_radial(xi) * (1.0 - (-1.5 * t).exp()) / 1.5;
        assert!(rel(mu_hat_exponent(&ou, &[xi], t).unwrap(), want) < 1e-10);
        assert!(rel(mu_hat_exponent_quadrature(&ou, &[xi], t).unwrap(), want) < 1e-10);

        // quadrature with A = 0 against t·ψ
        let q = mu_hat_exponent_quadrature(&levy, &[1.3], 0.7).unwrap();
        assert!(rel(q, 0.7 * cauchy.symbol(&[1.3])) < 1e-12);
    }

    #[test]
    fn ou_rejects_dimension_mismatch() {
        let s = StableSpec::new(2, 1.0, 1.0).unwrap();
        assert!(OUSpec::new(DMatrix::zeros(1, 1), Driver::Stable(s)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sigma_matches_gamma_closed_form(d in 1usize..6, a in 0.05f64..1.95) {
            let got = compute_sigma(d, a).unwrap();
            prop_assert!(rel(got, sigma_closed_form(d, a)) < 1e-9);
        }

        #[test]
        fn stable_homogeneity(d in 1usize..4, a in 0.1f64..1.9, xi in proptest::collection::vec(-5.0f64..5.0, 3)) {
            let s = StableSpec::new(d, a, 0.7).unwrap();
            let xi = &xi[..d];
            let base = s.symbol(xi);
            prop_assume!(base > 0.0);
            for lam in [0.1, 2.0, 10.0] {
                let scaled: Vec<f64> = xi.iter().map(|v| lam * v).collect();
                prop_assert!(rel(s.symbol(&scaled), lam.powf(a) * base) < 1e-10);
            }
        }

        #[test]
        fn truncated_symbol_symmetric_and_nonnegative(d in 1usize..4, a in 0.2f64..1.8, r in 0.2f64..3.0,
                                                      xi in proptest::collection::vec(-20.0f64..20.0, 3)) {
            let s = TruncatedStableSpec::new(d, a, 1.0, r).unwrap();
            let xi = &xi[..d];
            let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
            let p = s.symbol(xi).unwrap();
            prop_assert!(p >= 0.0);
            prop_assert_eq!(p, s.symbol(&neg).unwrap());
        }

        #[test]
        fn mu_hat_without_drift(a in 0.2f64..1.9, t in 0.01f64..3.0, xi in -4.0f64..4.0) {
            let s = StableSpec::new(1, a, 0.5).unwrap();
            let levy = OUSpec::levy(Driver::Stable(s.clone()));
            let m = compute_mu_hat(&levy, &[xi], t).unwrap().modulus;
            let want = (-t * s.symbol(&[xi])).exp();
            prop_assert!((m - want).abs() <= 1e-8 * want);
        }
    }

    #[test]
    fn symbol_symmetry_many_vectors() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let stable = StableSpec::new(3, 1.3, 0.4).unwrap();
        for _ in 0..10_000 {
            let xi: Vec<f64> = (0..3).map(|_| rng.random_range(-10.0..10.0)).collect();
            let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
            let p = stable.symbol(&xi);
            assert!(p >= 0.0);
            assert_eq!(p, stable.symbol(&neg));
        }
    }
}
