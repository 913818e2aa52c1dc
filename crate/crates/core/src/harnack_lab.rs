//! Grid checks of Harnack-type inequalities for stable, truncated and OU
//! semigroups, of the density-ratio lemma and of the entropy inequalities
//! used around them. Each check fits the smallest admissible constant and
//! reports per-node margins.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::density::{estimate_bound_constants, fit_envelope_line, golden_max, stable_density_radial, BoundConstants};
use crate::error::{invalid, Error, Result};
use crate::levy_core::{Driver, OUSpec, StableSpec, TruncatedStableSpec};
use crate::linalg::norm;
use crate::ou_semigroup::{sample_ou_noise, OUNoise, OUPathConfig, TestFunction};
use crate::sampling::{default_epsilon, sample_truncated_stable, SeedSpec, CHUNK};
use crate::stats::{Bandwidth, Kde1d};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InequalityId {
    HarnackStable,
    HarnackOu,
    PHarnack,
    RatioLemma,
    TruncatedRatio,
    LogHarnack,
    Young,
    Jensen,
}

impl InequalityId {
    pub const ALL: [InequalityId; 8] = [
        InequalityId::HarnackStable,
        InequalityId::HarnackOu,
        InequalityId::PHarnack,
        InequalityId::RatioLemma,
        InequalityId::TruncatedRatio,
        InequalityId::LogHarnack,
        InequalityId::Young,
        InequalityId::Jensen,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InequalityId::HarnackStable => "harnack_stable",
            InequalityId::HarnackOu => "harnack_ou",
            InequalityId::PHarnack => "p_harnack",
            InequalityId::RatioLemma => "ratio_lemma",
            InequalityId::TruncatedRatio => "truncated_ratio",
            InequalityId::LogHarnack => "log_harnack",
            InequalityId::Young => "young",
            InequalityId::Jensen => "jensen",
        }
    }

    /// The inequality under test, written out.
    pub fn claim(self) -> &'static str {
        match self {
            InequalityId::HarnackStable => "P_t f(x) <= C P_t f(y) (1 + |x-y|/t^(1/alpha))^(d+alpha), stable semigroup",
            InequalityId::HarnackOu => {
                "P_t f(x) <= C P_t f(y) (1 + |x-y|/min(t,1)^(1/alpha))^(d+alpha), OU semigroup with noise dominating a stable law"
            }
            InequalityId::PHarnack => "(P_t f(x))^p <= C P_t f^p(y) (1 + |x-y|/s^(1/alpha))^(p(d+alpha))",
            InequalityId::RatioLemma => "p_t(x,z)/p_t(y,z) <= 2^(alpha+d) (c2/c1) (1 + |x-y|/t^(1/alpha))^(d+alpha)",
            InequalityId::TruncatedRatio => "p_t(x,z)/p_t(y,z) <= C1 t^(-d/alpha) (M/t)^(C2 M), M = max(2, |x-y|, |y-z|), t <= 1",
            InequalityId::LogHarnack => "P_t log f(x) <= log P_t f(y) + C (1+|x-y|) log((2+|x-y|)/min(t,1)), f >= 1",
            InequalityId::Young => "mu(gh) <= mu(g log g) + log mu(e^h) for mu(g) = 1",
            InequalityId::Jensen => "mu(log f) <= log mu(f)",
        }
    }
}

impl fmt::Display for InequalityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InequalityId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        InequalityId::ALL.iter().copied().find(|id| id.as_str() == s).ok_or_else(|| {
            let ids: Vec<&str> = InequalityId::ALL.iter().map(|i| i.as_str()).collect();
            Error::InvalidParameter(format!("unknown inequality id '{s}'; valid ids: {}", ids.join(", ")))
        })
    }
}

/// One evaluated grid node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeResult {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
    pub lhs: f64,
    pub rhs_shape: f64,
    pub slack: f64,
    pub ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub lhs: f64,
    pub bound: f64,
    pub excess: f64,
}

/// Constant fitted on a subset of nodes (one test function, one exponent,
/// one case of a proof).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub label: String,
    #[serde(rename = "fitted_C")]
    pub fitted_c: f64,
    #[serde(rename = "validation_C", default, skip_serializing_if = "Option::is_none")]
    pub validation_c: Option<f64>,
    pub nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McMeta {
    pub n_per_node: usize,
    pub max_std_err: f64,
    pub steps_per_path: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub inequality_id: InequalityId,
    pub claim: String,
    pub spec: Value,
    pub grid: Value,
    pub per_node: Vec<NodeResult>,
    #[serde(rename = "fitted_C")]
    pub fitted_c: f64,
    #[serde(rename = "validation_C")]
    pub validation_c: Option<f64>,
    /// Largest tolerated `validation_C / fitted_C`.
    pub stability_limit: f64,
    pub excluded_nodes: usize,
    pub violations: Vec<Violation>,
    pub breakdown: Vec<Breakdown>,
    pub mc_meta: Option<McMeta>,
    pub seed: Option<SeedSpec>,
    pub details: Value,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl InequalityReport {
    /// JSON form without the timestamp, for reproducibility comparisons.
    pub fn canonical(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Value::Object(m) = &mut v {
            m.remove("timestamp");
        }
        v
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let join = |v: &[f64]| v.iter().map(|a| format!("{a:e}")).collect::<Vec<_>>().join(";");
        writeln!(w, "t,x,y,z,lhs,rhs_shape,slack,ratio,label")?;
        for n in &self.per_node {
            writeln!(
                w,
                "{:e},{},{},{},{:e},{:e},{:e},{:e},{}",
                n.t,
                join(&n.x),
                join(&n.y),
                n.z.as_deref().map(join).unwrap_or_default(),
                n.lhs,
                n.rhs_shape,
                n.slack,
                n.ratio,
                n.label.as_deref().unwrap_or("").replace(',', ";")
            )?;
        }
        Ok(())
    }
}

/// Default `validation_C / fitted_C` ceiling.
pub const STABILITY_LIMIT: f64 = 1.25;
/// Statistical slack in standard errors.
pub const SLACK_SIGMAS: f64 = 3.0;

/// `max_i max(lhs_i - slack_i, 0) / rhs_i`.
pub fn fit_constant(lhs: &[f64], rhs_shape: &[f64], slack: &[f64]) -> Result<f64> {
    if lhs.is_empty() {
        return Err(Error::EmptyNodes("constant fit".into()));
    }
    if lhs.len() != rhs_shape.len() || lhs.len() != slack.len() {
        return invalid("lhs, rhs and slack lengths differ");
    }
    let mut c = 0.0f64;
    for i in 0..lhs.len() {
        if !(rhs_shape[i] > 0.0 && rhs_shape[i].is_finite()) || !lhs[i].is_finite() {
            return Err(Error::NonFinite { node: format!("node {i}"), detail: format!("lhs {} rhs {}", lhs[i], rhs_shape[i]) });
        }
        c = c.max((lhs[i] - slack[i]).max(0.0) / rhs_shape[i]);
    }
    Ok(c)
}

fn fit_nodes<'a>(nodes: impl Iterator<Item = &'a NodeResult>) -> Result<f64> {
    let (mut l, mut r, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for n in nodes {
        l.push(n.lhs);
        r.push(n.rhs_shape);
        s.push(n.slack);
    }
    fit_constant(&l, &r, &s)
}

fn violations_at(nodes: &[NodeResult], c: f64) -> Vec<Violation> {
    nodes
        .iter()
        .enumerate()
        .filter_map(|(index, n)| {
            let bound = c * n.rhs_shape + n.slack;
            let excess = n.lhs - bound;
            (excess > 1e-12 * n.lhs.abs().max(bound.abs())).then_some(Violation { index, lhs: n.lhs, bound, excess })
        })
        .collect()
}

fn node(t: f64, x: &[f64], y: &[f64], lhs: f64, rhs_shape: f64, slack: f64, label: String) -> NodeResult {
    NodeResult { t, x: x.to_vec(), y: y.to_vec(), z: None, lhs, rhs_shape, slack, ratio: lhs / rhs_shape, label: Some(label) }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

fn unit(d: usize, k: usize, scale: f64) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[k] = scale;
    e
}

// ---------------------------------------------------------------------------
// Harnack-type inequalities for semigroups

/// Which time enters the shape factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeTime {
    /// `t^{1/α}`: pure stable semigroups, all `t > 0`.
    Full,
    /// `(t ∧ 1)^{1/α}`.
    CappedAtOne,
}

/// `(1 + |x-y| / s^{1/α})^{exponent}`.
pub fn harnack_shape(t: f64, distance: f64, alpha: f64, exponent: f64, time: ShapeTime) -> f64 {
    let s = match time {
        ShapeTime::Full => t,
        ShapeTime::CappedAtOne => t.min(1.0),
    };
    (1.0 + distance / s.powf(1.0 / alpha)).powf(exponent)
}

/// `(1 + δ) log((2 + δ) / (t ∧ 1))`.
pub fn log_harnack_shape(t: f64, distance: f64) -> f64 {
    (1.0 + distance) * ((2.0 + distance) / t.min(1.0)).ln()
}

/// Times and separations; each nonzero separation `δ` contributes both
/// orderings `(b + δe, b)` and `(b, b + δe)` for `±e` along every axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnackGrid {
    pub times: Vec<f64>,
    pub separations: Vec<f64>,
    #[serde(default)]
    pub base: Option<Vec<f64>>,
}

impl HarnackGrid {
    pub fn default_fit() -> Self {
        HarnackGrid { times: vec![0.1, 0.25, 0.5, 1.0, 2.0], separations: vec![0.0, 0.5, 1.0, 2.0, 4.0], base: None }
    }

    pub fn default_validation() -> Self {
        HarnackGrid { times: vec![0.15, 0.4, 0.75, 1.5], separations: vec![0.25, 0.75, 1.5, 3.0], base: None }
    }

    pub fn pairs(&self, d: usize) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let b = self.base.clone().unwrap_or_else(|| vec![0.0; d]);
        if b.len() != d {
            return invalid("grid base point dimension does not match the process dimension");
        }
        let mut out = Vec::new();
        for &s in &self.separations {
            if !(s >= 0.0 && s.is_finite()) {
                return invalid(format!("separations must be finite and nonnegative, got {s}"));
            }
            if s == 0.0 {
                out.push((b.clone(), b.clone()));
                continue;
            }
            for k in 0..d {
                for sign in [1.0, -1.0] {
                    let moved: Vec<f64> = b.iter().zip(unit(d, k, sign * s)).map(|(a, e)| a + e).collect();
                    out.push((moved.clone(), b.clone()));
                    out.push((b.clone(), moved));
                }
            }
        }
        Ok(out)
    }

    fn check_times(&self, max_t: Option<f64>) -> Result<()> {
        if self.times.is_empty() || self.separations.is_empty() {
            return Err(Error::EmptyNodes("harnack grid".into()));
        }
        for &t in &self.times {
            if !(t > 0.0 && t.is_finite()) || max_t.is_some_and(|m| t > m) {
                return invalid(format!("grid time {t} out of range"));
            }
        }
        Ok(())
    }
}

/// Sample count and base seed for Monte Carlo checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n: usize,
    pub seed: SeedSpec,
}

/// Stream offset separating validation noise from fitting noise.
const VALIDATION_STREAM: u64 = 1000;

fn noise_bank(spec: &OUSpec, times: &[f64], mc: McConfig, offset: u64) -> Result<Vec<OUNoise>> {
    if mc.n < 1000 {
        return invalid(format!("need at least 10^3 paths per node, got {}", mc.n));
    }
    times
        .iter()
        .enumerate()
        .map(|(k, &t)| sample_ou_noise(spec, OUPathConfig::for_spec(spec, t), mc.n, mc.seed.substream(offset + k as u64)))
        .collect()
}

/// Ordered sums of `g` over the noise rows.
fn row_sums<const K: usize>(noise: &OUNoise, g: impl Fn(&[f64]) -> [f64; K] + Sync) -> [f64; K] {
    let d = noise.noise.d;
    let parts: Vec<[f64; K]> = noise
        .noise
        .data
        .par_chunks(CHUNK * d)
        .map(|ch| {
            let mut s = [0.0; K];
            for row in ch.chunks_exact(d) {
                let v = g(row);
                for i in 0..K {
                    s[i] += v[i];
                }
            }
            s
        })
        .collect();
    parts.iter().fold([0.0; K], |mut acc, p| {
        for i in 0..K {
            acc[i] += p[i];
        }
        acc
    })
}

/// `f(shift + row)`.
fn eval_at(f: &TestFunction, shift: &[f64], row: &[f64]) -> f64 {
    let d = shift.len();
    if d <= 8 {
        let mut buf = [0.0f64; 8];
        for i in 0..d {
            buf[i] = shift[i] + row[i];
        }
        f.eval(&buf[..d])
    } else {
        let z: Vec<f64> = shift.iter().zip(row).map(|(a, b)| a + b).collect();
        f.eval(&z)
    }
}

/// Mean and standard error from a sum and a sum of squares.
fn mean_se(s: f64, s2: f64, n: f64) -> (f64, f64) {
    let m = s / n;
    let var = ((s2 - n * m * m) / (n - 1.0)).max(0.0);
    (m, (var / n).sqrt())
}

/// Harnack node: `(P f(x))^p` against `P f^p(y) · shape^p`; slack from the
/// linearized paired difference `p m^{p-1} f(x') - f(y')^p`.
struct HarnackNode {
    result: Option<NodeResult>,
    jensen_ok: bool,
    max_se: f64,
}

#[allow(clippy::too_many_arguments)]
fn harnack_node(
    noise: &OUNoise,
    f: &TestFunction,
    x: &[f64],
    y: &[f64],
    p: f64,
    alpha: f64,
    d: usize,
    time: ShapeTime,
) -> HarnackNode {
    let t = noise.cfg.t;
    let (xs, ys) = (noise.mean_shift(x), noise.mean_shift(y));
    let n = noise.len() as f64;
    let s = row_sums(noise, |row| {
        let a = eval_at(f, &xs, row);
        let b = if x == y { a } else { eval_at(f, &ys, row) }.powf(p);
        let c = a.powf(p);
        [a, b, c, a * a, b * b, c * c]
    });
    let (ma, _) = mean_se(s[0], s[3], n);
    let (mb, seb) = mean_se(s[1], s[4], n);
    let (mc, sec) = mean_se(s[2], s[5], n);
    let lhs = ma.powf(p);
    let jensen_ok = lhs <= mc + SLACK_SIGMAS * sec + 1e-12;
    let label = if p == 1.0 { f.to_string() } else { format!("p={p};{f}") };
    if !(mb > 0.0) || mb < SLACK_SIGMAS * seb {
        return HarnackNode { result: None, jensen_ok, max_se: seb };
    }
    let coef = p * ma.powf(p - 1.0);
    let u = row_sums(noise, |row| {
        let a = eval_at(f, &xs, row);
        let b = if x == y { a } else { eval_at(f, &ys, row) }.powf(p);
        let v = if p == 1.0 { a - b } else { coef * a - b };
        [v, v * v]
    });
    let (_, seu) = mean_se(u[0], u[1], n);
    let shape = harnack_shape(t, dist(x, y), alpha, p * (d as f64 + alpha), time);
    HarnackNode {
        result: Some(node(t, x, y, lhs, mb * shape, SLACK_SIGMAS * seu, label)),
        jensen_ok,
        max_se: seb.max(seu),
    }
}

struct HarnackRun {
    nodes: Vec<NodeResult>,
    excluded: usize,
    jensen_failures: usize,
    max_se: f64,
    steps: Vec<usize>,
}

#[allow(clippy::too_many_arguments)]
fn run_harnack_grid(
    spec: &OUSpec,
    f_set: &[TestFunction],
    grid: &HarnackGrid,
    p_list: &[f64],
    time: ShapeTime,
    mc: McConfig,
    offset: u64,
) -> Result<HarnackRun> {
    let d = spec.d();
    let alpha = spec.driver().alpha();
    let pairs = grid.pairs(d)?;
    let bank = noise_bank(spec, &grid.times, mc, offset)?;
    let mut jobs = Vec::new();
    for (k, _) in grid.times.iter().enumerate() {
        for &p in p_list {
            for f in f_set {
                for (x, y) in &pairs {
                    jobs.push((k, p, f, x, y));
                }
            }
        }
    }
    let out: Vec<HarnackNode> =
        jobs.par_iter().map(|&(k, p, f, x, y)| harnack_node(&bank[k], f, x, y, p, alpha, d, time)).collect();
    let excluded = out.iter().filter(|o| o.result.is_none()).count();
    Ok(HarnackRun {
        jensen_failures: out.iter().filter(|o| !o.jensen_ok).count(),
        max_se: out.iter().map(|o| o.max_se).fold(0.0, f64::max),
        nodes: out.into_iter().filter_map(|o| o.result).collect(),
        excluded,
        steps: bank.iter().map(|b| b.cfg.n_steps).collect(),
    })
}

fn check_f_set(f_set: &[TestFunction], d: usize, min_value: f64) -> Result<()> {
    if f_set.is_empty() {
        return Err(Error::EmptyNodes("no test functions".into()));
    }
    for f in f_set {
        f.validate(d)?;
        if f.lower_bound() < min_value {
            return invalid(format!("test function {f} must be at least {min_value}"));
        }
    }
    Ok(())
}

/// Shape-factor time for a semigroup: the full time for pure stable noise
/// without drift, `t ∧ 1` otherwise.
pub fn shape_time_for(spec: &OUSpec) -> ShapeTime {
    if spec.op_norm() == 0.0 && matches!(spec.driver(), Driver::Stable(_)) {
        ShapeTime::Full
    } else {
        ShapeTime::CappedAtOne
    }
}

fn spec_value(spec: &OUSpec) -> Value {
    serde_json::to_value(spec).unwrap_or(Value::Null)
}

fn breakdown_by_label(fit: &[NodeResult], val: Option<&[NodeResult]>, key: impl Fn(&NodeResult) -> String) -> Result<Vec<Breakdown>> {
    let mut labels: Vec<String> = fit.iter().map(&key).collect();
    labels.dedup();
    let mut seen = std::collections::HashSet::new();
    labels.retain(|l| seen.insert(l.clone()));
    labels
        .into_iter()
        .map(|label| {
            let fitted_c = fit_nodes(fit.iter().filter(|n| key(n) == label))?;
            let validation_c = match val {
                Some(v) => {
                    let sel: Vec<&NodeResult> = v.iter().filter(|n| key(n) == label).collect();
                    if sel.is_empty() {
                        None
                    } else {
                        Some(fit_nodes(sel.into_iter())?)
                    }
                }
                None => None,
            };
            let nodes = fit.iter().filter(|n| key(n) == label).count();
            Ok(Breakdown { label, fitted_c, validation_c, nodes })
        })
        .collect()
}

fn stable_enough(fitted: f64, validation: Option<f64>) -> bool {
    validation.is_none_or(|v| v <= STABILITY_LIMIT * fitted + 1e-12)
}

/// Harnack inequality for the semigroup of `spec` over `f_set`: fits the
/// smallest `C` with `P̂f(x) ≤ C P̂f(y) shape + 3 se` over the grid, with
/// common random numbers for `x` and `y`. Reported as `harnack_stable` for
/// pure stable noise without drift, `harnack_ou` otherwise.
pub fn verify_harnack(
    spec: &OUSpec,
    f_set: &[TestFunction],
    grid: &HarnackGrid,
    validation: Option<&HarnackGrid>,
    mc: McConfig,
) -> Result<InequalityReport> {
    check_f_set(f_set, spec.d(), 0.0)?;
    grid.check_times(None)?;
    let time = shape_time_for(spec);
    if spec.driver().stable_floor().is_none() {
        return invalid("Harnack check needs a driver dominating a stable law");
    }
    let id = if time == ShapeTime::Full { InequalityId::HarnackStable } else { InequalityId::HarnackOu };
    let fit = run_harnack_grid(spec, f_set, grid, &[1.0], time, mc, 0)?;
    let val = match validation {
        Some(g) => {
            g.check_times(None)?;
            Some(run_harnack_grid(spec, f_set, g, &[1.0], time, mc, VALIDATION_STREAM)?)
        }
        None => None,
    };
    let fitted_c = fit_nodes(fit.nodes.iter())?;
    let validation_c = match &val {
        Some(v) if !v.nodes.is_empty() => Some(fit_nodes(v.nodes.iter())?),
        _ => None,
    };
    let label = |n: &NodeResult| n.label.clone().unwrap_or_default();
    let breakdown = breakdown_by_label(&fit.nodes, val.as_ref().map(|v| v.nodes.as_slice()), label)?;
    let violations = violations_at(&fit.nodes, fitted_c);
    let passed = violations.is_empty() && fitted_c.is_finite() && stable_enough(fitted_c, validation_c);
    Ok(InequalityReport {
        inequality_id: id,
        claim: id.claim().into(),
        spec: spec_value(spec),
        grid: json!({"fit": grid, "validation": validation, "shape_time": time}),
        per_node: fit.nodes,
        fitted_c,
        validation_c,
        stability_limit: STABILITY_LIMIT,
        excluded_nodes: fit.excluded + val.as_ref().map_or(0, |v| v.excluded),
        violations,
        breakdown,
        mc_meta: Some(McMeta { n_per_node: mc.n, max_std_err: fit.max_se, steps_per_path: fit.steps }),
        seed: Some(mc.seed),
        details: json!({"test_functions": f_set.iter().map(|f| f.to_string()).collect::<Vec<_>>()}),
        passed,
        timestamp: None,
    })
}

/// Power Harnack inequality for each `p` in `p_list`, with exponent
/// `p(d+α)` on the shape factor. Each `p` is fitted on its own; the
/// breakdown lists them and `fitted_C` is their maximum. Every node also
/// checks `(P̂f(x))^p ≤ P̂f^p(x) + 3 se`.
pub fn verify_p_harnack(
    spec: &OUSpec,
    f_set: &[TestFunction],
    grid: &HarnackGrid,
    p_list: &[f64],
    validation: Option<&HarnackGrid>,
    mc: McConfig,
) -> Result<InequalityReport> {
    check_f_set(f_set, spec.d(), 0.0)?;
    grid.check_times(None)?;
    if p_list.is_empty() || p_list.iter().any(|&p| !(p > 1.0 && p.is_finite())) {
        return invalid("exponents must be finite and greater than 1");
    }
    if spec.driver().stable_floor().is_none() {
        return invalid("Harnack check needs a driver dominating a stable law");
    }
    let time = shape_time_for(spec);
    let fit = run_harnack_grid(spec, f_set, grid, p_list, time, mc, 0)?;
    let val = match validation {
        Some(g) => Some(run_harnack_grid(spec, f_set, g, p_list, time, mc, VALIDATION_STREAM)?),
        None => None,
    };
    let p_of = |n: &NodeResult| {
        let l = n.label.as_deref().unwrap_or("");
        l.split(';').next().unwrap_or("").to_string()
    };
    let breakdown = breakdown_by_label(&fit.nodes, val.as_ref().map(|v| v.nodes.as_slice()), p_of)?;
    let fitted_c = breakdown.iter().map(|b| b.fitted_c).fold(0.0, f64::max);
    let validation_c = if breakdown.iter().any(|b| b.validation_c.is_some()) {
        Some(breakdown.iter().filter_map(|b| b.validation_c).fold(0.0, f64::max))
    } else {
        None
    };
    let mut violations = Vec::new();
    for b in &breakdown {
        let idx: Vec<usize> = (0..fit.nodes.len()).filter(|&i| p_of(&fit.nodes[i]) == b.label).collect();
        let sub: Vec<NodeResult> = idx.iter().map(|&i| fit.nodes[i].clone()).collect();
        for mut v in violations_at(&sub, b.fitted_c) {
            v.index = idx[v.index];
            violations.push(v);
        }
    }
    let stable = breakdown.iter().all(|b| stable_enough(b.fitted_c, b.validation_c));
    let jensen_failures = fit.jensen_failures + val.as_ref().map_or(0, |v| v.jensen_failures);
    let passed = violations.is_empty() && fitted_c.is_finite() && stable && jensen_failures == 0;
    Ok(InequalityReport {
        inequality_id: InequalityId::PHarnack,
        claim: InequalityId::PHarnack.claim().into(),
        spec: spec_value(spec),
        grid: json!({"fit": grid, "validation": validation, "shape_time": time, "p": p_list}),
        per_node: fit.nodes,
        fitted_c,
        validation_c,
        stability_limit: STABILITY_LIMIT,
        excluded_nodes: fit.excluded + val.as_ref().map_or(0, |v| v.excluded),
        violations,
        breakdown,
        mc_meta: Some(McMeta { n_per_node: mc.n, max_std_err: fit.max_se, steps_per_path: fit.steps }),
        seed: Some(mc.seed),
        details: json!({
            "test_functions": f_set.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
            "power_jensen_failures": jensen_failures,
        }),
        passed,
        timestamp: None,
    })
}

// ---------------------------------------------------------------------------
// log-Harnack

/// Estimate of `∫ log(p_t(x,z)/p_t(y,z)) p_t(x,z) dz`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRatioEstimate {
    pub estimate: f64,
    pub std_err: f64,
    pub envelope: f64,
    /// Samples where the estimate at the shifted point vanished and the
    /// floor was used.
    pub capped: usize,
    pub holds: bool,
}

/// Floor for vanishing density estimates inside logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

/// Relative-entropy estimate with `z = x + Y_i`: mean of
/// `log k(Y_i) - log k(Y_i + x - y)` where `k` is the estimate of the law
/// of `Y`.
fn entropy_from_kde(kde: &Kde1d, own: &[f64], ys: &[f64], shift: f64) -> (f64, f64, usize) {
    if shift == 0.0 {
        return (0.0, 0.0, 0);
    }
    let n = ys.len() as f64;
    let vals: Vec<(f64, bool)> = ys
        .par_iter()
        .zip(own.par_iter())
        .map(|(&y, &own)| {
            let other = kde.eval(y + shift).0;
            let capped = other <= 0.0;
            (own.max(LOG_FLOOR).ln() - other.max(LOG_FLOOR).ln(), capped)
        })
        .collect();
    let s: f64 = vals.iter().map(|v| v.0).sum();
    let s2: f64 = vals.iter().map(|v| v.0 * v.0).sum();
    let (m, se) = mean_se(s, s2, n);
    (m, se, vals.iter().filter(|v| v.1).count())
}

/// Monte Carlo estimate of the relative entropy of `p_t(x,·)` with respect
/// to `p_t(y,·)` for the one-dimensional truncated law, using the kernel
/// estimate for both densities, next to the envelope
/// `c (1+|x-y|) log((2+|x-y|)/t)`.
pub fn log_ratio_integral_bound(
    spec: &TruncatedStableSpec,
    t: f64,
    x: f64,
    y: f64,
    c: f64,
    n: usize,
    seed: SeedSpec,
) -> Result<LogRatioEstimate> {
    if spec.d() != 1 {
        return invalid("relative-entropy estimate is one-dimensional");
    }
    if !(t > 0.0 && t <= 1.0) {
        return invalid(format!("time must lie in (0, 1], got {t}"));
    }
    let samples = sample_truncated_stable(spec, t, default_epsilon(spec, t), n, seed)?;
    let kde = Kde1d::new(&samples.data, Bandwidth::Auto)?;
    let own: Vec<f64> = samples.data.par_iter().map(|&v| kde.eval(v).0).collect();
    let (estimate, std_err, capped) = entropy_from_kde(&kde, &own, &samples.data, x - y);
    let delta = (x - y).abs();
    let envelope = c * (1.0 + delta) * ((2.0 + delta) / t).ln();
    Ok(LogRatioEstimate { estimate, std_err, envelope, capped, holds: estimate <= envelope + SLACK_SIGMAS * std_err })
}

struct LogRun {
    nodes: Vec<NodeResult>,
    /// `(P̂ log f(x), log P̂ f(y), slack)` per node, for the proof-form fit.
    raw: Vec<(f64, f64, f64)>,
    entropy: Vec<NodeResult>,
    capped: usize,
    excluded: usize,
    max_se: f64,
    steps: Vec<usize>,
}

fn run_log_grid(spec: &OUSpec, f_set: &[TestFunction], grid: &HarnackGrid, mc: McConfig, offset: u64) -> Result<LogRun> {
    let d = spec.d();
    let pairs = grid.pairs(d)?;
    let bank = noise_bank(spec, &grid.times, mc, offset)?;
    let mut jobs = Vec::new();
    for k in 0..grid.times.len() {
        for f in f_set {
            for (x, y) in &pairs {
                jobs.push((k, f, x, y));
            }
        }
    }
    let n = mc.n as f64;
    let out: Vec<Option<(NodeResult, (f64, f64, f64), f64)>> = jobs
        .par_iter()
        .map(|&(k, f, x, y)| {
            let noise = &bank[k];
            let t = noise.cfg.t;
            let (xs, ys) = (noise.mean_shift(x), noise.mean_shift(y));
            let s = row_sums(noise, |row| {
                let a = eval_at(f, &xs, row).ln();
                let b = eval_at(f, &ys, row);
                [a, b, a * a, b * b]
            });
            let (ma, _) = mean_se(s[0], s[2], n);
            let (mb, seb) = mean_se(s[1], s[3], n);
            if !(mb > 0.0) {
                return None;
            }
            let u = row_sums(noise, |row| {
                let v = eval_at(f, &xs, row).ln() - eval_at(f, &ys, row) / mb;
                [v, v * v]
            });
            let (_, seu) = mean_se(u[0], u[1], n);
            let slack = SLACK_SIGMAS * seu;
            let lhs = ma - mb.ln();
            let shape = log_harnack_shape(t, dist(x, y));
            Some((node(t, x, y, lhs, shape, slack, f.to_string()), (ma, mb.ln(), slack), seb.max(seu)))
        })
        .collect();
    let excluded = out.iter().filter(|o| o.is_none()).count();
    let kept: Vec<_> = out.into_iter().flatten().collect();

    // relative entropy of p_t(x,·) against p_t(y,·), one-dimensional only
    let mut entropy = Vec::new();
    let mut capped = 0;
    if d == 1 {
        for (k, noise) in bank.iter().enumerate() {
            let t = grid.times[k];
            if t > 1.0 {
                continue;
            }
            let kde = Kde1d::new(&noise.noise.data, Bandwidth::Auto)?;
            let own: Vec<f64> = noise.noise.data.par_iter().map(|&v| kde.eval(v).0).collect();
            for (x, y) in &pairs {
                let shift = noise.mean_shift(x)[0] - noise.mean_shift(y)[0];
                let (m, se, c) = entropy_from_kde(&kde, &own, &noise.noise.data, shift);
                capped += c;
                let shape = (1.0 + dist(x, y)) * ((2.0 + dist(x, y)) / t).ln();
                entropy.push(node(t, x, y, m, shape, SLACK_SIGMAS * se, "entropy".into()));
            }
        }
    }
    Ok(LogRun {
        max_se: kept.iter().map(|k| k.2).fold(0.0, f64::max),
        raw: kept.iter().map(|k| k.1).collect(),
        nodes: kept.into_iter().map(|k| k.0).collect(),
        entropy,
        capped,
        excluded,
        steps: bank.iter().map(|b| b.cfg.n_steps).collect(),
    })
}

/// log-Harnack inequality for `f ≥ 1`: fits the smallest `C` with
/// `P̂ log f(x) - log P̂ f(y) ≤ C (1+|x-y|) log((2+|x-y|)/(t∧1)) + 3 se`.
/// Also reports the constant of the variant with `C` on the log term, the
/// constant of the relative-entropy bound that drives it (one-dimensional
/// noise, `t ≤ 1`), and the diagonal nodes separately.
pub fn verify_log_harnack(
    spec: &OUSpec,
    f_set: &[TestFunction],
    grid: &HarnackGrid,
    validation: Option<&HarnackGrid>,
    mc: McConfig,
) -> Result<InequalityReport> {
    check_f_set(f_set, spec.d(), 1.0)?;
    grid.check_times(None)?;
    let fit = run_log_grid(spec, f_set, grid, mc, 0)?;
    let val = match validation {
        Some(g) => {
            g.check_times(None)?;
            Some(run_log_grid(spec, f_set, g, mc, VALIDATION_STREAM)?)
        }
        None => None,
    };
    let fitted_c = fit_nodes(fit.nodes.iter())?;
    let validation_c = match &val {
        Some(v) if !v.nodes.is_empty() => Some(fit_nodes(v.nodes.iter())?),
        _ => None,
    };
    let mut breakdown = breakdown_by_label(&fit.nodes, val.as_ref().map(|v| v.nodes.as_slice()), |n| {
        n.label.clone().unwrap_or_default()
    })?;
    let diagonal: Vec<&NodeResult> = fit.nodes.iter().filter(|n| n.x == n.y).collect();
    if !diagonal.is_empty() {
        breakdown.push(Breakdown {
            label: "diagonal".into(),
            fitted_c: fit_nodes(diagonal.iter().copied())?,
            validation_c: None,
            nodes: diagonal.len(),
        });
    }
    // C P_t log f(x) ≤ C log P_t f(y) + C shape, i.e. C ≥ lhs / (log P f(y) + shape)
    let proof_form = fit
        .raw
        .iter()
        .zip(&fit.nodes)
        .map(|(&(a, lb, s), n)| (a - s).max(0.0) / (lb + n.rhs_shape))
        .fold(0.0, f64::max);
    breakdown.push(Breakdown { label: "proof_form".into(), fitted_c: proof_form, validation_c: None, nodes: fit.raw.len() });
    if !fit.entropy.is_empty() {
        let val_entropy = val.as_ref().filter(|v| !v.entropy.is_empty()).map(|v| fit_nodes(v.entropy.iter())).transpose()?;
        breakdown.push(Breakdown {
            label: "entropy".into(),
            fitted_c: fit_nodes(fit.entropy.iter())?,
            validation_c: val_entropy,
            nodes: fit.entropy.len(),
        });
    }
    let violations = violations_at(&fit.nodes, fitted_c);
    let passed = violations.is_empty() && fitted_c.is_finite() && stable_enough(fitted_c, validation_c);
    Ok(InequalityReport {
        inequality_id: InequalityId::LogHarnack,
        claim: InequalityId::LogHarnack.claim().into(),
        spec: spec_value(spec),
        grid: json!({"fit": grid, "validation": validation}),
        per_node: fit.nodes,
        fitted_c,
        validation_c,
        stability_limit: STABILITY_LIMIT,
        excluded_nodes: fit.excluded + val.as_ref().map_or(0, |v| v.excluded),
        violations,
        breakdown,
        mc_meta: Some(McMeta { n_per_node: mc.n, max_std_err: fit.max_se, steps_per_path: fit.steps }),
        seed: Some(mc.seed),
        details: json!({
            "test_functions": f_set.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
            "entropy_nodes": fit.entropy,
            "entropy_capped_samples": fit.capped,
            "log_floor": LOG_FLOOR,
        }),
        passed,
        timestamp: None,
    })
}

// ---------------------------------------------------------------------------
// density-ratio lemma

/// Case of the ratio argument at `(t, x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioCase {
    /// `|y-z| ≤ t^{1/α}`.
    CaseI,
    /// `|y-z| ≥ 2 (t^{1/α} ∨ |x-y|)`.
    CaseIi,
    /// The remaining band.
    CaseIii,
}

impl RatioCase {
    pub fn as_str(self) -> &'static str {
        match self {
            RatioCase::CaseI => "case_i",
            RatioCase::CaseIi => "case_ii",
            RatioCase::CaseIii => "case_iii",
        }
    }
}

/// Boundaries go to the lower-numbered case.
pub fn classify_case(t: f64, x: &[f64], y: &[f64], z: &[f64], alpha: f64) -> RatioCase {
    let s = t.powf(1.0 / alpha);
    let yz = dist(y, z);
    if yz <= s {
        RatioCase::CaseI
    } else if yz >= 2.0 * s.max(dist(x, y)) {
        RatioCase::CaseIi
    } else {
        RatioCase::CaseIii
    }
}

/// Bound on `p_t(x,z)/p_t(y,z)` within a case, given the two-sided density
/// bound `c1 φ ≤ p ≤ c2 φ`.
#[allow(clippy::too_many_arguments)]
pub fn case_bound(case: RatioCase, t: f64, y: &[f64], z: &[f64], alpha: f64, d: usize, c1: f64, c2: f64) -> f64 {
    let e = d as f64 + alpha;
    match case {
        RatioCase::CaseI => c2 / c1,
        RatioCase::CaseIi => 2f64.powf(e) * c2 / c1,
        RatioCase::CaseIii => c2 / c1 * (dist(y, z) / t.powf(1.0 / alpha)).powf(e),
    }
}

/// `2^{α+d} (c2/c1) (1 + |x-y|/t^{1/α})^{d+α}`.
pub fn lemma_ratio_bound(t: f64, x: &[f64], y: &[f64], alpha: f64, d: usize, c1: f64, c2: f64) -> f64 {
    let e = d as f64 + alpha;
    2f64.powf(e) * c2 / c1 * (1.0 + dist(x, y) / t.powf(1.0 / alpha)).powf(e)
}

/// `(t, x, y, z)` grid: `(x, y)` pairs as in [`HarnackGrid`] along the
/// first axis, and `z = y ± ρ e_k` over every axis with `ρ` log-spaced on
/// `[z_min, 10 max(1, |x-y|)]`, plus `z = y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioGrid {
    pub times: Vec<f64>,
    pub separations: Vec<f64>,
    pub z_per_ray: usize,
    pub z_min: f64,
}

impl RatioGrid {
    pub fn default_grid() -> Self {
        RatioGrid { times: vec![0.1, 0.25, 0.5, 1.0, 2.0], separations: vec![0.0, 0.5, 1.0, 2.0, 4.0], z_per_ray: 64, z_min: 1e-3 }
    }

    /// Default grid restricted to `t ≤ 1`.
    pub fn default_truncated() -> Self {
        RatioGrid { times: vec![0.1, 0.25, 0.5, 1.0], ..Self::default_grid() }
    }

    pub fn nodes(&self, d: usize) -> Result<Vec<(f64, Vec<f64>, Vec<f64>, Vec<f64>)>> {
        if self.times.is_empty() || self.z_per_ray < 2 || !(self.z_min > 0.0) {
            return invalid("ratio grid needs times, at least two radii per ray and z_min > 0");
        }
        let mut pairs = Vec::new();
        for &s in &self.separations {
            if !(s >= 0.0 && s.is_finite()) {
                return invalid(format!("separations must be finite and nonnegative, got {s}"));
            }
            if s == 0.0 {
                pairs.push((vec![0.0; d], vec![0.0; d]));
            } else {
                for sign in [1.0, -1.0] {
                    pairs.push((unit(d, 0, sign * s), vec![0.0; d]));
                    pairs.push((vec![0.0; d], unit(d, 0, sign * s)));
                }
            }
        }
        let mut out = Vec::new();
        for &t in &self.times {
            if !(t > 0.0 && t.is_finite()) {
                return invalid(format!("grid time {t} out of range"));
            }
            for (x, y) in &pairs {
                let top = 10.0 * dist(x, y).max(1.0);
                out.push((t, x.clone(), y.clone(), y.clone()));
                for i in 0..self.z_per_ray {
                    let rho = self.z_min * (top / self.z_min).powf(i as f64 / (self.z_per_ray - 1) as f64);
                    for k in 0..d {
                        for sign in [1.0, -1.0] {
                            let z: Vec<f64> = y.iter().zip(unit(d, k, sign * rho)).map(|(a, b)| a + b).collect();
                            out.push((t, x.clone(), y.clone(), z));
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Denominator densities below this are skipped.
pub const DENSITY_UNDERFLOW: f64 = 1e-300;
/// Relative slack for the ratio-lemma bounds.
pub const RATIO_SLACK: f64 = 1e-6;

fn density_cache(spec: &StableSpec, keys: Vec<(u64, u64)>) -> Result<HashMap<(u64, u64), f64>> {
    let mut keys = keys;
    keys.sort_unstable();
    keys.dedup();
    let vals: Vec<f64> = keys
        .par_iter()
        .map(|&(t, r)| Ok(stable_density_radial(spec, f64::from_bits(t), f64::from_bits(r))?.value))
        .collect::<Result<_>>()?;
    Ok(keys.into_iter().zip(vals).collect())
}

/// Two-sided bound constants fitted on exactly the scaled radii
/// `|v|/t^{1/α}` that a ratio grid touches. The ratio `p/φ` depends on
/// nothing else, so the bound holds at every node of the grid.
pub fn ratio_lemma_constants(spec: &StableSpec, grid: &RatioGrid) -> Result<BoundConstants> {
    let a = spec.alpha();
    let mut radii: Vec<f64> = Vec::new();
    for (t, x, y, z) in grid.nodes(spec.d())? {
        let s = t.powf(1.0 / a);
        radii.push(dist(x.as_slice(), &z) / s);
        radii.push(dist(y.as_slice(), &z) / s);
    }
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let pts: Vec<Vec<f64>> = radii.iter().map(|&r| unit(spec.d(), 0, r)).collect();
    estimate_bound_constants(spec, &[1.0], &pts)
}

/// Density ratios `p_t(x,z)/p_t(y,z)` on the grid against the per-case
/// bound and the lemma bound, both at the fitted two-sided constants
/// (`c1_hat` lower, `c2_hat` upper). `fitted_C` is the smallest constant in
/// front of `(1 + |x-y|/t^{1/α})^{d+α}`. For each `(t, x, y)` the largest
/// ratio over `z` is refined by golden-section search along its ray.
pub fn verify_ratio_lemma(spec: &StableSpec, constants: &BoundConstants, grid: &RatioGrid) -> Result<InequalityReport> {
    let (d, a) = (spec.d(), spec.alpha());
    let (c1, c2) = (constants.c1_hat, constants.c2_hat);
    if !(c1 > 0.0 && c2 >= c1) {
        return invalid("need 0 < c1 ≤ c2");
    }
    let nodes = grid.nodes(d)?;
    let keys: Vec<(u64, u64)> = nodes
        .iter()
        .flat_map(|(t, x, y, z)| [(t.to_bits(), dist(x, z).to_bits()), (t.to_bits(), dist(y, z).to_bits())])
        .collect();
    let cache = density_cache(spec, keys)?;
    let dens = |t: f64, r: f64| cache[&(t.to_bits(), r.to_bits())];
    let e = d as f64 + a;
    let mut per_node = Vec::with_capacity(nodes.len());
    let mut violations = Vec::new();
    let mut excluded = 0;
    let mut cases: HashMap<RatioCase, (f64, usize)> = HashMap::new();
    for (t, x, y, z) in &nodes {
        let (t, x, y, z) = (*t, x.as_slice(), y.as_slice(), z.as_slice());
        let den = dens(t, dist(y, z));
        if den < DENSITY_UNDERFLOW {
            excluded += 1;
            continue;
        }
        let ratio = dens(t, dist(x, z)) / den;
        let case = classify_case(t, x, y, z, a);
        let cb = case_bound(case, t, y, z, a, d, c1, c2);
        let lb = lemma_ratio_bound(t, x, y, a, d, c1, c2);
        let shape = (1.0 + dist(x, y) / t.powf(1.0 / a)).powf(e);
        let entry = cases.entry(case).or_insert((0.0, 0));
        entry.0 = entry.0.max(ratio / cb);
        entry.1 += 1;
        let index = per_node.len();
        for bound in [cb, lb] {
            if ratio > bound * (1.0 + RATIO_SLACK) {
                violations.push(Violation { index, lhs: ratio, bound, excess: ratio - bound });
            }
        }
        per_node.push(NodeResult {
            t,
            x: x.to_vec(),
            y: y.to_vec(),
            z: Some(z.to_vec()),
            lhs: ratio,
            rhs_shape: shape,
            slack: 0.0,
            ratio: ratio / shape,
            label: Some(case.as_str().into()),
        });
    }
    let fitted_c = fit_nodes(per_node.iter())?;

    // sup over z along each ray, refined between neighbouring grid radii
    let mut groups: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    for n in &per_node {
        if !groups.iter().any(|g| g.0 == n.t && g.1 == n.x && g.2 == n.y) {
            groups.push((n.t, n.x.clone(), n.y.clone()));
        }
    }
    let sups: Vec<(Value, Option<Violation>)> = groups
        .par_iter()
        .map(|(t, x, y)| {
            let members: Vec<&NodeResult> = per_node.iter().filter(|n| n.t == *t && &n.x == x && &n.y == y).collect();
            let best = members.iter().copied().max_by(|a, b| a.lhs.total_cmp(&b.lhs)).expect("nonempty group");
            let z = best.z.clone().unwrap_or_default();
            let off: Vec<f64> = z.iter().zip(y).map(|(a, b)| a - b).collect();
            let rho = norm(&off);
            let mut sup = best.lhs;
            let mut z_sup = z.clone();
            if rho > 0.0 {
                let dir: Vec<f64> = off.iter().map(|v| v / rho).collect();
                let top = 10.0 * dist(x, y).max(1.0);
                let step = (top / grid.z_min).powf(1.0 / (grid.z_per_ray - 1) as f64);
                let at = |r: f64| -> Vec<f64> { y.iter().zip(&dir).map(|(a, b)| a + r * b).collect() };
                let ratio_at = |r: f64| -> Result<f64> {
                    let zz = at(r);
                    let den = stable_density_radial(spec, *t, dist(y, &zz))?.value;
                    let num = stable_density_radial(spec, *t, dist(x, &zz))?.value;
                    Ok(if den < DENSITY_UNDERFLOW { 0.0 } else { num / den })
                };
                if let Ok((r, v)) = golden_max(ratio_at, rho / step, rho * step) {
                    if v > sup {
                        sup = v;
                        z_sup = at(r);
                    }
                }
            }
            let bound = lemma_ratio_bound(*t, x, y, a, d, c1, c2);
            let viol = (sup > bound * (1.0 + RATIO_SLACK)).then(|| Violation { index: usize::MAX, lhs: sup, bound, excess: sup - bound });
            (json!({"t": t, "x": x, "y": y, "z": z_sup, "sup_ratio": sup, "lemma_bound": bound}), viol)
        })
        .collect();
    let mut sup_rows = Vec::new();
    for (row, v) in sups {
        sup_rows.push(row);
        if let Some(v) = v {
            violations.push(v);
        }
    }
    let mut breakdown: Vec<Breakdown> = [RatioCase::CaseI, RatioCase::CaseIi, RatioCase::CaseIii]
        .iter()
        .filter_map(|c| {
            cases.get(c).map(|&(m, k)| Breakdown { label: c.as_str().into(), fitted_c: m, validation_c: None, nodes: k })
        })
        .collect();
    breakdown.push(Breakdown {
        label: "lemma_constant".into(),
        fitted_c: 2f64.powf(e) * c2 / c1,
        validation_c: None,
        nodes: per_node.len(),
    });
    let passed = violations.is_empty();
    Ok(InequalityReport {
        inequality_id: InequalityId::RatioLemma,
        claim: InequalityId::RatioLemma.claim().into(),
        spec: serde_json::to_value(spec).unwrap_or(Value::Null),
        grid: serde_json::to_value(grid).unwrap_or(Value::Null),
        per_node,
        fitted_c,
        validation_c: None,
        stability_limit: STABILITY_LIMIT,
        excluded_nodes: excluded,
        violations,
        breakdown,
        mc_meta: None,
        seed: None,
        details: json!({"c1_hat": c1, "c2_hat": c2, "bound_constants": constants, "sup_over_z": sup_rows}),
        passed,
        timestamp: None,
    })
}

// ---------------------------------------------------------------------------
// truncated ratio bound

/// `C1 t^{-d/α} (M/t)^{C2 M}` with `M = 2 ∨ |x-y| ∨ |y-z|`.
#[allow(clippy::too_many_arguments)]
pub fn truncated_ratio_bound(t: f64, x: &[f64], y: &[f64], z: &[f64], c1: f64, c2: f64, alpha: f64, d: usize) -> f64 {
    let m = 2f64.max(dist(x, y)).max(dist(y, z));
    c1 * t.powf(-(d as f64) / alpha) * (m / t).powf(c2 * m)
}

/// Ratios of kernel density estimates of the one-dimensional truncated law
/// against [`truncated_ratio_bound`]. `C2` comes from a linear program on
/// the log ratios (minimal summed gap, `C2 ≥ 0`), `C1` (the reported
/// `fitted_C`) from the tightest fit given `C2`. Nodes where either
/// estimate is below three standard errors are excluded.
pub fn verify_truncated_ratio(spec: &TruncatedStableSpec, grid: &RatioGrid, mc: McConfig) -> Result<InequalityReport> {
    if spec.d() != 1 {
        return invalid("truncated ratio check is one-dimensional");
    }
    if grid.times.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return invalid("truncated ratio check needs times in (0, 1]");
    }
    if mc.n < 10_000 {
        return invalid(format!("need at least 10^4 samples per time, got {}", mc.n));
    }
    let (d, a) = (1usize, spec.alpha());
    let nodes = grid.nodes(d)?;
    let kdes: Vec<Kde1d> = grid
        .times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let s = sample_truncated_stable(spec, t, default_epsilon(spec, t), mc.n, mc.seed.substream(k as u64))?;
            Kde1d::new(&s.data, Bandwidth::Auto)
        })
        .collect::<Result<_>>()?;
    let kde_of = |t: f64| &kdes[grid.times.iter().position(|&s| s == t).expect("grid time")];
    let mut kept = Vec::new();
    let mut excluded = 0;
    for (t, x, y, z) in &nodes {
        let kde = kde_of(*t);
        let (px, sx) = kde.eval(z[0] - x[0]);
        let (py, sy) = kde.eval(z[0] - y[0]);
        if !(px > 0.0 && py > 0.0) || px < SLACK_SIGMAS * sx || py < SLACK_SIGMAS * sy {
            excluded += 1;
            continue;
        }
        let log_slack = SLACK_SIGMAS * ((sx / px).powi(2) + (sy / py).powi(2)).sqrt();
        kept.push((*t, x.clone(), y.clone(), z.clone(), px / py, log_slack));
    }
    if kept.is_empty() {
        return Err(Error::EmptyNodes("no resolved truncated-ratio nodes".into()));
    }
    let m_of = |x: &[f64], y: &[f64], z: &[f64]| 2f64.max(dist(x, y)).max(dist(y, z));
    // log r + (d/α) log t - slack ≤ log C1 + C2 M log(M/t)
    let pts: Vec<(f64, f64)> = kept
        .iter()
        .map(|(t, x, y, z, r, s)| {
            let m = m_of(x, y, z);
            (-(m * (m / t).ln()), r.ln() + (d as f64 / a) * t.ln() - s)
        })
        .collect();
    let (_, c2) = fit_envelope_line(&pts, true);
    let per_node: Vec<NodeResult> = kept
        .iter()
        .map(|(t, x, y, z, r, s)| {
            let shape = truncated_ratio_bound(*t, x, y, z, 1.0, c2, a, d);
            NodeResult {
                t: *t,
                x: x.clone(),
                y: y.clone(),
                z: Some(z.clone()),
                lhs: *r,
                rhs_shape: shape,
                slack: r * (1.0 - (-s).exp()),
                ratio: r / shape,
                label: None,
            }
        })
        .collect();
    let fitted_c = fit_nodes(per_node.iter())?;
    let violations = violations_at(&per_node, fitted_c);
    Ok(InequalityReport {
        inequality_id: InequalityId::TruncatedRatio,
        claim: InequalityId::TruncatedRatio.claim().into(),
        spec: serde_json::to_value(spec).unwrap_or(Value::Null),
        grid: serde_json::to_value(grid).unwrap_or(Value::Null),
        passed: violations.is_empty() && fitted_c.is_finite() && fitted_c > 0.0,
        per_node,
        fitted_c,
        validation_c: None,
        stability_limit: STABILITY_LIMIT,
        excluded_nodes: excluded,
        violations,
        breakdown: vec![Breakdown { label: "exponent_C2".into(), fitted_c: c2, validation_c: None, nodes: kept.len() }],
        mc_meta: Some(McMeta { n_per_node: mc.n, max_std_err: 0.0, steps_per_path: vec![1; grid.times.len()] }),
        seed: Some(mc.seed),
        details: json!({"C1": fitted_c, "C2": c2, "bandwidths": kdes.iter().map(|k| k.bandwidth()).collect::<Vec<_>>()}),
        timestamp: None,
    })
}

// ---------------------------------------------------------------------------
// Young and Jensen

/// Outcome of one finite inequality instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`.
    pub margin: f64,
    pub holds: bool,
}

/// Tolerated negative margin.
pub const MARGIN_TOL: f64 = 1e-12;

fn normalized(mu: &[f64]) -> Result<Vec<f64>> {
    if mu.is_empty() || mu.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
        return invalid("measure weights must be finite and nonnegative");
    }
    let s: f64 = mu.iter().sum();
    if !(s > 0.0) {
        return invalid("measure has zero mass");
    }
    Ok(mu.iter().map(|m| m / s).collect())
}

/// `μ(gh) ≤ μ(g log g) + log μ(e^h)` after renormalizing `μ` and `g`
/// (`0 log 0 = 0`; `log μ(e^h)` by log-sum-exp).
pub fn young_inequality_check(mu: &[f64], g: &[f64], h: &[f64]) -> Result<Margin> {
    if mu.len() != g.len() || mu.len() != h.len() {
        return invalid("mu, g and h lengths differ");
    }
    let mu = normalized(mu)?;
    if g.iter().chain(h).any(|&v| !(v >= 0.0 && v.is_finite())) {
        return invalid("g and h must be finite and nonnegative");
    }
    let mg: f64 = mu.iter().zip(g).map(|(m, v)| m * v).sum();
    if !(mg > 0.0) {
        return invalid("g has zero mean");
    }
    let g: Vec<f64> = g.iter().map(|v| v / mg).collect();
    let check: f64 = mu.iter().zip(&g).map(|(m, v)| m * v).sum();
    if (check - 1.0).abs() > 1e-12 {
        return Err(Error::Normalization(format!("mu(g) = {check} after renormalization")));
    }
    let lhs: f64 = mu.iter().zip(&g).zip(h).map(|((m, a), b)| m * a * b).sum();
    let ent: f64 = mu.iter().zip(&g).map(|(m, &a)| if a > 0.0 { m * a * a.ln() } else { 0.0 }).sum();
    let hmax = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = hmax + mu.iter().zip(h).map(|(m, b)| m * (b - hmax).exp()).sum::<f64>().ln();
    let rhs = ent + lse;
    Ok(Margin { lhs, rhs, margin: rhs - lhs, holds: rhs - lhs >= -MARGIN_TOL })
}

/// `μ(log f) ≤ log μ(f)` for `f > 0`.
pub fn jensen_check(mu: &[f64], f: &[f64]) -> Result<Margin> {
    if mu.len() != f.len() {
        return invalid("mu and f lengths differ");
    }
    let mu = normalized(mu)?;
    if f.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return invalid("f must be finite and positive");
    }
    let lhs: f64 = mu.iter().zip(f).map(|(m, v)| m * v.ln()).sum();
    let fmax = f.iter().copied().fold(0.0, f64::max);
    let rhs = fmax.ln() + mu.iter().zip(f).map(|(m, v)| m * v / fmax).sum::<f64>().ln();
    Ok(Margin { lhs, rhs, margin: rhs - lhs, holds: rhs - lhs >= -MARGIN_TOL })
}

/// Cap on `e^h` in random Young instances.
pub const EXP_CAP: f64 = 1e6;

fn suite_report(id: InequalityId, margins: Vec<Margin>, seed: SeedSpec, dims: Vec<usize>) -> InequalityReport {
    let per_node: Vec<NodeResult> = margins
        .iter()
        .enumerate()
        .map(|(i, m)| NodeResult {
            t: 0.0,
            x: Vec::new(),
            y: Vec::new(),
            z: None,
            lhs: m.lhs,
            rhs_shape: m.rhs,
            slack: MARGIN_TOL,
            ratio: if m.rhs > 0.0 { m.lhs / m.rhs } else { 0.0 },
            label: Some(format!("instance {i}; size {}", dims[i])),
        })
        .collect();
    let violations: Vec<Violation> = margins
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.holds)
        .map(|(index, m)| Violation { index, lhs: m.lhs, bound: m.rhs, excess: -m.margin })
        .collect();
    let min_margin = margins.iter().map(|m| m.margin).fold(f64::INFINITY, f64::min);
    InequalityReport {
        inequality_id: id,
        claim: id.claim().into(),
        spec: Value::Null,
        grid: json!({"instances": margins.len(), "max_size": dims.iter().max()}),
        per_node,
        // the inequality has constant one; margins carry the evidence
        fitted_c: 1.0,
        validation_c: None,
        stability_limit: STABILITY_LIMIT,
        excluded_nodes: 0,
        passed: violations.is_empty(),
        violations,
        breakdown: Vec::new(),
        mc_meta: None,
        seed: Some(seed),
        details: json!({"min_margin": min_margin, "tolerance": MARGIN_TOL}),
        timestamp: None,
    }
}

/// Random weights on up to 20 atoms; about a fifth of the `g` entries are
/// zero and `h = log min(e^u, 10^6)` with `u` up to 20.
pub fn young_suite(instances: usize, seed: SeedSpec) -> Result<InequalityReport> {
    let mut rng = seed.rng();
    let mut margins = Vec::with_capacity(instances);
    let mut dims = Vec::with_capacity(instances);
    for _ in 0..instances {
        let k = rng.random_range(1..=20);
        let mu: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let mut g: Vec<f64> = (0..k).map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.sample::<f64, _>(Exp1) }).collect();
        if g.iter().all(|&v| v == 0.0) {
            g[0] = 1.0;
        }
        let h: Vec<f64> = (0..k).map(|_| (20.0 * rng.random::<f64>()).exp().min(EXP_CAP).ln()).collect();
        margins.push(young_inequality_check(&mu, &g, &h)?);
        dims.push(k);
    }
    Ok(suite_report(InequalityId::Young, margins, seed, dims))
}

/// Random weights on up to 20 atoms with log-normal `f`.
pub fn jensen_suite(instances: usize, seed: SeedSpec) -> Result<InequalityReport> {
    let mut rng = seed.rng();
    let mut margins = Vec::with_capacity(instances);
    let mut dims = Vec::with_capacity(instances);
    for _ in 0..instances {
        let k = rng.random_range(1..=20);
        let mu: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let f: Vec<f64> = (0..k).map(|_| (2.0 * rng.sample::<f64, _>(StandardNormal)).exp()).collect();
        margins.push(jensen_check(&mu, &f)?);
        dims.push(k);
    }
    Ok(suite_report(InequalityId::Jensen, margins, seed, dims))
}
