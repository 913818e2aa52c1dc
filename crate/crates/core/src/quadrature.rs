//! Adaptive Gauss–Kronrod quadrature, Wynn epsilon acceleration and a
//! panel integrator for oscillatory integrands on half-lines.

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_351_996,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];

// Gauss weights paired with XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOpts {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOpts {
    fn default() -> Self {
        Self {
            abs_tol: 1e-14,
            rel_tol: 1e-11,
            max_intervals: 2000,
        }
    }
}

impl QuadOpts {
    pub fn with_rel(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }
}

/// One 21-point Kronrod rule with the embedded 10-point Gauss estimate.
/// Returns `(kronrod, |kronrod - gauss|)`.
pub fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[10];
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * half, ((kron - gauss) * half).abs())
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// Bisects the interval with the largest error estimate until the total
/// error is below `max(abs_tol, rel_tol * |I|)`. Endpoint algebraic
/// singularities are handled by repeated bisection.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOpts, context: &str) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return integrate(f, b, a, opts, context).map(|v| -v);
    }
    let (v, e) = gk21(&f, a, b);
    let mut segs = vec![Segment { a, b, value: v, error: e }];
    let mut total = v;
    let mut total_err = e;
    loop {
        if !total.is_finite() {
            return Err(Error::Quadrature {
                context: context.to_string(),
                lo: a,
                hi: b,
                estimate: total,
                error: total_err,
            });
        }
        if total_err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            return Ok(total);
        }
        let (idx, worst) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, s)| (i, *s))
            .expect("segment list is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if segs.len() >= opts.max_intervals || mid <= worst.a || mid >= worst.b {
            // Accept a result whose error is only limited by roundoff.
            if total_err <= 1e3 * f64::EPSILON * total.abs().max(opts.abs_tol) {
                return Ok(total);
            }
            return Err(Error::Quadrature {
                context: context.to_string(),
                lo: worst.a,
                hi: worst.b,
                estimate: total,
                error: total_err,
            });
        }
        let (v1, e1) = gk21(&f, worst.a, mid);
        let (v2, e2) = gk21(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        segs[idx] = Segment { a: worst.a, b: mid, value: v1, error: e1 };
        segs.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
        // Recompute the error sum from time to time to avoid drift.
        if segs.len() % 64 == 0 {
            total_err = segs.iter().map(|s| s.error).sum();
            total = segs.iter().map(|s| s.value).sum();
        }
    }
}

const MAX_WYNN_COLUMNS: usize = 48;

/// Wynn's epsilon algorithm applied to a stream of partial sums.
#[derive(Debug, Default, Clone)]
pub struct WynnEpsilon {
    table: Vec<f64>,
    count: usize,
}

impl WynnEpsilon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Push the next partial sum and return the current accelerated estimate.
    pub fn push(&mut self, partial_sum: f64) -> f64 {
        // `table[k]` holds eps_k^{(m-k)} for the last partial sum index m.
        let old = std::mem::take(&mut self.table);
        let mut diag = Vec::with_capacity(old.len() + 1);
        diag.push(partial_sum);
        for k in 0..old.len().min(MAX_WYNN_COLUMNS) {
            let below = if k == 0 { 0.0 } else { old[k - 1] };
            let diff = diag[k] - old[k];
            if diff == 0.0 || !diff.is_finite() {
                break;
            }
            let value = below + 1.0 / diff;
            if !value.is_finite() {
                break;
            }
            diag.push(value);
        }
        self.table = diag;
        self.count += 1;
        self.estimate()
    }

    /// Best available estimate: the last even-column entry on the diagonal.
    pub fn estimate(&self) -> f64 {
        let n = self.table.len();
        if n == 0 {
            return 0.0;
        }
        let last_even = if (n - 1) % 2 == 0 { n - 1 } else { n - 2 };
        self.table[last_even]
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// Options for [`integrate_panels`].
#[derive(Debug, Clone, Copy)]
pub struct PanelOpts {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub min_panels: usize,
    pub max_panels: usize,
    /// Consecutive panels with negligible contribution before stopping.
    pub quiet_panels: usize,
}

impl Default for PanelOpts {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-300,
            min_panels: 6,
            max_panels: 20_000,
            quiet_panels: 3,
        }
    }
}

/// Result of a panel integration.
#[derive(Debug, Clone, Copy)]
pub struct PanelResult {
    pub value: f64,
    pub panels: usize,
    /// True if the sum was terminated by the accelerated estimate rather
    /// than by decay of the integrand.
    pub accelerated: bool,
}

/// Integrates `f` over `[start, ∞)` panel by panel, with panel boundaries
/// supplied by `breaks` (strictly increasing, all > `start`). Each panel is
/// integrated adaptively; the sequence of partial sums is accelerated with
/// Wynn's epsilon algorithm.
///
/// `envelope(s)` bounds `|f|` on `[s, ∞)` up to a slowly varying factor and
/// is used to detect when the remaining tail is negligible.
pub fn integrate_panels<F, B, E>(
    f: F,
    start: f64,
    breaks: B,
    envelope: E,
    opts: PanelOpts,
    context: &str,
) -> Result<PanelResult>
where
    F: Fn(f64) -> f64,
    B: IntoIterator<Item = f64>,
    E: Fn(f64) -> f64,
{
    let quad = QuadOpts {
        abs_tol: 1e-300,
        rel_tol: 1e-13,
        max_intervals: 500,
    };
    let mut wynn = WynnEpsilon::new();
    let mut sum = 0.0;
    let mut lo = start;
    let mut scale = 0.0_f64;
    let mut quiet = 0usize;
    let mut stable = 0usize;
    let mut last_est = f64::NAN;
    let mut panels = 0usize;
    for hi in breaks {
        if hi <= lo {
            continue;
        }
        let piece = integrate(&f, lo, hi, quad, context)?;
        sum += piece;
        panels += 1;
        scale = scale.max(piece.abs()).max(sum.abs());
        let est = wynn.push(sum);
        let width = hi - lo;
        let tol = opts.abs_tol.max(opts.rel_tol * sum.abs().max(1e-300));
        // Tail negligible: both the panel contribution and the envelope over
        // a few panels are below tolerance.
        if panels >= opts.min_panels && piece.abs() <= tol && envelope(hi) * width <= tol {
            quiet += 1;
            if quiet >= opts.quiet_panels {
                return Ok(PanelResult { value: sum, panels, accelerated: false });
            }
        } else {
            quiet = 0;
        }
        if panels >= opts.min_panels && est.is_finite() && last_est.is_finite() {
            let tol_acc = opts.abs_tol.max(opts.rel_tol * est.abs()).max(4.0 * f64::EPSILON * scale);
            if (est - last_est).abs() <= tol_acc {
                stable += 1;
                if stable >= 3 {
                    return Ok(PanelResult { value: est, panels, accelerated: true });
                }
            } else {
                stable = 0;
            }
        }
        last_est = est;
        lo = hi;
        if panels >= opts.max_panels {
            break;
        }
    }
    Err(Error::Quadrature {
        context: format!("{context}: panel sum did not converge after {panels} panels"),
        lo: start,
        hi: lo,
        estimate: sum,
        error: (last_est - sum).abs(),
    })
}
