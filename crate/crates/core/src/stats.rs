//! Goodness-of-fit statistics and empirical characteristic functions.

use serde::{Deserialize, Serialize};

use crate::density::{standard_cdf_1d, standard_density};
use crate::error::{invalid, Result};
use crate::levy_core::compute_sigma;
use crate::sampling::Samples;

/// Empirical characteristic function with standard errors of both parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCf {
    pub re: f64,
    pub im: f64,
    pub se_re: f64,
    pub se_im: f64,
}

pub fn empirical_cf(samples: &Samples, xi: &[f64]) -> EmpiricalCf {
    let n = samples.len() as f64;
    let (mut sc, mut ss, mut sc2, mut ss2) = (0.0, 0.0, 0.0, 0.0);
    for row in samples.rows() {
        let phase: f64 = row.iter().zip(xi).map(|(a, b)| a * b).sum();
        let (s, c) = phase.sin_cos();
        sc += c;
        ss += s;
        sc2 += c * c;
        ss2 += s * s;
    }
    let (mc, ms) = (sc / n, ss / n);
    let var_c = (sc2 / n - mc * mc).max(0.0) * n / (n - 1.0).max(1.0);
    let var_s = (ss2 / n - ms * ms).max(0.0) * n / (n - 1.0).max(1.0);
    EmpiricalCf { re: mc, im: ms, se_re: (var_c / n).sqrt(), se_im: (var_s / n).sqrt() }
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (-1)^{k-1} e^{-2k²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample KS statistic and asymptotic p-value.
pub fn ks_one_sample(x: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &xi) in v.iter().enumerate() {
        let f = cdf(xi);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sn = n.sqrt();
    (d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d))
}

/// Two-sample KS statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    (d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d))
}

/// Tabulated CDF of the standard symmetric stable law (characteristic
/// function `exp(-|ξ|^α)`), cubic Hermite between nodes using the density
/// as derivative, and the power tail outside the table.
#[derive(Clone, Debug)]
pub struct StableCdfTable {
    alpha: f64,
    nodes: Vec<f64>,
    cdf: Vec<f64>,
    pdf: Vec<f64>,
    tail_coeff: f64,
}

impl StableCdfTable {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return invalid("alpha must lie in (0, 2)");
        }
        // y = sinh(u) spreads nodes over many decades
        let m = 4000;
        let u_max = 14.0;
        let nodes: Vec<f64> = (0..=m).map(|i| (u_max * i as f64 / m as f64).sinh()).collect();
        use rayon::prelude::*;
        let cdf = nodes.par_iter().map(|&y| standard_cdf_1d(alpha, y)).collect::<Result<Vec<_>>>()?;
        let pdf = nodes.par_iter().map(|&y| standard_density(1, alpha, y)).collect::<Result<Vec<_>>>()?;
        // 1 - F(y) ≈ y^{-α} / (α σ)
        let tail_coeff = 1.0 / (alpha * compute_sigma(1, alpha)?);
        Ok(StableCdfTable { alpha, nodes, cdf, pdf, tail_coeff })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `P(X ≤ y)` for the standard law.
    pub fn eval(&self, y: f64) -> f64 {
        let a = y.abs();
        let last = self.nodes.len() - 1;
        let upper = if a >= self.nodes[last] {
            1.0 - self.tail_coeff * a.powf(-self.alpha)
        } else {
            let i = self.nodes.partition_point(|&v| v <= a).max(1) - 1;
            let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
            let h = x1 - x0;
            let s = (a - x0) / h;
            let (h00, h10, h01, h11) = (
                (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
                s * (1.0 - s) * (1.0 - s),
                s * s * (3.0 - 2.0 * s),
                s * s * (s - 1.0),
            );
            h00 * self.cdf[i] + h10 * h * self.pdf[i] + h01 * self.cdf[i + 1] + h11 * h * self.pdf[i + 1]
        };
        if y >= 0.0 {
            upper
        } else {
            1.0 - upper
        }
    }
}

/// Kernel bandwidth: Silverman's rule on the central 98% of the sample, or
/// a fixed value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Auto,
    Fixed(f64),
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(s.len() - 1);
    s[i] + (pos - i as f64) * (s[j] - s[i])
}

/// `0.9 min(sd, IQR/1.34) n^{-1/5}` of sorted data.
pub fn silverman_bandwidth(s: &[f64]) -> f64 {
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let sd = (s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let iqr = quantile_sorted(s, 0.75) - quantile_sorted(s, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// One-dimensional density estimate at a list of points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeEstimate {
    pub values: Vec<f64>,
    pub std_err: Vec<f64>,
    pub bandwidth: f64,
    /// 1% and 99% sample quantiles; outside them values are local
    /// histogram counts.
    pub central: [f64; 2],
}

/// Gaussian kernel estimate on the central 98% of the sample (linear
/// binning, 10 bins per bandwidth), windowed histogram outside it with
/// half-width `max(h, |x - median|/20)`.
#[derive(Clone, Debug)]
pub struct Kde1d {
    sorted: Vec<f64>,
    q_lo: f64,
    q_hi: f64,
    med: f64,
    h: f64,
    b0: f64,
    delta: f64,
    bins: Vec<f64>,
}

impl Kde1d {
    pub fn new(samples: &[f64], bandwidth: Bandwidth) -> Result<Self> {
        if samples.len() < 2 {
            return invalid("density estimate needs at least two samples");
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let (q_lo, q_hi) = (quantile_sorted(&s, 0.01), quantile_sorted(&s, 0.99));
        let med = quantile_sorted(&s, 0.5);
        let h = match bandwidth {
            Bandwidth::Fixed(h) if h > 0.0 => h,
            Bandwidth::Fixed(h) => return invalid(format!("bandwidth must be positive, got {h}")),
            Bandwidth::Auto => {
                let a = s.partition_point(|&v| v < q_lo);
                let b = s.partition_point(|&v| v <= q_hi);
                silverman_bandwidth(&s[a..b])
            }
        };
        if !(h > 0.0 && h.is_finite()) {
            return invalid("degenerate sample: zero bandwidth");
        }
        let reach = 6.0 * h;
        let (b0, b1) = (q_lo - reach, q_hi + reach);
        let nb = (((b1 - b0) / (h / 10.0)).ceil() as usize).clamp(2, 4_000_000);
        let delta = (b1 - b0) / (nb - 1) as f64;
        let mut bins = vec![0.0f64; nb];
        let lo_i = s.partition_point(|&v| v < b0);
        let hi_i = s.partition_point(|&v| v <= b1);
        for &v in &s[lo_i..hi_i] {
            let pos = ((v - b0) / delta).clamp(0.0, (nb - 1) as f64);
            let i = (pos.floor() as usize).min(nb - 2);
            let w = pos - i as f64;
            bins[i] += 1.0 - w;
            bins[i + 1] += w;
        }
        Ok(Kde1d { sorted: s, q_lo, q_hi, med, h, b0, delta, bins })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn central(&self) -> [f64; 2] {
        [self.q_lo, self.q_hi]
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Estimate and standard error at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let n = self.sorted.len() as f64;
        let h = self.h;
        if x >= self.q_lo && x <= self.q_hi {
            let reach = 6.0 * h;
            let nb = self.bins.len();
            let i0 = ((x - reach - self.b0) / self.delta).floor().max(0.0) as usize;
            let i1 = (((x + reach - self.b0) / self.delta).ceil() as usize).min(nb - 1);
            let mut f = 0.0;
            for (i, &c) in self.bins.iter().enumerate().take(i1 + 1).skip(i0) {
                if c > 0.0 {
                    let z = (x - (self.b0 + i as f64 * self.delta)) / h;
                    f += c * (-0.5 * z * z).exp();
                }
            }
            let f = f / (n * h * (2.0 * std::f64::consts::PI).sqrt());
            let roughness = 0.5 / std::f64::consts::PI.sqrt();
            (f, (f * roughness / (n * h)).sqrt())
        } else {
            let w = h.max((x - self.med).abs() / 20.0);
            let s = &self.sorted;
            let count = (s.partition_point(|&v| v <= x + w) - s.partition_point(|&v| v < x - w)) as f64;
            (count / (n * 2.0 * w), count.sqrt() / (n * 2.0 * w))
        }
    }
}

/// [`Kde1d`] evaluated at a list of points.
pub fn kde_1d(samples: &[f64], bandwidth: Bandwidth, points: &[f64]) -> Result<KdeEstimate> {
    let k = Kde1d::new(samples, bandwidth)?;
    let (values, std_err) = points.iter().map(|&x| k.eval(x)).unzip();
    Ok(KdeEstimate { values, std_err, bandwidth: k.h, central: [k.q_lo, k.q_hi] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn kolmogorov_reference() {
        // Q(1.36) ≈ 0.049, Q(1.63) ≈ 0.0098
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.628) - 0.01).abs() < 1e-3);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn ks_detects_shift() {
        let a: Vec<f64> = (0..2000).map(|i| i as f64 / 2000.0).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 0.2).collect();
        assert!(ks_two_sample(&a, &b).1 < 1e-6);
        assert!(ks_two_sample(&a, &a).1 > 0.99);
        let (d, p) = ks_one_sample(&a, |x| x.clamp(0.0, 1.0));
        assert!(d <= 1.0 / 2000.0 + 1e-12 && p > 0.99);
    }

    #[test]
    fn cdf_table_matches_cauchy() {
        let t = StableCdfTable::new(1.0).unwrap();
        for y in [-1e7, -250.0, -3.0, -0.01, 0.0, 0.4, 7.0, 1e3, 5e6] {
            let want = 0.5 + f64::atan(y) / PI;
            assert!((t.eval(y) - want).abs() < 1e-9, "y={y}: {} vs {want}", t.eval(y));
        }
    }

    #[test]
    fn cdf_table_against_direct_inversion() {
        for a in [0.5, 1.5] {
            let t = StableCdfTable::new(a).unwrap();
            for y in [0.013, 0.7, 2.2, 31.0, 777.0] {
                let want = standard_cdf_1d(a, y).unwrap();
                assert!((t.eval(y) - want).abs() < 1e-9, "a={a} y={y}: {} vs {want}", t.eval(y));
            }
        }
    }

    #[test]
    fn cf_standard_error() {
        let s = Samples { d: 1, data: vec![0.0, PI] };
        let cf = empirical_cf(&s, &[1.0]);
        assert!(cf.re.abs() < 1e-15);
        // cos values ±1: unbiased variance 2, over n = 2
        assert!((cf.se_re - 1.0).abs() < 1e-12, "{}", cf.se_re);
    }

    #[test]
    fn kde_recovers_normal() {
        use crate::sampling::{generate, SeedSpec};
        use rand::Rng;
        use rand_distr::StandardNormal;
        let s = generate(200_000, 1, SeedSpec::new(7, 0), |rng, row| row[0] = rng.sample(StandardNormal));
        let pts = [-4.0, -2.5, -1.0, 0.0, 0.3, 1.7, 3.0];
        let est = kde_1d(&s.data, Bandwidth::Auto, &pts).unwrap();
        for (i, &x) in pts.iter().enumerate() {
            let want = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
            // smoothing bias h²f''/2 plus sampling noise
            let bias = 0.5 * est.bandwidth.powi(2) * (x * x - 1.0).abs() * want + 0.02 * want;
            assert!((est.values[i] - want).abs() < 4.0 * est.std_err[i] + bias, "x={x}: {} vs {want}", est.values[i]);
        }
    }

    #[test]
    fn quantiles_and_bandwidth() {
        let s: Vec<f64> = (0..=100).map(|i| i as f64).collect();
        assert_eq!(quantile_sorted(&s, 0.25), 25.0);
        assert_eq!(quantile_sorted(&s, 0.995), 99.5);
        let h = silverman_bandwidth(&s);
        assert!(h > 0.0 && h < 20.0);
        assert!(kde_1d(&[1.0, 1.0, 1.0], Bandwidth::Auto, &[1.0]).is_err());
        assert!(kde_1d(&s, Bandwidth::Fixed(-1.0), &[1.0]).is_err());
    }
}
