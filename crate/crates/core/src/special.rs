//! Special functions: Bessel functions of integer and half-integer order,
//! sphere areas and the sphere-averaged cosine.

use std::f64::consts::PI;

pub use statrs::function::gamma::{gamma, ln_gamma};

/// Surface area of the unit sphere S^{d-1} in R^d.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// `1 - cos(x)` without cancellation for small `x`.
#[inline]
pub fn one_minus_cos(x: f64) -> f64 {
    let s = (0.5 * x).sin();
    2.0 * s * s
}

/// Bessel function of the first kind J_ν(x) for ν = `two_nu / 2`, where
/// `two_nu` is any integer ≥ -1 (integer orders and half-integer orders
/// down to -1/2) or a negative even integer. `x ≥ 0`.
pub fn bessel_j(two_nu: i32, x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if two_nu % 2 == 0 {
        let n = two_nu / 2;
        if n < 0 {
            let v = bessel_j_int(n.unsigned_abs(), x);
            return if n % 2 == 0 { v } else { -v };
        }
        bessel_j_int(n as u32, x)
    } else {
        assert!(two_nu >= -1, "half-integer order below -1/2 is not supported");
        // ν = n + 1/2 with n = (two_nu - 1) / 2 ≥ -1
        let n = (two_nu - 1) / 2;
        if x == 0.0 {
            return if n < 0 { f64::INFINITY } else { 0.0 };
        }
        (2.0 * x / PI).sqrt() * spherical_j(n, x)
    }
}

/// Integer-order J_n via the periodic trapezoid rule on Bessel's integral
/// (spectrally accurate) for moderate arguments and Hankel's asymptotic
/// expansion for large ones.
fn bessel_j_int(n: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if x < 30.0 + n as f64 {
        let m = (x.ceil() as usize + n as usize + 40).next_power_of_two().max(64);
        let h = 2.0 * PI / m as f64;
        let nf = n as f64;
        let mut s = 0.0;
        for k in 0..m {
            let tau = h * k as f64;
            s += (nf * tau - x * tau.sin()).cos();
        }
        return s / m as f64;
    }
    hankel_asymptotic(n as f64, x)
}

fn hankel_asymptotic(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let j = (2 * k - 1) as f64;
        term *= (mu - j * j) / (k as f64 * 8.0 * x);
        let a = term.abs();
        if a > prev || a < 1e-17 {
            break;
        }
        prev = a;
        // k odd → Q, k even → P, signs alternate in pairs
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
    }
    let chi = x - (0.5 * nu + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Spherical Bessel j_n(x) for n ≥ -1 (j_{-1}(x) = cos x / x).
fn spherical_j(n: i32, x: f64) -> f64 {
    if n == -1 {
        return x.cos() / x;
    }
    if x < n as f64 + 2.0 {
        // power series
        let mut double_fact = 1.0;
        for k in 0..=n {
            double_fact *= (2 * k + 1) as f64;
        }
        let lead = x.powi(n) / double_fact;
        let mut term = 1.0;
        let mut s = 1.0;
        let y = -0.5 * x * x;
        for k in 1..100 {
            term *= y / (k as f64 * (2 * n + 2 * k + 1) as f64);
            s += term;
            if term.abs() < 1e-17 * s.abs() {
                break;
            }
        }
        return lead * s;
    }
    let mut jm1 = x.cos() / x;
    let mut j0 = x.sin() / x;
    for k in 0..n {
        let next = (2 * k + 1) as f64 / x * j0 - jm1;
        jm1 = j0;
        j0 = next;
    }
    j0
}

/// Average of cos(⟨ξ, z⟩) over the unit sphere in R^d evaluated at
/// |ξ||z| = x, i.e. Γ(d/2)(2/x)^ν J_ν(x) with ν = d/2 - 1.
pub fn sphere_mean_cos(d: usize, x: f64) -> f64 {
    let x = x.abs();
    match d {
        1 => return x.cos(),
        3 => {
            return if x < 1e-4 { 1.0 - x * x / 6.0 } else { x.sin() / x };
        }
        _ => {}
    }
    let h = d as f64 / 2.0;
    if x < 2.0 {
        let y = -0.25 * x * x;
        let mut term = 1.0;
        let mut s = 1.0;
        for k in 1..60 {
            term *= y / (k as f64 * (h + k as f64 - 1.0));
            s += term;
            if term.abs() < 1e-17 {
                break;
            }
        }
        return s;
    }
    let two_nu = d as i32 - 2;
    gamma(h) * (2.0 / x).powf(h - 1.0) * bessel_j(two_nu, x)
}

/// `1 - sphere_mean_cos(d, x)` accurate for small `x`.
pub fn sphere_mean_one_minus_cos(d: usize, x: f64) -> f64 {
    let x = x.abs();
    if d == 1 {
        return one_minus_cos(x);
    }
    if x < 0.5 {
        let h = d as f64 / 2.0;
        let y = -0.25 * x * x;
        let mut term = 1.0;
        let mut s = 0.0;
        for k in 1..40 {
            term *= y / (k as f64 * (h + k as f64 - 1.0));
            s -= term;
            if term.abs() < 1e-18 * s.abs() {
                break;
            }
        }
        return s;
    }
    1.0 - sphere_mean_cos(d, x)
}

/// `1 - sphere_mean_cos(d, x) - x²/(2d)`, i.e. the part of the averaged
/// `1 - cos` beyond its quadratic term, accurate for small `x`.
pub fn sphere_mean_cos_remainder(d: usize, x: f64) -> f64 {
    let x = x.abs();
    if x < 0.5 {
        let h = d as f64 / 2.0;
        let y = -0.25 * x * x;
        let mut term = y / h;
        let mut s = 0.0;
        for k in 2..40 {
            term *= y / (k as f64 * (h + k as f64 - 1.0));
            s -= term;
            if term.abs() < 1e-18 * s.abs() {
                break;
            }
        }
        return s;
    }
    sphere_mean_one_minus_cos(d, x) - x * x / (2.0 * d as f64)
}

/// Positive zeros of J_ν, ν = two_nu / 2, in increasing order.
pub fn bessel_zeros(two_nu: i32) -> impl Iterator<Item = f64> {
    let nu = two_nu as f64 / 2.0;
    let mut last = 0.0_f64;
    (1u32..).map(move |k| {
        let z = match two_nu {
            -1 => (k as f64 - 0.5) * PI,
            1 => k as f64 * PI,
            _ => refine_zero(two_nu, mcmahon(nu, k)),
        };
        let z = if z > last + 1e-9 { z } else { mcmahon(nu, k).max(last + PI / 2.0) };
        last = z;
        z
    })
}

fn mcmahon(nu: f64, k: u32) -> f64 {
    let mu = 4.0 * nu * nu;
    let beta = (k as f64 + 0.5 * nu - 0.25) * PI;
    let b8 = 8.0 * beta;
    beta - (mu - 1.0) / b8 - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * b8.powi(3))
}

fn refine_zero(two_nu: i32, guess: f64) -> f64 {
    let nu = two_nu as f64 / 2.0;
    let mut x = guess;
    for _ in 0..8 {
        let j = bessel_j(two_nu, x);
        let dj = bessel_j(two_nu - 2, x) - nu / x * j;
        if dj == 0.0 {
            break;
        }
        let step = j / dj;
        x -= step;
        if step.abs() < 1e-14 * x {
            break;
        }
    }
    if (x - guess).abs() < 1.0 && x > 0.0 {
        x
    } else {
        guess
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j0_known_values() {
        // Abramowitz & Stegun table values
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j(0, 10.0) - (-0.245_935_764_451_348_3)).abs() < 1e-14);
        assert!((bessel_j(2, 2.5) - 0.497_094_102_464_274_4).abs() < 1e-14);
    }

    #[test]
    fn asymptotic_matches_trapezoid_at_switch() {
        for &x in &[29.0, 30.5, 45.0] {
            for n in 0..3u32 {
                let trap = {
                    let m = 256;
                    let h = 2.0 * PI / m as f64;
                    (0..m).map(|k| (n as f64 * h * k as f64 - x * (h * k as f64).sin()).cos()).sum::<f64>() / m as f64
                };
                assert!((trap - hankel_asymptotic(n as f64, x)).abs() < 1e-13, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn half_integer_orders() {
        let x = 3.7_f64;
        assert!((bessel_j(1, x) - (2.0 / (PI * x)).sqrt() * x.sin()).abs() < 1e-15);
        assert!((bessel_j(-1, x) - (2.0 / (PI * x)).sqrt() * x.cos()).abs() < 1e-15);
        let j32 = (2.0 / (PI * x)).sqrt() * (x.sin() / x - x.cos());
        assert!((bessel_j(3, x) - j32).abs() < 1e-14);
        let small = 0.3_f64;
        let j32s = (2.0 / (PI * small)).sqrt() * (small.sin() / small - small.cos());
        assert!((bessel_j(3, small) - j32s).abs() < 1e-15);
    }

    #[test]
    fn sphere_area_values() {
        assert!((sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn sphere_mean_cos_continuity() {
        for d in 1..6 {
            let a = sphere_mean_cos(d, 2.0 - 1e-9);
            let b = sphere_mean_cos(d, 2.0 + 1e-9);
            assert!((a - b).abs() < 1e-8, "d={d}");
            let c = sphere_mean_one_minus_cos(d, 0.5 - 1e-12);
            let e = sphere_mean_one_minus_cos(d, 0.5 + 1e-12);
            assert!((c - e).abs() < 1e-12, "d={d}");
        }
        // d = 2 reduces to J0
        assert!((sphere_mean_cos(2, 7.0) - bessel_j(0, 7.0)).abs() < 1e-14);
        for d in 1..5 {
            let a = sphere_mean_cos_remainder(d, 0.5 - 1e-12);
            let b = sphere_mean_cos_remainder(d, 0.5 + 1e-12);
            assert!((a - b).abs() < 1e-13, "d={d}");
            // leading term -x^4 / (8 d (d + 2))
            let x = 1e-3_f64;
            let lead = -x.powi(4) / (8.0 * d as f64 * (d as f64 + 2.0));
            assert!((sphere_mean_cos_remainder(d, x) / lead - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn zeros_are_zeros() {
        for two_nu in [-1, 0, 1, 2, 4] {
            for z in bessel_zeros(two_nu).take(30) {
                assert!(bessel_j(two_nu, z).abs() < 1e-12, "two_nu={two_nu} z={z}");
            }
        }
        let first: Vec<f64> = bessel_zeros(0).take(2).collect();
        assert!((first[0] - 2.404_825_557_695_773).abs() < 1e-12);
        assert!((first[1] - 5.520_078_110_286_311).abs() < 1e-12);
    }
}
