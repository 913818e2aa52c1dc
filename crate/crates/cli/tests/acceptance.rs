//! Acceptance gate: twelve end-to-end criteria, one PASS/FAIL line each.
//! Lines go straight to stdout so they show up without `--nocapture`.

use std::f64::consts::PI;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use harnack_cli::{canonical, default_probes, read_artifact};
use harnack_core::density::{
    check_truncated_bounds, envelope_phi, estimate_bound_constants_refined, stable_density, truncated_density_estimate,
};
use harnack_core::harnack_lab::{
    jensen_suite, ratio_lemma_constants, verify_harnack, verify_log_harnack, verify_p_harnack, verify_ratio_lemma,
    young_suite, HarnackGrid, InequalityId, InequalityReport, McConfig, RatioGrid, MARGIN_TOL, STABILITY_LIMIT,
};
use harnack_core::levy_core::{mu_hat_exponent_quadrature, Driver, OUSpec, StableSpec, TruncatedStableSpec};
use harnack_core::ou_semigroup::{factorization_check, TestFunction, FACTOR_TOL};
use harnack_core::sampling::{sample_rot_stable, sample_sym_stable_1d, SeedSpec};
use harnack_core::stats::{empirical_cf, ks_one_sample, Bandwidth, StableCdfTable};
use nalgebra::DMatrix;
use rand::Rng;
use serde_json::json;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cauchy() -> StableSpec {
    StableSpec::new(1, 1.0, 1.0 / PI).unwrap()
}

fn seed(s: u64) -> SeedSpec {
    SeedSpec::new(s, 0)
}

fn harnack_fs() -> Vec<TestFunction> {
    vec![
        TestFunction::ball(vec![0.0], 1.0),
        TestFunction::bump(vec![0.0], 1.0),
        TestFunction::ball(vec![2.0], 0.5),
    ]
}

fn c01_cauchy_density() -> Outcome {
    let spec = cauchy();
    let mut worst = 0.0f64;
    for t in [0.5, 1.0, 2.0] {
        for i in 0..=400 {
            let x = -10.0 + 0.05 * i as f64;
            let exact = t / (PI * (t * t + x * x));
            let got = stable_density(&spec, t, &[x]).map_err(|e| e.to_string())?;
            worst = worst.max((got - exact).abs() / exact);
        }
    }
    check(worst <= 1e-6, format!("max relative error {worst:.2e} over 1203 nodes (tol 1e-6)"))
}

fn c02_scaling() -> Outcome {
    let mut worst = 0.0f64;
    let mut nodes = 0;
    for (k, (d, a)) in [(1usize, 0.5), (1, 1.5), (2, 1.0)].into_iter().enumerate() {
        let spec = StableSpec::new(d, a, 1.0).unwrap();
        let mut rng = SeedSpec::new(2, k as u64).rng();
        for _ in 0..1000 {
            let t = 10f64.powf(rng.random_range(-1.0..0.5));
            let r = 10f64.powf(rng.random_range(-2.0..1.5));
            let th = rng.random_range(0.0..2.0 * PI);
            let x: Vec<f64> = if d == 1 { vec![if rng.random::<bool>() { r } else { -r }] } else { vec![r * th.cos(), r * th.sin()] };
            let s = t.powf(-1.0 / a);
            let lhs = stable_density(&spec, t, &x).map_err(|e| e.to_string())?;
            let xs: Vec<f64> = x.iter().map(|v| v * s).collect();
            let rhs = t.powf(-(d as f64) / a) * stable_density(&spec, 1.0, &xs).map_err(|e| e.to_string())?;
            worst = worst.max((lhs - rhs).abs() / rhs);
            nodes += 1;
        }
    }
    check(worst <= 1e-6, format!("max relative error {worst:.2e} on {nodes} nodes (tol 1e-6)"))
}

fn c03_two_sided_bound() -> Outcome {
    let specs = [cauchy(), StableSpec::new(1, 0.5, 1.0).unwrap(), StableSpec::new(1, 1.5, 1.0).unwrap(), StableSpec::new(2, 1.0, 1.0).unwrap()];
    let train_t = [0.1, 0.5, 1.0, 2.0];
    let val_t: [f64; 7] = [0.13, 0.21, 0.37, 0.66, 0.83, 1.3, 1.77];
    let mut parts = Vec::new();
    let mut total_viol = 0;
    let mut total_nodes = 0;
    for (k, spec) in specs.iter().enumerate() {
        let (d, a) = (spec.d(), spec.alpha());
        let train_x: Vec<Vec<f64>> = std::iter::once(0.0)
            .chain((0..200).map(|i| 1e-4 * 1e6f64.powf(i as f64 / 199.0)))
            .map(|r| {
                let mut v = vec![0.0; d];
                v[0] = r;
                v
            })
            .collect();
        let b = estimate_bound_constants_refined(spec, &train_t, &train_x).map_err(|e| e.to_string())?;
        let mut rng = SeedSpec::new(3, k as u64).rng();
        for &t in &val_t {
            let s = t.powf(1.0 / a);
            let mut us: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..20.0)).collect();
            us.extend([1.0, 20.0]);
            for u in us {
                let r = u * s;
                let th = rng.random_range(0.0..2.0 * PI);
                let x = if d == 1 { vec![r] } else { vec![r * th.cos(), r * th.sin()] };
                let p = stable_density(spec, t, &x).map_err(|e| e.to_string())?;
                let phi = envelope_phi(d, a, t, r);
                if p < b.c1_hat * phi * (1.0 - 1e-9) || p > b.c2_hat * phi * (1.0 + 1e-9) {
                    total_viol += 1;
                }
                total_nodes += 1;
            }
        }
        parts.push(format!("(d={d},a={a}) c1={:.4} c2={:.4}", b.c1_hat, b.c2_hat));
    }
    check(total_viol == 0, format!("{total_viol} violations on {total_nodes} validation nodes; {}", parts.join(", ")))
}

fn c04_ratio_lemma() -> Outcome {
    let specs = [cauchy(), StableSpec::new(1, 0.5, 1.0).unwrap(), StableSpec::new(1, 1.5, 1.0).unwrap(), StableSpec::new(2, 1.0, 1.0).unwrap()];
    let grid = RatioGrid::default_grid();
    let mut ok = true;
    let mut parts = Vec::new();
    for spec in &specs {
        let k = ratio_lemma_constants(spec, &grid).map_err(|e| e.to_string())?;
        let r = verify_ratio_lemma(spec, &k, &grid).map_err(|e| e.to_string())?;
        let n = r.per_node.len();
        ok &= r.passed && r.violations.is_empty() && n >= 10_000;
        parts.push(format!("(d={},a={}) nodes={n} violations={}", spec.d(), spec.alpha(), r.violations.len()));
    }
    check(ok, parts.join(", "))
}

fn c05_sampler_fidelity() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, a) in [0.5, 1.0, 1.5].into_iter().enumerate() {
        let table = StableCdfTable::new(a).map_err(|e| e.to_string())?;
        let x = sample_sym_stable_1d(a, 1.0, 100_000, SeedSpec::new(5, k as u64)).map_err(|e| e.to_string())?;
        let (dn, p) = ks_one_sample(&x, |y| table.eval(y));
        ok &= p >= 0.01;
        parts.push(format!("KS a={a}: D={dn:.2e} p={p:.3}"));
    }
    let spec = StableSpec::new(2, 1.2, 0.5).unwrap();
    let t = 0.7;
    let s = sample_rot_stable(&spec, t, 100_000, seed(55)).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (xi, th) in [([0.8, 0.3], 1.1f64), ([0.0, 1.5], 2.0), ([-0.4, 0.4], 0.5)] {
        let rot = [th.cos() * xi[0] - th.sin() * xi[1], th.sin() * xi[0] + th.cos() * xi[1]];
        let (ca, cb) = (empirical_cf(&s, &xi), empirical_cf(&s, &rot));
        let target = (-t * spec.symbol(&xi)).exp();
        let z_target = (ca.re - target).abs() / ca.se_re;
        let z_rot = (ca.re - cb.re).abs() / (ca.se_re.powi(2) + cb.se_re.powi(2)).sqrt();
        worst = worst.max(z_target).max(z_rot);
    }
    ok &= worst <= 3.0;
    parts.push(format!("d=2 cf probes max {worst:.2} se (tol 3)"));
    check(ok, parts.join(", "))
}

fn harnack_line(r: &InequalityReport) -> String {
    format!(
        "{}: C={:.4} val={:.4} viol={} excl={}",
        r.inequality_id,
        r.fitted_c,
        r.validation_c.unwrap_or(f64::NAN),
        r.violations.len(),
        r.excluded_nodes
    )
}

fn harnack_ok(r: &InequalityReport) -> bool {
    r.fitted_c.is_finite()
        && r.fitted_c >= 1.0
        && r.violations.is_empty()
        && r.validation_c.is_some_and(|v| v <= STABILITY_LIMIT * r.fitted_c)
        && r.passed
}

fn c06_harnack() -> Outcome {
    let mc = McConfig { n: 100_000, seed: seed(6) };
    let (fit, val) = (HarnackGrid::default_fit(), HarnackGrid::default_validation());
    let mut ok = true;
    let mut parts = Vec::new();
    for a in [0.0, 0.5, 1.0] {
        let spec = OUSpec::new(DMatrix::from_element(1, 1, -a), Driver::Stable(cauchy())).unwrap();
        let r = verify_harnack(&spec, &harnack_fs(), &fit, Some(&val), mc).map_err(|e| e.to_string())?;
        let want = if a == 0.0 { InequalityId::HarnackStable } else { InequalityId::HarnackOu };
        ok &= harnack_ok(&r) && r.inequality_id == want;
        parts.push(format!("|A|={a} {}", harnack_line(&r)));
    }
    check(ok, parts.join("; "))
}

fn c07_p_harnack() -> Outcome {
    let mc = McConfig { n: 100_000, seed: seed(6) };
    let (fit, val) = (HarnackGrid::default_fit(), HarnackGrid::default_validation());
    let spec = OUSpec::levy(Driver::Stable(cauchy()));
    let base = verify_harnack(&spec, &harnack_fs(), &fit, Some(&val), mc).map_err(|e| e.to_string())?;
    let p = verify_p_harnack(&spec, &harnack_fs(), &fit, &[1.001, 1.5, 2.0, 4.0], Some(&val), mc).map_err(|e| e.to_string())?;
    let mut ok = p.violations.is_empty() && p.details["power_jensen_failures"] == 0;
    let mut parts = Vec::new();
    for b in &p.breakdown {
        ok &= b.fitted_c.is_finite() && b.fitted_c > 0.0;
        parts.push(format!("{} C={:.4}", b.label, b.fitted_c));
    }
    // Monte Carlo error of the Harnack constant: the largest per-node slack in C units
    let mc_err = base.per_node.iter().map(|n| n.slack / n.rhs_shape).fold(0.0, f64::max);
    let near = p.breakdown.iter().find(|b| b.label == "p=1.001").map(|b| b.fitted_c).unwrap_or(f64::NAN);
    let diff = (near - base.fitted_c).abs();
    ok &= diff <= mc_err;
    parts.push(format!("|C(1.001) - C| = {diff:.2e} (MC error {mc_err:.2e})"));
    check(ok, parts.join(", "))
}

fn c08_truncated_bounds() -> Outcome {
    let spec = TruncatedStableSpec::new(1, 1.0, 1.0 / PI, 1.0).unwrap();
    let times = [0.1, 0.25, 0.5, 1.0];
    let grids = times
        .iter()
        .enumerate()
        .map(|(k, &t)| truncated_density_estimate(&spec, t, 1_000_000, Bandwidth::Auto, SeedSpec::new(8, k as u64)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let b = check_truncated_bounds(&spec, &grids).map_err(|e| e.to_string())?;
    let tail = [b.c3, b.c4, b.c5, b.c6];
    let finite = [b.c1, b.c2, b.c7].iter().all(|v| v.is_finite() && *v > 0.0) && tail.iter().all(|v| v.is_some_and(f64::is_finite));
    let clean = b.violations == Default::default();
    let conv: Vec<String> = b
        .convexity
        .iter()
        .map(|c| format!("t={}:{}", c.t, c.passed.map_or("unresolved", |p| if p { "ok" } else { "FAIL" })))
        .collect();
    let f = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.3}"));
    check(
        finite && clean && b.convexity_passed,
        format!(
            "c1={:.3} c2={:.3} c3={} c4={} c5={} c6={} c7={:.3}, violations {:?}, convexity [{}]",
            b.c1,
            b.c2,
            f(b.c3),
            f(b.c4),
            f(b.c5),
            f(b.c6),
            b.c7,
            b.violations,
            conv.join(" ")
        ),
    )
}

fn c09_log_harnack() -> Outcome {
    let tr = TruncatedStableSpec::new(1, 1.0, 1.0 / PI, 1.0).unwrap();
    let fs = vec![
        TestFunction::one_plus(TestFunction::ball(vec![0.0], 1.0)),
        TestFunction::one_plus(TestFunction::bump(vec![0.0], 0.5)),
        TestFunction::ExpCap { level: 20.0 },
    ];
    let mc = McConfig { n: 100_000, seed: seed(9) };
    let mut ok = true;
    let mut parts = Vec::new();
    for a in [0.0, 0.5] {
        let spec = OUSpec::new(DMatrix::from_element(1, 1, -a), Driver::Truncated(tr.clone())).unwrap();
        let r = verify_log_harnack(&spec, &fs, &HarnackGrid::default_fit(), Some(&HarnackGrid::default_validation()), mc)
            .map_err(|e| e.to_string())?;
        let diag = r.breakdown.iter().find(|b| b.label == "diagonal").map(|b| b.fitted_c);
        ok &= r.fitted_c.is_finite() && diag == Some(0.0) && r.violations.is_empty() && r.passed;
        let extra: Vec<String> = r
            .breakdown
            .iter()
            .filter(|b| ["proof_form", "entropy"].contains(&b.label.as_str()))
            .map(|b| format!("{}={:.3}", b.label, b.fitted_c))
            .collect();
        parts.push(format!(
            "|A|={a}: C={:.4} val={:.4} diagonal C={:?} {}",
            r.fitted_c,
            r.validation_c.unwrap_or(f64::NAN),
            diag,
            extra.join(" ")
        ));
    }
    check(ok, parts.join("; "))
}

fn c10_young_jensen() -> Outcome {
    let y = young_suite(1000, seed(10)).map_err(|e| e.to_string())?;
    let j = jensen_suite(1000, seed(11)).map_err(|e| e.to_string())?;
    let my = y.details["min_margin"].as_f64().unwrap();
    let mj = j.details["min_margin"].as_f64().unwrap();
    check(
        y.violations.is_empty() && j.violations.is_empty() && my >= -MARGIN_TOL && mj >= -MARGIN_TOL && y.per_node.len() == 1000 && j.per_node.len() == 1000,
        format!("young min margin {my:.3e}, jensen min margin {mj:.3e} over 1000 instances each"),
    )
}

fn c11_factorization() -> Outcome {
    let mut ok = true;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_a0 = 0.0f64;
    let mut checks = 0;
    for (d, alpha) in [(1usize, 1.0), (2, 1.5)] {
        let floor = StableSpec::new(d, alpha, 1.0).unwrap();
        let probes = default_probes(d);
        let mut drifts = Vec::new();
        for a in [0.0, 0.5, 1.0] {
            drifts.push(DMatrix::from_diagonal_element(d, d, -a));
            if d == 2 && a > 0.0 {
                drifts.push(DMatrix::from_row_slice(2, 2, &[0.0, a, -a, 0.0]));
            }
        }
        for drift in drifts {
            let spec = OUSpec::new(drift, Driver::Stable(floor.clone())).unwrap();
            for t in [0.25, 1.0] {
                let r = factorization_check(&spec, t, &probes).map_err(|e| e.to_string())?;
                ok &= r.passed && r.probes.len() == 10;
                for p in &r.probes {
                    worst = worst.max(p.pi_hat.abs() - 1.0);
                }
                if spec.op_norm() == 0.0 {
                    for xi in &probes {
                        let got = (-mu_hat_exponent_quadrature(&spec, xi, t).map_err(|e| e.to_string())?).exp();
                        let want = (-t * floor.symbol(xi)).exp();
                        worst_a0 = worst_a0.max((got - want).abs() / want);
                    }
                }
                checks += 1;
            }
        }
    }
    ok &= worst <= FACTOR_TOL && worst_a0 <= 1e-8;
    check(ok, format!("{checks} (spec, t) cases x 10 probes: max |pi|-1 = {worst:.2e}, A=0 relative error {worst_a0:.2e}"))
}

fn c12_determinism() -> Outcome {
    let tmp = std::env::temp_dir().join(format!("harnack-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&tmp).map_err(|e| e.to_string())?;
    let spec = tmp.join("spec.json");
    let grid = tmp.join("grid.json");
    std::fs::write(&spec, json!({"d": 1, "alpha": 1.0, "c": 1.0 / PI, "A": [[-0.5]]}).to_string()).unwrap();
    std::fs::write(
        &grid,
        json!({
            "n": 20000,
            "harnack": {"times": [0.25, 1.0, 2.0], "separations": [0.0, 1.0, 2.0]},
            "validation": {"times": [0.5], "separations": [0.5, 1.5]},
            "ratio": {"times": [0.5, 1.0], "separations": [0.0, 1.0], "z_per_ray": 16, "z_min": 0.01},
            "instances": 200
        })
        .to_string(),
    )
    .unwrap();
    let run = |threads: &str| -> Result<Vec<serde_json::Value>, String> {
        let out = tmp.join(format!("out{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_harnack-lab"))
            .args(["verify", "--inequality", "all", "--spec"])
            .arg(&spec)
            .arg("--grid")
            .arg(&grid)
            .args(["--seed", "12", "--threads", threads, "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if status.status.code() != Some(0) {
            return Err(format!("threads {threads}: exit {:?}", status.status.code()));
        }
        let mut files: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        files.iter().map(|f| read_artifact(Path::new(f)).map(canonical).map_err(|e| e.to_string())).collect()
    };
    let one = run("1")?;
    let four = run("4")?;
    let _ = std::fs::remove_dir_all(&tmp);
    check(one == four && one.len() >= 6, format!("{} artifacts canonically identical for --threads 1 and 4", one.len()))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome, u64); 12] = [
        ("1 Cauchy density oracle", c01_cauchy_density, 10),
        ("2 scaling law", c02_scaling, 60),
        ("3 two-sided stable bound", c03_two_sided_bound, 120),
        ("4 ratio lemma", c04_ratio_lemma, 300),
        ("5 sampler fidelity", c05_sampler_fidelity, 120),
        ("6 Harnack inequality", c06_harnack, 600),
        ("7 power Harnack", c07_p_harnack, 600),
        ("8 truncated density bounds", c08_truncated_bounds, 300),
        ("9 log-Harnack", c09_log_harnack, 600),
        ("10 Young and Jensen suites", c10_young_jensen, 5),
        ("11 factorization check", c11_factorization, 30),
        ("12 determinism across threads", c12_determinism, 60),
    ];
    let mut failed = Vec::new();
    for (name, f, budget) in criteria {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(budget);
        let (ok, detail) = match res {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        let line = format!(
            "[{}] criterion {name}: {detail} ({:.1}s, budget {budget}s{})",
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            if in_time { "" } else { ", over budget" }
        );
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
        if !ok {
            failed.push(line);
        }
    }
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
