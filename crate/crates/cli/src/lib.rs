//! Front end of `harnack-lab`: loads the process and grid documents, runs
//! one of the `density`, `sample`, `estimate` or `verify` pipelines and
//! writes JSON/CSV artifacts that carry the spec, seed and tool version.

pub mod config;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use harnack_core::density::{
    check_truncated_bounds, density_grid, estimate_bound_constants, truncated_density_estimate, BoundConstants,
    DensityGrid, TruncatedBoundConstants,
};
use harnack_core::harnack_lab::{
    jensen_suite, ratio_lemma_constants, shape_time_for, verify_harnack, verify_log_harnack, verify_p_harnack,
    verify_ratio_lemma, verify_truncated_ratio, young_suite, HarnackGrid, InequalityId, InequalityReport, McConfig,
    RatioGrid, ShapeTime,
};
use harnack_core::levy_core::{Driver, OUSpec};
use harnack_core::ou_semigroup::{
    factorization_check, sample_ou, sample_ou_noise, FactorizationReport, OUPathConfig, SemigroupEstimate,
    TestFunction,
};
use harnack_core::sampling::SeedSpec;
use harnack_core::stats::Bandwidth;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use config::{read_doc, GridDoc, ProcessDoc};

pub const TOOL: &str = "harnack-lab";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAIL: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] harnack_core::error::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser, Debug, Clone)]
#[command(name = "harnack-lab", version, about = "Densities, samplers and Harnack-type inequality checks for stable-driven OU processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Subcommand, Debug, Clone)]
pub enum CliCommand {
    /// Density tables of the driving process.
    Density(CommonArgs),
    /// Raw endpoint samples of the OU process.
    Sample(CommonArgs),
    /// Monte Carlo semigroup values and the factorization check.
    Estimate(CommonArgs),
    /// Inequality checks with fitted constants.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Inequality id, or `all` for every one that applies to the spec.
        #[arg(long, default_value = "all")]
        inequality: String,
    },
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Process description (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Grid override document (JSON).
    #[arg(long)]
    pub grid: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    fn json(self) -> bool {
        self != Format::Csv
    }
    fn csv(self) -> bool {
        self != Format::Json
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Density,
    Sample,
    Estimate,
    Verify,
}

/// Which inequalities `verify` runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    All,
    One(InequalityId),
}

impl std::str::FromStr for Selection {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        if s == "all" {
            return Ok(Selection::All);
        }
        s.parse::<InequalityId>().map(Selection::One).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Everything a run depends on.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub spec: ProcessDoc,
    pub grid: GridDoc,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub format: Format,
    pub threads: Option<usize>,
    pub inequality: Selection,
}

impl RunConfig {
    pub fn from_cli(cli: &Cli) -> Result<Self, CliError> {
        let (command, common, inequality) = match &cli.command {
            CliCommand::Density(c) => (CommandKind::Density, c, Selection::All),
            CliCommand::Sample(c) => (CommandKind::Sample, c, Selection::All),
            CliCommand::Estimate(c) => (CommandKind::Estimate, c, Selection::All),
            CliCommand::Verify { common, inequality } => (CommandKind::Verify, common, inequality.parse()?),
        };
        let spec: ProcessDoc = read_doc(&common.spec, "spec")?;
        let grid: GridDoc = match &common.grid {
            Some(p) => read_doc(p, "grid")?,
            None => GridDoc::default(),
        };
        if common.threads == Some(0) {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        Ok(RunConfig {
            command,
            spec,
            grid,
            seed: common.seed,
            output_dir: common.out.clone(),
            format: common.format,
            threads: common.threads,
            inequality,
        })
    }
}

/// Common envelope of every JSON artifact.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub tool: String,
    pub tool_version: String,
    pub command: CommandKind,
    pub spec: ProcessDoc,
    pub grid: GridDoc,
    pub seed: SeedSpec,
    /// Excluded from canonical comparisons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub result: T,
}

/// JSON value of an artifact with the timestamps removed.
pub fn canonical(mut v: Value) -> Value {
    if let Value::Object(m) = &mut v {
        m.remove("timestamp");
        if let Some(Value::Object(r)) = m.get_mut("result") {
            r.remove("timestamp");
        }
    }
    v
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityResult {
    /// Tables describe the driving Lévy process, not the OU process.
    pub process: String,
    pub tables: Vec<DensityGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_constants: Option<BoundConstants>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated_bounds: Option<TruncatedBoundConstants>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleBatch {
    pub t: f64,
    pub n: usize,
    pub n_steps: usize,
    pub x0: Vec<f64>,
    pub mean: Vec<f64>,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleResult {
    pub batches: Vec<SampleBatch>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimates: Vec<SemigroupEstimate>,
    pub factorization: Vec<FactorizationReport>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummaryLine {
    pub inequality_id: InequalityId,
    pub passed: bool,
    #[serde(rename = "fitted_C")]
    pub fitted_c: f64,
    #[serde(rename = "validation_C")]
    pub validation_c: Option<f64>,
    pub violations: usize,
    pub excluded_nodes: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Skipped {
    pub inequality_id: InequalityId,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifySummary {
    pub ran: Vec<SummaryLine>,
    pub skipped: Vec<Skipped>,
    pub passed: bool,
}

/// Exit code and files written.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub artifacts: Vec<PathBuf>,
    pub messages: Vec<String>,
}

struct Writer<'a> {
    cfg: &'a RunConfig,
    seed: SeedSpec,
    timestamp: String,
    written: Vec<PathBuf>,
}

impl Writer<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, result: T) -> Result<(), CliError> {
        let art = Artifact {
            tool: TOOL.into(),
            tool_version: TOOL_VERSION.into(),
            command: self.cfg.command,
            spec: self.cfg.spec.clone(),
            grid: self.cfg.grid.clone(),
            seed: self.seed,
            timestamp: Some(self.timestamp.clone()),
            result,
        };
        let p = self.path(name);
        let f = BufWriter::new(File::create(&p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?);
        serde_json::to_writer_pretty(f, &art).map_err(|e| CliError::Io(e.to_string()))?;
        self.written.push(p);
        Ok(())
    }

    fn csv(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
        let p = self.path(name);
        let mut f = BufWriter::new(File::create(&p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?);
        body(&mut f)?;
        self.written.push(p);
        Ok(())
    }
}

/// Runs the configured pipeline, capping parallelism at `threads`.
pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match cfg.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            pool.install(|| run_inner(cfg))
        }
        None => run_inner(cfg),
    }
}

fn run_inner(cfg: &RunConfig) -> Result<Outcome, CliError> {
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", cfg.output_dir.display())))?;
    let mut w = Writer {
        cfg,
        seed: SeedSpec::new(cfg.seed, 0),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        written: Vec::new(),
    };
    let (exit_code, messages) = match cfg.command {
        CommandKind::Density => run_density(&mut w)?,
        CommandKind::Sample => run_sample(&mut w)?,
        CommandKind::Estimate => run_estimate(&mut w)?,
        CommandKind::Verify => run_verify(&mut w)?,
    };
    Ok(Outcome { exit_code, artifacts: w.written, messages })
}

fn default_points(d: usize) -> Vec<Vec<f64>> {
    (0..=40)
        .map(|i| {
            let mut p = vec![0.0; d];
            p[0] = if d == 1 { -10.0 + 0.5 * i as f64 } else { 0.25 * i as f64 };
            p
        })
        .collect()
}

fn run_density(w: &mut Writer) -> Result<(i32, Vec<String>), CliError> {
    let (doc, grid) = (&w.cfg.spec, &w.cfg.grid);
    let ou = doc.ou()?;
    let mut result = DensityResult { process: "driver".into(), tables: Vec::new(), bound_constants: None, truncated_bounds: None };
    match ou.driver() {
        Driver::Stable(s) => {
            let times = grid.times.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
            let points = grid.points.clone().unwrap_or_else(|| default_points(s.d()));
            for &t in &times {
                result.tables.push(density_grid(s, t, points.clone())?);
            }
            result.bound_constants = Some(estimate_bound_constants(s, &times, &points)?);
        }
        Driver::Truncated(s) => {
            let times = grid.times.clone().unwrap_or_else(|| vec![0.1, 0.25, 0.5, 1.0]);
            let n = grid.n.unwrap_or(1_000_000);
            let bw = grid.bandwidth.unwrap_or(Bandwidth::Auto);
            for (k, &t) in times.iter().enumerate() {
                result.tables.push(truncated_density_estimate(s, t, n, bw, w.seed.substream(k as u64))?);
            }
            result.truncated_bounds = Some(check_truncated_bounds(s, &result.tables)?);
        }
        Driver::Dominating(_) => {
            return Err(CliError::Config("field `driver`: density tables need a stable or truncated driver".into()))
        }
    }
    if w.cfg.format.csv() {
        for (k, table) in result.tables.iter().enumerate() {
            w.csv(&format!("density_{k}.csv"), |f| table.write_csv(f))?;
        }
    }
    if w.cfg.format.json() {
        w.json("density.json", &result)?;
    }
    Ok((EXIT_PASS, vec![format!("density: {} tables", result.tables.len())]))
}

fn run_sample(w: &mut Writer) -> Result<(i32, Vec<String>), CliError> {
    let (doc, grid) = (&w.cfg.spec, &w.cfg.grid);
    let ou = doc.ou()?;
    let d = ou.d();
    let times = grid.times.clone().unwrap_or_else(|| vec![1.0]);
    let n = grid.n.unwrap_or(10_000);
    let x0 = grid.x0.clone().unwrap_or_else(|| vec![0.0; d]);
    if x0.len() != d {
        return Err(CliError::Config(format!("field `x0`: expected {d} coordinates")));
    }
    let mut batches = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let cfg = OUPathConfig::for_spec(&ou, t);
        let s = sample_ou(&ou, &x0, cfg, n, w.seed.substream(k as u64))?;
        let mut files = Vec::new();
        if w.cfg.format.json() {
            let name = format!("samples_{k}.f64");
            let side = serde_json::json!({
                "tool": TOOL, "tool_version": TOOL_VERSION, "spec": doc, "seed": w.seed.substream(k as u64),
                "t": t, "n": n, "d": d, "layout": "row-major little-endian f64",
            });
            s.write_dump(&w.path(&name), &side)?;
            w.written.push(w.path(&name));
            files.push(name);
        }
        if w.cfg.format.csv() {
            let name = format!("samples_{k}.csv");
            w.csv(&name, |f| {
                use std::io::Write;
                let cols: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
                writeln!(f, "{}", cols.join(","))?;
                for row in s.rows() {
                    let v: Vec<String> = row.iter().map(|a| format!("{a:e}")).collect();
                    writeln!(f, "{}", v.join(","))?;
                }
                Ok(())
            })?;
            files.push(name);
        }
        let mean = (0..d).map(|i| s.rows().map(|r| r[i]).sum::<f64>() / n as f64).collect();
        batches.push(SampleBatch { t, n, n_steps: cfg.n_steps, x0: x0.clone(), mean, files });
    }
    w.json("samples.json", SampleResult { batches })?;
    Ok((EXIT_PASS, vec![format!("sample: {} batches of {n}", times.len())]))
}

fn default_test_functions(d: usize) -> Vec<TestFunction> {
    let mut far = vec![0.0; d];
    far[0] = 2.0;
    vec![TestFunction::ball(vec![0.0; d], 1.0), TestFunction::bump(vec![0.0; d], 1.0), TestFunction::ball(far, 0.5)]
}

fn default_log_test_functions(d: usize) -> Vec<TestFunction> {
    vec![
        TestFunction::one_plus(TestFunction::ball(vec![0.0; d], 1.0)),
        TestFunction::one_plus(TestFunction::bump(vec![0.0; d], 0.5)),
        TestFunction::ExpCap { level: 20.0 },
    ]
}

/// Ten frequencies with norms log-spaced on `[0.1, 10]`, cycling through
/// the axes.
pub fn default_probes(d: usize) -> Vec<Vec<f64>> {
    (0..10)
        .map(|i| {
            let mut xi = vec![0.0; d];
            xi[i % d] = 0.1 * 100f64.powf(i as f64 / 9.0);
            xi
        })
        .collect()
}

fn run_estimate(w: &mut Writer) -> Result<(i32, Vec<String>), CliError> {
    let (doc, grid) = (&w.cfg.spec, &w.cfg.grid);
    let ou = doc.ou()?;
    let d = ou.d();
    let times = grid.times.clone().unwrap_or_else(|| vec![0.5, 1.0]);
    let n = grid.n.unwrap_or(100_000);
    let points = grid.points.clone().unwrap_or_else(|| {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        vec![vec![0.0; d], e]
    });
    let fs = grid.test_functions.clone().unwrap_or_else(|| default_test_functions(d));
    for f in &fs {
        f.validate(d)?;
    }
    if points.iter().any(|p| p.len() != d) {
        return Err(CliError::Config(format!("field `points`: expected {d} coordinates per point")));
    }
    let mut estimates = Vec::new();
    let mut factorization = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let noise = sample_ou_noise(&ou, OUPathConfig::for_spec(&ou, t), n, w.seed.substream(k as u64))?;
        for f in &fs {
            for x in &points {
                estimates.push(noise.estimate(f, x));
            }
        }
        if t <= 1.0 && ou.driver().stable_floor().is_some() {
            let probes = grid.probes.clone().unwrap_or_else(|| default_probes(d));
            factorization.push(factorization_check(&ou, t, &probes)?);
        }
    }
    let passed = factorization.iter().all(|r| r.passed);
    let mut messages = vec![format!("estimate: {} values", estimates.len())];
    if w.cfg.format.csv() {
        w.csv("estimates.csv", |f| {
            use std::io::Write;
            writeln!(f, "t,x,f,mean,std_err,n")?;
            for e in &estimates {
                let x: Vec<String> = e.x.iter().map(|v| format!("{v:e}")).collect();
                writeln!(f, "{:e},{},{},{:e},{:e},{}", e.t, x.join(";"), e.f_tag.replace(',', ";"), e.mean, e.std_err, e.n)?;
            }
            Ok(())
        })?;
    }
    let bad: Vec<&FactorizationReport> = factorization.iter().filter(|r| !r.passed).collect();
    if !bad.is_empty() {
        w.json("violations_factorization.json", &bad)?;
        messages.push(format!("factorization: FAIL at {} times", bad.len()));
    }
    w.json("estimates.json", EstimateResult { estimates, factorization: factorization.clone(), passed })?;
    Ok((if passed { EXIT_PASS } else { EXIT_FAIL }, messages))
}

/// Why `id` cannot run on this spec, if it cannot.
pub fn not_applicable(id: InequalityId, doc: &ProcessDoc, ou: &OUSpec) -> Option<String> {
    let floor = ou.driver().stable_floor().is_some();
    let pure_stable = shape_time_for(ou) == ShapeTime::Full;
    match id {
        InequalityId::HarnackStable if !pure_stable => Some("needs a stable driver and A = 0".into()),
        InequalityId::HarnackOu if pure_stable => Some("spec is a pure stable process; use harnack_stable".into()),
        InequalityId::HarnackOu | InequalityId::PHarnack | InequalityId::RatioLemma if !floor => {
            Some("needs a driver dominating a stable law".into())
        }
        InequalityId::TruncatedRatio if !(doc.driver == config::DriverKind::Truncated && doc.d == 1) => {
            Some("needs a one-dimensional truncated driver".into())
        }
        _ => None,
    }
}

fn run_one(id: InequalityId, ou: &OUSpec, grid: &GridDoc, seed: SeedSpec) -> Result<InequalityReport, CliError> {
    let d = ou.d();
    let mc = McConfig { n: grid.n.unwrap_or(100_000), seed };
    let hg = grid.harnack.clone().unwrap_or_else(HarnackGrid::default_fit);
    let vg = grid.validation.clone().unwrap_or_else(HarnackGrid::default_validation);
    let fs = grid.test_functions.clone().unwrap_or_else(|| default_test_functions(d));
    Ok(match id {
        InequalityId::HarnackStable | InequalityId::HarnackOu => verify_harnack(ou, &fs, &hg, Some(&vg), mc)?,
        InequalityId::PHarnack => {
            let p = grid.p.clone().unwrap_or_else(|| vec![1.5, 2.0, 4.0]);
            verify_p_harnack(ou, &fs, &hg, &p, Some(&vg), mc)?
        }
        InequalityId::LogHarnack => {
            let lf = grid.log_test_functions.clone().unwrap_or_else(|| default_log_test_functions(d));
            verify_log_harnack(ou, &lf, &hg, Some(&vg), mc)?
        }
        InequalityId::RatioLemma => {
            let floor = ou.driver().stable_floor().expect("checked applicability");
            let rg = grid.ratio.clone().unwrap_or_else(RatioGrid::default_grid);
            let k = ratio_lemma_constants(floor, &rg)?;
            verify_ratio_lemma(floor, &k, &rg)?
        }
        InequalityId::TruncatedRatio => {
            let Driver::Truncated(s) = ou.driver() else { unreachable!("checked applicability") };
            let rg = grid.ratio.clone().unwrap_or_else(RatioGrid::default_truncated);
            verify_truncated_ratio(s, &rg, McConfig { n: mc.n.max(10_000), seed })?
        }
        InequalityId::Young => young_suite(grid.instances.unwrap_or(1000), seed)?,
        InequalityId::Jensen => jensen_suite(grid.instances.unwrap_or(1000), seed)?,
    })
}

fn run_verify(w: &mut Writer) -> Result<(i32, Vec<String>), CliError> {
    let doc = w.cfg.spec.clone();
    let ou = doc.ou()?;
    let ids: Vec<InequalityId> = match w.cfg.inequality {
        Selection::All => InequalityId::ALL.to_vec(),
        Selection::One(id) => {
            if let Some(why) = not_applicable(id, &doc, &ou) {
                return Err(CliError::Config(format!("inequality {id} does not apply to this spec: {why}")));
            }
            vec![id]
        }
    };
    let mut summary = VerifySummary { ran: Vec::new(), skipped: Vec::new(), passed: true };
    let mut messages = Vec::new();
    for id in ids {
        if let Some(reason) = not_applicable(id, &doc, &ou) {
            summary.skipped.push(Skipped { inequality_id: id, reason });
            continue;
        }
        let pos = InequalityId::ALL.iter().position(|&i| i == id).unwrap_or(0) as u64;
        let report = run_one(id, &ou, &w.cfg.grid, w.seed.substream(pos))?;
        if w.cfg.format.json() {
            w.json(&format!("report_{id}.json"), &report)?;
        }
        if w.cfg.format.csv() {
            w.csv(&format!("nodes_{id}.csv"), |f| report.write_csv(f))?;
        }
        if !report.passed {
            w.json(
                &format!("violations_{id}.json"),
                serde_json::json!({
                    "inequality_id": id,
                    "fitted_C": report.fitted_c,
                    "validation_C": report.validation_c,
                    "stability_limit": report.stability_limit,
                    "violations": report.violations,
                }),
            )?;
        }
        messages.push(format!(
            "{id}: {} fitted_C={:.6e} validation_C={} violations={}",
            if report.passed { "PASS" } else { "FAIL" },
            report.fitted_c,
            report.validation_c.map_or("-".into(), |v| format!("{v:.6e}")),
            report.violations.len()
        ));
        summary.passed &= report.passed;
        summary.ran.push(SummaryLine {
            inequality_id: id,
            passed: report.passed,
            fitted_c: report.fitted_c,
            validation_c: report.validation_c,
            violations: report.violations.len(),
            excluded_nodes: report.excluded_nodes,
        });
    }
    let passed = summary.passed;
    w.json("summary.json", summary)?;
    Ok((if passed { EXIT_PASS } else { EXIT_FAIL }, messages))
}

/// Entry point shared by the binary and the tests.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let result = RunConfig::from_cli(&cli).and_then(|cfg| run(&cfg));
    match result {
        Ok(o) => {
            for m in &o.messages {
                println!("{m}");
            }
            o.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

/// Reads an artifact back as JSON.
pub fn read_artifact(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
