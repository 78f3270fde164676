//! The `penv` command line: subcommands, output files and exit codes.
//!
//! Exit codes: 0 on success, 1 when `diff` finds differences, 2 on invalid
//! input, 3 on numerical failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, Mode, RunConfig};
use crate::disc::AnalyticDisc;
use crate::envelope::{
    check_submean, envelope_grid, slice_lattice, upper_regularize, EnvelopeError, EnvelopeEstimate, SearchBudget,
    SubmeanReport, UpperRegularization,
};
use crate::field::{FieldError, ScalarField};
use crate::functional::QuadratureSpec;
use crate::hull::{hull_membership, psh_corpus, verify_certificate, CompactSet, HullError, HullOutcome};
use crate::oracle::{subharmonic_minorant, GridDomain, OracleError};
use crate::space::{ComplexPoint, SpaceError, SpaceModel};

#[derive(Parser, Debug)]
#[command(name = "penv", version, about = "Poisson envelopes by analytic disc search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Only report errors.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Envelope values on a grid of points.
    Envelope(RunArgs),
    /// Search for a hull membership certificate.
    Hull(RunArgs),
    /// Discrete largest subharmonic minorant in one variable.
    Oracle(RunArgs),
    /// Re-check a stored hull certificate.
    Verify(RunArgs),
    /// The built-in cross `zw = 0` scenario whose envelope is not upper
    /// semicontinuous.
    Counterexample(OptRunArgs),
    /// Compare the values of two results files.
    Diff(DiffArgs),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OptRunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DiffArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Largest absolute difference treated as equal.
    #[arg(long, default_value_t = 0.0)]
    pub tol: f64,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
    #[error("results files have different layouts: {0}")]
    SchemaMismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::SchemaMismatch(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{}: {e}", path.display()))
}

fn field_is_numerical(e: &FieldError) -> bool {
    matches!(e, FieldError::DomainError(_))
}

fn envelope_is_numerical(e: &EnvelopeError) -> bool {
    match e {
        EnvelopeError::Field(f) => field_is_numerical(f),
        EnvelopeError::AtPoint { source, .. } => envelope_is_numerical(source),
        EnvelopeError::Grid(v) => v.iter().any(envelope_is_numerical),
        EnvelopeError::Space(SpaceError::NotApplicable) => true,
        _ => false,
    }
}

impl From<EnvelopeError> for CliError {
    fn from(e: EnvelopeError) -> Self {
        if envelope_is_numerical(&e) {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<HullError> for CliError {
    fn from(e: HullError) -> Self {
        match e {
            HullError::Envelope(e) => e.into(),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::BadDomain(_) => CliError::Validation(e.to_string()),
            OracleError::Field(f) if !field_is_numerical(&f) => CliError::Validation(f.to_string()),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

/// A float that serializes infinities and NaN as strings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            F(f64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::F(v) => Ok(Num(v)),
            Raw::S(s) => match s.as_str() {
                "inf" => Ok(Num(f64::INFINITY)),
                "-inf" => Ok(Num(f64::NEG_INFINITY)),
                "nan" => Ok(Num(f64::NAN)),
                _ => Err(serde::de::Error::custom(format!("not a number: {s}"))),
            },
        }
    }
}

/// Run description embedded in every results file. Holds nothing that
/// varies between identical runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsManifest {
    pub tool: String,
    pub version: String,
    pub mode: Mode,
    pub seed: u64,
    pub config_hash: String,
    pub quadrature_m: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundOut {
    pub stage: String,
    pub value: Num,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub x: ComplexPoint,
    pub value: Num,
    pub witness: AnalyticDisc,
    pub rounds: Vec<RoundOut>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeResults {
    pub manifest: ResultsManifest,
    pub points: Vec<PointRecord>,
}

impl EnvelopeResults {
    pub fn new(manifest: ResultsManifest, est: &EnvelopeEstimate) -> Self {
        let points = est
            .points
            .iter()
            .zip(&est.values)
            .zip(est.witnesses.iter().zip(&est.diagnostics))
            .map(|((x, v), (w, d))| PointRecord {
                x: x.clone(),
                value: Num(*v),
                witness: w.clone(),
                rounds: d.rounds.iter().map(|r| RoundOut { stage: r.stage.clone(), value: Num(r.value) }).collect(),
                branch: d.branch.clone(),
            })
            .collect();
        Self { manifest, points }
    }
}

/// Wall-clock and environment details kept apart from the results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub mode: Mode,
    pub seed: u64,
    pub config_hash: String,
    pub threads: usize,
    pub wall_time_s: f64,
    pub outputs: Vec<PathBuf>,
}

/// `%.17g`-style formatting: 17 significant digits.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// CSV: coordinates as interleaved re/im columns, the value, the witness
/// degree and the value after each search round separated by `;`.
pub fn results_csv(r: &EnvelopeResults) -> String {
    let dim = r.points.first().map_or(0, |p| p.x.dim());
    let mut out = String::new();
    for c in 1..=dim {
        let _ = write!(out, "x{c}_re,x{c}_im,");
    }
    out.push_str("value,witness_degree,p_rounds\n");
    for p in &r.points {
        for z in &p.x.0 {
            let _ = write!(out, "{},{},", fmt17(z.re), fmt17(z.im));
        }
        let rounds: Vec<String> = p.rounds.iter().map(|x| fmt17(x.value.0)).collect();
        let _ = writeln!(out, "{},{},{}", fmt17(p.value.0), p.witness.degree, rounds.join(";"));
    }
    out
}

/// One row of a results CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub x: Vec<Complex64>,
    pub value: f64,
    pub witness_degree: usize,
    pub p_rounds: Vec<f64>,
}

pub fn parse_results_csv(src: &str) -> Result<Vec<CsvRow>, CliError> {
    let bad = |m: String| CliError::Validation(format!("csv: {m}"));
    let mut lines = src.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let ncols = header.split(',').count();
    if ncols < 3 || (ncols - 3) % 2 != 0 {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let dim = (ncols - 3) / 2;
    let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
    lines
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != ncols {
                return Err(bad(format!("row {line:?} has {} columns", cols.len())));
            }
            let x = (0..dim)
                .map(|c| Ok(Complex64::new(num(cols[2 * c])?, num(cols[2 * c + 1])?)))
                .collect::<Result<_, CliError>>()?;
            let p_rounds = if cols[ncols - 1].is_empty() {
                Vec::new()
            } else {
                cols[ncols - 1].split(';').map(num).collect::<Result<_, _>>()?
            };
            Ok(CsvRow {
                x,
                value: num(cols[ncols - 3])?,
                witness_degree: cols[ncols - 2].parse().map_err(|e| bad(format!("degree: {e}")))?,
                p_rounds,
            })
        })
        .collect()
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("results serialize");
    s.push('\n');
    s
}

struct Ctx {
    out: PathBuf,
    prefix: String,
    quiet: bool,
    written: Vec<PathBuf>,
}

impl Ctx {
    fn write(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(|e| io_err(&self.out, e))?;
        let path = self.out.join(name);
        fs::write(&path, body).map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    fn info(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn manifest(mode: Mode, cfg: &RunConfig, hash: &str) -> ResultsManifest {
    ResultsManifest {
        tool: "penv".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        mode,
        seed: cfg.seed,
        config_hash: hash.into(),
        quadrature_m: cfg.quadrature.m,
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    let (mode, config, out) = match &cli.command {
        Command::Diff(d) => return diff_command(d, cli.quiet),
        Command::Envelope(a) => (Mode::Envelope, Some(&a.config), &a.out),
        Command::Hull(a) => (Mode::Hull, Some(&a.config), &a.out),
        Command::Oracle(a) => (Mode::Oracle, Some(&a.config), &a.out),
        Command::Verify(a) => (Mode::Verify, Some(&a.config), &a.out),
        Command::Counterexample(a) => (Mode::Counterexample, a.config.as_ref(), &a.out),
    };
    let (cfg, hash) = match config {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
            let src = String::from_utf8(bytes.clone()).map_err(|e| io_err(path, e))?;
            (RunConfig::from_toml(&src)?, sha256_hex(&bytes))
        }
        None => (
            RunConfig::from_toml("seed = 0").expect("minimal config parses"),
            sha256_hex(b""),
        ),
    };
    cfg.validate(mode)?;
    let mut ctx = Ctx {
        out: out.clone().unwrap_or_else(|| cfg.output.dir.clone()),
        prefix: cfg.output.prefix.clone(),
        quiet: cli.quiet,
        written: Vec::new(),
    };
    let start = Instant::now();
    let code = match mode {
        Mode::Envelope => envelope_command(&cfg, &hash, &mut ctx)?,
        Mode::Hull => hull_command(&cfg, &hash, &mut ctx)?,
        Mode::Oracle => oracle_command(&cfg, &hash, &mut ctx)?,
        Mode::Verify => verify_command(&cfg, &hash, &mut ctx)?,
        Mode::Counterexample => counterexample_command(&cfg, &hash, &mut ctx)?,
    };
    let run = RunManifest {
        tool: "penv".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        mode,
        seed: cfg.seed,
        config_hash: hash,
        threads: rayon::current_num_threads(),
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: ctx.written.clone(),
    };
    ctx.write("manifest.json", &to_json(&run))?;
    Ok(code)
}

fn envelope_command(cfg: &RunConfig, hash: &str, ctx: &mut Ctx) -> Result<i32, CliError> {
    let space = cfg.space()?;
    let u = cfg.field(space.ambient_dim)?;
    let grid = cfg.grid()?;
    ctx.info(format!("envelope: {} points, field {u}", grid.len()));
    let est = envelope_grid(&u, &space, &grid, &cfg.budget(), &cfg.quadrature)?;
    let res = EnvelopeResults::new(manifest(Mode::Envelope, cfg, hash), &est);
    ctx.write(&format!("{}.json", ctx.prefix), &to_json(&res))?;
    ctx.write(&format!("{}.csv", ctx.prefix), &results_csv(&res))?;
    Ok(0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HullOut {
    Certificate(crate::hull::HullCertificate),
    NotFound { best_value: Num, witness: AnalyticDisc },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HullResults {
    pub manifest: ResultsManifest,
    pub assume_compact_hull: bool,
    pub outcome: HullOut,
}

fn hull_command(cfg: &RunConfig, hash: &str, ctx: &mut Ctx) -> Result<i32, CliError> {
    let h = cfg.hull.as_ref().expect("validated");
    let k = CompactSet::new(h.set.clone())?;
    let outcome = hull_membership(&k, &h.point, h.u_radius, h.eps, h.window.clone(), &cfg.budget(), &cfg.quadrature)?;
    let outcome = match outcome {
        HullOutcome::Certificate(c) => {
            ctx.info(format!("certificate found, exceptional measure {}", c.exceptional_measure));
            ctx.write("certificate.json", &to_json(&c))?;
            HullOut::Certificate(c)
        }
        HullOutcome::NotFound { best_value, witness } => {
            ctx.info(format!("no certificate, best value {best_value}"));
            HullOut::NotFound { best_value: Num(best_value), witness }
        }
    };
    let res = HullResults { manifest: manifest(Mode::Hull, cfg, hash), assume_compact_hull: h.assume_compact_hull, outcome };
    ctx.write(&format!("{}.json", ctx.prefix), &to_json(&res))?;
    Ok(0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub x: Complex64,
    pub envelope: Num,
    pub oracle: Num,
    pub difference: Num,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResults {
    pub manifest: ResultsManifest,
    pub domain: GridDomain,
    pub comparison: Vec<OracleRow>,
    pub max_difference: Option<Num>,
}

fn oracle_command(cfg: &RunConfig, hash: &str, ctx: &mut Ctx) -> Result<i32, CliError> {
    let o = cfg.oracle.as_ref().expect("validated");
    let u = cfg.field(1)?.decreasing_approximation(cfg.budget().truncation);
    let domain = if o.inner_radius > 0.0 {
        GridDomain::annulus(o.center, o.inner_radius, o.radius, o.n)?
    } else {
        GridDomain::disc(o.center, o.radius, o.n)?
    };
    let ug = domain.sample(&u)?;
    let v = subharmonic_minorant(&ug, &domain, o.tol, o.max_iters)?;
    let mut csv = String::from("re,im,active,u,v\n");
    for i in 0..domain.n {
        for j in 0..domain.n {
            let k = i * domain.n + j;
            let z = domain.node(i, j);
            let _ = writeln!(csv, "{},{},{},{},{}", fmt17(z.re), fmt17(z.im), domain.mask[k] as u8, fmt17(ug[k]), fmt17(v[k]));
        }
    }
    ctx.write(&format!("{}_oracle.csv", ctx.prefix), &csv)?;
    let mut comparison = Vec::new();
    if let Some(path) = &o.compare {
        let src = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let env: EnvelopeResults = serde_json::from_str(&src).map_err(|e| io_err(path, e))?;
        for p in &env.points {
            if p.x.dim() != 1 {
                return Err(CliError::Validation("comparison needs one-variable points".into()));
            }
            let z = p.x.0[0];
            let ov = domain
                .interpolate(&v, z)
                .ok_or_else(|| CliError::Validation(format!("point {} lies outside the oracle grid", p.x)))?;
            comparison.push(OracleRow { x: z, envelope: p.value, oracle: Num(ov), difference: Num(p.value.0 - ov) });
        }
        for r in &comparison {
            ctx.info(format!("{:>24} {:>24} {:>24} {:>12.3e}", r.x.to_string(), r.envelope.0, r.oracle.0, r.difference.0));
        }
    }
    let max_difference = comparison.iter().map(|r| r.difference.0.abs()).reduce(f64::max).map(Num);
    let res = OracleResults { manifest: manifest(Mode::Oracle, cfg, hash), domain, comparison, max_difference };
    ctx.write(&format!("{}.json", ctx.prefix), &to_json(&res))?;
    Ok(0)
}

fn verify_command(cfg: &RunConfig, hash: &str, ctx: &mut Ctx) -> Result<i32, CliError> {
    let v = cfg.verify.as_ref().expect("validated");
    let k = CompactSet::new(v.set.clone())?;
    let src = fs::read_to_string(&v.certificate).map_err(|e| io_err(&v.certificate, e))?;
    let cert: crate::hull::HullCertificate = serde_json::from_str(&src).map_err(|e| io_err(&v.certificate, e))?;
    let rho: Vec<ScalarField> = if v.rho.is_empty() {
        psh_corpus(k.dim())
    } else {
        v.rho.iter().map(|r| ScalarField::parse(r, k.dim())).collect::<Result<_, _>>().map_err(|e| CliError::Validation(e.to_string()))?
    };
    let report = verify_certificate(&cert, &k, &rho, v.tol);
    #[derive(Serialize)]
    struct Out<'a> {
        manifest: ResultsManifest,
        passed: bool,
        report: &'a crate::hull::CertificateReport,
    }
    let passed = report.passed();
    ctx.write(
        &format!("{}.json", ctx.prefix),
        &to_json(&Out { manifest: manifest(Mode::Verify, cfg, hash), passed, report: &report }),
    )?;
    if passed {
        ctx.info("certificate verified");
        Ok(0)
    } else {
        Err(CliError::Numerical(format!(
            "certificate check failed: center_ok={} in_window={} measure_matches={} failing rho={:?}",
            report.center_ok,
            report.in_window,
            report.measure_matches,
            report.failures.iter().map(|&i| report.checks[i].rho.as_str()).collect::<Vec<_>>()
        )))
    }
}

/// Outcome of the built-in counterexample on the cross `zw = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub estimate: EnvelopeEstimate,
    /// Largest deviation from 0 on the `z`-axis and from 1 on the punctured `w`-axis.
    pub z_axis_error: f64,
    pub w_axis_error: f64,
    pub value_at_origin: f64,
    pub submean: SubmeanReport,
    pub upper_regularization: UpperRegularization,
}

impl CounterexampleReport {
    /// The envelope is not upper semicontinuous at the origin.
    pub fn violation_found(&self) -> bool {
        !self.submean.violations.is_empty() && self.upper_regularization.value > self.value_at_origin
    }
}

/// The field `1` on the `w`-axis and `0` elsewhere on the cross.
pub fn counterexample_field() -> ScalarField {
    ScalarField::parse("cindicator(disc(1, 0; 0))", 2).expect("built-in field parses")
}

pub fn counterexample(b: &SearchBudget, q: &QuadratureSpec) -> Result<CounterexampleReport, CliError> {
    let space = SpaceModel::axes_cross();
    let u = counterexample_field();
    let zero = Complex64::new(0.0, 0.0);
    let lo = Complex64::new(-0.5, -0.5);
    let mut grid = slice_lattice(&[zero, zero], 0, lo, 0.125, 9);
    grid.extend(slice_lattice(&[zero, zero], 1, lo, 0.125, 9).into_iter().filter(|p| p.0[1] != zero));
    let est = envelope_grid(&u, &space, &grid, b, q)?;
    let mut z_err: f64 = 0.0;
    let mut w_err: f64 = 0.0;
    let mut at_origin = f64::NAN;
    for (p, v) in est.points.iter().zip(&est.values) {
        if p.0[1] == zero {
            z_err = z_err.max(v.abs());
            if p.0[0] == zero {
                at_origin = *v;
            }
        } else {
            w_err = w_err.max((v - 1.0).abs());
        }
    }
    let w = space.branch("w").expect("cross has a w branch").clone();
    let c = Complex64::new(0.25, 0.0);
    let trial = AnalyticDisc::from_rows(vec![vec![c], vec![c]], Some(w)).map_err(|e| CliError::Numerical(e.to_string()))?;
    let submean = check_submean(&est, &space, &[trial], q, 1e-9)?;
    let origin = ComplexPoint(vec![zero, zero]);
    let upper_regularization = upper_regularize(&est, &space, &origin, &[0.5, 0.25, 0.125])?;
    Ok(CounterexampleReport {
        estimate: est,
        z_axis_error: z_err,
        w_axis_error: w_err,
        value_at_origin: at_origin,
        submean,
        upper_regularization,
    })
}

fn counterexample_command(cfg: &RunConfig, hash: &str, ctx: &mut Ctx) -> Result<i32, CliError> {
    let rep = counterexample(&cfg.budget(), &cfg.quadrature)?;
    let res = EnvelopeResults::new(manifest(Mode::Counterexample, cfg, hash), &rep.estimate);
    ctx.write(&format!("{}.json", ctx.prefix), &to_json(&res))?;
    ctx.write(&format!("{}.csv", ctx.prefix), &results_csv(&res))?;
    ctx.write("counterexample.json", &to_json(&rep))?;
    ctx.info(format!(
        "v(0) = {}, limsup at 0 = {}, submean violations = {}",
        rep.value_at_origin,
        rep.upper_regularization.value,
        rep.submean.violations.len()
    ));
    if rep.violation_found() {
        Ok(0)
    } else {
        Err(CliError::Numerical("the envelope passed every check; expected a semicontinuity violation".into()))
    }
}

/// One differing value between two results files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueDiff {
    pub index: usize,
    pub a: Num,
    pub b: Num,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffReport {
    pub compared: usize,
    pub differences: Vec<ValueDiff>,
    pub max_abs: f64,
}

fn points_of(v: &Value, which: &str) -> Result<Vec<(Value, Num)>, CliError> {
    let pts = v
        .get("points")
        .and_then(Value::as_array)
        .ok_or_else(|| CliError::SchemaMismatch(format!("{which} has no points array")))?;
    pts.iter()
        .map(|p| {
            let x = p.get("x").cloned().ok_or_else(|| CliError::SchemaMismatch(format!("{which}: point without x")))?;
            let val = p
                .get("value")
                .cloned()
                .ok_or_else(|| CliError::SchemaMismatch(format!("{which}: point without value")))?;
            let val: Num = serde_json::from_value(val).map_err(|e| CliError::SchemaMismatch(format!("{which}: {e}")))?;
            Ok((x, val))
        })
        .collect()
}

/// Compares the point values of two results files.
pub fn diff_runs(a: &str, b: &str, tol: f64) -> Result<DiffReport, CliError> {
    let parse = |s: &str, w: &str| serde_json::from_str::<Value>(s).map_err(|e| CliError::SchemaMismatch(format!("{w}: {e}")));
    let (va, vb) = (parse(a, "a")?, parse(b, "b")?);
    let (pa, pb) = (points_of(&va, "a")?, points_of(&vb, "b")?);
    if pa.len() != pb.len() {
        return Err(CliError::SchemaMismatch(format!("{} points against {}", pa.len(), pb.len())));
    }
    let mut differences = Vec::new();
    let mut max_abs: f64 = 0.0;
    for (i, ((xa, a), (xb, b))) in pa.iter().zip(&pb).enumerate() {
        if xa != xb {
            return Err(CliError::SchemaMismatch(format!("point {i} has different coordinates")));
        }
        let same = a.0.to_bits() == b.0.to_bits() || a.0 == b.0;
        let d = if same { 0.0 } else { (a.0 - b.0).abs() };
        if !same {
            max_abs = max_abs.max(if d.is_nan() { f64::INFINITY } else { d });
            if !(d <= tol) {
                differences.push(ValueDiff { index: i, a: *a, b: *b });
            }
        }
    }
    Ok(DiffReport { compared: pa.len(), differences, max_abs })
}

fn diff_command(d: &DiffArgs, quiet: bool) -> Result<i32, CliError> {
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| io_err(p, e));
    let rep = diff_runs(&read(&d.a)?, &read(&d.b)?, d.tol)?;
    println!("{}", serde_json::to_string_pretty(&rep).expect("report serializes"));
    if !quiet {
        eprintln!("{} points compared, {} differ, max |a - b| = {}", rep.compared, rep.differences.len(), rep.max_abs);
    }
    Ok(if rep.differences.is_empty() { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn num_round_trip() {
        for v in [0.1, -0.0, 1e300, f64::INFINITY, f64::NEG_INFINITY] {
            let s = serde_json::to_string(&Num(v)).unwrap();
            let back: Num = serde_json::from_str(&s).unwrap();
            assert_eq!(back.0.to_bits(), v.to_bits(), "{s}");
        }
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 123456789.123456789] {
            assert_eq!(fmt17(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn diff_finds_changed_values() {
        let a = r#"{"points":[{"x":[[0.0,0.0]],"value":1.0},{"x":[[1.0,0.0]],"value":"-inf"}]}"#;
        let b = r#"{"points":[{"x":[[0.0,0.0]],"value":1.5},{"x":[[1.0,0.0]],"value":"-inf"}]}"#;
        assert!(diff_runs(a, a, 0.0).unwrap().differences.is_empty());
        let r = diff_runs(a, b, 0.1).unwrap();
        assert_eq!(r.differences.len(), 1);
        assert_eq!(r.max_abs, 0.5);
        assert!(diff_runs(a, b, 1.0).unwrap().differences.is_empty());
        let c = r#"{"points":[]}"#;
        assert!(matches!(diff_runs(a, c, 0.0), Err(CliError::SchemaMismatch(_))));
    }
}
