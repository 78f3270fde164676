//! Acceptance criteria, one line per criterion.
//!
//! Run a subset with `cargo test --test acceptance -- c2 c7`.

use std::f64::consts::TAU;
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use poisson_envelope::cli::counterexample;
use poisson_envelope::disc::{compose_rh, rh_refine, sup_gap_on_circle, FitOptions, RhOptions};
use poisson_envelope::functional::roots_of_unity;
use poisson_envelope::hull::{hull_membership, psh_corpus, verify_certificate, CompactSet, HullOutcome};
use poisson_envelope::oracle::{subharmonic_minorant, GridDomain};
use poisson_envelope::space::DomainConstraint;
use poisson_envelope::{
    envelope_at, envelope_grid, poisson_functional, AnalyticDisc, BoundaryFamily, ComplexPoint, QuadratureSpec,
    ScalarField, SearchBudget, SpaceModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn gauss(rng: &mut ChaCha8Rng, s: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im) * (s / std::f64::consts::SQRT_2)
}

fn random_disc(rng: &mut ChaCha8Rng, dim: usize, degree: usize, scale: f64) -> AnalyticDisc {
    let rows = (0..=degree)
        .map(|j| (0..dim).map(|_| gauss(rng, scale * 0.8f64.powi(j as i32))).collect())
        .collect();
    AnalyticDisc::from_rows(rows, None).unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn q(m: usize) -> QuadratureSpec {
    QuadratureSpec::new(m).unwrap()
}

/// Plurisubharmonic fields are their own envelopes.
fn c1() -> Outcome {
    let start = Instant::now();
    let space = SpaceModel::euclidean(2);
    let grid: Vec<ComplexPoint> = (0..10)
        .flat_map(|i| {
            (0..10).map(move |j| {
                let s = -0.9 + 0.2 * i as f64;
                let t = -0.9 + 0.2 * j as f64;
                ComplexPoint(vec![c(s, 0.5 * t), c(0.3 * t, -0.4 * s)])
            })
        })
        .collect();
    let b = SearchBudget {
        degree_schedule: vec![2, 4, 8],
        restarts: 8,
        rh_rounds: 0,
        smooth_iters: 5,
        descent_iters: 2,
        seed: 11,
        ..SearchBudget::default()
    };
    let mut worst: f64 = 0.0;
    for src in ["re(z1)", "abs2(z1) + abs2(z2)", "max(re(z1), re(z2))", "log(1e-3 + abs2(z1))"] {
        let u = ScalarField::parse(src, 2).unwrap();
        let est = envelope_grid(&u, &space, &grid, &b, &q(512)).unwrap();
        for (p, v) in est.points.iter().zip(&est.values) {
            worst = worst.max((v - u.eval(&p.0).unwrap()).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-6 && secs < 30.0, format!("max |v - u| = {worst:.2e} on 4 x 100 points, {secs:.1} s"))
}

/// Envelope of `-chi_{|z| < 1/4}` on the unit disc against the grid oracle.
fn c2() -> Outcome {
    let start = Instant::now();
    let u = ScalarField::parse("-indicator(ball(0; 0.25))", 1).unwrap();
    let domain = GridDomain::disc(c(0.0, 0.0), 1.0, 129).unwrap();
    let ug = domain.sample(&u).unwrap();
    let v = subharmonic_minorant(&ug, &domain, 1e-10, 1_000_000).unwrap();
    let space = SpaceModel::euclidean(1).with_domain(DomainConstraint::ball(c(0.0, 0.0), 1.0)).unwrap();
    let angle = 0.3f64;
    let radii: Vec<f64> = (0..20).map(|k| 0.025 + 0.05 * k as f64).collect();
    let mut grid: Vec<ComplexPoint> = radii.iter().map(|r| ComplexPoint(vec![Complex64::from_polar(*r, angle)])).collect();
    grid.push(ComplexPoint(vec![c(0.5, 0.0)]));
    let b = SearchBudget {
        degree_schedule: vec![2, 4, 8, 16, 32, 64, 128],
        restarts: 8,
        smooth_iters: 150,
        descent_iters: 3,
        rh_rounds: 0,
        seed: 5,
        ..SearchBudget::default()
    };
    let est = envelope_grid(&u, &space, &grid, &b, &q(512)).unwrap();
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for (p, val) in est.points.iter().zip(&est.values).take(20) {
        let o = domain.interpolate(&v, p.0[0]).unwrap();
        worst = worst.max((val - o).abs());
        rows.push(format!("{:.3}:{:+.3}/{:+.3}", p.0[0].norm(), val, o));
    }
    let spot = est.values[20];
    let secs = start.elapsed().as_secs_f64();
    eprintln!("    c2 radial table (r: envelope/oracle): {}", rows.join(" "));
    outcome(
        worst <= 0.05 && (spot + 0.5).abs() <= 0.05 && secs < 300.0,
        format!("max |envelope - oracle| = {worst:.3}, value at |z| = 1/2: {spot:.4}, {secs:.1} s"),
    )
}

/// Liouville: bounded envelopes on C are constant, here `-1` at `x = 2`.
fn c3() -> Outcome {
    let start = Instant::now();
    let u = ScalarField::parse("-indicator(ball(0; 1))", 1).unwrap();
    let space = SpaceModel::euclidean(1);
    let b = SearchBudget {
        degree_schedule: vec![2, 4, 8, 16, 32, 64],
        restarts: 32,
        smooth_iters: 300,
        descent_iters: 5,
        rh_rounds: 10,
        ramp_schedule: vec![4.0, 2.0, 1.0, 0.5, 0.25, 0.1, 0.04, 0.015, 0.005],
        seed: 1,
        ..SearchBudget::default()
    };
    let r = envelope_at(&u, &space, &ComplexPoint(vec![c(2.0, 0.0)]), &b, &q(512)).unwrap();
    let vals: Vec<f64> = r.diagnostics.rounds.iter().map(|x| x.value).collect();
    let monotone = vals.windows(2).all(|w| w[1] <= w[0]);
    let secs = start.elapsed().as_secs_f64();
    let trace: Vec<String> = r.diagnostics.rounds.iter().map(|x| format!("{}={:.4}", x.stage, x.value)).collect();
    eprintln!("    c3 trace: {}", trace.join(" "));
    outcome(
        r.value <= -0.9 && monotone && secs < 120.0,
        format!("best value {:.4} (degree {}), non-increasing: {monotone}, {secs:.1} s", r.value, r.witness.degree),
    )
}

/// The cross `zw = 0`: envelope 0 on the z-axis, 1 on the punctured w-axis,
/// and a failing sub-mean check at the origin.
fn c4() -> Outcome {
    let b = SearchBudget { restarts: 2, rh_rounds: 0, seed: 3, ..SearchBudget::default() };
    let rep = counterexample(&b, &q(512)).unwrap();
    let ok = rep.z_axis_error <= 1e-9 && rep.w_axis_error <= 1e-9 && !rep.submean.violations.is_empty();
    let worst = rep.submean.violations.first().map(|&i| &rep.submean.checks[i]);
    outcome(
        ok,
        format!(
            "z-axis error {:.1e}, w-axis error {:.1e}, {} sub-mean violation(s){}",
            rep.z_axis_error,
            rep.w_axis_error,
            rep.submean.violations.len(),
            worst.map_or(String::new(), |w| format!(", excess {:.3} worst at {}", w.excess, w.worst_point)),
        ),
    )
}

/// Curve envelopes equal envelopes of the pulled-back field.
fn c5() -> Outcome {
    let cusp = SpaceModel::cusp();
    let branch = &cusp.branches[0];
    let corpus = [
        "max(re(z1), im(z2))",
        "-indicator(ball(0, 0; 0.5))",
        "abs2(z1) - re(z2)",
        "log(abs(z1 - 0.1))",
        "min(0, abs2(z2) - 0.25)",
    ];
    let b = SearchBudget { degree_schedule: vec![2, 4], restarts: 2, rh_rounds: 1, seed: 21, ..SearchBudget::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = Vec::new();
    for i in 0..10 {
        let u = ScalarField::parse(corpus[i % corpus.len()], 2).unwrap();
        let t = c(rng.gen_range(-48..48) as f64 / 64.0, rng.gen_range(-48..48) as f64 / 64.0);
        let x = branch.eval(t);
        let a = envelope_at(&u, &cusp, &x, &b, &q(256)).unwrap();
        let up = u.pull_back(branch).unwrap();
        let e = envelope_at(&up, &SpaceModel::euclidean(1), &ComplexPoint(vec![t]), &b, &q(256)).unwrap();
        if a.value.to_bits() != e.value.to_bits() || a.witness.coeffs != e.witness.coeffs {
            mismatches.push(format!("{t}: {} vs {}", a.value, e.value));
        }
    }
    outcome(mismatches.is_empty(), format!("10 pairs, {} mismatches {:?}", mismatches.len(), mismatches))
}

/// Riemann-Hilbert composition on random families.
fn c6() -> Outcome {
    let fields = ["abs2(z1)", "re(z1^2) + abs2(z1)", "log(1 + abs2(z1))", "max(re(z1), 0)", "exp(re(z1))"];
    let fields2 = ["abs2(z1) + abs2(z2)", "max(re(z1), im(z2))", "log(1 + abs2(z1 - z2))"];
    let ks = [8usize, 16, 32, 64];
    let mut worst_eps: f64 = 0.0;
    let mut center_fail = 0;
    let mut monotone_fail = 0;
    let mut errors = 0;
    for inst in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + inst);
        let dim = 1 + (inst % 2) as usize;
        let deg = rng.gen_range(1..=3);
        let f = random_disc(&mut rng, dim, deg, 0.6);
        let (m_true, deg_true, terms) = (rng.gen_range(0..=2usize), rng.gen_range(0..=4usize), 2usize);
        let coef: Vec<Complex64> = (0..terms * (deg_true + 1) * dim).map(|_| gauss(&mut rng, 0.3)).collect();
        let mb = 16;
        let zetas = roots_of_unity(mb);
        let fb = f.boundary_params(mb);
        let discs = zetas
            .iter()
            .enumerate()
            .map(|(jt, zeta)| {
                let mut rows = vec![fb[jt * dim..(jt + 1) * dim].to_vec()];
                for j in 0..terms {
                    rows.push(
                        (0..dim)
                            .map(|col| {
                                (0..=deg_true)
                                    .map(|p| coef[(j * (deg_true + 1) + p) * dim + col] * zeta.powi(p as i32 - m_true as i32))
                                    .sum()
                            })
                            .collect(),
                    );
                }
                AnalyticDisc::from_rows(rows, None).unwrap()
            })
            .collect();
        let family = BoundaryFamily::new(f.clone(), discs, 0.0).unwrap();
        let u = if dim == 1 {
            ScalarField::parse(fields[inst as usize % fields.len()], 1).unwrap()
        } else {
            ScalarField::parse(fields2[inst as usize % fields2.len()], 2).unwrap()
        };
        let t0 = rng.gen_range(0.0..3.0);
        let t1 = t0 + rng.gen_range(1.0..3.2);
        let opts = RhOptions {
            m: 4,
            n_terms: terms,
            deg_a: 8,
            k_schedule: ks.to_vec(),
            n_phases: 32,
            degree_cap: 1024,
            fit: FitOptions::default(),
        };
        let out = match rh_refine(&u, &family, &opts, 1024, &[(t0, t1.min(TAU))]) {
            Ok(o) => o,
            Err(_) => {
                errors += 1;
                continue;
            }
        };
        worst_eps = worst_eps.max(out.eps_report);
        if out.disc.center_param() != f.center_param() {
            center_fail += 1;
        }
        let gaps: Vec<f64> = ks
            .iter()
            .map(|&k| {
                let h = compose_rh(&f, &out.fit.family, k, out.c, 1024).unwrap();
                sup_gap_on_circle(&h, &f, 0.5, 256)
            })
            .collect();
        if !gaps.windows(2).all(|w| w[1] < w[0]) {
            monotone_fail += 1;
        }
    }
    outcome(
        worst_eps < 0.02 && center_fail == 0 && monotone_fail == 0 && errors == 0,
        format!(
            "200 instances: max eps_report {worst_eps:.2e}, center mismatches {center_fail}, non-monotone proximity {monotone_fail}, errors {errors}"
        ),
    )
}

/// Hull certificates for the unit circle and their absence for two points.
fn c7() -> Outcome {
    let start = Instant::now();
    let k = CompactSet::unit_circle(256, 2);
    let x = ComplexPoint(vec![c(0.0, 0.0); 2]);
    let b = SearchBudget { degree_schedule: vec![1, 2, 4], restarts: 4, rh_rounds: 0, seed: 9, ..SearchBudget::default() };
    let circle = hull_membership(&k, &x, 0.1, 0.3, None, &b, &q(512)).unwrap();
    let (cert_ok, verify_ok, measure) = match &circle {
        HullOutcome::Certificate(cert) => {
            let rep = verify_certificate(cert, &k, &psh_corpus(2), 1e-6);
            (cert.exceptional_measure == 0.0, rep.passed(), cert.exceptional_measure)
        }
        HullOutcome::NotFound { best_value, .. } => (false, false, *best_value),
    };
    let two = CompactSet::points(vec![vec![c(2.0, 0.0)], vec![c(-2.0, 0.0)]], 0.0).unwrap();
    let budgets = [
        SearchBudget { degree_schedule: vec![2, 4], restarts: 2, rh_rounds: 0, seed: 1, ..SearchBudget::default() },
        SearchBudget { degree_schedule: vec![2, 4, 8], restarts: 4, rh_rounds: 1, seed: 2, ..SearchBudget::default() },
        SearchBudget { degree_schedule: vec![2, 4, 8, 16], restarts: 8, rh_rounds: 2, seed: 3, ..SearchBudget::default() },
    ];
    let mut best = Vec::new();
    let mut none_found = true;
    for bb in &budgets {
        match hull_membership(&two, &ComplexPoint(vec![c(0.0, 0.0)]), 0.1, 0.3, None, bb, &q(512)).unwrap() {
            HullOutcome::Certificate(_) => none_found = false,
            HullOutcome::NotFound { best_value, .. } => best.push(best_value),
        }
    }
    let two_ok = none_found && best.iter().all(|v| *v >= -0.5);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        cert_ok && verify_ok && two_ok,
        format!(
            "circle: certificate {cert_ok} (measure {measure}), verified {verify_ok}; two points: best values {best:.4?}; {secs:.1} s"
        ),
    )
}

/// Exactness, monotonicity and convergence of the discrete functional.
fn c8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let harmonic = ["re(z1)", "im(z1 * z2)", "re((2 - 1i) * z1^2 - z2)", "im(z2^2) + 3 * re(z1)"];
    let mut worst_h: f64 = 0.0;
    for i in 0..200 {
        let d = rng.gen_range(1..=12usize);
        let f = random_disc(&mut rng, 2, d, 0.7);
        let u = ScalarField::parse(harmonic[i % harmonic.len()], 2).unwrap();
        let m = (2 * (2 * d) + 2).next_power_of_two().max(16);
        let p = poisson_functional(&u, &f, &q(m)).unwrap();
        worst_h = worst_h.max((p - u.eval(&f.center().0).unwrap()).abs());
    }
    let pairs = [
        ("re(z1)", "max(re(z1), im(z2))"),
        ("-indicator(ball(0, 0; 1))", "0"),
        ("log(abs(z1))", "log(abs(z1) + 0.5)"),
        ("abs2(z1) - 1", "abs2(z1) + abs2(z2)"),
        ("min(re(z1), re(z2))", "re(z2)"),
    ];
    let mut mono_fail = 0;
    for i in 0..1000 {
        let (a, b) = pairs[i % pairs.len()];
        let (ua, ub) = (ScalarField::parse(a, 2).unwrap(), ScalarField::parse(b, 2).unwrap());
        let deg = rng.gen_range(0..=6usize);
        let f = random_disc(&mut rng, 2, deg, 1.0);
        let m = q(16 << (i % 4));
        if poisson_functional(&ua, &f, &m).unwrap() > poisson_functional(&ub, &f, &m).unwrap() {
            mono_fail += 1;
        }
    }
    let smooth = ["abs2(z1) * abs2(z2)", "exp(re(z1)) * re(z2)", "log(1 + abs2(z1) + abs2(z2))", "re(z1)^4 - abs2(z2)"];
    let mut worst_c: f64 = 0.0;
    let mut table = Vec::new();
    for src in smooth {
        let u = ScalarField::parse(src, 2).unwrap();
        let f = random_disc(&mut rng, 2, 4, 0.8);
        let vals: Vec<f64> = [64, 128, 256, 512, 1024, 2048]
            .iter()
            .map(|&m| poisson_functional(&u, &f, &q(m)).unwrap())
            .collect();
        let diffs: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        worst_c = worst_c.max(diffs[3]).max(diffs[4]);
        table.push(format!("{src}: {}", diffs.iter().map(|d| format!("{d:.1e}")).collect::<Vec<_>>().join(" ")));
    }
    eprintln!("    c8 |P(2M) - P(M)| for M = 64..1024:");
    for row in table {
        eprintln!("      {row}");
    }
    outcome(
        worst_h <= 1e-12 && mono_fail == 0 && worst_c <= 1e-10,
        format!("harmonic error {worst_h:.1e}, monotonicity failures {mono_fail}/1000, change beyond M = 512: {worst_c:.1e}"),
    )
}

/// Identical configs give byte-identical results across runs and thread counts.
fn c9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        r#"
seed = 42
field = "-indicator(ball(0, 0; 0.5)) + 0.1 * re(z1)"

[space]
kind = "cusp"

[grid]
points = [[[0.125, 0.0], [0.25, 0.0]], [[-0.125, 0.0], [0.25, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]

[budget]
degree_schedule = [2, 4]
restarts = 3
rh_rounds = 1

[quadrature]
m = 256
"#,
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_penv");
    let run = |threads: &str, out: &str| -> Result<Vec<u8>, String> {
        let od = dir.path().join(out);
        let st = Command::new(bin)
            .args(["--quiet", "--threads", threads, "envelope", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&od)
            .status()
            .map_err(|e| e.to_string())?;
        if !st.success() {
            return Err(format!("exit {st}"));
        }
        std::fs::read(od.join("results.json")).map_err(|e| e.to_string())
    };
    let runs = [run("8", "a"), run("8", "b"), run("1", "c")];
    match runs {
        [Ok(a), Ok(b), Ok(c1)] => outcome(
            a == b && a == c1,
            format!("{} bytes; repeat identical: {}, 1 vs 8 threads identical: {}", a.len(), a == b, a == c1),
        ),
        other => outcome(false, format!("a run failed: {:?}", other.iter().filter_map(|r| r.as_ref().err()).collect::<Vec<_>>())),
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, &str, fn() -> Outcome); 9] = [
        ("c1", "psh fixed point", c1),
        ("c2", "obstacle oracle match", c2),
        ("c3", "Liouville trend", c3),
        ("c4", "counterexample on the cross", c4),
        ("c5", "normalization equivariance", c5),
        ("c6", "RH composition contract", c6),
        ("c7", "hull certificate round trip", c7),
        ("c8", "functional correctness", c8),
        ("c9", "determinism", c9),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !args.is_empty() && !args.iter().any(|a| a == id) {
            continue;
        }
        let o = f();
        println!("criterion {} {:<30} {}  {}", &id[1..], name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
