use num_complex::Complex64;
use proptest::prelude::*;

use poisson_envelope::cli::{parse_results_csv, results_csv, EnvelopeResults, ResultsManifest};
use poisson_envelope::config::{Mode, RunConfig};
use poisson_envelope::disc::{compose_rh, LaurentFamily};
use poisson_envelope::hull::{exceptional_measure, exceptional_nodes, CompactSet};
use poisson_envelope::oracle::{radial_envelope, subharmonic_minorant, GridDomain};
use poisson_envelope::{
    envelope_at, envelope_grid, poisson_functional, AnalyticDisc, ComplexPoint, QuadratureSpec, ScalarField,
    SearchBudget, SpaceModel,
};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn cplx(scale: f64) -> impl Strategy<Value = Complex64> {
    (-scale..scale, -scale..scale).prop_map(|(a, b)| c(a, b))
}

fn disc_c2(degree: usize, scale: f64) -> impl Strategy<Value = AnalyticDisc> {
    prop::collection::vec(cplx(scale), 2 * (degree + 1)).prop_map(move |v| {
        let rows = v.chunks_exact(2).map(|r| r.to_vec()).collect();
        AnalyticDisc::from_rows(rows, None).unwrap()
    })
}

fn small_budget(seed: u64) -> SearchBudget {
    SearchBudget {
        degree_schedule: vec![1, 2],
        restarts: 1,
        rh_rounds: 0,
        smooth_iters: 3,
        descent_iters: 2,
        seed,
        ..SearchBudget::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cusp_branch_points_lie_on_the_space_and_lift_back(re in -1.5f64..1.5, im in -1.5f64..1.5) {
        let space = SpaceModel::cusp();
        let t = c(re, im);
        prop_assume!(t.norm() > 1e-3);
        let b = &space.branches[0];
        let p = b.eval(t);
        prop_assert!(space.contains(&p, 1e-9));
        let lifts = space.lift_point(&p, 1e-9).unwrap();
        prop_assert!(lifts.iter().any(|(_, s)| (s - t).norm() < 1e-7), "lifts {:?} miss {}", lifts, t);
    }

    #[test]
    fn functional_is_monotone_in_the_field(f in disc_c2(3, 0.8), k in -1.0f64..1.0) {
        let u1 = ScalarField::parse("re(z1) + abs2(z2) - abs(z1 - z2)", 2).unwrap();
        let u2 = ScalarField::parse(&format!("max(re(z1) + abs2(z2) - abs(z1 - z2), {k})"), 2).unwrap();
        let q = QuadratureSpec::new(64).unwrap();
        prop_assert!(poisson_functional(&u1, &f, &q).unwrap() <= poisson_functional(&u2, &f, &q).unwrap());
    }

    #[test]
    fn pluriharmonic_fields_have_the_mean_value_property(f in disc_c2(4, 1.0), a in cplx(1.0), b in cplx(1.0)) {
        let src = format!("re(({}) * z1^2 + ({}) * z1 * z2 - z2)", fmt_c(a), fmt_c(b));
        let u = ScalarField::parse(&src, 2).unwrap();
        let q = QuadratureSpec::new(32).unwrap();
        let centre = u.eval(&f.center().0).unwrap();
        prop_assert!((poisson_functional(&u, &f, &q).unwrap() - centre).abs() <= 1e-12 * centre.abs().max(1.0) * 10.0);
    }

    #[test]
    fn composition_keeps_the_center(f in disc_c2(2, 1.0), coeffs in prop::collection::vec(cplx(0.5), 2 * 3 * 2), k in 3usize..9) {
        let mut lam = LaurentFamily::zero(1, 2, 2, 2);
        for (i, v) in coeffs.iter().enumerate() {
            lam.a[i] = *v;
        }
        let h = compose_rh(&f, &lam, k, c(0.6, 0.8), 256).unwrap();
        prop_assert_eq!(h.center_param(), f.center_param());
    }

    #[test]
    fn radial_envelope_is_a_convex_nondecreasing_minorant(ys in prop::collection::vec(-2.0f64..2.0, 2..24)) {
        let samples: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, y)| (-1.0 + 0.1 * i as f64, *y)).collect();
        let env = radial_envelope(&samples).unwrap();
        let vals: Vec<f64> = samples.iter().map(|(t, _)| env.eval(*t)).collect();
        for ((_, y), v) in samples.iter().zip(&vals) {
            prop_assert!(*v <= y + 1e-12);
        }
        for w in vals.windows(2) {
            prop_assert!(w[1] - w[0] >= -1e-12);
        }
        for w in vals.windows(3) {
            prop_assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-12);
        }
    }

    #[test]
    fn exceptional_measure_counts_nodes_and_grows_as_the_neighbourhood_shrinks(
        f in disc_c2(2, 0.7),
        r in 0.01f64..0.5,
        m in prop::sample::select(vec![16usize, 32, 64]),
    ) {
        let k = CompactSet::unit_circle(64, 2);
        let bad = exceptional_nodes(&k, &f, r, m).iter().filter(|b| **b).count();
        let mu = exceptional_measure(&k, &f, r, m);
        prop_assert_eq!(mu, std::f64::consts::TAU * bad as f64 / m as f64);
        prop_assert!(exceptional_measure(&k, &f, 0.5 * r, m) >= mu);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn minorant_is_below_the_obstacle_and_submean(bumps in prop::collection::vec((cplx(0.7), 0.05f64..0.3, -1.0f64..1.0), 1..4)) {
        let terms: Vec<String> = bumps
            .iter()
            .map(|(z, r, h)| format!("({h}) * indicator(ball({}; {r}))", fmt_c(*z)))
            .collect();
        let u = ScalarField::parse(&format!("abs2(z1) + {}", terms.join(" + ")), 1).unwrap();
        let domain = GridDomain::disc(c(0.0, 0.0), 1.0, 33).unwrap();
        let ug = domain.sample(&u).unwrap();
        let tol = 1e-10;
        let v = subharmonic_minorant(&ug, &domain, tol, 1_000_000).unwrap();
        let n = domain.n;
        for k in (0..n * n).filter(|&k| domain.mask[k]) {
            prop_assert!(v[k] <= ug[k]);
            let avg = 0.25 * (v[k - 1] + v[k + 1] + v[k - n] + v[k + n]);
            prop_assert!(v[k] <= avg + 4.0 * tol, "node {} exceeds its neighbour average", k);
        }
    }

    #[test]
    fn envelope_never_exceeds_the_field_and_rounds_do_not_increase(x in cplx(0.8), y in cplx(0.8), seed in 0u64..1000) {
        let u = ScalarField::parse("min(abs2(z1) - 0.5, re(z2)) - 0.3 * indicator(ball(0, 0.5; 0.4))", 2).unwrap();
        let q = QuadratureSpec::new(64).unwrap();
        let p = ComplexPoint(vec![x, y]);
        let r = envelope_at(&u, &SpaceModel::euclidean(2), &p, &small_budget(seed), &q).unwrap();
        prop_assert!(r.value <= u.eval(&p.0).unwrap());
        prop_assert_eq!(r.value, poisson_functional(&u.decreasing_approximation(1000.0), &r.witness, &q).unwrap());
        for w in r.diagnostics.rounds.windows(2) {
            prop_assert!(w[1].value <= w[0].value);
        }
    }
}

fn fmt_c(z: Complex64) -> String {
    format!("({} + ({}) * i)", z.re, z.im)
}

fn results(seed: u64) -> EnvelopeResults {
    let u = ScalarField::parse("max(re(z1), -indicator(ball(0.25; 0.5)))", 1).unwrap();
    let pts: Vec<ComplexPoint> = (0..4).map(|k| ComplexPoint(vec![c(0.1 * k as f64, -0.05 * k as f64)])).collect();
    let q = QuadratureSpec::new(64).unwrap();
    let est = envelope_grid(&u, &SpaceModel::euclidean(1), &pts, &small_budget(seed), &q).unwrap();
    let manifest = ResultsManifest {
        tool: "penv".into(),
        version: "test".into(),
        mode: Mode::Envelope,
        seed,
        config_hash: String::new(),
        quadrature_m: 64,
    };
    EnvelopeResults::new(manifest, &est)
}

#[test]
fn results_json_round_trips() {
    let r = results(3);
    let back: EnvelopeResults = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(back, r);
}

#[test]
fn results_csv_round_trips_every_value() {
    let r = results(4);
    let rows = parse_results_csv(&results_csv(&r)).unwrap();
    assert_eq!(rows.len(), r.points.len());
    for (row, p) in rows.iter().zip(&r.points) {
        assert_eq!(row.x, p.x.0);
        assert_eq!(row.value.to_bits(), p.value.0.to_bits());
        assert_eq!(row.witness_degree, p.witness.degree);
        let rounds: Vec<f64> = p.rounds.iter().map(|x| x.value.0).collect();
        assert_eq!(row.p_rounds, rounds);
    }
}

#[test]
fn config_round_trips_through_toml() {
    let src = r#"
seed = 9
mode = "envelope"
field = "abs2(z1) - 1"

[space]
kind = "euclidean"
dim = 1

[grid]
points = [[[0.5, 0.0]], [[0.0, 0.25]]]

[budget]
degree_schedule = [2, 4]
restarts = 2

[quadrature]
m = 128
"#;
    let cfg = RunConfig::from_toml(src).unwrap();
    let again = RunConfig::from_toml(&toml::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(again.budget().seed, 9);
}
