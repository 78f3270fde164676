//! Plurisubharmonic hulls through analytic discs. A point `x` is certified
//! by a disc centred at `x` whose boundary stays in a neighbourhood `U` of a
//! compact set `K`, except on a set of boundary times of small measure.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::disc::AnalyticDisc;
use crate::envelope::{envelope_at, EnvelopeError, SearchBudget};
use crate::field::{Expr, Region, ScalarField};
use crate::functional::{mean_value, QuadratureSpec};
use crate::space::{dist_max, ComplexPoint, DomainConstraint, SpaceModel};

#[derive(Debug, Error)]
pub enum HullError {
    #[error("point {0} lies outside the window")]
    PointOutsideWindow(ComplexPoint),
    #[error("invalid hull problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
}

/// One closed piece of a compact set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Piece {
    Ball { center: Vec<Complex64>, radius: f64 },
    /// Product of closed coordinate rectangles.
    Box { lo: Vec<Complex64>, hi: Vec<Complex64> },
    /// Union of closed balls of radius `blowup` around the points.
    Points { points: Vec<Vec<Complex64>>, blowup: f64 },
}

impl Piece {
    fn dim(&self) -> Option<usize> {
        match self {
            Piece::Ball { center, .. } => Some(center.len()),
            Piece::Box { lo, .. } => Some(lo.len()),
            Piece::Points { points, .. } => points.first().map(Vec::len),
        }
    }

    fn distance(&self, p: &[Complex64]) -> f64 {
        match self {
            Piece::Ball { center, radius } => (euclid(p, center) - radius).max(0.0),
            Piece::Box { lo, hi } => Region::Box { lo: lo.clone(), hi: hi.clone() }.distance(p),
            Piece::Points { points, blowup } => {
                let d = points.iter().map(|q| euclid(p, q)).fold(f64::INFINITY, f64::min);
                (d - blowup).max(0.0)
            }
        }
    }

    /// Points of the piece used when sampling functions on it.
    fn samples(&self) -> Vec<Vec<Complex64>> {
        match self {
            Piece::Ball { center, .. } => vec![center.clone()],
            Piece::Box { lo, hi } => vec![lo.clone(), hi.clone()],
            Piece::Points { points, .. } => points.clone(),
        }
    }

    /// Axis box containing the piece.
    fn bounds(&self) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
        let n = self.dim().unwrap_or(0);
        let mut re = vec![[f64::INFINITY, f64::NEG_INFINITY]; n];
        let mut im = re.clone();
        let mut add = |p: &[Complex64], r: f64| {
            for c in 0..n {
                re[c] = [re[c][0].min(p[c].re - r), re[c][1].max(p[c].re + r)];
                im[c] = [im[c][0].min(p[c].im - r), im[c][1].max(p[c].im + r)];
            }
        };
        match self {
            Piece::Ball { center, radius } => add(center, *radius),
            Piece::Box { lo, hi } => {
                add(lo, 0.0);
                add(hi, 0.0);
            }
            Piece::Points { points, blowup } => points.iter().for_each(|p| add(p, *blowup)),
        }
        (re, im)
    }
}

fn euclid(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// A finite union of closed balls, boxes and blown-up point clouds in `C^N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Piece>", into = "Vec<Piece>")]
pub struct CompactSet {
    pieces: Vec<Piece>,
    dim: usize,
}

impl TryFrom<Vec<Piece>> for CompactSet {
    type Error = HullError;
    fn try_from(pieces: Vec<Piece>) -> Result<Self, HullError> {
        Self::new(pieces)
    }
}

impl From<CompactSet> for Vec<Piece> {
    fn from(k: CompactSet) -> Self {
        k.pieces
    }
}

impl CompactSet {
    pub fn new(pieces: Vec<Piece>) -> Result<Self, HullError> {
        let bad = |m: &str| Err(HullError::Invalid(m.into()));
        let Some(dim) = pieces.first().and_then(Piece::dim) else {
            return bad("compact set needs at least one non-empty piece");
        };
        for p in &pieces {
            let ok = match p {
                Piece::Ball { center, radius } => center.len() == dim && radius.is_finite() && *radius >= 0.0,
                Piece::Box { lo, hi } => {
                    lo.len() == dim
                        && hi.len() == dim
                        && lo.iter().zip(hi).all(|(a, b)| a.re <= b.re && a.im <= b.im)
                }
                Piece::Points { points, blowup } => {
                    !points.is_empty() && points.iter().all(|q| q.len() == dim) && blowup.is_finite() && *blowup >= 0.0
                }
            };
            let finite = p.samples().iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite());
            if !ok || !finite {
                return bad("compact set piece has the wrong dimension or a non-finite parameter");
            }
        }
        Ok(Self { pieces, dim })
    }

    /// `n` equispaced points on `{|z1| = 1, z2 = ... = 0}`, blown up just
    /// enough to cover the circle.
    pub fn unit_circle(n: usize, dim: usize) -> Self {
        let points = crate::functional::roots_of_unity(n)
            .into_iter()
            .map(|w| {
                let mut p = vec![Complex64::new(0.0, 0.0); dim];
                p[0] = w;
                p
            })
            .collect();
        let blowup = 2.0 * (std::f64::consts::PI / (2 * n) as f64).sin();
        Self { pieces: vec![Piece::Points { points, blowup }], dim }
    }

    pub fn points(points: Vec<Vec<Complex64>>, blowup: f64) -> Result<Self, HullError> {
        Self::new(vec![Piece::Points { points, blowup }])
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Euclidean distance from `p` to the set.
    pub fn distance(&self, p: &[Complex64]) -> f64 {
        self.pieces.iter().map(|k| k.distance(p)).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: &[Complex64]) -> bool {
        self.distance(p) == 0.0
    }

    /// Centre and radius of a ball containing the set.
    pub fn bounding_ball(&self) -> (Vec<Complex64>, f64) {
        let n = self.dim;
        let mut re = vec![[f64::INFINITY, f64::NEG_INFINITY]; n];
        let mut im = re.clone();
        for p in &self.pieces {
            let (r, i) = p.bounds();
            for c in 0..n {
                re[c] = [re[c][0].min(r[c][0]), re[c][1].max(r[c][1])];
                im[c] = [im[c][0].min(i[c][0]), im[c][1].max(i[c][1])];
            }
        }
        let center: Vec<Complex64> = (0..n)
            .map(|c| Complex64::new(0.5 * (re[c][0] + re[c][1]), 0.5 * (im[c][0] + im[c][1])))
            .collect();
        let radius = (0..n)
            .map(|c| {
                let a = 0.5 * (re[c][1] - re[c][0]);
                let b = 0.5 * (im[c][1] - im[c][0]);
                a * a + b * b
            })
            .sum::<f64>()
            .sqrt();
        (center, radius)
    }

    /// Points of the set used to sample functions on it.
    pub fn samples(&self) -> Vec<Vec<Complex64>> {
        self.pieces.iter().flat_map(Piece::samples).collect()
    }

    /// Default window: the polydisc of twice the bounding radius in each
    /// coordinate.
    pub fn default_window(&self, u_radius: f64) -> DomainConstraint {
        let (c, r) = self.bounding_ball();
        let r = 2.0 * r.max(u_radius);
        DomainConstraint { radii: vec![r; c.len()], centers: c }
    }
}

/// A disc through `x` whose boundary leaves `U = {dist(., K) < u_radius}`
/// only on a set of measure `exceptional_measure`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HullCertificate {
    pub x: ComplexPoint,
    pub disc: AnalyticDisc,
    pub u_radius: f64,
    /// `2 pi * (nodes with dist(f(e^{it}), K) >= u_radius) / m`.
    pub exceptional_measure: f64,
    pub m: usize,
    pub window: DomainConstraint,
}

#[derive(Clone, Debug, PartialEq)]
pub enum HullOutcome {
    Certificate(HullCertificate),
    NotFound { best_value: f64, witness: AnalyticDisc },
}

impl HullOutcome {
    pub fn certificate(&self) -> Option<&HullCertificate> {
        match self {
            HullOutcome::Certificate(c) => Some(c),
            HullOutcome::NotFound { .. } => None,
        }
    }
}

/// Boundary nodes of `f` classified against `U`; `true` marks a node of `E_f`.
pub fn exceptional_nodes(k: &CompactSet, f: &AnalyticDisc, u_radius: f64, m: usize) -> Vec<bool> {
    f.boundary_points(m)
        .chunks_exact(f.ambient_dim)
        .map(|p| k.distance(p) >= u_radius)
        .collect()
}

pub fn exceptional_measure(k: &CompactSet, f: &AnalyticDisc, u_radius: f64, m: usize) -> f64 {
    let bad = exceptional_nodes(k, f, u_radius, m).iter().filter(|b| **b).count();
    TAU * bad as f64 / m as f64
}

/// `-chi_U` for `U = {dist(., K) < u_radius}`.
pub fn neighbourhood_field(k: &CompactSet, u_radius: f64) -> ScalarField {
    let ind = Expr::Indicator {
        region: Region::Near { set: Arc::new(k.clone()), radius: u_radius },
        closed: false,
        ramp: 0.0,
    };
    ScalarField::new(Expr::Neg(Box::new(ind)), k.dim()).expect("region dimension matches")
}

/// Searches for a disc certifying `x` in the hull of `K`, by minimizing the
/// disc functional of `-chi_U` over discs with values in the window.
pub fn hull_membership(
    k: &CompactSet,
    x: &ComplexPoint,
    u_radius: f64,
    eps: f64,
    window: Option<DomainConstraint>,
    b: &SearchBudget,
    q: &QuadratureSpec,
) -> Result<HullOutcome, HullError> {
    if !(u_radius > 0.0 && u_radius.is_finite()) || !(eps > 0.0) {
        return Err(HullError::Invalid("u_radius and eps must be positive".into()));
    }
    if x.dim() != k.dim() {
        return Err(HullError::Invalid(format!("point {x} has the wrong dimension")));
    }
    let window = window.unwrap_or_else(|| k.default_window(u_radius));
    if window.centers.len() != k.dim() {
        return Err(HullError::Invalid("window dimension does not match K".into()));
    }
    if !window.contains(&x.0) {
        return Err(HullError::PointOutsideWindow(x.clone()));
    }
    if k.samples().iter().any(|p| !window.contains(p)) {
        return Err(HullError::Invalid("K is not contained in the window".into()));
    }
    let space = SpaceModel::euclidean(k.dim())
        .with_domain(window.clone())
        .map_err(EnvelopeError::from)?;
    let u = neighbourhood_field(k, u_radius);
    let r = envelope_at(&u, &space, x, b, q)?;
    if r.value < -1.0 + eps / TAU {
        let exceptional_measure = exceptional_measure(k, &r.witness, u_radius, q.m);
        Ok(HullOutcome::Certificate(HullCertificate {
            x: x.clone(),
            disc: r.witness,
            u_radius,
            exceptional_measure,
            m: q.m,
            window,
        }))
    } else {
        Ok(HullOutcome::NotFound { best_value: r.value, witness: r.witness })
    }
}

/// The chain `rho(x) <= P_rho(f) <= sup_V rho * |E|/2pi + sup_U rho * (1 - |E|/2pi)`
/// for one test function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoCheck {
    pub rho: String,
    pub rho_x: f64,
    /// `P_rho(f)`, split into the exceptional and regular parts.
    pub boundary_mean: f64,
    pub exceptional_part: f64,
    pub regular_part: f64,
    pub sup_v: f64,
    pub sup_u: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// `f(0) = x` within the tolerance.
    pub center_ok: bool,
    /// Boundary nodes all lie in the window.
    pub in_window: bool,
    /// The stored exceptional measure equals the recomputed one bit for bit.
    pub measure_matches: bool,
    pub exceptional_measure: f64,
    pub checks: Vec<RhoCheck>,
    /// Indices into `checks` where the chain fails.
    pub failures: Vec<usize>,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.center_ok && self.in_window && self.measure_matches && self.failures.is_empty()
    }
}

fn window_samples(w: &DomainConstraint) -> Vec<Vec<Complex64>> {
    const PER_AXIS: usize = 16;
    let n = w.centers.len();
    if n > 3 {
        return vec![w.centers.clone()];
    }
    let axis: Vec<Vec<Complex64>> = (0..n)
        .map(|c| {
            let mut pts: Vec<Complex64> = crate::functional::roots_of_unity(PER_AXIS)
                .into_iter()
                .map(|e| w.centers[c] + e * w.radii[c])
                .collect();
            pts.push(w.centers[c]);
            pts
        })
        .collect();
    let mut out = vec![Vec::new()];
    for a in &axis {
        out = out
            .into_iter()
            .flat_map(|p| {
                a.iter().map(move |z| {
                    let mut q = p.clone();
                    q.push(*z);
                    q
                })
            })
            .collect();
    }
    out
}

/// Re-checks a certificate against test functions assumed plurisubharmonic.
/// Suprema are sampled: over `V` on a product grid of the window together
/// with the exceptional boundary points, over `U` on sample points of `K`
/// together with the regular boundary points.
pub fn verify_certificate(
    cert: &HullCertificate,
    k: &CompactSet,
    rho_list: &[ScalarField],
    tol: f64,
) -> CertificateReport {
    let flat = cert.disc.boundary_points(cert.m);
    let pts: Vec<&[Complex64]> = flat.chunks_exact(cert.disc.ambient_dim).collect();
    let bad: Vec<bool> = pts.iter().map(|p| k.distance(p) >= cert.u_radius).collect();
    let n_bad = bad.iter().filter(|b| **b).count();
    let measure = TAU * n_bad as f64 / cert.m as f64;
    let frac = n_bad as f64 / cert.m as f64;
    let center = cert.disc.center();
    let center_ok = center.dim() == cert.x.dim() && dist_max(&center.0, &cert.x.0) <= 1e-9;
    let in_window = pts.iter().all(|p| cert.window.contains(p));
    let v_samples = window_samples(&cert.window);
    let k_samples = k.samples();

    let checks: Vec<RhoCheck> = rho_list
        .par_iter()
        .map(|rho| {
            let eval = |p: &[Complex64]| rho.eval(p).unwrap_or(f64::NAN);
            let vals: Vec<f64> = pts.iter().map(|p| eval(p)).collect();
            let rho_x = eval(&cert.x.0);
            let part = |want: bool| {
                let picked: Vec<f64> = vals.iter().zip(&bad).filter(|(_, b)| **b == want).map(|(v, _)| *v).collect();
                if picked.is_empty() {
                    0.0
                } else {
                    mean_value(&picked, None) * picked.len() as f64 / cert.m as f64
                }
            };
            let exceptional_part = part(true);
            let regular_part = part(false);
            let boundary_mean = mean_value(&vals, None);
            let sup = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::NEG_INFINITY, f64::max);
            let sup_v = sup(&mut v_samples
                .iter()
                .map(|p| eval(p))
                .chain(vals.iter().zip(&bad).filter(|(_, b)| **b).map(|(v, _)| *v)));
            let sup_u = sup(&mut k_samples
                .iter()
                .map(|p| eval(p))
                .chain(vals.iter().zip(&bad).filter(|(_, b)| !**b).map(|(v, _)| *v)));
            let bound = if n_bad == 0 {
                sup_u
            } else if n_bad == cert.m {
                sup_v
            } else {
                sup_v * frac + sup_u * (1.0 - frac)
            };
            let holds = !rho_x.is_nan()
                && !boundary_mean.is_nan()
                && rho_x <= boundary_mean + tol
                && boundary_mean <= bound + tol;
            RhoCheck {
                rho: rho.to_string(),
                rho_x,
                boundary_mean,
                exceptional_part,
                regular_part,
                sup_v,
                sup_u,
                bound,
                holds,
            }
        })
        .collect();
    let failures = checks.iter().enumerate().filter(|(_, c)| !c.holds).map(|(i, _)| i).collect();
    CertificateReport {
        center_ok,
        in_window,
        measure_matches: measure.to_bits() == cert.exceptional_measure.to_bits(),
        exceptional_measure: measure,
        checks,
        failures,
    }
}

/// Plurisubharmonic test functions on `C^dim`: real parts of polynomials,
/// logarithms of moduli of affine functions and maxima of these.
pub fn psh_corpus(dim: usize) -> Vec<ScalarField> {
    let mut src = vec![
        "0",
        "re(z1)",
        "im(z1^3 - 2*z1)",
        "re((1 + 2i) * z1^2)",
        "log(abs(z1 - 0.5))",
        "log(abs(2*z1 + 1i))",
        "max(re(z1), log(abs(z1 + 0.25)))",
        "abs2(z1)",
        "max(abs2(z1), re(z1 - 1))",
    ];
    if dim >= 2 {
        src.extend([
            "re(z1 * z2 - z2^2)",
            "log(abs(z1 + z2 + 0.3))",
            "max(re(z1), im(z2), log(abs(z1 - z2)))",
            "abs2(z1) + abs2(z2)",
        ]);
    }
    src.into_iter()
        .map(|s| ScalarField::parse(s, dim).expect("corpus expressions parse"))
        .collect()
}
