//! Checks on computed envelope grids: the sub-mean value inequality along
//! trial discs, and the upper regularization at a point.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{EnvelopeError, EnvelopeEstimate};
use crate::disc::AnalyticDisc;
use crate::functional::QuadratureSpec;
use crate::space::{dist_max, ComplexPoint, SpaceKind, SpaceModel};

const SNAP: f64 = 1e-12;

/// Result of one trial disc.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmeanCheck {
    pub disc_index: usize,
    pub center: ComplexPoint,
    pub center_value: f64,
    pub boundary_mean: f64,
    /// `center_value - boundary_mean`; positive means the inequality fails.
    pub excess: f64,
    /// Boundary point with the smallest interpolated value.
    pub worst_point: ComplexPoint,
    pub worst_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmeanReport {
    pub checks: Vec<SubmeanCheck>,
    /// Indices into `checks` whose excess is above the tolerance.
    pub violations: Vec<usize>,
}

impl SubmeanReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Values on a rectangular lattice in a real 2D plane, interpolated
/// linearly on the triangles of each cell.
struct Lattice {
    xs: Vec<f64>,
    ys: Vec<f64>,
    vals: Vec<f64>,
}

fn distinct(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= SNAP * a.abs().max(1.0));
    v
}

fn locate(axis: &[f64], x: f64) -> Option<usize> {
    axis.iter().position(|a| (a - x).abs() <= SNAP * a.abs().max(1.0))
}

impl Lattice {
    fn build(samples: &[(Complex64, f64)]) -> Option<Self> {
        let xs = distinct(samples.iter().map(|s| s.0.re).collect());
        let ys = distinct(samples.iter().map(|s| s.0.im).collect());
        if xs.len() < 2 || ys.len() < 2 {
            return None;
        }
        let mut vals = vec![f64::NAN; xs.len() * ys.len()];
        for (t, v) in samples {
            let (i, j) = (locate(&ys, t.im)?, locate(&xs, t.re)?);
            vals[i * xs.len() + j] = *v;
        }
        if vals.iter().any(|v| v.is_nan()) {
            return None;
        }
        Some(Self { xs, ys, vals })
    }

    fn cell(axis: &[f64], x: f64) -> Option<(usize, f64)> {
        let n = axis.len();
        if x < axis[0] - SNAP || x > axis[n - 1] + SNAP {
            return None;
        }
        let k = axis.partition_point(|a| *a <= x).clamp(1, n - 1) - 1;
        Some((k, ((x - axis[k]) / (axis[k + 1] - axis[k])).clamp(0.0, 1.0)))
    }

    fn eval(&self, t: Complex64) -> Option<f64> {
        let (j, fx) = Self::cell(&self.xs, t.re)?;
        let (i, fy) = Self::cell(&self.ys, t.im)?;
        let nx = self.xs.len();
        let v = |i: usize, j: usize| self.vals[i * nx + j];
        let (v00, v10, v01, v11) = (v(i, j), v(i, j + 1), v(i + 1, j), v(i + 1, j + 1));
        Some(if fx >= fy {
            v00 + fx * (v10 - v00) + fy * (v11 - v10)
        } else {
            v00 + fy * (v01 - v00) + fx * (v11 - v01)
        })
    }
}

/// How grid values are read off along a trial disc.
enum Reader {
    /// Lattice in the plane of one coordinate; the others are fixed.
    Slice { coord: usize, fixed: Vec<Complex64>, lattice: Lattice },
    /// Per-branch lattices in the normalization parameter.
    Branches(Vec<(String, Lattice)>),
    /// Only values at grid points are available.
    Coincident,
}

fn slice_reader(v: &EnvelopeEstimate) -> Option<Reader> {
    let n = v.points.first()?.dim();
    let varying: Vec<usize> = (0..n)
        .filter(|&c| v.points.iter().any(|p| (p.0[c] - v.points[0].0[c]).norm() > SNAP))
        .collect();
    if varying.len() > 1 {
        return None;
    }
    let coord = varying.first().copied().unwrap_or(0);
    let samples: Vec<(Complex64, f64)> = v.points.iter().zip(&v.values).map(|(p, val)| (p.0[coord], *val)).collect();
    Some(Reader::Slice { coord, fixed: v.points[0].0.clone(), lattice: Lattice::build(&samples)? })
}

fn branch_reader(v: &EnvelopeEstimate, space: &SpaceModel, tol: f64) -> Reader {
    let mut out = Vec::new();
    for b in &space.branches {
        let mut samples = Vec::new();
        for (p, val) in v.points.iter().zip(&v.values) {
            for t in b.preimages(&p.0, tol) {
                samples.push((t, *val));
            }
        }
        if let Some(l) = Lattice::build(&samples) {
            out.push((b.label.clone(), l));
        }
    }
    Reader::Branches(out)
}

fn coincident(v: &EnvelopeEstimate, p: &[Complex64]) -> Option<f64> {
    v.points
        .iter()
        .position(|q| dist_max(&q.0, p) <= SNAP)
        .map(|i| v.values[i])
}

fn read(reader: &Reader, v: &EnvelopeEstimate, disc: &AnalyticDisc, param: &[Complex64], amb: &[Complex64]) -> Option<f64> {
    match reader {
        Reader::Slice { coord, fixed, lattice } => {
            if disc.branch.is_some() {
                return None;
            }
            let off_slice = amb
                .iter()
                .enumerate()
                .any(|(c, z)| c != *coord && (z - fixed[c]).norm() > SNAP);
            if off_slice {
                return coincident(v, amb);
            }
            coincident(v, amb).or_else(|| lattice.eval(amb[*coord]))
        }
        Reader::Branches(ls) => {
            let label = disc.branch_label()?;
            let (_, l) = ls.iter().find(|(n, _)| n == label)?;
            l.eval(param[0])
        }
        Reader::Coincident => coincident(v, amb),
    }
}

/// Compares `v(f(0))` with the boundary mean of `v` along each trial disc,
/// reading `v` off the grid by piecewise-linear interpolation.
pub fn check_submean(
    v_grid: &EnvelopeEstimate,
    space: &SpaceModel,
    trial_discs: &[AnalyticDisc],
    q: &QuadratureSpec,
    tol: f64,
) -> Result<SubmeanReport, EnvelopeError> {
    let reader = match space.kind {
        SpaceKind::Euclidean => slice_reader(v_grid).unwrap_or(Reader::Coincident),
        SpaceKind::NormalizedCurve => branch_reader(v_grid, space, 1e-9),
    };
    let mut checks = Vec::new();
    let mut violations = Vec::new();
    for (k, f) in trial_discs.iter().enumerate() {
        let w = f.width();
        let params = f.boundary_params(q.m);
        let mut amb = vec![Complex64::new(0.0, 0.0); f.ambient_dim];
        let oor = |what: &str| EnvelopeError::InterpolationOutOfRange(format!("trial disc {k}: {what}"));
        let center = f.center();
        let center_value = read(&reader, v_grid, f, f.center_param(), &center.0).ok_or_else(|| oor("center"))?;
        let mut sum = 0.0;
        let mut worst = (f64::INFINITY, ComplexPoint(Vec::new()));
        for p in params.chunks_exact(w) {
            f.push_forward(p, &mut amb);
            let val = read(&reader, v_grid, f, p, &amb).ok_or_else(|| oor("boundary node"))?;
            sum += val;
            if val < worst.0 {
                worst = (val, ComplexPoint(amb.clone()));
            }
        }
        let mean = sum / q.m as f64;
        let check = SubmeanCheck {
            disc_index: k,
            center,
            center_value,
            boundary_mean: mean,
            excess: center_value - mean,
            worst_point: worst.1,
            worst_value: worst.0,
        };
        if check.excess > tol {
            violations.push(checks.len());
        }
        checks.push(check);
    }
    Ok(SubmeanReport { checks, violations })
}

/// Finite-scale upper regularization `limsup v(q)` as `q -> p` through
/// regular points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperRegularization {
    /// `(radius, max of v over regular grid points with 0 < |q - p| <= radius)`.
    pub shells: Vec<(f64, f64)>,
    /// The maximum over the smallest shell.
    pub value: f64,
}

pub fn upper_regularize(
    v_grid: &EnvelopeEstimate,
    space: &SpaceModel,
    p: &ComplexPoint,
    radii: &[f64],
) -> Result<UpperRegularization, EnvelopeError> {
    let singular = match space.kind {
        SpaceKind::Euclidean => Vec::new(),
        SpaceKind::NormalizedCurve => space.singular_locus_hint()?,
    };
    let regular = |q: &ComplexPoint| singular.iter().all(|s| s.dist_max(q) > 1e-9);
    let mut shells = Vec::with_capacity(radii.len());
    for &r in radii {
        let m = v_grid
            .points
            .iter()
            .zip(&v_grid.values)
            .filter(|(q, _)| {
                let d = q.dist(p);
                d > 0.0 && d <= r && regular(q)
            })
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return Err(EnvelopeError::EmptyShell(r));
        }
        shells.push((r, m));
    }
    let value = shells
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|s| s.1)
        .ok_or(EnvelopeError::EmptyShell(0.0))?;
    Ok(UpperRegularization { shells, value })
}
