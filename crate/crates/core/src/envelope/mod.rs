//! The Poisson envelope `u^(x) = inf P_u(f)` over discs centered at `x`,
//! estimated by seeded search over polynomial discs.
//!
//! Every value returned here is attained by the returned witness disc, so it
//! is an upper bound for the true envelope. The constant disc is always
//! evaluated first, hence `value <= u(x)`.
//!
//! The search at a point runs through the degree schedule. At each degree it
//! starts from the incumbent and from `restarts` random discs, smooths
//! indicator jumps into ramps of decreasing width, runs a quasi-Newton
//! descent on the smoothed functional, and finishes with coordinate descent
//! on the exact one. Refinement rounds then attach short searches along the
//! boundary of the incumbent and merge them with the Riemann-Hilbert
//! composition of [`crate::disc`].
//!
//! On a curve the search runs in the normalization parameter of every
//! branch through `x`, on the pulled-back field, and keeps the best branch.

mod search;
mod submean;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::disc::AnalyticDisc;
use crate::field::{FieldError, ScalarField};
use crate::functional::QuadratureSpec;
use crate::rng::StreamKey;
use crate::space::{ComplexPoint, SpaceError, SpaceKind, SpaceModel};

pub use submean::{check_submean, upper_regularize, SubmeanCheck, SubmeanReport, UpperRegularization};

use search::Problem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvelopeError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("invalid search budget: {0}")]
    Budget(String),
    #[error("point {index}: {source}")]
    AtPoint { index: usize, source: Box<EnvelopeError> },
    #[error("{} grid points failed; first: {}", .0.len(), .0[0])]
    Grid(Vec<EnvelopeError>),
    #[error("interpolation out of range: {0}")]
    InterpolationOutOfRange(String),
    #[error("no grid points in the shell of radius {0}")]
    EmptyShell(f64),
}

/// Search effort and seeding. All counts are per grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchBudget {
    /// Disc degrees visited in order.
    pub degree_schedule: Vec<usize>,
    /// Random starting discs per degree.
    pub restarts: usize,
    /// Coordinate-descent passes per start.
    pub descent_iters: usize,
    pub rh_rounds: usize,
    /// Winding numbers tried in each refinement round.
    pub k_schedule: Vec<usize>,
    pub n_phases: usize,
    pub seed: u64,
    pub step_init: f64,
    pub step_shrink: f64,
    /// Standard deviation of random degree-1 coefficients.
    pub coeff_scale: f64,
    /// Factor applied to the standard deviation per extra degree.
    pub coeff_decay: f64,
    /// Quasi-Newton iterations per ramp width; 0 skips the smoothed stage.
    pub smooth_iters: usize,
    /// Ramp widths replacing indicator jumps, visited in order.
    pub ramp_schedule: Vec<f64>,
    /// Boundary discs per refinement round.
    pub boundary_samples: usize,
    /// Degree of the boundary discs.
    pub child_degree: usize,
    /// Fields are replaced by `max(u, -truncation)`.
    pub truncation: f64,
    pub degree_cap: usize,
    pub center_tol: f64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            degree_schedule: vec![2, 4, 8],
            restarts: 4,
            descent_iters: 20,
            rh_rounds: 1,
            k_schedule: vec![8, 16, 32, 64],
            n_phases: 32,
            seed: 0,
            step_init: 0.1,
            step_shrink: 0.5,
            coeff_scale: 1.0,
            coeff_decay: 0.7,
            smooth_iters: 100,
            ramp_schedule: vec![0.5, 0.25, 0.1, 0.04, 0.015, 0.005],
            boundary_samples: 16,
            child_degree: 4,
            truncation: 1000.0,
            degree_cap: 256,
            center_tol: 1e-9,
        }
    }
}

impl SearchBudget {
    pub fn validate(&self) -> Result<(), EnvelopeError> {
        let bad = |m: &str| Err(EnvelopeError::Budget(m.to_string()));
        if self.degree_schedule.is_empty() || self.degree_schedule[0] == 0 {
            return bad("degree_schedule must be nonempty and positive");
        }
        if self.degree_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return bad("degree_schedule must be increasing");
        }
        if *self.degree_schedule.last().unwrap() > self.degree_cap {
            return bad("degree_schedule exceeds degree_cap");
        }
        if self.k_schedule.iter().any(|&k| k == 0) {
            return bad("k_schedule entries must be positive");
        }
        if self.n_phases < 8 {
            return bad("n_phases must be at least 8");
        }
        if !(self.step_init > 0.0) || !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return bad("step_init must be positive and step_shrink in (0, 1)");
        }
        if !(self.coeff_scale > 0.0) || !(self.coeff_decay > 0.0) {
            return bad("coeff_scale and coeff_decay must be positive");
        }
        if self.ramp_schedule.iter().any(|w| !(*w > 0.0)) {
            return bad("ramp widths must be positive");
        }
        if self.rh_rounds > 0 && (self.boundary_samples < 8 || !self.boundary_samples.is_power_of_two()) {
            return bad("boundary_samples must be a power of two, at least 8");
        }
        if self.rh_rounds > 0 && self.child_degree == 0 {
            return bad("child_degree must be positive");
        }
        if !(self.truncation >= 1.0) || !(self.center_tol > 0.0) {
            return bad("truncation must be >= 1 and center_tol positive");
        }
        Ok(())
    }
}

/// One step of the incumbent history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub stage: String,
    pub value: f64,
}

/// Diagnostics of one refinement round.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RhRecord {
    pub k: Option<usize>,
    pub phase: Option<[f64; 2]>,
    pub degree: Option<usize>,
    /// Functional of the composed disc.
    pub value: Option<f64>,
    pub double_integral: Option<f64>,
    pub eps_report: Option<f64>,
    pub fit_residual: Option<f64>,
    pub accepted: bool,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointDiagnostics {
    /// Branch of the witness on curves.
    pub branch: Option<String>,
    /// Incumbent value after each stage of the winning branch.
    pub rounds: Vec<RoundRecord>,
    pub rh: Vec<RhRecord>,
    /// Best value per branch through the point.
    pub branch_values: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointResult {
    pub value: f64,
    pub witness: AnalyticDisc,
    pub diagnostics: PointDiagnostics,
}

/// Envelope values on a list of points with their witness discs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeEstimate {
    pub points: Vec<ComplexPoint>,
    pub values: Vec<f64>,
    pub witnesses: Vec<AnalyticDisc>,
    pub diagnostics: Vec<PointDiagnostics>,
}

/// Upper estimate of `u^(x)` with a witness disc attaining it.
pub fn envelope_at(
    u: &ScalarField,
    space: &SpaceModel,
    x: &ComplexPoint,
    b: &SearchBudget,
    q: &QuadratureSpec,
) -> Result<PointResult, EnvelopeError> {
    b.validate()?;
    let ut = u.decreasing_approximation(b.truncation);
    point_search(&ut, space, x, b, q, 0)
}

fn point_search(
    ut: &ScalarField,
    space: &SpaceModel,
    x: &ComplexPoint,
    b: &SearchBudget,
    q: &QuadratureSpec,
    index: usize,
) -> Result<PointResult, EnvelopeError> {
    if x.dim() != space.ambient_dim {
        return Err(SpaceError::Invalid(format!("point {x} has the wrong dimension")).into());
    }
    if !space.contains(x, b.center_tol) {
        return Err(SpaceError::PointNotOnSpace(x.clone()).into());
    }
    let key = StreamKey::new(b.seed).point(index);
    match space.kind {
        SpaceKind::Euclidean => {
            if ut.dim() != space.ambient_dim {
                return Err(FieldError::Dimension { expected: space.ambient_dim, got: ut.dim() }.into());
            }
            let p = Problem::new(ut, x.0.clone(), space.ambient_dim, None, space.domain.as_ref(), *q);
            let r = p.search(b, key.branch(0));
            Ok(PointResult {
                value: r.value,
                witness: r.disc,
                diagnostics: PointDiagnostics {
                    branch: None,
                    rounds: to_rounds(r.rounds),
                    rh: r.rh,
                    branch_values: Vec::new(),
                },
            })
        }
        SpaceKind::NormalizedCurve => {
            let lifts = space.lift_point(x, b.center_tol)?;
            let mut best: Option<PointResult> = None;
            let mut branch_values = Vec::new();
            for (label, t) in lifts {
                let bi = space.branch_index(&label).expect("lift names a branch");
                let branch = &space.branches[bi];
                let up = ut.pull_back(branch)?;
                let p = Problem::new(&up, vec![t], space.ambient_dim, Some(branch), space.domain.as_ref(), *q);
                let r = p.search(b, key.branch(bi));
                branch_values.push((label.clone(), r.value));
                if best.as_ref().map_or(true, |bst| r.value < bst.value) {
                    best = Some(PointResult {
                        value: r.value,
                        witness: r.disc,
                        diagnostics: PointDiagnostics {
                            branch: Some(label),
                            rounds: to_rounds(r.rounds),
                            rh: r.rh,
                            branch_values: Vec::new(),
                        },
                    });
                }
            }
            let mut best = best.expect("lift_point returns at least one lift");
            best.diagnostics.branch_values = branch_values;
            Ok(best)
        }
    }
}

fn to_rounds(r: Vec<(String, f64)>) -> Vec<RoundRecord> {
    r.into_iter().map(|(stage, value)| RoundRecord { stage, value }).collect()
}

/// Independent searches at every grid point, followed by a warm-start pass
/// that tries the witnesses of the four nearest neighbours recentered at
/// each point. The warm-start pass only reads first-pass witnesses, so the
/// result does not depend on evaluation order.
pub fn envelope_grid(
    u: &ScalarField,
    space: &SpaceModel,
    grid: &[ComplexPoint],
    b: &SearchBudget,
    q: &QuadratureSpec,
) -> Result<EnvelopeEstimate, EnvelopeError> {
    b.validate()?;
    let ut = u.decreasing_approximation(b.truncation);
    let first: Vec<Result<PointResult, EnvelopeError>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, x)| point_search(&ut, space, x, b, q, i))
        .collect();
    let mut failures = Vec::new();
    let mut results = Vec::with_capacity(grid.len());
    for (i, r) in first.into_iter().enumerate() {
        match r {
            Ok(r) => results.push(r),
            Err(e) => failures.push(EnvelopeError::AtPoint { index: i, source: Box::new(e) }),
        }
    }
    if !failures.is_empty() {
        return Err(EnvelopeError::Grid(failures));
    }

    let improved: Vec<Option<(AnalyticDisc, f64)>> = (0..grid.len())
        .into_par_iter()
        .map(|i| warm_start(&ut, space, grid, &results, i, b, q))
        .collect();
    for (r, imp) in results.iter_mut().zip(improved) {
        if let Some((disc, v)) = imp {
            r.diagnostics.branch = disc.branch_label().map(str::to_string);
            r.witness = disc;
            r.value = v;
            r.diagnostics.rounds.push(RoundRecord { stage: "warm start".into(), value: v });
        }
    }
    Ok(EnvelopeEstimate {
        points: grid.to_vec(),
        values: results.iter().map(|r| r.value).collect(),
        witnesses: results.iter().map(|r| r.witness.clone()).collect(),
        diagnostics: results.into_iter().map(|r| r.diagnostics).collect(),
    })
}

fn warm_start(
    ut: &ScalarField,
    space: &SpaceModel,
    grid: &[ComplexPoint],
    results: &[PointResult],
    i: usize,
    b: &SearchBudget,
    q: &QuadratureSpec,
) -> Option<(AnalyticDisc, f64)> {
    let x = &grid[i];
    let mut order: Vec<usize> = (0..grid.len()).filter(|&j| j != i).collect();
    order.sort_by(|&a, &c| x.dist(&grid[a]).total_cmp(&x.dist(&grid[c])).then(a.cmp(&c)));
    let mut best: Option<(AnalyticDisc, f64)> = None;
    let mut cur = results[i].value;
    let lifts = match space.kind {
        SpaceKind::Euclidean => Vec::new(),
        SpaceKind::NormalizedCurve => space.lift_point(x, b.center_tol).ok()?,
    };
    for &j in order.iter().take(4) {
        let w = &results[j].witness;
        if w.degree == 0 {
            continue;
        }
        let (center, branch) = match (&w.branch, space.kind) {
            (None, SpaceKind::Euclidean) => (x.0.clone(), None),
            (Some(br), SpaceKind::NormalizedCurve) => {
                let Some((_, t)) = lifts.iter().find(|(l, _)| *l == br.label) else {
                    continue;
                };
                (vec![*t], Some(br))
            }
            _ => continue,
        };
        let cand = w.recentered(&center);
        let v = match branch {
            None => Problem::new(ut, center, space.ambient_dim, None, space.domain.as_ref(), *q).value_of(&cand),
            Some(br) => {
                let up = ut.pull_back(br).ok()?;
                Problem::new(&up, center, space.ambient_dim, Some(br), space.domain.as_ref(), *q).value_of(&cand)
            }
        };
        if v < cur {
            cur = v;
            best = Some((cand, v));
        }
    }
    best
}

/// Convenience: a lattice of `n x n` points `lo + (j + i sqrt(-1)) * step` in one
/// coordinate, with the other coordinates fixed by `base`.
pub fn slice_lattice(base: &[Complex64], coord: usize, lo: Complex64, step: f64, n: usize) -> Vec<ComplexPoint> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut p = base.to_vec();
            p[coord] = lo + Complex64::new(j as f64 * step, i as f64 * step);
            out.push(ComplexPoint(p));
        }
    }
    out
}
