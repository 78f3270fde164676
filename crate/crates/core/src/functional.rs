//! The Poisson functional `P_u(f)`: the mean of `u` over the boundary
//! circle of a disc, by the trapezoid rule on `M` equispaced nodes.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::disc::AnalyticDisc;
use crate::field::{FieldError, ScalarField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("node count {0} must be a power of two and at least 16")]
    BadNodeCount(usize),
    #[error("arc [{0}, {1}] must satisfy 0 <= t0 < t1 <= 2pi")]
    BadArc(f64, f64),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Quadrature on the unit circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct QuadratureSpec {
    pub m: usize,
    /// Floor applied to integrand values before averaging.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    m: usize,
    #[serde(default)]
    clip: Option<f64>,
}

impl TryFrom<RawSpec> for QuadratureSpec {
    type Error = QuadratureError;
    fn try_from(r: RawSpec) -> Result<Self, Self::Error> {
        Ok(Self::new(r.m)?.with_clip_opt(r.clip))
    }
}

impl QuadratureSpec {
    pub fn new(m: usize) -> Result<Self, QuadratureError> {
        if m < 16 || !m.is_power_of_two() {
            return Err(QuadratureError::BadNodeCount(m));
        }
        Ok(Self { m, clip: None })
    }

    pub fn with_clip(self, clip: f64) -> Self {
        Self { clip: Some(clip), ..self }
    }

    fn with_clip_opt(self, clip: Option<f64>) -> Self {
        Self { clip, ..self }
    }

    /// Node angles `2 pi l / M`.
    pub fn angles(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.m).map(move |l| TAU * l as f64 / self.m as f64)
    }
}

/// `e^{2 pi i l / m}` for `l < m`, with the quarter points exact.
pub fn roots_of_unity(m: usize) -> Vec<Complex64> {
    (0..m).map(|l| unit_root(l, m)).collect()
}

/// `e^{2 pi i l / m}`, exact when `4 l / m` is an integer.
pub fn unit_root(l: usize, m: usize) -> Complex64 {
    if (4 * l) % m == 0 {
        match (4 * l / m) % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    } else {
        let (s, c) = (TAU * l as f64 / m as f64).sin_cos();
        Complex64::new(c, s)
    }
}

/// Mean of integrand samples in index order. Any `-inf` sample makes the
/// mean `-inf` unless a clip floor is given. Equal samples give that value
/// exactly.
pub fn mean_value(values: &[f64], clip: Option<f64>) -> f64 {
    if let Some(&first) = values.first() {
        if values.iter().all(|&v| v == first) {
            return clip.map_or(first, |c| first.max(c));
        }
    }
    let mut sum = 0.0;
    for &v in values {
        let v = match clip {
            Some(c) => v.max(c),
            None => v,
        };
        if v == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        sum += v;
    }
    sum / values.len() as f64
}

/// `u(f(e^{it}))` at the `M` nodes, in node order.
pub fn boundary_samples(u: &ScalarField, f: &AnalyticDisc, m: usize) -> Result<Vec<f64>, FieldError> {
    let pts = f.boundary_params(m);
    let w = f.width();
    let mut amb = vec![Complex64::new(0.0, 0.0); f.ambient_dim];
    pts.chunks_exact(w)
        .map(|p| {
            if f.branch.is_none() || u.is_pulled_back() {
                u.eval(p)
            } else {
                f.push_forward(p, &mut amb);
                u.eval(&amb)
            }
        })
        .collect()
}

/// `P_u(f) = mean over t of u(f(e^{it}))`.
pub fn poisson_functional(u: &ScalarField, f: &AnalyticDisc, q: &QuadratureSpec) -> Result<f64, FieldError> {
    let vals = boundary_samples(u, f, q.m)?;
    Ok(mean_value(&vals, q.clip))
}

/// Trapezoid weights (in units of `1/M`) of the nodes inside `[t0, t1]`,
/// with half weight on nodes that coincide with an endpoint.
pub fn arc_weights(m: usize, t0: f64, t1: f64) -> Result<Vec<(usize, f64)>, QuadratureError> {
    if !(0.0 <= t0 && t0 < t1 && t1 <= TAU) {
        return Err(QuadratureError::BadArc(t0, t1));
    }
    let h = TAU / m as f64;
    let s0 = t0 / h;
    let s1 = t1 / h;
    let first = s0.ceil() as usize;
    let last = s1.floor() as usize;
    let mut out = Vec::new();
    for l in first..=last {
        let mut w = 1.0;
        if l as f64 == s0 {
            w -= 0.5;
        }
        if l as f64 == s1 {
            w -= 0.5;
        }
        out.push((l % m, w));
    }
    if first > last {
        return Ok(out);
    }
    // The same node can appear at both ends of the full circle.
    out.sort_by_key(|&(l, _)| l);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(out.len());
    for (l, w) in out {
        match merged.last_mut() {
            Some((pl, pw)) if *pl == l => *pw += w,
            _ => merged.push((l, w)),
        }
    }
    Ok(merged)
}

/// `(1/2pi) * integral over [t0, t1] of u(f(e^{it})) dt`, normalized by the
/// full circle rather than the arc length.
pub fn arc_functional(
    u: &ScalarField,
    f: &AnalyticDisc,
    q: &QuadratureSpec,
    arc: (f64, f64),
) -> Result<f64, QuadratureError> {
    let weights = arc_weights(q.m, arc.0, arc.1)?;
    if arc == (0.0, TAU) {
        return Ok(poisson_functional(u, f, q)?);
    }
    let vals = boundary_samples(u, f, q.m)?;
    Ok(weighted(&vals, &weights, q.clip))
}

pub(crate) fn weighted(values: &[f64], weights: &[(usize, f64)], clip: Option<f64>) -> f64 {
    let mut sum = 0.0;
    for &(l, w) in weights {
        let v = match clip {
            Some(c) => values[l].max(c),
            None => values[l],
        };
        if v == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        sum += w * v;
    }
    sum / values.len() as f64
}
