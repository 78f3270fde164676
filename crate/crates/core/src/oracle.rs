//! Brute-force ground truth in one complex variable, where the envelope is
//! the largest subharmonic minorant.
//!
//! [`subharmonic_minorant`] solves the discrete obstacle problem
//! `v = min(u, mean of the four neighbours of v)` on a square grid.
//! [`radial_envelope`] handles radial data, for which subharmonic means
//! convex and nondecreasing in `t = log |z|`.

use std::collections::VecDeque;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldError, ScalarField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid grid domain: {0}")]
    BadDomain(String),
    #[error("grid values must be finite on the active region")]
    NonFinite,
    #[error("no convergence after {iters} sweeps (last change {change:.3e})")]
    NotConverged { iters: usize, change: f64, last: Vec<f64> },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Square grid of `n x n` nodes over `[re0, re0 + (n-1)h] x [im0, im0 + (n-1)h]`.
///
/// Node `(i, j)` sits at `re0 + j h + i (im0 + i h)`, stored at `i * n + j`.
/// Active nodes are updated; the others hold the obstacle as boundary data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDomain {
    pub re0: f64,
    pub im0: f64,
    pub n: usize,
    pub h: f64,
    pub mask: Vec<bool>,
}

impl GridDomain {
    /// Grid over the square circumscribing the disc, active strictly inside it.
    pub fn disc(center: Complex64, radius: f64, n: usize) -> Result<Self, OracleError> {
        Self::annulus(center, 0.0, radius, n).map(|mut g| {
            let c = g.index_of(center);
            if let Some(c) = c {
                g.mask[c] = true;
            }
            g
        })
    }

    /// Active on `r_in < |z - center| < r_out`.
    pub fn annulus(center: Complex64, r_in: f64, r_out: f64, n: usize) -> Result<Self, OracleError> {
        if !(r_out > 0.0 && r_in >= 0.0 && r_in < r_out) {
            return Err(OracleError::BadDomain("need 0 <= r_in < r_out".into()));
        }
        let h = 2.0 * r_out / (n as f64 - 1.0);
        let mut g = Self { re0: center.re - r_out, im0: center.im - r_out, n, h, mask: vec![false; n * n] };
        for i in 0..n {
            for j in 0..n {
                let r = (g.node(i, j) - center).norm();
                g.mask[i * n + j] = r_in < r && r < r_out - 1e-12 * r_out;
            }
        }
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let n = self.n;
        if n < 33 {
            return Err(OracleError::BadDomain(format!("n = {n} is below 33")));
        }
        if self.mask.len() != n * n || !(self.h > 0.0) {
            return Err(OracleError::BadDomain("mask size or spacing".into()));
        }
        for i in 0..n {
            for j in 0..n {
                if self.mask[i * n + j] && (i == 0 || j == 0 || i == n - 1 || j == n - 1) {
                    return Err(OracleError::BadDomain("active node on the grid border".into()));
                }
            }
        }
        let active: Vec<usize> = (0..n * n).filter(|&k| self.mask[k]).collect();
        let Some(&start) = active.first() else {
            return Err(OracleError::BadDomain("empty mask".into()));
        };
        let mut seen = vec![false; n * n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut count = 0;
        while let Some(k) = queue.pop_front() {
            count += 1;
            for nb in [k - 1, k + 1, k - n, k + n] {
                if self.mask[nb] && !seen[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        if count != active.len() {
            return Err(OracleError::BadDomain("mask is not connected".into()));
        }
        Ok(())
    }

    pub fn node(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.re0 + j as f64 * self.h, self.im0 + i as f64 * self.h)
    }

    fn index_of(&self, z: Complex64) -> Option<usize> {
        let j = ((z.re - self.re0) / self.h).round();
        let i = ((z.im - self.im0) / self.h).round();
        if i < 0.0 || j < 0.0 || i >= self.n as f64 || j >= self.n as f64 {
            return None;
        }
        let (i, j) = (i as usize, j as usize);
        ((self.node(i, j) - z).norm() < 1e-9 * self.h).then_some(i * self.n + j)
    }

    /// `u` sampled at every node (row-major).
    pub fn sample(&self, u: &ScalarField) -> Result<Vec<f64>, OracleError> {
        let mut out = Vec::with_capacity(self.n * self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.push(u.eval(&[self.node(i, j)])?);
            }
        }
        Ok(out)
    }

    /// Bilinear interpolation of grid values at `z`; `None` outside the grid.
    pub fn interpolate(&self, v: &[f64], z: Complex64) -> Option<f64> {
        let x = (z.re - self.re0) / self.h;
        let y = (z.im - self.im0) / self.h;
        let top = (self.n - 1) as f64;
        if !(0.0..=top).contains(&x) || !(0.0..=top).contains(&y) {
            return None;
        }
        let j = (x.floor() as usize).min(self.n - 2);
        let i = (y.floor() as usize).min(self.n - 2);
        let (fx, fy) = (x - j as f64, y - i as f64);
        let at = |i: usize, j: usize| v[i * self.n + j];
        Some(
            (1.0 - fy) * ((1.0 - fx) * at(i, j) + fx * at(i, j + 1))
                + fy * ((1.0 - fx) * at(i + 1, j) + fx * at(i + 1, j + 1)),
        )
    }
}

/// Largest discrete subharmonic minorant of `u_grid` on the active nodes.
///
/// Gauss-Seidel sweeps in red-black order, starting from `v = u`, until the
/// largest change in a sweep drops below `tol`.
pub fn subharmonic_minorant(
    u_grid: &[f64],
    domain: &GridDomain,
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>, OracleError> {
    domain.validate()?;
    let n = domain.n;
    if u_grid.len() != n * n {
        return Err(OracleError::BadDomain("grid values do not match the domain".into()));
    }
    let active: [Vec<usize>; 2] = [0, 1].map(|color| {
        (0..n * n)
            .filter(|&k| domain.mask[k] && (k / n + k % n) % 2 == color)
            .collect()
    });
    if active.iter().flatten().any(|&k| !u_grid[k].is_finite())
        || active
            .iter()
            .flatten()
            .any(|&k| [k - 1, k + 1, k - n, k + n].iter().any(|&nb| !u_grid[nb].is_finite()))
    {
        return Err(OracleError::NonFinite);
    }
    let mut v = u_grid.to_vec();
    let mut change = f64::INFINITY;
    for _ in 0..max_iters {
        change = 0.0;
        for nodes in &active {
            for &k in nodes {
                let avg = 0.25 * (v[k - 1] + v[k + 1] + v[k - n] + v[k + n]);
                let new = u_grid[k].min(avg);
                change = f64::max(change, (v[k] - new).abs());
                v[k] = new;
            }
        }
        if change < tol {
            return Ok(v);
        }
    }
    Err(OracleError::NotConverged { iters: max_iters, change, last: v })
}

/// Piecewise-linear function through `(t, y)` vertices, extended by a
/// constant on the left and by `tail_slope` on the right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    pub ts: Vec<f64>,
    pub ys: Vec<f64>,
    pub tail_slope: f64,
}

impl PiecewiseLinear {
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.ts.len();
        if t <= self.ts[0] {
            return self.ys[0];
        }
        if t >= self.ts[n - 1] {
            return self.ys[n - 1] + self.tail_slope * (t - self.ts[n - 1]);
        }
        let k = self.ts.partition_point(|&s| s <= t) - 1;
        let w = (t - self.ts[k]) / (self.ts[k + 1] - self.ts[k]);
        self.ys[k] + w * (self.ys[k + 1] - self.ys[k])
    }
}

/// Largest convex nondecreasing minorant of radial samples `(t, u(e^t))`.
///
/// Beyond the last sample the data is assumed to continue with its last
/// secant slope, so the minorant's slopes are capped there: a field that
/// is bounded as `|z| -> inf` only admits constants.
pub fn radial_envelope(samples: &[(f64, f64)]) -> Result<PiecewiseLinear, OracleError> {
    if samples.is_empty() || samples.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
        return Err(OracleError::NonFinite);
    }
    if samples.windows(2).any(|w| !(w[0].0 < w[1].0)) {
        return Err(OracleError::BadDomain("samples must be strictly increasing in t".into()));
    }
    let n = samples.len();
    if n == 1 {
        return Ok(PiecewiseLinear { ts: vec![samples[0].0], ys: vec![samples[0].1], tail_slope: 0.0 });
    }
    // Lower hull by the monotone chain.
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(n);
    for &p in samples {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let (p, q) = (samples[n - 2], samples[n - 1]);
    let s = ((q.1 - p.1) / (q.0 - p.0)).max(0.0);
    let scale = samples.iter().map(|(t, y)| t.abs().max(y.abs())).fold(1.0, f64::max);
    let mut support = 0;
    let mut best = f64::INFINITY;
    for (k, &(t, y)) in hull.iter().enumerate() {
        let v = y - s * t;
        if v <= best + 1e-12 * scale {
            best = best.min(v);
            support = k;
        }
    }
    hull.truncate(support + 1);
    let (ts, ys) = hull[support];
    let t_end = samples[n - 1].0;
    if t_end > ts {
        hull.push((t_end, ys + s * (t_end - ts)));
    }
    let (imin, ymin) = hull
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, &(_, y))| if y < acc.1 { (k, y) } else { acc });
    for v in hull.iter_mut().take(imin) {
        v.1 = ymin;
    }
    Ok(PiecewiseLinear {
        ts: hull.iter().map(|v| v.0).collect(),
        ys: hull.iter().map(|v| v.1).collect(),
        tail_slope: s,
    })
}
