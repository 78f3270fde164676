//! Polynomial analytic discs and the Riemann-Hilbert composition
//! `h(z) = f(z) + lam(z, c z^k)` that merges a family of discs attached
//! along the boundary of `f` into a single disc through `f(0)`.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::ScalarField;
use crate::functional::{arc_weights, roots_of_unity, unit_root, QuadratureError};
use crate::poly;
use crate::space::{dist_max, BranchMap, ComplexPoint};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscError {
    #[error("invalid disc: {0}")]
    Invalid(String),
    #[error("|zeta| = {0} lies outside the closed unit disc")]
    OutsideClosedDisc(f64),
    #[error("invalid boundary family: {0}")]
    BadFamily(String),
    #[error("least-squares system ill conditioned (estimate {estimate:.3e} > {bound:.3e}); raise deg_a or the sample count, or lower n_terms")]
    IllConditioned { estimate: f64, bound: f64 },
    #[error("composed disc has degree {degree}, above the cap {cap}")]
    DegreeOverflow { degree: usize, cap: usize },
    #[error("winding number k = {k} must exceed the pole order m = {m}")]
    BadWinding { k: usize, m: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// A polynomial map from the closed unit disc into `C^N`.
///
/// `coeffs` is row-major with `degree + 1` rows. Euclidean discs have `N`
/// columns. Branch discs have one column holding the normalization
/// parameter and are pushed forward through `branch`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDisc")]
pub struct AnalyticDisc {
    pub degree: usize,
    pub ambient_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch: Option<BranchMap>,
    pub coeffs: Vec<Complex64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDisc {
    degree: usize,
    ambient_dim: usize,
    #[serde(default)]
    branch: Option<BranchMap>,
    coeffs: Vec<Complex64>,
}

impl TryFrom<RawDisc> for AnalyticDisc {
    type Error = DiscError;
    fn try_from(r: RawDisc) -> Result<Self, DiscError> {
        let d = AnalyticDisc { degree: r.degree, ambient_dim: r.ambient_dim, branch: r.branch, coeffs: r.coeffs };
        d.validate()?;
        Ok(d)
    }
}

impl AnalyticDisc {
    /// The constant disc at `x`.
    pub fn constant(x: &[Complex64]) -> Self {
        Self { degree: 0, ambient_dim: x.len(), branch: None, coeffs: x.to_vec() }
    }

    /// The constant disc at parameter `t` of `branch`.
    pub fn constant_in_branch(branch: &BranchMap, t: Complex64) -> Self {
        Self { degree: 0, ambient_dim: branch.dim(), branch: Some(branch.clone()), coeffs: vec![t] }
    }

    /// Builds a disc from coefficient rows `a_0, a_1, ...`.
    pub fn from_rows(rows: Vec<Vec<Complex64>>, branch: Option<BranchMap>) -> Result<Self, DiscError> {
        let width = rows.first().map(|r| r.len()).unwrap_or(0);
        let ambient_dim = branch.as_ref().map_or(width, |b| b.dim());
        let d = Self {
            degree: rows.len().saturating_sub(1),
            ambient_dim,
            branch,
            coeffs: rows.into_iter().flatten().collect(),
        };
        d.validate()?;
        Ok(d)
    }

    pub(crate) fn from_flat(coeffs: Vec<Complex64>, width: usize, ambient_dim: usize, branch: Option<BranchMap>) -> Self {
        debug_assert_eq!(coeffs.len() % width, 0);
        Self { degree: coeffs.len() / width - 1, ambient_dim, branch, coeffs }
    }

    pub fn validate(&self) -> Result<(), DiscError> {
        let w = self.width();
        if w == 0 {
            return Err(DiscError::Invalid("zero-dimensional disc".into()));
        }
        if let Some(b) = &self.branch {
            if b.dim() != self.ambient_dim {
                return Err(DiscError::Invalid("branch dimension differs from ambient_dim".into()));
            }
        }
        if self.coeffs.len() != (self.degree + 1) * w {
            return Err(DiscError::Invalid(format!(
                "expected {} coefficients for degree {} and width {}, got {}",
                (self.degree + 1) * w,
                self.degree,
                w,
                self.coeffs.len()
            )));
        }
        if self.coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(DiscError::Invalid("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// Number of columns: 1 for branch discs, `N` otherwise.
    pub fn width(&self) -> usize {
        if self.branch.is_some() {
            1
        } else {
            self.ambient_dim
        }
    }

    pub fn row(&self, j: usize) -> &[Complex64] {
        let w = self.width();
        &self.coeffs[j * w..(j + 1) * w]
    }

    /// Coefficient of `zeta^j` in column `c`, zero above the degree.
    pub fn coeff(&self, j: usize, c: usize) -> Complex64 {
        if j > self.degree {
            ZERO
        } else {
            self.coeffs[j * self.width() + c]
        }
    }

    /// Center in the parameter space of the disc (row 0).
    pub fn center_param(&self) -> &[Complex64] {
        self.row(0)
    }

    /// `f(0)` in ambient coordinates.
    pub fn center(&self) -> ComplexPoint {
        let mut out = vec![ZERO; self.ambient_dim];
        self.push_forward(self.center_param(), &mut out);
        ComplexPoint(out)
    }

    /// Parameter-space value at `zeta`.
    pub fn eval_param_into(&self, zeta: Complex64, out: &mut [Complex64]) {
        let w = self.width();
        out.iter_mut().for_each(|o| *o = ZERO);
        for j in (0..=self.degree).rev() {
            let row = &self.coeffs[j * w..(j + 1) * w];
            for (o, a) in out.iter_mut().zip(row) {
                *o = *o * zeta + a;
            }
        }
    }

    /// Ambient value of a parameter-space point.
    #[inline]
    pub fn push_forward(&self, param: &[Complex64], out: &mut [Complex64]) {
        match &self.branch {
            Some(b) => b.eval_into(param[0], out),
            None => out.copy_from_slice(param),
        }
    }

    /// `f(zeta)` in ambient coordinates, for `|zeta| <= 1`.
    pub fn eval(&self, zeta: Complex64) -> Result<ComplexPoint, DiscError> {
        if !(zeta.norm() <= 1.0 + 1e-12) {
            return Err(DiscError::OutsideClosedDisc(zeta.norm()));
        }
        let mut p = vec![ZERO; self.width()];
        self.eval_param_into(zeta, &mut p);
        let mut out = vec![ZERO; self.ambient_dim];
        self.push_forward(&p, &mut out);
        Ok(ComplexPoint(out))
    }

    /// Parameter values at the `m` roots of unity, `m x width` row-major.
    pub fn boundary_params(&self, m: usize) -> Vec<Complex64> {
        self.params_on_circle(&roots_of_unity(m), 1.0)
    }

    /// Parameter values at `r * nodes[l]`.
    pub fn params_on_circle(&self, nodes: &[Complex64], r: f64) -> Vec<Complex64> {
        let w = self.width();
        let mut out = vec![ZERO; nodes.len() * w];
        for (l, z) in nodes.iter().enumerate() {
            self.eval_param_into(z * r, &mut out[l * w..(l + 1) * w]);
        }
        out
    }

    /// Ambient values at the `m` roots of unity, `m x N` row-major.
    pub fn boundary_points(&self, m: usize) -> Vec<Complex64> {
        let params = self.boundary_params(m);
        if self.branch.is_none() {
            return params;
        }
        let n = self.ambient_dim;
        let mut out = vec![ZERO; m * n];
        for l in 0..m {
            self.push_forward(&params[l..l + 1], &mut out[l * n..(l + 1) * n]);
        }
        out
    }

    /// Same disc with zero rows appended up to `degree`.
    pub fn padded(&self, degree: usize) -> Self {
        let mut d = self.clone();
        if degree > d.degree {
            d.coeffs.resize((degree + 1) * self.width(), ZERO);
            d.degree = degree;
        }
        d
    }

    /// Drops trailing rows that are exactly zero, keeping at least `min_degree`.
    pub fn trimmed(mut self, min_degree: usize) -> Self {
        let w = self.width();
        while self.degree > min_degree && self.row(self.degree).iter().all(|c| *c == ZERO) {
            self.degree -= 1;
            self.coeffs.truncate((self.degree + 1) * w);
        }
        self
    }

    /// Same shape with the center row replaced.
    pub fn recentered(&self, center: &[Complex64]) -> Self {
        let mut d = self.clone();
        d.coeffs[..center.len()].copy_from_slice(center);
        d
    }

    /// Label of the branch, if any.
    pub fn branch_label(&self) -> Option<&str> {
        self.branch.as_ref().map(|b| b.label.as_str())
    }
}

/// `lam(zeta, z) = zeta^{-m} sum_{j=1..N} A_j(zeta) z^j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaurentFamily {
    pub m: usize,
    pub n_terms: usize,
    pub deg_a: usize,
    pub width: usize,
    /// `A_j` coefficient `p`, column `c` at `((j - 1) * (deg_a + 1) + p) * width + c`.
    pub a: Vec<Complex64>,
}

impl LaurentFamily {
    pub fn zero(m: usize, n_terms: usize, deg_a: usize, width: usize) -> Self {
        Self { m, n_terms, deg_a, width, a: vec![ZERO; n_terms * (deg_a + 1) * width] }
    }

    #[inline]
    pub fn get(&self, j: usize, p: usize, c: usize) -> Complex64 {
        self.a[((j - 1) * (self.deg_a + 1) + p) * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, j: usize, p: usize, c: usize, v: Complex64) {
        let i = ((j - 1) * (self.deg_a + 1) + p) * self.width + c;
        self.a[i] = v;
    }

    /// `A_j(zeta)` in column `c`.
    pub fn a_at(&self, j: usize, c: usize, zeta: Complex64) -> Complex64 {
        let mut acc = ZERO;
        for p in (0..=self.deg_a).rev() {
            acc = acc * zeta + self.get(j, p, c);
        }
        acc
    }

    /// `lam(zeta, z)` for `zeta != 0`.
    pub fn eval(&self, zeta: Complex64, z: Complex64) -> Vec<Complex64> {
        let pole = zeta.powi(-(self.m as i32));
        (0..self.width)
            .map(|c| {
                let mut acc = ZERO;
                for j in (1..=self.n_terms).rev() {
                    acc = (acc + self.a_at(j, c, zeta)) * z;
                }
                acc * pole
            })
            .collect()
    }
}

/// Discs `g_t` attached at the boundary points `f(e^{it})`, `t = 2 pi j / M`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryFamily {
    pub base: AnalyticDisc,
    pub discs: Vec<AnalyticDisc>,
}

impl BoundaryFamily {
    pub fn new(base: AnalyticDisc, discs: Vec<AnalyticDisc>, tol: f64) -> Result<Self, DiscError> {
        if discs.is_empty() {
            return Err(DiscError::BadFamily("no sample discs".into()));
        }
        let m = discs.len();
        let anchors = base.boundary_params(m);
        let w = base.width();
        for (j, g) in discs.iter().enumerate() {
            if g.width() != w || g.branch_label() != base.branch_label() {
                return Err(DiscError::BadFamily(format!("disc {j} lives in a different space than the base")));
            }
            let gap = dist_max(g.center_param(), &anchors[j * w..(j + 1) * w]);
            if !(gap <= tol) {
                return Err(DiscError::BadFamily(format!("disc {j} is centered {gap:.3e} away from f(e^(it))")));
            }
        }
        Ok(Self { base, discs })
    }

    pub fn len(&self) -> usize {
        self.discs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.discs.is_empty()
    }

    pub fn angle(&self, j: usize) -> f64 {
        TAU * j as f64 / self.len() as f64
    }
}

/// Controls for [`fit_laurent`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Number of `theta` samples per boundary disc.
    pub n_theta: usize,
    /// Largest accepted condition estimate of the least-squares matrix.
    pub cond_max: f64,
    /// Tolerance whose half defines the `r'` diagnostic.
    pub eps: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { n_theta: 32, cond_max: 1e8, eps: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaurentFit {
    pub family: LaurentFamily,
    /// Largest `|lam - fitted|` over the sample grid.
    pub residual: f64,
    pub condition: f64,
    /// Smallest radius in `{0.90, 0.95, 0.99}` from which on both the fit and
    /// `f` stay within `eps / 2` of their boundary values.
    pub r_prime: Option<f64>,
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Least-squares fit of `lam(zeta, z) = g_zeta(z) - f(zeta)` on the grid of
/// boundary angles and `n_theta` angles in `z`.
pub fn fit_laurent(
    family: &BoundaryFamily,
    m: usize,
    n_terms: usize,
    deg_a: usize,
    opts: &FitOptions,
) -> Result<LaurentFit, DiscError> {
    if n_terms == 0 {
        return Err(DiscError::Invalid("n_terms must be positive".into()));
    }
    let w = family.base.width();
    let mb = family.len();
    let nt = opts.n_theta;
    let zetas = roots_of_unity(mb);
    let zs = roots_of_unity(nt);
    let f_b = family.base.boundary_params(mb);
    let rows = mb * nt;
    let cols = n_terms * (deg_a + 1);

    let mut target = DMatrix::<Complex64>::zeros(rows, w);
    let mut design = DMatrix::<Complex64>::zeros(rows, cols);
    for (jt, g) in family.discs.iter().enumerate() {
        let gv = g.params_on_circle(&zs, 1.0);
        let zeta = zetas[jt];
        for (l, z) in zs.iter().enumerate() {
            let r = jt * nt + l;
            for c in 0..w {
                target[(r, c)] = gv[l * w + c] - f_b[jt * w + c];
            }
            for j in 1..=n_terms {
                let zj = z.powu(j as u32);
                for p in 0..=deg_a {
                    let e = p as i32 - m as i32;
                    design[(r, (j - 1) * (deg_a + 1) + p)] = zeta.powi(e) * zj;
                }
            }
        }
    }

    let qr = design.clone().col_piv_qr();
    let rr = qr.r();
    let diag: Vec<f64> = (0..cols).map(|i| rr[(i, i)].norm()).collect();
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if dmin > 0.0 { dmax / dmin } else { f64::INFINITY };
    if rows < cols || !(condition <= opts.cond_max) {
        return Err(DiscError::IllConditioned { estimate: condition, bound: opts.cond_max });
    }
    let qh_b = qr.q().adjoint() * &target;
    let mut x = rr
        .solve_upper_triangular(&qh_b)
        .ok_or(DiscError::IllConditioned { estimate: f64::INFINITY, bound: opts.cond_max })?;
    qr.p().inv_permute_rows(&mut x);

    let mut lam = LaurentFamily::zero(m, n_terms, deg_a, w);
    for j in 1..=n_terms {
        for p in 0..=deg_a {
            for c in 0..w {
                lam.set(j, p, c, x[((j - 1) * (deg_a + 1) + p, c)]);
            }
        }
    }
    let fitted = &design * &x;
    let residual = (0..rows)
        .map(|r| {
            let d: Vec<Complex64> = (0..w).map(|c| fitted[(r, c)] - target[(r, c)]).collect();
            norm(&d)
        })
        .fold(0.0, f64::max);

    let r_prime = r_prime_diagnostic(family, &lam, opts.eps, &zetas, &zs, &target);
    Ok(LaurentFit { family: lam, residual, condition, r_prime })
}

fn r_prime_diagnostic(
    family: &BoundaryFamily,
    lam: &LaurentFamily,
    eps: f64,
    zetas: &[Complex64],
    zs: &[Complex64],
    target: &DMatrix<Complex64>,
) -> Option<f64> {
    const RADII: [f64; 3] = [0.90, 0.95, 0.99];
    let w = lam.width;
    let nt = zs.len();
    let f = &family.base;
    let ok = |rho: f64| {
        let f1 = f.params_on_circle(zetas, 1.0);
        let fr = f.params_on_circle(zetas, rho);
        for (jt, zeta) in zetas.iter().enumerate() {
            let df: Vec<Complex64> = (0..w).map(|c| fr[jt * w + c] - f1[jt * w + c]).collect();
            if norm(&df) >= eps / 2.0 {
                return false;
            }
            for (l, z) in zs.iter().enumerate() {
                let v = lam.eval(zeta * rho, *z);
                let d: Vec<Complex64> = (0..w).map(|c| v[c] - target[(jt * nt + l, c)]).collect();
                if norm(&d) >= eps / 2.0 {
                    return false;
                }
            }
        }
        true
    };
    let good: Vec<bool> = RADII.iter().map(|&r| ok(r)).collect();
    if !ok(1.0) {
        return None;
    }
    (0..RADII.len()).find(|&i| good[i..].iter().all(|g| *g)).map(|i| RADII[i])
}

/// `h(zeta) = f(zeta) + c zeta^{k-m} sum_j A_j(zeta) (c zeta^k)^{j-1}`.
///
/// Row 0 of `h` is copied from `f`, so `h(0) = f(0)` exactly.
pub fn compose_rh(
    f: &AnalyticDisc,
    lam: &LaurentFamily,
    k: usize,
    c: Complex64,
    degree_cap: usize,
) -> Result<AnalyticDisc, DiscError> {
    if k <= lam.m {
        return Err(DiscError::BadWinding { k, m: lam.m });
    }
    if (c.norm() - 1.0).abs() > 1e-12 {
        return Err(DiscError::Invalid(format!("phase {c} is not unimodular")));
    }
    if lam.width != f.width() {
        return Err(DiscError::Invalid("Laurent family width differs from the disc".into()));
    }
    let w = f.width();
    let top = (k * lam.n_terms - lam.m + lam.deg_a).max(f.degree);
    let mut coeffs = vec![ZERO; (top + 1) * w];
    coeffs[..f.coeffs.len()].copy_from_slice(&f.coeffs);
    let mut cj = Complex64::new(1.0, 0.0);
    for j in 1..=lam.n_terms {
        cj *= c;
        for p in 0..=lam.deg_a {
            let e = k * j - lam.m + p;
            for col in 0..w {
                coeffs[e * w + col] += cj * lam.get(j, p, col);
            }
        }
    }
    let h = AnalyticDisc::from_flat(coeffs, w, f.ambient_dim, f.branch.clone()).trimmed(f.degree);
    if h.degree > degree_cap {
        return Err(DiscError::DegreeOverflow { degree: h.degree, cap: degree_cap });
    }
    Ok(h)
}

/// Boundary values of `h_k(., c)` for many phases `c`, sharing the work.
pub(crate) struct PhaseSweep {
    m: usize,
    w: usize,
    n_terms: usize,
    base: Vec<Complex64>,
    /// `e^{i(kj - m)t_l} A_j(e^{it_l})`, indexed `((j - 1) * m + l) * w + c`.
    terms: Vec<Complex64>,
}

impl PhaseSweep {
    pub(crate) fn new(f: &AnalyticDisc, lam: &LaurentFamily, k: usize, m: usize) -> Self {
        let w = f.width();
        let nodes = roots_of_unity(m);
        let base = f.boundary_params(m);
        let mut terms = vec![ZERO; lam.n_terms * m * w];
        for j in 1..=lam.n_terms {
            let e = (k * j - lam.m) % m;
            for (l, z) in nodes.iter().enumerate() {
                let rot = nodes[(e * l) % m];
                for c in 0..w {
                    terms[((j - 1) * m + l) * w + c] = rot * lam.a_at(j, c, *z);
                }
            }
        }
        Self { m, w, n_terms: lam.n_terms, base, terms }
    }

    /// Parameter values of `h_k(e^{it_l}, c)` at every node.
    pub(crate) fn values(&self, c: Complex64, out: &mut Vec<Complex64>) {
        out.clear();
        out.extend_from_slice(&self.base);
        let mut cj = Complex64::new(1.0, 0.0);
        for j in 1..=self.n_terms {
            cj *= c;
            let t = &self.terms[(j - 1) * self.m * self.w..j * self.m * self.w];
            for (o, v) in out.iter_mut().zip(t) {
                *o += cj * v;
            }
        }
    }
}

/// Phase `c = e^{i phi}` on an equispaced grid minimizing the arc integral
/// of `node_value` along `h_k(., c)`; ties go to the smallest `phi`.
///
/// `node_value` maps a parameter-space point to the integrand value.
pub(crate) fn scan_phases<F>(
    sweep: &PhaseSweep,
    weights: &[(usize, f64)],
    n_phases: usize,
    node_value: F,
) -> (Complex64, f64, f64)
where
    F: Fn(&[Complex64]) -> f64 + Sync,
{
    let m = sweep.m;
    let w = sweep.w;
    let vals: Vec<f64> = (0..n_phases)
        .into_par_iter()
        .map(|i| {
            let c = phase(i, n_phases);
            let mut buf = Vec::with_capacity(m * w);
            sweep.values(c, &mut buf);
            let mut sum = 0.0;
            for &(l, wt) in weights {
                let v = node_value(&buf[l * w..(l + 1) * w]);
                if v.is_nan() {
                    return f64::INFINITY;
                }
                sum += wt * v;
            }
            sum / m as f64
        })
        .collect();
    let mut best = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v < vals[best] {
            best = i;
        }
    }
    let mean = vals.iter().sum::<f64>() / n_phases as f64;
    (phase(best, n_phases), vals[best], mean)
}

pub(crate) fn phase(i: usize, n: usize) -> Complex64 {
    unit_root(i, n)
}

/// Merged trapezoid weights of a list of arcs.
pub(crate) fn arcs_weights(m: usize, arcs: &[(f64, f64)]) -> Result<Vec<(usize, f64)>, DiscError> {
    let mut all = Vec::new();
    for &(a, b) in arcs {
        all.extend(arc_weights(m, a, b)?);
    }
    all.sort_by_key(|x| x.0);
    let mut merged: Vec<(usize, f64)> = Vec::new();
    for (l, wt) in all {
        match merged.last_mut() {
            Some((pl, pw)) if *pl == l => *pw += wt,
            _ => merged.push((l, wt)),
        }
    }
    Ok(merged)
}

/// Picks the phase of `h_k = f + lam(., c zeta^k)` minimizing
/// `sum over arcs of (1/2pi) int u(h_k(e^{it}, c)) dt` over `n_phases`
/// equispaced phases, using `m` boundary nodes.
///
/// Nodes where `u` fails to evaluate count as `+inf`.
pub fn choose_phase(
    f: &AnalyticDisc,
    lam: &LaurentFamily,
    k: usize,
    u: &ScalarField,
    arcs: &[(f64, f64)],
    n_phases: usize,
    m: usize,
) -> Result<(Complex64, f64), DiscError> {
    if n_phases < 8 {
        return Err(DiscError::Invalid("n_phases must be at least 8".into()));
    }
    if k <= lam.m {
        return Err(DiscError::BadWinding { k, m: lam.m });
    }
    let weights = arcs_weights(m, arcs)?;
    let sweep = PhaseSweep::new(f, lam, k, m);
    let push = f.branch.is_some() && !u.is_pulled_back();
    let n = f.ambient_dim;
    let (c, v, _) = scan_phases(&sweep, &weights, n_phases, |p| {
        let r = if push {
            let mut amb = [ZERO; 8];
            let mut big;
            let q: &mut [Complex64] = if n <= 8 {
                &mut amb[..n]
            } else {
                big = vec![ZERO; n];
                &mut big
            };
            f.push_forward(p, q);
            u.eval(q)
        } else {
            u.eval(p)
        };
        r.unwrap_or(f64::INFINITY)
    });
    Ok((c, v))
}

/// Parameters of one Riemann-Hilbert refinement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhOptions {
    /// Pole order `m` of the Laurent ansatz.
    pub m: usize,
    pub n_terms: usize,
    pub deg_a: usize,
    /// Winding numbers tried, each must exceed `m`.
    pub k_schedule: Vec<usize>,
    pub n_phases: usize,
    pub degree_cap: usize,
    pub fit: FitOptions,
}

/// Result of [`rh_refine`].
#[derive(Clone, Debug, PartialEq)]
pub struct RhOutcome {
    pub disc: AnalyticDisc,
    pub k: usize,
    pub c: Complex64,
    /// Arc integral of `u` along the composed disc.
    pub value: f64,
    /// Arc integral of `u` over the fitted family, averaged over `theta`.
    pub double_integral: f64,
    /// `max(0, value - double_integral)`.
    pub eps_report: f64,
    pub fit: LaurentFit,
    /// Winding numbers skipped because the composed degree would exceed the cap.
    pub skipped_k: Vec<usize>,
}

/// Fits the family, sweeps winding numbers and phases, and returns the best
/// composed disc with its measured deviation from the double integral.
pub fn rh_refine(
    u: &ScalarField,
    family: &BoundaryFamily,
    opts: &RhOptions,
    m_nodes: usize,
    arcs: &[(f64, f64)],
) -> Result<RhOutcome, DiscError> {
    let f = &family.base;
    let push = f.branch.is_some() && !u.is_pulled_back();
    let n = f.ambient_dim;
    refine_with(family, opts, m_nodes, arcs, |p| {
        let r = if push {
            let mut q = vec![ZERO; n];
            f.push_forward(p, &mut q);
            u.eval(&q)
        } else {
            u.eval(p)
        };
        r.unwrap_or(f64::INFINITY)
    })
}

pub(crate) fn refine_with<F>(
    family: &BoundaryFamily,
    opts: &RhOptions,
    m_nodes: usize,
    arcs: &[(f64, f64)],
    node_value: F,
) -> Result<RhOutcome, DiscError>
where
    F: Fn(&[Complex64]) -> f64 + Sync,
{
    if opts.n_phases < 8 {
        return Err(DiscError::Invalid("n_phases must be at least 8".into()));
    }
    let f = &family.base;
    let fit = fit_laurent(family, opts.m, opts.n_terms, opts.deg_a, &opts.fit)?;
    let lam = &fit.family;
    let weights = arcs_weights(m_nodes, arcs)?;
    let mut best: Option<(usize, Complex64, f64)> = None;
    let mut skipped_k = Vec::new();
    for &k in &opts.k_schedule {
        if k <= lam.m {
            return Err(DiscError::BadWinding { k, m: lam.m });
        }
        if (k * lam.n_terms - lam.m + lam.deg_a).max(f.degree) > opts.degree_cap {
            skipped_k.push(k);
            continue;
        }
        let sweep = PhaseSweep::new(f, lam, k, m_nodes);
        let (c, v, _) = scan_phases(&sweep, &weights, opts.n_phases, &node_value);
        if best.map_or(true, |b| v < b.2) {
            best = Some((k, c, v));
        }
    }
    let Some((k, c, value)) = best else {
        let smallest = skipped_k.iter().map(|&k| (k * lam.n_terms - lam.m + lam.deg_a).max(f.degree)).min();
        return Err(DiscError::DegreeOverflow { degree: smallest.unwrap_or(f.degree), cap: opts.degree_cap });
    };
    let disc = compose_rh(f, lam, k, c, opts.degree_cap)?;
    let double_integral = family_double_integral(f, lam, &weights, m_nodes, 4 * opts.n_phases, &node_value);
    let eps_report = if value.is_finite() && double_integral.is_finite() {
        (value - double_integral).max(0.0)
    } else {
        0.0
    };
    Ok(RhOutcome { disc, k, c, value, double_integral, eps_report, fit, skipped_k })
}

/// `(1/n_theta) sum_theta sum_arcs (1/M) sum_t w_t u(f(e^{it}) + lam(e^{it}, e^{i theta}))`.
fn family_double_integral<F>(
    f: &AnalyticDisc,
    lam: &LaurentFamily,
    weights: &[(usize, f64)],
    m_nodes: usize,
    n_theta: usize,
    node_value: &F,
) -> f64
where
    F: Fn(&[Complex64]) -> f64 + Sync,
{
    let w = f.width();
    let nodes = roots_of_unity(m_nodes);
    let base = f.boundary_params(m_nodes);
    let thetas = roots_of_unity(n_theta);
    let per_theta: Vec<f64> = thetas
        .par_iter()
        .map(|z| {
            let mut sum = 0.0;
            let mut p = vec![ZERO; w];
            for &(l, wt) in weights {
                let v = lam.eval(nodes[l], *z);
                for c in 0..w {
                    p[c] = base[l * w + c] + v[c];
                }
                sum += wt * node_value(&p);
            }
            sum / m_nodes as f64
        })
        .collect();
    per_theta.iter().sum::<f64>() / n_theta as f64
}

/// `max |a - b|` over `n` points of the circle `|zeta| = r`; by the maximum
/// principle this bounds `|a - b|` on the whole disc of radius `r`.
pub fn sup_gap_on_circle(a: &AnalyticDisc, b: &AnalyticDisc, r: f64, n: usize) -> f64 {
    let nodes = roots_of_unity(n);
    let pa = a.params_on_circle(&nodes, r);
    let pb = b.params_on_circle(&nodes, r);
    let w = a.width();
    (0..n)
        .map(|l| {
            let d: Vec<Complex64> = (0..w).map(|c| pa[l * w + c] - pb[l * w + c]).collect();
            norm(&d)
        })
        .fold(0.0, f64::max)
}

/// Coefficient-wise check of the center condition.
pub fn same_center(a: &AnalyticDisc, b: &AnalyticDisc) -> bool {
    a.center_param() == b.center_param()
}

pub(crate) fn poly_column(d: &AnalyticDisc, c: usize) -> Vec<Complex64> {
    (0..=d.degree).map(|j| d.coeff(j, c)).collect()
}

/// Degree of the disc after discarding zero top rows.
pub fn effective_degree(d: &AnalyticDisc) -> usize {
    (0..d.width())
        .filter_map(|c| poly::degree(&poly_column(d, c)))
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::SpaceModel;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eval_examples() {
        let x = [c(1.0, 2.0), c(-3.0, 0.5)];
        let f = AnalyticDisc::constant(&x);
        assert_eq!(f.eval(c(0.3, -0.4)).unwrap().0, x.to_vec());
        let id = AnalyticDisc::from_rows(vec![vec![c(0.0, 0.0)], vec![c(1.0, 0.0)]], None).unwrap();
        assert_eq!(id.eval(c(0.0, 1.0)).unwrap().0, vec![c(0.0, 1.0)]);
        let cusp = SpaceModel::cusp();
        let b = AnalyticDisc::from_rows(vec![vec![c(0.0, 0.0)], vec![c(1.0, 0.0)]], Some(cusp.branches[0].clone())).unwrap();
        assert!(b.eval(c(2.0, 0.0)).is_err());
        assert_eq!(b.eval(c(0.5, 0.0)).unwrap().0, vec![c(0.125, 0.0), c(0.25, 0.0)]);
    }

    #[test]
    fn json_round_trip() {
        let cusp = SpaceModel::cusp();
        let f = AnalyticDisc::from_rows(vec![vec![c(0.1, 0.2)], vec![c(-0.3, 1e-17)]], Some(cusp.branches[0].clone())).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.contains("\"degree\":1"));
        let g: AnalyticDisc = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
        assert!(serde_json::from_str::<AnalyticDisc>(r#"{"degree":2,"ambient_dim":1,"coeffs":[[0,0]]}"#).is_err());
    }

    fn family_from(f: &AnalyticDisc, mb: usize, lam: impl Fn(Complex64, Complex64) -> Complex64, deg: usize) -> BoundaryFamily {
        // Each g_t is the Taylor polynomial in z of f(zeta) + lam(zeta, z).
        let nodes = roots_of_unity(mb);
        let fb = f.boundary_params(mb);
        let discs = nodes
            .iter()
            .enumerate()
            .map(|(j, zeta)| {
                let mut rows = vec![vec![fb[j]]];
                let n = 64;
                let zs = roots_of_unity(n);
                for p in 1..=deg {
                    let coef = zs.iter().map(|z| lam(*zeta, *z) * z.powi(-(p as i32))).sum::<Complex64>() / n as f64;
                    rows.push(vec![coef]);
                }
                AnalyticDisc::from_rows(rows, None).unwrap()
            })
            .collect();
        BoundaryFamily::new(f.clone(), discs, 1e-12).unwrap()
    }

    #[test]
    fn fit_exact_linear_term() {
        let f = AnalyticDisc::from_rows(vec![vec![c(0.2, 0.0)], vec![c(0.5, 0.1)]], None).unwrap();
        let w = c(0.3, -0.7);
        let fam = family_from(&f, 16, |_, z| w * z, 2);
        let fit = fit_laurent(&fam, 0, 2, 2, &FitOptions::default()).unwrap();
        assert!(fit.residual < 1e-13, "{}", fit.residual);
        assert!((fit.family.get(1, 0, 0) - w).norm() < 1e-13);
        assert!(fit.family.get(2, 0, 0).norm() < 1e-13);
        assert_eq!(fit.r_prime, Some(0.95));
    }

    #[test]
    fn fit_antiholomorphic_with_pole() {
        let f = AnalyticDisc::constant(&[c(1.0, 0.0)]);
        let fam = family_from(&f, 16, |zeta, z| zeta.conj() * z, 1);
        let fit = fit_laurent(&fam, 1, 1, 2, &FitOptions::default()).unwrap();
        assert!(fit.residual < 1e-13);
        assert!((fit.family.get(1, 0, 0) - 1.0).norm() < 1e-13);
        assert!(fit.family.get(1, 1, 0).norm() < 1e-13);
    }

    #[test]
    fn fit_pure_quadratic() {
        let f = AnalyticDisc::constant(&[c(0.0, 0.0), c(1.0, 1.0)]);
        let v = [c(0.5, 0.0), c(0.0, -2.0)];
        let nodes = roots_of_unity(16);
        let discs = nodes
            .iter()
            .map(|_| AnalyticDisc::from_rows(vec![f.row(0).to_vec(), vec![c(0.0, 0.0); 2], v.to_vec()], None).unwrap())
            .collect();
        let fam = BoundaryFamily::new(f, discs, 0.0).unwrap();
        let fit = fit_laurent(&fam, 0, 2, 1, &FitOptions::default()).unwrap();
        assert!(fit.residual < 1e-13);
        for col in 0..2 {
            assert!(fit.family.get(1, 0, col).norm() < 1e-13);
            assert!((fit.family.get(2, 0, col) - v[col]).norm() < 1e-13);
        }
    }

    #[test]
    fn aliased_fit_is_ill_conditioned() {
        let f = AnalyticDisc::constant(&[c(0.0, 0.0)]);
        let fam = family_from(&f, 16, |_, z| z, 1);
        let err = fit_laurent(&fam, 0, 1, 20, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, DiscError::IllConditioned { .. }));
    }

    #[test]
    fn family_center_condition() {
        let f = AnalyticDisc::from_rows(vec![vec![c(0.0, 0.0)], vec![c(1.0, 0.0)]], None).unwrap();
        let bad = vec![AnalyticDisc::constant(&[c(0.0, 0.0)]); 4];
        assert!(BoundaryFamily::new(f, bad, 1e-9).is_err());
    }

    #[test]
    fn compose_examples() {
        let f = AnalyticDisc::from_rows(vec![vec![c(1.0, 0.0)], vec![c(0.0, 2.0)]], None).unwrap();
        let zero = LaurentFamily::zero(1, 2, 3, 1);
        assert_eq!(compose_rh(&f, &zero, 4, c(0.0, 1.0), 256).unwrap(), f);
        let x = AnalyticDisc::constant(&[c(0.5, 0.5)]);
        let mut lam = LaurentFamily::zero(0, 1, 0, 1);
        let w = c(-1.0, 3.0);
        lam.set(1, 0, 0, w);
        let h = compose_rh(&x, &lam, 1, c(1.0, 0.0), 256).unwrap();
        assert_eq!(h.coeffs, vec![c(0.5, 0.5), w]);
        assert!(matches!(compose_rh(&x, &lam, 0, c(1.0, 0.0), 256), Err(DiscError::BadWinding { .. })));
        let mut big = LaurentFamily::zero(0, 3, 0, 1);
        big.set(3, 0, 0, w);
        assert!(matches!(compose_rh(&x, &big, 100, c(1.0, 0.0), 256), Err(DiscError::DegreeOverflow { .. })));
    }

    #[test]
    fn compose_boundary_matches_laurent() {
        let f = AnalyticDisc::from_rows(vec![vec![c(0.1, 0.0)], vec![c(0.3, 0.2)], vec![c(0.0, -0.1)]], None).unwrap();
        let mut lam = LaurentFamily::zero(2, 2, 3, 1);
        for (i, v) in lam.a.iter_mut().enumerate() {
            *v = c(0.1 * i as f64, -0.05 * i as f64);
        }
        let (k, cc) = (5, c(0.6, 0.8));
        let h = compose_rh(&f, &lam, k, cc, 256).unwrap();
        for zeta in roots_of_unity(16) {
            let lhs = h.eval(zeta).unwrap().0[0];
            let rhs = f.eval(zeta).unwrap().0[0] + lam.eval(zeta, cc * zeta.powu(k as u32))[0];
            assert!((lhs - rhs).norm() < 1e-13);
        }
        let sweep = PhaseSweep::new(&f, &lam, k, 64);
        let mut buf = Vec::new();
        sweep.values(cc, &mut buf);
        let direct = h.boundary_params(64);
        for (a, b) in buf.iter().zip(&direct) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn phase_examples() {
        let f = AnalyticDisc::constant(&[c(0.0, 0.0)]);
        let mut lam = LaurentFamily::zero(0, 1, 0, 1);
        lam.set(1, 0, 0, c(1.0, 0.0));
        let full = [(0.0, TAU)];
        let one = ScalarField::parse("1", 1).unwrap();
        let (cc, v) = choose_phase(&f, &lam, 1, &one, &full, 16, 64).unwrap();
        assert_eq!((cc, v), (c(1.0, 0.0), 1.0));
        let re = ScalarField::parse("re(z1)", 1).unwrap();
        let (_, v) = choose_phase(&f, &lam, 1, &re, &full, 16, 64).unwrap();
        assert!(v.abs() < 1e-15);
        assert!(choose_phase(&f, &lam, 1, &re, &full, 4, 64).is_err());
    }
}
