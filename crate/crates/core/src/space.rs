//! Model complex spaces: Euclidean `C^N` (optionally restricted to a
//! polydisc window) and one-dimensional varieties presented by the
//! normalization maps of their branches.
//!
//! Membership on a curve is decided by lifting through the branch maps:
//! a point lies on the curve iff some branch parameter reproduces it.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("point {0} does not lie on the space")]
    PointNotOnSpace(ComplexPoint),
    #[error("operation not applicable to a Euclidean space")]
    NotApplicable,
    #[error("invalid space model: {0}")]
    Invalid(String),
}

/// A point of `C^N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComplexPoint(pub Vec<Complex64>);

impl ComplexPoint {
    pub fn new(coords: Vec<Complex64>) -> Result<Self, SpaceError> {
        if coords.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(SpaceError::Invalid("non-finite coordinate".into()));
        }
        Ok(Self(coords))
    }

    pub fn from_re_im(pairs: &[(f64, f64)]) -> Self {
        Self(pairs.iter().map(|&(re, im)| Complex64::new(re, im)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.0
    }

    /// Max-norm distance, the metric used by every tolerance in this crate.
    pub fn dist_max(&self, other: &ComplexPoint) -> f64 {
        dist_max(&self.0, &other.0)
    }

    pub fn dist(&self, other: &ComplexPoint) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

impl fmt::Display for ComplexPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", c)?;
        }
        write!(f, ")")
    }
}

pub(crate) fn dist_max(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Normalization map of one branch: `N` polynomials in one variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchMap {
    pub label: String,
    /// One coefficient list per ambient coordinate, lowest degree first.
    pub components: Vec<Vec<Complex64>>,
}

impl BranchMap {
    pub fn new(label: impl Into<String>, components: Vec<Vec<Complex64>>) -> Result<Self, SpaceError> {
        let label = label.into();
        if components.is_empty() {
            return Err(SpaceError::Invalid(format!("branch {label} has no components")));
        }
        if components
            .iter()
            .flatten()
            .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(SpaceError::Invalid(format!("branch {label} has non-finite coefficients")));
        }
        if components.iter().all(|p| poly::degree(p).unwrap_or(0) == 0) {
            return Err(SpaceError::Invalid(format!("branch {label} is constant")));
        }
        Ok(Self { label, components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    #[inline]
    pub fn eval_into(&self, t: Complex64, out: &mut [Complex64]) {
        for (o, p) in out.iter_mut().zip(&self.components) {
            *o = poly::horner(p, t);
        }
    }

    pub fn eval(&self, t: Complex64) -> ComplexPoint {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        self.eval_into(t, &mut out);
        ComplexPoint(out)
    }

    fn derivative_vanishes(&self, t: Complex64, tol: f64) -> bool {
        self.components
            .iter()
            .all(|p| poly::horner(&poly::derivative(p), t).norm() <= tol)
    }

    /// Parameters `t` with `self(t) = p` within `tol` (max-norm).
    pub fn preimages(&self, p: &[Complex64], tol: f64) -> Vec<Complex64> {
        if p.len() != self.dim() {
            return Vec::new();
        }
        // Solve on the nonconstant component of lowest degree, verify on all.
        let (idx, _) = match self
            .components
            .iter()
            .enumerate()
            .filter_map(|(i, c)| poly::degree(c).filter(|&d| d >= 1).map(|d| (i, d)))
            .min_by_key(|&(_, d)| d)
        {
            Some(x) => x,
            None => return Vec::new(),
        };
        let mut shifted = self.components[idx].clone();
        shifted[0] -= p[idx];
        let mut found: Vec<Complex64> = Vec::new();
        for t in poly::roots(&shifted) {
            let t = self.snap(t, p);
            if self.residual(t, p) > tol {
                continue;
            }
            // Clustered roots of a multiple factor collapse to one parameter.
            if let Some(prev) = found.iter_mut().find(|q| (**q - t).norm() < 1e-6) {
                if self.residual(t, p) < self.residual(*prev, p) {
                    *prev = t;
                }
                continue;
            }
            found.push(t);
        }
        found.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        found
    }

    fn residual(&self, t: Complex64, p: &[Complex64]) -> f64 {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.dim()];
        self.eval_into(t, &mut buf);
        dist_max(&buf, p)
    }

    /// Searches the few floating-point neighbours of `t` for the parameter
    /// whose image is closest to `p`, preferring an exact reproduction.
    fn snap(&self, t: Complex64, p: &[Complex64]) -> Complex64 {
        let mut best = (self.residual(t, p), t);
        if best.0 == 0.0 {
            return t;
        }
        let steps = |x: f64| -> [f64; 5] {
            let up1 = next_up(x);
            let dn1 = next_down(x);
            [next_down(dn1), dn1, x, up1, next_up(up1)]
        };
        for re in steps(t.re) {
            for im in steps(t.im) {
                let cand = Complex64::new(re, im);
                let r = self.residual(cand, p);
                if r < best.0 {
                    best = (r, cand);
                }
            }
        }
        best.1
    }
}

fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    if x > 0.0 {
        f64::from_bits(bits + 1)
    } else {
        f64::from_bits(bits - 1)
    }
}

fn next_down(x: f64) -> f64 {
    -next_up(-x)
}

/// Axis-aligned polydisc `{ |z_c - center_c| <= radius_c }` restricting
/// where discs may take values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainConstraint {
    pub centers: Vec<Complex64>,
    pub radii: Vec<f64>,
}

impl DomainConstraint {
    pub fn new(centers: Vec<Complex64>, radii: Vec<f64>) -> Result<Self, SpaceError> {
        if centers.len() != radii.len() || radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(SpaceError::Invalid("domain constraint needs one positive radius per center".into()));
        }
        Ok(Self { centers, radii })
    }

    pub fn ball(center: Complex64, radius: f64) -> Self {
        Self { centers: vec![center], radii: vec![radius] }
    }

    #[inline]
    pub fn contains(&self, p: &[Complex64]) -> bool {
        self.excess(p) <= 0.0
    }

    /// Largest amount by which `p` sticks out of the polydisc (`<= 0` inside).
    #[inline]
    pub fn excess(&self, p: &[Complex64]) -> f64 {
        p.iter()
            .zip(self.centers.iter().zip(&self.radii))
            .map(|(z, (c, r))| (z - c).norm() - r)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    Euclidean,
    NormalizedCurve,
}

/// The complex space `X` on which envelopes are computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceModel {
    pub kind: SpaceKind,
    pub ambient_dim: usize,
    pub branches: Vec<BranchMap>,
    pub irreducible: bool,
    pub domain: Option<DomainConstraint>,
}

impl SpaceModel {
    pub fn euclidean(ambient_dim: usize) -> Self {
        assert!(ambient_dim > 0, "ambient dimension must be positive");
        Self {
            kind: SpaceKind::Euclidean,
            ambient_dim,
            branches: Vec::new(),
            irreducible: true,
            domain: None,
        }
    }

    pub fn curve(branches: Vec<BranchMap>) -> Result<Self, SpaceError> {
        let first = branches
            .first()
            .ok_or_else(|| SpaceError::Invalid("a curve needs at least one branch".into()))?;
        let n = first.dim();
        if branches.iter().any(|b| b.dim() != n) {
            return Err(SpaceError::Invalid("branches disagree on ambient dimension".into()));
        }
        let mut labels: Vec<&str> = branches.iter().map(|b| b.label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != branches.len() {
            return Err(SpaceError::Invalid("branch labels must be unique".into()));
        }
        Ok(Self {
            kind: SpaceKind::NormalizedCurve,
            ambient_dim: n,
            irreducible: branches.len() <= 1,
            branches,
            domain: None,
        })
    }

    pub fn with_domain(mut self, domain: DomainConstraint) -> Result<Self, SpaceError> {
        if domain.centers.len() != self.ambient_dim {
            return Err(SpaceError::Invalid("domain constraint dimension mismatch".into()));
        }
        self.domain = Some(domain);
        Ok(self)
    }

    /// `{zw = 0}` in `C^2`: the union of the two coordinate axes.
    pub fn axes_cross() -> Self {
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        Self::curve(vec![
            BranchMap::new("z", vec![vec![zero, one], vec![zero]]).unwrap(),
            BranchMap::new("w", vec![vec![zero], vec![zero, one]]).unwrap(),
        ])
        .unwrap()
    }

    /// The cusp `t -> (t^3, t^2)`.
    pub fn cusp() -> Self {
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        Self::curve(vec![BranchMap::new(
            "branch_0",
            vec![vec![zero, zero, zero, one], vec![zero, zero, one]],
        )
        .unwrap()])
        .unwrap()
    }

    pub fn branch(&self, label: &str) -> Option<&BranchMap> {
        self.branches.iter().find(|b| b.label == label)
    }

    pub fn branch_index(&self, label: &str) -> Option<usize> {
        self.branches.iter().position(|b| b.label == label)
    }

    /// Checks the structural invariants (dimension agreement, flag consistency).
    pub fn validate(&self) -> Result<(), SpaceError> {
        match self.kind {
            SpaceKind::Euclidean => {
                if !self.branches.is_empty() {
                    return Err(SpaceError::Invalid("Euclidean spaces carry no branches".into()));
                }
                if !self.irreducible {
                    return Err(SpaceError::Invalid("Euclidean spaces are irreducible".into()));
                }
            }
            SpaceKind::NormalizedCurve => {
                if self.branches.is_empty() {
                    return Err(SpaceError::Invalid("a curve needs at least one branch".into()));
                }
                if self.branches.iter().any(|b| b.dim() != self.ambient_dim) {
                    return Err(SpaceError::Invalid("branch dimension mismatch".into()));
                }
                if self.irreducible != (self.branches.len() <= 1) {
                    return Err(SpaceError::Invalid(
                        "irreducible flag must be true exactly when there is one branch".into(),
                    ));
                }
            }
        }
        if let Some(d) = &self.domain {
            if d.centers.len() != self.ambient_dim {
                return Err(SpaceError::Invalid("domain constraint dimension mismatch".into()));
            }
        }
        Ok(())
    }

    fn in_domain(&self, p: &[Complex64]) -> bool {
        self.domain.as_ref().map_or(true, |d| d.contains(p))
    }

    pub fn contains(&self, p: &ComplexPoint, tol: f64) -> bool {
        assert!(tol > 0.0, "tolerance must be positive");
        if p.dim() != self.ambient_dim || !self.in_domain(&p.0) {
            return false;
        }
        match self.kind {
            SpaceKind::Euclidean => true,
            SpaceKind::NormalizedCurve => self
                .branches
                .iter()
                .any(|b| !b.preimages(&p.0, tol).is_empty()),
        }
    }

    /// Every `(branch label, parameter)` whose image is `p` within `tol`.
    pub fn lift_point(&self, p: &ComplexPoint, tol: f64) -> Result<Vec<(String, Complex64)>, SpaceError> {
        if self.kind == SpaceKind::Euclidean {
            return Err(SpaceError::NotApplicable);
        }
        if p.dim() != self.ambient_dim || !self.in_domain(&p.0) {
            return Err(SpaceError::PointNotOnSpace(p.clone()));
        }
        let lifts: Vec<(String, Complex64)> = self
            .branches
            .iter()
            .flat_map(|b| {
                b.preimages(&p.0, tol)
                    .into_iter()
                    .map(move |t| (b.label.clone(), t))
            })
            .collect();
        if lifts.is_empty() {
            Err(SpaceError::PointNotOnSpace(p.clone()))
        } else {
            Ok(lifts)
        }
    }

    /// Candidate singular points: critical points of a branch map and
    /// intersections of distinct branches.
    pub fn singular_locus_hint(&self) -> Result<Vec<ComplexPoint>, SpaceError> {
        if self.kind == SpaceKind::Euclidean {
            return Err(SpaceError::NotApplicable);
        }
        const TOL: f64 = 1e-8;
        let mut out: Vec<ComplexPoint> = Vec::new();
        let mut push = |p: ComplexPoint| {
            if !out.iter().any(|q| q.dist_max(&p) < 1e-6) {
                out.push(p);
            }
        };
        for b in &self.branches {
            // Critical parameters are common roots of all derivative components.
            let (idx, _) = b
                .components
                .iter()
                .enumerate()
                .filter_map(|(i, c)| poly::degree(c).filter(|&d| d >= 1).map(|d| (i, d)))
                .min_by_key(|&(_, d)| d)
                .expect("branch maps are nonconstant");
            for t in poly::roots(&poly::derivative(&b.components[idx])) {
                if b.derivative_vanishes(t, TOL) {
                    push(b.eval(t));
                }
            }
        }
        for (i, bi) in self.branches.iter().enumerate() {
            for bj in &self.branches[i + 1..] {
                for s in branch_intersections(bi, bj) {
                    let p = bi.eval(s);
                    if !bj.preimages(&p.0, TOL.sqrt()).is_empty() {
                        push(p);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Parameters `s` of `a` such that `a(s)` might lie on `b`.
///
/// If `b` has a constant component the candidates solve one equation in
/// `s`; otherwise the resultant in `t` of two component equations is
/// interpolated at roots of unity and its roots returned.
fn branch_intersections(a: &BranchMap, b: &BranchMap) -> Vec<Complex64> {
    let n = a.dim();
    if n < 2 {
        return Vec::new();
    }
    if let Some(d) = (0..n).find(|&d| poly::degree(&b.components[d]).unwrap_or(0) == 0) {
        let k = b.components[d].first().copied().unwrap_or_default();
        let mut eq = a.components[d].clone();
        if eq.is_empty() {
            eq.push(Complex64::new(0.0, 0.0));
        }
        eq[0] -= k;
        return poly::roots(&eq);
    }
    let (c, d) = (0, 1);
    let pa = poly::degree(&a.components[c]).unwrap_or(0);
    let qa = poly::degree(&a.components[d]).unwrap_or(0);
    let pb = poly::degree(&b.components[c]).unwrap_or(0);
    let qb = poly::degree(&b.components[d]).unwrap_or(0);
    let res_deg = pa * qb + qa * pb;
    if res_deg == 0 {
        return Vec::new();
    }
    let samples = (res_deg + 1).next_power_of_two();
    let values: Vec<Complex64> = (0..samples)
        .map(|l| {
            let s = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * l as f64 / samples as f64);
            let mut f = b.components[c].clone();
            f[0] -= poly::horner(&a.components[c], s);
            let mut g = b.components[d].clone();
            g[0] -= poly::horner(&a.components[d], s);
            sylvester_det(poly::trim(&f), poly::trim(&g), pb, qb)
        })
        .collect();
    // Inverse DFT recovers the resultant's coefficients in s.
    let coeffs: Vec<Complex64> = (0..samples)
        .map(|j| {
            values
                .iter()
                .enumerate()
                .map(|(l, v)| {
                    v * Complex64::from_polar(
                        1.0,
                        -2.0 * std::f64::consts::PI * (j * l % samples) as f64 / samples as f64,
                    )
                })
                .sum::<Complex64>()
                / samples as f64
        })
        .collect();
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Vec::new();
    }
    let cleaned: Vec<Complex64> = coeffs
        .into_iter()
        .map(|c| if c.norm() < 1e-12 * scale { Complex64::new(0.0, 0.0) } else { c })
        .collect();
    poly::roots(&cleaned)
}

fn sylvester_det(f: &[Complex64], g: &[Complex64], p: usize, q: usize) -> Complex64 {
    // f has nominal degree p and g degree q in t (leading coefficients do not depend on s).
    let size = p + q;
    if size == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let mut m = nalgebra::DMatrix::<Complex64>::zeros(size, size);
    let coef = |v: &[Complex64], k: usize| v.get(k).copied().unwrap_or_default();
    for row in 0..q {
        for k in 0..=p {
            m[(row, row + k)] = coef(f, p - k);
        }
    }
    for row in 0..p {
        for k in 0..=q {
            m[(q + row, row + k)] = coef(g, q - k);
        }
    }
    m.determinant()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(v: &[(f64, f64)]) -> ComplexPoint {
        ComplexPoint::from_re_im(v)
    }

    #[test]
    fn euclidean_contains_everything() {
        let s = SpaceModel::euclidean(2);
        assert!(s.contains(&pt(&[(1.0, 0.0), (2.0, 0.0)]), 1e-9));
    }

    #[test]
    fn cross_rejects_off_axis_point() {
        let s = SpaceModel::axes_cross();
        assert!(!s.contains(&pt(&[(1.0, 0.0), (1.0, 0.0)]), 1e-9));
        assert!(!s.irreducible);
    }

    #[test]
    fn cusp_contains_image_of_one() {
        let s = SpaceModel::cusp();
        assert!(s.contains(&pt(&[(1.0, 0.0), (1.0, 0.0)]), 1e-9));
        assert!(s.irreducible);
        assert!(SpaceModel::euclidean(3).irreducible);
    }

    #[test]
    fn lift_on_axes() {
        let s = SpaceModel::axes_cross();
        let l = s.lift_point(&pt(&[(3.0, 0.0), (0.0, 0.0)]), 1e-9).unwrap();
        assert_eq!(l, vec![("z".to_string(), Complex64::new(3.0, 0.0))]);
        let l = s.lift_point(&pt(&[(0.0, 0.0), (0.0, 0.0)]), 1e-9).unwrap();
        assert_eq!(l.len(), 2);
        assert_eq!(l[0].0, "z");
        assert_eq!(l[1].0, "w");
        assert!(l.iter().all(|(_, t)| t.norm() < 1e-12));
    }

    #[test]
    fn lift_on_cusp_filters_sign() {
        let s = SpaceModel::cusp();
        let l = s.lift_point(&pt(&[(-1.0, 0.0), (1.0, 0.0)]), 1e-9).unwrap();
        assert_eq!(l.len(), 1);
        assert_eq!(l[0].0, "branch_0");
        assert!((l[0].1 - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn lift_rejects_foreign_point() {
        let s = SpaceModel::cusp();
        assert!(matches!(
            s.lift_point(&pt(&[(2.0, 0.0), (1.0, 0.0)]), 1e-9),
            Err(SpaceError::PointNotOnSpace(_))
        ));
        assert_eq!(SpaceModel::euclidean(1).lift_point(&pt(&[(0.0, 0.0)]), 1e-9), Err(SpaceError::NotApplicable));
    }

    #[test]
    fn singular_hints() {
        let origin = pt(&[(0.0, 0.0), (0.0, 0.0)]);
        let h = SpaceModel::axes_cross().singular_locus_hint().unwrap();
        assert_eq!(h.len(), 1);
        assert!(h[0].dist_max(&origin) < 1e-9);
        let h = SpaceModel::cusp().singular_locus_hint().unwrap();
        assert_eq!(h.len(), 1);
        assert!(h[0].dist_max(&origin) < 1e-9);
        assert_eq!(SpaceModel::euclidean(2).singular_locus_hint(), Err(SpaceError::NotApplicable));
    }

    #[test]
    fn resultant_finds_crossing_of_parabola_and_line() {
        // t -> (t, t^2) and t -> (t, 1) meet at (+-1, 1); no constant component
        // on the second branch after a shear, so force the resultant path.
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let a = BranchMap::new("a", vec![vec![zero, one], vec![zero, zero, one]]).unwrap();
        let b = BranchMap::new("b", vec![vec![zero, one], vec![one, one]]).unwrap();
        // a(s) = b(t) <=> s = t, s^2 = 1 + t  => s^2 - s - 1 = 0
        let s = SpaceModel::curve(vec![a, b]).unwrap();
        let h = s.singular_locus_hint().unwrap();
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!(h.iter().any(|p| (p.0[0] - Complex64::new(golden, 0.0)).norm() < 1e-8));
        assert!(h.iter().any(|p| (p.0[0] - Complex64::new(1.0 - golden, 0.0)).norm() < 1e-8));
    }

    #[test]
    fn domain_constraint_applies_to_euclidean() {
        let s = SpaceModel::euclidean(1)
            .with_domain(DomainConstraint::ball(Complex64::new(0.0, 0.0), 1.0))
            .unwrap();
        assert!(s.contains(&pt(&[(0.5, 0.0)]), 1e-9));
        assert!(!s.contains(&pt(&[(1.5, 0.0)]), 1e-9));
    }

    #[test]
    fn branch_points_lift_back_to_parameters() {
        let s = SpaceModel::cusp();
        let b = &s.branches[0];
        for i in 0..7 {
            for j in 0..7 {
                let t = Complex64::new(-1.5 + 0.5 * i as f64, -1.5 + 0.5 * j as f64);
                let p = b.eval(t);
                assert!(s.contains(&p, 1e-9));
                if t.norm() > 0.1 {
                    let l = s.lift_point(&p, 1e-9).unwrap();
                    assert_eq!(l.len(), 1);
                    assert_eq!(l[0].1, t, "dyadic parameters lift exactly");
                }
            }
        }
    }
}
