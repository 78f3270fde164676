//! Scalar fields `u` on ambient space: typed expression trees over the
//! coordinates `z1..zN`, evaluated to a real number or `-inf`.

mod parse;

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::space::BranchMap;

pub use parse::ParseError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("field expects {expected} coordinates, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid field: {0}")]
    Invalid(String),
}

/// Regions whose characteristic functions may appear in a field.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    /// Euclidean ball in `C^N`.
    Ball { center: Vec<Complex64>, radius: f64 },
    /// Disc in a single coordinate (a cylinder in `C^N`).
    Disc { coord: usize, center: Complex64, radius: f64 },
    /// Product of coordinate rectangles with corners `lo[c]`, `hi[c]`.
    Box { lo: Vec<Complex64>, hi: Vec<Complex64> },
    /// Points within `radius` of a compact set.
    Near { set: Arc<crate::hull::CompactSet>, radius: f64 },
}

impl Region {
    /// Distance from `p` to the closure of the region (0 inside).
    pub fn distance(&self, p: &[Complex64]) -> f64 {
        match self {
            Region::Ball { center, radius } => (euclid(p, center) - radius).max(0.0),
            Region::Disc { coord, center, radius } => ((p[*coord] - center).norm() - radius).max(0.0),
            Region::Box { lo, hi } => p
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(z, (a, b))| {
                    let dx = (a.re - z.re).max(0.0).max(z.re - b.re);
                    let dy = (a.im - z.im).max(0.0).max(z.im - b.im);
                    dx * dx + dy * dy
                })
                .sum::<f64>()
                .sqrt(),
            Region::Near { set, radius } => (set.distance(p) - radius).max(0.0),
        }
    }

    /// Signed distance to the boundary, negative inside.
    pub fn signed_distance(&self, p: &[Complex64]) -> f64 {
        match self {
            Region::Ball { center, radius } => euclid(p, center) - radius,
            Region::Disc { coord, center, radius } => (p[*coord] - center).norm() - radius,
            Region::Box { lo, hi } => {
                let outside = self.distance(p);
                if outside > 0.0 {
                    return outside;
                }
                let depth = p
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(z, (a, b))| (z.re - a.re).min(b.re - z.re).min(z.im - a.im).min(b.im - z.im))
                    .fold(f64::INFINITY, f64::min);
                -depth
            }
            Region::Near { set, radius } => set.distance(p) - radius,
        }
    }

    /// Membership in the open region (`closed = false`) or its closure.
    pub fn contains(&self, p: &[Complex64], closed: bool) -> bool {
        match self {
            Region::Ball { center, radius } => cmp(euclid(p, center), *radius, closed),
            Region::Disc { coord, center, radius } => cmp((p[*coord] - center).norm(), *radius, closed),
            Region::Box { lo, hi } => p.iter().zip(lo.iter().zip(hi)).all(|(z, (a, b))| {
                if closed {
                    a.re <= z.re && z.re <= b.re && a.im <= z.im && z.im <= b.im
                } else {
                    a.re < z.re && z.re < b.re && a.im < z.im && z.im < b.im
                }
            }),
            Region::Near { set, radius } => cmp(set.distance(p), *radius, closed),
        }
    }

    fn check_dim(&self, n: usize) -> Result<(), FieldError> {
        let ok = match self {
            Region::Ball { center, .. } => center.len() == n,
            Region::Disc { coord, .. } => *coord < n,
            Region::Box { lo, hi } => lo.len() == n && hi.len() == n,
            Region::Near { set, .. } => set.dim() == n,
        };
        if ok {
            Ok(())
        } else {
            Err(FieldError::Invalid("region dimension does not match the field".into()))
        }
    }
}

fn cmp(d: f64, r: f64, closed: bool) -> bool {
    if closed {
        d <= r
    } else {
        d < r
    }
}

fn euclid(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ty {
    Real,
    Complex,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Real(f64),
    Complex(Complex64),
    Coord(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, i32),
    Conj(Box<Expr>),
    Re(Box<Expr>),
    Im(Box<Expr>),
    Abs(Box<Expr>),
    Abs2(Box<Expr>),
    Log(Box<Expr>),
    Exp(Box<Expr>),
    Min(Vec<Expr>),
    Max(Vec<Expr>),
    /// Characteristic function of the open region (or of its closure).
    /// A positive `ramp` replaces the jump by a linear ramp of that width
    /// across the boundary, a quarter of it inside the region.
    Indicator { region: Region, closed: bool, ramp: f64 },
}

#[derive(Clone, Copy, Debug)]
enum Val {
    R(f64),
    C(Complex64),
}

/// Evaluation fault; converted to `FieldError::DomainError` at the surface.
type Fault = &'static str;

impl Val {
    fn to_c(self) -> Result<Complex64, Fault> {
        match self {
            Val::C(c) => Ok(c),
            Val::R(r) if r.is_finite() => Ok(Complex64::new(r, 0.0)),
            Val::R(_) => Err("-inf in complex arithmetic"),
        }
    }
    fn real(self) -> f64 {
        match self {
            Val::R(r) => r,
            Val::C(_) => unreachable!("type-checked real"),
        }
    }
}

#[cold]
fn fault(msg: Fault) -> FieldError {
    FieldError::DomainError(msg.to_string())
}

fn real_ok(x: f64) -> Result<Val, Fault> {
    if x.is_nan() || x == f64::INFINITY {
        Err("undefined real value")
    } else {
        Ok(Val::R(x))
    }
}

fn complex_ok(z: Complex64) -> Result<Val, Fault> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(Val::C(z))
    } else {
        Err("non-finite complex value")
    }
}

impl Expr {
    pub fn ty(&self) -> Ty {
        use Expr::*;
        match self {
            Real(_) | Re(_) | Im(_) | Abs(_) | Abs2(_) | Log(_) | Exp(_) | Min(_) | Max(_) | Indicator { .. } => Ty::Real,
            Complex(_) | Coord(_) | Conj(_) => Ty::Complex,
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => {
                if a.ty() == Ty::Complex || b.ty() == Ty::Complex {
                    Ty::Complex
                } else {
                    Ty::Real
                }
            }
            Neg(a) | Pow(a, _) => a.ty(),
        }
    }

    fn check(&self, n: usize) -> Result<(), FieldError> {
        use Expr::*;
        match self {
            Real(x) => {
                if x.is_nan() {
                    return Err(FieldError::Invalid("NaN constant".into()));
                }
            }
            Complex(z) => {
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(FieldError::Invalid("non-finite complex constant".into()));
                }
            }
            Coord(k) => {
                if *k >= n {
                    return Err(FieldError::Invalid(format!("coordinate z{} exceeds dimension {n}", k + 1)));
                }
            }
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => {
                a.check(n)?;
                b.check(n)?;
            }
            Neg(a) | Pow(a, _) | Conj(a) | Re(a) | Im(a) | Abs(a) | Abs2(a) => a.check(n)?,
            Log(a) | Exp(a) => {
                a.check(n)?;
                if a.ty() != Ty::Real {
                    return Err(FieldError::Invalid("log/exp take real arguments; use abs or re".into()));
                }
            }
            Min(args) | Max(args) => {
                if args.is_empty() {
                    return Err(FieldError::Invalid("min/max need arguments".into()));
                }
                for a in args {
                    a.check(n)?;
                    if a.ty() != Ty::Real {
                        return Err(FieldError::Invalid("min/max take real arguments".into()));
                    }
                }
            }
            Indicator { region, .. } => region.check_dim(n)?,
        }
        Ok(())
    }

    fn eval(&self, p: &[Complex64]) -> Result<Val, Fault> {
        use Expr::*;
        Ok(match self {
            Real(x) => Val::R(*x),
            Complex(z) => Val::C(*z),
            Coord(k) => Val::C(p[*k]),
            Add(a, b) => match (a.eval(p)?, b.eval(p)?) {
                (Val::R(x), Val::R(y)) => real_ok(x + y)?,
                (x, y) => complex_ok(x.to_c()? + y.to_c()?)?,
            },
            Sub(a, b) => match (a.eval(p)?, b.eval(p)?) {
                (Val::R(x), Val::R(y)) => real_ok(x - y)?,
                (x, y) => complex_ok(x.to_c()? - y.to_c()?)?,
            },
            Mul(a, b) => match (a.eval(p)?, b.eval(p)?) {
                (Val::R(x), Val::R(y)) => real_ok(x * y)?,
                (x, y) => complex_ok(x.to_c()? * y.to_c()?)?,
            },
            Div(a, b) => match (a.eval(p)?, b.eval(p)?) {
                (Val::R(x), Val::R(y)) => {
                    if y == 0.0 {
                        return Err("division by zero");
                    }
                    real_ok(x / y)?
                }
                (x, y) => {
                    let d = y.to_c()?;
                    if d.norm_sqr() == 0.0 {
                        return Err("division by zero");
                    }
                    complex_ok(x.to_c()? / d)?
                }
            },
            Neg(a) => match a.eval(p)? {
                Val::R(x) => real_ok(-x)?,
                Val::C(z) => Val::C(-z),
            },
            Pow(a, k) => match a.eval(p)? {
                Val::R(x) => {
                    if x == 0.0 && *k < 0 {
                        return Err("zero to a negative power");
                    }
                    real_ok(x.powi(*k))?
                }
                Val::C(z) => {
                    if z.norm_sqr() == 0.0 && *k < 0 {
                        return Err("zero to a negative power");
                    }
                    complex_ok(z.powi(*k))?
                }
            },
            Conj(a) => Val::C(a.eval(p)?.to_c()?.conj()),
            Re(a) => match a.eval(p)? {
                Val::R(x) => Val::R(x),
                Val::C(z) => Val::R(z.re),
            },
            Im(a) => match a.eval(p)? {
                Val::R(_) => Val::R(0.0),
                Val::C(z) => Val::R(z.im),
            },
            Abs(a) => match a.eval(p)? {
                Val::R(x) => real_ok(x.abs())?,
                Val::C(z) => Val::R(z.norm()),
            },
            Abs2(a) => match a.eval(p)? {
                Val::R(x) => real_ok(x * x)?,
                Val::C(z) => Val::R(z.norm_sqr()),
            },
            Log(a) => {
                let x = a.eval(p)?.real();
                if x < 0.0 {
                    return Err("log of a negative number");
                }
                if x == 0.0 {
                    Val::R(f64::NEG_INFINITY)
                } else {
                    real_ok(x.ln())?
                }
            }
            Exp(a) => real_ok(a.eval(p)?.real().exp())?,
            Min(args) => {
                let mut acc = f64::INFINITY;
                for a in args {
                    acc = acc.min(a.eval(p)?.real());
                }
                Val::R(acc)
            }
            Max(args) => {
                let mut acc = f64::NEG_INFINITY;
                for a in args {
                    acc = acc.max(a.eval(p)?.real());
                }
                Val::R(acc)
            }
            Indicator { region, closed, ramp } => {
                if *ramp > 0.0 {
                    Val::R((0.75 - region.signed_distance(p) / ramp).clamp(0.0, 1.0))
                } else if region.contains(p, *closed) {
                    Val::R(1.0)
                } else {
                    Val::R(0.0)
                }
            }
        })
    }

    fn has_indicator(&self) -> bool {
        use Expr::*;
        match self {
            Indicator { .. } => true,
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => a.has_indicator() || b.has_indicator(),
            Neg(a) | Pow(a, _) | Conj(a) | Re(a) | Im(a) | Abs(a) | Abs2(a) | Log(a) | Exp(a) => a.has_indicator(),
            Min(v) | Max(v) => v.iter().any(Expr::has_indicator),
            _ => false,
        }
    }

    fn with_ramp(&self, width: f64) -> Expr {
        use Expr::*;
        let b = |e: &Expr| Box::new(e.with_ramp(width));
        match self {
            Indicator { region, closed, .. } => Indicator { region: region.clone(), closed: *closed, ramp: width },
            Add(x, y) => Add(b(x), b(y)),
            Sub(x, y) => Sub(b(x), b(y)),
            Mul(x, y) => Mul(b(x), b(y)),
            Div(x, y) => Div(b(x), b(y)),
            Neg(x) => Neg(b(x)),
            Pow(x, k) => Pow(b(x), *k),
            Conj(x) => Conj(b(x)),
            Re(x) => Re(b(x)),
            Im(x) => Im(b(x)),
            Abs(x) => Abs(b(x)),
            Abs2(x) => Abs2(b(x)),
            Log(x) => Log(b(x)),
            Exp(x) => Exp(b(x)),
            Min(v) => Min(v.iter().map(|e| e.with_ramp(width)).collect()),
            Max(v) => Max(v.iter().map(|e| e.with_ramp(width)).collect()),
            other => other.clone(),
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = |z: &Complex64| format!("({:?}{:+?}i)", z.re, z.im);
        match self {
            Region::Ball { center, radius } => {
                let cs: Vec<String> = center.iter().map(c).collect();
                write!(f, "ball({}; {:?})", cs.join(", "), radius)
            }
            Region::Disc { coord, center, radius } => write!(f, "disc({}, {}; {:?})", coord + 1, c(center), radius),
            Region::Box { lo, hi } => {
                let cs: Vec<String> = lo.iter().zip(hi).flat_map(|(a, b)| [c(a), c(b)]).collect();
                write!(f, "box({})", cs.join(", "))
            }
            Region::Near { radius, .. } => write!(f, "near(<set>; {:?})", radius),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Expr::*;
        let list = |v: &[Expr]| v.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ");
        match self {
            Real(x) => write!(f, "{:?}", x),
            Complex(z) => write!(f, "({:?}{:+?}i)", z.re, z.im),
            Coord(k) => write!(f, "z{}", k + 1),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Neg(a) => write!(f, "(-{a})"),
            Pow(a, k) => write!(f, "({a})^{k}"),
            Conj(a) => write!(f, "conj({a})"),
            Re(a) => write!(f, "re({a})"),
            Im(a) => write!(f, "im({a})"),
            Abs(a) => write!(f, "abs({a})"),
            Abs2(a) => write!(f, "abs2({a})"),
            Log(a) => write!(f, "log({a})"),
            Exp(a) => write!(f, "exp({a})"),
            Min(v) => write!(f, "min({})", list(v)),
            Max(v) => write!(f, "max({})", list(v)),
            Indicator { region, closed, ramp } => {
                if *ramp > 0.0 {
                    write!(f, "ramp_indicator({region}; {:?})", ramp)
                } else if *closed {
                    write!(f, "cindicator({region})")
                } else {
                    write!(f, "indicator({region})")
                }
            }
        }
    }
}

/// An upper semicontinuous integrand `u`.
///
/// When `pullback` is set the field lives on a branch parameter plane and
/// evaluates `u(branch(t))`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    expr: Expr,
    ambient_dim: usize,
    lower_bound: Option<f64>,
    pullback: Option<BranchMap>,
}

impl ScalarField {
    pub fn new(expr: Expr, ambient_dim: usize) -> Result<Self, FieldError> {
        expr.check(ambient_dim)?;
        if expr.ty() != Ty::Real {
            return Err(FieldError::Invalid("field must be real valued; wrap complex terms in re/im/abs".into()));
        }
        Ok(Self { expr, ambient_dim, lower_bound: None, pullback: None })
    }

    pub fn parse(src: &str, ambient_dim: usize) -> Result<Self, FieldError> {
        let expr = parse::parse(src, ambient_dim)?;
        Self::new(expr, ambient_dim)
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    /// Number of coordinates the field is evaluated at (1 for pulled-back fields).
    pub fn dim(&self) -> usize {
        if self.pullback.is_some() {
            1
        } else {
            self.ambient_dim
        }
    }

    pub fn is_pulled_back(&self) -> bool {
        self.pullback.is_some()
    }

    pub fn lower_bound(&self) -> Option<f64> {
        self.lower_bound
    }

    pub fn with_lower_bound(mut self, m: f64) -> Self {
        self.lower_bound = Some(m);
        self
    }

    pub fn has_indicator(&self) -> bool {
        self.expr.has_indicator()
    }

    /// `u(p)`, a real number or `-inf`.
    #[inline]
    pub fn eval(&self, p: &[Complex64]) -> Result<f64, FieldError> {
        if p.len() != self.dim() {
            return Err(FieldError::Dimension { expected: self.dim(), got: p.len() });
        }
        match &self.pullback {
            None => Ok(self.expr.eval(p).map_err(fault)?.real()),
            Some(b) => {
                let mut buf = [Complex64::new(0.0, 0.0); 8];
                if b.dim() <= buf.len() {
                    let q = &mut buf[..b.dim()];
                    b.eval_into(p[0], q);
                    Ok(self.expr.eval(q).map_err(fault)?.real())
                } else {
                    let q = b.eval(p[0]);
                    Ok(self.expr.eval(&q.0).map_err(fault)?.real())
                }
            }
        }
    }

    /// `u o branch`, a field on the branch parameter plane.
    pub fn pull_back(&self, branch: &BranchMap) -> Result<Self, FieldError> {
        if self.pullback.is_some() {
            return Err(FieldError::Invalid("field is already pulled back".into()));
        }
        if branch.dim() != self.ambient_dim {
            return Err(FieldError::Dimension { expected: self.ambient_dim, got: branch.dim() });
        }
        Ok(Self { pullback: Some(branch.clone()), ..self.clone() })
    }

    /// `max(u, -k)`, the truncation that makes the field bounded below by `-k`.
    pub fn decreasing_approximation(&self, k: f64) -> Self {
        assert!(k >= 1.0, "truncation level must be at least 1");
        Self {
            expr: Expr::Max(vec![self.expr.clone(), Expr::Real(-k)]),
            lower_bound: Some(self.lower_bound.map_or(k, |m| m.min(k))),
            ..self.clone()
        }
    }

    /// Continuous surrogate: every indicator jump becomes a linear ramp of
    /// width `width` straddling the boundary, from a quarter of the width
    /// inside to three quarters outside. Identity for indicator-free fields.
    pub fn ramped(&self, width: f64) -> Self {
        Self { expr: self.expr.with_ramp(width), ..self.clone() }
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.expr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn projection() {
        let u = ScalarField::parse("re(z1)", 1).unwrap();
        assert_eq!(u.eval(&[c(2.0, 3.0)]).unwrap(), 2.0);
    }

    #[test]
    fn log_of_zero_is_minus_infinity() {
        let u = ScalarField::parse("log(abs(z1))", 1).unwrap();
        assert_eq!(u.eval(&[c(0.0, 0.0)]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn min_with_abs2() {
        let u = ScalarField::parse("min(0, abs2(z1) - 1)", 1).unwrap();
        assert_eq!(u.eval(&[c(0.5, 0.0)]).unwrap(), -0.75);
    }

    #[test]
    fn minus_infinity_propagates() {
        let u = ScalarField::parse("log(abs(z1)) + 3", 1).unwrap();
        assert_eq!(u.eval(&[c(0.0, 0.0)]).unwrap(), f64::NEG_INFINITY);
        let u = ScalarField::parse("max(log(abs(z1)), -2)", 1).unwrap();
        assert_eq!(u.eval(&[c(0.0, 0.0)]).unwrap(), -2.0);
        let u = ScalarField::parse("log(abs(z1)) - log(abs(z1))", 1).unwrap();
        assert!(matches!(u.eval(&[c(0.0, 0.0)]), Err(FieldError::DomainError(_))));
    }

    #[test]
    fn division_by_zero_is_domain_error() {
        let u = ScalarField::parse("1 / re(z1)", 1).unwrap();
        assert!(matches!(u.eval(&[c(0.0, 1.0)]), Err(FieldError::DomainError(_))));
        let u = ScalarField::parse("re(1 / z1)", 1).unwrap();
        assert!(matches!(u.eval(&[c(0.0, 0.0)]), Err(FieldError::DomainError(_))));
    }

    #[test]
    fn complex_result_is_rejected() {
        assert!(matches!(ScalarField::parse("z1 * z1", 1), Err(FieldError::Invalid(_))));
        assert!(matches!(ScalarField::parse("log(z1)", 1), Err(FieldError::Invalid(_))));
        assert!(matches!(ScalarField::parse("re(z3)", 2), Err(FieldError::Parse(_))));
    }

    #[test]
    fn open_indicator_convention() {
        let u = ScalarField::parse("-indicator(ball(0; 1))", 1).unwrap();
        assert_eq!(u.eval(&[c(0.5, 0.0)]).unwrap(), -1.0);
        // boundary takes the larger value
        assert_eq!(u.eval(&[c(1.0, 0.0)]).unwrap(), 0.0);
        let v = ScalarField::parse("cindicator(disc(1, 0; 0))", 2).unwrap();
        assert_eq!(v.eval(&[c(0.0, 0.0), c(5.0, 0.0)]).unwrap(), 1.0);
        assert_eq!(v.eval(&[c(1e-300, 0.0), c(0.0, 0.0)]).unwrap(), 0.0);
    }

    #[test]
    fn box_indicator() {
        let u = ScalarField::parse("indicator(box(0, 1+1i))", 1).unwrap();
        assert_eq!(u.eval(&[c(0.5, 0.5)]).unwrap(), 1.0);
        assert_eq!(u.eval(&[c(1.0, 0.5)]).unwrap(), 0.0);
        assert_eq!(u.eval(&[c(1.5, 0.5)]).unwrap(), 0.0);
    }

    #[test]
    fn truncation() {
        let u = ScalarField::parse("log(abs(z1))", 1).unwrap();
        let t = u.decreasing_approximation(3.0);
        assert_eq!(t.eval(&[c(0.0, 0.0)]).unwrap(), -3.0);
        assert_eq!(t.lower_bound(), Some(3.0));
        let b = ScalarField::parse("max(re(z1), -1)", 1).unwrap();
        let t5 = b.decreasing_approximation(5.0);
        let t2 = u.decreasing_approximation(2.0);
        let t5u = u.decreasing_approximation(5.0);
        for i in 0..41 {
            let p = [c(-2.0 + 0.1 * i as f64, 0.3)];
            assert_eq!(t5.eval(&p).unwrap(), b.eval(&p).unwrap());
            assert!(t2.eval(&p).unwrap() >= t5u.eval(&p).unwrap());
        }
    }

    #[test]
    fn ramp_straddles_the_boundary() {
        let u = ScalarField::parse("-indicator(ball(0; 1))", 1).unwrap().ramped(0.5);
        assert_eq!(u.eval(&[c(0.2, 0.0)]).unwrap(), -1.0);
        assert_eq!(u.eval(&[c(0.875, 0.0)]).unwrap(), -1.0);
        assert!((u.eval(&[c(0.95, 0.0)]).unwrap() + 0.85).abs() < 1e-15);
        assert!((u.eval(&[c(1.125, 0.0)]).unwrap() + 0.5).abs() < 1e-15);
        assert_eq!(u.eval(&[c(1.375, 0.0)]).unwrap(), 0.0);
    }

    #[test]
    fn pull_back_evaluates_through_branch() {
        let s = crate::space::SpaceModel::cusp();
        let u = ScalarField::parse("re(z1) + 2 * re(z2)", 2).unwrap();
        let v = u.pull_back(&s.branches[0]).unwrap();
        assert_eq!(v.dim(), 1);
        assert!((v.eval(&[c(0.5, 0.0)]).unwrap() - (0.125 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn display_round_trips() {
        for src in [
            "min(0, abs2(z1) - 1)",
            "-indicator(ball(0, 0; 1))",
            "log(1e-3 + abs2(z1)) * 2 - exp(-re(z2 * conj(z1)))",
            "max(re(z1), re(z2), im(z1^3))",
            "cindicator(disc(2, 1-2i; 0.5)) + indicator(box(0, 1, -1i, 2+2i))",
        ] {
            let u = ScalarField::parse(src, 2).unwrap();
            let again = ScalarField::parse(&u.to_string(), 2).unwrap();
            assert_eq!(u, again, "{src}");
        }
    }
}
