//! Univariate complex polynomials stored as coefficient lists, lowest degree first.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Horner evaluation of `coeffs[0] + coeffs[1] z + ...`.
#[inline]
pub fn horner(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for c in coeffs.iter().rev() {
        acc = acc * z + c;
    }
    acc
}

pub fn derivative(coeffs: &[Complex64]) -> Vec<Complex64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, c)| c * j as f64)
        .collect()
}

/// Drops trailing coefficients that are exactly zero.
pub fn trim(coeffs: &[Complex64]) -> &[Complex64] {
    let mut end = coeffs.len();
    while end > 0 && coeffs[end - 1] == Complex64::new(0.0, 0.0) {
        end -= 1;
    }
    &coeffs[..end]
}

/// Degree after trimming; `None` for the zero polynomial.
pub fn degree(coeffs: &[Complex64]) -> Option<usize> {
    let t = trim(coeffs);
    if t.is_empty() {
        None
    } else {
        Some(t.len() - 1)
    }
}

/// All complex roots, with multiplicity, of a polynomial of degree >= 1.
///
/// Eigenvalues of the companion matrix followed by a few Newton steps on
/// the original coefficients. Returns an empty list for constants.
pub fn roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let p = trim(coeffs);
    if p.len() < 2 {
        return Vec::new();
    }
    let n = p.len() - 1;
    let lead = p[n];
    if n == 1 {
        return vec![-p[0] / lead];
    }
    let mut companion = DMatrix::<Complex64>::zeros(n, n);
    for i in 1..n {
        companion[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..n {
        companion[(i, n - 1)] = -p[i] / lead;
    }
    let eig = companion
        .schur()
        .eigenvalues()
        .expect("complex Schur form is triangular");
    let dp = derivative(p);
    eig.iter().map(|&z0| newton_polish(p, &dp, z0)).collect()
}

fn newton_polish(p: &[Complex64], dp: &[Complex64], z0: Complex64) -> Complex64 {
    let mut z = z0;
    let mut best = (horner(p, z).norm(), z);
    for _ in 0..8 {
        let d = horner(dp, z);
        if d.norm() == 0.0 {
            break;
        }
        let step = horner(p, z) / d;
        if !step.re.is_finite() || !step.im.is_finite() {
            break;
        }
        z -= step;
        let r = horner(p, z).norm();
        if r < best.0 {
            best = (r, z);
        }
        if step.norm() <= 1e-17 * z.norm().max(1.0) {
            break;
        }
    }
    best.1
}

/// Product of two polynomials.
pub fn mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn roots_of_cubic() {
        // (z - 1)(z + 2)(z - i)
        let p = mul(&mul(&[c(-1.0, 0.0), c(1.0, 0.0)], &[c(2.0, 0.0), c(1.0, 0.0)]), &[
            c(0.0, -1.0),
            c(1.0, 0.0),
        ]);
        let mut r = roots(&p);
        r.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let expect = [c(-2.0, 0.0), c(0.0, 1.0), c(1.0, 0.0)];
        for (a, b) in r.iter().zip(expect.iter()) {
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn constants_have_no_roots() {
        assert!(roots(&[c(3.0, 0.0)]).is_empty());
        assert!(roots(&[c(3.0, 0.0), c(0.0, 0.0)]).is_empty());
    }

    #[test]
    fn double_root_is_close() {
        let r = roots(&[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(r.len(), 2);
        for z in r {
            assert!(z.norm() < 1e-7);
        }
    }
}
