//! Local search over the coefficients of discs with a fixed center.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::{RhRecord, SearchBudget};
use crate::disc::{refine_with, AnalyticDisc, BoundaryFamily, FitOptions, RhOptions};
use crate::field::ScalarField;
use crate::functional::{mean_value, roots_of_unity, QuadratureSpec};
use crate::rng::StreamKey;
use crate::space::{BranchMap, DomainConstraint};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const PENALTY: f64 = 100.0;
/// Starts per degree stage that go on to exact coordinate descent.
const POLISHED: usize = 2;

/// One search space: discs with a fixed center in a parameter space of
/// dimension `width`, scored by a field evaluated on that space.
pub(crate) struct Problem<'a> {
    pub u: &'a ScalarField,
    pub width: usize,
    pub ambient_dim: usize,
    pub center: Vec<Complex64>,
    pub branch: Option<&'a BranchMap>,
    pub domain: Option<&'a DomainConstraint>,
    pub q: QuadratureSpec,
    pub nodes: Vec<Complex64>,
    /// Length-`M` transforms: `inverse` sums `a_j w^{jl}`, `forward` its adjoint.
    inverse: Arc<dyn Fft<f64>>,
    forward: Arc<dyn Fft<f64>>,
}

/// Outcome of a search from the constant disc.
pub(crate) struct SearchResult {
    pub disc: AnalyticDisc,
    pub value: f64,
    pub rounds: Vec<(String, f64)>,
    pub rh: Vec<RhRecord>,
}

impl<'a> Problem<'a> {
    pub fn new(
        u: &'a ScalarField,
        center: Vec<Complex64>,
        ambient_dim: usize,
        branch: Option<&'a BranchMap>,
        domain: Option<&'a DomainConstraint>,
        q: QuadratureSpec,
    ) -> Self {
        let mut planner = FftPlanner::new();
        let inverse = planner.plan_fft_inverse(q.m);
        let forward = planner.plan_fft_forward(q.m);
        Self { u, width: center.len(), ambient_dim, center, branch, domain, q, nodes: roots_of_unity(q.m), inverse, forward }
    }

    fn with_center(&self, center: Vec<Complex64>) -> Problem<'a> {
        Problem {
            center,
            nodes: self.nodes.clone(),
            inverse: self.inverse.clone(),
            forward: self.forward.clone(),
            ..*self
        }
    }

    /// Amount by which a parameter-space point leaves the domain (`<= 0` inside).
    #[inline]
    fn excess(&self, p: &[Complex64]) -> f64 {
        let Some(d) = self.domain else {
            return f64::NEG_INFINITY;
        };
        match self.branch {
            None => d.excess(p),
            Some(b) => {
                let mut buf = [ZERO; 8];
                if b.dim() <= 8 {
                    b.eval_into(p[0], &mut buf[..b.dim()]);
                    d.excess(&buf[..b.dim()])
                } else {
                    d.excess(&b.eval(p[0]).0)
                }
            }
        }
    }

    /// Integrand of the exact functional: `+inf` outside the domain or where
    /// `u` fails to evaluate.
    #[inline]
    pub fn node_value(&self, p: &[Complex64]) -> f64 {
        if self.excess(p) > 0.0 {
            return f64::INFINITY;
        }
        self.u.eval(p).unwrap_or(f64::INFINITY)
    }

    #[inline]
    fn surrogate_value(&self, us: &ScalarField, p: &[Complex64]) -> f64 {
        let e = self.excess(p).max(0.0);
        match us.eval(p) {
            Ok(v) if v.is_finite() => v + PENALTY * e * e,
            _ => f64::INFINITY,
        }
    }

    pub fn to_disc(&self, a: &[Complex64]) -> AnalyticDisc {
        let mut coeffs = self.center.clone();
        coeffs.extend_from_slice(a);
        AnalyticDisc::from_flat(coeffs, self.width, self.ambient_dim, self.branch.cloned())
    }

    fn degree_of(&self, a: &[Complex64]) -> usize {
        a.len() / self.width
    }

    /// Boundary values `center + sum_j a_j w^{jl}`, `M x width`.
    fn boundary(&self, a: &[Complex64]) -> Vec<Complex64> {
        let (m, w) = (self.q.m, self.width);
        let d = self.degree_of(a);
        let mut out = vec![ZERO; m * w];
        let mut buf = vec![ZERO; m];
        for c in 0..w {
            buf.fill(ZERO);
            buf[0] = self.center[c];
            for j in 1..=d {
                buf[j % m] += a[(j - 1) * w + c];
            }
            self.inverse.process(&mut buf);
            for l in 0..m {
                out[l * w + c] = buf[l];
            }
        }
        out
    }

    /// Exact functional of a disc, evaluated afresh from its coefficients.
    pub fn value_of(&self, disc: &AnalyticDisc) -> f64 {
        let b = disc.boundary_params(self.q.m);
        let vals: Vec<f64> = b.chunks_exact(self.width).map(|p| self.node_value(p)).collect();
        mean_value(&vals, self.q.clip)
    }

    fn feasible(&self, b: &[Complex64]) -> bool {
        self.domain.is_none() || b.chunks_exact(self.width).all(|p| self.excess(p) <= 0.0)
    }

    /// Scales row `j` by `rho^j` with the largest `rho <= 1` keeping every
    /// boundary node inside the domain.
    fn project(&self, a: &mut [Complex64]) {
        if self.feasible(&self.boundary(a)) {
            return;
        }
        let w = self.width;
        let scaled = |rho: f64| -> Vec<Complex64> {
            a.iter()
                .enumerate()
                .map(|(i, v)| v * rho.powi((i / w + 1) as i32))
                .collect()
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if self.feasible(&self.boundary(&scaled(mid))) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = scaled(lo);
        a.copy_from_slice(&s);
    }

    /// Smoothed objective and its gradient with respect to the real and
    /// imaginary parts of every coefficient.
    fn surrogate_grad(&self, us: &ScalarField, a: &[Complex64], grad: &mut [f64]) -> f64 {
        let (m, w) = (self.q.m, self.width);
        let d = self.degree_of(a);
        let b = self.boundary(a);
        let mut total = 0.0;
        let mut g = vec![ZERO; m * w];
        let mut p = vec![ZERO; w];
        for l in 0..m {
            let base = &b[l * w..(l + 1) * w];
            let v0 = self.surrogate_value(us, base);
            total += v0;
            if !v0.is_finite() {
                continue;
            }
            for c in 0..w {
                p.copy_from_slice(base);
                let h = 1e-7 * base[c].norm().max(1.0);
                p[c] = base[c] + h;
                let gx = (self.surrogate_value(us, &p) - v0) / h;
                p[c] = base[c] + Complex64::new(0.0, h);
                let gy = (self.surrogate_value(us, &p) - v0) / h;
                if gx.is_finite() && gy.is_finite() {
                    g[l * w + c] = Complex64::new(gx, gy);
                }
            }
        }
        let mut buf = vec![ZERO; m];
        for c in 0..w {
            for l in 0..m {
                buf[l] = g[l * w + c];
            }
            self.forward.process(&mut buf);
            for j in 1..=d {
                let t = buf[j % m] / m as f64;
                let i = (j - 1) * w + c;
                grad[2 * i] = t.re;
                grad[2 * i + 1] = t.im;
            }
        }
        total / m as f64
    }

    fn surrogate(&self, us: &ScalarField, a: &[Complex64]) -> f64 {
        let b = self.boundary(a);
        b.chunks_exact(self.width).map(|p| self.surrogate_value(us, p)).sum::<f64>() / self.q.m as f64
    }

    /// Limited-memory BFGS with backtracking on the smoothed objective.
    fn lbfgs(&self, us: &ScalarField, a: &mut Vec<Complex64>, iters: usize) {
        const MEM: usize = 8;
        let n = 2 * a.len();
        if n == 0 {
            return;
        }
        let pack = |a: &[Complex64]| -> Vec<f64> { a.iter().flat_map(|z| [z.re, z.im]).collect() };
        let unpack = |x: &[f64]| -> Vec<Complex64> { x.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect() };
        let mut x = pack(a);
        let mut g = vec![0.0; n];
        let mut fx = self.surrogate_grad(us, a, &mut g);
        if !fx.is_finite() {
            return;
        }
        let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
        for _ in 0..iters {
            let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gnorm < 1e-10 {
                break;
            }
            // two-loop recursion
            let mut dir: Vec<f64> = g.iter().map(|v| -v).collect();
            let mut alphas = Vec::with_capacity(hist.len());
            for (s, y, rho) in hist.iter().rev() {
                let al = rho * dot(s, &dir);
                axpy(-al, y, &mut dir);
                alphas.push(al);
            }
            if let Some((s, y, _)) = hist.last() {
                let gamma = dot(s, y) / dot(y, y);
                dir.iter_mut().for_each(|v| *v *= gamma);
            }
            for ((s, y, rho), al) in hist.iter().zip(alphas.iter().rev()) {
                let be = rho * dot(y, &dir);
                axpy(al - be, s, &mut dir);
            }
            let mut slope = dot(&g, &dir);
            if !(slope < 0.0) {
                hist.clear();
                dir = g.iter().map(|v| -v).collect();
                slope = -gnorm * gnorm;
            }
            if hist.is_empty() {
                // first step: move at most 0.1 in coefficient space
                let dn = dot(&dir, &dir).sqrt();
                let s = (0.1 / dn).min(1.0);
                dir.iter_mut().for_each(|v| *v *= s);
                slope *= s;
            }
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..30 {
                let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
                let fn_ = self.surrogate(us, &unpack(&xn));
                if fn_ <= fx + 1e-4 * t * slope {
                    accepted = Some((xn, fn_));
                    break;
                }
                t *= 0.5;
            }
            let Some((xn, _)) = accepted else {
                break;
            };
            let an = unpack(&xn);
            let mut gn = vec![0.0; n];
            let fnew = self.surrogate_grad(us, &an, &mut gn);
            let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-16 * dot(&y, &y).max(1e-300) {
                hist.push((s, y, 1.0 / sy));
                if hist.len() > MEM {
                    hist.remove(0);
                }
            }
            let progress = fx - fnew;
            x = xn;
            g = gn;
            fx = fnew;
            if progress.abs() < 1e-13 * fx.abs().max(1.0) {
                break;
            }
        }
        *a = unpack(&x);
    }

    /// Coordinate descent on the exact functional with shrinking steps.
    fn coordinate_descent(&self, a: &mut [Complex64], b: &SearchBudget) {
        let (m, w) = (self.q.m, self.width);
        let d = self.degree_of(a);
        if d == 0 || b.descent_iters == 0 {
            return;
        }
        let mut bnd = self.boundary(a);
        let vals: Vec<f64> = bnd.chunks_exact(w).map(|p| self.node_value(p)).collect();
        let mut cur = mean_value(&vals, self.q.clip);
        let mut trial_b = vec![ZERO; m];
        let mut trial_v = vec![0.0; m];
        let mut step = b.step_init;
        let mut p = vec![ZERO; w];
        for _ in 0..b.descent_iters {
            let mut improved = false;
            for j in 1..=d {
                for c in 0..w {
                    for dir in [Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(0.0, -1.0)] {
                        let delta = dir * step;
                        for l in 0..m {
                            trial_b[l] = bnd[l * w + c] + delta * self.nodes[(j * l) % m];
                            p.copy_from_slice(&bnd[l * w..(l + 1) * w]);
                            p[c] = trial_b[l];
                            trial_v[l] = self.node_value(&p);
                        }
                        let v = mean_value(&trial_v, self.q.clip);
                        if v < cur {
                            cur = v;
                            a[(j - 1) * w + c] += delta;
                            for l in 0..m {
                                bnd[l * w + c] = trial_b[l];
                            }
                            improved = true;
                            break;
                        }
                    }
                }
            }
            if !improved {
                step *= b.step_shrink;
                if step < 1e-10 {
                    break;
                }
            }
        }
    }

    /// Smoothed descent through the ramp schedule; returns the best
    /// coefficients seen by the exact functional.
    fn smooth_stage(&self, start: Vec<Complex64>, b: &SearchBudget) -> (Vec<Complex64>, f64) {
        let exact = |a: &[Complex64]| self.value_of(&self.to_disc(a));
        let mut best_v = exact(&start);
        let mut best = start.clone();
        if b.smooth_iters > 0 && !start.is_empty() {
            let mut a = start;
            let widths: &[f64] = if self.u.has_indicator() { &b.ramp_schedule } else { &[0.0] };
            for &width in widths {
                let us = if width > 0.0 { self.u.ramped(width) } else { self.u.clone() };
                self.lbfgs(&us, &mut a, b.smooth_iters);
                self.project(&mut a);
                let v = exact(&a);
                if v < best_v {
                    best_v = v;
                    best = a.clone();
                }
            }
        }
        (best, best_v)
    }

    /// Exact coordinate descent from a smoothed result.
    fn polish(&self, start: (Vec<Complex64>, f64), b: &SearchBudget) -> (Vec<Complex64>, f64) {
        let mut a = start.0.clone();
        self.coordinate_descent(&mut a, b);
        let v = self.value_of(&self.to_disc(&a));
        if v < start.1 {
            (a, v)
        } else {
            start
        }
    }

    fn random_start(&self, key: StreamKey, degree: usize, b: &SearchBudget) -> Vec<Complex64> {
        let mut rng = key.rng();
        let size = b.coeff_scale;
        let mut a = Vec::with_capacity(degree * self.width);
        for j in 1..=degree {
            let s = size * b.coeff_decay.powi(j as i32 - 1) / std::f64::consts::SQRT_2;
            for _ in 0..self.width {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                a.push(Complex64::new(re * s, im * s));
            }
        }
        self.project(&mut a);
        a
    }

    /// A start that spans the polydisc: per coordinate, `rho e^{i phi} zeta^k`
    /// with `rho < 1` is composed with the disc automorphism sending `0` to
    /// the center, and the composition is replaced by its Fejer mean of the
    /// given degree. Fejer means stay in
    /// the closed convex hull of the boundary values, so the start is
    /// feasible up to rounding.
    fn hyperbolic_start(&self, dom: &DomainConstraint, key: StreamKey, degree: usize) -> Vec<Complex64> {
        const N: usize = 1024;
        let mut rng = key.rng();
        let w = self.width;
        let circle = roots_of_unity(N);
        let mut a = vec![ZERO; degree * w];
        for c in 0..w {
            let (o, r) = (dom.centers[c], dom.radii[c]);
            let x = (self.center[c] - o) / r;
            if x.norm() >= 1.0 - 1e-9 {
                continue;
            }
            let k = rng.gen_range(1..=degree.min(3));
            let rho: f64 = rng.gen_range(0.5..0.995);
            let phase = Complex64::from_polar(rho, rng.gen_range(0.0..std::f64::consts::TAU));
            let g: Vec<Complex64> = (0..N)
                .map(|l| {
                    let s = phase * circle[(k * l) % N];
                    (s + x) / (Complex64::new(1.0, 0.0) + x.conj() * s)
                })
                .collect();
            for j in 1..=degree {
                let mut t = ZERO;
                for (l, gl) in g.iter().enumerate() {
                    t += gl * circle[(j * l) % N].conj();
                }
                let fejer = 1.0 - j as f64 / (degree + 1) as f64;
                a[(j - 1) * w + c] = t * (r * fejer / N as f64);
            }
        }
        self.project(&mut a);
        a
    }

    /// The incumbent plus Gaussian noise at a tenth of its rms coefficient.
    fn jittered(&self, base: &[Complex64], key: StreamKey) -> Vec<Complex64> {
        let mut rng = key.rng();
        let rms = (base.iter().map(|z| z.norm_sqr()).sum::<f64>() / base.len() as f64).sqrt();
        let s = 0.1 * rms / std::f64::consts::SQRT_2;
        let mut a: Vec<Complex64> = base
            .iter()
            .map(|z| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                z + Complex64::new(re * s, im * s)
            })
            .collect();
        self.project(&mut a);
        a
    }

    /// Full search: degree stages with restarts, then refinement rounds.
    pub fn search(&self, b: &SearchBudget, key: StreamKey) -> SearchResult {
        let mut inc = self.to_disc(&[]);
        let mut val = self.value_of(&inc);
        let mut rounds = vec![("constant".to_string(), val)];
        for (s, &d) in b.degree_schedule.iter().enumerate() {
            let base = inc.padded(d).coeffs[self.width..].to_vec();
            let warm = inc.degree > 0;
            let mut starts = vec![base.clone()];
            for r in 0..b.restarts {
                let k = key.stage(s as u64).restart(r);
                // odd restarts jitter the incumbent, even ones start afresh
                starts.push(match (r % 2, self.domain) {
                    (1, _) if warm => self.jittered(&base, k),
                    (0, Some(dom)) if self.branch.is_none() => self.hyperbolic_start(dom, k, d),
                    _ => self.random_start(k, d, b),
                });
            }
            let smoothed: Vec<(Vec<Complex64>, f64)> =
                starts.into_par_iter().map(|st| self.smooth_stage(st, b)).collect();
            let mut order: Vec<usize> = (0..smoothed.len()).collect();
            order.sort_by(|&i, &j| smoothed[i].1.total_cmp(&smoothed[j].1).then(i.cmp(&j)));
            order.truncate(POLISHED);
            let results: Vec<(Vec<Complex64>, f64)> =
                order.par_iter().map(|&i| self.polish(smoothed[i].clone(), b)).collect();
            let mut bi = 0;
            for (i, r) in results.iter().enumerate() {
                if r.1 < results[bi].1 {
                    bi = i;
                }
            }
            if results[bi].1 < val {
                inc = self.to_disc(&results[bi].0);
                val = results[bi].1;
            }
            rounds.push((format!("degree {d}"), val));
        }
        let mut rh = Vec::new();
        for r in 0..b.rh_rounds {
            let (mut rec, cand) = self.rh_round(&inc, b, key.stage(1000 + r as u64));
            if let Some((disc, v)) = cand {
                if v <= val - 1e-12 {
                    inc = disc;
                    val = v;
                    rec.accepted = true;
                }
            }
            rh.push(rec);
            rounds.push((format!("rh {}", r + 1), val));
        }
        SearchResult { disc: inc, value: val, rounds, rh }
    }

    fn child_budget(&self, b: &SearchBudget) -> SearchBudget {
        let tenth = |x: usize| if x == 0 { 0 } else { (x / 10).max(1) };
        SearchBudget {
            degree_schedule: vec![b.child_degree],
            restarts: tenth(b.restarts).max(1),
            descent_iters: tenth(b.descent_iters),
            smooth_iters: tenth(b.smooth_iters),
            rh_rounds: 0,
            ..b.clone()
        }
    }

    /// Attaches short searches at `M_b` boundary points of `f`, fits the
    /// family and composes.
    fn rh_round(&self, f: &AnalyticDisc, b: &SearchBudget, key: StreamKey) -> (RhRecord, Option<(AnalyticDisc, f64)>) {
        let mb = b.boundary_samples;
        let w = self.width;
        let anchors = f.boundary_params(mb);
        let child_b = self.child_budget(b);
        let children: Vec<AnalyticDisc> = (0..mb)
            .into_par_iter()
            .map(|j| {
                let child = self.with_center(anchors[j * w..(j + 1) * w].to_vec());
                let mut r = child.search(&child_b, key);
                r.disc = r.disc.padded(b.child_degree);
                r.disc
            })
            .collect();
        let mut rec = RhRecord::default();
        let family = match BoundaryFamily::new(f.clone(), children, 1e-9) {
            Ok(fam) => fam,
            Err(e) => {
                rec.note = Some(e.to_string());
                return (rec, None);
            }
        };
        let m = mb / 4;
        let opts = RhOptions {
            m,
            n_terms: b.child_degree.max(1),
            deg_a: 2 * m,
            k_schedule: b.k_schedule.iter().copied().filter(|&k| k > m).collect(),
            n_phases: b.n_phases,
            degree_cap: b.degree_cap,
            fit: FitOptions::default(),
        };
        let arcs = [(0.0, std::f64::consts::TAU)];
        match refine_with(&family, &opts, self.q.m, &arcs, |p| self.node_value(p)) {
            Ok(out) => {
                let v = self.value_of(&out.disc);
                rec.k = Some(out.k);
                rec.phase = Some([out.c.re, out.c.im]);
                rec.value = v.is_finite().then_some(v);
                rec.double_integral = out.double_integral.is_finite().then_some(out.double_integral);
                rec.eps_report = Some(out.eps_report);
                rec.fit_residual = Some(out.fit.residual);
                rec.degree = Some(out.disc.degree);
                (rec, Some((out.disc, v)))
            }
            Err(e) => {
                rec.note = Some(e.to_string());
                (rec, None)
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(al: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += al * xi;
    }
}
