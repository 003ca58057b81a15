//! Radial-shell quadrature for kernel functionals.
//!
//! Integrals over displacement space are written in polar form
//! `∫ r^(d−1) ∫_{S^(d−1)} g(rθ) dθ dr`. The angular part uses a fixed rule
//! (two points in one dimension, an offset trapezoid on the circle,
//! Gauss–Legendre × trapezoid on the sphere); the radial part is adaptive
//! Gauss–Legendre in `ln r` with breakpoints at decades, at `|h| = 1` and
//! wherever the kernel reports a radial discontinuity.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::{JumpKernel, Support};
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::linalg::norm;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Inner cutoff; below it the radial profile is extrapolated as a power
    /// law fitted on `[h_min, 10 h_min]`.
    pub h_min: f64,
    pub angular_nodes: usize,
    pub rel_tol: f64,
    pub max_depth: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            h_min: 1e-6,
            angular_nodes: 64,
            rel_tol: 1e-10,
            max_depth: 24,
        }
    }
}

impl QuadratureSpec {
    /// Cheaper rule for integrands evaluated once per simulation step.
    pub fn coarse() -> Self {
        Self {
            angular_nodes: 32,
            rel_tol: 1e-8,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassEstimate {
    /// Estimate of `∫ (|h|² ∧ 1) n(x, h) dh`.
    pub value: f64,
    /// Error indicator: adaptive refinement defects plus the spread of the
    /// small-`|h|` extrapolation.
    pub error: f64,
    /// Part of `value` contributed by extrapolation below `h_min`.
    pub tail: f64,
}

pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = z;
        weights[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (nodes, weights)
}

fn gl10() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(10))
}

fn panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (x, w) = gl10();
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    x.iter().zip(w).map(|(xi, wi)| wi * f(m + h * xi)).sum::<f64>() * h
}

struct Adaptive<'a> {
    f: &'a dyn Fn(f64) -> f64,
    abs_tol: f64,
    error: f64,
    exhausted: bool,
}

impl Adaptive<'_> {
    fn refine(&mut self, a: f64, b: f64, whole: f64, depth: usize) -> f64 {
        let m = 0.5 * (a + b);
        let left = panel(self.f, a, m);
        let right = panel(self.f, m, b);
        let defect = (left + right - whole).abs();
        if defect <= self.abs_tol || depth == 0 {
            if depth == 0 && defect > self.abs_tol {
                self.exhausted = true;
            }
            self.error += defect;
            return left + right;
        }
        self.refine(a, m, left, depth - 1) + self.refine(m, b, right, depth - 1)
    }
}

/// Adaptive integral of `f` over `[points[0], points[last]]`, splitting at
/// every listed point. Returns `(value, error, exhausted)`.
fn integrate(f: &dyn Fn(f64) -> f64, points: &[f64], spec: &QuadratureSpec) -> (f64, f64, bool) {
    let rough: Vec<f64> = points.windows(2).map(|w| panel(f, w[0], w[1])).collect();
    let scale = rough.iter().map(|v| v.abs()).sum::<f64>();
    let mut run = Adaptive {
        f,
        abs_tol: (spec.rel_tol * scale).max(1e-300) / points.len() as f64,
        error: 0.0,
        exhausted: false,
    };
    let mut total = 0.0;
    for (w, whole) in points.windows(2).zip(rough) {
        total += run.refine(w[0], w[1], whole, spec.max_depth);
    }
    (total, run.error, run.exhausted)
}

/// Angular rule on `S^(d−1)`: flattened unit directions and weights summing
/// to the sphere area.
pub(crate) struct SphereRule {
    pub dim: usize,
    pub dirs: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn new(dim: usize, nodes: usize) -> Result<Self> {
        let nodes = nodes.max(4);
        let (dirs, weights) = match dim {
            1 => (vec![1.0, -1.0], vec![1.0, 1.0]),
            2 => {
                let w = 2.0 * PI / nodes as f64;
                let mut dirs = Vec::with_capacity(2 * nodes);
                for j in 0..nodes {
                    let t = (j as f64 + 0.5) * w;
                    dirs.extend([t.cos(), t.sin()]);
                }
                (dirs, vec![w; nodes])
            }
            3 => {
                let (mu, wmu) = gauss_legendre(nodes / 2);
                let wphi = 2.0 * PI / nodes as f64;
                let mut dirs = Vec::new();
                let mut weights = Vec::new();
                for (c, wc) in mu.iter().zip(&wmu) {
                    let s = (1.0 - c * c).sqrt();
                    for j in 0..nodes {
                        let p = (j as f64 + 0.5) * wphi;
                        dirs.extend([s * p.cos(), s * p.sin(), *c]);
                        weights.push(wc * wphi);
                    }
                }
                (dirs, weights)
            }
            _ => {
                return Err(Error::Numerical(format!(
                    "angular quadrature is available for d ≤ 3, not d = {dim}"
                )))
            }
        };
        Ok(Self { dim, dirs, weights })
    }

    /// `r^(d−1) Σ_j w_j g(origin + r θ_j)`.
    pub fn shell(&self, origin: &[f64], r: f64, g: &mut dyn FnMut(&[f64]) -> f64) -> f64 {
        let d = self.dim;
        let mut p = vec![0.0; d];
        let mut s = 0.0;
        for (j, w) in self.weights.iter().enumerate() {
            for i in 0..d {
                p[i] = origin[i] + r * self.dirs[j * d + i];
            }
            s += w * g(&p);
        }
        s * r.powi(d as i32 - 1)
    }
}

fn radial_points(lo: f64, hi: f64, extra: &[f64]) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    let mut dec = 10f64.powf(lo.log10().floor() + 1.0);
    while dec < hi {
        pts.push(dec);
        dec *= 10.0;
    }
    pts.push(1.0);
    pts.extend_from_slice(extra);
    pts.retain(|p| *p >= lo && *p <= hi && p.is_finite());
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// `∫_{lo ≤ |h| ≤ hi} g(h) dh` in log-radius, `0 < lo < hi < ∞`.
fn integrate_shell(
    rule: &SphereRule,
    g: &dyn Fn(&[f64]) -> f64,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    spec: &QuadratureSpec,
) -> (f64, f64, bool) {
    if !(hi > lo) {
        return (0.0, 0.0, false);
    }
    let origin = vec![0.0; rule.dim];
    let f = |u: f64| {
        let r = u.exp();
        rule.shell(&origin, r, &mut |h| g(h)) * r
    };
    let pts: Vec<f64> = radial_points(lo, hi, breaks).iter().map(|p| p.ln()).collect();
    integrate(&f, &pts, spec)
}

/// `∫_{B(center, radius)} g(h) dh` in polar coordinates about the center.
fn integrate_ball(
    rule: &SphereRule,
    g: &dyn Fn(&[f64]) -> f64,
    center: &[f64],
    radius: f64,
    spec: &QuadratureSpec,
) -> (f64, f64, bool) {
    let f = |s: f64| rule.shell(center, s, &mut |h| g(h));
    integrate(&f, &[0.0, 0.5 * radius, radius], spec)
}

fn integrate_support(
    kernel: &dyn JumpKernel,
    x: &[f64],
    g: &dyn Fn(&[f64]) -> f64,
    lo: f64,
    hi: f64,
    spec: &QuadratureSpec,
) -> Result<(f64, f64, bool)> {
    let rule = SphereRule::new(kernel.dim(), spec.angular_nodes)?;
    Ok(match kernel.support(x) {
        Support::Radial {
            inner,
            outer,
            breaks,
        } => integrate_shell(&rule, g, inner.max(lo), outer.min(hi), &breaks, spec),
        Support::Balls(balls) => {
            let mut acc = (0.0, 0.0, false);
            for (c, rho) in balls {
                let cn = norm(&c);
                if cn + rho < lo || cn - rho > hi {
                    continue;
                }
                let gated = |h: &[f64]| {
                    let r = norm(h);
                    if r >= lo && r <= hi {
                        g(h)
                    } else {
                        0.0
                    }
                };
                let (v, e, x) = integrate_ball(&rule, &gated, &c, rho, spec);
                acc = (acc.0 + v, acc.1 + e, acc.2 || x);
            }
            acc
        }
    })
}

/// Quadrature estimate of `∫ (|h|² ∧ 1) n(x, h) dh`.
pub fn kernel_mass_bound(
    kernel: &dyn JumpKernel,
    x: &[f64],
    spec: &QuadratureSpec,
) -> Result<MassEstimate> {
    if !(spec.h_min > 0.0) {
        return Err(Error::Input("quadrature cutoff h_min must be positive".into()));
    }
    let g = |h: &[f64]| {
        let r2 = h.iter().map(|v| v * v).sum::<f64>();
        r2.min(1.0) * kernel.density(x, h)
    };
    let (mut value, mut error, exhausted) =
        integrate_support(kernel, x, &g, spec.h_min, f64::INFINITY, spec)?;
    if exhausted && error > 1e-6 * value.abs().max(1e-12) {
        return Err(Error::Numerical(format!(
            "mass quadrature did not converge at x = {x:?} (defect {error:e})"
        )));
    }
    let mut tail = 0.0;
    if let Support::Radial { inner, .. } = kernel.support(x) {
        if inner < spec.h_min {
            let rule = SphereRule::new(kernel.dim(), spec.angular_nodes)?;
            let origin = vec![0.0; kernel.dim()];
            let profile = |r: f64| rule.shell(&origin, r, &mut |h| g(h));
            let f0 = profile(spec.h_min);
            if f0 > 0.0 {
                let f1 = profile(10.0 * spec.h_min);
                let f2 = profile(100.0 * spec.h_min);
                let p = (f1 / f0).log10();
                let p_prev = (f2 / f1).log10();
                if !(p > -1.0) {
                    return Err(Error::Integrability(format!(
                        "radial profile of (|h|²∧1) n(x,h) at x = {x:?} behaves like r^{p:.3} near 0; \
                         the integral diverges"
                    )));
                }
                tail = f0 * spec.h_min / (p + 1.0);
                if p_prev > -1.0 {
                    error += (tail - f0 * spec.h_min / (p_prev + 1.0)).abs();
                }
                value += tail;
            }
        }
    }
    Ok(MassEstimate { value, error, tail })
}

/// `−∫_{δ ≤ |h| ≤ 1} h n(x, h) dh`.
pub fn compensator_drift(
    kernel: &dyn JumpKernel,
    x: &[f64],
    delta: f64,
    spec: &QuadratureSpec,
) -> Result<Vec<f64>> {
    let d = kernel.dim();
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Input(format!("truncation δ = {delta} outside (0, 1]")));
    }
    if kernel.symmetric_small_jumps() || delta >= 1.0 {
        return Ok(vec![0.0; d]);
    }
    let mut out = vec![0.0; d];
    for (i, o) in out.iter_mut().enumerate() {
        let g = |h: &[f64]| h[i] * kernel.density(x, h);
        let (v, e, exhausted) = integrate_support(kernel, x, &g, delta, 1.0, spec)?;
        if exhausted && e > 1e-6 * v.abs().max(1e-9) {
            return Err(Error::Numerical(format!(
                "compensator quadrature did not converge at x = {x:?}, coordinate {} (defect {e:e})",
                i + 1
            )));
        }
        *o = -v;
    }
    Ok(out)
}

/// `∫_{|h| ≥ δ} n(x, h) dh`, in closed form when the kernel provides it.
pub fn jump_mass_above(
    kernel: &dyn JumpKernel,
    x: &[f64],
    delta: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if let Some(m) = kernel.mass_above(x, delta) {
        return Ok(m);
    }
    let g = |h: &[f64]| kernel.density(x, h);
    let (v, _, _) = integrate_support(kernel, x, &g, delta.max(spec.h_min), f64::INFINITY, spec)?;
    Ok(v)
}

/// `∫_set n(x, v − x) dv`, in closed form when the kernel provides it.
pub fn set_intensity(
    kernel: &dyn JumpKernel,
    x: &[f64],
    set: &Domain,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if let Some(v) = kernel.set_intensity(x, set) {
        return Ok(v);
    }
    let d = kernel.dim();
    let mut h = vec![0.0; d];
    let mut g = |v: &[f64]| {
        for i in 0..d {
            h[i] = v[i] - x[i];
        }
        kernel.density(x, &h)
    };
    match set {
        Domain::Ball { center, radius } => {
            let rule = SphereRule::new(d, spec.angular_nodes)?;
            let f = |s: f64| {
                let mut hh = vec![0.0; d];
                rule.shell(center, s, &mut |v| {
                    for i in 0..d {
                        hh[i] = v[i] - x[i];
                    }
                    kernel.density(x, &hh)
                })
            };
            let (v, _, _) = integrate(&f, &[0.0, 0.5 * radius, *radius], spec);
            Ok(v)
        }
        Domain::Cube { center, side } => {
            let (nodes, weights) = gauss_legendre(10);
            let panels = 4usize;
            let per = panels * nodes.len();
            let step = side / panels as f64;
            let mut coords = Vec::with_capacity(per);
            let mut ws = Vec::with_capacity(per);
            for p in 0..panels {
                let m = -0.5 * side + (p as f64 + 0.5) * step;
                for (t, w) in nodes.iter().zip(&weights) {
                    coords.push(m + 0.5 * step * t);
                    ws.push(0.5 * step * w);
                }
            }
            let total = per.pow(d as u32);
            let mut v = vec![0.0; d];
            let mut acc = 0.0;
            for flat in 0..total {
                let mut rest = flat;
                let mut w = 1.0;
                for i in 0..d {
                    let k = rest % per;
                    rest /= per;
                    v[i] = center[i] + coords[k];
                    w *= ws[k];
                }
                acc += w * g(&v);
            }
            Ok(acc)
        }
    }
}
