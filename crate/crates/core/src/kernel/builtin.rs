use std::f64::consts::PI;

use rand::Rng;

use super::{random_direction, unit_ball_volume, unit_sphere_area, JumpKernel, Support};
use crate::geometry::Domain;
use crate::linalg::{dist, norm};
use crate::rng::SimRng;

pub(crate) fn shell_volume(dim: usize, inner: f64, outer: f64) -> f64 {
    let d = dim as i32;
    unit_ball_volume(dim) * (outer.powi(d) - inner.powi(d)).max(0.0)
}

/// Area of the intersection of two disks with radii `r1`, `r2` whose centers
/// are `d` apart.
pub fn lens_area(d: f64, r1: f64, r2: f64) -> f64 {
    if d >= r1 + r2 {
        return 0.0;
    }
    if d <= (r1 - r2).abs() {
        let r = r1.min(r2);
        return PI * r * r;
    }
    let a1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0).acos();
    let a2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0).acos();
    let k = ((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)).max(0.0);
    r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * k.sqrt()
}

#[derive(Clone, Debug)]
pub struct ZeroKernel {
    dim: usize,
}

impl ZeroKernel {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl JumpKernel for ZeroKernel {
    fn name(&self) -> &str {
        "zero"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn density(&self, _x: &[f64], _h: &[f64]) -> f64 {
        0.0
    }
    fn envelope(&self, _h: &[f64]) -> f64 {
        0.0
    }
    fn tail_mass(&self, _delta: f64) -> f64 {
        0.0
    }
    fn sample_envelope(&self, _delta: f64, _rng: &mut SimRng, out: &mut [f64]) {
        out.fill(0.0);
    }
    fn symmetric_small_jumps(&self) -> bool {
        true
    }
    fn state_independent(&self) -> bool {
        true
    }
    fn support(&self, _x: &[f64]) -> Support {
        Support::Balls(Vec::new())
    }
    fn mass_above(&self, _x: &[f64], _delta: f64) -> Option<f64> {
        Some(0.0)
    }
    fn set_intensity(&self, _x: &[f64], _set: &Domain) -> Option<f64> {
        Some(0.0)
    }
}

/// Constant density `c` on the shell `inner ≤ |h| ≤ outer`.
#[derive(Clone, Debug)]
pub struct ShellUniform {
    dim: usize,
    c: f64,
    inner: f64,
    outer: f64,
}

impl ShellUniform {
    pub fn new(dim: usize, c: f64, inner: f64, outer: f64) -> Self {
        Self {
            dim,
            c,
            inner,
            outer,
        }
    }

    /// Total jump intensity `c · |shell|`.
    pub fn total_rate(&self) -> f64 {
        self.c * shell_volume(self.dim, self.inner, self.outer)
    }

    fn value(&self, h: &[f64]) -> f64 {
        let r = norm(h);
        if r >= self.inner && r <= self.outer {
            self.c
        } else {
            0.0
        }
    }
}

impl JumpKernel for ShellUniform {
    fn name(&self) -> &str {
        "shell-uniform"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn density(&self, _x: &[f64], h: &[f64]) -> f64 {
        self.value(h)
    }
    fn envelope(&self, h: &[f64]) -> f64 {
        self.value(h)
    }
    fn tail_mass(&self, delta: f64) -> f64 {
        self.c * shell_volume(self.dim, self.inner.max(delta), self.outer)
    }
    fn sample_envelope(&self, delta: f64, rng: &mut SimRng, out: &mut [f64]) {
        let d = self.dim as f64;
        let lo = self.inner.max(delta).powf(d);
        let hi = self.outer.powf(d);
        let u: f64 = rng.random();
        let r = (lo + u * (hi - lo)).powf(1.0 / d);
        random_direction(rng, out);
        out.iter_mut().for_each(|v| *v *= r);
    }
    fn symmetric_small_jumps(&self) -> bool {
        true
    }
    fn state_independent(&self) -> bool {
        true
    }
    fn support(&self, _x: &[f64]) -> Support {
        Support::Radial {
            inner: self.inner,
            outer: self.outer,
            breaks: Vec::new(),
        }
    }
    fn mass_above(&self, _x: &[f64], delta: f64) -> Option<f64> {
        Some(self.tail_mass(delta))
    }
    fn set_intensity(&self, x: &[f64], set: &Domain) -> Option<f64> {
        let Domain::Ball { center, radius } = set else {
            return None;
        };
        let s = dist(center, x);
        if s - radius >= self.inner && s + radius <= self.outer {
            Some(self.c * set.volume())
        } else if s + radius <= self.inner || s - radius >= self.outer {
            Some(0.0)
        } else if self.dim == 2 {
            Some(self.c * (lens_area(s, *radius, self.outer) - lens_area(s, *radius, self.inner)))
        } else {
            None
        }
    }
}

fn stable_tail(dim: usize, alpha: f64, c: f64, delta: f64) -> f64 {
    if delta >= 1.0 {
        return 0.0;
    }
    c * unit_sphere_area(dim) * (delta.powf(-alpha) - 1.0) / alpha
}

fn stable_radius(alpha: f64, delta: f64, u: f64) -> f64 {
    let top = delta.powf(-alpha);
    (top - u * (top - 1.0)).powf(-1.0 / alpha)
}

/// `c |h|^(−d−α)` on `0 < |h| ≤ 1`.
#[derive(Clone, Debug)]
pub struct TruncatedStable {
    dim: usize,
    alpha: f64,
    c: f64,
}

impl TruncatedStable {
    pub fn new(dim: usize, alpha: f64, c: f64) -> Self {
        Self { dim, alpha, c }
    }

    /// Closed form of `∫ (|h|² ∧ 1) n(h) dh`.
    pub fn mass_bound(&self) -> f64 {
        self.c * unit_sphere_area(self.dim) / (2.0 - self.alpha)
    }

    fn value(&self, h: &[f64]) -> f64 {
        let r = norm(h);
        if r > 0.0 && r <= 1.0 {
            self.c * r.powf(-(self.dim as f64) - self.alpha)
        } else {
            0.0
        }
    }
}

impl JumpKernel for TruncatedStable {
    fn name(&self) -> &str {
        "truncated-stable"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn density(&self, _x: &[f64], h: &[f64]) -> f64 {
        self.value(h)
    }
    fn envelope(&self, h: &[f64]) -> f64 {
        self.value(h)
    }
    fn tail_mass(&self, delta: f64) -> f64 {
        stable_tail(self.dim, self.alpha, self.c, delta)
    }
    fn sample_envelope(&self, delta: f64, rng: &mut SimRng, out: &mut [f64]) {
        let r = stable_radius(self.alpha, delta, rng.random());
        random_direction(rng, out);
        out.iter_mut().for_each(|v| *v *= r);
    }
    fn symmetric_small_jumps(&self) -> bool {
        true
    }
    fn state_independent(&self) -> bool {
        true
    }
    fn support(&self, _x: &[f64]) -> Support {
        Support::Radial {
            inner: 0.0,
            outer: 1.0,
            breaks: Vec::new(),
        }
    }
    fn mass_above(&self, _x: &[f64], delta: f64) -> Option<f64> {
        Some(self.tail_mass(delta))
    }
}

/// `c(x) |h|^(−d−α)` on `0 < |h| ≤ 1` with
/// `c(x) = c_low + (c_high − c_low)(1 + sin ω x₁)/2` and envelope constant
/// `c_max ≥ c_high`.
#[derive(Clone, Debug)]
pub struct StateModulatedStable {
    dim: usize,
    alpha: f64,
    c_low: f64,
    c_high: f64,
    omega: f64,
    c_max: f64,
}

impl StateModulatedStable {
    pub fn new(dim: usize, alpha: f64, c_low: f64, c_high: f64, omega: f64, c_max: f64) -> Self {
        Self {
            dim,
            alpha,
            c_low,
            c_high,
            omega,
            c_max,
        }
    }

    pub fn intensity_at(&self, x: &[f64]) -> f64 {
        self.c_low + (self.c_high - self.c_low) * 0.5 * (1.0 + (self.omega * x[0]).sin())
    }

    fn profile(&self, h: &[f64]) -> f64 {
        let r = norm(h);
        if r > 0.0 && r <= 1.0 {
            r.powf(-(self.dim as f64) - self.alpha)
        } else {
            0.0
        }
    }
}

impl JumpKernel for StateModulatedStable {
    fn name(&self) -> &str {
        "state-modulated-stable"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn density(&self, x: &[f64], h: &[f64]) -> f64 {
        self.intensity_at(x) * self.profile(h)
    }
    fn envelope(&self, h: &[f64]) -> f64 {
        self.c_max * self.profile(h)
    }
    fn tail_mass(&self, delta: f64) -> f64 {
        stable_tail(self.dim, self.alpha, self.c_max, delta)
    }
    fn sample_envelope(&self, delta: f64, rng: &mut SimRng, out: &mut [f64]) {
        let r = stable_radius(self.alpha, delta, rng.random());
        random_direction(rng, out);
        out.iter_mut().for_each(|v| *v *= r);
    }
    fn symmetric_small_jumps(&self) -> bool {
        true
    }
    fn state_independent(&self) -> bool {
        self.c_low == self.c_high
    }
    fn support(&self, _x: &[f64]) -> Support {
        Support::Radial {
            inner: 0.0,
            outer: 1.0,
            breaks: Vec::new(),
        }
    }
    fn mass_above(&self, x: &[f64], delta: f64) -> Option<f64> {
        Some(stable_tail(self.dim, self.alpha, self.intensity_at(x), delta))
    }
}

/// Indicator kernel `Σ_{4 ≤ m ≤ m_max} 1_{C_m}(x) 1_{E_m}(x + h)` on the
/// plane, scaled by `intensity`.
///
/// `C_m` is the open disk of radius `2^(−m−4)` about `(−1/8, 2^(−m))` and
/// `E_m` the disk of the same radius about `(16, 2^(−m))`. The differences
/// `E_m − C_m` are concentric disks about `(16.125, 0)`, so the envelope is
/// the indicator of the largest of them.
#[derive(Clone, Debug)]
pub struct CounterexampleKernel {
    m_max: u32,
    intensity: f64,
}

pub const COUNTEREXAMPLE_M_MIN: u32 = 4;
const ENVELOPE_CENTER: [f64; 2] = [16.125, 0.0];

impl CounterexampleKernel {
    pub fn new(m_max: u32, intensity: f64) -> Self {
        Self { m_max, intensity }
    }

    pub fn m_max(&self) -> u32 {
        self.m_max
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn radius(m: u32) -> f64 {
        2f64.powi(-(m as i32) - 4)
    }

    pub fn source_center(m: u32) -> [f64; 2] {
        [-0.125, 2f64.powi(-(m as i32))]
    }

    pub fn target_center(m: u32) -> [f64; 2] {
        [16.0, 2f64.powi(-(m as i32))]
    }

    pub fn reference_point() -> [f64; 2] {
        [0.125, 0.0]
    }

    /// `C_m` as a domain.
    pub fn source(m: u32) -> Domain {
        Domain::ball(Self::source_center(m).to_vec(), Self::radius(m))
    }

    /// `E_m` as a domain.
    pub fn target(m: u32) -> Domain {
        Domain::ball(Self::target_center(m).to_vec(), Self::radius(m))
    }

    fn envelope_radius(&self) -> f64 {
        2.0 * Self::radius(COUNTEREXAMPLE_M_MIN)
    }

    /// The `m` with `x ∈ C_m`, if any.
    pub fn locate(&self, x: &[f64]) -> Option<u32> {
        if !(x[1] > 0.0) {
            return None;
        }
        let guess = (-x[1].log2()).round();
        if !guess.is_finite() {
            return None;
        }
        let guess = guess as i64;
        (guess - 1..=guess + 1)
            .filter(|m| *m >= COUNTEREXAMPLE_M_MIN as i64 && *m <= self.m_max as i64)
            .map(|m| m as u32)
            .find(|&m| dist(x, &Self::source_center(m)) < Self::radius(m))
    }
}

impl JumpKernel for CounterexampleKernel {
    fn name(&self) -> &str {
        "counterexample-s7"
    }
    fn dim(&self) -> usize {
        2
    }
    fn density(&self, x: &[f64], h: &[f64]) -> f64 {
        match self.locate(x) {
            Some(m) => {
                let v = [x[0] + h[0], x[1] + h[1]];
                if dist(&v, &Self::target_center(m)) < Self::radius(m) {
                    self.intensity
                } else {
                    0.0
                }
            }
            None => 0.0,
        }
    }
    fn envelope(&self, h: &[f64]) -> f64 {
        if dist(h, &ENVELOPE_CENTER) < self.envelope_radius() {
            self.intensity
        } else {
            0.0
        }
    }
    fn tail_mass(&self, delta: f64) -> f64 {
        let r = self.envelope_radius();
        self.intensity * (PI * r * r - lens_area(ENVELOPE_CENTER[0], delta, r))
    }
    fn sample_envelope(&self, delta: f64, rng: &mut SimRng, out: &mut [f64]) {
        let r = self.envelope_radius();
        loop {
            let u: f64 = rng.random();
            let s = r * u.sqrt();
            let phi = 2.0 * PI * rng.random::<f64>();
            out[0] = ENVELOPE_CENTER[0] + s * phi.cos();
            out[1] = ENVELOPE_CENTER[1] + s * phi.sin();
            if norm(out) >= delta {
                return;
            }
        }
    }
    fn symmetric_small_jumps(&self) -> bool {
        true
    }
    fn state_independent(&self) -> bool {
        false
    }
    fn support(&self, x: &[f64]) -> Support {
        match self.locate(x) {
            Some(m) => {
                let z = Self::target_center(m);
                Support::Balls(vec![(vec![z[0] - x[0], z[1] - x[1]], Self::radius(m))])
            }
            None => Support::Balls(Vec::new()),
        }
    }
    fn mass_above(&self, x: &[f64], delta: f64) -> Option<f64> {
        Some(match self.locate(x) {
            Some(m) => {
                let rho = Self::radius(m);
                let s = dist(x, &Self::target_center(m));
                self.intensity * (PI * rho * rho - lens_area(s, delta, rho))
            }
            None => 0.0,
        })
    }
    fn set_intensity(&self, x: &[f64], set: &Domain) -> Option<f64> {
        let Some(m) = self.locate(x) else {
            return Some(0.0);
        };
        match set {
            Domain::Ball { center, radius } => Some(
                self.intensity
                    * lens_area(dist(center, &Self::target_center(m)), Self::radius(m), *radius),
            ),
            Domain::Cube { .. } => None,
        }
    }
}
