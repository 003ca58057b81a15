//! Balls, axis-aligned cubes, and first exit / first hitting times.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist, norm};
use crate::rng::SimRng;
use crate::sim::{PathSkeleton, Step};

/// Open ball `B(center, radius)` or open cube `Q(center, side)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum Domain {
    Ball { center: Vec<f64>, radius: f64 },
    Cube { center: Vec<f64>, side: f64 },
}

impl Domain {
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        Domain::Ball { center, radius }
    }

    pub fn cube(center: Vec<f64>, side: f64) -> Self {
        Domain::Cube { center, side }
    }

    pub fn center(&self) -> &[f64] {
        match self {
            Domain::Ball { center, .. } | Domain::Cube { center, .. } => center,
        }
    }

    pub fn dim(&self) -> usize {
        self.center().len()
    }

    pub fn validate(&self) -> Result<()> {
        let (c, size) = match self {
            Domain::Ball { center, radius } => (center, *radius),
            Domain::Cube { center, side } => (center, *side),
        };
        if c.is_empty() || c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Geometry(format!("invalid center {c:?}")));
        }
        if !(size > 0.0 && size.is_finite()) {
            return Err(Error::Geometry(format!("domain size must be positive, got {size}")));
        }
        Ok(())
    }

    /// Signed distance to the boundary: positive inside, negative outside.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        match self {
            Domain::Ball { center, radius } => radius - dist(x, center),
            Domain::Cube { center, side } => {
                let half = 0.5 * side;
                let mut worst = f64::NEG_INFINITY;
                let mut outside = 0.0;
                for (xi, ci) in x.iter().zip(center) {
                    let q = (xi - ci).abs() - half;
                    worst = worst.max(q);
                    if q > 0.0 {
                        outside += q * q;
                    }
                }
                if worst <= 0.0 {
                    -worst
                } else {
                    -outside.sqrt()
                }
            }
        }
    }

    /// Strict membership; boundary points are outside.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.boundary_distance(x) > 0.0
    }

    /// Outward unit normal at the boundary point nearest to `x`.
    pub fn normal(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Domain::Ball { center, .. } => {
                let r = dist(x, center);
                if r > 0.0 {
                    for i in 0..out.len() {
                        out[i] = (x[i] - center[i]) / r;
                    }
                } else {
                    out.fill(0.0);
                    out[0] = 1.0;
                }
            }
            Domain::Cube { center, side } => {
                let half = 0.5 * side;
                if self.contains(x) {
                    let (mut k, mut best) = (0, f64::NEG_INFINITY);
                    for (i, (xi, ci)) in x.iter().zip(center).enumerate() {
                        let q = (xi - ci).abs() - half;
                        if q > best {
                            best = q;
                            k = i;
                        }
                    }
                    out.fill(0.0);
                    out[k] = if x[k] >= center[k] { 1.0 } else { -1.0 };
                } else {
                    for i in 0..out.len() {
                        let q = (x[i] - center[i]).abs() - half;
                        out[i] = if q > 0.0 { q.copysign(x[i] - center[i]) } else { 0.0 };
                    }
                    let n = norm(out);
                    out.iter_mut().for_each(|v| *v /= n);
                }
            }
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Domain::Ball { center, radius } => {
                crate::kernel::unit_ball_volume(center.len()) * radius.powi(center.len() as i32)
            }
            Domain::Cube { center, side } => side.powi(center.len() as i32),
        }
    }

    /// Largest distance from the center to a point of the domain.
    pub fn outer_radius(&self) -> f64 {
        match self {
            Domain::Ball { radius, .. } => *radius,
            Domain::Cube { center, side } => 0.5 * side * (center.len() as f64).sqrt(),
        }
    }

    /// Whether `other ⊆ self`.
    pub fn contains_domain(&self, other: &Domain) -> bool {
        match (self, other) {
            (Domain::Ball { center, radius }, Domain::Ball { center: c, radius: r }) => {
                dist(center, c) + r <= *radius
            }
            (Domain::Ball { center, radius }, Domain::Cube { center: c, side }) => {
                let far: f64 = center
                    .iter()
                    .zip(c)
                    .map(|(a, b)| ((a - b).abs() + 0.5 * side).powi(2))
                    .sum();
                far.sqrt() <= *radius
            }
            (Domain::Cube { center, side }, Domain::Ball { center: c, radius }) => center
                .iter()
                .zip(c)
                .all(|(a, b)| (a - b).abs() + radius <= 0.5 * side),
            (Domain::Cube { center, side }, Domain::Cube { center: c, side: s }) => center
                .iter()
                .zip(c)
                .all(|(a, b)| (a - b).abs() + 0.5 * s <= 0.5 * side),
        }
    }

    /// Whether the closures of the two domains share a point.
    pub fn closure_intersects(&self, other: &Domain) -> bool {
        match (self, other) {
            (Domain::Ball { center, radius }, Domain::Ball { center: c, radius: r }) => {
                dist(center, c) <= radius + r
            }
            (Domain::Ball { center, radius }, cube @ Domain::Cube { .. })
            | (cube @ Domain::Cube { .. }, Domain::Ball { center, radius }) => {
                -cube.boundary_distance(center) <= *radius
            }
            (Domain::Cube { center, side }, Domain::Cube { center: c, side: s }) => center
                .iter()
                .zip(c)
                .all(|(a, b)| (a - b).abs() <= 0.5 * (side + s)),
        }
    }

    /// Axis-aligned bounding box `(lower, upper)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let half = match self {
            Domain::Ball { radius, .. } => *radius,
            Domain::Cube { side, .. } => 0.5 * side,
        };
        let c = self.center();
        (
            c.iter().map(|v| v - half).collect(),
            c.iter().map(|v| v + half).collect(),
        )
    }

    /// Moves `x` along the outward normal onto the boundary, then nudges it
    /// just outside so that `contains` is false.
    pub fn project_outside(&self, x: &mut [f64]) {
        let mut n = vec![0.0; x.len()];
        self.normal(x, &mut n);
        let sd = self.boundary_distance(x);
        let scale = 1.0 + norm(self.center()) + self.outer_radius();
        let mut nudge = f64::EPSILON * scale;
        loop {
            let mut y: Vec<f64> = x.to_vec();
            for i in 0..y.len() {
                y[i] += (sd + nudge) * n[i];
            }
            if !self.contains(&y) {
                x.copy_from_slice(&y);
                return;
            }
            nudge *= 2.0;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopKind {
    Exited,
    Hit,
    Horizon,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StopResult {
    pub kind: StopKind,
    pub time: f64,
    pub state: Vec<f64>,
    /// Distance from the boundary to the landing point for exits by jump,
    /// zero otherwise.
    pub overshoot: f64,
    pub by_jump: bool,
}

/// Visits every sampled state in time order: each jump contributes its
/// pre-jump state before the post-jump state at the same time.
fn for_each_sample(
    path: &PathSkeleton,
    mut f: impl FnMut(f64, &[f64], bool) -> bool,
) -> bool {
    let mut jumps = path.jumps.iter().peekable();
    for i in 0..path.len() {
        let t = path.times[i];
        let mut by_jump = false;
        if let Some(j) = jumps.peek() {
            if j.time == t {
                if f(t, &j.pre, false) {
                    return true;
                }
                by_jump = true;
                jumps.next();
            }
        }
        if f(t, path.state(i), by_jump) {
            return true;
        }
    }
    false
}

fn horizon_result(path: &PathSkeleton) -> StopResult {
    let last = path.len() - 1;
    StopResult {
        kind: StopKind::Horizon,
        time: path.times[last],
        state: path.state(last).to_vec(),
        overshoot: 0.0,
        by_jump: false,
    }
}

/// First sample outside `domain`.
pub fn first_exit(path: &PathSkeleton, domain: &Domain) -> Result<StopResult> {
    if path.len() == 0 {
        return Err(Error::Precondition("empty path".into()));
    }
    if !domain.contains(path.state(0)) {
        return Err(Error::Precondition(format!(
            "path starts at {:?}, outside the domain",
            path.state(0)
        )));
    }
    let mut found = None;
    for_each_sample(path, |t, x, by_jump| {
        if domain.contains(x) {
            return false;
        }
        found = Some(StopResult {
            kind: StopKind::Exited,
            time: t,
            state: x.to_vec(),
            overshoot: if by_jump { -domain.boundary_distance(x) } else { 0.0 },
            by_jump,
        });
        true
    });
    Ok(found.unwrap_or_else(|| horizon_result(path)))
}

/// First sample in `target`, unless a sample outside `ambient` comes first.
pub fn first_hit_before_exit(
    path: &PathSkeleton,
    target: &Domain,
    ambient: &Domain,
) -> Result<StopResult> {
    if !ambient.contains_domain(target) {
        return Err(Error::Geometry("target is not contained in the ambient domain".into()));
    }
    if path.len() == 0 {
        return Err(Error::Precondition("empty path".into()));
    }
    if !ambient.contains(path.state(0)) {
        return Err(Error::Precondition(format!(
            "path starts at {:?}, outside the ambient domain",
            path.state(0)
        )));
    }
    let mut found = None;
    for_each_sample(path, |t, x, by_jump| {
        let kind = if target.contains(x) {
            StopKind::Hit
        } else if !ambient.contains(x) {
            StopKind::Exited
        } else {
            return false;
        };
        found = Some(StopResult {
            kind,
            time: t,
            state: x.to_vec(),
            overshoot: if kind == StopKind::Exited && by_jump {
                -ambient.boundary_distance(x)
            } else {
                0.0
            },
            by_jump,
        });
        true
    });
    Ok(found.unwrap_or_else(|| horizon_result(path)))
}

/// Streaming exit detector fed one simulator step at a time.
///
/// With a bridge generator, a step whose endpoints both lie inside the
/// domain is still declared an exit with the probability that a Brownian
/// bridge with the step's frozen covariance crosses the tangent half-space
/// at the nearer endpoint, `exp(−2 d₀ d₁ / (nᵀ a n Δt))`. The exit is then
/// placed at the linear interpolation `t₀ + Δt d₀ / (d₀ + d₁)` and its state
/// projected onto the boundary.
pub struct ExitDetector<'a> {
    domain: &'a Domain,
    bridge: Option<SimRng>,
    normal: Vec<f64>,
    buf: Vec<f64>,
}

impl<'a> ExitDetector<'a> {
    pub fn new(domain: &'a Domain, bridge: Option<SimRng>) -> Self {
        let d = domain.dim();
        Self {
            domain,
            bridge,
            normal: vec![0.0; d],
            buf: vec![0.0; d],
        }
    }

    pub fn check_start(&self, x: &[f64]) -> Result<()> {
        if self.domain.contains(x) {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "start point {x:?} lies outside the domain"
            )))
        }
    }

    /// Returns the exit, if it happens during this step.
    pub fn observe(&mut self, step: &Step<'_>) -> Option<StopResult> {
        let d1 = self.domain.boundary_distance(step.pre);
        if d1 <= 0.0 {
            return Some(StopResult {
                kind: StopKind::Exited,
                time: step.t1,
                state: step.pre.to_vec(),
                overshoot: 0.0,
                by_jump: false,
            });
        }
        if let Some(rng) = self.bridge.as_mut() {
            let d0 = self.domain.boundary_distance(step.x0);
            let dt = step.t1 - step.t0;
            if d0 > 0.0 && dt > 0.0 {
                let nearer = if d0 <= d1 { step.x0 } else { step.pre };
                self.domain.normal(nearer, &mut self.normal);
                let var = crate::linalg::quadratic_form(step.a, &self.normal) * dt;
                let exponent = 2.0 * d0 * d1 / var;
                if var > 0.0 && exponent < 40.0 {
                    let u: f64 = rand::Rng::random(rng);
                    if u < (-exponent).exp() {
                        let w = d0 / (d0 + d1);
                        for i in 0..self.buf.len() {
                            self.buf[i] = step.x0[i] + w * (step.pre[i] - step.x0[i]);
                        }
                        self.domain.project_outside(&mut self.buf);
                        return Some(StopResult {
                            kind: StopKind::Exited,
                            time: step.t0 + w * dt,
                            state: self.buf.clone(),
                            overshoot: 0.0,
                            by_jump: false,
                        });
                    }
                }
            }
        }
        if step.jump.is_some() && !self.domain.contains(step.post) {
            return Some(StopResult {
                kind: StopKind::Exited,
                time: step.t1,
                state: step.post.to_vec(),
                overshoot: -self.domain.boundary_distance(step.post),
                by_jump: true,
            });
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::sim::{JumpRecord, JumpTag};

    fn line_path(x0: [f64; 2], speed: [f64; 2], dt: f64, n: usize) -> PathSkeleton {
        let mut p = PathSkeleton::new(2, RngStream::new(0, 0));
        for k in 0..=n {
            let t = k as f64 * dt;
            p.push(t, &[x0[0] + speed[0] * t, x0[1] + speed[1] * t]);
        }
        p
    }

    #[test]
    fn membership_matches_signed_distance() {
        let b = Domain::ball(vec![0.0, 0.0], 1.0);
        assert!(b.contains(&[0.5, 0.5]));
        assert!(!b.contains(&[1.0, 0.0]));
        let c = Domain::cube(vec![0.0, 0.0], 2.0);
        assert!((c.boundary_distance(&[0.5, 0.2]) - 0.5).abs() < 1e-15);
        assert!((c.boundary_distance(&[4.0, 5.0]) + 5.0).abs() < 1e-15);
        assert!(!c.contains(&[1.0, 0.0]));
    }

    #[test]
    fn containment_and_separation() {
        let big = Domain::ball(vec![0.0, 0.0], 1.0);
        assert!(big.contains_domain(&Domain::ball(vec![0.5, 0.0], 0.5)));
        assert!(!big.contains_domain(&Domain::ball(vec![0.5, 0.0], 0.51)));
        assert!(big.contains_domain(&Domain::cube(vec![0.0, 0.0], 1.4)));
        assert!(!big.contains_domain(&Domain::cube(vec![0.0, 0.0], 1.5)));
        assert!(!big.closure_intersects(&Domain::ball(vec![16.0, 0.1], 0.01)));
        assert!(big.closure_intersects(&Domain::cube(vec![1.5, 0.0], 1.0)));
    }

    #[test]
    fn projection_lands_just_outside() {
        let b = Domain::ball(vec![0.2, -0.1], 0.7);
        let mut x = vec![0.5, 0.3];
        b.project_outside(&mut x);
        assert!(!b.contains(&x));
        assert!(b.boundary_distance(&x).abs() < 1e-12);
        let c = Domain::cube(vec![0.0, 0.0], 1.0);
        let mut x = vec![0.1, 0.45];
        c.project_outside(&mut x);
        assert!(!c.contains(&x) && (x[1] - 0.5).abs() < 1e-12 && x[0] == 0.1);
    }

    #[test]
    fn constant_path_reaches_horizon() {
        let p = line_path([0.0, 0.0], [0.0, 0.0], 0.1, 10);
        let r = first_exit(&p, &Domain::ball(vec![0.0, 0.0], 1.0)).unwrap();
        assert_eq!(r.kind, StopKind::Horizon);
    }

    #[test]
    fn unit_speed_line_exits_within_one_step() {
        let dt = 1e-3;
        let p = line_path([0.0, 0.0], [1.0, 0.0], dt, 1500);
        let r = first_exit(&p, &Domain::ball(vec![0.0, 0.0], 1.0)).unwrap();
        assert_eq!(r.kind, StopKind::Exited);
        assert!(r.time >= 1.0 && r.time <= 1.0 + dt + 1e-12, "{}", r.time);
        assert!(r.overshoot <= dt && r.state[0] >= 1.0);
    }

    #[test]
    fn jump_exit_reports_overshoot() {
        let mut p = PathSkeleton::new(2, RngStream::new(0, 0));
        p.push(0.0, &[0.0, 0.0]);
        p.push(0.5, &[0.9, 0.0]);
        p.push(0.7, &[5.0, 0.0]);
        p.jumps.push(JumpRecord {
            time: 0.7,
            pre: vec![0.9, 0.0],
            post: vec![5.0, 0.0],
            tag: JumpTag::Thinned,
        });
        let r = first_exit(&p, &Domain::ball(vec![0.0, 0.0], 1.0)).unwrap();
        assert_eq!(r.kind, StopKind::Exited);
        assert_eq!(r.time, 0.7);
        assert!((r.overshoot - 4.0).abs() < 1e-12);
        assert!(r.by_jump);
    }

    #[test]
    fn start_outside_is_rejected() {
        let p = line_path([2.0, 0.0], [0.0, 0.0], 0.1, 3);
        assert!(first_exit(&p, &Domain::ball(vec![0.0, 0.0], 1.0)).is_err());
    }

    #[test]
    fn hitting_examples() {
        let ambient = Domain::ball(vec![0.0, 0.0], 1.0);
        let p = line_path([0.5, 0.0], [1.0, 0.0], 1e-3, 1000);
        let inside = Domain::ball(vec![0.5, 0.0], 0.1);
        let r = first_hit_before_exit(&p, &inside, &ambient).unwrap();
        assert_eq!((r.kind, r.time), (StopKind::Hit, 0.0));
        let ahead = Domain::ball(vec![0.75, 0.0], 0.05);
        let r = first_hit_before_exit(&p, &ahead, &ambient).unwrap();
        assert_eq!(r.kind, StopKind::Hit);
        assert!((r.time - 0.2).abs() < 2e-3);
        let behind = Domain::ball(vec![-0.5, 0.0], 0.05);
        let r = first_hit_before_exit(&p, &behind, &ambient).unwrap();
        assert_eq!(r.kind, StopKind::Exited);
        let outside = Domain::ball(vec![0.95, 0.0], 0.1);
        assert!(matches!(
            first_hit_before_exit(&p, &outside, &ambient),
            Err(Error::Geometry(_))
        ));
    }
}
