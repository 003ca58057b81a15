//! Euler stepping with envelope thinning for jumps above the truncation
//! level, and Meyer's overlay for enlarging the kernel.
//!
//! Between events the state follows
//! `X ← X + σ(X) ΔW + (b(X) + c_δ(X)) Δt` with `c_δ` the compensator drift of
//! the dropped small jumps. Jump proposals arrive at the envelope rate
//! `Λ̄ = tail_mass(δ) · safety`; at each proposal the Euler step is cut at the
//! proposal time, so the acceptance test sees the left limit `X_{s−}`
//! exactly. Every cut, accepted or not, becomes a sample of the skeleton.

use std::io::Write;
use std::ops::ControlFlow;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::kernel::quadrature::{compensator_drift, jump_mass_above, QuadratureSpec};
use crate::kernel::JumpKernel;
use crate::linalg;
use crate::operator::OperatorSpec;
use crate::rng::{RngStream, SimRng};

const CONTRACT_SLACK: f64 = 1e-12;
const MAX_PROPOSALS: u64 = 100_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub dt: f64,
    /// Jump truncation `δ ∈ (0, 1]`.
    pub delta: f64,
    pub horizon: f64,
    /// Envelope over-domination factor, at least 1.
    pub safety: f64,
    /// Upper bound on `Δt / δ²`.
    pub dt_ratio: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            delta: 0.05,
            horizon: 10.0,
            safety: 1.0,
            dt_ratio: 1.0,
        }
    }
}

impl SimParams {
    pub fn new(dt: f64, delta: f64, horizon: f64) -> Self {
        Self {
            dt,
            delta,
            horizon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_at("simulation")
    }

    /// Checks every field, reporting config errors under `path`.
    pub fn validate_at(&self, path: &str) -> Result<()> {
        let field = |f: &str| format!("{path}.{f}");
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(field("dt"), "time step must be positive"));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::config(field("delta"), "jump truncation must lie in (0, 1]"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::config(field("horizon"), "horizon must be positive"));
        }
        if !(self.safety >= 1.0 && self.safety.is_finite()) {
            return Err(Error::config(field("safety"), "envelope safety factor must be ≥ 1"));
        }
        if !(self.dt_ratio > 0.0) {
            return Err(Error::config(field("dt_ratio"), "must be positive"));
        }
        if self.dt > self.delta * self.delta * self.dt_ratio * (1.0 + 1e-12) {
            return Err(Error::config(
                field("dt"),
                format!(
                    "time step {} exceeds δ² · dt_ratio = {}",
                    self.dt,
                    self.delta * self.delta * self.dt_ratio
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JumpTag {
    Thinned,
    Meyer,
}

impl JumpTag {
    pub fn as_str(self) -> &'static str {
        match self {
            JumpTag::Thinned => "thinned",
            JumpTag::Meyer => "meyer",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JumpRecord {
    pub time: f64,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
    pub tag: JumpTag,
}

/// Time-ordered samples `(t, X_t)` with jump annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSkeleton {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Row-major `len × dim`.
    pub states: Vec<f64>,
    pub jumps: Vec<JumpRecord>,
    pub stream: RngStream,
}

impl PathSkeleton {
    pub fn new(dim: usize, stream: RngStream) -> Self {
        Self {
            dim,
            times: Vec::new(),
            states: Vec::new(),
            jumps: Vec::new(),
            stream,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn push(&mut self, t: f64, x: &[f64]) {
        self.times.push(t);
        self.states.extend_from_slice(x);
    }

    /// CSV with columns `t, x_1..x_d, jump_tag`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let cols: Vec<String> = (1..=self.dim).map(|i| format!("x_{i}")).collect();
        writeln!(w, "t,{},jump_tag", cols.join(","))?;
        let mut jumps = self.jumps.iter().peekable();
        for i in 0..self.len() {
            let tag = match jumps.peek() {
                Some(j) if j.time == self.times[i] => jumps.next().map(|j| j.tag.as_str()),
                _ => None,
            };
            let xs: Vec<String> = self.state(i).iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{:?},{},{}", self.times[i], xs.join(","), tag.unwrap_or(""))?;
        }
        Ok(())
    }
}

/// One Euler segment `[t0, t1]` ending at the left limit `pre`, followed by
/// the jump to `post` if one occurs at `t1`.
#[derive(Debug)]
pub struct Step<'a> {
    pub t0: f64,
    pub t1: f64,
    pub x0: &'a [f64],
    pub pre: &'a [f64],
    pub post: &'a [f64],
    pub jump: Option<JumpTag>,
    /// Diffusion matrix frozen over the segment.
    pub a: &'a [f64],
}

pub trait PathObserver {
    fn start(&mut self, _t: f64, _x: &[f64]) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }

    fn step(&mut self, step: &Step<'_>) -> ControlFlow<()>;
}

/// Records a [`PathSkeleton`].
pub struct Recorder {
    pub path: PathSkeleton,
}

impl PathObserver for Recorder {
    fn start(&mut self, t: f64, x: &[f64]) -> ControlFlow<()> {
        self.path.push(t, x);
        ControlFlow::Continue(())
    }

    fn step(&mut self, s: &Step<'_>) -> ControlFlow<()> {
        let p = &mut self.path;
        if p.times.last() == Some(&s.t1) {
            let n = p.len() - 1;
            p.states[n * p.dim..].copy_from_slice(s.post);
        } else {
            p.push(s.t1, s.post);
        }
        if let Some(tag) = s.jump {
            p.jumps.push(JumpRecord {
                time: s.t1,
                pre: s.pre.to_vec(),
                post: s.post.to_vec(),
                tag,
            });
        }
        ControlFlow::Continue(())
    }
}

/// Kernel enlargement `n ≥ n₀` handled by Meyer's construction, where `n₀`
/// is the operator's own kernel.
#[derive(Clone, Debug)]
pub struct MeyerOverlay {
    pub full: Arc<dyn JumpKernel>,
    /// `n = n₀` on `|h| < floor`.
    pub floor: f64,
    /// Bound on `N(x) = ∫ (n − n₀)(x, h) dh`.
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThinnedJump {
    pub wait: f64,
    pub h: Vec<f64>,
    pub proposals: u64,
}

/// Acceptance probability of an envelope proposal, failing when the kernel
/// exceeds its envelope.
fn acceptance(kernel: &dyn JumpKernel, x: &[f64], h: &[f64], safety: f64) -> Result<f64> {
    let env = kernel.envelope(h);
    let n = kernel.density(x, h);
    if env <= 0.0 {
        if n > 0.0 {
            return Err(Error::KernelContract {
                x: x.to_vec(),
                h: h.to_vec(),
                reason: "positive density where the envelope vanishes".into(),
            });
        }
        return Ok(0.0);
    }
    let p = n / (safety * env);
    if p > 1.0 + CONTRACT_SLACK || n < 0.0 || !p.is_finite() {
        return Err(Error::KernelContract {
            x: x.to_vec(),
            h: h.to_vec(),
            reason: format!("acceptance probability {p} outside [0, 1]"),
        });
    }
    Ok(p)
}

/// Next accepted jump of `kernel` from the frozen state `x`, or `None` when
/// no jump above `δ` can occur.
pub fn next_jump_thinning(
    kernel: &dyn JumpKernel,
    x: &[f64],
    delta: f64,
    safety: f64,
    rng: &mut SimRng,
) -> Result<Option<ThinnedJump>> {
    let rate = kernel.tail_mass(delta) * safety;
    if !(rate > 0.0) || kernel.mass_above(x, delta) == Some(0.0) {
        return Ok(None);
    }
    let mut h = vec![0.0; kernel.dim()];
    let mut wait = 0.0;
    for proposals in 1..=MAX_PROPOSALS {
        wait += rng.sample::<f64, _>(Exp1) / rate;
        kernel.sample_envelope(delta, rng, &mut h);
        let p = acceptance(kernel, x, &h, safety)?;
        if rng.random::<f64>() < p {
            return Ok(Some(ThinnedJump {
                wait,
                h,
                proposals,
            }));
        }
    }
    Err(Error::Numerical(format!(
        "no proposal accepted at x = {x:?} after {MAX_PROPOSALS} draws"
    )))
}

/// Local time-step refinement near small sets.
///
/// At distance `r` from the boundary of the nearest set the step is capped
/// at `(r / resolution)²`, and never taken below `(ρ / (16 resolution))²`
/// where `ρ` is that set's radius (half-side for cubes).
#[derive(Clone, Debug, PartialEq)]
pub struct Refinement {
    pub sets: Vec<Domain>,
    pub resolution: f64,
}

impl Refinement {
    pub fn new(sets: Vec<Domain>) -> Self {
        Self {
            sets,
            resolution: 4.0,
        }
    }

    /// Step cap at `x`, given the base step `dt`.
    pub fn step(&self, x: &[f64], dt: f64) -> f64 {
        let mut h = dt;
        for s in &self.sets {
            let r = s.boundary_distance(x).abs() / self.resolution;
            let floor = s.outer_radius() / (16.0 * self.resolution);
            h = h.min((r * r).max(floor * floor));
        }
        h
    }
}

enum Event {
    Grid,
    Refine,
    Proposal,
    Meyer,
}

/// Path simulator for a fixed operator and discretisation.
#[derive(Clone, Debug)]
pub struct Simulator {
    op: OperatorSpec,
    params: SimParams,
    overlay: Option<MeyerOverlay>,
    quad: QuadratureSpec,
    rate: f64,
    sigma: Option<Vec<f64>>,
    a: Option<Vec<f64>>,
    drift: Option<Vec<f64>>,
    compensator: Option<Vec<f64>>,
    meyer_rate: Option<f64>,
    refine: Option<Refinement>,
}

impl Simulator {
    pub fn new(op: OperatorSpec, params: SimParams) -> Result<Self> {
        params.validate()?;
        let d = op.dim();
        let quad = QuadratureSpec::default();
        let kernel = op.kernel.as_ref();
        let compensator = if kernel.symmetric_small_jumps() {
            Some(vec![0.0; d])
        } else if kernel.state_independent() {
            Some(compensator_drift(kernel, &vec![0.0; d], params.delta, &quad)?)
        } else {
            None
        };
        let a = op.diffusion.constant_matrix().map(|m| m.to_vec());
        let sigma = match &a {
            Some(m) => {
                let mut s = vec![0.0; d * d];
                linalg::cholesky_psd(m, d, &mut s)?;
                Some(s)
            }
            None => None,
        };
        let drift = match (op.drift.constant_vector(), &compensator) {
            (Some(b), Some(c)) => Some(b.iter().zip(c).map(|(b, c)| b + c).collect()),
            _ => None,
        };
        let rate = kernel.tail_mass(params.delta) * params.safety;
        Ok(Self {
            op,
            params,
            overlay: None,
            quad,
            rate,
            sigma,
            a,
            drift,
            compensator,
            meyer_rate: None,
            refine: None,
        })
    }

    /// Same simulator with its time step shrunk near `refine.sets`.
    pub fn with_refinement(&self, refine: Refinement) -> Result<Self> {
        if refine.sets.iter().any(|s| s.dim() != self.op.dim()) {
            return Err(Error::Dimension {
                expected: self.op.dim(),
                found: refine.sets.iter().map(Domain::dim).find(|d| *d != self.op.dim()).unwrap_or(0),
            });
        }
        if !(refine.resolution > 0.0 && refine.resolution.is_finite()) {
            return Err(Error::Input("refinement resolution must be positive".into()));
        }
        for set in &refine.sets {
            set.validate()?;
        }
        let mut s = self.clone();
        s.refine = Some(refine);
        Ok(s)
    }

    /// Adds Meyer's overlay enlarging the operator kernel to `overlay.full`.
    pub fn with_overlay(mut self, overlay: MeyerOverlay) -> Result<Self> {
        if overlay.full.dim() != self.op.dim() {
            return Err(Error::Dimension {
                expected: self.op.dim(),
                found: overlay.full.dim(),
            });
        }
        if !(overlay.floor > 0.0) || !(overlay.bound >= 0.0 && overlay.bound.is_finite()) {
            return Err(Error::Precondition(
                "Meyer overlay needs a positive floor and a finite bound".into(),
            ));
        }
        if overlay.full.state_independent() && self.op.kernel.state_independent() {
            let x = vec![0.0; self.op.dim()];
            self.meyer_rate = Some(self.excess_mass(&overlay, &x)?);
        }
        self.overlay = Some(overlay);
        Ok(self)
    }

    /// Same simulator with a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        let mut s = self.clone();
        s.params.horizon = horizon;
        s.params.validate()?;
        Ok(s)
    }

    /// Same simulator with a different time step.
    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        let mut s = self.clone();
        s.params.dt = dt;
        s.params.validate()?;
        Ok(s)
    }

    pub fn op(&self) -> &OperatorSpec {
        &self.op
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    /// Proposal rate of the thinning envelope.
    pub fn envelope_rate(&self) -> f64 {
        self.rate
    }

    fn excess_mass(&self, overlay: &MeyerOverlay, x: &[f64]) -> Result<f64> {
        let full = jump_mass_above(overlay.full.as_ref(), x, overlay.floor, &self.quad)?;
        let base = jump_mass_above(self.op.kernel.as_ref(), x, overlay.floor, &self.quad)?;
        let n = full - base;
        let tol = 1e-12 * full.abs().max(1.0);
        if n < -tol {
            return Err(Error::KernelContract {
                x: x.to_vec(),
                h: vec![],
                reason: format!("base kernel mass {base} exceeds enlarged kernel mass {full}"),
            });
        }
        if n > overlay.bound * (1.0 + 1e-9) + tol {
            return Err(Error::KernelContract {
                x: x.to_vec(),
                h: vec![],
                reason: format!("excess mass N(x) = {n} exceeds the declared bound {}", overlay.bound),
            });
        }
        Ok(n.max(0.0))
    }

    /// Draws `h ∝ (n − n₀)(x, ·)` by rejection from the enlarged envelope.
    fn sample_excess(
        &self,
        overlay: &MeyerOverlay,
        x: &[f64],
        rng: &mut SimRng,
        h: &mut [f64],
    ) -> Result<()> {
        let full = overlay.full.as_ref();
        let base = self.op.kernel.as_ref();
        for _ in 0..MAX_PROPOSALS {
            full.sample_envelope(overlay.floor, rng, h);
            let env = full.envelope(h);
            let n = full.density(x, h);
            let n0 = base.density(x, h);
            if n0 > n * (1.0 + CONTRACT_SLACK) {
                return Err(Error::KernelContract {
                    x: x.to_vec(),
                    h: h.to_vec(),
                    reason: format!("base density {n0} exceeds enlarged density {n}"),
                });
            }
            if n > env * (1.0 + CONTRACT_SLACK) {
                return Err(Error::KernelContract {
                    x: x.to_vec(),
                    h: h.to_vec(),
                    reason: format!("density {n} exceeds envelope {env}"),
                });
            }
            if env > 0.0 && rng.random::<f64>() * env < n - n0 {
                return Ok(());
            }
        }
        Err(Error::Numerical(format!(
            "excess-jump sampler at x = {x:?} accepted nothing in {MAX_PROPOSALS} draws"
        )))
    }

    /// Simulates from `x0` until the horizon or until the observer breaks.
    pub fn run<O: PathObserver>(&self, x0: &[f64], stream: RngStream, obs: &mut O) -> Result<()> {
        let d = self.op.dim();
        if x0.len() != d {
            return Err(Error::Dimension {
                expected: d,
                found: x0.len(),
            });
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(format!("start point {x0:?} is not finite")));
        }
        let p = &self.params;
        let kernel = self.op.kernel.as_ref();
        let mut rng = stream.rng();
        let mut meyer_rng = self.overlay.as_ref().map(|_| stream.substream("meyer"));

        let mut x = x0.to_vec();
        let mut pre = vec![0.0; d];
        let mut post = vec![0.0; d];
        let mut h = vec![0.0; d];
        let mut dw = vec![0.0; d];
        let mut inc = vec![0.0; d];
        let mut a_buf = self.a.clone().unwrap_or_else(|| vec![0.0; d * d]);
        let mut sigma_buf = self.sigma.clone().unwrap_or_else(|| vec![0.0; d * d]);
        let mut drift_buf = vec![0.0; d];

        if obs.start(0.0, &x).is_break() {
            return Ok(());
        }

        let mut t = 0.0;
        let mut k: u64 = 0;
        let mut next_proposal = if self.rate > 0.0 {
            rng.sample::<f64, _>(Exp1) / self.rate
        } else {
            f64::INFINITY
        };
        let mut clock = 0.0;
        let mut threshold = match meyer_rng.as_mut() {
            Some(r) => r.sample::<f64, _>(Exp1),
            None => f64::INFINITY,
        };

        while t < p.horizon {
            let grid = (((k + 1) as f64) * p.dt).min(p.horizon);
            let mut t1 = grid;
            let mut event = Event::Grid;
            if let Some(r) = &self.refine {
                let cap = t + r.step(&x, p.dt);
                if cap < t1 {
                    t1 = cap;
                    event = Event::Refine;
                }
            }
            if next_proposal < t1 {
                t1 = next_proposal;
                event = Event::Proposal;
            }
            let mut meyer_n = 0.0;
            if let Some(ov) = &self.overlay {
                meyer_n = match self.meyer_rate {
                    Some(n) => n,
                    None => self.excess_mass(ov, &x)?,
                };
                if meyer_n > 0.0 && clock + meyer_n * (t1 - t) >= threshold {
                    let u = t + (threshold - clock) / meyer_n;
                    if u <= t1 {
                        t1 = u.max(t);
                        event = Event::Meyer;
                    }
                }
            }
            let dt = (t1 - t).max(0.0);

            if self.a.is_none() {
                self.op.diffusion.eval(&x, &mut a_buf);
                linalg::cholesky_psd(&a_buf, d, &mut sigma_buf)?;
            }
            match &self.drift {
                Some(b) => drift_buf.copy_from_slice(b),
                None => {
                    self.op.drift.eval(&x, &mut drift_buf);
                    let local;
                    let c = match &self.compensator {
                        Some(c) => c,
                        None => {
                            local = compensator_drift(kernel, &x, p.delta, &self.quad)?;
                            &local
                        }
                    };
                    drift_buf.iter_mut().zip(c).for_each(|(b, c)| *b += c);
                }
            }
            let sq = dt.sqrt();
            for v in dw.iter_mut() {
                *v = rng.sample::<f64, _>(StandardNormal) * sq;
            }
            linalg::mat_vec(&sigma_buf, &dw, &mut inc);
            for i in 0..d {
                pre[i] = x[i] + inc[i] + drift_buf[i] * dt;
            }
            post.copy_from_slice(&pre);

            let mut jump = None;
            match event {
                Event::Grid => {
                    clock += meyer_n * dt;
                    k += 1;
                }
                Event::Refine => clock += meyer_n * dt,
                Event::Proposal => {
                    clock += meyer_n * dt;
                    kernel.sample_envelope(p.delta, &mut rng, &mut h);
                    let acc = acceptance(kernel, &pre, &h, p.safety)?;
                    if rng.random::<f64>() < acc {
                        for i in 0..d {
                            post[i] = pre[i] + h[i];
                        }
                        jump = Some(JumpTag::Thinned);
                    }
                    next_proposal = t1 + rng.sample::<f64, _>(Exp1) / self.rate;
                }
                Event::Meyer => {
                    let ov = self.overlay.as_ref().expect("overlay present");
                    let mr = meyer_rng.as_mut().expect("overlay present");
                    self.sample_excess(ov, &pre, mr, &mut h)?;
                    for i in 0..d {
                        post[i] = pre[i] + h[i];
                    }
                    jump = Some(JumpTag::Meyer);
                    clock = 0.0;
                    threshold = mr.sample::<f64, _>(Exp1);
                }
            }
            if t1 >= grid && !matches!(event, Event::Grid) {
                k += 1;
            }

            let step = Step {
                t0: t,
                t1,
                x0: &x,
                pre: &pre,
                post: &post,
                jump,
                a: &a_buf,
            };
            let flow = obs.step(&step);
            x.copy_from_slice(&post);
            t = t1;
            if flow.is_break() {
                break;
            }
        }
        Ok(())
    }

    /// Full skeleton up to the horizon.
    pub fn sample_path(&self, x0: &[f64], stream: RngStream) -> Result<PathSkeleton> {
        let mut rec = Recorder {
            path: PathSkeleton::new(self.op.dim(), stream),
        };
        self.run(x0, stream, &mut rec)?;
        Ok(rec.path)
    }
}

/// Convenience wrapper: one path of `op` from `x0`.
pub fn sample_path(
    op: &OperatorSpec,
    x0: &[f64],
    params: &SimParams,
    stream: RngStream,
) -> Result<PathSkeleton> {
    Simulator::new(op.clone(), params.clone())?.sample_path(x0, stream)
}

/// One path of the operator with its kernel enlarged to `overlay.full` by
/// Meyer's construction.
pub fn meyer_overlay(
    op_base: &OperatorSpec,
    overlay: MeyerOverlay,
    x0: &[f64],
    params: &SimParams,
    stream: RngStream,
) -> Result<PathSkeleton> {
    Simulator::new(op_base.clone(), params.clone())?
        .with_overlay(overlay)?
        .sample_path(x0, stream)
}
