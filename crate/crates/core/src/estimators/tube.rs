use std::ops::ControlFlow;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MonteCarlo;
use crate::error::{Error, Result};
use crate::linalg::{dist, quadratic_form};
use crate::rng::SimRng;
use crate::sim::{PathObserver, Simulator, Step};
use crate::stats::Estimate;

/// Piecewise-linear curve through `(time, point)` knots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorPath {
    pub knots: Vec<(f64, Vec<f64>)>,
}

impl AnchorPath {
    pub fn new(knots: Vec<(f64, Vec<f64>)>) -> Result<Self> {
        let Some((t_first, x_first)) = knots.first() else {
            return Err(Error::Input("anchor path needs at least one knot".into()));
        };
        if *t_first != 0.0 {
            return Err(Error::Input("anchor path must start at time 0".into()));
        }
        let d = x_first.len();
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Input("anchor knot times must increase".into()));
            }
        }
        if knots.iter().any(|(_, x)| x.len() != d || x.iter().any(|v| !v.is_finite())) {
            return Err(Error::Input("anchor knots must be finite points of one dimension".into()));
        }
        Ok(Self { knots })
    }

    /// Constant path at `x`.
    pub fn constant(x: Vec<f64>) -> Self {
        Self {
            knots: vec![(0.0, x)],
        }
    }

    /// Straight line from `a` at time 0 to `b` at time `t`.
    pub fn segment(a: Vec<f64>, b: Vec<f64>, t: f64) -> Result<Self> {
        Self::new(vec![(0.0, a), (t, b)])
    }

    pub fn start(&self) -> &[f64] {
        &self.knots[0].1
    }

    pub fn dim(&self) -> usize {
        self.knots[0].1.len()
    }

    /// Position at time `t`, held constant after the last knot.
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let k = self.knots.partition_point(|(s, _)| *s <= t);
        if k == 0 {
            out.copy_from_slice(&self.knots[0].1);
        } else if k == self.knots.len() {
            out.copy_from_slice(&self.knots[k - 1].1);
        } else {
            let (t0, a) = &self.knots[k - 1];
            let (t1, b) = &self.knots[k];
            let w = (t - t0) / (t1 - t0);
            for i in 0..out.len() {
                out[i] = a[i] + w * (b[i] - a[i]);
            }
        }
    }
}

/// Records, for each radius, whether the path has left the tube.
struct TubeObserver<'a> {
    phi: &'a AnchorPath,
    eps: &'a [f64],
    bridge: Option<SimRng>,
    left: Vec<bool>,
    y0: Vec<f64>,
    y1: Vec<f64>,
    normal: Vec<f64>,
    buf: Vec<f64>,
}

impl TubeObserver<'_> {
    fn deviation(&mut self, t: f64, x: &[f64], into_first: bool) -> f64 {
        self.phi.eval(t, &mut self.buf);
        let y = if into_first { &mut self.y0 } else { &mut self.y1 };
        for i in 0..x.len() {
            y[i] = x[i] - self.buf[i];
        }
        dist(x, &self.buf)
    }

    fn mark(&mut self, r: f64) {
        for (l, e) in self.left.iter_mut().zip(self.eps) {
            if r >= *e {
                *l = true;
            }
        }
    }
}

impl PathObserver for TubeObserver<'_> {
    fn step(&mut self, s: &Step<'_>) -> ControlFlow<()> {
        let r0 = self.deviation(s.t0, s.x0, true);
        let r1 = self.deviation(s.t1, s.pre, false);
        self.mark(r1);
        if let Some(rng) = self.bridge.as_mut() {
            let dt = s.t1 - s.t0;
            if dt > 0.0 {
                let (near, rn) = if r0 >= r1 { (&self.y0, r0) } else { (&self.y1, r1) };
                if rn > 0.0 {
                    for i in 0..near.len() {
                        self.normal[i] = near[i] / rn;
                    }
                    let var = quadratic_form(s.a, &self.normal) * dt;
                    if var > 0.0 {
                        let u: f64 = rng.random();
                        for (l, e) in self.left.iter_mut().zip(self.eps) {
                            let (d0, d1) = (e - r0, e - r1);
                            if !*l && d0 > 0.0 && d1 > 0.0 {
                                let ex = 2.0 * d0 * d1 / var;
                                if ex < 40.0 && u < (-ex).exp() {
                                    *l = true;
                                }
                            }
                        }
                    }
                }
            }
        }
        if s.jump.is_some() {
            let r = self.deviation(s.t1, s.post, false);
            self.mark(r);
        }
        if self.left.iter().all(|l| *l) {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    }
}

/// `P^x0(sup_{t ≤ t0} |X_t − φ(t)| < ε)` for every `ε` in `eps`, with
/// `x0 = φ(0)`. All radii are evaluated on the same paths, so the estimates
/// are non-decreasing in `ε` sample by sample.
///
/// The supremum is taken over sample times. With `mc.bridge`, each step also
/// leaves the tube with the Brownian-bridge probability of crossing the
/// tangent plane of the sphere `|y| = ε` around the deviation at the farther
/// endpoint; a single uniform per step is shared by all radii.
pub fn tube_probability(
    sim: &Simulator,
    phi: &AnchorPath,
    eps: &[f64],
    t0: f64,
    mc: &MonteCarlo,
) -> Result<Vec<Estimate>> {
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::Input(format!("tube radius must be positive (got {e})")));
    }
    if !(t0 > 0.0 && t0.is_finite()) {
        return Err(Error::Input(format!("tube horizon must be positive (got {t0})")));
    }
    let d = sim.op().dim();
    if phi.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            found: phi.dim(),
        });
    }
    let sim = sim.with_horizon(t0)?;
    let x0 = phi.start().to_vec();
    let left = mc.map_paths(|s| {
        let mut obs = TubeObserver {
            phi,
            eps,
            bridge: mc.bridge.then(|| s.substream("bridge")),
            left: vec![false; eps.len()],
            y0: vec![0.0; d],
            y1: vec![0.0; d],
            normal: vec![0.0; d],
            buf: vec![0.0; d],
        };
        sim.run(&x0, s, &mut obs)?;
        Ok(obs.left)
    })?;
    Ok((0..eps.len())
        .map(|j| {
            let k = left.iter().filter(|l| !l[j]).count() as u64;
            Estimate::from_binomial(k, mc.n_paths, mc.level).with_provenance(mc.provenance())
        })
        .collect())
}
