//! Monte Carlo estimators with confidence intervals.
//!
//! Every estimator runs one simulated path per stream index
//! `first_stream .. first_stream + n_paths` of a master seed, in parallel,
//! and reduces the per-path results in stream order with compensated
//! summation, so results do not depend on worker scheduling.

use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, ExitDetector, StopKind, StopResult};
use crate::rng::RngStream;
use crate::sim::{PathObserver, Simulator, Step};
use crate::stats::{Neumaier, Provenance};

mod counterexample;
mod exit;
mod harmonic;
mod regularity;
mod systems;
mod tube;

pub use counterexample::{counterexample_ratio, counterexample_ratio_direct, CounterexampleRow};
pub use exit::{exit_moment, exit_moments, exit_scaling, exit_tail, ExitMoment, ExitScaling};
pub use harmonic::{
    harmonic_estimate, hit_probabilities, hit_probability, krylov_functional,
    occupation_exit_distribution, HitProbability, Krylov,
};
pub use regularity::{harnack_ratio, holder_fit, HarnackGrid, HarnackResult, HolderResult};
pub use systems::{levy_system_check, meyer_equivalence, LevyCheck, MeyerEquivalence};
pub use tube::{tube_probability, AnchorPath};

/// Bounded payoff on `ℝᵈ`.
pub type Payoff<'a> = dyn Fn(&[f64]) -> f64 + Send + Sync + 'a;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarlo {
    pub n_paths: u64,
    pub seed: u64,
    pub first_stream: u64,
    /// Confidence level of reported intervals.
    pub level: f64,
    /// Brownian-bridge crossing test between samples when monitoring exits
    /// and tubes.
    pub bridge: bool,
    /// Largest censored fraction for which an estimate is certified.
    pub censor_tolerance: f64,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            seed: 1,
            first_stream: 0,
            level: 0.99,
            bridge: true,
            censor_tolerance: 1e-3,
        }
    }
}

impl MonteCarlo {
    pub fn new(n_paths: u64, seed: u64) -> Self {
        Self {
            n_paths,
            seed,
            ..Self::default()
        }
    }

    pub fn with_bridge(mut self, bridge: bool) -> Self {
        self.bridge = bridge;
        self
    }

    pub fn with_level(mut self, level: f64) -> Self {
        self.level = level;
        self
    }

    /// The `k`-th block of `n_paths` streams after this one's first stream.
    pub fn block(&self, k: u64) -> Self {
        Self {
            first_stream: self.first_stream + k * self.n_paths,
            ..self.clone()
        }
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            seed: self.seed,
            first_stream: self.first_stream,
            streams: self.n_paths,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::Precondition("n_paths must be positive".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Precondition(format!(
                "confidence level {} outside (0, 1)",
                self.level
            )));
        }
        Ok(())
    }

    /// Runs `f` on every stream and returns the results in stream order.
    pub fn map_paths<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(RngStream) -> Result<T> + Sync,
    {
        self.validate()?;
        (0..self.n_paths)
            .into_par_iter()
            .map(|i| f(RngStream::new(self.seed, self.first_stream + i)))
            .collect()
    }
}

/// Outcome of one path run until it leaves a domain.
#[derive(Clone, Debug)]
pub(crate) struct ExitPath {
    pub stop: StopResult,
    /// `∫_0^τ g(X_s) ds` by left-endpoint quadrature (zero without `g`).
    pub integral: f64,
}

impl ExitPath {
    pub fn censored(&self) -> bool {
        self.stop.kind == StopKind::Horizon
    }
}

struct ExitObserver<'a, G> {
    det: ExitDetector<'a>,
    g: G,
    integral: Neumaier,
    stop: Option<StopResult>,
    err: Option<Error>,
    t: f64,
    last: Vec<f64>,
}

impl<G: FnMut(&[f64]) -> Result<f64>> PathObserver for ExitObserver<'_, G> {
    fn step(&mut self, s: &Step<'_>) -> ControlFlow<()> {
        let exit = self.det.observe(s);
        let t_end = exit.as_ref().map_or(s.t1, |r| r.time);
        match (self.g)(s.x0) {
            Ok(v) => {
                if v != 0.0 {
                    self.integral.add(v * (t_end - s.t0));
                }
            }
            Err(e) => {
                self.err = Some(e);
                return ControlFlow::Break(());
            }
        }
        if let Some(r) = exit {
            self.stop = Some(r);
            return ControlFlow::Break(());
        }
        self.t = s.t1;
        self.last.copy_from_slice(s.post);
        ControlFlow::Continue(())
    }
}

pub(crate) fn run_to_exit<G>(
    sim: &Simulator,
    x0: &[f64],
    domain: &Domain,
    stream: RngStream,
    bridge: bool,
    g: G,
) -> Result<ExitPath>
where
    G: FnMut(&[f64]) -> Result<f64>,
{
    let det = ExitDetector::new(domain, bridge.then(|| stream.substream("bridge")));
    det.check_start(x0)?;
    let mut obs = ExitObserver {
        det,
        g,
        integral: Neumaier::default(),
        stop: None,
        err: None,
        t: 0.0,
        last: x0.to_vec(),
    };
    sim.run(x0, stream, &mut obs)?;
    if let Some(e) = obs.err {
        return Err(e);
    }
    let stop = obs.stop.unwrap_or(StopResult {
        kind: StopKind::Horizon,
        time: obs.t,
        state: obs.last,
        overshoot: 0.0,
        by_jump: false,
    });
    Ok(ExitPath {
        stop,
        integral: obs.integral.value(),
    })
}

pub(crate) fn no_integrand(_x: &[f64]) -> Result<f64> {
    Ok(0.0)
}

pub(crate) fn check_start(sim: &Simulator, x0: &[f64], domain: &Domain) -> Result<()> {
    if x0.len() != sim.op().dim() || domain.dim() != sim.op().dim() {
        return Err(Error::Dimension {
            expected: sim.op().dim(),
            found: if x0.len() != sim.op().dim() { x0.len() } else { domain.dim() },
        });
    }
    domain.validate()?;
    if !domain.contains(x0) {
        return Err(Error::Precondition(format!("start point {x0:?} lies outside the domain")));
    }
    Ok(())
}
