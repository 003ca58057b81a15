use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use super::{check_start, run_to_exit, MonteCarlo, Payoff};
use crate::error::{Error, Result};
use crate::geometry::{Domain, ExitDetector};
use crate::kernel::quadrature::{set_intensity, QuadratureSpec};
use crate::sim::{PathObserver, Simulator, Step};
use crate::stats::Estimate;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitProbability {
    pub estimate: Estimate,
    /// `|target| / |ambient|`.
    pub volume_ratio: f64,
    /// Paths that neither hit nor exited before the horizon.
    pub censored_fraction: f64,
}

struct HitObserver<'a> {
    det: ExitDetector<'a>,
    targets: &'a [Domain],
    hit: Vec<bool>,
    exited: bool,
}

impl HitObserver<'_> {
    fn mark(&mut self, x: &[f64]) -> bool {
        for (h, t) in self.hit.iter_mut().zip(self.targets) {
            if !*h && t.contains(x) {
                *h = true;
            }
        }
        self.hit.iter().all(|h| *h)
    }
}

impl PathObserver for HitObserver<'_> {
    fn step(&mut self, s: &Step<'_>) -> ControlFlow<()> {
        match self.det.observe(s) {
            Some(r) => {
                if r.by_jump {
                    self.mark(s.pre);
                }
                self.exited = true;
                ControlFlow::Break(())
            }
            None => {
                if self.mark(s.pre) || self.mark(s.post) {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            }
        }
    }
}

/// `P^x0(T_target ≤ τ_ambient)` for several targets on the same paths.
pub fn hit_probabilities(
    sim: &Simulator,
    x0: &[f64],
    targets: &[Domain],
    ambient: &Domain,
    mc: &MonteCarlo,
) -> Result<Vec<HitProbability>> {
    check_start(sim, x0, ambient)?;
    for t in targets {
        t.validate()?;
        if !ambient.contains_domain(t) {
            return Err(Error::Geometry(format!(
                "target {t:?} is not contained in the ambient domain"
            )));
        }
    }
    let outcomes = mc.map_paths(|s| {
        let mut obs = HitObserver {
            det: ExitDetector::new(ambient, mc.bridge.then(|| s.substream("bridge"))),
            targets,
            hit: vec![false; targets.len()],
            exited: false,
        };
        if !obs.mark(x0) {
            sim.run(x0, s, &mut obs)?;
        }
        let all = obs.hit.iter().all(|h| *h);
        Ok((obs.hit, !obs.exited && !all))
    })?;
    let censored = outcomes.iter().filter(|o| o.1).count() as f64 / outcomes.len() as f64;
    Ok(targets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let k = outcomes.iter().filter(|o| o.0[i]).count() as u64;
            HitProbability {
                estimate: Estimate::from_binomial(k, mc.n_paths, mc.level)
                    .with_provenance(mc.provenance()),
                volume_ratio: t.volume() / ambient.volume(),
                censored_fraction: censored,
            }
        })
        .collect())
}

pub fn hit_probability(
    sim: &Simulator,
    x0: &[f64],
    target: &Domain,
    ambient: &Domain,
    mc: &MonteCarlo,
) -> Result<HitProbability> {
    Ok(hit_probabilities(sim, x0, std::slice::from_ref(target), ambient, mc)?.remove(0))
}

/// An occupation-type estimate with its censoring diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Krylov {
    pub estimate: Estimate,
    pub censored_fraction: f64,
    pub certified: bool,
}

/// `u(x) = E^x[f(X_τ)]` for several payoffs on the same paths, with the
/// payoff evaluated at the landing state.
pub fn harmonic_estimate(
    sim: &Simulator,
    payoffs: &[&Payoff],
    x: &[f64],
    domain: &Domain,
    mc: &MonteCarlo,
) -> Result<Vec<Krylov>> {
    check_start(sim, x, domain)?;
    let rows = mc.map_paths(|s| {
        let p = run_to_exit(sim, x, domain, s, mc.bridge, super::no_integrand)?;
        let vals = payoffs
            .iter()
            .map(|f| {
                let v = f(&p.stop.state);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Payoff {
                        state: p.stop.state.clone(),
                        value: v,
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok((vals, p.censored()))
    })?;
    let censored = rows.iter().filter(|r| r.1).count() as f64 / rows.len() as f64;
    Ok((0..payoffs.len())
        .map(|i| {
            let xs: Vec<f64> = rows.iter().map(|r| r.0[i]).collect();
            Krylov {
                estimate: Estimate::from_samples(&xs, mc.level).with_provenance(mc.provenance()),
                censored_fraction: censored,
                certified: censored < mc.censor_tolerance,
            }
        })
        .collect())
}

fn occupation<G>(
    sim: &Simulator,
    x: &[f64],
    domain: &Domain,
    mc: &MonteCarlo,
    g: G,
) -> Result<Krylov>
where
    G: Fn(&[f64]) -> Result<f64> + Sync,
{
    check_start(sim, x, domain)?;
    let rows = mc.map_paths(|s| {
        let p = run_to_exit(sim, x, domain, s, mc.bridge, &g)?;
        Ok((p.integral, p.censored()))
    })?;
    let censored = rows.iter().filter(|r| r.1).count() as f64 / rows.len() as f64;
    let xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    Ok(Krylov {
        estimate: Estimate::from_samples(&xs, mc.level).with_provenance(mc.provenance()),
        censored_fraction: censored,
        certified: censored < mc.censor_tolerance,
    })
}

/// `P^x(X_τ ∈ C)` through the occupation identity
/// `E^x ∫_0^τ ∫_C n(X_s, v − X_s) dv ds`, accumulated by left-endpoint
/// quadrature in time.
pub fn occupation_exit_distribution(
    sim: &Simulator,
    x: &[f64],
    domain: &Domain,
    set: &Domain,
    mc: &MonteCarlo,
) -> Result<Krylov> {
    set.validate()?;
    if domain.closure_intersects(set) {
        return Err(Error::Geometry(
            "target set meets the closure of the domain; the occupation identity needs a positive gap"
                .into(),
        ));
    }
    let kernel = sim.op().kernel.clone();
    let spec = QuadratureSpec::coarse();
    occupation(sim, x, domain, mc, move |y: &[f64]| {
        set_intensity(kernel.as_ref(), y, set, &spec)
    })
}

/// `E^x ∫_0^τ f(X_s) ds` by left-endpoint quadrature.
pub fn krylov_functional(
    sim: &Simulator,
    f: &Payoff,
    x: &[f64],
    domain: &Domain,
    mc: &MonteCarlo,
) -> Result<Krylov> {
    occupation(sim, x, domain, mc, |y: &[f64]| {
        let v = f(y);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Payoff {
                state: y.to_vec(),
                value: v,
            })
        }
    })
}
