use serde::{Deserialize, Serialize};

use super::{check_start, no_integrand, run_to_exit, MonteCarlo};
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::sim::Simulator;
use crate::stats::{Estimate, ScalingFit};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitMoment {
    pub p: f64,
    pub estimate: Estimate,
    pub censored_fraction: f64,
    /// Censored fraction below the tolerance.
    pub certified: bool,
}

/// `E^x0[τ^p]` for several `p` on the same paths. Censored paths count as
/// `horizon^p`.
pub fn exit_moments(
    sim: &Simulator,
    x0: &[f64],
    domain: &Domain,
    ps: &[f64],
    mc: &MonteCarlo,
) -> Result<Vec<ExitMoment>> {
    check_start(sim, x0, domain)?;
    if ps.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::Precondition("moment orders must be positive".into()));
    }
    let paths = mc.map_paths(|s| {
        let p = run_to_exit(sim, x0, domain, s, mc.bridge, no_integrand)?;
        Ok((p.stop.time, p.censored()))
    })?;
    let censored = paths.iter().filter(|p| p.1).count() as f64 / paths.len() as f64;
    Ok(ps
        .iter()
        .map(|&p| {
            let xs: Vec<f64> = paths.iter().map(|(t, _)| t.powf(p)).collect();
            ExitMoment {
                p,
                estimate: Estimate::from_samples(&xs, mc.level).with_provenance(mc.provenance()),
                censored_fraction: censored,
                certified: censored < mc.censor_tolerance,
            }
        })
        .collect())
}

pub fn exit_moment(
    sim: &Simulator,
    x0: &[f64],
    domain: &Domain,
    p: f64,
    mc: &MonteCarlo,
) -> Result<ExitMoment> {
    Ok(exit_moments(sim, x0, domain, &[p], mc)?.remove(0))
}

/// `P^x0(τ ≤ t)` for each `t`, on the same paths. Paths are simulated only
/// up to the largest `t`.
pub fn exit_tail(
    sim: &Simulator,
    x0: &[f64],
    domain: &Domain,
    ts: &[f64],
    mc: &MonteCarlo,
) -> Result<Vec<Estimate>> {
    check_start(sim, x0, domain)?;
    if ts.is_empty() || ts.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::Precondition("times must be finite and non-negative".into()));
    }
    let t_max = ts.iter().cloned().fold(0.0, f64::max);
    if t_max == 0.0 {
        return Ok(ts
            .iter()
            .map(|_| Estimate::from_binomial(0, mc.n_paths, mc.level).with_provenance(mc.provenance()))
            .collect());
    }
    let short = sim.with_horizon(t_max)?;
    let times = mc.map_paths(|s| {
        let p = run_to_exit(&short, x0, domain, s, mc.bridge, no_integrand)?;
        Ok(if p.censored() { f64::INFINITY } else { p.stop.time })
    })?;
    Ok(ts
        .iter()
        .map(|&t| {
            let k = times.iter().filter(|&&tau| tau <= t).count() as u64;
            Estimate::from_binomial(k, mc.n_paths, mc.level).with_provenance(mc.provenance())
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitScaling {
    pub radii: Vec<f64>,
    /// `moments[i][j]` is the moment `ps[i]` at radius `radii[j]`.
    pub moments: Vec<Vec<ExitMoment>>,
    pub fits: Vec<ScalingFit>,
}

/// Exit moments of `B(center, r)` over several radii, with a log-log fit per
/// moment order. With `scale_dt` the time step at radius `r` is
/// `Δt (r / r_max)²`, so every radius is resolved by the same number of
/// steps per unit of `r²`.
pub fn exit_scaling(
    sim: &Simulator,
    center: &[f64],
    radii: &[f64],
    ps: &[f64],
    scale_dt: bool,
    mc: &MonteCarlo,
) -> Result<ExitScaling> {
    if radii.len() < 2 {
        return Err(Error::Precondition("need at least two radii".into()));
    }
    let r_max = radii.iter().cloned().fold(0.0, f64::max);
    let mut per_radius = Vec::with_capacity(radii.len());
    for &r in radii {
        let s = if scale_dt {
            sim.with_dt(sim.params().dt * (r / r_max).powi(2))?
        } else {
            sim.clone()
        };
        let domain = Domain::ball(center.to_vec(), r);
        per_radius.push(exit_moments(&s, center, &domain, ps, mc)?);
    }
    let mut moments = Vec::new();
    let mut fits = Vec::new();
    for i in 0..ps.len() {
        let row: Vec<ExitMoment> = per_radius.iter().map(|m| m[i].clone()).collect();
        let ys: Vec<f64> = row.iter().map(|m| m.estimate.value).collect();
        fits.push(ScalingFit::fit(radii, &ys)?);
        moments.push(row);
    }
    Ok(ExitScaling {
        radii: radii.to_vec(),
        moments,
        fits,
    })
}
