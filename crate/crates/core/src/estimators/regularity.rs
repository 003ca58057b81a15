use serde::{Deserialize, Serialize};

use super::{harmonic_estimate, run_to_exit, MonteCarlo, Payoff};
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::sim::Simulator;
use crate::stats::{Estimate, ScalingFit};

/// Grid estimates below this many standard errors are not used in ratios.
pub const HARNACK_EXCLUSION_SE: f64 = 5.0;
/// Differences within this many standard errors of zero are not fitted.
pub const HOLDER_EXCLUSION_SE: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnackGrid {
    pub points: Vec<Vec<f64>>,
    /// `values[f][i]` estimates payoff `f` at `points[i]`.
    pub values: Vec<Vec<Estimate>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnackResult {
    pub max_ratio: f64,
    /// `(payoff index, x, y)` with `û(x) / û(y) = max_ratio`.
    pub witness: (usize, Vec<f64>, Vec<f64>),
    /// `(payoff index, point index)` pairs left out of the ratio.
    pub excluded_points: Vec<(usize, usize)>,
    pub excluded_payoffs: Vec<usize>,
    pub grid: HarnackGrid,
}

/// `k^d` points spaced evenly on `z0 + [−R/4, R/4]^d`.
fn grid(z0: &[f64], radius: f64, k: usize) -> Vec<Vec<f64>> {
    let d = z0.len();
    let coord = |j: usize| {
        if k == 1 {
            0.0
        } else {
            -0.25 * radius + 0.5 * radius * j as f64 / (k - 1) as f64
        }
    };
    (0..k.pow(d as u32))
        .map(|flat| {
            let mut rest = flat;
            z0.iter()
                .map(|c| {
                    let j = rest % k;
                    rest /= k;
                    c + coord(j)
                })
                .collect()
        })
        .collect()
}

/// Largest ratio `û(x) / û(y)` over grid pairs in `B(z0, R/2)` and
/// payoffs, where `u(x) = E^x f(X_{τ_{B(z0, R)}})`. The same streams are
/// used at every grid point.
pub fn harnack_ratio(
    sim: &Simulator,
    payoffs: &[&Payoff],
    z0: &[f64],
    radius: f64,
    resolution: usize,
    mc: &MonteCarlo,
) -> Result<HarnackResult> {
    if payoffs.is_empty() || resolution == 0 {
        return Err(Error::Precondition("need payoffs and a positive grid resolution".into()));
    }
    let domain = Domain::ball(z0.to_vec(), radius);
    let points = grid(z0, radius, resolution);
    let mut values = vec![Vec::with_capacity(points.len()); payoffs.len()];
    for p in &points {
        for (f, k) in harmonic_estimate(sim, payoffs, p, &domain, mc)?.into_iter().enumerate() {
            values[f].push(k.estimate);
        }
    }
    let mut best: Option<(f64, usize, usize, usize)> = None;
    let mut excluded_points = Vec::new();
    let mut excluded_payoffs = Vec::new();
    for (f, row) in values.iter().enumerate() {
        let kept: Vec<usize> = (0..row.len())
            .filter(|&i| {
                let e = &row[i];
                let ok = e.value > 0.0 && e.value >= HARNACK_EXCLUSION_SE * e.stderr;
                if !ok {
                    excluded_points.push((f, i));
                }
                ok
            })
            .collect();
        if kept.is_empty() {
            excluded_payoffs.push(f);
            continue;
        }
        let hi = *kept
            .iter()
            .max_by(|a, b| row[**a].value.total_cmp(&row[**b].value))
            .expect("nonempty");
        let lo = *kept
            .iter()
            .min_by(|a, b| row[**a].value.total_cmp(&row[**b].value))
            .expect("nonempty");
        let r = row[hi].value / row[lo].value;
        if best.is_none_or(|b| r > b.0) {
            best = Some((r, f, hi, lo));
        }
    }
    let Some((max_ratio, f, hi, lo)) = best else {
        return Err(Error::Numerical(
            "every payoff is statistically indistinguishable from zero on the grid".into(),
        ));
    };
    Ok(HarnackResult {
        max_ratio,
        witness: (f, points[hi].clone(), points[lo].clone()),
        excluded_points,
        excluded_payoffs,
        grid: HarnackGrid { points, values },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderResult {
    pub separations: Vec<f64>,
    /// Paired estimates of `u(x) − u(y)` with `|x − y|` the separation.
    pub differences: Vec<Estimate>,
    pub usable: Vec<bool>,
    /// Every paired difference was exactly zero.
    pub constant: bool,
    pub fit: Option<ScalingFit>,
}

/// Fits `|û(z0 + s e₁/2) − û(z0 − s e₁/2)|` against `s`, using the same
/// stream for both starting points of each pair.
pub fn holder_fit(
    sim: &Simulator,
    payoff: &Payoff,
    z0: &[f64],
    radius: f64,
    separations: &[f64],
    mc: &MonteCarlo,
) -> Result<HolderResult> {
    if separations.iter().any(|s| !(*s > 0.0 && *s < radius)) {
        return Err(Error::Precondition(format!(
            "separations must lie in (0, R) so both points stay in B(z0, R/2)"
        )));
    }
    let domain = Domain::ball(z0.to_vec(), radius);
    let mut differences = Vec::new();
    let mut all_zero = true;
    for &s in separations {
        let mut x = z0.to_vec();
        let mut y = z0.to_vec();
        x[0] += 0.5 * s;
        y[0] -= 0.5 * s;
        let diffs = mc.map_paths(|st| {
            let px = run_to_exit(sim, &x, &domain, st, mc.bridge, super::no_integrand)?;
            let py = run_to_exit(sim, &y, &domain, st, mc.bridge, super::no_integrand)?;
            let (fx, fy) = (payoff(&px.stop.state), payoff(&py.stop.state));
            for (v, st) in [(fx, &px.stop.state), (fy, &py.stop.state)] {
                if !v.is_finite() {
                    return Err(Error::Payoff {
                        state: st.clone(),
                        value: v,
                    });
                }
            }
            Ok(fx - fy)
        })?;
        all_zero &= diffs.iter().all(|d| *d == 0.0);
        differences.push(Estimate::from_samples(&diffs, mc.level).with_provenance(mc.provenance()));
    }
    let usable: Vec<bool> = differences
        .iter()
        .map(|e| e.value.abs() > HOLDER_EXCLUSION_SE * e.stderr && e.value != 0.0)
        .collect();
    let mut result = HolderResult {
        separations: separations.to_vec(),
        differences,
        usable,
        constant: all_zero,
        fit: None,
    };
    if all_zero {
        return Ok(result);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = separations
        .iter()
        .zip(&result.differences)
        .zip(&result.usable)
        .filter(|(_, u)| **u)
        .map(|((s, e), _)| (*s, e.value.abs()))
        .unzip();
    if xs.len() < 3 {
        return Err(Error::Fit(format!(
            "only {} of {} separations give differences distinguishable from zero",
            xs.len(),
            separations.len()
        )));
    }
    result.fit = Some(ScalingFit::fit(&xs, &ys)?);
    Ok(result)
}
