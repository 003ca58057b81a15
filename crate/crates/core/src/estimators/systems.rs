use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use super::MonteCarlo;
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::kernel::quadrature::{set_intensity, QuadratureSpec};
use crate::sim::{JumpTag, PathObserver, Simulator, Step};
use crate::stats::{ks_two_sample, mean_var, Estimate, KsResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevyCheck {
    /// Per-path `#{s ≤ t0: X_{s−} ∈ A, X_s ∈ B} − ∫_0^t0 1_A(X_s) n(X_s, B − X_s) ds`.
    pub difference: Estimate,
    pub z: f64,
    pub mean_count: f64,
    pub mean_compensator: f64,
}

struct LevyObserver<'a> {
    a: &'a Domain,
    b: &'a Domain,
    sim: &'a Simulator,
    spec: &'a QuadratureSpec,
    count: u64,
    comp: f64,
    err: Option<Error>,
}

impl PathObserver for LevyObserver<'_> {
    fn step(&mut self, s: &Step<'_>) -> ControlFlow<()> {
        if self.a.contains(s.x0) {
            match set_intensity(self.sim.op().kernel.as_ref(), s.x0, self.b, self.spec) {
                Ok(v) => self.comp += v * (s.t1 - s.t0),
                Err(e) => {
                    self.err = Some(e);
                    return ControlFlow::Break(());
                }
            }
        }
        if s.jump.is_some() && self.a.contains(s.pre) && self.b.contains(s.post) {
            self.count += 1;
        }
        ControlFlow::Continue(())
    }
}

/// Lower bound on the distance between two domains.
fn gap(a: &Domain, b: &Domain) -> f64 {
    match (a, b) {
        (Domain::Ball { center, radius }, Domain::Ball { center: c, radius: r }) => {
            crate::linalg::dist(center, c) - radius - r
        }
        (Domain::Ball { center, radius }, cube @ Domain::Cube { .. })
        | (cube @ Domain::Cube { .. }, Domain::Ball { center, radius }) => {
            -cube.boundary_distance(center) - radius
        }
        (Domain::Cube { center, side }, Domain::Cube { center: c, side: s }) => center
            .iter()
            .zip(c)
            .map(|(x, y)| (x - y).abs() - 0.5 * (side + s))
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Compares jump counts from `A` into `B` over `[0, t0]` with the
/// compensator integral. The mean difference is zero for the true process.
pub fn levy_system_check(
    sim: &Simulator,
    x0: &[f64],
    a: &Domain,
    b: &Domain,
    t0: f64,
    mc: &MonteCarlo,
) -> Result<LevyCheck> {
    a.validate()?;
    b.validate()?;
    let g = gap(a, b);
    if g < sim.params().delta {
        return Err(Error::Precondition(format!(
            "sets must be at least δ = {} apart (gap {g})",
            sim.params().delta
        )));
    }
    let short = sim.with_horizon(t0)?;
    let spec = QuadratureSpec::coarse();
    let rows = mc.map_paths(|s| {
        let mut obs = LevyObserver {
            a,
            b,
            sim: &short,
            spec: &spec,
            count: 0,
            comp: 0.0,
            err: None,
        };
        short.run(x0, s, &mut obs)?;
        if let Some(e) = obs.err {
            return Err(e);
        }
        Ok((obs.count as f64, obs.comp))
    })?;
    let diffs: Vec<f64> = rows.iter().map(|r| r.0 - r.1).collect();
    let est = Estimate::from_samples(&diffs, mc.level).with_provenance(mc.provenance());
    let counts: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let comps: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok(LevyCheck {
        z: if est.stderr > 0.0 { est.value / est.stderr } else { 0.0 },
        difference: est,
        mean_count: mean_var(&counts).0,
        mean_compensator: mean_var(&comps).0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeyerEquivalence {
    /// Two-sample test of `X_{t0}` per coordinate.
    pub ks: Vec<KsResult>,
    pub direct_jumps: f64,
    pub overlay_thinned_jumps: f64,
    pub overlay_meyer_jumps: f64,
}

struct Terminal {
    last: Vec<f64>,
    thinned: u64,
    meyer: u64,
}

impl PathObserver for Terminal {
    fn step(&mut self, s: &Step<'_>) -> ControlFlow<()> {
        self.last.copy_from_slice(s.post);
        match s.jump {
            Some(JumpTag::Thinned) => self.thinned += 1,
            Some(JumpTag::Meyer) => self.meyer += 1,
            None => {}
        }
        ControlFlow::Continue(())
    }
}

fn terminal(sim: &Simulator, x0: &[f64], mc: &MonteCarlo) -> Result<Vec<Terminal>> {
    mc.map_paths(|s| {
        let mut t = Terminal {
            last: x0.to_vec(),
            thinned: 0,
            meyer: 0,
        };
        sim.run(x0, s, &mut t)?;
        Ok(t)
    })
}

/// Law of `X_{t0}` under direct simulation versus Meyer's overlay, each on
/// its own block of streams.
pub fn meyer_equivalence(
    direct: &Simulator,
    overlay: &Simulator,
    x0: &[f64],
    mc: &MonteCarlo,
) -> Result<MeyerEquivalence> {
    let a = terminal(direct, x0, &mc.block(0))?;
    let b = terminal(overlay, x0, &mc.block(1))?;
    let d = x0.len();
    let ks = (0..d)
        .map(|i| {
            let xa: Vec<f64> = a.iter().map(|t| t.last[i]).collect();
            let xb: Vec<f64> = b.iter().map(|t| t.last[i]).collect();
            ks_two_sample(&xa, &xb)
        })
        .collect();
    let mean = |v: &[Terminal], f: fn(&Terminal) -> u64| {
        v.iter().map(|t| f(t) as f64).sum::<f64>() / v.len() as f64
    };
    Ok(MeyerEquivalence {
        ks,
        direct_jumps: mean(&a, |t| t.thinned + t.meyer),
        overlay_thinned_jumps: mean(&b, |t| t.thinned),
        overlay_meyer_jumps: mean(&b, |t| t.meyer),
    })
}
