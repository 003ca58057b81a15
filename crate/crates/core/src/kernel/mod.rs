//! Jump kernels `n(x, h)` with dominating state-free envelopes.
//!
//! Every kernel carries an envelope `n̄(h) ≥ n(x, h)` whose tail mass is
//! finite away from the origin; the simulator thins proposals drawn from the
//! envelope. Quadrature of the integrability functional and of the
//! compensator lives in [`quadrature`], the comparability-ratio estimator in
//! [`comparability`].

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::params::Params;
use crate::rng::SimRng;

mod builtin;
pub mod comparability;
pub mod quadrature;

pub use builtin::{
    CounterexampleKernel, COUNTEREXAMPLE_M_MIN, ShellUniform, StateModulatedStable, TruncatedStable, ZeroKernel,
};
pub use comparability::{comparability_ratio, ComparabilityOptions, ComparabilityResult};
pub use quadrature::{
    compensator_drift, kernel_mass_bound, set_intensity, MassEstimate, QuadratureSpec,
};

/// Where `h ↦ n(x, h)` can be nonzero, used to place quadrature nodes.
#[derive(Clone, Debug, PartialEq)]
pub enum Support {
    /// Rotation-invariant region `inner ≤ |h| ≤ outer` with extra radial
    /// breakpoints at which the density may jump.
    Radial {
        inner: f64,
        outer: f64,
        breaks: Vec<f64>,
    },
    /// Union of disjoint balls `(center, radius)` in displacement space.
    Balls(Vec<(Vec<f64>, f64)>),
}

pub trait JumpKernel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Density of jumps from `x` by `h`.
    fn density(&self, x: &[f64], h: &[f64]) -> f64;

    /// State-free dominating density.
    fn envelope(&self, h: &[f64]) -> f64;

    /// `∫_{|h| ≥ δ} n̄(h) dh`.
    fn tail_mass(&self, delta: f64) -> f64;

    /// Draws `h ∝ n̄` restricted to `|h| ≥ δ`. Only called when
    /// `tail_mass(δ) > 0`.
    fn sample_envelope(&self, delta: f64, rng: &mut SimRng, out: &mut [f64]);

    /// Whether `∫_{δ ≤ |h| ≤ 1} h n(x, h) dh` vanishes identically.
    fn symmetric_small_jumps(&self) -> bool;

    /// Whether `n(x, h)` does not depend on `x`.
    fn state_independent(&self) -> bool;

    fn support(&self, x: &[f64]) -> Support;

    /// Closed form of `∫_{|h| ≥ δ} n(x, h) dh` when available.
    fn mass_above(&self, _x: &[f64], _delta: f64) -> Option<f64> {
        None
    }

    /// Closed form of `∫_set n(x, v − x) dv` when available.
    fn set_intensity(&self, _x: &[f64], _set: &Domain) -> Option<f64> {
        None
    }
}

pub const KERNELS: &[&str] = &[
    "zero",
    "shell-uniform",
    "truncated-stable",
    "state-modulated-stable",
    "counterexample-s7",
];

/// Builds a built-in kernel. A `d` entry in `params`, when present, must
/// agree with `dim`.
pub fn make_kernel(name: &str, params: &Params, dim: usize) -> Result<Arc<dyn JumpKernel>> {
    make_kernel_at(name, params, dim, "operator.kernel.params")
}

pub fn make_kernel_at(
    name: &str,
    params: &Params,
    dim: usize,
    path: &str,
) -> Result<Arc<dyn JumpKernel>> {
    if let Some(d) = params.opt_f64("d", path)? {
        if d != dim as f64 {
            return Err(Error::config(
                format!("{path}.d"),
                format!("kernel dimension {d} does not match operator dimension {dim}"),
            ));
        }
    }
    if dim == 0 {
        return Err(Error::config(path, "dimension must be positive"));
    }
    let positive = |key: &str, v: f64| -> Result<f64> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::config(format!("{path}.{key}"), "must be positive and finite"))
        }
    };
    let alpha_of = |p: &Params| -> Result<f64> {
        let a = p.f64_or("alpha", 1.0, path)?;
        if a > 0.0 && a < 2.0 {
            Ok(a)
        } else {
            Err(Error::config(format!("{path}.alpha"), "must lie in (0, 2)"))
        }
    };
    Ok(match name {
        "zero" => {
            params.check_known(&["d"], path)?;
            Arc::new(ZeroKernel::new(dim))
        }
        "shell-uniform" => {
            params.check_known(&["d", "c", "rate", "inner", "outer"], path)?;
            let inner = params.f64_or("inner", 1.0, path)?;
            let outer = params.f64_or("outer", 2.0, path)?;
            if !(inner >= 0.0 && outer > inner && outer.is_finite()) {
                return Err(Error::config(path, "need 0 ≤ inner < outer < ∞"));
            }
            let c = match (params.opt_f64("c", path)?, params.opt_f64("rate", path)?) {
                (Some(_), Some(_)) => {
                    return Err(Error::config(path, "give either c or rate, not both"))
                }
                (Some(c), None) => positive("c", c)?,
                (None, Some(rate)) => {
                    positive("rate", rate)? / builtin::shell_volume(dim, inner, outer)
                }
                (None, None) => 1.0,
            };
            Arc::new(ShellUniform::new(dim, c, inner, outer))
        }
        "truncated-stable" => {
            params.check_known(&["d", "alpha", "c"], path)?;
            let alpha = alpha_of(params)?;
            let c = positive("c", params.f64_or("c", 1.0, path)?)?;
            Arc::new(TruncatedStable::new(dim, alpha, c))
        }
        "state-modulated-stable" => {
            params.check_known(
                &["d", "alpha", "c_low", "c_high", "omega", "c_max"],
                path,
            )?;
            let alpha = alpha_of(params)?;
            let c_low = positive("c_low", params.f64_or("c_low", 0.5, path)?)?;
            let c_high = positive("c_high", params.f64_or("c_high", 1.0, path)?)?;
            if c_high < c_low {
                return Err(Error::config(path, "need c_low ≤ c_high"));
            }
            let c_max = positive("c_max", params.f64_or("c_max", c_high, path)?)?;
            if c_max < c_high {
                return Err(Error::config(
                    format!("{path}.c_max"),
                    format!("envelope constant {c_max} does not dominate c_high = {c_high}"),
                ));
            }
            let omega = params.f64_or("omega", 1.0, path)?;
            Arc::new(StateModulatedStable::new(
                dim, alpha, c_low, c_high, omega, c_max,
            ))
        }
        "counterexample-s7" => {
            params.check_known(&["d", "m_max", "intensity"], path)?;
            if dim != 2 {
                return Err(Error::config(path, "counterexample-s7 requires dim = 2"));
            }
            let m_max = params.usize_or("m_max", 9, path)?;
            if m_max < 4 || m_max > 40 {
                return Err(Error::config(format!("{path}.m_max"), "must lie in [4, 40]"));
            }
            let intensity = positive("intensity", params.f64_or("intensity", 1.0, path)?)?;
            Arc::new(CounterexampleKernel::new(m_max as u32, intensity))
        }
        _ => {
            return Err(Error::config(
                format!("{}.name", path.trim_end_matches(".params")),
                "unknown kernel",
            )
            .with_hint(format!("got '{name}'; built-ins: {}", KERNELS.join(", "))))
        }
    })
}

/// Surface area of the unit sphere in `ℝᵈ`.
pub fn unit_sphere_area(dim: usize) -> f64 {
    use std::f64::consts::PI;
    let d = dim as f64;
    2.0 * PI.powf(d / 2.0) / statrs::function::gamma::gamma(d / 2.0)
}

/// Volume of the unit ball in `ℝᵈ`.
pub fn unit_ball_volume(dim: usize) -> f64 {
    unit_sphere_area(dim) / dim as f64
}

/// Uniform direction on the unit sphere.
pub(crate) fn random_direction(rng: &mut SimRng, out: &mut [f64]) {
    use rand::Rng;
    use rand_distr::StandardNormal;
    if out.len() == 1 {
        out[0] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        return;
    }
    loop {
        let mut s = 0.0;
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
            s += *v * *v;
        }
        if s > 1e-300 {
            let n = s.sqrt();
            out.iter_mut().for_each(|v| *v /= n);
            return;
        }
    }
}
