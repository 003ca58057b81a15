//! Sampled comparability ratio `sup n(x, z − x) / n(y, z − y)`.

use rand::Rng;

use super::{random_direction, JumpKernel};
use crate::error::{Error, Result};
use crate::linalg::dist;
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparabilityOptions {
    /// Outer radius of the annulus from which `z` is drawn.
    pub r_out: f64,
    /// Fraction of triples whose `z` is drawn as `x + h` with `h` from the
    /// kernel envelope; the rest draw `z` uniformly from the annulus.
    pub guided_fraction: f64,
}

impl Default for ComparabilityOptions {
    fn default() -> Self {
        Self {
            r_out: 2.0,
            guided_fraction: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparabilityResult {
    /// Largest sampled ratio; `f64::INFINITY` when `infinite` is set.
    pub ratio: f64,
    /// Some triple had a positive numerator over a zero denominator.
    pub infinite: bool,
    /// `(x, y, z)` attaining `ratio`.
    pub witness: (Vec<f64>, Vec<f64>, Vec<f64>),
    /// Triples with a nonzero numerator or denominator.
    pub informative: usize,
}

fn uniform_in_ball(center: &[f64], radius: f64, rng: &mut SimRng, out: &mut [f64]) {
    let d = out.len() as f64;
    random_direction(rng, out);
    let s = radius * rng.random::<f64>().powf(1.0 / d);
    for (o, c) in out.iter_mut().zip(center) {
        *o = c + s * *o;
    }
}

fn uniform_in_annulus(center: &[f64], inner: f64, outer: f64, rng: &mut SimRng, out: &mut [f64]) {
    let d = out.len() as i32;
    random_direction(rng, out);
    let (lo, hi) = (inner.powi(d), outer.powi(d));
    let s = (lo + rng.random::<f64>() * (hi - lo)).powf(1.0 / d as f64);
    for (o, c) in out.iter_mut().zip(center) {
        *o = c + s * *o;
    }
}

/// Draws `x, y ∈ B(x0, r/2)` and `z ∈ B(x0, r_out) \ B(x0, r)` and returns
/// the largest ratio `n(x, z − x) / n(y, z − y)` over triples where either
/// value is nonzero. A sampled maximum is a lower bound on the true
/// constant `k_r`.
pub fn comparability_ratio(
    kernel: &dyn JumpKernel,
    x0: &[f64],
    r: f64,
    samples: usize,
    options: &ComparabilityOptions,
    rng: &mut SimRng,
) -> Result<ComparabilityResult> {
    let d = kernel.dim();
    if x0.len() != d {
        return Err(Error::Dimension {
            expected: d,
            found: x0.len(),
        });
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::Precondition(format!("radius r = {r} outside (0, 1]")));
    }
    if !(options.r_out > r) {
        return Err(Error::Precondition(format!(
            "annulus outer radius {} must exceed r = {r}",
            options.r_out
        )));
    }
    if samples == 0 {
        return Err(Error::Precondition("need at least one sample".into()));
    }
    let guide_delta = 0.5 * r;
    let can_guide = kernel.tail_mass(guide_delta) > 0.0;
    let (mut x, mut y, mut z, mut h) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut best = ComparabilityResult {
        ratio: 0.0,
        infinite: false,
        witness: (vec![], vec![], vec![]),
        informative: 0,
    };
    for _ in 0..samples {
        uniform_in_ball(x0, 0.5 * r, rng, &mut x);
        uniform_in_ball(x0, 0.5 * r, rng, &mut y);
        let guided = can_guide && rng.random::<f64>() < options.guided_fraction;
        if guided {
            kernel.sample_envelope(guide_delta, rng, &mut h);
            for i in 0..d {
                z[i] = x[i] + h[i];
            }
            let s = dist(&z, x0);
            if s < r || s >= options.r_out {
                continue;
            }
        } else {
            uniform_in_annulus(x0, r, options.r_out, rng, &mut z);
        }
        for i in 0..d {
            h[i] = z[i] - x[i];
        }
        let num = kernel.density(&x, &h);
        for i in 0..d {
            h[i] = z[i] - y[i];
        }
        let den = kernel.density(&y, &h);
        if num == 0.0 && den == 0.0 {
            continue;
        }
        best.informative += 1;
        let ratio = if den == 0.0 { f64::INFINITY } else { num / den };
        if ratio > best.ratio || best.witness.0.is_empty() {
            best.ratio = ratio;
            best.witness = (x.clone(), y.clone(), z.clone());
            if ratio.is_infinite() {
                best.infinite = true;
            }
        }
    }
    if best.informative == 0 {
        return Err(Error::Indeterminate);
    }
    Ok(best)
}
