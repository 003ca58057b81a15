use serde::{Deserialize, Serialize};

use super::{harmonic_estimate, occupation_exit_distribution, MonteCarlo, Payoff};
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::kernel::{CounterexampleKernel, COUNTEREXAMPLE_M_MIN};
use crate::sim::{Refinement, Simulator};
use crate::stats::{Estimate, RatioEstimate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleRow {
    pub m: u32,
    /// `û_m(x_m)`.
    pub num: Estimate,
    /// `û_m(y_0)`.
    pub den: Estimate,
    /// `None` when the denominator cannot be told apart from zero.
    pub ratio: Option<RatioEstimate>,
    pub diagnostic: Option<String>,
}

fn check(sim: &Simulator, ms: &[u32]) -> Result<()> {
    let k = &sim.op().kernel;
    if k.name() != "counterexample-s7" || k.dim() != 2 {
        return Err(Error::Precondition(format!(
            "counterexample ratio needs the counterexample-s7 kernel in two dimensions (got {})",
            k.name()
        )));
    }
    if let Some(m) = ms.iter().find(|m| **m < COUNTEREXAMPLE_M_MIN) {
        return Err(Error::Input(format!(
            "counterexample index {m} below {COUNTEREXAMPLE_M_MIN}"
        )));
    }
    Ok(())
}

fn row(m: u32, num: Estimate, den: Estimate, level: f64) -> Result<CounterexampleRow> {
    if den.ci_low <= 0.0 || num.value <= 0.0 {
        let which = if den.ci_low <= 0.0 { "denominator" } else { "numerator" };
        return Ok(CounterexampleRow {
            m,
            diagnostic: Some(format!(
                "{which} estimate is indistinguishable from zero ({} ± {})",
                if which == "numerator" { num.value } else { den.value },
                if which == "numerator" { num.stderr } else { den.stderr },
            )),
            num,
            den,
            ratio: None,
        });
    }
    let ratio = RatioEstimate::new(&num, &den, 0.0, level)?;
    Ok(CounterexampleRow {
        m,
        num,
        den,
        ratio: Some(ratio),
        diagnostic: None,
    })
}

/// `u_m(x_m) / u_m(y_0)` with `u_m(x) = P^x(X_τ ∈ E_m)` on the unit disk,
/// each `u_m` computed through the occupation identity. Every estimate uses
/// its own block of streams, so numerator and denominator are independent.
///
/// With `refine`, the time step shrinks near `C_m` (see [`Refinement`]) so
/// that the occupation of `C_m` is resolved even when `Δt ≫ |C_m|`.
pub fn counterexample_ratio(
    sim: &Simulator,
    ms: &[u32],
    refine: bool,
    mc: &MonteCarlo,
) -> Result<Vec<CounterexampleRow>> {
    check(sim, ms)?;
    let disk = Domain::ball(vec![0.0, 0.0], 1.0);
    let y0 = CounterexampleKernel::reference_point();
    ms.iter()
        .enumerate()
        .map(|(j, &m)| {
            let target = CounterexampleKernel::target(m);
            let xm = CounterexampleKernel::source_center(m);
            let j = j as u64;
            let refined;
            let sim = if refine {
                refined = sim.with_refinement(Refinement::new(vec![CounterexampleKernel::source(m)]))?;
                &refined
            } else {
                sim
            };
            let num = occupation_exit_distribution(sim, &xm, &disk, &target, &mc.block(2 * j))?;
            let den = occupation_exit_distribution(sim, &y0, &disk, &target, &mc.block(2 * j + 1))?;
            row(m, num.estimate, den.estimate, mc.level)
        })
        .collect()
}

/// The same ratio from the landing indicator `1(X_τ ∈ E_m)` counted on
/// simulated paths.
pub fn counterexample_ratio_direct(
    sim: &Simulator,
    m: u32,
    mc: &MonteCarlo,
) -> Result<CounterexampleRow> {
    check(sim, &[m])?;
    let disk = Domain::ball(vec![0.0, 0.0], 1.0);
    let target = CounterexampleKernel::target(m);
    let hit = move |x: &[f64]| f64::from(u8::from(target.contains(x)));
    let f: [&Payoff; 1] = [&hit];
    let xm = CounterexampleKernel::source_center(m);
    let num = harmonic_estimate(sim, &f, &xm, &disk, &mc.block(0))?.remove(0);
    let den = harmonic_estimate(sim, &f, &CounterexampleKernel::reference_point(), &disk, &mc.block(1))?
        .remove(0);
    row(m, num.estimate, den.estimate, mc.level)
}
