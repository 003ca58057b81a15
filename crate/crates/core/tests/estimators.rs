use std::sync::Arc;

use jumplab::estimators::*;
use jumplab::kernel::{CounterexampleKernel, ShellUniform, TruncatedStable, ZeroKernel};
use jumplab::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn brownian(d: usize) -> OperatorSpec {
    OperatorSpec::new(DiffusionField::identity(d), DriftField::zero(d), Arc::new(ZeroKernel::new(d))).unwrap()
}

fn with_kernel(d: usize, k: Arc<dyn JumpKernel>) -> OperatorSpec {
    OperatorSpec::new(DiffusionField::identity(d), DriftField::zero(d), k).unwrap()
}

fn sim(op: OperatorSpec, dt: f64, horizon: f64) -> Simulator {
    Simulator::new(op, SimParams::new(dt, 0.05, horizon)).unwrap()
}

fn disk(r: f64) -> Domain {
    Domain::ball(vec![0.0, 0.0], r)
}

fn stable(alpha: f64) -> Arc<dyn JumpKernel> {
    Arc::new(TruncatedStable::new(2, alpha, 1.0))
}

#[test]
fn brownian_exit_mean_from_the_centre_of_a_small_disk() {
    let s = sim(brownian(2), 1e-3, 10.0);
    let m = exit_moment(&s, &[0.0, 0.0], &disk(0.5), 1.0, &MonteCarlo::new(20_000, 3)).unwrap();
    assert!(m.certified);
    assert!((m.estimate.value / 0.125 - 1.0).abs() < 0.03, "{:?}", m.estimate);
}

#[test]
fn frozen_process_is_censored() {
    let op = OperatorSpec::new(DiffusionField::zero(2), DriftField::zero(2), Arc::new(ZeroKernel::new(2))).unwrap();
    let s = sim(op, 1e-3, 1.0);
    let m = exit_moment(&s, &[0.1, 0.0], &disk(1.0), 1.0, &MonteCarlo::new(100, 1)).unwrap();
    assert_eq!(m.censored_fraction, 1.0);
    assert!(!m.certified);
    assert_eq!(m.estimate.value, 1.0);
}

#[test]
fn exit_tail_is_zero_at_time_zero_and_monotone() {
    let s = sim(brownian(2), 1e-4, 1.0);
    let r = 0.5;
    let ts = [0.0, 0.01 * r * r, 0.02 * r * r, 0.04 * r * r, 0.4 * r * r];
    let e = exit_tail(&s, &[0.0, 0.0], &disk(r), &ts, &MonteCarlo::new(5_000, 2)).unwrap();
    assert_eq!(e[0].value, 0.0);
    assert!(e.windows(2).all(|w| w[0].value <= w[1].value));
    assert!(e[4].value > 0.0);
}

#[test]
fn stable_exit_tail_scales_like_t_over_r_squared() {
    let op = with_kernel(2, stable(0.5));
    let mut scaled = Vec::new();
    for r in [0.25, 0.5, 1.0] {
        let t = 0.01 * r * r;
        let s = sim(op.clone(), t / 20.0, 1.0);
        let e = exit_tail(&s, &[0.0, 0.0], &disk(r), &[t], &MonteCarlo::new(100_000, 1)).unwrap();
        assert!(e[0].value > 0.0);
        scaled.push(e[0].value / (t / (r * r)));
    }
    let hi = scaled.iter().cloned().fold(f64::MIN, f64::max);
    let lo = scaled.iter().cloned().fold(f64::MAX, f64::min);
    assert!(hi / lo <= 3.0, "{scaled:?}");
}

#[test]
fn hitting_the_whole_ambient_ball_is_certain() {
    let s = sim(brownian(2), 1e-3, 10.0);
    let h = hit_probability(&s, &[0.2, 0.1], &disk(1.0), &disk(1.0), &MonteCarlo::new(200, 1)).unwrap();
    assert_eq!(h.estimate.value, 1.0);
    assert_eq!(h.volume_ratio, 1.0);
}

#[test]
fn hitting_probability_increases_with_the_target_radius() {
    let s = sim(brownian(2), 1e-3, 10.0);
    let targets: Vec<Domain> = [0.05, 0.1, 0.2].iter().map(|r| Domain::ball(vec![0.5, 0.0], *r)).collect();
    let h = hit_probabilities(&s, &[0.0, 0.0], &targets, &disk(1.0), &MonteCarlo::new(10_000, 4)).unwrap();
    for w in h.windows(2) {
        let gap = w[1].estimate.value - w[0].estimate.value;
        let se = w[0].estimate.stderr.hypot(w[1].estimate.stderr);
        assert!(gap > 3.0 * se, "{:?} {:?}", w[0].estimate, w[1].estimate);
        assert!(w[0].volume_ratio < w[1].volume_ratio);
    }
}

#[test]
fn nearly_full_target_is_hit_with_high_probability() {
    let s = sim(with_kernel(2, stable(1.0)), 1e-3, 10.0);
    let h = hit_probability(&s, &[0.0, 0.0], &disk(0.95), &disk(1.0), &MonteCarlo::new(5_000, 5)).unwrap();
    assert!(h.volume_ratio > 0.9);
    assert!(h.estimate.value >= 0.9, "{:?}", h.estimate);
}

#[test]
fn harmonic_estimate_examples() {
    let s = sim(brownian(2), 1e-3, 20.0);
    let one = |_: &[f64]| 1.0;
    let right = |x: &[f64]| if x[0] > 0.0 { 1.0 } else { 0.0 };
    let coord = |x: &[f64]| x[0];
    let fs: [&Payoff; 3] = [&one, &right, &coord];
    let mc = MonteCarlo::new(20_000, 6);
    let at_origin = harmonic_estimate(&s, &fs, &[0.0, 0.0], &disk(1.0), &mc).unwrap();
    assert_eq!(at_origin[0].estimate.value, 1.0);
    assert_eq!(at_origin[0].estimate.stderr, 0.0);
    assert!(at_origin[1].estimate.contains(0.5), "{:?}", at_origin[1].estimate);
    let x = [0.3, -0.4];
    let off = harmonic_estimate(&s, &fs[2..], &x, &disk(1.0), &mc).unwrap();
    let e = &off[0].estimate;
    assert!((e.value - x[0]).abs() <= 3.0 * e.stderr + 0.03, "{e:?}");
}

#[test]
fn harmonic_estimate_rejects_non_finite_payoffs() {
    let s = sim(brownian(2), 1e-3, 20.0);
    let bad = |x: &[f64]| if x[0] > 0.0 { f64::NAN } else { 0.0 };
    let fs: [&Payoff; 1] = [&bad];
    let err = harmonic_estimate(&s, &fs, &[0.0, 0.0], &disk(1.0), &MonteCarlo::new(100, 1)).unwrap_err();
    assert!(matches!(err, Error::Payoff { .. }), "{err}");
}

#[test]
fn occupation_identity_vanishes_without_jumps() {
    let s = sim(brownian(2), 1e-3, 20.0);
    let target = Domain::ball(vec![2.0, 0.0], 0.3);
    let k = occupation_exit_distribution(&s, &[0.0, 0.0], &disk(1.0), &target, &MonteCarlo::new(500, 1)).unwrap();
    assert_eq!(k.estimate.value, 0.0);
}

#[test]
fn occupation_identity_needs_a_gap() {
    let s = sim(with_kernel(2, Arc::new(ShellUniform::new(2, 1.0, 1.0, 2.0))), 1e-3, 20.0);
    let touching = Domain::ball(vec![1.2, 0.0], 0.2);
    let err = occupation_exit_distribution(&s, &[0.0, 0.0], &disk(1.0), &touching, &MonteCarlo::new(10, 1)).unwrap_err();
    assert!(matches!(err, Error::Geometry(_)), "{err}");
}

#[test]
fn occupation_identity_agrees_with_direct_counting_on_a_shell_patch() {
    let s = sim(with_kernel(2, Arc::new(ShellUniform::new(2, 1.0, 1.0, 2.0))), 1e-3, 20.0);
    let domain = disk(0.5);
    let patch = Domain::ball(vec![1.5, 0.0], 0.3);
    let mc = MonteCarlo::new(10_000, 7);
    let occ = occupation_exit_distribution(&s, &[0.0, 0.0], &domain, &patch, &mc).unwrap();
    let ind = |x: &[f64]| if patch.contains(x) { 1.0 } else { 0.0 };
    let fs: [&Payoff; 1] = [&ind];
    let direct = harmonic_estimate(&s, &fs, &[0.0, 0.0], &domain, &mc.block(1)).unwrap();
    assert!(occ.estimate.value > 0.0);
    assert!(occ.estimate.overlaps(&direct[0].estimate), "{:?} {:?}", occ.estimate, direct[0].estimate);
    assert!(occ.estimate.stderr < direct[0].estimate.stderr);
}

#[test]
fn counterexample_occupation_is_target_area_times_source_occupation() {
    let s = sim(with_kernel(2, Arc::new(CounterexampleKernel::new(9, 1.0))), 1e-3, 20.0);
    let m = 4;
    let source = CounterexampleKernel::source(m);
    let target = CounterexampleKernel::target(m);
    let mc = MonteCarlo::new(2_000, 8);
    let x = CounterexampleKernel::source_center(m);
    let occ = occupation_exit_distribution(&s, &x, &disk(1.0), &target, &mc).unwrap();
    let ind = |y: &[f64]| if source.contains(y) { 1.0 } else { 0.0 };
    let time = krylov_functional(&s, &ind, &x, &disk(1.0), &mc).unwrap();
    assert!(time.estimate.value > 0.0);
    let expected = target.volume() * time.estimate.value;
    assert!((occ.estimate.value - expected).abs() <= 1e-12 * expected, "{} vs {expected}", occ.estimate.value);
}

#[test]
fn krylov_functional_trivial_cases() {
    let s = sim(brownian(2), 1e-3, 20.0);
    let mc = MonteCarlo::new(2_000, 9);
    let zero = krylov_functional(&s, &|_: &[f64]| 0.0, &[0.0, 0.0], &disk(1.0), &mc).unwrap();
    assert_eq!(zero.estimate.value, 0.0);
    let one = krylov_functional(&s, &|_: &[f64]| 1.0, &[0.2, 0.0], &disk(1.0), &mc).unwrap();
    let tau = exit_moment(&s, &[0.2, 0.0], &disk(1.0), 1.0, &mc).unwrap();
    assert_eq!(one.estimate.value, tau.estimate.value);
    assert_eq!(one.estimate.stderr, tau.estimate.stderr);
}

/// `∫_{B(0,ρ)} G(0, y) dy` for `½Δ` on the unit disk, `G(0, y) = ln(1/|y|)/π`,
/// by Gauss–Legendre quadrature in the radius.
fn green_oracle(rho: f64) -> f64 {
    const NODES: [(f64, f64); 5] = [
        (0.0, 0.568_888_888_888_888_9),
        (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    let panels = 2000;
    let h = rho / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * h;
        for (u, w) in NODES {
            let r = mid + 0.5 * h * u;
            total += 0.5 * h * w * 2.0 * r * (1.0 / r).ln();
        }
    }
    total
}

#[test]
fn krylov_functional_matches_the_green_function_of_the_disk() {
    let truth = green_oracle(0.1);
    assert!((truth - 0.028_026).abs() < 1e-5);
    let s = sim(brownian(2), 1e-4, 20.0);
    let ball = Domain::ball(vec![0.0, 0.0], 0.1);
    let f = |y: &[f64]| if ball.contains(y) { 1.0 } else { 0.0 };
    let k = krylov_functional(&s, &f, &[0.0, 0.0], &disk(1.0), &MonteCarlo::new(5_000, 10)).unwrap();
    assert!((k.estimate.value / truth - 1.0).abs() < 0.05, "{:?} vs {truth}", k.estimate);
}

#[test]
fn harnack_ratio_of_a_constant_is_one() {
    let s = sim(brownian(2), 1e-3, 20.0);
    let one = |_: &[f64]| 1.0;
    let fs: [&Payoff; 1] = [&one];
    let r = harnack_ratio(&s, &fs, &[0.0, 0.0], 1.0, 3, &MonteCarlo::new(200, 1)).unwrap();
    assert_eq!(r.max_ratio, 1.0);
    assert!(r.excluded_points.is_empty());
    assert_eq!(r.grid.points.len(), 9);
}

#[test]
fn harnack_ratio_ignores_scaling_and_order() {
    let s = sim(brownian(2), 1e-3, 20.0);
    let f = |x: &[f64]| 1.0 + x[0];
    let g = |x: &[f64]| 2.0 - x[1];
    let f2 = |x: &[f64]| 2.0 * (1.0 + x[0]);
    let g2 = |x: &[f64]| 2.0 * (2.0 - x[1]);
    let mc = MonteCarlo::new(2_000, 11);
    let z0 = [0.0, 0.0];
    let base = harnack_ratio(&s, &[&f, &g], &z0, 1.0, 3, &mc).unwrap();
    let scaled = harnack_ratio(&s, &[&f2, &g2], &z0, 1.0, 3, &mc).unwrap();
    let swapped = harnack_ratio(&s, &[&g, &f], &z0, 1.0, 3, &mc).unwrap();
    assert!(base.max_ratio > 1.0);
    assert_eq!(base.max_ratio, scaled.max_ratio);
    assert_eq!(base.max_ratio, swapped.max_ratio);
    assert_eq!(base.witness.1, swapped.witness.1);
}

#[test]
fn harnack_ratio_excludes_payoffs_that_are_never_seen() {
    let s = sim(brownian(2), 1e-3, 20.0);
    let far = |x: &[f64]| if x[0] > 5.0 { 1.0 } else { 0.0 };
    let one = |_: &[f64]| 1.0;
    let r = harnack_ratio(&s, &[&far, &one], &[0.0, 0.0], 1.0, 3, &MonteCarlo::new(200, 1)).unwrap();
    assert_eq!(r.excluded_payoffs, vec![0]);
    assert_eq!(r.max_ratio, 1.0);
    let only_far: [&Payoff; 1] = [&far];
    assert!(harnack_ratio(&s, &only_far, &[0.0, 0.0], 1.0, 3, &MonteCarlo::new(200, 1)).is_err());
}

#[test]
fn holder_fit_flags_constant_payoffs() {
    let s = sim(brownian(2), 1e-3, 20.0);
    let r = holder_fit(&s, &|_: &[f64]| 1.0, &[0.0, 0.0], 1.0, &[0.1, 0.2, 0.4], &MonteCarlo::new(200, 1)).unwrap();
    assert!(r.constant);
    assert!(r.fit.is_none());
}

#[test]
fn holder_fit_of_a_linear_brownian_payoff_is_linear() {
    let s = sim(brownian(2), 1e-3, 20.0);
    let seps = [0.05, 0.1, 0.2, 0.4, 0.8];
    let r = holder_fit(&s, &|x: &[f64]| x[0], &[0.0, 0.0], 1.0, &seps, &MonteCarlo::new(5_000, 12)).unwrap();
    let fit = r.fit.unwrap();
    assert!((0.9..=1.1).contains(&fit.exponent), "{fit:?}");
}

#[test]
fn holder_fit_of_a_stable_indicator_lies_in_the_unit_interval() {
    let s = sim(with_kernel(2, stable(1.0)), 1e-3, 20.0);
    let seps = [0.1, 0.2, 0.4, 0.8];
    let f = |x: &[f64]| if x[0] > 0.0 { 1.0 } else { 0.0 };
    let r = holder_fit(&s, &f, &[0.0, 0.0], 1.0, &seps, &MonteCarlo::new(10_000, 13)).unwrap();
    let fit = r.fit.unwrap();
    assert!(fit.exponent > 0.0 && fit.exponent <= 1.1, "{fit:?}");
    assert!(fit.prefactor > 0.0);
}

#[test]
fn holder_fit_needs_three_usable_separations() {
    let s = sim(brownian(2), 1e-3, 20.0);
    let r = holder_fit(&s, &|x: &[f64]| x[0], &[0.0, 0.0], 1.0, &[0.1, 0.2], &MonteCarlo::new(500, 1));
    assert!(r.is_err());
    assert!(holder_fit(&s, &|x: &[f64]| x[0], &[0.0, 0.0], 1.0, &[1.5], &MonteCarlo::new(10, 1)).is_err());
}

#[test]
fn huge_tubes_are_almost_surely_kept() {
    let s = sim(with_kernel(2, stable(1.0)), 1e-3, 1.0);
    let phi = AnchorPath::constant(vec![0.0, 0.0]);
    let e = tube_probability(&s, &phi, &[1e3], 0.1, &MonteCarlo::new(2_000, 1)).unwrap();
    assert!(e[0].value >= 0.999);
    assert!(tube_probability(&s, &phi, &[0.0], 0.1, &MonteCarlo::new(10, 1)).is_err());
}

#[test]
fn tube_probability_is_monotone_in_the_radius() {
    let s = sim(with_kernel(2, stable(1.0)), 1e-3, 1.0);
    let phi = AnchorPath::segment(vec![0.0, 0.0], vec![0.2, 0.0], 0.1).unwrap();
    let e = tube_probability(&s, &phi, &[0.2, 0.3, 0.4], 0.1, &MonteCarlo::new(10_000, 14)).unwrap();
    assert!(e.windows(2).all(|w| w[0].value <= w[1].value), "{e:?}");
}

/// Probability that planar Brownian motion from the centre stays in the
/// disk of radius `eps` up to time `t`, from the Bessel eigen-expansion.
fn confinement_series(eps: f64, t: f64) -> f64 {
    const ZEROS: [f64; 6] = [2.404_825_557_7, 5.520_078_110_3, 8.653_727_912_9, 11.791_534_439, 14.930_917_708, 18.071_063_967];
    const J1: [f64; 6] = [0.519_147_497_7, -0.340_264_805_2, 0.271_452_299_2, -0.232_459_829_0, 0.207_092_556_3, -0.188_748_606_0];
    ZEROS
        .iter()
        .zip(J1)
        .map(|(j, j1)| 2.0 / (j * j1) * (-j * j * t / (2.0 * eps * eps)).exp())
        .sum()
}

/// Euler confinement test on a grid ten times finer than `dt`, with its
/// own Brownian-bridge crossing check against the tangent line between
/// grid points.
fn fine_grid_confinement(eps: f64, t0: f64, dt: f64, n: u64) -> Estimate {
    let h = dt / 10.0;
    let steps = (t0 / h).round() as usize;
    let mut kept = 0;
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + i);
        let (mut x, mut y) = (0.0f64, 0.0f64);
        let mut inside = true;
        for _ in 0..steps {
            let d0 = eps - x.hypot(y);
            let gx: f64 = StandardNormal.sample(&mut rng);
            let gy: f64 = StandardNormal.sample(&mut rng);
            x += h.sqrt() * gx;
            y += h.sqrt() * gy;
            let d1 = eps - x.hypot(y);
            let u: f64 = rng.random();
            if d1 <= 0.0 || u < (-2.0 * d0 * d1 / h).exp() {
                inside = false;
                break;
            }
        }
        kept += u64::from(inside);
    }
    jumplab::stats::Estimate::from_binomial(kept, n, 0.99)
}

#[test]
fn brownian_confinement_matches_fine_grid_and_series_oracles() {
    let (eps, t0, dt) = (0.25, 0.1, 1e-3);
    let truth = confinement_series(eps, t0);
    assert!((truth - 0.01567).abs() < 2e-4, "{truth}");
    let s = sim(brownian(2), dt, 1.0);
    let phi = AnchorPath::constant(vec![0.0, 0.0]);
    let e = tube_probability(&s, &phi, &[eps], t0, &MonteCarlo::new(20_000, 15)).unwrap();
    assert!(e[0].ci_low > 0.0);
    let oracle = fine_grid_confinement(eps, t0, dt, 20_000);
    assert!(e[0].overlaps(&oracle), "{:?} vs {oracle:?}", e[0]);
    assert!(e[0].contains(truth), "{:?} vs {truth}", e[0]);
}

#[test]
fn counterexample_geometry() {
    for m in 4..10 {
        let r = 2f64.powi(-(m as i32) - 4);
        assert_eq!(CounterexampleKernel::source_center(m), [-0.125, 2f64.powi(-(m as i32))]);
        assert_eq!(CounterexampleKernel::target_center(m), [16.0, 2f64.powi(-(m as i32))]);
        assert_eq!(CounterexampleKernel::radius(m), r);
    }
    assert_eq!(CounterexampleKernel::reference_point(), [0.125, 0.0]);
}

#[test]
fn counterexample_ratio_at_m4_agrees_with_direct_counting() {
    let s = sim(with_kernel(2, Arc::new(CounterexampleKernel::new(9, 2_097_152.0))), 1e-3, 20.0);
    let mc = MonteCarlo::new(20_000, 16);
    let occ = counterexample_ratio(&s, &[4], true, &mc).unwrap();
    let direct = counterexample_ratio_direct(&s, 4, &mc).unwrap();
    assert!(occ[0].num.overlaps(&direct.num), "{:?} vs {:?}", occ[0].num, direct.num);
    assert!(occ[0].den.overlaps(&direct.den), "{:?} vs {:?}", occ[0].den, direct.den);
    let (a, b) = (occ[0].ratio.as_ref().unwrap(), direct.ratio.as_ref().unwrap());
    assert!(a.ci_low <= b.ci_high && b.ci_low <= a.ci_high, "{a:?} vs {b:?}");
}

#[test]
fn counterexample_ratio_rejects_other_operators() {
    let s = sim(brownian(2), 1e-3, 20.0);
    assert!(counterexample_ratio(&s, &[4], false, &MonteCarlo::new(10, 1)).is_err());
    let s = sim(with_kernel(2, Arc::new(CounterexampleKernel::new(9, 1.0))), 1e-3, 20.0);
    assert!(counterexample_ratio(&s, &[3], false, &MonteCarlo::new(10, 1)).is_err());
}

#[test]
fn levy_system_martingale_for_a_shell_kernel() {
    let s = sim(with_kernel(2, Arc::new(ShellUniform::new(2, 1.0, 1.0, 2.0))), 1e-3, 1.0);
    let a = disk(0.5);
    let b = Domain::ball(vec![1.5, 0.0], 0.4);
    let r = levy_system_check(&s, &[0.0, 0.0], &a, &b, 1.0, &MonteCarlo::new(5_000, 17)).unwrap();
    assert!(r.mean_count > 0.0);
    assert!(r.z.abs() < 3.0, "{r:?}");
}
