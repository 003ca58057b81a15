use std::sync::Arc;

use jumplab::estimators::*;
use jumplab::geometry::{first_exit, first_hit_before_exit};
use jumplab::kernel::comparability::{comparability_ratio, ComparabilityOptions};
use jumplab::kernel::quadrature::{kernel_mass_bound, QuadratureSpec};
use jumplab::kernel::{CounterexampleKernel, ShellUniform, StateModulatedStable, TruncatedStable, ZeroKernel};
use jumplab::linalg;
use jumplab::operator::{cholesky_factor, validate_ellipticity};
use jumplab::scenario::{parse_config, ScenarioConfig};
use jumplab::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn brownian(d: usize) -> OperatorSpec {
    OperatorSpec::new(DiffusionField::identity(d), DriftField::zero(d), Arc::new(ZeroKernel::new(d))).unwrap()
}

fn with_kernel(k: Arc<dyn JumpKernel>) -> OperatorSpec {
    let d = k.dim();
    OperatorSpec::new(DiffusionField::identity(d), DriftField::zero(d), k).unwrap()
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, d)
}

/// Random SPD matrix `Q diag(λ) Qᵀ` with eigenvalues in `[l, 1/l]`.
fn spd(d: usize, l: f64) -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(-1.0f64..1.0, d * d), prop::collection::vec(l..=1.0 / l, d)).prop_map(move |(m, lambda)| {
        let mut q = m;
        for j in 0..d {
            for k in 0..j {
                let dot: f64 = (0..d).map(|i| q[i * d + j] * q[i * d + k]).sum();
                for i in 0..d {
                    q[i * d + j] -= dot * q[i * d + k];
                }
            }
            let n = (0..d).map(|i| q[i * d + j].powi(2)).sum::<f64>().sqrt().max(1e-300);
            for i in 0..d {
                q[i * d + j] /= n;
            }
        }
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] = (0..d).map(|k| q[i * d + k] * lambda[k] * q[j * d + k]).sum();
            }
        }
        for i in 0..d {
            for j in 0..i {
                let s = 0.5 * (a[i * d + j] + a[j * d + i]);
                a[i * d + j] = s;
                a[j * d + i] = s;
            }
        }
        a
    })
}

fn well_conditioned(a: &[f64], d: usize) -> bool {
    // Gram–Schmidt can lose a column when the random matrix is singular.
    let mut y = vec![0.0; d];
    (0..d).all(|i| {
        y.iter_mut().for_each(|v| *v = 0.0);
        y[i] = 1.0;
        linalg::quadratic_form(a, &y) > 0.0
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ellipticity_report_ignores_direction_sign(
        d in 1usize..4,
        seed in any::<u64>(),
        lambda in 0.05f64..0.9,
    ) {
        let mut rng = SimRng::seed_from_u64(seed);
        let field = if d == 2 {
            DiffusionField::rotating_anisotropy(1.0 / lambda, lambda, 1.3)
        } else {
            DiffusionField::diagonal(&vec![lambda.sqrt(); d], lambda)
        };
        let points: Vec<Vec<f64>> = (0..8).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let dirs: Vec<Vec<f64>> = (0..8).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0) + 1e-3).collect()).collect();
        let flipped: Vec<Vec<f64>> = dirs.iter().map(|y| y.iter().map(|v| -v).collect()).collect();
        let a = validate_ellipticity(&field, &points, &dirs).unwrap();
        let b = validate_ellipticity(&field, &points, &flipped).unwrap();
        prop_assert_eq!(a.passed, b.passed);
        prop_assert_eq!(a.worst, b.worst);
        prop_assert_eq!(a.witness_point, b.witness_point);
    }

    #[test]
    fn cholesky_reconstructs_random_spd_matrices(
        (d, a) in (1usize..6).prop_flat_map(|d| (Just(d), spd(d, 0.05))),
    ) {
        prop_assume!(well_conditioned(&a, d));
        let s = cholesky_factor(&a, d).unwrap();
        let g = linalg::lower_gram(&s, d);
        let diff: Vec<f64> = g.iter().zip(&a).map(|(x, y)| x - y).collect();
        prop_assert!(linalg::frobenius(&diff) <= 1e-10 * linalg::frobenius(&a));
    }

    #[test]
    fn factor_spectrum_stays_in_the_ellipticity_band(
        a in spd(2, 0.1),
        y in point(2),
    ) {
        prop_assume!(well_conditioned(&a, 2));
        let l = 0.1;
        let field = DiffusionField::constant(2, a.clone(), l);
        let report = validate_ellipticity(&field, &[vec![0.0, 0.0]], &[y.clone()]);
        prop_assume!(report.map(|r| r.passed).unwrap_or(false));
        let s = cholesky_factor(&a, 2).unwrap();
        let g = linalg::lower_gram(&s, 2);
        let (tr, det) = (g[0] + g[3], g[0] * g[3] - g[1] * g[2]);
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        let (lo, hi) = (0.5 * tr - disc, 0.5 * tr + disc);
        prop_assert!(lo >= l * (1.0 - 1e-9) && hi <= (1.0 + 1e-9) / l, "{lo} {hi}");
    }

    #[test]
    fn densities_never_exceed_envelopes(x in point(2), h in prop::collection::vec(-2.5f64..2.5, 2)) {
        let kernels: Vec<Arc<dyn JumpKernel>> = vec![
            Arc::new(ShellUniform::new(2, 1.5, 0.5, 2.0)),
            Arc::new(TruncatedStable::new(2, 0.7, 2.0)),
            Arc::new(StateModulatedStable::new(2, 1.2, 0.5, 1.5, 3.0, 1.5)),
            Arc::new(CounterexampleKernel::new(9, 1.0)),
        ];
        for k in kernels {
            prop_assert!(k.density(&x, &h) <= k.envelope(&h), "{} at {:?} {:?}", k.name(), x, h);
        }
    }

    #[test]
    fn simulated_thinned_jumps_clear_the_truncation(seed in any::<u64>(), alpha in 0.2f64..1.8) {
        let sim = Simulator::new(with_kernel(Arc::new(TruncatedStable::new(2, alpha, 1.0))), SimParams::new(1e-3, 0.05, 0.05)).unwrap();
        let p = sim.sample_path(&[0.0, 0.0], RngStream::new(seed, 0)).unwrap();
        for j in &p.jumps {
            prop_assert!(linalg::dist(&j.pre, &j.post) >= 0.05);
        }
    }

    #[test]
    fn paths_are_determined_by_seed_and_index(seed in any::<u64>(), index in 0u64..1000) {
        let sim = Simulator::new(with_kernel(Arc::new(TruncatedStable::new(2, 1.0, 1.0))), SimParams::new(1e-3, 0.05, 0.05)).unwrap();
        let a = sim.sample_path(&[0.1, 0.0], RngStream::new(seed, index)).unwrap();
        let b = sim.sample_path(&[0.1, 0.0], RngStream::new(seed, index)).unwrap();
        prop_assert_eq!(&a, &b);
        let c = sim.sample_path(&[0.1, 0.0], RngStream::new(seed, index + 1)).unwrap();
        prop_assert_ne!(a, c);
    }

    #[test]
    fn exit_time_is_monotone_in_the_domain(seed in any::<u64>(), r1 in 0.1f64..0.5, extra in 0.0f64..0.5) {
        let sim = Simulator::new(with_kernel(Arc::new(TruncatedStable::new(2, 1.0, 1.0))), SimParams::new(1e-3, 0.05, 2.0)).unwrap();
        let p = sim.sample_path(&[0.0, 0.0], RngStream::new(seed, 0)).unwrap();
        let small = first_exit(&p, &Domain::ball(vec![0.0, 0.0], r1)).unwrap();
        let large = first_exit(&p, &Domain::ball(vec![0.0, 0.0], r1 + extra)).unwrap();
        prop_assert!(small.time <= large.time);
    }

    #[test]
    fn hit_before_exit_is_exhaustive(seed in any::<u64>(), c in point(2), rho in 0.05f64..0.3) {
        let ambient = Domain::ball(vec![0.0, 0.0], 2.0);
        let target = Domain::ball(c, rho);
        let sim = Simulator::new(brownian(2), SimParams::new(1e-3, 0.05, 1.0)).unwrap();
        let p = sim.sample_path(&[0.0, 0.0], RngStream::new(seed, 0)).unwrap();
        let r = first_hit_before_exit(&p, &target, &ambient).unwrap();
        let exit = first_exit(&p, &ambient).unwrap();
        match r.kind {
            StopKind::Hit => {
                prop_assert!(target.contains(&r.state));
                if exit.kind == StopKind::Exited {
                    prop_assert!(r.time <= exit.time);
                }
            }
            StopKind::Exited => prop_assert!(!ambient.contains(&r.state)),
            StopKind::Horizon => prop_assert_eq!(exit.kind, StopKind::Horizon),
        }
    }

    #[test]
    fn halving_the_step_moves_a_drift_exit_by_at_most_one_step(
        speed in 0.2f64..5.0,
        angle in 0.0f64..std::f64::consts::TAU,
        dt in 1e-3f64..2e-2,
    ) {
        let b = vec![speed * angle.cos(), speed * angle.sin()];
        let op = OperatorSpec::new(DiffusionField::zero(2), DriftField::constant(b, speed), Arc::new(ZeroKernel::new(2))).unwrap();
        let domain = Domain::ball(vec![0.0, 0.0], 1.0);
        let coarse = Simulator::new(op.clone(), SimParams::new(dt, 0.5, 10.0)).unwrap();
        let fine = Simulator::new(op, SimParams::new(dt / 2.0, 0.5, 10.0)).unwrap();
        let tc = first_exit(&coarse.sample_path(&[0.0, 0.0], RngStream::new(1, 0)).unwrap(), &domain).unwrap().time;
        let tf = first_exit(&fine.sample_path(&[0.0, 0.0], RngStream::new(1, 0)).unwrap(), &domain).unwrap().time;
        prop_assert!(tf <= tc + dt / 2.0 + 1e-12, "{tf} {tc}");
    }

    #[test]
    fn tube_probability_is_monotone_under_coupling(
        seed in any::<u64>(),
        mut eps in prop::collection::vec(0.05f64..0.6, 2..5),
    ) {
        eps.sort_by(f64::total_cmp);
        let sim = Simulator::new(with_kernel(Arc::new(TruncatedStable::new(2, 1.0, 1.0))), SimParams::new(1e-3, 0.05, 1.0)).unwrap();
        let phi = AnchorPath::segment(vec![0.0, 0.0], vec![0.2, 0.0], 0.1).unwrap();
        let e = tube_probability(&sim, &phi, &eps, 0.1, &MonteCarlo::new(200, seed)).unwrap();
        prop_assert!(e.windows(2).all(|w| w[0].value <= w[1].value));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mass_bound_doubles_with_the_density(c in 0.2f64..3.0, alpha in 0.2f64..1.8) {
        let spec = QuadratureSpec::default();
        let x = [0.0, 0.0];
        let one = kernel_mass_bound(&TruncatedStable::new(2, alpha, c), &x, &spec).unwrap().value;
        let two = kernel_mass_bound(&TruncatedStable::new(2, alpha, 2.0 * c), &x, &spec).unwrap().value;
        prop_assert!((two / one - 2.0).abs() <= 2e-6, "{one} {two}");
        let one = kernel_mass_bound(&ShellUniform::new(2, c, 0.5, 1.5), &x, &spec).unwrap().value;
        let two = kernel_mass_bound(&ShellUniform::new(2, 2.0 * c, 0.5, 1.5), &x, &spec).unwrap().value;
        prop_assert!((two / one - 2.0).abs() <= 2e-6, "{one} {two}");
    }

    #[test]
    fn comparability_ignores_density_scaling(c in 0.2f64..3.0, seed in any::<u64>()) {
        let opts = ComparabilityOptions::default();
        let run = |k: &dyn JumpKernel| {
            let mut rng = SimRng::seed_from_u64(seed);
            comparability_ratio(k, &[0.0, 0.0], 0.5, 500, &opts, &mut rng).unwrap()
        };
        let pairs: [(Box<dyn JumpKernel>, Box<dyn JumpKernel>); 2] = [
            (Box::new(ShellUniform::new(2, c, 0.2, 1.5)), Box::new(ShellUniform::new(2, 3.0 * c, 0.2, 1.5))),
            (Box::new(TruncatedStable::new(2, 1.0, c)), Box::new(TruncatedStable::new(2, 1.0, 3.0 * c))),
        ];
        for (k1, k2) in &pairs {
            let (a, b) = (run(k1.as_ref()), run(k2.as_ref()));
            prop_assert_eq!(a.infinite, b.infinite);
            if !a.infinite {
                prop_assert!((a.ratio - b.ratio).abs() <= 1e-12 * a.ratio.abs().max(1.0), "{} {}", a.ratio, b.ratio);
            }
        }
    }

    #[test]
    fn harmonic_estimate_is_linear_in_the_payoff(
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
        w in prop::collection::vec(-1.0f64..1.0, 2),
        seed in any::<u64>(),
    ) {
        let sim = Simulator::new(with_kernel(Arc::new(ShellUniform::new(2, 1.0, 0.5, 1.0))), SimParams::new(1e-3, 0.05, 20.0)).unwrap();
        let f = |x: &[f64]| x[0] * w[0] + x[1] * w[1];
        let g = |x: &[f64]| if x[0] > 0.0 { 1.0 } else { 0.0 };
        let h = |x: &[f64]| alpha * f(x) + beta * g(x);
        let fs: [&Payoff; 3] = [&f, &g, &h];
        let domain = Domain::ball(vec![0.0, 0.0], 0.5);
        let r = harmonic_estimate(&sim, &fs, &[0.1, 0.0], &domain, &MonteCarlo::new(100, seed)).unwrap();
        let combined = alpha * r[0].estimate.value + beta * r[1].estimate.value;
        prop_assert!((r[2].estimate.value - combined).abs() <= 1e-12 * (1.0 + combined.abs()));
    }

    #[test]
    fn harnack_ratio_ignores_payoff_scaling_and_order(scale in 0.01f64..100.0, seed in any::<u64>()) {
        let sim = Simulator::new(brownian(2), SimParams::new(2e-3, 0.05, 20.0)).unwrap();
        let f = |x: &[f64]| 1.0 + x[0];
        let g = |x: &[f64]| 1.5 + x[1] * x[0];
        let fs = |x: &[f64]| scale * (1.0 + x[0]);
        let gs = |x: &[f64]| scale * (1.5 + x[1] * x[0]);
        let mc = MonteCarlo::new(100, seed);
        let z0 = [0.0, 0.0];
        let base = harnack_ratio(&sim, &[&f, &g], &z0, 1.0, 3, &mc).unwrap();
        let scaled = harnack_ratio(&sim, &[&fs, &gs], &z0, 1.0, 3, &mc).unwrap();
        let swapped = harnack_ratio(&sim, &[&g, &f], &z0, 1.0, 3, &mc).unwrap();
        prop_assert!((base.max_ratio / scaled.max_ratio - 1.0).abs() <= 1e-12);
        prop_assert_eq!(base.max_ratio, swapped.max_ratio);
    }

    #[test]
    fn configs_survive_a_canonical_round_trip(
        n in 1u64..1_000_000,
        seed in any::<u64>(),
        dt in 1e-5f64..1e-2,
        r in 0.05f64..3.0,
        p in prop::collection::vec(0.5f64..4.0, 1..4),
        bridge in any::<bool>(),
        alpha in 0.1f64..1.9,
    ) {
        let text = format!(
            "id = \"prop\"\n[operator]\ndim = 2\nkernel = {{ name = \"truncated-stable\", params = {{ alpha = {alpha:?}, c = 1.0 }} }}\n\
             [simulation]\ndt = {dt:?}\ndelta = 0.5\n\
             [experiment]\nestimator = \"exit_moment\"\nx0 = [0.0, 0.0]\ndomain = {{ shape = \"ball\", center = [0.0, 0.0], radius = {r:?} }}\np = {p:?}\n\
             [run]\nn_paths = {n}\nseed = {seed}\nbridge = {bridge}\n"
        );
        let cfg: ScenarioConfig = parse_config(&text).unwrap();
        let canon = cfg.to_canonical();
        let again = parse_config(&canon).unwrap();
        prop_assert_eq!(&cfg, &again);
        prop_assert_eq!(canon, again.to_canonical());
        prop_assert_eq!(cfg.params_hash(), again.params_hash());
    }
}

#[test]
fn estimates_do_not_depend_on_the_worker_count() {
    let sim = Simulator::new(with_kernel(Arc::new(TruncatedStable::new(2, 1.0, 1.0))), SimParams::new(1e-3, 0.05, 20.0)).unwrap();
    let domain = Domain::ball(vec![0.0, 0.0], 0.5);
    let mc = MonteCarlo::new(3_000, 21);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| exit_moments(&sim, &[0.0, 0.0], &domain, &[1.0, 2.0], &mc).unwrap())
    };
    let one = run(1);
    for threads in [2, 3, 7] {
        let other = run(threads);
        for (a, b) in one.iter().zip(&other) {
            assert_eq!(a.estimate.value.to_bits(), b.estimate.value.to_bits());
            assert_eq!(a.estimate.stderr.to_bits(), b.estimate.stderr.to_bits());
        }
    }
}

#[test]
fn occupation_identity_matches_direct_counting_on_random_finite_activity_configurations() {
    let mut rng = SimRng::seed_from_u64(2024);
    let mut agree = 0;
    for i in 0..20u64 {
        let c: f64 = rng.random_range(0.5..3.0);
        let inner: f64 = rng.random_range(0.6..1.0);
        let outer = inner + rng.random_range(0.3..1.0);
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let dist: f64 = rng.random_range(inner.max(0.7)..outer);
        let radius = rng.random_range(0.1f64..0.25).min(dist - 0.55);
        let patch = Domain::ball(vec![dist * theta.cos(), dist * theta.sin()], radius);
        let x0 = vec![rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)];
        let sim = Simulator::new(with_kernel(Arc::new(ShellUniform::new(2, c, inner, outer))), SimParams::new(1e-3, 0.05, 20.0)).unwrap();
        let domain = Domain::ball(vec![0.0, 0.0], 0.5);
        let mc = MonteCarlo::new(10_000, 100 + i);
        let occ = occupation_exit_distribution(&sim, &x0, &domain, &patch, &mc).unwrap();
        let ind = |x: &[f64]| if patch.contains(x) { 1.0 } else { 0.0 };
        let fs: [&Payoff; 1] = [&ind];
        let direct = harmonic_estimate(&sim, &fs, &x0, &domain, &mc.block(1)).unwrap();
        if occ.estimate.overlaps(&direct[0].estimate) {
            agree += 1;
        } else {
            eprintln!("configuration {i}: {:?} vs {:?}", occ.estimate, direct[0].estimate);
        }
    }
    assert_eq!(agree, 20);
}
