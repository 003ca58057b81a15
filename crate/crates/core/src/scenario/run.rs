use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{make_named_kernel, Experiment, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimators::{self as est, AnchorPath, MonteCarlo, Payoff};
use crate::kernel::comparability::{comparability_ratio, ComparabilityOptions};
use crate::kernel::quadrature::{kernel_mass_bound, QuadratureSpec};
use crate::operator::{drift_bound_check, validate_ellipticity, OperatorSpec};
use crate::sim::{MeyerOverlay, Simulator};
use crate::stats::Estimate;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Column header of every report.
pub const CSV_HEADER: &str =
    "scenario_id,estimator,params_hash,value,stderr,ci_low,ci_high,n,seed,wall_time";

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub estimator: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n: u64,
    pub seed: u64,
    pub wall_time: Option<f64>,
}

impl Row {
    fn scalar(estimator: impl Into<String>, value: f64, n: u64, seed: u64) -> Self {
        Self {
            estimator: estimator.into(),
            value,
            stderr: None,
            ci_low: None,
            ci_high: None,
            n,
            seed,
            wall_time: None,
        }
    }

    fn estimate(estimator: impl Into<String>, e: &Estimate, seed: u64) -> Self {
        Self {
            estimator: estimator.into(),
            value: e.value,
            stderr: Some(e.stderr),
            ci_low: Some(e.ci_low),
            ci_high: Some(e.ci_high),
            n: e.n,
            seed,
            wall_time: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationLine {
    pub check: String,
    pub passed: bool,
    pub worst: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub id: String,
    pub version: String,
    pub params_hash: String,
    pub config_echo: String,
    pub validation: Vec<ValidationLine>,
    pub rows: Vec<Row>,
    /// Human-readable diagnostics (exclusions, censoring, flags).
    pub notes: Vec<String>,
    /// Estimates whose censoring exceeded the tolerance.
    pub uncertified: Vec<String>,
    pub failure: Option<Failure>,
    pub strict: bool,
    pub wall_time: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunOptions {
    /// Record wall-clock times; reports are then no longer reproducible.
    pub timing: bool,
    /// Escalate uncertified estimates regardless of the config.
    pub strict: bool,
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), num)
}

impl RunReport {
    /// Process exit status: 0 on success, 2 on failure, 3 when strict mode
    /// rejects uncertified estimates.
    pub fn status(&self) -> i32 {
        if self.failure.is_some() {
            2
        } else if self.strict && !self.uncertified.is_empty() {
            3
        } else {
            0
        }
    }

    pub fn csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# jumplab {}", self.version);
        let _ = writeln!(s, "# scenario: {}", self.id);
        let _ = writeln!(s, "# params_hash: {}", self.params_hash);
        s.push_str("# config:\n");
        for line in self.config_echo.lines() {
            let _ = writeln!(s, "#   {line}");
        }
        for v in &self.validation {
            let _ = writeln!(
                s,
                "# validation: {} {} worst={} {}",
                v.check,
                if v.passed { "passed" } else { "FAILED" },
                num(v.worst),
                v.detail
            );
        }
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                self.id,
                r.estimator,
                self.params_hash,
                num(r.value),
                opt(r.stderr),
                opt(r.ci_low),
                opt(r.ci_high),
                r.n,
                r.seed,
                opt(r.wall_time)
            );
        }
        for n in &self.notes {
            let _ = writeln!(s, "# note: {n}");
        }
        for u in &self.uncertified {
            let _ = writeln!(s, "# uncertified: {u}");
        }
        if let Some(f) = &self.failure {
            let _ = writeln!(s, "# failure: kind={}", f.kind);
            for line in f.message.lines() {
                let _ = writeln!(s, "# failure: message={line}");
            }
        }
        let _ = writeln!(s, "# status: {}", self.status());
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario {} (jumplab {})", self.id, self.version);
        let status = match self.status() {
            0 => "ok",
            2 => "FAILED",
            _ => "UNCERTIFIED",
        };
        let _ = writeln!(s, "status: {status}");
        for v in &self.validation {
            let _ = writeln!(
                s,
                "  check {:<14} {}",
                v.check,
                if v.passed { "ok" } else { "FAILED" }
            );
        }
        for r in &self.rows {
            match (r.ci_low, r.ci_high) {
                (Some(lo), Some(hi)) => {
                    let _ = writeln!(s, "  {:<40} {:>14} [{}, {}]", r.estimator, num(r.value), num(lo), num(hi));
                }
                _ => {
                    let _ = writeln!(s, "  {:<40} {:>14}", r.estimator, num(r.value));
                }
            }
        }
        for n in &self.notes {
            let _ = writeln!(s, "  note: {n}");
        }
        for u in &self.uncertified {
            let _ = writeln!(s, "  uncertified: {u}");
        }
        if let Some(f) = &self.failure {
            let _ = writeln!(s, "  failure ({}): {}", f.kind, f.message);
        }
        if let Some(t) = self.wall_time {
            let _ = writeln!(s, "wall time: {t:.3} s");
        }
        s
    }

    /// Writes `<id>.csv` and `<id>.summary.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{}.csv", self.id));
        let summary = dir.join(format!("{}.summary.txt", self.id));
        std::fs::write(&csv, self.csv())?;
        std::fs::write(&summary, self.summary())?;
        Ok(vec![csv, summary])
    }
}

fn fail(e: &Error) -> Failure {
    Failure {
        kind: e.kind().to_string(),
        message: e.to_string(),
    }
}

fn directions(dim: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..dim {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        out.push(e);
        for j in i + 1..dim {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; dim];
                e[i] = 1.0;
                e[j] = s;
                out.push(e);
            }
        }
    }
    out
}

fn validators(cfg: &ScenarioConfig, op: &OperatorSpec, mc: &MonteCarlo) -> Result<Vec<ValidationLine>> {
    let d = op.dim();
    let pts = cfg.experiment.sample_points(d);
    let mut out = Vec::new();
    let e = validate_ellipticity(&op.diffusion, &pts, &directions(d))?;
    out.push(ValidationLine {
        check: e.check.to_string(),
        passed: e.passed,
        worst: e.worst,
        detail: e.detail,
    });
    let b = drift_bound_check(&op.drift, &pts)?;
    out.push(ValidationLine {
        check: b.check.to_string(),
        passed: b.passed,
        worst: b.worst,
        detail: b.detail,
    });
    if let Some(k) = cfg.operator.mass_bound {
        let spec = QuadratureSpec::coarse();
        let mut worst = 0.0_f64;
        let mut at = pts[0].clone();
        for p in &pts {
            let m = kernel_mass_bound(op.kernel.as_ref(), p, &spec)?;
            if m.value + m.error > worst {
                worst = m.value + m.error;
                at = p.clone();
            }
        }
        out.push(ValidationLine {
            check: "mass-bound".into(),
            passed: worst <= k,
            worst,
            detail: format!("declared K={} at {:?}", num(k), at),
        });
    }
    if let Some(k) = cfg.operator.comparability_k {
        let mut rng = crate::rng::RngStream::new(mc.seed, u64::MAX).substream("comparability");
        let r = comparability_ratio(
            op.kernel.as_ref(),
            &pts[0],
            0.25,
            2000,
            &ComparabilityOptions::default(),
            &mut rng,
        )?;
        out.push(ValidationLine {
            check: "comparability".into(),
            passed: !r.infinite && r.ratio <= k,
            worst: if r.infinite { f64::INFINITY } else { r.ratio },
            detail: format!("declared k={} at {:?} r=0.25", num(k), pts[0]),
        });
    }
    Ok(out)
}

struct Output {
    rows: Vec<Row>,
    notes: Vec<String>,
    uncertified: Vec<String>,
}

impl Output {
    fn push(&mut self, r: Row) {
        self.rows.push(r);
    }
}

fn tag(v: f64) -> String {
    num(v)
}

fn payoffs(specs: &[super::config::PayoffSpec]) -> Vec<Box<Payoff<'static>>> {
    specs.iter().map(|p| p.build()).collect()
}

fn execute(cfg: &ScenarioConfig, sim: &Simulator, mc: &MonteCarlo, out: &mut Output) -> Result<()> {
    let seed = mc.seed;
    match &cfg.experiment {
        Experiment::ExitMoment {
            x0,
            domain,
            p,
            dt_factors,
        } => {
            for f in dt_factors {
                let s = if *f == 1.0 { sim.clone() } else { sim.with_dt(sim.params().dt * f)? };
                for m in est::exit_moments(&s, x0, domain, p, mc)? {
                    let mut name = format!("exit_moment[p={}]", tag(m.p));
                    if dt_factors.len() > 1 || *f != 1.0 {
                        name = format!("exit_moment[p={},dt_factor={}]", tag(m.p), tag(*f));
                    }
                    if !m.certified {
                        out.uncertified.push(format!("{name}: censored fraction {}", num(m.censored_fraction)));
                    }
                    out.push(Row::estimate(name, &m.estimate, seed));
                }
            }
        }
        Experiment::ExitTail { x0, domain, times } => {
            for (t, e) in times.iter().zip(est::exit_tail(sim, x0, domain, times, mc)?) {
                out.push(Row::estimate(format!("exit_tail[t={}]", tag(*t)), &e, seed));
            }
        }
        Experiment::ExitScaling {
            center,
            radii,
            p,
            scale_dt,
        } => {
            let r = est::exit_scaling(sim, center, radii, p, *scale_dt, mc)?;
            for row in &r.moments {
                for (ri, m) in r.radii.iter().zip(row) {
                    let name = format!("exit_moment[p={},r={}]", tag(m.p), tag(*ri));
                    if !m.certified {
                        out.uncertified.push(format!("{name}: censored fraction {}", num(m.censored_fraction)));
                    }
                    out.push(Row::estimate(name, &m.estimate, seed));
                }
            }
            for (pi, fit) in p.iter().zip(&r.fits) {
                out.push(Row::scalar(format!("exit_scaling.exponent[p={}]", tag(*pi)), fit.exponent, mc.n_paths, seed));
                out.push(Row::scalar(format!("exit_scaling.prefactor[p={}]", tag(*pi)), fit.prefactor, mc.n_paths, seed));
            }
        }
        Experiment::ExitCoverage {
            x0,
            domain,
            truth,
            repetitions,
        } => {
            let mut covered = 0u64;
            for k in 0..*repetitions {
                let m = est::exit_moment(sim, x0, domain, 1.0, &mc.block(k))?;
                if m.estimate.contains(*truth) {
                    covered += 1;
                }
                if !m.certified {
                    out.uncertified.push(format!("repetition {k}: censored fraction {}", num(m.censored_fraction)));
                }
            }
            out.push(Row::scalar("exit_coverage.covered", covered as f64, *repetitions, seed));
            out.push(Row::scalar(
                "exit_coverage.fraction",
                covered as f64 / *repetitions as f64,
                *repetitions,
                seed,
            ));
        }
        Experiment::HitProbability { x0, targets, ambient } => {
            for (i, h) in est::hit_probabilities(sim, x0, targets, ambient, mc)?.iter().enumerate() {
                out.push(Row::estimate(format!("hit_probability[{i}]"), &h.estimate, seed));
                out.push(Row::scalar(format!("hit_probability.volume_ratio[{i}]"), h.volume_ratio, mc.n_paths, seed));
                if i == 0 && h.censored_fraction > 0.0 {
                    out.notes.push(format!("censored fraction {}", num(h.censored_fraction)));
                }
            }
        }
        Experiment::HarmonicEstimate { x, domain, payoffs: specs } => {
            let fs = payoffs(specs);
            let refs: Vec<&Payoff> = fs.iter().map(|b| b.as_ref()).collect();
            for (i, k) in est::harmonic_estimate(sim, &refs, x, domain, mc)?.iter().enumerate() {
                let name = format!("harmonic_estimate[{i}]");
                if !k.certified {
                    out.uncertified.push(format!("{name}: censored fraction {}", num(k.censored_fraction)));
                }
                out.push(Row::estimate(name, &k.estimate, seed));
            }
        }
        Experiment::OccupationExitDistribution {
            x,
            domain,
            set,
            direct,
        } => {
            let k = est::occupation_exit_distribution(sim, x, domain, set, &mc.block(0))?;
            if !k.certified {
                out.uncertified.push(format!("occupation: censored fraction {}", num(k.censored_fraction)));
            }
            out.push(Row::estimate("occupation_exit_distribution", &k.estimate, seed));
            if *direct {
                let target = set.clone();
                let f = move |y: &[f64]| f64::from(u8::from(target.contains(y)));
                let refs: [&Payoff; 1] = [&f];
                let k = est::harmonic_estimate(sim, &refs, x, domain, &mc.block(1))?.remove(0);
                out.push(Row::estimate("occupation_exit_distribution.direct", &k.estimate, seed));
            }
        }
        Experiment::KrylovFunctional { x, domain, f } => {
            let f = f.build();
            let k = est::krylov_functional(sim, f.as_ref(), x, domain, mc)?;
            if !k.certified {
                out.uncertified.push(format!("krylov_functional: censored fraction {}", num(k.censored_fraction)));
            }
            out.push(Row::estimate("krylov_functional", &k.estimate, seed));
        }
        Experiment::LevySystem { x0, a, b, t0 } => {
            let r = est::levy_system_check(sim, x0, a, b, *t0, mc)?;
            out.push(Row::estimate("levy_system.difference", &r.difference, seed));
            out.push(Row::scalar("levy_system.z", r.z, mc.n_paths, seed));
            out.push(Row::scalar("levy_system.mean_count", r.mean_count, mc.n_paths, seed));
            out.push(Row::scalar("levy_system.mean_compensator", r.mean_compensator, mc.n_paths, seed));
        }
        Experiment::MeyerEquivalence {
            x0,
            base_kernel,
            floor,
            excess_bound,
            t0,
        } => {
            let direct = sim.with_horizon(*t0)?;
            let full = cfg.operator.kernel()?;
            let base = make_named_kernel(base_kernel, cfg.operator.dim, "experiment.base_kernel")?;
            let bound = match excess_bound {
                Some(b) => *b,
                None => full.tail_mass(*floor),
            };
            let mut op = sim.op().clone();
            op.kernel = base;
            let overlay = Simulator::new(op, direct.params().clone())?.with_overlay(MeyerOverlay {
                full,
                floor: *floor,
                bound,
            })?;
            let r = est::meyer_equivalence(&direct, &overlay, x0, mc)?;
            for (i, ks) in r.ks.iter().enumerate() {
                out.push(Row::scalar(format!("meyer_equivalence.ks_statistic[x_{}]", i + 1), ks.statistic, mc.n_paths, seed));
                out.push(Row::scalar(format!("meyer_equivalence.ks_p_value[x_{}]", i + 1), ks.p_value, mc.n_paths, seed));
            }
            out.push(Row::scalar("meyer_equivalence.direct_jumps", r.direct_jumps, mc.n_paths, seed));
            out.push(Row::scalar("meyer_equivalence.overlay_thinned_jumps", r.overlay_thinned_jumps, mc.n_paths, seed));
            out.push(Row::scalar("meyer_equivalence.overlay_meyer_jumps", r.overlay_meyer_jumps, mc.n_paths, seed));
        }
        Experiment::HarnackRatio {
            z0,
            radius,
            resolution,
            payoffs: specs,
            replicates,
        } => {
            let fs = payoffs(specs);
            let refs: Vec<&Payoff> = fs.iter().map(|b| b.as_ref()).collect();
            for k in 0..*replicates {
                let m = mc.block(k);
                let r = est::harnack_ratio(sim, &refs, z0, *radius, *resolution, &m)?;
                let suffix = if *replicates > 1 { format!("[block={k}]") } else { String::new() };
                out.push(Row::scalar(format!("harnack_ratio{suffix}"), r.max_ratio, mc.n_paths, seed));
                out.push(Row::scalar(
                    format!("harnack_ratio.excluded_points{suffix}"),
                    r.excluded_points.len() as f64,
                    mc.n_paths,
                    seed,
                ));
                out.notes.push(format!(
                    "harnack_ratio{suffix}: witness payoff {} x={:?} y={:?}",
                    r.witness.0, r.witness.1, r.witness.2
                ));
                for f in &r.excluded_payoffs {
                    out.notes.push(format!("harnack_ratio{suffix}: payoff {f} excluded (statistically zero on the grid)"));
                }
            }
        }
        Experiment::HolderFit {
            z0,
            radius,
            separations,
            payoff,
        } => {
            let f = payoff.build();
            let r = est::holder_fit(sim, f.as_ref(), z0, *radius, separations, mc)?;
            for (s, e) in r.separations.iter().zip(&r.differences) {
                out.push(Row::estimate(format!("holder_fit.difference[s={}]", tag(*s)), e, seed));
            }
            let usable = r.usable.iter().filter(|u| **u).count();
            out.push(Row::scalar("holder_fit.usable", usable as f64, mc.n_paths, seed));
            if r.constant {
                out.notes.push("holder_fit: constant function, fit declined".into());
            }
            if let Some(fit) = &r.fit {
                out.push(Row::scalar("holder_fit.exponent", fit.exponent, mc.n_paths, seed));
                out.push(Row::scalar("holder_fit.prefactor", fit.prefactor, mc.n_paths, seed));
            }
        }
        Experiment::TubeProbability { anchor, eps, t0 } => {
            let phi = AnchorPath::new(anchor.iter().map(|k| (k.t, k.x.clone())).collect())?;
            for (e, p) in eps.iter().zip(est::tube_probability(sim, &phi, eps, *t0, mc)?) {
                out.push(Row::estimate(format!("tube_probability[eps={}]", tag(*e)), &p, seed));
            }
        }
        Experiment::CounterexampleRatio { m, direct, refine } => {
            let rows = est::counterexample_ratio(sim, m, *refine, mc)?;
            let offset = 2 * m.len() as u64;
            let emit = |label: &str, r: &est::CounterexampleRow, out: &mut Output| {
                out.push(Row::estimate(format!("{label}.num[m={}]", r.m), &r.num, seed));
                out.push(Row::estimate(format!("{label}.den[m={}]", r.m), &r.den, seed));
                match &r.ratio {
                    Some(q) => out.push(Row {
                        estimator: format!("{label}.ratio[m={}]", r.m),
                        value: q.value,
                        stderr: Some(q.log_stderr * q.value),
                        ci_low: Some(q.ci_low),
                        ci_high: Some(q.ci_high),
                        n: r.num.n,
                        seed,
                        wall_time: None,
                    }),
                    None => out.notes.push(format!(
                        "{label} m={} excluded: {}",
                        r.m,
                        r.diagnostic.as_deref().unwrap_or("no ratio")
                    )),
                }
            };
            for r in &rows {
                emit("counterexample_ratio", r, out);
            }
            for (j, mm) in direct.iter().enumerate() {
                let r = est::counterexample_ratio_direct(sim, *mm, &mc.block(offset + 2 * j as u64))?;
                emit("counterexample_ratio.direct", &r, out);
            }
        }
    }
    Ok(())
}

/// Runs validators, then the scenario's estimator. Errors are captured in
/// the report's failure section.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> RunReport {
    let start = Instant::now();
    let mut report = RunReport {
        id: cfg.id.clone(),
        version: VERSION.to_string(),
        params_hash: cfg.params_hash(),
        config_echo: cfg.to_canonical(),
        validation: Vec::new(),
        rows: Vec::new(),
        notes: Vec::new(),
        uncertified: Vec::new(),
        failure: None,
        strict: cfg.run.strict || opts.strict,
        wall_time: None,
    };
    let result = (|| -> Result<()> {
        if let Err(e) = cfg.validate() {
            return Err(e.0.into_iter().next().expect("nonempty"));
        }
        let op = cfg.operator.build()?;
        let mc = cfg.run.monte_carlo();
        report.validation = validators(cfg, &op, &mc)?;
        if let Some(v) = report.validation.iter().find(|v| !v.passed) {
            return Err(Error::Precondition(format!(
                "operator check '{}' failed: worst={} {}",
                v.check,
                num(v.worst),
                v.detail
            )));
        }
        let sim = Simulator::new(op, cfg.simulation.clone())?;
        let mut out = Output {
            rows: Vec::new(),
            notes: Vec::new(),
            uncertified: Vec::new(),
        };
        let t = Instant::now();
        let res = execute(cfg, &sim, &mc, &mut out);
        if opts.timing {
            let secs = t.elapsed().as_secs_f64();
            for r in &mut out.rows {
                r.wall_time = Some(secs);
            }
        }
        report.rows = out.rows;
        report.notes = out.notes;
        report.uncertified = out.uncertified;
        res
    })();
    if let Err(e) = result {
        report.failure = Some(fail(&e));
    }
    if opts.timing {
        report.wall_time = Some(start.elapsed().as_secs_f64());
    }
    report
}

/// Reads and parses a scenario file.
pub fn load_config(path: &Path) -> std::result::Result<ScenarioConfig, super::config::ConfigErrors> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| super::config::ConfigErrors(vec![Error::Io(format!("{}: {e}", path.display()))]))?;
    super::config::parse_config(&text)
}

/// Scenario files (`*.toml`) in `dir`, sorted by name.
pub fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    v.sort();
    Ok(v)
}
