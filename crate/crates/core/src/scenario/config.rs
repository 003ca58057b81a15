use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{MonteCarlo, Payoff};
use crate::geometry::Domain;
use crate::kernel::{make_kernel_at, JumpKernel};
use crate::operator::{make_diffusion, make_drift, OperatorSpec};
use crate::params::Params;
use crate::sim::SimParams;

/// A built-in selected by name, with its parameter table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Named {
    pub name: String,
    #[serde(default, skip_serializing_if = "is_empty_params")]
    pub params: Params,
}

fn is_empty_params(p: &Params) -> bool {
    p.0.is_empty()
}

impl Named {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            params: Params::new(),
        }
    }

    pub fn with_params(mut self, params: Params) -> Self {
        self.params = params;
        self
    }
}

fn identity() -> Named {
    Named::new("identity")
}

fn zero_drift() -> Named {
    Named::new("zero-drift")
}

fn zero_kernel() -> Named {
    Named::new("zero")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorBlock {
    pub dim: usize,
    #[serde(default = "identity")]
    pub diffusion: Named,
    #[serde(default = "zero_drift")]
    pub drift: Named,
    #[serde(default = "zero_kernel")]
    pub kernel: Named,
    /// Declared ellipticity constant `Λ1`; defaults to the field's own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    /// Declared drift bound `Λ2`; defaults to the field's own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
    /// Declared kernel mass bound `K`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_bound: Option<f64>,
    /// Declared comparability constant `k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparability_k: Option<f64>,
    /// Declared comparability exponent `β`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparability_beta: Option<f64>,
}

impl OperatorBlock {
    pub fn build(&self) -> Result<OperatorSpec> {
        let d = self.dim;
        let mut diffusion = make_diffusion(
            &self.diffusion.name,
            &self.diffusion.params,
            d,
            "operator.diffusion.params",
        )
        .map_err(|e| rename_path(e, "operator.diffusion.params.name", "operator.diffusion.name"))?;
        if let Some(l) = self.lambda1 {
            diffusion = diffusion.with_lambda1(l);
        }
        let mut drift = make_drift(&self.drift.name, &self.drift.params, d, "operator.drift.params")
            .map_err(|e| rename_path(e, "operator.drift.params.name", "operator.drift.name"))?;
        if let Some(l) = self.lambda2 {
            drift = drift.with_lambda2(l);
        }
        let kernel = self.kernel()?;
        let mut op = OperatorSpec::new(diffusion, drift, kernel)?;
        if let Some(k) = self.mass_bound {
            op = op.with_mass_bound(k);
        }
        if let Some(k) = self.comparability_k {
            op = op.with_comparability(k, self.comparability_beta.unwrap_or(0.0));
        }
        Ok(op)
    }

    pub fn kernel(&self) -> Result<Arc<dyn JumpKernel>> {
        make_named_kernel(&self.kernel, self.dim, "operator.kernel")
    }
}

pub(crate) fn make_named_kernel(
    named: &Named,
    dim: usize,
    path: &str,
) -> Result<Arc<dyn JumpKernel>> {
    let params_path = format!("{path}.params");
    make_kernel_at(&named.name, &named.params, dim, &params_path).map_err(|e| {
        rename_path(e, &format!("{params_path}.name"), &format!("{path}.name"))
    })
}

fn rename_path(e: Error, from: &str, to: &str) -> Error {
    match e {
        Error::Config {
            path,
            message,
            hint,
        } if path == from => Error::Config {
            path: to.to_string(),
            message,
            hint,
        },
        other => other,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(default = "default_paths")]
    pub n_paths: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub first_stream: u64,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_true")]
    pub bridge: bool,
    #[serde(default = "default_censor")]
    pub censor_tolerance: f64,
    /// Uncertified estimates make the run fail.
    #[serde(default)]
    pub strict: bool,
    /// Output directory for reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

fn default_paths() -> u64 {
    MonteCarlo::default().n_paths
}
fn default_seed() -> u64 {
    MonteCarlo::default().seed
}
fn default_level() -> f64 {
    MonteCarlo::default().level
}
fn default_true() -> bool {
    true
}
fn default_censor() -> f64 {
    MonteCarlo::default().censor_tolerance
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            n_paths: default_paths(),
            seed: default_seed(),
            first_stream: 0,
            level: default_level(),
            bridge: true,
            censor_tolerance: default_censor(),
            strict: false,
            output: None,
        }
    }
}

impl RunBlock {
    pub fn monte_carlo(&self) -> MonteCarlo {
        MonteCarlo {
            n_paths: self.n_paths,
            seed: self.seed,
            first_stream: self.first_stream,
            level: self.level,
            bridge: self.bridge,
            censor_tolerance: self.censor_tolerance,
        }
    }
}

/// Bounded payoffs available to scenario files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffSpec {
    Constant {
        value: f64,
    },
    /// `w·x + offset`.
    Linear {
        weights: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    /// `1(x ∈ set)`.
    Indicator { set: Domain },
    /// `1(w·x > offset)`.
    Halfspace {
        normal: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
}

impl PayoffSpec {
    pub fn build(&self) -> Box<Payoff<'static>> {
        match self.clone() {
            PayoffSpec::Constant { value } => Box::new(move |_| value),
            PayoffSpec::Linear { weights, offset } => {
                Box::new(move |x| offset + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            }
            PayoffSpec::Indicator { set } => Box::new(move |x| f64::from(u8::from(set.contains(x)))),
            PayoffSpec::Halfspace { normal, offset } => Box::new(move |x| {
                let s: f64 = normal.iter().zip(x).map(|(w, v)| w * v).sum();
                f64::from(u8::from(s > offset))
            }),
        }
    }

    fn check(&self, dim: usize, path: &str, errs: &mut Vec<Error>) {
        match self {
            PayoffSpec::Constant { value } => finite(*value, &format!("{path}.value"), errs),
            PayoffSpec::Linear { weights, offset } => {
                vector(weights, dim, &format!("{path}.weights"), errs);
                finite(*offset, &format!("{path}.offset"), errs);
            }
            PayoffSpec::Indicator { set } => domain(set, dim, &format!("{path}.set"), errs),
            PayoffSpec::Halfspace { normal, offset } => {
                vector(normal, dim, &format!("{path}.normal"), errs);
                finite(*offset, &format!("{path}.offset"), errs);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Knot {
    pub t: f64,
    pub x: Vec<f64>,
}

fn one() -> Vec<f64> {
    vec![1.0]
}
fn three() -> usize {
    3
}
fn one_u64() -> u64 {
    1
}
fn two_hundred() -> u64 {
    200
}
fn is_false(b: &bool) -> bool {
    !*b
}

/// The estimator a scenario runs, with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    /// `E^x0[τ^p]` for each `p`, rerun at every `dt × factor`.
    ExitMoment {
        x0: Vec<f64>,
        domain: Domain,
        #[serde(default = "one")]
        p: Vec<f64>,
        #[serde(default = "one")]
        dt_factors: Vec<f64>,
    },
    ExitTail {
        x0: Vec<f64>,
        domain: Domain,
        times: Vec<f64>,
    },
    ExitScaling {
        center: Vec<f64>,
        radii: Vec<f64>,
        #[serde(default = "one")]
        p: Vec<f64>,
        #[serde(default, skip_serializing_if = "is_false")]
        scale_dt: bool,
    },
    /// Repeated `E^x0[τ]` on disjoint stream blocks, counting how often the
    /// interval covers `truth`.
    ExitCoverage {
        x0: Vec<f64>,
        domain: Domain,
        truth: f64,
        #[serde(default = "two_hundred")]
        repetitions: u64,
    },
    HitProbability {
        x0: Vec<f64>,
        targets: Vec<Domain>,
        ambient: Domain,
    },
    HarmonicEstimate {
        x: Vec<f64>,
        domain: Domain,
        payoffs: Vec<PayoffSpec>,
    },
    /// Occupation-identity estimate of `P^x(X_τ ∈ set)`, optionally next to
    /// direct counting on an independent block.
    OccupationExitDistribution {
        x: Vec<f64>,
        domain: Domain,
        set: Domain,
        #[serde(default, skip_serializing_if = "is_false")]
        direct: bool,
    },
    KrylovFunctional {
        x: Vec<f64>,
        domain: Domain,
        f: PayoffSpec,
    },
    LevySystem {
        x0: Vec<f64>,
        a: Domain,
        b: Domain,
        t0: f64,
    },
    /// The operator kernel simulated directly against `base_kernel` plus
    /// Meyer's overlay, both up to `t0`.
    MeyerEquivalence {
        x0: Vec<f64>,
        base_kernel: Named,
        floor: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        excess_bound: Option<f64>,
        t0: f64,
    },
    HarnackRatio {
        z0: Vec<f64>,
        radius: f64,
        #[serde(default = "three")]
        resolution: usize,
        payoffs: Vec<PayoffSpec>,
        /// Independent reruns on disjoint stream blocks.
        #[serde(default = "one_u64")]
        replicates: u64,
    },
    HolderFit {
        z0: Vec<f64>,
        radius: f64,
        separations: Vec<f64>,
        payoff: PayoffSpec,
    },
    TubeProbability {
        anchor: Vec<Knot>,
        eps: Vec<f64>,
        t0: f64,
    },
    CounterexampleRatio {
        m: Vec<u32>,
        /// Indices also estimated by direct counting.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        direct: Vec<u32>,
        /// Shrink the time step near each source ball `C_m`.
        #[serde(default = "default_true")]
        refine: bool,
    },
}

/// Names accepted as `experiment.estimator`.
pub const ESTIMATORS: &[&str] = &[
    "exit_moment",
    "exit_tail",
    "exit_scaling",
    "exit_coverage",
    "hit_probability",
    "harmonic_estimate",
    "occupation_exit_distribution",
    "krylov_functional",
    "levy_system",
    "meyer_equivalence",
    "harnack_ratio",
    "holder_fit",
    "tube_probability",
    "counterexample_ratio",
];

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::ExitMoment { .. } => "exit_moment",
            Experiment::ExitTail { .. } => "exit_tail",
            Experiment::ExitScaling { .. } => "exit_scaling",
            Experiment::ExitCoverage { .. } => "exit_coverage",
            Experiment::HitProbability { .. } => "hit_probability",
            Experiment::HarmonicEstimate { .. } => "harmonic_estimate",
            Experiment::OccupationExitDistribution { .. } => "occupation_exit_distribution",
            Experiment::KrylovFunctional { .. } => "krylov_functional",
            Experiment::LevySystem { .. } => "levy_system",
            Experiment::MeyerEquivalence { .. } => "meyer_equivalence",
            Experiment::HarnackRatio { .. } => "harnack_ratio",
            Experiment::HolderFit { .. } => "holder_fit",
            Experiment::TubeProbability { .. } => "tube_probability",
            Experiment::CounterexampleRatio { .. } => "counterexample_ratio",
        }
    }

    /// Points where the operator's coefficients matter for this experiment.
    pub fn sample_points(&self, dim: usize) -> Vec<Vec<f64>> {
        let mut pts = Vec::new();
        let add_domain = |d: &Domain, pts: &mut Vec<Vec<f64>>| {
            if d.dim() != dim {
                return;
            }
            let (lo, hi) = d.bounding_box();
            pts.push(d.center().to_vec());
            for corner in 0..(1usize << dim) {
                pts.push(
                    (0..dim)
                        .map(|i| if corner >> i & 1 == 1 { hi[i] } else { lo[i] })
                        .collect(),
                );
            }
        };
        match self {
            Experiment::ExitMoment { x0, domain, .. }
            | Experiment::ExitTail { x0, domain, .. }
            | Experiment::ExitCoverage { x0, domain, .. } => {
                pts.push(x0.clone());
                add_domain(domain, &mut pts);
            }
            Experiment::ExitScaling { center, radii, .. } => {
                let r = radii.iter().copied().fold(0.0, f64::max);
                add_domain(&Domain::ball(center.clone(), r), &mut pts);
            }
            Experiment::HitProbability { x0, ambient, .. } => {
                pts.push(x0.clone());
                add_domain(ambient, &mut pts);
            }
            Experiment::HarmonicEstimate { x, domain, .. }
            | Experiment::OccupationExitDistribution { x, domain, .. }
            | Experiment::KrylovFunctional { x, domain, .. } => {
                pts.push(x.clone());
                add_domain(domain, &mut pts);
            }
            Experiment::LevySystem { x0, a, .. } => {
                pts.push(x0.clone());
                add_domain(a, &mut pts);
            }
            Experiment::MeyerEquivalence { x0, .. } => pts.push(x0.clone()),
            Experiment::HarnackRatio { z0, radius, .. } | Experiment::HolderFit { z0, radius, .. } => {
                add_domain(&Domain::ball(z0.clone(), *radius), &mut pts);
            }
            Experiment::TubeProbability { anchor, .. } => {
                pts.extend(anchor.iter().map(|k| k.x.clone()));
            }
            Experiment::CounterexampleRatio { .. } => {
                add_domain(&Domain::ball(vec![0.0; dim], 1.0), &mut pts);
            }
        }
        pts.retain(|p| p.len() == dim && p.iter().all(|v| v.is_finite()));
        if pts.is_empty() {
            pts.push(vec![0.0; dim]);
        }
        pts
    }

    fn check(&self, dim: usize, errs: &mut Vec<Error>) {
        const E: &str = "experiment";
        let at = |k: &str| format!("{E}.{k}");
        match self {
            Experiment::ExitMoment {
                x0,
                domain: dom,
                p,
                dt_factors,
            } => {
                vector(x0, dim, &at("x0"), errs);
                domain(dom, dim, &at("domain"), errs);
                positive_list(p, &at("p"), errs);
                positive_list(dt_factors, &at("dt_factors"), errs);
            }
            Experiment::ExitTail { x0, domain: dom, times } => {
                vector(x0, dim, &at("x0"), errs);
                domain(dom, dim, &at("domain"), errs);
                if times.is_empty() || times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
                    errs.push(Error::config(at("times"), "expected a nonempty list of times ≥ 0"));
                }
            }
            Experiment::ExitScaling { center, radii, p, .. } => {
                vector(center, dim, &at("center"), errs);
                positive_list(radii, &at("radii"), errs);
                if radii.len() < 2 {
                    errs.push(Error::config(at("radii"), "need at least two radii"));
                }
                positive_list(p, &at("p"), errs);
            }
            Experiment::ExitCoverage {
                x0,
                domain: dom,
                truth,
                repetitions,
            } => {
                vector(x0, dim, &at("x0"), errs);
                domain(dom, dim, &at("domain"), errs);
                finite(*truth, &at("truth"), errs);
                if *repetitions == 0 {
                    errs.push(Error::config(at("repetitions"), "must be positive"));
                }
            }
            Experiment::HitProbability {
                x0,
                targets,
                ambient,
            } => {
                vector(x0, dim, &at("x0"), errs);
                if targets.is_empty() {
                    errs.push(Error::config(at("targets"), "need at least one target"));
                }
                for (i, t) in targets.iter().enumerate() {
                    domain(t, dim, &format!("{E}.targets[{i}]"), errs);
                }
                domain(ambient, dim, &at("ambient"), errs);
            }
            Experiment::HarmonicEstimate {
                x,
                domain: dom,
                payoffs,
            } => {
                vector(x, dim, &at("x"), errs);
                domain(dom, dim, &at("domain"), errs);
                payoff_list(payoffs, dim, &at("payoffs"), errs);
            }
            Experiment::OccupationExitDistribution {
                x, domain: dom, set, ..
            } => {
                vector(x, dim, &at("x"), errs);
                domain(dom, dim, &at("domain"), errs);
                domain(set, dim, &at("set"), errs);
            }
            Experiment::KrylovFunctional { x, domain: dom, f } => {
                vector(x, dim, &at("x"), errs);
                domain(dom, dim, &at("domain"), errs);
                f.check(dim, &at("f"), errs);
            }
            Experiment::LevySystem { x0, a, b, t0 } => {
                vector(x0, dim, &at("x0"), errs);
                domain(a, dim, &at("a"), errs);
                domain(b, dim, &at("b"), errs);
                positive(*t0, &at("t0"), errs);
            }
            Experiment::MeyerEquivalence {
                x0,
                base_kernel,
                floor,
                excess_bound,
                t0,
            } => {
                vector(x0, dim, &at("x0"), errs);
                if let Err(e) = make_named_kernel(base_kernel, dim, &at("base_kernel")) {
                    errs.push(e);
                }
                positive(*floor, &at("floor"), errs);
                if let Some(b) = excess_bound {
                    if !(*b >= 0.0 && b.is_finite()) {
                        errs.push(Error::config(at("excess_bound"), "expected a finite number ≥ 0"));
                    }
                }
                positive(*t0, &at("t0"), errs);
            }
            Experiment::HarnackRatio {
                z0,
                radius,
                resolution,
                payoffs,
                replicates,
            } => {
                vector(z0, dim, &at("z0"), errs);
                positive(*radius, &at("radius"), errs);
                if *resolution == 0 {
                    errs.push(Error::config(at("resolution"), "must be positive"));
                }
                payoff_list(payoffs, dim, &at("payoffs"), errs);
                if *replicates == 0 {
                    errs.push(Error::config(at("replicates"), "must be positive"));
                }
            }
            Experiment::HolderFit {
                z0,
                radius,
                separations,
                payoff,
            } => {
                vector(z0, dim, &at("z0"), errs);
                positive(*radius, &at("radius"), errs);
                positive_list(separations, &at("separations"), errs);
                if separations.iter().any(|s| *s >= *radius) {
                    errs.push(Error::config(at("separations"), "separations must be below the radius"));
                }
                payoff.check(dim, &at("payoff"), errs);
            }
            Experiment::TubeProbability { anchor, eps, t0 } => {
                if anchor.is_empty() {
                    errs.push(Error::config(at("anchor"), "need at least one knot"));
                } else if anchor[0].t != 0.0 {
                    errs.push(Error::config(format!("{E}.anchor[0].t"), "anchor must start at t = 0"));
                }
                for (i, k) in anchor.iter().enumerate() {
                    vector(&k.x, dim, &format!("{E}.anchor[{i}].x"), errs);
                    if i > 0 && !(k.t > anchor[i - 1].t) {
                        errs.push(Error::config(format!("{E}.anchor[{i}].t"), "knot times must increase"));
                    }
                }
                positive_list(eps, &at("eps"), errs);
                positive(*t0, &at("t0"), errs);
            }
            Experiment::CounterexampleRatio { m, direct, .. } => {
                if m.is_empty() {
                    errs.push(Error::config(at("m"), "need at least one index"));
                }
                for (k, list) in [("m", m), ("direct", direct)] {
                    if list.iter().any(|v| *v < crate::kernel::COUNTEREXAMPLE_M_MIN) {
                        errs.push(Error::config(
                            at(k),
                            format!("indices start at {}", crate::kernel::COUNTEREXAMPLE_M_MIN),
                        ));
                    }
                }
            }
        }
    }
}

fn finite(v: f64, path: &str, errs: &mut Vec<Error>) {
    if !v.is_finite() {
        errs.push(Error::config(path, "expected a finite number"));
    }
}

fn positive(v: f64, path: &str, errs: &mut Vec<Error>) {
    if !(v > 0.0 && v.is_finite()) {
        errs.push(Error::config(path, format!("expected a positive number (got {v})")));
    }
}

fn positive_list(v: &[f64], path: &str, errs: &mut Vec<Error>) {
    if v.is_empty() || v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        errs.push(Error::config(path, "expected a nonempty list of positive numbers"));
    }
}

fn vector(v: &[f64], dim: usize, path: &str, errs: &mut Vec<Error>) {
    if v.len() != dim {
        errs.push(Error::config(path, format!("expected {dim} coordinates, found {}", v.len())));
    } else if v.iter().any(|x| !x.is_finite()) {
        errs.push(Error::config(path, "coordinates must be finite"));
    }
}

fn domain(d: &Domain, dim: usize, path: &str, errs: &mut Vec<Error>) {
    if d.dim() != dim {
        errs.push(Error::config(
            format!("{path}.center"),
            format!("expected {dim} coordinates, found {}", d.dim()),
        ));
    } else if let Err(e) = d.validate() {
        errs.push(Error::config(path, e.to_string()));
    }
}

fn payoff_list(v: &[PayoffSpec], dim: usize, path: &str, errs: &mut Vec<Error>) {
    if v.is_empty() {
        errs.push(Error::config(path, "need at least one payoff"));
    }
    for (i, p) in v.iter().enumerate() {
        p.check(dim, &format!("{path}[{i}]"), errs);
    }
}

/// A complete scenario: one operator, one estimator, one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    pub operator: OperatorBlock,
    #[serde(default)]
    pub simulation: SimParams,
    pub experiment: Experiment,
    #[serde(default)]
    pub run: RunBlock,
}

/// Every problem found in a scenario document, each naming its key path.
#[derive(Debug)]
pub struct ConfigErrors(pub Vec<Error>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl ConfigErrors {
    pub fn first(&self) -> &Error {
        &self.0[0]
    }
}

impl ScenarioConfig {
    /// Checks every numeric precondition and name reference.
    pub fn validate(&self) -> std::result::Result<(), ConfigErrors> {
        let mut errs = Vec::new();
        if self.id.is_empty()
            || !self
                .id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        {
            errs.push(Error::config(
                "id",
                "expected a nonempty identifier of letters, digits, '-', '_' or '.'",
            ));
        }
        let dim = self.operator.dim;
        if dim == 0 {
            errs.push(Error::config("operator.dim", "dimension must be positive"));
        } else {
            if let Err(e) = self.operator.build() {
                errs.push(e);
            }
            self.experiment.check(dim, &mut errs);
        }
        for (key, v) in [
            ("operator.lambda1", self.operator.lambda1),
            ("operator.lambda2", self.operator.lambda2),
            ("operator.mass_bound", self.operator.mass_bound),
            ("operator.comparability_k", self.operator.comparability_k),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) || v.is_nan() {
                    errs.push(Error::config(key, format!("expected a positive number (got {v})")));
                }
            }
        }
        if self.operator.comparability_beta.is_some() && self.operator.comparability_k.is_none() {
            errs.push(Error::config(
                "operator.comparability_beta",
                "given without operator.comparability_k",
            ));
        }
        if let Err(e) = self.simulation.validate_at("simulation") {
            errs.push(e);
        }
        if self.run.n_paths == 0 {
            errs.push(Error::config("run.n_paths", "must be positive"));
        }
        if !(self.run.level > 0.0 && self.run.level < 1.0) {
            errs.push(Error::config("run.level", "confidence level must lie in (0, 1)"));
        }
        if !(self.run.censor_tolerance >= 0.0 && self.run.censor_tolerance <= 1.0) {
            errs.push(Error::config("run.censor_tolerance", "must lie in [0, 1]"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errs))
        }
    }

    /// Canonical text form: defaults filled in, keys in a fixed order.
    pub fn to_canonical(&self) -> String {
        toml::to_string(self).expect("scenario configs serialize")
    }

    /// Short digest of the canonical form, ignoring the output location.
    pub fn params_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut c = self.clone();
        c.run.output = None;
        let digest = Sha256::digest(c.to_canonical().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses and validates a scenario document.
pub fn parse_config(text: &str) -> std::result::Result<ScenarioConfig, ConfigErrors> {
    let de = toml::Deserializer::parse(text).map_err(|e| {
        ConfigErrors(vec![Error::config("<document>", e.message().to_string())])
    })?;
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ConfigErrors(vec![Error::config(
            if path == "." { "<document>".to_string() } else { path },
            inner.message().to_string(),
        )])
    })?;
    cfg.validate()?;
    Ok(cfg)
}
