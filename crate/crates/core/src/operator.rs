//! Coefficient fields of the generator and executable checks of the
//! ellipticity and drift-bound assumptions.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernel::JumpKernel;
use crate::linalg;
use crate::params::Params;

type MatrixFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type VectorFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// Symmetric diffusion matrix field `a(x)` with ellipticity constant `Λ1`.
#[derive(Clone)]
pub struct DiffusionField {
    dim: usize,
    lambda1: f64,
    name: String,
    constant: Option<Vec<f64>>,
    eval: Arc<MatrixFn>,
}

impl fmt::Debug for DiffusionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("lambda1", &self.lambda1)
            .finish()
    }
}

impl DiffusionField {
    /// Constant field `a(x) ≡ matrix` (row-major).
    pub fn constant(dim: usize, matrix: Vec<f64>, lambda1: f64) -> Self {
        assert_eq!(matrix.len(), dim * dim, "constant diffusion must be d×d");
        let m = matrix.clone();
        Self {
            dim,
            lambda1,
            name: "constant".into(),
            constant: Some(matrix),
            eval: Arc::new(move |_x, out| out.copy_from_slice(&m)),
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = 1.0;
        }
        Self::constant(dim, m, 1.0).named("identity")
    }

    pub fn diagonal(diag: &[f64], lambda1: f64) -> Self {
        let dim = diag.len();
        let mut m = vec![0.0; dim * dim];
        for (i, v) in diag.iter().enumerate() {
            m[i * dim + i] = *v;
        }
        Self::constant(dim, m, lambda1).named("diagonal")
    }

    /// `a(x) ≡ 0`; not elliptic, but useful for pure-jump and pure-drift runs.
    pub fn zero(dim: usize) -> Self {
        Self::constant(dim, vec![0.0; dim * dim], 1.0).named("zero")
    }

    /// Smooth SPD field in two dimensions: `R(θ(x)) diag(major, minor) R(θ(x))ᵀ`
    /// with `θ(x) = ω (x₁ + x₂)`.
    pub fn rotating_anisotropy(major: f64, minor: f64, omega: f64) -> Self {
        let lambda1 = minor.min(1.0 / major);
        Self::from_fn(2, lambda1, move |x, out| {
            let theta = omega * (x[0] + x[1]);
            let (s, c) = theta.sin_cos();
            out[0] = major * c * c + minor * s * s;
            out[1] = (major - minor) * c * s;
            out[2] = out[1];
            out[3] = major * s * s + minor * c * c;
        })
        .named("rotating-anisotropy")
    }

    pub fn from_fn(
        dim: usize,
        lambda1: f64,
        f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            lambda1,
            name: "custom".into(),
            constant: None,
            eval: Arc::new(f),
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn with_lambda1(mut self, lambda1: f64) -> Self {
        self.lambda1 = lambda1;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn constant_matrix(&self) -> Option<&[f64]> {
        self.constant.as_deref()
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.eval)(x, out)
    }

    pub fn matrix(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        self.eval(x, &mut out);
        out
    }
}

/// Drift field `b(x)` with uniform bound `Λ2`.
#[derive(Clone)]
pub struct DriftField {
    dim: usize,
    lambda2: f64,
    name: String,
    constant: Option<Vec<f64>>,
    eval: Arc<VectorFn>,
}

impl fmt::Debug for DriftField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("lambda2", &self.lambda2)
            .finish()
    }
}

impl DriftField {
    pub fn constant(b: Vec<f64>, lambda2: f64) -> Self {
        let v = b.clone();
        Self {
            dim: b.len(),
            lambda2,
            name: "constant-drift".into(),
            constant: Some(b),
            eval: Arc::new(move |_x, out| out.copy_from_slice(&v)),
        }
    }

    pub fn zero(dim: usize) -> Self {
        let mut f = Self::constant(vec![0.0; dim], 0.0);
        f.name = "zero-drift".into();
        f
    }

    pub fn from_fn(
        dim: usize,
        lambda2: f64,
        f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            lambda2,
            name: "custom".into(),
            constant: None,
            eval: Arc::new(f),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn with_lambda2(mut self, lambda2: f64) -> Self {
        self.lambda2 = lambda2;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn constant_vector(&self) -> Option<&[f64]> {
        self.constant.as_deref()
    }

    pub fn is_zero(&self) -> bool {
        self.constant
            .as_ref()
            .is_some_and(|b| b.iter().all(|v| *v == 0.0))
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.eval)(x, out)
    }
}

/// Comparability constants `(k, β)` bounding `k_r ≤ k r^(−β)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Comparability {
    pub k: f64,
    pub beta: f64,
}

/// Complete description of a generator.
#[derive(Clone, Debug)]
pub struct OperatorSpec {
    pub diffusion: DiffusionField,
    pub drift: DriftField,
    pub kernel: Arc<dyn JumpKernel>,
    /// Kernel mass bound `K`.
    pub mass_bound: f64,
    pub comparability: Option<Comparability>,
}

impl OperatorSpec {
    pub fn new(
        diffusion: DiffusionField,
        drift: DriftField,
        kernel: Arc<dyn JumpKernel>,
    ) -> Result<Self> {
        let d = diffusion.dim();
        if drift.dim() != d {
            return Err(Error::Dimension {
                expected: d,
                found: drift.dim(),
            });
        }
        if kernel.dim() != d {
            return Err(Error::Dimension {
                expected: d,
                found: kernel.dim(),
            });
        }
        Ok(Self {
            diffusion,
            drift,
            kernel,
            mass_bound: f64::INFINITY,
            comparability: None,
        })
    }

    /// Standard Brownian motion (`a = I`, `b = 0`, no jumps).
    pub fn brownian(dim: usize) -> Self {
        Self::new(
            DiffusionField::identity(dim),
            DriftField::zero(dim),
            Arc::new(crate::kernel::ZeroKernel::new(dim)),
        )
        .expect("dimensions agree")
    }

    pub fn with_mass_bound(mut self, k: f64) -> Self {
        self.mass_bound = k;
        self
    }

    pub fn with_comparability(mut self, k: f64, beta: f64) -> Self {
        self.comparability = Some(Comparability { k, beta });
        self
    }

    pub fn dim(&self) -> usize {
        self.diffusion.dim()
    }
}

/// Outcome of a sampled assumption check.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub check: &'static str,
    pub passed: bool,
    /// Check-specific extremal statistic (see each validator).
    pub worst: f64,
    pub witness_point: Option<Vec<f64>>,
    pub witness_direction: Option<Vec<f64>>,
    pub witness_coordinate: Option<usize>,
    pub detail: String,
}

const SYMMETRY_TOL: f64 = 1e-12;
const BOUND_SLACK: f64 = 1e-12;

/// Checks `Λ1 ≤ yᵀa(x)y ≤ Λ1⁻¹` over all sampled `(x, y)`.
///
/// `worst` is `max(Λ1 / q, q Λ1)` over the samples, where `q = yᵀa(x)y` for a
/// unit `y`; the check passes iff `worst ≤ 1`. The witness is the sample at
/// which `worst` is attained.
pub fn validate_ellipticity(
    field: &DiffusionField,
    points: &[Vec<f64>],
    directions: &[Vec<f64>],
) -> Result<ValidationReport> {
    if points.is_empty() || directions.is_empty() {
        return Err(Error::Precondition(
            "ellipticity check needs at least one point and one direction".into(),
        ));
    }
    let d = field.dim();
    let lambda1 = field.lambda1();
    if !(lambda1 > 0.0) {
        return Err(Error::Input(format!("Λ1 must be positive, got {lambda1}")));
    }
    let units: Vec<Vec<f64>> = directions
        .iter()
        .map(|y| {
            let n = linalg::norm(y);
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::Input(format!("direction {y:?} cannot be normalised")));
            }
            Ok(y.iter().map(|v| v / n).collect())
        })
        .collect::<Result<_>>()?;

    let mut a = vec![0.0; d * d];
    let mut worst = f64::NEG_INFINITY;
    let mut witness = (None, None);
    let (mut q_min, mut q_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in points {
        field.eval(x, &mut a);
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite diffusion matrix at {x:?}")));
        }
        let (defect, row, col) = linalg::symmetry_defect(&a, d);
        if defect > SYMMETRY_TOL * linalg::max_abs(&a).max(1.0) {
            return Err(Error::NonSymmetric {
                point: x.clone(),
                row,
                col,
                defect,
            });
        }
        for y in &units {
            let q = linalg::quadratic_form(&a, y);
            q_min = q_min.min(q);
            q_max = q_max.max(q);
            let score = if q <= 0.0 {
                f64::INFINITY
            } else {
                (lambda1 / q).max(q * lambda1)
            };
            if score > worst {
                worst = score;
                witness = (Some(x.clone()), Some(y.clone()));
            }
        }
    }
    let passed = worst <= 1.0 + BOUND_SLACK;
    Ok(ValidationReport {
        check: "ellipticity",
        passed,
        worst,
        witness_point: witness.0,
        witness_direction: witness.1,
        witness_coordinate: None,
        detail: format!(
            "quadratic form range [{q_min:.6e}, {q_max:.6e}] against [{:.6e}, {:.6e}]",
            lambda1,
            1.0 / lambda1
        ),
    })
}

/// Checks `max_i |b_i(x)| ≤ Λ2` over the sampled points. `worst` is the
/// largest coordinate magnitude seen; the witness coordinate is 1-based.
pub fn drift_bound_check(field: &DriftField, points: &[Vec<f64>]) -> Result<ValidationReport> {
    if points.is_empty() {
        return Err(Error::Precondition("drift check needs at least one point".into()));
    }
    let mut b = vec![0.0; field.dim()];
    let mut worst = 0.0_f64;
    let mut witness = (points[0].clone(), 1);
    for x in points {
        field.eval(x, &mut b);
        for (i, v) in b.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Input(format!(
                    "non-finite drift coordinate {} at {x:?}",
                    i + 1
                )));
            }
            if v.abs() > worst {
                worst = v.abs();
                witness = (x.clone(), i + 1);
            }
        }
    }
    let passed = worst <= field.lambda2() * (1.0 + BOUND_SLACK) + BOUND_SLACK;
    Ok(ValidationReport {
        check: "drift-bound",
        passed,
        worst,
        witness_point: Some(witness.0),
        witness_direction: None,
        witness_coordinate: Some(witness.1),
        detail: format!("max |b_i| = {worst:.6e} against Λ2 = {:.6e}", field.lambda2()),
    })
}

/// Lower-triangular `σ` with `σσᵀ = a`.
pub fn cholesky_factor(a: &[f64], dim: usize) -> Result<Vec<f64>> {
    linalg::cholesky(a, dim)
}

/// Built-in diffusion fields by name.
pub fn make_diffusion(name: &str, params: &Params, dim: usize, path: &str) -> Result<DiffusionField> {
    match name {
        "identity" => {
            params.check_known(&[], path)?;
            Ok(DiffusionField::identity(dim))
        }
        "diagonal" => {
            params.check_known(&["diag", "lambda1"], path)?;
            let diag = params
                .list("diag", path)?
                .ok_or_else(|| Error::config(format!("{path}.diag"), "required for diagonal"))?;
            if diag.len() != dim {
                return Err(Error::config(
                    format!("{path}.diag"),
                    format!("expected {dim} entries, found {}", diag.len()),
                ));
            }
            if diag.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::config(format!("{path}.diag"), "entries must be positive"));
            }
            let natural = diag
                .iter()
                .fold(f64::INFINITY, |m, v| m.min(*v).min(1.0 / v));
            let lambda1 = params.f64_or("lambda1", natural, path)?;
            Ok(DiffusionField::diagonal(&diag, lambda1))
        }
        "rotating-anisotropy" => {
            params.check_known(&["major", "minor", "omega"], path)?;
            if dim != 2 {
                return Err(Error::config(path, "rotating-anisotropy requires dim = 2"));
            }
            let major = params.f64_or("major", 2.0, path)?;
            let minor = params.f64_or("minor", 0.5, path)?;
            let omega = params.f64_or("omega", 1.0, path)?;
            if !(minor > 0.0 && major >= minor) {
                return Err(Error::config(path, "need 0 < minor ≤ major"));
            }
            Ok(DiffusionField::rotating_anisotropy(major, minor, omega))
        }
        _ => Err(Error::config(
            format!("{path}.name"),
            "unknown diffusion",
        )
        .with_hint(format!("got '{name}'; built-ins: {}", DIFFUSIONS.join(", ")))),
    }
}

pub const DIFFUSIONS: &[&str] = &["identity", "diagonal", "rotating-anisotropy"];
pub const DRIFTS: &[&str] = &["zero-drift", "constant-drift"];

pub fn make_drift(name: &str, params: &Params, dim: usize, path: &str) -> Result<DriftField> {
    match name {
        "zero-drift" => {
            params.check_known(&[], path)?;
            Ok(DriftField::zero(dim))
        }
        "constant-drift" => {
            params.check_known(&["b"], path)?;
            let b = params
                .list("b", path)?
                .ok_or_else(|| Error::config(format!("{path}.b"), "required for constant-drift"))?;
            if b.len() != dim {
                return Err(Error::config(
                    format!("{path}.b"),
                    format!("expected {dim} entries, found {}", b.len()),
                ));
            }
            let bound = b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            Ok(DriftField::constant(b, bound))
        }
        _ => Err(Error::config(
            format!("{path}.name"),
            "unknown drift",
        )
        .with_hint(format!("got '{name}'; built-ins: {}", DRIFTS.join(", ")))),
    }
}
