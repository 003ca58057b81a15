//! Compensated accumulation, confidence intervals, least-squares scaling
//! fits and Kolmogorov–Smirnov tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = Neumaier::default();
    xs.into_iter().for_each(|v| s.add(v));
    s.value()
}

/// Sample mean and unbiased variance by two compensated passes.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = sum(xs.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = sum(xs.iter().map(|v| (v - mean) * (v - mean)));
    (mean, ss / (n - 1) as f64)
}

/// Sample covariance of paired samples.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let (mx, _) = mean_var(xs);
    let (my, _) = mean_var(ys);
    sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my))) / (n - 1) as f64
}

/// Two-sided standard normal quantile for confidence `level`.
pub fn z_multiplier(level: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(1.0 - 0.5 * (1.0 - level))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalKind {
    Normal,
    ClopperPearson,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub first_stream: u64,
    pub streams: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
    pub level: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub interval: IntervalKind,
    pub provenance: Option<Provenance>,
}

/// Below this many successes or failures binomial intervals are exact.
pub const EXACT_BINOMIAL_BELOW: u64 = 50;

impl Estimate {
    pub fn from_mean(value: f64, stderr: f64, n: u64, level: f64) -> Self {
        let half = z_multiplier(level) * stderr;
        Self {
            value,
            stderr,
            n,
            level,
            ci_low: value - half,
            ci_high: value + half,
            interval: IntervalKind::Normal,
            provenance: None,
        }
    }

    pub fn from_samples(xs: &[f64], level: f64) -> Self {
        let (m, v) = mean_var(xs);
        let n = xs.len();
        Self::from_mean(m, (v / n as f64).sqrt(), n as u64, level)
    }

    /// Proportion `k / n`; Clopper–Pearson when `min(k, n − k) < 50`.
    pub fn from_binomial(k: u64, n: u64, level: f64) -> Self {
        let p = k as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        if k.min(n - k) >= EXACT_BINOMIAL_BELOW {
            return Self::from_mean(p, se, n, level);
        }
        let (lo, hi) = clopper_pearson(k, n, level);
        Self {
            value: p,
            stderr: se,
            n,
            level,
            ci_low: lo,
            ci_high: hi,
            interval: IntervalKind::ClopperPearson,
            provenance: None,
        }
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance = Some(p);
        self
    }

    pub fn contains(&self, v: f64) -> bool {
        self.ci_low <= v && v <= self.ci_high
    }

    pub fn overlaps(&self, other: &Estimate) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

pub fn clopper_pearson(k: u64, n: u64, level: f64) -> (f64, f64) {
    let a = 1.0 - level;
    let lo = if k == 0 {
        0.0
    } else {
        Beta::new(k as f64, (n - k + 1) as f64)
            .expect("positive shape")
            .inverse_cdf(0.5 * a)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new((k + 1) as f64, (n - k) as f64)
            .expect("positive shape")
            .inverse_cdf(1.0 - 0.5 * a)
    };
    (lo, hi)
}

/// Ratio of two positive estimates with a log-scale delta-method interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub value: f64,
    /// Standard error of `ln(value)`.
    pub log_stderr: f64,
    pub level: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl RatioEstimate {
    /// `num / den`; `cov` is the covariance of the two point estimates
    /// (zero for independent samples).
    pub fn new(num: &Estimate, den: &Estimate, cov: f64, level: f64) -> Result<Self> {
        if !(num.value > 0.0 && den.value > 0.0) {
            return Err(Error::Numerical(format!(
                "ratio needs positive estimates, got {} / {}",
                num.value, den.value
            )));
        }
        let rn = num.stderr / num.value;
        let rd = den.stderr / den.value;
        let var = rn * rn + rd * rd - 2.0 * cov / (num.value * den.value);
        let se = var.max(0.0).sqrt();
        let value = num.value / den.value;
        let z = z_multiplier(level);
        Ok(Self {
            value,
            log_stderr: se,
            level,
            ci_low: value * (-z * se).exp(),
            ci_high: value * (z * se).exp(),
        })
    }
}

/// Ordinary least squares of `ln y` on `ln x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub abscissae: Vec<f64>,
    pub ordinates: Vec<f64>,
    pub exponent: f64,
    pub prefactor: f64,
    /// Euclidean norm of the log-scale residuals.
    pub residual: f64,
}

impl ScalingFit {
    pub fn fit(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::Fit(format!(
                "need at least two paired points, got {} and {}",
                xs.len(),
                ys.len()
            )));
        }
        if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Fit("log-log fit needs positive finite data".into()));
        }
        let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
        let n = lx.len() as f64;
        let mx = sum(lx.iter().copied()) / n;
        let my = sum(ly.iter().copied()) / n;
        let sxx = sum(lx.iter().map(|x| (x - mx) * (x - mx)));
        if !(sxx > 0.0) {
            return Err(Error::Fit("abscissae are all equal".into()));
        }
        let sxy = sum(lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)));
        let slope = sxy / sxx;
        let icpt = my - slope * mx;
        let residual = sum(lx.iter().zip(&ly).map(|(x, y)| (y - icpt - slope * x).powi(2))).sqrt();
        Ok(Self {
            abscissae: xs.to_vec(),
            ordinates: ys.to_vec(),
            exponent: slope,
            prefactor: icpt.exp(),
            residual,
        })
    }
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let (a, b) = (sorted(a), sorted(b));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_q((en + 0.12 + 0.11 / en) * d),
    }
}

pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let v = sorted(xs);
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in v.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let en = n.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_q((en + 0.12 + 0.11 / en) * d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(sum(xs), 2.0);
    }

    #[test]
    fn normal_quantiles() {
        assert!((z_multiplier(0.99) - 2.5758293035489).abs() < 1e-9);
        assert!((z_multiplier(0.95) - 1.9599639845401).abs() < 1e-9);
    }

    #[test]
    fn clopper_pearson_edges() {
        let (lo, hi) = clopper_pearson(0, 100, 0.99);
        assert_eq!(lo, 0.0);
        // Exact upper limit for k = 0: 1 − (α/2)^(1/n).
        assert!((hi - (1.0 - 0.005f64.powf(0.01))).abs() < 1e-9);
        let e = Estimate::from_binomial(3, 1000, 0.99);
        assert_eq!(e.interval, IntervalKind::ClopperPearson);
        assert!(e.contains(e.value));
        let e = Estimate::from_binomial(500, 1000, 0.99);
        assert_eq!(e.interval, IntervalKind::Normal);
    }

    #[test]
    fn interval_is_z_times_stderr() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0], 0.99);
        assert!(((e.ci_high - e.value) - z_multiplier(0.99) * e.stderr).abs() < 1e-14);
    }

    #[test]
    fn scaling_fit_recovers_power_law() {
        let xs = [0.125, 0.25, 0.5];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x * x).collect();
        let f = ScalingFit::fit(&xs, &ys).unwrap();
        assert!((f.exponent - 2.0).abs() < 1e-12 && (f.prefactor - 0.5).abs() < 1e-12);
        assert!(ScalingFit::fit(&[1.0], &[1.0]).is_err());
        assert!(ScalingFit::fit(&[1.0, 2.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn kolmogorov_values() {
        // Q(1.36) ≈ 0.049 and Q(1.63) ≈ 0.0098.
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_q(1.63) - 0.0098).abs() < 5e-4);
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(ks_two_sample(&a, &a).statistic, 0.0);
        let r = ks_one_sample(&[0.5], |x| x);
        assert!((r.statistic - 0.5).abs() < 1e-15);
    }
}
