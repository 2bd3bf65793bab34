//! Frequency densities g(ω).
//!
//! Every other module consumes a [`FrequencyDistribution`]: pointwise values
//! and derivatives of g, its Fourier transform
//!
//! ```text
//! ĝ(τ) = ∫ g(ω) e^{−iτω} dω
//! ```
//!
//! (the one convention used throughout the crate), Fourier moments, weighted
//! Sobolev norms and quadrature grids adapted to g.
//!
//! Supported families are Cauchy (Lorentzian), Gaussian and finite mixtures of
//! the two. All of them have a transform with exponential decay.

mod grid;

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use errorfunctions::ComplexErrorFunctions;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::quad;

pub use grid::{build_grid, QuadratureGrid};

/// Highest derivative order with a closed form.
pub const MAX_DERIVATIVE_ORDER: usize = 8;

/// A single, non-mixture density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// g(ω) = Δ / (π((ω−ω₀)² + Δ²))
    Cauchy { delta: f64, center: f64 },
    /// g(ω) = exp(−(ω−μ)²/2σ²) / (σ√(2π))
    Gaussian { sigma: f64, center: f64 },
}

impl Family {
    fn validate(&self) -> Result<()> {
        let (scale, center, name) = match *self {
            Family::Cauchy { delta, center } => (delta, center, "delta"),
            Family::Gaussian { sigma, center } => (sigma, center, "sigma"),
        };
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidDistribution(format!("{name} must be positive, got {scale}")));
        }
        if !center.is_finite() {
            return Err(Error::InvalidDistribution(format!("center must be finite, got {center}")));
        }
        Ok(())
    }

    pub fn center(&self) -> f64 {
        match *self {
            Family::Cauchy { center, .. } | Family::Gaussian { center, .. } => center,
        }
    }

    /// Δ for Cauchy, σ for Gaussian.
    pub fn scale(&self) -> f64 {
        match *self {
            Family::Cauchy { delta, .. } => delta,
            Family::Gaussian { sigma, .. } => sigma,
        }
    }

    pub fn density(&self, omega: f64) -> f64 {
        match *self {
            Family::Cauchy { delta, center } => {
                let x = omega - center;
                delta / (PI * (x * x + delta * delta))
            }
            Family::Gaussian { sigma, center } => {
                let u = (omega - center) / sigma;
                (-0.5 * u * u).exp() / (sigma * (2.0 * PI).sqrt())
            }
        }
    }

    /// k-th derivative; Cauchy through partial fractions, Gaussian through
    /// probabilists' Hermite polynomials.
    pub fn derivative(&self, omega: f64, k: usize) -> f64 {
        match *self {
            Family::Cauchy { delta, center } => {
                // g = Im[1/(x − iΔ)]/π, so g^(k) = (−1)^k k! Im[(x − iΔ)^{−k−1}]/π.
                let inv = Complex64::new(omega - center, -delta).inv();
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * factorial(k) * inv.powi(k as i32 + 1).im / PI
            }
            Family::Gaussian { sigma, center } => {
                let u = (omega - center) / sigma;
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * hermite_he(k, u) * self.density(omega) / sigma.powi(k as i32)
            }
        }
    }

    pub fn fourier(&self, t: f64) -> Complex64 {
        match *self {
            Family::Cauchy { delta, center } => Complex64::new(-delta * t.abs(), -center * t).exp(),
            Family::Gaussian { sigma, center } => {
                Complex64::new(-0.5 * sigma * sigma * t * t, -center * t).exp()
            }
        }
    }

    /// Upper bound of |ĝ(s)| for s ≥ t.
    fn fourier_envelope(&self, t: f64) -> f64 {
        self.fourier(t).norm()
    }

    /// Upper bound of ∫_T^∞ |ĝ(t)| dt.
    fn fourier_tail(&self, horizon: f64) -> f64 {
        match *self {
            Family::Cauchy { delta, .. } => (-delta * horizon).exp() / delta,
            Family::Gaussian { sigma, .. } => {
                let e = (-0.5 * sigma * sigma * horizon * horizon).exp();
                let by_mills = if horizon > 0.0 { 1.0 / (sigma * sigma * horizon) } else { f64::INFINITY };
                e * by_mills.min((PI / 2.0).sqrt() / sigma)
            }
        }
    }

    /// ∫₀^∞ ĝ(t) e^{−izt} dt, analytic in z (valid on the closed lower
    /// half-plane and continued beyond it).
    pub fn laplace(&self, z: Complex64) -> Complex64 {
        match *self {
            Family::Cauchy { delta, center } => {
                (Complex64::new(delta, 0.0) + Complex64::i() * (z + center)).inv()
            }
            Family::Gaussian { sigma, center } => {
                let zeta = -(z + center) * (FRAC_1_SQRT_2 / sigma);
                zeta.w() * ((PI / 2.0).sqrt() / sigma)
            }
        }
    }

    pub fn cdf(&self, omega: f64) -> f64 {
        match *self {
            Family::Cauchy { delta, center } => 0.5 + ((omega - center) / delta).atan() / PI,
            Family::Gaussian { sigma, center } => normal(sigma, center).cdf(omega),
        }
    }

    /// Upper-tail probability 1 − F(ω), computed without cancellation.
    pub fn sf(&self, omega: f64) -> f64 {
        match *self {
            Family::Cauchy { delta, center } => {
                let x = (omega - center) / delta;
                if x > 0.0 {
                    (1.0 / x).atan() / PI
                } else {
                    0.5 - x.atan() / PI
                }
            }
            Family::Gaussian { sigma, center } => normal(sigma, center).sf(omega),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            Family::Cauchy { delta, center } => {
                if p < 0.5 {
                    center - delta / (PI * p).tan()
                } else {
                    center + delta / (PI * (1.0 - p)).tan()
                }
            }
            Family::Gaussian { sigma, center } => normal(sigma, center).inverse_cdf(p),
        }
    }

    fn heavy_tailed(&self) -> bool {
        matches!(self, Family::Cauchy { .. })
    }
}

fn normal(sigma: f64, center: f64) -> Normal {
    Normal::new(center, sigma).expect("validated parameters")
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Probabilists' Hermite polynomial He_k(u).
fn hermite_he(k: usize, u: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, u);
    if k == 0 {
        return prev;
    }
    for n in 1..k {
        let next = u * cur - n as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// A validated frequency density: a single family or a finite mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyDistribution {
    parts: Vec<(f64, Family)>,
    mixture: bool,
}

/// Sobolev norm together with an estimate of the tail truncation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SobolevNorm {
    pub value: f64,
    pub truncation_error: f64,
}

impl FrequencyDistribution {
    pub fn cauchy(delta: f64, center: f64) -> Result<Self> {
        Self::single(Family::Cauchy { delta, center })
    }

    pub fn gaussian(sigma: f64, center: f64) -> Result<Self> {
        Self::single(Family::Gaussian { sigma, center })
    }

    pub fn single(family: Family) -> Result<Self> {
        family.validate()?;
        Ok(Self { parts: vec![(1.0, family)], mixture: false })
    }

    /// Weighted mixture; weights must be positive and sum to one within 1e-12.
    pub fn mixture(weights: &[f64], components: &[Family]) -> Result<Self> {
        if weights.len() != components.len() || weights.is_empty() {
            return Err(Error::InvalidDistribution(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidDistribution(format!("mixture weight {w} is not positive")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("mixture weights sum to {total}")));
        }
        for c in components {
            c.validate()?;
        }
        Ok(Self { parts: weights.iter().copied().zip(components.iter().copied()).collect(), mixture: true })
    }

    /// ½(g_Δ(·+ω₀) + g_Δ(·−ω₀)).
    pub fn bi_cauchy(delta: f64, separation: f64) -> Result<Self> {
        Self::asymmetric_bi_cauchy(0.5, delta, separation)
    }

    /// α g_Δ(·+ω₀) + (1−α) g_Δ(·−ω₀) for α ∈ (0, 1).
    pub fn asymmetric_bi_cauchy(alpha: f64, delta: f64, separation: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidDistribution(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Self::mixture(
            &[alpha, 1.0 - alpha],
            &[
                Family::Cauchy { delta, center: -separation },
                Family::Cauchy { delta, center: separation },
            ],
        )
    }

    pub fn parts(&self) -> &[(f64, Family)] {
        &self.parts
    }

    pub fn is_mixture(&self) -> bool {
        self.mixture
    }

    pub fn is_heavy_tailed(&self) -> bool {
        self.parts.iter().any(|(_, f)| f.heavy_tailed())
    }

    /// Smallest component scale.
    pub fn min_scale(&self) -> f64 {
        self.parts.iter().map(|(_, f)| f.scale()).fold(f64::INFINITY, f64::min)
    }

    pub fn density(&self, omega: f64) -> f64 {
        self.parts.iter().map(|(w, f)| w * f.density(omega)).sum()
    }

    pub fn density_derivative(&self, omega: f64, order: usize) -> Result<f64> {
        if order > MAX_DERIVATIVE_ORDER {
            return Err(Error::UnsupportedOrder { order, max: MAX_DERIVATIVE_ORDER });
        }
        Ok(self.parts.iter().map(|(w, f)| w * f.derivative(omega, order)).sum())
    }

    pub fn fourier_transform(&self, t: f64) -> Complex64 {
        if t == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        self.parts.iter().map(|(w, f)| f.fourier(t) * *w).sum()
    }

    /// Σ α_i |ĝ_i(t)|, an upper bound for |ĝ(s)|, s ≥ t.
    pub fn fourier_envelope(&self, t: f64) -> f64 {
        self.parts.iter().map(|(w, f)| w * f.fourier_envelope(t)).sum()
    }

    /// Upper bound of ∫_T^∞ |ĝ(t)| dt.
    pub fn fourier_tail_bound(&self, horizon: f64) -> f64 {
        self.parts.iter().map(|(w, f)| w * f.fourier_tail(horizon)).sum()
    }

    /// Smallest T with ∫_T^∞ |ĝ| ≤ tol (to bisection accuracy).
    pub fn fourier_horizon(&self, tol: f64) -> f64 {
        let mut hi = 1.0 / self.min_scale();
        while self.fourier_tail_bound(hi) > tol {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.fourier_tail_bound(mid) > tol {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// ∫₀^∞ ĝ(t) e^{−izt} dt in closed form.
    pub fn laplace(&self, z: Complex64) -> Complex64 {
        self.parts.iter().map(|(w, f)| f.laplace(z) * *w).sum()
    }

    /// ∫₀^∞ tⁿ |ĝ(t)| dt. Closed form for single families, adaptive
    /// quadrature for mixtures (where |ĝ| does not split).
    pub fn fourier_moment(&self, n: u32) -> Result<f64> {
        if let [(_, family)] = self.parts.as_slice() {
            let s = family.scale();
            let nf = n as f64;
            return Ok(match family {
                Family::Cauchy { .. } => factorial(n as usize) / s.powi(n as i32 + 1),
                Family::Gaussian { .. } => {
                    2f64.powf((nf - 1.0) / 2.0) * statrs::function::gamma::gamma((nf + 1.0) / 2.0)
                        / s.powi(n as i32 + 1)
                }
            });
        }
        // Past T the integrand is dominated by tⁿ·envelope, which is
        // monotone once t exceeds n/scale.
        let s = self.min_scale();
        let mut horizon = (n as f64 + 1.0) / s;
        let tail = |t: f64| t.powi(n as i32 + 1) * self.fourier_envelope(t);
        while tail(horizon) > 1e-16 {
            horizon *= 1.5;
            if !horizon.is_finite() {
                return Err(Error::Divergent("Fourier moment tail does not decay".into()));
            }
        }
        let f = |t: f64| t.powi(n as i32) * self.fourier_transform(t).norm();
        quad::adaptive(f, 0.0, horizon, 1e-12)
    }

    /// ‖g‖_{H^n}, see [`FrequencyDistribution::sobolev_norm_report`].
    pub fn sobolev_norm(&self, n: usize) -> Result<f64> {
        Ok(self.sobolev_norm_report(n)?.value)
    }

    /// ‖g‖²_{H^n} = Σ_{k≤n} ‖⟨ω⟩ g^{(k)}‖²_{L²} by composite quadrature over a
    /// fine grid; the report carries a bound on the truncated tails.
    pub fn sobolev_norm_report(&self, n: usize) -> Result<SobolevNorm> {
        if n > MAX_DERIVATIVE_ORDER {
            return Err(Error::UnsupportedOrder { order: n, max: MAX_DERIVATIVE_ORDER });
        }
        let grid = build_grid(self, 4096, 1.0 - 1e-12)?;
        let integrand = |omega: f64| -> f64 {
            (0..=n)
                .map(|k| {
                    let d: f64 = self.parts.iter().map(|(w, f)| w * f.derivative(omega, k)).sum();
                    (1.0 + omega * omega) * d * d
                })
                .sum()
        };
        let sq: f64 = grid
            .nodes()
            .iter()
            .zip(grid.bare_weights())
            .map(|(&omega, &w)| w * integrand(omega))
            .sum();
        let (lo, hi) = grid.interval();
        // Tails decay at least like ω⁻²; f(L)·L bounds their integral.
        let truncation_error = integrand(lo) * lo.abs().max(1.0) + integrand(hi) * hi.abs().max(1.0);
        Ok(SobolevNorm { value: sq.sqrt(), truncation_error: truncation_error / (2.0 * sq.sqrt()) })
    }

    pub fn cdf(&self, omega: f64) -> f64 {
        self.parts.iter().map(|(w, f)| w * f.cdf(omega)).sum()
    }

    pub fn sf(&self, omega: f64) -> f64 {
        self.parts.iter().map(|(w, f)| w * f.sf(omega)).sum()
    }

    /// Inverse CDF. Mixtures are inverted by bisection between the extreme
    /// component quantiles, using the upper tail in the upper half.
    pub fn quantile(&self, p: f64) -> f64 {
        if let [(_, family)] = self.parts.as_slice() {
            return family.quantile(p);
        }
        let qs = self.parts.iter().map(|(_, f)| f.quantile(p));
        let mut lo = qs.clone().fold(f64::INFINITY, f64::min);
        let mut hi = qs.fold(f64::NEG_INFINITY, f64::max);
        let upper = p > 0.5;
        let target = if upper { 1.0 - p } else { p };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let below = if upper { self.sf(mid) > target } else { self.cdf(mid) < target };
            if below {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// JSON form of a distribution: `{"family": "cauchy", "delta": 1.0}` etc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum DistributionSpec {
    Cauchy {
        delta: f64,
        #[serde(default)]
        center: f64,
    },
    Gaussian {
        sigma: f64,
        #[serde(default)]
        center: f64,
    },
    Mixture {
        weights: Vec<f64>,
        components: Vec<ComponentSpec>,
    },
    /// α g_Δ(·+ω₀) + (1−α) g_Δ(·−ω₀); α defaults to ½.
    Bicauchy {
        delta: f64,
        separation: f64,
        #[serde(default = "half")]
        alpha: f64,
    },
}

fn half() -> f64 {
    0.5
}

/// Mixture component; nesting mixtures is not allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum ComponentSpec {
    Cauchy {
        delta: f64,
        #[serde(default)]
        center: f64,
    },
    Gaussian {
        sigma: f64,
        #[serde(default)]
        center: f64,
    },
}

impl From<ComponentSpec> for Family {
    fn from(c: ComponentSpec) -> Self {
        match c {
            ComponentSpec::Cauchy { delta, center } => Family::Cauchy { delta, center },
            ComponentSpec::Gaussian { sigma, center } => Family::Gaussian { sigma, center },
        }
    }
}

impl From<Family> for ComponentSpec {
    fn from(f: Family) -> Self {
        match f {
            Family::Cauchy { delta, center } => ComponentSpec::Cauchy { delta, center },
            Family::Gaussian { sigma, center } => ComponentSpec::Gaussian { sigma, center },
        }
    }
}

impl TryFrom<DistributionSpec> for FrequencyDistribution {
    type Error = Error;

    fn try_from(spec: DistributionSpec) -> Result<Self> {
        match spec {
            DistributionSpec::Cauchy { delta, center } => Self::cauchy(delta, center),
            DistributionSpec::Gaussian { sigma, center } => Self::gaussian(sigma, center),
            DistributionSpec::Mixture { weights, components } => {
                let comps: Vec<Family> = components.into_iter().map(Family::from).collect();
                Self::mixture(&weights, &comps)
            }
            DistributionSpec::Bicauchy { delta, separation, alpha } => {
                Self::asymmetric_bi_cauchy(alpha, delta, separation)
            }
        }
    }
}

impl From<&FrequencyDistribution> for DistributionSpec {
    fn from(d: &FrequencyDistribution) -> Self {
        match (d.mixture, d.parts.as_slice()) {
            (false, [(_, Family::Cauchy { delta, center })]) => {
                DistributionSpec::Cauchy { delta: *delta, center: *center }
            }
            (false, [(_, Family::Gaussian { sigma, center })]) => {
                DistributionSpec::Gaussian { sigma: *sigma, center: *center }
            }
            _ => DistributionSpec::Mixture {
                weights: d.parts.iter().map(|p| p.0).collect(),
                components: d.parts.iter().map(|p| p.1.into()).collect(),
            },
        }
    }
}

impl Serialize for FrequencyDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DistributionSpec::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for FrequencyDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = DistributionSpec::deserialize(d)?;
        FrequencyDistribution::try_from(spec).map_err(serde::de::Error::custom)
    }
}
