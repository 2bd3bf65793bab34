//! Second-kind Volterra equation R(t) = F(t) + ∫₀ᵗ G(t−s) R(s) ds.
//!
//! For the linearized Kuramoto order parameter G = (K/2)ĝ and F is the free
//! evolution of the initial perturbation.

use std::sync::Arc;

use serde::Serialize;

use crate::dispersion::DispersionFunction;
use crate::error::{Error, Result};
use crate::freqdist::{FrequencyDistribution, QuadratureGrid};
use crate::quad;
use crate::Complex64;

/// A complex time series given as a callable.
pub type Series = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;

#[derive(Clone)]
pub struct VolterraProblem {
    pub kernel: Series,
    pub input: Series,
    pub dt: f64,
    pub horizon: f64,
}

impl VolterraProblem {
    pub fn new(kernel: Series, input: Series, dt: f64, horizon: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0 && horizon.is_finite() && dt <= horizon) {
            return Err(Error::InvalidParameter(format!("need 0 < dt <= T, got dt={dt}, T={horizon}")));
        }
        Ok(Self { kernel, input, dt, horizon })
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps()).map(|j| j as f64 * self.dt).collect()
    }

    pub fn solve(&self) -> Result<VolterraSolution> {
        let times = self.times();
        let g: Vec<Complex64> = times.iter().map(|&t| (self.kernel)(t)).collect();
        let f: Vec<Complex64> = times.iter().map(|&t| (self.input)(t)).collect();
        let values = solve_samples(&g, &f, self.dt)?;
        Ok(VolterraSolution { times, values, scheme_order: 2 })
    }
}

/// Product trapezoidal marching on pre-sampled kernel and input:
/// R_j(1 − Δt/2·G_0) = F_j + Δt(½G_j R_0 + Σ_{0<i<j} G_{j−i} R_i).
pub fn solve_samples(kernel: &[Complex64], input: &[Complex64], dt: f64) -> Result<Vec<Complex64>> {
    if kernel.len() != input.len() || kernel.is_empty() {
        return Err(Error::InvalidParameter("kernel and input sample counts differ".into()));
    }
    let n = input.len();
    let diag = Complex64::new(1.0, 0.0) - kernel[0] * (0.5 * dt);
    if diag.norm() < 1e-12 {
        return Err(Error::StepSolveFailure { t: dt });
    }
    let mut r = Vec::with_capacity(n);
    r.push(input[0]);
    for j in 1..n {
        let mut acc = kernel[j] * r[0] * 0.5;
        for i in 1..j {
            acc += kernel[j - i] * r[i];
        }
        let value = (input[j] + acc * dt) / diag;
        if !value.re.is_finite() || !value.im.is_finite() {
            return Err(Error::StepSolveFailure { t: j as f64 * dt });
        }
        r.push(value);
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct VolterraSolution {
    pub times: Vec<f64>,
    pub values: Vec<Complex64>,
    pub scheme_order: u32,
}

impl VolterraSolution {
    /// max_j (1+t_j)ⁿ|R_j|.
    pub fn weighted_sup(&self, n: i32) -> f64 {
        self.weighted_sup_until(n, f64::INFINITY)
    }

    /// The same maximum restricted to t_j ≤ horizon.
    pub fn weighted_sup_until(&self, n: i32, horizon: f64) -> f64 {
        weighted_sup(&self.times, &self.values, n, horizon)
    }
}

pub fn weighted_sup(times: &[f64], values: &[Complex64], n: i32, horizon: f64) -> f64 {
    times
        .iter()
        .zip(values)
        .take_while(|(t, _)| **t <= horizon * (1.0 + 1e-12))
        .map(|(t, v)| (1.0 + t).powi(n) * v.norm())
        .fold(0.0, f64::max)
}

/// G(t) = (K/2)ĝ(t).
pub fn kuramoto_kernel(dist: &FrequencyDistribution, coupling: f64) -> Series {
    let dist = dist.clone();
    Arc::new(move |t| dist.fourier_transform(t) * (0.5 * coupling))
}

/// Linear-theory input F(t) = p̂₁(0, t).
pub fn linear_input_from_initial_data(p1hat0: Series) -> Series {
    p1hat0
}

/// p̂₁(0,t) = ∫ h(ω) g(ω) e^{−iωt} dω on a quadrature grid, for initial data
/// r(0,θ,ω) = (1/π) Re(h(ω) e^{iθ}).
pub fn p1hat_on_grid(grid: &QuadratureGrid, profile: impl Fn(f64) -> Complex64) -> Series {
    let terms: Vec<(f64, Complex64)> =
        grid.nodes().iter().zip(grid.weights()).map(|(&w, &q)| (w, profile(w) * q)).collect();
    Arc::new(move |t| terms.iter().map(|(w, c)| c * Complex64::new(0.0, -w * t).exp()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DecayFit {
    pub exponent: f64,
    pub amplitude: f64,
    pub fit_window: (f64, f64),
    pub residual: f64,
}

/// Least squares of log|R| against log t; exponent p is minus the slope.
/// The default window is [T/4, 0.9T].
pub fn fit_decay(times: &[f64], values: &[Complex64], window: Option<(f64, f64)>) -> Result<DecayFit> {
    let horizon = *times.last().ok_or_else(|| Error::InvalidParameter("empty solution".into()))?;
    let (ta, tb) = window.unwrap_or((0.25 * horizon, 0.9 * horizon));
    if !(ta > 0.0 && ta < tb && tb <= horizon * (1.0 + 1e-12)) {
        return Err(Error::InvalidParameter(format!("fit window [{ta}, {tb}] outside (0, {horizon}]")));
    }
    let mut pts = Vec::new();
    for (&t, v) in times.iter().zip(values) {
        if t >= ta && t <= tb {
            if v.norm() <= 1e-14 {
                return Err(Error::InvalidParameter(format!("|R| reaches the noise floor at t = {t}")));
            }
            pts.push((t.ln(), v.norm().ln()));
        }
    }
    if pts.len() < 3 {
        return Err(Error::InvalidParameter("fewer than three samples in fit window".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    if residual > 0.5 {
        return Err(Error::WindowTooNoisy { residual, exponent: -slope });
    }
    Ok(DecayFit { exponent: -slope, amplitude: intercept.exp(), fit_window: (ta, tb), residual })
}

impl VolterraSolution {
    pub fn fit_decay(&self, window: Option<(f64, f64)>) -> Result<DecayFit> {
        fit_decay(&self.times, &self.values, window)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StabilityConstant {
    /// Largest ratio over inputs and horizons.
    pub constant: f64,
    pub horizons: [f64; 3],
    /// ratios[input][horizon] = weightedSup_R / weightedSup_F.
    pub ratios: Vec<[f64; 3]>,
}

impl StabilityConstant {
    /// Largest ratio at T divided by the ratio at T/2.
    pub fn flatness(&self) -> f64 {
        self.ratios.iter().map(|r| r[2] / r[1]).fold(0.0, f64::max)
    }
}

/// Measures sup(1+t)ⁿ|R| / sup(1+t)ⁿ|F| at T/4, T/2 and T for each input.
pub fn empirical_stability_constant(
    dist: &FrequencyDistribution,
    coupling: f64,
    n: i32,
    inputs: &[Series],
    dt: f64,
    horizon: f64,
) -> Result<StabilityConstant> {
    let kernel = kuramoto_kernel(dist, coupling);
    let horizons = [0.25 * horizon, 0.5 * horizon, horizon];
    let mut ratios = Vec::with_capacity(inputs.len());
    for input in inputs {
        let sol = VolterraProblem::new(kernel.clone(), input.clone(), dt, horizon)?.solve()?;
        let f: Vec<Complex64> = sol.times.iter().map(|&t| input(t)).collect();
        let r = horizons.map(|h| sol.weighted_sup_until(n, h) / weighted_sup(&sol.times, &f, n, h));
        let growth = r[2] / r[0];
        if r[0] < r[1] && r[1] < r[2] && growth > 10.0 {
            return Err(Error::UnstableKernel { growth });
        }
        ratios.push(r);
    }
    let constant = ratios.iter().flat_map(|r| r.iter().copied()).fold(0.0, f64::max);
    Ok(StabilityConstant { constant, horizons, ratios })
}

/// Input whose solution grows exactly like A·e^{iω₀t}.
#[derive(Clone)]
pub struct InstabilityWitness {
    pub input: Series,
    pub root: Complex64,
    /// −Im ω₀.
    pub predicted_rate: f64,
    pub amplitude: Complex64,
    /// |A|·‖G‖_{L²}·‖e^{Im(ω₀)·}‖_{L²}, an a-priori bound on |F|.
    pub input_bound: f64,
}

/// F(t) = A ∫₀^∞ G(t+s) e^{−iω₀s} ds at the most unstable root ω₀.
pub fn instability_witness(
    dist: &FrequencyDistribution,
    coupling: f64,
    amplitude: Complex64,
) -> Result<InstabilityWitness> {
    if amplitude.norm() == 0.0 {
        return Err(Error::InvalidParameter("witness amplitude must be nonzero".into()));
    }
    let df = DispersionFunction::new(dist.clone(), coupling)?;
    let root = df.find_unstable_root()?.ok_or(Error::NoUnstableRoot)?;
    let rate = -root.im;
    let half_k = 0.5 * coupling;
    let reach = dist.fourier_horizon(1e-15 / half_k);
    let max_center = dist.parts().iter().map(|(_, f)| f.center().abs()).fold(0.0, f64::max);
    let panels = (reach * (1.0 + root.re.abs() + max_center + 1.0 / dist.min_scale())).ceil() as usize + 4;
    let kernel_l2 = half_k * quad::composite(0.0, reach, panels, |t| dist.fourier_transform(t).norm_sqr()).sqrt();
    let input_bound = amplitude.norm() * kernel_l2 / (2.0 * rate).sqrt();
    let dist = dist.clone();
    let minus_i_root = -Complex64::i() * root;
    let input: Series = Arc::new(move |t| {
        let integral: Complex64 = quad::composite(0.0, reach, panels, |s| {
            dist.fourier_transform(t + s) * (minus_i_root * s).exp()
        });
        integral * half_k * amplitude
    });
    Ok(InstabilityWitness { input, root, predicted_rate: rate, amplitude, input_bound })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(c: f64) -> Series {
        Arc::new(move |_| Complex64::new(c, 0.0))
    }

    #[test]
    fn zero_kernel_returns_input() {
        let input: Series = Arc::new(|t| Complex64::new(t.cos(), t));
        let sol = VolterraProblem::new(constant(0.0), input.clone(), 0.1, 5.0).unwrap().solve().unwrap();
        for (t, r) in sol.times.iter().zip(&sol.values) {
            assert_eq!(*r, input(*t));
        }
    }

    #[test]
    fn critical_cauchy_resolvent() {
        let kernel: Series = Arc::new(|t: f64| Complex64::new((-t).exp(), 0.0));
        let sol = VolterraProblem::new(kernel, constant(1.0), 0.01, 10.0).unwrap().solve().unwrap();
        let err = sol.times.iter().zip(&sol.values).map(|(t, r)| (r - (1.0 + t)).norm()).fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
        assert_eq!(sol.values[0], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn exponential_solution_from_constructed_input() {
        let dist = FrequencyDistribution::gaussian(1.0, 0.0).unwrap();
        let kernel = kuramoto_kernel(&dist, 1.3);
        let w0 = 0.7;
        let k2 = kernel.clone();
        let input: Series = Arc::new(move |t| {
            let int: Complex64 = quad::composite(0.0, t.max(1e-300), 40, |s| k2(s) * Complex64::new(0.0, -w0 * s).exp());
            Complex64::new(0.0, w0 * t).exp() * (Complex64::new(1.0, 0.0) - int)
        });
        let sol = VolterraProblem::new(kernel, input, 0.005, 8.0).unwrap().solve().unwrap();
        for (t, r) in sol.times.iter().zip(&sol.values) {
            assert!((r - Complex64::new(0.0, w0 * t).exp()).norm() < 1e-4);
        }
    }

    #[test]
    fn kernel_values() {
        let c = FrequencyDistribution::cauchy(1.0, 0.0).unwrap();
        assert_eq!(kuramoto_kernel(&c, 2.0)(0.0), Complex64::new(1.0, 0.0));
        assert!((kuramoto_kernel(&c, 2.0)(1.0).re - (-1.0f64).exp()).abs() < 1e-16);
        assert_eq!(kuramoto_kernel(&c, 0.0)(0.7), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn fit_recovers_power_law() {
        let times: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.25).collect();
        let values: Vec<Complex64> = times.iter().map(|t| Complex64::new((1.0 + t).powi(-4), 0.0)).collect();
        let fit = fit_decay(&times, &values, None).unwrap();
        assert_eq!(fit.fit_window, (125.0, 450.0));
        assert!((fit.exponent - 4.0).abs() < 0.05);
        let exp: Vec<Complex64> = times.iter().map(|t| Complex64::new((-t).exp(), 0.0)).collect();
        assert!(matches!(fit_decay(&times, &exp, Some((5.0, 20.0))), Err(Error::WindowTooNoisy { .. })));
        assert!(fit_decay(&times, &values, Some((0.0, 20.0))).is_err());
    }

    #[test]
    fn witness_requires_amplitude() {
        let c = FrequencyDistribution::cauchy(1.0, 0.0).unwrap();
        assert!(matches!(
            instability_witness(&c, 4.0, Complex64::new(0.0, 0.0)),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(instability_witness(&c, 1.0, Complex64::new(1.0, 0.0)), Err(Error::NoUnstableRoot)));
    }

    #[test]
    fn cauchy_witness_input_is_transform() {
        // Exponential ĝ factorizes: F = A·(K/2)J(ω₀)·ĝ(t) = A·ĝ(t).
        let c = FrequencyDistribution::cauchy(1.0, 0.0).unwrap();
        let w = instability_witness(&c, 4.0, Complex64::new(0.5, 0.0)).unwrap();
        assert!((w.predicted_rate - 1.0).abs() < 1e-9);
        for t in [0.0, 0.5, 2.0] {
            assert!(((w.input)(t) - c.fourier_transform(t) * 0.5).norm() < 1e-10);
        }
    }
}
