//! The dispersion function D(ω) = 1 − (K/2) ∫₀^∞ ĝ(t) e^{−iωt} dt on the
//! closed lower half-plane, and the stability tests built on it.
//!
//! D is affine in K: D = 1 − (K/2)·J(ω). Zeros of D in the open lower
//! half-plane are linear instabilities; their number equals the winding
//! number of the real-line image of D around the origin.

use std::f64::consts::PI;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::freqdist::FrequencyDistribution;
use crate::quad;
use crate::Complex64;

/// Tail tolerance for the truncated Laplace integral.
const LAPLACE_TAIL: f64 = 1e-12;
/// Allowed disagreement between the Laplace and Hilbert boundary forms.
pub const CROSS_CHECK_TOL: f64 = 1e-6;
/// |D(ω₀)| required of a reported root.
pub const ROOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct DispersionFunction {
    dist: FrequencyDistribution,
    coupling: f64,
    laplace_horizon: f64,
}

impl DispersionFunction {
    pub fn new(dist: FrequencyDistribution, coupling: f64) -> Result<Self> {
        if !(coupling.is_finite() && coupling >= 0.0) {
            return Err(Error::InvalidParameter(format!("coupling must be nonnegative, got {coupling}")));
        }
        let laplace_horizon =
            if coupling > 0.0 { dist.fourier_horizon(LAPLACE_TAIL / (0.5 * coupling)) } else { 0.0 };
        Ok(Self { dist, coupling, laplace_horizon })
    }

    pub fn distribution(&self) -> &FrequencyDistribution {
        &self.dist
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    /// T_L with (K/2)∫_{T_L}^∞|ĝ| ≤ 1e-12.
    pub fn laplace_horizon(&self) -> f64 {
        self.laplace_horizon
    }

    /// D(ω) from the closed-form transform.
    pub fn evaluate(&self, omega: Complex64) -> Result<Complex64> {
        check_domain(omega)?;
        Ok(self.continued(omega))
    }

    /// The analytic expression without the domain check; used by the root
    /// finder, whose iterates may step briefly above the real axis.
    fn continued(&self, omega: Complex64) -> Complex64 {
        Complex64::new(1.0, 0.0) - self.dist.laplace(omega) * (0.5 * self.coupling)
    }

    /// D(ω) by Gauss–Legendre quadrature of the truncated Laplace integral.
    pub fn evaluate_quadrature(&self, omega: Complex64) -> Result<Complex64> {
        check_domain(omega)?;
        if self.coupling == 0.0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let max_center = self.dist.parts().iter().map(|(_, f)| f.center().abs()).fold(0.0, f64::max);
        let rate = 1.0 + omega.re.abs() + max_center + 1.0 / self.dist.min_scale();
        let panels = (self.laplace_horizon * rate).ceil() as usize + 4;
        let minus_i_omega = -Complex64::i() * omega;
        let j: Complex64 = quad::composite(0.0, self.laplace_horizon, panels, |t| {
            self.dist.fourier_transform(t) * (minus_i_omega * t).exp()
        });
        Ok(Complex64::new(1.0, 0.0) - j * (0.5 * self.coupling))
    }

    /// Real-axis values by both the Laplace quadrature and the boundary
    /// identity J(ω) = πg(−ω) + iH(−ω), H the Hilbert-type σ-integral.
    pub fn boundary_values(&self, omegas: &[f64]) -> Result<Vec<BoundaryValue>> {
        omegas
            .iter()
            .map(|&omega| {
                let laplace = self.evaluate_quadrature(Complex64::new(omega, 0.0))?;
                let j = Complex64::new(PI * self.dist.density(-omega), hilbert_integral(&self.dist, -omega)?);
                let hilbert = Complex64::new(1.0, 0.0) - j * (0.5 * self.coupling);
                let discrepancy = (laplace - hilbert).norm();
                if discrepancy > CROSS_CHECK_TOL {
                    return Err(Error::CrossCheckFailure { omega, discrepancy });
                }
                Ok(BoundaryValue { omega, laplace, hilbert })
            })
            .collect()
    }

    /// Number of zeros of D in the open lower half-plane, as the index of 0
    /// with respect to {D(ω) : ω ∈ ℝ̄}.
    pub fn winding_number(&self, params: &ContourParams) -> Result<WindingResult> {
        let scale = params.scale.unwrap_or_else(|| natural_scale(&self.dist));
        // ω = scale·tan(πu/2), u ∈ [−1, 1]; D(±∞) = 1.
        let eval = |u: f64| -> Complex64 {
            if u.abs() >= 1.0 {
                Complex64::new(1.0, 0.0)
            } else {
                self.continued(Complex64::new(scale * (0.5 * PI * u).tan(), 0.0))
            }
        };
        let n0 = params.initial_points.max(8);
        let mut pts: Vec<(f64, Complex64)> =
            (0..=n0).map(|i| -1.0 + 2.0 * i as f64 / n0 as f64).map(|u| (u, eval(u))).collect();
        let mut min_abs = pts.iter().map(|p| p.1.norm()).fold(f64::INFINITY, f64::min);

        // Refine until each image step turns by < π/2 and is short relative to
        // the distance of the curve from the origin.
        let mut out: Vec<(f64, Complex64)> = Vec::with_capacity(pts.len() * 2);
        let mut total_arg = 0.0;
        let mut max_step: f64 = 0.0;
        let mut stack: Vec<(f64, Complex64)> = Vec::new();
        pts.reverse();
        let mut cur = pts.pop().expect("nonempty");
        out.push(cur);
        while let Some(next) = pts.pop() {
            stack.push(next);
            while let Some(&target) = stack.last() {
                if min_abs < params.marginal_tol {
                    return Err(Error::MarginalError { min_abs });
                }
                let step = (target.1 - cur.1).norm();
                let turn = (target.1 / cur.1).arg();
                let width = target.0 - cur.0;
                if turn.abs() < 0.5 * PI && step <= 0.1 * min_abs {
                    total_arg += turn;
                    max_step = max_step.max(step);
                    cur = target;
                    out.push(cur);
                    stack.pop();
                } else if width < 1e-15 || out.len() + stack.len() > params.max_points {
                    return Err(Error::MarginalError { min_abs });
                } else {
                    let mid = 0.5 * (cur.0 + target.0);
                    let d = eval(mid);
                    min_abs = min_abs.min(d.norm());
                    stack.push((mid, d));
                }
            }
        }
        let winding = -(total_arg / (2.0 * PI)).round();
        Ok(WindingResult {
            winding_number: winding.max(0.0) as u32,
            raw_winding: winding as i64,
            min_abs_d: min_abs,
            points: out.len(),
            max_image_step: max_step,
        })
    }

    /// Every converged zero of D with Im ω < 0, most unstable first.
    pub fn find_unstable_roots(&self) -> Result<Vec<Complex64>> {
        if self.coupling == 0.0 {
            return Ok(Vec::new());
        }
        let scale = self.dist.min_scale();
        let mut seeds = Vec::new();
        for omega_star in hilbert_zeros(&self.dist)? {
            let x = -omega_star;
            let d0 = self.continued(Complex64::new(x, 0.0));
            if d0.re < 0.0 {
                for depth in [0.001, 0.01, 0.1, 0.5, 1.0, 2.0, 4.0] {
                    seeds.push(Complex64::new(x, -depth * scale));
                }
            }
        }
        // Generic seeds for roots not tied to a boundary crossing.
        let span = natural_scale(&self.dist);
        for i in -4..=4 {
            for depth in [0.1, 1.0, 3.0] {
                seeds.push(Complex64::new(0.5 * span * i as f64, -depth * span));
            }
        }
        let mut roots: Vec<Complex64> = Vec::new();
        let mut best_residual = f64::INFINITY;
        for seed in seeds {
            match self.newton(seed) {
                Ok(z) if z.im < 0.0 => {
                    if roots.iter().all(|r| (r - z).norm() > 1e-7 * (1.0 + z.norm())) {
                        roots.push(z);
                    }
                }
                Ok(_) => {}
                Err(Error::RootNotConverged { residual }) => best_residual = best_residual.min(residual),
                Err(e) => return Err(e),
            }
        }
        if roots.is_empty() && best_residual.is_finite() && self.winding_number(&ContourParams::default())?.winding_number > 0 {
            return Err(Error::RootNotConverged { residual: best_residual });
        }
        roots.sort_by(|a, b| a.im.total_cmp(&b.im));
        Ok(roots)
    }

    /// The most unstable root, or `None` when D has no zero in Π⁻.
    pub fn find_unstable_root(&self) -> Result<Option<Complex64>> {
        Ok(self.find_unstable_roots()?.into_iter().next())
    }

    /// Damped Newton on (Re D, Im D) with a central-difference Jacobian.
    fn newton(&self, seed: Complex64) -> Result<Complex64> {
        const H: f64 = 1e-6;
        let mut z = seed;
        let mut d = self.continued(z);
        for _ in 0..100 {
            if d.norm() <= ROOT_TOL {
                return Ok(z);
            }
            let dx = (self.continued(z + H) - self.continued(z - H)) / (2.0 * H);
            let dy = (self.continued(z + Complex64::new(0.0, H)) - self.continued(z - Complex64::new(0.0, H)))
                / (2.0 * H);
            // Jacobian [[∂Re/∂x, ∂Re/∂y], [∂Im/∂x, ∂Im/∂y]].
            let (a, b, c, e) = (dx.re, dy.re, dx.im, dy.im);
            let det = a * e - b * c;
            if det.abs() < 1e-300 || !det.is_finite() {
                break;
            }
            let sx = (e * d.re - b * d.im) / det;
            let sy = (-c * d.re + a * d.im) / det;
            let mut lambda = 1.0;
            loop {
                let trial = z - Complex64::new(sx, sy) * lambda;
                let dt = self.continued(trial);
                if dt.norm().is_finite() && dt.norm() < d.norm() {
                    z = trial;
                    d = dt;
                    break;
                }
                lambda *= 0.5;
                if lambda < 1e-6 {
                    return Err(Error::RootNotConverged { residual: d.norm() });
                }
            }
        }
        if d.norm() <= ROOT_TOL {
            Ok(z)
        } else {
            Err(Error::RootNotConverged { residual: d.norm() })
        }
    }

    /// (K/2)∫₀^∞|ĝ| < 1, a sufficient condition for stability.
    pub fn l1_sufficient_check(&self) -> Result<bool> {
        Ok(0.5 * self.coupling * self.dist.fourier_moment(0)? < 1.0)
    }

    pub fn stability_report(&self, params: &ContourParams) -> Result<StabilityReport> {
        let critical = critical_coupling(&self.dist)?;
        let boundary_zeros = hilbert_zeros(&self.dist)?
            .into_iter()
            .map(|w| {
                let x = -w;
                let d = self.continued(Complex64::new(x, 0.0));
                BoundaryZero { omega: x, re_d: d.re, im_d: d.im }
            })
            .collect();
        let (verdict, winding, diagnostics) = match self.winding_number(params) {
            Ok(w) => {
                let verdict = if w.winding_number == 0 { Verdict::Stable } else { Verdict::Unstable };
                (
                    verdict,
                    w.winding_number,
                    Diagnostics { min_abs_d: w.min_abs_d, contour_points: w.points, max_image_step: w.max_image_step },
                )
            }
            Err(Error::MarginalError { min_abs }) => (
                Verdict::MarginallyUnstable,
                0,
                Diagnostics { min_abs_d: min_abs, contour_points: 0, max_image_step: f64::NAN },
            ),
            Err(e) => return Err(e),
        };
        let unstable_roots = if verdict == Verdict::Unstable { self.find_unstable_roots()? } else { Vec::new() };
        Ok(StabilityReport {
            verdict,
            winding_number: winding,
            boundary_zeros,
            unstable_roots: unstable_roots.into_iter().map(|z| [z.re, z.im]).collect(),
            critical_coupling: critical.k_c,
            critical_frequencies: critical.frequencies,
            diagnostics,
        })
    }
}

fn check_domain(omega: Complex64) -> Result<()> {
    if omega.im > 0.0 || !omega.re.is_finite() || omega.im.is_nan() {
        return Err(Error::DomainError { re: omega.re, im: omega.im });
    }
    Ok(())
}

/// Length scale for contours and seed placement.
fn natural_scale(dist: &FrequencyDistribution) -> f64 {
    let max_center = dist.parts().iter().map(|(_, f)| f.center().abs()).fold(0.0, f64::max);
    let max_scale = dist.parts().iter().map(|(_, f)| f.scale()).fold(0.0, f64::max);
    max_center + max_scale
}

/// H(x) = ∫₀^∞ (g(x−σ) − g(x+σ))/σ dσ by adaptive quadrature in σ = s·tan u.
pub fn hilbert_integral(dist: &FrequencyDistribution, x: f64) -> Result<f64> {
    let s = dist.min_scale();
    let d1 = dist.density_derivative(x, 1)?;
    let d3 = dist.density_derivative(x, 3)?;
    let integrand = |sigma: f64| -> f64 {
        if sigma < 1e-4 * s {
            -2.0 * d1 - sigma * sigma * d3 / 3.0
        } else {
            (dist.density(x - sigma) - dist.density(x + sigma)) / sigma
        }
    };
    let f = |u: f64| {
        let c = u.cos();
        integrand(s * u.tan()) * s / (c * c)
    };
    // Break at the component centers, where the integrand peaks.
    let mut breaks: Vec<f64> = dist
        .parts()
        .iter()
        .map(|(_, fam)| ((x - fam.center()).abs() / s).atan())
        .filter(|u| *u > 0.0 && *u < 0.5 * PI)
        .collect();
    breaks.push(0.0);
    breaks.push(0.5 * PI);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut total = 0.0;
    for pair in breaks.windows(2) {
        total += quad::adaptive(f, pair[0], pair[1], 1e-12)?;
    }
    Ok(total)
}

/// H(x) from the closed-form transform: H(x) = Im J(−x).
fn hilbert_closed(dist: &FrequencyDistribution, x: f64) -> f64 {
    dist.laplace(Complex64::new(-x, 0.0)).im
}

/// Real zeros of H, scanned on a fine grid and refined by bisection.
pub fn hilbert_zeros(dist: &FrequencyDistribution) -> Result<Vec<f64>> {
    let lo_c = dist.parts().iter().map(|(_, f)| f.center()).fold(f64::INFINITY, f64::min);
    let hi_c = dist.parts().iter().map(|(_, f)| f.center()).fold(f64::NEG_INFINITY, f64::max);
    let max_scale = dist.parts().iter().map(|(_, f)| f.scale()).fold(0.0, f64::max);
    let (a, b) = (lo_c - 20.0 * max_scale, hi_c + 20.0 * max_scale);
    let step = dist.min_scale() / 20.0;
    let n = ((b - a) / step).ceil() as usize;
    let xs: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    let hs: Vec<f64> = xs.iter().map(|&x| hilbert_closed(dist, x)).collect();
    let mut zeros = Vec::new();
    for i in 0..n {
        if hs[i] == 0.0 {
            zeros.push(xs[i]);
        } else if hs[i] * hs[i + 1] < 0.0 {
            let (mut lo, mut hi, mut flo) = (xs[i], xs[i + 1], hs[i]);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let fm = hilbert_closed(dist, mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if fm * flo < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            zeros.push(0.5 * (lo + hi));
        }
    }
    if hs[n] == 0.0 {
        zeros.push(xs[n]);
    }
    Ok(zeros)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalCoupling {
    pub k_c: f64,
    /// Zeros ω* of H at which 2/(πg(ω*)) attains the minimum.
    pub frequencies: Vec<f64>,
    /// All zeros of H.
    pub hilbert_zeros: Vec<f64>,
}

/// K_c = min over zeros ω* of H of 2/(πg(ω*)).
pub fn critical_coupling(dist: &FrequencyDistribution) -> Result<CriticalCoupling> {
    let zeros = hilbert_zeros(dist)?;
    if zeros.is_empty() {
        return Err(Error::NoZeroFound);
    }
    let thresholds: Vec<f64> = zeros.iter().map(|&w| 2.0 / (PI * dist.density(w))).collect();
    let k_c = thresholds.iter().copied().fold(f64::INFINITY, f64::min);
    let frequencies = zeros
        .iter()
        .zip(&thresholds)
        .filter(|(_, k)| (**k - k_c).abs() <= 1e-9 * k_c)
        .map(|(w, _)| *w)
        .collect();
    Ok(CriticalCoupling { k_c, frequencies, hilbert_zeros: zeros })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourParams {
    /// Uniform samples in the compactified variable before refinement.
    pub initial_points: usize,
    pub max_points: usize,
    /// min|D| below which the curve is declared to touch the origin.
    pub marginal_tol: f64,
    /// Length scale of the map ω = scale·tan(πu/2); defaults to the
    /// distribution's spread.
    pub scale: Option<f64>,
}

impl Default for ContourParams {
    fn default() -> Self {
        Self { initial_points: 1024, max_points: 2_000_000, marginal_tol: 1e-9, scale: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WindingResult {
    pub winding_number: u32,
    /// Signed index with ω traversed in increasing order (−zero count).
    #[serde(skip)]
    pub raw_winding: i64,
    pub min_abs_d: f64,
    pub points: usize,
    pub max_image_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryValue {
    pub omega: f64,
    pub laplace: Complex64,
    pub hilbert: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Stable,
    MarginallyUnstable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BoundaryZero {
    pub omega: f64,
    pub re_d: f64,
    pub im_d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Diagnostics {
    pub min_abs_d: f64,
    pub contour_points: usize,
    #[serde(serialize_with = "finite_or_null")]
    pub max_image_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StabilityReport {
    pub verdict: Verdict,
    pub winding_number: u32,
    pub boundary_zeros: Vec<BoundaryZero>,
    /// [Re ω₀, Im ω₀] pairs.
    pub unstable_roots: Vec<[f64; 2]>,
    #[serde(serialize_with = "number_or_inf")]
    pub critical_coupling: f64,
    pub critical_frequencies: Vec<f64>,
    pub diagnostics: Diagnostics,
}

fn number_or_inf<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}
