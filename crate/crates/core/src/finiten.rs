//! N-oscillator Kuramoto system in mean-field form,
//! dθ_i/dt = ω_i + K·Im(Z e^{−iθ_i}),  Z = (1/N) Σ_j e^{iθ_j}.

use std::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqdist::FrequencyDistribution;
use crate::spectral::PerturbationSpec;
use crate::Complex64;

/// Fixed reduction block, so sums do not depend on the thread count.
const CHUNK: usize = 4096;
const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Sampling {
    /// ω_i = F⁻¹((i−½)/N); phase quantiles from the golden-ratio sequence.
    Quantile,
    /// Inverse-CDF sampling from a ChaCha8 stream.
    Seeded(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteNState {
    phases: Vec<f64>,
    wraps: Vec<i64>,
    frequencies: Vec<f64>,
    coupling: f64,
    t: f64,
}

/// Both normalizations of the empirical order parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderParameterN {
    /// Σ_j e^{iθ_j}.
    pub sum: Complex64,
    /// (1/N) Σ_j e^{iθ_j}; used for all comparisons.
    pub normalized: Complex64,
}

/// Draws frequencies from g and phases from 1/2π + ε r(0, ·, ω_i).
pub fn sample_oscillators(
    dist: &FrequencyDistribution,
    n: usize,
    sampling: Sampling,
    perturbation: &PerturbationSpec,
    epsilon: f64,
    coupling: f64,
) -> Result<FiniteNState> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 oscillators, got {n}")));
    }
    if !(coupling >= 0.0 && coupling.is_finite()) {
        return Err(Error::InvalidParameter(format!("coupling must be nonnegative, got {coupling}")));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    let (us, vs): (Vec<f64>, Vec<f64>) = match sampling {
        Sampling::Quantile => {
            let golden = (5f64.sqrt() - 1.0) / 2.0;
            (0..n).map(|i| ((i as f64 + 0.5) / n as f64, ((i + 1) as f64 * golden).fract())).unzip()
        }
        Sampling::Seeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| {
                    let u: f64 = rng.random();
                    let v: f64 = rng.random();
                    // keep u away from 0 so the quantile stays finite
                    (u.max(f64::MIN_POSITIVE), v)
                })
                .unzip()
        }
    };
    let mut frequencies = Vec::with_capacity(n);
    let mut phases = Vec::with_capacity(n);
    for (u, v) in us.into_iter().zip(vs) {
        let omega = dist.quantile(u);
        let law = PhaseLaw::new(perturbation, omega, epsilon)?;
        frequencies.push(omega);
        phases.push(law.quantile(v));
    }
    Ok(FiniteNState { wraps: vec![0; n], phases, frequencies, coupling, t: 0.0 })
}

/// θ-law 1/2π + (ε/π) Σ_k Re(c_k e^{ikθ}) at one frequency.
struct PhaseLaw {
    modes: Vec<(f64, Complex64)>,
    epsilon: f64,
}

impl PhaseLaw {
    fn new(spec: &PerturbationSpec, omega: f64, epsilon: f64) -> Result<Self> {
        let mut modes = Vec::new();
        for m in &spec.modes {
            let amp = Complex64::new(m.amplitude[0], m.amplitude[1]);
            if m.k == 0 {
                if amp.norm() != 0.0 {
                    return Err(Error::InvalidPerturbation("mode k = 0 must vanish".into()));
                }
                continue;
            }
            let k = m.k as f64;
            modes.push((k, amp * m.profile.eval(omega) * Complex64::new(0.0, -k * omega * m.shift).exp()));
        }
        let law = Self { modes, epsilon };
        let samples = 64 * law.modes.iter().map(|m| m.0 as usize).max().unwrap_or(1);
        for i in 0..samples {
            let th = TWO_PI * i as f64 / samples as f64;
            if law.density(th) < 0.0 {
                return Err(Error::InvalidPerturbation(format!(
                    "phase density negative at theta = {th}, omega = {omega}"
                )));
            }
        }
        Ok(law)
    }

    fn density(&self, theta: f64) -> f64 {
        let r: f64 = self.modes.iter().map(|(k, c)| (c * Complex64::new(0.0, k * theta).exp()).re).sum();
        1.0 / TWO_PI + self.epsilon * r / PI
    }

    fn cdf(&self, theta: f64) -> f64 {
        let r: f64 = self
            .modes
            .iter()
            .map(|(k, c)| (c * (Complex64::new(0.0, k * theta).exp() - 1.0) / Complex64::new(0.0, *k)).re)
            .sum();
        theta / TWO_PI + self.epsilon * r / PI
    }

    /// Inverse CDF by safeguarded Newton on [0, 2π).
    fn quantile(&self, v: f64) -> f64 {
        if self.modes.is_empty() || self.epsilon == 0.0 {
            return TWO_PI * v;
        }
        let (mut lo, mut hi) = (0.0, TWO_PI);
        let mut x = TWO_PI * v;
        for _ in 0..100 {
            let f = self.cdf(x) - v;
            if f.abs() < 1e-15 {
                break;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.density(x);
            let newton = x - f / d;
            x = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-15 {
                break;
            }
        }
        x.rem_euclid(TWO_PI)
    }
}

impl FiniteNState {
    /// State from explicit phases and frequencies.
    pub fn new(phases: Vec<f64>, frequencies: Vec<f64>, coupling: f64) -> Result<Self> {
        if phases.len() != frequencies.len() || phases.len() < 2 {
            return Err(Error::InvalidParameter("need matching phases and frequencies, N >= 2".into()));
        }
        let wraps = phases.iter().map(|p| p.div_euclid(TWO_PI) as i64).collect();
        let phases = phases.iter().map(|p| p.rem_euclid(TWO_PI)).collect();
        Ok(Self { phases, wraps, frequencies, coupling, t: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    /// θ_i + 2π·(number of wraps).
    pub fn unwrapped_phases(&self) -> Vec<f64> {
        self.phases.iter().zip(&self.wraps).map(|(p, w)| p + TWO_PI * *w as f64).collect()
    }

    pub fn order_parameter(&self) -> OrderParameterN {
        let sum = mean_field_sum(&self.phases);
        OrderParameterN { sum, normalized: sum / self.len() as f64 }
    }

    /// 0.1/(K + 99th percentile of |ω_i|).
    pub fn step_bound(&self) -> f64 {
        let mut abs: Vec<f64> = self.frequencies.iter().map(|w| w.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let idx = ((abs.len() as f64 * 0.99).ceil() as usize).clamp(1, abs.len()) - 1;
        0.1 / (self.coupling + abs[idx]).max(f64::MIN_POSITIVE)
    }

    /// Classical RK4 step.
    pub fn step_rk4(&mut self, dt: f64) {
        let n = self.len();
        let theta = &self.phases;
        let freq = &self.frequencies;
        let k = self.coupling;
        let velocity = |src: &[f64], out: &mut [f64]| {
            let z = mean_field_sum(src) / n as f64;
            out.par_chunks_mut(CHUNK).zip(src.par_chunks(CHUNK)).zip(freq.par_chunks(CHUNK)).for_each(
                |((o, s), w)| {
                    for i in 0..o.len() {
                        let e = Complex64::new(0.0, -s[i]).exp();
                        o[i] = w[i] + k * (z * e).im;
                    }
                },
            );
        };
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        velocity(theta, &mut k1);
        for i in 0..n {
            tmp[i] = theta[i] + 0.5 * dt * k1[i];
        }
        velocity(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = theta[i] + 0.5 * dt * k2[i];
        }
        velocity(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = theta[i] + dt * k3[i];
        }
        velocity(&tmp, &mut k4);
        for i in 0..n {
            let next = self.phases[i] + dt / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
            let wrap = next.div_euclid(TWO_PI);
            self.wraps[i] += wrap as i64;
            self.phases[i] = next - TWO_PI * wrap;
        }
        self.t += dt;
    }

    /// Integrates to `horizon`, returning (t, Z) every `output_every`.
    pub fn run(&mut self, dt: f64, horizon: f64, output_every: f64) -> Result<Vec<(f64, Complex64)>> {
        let bound = self.step_bound();
        if !(dt > 0.0 && dt <= bound) {
            return Err(Error::StepTooLarge { dt, bound });
        }
        let steps = ((horizon - self.t) / dt).round().max(0.0) as usize;
        let stride = ((output_every / dt).round() as usize).max(1);
        let start = self.t;
        let mut out = vec![(self.t, self.order_parameter().normalized)];
        for s in 1..=steps {
            self.step_rk4(dt);
            self.t = start + s as f64 * dt;
            if s % stride == 0 || s == steps {
                out.push((self.t, self.order_parameter().normalized));
            }
        }
        Ok(out)
    }
}

/// Σ e^{iθ_j}, summed per fixed-size block and then in block order.
fn mean_field_sum(phases: &[f64]) -> Complex64 {
    let partial: Vec<Complex64> = phases
        .par_chunks(CHUNK)
        .map(|c| c.iter().map(|&p| Complex64::new(0.0, p).exp()).sum::<Complex64>())
        .collect();
    partial.into_iter().sum()
}
