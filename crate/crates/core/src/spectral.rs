//! Nonlinear pseudo-spectral solver for the perturbation r(t, θ, ω).
//!
//! The density is ρ = 1/2π + ε r with
//!
//! ```text
//! r(t, θ, ω) = (1/2π) Σ_k c_k(t, ω) e^{ikθ},   c_0 = 0,  c_{−k} = conj(c_k)
//! ```
//!
//! Only k = 1..kMax are stored, on the nodes of a [`QuadratureGrid`]. Each
//! mode obeys
//!
//! ```text
//! dc_k/dt = −ikω c_k − ik [v₊ (δ_{k1} + ε c_{k−1}) + v₋ ε c_{k+1}]
//! v₊ = iKR/2,  v₋ = −iK R̄/2,  R = Σ_j w_j c_1(ω_j)
//! ```
//!
//! with c_{kMax+1} = 0. Free transport is integrated exactly by an
//! integrating factor; the coupling by classical RK4 in that frame.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqdist::QuadratureGrid;
use crate::Complex64;

const BLOWUP: f64 = 1e6;
/// Node count × modes above which stage updates run on the thread pool.
const PARALLEL_THRESHOLD: usize = 1 << 15;

/// Shape h(ω) of one initial mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "camelCase", deny_unknown_fields)]
pub enum Profile {
    /// h ≡ 1.
    Constant,
    /// h = exp(−(ω−center)²/2width²).
    Gaussian { width: f64, #[serde(default)] center: f64 },
    /// h = (1 + a|ω|) e^{−a|ω|}: C² with a kink in the third derivative.
    Kinked { a: f64 },
}

impl Profile {
    pub fn eval(&self, omega: f64) -> f64 {
        match *self {
            Profile::Constant => 1.0,
            Profile::Gaussian { width, center } => (-0.5 * ((omega - center) / width).powi(2)).exp(),
            Profile::Kinked { a } => (1.0 + a * omega.abs()) * (-a * omega.abs()).exp(),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Profile::Gaussian { width, center } if !(width > 0.0 && center.is_finite()) => {
                Err(Error::InvalidPerturbation(format!("gaussian profile width {width}, center {center}")))
            }
            Profile::Kinked { a } if !(a > 0.0 && a.is_finite()) => {
                Err(Error::InvalidPerturbation(format!("kinked profile needs a > 0, got {a}")))
            }
            _ => Ok(()),
        }
    }
}

/// c_k(0, ω) = amplitude · h(ω) · e^{−ikω·shift}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub k: usize,
    pub profile: Profile,
    /// [re, im].
    #[serde(default = "unit_amplitude")]
    pub amplitude: [f64; 2],
    #[serde(default)]
    pub shift: f64,
}

fn unit_amplitude() -> [f64; 2] {
    [1.0, 0.0]
}

/// Initial perturbation as a list of analytic modes; no modes means r ≡ 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub modes: Vec<ModeSpec>,
}

impl PerturbationSpec {
    /// r(0) = (1/π) cos θ · h(ω).
    pub fn cosine(profile: Profile) -> Self {
        Self { modes: vec![ModeSpec { k: 1, profile, amplitude: unit_amplitude(), shift: 0.0 }] }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralState {
    grid: Arc<QuadratureGrid>,
    k_max: usize,
    epsilon: f64,
    coupling: f64,
    t: f64,
    /// Node-major: coeffs[j·kMax + k − 1] = c_k(ω_j).
    coeffs: Vec<Complex64>,
}

impl SpectralState {
    pub fn initialize(
        spec: &PerturbationSpec,
        grid: Arc<QuadratureGrid>,
        k_max: usize,
        epsilon: f64,
        coupling: f64,
    ) -> Result<Self> {
        let mut state = Self::zero(grid, k_max, epsilon, coupling)?;
        for m in &spec.modes {
            m.profile.validate()?;
            let amp = Complex64::new(m.amplitude[0], m.amplitude[1]);
            if m.k == 0 {
                if amp.norm() != 0.0 {
                    return Err(Error::InvalidPerturbation("mode k = 0 must vanish (zero mean in θ)".into()));
                }
                continue;
            }
            if m.k > k_max {
                return Err(Error::InvalidPerturbation(format!("mode {} exceeds kMax = {k_max}", m.k)));
            }
            for (j, &omega) in state.grid.nodes().iter().enumerate() {
                let phase = Complex64::new(0.0, -(m.k as f64) * omega * m.shift).exp();
                state.coeffs[j * k_max + m.k - 1] += amp * phase * m.profile.eval(omega);
            }
        }
        state.check_positivity()?;
        Ok(state)
    }

    /// Projects a supplied field r(0, θ, ω) onto the modes by trapezoidal
    /// θ-quadrature.
    pub fn from_field(
        field: impl Fn(f64, f64) -> f64,
        grid: Arc<QuadratureGrid>,
        k_max: usize,
        epsilon: f64,
        coupling: f64,
    ) -> Result<Self> {
        let mut state = Self::zero(grid, k_max, epsilon, coupling)?;
        let m = (16 * k_max).max(64);
        let thetas: Vec<f64> = (0..m).map(|i| 2.0 * PI * i as f64 / m as f64).collect();
        let h = 2.0 * PI / m as f64;
        for (j, &omega) in state.grid.nodes().iter().enumerate() {
            let values: Vec<f64> = thetas.iter().map(|&th| field(th, omega)).collect();
            let mean: f64 = values.iter().sum::<f64>() * h;
            let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if mean.abs() > 1e-12 * (1.0 + scale) {
                return Err(Error::InvalidPerturbation(format!(
                    "∫ r dθ = {mean:e} ≠ 0 at omega = {omega}"
                )));
            }
            for k in 1..=k_max {
                let c: Complex64 = thetas
                    .iter()
                    .zip(&values)
                    .map(|(&th, &v)| Complex64::new(0.0, -(k as f64) * th).exp() * v)
                    .sum();
                state.coeffs[j * k_max + k - 1] = c * h;
            }
        }
        state.check_positivity()?;
        Ok(state)
    }

    pub fn zero(grid: Arc<QuadratureGrid>, k_max: usize, epsilon: f64, coupling: f64) -> Result<Self> {
        if k_max < 2 {
            return Err(Error::InvalidParameter(format!("kMax must be at least 2, got {k_max}")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(coupling >= 0.0 && coupling.is_finite()) {
            return Err(Error::InvalidParameter(format!("coupling must be nonnegative, got {coupling}")));
        }
        let n = grid.len() * k_max;
        Ok(Self { grid, k_max, epsilon, coupling, t: 0.0, coeffs: vec![Complex64::new(0.0, 0.0); n] })
    }

    /// 1/2π + ε r(0) ≥ 0 on a θ sample at every node.
    fn check_positivity(&self) -> Result<()> {
        let m = 16 * self.k_max;
        for j in 0..self.grid.len() {
            for i in 0..m {
                let theta = 2.0 * PI * i as f64 / m as f64;
                let rho = 1.0 / (2.0 * PI) + self.epsilon * self.reconstruct(j, theta);
                if rho < 0.0 {
                    return Err(Error::InvalidPerturbation(format!(
                        "initial density {rho:e} < 0 at theta = {theta}, omega = {}",
                        self.grid.nodes()[j]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// c_k(ω_j) for 1 ≤ k ≤ kMax; c_0 = 0 and c_k = 0 beyond kMax.
    pub fn coeff(&self, k: usize, j: usize) -> Complex64 {
        if k == 0 || k > self.k_max {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[j * self.k_max + k - 1]
        }
    }

    /// r(θ, ω_j) = (1/π) Σ_k Re(c_k e^{ikθ}).
    pub fn reconstruct(&self, j: usize, theta: f64) -> f64 {
        (1..=self.k_max)
            .map(|k| (self.coeff(k, j) * Complex64::new(0.0, k as f64 * theta).exp()).re)
            .sum::<f64>()
            / PI
    }

    /// R = ∫∫ r g e^{−iθ} dθ dω = Σ_j w_j c_1(ω_j).
    pub fn order_parameter(&self) -> Complex64 {
        order_parameter_of(&self.coeffs, self.grid.weights(), self.k_max)
    }

    /// Lab-frame time derivative of the coefficients.
    pub fn rhs(&self) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.coeffs.len()];
        let r = self.order_parameter();
        let km = self.k_max;
        for (j, &omega) in self.grid.nodes().iter().enumerate() {
            let c = &self.coeffs[j * km..(j + 1) * km];
            let o = &mut out[j * km..(j + 1) * km];
            coupling_terms(c, r, self.coupling, self.epsilon, o);
            for k in 1..=km {
                o[k - 1] += Complex64::new(0.0, -(k as f64) * omega) * c[k - 1];
            }
        }
        out
    }

    /// min(0.5/(kMax·max|ω|), 0.1/(K + εK)).
    pub fn step_bound(&self) -> f64 {
        let transport = 0.5 / (self.k_max as f64 * self.grid.max_abs_node());
        let k = self.coupling * (1.0 + self.epsilon);
        if k > 0.0 {
            transport.min(0.1 / k)
        } else {
            transport
        }
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        let stepper = Stepper::new(self, dt)?;
        stepper.advance(self)
    }

    /// Runs to time `horizon` (from the current time), recording R every
    /// `output_every` time units.
    pub fn run(&mut self, dt: f64, horizon: f64, output_every: f64, options: &RunOptions) -> Result<SimResult> {
        let stepper = Stepper::new(self, dt)?;
        let steps = ((horizon - self.t) / dt).round().max(0.0) as usize;
        let stride = ((output_every / dt).round() as usize).max(1);
        let snapshot_steps: Vec<(usize, f64)> = options
            .snapshot_times
            .iter()
            .map(|&ts| (((ts - self.t) / dt).round() as usize, ts))
            .collect();
        let t_rec = recurrence_horizon(&self.grid);
        let mut result = SimResult {
            times: Vec::new(),
            order_parameter: Vec::new(),
            diagnostics: Vec::new(),
            recurrence_horizon: t_rec,
            snapshots: Vec::new(),
        };
        let mut running = [0.0f64; 3];
        let start = self.t;
        for s in 0..=steps {
            if s > 0 {
                stepper.advance(self)?;
                self.t = start + s as f64 * dt;
            }
            if s % stride == 0 || s == steps {
                result.times.push(self.t);
                result.order_parameter.push(self.order_parameter());
                if let Some(n) = options.diagnostics_order {
                    let now = self.sobolev_diagnostics(n)?;
                    for i in 0..3 {
                        running[i] = running[i].max(now[i]);
                    }
                    result.diagnostics.push(DiagnosticRow { t: self.t, current: now, running });
                }
            }
            for &(_, ts) in snapshot_steps.iter().filter(|(k, _)| *k == s) {
                result.snapshots.push(Snapshot { t: ts, profile: self.profile() });
            }
        }
        Ok(result)
    }

    /// p_k(ω_j) = e^{ikω_j t} c_k(ω_j) g(ω_j): the state pulled back along
    /// free transport and multiplied by g.
    pub fn profile(&self) -> Vec<Complex64> {
        let km = self.k_max;
        let mut p = self.coeffs.clone();
        for (j, (&omega, &g)) in self.grid.nodes().iter().zip(self.grid.density()).enumerate() {
            for k in 1..=km {
                p[j * km + k - 1] *= Complex64::new(0.0, k as f64 * omega * self.t).exp() * g;
            }
        }
        p
    }

    /// Discrete ‖p‖_{H^m}; θ-derivatives exact, ω-derivatives by second-order
    /// finite differences.
    pub fn profile_norm(&self, m: usize) -> Result<f64> {
        profile_norm(&self.grid, self.k_max, &self.profile(), m)
    }

    /// ((1+t)ⁿ|R|, ‖p‖_{H^n}/(1+t), ‖p‖_{H^{n−2}}) at the current time.
    pub fn sobolev_diagnostics(&self, n: usize) -> Result<[f64; 3]> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("diagnostic order must be at least 2, got {n}")));
        }
        let p = self.profile();
        let t = self.t;
        Ok([
            (1.0 + t).powi(n as i32) * self.order_parameter().norm(),
            profile_norm(&self.grid, self.k_max, &p, n)? / (1.0 + t),
            profile_norm(&self.grid, self.k_max, &p, n - 2)?,
        ])
    }
}

fn order_parameter_of(coeffs: &[Complex64], weights: &[f64], k_max: usize) -> Complex64 {
    weights.iter().enumerate().map(|(j, &w)| coeffs[j * k_max] * w).sum()
}

/// −ik[v₊(δ_{k1} + εc_{k−1}) + v₋ εc_{k+1}] for one node.
#[inline]
fn coupling_terms(c: &[Complex64], r: Complex64, coupling: f64, eps: f64, out: &mut [Complex64]) {
    let km = c.len();
    let vp = Complex64::new(0.0, 0.5 * coupling) * r;
    let vm = Complex64::new(0.0, -0.5 * coupling) * r.conj();
    for k in 1..=km {
        let lower = if k == 1 { Complex64::new(1.0, 0.0) } else { c[k - 2] * eps };
        let upper = if k < km { c[k] * eps } else { Complex64::new(0.0, 0.0) };
        out[k - 1] = Complex64::new(0.0, -(k as f64)) * (vp * lower + vm * upper);
    }
}

/// Integrating-factor RK4 with precomputed transport phases.
struct Stepper {
    dt: f64,
    half: Vec<Complex64>,
    full: Vec<Complex64>,
}

impl Stepper {
    fn new(state: &SpectralState, dt: f64) -> Result<Self> {
        let bound = state.step_bound();
        if !(dt > 0.0 && dt <= bound) {
            return Err(Error::StepTooLarge { dt, bound });
        }
        let km = state.k_max;
        let mut half = Vec::with_capacity(state.coeffs.len());
        let mut full = Vec::with_capacity(state.coeffs.len());
        for &omega in state.grid.nodes() {
            for k in 1..=km {
                let phase = -(k as f64) * omega * dt;
                half.push(Complex64::new(0.0, 0.5 * phase).exp());
                full.push(Complex64::new(0.0, phase).exp());
            }
        }
        Ok(Self { dt, half, full })
    }

    fn advance(&self, state: &mut SpectralState) -> Result<()> {
        let h = self.dt;
        let km = state.k_max;
        let (k, e) = (state.coupling, state.epsilon);
        let w = state.grid.weights();
        let c = &state.coeffs;
        let n = c.len();
        let zero = Complex64::new(0.0, 0.0);
        let mut a = vec![zero; n];
        let mut b = vec![zero; n];
        let mut c2 = vec![zero; n];
        let mut d = vec![zero; n];
        let mut u = vec![zero; n];

        let par = n >= PARALLEL_THRESHOLD;
        let nonlinear = |src: &[Complex64], dst: &mut [Complex64]| {
            let r = order_parameter_of(src, w, km);
            if par {
                dst.par_chunks_mut(km)
                    .zip(src.par_chunks(km))
                    .for_each(|(o, s)| coupling_terms(s, r, k, e, o));
            } else {
                dst.chunks_mut(km).zip(src.chunks(km)).for_each(|(o, s)| coupling_terms(s, r, k, e, o));
            }
        };

        nonlinear(c, &mut a);
        for i in 0..n {
            u[i] = self.half[i] * (c[i] + a[i] * (0.5 * h));
        }
        nonlinear(&u, &mut b);
        for i in 0..n {
            u[i] = self.half[i] * c[i] + b[i] * (0.5 * h);
        }
        nonlinear(&u, &mut c2);
        for i in 0..n {
            u[i] = self.full[i] * c[i] + self.half[i] * c2[i] * h;
        }
        nonlinear(&u, &mut d);
        let mut peak = 0.0f64;
        let next = &mut state.coeffs;
        for i in 0..n {
            let v = self.full[i] * next[i]
                + (self.full[i] * a[i] + self.half[i] * (b[i] + c2[i]) * 2.0 + d[i]) * (h / 6.0);
            peak = peak.max(v.norm());
            next[i] = v;
        }
        state.t += h;
        if !(peak <= BLOWUP) {
            return Err(Error::BlowupDetected { t: state.t, magnitude: peak });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Order n of the M_{n,T} diagnostics; `None` skips them.
    pub diagnostics_order: Option<usize>,
    /// Times at which the profile p is stored.
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub t: f64,
    /// Values at t.
    pub current: [f64; 3],
    /// Running maxima over [0, t], i.e. the components of M_{n,t}.
    pub running: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub profile: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub times: Vec<f64>,
    pub order_parameter: Vec<Complex64>,
    pub diagnostics: Vec<DiagnosticRow>,
    pub recurrence_horizon: f64,
    pub snapshots: Vec<Snapshot>,
}

/// T_rec = 0.5·2π / max gap.
pub fn recurrence_horizon(grid: &QuadratureGrid) -> f64 {
    0.5 * 2.0 * PI / grid.max_gap()
}

/// First ω-derivative on the nonuniform nodes (three-point stencils).
fn derivative(nodes: &[f64], f: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = nodes.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    if n < 3 {
        return Err(Error::GridTooCoarse { ratio: f64::INFINITY });
    }
    let check = |h1: f64, h2: f64| -> Result<()> {
        let ratio = (h1 / h2).max(h2 / h1);
        if ratio > 10.0 {
            Err(Error::GridTooCoarse { ratio })
        } else {
            Ok(())
        }
    };
    for j in 0..n {
        let c = j.clamp(1, n - 2);
        let (x0, x1, x2) = (nodes[c - 1], nodes[c], nodes[c + 1]);
        let (h1, h2) = (x1 - x0, x2 - x1);
        check(h1, h2)?;
        let x = nodes[j];
        // Derivative at x of the quadratic through the three points.
        let l0 = ((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2));
        let l1 = ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2));
        let l2 = ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1));
        out[j] = f[c - 1] * l0 + f[c] * l1 + f[c + 1] * l2;
    }
    Ok(out)
}

/// ‖p‖²_{H^m} = Σ_{a+b≤m} (1/π) Σ_k k^{2a} ∫ ⟨ω⟩² |∂_ω^b p_k|² dω.
pub fn profile_norm(grid: &QuadratureGrid, k_max: usize, p: &[Complex64], m: usize) -> Result<f64> {
    let nodes = grid.nodes();
    let bare = grid.bare_weights();
    let mut total = 0.0;
    for k in 1..=k_max {
        let mut f: Vec<Complex64> = (0..nodes.len()).map(|j| p[j * k_max + k - 1]).collect();
        for b in 0..=m {
            if b > 0 {
                f = derivative(nodes, &f)?;
            }
            let integral: f64 =
                nodes.iter().zip(bare).zip(&f).map(|((&x, &w), v)| w * (1.0 + x * x) * v.norm_sqr()).sum();
            let theta_factor: f64 = (0..=m - b).map(|a| (k as f64).powi(2 * a as i32)).sum();
            total += theta_factor * integral / PI;
        }
    }
    Ok(total.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ScatteringReport {
    pub profile_time: f64,
    /// (t_i, t_{i+1}, ‖p(t_i) − p(t_{i+1})‖_{H^{n−2}}).
    pub pairwise: Vec<(f64, f64, f64)>,
    pub converged: bool,
    #[serde(skip)]
    pub profile: Vec<Complex64>,
}

/// Cauchy-sequence check of the pulled-back profile across snapshots.
pub fn scattering_profile(
    grid: &QuadratureGrid,
    k_max: usize,
    snapshots: &[Snapshot],
    n: usize,
) -> Result<ScatteringReport> {
    if snapshots.len() < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 snapshots, got {}", snapshots.len())));
    }
    if n < 2 {
        return Err(Error::InvalidParameter(format!("scattering order must be at least 2, got {n}")));
    }
    let mut pairwise = Vec::new();
    for pair in snapshots.windows(2) {
        let diff: Vec<Complex64> = pair[0].profile.iter().zip(&pair[1].profile).map(|(a, b)| a - b).collect();
        pairwise.push((pair[0].t, pair[1].t, profile_norm(grid, k_max, &diff, n - 2)?));
    }
    let converged = pairwise.windows(2).all(|w| w[1].2 < w[0].2);
    let last = snapshots.last().expect("nonempty");
    Ok(ScatteringReport { profile_time: last.t, pairwise, converged, profile: last.profile.clone() })
}
