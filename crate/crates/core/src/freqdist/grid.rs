use serde::Serialize;

use super::FrequencyDistribution;
use crate::error::{Error, Result};
use crate::quad::{self, PANEL_ORDER};

/// Composite Gauss–Legendre discretization of ∫ · g(ω) dω.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    #[serde(skip)]
    bare_weights: Vec<f64>,
    #[serde(skip)]
    density: Vec<f64>,
    mass_covered: f64,
    mass_error: f64,
    min_gap: f64,
    max_gap: f64,
    interval: (f64, f64),
    panel_order: usize,
}

impl QuadratureGrid {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights including the factor g(ω_j).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Plain panel weights, for ∫ · dω.
    pub fn bare_weights(&self) -> &[f64] {
        &self.bare_weights
    }

    /// g(ω_j).
    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Σ w_j.
    pub fn mass_covered(&self) -> f64 {
        self.mass_covered
    }

    /// |Σ w_j − ∫ g over the interval|.
    pub fn mass_error(&self) -> f64 {
        self.mass_error
    }

    pub fn min_gap(&self) -> f64 {
        self.min_gap
    }

    pub fn max_gap(&self) -> f64 {
        self.max_gap
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn panel_order(&self) -> usize {
        self.panel_order
    }

    pub fn max_abs_node(&self) -> f64 {
        self.interval.0.abs().max(self.interval.1.abs())
    }

    /// Σ w_j f(ω_j).
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Builds a grid whose interval leaves (1−threshold)/4 of the mass in each
/// tail. Gaussian-only densities get uniform panels; anything with a Cauchy
/// component gets panel edges at ω = c + s·sinh(ξ) with uniform ξ, which puts
/// a fixed number of panels per decade of the heavy tail.
pub fn build_grid(
    dist: &FrequencyDistribution,
    node_count: usize,
    mass_threshold: f64,
) -> Result<QuadratureGrid> {
    if node_count < 8 {
        return Err(Error::InvalidParameter(format!("node count {node_count} is below 8")));
    }
    if !(mass_threshold > 0.0 && mass_threshold < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "mass threshold {mass_threshold} must lie in (0, 1)"
        )));
    }
    let order = node_count.min(PANEL_ORDER);
    if node_count % order != 0 {
        return Err(Error::InvalidParameter(format!(
            "node count {node_count} is not a multiple of the panel order {PANEL_ORDER}"
        )));
    }
    let panels = node_count / order;

    let tail = (1.0 - mass_threshold) / 4.0;
    let lo = dist.quantile(tail);
    let hi = dist.quantile(1.0 - tail);
    let analytic_mass = dist.sf(lo) - dist.sf(hi);

    let edges: Vec<f64> = if dist.is_heavy_tailed() {
        let c = dist.quantile(0.5);
        let s = dist.min_scale();
        let (a, b) = (((lo - c) / s).asinh(), ((hi - c) / s).asinh());
        (0..=panels)
            .map(|p| c + s * (a + (b - a) * p as f64 / panels as f64).sinh())
            .collect()
    } else {
        (0..=panels).map(|p| lo + (hi - lo) * p as f64 / panels as f64).collect()
    };

    let rule = quad::gl(order);
    let mut nodes = Vec::with_capacity(node_count);
    let mut bare_weights = Vec::with_capacity(node_count);
    for pair in edges.windows(2) {
        let half = 0.5 * (pair[1] - pair[0]);
        let mid = 0.5 * (pair[1] + pair[0]);
        for &(x, w) in &rule {
            nodes.push(mid + half * x);
            bare_weights.push(half * w);
        }
    }
    let density: Vec<f64> = nodes.iter().map(|&x| dist.density(x)).collect();
    let weights: Vec<f64> = bare_weights.iter().zip(&density).map(|(b, g)| b * g).collect();
    let mass_covered: f64 = weights.iter().sum();

    if mass_covered < mass_threshold {
        return Err(Error::MassNotCovered { covered: mass_covered, threshold: mass_threshold });
    }

    let gaps = nodes.windows(2).map(|p| p[1] - p[0]);
    let min_gap = gaps.clone().fold(f64::INFINITY, f64::min);
    let max_gap = gaps.fold(0.0, f64::max);

    Ok(QuadratureGrid {
        nodes,
        weights,
        bare_weights,
        density,
        mass_covered,
        mass_error: (mass_covered - analytic_mass).abs(),
        min_gap,
        max_gap,
        interval: (lo, hi),
        panel_order: order,
    })
}
