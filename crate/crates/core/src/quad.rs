//! Gauss–Legendre building blocks shared by the integrating modules.

use std::num::NonZeroUsize;
use std::ops::{AddAssign, Mul};
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

/// Points per composite panel.
pub const PANEL_ORDER: usize = 16;

fn rule(order: usize) -> Vec<(f64, f64)> {
    let gl = GaussLegendre::new(NonZeroUsize::new(order).expect("order > 0"));
    let mut pairs: Vec<(f64, f64)> = gl.as_node_weight_pairs().to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// 16-point rule on [-1, 1], nodes ascending.
pub fn gl16() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| rule(PANEL_ORDER))
}

/// Rule of arbitrary order on [-1, 1], nodes ascending.
pub fn gl(order: usize) -> Vec<(f64, f64)> {
    if order == PANEL_ORDER {
        gl16().to_vec()
    } else {
        rule(order)
    }
}

/// 16-point Gauss–Legendre on a single interval.
pub fn panel<T, F>(a: f64, b: f64, f: &F) -> T
where
    T: Copy + Default + AddAssign + Mul<f64, Output = T>,
    F: Fn(f64) -> T + ?Sized,
{
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    let mut acc = T::default();
    for &(x, w) in gl16() {
        acc += f(mid + half * x) * w;
    }
    acc * half
}

/// Composite 16-point rule over `panels` equal subintervals of [a, b].
pub fn composite<T, F>(a: f64, b: f64, panels: usize, f: F) -> T
where
    T: Copy + Default + AddAssign + Mul<f64, Output = T>,
    F: Fn(f64) -> T,
{
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut acc = T::default();
    for p in 0..panels {
        let lo = a + h * p as f64;
        acc += panel(lo, lo + h, &f);
    }
    acc
}

/// Composite rule over explicit panel edges.
pub fn over_edges<T, F>(edges: &[f64], f: F) -> T
where
    T: Copy + Default + AddAssign + Mul<f64, Output = T>,
    F: Fn(f64) -> T,
{
    let mut acc = T::default();
    for pair in edges.windows(2) {
        acc += panel(pair[0], pair[1], &f);
    }
    acc
}

/// Globally adaptive bisection: a panel is accepted when its 16-point value
/// agrees with the sum over its two halves.
pub fn adaptive<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    const MAX_DEPTH: u32 = 40;
    const MAX_PANELS: usize = 200_000;
    let mut stack = vec![(a, b, panel(a, b, &f), 0u32)];
    let mut total = 0.0;
    let mut panels = 0usize;
    let width = (b - a).abs().max(f64::MIN_POSITIVE);
    while let Some((lo, hi, whole, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left: f64 = panel(lo, mid, &f);
        let right: f64 = panel(mid, hi, &f);
        let err = (left + right - whole).abs();
        let local_tol = tol * (hi - lo).abs() / width;
        panels += 1;
        if err <= local_tol.max(1e-15 * (left + right).abs()) {
            total += left + right;
        } else if depth >= MAX_DEPTH || panels > MAX_PANELS {
            return Err(Error::Divergent(format!(
                "adaptive quadrature on [{a}, {b}] stalled near {mid} (error {err:.3e})"
            )));
        } else {
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
    }
    Ok(total)
}
