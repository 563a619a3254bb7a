//! Gaussian expectations by Gauss-Hermite and Gauss-Legendre rules with
//! node doubling (32 -> 64 -> 128). Disagreement between the last two
//! levels beyond tolerance is an error, never a silent result.

use std::f64::consts::PI;
use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::{GaussHermite, GaussLegendre};

use crate::error::{Error, Result};

pub const NODE_LEVELS: [usize; 3] = [32, 64, 128];
pub const RELATIVE_TOLERANCE: f64 = 1e-9;

type Rule = Vec<(f64, f64)>;

/// Node counts with cached rules: the doubling levels plus small fixed rules.
pub const SUPPORTED_NODES: [usize; 6] = [8, 12, 16, 32, 64, 128];

fn level_index(nodes: usize) -> usize {
    SUPPORTED_NODES
        .iter()
        .position(|&n| n == nodes)
        .unwrap_or_else(|| panic!("unsupported node count {nodes}"))
}

type RuleCache = [OnceLock<Rule>; SUPPORTED_NODES.len()];

/// Hermite rule rescaled to the standard normal: `E f(Z) ~ sum w_i f(z_i)`.
fn normal_rule(nodes: usize) -> &'static [(f64, f64)] {
    static RULES: RuleCache = [const { OnceLock::new() }; SUPPORTED_NODES.len()];
    RULES[level_index(nodes)].get_or_init(|| {
        let rule = GaussHermite::new(NonZeroUsize::new(nodes).unwrap());
        let scale = 1.0 / PI.sqrt();
        rule.as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (std::f64::consts::SQRT_2 * x, w * scale))
            .collect()
    })
}

/// Legendre rule mapped to `[0, 1]`.
fn unit_rule(nodes: usize) -> &'static [(f64, f64)] {
    static RULES: RuleCache = [const { OnceLock::new() }; SUPPORTED_NODES.len()];
    RULES[level_index(nodes)].get_or_init(|| {
        let rule = GaussLegendre::new(NonZeroUsize::new(nodes).unwrap());
        rule.as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .collect()
    })
}

/// Values of a vector-valued integral together with the node count that
/// met the tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult<const K: usize> {
    pub values: [f64; K],
    pub nodes: usize,
}

/// Absolute differences below `floor` pass regardless of scale.
fn converged<const K: usize>(
    new: &[f64; K],
    old: &[f64; K],
    abs_int: &[f64; K],
    floor: f64,
) -> bool {
    (0..K).all(|k| {
        let diff = (new[k] - old[k]).abs();
        // components that cancel to ~0 are judged against their absolute mass
        let scale = new[k].abs().max(1e-4 * abs_int[k]);
        diff <= RELATIVE_TOLERANCE * scale || diff <= floor
    })
}

fn doubling<const K: usize>(
    what: &str,
    floor: f64,
    mut eval: impl FnMut(usize) -> ([f64; K], [f64; K]),
) -> Result<QuadratureResult<K>> {
    let mut previous: Option<[f64; K]> = None;
    let mut before_last = [0.0; K];
    let mut last = [0.0; K];
    for &nodes in &NODE_LEVELS {
        let (values, abs_int) = eval(nodes);
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::QuadratureNonConvergence(format!(
                "{what}: non-finite value at {nodes} nodes"
            )));
        }
        if let Some(prev) = previous {
            if converged(&values, &prev, &abs_int, floor) {
                return Ok(QuadratureResult { values, nodes });
            }
        }
        before_last = last;
        previous = Some(values);
        last = values;
    }
    Err(Error::QuadratureNonConvergence(format!(
        "{what}: 64 vs 128 nodes disagree ({before_last:?} vs {last:?})"
    )))
}

/// `E f(Z)` for a standard normal `Z`, at a fixed node count.
pub fn normal_expectation_fixed<const K: usize>(
    nodes: usize,
    f: impl Fn(f64) -> [f64; K],
) -> ([f64; K], [f64; K]) {
    let mut acc = [0.0; K];
    let mut abs_acc = [0.0; K];
    for &(z, w) in normal_rule(nodes) {
        let v = f(z);
        for k in 0..K {
            acc[k] += w * v[k];
            abs_acc[k] += w * v[k].abs();
        }
    }
    (acc, abs_acc)
}

/// `E f(Z)` for a standard normal `Z` with node doubling. Suited to smooth
/// integrands.
pub fn normal_expectation<const K: usize>(
    what: &str,
    f: impl Fn(f64) -> [f64; K],
) -> Result<QuadratureResult<K>> {
    doubling(what, 1e-300, |nodes| normal_expectation_fixed(nodes, &f))
}

/// `int_lower^upper f(z) phi(z) dz` at a fixed node count. With
/// `singular_lower` the substitution `z = lower + (upper - lower) s^4`
/// flattens algebraic endpoint singularities such as `(z - lower)^alpha`.
pub fn truncated_normal_integral_fixed<const K: usize>(
    nodes: usize,
    lower: f64,
    upper: f64,
    singular_lower: bool,
    f: impl Fn(f64) -> [f64; K],
) -> ([f64; K], [f64; K]) {
    const POWER: i32 = 4;
    let width = upper - lower;
    let norm = 1.0 / (2.0 * PI).sqrt();
    let mut acc = [0.0; K];
    let mut abs_acc = [0.0; K];
    if !(width > 0.0) {
        return (acc, abs_acc);
    }
    for &(s, w) in unit_rule(nodes) {
        let (z, jac) = if singular_lower {
            (
                lower + width * s.powi(POWER),
                width * POWER as f64 * s.powi(POWER - 1),
            )
        } else {
            (lower + width * s, width)
        };
        let weight = w * jac * norm * (-0.5 * z * z).exp();
        if weight == 0.0 {
            continue;
        }
        let v = f(z);
        for k in 0..K {
            acc[k] += weight * v[k];
            abs_acc[k] += weight * v[k].abs();
        }
    }
    (acc, abs_acc)
}

pub fn truncated_normal_integral<const K: usize>(
    what: &str,
    lower: f64,
    upper: f64,
    singular_lower: bool,
    f: impl Fn(f64) -> [f64; K],
) -> Result<QuadratureResult<K>> {
    doubling(what, 1e-300, |nodes| {
        truncated_normal_integral_fixed(nodes, lower, upper, singular_lower, &f)
    })
}

/// Sum of truncated integrals over `(lower, upper, singular_lower)` pieces,
/// refined together so that the tolerance applies to the total.
pub fn piecewise_normal_integral<const K: usize>(
    what: &str,
    pieces: &[(f64, f64, bool)],
    f: impl Fn(f64) -> [f64; K],
) -> Result<QuadratureResult<K>> {
    piecewise_normal_integral_with_floor(what, pieces, 1e-300, f)
}

/// As [`piecewise_normal_integral`], accepting any refinement that moves the
/// values by less than `floor`, e.g. the mass already lost to truncation.
pub fn piecewise_normal_integral_with_floor<const K: usize>(
    what: &str,
    pieces: &[(f64, f64, bool)],
    floor: f64,
    f: impl Fn(f64) -> [f64; K],
) -> Result<QuadratureResult<K>> {
    doubling(what, floor, |nodes| {
        let mut acc = [0.0; K];
        let mut abs_acc = [0.0; K];
        for &(lo, hi, singular) in pieces {
            let (v, a) = truncated_normal_integral_fixed(nodes, lo, hi, singular, &f);
            for k in 0..K {
                acc[k] += v[k];
                abs_acc[k] += a[k];
            }
        }
        (acc, abs_acc)
    })
}
