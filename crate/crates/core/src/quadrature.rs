//! Fixed-order Gauss–Legendre quadrature.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Order used for every Gini integral unless a caller asks otherwise.
pub const DEFAULT_ORDER: usize = 64;

/// Exponent of the endpoint-grading map used by [`integrate_unit_graded`].
pub const GRADING_POWER: i32 = 4;

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> QuadratureRule<T> {
    /// Builds the `order`-point rule. Nodes are found by Newton iteration on the
    /// Legendre recurrence in `f64` and then converted.
    pub fn gauss_legendre(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::domain("gauss_legendre", "order must be positive"));
        }
        let (nodes, weights) = legendre_nodes(order);
        Ok(Self::from_f64(&nodes, &weights))
    }

    fn from_f64(nodes: &[f64], weights: &[f64]) -> Self {
        Self {
            nodes: nodes.iter().map(|&x| lit(x)).collect(),
            weights: weights.iter().map(|&w| lit(w)).collect(),
        }
    }

    /// The default 64-point rule, computed once per process.
    pub fn default_rule() -> Self {
        static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
        let (n, w) = RULE.get_or_init(|| legendre_nodes(DEFAULT_ORDER));
        Self::from_f64(n, w)
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }
}

fn legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            dp = nf * (z * p1 - p2) / (z * z - 1.0);
            let step = p1 / dp;
            z -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        if n % 2 == 1 && i == n / 2 {
            z = 0.0;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// ∫ f over [lo, hi] with the given rule.
pub fn integrate<T: Scalar, F: FnMut(T) -> T>(mut f: F, lo: T, hi: T, rule: &QuadratureRule<T>) -> T {
    let half = lit::<T>(0.5) * (hi - lo);
    let mid = lit::<T>(0.5) * (hi + lo);
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&x, &w)| w * f(mid + half * x))
        .sum::<T>()
        * half
}

/// ∫₀¹ f(p) dp after the substitution p = s^m / (s^m + (1-s)^m).
///
/// The map flattens algebraic endpoint singularities such as p^ξ or (1-p)^δ,
/// which several Lorenz families have. `f` receives both `p` and `1 - p`
/// (the latter computed without cancellation).
pub fn integrate_unit_graded<T: Scalar, F: FnMut(T, T) -> T>(mut f: F, rule: &QuadratureRule<T>) -> T {
    let m = GRADING_POWER;
    let mf: T = lit(m as f64);
    let half: T = lit(0.5);
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&x, &w)| {
            let s = half * (x + T::one());
            let r = half * (T::one() - x);
            let a = s.powi(m);
            let b = r.powi(m);
            let den = a + b;
            let jac = mf * s.powi(m - 1) * r.powi(m - 1) / (den * den);
            w * f(a / den, b / den) * jac
        })
        .sum::<T>()
        * half
}
