//! Accept-reject Metropolis–Hastings and random-walk Metropolis kernels.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::laplace::{Laplace, LogTarget};

/// Result of one kernel application.
#[derive(Debug, Clone, PartialEq)]
pub struct Move {
    pub x: Vec<f64>,
    pub log_density: f64,
    pub accepted: bool,
}

/// Gaussian pseudo-dominating density h = N(mode, cov) with constant c chosen
/// so that π(mode) = c·h(mode).
#[derive(Debug, Clone)]
pub struct Blanket<'a> {
    lap: &'a Laplace,
    log_det_half: f64,
}

impl<'a> Blanket<'a> {
    pub fn new(lap: &'a Laplace) -> Self {
        let log_det_half = (0..lap.chol.nrows()).map(|i| lap.chol[(i, i)].ln()).sum();
        Self { lap, log_det_half }
    }

    fn log_h(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_iterator(x.len(), x.iter().zip(&self.lap.mode).map(|(a, b)| a - b));
        let z = self
            .lap
            .chol
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        -0.5 * z.norm_squared() - self.log_det_half
    }

    /// ln π(x) − ln c h(x); the point is dominated when this is ≤ 0.
    pub fn excess(&self, x: &[f64], log_pi: f64) -> f64 {
        let log_c = self.lap.log_density + self.log_det_half;
        log_pi - self.log_h(x) - log_c
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.lap.mode.len();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let y = &self.lap.chol * z;
        self.lap.mode.iter().zip(y.iter()).map(|(m, v)| m + v).collect()
    }
}

/// One ARMH transition from `x` (with ln π(x) = `log_pi_x`).
///
/// Returns `None` if the accept-reject phase needs more than `max_trials`
/// draws, in which case the caller should use another kernel.
pub fn armh_step<T, R>(target: &T, blanket: &Blanket<'_>, x: &[f64], log_pi_x: f64, max_trials: usize, rng: &mut R) -> Option<Move>
where
    T: LogTarget + ?Sized,
    R: Rng + ?Sized,
{
    let mut found = None;
    for _ in 0..max_trials {
        let y = blanket.draw(rng);
        let log_pi_y = target.log_density(&y);
        if log_pi_y == f64::NEG_INFINITY {
            continue;
        }
        let ex = blanket.excess(&y, log_pi_y);
        if rng.gen::<f64>().ln() < ex.min(0.0) {
            found = Some((y, log_pi_y, ex));
            break;
        }
    }
    let (y, log_pi_y, ex_y) = found?;
    let ex_x = blanket.excess(x, log_pi_x);
    let log_alpha = if ex_x <= 0.0 {
        0.0
    } else if ex_y <= 0.0 {
        -ex_x
    } else {
        (ex_y - ex_x).min(0.0)
    };
    Some(if rng.gen::<f64>().ln() < log_alpha {
        Move {
            x: y,
            log_density: log_pi_y,
            accepted: true,
        }
    } else {
        Move {
            x: x.to_vec(),
            log_density: log_pi_x,
            accepted: false,
        }
    })
}

/// Random-walk Metropolis with increment `chol · z`, z ~ N(0, I).
pub fn rw_step<T, R>(target: &T, chol: &DMatrix<f64>, x: &[f64], log_pi_x: f64, rng: &mut R) -> Move
where
    T: LogTarget + ?Sized,
    R: Rng + ?Sized,
{
    let d = x.len();
    let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let step = chol * z;
    let y: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
    let log_pi_y = target.log_density(&y);
    if log_pi_y > f64::NEG_INFINITY && rng.gen::<f64>().ln() < log_pi_y - log_pi_x {
        Move {
            x: y,
            log_density: log_pi_y,
            accepted: true,
        }
    } else {
        Move {
            x: x.to_vec(),
            log_density: log_pi_x,
            accepted: false,
        }
    }
}
