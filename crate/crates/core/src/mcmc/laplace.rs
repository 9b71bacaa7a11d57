//! Mode finding and the Gaussian approximation used by the ARMH kernel.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::LocalExpansion;

/// Relative step for finite-difference derivatives.
pub const FD_STEP: f64 = 1e-5;

/// A log-density on R^d that the Laplace and MH kernels can work with.
pub trait LogTarget {
    fn dim(&self) -> usize;

    /// Log-density up to a constant; −∞ outside the support.
    fn log_density(&self, x: &[f64]) -> f64;

    /// Value, gradient and Hessian at `x`. Defaults to central differences of
    /// [`LogTarget::log_density`].
    fn expansion(&self, x: &[f64]) -> Option<LocalExpansion> {
        fd_expansion(self, x)
    }
}

/// Central-difference gradient and Hessian of `target.log_density`.
pub fn fd_expansion<T: LogTarget + ?Sized>(target: &T, x: &[f64]) -> Option<LocalExpansion> {
    let d = x.len();
    let f0 = target.log_density(x);
    if !f0.is_finite() {
        return None;
    }
    let h: Vec<f64> = x.iter().map(|v| FD_STEP * v.abs().max(1.0)).collect();
    let at = |shift: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(j, s) in shift {
            y[j] += s * h[j];
        }
        target.log_density(&y)
    };
    let mut out = LocalExpansion {
        value: f0,
        grad: [0.0; 3],
        hess: [[0.0; 3]; 3],
    };
    for j in 0..d {
        let (fp, fm) = (at(&[(j, 1.0)]), at(&[(j, -1.0)]));
        out.grad[j] = (fp - fm) / (2.0 * h[j]);
        out.hess[j][j] = (fp - 2.0 * f0 + fm) / (h[j] * h[j]);
        for i in 0..j {
            let v = (at(&[(i, 1.0), (j, 1.0)]) - at(&[(i, 1.0), (j, -1.0)]) - at(&[(i, -1.0), (j, 1.0)])
                + at(&[(i, -1.0), (j, -1.0)]))
                / (4.0 * h[i] * h[j]);
            out.hess[i][j] = v;
            out.hess[j][i] = v;
        }
    }
    let finite = out.grad[..d].iter().all(|g| g.is_finite())
        && out.hess[..d].iter().all(|row| row[..d].iter().all(|v| v.is_finite()));
    finite.then_some(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceSettings {
    /// Convergence threshold on the Newton decrement gᵀ(−H)⁻¹g.
    pub tol: f64,
    pub max_iter: usize,
    /// Proposal covariance is (−H)⁻¹ scaled by inflation².
    pub inflation: f64,
}

impl Default for LaplaceSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
            inflation: 1.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Laplace {
    pub mode: Vec<f64>,
    /// Log-density at the mode.
    pub log_density: f64,
    pub cov: DMatrix<f64>,
    /// Lower Cholesky factor of `cov`.
    pub chol: DMatrix<f64>,
    /// Number of expansions evaluated.
    pub iterations: usize,
}

fn neg_hessian(e: &LocalExpansion, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |r, c| -e.hess[r][c])
}

/// Newton iteration with backtracking from `init`, then the inflated inverse
/// negative Hessian at the mode.
pub fn laplace_approx<T: LogTarget + ?Sized>(target: &T, init: &[f64], cfg: &LaplaceSettings) -> Result<Laplace> {
    let d = target.dim();
    if init.len() != d {
        return Err(Error::domain("laplace_approx", "initial point has the wrong dimension"));
    }
    let mut x = init.to_vec();
    let mut e = target
        .expansion(&x)
        .ok_or_else(|| Error::domain("laplace_approx", "log-density not finite at the initial point"))?;
    for iter in 1..=cfg.max_iter {
        let a = neg_hessian(&e, d);
        let g = DVector::from_column_slice(&e.grad[..d]);
        let chol = a.clone().cholesky();
        let (step, decrement) = match &chol {
            Some(c) => {
                let s = c.solve(&g);
                let dec = g.dot(&s);
                if dec < cfg.tol {
                    // one last Newton step; its error is second order in the current one
                    let y: Vec<f64> = x.iter().zip(s.iter()).map(|(xi, si)| xi + si).collect();
                    let fy = target.log_density(&y);
                    if fy.is_finite() && fy >= e.value - 1e-12 * (1.0 + e.value.abs()) {
                        return finish(y, fy, c.inverse(), cfg, iter);
                    }
                    return finish(x, e.value, c.inverse(), cfg, iter);
                }
                (s, dec)
            }
            None => (damped_step(&a, &g), f64::INFINITY),
        };
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let y: Vec<f64> = x.iter().zip(step.iter()).map(|(xi, si)| xi + t * si).collect();
            let fy = target.log_density(&y);
            if fy.is_finite() && fy >= e.value + 1e-4 * t * slope {
                if let Some(ey) = target.expansion(&y) {
                    x = y;
                    e = ey;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            // rounding noise at the optimum can defeat the line search
            if let (Some(c), true) = (&chol, decrement < 1e-6) {
                return finish(x, e.value, c.inverse(), cfg, iter);
            }
            return Err(Error::NoConvergence {
                func: "laplace_approx",
                iterations: iter,
            });
        }
    }
    Err(Error::NoConvergence {
        func: "laplace_approx",
        iterations: cfg.max_iter,
    })
}

fn damped_step(a: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let d = a.nrows();
    let scale = (0..d).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(1e-8);
    let mut mu = 1e-3 * scale;
    for _ in 0..60 {
        let shifted = a + DMatrix::identity(d, d) * mu;
        if let Some(c) = shifted.cholesky() {
            return c.solve(g);
        }
        mu *= 10.0;
    }
    g / scale
}

fn finish(mode: Vec<f64>, value: f64, inv: DMatrix<f64>, cfg: &LaplaceSettings, iterations: usize) -> Result<Laplace> {
    let cov = inv * (cfg.inflation * cfg.inflation);
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Laplace covariance".into()))?
        .l();
    Ok(Laplace {
        mode,
        log_density: value,
        cov,
        chol,
        iterations,
    })
}
