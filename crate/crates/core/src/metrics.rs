//! Posterior summaries of Lorenz and Gini functionals.

use crate::error::{Error, Result};
use crate::lorenz::{gini, lorenz_value};
use crate::mcmc::PosteriorDraws;

/// Minimum number of draws for a credible interval.
pub const MIN_CI_DRAWS: usize = 100;

/// A scalar function of one period's curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    Gini,
    LorenzAt(f64),
    NaturalParam(usize),
}

/// For each period, the functional evaluated at every stored latent snapshot.
pub fn functional_draws(draws: &PosteriorDraws, what: Functional) -> Result<Vec<Vec<f64>>> {
    if let Functional::NaturalParam(j) = what {
        if j >= draws.family.dim() {
            return Err(Error::domain("functional_draws", format!("{} has no parameter {j}", draws.family)));
        }
    }
    (0..draws.periods)
        .map(|t| {
            (0..draws.latent_len())
                .map(|i| {
                    let theta = draws.theta(i, t);
                    match what {
                        Functional::Gini => gini(&theta),
                        Functional::LorenzAt(p) => lorenz_value(&theta, p),
                        Functional::NaturalParam(j) => Ok(theta.values()[j]),
                    }
                })
                .collect()
        })
        .collect()
}

/// (estimate − truth) / truth.
pub fn relative_bias(estimate: f64, truth: f64) -> Result<f64> {
    if truth == 0.0 {
        return Err(Error::domain("relative_bias", "truth is zero"));
    }
    Ok((estimate - truth) / truth)
}

pub fn relative_bias_vec(estimates: &[f64], truths: &[f64]) -> Result<Vec<f64>> {
    if estimates.len() != truths.len() {
        return Err(Error::domain("relative_bias", "length mismatch"));
    }
    estimates.iter().zip(truths).map(|(&e, &t)| relative_bias(e, t)).collect()
}

/// Type-7 sample quantile of already sorted values.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-tailed interval at `level` from type-7 quantiles.
pub fn credible_interval(draws: &[f64], level: f64) -> Result<(f64, f64)> {
    if draws.len() < MIN_CI_DRAWS {
        return Err(Error::domain(
            "credible_interval",
            format!("need at least {MIN_CI_DRAWS} draws, got {}", draws.len()),
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain("credible_interval", "level must lie in (0, 1)"));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    Ok((quantile_sorted(&sorted, tail), quantile_sorted(&sorted, 1.0 - tail)))
}

/// Posterior mean and 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Summary {
    pub fn of(draws: &[f64]) -> Result<Self> {
        let (lo, hi) = credible_interval(draws, 0.95)?;
        Ok(Self {
            mean: draws.iter().sum::<f64>() / draws.len() as f64,
            lo,
            hi,
        })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn covers(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, 0.5)
}
