//! Comparison estimators: a separate Dirichlet fit per period and the
//! trapezoid Gini of the empirical Lorenz polyline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lorenz::{check_grid, gini, increments_into, latent_slice_to_theta, theta_to_latent, LorenzFamily, ThetaVector};
use crate::mcmc::laplace::{laplace_approx, LaplaceSettings, LogTarget};
use crate::model::{dirichlet_loglik, normal_logpdf, GroupedSeries};
use crate::optim::nelder_mead;

/// Independent normal priors on each transformed curve parameter and on ln λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparatePrior {
    pub coord_mean: f64,
    pub coord_var: f64,
    pub log_lambda_mean: f64,
    pub log_lambda_var: f64,
}

impl Default for SeparatePrior {
    fn default() -> Self {
        Self {
            coord_mean: 0.0,
            coord_var: 1.0,
            log_lambda_mean: 0.0,
            log_lambda_var: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparateConfig {
    pub n_burnin: usize,
    pub n_draws: usize,
    pub seed: u64,
    /// Acceptance rate targeted by the burn-in scale adaptation.
    pub adapt_target: f64,
}

impl Default for SeparateConfig {
    fn default() -> Self {
        Self {
            n_burnin: 2000,
            n_draws: 10_000,
            seed: 0,
            adapt_target: 0.3,
        }
    }
}

/// Window over which persistent invalid proposals abort a fit.
const ABORT_WINDOW: usize = 1000;
const ABORT_FRACTION: f64 = 0.999;

/// Posterior draws of (u, ln λ) for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparateFitResult {
    pub family: LorenzFamily,
    /// Row-major, d + 1 values per draw: the transformed parameters then ln λ.
    pub draws: Vec<f64>,
    pub acceptance_rate: f64,
}

impl SeparateFitResult {
    pub fn len(&self) -> usize {
        self.draws.len() / (self.family.dim() + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    fn row(&self, i: usize) -> &[f64] {
        let w = self.family.dim() + 1;
        &self.draws[i * w..(i + 1) * w]
    }

    pub fn theta(&self, i: usize) -> ThetaVector<f64> {
        latent_slice_to_theta(self.family, &self.row(i)[..self.family.dim()])
    }

    pub fn log_lambda(&self, i: usize) -> f64 {
        self.row(i)[self.family.dim()]
    }

    pub fn gini_draws(&self) -> Result<Vec<f64>> {
        (0..self.len()).map(|i| gini(&self.theta(i))).collect()
    }
}

struct SeparateTarget<'a> {
    family: LorenzFamily,
    p_grid: &'a [f64],
    ln_q: Vec<f64>,
    prior: SeparatePrior,
}

impl SeparateTarget<'_> {
    fn valid_curve(&self, x: &[f64], inc: &mut [f64]) -> bool {
        let d = self.family.dim();
        let theta = latent_slice_to_theta(self.family, &x[..d]);
        theta.is_valid() && matches!(increments_into(&theta, self.p_grid, inc), Ok(true))
    }
}

impl LogTarget for SeparateTarget<'_> {
    fn dim(&self) -> usize {
        self.family.dim() + 1
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.family.dim();
        let mut buf = [0.0; 64];
        let mut heap;
        let inc: &mut [f64] = if self.ln_q.len() <= buf.len() {
            &mut buf[..self.ln_q.len()]
        } else {
            heap = vec![0.0; self.ln_q.len()];
            &mut heap
        };
        if !self.valid_curve(x, inc) {
            return f64::NEG_INFINITY;
        }
        let prior: f64 = x[..d]
            .iter()
            .map(|&v| normal_logpdf(v, self.prior.coord_mean, self.prior.coord_var))
            .sum::<f64>()
            + normal_logpdf(x[d], self.prior.log_lambda_mean, self.prior.log_lambda_var);
        dirichlet_loglik(&self.ln_q, inc, x[d].exp()) + prior
    }
}

/// Random-walk MH on (u, ln λ) for a single period.
///
/// The chain starts at the posterior mode; proposal standard deviations are
/// the Laplace marginal standard deviations times a common scale that is
/// adapted toward `cfg.adapt_target` during burn-in.
pub fn fit_separate<R: Rng + ?Sized>(
    q_row: &[f64],
    p_grid: &[f64],
    family: LorenzFamily,
    prior: &SeparatePrior,
    cfg: &SeparateConfig,
    rng: &mut R,
) -> Result<SeparateFitResult> {
    check_grid(p_grid)?;
    if q_row.len() + 1 != p_grid.len() || q_row.iter().any(|q| !(*q > 0.0)) {
        return Err(Error::domain("fit_separate", "shares must be positive and match the grid"));
    }
    let d = family.dim();
    let target = SeparateTarget {
        family,
        p_grid,
        ln_q: q_row.iter().map(|q| q.ln()).collect(),
        prior: *prior,
    };
    let mut x0 = theta_to_latent(&family.default_start())?.values().to_vec();
    x0.push(100f64.ln());
    let mut x = nelder_mead(|x| -target.log_density(x), &x0, 0.5, 1e-12, 4000);
    let mut lp = target.log_density(&x);
    if !lp.is_finite() {
        return Err(Error::domain("fit_separate", format!("no valid {family} curve found for these shares")));
    }
    let sd: Vec<f64> = match laplace_approx(&target, &x, &LaplaceSettings { inflation: 1.0, ..Default::default() }) {
        Ok(lap) => {
            x = lap.mode.clone();
            lp = lap.log_density;
            (0..=d).map(|i| lap.cov[(i, i)].sqrt()).collect()
        }
        Err(_) => vec![0.1; d + 1],
    };

    let mut log_scale = (2.38 / ((d + 1) as f64).sqrt()).ln();
    let mut draws = Vec::with_capacity(cfg.n_draws * (d + 1));
    let (mut accepted, mut invalid_run) = (0usize, 0usize);
    let mut invalid_window = [false; ABORT_WINDOW];
    let total = cfg.n_burnin + cfg.n_draws;
    let mut y = vec![0.0; d + 1];
    for it in 0..total {
        let scale = log_scale.exp();
        for i in 0..=d {
            let z: f64 = rng.sample(StandardNormal);
            y[i] = x[i] + scale * sd[i] * z;
        }
        let ly = target.log_density(&y);
        let slot = it % ABORT_WINDOW;
        if invalid_window[slot] {
            invalid_run -= 1;
        }
        invalid_window[slot] = ly == f64::NEG_INFINITY;
        invalid_run += invalid_window[slot] as usize;
        if it + 1 >= ABORT_WINDOW && invalid_run as f64 > ABORT_FRACTION * ABORT_WINDOW as f64 {
            return Err(Error::ChainAbort {
                iteration: it,
                msg: format!("{invalid_run} of the last {ABORT_WINDOW} proposals were invalid {family} curves"),
            });
        }
        let acc = ly > f64::NEG_INFINITY && rng.gen::<f64>().ln() < ly - lp;
        if acc {
            x.copy_from_slice(&y);
            lp = ly;
        }
        if it < cfg.n_burnin {
            let gain = ((it + 1) as f64).powf(-0.6);
            log_scale += gain * (acc as u8 as f64 - cfg.adapt_target);
        } else {
            accepted += acc as usize;
            draws.extend_from_slice(&x);
        }
    }
    Ok(SeparateFitResult {
        family,
        draws,
        acceptance_rate: if cfg.n_draws > 0 {
            accepted as f64 / cfg.n_draws as f64
        } else {
            0.0
        },
    })
}

/// Independent random stream for period `t` of a run seeded with `seed`.
pub fn period_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64 + 1);
    rng
}

/// Separate fits for every period of `data`, each on its own stream.
pub fn fit_separate_series(
    data: &GroupedSeries,
    family: LorenzFamily,
    prior: &SeparatePrior,
    cfg: &SeparateConfig,
) -> Result<Vec<SeparateFitResult>> {
    (0..data.periods())
        .map(|t| fit_separate_period(data, t, family, prior, cfg))
        .collect()
}

/// Separate fit of period `t` using [`period_rng`].
pub fn fit_separate_period(
    data: &GroupedSeries,
    t: usize,
    family: LorenzFamily,
    prior: &SeparatePrior,
    cfg: &SeparateConfig,
) -> Result<SeparateFitResult> {
    let mut rng = period_rng(cfg.seed, t);
    fit_separate(data.row(t), data.p_grid(), family, prior, cfg, &mut rng).map_err(|e| Error::InvalidPeriod {
        period: data.labels()[t].clone(),
        msg: e.to_string(),
    })
}

/// 1 − Σ_k (y_k + y_{k−1})(p_k − p_{k−1}) with y the cumulative shares.
pub fn crude_gini(q_row: &[f64], p_grid: &[f64]) -> Result<f64> {
    check_grid(p_grid)?;
    if q_row.len() + 1 != p_grid.len() {
        return Err(Error::domain("crude_gini", "need one share per class"));
    }
    let mut prev = 0.0;
    let mut twice_area = 0.0;
    for (k, q) in q_row.iter().enumerate() {
        let y = prev + q;
        twice_area += (y + prev) * (p_grid[k + 1] - p_grid[k]);
        prev = y;
    }
    Ok(1.0 - twice_area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lorenz::lorenz_increments;
    use rand_distr::Distribution;

    const QUINTILES: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

    #[test]
    fn crude_gini_examples() {
        assert!(crude_gini(&[0.2; 5], &QUINTILES).unwrap().abs() < 1e-15);
        let g = crude_gini(&[0.1, 0.15, 0.2, 0.25, 0.3], &QUINTILES).unwrap();
        assert!((g - 0.2).abs() < 1e-15, "{g}");
        let eps = 1e-9;
        let g = crude_gini(&[eps, eps, eps, eps, 1.0 - 4.0 * eps], &QUINTILES).unwrap();
        assert!((g - 0.8).abs() < 1e-8);
    }

    #[test]
    fn crude_gini_invariant_to_merging_proportional_classes() {
        let fine = crude_gini(&[0.05, 0.05, 0.15, 0.15, 0.6], &[0.0, 0.1, 0.2, 0.4, 0.6, 1.0]).unwrap();
        let coarse = crude_gini(&[0.1, 0.3, 0.6], &[0.0, 0.2, 0.6, 1.0]).unwrap();
        assert!((fine - coarse).abs() < 1e-15);
    }

    #[test]
    fn crude_gini_below_parametric_gini() {
        let theta = ThetaVector::new(LorenzFamily::SinghMaddala, &[3.5, 1.5]).unwrap();
        let q = lorenz_increments(&theta, &QUINTILES).unwrap().values;
        assert!(crude_gini(&q, &QUINTILES).unwrap() < gini(&theta).unwrap());
    }

    #[test]
    fn egalitarian_shares_give_small_gini() {
        let cfg = SeparateConfig {
            n_burnin: 500,
            n_draws: 2000,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fit = fit_separate(&[0.2; 5], &QUINTILES, LorenzFamily::Lognormal, &SeparatePrior::default(), &cfg, &mut rng).unwrap();
        assert_eq!(fit.len(), 2000);
        let g = fit.gini_draws().unwrap();
        assert!(g.iter().sum::<f64>() / (g.len() as f64) < 0.05);
    }

    #[test]
    fn separate_fit_recovers_gini() {
        let theta = ThetaVector::new(LorenzFamily::SinghMaddala, &[3.2, 1.6]).unwrap();
        let inc = lorenz_increments(&theta, &QUINTILES).unwrap().values;
        let alpha: Vec<f64> = inc.iter().map(|a| 2000.0 * a).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = rand_distr::Dirichlet::new(&alpha).unwrap().sample(&mut rng);
        let cfg = SeparateConfig {
            n_burnin: 1000,
            n_draws: 4000,
            ..Default::default()
        };
        let fit = fit_separate(&q, &QUINTILES, LorenzFamily::SinghMaddala, &SeparatePrior::default(), &cfg, &mut rng).unwrap();
        let g = fit.gini_draws().unwrap();
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        assert!((mean - gini(&theta).unwrap()).abs() < 0.02, "{mean}");
        assert!(fit.acceptance_rate > 0.1 && fit.acceptance_rate < 0.6, "{}", fit.acceptance_rate);
        let ll = (0..fit.len()).map(|i| fit.log_lambda(i)).sum::<f64>() / fit.len() as f64;
        assert!((ll - 2000f64.ln()).abs() < 1.0, "{ll}");
    }
}
