//! Full-conditional updates for one sweep of the sampler.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::armh::{armh_step, rw_step, Blanket};
use super::laplace::{laplace_approx, LaplaceSettings, LogTarget};
use crate::lorenz::MAX_DIM;
use crate::model::{
    lambda_t, normal_logpdf, ChainState, CoordParams, GroupedSeries, LocalExpansion, PeriodLikelihood, PriorSpec,
    ProcessKind,
};
use crate::special::ln_gamma_pos;
use crate::LorenzFamily;

/// Gaussian factor of π(u_tj | rest) contributed by the latent process.
pub fn latent_prior_moments(state: &ChainState, t: usize, j: usize, c: f64) -> (f64, f64) {
    let periods = state.periods();
    let d = state.dim;
    let at = |s: usize| state.u[s * d + j];
    let CoordParams { mu, rho, tau2 } = state.eta[j];
    match state.kind {
        ProcessKind::Ar1 => {
            if periods == 1 {
                (mu, tau2 / (1.0 - rho * rho))
            } else if t == 0 {
                (mu + rho * (at(1) - mu), tau2)
            } else if t + 1 == periods {
                (mu + rho * (at(t - 1) - mu), tau2)
            } else {
                let prec = (1.0 + rho * rho) / tau2;
                (mu + rho * (at(t - 1) - mu + at(t + 1) - mu) / (1.0 + rho * rho), 1.0 / prec)
            }
        }
        ProcessKind::RandomWalk => {
            if periods == 1 {
                (0.0, c * tau2)
            } else if t == 0 {
                let prec = 1.0 / (c * tau2) + 1.0 / tau2;
                (at(1) / tau2 / prec, 1.0 / prec)
            } else if t + 1 == periods {
                (at(t - 1), tau2)
            } else {
                (0.5 * (at(t - 1) + at(t + 1)), 0.5 * tau2)
            }
        }
    }
}

/// π(u_t | rest) as a [`LogTarget`]; the likelihood factor is optional.
#[derive(Debug, Clone)]
pub struct LatentTarget<'a> {
    lik: Option<PeriodLikelihood<'a>>,
    mean: [f64; MAX_DIM],
    var: [f64; MAX_DIM],
    dim: usize,
}

impl<'a> LatentTarget<'a> {
    pub fn new(lik: Option<PeriodLikelihood<'a>>, mean: &[f64], var: &[f64]) -> Self {
        let mut m = [0.0; MAX_DIM];
        let mut v = [1.0; MAX_DIM];
        m[..mean.len()].copy_from_slice(mean);
        v[..var.len()].copy_from_slice(var);
        Self {
            lik,
            mean: m,
            var: v,
            dim: mean.len(),
        }
    }

    fn prior_part(&self, x: &[f64]) -> f64 {
        (0..self.dim)
            .map(|j| -0.5 * (x[j] - self.mean[j]).powi(2) / self.var[j])
            .sum()
    }
}

impl LogTarget for LatentTarget<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let obs = self.lik.as_ref().map_or(0.0, |l| l.value(x));
        obs + self.prior_part(x)
    }

    fn expansion(&self, x: &[f64]) -> Option<LocalExpansion> {
        let mut e = match &self.lik {
            Some(l) => l.expansion(x)?,
            None => LocalExpansion {
                value: 0.0,
                grad: [0.0; MAX_DIM],
                hess: [[0.0; MAX_DIM]; MAX_DIM],
            },
        };
        e.value += self.prior_part(x);
        for j in 0..self.dim {
            e.grad[j] -= (x[j] - self.mean[j]) / self.var[j];
            e.hess[j][j] -= 1.0 / self.var[j];
        }
        Some(e)
    }
}

/// Per-period memory of the last Laplace fit, used for warm starts and as the
/// random-walk scale.
#[derive(Debug, Clone, Default)]
pub struct LatentCache {
    modes: Vec<Option<Vec<f64>>>,
    chols: Vec<Option<DMatrix<f64>>>,
}

impl LatentCache {
    pub fn new(periods: usize) -> Self {
        Self {
            modes: vec![None; periods],
            chols: vec![None; periods],
        }
    }
}

/// Which kernel produced a latent update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentMove {
    Armh { accepted: bool },
    RandomWalk { accepted: bool, fallback: bool },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentKernelSettings {
    pub laplace: LaplaceSettings,
    /// Probability of a random-walk update in place of ARMH (burn-in only).
    pub rw_mix_prob: f64,
    pub max_ar_trials: usize,
    pub use_likelihood: bool,
}

/// Updates u_t in place.
#[allow(clippy::too_many_arguments)]
pub fn step_u_t<R: Rng + ?Sized>(
    t: usize,
    state: &mut ChainState,
    data: &GroupedSeries,
    family: LorenzFamily,
    priors: &PriorSpec,
    settings: &LatentKernelSettings,
    cache: &mut LatentCache,
    burnin: bool,
    rng: &mut R,
) -> LatentMove {
    let d = state.dim;
    let (mut mean, mut var) = ([0.0; MAX_DIM], [0.0; MAX_DIM]);
    for j in 0..d {
        (mean[j], var[j]) = latent_prior_moments(state, t, j, priors.rw_c);
    }
    let lik = settings.use_likelihood.then(|| {
        PeriodLikelihood::new(family, data.p_grid(), data.row(t), lambda_t(state.psi, data.sample_size(t)))
    });
    let target = LatentTarget::new(lik, &mean[..d], &var[..d]);
    let x: Vec<f64> = state.u_t(t).to_vec();
    let log_pi_x = target.log_density(&x);

    let rw = |cache: &LatentCache, rng: &mut R, fallback: bool| {
        let chol = cache.chols[t]
            .clone()
            .unwrap_or_else(|| DMatrix::from_fn(d, d, |r, c| if r == c { 0.1 * var[r].sqrt() } else { 0.0 }));
        let m = rw_step(&target, &chol, &x, log_pi_x, rng);
        (m, LatentMove::RandomWalk { accepted: false, fallback })
    };

    let (m, kind) = if burnin && rng.gen::<f64>() < settings.rw_mix_prob {
        rw(cache, rng, false)
    } else {
        let init = match &cache.modes[t] {
            Some(m) if target.log_density(m).is_finite() => m.clone(),
            _ => x.clone(),
        };
        match laplace_approx(&target, &init, &settings.laplace) {
            Ok(lap) => {
                let blanket = Blanket::new(&lap);
                let step = armh_step(&target, &blanket, &x, log_pi_x, settings.max_ar_trials, rng);
                cache.modes[t] = Some(lap.mode.clone());
                cache.chols[t] = Some(lap.chol.clone());
                match step {
                    Some(m) => (m, LatentMove::Armh { accepted: false }),
                    None => {
                        log::debug!("period {t}: accept-reject phase exhausted, using random walk");
                        rw(cache, rng, true)
                    }
                }
            }
            Err(e) => {
                log::debug!("period {t}: mode search failed ({e}), using random walk");
                cache.modes[t] = None;
                rw(cache, rng, true)
            }
        }
    };
    state.u[t * d..(t + 1) * d].copy_from_slice(&m.x);
    match kind {
        LatentMove::Armh { .. } => LatentMove::Armh { accepted: m.accepted },
        LatentMove::RandomWalk { fallback, .. } => LatentMove::RandomWalk {
            accepted: m.accepted,
            fallback,
        },
    }
}

fn column(state: &ChainState, j: usize) -> Vec<f64> {
    (0..state.periods()).map(|t| state.u[t * state.dim + j]).collect()
}

/// Mean and precision of the conjugate normal full conditional of μ_j.
pub fn mu_conditional(state: &ChainState, j: usize, priors: &PriorSpec) -> (f64, f64) {
    let u = column(state, j);
    let CoordParams { rho, tau2, .. } = state.eta[j];
    let pr = priors.coords[j];
    let n = u.len() as f64;
    let prec = (1.0 - rho * rho) / tau2 + (n - 1.0) * (1.0 - rho).powi(2) / tau2 + 1.0 / pr.mu_var;
    let lag: f64 = u.windows(2).map(|w| w[1] - rho * w[0]).sum();
    let num = (1.0 - rho * rho) * u[0] / tau2 + (1.0 - rho) * lag / tau2 + pr.mu_mean / pr.mu_var;
    (num / prec, prec)
}

pub fn step_mu_j<R: Rng + ?Sized>(j: usize, state: &mut ChainState, priors: &PriorSpec, rng: &mut R) {
    let (mean, prec) = mu_conditional(state, j, priors);
    let z: f64 = rng.sample(StandardNormal);
    state.eta[j].mu = mean + z / prec.sqrt();
}

/// Log of the ρ_j full conditional up to a constant; −∞ outside (−1, 1).
pub fn rho_log_conditional(state: &ChainState, j: usize, rho: f64) -> f64 {
    if !(rho.abs() < 1.0) {
        return f64::NEG_INFINITY;
    }
    let u = column(state, j);
    let CoordParams { mu, tau2, .. } = state.eta[j];
    let first = 0.5 * (1.0 - rho * rho).ln() - (1.0 - rho * rho) * (u[0] - mu).powi(2) / (2.0 * tau2);
    let rest: f64 = u
        .windows(2)
        .map(|w| (w[1] - mu - rho * (w[0] - mu)).powi(2))
        .sum::<f64>()
        / (2.0 * tau2);
    first - rest
}

/// Mean and variance of the Gaussian independence proposal for ρ_j, or `None`
/// when the lagged sum of squares vanishes.
pub fn rho_proposal(state: &ChainState, j: usize) -> Option<(f64, f64)> {
    let u = column(state, j);
    let CoordParams { mu, tau2, .. } = state.eta[j];
    let (cross, sq) = u.windows(2).fold((0.0, 0.0), |(c, s), w| {
        (c + (w[1] - mu) * (w[0] - mu), s + (w[0] - mu).powi(2))
    });
    (sq > 1e-300 && (tau2 / sq).is_finite()).then(|| (cross / sq, tau2 / sq))
}

/// Independence MH update of ρ_j. Returns whether the proposal was accepted.
pub fn step_rho_j<R: Rng + ?Sized>(j: usize, state: &mut ChainState, rng: &mut R) -> bool {
    let current = state.eta[j].rho;
    let (proposal, log_ratio) = match rho_proposal(state, j) {
        Some((m, v)) => {
            let z: f64 = rng.sample(StandardNormal);
            let prop = m + v.sqrt() * z;
            if !(prop.abs() < 1.0) {
                return false;
            }
            // the Gaussian part of the conditional cancels against the proposal
            let dev0 = state.u[j] - state.eta[j].mu;
            let tau2 = state.eta[j].tau2;
            let g = |r: f64| 0.5 * (1.0 - r * r).ln() - (1.0 - r * r) * dev0 * dev0 / (2.0 * tau2);
            (prop, g(prop) - g(current))
        }
        None => {
            let prop = rng.gen_range(-1.0..1.0);
            (prop, rho_log_conditional(state, j, prop) - rho_log_conditional(state, j, current))
        }
    };
    if rng.gen::<f64>().ln() < log_ratio {
        state.eta[j].rho = proposal;
        true
    } else {
        false
    }
}

/// Shape and scale (r̂, ŝ) of the inverse-gamma full conditional of τ_j².
pub fn tau2_conditional(state: &ChainState, j: usize, priors: &PriorSpec) -> (f64, f64) {
    let u = column(state, j);
    let CoordParams { mu, rho, .. } = state.eta[j];
    let pr = priors.coords[j];
    let ss = match state.kind {
        ProcessKind::Ar1 => {
            (1.0 - rho * rho) * (u[0] - mu).powi(2)
                + u.windows(2).map(|w| (w[1] - mu - rho * (w[0] - mu)).powi(2)).sum::<f64>()
        }
        ProcessKind::RandomWalk => u[0].powi(2) / priors.rw_c + u.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>(),
    };
    (pr.tau2_shape + 0.5 * u.len() as f64, pr.tau2_scale + 0.5 * ss)
}

pub fn step_tau2_j<R: Rng + ?Sized>(j: usize, state: &mut ChainState, priors: &PriorSpec, rng: &mut R) {
    let (shape, scale) = tau2_conditional(state, j, priors);
    let g = Gamma::new(shape, 1.0 / scale).expect("positive inverse-gamma parameters");
    state.eta[j].tau2 = 1.0 / g.sample(rng);
}

/// Σ_t ln f(q_t | u_t, ψ) + ln π(ψ) using cached increments (row-major T×K).
pub fn psi_log_target(psi: f64, data: &GroupedSeries, increments: Option<&[f64]>, priors: &PriorSpec) -> f64 {
    let prior = normal_logpdf(psi, priors.psi_mean, priors.psi_var);
    let Some(inc) = increments else {
        return prior;
    };
    let k = data.classes();
    let mut total = prior;
    for t in 0..data.periods() {
        let lam = lambda_t(psi, data.sample_size(t));
        total += ln_gamma_pos(lam);
        for (dl, q) in inc[t * k..(t + 1) * k].iter().zip(data.row(t)) {
            let a = lam * dl;
            total += (a - 1.0) * q.ln() - ln_gamma_pos(a);
        }
    }
    if total.is_nan() {
        f64::NEG_INFINITY
    } else {
        total
    }
}

/// Random-walk MH update of ψ with standard deviation `step`.
pub fn step_psi<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &GroupedSeries,
    increments: Option<&[f64]>,
    priors: &PriorSpec,
    step: f64,
    rng: &mut R,
) -> bool {
    let z: f64 = rng.sample(StandardNormal);
    let prop = state.psi + step * z;
    let ratio = psi_log_target(prop, data, increments, priors) - psi_log_target(state.psi, data, increments, priors);
    if rng.gen::<f64>().ln() < ratio {
        state.psi = prop;
        true
    } else {
        false
    }
}
