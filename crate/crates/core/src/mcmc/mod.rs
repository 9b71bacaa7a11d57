//! Posterior sampler for the state-space model.
//!
//! One sweep updates, in order, every latent vector u_1..u_T (ARMH around the
//! conditional mode), then for each coordinate μ_j (conjugate normal), ρ_j
//! (independence MH), τ_j² (inverse gamma), and finally ψ (random-walk MH).
//! μ_j and ρ_j are skipped under the random-walk process.

pub mod armh;
pub mod diagnostics;
pub mod kernels;
pub mod laplace;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lorenz::{increments_into, latent_slice_to_theta, LorenzFamily, ThetaVector};
use crate::model::{initial_state, ChainState, CoordParams, GroupedSeries, PriorSpec, ProcessKind};
use kernels::{LatentCache, LatentKernelSettings, LatentMove};
use laplace::LaplaceSettings;

pub use diagnostics::{autocorrelations, inefficiency_factor};

/// Generator used for every chain; seeded through [`SamplerConfig::seed`].
pub type ChainRng = ChaCha8Rng;

/// Smallest ψ proposal standard deviation.
pub const MIN_PSI_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub n_burnin: usize,
    pub n_draws: usize,
    pub seed: u64,
    pub armh_inflation: f64,
    pub rw_mix_prob: f64,
    /// Initial ψ random-walk standard deviation.
    pub psi_step: f64,
    /// Acceptance rate the ψ step size is adapted toward during burn-in.
    pub adapt_target: f64,
    pub mode_find_tol: f64,
    pub mode_find_max_iter: usize,
    /// Cap on accept-reject draws before an update falls back to a random walk.
    pub max_ar_trials: usize,
    /// Keep the latent path of every `latent_every`-th draw (0 keeps none).
    pub latent_every: usize,
    /// Include the observation density. Turning it off samples the prior,
    /// which is only useful for checking the kernels.
    pub use_likelihood: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_burnin: 2000,
            n_draws: 10_000,
            seed: 0,
            armh_inflation: 1.2,
            rw_mix_prob: 0.05,
            psi_step: 0.1,
            adapt_target: 0.3,
            mode_find_tol: 1e-8,
            mode_find_max_iter: 50,
            max_ar_trials: 1000,
            latent_every: 1,
            use_likelihood: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.n_draws > 0
            && self.armh_inflation > 0.0
            && self.psi_step > 0.0
            && self.adapt_target > 0.0
            && self.adapt_target < 1.0
            && self.mode_find_tol > 0.0
            && self.mode_find_max_iter > 0
            && self.max_ar_trials > 0;
        if !positive {
            return Err(Error::Config("sampler settings must be positive (adapt_target in (0, 1))".into()));
        }
        if !(0.0..=1.0).contains(&self.rw_mix_prob) {
            return Err(Error::Config("rw_mix_prob must lie in [0, 1]".into()));
        }
        Ok(())
    }

    fn latent_settings(&self) -> LatentKernelSettings {
        LatentKernelSettings {
            laplace: LaplaceSettings {
                tol: self.mode_find_tol,
                max_iter: self.mode_find_max_iter,
                inflation: self.armh_inflation,
            },
            rw_mix_prob: self.rw_mix_prob,
            max_ar_trials: self.max_ar_trials,
            use_likelihood: self.use_likelihood,
        }
    }
}

/// Accepted/attempted counts per kernel, gathered after burn-in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AcceptanceStats {
    pub latent_armh: (u64, u64),
    pub latent_rw: (u64, u64),
    pub latent_fallbacks: u64,
    pub rho: (u64, u64),
    pub psi: (u64, u64),
}

fn rate((acc, tried): (u64, u64)) -> Option<f64> {
    (tried > 0).then(|| acc as f64 / tried as f64)
}

impl AcceptanceStats {
    pub fn latent_armh_rate(&self) -> Option<f64> {
        rate(self.latent_armh)
    }

    pub fn latent_rw_rate(&self) -> Option<f64> {
        rate(self.latent_rw)
    }

    pub fn rho_rate(&self) -> Option<f64> {
        rate(self.rho)
    }

    pub fn psi_rate(&self) -> Option<f64> {
        rate(self.psi)
    }
}

fn bump(counter: &mut (u64, u64), accepted: bool) {
    counter.0 += accepted as u64;
    counter.1 += 1;
}

/// Stored output of [`run_chain`].
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub family: LorenzFamily,
    pub kind: ProcessKind,
    pub periods: usize,
    pub dim: usize,
    /// One entry per draw, `dim` coordinates each (row-major).
    pub eta: Vec<CoordParams<f64>>,
    pub psi: Vec<f64>,
    /// Latent paths of the stored draws, each T×d row-major.
    pub latent: Vec<f64>,
    pub latent_every: usize,
    pub acceptance: AcceptanceStats,
    /// Final ψ proposal standard deviation.
    pub psi_step: f64,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn mu(&self, j: usize) -> Vec<f64> {
        self.eta.iter().skip(j).step_by(self.dim).map(|p| p.mu).collect()
    }

    pub fn rho(&self, j: usize) -> Vec<f64> {
        self.eta.iter().skip(j).step_by(self.dim).map(|p| p.rho).collect()
    }

    pub fn tau2(&self, j: usize) -> Vec<f64> {
        self.eta.iter().skip(j).step_by(self.dim).map(|p| p.tau2).collect()
    }

    pub fn eta_at(&self, draw: usize) -> &[CoordParams<f64>] {
        &self.eta[draw * self.dim..(draw + 1) * self.dim]
    }

    /// Number of draws with a stored latent path.
    pub fn latent_len(&self) -> usize {
        self.latent.len() / (self.periods * self.dim)
    }

    /// Index into the full draw sequence of the `i`-th stored latent path.
    pub fn latent_draw_index(&self, i: usize) -> usize {
        i * self.latent_every
    }

    /// Latent path of the `i`-th stored snapshot.
    pub fn latent_path(&self, i: usize) -> &[f64] {
        let size = self.periods * self.dim;
        &self.latent[i * size..(i + 1) * size]
    }

    pub fn u_t(&self, i: usize, t: usize) -> &[f64] {
        let path = self.latent_path(i);
        &path[t * self.dim..(t + 1) * self.dim]
    }

    pub fn theta(&self, i: usize, t: usize) -> ThetaVector<f64> {
        latent_slice_to_theta(self.family, self.u_t(i, t))
    }

    /// ψ paired with each stored latent snapshot.
    pub fn latent_psi(&self, i: usize) -> f64 {
        self.psi[self.latent_draw_index(i)]
    }
}

/// A running chain: state, adaptation, and the random stream.
#[derive(Debug, Clone)]
pub struct Sampler {
    family: LorenzFamily,
    priors: PriorSpec,
    cfg: SamplerConfig,
    settings: LatentKernelSettings,
    state: ChainState,
    rng: ChainRng,
    cache: LatentCache,
    increments: Vec<f64>,
    psi_step: f64,
    adapt_iter: usize,
    stats: AcceptanceStats,
}

impl Sampler {
    /// Starts from [`initial_state`].
    pub fn new(data: &GroupedSeries, family: LorenzFamily, kind: ProcessKind, priors: PriorSpec, cfg: SamplerConfig) -> Result<Self> {
        let state = initial_state(data, family, kind)?;
        Self::from_state(state, data, family, priors, cfg)
    }

    pub fn from_state(state: ChainState, data: &GroupedSeries, family: LorenzFamily, priors: PriorSpec, cfg: SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        priors.validate(family.dim())?;
        if state.dim != family.dim() || state.periods() != data.periods() || state.eta.len() != state.dim {
            return Err(Error::Config("chain state does not match the data and family".into()));
        }
        let rng = ChainRng::seed_from_u64(cfg.seed);
        let mut s = Self {
            family,
            priors,
            settings: cfg.latent_settings(),
            psi_step: cfg.psi_step,
            cfg,
            cache: LatentCache::new(state.periods()),
            increments: vec![0.0; data.periods() * data.classes()],
            state,
            rng,
            adapt_iter: 0,
            stats: AcceptanceStats::default(),
        };
        for t in 0..data.periods() {
            s.refresh_increments(data, t)?;
        }
        Ok(s)
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn psi_step(&self) -> f64 {
        self.psi_step
    }

    pub fn stats(&self) -> AcceptanceStats {
        self.stats
    }

    pub fn rng_mut(&mut self) -> &mut ChainRng {
        &mut self.rng
    }

    fn refresh_increments(&mut self, data: &GroupedSeries, t: usize) -> Result<()> {
        if !self.cfg.use_likelihood {
            return Ok(());
        }
        let k = data.classes();
        let theta = latent_slice_to_theta(self.family, self.state.u_t(t));
        let out = &mut self.increments[t * k..(t + 1) * k];
        match increments_into(&theta, data.p_grid(), out) {
            Ok(true) if theta.is_valid() => Ok(()),
            _ => Err(Error::InvalidPeriod {
                period: data.labels()[t].clone(),
                msg: "latent state maps to an invalid Lorenz curve".into(),
            }),
        }
    }

    /// One full sweep. Statistics are recorded only when `burnin` is false;
    /// the ψ step size adapts only when it is true.
    pub fn sweep(&mut self, data: &GroupedSeries, burnin: bool) -> Result<()> {
        for t in 0..data.periods() {
            let mv = kernels::step_u_t(
                t,
                &mut self.state,
                data,
                self.family,
                &self.priors,
                &self.settings,
                &mut self.cache,
                burnin,
                &mut self.rng,
            );
            self.refresh_increments(data, t)?;
            if !burnin {
                match mv {
                    LatentMove::Armh { accepted } => bump(&mut self.stats.latent_armh, accepted),
                    LatentMove::RandomWalk { accepted, fallback } => {
                        bump(&mut self.stats.latent_rw, accepted);
                        self.stats.latent_fallbacks += fallback as u64;
                    }
                }
            }
        }
        for j in 0..self.state.dim {
            if self.state.kind == ProcessKind::Ar1 {
                kernels::step_mu_j(j, &mut self.state, &self.priors, &mut self.rng);
                let acc = kernels::step_rho_j(j, &mut self.state, &mut self.rng);
                if !burnin {
                    bump(&mut self.stats.rho, acc);
                }
            }
            kernels::step_tau2_j(j, &mut self.state, &self.priors, &mut self.rng);
        }
        let inc = self.cfg.use_likelihood.then_some(self.increments.as_slice());
        let acc = kernels::step_psi(&mut self.state, data, inc, &self.priors, self.psi_step, &mut self.rng);
        if burnin {
            self.adapt_iter += 1;
            let gain = (self.adapt_iter as f64).powf(-0.6);
            let log_step = self.psi_step.ln() + gain * (acc as u8 as f64 - self.cfg.adapt_target);
            self.psi_step = log_step.exp().max(MIN_PSI_STEP);
        } else {
            bump(&mut self.stats.psi, acc);
        }
        Ok(())
    }

    /// Replaces the state (keeping adaptation and the random stream).
    pub fn set_state(&mut self, state: ChainState, data: &GroupedSeries) -> Result<()> {
        self.state = state;
        for t in 0..data.periods() {
            self.refresh_increments(data, t)?;
        }
        Ok(())
    }

    /// Runs burn-in and sampling, storing every draw.
    pub fn run(mut self, data: &GroupedSeries) -> Result<PosteriorDraws> {
        let abort = |iteration: usize, e: Error| Error::ChainAbort {
            iteration,
            msg: e.to_string(),
        };
        for i in 0..self.cfg.n_burnin {
            self.sweep(data, true).map_err(|e| abort(i, e))?;
        }
        let n = self.cfg.n_draws;
        let d = self.state.dim;
        let every = self.cfg.latent_every;
        let stored = if every == 0 { 0 } else { n.div_ceil(every) };
        let mut draws = PosteriorDraws {
            family: self.family,
            kind: self.state.kind,
            periods: self.state.periods(),
            dim: d,
            eta: Vec::with_capacity(n * d),
            psi: Vec::with_capacity(n),
            latent: Vec::with_capacity(stored * self.state.u.len()),
            latent_every: every,
            acceptance: AcceptanceStats::default(),
            psi_step: self.psi_step,
        };
        for i in 0..n {
            self.sweep(data, false).map_err(|e| abort(self.cfg.n_burnin + i, e))?;
            draws.eta.extend_from_slice(&self.state.eta);
            draws.psi.push(self.state.psi);
            if every > 0 && i % every == 0 {
                draws.latent.extend_from_slice(&self.state.u);
            }
        }
        draws.acceptance = self.stats;
        Ok(draws)
    }
}

/// Full chain from the default starting state.
pub fn run_chain(
    data: &GroupedSeries,
    family: LorenzFamily,
    kind: ProcessKind,
    priors: &PriorSpec,
    cfg: &SamplerConfig,
) -> Result<PosteriorDraws> {
    Sampler::new(data, family, kind, priors.clone(), cfg.clone())?.run(data)
}
