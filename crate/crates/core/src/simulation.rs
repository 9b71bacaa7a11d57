//! Synthetic grouped-share panels from Singh–Maddala incomes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Open01, StandardNormal};

use crate::error::{Error, Result};
use crate::lorenz::{gini, latent_slice_to_theta, lorenz_value, LorenzFamily, ThetaVector};
use crate::model::{CoordParams, GroupedSeries, LatentProcessSpec, ProcessKind};

/// Generator settings. Incomes are always Singh–Maddala with β = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub periods: usize,
    pub classes: usize,
    /// Latent process for (ln α, ln γ).
    pub process: LatentProcessSpec<f64>,
    /// Sample sizes are drawn uniformly from this pool.
    pub pool: Vec<u64>,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::table1()
    }
}

impl SimConfig {
    /// T = 500, K = 5, η₁ = (1.25, 0.8, 0.015), η₂ = (0.4, 0.5, 0.02).
    pub fn table1() -> Self {
        Self {
            periods: 500,
            classes: 5,
            process: LatentProcessSpec {
                kind: ProcessKind::Ar1,
                coords: vec![
                    CoordParams { mu: 1.25, rho: 0.8, tau2: 0.015 },
                    CoordParams { mu: 0.4, rho: 0.5, tau2: 0.02 },
                ],
                c: 1e5,
            },
            pool: (5..=15).map(|k| k * 1000).collect(),
            seed: 0,
        }
    }

    /// Same as [`SimConfig::table1`] but with ρ₂ = 0.8.
    pub fn text_preset() -> Self {
        let mut cfg = Self::table1();
        cfg.process.coords[1].rho = 0.8;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.periods == 0 || self.classes < 2 {
            return Err(Error::Config("need at least one period and two classes".into()));
        }
        if self.process.coords.len() != 2 {
            return Err(Error::Config("the Singh-Maddala generator needs two latent coordinates".into()));
        }
        self.process.validate()?;
        if self.pool.is_empty() {
            return Err(Error::Config("sample-size pool is empty".into()));
        }
        if let Some(n) = self.pool.iter().find(|&&n| n == 0 || n % self.classes as u64 != 0) {
            return Err(Error::Config(format!("pool entry {n} is not a positive multiple of K = {}", self.classes)));
        }
        Ok(())
    }
}

/// Ground truth behind a simulated panel.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    /// T×d row-major latent path.
    pub latent: Vec<f64>,
    pub theta: Vec<ThetaVector<f64>>,
    pub gini: Vec<f64>,
    /// L(p_k) at every grid point, one row per period.
    pub lorenz: Vec<Vec<f64>>,
}

/// Draws a T×d path from the AR(1) or random-walk process.
pub fn simulate_latent<R: Rng + ?Sized>(spec: &LatentProcessSpec<f64>, periods: usize, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    let d = spec.coords.len();
    let mut u = vec![0.0; periods * d];
    for t in 0..periods {
        for (j, p) in spec.coords.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            let sd = p.tau2.sqrt();
            u[t * d + j] = match (spec.kind, t) {
                (ProcessKind::Ar1, 0) => p.mu + z * sd / (1.0 - p.rho * p.rho).sqrt(),
                (ProcessKind::Ar1, _) => p.mu + p.rho * (u[(t - 1) * d + j] - p.mu) + z * sd,
                (ProcessKind::RandomWalk, 0) => z * (spec.c * p.tau2).sqrt(),
                (ProcessKind::RandomWalk, _) => u[(t - 1) * d + j] + z * sd,
            };
        }
    }
    Ok(u)
}

/// n incomes from SM(α, β, γ) by inversion: x = β((1−v)^{−1/γ} − 1)^{1/α}.
pub fn sample_sm_income<R: Rng + ?Sized>(alpha: f64, beta: f64, gamma: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && beta > 0.0 && gamma > 0.0) {
        return Err(Error::InvalidParameter {
            family: LorenzFamily::SinghMaddala.tag(),
            msg: format!("alpha = {alpha}, beta = {beta}, gamma = {gamma} must be positive"),
        });
    }
    Ok((0..n)
        .map(|_| {
            let v: f64 = Open01.sample(rng);
            beta * (-(-v).ln_1p() / gamma).exp_m1().powf(alpha.recip())
        })
        .collect())
}

/// Sorts incomes and returns the income shares of K equally sized classes.
pub fn group_shares(incomes: &[f64], classes: usize) -> Result<Vec<f64>> {
    if classes == 0 || incomes.is_empty() || incomes.len() % classes != 0 {
        return Err(Error::domain(
            "group_shares",
            format!("{} incomes cannot be split into {classes} equal classes", incomes.len()),
        ));
    }
    let mut sorted = incomes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = sorted.iter().sum();
    if !(total > 0.0) {
        return Err(Error::domain("group_shares", "total income must be positive"));
    }
    let size = sorted.len() / classes;
    Ok(sorted.chunks(size).map(|c| c.iter().sum::<f64>() / total).collect())
}

/// Simulates a full panel and its truth. Deterministic in `cfg.seed`.
pub fn generate_dataset(cfg: &SimConfig) -> Result<(GroupedSeries, SimTruth)> {
    cfg.validate()?;
    let family = LorenzFamily::SinghMaddala;
    let k = cfg.classes;
    let p_grid: Vec<f64> = (0..=k).map(|i| i as f64 / k as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let latent = simulate_latent(&cfg.process, cfg.periods, &mut rng)?;
    let n: Vec<u64> = (0..cfg.periods).map(|_| cfg.pool[rng.gen_range(0..cfg.pool.len())]).collect();

    let mut rows = Vec::with_capacity(cfg.periods);
    let mut truth = SimTruth {
        latent: latent.clone(),
        theta: Vec::with_capacity(cfg.periods),
        gini: Vec::with_capacity(cfg.periods),
        lorenz: Vec::with_capacity(cfg.periods),
    };
    for t in 0..cfg.periods {
        let theta = latent_slice_to_theta(family, &latent[t * 2..t * 2 + 2]);
        theta.validate().map_err(|e| Error::InvalidPeriod {
            period: (t + 1).to_string(),
            msg: format!("simulated parameters are invalid: {e}"),
        })?;
        let v = theta.values();
        // one stream per period so periods can be generated independently
        let mut period_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        period_rng.set_stream(t as u64 + 1);
        let incomes = sample_sm_income(v[0], 1.0, v[1], n[t] as usize, &mut period_rng)?;
        rows.push(group_shares(&incomes, k)?);
        truth.gini.push(gini(&theta)?);
        truth.lorenz.push(p_grid.iter().map(|&p| lorenz_value(&theta, p)).collect::<Result<_>>()?);
        truth.theta.push(theta);
    }
    let series = GroupedSeries::new(p_grid, rows, n, None)?;
    Ok((series, truth))
}
