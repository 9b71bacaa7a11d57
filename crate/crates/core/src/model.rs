//! The observation model, latent dynamics, priors, and joint density.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::lorenz::{check_grid, increments_into, latent_slice_to_theta, theta_to_latent, LorenzFamily, MAX_DIM};
use crate::optim::nelder_mead;
use crate::scalar::{lit, Scalar};
use crate::special::{digamma_pos, ln_gamma_pos, trigamma_pos};

/// Tolerance on the row sums of income shares.
pub const SHARE_SUM_TOL: f64 = 1e-9;

/// Observed panel of grouped income shares.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSeries {
    p_grid: Vec<f64>,
    shares: Vec<f64>,
    n: Vec<u64>,
    labels: Vec<String>,
}

impl GroupedSeries {
    /// Validates and stores the panel. Rows are rescaled to sum to exactly one
    /// after passing the [`SHARE_SUM_TOL`] check.
    pub fn new(p_grid: Vec<f64>, rows: Vec<Vec<f64>>, n: Vec<u64>, labels: Option<Vec<String>>) -> Result<Self> {
        check_grid(&p_grid)?;
        let k = p_grid.len() - 1;
        let labels = labels.unwrap_or_else(|| (1..=rows.len()).map(|t| t.to_string()).collect());
        if rows.is_empty() {
            return Err(Error::Config("series has no periods".into()));
        }
        if rows.len() != n.len() || rows.len() != labels.len() {
            return Err(Error::Config(format!(
                "{} share rows, {} sample sizes and {} labels",
                rows.len(),
                n.len(),
                labels.len()
            )));
        }
        let mut shares = Vec::with_capacity(rows.len() * k);
        for ((row, &size), label) in rows.iter().zip(&n).zip(&labels) {
            let bad = |msg: String| Error::InvalidPeriod {
                period: label.clone(),
                msg,
            };
            if row.len() != k {
                return Err(bad(format!("expected {k} shares, found {}", row.len())));
            }
            if let Some(q) = row.iter().find(|q| !(**q > 0.0) || !q.is_finite()) {
                return Err(bad(format!("share {q} is not strictly positive")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > SHARE_SUM_TOL {
                return Err(bad(format!("shares sum to {total}, not 1")));
            }
            if size < 1 {
                return Err(bad("sample size must be at least 1".into()));
            }
            shares.extend(row.iter().map(|q| q / total));
        }
        Ok(Self {
            p_grid,
            shares,
            n,
            labels,
        })
    }

    pub fn periods(&self) -> usize {
        self.n.len()
    }

    pub fn classes(&self) -> usize {
        self.p_grid.len() - 1
    }

    pub fn p_grid(&self) -> &[f64] {
        &self.p_grid
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let k = self.classes();
        &self.shares[t * k..(t + 1) * k]
    }

    pub fn sample_size(&self, t: usize) -> u64 {
        self.n[t]
    }

    pub fn sample_sizes(&self) -> &[u64] {
        &self.n
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Cumulative income shares y_1..y_K for period `t`.
    pub fn cumulative(&self, t: usize) -> Vec<f64> {
        self.row(t)
            .iter()
            .scan(0.0, |acc, q| {
                *acc += q;
                Some(*acc)
            })
            .collect()
    }

    /// Copy restricted to periods `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        let rows = range.clone().map(|t| self.row(t).to_vec()).collect();
        Self::new(
            self.p_grid.clone(),
            rows,
            self.n[range.clone()].to_vec(),
            Some(self.labels[range].to_vec()),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProcessKind {
    Ar1,
    RandomWalk,
}

impl ProcessKind {
    pub fn tag(self) -> &'static str {
        match self {
            ProcessKind::Ar1 => "AR",
            ProcessKind::RandomWalk => "RW",
        }
    }
}

impl fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ProcessKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ar" | "ar1" => Ok(ProcessKind::Ar1),
            "rw" => Ok(ProcessKind::RandomWalk),
            other => Err(Error::Config(format!("unknown process '{other}' (expected ar or rw)"))),
        }
    }
}

/// Per-coordinate process parameters η_j = (μ_j, ρ_j, τ_j²). The random walk uses only τ_j².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordParams<T> {
    pub mu: T,
    pub rho: T,
    pub tau2: T,
}

/// Latent dynamics for all d coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentProcessSpec<T> {
    pub kind: ProcessKind,
    pub coords: Vec<CoordParams<T>>,
    /// Variance inflation of the random-walk initial state, u_1 ~ N(0, c τ²).
    pub c: T,
}

impl<T: Scalar> LatentProcessSpec<T> {
    pub fn validate(&self) -> Result<()> {
        for (j, p) in self.coords.iter().enumerate() {
            if !(p.tau2 > T::zero()) {
                return Err(Error::Config(format!("tau2 for coordinate {j} must be positive")));
            }
            if self.kind == ProcessKind::Ar1 && !(p.rho.abs() < T::one()) {
                return Err(Error::Config(format!("|rho| for coordinate {j} must be below 1")));
            }
        }
        if self.kind == ProcessKind::RandomWalk && !(self.c > T::zero()) {
            return Err(Error::Config("random-walk constant c must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn normal_logpdf<T: Scalar>(x: T, mean: T, var: T) -> T {
    let half: T = lit(0.5);
    let ln_two_pi: T = lit(1.837_877_066_409_345_5);
    let z = x - mean;
    -half * (ln_two_pi + var.ln() + z * z / var)
}

/// Dirichlet log-density of `q` with cell parameters `a`.
pub fn dirichlet_logpdf<T: Scalar>(q: &[T], a: &[T]) -> Result<T> {
    if q.len() != a.len() || q.is_empty() {
        return Err(Error::domain("dirichlet_logpdf", "q and a must have the same non-zero length"));
    }
    if let Some(x) = a.iter().find(|x| !(**x > T::zero()) || !x.is_finite()) {
        return Err(Error::domain("dirichlet_logpdf", format!("cell parameter {x} must be positive")));
    }
    if let Some(x) = q.iter().find(|x| !(**x > T::zero())) {
        return Err(Error::domain("dirichlet_logpdf", format!("share {x} must be positive")));
    }
    let total: T = a.iter().copied().sum();
    let body: T = q
        .iter()
        .zip(a)
        .map(|(&qk, &ak)| (ak - T::one()) * qk.ln() - ln_gamma_pos(ak))
        .sum();
    Ok(ln_gamma_pos(total) + body)
}

/// Dirichlet log-density of shares with logs `ln_q` at cell parameters λ·ΔL;
/// −∞ if any cell parameter is not positive.
pub fn dirichlet_loglik(ln_q: &[f64], increments: &[f64], lambda: f64) -> f64 {
    let mut total = ln_gamma_pos(lambda);
    for (&lq, &dl) in ln_q.iter().zip(increments) {
        let a = lambda * dl;
        if !(a > 0.0) || !a.is_finite() {
            return f64::NEG_INFINITY;
        }
        total += (a - 1.0) * lq - ln_gamma_pos(a);
    }
    total
}

/// Mean and covariance of Dirichlet shares with cell parameters λ·ΔL:
/// E q_k = ΔL_k, Cov(q_k, q_l) = (δ_kl ΔL_k − ΔL_k ΔL_l) / (λ + 1).
pub fn share_moments(increments: &[f64], lambda: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let cov = increments
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            increments
                .iter()
                .enumerate()
                .map(|(l, &b)| (if k == l { a } else { 0.0 } - a * b) / (lambda + 1.0))
                .collect()
        })
        .collect();
    (increments.to_vec(), cov)
}

/// One Dirichlet(λ·ΔL) draw of income shares, via normalized gamma variates.
pub fn sample_shares<R: Rng + ?Sized>(increments: &[f64], lambda: f64, rng: &mut R) -> Result<Vec<f64>> {
    let mut g = Vec::with_capacity(increments.len());
    for &dl in increments {
        let dist = Gamma::new(lambda * dl, 1.0)
            .map_err(|e| Error::domain("sample_shares", format!("cell parameter {}: {e}", lambda * dl)))?;
        g.push(dist.sample(rng));
    }
    let total: f64 = g.iter().sum();
    if g.iter().any(|&x| !(x > 0.0)) || !total.is_finite() {
        return Err(Error::domain("sample_shares", "a share underflowed to zero"));
    }
    Ok(g.into_iter().map(|x| x / total).collect())
}

/// Dirichlet precision λ_t = n_t e^ψ.
pub fn lambda_t<T: Scalar>(psi: T, n_t: u64) -> T {
    lit::<T>(n_t as f64) * psi.exp()
}

/// ln f(q_t | u_t, ψ): the Dirichlet density with a_k = λ_t ΔL_k.
///
/// Returns −∞ when u_t maps to an invalid curve (non-positive increment, or
/// the SM / DA finite-mean constraint fails).
pub fn obs_loglik_t<T: Scalar>(q_row: &[T], u_t: &[T], psi: T, n_t: u64, p_grid: &[T], family: LorenzFamily) -> T {
    let theta = latent_slice_to_theta(family, u_t);
    if !theta.is_valid() || q_row.len() + 1 != p_grid.len() {
        return T::neg_infinity();
    }
    let mut inc = vec![T::zero(); q_row.len()];
    match increments_into(&theta, p_grid, &mut inc) {
        Ok(true) => {}
        _ => return T::neg_infinity(),
    }
    let lambda = lambda_t(psi, n_t);
    for x in inc.iter_mut() {
        *x = *x * lambda;
    }
    dirichlet_logpdf(q_row, &inc).unwrap_or(T::neg_infinity())
}

/// Joint log-density of the latent path `u` (row-major T×d) under `spec`.
pub fn latent_logdensity<T: Scalar>(u: &[T], dim: usize, spec: &LatentProcessSpec<T>) -> T {
    let periods = u.len() / dim;
    let mut total = T::zero();
    for (j, p) in spec.coords.iter().enumerate().take(dim) {
        let at = |t: usize| u[t * dim + j];
        match spec.kind {
            ProcessKind::Ar1 => {
                total = total + normal_logpdf(at(0), p.mu, p.tau2 / (T::one() - p.rho * p.rho));
                for t in 1..periods {
                    total = total + normal_logpdf(at(t), p.mu + p.rho * (at(t - 1) - p.mu), p.tau2);
                }
            }
            ProcessKind::RandomWalk => {
                total = total + normal_logpdf(at(0), T::zero(), spec.c * p.tau2);
                for t in 1..periods {
                    total = total + normal_logpdf(at(t), at(t - 1), p.tau2);
                }
            }
        }
    }
    total
}

/// Hyperparameters of one latent coordinate: μ_j ~ N(m_j, v_j²), τ_j² ~ IG(r_j, s_j).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordPrior {
    pub mu_mean: f64,
    pub mu_var: f64,
    pub tau2_shape: f64,
    pub tau2_scale: f64,
}

impl Default for CoordPrior {
    fn default() -> Self {
        Self {
            mu_mean: 0.0,
            mu_var: 1.0,
            tau2_shape: 3.0,
            tau2_scale: 0.1,
        }
    }
}

/// Prior specification; ρ_j ~ U(−1, 1) is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub coords: Vec<CoordPrior>,
    pub psi_mean: f64,
    pub psi_var: f64,
    /// Random-walk initial-state inflation constant c.
    pub rw_c: f64,
}

impl PriorSpec {
    /// μ_j ~ N(0, 1), τ_j² ~ IG(3, 0.1), ψ ~ N(0, 100), c = 10⁵.
    pub fn default_for(dim: usize) -> Self {
        Self {
            coords: vec![CoordPrior::default(); dim],
            psi_mean: 0.0,
            psi_var: 100.0,
            rw_c: 1e5,
        }
    }

    pub fn with_mu_prior(mut self, mean: f64, var: f64) -> Self {
        for c in &mut self.coords {
            c.mu_mean = mean;
            c.mu_var = var;
        }
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.coords.len() != dim {
            return Err(Error::Config(format!("prior has {} coordinates, model has {dim}", self.coords.len())));
        }
        let positive = self
            .coords
            .iter()
            .all(|c| c.mu_var > 0.0 && c.tau2_shape > 0.0 && c.tau2_scale > 0.0)
            && self.psi_var > 0.0
            && self.rw_c > 0.0;
        if !positive {
            return Err(Error::Config("prior variances, IG parameters and c must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn inv_gamma_logpdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma_pos(shape) - (shape + 1.0) * x.ln() - scale / x
}

/// Full sampler state: latent matrix, process parameters, and ψ.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub kind: ProcessKind,
    pub dim: usize,
    /// Row-major T×d latent matrix.
    pub u: Vec<f64>,
    pub eta: Vec<CoordParams<f64>>,
    pub psi: f64,
}

impl ChainState {
    pub fn periods(&self) -> usize {
        self.u.len() / self.dim
    }

    pub fn u_t(&self, t: usize) -> &[f64] {
        &self.u[t * self.dim..(t + 1) * self.dim]
    }

    pub fn process_spec(&self, priors: &PriorSpec) -> LatentProcessSpec<f64> {
        LatentProcessSpec {
            kind: self.kind,
            coords: self.eta.clone(),
            c: priors.rw_c,
        }
    }
}

/// Sum of the prior log-densities of (μ, ρ, τ², ψ).
pub fn log_prior(state: &ChainState, priors: &PriorSpec) -> f64 {
    let mut total = normal_logpdf(state.psi, priors.psi_mean, priors.psi_var);
    for (p, pr) in state.eta.iter().zip(&priors.coords) {
        total += inv_gamma_logpdf(p.tau2, pr.tau2_shape, pr.tau2_scale);
        if state.kind == ProcessKind::Ar1 {
            total += normal_logpdf(p.mu, pr.mu_mean, pr.mu_var);
            total += if p.rho.abs() < 1.0 { -std::f64::consts::LN_2 } else { f64::NEG_INFINITY };
        }
    }
    total
}

/// Log joint density of data, latent path, and parameters (up to a constant).
pub fn log_joint(state: &ChainState, data: &GroupedSeries, priors: &PriorSpec, family: LorenzFamily) -> f64 {
    let obs: f64 = (0..data.periods())
        .map(|t| obs_loglik_t(data.row(t), state.u_t(t), state.psi, data.sample_size(t), data.p_grid(), family))
        .sum();
    if obs == f64::NEG_INFINITY {
        return obs;
    }
    let spec = state.process_spec(priors);
    if state.kind == ProcessKind::Ar1 && state.eta.iter().any(|p| p.rho.abs() >= 1.0) {
        return f64::NEG_INFINITY;
    }
    obs + latent_logdensity(&state.u, state.dim, &spec) + log_prior(state, priors)
}

/// One period's likelihood as a function of u_t, with a gradient computed from
/// the digamma form ∂ℓ/∂u_j = λ Σ_k (ln q_k − ψ(λΔL_k)) ∂ΔL_k/∂u_j.
#[derive(Debug, Clone)]
pub struct PeriodLikelihood<'a> {
    family: LorenzFamily,
    p_grid: &'a [f64],
    q: &'a [f64],
    ln_q: Vec<f64>,
    lambda: f64,
}

/// Relative step for central differences of the Lorenz increments.
const JACOBIAN_STEP: f64 = 1e-5;

impl<'a> PeriodLikelihood<'a> {
    pub fn new(family: LorenzFamily, p_grid: &'a [f64], q: &'a [f64], lambda: f64) -> Self {
        Self {
            family,
            p_grid,
            q,
            ln_q: q.iter().map(|x| x.ln()).collect(),
            lambda,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Increments ΔL(u) or `None` when u maps to an invalid curve.
    pub fn increments(&self, u: &[f64], out: &mut [f64]) -> Option<()> {
        let theta = latent_slice_to_theta(self.family, u);
        if !theta.is_valid() {
            return None;
        }
        match increments_into(&theta, self.p_grid, out) {
            Ok(true) => Some(()),
            _ => None,
        }
    }

    /// Log-likelihood given precomputed increments.
    pub fn value_from_increments(&self, inc: &[f64]) -> f64 {
        dirichlet_loglik(&self.ln_q, inc, self.lambda)
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        let mut inc = [0.0; 64];
        let k = self.q.len();
        if k > inc.len() {
            let mut v = vec![0.0; k];
            return match self.increments(u, &mut v) {
                Some(()) => self.value_from_increments(&v),
                None => f64::NEG_INFINITY,
            };
        }
        match self.increments(u, &mut inc[..k]) {
            Some(()) => self.value_from_increments(&inc[..k]),
            None => f64::NEG_INFINITY,
        }
    }

    /// Writes ∂ℓ/∂u into `grad`; returns false if any evaluation point is invalid.
    pub fn gradient(&self, u: &[f64], grad: &mut [f64]) -> bool {
        let k = self.q.len();
        let d = u.len();
        let mut base = vec![0.0; k];
        if self.increments(u, &mut base).is_none() {
            return false;
        }
        let weights: Vec<f64> = base
            .iter()
            .zip(&self.ln_q)
            .map(|(&dl, &lq)| self.lambda * (lq - digamma_pos(self.lambda * dl)))
            .collect();
        let mut plus = vec![0.0; k];
        let mut minus = vec![0.0; k];
        let mut x = [0.0; MAX_DIM];
        x[..d].copy_from_slice(u);
        for j in 0..d {
            let h = JACOBIAN_STEP * u[j].abs().max(1.0);
            x[j] = u[j] + h;
            let ok_plus = self.increments(&x[..d], &mut plus).is_some();
            x[j] = u[j] - h;
            let ok_minus = self.increments(&x[..d], &mut minus).is_some();
            x[j] = u[j];
            if !(ok_plus && ok_minus) {
                return false;
            }
            grad[j] = (0..k).map(|i| weights[i] * (plus[i] - minus[i]) / (2.0 * h)).sum();
        }
        true
    }
}

/// Value, gradient and Hessian of a scalar function of u at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalExpansion {
    pub value: f64,
    pub grad: [f64; MAX_DIM],
    pub hess: [[f64; MAX_DIM]; MAX_DIM],
}

impl<'a> PeriodLikelihood<'a> {
    /// Second-order expansion of the period log-likelihood.
    ///
    /// The Dirichlet part is differentiated exactly (digamma and trigamma); the
    /// first and second derivatives of the increments come from central
    /// differences with step 1e-5·max(1, |u_j|). `None` if any stencil point
    /// is an invalid curve.
    pub fn expansion(&self, u: &[f64]) -> Option<LocalExpansion> {
        let k = self.q.len();
        let d = u.len();
        let mut base = vec![0.0; k];
        self.increments(u, &mut base)?;
        let value = self.value_from_increments(&base);
        if !value.is_finite() {
            return None;
        }
        let h: Vec<f64> = u.iter().map(|x| JACOBIAN_STEP * x.abs().max(1.0)).collect();
        let mut x = [0.0; MAX_DIM];
        x[..d].copy_from_slice(u);
        let eval = |shift: &[(usize, f64)], out: &mut [f64]| -> Option<()> {
            let mut y = x;
            for &(j, s) in shift {
                y[j] += s * h[j];
            }
            self.increments(&y[..d], out)
        };
        // jac[j][k] = ∂ΔL_k/∂u_j, sec[i][j][k] = ∂²ΔL_k/∂u_i∂u_j
        let mut jac = vec![vec![0.0; k]; d];
        let mut sec = vec![vec![vec![0.0; k]; d]; d];
        let mut plus = vec![0.0; k];
        let mut minus = vec![0.0; k];
        for j in 0..d {
            eval(&[(j, 1.0)], &mut plus)?;
            eval(&[(j, -1.0)], &mut minus)?;
            for i in 0..k {
                jac[j][i] = (plus[i] - minus[i]) / (2.0 * h[j]);
                sec[j][j][i] = (plus[i] - 2.0 * base[i] + minus[i]) / (h[j] * h[j]);
            }
        }
        let mut pm = vec![0.0; k];
        let mut mp = vec![0.0; k];
        for a in 0..d {
            for b in a + 1..d {
                eval(&[(a, 1.0), (b, 1.0)], &mut plus)?;
                eval(&[(a, -1.0), (b, -1.0)], &mut minus)?;
                eval(&[(a, 1.0), (b, -1.0)], &mut pm)?;
                eval(&[(a, -1.0), (b, 1.0)], &mut mp)?;
                for i in 0..k {
                    let v = (plus[i] + minus[i] - pm[i] - mp[i]) / (4.0 * h[a] * h[b]);
                    sec[a][b][i] = v;
                    sec[b][a][i] = v;
                }
            }
        }
        let lam = self.lambda;
        let mut grad = [0.0; MAX_DIM];
        let mut hess = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..k {
            let a = lam * base[i];
            let w = self.ln_q[i] - digamma_pos(a);
            let curv = lam * trigamma_pos(a);
            for r in 0..d {
                grad[r] += lam * w * jac[r][i];
                for c in 0..d {
                    hess[r][c] += lam * (w * sec[r][c][i] - curv * jac[r][i] * jac[c][i]);
                }
            }
        }
        Some(LocalExpansion { value, grad, hess })
    }
}

/// Family-specific per-period starting values: each period maximises its own
/// likelihood with λ_t = n_t (ψ = 0), starting from [`LorenzFamily::default_start`].
pub fn initial_latent_path(data: &GroupedSeries, family: LorenzFamily) -> Result<Vec<f64>> {
    let start = theta_to_latent(&family.default_start())?;
    let d = family.dim();
    let mut u = Vec::with_capacity(data.periods() * d);
    for t in 0..data.periods() {
        let lik = PeriodLikelihood::new(family, data.p_grid(), data.row(t), lambda_t(0.0, data.sample_size(t)));
        let best = nelder_mead(|x| -lik.value(x), start.values(), 0.3, 1e-12, 2000);
        if !lik.value(&best).is_finite() {
            return Err(Error::InvalidPeriod {
                period: data.labels()[t].clone(),
                msg: format!("no valid {family} curve found for initialisation"),
            });
        }
        u.extend_from_slice(&best);
    }
    Ok(u)
}

/// Starting chain state: per-period fits for u, moment-style η, and ψ = 0.
pub fn initial_state(data: &GroupedSeries, family: LorenzFamily, kind: ProcessKind) -> Result<ChainState> {
    let u = initial_latent_path(data, family)?;
    Ok(state_from_path(u, family.dim(), kind))
}

pub(crate) fn state_from_path(u: Vec<f64>, dim: usize, kind: ProcessKind) -> ChainState {
    let periods = u.len() / dim;
    let eta = (0..dim)
        .map(|j| {
            let col: Vec<f64> = (0..periods).map(|t| u[t * dim + j]).collect();
            let mean = col.iter().sum::<f64>() / periods as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / periods as f64;
            let (num, den) = col.windows(2).fold((0.0, 0.0), |(n, d), w| {
                (n + (w[0] - mean) * (w[1] - mean), d + (w[0] - mean).powi(2))
            });
            let rho = if den > 0.0 { (num / den).clamp(-0.95, 0.95) } else { 0.0 };
            let tau2 = match kind {
                ProcessKind::Ar1 => var * (1.0 - rho * rho),
                ProcessKind::RandomWalk => {
                    col.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / (periods.max(2) - 1) as f64
                }
            };
            CoordParams {
                mu: mean,
                rho,
                tau2: tau2.max(1e-4),
            }
        })
        .collect();
    ChainState {
        kind,
        dim,
        u,
        eta,
        psi: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lorenz::{lorenz_increments, ThetaVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const QUINTILES: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

    #[test]
    fn dirichlet_examples() {
        assert!(dirichlet_logpdf(&[0.5f64, 0.5], &[1.0, 1.0]).unwrap().abs() < 1e-15);
        assert!((dirichlet_logpdf(&[0.5, 0.5], &[2.0, 2.0]).unwrap() - 1.5f64.ln()).abs() < 1e-14);
        let third = 1.0 / 3.0;
        assert!((dirichlet_logpdf(&[third; 3], &[1.0; 3]).unwrap() - 2f64.ln()).abs() < 1e-14);
        assert!(dirichlet_logpdf(&[0.5, 0.5], &[0.0, 1.0]).is_err());
        assert!(dirichlet_logpdf(&[0.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(lambda_t(0.0, 1), 1.0);
        assert!((lambda_t(2f64.ln(), 10) - 20.0).abs() < 1e-12);
        let l: f64 = lambda_t(4.428, 10_000);
        assert!((l / 8.38e5 - 1.0).abs() < 1e-3);
        assert!(lambda_t(0.1, 5) > lambda_t(0.0, 5) && lambda_t(0.0, 6) > lambda_t(0.0, 5));
    }

    #[test]
    fn obs_loglik_reduces_to_symmetric_dirichlet_at_equality() {
        let q = [0.2; 5];
        // LN with vanishing σ has uniform increments
        let u = [(1e-9f64).ln()];
        let got = obs_loglik_t(&q, &u, 1.0, 50, &QUINTILES, LorenzFamily::Lognormal);
        let lambda = 50.0 * 1f64.exp();
        let want = dirichlet_logpdf(&q, &[lambda / 5.0; 5]).unwrap();
        assert!((got - want).abs() < 1e-6 * want.abs().max(1.0));
    }

    #[test]
    fn obs_loglik_rejects_invalid_curves() {
        let q = [0.1, 0.15, 0.2, 0.25, 0.3];
        let ka = theta_to_latent(&ThetaVector::new(LorenzFamily::Kakwani, &[0.9, 0.9, 0.1]).unwrap()).unwrap();
        assert_eq!(obs_loglik_t(&q, ka.values(), 0.0, 100, &QUINTILES, LorenzFamily::Kakwani), f64::NEG_INFINITY);
        // α γ < 1 for SM
        assert_eq!(obs_loglik_t(&q, &[-1.0, -1.0], 0.0, 100, &QUINTILES, LorenzFamily::SinghMaddala), f64::NEG_INFINITY);
    }

    #[test]
    fn obs_loglik_is_exchangeable() {
        // permuting q and the increments together leaves the Dirichlet density unchanged
        let theta = ThetaVector::new(LorenzFamily::SinghMaddala, &[3.0, 1.4]).unwrap();
        let inc = lorenz_increments(&theta, &QUINTILES).unwrap().values;
        let q = [0.07, 0.13, 0.18, 0.24, 0.38];
        let a: Vec<f64> = inc.iter().map(|x| 500.0 * x).collect();
        let base = dirichlet_logpdf(&q, &a).unwrap();
        let perm = [3, 0, 4, 1, 2];
        let qp: Vec<f64> = perm.iter().map(|&i| q[i]).collect();
        let ap: Vec<f64> = perm.iter().map(|&i| a[i]).collect();
        assert!((dirichlet_logpdf(&qp, &ap).unwrap() - base).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let q = [0.07, 0.13, 0.18, 0.24, 0.38];
        for (family, u) in [
            (LorenzFamily::SinghMaddala, vec![1.1, 0.35]),
            (LorenzFamily::Lognormal, vec![-0.4]),
            (LorenzFamily::Kakwani, vec![-0.3, 1.2, 0.4]),
            (LorenzFamily::Rasche, vec![-0.2, 0.1]),
        ] {
            let lik = PeriodLikelihood::new(family, &QUINTILES, &q, 300.0);
            assert!((lik.value(&u) - obs_loglik_t(&q, &u, 300f64.ln(), 1, &QUINTILES, family)).abs() < 1e-9);
            let mut g = vec![0.0; u.len()];
            assert!(lik.gradient(&u, &mut g));
            for j in 0..u.len() {
                let h = 1e-5;
                let mut up = u.clone();
                up[j] += h;
                let mut dn = u.clone();
                dn[j] -= h;
                let fd = (obs_loglik_t(&q, &up, 300f64.ln(), 1, &QUINTILES, family)
                    - obs_loglik_t(&q, &dn, 300f64.ln(), 1, &QUINTILES, family))
                    / (2.0 * h);
                assert!((g[j] - fd).abs() <= 1e-4 * fd.abs().max(1.0), "{family} coord {j}: {} vs {fd}", g[j]);
            }
        }
    }

    #[test]
    fn expansion_matches_finite_differences_of_value() {
        let q = [0.07, 0.13, 0.18, 0.24, 0.38];
        for (family, u) in [
            (LorenzFamily::SinghMaddala, vec![1.1, 0.35]),
            (LorenzFamily::Kakwani, vec![-0.3, 1.2, 0.4]),
            (LorenzFamily::Dagum, vec![1.2, -0.4]),
        ] {
            let lik = PeriodLikelihood::new(family, &QUINTILES, &q, 300.0);
            let e = lik.expansion(&u).unwrap();
            let mut g = vec![0.0; u.len()];
            lik.gradient(&u, &mut g);
            let h = 1e-4;
            for r in 0..u.len() {
                assert!((e.grad[r] - g[r]).abs() <= 1e-6 * g[r].abs().max(1.0));
                for c in 0..u.len() {
                    let f = |dr: f64, dc: f64| {
                        let mut x = u.clone();
                        x[r] += dr;
                        x[c] += dc;
                        lik.value(&x)
                    };
                    let fd = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
                    assert!((e.hess[r][c] - fd).abs() <= 1e-3 * fd.abs().max(1.0), "{family} ({r},{c}): {} vs {fd}", e.hess[r][c]);
                }
            }
        }
    }

    fn brute_normal(x: f64, m: f64, v: f64) -> f64 {
        (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
    }

    #[test]
    fn latent_density_cases() {
        let spec = LatentProcessSpec {
            kind: ProcessKind::Ar1,
            coords: vec![CoordParams { mu: 0.3, rho: 0.6, tau2: 0.04 }],
            c: 1e5,
        };
        let got = latent_logdensity(&[0.5], 1, &spec);
        assert!((got - brute_normal(0.5, 0.3, 0.04 / 0.64).ln()).abs() < 1e-12);

        let iid = LatentProcessSpec {
            kind: ProcessKind::Ar1,
            coords: vec![CoordParams { mu: 0.0, rho: 0.0, tau2: 0.5 }],
            c: 1e5,
        };
        let u = [0.1, -0.4, 0.9];
        let want: f64 = u.iter().map(|&x| brute_normal(x, 0.0, 0.5).ln()).sum();
        assert!((latent_logdensity(&u, 1, &iid) - want).abs() < 1e-12);

        // T = 5, d = 2, random path against a product of normal densities
        let spec = LatentProcessSpec {
            kind: ProcessKind::Ar1,
            coords: vec![
                CoordParams { mu: 1.2, rho: 0.8, tau2: 0.02 },
                CoordParams { mu: 0.4, rho: -0.3, tau2: 0.05 },
            ],
            c: 1e5,
        };
        let u = [1.1, 0.5, 1.3, 0.2, 1.25, 0.45, 1.0, 0.6, 1.4, 0.3];
        let mut prod = 1.0;
        for j in 0..2 {
            let p = spec.coords[j];
            prod *= brute_normal(u[j], p.mu, p.tau2 / (1.0 - p.rho * p.rho));
            for t in 1..5 {
                prod *= brute_normal(u[t * 2 + j], p.mu + p.rho * (u[(t - 1) * 2 + j] - p.mu), p.tau2);
            }
        }
        assert!((latent_logdensity(&u, 2, &spec) - prod.ln()).abs() < 1e-10);

        let rw = LatentProcessSpec {
            kind: ProcessKind::RandomWalk,
            coords: vec![CoordParams { mu: 0.0, rho: 0.0, tau2: 0.1 }],
            c: 100.0,
        };
        let u = [0.2, 0.5, 0.1];
        let want = brute_normal(0.2, 0.0, 10.0) * brute_normal(0.5, 0.2, 0.1) * brute_normal(0.1, 0.5, 0.1);
        assert!((latent_logdensity(&u, 1, &rw) - want.ln()).abs() < 1e-12);
    }

    fn small_series() -> GroupedSeries {
        GroupedSeries::new(
            vec![0.0, 0.3, 0.7, 1.0],
            vec![vec![0.12, 0.38, 0.5], vec![0.1, 0.35, 0.55]],
            vec![200, 300],
            None,
        )
        .unwrap()
    }

    #[test]
    fn log_joint_is_additive() {
        let data = small_series();
        let priors = PriorSpec::default_for(1);
        let state = ChainState {
            kind: ProcessKind::Ar1,
            dim: 1,
            u: vec![-0.2, -0.1],
            eta: vec![CoordParams { mu: -0.1, rho: 0.5, tau2: 0.05 }],
            psi: 0.7,
        };
        let obs: f64 = (0..2)
            .map(|t| obs_loglik_t(data.row(t), state.u_t(t), 0.7, data.sample_size(t), data.p_grid(), LorenzFamily::Lognormal))
            .sum();
        let want = obs + latent_logdensity(&state.u, 1, &state.process_spec(&priors)) + log_prior(&state, &priors);
        assert!((log_joint(&state, &data, &priors, LorenzFamily::Lognormal) - want).abs() < 1e-12);

        // hand-composed scalar formula for the same T = 2, K = 3 instance
        let mut hand = 0.0;
        for t in 0..2 {
            let sigma = state.u[t].exp();
            let l1 = crate::special::normal_cdf(crate::special::normal_quantile(0.3).unwrap() - sigma);
            let l2 = crate::special::normal_cdf(crate::special::normal_quantile(0.7).unwrap() - sigma);
            let lam = data.sample_size(t) as f64 * 0.7f64.exp();
            let a = [lam * l1, lam * (l2 - l1), lam * (1.0 - l2)];
            hand += ln_gamma_pos(lam);
            for k in 0..3 {
                hand += (a[k] - 1.0) * data.row(t)[k].ln() - ln_gamma_pos(a[k]);
            }
        }
        hand += brute_normal(-0.2, -0.1, 0.05 / 0.75).ln() + brute_normal(-0.1, -0.1 + 0.5 * (-0.2 + 0.1), 0.05).ln();
        hand += brute_normal(-0.1, 0.0, 1.0).ln() - 2f64.ln() + inv_gamma_logpdf(0.05, 3.0, 0.1) + brute_normal(0.7, 0.0, 100.0).ln();
        assert!((log_joint(&state, &data, &priors, LorenzFamily::Lognormal) - hand).abs() < 1e-8);

        let relabelled = GroupedSeries::new(
            data.p_grid().to_vec(),
            vec![data.row(0).to_vec(), data.row(1).to_vec()],
            data.sample_sizes().to_vec(),
            Some(vec!["2001".into(), "2002".into()]),
        )
        .unwrap();
        assert_eq!(
            log_joint(&state, &data, &priors, LorenzFamily::Lognormal),
            log_joint(&state, &relabelled, &priors, LorenzFamily::Lognormal)
        );
    }

    #[test]
    fn random_walk_tight_variance_prefers_flat_paths() {
        let data = small_series();
        let priors = PriorSpec::default_for(1);
        let mk = |u: Vec<f64>| ChainState {
            kind: ProcessKind::RandomWalk,
            dim: 1,
            u,
            eta: vec![CoordParams { mu: 0.0, rho: 0.0, tau2: 1e-8 }],
            psi: 0.0,
        };
        let flat = log_joint(&mk(vec![-0.2, -0.2]), &data, &priors, LorenzFamily::Lognormal);
        let moving = log_joint(&mk(vec![-0.2, -0.15]), &data, &priors, LorenzFamily::Lognormal);
        assert!(flat > moving);
    }

    #[test]
    fn series_validation() {
        let err = GroupedSeries::new(
            vec![0.0, 0.5, 1.0],
            vec![vec![0.4, 0.6], vec![0.4, 0.58]],
            vec![10, 10],
            Some(vec!["a".into(), "b".into()]),
        )
        .unwrap_err();
        assert!(err.to_string().contains("period b"), "{err}");
        assert!(GroupedSeries::new(vec![0.0, 0.5, 1.0], vec![vec![0.0, 1.0]], vec![10], None).is_err());
        assert!(GroupedSeries::new(vec![0.0, 0.5, 1.0], vec![vec![0.5, 0.5]], vec![0], None).is_err());
        let s = small_series();
        assert_eq!(s.cumulative(0), vec![0.12, 0.5, 1.0]);
    }

    #[test]
    fn dirichlet_moments_follow_precision_formula() {
        // small-scale version of the acceptance check: 2e5 draws at λ = 50
        let theta = ThetaVector::new(LorenzFamily::SinghMaddala, &[3.0, 1.5]).unwrap();
        let inc = lorenz_increments(&theta, &QUINTILES).unwrap().values;
        let lambda = 50.0;
        let (mean, cov) = share_moments(&inc, lambda);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let mut sum = [0.0; 5];
        let mut sq = [0.0; 5];
        for _ in 0..n {
            let q = sample_shares(&inc, lambda, &mut rng).unwrap();
            for k in 0..5 {
                sum[k] += q[k];
                sq[k] += q[k] * q[k];
            }
        }
        for k in 0..5 {
            let m = sum[k] / n as f64;
            let var = sq[k] / n as f64 - m * m;
            assert!((m - mean[k]).abs() < 4.0 * (cov[k][k] / n as f64).sqrt());
            assert!((var / cov[k][k] - 1.0).abs() < 0.02, "class {k}: {var} vs {}", cov[k][k]);
        }
        // rows of the covariance sum to zero because the shares sum to one
        for row in &cov {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn initial_state_is_valid() {
        let data = small_series();
        for family in [LorenzFamily::Lognormal, LorenzFamily::SinghMaddala, LorenzFamily::Rasche] {
            let state = initial_state(&data, family, ProcessKind::Ar1).unwrap();
            assert_eq!(state.psi, 0.0);
            assert!(log_joint(&state, &data, &PriorSpec::default_for(family.dim()), family).is_finite());
        }
    }
}
