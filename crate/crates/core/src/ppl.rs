//! Posterior predictive loss for comparing fitted models.

use crate::baselines::SeparateFitResult;
use crate::error::{Error, Result};
use crate::lorenz::{increments_into, LorenzFamily, ThetaVector};
use crate::mcmc::PosteriorDraws;
use crate::model::{lambda_t, GroupedSeries};

/// Which weight r/(r+1) the squared-error term gets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossWeight {
    /// r = 1, weight ½.
    One,
    /// r = ∞, weight 1.
    Infinity,
}

impl LossWeight {
    pub fn weight(self) -> f64 {
        match self {
            LossWeight::One => 0.5,
            LossWeight::Infinity => 1.0,
        }
    }
}

/// Predictive means and variances (T×K, row-major) and both loss scores.
#[derive(Debug, Clone, PartialEq)]
pub struct PplResult {
    pub label: String,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub score_r1: f64,
    pub score_rinf: f64,
}

/// Running sums for the law-of-total-variance decomposition.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    classes: usize,
    sum_m: Vec<f64>,
    sum_m2: Vec<f64>,
    sum_v: Vec<f64>,
    count: Vec<usize>,
}

impl MomentAccumulator {
    pub fn new(periods: usize, classes: usize) -> Self {
        let n = periods * classes;
        Self {
            classes,
            sum_m: vec![0.0; n],
            sum_m2: vec![0.0; n],
            sum_v: vec![0.0; n],
            count: vec![0; periods],
        }
    }

    /// Adds one posterior draw for period `t`: conditional means `inc` and
    /// conditional variances inc(1 − inc)/(λ + 1).
    pub fn add(&mut self, t: usize, inc: &[f64], lambda: f64) {
        let k = self.classes;
        for (i, &m) in inc.iter().enumerate() {
            self.sum_m[t * k + i] += m;
            self.sum_m2[t * k + i] += m * m;
            self.sum_v[t * k + i] += m * (1.0 - m) / (lambda + 1.0);
        }
        self.count[t] += 1;
    }

    pub fn finish(self) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.count.iter().any(|&c| c == 0) {
            return Err(Error::domain("predictive_moments", "no draws for at least one period"));
        }
        let k = self.classes;
        let mut e = vec![0.0; self.sum_m.len()];
        let mut v = vec![0.0; self.sum_m.len()];
        for (idx, (ei, vi)) in e.iter_mut().zip(v.iter_mut()).enumerate() {
            let n = self.count[idx / k] as f64;
            *ei = self.sum_m[idx] / n;
            let between = (self.sum_m2[idx] / n - *ei * *ei).max(0.0);
            *vi = self.sum_v[idx] / n + between;
        }
        Ok((e, v))
    }
}

fn add_theta(acc: &mut MomentAccumulator, t: usize, theta: &ThetaVector<f64>, data: &GroupedSeries, lambda: f64, buf: &mut [f64]) -> Result<()> {
    match increments_into(theta, data.p_grid(), buf) {
        Ok(true) if theta.is_valid() => {
            acc.add(t, buf, lambda);
            Ok(())
        }
        _ => Err(Error::domain("predictive_moments", "draw maps to an invalid Lorenz curve")),
    }
}

/// Predictive moments from every stored latent snapshot of a state-space fit.
pub fn predictive_moments(draws: &PosteriorDraws, data: &GroupedSeries) -> Result<(Vec<f64>, Vec<f64>)> {
    if draws.latent_len() == 0 {
        return Err(Error::domain("predictive_moments", "no stored latent draws"));
    }
    if draws.periods != data.periods() {
        return Err(Error::domain("predictive_moments", "draws and data have different lengths"));
    }
    let mut acc = MomentAccumulator::new(data.periods(), data.classes());
    let mut buf = vec![0.0; data.classes()];
    for i in 0..draws.latent_len() {
        let psi = draws.latent_psi(i);
        for t in 0..data.periods() {
            add_theta(&mut acc, t, &draws.theta(i, t), data, lambda_t(psi, data.sample_size(t)), &mut buf)?;
        }
    }
    acc.finish()
}

/// Predictive moments from per-period separate fits (λ_t drawn directly).
pub fn separate_predictive_moments(fits: &[SeparateFitResult], data: &GroupedSeries) -> Result<(Vec<f64>, Vec<f64>)> {
    if fits.len() != data.periods() {
        return Err(Error::domain("predictive_moments", "need one separate fit per period"));
    }
    let mut acc = MomentAccumulator::new(data.periods(), data.classes());
    let mut buf = vec![0.0; data.classes()];
    for (t, fit) in fits.iter().enumerate() {
        for i in 0..fit.len() {
            add_theta(&mut acc, t, &fit.theta(i), data, fit.log_lambda(i).exp(), &mut buf)?;
        }
    }
    acc.finish()
}

/// ln(Σ V + w Σ (q − E)²); −∞ when the total is exactly zero.
pub fn ppl_score(mean: &[f64], var: &[f64], data: &GroupedSeries, weight: LossWeight) -> Result<f64> {
    let k = data.classes();
    if mean.len() != data.periods() * k || var.len() != mean.len() {
        return Err(Error::domain("ppl_score", "moment arrays do not match the data"));
    }
    let penalty: f64 = var.iter().sum();
    let fit: f64 = (0..data.periods())
        .flat_map(|t| data.row(t).iter().enumerate().map(move |(i, q)| (t * k + i, *q)))
        .map(|(idx, q)| (q - mean[idx]).powi(2))
        .sum();
    Ok((penalty + weight.weight() * fit).ln())
}

pub fn ppl_result(label: impl Into<String>, mean: Vec<f64>, var: Vec<f64>, data: &GroupedSeries) -> Result<PplResult> {
    Ok(PplResult {
        label: label.into(),
        score_r1: ppl_score(&mean, &var, data, LossWeight::One)?,
        score_rinf: ppl_score(&mean, &var, data, LossWeight::Infinity)?,
        mean,
        var,
    })
}

/// Model label used in comparison tables, e.g. `SM-AR` or `SM-DIR`.
pub fn model_label(family: LorenzFamily, process: Option<crate::model::ProcessKind>) -> String {
    match process {
        Some(kind) => format!("{family}-{kind}"),
        None => format!("{family}-DIR"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Dirichlet, Distribution};

    fn data() -> GroupedSeries {
        GroupedSeries::new(vec![0.0, 0.3, 0.7, 1.0], vec![vec![0.12, 0.38, 0.5]], vec![100], None).unwrap()
    }

    #[test]
    fn single_and_duplicated_draws() {
        let inc = [0.1, 0.4, 0.5];
        let mut acc = MomentAccumulator::new(1, 3);
        acc.add(0, &inc, 49.0);
        let (e, v) = acc.finish().unwrap();
        for i in 0..3 {
            assert_eq!(e[i], inc[i]);
            assert!((v[i] - inc[i] * (1.0 - inc[i]) / 50.0).abs() < 1e-16);
        }
        let mut acc = MomentAccumulator::new(1, 3);
        acc.add(0, &inc, 49.0);
        acc.add(0, &inc, 49.0);
        let (e2, v2) = acc.finish().unwrap();
        for i in 0..3 {
            assert!((e2[i] - e[i]).abs() < 1e-16 && (v2[i] - v[i]).abs() < 1e-16);
        }
        assert!(MomentAccumulator::new(2, 3).finish().is_err());
    }

    #[test]
    fn matches_brute_force_predictive_sampling() {
        // 200 "posterior draws" of increments and precisions
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut acc = MomentAccumulator::new(1, 3);
        let mut samples: Vec<[f64; 3]> = Vec::new();
        for i in 0..200 {
            let shift = 0.02 * ((i % 7) as f64 - 3.0) / 3.0;
            let inc = [0.15 + shift, 0.35, 0.5 - shift];
            let lambda = 40.0 + (i % 5) as f64 * 10.0;
            acc.add(0, &inc, lambda);
            let dir = Dirichlet::new(&inc.map(|m| m * lambda)).unwrap();
            for _ in 0..10_000 {
                let q = dir.sample(&mut rng);
                samples.push([q[0], q[1], q[2]]);
            }
        }
        let (e, v) = acc.finish().unwrap();
        let n = samples.len() as f64;
        for k in 0..3 {
            let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n;
            let var = samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / n;
            assert!((mean - e[k]).abs() < 3.0 * (var / n).sqrt());
            // sd of a sample variance ≈ var·√(2/n) for near-normal data; use a generous factor
            assert!((var - v[k]).abs() < 3.0 * var * (3.0 / n).sqrt(), "class {k}: {var} vs {}", v[k]);
        }
    }

    #[test]
    fn score_identities() {
        let d = data();
        let q: Vec<f64> = d.row(0).to_vec();
        assert_eq!(ppl_score(&q, &[0.0; 3], &d, LossWeight::One).unwrap(), f64::NEG_INFINITY);
        let e = [0.1, 0.4, 0.5];
        let v = [0.001, 0.002, 0.003];
        let s1 = ppl_score(&e, &v, &d, LossWeight::One).unwrap();
        let sinf = ppl_score(&e, &v, &d, LossWeight::Infinity).unwrap();
        let g: f64 = q.iter().zip(&e).map(|(a, b)| (a - b).powi(2)).sum();
        let p: f64 = v.iter().sum();
        assert!(sinf >= s1);
        assert!(((sinf - s1) - ((p + g) / (p + 0.5 * g)).ln()).abs() < 1e-14);
    }
}
