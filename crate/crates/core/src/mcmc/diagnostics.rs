//! Autocorrelation and inefficiency factors of scalar chains.

use crate::error::{Error, Result};

/// Shortest chain accepted by [`inefficiency_factor`].
pub const MIN_CHAIN_LEN: usize = 100;

/// Bartlett window length L = min(⌊n/10⌋, 1000).
pub fn bartlett_bandwidth(n: usize) -> usize {
    (n / 10).min(1000)
}

/// Sample autocorrelations ρ̂_1..ρ̂_max_lag (biased autocovariance estimator).
pub fn autocorrelations(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::domain("autocorrelations", "need at least two values"));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0 = centred.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(c0 > 0.0) || c0 < 1e-300 {
        return Err(Error::Degenerate("chain has zero variance".into()));
    }
    Ok((1..=max_lag.min(n - 1))
        .map(|l| centred[l..].iter().zip(&centred[..n - l]).map(|(a, b)| a * b).sum::<f64>() / n as f64 / c0)
        .collect())
}

/// 1 + 2 Σ_{l=1}^{L} (1 − l/(L+1)) ρ̂_l with L from [`bartlett_bandwidth`].
pub fn inefficiency_factor(x: &[f64]) -> Result<f64> {
    if x.len() < MIN_CHAIN_LEN {
        return Err(Error::domain(
            "inefficiency_factor",
            format!("need at least {MIN_CHAIN_LEN} draws, got {}", x.len()),
        ));
    }
    let big_l = bartlett_bandwidth(x.len());
    let rho = autocorrelations(x, big_l)?;
    let tail: f64 = rho
        .iter()
        .enumerate()
        .map(|(i, r)| (1.0 - (i + 1) as f64 / (big_l + 1) as f64) * r)
        .sum();
    Ok(1.0 + 2.0 * tail)
}

/// Monte Carlo standard error of the mean of a correlated chain.
pub fn mcse(x: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((var * inefficiency_factor(x)?.max(1.0) / n).sqrt())
}
