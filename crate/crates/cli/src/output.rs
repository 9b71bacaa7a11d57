//! Table builders shared by the fit, compare and report commands.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use lorenz_ssm::io::{parse_key_values, Table};
use lorenz_ssm::mcmc::inefficiency_factor;
use lorenz_ssm::metrics::Summary;
use lorenz_ssm::ppl::PplResult;
use lorenz_ssm::GroupedSeries;

pub const RUN_FILE: &str = "run.txt";

/// Flat key=value description of a finished run.
#[derive(Debug, Clone, Default)]
pub struct RunInfo {
    pub entries: Vec<(String, String)>,
}

impl RunInfo {
    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text: String = self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        fs::write(dir.join(RUN_FILE), text)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(RUN_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("{} is not a run directory", dir.display()))?;
        let entries = parse_key_values(&text, &path.display().to_string())?
            .into_iter()
            .map(|(k, v, _)| (k, v))
            .collect();
        Ok(Self { entries })
    }
}

pub fn read_table(dir: &Path, name: &str) -> Result<Table> {
    let path = dir.join(name);
    Table::read(&path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn column(table: &Table, name: &str) -> Result<Vec<f64>> {
    table.column(name).ok_or_else(|| anyhow!("column '{name}' missing"))
}

fn summarize(draws: &[f64], what: &str) -> Result<Summary> {
    Summary::of(draws).with_context(|| format!("summarizing {what}"))
}

/// One row per period with the mean and 95% interval of each named quantity.
pub fn period_table(data: &GroupedSeries, names: &[String], draws: &[Vec<Vec<f64>>]) -> Result<Table> {
    let mut headers = vec!["period".to_string()];
    for n in names {
        headers.extend([n.clone(), format!("{n}_lo"), format!("{n}_hi")]);
    }
    let mut table = Table::new(headers);
    for t in 0..data.periods() {
        let mut row = Vec::with_capacity(3 * names.len());
        for (n, per_period) in names.iter().zip(draws) {
            let s = summarize(&per_period[t], n)?;
            row.extend([s.mean, s.lo, s.hi]);
        }
        table.push(data.labels()[t].clone(), row);
    }
    Ok(table)
}

/// Posterior mean, 95% interval, sd and inefficiency factor of scalar chains.
pub fn chain_summary(chains: &[(String, Vec<f64>)]) -> Result<Table> {
    let mut table = Table::new(["parameter", "mean", "lo", "hi", "sd", "inefficiency"].map(String::from).to_vec());
    for (name, x) in chains {
        let s = summarize(x, name)?;
        let n = x.len() as f64;
        let sd = (x.iter().map(|v| (v - s.mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        // a frozen chain has no defined factor
        let f = inefficiency_factor(x).unwrap_or(f64::NAN);
        table.push(name.clone(), vec![s.mean, s.lo, s.hi, sd, f]);
    }
    Ok(table)
}

/// λ_t summaries from per-period λ draws.
pub fn lambda_table(data: &GroupedSeries, lambda: &[Vec<f64>]) -> Result<Table> {
    let mut table = Table::new(["period", "n", "mean", "lo", "hi"].map(String::from).to_vec());
    for (t, draws) in lambda.iter().enumerate() {
        let s = summarize(draws, "lambda")?;
        table.push(data.labels()[t].clone(), vec![data.sample_size(t) as f64, s.mean, s.lo, s.hi]);
    }
    Ok(table)
}

/// Predictive means E_k and variances V_k for each period.
pub fn predictive_table(data: &GroupedSeries, res: &PplResult) -> Table {
    let k = data.classes();
    let mut headers = vec!["period".to_string()];
    headers.extend((1..=k).map(|i| format!("E{i}")));
    headers.extend((1..=k).map(|i| format!("V{i}")));
    let mut table = Table::new(headers);
    for t in 0..data.periods() {
        let mut row = res.mean[t * k..(t + 1) * k].to_vec();
        row.extend_from_slice(&res.var[t * k..(t + 1) * k]);
        table.push(data.labels()[t].clone(), row);
    }
    table
}

pub fn ppl_table(res: &PplResult) -> Table {
    let mut table = Table::new(["model", "r1", "rinf"].map(String::from).to_vec());
    table.push(res.label.clone(), vec![res.score_r1, res.score_rinf]);
    table
}

/// Column names L(p) for the interior grid points.
pub fn lorenz_names(data: &GroupedSeries) -> Vec<String> {
    let p = data.p_grid();
    p[1..p.len() - 1].iter().map(|p| format!("L({p})")).collect()
}
