//! CSV formats for panels, truths, draws, and summaries; key=value configs.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lorenz::LorenzFamily;
use crate::mcmc::PosteriorDraws;
use crate::model::{GroupedSeries, ProcessKind};
use crate::simulation::{SimConfig, SimTruth};

/// Tolerance used when deciding whether rows are cumulative shares.
const CUMULATIVE_TOL: f64 = 1e-9;

fn parse_err(path: &str, line: usize, column: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        column,
        msg: msg.into(),
    }
}

/// Reads a grouped-share file.
///
/// Layout: an optional `#p=…` line with the population cut points, a header
/// `period,n,c1,…,cK`, then one row per period. The K value columns may be
/// class shares or cumulative shares; rows that are all nondecreasing and end
/// at 1 are taken as cumulative and differenced. Without a `#p=` line the grid
/// is 1/K, 2/K, …, 1.
pub fn load_grouped_csv(path: impl AsRef<Path>) -> Result<GroupedSeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_grouped(&text, &path.display().to_string())
}

pub fn parse_grouped(text: &str, source: &str) -> Result<GroupedSeries> {
    let mut grid_line = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("#p=") {
            let mut cuts = Vec::new();
            for (c, field) in rest.split(',').enumerate() {
                cuts.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| parse_err(source, i + 1, c + 1, format!("bad cut point '{field}': {e}")))?,
                );
            }
            grid_line = Some(cuts);
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "period" || &headers[1] != "n" {
        return Err(parse_err(source, 1, 1, "header must be period,n,<K value columns>"));
    }
    let k = headers.len() - 2;
    let mut labels = Vec::new();
    let mut n = Vec::new();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != k + 2 {
            return Err(parse_err(source, line, record.len().min(k + 2), format!("expected {} fields, found {}", k + 2, record.len())));
        }
        labels.push(record[0].to_string());
        n.push(
            record[1]
                .parse::<u64>()
                .map_err(|e| parse_err(source, line, 2, format!("bad sample size '{}': {e}", &record[1])))?,
        );
        let mut row = Vec::with_capacity(k);
        for c in 0..k {
            let field = &record[c + 2];
            row.push(
                field
                    .parse::<f64>()
                    .map_err(|e| parse_err(source, line, c + 3, format!("bad value '{field}': {e}")))?,
            );
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(source, 2, 1, "no data rows"));
    }
    let cumulative = k > 1
        && rows.iter().all(|r| {
            r.windows(2).all(|w| w[1] >= w[0]) && (r[k - 1] - 1.0).abs() <= CUMULATIVE_TOL
        });
    if cumulative {
        for r in rows.iter_mut() {
            for i in (1..k).rev() {
                r[i] -= r[i - 1];
            }
        }
    }
    let p_grid = match grid_line {
        Some(mut cuts) => {
            if cuts.first() != Some(&0.0) {
                cuts.insert(0, 0.0);
            }
            if cuts.len() != k + 1 {
                return Err(parse_err(source, 1, 1, format!("#p line has {} cut points for {k} classes", cuts.len() - 1)));
            }
            cuts
        }
        None => (0..=k).map(|i| i as f64 / k as f64).collect(),
    };
    GroupedSeries::new(p_grid, rows, n, Some(labels))
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

fn grid_line(p_grid: &[f64]) -> String {
    let cuts: Vec<String> = p_grid[1..].iter().map(|&p| fmt(p)).collect();
    format!("#p={}\n", cuts.join(","))
}

/// Writes shares in the format read by [`load_grouped_csv`].
pub fn write_grouped_csv(series: &GroupedSeries, path: impl AsRef<Path>) -> Result<()> {
    let mut out = grid_line(series.p_grid());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["period".to_string(), "n".to_string()];
    header.extend((1..=series.classes()).map(|k| format!("q{k}")));
    w.write_record(&header)?;
    for t in 0..series.periods() {
        let mut rec = vec![series.labels()[t].clone(), series.sample_size(t).to_string()];
        rec.extend(series.row(t).iter().map(|&q| fmt(q)));
        w.write_record(&rec)?;
    }
    out.push_str(&String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is UTF-8"));
    fs::write(path, out)?;
    Ok(())
}

/// A numeric table with a text first column (period or draw label).
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub labels: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(headers: Vec<String>) -> Self {
        Self {
            headers,
            labels: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, label: impl Into<String>, row: Vec<f64>) {
        self.labels.push(label.into());
        self.rows.push(row);
    }

    /// Values of the named numeric column (the label column is not numeric).
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.headers.iter().position(|h| h == name)?.checked_sub(1)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.headers)?;
        for (label, row) in self.labels.iter().zip(&self.rows) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|&x| fmt(x)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let source = path.display().to_string();
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut table = Self::new(headers);
        for record in r.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let mut row = Vec::with_capacity(record.len().saturating_sub(1));
            for (c, field) in record.iter().enumerate().skip(1) {
                row.push(
                    field
                        .parse::<f64>()
                        .map_err(|e| parse_err(&source, line, c + 1, format!("bad number '{field}': {e}")))?,
                );
            }
            table.push(record.get(0).unwrap_or_default(), row);
        }
        Ok(table)
    }
}

/// Truth table: latent path, natural parameters, Gini, and L(p_k).
pub fn truth_table(series: &GroupedSeries, truth: &SimTruth) -> Table {
    let d = truth.theta.first().map_or(0, |th| th.family().dim());
    let family = truth.theta.first().map_or(LorenzFamily::SinghMaddala, |th| th.family());
    let mut headers = vec!["period".to_string()];
    headers.extend((1..=d).map(|j| format!("u{j}")));
    headers.extend(family.param_names().iter().map(|s| s.to_string()));
    headers.push("gini".into());
    headers.extend(series.p_grid().iter().map(|p| format!("L({p})")));
    let mut table = Table::new(headers);
    for t in 0..series.periods() {
        let mut row = truth.latent[t * d..(t + 1) * d].to_vec();
        row.extend_from_slice(truth.theta[t].values());
        row.push(truth.gini[t]);
        row.extend_from_slice(&truth.lorenz[t]);
        table.push(series.labels()[t].clone(), row);
    }
    table
}

/// One row per draw: ψ then (μ_j, ρ_j, τ_j²) for each coordinate.
pub fn draws_table(draws: &PosteriorDraws) -> Table {
    let mut headers = vec!["draw".to_string(), "psi".to_string()];
    for j in 1..=draws.dim {
        headers.extend([format!("mu{j}"), format!("rho{j}"), format!("tau2_{j}")]);
    }
    let mut table = Table::new(headers);
    for i in 0..draws.len() {
        let mut row = vec![draws.psi[i]];
        for p in draws.eta_at(i) {
            row.extend([p.mu, p.rho, p.tau2]);
        }
        table.push(i.to_string(), row);
    }
    table
}

/// Latent snapshots of every `every`-th stored draw, one row per snapshot.
pub fn latent_table(draws: &PosteriorDraws, every: usize) -> Table {
    let mut headers = vec!["draw".to_string()];
    for t in 1..=draws.periods {
        headers.extend((1..=draws.dim).map(|j| format!("u{t}_{j}")));
    }
    let mut table = Table::new(headers);
    let step = every.max(1);
    for i in (0..draws.latent_len()).step_by(step) {
        table.push(draws.latent_draw_index(i).to_string(), draws.latent_path(i).to_vec());
    }
    table
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str, source: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err(source, i + 1, 1, format!("expected key=value, found '{line}'")))?;
        out.push((k.trim().to_ascii_lowercase(), v.trim().to_string(), i + 1));
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(v: &str, source: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| parse_err(source, line, 1, format!("bad value '{v}': {e}")))
}

/// Simulation settings from key=value text.
///
/// Keys: `preset` (table1 | text), `periods`, `classes`, `seed`, `process`
/// (ar | rw), `mu1`, `rho1`, `tau2_1`, `mu2`, `rho2`, `tau2_2`, `c`, and
/// `pool` (comma-separated sample sizes).
pub fn sim_config_from_text(text: &str, source: &str) -> Result<SimConfig> {
    let pairs = parse_key_values(text, source)?;
    let mut cfg = SimConfig::table1();
    if let Some((_, v, line)) = pairs.iter().find(|(k, _, _)| k == "preset") {
        cfg = match v.to_ascii_lowercase().as_str() {
            "table1" => SimConfig::table1(),
            "text" => SimConfig::text_preset(),
            other => return Err(parse_err(source, *line, 1, format!("unknown preset '{other}'"))),
        };
    }
    for (k, v, line) in &pairs {
        let line = *line;
        match k.as_str() {
            "preset" => {}
            "periods" => cfg.periods = parse_value(v, source, line)?,
            "classes" => cfg.classes = parse_value(v, source, line)?,
            "seed" => cfg.seed = parse_value(v, source, line)?,
            "c" => cfg.process.c = parse_value(v, source, line)?,
            "process" => {
                cfg.process.kind = v
                    .parse::<ProcessKind>()
                    .map_err(|e| parse_err(source, line, 1, e.to_string()))?
            }
            "pool" => {
                cfg.pool = v
                    .split(',')
                    .map(|s| parse_value(s.trim(), source, line))
                    .collect::<Result<_>>()?
            }
            _ => {
                let (name, j) = match k.as_str() {
                    "mu1" => ("mu", 0),
                    "mu2" => ("mu", 1),
                    "rho1" => ("rho", 0),
                    "rho2" => ("rho", 1),
                    "tau2_1" => ("tau2", 0),
                    "tau2_2" => ("tau2", 1),
                    _ => return Err(parse_err(source, line, 1, format!("unknown key '{k}'"))),
                };
                let x: f64 = parse_value(v, source, line)?;
                let p = &mut cfg.process.coords[j];
                match name {
                    "mu" => p.mu = x,
                    "rho" => p.rho = x,
                    _ => p.tau2 = x,
                }
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
