use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use rayon::prelude::*;

use lorenz_ssm::baselines::{fit_separate_period, SeparateConfig, SeparateFitResult, SeparatePrior};
use lorenz_ssm::io::{self, load_grouped_csv, sim_config_from_text, write_grouped_csv, Table};
use lorenz_ssm::lorenz::lorenz_value;
use lorenz_ssm::mcmc::{run_chain, PosteriorDraws, SamplerConfig};
use lorenz_ssm::metrics::{functional_draws, relative_bias, Functional};
use lorenz_ssm::model::lambda_t;
use lorenz_ssm::ppl::{model_label, ppl_result, predictive_moments, separate_predictive_moments, PplResult};
use lorenz_ssm::simulation::{generate_dataset, SimConfig};
use lorenz_ssm::{GroupedSeries, LorenzFamily, PriorSpec, ProcessKind};

use crate::output::{
    chain_summary, column, lambda_table, lorenz_names, period_table, ppl_table, predictive_table, read_table, RunInfo,
};

pub struct FitRequest {
    pub data: PathBuf,
    pub families: Vec<LorenzFamily>,
    pub burnin: usize,
    pub draws: usize,
    pub prior_mean: f64,
    pub prior_var: f64,
    pub lambda_prior_var: f64,
    pub seed: u64,
    pub out: PathBuf,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write(table: &Table, dir: &Path, name: &str) -> Result<()> {
    let path = dir.join(name);
    table.write(&path).with_context(|| format!("cannot write {}", path.display()))
}

fn load_data(path: &Path) -> Result<GroupedSeries> {
    load_grouped_csv(path).with_context(|| format!("cannot load {}", path.display()))
}

fn sim_config_text(cfg: &SimConfig) -> String {
    let p = &cfg.process;
    let pool: Vec<String> = cfg.pool.iter().map(u64::to_string).collect();
    let mut s = format!(
        "periods = {}\nclasses = {}\nseed = {}\nprocess = {}\nc = {}\npool = {}\n",
        cfg.periods,
        cfg.classes,
        cfg.seed,
        p.kind.tag().to_ascii_lowercase(),
        p.c,
        pool.join(",")
    );
    for (j, c) in p.coords.iter().enumerate() {
        s += &format!("mu{0} = {1}\nrho{0} = {2}\ntau2_{0} = {3}\n", j + 1, c.mu, c.rho, c.tau2);
    }
    s
}

pub fn simulate(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg = match config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            sim_config_from_text(&text, &path.display().to_string())?
        }
        None => SimConfig::table1(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (series, truth) = generate_dataset(&cfg)?;
    create_dir(out)?;
    write_grouped_csv(&series, out.join("data.csv"))?;
    write(&io::truth_table(&series, &truth), out, "truth.csv")?;
    fs::write(out.join("config.txt"), sim_config_text(&cfg))?;
    println!("simulated {} periods x {} classes into {}", cfg.periods, cfg.classes, out.display());
    Ok(())
}

/// Output directory for one model; several models share `out` as a parent.
fn model_dir(out: &Path, label: &str, many: bool) -> PathBuf {
    if many {
        out.join(label.to_ascii_lowercase())
    } else {
        out.to_path_buf()
    }
}

pub fn fit(req: &FitRequest, processes: &[ProcessKind], c: f64, latent_every: usize) -> Result<()> {
    if latent_every == 0 {
        bail!("--latent-every must be at least 1");
    }
    if req.draws / latent_every < 100 {
        bail!("--draws / --latent-every must leave at least 100 stored latent paths");
    }
    let data = load_data(&req.data)?;
    let jobs: Vec<(LorenzFamily, ProcessKind)> = req
        .families
        .iter()
        .flat_map(|&f| processes.iter().map(move |&k| (f, k)))
        .collect();
    let many = jobs.len() > 1;
    let done: Vec<Result<String>> = jobs
        .par_iter()
        .map(|&(family, kind)| {
            let label = model_label(family, Some(kind));
            let dir = model_dir(&req.out, &label, many);
            fit_one(req, &data, family, kind, c, latent_every, &dir)
                .with_context(|| format!("{label} fit failed"))
                .map(|()| format!("{label} -> {}", dir.display()))
        })
        .collect();
    for r in done {
        println!("{}", r?);
    }
    Ok(())
}

fn state_space_chains(draws: &PosteriorDraws) -> Vec<(String, Vec<f64>)> {
    let mut chains = vec![("psi".to_string(), draws.psi.clone())];
    for j in 0..draws.dim {
        if draws.kind == ProcessKind::Ar1 {
            chains.push((format!("mu{}", j + 1), draws.mu(j)));
            chains.push((format!("rho{}", j + 1), draws.rho(j)));
        }
        chains.push((format!("tau2_{}", j + 1), draws.tau2(j)));
    }
    chains
}

fn fit_one(
    req: &FitRequest,
    data: &GroupedSeries,
    family: LorenzFamily,
    kind: ProcessKind,
    c: f64,
    latent_every: usize,
    dir: &Path,
) -> Result<()> {
    let label = model_label(family, Some(kind));
    let d = family.dim();
    let mut priors = PriorSpec::default_for(d).with_mu_prior(req.prior_mean, req.prior_var);
    priors.rw_c = c;
    priors.psi_var = req.lambda_prior_var;
    let cfg = SamplerConfig {
        n_burnin: req.burnin,
        n_draws: req.draws,
        seed: req.seed,
        latent_every,
        ..Default::default()
    };
    info!("{label}: {} burn-in + {} draws on {} periods", cfg.n_burnin, cfg.n_draws, data.periods());
    let draws = run_chain(data, family, kind, &priors, &cfg)?;
    create_dir(dir)?;

    write(&io::draws_table(&draws), dir, "draws.csv")?;
    write(&io::latent_table(&draws, 1), dir, "latent.csv")?;
    write(&chain_summary(&state_space_chains(&draws))?, dir, "summary.csv")?;

    let gini = functional_draws(&draws, Functional::Gini)?;
    write(&period_table(data, &["gini".into()], &[gini])?, dir, "gini.csv")?;
    let names: Vec<String> = family.param_names().iter().map(|s| s.to_string()).collect();
    let params: Vec<_> = (0..d)
        .map(|j| functional_draws(&draws, Functional::NaturalParam(j)))
        .collect::<lorenz_ssm::Result<_>>()?;
    write(&period_table(data, &names, &params)?, dir, "params.csv")?;
    let grid = data.p_grid();
    let lorenz: Vec<_> = grid[1..grid.len() - 1]
        .iter()
        .map(|&p| functional_draws(&draws, Functional::LorenzAt(p)))
        .collect::<lorenz_ssm::Result<_>>()?;
    write(&period_table(data, &lorenz_names(data), &lorenz)?, dir, "lorenz.csv")?;
    let lambda: Vec<Vec<f64>> = (0..data.periods())
        .map(|t| draws.psi.iter().map(|&psi| lambda_t(psi, data.sample_size(t))).collect())
        .collect();
    write(&lambda_table(data, &lambda)?, dir, "lambda.csv")?;

    let (mean, var) = predictive_moments(&draws, data)?;
    let res = ppl_result(label.clone(), mean, var, data)?;
    write_ppl(&res, data, dir)?;
    write_grouped_csv(data, dir.join("data.csv"))?;

    let acc = &draws.acceptance;
    let rate = |r: Option<f64>| r.map_or("none".to_string(), |x| format!("{x:.4}"));
    let mut run = RunInfo::default();
    run.set("kind", "state-space")
        .set("model", &label)
        .set("family", family.tag())
        .set("process", kind.tag())
        .set("data", req.data.display())
        .set("seed", req.seed)
        .set("burnin", req.burnin)
        .set("draws", req.draws)
        .set("latent_every", latent_every)
        .set("prior_mean", req.prior_mean)
        .set("prior_var", req.prior_var)
        .set("lambda_prior_var", req.lambda_prior_var)
        .set("c", c)
        .set("latent_armh_rate", rate(acc.latent_armh_rate()))
        .set("latent_rw_rate", rate(acc.latent_rw_rate()))
        .set("rho_rate", rate(acc.rho_rate()))
        .set("psi_rate", rate(acc.psi_rate()))
        .set("psi_step", draws.psi_step);
    run.write(dir)?;
    Ok(())
}

fn write_ppl(res: &PplResult, data: &GroupedSeries, dir: &Path) -> Result<()> {
    write(&ppl_table(res), dir, "ppl.csv")?;
    write(&predictive_table(data, res), dir, "predictive.csv")
}

pub fn fit_separate(req: &FitRequest) -> Result<()> {
    let data = load_data(&req.data)?;
    let prior = SeparatePrior {
        coord_mean: req.prior_mean,
        coord_var: req.prior_var,
        log_lambda_var: req.lambda_prior_var,
        ..Default::default()
    };
    let cfg = SeparateConfig {
        n_burnin: req.burnin,
        n_draws: req.draws,
        seed: req.seed,
        ..Default::default()
    };
    let many = req.families.len() > 1;
    for &family in &req.families {
        let label = model_label(family, None);
        let dir = model_dir(&req.out, &label, many);
        let fits: Vec<SeparateFitResult> = (0..data.periods())
            .into_par_iter()
            .map(|t| fit_separate_period(&data, t, family, &prior, &cfg))
            .collect::<lorenz_ssm::Result<_>>()
            .with_context(|| format!("{label} fit failed"))?;
        write_separate(req, &data, family, &fits, &dir)?;
        println!("{label} -> {}", dir.display());
    }
    Ok(())
}

fn write_separate(req: &FitRequest, data: &GroupedSeries, family: LorenzFamily, fits: &[SeparateFitResult], dir: &Path) -> Result<()> {
    let label = model_label(family, None);
    let d = family.dim();
    create_dir(dir)?;
    let gini: Vec<Vec<f64>> = fits.iter().map(|f| f.gini_draws()).collect::<lorenz_ssm::Result<_>>()?;
    write(&period_table(data, &["gini".into()], &[gini])?, dir, "gini.csv")?;

    let names: Vec<String> = family.param_names().iter().map(|s| s.to_string()).collect();
    let params: Vec<Vec<Vec<f64>>> = (0..d)
        .map(|j| {
            fits.iter()
                .map(|f| (0..f.len()).map(|i| f.theta(i).values()[j]).collect())
                .collect()
        })
        .collect();
    write(&period_table(data, &names, &params)?, dir, "params.csv")?;

    let grid = data.p_grid();
    let lorenz: Vec<Vec<Vec<f64>>> = grid[1..grid.len() - 1]
        .iter()
        .map(|&p| {
            fits.iter()
                .map(|f| (0..f.len()).map(|i| lorenz_value(&f.theta(i), p)).collect())
                .collect::<lorenz_ssm::Result<_>>()
        })
        .collect::<lorenz_ssm::Result<_>>()?;
    write(&period_table(data, &lorenz_names(data), &lorenz)?, dir, "lorenz.csv")?;

    let lambda: Vec<Vec<f64>> = fits
        .iter()
        .map(|f| (0..f.len()).map(|i| f.log_lambda(i).exp()).collect())
        .collect();
    write(&lambda_table(data, &lambda)?, dir, "lambda.csv")?;

    let mut acc = Table::new(vec!["period".into(), "acceptance".into()]);
    for (t, f) in fits.iter().enumerate() {
        acc.push(data.labels()[t].clone(), vec![f.acceptance_rate]);
    }
    write(&acc, dir, "acceptance.csv")?;

    let (mean, var) = separate_predictive_moments(fits, data)?;
    write_ppl(&ppl_result(label.clone(), mean, var, data)?, data, dir)?;
    write_grouped_csv(data, dir.join("data.csv"))?;

    let mut run = RunInfo::default();
    run.set("kind", "separate")
        .set("model", &label)
        .set("family", family.tag())
        .set("data", req.data.display())
        .set("seed", req.seed)
        .set("burnin", req.burnin)
        .set("draws", req.draws)
        .set("prior_mean", req.prior_mean)
        .set("prior_var", req.prior_var)
        .set("lambda_prior_var", req.lambda_prior_var);
    run.write(dir)?;
    Ok(())
}

pub fn compare(runs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut rows: Vec<(String, f64, f64)> = Vec::with_capacity(runs.len());
    for dir in runs {
        RunInfo::read(dir)?;
        let t = read_table(dir, "ppl.csv")?;
        let (Some(label), Some(row)) = (t.labels.first(), t.rows.first()) else {
            bail!("{}/ppl.csv has no rows", dir.display());
        };
        rows.push((label.clone(), row[0], row[1]));
    }
    for i in 0..rows.len() {
        if rows.iter().filter(|r| r.0 == rows[i].0).count() > 1 {
            let name = runs[i].file_name().map_or_else(|| runs[i].display().to_string(), |s| s.to_string_lossy().into_owned());
            rows[i].0 = format!("{} ({name})", rows[i].0);
        }
    }
    rows.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut table = Table::new(["model", "r1", "rinf"].map(String::from).to_vec());
    println!("{:<24} {:>12} {:>12}", "model", "PPL r=1", "PPL r=inf");
    for (label, r1, rinf) in rows {
        println!("{label:<24} {r1:>12.5} {rinf:>12.5}");
        table.push(label, vec![r1, rinf]);
    }
    if let Some(path) = out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        table.write(path).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

pub fn report(run: &Path, truth: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let info = RunInfo::read(run)?;
    let family: LorenzFamily = info.get("family").context("run.txt has no family")?.parse()?;
    let data = load_data(&run.join("data.csv"))?;
    let out = out.map_or_else(|| run.join("report"), Path::to_path_buf);
    create_dir(&out)?;

    let gini = read_table(run, "gini.csv")?;
    let params = read_table(run, "params.csv")?;
    let mut names = vec!["gini".to_string()];
    names.extend(family.param_names().iter().map(|s| s.to_string()));
    let source = |n: &str| if n == "gini" { &gini } else { &params };

    let mut ci = Table::new(std::iter::once("period".to_string()).chain(names.iter().cloned()).collect());
    let widths: Vec<Vec<f64>> = names
        .iter()
        .map(|n| {
            let (lo, hi) = (column(source(n), &format!("{n}_lo"))?, column(source(n), &format!("{n}_hi"))?);
            Ok(lo.iter().zip(&hi).map(|(a, b)| b - a).collect())
        })
        .collect::<Result<_>>()?;
    for t in 0..data.periods() {
        ci.push(data.labels()[t].clone(), widths.iter().map(|w| w[t]).collect());
    }
    write(&ci, &out, "ci_length.csv")?;

    let pred = read_table(run, "predictive.csv")?;
    let k = data.classes();
    let mut shares = Table::new(
        std::iter::once("period".to_string())
            .chain((1..=k).map(|i| format!("q{i}")))
            .chain((1..=k).map(|i| format!("E{i}")))
            .collect(),
    );
    for t in 0..data.periods() {
        let mut row = data.row(t).to_vec();
        row.extend_from_slice(&pred.rows[t][..k]);
        shares.push(data.labels()[t].clone(), row);
    }
    write(&shares, &out, "shares.csv")?;
    write(&read_table(run, "lambda.csv")?, &out, "lambda.csv")?;

    if let Some(path) = truth {
        let truth = Table::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        if truth.rows.len() != data.periods() {
            bail!("{} has {} periods, the run has {}", path.display(), truth.rows.len(), data.periods());
        }
        let mut bias = Table::new(std::iter::once("period".to_string()).chain(names.iter().cloned()).collect());
        let cols: Vec<Vec<f64>> = names
            .iter()
            .map(|n| {
                let est = column(source(n), n)?;
                let tru = column(&truth, n).with_context(|| format!("{} lacks truth for {n}", path.display()))?;
                est.iter().zip(&tru).map(|(&e, &x)| Ok(relative_bias(e, x)?)).collect()
            })
            .collect::<Result<_>>()?;
        for t in 0..data.periods() {
            bias.push(data.labels()[t].clone(), cols.iter().map(|c| c[t]).collect());
        }
        write(&bias, &out, "relbias.csv")?;
    }
    println!("report for {} -> {}", info.get("model").unwrap_or("run"), out.display());
    Ok(())
}
