//! The four subcommands. Each writes its tables into the output directory
//! and returns the paths written.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use maxstable::condsim::{ConditionalSimulator, ConditioningSet, UnconditionalSimulator};
use maxstable::geometry::SiteSet;
use maxstable::gibbs::{exact_scenario_distribution, gibbs_chain, ScenarioWeights};
use maxstable::partition::Partition;
use maxstable::rng::{derive_seed, stream};
use maxstable::summary::{madogram_extremal_coefficient, quantiles};

use crate::config::{Margins, RunConfig};
use crate::io::{
    num, read_conditioning, read_sites, write_quantiles, write_replicates, write_table, SiteTable,
};

const CHAIN_TAG: u64 = 0x6368_6169;
const WEIGHT_TAG: u64 = 0x7765_6967;

pub fn targets(cfg: &RunConfig) -> Result<SiteTable> {
    match &cfg.grid.path {
        Some(p) => read_sites(p, &cfg.coords),
        None => {
            let g = &cfg.grid;
            let sites = SiteSet::grid(g.nx, g.ny, (g.xlim[0], g.xlim[1]), (g.ylim[0], g.ylim[1]))
                .context("field `grid`")?;
            Ok(SiteTable::from_sites(sites, &cfg.coords))
        }
    }
}

/// Conditioning data mapped to unit Frechet with the configured scale.
pub fn conditioning(cfg: &RunConfig) -> Result<ConditioningSet> {
    let Some(spec) = &cfg.conditioning else {
        bail!("field `conditioning`: this command needs conditioning data");
    };
    let c = read_conditioning(&spec.path, &cfg.coords)?;
    let z = c
        .values
        .iter()
        .zip(&c.table.covariates)
        .enumerate()
        .map(|(i, (v, cov))| {
            spec.margins.to_frechet(*v, cov).with_context(|| {
                format!(
                    "{} row {} ({}): value on the {} scale",
                    spec.path.display(),
                    i + 1,
                    c.table.sites.label(i),
                    spec.margins.name()
                )
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    ConditioningSet::new(c.table.sites, z)
        .with_context(|| format!("conditioning data in {}", spec.path.display()))
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = cfg.output_dir();
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn to_margins(margins: &Margins, t: &SiteTable, reps: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    reps.iter()
        .enumerate()
        .map(|(r, vals)| {
            vals.iter()
                .zip(&t.covariates)
                .enumerate()
                .map(|(i, (v, cov))| {
                    margins.from_frechet(*v, cov).with_context(|| {
                        format!(
                            "replicate {}, site {}: transform to {} margins",
                            r + 1,
                            t.sites.label(i),
                            margins.name()
                        )
                    })
                })
                .collect()
        })
        .collect()
}

/// Pointwise quantiles across replicates, one row per site.
fn site_quantiles(reps: &[Vec<f64>], m: usize, probs: &[f64]) -> Result<Vec<Vec<f64>>> {
    (0..m)
        .map(|i| {
            let col: Vec<f64> = reps.iter().map(|r| r[i]).collect();
            Ok(quantiles(&col, probs)?)
        })
        .collect()
}

fn write_fields(
    cfg: &RunConfig,
    dir: &Path,
    t: &SiteTable,
    frechet: &[Vec<f64>],
    extra: &[String],
) -> Result<Vec<PathBuf>> {
    let reps = to_margins(&cfg.margins, t, frechet)?;
    let mut comments = vec![
        format!("margins: {}", cfg.margins.name()),
        format!("replicates: {}", reps.len()),
        format!("seed: {}", cfg.seed()),
    ];
    comments.extend_from_slice(extra);
    let rep_path = dir.join("replicates.csv");
    write_replicates(&rep_path, &comments, &t.labels(), &reps)?;
    let q = site_quantiles(&reps, t.sites.len(), &cfg.quantiles)?;
    let mut qc = comments.clone();
    qc.push("quantiles: midpoint rule, order statistic i at probability (i - 0.5) / n, linear in between".into());
    let q_path = dir.join("quantiles.csv");
    write_quantiles(&q_path, &qc, &t.sites, &cfg.coords, &cfg.quantiles, &q)?;
    Ok(vec![rep_path, q_path])
}

pub fn cmd_uncond(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let t = targets(cfg)?;
    let sim = UnconditionalSimulator::new(&cfg.model, &t.sites, &cfg.truncation, cfg.ridge)
        .context("setting up the unconditional simulator")?;
    let seed = cfg.seed();
    let fields: Vec<_> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| sim.simulate(&mut stream(seed, r as u64)))
        .collect();
    let truncated = fields.iter().filter(|f| f.truncated).count();
    if truncated > 0 {
        eprintln!(
            "warning: {truncated} replicates hit the atom cap before the stopping rule fired"
        );
    }
    let frechet: Vec<Vec<f64>> = fields.into_iter().map(|f| f.values).collect();
    let dir = out_dir(cfg)?;
    write_fields(
        cfg,
        dir,
        &t,
        &frechet,
        &[format!("truncated replicates: {truncated}")],
    )
}

pub fn cmd_condsim(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let cond = conditioning(cfg)?;
    let t = targets(cfg)?;
    let mut sim = ConditionalSimulator::new(&cfg.model, &cond, &t.sites, &cfg.simulation())
        .context("setting up the conditional simulator")?;
    let seed = cfg.seed();
    let taus = sim
        .draw_partitions(cfg.replicates, &mut stream(derive_seed(seed, CHAIN_TAG), 0))
        .context("drawing hitting scenarios")?;
    let sim = &sim;
    let reals = taus
        .par_iter()
        .enumerate()
        .map(|(r, tau)| {
            sim.realize(tau, &mut stream(seed, r as u64))
                .with_context(|| format!("replicate {}", r + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    let truncated = reals.iter().filter(|r| r.truncated).count();
    if truncated > 0 {
        eprintln!(
            "warning: {truncated} replicates hit the atom cap before the stopping rule fired"
        );
    }
    let dir = out_dir(cfg)?;
    let scenario = if sim.scenario_distribution().is_some() {
        "exact enumeration"
    } else {
        "gibbs sampler"
    };
    let extra = [
        format!("conditioning sites: {}", cond.len()),
        format!("hitting scenarios: {scenario}"),
        format!("truncated replicates: {truncated}"),
    ];
    let frechet: Vec<Vec<f64>> = reals.iter().map(|r| r.values.clone()).collect();
    let mut files = write_fields(cfg, dir, &t, &frechet, &extra)?;

    let p = dir.join("partitions.csv");
    let header = ["replicate", "partition", "size", "atoms", "truncated"].map(String::from);
    let rows = reals.iter().enumerate().map(|(r, x)| {
        vec![
            (r + 1).to_string(),
            x.partition.to_string(),
            x.partition.size().to_string(),
            x.atoms.to_string(),
            x.truncated.to_string(),
        ]
    });
    write_table(&p, &[], &header, rows)?;
    files.push(p);

    let sizes: Vec<usize> = reals.iter().map(|r| r.partition.size()).collect();
    let p = dir.join("partition_sizes.csv");
    write_size_histogram(
        &p,
        &[format!("replicates: {}", sizes.len())],
        cond.len(),
        &sizes,
    )?;
    files.push(p);
    Ok(files)
}

fn write_size_histogram(path: &Path, comments: &[String], k: usize, sizes: &[usize]) -> Result<()> {
    let mut counts = vec![0usize; k + 1];
    for &s in sizes {
        counts[s] += 1;
    }
    let n = sizes.len().max(1) as f64;
    let header = ["size", "count", "proportion"].map(String::from);
    let rows = (1..=k).map(|s| {
        vec![
            s.to_string(),
            counts[s].to_string(),
            num(counts[s] as f64 / n),
        ]
    });
    write_table(path, comments, &header, rows)
}

pub fn cmd_diag(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let cond = conditioning(cfg)?;
    let k = cond.len();
    if k < 2 {
        bail!("diag needs at least two conditioning sites, got {k}");
    }
    let seed = cfg.seed();
    let mut w = ScenarioWeights::new(
        &cfg.model,
        cond.x(),
        cond.z(),
        cfg.qmc,
        derive_seed(seed, WEIGHT_TAG),
    )
    .context("scenario weights")?;
    let chain = gibbs_chain(
        &mut w,
        &cfg.chain,
        &mut stream(derive_seed(seed, CHAIN_TAG), 0),
    )
    .context("running the Gibbs sampler")?;
    let dir = out_dir(cfg)?;
    let comments = [
        format!("conditioning sites: {k}"),
        format!(
            "burn-in: {}, thinning: {}, length: {}",
            cfg.chain.burn_in, cfg.chain.thinning, cfg.chain.length
        ),
        format!("seed: {seed}"),
    ];
    let mut files = Vec::new();

    let p = dir.join("trace.csv");
    let header = ["iteration", "partition", "size"].map(String::from);
    let rows = chain
        .iterations
        .iter()
        .zip(&chain.states)
        .map(|(i, s)| vec![i.to_string(), s.to_string(), s.size().to_string()]);
    write_table(&p, &comments, &header, rows)?;
    files.push(p);

    let p = dir.join("partition_sizes.csv");
    let sizes: Vec<usize> = chain.states.iter().map(Partition::size).collect();
    write_size_histogram(&p, &comments, k, &sizes)?;
    files.push(p);

    if k <= cfg.exact_k_threshold {
        let exact = exact_scenario_distribution(&mut w).context("enumerating hitting scenarios")?;
        let mut counts: HashMap<&Partition, usize> = HashMap::new();
        for s in &chain.states {
            *counts.entry(s).or_default() += 1;
        }
        let n = chain.states.len() as f64;
        let empirical: Vec<f64> = exact
            .partitions
            .iter()
            .map(|p| counts.get(p).copied().unwrap_or(0) as f64 / n)
            .collect();
        let tv = 0.5
            * exact
                .probs
                .iter()
                .zip(&empirical)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        let p = dir.join("exact.csv");
        let mut c = comments.to_vec();
        c.push(format!("total variation distance: {tv}"));
        let header = ["partition", "size", "exact", "empirical"].map(String::from);
        let rows = exact
            .partitions
            .iter()
            .zip(&exact.probs)
            .zip(&empirical)
            .map(|((p, q), e)| vec![p.to_string(), p.size().to_string(), num(*q), num(*e)]);
        write_table(&p, &c, &header, rows)?;
        files.push(p);
        let p = dir.join("tv.csv");
        write_table(&p, &comments, &["tv".to_string()], [vec![num(tv)]])?;
        files.push(p);
    }
    Ok(files)
}

pub fn cmd_extcoef(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let spec = &cfg.extcoef;
    let hs: Vec<f64> = (0..spec.n_h)
        .map(|i| spec.h_max * i as f64 / (spec.n_h - 1) as f64)
        .collect();
    let theta = hs
        .iter()
        .map(|h| cfg.model.extremal_coefficient(*h))
        .collect::<maxstable::Result<Vec<f64>>>()?;
    let seed = cfg.seed();
    let dim = cfg.coords.len();
    let empirical: Option<Vec<Option<f64>>> = (spec.empirical_replicates > 0)
        .then(|| {
            hs.par_iter()
                .enumerate()
                .map(|(i, &h)| {
                    if h == 0.0 {
                        return Ok(None);
                    }
                    // symmetric about the origin, along the first axis
                    let mut a = vec![0.0; dim];
                    let mut b = vec![0.0; dim];
                    a[0] = -h / 2.0;
                    b[0] = h / 2.0;
                    let pair = SiteSet::new(vec![a, b])?;
                    let sim =
                        UnconditionalSimulator::new(&cfg.model, &pair, &cfg.truncation, cfg.ridge)?;
                    let mut rng = stream(seed, i as u64);
                    let (mut z1, mut z2) = (Vec::new(), Vec::new());
                    for _ in 0..spec.empirical_replicates {
                        let v = sim.simulate(&mut rng).values;
                        z1.push(v[0]);
                        z2.push(v[1]);
                    }
                    Ok(Some(madogram_extremal_coefficient(&z1, &z2)?))
                })
                .collect::<maxstable::Result<Vec<_>>>()
        })
        .transpose()
        .context("empirical extremal coefficients")?;
    let dir = out_dir(cfg)?;
    let mut header = vec!["h".to_string(), "theta".to_string()];
    let mut comments = vec![format!(
        "model: {} range {} smoothness {}",
        cfg.model.family, cfg.model.range, cfg.model.smooth
    )];
    if empirical.is_some() {
        header.push("theta_empirical".into());
        comments.push(format!(
            "empirical: F-madogram over {} unconditional pairs per distance, seed {seed}",
            spec.empirical_replicates
        ));
    }
    let rows = hs.iter().zip(&theta).enumerate().map(|(i, (h, t))| {
        let mut r = vec![num(*h), num(*t)];
        if let Some(e) = &empirical {
            r.push(e[i].map(num).unwrap_or_default());
        }
        r
    });
    let p = dir.join("extcoef.csv");
    write_table(&p, &comments, &header, rows)?;
    Ok(vec![p])
}
