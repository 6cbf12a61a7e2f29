//! Run configuration, read from JSON or TOML.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use maxstable::condsim::{SimulationConfig, TruncationPolicy};
use maxstable::geometry::DependenceModel;
use maxstable::gibbs::ChainConfig;
use maxstable::margins::{
    frechet_to_gev, frechet_to_gumbel, gev_to_frechet, gumbel_to_frechet, trend_surface_eval,
    GevParams, TrendSurface,
};
use maxstable::rectprob::QmcConfig;

/// Marginal scale of a value column. Never inferred from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Margins {
    /// Unit Frechet, the scale the simulators work on.
    Frechet,
    /// Standard Gumbel, `log z`.
    Gumbel,
    /// One GEV law for every site.
    Gev {
        location: f64,
        scale: f64,
        shape: f64,
    },
    /// GEV parameters as linear functions of site covariates.
    #[serde(rename = "gev+trend")]
    GevTrend { trend: TrendSurface },
}

impl Default for Margins {
    fn default() -> Self {
        Margins::Frechet
    }
}

impl Margins {
    fn gev(&self, covariates: &HashMap<String, f64>) -> maxstable::Result<Option<GevParams>> {
        match self {
            Margins::Gev {
                location,
                scale,
                shape,
            } => GevParams::new(*location, *scale, *shape).map(Some),
            Margins::GevTrend { trend } => trend_surface_eval(trend, covariates).map(Some),
            _ => Ok(None),
        }
    }

    /// Unit Frechet value to this scale.
    pub fn from_frechet(
        &self,
        z: f64,
        covariates: &HashMap<String, f64>,
    ) -> maxstable::Result<f64> {
        match self {
            Margins::Frechet => Ok(z),
            Margins::Gumbel => frechet_to_gumbel(z),
            _ => frechet_to_gev(z, &self.gev(covariates)?.expect("GEV margins")),
        }
    }

    /// Value on this scale to unit Frechet.
    pub fn to_frechet(&self, y: f64, covariates: &HashMap<String, f64>) -> maxstable::Result<f64> {
        match self {
            Margins::Frechet => {
                if y > 0.0 && y.is_finite() {
                    Ok(y)
                } else {
                    Err(maxstable::Error::Domain(format!(
                        "Frechet values must be positive and finite, got {y}"
                    )))
                }
            }
            Margins::Gumbel => gumbel_to_frechet(y),
            _ => gev_to_frechet(y, &self.gev(covariates)?.expect("GEV margins")),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Margins::Frechet => "frechet",
            Margins::Gumbel => "gumbel",
            Margins::Gev { .. } => "gev",
            Margins::GevTrend { .. } => "gev+trend",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditioningSpec {
    /// CSV with a `value` column, coordinate columns and optional covariates.
    pub path: PathBuf,
    /// Scale of the `value` column.
    pub margins: Margins,
}

/// Target sites: a CSV of sites, or the cell centres of an `nx` by `ny`
/// rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub path: Option<PathBuf>,
    pub nx: usize,
    pub ny: usize,
    pub xlim: [f64; 2],
    pub ylim: [f64; 2],
}

impl Default for GridSpec {
    fn default() -> Self {
        let side = 100.0 * std::f64::consts::SQRT_2;
        GridSpec {
            path: None,
            nx: 50,
            ny: 50,
            xlim: [0.0, side],
            ylim: [0.0, side],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtcoefSpec {
    pub h_max: f64,
    /// Number of distances, `0` to `h_max` inclusive.
    pub n_h: usize,
    /// Unconditional pairs simulated per distance; `0` skips the empirical column.
    pub empirical_replicates: usize,
}

impl Default for ExtcoefSpec {
    fn default() -> Self {
        ExtcoefSpec {
            h_max: 200.0,
            n_h: 41,
            empirical_replicates: 0,
        }
    }
}

fn default_coords() -> Vec<String> {
    vec!["x".into(), "y".into()]
}

fn default_probs() -> Vec<f64> {
    vec![0.025, 0.5, 0.975]
}

fn one() -> usize {
    1
}

fn default_threshold() -> usize {
    SimulationConfig::default().exact_k_threshold
}

fn default_cap() -> u64 {
    SimulationConfig::default().rejection_cap
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: DependenceModel,
    #[serde(default)]
    pub conditioning: Option<ConditioningSpec>,
    #[serde(default)]
    pub grid: GridSpec,
    /// Names of the coordinate columns in every input CSV.
    #[serde(default = "default_coords")]
    pub coords: Vec<String>,
    /// Scale of the simulated values written out.
    #[serde(default)]
    pub margins: Margins,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default = "default_probs")]
    pub quantiles: Vec<f64>,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default = "default_threshold")]
    pub exact_k_threshold: usize,
    #[serde(default)]
    pub qmc: QmcConfig,
    #[serde(default)]
    pub truncation: TruncationPolicy,
    #[serde(default = "default_cap")]
    pub rejection_cap: u64,
    #[serde(default)]
    pub ridge: bool,
    #[serde(default)]
    pub extcoef: ExtcoefSpec,
    /// Required, here or on the command line.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Values given on the command line win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub replicates: Option<usize>,
}

impl RunConfig {
    /// Parses JSON (`.json`) or TOML (anything else). Relative paths in the
    /// file are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::parse(&text, path.extension().is_some_and(|e| e == "json"))
            .with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn parse(text: &str, json: bool) -> Result<Self> {
        if json {
            Ok(serde_json::from_str(text)?)
        } else {
            Ok(toml::from_str(text)?)
        }
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let Some(c) = &mut self.conditioning {
            fix(&mut c.path);
        }
        if let Some(p) = &mut self.grid.path {
            fix(p);
        }
        if let Some(p) = &mut self.output_dir {
            fix(p);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if o.out.is_some() {
            self.output_dir = o.out.clone();
        }
        if let Some(r) = o.replicates {
            self.replicates = r;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().context("field `model`")?;
        if self.seed.is_none() {
            bail!("field `seed`: a seed is required (set it in the config or pass --seed)");
        }
        if self.output_dir.is_none() {
            bail!("field `output_dir`: an output directory is required (or pass --out)");
        }
        if self.replicates == 0 {
            bail!("field `replicates`: must be at least 1");
        }
        if self.coords.is_empty() {
            bail!("field `coords`: at least one coordinate column is needed");
        }
        if self.grid.path.is_none() {
            if self.grid.nx == 0 || self.grid.ny == 0 {
                bail!("field `grid`: nx and ny must be positive");
            }
            if self.coords.len() != 2 {
                bail!("field `grid`: a rectangle grid needs exactly two coordinate columns");
            }
        }
        if let Some(p) = self.quantiles.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            bail!("field `quantiles`: {p} is not a probability");
        }
        self.simulation()
            .validate()
            .context("simulation settings")?;
        if !(self.extcoef.h_max > 0.0) || self.extcoef.n_h < 2 {
            bail!("field `extcoef`: need h_max > 0 and at least two distances");
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated config")
    }

    pub fn output_dir(&self) -> &Path {
        self.output_dir.as_deref().expect("validated config")
    }

    pub fn simulation(&self) -> SimulationConfig {
        SimulationConfig {
            chain: self.chain,
            qmc: self.qmc,
            truncation: self.truncation,
            exact_k_threshold: self.exact_k_threshold,
            rejection_cap: self.rejection_cap,
            ridge: self.ridge,
            seed: self.seed.unwrap_or_default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOML: &str = r#"
seed = 7
output_dir = "out"
replicates = 10

[model]
family = "brown-resnick"
range = 25.0
smooth = 0.5

[conditioning]
path = "cond.csv"
margins = { kind = "gumbel" }

[margins]
kind = "gev+trend"
trend = { location = { intercept = 10.0, coefficients = { alt = 0.5 } }, scale = { intercept = 2.0 }, shape = { intercept = 0.1 } }

[chain]
burn_in = 100
"#;

    #[test]
    fn toml_and_json_agree() {
        let a = RunConfig::parse(TOML, false).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        let b = RunConfig::parse(&json, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.chain.burn_in, 100);
        assert_eq!(a.chain.thinning, 100);
        assert_eq!(a.grid.nx, 50);
        assert_eq!(a.conditioning.as_ref().unwrap().margins, Margins::Gumbel);
        assert_eq!(a.margins.name(), "gev+trend");
        a.validate().unwrap();
    }

    #[test]
    fn seed_and_scale_are_required() {
        let mut c = RunConfig::parse(TOML, false).unwrap();
        c.seed = None;
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("seed"), "{err}");
        c.apply(&Overrides {
            seed: Some(3),
            ..Overrides::default()
        });
        c.validate().unwrap();

        let no_scale = TOML.replace(r#"margins = { kind = "gumbel" }"#, "");
        assert!(RunConfig::parse(&no_scale, false).is_err());
        let bad_scale = TOML.replace("gumbel", "weibull");
        assert!(RunConfig::parse(&bad_scale, false).is_err());
    }

    #[test]
    fn margins_round_trip() {
        let mut cov = HashMap::new();
        cov.insert("alt".to_string(), 2.0);
        let trend = RunConfig::parse(TOML, false).unwrap().margins;
        for m in [
            Margins::Frechet,
            Margins::Gumbel,
            Margins::Gev {
                location: 1.0,
                scale: 2.0,
                shape: -0.2,
            },
            trend,
        ] {
            for z in [0.3, 1.0, 4.0] {
                let y = m.from_frechet(z, &cov).unwrap();
                assert!((m.to_frechet(y, &cov).unwrap() / z - 1.0).abs() < 1e-12);
            }
        }
        assert!(Margins::Frechet.to_frechet(-1.0, &cov).is_err());
    }
}
