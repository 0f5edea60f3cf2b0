use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use proxisim_core::epidemic::EpidemicParams;
use proxisim_core::eval::{Ablation, ExperimentConfig};
use proxisim_core::infer::{RatePrior, Resampling};
use proxisim_core::mobility::CampusSpec;
use proxisim_core::observe::EmissionNoise;
use proxisim_core::skm::parse_model;

use crate::exit::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSection {
    pub persons: usize,
    pub days: u64,
    /// Step length in hours.
    pub tau: f64,
    pub initial_prevalence: f64,
    /// Optional reaction file whose `I + S -> 2 I`, `I -> S` and `S -> I` rates set c1, c2, c3.
    pub model: Option<PathBuf>,
    /// Write one contact snapshot every this many steps.
    pub snapshot_every: u64,
}

impl Default for WorldSection {
    fn default() -> Self {
        WorldSection { persons: 300, days: 90, tau: 1.0, initial_prevalence: 0.02, model: None, snapshot_every: 24 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserveSection {
    pub volunteer_fraction: f64,
    pub discoverable_fraction: f64,
    pub compliance: f64,
    pub scan_every: u64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub nearby_sensitivity: f64,
    pub nearby_specificity: f64,
}

impl Default for ObserveSection {
    fn default() -> Self {
        let n = EmissionNoise::default();
        ObserveSection {
            volunteer_fraction: 0.1,
            discoverable_fraction: 0.3,
            compliance: 0.7,
            scan_every: 1,
            sensitivity: n.sensitivity,
            specificity: n.specificity,
            nearby_sensitivity: n.nearby_sensitivity,
            nearby_specificity: n.nearby_specificity,
        }
    }
}

impl ObserveSection {
    pub fn noise(&self) -> EmissionNoise {
        EmissionNoise {
            sensitivity: self.sensitivity,
            specificity: self.specificity,
            nearby_sensitivity: self.nearby_sensitivity,
            nearby_specificity: self.nearby_specificity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MobilitySource {
    /// Maximum-likelihood rates from the volunteer traces.
    Estimated,
    /// The campus rates from this config.
    Config,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub particles: usize,
    pub resampling: Resampling,
    pub ess_threshold: Option<f64>,
    pub mobility: MobilitySource,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection { particles: 200, resampling: Resampling::Multinomial, ess_threshold: None, mobility: MobilitySource::Estimated }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnSection {
    pub sweeps: usize,
    pub burn_in: usize,
    /// Beta priors over `c·τ` for c1, c2, c3.
    pub priors: [RatePrior; 3],
    /// Rates used by the first sweep; defaults to `[epidemic]`.
    pub start: Option<EpidemicParams>,
    pub learn_mobility: bool,
    pub mobility_prior: RatePrior,
}

impl Default for LearnSection {
    fn default() -> Self {
        let p = RatePrior { a: 1.0, b: 1.0 };
        LearnSection { sweeps: 50, burn_in: 10, priors: [p; 3], start: None, learn_mobility: false, mobility_prior: p }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    pub horizon_days: u64,
    /// Forecast from the end of this day; defaults to the last observed day.
    pub origin_day: Option<u64>,
    pub runs: Option<usize>,
}

impl Default for PredictSection {
    fn default() -> Self {
        PredictSection { horizon_days: 14, origin_day: None, runs: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub cross_validate: bool,
    pub population: bool,
    pub tests: bool,
    pub folds: usize,
    pub replicates: usize,
    pub volunteer_levels: Vec<f64>,
    pub first_origin_day: u64,
    pub origin_every_days: u64,
    pub permutations: usize,
    pub pseudocount: f64,
    pub modes: Vec<Ablation>,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            cross_validate: true,
            population: true,
            tests: true,
            folds: 10,
            replicates: 20,
            volunteer_levels: vec![0.1, 0.05, 1.0 / 30.0, 0.01],
            first_origin_day: 7,
            origin_every_days: 1,
            permutations: 999,
            pseudocount: 1.0,
            modes: vec![Ablation::SymptomsHeldOut, Ablation::SymptomsAndScansHeldOut],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Mandatory; normally supplied with `--seed`.
    pub seed: Option<u64>,
    pub world: WorldSection,
    pub epidemic: EpidemicSection,
    pub mobility: CampusSection,
    pub observe: ObserveSection,
    pub filter: FilterSection,
    pub learn: LearnSection,
    pub predict: PredictSection,
    pub evaluate: EvaluateSection,
    pub data: DataSection,
}

/// Directories written by earlier subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Output of `simulate`.
    pub truth: Option<PathBuf>,
    /// Output of `synth-obs`.
    pub observations: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpidemicSection {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for EpidemicSection {
    fn default() -> Self {
        let e = ExperimentConfig::default().epi;
        EpidemicSection { c1: e.c1, c2: e.c2, c3: e.c3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampusSection {
    pub clusters: usize,
    pub per_cluster: usize,
    pub within_rate: f64,
    pub cross_rate: f64,
    pub night_factor: f64,
    pub weekend_factor: f64,
}

impl Default for CampusSection {
    fn default() -> Self {
        let c = ExperimentConfig::default().campus;
        CampusSection {
            clusters: c.clusters,
            per_cluster: c.per_cluster,
            within_rate: c.within_rate,
            cross_rate: c.cross_rate,
            night_factor: c.night_factor,
            weekend_factor: c.weekend_factor,
        }
    }
}

impl CampusSection {
    pub fn spec(&self) -> CampusSpec {
        CampusSpec {
            clusters: self.clusters,
            per_cluster: self.per_cluster,
            within_rate: self.within_rate,
            cross_rate: self.cross_rate,
            night_factor: self.night_factor,
            weekend_factor: self.weekend_factor,
        }
    }
}

/// Set `path` (dotted) in a TOML table, creating intermediate tables.
fn set_path(root: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| anyhow!("empty key in --set {path}"))?;
    let mut table = root;
    for p in parts {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| anyhow!("--set {path}: `{p}` is not a table"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Load the config file (if any), then apply `--set` overrides and flags.
pub fn load(path: Option<&Path>, sets: &[String], seed: Option<u64>) -> Result<Config, Failure> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display())).map_err(Failure::config)?;
            text.parse::<toml::Table>().with_context(|| format!("parsing config {}", p.display())).map_err(Failure::config)?
        }
        None => toml::Table::new(),
    };
    for s in sets {
        let (k, v) = s.split_once('=').ok_or_else(|| Failure::config(anyhow!("--set expects key=value, got `{s}`")))?;
        set_path(&mut table, k.trim(), parse_value(v.trim())).map_err(Failure::config)?;
    }
    if let Some(s) = seed {
        table.insert("seed".into(), toml::Value::Integer(s as i64));
    }
    let cfg: Config = toml::Value::Table(table).try_into().context("invalid configuration").map_err(Failure::config)?;
    cfg.validate().map_err(Failure::config)?;
    for p in cfg.world.model.iter().chain(cfg.data.truth.iter()).chain(cfg.data.observations.iter()) {
        if !p.exists() {
            return Err(Failure::data(anyhow!("input not found: {}", p.display())));
        }
    }
    Ok(cfg)
}

impl Config {
    pub fn seed(&self) -> u64 {
        self.seed.expect("validated")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            bail!("a seed is required (--seed)");
        }
        if self.world.persons == 0 {
            bail!("world.persons must be positive");
        }
        let spd = 24.0 / self.world.tau;
        if !(self.world.tau > 0.0) || spd < 0.5 || (spd - spd.round()).abs() > 1e-6 {
            bail!("world.tau must be a positive divisor of 24 hours");
        }
        if self.world.snapshot_every == 0 || self.observe.scan_every == 0 {
            bail!("snapshot and scan intervals must be positive");
        }
        for (name, v) in [
            ("observe.volunteer_fraction", self.observe.volunteer_fraction),
            ("observe.discoverable_fraction", self.observe.discoverable_fraction),
            ("observe.compliance", self.observe.compliance),
            ("world.initial_prevalence", self.world.initial_prevalence),
        ] {
            if !(0.0..=1.0).contains(&v) {
                bail!("{name} must lie in [0,1], got {v}");
            }
        }
        self.observe.noise().validate()?;
        self.epi()?;
        if self.filter.particles == 0 {
            bail!("filter.particles must be positive");
        }
        if let Some(f) = self.filter.ess_threshold {
            if !(0.0..=1.0).contains(&f) {
                bail!("filter.ess_threshold must lie in [0,1]");
            }
        }
        if self.learn.sweeps == 0 || self.learn.burn_in >= self.learn.sweeps {
            bail!("learn.sweeps must exceed learn.burn_in");
        }
        for p in self.learn.priors.iter().chain([&self.learn.mobility_prior]) {
            RatePrior::new(p.a, p.b)?;
        }
        if self.predict.horizon_days == 0 {
            bail!("predict.horizon_days must be positive");
        }
        if self.evaluate.permutations < 100 {
            bail!("evaluate.permutations must be at least 100");
        }
        if self.mobility.clusters == 0 || self.mobility.per_cluster == 0 {
            bail!("mobility needs at least one location");
        }
        Ok(())
    }

    pub fn steps_per_day(&self) -> u64 {
        (24.0 / self.world.tau).round() as u64
    }

    pub fn steps(&self) -> u64 {
        self.world.days * self.steps_per_day()
    }

    /// Epidemic rates, from the model file when one is given.
    pub fn epi(&self) -> Result<EpidemicParams> {
        let Some(path) = &self.world.model else {
            return Ok(EpidemicParams::new(self.epidemic.c1, self.epidemic.c2, self.epidemic.c3)?);
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
        let sys = parse_model(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
        let (i, s) = match (sys.species_index("I"), sys.species_index("S")) {
            (Some(i), Some(s)) if sys.num_species() == 2 => (i, s),
            _ => bail!("{}: the model must use exactly the species I and S", path.display()),
        };
        let mut c = [None; 3];
        for e in &sys.events {
            let shape = (e.reactants[i], e.reactants[s], e.products[i], e.products[s]);
            let slot = match shape {
                (1, 1, 2, 0) => 0,
                (1, 0, 0, 1) => 1,
                (0, 1, 1, 0) => 2,
                _ => bail!("{}: unsupported reaction for the SIS model", path.display()),
            };
            if c[slot].replace(e.rate).is_some() {
                bail!("{}: duplicate SIS reaction", path.display());
            }
        }
        match c {
            [Some(a), Some(b), Some(d)] => Ok(EpidemicParams::new(a, b, d)?),
            _ => bail!("{}: the model needs I + S -> 2 I, I -> S and S -> I", path.display()),
        }
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig {
            persons: self.world.persons,
            campus: self.mobility.spec(),
            days: self.world.days,
            tau: self.world.tau,
            epi: self.epi()?,
            initial_prevalence: self.world.initial_prevalence,
            noise: self.observe.noise(),
            compliance: self.observe.compliance,
            discoverable_fraction: self.observe.discoverable_fraction,
            volunteer_fraction: self.observe.volunteer_fraction,
            volunteer_levels: self.evaluate.volunteer_levels.clone(),
            replicates: self.evaluate.replicates,
            particles: self.filter.particles,
            resampling: self.filter.resampling,
            ess_threshold: self.filter.ess_threshold,
            horizon_days: self.predict.horizon_days,
            first_origin_day: self.evaluate.first_origin_day,
            origin_every_days: self.evaluate.origin_every_days,
            predict_runs: self.predict.runs,
            scan_every: self.observe.scan_every,
            folds: self.evaluate.folds,
            seed: self.seed(),
        })
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
