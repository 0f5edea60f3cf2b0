use std::collections::BTreeMap;
use std::io::Write;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{precision_recall, r_squared, ScoredLabel};
use super::stats::{pairs_from_groups, DayContacts, SymptomNetwork};
use crate::epidemic::{location_groups, EpidemicParams};
use crate::infer::{predict_forward, run_filter, FilterOptions, ModelBundle, PredictOptions, Resampling};
use crate::mobility::{CampusSpec, Visit};
use crate::observe::{
    sample_discoverable, synthesize_observations, volunteer_order, EmissionNoise, ObservationLog, SymptomReport, SynthOptions,
    VolunteerPanel,
};
use crate::rng::{derive, stream, tag};
use crate::world::{simulate_world, InitialCondition, WorldModel, WorldState, WorldTrajectory};
use crate::{Error, Result};

/// Protocol constants for synthetic experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub persons: usize,
    pub campus: CampusSpec,
    pub days: u64,
    /// Step length in hours.
    pub tau: f64,
    pub epi: EpidemicParams,
    pub initial_prevalence: f64,
    pub noise: EmissionNoise,
    pub compliance: f64,
    pub discoverable_fraction: f64,
    /// Volunteer fraction for cross-validation.
    pub volunteer_fraction: f64,
    /// Volunteer fractions compared in the population experiment.
    pub volunteer_levels: Vec<f64>,
    pub replicates: usize,
    pub particles: usize,
    pub resampling: Resampling,
    pub ess_threshold: Option<f64>,
    pub horizon_days: u64,
    pub first_origin_day: u64,
    pub origin_every_days: u64,
    pub predict_runs: Option<usize>,
    pub scan_every: u64,
    pub folds: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            persons: 300,
            campus: CampusSpec { clusters: 5, per_cluster: 3, within_rate: 0.5, cross_rate: 0.02, night_factor: 0.2, weekend_factor: 0.5 },
            days: 90,
            tau: 1.0,
            epi: EpidemicParams { c1: 0.002, c2: 1.0 / 144.0, c3: 2e-5 },
            initial_prevalence: 0.02,
            noise: EmissionNoise::default(),
            compliance: 0.7,
            discoverable_fraction: 0.3,
            volunteer_fraction: 0.1,
            volunteer_levels: vec![0.1, 0.05, 1.0 / 30.0, 0.01],
            replicates: 20,
            particles: 200,
            resampling: Resampling::Multinomial,
            ess_threshold: None,
            horizon_days: 14,
            first_origin_day: 7,
            origin_every_days: 1,
            predict_runs: Some(50),
            scan_every: 1,
            folds: 10,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.persons == 0 || self.days == 0 || self.replicates == 0 || self.particles == 0 {
            return Err(Error::invalid("persons, days, replicates and particles must be positive"));
        }
        if self.folds < 2 {
            return Err(Error::invalid("at least two folds are required"));
        }
        for f in self.volunteer_levels.iter().chain([&self.volunteer_fraction]) {
            if !(*f > 0.0 && *f <= 1.0) {
                return Err(Error::invalid(format!("volunteer fraction {f} outside (0,1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.discoverable_fraction) || !(0.0..=1.0).contains(&self.initial_prevalence) {
            return Err(Error::invalid("fractions must lie in [0,1]"));
        }
        if self.horizon_days == 0 || self.origin_every_days == 0 || self.scan_every == 0 {
            return Err(Error::invalid("horizon, origin spacing and scan interval must be positive"));
        }
        if self.first_origin_day + self.horizon_days >= self.days {
            return Err(Error::invalid("no forecast origin leaves room for the horizon"));
        }
        self.epi.validate()?;
        self.noise.validate()
    }

    pub fn model(&self) -> Result<WorldModel> {
        WorldModel::new(self.persons, self.epi, self.campus.build()?, self.tau)
    }

    pub fn steps_per_day(&self) -> u64 {
        (24.0 / self.tau).round() as u64
    }

    /// Forecast origin steps: the end of each origin day.
    pub fn origins(&self) -> Vec<u64> {
        let spd = self.steps_per_day();
        (self.first_origin_day..self.days - self.horizon_days)
            .step_by(self.origin_every_days as usize)
            .map(|d| (d + 1) * spd)
            .collect()
    }

    pub fn volunteer_count(&self, fraction: f64) -> usize {
        ((fraction * self.persons as f64).round() as usize).clamp(1, self.persons)
    }
}

/// Ground truth for one replicate plus the random panel ordering.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub model: WorldModel,
    pub init: InitialCondition,
    pub truth: WorldTrajectory,
    pub order: Vec<u32>,
    pub discoverable: Vec<u32>,
    pub seed: u64,
}

impl SyntheticWorld {
    pub fn generate(cfg: &ExperimentConfig, replicate: u64) -> Result<Self> {
        cfg.validate()?;
        let model = cfg.model()?;
        let seed = derive(cfg.seed, tag::EXPERIMENT, replicate, 0);
        let mut rng = stream(seed, tag::INIT, 0, 0);
        let l = model.locations();
        let locations: Vec<u16> = (0..cfg.persons).map(|_| rng.random_range(0..l) as u16).collect();
        let init = InitialCondition { prevalence: cfg.initial_prevalence, locations };
        let x0 = init.sample(&model, &mut rng)?;
        let truth = simulate_world(&model, x0, cfg.days * cfg.steps_per_day(), seed)?;
        let mut prng = stream(seed, tag::PANEL, 0, 0);
        let order = volunteer_order(cfg.persons as u32, &mut prng);
        let discoverable = sample_discoverable(cfg.persons as u32, cfg.discoverable_fraction, &mut prng);
        Ok(SyntheticWorld { model, init, truth, order, discoverable, seed })
    }

    pub fn panel(&self, cfg: &ExperimentConfig, volunteers: usize) -> Result<VolunteerPanel> {
        VolunteerPanel::new(cfg.persons as u32, self.order[..volunteers].to_vec(), self.discoverable.clone(), cfg.compliance)
    }

    /// Observations for a panel. Reports for a given volunteer do not depend on
    /// the panel size.
    pub fn observe(&self, cfg: &ExperimentConfig, panel: &VolunteerPanel) -> Result<ObservationLog> {
        let opts = SynthOptions { scan_every: cfg.scan_every, steps_per_day: cfg.steps_per_day() };
        synthesize_observations(&self.model, &self.truth, panel, &cfg.noise, &opts, derive(self.seed, tag::OBSERVE, 0, 0))
    }

    pub fn bundle(&self, cfg: &ExperimentConfig, panel: VolunteerPanel) -> Result<ModelBundle> {
        ModelBundle::new(self.model.clone(), self.init.clone(), cfg.noise, panel)
    }
}

/// Infectious intervals `[start, end)` in steps for each person.
fn infectious_intervals(truth: &WorldTrajectory) -> Vec<Vec<(u64, u64)>> {
    let n = truth.initial.persons();
    let mut open: Vec<Option<u64>> = truth.initial.health.iter().map(|h| h.is_infectious().then_some(0)).collect();
    let mut out = vec![Vec::new(); n];
    let mut s = truth.initial.clone();
    for t in 1..=truth.steps() {
        truth.apply_step(&mut s, t);
        if let Some(e) = truth.events[(t - 1) as usize] {
            let p = e.person as usize;
            match open[p].take() {
                Some(start) => out[p].push((start, t)),
                None => open[p] = Some(t),
            }
        }
    }
    for (p, o) in open.into_iter().enumerate() {
        if let Some(start) = o {
            out[p].push((start, truth.steps() + 1));
        }
    }
    out
}

/// Whether each person is infectious at some step of `(t, t + horizon]`.
pub fn window_labels(truth: &WorldTrajectory, origins: &[u64], horizon: u64) -> Vec<Vec<bool>> {
    let iv = infectious_intervals(truth);
    origins
        .iter()
        .map(|&t| iv.iter().map(|list| list.iter().any(|&(a, b)| a <= t + horizon && b > t + 1)).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Held-out volunteers keep their location traces and scans.
    SymptomsHeldOut,
    /// Held-out volunteers lose reports, traces and the scans only they made.
    SymptomsAndScansHeldOut,
    /// Nothing is removed.
    Identity,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::SymptomsHeldOut => "symptoms-held-out",
            Ablation::SymptomsAndScansHeldOut => "symptoms-and-scans-held-out",
            Ablation::Identity => "identity",
        }
    }
}

/// Split volunteers into `k` folds: shuffle, then deal round-robin.
pub fn assign_folds<R: Rng + ?Sized>(volunteers: &[u32], k: usize, rng: &mut R) -> Vec<Vec<u32>> {
    let mut v = volunteers.to_vec();
    v.shuffle(rng);
    let mut folds = vec![Vec::new(); k];
    for (i, p) in v.into_iter().enumerate() {
        folds[i % k].push(p);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    folds
}

fn location_at(visits: &[&Visit], t: u64, tau: f64) -> Option<u16> {
    let i = visits.partition_point(|v| (v.enter_time / tau).round() as u64 <= t);
    (i > 0 && t <= (visits[i - 1].exit_time / tau).round() as u64).then(|| visits[i - 1].location)
}

/// Remove the held-out volunteers' data from a log.
pub fn redact(obs: &ObservationLog, panel: &VolunteerPanel, held_out: &[u32], mode: Ablation, tau: f64) -> ObservationLog {
    if mode == Ablation::Identity {
        return obs.clone();
    }
    let mut out = obs.clone();
    out.reports.retain(|r| held_out.binary_search(&r.person).is_err());
    if mode == Ablation::SymptomsAndScansHeldOut {
        let mut by_person: BTreeMap<u32, Vec<&Visit>> = BTreeMap::new();
        for v in &obs.volunteer_visits {
            if held_out.binary_search(&v.person).is_err() && panel.volunteers.binary_search(&v.person).is_ok() {
                by_person.entry(v.person).or_default().push(v);
            }
        }
        by_person.values_mut().for_each(|v| v.sort_by(|a, b| a.enter_time.total_cmp(&b.enter_time)));
        out.scans.retain(|s| by_person.values().any(|v| location_at(v, s.t, tau) == Some(s.location)));
        out.volunteer_visits.retain(|v| held_out.binary_search(&v.person).is_err());
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub modes: Vec<Ablation>,
    pub origins: Vec<u64>,
    pub horizon: u64,
    pub filter: FilterOptions,
    pub predict_runs: Option<usize>,
    pub fold_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvFold {
    pub mode: Ablation,
    pub fold: usize,
    pub ap: Option<f64>,
    pub positives: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvModeSummary {
    pub mode: Ablation,
    /// Mean of per-fold AP over folds with at least one positive.
    pub mean_ap: f64,
    /// AP of all folds' scores pooled together.
    pub pooled_ap: f64,
    pub prevalence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<CvFold>,
    pub summary: Vec<CvModeSummary>,
    pub scores: BTreeMap<String, Vec<ScoredLabel>>,
}

impl CvReport {
    pub fn mode(&self, mode: Ablation) -> Option<&CvModeSummary> {
        self.summary.iter().find(|s| s.mode == mode)
    }
}

/// Filter, then forecast at each origin; returns per-origin per-person window probabilities.
pub fn forecast_persons(
    bundle: &ModelBundle,
    obs: &ObservationLog,
    origins: &[u64],
    horizon: u64,
    filter: FilterOptions,
    runs: Option<usize>,
) -> Result<Vec<Vec<f64>>> {
    let last = origins.iter().copied().max().unwrap_or(0);
    let mut out = Vec::with_capacity(origins.len());
    let mut err = None;
    let popts = PredictOptions { horizon, runs, seed: filter.seed };
    run_filter(bundle, obs, last, filter, |v| {
        if err.is_none() && origins.binary_search(&v.t).is_ok() {
            match predict_forward(&bundle.world, v.selected, v.selected_weights, v.t, &popts) {
                Ok(p) => out.push(p.per_person),
                Err(e) => err = Some(e),
            }
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// K-fold cross-validation of individual forecasts over the volunteer panel.
pub fn cross_validate(bundle: &ModelBundle, truth: &WorldTrajectory, obs: &ObservationLog, opts: &CvOptions) -> Result<CvReport> {
    if opts.folds < 2 || opts.folds > bundle.panel.volunteers.len() {
        return Err(Error::invalid(format!("cannot split {} volunteers into {} folds", bundle.panel.volunteers.len(), opts.folds)));
    }
    let mut origins = opts.origins.clone();
    origins.sort_unstable();
    origins.dedup();
    if origins.last().is_some_and(|&t| t + opts.horizon > truth.steps()) {
        return Err(Error::invalid("forecast window extends past the ground truth"));
    }
    let folds = assign_folds(&bundle.panel.volunteers, opts.folds, &mut stream(opts.fold_seed, tag::PANEL, 1, 0));
    let labels = window_labels(truth, &origins, opts.horizon);
    let jobs: Vec<(Ablation, usize)> = opts.modes.iter().flat_map(|&m| (0..opts.folds).map(move |f| (m, f))).collect();
    let tau = bundle.world.tau;
    let results: Vec<Vec<ScoredLabel>> = jobs
        .par_iter()
        .map(|&(mode, f)| -> Result<Vec<ScoredLabel>> {
            let held = &folds[f];
            let log = redact(obs, &bundle.panel, held, mode, tau);
            let probs = forecast_persons(bundle, &log, &origins, opts.horizon, opts.filter, opts.predict_runs)?;
            let mut scored = Vec::with_capacity(origins.len() * held.len());
            for (o, row) in probs.iter().enumerate() {
                for &p in held {
                    scored.push(ScoredLabel::new(row[p as usize], labels[o][p as usize]));
                }
            }
            info!("cv {} fold {f}: {} scored", mode.name(), scored.len());
            Ok(scored)
        })
        .collect::<Result<_>>()?;
    let mut report = CvReport { folds: Vec::new(), summary: Vec::new(), scores: BTreeMap::new() };
    for &mode in &opts.modes {
        let mut pooled = Vec::new();
        let mut aps = Vec::new();
        for ((m, f), scored) in jobs.iter().zip(&results) {
            if *m != mode {
                continue;
            }
            let positives = scored.iter().filter(|s| s.label).count();
            let ap = match precision_recall(scored) {
                Ok(c) => Some(c.average_precision),
                Err(Error::NoPositives) => {
                    warn!("cv {} fold {f}: no positives", mode.name());
                    None
                }
                Err(e) => return Err(e),
            };
            aps.extend(ap);
            report.folds.push(CvFold { mode, fold: *f, ap, positives, total: scored.len() });
            pooled.extend_from_slice(scored);
        }
        let curve = precision_recall(&pooled)?;
        let mean_ap = if aps.is_empty() { f64::NAN } else { aps.iter().sum::<f64>() / aps.len() as f64 };
        report.summary.push(CvModeSummary { mode, mean_ap, pooled_ap: curve.average_precision, prevalence: curve.prevalence() });
        report.scores.insert(mode.name().to_string(), pooled);
    }
    Ok(report)
}

/// Daily fraction of respondents reporting themselves sick, scaled to the population.
/// Entry `d` is the forecast for day `d + 14`; days without respondents repeat
/// the previous estimate.
pub fn scaling_baseline(reports: &[SymptomReport], days: u64, population: u32) -> Vec<f64> {
    let mut resp = vec![0u32; days as usize];
    let mut sick = vec![0u32; days as usize];
    for r in reports {
        if (r.day as u64) < days {
            resp[r.day as usize] += 1;
            sick[r.day as usize] += u32::from(r.self_sick);
        }
    }
    let mut out = Vec::with_capacity(days as usize);
    let mut last = 0.0;
    for d in 0..days as usize {
        if resp[d] > 0 {
            last = sick[d] as f64 / resp[d] as f64 * population as f64;
        }
        out.push(last);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2Row {
    pub method: String,
    pub volunteers: usize,
    pub replicate: usize,
    pub r2: f64,
}

pub const METHOD_FILTER: &str = "filter";
pub const METHOD_SCALING: &str = "scaling";
/// Non-paper comparator: the true count at the origin carried forward.
pub const METHOD_PERSISTENCE: &str = "persistence";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2Summary {
    pub method: String,
    pub volunteers: usize,
    pub mean: f64,
    pub sd: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationReport {
    pub rows: Vec<R2Row>,
    pub summary: Vec<R2Summary>,
}

impl PopulationReport {
    pub fn mean(&self, method: &str, volunteers: usize) -> Option<f64> {
        self.summary.iter().find(|s| s.method == method && s.volunteers == volunteers).map(|s| s.mean)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["method", "volunteers", "replicate", "r2"])?;
        for r in &self.rows {
            w.write_record([r.method.clone(), r.volunteers.to_string(), r.replicate.to_string(), r.r2.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn r2_or_nan(pred: &[f64], truth: &[f64]) -> Result<f64> {
    match r_squared(pred, truth) {
        Ok(v) => Ok(v),
        Err(Error::ConstantTruth) => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

/// Population forecasts from one filter run at each origin: mean count `horizon` steps ahead.
pub fn forecast_population(bundle: &ModelBundle, obs: &ObservationLog, origins: &[u64], horizon: u64, filter: FilterOptions, runs: Option<usize>) -> Result<Vec<f64>> {
    let last = origins.iter().copied().max().unwrap_or(0);
    let mut out = Vec::with_capacity(origins.len());
    let mut err = None;
    let popts = PredictOptions { horizon, runs, seed: filter.seed };
    run_filter(bundle, obs, last, filter, |v| {
        if err.is_none() && origins.binary_search(&v.t).is_ok() {
            match predict_forward(&bundle.world, v.selected, v.selected_weights, v.t, &popts) {
                Ok(p) => out.push(p.mean_at(horizon)),
                Err(e) => err = Some(e),
            }
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Repeated simulate / observe / filter / forecast with nested volunteer panels.
pub fn bootstrap_population_experiment(cfg: &ExperimentConfig) -> Result<PopulationReport> {
    cfg.validate()?;
    let spd = cfg.steps_per_day();
    let horizon = cfg.horizon_days * spd;
    let origins = cfg.origins();
    let levels: Vec<usize> = cfg.volunteer_levels.iter().map(|&f| cfg.volunteer_count(f)).collect();
    let jobs: Vec<(usize, usize)> = (0..cfg.replicates).flat_map(|r| (0..levels.len()).map(move |l| (r, l))).collect();
    let worlds: Vec<SyntheticWorld> = (0..cfg.replicates).into_par_iter().map(|r| SyntheticWorld::generate(cfg, r as u64)).collect::<Result<_>>()?;
    let rows: Vec<Vec<R2Row>> = jobs
        .par_iter()
        .map(|&(r, l)| -> Result<Vec<R2Row>> {
            let w = &worlds[r];
            let v = levels[l];
            let panel = w.panel(cfg, v)?;
            let obs = w.observe(cfg, &panel)?;
            let bundle = w.bundle(cfg, panel)?;
            let counts = w.truth.infectious_counts();
            let truth: Vec<f64> = origins.iter().map(|&t| counts[(t + horizon) as usize] as f64).collect();
            let filter = FilterOptions {
                particles: cfg.particles,
                seed: derive(w.seed, tag::EXPERIMENT, 1, 0),
                resampling: cfg.resampling,
                ess_threshold: cfg.ess_threshold,
                keep_history: false,
            };
            let pf = forecast_population(&bundle, &obs, &origins, horizon, filter, cfg.predict_runs)?;
            let scale = scaling_baseline(&obs.reports, cfg.days, cfg.persons as u32);
            let sc: Vec<f64> = origins.iter().map(|&t| scale[(t / spd - 1) as usize]).collect();
            let persist: Vec<f64> = origins.iter().map(|&t| counts[t as usize] as f64).collect();
            let row = |method: &str, pred: &[f64]| -> Result<R2Row> {
                Ok(R2Row { method: method.into(), volunteers: v, replicate: r, r2: r2_or_nan(pred, &truth)? })
            };
            let out = vec![row(METHOD_FILTER, &pf)?, row(METHOD_SCALING, &sc)?, row(METHOD_PERSISTENCE, &persist)?];
            info!("replicate {r} volunteers {v}: filter r2 {:.3} scaling r2 {:.3}", out[0].r2, out[1].r2);
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<R2Row> = rows.into_iter().flatten().collect();
    let mut summary = Vec::new();
    for method in [METHOD_FILTER, METHOD_SCALING, METHOD_PERSISTENCE] {
        for &v in &levels {
            let xs: Vec<f64> = rows.iter().filter(|r| r.method == method && r.volunteers == v && r.r2.is_finite()).map(|r| r.r2).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let sd = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { f64::NAN };
            summary.push(R2Summary { method: method.into(), volunteers: v, mean, sd, replicates: xs.len() });
        }
    }
    Ok(PopulationReport { rows, summary })
}

/// Daily co-location network among volunteers at each report step, labelled by
/// the reported `self_sick` flag (missing reports count as not sick).
pub fn symptom_network(truth: &WorldTrajectory, reports: &[SymptomReport], volunteers: &[u32], steps_per_day: u64) -> SymptomNetwork {
    let days = truth.steps() / steps_per_day;
    let index: BTreeMap<u32, u32> = volunteers.iter().enumerate().map(|(i, &p)| (p, i as u32)).collect();
    let mut net = SymptomNetwork {
        persons: volunteers.len(),
        days: (0..days).map(|_| DayContacts { pairs: Vec::new(), symptomatic: vec![false; volunteers.len()] }).collect(),
    };
    for r in reports {
        if let (Some(&i), true) = (index.get(&r.person), (r.day as u64) < days) {
            net.days[r.day as usize].symptomatic[i as usize] = r.self_sick;
        }
    }
    let mut day = 0usize;
    truth.replay(|t, s: &WorldState| {
        if t > 0 && t % steps_per_day == 0 && day < net.days.len() {
            let locs: Vec<u16> = volunteers.iter().map(|&p| s.loc[p as usize]).collect();
            net.days[day].pairs = pairs_from_groups(&location_groups(&locs));
            day += 1;
        }
    });
    net
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_equal_and_disjoint() {
        let v: Vec<u32> = (0..300).collect();
        let f = assign_folds(&v, 10, &mut stream(1, 0, 0, 0));
        assert!(f.iter().all(|x| x.len() == 30));
        let mut all: Vec<u32> = f.concat();
        all.sort_unstable();
        assert_eq!(all, v);
        let uneven = assign_folds(&v[..23], 10, &mut stream(1, 0, 0, 0));
        assert!(uneven.iter().all(|x| x.len() == 2 || x.len() == 3));
    }

    #[test]
    fn scaling_examples() {
        let mut reports = Vec::new();
        for p in 0..100 {
            reports.push(SymptomReport { day: 0, person: p, self_sick: p < 5, nearby_sick: false, symptoms: "00000".into() });
        }
        let s = scaling_baseline(&reports, 3, 3000);
        assert_eq!(s, vec![150.0, 150.0, 150.0]);
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.volunteer_count(0.1), 30);
        assert_eq!(cfg.volunteer_count(0.01), 3);
        assert_eq!(cfg.origins().first(), Some(&(8 * 24)));
    }
}
