use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context};
use log::info;
use rand::Rng;
use serde_json::json;

use proxisim_core::eval::{
    bootstrap_population_experiment, cross_validate, episode_durations, exponential_fit, permutation_test, precision_recall, symptom_network,
    symptom_transition_matrix, CvOptions, SyntheticWorld,
};
use proxisim_core::infer::{gibbs_learn, predict_forward, run_filter, smoothed_marginals, FilterOptions, GibbsOptions, ModelBundle, PredictOptions};
use proxisim_core::mobility::{estimate_rates, write_rates, write_visits};
use proxisim_core::observe::{sample_discoverable, synthesize_observations, volunteer_order, ObservationLog, SynthOptions, VolunteerPanel};
use proxisim_core::rng::{derive, stream, tag};
use proxisim_core::world::{simulate_world, InitialCondition, WorldModel, WorldState, WorldTrajectory};

use crate::config::{Config, MobilitySource};
use crate::data::{read_initial, read_json, read_observations, read_truth, write_health, write_observations, write_population, write_snapshots, WorldInfo};
use crate::exit::Failure;
use crate::io::{csv_writer, OutputDir};

pub type CmdResult = Result<u64, Failure>;

fn world_model(cfg: &Config) -> Result<WorldModel, Failure> {
    let epi = cfg.epi().map_err(Failure::config)?;
    Ok(WorldModel::new(cfg.world.persons, epi, cfg.mobility.spec().build()?, cfg.world.tau)?)
}

fn require<'a>(p: &'a Option<std::path::PathBuf>, key: &str) -> Result<&'a Path, Failure> {
    p.as_deref().ok_or_else(|| Failure::config(anyhow!("this command needs `{key}` (a directory)")))
}

pub fn simulate(cfg: &Config, out: &mut OutputDir) -> CmdResult {
    let model = world_model(cfg)?;
    let seed = cfg.seed();
    let mut rng = stream(seed, tag::INIT, 0, 0);
    let l = model.locations();
    let locations: Vec<u16> = (0..model.persons).map(|_| rng.random_range(0..l) as u16).collect();
    let init = InitialCondition { prevalence: cfg.world.initial_prevalence, locations };
    let x0 = init.sample(&model, &mut rng)?;
    let steps = cfg.steps();
    let truth = simulate_world(&model, x0, steps, seed)?;
    info!("simulated {steps} steps, {} events", truth.events.iter().flatten().count());
    let info = WorldInfo { persons: model.persons, locations: l, tau: model.tau, steps };
    out.write_json("world.json", &info)?;
    out.write("population.csv", |b| write_population(&truth.initial, b))?;
    out.write("health.csv", |b| write_health(&truth, b))?;
    out.write("visits.csv", |b| Ok(write_visits(&truth.visits(model.tau), b)?))?;
    out.write("snapshots.jsonl", |b| write_snapshots(&truth, cfg.world.snapshot_every, b))?;
    out.write("mobility_rates.csv", |b| Ok(write_rates(&model.mobility, b)?))?;
    Ok(steps)
}

fn load_truth(cfg: &Config) -> Result<(WorldInfo, WorldTrajectory), Failure> {
    let dir = require(&cfg.data.truth, "data.truth")?;
    let (info, truth) = read_truth(dir).map_err(Failure::data)?;
    if info.persons != cfg.world.persons || (info.tau - cfg.world.tau).abs() > 1e-12 {
        return Err(Failure::config(anyhow!(
            "{}: world has {} persons at tau {}, config says {} at {}",
            dir.display(),
            info.persons,
            info.tau,
            cfg.world.persons,
            cfg.world.tau
        )));
    }
    Ok((info, truth))
}

pub fn synth_obs(cfg: &Config, out: &mut OutputDir) -> CmdResult {
    let (info, truth) = load_truth(cfg)?;
    let model = world_model(cfg)?;
    let seed = cfg.seed();
    let pop = info.persons as u32;
    let mut rng = stream(seed, tag::PANEL, 0, 0);
    let order = volunteer_order(pop, &mut rng);
    let discoverable = sample_discoverable(pop, cfg.observe.discoverable_fraction, &mut rng);
    let count = ((cfg.observe.volunteer_fraction * pop as f64).round() as usize).clamp(1, pop as usize);
    let panel = VolunteerPanel::new(pop, order[..count].to_vec(), discoverable, cfg.observe.compliance)?;
    let opts = SynthOptions { scan_every: cfg.observe.scan_every, steps_per_day: cfg.steps_per_day() };
    let log = synthesize_observations(&model, &truth, &panel, &cfg.observe.noise(), &opts, derive(seed, tag::OBSERVE, 0, 0))?;
    info!("{} scans, {} reports", log.scans.len(), log.reports.len());
    write_observations(out, &log, &panel)?;
    Ok(info.steps)
}

/// Model, data and step count shared by the inference commands.
struct Inputs {
    bundle: ModelBundle,
    log: ObservationLog,
    steps: u64,
}

fn load_inputs(cfg: &Config) -> Result<Inputs, Failure> {
    let dir = require(&cfg.data.observations, "data.observations")?;
    let (log, panel) = read_observations(dir).map_err(Failure::data)?;
    if panel.population as usize != cfg.world.persons {
        return Err(Failure::config(anyhow!("{}: panel covers {} persons, config says {}", dir.display(), panel.population, cfg.world.persons)));
    }
    let mut model = world_model(cfg)?;
    if cfg.filter.mobility == MobilitySource::Estimated {
        let est = estimate_rates(&log.volunteer_visits, model.locations(), model.mobility.scheme).map_err(Failure::data)?;
        model = model.with_mobility(est.params)?;
    }
    let locations = match &cfg.data.truth {
        Some(t) => {
            let info: WorldInfo = read_json(&t.join("world.json")).map_err(Failure::data)?;
            read_initial(t, &info).map_err(Failure::data)?.loc
        }
        None => {
            let mut rng = stream(cfg.seed(), tag::INIT, 1, 0);
            (0..model.persons).map(|_| rng.random_range(0..model.locations()) as u16).collect()
        }
    };
    let init = InitialCondition { prevalence: cfg.world.initial_prevalence, locations };
    let bundle = ModelBundle::new(model, init, cfg.observe.noise(), panel)?;
    let steps = cfg.steps();
    let last = log.last_step(bundle.steps_per_day);
    if last > steps {
        return Err(Failure::data(anyhow!("observations run to step {last}, past the {steps}-step horizon")));
    }
    Ok(Inputs { bundle, log, steps })
}

fn filter_options(cfg: &Config, keep_history: bool) -> FilterOptions {
    FilterOptions {
        particles: cfg.filter.particles,
        seed: cfg.seed(),
        resampling: cfg.filter.resampling,
        ess_threshold: cfg.filter.ess_threshold,
        keep_history,
    }
}

/// Marginal rows are written at every day end and at the final step.
fn report_step(t: u64, spd: u64, last: u64) -> bool {
    t % spd == 0 || t == last
}

fn marginal_rows<W: Write>(rows: &[(u64, Vec<f64>)], out: W) -> anyhow::Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["t", "person", "p_infectious"])?;
    for (t, m) in rows {
        for (p, v) in m.iter().enumerate() {
            w.write_record([t.to_string(), p.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn filter(cfg: &Config, out: &mut OutputDir) -> CmdResult {
    let inp = load_inputs(cfg)?;
    let spd = inp.bundle.steps_per_day;
    let mut marginals = Vec::new();
    let mut ess = Vec::new();
    let (summary, _, particles) = run_filter(&inp.bundle, &inp.log, inp.steps, filter_options(cfg, false), |v| {
        ess.push((v.t, v.ess, v.observed));
        if report_step(v.t, spd, inp.steps) {
            marginals.push((v.t, v.infection_marginals()));
        }
    })?;
    out.write("marginals.csv", |b| marginal_rows(&marginals, b))?;
    out.write("ess.csv", |b| {
        let mut w = csv_writer(b);
        w.write_record(["t", "ess", "observed"])?;
        for (t, e, o) in &ess {
            w.write_record([t.to_string(), e.to_string(), u8::from(*o).to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let mean_final = particles.iter().map(|s| s.n_infectious() as f64).sum::<f64>() / particles.len() as f64;
    out.write_json(
        "filter_summary.json",
        &json!({
            "steps": summary.steps,
            "particles": cfg.filter.particles,
            "log_likelihood": finite_or_null(summary.log_likelihood),
            "resampled_steps": summary.resampled_steps,
            "degenerate_steps": summary.degenerate_steps,
            "final_mean_infectious": mean_final,
        }),
    )?;
    Ok(inp.steps)
}

fn finite_or_null(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        serde_json::Value::Null
    }
}

pub fn smooth(cfg: &Config, out: &mut OutputDir) -> CmdResult {
    let inp = load_inputs(cfg)?;
    let spd = inp.bundle.steps_per_day;
    let mut final_weights = Vec::new();
    let (_, history, _) = run_filter(&inp.bundle, &inp.log, inp.steps, filter_options(cfg, true), |v| {
        if v.t == inp.steps {
            final_weights = v.selected_weights.to_vec();
        }
    })?;
    let history = history.expect("history requested");
    if final_weights.is_empty() {
        let n = history.particles();
        final_weights = vec![1.0 / n as f64; n];
    }
    let sm = smoothed_marginals(&history, &final_weights);
    let rows: Vec<(u64, Vec<f64>)> =
        sm.into_iter().enumerate().map(|(t, m)| (t as u64, m)).filter(|(t, _)| report_step(*t, spd, inp.steps)).collect();
    out.write("smoothed.csv", |b| marginal_rows(&rows, b))?;
    Ok(inp.steps)
}

pub fn learn(cfg: &Config, out: &mut OutputDir) -> CmdResult {
    let inp = load_inputs(cfg)?;
    let start = match cfg.learn.start {
        Some(s) => s,
        None => cfg.epi().map_err(Failure::config)?,
    };
    let opts = GibbsOptions {
        sweeps: cfg.learn.sweeps,
        filter: filter_options(cfg, true),
        start,
        learn_mobility: cfg.learn.learn_mobility,
        mobility_prior: cfg.learn.mobility_prior,
    };
    let chain = gibbs_learn(&inp.bundle, &inp.log, inp.steps, &cfg.learn.priors, &opts)?;
    out.write("rates.csv", |b| {
        let mut w = csv_writer(b);
        w.write_record(["sweep", "rate_name", "value"])?;
        for (s, e) in chain.epi.iter().enumerate() {
            for (name, v) in ["c1", "c2", "c3"].iter().zip(e.as_array()) {
                w.write_record([s.to_string(), name.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    let med = chain.medians(cfg.learn.burn_in);
    let loglik: Vec<serde_json::Value> = chain.log_likelihood.iter().map(|&l| finite_or_null(l)).collect();
    out.write_json(
        "learn_summary.json",
        &json!({
            "sweeps": cfg.learn.sweeps,
            "burn_in": cfg.learn.burn_in,
            "median": { "c1": med[0], "c2": med[1], "c3": med[2] },
            "log_likelihood": loglik,
        }),
    )?;
    if let Some(m) = &chain.mobility {
        out.write("learned_mobility_rates.csv", |b| Ok(write_rates(m, b)?))?;
    }
    Ok(inp.steps * cfg.learn.sweeps as u64)
}

pub fn predict(cfg: &Config, out: &mut OutputDir) -> CmdResult {
    let inp = load_inputs(cfg)?;
    let spd = inp.bundle.steps_per_day;
    let day = match cfg.predict.origin_day {
        Some(d) => d,
        None => cfg.world.days.checked_sub(1).ok_or_else(|| Failure::config(anyhow!("nothing to forecast from a zero-day world")))?,
    };
    let origin = (day + 1) * spd;
    if origin > inp.steps {
        return Err(Failure::config(anyhow!("predict.origin_day {day} lies past world.days")));
    }
    let mut ens: Option<(Vec<WorldState>, Vec<f64>)> = None;
    run_filter(&inp.bundle, &inp.log, origin, filter_options(cfg, false), |v| {
        if v.t == origin {
            ens = Some((v.selected.to_vec(), v.selected_weights.to_vec()));
        }
    })?;
    let (particles, weights) = ens.expect("filter reached the origin");
    let opts = PredictOptions { horizon: cfg.predict.horizon_days * spd, runs: cfg.predict.runs, seed: cfg.seed() };
    let pred = predict_forward(&inp.bundle.world, &particles, &weights, origin, &opts)?;
    out.write("predict_persons.csv", |b| {
        let mut w = csv_writer(b);
        w.write_record(["t", "person", "p_infected_window"])?;
        for (p, v) in pred.per_person.iter().enumerate() {
            w.write_record([origin.to_string(), p.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.write("predict_population.csv", |b| {
        let mut w = csv_writer(b);
        w.write_record(["t", "mean_infectious", "q05", "q95"])?;
        for i in 0..pred.mean_infectious.len() {
            let t = origin + i as u64 + 1;
            w.write_record([t.to_string(), pred.mean_infectious[i].to_string(), pred.q05[i].to_string(), pred.q95[i].to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok(origin + opts.horizon)
}

pub fn evaluate(cfg: &Config, out: &mut OutputDir) -> CmdResult {
    let exp = cfg.experiment().map_err(Failure::config)?;
    exp.validate()?;
    let spd = exp.steps_per_day();
    let steps = exp.days * spd;
    let mut summary = serde_json::Map::new();
    let needs_world = cfg.evaluate.cross_validate || cfg.evaluate.tests;
    let world = if needs_world { Some(SyntheticWorld::generate(&exp, 0)?) } else { None };
    let panel = match &world {
        Some(w) => Some(w.panel(&exp, exp.volunteer_count(exp.volunteer_fraction))?),
        None => None,
    };
    let obs = match (&world, &panel) {
        (Some(w), Some(p)) => Some(w.observe(&exp, p)?),
        _ => None,
    };

    if cfg.evaluate.cross_validate {
        let (w, p, o) = (world.as_ref().expect("world"), panel.clone().expect("panel"), obs.as_ref().expect("obs"));
        let bundle = w.bundle(&exp, p)?;
        let opts = CvOptions {
            folds: exp.folds,
            modes: cfg.evaluate.modes.clone(),
            origins: exp.origins(),
            horizon: exp.horizon_days * spd,
            filter: FilterOptions {
                particles: exp.particles,
                seed: derive(w.seed, tag::EXPERIMENT, 1, 0),
                resampling: exp.resampling,
                ess_threshold: exp.ess_threshold,
                keep_history: false,
            },
            predict_runs: exp.predict_runs,
            fold_seed: w.seed,
        };
        let report = cross_validate(&bundle, &w.truth, o, &opts)?;
        out.write("cv_ap.csv", |b| {
            let mut wr = csv_writer(b);
            wr.write_record(["mode", "fold", "ap", "positives", "total"])?;
            for f in &report.folds {
                let ap = f.ap.map(|a| a.to_string()).unwrap_or_default();
                wr.write_record([f.mode.name().to_string(), f.fold.to_string(), ap, f.positives.to_string(), f.total.to_string()])?;
            }
            wr.flush()?;
            Ok(())
        })?;
        for (mode, scores) in &report.scores {
            let curve = precision_recall(scores)?;
            out.write(&format!("pr_{mode}.csv"), |b| Ok(curve.write_csv(b)?))?;
        }
        summary.insert("cross_validation".into(), serde_json::to_value(&report.summary).context("serializing")?);
    }

    if cfg.evaluate.population {
        let report = bootstrap_population_experiment(&exp)?;
        out.write("r2.csv", |b| Ok(report.write_csv(b)?))?;
        let rows: Vec<serde_json::Value> = report
            .summary
            .iter()
            .map(|s| json!({ "method": s.method, "volunteers": s.volunteers, "mean": finite_or_null(s.mean), "sd": finite_or_null(s.sd), "replicates": s.replicates }))
            .collect();
        summary.insert("population".into(), rows.into());
    }

    if cfg.evaluate.tests {
        let (w, p, o) = (world.as_ref().expect("world"), panel.as_ref().expect("panel"), obs.as_ref().expect("obs"));
        let mut lines = Vec::new();
        let net = symptom_network(&w.truth, &o.reports, &p.volunteers, spd);
        let perm = permutation_test(&net, cfg.evaluate.permutations, derive(w.seed, tag::PERMUTE, 0, 0))?;
        lines.push(json!({
            "test": "permutation",
            "statistic": perm.statistic,
            "p_value": perm.p_value,
            "permutations": perm.permutations,
            "odds_ratio": finite_or_null(net.odds_ratio()),
        }));
        let durations = episode_durations(&o.reports);
        lines.push(match exponential_fit(&durations) {
            Ok(f) => json!({ "test": "exponential_fit", "episodes": durations.len(), "mean_days": f.mean, "ks_statistic": f.ks_statistic, "p_value": f.p_value }),
            Err(e) => json!({ "test": "exponential_fit", "episodes": durations.len(), "error": e.to_string() }),
        });
        match symptom_transition_matrix(&o.reports, cfg.evaluate.pseudocount, derive(w.seed, tag::EXPERIMENT, 2, 0)) {
            Ok(m) => {
                out.write("symptom_matrix.csv", |b| {
                    let mut wr = csv_writer(b);
                    wr.write_record(["from", "to", "probability"])?;
                    for (i, row) in m.probs.iter().enumerate() {
                        for (j, v) in row.iter().enumerate() {
                            wr.write_record([m.states[i].as_str(), m.states[j].as_str(), &v.to_string()])?;
                        }
                    }
                    wr.flush()?;
                    Ok(())
                })?;
                let ordering: Vec<serde_json::Value> = m.ordering.iter().map(|(s, k)| json!({ "state": s, "mean_first_step": k })).collect();
                lines.push(json!({ "test": "symptom_ordering", "ordering": ordering }));
            }
            Err(e) => lines.push(json!({ "test": "symptom_ordering", "error": e.to_string() })),
        }
        out.write("tests.jsonl", |b| {
            for l in &lines {
                writeln!(b, "{l}")?;
            }
            Ok(())
        })?;
    }
    out.write_json("evaluate_summary.json", &summary)?;
    Ok(steps)
}
