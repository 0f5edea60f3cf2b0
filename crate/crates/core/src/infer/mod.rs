//! Bootstrap particle filter, genealogy smoother, conjugate rate learning and
//! forward prediction over the joint world.

mod learn;
mod predict;
mod smooth;

use log::{debug, warn};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::epidemic::EpiEvent;
use crate::mobility::Move;
use crate::observe::{observation_log_likelihood, EmissionNoise, ObsAt, ObsIndex, ObservationLog, VolunteerPanel};
use crate::rng::{stream, tag};
use crate::world::{ClampSchedule, InitialCondition, WorldModel, WorldState};
use crate::{Error, Result};

pub use learn::{
    beta_posterior, epidemic_stats, gibbs_learn, mobility_stats, sample_rate_constants, GibbsOptions, RateChain, RatePrior, RateStats,
};
pub use predict::{predict_forward, PredictOptions, Prediction};
pub use smooth::{smooth_backtrack, smoothed_marginals, History};

/// Everything the filter needs besides the data.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub world: WorldModel,
    pub init: InitialCondition,
    pub noise: EmissionNoise,
    pub panel: VolunteerPanel,
    pub steps_per_day: u64,
}

impl ModelBundle {
    pub fn new(world: WorldModel, init: InitialCondition, noise: EmissionNoise, panel: VolunteerPanel) -> Result<Self> {
        let steps_per_day = world.steps_per_day()?;
        noise.validate()?;
        if init.locations.len() != world.persons || panel.population as usize != world.persons {
            return Err(Error::invalid("initial locations and panel must cover the population"));
        }
        Ok(ModelBundle { world, init, noise, panel, steps_per_day })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Resampling {
    #[default]
    Multinomial,
    Systematic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterOptions {
    pub particles: usize,
    pub seed: u64,
    pub resampling: Resampling,
    /// Resample only when ESS falls below this fraction of N. `None` resamples at
    /// every observed step.
    pub ess_threshold: Option<f64>,
    pub keep_history: bool,
}

impl FilterOptions {
    pub fn new(particles: usize, seed: u64) -> Self {
        FilterOptions { particles, seed, resampling: Resampling::Multinomial, ess_threshold: None, keep_history: false }
    }
}

/// Normalize log-weights in place with the log-sum-exp shift; returns the log of
/// the unnormalized total, or `None` when every weight is zero.
pub fn normalize_log_weights(lw: &[f64], out: &mut Vec<f64>) -> Option<f64> {
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.clear();
    if m == f64::NEG_INFINITY {
        let n = lw.len() as f64;
        out.extend(lw.iter().map(|_| 1.0 / n));
        return None;
    }
    out.extend(lw.iter().map(|&l| (l - m).exp()));
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|w| *w /= s);
    Some(m + s.ln())
}

pub fn effective_sample_size(w: &[f64]) -> f64 {
    1.0 / w.iter().map(|x| x * x).sum::<f64>()
}

/// Draw N ancestor indices proportional to `w`.
pub fn resample<R: Rng + ?Sized>(w: &[f64], scheme: Resampling, rng: &mut R, out: &mut Vec<u32>) {
    let n = w.len();
    out.clear();
    let mut cum = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &x in w {
        acc += x;
        cum.push(acc);
    }
    let total = acc;
    let find = |u: f64| (cum.partition_point(|&c| c <= u)).min(n - 1) as u32;
    match scheme {
        Resampling::Multinomial => {
            for _ in 0..n {
                out.push(find(rng.random::<f64>() * total));
            }
        }
        Resampling::Systematic => {
            let u0: f64 = rng.random();
            for i in 0..n {
                out.push(find((i as f64 + u0) / n as f64 * total));
            }
        }
    }
}

/// What an observer sees after each step.
pub struct StepView<'a> {
    pub t: u64,
    /// Particles after mutation, before selection.
    pub mutated: &'a [WorldState],
    /// Normalized weights of `mutated`.
    pub weights: &'a [f64],
    /// Particles after selection.
    pub selected: &'a [WorldState],
    /// Normalized weights of `selected` (uniform after a resampling step).
    pub selected_weights: &'a [f64],
    pub ancestors: &'a [u32],
    pub ess: f64,
    pub observed: bool,
}

impl StepView<'_> {
    /// P(person infectious | data so far) from the pre-selection weights.
    pub fn infection_marginals(&self) -> Vec<f64> {
        let persons = self.mutated.first().map(|s| s.persons()).unwrap_or(0);
        let mut m = vec![0.0; persons];
        for (s, &w) in self.mutated.iter().zip(self.weights) {
            for (p, h) in s.health.iter().enumerate() {
                if h.is_infectious() {
                    m[p] += w;
                }
            }
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct FilterSummary {
    pub steps: u64,
    pub log_likelihood: f64,
    pub ess: Vec<f64>,
    pub degenerate_steps: Vec<u64>,
    pub resampled_steps: u64,
}

/// Particle filter state, stepped one grid interval at a time.
pub struct ParticleFilter<'a> {
    bundle: &'a ModelBundle,
    clamp: ClampSchedule,
    opts: FilterOptions,
    particles: Vec<WorldState>,
    scratch: Vec<WorldState>,
    log_w: Vec<f64>,
    events: Vec<Option<EpiEvent>>,
    moves: Vec<Vec<Move>>,
    history: Option<History>,
    t: u64,
    pub summary: FilterSummary,
}

impl<'a> ParticleFilter<'a> {
    pub fn new(bundle: &'a ModelBundle, obs: &ObservationLog, opts: FilterOptions) -> Result<Self> {
        if opts.particles == 0 {
            return Err(Error::invalid("particle count must be positive"));
        }
        let clamp = ClampSchedule::from_visits(bundle.world.persons, &obs.volunteer_visits, bundle.world.tau)?;
        let mut init = bundle.init.clone();
        clamp.apply_initial(&mut init.locations);
        let particles: Vec<WorldState> = (0..opts.particles)
            .into_par_iter()
            .map(|k| init.sample(&bundle.world, &mut stream(opts.seed, tag::INIT, 0, k as u64)))
            .collect::<Result<_>>()?;
        let n = opts.particles;
        let history = opts.keep_history.then(|| History::new(particles.clone()));
        Ok(ParticleFilter {
            bundle,
            clamp,
            opts,
            scratch: particles.clone(),
            particles,
            log_w: vec![-(n as f64).ln(); n],
            events: vec![None; n],
            moves: vec![Vec::new(); n],
            history,
            t: 0,
            summary: FilterSummary { steps: 0, log_likelihood: 0.0, ess: Vec::new(), degenerate_steps: Vec::new(), resampled_steps: 0 },
        })
    }

    pub fn particles(&self) -> &[WorldState] {
        &self.particles
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_w.iter().map(|l| l.exp()).collect()
    }

    pub fn step_index(&self) -> u64 {
        self.t
    }

    /// Mutate every particle by one step, weight by `obs`, and select.
    pub fn step<F: FnMut(&StepView<'_>)>(&mut self, obs: &ObsAt<'_>, mut observer: F) -> Result<()> {
        let t = self.t + 1;
        let world = &self.bundle.world;
        let seed = self.opts.seed;
        let clamp = &self.clamp;
        self.particles
            .par_iter_mut()
            .zip(self.events.par_iter_mut())
            .zip(self.moves.par_iter_mut())
            .enumerate()
            .try_for_each(|(k, ((p, ev), mv))| -> Result<()> {
                mv.clear();
                let mut rng = stream(seed, tag::EPIDEMIC, t, k as u64);
                *ev = world.step(p, t, Some(clamp), &mut rng, mv)?;
                Ok(())
            })?;

        let n = self.particles.len();
        let mut weights = Vec::with_capacity(n);
        let mut ancestors: Vec<u32> = (0..n as u32).collect();
        let observed = !obs.is_empty();
        let ess;
        if observed {
            let bundle = self.bundle;
            let obs_ll: Vec<f64> = self
                .particles
                .par_iter()
                .map(|s| observation_log_likelihood(&bundle.world, s, obs, &bundle.noise, &bundle.panel))
                .collect();
            let lw: Vec<f64> = self.log_w.iter().zip(&obs_ll).map(|(a, b)| a + b).collect();
            match normalize_log_weights(&lw, &mut weights) {
                Some(inc) => self.summary.log_likelihood += inc,
                None => {
                    warn!("step {t}: every particle has zero likelihood; resampling uniformly");
                    self.summary.log_likelihood = f64::NEG_INFINITY;
                    self.summary.degenerate_steps.push(t);
                }
            }
            ess = effective_sample_size(&weights);
            let resample_now = match self.opts.ess_threshold {
                None => true,
                Some(f) => ess < f * n as f64,
            };
            if resample_now {
                let mut rng = stream(seed, tag::RESAMPLE, t, 0);
                resample(&weights, self.opts.resampling, &mut rng, &mut ancestors);
                self.log_w.iter_mut().for_each(|l| *l = -(n as f64).ln());
                self.summary.resampled_steps += 1;
            } else {
                for (l, w) in self.log_w.iter_mut().zip(&weights) {
                    *l = w.ln();
                }
            }
        } else {
            weights.extend(self.log_w.iter().map(|l| l.exp()));
            ess = effective_sample_size(&weights);
        }
        debug!("step {t}: ess {ess:.1}");
        self.summary.ess.push(ess);

        for (dst, &a) in self.scratch.iter_mut().zip(&ancestors) {
            dst.clone_from(&self.particles[a as usize]);
        }
        std::mem::swap(&mut self.particles, &mut self.scratch);
        if let Some(h) = &mut self.history {
            h.push(&ancestors, &self.events, &self.moves);
        }
        let sel_w: Vec<f64> = self.log_w.iter().map(|l| l.exp()).collect();
        observer(&StepView {
            t,
            mutated: &self.scratch,
            weights: &weights,
            selected: &self.particles,
            selected_weights: &sel_w,
            ancestors: &ancestors,
            ess,
            observed,
        });
        self.t = t;
        self.summary.steps = t;
        Ok(())
    }

    pub fn into_parts(self) -> (FilterSummary, Option<History>, Vec<WorldState>) {
        (self.summary, self.history, self.particles)
    }
}

/// Run the filter for `steps` steps over `obs`.
pub fn run_filter<F: FnMut(&StepView<'_>)>(
    bundle: &ModelBundle,
    obs: &ObservationLog,
    steps: u64,
    opts: FilterOptions,
    mut observer: F,
) -> Result<(FilterSummary, Option<History>, Vec<WorldState>)> {
    let index = ObsIndex::new(obs, bundle.steps_per_day)?;
    let mut pf = ParticleFilter::new(bundle, obs, opts)?;
    for t in 1..=steps {
        pf.step(&index.at(t), &mut observer)?;
    }
    Ok(pf.into_parts())
}

/// One filter step as a pure function of the ensemble.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub t: u64,
    pub particles: Vec<WorldState>,
    pub ancestors: Vec<u32>,
    pub events: Vec<Option<EpiEvent>>,
}

#[allow(clippy::too_many_arguments)]
pub fn filter_step(
    ensemble: &Ensemble,
    bundle: &ModelBundle,
    clamp: &ClampSchedule,
    obs: &ObsAt<'_>,
    resampling: Resampling,
    seed: u64,
) -> Result<Ensemble> {
    let t = ensemble.t + 1;
    let mut particles = ensemble.particles.clone();
    let mut events = Vec::with_capacity(particles.len());
    let mut moves = Vec::new();
    for (k, p) in particles.iter_mut().enumerate() {
        moves.clear();
        let mut rng = stream(seed, tag::EPIDEMIC, t, k as u64);
        events.push(bundle.world.step(p, t, Some(clamp), &mut rng, &mut moves)?);
    }
    let n = particles.len();
    let mut ancestors: Vec<u32> = (0..n as u32).collect();
    if !obs.is_empty() {
        let lw: Vec<f64> =
            particles.iter().map(|s| observation_log_likelihood(&bundle.world, s, obs, &bundle.noise, &bundle.panel)).collect();
        let mut w = Vec::new();
        if normalize_log_weights(&lw, &mut w).is_none() {
            warn!("step {t}: every particle has zero likelihood; resampling uniformly");
        }
        resample(&w, resampling, &mut stream(seed, tag::RESAMPLE, t, 0), &mut ancestors);
    }
    let selected = ancestors.iter().map(|&a| particles[a as usize].clone()).collect();
    Ok(Ensemble { t, particles: selected, ancestors, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn log_weights_normalize() {
        let mut w = Vec::new();
        let z = normalize_log_weights(&[-1000.0, -1001.0, f64::NEG_INFINITY], &mut w).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(w[2], 0.0);
        let expect = -1000.0 + (1.0 + (-1.0f64).exp()).ln();
        assert!((z - expect).abs() < 1e-9);
        assert!(normalize_log_weights(&[f64::NEG_INFINITY; 4], &mut w).is_none());
        assert_eq!(w, vec![0.25; 4]);
    }

    #[test]
    fn point_mass_resampling() {
        let mut rng = stream(1, 0, 0, 0);
        let mut a = Vec::new();
        for scheme in [Resampling::Multinomial, Resampling::Systematic] {
            resample(&[0.0, 0.0, 1.0, 0.0], scheme, &mut rng, &mut a);
            assert_eq!(a, vec![2, 2, 2, 2]);
        }
    }

    #[test]
    fn systematic_is_balanced() {
        let mut rng = stream(2, 0, 0, 0);
        let mut a = Vec::new();
        resample(&[0.5, 0.25, 0.25, 0.0], Resampling::Systematic, &mut rng, &mut a);
        assert_eq!(a.iter().filter(|&&x| x == 0).count(), 2);
        assert_eq!(a.iter().filter(|&&x| x == 3).count(), 0);
    }

    #[test]
    fn ess_bounds() {
        assert!((effective_sample_size(&[0.25; 4]) - 4.0).abs() < 1e-12);
        assert!((effective_sample_size(&[1.0, 0.0]) - 1.0).abs() < 1e-12);
    }
}
