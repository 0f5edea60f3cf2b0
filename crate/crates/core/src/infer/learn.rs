use log::info;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::{run_filter, FilterOptions, ModelBundle};
use crate::epidemic::EpidemicParams;
use crate::mobility::MobilityParams;
use crate::observe::ObservationLog;
use crate::rng::{derive, stream, tag};
use crate::world::{WorldModel, WorldTrajectory};
use crate::{Error, Result};

/// Beta prior over `c·τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePrior {
    pub a: f64,
    pub b: f64,
}

impl RatePrior {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::invalid(format!("beta prior needs a > 0 and b > 0, got ({a}, {b})")));
        }
        Ok(RatePrior { a, b })
    }
}

/// Event count and summed `g(x_t)` for one rate constant along a path.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RateStats {
    pub events: f64,
    pub exposure: f64,
}

/// Posterior `Beta(a + k, b + Σg − k)`.
pub fn beta_posterior(prior: &RatePrior, stats: &RateStats) -> (f64, f64) {
    (prior.a + stats.events, prior.b + (stats.exposure - stats.events).max(0.0))
}

/// Draw `c·τ` from each posterior and return `c`.
pub fn sample_rate_constants<R: Rng + ?Sized>(stats: &[RateStats], priors: &[RatePrior], tau: f64, rng: &mut R) -> Result<Vec<f64>> {
    if stats.len() != priors.len() {
        return Err(Error::invalid("one prior per rate constant is required"));
    }
    stats
        .iter()
        .zip(priors)
        .map(|(s, p)| {
            let (a, b) = beta_posterior(p, s);
            let d = Beta::new(a, b).map_err(|e| Error::invalid(format!("beta({a}, {b}): {e}")))?;
            Ok(d.sample(rng) / tau)
        })
        .collect()
}

/// Sufficient statistics for `(c1, c2, c3)`: events over steps `1..=T`,
/// exposures summed over `t = 0..=T`.
pub fn epidemic_stats(model: &WorldModel, traj: &WorldTrajectory) -> [RateStats; 3] {
    let mut st = [RateStats::default(); 3];
    traj.replay(|_, s| {
        st[0].exposure += model.contact_pairs(s) as f64;
        st[1].exposure += s.n_infectious() as f64;
        st[2].exposure += (s.persons() as u32 - s.n_infectious()) as f64;
    });
    for e in traj.events.iter().flatten() {
        st[e.kind.rate_index()].events += 1.0;
    }
    st
}

/// Per-bucket, per-cell movement statistics, flattened like the rate matrices.
pub fn mobility_stats(model: &WorldModel, traj: &WorldTrajectory) -> Vec<Vec<RateStats>> {
    let n = model.locations();
    let scheme = model.mobility.scheme;
    let mut st = vec![vec![RateStats::default(); n * n]; scheme.count()];
    let tau = model.tau;
    traj.replay(|t, s| {
        let b = scheme.bucket_of(t as f64 * tau);
        for i in 0..n {
            let x = s.population_at(i) as f64;
            if x > 0.0 {
                for j in 0..n {
                    if j != i {
                        st[b][i * n + j].exposure += x;
                    }
                }
            }
        }
    });
    for t in 1..=traj.steps() {
        let b = model.kernel().bucket_for_step(t);
        for m in traj.moves_at(t) {
            st[b][m.from as usize * n + m.to as usize].events += 1.0;
        }
    }
    st
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GibbsOptions {
    pub sweeps: usize,
    pub filter: FilterOptions,
    /// Rates used by the first sweep's filter.
    pub start: EpidemicParams,
    pub learn_mobility: bool,
    pub mobility_prior: RatePrior,
}

#[derive(Debug, Clone)]
pub struct RateChain {
    pub epi: Vec<EpidemicParams>,
    pub log_likelihood: Vec<f64>,
    /// Last mobility draw when mobility is learned.
    pub mobility: Option<MobilityParams>,
}

impl RateChain {
    /// Median of each rate over sweeps `burn_in..`.
    pub fn medians(&self, burn_in: usize) -> [f64; 3] {
        let tail = &self.epi[burn_in.min(self.epi.len())..];
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            let mut v: Vec<f64> = tail.iter().map(|p| p.as_array()[i]).collect();
            v.sort_by(f64::total_cmp);
            *o = if v.is_empty() {
                f64::NAN
            } else if v.len() % 2 == 1 {
                v[v.len() / 2]
            } else {
                0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
            };
        }
        out
    }
}

/// Alternate filtering, smoothing and conjugate rate draws.
///
/// Each sweep filters with the current rates, backtracks one uniformly chosen
/// lineage and draws new rates from its Beta posteriors.
pub fn gibbs_learn(
    bundle: &ModelBundle,
    obs: &ObservationLog,
    steps: u64,
    priors: &[RatePrior; 3],
    opts: &GibbsOptions,
) -> Result<RateChain> {
    if opts.sweeps == 0 {
        return Err(Error::invalid("at least one sweep is required"));
    }
    let mut current = bundle.clone();
    current.world = current.world.with_epi(opts.start);
    let mut chain = RateChain { epi: Vec::with_capacity(opts.sweeps), log_likelihood: Vec::new(), mobility: None };
    let seed = opts.filter.seed;
    for sweep in 0..opts.sweeps {
        let fo = FilterOptions { seed: derive(seed, tag::GIBBS, sweep as u64, 0), keep_history: true, ..opts.filter };
        let (summary, history, _) = run_filter(&current, obs, steps, fo, |_| {})?;
        let history = history.expect("history requested");
        let mut rng = stream(seed, tag::GIBBS, sweep as u64, 1);
        let k = rng.random_range(0..history.particles());
        let traj = history.trajectory(k);
        let st = epidemic_stats(&current.world, &traj);
        let c = sample_rate_constants(&st, priors, current.world.tau, &mut rng)?;
        let epi = EpidemicParams::new(c[0], c[1], c[2])?;
        if opts.learn_mobility {
            let ms = mobility_stats(&current.world, &traj);
            let mut mob = current.world.mobility.clone();
            let n = mob.num_locations();
            for (b, cells) in ms.iter().enumerate() {
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            let pr = [opts.mobility_prior];
                            mob.rates[b][i * n + j] = sample_rate_constants(&[cells[i * n + j]], &pr, current.world.tau, &mut rng)?[0];
                        }
                    }
                }
            }
            current.world = current.world.with_mobility(mob.clone())?;
            chain.mobility = Some(mob);
        }
        info!(
            "sweep {sweep}: c1={:.3e} c2={:.3e} c3={:.3e} loglik={:.2} events={:?}",
            epi.c1,
            epi.c2,
            epi.c3,
            summary.log_likelihood,
            st.map(|s| s.events)
        );
        current.world = current.world.with_epi(epi);
        chain.epi.push(epi);
        chain.log_likelihood.push(summary.log_likelihood);
    }
    Ok(chain)
}
