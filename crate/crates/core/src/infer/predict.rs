use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{resample, Resampling};
use crate::rng::{derive, stream, tag};
use crate::world::{WorldModel, WorldState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictOptions {
    /// Window length in steps.
    pub horizon: u64,
    /// Number of forward runs; `None` runs every particle once.
    pub runs: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub origin: u64,
    /// Fraction of runs in which each person is infectious at some step of `(t, t + H]`.
    pub per_person: Vec<f64>,
    /// Mean infectious count at steps `t+1 ..= t+H`.
    pub mean_infectious: Vec<f64>,
    pub q05: Vec<f64>,
    pub q95: Vec<f64>,
}

impl Prediction {
    /// Mean infectious count `offset` steps after the origin.
    pub fn mean_at(&self, offset: u64) -> f64 {
        self.mean_infectious[offset as usize - 1]
    }
}

fn quantile(sorted: &[u32], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let f = pos - lo as f64;
    sorted[lo] as f64 * (1.0 - f) + sorted[hi] as f64 * f
}

/// Simulate each particle forward without selection from step `origin`.
pub fn predict_forward(model: &WorldModel, particles: &[WorldState], weights: &[f64], origin: u64, opts: &PredictOptions) -> Result<Prediction> {
    if particles.is_empty() || particles.len() != weights.len() {
        return Err(Error::invalid("prediction needs a non-empty weighted ensemble"));
    }
    if opts.horizon == 0 {
        return Err(Error::invalid("prediction horizon must be positive"));
    }
    let seed = derive(opts.seed, tag::PREDICT, origin, 0);
    let uniform = weights.iter().all(|&w| (w - weights[0]).abs() < 1e-15);
    let starts: Vec<u32> = match opts.runs {
        None if uniform => (0..particles.len() as u32).collect(),
        runs => {
            let m = runs.unwrap_or(particles.len());
            if m == 0 {
                return Err(Error::invalid("at least one prediction run is required"));
            }
            // Systematic selection keeps the run set balanced across particles.
            let mut w = weights.to_vec();
            let mut idx = Vec::new();
            w.resize(particles.len(), 0.0);
            let n = w.len();
            let mut rng = stream(seed, tag::RESAMPLE, 0, 0);
            let mut all = Vec::new();
            resample(&w, Resampling::Systematic, &mut rng, &mut all);
            for i in 0..m {
                idx.push(all[(i * n) / m]);
            }
            idx
        }
    };
    let h = opts.horizon as usize;
    let persons = model.persons;
    let runs: Vec<(Vec<bool>, Vec<u32>)> = starts
        .par_iter()
        .enumerate()
        .map(|(r, &k)| -> Result<(Vec<bool>, Vec<u32>)> {
            let mut s = particles[k as usize].clone();
            let mut ever = vec![false; persons];
            let mut counts = Vec::with_capacity(h);
            let mut moves = Vec::new();
            for i in 1..=opts.horizon {
                moves.clear();
                let t = origin + i;
                let mut rng = stream(seed, tag::PREDICT, r as u64, t);
                let ev = model.step(&mut s, t, None, &mut rng, &mut moves)?;
                if i == 1 {
                    for (e, hs) in ever.iter_mut().zip(&s.health) {
                        *e = hs.is_infectious();
                    }
                } else if let Some(e) = ev {
                    if s.health[e.person as usize].is_infectious() {
                        ever[e.person as usize] = true;
                    }
                }
                counts.push(s.n_infectious());
            }
            Ok((ever, counts))
        })
        .collect::<Result<_>>()?;
    let m = runs.len() as f64;
    let mut per_person = vec![0.0; persons];
    let mut mean = vec![0.0; h];
    for (ever, counts) in &runs {
        for (p, &e) in ever.iter().enumerate() {
            if e {
                per_person[p] += 1.0 / m;
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            mean[i] += c as f64 / m;
        }
    }
    let mut q05 = Vec::with_capacity(h);
    let mut q95 = Vec::with_capacity(h);
    let mut col = Vec::with_capacity(runs.len());
    for i in 0..h {
        col.clear();
        col.extend(runs.iter().map(|r| r.1[i]));
        col.sort_unstable();
        q05.push(quantile(&col, 0.05));
        q95.push(quantile(&col, 0.95));
    }
    Ok(Prediction { origin, per_person, mean_infectious: mean, q05, q95 })
}
