use rand::Rng;

use super::{discrete_step_distribution, DiscretizationConfig, ReactionSystem, SystemState, Trajectory, TrajectoryStep};
use crate::Result;

fn apply(x: &mut [u64], delta: &[i64]) {
    for (v, d) in x.iter_mut().zip(delta) {
        *v = (*v as i64 + d) as u64;
    }
}

fn pick(weights: &[f64], total: f64, u: f64) -> usize {
    let target = u * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    // Rounding can leave target at the very top; fall back to the last positive weight.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// Exact continuous-time simulation up to `horizon`.
pub fn simulate_gillespie<R: Rng + ?Sized>(system: &ReactionSystem, x0: &SystemState, horizon: f64, rng: &mut R) -> Trajectory {
    let mut t = x0.time;
    let mut x = x0.x.clone();
    let mut steps = Vec::new();
    let mut hs = vec![0.0; system.events.len()];
    loop {
        for (h, e) in hs.iter_mut().zip(&system.events) {
            *h = e.hazard(&x);
        }
        let h0: f64 = hs.iter().sum();
        if h0 <= 0.0 {
            break;
        }
        let u: f64 = 1.0 - rng.random::<f64>();
        let dt = -u.ln() / h0;
        if t + dt > horizon {
            break;
        }
        t += dt;
        let v = pick(&hs, h0, rng.random());
        apply(&mut x, &system.events[v].delta);
        steps.push(TrajectoryStep { time: t, event: Some(v), x: x.clone() });
    }
    Trajectory { initial: x0.clone(), steps, horizon }
}

fn sample_step<R: Rng + ?Sized>(system: &ReactionSystem, x: &[u64], gamma: f64, rng: &mut R) -> Result<Option<usize>> {
    let p = discrete_step_distribution(system, x, gamma)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (v, pv) in p[1..].iter().enumerate() {
        acc += pv;
        if u < acc {
            return Ok(Some(v));
        }
    }
    Ok(None)
}

/// Uniformized discrete-time simulation: at most one event per step of length τ.
pub fn simulate_discrete<R: Rng + ?Sized>(
    system: &ReactionSystem,
    x0: &SystemState,
    config: &DiscretizationConfig,
    steps: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let gamma = config.gamma();
    let mut x = x0.x.clone();
    let mut out = Vec::with_capacity(steps);
    for k in 1..=steps {
        let ev = sample_step(system, &x, gamma, rng)?;
        if let Some(v) = ev {
            apply(&mut x, &system.events[v].delta);
        }
        out.push(TrajectoryStep { time: x0.time + k as f64 * config.tau, event: ev, x: x.clone() });
    }
    Ok(Trajectory { initial: x0.clone(), steps: out, horizon: x0.time + steps as f64 * config.tau })
}

/// Same law as [`simulate_discrete`] but keeps only the final populations.
pub fn simulate_discrete_final<R: Rng + ?Sized>(
    system: &ReactionSystem,
    x0: &[u64],
    config: &DiscretizationConfig,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<u64>> {
    let gamma = config.gamma();
    let mut x = x0.to_vec();
    for _ in 0..steps {
        if let Some(v) = sample_step(system, &x, gamma, rng)? {
            apply(&mut x, &system.events[v].delta);
        }
    }
    Ok(x)
}
