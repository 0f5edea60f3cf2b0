//! Stochastic kinetic models over species populations.

pub mod parse;
pub mod sim;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use parse::{parse_model, print_model, ParseError};
pub use sim::{simulate_discrete, simulate_discrete_final, simulate_gillespie};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Species {
    pub id: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub reactants: Vec<u32>,
    pub products: Vec<u32>,
    pub delta: Vec<i64>,
    pub rate: f64,
}

impl Event {
    pub fn new(reactants: Vec<u32>, products: Vec<u32>, rate: f64) -> Result<Self> {
        if reactants.len() != products.len() {
            return Err(Error::invalid("reactant and product vectors differ in length"));
        }
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::invalid(format!("rate constant must be finite and nonnegative, got {rate}")));
        }
        let delta = products
            .iter()
            .zip(&reactants)
            .map(|(&b, &a)| b as i64 - a as i64)
            .collect();
        Ok(Event { reactants, products, delta, rate })
    }

    /// Mass-action hazard `c · ∏ x^α`.
    pub fn hazard(&self, x: &[u64]) -> f64 {
        let mut g = 1.0;
        for (&a, &n) in self.reactants.iter().zip(x) {
            if a > 0 {
                if n == 0 {
                    return 0.0;
                }
                g *= (n as f64).powi(a as i32);
            }
        }
        self.rate * g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionSystem {
    pub species: Vec<Species>,
    pub events: Vec<Event>,
    /// Optional `time-unit` header carried through parsing and printing.
    pub time_unit: Option<String>,
}

impl ReactionSystem {
    pub fn new(names: &[&str], events: Vec<Event>) -> Result<Self> {
        let species: Vec<Species> = names
            .iter()
            .enumerate()
            .map(|(id, n)| Species { id, name: n.to_string() })
            .collect();
        let sys = ReactionSystem { species, events, time_unit: None };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        if self.events.is_empty() {
            return Err(Error::invalid("reaction system needs at least one event"));
        }
        let m = self.species.len();
        for (i, s) in self.species.iter().enumerate() {
            if s.id != i {
                return Err(Error::invalid("species ids must be contiguous from 0"));
            }
            if self.species[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::invalid(format!("duplicate species name {}", s.name)));
            }
        }
        for e in &self.events {
            if e.reactants.len() != m || e.products.len() != m || e.delta.len() != m {
                return Err(Error::invalid("stoichiometry length differs from species count"));
            }
        }
        Ok(())
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    pub fn num_species(&self) -> usize {
        self.species.len()
    }
}

pub fn hazard(event: &Event, state: &[u64]) -> f64 {
    event.hazard(state)
}

pub fn total_hazard(system: &ReactionSystem, state: &[u64]) -> f64 {
    system.events.iter().map(|e| e.hazard(state)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub time: f64,
    pub x: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub time: f64,
    /// `None` is the null event.
    pub event: Option<usize>,
    pub x: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial: SystemState,
    pub steps: Vec<TrajectoryStep>,
    pub horizon: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &[u64] {
        self.steps.last().map(|s| s.x.as_slice()).unwrap_or(&self.initial.x)
    }

    /// Populations in force at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> &[u64] {
        let idx = self.steps.partition_point(|s| s.time <= t);
        if idx == 0 {
            &self.initial.x
        } else {
            &self.steps[idx - 1].x
        }
    }

    pub fn num_events(&self) -> usize {
        self.steps.iter().filter(|s| s.event.is_some()).count()
    }

    /// CSV with columns `step,time,event,<species...>`. Events are written 1-based,
    /// `0` is the null event and the initial row leaves the column empty.
    pub fn write_csv<W: Write>(&self, system: &ReactionSystem, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let mut header = vec!["step".to_string(), "time".into(), "event".into()];
        header.extend(system.species.iter().map(|s| s.name.clone()));
        w.write_record(&header)?;
        let mut row = vec![0.to_string(), self.initial.time.to_string(), String::new()];
        row.extend(self.initial.x.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
        for (i, s) in self.steps.iter().enumerate() {
            let ev = s.event.map(|e| e + 1).unwrap_or(0);
            let mut row = vec![(i + 1).to_string(), s.time.to_string(), ev.to_string()];
            row.extend(s.x.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Log density of a sample path, including the survival term to the horizon.
pub fn path_log_likelihood(system: &ReactionSystem, traj: &Trajectory) -> f64 {
    let mut ll = 0.0;
    let mut prev_t = traj.initial.time;
    let mut prev_x: &[u64] = &traj.initial.x;
    for s in &traj.steps {
        let h0 = total_hazard(system, prev_x);
        ll -= h0 * (s.time - prev_t);
        if let Some(v) = s.event {
            let h = system.events[v].hazard(prev_x);
            if h <= 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += h.ln();
        }
        prev_t = s.time;
        prev_x = &s.x;
    }
    ll - total_hazard(system, prev_x) * (traj.horizon - prev_t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationConfig {
    pub tau: f64,
}

impl DiscretizationConfig {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::invalid(format!("step length must be positive, got {tau}")));
        }
        Ok(DiscretizationConfig { tau })
    }

    pub fn gamma(&self) -> f64 {
        1.0 / self.tau
    }
}

/// Categorical law of one uniformized step: index 0 is the null event,
/// index `v + 1` is event `v`.
pub fn discrete_step_distribution(system: &ReactionSystem, state: &[u64], gamma: f64) -> Result<Vec<f64>> {
    let hs: Vec<f64> = system.events.iter().map(|e| e.hazard(state)).collect();
    let h0: f64 = hs.iter().sum();
    if h0 > gamma * (1.0 + 1e-12) {
        return Err(Error::StepTooCoarse { total_hazard: h0, gamma });
    }
    let mut p = Vec::with_capacity(hs.len() + 1);
    p.push(0.0);
    p.extend(hs.iter().map(|h| h / gamma));
    // Computing the null mass last keeps the sum exact to rounding.
    p[0] = (1.0 - p[1..].iter().sum::<f64>()).max(0.0);
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sis() -> ReactionSystem {
        // I + S -> 2I, I -> S, S -> I over species (I, S)
        ReactionSystem::new(
            &["I", "S"],
            vec![
                Event::new(vec![1, 1], vec![2, 0], 0.1).unwrap(),
                Event::new(vec![1, 0], vec![0, 1], 0.5).unwrap(),
                Event::new(vec![0, 1], vec![1, 0], 0.05).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn hazard_examples() {
        let s = sis();
        assert!((s.events[0].hazard(&[3, 2]) - 0.6).abs() < 1e-12);
        assert_eq!(s.events[1].hazard(&[0, 7]), 0.0);
        assert!((s.events[2].hazard(&[1, 4]) - 0.2).abs() < 1e-12);
        assert_eq!(s.events[0].delta, vec![1, -1]);
    }

    #[test]
    fn total_hazard_examples() {
        let s = sis();
        // 0.1*3*2 + 0.5*3 + 0.05*2
        assert!((total_hazard(&s, &[3, 2]) - 2.2).abs() < 1e-12);
        assert_eq!(total_hazard(&s, &[0, 0]), 0.0);
        let one = ReactionSystem::new(&["A"], vec![Event::new(vec![1], vec![0], 0.7).unwrap()]).unwrap();
        assert_eq!(total_hazard(&one, &[4]), one.events[0].hazard(&[4]));
    }

    #[test]
    fn literal_power_form_for_higher_order() {
        let e = Event::new(vec![2], vec![0], 0.5).unwrap();
        assert_eq!(e.hazard(&[3]), 0.5 * 9.0);
    }

    #[test]
    fn step_distribution_examples() {
        let s = ReactionSystem::new(
            &["I", "S"],
            vec![
                Event::new(vec![1, 1], vec![2, 0], 0.1).unwrap(),
                Event::new(vec![1, 0], vec![0, 1], 0.05).unwrap(),
                Event::new(vec![0, 1], vec![1, 0], 0.01).unwrap(),
            ],
        )
        .unwrap();
        let p = discrete_step_distribution(&s, &[1, 1], 1.0).unwrap();
        let want = [0.84, 0.1, 0.05, 0.01];
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        let p = discrete_step_distribution(&s, &[0, 0], 1.0).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 0.0, 0.0]);
        // h0 = 0.16 exactly at gamma
        let p = discrete_step_distribution(&s, &[1, 1], 0.16).unwrap();
        assert!(p[0].abs() < 1e-12);
        assert!(matches!(
            discrete_step_distribution(&s, &[1, 1], 0.1),
            Err(Error::StepTooCoarse { .. })
        ));
    }

    #[test]
    fn path_likelihood_examples() {
        let s = ReactionSystem::new(&["A"], vec![Event::new(vec![0], vec![1], 2.0).unwrap()]).unwrap();
        let empty = Trajectory { initial: SystemState { time: 0.0, x: vec![0] }, steps: vec![], horizon: 3.0 };
        assert!((path_log_likelihood(&s, &empty) + 6.0).abs() < 1e-12);
        let one = Trajectory {
            initial: SystemState { time: 0.0, x: vec![0] },
            steps: vec![TrajectoryStep { time: 1.0, event: Some(0), x: vec![1] }],
            horizon: 1.0,
        };
        assert!((path_log_likelihood(&s, &one) - (2f64.ln() - 2.0)).abs() < 1e-12);

        let d = ReactionSystem::new(&["I", "S"], vec![Event::new(vec![1, 0], vec![0, 1], 1.0).unwrap()]).unwrap();
        let bad = Trajectory {
            initial: SystemState { time: 0.0, x: vec![0, 1] },
            steps: vec![TrajectoryStep { time: 0.5, event: Some(0), x: vec![0, 2] }],
            horizon: 1.0,
        };
        assert_eq!(path_log_likelihood(&d, &bad), f64::NEG_INFINITY);
    }

    #[test]
    fn csv_layout() {
        let s = sis();
        let t = Trajectory {
            initial: SystemState { time: 0.0, x: vec![1, 2] },
            steps: vec![
                TrajectoryStep { time: 0.5, event: None, x: vec![1, 2] },
                TrajectoryStep { time: 1.0, event: Some(1), x: vec![0, 3] },
            ],
            horizon: 1.0,
        };
        let mut buf = Vec::new();
        t.write_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "step,time,event,I,S\n0,0,,1,2\n1,0.5,0,1,2\n2,1,2,0,3\n");
    }

    #[test]
    fn state_lookup() {
        let t = Trajectory {
            initial: SystemState { time: 0.0, x: vec![5] },
            steps: vec![TrajectoryStep { time: 1.0, event: Some(0), x: vec![4] }],
            horizon: 2.0,
        };
        assert_eq!(t.state_at(0.99), &[5]);
        assert_eq!(t.state_at(1.0), &[4]);
        assert_eq!(t.final_state(), &[4]);
    }
}
