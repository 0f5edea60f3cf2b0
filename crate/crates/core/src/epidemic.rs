//! Individual-level SIS dynamics on a co-location network.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[repr(u8)]
pub enum HealthState {
    #[default]
    Susceptible = 0,
    Infectious = 1,
}

impl HealthState {
    pub fn is_infectious(self) -> bool {
        self == HealthState::Infectious
    }

    pub fn flipped(self) -> Self {
        match self {
            HealthState::Susceptible => HealthState::Infectious,
            HealthState::Infectious => HealthState::Susceptible,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            HealthState::Susceptible => "S",
            HealthState::Infectious => "I",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s {
            "S" => Some(HealthState::Susceptible),
            "I" => Some(HealthState::Infectious),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpidemicParams {
    /// Infection rate per infectious contact.
    pub c1: f64,
    /// Recovery rate.
    pub c2: f64,
    /// Outside infection rate per susceptible.
    pub c3: f64,
}

impl EpidemicParams {
    pub fn new(c1: f64, c2: f64, c3: f64) -> Result<Self> {
        let p = EpidemicParams { c1, c2, c3 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (n, v) in [("c1", self.c1), ("c2", self.c2), ("c3", self.c3)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{n} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.c1, self.c2, self.c3]
    }
}

/// Who is co-located with whom at one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactSnapshot {
    pub time: u64,
    pub adjacency: Vec<Vec<u32>>,
}

impl ContactSnapshot {
    pub fn from_groups(time: u64, persons: usize, groups: &[Vec<u32>]) -> Self {
        let mut adjacency = vec![Vec::new(); persons];
        for g in groups {
            for &p in g {
                adjacency[p as usize].extend(g.iter().copied().filter(|&q| q != p));
            }
        }
        for a in &mut adjacency {
            a.sort_unstable();
            a.dedup();
        }
        ContactSnapshot { time, adjacency }
    }

    /// Persons sharing a location id are in contact.
    pub fn from_locations(time: u64, locations: &[u16]) -> Self {
        let groups = location_groups(locations);
        Self::from_groups(time, locations.len(), &groups)
    }

    pub fn is_symmetric(&self) -> bool {
        self.adjacency.iter().enumerate().all(|(p, a)| {
            a.iter().all(|&q| q as usize != p && self.adjacency[q as usize].binary_search(&(p as u32)).is_ok())
        })
    }
}

/// Non-empty co-location groups ordered by location id, members ascending.
pub fn location_groups(locations: &[u16]) -> Vec<Vec<u32>> {
    let n_loc = locations.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let mut groups = vec![Vec::new(); n_loc];
    for (p, &l) in locations.iter().enumerate() {
        groups[l as usize].push(p as u32);
    }
    groups.retain(|g| !g.is_empty());
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    Infect,
    Recover,
}

/// Fired epidemic event, with the infection channel resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Contact,
    Recover,
    Outside,
}

impl EventKind {
    /// Index into `[c1, c2, c3]`.
    pub fn rate_index(self) -> usize {
        match self {
            EventKind::Contact => 0,
            EventKind::Recover => 1,
            EventKind::Outside => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EpiEvent {
    pub person: u32,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventEntry {
    pub person: u32,
    pub transition: Transition,
    pub hazard: f64,
}

fn infectious_contacts(person: usize, healths: &[HealthState], snapshot: &ContactSnapshot) -> usize {
    snapshot.adjacency[person].iter().filter(|&&q| healths[q as usize].is_infectious()).count()
}

pub fn infection_hazard(person: usize, healths: &[HealthState], snapshot: &ContactSnapshot, params: &EpidemicParams) -> f64 {
    if healths[person].is_infectious() {
        return 0.0;
    }
    params.c1 * infectious_contacts(person, healths, snapshot) as f64 + params.c3
}

pub fn build_event_table(healths: &[HealthState], snapshot: &ContactSnapshot, params: &EpidemicParams) -> Vec<EventEntry> {
    let mut table = Vec::new();
    for (p, h) in healths.iter().enumerate() {
        match h {
            HealthState::Infectious => {
                if params.c2 > 0.0 {
                    table.push(EventEntry { person: p as u32, transition: Transition::Recover, hazard: params.c2 });
                }
            }
            HealthState::Susceptible => {
                let hz = infection_hazard(p, healths, snapshot, params);
                if hz > 0.0 {
                    table.push(EventEntry { person: p as u32, transition: Transition::Infect, hazard: hz });
                }
            }
        }
    }
    table
}

/// One uniformized step over the per-person event table.
///
/// An infection is attributed to contact or outside in proportion `c1·k : c3`.
pub fn step_epidemic<R: Rng + ?Sized>(
    healths: &[HealthState],
    snapshot: &ContactSnapshot,
    params: &EpidemicParams,
    tau: f64,
    rng: &mut R,
) -> Result<(Vec<HealthState>, Option<EpiEvent>)> {
    let table = build_event_table(healths, snapshot, params);
    let h0: f64 = table.iter().map(|e| e.hazard).sum();
    let gamma = 1.0 / tau;
    if h0 > gamma * (1.0 + 1e-12) {
        return Err(Error::StepTooCoarse { total_hazard: h0, gamma });
    }
    let mut next = healths.to_vec();
    let x = rng.random::<f64>() * gamma;
    let mut acc = 0.0;
    for e in &table {
        if x < acc + e.hazard {
            let p = e.person as usize;
            let kind = match e.transition {
                Transition::Recover => EventKind::Recover,
                Transition::Infect => {
                    let contact = params.c1 * infectious_contacts(p, healths, snapshot) as f64;
                    if x - acc < contact {
                        EventKind::Contact
                    } else {
                        EventKind::Outside
                    }
                }
            };
            next[p] = next[p].flipped();
            return Ok((next, Some(EpiEvent { person: e.person, kind })));
        }
        acc += e.hazard;
    }
    Ok((next, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use HealthState::*;

    #[test]
    fn hazard_examples() {
        let p = EpidemicParams::new(0.01, 0.1, 0.001).unwrap();
        let snap = ContactSnapshot::from_groups(0, 3, &[vec![0, 1, 2]]);
        let h = [Susceptible, Infectious, Infectious];
        assert!((infection_hazard(0, &h, &snap, &p) - 0.021).abs() < 1e-15);
        assert_eq!(infection_hazard(1, &h, &snap, &p), 0.0);
        let iso = ContactSnapshot::from_groups(0, 2, &[vec![0], vec![1]]);
        let p0 = EpidemicParams::new(0.01, 0.1, 0.0).unwrap();
        assert_eq!(infection_hazard(0, &[Susceptible, Infectious], &iso, &p0), 0.0);
    }

    #[test]
    fn table_examples() {
        let p = EpidemicParams::new(0.1, 0.05, 0.0).unwrap();
        let snap = ContactSnapshot::from_groups(0, 2, &[vec![0, 1]]);
        assert!(build_event_table(&[Susceptible, Susceptible], &snap, &p).is_empty());
        let t = build_event_table(&[Infectious, Susceptible], &snap, &p);
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].transition, Transition::Recover);
        assert!((t[0].hazard - 0.05).abs() < 1e-15);
        assert!((t[1].hazard - 0.1).abs() < 1e-15);

        let q = EpidemicParams::new(0.1, 0.05, 0.02).unwrap();
        let full = ContactSnapshot::from_groups(0, 3, &[vec![0, 1, 2]]);
        let t = build_event_table(&[Infectious, Infectious, Susceptible], &full, &q);
        let s = t.iter().find(|e| e.transition == Transition::Infect).unwrap();
        assert!((s.hazard - (2.0 * 0.1 + 0.02)).abs() < 1e-15);
    }

    #[test]
    fn zero_params_do_nothing() {
        let p = EpidemicParams::new(0.0, 0.0, 0.0).unwrap();
        let snap = ContactSnapshot::from_groups(0, 2, &[vec![0, 1]]);
        let mut r = stream(1, 0, 0, 0);
        let (h, ev) = step_epidemic(&[Infectious, Susceptible], &snap, &p, 0.5, &mut r).unwrap();
        assert_eq!(h, vec![Infectious, Susceptible]);
        assert!(ev.is_none());
    }

    #[test]
    fn single_recovery_probability() {
        let p = EpidemicParams::new(0.0, 0.5, 0.0).unwrap();
        let snap = ContactSnapshot::from_groups(0, 1, &[vec![0]]);
        let mut r = stream(2, 0, 0, 0);
        let n = 100_000;
        let fired = (0..n)
            .filter(|_| step_epidemic(&[Infectious], &snap, &p, 0.1, &mut r).unwrap().1.is_some())
            .count();
        let f = fired as f64 / n as f64;
        assert!((f - 0.05).abs() < 3.0 * (0.05f64 * 0.95 / n as f64).sqrt() + 1e-9, "{f}");
    }

    #[test]
    fn coarse_step() {
        let p = EpidemicParams::new(0.0, 5.0, 0.0).unwrap();
        let snap = ContactSnapshot::from_groups(0, 1, &[vec![0]]);
        let mut r = stream(3, 0, 0, 0);
        assert!(matches!(step_epidemic(&[Infectious], &snap, &p, 1.0, &mut r), Err(Error::StepTooCoarse { .. })));
    }

    #[test]
    fn snapshot_from_locations() {
        let s = ContactSnapshot::from_locations(3, &[0, 1, 0, 2, 1]);
        assert_eq!(s.adjacency[0], vec![2]);
        assert_eq!(s.adjacency[1], vec![4]);
        assert!(s.adjacency[3].is_empty());
        assert!(s.is_symmetric());
    }
}
