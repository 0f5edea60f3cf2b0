//! Joint mobility + epidemic world stepped on a uniform grid of length τ.
//!
//! At step `t` the epidemic event and the moves are both drawn from the state
//! at the start of the step. At most one epidemic event fires per step across
//! the whole population; every person moves independently.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::epidemic::{ContactSnapshot, EpiEvent, EpidemicParams, EventKind, HealthState};
use crate::mobility::{MobilityKernel, MobilityParams, Move, Visit, VisitRecorder};
use crate::rng::{stream, tag};
use crate::{Error, Result};

/// How contacts arise.
#[derive(Debug, Clone, PartialEq)]
pub enum Contacts {
    /// Persons sharing a location are in contact.
    CoLocation,
    /// A static network; locations are ignored.
    Fixed(ContactSnapshot),
}

#[derive(Debug, Clone)]
pub struct WorldModel {
    pub persons: usize,
    pub epi: EpidemicParams,
    pub mobility: MobilityParams,
    pub contacts: Contacts,
    pub tau: f64,
    kernel: MobilityKernel,
}

impl WorldModel {
    pub fn new(persons: usize, epi: EpidemicParams, mobility: MobilityParams, tau: f64) -> Result<Self> {
        epi.validate()?;
        mobility.validate()?;
        if persons == 0 {
            return Err(Error::invalid("world needs at least one person"));
        }
        let kernel = MobilityKernel::new(&mobility, tau)?;
        Ok(WorldModel { persons, epi, mobility, contacts: Contacts::CoLocation, tau, kernel })
    }

    /// Static contact network with no movement.
    pub fn fixed_network(snapshot: ContactSnapshot, epi: EpidemicParams, tau: f64) -> Result<Self> {
        if !snapshot.is_symmetric() {
            return Err(Error::invalid("contact network must be symmetric without self-loops"));
        }
        let persons = snapshot.adjacency.len();
        let mut m = Self::new(persons, epi, MobilityParams::zeros(1, crate::mobility::BucketScheme::Constant), tau)?;
        m.contacts = Contacts::Fixed(snapshot);
        Ok(m)
    }

    pub fn locations(&self) -> usize {
        self.mobility.num_locations()
    }

    pub fn with_epi(&self, epi: EpidemicParams) -> Self {
        WorldModel { epi, ..self.clone() }
    }

    pub fn with_mobility(&self, mobility: MobilityParams) -> Result<Self> {
        let kernel = MobilityKernel::new(&mobility, self.tau)?;
        Ok(WorldModel { mobility, kernel, ..self.clone() })
    }

    pub fn kernel(&self) -> &MobilityKernel {
        &self.kernel
    }

    /// Number of steps per day; τ must divide 24 hours.
    pub fn steps_per_day(&self) -> Result<u64> {
        let s = 24.0 / self.tau;
        let r = s.round();
        if r < 1.0 || (s - r).abs() > 1e-6 {
            return Err(Error::invalid(format!("step length {} h does not divide a day", self.tau)));
        }
        Ok(r as u64)
    }

    /// Hazards `(recovery, contact infection, outside infection)` at `state`.
    pub fn hazards(&self, state: &WorldState) -> (f64, f64, f64) {
        let s = (self.persons as u32 - state.n_inf) as f64;
        (self.epi.c2 * state.n_inf as f64, self.epi.c1 * self.contact_pairs(state) as f64, self.epi.c3 * s)
    }

    /// Number of susceptible-infectious contact pairs.
    pub fn contact_pairs(&self, state: &WorldState) -> u64 {
        match &self.contacts {
            Contacts::CoLocation => state.s_count.iter().zip(&state.i_count).map(|(&s, &i)| s as u64 * i as u64).sum(),
            Contacts::Fixed(net) => state
                .health
                .iter()
                .enumerate()
                .filter(|(_, h)| !h.is_infectious())
                .map(|(p, _)| net.adjacency[p].iter().filter(|&&q| state.health[q as usize].is_infectious()).count() as u64)
                .sum(),
        }
    }

    /// Infectious contacts of a susceptible person.
    fn infectious_contacts(&self, state: &WorldState, p: usize) -> u64 {
        match &self.contacts {
            Contacts::CoLocation => state.i_count[state.loc[p] as usize] as u64,
            Contacts::Fixed(net) => net.adjacency[p].iter().filter(|&&q| state.health[q as usize].is_infectious()).count() as u64,
        }
    }

    /// Per-person probability of flipping health in one step.
    pub fn flip_probabilities(&self, state: &WorldState) -> Vec<f64> {
        (0..self.persons)
            .map(|p| {
                if state.health[p].is_infectious() {
                    self.epi.c2 * self.tau
                } else {
                    (self.epi.c1 * self.infectious_contacts(state, p) as f64 + self.epi.c3) * self.tau
                }
            })
            .collect()
    }

    /// Draw at most one epidemic event from `state` without applying it.
    pub fn sample_epidemic<R: Rng + ?Sized>(&self, state: &WorldState, rng: &mut R) -> Result<Option<EpiEvent>> {
        let (h_rec, h_con, h_out) = self.hazards(state);
        let h0 = h_rec + h_con + h_out;
        let gamma = 1.0 / self.tau;
        if h0 > gamma * (1.0 + 1e-12) {
            return Err(Error::StepTooCoarse { total_hazard: h0, gamma });
        }
        let mut x = rng.random::<f64>() * gamma;
        if x >= h0 {
            return Ok(None);
        }
        if x < h_rec {
            let k = ((x / self.epi.c2) as u32).min(state.n_inf - 1);
            let p = nth(state.health.iter().map(|h| h.is_infectious()), k);
            return Ok(Some(EpiEvent { person: p, kind: EventKind::Recover }));
        }
        x -= h_rec;
        if x < h_con {
            let p = match &self.contacts {
                Contacts::CoLocation => {
                    let mut acc = 0.0;
                    let mut chosen = None;
                    let mut last = None;
                    for (l, (&s, &i)) in state.s_count.iter().zip(&state.i_count).enumerate() {
                        let w = self.epi.c1 * s as f64 * i as f64;
                        if w <= 0.0 {
                            continue;
                        }
                        last = Some((l, s, i));
                        if x < acc + w {
                            chosen = Some((l, ((x - acc) / (self.epi.c1 * i as f64)) as u32, s));
                            break;
                        }
                        acc += w;
                    }
                    let (l, k, s) = chosen.unwrap_or_else(|| {
                        let (l, s, _) = last.expect("positive contact hazard");
                        (l, s - 1, s)
                    });
                    let k = k.min(s - 1);
                    nth(state.health.iter().zip(&state.loc).map(|(h, &pl)| !h.is_infectious() && pl as usize == l), k)
                }
                Contacts::Fixed(_) => {
                    let mut acc = 0.0;
                    let mut chosen = None;
                    for p in 0..self.persons {
                        if state.health[p].is_infectious() {
                            continue;
                        }
                        let w = self.epi.c1 * self.infectious_contacts(state, p) as f64;
                        if w > 0.0 {
                            chosen = Some(p as u32);
                            if x < acc + w {
                                break;
                            }
                            acc += w;
                        }
                    }
                    chosen.expect("positive contact hazard")
                }
            };
            return Ok(Some(EpiEvent { person: p, kind: EventKind::Contact }));
        }
        x -= h_con;
        let s = self.persons as u32 - state.n_inf;
        let k = ((x / self.epi.c3) as u32).min(s - 1);
        let p = nth(state.health.iter().map(|h| !h.is_infectious()), k);
        Ok(Some(EpiEvent { person: p, kind: EventKind::Outside }))
    }

    /// Advance `state` by one step (step index `t ≥ 1`). Moves are appended to `moves`.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &mut WorldState,
        t: u64,
        clamp: Option<&ClampSchedule>,
        rng: &mut R,
        moves: &mut Vec<Move>,
    ) -> Result<Option<EpiEvent>> {
        let ev = self.sample_epidemic(state, rng)?;
        if let Some(e) = ev {
            state.flip(e.person as usize);
        }
        if matches!(self.contacts, Contacts::CoLocation) {
            let start = moves.len();
            let bucket = self.kernel.bucket_for_step(t);
            self.kernel.step(bucket, &mut state.loc, clamp.map(|c| c.frozen.as_slice()), rng, moves);
            for m in &moves[start..] {
                state.shift_counts(m.person as usize, m.from, m.to);
            }
            if let Some(c) = clamp {
                for &(p, to) in c.changes_at(t) {
                    let from = state.loc[p as usize];
                    if from != to {
                        state.relocate(p as usize, to);
                        moves.push(Move { person: p, from, to });
                    }
                }
            }
        }
        Ok(ev)
    }
}

fn nth<I: Iterator<Item = bool>>(it: I, k: u32) -> u32 {
    let mut seen = 0;
    let mut last = 0;
    for (p, ok) in it.enumerate() {
        if ok {
            if seen == k {
                return p as u32;
            }
            seen += 1;
            last = p as u32;
        }
    }
    last
}

/// Health and location of every person plus per-location tallies.
#[derive(Debug, PartialEq, Eq)]
pub struct WorldState {
    pub health: Vec<HealthState>,
    pub loc: Vec<u16>,
    s_count: Vec<u32>,
    i_count: Vec<u32>,
    n_inf: u32,
}

impl Clone for WorldState {
    fn clone(&self) -> Self {
        WorldState {
            health: self.health.clone(),
            loc: self.loc.clone(),
            s_count: self.s_count.clone(),
            i_count: self.i_count.clone(),
            n_inf: self.n_inf,
        }
    }

    fn clone_from(&mut self, src: &Self) {
        self.health.clone_from(&src.health);
        self.loc.clone_from(&src.loc);
        self.s_count.clone_from(&src.s_count);
        self.i_count.clone_from(&src.i_count);
        self.n_inf = src.n_inf;
    }
}

impl WorldState {
    pub fn new(health: Vec<HealthState>, loc: Vec<u16>, locations: usize) -> Result<Self> {
        if health.len() != loc.len() {
            return Err(Error::invalid("health and location vectors differ in length"));
        }
        let mut s_count = vec![0; locations];
        let mut i_count = vec![0; locations];
        let mut n_inf = 0;
        for (h, &l) in health.iter().zip(&loc) {
            let l = l as usize;
            if l >= locations {
                return Err(Error::invalid(format!("location {l} out of range")));
            }
            if h.is_infectious() {
                i_count[l] += 1;
                n_inf += 1;
            } else {
                s_count[l] += 1;
            }
        }
        Ok(WorldState { health, loc, s_count, i_count, n_inf })
    }

    pub fn persons(&self) -> usize {
        self.health.len()
    }

    pub fn n_infectious(&self) -> u32 {
        self.n_inf
    }

    /// Persons present at `l`.
    pub fn population_at(&self, l: usize) -> u32 {
        self.s_count[l] + self.i_count[l]
    }

    pub fn infectious_at(&self, l: usize) -> u32 {
        self.i_count[l]
    }

    pub fn flip(&mut self, p: usize) {
        let l = self.loc[p] as usize;
        if self.health[p].is_infectious() {
            self.i_count[l] -= 1;
            self.s_count[l] += 1;
            self.n_inf -= 1;
        } else {
            self.s_count[l] -= 1;
            self.i_count[l] += 1;
            self.n_inf += 1;
        }
        self.health[p] = self.health[p].flipped();
    }

    pub fn set_health(&mut self, p: usize, h: HealthState) {
        if self.health[p] != h {
            self.flip(p);
        }
    }

    fn shift_counts(&mut self, p: usize, from: u16, to: u16) {
        let c = if self.health[p].is_infectious() { &mut self.i_count } else { &mut self.s_count };
        c[from as usize] -= 1;
        c[to as usize] += 1;
    }

    pub fn relocate(&mut self, p: usize, to: u16) {
        let from = self.loc[p];
        if from != to {
            self.loc[p] = to;
            self.shift_counts(p, from, to);
        }
    }
}

/// Known location traces for a subset of persons, applied during simulation.
#[derive(Debug, Clone, Default)]
pub struct ClampSchedule {
    pub frozen: Vec<bool>,
    /// Location at time 0 per clamped person.
    pub initial: Vec<(u32, u16)>,
    changes: Vec<(u32, u16)>,
    offsets: Vec<(u64, usize, usize)>,
}

impl ClampSchedule {
    pub fn empty(persons: usize) -> Self {
        ClampSchedule { frozen: vec![false; persons], ..Default::default() }
    }

    /// Build from visit logs; each visit start after time 0 becomes a location change
    /// at step `round(enter_time / τ)`.
    pub fn from_visits(persons: usize, visits: &[Visit], tau: f64) -> Result<Self> {
        let mut frozen = vec![false; persons];
        let mut initial = Vec::new();
        let mut raw: Vec<(u64, u32, u16)> = Vec::new();
        for v in visits {
            let p = v.person as usize;
            if p >= persons {
                return Err(Error::invalid(format!("visit for unknown person {p}")));
            }
            frozen[p] = true;
            let step = (v.enter_time / tau).round() as u64;
            if step == 0 {
                initial.push((v.person, v.location));
            } else {
                raw.push((step, v.person, v.location));
            }
        }
        initial.sort_unstable();
        initial.dedup_by_key(|x| x.0);
        raw.sort_unstable();
        let mut changes = Vec::with_capacity(raw.len());
        let mut offsets: Vec<(u64, usize, usize)> = Vec::new();
        for (s, p, l) in raw {
            match offsets.last_mut() {
                Some(o) if o.0 == s => o.2 += 1,
                _ => offsets.push((s, changes.len(), changes.len() + 1)),
            }
            changes.push((p, l));
        }
        Ok(ClampSchedule { frozen, initial, changes, offsets })
    }

    pub fn changes_at(&self, t: u64) -> &[(u32, u16)] {
        match self.offsets.binary_search_by_key(&t, |o| o.0) {
            Ok(i) => &self.changes[self.offsets[i].1..self.offsets[i].2],
            Err(_) => &[],
        }
    }

    pub fn is_clamped(&self, p: usize) -> bool {
        self.frozen.get(p).copied().unwrap_or(false)
    }

    /// Overwrite clamped persons' starting locations.
    pub fn apply_initial(&self, loc: &mut [u16]) {
        for &(p, l) in &self.initial {
            loc[p as usize] = l;
        }
    }
}

/// Prior over the starting world: independent infection with probability
/// `prevalence`, known starting locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub prevalence: f64,
    pub locations: Vec<u16>,
}

impl InitialCondition {
    pub fn sample<R: Rng + ?Sized>(&self, model: &WorldModel, rng: &mut R) -> Result<WorldState> {
        let health = (0..model.persons)
            .map(|_| if rng.random::<f64>() < self.prevalence { HealthState::Infectious } else { HealthState::Susceptible })
            .collect();
        WorldState::new(health, self.locations.clone(), model.locations())
    }
}

/// Recorded sample path of a world.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldTrajectory {
    pub initial: WorldState,
    pub events: Vec<Option<EpiEvent>>,
    moves: Vec<Move>,
    move_offsets: Vec<usize>,
}

impl WorldTrajectory {
    pub fn new(initial: WorldState) -> Self {
        WorldTrajectory { initial, events: Vec::new(), moves: Vec::new(), move_offsets: vec![0] }
    }

    pub fn push(&mut self, ev: Option<EpiEvent>, moves: &[Move]) {
        self.events.push(ev);
        self.moves.extend_from_slice(moves);
        self.move_offsets.push(self.moves.len());
    }

    pub fn steps(&self) -> u64 {
        self.events.len() as u64
    }

    /// Moves made in step `t ≥ 1`.
    pub fn moves_at(&self, t: u64) -> &[Move] {
        let i = (t - 1) as usize;
        &self.moves[self.move_offsets[i]..self.move_offsets[i + 1]]
    }

    /// Apply the recorded step `t` to `s`.
    pub fn apply_step(&self, s: &mut WorldState, t: u64) {
        if let Some(e) = self.events[(t - 1) as usize] {
            s.flip(e.person as usize);
        }
        for m in self.moves_at(t) {
            s.relocate(m.person as usize, m.to);
        }
    }

    /// Visit `(t, state)` for `t = 0..=steps`.
    pub fn replay<F: FnMut(u64, &WorldState)>(&self, mut f: F) {
        let mut s = self.initial.clone();
        f(0, &s);
        for t in 1..=self.steps() {
            self.apply_step(&mut s, t);
            f(t, &s);
        }
    }

    pub fn final_state(&self) -> WorldState {
        let mut s = self.initial.clone();
        for t in 1..=self.steps() {
            self.apply_step(&mut s, t);
        }
        s
    }

    pub fn infectious_counts(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.events.len() + 1);
        self.replay(|_, s| out.push(s.n_infectious()));
        out
    }

    pub fn visits(&self, tau: f64) -> Vec<Visit> {
        let mut rec = VisitRecorder::new(&self.initial.loc, 0.0);
        for t in 1..=self.steps() {
            for m in self.moves_at(t) {
                rec.record(m.person, m.to, t as f64 * tau);
            }
        }
        rec.finish(self.steps() as f64 * tau)
    }
}

/// Simulate the world forward, recording the full path. Step `t` uses the
/// stream `(seed, EPIDEMIC, t, 0)`.
pub fn simulate_world(model: &WorldModel, initial: WorldState, steps: u64, seed: u64) -> Result<WorldTrajectory> {
    let mut traj = WorldTrajectory::new(initial.clone());
    let mut state = initial;
    let mut moves = Vec::new();
    for t in 1..=steps {
        moves.clear();
        let mut rng = stream(seed, tag::EPIDEMIC, t, 0);
        let ev = model.step(&mut state, t, None, &mut rng, &mut moves)?;
        traj.push(ev, &moves);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::BucketScheme;
    use HealthState::*;

    fn two_loc() -> MobilityParams {
        MobilityParams::constant(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap()
    }

    #[test]
    fn hazards_from_counts() {
        let epi = EpidemicParams::new(0.1, 0.05, 0.01).unwrap();
        let m = WorldModel::new(4, epi, two_loc(), 0.1).unwrap();
        let s = WorldState::new(vec![Infectious, Susceptible, Susceptible, Infectious], vec![0, 0, 1, 0], 2).unwrap();
        let (r, c, o) = m.hazards(&s);
        assert!((r - 0.1).abs() < 1e-12);
        assert!((c - 0.2).abs() < 1e-12);
        assert!((o - 0.02).abs() < 1e-12);
        let f = m.flip_probabilities(&s);
        assert!((f[1] - (0.2 + 0.01) * 0.1).abs() < 1e-12);
        assert!((f[2] - 0.01 * 0.1).abs() < 1e-12);
    }

    #[test]
    fn replay_reproduces_path() {
        let epi = EpidemicParams::new(0.2, 0.1, 0.01).unwrap();
        let m = WorldModel::new(10, epi, two_loc(), 0.1).unwrap();
        let init = WorldState::new(vec![Susceptible; 10], vec![0; 10], 2).unwrap();
        let traj = simulate_world(&m, init, 500, 3).unwrap();
        let mut n = 0;
        traj.replay(|_, s| {
            n += 1;
            assert_eq!(s.population_at(0) + s.population_at(1), 10);
        });
        assert_eq!(n, 501);
        let again = simulate_world(&m, traj.initial.clone(), 500, 3).unwrap();
        assert_eq!(again, traj);
    }

    #[test]
    fn clamp_schedule_applies() {
        let visits = vec![
            Visit { person: 1, enter_time: 0.0, exit_time: 0.5, location: 1 },
            Visit { person: 1, enter_time: 0.5, exit_time: 2.0, location: 0 },
        ];
        let c = ClampSchedule::from_visits(3, &visits, 0.1).unwrap();
        assert_eq!(c.changes_at(5), &[(1, 0)]);
        assert!(c.changes_at(4).is_empty());
        assert_eq!(c.initial, vec![(1, 1)]);
        let epi = EpidemicParams::new(0.0, 0.0, 0.0).unwrap();
        let m = WorldModel::new(3, epi, MobilityParams::zeros(2, BucketScheme::Constant), 0.1).unwrap();
        let mut loc = vec![0, 0, 0];
        c.apply_initial(&mut loc);
        let mut s = WorldState::new(vec![Susceptible; 3], loc, 2).unwrap();
        let mut moves = Vec::new();
        let mut rng = stream(0, 0, 0, 0);
        for t in 1..=6 {
            m.step(&mut s, t, Some(&c), &mut rng, &mut moves).unwrap();
        }
        assert_eq!(s.loc, vec![0, 0, 0]);
        assert_eq!(moves.len(), 1);
    }

    #[test]
    fn fixed_network_hazard() {
        let net = ContactSnapshot::from_groups(0, 3, &[vec![0, 1], vec![1, 2]]);
        let epi = EpidemicParams::new(0.1, 0.05, 0.0).unwrap();
        let m = WorldModel::fixed_network(net, epi, 0.5).unwrap();
        let s = WorldState::new(vec![Susceptible, Infectious, Susceptible], vec![0; 3], 1).unwrap();
        assert_eq!(m.contact_pairs(&s), 2);
        let f = m.flip_probabilities(&s);
        assert!((f[0] - 0.05).abs() < 1e-12 && (f[1] - 0.025).abs() < 1e-12);
    }

    #[test]
    fn too_coarse() {
        let epi = EpidemicParams::new(0.0, 3.0, 0.0).unwrap();
        let m = WorldModel::new(1, epi, MobilityParams::zeros(1, BucketScheme::Constant), 0.5).unwrap();
        let mut s = WorldState::new(vec![Infectious], vec![0], 1).unwrap();
        let mut rng = stream(0, 0, 0, 0);
        assert!(matches!(m.step(&mut s, 1, None, &mut rng, &mut Vec::new()), Err(Error::StepTooCoarse { .. })));
    }
}
