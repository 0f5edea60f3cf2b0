use crate::epidemic::EpiEvent;
use crate::mobility::Move;
use crate::world::{WorldState, WorldTrajectory};

/// Per-step ancestors and sampled events of every particle.
///
/// Memory grows as O(N·T) plus the number of recorded moves.
#[derive(Debug, Clone)]
pub struct History {
    n: usize,
    initial: Vec<WorldState>,
    ancestors: Vec<u32>,
    events: Vec<Option<EpiEvent>>,
    moves: Vec<Move>,
    offsets: Vec<usize>,
}

impl History {
    pub fn new(initial: Vec<WorldState>) -> Self {
        History { n: initial.len(), initial, ancestors: Vec::new(), events: Vec::new(), moves: Vec::new(), offsets: vec![0] }
    }

    pub fn push(&mut self, ancestors: &[u32], events: &[Option<EpiEvent>], moves: &[Vec<Move>]) {
        self.ancestors.extend_from_slice(ancestors);
        self.events.extend_from_slice(events);
        for m in moves {
            self.moves.extend_from_slice(m);
            self.offsets.push(self.moves.len());
        }
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    pub fn steps(&self) -> u64 {
        (self.events.len() / self.n.max(1)) as u64
    }

    /// Ancestor index `i_t^k` for step `t ≥ 1`.
    pub fn ancestor(&self, t: u64, k: usize) -> u32 {
        self.ancestors[(t as usize - 1) * self.n + k]
    }

    /// Particle indices `j_0..j_T` of the lineage ending in the `k`-th selected particle:
    /// `j_T = i_T^k`, `j_{t-1} = i_{t-1}^{j_t}`, with `i_0` the identity.
    pub fn lineage(&self, k: usize) -> Vec<u32> {
        let t_max = self.steps();
        let mut j = vec![0u32; t_max as usize + 1];
        if t_max == 0 {
            j[0] = k as u32;
            return j;
        }
        j[t_max as usize] = self.ancestor(t_max, k);
        for t in (1..t_max).rev() {
            j[t as usize] = self.ancestor(t, j[t as usize + 1] as usize);
        }
        j[0] = j[1];
        j
    }

    fn slot(&self, t: u64, j: u32) -> usize {
        (t as usize - 1) * self.n + j as usize
    }

    /// Reconstruct the full path of lineage `k`.
    pub fn trajectory(&self, k: usize) -> WorldTrajectory {
        let j = self.lineage(k);
        let mut traj = WorldTrajectory::new(self.initial[j[0] as usize].clone());
        for t in 1..=self.steps() {
            let s = self.slot(t, j[t as usize]);
            traj.push(self.events[s], &self.moves[self.offsets[s]..self.offsets[s + 1]]);
        }
        traj
    }

    /// Health-only replay of lineage `k`, calling `f(t, health)` for `t = 0..=T`.
    pub fn replay_health<F: FnMut(u64, &[crate::epidemic::HealthState])>(&self, k: usize, mut f: F) {
        let j = self.lineage(k);
        let mut h = self.initial[j[0] as usize].health.clone();
        f(0, &h);
        for t in 1..=self.steps() {
            if let Some(e) = self.events[self.slot(t, j[t as usize])] {
                let p = e.person as usize;
                h[p] = h[p].flipped();
            }
            f(t, &h);
        }
    }
}

/// All N smoothed trajectories.
pub fn smooth_backtrack(history: &History) -> Vec<WorldTrajectory> {
    (0..history.particles()).map(|k| history.trajectory(k)).collect()
}

/// Smoothed P(person infectious at t | all data) for `t = 0..=T`, row per step.
/// `weights` are the final normalized particle weights.
pub fn smoothed_marginals(history: &History, weights: &[f64]) -> Vec<Vec<f64>> {
    let n = history.particles();
    let persons = history.initial.first().map(|s| s.persons()).unwrap_or(0);
    let mut m = vec![vec![0.0; persons]; history.steps() as usize + 1];
    for (k, &w) in weights.iter().enumerate().take(n) {
        history.replay_health(k, |t, h| {
            for (p, s) in h.iter().enumerate() {
                if s.is_infectious() {
                    m[t as usize][p] += w;
                }
            }
        });
    }
    m
}
