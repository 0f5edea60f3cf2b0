//! Exact reference computations shared by integration and acceptance tests.
#![allow(dead_code)]

/// Transient `P(I at t)` of a two-state chain started in S with rates S→I `a`, I→S `b`.
pub fn two_state_infected(a: f64, b: f64, t: f64) -> f64 {
    a / (a + b) * (1.0 - (-(a + b) * t).exp())
}

/// Same chain after `n` uniformized steps of length `tau`.
pub fn two_state_infected_discrete(a: f64, b: f64, tau: f64, n: u64) -> f64 {
    let mut p = 0.0;
    for _ in 0..n {
        p = p * (1.0 - b * tau) + (1.0 - p) * a * tau;
    }
    p
}

/// Observation for one person at one step of the exact chain.
#[derive(Debug, Clone, Copy)]
pub struct Obs {
    pub person: usize,
    pub self_sick: bool,
    pub nearby_sick: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct Noise {
    pub sens: f64,
    pub spec: f64,
    pub near_sens: f64,
    pub near_spec: f64,
}

/// Exact filtering and smoothing for SIS on a fixed network with at most a
/// handful of persons, by enumerating all `2^n` health configurations.
pub struct SisChain {
    pub n: usize,
    pub adjacency: Vec<Vec<usize>>,
    pub c: [f64; 3],
    pub tau: f64,
    pub prevalence: f64,
    pub noise: Noise,
}

pub struct ExactPosterior {
    /// `filtered[t][p]` for `t = 1..=T` (index 0 is the prior).
    pub filtered: Vec<Vec<f64>>,
    pub smoothed: Vec<Vec<f64>>,
    pub log_likelihood: f64,
}

impl SisChain {
    fn infected(&self, s: usize, p: usize) -> bool {
        s >> p & 1 == 1
    }

    pub fn transition(&self) -> Vec<Vec<f64>> {
        let m = 1 << self.n;
        let mut tr = vec![vec![0.0; m]; m];
        for s in 0..m {
            let mut stay = 1.0;
            for p in 0..self.n {
                let h = if self.infected(s, p) {
                    self.c[1]
                } else {
                    let k = self.adjacency[p].iter().filter(|&&q| self.infected(s, q)).count() as f64;
                    self.c[0] * k + self.c[2]
                };
                tr[s][s ^ (1 << p)] = h * self.tau;
                stay -= h * self.tau;
            }
            assert!(stay >= -1e-12, "step too coarse for the exact chain");
            tr[s][s] = stay;
        }
        tr
    }

    pub fn emission(&self, s: usize, obs: &[Obs]) -> f64 {
        let mut l = 1.0;
        for o in obs {
            let inf = self.infected(s, o.person);
            let near = self.adjacency[o.person].iter().any(|&q| self.infected(s, q));
            l *= match (inf, o.self_sick) {
                (true, true) => self.noise.sens,
                (true, false) => 1.0 - self.noise.sens,
                (false, true) => 1.0 - self.noise.spec,
                (false, false) => self.noise.spec,
            };
            l *= match (near, o.nearby_sick) {
                (true, true) => self.noise.near_sens,
                (true, false) => 1.0 - self.noise.near_sens,
                (false, true) => 1.0 - self.noise.near_spec,
                (false, false) => self.noise.near_spec,
            };
        }
        l
    }

    fn marginals(&self, dist: &[f64]) -> Vec<f64> {
        (0..self.n).map(|p| dist.iter().enumerate().filter(|(s, _)| self.infected(*s, p)).map(|(_, w)| w).sum()).collect()
    }

    /// `obs[t]` holds the observations at step `t` for `t = 1..=T`; `obs[0]` is ignored.
    pub fn posterior(&self, obs: &[Vec<Obs>]) -> ExactPosterior {
        let m = 1 << self.n;
        let tr = self.transition();
        let t_max = obs.len() - 1;
        let prior: Vec<f64> = (0..m)
            .map(|s| (0..self.n).map(|p| if self.infected(s, p) { self.prevalence } else { 1.0 - self.prevalence }).product())
            .collect();
        let mut alpha = vec![prior];
        let mut ll = 0.0;
        for t in 1..=t_max {
            let prev = &alpha[t - 1];
            let mut next = vec![0.0; m];
            for s in 0..m {
                for r in 0..m {
                    next[r] += prev[s] * tr[s][r];
                }
            }
            for (r, v) in next.iter_mut().enumerate() {
                *v *= self.emission(r, &obs[t]);
            }
            let z: f64 = next.iter().sum();
            ll += z.ln();
            next.iter_mut().for_each(|v| *v /= z);
            alpha.push(next);
        }
        let mut beta = vec![vec![1.0; m]; t_max + 1];
        for t in (0..t_max).rev() {
            for s in 0..m {
                beta[t][s] = (0..m).map(|r| tr[s][r] * self.emission(r, &obs[t + 1]) * beta[t + 1][r]).sum();
            }
            let z: f64 = beta[t].iter().sum();
            beta[t].iter_mut().for_each(|v| *v /= z);
        }
        let filtered = alpha.iter().map(|a| self.marginals(a)).collect();
        let smoothed = (0..=t_max)
            .map(|t| {
                let g: Vec<f64> = (0..m).map(|s| alpha[t][s] * beta[t][s]).collect();
                let z: f64 = g.iter().sum();
                self.marginals(&g.iter().map(|v| v / z).collect::<Vec<_>>())
            })
            .collect();
        ExactPosterior { filtered, smoothed, log_likelihood: ll }
    }
}
