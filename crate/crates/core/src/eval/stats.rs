use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::observe::{SymptomReport, HEALTHY};
use crate::rng::{stream, tag};
use crate::{Error, Result};

/// Upper tail `P(K > λ)` of the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        let mut s = 0.0;
        for k in 1..=50 {
            let j = (2 * k - 1) as f64;
            s += (-(j * j) * PI * PI / (8.0 * lambda * lambda)).exp();
        }
        return (1.0 - (2.0 * PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        s += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample KS statistic and asymptotic p-value (Stephens' small-sample correction).
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> (f64, f64) {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    (d, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d))
}

/// KS test against Uniform(0, 1).
pub fn ks_uniform(samples: &[f64]) -> (f64, f64) {
    ks_test(samples, |x| x.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub mean: f64,
    pub ks_statistic: f64,
    pub p_value: f64,
}

/// Maximum-likelihood exponential mean, which is the sample mean.
pub fn exponential_mle(durations: &[f64]) -> Result<f64> {
    if durations.is_empty() || durations.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
        return Err(Error::invalid("durations must be positive and finite"));
    }
    Ok(durations.iter().sum::<f64>() / durations.len() as f64)
}

/// Fit an exponential by maximum likelihood and test the fit.
pub fn exponential_fit(durations: &[f64]) -> Result<ExponentialFit> {
    if durations.len() < 5 {
        return Err(Error::invalid(format!("exponential fit needs at least 5 durations, got {}", durations.len())));
    }
    let mean = exponential_mle(durations)?;
    let (d, p) = ks_test(durations, |x| 1.0 - (-x / mean).exp());
    Ok(ExponentialFit { mean, ks_statistic: d, p_value: p })
}

/// Lengths in days of runs of consecutive symptomatic reports per person.
pub fn episode_durations(reports: &[SymptomReport]) -> Vec<f64> {
    let mut by_person: BTreeMap<u32, Vec<(u32, bool)>> = BTreeMap::new();
    for r in reports {
        by_person.entry(r.person).or_default().push((r.day, r.symptoms != HEALTHY));
    }
    let mut out = Vec::new();
    for days in by_person.values_mut() {
        days.sort_unstable();
        let mut run = 0u32;
        let mut last: Option<u32> = None;
        for &(d, sick) in days.iter() {
            let contiguous = last.is_some_and(|l| l + 1 == d);
            if run > 0 && (!sick || !contiguous) {
                out.push(run as f64);
                run = 0;
            }
            if sick {
                run += 1;
            }
            last = Some(d);
        }
        if run > 0 {
            out.push(run as f64);
        }
    }
    out
}

/// Co-location pairs and symptom flags for one day.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DayContacts {
    pub pairs: Vec<(u32, u32)>,
    pub symptomatic: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymptomNetwork {
    pub persons: usize,
    pub days: Vec<DayContacts>,
}

/// All unordered pairs within each group.
pub fn pairs_from_groups(groups: &[Vec<u32>]) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for g in groups {
        for (i, &a) in g.iter().enumerate() {
            for &b in &g[i + 1..] {
                out.push((a.min(b), a.max(b)));
            }
        }
    }
    out
}

impl SymptomNetwork {
    /// Number of co-located pairs with both members symptomatic on the same day,
    /// with person `p`'s labels read from `perm[p]`.
    pub fn statistic(&self, perm: Option<&[u32]>) -> u64 {
        let map = |p: u32| perm.map_or(p, |m| m[p as usize]) as usize;
        self.days
            .iter()
            .map(|d| d.pairs.iter().filter(|&&(a, b)| d.symptomatic[map(a)] && d.symptomatic[map(b)]).count() as u64)
            .sum()
    }

    /// Odds of being symptomatic with vs. without a symptomatic contact, over person-days.
    pub fn odds_ratio(&self) -> f64 {
        let mut c = [[0.5f64; 2]; 2];
        for d in &self.days {
            let mut exposed = vec![false; self.persons];
            for &(a, b) in &d.pairs {
                exposed[a as usize] |= d.symptomatic[b as usize];
                exposed[b as usize] |= d.symptomatic[a as usize];
            }
            for p in 0..self.persons {
                c[usize::from(exposed[p])][usize::from(d.symptomatic[p])] += 1.0;
            }
        }
        (c[1][1] / c[1][0]) / (c[0][1] / c[0][0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub statistic: u64,
    pub p_value: f64,
    pub permutations: usize,
}

/// Shuffle the person-to-node mapping (one shuffle shared across days) and
/// compare the symptomatic-pair count with the observed one.
pub fn permutation_test(net: &SymptomNetwork, n_perm: usize, seed: u64) -> Result<PermutationResult> {
    if n_perm < 100 {
        return Err(Error::invalid(format!("at least 100 permutations are required, got {n_perm}")));
    }
    if net.days.iter().any(|d| d.symptomatic.len() != net.persons) {
        return Err(Error::invalid("symptom labels must cover every person on every day"));
    }
    let observed = net.statistic(None);
    let ge: usize = (0..n_perm)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, tag::PERMUTE, k as u64, 0);
            let mut perm: Vec<u32> = (0..net.persons as u32).collect();
            perm.shuffle(&mut rng);
            usize::from(net.statistic(Some(&perm)) >= observed)
        })
        .sum();
    Ok(PermutationResult { statistic: observed, p_value: (1 + ge) as f64 / (1 + n_perm) as f64, permutations: n_perm })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymptomMatrix {
    pub states: Vec<String>,
    /// Row-stochastic, indexed like `states`.
    pub probs: Vec<Vec<f64>>,
    /// States ordered by mean first-occurrence step in simulated episodes; states
    /// never reached are omitted.
    pub ordering: Vec<(String, f64)>,
}

pub const EPISODES: usize = 10_000;
const EPISODE_CAP: usize = 365;

/// Next-day transition matrix over observed 5-bit states, with `pseudocount`
/// added to every cell. A row with no mass becomes a self-loop.
pub fn symptom_transition_matrix(reports: &[SymptomReport], pseudocount: f64, seed: u64) -> Result<SymptomMatrix> {
    if !(pseudocount >= 0.0 && pseudocount.is_finite()) {
        return Err(Error::invalid("pseudocount must be non-negative"));
    }
    let mut by_key: BTreeMap<(u32, u32), &str> = BTreeMap::new();
    for r in reports {
        by_key.insert((r.person, r.day), &r.symptoms);
    }
    let mut pairs = Vec::new();
    let mut starts = Vec::new();
    for (&(p, d), &s) in &by_key {
        let prev = d.checked_sub(1).and_then(|pd| by_key.get(&(p, pd)));
        if let Some(&ps) = prev {
            pairs.push((ps, s));
        }
        if s != HEALTHY && prev.is_none_or(|&ps| ps == HEALTHY) {
            starts.push(s);
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoConsecutivePairs);
    }
    let states: Vec<String> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect::<BTreeSet<_>>().into_iter().map(String::from).collect();
    let idx = |s: &str| states.binary_search_by(|x| x.as_str().cmp(s)).expect("observed state");
    let n = states.len();
    let mut probs = vec![vec![pseudocount; n]; n];
    for &(a, b) in &pairs {
        probs[idx(a)][idx(b)] += 1.0;
    }
    for (i, row) in probs.iter_mut().enumerate() {
        let s: f64 = row.iter().sum();
        if s == 0.0 {
            row[i] = 1.0;
        } else {
            row.iter_mut().for_each(|x| *x /= s);
        }
    }
    let healthy = states.iter().position(|s| s == HEALTHY);
    let mut start_idx: Vec<usize> = starts.iter().filter(|s| states.binary_search_by(|x| x.as_str().cmp(s)).is_ok()).map(|s| idx(s)).collect();
    if start_idx.is_empty() {
        start_idx = (0..n).filter(|&i| Some(i) != healthy).collect();
    }
    let mut ordering = Vec::new();
    if !start_idx.is_empty() {
        let mut sum = vec![0.0; n];
        let mut hits = vec![0usize; n];
        let mut rng = stream(seed, tag::EXPERIMENT, 0, 0);
        let mut first = vec![usize::MAX; n];
        for _ in 0..EPISODES {
            first.iter_mut().for_each(|f| *f = usize::MAX);
            let mut s = start_idx[rng.random_range(0..start_idx.len())];
            for step in 0..EPISODE_CAP {
                if first[s] == usize::MAX {
                    first[s] = step;
                }
                if Some(s) == healthy {
                    break;
                }
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut next = n - 1;
                for (j, &p) in probs[s].iter().enumerate() {
                    acc += p;
                    if u < acc {
                        next = j;
                        break;
                    }
                }
                s = next;
            }
            for i in 0..n {
                if first[i] != usize::MAX {
                    sum[i] += first[i] as f64;
                    hits[i] += 1;
                }
            }
        }
        ordering = (0..n).filter(|&i| hits[i] > 0).map(|i| (states[i].clone(), sum[i] / hits[i] as f64)).collect();
        ordering.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    }
    Ok(SymptomMatrix { states, probs, ordering })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(person: u32, day: u32, s: &str) -> SymptomReport {
        SymptomReport { day, person, self_sick: s != HEALTHY, nearby_sick: false, symptoms: s.into() }
    }

    #[test]
    fn kolmogorov_tail_values() {
        assert!((kolmogorov_survival(1.36) - 0.0495).abs() < 1e-3);
        assert!((kolmogorov_survival(1.63) - 0.0098).abs() < 1e-3);
        assert!((kolmogorov_survival(0.5) - 0.9639).abs() < 1e-3);
        let a = kolmogorov_survival(0.999_999);
        let b = kolmogorov_survival(1.000_001);
        assert!((a - b).abs() < 1e-5);
    }

    #[test]
    fn mle_is_sample_mean() {
        assert_eq!(exponential_mle(&[2.0, 3.0, 4.0]).unwrap(), 3.0);
        assert!(exponential_fit(&[2.0, 3.0, 4.0]).is_err());
        let f = exponential_fit(&[3.0; 200]).unwrap();
        assert_eq!(f.mean, 3.0);
        assert!(f.p_value < 0.01);
    }

    #[test]
    fn identical_labels_give_p_one() {
        let day = DayContacts { pairs: vec![(0, 1), (1, 2)], symptomatic: vec![true; 4] };
        let net = SymptomNetwork { persons: 4, days: vec![day] };
        let r = permutation_test(&net, 100, 1).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(permutation_test(&net, 99, 1).is_err());
    }

    #[test]
    fn constant_subject_gives_unit_matrix() {
        let reports: Vec<_> = (0..5).map(|d| rep(0, d, HEALTHY)).collect();
        let m = symptom_transition_matrix(&reports, 1.0, 0).unwrap();
        assert_eq!(m.states, vec![HEALTHY.to_string()]);
        assert_eq!(m.probs, vec![vec![1.0]]);
        assert!(matches!(symptom_transition_matrix(&reports[..1], 1.0, 0), Err(Error::NoConsecutivePairs)));
    }

    #[test]
    fn deterministic_sequence_without_smoothing() {
        let seq = ["01000", "00100", "00000"];
        let reports: Vec<_> = (0..12).map(|d| rep(0, d, seq[d as usize % 3])).collect();
        let m = symptom_transition_matrix(&reports, 0.0, 0).unwrap();
        let i = |s: &str| m.states.iter().position(|x| x == s).unwrap();
        assert_eq!(m.probs[i("01000")][i("00100")], 1.0);
        assert_eq!(m.probs[i("00100")][i("00000")], 1.0);
        let order: Vec<&str> = m.ordering.iter().map(|(s, _)| s.as_str()).collect();
        assert_eq!(order, vec!["01000", "00100", "00000"]);
    }

    #[test]
    fn episodes_split_on_gaps_and_recovery() {
        let r = vec![rep(0, 0, "10000"), rep(0, 1, "10000"), rep(0, 2, HEALTHY), rep(0, 3, "01000"), rep(0, 5, "01000")];
        assert_eq!(episode_durations(&r), vec![2.0, 1.0, 1.0]);
    }
}
