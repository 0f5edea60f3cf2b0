//! Markovian location dynamics with time-bucketed rates.
//!
//! Time is measured in hours from Monday 00:00.

use std::io::{Read, Write};

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub id: usize,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BucketScheme {
    /// One rate matrix for all times.
    Constant,
    /// 24 hour-of-day buckets for weekdays followed by 24 for weekends.
    HourOfWeek,
}

impl BucketScheme {
    pub fn count(self) -> usize {
        match self {
            BucketScheme::Constant => 1,
            BucketScheme::HourOfWeek => 48,
        }
    }

    pub fn bucket_of(self, time: f64) -> usize {
        match self {
            BucketScheme::Constant => 0,
            BucketScheme::HourOfWeek => {
                let h = (time + EPS).floor().max(0.0) as u64;
                let day = (h / 24) % 7;
                (h % 24) as usize + if day >= 5 { 24 } else { 0 }
            }
        }
    }

    /// End of the bucket interval containing `time`.
    fn boundary_after(self, time: f64) -> f64 {
        match self {
            BucketScheme::Constant => f64::INFINITY,
            BucketScheme::HourOfWeek => (time + EPS).floor() + 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityParams {
    pub locations: Vec<Location>,
    pub scheme: BucketScheme,
    /// `rates[bucket][i * L + j]`, events per hour.
    pub rates: Vec<Vec<f64>>,
}

impl MobilityParams {
    pub fn new(locations: Vec<Location>, scheme: BucketScheme, rates: Vec<Vec<f64>>) -> Result<Self> {
        let p = MobilityParams { locations, scheme, rates };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(n: usize, scheme: BucketScheme) -> Self {
        MobilityParams { locations: default_locations(n), scheme, rates: vec![vec![0.0; n * n]; scheme.count()] }
    }

    /// Constant-in-time params from a dense matrix.
    pub fn constant(matrix: &[Vec<f64>]) -> Result<Self> {
        let n = matrix.len();
        let flat = matrix.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(default_locations(n), BucketScheme::Constant, vec![flat])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.locations.len();
        for (i, l) in self.locations.iter().enumerate() {
            if l.id != i {
                return Err(Error::invalid("location ids must be contiguous from 0"));
            }
            if self.locations[..i].iter().any(|o| o.name == l.name) {
                return Err(Error::invalid(format!("duplicate location name {}", l.name)));
            }
        }
        if n > u16::MAX as usize {
            return Err(Error::invalid("too many locations"));
        }
        if self.rates.len() != self.scheme.count() {
            return Err(Error::invalid("bucket count does not match the scheme"));
        }
        for m in &self.rates {
            if m.len() != n * n {
                return Err(Error::invalid("rate matrix has wrong size"));
            }
            for i in 0..n {
                if m[i * n + i] != 0.0 {
                    return Err(Error::invalid("rate matrix diagonal must be zero"));
                }
            }
            if m.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) {
                return Err(Error::invalid("rates must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    pub fn num_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn rate(&self, bucket: usize, i: usize, j: usize) -> f64 {
        self.rates[bucket][i * self.locations.len() + j]
    }

    pub fn row(&self, bucket: usize, i: usize) -> &[f64] {
        let n = self.locations.len();
        &self.rates[bucket][i * n..(i + 1) * n]
    }

    pub fn row_sum(&self, bucket: usize, i: usize) -> f64 {
        self.row(bucket, i).iter().sum()
    }

    pub fn max_row_sum(&self) -> f64 {
        (0..self.rates.len())
            .flat_map(|b| (0..self.locations.len()).map(move |i| (b, i)))
            .map(|(b, i)| self.row_sum(b, i))
            .fold(0.0, f64::max)
    }

    /// Fails when some row would move with probability above one in a step.
    pub fn check_step(&self, tau: f64) -> Result<()> {
        let m = self.max_row_sum();
        if m * tau > 1.0 + 1e-12 {
            return Err(Error::StepTooCoarse { total_hazard: m, gamma: 1.0 / tau });
        }
        Ok(())
    }
}

pub fn default_locations(n: usize) -> Vec<Location> {
    (0..n).map(|id| Location { id, name: format!("L{id}") }).collect()
}

pub fn dwell_time_mean(params: &MobilityParams, bucket: usize, i: usize) -> f64 {
    let s = params.row_sum(bucket, i);
    if s > 0.0 {
        1.0 / s
    } else {
        f64::INFINITY
    }
}

pub fn next_location_distribution(params: &MobilityParams, bucket: usize, i: usize) -> Result<Vec<f64>> {
    let s = params.row_sum(bucket, i);
    if s <= 0.0 {
        return Err(Error::AbsorbingLocation(i));
    }
    Ok(params.row(bucket, i).iter().map(|r| r / s).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Move {
    pub person: u32,
    pub from: u16,
    pub to: u16,
}

#[derive(Debug, Clone)]
struct BucketKernel {
    p_max: f64,
    ln_skip: f64,
    move_prob: Vec<f64>,
    cumulative: Vec<f64>,
}

/// Per-step movement sampler for a fixed step length.
///
/// Persons move independently with probability `row_sum · τ`; candidates are
/// visited by geometric skipping at the bucket's largest move probability and
/// thinned to their own row.
#[derive(Debug, Clone)]
pub struct MobilityKernel {
    scheme: BucketScheme,
    tau: f64,
    n: usize,
    buckets: Vec<BucketKernel>,
}

impl MobilityKernel {
    pub fn new(params: &MobilityParams, tau: f64) -> Result<Self> {
        params.check_step(tau)?;
        let n = params.num_locations();
        let buckets = (0..params.rates.len())
            .map(|b| {
                let move_prob: Vec<f64> = (0..n).map(|i| params.row_sum(b, i) * tau).collect();
                let p_max = move_prob.iter().copied().fold(0.0, f64::max);
                let mut cumulative = vec![0.0; n * n];
                for i in 0..n {
                    let s = params.row_sum(b, i);
                    let mut acc = 0.0;
                    for j in 0..n {
                        if s > 0.0 {
                            acc += params.rate(b, i, j) / s;
                        }
                        cumulative[i * n + j] = acc;
                    }
                }
                BucketKernel { p_max, ln_skip: (1.0 - p_max).ln(), move_prob, cumulative }
            })
            .collect();
        Ok(MobilityKernel { scheme: params.scheme, tau, n, buckets })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn scheme(&self) -> BucketScheme {
        self.scheme
    }

    /// Bucket governing step `t` (the interval from `(t-1)τ` to `tτ`).
    pub fn bucket_for_step(&self, t: u64) -> usize {
        self.scheme.bucket_of((t.saturating_sub(1)) as f64 * self.tau)
    }

    /// Sample this step's moves from the positions in `loc` and apply them.
    /// Persons with `frozen[p]` set are skipped.
    pub fn step<R: Rng + ?Sized>(&self, bucket: usize, loc: &mut [u16], frozen: Option<&[bool]>, rng: &mut R, out: &mut Vec<Move>) {
        let bk = &self.buckets[bucket];
        if bk.p_max <= 0.0 {
            return;
        }
        let persons = loc.len();
        let mut next: usize = 0;
        loop {
            if bk.p_max < 1.0 {
                let u: f64 = 1.0 - rng.random::<f64>();
                let skip = (u.ln() / bk.ln_skip).floor();
                if skip >= (persons - next) as f64 {
                    break;
                }
                next += skip as usize;
            }
            if next >= persons {
                break;
            }
            let p = next;
            next += 1;
            if frozen.is_some_and(|f| f[p]) {
                continue;
            }
            let from = loc[p] as usize;
            let accept = bk.move_prob[from] / bk.p_max;
            if accept < 1.0 && rng.random::<f64>() >= accept {
                continue;
            }
            let row = &bk.cumulative[from * self.n..(from + 1) * self.n];
            let u: f64 = rng.random();
            let mut to = row.partition_point(|&c| c <= u);
            if to >= self.n || to == from {
                // Rounding at the top of the cumulative row.
                to = (0..self.n).rev().find(|&j| j != from && row[j] > if j == 0 { 0.0 } else { row[j - 1] }).unwrap_or(from);
            }
            if to != from {
                loc[p] = to as u16;
                out.push(Move { person: p as u32, from: from as u16, to: to as u16 });
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub person: u32,
    pub enter_time: f64,
    pub exit_time: f64,
    pub location: u16,
}

/// Turns a stream of moves into visit intervals.
#[derive(Debug, Clone)]
pub struct VisitRecorder {
    current: Vec<(u16, f64)>,
    visits: Vec<Visit>,
}

impl VisitRecorder {
    pub fn new(initial: &[u16], start: f64) -> Self {
        VisitRecorder { current: initial.iter().map(|&l| (l, start)).collect(), visits: Vec::new() }
    }

    pub fn record(&mut self, person: u32, to: u16, time: f64) {
        let (from, since) = self.current[person as usize];
        self.visits.push(Visit { person, enter_time: since, exit_time: time, location: from });
        self.current[person as usize] = (to, time);
    }

    /// Close all open visits at `horizon`; visits come out sorted by person then time.
    pub fn finish(mut self, horizon: f64) -> Vec<Visit> {
        for (p, &(l, since)) in self.current.iter().enumerate() {
            if horizon > since {
                self.visits.push(Visit { person: p as u32, enter_time: since, exit_time: horizon, location: l });
            }
        }
        self.visits.sort_by(|a, b| a.person.cmp(&b.person).then(a.enter_time.total_cmp(&b.enter_time)));
        self.visits
    }
}

#[derive(Debug, Clone)]
pub struct MobilityRun {
    pub visits: Vec<Visit>,
    pub final_locations: Vec<u16>,
}

/// Simulate movement for `steps` steps; `on_step(t, locations)` sees the assignment
/// after each step (and once with `t = 0` before the first).
pub fn simulate_mobility<R: Rng + ?Sized, F: FnMut(u64, &[u16])>(
    initial: &[u16],
    params: &MobilityParams,
    steps: u64,
    tau: f64,
    rng: &mut R,
    mut on_step: F,
) -> Result<MobilityRun> {
    let n = params.num_locations();
    if let Some(&bad) = initial.iter().find(|&&l| l as usize >= n) {
        return Err(Error::invalid(format!("initial location {bad} out of range")));
    }
    let kernel = MobilityKernel::new(params, tau)?;
    let mut loc = initial.to_vec();
    let mut rec = VisitRecorder::new(initial, 0.0);
    let mut moves = Vec::new();
    on_step(0, &loc);
    for t in 1..=steps {
        moves.clear();
        kernel.step(kernel.bucket_for_step(t), &mut loc, None, rng, &mut moves);
        let time = t as f64 * tau;
        for m in &moves {
            rec.record(m.person, m.to, time);
        }
        on_step(t, &loc);
    }
    Ok(MobilityRun { visits: rec.finish(steps as f64 * tau), final_locations: loc })
}

#[derive(Debug, Clone)]
pub struct RateEstimate {
    pub params: MobilityParams,
    /// Total person-hours per bucket and location.
    pub exposure: Vec<Vec<f64>>,
    /// Transition counts per bucket, flattened like the rates.
    pub counts: Vec<Vec<f64>>,
    /// (bucket, location) rows with no exposure.
    pub flagged: Vec<(usize, usize)>,
}

/// Maximum-likelihood rates: transitions counted per bucket over person-time at the origin.
pub fn estimate_rates(visits: &[Visit], locations: usize, scheme: BucketScheme) -> Result<RateEstimate> {
    let nb = scheme.count();
    let mut exposure = vec![vec![0.0; locations]; nb];
    let mut counts = vec![vec![0.0; locations * locations]; nb];
    let mut sorted: Vec<&Visit> = visits.iter().collect();
    sorted.sort_by(|a, b| a.person.cmp(&b.person).then(a.enter_time.total_cmp(&b.enter_time)));
    for (k, v) in sorted.iter().enumerate() {
        let l = v.location as usize;
        if l >= locations {
            return Err(Error::invalid(format!("visit location {l} out of range")));
        }
        if v.exit_time < v.enter_time {
            return Err(Error::invalid(format!("visit of person {} ends before it starts", v.person)));
        }
        let mut t = v.enter_time;
        while t < v.exit_time - EPS {
            let b = scheme.bucket_of(t);
            let end = scheme.boundary_after(t).min(v.exit_time);
            exposure[b][l] += end - t;
            t = end;
        }
        if let Some(next) = sorted.get(k + 1) {
            if next.person == v.person && (next.enter_time - v.exit_time).abs() < 1e-6 && next.location != v.location {
                let b = scheme.bucket_of(v.exit_time - 1e-6);
                counts[b][l * locations + next.location as usize] += 1.0;
            }
        }
    }
    let mut rates = vec![vec![0.0; locations * locations]; nb];
    let mut flagged = Vec::new();
    for b in 0..nb {
        for i in 0..locations {
            if exposure[b][i] <= 0.0 {
                flagged.push((b, i));
                continue;
            }
            for j in 0..locations {
                rates[b][i * locations + j] = counts[b][i * locations + j] / exposure[b][i];
            }
        }
    }
    if !flagged.is_empty() {
        warn!("{} bucket rows have no exposure and were left at zero", flagged.len());
    }
    let params = MobilityParams::new(default_locations(locations), scheme, rates)?;
    Ok(RateEstimate { params, exposure, counts, flagged })
}

/// Clustered campus: locations grouped into clusters with frequent moves inside a
/// cluster and rare moves between clusters. Rates are scaled down at night and
/// on weekends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampusSpec {
    pub clusters: usize,
    pub per_cluster: usize,
    /// Total hourly rate of moving to another location in the same cluster.
    pub within_rate: f64,
    /// Total hourly rate of moving to a location in another cluster.
    pub cross_rate: f64,
    /// Multiplier applied from 22:00 to 07:00.
    pub night_factor: f64,
    pub weekend_factor: f64,
}

impl CampusSpec {
    pub fn locations(&self) -> usize {
        self.clusters * self.per_cluster
    }

    pub fn cluster_of(&self, loc: usize) -> usize {
        loc / self.per_cluster
    }

    pub fn build(&self) -> Result<MobilityParams> {
        let n = self.locations();
        let names = (0..n)
            .map(|id| Location { id, name: format!("c{}_{}", id / self.per_cluster, id % self.per_cluster) })
            .collect();
        let mut base = vec![0.0; n * n];
        for i in 0..n {
            let ci = self.cluster_of(i);
            let inside = self.per_cluster.saturating_sub(1);
            let outside = n - self.per_cluster;
            for j in 0..n {
                if i == j {
                    continue;
                }
                base[i * n + j] = if self.cluster_of(j) == ci {
                    if inside > 0 {
                        self.within_rate / inside as f64
                    } else {
                        0.0
                    }
                } else if outside > 0 {
                    self.cross_rate / outside as f64
                } else {
                    0.0
                };
            }
        }
        let rates = (0..48)
            .map(|b| {
                let hour = b % 24;
                let mut f = if !(7..22).contains(&hour) { self.night_factor } else { 1.0 };
                if b >= 24 {
                    f *= self.weekend_factor;
                }
                base.iter().map(|r| r * f).collect()
            })
            .collect();
        MobilityParams::new(names, BucketScheme::HourOfWeek, rates)
    }
}

pub fn write_visits<W: Write>(visits: &[Visit], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["person", "enter_time", "exit_time", "location"])?;
    for v in visits {
        w.write_record([v.person.to_string(), v.enter_time.to_string(), v.exit_time.to_string(), v.location.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_visits<R: Read>(input: R) -> Result<Vec<Visit>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Rate tables as CSV `bucket,from,to,rate` (nonzero entries only).
pub fn write_rates<W: Write>(params: &MobilityParams, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["bucket", "from", "to", "rate"])?;
    let n = params.num_locations();
    for (b, m) in params.rates.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                if m[i * n + j] > 0.0 {
                    w.write_record([b.to_string(), i.to_string(), j.to_string(), m[i * n + j].to_string()])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn dwell_and_next() {
        let p = MobilityParams::constant(&[vec![0.0, 0.2, 0.3], vec![0.0; 3], vec![1.0, 0.0, 0.0]]).unwrap();
        assert!((dwell_time_mean(&p, 0, 0) - 2.0).abs() < 1e-12);
        assert_eq!(dwell_time_mean(&p, 0, 1), f64::INFINITY);
        assert!((dwell_time_mean(&p, 0, 2) - 1.0).abs() < 1e-12);
        let d = next_location_distribution(&p, 0, 0).unwrap();
        assert!((d[1] - 0.4).abs() < 1e-12 && (d[2] - 0.6).abs() < 1e-12);
        assert_eq!(next_location_distribution(&p, 0, 2).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(matches!(next_location_distribution(&p, 0, 1), Err(Error::AbsorbingLocation(1))));
        let u = MobilityParams::constant(&[vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]]).unwrap();
        assert_eq!(next_location_distribution(&u, 0, 0).unwrap(), vec![0.0, 0.5, 0.5]);
    }

    #[test]
    fn buckets() {
        let s = BucketScheme::HourOfWeek;
        assert_eq!(s.bucket_of(0.0), 0);
        assert_eq!(s.bucket_of(13.5), 13);
        assert_eq!(s.bucket_of(5.0 * 24.0 + 2.0), 26);
        assert_eq!(s.bucket_of(7.0 * 24.0 + 1.0), 1);
        assert_eq!(BucketScheme::Constant.bucket_of(99.0), 0);
    }

    #[test]
    fn coarse_step_rejected() {
        let p = MobilityParams::constant(&[vec![0.0, 3.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(MobilityKernel::new(&p, 0.5), Err(Error::StepTooCoarse { .. })));
    }

    #[test]
    fn zero_rates_stay_put() {
        let p = MobilityParams::zeros(3, BucketScheme::Constant);
        let mut r = stream(1, 0, 0, 0);
        let mut seen = Vec::new();
        let run = simulate_mobility(&[0, 1, 2, 2], &p, 50, 0.1, &mut r, |_, l| seen.push(l.to_vec())).unwrap();
        assert!(seen.iter().all(|l| l == &vec![0, 1, 2, 2]));
        assert_eq!(run.visits.len(), 4);
    }

    #[test]
    fn estimate_count_over_exposure() {
        let mut visits = Vec::new();
        // Five trips A -> B, two hours at A each time.
        for k in 0..5 {
            let t0 = k as f64 * 3.0;
            visits.push(Visit { person: 0, enter_time: t0, exit_time: t0 + 2.0, location: 0 });
            visits.push(Visit { person: 0, enter_time: t0 + 2.0, exit_time: t0 + 3.0, location: 1 });
        }
        let est = estimate_rates(&visits, 3, BucketScheme::Constant).unwrap();
        assert!((est.params.rate(0, 0, 1) - 0.5).abs() < 1e-12);
        assert!((est.exposure[0][0] - 10.0).abs() < 1e-12);
        assert_eq!(est.flagged, vec![(0, 2)]);
        // B -> A happened 4 times over 5 hours.
        assert!((est.params.rate(0, 1, 0) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn campus_structure() {
        let spec = CampusSpec { clusters: 3, per_cluster: 2, within_rate: 1.0, cross_rate: 0.2, night_factor: 0.1, weekend_factor: 0.5 };
        let p = spec.build().unwrap();
        assert!((p.row_sum(12, 0) - 1.2).abs() < 1e-12);
        assert!((p.row_sum(2, 0) - 0.12).abs() < 1e-12);
        assert!((p.row_sum(36, 0) - 0.6).abs() < 1e-12);
        assert!((p.rate(12, 0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn visits_csv_roundtrip() {
        let v = vec![Visit { person: 2, enter_time: 0.0, exit_time: 1.5, location: 3 }];
        let mut buf = Vec::new();
        write_visits(&v, &mut buf).unwrap();
        assert_eq!(read_visits(&buf[..]).unwrap(), v);
    }
}
