//! Volunteer observations: device-count scans and daily symptom reports.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::epidemic::HealthState;
use crate::mobility::Visit;
use crate::rng::{stream, tag};
use crate::world::{Contacts, WorldModel, WorldState, WorldTrajectory};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolunteerPanel {
    pub population: u32,
    pub volunteers: Vec<u32>,
    pub discoverable: Vec<u32>,
    /// Probability that a volunteer files the daily report.
    pub compliance: f64,
}

impl VolunteerPanel {
    pub fn new(population: u32, mut volunteers: Vec<u32>, mut discoverable: Vec<u32>, compliance: f64) -> Result<Self> {
        volunteers.sort_unstable();
        volunteers.dedup();
        discoverable.sort_unstable();
        discoverable.dedup();
        if volunteers.iter().chain(&discoverable).any(|&p| p >= population) {
            return Err(Error::invalid("panel member outside the population"));
        }
        if !(0.0..=1.0).contains(&compliance) {
            return Err(Error::invalid(format!("compliance {compliance} outside [0,1]")));
        }
        Ok(VolunteerPanel { population, volunteers, discoverable, compliance })
    }

    /// Total population `x0`.
    pub fn x0(&self) -> u32 {
        self.population
    }

    /// Number of discoverable devices `y0`.
    pub fn y0(&self) -> u32 {
        self.discoverable.len() as u32
    }

    pub fn volunteer_mask(&self) -> Vec<bool> {
        mask(self.population as usize, &self.volunteers)
    }

    pub fn discoverable_mask(&self) -> Vec<bool> {
        mask(self.population as usize, &self.discoverable)
    }

    pub fn with_volunteers(&self, volunteers: Vec<u32>) -> Result<Self> {
        Self::new(self.population, volunteers, self.discoverable.clone(), self.compliance)
    }
}

fn mask(n: usize, ids: &[u32]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &p in ids {
        m[p as usize] = true;
    }
    m
}

/// A random ordering of the population; volunteer panels of any size are
/// prefixes of it, so smaller panels nest inside larger ones.
pub fn volunteer_order<R: Rng + ?Sized>(population: u32, rng: &mut R) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..population).collect();
    ids.shuffle(rng);
    ids
}

/// Each person is discoverable independently with probability `fraction`.
pub fn sample_discoverable<R: Rng + ?Sized>(population: u32, fraction: f64, rng: &mut R) -> Vec<u32> {
    (0..population).filter(|_| rng.random::<f64>() < fraction).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanObservation {
    pub t: u64,
    pub location: u16,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymptomReport {
    pub day: u32,
    pub person: u32,
    pub self_sick: bool,
    pub nearby_sick: bool,
    /// Fever, runny nose, coughing, sore throat, nausea as a 0/1 string.
    pub symptoms: String,
}

pub const HEALTHY: &str = "00000";

pub fn valid_symptoms(s: &str) -> bool {
    s.len() == 5 && s.bytes().all(|b| b == b'0' || b == b'1')
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionNoise {
    /// P(self_sick | infectious)
    pub sensitivity: f64,
    /// P(not self_sick | susceptible)
    pub specificity: f64,
    /// P(nearby_sick | some infectious contact)
    pub nearby_sensitivity: f64,
    /// P(not nearby_sick | no infectious contact)
    pub nearby_specificity: f64,
}

impl Default for EmissionNoise {
    fn default() -> Self {
        EmissionNoise { sensitivity: 0.8, specificity: 0.98, nearby_sensitivity: 0.5, nearby_specificity: 0.98 }
    }
}

impl EmissionNoise {
    pub fn noiseless() -> Self {
        EmissionNoise { sensitivity: 1.0, specificity: 1.0, nearby_sensitivity: 1.0, nearby_specificity: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.sensitivity, self.specificity, self.nearby_sensitivity, self.nearby_specificity] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("emission probability {v} outside [0,1]")));
            }
        }
        Ok(())
    }
}

/// Log of `C(x_loc, y)·C(x0 − x_loc, y0 − y) / C(x0, y0)`.
pub fn bluetooth_log_likelihood(y_loc: u32, x_loc: u32, x0: u32, y0: u32) -> Result<f64> {
    if y_loc > y0 || y0 > x0 || x_loc > x0 {
        return Err(Error::Domain(format!("need y_loc ≤ y0 ≤ x0 and x_loc ≤ x0; got y_loc={y_loc} x_loc={x_loc} x0={x0} y0={y0}")));
    }
    if y_loc > x_loc || y0 - y_loc > x0 - x_loc {
        return Ok(f64::NEG_INFINITY);
    }
    let (y_loc, x_loc, x0, y0) = (y_loc as u64, x_loc as u64, x0 as u64, y0 as u64);
    Ok(ln_binomial(x_loc, y_loc) + ln_binomial(x0 - x_loc, y0 - y_loc) - ln_binomial(x0, y0))
}

pub fn bluetooth_likelihood(y_loc: u32, x_loc: u32, x0: u32, y0: u32) -> Result<f64> {
    Ok(bluetooth_log_likelihood(y_loc, x_loc, x0, y0)?.exp())
}

/// Probability of a report given the reporter's health and whether any contact is infectious.
/// A missing report has probability one.
pub fn symptom_likelihood(report: Option<&SymptomReport>, own: HealthState, contact_infectious: bool, noise: &EmissionNoise) -> f64 {
    let Some(r) = report else { return 1.0 };
    let p_self = match (own.is_infectious(), r.self_sick) {
        (true, true) => noise.sensitivity,
        (true, false) => 1.0 - noise.sensitivity,
        (false, true) => 1.0 - noise.specificity,
        (false, false) => noise.specificity,
    };
    let p_near = match (contact_infectious, r.nearby_sick) {
        (true, true) => noise.nearby_sensitivity,
        (true, false) => 1.0 - noise.nearby_sensitivity,
        (false, true) => 1.0 - noise.nearby_specificity,
        (false, false) => noise.nearby_specificity,
    };
    p_self * p_near
}

/// Whether someone other than `p` in contact with `p` is infectious.
pub fn contact_infectious(model: &WorldModel, state: &WorldState, p: usize) -> bool {
    match &model.contacts {
        Contacts::CoLocation => {
            let own = u32::from(state.health[p].is_infectious());
            state.infectious_at(state.loc[p] as usize) > own
        }
        Contacts::Fixed(net) => net.adjacency[p].iter().any(|&q| state.health[q as usize].is_infectious()),
    }
}

/// Observations attached to one step.
#[derive(Debug, Clone, Copy, Default)]
pub struct ObsAt<'a> {
    pub scans: &'a [ScanObservation],
    pub reports: &'a [SymptomReport],
}

impl ObsAt<'_> {
    pub fn is_empty(&self) -> bool {
        self.scans.is_empty() && self.reports.is_empty()
    }
}

pub fn observation_log_likelihood(model: &WorldModel, state: &WorldState, obs: &ObsAt<'_>, noise: &EmissionNoise, panel: &VolunteerPanel) -> f64 {
    let mut ll = 0.0;
    for s in obs.scans {
        match bluetooth_log_likelihood(s.count, state.population_at(s.location as usize), panel.x0(), panel.y0()) {
            Ok(v) => ll += v,
            Err(_) => return f64::NEG_INFINITY,
        }
    }
    for r in obs.reports {
        let p = r.person as usize;
        let lk = symptom_likelihood(Some(r), state.health[p], contact_infectious(model, state, p), noise);
        ll += lk.ln();
    }
    ll
}

/// Scans, daily reports and volunteer location traces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationLog {
    pub scans: Vec<ScanObservation>,
    pub reports: Vec<SymptomReport>,
    pub volunteer_visits: Vec<Visit>,
}

impl ObservationLog {
    pub fn sort(&mut self) {
        self.scans.sort_by_key(|s| (s.t, s.location));
        self.reports.sort_by_key(|r| (r.day, r.person));
        self.volunteer_visits
            .sort_by(|a, b| a.person.cmp(&b.person).then(a.enter_time.total_cmp(&b.enter_time)));
    }

    pub fn is_empty(&self) -> bool {
        self.scans.is_empty() && self.reports.is_empty()
    }

    /// Step at which a day's reports are scored: the end of that day.
    pub fn report_step(day: u32, steps_per_day: u64) -> u64 {
        (day as u64 + 1) * steps_per_day
    }

    /// Last step carrying an observation.
    pub fn last_step(&self, steps_per_day: u64) -> u64 {
        let s = self.scans.iter().map(|s| s.t).max().unwrap_or(0);
        let r = self.reports.iter().map(|r| Self::report_step(r.day, steps_per_day)).max().unwrap_or(0);
        s.max(r)
    }
}

/// Step-indexed view of a sorted [`ObservationLog`].
pub struct ObsIndex<'a> {
    log: &'a ObservationLog,
    steps_per_day: u64,
}

impl<'a> ObsIndex<'a> {
    pub fn new(log: &'a ObservationLog, steps_per_day: u64) -> Result<Self> {
        let sorted_scans = log.scans.windows(2).all(|w| (w[0].t, w[0].location) <= (w[1].t, w[1].location));
        let sorted_reports = log.reports.windows(2).all(|w| (w[0].day, w[0].person) <= (w[1].day, w[1].person));
        if !sorted_scans || !sorted_reports {
            return Err(Error::invalid("observation log must be sorted"));
        }
        Ok(ObsIndex { log, steps_per_day })
    }

    pub fn at(&self, t: u64) -> ObsAt<'a> {
        let scans = &self.log.scans;
        let a = scans.partition_point(|s| s.t < t);
        let b = a + scans[a..].partition_point(|s| s.t == t);
        let mut out = ObsAt { scans: &scans[a..b], reports: &[] };
        if t > 0 && t % self.steps_per_day == 0 {
            let day = (t / self.steps_per_day - 1) as u32;
            let reps = &self.log.reports;
            let a = reps.partition_point(|r| r.day < day);
            let b = a + reps[a..].partition_point(|r| r.day == day);
            out.reports = &reps[a..b];
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    /// Scans happen every this many steps.
    pub scan_every: u64,
    pub steps_per_day: u64,
}

const PROGRESSION: [&str; 5] = ["11000", "11100", "01110", "00110", "00010"];

fn sick_symptoms<R: Rng + ?Sized>(days_sick: u64, rng: &mut R) -> String {
    let base = PROGRESSION[(days_sick as usize).min(PROGRESSION.len() - 1)].as_bytes();
    let mut s: Vec<u8> = base.to_vec();
    // Occasionally drop a symptom, but never all of them.
    let i = rng.random_range(0..5);
    if s[i] == b'1' && s.iter().filter(|&&b| b == b'1').count() > 1 && rng.random::<f64>() < 0.2 {
        s[i] = b'0';
    }
    String::from_utf8(s).expect("ascii")
}

/// Generate what a panel would observe along a ground-truth path.
///
/// Each (person, day) report draws from its own stream, so nested panels see
/// identical reports for shared volunteers.
pub fn synthesize_observations(
    model: &WorldModel,
    truth: &WorldTrajectory,
    panel: &VolunteerPanel,
    noise: &EmissionNoise,
    opts: &SynthOptions,
    seed: u64,
) -> Result<ObservationLog> {
    noise.validate()?;
    if opts.scan_every == 0 || opts.steps_per_day == 0 {
        return Err(Error::invalid("scan interval and steps per day must be positive"));
    }
    let vmask = panel.volunteer_mask();
    let n_loc = model.locations();
    let mut log = ObservationLog::default();
    let mut onset: Vec<u64> = vec![0; model.persons];
    let mut prev: Vec<HealthState> = truth.initial.health.clone();
    let mut occupied = vec![false; n_loc];
    let mut counts = vec![0u32; n_loc];
    truth.replay(|t, s| {
        for p in 0..s.persons() {
            if s.health[p] != prev[p] {
                if s.health[p].is_infectious() {
                    onset[p] = t;
                }
                prev[p] = s.health[p];
            }
        }
        if t == 0 {
            return;
        }
        if t % opts.scan_every == 0 && matches!(model.contacts, Contacts::CoLocation) {
            occupied.iter_mut().for_each(|o| *o = false);
            counts.iter_mut().for_each(|c| *c = 0);
            for &v in &panel.volunteers {
                occupied[s.loc[v as usize] as usize] = true;
            }
            for &d in &panel.discoverable {
                counts[s.loc[d as usize] as usize] += 1;
            }
            for l in 0..n_loc {
                if occupied[l] {
                    log.scans.push(ScanObservation { t, location: l as u16, count: counts[l] });
                }
            }
        }
        if t % opts.steps_per_day == 0 {
            let day = (t / opts.steps_per_day - 1) as u32;
            for &v in &panel.volunteers {
                let p = v as usize;
                let mut rng = stream(seed, tag::OBSERVE, day as u64, v as u64);
                if rng.random::<f64>() >= panel.compliance {
                    continue;
                }
                let inf = s.health[p].is_infectious();
                let self_sick = rng.random::<f64>() < if inf { noise.sensitivity } else { 1.0 - noise.specificity };
                let near = contact_infectious(model, s, p);
                let nearby_sick = rng.random::<f64>() < if near { noise.nearby_sensitivity } else { 1.0 - noise.nearby_specificity };
                let symptoms = if !self_sick {
                    HEALTHY.to_string()
                } else if inf {
                    sick_symptoms((t - onset[p]) / opts.steps_per_day, &mut rng)
                } else {
                    let mut b = *b"00000";
                    b[rng.random_range(0..5)] = b'1';
                    String::from_utf8(b.to_vec()).expect("ascii")
                };
                log.reports.push(SymptomReport { day, person: v, self_sick, nearby_sick, symptoms });
            }
        }
    });
    log.volunteer_visits = truth.visits(model.tau).into_iter().filter(|v| vmask[v.person as usize]).collect();
    log.sort();
    Ok(log)
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

pub fn write_scans<W: Write>(scans: &[ScanObservation], out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["t", "location", "count"])?;
    for s in scans {
        w.write_record([s.t.to_string(), s.location.to_string(), s.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scans<R: Read>(input: R) -> Result<Vec<ScanObservation>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}

pub fn write_reports<W: Write>(reports: &[SymptomReport], out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["day", "person", "self_sick", "nearby_sick", "symptoms"])?;
    for r in reports {
        w.write_record([
            r.day.to_string(),
            r.person.to_string(),
            u8::from(r.self_sick).to_string(),
            u8::from(r.nearby_sick).to_string(),
            r.symptoms.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_reports<R: Read>(input: R) -> Result<Vec<SymptomReport>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::invalid(format!("reports row {}: bad {what}", i + 2));
        let flag = |s: &str, what: &str| match s {
            "0" | "false" => Ok(false),
            "1" | "true" => Ok(true),
            _ => Err(bad(what)),
        };
        if rec.len() != 5 {
            return Err(bad("column count"));
        }
        let symptoms = rec[4].to_string();
        if !valid_symptoms(&symptoms) {
            return Err(bad("symptoms string"));
        }
        out.push(SymptomReport {
            day: rec[0].parse().map_err(|_| bad("day"))?,
            person: rec[1].parse().map_err(|_| bad("person"))?,
            self_sick: flag(&rec[2], "self_sick")?,
            nearby_sick: flag(&rec[3], "nearby_sick")?,
            symptoms,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hypergeometric_examples() {
        let p = bluetooth_likelihood(2, 5, 10, 4).unwrap();
        assert!((p - 100.0 / 210.0).abs() < 1e-12);
        assert!((bluetooth_likelihood(0, 0, 10, 4).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(bluetooth_likelihood(3, 2, 10, 4).unwrap(), 0.0);
        assert!(bluetooth_likelihood(5, 2, 10, 4).is_err());
        assert!(bluetooth_likelihood(1, 2, 10, 11).is_err());
    }

    #[test]
    fn symptom_examples() {
        let r = SymptomReport { day: 0, person: 0, self_sick: true, nearby_sick: false, symptoms: "10000".into() };
        let exact = EmissionNoise::noiseless();
        assert_eq!(symptom_likelihood(Some(&r), HealthState::Infectious, false, &exact), 1.0);
        let noisy = EmissionNoise { sensitivity: 0.8, specificity: 0.95, nearby_sensitivity: 0.5, nearby_specificity: 1.0 };
        assert!((symptom_likelihood(Some(&r), HealthState::Susceptible, false, &noisy) - 0.05).abs() < 1e-12);
        assert_eq!(symptom_likelihood(None, HealthState::Susceptible, true, &noisy), 1.0);
    }

    #[test]
    fn reports_csv_roundtrip() {
        let r = vec![SymptomReport { day: 3, person: 7, self_sick: true, nearby_sick: false, symptoms: "01100".into() }];
        let mut buf = Vec::new();
        write_reports(&r, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "day,person,self_sick,nearby_sick,symptoms\n3,7,1,0,01100\n");
        assert_eq!(read_reports(&buf[..]).unwrap(), r);
        assert!(read_reports(&b"day,person,self_sick,nearby_sick,symptoms\n1,2,1,0,0110\n"[..]).is_err());
    }

    #[test]
    fn scans_csv_roundtrip() {
        let s = vec![ScanObservation { t: 12, location: 3, count: 4 }];
        let mut buf = Vec::new();
        write_scans(&s, &mut buf).unwrap();
        assert_eq!(read_scans(&buf[..]).unwrap(), s);
    }
}
