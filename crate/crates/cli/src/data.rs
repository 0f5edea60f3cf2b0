//! Reading and writing the on-disk forms of ground truth and observations.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use proxisim_core::epidemic::{location_groups, EpiEvent, EventKind, HealthState};
use proxisim_core::mobility::{read_visits, write_visits, Move};
use proxisim_core::observe::{read_reports, read_scans, ObservationLog, VolunteerPanel};
use proxisim_core::world::{ClampSchedule, WorldState, WorldTrajectory};

use crate::io::{csv_writer, open};

/// Shape of a simulated world, written next to the trajectory files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldInfo {
    pub persons: usize,
    pub locations: usize,
    pub tau: f64,
    pub steps: u64,
}

#[derive(Debug, Deserialize)]
struct PopulationRow {
    person: u32,
    location: u16,
    state: String,
}

#[derive(Debug, Deserialize)]
struct HealthRow {
    t: u64,
    person: u32,
    cause: String,
}

fn cause_name(kind: EventKind) -> &'static str {
    match kind {
        EventKind::Contact => "contact",
        EventKind::Recover => "recover",
        EventKind::Outside => "outside",
    }
}

fn cause_kind(s: &str) -> Option<EventKind> {
    match s {
        "contact" => Some(EventKind::Contact),
        "recover" => Some(EventKind::Recover),
        "outside" => Some(EventKind::Outside),
        _ => None,
    }
}

pub fn write_population<W: Write>(initial: &WorldState, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["person", "location", "state"])?;
    for (p, (h, l)) in initial.health.iter().zip(&initial.loc).enumerate() {
        w.write_record([p.to_string(), l.to_string(), h.code().into()])?;
    }
    w.flush()?;
    Ok(())
}

/// `t,person,state,cause`: one row per event, giving the state entered at step `t`.
/// Initial states live in `population.csv`.
pub fn write_health<W: Write>(truth: &WorldTrajectory, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["t", "person", "state", "cause"])?;
    let mut health = truth.initial.health.clone();
    for (i, ev) in truth.events.iter().enumerate() {
        if let Some(e) = ev {
            let p = e.person as usize;
            health[p] = health[p].flipped();
            w.write_record([(i + 1).to_string(), p.to_string(), health[p].code().into(), cause_name(e.kind).into()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One JSON line per snapshot step `t >= 1` mapping each occupied location to its persons.
pub fn write_snapshots<W: Write>(truth: &WorldTrajectory, every: u64, mut out: W) -> Result<()> {
    let mut err = None;
    truth.replay(|t, s| {
        if t == 0 || t % every != 0 || err.is_some() {
            return;
        }
        let groups: BTreeMap<u16, Vec<u32>> = location_groups(&s.loc).into_iter().map(|g| (s.loc[g[0] as usize], g)).collect();
        let line = serde_json::json!({ "t": t, "groups": groups });
        if let Err(e) = writeln!(out, "{line}") {
            err = Some(e);
        }
    });
    match err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_initial(dir: &Path, info: &WorldInfo) -> Result<WorldState> {
    let path = dir.join("population.csv");
    let mut health = vec![HealthState::Susceptible; info.persons];
    let mut loc = vec![u16::MAX; info.persons];
    for row in csv::Reader::from_reader(open(&path)?).deserialize() {
        let row: PopulationRow = row.with_context(|| format!("reading {}", path.display()))?;
        let p = row.person as usize;
        if p >= info.persons || loc[p] != u16::MAX {
            bail!("{}: unexpected person {p}", path.display());
        }
        health[p] = HealthState::from_code(&row.state).ok_or_else(|| anyhow!("{}: bad state `{}`", path.display(), row.state))?;
        loc[p] = row.location;
    }
    if loc.contains(&u16::MAX) {
        bail!("{}: not every person has a starting location", path.display());
    }
    Ok(WorldState::new(health, loc, info.locations)?)
}

/// Rebuild the ground-truth path from `world.json`, `population.csv`,
/// `health.csv` and `visits.csv`.
pub fn read_truth(dir: &Path) -> Result<(WorldInfo, WorldTrajectory)> {
    let info: WorldInfo = read_json(&dir.join("world.json"))?;
    let initial = read_initial(dir, &info)?;
    let path = dir.join("health.csv");
    let mut events: Vec<Option<EpiEvent>> = vec![None; info.steps as usize];
    for row in csv::Reader::from_reader(open(&path)?).deserialize() {
        let row: HealthRow = row.with_context(|| format!("reading {}", path.display()))?;
        let kind = cause_kind(&row.cause).ok_or_else(|| anyhow!("{}: bad cause `{}`", path.display(), row.cause))?;
        let slot = (row.t as usize).checked_sub(1).and_then(|i| events.get_mut(i)).ok_or_else(|| anyhow!("{}: step {} out of range", path.display(), row.t))?;
        if slot.replace(EpiEvent { person: row.person, kind }).is_some() {
            bail!("{}: two events at step {}", path.display(), row.t);
        }
    }
    let vpath = dir.join("visits.csv");
    let visits = read_visits(open(&vpath)?).with_context(|| format!("reading {}", vpath.display()))?;
    let clamp = ClampSchedule::from_visits(info.persons, &visits, info.tau)?;
    let mut traj = WorldTrajectory::new(initial.clone());
    let mut loc = initial.loc.clone();
    let mut moves = Vec::new();
    for (i, ev) in events.into_iter().enumerate() {
        moves.clear();
        for &(p, to) in clamp.changes_at(i as u64 + 1) {
            let from = loc[p as usize];
            if from != to {
                moves.push(Move { person: p, from, to });
                loc[p as usize] = to;
            }
        }
        traj.push(ev, &moves);
    }
    Ok((info, traj))
}

pub fn write_observations(out: &mut crate::io::OutputDir, log: &ObservationLog, panel: &VolunteerPanel) -> Result<()> {
    out.write("scans.csv", |b| Ok(proxisim_core::observe::write_scans(&log.scans, b)?))?;
    out.write("reports.csv", |b| Ok(proxisim_core::observe::write_reports(&log.reports, b)?))?;
    out.write("volunteer_visits.csv", |b| Ok(write_visits(&log.volunteer_visits, b)?))?;
    out.write_json("panel.json", panel)
}

pub fn read_observations(dir: &Path) -> Result<(ObservationLog, VolunteerPanel)> {
    let raw: VolunteerPanel = read_json(&dir.join("panel.json"))?;
    let panel = VolunteerPanel::new(raw.population, raw.volunteers, raw.discoverable, raw.compliance)?;
    let p = dir.join("scans.csv");
    let scans = read_scans(open(&p)?).with_context(|| format!("reading {}", p.display()))?;
    let p = dir.join("reports.csv");
    let reports = read_reports(open(&p)?).with_context(|| format!("reading {}", p.display()))?;
    let p = dir.join("volunteer_visits.csv");
    let volunteer_visits = read_visits(open(&p)?).with_context(|| format!("reading {}", p.display()))?;
    let mut log = ObservationLog { scans, reports, volunteer_visits };
    log.sort();
    Ok((log, panel))
}
