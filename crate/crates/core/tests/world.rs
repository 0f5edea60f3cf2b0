use proptest::prelude::*;
use proxisim_core::epidemic::{build_event_table, step_epidemic, ContactSnapshot, EpidemicParams, EventKind, HealthState};
use proxisim_core::mobility::{
    estimate_rates, read_visits, simulate_mobility, write_visits, BucketScheme, CampusSpec, MobilityKernel, MobilityParams,
};
use proxisim_core::rng::stream;
use proxisim_core::world::{simulate_world, ClampSchedule, WorldModel, WorldState};

use HealthState::{Infectious as I, Susceptible as S};

fn params() -> EpidemicParams {
    EpidemicParams::new(0.05, 0.04, 0.01).unwrap()
}

fn health(bits: u32, n: usize) -> Vec<HealthState> {
    (0..n).map(|p| if bits >> p & 1 == 1 { I } else { S }).collect()
}

#[test]
fn step_epidemic_frequencies_match_table() {
    let snap = ContactSnapshot::from_groups(0, 4, &[vec![0, 1, 2], vec![2, 3]]);
    let h = vec![I, S, S, I];
    let table = build_event_table(&h, &snap, &params());
    let tau = 2.0;
    let runs = 200_000;
    let mut counts = vec![0usize; 5];
    let mut contact = 0usize;
    let mut rng = stream(1, 0, 0, 0);
    for _ in 0..runs {
        let (_, ev) = step_epidemic(&h, &snap, &params(), tau, &mut rng).unwrap();
        match ev {
            Some(e) => {
                counts[e.person as usize] += 1;
                contact += usize::from(e.kind == EventKind::Contact);
            }
            None => counts[4] += 1,
        }
    }
    for e in &table {
        let f = counts[e.person as usize] as f64 / runs as f64;
        assert!((f - e.hazard * tau).abs() < 0.004, "person {} {f} vs {}", e.person, e.hazard * tau);
    }
    let contact_hz: f64 = [1usize, 2].iter().map(|&p| if p == 1 { 0.05 } else { 0.10 }).sum::<f64>() * tau;
    assert!((contact as f64 / runs as f64 - contact_hz).abs() < 0.004);
}

#[test]
fn world_matches_event_table_in_distribution() {
    let locs = vec![0u16, 0, 1, 1];
    let mob = MobilityParams::zeros(2, BucketScheme::Constant);
    let model = WorldModel::new(4, params(), mob, 2.0).unwrap();
    let snap = ContactSnapshot::from_locations(0, &locs);
    let h = vec![I, S, S, I];
    let table = build_event_table(&h, &snap, &params());
    let runs = 200_000;
    let mut counts = [0usize; 4];
    for k in 0..runs {
        let mut s = WorldState::new(h.clone(), locs.clone(), 2).unwrap();
        if let Some(e) = model.step(&mut s, 1, None, &mut stream(2, 0, k, 0), &mut Vec::new()).unwrap() {
            counts[e.person as usize] += 1;
        }
    }
    for e in &table {
        let f = counts[e.person as usize] as f64 / runs as f64;
        assert!((f - e.hazard * 2.0).abs() < 0.004);
    }
}

proptest! {
    #[test]
    fn flip_probabilities_equal_event_table(bits in 0u32..16, locs in prop::collection::vec(0u16..3, 4)) {
        let mob = MobilityParams::zeros(3, BucketScheme::Constant);
        let model = WorldModel::new(4, params(), mob, 1.0).unwrap();
        let h = health(bits, 4);
        let s = WorldState::new(h.clone(), locs.clone(), 3).unwrap();
        let table = build_event_table(&h, &ContactSnapshot::from_locations(0, &locs), &params());
        let probs = model.flip_probabilities(&s);
        let mut from_table = [0.0; 4];
        for e in &table {
            from_table[e.person as usize] = e.hazard;
        }
        for p in 0..4 {
            prop_assert!((probs[p] - from_table[p]).abs() < 1e-12);
        }
        let (rec, con, out) = model.hazards(&s);
        prop_assert!((rec + con + out - table.iter().map(|e| e.hazard).sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn counts_stay_consistent(seed in 0u64..200) {
        let spec = CampusSpec { clusters: 2, per_cluster: 2, within_rate: 0.5, cross_rate: 0.1, night_factor: 0.5, weekend_factor: 1.0 };
        let model = WorldModel::new(12, params(), spec.build().unwrap(), 0.5).unwrap();
        let x0 = WorldState::new(health(0b101, 12), (0..12).map(|p| (p % 4) as u16).collect(), 4).unwrap();
        let traj = simulate_world(&model, x0, 100, seed).unwrap();
        let fin = traj.final_state();
        let mut direct = 0;
        for l in 0..4 {
            direct += fin.population_at(l);
            prop_assert_eq!(fin.infectious_at(l), (0..12).filter(|&p| fin.loc[p] as usize == l && fin.health[p].is_infectious()).count() as u32);
        }
        prop_assert_eq!(direct, 12);
        prop_assert_eq!(traj.infectious_counts()[100], fin.n_infectious());
    }

    #[test]
    fn hour_of_week_buckets(t in 0.0f64..1000.0) {
        let b = BucketScheme::HourOfWeek.bucket_of(t);
        prop_assert!(b < 48);
        let day = ((t / 24.0).floor() as u64) % 7;
        prop_assert_eq!(b >= 24, day >= 5);
        prop_assert_eq!(BucketScheme::Constant.bucket_of(t), 0);
    }
}

#[test]
fn dwell_time_is_one_hour() {
    let p = MobilityParams::constant(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
    let k = MobilityKernel::new(&p, 0.01).unwrap();
    let mut total = 0.0;
    let mut rng = stream(3, 0, 0, 0);
    let mut moves = Vec::new();
    for _ in 0..10_000 {
        let mut loc = [0u16];
        let mut steps = 0u64;
        while loc[0] == 0 {
            moves.clear();
            k.step(0, &mut loc, None, &mut rng, &mut moves);
            steps += 1;
        }
        total += steps as f64 * 0.01;
    }
    let mean = total / 10_000.0;
    assert!((mean - 1.0).abs() < 0.04, "{mean}");
}

#[test]
fn occupancy_reaches_stationary_law() {
    let p = MobilityParams::constant(&[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap();
    let initial = vec![0u16; 3000];
    let mut frac = 0.0;
    simulate_mobility(&initial, &p, 400, 0.05, &mut stream(4, 0, 0, 0), |t, loc| {
        if t == 400 {
            frac = loc.iter().filter(|&&l| l == 0).count() as f64 / loc.len() as f64;
        }
    })
    .unwrap();
    assert!((frac - 2.0 / 3.0).abs() < 0.03, "{frac}");
}

#[test]
fn rate_estimates_recover_truth() {
    let truth = vec![vec![0.0, 0.6, 0.2], vec![0.3, 0.0, 0.3], vec![0.5, 0.1, 0.0]];
    let p = MobilityParams::constant(&truth).unwrap();
    let initial: Vec<u16> = (0..60).map(|i| (i % 3) as u16).collect();
    let run = simulate_mobility(&initial, &p, 20_000, 0.05, &mut stream(5, 0, 0, 0), |_, _| {}).unwrap();
    let est = estimate_rates(&run.visits, 3, BucketScheme::Constant).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                let r = est.params.rate(0, i, j);
                assert!((r - truth[i][j]).abs() < 0.1 * truth[i][j], "{i}->{j}: {r}");
            }
        }
    }
    let mut buf = Vec::new();
    write_visits(&run.visits[..50], &mut buf).unwrap();
    assert_eq!(read_visits(&buf[..]).unwrap(), run.visits[..50].to_vec());
}

#[test]
fn clamped_persons_follow_their_trace() {
    let spec = CampusSpec { clusters: 1, per_cluster: 3, within_rate: 2.0, cross_rate: 0.0, night_factor: 1.0, weekend_factor: 1.0 };
    let model = WorldModel::new(5, params(), spec.build().unwrap(), 0.25).unwrap();
    let x0 = WorldState::new(health(0, 5), vec![0; 5], 3).unwrap();
    let truth = simulate_world(&model, x0.clone(), 200, 6).unwrap();
    let visits: Vec<_> = truth.visits(0.25).into_iter().filter(|v| v.person == 1).collect();
    let clamp = ClampSchedule::from_visits(5, &visits, 0.25).unwrap();
    let mut s = x0;
    let mut moves = Vec::new();
    let mut reference = truth.initial.clone();
    for t in 1..=200 {
        moves.clear();
        model.step(&mut s, t, Some(&clamp), &mut stream(7, 0, t, 0), &mut moves).unwrap();
        truth.apply_step(&mut reference, t);
        assert_eq!(s.loc[1], reference.loc[1], "step {t}");
    }
}
