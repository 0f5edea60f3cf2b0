mod support;

use proptest::prelude::*;
use proxisim_core::eval::ks_test;
use proxisim_core::rng::stream;
use proxisim_core::skm::{
    discrete_step_distribution, parse_model, path_log_likelihood, print_model, simulate_discrete_final, simulate_gillespie,
    total_hazard, DiscretizationConfig, Event, ReactionSystem, SystemState,
};

fn death(c: f64) -> ReactionSystem {
    ReactionSystem::new(&["I", "S"], vec![Event::new(vec![1, 0], vec![0, 1], c).unwrap()]).unwrap()
}

fn flip(a: f64, b: f64) -> ReactionSystem {
    ReactionSystem::new(
        &["S", "I"],
        vec![Event::new(vec![1, 0], vec![0, 1], a).unwrap(), Event::new(vec![0, 1], vec![1, 0], b).unwrap()],
    )
    .unwrap()
}

#[test]
fn death_process_mean() {
    let sys = death(0.5);
    let x0 = SystemState { time: 0.0, x: vec![100, 0] };
    let runs = 2000;
    let finals: Vec<f64> = (0..runs).map(|k| simulate_gillespie(&sys, &x0, 2.0, &mut stream(1, 0, k, 0)).state_at(2.0)[0] as f64).collect();
    let mean = finals.iter().sum::<f64>() / runs as f64;
    let p = (-1.0f64).exp();
    let se = (100.0 * p * (1.0 - p) / runs as f64).sqrt();
    assert!((mean - 100.0 * p).abs() < 3.0 * se, "mean {mean}");
}

#[test]
fn holding_times_are_exponential() {
    let sys = flip(0.3, 0.7);
    let x0 = SystemState { time: 0.0, x: vec![4, 6] };
    let h0 = total_hazard(&sys, &x0.x);
    let holds: Vec<f64> = (0..5000).map(|k| simulate_gillespie(&sys, &x0, 40.0 / h0, &mut stream(2, 0, k, 0)).steps[0].time).collect();
    let (_, p) = ks_test(&holds, |t| 1.0 - (-h0 * t).exp());
    assert!(p > 0.01, "p {p}");
}

#[test]
fn discrete_chain_matches_uniformized_oracle() {
    let sys = flip(0.1, 0.05);
    let cfg = DiscretizationConfig::new(0.1).unwrap();
    let runs = 20_000;
    let inf = (0..runs).filter(|&k| simulate_discrete_final(&sys, &[1, 0], &cfg, 100, &mut stream(3, 0, k, 0)).unwrap()[1] == 1).count();
    let p = inf as f64 / runs as f64;
    let exact = support::two_state_infected_discrete(0.1, 0.05, 0.1, 100);
    assert!((p - exact).abs() < 0.015, "{p} vs {exact}");
    assert!((exact - support::two_state_infected(0.1, 0.05, 10.0)).abs() < 0.002);
}

#[test]
fn path_likelihood_matches_hand_computation() {
    let sys = flip(0.3, 0.7);
    let x0 = SystemState { time: 0.0, x: vec![2, 1] };
    let traj = simulate_gillespie(&sys, &x0, 3.0, &mut stream(4, 0, 0, 0));
    let mut ll = 0.0;
    let mut x = x0.x.clone();
    let mut t = 0.0;
    for s in &traj.steps {
        let hs = [0.3 * x[0] as f64, 0.7 * x[1] as f64];
        ll += hs[s.event.unwrap()].ln() - (hs[0] + hs[1]) * (s.time - t);
        t = s.time;
        x = s.x.clone();
    }
    ll -= (0.3 * x[0] as f64 + 0.7 * x[1] as f64) * (3.0 - t);
    assert!((path_log_likelihood(&sys, &traj) - ll).abs() < 1e-9);
}

#[test]
fn trajectory_csv_layout() {
    let sys = death(1.0);
    let traj = simulate_gillespie(&sys, &SystemState { time: 0.0, x: vec![2, 0] }, 100.0, &mut stream(5, 0, 0, 0));
    let mut buf = Vec::new();
    traj.write_csv(&sys, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step,time,event,I,S");
    assert_eq!(lines[1], "0,0,,2,0");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].ends_with(",1,0,2"));
}

fn arb_system() -> impl Strategy<Value = ReactionSystem> {
    let names = ["A", "B", "Cx", "d_2"];
    (1usize..=4)
        .prop_flat_map(move |n| {
            let ev = (prop::collection::vec(0u32..3, n), prop::collection::vec(0u32..3, n), 0u32..2000)
                .prop_filter("non-empty", |(a, b, _)| a.iter().chain(b).any(|&x| x > 0));
            (Just(n), prop::collection::vec(ev, 1..5))
        })
        .prop_map(move |(n, evs)| {
            let events = evs.into_iter().map(|(a, b, r)| Event::new(a, b, r as f64 / 64.0).unwrap()).collect();
            ReactionSystem::new(&names[..n], events).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn printed_models_parse_back(sys in arb_system()) {
        let normal = parse_model(&print_model(&sys)).unwrap();
        let text = print_model(&normal);
        prop_assert_eq!(&parse_model(&text).unwrap(), &normal);
        prop_assert!(normal.events.iter().zip(&sys.events).all(|(a, b)| a.rate == b.rate));
    }

    #[test]
    fn step_distribution_is_normalized(sys in arb_system(), x in prop::collection::vec(0u64..6, 4)) {
        let x = &x[..sys.num_species()];
        let h0 = total_hazard(&sys, x);
        let gamma = h0.max(1e-9) * 1.5;
        let p = discrete_step_distribution(&sys, x, gamma).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn gillespie_paths_stay_valid(seed in 0u64..1000) {
        let sys = flip(0.4, 0.9);
        let x0 = SystemState { time: 0.0, x: vec![3, 2] };
        let traj = simulate_gillespie(&sys, &x0, 5.0, &mut stream(seed, 0, 0, 0));
        let mut t = 0.0;
        for s in &traj.steps {
            prop_assert!(s.time > t && s.time <= 5.0);
            prop_assert_eq!(s.x[0] + s.x[1], 5);
            t = s.time;
        }
    }
}
