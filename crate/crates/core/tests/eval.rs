use proptest::prelude::*;
use proxisim_core::eval::{
    exponential_fit, permutation_test, precision_recall, r_squared, scaling_baseline, symptom_transition_matrix, DayContacts, ScoredLabel,
    SymptomNetwork,
};
use proxisim_core::observe::SymptomReport;
use proxisim_core::rng::stream;
use rand::Rng;
use rand_distr::{Distribution, Exp};

fn scored() -> impl Strategy<Value = Vec<ScoredLabel>> {
    prop::collection::vec((0u32..20, any::<bool>()), 2..60)
        .prop_filter("needs a positive", |v| v.iter().any(|x| x.1))
        .prop_map(|v| v.into_iter().map(|(s, l)| ScoredLabel::new(s as f64 / 4.0, l)).collect())
}

proptest! {
    #[test]
    fn ap_invariant_under_monotone_maps(xs in scored()) {
        let ap = precision_recall(&xs).unwrap().average_precision;
        let mapped: Vec<_> = xs.iter().map(|s| ScoredLabel::new((s.score * 3.0).exp() - 7.0, s.label)).collect();
        prop_assert!((precision_recall(&mapped).unwrap().average_precision - ap).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ap));
    }

    #[test]
    fn full_recall_precision_is_prevalence(xs in scored()) {
        let c = precision_recall(&xs).unwrap();
        let last = c.points.last().unwrap();
        prop_assert_eq!(last.recall, 1.0);
        prop_assert!((last.precision - c.prevalence()).abs() < 1e-12);
        prop_assert!(c.points.windows(2).all(|w| w[0].recall <= w[1].recall));
    }

    #[test]
    fn r_squared_ignores_order(pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..30), seed: u64) {
        let (f, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        prop_assume!(y.iter().any(|&v| (v - y[0]).abs() > 1e-6));
        let a = r_squared(&f, &y).unwrap();
        let mut idx: Vec<usize> = (0..f.len()).collect();
        use rand::seq::SliceRandom;
        idx.shuffle(&mut stream(seed, 0, 0, 0));
        let f2: Vec<f64> = idx.iter().map(|&i| f[i]).collect();
        let y2: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        prop_assert!((r_squared(&f2, &y2).unwrap() - a).abs() < 1e-9);
    }

    #[test]
    fn permutation_p_in_unit_interval(labels in prop::collection::vec(any::<bool>(), 6), seed in 0u64..50) {
        let day = DayContacts { pairs: vec![(0, 1), (1, 2), (3, 4), (4, 5), (0, 5)], symptomatic: labels };
        let net = SymptomNetwork { persons: 6, days: vec![day] };
        let r = permutation_test(&net, 100, seed).unwrap();
        prop_assert!(r.p_value > 0.0 && r.p_value <= 1.0);
    }

    #[test]
    fn transition_rows_are_stochastic(seq in prop::collection::vec(0usize..4, 2..40), pc in 0.0f64..2.0) {
        let states = ["00000", "10000", "11000", "01100"];
        let reports: Vec<_> = seq.iter().enumerate()
            .map(|(d, &s)| SymptomReport { day: d as u32, person: 0, self_sick: s > 0, nearby_sick: false, symptoms: states[s].into() })
            .collect();
        let m = symptom_transition_matrix(&reports, pc, 1).unwrap();
        for row in &m.probs {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn random_scores_give_prevalence_ap() {
    let mut rng = stream(1, 0, 0, 0);
    let mut total = 0.0;
    let mut trials = 0;
    while trials < 1000 {
        let xs: Vec<_> = (0..5000).map(|_| ScoredLabel::new(rng.random(), rng.random::<f64>() < 0.04)).collect();
        if let Ok(c) = precision_recall(&xs) {
            total += c.average_precision;
            trials += 1;
        }
    }
    let mean = total / 1000.0;
    assert!((mean - 0.04).abs() < 0.01, "{mean}");
}

#[test]
fn exponential_fit_recovers_mean() {
    let d = Exp::new(1.0 / 3.0).unwrap();
    let mut rng = stream(2, 0, 0, 0);
    let xs: Vec<f64> = (0..1000).map(|_| d.sample(&mut rng)).collect();
    let f = exponential_fit(&xs).unwrap();
    assert!((f.mean - 3.0).abs() < 0.3);
    assert!(f.p_value > 0.01);
}

#[test]
fn scaling_with_full_noiseless_reports_is_shifted_truth() {
    let truth = [3u32, 5, 8, 6, 2];
    let pop = 20;
    let mut reports = Vec::new();
    for (d, &k) in truth.iter().enumerate() {
        for p in 0..pop {
            reports.push(SymptomReport { day: d as u32, person: p, self_sick: p < k, nearby_sick: false, symptoms: "00000".into() });
        }
    }
    let s = scaling_baseline(&reports, 5, pop);
    assert_eq!(s, truth.iter().map(|&k| k as f64).collect::<Vec<_>>());
    let gap = scaling_baseline(&reports[..pop as usize], 3, pop);
    assert_eq!(gap, vec![3.0; 3]);
}
