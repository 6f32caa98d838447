use std::collections::BTreeMap;

use causeq::library::build_bandit;
use causeq::oracle::parse_constants;
use causeq::simulator::{offline_demo, run_episodes, run_experiment, Policy};
use causeq::{act, cond, HistoryKey};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn constants() -> BTreeMap<String, f64> {
    parse_constants(include_str!("data/derived_constants.txt")).unwrap()
}

#[test]
fn horizon_two_repeat_rates_match_the_exact_mixtures() {
    let c = constants();
    let q = build_bandit(1).unwrap();
    for (policy, name) in [
        (Policy::Interventional, "bandit.int_repeat_rate_h2"),
        (Policy::Conditional, "bandit.cond_repeat_rate_h2"),
    ] {
        let (s, _) = run_experiment(&q, policy, 2, 100_000, 21, 4).unwrap();
        let exact = c[name];
        assert!(
            (s.repeat_rate.mean - exact).abs() < 3.0 * s.repeat_rate.se,
            "{name}: {} ± {} vs {exact}",
            s.repeat_rate.mean,
            s.repeat_rate.se
        );
    }
}

#[test]
fn observations_follow_the_mechanisms() {
    let q = build_bandit(1).unwrap();
    let records = run_episodes(&q, Policy::Interventional, 1, 100_000, 5, 4).unwrap();
    let mut counts = [[[0u64; 2]; 5]; 5];
    for r in &records {
        counts[r.theta[0]][r.steps[0].action][r.steps[0].observation] += 1;
    }
    let mut chi2 = 0.0;
    for (theta, rows) in counts.iter().enumerate() {
        for (a, row) in rows.iter().enumerate() {
            let n = (row[0] + row[1]) as f64;
            let win = if theta == a { 0.75 } else { 0.25 };
            for (o, p) in [(0, 1.0 - win), (1, win)] {
                chi2 += (row[o] as f64 - n * p).powi(2) / (n * p);
            }
        }
    }
    let p_value = 1.0 - ChiSquared::new(25.0).unwrap().cdf(chi2);
    assert!(p_value > 1e-3, "chi-square {chi2}, p = {p_value}");
}

#[test]
fn interventional_play_explores_then_concentrates() {
    let q = build_bandit(1).unwrap();
    let records = run_episodes(&q, Policy::Interventional, 20, 2_000, 17, 4).unwrap();
    let rate = |t: usize| records.iter().filter(|r| r.steps[t].action == r.theta[0]).count() as f64 / 2_000.0;
    // Distinct arms per five-step window, with the standard error of the
    // per-episode difference between the first and last windows.
    let distinct = |r: &causeq::EpisodeRecord, range: std::ops::Range<usize>| {
        let mut arms: Vec<usize> = r.steps[range].iter().map(|s| s.action).collect();
        arms.sort_unstable();
        arms.dedup();
        arms.len() as f64
    };
    let diffs: Vec<f64> = records
        .iter()
        .map(|r| distinct(r, 0..5) - distinct(r, 15..20))
        .collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let se = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    assert!((rate(0) - 0.2).abs() < 0.03);
    assert!(rate(19) > rate(0) + 0.2, "{} vs {}", rate(19), rate(0));
    assert!(mean > 5.0 * se, "{mean} ± {se}");
}

#[test]
fn directional_comparison_at_horizon_twenty() {
    let q = build_bandit(1).unwrap();
    let (int, _) = run_experiment(&q, Policy::Interventional, 20, 10_000, 7, 4).unwrap();
    let (cnd, _) = run_experiment(&q, Policy::Conditional, 20, 10_000, 7, 4).unwrap();
    let se = |a: f64, b: f64| (a * a + b * b).sqrt();
    let best_gap = int.best_arm_rate.mean - cnd.best_arm_rate.mean;
    assert!(best_gap > 5.0 * se(int.best_arm_rate.se, cnd.best_arm_rate.se));
    let repeat_gap = cnd.repeat_rate.mean - int.repeat_rate.mean;
    assert!(repeat_gap > 5.0 * se(int.repeat_rate.se, cnd.repeat_rate.se));
    assert_eq!(int.aborted + cnd.aborted, 0);
}

#[test]
fn summaries_are_deterministic() {
    let q = build_bandit(1).unwrap();
    let a = run_experiment(&q, Policy::Conditional, 6, 500, 3, 1).unwrap();
    let b = run_experiment(&q, Policy::Conditional, 6, 500, 3, 3).unwrap();
    assert_eq!(a, b);
}

#[test]
fn offline_fit_tracks_the_deluded_conditional() {
    let c = constants();
    let q = build_bandit(1).unwrap();
    let key = HistoryKey::new(vec![act(1, 0), cond(2, 1)]);
    let small = offline_demo(&q, 2, 10_000, 31, 1.0).unwrap();
    let large = offline_demo(&q, 2, 100_000, 32, 1.0).unwrap();
    let (s, l) = (small.row(&key).unwrap(), large.row(&key).unwrap());
    assert!((l.fitted.prob(0) - c["bandit.cond_repeat_after_win"]).abs() < 0.02);
    assert!((l.fitted.prob(0) - c["bandit.int_repeat_after_win"]).abs() > 0.15);
    assert!(l.tv_conditional < s.tv_conditional + 2.0 * s.tv_conditional_se);
    let change = (l.tv_interventional - s.tv_interventional).abs();
    let se = (s.tv_interventional_se.powi(2) + l.tv_interventional_se.powi(2)).sqrt();
    assert!(change < 2.0 * se, "{change} vs {se}");
    // Deployed, the fit repeats itself like the deluded policy.
    let (cnd, _) = run_experiment(&q, Policy::Conditional, 2, 10_000, 4, 1).unwrap();
    let d = &large.deployed.repeat_rate;
    assert!((d.mean - cnd.repeat_rate.mean).abs() < 5.0 * (d.se.powi(2) + cnd.repeat_rate.se.powi(2)).sqrt());
}
