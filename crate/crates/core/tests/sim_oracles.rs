mod common;

use common::ols;
use spillover_core::design::{Assignment, Design};
use spillover_core::graph::generate_random_graph;
use spillover_core::sim::{
    calibrate, power_curve, simulate_compliance, simulate_edge_compliance, simulate_influence_outcomes,
    simulate_outcomes, EffectParam, GraphSpec, OutcomeModel, SimParams, SimSpec, TestKind, TestSpec,
};
use spillover_core::inference::TestStatistic;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn ols_recovers_outcome_coefficients() {
    let g = generate_random_graph(10_000, 0.001, 1).unwrap();
    let z = Design::IidBernoulli { p: 0.5 }.prepare(&g).unwrap().draw_subjects("z").unwrap().into_inner();
    let mut t = vec![0.0; z.len()];
    g.peer_mean_binary(&z, &mut t);
    let y = simulate_outcomes(&g, &z, &SimParams { tau: 1.0, rho: 2.0, seed: 3, ..SimParams::default() }).unwrap();
    let x: Vec<Vec<f64>> = (0..z.len()).map(|i| vec![1.0, f64::from(z[i]), t[i]]).collect();
    let (b, se) = ols(&x, &y);
    assert!((b[1] - 1.0).abs() < 4.0 * se[1], "tau {} ± {}", b[1], se[1]);
    assert!((b[2] - 2.0).abs() < 4.0 * se[2], "rho {} ± {}", b[2], se[2]);
}

#[test]
fn logistic_adoption_rates() {
    let n = 100_000;
    let z: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let rate = |d: &[u8], arm: u8| {
        let (hits, total) = d.iter().zip(&z).filter(|(_, &zi)| zi == arm).fold((0, 0), |(h, t), (&di, _)| (h + di as usize, t + 1));
        hits as f64 / total as f64
    };
    let d = simulate_compliance(&z, 0.0, 0.0, 1);
    assert!((rate(&d, 0) - 0.5).abs() < 0.01 && (rate(&d, 1) - 0.5).abs() < 0.01);
    let d = simulate_compliance(&z, -2.0, 4.0, 2);
    assert!((rate(&d, 1) - sigmoid(2.0)).abs() < 0.01, "{}", rate(&d, 1));
    assert!((rate(&d, 0) - sigmoid(-2.0)).abs() < 0.01, "{}", rate(&d, 0));
}

#[test]
fn edge_retention_rates() {
    let g = generate_random_graph(2_000, 0.05, 2).unwrap();
    assert!(g.edge_count() > 90_000);
    let w = match (Design::EdgeIid { p: 0.5 }).prepare(&g).unwrap().draw("w").unwrap() {
        Assignment::Edges(w) => w,
        Assignment::Subjects(_) => unreachable!(),
    };
    let kept = simulate_edge_compliance(&g, &w, 0.0, 2.0, 5).unwrap();
    let kept: std::collections::HashSet<(usize, usize)> = kept.edges().iter().map(|e| (e.src, e.dst)).collect();
    let mut counts = [[0usize; 2]; 2];
    for ((src, dst), wv) in w.iter() {
        counts[wv as usize][usize::from(kept.contains(&(src, dst)))] += 1;
    }
    let frac = |arm: usize| counts[arm][1] as f64 / (counts[arm][0] + counts[arm][1]) as f64;
    assert!((frac(0) - 0.5).abs() < 0.01, "{}", frac(0));
    assert!((frac(1) - sigmoid(2.0)).abs() < 0.01, "{}", frac(1));
}

#[test]
fn two_stage_least_squares_recovers_influence() {
    let g = generate_random_graph(10_000, 0.001, 4).unwrap();
    let z = Design::IidBernoulli { p: 0.5 }.prepare(&g).unwrap().draw_subjects("z").unwrap().into_inner();
    let d = simulate_compliance(&z, -1.0, 3.0, 8);
    let params = SimParams { tau: 0.5, theta: 2.0, seed: 9, ..SimParams::default() };
    let y = simulate_influence_outcomes(&g, &z, &d, &params).unwrap();
    let n = z.len();
    let (mut tz, mut fd) = (vec![0.0; n], vec![0.0; n]);
    g.peer_mean_binary(&z, &mut tz);
    g.peer_mean_binary(&d, &mut fd);
    // first stage: F(d) on (1, z, T(z))
    let x1: Vec<Vec<f64>> = (0..n).map(|i| vec![1.0, f64::from(z[i]), tz[i]]).collect();
    let (g1, _) = ols(&x1, &fd);
    let fitted: Vec<f64> = x1.iter().map(|r| r.iter().zip(&g1).map(|(a, b)| a * b).sum()).collect();
    // second stage with residuals from the structural equation
    let x2: Vec<Vec<f64>> = (0..n).map(|i| vec![1.0, f64::from(z[i]), fitted[i]]).collect();
    let (b, _) = ols(&x2, &y);
    let xs: Vec<Vec<f64>> = (0..n).map(|i| vec![1.0, f64::from(z[i]), fd[i]]).collect();
    let resid: Vec<f64> = (0..n).map(|i| y[i] - xs[i].iter().zip(&b).map(|(a, c)| a * c).sum::<f64>()).collect();
    let s2 = resid.iter().map(|r| r * r).sum::<f64>() / (n - 3) as f64;
    // SE of θ from (X̂'X̂)^-1 scaled by structural residual variance
    let (_, se_naive) = ols(&x2, &y);
    let rss2: f64 = (0..n)
        .map(|i| (y[i] - x2[i].iter().zip(&b).map(|(a, c)| a * c).sum::<f64>()).powi(2))
        .sum::<f64>()
        / (n - 3) as f64;
    let se_theta = se_naive[2] * (s2 / rss2).sqrt();
    assert!((b[2] - 2.0).abs() < 4.0 * se_theta, "theta {} ± {se_theta}", b[2]);
}

fn base_sim(rho: f64) -> SimSpec {
    SimSpec {
        graph: GraphSpec::ErdosRenyi { n: 200, p: 0.03 },
        design: Design::IidBernoulli { p: 0.5 },
        params: SimParams { tau: 1.0, rho, seed: 21, ..SimParams::default() },
        model: OutcomeModel::Spillover,
    }
}

#[test]
fn calibration_null_and_power() {
    let test = TestSpec { kind: TestKind::SharpNull { tau0: 1.0 }, statistic: TestStatistic::default(), replications: 99 };
    let null = calibrate(&test, &base_sim(0.0), 200, 0.05).unwrap();
    assert!(null.rejection_rate <= 0.05 + 3.0 * (0.05f64 * 0.95 / 200.0).sqrt(), "{null:?}");
    let curve = power_curve(&test, &base_sim(0.0), EffectParam::Rho, &[0.0, 1.0, 3.0], 200, 0.05).unwrap();
    assert_eq!(curve[0].calibration, null);
    assert!(curve[2].calibration.rejection_rate > curve[0].calibration.rejection_rate);
    assert!(curve[2].calibration.rejection_rate >= curve[1].calibration.rejection_rate);
}

#[test]
fn weaker_instrument_has_less_power() {
    let sim = |beta: f64| SimSpec {
        graph: GraphSpec::ErdosRenyi { n: 200, p: 0.03 },
        design: Design::IidBernoulli { p: 0.5 },
        params: SimParams { tau: 0.0, theta: 2.0, alpha: 0.0, beta, seed: 5, ..SimParams::default() },
        model: OutcomeModel::Influence,
    };
    let test = TestSpec {
        kind: TestKind::Influence { tau0: 0.0, theta0: 0.0 },
        statistic: TestStatistic::default(),
        replications: 99,
    };
    let strong = calibrate(&test, &sim(3.0), 150, 0.05).unwrap();
    let weak = calibrate(&test, &sim(0.5), 150, 0.05).unwrap();
    assert!(weak.rejection_rate < strong.rejection_rate, "weak {weak:?} strong {strong:?}");
}
