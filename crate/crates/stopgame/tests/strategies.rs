mod common;

use common::{ks_distance, proportion};
use rand::Rng;
use stopgame::examples::*;
use stopgame::model::{marginal_flow, simulate_chain, Trajectory};
use stopgame::montecarlo::replication_rng;
use stopgame::pdmp::{default_horizon, Characteristics};
use stopgame::strategy::{
    belief_consistency, build_mu_case1, build_mu_case1_thinning, MixedStoppingStrategy, StrategyCase,
};

#[test]
fn e2_stops_at_rate_lambda1_while_in_state_zero() {
    let params = Example2Params::reference();
    let p0 = params.p0().unwrap();
    let lambda1 = params.lambda1().unwrap();
    assert!((lambda1 - 1.5).abs() < 1e-9);
    let s = e2_optimal_mu(&params, p0).unwrap();
    let n = 20_000;
    let times: Vec<f64> = (0..n)
        .map(|rep| {
            s.stop_time(&Trajectory::constant(0, 100.0), &mut replication_rng(1, rep))
                .unwrap()
        })
        .collect();
    let (m, se) = common::mean_se(&times);
    assert!((m - 1.0 / lambda1).abs() <= 3.0 * se, "{m} ± {se}");
    let mut rng = replication_rng(1, 0);
    for _ in 0..100 {
        assert_eq!(
            s.stop_time(&Trajectory::constant(1, 100.0), &mut rng).unwrap(),
            f64::INFINITY
        );
    }
}

#[test]
fn e2_below_p0_waits_before_stopping() {
    let params = Example2Params::reference();
    let s = e2_optimal_mu(&params, 0.2).unwrap();
    let wait = params.waiting_time(0.2).unwrap();
    assert!((wait - 0.5 * 1.8f64.ln()).abs() < 1e-9);
    let mut rng = replication_rng(2, 0);
    for _ in 0..2000 {
        assert!(s.stop_time(&Trajectory::constant(0, 100.0), &mut rng).unwrap() >= wait - 1e-3);
    }
}

/// P(μ > t | X ≡ 0) along the edge orbit, by midpoint quadrature of the
/// belief ODE and trapezoid accumulation of the hazard r(1−2p)/(2p).
fn e1_edge_survival(p: f64, r: f64, t: f64) -> f64 {
    let rhs = |p: f64| -0.5 * r * (1.0 - 2.0 * p) * (1.0 - p);
    let rho = |p: f64| r * (1.0 - 2.0 * p) / (2.0 * p);
    let steps = 200_000;
    let h = t / steps as f64;
    let (mut p, mut hazard) = (p, 0.0);
    for _ in 0..steps {
        let next = p + h * rhs(p + 0.5 * h * rhs(p));
        hazard += 0.5 * h * (rho(p) + rho(next));
        p = next;
    }
    (-hazard).exp()
}

#[test]
fn e1_case1_survival_matches_quadrature() {
    let s = e1_optimal_mu(1.0, 0.25, 0.5).unwrap();
    assert_eq!(s.case(), StrategyCase::Case1);
    let n = 100_000;
    let times: Vec<f64> = (0..n)
        .map(|rep| {
            s.stop_time(&Trajectory::constant(0, 20.0), &mut replication_rng(3, rep))
                .unwrap()
        })
        .collect();
    for t in [0.2, 0.5, 0.75] {
        let (est, se) = proportion(times.iter().filter(|&&m| m > t).count(), n as usize);
        let exact = e1_edge_survival(0.25, 1.0, t);
        assert!((est - exact).abs() <= 3.0 * se, "t={t}: {est} ± {se} vs {exact}");
    }
    let tau = 2.0 * 1.5f64.ln();
    assert!(times.iter().all(|&m| m <= tau + 1e-3));
}

#[test]
fn e1_zone_b_and_d_initial_stops() {
    // zone B at (p, q) = (3/4, 1/2): y = 1/2, stop mass y/(2p) = 1/3 given X₀ = 0
    // zone D at (3/4, 3/4): y = 14/9, mass (p−p′)/(p(1−p′)) = 8/9 with p′ = 1/4
    for (q, expected) in [(0.5, 1.0 / 3.0), (0.75, 8.0 / 9.0)] {
        let s = e1_optimal_mu(1.0, 0.75, q).unwrap();
        assert_eq!(s.case(), StrategyCase::Case2);
        let n = 50_000;
        let mut hits = 0;
        let mut rng = replication_rng(4, 0);
        for _ in 0..n {
            if s.stop_time(&Trajectory::constant(0, 20.0), &mut rng).unwrap() == 0.0 {
                hits += 1;
            }
            assert!(s.stop_time(&Trajectory::constant(1, 20.0), &mut rng).unwrap() > 0.0);
        }
        let (est, se) = proportion(hits, n);
        assert!((est - expected).abs() <= 3.0 * se, "q={q}: {est} vs {expected}");
    }
    // zone B continues from y = 0, where nothing happens
    let s = e1_optimal_mu(1.0, 0.75, 0.5).unwrap();
    let mut rng = replication_rng(4, 1);
    for _ in 0..1000 {
        let m = s.stop_time(&Trajectory::constant(0, 20.0), &mut rng).unwrap();
        assert!(m == 0.0 || m == f64::INFINITY);
    }
}

#[test]
fn thinning_and_inversion_agree_in_law() {
    let params = Example2Params::reference();
    let ch = e2_characteristics(&params).unwrap();
    let spec = params.spec(ch.p0).unwrap();
    let horizon = default_horizon(params.r);
    let z0 = [ch.p0, 1.0 - ch.p0];
    let inv = build_mu_case1(&ch, &z0, horizon).unwrap();
    let thin = build_mu_case1_thinning(&ch, &z0, horizon).unwrap();
    assert_eq!(thin.case(), StrategyCase::Thinning);
    let n = 100_000;
    let sample = |s: &MixedStoppingStrategy, seed: u64| -> Vec<f64> {
        (0..n)
            .map(|rep| {
                let mut rng = replication_rng(seed, rep);
                let x = simulate_chain(&spec.r_gen, &spec.p0, horizon, &mut rng);
                s.stop_time(&x, &mut rng).unwrap()
            })
            .collect()
    };
    let d = ks_distance(sample(&inv, 10), sample(&thin, 11));
    assert!(d < 0.01, "KS distance {d}");
}

#[test]
fn thinning_refuses_unbounded_intensity() {
    // the Example-1 edge orbit reaches p = 0 where r(1−2p)/(2p) blows up
    let ch = e1_characteristics(1.0).unwrap();
    let z = e1_point(0.25, c_boundary(0.25));
    let e = build_mu_case1_thinning(&ch, &z, default_horizon(1.0)).unwrap_err();
    assert!(!e.is_input());
}

#[test]
fn decisions_are_adapted() {
    let params = Example2Params::reference();
    let p0 = params.p0().unwrap();
    let strategies = [
        (e2_optimal_mu(&params, 0.2).unwrap(), params.spec(0.2).unwrap()),
        (e2_optimal_mu(&params, p0).unwrap(), params.spec(p0).unwrap()),
        (e2_optimal_mu(&params, 0.5).unwrap(), params.spec(0.5).unwrap()),
        (
            e1_optimal_mu(1.0, 0.25, 0.5).unwrap(),
            Example1Params::new(1.0).unwrap().spec(0.25, 0.5).unwrap(),
        ),
        (
            e1_optimal_mu(1.0, 0.75, 0.75).unwrap(),
            Example1Params::new(1.0).unwrap().spec(0.75, 0.75).unwrap(),
        ),
    ];
    let mut checked = 0;
    for (k, (s, spec)) in strategies.iter().enumerate() {
        for rep in 0..1000u64 {
            let mut rng = replication_rng(20 + k as u64, rep);
            let x = simulate_chain(&spec.r_gen, &spec.p0, 50.0, &mut rng);
            let seed_rng = replication_rng(40 + k as u64, rep);
            let mu = s.stop_time(&x, &mut seed_rng.clone()).unwrap();
            if !mu.is_finite() {
                continue;
            }
            let mut tail = Vec::new();
            let mut t = mu;
            for _ in 0..5 {
                t += rng.gen_range(1e-6..2.0);
                tail.push((t, rng.gen_range(0..spec.k_size())));
            }
            let y = x.with_tail_after(mu, &tail).unwrap();
            assert_eq!(
                s.stop_time(&y, &mut seed_rng.clone()).unwrap(),
                mu,
                "strategy {k}, rep {rep}"
            );
            checked += 1;
        }
    }
    assert!(checked > 1000);
}

#[test]
fn belief_without_stopping_is_the_marginal_flow() {
    let params = Example2Params::reference();
    let spec = params.spec(0.2).unwrap();
    let rep = belief_consistency(&MixedStoppingStrategy::never(), &spec, 1.0, 100_000, 8).unwrap();
    let flow = marginal_flow(&spec.p0, &spec.r_gen, 1.0);
    assert_eq!(rep.predicted, flow.weights());
    assert!(rep.max_abs_z() <= 3.0, "{rep:?}");
    assert_eq!(rep.survivors, 100_000);
}

#[test]
fn belief_at_p0_is_stationary() {
    let params = Example2Params::reference();
    let p0 = params.p0().unwrap();
    let s = e2_optimal_mu(&params, p0).unwrap();
    let rep = belief_consistency(&s, &params.spec(p0).unwrap(), 1.0, 100_000, 9).unwrap();
    assert!((rep.predicted[0] - p0).abs() < 1e-9);
    assert!(rep.max_abs_z() <= 3.0 && !rep.inconclusive, "{rep:?}");
}

#[test]
fn descriptors_rebuild_the_same_law() {
    let params = Example2Params::reference();
    for s in [
        e2_optimal_mu(&params, 0.5).unwrap(),
        e1_optimal_mu(1.0, 0.75, 0.75).unwrap(),
    ] {
        let rebuilt = s.descriptor.build().unwrap();
        let mut a = replication_rng(30, 0);
        let mut b = replication_rng(30, 0);
        for k in [0, 1, 0, 1] {
            let x = Trajectory::constant(k, 30.0);
            assert_eq!(s.stop_time(&x, &mut a).unwrap(), rebuilt.stop_time(&x, &mut b).unwrap());
        }
    }
    let ch = e1_characteristics(1.0).unwrap();
    assert!(ch.in_s(&e1_point(1.0, 2.5), 0.0));
}
