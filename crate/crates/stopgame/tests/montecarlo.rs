use stopgame::examples::*;
use stopgame::montecarlo::{best_response_value, estimate_payoff, exploit_gap, PureResponseFamily};
use stopgame::strategy::MixedStoppingStrategy;

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

#[test]
fn standard_error_shrinks_like_inverse_root_n() {
    let params = Example2Params::reference();
    let spec = params.spec(0.5).unwrap();
    let s1 = e2_optimal_mu(&params, 0.5).unwrap();
    let s2 = MixedStoppingStrategy::pure_times(vec![2.0]).unwrap();
    let se: Vec<f64> = [1_000, 10_000, 100_000]
        .iter()
        .map(|&n| estimate_payoff(&spec, &s1, &s2, n, 3).unwrap().std_error)
        .collect();
    for w in se.windows(2) {
        let ratio = w[0] / w[1] / 10f64.sqrt();
        assert!((1.0 / 1.3..=1.3).contains(&ratio), "{se:?}");
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let params = Example2Params::reference();
    let spec = params.spec(0.2).unwrap();
    let s1 = e2_optimal_mu(&params, 0.2).unwrap();
    let fam = PureResponseFamily::log_grid(&spec, 30);
    let one = pool(1).install(|| best_response_value(&spec, &s1, &fam, 5_000, 9).unwrap());
    let three = pool(3).install(|| best_response_value(&spec, &s1, &fam, 5_000, 9).unwrap());
    assert_eq!(one, three);
    assert_eq!(one.value.to_bits(), three.value.to_bits());
}

#[test]
fn optimal_play_at_p0_is_not_exploited() {
    let params = Example2Params::reference();
    let p0 = params.p0().unwrap();
    let spec = params.spec(p0).unwrap();
    let s1 = e2_optimal_mu(&params, p0).unwrap();
    let fam = PureResponseFamily::log_grid(&spec, 200);
    let rep = exploit_gap(&spec, &s1, params.f_at(p0), &fam, 100_000, 1).unwrap();
    assert!(rep.best_response >= params.f_at(p0) - 0.05, "{rep:?}");
    assert!(!rep.exploited(0.05));
}

#[test]
fn e1_optimal_play_is_not_exploited() {
    let spec = Example1Params::new(1.0).unwrap().spec(0.25, 0.5).unwrap();
    let s1 = e1_optimal_mu(1.0, 0.25, 0.5).unwrap();
    let fam = PureResponseFamily::log_grid(&spec, 200);
    let rep = exploit_gap(&spec, &s1, -1.0 / 6.0, &fam, 100_000, 2).unwrap();
    assert!(rep.best_response >= -1.0 / 6.0 - 0.05, "{rep:?}");
    assert_eq!(rep.argmin.len(), 2);
}

#[test]
fn stopping_at_once_is_exploited() {
    let params = Example2Params::reference();
    let p = 0.2;
    let spec = params.spec(p).unwrap();
    let fam = PureResponseFamily::log_grid(&spec, 50);
    let claim = params.value(p).unwrap();
    let rep = exploit_gap(&spec, &MixedStoppingStrategy::stop_now(), claim, &fam, 20_000, 4).unwrap();
    assert!(rep.exploited(0.05));
    assert!(
        (rep.gap - (params.h_at(p) - claim)).abs() <= 3.0 * rep.std_error,
        "{rep:?}"
    );
}
