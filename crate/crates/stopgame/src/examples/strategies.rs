//! Optimal stopping rules of the informed player in both examples.

use super::characteristics::{e1_characteristics, e1_point, e2_characteristics, E1Surface, E2Surface};
use super::example1::{e1_value, e1_value_slopes_q};
use super::example2::{CaseTag, Example2Params};
use crate::conjugate::midpoint_selection;
use crate::error::{Error, Result};
use crate::pdmp::{default_horizon, Characteristics};
use crate::strategy::{
    build_mu_case1, build_mu_case2, build_mu_case3, MixedStoppingStrategy, StrategyCase, StrategySource,
};

/// Dual coordinate used at `(p, q)`: midpoint of `∂⁻_q V`.
pub fn e1_selected_y(p: f64, q: f64) -> f64 {
    midpoint_selection(e1_value_slopes_q(p, q))
}

/// Optimal μ for Example 1 at `(p, q)` with discount `r`.
pub fn e1_optimal_mu(r: f64, p: f64, q: f64) -> Result<MixedStoppingStrategy> {
    if !((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&q)) {
        return Err(Error::input(format!("(p, q) = ({p}, {q}) is outside [0,1]²")));
    }
    let ch = e1_characteristics(r)?;
    let y = e1_selected_y(p, q);
    let z = e1_point(p, y);
    let horizon = default_horizon(r);
    let mut s = if ch.in_s(&z, 1e-12) {
        build_mu_case3(&ch, &z)?
    } else if y <= 0.0 || p == 0.0 {
        let mut s = MixedStoppingStrategy::never();
        s.descriptor.z = Some(z.clone());
        s
    } else if ch.in_eh(&z, 1e-12) {
        build_mu_case1(&ch, &z, horizon)?
    } else {
        let dec = ch
            .decompose(&z)
            .ok_or_else(|| Error::integrity(format!("no decomposition at (p, y) = ({p}, {y})")))?;
        build_mu_case2(&ch, &E1Surface { r }, &z, &dec, horizon)?
    };
    s.descriptor.source = StrategySource::Example1 { r, p, q };
    s.descriptor.value_claim = Some(e1_value(p, q));
    Ok(s)
}

/// Optimal μ for Example 2 at belief `p` (case I; case III stops at once).
pub fn e2_optimal_mu(params: &Example2Params, p: f64) -> Result<MixedStoppingStrategy> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::input(format!("p = {p} is outside [0,1]")));
    }
    let source = StrategySource::Example2 { params: *params, p };
    let claim = params.value(p)?;
    match params.case() {
        CaseTag::I => {}
        CaseTag::III => return Ok(MixedStoppingStrategy::stop_now().with_source(source).with_claim(claim)),
        CaseTag::II => return Err(Error::input("no optimal-strategy construction for case II parameters")),
    }
    let ch = e2_characteristics(params)?;
    let z = vec![p, 1.0 - p];
    let horizon = default_horizon(params.r);
    let mut s = if ch.in_s(&z, 1e-12) {
        build_mu_case3(&ch, &z)?
    } else if (p - ch.p0).abs() <= 1e-12 {
        build_mu_case1(&ch, &[ch.p0, 1.0 - ch.p0], horizon)?
    } else if p < ch.p0 {
        build_mu_case1(&ch, &z, horizon)?
    } else {
        let dec = ch
            .decompose(&z)
            .ok_or_else(|| Error::integrity("no decomposition above p0"))?;
        build_mu_case2(&ch, &E2Surface::new(params)?, &z, &dec, horizon)?
    };
    s.descriptor.source = source;
    s.descriptor.value_claim = Some(claim);
    debug_assert!(s.case() != StrategyCase::Thinning);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Trajectory;
    use crate::montecarlo::replication_rng;

    #[test]
    fn e1_dispatch() {
        assert_eq!(e1_optimal_mu(1.0, 0.75, 0.25).unwrap().case(), StrategyCase::Never);
        assert_eq!(e1_optimal_mu(1.0, 0.0, 0.7).unwrap().case(), StrategyCase::Never);
        assert_eq!(e1_optimal_mu(1.0, 0.25, 0.5).unwrap().case(), StrategyCase::Case1);
        let d = e1_optimal_mu(1.0, 0.75, 0.75).unwrap();
        assert_eq!(d.case(), StrategyCase::Case2);
        assert!((d.descriptor.z_prime.as_ref().unwrap()[0] - 0.25).abs() < 1e-12);
        assert!(d.descriptor.note.is_some());
        // q = 1, p = 1: y ≥ 2 puts z in S
        assert_eq!(e1_optimal_mu(1.0, 1.0, 1.0).unwrap().case(), StrategyCase::Case3);
    }

    #[test]
    fn e1_zone_e_stops_iff_state_zero() {
        // at q = 1 the selected slope is 1 + p
        let p = 0.3;
        let q = 1.0;
        let y = e1_selected_y(p, q);
        assert!(y >= 1.0 + p);
        let s = e1_optimal_mu(1.0, p, q).unwrap();
        let mut rng = replication_rng(1, 0);
        for _ in 0..50 {
            assert_eq!(s.stop_time(&Trajectory::constant(0, 10.0), &mut rng).unwrap(), 0.0);
            assert_eq!(
                s.stop_time(&Trajectory::constant(1, 10.0), &mut rng).unwrap(),
                f64::INFINITY
            );
        }
    }

    #[test]
    fn e2_dispatch_and_rebuild() {
        let params = Example2Params::reference();
        let p0 = params.p0().unwrap();
        assert_eq!(e2_optimal_mu(&params, p0).unwrap().case(), StrategyCase::Case1);
        assert_eq!(e2_optimal_mu(&params, 0.2).unwrap().case(), StrategyCase::Case1);
        let s = e2_optimal_mu(&params, 0.5).unwrap();
        assert_eq!(s.case(), StrategyCase::Case2);
        assert!((s.descriptor.value_claim.unwrap() - 1.75).abs() < 1e-9);
        let text = s.descriptor.to_json();
        let back = crate::strategy::StrategyDescriptor::from_json(&text).unwrap();
        assert_eq!(back, s.descriptor);
        assert_eq!(back.build().unwrap().descriptor, s.descriptor);
        let case3 = Example2Params::new(1.0, 1.0, 3.0, (0.6, 2.0), (1.0, 3.0)).unwrap();
        assert_eq!(e2_optimal_mu(&case3, 0.4).unwrap().case(), StrategyCase::Case3);
    }
}
