//! Randomized stopping rules of the informed player built from PDMP
//! characteristics, their JSON descriptors, and the belief-consistency check.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::examples::Example2Params;
use crate::model::{exp_sample, marginal_flow, simulate_chain, GameSpec, Trajectory};
use crate::montecarlo::{replication_rng, BLOCK};
use crate::pdmp::{Characteristics, Decomposition, DualSurface, HazardTable};

pub const SPLIT_NOTE: &str = "time-0 split uses the Bayes-consistent probability m*p''_k/p_k given X_0 = k; \
the literal indicator {u <= m, X_0 in supp(p')} does not leave posterior p'' on {mu = 0} and is not used";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyCase {
    Never,
    Case1,
    Case2,
    Case3,
    Thinning,
    PureTimes,
}

/// Enough to rebuild a strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategySource {
    Example1 {
        r: f64,
        p: f64,
        q: f64,
    },
    Example2 {
        params: Example2Params,
        p: f64,
    },
    Never,
    StopNow,
    /// Deterministic time per initial state of the observed chain.
    Times {
        times: Vec<Option<f64>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyDescriptor {
    pub case: StrategyCase,
    #[serde(default)]
    pub z: Option<Vec<f64>>,
    #[serde(default)]
    pub z_prime: Option<Vec<f64>>,
    #[serde(default)]
    pub z_second: Option<Vec<f64>>,
    #[serde(default)]
    pub m: Option<f64>,
    pub source: StrategySource,
    #[serde(default)]
    pub value_claim: Option<f64>,
    #[serde(default)]
    pub note: Option<String>,
}

impl StrategyDescriptor {
    pub fn new(case: StrategyCase, source: StrategySource) -> Self {
        StrategyDescriptor {
            case,
            z: None,
            z_prime: None,
            z_second: None,
            m: None,
            source,
            value_claim: None,
            note: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::input(format!("strategy descriptor: {e}")))
    }

    /// Rebuilds the strategy, keeping this descriptor's claim and note.
    pub fn build(&self) -> Result<MixedStoppingStrategy> {
        let mut s = match &self.source {
            StrategySource::Example1 { r, p, q } => crate::examples::e1_optimal_mu(*r, *p, *q)?,
            StrategySource::Example2 { params, p } => crate::examples::e2_optimal_mu(params, *p)?,
            StrategySource::Never => MixedStoppingStrategy::never(),
            StrategySource::StopNow => MixedStoppingStrategy::stop_now(),
            StrategySource::Times { times } => {
                MixedStoppingStrategy::pure_times(times.iter().map(|t| t.unwrap_or(f64::INFINITY)).collect())?
            }
        };
        if self.value_claim.is_some() {
            s.descriptor.value_claim = self.value_claim;
        }
        if self.note.is_some() && s.descriptor.note.is_none() {
            s.descriptor.note = self.note.clone();
        }
        Ok(s)
    }
}

#[derive(Clone, Debug)]
enum Rule {
    Never,
    StopNow,
    Times(Vec<f64>),
    Case1(Arc<HazardTable>),
    Thinning { table: Arc<HazardTable>, bound: f64 },
    Case2 { stop_prob: Vec<f64>, then: Box<Rule> },
}

/// A mixed stopping time of the player observing `path`.
#[derive(Clone, Debug)]
pub struct MixedStoppingStrategy {
    rule: Rule,
    pub descriptor: StrategyDescriptor,
}

impl MixedStoppingStrategy {
    pub fn never() -> Self {
        MixedStoppingStrategy {
            rule: Rule::Never,
            descriptor: StrategyDescriptor::new(StrategyCase::Never, StrategySource::Never),
        }
    }

    pub fn stop_now() -> Self {
        MixedStoppingStrategy {
            rule: Rule::StopNow,
            descriptor: StrategyDescriptor::new(StrategyCase::Case3, StrategySource::StopNow),
        }
    }

    /// Stops at `times[k]` when the observed chain starts in `k`.
    pub fn pure_times(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.iter().any(|t| t.is_nan() || *t < 0.0) {
            return Err(Error::input("pure times must be nonnegative, one per state"));
        }
        let src = StrategySource::Times {
            times: times.iter().map(|t| t.is_finite().then_some(*t)).collect(),
        };
        Ok(MixedStoppingStrategy {
            rule: Rule::Times(times),
            descriptor: StrategyDescriptor::new(StrategyCase::PureTimes, src),
        })
    }

    pub fn case(&self) -> StrategyCase {
        self.descriptor.case
    }

    pub fn with_source(mut self, source: StrategySource) -> Self {
        self.descriptor.source = source;
        self
    }

    pub fn with_claim(mut self, value: f64) -> Self {
        self.descriptor.value_claim = Some(value);
        self
    }

    /// Realized stopping time on `path`; `+∞` if it would fall past the
    /// path horizon. Randomization is drawn lazily, segment by segment.
    pub fn stop_time<R: Rng + ?Sized>(&self, path: &Trajectory, rng: &mut R) -> Result<f64> {
        run_rule(&self.rule, path, rng)
    }

    /// Belief about the observed chain given no stop by `t`, when the rule
    /// carries a deterministic orbit.
    pub fn predicted_belief(&self, t: f64) -> Option<Vec<f64>> {
        fn of(rule: &Rule, t: f64) -> Option<Vec<f64>> {
            match rule {
                Rule::Case1(table) | Rule::Thinning { table, .. } => table.state_at(t),
                Rule::Case2 { then, .. } => of(then, t),
                _ => None,
            }
        }
        of(&self.rule, t)
    }
}

fn run_rule<R: Rng + ?Sized>(rule: &Rule, path: &Trajectory, rng: &mut R) -> Result<f64> {
    match rule {
        Rule::Never => Ok(f64::INFINITY),
        Rule::StopNow => Ok(0.0),
        Rule::Times(times) => {
            let k = path.initial_state();
            times
                .get(k)
                .copied()
                .ok_or_else(|| Error::input(format!("no stopping time for initial state {k}")))
        }
        Rule::Case1(table) => {
            let end = path.horizon().min(table.horizon());
            let mut start = 0.0;
            let mut state = path.initial_state();
            let events = path.events();
            for n in 0..=events.len() {
                let seg_end = events.get(n).map_or(end, |e| e.0.min(end));
                let t = table.first_passage(state, start, exp_sample(1.0, rng));
                if t < seg_end || (n == events.len() && t <= end) {
                    return Ok(t);
                }
                if seg_end >= end {
                    break;
                }
                start = events[n].0;
                state = events[n].1;
            }
            Ok(f64::INFINITY)
        }
        Rule::Thinning { table, bound } => {
            if *bound <= 0.0 {
                return Ok(f64::INFINITY);
            }
            let end = path.horizon().min(table.horizon());
            let mut t = 0.0;
            loop {
                t += exp_sample(*bound, rng);
                if t > end {
                    return Ok(f64::INFINITY);
                }
                let k = path.state_at(t)?;
                if rng.gen::<f64>() * bound < table.rate_at(k, t) {
                    return Ok(t);
                }
            }
        }
        Rule::Case2 { stop_prob, then } => {
            let k = path.initial_state();
            let prob = *stop_prob
                .get(k)
                .ok_or_else(|| Error::input("initial state out of range"))?;
            if rng.gen::<f64>() < prob {
                return Ok(0.0);
            }
            run_rule(then, path, rng)
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m: f64, (x, y)| m.max((x - y).abs()))
}

fn case1_rule<C: Characteristics + ?Sized>(ch: &C, z0: &[f64], horizon: f64) -> Result<Rule> {
    if !ch.in_eh(z0, 1e-9) {
        return Err(Error::input("case 1 needs a starting point in E_H"));
    }
    Ok(Rule::Case1(Arc::new(HazardTable::for_stopping(ch, z0, horizon)?)))
}

/// Case 1: stop with intensity `λ(z_t)·φ_p(z_t)_k/(p_t)_k` while the chain
/// is in `k`, realized by one exponential threshold per chain segment.
pub fn build_mu_case1<C: Characteristics + ?Sized>(ch: &C, z0: &[f64], horizon: f64) -> Result<MixedStoppingStrategy> {
    let rule = case1_rule(ch, z0, horizon)?;
    let mut d = StrategyDescriptor::new(StrategyCase::Case1, StrategySource::Never);
    d.z = Some(z0.to_vec());
    Ok(MixedStoppingStrategy { rule, descriptor: d })
}

/// Same law as [`build_mu_case1`] by thinning a Poisson clock of rate
/// 1.5·sup ρ; refuses orbits whose intensity is unbounded.
pub fn build_mu_case1_thinning<C: Characteristics + ?Sized>(
    ch: &C,
    z0: &[f64],
    horizon: f64,
) -> Result<MixedStoppingStrategy> {
    if !ch.in_eh(z0, 1e-9) {
        return Err(Error::input("case 1 needs a starting point in E_H"));
    }
    let table = HazardTable::for_stopping(ch, z0, horizon)?;
    let mut bound: f64 = 0.0;
    for c in 0..ch.k_size() {
        if table.unbounded(c) {
            return Err(Error::integrity(format!(
                "stopping intensity of state {c} is unbounded on the orbit"
            )));
        }
        bound = bound.max(table.max_rate(c));
    }
    let mut d = StrategyDescriptor::new(StrategyCase::Thinning, StrategySource::Never);
    d.z = Some(z0.to_vec());
    Ok(MixedStoppingStrategy {
        rule: Rule::Thinning {
            table: Arc::new(table),
            bound: 1.5 * bound,
        },
        descriptor: d,
    })
}

/// Case 2: stop at 0 with probability `m·p″_k/p_k` given `X₀ = k`, otherwise
/// run case 1 from `z′`.
pub fn build_mu_case2<C: Characteristics + ?Sized, S: DualSurface + ?Sized>(
    ch: &C,
    surface: &S,
    z: &[f64],
    dec: &Decomposition,
    horizon: f64,
) -> Result<MixedStoppingStrategy> {
    let k = ch.k_size();
    let mix: Vec<f64> = dec
        .z_prime
        .iter()
        .zip(&dec.z_second)
        .map(|(a, b)| (1.0 - dec.m) * a + dec.m * b)
        .collect();
    let value_gap =
        ((1.0 - dec.m) * surface.value(&dec.z_prime) + dec.m * surface.value(&dec.z_second) - surface.value(z)).abs();
    if !(0.0..=1.0).contains(&dec.m)
        || dist(&mix, z) > 1e-9
        || value_gap > 1e-7
        || !ch.in_eh(&dec.z_prime, 1e-9)
        || !ch.in_s(&dec.z_second, 1e-9)
    {
        return Err(Error::input("decomposition does not satisfy SC5"));
    }
    let stop_prob: Vec<f64> = (0..k)
        .map(|i| {
            if z[i] > 0.0 {
                (dec.m * dec.z_second[i] / z[i]).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    let then = case1_rule(ch, &dec.z_prime, horizon)?;
    let mut d = StrategyDescriptor::new(StrategyCase::Case2, StrategySource::Never);
    d.z = Some(z.to_vec());
    d.z_prime = Some(dec.z_prime.clone());
    d.z_second = Some(dec.z_second.clone());
    d.m = Some(dec.m);
    d.note = Some(SPLIT_NOTE.to_string());
    Ok(MixedStoppingStrategy {
        rule: Rule::Case2 {
            stop_prob,
            then: Box::new(then),
        },
        descriptor: d,
    })
}

/// Case 3: `μ = 0`.
pub fn build_mu_case3<C: Characteristics + ?Sized>(ch: &C, z: &[f64]) -> Result<MixedStoppingStrategy> {
    if !ch.in_s(z, 1e-9) {
        return Err(Error::input("case 3 needs a point of S"));
    }
    let mut s = MixedStoppingStrategy::stop_now();
    s.descriptor.z = Some(z.to_vec());
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefReport {
    pub t: f64,
    pub n: usize,
    pub survivors: usize,
    pub estimate: Vec<f64>,
    pub std_error: Vec<f64>,
    pub predicted: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub inconclusive: bool,
}

impl BeliefReport {
    pub fn max_abs_z(&self) -> f64 {
        self.z_scores.iter().fold(0.0, |m: f64, z| m.max(z.abs()))
    }
}

/// Estimates `P(X_t = k | μ > t)` for the informed player's chain started
/// from `spec.p0` and compares with the rule's predicted belief.
pub fn belief_consistency(
    strategy: &MixedStoppingStrategy,
    spec: &GameSpec,
    t: f64,
    n: usize,
    seed: u64,
) -> Result<BeliefReport> {
    if !(t.is_finite() && t >= 0.0) || n == 0 {
        return Err(Error::input("need t ≥ 0 and n ≥ 1"));
    }
    let k = spec.k_size();
    let predicted = match strategy.predicted_belief(t) {
        Some(z) => z[..k].to_vec(),
        None if matches!(strategy.rule, Rule::Never) => marginal_flow(&spec.p0, &spec.r_gen, t).into_vec(),
        None => return Err(Error::input("strategy has no deterministic belief orbit")),
    };
    let blocks: Vec<Result<Vec<usize>>> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut counts = vec![0usize; k];
            for rep in b * BLOCK..((b + 1) * BLOCK).min(n) {
                let mut rng = replication_rng(seed, rep as u64);
                let x = simulate_chain(&spec.r_gen, &spec.p0, t, &mut rng);
                if strategy.stop_time(&x, &mut rng)? > t {
                    counts[x.state_at(t)?] += 1;
                }
            }
            Ok(counts)
        })
        .collect();
    let mut counts = vec![0usize; k];
    for b in blocks {
        for (c, v) in counts.iter_mut().zip(b?) {
            *c += v;
        }
    }
    let survivors: usize = counts.iter().sum();
    let s = survivors.max(1) as f64;
    let estimate: Vec<f64> = counts.iter().map(|c| *c as f64 / s).collect();
    let std_error: Vec<f64> = estimate.iter().map(|e| (e * (1.0 - e) / s).sqrt()).collect();
    let z_scores = estimate
        .iter()
        .zip(&predicted)
        .zip(&std_error)
        .map(|((e, p), se)| {
            if *se > 0.0 {
                (e - p) / se
            } else if (e - p).abs() < 1e-12 {
                0.0
            } else {
                // degenerate sample: fall back to the binomial error at the prediction
                (e - p) / (p * (1.0 - p) / s).sqrt().max(1.0 / s)
            }
        })
        .collect();
    Ok(BeliefReport {
        t,
        n,
        survivors,
        estimate,
        std_error,
        predicted,
        z_scores,
        inconclusive: survivors < 100,
    })
}
