//! Payoff estimation and best responses of the uninformed player.
//!
//! Replication `i` draws everything from stream `i` of a ChaCha8 generator
//! keyed by the run seed, and block results are reduced in index order, so
//! estimates do not depend on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{realized_payoff, simulate_chain, GameSpec};
use crate::pdmp::default_horizon;
use crate::strategy::MixedStoppingStrategy;

/// Replications per parallel work unit.
pub const BLOCK: usize = 1024;

pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayoffEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    pub seed: u64,
}

fn from_moments(sum: f64, sum_sq: f64, n: usize, seed: u64) -> PayoffEstimate {
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 {
        ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    PayoffEstimate {
        mean,
        std_error: (var / nf).sqrt(),
        n,
        seed,
    }
}

fn blocks(n: usize) -> impl IndexedParallelIterator<Item = std::ops::Range<usize>> {
    (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(move |b| b * BLOCK..((b + 1) * BLOCK).min(n))
}

/// Mean of the realized payoff over `n` joint simulations of (X, Y) and
/// both players' randomizations.
pub fn estimate_payoff(
    spec: &GameSpec,
    strat1: &MixedStoppingStrategy,
    strat2: &MixedStoppingStrategy,
    n: usize,
    seed: u64,
) -> Result<PayoffEstimate> {
    if n == 0 {
        return Err(Error::input("n must be at least 1"));
    }
    let horizon = default_horizon(spec.r);
    let parts: Vec<Result<(f64, f64)>> = blocks(n)
        .map(|range| {
            let (mut s, mut s2) = (0.0, 0.0);
            for rep in range {
                let mut rng = replication_rng(seed, rep as u64);
                let x = simulate_chain(&spec.r_gen, &spec.p0, horizon, &mut rng);
                let y = simulate_chain(&spec.q_gen, &spec.q0, horizon, &mut rng);
                let mu = strat1.stop_time(&x, &mut rng)?;
                let nu = strat2.stop_time(&y, &mut rng)?;
                let j = realized_payoff(spec, &x, &y, mu, nu)?.payoff;
                s += j;
                s2 += j * j;
            }
            Ok((s, s2))
        })
        .collect();
    let (mut s, mut s2) = (0.0, 0.0);
    for p in parts {
        let (a, b) = p?;
        s += a;
        s2 += b;
    }
    Ok(from_moments(s, s2, n, seed))
}

/// Deterministic stopping times of the uninformed player, one per initial
/// state of Y, each chosen from `grid`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PureResponseFamily {
    pub grid: Vec<f64>,
    pub n_states: usize,
    pub label: String,
}

impl PureResponseFamily {
    pub fn new(mut grid: Vec<f64>, n_states: usize, label: impl Into<String>) -> Result<Self> {
        if n_states == 0 || grid.iter().any(|t| t.is_nan() || *t < 0.0) {
            return Err(Error::input(
                "response grid needs nonnegative times and at least one state",
            ));
        }
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup();
        if grid.first() != Some(&0.0) {
            grid.insert(0, 0.0);
        }
        if grid.last() != Some(&f64::INFINITY) {
            grid.push(f64::INFINITY);
        }
        Ok(PureResponseFamily {
            grid,
            n_states,
            label: label.into(),
        })
    }

    /// `points` log-spaced times on `[1e−3, T_max]` plus 0 and +∞, for each
    /// initial state of Y.
    pub fn log_grid(spec: &GameSpec, points: usize) -> Self {
        let t_max = default_horizon(spec.r);
        let lo: f64 = 1e-3;
        let grid = (0..points)
            .map(|i| {
                if points == 1 {
                    t_max
                } else {
                    lo * (t_max / lo).powf(i as f64 / (points - 1) as f64)
                }
            })
            .collect();
        let label = format!("deterministic time per initial Y state, {points} log-spaced points + {{0, inf}}");
        PureResponseFamily::new(grid, spec.l_size(), label).expect("valid grid")
    }

    pub fn largest_finite(&self) -> f64 {
        self.grid.iter().rev().copied().find(|t| t.is_finite()).unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub value: f64,
    pub std_error: f64,
    /// Minimizing time per initial state of Y (`None` = never).
    pub argmin: Vec<Option<f64>>,
    pub n: usize,
    pub seed: u64,
    /// The argmin sits on the largest finite grid time.
    pub coarse: bool,
}

/// Infimum over the family of the estimated payoff against `strat1`, with
/// common random numbers across family members.
pub fn best_response_value(
    spec: &GameSpec,
    strat1: &MixedStoppingStrategy,
    family: &PureResponseFamily,
    n: usize,
    seed: u64,
) -> Result<BestResponse> {
    if n == 0 {
        return Err(Error::input("n must be at least 1"));
    }
    if family.n_states != spec.l_size() {
        return Err(Error::input("response family does not match the number of Y states"));
    }
    let horizon = default_horizon(spec.r);
    if family.largest_finite() > horizon {
        return Err(Error::input("response grid extends beyond the simulation horizon"));
    }
    let g = family.grid.len();
    let l = family.n_states;
    let parts: Vec<Result<(Vec<f64>, Vec<f64>)>> = blocks(n)
        .map(|range| {
            let mut s = vec![0.0; l * g];
            let mut s2 = vec![0.0; l * g];
            for rep in range {
                let mut rng = replication_rng(seed, rep as u64);
                let x = simulate_chain(&spec.r_gen, &spec.p0, horizon, &mut rng);
                let y = simulate_chain(&spec.q_gen, &spec.q0, horizon, &mut rng);
                let mu = strat1.stop_time(&x, &mut rng)?;
                let row = y.initial_state() * g;
                for (i, &nu) in family.grid.iter().enumerate() {
                    let j = realized_payoff(spec, &x, &y, mu, nu)?.payoff;
                    s[row + i] += j;
                    s2[row + i] += j * j;
                }
            }
            Ok((s, s2))
        })
        .collect();
    let mut s = vec![0.0; l * g];
    let mut s2 = vec![0.0; l * g];
    for p in parts {
        let (a, b) = p?;
        for i in 0..l * g {
            s[i] += a[i];
            s2[i] += b[i];
        }
    }
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut argmin = Vec::with_capacity(l);
    let mut coarse = false;
    let edge = family.largest_finite();
    for ell in 0..l {
        let row = &s[ell * g..(ell + 1) * g];
        // first minimizer keeps ties deterministic
        let best = (0..g).fold(0, |b, i| if row[i] < row[b] { i } else { b });
        sum += row[best];
        sum_sq += s2[ell * g + best];
        let t = family.grid[best];
        coarse |= t == edge && edge > 0.0;
        argmin.push(t.is_finite().then_some(t));
    }
    let est = from_moments(sum, sum_sq, n, seed);
    Ok(BestResponse {
        value: est.mean,
        std_error: est.std_error,
        argmin,
        n,
        seed,
        coarse,
    })
}

/// Verification report: best response minus the claimed value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub value_claim: f64,
    pub best_response: f64,
    pub gap: f64,
    pub std_error: f64,
    pub n: usize,
    pub family: String,
    pub seed: u64,
    pub argmin: Vec<Option<f64>>,
    pub coarse: bool,
}

impl GapReport {
    /// Gap significantly below zero: `gap < −3·s.e. − slack`.
    pub fn exploited(&self, slack: f64) -> bool {
        self.gap < -3.0 * self.std_error - slack
    }
}

pub fn exploit_gap(
    spec: &GameSpec,
    strat1: &MixedStoppingStrategy,
    value_claim: f64,
    family: &PureResponseFamily,
    n: usize,
    seed: u64,
) -> Result<GapReport> {
    let br = best_response_value(spec, strat1, family, n, seed)?;
    let gap = if value_claim == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        br.value - value_claim
    };
    Ok(GapReport {
        value_claim,
        best_response: br.value,
        gap,
        std_error: br.std_error,
        n,
        family: family.label.clone(),
        seed,
        argmin: br.argmin,
        coarse: br.coarse,
    })
}
