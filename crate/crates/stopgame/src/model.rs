//! Game primitives: beliefs, generators, payoffs, chain trajectories.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CLAMP_TOL: f64 = 1e-12;
const SUM_TOL: f64 = 1e-9;

/// A probability vector on a finite state set.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::input("simplex point has no coordinates"));
        }
        let mut w = weights;
        for (k, x) in w.iter_mut().enumerate() {
            if !x.is_finite() {
                return Err(Error::input(format!("weight {k} is not finite")));
            }
            if *x < -CLAMP_TOL {
                return Err(Error::input(format!("weight {k} is negative ({x})")));
            }
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > SUM_TOL {
            return Err(Error::input(format!("weights sum to {s}, not 1")));
        }
        for x in w.iter_mut() {
            *x /= s;
        }
        Ok(SimplexPoint(w))
    }

    pub fn dirac(dim: usize, k: usize) -> Self {
        let mut w = vec![0.0; dim];
        w[k] = 1.0;
        SimplexPoint(w)
    }

    pub fn uniform(dim: usize) -> Self {
        SimplexPoint(vec![1.0 / dim as f64; dim])
    }

    /// Two-state point with weight `p` on state 0.
    pub fn scalar(p: f64) -> Result<Self> {
        SimplexPoint::new(vec![p, 1.0 - p])
    }

    /// Projects a vector that is a probability vector up to rounding.
    pub(crate) fn from_numeric(mut w: Vec<f64>) -> Self {
        for x in w.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let s: f64 = w.iter().sum();
        for x in w.iter_mut() {
            *x /= s;
        }
        SimplexPoint(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Infinitesimal generator of a continuous-time Markov chain.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorMatrix(DMatrix<f64>);

impl GeneratorMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::input(format!(
                "generator must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        for i in 0..n {
            let mut sum = 0.0;
            let mut scale: f64 = 1.0;
            for j in 0..n {
                let v = m[(i, j)];
                if !v.is_finite() {
                    return Err(Error::input(format!("generator entry ({i},{j}) is not finite")));
                }
                if i != j && v < 0.0 {
                    return Err(Error::input(format!("generator entry ({i},{j}) is negative")));
                }
                sum += v;
                scale = scale.max(v.abs());
            }
            if sum.abs() > 1e-12 * scale {
                return Err(Error::input(format!("generator row {i} sums to {sum}, not 0")));
            }
        }
        Ok(GeneratorMatrix(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        GeneratorMatrix::new(matrix_from_rows(rows, "generator")?)
    }

    pub fn zero(n: usize) -> Self {
        GeneratorMatrix(DMatrix::zeros(n, n))
    }

    /// `((−a, a), (b, −b))`.
    pub fn two_state(a: f64, b: f64) -> Result<Self> {
        GeneratorMatrix::new(DMatrix::from_row_slice(2, 2, &[-a, a, b, -b]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn exit_rate(&self, k: usize) -> f64 {
        -self.0[(k, k)]
    }

    /// Maximum absolute row sum.
    pub fn row_norm(&self) -> f64 {
        self.0
            .row_iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }

    /// `exp(t·ᵀG)`, the matrix pushing beliefs forward by `t`.
    pub fn belief_propagator(&self, t: f64) -> DMatrix<f64> {
        if self.is_zero() || t == 0.0 {
            return DMatrix::identity(self.dim(), self.dim());
        }
        (self.0.transpose() * t).exp()
    }

    /// `ᵀG p`, the belief drift.
    pub fn drift(&self, p: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|j| (0..n).map(|i| self.0[(i, j)] * p[i]).sum()).collect()
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::input(format!("{what}: matrix has no rows")));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(Error::input(format!("{what}: matrix has no columns")));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::input(format!(
                "{what}: row {i} has {} entries, expected {ncols}",
                r.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// `exp(t·ᵀG)·p`.
pub fn marginal_flow(p: &SimplexPoint, g: &GeneratorMatrix, t: f64) -> SimplexPoint {
    assert!(t.is_finite() && t >= 0.0, "flow time must be finite and nonnegative");
    if g.is_zero() || t == 0.0 {
        return p.clone();
    }
    let m = g.belief_propagator(t);
    let out: Vec<f64> = (0..p.dim())
        .map(|j| (0..p.dim()).map(|i| m[(j, i)] * p.weights()[i]).sum())
        .collect();
    SimplexPoint::from_numeric(out)
}

/// Full problem instance.
#[derive(Clone, Debug, PartialEq)]
pub struct GameSpec {
    pub r_gen: GeneratorMatrix,
    pub q_gen: GeneratorMatrix,
    pub r: f64,
    pub f: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub p0: SimplexPoint,
    pub q0: SimplexPoint,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameSpecJson {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "R")]
    r_gen: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    q_gen: Vec<Vec<f64>>,
    r: f64,
    f: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl GameSpec {
    pub fn new(
        r_gen: GeneratorMatrix,
        q_gen: GeneratorMatrix,
        r: f64,
        f: DMatrix<f64>,
        h: DMatrix<f64>,
        p0: SimplexPoint,
        q0: SimplexPoint,
    ) -> Result<Self> {
        let (k, l) = (r_gen.dim(), q_gen.dim());
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::input(format!("r: discount rate must be positive, got {r}")));
        }
        for (name, m) in [("f", &f), ("h", &h)] {
            if m.nrows() != k || m.ncols() != l {
                return Err(Error::input(format!(
                    "{name}: expected {k}x{l} payoff matrix, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::input(format!("{name}: entries must be finite")));
            }
        }
        if p0.dim() != k {
            return Err(Error::input(format!("p: expected {k} weights, got {}", p0.dim())));
        }
        if q0.dim() != l {
            return Err(Error::input(format!("q: expected {l} weights, got {}", q0.dim())));
        }
        for i in 0..k {
            for j in 0..l {
                if f[(i, j)] < h[(i, j)] {
                    return Err(Error::input(format!("f: f({i},{j}) < h({i},{j})")));
                }
            }
        }
        Ok(GameSpec {
            r_gen,
            q_gen,
            r,
            f,
            h,
            p0,
            q0,
        })
    }

    pub fn k_size(&self) -> usize {
        self.r_gen.dim()
    }

    pub fn l_size(&self) -> usize {
        self.q_gen.dim()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: GameSpecJson = serde_json::from_str(text).map_err(|e| Error::input(format!("game spec: {e}")))?;
        let r_gen = GeneratorMatrix::from_rows(&raw.r_gen).map_err(|e| prefix("R", e))?;
        let q_gen = GeneratorMatrix::from_rows(&raw.q_gen).map_err(|e| prefix("Q", e))?;
        if r_gen.dim() != raw.k {
            return Err(Error::input(format!("R: expected {}x{} generator", raw.k, raw.k)));
        }
        if q_gen.dim() != raw.l {
            return Err(Error::input(format!("Q: expected {}x{} generator", raw.l, raw.l)));
        }
        let f = matrix_from_rows(&raw.f, "f")?;
        let h = matrix_from_rows(&raw.h, "h")?;
        let p0 = SimplexPoint::new(raw.p).map_err(|e| prefix("p", e))?;
        let q0 = SimplexPoint::new(raw.q).map_err(|e| prefix("q", e))?;
        GameSpec::new(r_gen, q_gen, raw.r, f, h, p0, q0)
    }

    pub fn to_json(&self) -> String {
        let raw = GameSpecJson {
            k: self.k_size(),
            l: self.l_size(),
            r_gen: matrix_to_rows(self.r_gen.matrix()),
            q_gen: matrix_to_rows(self.q_gen.matrix()),
            r: self.r,
            f: matrix_to_rows(&self.f),
            h: matrix_to_rows(&self.h),
            p: self.p0.weights().to_vec(),
            q: self.q0.weights().to_vec(),
        };
        serde_json::to_string_pretty(&raw).expect("game spec serializes")
    }

    pub fn f_at(&self, p: &[f64], q: &[f64]) -> f64 {
        bilinear(&self.f, p, q)
    }

    pub fn h_at(&self, p: &[f64], q: &[f64]) -> f64 {
        bilinear(&self.h, p, q)
    }
}

fn prefix(field: &str, e: Error) -> Error {
    match e {
        Error::Input(m) => Error::Input(format!("{field}: {m}")),
        other => other,
    }
}

pub(crate) fn bilinear(m: &DMatrix<f64>, p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, pi) in p.iter().enumerate() {
        if *pi == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for (j, qj) in q.iter().enumerate() {
            row += m[(i, j)] * qj;
        }
        s += pi * row;
    }
    s
}

/// `Σ p_k q_ℓ M(k,ℓ)`.
pub fn bilinear_payoff(m: &DMatrix<f64>, p: &SimplexPoint, q: &SimplexPoint) -> Result<f64> {
    if m.nrows() != p.dim() || m.ncols() != q.dim() {
        return Err(Error::input(format!(
            "payoff matrix is {}x{} but beliefs have dimensions {} and {}",
            m.nrows(),
            m.ncols(),
            p.dim(),
            q.dim()
        )));
    }
    Ok(bilinear(m, p.weights(), q.weights()))
}

/// Piecewise-constant path of a finite-state chain on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    initial_state: usize,
    events: Vec<(f64, usize)>,
    horizon: f64,
}

impl Trajectory {
    pub fn new(initial_state: usize, events: Vec<(f64, usize)>, horizon: f64) -> Result<Self> {
        if !(horizon >= 0.0) {
            return Err(Error::input("trajectory horizon must be nonnegative"));
        }
        let mut prev_t = 0.0;
        let mut prev_s = initial_state;
        for (i, &(t, s)) in events.iter().enumerate() {
            if !(t >= prev_t && t <= horizon) || (i > 0 && t == prev_t) {
                return Err(Error::input(format!("event {i} at time {t} is out of order")));
            }
            if s == prev_s {
                return Err(Error::input(format!("event {i} does not change the state")));
            }
            prev_t = t;
            prev_s = s;
        }
        Ok(Trajectory {
            initial_state,
            events,
            horizon,
        })
    }

    pub fn constant(state: usize, horizon: f64) -> Self {
        Trajectory {
            initial_state: state,
            events: Vec::new(),
            horizon,
        }
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn events(&self) -> &[(f64, usize)] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// State at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::input(format!(
                "trajectory queried at t={t} beyond its horizon {}",
                self.horizon
            )));
        }
        let n = self.events.partition_point(|&(s, _)| s <= t);
        Ok(if n == 0 {
            self.initial_state
        } else {
            self.events[n - 1].1
        })
    }

    pub fn jump_count(&self) -> usize {
        self.events.len()
    }

    /// Replaces everything strictly after `t` by `tail` (events must start after `t`).
    pub fn with_tail_after(&self, t: f64, tail: &[(f64, usize)]) -> Result<Self> {
        let keep = self.events.partition_point(|&(s, _)| s <= t);
        let mut events = self.events[..keep].to_vec();
        let mut last = events.last().map_or(self.initial_state, |e| e.1);
        for &(s, k) in tail {
            if s > t && k != last {
                events.push((s, k));
                last = k;
            }
        }
        let horizon = events.last().map_or(self.horizon, |e| e.0.max(self.horizon));
        Trajectory::new(self.initial_state, events, horizon)
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

pub(crate) fn exp_sample<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    // 1 - U lies in (0, 1]
    -(1.0 - rng.gen::<f64>()).ln() / rate
}

/// Samples a path of the chain with generator `g` started from `p`.
pub fn simulate_chain<R: Rng + ?Sized>(g: &GeneratorMatrix, p: &SimplexPoint, horizon: f64, rng: &mut R) -> Trajectory {
    assert!(horizon.is_finite(), "simulation horizon must be finite");
    let n = g.dim();
    let mut state = sample_index(p.weights(), rng);
    let initial_state = state;
    let mut events = Vec::new();
    let mut t = 0.0;
    let mut rates = vec![0.0; n];
    loop {
        let out = g.exit_rate(state);
        if out <= 0.0 {
            break;
        }
        t += exp_sample(out, rng);
        if t > horizon {
            break;
        }
        for (j, slot) in rates.iter_mut().enumerate() {
            *slot = if j == state { 0.0 } else { g.matrix()[(state, j)] };
        }
        state = sample_index(&rates, rng);
        events.push((t, state));
    }
    Trajectory {
        initial_state,
        events,
        horizon,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stopper {
    Player1,
    Player2,
    Nobody,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopOutcome {
    pub who: Stopper,
    pub time: f64,
    pub payoff: f64,
}

/// Payoff of one realization: the minimizer wins strict races, ties go to `h`.
pub fn realized_payoff(spec: &GameSpec, x: &Trajectory, y: &Trajectory, mu: f64, nu: f64) -> Result<StopOutcome> {
    if mu.is_nan() || nu.is_nan() || mu < 0.0 || nu < 0.0 {
        return Err(Error::input("stopping times must be nonnegative"));
    }
    if nu < mu {
        let (k, l) = (x.state_at(nu)?, y.state_at(nu)?);
        Ok(StopOutcome {
            who: Stopper::Player2,
            time: nu,
            payoff: (-spec.r * nu).exp() * spec.f[(k, l)],
        })
    } else if mu.is_finite() {
        let (k, l) = (x.state_at(mu)?, y.state_at(mu)?);
        Ok(StopOutcome {
            who: Stopper::Player1,
            time: mu,
            payoff: (-spec.r * mu).exp() * spec.h[(k, l)],
        })
    } else {
        Ok(StopOutcome {
            who: Stopper::Nobody,
            time: f64::INFINITY,
            payoff: 0.0,
        })
    }
}
