//! Piecewise-deterministic characteristics (α, λ, φ) on E = E_H ∪ S, the
//! structure-condition checker and the single-jump process Z.
//!
//! A point `z` is the concatenation of a full belief vector `p` (length
//! `k_size`) and a dual vector `y` (length `y_size`, possibly empty).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::exp_sample;

/// Two-point split `z = (1−m)z′ + m z″` with `z′ ∈ E_H`, `z″ ∈ S`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub z_prime: Vec<f64>,
    pub z_second: Vec<f64>,
    pub m: f64,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

fn axpy(z: &[f64], h: f64, d: &[f64]) -> Vec<f64> {
    z.iter().zip(d).map(|(a, b)| a + h * b).collect()
}

pub trait Characteristics: Send + Sync {
    fn k_size(&self) -> usize;
    fn y_size(&self) -> usize;
    fn alpha(&self, z: &[f64]) -> Vec<f64>;
    fn intensity(&self, z: &[f64]) -> f64;
    fn jump(&self, z: &[f64]) -> Vec<f64>;
    fn in_eh(&self, z: &[f64], tol: f64) -> bool;
    fn in_s(&self, z: &[f64], tol: f64) -> bool;
    /// `blockdiag(ᵀR, rI − Q)` in the coordinates of `z`.
    fn structure_matrix(&self) -> DMatrix<f64>;
    /// SC5 split for a point outside E.
    fn decompose(&self, z: &[f64]) -> Option<Decomposition>;

    /// Snap onto E_H after a numerical step.
    fn project(&self, z: &[f64]) -> Vec<f64> {
        z.to_vec()
    }

    /// `w_z(t)`; fixed-step RK4 with step `1e−3/‖α‖∞` by default.
    fn flow(&self, z: &[f64], t: f64) -> Vec<f64> {
        rk4_advance(self, z, t)
    }

    /// `w_z(i·h)` for `i = 0..=count`.
    fn orbit(&self, z: &[f64], h: f64, count: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(count + 1);
        let mut w = z.to_vec();
        out.push(w.clone());
        for _ in 0..count {
            w = rk4_advance(self, &w, h);
            out.push(w.clone());
        }
        out
    }

    fn in_e(&self, z: &[f64], tol: f64) -> bool {
        self.in_eh(z, tol) || self.in_s(z, tol)
    }
}

/// Integrates `w′ = α(w)` over `[0, t]`, projecting after each step.
pub fn rk4_advance<C: Characteristics + ?Sized>(ch: &C, z: &[f64], t: f64) -> Vec<f64> {
    let mut w = z.to_vec();
    let mut left = t;
    while left > 0.0 {
        let a = ch.alpha(&w);
        let speed = sup_norm(&a);
        if speed == 0.0 {
            break;
        }
        let h = left.min(1e-3 / speed);
        let k1 = a;
        let k2 = ch.alpha(&axpy(&w, 0.5 * h, &k1));
        let k3 = ch.alpha(&axpy(&w, 0.5 * h, &k2));
        let k4 = ch.alpha(&axpy(&w, h, &k3));
        for (i, wi) in w.iter_mut().enumerate() {
            *wi += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        w = ch.project(&w);
        left -= h;
    }
    w
}

/// The convex dual surface `V₍*₎` and its obstacle `h₍*₎` in `z` coordinates.
pub trait DualSurface: Sync {
    /// Discount rate `r`.
    fn rate(&self) -> f64;
    fn value(&self, z: &[f64]) -> f64;
    fn obstacle(&self, z: &[f64]) -> f64;

    /// One-sided directional derivative by forward difference.
    fn derivative(&self, z: &[f64], d: &[f64]) -> f64 {
        let n = sup_norm(d);
        if n == 0.0 {
            return 0.0;
        }
        let h = 1e-7 / n;
        (self.value(&axpy(z, h, d)) - self.value(z)) / h
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Perturbation {
    ScaleLambda(f64),
    /// Jump target replaced wherever λ > 0.
    ReplacePhi(Vec<f64>),
    /// α := Az wherever λ > 0.
    AlphaEqualsStructureDrift,
}

/// Characteristics with one ingredient altered; used to show the checker bites.
pub struct Perturbed<C> {
    pub base: C,
    pub kind: Perturbation,
}

impl<C: Characteristics> Characteristics for Perturbed<C> {
    fn k_size(&self) -> usize {
        self.base.k_size()
    }
    fn y_size(&self) -> usize {
        self.base.y_size()
    }
    fn alpha(&self, z: &[f64]) -> Vec<f64> {
        match self.kind {
            Perturbation::AlphaEqualsStructureDrift if self.base.intensity(z) > 0.0 => {
                let az = self.structure_matrix() * DVector::from_column_slice(z);
                az.iter().copied().collect()
            }
            _ => self.base.alpha(z),
        }
    }
    fn intensity(&self, z: &[f64]) -> f64 {
        match self.kind {
            Perturbation::ScaleLambda(s) => s * self.base.intensity(z),
            _ => self.base.intensity(z),
        }
    }
    fn jump(&self, z: &[f64]) -> Vec<f64> {
        match &self.kind {
            Perturbation::ReplacePhi(target) if self.base.intensity(z) > 0.0 => target.clone(),
            _ => self.base.jump(z),
        }
    }
    fn in_eh(&self, z: &[f64], tol: f64) -> bool {
        self.base.in_eh(z, tol)
    }
    fn in_s(&self, z: &[f64], tol: f64) -> bool {
        self.base.in_s(z, tol)
    }
    fn structure_matrix(&self) -> DMatrix<f64> {
        self.base.structure_matrix()
    }
    fn decompose(&self, z: &[f64]) -> Option<Decomposition> {
        self.base.decompose(z)
    }
    fn flow(&self, z: &[f64], t: f64) -> Vec<f64> {
        match self.kind {
            Perturbation::AlphaEqualsStructureDrift => rk4_advance(self, z, t),
            _ => self.base.flow(z, t),
        }
    }
    fn orbit(&self, z: &[f64], h: f64, count: usize) -> Vec<Vec<f64>> {
        match self.kind {
            Perturbation::AlphaEqualsStructureDrift => {
                let mut out = vec![z.to_vec()];
                for _ in 0..count {
                    let next = rk4_advance(self, out.last().unwrap(), h);
                    out.push(next);
                }
                out
            }
            _ => self.base.orbit(z, h, count),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub name: String,
    pub checked: usize,
    pub failures: usize,
    pub worst: f64,
    pub worst_at: Option<Vec<f64>>,
}

impl ConditionResult {
    fn new(name: &str) -> Self {
        ConditionResult {
            name: name.to_string(),
            checked: 0,
            failures: 0,
            worst: 0.0,
            worst_at: None,
        }
    }

    /// Records a violation magnitude (≤ tol passes).
    fn record(&mut self, violation: f64, tol: f64, z: &[f64]) {
        self.checked += 1;
        let v = if violation.is_nan() { f64::INFINITY } else { violation };
        if v > tol {
            self.failures += 1;
        }
        if v > self.worst || self.worst_at.is_none() {
            self.worst = self.worst.max(v);
            if v >= self.worst {
                self.worst_at = Some(z.to_vec());
            }
        }
    }

    fn flag(&mut self, ok: bool, z: &[f64]) {
        self.record(if ok { 0.0 } else { 1.0 }, 0.5, z);
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScReport {
    pub tol: f64,
    pub samples: usize,
    pub exterior: usize,
    pub conditions: Vec<ConditionResult>,
}

impl ScReport {
    pub fn passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed())
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn failed(&self, name: &str) -> bool {
        self.condition(name).is_some_and(|c| !c.passed())
    }
}

pub const SC_NAMES: [&str; 11] = [
    "SC1-partition",
    "SC1-subsolution",
    "SC1-obstacle",
    "SC2-absorption",
    "SC2-invariance",
    "SC3-range",
    "SC3-support",
    "SC4-flatjump",
    "SC4-conederivative",
    "SC4-structuredynamic",
    "SC5-decomposition",
];

/// Short horizons over which flow invariance of E_H is probed.
const INVARIANCE_TIMES: [f64; 3] = [1e-3, 0.05, 0.5];

/// Checks the structure conditions at `samples` (points of E) and the SC5
/// decomposition at `exterior` (points outside E).
pub fn sc_check<C: Characteristics + ?Sized, S: DualSurface + ?Sized>(
    ch: &C,
    surface: &S,
    samples: &[Vec<f64>],
    exterior: &[Vec<f64>],
    tol: f64,
) -> Result<ScReport> {
    let dim = ch.k_size() + ch.y_size();
    let a = ch.structure_matrix();
    let mut res: Vec<ConditionResult> = SC_NAMES.iter().map(|n| ConditionResult::new(n)).collect();
    let idx = |name: &str| SC_NAMES.iter().position(|n| *n == name).unwrap();
    let member_tol = 1e-9;

    for (i, z) in samples.iter().enumerate() {
        if z.len() != dim {
            return Err(Error::input(format!(
                "sample {i} has length {}, expected {dim}",
                z.len()
            )));
        }
        let (eh, s) = (ch.in_eh(z, member_tol), ch.in_s(z, member_tol));
        if !eh && !s {
            return Err(Error::input(format!("sample {i} lies outside E")));
        }
        res[idx("SC1-partition")].flag(!(eh && s), z);
        let az: Vec<f64> = (&a * DVector::from_column_slice(z)).iter().copied().collect();
        let v = surface.value(z);
        if s {
            res[idx("SC1-obstacle")].record((v - surface.obstacle(z)).abs(), tol, z);
            let worst = ch.intensity(z).abs().max(sup_norm(&ch.alpha(z)));
            res[idx("SC2-absorption")].record(worst, tol, z);
            continue;
        }
        // E_H ⊂ H
        let h_res = surface.rate() * v - surface.derivative(z, &az);
        res[idx("SC1-subsolution")].record(-h_res, tol, z);

        let alpha = ch.alpha(z);
        let lam = ch.intensity(z);
        let speed = sup_norm(&alpha);
        let mut invariant = true;
        if speed > 0.0 {
            let eps = 1e-4 / speed;
            invariant &= ch.in_eh(&axpy(z, eps, &alpha), tol);
        }
        for &t in &INVARIANCE_TIMES {
            invariant &= ch.in_eh(&ch.flow(z, t), tol);
        }
        res[idx("SC2-invariance")].flag(invariant, z);

        let phi = ch.jump(z);
        let jump_dir: Vec<f64> = phi.iter().zip(z).map(|(a, b)| a - b).collect();
        res[idx("SC3-range")].flag(ch.in_s(&phi, member_tol) && sup_norm(&jump_dir) > 0.0, z);
        if lam > 0.0 {
            let shrinks = (0..ch.k_size()).all(|k| z[k] != 0.0 || phi[k] == 0.0);
            res[idx("SC3-support")].flag(shrinks, z);
        }

        let flat = lam * (surface.value(&phi) - v - surface.derivative(z, &jump_dir));
        res[idx("SC4-flatjump")].record(flat.abs(), tol, z);
        let lam_dir: Vec<f64> = jump_dir.iter().map(|d| lam * d).collect();
        let total: Vec<f64> = alpha.iter().zip(&lam_dir).map(|(a, b)| a + b).collect();
        let cone = surface.derivative(z, &alpha) + surface.derivative(z, &lam_dir) - surface.derivative(z, &total);
        res[idx("SC4-conederivative")].record(cone.abs(), tol, z);
        let gap: Vec<f64> = total.iter().zip(&az).map(|(a, b)| a - b).collect();
        res[idx("SC4-structuredynamic")].record(sup_norm(&gap), tol, z);
    }

    for (i, z) in exterior.iter().enumerate() {
        if z.len() != dim {
            return Err(Error::input(format!(
                "exterior point {i} has length {}, expected {dim}",
                z.len()
            )));
        }
        if ch.in_e(z, member_tol) {
            return Err(Error::input(format!("exterior point {i} lies in E")));
        }
        let c = &mut res[idx("SC5-decomposition")];
        match ch.decompose(z) {
            None => c.record(f64::INFINITY, tol, z),
            Some(d) => {
                let ok_sets =
                    ch.in_eh(&d.z_prime, member_tol) && ch.in_s(&d.z_second, member_tol) && (0.0..=1.0).contains(&d.m);
                let mix: Vec<f64> = d
                    .z_prime
                    .iter()
                    .zip(&d.z_second)
                    .map(|(a, b)| (1.0 - d.m) * a + d.m * b)
                    .collect();
                let point_gap = sup_norm(&mix.iter().zip(z).map(|(a, b)| a - b).collect::<Vec<_>>());
                let value_gap = ((1.0 - d.m) * surface.value(&d.z_prime) + d.m * surface.value(&d.z_second)
                    - surface.value(z))
                .abs();
                c.record(
                    if ok_sets {
                        point_gap.max(value_gap)
                    } else {
                        f64::INFINITY
                    },
                    tol,
                    z,
                );
            }
        }
    }

    Ok(ScReport {
        tol,
        samples: samples.len(),
        exterior: exterior.len(),
        conditions: res,
    })
}

/// Default tabulation step.
pub const TABLE_STEP: f64 = 1e-3;

/// `ln(10⁸)/r`: beyond it the discount factor is below 1e−8.
pub fn default_horizon(r: f64) -> f64 {
    (1e8f64).ln() / r
}

/// Orbit of the flow sampled at half steps together with cumulative hazards
/// `H_c(t) = ∫₀ᵗ ρ_c` (Simpson on each full step) for one or more channels.
#[derive(Clone, Debug)]
pub struct HazardTable {
    step: f64,
    horizon: f64,
    /// `w_z(i·step/2)`.
    fine: Vec<Vec<f64>>,
    /// rates per channel at fine nodes
    rates: Vec<Vec<f64>>,
    /// cumulative hazard per channel at full nodes `i·step`
    cum: Vec<Vec<f64>>,
}

impl HazardTable {
    fn tabulate<C: Characteristics + ?Sized>(ch: &C, z0: &[f64], horizon: f64) -> (f64, Vec<Vec<f64>>) {
        let step = TABLE_STEP.max(horizon / 1e6);
        let n = (horizon / step).ceil().max(1.0) as usize;
        let step = horizon / n as f64;
        (step, ch.orbit(z0, 0.5 * step, 2 * n))
    }

    fn accumulate(step: f64, rates: &[f64], blowup: Option<usize>) -> Vec<f64> {
        let n = (rates.len() - 1) / 2;
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        for i in 0..n {
            let prev = cum[i];
            let next = if blowup.is_some_and(|j| j <= 2 * i + 2) || prev == f64::INFINITY {
                f64::INFINITY
            } else {
                prev + step / 6.0 * (rates[2 * i] + 4.0 * rates[2 * i + 1] + rates[2 * i + 2])
            };
            cum.push(next);
        }
        cum
    }

    /// Single channel with rate λ(w_z(t)) (the jump of Z).
    pub fn for_jump<C: Characteristics + ?Sized>(ch: &C, z0: &[f64], horizon: f64) -> Result<Self> {
        let (step, fine) = Self::tabulate(ch, z0, horizon);
        let rates: Vec<f64> = fine.iter().map(|z| ch.intensity(z)).collect();
        if rates.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::integrity(
                "jump intensity is negative or not finite on the orbit",
            ));
        }
        let cum = Self::accumulate(step, &rates, None);
        Ok(HazardTable {
            step,
            horizon,
            fine,
            rates: vec![rates],
            cum: vec![cum],
        })
    }

    /// One channel per chain state with `ρ_k = λ·φ_p,k / p_k` (0/0 = 0).
    ///
    /// A belief coordinate that reaches 0 after carrying positive hazard makes
    /// the hazard infinite from there on: survival given that state is zero.
    pub fn for_stopping<C: Characteristics + ?Sized>(ch: &C, z0: &[f64], horizon: f64) -> Result<Self> {
        let k = ch.k_size();
        let (step, fine) = Self::tabulate(ch, z0, horizon);
        let mut rates = vec![Vec::with_capacity(fine.len()); k];
        let mut blowup = vec![None; k];
        let mut charged = vec![false; k];
        for (j, z) in fine.iter().enumerate() {
            let lam = ch.intensity(z);
            let phi = if lam > 0.0 { ch.jump(z) } else { Vec::new() };
            for c in 0..k {
                let num = if lam > 0.0 { lam * phi[c] } else { 0.0 };
                let rho = if z[c] > 0.0 {
                    num / z[c]
                } else if num > 0.0 {
                    return Err(Error::integrity(format!(
                        "belief of state {c} is zero at t={} while the jump charges it",
                        0.5 * step * j as f64
                    )));
                } else {
                    if charged[c] && blowup[c].is_none() {
                        blowup[c] = Some(j);
                    }
                    0.0
                };
                if !rho.is_finite() || rho < 0.0 {
                    return Err(Error::integrity("stopping intensity is negative or not finite"));
                }
                charged[c] |= rho > 0.0;
                rates[c].push(rho);
            }
        }
        let cum = (0..k).map(|c| Self::accumulate(step, &rates[c], blowup[c])).collect();
        Ok(HazardTable {
            step,
            horizon,
            fine,
            rates,
            cum,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Tabulated orbit point (linear interpolation between half steps).
    pub fn state_at(&self, t: f64) -> Option<Vec<f64>> {
        if !(t >= 0.0 && t <= self.horizon) {
            return None;
        }
        let s = t / (0.5 * self.step);
        let i = (s.floor() as usize).min(self.fine.len() - 2);
        let w = s - i as f64;
        Some(
            self.fine[i]
                .iter()
                .zip(&self.fine[i + 1])
                .map(|(a, b)| (1.0 - w) * a + w * b)
                .collect(),
        )
    }

    pub fn rate_at(&self, c: usize, t: f64) -> f64 {
        let s = (t / (0.5 * self.step)).clamp(0.0, (self.fine.len() - 1) as f64);
        let i = (s.floor() as usize).min(self.fine.len() - 2);
        let w = s - i as f64;
        (1.0 - w) * self.rates[c][i] + w * self.rates[c][i + 1]
    }

    pub fn max_rate(&self, c: usize) -> f64 {
        self.rates[c].iter().fold(0.0, |m: f64, v| m.max(*v))
    }

    pub fn unbounded(&self, c: usize) -> bool {
        self.cum[c].last().is_some_and(|v| v.is_infinite())
    }

    /// `H_c(t)`, linear between full nodes; an infinite node value applies
    /// from that node on.
    pub fn cumulative(&self, c: usize, t: f64) -> f64 {
        let cum = &self.cum[c];
        let s = (t / self.step).clamp(0.0, (cum.len() - 1) as f64);
        let i = (s.floor() as usize).min(cum.len() - 2);
        let w = s - i as f64;
        if w >= 1.0 {
            return cum[i + 1];
        }
        if cum[i + 1].is_infinite() {
            return cum[i];
        }
        (1.0 - w) * cum[i] + w * cum[i + 1]
    }

    /// First `t ≥ from` with `H_c(t) − H_c(from) ≥ e`; `+∞` past the horizon.
    pub fn first_passage(&self, c: usize, from: f64, e: f64) -> f64 {
        if from > self.horizon {
            return f64::INFINITY;
        }
        let cum = &self.cum[c];
        let h0 = self.cumulative(c, from);
        if h0.is_infinite() {
            return from;
        }
        let target = h0 + e;
        let i = cum.partition_point(|v| *v < target);
        if i == cum.len() {
            return f64::INFINITY;
        }
        let t_i = self.step * i as f64;
        if cum[i].is_infinite() || i == 0 {
            return t_i.max(from);
        }
        let frac = (target - cum[i - 1]) / (cum[i] - cum[i - 1]);
        (self.step * (i as f64 - 1.0 + frac)).max(from)
    }
}

/// Path of Z: the deterministic orbit up to `mu`, then the absorbed jump target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZPath {
    pub z0: Vec<f64>,
    pub mu: f64,
    pub z_mu: Option<Vec<f64>>,
    pub post: Option<Vec<f64>>,
    pub horizon: f64,
}

impl ZPath {
    pub fn jumped(&self) -> bool {
        self.mu.is_finite()
    }

    pub fn state_at<C: Characteristics + ?Sized>(&self, ch: &C, t: f64) -> Vec<f64> {
        match &self.post {
            Some(post) if t >= self.mu => post.clone(),
            _ => ch.flow(&self.z0, t),
        }
    }
}

/// Samples Z from `z0 ∈ E` on `[0, horizon]`: at most one jump, drawn by
/// inverting the tabulated survival `exp(−∫λ(w_z))`.
pub fn simulate_z<C: Characteristics + ?Sized, R: Rng + ?Sized>(
    ch: &C,
    z0: &[f64],
    horizon: f64,
    rng: &mut R,
) -> Result<ZPath> {
    ZSampler::new(ch, z0, horizon)?.sample(ch, rng)
}

/// Repeated draws of Z from one starting point; the orbit and its hazard are
/// tabulated once.
pub struct ZSampler {
    z0: Vec<f64>,
    horizon: f64,
    /// `None` when `z0 ∈ S`
    table: Option<HazardTable>,
}

impl ZSampler {
    pub fn new<C: Characteristics + ?Sized>(ch: &C, z0: &[f64], horizon: f64) -> Result<Self> {
        if z0.len() != ch.k_size() + ch.y_size() {
            return Err(Error::input("initial point has the wrong length"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::input("horizon must be positive and finite"));
        }
        if ch.in_s(z0, 1e-9) {
            return Ok(ZSampler {
                z0: z0.to_vec(),
                horizon,
                table: None,
            });
        }
        if !ch.in_eh(z0, 1e-9) {
            return Err(Error::input("initial point lies outside E"));
        }
        let table = HazardTable::for_jump(ch, z0, horizon)?;
        if let Some(bad) = table.fine.iter().position(|z| !ch.in_eh(z, 1e-6)) {
            return Err(Error::integrity(format!(
                "flow leaves E_H at t={} (flow invariance violated)",
                0.5 * table.step * bad as f64
            )));
        }
        Ok(ZSampler {
            z0: z0.to_vec(),
            horizon,
            table: Some(table),
        })
    }

    pub fn sample<C: Characteristics + ?Sized, R: Rng + ?Sized>(&self, ch: &C, rng: &mut R) -> Result<ZPath> {
        let (z0, horizon) = (self.z0.clone(), self.horizon);
        let constant = |z0: Vec<f64>| ZPath {
            z0,
            mu: f64::INFINITY,
            z_mu: None,
            post: None,
            horizon,
        };
        let Some(table) = &self.table else {
            return Ok(constant(z0));
        };
        let mu = table.first_passage(0, 0.0, exp_sample(1.0, rng));
        if !mu.is_finite() {
            return Ok(constant(z0));
        }
        let z_mu = ch.flow(&z0, mu);
        let post = ch.jump(&z_mu);
        if !ch.in_s(&post, 1e-9) {
            return Err(Error::integrity("jump target lies outside S"));
        }
        Ok(ZPath {
            z0,
            mu,
            z_mu: Some(z_mu),
            post: Some(post),
            horizon,
        })
    }
}
