//! PDMP characteristics of the two examples, with exact flows.
//!
//! Example 1 uses `z = (p, 1−p, y)` with `y` the reduced dual coordinate;
//! Example 2 uses `z = (p, 1−p)` and the surface `−V`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::example1::{c_boundary, e1_dual, e1_h_lower_conjugate};
use super::example2::Example2Params;
use crate::error::{Error, Result};
use crate::pdmp::{Characteristics, Decomposition, DualSurface};

/// Tolerance for riding the upper edge of zone C.
const EDGE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct E1Characteristics {
    pub r: f64,
}

pub fn e1_characteristics(r: f64) -> Result<E1Characteristics> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::input(format!("r: must be positive, got {r}")));
    }
    Ok(E1Characteristics { r })
}

fn on_c_edge(p: f64, y: f64) -> bool {
    p > 0.0 && p < 0.5 && y >= c_boundary(p) - EDGE_TOL
}

/// Full-vector point from scalars.
pub fn e1_point(p: f64, y: f64) -> Vec<f64> {
    vec![p, 1.0 - p, y]
}

impl E1Characteristics {
    /// Exact orbit in scalar coordinates.
    pub fn flow_scalar(&self, p: f64, y: f64, t: f64) -> (f64, f64) {
        let r = self.r;
        if t <= 0.0 || p >= 1.0 || y == 0.0 {
            return (p, y);
        }
        if p <= 0.0 || y < 0.0 || p >= 0.5 {
            return (p, y * (r * t).exp());
        }
        // 0 < p < 1/2, y > 0: climb to the edge, then ride it down to p = 0
        let b = c_boundary(p);
        let mut t = t;
        let mut c = (1.0 - p) / (1.0 - 2.0 * p);
        if y < b - EDGE_TOL {
            let t_hit = (b / y).ln() / r;
            if t <= t_hit {
                return (p, y * (r * t).exp());
            }
            t -= t_hit;
        } else if y > b + EDGE_TOL {
            // outside E: follow α = (0, ry)
            return (p, y * (r * t).exp());
        }
        let tau = 2.0 * c.ln() / r;
        if t >= tau {
            return (0.0, (r * (t - tau)).exp());
        }
        c *= (-0.5 * r * t).exp();
        ((c - 1.0) / (2.0 * c - 1.0), 1.0 / c)
    }

    /// Time at which the edge-riding orbit from `(p, y)` reaches `p = 0`.
    pub fn time_to_p_zero(&self, p: f64, y: f64) -> f64 {
        if !(p > 0.0 && p < 0.5 && y > 0.0) {
            return f64::INFINITY;
        }
        let b = c_boundary(p);
        let climb = if y < b { (b / y).ln() / self.r } else { 0.0 };
        climb + 2.0 * ((1.0 - p) / (1.0 - 2.0 * p)).ln() / self.r
    }
}

impl Characteristics for E1Characteristics {
    fn k_size(&self) -> usize {
        2
    }
    fn y_size(&self) -> usize {
        1
    }
    fn alpha(&self, z: &[f64]) -> Vec<f64> {
        let (p, y) = (z[0], z[2]);
        if self.in_s(z, 0.0) {
            return vec![0.0; 3];
        }
        if on_c_edge(p, y) {
            let s = 0.5 * self.r * (1.0 - 2.0 * p) * (1.0 - p);
            vec![-s, s, 0.5 * self.r * y]
        } else {
            vec![0.0, 0.0, self.r * y]
        }
    }
    fn intensity(&self, z: &[f64]) -> f64 {
        if on_c_edge(z[0], z[2]) {
            0.5 * self.r * (1.0 - 2.0 * z[0])
        } else {
            0.0
        }
    }
    fn jump(&self, _z: &[f64]) -> Vec<f64> {
        vec![1.0, 0.0, 2.0]
    }
    fn in_eh(&self, z: &[f64], tol: f64) -> bool {
        let (p, y) = (z[0], z[2]);
        if !(p >= -tol && p <= 1.0 + tol) {
            return false;
        }
        p <= tol || (p <= 0.5 + tol && y <= c_boundary(p.min(0.5)) + tol) || (p >= 0.5 - tol && y <= tol)
    }
    fn in_s(&self, z: &[f64], tol: f64) -> bool {
        (z[0] - 1.0).abs() <= tol && z[2] >= 2.0 - tol
    }
    fn structure_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(3, 3);
        a[(2, 2)] = self.r;
        a
    }
    fn decompose(&self, z: &[f64]) -> Option<Decomposition> {
        let (p, y) = (z[0], z[2]);
        if self.in_eh(z, 0.0) || self.in_s(z, 0.0) || !(0.0..=1.0).contains(&p) || y <= 0.0 {
            return None;
        }
        let top = e1_point(1.0, 2.0);
        let (zp, m) = if y >= 1.0 + p {
            // zone E
            if p >= 1.0 {
                return None;
            }
            (e1_point(0.0, (y - 2.0 * p) / (1.0 - p)), p)
        } else if p >= 0.5 && y <= 4.0 * p - 2.0 {
            // zone B
            (e1_point((2.0 * p - y) / (2.0 - y), 0.0), 0.5 * y)
        } else {
            // zone D
            let pp = 1.0 - ((1.0 - p) / (2.0 - y)).sqrt();
            (e1_point(pp, c_boundary(pp)), (p - pp) / (1.0 - pp))
        };
        Some(Decomposition {
            z_prime: zp,
            z_second: top,
            m,
        })
    }
    fn project(&self, z: &[f64]) -> Vec<f64> {
        let p = z[0].clamp(0.0, 1.0);
        let mut y = z[2];
        if p > 0.0 && p < 0.5 {
            y = y.min(c_boundary(p));
        } else if (0.5..1.0).contains(&p) {
            y = y.min(0.0);
        }
        e1_point(p, y)
    }
    fn flow(&self, z: &[f64], t: f64) -> Vec<f64> {
        let (p, y) = self.flow_scalar(z[0], z[2], t);
        e1_point(p, y)
    }
    fn orbit(&self, z: &[f64], h: f64, count: usize) -> Vec<Vec<f64>> {
        (0..=count).map(|i| self.flow(z, h * i as f64)).collect()
    }
}

/// `V₍*₎` of Example 1 in `z` coordinates.
#[derive(Clone, Copy, Debug)]
pub struct E1Surface {
    pub r: f64,
}

impl DualSurface for E1Surface {
    fn rate(&self) -> f64 {
        self.r
    }
    fn value(&self, z: &[f64]) -> f64 {
        e1_dual(z[0].clamp(0.0, 1.0), z[2]).0
    }
    fn obstacle(&self, z: &[f64]) -> f64 {
        e1_h_lower_conjugate(z[0], z[2])
    }
}

/// Deterministic sample of E for Example 1 (`n` points) and of its
/// complement (`n/4` points), covering each piece of E_H and S.
pub fn e1_sample_points(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ch = E1Characteristics { r: 1.0 };
    let mut inside = Vec::with_capacity(n);
    for i in 0..n {
        let z = match i % 5 {
            0 => {
                let p = rng.gen_range(0.001..0.499);
                e1_point(p, c_boundary(p))
            }
            1 => {
                let p = rng.gen_range(0.0..0.5);
                e1_point(p, rng.gen_range(-2.0..c_boundary(p)))
            }
            2 => e1_point(rng.gen_range(0.5..=1.0), rng.gen_range(-2.0..=0.0)),
            3 => e1_point(0.0, rng.gen_range(-2.0..4.0)),
            _ => e1_point(1.0, rng.gen_range(2.0..4.0)),
        };
        inside.push(z);
    }
    let mut outside = Vec::new();
    while outside.len() < n / 4 {
        let z = e1_point(rng.gen_range(0.001..0.999), rng.gen_range(0.0..4.0));
        if !ch.in_e(&z, 1e-9) {
            outside.push(z);
        }
    }
    (inside, outside)
}

/// Example 2 characteristics (case I only).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct E2Characteristics {
    pub params: Example2Params,
    pub p0: f64,
}

pub fn e2_characteristics(params: &Example2Params) -> Result<E2Characteristics> {
    let p0 = params.p0()?;
    Ok(E2Characteristics { params: *params, p0 })
}

impl E2Characteristics {
    fn at_p0(&self, p: f64) -> bool {
        (p - self.p0).abs() <= 1e-12
    }

    /// Exact belief orbit: relax towards p* until p0 is reached, then stay.
    pub fn flow_scalar(&self, p: f64, t: f64) -> f64 {
        let s = &self.params;
        if t <= 0.0 || p >= 1.0 || p > self.p0 || self.at_p0(p) {
            return p;
        }
        let t_hit = s.waiting_time(p).unwrap_or(f64::INFINITY);
        if t >= t_hit {
            return self.p0;
        }
        let ps = s.p_star();
        ps + (p - ps) * (-(s.a + s.b) * t).exp()
    }
}

impl Characteristics for E2Characteristics {
    fn k_size(&self) -> usize {
        2
    }
    fn y_size(&self) -> usize {
        0
    }
    fn alpha(&self, z: &[f64]) -> Vec<f64> {
        let p = z[0];
        if self.at_p0(p) || self.in_s(z, 0.0) {
            return vec![0.0, 0.0];
        }
        let d = self.params.drift(p);
        vec![d, -d]
    }
    fn intensity(&self, z: &[f64]) -> f64 {
        if self.at_p0(z[0]) {
            self.params.drift(self.p0) / (1.0 - self.p0)
        } else {
            0.0
        }
    }
    fn jump(&self, _z: &[f64]) -> Vec<f64> {
        vec![1.0, 0.0]
    }
    fn in_eh(&self, z: &[f64], tol: f64) -> bool {
        z[0] >= -tol && z[0] <= self.p0 + tol
    }
    fn in_s(&self, z: &[f64], tol: f64) -> bool {
        (z[0] - 1.0).abs() <= tol
    }
    fn structure_matrix(&self) -> DMatrix<f64> {
        let (a, b) = (self.params.a, self.params.b);
        // ᵀR for R = ((−a, a), (b, −b))
        DMatrix::from_row_slice(2, 2, &[-a, b, a, -b])
    }
    fn decompose(&self, z: &[f64]) -> Option<Decomposition> {
        let p = z[0];
        if !(p > self.p0 && p < 1.0) {
            return None;
        }
        Some(Decomposition {
            z_prime: vec![self.p0, 1.0 - self.p0],
            z_second: vec![1.0, 0.0],
            m: (p - self.p0) / (1.0 - self.p0),
        })
    }
    fn project(&self, z: &[f64]) -> Vec<f64> {
        let p = z[0].clamp(0.0, self.p0);
        vec![p, 1.0 - p]
    }
    fn flow(&self, z: &[f64], t: f64) -> Vec<f64> {
        let p = self.flow_scalar(z[0], t);
        vec![p, 1.0 - p]
    }
    fn orbit(&self, z: &[f64], h: f64, count: usize) -> Vec<Vec<f64>> {
        (0..=count).map(|i| self.flow(z, h * i as f64)).collect()
    }
}

/// `−V` with obstacle `−h` (the dual side is trivial when Y has one state).
#[derive(Clone, Copy, Debug)]
pub struct E2Surface {
    pub params: Example2Params,
    pub p0: f64,
}

impl E2Surface {
    pub fn new(params: &Example2Params) -> Result<Self> {
        Ok(E2Surface {
            params: *params,
            p0: params.p0()?,
        })
    }
}

impl DualSurface for E2Surface {
    fn rate(&self) -> f64 {
        self.params.r
    }
    fn value(&self, z: &[f64]) -> f64 {
        let (s, p) = (&self.params, z[0]);
        let v = if p <= self.p0 {
            s.f_at(p)
        } else {
            ((p - self.p0) * s.h.1 + (1.0 - p) * s.f_at(self.p0)) / (1.0 - self.p0)
        };
        -v
    }
    fn obstacle(&self, z: &[f64]) -> f64 {
        -self.params.h_at(z[0])
    }
}

/// Deterministic sample of E for Example 2 and of its complement.
pub fn e2_sample_points(ch: &E2Characteristics, n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |p: f64| vec![p, 1.0 - p];
    let inside = (0..n)
        .map(|i| match i % 4 {
            0 => point(ch.p0),
            1 => point(1.0),
            _ => point(rng.gen_range(0.0..ch.p0)),
        })
        .collect();
    let outside = (0..n / 4)
        .map(|_| point(rng.gen_range(ch.p0 + 1e-6..1.0 - 1e-6)))
        .collect();
    (inside, outside)
}
