//! Two-by-two game with frozen chains: h(p,q) = 3p+2q−4, f(p,q) = 2p+3q−1.
//!
//! Scalars `p`, `q` are the weights of state 0.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GameSpec, GeneratorMatrix, SimplexPoint};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example1Params {
    pub r: f64,
}

impl Example1Params {
    pub fn new(r: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::input(format!("r: must be positive, got {r}")));
        }
        Ok(Example1Params { r })
    }

    pub fn spec(&self, p: f64, q: f64) -> Result<GameSpec> {
        GameSpec::new(
            GeneratorMatrix::zero(2),
            GeneratorMatrix::zero(2),
            self.r,
            DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 2.0, -1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -2.0, -4.0]),
            SimplexPoint::scalar(p)?,
            SimplexPoint::scalar(q)?,
        )
    }
}

pub fn e1_h(p: f64, q: f64) -> f64 {
    3.0 * p + 2.0 * q - 4.0
}

pub fn e1_f(p: f64, q: f64) -> f64 {
    2.0 * p + 3.0 * q - 1.0
}

/// Closed-form value.
pub fn e1_value(p: f64, q: f64) -> f64 {
    if p >= 0.5 && q <= 0.5 {
        0.0
    } else if q >= 0.5 && p >= 1.0 - q {
        (2.0 * q - 1.0) / q * (p + q - 1.0)
    } else {
        (1.0 - 2.0 * p) / (1.0 - p) * (p + q - 1.0)
    }
}

/// Left and right derivatives of `q ↦ e1_value(p, q)`.
pub fn e1_value_slopes_q(p: f64, q: f64) -> (f64, f64) {
    let region3 = |p: f64| (1.0 - 2.0 * p) / (1.0 - p);
    let region2 = |p: f64, q: f64| (p + q - 1.0) / (q * q) + (2.0 * q - 1.0) / q;
    let slope_at = |q: f64, right: bool| -> f64 {
        // which piece governs the open interval on the chosen side of q
        let in_flat = p >= 0.5 && if right { q < 0.5 } else { q <= 0.5 };
        let in_upper = if right {
            q >= 0.5 && p + q >= 1.0
        } else {
            q > 0.5 && p + q > 1.0
        };
        if in_flat {
            0.0
        } else if in_upper {
            region2(p, q)
        } else {
            region3(p)
        }
    };
    let left = if q <= 0.0 {
        f64::NEG_INFINITY
    } else {
        slope_at(q, false)
    };
    let right = if q >= 1.0 { f64::INFINITY } else { slope_at(q, true) };
    (left, right)
}

/// Values of the game restricted to pure stopping times: `(V̂⁻, V̂⁺)`.
pub fn e1_pure_values(p: f64, q: f64) -> (f64, f64) {
    (pure_lower(p, q), -pure_lower(1.0 - q, 1.0 - p))
}

fn pure_lower(p: f64, q: f64) -> f64 {
    if p * q > 1.0 - q {
        p * q - (1.0 - q)
    } else if p >= 0.5 {
        0.0
    } else {
        (1.0 - 2.0 * p) * (p * q - (1.0 - q))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum E1Zone {
    A,
    B,
    C,
    D,
    E,
}

impl E1Zone {
    pub fn label(self) -> &'static str {
        match self {
            E1Zone::A => "A",
            E1Zone::B => "B",
            E1Zone::C => "C",
            E1Zone::D => "D",
            E1Zone::E => "E",
        }
    }
}

/// `(1−2p)/(1−p)`, upper edge of zone C.
pub fn c_boundary(p: f64) -> f64 {
    (1.0 - 2.0 * p) / (1.0 - p)
}

pub fn e1_zone(p: f64, y: f64) -> E1Zone {
    if p >= 0.5 && y <= 0.0 {
        E1Zone::A
    } else if p >= 0.5 && y <= 4.0 * p - 2.0 {
        E1Zone::B
    } else if p <= 0.5 && y <= c_boundary(p) {
        E1Zone::C
    } else if y >= 1.0 + p {
        E1Zone::E
    } else {
        E1Zone::D
    }
}

/// Reduced convex conjugate `V₍*₎(p, y) = sup_q {q·y − V(p,q)}` with its zone.
pub fn e1_dual(p: f64, y: f64) -> (f64, E1Zone) {
    let zone = e1_zone(p, y);
    (e1_zone_formula(zone, p, y), zone)
}

/// The closed form of `zone`, evaluated at `(p, y)` whether or not the point lies in it.
pub fn e1_zone_formula(zone: E1Zone, p: f64, y: f64) -> f64 {
    match zone {
        E1Zone::A => 0.0,
        E1Zone::B => 0.5 * y,
        E1Zone::C => 1.0 - 2.0 * p,
        E1Zone::D => -2.0 * (2.0 - y).sqrt() * (1.0 - p).sqrt() + 3.0 - 2.0 * p,
        E1Zone::E => y - p,
    }
}

/// `h₍*₎(p, y) = sup_q {q·y − h(p,q)}`.
pub fn e1_h_lower_conjugate(p: f64, y: f64) -> f64 {
    if y <= 2.0 {
        4.0 - 3.0 * p
    } else {
        y + 2.0 - 3.0 * p
    }
}

/// `f₍*₎(p, y) = sup_q {q·y − f(p,q)}`.
pub fn e1_f_lower_conjugate(p: f64, y: f64) -> f64 {
    if y <= 3.0 {
        1.0 - 2.0 * p
    } else {
        y - 2.0 - 2.0 * p
    }
}

// The game is symmetric under (p, q, V) ↦ (1−q, 1−p, −V) with f and h exchanged,
// which turns the convex conjugate in q into the concave conjugate in p.

/// Reduced concave conjugate `V⁺,*(x, q) = inf_p {p·x − V(p,q)}`.
pub fn e1_upper_conjugate(x: f64, q: f64) -> f64 {
    x - e1_dual(1.0 - q, x).0
}

/// `h*(x, q) = inf_p {p·x − h(p,q)}`.
pub fn e1_h_upper_conjugate(x: f64, q: f64) -> f64 {
    x - e1_f_lower_conjugate(1.0 - q, x)
}

/// `f*(x, q) = inf_p {p·x − f(p,q)}`.
pub fn e1_f_upper_conjugate(x: f64, q: f64) -> f64 {
    x - e1_h_lower_conjugate(1.0 - q, x)
}
