//! One-sided game: X has generator ((−a, a), (b, −b)), Y is a single state,
//! obstacles affine in the weight `p` of state 0.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GameSpec, GeneratorMatrix, SimplexPoint};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example2Params {
    pub a: f64,
    pub b: f64,
    pub r: f64,
    /// `(h(0), h(1))`
    pub h: (f64, f64),
    /// `(f(0), f(1))`
    pub f: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseTag {
    I,
    II,
    III,
}

impl Example2Params {
    pub fn new(a: f64, b: f64, r: f64, h: (f64, f64), f: (f64, f64)) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b), ("r", r)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::input(format!("{name}: must be positive, got {v}")));
            }
        }
        if !(h.0 > 0.0 && h.1 > 0.0 && h.0 < f.0 && h.1 < f.1) {
            return Err(Error::input("h, f: need 0 < h < f on [0,1]"));
        }
        if !(h.1 >= h.0 && f.1 >= f.0) {
            return Err(Error::input("h, f: obstacles must be increasing"));
        }
        Ok(Example2Params { a, b, r, h, f })
    }

    /// a = b = 1, r = 0.1, h(p) = 0.5 + 1.5p, f(p) = 1 + 2p.
    pub fn reference() -> Self {
        Example2Params::new(1.0, 1.0, 0.1, (0.5, 2.0), (1.0, 3.0)).expect("reference parameters are valid")
    }

    pub fn h_at(&self, p: f64) -> f64 {
        self.h.0 + (self.h.1 - self.h.0) * p
    }

    pub fn f_at(&self, p: f64) -> f64 {
        self.f.0 + (self.f.1 - self.f.0) * p
    }

    pub fn p_star(&self) -> f64 {
        self.b / (self.a + self.b)
    }

    /// Scalar belief drift `b − (a+b)p`.
    pub fn drift(&self, p: f64) -> f64 {
        self.b - (self.a + self.b) * p
    }

    /// Game with K = {0, 1}, L a singleton, initial belief `p` on state 0.
    pub fn spec(&self, p: f64) -> Result<GameSpec> {
        GameSpec::new(
            GeneratorMatrix::two_state(self.a, self.b)?,
            GeneratorMatrix::zero(1),
            self.r,
            DMatrix::from_row_slice(2, 1, &[self.f.1, self.f.0]),
            DMatrix::from_row_slice(2, 1, &[self.h.1, self.h.0]),
            SimplexPoint::scalar(p)?,
            SimplexPoint::uniform(1),
        )
    }

    fn threshold(&self) -> f64 {
        self.b / (self.b + self.r) * self.h.1
    }

    pub fn case(&self) -> CaseTag {
        let t = self.threshold();
        if t > self.f.0 {
            CaseTag::I
        } else if self.h.0 < t {
            CaseTag::II
        } else {
            CaseTag::III
        }
    }

    fn require_case_i(&self) -> Result<()> {
        match self.case() {
            CaseTag::I => Ok(()),
            other => Err(Error::input(format!("parameters are in case {other:?}, not case I"))),
        }
    }

    /// Interior extreme point of V: root in (0, p*) of
    /// (h(1) − f(p))/(1 − p) = −r f(p)/((a+b)p − b).
    pub fn p0(&self) -> Result<f64> {
        self.require_case_i()?;
        let g =
            |p: f64| (self.h.1 - self.f_at(p)) / (1.0 - p) + self.r * self.f_at(p) / ((self.a + self.b) * p - self.b);
        let (mut lo, mut hi) = (0.0, self.p_star());
        let g_lo = g(lo);
        // g → −∞ as p ↑ p*
        let g_hi = g(hi - 1e-15 * hi.max(1.0));
        if !(g_lo > 0.0 && g_hi < 0.0) {
            return Err(Error::integrity("no sign change for the p0 equation on (0, p*)"));
        }
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Closed-form value.
    pub fn value(&self, p: f64) -> Result<f64> {
        Ok(match self.case() {
            CaseTag::I => {
                let p0 = self.p0()?;
                if p <= p0 {
                    self.f_at(p)
                } else {
                    ((p - p0) * self.h.1 + (1.0 - p) * self.f_at(p0)) / (1.0 - p0)
                }
            }
            CaseTag::II => self.threshold() * (1.0 - p) + p * self.h.1,
            CaseTag::III => self.h_at(p),
        })
    }

    /// Value curve evaluator (computes p0 once).
    pub fn value_fn(&self) -> Result<impl Fn(f64) -> f64 + Clone + Send + Sync> {
        let case = self.case();
        let p0 = if case == CaseTag::I { self.p0()? } else { f64::NAN };
        let s = *self;
        Ok(move |p: f64| match case {
            CaseTag::I if p <= p0 => s.f_at(p),
            CaseTag::I => ((p - p0) * s.h.1 + (1.0 - p) * s.f_at(p0)) / (1.0 - p0),
            CaseTag::II => s.threshold() * (1.0 - p) + p * s.h.1,
            CaseTag::III => s.h_at(p),
        })
    }

    /// Jump intensity at p0 in the belief dynamics, (b − (a+b)p0)/(1 − p0).
    pub fn lambda_p0(&self) -> Result<f64> {
        let p0 = self.p0()?;
        Ok(self.drift(p0) / (1.0 - p0))
    }

    /// Stopping intensity while X is in state 0, (b − (a+b)p0)/(p0(1 − p0)).
    pub fn lambda1(&self) -> Result<f64> {
        let p0 = self.p0()?;
        Ok(self.drift(p0) / (p0 * (1.0 - p0)))
    }

    /// Probability of stopping at time 0 given X₀ = 0, for p > p0.
    pub fn split_probability(&self, p: f64) -> Result<f64> {
        let p0 = self.p0()?;
        Ok(((p - p0) / (p * (1.0 - p0))).max(0.0))
    }

    /// Time for the belief flow p′ = b − (a+b)p to climb from p to p0.
    pub fn waiting_time(&self, p: f64) -> Result<f64> {
        let p0 = self.p0()?;
        if p >= p0 {
            return Ok(0.0);
        }
        Ok((self.drift(p) / self.drift(p0)).ln() / (self.a + self.b))
    }

    /// Value of the game in which nobody observes X.
    pub fn blind(&self) -> Result<BlindSolution> {
        self.require_case_i()?;
        let p0 = self.p0()?;
        let hs = self.h.1 - self.h.0;
        if hs <= 0.0 {
            return Err(Error::integrity("flat h: no smooth-fit point"));
        }
        let ab = self.a + self.b;
        let p2 = (hs * self.b - self.r * self.h.0) / (hs * (self.r + ab));
        let expo = -self.r / ab;
        let c = self.h_at(p2) * self.drift(p2).powf(-expo);
        let s = |p: f64| c * self.drift(p).powf(expo);
        let g = |p: f64| self.f_at(p) - s(p);
        let p1 = if g(0.0) >= 0.0 {
            0.0
        } else {
            let (mut lo, mut hi) = (0.0, p2);
            while hi - lo > 1e-14 {
                let mid = 0.5 * (lo + hi);
                if g(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        if !(p1 < p0 && p0 < p2 && p2 < self.p_star()) {
            return Err(Error::integrity(format!(
                "blind free boundaries out of order: p1={p1}, p0={p0}, p2={p2}"
            )));
        }
        Ok(BlindSolution {
            params: *self,
            p1,
            p2,
            c,
            exponent: expo,
        })
    }
}

/// Glued solution f | C·(b − (a+b)p)^{−r/(a+b)} | h.
#[derive(Clone, Copy, Debug)]
pub struct BlindSolution {
    pub params: Example2Params,
    pub p1: f64,
    pub p2: f64,
    pub c: f64,
    pub exponent: f64,
}

impl BlindSolution {
    pub fn ode_branch(&self, p: f64) -> f64 {
        self.c * self.params.drift(p).powf(self.exponent)
    }

    pub fn ode_branch_derivative(&self, p: f64) -> f64 {
        let ab = self.params.a + self.params.b;
        -self.exponent * ab * self.ode_branch(p) / self.params.drift(p)
    }

    pub fn value(&self, p: f64) -> f64 {
        if p < self.p1 {
            self.params.f_at(p)
        } else if p <= self.p2 {
            self.ode_branch(p)
        } else {
            self.params.h_at(p)
        }
    }
}
