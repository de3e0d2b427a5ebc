//! Sub/supersolution residuals of a value grid at its extreme points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SimplexGrid;
use crate::solver::ValueGrid;

fn step_of(grid: &SimplexGrid) -> Option<f64> {
    (grid.dim() > 1).then(|| 1.0 / grid.resolution() as f64)
}

fn check_direction(x: &[f64], dir: &[f64], side: &str) -> Result<()> {
    if x.len() != dir.len() {
        return Err(Error::input(format!(
            "{side} direction has {} entries, expected {}",
            dir.len(),
            x.len()
        )));
    }
    if !dir.iter().all(|d| d.is_finite()) {
        return Err(Error::input(format!("{side} direction is not finite")));
    }
    let s: f64 = dir.iter().sum();
    let scale = dir.iter().fold(1.0, |m: f64, d| m.max(d.abs()));
    if s.abs() > 1e-9 * scale {
        return Err(Error::input(format!("{side} direction does not sum to zero")));
    }
    for (k, (&xk, &dk)) in x.iter().zip(dir).enumerate() {
        if xk <= 1e-15 && dk < -1e-15 {
            return Err(Error::input(format!(
                "{side} direction leaves the simplex at coordinate {k}"
            )));
        }
    }
    Ok(())
}

/// One-sided difference quotient of the interpolated grid at node `(i, j)`
/// along `(dir_p, dir_q)`, with a step of one grid cell.
pub fn directional_derivative(grid: &ValueGrid, i: usize, j: usize, dir_p: &[f64], dir_q: &[f64]) -> Result<f64> {
    let p = grid.p_grid.point(i);
    let q = grid.q_grid.point(j);
    check_direction(&p, dir_p, "p")?;
    check_direction(&q, dir_q, "q")?;
    let norm = dir_p.iter().chain(dir_q).fold(0.0, |m: f64, d| m.max(d.abs()));
    if norm == 0.0 {
        return Ok(0.0);
    }
    let h = match (step_of(&grid.p_grid), step_of(&grid.q_grid)) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => 1.0,
    };
    let mut eps = h / norm;
    // keep the probe inside the simplex product
    for (x, d) in p.iter().zip(dir_p).chain(q.iter().zip(dir_q)) {
        if *d < 0.0 {
            eps = eps.min(x / -d);
        }
    }
    let pp: Vec<f64> = p.iter().zip(dir_p).map(|(x, d)| (x + eps * d).max(0.0)).collect();
    let qq: Vec<f64> = q.iter().zip(dir_q).map(|(x, d)| (x + eps * d).max(0.0)).collect();
    Ok((grid.interpolate(&pp, &qq) - grid.get(i, j)) / eps)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeResidual {
    pub p_node: usize,
    pub q_node: usize,
    pub is_p_extreme: bool,
    pub is_q_extreme: bool,
    /// `V − h`
    pub obstacle_gap_low: f64,
    /// `f − V`
    pub obstacle_gap_high: f64,
    /// `rV − D₁V(·; ᵀRp) − D₂V(·; ᵀQq)`
    pub pde_residual: f64,
}

impl NodeResidual {
    /// `max{min{pde, V − h}, V − f}`
    pub fn combined(&self) -> f64 {
        self.pde_residual
            .min(self.obstacle_gap_low)
            .max(-self.obstacle_gap_high)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualReport {
    pub eps_extreme: f64,
    pub records: Vec<NodeResidual>,
    pub worst_sub_violation: f64,
    pub worst_sub_at: Option<(usize, usize)>,
    pub worst_super_violation: f64,
    pub worst_super_at: Option<(usize, usize)>,
}

impl ResidualReport {
    pub fn worst_violation(&self) -> f64 {
        self.worst_sub_violation.max(self.worst_super_violation)
    }
}

/// Extreme-point flags of one slice: no chord along a lattice line through a
/// node reproduces its value within `eps`. Vertices are always extreme.
pub fn extreme_flags(grid: &SimplexGrid, slice: &[f64], eps: f64) -> Vec<bool> {
    let d = grid.dim();
    (0..grid.len())
        .map(|i| {
            if grid.is_dirac(i) {
                return true;
            }
            for a in 0..d {
                for b in a + 1..d {
                    if lies_on_chord(grid, slice, i, a, b, eps) {
                        return false;
                    }
                }
            }
            true
        })
        .collect()
}

fn lies_on_chord(grid: &SimplexGrid, slice: &[f64], i: usize, a: usize, b: usize, eps: f64) -> bool {
    let walk = |sign: i64| -> Vec<usize> {
        let mut out = Vec::new();
        let mut s = 1;
        while let Some(n) = grid.shifted(i, a, b, sign * s) {
            out.push(n);
            s += 1;
        }
        out
    };
    let below = walk(-1);
    let above = walk(1);
    let vi = slice[i];
    for (s, &lo) in below.iter().enumerate() {
        let ds = (s + 1) as f64;
        for (t, &hi) in above.iter().enumerate() {
            let dt = (t + 1) as f64;
            let chord = (slice[lo] * dt + slice[hi] * ds) / (ds + dt);
            if (chord - vi).abs() <= eps {
                return true;
            }
        }
    }
    false
}

/// Default extreme-point tolerance `10/N²·‖V‖∞` with `N` the finest resolution.
pub fn default_eps(grid: &ValueGrid) -> f64 {
    let n = [&grid.p_grid, &grid.q_grid]
        .iter()
        .filter(|g| g.dim() > 1)
        .map(|g| g.resolution())
        .max()
        .unwrap_or(1) as f64;
    10.0 / (n * n) * grid.sup_norm().max(1e-300)
}

/// Evaluates the sub/supersolution inequalities at the p-extreme and
/// q-extreme nodes of `grid`.
pub fn residual_check(grid: &ValueGrid, eps_extreme: Option<f64>) -> Result<ResidualReport> {
    let eps = eps_extreme.unwrap_or_else(|| default_eps(grid));
    if !(eps >= 0.0) {
        return Err(Error::input("eps_extreme must be nonnegative"));
    }
    let (np, nq) = (grid.p_grid.len(), grid.nq());
    let p_ext: Vec<Vec<bool>> = (0..nq)
        .into_par_iter()
        .map(|j| {
            let slice: Vec<f64> = (0..np).map(|i| grid.get(i, j)).collect();
            extreme_flags(&grid.p_grid, &slice, eps)
        })
        .collect();
    let q_ext: Vec<Vec<bool>> = (0..np)
        .into_par_iter()
        .map(|i| {
            let slice: Vec<f64> = (0..nq).map(|j| grid.get(i, j)).collect();
            extreme_flags(&grid.q_grid, &slice, eps)
        })
        .collect();
    let spec = &grid.spec;
    let records: Vec<NodeResidual> = (0..np)
        .into_par_iter()
        .flat_map_iter(|i| {
            let p = grid.p_grid.point(i);
            let dir_p = spec.r_gen.drift(&p);
            let zero_p = vec![0.0; p.len()];
            let p_ext = &p_ext;
            let q_ext = &q_ext;
            (0..nq).map(move |j| -> Result<NodeResidual> {
                let q = grid.q_grid.point(j);
                let dir_q = spec.q_gen.drift(&q);
                let v = grid.get(i, j);
                let d1 = directional_derivative(grid, i, j, &dir_p, &vec![0.0; q.len()])?;
                let d2 = directional_derivative(grid, i, j, &zero_p, &dir_q)?;
                Ok(NodeResidual {
                    p_node: i,
                    q_node: j,
                    is_p_extreme: p_ext[j][i],
                    is_q_extreme: q_ext[i][j],
                    obstacle_gap_low: v - grid.h_at_node(i, j),
                    obstacle_gap_high: grid.f_at_node(i, j) - v,
                    pde_residual: spec.r * v - d1 - d2,
                })
            })
        })
        .collect::<Result<_>>()?;
    let mut report = ResidualReport {
        eps_extreme: eps,
        records,
        worst_sub_violation: 0.0,
        worst_sub_at: None,
        worst_super_violation: 0.0,
        worst_super_at: None,
    };
    for rec in &report.records {
        let c = rec.combined();
        if rec.is_p_extreme && c > report.worst_sub_violation {
            report.worst_sub_violation = c;
            report.worst_sub_at = Some((rec.p_node, rec.q_node));
        }
        if rec.is_q_extreme && -c > report.worst_super_violation {
            report.worst_super_violation = -c;
            report.worst_super_at = Some((rec.p_node, rec.q_node));
        }
    }
    Ok(report)
}
