//! Value iteration on Δ(K)×Δ(L): obstacle step along the belief flow, then Cav in p, then Vex in q.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envelope::{concave_envelope, convex_envelope};
use crate::error::{Error, Result};
use crate::grid::SimplexGrid;
use crate::model::{marginal_flow, GameSpec, SimplexPoint};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveMeta {
    pub iterations: usize,
    pub residual: f64,
    pub delta: f64,
}

/// Values of a saddle function at the nodes of `p_grid × q_grid`, row-major in p.
#[derive(Clone, Debug)]
pub struct ValueGrid {
    pub p_grid: SimplexGrid,
    pub q_grid: SimplexGrid,
    pub values: Vec<f64>,
    pub spec: GameSpec,
    pub meta: SolveMeta,
}

impl ValueGrid {
    pub fn from_fn(spec: &GameSpec, n_p: usize, n_q: usize, mut f: impl FnMut(&[f64], &[f64]) -> f64) -> Result<Self> {
        let p_grid = SimplexGrid::new(spec.k_size(), n_p)?;
        let q_grid = SimplexGrid::new(spec.l_size(), n_q)?;
        let qs: Vec<Vec<f64>> = (0..q_grid.len()).map(|j| q_grid.point(j)).collect();
        let mut values = Vec::with_capacity(p_grid.len() * q_grid.len());
        for i in 0..p_grid.len() {
            let p = p_grid.point(i);
            for q in &qs {
                values.push(f(&p, q));
            }
        }
        Ok(ValueGrid {
            p_grid,
            q_grid,
            values,
            spec: spec.clone(),
            meta: SolveMeta::default(),
        })
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        ValueGrid { values, ..self.clone() }
    }

    pub fn nq(&self) -> usize {
        self.q_grid.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.nq() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let nq = self.nq();
        self.values[i * nq + j] = v;
    }

    pub fn h_at_node(&self, i: usize, j: usize) -> f64 {
        self.spec.h_at(&self.p_grid.point(i), &self.q_grid.point(j))
    }

    pub fn f_at_node(&self, i: usize, j: usize) -> f64 {
        self.spec.f_at(&self.p_grid.point(i), &self.q_grid.point(j))
    }

    /// Piecewise-linear interpolation (tensor product of the simplex stencils).
    pub fn interpolate(&self, p: &[f64], q: &[f64]) -> f64 {
        let sp = self.p_grid.stencil(p);
        let sq = self.q_grid.stencil(q);
        combine(&self.values, self.nq(), &sp, &sq)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance_to(&self, mut f: impl FnMut(&[f64], &[f64]) -> f64) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.p_grid.len() {
            let p = self.p_grid.point(i);
            for j in 0..self.nq() {
                worst = worst.max((self.get(i, j) - f(&p, &self.q_grid.point(j))).abs());
            }
        }
        worst
    }

    /// Largest positive second difference along lattice lines of the p-slices.
    pub fn concavity_defect_p(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.nq() {
            let slice: Vec<f64> = (0..self.p_grid.len()).map(|i| self.get(i, j)).collect();
            worst = worst.max(second_difference_defect(&self.p_grid, &slice));
        }
        worst
    }

    /// Largest negative second difference along lattice lines of the q-slices.
    pub fn convexity_defect_q(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.p_grid.len() {
            let slice: Vec<f64> = (0..self.nq()).map(|j| -self.get(i, j)).collect();
            worst = worst.max(second_difference_defect(&self.q_grid, &slice));
        }
        worst
    }

    /// Largest violation of `h ≤ V ≤ f` over the nodes (0 when sandwiched).
    pub fn sandwich_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.p_grid.len() {
            for j in 0..self.nq() {
                let v = self.get(i, j);
                worst = worst.max(self.h_at_node(i, j) - v).max(v - self.f_at_node(i, j));
            }
        }
        worst
    }
}

fn combine(values: &[f64], nq: usize, sp: &[(usize, f64)], sq: &[(usize, f64)]) -> f64 {
    let mut s = 0.0;
    for &(a, wa) in sp {
        let row = &values[a * nq..(a + 1) * nq];
        let mut inner = 0.0;
        for &(b, wb) in sq {
            inner += wb * row[b];
        }
        s += wa * inner;
    }
    s
}

fn second_difference_defect(grid: &SimplexGrid, slice: &[f64]) -> f64 {
    let d = grid.dim();
    let mut worst: f64 = 0.0;
    for i in 0..grid.len() {
        for a in 0..d {
            for b in 0..d {
                if a >= b {
                    continue;
                }
                if let (Some(lo), Some(hi)) = (grid.shifted(i, a, b, -1), grid.shifted(i, a, b, 1)) {
                    worst = worst.max(slice[lo] + slice[hi] - 2.0 * slice[i]);
                }
            }
        }
    }
    worst
}

/// Per-slice upper concave envelope in p.
pub fn cav_p(grid: &ValueGrid) -> ValueGrid {
    let mut out = grid.clone();
    cav_in_place(&grid.p_grid, grid.nq(), &mut out.values);
    out
}

/// Per-slice lower convex envelope in q.
pub fn vex_q(grid: &ValueGrid) -> ValueGrid {
    let mut out = grid.clone();
    vex_in_place(&grid.q_grid, &mut out.values);
    out
}

fn cav_in_place(p_grid: &SimplexGrid, nq: usize, values: &mut [f64]) {
    if p_grid.dim() == 1 {
        return;
    }
    let np = p_grid.len();
    let columns: Vec<Vec<f64>> = (0..nq)
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = (0..np).map(|i| values[i * nq + j]).collect();
            concave_envelope(p_grid, &col)
        })
        .collect();
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            values[i * nq + j] = *v;
        }
    }
}

fn vex_in_place(q_grid: &SimplexGrid, values: &mut [f64]) {
    if q_grid.dim() == 1 {
        return;
    }
    let nq = q_grid.len();
    values.par_chunks_mut(nq).for_each(|row| {
        let env = convex_envelope(q_grid, row);
        row.copy_from_slice(&env);
    });
}

fn median(lo: f64, hi: f64, v: f64) -> f64 {
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

/// Precomputed pieces of one sweep: flowed stencils and obstacle values.
struct Sweeper {
    np: usize,
    nq: usize,
    p_stencils: Vec<Vec<(usize, f64)>>,
    q_stencils: Vec<Vec<(usize, f64)>>,
    h: Vec<f64>,
    f: Vec<f64>,
    discount: f64,
}

impl Sweeper {
    fn new(grid: &ValueGrid, delta: f64) -> Self {
        let spec = &grid.spec;
        let flowed = |g: &SimplexGrid, gen| -> Vec<Vec<(usize, f64)>> {
            (0..g.len())
                .map(|i| {
                    let x = SimplexPoint::from_numeric(g.point(i));
                    g.stencil(marginal_flow(&x, gen, delta).weights())
                })
                .collect()
        };
        let (np, nq) = (grid.p_grid.len(), grid.q_grid.len());
        let mut h = Vec::with_capacity(np * nq);
        let mut f = Vec::with_capacity(np * nq);
        for i in 0..np {
            for j in 0..nq {
                h.push(grid.h_at_node(i, j));
                f.push(grid.f_at_node(i, j));
            }
        }
        Sweeper {
            np,
            nq,
            p_stencils: flowed(&grid.p_grid, &spec.r_gen),
            q_stencils: flowed(&grid.q_grid, &spec.q_gen),
            h,
            f,
            discount: (-spec.r * delta).exp(),
        }
    }

    fn obstacle(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        out.par_chunks_mut(self.nq).enumerate().for_each(|(i, row)| {
            for (j, slot) in row.iter_mut().enumerate() {
                let k = i * self.nq + j;
                let cont = self.discount * combine(values, self.nq, &self.p_stencils[i], &self.q_stencils[j]);
                *slot = median(self.h[k], self.f[k], cont);
            }
        });
        out
    }

    fn clamp(&self, values: &mut [f64]) {
        for (k, v) in values.iter_mut().enumerate() {
            *v = median(self.h[k], self.f[k], *v);
        }
    }
}

/// Time step: the belief flow and the discount each move at most about one
/// grid cell per step.
pub fn time_step(spec: &GameSpec, n_p: usize, n_q: usize) -> f64 {
    let mut n = 1usize;
    if spec.k_size() > 1 {
        n = n.max(n_p);
    }
    if spec.l_size() > 1 {
        n = n.max(n_q);
    }
    let speed = spec.r_gen.row_norm().max(spec.q_gen.row_norm()).max(spec.r);
    (1.0 / (n as f64 * speed)).min(0.5 / spec.r)
}

/// One obstacle step with the given time step.
pub fn obstacle_step(grid: &ValueGrid, delta: f64) -> ValueGrid {
    assert!(delta > 0.0, "time step must be positive");
    let sw = Sweeper::new(grid, delta);
    grid.with_values(sw.obstacle(&grid.values))
}

/// Iterates `V ← vex_q(cav_p(obstacle_step(V)))` from `(f+h)/2` until the
/// sup-norm change drops below `tol`.
pub fn solve(spec: &GameSpec, n_p: usize, n_q: usize, tol: f64, max_iter: usize) -> Result<ValueGrid> {
    solve_with_step(spec, n_p, n_q, tol, max_iter, time_step(spec, n_p, n_q))
}

pub fn solve_with_step(
    spec: &GameSpec,
    n_p: usize,
    n_q: usize,
    tol: f64,
    max_iter: usize,
    delta: f64,
) -> Result<ValueGrid> {
    if !(tol > 0.0) {
        return Err(Error::input("tol must be positive"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::input("time step must be positive"));
    }
    let mut grid = ValueGrid::from_fn(spec, n_p, n_q, |p, q| 0.5 * (spec.f_at(p, q) + spec.h_at(p, q)))?;
    let sw = Sweeper::new(&grid, delta);
    let mut change = f64::INFINITY;
    for it in 1..=max_iter {
        let mut next = sw.obstacle(&grid.values);
        cav_in_place(&grid.p_grid, sw.nq, &mut next);
        vex_in_place(&grid.q_grid, &mut next);
        sw.clamp(&mut next);
        change = next
            .iter()
            .zip(&grid.values)
            .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
        grid.values = next;
        if change < tol {
            grid.meta = SolveMeta {
                iterations: it,
                residual: change,
                delta,
            };
            return Ok(grid);
        }
    }
    grid.meta = SolveMeta {
        iterations: max_iter,
        residual: change,
        delta,
    };
    debug_assert_eq!(grid.values.len(), sw.np * sw.nq);
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: change,
        grid: Box::new(grid),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GeneratorMatrix;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn spec_2x2(f: [f64; 4], h: [f64; 4], a: f64, r: f64) -> GameSpec {
        GameSpec::new(
            GeneratorMatrix::two_state(a, a).unwrap(),
            GeneratorMatrix::two_state(a, 2.0 * a).unwrap(),
            r,
            DMatrix::from_row_slice(2, 2, &f),
            DMatrix::from_row_slice(2, 2, &h),
            SimplexPoint::uniform(2),
            SimplexPoint::uniform(2),
        )
        .unwrap()
    }

    #[test]
    fn cav_of_v_shape_is_constant() {
        let spec = spec_2x2([1.0; 4], [-1.0; 4], 0.0, 1.0);
        let g = ValueGrid::from_fn(&spec, 10, 4, |p, _| (p[0] - 0.5).abs()).unwrap();
        let c = cav_p(&g);
        assert!(c.values.iter().all(|v| (v - 0.5).abs() < 1e-15));
        let g = ValueGrid::from_fn(&spec, 4, 10, |_, q| -(q[0] - 0.5).abs()).unwrap();
        let c = vex_q(&g);
        assert!(c.values.iter().all(|v| (v + 0.5).abs() < 1e-15));
    }

    #[test]
    fn obstacle_step_respects_median_bounds() {
        let spec = spec_2x2([4.0, 1.0, 2.0, -1.0], [1.0, -1.0, -2.0, -4.0], 1.0, 1.0);
        let gf = ValueGrid::from_fn(&spec, 8, 8, |p, q| spec.f_at(p, q)).unwrap();
        let out = obstacle_step(&gf, 0.1);
        for i in 0..out.p_grid.len() {
            for j in 0..out.nq() {
                assert!(out.get(i, j) <= out.f_at_node(i, j) + 1e-15);
            }
        }
        let gh = ValueGrid::from_fn(&spec, 8, 8, |p, q| spec.h_at(p, q)).unwrap();
        let out = obstacle_step(&gh, 0.1);
        for i in 0..out.p_grid.len() {
            for j in 0..out.nq() {
                assert!(out.get(i, j) >= out.h_at_node(i, j) - 1e-15);
            }
        }
    }

    #[test]
    fn equal_obstacles_pin_the_value() {
        let m = [0.3, -1.0, 2.0, 0.5];
        let spec = spec_2x2(m, m, 1.0, 0.5);
        let g = solve(&spec, 10, 10, 1e-10, 100).unwrap();
        assert!(g.sup_distance_to(|p, q| spec.f_at(p, q)) < 1e-12);
    }

    #[test]
    fn single_state_game_matches_scalar_obstacle_problem() {
        for (h, f) in [(-1.0, 2.0), (0.5, 2.0), (-3.0, -1.0)] {
            let spec = GameSpec::new(
                GeneratorMatrix::zero(1),
                GeneratorMatrix::zero(1),
                0.7,
                DMatrix::from_element(1, 1, f),
                DMatrix::from_element(1, 1, h),
                SimplexPoint::uniform(1),
                SimplexPoint::uniform(1),
            )
            .unwrap();
            let g = solve(&spec, 5, 5, 1e-12, 10_000).unwrap();
            let expected: f64 = median(h, f, 0.0);
            assert!((g.values[0] - expected).abs() < 1e-10, "{} vs {expected}", g.values[0]);
        }
    }

    #[test]
    fn non_convergence_reports_last_iterate() {
        let spec = spec_2x2([4.0, 1.0, 2.0, -1.0], [1.0, -1.0, -2.0, -4.0], 1.0, 1.0);
        match solve(&spec, 10, 10, 1e-14, 2) {
            Err(Error::NonConvergence {
                iterations,
                residual,
                grid,
            }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 0.0);
                assert_eq!(grid.meta.iterations, 2);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn three_state_solve_is_sandwiched_and_saddle() {
        let spec = GameSpec::new(
            GeneratorMatrix::from_rows(&[vec![-1.0, 0.5, 0.5], vec![0.2, -0.4, 0.2], vec![1.0, 0.0, -1.0]]).unwrap(),
            GeneratorMatrix::two_state(0.5, 0.5).unwrap(),
            1.0,
            DMatrix::from_row_slice(3, 2, &[2.0, 1.0, 0.5, 3.0, 1.0, 1.0]),
            DMatrix::from_row_slice(3, 2, &[0.0, -1.0, 0.0, 1.0, -2.0, 0.5]),
            SimplexPoint::uniform(3),
            SimplexPoint::uniform(2),
        )
        .unwrap();
        let g = solve(&spec, 6, 8, 1e-8, 20_000).unwrap();
        assert!(g.sandwich_violation() <= 0.0);
        assert!(g.concavity_defect_p() < 1e-7 * 8.0);
        assert!(g.convexity_defect_q() < 1e-7 * 8.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn sweep_is_monotone(base in proptest::collection::vec(-4.0f64..4.0, 36), bump in proptest::collection::vec(0.0f64..1.0, 36)) {
            let spec = spec_2x2([4.0, 1.0, 2.0, -1.0], [1.0, -1.0, -2.0, -4.0], 0.8, 1.0);
            let g1 = ValueGrid::from_fn(&spec, 5, 5, |_, _| 0.0).unwrap().with_values(base.clone());
            let bigger: Vec<f64> = base.iter().zip(&bump).map(|(a, b)| a + b).collect();
            let g2 = g1.with_values(bigger);
            let s1 = vex_q(&cav_p(&obstacle_step(&g1, 0.05)));
            let s2 = vex_q(&cav_p(&obstacle_step(&g2, 0.05)));
            for (a, b) in s1.values.iter().zip(&s2.values) {
                prop_assert!(*a <= b + 1e-12);
            }
        }
    }
}
