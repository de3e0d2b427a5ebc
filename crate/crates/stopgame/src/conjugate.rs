//! Concave/convex conjugates of saddle functions, dual flows and dual residuals.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SimplexGrid;
use crate::model::{marginal_flow, GeneratorMatrix, SimplexPoint};
use crate::solver::ValueGrid;

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Maximum of `obj` over the simplex: lattice scan, then golden-section
/// refinement along lattice lines through the best node (`obj` is assumed
/// concave along lines).
fn sup_over_simplex(obj: impl Fn(&[f64]) -> f64, dim: usize, resolution: usize) -> Result<f64> {
    if dim == 1 {
        return Ok(obj(&[1.0]));
    }
    let grid = SimplexGrid::new(dim, resolution)?;
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..grid.len() {
        let v = obj(&grid.point(i));
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let x0 = grid.point(best_i);
    let h = 1.0 / grid.resolution() as f64;
    for a in 0..dim {
        for b in a + 1..dim {
            // s ↦ x0 + s(e_a − e_b), s ∈ [−h, h] clipped to the simplex
            let lo = -(h.min(x0[a]));
            let hi = h.min(x0[b]);
            if hi - lo <= 0.0 {
                continue;
            }
            let line = |s: f64| {
                let mut x = x0.clone();
                x[a] = (x[a] + s).max(0.0);
                x[b] = (x[b] - s).max(0.0);
                obj(&x)
            };
            best = best.max(golden_max(line, lo, hi));
        }
    }
    Ok(best)
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if b - a < 1e-14 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd).max(f(a)).max(f(b))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `inf_p {⟨x,p⟩ − v(p)}` over Δ(K), `v` concave.
pub fn concave_conjugate_p(v: impl Fn(&[f64]) -> f64, x: &[f64], resolution: usize) -> Result<f64> {
    Ok(-sup_over_simplex(|p| v(p) - dot(x, p), x.len(), resolution)?)
}

/// `sup_q {⟨q,y⟩ − v(q)}` over Δ(L), `v` convex.
pub fn convex_conjugate_q(v: impl Fn(&[f64]) -> f64, y: &[f64], resolution: usize) -> Result<f64> {
    sup_over_simplex(|q| dot(y, q) - v(q), y.len(), resolution)
}

/// `V⁺,*(x, q)` of a grid (minimum over the p-nodes of the interpolant).
pub fn grid_concave_conjugate_p(grid: &ValueGrid, x: &[f64], q: &SimplexPoint) -> Result<f64> {
    if x.len() != grid.p_grid.dim() || q.dim() != grid.q_grid.dim() {
        return Err(Error::input("dimension mismatch in concave conjugate"));
    }
    concave_conjugate_p(|p| grid.interpolate(p, q.weights()), x, grid.p_grid.resolution())
}

/// `V₍*₎(p, y)` of a grid.
pub fn grid_convex_conjugate_q(grid: &ValueGrid, p: &SimplexPoint, y: &[f64]) -> Result<f64> {
    if y.len() != grid.q_grid.dim() || p.dim() != grid.p_grid.dim() {
        return Err(Error::input("dimension mismatch in convex conjugate"));
    }
    convex_conjugate_q(|q| grid.interpolate(p.weights(), q), y, grid.q_grid.resolution())
}

/// Two-state form `sup_{q∈[0,1]} {q·y − v(q)}` with `q` the weight of state 0.
pub fn reduced_convex_conjugate(v: impl Fn(f64) -> f64, y: f64, resolution: usize) -> f64 {
    convex_conjugate_q(|q| v(q[0]), &[y, 0.0], resolution).expect("two-state grid")
}

/// Two-state form `inf_{p∈[0,1]} {p·x − v(p)}`.
pub fn reduced_concave_conjugate(v: impl Fn(f64) -> f64, x: f64, resolution: usize) -> f64 {
    concave_conjugate_p(|p| v(p[0]), &[x, 0.0], resolution).expect("two-state grid")
}

/// Full convex conjugate from its reduced form:
/// `V₍*₎((p,1−p),(y₁,y₂)) = y₂ + V₍*₎(p, y₁ − y₂)`.
pub fn lift_reduced_lower(reduced: impl Fn(f64, f64) -> f64) -> impl Fn(&[f64], &[f64]) -> f64 {
    move |p: &[f64], y: &[f64]| y[1] + reduced(p[0], y[0] - y[1])
}

/// Full concave conjugate from its reduced form:
/// `V⁺,*((x₁,x₂),(q,1−q)) = x₂ + V⁺,*(x₁ − x₂, q)`.
pub fn lift_reduced_upper(reduced: impl Fn(f64, f64) -> f64) -> impl Fn(&[f64], &[f64]) -> f64 {
    move |x: &[f64], q: &[f64]| x[1] + reduced(x[0] - x[1], q[0])
}

/// One-sided slopes of a piecewise-linear two-state slice at scalar `s`,
/// with ±∞ past the ends.
fn pl_slopes(values: &[f64], s: f64) -> (f64, f64) {
    let n = values.len() - 1;
    let pos = s * n as f64;
    let k = pos.round();
    let slope = |c: usize| (values[c + 1] - values[c]) * n as f64;
    if (pos - k).abs() < 1e-9 {
        let k = k as usize;
        let left = if k == 0 { f64::NEG_INFINITY } else { slope(k - 1) };
        let right = if k == n { f64::INFINITY } else { slope(k) };
        (left, right)
    } else {
        let c = (pos.floor() as usize).min(n - 1);
        (slope(c), slope(c))
    }
}

fn slice_slopes(
    eval: impl Fn(&[f64]) -> f64,
    grid: &SimplexGrid,
    at: &[f64],
    exact_nodes: impl Fn(usize) -> f64,
) -> Vec<(f64, f64)> {
    let d = grid.dim();
    if d == 1 {
        return Vec::new();
    }
    if d == 2 {
        let vals: Vec<f64> = (0..grid.len()).map(exact_nodes).collect();
        return vec![pl_slopes(&vals, at[0])];
    }
    let h = 1e-7;
    (0..d - 1)
        .map(|a| {
            let probe = |s: f64| {
                let mut x = at.to_vec();
                x[a] += s;
                x[d - 1] -= s;
                x.iter().all(|v| *v >= 0.0).then(|| eval(&x))
            };
            let v0 = eval(at);
            let left = probe(-h).map_or(f64::NEG_INFINITY, |v| (v0 - v) / h);
            let right = probe(h).map_or(f64::INFINITY, |v| (v - v0) / h);
            (left, right)
        })
        .collect()
}

/// Subdifferential of `q ↦ V(p, q)` as one interval per chart coordinate
/// (direction `e_a − e_last`); for two states, the reduced scalar slope.
pub fn subgradient_q(grid: &ValueGrid, p: &SimplexPoint, q: &SimplexPoint) -> Result<Vec<(f64, f64)>> {
    if p.dim() != grid.p_grid.dim() || q.dim() != grid.q_grid.dim() {
        return Err(Error::input("point outside the grid's simplex product"));
    }
    let sp = grid.p_grid.stencil(p.weights());
    Ok(slice_slopes(
        |qq| grid.interpolate(p.weights(), qq),
        &grid.q_grid,
        q.weights(),
        |j| sp.iter().map(|&(i, w)| w * grid.get(i, j)).sum(),
    ))
}

/// Superdifferential of `p ↦ V(p, q)`, mirror of [`subgradient_q`].
pub fn supergradient_p(grid: &ValueGrid, p: &SimplexPoint, q: &SimplexPoint) -> Result<Vec<(f64, f64)>> {
    if p.dim() != grid.p_grid.dim() || q.dim() != grid.q_grid.dim() {
        return Err(Error::input("point outside the grid's simplex product"));
    }
    let sq = grid.q_grid.stencil(q.weights());
    Ok(slice_slopes(
        |pp| grid.interpolate(pp, q.weights()),
        &grid.p_grid,
        p.weights(),
        |i| sq.iter().map(|&(j, w)| w * grid.get(i, j)).sum(),
    ))
    .map(|v| {
        // concave: the right slope is the lower end; an open end flips sign
        v.into_iter()
            .map(|(l, r)| (if r.is_finite() { r } else { -r }, if l.is_finite() { l } else { -l }))
            .collect()
    })
}

/// Midpoint selection from an interval, falling back to the finite end.
pub fn midpoint_selection(interval: (f64, f64)) -> f64 {
    match (interval.0.is_finite(), interval.1.is_finite()) {
        (true, true) => 0.5 * (interval.0 + interval.1),
        (true, false) => interval.0,
        (false, true) => interval.1,
        (false, false) => 0.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualFlowState {
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub t: f64,
}

fn shifted_exp(g: &GeneratorMatrix, r: f64, t: f64, v: &[f64]) -> Vec<f64> {
    let n = g.dim();
    let m = (DMatrix::identity(n, n) * r - g.matrix()) * t;
    let out = m.exp() * DVector::from_column_slice(v);
    out.iter().copied().collect()
}

/// `(x_t, q_t) = (exp(t(rI − R))x, exp(t·ᵀQ)q)`.
pub fn dual_flow(
    x: &[f64],
    q: &SimplexPoint,
    r_gen: &GeneratorMatrix,
    q_gen: &GeneratorMatrix,
    r: f64,
    t: f64,
) -> Result<DualFlowState> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::input("flow time must be finite and nonnegative"));
    }
    if x.len() != r_gen.dim() || q.dim() != q_gen.dim() {
        return Err(Error::input("dimension mismatch in dual flow"));
    }
    Ok(DualFlowState {
        x: shifted_exp(r_gen, r, t, x),
        q: marginal_flow(q, q_gen, t).into_vec(),
        t,
    })
}

/// Mirror flow `(p_t, y_t) = (exp(t·ᵀR)p, exp(t(rI − Q))y)`.
pub fn dual_flow_py(
    p: &SimplexPoint,
    y: &[f64],
    r_gen: &GeneratorMatrix,
    q_gen: &GeneratorMatrix,
    r: f64,
    t: f64,
) -> Result<(SimplexPoint, Vec<f64>)> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::input("flow time must be finite and nonnegative"));
    }
    if y.len() != q_gen.dim() || p.dim() != r_gen.dim() {
        return Err(Error::input("dimension mismatch in dual flow"));
    }
    Ok((marginal_flow(p, r_gen, t), shifted_exp(q_gen, r, t, y)))
}

/// Forward difference of `f(a, b)` along `(da, db)`.
fn forward_difference(f: &impl Fn(&[f64], &[f64]) -> f64, a: &[f64], b: &[f64], da: &[f64], db: &[f64]) -> f64 {
    let norm = da.iter().chain(db).fold(0.0, |m: f64, v| m.max(v.abs()));
    if norm == 0.0 {
        return 0.0;
    }
    let h = 1e-7 / norm;
    let a2: Vec<f64> = a.iter().zip(da).map(|(x, d)| x + h * d).collect();
    let b2: Vec<f64> = b.iter().zip(db).map(|(x, d)| x + h * d).collect();
    (f(&a2, &b2) - f(a, b)) / h
}

/// Superdual pair `(h* − V⁺,*, D⃗V⁺,*(·; (rI−R)x, ᵀQq) − rV⁺,*)` at `(x, q)`;
/// its minimum is ≤ 0 for the true value.
#[allow(clippy::too_many_arguments)]
pub fn superdual_residual(
    vstar: impl Fn(&[f64], &[f64]) -> f64,
    hstar: impl Fn(&[f64], &[f64]) -> f64,
    x: &[f64],
    q: &[f64],
    r_gen: &GeneratorMatrix,
    q_gen: &GeneratorMatrix,
    r: f64,
) -> (f64, f64) {
    let rx = r_gen.matrix() * DVector::from_column_slice(x);
    let dx: Vec<f64> = x.iter().zip(rx.iter()).map(|(xi, ri)| r * xi - ri).collect();
    let dq = q_gen.drift(q);
    let v = vstar(x, q);
    (hstar(x, q) - v, forward_difference(&vstar, x, q, &dx, &dq) - r * v)
}

/// Subdual pair `(f₍*₎ − V₍*₎, D⃗V₍*₎(·; ᵀRp, (rI−Q)y) − rV₍*₎)` at `(p, y)`;
/// its maximum is ≥ 0 for the true value.
pub fn subdual_residual(
    vstar: impl Fn(&[f64], &[f64]) -> f64,
    fstar: impl Fn(&[f64], &[f64]) -> f64,
    p: &[f64],
    y: &[f64],
    r_gen: &GeneratorMatrix,
    q_gen: &GeneratorMatrix,
    r: f64,
) -> (f64, f64) {
    let qy = q_gen.matrix() * DVector::from_column_slice(y);
    let dy: Vec<f64> = y.iter().zip(qy.iter()).map(|(yi, qi)| r * yi - qi).collect();
    let dp = r_gen.drift(p);
    let v = vstar(p, y);
    (fstar(p, y) - v, forward_difference(&vstar, p, y, &dp, &dy) - r * v)
}
