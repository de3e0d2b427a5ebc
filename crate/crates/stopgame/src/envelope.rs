//! Upper concave / lower convex envelopes of functions sampled on simplex lattices.

use crate::grid::SimplexGrid;

/// Upper concave envelope of values at equally spaced abscissae.
pub fn upper_hull(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    if n <= 2 {
        return v.to_vec();
    }
    let mut st: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        while st.len() >= 2 {
            let a = st[st.len() - 2];
            let b = st[st.len() - 1];
            if (v[b] - v[a]) * (i - a) as f64 <= (v[i] - v[a]) * (b - a) as f64 {
                st.pop();
            } else {
                break;
            }
        }
        st.push(i);
    }
    let mut out = v.to_vec();
    for w in st.windows(2) {
        let (a, b) = (w[0], w[1]);
        let span = (b - a) as f64;
        for k in a + 1..b {
            let chord = (v[a] * (b - k) as f64 + v[b] * (k - a) as f64) / span;
            out[k] = chord.max(v[k]);
        }
    }
    out
}

/// Lower convex envelope of values at equally spaced abscissae.
pub fn lower_hull(v: &[f64]) -> Vec<f64> {
    let neg: Vec<f64> = v.iter().map(|x| -x).collect();
    upper_hull(&neg).into_iter().map(|x| -x).collect()
}

/// Upper concave envelope of `values` (indexed like the nodes of `grid`).
pub fn concave_envelope(grid: &SimplexGrid, values: &[f64]) -> Vec<f64> {
    match grid.dim() {
        1 => values.to_vec(),
        2 => upper_hull(values),
        _ => {
            let pts: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.point(i)).collect();
            let dirac: Vec<usize> = (0..grid.dim())
                .map(|k| {
                    let mut c = vec![0u32; grid.dim()];
                    c[k] = grid.resolution() as u32;
                    grid.index_of(&c).expect("vertex node")
                })
                .collect();
            (0..grid.len())
                .map(|i| lp_envelope(&pts, values, &dirac, &pts[i]).max(values[i]))
                .collect()
        }
    }
}

pub fn convex_envelope(grid: &SimplexGrid, values: &[f64]) -> Vec<f64> {
    let neg: Vec<f64> = values.iter().map(|x| -x).collect();
    concave_envelope(grid, &neg).into_iter().map(|x| -x).collect()
}

/// max Σ λ_j c_j subject to Σ λ_j pts_j = target, λ ≥ 0, by revised simplex
/// with Bland's rule. The simplex vertices give the starting basis (B = I).
fn lp_envelope(pts: &[Vec<f64>], c: &[f64], vertices: &[usize], target: &[f64]) -> f64 {
    const EPS: f64 = 1e-12;
    let d = target.len();
    let mut basis: Vec<usize> = vertices.to_vec();
    let mut binv = vec![vec![0.0; d]; d];
    for (k, row) in binv.iter_mut().enumerate() {
        row[k] = 1.0;
    }
    let mut xb: Vec<f64> = target.to_vec();
    let mut col = vec![0.0; d];
    for _ in 0..10_000 {
        // duals y = c_B^T B^{-1}
        let y: Vec<f64> = (0..d).map(|k| (0..d).map(|r| c[basis[r]] * binv[r][k]).sum()).collect();
        let entering = (0..pts.len())
            .find(|&j| !basis.contains(&j) && c[j] - pts[j].iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() > EPS);
        let Some(j) = entering else { break };
        for (r, slot) in col.iter_mut().enumerate() {
            *slot = (0..d).map(|k| binv[r][k] * pts[j][k]).sum();
        }
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for r in 0..d {
            if col[r] > EPS {
                let ratio = xb[r] / col[r];
                let better = ratio < best - EPS || (ratio <= best + EPS && leave.is_some_and(|l| basis[r] < basis[l]));
                if leave.is_none() || better {
                    best = ratio;
                    leave = Some(r);
                }
            }
        }
        let Some(r) = leave else { break };
        let piv = col[r];
        for k in 0..d {
            binv[r][k] /= piv;
        }
        xb[r] /= piv;
        for s in 0..d {
            if s != r && col[s] != 0.0 {
                let factor = col[s];
                for k in 0..d {
                    binv[s][k] -= factor * binv[r][k];
                }
                xb[s] -= factor * xb[r];
            }
        }
        basis[r] = j;
    }
    (0..d).map(|r| c[basis[r]] * xb[r].max(0.0)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn v_shape_becomes_chord() {
        let n = 10;
        let v: Vec<f64> = (0..=n).map(|i| (i as f64 / n as f64 - 0.5).abs()).collect();
        for x in upper_hull(&v) {
            assert!((x - 0.5).abs() < 1e-15);
        }
        let w: Vec<f64> = v.iter().map(|x| -x).collect();
        for x in lower_hull(&w) {
            assert!((x + 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn concave_input_unchanged() {
        let v: Vec<f64> = (0..=20).map(|i| -((i as f64) / 20.0 - 0.3).powi(2)).collect();
        assert_eq!(upper_hull(&v), v);
    }

    #[test]
    fn lp_matches_hull_on_two_states() {
        let g = SimplexGrid::new(2, 12).unwrap();
        let v: Vec<f64> = (0..g.len()).map(|i| ((i as f64) * 1.7).sin()).collect();
        let pts: Vec<Vec<f64>> = (0..g.len()).map(|i| g.point(i)).collect();
        let hull = upper_hull(&v);
        for i in 0..g.len() {
            let lp = lp_envelope(&pts, &v, &[g.len() - 1, 0], &pts[i]).max(v[i]);
            assert!((lp - hull[i]).abs() < 1e-10, "node {i}: {lp} vs {}", hull[i]);
        }
    }

    #[test]
    fn three_state_envelope_of_concave_function_is_identity() {
        let g = SimplexGrid::new(3, 8).unwrap();
        let v: Vec<f64> = (0..g.len())
            .map(|i| {
                let p = g.point(i);
                -(p[0] * p[0] + 2.0 * p[1] * p[1] + p[2] * p[2])
            })
            .collect();
        let env = concave_envelope(&g, &v);
        for (a, b) in env.iter().zip(&v) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn three_state_envelope_of_peaks_is_affine() {
        // values only nonzero at the three vertices: the envelope is their affine interpolation
        let g = SimplexGrid::new(3, 6).unwrap();
        let corner = [3.0, -1.0, 2.0];
        let v: Vec<f64> = (0..g.len())
            .map(|i| match (0..3).find(|&k| g.composition(i)[k] == 6) {
                Some(k) => corner[k],
                None => -5.0,
            })
            .collect();
        let env = concave_envelope(&g, &v);
        for i in 0..g.len() {
            let p = g.point(i);
            let affine: f64 = (0..3).map(|k| p[k] * corner[k]).sum();
            assert!((env[i] - affine).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn hull_dominates_and_is_concave(v in proptest::collection::vec(-5.0f64..5.0, 3..40)) {
            let u = upper_hull(&v);
            for (a, b) in u.iter().zip(&v) {
                prop_assert!(a >= b);
            }
            for i in 1..u.len() - 1 {
                prop_assert!(u[i - 1] + u[i + 1] - 2.0 * u[i] <= 1e-12);
            }
            prop_assert_eq!(upper_hull(&u).len(), u.len());
        }

        #[test]
        fn hull_is_monotone(v in proptest::collection::vec(-5.0f64..5.0, 3..30), bump in proptest::collection::vec(0.0f64..1.0, 30)) {
            let w: Vec<f64> = v.iter().zip(&bump).map(|(a, b)| a + b).collect();
            let (hv, hw) = (upper_hull(&v), upper_hull(&w));
            for (a, b) in hv.iter().zip(&hw) {
                prop_assert!(a <= &(b + 1e-12));
            }
        }
    }
}
