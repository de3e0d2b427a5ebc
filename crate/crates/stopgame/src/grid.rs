//! Uniform lattices on the probability simplex and piecewise-linear interpolation.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// All points of Δ(d) whose coordinates are multiples of `1/N`.
///
/// For `d = 2` node `i` is `(i/N, 1 − i/N)`, so the node index is the
/// scalar coordinate times `N`.
#[derive(Clone, Debug)]
pub struct SimplexGrid {
    dim: usize,
    resolution: usize,
    nodes: Vec<Vec<u32>>,
    index: HashMap<u128, usize>,
}

impl PartialEq for SimplexGrid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.resolution == other.resolution
    }
}

fn compositions(dim: usize, total: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() + 1 == dim {
        let mut node = prefix.clone();
        node.push(total);
        out.push(node);
        return;
    }
    for first in 0..=total {
        prefix.push(first);
        compositions(dim, total - first, prefix, out);
        prefix.pop();
    }
}

impl SimplexGrid {
    pub fn new(dim: usize, resolution: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("simplex dimension must be positive"));
        }
        if resolution == 0 {
            return Err(Error::input("grid resolution must be positive"));
        }
        if resolution > u16::MAX as usize || dim > 8 {
            return Err(Error::input("grid too large"));
        }
        // a one-point simplex has a single node whatever N is
        let resolution = if dim == 1 { 1 } else { resolution };
        let mut nodes = Vec::new();
        compositions(dim, resolution as u32, &mut Vec::with_capacity(dim), &mut nodes);
        let mut grid = SimplexGrid {
            dim,
            resolution,
            nodes,
            index: HashMap::new(),
        };
        let keys: Vec<u128> = grid.nodes.iter().map(|n| grid.key_of(n)).collect();
        grid.index = keys.into_iter().enumerate().map(|(i, k)| (k, i)).collect();
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn composition(&self, i: usize) -> &[u32] {
        &self.nodes[i]
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        let n = self.resolution as f64;
        self.nodes[i].iter().map(|&c| c as f64 / n).collect()
    }

    pub fn is_dirac(&self, i: usize) -> bool {
        self.nodes[i].iter().any(|&c| c as usize == self.resolution)
    }

    fn key_of(&self, comp: &[u32]) -> u128 {
        let base = self.resolution as u128 + 1;
        let mut key = 0u128;
        let mut acc = 0u128;
        for &c in &comp[..comp.len() - 1] {
            acc += c as u128;
            key = key * base + acc;
        }
        key
    }

    fn key_of_chart(&self, chart: &[i64]) -> u128 {
        let base = self.resolution as u128 + 1;
        chart.iter().fold(0u128, |k, &c| k * base + c as u128)
    }

    pub fn index_of(&self, comp: &[u32]) -> Option<usize> {
        if comp.len() != self.dim || comp.iter().map(|&c| c as usize).sum::<usize>() != self.resolution {
            return None;
        }
        self.index.get(&self.key_of(comp)).copied()
    }

    /// Node indices and nonnegative weights whose combination reproduces any
    /// affine function at `x` (Freudenthal triangulation of the cumulative chart).
    pub fn stencil(&self, x: &[f64]) -> Vec<(usize, f64)> {
        debug_assert_eq!(x.len(), self.dim);
        match self.dim {
            1 => vec![(0, 1.0)],
            2 => {
                let n = self.resolution;
                let s = (x[0] * n as f64).clamp(0.0, n as f64);
                let i = (s.floor() as usize).min(n - 1);
                let w = (s - i as f64).clamp(0.0, 1.0);
                vec![(i, 1.0 - w), (i + 1, w)]
            }
            _ => self.kuhn_stencil(x),
        }
    }

    fn kuhn_stencil(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let n = self.resolution as f64;
        let m = self.dim - 1;
        let mut c = vec![0.0; m];
        let mut acc = 0.0;
        for j in 0..m {
            acc += x[j];
            c[j] = (acc * n).clamp(0.0, n);
            if j > 0 && c[j] < c[j - 1] {
                c[j] = c[j - 1];
            }
        }
        let top = self.resolution as i64 - 1;
        let base: Vec<i64> = c.iter().map(|v| (v.floor() as i64).clamp(0, top)).collect();
        let frac: Vec<f64> = c
            .iter()
            .zip(&base)
            .map(|(v, b)| (v - *b as f64).clamp(0.0, 1.0))
            .collect();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| frac[b].partial_cmp(&frac[a]).unwrap().then(b.cmp(&a)));
        let mut out = Vec::with_capacity(m + 1);
        let mut v = base.clone();
        let first_w = 1.0 - frac[order[0]];
        out.push((self.index[&self.key_of_chart(&v)], first_w));
        for i in 0..m {
            v[order[i]] += 1;
            let w = if i + 1 < m {
                frac[order[i]] - frac[order[i + 1]]
            } else {
                frac[order[i]]
            };
            out.push((self.index[&self.key_of_chart(&v)], w));
        }
        out.retain(|&(_, w)| w > 0.0);
        out
    }

    /// Neighbour of node `i` shifted by `s` steps along `e_a − e_b`, if it exists.
    pub fn shifted(&self, i: usize, a: usize, b: usize, s: i64) -> Option<usize> {
        let mut comp = self.nodes[i].clone();
        let na = comp[a] as i64 + s;
        let nb = comp[b] as i64 - s;
        if na < 0 || nb < 0 {
            return None;
        }
        comp[a] = na as u32;
        comp[b] = nb as u32;
        self.index_of(&comp)
    }
}

/// `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> usize {
    assert!(k <= n);
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}
