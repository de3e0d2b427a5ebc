//! CSV and JSON files: value grids with sidecars, dual surfaces, curves, Z paths.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SimplexGrid;
use crate::model::GameSpec;
use crate::pdmp::{Characteristics, ZPath};
use crate::solver::{SolveMeta, ValueGrid};

/// 17 significant digits, enough to read back the same double.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, line: usize, col: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::input(format!("line {line}, column {col}: not a number: {s:?}")))
}

/// Column names for a simplex coordinate: the weight of state 0 when the
/// simplex is at most one-dimensional, all weights otherwise.
fn coord_columns(name: &str, dim: usize) -> Vec<String> {
    if dim <= 2 {
        vec![name.to_string()]
    } else {
        (0..dim).map(|k| format!("{name}{k}")).collect()
    }
}

fn coord_values(x: &[f64]) -> Vec<f64> {
    if x.len() <= 2 {
        vec![x[0]]
    } else {
        x.to_vec()
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    iterations: usize,
    residual: f64,
    delta: f64,
    n_p: usize,
    n_q: usize,
    game: serde_json::Value,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn grid_to_csv(grid: &ValueGrid) -> String {
    let mut cols = coord_columns("p", grid.p_grid.dim());
    cols.extend(coord_columns("q", grid.q_grid.dim()));
    cols.push("value".into());
    let mut out = cols.join(",");
    out.push('\n');
    for i in 0..grid.p_grid.len() {
        let p = coord_values(&grid.p_grid.point(i));
        for j in 0..grid.nq() {
            let mut row: Vec<String> = p.iter().map(|v| fmt_f64(*v)).collect();
            row.extend(coord_values(&grid.q_grid.point(j)).iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(grid.get(i, j)));
            out.push_str(&row.join(","));
            out.push('\n');
        }
    }
    out
}

pub fn grid_sidecar(grid: &ValueGrid) -> String {
    let side = Sidecar {
        iterations: grid.meta.iterations,
        residual: grid.meta.residual,
        delta: grid.meta.delta,
        n_p: grid.p_grid.resolution(),
        n_q: grid.q_grid.resolution(),
        game: serde_json::from_str(&grid.spec.to_json()).expect("spec JSON parses"),
    };
    serde_json::to_string_pretty(&side).expect("sidecar serializes")
}

/// Rebuilds a grid from its CSV text and sidecar JSON. Node coordinates in
/// the CSV must match the lattice named by the sidecar.
pub fn grid_from_csv(csv: &str, sidecar: &str) -> Result<ValueGrid> {
    let side: Sidecar = serde_json::from_str(sidecar).map_err(|e| Error::input(format!("sidecar: {e}")))?;
    let spec = GameSpec::from_json(&side.game.to_string())?;
    let p_grid = SimplexGrid::new(spec.k_size(), side.n_p)?;
    let q_grid = SimplexGrid::new(spec.l_size(), side.n_q)?;
    let mut cols = coord_columns("p", p_grid.dim());
    cols.extend(coord_columns("q", q_grid.dim()));
    cols.push("value".into());
    let mut lines = csv.lines();
    let header = lines.next().ok_or_else(|| Error::input("empty CSV"))?;
    if header.trim() != cols.join(",") {
        return Err(Error::input(format!(
            "CSV header: expected {:?}, got {header:?}",
            cols.join(",")
        )));
    }
    let nq = q_grid.len();
    let total = p_grid.len() * nq;
    let mut values = Vec::with_capacity(total);
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = n + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::input(format!("line {line_no}: expected {} fields", cols.len())));
        }
        let idx = values.len();
        if idx >= total {
            return Err(Error::input(format!(
                "line {line_no}: more rows than grid nodes ({total})"
            )));
        }
        let mut expected = coord_values(&p_grid.point(idx / nq));
        expected.extend(coord_values(&q_grid.point(idx % nq)));
        for (k, e) in expected.iter().enumerate() {
            let got = parse_f64(fields[k], line_no, &cols[k])?;
            if (got - e).abs() > 1e-12 {
                return Err(Error::input(format!(
                    "line {line_no}, column {}: node {got} expected {e}",
                    cols[k]
                )));
            }
        }
        values.push(parse_f64(fields[cols.len() - 1], line_no, "value")?);
    }
    if values.len() != total {
        return Err(Error::input(format!(
            "CSV has {} rows, grid has {total} nodes",
            values.len()
        )));
    }
    let meta = SolveMeta {
        iterations: side.iterations,
        residual: side.residual,
        delta: side.delta,
    };
    Ok(ValueGrid {
        p_grid,
        q_grid,
        values,
        spec,
        meta,
    })
}

/// Writes `path` and its JSON sidecar.
pub fn write_grid(grid: &ValueGrid, path: &Path) -> Result<()> {
    write_text(path, &grid_to_csv(grid))?;
    write_text(&sidecar_path(path), &grid_sidecar(grid))
}

pub fn read_grid(path: &Path) -> Result<ValueGrid> {
    grid_from_csv(&read_text(path)?, &read_text(&sidecar_path(path))?)
}

/// CSV with the given header and numeric rows.
pub fn table_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// `p,y,value,zone` rows; the zone column is left empty when `None`.
pub fn dual_csv(rows: &[(f64, f64, f64, Option<&str>)]) -> String {
    let mut out = String::from("p,y,value,zone\n");
    for (p, y, v, zone) in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(*p),
            fmt_f64(*y),
            fmt_f64(*v),
            zone.unwrap_or("")
        ));
    }
    out
}

/// Samples a Z path at `times`: `t,p_0..,y_0..,jumped`.
pub fn zpath_csv<C: Characteristics + ?Sized>(ch: &C, path: &ZPath, times: &[f64]) -> String {
    let (k, ly) = (ch.k_size(), ch.y_size());
    let mut cols = vec!["t".to_string()];
    cols.extend((0..k).map(|i| format!("p_{i}")));
    cols.extend((0..ly).map(|i| format!("y_{i}")));
    cols.push("jumped".into());
    let mut out = cols.join(",");
    out.push('\n');
    for &t in times {
        let z = path.state_at(ch, t);
        let mut row = vec![fmt_f64(t)];
        row.extend(z.iter().map(|v| fmt_f64(*v)));
        row.push(if t >= path.mu { "1".into() } else { "0".into() });
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::*;
    use crate::model::{GeneratorMatrix, SimplexPoint};
    use nalgebra::DMatrix;

    #[test]
    fn grid_round_trip_is_bit_exact() {
        let spec = Example1Params::new(1.0).unwrap().spec(0.5, 0.5).unwrap();
        let mut g = ValueGrid::from_fn(&spec, 13, 7, |p, q| e1_value(p[0], q[0]) + 1e-17 * p[0]).unwrap();
        g.meta = SolveMeta {
            iterations: 5,
            residual: 1.0 / 3.0,
            delta: 0.1,
        };
        let back = grid_from_csv(&grid_to_csv(&g), &grid_sidecar(&g)).unwrap();
        assert!(back
            .values
            .iter()
            .zip(&g.values)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back.meta, g.meta);
        assert_eq!(back.spec, g.spec);
    }

    #[test]
    fn three_state_grid_uses_weight_columns() {
        let spec = GameSpec::new(
            GeneratorMatrix::zero(3),
            GeneratorMatrix::zero(1),
            1.0,
            DMatrix::from_element(3, 1, 1.0),
            DMatrix::from_element(3, 1, 0.0),
            SimplexPoint::uniform(3),
            SimplexPoint::uniform(1),
        )
        .unwrap();
        let g = ValueGrid::from_fn(&spec, 4, 1, |p, _| p[1] - p[2]).unwrap();
        let csv = grid_to_csv(&g);
        assert!(csv.starts_with("p0,p1,p2,q,value\n"));
        let back = grid_from_csv(&csv, &grid_sidecar(&g)).unwrap();
        assert_eq!(back.values, g.values);
    }

    #[test]
    fn malformed_csv_names_the_problem() {
        let spec = Example1Params::new(1.0).unwrap().spec(0.5, 0.5).unwrap();
        let g = ValueGrid::from_fn(&spec, 2, 2, |_, _| 0.0).unwrap();
        let side = grid_sidecar(&g);
        let csv = grid_to_csv(&g).replacen("0.0000000000000000e0\n", "zero\n", 1);
        let e = grid_from_csv(&csv, &side).unwrap_err().to_string();
        assert!(e.contains("value"), "{e}");
        let short: String = grid_to_csv(&g).lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(grid_from_csv(&short, &side).is_err());
    }

    #[test]
    fn zpath_rows() {
        let ch = e2_characteristics(&Example2Params::reference()).unwrap();
        let path = ZPath {
            z0: vec![0.2, 0.8],
            mu: 0.5,
            z_mu: None,
            post: Some(vec![1.0, 0.0]),
            horizon: 1.0,
        };
        let csv = zpath_csv(&ch, &path, &[0.0, 1.0]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,p_0,p_1,jumped");
        assert!(lines[1].ends_with(",0") && lines[2].ends_with(",1"));
    }
}
