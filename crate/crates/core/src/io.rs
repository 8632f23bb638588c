//! Text formats: `gridmap v1`, `fieldgrid v1` and the sweep CSV files.
//!
//! Both grid formats are a header line, the extent, the node count per side,
//! then one line of two floats per node in row-major order (x fastest).

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pde::{Grid2D, GridMap};

const GRIDMAP_HEADER: &str = "gridmap v1";
const FIELDGRID_HEADER: &str = "fieldgrid v1";

fn write_pairs(header: &str, grid: &Grid2D, a: &[f64], b: &[f64]) -> String {
    let mut out = String::with_capacity(40 * a.len());
    let _ = writeln!(out, "{header}\n{}\n{}", grid.extent, grid.n);
    for (x, y) in a.iter().zip(b) {
        let _ = writeln!(out, "{x} {y}");
    }
    out
}

fn read_pairs(header: &str, text: &str) -> Result<(Grid2D, Vec<f64>, Vec<f64>)> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let got = lines.next().unwrap_or_default();
    if got != header {
        return Err(Error::Parse(format!("expected header `{header}`, got `{got}`")));
    }
    let extent: f64 = lines
        .next()
        .and_then(|l| l.parse().ok())
        .ok_or_else(|| Error::Parse("missing or invalid extent".into()))?;
    let n: usize = lines
        .next()
        .and_then(|l| l.parse().ok())
        .ok_or_else(|| Error::Parse("missing or invalid node count".into()))?;
    let grid = Grid2D::new(extent, n).map_err(|e| Error::Parse(e.to_string()))?;
    let (mut a, mut b) = (Vec::with_capacity(grid.len()), Vec::with_capacity(grid.len()));
    for (i, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("node {i}: {e}")))?;
        if vals.len() != 2 {
            return Err(Error::Parse(format!("node {i}: expected two values")));
        }
        a.push(vals[0]);
        b.push(vals[1]);
    }
    if a.len() != grid.len() {
        return Err(Error::Parse(format!("expected {} nodes, got {}", grid.len(), a.len())));
    }
    Ok((grid, a, b))
}

pub fn gridmap_to_string(u: &GridMap) -> String {
    write_pairs(GRIDMAP_HEADER, &u.grid, &u.u1, &u.u2)
}

pub fn parse_gridmap(text: &str) -> Result<GridMap> {
    let (grid, u1, u2) = read_pairs(GRIDMAP_HEADER, text)?;
    Ok(GridMap { grid, u1, u2 })
}

pub fn read_gridmap(path: impl AsRef<Path>) -> Result<GridMap> {
    parse_gridmap(&std::fs::read_to_string(path)?)
}

pub fn write_gridmap(path: impl AsRef<Path>, u: &GridMap) -> Result<()> {
    Ok(std::fs::write(path, gridmap_to_string(u))?)
}

/// A vector field tabulated at grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub grid: Grid2D,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl FieldGrid {
    pub fn tabulate(grid: Grid2D, f: impl Fn([f64; 2]) -> Result<[f64; 2]>) -> Result<FieldGrid> {
        let (mut gx, mut gy) = (Vec::with_capacity(grid.len()), Vec::with_capacity(grid.len()));
        for i in 0..grid.len() {
            let g = f(grid.node(i))?;
            gx.push(g[0]);
            gy.push(g[1]);
        }
        Ok(FieldGrid { grid, gx, gy })
    }

    pub fn to_text(&self) -> String {
        write_pairs(FIELDGRID_HEADER, &self.grid, &self.gx, &self.gy)
    }

    pub fn parse(text: &str) -> Result<FieldGrid> {
        let (grid, gx, gy) = read_pairs(FIELDGRID_HEADER, text)?;
        Ok(FieldGrid { grid, gx, gy })
    }
}

/// Serializes rows to CSV with a header taken from the field names.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rigidity::ExperimentRow;

    #[test]
    fn gridmap_round_trip() {
        let g = Grid2D::new(1.5, 17).unwrap();
        let u = GridMap::from_fn(g, |x, y| [x.sin() / 3.0, y * 1e-17]);
        let back = parse_gridmap(&gridmap_to_string(&u)).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn fieldgrid_round_trip() {
        let g = Grid2D::new(2.0, 17).unwrap();
        let f = FieldGrid::tabulate(g, |a| Ok([a[0] / 3.0, a[1] * 0.1])).unwrap();
        assert!(f.to_text().starts_with("fieldgrid v1\n2\n17\n"));
        assert_eq!(FieldGrid::parse(&f.to_text()).unwrap(), f);
    }

    #[test]
    fn malformed_grid_files() {
        assert!(parse_gridmap("fieldgrid v1\n1\n17\n").is_err());
        assert!(parse_gridmap("gridmap v1\n1\n17\n0 0\n").is_err());
        assert!(parse_gridmap("gridmap v1\nx\n17\n").is_err());
        assert!(parse_gridmap("gridmap v1\n1\n3\n").is_err());
    }

    #[test]
    fn experiment_csv_header() {
        let row = ExperimentRow {
            curve: "builtin:so2".into(),
            generator: "affine".into(),
            eps_amp: 0.1,
            eps: 1.0,
            q_star: 0.25,
            ratio: 0.25,
            s0: 0.1,
            j0: 1,
        };
        let csv = to_csv(&[row]).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "curve,generator,eps_amp,eps,q_star,ratio,s0,j0");
        assert_eq!(csv.lines().count(), 2);
    }
}
