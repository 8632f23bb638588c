//! Solves the two monotone equations on a square with harmonic or anisotropic
//! boundary data and compares against the exact solutions.
//!
//! cargo run --release --example solve_pde -- [n]

use std::sync::Arc;

use elliptic_rigidity::curve::{CurveK, CurveSpec};
use elliptic_rigidity::field::{CertifyOptions, ExtendMode, FieldG, HExtension, Which};
use elliptic_rigidity::matrix::Mat2;
use elliptic_rigidity::pde::{residual_div_cof, solve_div_g, solve_pair, Grid2D, GridMap, LinearField, SolveOptions};

fn main() -> elliptic_rigidity::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(65);
    let grid = Grid2D::new(1.0, n)?;
    let opts = SolveOptions::default();

    // so2: both fields are the identity, so z^2 is the exact solution
    let k = CurveK::build(&CurveSpec::so2(), 1024)?;
    let h = Arc::new(HExtension::extend(&k, ExtendMode::ClosedForm, 2.0, 64, 0.0)?);
    let g1 = FieldG::new(h.clone(), Which::G1, CertifyOptions::default())?;
    let g2 = FieldG::new(h, Which::G2, CertifyOptions::default())?;
    let exact = GridMap::from_fn(grid, |x, y| [x * x - y * y, 2.0 * x * y]);
    let mut start = exact.clone();
    for i in 0..grid.len() {
        if !grid.is_boundary(i) {
            start.u1[i] = 0.0;
            start.u2[i] = 0.0;
        }
    }
    let (u, reps) = solve_pair(&g1, &g2, &start, opts)?;
    let err = u.u1.iter().zip(&exact.u1).chain(u.u2.iter().zip(&exact.u2)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("so2, z^2 boundary: iterations {:?}, max error {err:.2e}", reps.map(|r| r.iterations));
    println!("  max interior |div cof Du| {:.2e}", residual_div_cof(&u).max_interior());

    // anisotropic linear field: 3x^2 - y^2 solves div(diag(1/3, 1) Du) = 0
    let field = LinearField(Mat2::diag(1.0 / 3.0, 1.0));
    let exact: Vec<f64> = (0..grid.len()).map(|i| grid.node(i)).map(|[x, y]| 3.0 * x * x - y * y).collect();
    let boundary: Vec<f64> = (0..grid.len()).map(|i| if grid.is_boundary(i) { exact[i] } else { 0.0 }).collect();
    let (w, rep) = solve_div_g(&field, &grid, &boundary, opts)?;
    let err = w.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!(
        "diag(1/3, 1), 3x^2 - y^2 boundary: {} iterations, max error {err:.2e}, contraction {:.4} (predicted {:.4})",
        rep.iterations, rep.contraction_observed, rep.predicted_contraction
    );
    Ok(())
}
