//! Amplitude sweep of the rigidity ratio `q*/eps` for the builtin curves.
//!
//! cargo run --release --example rigidity_sweep -- [generator] [n]

use elliptic_rigidity::curve::{CurveK, CurveSpec};
use elliptic_rigidity::io::to_csv;
use elliptic_rigidity::pde::Grid2D;
use elliptic_rigidity::rigidity::{amplitude_sweep, Generator, TestMapSpec};

fn main() -> elliptic_rigidity::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let generator: Generator = args.first().map_or("affine_plus_bump", String::as_str).parse()?;
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(129);
    let grid = Grid2D::new(1.0, n)?;
    let amps = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
    let mut rows = Vec::new();
    for spec in [CurveSpec::so2(), CurveSpec::kc(0.5), CurveSpec::winding2(0.2)] {
        let k = CurveK::build(&spec, 2048)?;
        let results = amplitude_sweep(&k, &TestMapSpec::new(generator, 0.0), &amps, grid, None)?;
        let ratios: Vec<f64> = results.iter().map(|(r, _)| r.ratio).collect();
        let spread = ratios.iter().cloned().fold(0.0, f64::max) / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let c_hat = results.iter().map(|(_, r)| r.c_hat).fold(0.0, f64::max);
        eprintln!("{spec}: ratio spread {spread:.3}, fitted recursion constant {c_hat:.3}");
        rows.extend(results.into_iter().map(|(r, _)| r));
    }
    print!("{}", to_csv(&rows)?);
    Ok(())
}
