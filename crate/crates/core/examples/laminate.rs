//! Builds a simple stripe laminate between `T_1` and `C_2`, checks its phase
//! fractions and boundary values, and prints the staircase measure.
//!
//! cargo run --release --example laminate -- [stripes] [steps]

use elliptic_rigidity::t4::laminate::{laminate_map, staircase_laminate};
use elliptic_rigidity::t4::T4Config;

fn main() -> elliptic_rigidity::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let stripes: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(16);
    let steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let cfg = T4Config::new(1.0)?;
    let w = 1.0 - 1.0 / cfg.mu;

    let lam = laminate_map(cfg.t[0], cfg.c[1], w, stripes)?;
    let (fa, fb) = lam.phase_fractions(512);
    println!("stripes {stripes}: fraction on T1 {fa:.4} (target {w:.4}), on C2 {fb:.4}, bands {:.4}", 1.0 - fa - fb);
    let mut drift = 0.0f64;
    for i in 0..=256 {
        let s = i as f64 / 256.0;
        for x in [[s, 0.0], [s, 1.0], [0.0, s], [1.0, s]] {
            let want = cfg.c[0].apply([x[0], x[1], 0.0]);
            let got = lam.value(x);
            drift = drift.max((0..3).map(|r| (got[r] - want[r]).abs()).fold(0.0, f64::max));
        }
    }
    println!("max boundary deviation from C1 x: {drift:.2e}");

    let nu = staircase_laminate(&cfg, steps);
    println!("staircase measure after {steps} splits:");
    for (m, wt) in &nu.atoms {
        println!("  weight {wt:.6e}  first column ({}, {}, {})", m[(0, 0)], m[(1, 0)], m[(2, 0)]);
    }
    println!("residual mass {:.6e} = (1/3)^{steps} = {:.6e}", nu.atoms.last().map_or(0.0, |a| a.1), 3f64.powi(-(steps as i32)));
    println!("barycenter drift {:.2e}", (nu.barycenter() - cfg.c[0]).max_abs());
    Ok(())
}
