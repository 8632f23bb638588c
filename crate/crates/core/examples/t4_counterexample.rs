//! Verifies the 3x3 curve carrying a T4 configuration and runs the laminate
//! depth sweep.
//!
//! cargo run --release --example t4_counterexample -- [a] [eps] [grid] [seed] [depth]

use std::time::Instant;

use elliptic_rigidity::io::to_csv;
use elliptic_rigidity::t4::laminate::{non_compactness_demo, DemoOptions};
use elliptic_rigidity::t4::verify;

fn main() -> elliptic_rigidity::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let num = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let (a, eps, grid, seed, depth) = (num(0, 1.0), num(1, 0.02), num(2, 2048.0) as usize, num(3, 7.0) as u64, num(4, 6.0) as usize);

    let start = Instant::now();
    let (pi3, report) = verify(a, eps, seed, 2 * grid, grid)?;
    eprintln!("verification took {:.2?}", start.elapsed());
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));

    let start = Instant::now();
    let demo = non_compactness_demo(&pi3, depth, DemoOptions::default())?;
    eprintln!("laminate sweep took {:.2?}", start.elapsed());
    print!("{}", to_csv(&demo.rows)?);
    for d in &demo.details {
        eprintln!("depth {}: C-region area {:.4e}, int |Du|^2 = {:.4}", d.depth, d.c_area, d.grad_sq_integral);
    }
    eprintln!("m_floor {:.3}, eps decreasing: {}, m bounded below: {}", demo.m_floor, demo.eps_decreasing(0.15), demo.m_bounded_below());
    Ok(())
}
