//! Runs the curve hypothesis checks on the builtin families (or a CSV file)
//! and prints one line per curve.
//!
//! cargo run --release --example analyze_curve -- [curve ...]

use elliptic_rigidity::curve::{CurveK, CurveSpec};

fn main() -> elliptic_rigidity::Result<()> {
    let mut specs: Vec<String> = std::env::args().skip(1).collect();
    if specs.is_empty() {
        specs = ["builtin:so2", "builtin:kc:c=0.5", "builtin:winding2:c=0.2", "builtin:kc:c=1.0"].map(String::from).to_vec();
    }
    println!("{:<26} {:>9} {:>9} {:>9} {:>10} {:>8}  status", "curve", "C*", "k", "k_bound", "rank-one", "reach");
    for s in &specs {
        let k = CurveK::build(&CurveSpec::parse(s)?, 2048)?;
        let r = k.analyze();
        let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        let status = if r.passed() { "ok".to_string() } else { r.failure.clone().unwrap_or_else(|| "failed".into()) };
        println!(
            "{:<26} {:>9} {:>9} {:>9} {:>10.3e} {:>8.4}  {}",
            r.curve,
            show(r.c_star),
            show(r.k_measured),
            show(r.k_bound),
            r.min_rankone_ratio,
            r.reach_estimate,
            status
        );
    }
    Ok(())
}
