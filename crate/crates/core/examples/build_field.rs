//! Extends `H` for a curve, certifies both monotone fields and checks that
//! the curve rows lie on their graphs.
//!
//! cargo run --release --example build_field -- [curve] [grid_n]

use std::sync::Arc;
use std::time::Instant;

use elliptic_rigidity::curve::{CurveK, CurveSpec};
use elliptic_rigidity::field::{graph_residual, CertifyOptions, ExtendMode, FieldG, HExtension, Which};

fn main() -> elliptic_rigidity::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let spec = CurveSpec::parse(args.first().map_or("builtin:winding2:c=0.2", String::as_str))?;
    let grid_n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(512);
    let k = CurveK::build(&spec, 4096)?;
    let mode = if k.family().and_then(|(f, _)| f.closed_form_h()).is_some() { ExtendMode::ClosedForm } else { ExtendMode::McshaneGrid };

    let start = Instant::now();
    let h = Arc::new(HExtension::extend(&k, mode, 2.0 * k.radius(), grid_n, 0.0)?);
    println!("curve        {spec}");
    println!("mode         {mode:?}");
    println!("k_measured   {:.6}", h.k_measured);
    println!("k_ext        {:.6}", h.k_ext);
    println!("agreement    {:.3e}", h.agreement);
    println!("extend time  {:.2?}", start.elapsed());

    let opts = CertifyOptions::default();
    let g1 = FieldG::new(h.clone(), Which::G1, opts)?;
    let g2 = FieldG::new(h, Which::G2, opts)?;
    for (name, g) in [("G1", &g1), ("G2", &g2)] {
        let (lb, ub) = g.theoretical_bounds();
        println!("{name}           lambda {:.6} (bound {lb:.6})  Lambda {:.6} (bound {ub:.6})", g.lambda, g.big_lambda);
    }
    println!("graph resid  {:.3e}", graph_residual(&g1, &g2, &k)?);
    Ok(())
}
