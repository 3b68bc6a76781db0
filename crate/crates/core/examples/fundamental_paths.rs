//! Simulates the two-asset Jacobi/Bessel fundamental market and prints a
//! few weight and capitalization quantiles.

use spt_impact::fundamental::{build_fundamental_path, FundamentalParams};
use spt_impact::market_weights;

fn main() -> spt_impact::Result<()> {
    let params = FundamentalParams::desk_scale();
    let (feller_mu, feller_cap) = params.feller_margins();
    println!("Feller margins: weight {feller_mu:.3}, log-cap {feller_cap:.3}");

    let dt = 0.5;
    let steps = 2 * 1323;
    let path = build_fundamental_path(&params, 7, steps, dt)?;
    let mut mu1: Vec<f64> = (0..path.len()).map(|k| market_weights(&path.s[k], &params.n)[0]).collect();
    mu1.sort_by(f64::total_cmp);
    let q = |p: f64| mu1[((mu1.len() - 1) as f64 * p) as usize];
    println!("mu_1 quantiles: min {:.4} p05 {:.4} median {:.4} p95 {:.4} max {:.4}", q(0.0), q(0.05), q(0.5), q(0.95), q(1.0));

    let last = path.s.last().unwrap();
    println!("S(0) = {:?}", path.s[0]);
    println!("S(T) = {last:?}");
    println!("sigma^2 of log caps per day: {:.3e}", params.sigma2_s());
    Ok(())
}
