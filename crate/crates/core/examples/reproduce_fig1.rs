//! Desk-scale Monte Carlo: mean relative wealth against the frictionless
//! benchmark, and the daily volume distribution.

use spt_impact::relarb::{desk_experiment, reproduce_experiment, FrictionlessConstants};

fn main() -> spt_impact::Result<()> {
    let paths: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100);
    let exp = desk_experiment();
    let fc = FrictionlessConstants::from_params(&exp.market);
    let report = reproduce_experiment(&exp, &fc, paths, 1, 0, 1)?;
    let s = &report.summary.scalars;
    println!("{} paths, {} completed", s.n_paths, s.completed);
    if let (Some(v), Some(f), Some(g)) = (s.mean_v_impact_at_t, s.mean_v_frictionless_at_t, s.nominal_gap_at_t) {
        println!("mean V(T): impact {v:.5}, frictionless {f:.5}, gap ${:.2}M", g / 1e6);
    }
    if let Some(dv) = &s.dv {
        println!("daily volume: median ${:.2}M, p05 ${:.2}M, p95 ${:.2}M", dv.median / 1e6, dv.p05 / 1e6, dv.p95 / 1e6);
    }
    let series = &report.summary.series;
    for k in (0..series.grid.len()).step_by(300) {
        println!("t {:>7.1}  V_impact {:.5}  V_frictionless {:.5}", series.grid[k], series.v_impact_mean[k], series.v_frictionless_mean[k]);
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
