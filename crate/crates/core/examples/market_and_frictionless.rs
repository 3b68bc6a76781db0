//! Two sanity limits: the market portfolio keeps V at one, and zero impact
//! reproduces the frictionless holdings.

use spt_impact::accounting::{frictionless_baseline, master_decomposition};
use spt_impact::generating::GeneratorSpec;
use spt_impact::relarb::desk_experiment;
use spt_impact::simulator::simulate_path;

fn main() -> spt_impact::Result<()> {
    let mut exp = desk_experiment();
    let fp = exp.fundamental_path(11)?;

    let frictionless = exp.model.frictionless();
    let path = simulate_path(&frictionless, &exp.sim, &fp)?;
    let (v_f, q_f) = frictionless_baseline(&fp.truncated(path.len()), &frictionless)?;
    let mut gap: f64 = 0.0;
    for (q, f) in path.q.iter().zip(&q_f) {
        for (a, b) in q.iter().zip(f) {
            gap = gap.max((a - b).abs() / b.abs());
        }
    }
    println!("zero impact: max relative holding gap to closed form {gap:.3e}, V_F(T) = {:.5}", v_f.last().unwrap());

    exp.model.generator = GeneratorSpec::market();
    let path = simulate_path(&exp.model, &exp.sim, &fp)?;
    let ws = master_decomposition(&path, &exp.model)?;
    let dev = ws.v_integral.iter().fold(0.0f64, |a, v| a.max((v - 1.0).abs()));
    println!("market portfolio with impact: max |V - 1| = {dev:.2e}");
    Ok(())
}
