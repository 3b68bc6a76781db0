//! One desk-scale path: observed vs fundamental prices and the wealth
//! decomposition into G and Gamma.

use spt_impact::accounting::master_decomposition;
use spt_impact::relarb::desk_experiment;
use spt_impact::simulator::simulate_path;

fn main() -> spt_impact::Result<()> {
    let exp = desk_experiment();
    let fp = exp.fundamental_path(3)?;
    let path = simulate_path(&exp.model, &exp.sim, &fp)?;
    let ws = master_decomposition(&path, &exp.model)?;
    println!("status {}  steps {}", path.status.as_str(), path.len() - 1);
    println!("{:>7} {:>9} {:>9} {:>12} {:>9} {:>9} {:>10}", "t", "P_1", "S_1", "Q_1", "V", "G", "Gamma");
    for k in path.emitted_indices(200) {
        println!(
            "{:>7.1} {:>9.4} {:>9.4} {:>12.0} {:>9.5} {:>9.5} {:>10.6}",
            path.grid[k], path.p[k][0], path.s[k][0], path.q[k][0], ws.v_master[k], ws.g_term[k], ws.gamma[k]
        );
    }
    let worst = ws.residual.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    println!("max |V_integral - V_master| = {worst:.3e}");
    let parts = &ws.gamma_parts;
    println!(
        "Gamma at end: time {:.5} hessian {:.5} impact {:.5}",
        parts.time_derivative.last().unwrap(),
        parts.hessian_qv.last().unwrap(),
        parts.impact_qv.last().unwrap()
    );
    Ok(())
}
