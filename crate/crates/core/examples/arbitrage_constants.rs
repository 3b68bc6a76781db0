//! Relative-arbitrage constants for the desk configuration and how the
//! admissible impact scale moves with the investor's size.

use spt_impact::relarb::{derived_constants, desk_experiment, horizon_tstar, FrictionlessConstants};
use spt_impact::total_cap;

fn main() -> spt_impact::Result<()> {
    let exp = desk_experiment();
    let fc = FrictionlessConstants::from_params(&exp.market);
    let cap0 = total_cap(&exp.market.initial_prices(), &exp.model.n);
    println!("frictionless horizon T* = {:.3e} days", horizon_tstar(2, fc.eps_s, fc.delta_s));
    for w in [1e6, 1e7, 1e8, 1e9] {
        let c = derived_constants(&fc, &exp.model.n, &exp.model.impacts, cap0, w)?;
        println!("w = {w:.0e}: T* = {:.3e}, nu_bar = {:.3e}, C = {:.3e}", c.t_star, c.nu_bar, c.c);
    }
    Ok(())
}
