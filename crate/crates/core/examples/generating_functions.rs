//! Values, gradients and the ramp profile of the generating families.

use spt_impact::generating::{target_holdings_initial, AdditiveG, Family, GeneratorSpec, Ramp};

fn main() -> spt_impact::Result<()> {
    let mu = [0.6, 0.4];
    let families = [
        ("market", Family::ConstantOne),
        ("quadratic", Family::Quadratic),
        ("entropy", Family::Entropy),
        ("diversity p=0.5", Family::DiversityP { p: 0.5 }),
        ("geometric mean", Family::GeometricMean { weights: vec![0.5, 0.5] }),
        ("additive power", Family::AdditivelySymmetric(AdditiveG::Power { p: 0.3 })),
    ];
    for (name, fam) in families {
        let jet = GeneratorSpec::new(fam).jet(0.0, &mu)?;
        println!(
            "{name:>16}: G = {:.5}  grad = [{:.4}, {:.4}]  H_00 = {:.4}",
            jet.g, jet.grad[0], jet.grad[1], jet.hess[(0, 0)]
        );
    }

    let ramp = Ramp::new(21.0, 1281.0, 1302.0)?;
    for t in [0.0, 10.0, 21.0, 31.5, 42.0, 700.0, 1291.5, 1302.0] {
        let (psi, dpsi) = ramp.psi(t);
        println!("psi({t:>6}) = {psi:.4}  psi' = {dpsi:+.4}");
    }

    let spec = GeneratorSpec::new(Family::Quadratic).with_nu(5.0).with_ramp(ramp);
    let q0 = target_holdings_initial(&spec, 1e8, &[1e8, 1e8], &[16.5, 13.5])?;
    println!("initial holdings {q0:?} (market portfolio)");
    Ok(())
}
