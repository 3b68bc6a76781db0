//! Kernels, shapes and the TWAP calibration of a linear impact coefficient.

use spt_impact::impact::{
    b_j_eval, calibrate_linear_lambda, step_impact_state, ImpactSpec, KernelSpec, ShapeSpec,
};

fn main() -> spt_impact::Result<()> {
    let lambda = calibrate_linear_lambda(15.0, 11.5, 0.01, 1e8, 2.0)?;
    println!("calibrated lambda = {lambda:.4e} $/share");

    let kernels = [
        ("exponential", KernelSpec::Exponential { beta: 2.0 }),
        ("shifted power", KernelSpec::ShiftedPower { epsilon: 0.1, beta: 0.5 }),
        ("permanent", KernelSpec::Permanent { c: 1.0 }),
        ("permanent + exp", KernelSpec::PermanentPlusExponential { c: 0.2, beta: 2.0 }),
    ];
    println!("{:>16} {:>10} {:>10} {:>10}", "kernel", "K(0)", "K(0.5)", "K(5)");
    for (name, k) in &kernels {
        println!("{name:>16} {:>10.4} {:>10.4} {:>10.4}", k.eval_lag(0.0).k, k.eval_lag(0.5).k, k.eval_lag(5.0).k);
    }

    // One day of TWAP buying at 1% of ADV, then nothing.
    let dt = 0.01;
    let rate = 0.01 * 1e8;
    // Concave shapes are scaled to agree with the linear one near 1e5 shares.
    let shapes = [
        ("linear", ShapeSpec::linear(lambda)),
        ("asinh", ShapeSpec::asinh(lambda * 1e5 / 1e5_f64.asinh())),
        ("sqrt beyond knee", ShapeSpec::regularized_power(lambda, 0.5, 1e5)),
    ];
    for (name, shape) in shapes {
        let spec = ImpactSpec::new(KernelSpec::Exponential { beta: 2.0 }, shape);
        let (mut grid, mut q) = (vec![0.0], vec![0.0]);
        let mut j = 0.0;
        let mut peak: f64 = 0.0;
        for k in 0..300 {
            let b = b_j_eval(&spec, &grid, &q, k)?;
            let t = (k + 1) as f64 * dt;
            let dq = if t <= 1.0 { rate * dt } else { 0.0 };
            j = step_impact_state(&spec, j, dq, dt, b);
            grid.push(t);
            q.push(q[k] + dq);
            peak = peak.max(shape.eval(t, j).h);
        }
        println!("{name:>16}: peak impact {peak:.4} $, after 3 days {:.4} $", shape.eval(3.0, j).h);
    }
    Ok(())
}
