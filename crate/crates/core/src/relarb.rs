//! Relative-arbitrage constants, ensemble diagnostics and the desk-scale
//! two-asset experiment.

use serde::Serialize;
use statrs::statistics::{Data, OrderStatistics};

use crate::error::{Error, Result};
use crate::fundamental::FundamentalParams;
use crate::generating::{Family, GeneratorSpec, Ramp};
use crate::impact::{calibrate_linear_lambda, ImpactSpec, KernelSpec, ShapeSpec};
use crate::linalg::{min_symmetric_eigenvalue, Matrix};
use crate::simulator::{run_monte_carlo, EnsembleSummary, Experiment, Model, PathRecord, SimConfig};

/// Constants of the frictionless market: diversity `delta_S`,
/// nondegeneracy `eps_S`, volatility bound `sigma2_S`, capitalization floor
/// `kappa_S` and weight floor `ell_S`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FrictionlessConstants {
    pub delta_s: f64,
    pub eps_s: f64,
    pub sigma2_s: f64,
    pub kappa_s: f64,
    pub ell_s: f64,
}

impl FrictionlessConstants {
    /// Constants of the two-asset Jacobi model. With two assets diversity
    /// implies the weight floor `ell_S = delta_S`.
    pub fn from_params(p: &FundamentalParams) -> Self {
        Self {
            delta_s: p.delta_s,
            eps_s: p.eps_s,
            sigma2_s: p.sigma2_s(),
            kappa_s: p.kappa_s,
            ell_s: p.delta_s,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.delta_s > 0.0 && self.delta_s < 1.0) {
            return Err(Error::Validation(format!("delta_S={} must lie in (0, 1)", self.delta_s)));
        }
        if !(self.eps_s > 0.0 && self.sigma2_s > 0.0 && self.kappa_s > 0.0 && self.ell_s > 0.0) {
            return Err(Error::Validation("eps_S, sigma2_S, kappa_S and ell_S must be positive".into()));
        }
        if d as f64 * self.ell_s > 1.0 {
            return Err(Error::Validation(format!("d * ell_S = {} exceeds one", d as f64 * self.ell_s)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArbitrageConstants {
    pub delta_p: f64,
    pub eps_p: f64,
    pub kappa_p: f64,
    pub t_star: f64,
    pub nu0: f64,
    pub nu1: Vec<f64>,
    pub nu2: Vec<f64>,
    pub c: f64,
    pub nu_bar: f64,
}

/// `2 d / (eps delta^2)`.
///
/// For the entropy generator the frictionless bound is `2 log d / (delta eps)`
/// instead.
pub fn horizon_tstar(d: usize, eps: f64, delta: f64) -> f64 {
    2.0 * d as f64 / (eps * delta * delta)
}

fn max_of(xs: impl Iterator<Item = f64>) -> f64 {
    xs.fold(f64::NEG_INFINITY, f64::max)
}

/// Observed-market constants and the trading-speed bound `nu_bar`.
///
/// `cap0` is `Pbar(0)`; shapes must be separable with bounded slope and
/// time factor, and the initial impact must vanish.
pub fn derived_constants(
    fc: &FrictionlessConstants,
    n: &[f64],
    impacts: &[ImpactSpec],
    cap0: f64,
    w: f64,
) -> Result<ArbitrageConstants> {
    let d = n.len();
    fc.validate(d)?;
    if impacts.len() != d {
        return Err(Error::Dimension(format!("{} impact specs for {d} assets", impacts.len())));
    }
    for s in impacts {
        s.validate()?;
        if !s.j0.is_zero() {
            return Err(Error::Validation("the constants assume zero initial impact".into()));
        }
    }
    let slope: Vec<f64> = impacts.iter().map(|s| s.shape.hat_slope_sup()).collect();
    let phi: Vec<f64> = impacts.iter().map(|s| s.shape.phi_sup()).collect();
    if slope.iter().chain(&phi).any(|x| !x.is_finite()) {
        return Err(Error::UnboundedShape(
            "nu_bar needs a bounded shape slope and time factor".into(),
        ));
    }
    let kbar: Vec<f64> = impacts.iter().map(|s| s.kernel.sup()).collect();

    let (ds, es, ks, ls) = (fc.delta_s, fc.eps_s, fc.kappa_s, fc.ell_s);
    let df = d as i32;
    let n_inf = max_of(n.iter().copied());
    let n_inv_inf = max_of(n.iter().map(|x| 1.0 / x));
    let n_1: f64 = n.iter().sum();
    let n_inv_1: f64 = n.iter().map(|x| 1.0 / x).sum();
    let n_2sq: f64 = n.iter().map(|x| x * x).sum();
    let n_sq_inf = n_inf * n_inf;
    let slope_inf = max_of(slope.iter().copied());
    let phi_inf = max_of(phi.iter().copied());
    let k_inf = max_of(kbar.iter().copied());

    let delta_p = ds / 4.0;
    let eps_p = es * ls * ls * (1.0 - ds / 2.0).powi(df) / (4.0 * n_inf * n_inv_inf * (1.0 - ds).powi(df));
    let t_star = horizon_tstar(d, eps_p, delta_p);
    let kappa_p = ks * (1.0 - ds) / (1.0 - ds / 2.0);

    let nu0 = cap0 * ks * (1.0 - ds) / (3.0 * w * n_inf * n_1 * slope_inf * k_inf * (1.0 - ds / 4.0));
    let nu1: Vec<f64> = (0..d)
        .map(|i| {
            let arg = -ks * ls / (2.0 * phi[i] * n[i]) * ds / (1.0 - ds / 2.0);
            -2.0 * cap0 / (5.0 * w * n[i] * kbar[i]) * impacts[i].shape.hat_inverse(arg)
        })
        .collect();
    let m01 = nu1.iter().fold(nu0, |m, &x| m.min(x));
    let c = (0.5 + m01 * w * n_sq_inf * phi_inf * slope_inf * k_inf / (2.0 * cap0 * kappa_p))
        * 4.0
        * (d * d) as f64
        * fc.sigma2_s
        * n_inv_1
        * n_inv_1
        * n_2sq
        * ks
        * ks
        / (kappa_p * kappa_p);
    let nu2: Vec<f64> = (0..d)
        .map(|i| {
            let arg = ds * (1.0 - ds) * ks / (4.0 * n[i] * (1.0 - ds / 2.0));
            cap0 / (w * n[i] * kbar[i]) / (2.0 + c * t_star) * impacts[i].shape.hat_inverse(arg)
        })
        .collect();
    let nu_bar = nu2.iter().fold(m01, |m, &x| m.min(x));
    Ok(ArbitrageConstants {
        delta_p,
        eps_p,
        kappa_p,
        t_star,
        nu0,
        nu1,
        nu2,
        c,
        nu_bar,
    })
}

/// Realized diversity and nondegeneracy over a time window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiversityReport {
    /// Largest market weight seen.
    pub max_weight: f64,
    /// Smallest eigenvalue of the sliding-window realized covariance rate
    /// of `log P`.
    pub min_eigenvalue: f64,
}

/// Steps in the sliding covariance window.
pub const COVARIANCE_WINDOW: usize = 20;

pub fn measure_diversity_nondegeneracy(paths: &[PathRecord], ta: f64, tb: f64) -> Result<DiversityReport> {
    if paths.is_empty() {
        return Err(Error::Validation("the ensemble is empty".into()));
    }
    let mut max_weight = f64::NEG_INFINITY;
    let mut min_eig = f64::INFINITY;
    for r in paths {
        let inside: Vec<usize> = (0..r.len()).filter(|&k| r.grid[k] >= ta && r.grid[k] <= tb).collect();
        for &k in &inside {
            max_weight = max_weight.max(max_of(r.mu[k].iter().copied()));
        }
        let d = r.dim();
        let mut rates: Vec<Matrix> = Vec::new();
        for w in inside.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b != a + 1 {
                continue;
            }
            let dt = r.grid[b] - r.grid[a];
            let dl: Vec<f64> = (0..d).map(|i| (r.p[b][i] / r.p[a][i]).ln()).collect();
            rates.push(Matrix::from_fn(d, d, |i, j| dl[i] * dl[j] / dt));
        }
        for win in rates.windows(COVARIANCE_WINDOW) {
            let mut avg = Matrix::zeros(d, d);
            for m in win {
                avg += m;
            }
            avg /= COVARIANCE_WINDOW as f64;
            min_eig = min_eig.min(min_symmetric_eigenvalue(&avg));
        }
    }
    Ok(DiversityReport {
        max_weight,
        min_eigenvalue: min_eig,
    })
}

/// Summary statistics of daily dollar volume.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DvStats {
    pub samples: usize,
    pub median: f64,
    pub p05: f64,
    pub p95: f64,
    pub p01: f64,
    pub p99: f64,
}

impl DvStats {
    pub fn from_samples(xs: &[f64]) -> Self {
        let mut data = Data::new(xs.to_vec());
        Self {
            samples: xs.len(),
            median: data.quantile(0.5),
            p05: data.quantile(0.05),
            p95: data.quantile(0.95),
            p01: data.quantile(0.01),
            p99: data.quantile(0.99),
        }
    }

    /// Samples inside `[p01, p99]`, for display.
    pub fn truncate(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().copied().filter(|&x| x >= self.p01 && x <= self.p99).collect()
    }
}

const HALF_DAY: f64 = 0.5;

/// Gross dollar volume per day over the days whose two trading periods
/// lie inside `[t0, t1]`.
///
/// Day `i` consists of the trades ending at `t_{2i}` and `t_{2i+1}`, each
/// executed at the midpoint of its period's endpoint prices.
pub fn daily_volume(path: &PathRecord, t0: f64, t1: f64, t: f64) -> Result<Vec<f64>> {
    if !(t0 < t1 && t1 <= t) {
        return Err(Error::RampOrdering { t0, t1, t });
    }
    let g = &path.grid;
    for (k, &x) in g.iter().enumerate() {
        if (x - k as f64 * HALF_DAY).abs() > 1e-9 * (1.0 + x.abs()) {
            return Err(Error::Stride(format!(
                "daily volume needs two trades per day starting at 0; grid point {k} is t={x}"
            )));
        }
    }
    let d = path.dim();
    let tol = 1e-9;
    let mut out = Vec::new();
    let mut i = 1;
    while 2 * i + 1 < path.len() {
        if g[2 * i - 1] >= t0 - tol && g[2 * i + 1] <= t1 + tol {
            let mut dv = 0.0;
            for l in [2 * i, 2 * i + 1] {
                for a in 0..d {
                    let dq = (path.q[l][a] - path.q[l - 1][a]).abs();
                    dv += dq * 0.5 * (path.p[l - 1][a] + path.p[l][a]);
                }
            }
            out.push(dv);
        }
        i += 1;
    }
    Ok(out)
}

/// Daily volume samples pooled over an ensemble, with statistics.
pub fn daily_volume_histogram(paths: &[PathRecord], t0: f64, t1: f64, t: f64) -> Result<(Vec<f64>, Option<DvStats>)> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(daily_volume(p, t0, t1, t)?);
    }
    let stats = (!all.is_empty()).then(|| DvStats::from_samples(&all));
    Ok((all, stats))
}

/// Impact calibration inputs of the desk-scale experiment: the linear
/// coefficient moves a day-long TWAP of `adv_frac * adv` shares by
/// `target_bp` basis points of the price `s0`.
pub const DESK_S0: f64 = 15.0;
pub const DESK_TARGET_BP: f64 = 11.5;
pub const DESK_ADV_FRAC: f64 = 0.01;
pub const DESK_ADV: f64 = 1e8;
pub const DESK_BETA: f64 = 2.0;
pub const DESK_W: f64 = 1e8;
pub const DESK_NU: f64 = 5.0;
pub const DESK_T0: f64 = 21.0;
pub const DESK_T1: f64 = DESK_T0 + 5.0 * 252.0;
pub const DESK_T: f64 = DESK_T1 + 21.0;

/// The desk-scale two-asset experiment: Jacobi weights, Bessel-type
/// capitalization, linear impact with exponential decay and the ramped
/// quadratic generator.
pub fn desk_experiment() -> Experiment {
    let market = FundamentalParams::desk_scale();
    let lambda = calibrate_linear_lambda(DESK_S0, DESK_TARGET_BP, DESK_ADV_FRAC, DESK_ADV, DESK_BETA)
        .expect("desk calibration inputs are positive");
    let impact = ImpactSpec::new(KernelSpec::Exponential { beta: DESK_BETA }, ShapeSpec::linear(lambda));
    let generator = GeneratorSpec::new(Family::Quadratic)
        .with_nu(DESK_NU)
        .with_ramp(Ramp::new(DESK_T0, DESK_T1, DESK_T).expect("ordered ramp"));
    Experiment {
        model: Model {
            n: market.n.clone(),
            w: DESK_W,
            impacts: vec![impact; market.d],
            generator,
        },
        market,
        sim: SimConfig {
            dt: 0.5,
            horizon: DESK_T + 21.0,
            ..SimConfig::default()
        },
    }
}

/// Differences between an experiment and the desk-scale configuration.
pub fn desk_mismatches(exp: &Experiment) -> Vec<String> {
    let reference = desk_experiment();
    let mut out = Vec::new();
    if exp.market != reference.market {
        out.push("fundamental parameters differ from the desk configuration".to_string());
    }
    if exp.model.n != reference.model.n || exp.model.w != reference.model.w {
        out.push("share counts or wealth differ from the desk configuration".to_string());
    }
    if exp.model.impacts != reference.model.impacts {
        out.push("impact specification differs from the desk configuration".to_string());
    }
    let (g, r) = (&exp.model.generator, &reference.model.generator);
    if !matches!(g.family, Family::Quadratic) || g.nu != r.nu || g.ramp != r.ramp {
        out.push("generator differs from the desk configuration".to_string());
    }
    if exp.sim.dt != reference.sim.dt || exp.sim.horizon != reference.sim.horizon {
        out.push("time step or horizon differs from the desk configuration".to_string());
    }
    out
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub summary: EnsembleSummary,
    pub constants: Option<ArbitrageConstants>,
    pub warnings: Vec<String>,
}

/// Runs the ensemble behind the four figure panels. Deviations from the
/// desk configuration are reported as warnings, not errors.
pub fn reproduce_experiment(
    exp: &Experiment,
    fc: &FrictionlessConstants,
    n_paths: usize,
    base_seed: u64,
    threads: usize,
    keep: usize,
) -> Result<ExperimentReport> {
    let warnings = desk_mismatches(exp);
    let cap0 = crate::total_cap(&exp.market.initial_prices(), &exp.model.n);
    let constants = derived_constants(fc, &exp.model.n, &exp.model.impacts, cap0, exp.model.w).ok();
    let summary = run_monte_carlo(exp, n_paths, base_seed, threads, keep)?;
    Ok(ExperimentReport {
        summary,
        constants,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::PathStatus;
    use approx::assert_relative_eq;

    fn desk_fc() -> FrictionlessConstants {
        FrictionlessConstants {
            delta_s: 0.1,
            eps_s: 4e-4,
            sigma2_s: 1e-3,
            kappa_s: 1e7,
            ell_s: 0.1,
        }
    }

    #[test]
    fn horizon_examples() {
        assert_relative_eq!(horizon_tstar(2, 4e-4, 0.1), 1e6, max_relative = 1e-12);
        assert_relative_eq!(horizon_tstar(4, 4e-4, 0.1), 2.0 * horizon_tstar(2, 4e-4, 0.1));
        assert_relative_eq!(horizon_tstar(2, 4e-4, 0.2), horizon_tstar(2, 4e-4, 0.1) / 4.0, max_relative = 1e-12);
    }

    #[test]
    fn desk_constants() {
        let exp = desk_experiment();
        let c = derived_constants(&desk_fc(), &exp.model.n, &exp.model.impacts, 3e10, 1e8).unwrap();
        let eps_p = 4e-4 * 0.01 * 0.9025 / (4.0 * 0.81);
        assert_relative_eq!(c.eps_p, eps_p, max_relative = 1e-12);
        assert_relative_eq!(c.eps_p, 1.1142e-6, max_relative = 1e-4);
        assert_eq!(c.delta_p, 0.025);
        assert_relative_eq!(c.t_star, 5.74e9, max_relative = 1e-3);
        assert!(c.kappa_p < 1e7);
        assert!(c.nu_bar <= c.nu0);
    }

    #[test]
    fn zero_impact_limit_is_nu0() {
        let n = vec![1e9, 1e9];
        let imp = vec![ImpactSpec::new(KernelSpec::Exponential { beta: 2.0 }, ShapeSpec::asinh(1e-30)); 2];
        let c = derived_constants(&desk_fc(), &n, &imp, 3e10, 1e8).unwrap();
        assert!(c.nu1.iter().chain(&c.nu2).all(|x| x.is_infinite()));
        assert_eq!(c.nu_bar, c.nu0);
    }

    #[test]
    fn unbounded_shape_rejected() {
        let n = vec![1e9, 1e9];
        let imp = vec![
            ImpactSpec::new(KernelSpec::Exponential { beta: 2.0 }, ShapeSpec::regularized_power(1e-8, 1.5, 1.0));
            2
        ];
        assert!(matches!(derived_constants(&desk_fc(), &n, &imp, 3e10, 1e8), Err(Error::UnboundedShape(_))));
    }

    fn record(p: Vec<Vec<f64>>, q: Vec<Vec<f64>>) -> PathRecord {
        let n = vec![1.0; p[0].len()];
        PathRecord {
            grid: (0..p.len()).map(|k| k as f64 * 0.5).collect(),
            mu: p.iter().map(|x| crate::market_weights(x, &n)).collect(),
            j: vec![vec![0.0; p[0].len()]; p.len()],
            s: p.clone(),
            p,
            q,
            status: PathStatus::Completed,
            stop_time: None,
            ap_eigen: Vec::new(),
        }
    }

    #[test]
    fn single_trade_midpoint() {
        let p = vec![vec![10.0], vec![10.0], vec![12.0], vec![12.0]];
        let q = vec![vec![0.0], vec![0.0], vec![1000.0], vec![1000.0]];
        let dv = daily_volume(&record(p, q), 0.0, 2.0, 2.0).unwrap();
        assert_eq!(dv, vec![11000.0]);
    }

    #[test]
    fn no_trading_no_volume() {
        let p: Vec<Vec<f64>> = (0..20).map(|k| vec![10.0 + k as f64, 5.0]).collect();
        let dv = daily_volume(&record(p, vec![vec![3.0, 4.0]; 20]), 0.0, 9.0, 9.0).unwrap();
        assert_eq!(dv.len(), 8);
        assert!(dv.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn window_excludes_boundary_days() {
        let p: Vec<Vec<f64>> = vec![vec![1.0]; 201];
        let dv = daily_volume(&record(p, vec![vec![0.0]; 201]), 21.0, 81.0, 90.0).unwrap();
        assert_eq!(dv.len(), 81 - 22);
    }

    #[test]
    fn wrong_stride_rejected() {
        let mut r = record(vec![vec![1.0]; 10], vec![vec![0.0]; 10]);
        r.grid = (0..10).map(|k| k as f64 * 0.25).collect();
        assert!(matches!(daily_volume(&r, 0.0, 2.0, 2.0), Err(Error::Stride(_))));
    }

    #[test]
    fn constant_path_is_degenerate() {
        let r = record(vec![vec![2.0, 3.0]; 40], vec![vec![0.0, 0.0]; 40]);
        let rep = measure_diversity_nondegeneracy(&[r], 0.0, 100.0).unwrap();
        assert_eq!(rep.min_eigenvalue, 0.0);
        assert_eq!(rep.max_weight, 0.6);
    }

    #[test]
    fn dv_stats_quantiles() {
        let xs: Vec<f64> = (1..=101).map(f64::from).collect();
        let s = DvStats::from_samples(&xs);
        assert_eq!(s.median, 51.0);
        assert!(s.p05 < s.median && s.median < s.p95);
        assert!(s.truncate(&xs).len() < xs.len());
    }
}
