//! Wealth, relative wealth and the master-formula decomposition.
//!
//! Stochastic integrals are left-point sums and covariations are realized
//! increment products, so every series here is a pathwise functional of a
//! recorded path.

use crate::error::{Error, Result};
use crate::fundamental::FundamentalPath;
use crate::generating::{GeneratorJet, GeneratorSpec};
use crate::simulator::{Model, PathRecord};

/// Cumulative pieces of `Gamma`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GammaParts {
    /// `-int d_t G dt`.
    pub time_derivative: Vec<f64>,
    /// `-1/2 sum int d_ij G d[mu_i, mu_j]`.
    pub hessian_qv: Vec<f64>,
    /// `1/2 sum int (w N_i^2 / (Pbar0 Pbar)) d_x h_i K_i d[F_i]`.
    pub impact_qv: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WealthSeries {
    pub grid: Vec<f64>,
    /// Dollar wealth.
    pub w: Vec<f64>,
    /// Relative wealth from its own integral equation.
    pub v_integral: Vec<f64>,
    /// Dollar wealth over market wealth.
    pub v_ratio: Vec<f64>,
    /// `1 + G(t, mu(t)) - G(0, mu(0)) + Gamma(t)`.
    pub v_master: Vec<f64>,
    /// `G(t, mu(t))`.
    pub g_term: Vec<f64>,
    pub gamma: Vec<f64>,
    pub gamma_parts: GammaParts,
    /// `v_integral - v_master`.
    pub residual: Vec<f64>,
}

/// `W(t) = w + int Q dP + 1/2 sum [I_i, Q_i]`.
pub fn wealth_series(path: &PathRecord, w: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(path.len());
    if path.is_empty() {
        return out;
    }
    out.push(w);
    let mut i_prev = path.impact(0);
    for k in 0..path.len() - 1 {
        let i_next = path.impact(k + 1);
        let mut dw = 0.0;
        for i in 0..path.dim() {
            let dq = path.q[k + 1][i] - path.q[k][i];
            dw += path.q[k][i] * (path.p[k + 1][i] - path.p[k][i]) + 0.5 * (i_next[i] - i_prev[i]) * dq;
        }
        out.push(out[k] + dw);
        i_prev = i_next;
    }
    out
}

/// Relative wealth from `dV = sum (Q_i Pbar0/(w N_i)) dmu_i + 1/2 sum (Pbar0/(w Pbar)) d[I_i, Q_i]`.
pub fn relative_wealth_series(path: &PathRecord, w: f64, n: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(path.len());
    if path.is_empty() {
        return out;
    }
    let cap0 = crate::total_cap(&path.p[0], n);
    out.push(1.0);
    let mut i_prev = path.impact(0);
    for k in 0..path.len() - 1 {
        let cap = crate::total_cap(&path.p[k], n);
        let i_next = path.impact(k + 1);
        let mut dv = 0.0;
        for i in 0..path.dim() {
            let dmu = path.mu[k + 1][i] - path.mu[k][i];
            let dq = path.q[k + 1][i] - path.q[k][i];
            dv += path.q[k][i] * cap0 / (w * n[i]) * dmu + 0.5 * cap0 / (w * cap) * (i_next[i] - i_prev[i]) * dq;
        }
        out.push(out[k] + dv);
        i_prev = i_next;
    }
    out
}

/// `W / W^M` with market wealth `w Pbar(t)/Pbar(0)`.
pub fn relative_wealth_ratio(path: &PathRecord, w: f64, n: &[f64]) -> Vec<f64> {
    if path.is_empty() {
        return Vec::new();
    }
    let cap0 = crate::total_cap(&path.p[0], n);
    wealth_series(path, w)
        .iter()
        .zip(&path.p)
        .map(|(x, p)| x / (w * crate::total_cap(p, n) / cap0))
        .collect()
}

fn f_values(jet: &GeneratorJet, mu: &[f64]) -> Vec<f64> {
    let mixed: f64 = jet.grad.iter().zip(mu).map(|(g, m)| g * m).sum();
    jet.grad.iter().map(|g| g + jet.g - mixed).collect()
}

/// `G` values and cumulative `Gamma` parts along a weight path.
///
/// `sens[k][i]` is `d_x h_i K_i` at the left point of step `k`; `None`
/// means no impact and the impact term is identically zero.
fn gamma_decomposition(
    gen: &GeneratorSpec,
    grid: &[f64],
    mu: &[Vec<f64>],
    caps: &[f64],
    sens: Option<&[Vec<f64>]>,
    w: f64,
    n: &[f64],
) -> Result<(Vec<GeneratorJet>, GammaParts)> {
    let jets: Vec<GeneratorJet> = grid.iter().zip(mu).map(|(&t, m)| gen.jet(t, m)).collect::<Result<_>>()?;
    let len = grid.len();
    let mut parts = GammaParts {
        time_derivative: Vec::with_capacity(len),
        hessian_qv: Vec::with_capacity(len),
        impact_qv: Vec::with_capacity(len),
    };
    if len == 0 {
        return Ok((jets, parts));
    }
    parts.time_derivative.push(0.0);
    parts.hessian_qv.push(0.0);
    parts.impact_qv.push(0.0);
    let d = n.len();
    let cap0 = caps[0];
    let mut f_prev = f_values(&jets[0], &mu[0]);
    for k in 0..len - 1 {
        let jet = &jets[k];
        let dt = grid[k + 1] - grid[k];
        let dmu: Vec<f64> = (0..d).map(|i| mu[k + 1][i] - mu[k][i]).collect();
        let mut hq = 0.0;
        for i in 0..d {
            for j in 0..d {
                hq += jet.hess[(i, j)] * dmu[i] * dmu[j];
            }
        }
        let f_next = f_values(&jets[k + 1], &mu[k + 1]);
        let mut iq = 0.0;
        if let Some(s) = sens {
            for i in 0..d {
                let df = f_next[i] - f_prev[i];
                iq += w * n[i] * n[i] / (cap0 * caps[k]) * s[k][i] * df * df;
            }
        }
        parts.time_derivative.push(parts.time_derivative[k] - jet.dt_g * dt);
        parts.hessian_qv.push(parts.hessian_qv[k] - 0.5 * hq);
        parts.impact_qv.push(parts.impact_qv[k] + 0.5 * iq);
        f_prev = f_next;
    }
    Ok((jets, parts))
}

fn gamma_total(parts: &GammaParts) -> Vec<f64> {
    parts
        .time_derivative
        .iter()
        .zip(&parts.hessian_qv)
        .zip(&parts.impact_qv)
        .map(|((a, b), c)| a + b + c)
        .collect()
}

/// Wealth series of a simulated path together with the master-formula
/// decomposition of its relative wealth.
pub fn master_decomposition(path: &PathRecord, model: &Model) -> Result<WealthSeries> {
    let n = &model.n;
    if path.dim() != n.len() && !path.is_empty() {
        return Err(Error::Dimension(format!("path has {} assets, model has {}", path.dim(), n.len())));
    }
    let caps: Vec<f64> = path.p.iter().map(|p| crate::total_cap(p, n)).collect();
    let sens: Vec<Vec<f64>> = path
        .grid
        .iter()
        .zip(&path.j)
        .map(|(&t, j)| {
            model
                .impacts
                .iter()
                .zip(j)
                .map(|(s, &x)| s.shape.eval(t, x).dx * s.kernel.diag())
                .collect()
        })
        .collect();
    let (jets, parts) = gamma_decomposition(&model.generator, &path.grid, &path.mu, &caps, Some(&sens), model.w, n)?;
    let gamma = gamma_total(&parts);
    let g_term: Vec<f64> = jets.iter().map(|j| j.g).collect();
    let v_master: Vec<f64> = g_term.iter().zip(&gamma).map(|(g, c)| 1.0 + g - g_term[0] + c).collect();
    let v_integral = relative_wealth_series(path, model.w, n);
    let residual = v_integral.iter().zip(&v_master).map(|(a, b)| a - b).collect();
    Ok(WealthSeries {
        grid: path.grid.clone(),
        w: wealth_series(path, model.w),
        v_ratio: relative_wealth_ratio(path, model.w, n),
        v_integral,
        v_master,
        g_term,
        gamma,
        gamma_parts: parts,
        residual,
    })
}

/// Frictionless relative wealth and holdings, evaluated explicitly on the
/// weights of the fundamental path.
///
/// Returns `(V_F, Q_F)` with `Q_F[k][i]`.
pub fn frictionless_baseline(path: &FundamentalPath, model: &Model) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = &model.n;
    if path.dim() != n.len() {
        return Err(Error::Dimension(format!("path has {} assets, model has {}", path.dim(), n.len())));
    }
    if path.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let mu: Vec<Vec<f64>> = (0..path.len()).map(|k| path.weights(k, n)).collect();
    let caps: Vec<f64> = path.s.iter().map(|s| crate::total_cap(s, n)).collect();
    let (jets, parts) = gamma_decomposition(&model.generator, &path.grid, &mu, &caps, None, model.w, n)?;
    let gamma = gamma_total(&parts);
    let g0 = jets[0].g;
    let v: Vec<f64> = jets.iter().zip(&gamma).map(|(j, c)| 1.0 + j.g - g0 + c).collect();
    let q = jets
        .iter()
        .zip(&mu)
        .zip(&v)
        .map(|((jet, m), &vk)| {
            let mixed: f64 = jet.grad.iter().zip(m).map(|(g, x)| g * x).sum();
            (0..n.len())
                .map(|i| model.w * n[i] / caps[0] * (vk + jet.grad[i] - mixed))
                .collect()
        })
        .collect();
    Ok((v, q))
}

/// Discrete running-maximum test: `Q(t_k) = max_{j <= k} Q(t_j)` everywhere.
pub fn check_positive_price_condition(q: &[f64]) -> bool {
    let mut running = f64::NEG_INFINITY;
    q.iter().all(|&x| {
        running = running.max(x);
        x == running
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fundamental::{build_fundamental_path, FundamentalParams};
    use crate::generating::{Family, Ramp};
    use crate::impact::{ImpactSpec, KernelSpec, ShapeSpec};
    use crate::simulator::{simulate_path, PathStatus, SimConfig};

    fn model(gen: GeneratorSpec, lambda: f64) -> Model {
        Model {
            n: vec![1e9, 1e9],
            w: 1e8,
            impacts: vec![ImpactSpec::new(KernelSpec::Exponential { beta: 2.0 }, ShapeSpec::linear(lambda)); 2],
            generator: gen,
        }
    }

    fn quad(nu: f64) -> GeneratorSpec {
        GeneratorSpec::new(Family::Quadratic)
            .with_nu(nu)
            .with_ramp(Ramp::new(10.0, 60.0, 80.0).unwrap())
    }

    fn run(m: &Model, seed: u64, horizon: f64) -> PathRecord {
        let fp = build_fundamental_path(&FundamentalParams::desk_scale(), seed, (horizon / 0.5) as usize, 0.5).unwrap();
        let sim = SimConfig {
            horizon,
            ..SimConfig::default()
        };
        simulate_path(m, &sim, &fp).unwrap()
    }

    fn hand_record(p: Vec<Vec<f64>>, q: Vec<Vec<f64>>) -> PathRecord {
        let n = vec![1.0; p[0].len()];
        PathRecord {
            grid: (0..p.len()).map(|k| k as f64).collect(),
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
    fn single_share_telescopes() {
        let r = hand_record(vec![vec![10.0], vec![11.5], vec![9.0], vec![12.25]], vec![vec![1.0]; 4]);
        let w = wealth_series(&r, 100.0);
        assert_eq!(w[3], 100.0 + 12.25 - 10.0);
    }

    #[test]
    fn market_portfolio_series() {
        let m = model(GeneratorSpec::market(), 6.08e-8);
        let r = run(&m, 3, 100.0);
        let ws = master_decomposition(&r, &m).unwrap();
        let cap0 = crate::total_cap(&r.p[0], &m.n);
        for k in 0..r.len() {
            let wm = m.w * crate::total_cap(&r.p[k], &m.n) / cap0;
            assert!((ws.w[k] / wm - 1.0).abs() < 1e-10);
            assert!((ws.v_integral[k] - 1.0).abs() < 1e-12);
            assert_eq!(ws.g_term[k], 1.0);
            assert_eq!(ws.gamma[k], 0.0);
            assert!(ws.residual[k].abs() < 1e-12);
        }
    }

    #[test]
    fn invariants_at_origin_and_part_sums() {
        let m = model(quad(5.0), 6.08e-8);
        let ws = master_decomposition(&run(&m, 4, 100.0), &m).unwrap();
        assert_eq!(ws.v_integral[0], 1.0);
        assert_eq!(ws.gamma[0], 0.0);
        let p = &ws.gamma_parts;
        for k in 0..ws.grid.len() {
            let s = p.time_derivative[k] + p.hessian_qv[k] + p.impact_qv[k];
            assert_eq!(s, ws.gamma[k]);
        }
    }

    #[test]
    fn concave_time_homogeneous_parts_nondecreasing() {
        let m = model(GeneratorSpec::new(Family::Entropy).with_nu(1.0), 6.08e-8);
        let ws = master_decomposition(&run(&m, 6, 100.0), &m).unwrap();
        for w in ws.gamma_parts.hessian_qv.windows(2).chain(ws.gamma_parts.impact_qv.windows(2)) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn wealth_approximates_mark_to_market() {
        let m = model(quad(5.0), 6.08e-8);
        let mut gaps = Vec::new();
        for dt in [0.5, 0.25] {
            let fp = build_fundamental_path(&FundamentalParams::desk_scale(), 12, (60.0 / 0.125) as usize, 0.125).unwrap();
            let sim = SimConfig {
                dt,
                horizon: 60.0,
                ..SimConfig::default()
            };
            let r = simulate_path(&m, &sim, &fp).unwrap();
            let ws = wealth_series(&r, m.w);
            let gap = (0..r.len())
                .map(|k| {
                    let mtm: f64 = r.q[k].iter().zip(&r.p[k]).map(|(q, p)| q * p).sum();
                    (ws[k] - mtm).abs() / m.w
                })
                .fold(0.0, f64::max);
            gaps.push(gap);
        }
        assert!(gaps[0] < 1e-2, "{gaps:?}");
        assert!(gaps[1] < gaps[0], "{gaps:?}");
    }

    #[test]
    fn ratio_and_integral_forms_agree() {
        let m = model(quad(5.0), 6.08e-8);
        let r = run(&m, 13, 100.0);
        let vi = relative_wealth_series(&r, m.w, &m.n);
        let vr = relative_wealth_ratio(&r, m.w, &m.n);
        let gap = vi.iter().zip(&vr).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-3, "{gap}");
    }

    #[test]
    fn frictionless_market_is_flat() {
        let fp = build_fundamental_path(&FundamentalParams::desk_scale(), 2, 100, 0.5).unwrap();
        let (v, _) = frictionless_baseline(&fp, &model(GeneratorSpec::market(), 0.0)).unwrap();
        assert!(v.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn frictionless_outperformance_scales_with_nu() {
        let fp = build_fundamental_path(&FundamentalParams::desk_scale(), 2, 200, 0.5).unwrap();
        let (v1, _) = frictionless_baseline(&fp, &model(quad(5.0), 0.0)).unwrap();
        let (v2, _) = frictionless_baseline(&fp, &model(quad(10.0), 0.0)).unwrap();
        let k = 160;
        approx::assert_relative_eq!(v2[k] - 1.0, 2.0 * (v1[k] - 1.0), max_relative = 1e-10);
    }

    #[test]
    fn zero_shape_run_reproduces_frictionless_bitwise() {
        let m = model(quad(5.0), 0.0);
        let fp = build_fundamental_path(&FundamentalParams::desk_scale(), 21, 200, 0.5).unwrap();
        let sim = SimConfig {
            horizon: 100.0,
            ..SimConfig::default()
        };
        let r = simulate_path(&m, &sim, &fp).unwrap();
        let ws = master_decomposition(&r, &m).unwrap();
        let (vf, _) = frictionless_baseline(&fp, &m).unwrap();
        assert_eq!(ws.v_master, vf);
    }

    #[test]
    fn running_max_examples() {
        assert!(check_positive_price_condition(&[0.0, 1.0, 2.0, 5.0]));
        assert!(!check_positive_price_condition(&[0.0, 1.0, 0.5]));
        assert!(check_positive_price_condition(&[3.0; 4]));
        assert!(check_positive_price_condition(&[]));
    }
}
