//! Euler-Maruyama evolution of the coupled `(P, Q, J)` system and the
//! Monte Carlo harness around it.

use rayon::prelude::*;
use serde::Serialize;

use crate::accounting::{self, WealthSeries};
use crate::coefficients::{assemble_coefficients, eigen_bounds, CoeffContext};
use crate::error::{Error, Result};
use crate::fundamental::{build_fundamental_path, FundamentalParams, FundamentalPath};
use crate::generating::{target_holdings_initial, GeneratorSpec};
use crate::impact::{impact_from_state, step_impact_state_exact, BjTracker, ImpactSpec};
use crate::linalg::{Matrix, Tensor3, Vector};
use crate::relarb;

/// How the covariation increments `d[S_j, S_k]` are supplied.
#[derive(Clone, Debug, PartialEq)]
pub enum QvMode {
    /// `dS_j dS_k` from the path itself.
    Realized,
    /// The model covariance rate times `dt`.
    Analytic(FundamentalParams),
}

/// Update rule for the impact state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JScheme {
    /// `J + K(t,t) dQ + b^J dt` for every kernel.
    Euler,
    /// `exp(-beta dt) J + dQ` for pure exponential kernels, Euler otherwise.
    ExactDecay,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub mu_floor: f64,
    pub cap_floor: f64,
    pub cap_ceiling: f64,
    pub record_stride: usize,
    pub qv: QvMode,
    pub j_scheme: JScheme,
    /// Record the smallest eigenvalue of `A^P` at every step.
    pub track_eigen: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.5,
            horizon: 1323.0,
            mu_floor: 1e-6,
            cap_floor: 1.0,
            cap_ceiling: 1e18,
            record_stride: 1,
            qv: QvMode::Realized,
            j_scheme: JScheme::Euler,
            track_eigen: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!("dt={} must be positive", self.dt)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Validation(format!("horizon={} must be >= 0", self.horizon)));
        }
        if !(self.mu_floor > 0.0 && self.cap_floor > 0.0 && self.cap_ceiling > self.cap_floor) {
            return Err(Error::Validation("thresholds must be positive with cap_floor < cap_ceiling".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::Stride("record_stride must be at least 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// The investor's side of the model: share counts, wealth, impact and
/// generating function.
#[derive(Clone, Debug)]
pub struct Model {
    pub n: Vec<f64>,
    pub w: f64,
    pub impacts: Vec<ImpactSpec>,
    pub generator: GeneratorSpec,
}

impl Model {
    pub fn validate(&self) -> Result<()> {
        let d = self.n.len();
        if self.impacts.len() != d {
            return Err(Error::Dimension(format!("{} impact specs for {d} assets", self.impacts.len())));
        }
        if !(self.w > 0.0) {
            return Err(Error::Validation(format!("wealth w={} must be positive", self.w)));
        }
        for s in &self.impacts {
            s.validate()?;
        }
        self.generator.validate(d)
    }

    /// The same model with every shape function set to zero.
    pub fn frictionless(&self) -> Self {
        let mut m = self.clone();
        for s in &mut m.impacts {
            s.shape = crate::impact::ShapeSpec::zero();
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathStatus {
    Completed,
    StoppedMuFloor,
    StoppedCap,
    SolverDegenerate,
}

impl PathStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            PathStatus::Completed => "completed",
            PathStatus::StoppedMuFloor => "stopped_mu_floor",
            PathStatus::StoppedCap => "stopped_cap",
            PathStatus::SolverDegenerate => "solver_degenerate",
        }
    }
}

/// A simulated path at full time resolution.
#[derive(Clone, Debug)]
pub struct PathRecord {
    pub grid: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub j: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
    pub status: PathStatus,
    pub stop_time: Option<f64>,
    /// `(min real part, max |imag part|)` of the eigenvalues of `A^P` per
    /// step, when tracked.
    pub ap_eigen: Vec<(f64, f64)>,
}

impl PathRecord {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.p.first().map_or(0, Vec::len)
    }

    /// Observed impact `I = P - S`.
    pub fn impact(&self, k: usize) -> Vec<f64> {
        self.p[k].iter().zip(&self.s[k]).map(|(p, s)| p - s).collect()
    }

    /// Indices kept when emitting with `stride`: every `stride`-th point plus
    /// the last one.
    pub fn emitted_indices(&self, stride: usize) -> Vec<usize> {
        emitted_indices(self.len(), stride)
    }
}

pub fn emitted_indices(len: usize, stride: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..len).step_by(stride.max(1)).collect();
    if *idx.last().unwrap() != len - 1 {
        idx.push(len - 1);
    }
    idx
}

/// First threshold breached by a candidate state, if any.
pub fn detect_stop(p: &[f64], n: &[f64], sim: &SimConfig) -> Option<PathStatus> {
    if p.iter().any(|x| !x.is_finite()) {
        return Some(PathStatus::SolverDegenerate);
    }
    let cap = crate::total_cap(p, n);
    let min_mu = p.iter().zip(n).map(|(x, m)| m * x / cap).fold(f64::INFINITY, f64::min);
    if !(cap > 0.0) || !(min_mu >= sim.mu_floor) {
        return Some(PathStatus::StoppedMuFloor);
    }
    if cap < sim.cap_floor || cap > sim.cap_ceiling {
        return Some(PathStatus::StoppedCap);
    }
    None
}

fn contract(g: &Tensor3, qv: &Matrix) -> Vector {
    let d = g.dim();
    Vector::from_fn(d, |i, _| {
        let mut acc = 0.0;
        for j in 0..d {
            for k in 0..d {
                acc += g.get(i, j, k) * qv[(j, k)];
            }
        }
        acc
    })
}

/// Aligns a fundamental path to the simulation step, subsampling when the
/// path is finer.
fn align(fundamental: &FundamentalPath, dt: f64) -> Result<FundamentalPath> {
    if fundamental.len() < 2 {
        return Ok(fundamental.clone());
    }
    let h = fundamental.uniform_dt().ok_or_else(|| {
        Error::Validation("the fundamental grid must be uniform to drive a fixed-step simulation".into())
    })?;
    let ratio = dt / h;
    let stride = ratio.round();
    if stride < 1.0 || (ratio - stride).abs() > 1e-9 * ratio {
        return Err(Error::Stride(format!(
            "simulation step {dt} is not a whole multiple of the fundamental step {h}"
        )));
    }
    fundamental.subsample(stride as usize)
}

/// Simulates `(P, Q, J)` along a fundamental path.
///
/// Threshold breaches and degenerate coefficients end the path with a
/// status instead of an error; errors are reserved for inconsistent inputs.
pub fn simulate_path(model: &Model, sim: &SimConfig, fundamental: &FundamentalPath) -> Result<PathRecord> {
    sim.validate()?;
    model.validate()?;
    let d = model.n.len();
    if fundamental.dim() != d {
        return Err(Error::Dimension(format!(
            "fundamental path has {} assets, model has {d}",
            fundamental.dim()
        )));
    }
    let path = align(fundamental, sim.dt)?;
    let steps = sim.steps().min(path.steps());

    let t0 = path.grid[0];
    let j0: Vec<f64> = model.impacts.iter().map(|s| s.j0.value(t0)).collect();
    let i0 = impact_from_state(&model.impacts, t0, &j0);
    let p0: Vec<f64> = path.s[0].iter().zip(&i0).map(|(s, i)| s + i).collect();
    if let Some(st) = detect_stop(&p0, &model.n, sim) {
        return Err(Error::Validation(format!("initial state already breaches a threshold ({})", st.as_str())));
    }
    let cap0 = crate::total_cap(&p0, &model.n);
    let q0 = target_holdings_initial(&model.generator, model.w, &model.n, &p0)?;

    let mut rec = PathRecord {
        grid: vec![t0],
        p: vec![p0.clone()],
        q: vec![q0.clone()],
        j: vec![j0.clone()],
        mu: vec![crate::market_weights(&p0, &model.n)],
        s: vec![path.s[0].clone()],
        status: PathStatus::Completed,
        stop_time: None,
        ap_eigen: Vec::new(),
    };
    let mut trackers: Vec<BjTracker> = model.impacts.iter().map(|s| BjTracker::new(*s)).collect();
    for (tr, &q) in trackers.iter_mut().zip(&q0) {
        tr.push(t0, q);
    }

    let mut dev = Vector::from_iterator(d, i0.iter().copied());
    let mut q = Vector::from_column_slice(&q0);
    let mut j = Vector::from_column_slice(&j0);
    let mut p = p0;
    for k in 0..steps {
        let t = path.grid[k];
        let b_j: Vec<f64> = trackers.iter().map(BjTracker::value).collect();
        let cs = CoeffContext::new(t, &p, j.as_slice(), cap0, model.w, &model.n, &model.generator, &model.impacts)
            .and_then(|ctx| assemble_coefficients(&ctx, &b_j));
        let cs = match cs {
            Ok(cs) => cs,
            Err(Error::Degenerate { .. } | Error::Simplex(_) | Error::Domain(_)) => {
                rec.status = PathStatus::SolverDegenerate;
                rec.stop_time = Some(t);
                break;
            }
            Err(e) => return Err(e),
        };
        if sim.track_eigen {
            match eigen_bounds(&cs.a_p) {
                Ok(b) => rec.ap_eigen.push(b),
                Err(_) => rec.ap_eigen.push((f64::NAN, f64::NAN)),
            }
        }
        let dt = path.grid[k + 1] - t;
        let s_now = &path.s[k];
        let s_next = &path.s[k + 1];
        let ds = Vector::from_fn(d, |i, _| s_next[i] - s_now[i]);
        let qv = match &sim.qv {
            QvMode::Realized => &ds * ds.transpose(),
            QvMode::Analytic(params) => params.covariance_rate(s_now) * dt,
        };
        let bp_minus_i = &cs.beta_p - Matrix::identity(d, d);
        dev += &cs.alpha_p * dt + &bp_minus_i * &ds + contract(&cs.gamma_p, &qv);
        let dq = &cs.alpha_q * dt + &cs.beta_q * &ds + contract(&cs.gamma_q, &qv);
        let j_euler = &j + &cs.alpha_j * dt + &cs.beta_j * &ds + contract(&cs.gamma_j, &qv);
        for i in 0..d {
            let exact = match sim.j_scheme {
                JScheme::ExactDecay => step_impact_state_exact(&model.impacts[i], t, j[i], dq[i], dt),
                JScheme::Euler => None,
            };
            j[i] = exact.unwrap_or(j_euler[i]);
        }
        q += dq;
        let p_next: Vec<f64> = (0..d).map(|i| s_next[i] + dev[i]).collect();
        let finite = q.iter().chain(j.iter()).all(|x| x.is_finite());
        let stop = if finite { detect_stop(&p_next, &model.n, sim) } else { Some(PathStatus::SolverDegenerate) };
        if let Some(st) = stop {
            rec.status = st;
            rec.stop_time = Some(path.grid[k + 1]);
            break;
        }
        let t_next = path.grid[k + 1];
        for (tr, &qi) in trackers.iter_mut().zip(q.iter()) {
            tr.push(t_next, qi);
        }
        rec.grid.push(t_next);
        rec.mu.push(crate::market_weights(&p_next, &model.n));
        rec.p.push(p_next.clone());
        rec.q.push(q.iter().copied().collect());
        rec.j.push(j.iter().copied().collect());
        rec.s.push(s_next.clone());
        p = p_next;
    }
    Ok(rec)
}

/// A full experiment: fundamental model, investor model, discretization.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub market: FundamentalParams,
    pub model: Model,
    pub sim: SimConfig,
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.model.validate()?;
        self.sim.validate()?;
        if self.market.n != self.model.n {
            return Err(Error::Validation("market and model share counts differ".into()));
        }
        Ok(())
    }

    pub fn fundamental_path(&self, seed: u64) -> Result<FundamentalPath> {
        build_fundamental_path(&self.market, seed, self.sim.steps(), self.sim.dt)
    }
}

/// Everything derived from one path of an ensemble.
#[derive(Clone, Debug)]
pub struct PathOutcome {
    pub index: usize,
    pub seed: u64,
    pub record: PathRecord,
    pub wealth: WealthSeries,
    /// Frictionless relative wealth on the same fundamental path.
    pub v_frictionless: Vec<f64>,
    pub q_frictionless: Vec<Vec<f64>>,
    pub dv: Vec<f64>,
}

impl PathOutcome {
    /// Largest change in the reported relative wealth after `t_end`.
    pub fn post_variation(&self, t_end: f64) -> f64 {
        let g = &self.record.grid;
        let v = &self.wealth.v_master;
        match g.iter().position(|&t| t >= t_end - 1e-9) {
            Some(k) => v[k..].iter().map(|x| (x - v[k]).abs()).fold(0.0, f64::max),
            None => 0.0,
        }
    }
}

/// Simulates one path of an experiment with its frictionless twin.
pub fn run_path(exp: &Experiment, index: usize, base_seed: u64) -> Result<PathOutcome> {
    let seed = base_seed.wrapping_add(index as u64);
    let fp = exp.fundamental_path(seed)?;
    let record = simulate_path(&exp.model, &exp.sim, &fp)?;
    let wealth = accounting::master_decomposition(&record, &exp.model)?;
    let (v_frictionless, q_frictionless) =
        accounting::frictionless_baseline(&fp.truncated(record.len()), &exp.model)?;
    let dv = match exp.model.generator.ramp {
        Some(r) if exp.sim.dt == 0.5 => relarb::daily_volume(&record, r.t0, r.t1, r.t).unwrap_or_default(),
        _ => Vec::new(),
    };
    Ok(PathOutcome {
        index,
        seed,
        record,
        wealth,
        v_frictionless,
        q_frictionless,
        dv,
    })
}

/// Running sum and count per time index.
#[derive(Clone, Debug, Default)]
struct MeanAcc {
    sum: Vec<f64>,
    count: Vec<usize>,
}

impl MeanAcc {
    fn add(&mut self, xs: impl Iterator<Item = f64>) {
        for (k, x) in xs.enumerate() {
            if k == self.sum.len() {
                self.sum.push(0.0);
                self.count.push(0);
            }
            self.sum[k] += x;
            self.count[k] += 1;
        }
    }

    fn mean(&self) -> Vec<f64> {
        self.sum.iter().zip(&self.count).map(|(s, &c)| s / c as f64).collect()
    }
}

#[derive(Clone, Debug, Default)]
struct BandAcc {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BandAcc {
    fn add(&mut self, xs: &[f64]) {
        for (k, &x) in xs.iter().enumerate() {
            if k == self.lo.len() {
                self.lo.push(x);
                self.hi.push(x);
            } else {
                self.lo[k] = self.lo[k].min(x);
                self.hi[k] = self.hi[k].max(x);
            }
        }
    }
}

/// Time series averaged over the paths alive at each time.
#[derive(Clone, Debug, Default)]
pub struct EnsembleSeries {
    pub grid: Vec<f64>,
    pub alive: Vec<usize>,
    pub v_impact_mean: Vec<f64>,
    pub v_impact_min: Vec<f64>,
    pub v_impact_max: Vec<f64>,
    pub v_frictionless_mean: Vec<f64>,
    pub g_term_mean: Vec<f64>,
    pub gamma_mean: Vec<f64>,
    pub gamma_time_mean: Vec<f64>,
    pub gamma_hessian_mean: Vec<f64>,
    pub gamma_impact_mean: Vec<f64>,
    /// `q_mean[i][k]` for asset `i`.
    pub q_mean: Vec<Vec<f64>>,
    /// Holdings of the first path.
    pub q_sample: Vec<Vec<f64>>,
}

/// Scalar results of an ensemble, the content of `summary.json`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct EnsembleScalars {
    pub n_paths: usize,
    pub base_seed: u64,
    pub completed: usize,
    pub horizon: f64,
    pub t_liquidation: Option<f64>,
    pub mean_v_impact_at_t: Option<f64>,
    pub mean_v_frictionless_at_t: Option<f64>,
    pub nominal_gap_at_t: Option<f64>,
    pub mean_v_impact_final: Option<f64>,
    pub mean_v_frictionless_final: Option<f64>,
    pub max_abs_residual: f64,
    pub max_post_liquidation_variation: Option<f64>,
    pub min_ap_eigenvalue: Option<f64>,
    pub max_ap_eigen_imag: Option<f64>,
    pub dv: Option<relarb::DvStats>,
    pub statuses: Vec<PathStatus>,
    pub stop_times: Vec<Option<f64>>,
}

#[derive(Clone, Debug, Default)]
pub struct EnsembleSummary {
    pub scalars: EnsembleScalars,
    pub series: EnsembleSeries,
    pub dv_samples: Vec<f64>,
    /// Full outcomes of the first paths, up to the retention cap.
    pub kept: Vec<PathOutcome>,
}

#[derive(Default)]
struct Aggregate {
    grid: Vec<f64>,
    v: MeanAcc,
    band: BandAcc,
    vf: MeanAcc,
    g: MeanAcc,
    gamma: MeanAcc,
    gt: MeanAcc,
    gh: MeanAcc,
    gi: MeanAcc,
    q: Vec<MeanAcc>,
    q_sample: Vec<Vec<f64>>,
    v_at_t: MeanAcc,
    vf_at_t: MeanAcc,
    max_res: f64,
    post_var: f64,
    min_eig: f64,
    max_imag: f64,
    dv: Vec<f64>,
    statuses: Vec<PathStatus>,
    stops: Vec<Option<f64>>,
}

impl Aggregate {
    fn absorb(&mut self, o: &PathOutcome, t_end: Option<f64>) {
        let r = &o.record;
        let w = &o.wealth;
        if r.grid.len() > self.grid.len() {
            self.grid = r.grid.clone();
        }
        self.v.add(w.v_master.iter().copied());
        self.band.add(&w.v_master);
        self.vf.add(o.v_frictionless.iter().copied());
        self.g.add(w.g_term.iter().copied());
        self.gamma.add(w.gamma.iter().copied());
        self.gt.add(w.gamma_parts.time_derivative.iter().copied());
        self.gh.add(w.gamma_parts.hessian_qv.iter().copied());
        self.gi.add(w.gamma_parts.impact_qv.iter().copied());
        let d = r.dim();
        if self.q.len() < d {
            self.q.resize_with(d, MeanAcc::default);
        }
        for i in 0..d {
            self.q[i].add(r.q.iter().map(|row| row[i]));
        }
        if o.index == 0 {
            self.q_sample = (0..d).map(|i| r.q.iter().map(|row| row[i]).collect()).collect();
        }
        if let Some(te) = t_end {
            if let Some(k) = r.grid.iter().position(|&t| (t - te).abs() < 1e-9) {
                self.v_at_t.add(std::iter::once(w.v_master[k]));
                self.vf_at_t.add(std::iter::once(o.v_frictionless[k]));
            }
            self.post_var = self.post_var.max(o.post_variation(te));
        }
        self.max_res = self.max_res.max(w.residual.iter().fold(0.0, |m, x| m.max(x.abs())));
        for &(lo, im) in &r.ap_eigen {
            self.min_eig = self.min_eig.min(lo);
            self.max_imag = self.max_imag.max(im);
        }
        self.dv.extend_from_slice(&o.dv);
        self.statuses.push(r.status);
        self.stops.push(r.stop_time);
    }
}

/// Runs `n_paths` paths with seeds `base_seed + index`.
///
/// Paths are simulated in parallel on a pool of `threads` workers (0 means
/// the rayon default) and folded in index order, so the summary does not
/// depend on the degree of parallelism. At most `keep` full outcomes are
/// retained for export.
pub fn run_monte_carlo(
    exp: &Experiment,
    n_paths: usize,
    base_seed: u64,
    threads: usize,
    keep: usize,
) -> Result<EnsembleSummary> {
    exp.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    let t_end = exp.model.generator.ramp.map(|r| r.t);
    let mut agg = Aggregate {
        min_eig: f64::INFINITY,
        ..Default::default()
    };
    let mut kept = Vec::new();
    const CHUNK: usize = 64;
    let mut start = 0;
    while start < n_paths {
        let end = (start + CHUNK).min(n_paths);
        let outcomes: Vec<Result<PathOutcome>> =
            pool.install(|| (start..end).into_par_iter().map(|i| run_path(exp, i, base_seed)).collect());
        for o in outcomes {
            let o = o?;
            agg.absorb(&o, t_end);
            if kept.len() < keep {
                kept.push(o);
            }
        }
        start = end;
    }

    let series = EnsembleSeries {
        grid: agg.grid.clone(),
        alive: agg.v.count.clone(),
        v_impact_mean: agg.v.mean(),
        v_impact_min: agg.band.lo.clone(),
        v_impact_max: agg.band.hi.clone(),
        v_frictionless_mean: agg.vf.mean(),
        g_term_mean: agg.g.mean(),
        gamma_mean: agg.gamma.mean(),
        gamma_time_mean: agg.gt.mean(),
        gamma_hessian_mean: agg.gh.mean(),
        gamma_impact_mean: agg.gi.mean(),
        q_mean: agg.q.iter().map(MeanAcc::mean).collect(),
        q_sample: agg.q_sample.clone(),
    };
    let at_t = |m: &MeanAcc| m.mean().first().copied();
    let mean_v_t = at_t(&agg.v_at_t);
    let mean_vf_t = at_t(&agg.vf_at_t);
    let scalars = EnsembleScalars {
        n_paths,
        base_seed,
        completed: agg.statuses.iter().filter(|s| **s == PathStatus::Completed).count(),
        horizon: exp.sim.horizon,
        t_liquidation: t_end,
        mean_v_impact_at_t: mean_v_t,
        mean_v_frictionless_at_t: mean_vf_t,
        nominal_gap_at_t: match (mean_v_t, mean_vf_t) {
            (Some(v), Some(f)) => Some(exp.model.w * (f - v)),
            _ => None,
        },
        mean_v_impact_final: series.v_impact_mean.last().copied(),
        mean_v_frictionless_final: series.v_frictionless_mean.last().copied(),
        max_abs_residual: agg.max_res,
        max_post_liquidation_variation: t_end.map(|_| agg.post_var),
        min_ap_eigenvalue: agg.min_eig.is_finite().then_some(agg.min_eig),
        max_ap_eigen_imag: agg.min_eig.is_finite().then_some(agg.max_imag),
        dv: (!agg.dv.is_empty()).then(|| relarb::DvStats::from_samples(&agg.dv)),
        statuses: agg.statuses,
        stop_times: agg.stops,
    };
    Ok(EnsembleSummary {
        scalars,
        series,
        dv_samples: agg.dv,
        kept,
    })
}
