//! Fundamental (unperturbed) price paths.
//!
//! The two-asset model pairs a Jacobi process for the first market weight
//! with a shifted, scaled Bessel process for log total capitalization.
//! Paths for any other dimension have to be ingested from CSV.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::GaussianStream;

/// Margin kept between a simulated weight and the edges of
/// `(delta_S, 1 - delta_S)`.
pub const JACOBI_CLIP: f64 = 1e-12;
/// Lower bound on `logcap - log(kappa_S)` inside the Bessel drift.
pub const LOG_CAP_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct FundamentalParams {
    pub d: usize,
    /// Shares outstanding per asset.
    pub n: Vec<f64>,
    pub mu0: Vec<f64>,
    /// Long-run mean of the first weight.
    pub mu_bar: f64,
    pub alpha: f64,
    pub eta: f64,
    pub delta_s: f64,
    pub cap0: f64,
    pub eps_s: f64,
    pub zeta: f64,
    pub kappa_s: f64,
}

impl FundamentalParams {
    /// Parameters of the desk-scale two-asset experiment.
    pub fn desk_scale() -> Self {
        let eps_s = 0.02_f64 * 0.02;
        Self {
            d: 2,
            n: vec![1e9, 1e9],
            mu0: vec![0.5, 0.5],
            mu_bar: 0.5,
            alpha: 0.01,
            eta: 0.02,
            delta_s: 0.1,
            cap0: 3e10,
            eps_s,
            zeta: 2.0 * eps_s + 1.0,
            kappa_s: 1e7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.d < 2 {
            return bad(format!("need at least two assets, got {}", self.d));
        }
        if self.n.len() != self.d || self.mu0.len() != self.d {
            return Err(Error::Dimension(format!(
                "d={} but {} share counts and {} initial weights",
                self.d,
                self.n.len(),
                self.mu0.len()
            )));
        }
        if self.n.iter().any(|&x| !(x > 0.0)) {
            return bad("shares outstanding must be positive".into());
        }
        if !(self.delta_s > 0.0 && self.delta_s < 0.5) {
            return bad(format!("delta_S={} must lie in (0, 1/2)", self.delta_s));
        }
        let lo = self.delta_s;
        let hi = 1.0 - self.delta_s;
        if self.mu0.iter().any(|&m| !(m > lo && m < hi)) {
            return bad(format!("mu0 must lie componentwise in ({lo}, {hi})"));
        }
        if (self.mu0.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return bad("mu0 must sum to one".into());
        }
        if !(self.mu_bar > lo && self.mu_bar < hi) {
            return bad(format!("mu_bar={} must lie in ({lo}, {hi})", self.mu_bar));
        }
        if !(self.alpha > 0.0 && self.eta > 0.0 && self.eps_s > 0.0 && self.kappa_s > 0.0) {
            return bad("alpha, eta, eps_S and kappa_S must be positive".into());
        }
        let eta2 = self.eta * self.eta;
        if 2.0 * self.alpha * (self.mu_bar - lo) < eta2 || 2.0 * self.alpha * (hi - self.mu_bar) < eta2
        {
            return bad("Feller conditions 2 alpha (mu_bar - delta_S) >= eta^2 fail".into());
        }
        if self.zeta < self.eps_s + 1.0 {
            return bad(format!("zeta={} must be at least eps_S + 1", self.zeta));
        }
        if !(self.cap0 > self.kappa_s) {
            return bad("cap0 must exceed kappa_S".into());
        }
        Ok(())
    }

    pub fn feller_margins(&self) -> (f64, f64) {
        let eta2 = self.eta * self.eta;
        (
            2.0 * self.alpha * (self.mu_bar - self.delta_s) - eta2,
            2.0 * self.alpha * (1.0 - self.delta_s - self.mu_bar) - eta2,
        )
    }

    /// Upper bound on `d[log S_i]/dt` for this model.
    pub fn sigma2_s(&self) -> f64 {
        let ds = self.delta_s;
        self.eps_s + self.eta * self.eta * (1.0 - 2.0 * ds).powi(2) / (4.0 * ds * (1.0 - ds))
    }

    /// Initial prices `cap0 * mu0_i / N_i`.
    pub fn initial_prices(&self) -> Vec<f64> {
        self.mu0
            .iter()
            .zip(&self.n)
            .map(|(m, n)| self.cap0 * m / n)
            .collect()
    }

    /// Instantaneous covariance rate of `S` implied by the model at prices `s`.
    pub fn covariance_rate(&self, s: &[f64]) -> Matrix {
        let cap: f64 = s.iter().zip(&self.n).map(|(x, n)| x * n).sum();
        let mu1 = self.n[0] * s[0] / cap;
        let v = ((mu1 - self.delta_s) * (1.0 - self.delta_s - mu1)).max(0.0);
        let sign = [1.0, -1.0];
        Matrix::from_fn(2, 2, |j, k| {
            let mj = self.n[j] * s[j] / cap;
            let mk = self.n[k] * s[k] / cap;
            s[j] * s[k] * (self.eps_s + self.eta * self.eta * v * sign[j] * sign[k] / (mj * mk))
        })
    }
}

/// One full-truncation Euler step of the Jacobi weight.
pub fn step_jacobi(mu1: f64, dt: f64, dw: f64, p: &FundamentalParams) -> f64 {
    let lo = p.delta_s;
    let hi = 1.0 - p.delta_s;
    let diffusion = ((mu1 - lo) * (hi - mu1)).max(0.0).sqrt();
    let next = mu1 + p.alpha * (p.mu_bar - mu1) * dt + p.eta * diffusion * dw;
    next.clamp(lo + JACOBI_CLIP, hi - JACOBI_CLIP)
}

/// One Euler step of log total capitalization.
pub fn step_log_cap(logcap: f64, dt: f64, db: f64, p: &FundamentalParams) -> f64 {
    let floor = p.kappa_s.ln();
    let gap = (logcap - floor).max(LOG_CAP_FLOOR);
    let next = logcap + (p.zeta - 1.0) / (2.0 * gap) * dt + p.eps_s.sqrt() * db;
    next.max(floor + LOG_CAP_FLOOR)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathSource {
    Simulated,
    Ingested,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FundamentalPath {
    pub grid: Vec<f64>,
    /// `s[k][i]`: price of asset `i` at `grid[k]`.
    pub s: Vec<Vec<f64>>,
    pub source: PathSource,
}

impl FundamentalPath {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.s.first().map_or(0, Vec::len)
    }

    pub fn steps(&self) -> usize {
        self.grid.len().saturating_sub(1)
    }

    /// Common step size when the grid is uniform to relative tolerance 1e-9.
    pub fn uniform_dt(&self) -> Option<f64> {
        if self.grid.len() < 2 {
            return None;
        }
        let h = self.grid[1] - self.grid[0];
        let uniform = self
            .grid
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1.0));
        uniform.then_some(h)
    }

    /// Every `stride`-th grid point, starting at 0.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Stride("stride must be positive".into()));
        }
        let idx: Vec<usize> = (0..self.len()).step_by(stride).collect();
        Ok(Self {
            grid: idx.iter().map(|&k| self.grid[k]).collect(),
            s: idx.iter().map(|&k| self.s[k].clone()).collect(),
            source: self.source,
        })
    }

    /// The path restricted to its first `points` grid points.
    pub fn truncated(&self, points: usize) -> Self {
        let m = points.min(self.len());
        Self {
            grid: self.grid[..m].to_vec(),
            s: self.s[..m].to_vec(),
            source: self.source,
        }
    }

    /// Weights `N_i S_i / sum_j N_j S_j` at step `k`.
    pub fn weights(&self, k: usize, n: &[f64]) -> Vec<f64> {
        crate::market_weights(&self.s[k], n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Validation("empty price path".into()));
        }
        if self.s.len() != self.grid.len() {
            return Err(Error::Shape(format!(
                "{} grid points but {} price rows",
                self.grid.len(),
                self.s.len()
            )));
        }
        let d = self.dim();
        for (k, row) in self.s.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Shape(format!("row {k} has {} prices, expected {d}", row.len())));
            }
            if let Some(i) = row.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::Validation(format!(
                    "price S_{} at t={} is not strictly positive",
                    i + 1,
                    self.grid[k]
                )));
            }
        }
        if let Some(k) = self.grid.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Validation(format!(
                "time column not strictly increasing at row {}",
                k + 2
            )));
        }
        Ok(())
    }
}

/// Simulates `m` steps of the two-asset model.
///
/// Component 0 of the Gaussian stream drives the weight, component 1 the
/// capitalization.
pub fn build_fundamental_path(
    p: &FundamentalParams,
    seed: u64,
    m: usize,
    dt: f64,
) -> Result<FundamentalPath> {
    if p.d != 2 {
        return Err(Error::Dimension(format!(
            "the Jacobi/Bessel model is two-asset only (got d={}); ingest other paths from CSV",
            p.d
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt={dt} must be positive")));
    }
    p.validate()?;
    let mut rng = GaussianStream::new(seed, 0, 2);
    let sq = dt.sqrt();
    let mut mu1 = p.mu0[0];
    let mut logcap = p.cap0.ln();
    let price = |mu1: f64, logcap: f64| {
        let cap = logcap.exp();
        vec![cap * mu1 / p.n[0], cap * (1.0 - mu1) / p.n[1]]
    };
    let mut grid = Vec::with_capacity(m + 1);
    let mut s = Vec::with_capacity(m + 1);
    grid.push(0.0);
    s.push(p.initial_prices());
    for k in 0..m {
        let dw = sq * rng.standard_normal(k as u64, 0);
        let db = sq * rng.standard_normal(k as u64, 1);
        mu1 = step_jacobi(mu1, dt, dw, p);
        logcap = step_log_cap(logcap, dt, db, p);
        grid.push((k + 1) as f64 * dt);
        s.push(price(mu1, logcap));
    }
    Ok(FundamentalPath {
        grid,
        s,
        source: PathSource::Simulated,
    })
}

/// `dS_j dS_k` over the step ending at grid index `step`.
pub fn realized_qv_increment(path: &FundamentalPath, j: usize, k: usize, step: usize) -> Result<f64> {
    let d = path.dim();
    if step == 0 || step >= path.len() || j >= d || k >= d {
        return Err(Error::Index(format!(
            "step {step}, assets ({j},{k}) outside path of {} points and {d} assets",
            path.len()
        )));
    }
    let a = &path.s[step - 1];
    let b = &path.s[step];
    Ok((b[j] - a[j]) * (b[k] - a[k]))
}

/// Reads a `t,S_1,...,S_d` CSV.
pub fn read_price_csv<R: Read>(reader: R) -> Result<FundamentalPath> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
        .clone();
    if headers.len() < 2 || headers.get(0).map(str::trim) != Some("t") {
        return Err(Error::Parse {
            line: 1,
            msg: "header must read t,S_1,...,S_d".into(),
        });
    }
    for (i, h) in headers.iter().skip(1).enumerate() {
        if h.trim() != format!("S_{}", i + 1) {
            return Err(Error::Parse {
                line: 1,
                msg: format!("column {} should be S_{}, found `{h}`", i + 2, i + 1),
            });
        }
    }
    let d = headers.len() - 1;
    let mut grid = Vec::new();
    let mut s = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        if rec.len() != d + 1 {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", d + 1, rec.len()),
            });
        }
        let mut vals = rec.iter().map(|f| {
            f.trim().parse::<f64>().map_err(|e| Error::Parse {
                line,
                msg: format!("`{f}`: {e}"),
            })
        });
        grid.push(vals.next().unwrap()?);
        s.push(vals.collect::<Result<Vec<f64>>>()?);
    }
    let path = FundamentalPath {
        grid,
        s,
        source: PathSource::Ingested,
    };
    path.validate()?;
    Ok(path)
}

pub fn ingest_price_csv(file: &Path) -> Result<FundamentalPath> {
    let f = std::fs::File::open(file).map_err(|e| Error::io(file, e))?;
    read_price_csv(std::io::BufReader::new(f))
}

/// Writes `t,S_1,...,S_d` with round-trip float formatting.
pub fn write_price_csv<W: Write>(path: &FundamentalPath, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend((1..=path.dim()).map(|i| format!("S_{i}")));
    let to_io = |e: csv::Error| Error::io("<csv>", e.into());
    w.write_record(&header).map_err(to_io)?;
    for (t, row) in path.grid.iter().zip(&path.s) {
        let mut rec = vec![crate::fmt_f64(*t)];
        rec.extend(row.iter().map(|x| crate::fmt_f64(*x)));
        w.write_record(&rec).map_err(to_io)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn jacobi_fixed_point_and_drift() {
        let p = FundamentalParams::desk_scale();
        assert_eq!(step_jacobi(0.5, 0.5, 0.0, &p), 0.5);
        assert_relative_eq!(step_jacobi(0.4, 0.5, 0.0, &p), 0.4005, max_relative = 1e-14);
    }

    #[test]
    fn jacobi_clamps_overshoot() {
        let p = FundamentalParams::desk_scale();
        assert_eq!(step_jacobi(0.5, 0.5, 1e6, &p), 0.9 - JACOBI_CLIP);
        assert_eq!(step_jacobi(0.5, 0.5, -1e6, &p), 0.1 + JACOBI_CLIP);
    }

    #[test]
    fn feller_margin_matches_hand_arithmetic() {
        let p = FundamentalParams::desk_scale();
        let (a, b) = p.feller_margins();
        assert_relative_eq!(a + 0.0004, 0.008, max_relative = 1e-12);
        assert_relative_eq!(b + 0.0004, 0.008, max_relative = 1e-12);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn log_cap_drift() {
        let mut p = FundamentalParams::desk_scale();
        let x = 20.0;
        let gap = x - p.kappa_s.ln();
        // zeta = 2 eps + 1 reduces the drift to eps / gap
        let expected = x + p.eps_s / gap * 0.5;
        assert_relative_eq!(step_log_cap(x, 0.5, 0.0, &p), expected, max_relative = 1e-15);
        p.zeta = 1.0;
        assert_eq!(step_log_cap(x, 0.5, 0.0, &p), x);
    }

    #[test]
    fn sigma2_value() {
        let p = FundamentalParams::desk_scale();
        assert_relative_eq!(p.sigma2_s(), 0.0004 + 0.0004 * 0.64 / 0.36, max_relative = 1e-14);
        assert!((p.sigma2_s() - 0.0011111).abs() < 1e-7);
    }

    #[test]
    fn initial_prices_and_repeatability() {
        let p = FundamentalParams::desk_scale();
        let a = build_fundamental_path(&p, 11, 200, 0.5).unwrap();
        assert_eq!(a.s[0], vec![15.0, 15.0]);
        let b = build_fundamental_path(&p, 11, 200, 0.5).unwrap();
        assert_eq!(a, b);
        let c = build_fundamental_path(&p, 12, 200, 0.5).unwrap();
        assert_ne!(a.s, c.s);
        let z = build_fundamental_path(&p, 11, 0, 0.5).unwrap();
        assert_eq!(z.len(), 1);
        assert_eq!(a.uniform_dt(), Some(0.5));
    }

    #[test]
    fn only_two_assets_simulated() {
        let mut p = FundamentalParams::desk_scale();
        p.d = 3;
        assert!(matches!(build_fundamental_path(&p, 1, 5, 0.5), Err(Error::Dimension(_))));
    }

    #[test]
    fn qv_increment_examples() {
        let path = FundamentalPath {
            grid: vec![0.0, 1.0],
            s: vec![vec![5.0, 5.0], vec![6.0, 3.0]],
            source: PathSource::Ingested,
        };
        assert_eq!(realized_qv_increment(&path, 0, 1, 1).unwrap(), -2.0);
        assert_eq!(realized_qv_increment(&path, 0, 0, 1).unwrap(), 1.0);
        assert!(matches!(realized_qv_increment(&path, 0, 0, 0), Err(Error::Index(_))));
        assert!(matches!(realized_qv_increment(&path, 0, 2, 1), Err(Error::Index(_))));
        let flat = FundamentalPath {
            grid: vec![0.0, 1.0],
            s: vec![vec![5.0, 5.0], vec![5.0, 5.0]],
            source: PathSource::Ingested,
        };
        assert_eq!(realized_qv_increment(&flat, 1, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn csv_ingest_cases() {
        let ok = "t,S_1,S_2\n0,15,15\n0.5,15.1,14.9\n1,15.2,14.8\n";
        let p = read_price_csv(ok.as_bytes()).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.source, PathSource::Ingested);
        let zero = "t,S_1,S_2\n0,15,15\n0.5,0,14.9\n";
        assert!(matches!(read_price_csv(zero.as_bytes()), Err(Error::Validation(_))));
        let back = "t,S_1,S_2\n0,15,15\n1,15,15\n0.5,15,15\n";
        assert!(matches!(read_price_csv(back.as_bytes()), Err(Error::Validation(_))));
        let junk = "t,S_1,S_2\n0,15,abc\n";
        assert!(matches!(read_price_csv(junk.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let hdr = "time,S_1\n0,1\n";
        assert!(matches!(read_price_csv(hdr.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn csv_round_trip() {
        let p = build_fundamental_path(&FundamentalParams::desk_scale(), 3, 50, 0.5).unwrap();
        let mut buf = Vec::new();
        write_price_csv(&p, &mut buf).unwrap();
        let q = read_price_csv(buf.as_slice()).unwrap();
        assert_eq!(p.grid, q.grid);
        assert_eq!(p.s, q.s);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn weights_stay_inside_band(seed in any::<u64>()) {
            let p = FundamentalParams::desk_scale();
            let path = build_fundamental_path(&p, seed, 400, 0.5).unwrap();
            for k in 0..path.len() {
                let mu = path.weights(k, &p.n);
                prop_assert!(mu[0] >= p.delta_s && mu[0] <= 1.0 - p.delta_s);
                let cap: f64 = path.s[k].iter().zip(&p.n).map(|(s, n)| s * n).sum();
                prop_assert!(cap > p.kappa_s);
            }
        }

        #[test]
        fn qv_increment_symmetric(seed in any::<u64>(), step in 1usize..40) {
            let p = FundamentalParams::desk_scale();
            let path = build_fundamental_path(&p, seed, 40, 0.5).unwrap();
            let a = realized_qv_increment(&path, 0, 1, step).unwrap();
            let b = realized_qv_increment(&path, 1, 0, step).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(realized_qv_increment(&path, 1, 1, step).unwrap() >= 0.0);
        }
    }
}
