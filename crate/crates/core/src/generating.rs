//! Generating functions `G(t, mu) = nu psi(t) H(mu)` and the centering
//! ("arrow") operators that appear in the SDE coefficients.

use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Tensor3, Vector};

/// Tolerance on `sum(mu) = 1`.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A scalar function `g` used additively: `H(mu) = sum_i g(mu_i)`.
pub trait ScalarGenerator: Send + Sync + Debug {
    fn value(&self, x: f64) -> f64;
    fn d1(&self, x: f64) -> f64;
    fn d2(&self, x: f64) -> f64;
    /// Third derivative; defaults to a central difference of `d2`.
    fn d3(&self, x: f64) -> f64 {
        let h = 1e-5 * x.abs().max(1e-3);
        (self.d2(x + h) - self.d2(x - h)) / (2.0 * h)
    }
}

/// Built-in choices of `g`.
#[derive(Clone, Debug)]
pub enum AdditiveG {
    /// `-x^2 / 2`.
    Quadratic,
    /// `-x log x`.
    Entropy,
    /// `x^p` with `p` in (0, 1).
    Power { p: f64 },
    Custom(Arc<dyn ScalarGenerator>),
}

impl AdditiveG {
    fn derivs(&self, x: f64) -> [f64; 4] {
        match self {
            AdditiveG::Quadratic => [-0.5 * x * x, -x, -1.0, 0.0],
            AdditiveG::Entropy => [-x * x.ln(), -x.ln() - 1.0, -1.0 / x, 1.0 / (x * x)],
            AdditiveG::Power { p } => {
                let p = *p;
                let a = x.powf(p - 3.0);
                [
                    a * x * x * x,
                    p * a * x * x,
                    p * (p - 1.0) * a * x,
                    p * (p - 1.0) * (p - 2.0) * a,
                ]
            }
            AdditiveG::Custom(g) => [g.value(x), g.d1(x), g.d2(x), g.d3(x)],
        }
    }
}

#[derive(Clone, Debug)]
pub enum Family {
    /// `H = 1`: the market portfolio.
    ConstantOne,
    /// `H = 1 - |mu|^2 / 2`.
    Quadratic,
    /// `H = -sum mu_i log mu_i`.
    Entropy,
    /// `H = (sum mu_i^p)^(1/p)`.
    DiversityP { p: f64 },
    /// `H = prod mu_i^(p_i)`.
    GeometricMean { weights: Vec<f64> },
    /// `H = sum g(mu_i)`.
    AdditivelySymmetric(AdditiveG),
}

/// Initiation and liquidation times for the ramp `psi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ramp {
    pub t0: f64,
    pub t1: f64,
    pub t: f64,
}

impl Ramp {
    pub fn new(t0: f64, t1: f64, t: f64) -> Result<Self> {
        if !(0.0 < t0 && t0 < t1 && t1 < t) {
            return Err(Error::RampOrdering { t0, t1, t });
        }
        Ok(Self { t0, t1, t })
    }

    pub fn psi(&self, t: f64) -> (f64, f64) {
        let Ramp { t0, t1, t: tt } = *self;
        if t <= 0.0 || t >= tt {
            (0.0, 0.0)
        } else if t < t0 {
            let (c, dc) = chi(t / t0);
            (c, dc / t0)
        } else if t <= t1 {
            (1.0, 0.0)
        } else {
            let len = tt - t1;
            let (c, dc) = chi((t - t1) / len);
            (1.0 - c, -dc / len)
        }
    }
}

/// `chi(u) = 3u^2 - 2u^3` on [0, 1] with its derivative; 1 beyond.
pub fn chi(u: f64) -> (f64, f64) {
    if u <= 0.0 {
        (0.0, 0.0)
    } else if u >= 1.0 {
        (1.0, 0.0)
    } else {
        (u * u * (3.0 - 2.0 * u), 6.0 * u * (1.0 - u))
    }
}

/// `(psi(t), psi'(t))` for ramp times `0 < t0 < t1 < big_t`.
pub fn ramp_psi(t0: f64, t1: f64, big_t: f64, t: f64) -> Result<(f64, f64)> {
    Ok(Ramp::new(t0, t1, big_t)?.psi(t))
}

#[derive(Clone, Debug)]
pub struct GeneratorSpec {
    pub family: Family,
    pub nu: f64,
    pub ramp: Option<Ramp>,
}

/// Value and derivatives of `G` at one `(t, mu)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorJet {
    pub g: f64,
    pub dt_g: f64,
    pub grad: Vector,
    pub hess: Matrix,
    pub third: Tensor3,
    pub grad_dt: Vector,
}

struct HJet {
    h: f64,
    grad: Vector,
    hess: Matrix,
    third: Tensor3,
}

impl GeneratorSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            nu: 1.0,
            ramp: None,
        }
    }

    pub fn market() -> Self {
        Self::new(Family::ConstantOne)
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn with_ramp(mut self, ramp: Ramp) -> Self {
        self.ramp = Some(ramp);
        self
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::Validation(format!("nu={} must be >= 0", self.nu)));
        }
        if let Some(r) = self.ramp {
            Ramp::new(r.t0, r.t1, r.t)?;
        }
        match &self.family {
            Family::DiversityP { p } if !(*p > 0.0 && *p < 1.0) => {
                Err(Error::Validation(format!("diversity p={p} must lie in (0, 1)")))
            }
            Family::GeometricMean { weights } => {
                if weights.len() != d {
                    return Err(Error::Dimension(format!(
                        "geometric mean has {} weights for {d} assets",
                        weights.len()
                    )));
                }
                if weights.iter().any(|&p| !(p > 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return Err(Error::Validation("geometric-mean weights must be positive and sum to 1".into()));
                }
                Ok(())
            }
            Family::AdditivelySymmetric(AdditiveG::Power { p }) if !(*p > 0.0 && *p < 1.0) => {
                Err(Error::Validation(format!("power g needs p in (0, 1), got {p}")))
            }
            _ => Ok(()),
        }
    }

    /// `(nu psi(t), nu psi'(t))`.
    pub fn time_scale(&self, t: f64) -> (f64, f64) {
        match self.ramp {
            None => (self.nu, 0.0),
            Some(r) => {
                let (p, dp) = r.psi(t);
                (self.nu * p, self.nu * dp)
            }
        }
    }

    /// `G(t, mu)` only.
    pub fn value(&self, t: f64, mu: &[f64]) -> Result<f64> {
        check_simplex(mu)?;
        Ok(self.time_scale(t).0 * self.h_value(mu))
    }

    fn h_value(&self, mu: &[f64]) -> f64 {
        match &self.family {
            Family::ConstantOne => 1.0,
            Family::Quadratic => 1.0 - 0.5 * mu.iter().map(|x| x * x).sum::<f64>(),
            Family::Entropy => -mu.iter().map(|x| x * x.ln()).sum::<f64>(),
            Family::DiversityP { p } => mu.iter().map(|x| x.powf(*p)).sum::<f64>().powf(1.0 / p),
            Family::GeometricMean { weights } => mu.iter().zip(weights).map(|(x, p)| x.powf(*p)).product(),
            Family::AdditivelySymmetric(g) => mu.iter().map(|&x| g.derivs(x)[0]).sum(),
        }
    }

    pub fn jet(&self, t: f64, mu: &[f64]) -> Result<GeneratorJet> {
        check_simplex(mu)?;
        let d = mu.len();
        let hj = self.h_jet(mu)?;
        let (s, ds) = self.time_scale(t);
        let mut third = hj.third;
        third.scale(s);
        Ok(GeneratorJet {
            g: s * hj.h,
            dt_g: ds * hj.h,
            grad: &hj.grad * s,
            hess: &hj.hess * s,
            third,
            grad_dt: if ds == 0.0 { Vector::zeros(d) } else { &hj.grad * ds },
        })
    }

    fn h_jet(&self, mu: &[f64]) -> Result<HJet> {
        let d = mu.len();
        let mut out = HJet {
            h: self.h_value(mu),
            grad: Vector::zeros(d),
            hess: Matrix::zeros(d, d),
            third: Tensor3::zeros(d),
        };
        match &self.family {
            Family::ConstantOne => {}
            Family::Quadratic => {
                out.grad = -Vector::from_column_slice(mu);
                out.hess = -Matrix::identity(d, d);
            }
            Family::Entropy => {
                for i in 0..d {
                    out.grad[i] = -mu[i].ln() - 1.0;
                    out.hess[(i, i)] = -1.0 / mu[i];
                    out.third.set(i, i, i, 1.0 / (mu[i] * mu[i]));
                }
            }
            Family::AdditivelySymmetric(g) => {
                for i in 0..d {
                    let [_, d1, d2, d3] = g.derivs(mu[i]);
                    out.grad[i] = d1;
                    out.hess[(i, i)] = d2;
                    out.third.set(i, i, i, d3);
                }
            }
            Family::GeometricMean { weights } => {
                if weights.len() != d {
                    return Err(Error::Dimension(format!("{} weights for {d} assets", weights.len())));
                }
                let g = out.h;
                let v: Vec<f64> = (0..d).map(|i| weights[i] / mu[i]).collect();
                let w: Vec<f64> = (0..d).map(|i| v[i] / mu[i]).collect();
                for i in 0..d {
                    out.grad[i] = g * v[i];
                    for j in 0..d {
                        let diag = if i == j { w[i] } else { 0.0 };
                        out.hess[(i, j)] = g * (v[i] * v[j] - diag);
                    }
                }
                out.third = Tensor3::from_fn(d, |i, j, k| {
                    let mut x = v[i] * v[j] * v[k];
                    if i == j {
                        x -= w[i] * v[k];
                    }
                    if i == k {
                        x -= w[i] * v[j];
                    }
                    if j == k {
                        x -= w[j] * v[i];
                    }
                    if i == j && j == k {
                        x += 2.0 * w[i] / mu[i];
                    }
                    g * x
                });
            }
            Family::DiversityP { p } => {
                let p = *p;
                let s: f64 = mu.iter().map(|x| x.powf(p)).sum();
                let c = (1.0 - p) / p;
                let sc = s.powf(c);
                let a: Vec<f64> = mu.iter().map(|x| x.powf(p - 1.0)).collect();
                let b: Vec<f64> = mu.iter().map(|x| x.powf(p - 2.0)).collect();
                for i in 0..d {
                    out.grad[i] = sc * a[i];
                    for j in 0..d {
                        let diag = if i == j { b[i] } else { 0.0 };
                        out.hess[(i, j)] = (1.0 - p) * sc * (a[i] * a[j] / s - diag);
                    }
                }
                // d_k of (1-p) S^c M_ij with M_ij = a_i a_j / S - delta_ij b_i
                let f1 = (1.0 - p) * (1.0 - p) * sc / s;
                let f0 = (1.0 - p) * sc;
                out.third = Tensor3::from_fn(d, |i, j, k| {
                    let m_ij = a[i] * a[j] / s - if i == j { b[i] } else { 0.0 };
                    let mut dm = -p * a[i] * a[j] * a[k] / (s * s);
                    if i == k {
                        dm += (p - 1.0) * b[i] * a[j] / s;
                    }
                    if j == k {
                        dm += (p - 1.0) * b[j] * a[i] / s;
                    }
                    if i == j && j == k {
                        dm -= (p - 2.0) * b[i] / mu[i];
                    }
                    f1 * a[k] * m_ij + f0 * dm
                });
            }
        }
        Ok(out)
    }
}

fn check_simplex(mu: &[f64]) -> Result<()> {
    if mu.is_empty() {
        return Err(Error::Simplex("empty weight vector".into()));
    }
    if mu.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Simplex(format!("weights must be strictly positive: {mu:?}")));
    }
    let s: f64 = mu.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Simplex(format!("weights sum to {s}")));
    }
    Ok(())
}

/// `out_i = phi_i - phi^T x`.
pub fn arrow_vec(phi: &[f64], x: &[f64]) -> Result<Vector> {
    if phi.len() != x.len() {
        return Err(Error::Shape(format!("vector lengths {} and {}", phi.len(), x.len())));
    }
    let dot: f64 = phi.iter().zip(x).map(|(a, b)| a * b).sum();
    Ok(Vector::from_iterator(phi.len(), phi.iter().map(|a| a - dot)))
}

/// `out_ij = M_ij - (Mx)_i - (Mx)_j + x^T M x`.
pub fn arrow_mat(m: &Matrix, x: &[f64]) -> Result<Matrix> {
    let d = x.len();
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::Shape(format!("{}x{} matrix against vector of length {d}", m.nrows(), m.ncols())));
    }
    let xv = Vector::from_column_slice(x);
    let mx = m * &xv;
    let xtmx = xv.dot(&mx);
    Ok(Matrix::from_fn(d, d, |i, j| m[(i, j)] - mx[i] - mx[j] + xtmx))
}

/// The four-term alternating centering of a cubic tensor.
pub fn arrow_tensor(t: &Tensor3, x: &[f64]) -> Result<Tensor3> {
    let d = x.len();
    if t.dim() != d {
        return Err(Error::Shape(format!("tensor of dim {} against vector of length {d}", t.dim())));
    }
    // one-index contractions: c1[jk] = sum_l T_ljk x_l, c2[ik] = sum_l T_ilk x_l, c3[ij] = sum_l T_ijl x_l
    let mut c1 = Matrix::zeros(d, d);
    let mut c2 = Matrix::zeros(d, d);
    let mut c3 = Matrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            for l in 0..d {
                c1[(a, b)] += t.get(l, a, b) * x[l];
                c2[(a, b)] += t.get(a, l, b) * x[l];
                c3[(a, b)] += t.get(a, b, l) * x[l];
            }
        }
    }
    // two-index: e1[i] = sum_lm T_ilm x_l x_m, e2[j] = sum T_ljm, e3[k] = sum T_lmk
    let mut e1 = vec![0.0; d];
    let mut e2 = vec![0.0; d];
    let mut e3 = vec![0.0; d];
    for a in 0..d {
        for l in 0..d {
            e1[a] += c3[(a, l)] * x[l];
            e2[a] += c3[(l, a)] * x[l];
            e3[a] += c1[(l, a)] * x[l];
        }
    }
    let full: f64 = e1.iter().zip(x).map(|(a, b)| a * b).sum();
    Ok(Tensor3::from_fn(d, |i, j, k| {
        t.get(i, j, k) - (c1[(j, k)] + c2[(i, k)] + c3[(i, j)]) + (e1[i] + e2[j] + e3[k]) - full
    }))
}

/// Initial holdings `q0_i = (w N_i / Pbar(0)) (d_i G + 1 - grad G . mu)` at
/// `t = 0`.
pub fn target_holdings_initial(spec: &GeneratorSpec, w: f64, n: &[f64], p0: &[f64]) -> Result<Vec<f64>> {
    if n.len() != p0.len() {
        return Err(Error::Shape(format!("{} share counts, {} prices", n.len(), p0.len())));
    }
    if p0.iter().any(|&p| !(p > 0.0)) || !(w > 0.0) {
        return Err(Error::Domain("initial prices and wealth must be positive".into()));
    }
    let cap = crate::total_cap(p0, n);
    let mu = crate::market_weights(p0, n);
    let jet = spec.jet(0.0, &mu)?;
    let gm: f64 = jet.grad.iter().zip(&mu).map(|(g, m)| g * m).sum();
    Ok((0..n.len()).map(|i| w * n[i] / cap * (jet.grad[i] + 1.0 - gm)).collect())
}
