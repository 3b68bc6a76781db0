//! Coefficients of the coupled `(P, Q, J)` SDE at one state.

use crate::error::{Error, Result};
use crate::generating::{arrow_mat, arrow_tensor, arrow_vec, GeneratorJet, GeneratorSpec};
use crate::impact::{ImpactSpec, ShapeEval};
use crate::linalg::{self, Matrix, Tensor3, Vector};

/// Everything the coefficient formulas read at `(t, p, J)`.
#[derive(Clone, Debug)]
pub struct CoeffContext {
    pub t: f64,
    pub p: Vec<f64>,
    pub j: Vec<f64>,
    /// `Pbar(p0)`.
    pub cap0: f64,
    pub w: f64,
    pub n: Vec<f64>,
    pub mu: Vec<f64>,
    /// `Pbar(p)`.
    pub cap: f64,
    pub jet: GeneratorJet,
    pub shape: Vec<ShapeEval>,
    /// `K_i(t, t)`.
    pub k_diag: Vec<f64>,
}

impl CoeffContext {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        t: f64,
        p: &[f64],
        j: &[f64],
        cap0: f64,
        w: f64,
        n: &[f64],
        gen: &GeneratorSpec,
        impacts: &[ImpactSpec],
    ) -> Result<Self> {
        let d = p.len();
        if j.len() != d || n.len() != d || impacts.len() != d {
            return Err(Error::Dimension(format!(
                "state has {d} prices, {} impact states, {} share counts, {} impact specs",
                j.len(),
                n.len(),
                impacts.len()
            )));
        }
        if p.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Domain(format!("prices must be strictly positive: {p:?}")));
        }
        let cap = crate::total_cap(p, n);
        let mu = crate::market_weights(p, n);
        let jet = gen.jet(t, &mu)?;
        Ok(Self {
            t,
            p: p.to_vec(),
            j: j.to_vec(),
            cap0,
            w,
            n: n.to_vec(),
            cap,
            jet,
            shape: impacts.iter().zip(j).map(|(s, &x)| s.shape.eval(t, x)).collect(),
            k_diag: impacts.iter().map(|s| s.kernel.diag()).collect(),
            mu,
        })
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    /// `d_x h_i K_i(t,t)`.
    fn sens(&self, i: usize) -> f64 {
        self.shape[i].dx * self.k_diag[i]
    }

    fn arrow_hess(&self) -> Matrix {
        arrow_mat(&self.jet.hess, &self.mu).expect("jet and weights share a dimension")
    }
}

#[derive(Clone, Debug)]
pub struct CoeffSet {
    pub a_p: Matrix,
    pub a_q: Matrix,
    pub alpha_p: Vector,
    pub beta_p: Matrix,
    pub gamma_p: Tensor3,
    pub alpha_q: Vector,
    pub beta_q: Matrix,
    pub gamma_q: Tensor3,
    pub alpha_j: Vector,
    pub beta_j: Matrix,
    pub gamma_j: Tensor3,
}

fn assemble_aq_with(ctx: &CoeffContext, ah: &Matrix) -> Matrix {
    let c = ctx.w / (ctx.cap0 * ctx.cap);
    Matrix::from_fn(ctx.dim(), ctx.dim(), |i, j| c * ctx.n[i] * ctx.n[j] * ah[(i, j)])
}

pub fn assemble_aq(ctx: &CoeffContext) -> Matrix {
    assemble_aq_with(ctx, &ctx.arrow_hess())
}

/// `A^P = I - diag(d_x h o K) A^Q`.
pub fn assemble_ap(ctx: &CoeffContext) -> Matrix {
    ap_from_aq(ctx, &assemble_aq(ctx))
}

fn ap_from_aq(ctx: &CoeffContext, aq: &Matrix) -> Matrix {
    let d = ctx.dim();
    Matrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.0 } - ctx.sens(i) * aq[(i, j)])
}

/// The matrix `B` and the tensor `Upsilon`.
///
/// The centered-Hessian term of `Upsilon` is averaged over its two index
/// placements, so `Upsilon_ilm` is symmetric in `(l, m)`; it is only ever
/// contracted against symmetric covariations.
pub fn assemble_b_upsilon(ctx: &CoeffContext) -> (Matrix, Tensor3) {
    let d = ctx.dim();
    let mu = &ctx.mu;
    let hess = &ctx.jet.hess;
    let scale = ctx.w / (ctx.cap0 * ctx.cap);
    // rows of the Hessian centered at mu: r[j][l] = (arrow grad d_j G)_l
    let r: Vec<Vector> = (0..d)
        .map(|j| {
            let row: Vec<f64> = hess.row(j).iter().copied().collect();
            arrow_vec(&row, mu).expect("dimension checked")
        })
        .collect();
    let b = Matrix::from_fn(d, d, |j, k| {
        let mut acc = -2.0 * hess[(j, k)];
        for l in 0..d {
            acc += scale * ctx.n[l] * ctx.n[l] * ctx.sens(l) * r[j][l] * r[k][l];
        }
        acc
    });
    let ah = ctx.arrow_hess();
    let ab = arrow_mat(&b, mu).expect("dimension checked");
    let at = arrow_tensor(&ctx.jet.third, mu).expect("dimension checked");
    let c3 = ctx.w / (ctx.cap0 * ctx.cap * ctx.cap);
    let ups = Tensor3::from_fn(d, |i, l, m| {
        c3 * ctx.n[i]
            * ctx.n[l]
            * ctx.n[m]
            * (-0.5 * (ah[(i, l)] + ah[(i, m)]) + 0.5 * at.get(i, l, m) + 0.5 * ab[(l, m)])
    });
    (b, ups)
}

/// `sum_{lm} Ups_ilm beta_lj beta_mk`.
fn upsilon_beta_beta(ups: &Tensor3, beta: &Matrix) -> Tensor3 {
    let d = beta.nrows();
    let mut out = Tensor3::zeros(d);
    let mut slice = Matrix::zeros(d, d);
    for i in 0..d {
        for l in 0..d {
            for m in 0..d {
                slice[(l, m)] = ups.get(i, l, m);
            }
        }
        let v = beta.transpose() * &slice * beta;
        for j in 0..d {
            for k in 0..d {
                out.set(i, j, k, v[(j, k)]);
            }
        }
    }
    out
}

/// `out_{.jk} = M x_{.jk}` for every `(j, k)`.
fn left_multiply(m: &Matrix, x: &Tensor3) -> Tensor3 {
    let d = m.nrows();
    let mut out = Tensor3::zeros(d);
    for j in 0..d {
        for k in 0..d {
            let v = m * x.fiber(j, k);
            for i in 0..d {
                out.set(i, j, k, v[i]);
            }
        }
    }
    out
}

fn scale_rows(k: &[f64], x: &Tensor3) -> Tensor3 {
    let d = k.len();
    Tensor3::from_fn(d, |i, j, l| k[i] * x.get(i, j, l))
}

/// All drift, diffusion and covariation loadings at the context state.
///
/// `b_j` is the impact-state drift `b^J(t)` along the holdings history.
pub fn assemble_coefficients(ctx: &CoeffContext, b_j: &[f64]) -> Result<CoeffSet> {
    let d = ctx.dim();
    if b_j.len() != d {
        return Err(Error::Dimension(format!("b^J has {} entries for {d} assets", b_j.len())));
    }
    let ah = ctx.arrow_hess();
    let a_q = assemble_aq_with(ctx, &ah);
    let a_p = ap_from_aq(ctx, &a_q);
    let beta_p = linalg::solve_identity(&a_p)?;
    let (_, ups) = assemble_b_upsilon(ctx);

    let wc = ctx.w / ctx.cap0;
    let grad_dt_c = arrow_vec(ctx.jet.grad_dt.as_slice(), &ctx.mu)?;
    let rhs = Vector::from_fn(d, |i, _| {
        let s = &ctx.shape[i];
        s.dt + s.dx * b_j[i] + wc * s.dx * ctx.k_diag[i] * ctx.n[i] * grad_dt_c[i]
    });
    let alpha_p = &beta_p * rhs;

    let beta_q = &a_q * &beta_p;
    let ubb = upsilon_beta_beta(&ups, &beta_p);
    let gamma_tilde = Tensor3::from_fn(d, |i, j, k| {
        let s = &ctx.shape[i];
        let kk = ctx.k_diag[i];
        s.dx * kk * ubb.get(i, j, k) + 0.5 * s.dxx * kk * kk * beta_q[(i, j)] * beta_q[(i, k)]
    });
    let gamma_p = left_multiply(&beta_p, &gamma_tilde);

    let alpha_q = &a_q * &alpha_p + Vector::from_fn(d, |i, _| wc * ctx.n[i] * grad_dt_c[i]);
    let mut gamma_q = left_multiply(&a_q, &gamma_p);
    for (g, u) in gamma_q.as_mut_slice().iter_mut().zip(ubb.as_slice()) {
        *g += u;
    }

    let kd = &ctx.k_diag;
    let beta_j = Matrix::from_fn(d, d, |i, j| kd[i] * beta_q[(i, j)]);
    let alpha_j = Vector::from_fn(d, |i, _| kd[i] * alpha_q[i] + b_j[i]);
    let gamma_j = scale_rows(kd, &gamma_q);

    Ok(CoeffSet {
        a_p,
        a_q,
        alpha_p,
        beta_p,
        gamma_p,
        alpha_q,
        beta_q,
        gamma_q,
        alpha_j,
        beta_j,
        gamma_j,
    })
}

/// Smallest real part among the eigenvalues of `A^P`.
pub fn check_eigen_lower_bound(ap: &Matrix) -> Result<f64> {
    Ok(eigen_bounds(ap)?.0)
}

/// `(min real part, max |imaginary part|)` of the eigenvalues.
pub fn eigen_bounds(m: &Matrix) -> Result<(f64, f64)> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
    }
    let ev = linalg::eigenvalues(m)?;
    Ok(ev.iter().fold((f64::INFINITY, 0.0_f64), |(lo, im), z| (lo.min(z.re), im.max(z.im.abs()))))
}
