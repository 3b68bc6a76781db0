//! Decay kernels, shape functions and the impact state.
//!
//! The observed price is `P = S + I` with `I_i = h_i(t, J_i)` and
//! `J_i = J_i^0 + \int K_i(t,s) dQ_i(s)`.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelSpec {
    /// `exp(-beta (t - s))`.
    Exponential { beta: f64 },
    /// `(t - s + epsilon)^(-beta)` with `beta` in (0, 1).
    ShiftedPower { epsilon: f64, beta: f64 },
    /// Constant `c`.
    Permanent { c: f64 },
    /// `c + exp(-beta (t - s))`.
    PermanentPlusExponential { c: f64, beta: f64 },
}

/// A kernel value with its partial derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelEval {
    pub k: f64,
    pub dt: f64,
    pub ds: f64,
    pub dst: f64,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            KernelSpec::Exponential { beta } => beta > 0.0 && beta.is_finite(),
            KernelSpec::ShiftedPower { epsilon, beta } => {
                epsilon > 0.0 && epsilon.is_finite() && beta > 0.0 && beta < 1.0
            }
            KernelSpec::Permanent { c } => c > 0.0 && c.is_finite(),
            KernelSpec::PermanentPlusExponential { c, beta } => {
                c > 0.0 && c.is_finite() && beta > 0.0 && beta.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid kernel parameters {self:?}")))
        }
    }

    pub fn eval(&self, t: f64, s: f64) -> Result<KernelEval> {
        if t < s {
            return Err(Error::Domain(format!("kernel needs t >= s, got t={t}, s={s}")));
        }
        Ok(self.eval_lag(t - s))
    }

    /// Kernel and partials at lag `tau = t - s >= 0`.
    pub fn eval_lag(&self, tau: f64) -> KernelEval {
        match *self {
            KernelSpec::Exponential { beta } => exp_eval(beta, tau),
            KernelSpec::ShiftedPower { epsilon, beta } => {
                let x = tau + epsilon;
                let k = x.powf(-beta);
                let d1 = beta * k / x;
                KernelEval {
                    k,
                    dt: -d1,
                    ds: d1,
                    dst: -(beta + 1.0) * d1 / x,
                }
            }
            KernelSpec::Permanent { c } => KernelEval {
                k: c,
                dt: 0.0,
                ds: 0.0,
                dst: 0.0,
            },
            KernelSpec::PermanentPlusExponential { c, beta } => {
                let mut e = exp_eval(beta, tau);
                e.k += c;
                e
            }
        }
    }

    /// `K(t, t)`.
    pub fn diag(&self) -> f64 {
        self.eval_lag(0.0).k
    }

    /// `sup_t K(t, t)`.
    pub fn sup(&self) -> f64 {
        self.diag()
    }

    /// Rate of the exponential component, if any.
    pub fn exp_rate(&self) -> Option<f64> {
        match *self {
            KernelSpec::Exponential { beta } | KernelSpec::PermanentPlusExponential { beta, .. } => {
                Some(beta)
            }
            _ => None,
        }
    }
}

fn exp_eval(beta: f64, tau: f64) -> KernelEval {
    let k = (-beta * tau).exp();
    KernelEval {
        k,
        dt: -beta * k,
        ds: beta * k,
        dst: -beta * beta * k,
    }
}

/// Shape of `h_hat` in the separable form `h(t, x) = phi(t) h_hat(x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShapeKind {
    /// `lambda x`.
    Linear,
    /// `lambda asinh(x)`.
    Asinh,
    /// `lambda r(x)`: linear for `|x| <= knee`, `|x|^p` growth beyond
    /// `2 knee`, joined by a C2 blend.
    RegularizedPower { p: f64, knee: f64 },
}

/// The time factor `phi(t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeFactor {
    Constant(f64),
    /// `end + (start - end) exp(-rate t)`.
    Relaxing { start: f64, end: f64, rate: f64 },
}

impl TimeFactor {
    pub fn value(&self, t: f64) -> (f64, f64) {
        match *self {
            TimeFactor::Constant(c) => (c, 0.0),
            TimeFactor::Relaxing { start, end, rate } => {
                let e = (-rate * t).exp();
                (end + (start - end) * e, -rate * (start - end) * e)
            }
        }
    }

    /// `sup_{t >= 0} phi(t)`.
    pub fn sup(&self) -> f64 {
        match *self {
            TimeFactor::Constant(c) => c,
            TimeFactor::Relaxing { start, end, .. } => start.max(end),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub lambda: f64,
    pub phi: TimeFactor,
}

/// `(h, d_t h, d_x h, d_xx h)` at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeEval {
    pub h: f64,
    pub dt: f64,
    pub dx: f64,
    pub dxx: f64,
}

impl ShapeSpec {
    pub fn linear(lambda: f64) -> Self {
        Self {
            kind: ShapeKind::Linear,
            lambda,
            phi: TimeFactor::Constant(1.0),
        }
    }

    pub fn asinh(lambda: f64) -> Self {
        Self {
            kind: ShapeKind::Asinh,
            lambda,
            phi: TimeFactor::Constant(1.0),
        }
    }

    pub fn regularized_power(lambda: f64, p: f64, knee: f64) -> Self {
        Self {
            kind: ShapeKind::RegularizedPower { p, knee },
            lambda,
            phi: TimeFactor::Constant(1.0),
        }
    }

    /// The identically zero shape.
    pub fn zero() -> Self {
        Self::linear(0.0)
    }

    pub fn with_phi(mut self, phi: TimeFactor) -> Self {
        self.phi = phi;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Validation(format!("lambda={} must be >= 0", self.lambda)));
        }
        if let ShapeKind::RegularizedPower { p, knee } = self.kind {
            if !(p > 0.0 && p.is_finite() && knee > 0.0 && knee.is_finite()) {
                return Err(Error::Validation(format!(
                    "regularized power needs p > 0 and knee > 0 (got p={p}, knee={knee})"
                )));
            }
        }
        let ok = match self.phi {
            TimeFactor::Constant(c) => c >= 0.0 && c.is_finite(),
            TimeFactor::Relaxing { start, end, rate } => {
                start >= 0.0 && end >= 0.0 && rate >= 0.0 && start.is_finite() && end.is_finite()
            }
        };
        if !ok {
            return Err(Error::Validation(format!("time factor {:?} must be nonnegative and finite", self.phi)));
        }
        Ok(())
    }

    /// `(h_hat, h_hat', h_hat'')` at `x`.
    pub fn hat(&self, x: f64) -> (f64, f64, f64) {
        let l = self.lambda;
        match self.kind {
            ShapeKind::Linear => (l * x, l, 0.0),
            ShapeKind::Asinh => {
                let r = (1.0 + x * x).sqrt();
                (l * x.asinh(), l / r, -l * x / (r * r * r))
            }
            ShapeKind::RegularizedPower { p, knee } => {
                let (r, r1, r2) = reg_power(x, p, knee);
                (l * r, l * r1, l * r2)
            }
        }
    }

    pub fn eval(&self, t: f64, x: f64) -> ShapeEval {
        let (phi, dphi) = self.phi.value(t);
        let (h, h1, h2) = self.hat(x);
        ShapeEval {
            h: phi * h,
            dt: dphi * h,
            dx: phi * h1,
            dxx: phi * h2,
        }
    }

    /// `sup_x h_hat'(x)`; infinite when the slope is unbounded.
    pub fn hat_slope_sup(&self) -> f64 {
        match self.kind {
            ShapeKind::Linear | ShapeKind::Asinh => self.lambda,
            ShapeKind::RegularizedPower { p, .. } => {
                if p <= 1.0 || self.lambda == 0.0 {
                    self.lambda
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub fn phi_sup(&self) -> f64 {
        self.phi.sup()
    }

    /// The pseudo-inverse of `h_hat`: the smallest `y >= 0` with
    /// `h_hat(y) = x` for `x >= 0`, the largest `y <= 0` for `x < 0`.
    /// Values outside the range map to `+inf` and `-inf` respectively.
    pub fn hat_inverse(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let unreachable = if x > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
        if self.lambda == 0.0 {
            return unreachable;
        }
        let l = self.lambda;
        match self.kind {
            ShapeKind::Linear => x / l,
            ShapeKind::Asinh => (x / l).sinh(),
            ShapeKind::RegularizedPower { .. } => {
                // odd and strictly increasing, so bisect on |x|
                let target = x.abs();
                let mut hi = 1.0_f64;
                while self.hat(hi).0 < target {
                    hi *= 2.0;
                    if !hi.is_finite() {
                        return unreachable;
                    }
                }
                let mut lo = 0.0_f64;
                while hi - lo > 1e-12 * hi.max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    if self.hat(mid).0 < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi.copysign(x)
            }
        }
    }
}

/// Blend weight on `[1, 2]`, rising from 0 to 1 with zero slope at both ends.
fn blend(w: f64) -> (f64, f64) {
    (
        ((-2.0 * w + 9.0) * w - 12.0) * w + 5.0,
        -6.0 * (w - 1.0) * (w - 2.0),
    )
}

/// `int_1^u s(w) w^a dw` for the blend polynomial `s`.
fn blend_moment(u: f64, a: f64) -> f64 {
    const C: [(f64, f64); 4] = [(-2.0, 3.0), (9.0, 2.0), (-12.0, 1.0), (5.0, 0.0)];
    C.iter()
        .map(|&(c, n)| {
            let e = n + a + 1.0;
            c * (u.powf(e) - 1.0) / e
        })
        .sum()
}

/// Magnitude `R(u)` of the regularized power in knee units, `u >= 0`.
fn reg_power_mag(u: f64, p: f64) -> f64 {
    if u <= 1.0 {
        u
    } else if u <= 2.0 {
        u + blend_moment(u, p - 1.0) - blend_moment(u, 0.0)
    } else {
        reg_power_mag(2.0, p) + (u.powf(p) - 2f64.powf(p)) / p
    }
}

fn reg_power(x: f64, p: f64, knee: f64) -> (f64, f64, f64) {
    let u = x.abs() / knee;
    let sgn = x.signum();
    let r = sgn * knee * reg_power_mag(u, p);
    let (r1, r2u) = if u <= 1.0 {
        (1.0, 0.0)
    } else if u <= 2.0 {
        let (s, ds) = blend(u);
        let g = u.powf(p - 1.0);
        (1.0 + s * (g - 1.0), ds * (g - 1.0) + s * (p - 1.0) * g / u)
    } else {
        let g = u.powf(p - 1.0);
        (g, (p - 1.0) * g / u)
    };
    (r, r1, sgn * r2u / knee)
}

/// The initial impact trajectory `J^0`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum InitialImpact {
    #[default]
    Zero,
    Constant(f64),
    /// `a exp(-c t)`.
    Exponential { a: f64, c: f64 },
}

impl InitialImpact {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            InitialImpact::Zero => 0.0,
            InitialImpact::Constant(c) => c,
            InitialImpact::Exponential { a, c } => a * (-c * t).exp(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            InitialImpact::Zero | InitialImpact::Constant(_) => 0.0,
            InitialImpact::Exponential { a, c } => -c * a * (-c * t).exp(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, InitialImpact::Zero)
            || matches!(self, InitialImpact::Constant(c) if *c == 0.0)
            || matches!(self, InitialImpact::Exponential { a, .. } if *a == 0.0)
    }
}

/// Kernel, shape and initial trajectory of one asset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImpactSpec {
    pub kernel: KernelSpec,
    pub shape: ShapeSpec,
    pub j0: InitialImpact,
}

impl ImpactSpec {
    pub fn new(kernel: KernelSpec, shape: ShapeSpec) -> Self {
        Self {
            kernel,
            shape,
            j0: InitialImpact::Zero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.shape.validate()
    }
}

/// `b^J(t_k)` from the holdings history `q[0..=k]` on `grid`.
///
/// Uses the equivalent form
/// `J0' + d_tK(t,0) (Q(t) - Q(0)) - int d_stK(t,s) (Q(s) - Q(t)) ds`
/// with the integral by the trapezoidal rule. Only changes of `Q` enter, so
/// a constant history gives exactly zero whatever its level.
pub fn b_j_eval(spec: &ImpactSpec, grid: &[f64], q: &[f64], k: usize) -> Result<f64> {
    if k >= grid.len() || k >= q.len() {
        let t = grid.get(k).copied().unwrap_or(f64::NAN);
        return Err(Error::GridCoverage {
            t,
            msg: format!("need {} holdings values, have {}", k + 1, q.len().min(grid.len())),
        });
    }
    let t = grid[k];
    let qt = q[k];
    let kern = &spec.kernel;
    let mut integral = 0.0;
    for m in 0..k {
        let f0 = kern.eval_lag(t - grid[m]).dst * (q[m] - qt);
        let f1 = kern.eval_lag(t - grid[m + 1]).dst * (q[m + 1] - qt);
        integral += 0.5 * (grid[m + 1] - grid[m]) * (f0 + f1);
    }
    Ok(spec.j0.derivative(t) + kern.eval_lag(t).dt * (qt - q[0]) - integral)
}

/// Incremental `b^J` along a path being simulated.
///
/// Exponential components use a one-step recursion for the memory integral;
/// other kernels fall back to the full trapezoidal sum.
#[derive(Clone, Debug)]
pub struct BjTracker {
    spec: ImpactSpec,
    grid: Vec<f64>,
    q: Vec<f64>,
    /// `int_0^t exp(-beta (t - s)) Q(s) ds` by trapezoid.
    exp_mem: f64,
    /// `int_0^t exp(-beta (t - s)) ds` by the same trapezoid.
    exp_weight: f64,
}

impl BjTracker {
    pub fn new(spec: ImpactSpec) -> Self {
        Self {
            spec,
            grid: Vec::new(),
            q: Vec::new(),
            exp_mem: 0.0,
            exp_weight: 0.0,
        }
    }

    /// Appends the holdings value at time `t`.
    pub fn push(&mut self, t: f64, q: f64) {
        if let (Some(beta), Some(&t0), Some(&q0)) =
            (self.spec.kernel.exp_rate(), self.grid.last(), self.q.last())
        {
            let h = t - t0;
            let decay = (-beta * h).exp();
            self.exp_mem = decay * self.exp_mem + 0.5 * h * (decay * q0 + q);
            self.exp_weight = decay * self.exp_weight + 0.5 * h * (decay + 1.0);
        }
        self.grid.push(t);
        self.q.push(q);
    }

    /// `b^J` at the most recently pushed time.
    pub fn value(&self) -> f64 {
        let k = self.q.len() - 1;
        match self.spec.kernel.exp_rate() {
            Some(beta) => {
                let t = self.grid[k];
                let kern = &self.spec.kernel;
                let qt = self.q[k];
                self.spec.j0.derivative(t)
                    + kern.eval_lag(t).dt * (qt - self.q[0])
                    + beta * beta * (self.exp_mem - qt * self.exp_weight)
            }
            None => b_j_eval(&self.spec, &self.grid, &self.q, k).expect("tracker history is complete"),
        }
    }
}

/// Euler step `J + K(t,t) dQ + b^J dt`.
pub fn step_impact_state(spec: &ImpactSpec, j: f64, dq: f64, dt: f64, b_j: f64) -> f64 {
    j + spec.kernel.diag() * dq + b_j * dt
}

/// Exact decay between trades for a pure exponential kernel:
/// `J' - J^0(t+dt) = exp(-beta dt) (J - J^0(t)) + dQ`.
pub fn step_impact_state_exact(spec: &ImpactSpec, t: f64, j: f64, dq: f64, dt: f64) -> Option<f64> {
    match spec.kernel {
        KernelSpec::Exponential { beta } => {
            let j0 = &spec.j0;
            Some((-beta * dt).exp() * (j - j0.value(t)) + j0.value(t + dt) + dq)
        }
        _ => None,
    }
}

/// `I_i = h_i(t, J_i)` for every asset.
pub fn impact_from_state(specs: &[ImpactSpec], t: f64, j: &[f64]) -> Vec<f64> {
    specs.iter().zip(j).map(|(s, &x)| s.shape.eval(t, x).h).collect()
}

/// Linear impact coefficient for which a TWAP buying `adv_frac * adv`
/// shares per day over one day moves the day-average price by `target_bp`
/// basis points of `s0`, under an exponential kernel with rate `beta`.
pub fn calibrate_linear_lambda(s0: f64, target_bp: f64, adv_frac: f64, adv: f64, beta: f64) -> Result<f64> {
    for (name, v) in [("S0", s0), ("target_bp", target_bp), ("adv_frac", adv_frac), ("ADV", adv), ("beta", beta)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name}={v} must be positive")));
        }
    }
    Ok(s0 * target_bp * 1e-4 * beta * beta / (adv_frac * adv * (beta - 1.0 + (-beta).exp())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const LAMBDA: f64 = 6.08e-8;

    fn exp_spec(beta: f64) -> ImpactSpec {
        ImpactSpec::new(KernelSpec::Exponential { beta }, ShapeSpec::linear(LAMBDA))
    }

    #[test]
    fn kernel_examples() {
        let e = KernelSpec::Exponential { beta: 2.0 }.eval(3.0, 3.0).unwrap();
        assert_eq!(e.k, 1.0);
        assert_eq!(e.dt, -2.0);
        let p = KernelSpec::Permanent { c: 1.0 }.eval(5.0, 1.0).unwrap();
        assert_eq!((p.k, p.dt, p.ds, p.dst), (1.0, 0.0, 0.0, 0.0));
        let s = KernelSpec::ShiftedPower { epsilon: 1.0, beta: 0.5 }.eval(4.0, 1.0).unwrap();
        assert_relative_eq!(s.k, 0.5, max_relative = 1e-15);
        assert!(matches!(
            KernelSpec::Exponential { beta: 1.0 }.eval(1.0, 2.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn kernel_partials_match_finite_differences() {
        let h = 1e-5;
        for kern in [
            KernelSpec::Exponential { beta: 1.3 },
            KernelSpec::ShiftedPower { epsilon: 0.7, beta: 0.4 },
            KernelSpec::PermanentPlusExponential { c: 0.5, beta: 2.0 },
        ] {
            let (t, s) = (2.0, 0.9);
            let e = kern.eval(t, s).unwrap();
            let k = |t: f64, s: f64| kern.eval(t, s).unwrap().k;
            let dt = (k(t + h, s) - k(t - h, s)) / (2.0 * h);
            let ds = (k(t, s + h) - k(t, s - h)) / (2.0 * h);
            let dst = (k(t + h, s + h) - k(t + h, s - h) - k(t - h, s + h) + k(t - h, s - h)) / (4.0 * h * h);
            assert_relative_eq!(e.dt, dt, max_relative = 1e-8);
            assert_relative_eq!(e.ds, ds, max_relative = 1e-8);
            assert_relative_eq!(e.dst, dst, max_relative = 1e-5);
            assert!(e.dt <= 0.0 && e.ds >= 0.0 && e.k > 0.0);
        }
    }

    #[test]
    fn kernel_sup() {
        assert_eq!(KernelSpec::Exponential { beta: 2.0 }.sup(), 1.0);
        assert_relative_eq!(KernelSpec::ShiftedPower { epsilon: 0.25, beta: 0.5 }.sup(), 2.0);
        assert_eq!(KernelSpec::Permanent { c: 3.0 }.sup(), 3.0);
        assert_eq!(KernelSpec::PermanentPlusExponential { c: 3.0, beta: 1.0 }.sup(), 4.0);
    }

    #[test]
    fn shape_examples() {
        for s in [
            ShapeSpec::linear(2.0),
            ShapeSpec::asinh(2.0),
            ShapeSpec::regularized_power(2.0, 0.5, 1.0),
        ] {
            assert_eq!(s.eval(1.0, 0.0).h, 0.0);
        }
        assert_relative_eq!(ShapeSpec::linear(LAMBDA).eval(0.0, 1e6).h, 0.0608, max_relative = 1e-14);
        assert_relative_eq!(ShapeSpec::asinh(1.0).eval(0.0, 1.0).h, 0.881373587019543, max_relative = 1e-14);
        let lin = ShapeSpec::linear(3.0).with_phi(TimeFactor::Relaxing { start: 2.0, end: 1.0, rate: 0.5 });
        let e = lin.eval(1.0, 4.0);
        let lam_t = 3.0 * (1.0 + (-0.5f64).exp());
        let dlam_t = -3.0 * 0.5 * (-0.5f64).exp();
        assert_relative_eq!(e.h, lam_t * 4.0, max_relative = 1e-14);
        assert_relative_eq!(e.dt, dlam_t * 4.0, max_relative = 1e-14);
        assert_relative_eq!(e.dx, lam_t, max_relative = 1e-14);
        assert_eq!(e.dxx, 0.0);
    }

    #[test]
    fn regularized_power_pieces() {
        let s = ShapeSpec::regularized_power(1.0, 0.5, 2.0);
        // linear inside the knee
        assert_eq!(s.hat(1.5), (1.5, 1.0, 0.0));
        // pure power growth past twice the knee: slope (x/knee)^(p-1)
        let (_, d1, _) = s.hat(10.0);
        assert_relative_eq!(d1, 5f64.powf(-0.5), max_relative = 1e-14);
        // value is the integral of the slope
        let n = 20000;
        let x = 7.0;
        let h = x / n as f64;
        let quad: f64 = (0..n)
            .map(|i| {
                let a = s.hat(i as f64 * h).1;
                let m = s.hat((i as f64 + 0.5) * h).1;
                let b = s.hat((i + 1) as f64 * h).1;
                h * (a + 4.0 * m + b) / 6.0
            })
            .sum();
        assert_relative_eq!(s.hat(x).0, quad, max_relative = 1e-10);
    }

    #[test]
    fn regularized_power_is_c2_at_the_joins() {
        let s = ShapeSpec::regularized_power(1.0, 0.4, 1.0);
        for x in [1.0, 2.0, -1.0, -2.0] {
            let e = 1e-9;
            let (a0, a1, a2) = s.hat(x - e);
            let (b0, b1, b2) = s.hat(x + e);
            assert!((a0 - b0).abs() < 1e-8);
            assert!((a1 - b1).abs() < 1e-8);
            assert!((a2 - b2).abs() < 1e-7);
        }
    }

    #[test]
    fn shape_derivatives_match_finite_differences() {
        let h = 1e-5;
        let specs = [
            ShapeSpec::asinh(1.7).with_phi(TimeFactor::Relaxing { start: 1.5, end: 0.5, rate: 0.3 }),
            ShapeSpec::regularized_power(1.2, 0.6, 0.8),
            ShapeSpec::regularized_power(1.2, 1.5, 0.8),
        ];
        for s in specs {
            for x in [-3.1, -1.3, -0.4, 0.3, 1.2, 1.9, 4.4] {
                let t = 0.7;
                let e = s.eval(t, x);
                let dx = (s.eval(t, x + h).h - s.eval(t, x - h).h) / (2.0 * h);
                let dxx = (s.eval(t, x + h).dx - s.eval(t, x - h).dx) / (2.0 * h);
                let dt = (s.eval(t + h, x).h - s.eval(t - h, x).h) / (2.0 * h);
                assert!((e.dx - dx).abs() < 1e-8 * (1.0 + dx.abs()));
                assert!((e.dxx - dxx).abs() < 1e-7 * (1.0 + dxx.abs()));
                assert!((e.dt - dt).abs() < 1e-8 * (1.0 + dt.abs()));
            }
        }
    }

    #[test]
    fn pseudo_inverse() {
        assert_relative_eq!(ShapeSpec::linear(2.0).hat_inverse(3.0), 1.5);
        assert_relative_eq!(ShapeSpec::asinh(2.0).hat_inverse(-1.0), (-0.5f64).sinh());
        let r = ShapeSpec::regularized_power(0.3, 0.5, 1.5);
        for y in [-4.0, -0.2, 0.1, 0.9, 12.0] {
            let x = r.hat_inverse(y);
            assert!((r.hat(x).0 - y).abs() < 1e-10 * y.abs().max(1.0));
        }
        assert_eq!(ShapeSpec::zero().hat_inverse(1.0), f64::INFINITY);
        assert_eq!(ShapeSpec::zero().hat_inverse(-1.0), f64::NEG_INFINITY);
        assert_eq!(ShapeSpec::regularized_power(1.0, 2.0, 1.0).hat_slope_sup(), f64::INFINITY);
        assert_eq!(ShapeSpec::regularized_power(1.5, 0.5, 1.0).hat_slope_sup(), 1.5);
    }

    #[test]
    fn lambda_calibration() {
        let l = calibrate_linear_lambda(15.0, 11.5, 0.01, 1e8, 2.0).unwrap();
        assert!((l / 6.08e-8 - 1.0).abs() < 5e-3, "lambda = {l}");
        let l2 = calibrate_linear_lambda(15.0, 11.5, 0.01, 2e8, 2.0).unwrap();
        assert_relative_eq!(l2, l / 2.0, max_relative = 1e-14);
        // independent check: day-average of lambda J(t) for the TWAP state
        let beta = 2.0;
        let n = 100_000;
        let avg: f64 = (0..n)
            .map(|i| {
                let t = (i as f64 + 0.5) / n as f64;
                l * 0.01 * 1e8 / beta * (1.0 - (-beta * t).exp())
            })
            .sum::<f64>()
            / n as f64;
        assert_relative_eq!(avg, 15.0 * 11.5e-4, max_relative = 1e-9);
        // large beta: lambda ~ S0 bp beta / (adv_frac ADV)
        let b = 1e6;
        let lb = calibrate_linear_lambda(15.0, 11.5, 0.01, 1e8, b).unwrap();
        assert_relative_eq!(lb, 15.0 * 11.5e-4 * b / 1e6, max_relative = 1e-5);
        assert!(calibrate_linear_lambda(0.0, 11.5, 0.01, 1e8, 2.0).is_err());
    }

    #[test]
    fn permanent_kernel_drift_is_j0_derivative() {
        let mut spec = ImpactSpec::new(KernelSpec::Permanent { c: 1.0 }, ShapeSpec::linear(1.0));
        let grid: Vec<f64> = (0..10).map(|k| k as f64 * 0.5).collect();
        let q: Vec<f64> = grid.iter().map(|t| t.sin()).collect();
        assert_eq!(b_j_eval(&spec, &grid, &q, 9).unwrap(), 0.0);
        spec.j0 = InitialImpact::Exponential { a: 2.0, c: 0.5 };
        assert_relative_eq!(b_j_eval(&spec, &grid, &q, 4).unwrap(), -(-1.0f64).exp());
        assert!(matches!(b_j_eval(&spec, &grid, &q[..3], 4), Err(Error::GridCoverage { .. })));
    }

    #[test]
    fn constant_holdings_have_zero_drift() {
        let spec = exp_spec(2.0);
        let grid: Vec<f64> = (0..=200).map(|k| k as f64 * 0.01).collect();
        let q = vec![3.0; grid.len()];
        let b = b_j_eval(&spec, &grid, &q, 200).unwrap();
        // trapezoid error only
        assert!(b.abs() < 1e-4 * 3.0, "b = {b}");
    }

    #[test]
    fn tracker_matches_direct_sum() {
        for kernel in [
            KernelSpec::Exponential { beta: 1.5 },
            KernelSpec::PermanentPlusExponential { c: 0.3, beta: 1.5 },
            KernelSpec::ShiftedPower { epsilon: 0.5, beta: 0.6 },
        ] {
            let spec = ImpactSpec::new(kernel, ShapeSpec::linear(1.0));
            let grid: Vec<f64> = (0..60).map(|k| k as f64 * 0.25).collect();
            let q: Vec<f64> = grid.iter().map(|t| 100.0 * (0.3 * t).sin() + t * t).collect();
            let mut tr = BjTracker::new(spec);
            for k in 0..grid.len() {
                tr.push(grid[k], q[k]);
                let direct = b_j_eval(&spec, &grid, &q, k).unwrap();
                assert!((tr.value() - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
            }
        }
    }

    #[test]
    fn exponential_drift_tracks_minus_beta_j() {
        // piecewise-linear Q; J from exact decay; b^J + beta J shrinks with dt
        let beta = 2.0;
        let spec = exp_spec(beta);
        let qf = |t: f64| if t < 1.0 { 5.0 * t } else { 5.0 - 2.0 * (t - 1.0) };
        let gap = |dt: f64| {
            let m = (3.0 / dt).round() as usize;
            let grid: Vec<f64> = (0..=m).map(|k| k as f64 * dt).collect();
            let q: Vec<f64> = grid.iter().map(|&t| qf(t)).collect();
            // J(t) = int_0^t exp(-beta(t-s)) Q'(s) ds in closed form
            let j = |t: f64| {
                let a = t.min(1.0);
                let mut v = 5.0 / beta * ((-beta * (t - a)).exp() - (-beta * t).exp());
                if t > 1.0 {
                    v += -2.0 / beta * (1.0 - (-beta * (t - 1.0)).exp());
                }
                v
            };
            (1..=m)
                .map(|k| (b_j_eval(&spec, &grid, &q, k).unwrap() + beta * j(grid[k])).abs())
                .fold(0.0, f64::max)
        };
        let g1 = gap(0.02);
        let g2 = gap(0.01);
        assert!(g1 < 0.2 && g2 < 0.6 * g1, "g1={g1} g2={g2}");
    }

    #[test]
    fn exact_step_and_generic_step() {
        let spec = exp_spec(2.0);
        assert_relative_eq!(step_impact_state_exact(&spec, 0.0, 1.0, 0.0, 0.5).unwrap(), (-1.0f64).exp());
        let perm = ImpactSpec::new(KernelSpec::Permanent { c: 1.0 }, ShapeSpec::linear(1.0));
        assert_eq!(step_impact_state(&perm, 4.0, 0.0, 0.5, 0.0), 4.0);
        assert!(step_impact_state_exact(&perm, 0.0, 1.0, 0.0, 0.5).is_none());
    }

    #[test]
    fn twap_state_converges() {
        let beta = 2.0;
        let rate = 0.01 * 1e8;
        let spec = exp_spec(beta);
        let run = |dt: f64| {
            let m = (1.0 / dt).round() as usize;
            let mut j = 0.0;
            for k in 0..m {
                j = step_impact_state_exact(&spec, k as f64 * dt, j, rate * dt, dt).unwrap();
            }
            (j - rate / beta * (1.0 - (-beta * 1.0f64).exp())).abs() / (rate / beta)
        };
        let e1 = run(0.01);
        let e2 = run(0.005);
        assert!(e1 < 0.02 && e2 < 0.6 * e1, "e1={e1} e2={e2}");
    }

    #[test]
    fn impact_examples() {
        let specs = [exp_spec(2.0), exp_spec(2.0)];
        assert_eq!(impact_from_state(&specs, 0.0, &[0.0, 0.0]), vec![0.0, 0.0]);
        let i = impact_from_state(&specs, 0.0, &[5e5, -5e5]);
        assert_relative_eq!(i[0], 0.0304, max_relative = 1e-14);
        assert_relative_eq!(i[1], -0.0304, max_relative = 1e-14);
    }

    fn any_shape() -> impl Strategy<Value = ShapeSpec> {
        (0usize..3, 0.01f64..5.0, 0.1f64..1.0, 0.1f64..3.0, 0.0f64..3.0, 0.0f64..3.0, 0.0f64..2.0).prop_map(
            |(k, lambda, p, knee, a, b, r)| {
                let base = match k {
                    0 => ShapeSpec::linear(lambda),
                    1 => ShapeSpec::asinh(lambda),
                    _ => ShapeSpec::regularized_power(lambda, p, knee),
                };
                base.with_phi(TimeFactor::Relaxing { start: a, end: b, rate: r })
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn shape_sign_and_monotonicity(s in any_shape(), t in 0.0f64..100.0, x in -1e3f64..1e3, dx in 0.0f64..10.0) {
            let e = s.eval(t, x);
            prop_assert!(e.h * x >= 0.0);
            prop_assert!(e.dx >= 0.0);
            prop_assert!(s.eval(t, x + dx).h >= e.h);
            prop_assert!(e.dx <= s.phi_sup() * s.hat_slope_sup() * (1.0 + 1e-12));
        }

        #[test]
        fn more_buying_raises_later_state(extra in 0.0f64..10.0, at in 0usize..20) {
            let spec = ImpactSpec::new(KernelSpec::ShiftedPower { epsilon: 0.5, beta: 0.5 }, ShapeSpec::linear(1.0));
            let dt = 0.1;
            let run = |bump: f64| {
                let mut tr = BjTracker::new(spec);
                let mut q = 0.0;
                let mut j = 0.0;
                let mut out = Vec::new();
                tr.push(0.0, q);
                for k in 0..20 {
                    let dq = 1.0 + if k == at { bump } else { 0.0 };
                    j = step_impact_state(&spec, j, dq, dt, tr.value());
                    q += dq;
                    tr.push((k + 1) as f64 * dt, q);
                    out.push(j);
                }
                out
            };
            let base = run(0.0);
            let bumped = run(extra);
            for (a, b) in base.iter().zip(&bumped) {
                prop_assert!(b + 1e-9 >= *a);
            }
        }
    }
}
