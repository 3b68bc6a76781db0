//! Stochastic portfolio theory with nonlinear, decaying price impact.
//!
//! A fundamental price path `S` drives the coupled system of observed prices
//! `P`, holdings `Q` and impact state `J` of an investor trading an additively
//! generated strategy. The crate simulates that system, decomposes the
//! investor's relative wealth with the master formula, and computes the
//! relative-arbitrage constants for the model.
//!
//! Start with the runnable programs in `examples/`.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod accounting;
pub mod coefficients;
pub mod config;
pub mod error;
pub mod fundamental;
pub mod generating;
pub mod impact;
pub mod linalg;
pub mod output;
pub mod relarb;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};

/// Market weights `N_i p_i / sum_j N_j p_j`.
pub fn market_weights(p: &[f64], n: &[f64]) -> Vec<f64> {
    let cap = total_cap(p, n);
    p.iter().zip(n).map(|(x, m)| m * x / cap).collect()
}

/// Total capitalization `sum_i N_i p_i`.
pub fn total_cap(p: &[f64], n: &[f64]) -> f64 {
    p.iter().zip(n).map(|(x, m)| m * x).sum()
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}
