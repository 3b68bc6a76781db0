//! Flat `section.key=value` experiment configuration.
//!
//! Lines are trimmed, blank lines and lines starting with `#` are ignored.
//! Every key not listed in [`KEYS`] or matching `impact.<asset>.<key>` is an
//! error. Defaults reproduce the desk-scale two-asset experiment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::generating::{AdditiveG, Family, GeneratorSpec, Ramp};
use crate::impact::{calibrate_linear_lambda, ImpactSpec, InitialImpact, KernelSpec, ShapeSpec, TimeFactor};
use crate::relarb::{self, FrictionlessConstants};
use crate::simulator::{Experiment, JScheme, Model, QvMode, SimConfig};

/// Recognized keys outside the per-asset impact overrides.
pub const KEYS: &[&str] = &[
    "market.N",
    "market.mu0",
    "market.mu_bar",
    "market.alpha",
    "market.eta",
    "market.delta_S",
    "market.cap0",
    "market.eps_S",
    "market.zeta",
    "market.kappa_S",
    "market.w",
    "impact.kernel",
    "impact.beta",
    "impact.epsilon",
    "impact.c",
    "impact.shape",
    "impact.lambda",
    "impact.p",
    "impact.knee",
    "impact.phi",
    "impact.j0",
    "generator.family",
    "generator.nu",
    "generator.p",
    "generator.weights",
    "generator.ramp",
    "generator.T0",
    "generator.T1",
    "generator.T",
    "sim.dt",
    "sim.horizon",
    "sim.mu_floor",
    "sim.cap_floor",
    "sim.cap_ceiling",
    "sim.record_stride",
    "sim.qv",
    "sim.j_scheme",
    "sim.track_eigen",
    "sim.paths",
    "sim.seed",
    "sim.threads",
    "relarb.ell_S",
    "relarb.sigma2_S",
    "relarb.theta",
    "relarb.adv",
    "relarb.adv_frac",
    "relarb.target_bp",
    "output.dir",
    "output.path_csv_cap",
];

/// Keys that may be overridden per asset as `impact.<i>.<key>` (1-based).
const IMPACT_KEYS: &[&str] = &["kernel", "beta", "epsilon", "c", "shape", "lambda", "p", "knee", "phi", "j0"];

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub constants: FrictionlessConstants,
    pub theta: f64,
    pub paths: usize,
    pub seed: u64,
    pub threads: usize,
    pub output_dir: PathBuf,
    pub path_csv_cap: usize,
    /// Hex SHA-256 of the sorted, normalized `key=value` lines.
    pub digest: String,
}

struct Raw {
    map: BTreeMap<String, String>,
}

fn type_err(key: &str, want: &str, v: &str) -> Error {
    Error::config(key, format!("expected {want}, got `{v}`"))
}

impl Raw {
    fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| type_err(key, "a finite number", v)),
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| type_err(key, "a non-negative integer", v)),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "on" | "1") => Ok(true),
            Some("false" | "off" | "0") => Ok(false),
            Some(v) => Err(type_err(key, "true or false", v)),
        }
    }

    fn list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|x| x.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| type_err(key, "a comma-separated list of numbers", v)),
        }
    }

    /// Per-asset value, falling back to the shared `impact.<key>`.
    fn impact_key(&self, asset: usize, key: &str) -> (String, Option<&str>) {
        let own = format!("impact.{}.{key}", asset + 1);
        if let Some(v) = self.get(&own) {
            return (own, Some(v));
        }
        let shared = format!("impact.{key}");
        let v = self.get(&shared);
        (shared, v)
    }

    fn impact_f64(&self, asset: usize, key: &str, default: f64) -> Result<f64> {
        let (k, v) = self.impact_key(asset, key);
        match v {
            None => Ok(default),
            Some(v) => v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| type_err(&k, "a finite number", v)),
        }
    }
}

fn known(key: &str, d_hint: usize) -> bool {
    if KEYS.contains(&key) {
        return true;
    }
    let parts: Vec<&str> = key.split('.').collect();
    parts.len() == 3
        && parts[0] == "impact"
        && parts[1].parse::<usize>().is_ok_and(|i| i >= 1 && i <= d_hint)
        && IMPACT_KEYS.contains(&parts[2])
}

fn check(key: &str, ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, msg))
    }
}

/// Parses configuration text. All validation happens here, before any
/// simulation.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::config(format!("line {}", idx + 1), format!("expected key=value, got `{line}`"))
        })?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if map.insert(k.clone(), v).is_some() {
            return Err(Error::config(k, "duplicate key"));
        }
    }
    let raw = Raw { map };
    let desk = relarb::desk_experiment();

    let n = raw.list_or("market.N", &desk.market.n)?;
    let d = n.len();
    if let Some(bad) = raw.map.keys().find(|k| !known(k, d)) {
        return Err(Error::config(bad.clone(), "unknown key"));
    }
    check("market.N", d >= 2, "need at least two assets")?;
    check("market.N", n.iter().all(|&x| x > 0.0), "share counts must be positive")?;

    // Market.
    let mut market = desk.market.clone();
    market.d = d;
    market.n = n.clone();
    market.mu0 = raw.list_or("market.mu0", &vec![1.0 / d as f64; d])?;
    check("market.mu0", market.mu0.len() == d, "needs one weight per asset")?;
    market.mu_bar = raw.f64_or("market.mu_bar", market.mu_bar)?;
    market.alpha = raw.f64_or("market.alpha", market.alpha)?;
    market.eta = raw.f64_or("market.eta", market.eta)?;
    market.delta_s = raw.f64_or("market.delta_S", market.delta_s)?;
    check("market.delta_S", market.delta_s > 0.0 && market.delta_s < 0.5, "must lie in (0, 1/2)")?;
    market.cap0 = raw.f64_or("market.cap0", market.cap0)?;
    market.eps_s = raw.f64_or("market.eps_S", market.eps_s)?;
    check("market.eps_S", market.eps_s > 0.0, "must be positive")?;
    market.zeta = raw.f64_or("market.zeta", 2.0 * market.eps_s + 1.0)?;
    market.kappa_s = raw.f64_or("market.kappa_S", market.kappa_s)?;
    market.validate().map_err(|e| Error::config("market", e.to_string()))?;
    let w = raw.f64_or("market.w", desk.model.w)?;
    check("market.w", w > 0.0, "must be positive")?;

    // Relarb inputs, needed by lambda=auto.
    let adv = raw.f64_or("relarb.adv", relarb::DESK_ADV)?;
    let adv_frac = raw.f64_or("relarb.adv_frac", relarb::DESK_ADV_FRAC)?;
    let target_bp = raw.f64_or("relarb.target_bp", relarb::DESK_TARGET_BP)?;
    let s0 = market.initial_prices();

    let mut impacts = Vec::with_capacity(d);
    for i in 0..d {
        impacts.push(parse_impact(&raw, i, s0[i], adv, adv_frac, target_bp)?);
    }

    let generator = parse_generator(&raw, d)?;

    let dt = raw.f64_or("sim.dt", desk.sim.dt)?;
    let default_horizon = generator.ramp.map_or(desk.sim.horizon, |r| r.t + 21.0);
    let qv = match raw.get("sim.qv").unwrap_or("realized") {
        "realized" => QvMode::Realized,
        "analytic" => QvMode::Analytic(market.clone()),
        v => return Err(type_err("sim.qv", "realized or analytic", v)),
    };
    let sim = SimConfig {
        dt,
        horizon: raw.f64_or("sim.horizon", default_horizon)?,
        mu_floor: raw.f64_or("sim.mu_floor", desk.sim.mu_floor)?,
        cap_floor: raw.f64_or("sim.cap_floor", desk.sim.cap_floor)?,
        cap_ceiling: raw.f64_or("sim.cap_ceiling", desk.sim.cap_ceiling)?,
        record_stride: raw.usize_or("sim.record_stride", 1)?,
        qv,
        j_scheme: match raw.get("sim.j_scheme").unwrap_or("euler") {
            "exact_decay" => JScheme::ExactDecay,
            "euler" => JScheme::Euler,
            v => return Err(type_err("sim.j_scheme", "exact_decay or euler", v)),
        },
        track_eigen: raw.bool_or("sim.track_eigen", false)?,
    };
    sim.validate().map_err(|e| Error::config("sim", e.to_string()))?;
    check("sim.dt", (sim.horizon / dt - (sim.horizon / dt).round()).abs() < 1e-9, "horizon must be a whole number of steps")?;

    let constants = FrictionlessConstants {
        delta_s: market.delta_s,
        eps_s: market.eps_s,
        sigma2_s: raw.f64_or("relarb.sigma2_S", market.sigma2_s())?,
        kappa_s: market.kappa_s,
        ell_s: raw.f64_or("relarb.ell_S", market.delta_s)?,
    };
    constants.validate(d).map_err(|e| Error::config("relarb", e.to_string()))?;
    let theta = raw.f64_or("relarb.theta", 1.0)?;
    check("relarb.theta", theta > 0.0, "must be positive")?;

    let experiment = Experiment {
        market,
        model: Model {
            n,
            w,
            impacts,
            generator,
        },
        sim,
    };
    experiment.validate().map_err(|e| Error::config("experiment", e.to_string()))?;

    let path_csv_cap = raw.usize_or("output.path_csv_cap", 10)?;
    Ok(ExperimentConfig {
        experiment,
        constants,
        theta,
        paths: raw.usize_or("sim.paths", 100)?,
        seed: raw
            .get("sim.seed")
            .map(|v| v.parse().map_err(|_| type_err("sim.seed", "a non-negative integer", v)))
            .transpose()?
            .unwrap_or(42),
        threads: raw.usize_or("sim.threads", 0)?,
        output_dir: PathBuf::from(raw.get("output.dir").unwrap_or("out")),
        path_csv_cap,
        digest: digest(&raw.map),
    })
}

fn digest(map: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in map {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

fn parse_impact(raw: &Raw, i: usize, s0: f64, adv: f64, adv_frac: f64, target_bp: f64) -> Result<ImpactSpec> {
    let (kkey, kind) = raw.impact_key(i, "kernel");
    let beta = raw.impact_f64(i, "beta", relarb::DESK_BETA)?;
    let kernel = match kind.unwrap_or("exponential") {
        "exponential" => KernelSpec::Exponential { beta },
        "shifted_power" => KernelSpec::ShiftedPower {
            epsilon: raw.impact_f64(i, "epsilon", 1.0)?,
            beta,
        },
        "permanent" => KernelSpec::Permanent {
            c: raw.impact_f64(i, "c", 1.0)?,
        },
        "permanent_plus_exponential" => KernelSpec::PermanentPlusExponential {
            c: raw.impact_f64(i, "c", 1.0)?,
            beta,
        },
        "power" => {
            return Err(Error::config(
                kkey,
                "the unshifted power kernel is singular at zero lag; use shifted_power",
            ))
        }
        v => return Err(type_err(&kkey, "exponential, shifted_power, permanent or permanent_plus_exponential", v)),
    };
    kernel.validate().map_err(|e| Error::config(kkey.clone(), e.to_string()))?;

    let (lkey, lval) = raw.impact_key(i, "lambda");
    let lambda = match lval {
        None | Some("auto") => {
            let KernelSpec::Exponential { beta } = kernel else {
                return Err(Error::config(lkey, "lambda=auto needs an exponential kernel"));
            };
            calibrate_linear_lambda(s0, target_bp, adv_frac, adv, beta).map_err(|e| Error::config(lkey, e.to_string()))?
        }
        Some(v) => v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| type_err(&lkey, "a number or auto", v))?,
    };
    let (skey, sval) = raw.impact_key(i, "shape");
    let mut shape = match sval.unwrap_or("linear") {
        "linear" => ShapeSpec::linear(lambda),
        "asinh" => ShapeSpec::asinh(lambda),
        "regularized_power" => {
            ShapeSpec::regularized_power(lambda, raw.impact_f64(i, "p", 0.5)?, raw.impact_f64(i, "knee", 1e6)?)
        }
        "zero" => ShapeSpec::zero(),
        v => return Err(type_err(&skey, "linear, asinh, regularized_power or zero", v)),
    };
    shape = shape.with_phi(TimeFactor::Constant(raw.impact_f64(i, "phi", 1.0)?));
    let mut spec = ImpactSpec::new(kernel, shape);
    let j0 = raw.impact_f64(i, "j0", 0.0)?;
    if j0 != 0.0 {
        spec.j0 = InitialImpact::Constant(j0);
    }
    spec.validate().map_err(|e| Error::config(skey, e.to_string()))?;
    Ok(spec)
}

fn parse_generator(raw: &Raw, d: usize) -> Result<GeneratorSpec> {
    let family = match raw.get("generator.family").unwrap_or("quadratic") {
        "market" => Family::ConstantOne,
        "quadratic" => Family::Quadratic,
        "entropy" => Family::Entropy,
        "diversity" => Family::DiversityP {
            p: raw.f64_or("generator.p", 0.5)?,
        },
        "geometric_mean" => Family::GeometricMean {
            weights: raw.list_or("generator.weights", &vec![1.0 / d as f64; d])?,
        },
        "power" => Family::AdditivelySymmetric(AdditiveG::Power {
            p: raw.f64_or("generator.p", 0.5)?,
        }),
        v => {
            return Err(type_err(
                "generator.family",
                "market, quadratic, entropy, diversity, geometric_mean or power",
                v,
            ))
        }
    };
    let mut g = GeneratorSpec::new(family).with_nu(raw.f64_or("generator.nu", relarb::DESK_NU)?);
    if raw.bool_or("generator.ramp", true)? {
        let t0 = raw.f64_or("generator.T0", relarb::DESK_T0)?;
        let t1 = raw.f64_or("generator.T1", relarb::DESK_T1)?;
        let t = raw.f64_or("generator.T", relarb::DESK_T)?;
        g = g.with_ramp(Ramp::new(t0, t1, t).map_err(|e| Error::config("generator.T0", e.to_string()))?);
    }
    g.validate(d).map_err(|e| Error::config("generator", e.to_string()))?;
    Ok(g)
}

pub fn parse_config(file: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(file).map_err(|e| Error::config(file.display().to_string(), e.to_string()))?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_desk_experiment() {
        let c = parse_config_str("# nothing\n\n").unwrap();
        let desk = relarb::desk_experiment();
        assert_eq!(c.experiment.market, desk.market);
        assert_eq!(c.experiment.model.impacts, desk.model.impacts);
        assert_eq!(c.experiment.sim, desk.sim);
        assert!(relarb::desk_mismatches(&c.experiment).is_empty());
        assert_eq!(c.path_csv_cap, 10);
    }

    #[test]
    fn diversity_constraint() {
        let e = parse_config_str("market.delta_S=0.6").unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "market.delta_S"));
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn unshifted_power_kernel_rejected() {
        let e = parse_config_str("impact.1.kernel=power").unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "impact.1.kernel"));
    }

    #[test]
    fn unknown_and_malformed_keys() {
        assert!(matches!(parse_config_str("market.gamma=1"), Err(Error::Config { .. })));
        assert!(matches!(parse_config_str("impact.3.beta=1"), Err(Error::Config { .. })));
        assert!(matches!(parse_config_str("market.alpha=abc"), Err(Error::Config { .. })));
        assert!(matches!(parse_config_str("market.alpha"), Err(Error::Config { .. })));
        assert!(matches!(parse_config_str("sim.dt=1\nsim.dt=2"), Err(Error::Config { .. })));
    }

    #[test]
    fn per_asset_override() {
        let c = parse_config_str("impact.lambda=1e-8\nimpact.2.shape=asinh\nimpact.2.lambda=2e-8").unwrap();
        let imp = &c.experiment.model.impacts;
        assert_eq!(imp[0].shape, ShapeSpec::linear(1e-8));
        assert_eq!(imp[1].shape, ShapeSpec::asinh(2e-8));
    }

    #[test]
    fn digest_ignores_order_and_comments() {
        let a = parse_config_str("sim.paths=3\nmarket.alpha=0.01\n").unwrap();
        let b = parse_config_str("# c\nmarket.alpha = 0.01\n  sim.paths=3").unwrap();
        let c = parse_config_str("sim.paths=4\nmarket.alpha=0.01\n").unwrap();
        assert_eq!(a.digest, b.digest);
        assert_ne!(a.digest, c.digest);
    }

    #[test]
    fn auto_lambda_needs_exponential_kernel() {
        assert!(parse_config_str("impact.kernel=permanent").is_err());
        assert!(parse_config_str("impact.kernel=permanent\nimpact.lambda=1e-8").is_ok());
    }
}
