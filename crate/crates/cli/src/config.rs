//! Run configuration: a TOML file with flat sections.
//!
//! ```toml
//! seed = 42
//!
//! [scenario]
//! name = "rigid_body"
//! horizon = 10.0
//! inertia = [1.0, 1.0, 3.0]   # scenario parameters; anything omitted keeps its default
//! gamma = 0.05
//!
//! [integrator]
//! method = "rk4"              # or "rk45_adaptive"
//! step = 1e-3
//! rel_tol = 1e-8
//! abs_tol = 1e-10
//! max_steps = 10000000
//!
//! [output]
//! prefix = "out/rigid_body"
//!
//! [checks]
//! elh_residual = 1e-5         # check name = tolerance, or `true` for the default tolerance
//! energy_decay = 1e-6
//! ```
//!
//! Unknown keys produce warnings; they never abort the run.

use std::collections::BTreeSet;
use std::path::PathBuf;

use herglotz_core::dynamics::{IntegratorConfig, Method};
use herglotz_core::scenarios::{
    hamel_scenario, magnetic_scenario, rayleigh_scenario, rigid_body_action_scenario, rigid_body_scenario, thermoviscous_scenario,
    wong_scenario, HamelParams, MagneticParams, RayleighParams, RigidBodyParams, Scenario, ThermoviscousParams, WongParams,
    DEFAULT_ACTION_X0, SCENARIO_NAMES,
};
use toml::{Table, Value};

use crate::checks::{CheckKind, CheckSpec};
use crate::CliError;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scenario: String,
    pub params: Table,
    pub horizon: Option<f64>,
    pub integrator: IntegratorConfig,
    pub output_prefix: PathBuf,
    /// Explicitly requested checks; `None` if the file has no `[checks]` section.
    pub checks: Option<Vec<CheckSpec>>,
    pub seed: u64,
    pub warnings: Vec<String>,
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn as_f64(v: &Value, key: &str) -> Result<f64, CliError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(cfg_err(format!("'{key}' must be a number"))),
    }
}

fn as_vec(v: &Value, key: &str) -> Result<Vec<f64>, CliError> {
    match v {
        Value::Array(items) => items.iter().map(|x| as_f64(x, key)).collect(),
        _ => Err(cfg_err(format!("'{key}' must be an array of numbers"))),
    }
}

fn section<'a>(root: &'a Table, name: &str) -> Result<Option<&'a Table>, CliError> {
    match root.get(name) {
        None => Ok(None),
        Some(Value::Table(t)) => Ok(Some(t)),
        Some(_) => Err(cfg_err(format!("'{name}' must be a section"))),
    }
}

fn warn_unknown(t: &Table, known: &[&str], where_: &str, warnings: &mut Vec<String>) {
    for k in t.keys() {
        if !known.contains(&k.as_str()) {
            warnings.push(format!("unknown key '{k}' in {where_} ignored"));
        }
    }
}

/// Parses and validates a configuration, filling in defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| cfg_err(format!("malformed config: {}", e.message())))?;
    let mut warnings = Vec::new();
    warn_unknown(&root, &["seed", "scenario", "integrator", "output", "checks"], "top level", &mut warnings);

    let seed = match root.get("seed") {
        None => DEFAULT_SEED,
        Some(Value::Integer(i)) if *i >= 0 => *i as u64,
        Some(_) => return Err(cfg_err("'seed' must be a non-negative integer")),
    };

    let scen = section(&root, "scenario")?.ok_or_else(|| cfg_err("missing [scenario] section"))?;
    let name = match scen.get("name") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(cfg_err("'scenario.name' must be a string")),
        None => return Err(cfg_err("missing 'scenario.name'")),
    };
    if !SCENARIO_NAMES.contains(&name.as_str()) {
        return Err(cfg_err(format!("unknown scenario '{name}' (known: {})", SCENARIO_NAMES.join(", "))));
    }
    let horizon = scen.get("horizon").map(|v| as_f64(v, "horizon")).transpose()?;
    if let Some(h) = horizon {
        if !(h > 0.0 && h.is_finite()) {
            return Err(cfg_err(format!("horizon must be positive, got {h}")));
        }
    }
    let mut params = scen.clone();
    params.remove("name");
    params.remove("horizon");

    let mut integrator = IntegratorConfig::default();
    if let Some(t) = section(&root, "integrator")? {
        warn_unknown(t, &["method", "step", "rel_tol", "abs_tol", "max_steps"], "[integrator]", &mut warnings);
        if let Some(v) = t.get("method") {
            integrator.method = match v.as_str() {
                Some("rk4") => Method::Rk4,
                Some("rk45_adaptive") | Some("rk45") => Method::Rk45Adaptive,
                _ => return Err(cfg_err("'integrator.method' must be \"rk4\" or \"rk45_adaptive\"")),
            };
        }
        if let Some(v) = t.get("step") {
            integrator.step = as_f64(v, "step")?;
        }
        if let Some(v) = t.get("rel_tol") {
            integrator.rel_tol = as_f64(v, "rel_tol")?;
        }
        if let Some(v) = t.get("abs_tol") {
            integrator.abs_tol = as_f64(v, "abs_tol")?;
        }
        if let Some(v) = t.get("max_steps") {
            integrator.max_steps = match v {
                Value::Integer(i) if *i > 0 => *i as usize,
                _ => return Err(cfg_err("'max_steps' must be a positive integer")),
            };
        }
    }
    integrator.validate().map_err(|e| cfg_err(e.to_string()))?;

    let mut output_prefix = PathBuf::from(format!("herglotz_{name}"));
    if let Some(t) = section(&root, "output")? {
        warn_unknown(t, &["prefix"], "[output]", &mut warnings);
        match t.get("prefix") {
            Some(Value::String(s)) => output_prefix = PathBuf::from(s),
            Some(_) => return Err(cfg_err("'output.prefix' must be a string")),
            None => {}
        }
    }

    let checks = match section(&root, "checks")? {
        None => None,
        Some(t) => {
            let mut out = Vec::new();
            for (k, v) in t {
                let kind = CheckKind::from_name(k).ok_or_else(|| {
                    cfg_err(format!(
                        "unknown check '{k}' (known: {})",
                        CheckKind::ALL.iter().map(|c| c.name()).collect::<Vec<_>>().join(", ")
                    ))
                })?;
                let tolerance = match v {
                    Value::Boolean(true) => kind.default_tolerance(),
                    Value::Boolean(false) => continue,
                    other => as_f64(other, k)?,
                };
                if !(tolerance >= 0.0 && tolerance.is_finite()) {
                    return Err(cfg_err(format!("tolerance for '{k}' must be a non-negative number")));
                }
                out.push(CheckSpec { kind, tolerance });
            }
            Some(out)
        }
    };

    let cfg = RunConfig {
        scenario: name,
        params,
        horizon,
        integrator,
        output_prefix,
        checks,
        seed,
        warnings,
    };
    // surface parameter errors and unknown parameter keys at parse time
    let mut cfg = cfg;
    let built = build_scenario(&cfg)?;
    cfg.warnings.extend(built.warnings);
    Ok(cfg)
}

/// Reads scenario parameters, remembering which keys were consumed.
struct Params<'a> {
    table: &'a Table,
    used: BTreeSet<String>,
}

impl<'a> Params<'a> {
    fn new(table: &'a Table) -> Self {
        Self { table, used: BTreeSet::new() }
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        self.used.insert(key.to_string());
        self.table.get(key).map_or(Ok(default), |v| as_f64(v, key))
    }

    fn vec(&mut self, key: &str, default: Vec<f64>) -> Result<Vec<f64>, CliError> {
        self.used.insert(key.to_string());
        self.table.get(key).map_or(Ok(default), |v| as_vec(v, key))
    }

    fn leftovers(&self) -> Vec<String> {
        self.table
            .keys()
            .filter(|k| !self.used.contains(*k))
            .map(|k| format!("unknown key '{k}' in [scenario] ignored"))
            .collect()
    }
}

pub struct BuiltScenario {
    pub scenario: Scenario,
    /// Present for the abelian Wong scenario, which supports the reduction cross-check.
    pub wong: Option<WongParams>,
    pub warnings: Vec<String>,
}

fn rayleigh_params(p: &mut Params<'_>, d: RayleighParams) -> Result<RayleighParams, CliError> {
    Ok(RayleighParams {
        metric: p.vec("metric", d.metric)?,
        stiffness: p.vec("stiffness", d.stiffness)?,
        gamma: p.f64("gamma", d.gamma)?,
        x0: p.vec("x0", d.x0)?,
        y0: p.vec("y0", d.y0)?,
        horizon: d.horizon,
    })
}

fn rigid_params(p: &mut Params<'_>) -> Result<RigidBodyParams, CliError> {
    let d = RigidBodyParams::default();
    Ok(RigidBodyParams {
        inertia: p.vec("inertia", d.inertia)?,
        gamma: p.f64("gamma", d.gamma)?,
        xi0: p.vec("xi0", d.xi0)?,
        horizon: d.horizon,
    })
}

fn wong_params(p: &mut Params<'_>, d: WongParams) -> Result<WongParams, CliError> {
    Ok(WongParams {
        metric: p.vec("metric", d.metric)?,
        kappa: p.vec("kappa", d.kappa)?,
        gauge: p.vec("gauge", d.gauge)?,
        field: p.vec("field", d.field)?,
        nonabelian: d.nonabelian,
        gamma: p.f64("gamma", d.gamma)?,
        q0: p.vec("q0", d.q0)?,
        qdot0: p.vec("qdot0", d.qdot0)?,
        v0: p.vec("v0", d.v0)?,
        horizon: d.horizon,
    })
}

/// Builds the configured scenario. Invalid parameters are configuration errors.
pub fn build_scenario(cfg: &RunConfig) -> Result<BuiltScenario, CliError> {
    let mut p = Params::new(&cfg.params);
    let mut wong = None;
    let built = match cfg.scenario.as_str() {
        "rayleigh" => rayleigh_scenario(&rayleigh_params(&mut p, RayleighParams::default())?),
        "rigid_body" => rigid_body_scenario(&rigid_params(&mut p)?),
        "rigid_body_action" => {
            let rp = rigid_params(&mut p)?;
            let x0 = p.vec("x0", DEFAULT_ACTION_X0.to_vec())?;
            rigid_body_action_scenario(&rp, x0)
        }
        "wong" => {
            let wp = wong_params(&mut p, WongParams::default())?;
            wong = Some(wp.clone());
            wong_scenario(&wp)
        }
        "wong_so3" => wong_scenario(&wong_params(&mut p, WongParams::nonabelian_default())?),
        "magnetic" => {
            let d = MagneticParams::default();
            magnetic_scenario(&MagneticParams {
                mass: p.f64("mass", d.mass)?,
                metric: p.vec("metric", d.metric)?,
                charge: p.f64("charge", d.charge)?,
                field: p.vec("field", d.field)?,
                stiffness: p.vec("stiffness", d.stiffness)?,
                gamma: p.f64("gamma", d.gamma)?,
                x0: p.vec("x0", d.x0)?,
                xdot0: p.vec("xdot0", d.xdot0)?,
                horizon: d.horizon,
            })
        }
        "thermoviscous" => {
            let d = ThermoviscousParams::default();
            thermoviscous_scenario(&ThermoviscousParams {
                inertia: p.vec("inertia", d.inertia)?,
                temperature: p.f64("temperature", d.temperature)?,
                gamma: p.f64("gamma", d.gamma)?,
                xi0: p.vec("xi0", d.xi0)?,
                s0: p.f64("s0", d.s0)?,
                horizon: d.horizon,
            })
        }
        "hamel" => {
            let d = HamelParams::default();
            let base = rayleigh_params(&mut p, d.base)?;
            let slope = p.vec("slope", d.slope)?;
            hamel_scenario(&HamelParams { base, slope })
        }
        other => return Err(cfg_err(format!("unknown scenario '{other}'"))),
    }
    .map_err(|e| cfg_err(format!("invalid parameters for '{}': {e}", cfg.scenario)))?;
    let scenario = match cfg.horizon {
        Some(h) => built.with_horizon(h).map_err(|e| cfg_err(e.to_string()))?,
        None => built,
    };
    if let Some(w) = wong.as_mut() {
        w.horizon = scenario.horizon;
    }
    Ok(BuiltScenario {
        scenario,
        wong,
        warnings: p.leftovers(),
    })
}

/// Parameter keys accepted by each scenario, for `list-scenarios`.
pub fn scenario_parameters(name: &str) -> &'static [&'static str] {
    match name {
        "rayleigh" => &["metric", "stiffness", "gamma", "x0", "y0"],
        "rigid_body" => &["inertia", "gamma", "xi0"],
        "rigid_body_action" => &["inertia", "gamma", "xi0", "x0"],
        "wong" | "wong_so3" => &["metric", "kappa", "gauge", "field", "gamma", "q0", "qdot0", "v0"],
        "magnetic" => &["mass", "metric", "charge", "field", "stiffness", "gamma", "x0", "xdot0"],
        "thermoviscous" => &["inertia", "temperature", "gamma", "xi0", "s0"],
        "hamel" => &["metric", "stiffness", "gamma", "x0", "y0", "slope"],
        _ => &[],
    }
}
