//! CSV and JSON writers. Every file is written to a temporary sibling and renamed into place.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use herglotz_core::dynamics::Trajectory;
use herglotz_core::invariants::InvariantLog;
use herglotz_core::scenarios::{LawOutcome, Scenario};
use serde::Serialize;

use crate::checks::CheckResult;
use crate::CliError;

/// Writes `contents` to `path` atomically, creating parent directories as needed.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// `prefix` with `suffix` appended to its file name.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Header `t, x_1..x_n, y_1..y_r, z, ell, lambda, E, J_<section>...` and one row per sample.
pub fn trajectory_csv(scenario: &Scenario, traj: &Trajectory, log: &InvariantLog) -> String {
    let n = scenario.chart.base_dim();
    let r = scenario.chart.fiber_rank();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=r).map(|a| format!("y_{a}")));
    header.extend(["z", "ell", "lambda", "E"].map(String::from));
    header.extend(log.momenta.iter().map(|m| format!("J_{}", m.label)));

    let mut out = String::with_capacity(traj.len() * header.len() * 24);
    out.push_str(&header.join(","));
    out.push('\n');
    for (k, (t, s)) in traj.times.iter().zip(&traj.states).enumerate() {
        let mut row: Vec<f64> = Vec::with_capacity(header.len());
        row.push(*t);
        row.extend_from_slice(&s.x);
        row.extend_from_slice(&s.y);
        row.extend([s.z, s.ell, log.lambda[k], log.energy[k]]);
        row.extend(log.momenta.iter().map(|m| m.values[k]));
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            // 17 significant digits round-trip every f64
            let _ = write!(out, "{v:.16e}");
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct MomentumSummary<'a> {
    label: &'a str,
    validated: bool,
    max_symmetry_residual: f64,
    dissipated_drift: f64,
    raw_drift: f64,
}

#[derive(Serialize)]
struct LawSummary<'a> {
    name: &'a str,
    measured: f64,
    tolerance: f64,
    passed: bool,
}

#[derive(Serialize)]
struct InvariantSummary<'a> {
    scenario: &'a str,
    samples: usize,
    energy_initial: f64,
    energy_final: f64,
    lambda_final: f64,
    dissipated_energy_drift: f64,
    raw_energy_drift: f64,
    momenta: Vec<MomentumSummary<'a>>,
    reference_laws: Vec<LawSummary<'a>>,
}

pub fn invariants_json(scenario: &Scenario, log: &InvariantLog, laws: &[LawOutcome]) -> Result<String, CliError> {
    let summary = InvariantSummary {
        scenario: &scenario.name,
        samples: log.times.len(),
        energy_initial: log.energy.first().copied().unwrap_or(f64::NAN),
        energy_final: log.energy.last().copied().unwrap_or(f64::NAN),
        lambda_final: log.lambda.last().copied().unwrap_or(f64::NAN),
        dissipated_energy_drift: log.energy_drift,
        raw_energy_drift: log.raw_energy_drift,
        momenta: log
            .momenta
            .iter()
            .map(|m| MomentumSummary {
                label: &m.label,
                validated: m.validated,
                max_symmetry_residual: m.max_symmetry_residual,
                dissipated_drift: m.drift,
                raw_drift: m.raw_drift,
            })
            .collect(),
        reference_laws: laws
            .iter()
            .map(|l| LawSummary {
                name: &l.name,
                measured: l.measured,
                tolerance: l.tolerance,
                passed: l.passed,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&summary).map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub scenario: String,
    pub seed: u64,
    pub horizon: f64,
    pub step: f64,
    pub samples: usize,
    pub overall_pass: bool,
    pub checks: Vec<CheckResult>,
    pub warnings: Vec<String>,
    pub elapsed_seconds: f64,
}

impl CheckReport {
    pub fn to_json(&self) -> Result<String, CliError> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use herglotz_core::dynamics::IntegratorConfig;
    use herglotz_core::scenarios::default_scenario;

    #[test]
    fn csv_shape_and_precision() {
        let s = default_scenario("rigid_body").unwrap().with_horizon(0.01).unwrap();
        let traj = s.integrate(&IntegratorConfig::rk4(1e-3)).unwrap();
        let log = s.invariant_log(&traj).unwrap();
        let csv = trajectory_csv(&s, &traj, &log);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "t,y_1,y_2,y_3,z,ell,lambda,E,J_e3");
        assert_eq!(lines.len(), 1 + 11);
        let cols: Vec<f64> = lines[5].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(cols.len(), 5 + 0 + 3 + 1);
        assert_eq!(cols[1], traj.states[4].y[0]);
    }

    #[test]
    fn suffix_appends_to_file_name() {
        assert_eq!(with_suffix(Path::new("out/run"), ".csv"), PathBuf::from("out/run.csv"));
    }

    #[test]
    fn atomic_write_creates_directories() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b/c.txt");
        write_atomic(&p, b"hello").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "hello");
    }
}
