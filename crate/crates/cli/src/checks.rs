//! Named property checks run against an integrated trajectory.

use herglotz_core::algebroid::{sample_points, DEFAULT_SAMPLE_COUNT};
use herglotz_core::connections::{connection_independence, ebar_star_residual, hph_max_residual, HphCurves, TMConnection};
use herglotz_core::dynamics::{elh_residual, IntegratorConfig, Trajectory};
use herglotz_core::fd::DEFAULT_FD_STEP;
use herglotz_core::invariants::{energy_balance_residual, InvariantLog};
use herglotz_core::scenarios::{law_deviation, reduction_crosscheck, Quantity, Scenario, WongParams};
use herglotz_core::HerglotzError;
use rayon::prelude::*;
use serde::Serialize;

/// Number of seeded random connections compared against the trivial one.
pub const RANDOM_CONNECTIONS: u64 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    ElhResidual,
    EnergyBalance,
    NoetherDrift,
    IntrinsicResidual,
    ConnectionIndependence,
    HphResiduals,
    ReductionCrosscheck,
    AlgebroidIdentities,
    EnergyDecay,
}

impl CheckKind {
    pub const ALL: [CheckKind; 9] = [
        CheckKind::ElhResidual,
        CheckKind::EnergyBalance,
        CheckKind::NoetherDrift,
        CheckKind::IntrinsicResidual,
        CheckKind::ConnectionIndependence,
        CheckKind::HphResiduals,
        CheckKind::ReductionCrosscheck,
        CheckKind::AlgebroidIdentities,
        CheckKind::EnergyDecay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::ElhResidual => "elh_residual",
            CheckKind::EnergyBalance => "energy_balance",
            CheckKind::NoetherDrift => "noether_drift",
            CheckKind::IntrinsicResidual => "intrinsic_residual",
            CheckKind::ConnectionIndependence => "connection_independence",
            CheckKind::HphResiduals => "hph_residuals",
            CheckKind::ReductionCrosscheck => "reduction_crosscheck",
            CheckKind::AlgebroidIdentities => "algebroid_identities",
            CheckKind::EnergyDecay => "energy_decay",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == s)
    }

    pub fn default_tolerance(self) -> f64 {
        match self {
            CheckKind::ElhResidual | CheckKind::IntrinsicResidual | CheckKind::HphResiduals | CheckKind::ReductionCrosscheck => 1e-5,
            CheckKind::ConnectionIndependence => 1e-9,
            CheckKind::EnergyBalance | CheckKind::NoetherDrift | CheckKind::AlgebroidIdentities | CheckKind::EnergyDecay => 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckSpec {
    pub kind: CheckKind,
    pub tolerance: f64,
}

/// The suite `verify` runs when the config names no checks.
pub fn default_suite(has_reduction: bool) -> Vec<CheckSpec> {
    CheckKind::ALL
        .iter()
        .filter(|k| has_reduction || **k != CheckKind::ReductionCrosscheck)
        .map(|&kind| CheckSpec {
            kind,
            tolerance: kind.default_tolerance(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Everything a check may need.
pub struct CheckContext<'a> {
    pub scenario: &'a Scenario,
    pub trajectory: &'a Trajectory,
    pub log: &'a InvariantLog,
    pub integrator: &'a IntegratorConfig,
    pub wong: Option<&'a WongParams>,
    pub seed: u64,
}

fn run_one(ctx: &CheckContext<'_>, spec: CheckSpec) -> Result<CheckResult, HerglotzError> {
    let (s, traj) = (ctx.scenario, ctx.trajectory);
    let (chart, l) = (&s.chart, &s.lagrangian);
    let mut detail = None;
    let measured = match spec.kind {
        CheckKind::ElhResidual => elh_residual(chart, l, traj)?,
        CheckKind::EnergyBalance => energy_balance_residual(l, traj)?,
        CheckKind::NoetherDrift => {
            let validated: Vec<_> = ctx.log.momenta.iter().filter(|m| m.validated).collect();
            let skipped: Vec<_> = ctx.log.momenta.iter().filter(|m| !m.validated).map(|m| m.label.as_str()).collect();
            if validated.is_empty() {
                detail = Some("no validated symmetry sections".into());
            } else if !skipped.is_empty() {
                detail = Some(format!("not symmetries, skipped: {}", skipped.join(", ")));
            }
            validated.iter().map(|m| m.drift).fold(0.0, f64::max)
        }
        CheckKind::IntrinsicResidual => {
            ebar_star_residual(&TMConnection::trivial(chart.base_dim(), chart.fiber_rank()), chart, l, traj)?
        }
        CheckKind::ConnectionIndependence => {
            let triv = TMConnection::trivial(chart.base_dim(), chart.fiber_rank());
            let mut worst = 0.0f64;
            for k in 0..RANDOM_CONNECTIONS {
                let g = TMConnection::random_constant(chart.base_dim(), chart.fiber_rank(), ctx.seed.wrapping_add(k));
                worst = worst.max(connection_independence(&triv, &g, chart, l, traj)?);
            }
            detail = Some(format!("{RANDOM_CONNECTIONS} random constant connections"));
            worst
        }
        CheckKind::HphResiduals => hph_max_residual(chart, l, &HphCurves::canonical(l, traj)?)?,
        CheckKind::ReductionCrosscheck => {
            let p = ctx.wong.ok_or_else(|| {
                HerglotzError::InvalidArgument("reduction_crosscheck needs the abelian 'wong' scenario".into())
            })?;
            reduction_crosscheck(p, ctx.integrator)?
        }
        CheckKind::AlgebroidIdentities => {
            let pts = sample_points(chart.base_dim(), DEFAULT_SAMPLE_COUNT, ctx.seed);
            chart.validate_identities(&pts, DEFAULT_FD_STEP, spec.tolerance)?.max_residual()
        }
        CheckKind::EnergyDecay => {
            let law = s
                .laws
                .iter()
                .find(|law| law.quantity == Quantity::Energy)
                .ok_or_else(|| HerglotzError::InvalidArgument(format!("scenario '{}' has no energy law", s.name)))?;
            detail = Some(format!("E(t) = E(0) exp(-{} t)", law.rate));
            law_deviation(&ctx.log.energy, &traj.times, law.rate)
        }
    };
    Ok(CheckResult {
        name: spec.kind.name().to_string(),
        measured,
        tolerance: spec.tolerance,
        passed: measured <= spec.tolerance,
        detail,
    })
}

/// Runs the checks in parallel, returning results in request order.
pub fn run_checks(ctx: &CheckContext<'_>, specs: &[CheckSpec]) -> Result<Vec<CheckResult>, HerglotzError> {
    specs.par_iter().map(|s| run_one(ctx, *s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in CheckKind::ALL {
            assert_eq!(CheckKind::from_name(k.name()), Some(k));
        }
        assert_eq!(CheckKind::from_name("nope"), None);
    }

    #[test]
    fn default_suite_skips_reduction_unless_available() {
        assert_eq!(default_suite(false).len(), 8);
        assert_eq!(default_suite(true).len(), 9);
    }
}
