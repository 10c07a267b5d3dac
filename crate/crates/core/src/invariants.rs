//! Herglotz energy, Noether–Herglotz momenta and their dissipated forms.
//!
//! Along solutions `Ė = (∂L/∂z) E`, and `J̇_σ = (∂L/∂z) J_σ` whenever `σ` is a
//! symmetry. Multiplying by `λ = exp(−∫∂L/∂z)` gives conserved quantities,
//! which is what the drift diagnostics measure.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::algebroid::AlgebroidChart;
use crate::dynamics::{State, Trajectory};
use crate::error::{check_dim, HerglotzError, Result};
use crate::fd;
use crate::lagrangian::HerglotzLagrangian;

/// Floor for the denominator of relative drifts.
pub const DRIFT_FLOOR: f64 = 1e-12;
/// A section counts as a symmetry along a trajectory if its residual stays below this.
pub const DEFAULT_SYMMETRY_TOL: f64 = 1e-10;

type SectionFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
type SectionJacobian = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// A section `σ(x)` of the algebroid, a candidate infinitesimal symmetry.
#[derive(Clone)]
pub struct SymmetrySection {
    label: String,
    sigma: SectionFn,
    d_sigma: Option<SectionJacobian>,
    fd_step: f64,
}

impl fmt::Debug for SymmetrySection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymmetrySection").field("label", &self.label).finish_non_exhaustive()
    }
}

impl SymmetrySection {
    pub fn new<F>(label: impl Into<String>, sigma: F) -> Self
    where
        F: Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            sigma: Arc::new(sigma),
            d_sigma: None,
            fd_step: fd::DEFAULT_FD_STEP,
        }
    }

    /// Exact `∂σ^α/∂x^i` as an `r×n` matrix.
    pub fn with_jacobian<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.d_sigma = Some(Arc::new(f));
        self
    }

    /// A section with constant components.
    pub fn constant(label: impl Into<String>, components: Vec<f64>) -> Self {
        let r = components.len();
        let v = DVector::from_vec(components);
        Self::new(label, move |_| v.clone()).with_jacobian(move |x| DMatrix::zeros(r, x.len()))
    }

    /// Unit section `e_k` of a rank-`r` algebroid.
    pub fn basis(label: impl Into<String>, r: usize, k: usize) -> Self {
        let mut c = vec![0.0; r];
        c[k] = 1.0;
        Self::constant(label, c)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        (self.sigma)(x)
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.d_sigma {
            Some(f) => f(x),
            None => {
                let r = (self.sigma)(x).len();
                fd::jacobian(|p| (self.sigma)(p), x, r, self.fd_step)
            }
        }
    }
}

/// `E = ∂L/∂y · y − L`.
pub fn energy(l: &HerglotzLagrangian, state: &State) -> Result<f64> {
    let p = l.fiber_derivative(&state.x, &state.y, state.z)?;
    let yv = DVector::from_column_slice(&state.y);
    Ok(p.dot(&yv) - l.eval(&state.x, &state.y, state.z)?)
}

pub fn energy_series(l: &HerglotzLagrangian, traj: &Trajectory) -> Result<Vec<f64>> {
    traj.states.iter().map(|s| energy(l, s)).collect()
}

/// Max over interior samples of `|Ė_FD − (∂L/∂z) E|`.
pub fn energy_balance_residual(l: &HerglotzLagrangian, traj: &Trajectory) -> Result<f64> {
    if traj.len() < 3 {
        return Err(HerglotzError::InvalidArgument("energy balance needs at least three samples".into()));
    }
    let h = traj.uniform_step()?;
    let e = energy_series(l, traj)?;
    let mut worst = 0.0f64;
    for k in 1..traj.len() - 1 {
        let s = &traj.states[k];
        let dz = l.gradient(&s.x, &s.y, s.z)?.dz;
        worst = worst.max(((e[k + 1] - e[k - 1]) / (2.0 * h) - dz * e[k]).abs());
    }
    Ok(worst)
}

/// Failure of `σ` to be an infinitesimal symmetry of `L` at `(x, y, z)`:
/// `|ρσ·∂_xL + (ρy)·∂_xσ·∂_yL + C^β_{αγ} y^α σ^γ ∂_{y^β}L|`.
pub fn symmetry_residual(
    chart: &AlgebroidChart,
    l: &HerglotzLagrangian,
    section: &SymmetrySection,
    x: &[f64],
    y: &[f64],
    z: f64,
) -> Result<f64> {
    let rho = chart.anchor_eval(x)?;
    let c = chart.structure_eval(x)?;
    let g = l.gradient(x, y, z)?;
    let sigma = section.eval(x);
    check_dim("section", chart.fiber_rank(), sigma.len())?;
    let dsigma = section.jacobian(x);
    let yv = DVector::from_column_slice(y);
    let xdot = &rho * &yv;
    let r = chart.fiber_rank();
    // Σ_{α,γ} C^β_{αγ} y^α σ^γ
    let bracket = DVector::from_fn(r, |b, _| {
        let mut acc = 0.0;
        for a in 0..r {
            for gm in 0..r {
                acc += c.get(b, a, gm) * y[a] * sigma[gm];
            }
        }
        acc
    });
    let val = (&rho * &sigma).dot(&g.dx) + (&dsigma * &xdot).dot(&g.dy) + bracket.dot(&g.dy);
    Ok(val.abs())
}

/// `J_σ = ∂L/∂y · σ`.
pub fn noether_momentum(l: &HerglotzLagrangian, section: &SymmetrySection, state: &State) -> Result<f64> {
    let p = l.fiber_derivative(&state.x, &state.y, state.z)?;
    let sigma = section.eval(&state.x);
    check_dim("section", p.len(), sigma.len())?;
    Ok(p.dot(&sigma))
}

/// `max_t |λ(t)Q(t) − λ(0)Q(0)| / max(|λ(0)Q(0)|, 1e−12)`.
pub fn dissipated_drift(q: &[f64], lambda: &[f64]) -> Result<f64> {
    check_dim("drift series", q.len(), lambda.len())?;
    let Some((&q0, &l0)) = q.first().zip(lambda.first()) else {
        return Ok(0.0);
    };
    let base = q0 * l0;
    let denom = base.abs().max(DRIFT_FLOOR);
    Ok(q.iter().zip(lambda).map(|(qi, li)| (li * qi - base).abs() / denom).fold(0.0, f64::max))
}

/// Relative drift of `Q` itself.
pub fn relative_drift(q: &[f64]) -> f64 {
    dissipated_drift(q, &vec![1.0; q.len()]).expect("equal lengths")
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentumLog {
    pub label: String,
    pub values: Vec<f64>,
    pub rescaled: Vec<f64>,
    /// Largest symmetry residual along the trajectory.
    pub max_symmetry_residual: f64,
    /// Whether the section passed as a symmetry, so `λJ` is a genuine dissipated invariant.
    pub validated: bool,
    pub drift: f64,
    pub raw_drift: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantLog {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub lambda: Vec<f64>,
    pub rescaled_energy: Vec<f64>,
    pub momenta: Vec<MomentumLog>,
    /// Relative drift of `λE`.
    pub energy_drift: f64,
    /// Relative drift of `E`.
    pub raw_energy_drift: f64,
}

/// Energy and momenta along a trajectory, with every section checked for the symmetry property.
pub fn invariant_log(
    chart: &AlgebroidChart,
    l: &HerglotzLagrangian,
    traj: &Trajectory,
    sections: &[SymmetrySection],
    symmetry_tol: f64,
) -> Result<InvariantLog> {
    let lambda: Vec<f64> = traj.states.iter().map(State::lambda).collect();
    let energy = energy_series(l, traj)?;
    let rescaled_energy = energy.iter().zip(&lambda).map(|(e, l)| e * l).collect();
    let momenta = sections
        .iter()
        .map(|sec| {
            let values = traj
                .states
                .iter()
                .map(|s| noether_momentum(l, sec, s))
                .collect::<Result<Vec<_>>>()?;
            let mut max_res = 0.0f64;
            for s in &traj.states {
                max_res = max_res.max(symmetry_residual(chart, l, sec, &s.x, &s.y, s.z)?);
            }
            Ok(MomentumLog {
                label: sec.label().to_string(),
                rescaled: values.iter().zip(&lambda).map(|(j, l)| j * l).collect(),
                drift: dissipated_drift(&values, &lambda)?,
                raw_drift: relative_drift(&values),
                values,
                max_symmetry_residual: max_res,
                validated: max_res <= symmetry_tol,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InvariantLog {
        times: traj.times.clone(),
        energy_drift: dissipated_drift(&energy, &lambda)?,
        raw_energy_drift: relative_drift(&energy),
        energy,
        lambda,
        rescaled_energy,
        momenta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::{so3, tangent_bundle};
    use crate::lagrangian::{rayleigh, rigid_body, thermoviscous, MetricField, Potential};

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    #[test]
    fn rayleigh_energy_at_rest() {
        let l = rayleigh(MetricField::euclidean(1), Potential::quadratic(vec![1.0]), 0.1).unwrap();
        assert_eq!(energy(&l, &State::new(vec![1.0], vec![0.0], 0.0)).unwrap(), 0.5);
        // E = E₀ + γz
        let e = energy(&l, &State::new(vec![1.0], vec![0.0], 2.0)).unwrap();
        assert!((e - 0.7).abs() < 1e-15);
    }

    #[test]
    fn velocity_free_lagrangian_energy() {
        let l = HerglotzLagrangian::custom("pot", 1, 1, |x, _, z| x[0] * x[0] - z);
        assert_eq!(energy(&l, &State::new(vec![2.0], vec![5.0], 1.0)).unwrap(), -3.0);
    }

    #[test]
    fn thermoviscous_energy() {
        let l = thermoviscous(diag(&[1.0, 2.0, 3.0]), 0.0, 2.0, 0.5).unwrap();
        let s = State::new(vec![], vec![1.0, 1.0, 1.0], 0.3);
        let expected = 3.0 + 0.5 / 4.0 * 3.0 + 2.0 * 0.3;
        assert!((energy(&l, &s).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn axisymmetric_symmetry_residual() {
        let l = rigid_body(diag(&[1.0, 1.0, 3.0]), 0.05).unwrap();
        let sec = SymmetrySection::basis("e3", 3, 2);
        for xi in [[0.3, -0.2, 1.0], [1.0, 1.0, 0.0], [-2.0, 0.5, 0.7]] {
            assert_eq!(symmetry_residual(&so3(), &l, &sec, &[], &xi, 0.4).unwrap(), 0.0);
        }
        let zero = SymmetrySection::constant("zero", vec![0.0; 3]);
        assert_eq!(symmetry_residual(&so3(), &l, &zero, &[], &[1.0, 2.0, 3.0], 0.0).unwrap(), 0.0);
    }

    #[test]
    fn triaxial_symmetry_residual() {
        let l = rigid_body(diag(&[1.0, 2.0, 3.0]), 0.05).unwrap();
        let sec = SymmetrySection::basis("e3", 3, 2);
        let r = symmetry_residual(&so3(), &l, &sec, &[], &[1.0, 1.0, 0.0], 0.0).unwrap();
        assert!((r - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rigid_body_momentum() {
        let l = rigid_body(diag(&[1.0, 1.0, 3.0]), 0.05).unwrap();
        let s = State::new(vec![], vec![0.5, 0.0, 0.2], 0.0);
        let j = noether_momentum(&l, &SymmetrySection::basis("e3", 3, 2), &s).unwrap();
        assert!((j - 0.6).abs() < 1e-15);
        assert_eq!(noether_momentum(&l, &SymmetrySection::constant("0", vec![0.0; 3]), &s).unwrap(), 0.0);
    }

    #[test]
    fn drift_statistics() {
        assert_eq!(dissipated_drift(&[2.0, 2.0, 2.0], &[1.0, 1.0, 1.0]).unwrap(), 0.0);
        let d = dissipated_drift(&[1.0, 2.0], &[1.0, 0.5]).unwrap();
        assert_eq!(d, 0.0);
        assert!((dissipated_drift(&[1.0, 1.5], &[1.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        // Q(0) = 0 uses the absolute floor
        assert!((dissipated_drift(&[0.0, 1e-12], &[1.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(dissipated_drift(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn straight_line_violates_energy_balance() {
        let l = rayleigh(MetricField::euclidean(1), Potential::quadratic(vec![1.0]), 0.1).unwrap();
        let h = 1e-2;
        let times: Vec<f64> = (0..101).map(|k| k as f64 * h).collect();
        let states = times.iter().map(|t| State::new(vec![1.0 + t], vec![1.0], 0.0)).collect();
        let traj = Trajectory {
            times,
            states,
            step_size: h,
            scenario_label: "line".into(),
        };
        assert!(energy_balance_residual(&l, &traj).unwrap() > 1e-2);
    }

    #[test]
    fn fd_section_jacobian() {
        let sec = SymmetrySection::new("rot", |x| DVector::from_vec(vec![-x[1], x[0]]));
        let j = sec.jacobian(&[0.3, 0.7]);
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((j - expected).amax() < 1e-9);
        // rotation generator is a symmetry of the planar isotropic oscillator
        let l = rayleigh(MetricField::euclidean(2), Potential::quadratic(vec![1.0, 1.0]), 0.2).unwrap();
        let r = symmetry_residual(&tangent_bundle(2).unwrap(), &l, &sec, &[0.3, 0.7], &[1.0, -0.4], 0.1).unwrap();
        assert!(r < 1e-9);
    }
}
