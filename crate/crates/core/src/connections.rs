//! TM-connections, the intrinsic form of the Herglotz equations and the
//! Hamilton–Pontryagin–Herglotz residuals.
//!
//! A TM-connection `∇_{∂_i} e_α = Γ^γ_{iα} e_γ` splits `dL` into horizontal and
//! vertical parts. The intrinsic residual `∇̄*_a p − ρ*(dL_hor) − (∂L/∂z) p`
//! does not depend on `Γ`: the Christoffel terms from the horizontal part and
//! from the dual derivative cancel. With `Γ = 0` it is exactly the local
//! residual used by [`crate::dynamics::elh_residual`].

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebroid::AlgebroidChart;
use crate::dynamics::{State, Trajectory};
use crate::error::{check_dim, HerglotzError, Result};
use crate::lagrangian::HerglotzLagrangian;

type ChristoffelFn = Arc<dyn Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync>;

/// Christoffel symbols as one `r×r` matrix per base direction `i`, entry `(γ, α)` = `Γ^γ_{iα}`.
#[derive(Clone)]
pub struct TMConnection {
    label: String,
    base_dim: usize,
    fiber_rank: usize,
    gamma: ChristoffelFn,
}

impl fmt::Debug for TMConnection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TMConnection")
            .field("label", &self.label)
            .field("base_dim", &self.base_dim)
            .field("fiber_rank", &self.fiber_rank)
            .finish_non_exhaustive()
    }
}

impl TMConnection {
    pub fn new<F>(label: impl Into<String>, base_dim: usize, fiber_rank: usize, gamma: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            base_dim,
            fiber_rank,
            gamma: Arc::new(gamma),
        }
    }

    /// The locally trivial connection, `Γ ≡ 0`.
    pub fn trivial(base_dim: usize, fiber_rank: usize) -> Self {
        Self::new("trivial", base_dim, fiber_rank, move |_| vec![DMatrix::zeros(fiber_rank, fiber_rank); base_dim])
    }

    pub fn constant(label: impl Into<String>, symbols: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = symbols.len();
        let r = symbols.first().map_or(0, |m| m.nrows());
        if symbols.iter().any(|m| m.shape() != (r, r)) {
            return Err(HerglotzError::InvalidArgument("Christoffel blocks must all be r×r".into()));
        }
        Ok(Self::new(label, n, r, move |_| symbols.clone()))
    }

    /// Constant symbols drawn uniformly from `[−1, 1]`.
    pub fn random_constant(base_dim: usize, fiber_rank: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let symbols = (0..base_dim)
            .map(|_| DMatrix::from_fn(fiber_rank, fiber_rank, |_, _| rng.random_range(-1.0..=1.0)))
            .collect::<Vec<_>>();
        Self::new(format!("random-{seed}"), base_dim, fiber_rank, move |_| symbols.clone())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        check_dim("base point", self.base_dim, x.len())?;
        let g = (self.gamma)(x);
        check_dim("Christoffel blocks", self.base_dim, g.len())?;
        for (i, m) in g.iter().enumerate() {
            if m.shape() != (self.fiber_rank, self.fiber_rank) {
                return Err(HerglotzError::InvalidArgument("Christoffel block has wrong shape".into()));
            }
            if let Some(k) = m.iter().position(|v| !v.is_finite()) {
                return Err(HerglotzError::NonFinite {
                    context: format!("connection '{}'", self.label),
                    index: format!("Gamma[{}][{i}][{}]", k % self.fiber_rank, k / self.fiber_rank),
                });
            }
        }
        Ok(g)
    }

    fn check_chart(&self, chart: &AlgebroidChart) -> Result<()> {
        check_dim("connection base dimension", chart.base_dim(), self.base_dim)?;
        check_dim("connection fiber rank", chart.fiber_rank(), self.fiber_rank)
    }
}

/// `dL = dL_hor + dL_ver + (∂L/∂z) dz` in components.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitDifferential {
    pub hor: DVector<f64>,
    pub ver: DVector<f64>,
    pub dz: f64,
}

/// `w_i = Γ^γ_{iβ} y^β p_γ`.
fn christoffel_pairing(gamma: &[DMatrix<f64>], y: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(gamma.len(), gamma.iter().map(|g| (g * y).dot(p)))
}

// `sign` is −1 for the correct splitting; the other value exists only for tests.
fn split_with_sign(
    conn: &TMConnection,
    chart: &AlgebroidChart,
    l: &HerglotzLagrangian,
    x: &[f64],
    y: &[f64],
    z: f64,
    sign: f64,
) -> Result<SplitDifferential> {
    conn.check_chart(chart)?;
    let g = l.gradient(x, y, z)?;
    let gamma = conn.eval(x)?;
    let w = christoffel_pairing(&gamma, &DVector::from_column_slice(y), &g.dy);
    Ok(SplitDifferential {
        hor: g.dx + w * sign,
        ver: g.dy,
        dz: g.dz,
    })
}

/// Horizontal part `∂L/∂x^i − Γ^γ_{iβ} y^β ∂L/∂y^γ`, vertical part `∂L/∂y`.
pub fn split_dl(conn: &TMConnection, chart: &AlgebroidChart, l: &HerglotzLagrangian, state: &State) -> Result<SplitDifferential> {
    split_with_sign(conn, chart, l, &state.x, &state.y, state.z, -1.0)
}

/// `(∇̄*_a p)_α = ṗ_α + C^γ_{αβ} a^β p_γ − ρ^i_α Γ^γ_{iβ} a^β p_γ`.
pub fn dual_derivative(
    conn: &TMConnection,
    chart: &AlgebroidChart,
    x: &[f64],
    a: &[f64],
    p: &DVector<f64>,
    pdot: &DVector<f64>,
) -> Result<DVector<f64>> {
    conn.check_chart(chart)?;
    let rho = chart.anchor_eval(x)?;
    let c = chart.structure_eval(x)?;
    let gamma = conn.eval(x)?;
    let w = christoffel_pairing(&gamma, &DVector::from_column_slice(a), p);
    Ok(pdot + c.contract_last(a).transpose() * p - rho.transpose() * w)
}

fn intrinsic_with_sign(
    conn: &TMConnection,
    chart: &AlgebroidChart,
    l: &HerglotzLagrangian,
    s: &State,
    p: &DVector<f64>,
    pdot: &DVector<f64>,
    sign: f64,
) -> Result<DVector<f64>> {
    let split = split_with_sign(conn, chart, l, &s.x, &s.y, s.z, sign)?;
    let rho = chart.anchor_eval(&s.x)?;
    let nabla = dual_derivative(conn, chart, &s.x, &s.y, p, pdot)?;
    Ok(nabla - rho.transpose() * split.hor - p * split.dz)
}

/// `∂L/∂y` at a sample with its central-difference time derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumSample {
    pub t: f64,
    pub index: usize,
    pub p: DVector<f64>,
    pub pdot: DVector<f64>,
}

/// Momentum samples at the interior points of a uniform trajectory.
pub fn momentum_samples(l: &HerglotzLagrangian, traj: &Trajectory) -> Result<Vec<MomentumSample>> {
    if traj.len() < 3 {
        return Err(HerglotzError::InvalidArgument("need at least three samples".into()));
    }
    let h = traj.uniform_step()?;
    let p = traj
        .states
        .iter()
        .map(|s| l.fiber_derivative(&s.x, &s.y, s.z))
        .collect::<Result<Vec<_>>>()?;
    Ok((1..traj.len() - 1)
        .map(|k| MomentumSample {
            t: traj.times[k],
            index: k,
            p: p[k].clone(),
            pdot: (&p[k + 1] - &p[k - 1]) / (2.0 * h),
        })
        .collect())
}

fn intrinsic_series_with_sign(
    conn: &TMConnection,
    chart: &AlgebroidChart,
    l: &HerglotzLagrangian,
    traj: &Trajectory,
    sign: f64,
) -> Result<Vec<DVector<f64>>> {
    momentum_samples(l, traj)?
        .iter()
        .map(|m| intrinsic_with_sign(conn, chart, l, &traj.states[m.index], &m.p, &m.pdot, sign))
        .collect()
}

/// Intrinsic residual covector at every interior sample.
pub fn intrinsic_residual_series(
    conn: &TMConnection,
    chart: &AlgebroidChart,
    l: &HerglotzLagrangian,
    traj: &Trajectory,
) -> Result<Vec<DVector<f64>>> {
    intrinsic_series_with_sign(conn, chart, l, traj, -1.0)
}

/// Max over interior samples and active slots of the intrinsic residual.
pub fn ebar_star_residual(conn: &TMConnection, chart: &AlgebroidChart, l: &HerglotzLagrangian, traj: &Trajectory) -> Result<f64> {
    let series = intrinsic_residual_series(conn, chart, l, traj)?;
    Ok(crate::dynamics::max_active(l, series))
}

fn max_pointwise_gap(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).amax()).fold(0.0, f64::max)
}

/// Max pointwise difference between the intrinsic residual covectors of two connections.
pub fn connection_independence(
    a: &TMConnection,
    b: &TMConnection,
    chart: &AlgebroidChart,
    l: &HerglotzLagrangian,
    traj: &Trajectory,
) -> Result<f64> {
    let ra = intrinsic_residual_series(a, chart, l, traj)?;
    let rb = intrinsic_residual_series(b, chart, l, traj)?;
    Ok(max_pointwise_gap(&ra, &rb))
}

/// Curves `(x, a, v, p, z)` on a common uniform grid for the implicit system.
#[derive(Clone, Debug, PartialEq)]
pub struct HphCurves {
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub p: Vec<DVector<f64>>,
    pub z: Vec<f64>,
}

impl HphCurves {
    /// `a = v = y` and `p = ∂L/∂y` along a trajectory.
    pub fn canonical(l: &HerglotzLagrangian, traj: &Trajectory) -> Result<Self> {
        let p = traj
            .states
            .iter()
            .map(|s| l.fiber_derivative(&s.x, &s.y, s.z))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            times: traj.times.clone(),
            x: traj.states.iter().map(|s| s.x.clone()).collect(),
            a: traj.states.iter().map(|s| s.y.clone()).collect(),
            v: traj.states.iter().map(|s| s.y.clone()).collect(),
            p,
            z: traj.states.iter().map(|s| s.z).collect(),
        })
    }

    fn uniform_step(&self) -> Result<f64> {
        let m = self.times.len();
        if [self.x.len(), self.a.len(), self.v.len(), self.p.len(), self.z.len()]
            .iter()
            .any(|&k| k != m)
        {
            return Err(HerglotzError::InvalidArgument("curves are sampled on different grids".into()));
        }
        Trajectory {
            times: self.times.clone(),
            states: Vec::new(),
            step_size: 0.0,
            scenario_label: String::new(),
        }
        .uniform_step()
    }
}

/// Residuals of the five implicit equations at one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct HphResiduals {
    /// `ẋ − ρ(x) a`
    pub r_admiss: DVector<f64>,
    /// `a − v`
    pub r_av: DVector<f64>,
    /// `p − ∂L/∂y(x, a, z)`
    pub r_legendre: DVector<f64>,
    /// intrinsic residual at `(a, p)` with the trivial connection
    pub r_dynamics: DVector<f64>,
    /// `ż − L(x, v, z) − ⟨p, a − v⟩`
    pub r_contact: f64,
}

impl HphResiduals {
    /// Largest entry, skipping passive fiber slots.
    pub fn max_abs(&self, l: &HerglotzLagrangian) -> f64 {
        let fiber = crate::dynamics::max_active(l, [self.r_av.clone(), self.r_legendre.clone(), self.r_dynamics.clone()]);
        self.r_admiss.amax().max(fiber).max(self.r_contact.abs())
    }
}

/// The five residuals at interior sample `k`.
pub fn hph_residuals(chart: &AlgebroidChart, l: &HerglotzLagrangian, curves: &HphCurves, k: usize) -> Result<HphResiduals> {
    let h = curves.uniform_step()?;
    if k == 0 || k + 1 >= curves.times.len() {
        return Err(HerglotzError::InvalidArgument(format!("sample {k} is not interior")));
    }
    let (x, a, v, p, z) = (&curves.x[k], &curves.a[k], &curves.v[k], &curves.p[k], curves.z[k]);
    let xdot: Vec<f64> = (0..x.len())
        .map(|i| (curves.x[k + 1][i] - curves.x[k - 1][i]) / (2.0 * h))
        .collect();
    let pdot = (&curves.p[k + 1] - &curves.p[k - 1]) / (2.0 * h);
    let zdot = (curves.z[k + 1] - curves.z[k - 1]) / (2.0 * h);

    let av = DVector::from_column_slice(a) - DVector::from_column_slice(v);
    let trivial = TMConnection::trivial(chart.base_dim(), chart.fiber_rank());
    let at_a = State::new(x.clone(), a.clone(), z);
    Ok(HphResiduals {
        r_admiss: chart.admissibility_residual(x, &xdot, a)?,
        r_legendre: p - l.fiber_derivative(x, a, z)?,
        r_dynamics: intrinsic_with_sign(&trivial, chart, l, &at_a, p, &pdot, -1.0)?,
        r_contact: zdot - l.eval(x, v, z)? - p.dot(&av),
        r_av: av,
    })
}

/// Max over interior samples of [`HphResiduals::max_abs`].
pub fn hph_max_residual(chart: &AlgebroidChart, l: &HerglotzLagrangian, curves: &HphCurves) -> Result<f64> {
    let mut worst = 0.0f64;
    for k in 1..curves.times.len().saturating_sub(1) {
        worst = worst.max(hph_residuals(chart, l, curves, k)?.max_abs(l));
    }
    Ok(worst)
}
