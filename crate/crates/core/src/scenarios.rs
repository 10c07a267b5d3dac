//! Worked examples: chart, Lagrangian, symmetry sections, initial data and
//! closed-form reference laws, plus two cross-checks against an independent
//! integration (quasi-velocity frames and abelian Wong reduction).

use nalgebra::{DMatrix, DVector};

use crate::algebroid::{atiyah_chart_from_connection, so3, so3_action_on_r3, tangent_bundle, AlgebroidChart, ConnectionForm, StructureTensor};
use crate::dynamics::{integrate, IntegratorConfig, State, Trajectory};
use crate::error::{check_dim, HerglotzError, Result};
use crate::fd;
use crate::invariants::{energy_series, invariant_log, noether_momentum, InvariantLog, SymmetrySection, DEFAULT_SYMMETRY_TOL, DRIFT_FLOOR};
use crate::lagrangian::{self, HerglotzLagrangian, MetricField, Potential};

/// Scalar series a reference law talks about.
#[derive(Clone, Debug, PartialEq)]
pub enum Quantity {
    Energy,
    /// `J_σ` of the section at this index in [`Scenario::sections`].
    Momentum(usize),
    /// One component `∂L/∂y^α`.
    FiberMomentum(usize),
    /// Euclidean norm of `∂L/∂y`.
    FiberMomentumNorm,
    /// Euclidean norm of the listed fiber components.
    SpeedNorm(Vec<usize>),
    HerglotzVariable,
}

/// Closed-form prediction `Q(t) = Q(0) e^{−rate·t}` with its tolerance, relative to `|Q(0)|`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceLaw {
    pub name: String,
    pub quantity: Quantity,
    pub rate: f64,
    pub tolerance: f64,
}

impl ReferenceLaw {
    pub fn new(name: impl Into<String>, quantity: Quantity, rate: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            quantity,
            rate,
            tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LawOutcome {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub chart: AlgebroidChart,
    pub lagrangian: HerglotzLagrangian,
    pub sections: Vec<SymmetrySection>,
    pub initial: State,
    pub horizon: f64,
    pub laws: Vec<ReferenceLaw>,
}

impl Scenario {
    fn assemble(
        name: &str,
        chart: AlgebroidChart,
        lagrangian: HerglotzLagrangian,
        sections: Vec<SymmetrySection>,
        initial: State,
        horizon: f64,
        laws: Vec<ReferenceLaw>,
    ) -> Result<Self> {
        check_dim("Lagrangian base dimension", chart.base_dim(), lagrangian.base_dim())?;
        check_dim("Lagrangian fiber rank", chart.fiber_rank(), lagrangian.fiber_rank())?;
        check_dim("initial x", chart.base_dim(), initial.x.len())?;
        check_dim("initial y", chart.fiber_rank(), initial.y.len())?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(HerglotzError::InvalidArgument("horizon must be positive".into()));
        }
        let reg = lagrangian.regularity(&initial.x, &initial.y, initial.z)?;
        if !reg.regular {
            return Err(HerglotzError::Regularity {
                condition: reg.hessian_condition,
                ceiling: lagrangian.condition_ceiling(),
            });
        }
        Ok(Self {
            name: name.to_string(),
            chart,
            lagrangian,
            sections,
            initial,
            horizon,
            laws,
        })
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(HerglotzError::InvalidArgument("horizon must be positive".into()));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn integrate(&self, cfg: &IntegratorConfig) -> Result<Trajectory> {
        let mut traj = integrate(&self.chart, &self.lagrangian, &self.initial, self.horizon, cfg)?;
        traj.scenario_label = self.name.clone();
        Ok(traj)
    }

    pub fn invariant_log(&self, traj: &Trajectory) -> Result<InvariantLog> {
        invariant_log(&self.chart, &self.lagrangian, traj, &self.sections, DEFAULT_SYMMETRY_TOL)
    }

    pub fn quantity_series(&self, q: &Quantity, traj: &Trajectory) -> Result<Vec<f64>> {
        let l = &self.lagrangian;
        match q {
            Quantity::Energy => energy_series(l, traj),
            Quantity::Momentum(k) => {
                let sec = self
                    .sections
                    .get(*k)
                    .ok_or_else(|| HerglotzError::InvalidArgument(format!("no section {k}")))?;
                traj.states.iter().map(|s| noether_momentum(l, sec, s)).collect()
            }
            Quantity::FiberMomentum(a) => traj
                .states
                .iter()
                .map(|s| l.fiber_derivative(&s.x, &s.y, s.z).map(|p| p[*a]))
                .collect(),
            Quantity::FiberMomentumNorm => traj
                .states
                .iter()
                .map(|s| l.fiber_derivative(&s.x, &s.y, s.z).map(|p| p.norm()))
                .collect(),
            Quantity::SpeedNorm(slots) => Ok(traj
                .states
                .iter()
                .map(|s| slots.iter().map(|&a| s.y[a] * s.y[a]).sum::<f64>().sqrt())
                .collect()),
            Quantity::HerglotzVariable => Ok(traj.states.iter().map(|s| s.z).collect()),
        }
    }

    /// Evaluates every registered law along `traj`.
    pub fn check_laws(&self, traj: &Trajectory) -> Result<Vec<LawOutcome>> {
        self.laws
            .iter()
            .map(|law| {
                let q = self.quantity_series(&law.quantity, traj)?;
                let measured = law_deviation(&q, &traj.times, law.rate);
                Ok(LawOutcome {
                    name: law.name.clone(),
                    measured,
                    tolerance: law.tolerance,
                    passed: measured <= law.tolerance,
                })
            })
            .collect()
    }
}

/// `max_t |Q(t) − Q(0)e^{−rate t}| / max(|Q(0)|, floor)`.
pub fn law_deviation(q: &[f64], times: &[f64], rate: f64) -> f64 {
    let Some(&q0) = q.first() else { return 0.0 };
    let denom = q0.abs().max(DRIFT_FLOOR);
    q.iter()
        .zip(times)
        .map(|(v, t)| (v - q0 * (-rate * t).exp()).abs() / denom)
        .fold(0.0, f64::max)
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

/// Row-major `n×n` matrix, or a diagonal one if only `n` entries are given.
pub fn square_from(entries: &[f64], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if entries.len() == n {
        Ok(diag(entries))
    } else if entries.len() == n * n {
        Ok(DMatrix::from_row_slice(n, n, entries))
    } else {
        Err(HerglotzError::InvalidArgument(format!(
            "{what} needs {n} diagonal or {} row-major entries, got {}",
            n * n,
            entries.len()
        )))
    }
}

fn basis(r: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; r];
    v[k] = 1.0;
    v
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct RayleighParams {
    pub metric: Vec<f64>,
    pub stiffness: Vec<f64>,
    pub gamma: f64,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub horizon: f64,
}

impl Default for RayleighParams {
    fn default() -> Self {
        Self {
            metric: vec![1.0],
            stiffness: vec![1.0],
            gamma: 0.1,
            x0: vec![1.0],
            y0: vec![0.0],
            horizon: 10.0,
        }
    }
}

/// Damped oscillator `½ g ẋẋ − ½ k x² − γz` on `TQ`; `E(t) = E(0)e^{−γt}`.
pub fn rayleigh_scenario(p: &RayleighParams) -> Result<Scenario> {
    let n = p.x0.len();
    check_dim("stiffness", n, p.stiffness.len())?;
    let metric = MetricField::constant(square_from(&p.metric, n, "metric")?)?;
    let l = lagrangian::rayleigh(metric, Potential::quadratic(p.stiffness.clone()), p.gamma)?;
    let laws = vec![ReferenceLaw::new("energy_decay", Quantity::Energy, p.gamma, 1e-6)];
    Scenario::assemble("rayleigh", tangent_bundle(n)?, l, Vec::new(), State::new(p.x0.clone(), p.y0.clone(), 0.0), p.horizon, laws)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RigidBodyParams {
    pub inertia: Vec<f64>,
    pub gamma: f64,
    pub xi0: Vec<f64>,
    pub horizon: f64,
}

impl Default for RigidBodyParams {
    fn default() -> Self {
        Self {
            inertia: vec![1.0, 1.0, 3.0],
            gamma: 0.05,
            xi0: vec![0.5, 0.0, 0.2],
            horizon: 10.0,
        }
    }
}

/// Free rigid body on so(3) with linear damping. When `I` is symmetric about `e₃`,
/// `e₃` is a symmetry and `J(t) = J(0)e^{−γt}`.
pub fn rigid_body_scenario(p: &RigidBodyParams) -> Result<Scenario> {
    let i = square_from(&p.inertia, 3, "inertia")?;
    let l = lagrangian::rigid_body(i.clone(), p.gamma)?;
    let axisymmetric = i[(0, 0)] == i[(1, 1)] && [(0, 1), (0, 2), (1, 2)].iter().all(|&(a, b)| i[(a, b)] == 0.0 && i[(b, a)] == 0.0);
    let mut sections = Vec::new();
    let mut laws = vec![
        ReferenceLaw::new("energy_decay", Quantity::Energy, p.gamma, 1e-6),
        ReferenceLaw::new("momentum_norm_decay", Quantity::FiberMomentumNorm, p.gamma, 1e-6),
    ];
    if axisymmetric {
        sections.push(SymmetrySection::basis("e3", 3, 2));
        laws.push(ReferenceLaw::new("axial_momentum_decay", Quantity::Momentum(0), p.gamma, 1e-7));
    }
    Scenario::assemble("rigid_body", so3(), l, sections, State::new(vec![], p.xi0.clone(), 0.0), p.horizon, laws)
}

/// The same rigid body on the action algebroid `ℝ³ × so(3)`, carrying a vector `x`
/// with `ẋ = x × ξ` (a fixed spatial direction seen from the body).
pub fn rigid_body_action_scenario(p: &RigidBodyParams, x0: Vec<f64>) -> Result<Scenario> {
    let base = rigid_body_scenario(p)?;
    let i = square_from(&p.inertia, 3, "inertia")?;
    let l = lagrangian::rigid_body_over(3, i, p.gamma)?;
    Scenario::assemble(
        "rigid_body_action",
        so3_action_on_r3(),
        l,
        base.sections,
        State::new(x0, p.xi0.clone(), 0.0),
        p.horizon,
        base.laws,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct WongParams {
    pub metric: Vec<f64>,
    pub kappa: Vec<f64>,
    /// Constant part of `𝓐`, row-major `n×d`.
    pub gauge: Vec<f64>,
    /// Constant skew field `F_ij`, row-major `n×n`, added linearly to internal direction 0.
    pub field: Vec<f64>,
    /// Use so(3) structure constants (`d = 3`) instead of an abelian group.
    pub nonabelian: bool,
    pub gamma: f64,
    pub q0: Vec<f64>,
    pub qdot0: Vec<f64>,
    pub v0: Vec<f64>,
    pub horizon: f64,
}

impl Default for WongParams {
    fn default() -> Self {
        Self {
            metric: vec![1.0, 1.0],
            kappa: vec![1.0],
            gauge: vec![0.0, 0.0],
            field: vec![0.0, 1.0, -1.0, 0.0],
            nonabelian: false,
            gamma: 0.2,
            q0: vec![0.5, -0.3],
            qdot0: vec![0.4, 0.1],
            v0: vec![0.8],
            horizon: 5.0,
        }
    }
}

impl WongParams {
    /// A non-abelian (so(3)) instance.
    pub fn nonabelian_default() -> Self {
        Self {
            kappa: vec![1.0, 2.0, 3.0],
            gauge: vec![0.2, -0.1, 0.3, 0.0, 0.1, -0.2],
            nonabelian: true,
            v0: vec![0.3, -0.2, 0.5],
            ..Self::default()
        }
    }

    fn group_dim(&self) -> usize {
        if self.nonabelian {
            3
        } else {
            self.v0.len()
        }
    }

    fn structure(&self) -> StructureTensor {
        if self.nonabelian {
            StructureTensor::levi_civita()
        } else {
            StructureTensor::zeros(self.group_dim())
        }
    }

    fn connection(&self) -> Result<ConnectionForm> {
        let (n, d) = (self.q0.len(), self.group_dim());
        check_dim("gauge entries", n * d, self.gauge.len())?;
        check_dim("field entries", n * n, self.field.len())?;
        let f = DMatrix::from_row_slice(n, n, &self.field);
        if (&f + f.transpose()).amax() > 1e-12 {
            return Err(HerglotzError::InvalidArgument("field must be skew".into()));
        }
        Ok(ConnectionForm::linear_gauge(DMatrix::from_row_slice(n, d, &self.gauge), f, 0))
    }
}

/// Dissipative Wong system on a trivial principal bundle `ℝⁿ × G`, reduced to its
/// Atiyah algebroid with fiber coordinates `(q̇, v)`.
pub fn wong_scenario(p: &WongParams) -> Result<Scenario> {
    let (n, d) = (p.q0.len(), p.group_dim());
    check_dim("initial q velocity", n, p.qdot0.len())?;
    check_dim("initial internal velocity", d, p.v0.len())?;
    let c = p.structure();
    let label = if p.nonabelian { "wong_so3" } else { "wong" };
    let chart = atiyah_chart_from_connection(label, p.connection()?, &c)?;
    let metric = MetricField::constant(square_from(&p.metric, n, "metric")?)?;
    let kappa = square_from(&p.kappa, d, "kappa")?;
    let l = lagrangian::wong_reduced(metric, kappa, p.gamma)?;
    let r = n + d;
    let sections: Vec<SymmetrySection> = (0..d)
        .map(|a| SymmetrySection::constant(format!("eta{}", a + 1), basis(r, n + a)))
        .collect();
    let mut laws = vec![ReferenceLaw::new("energy_decay", Quantity::Energy, p.gamma, 1e-6)];
    if !p.nonabelian {
        for a in 0..d {
            laws.push(ReferenceLaw::new(format!("internal_momentum_decay_{}", a + 1), Quantity::Momentum(a), p.gamma, 1e-7));
        }
    }
    let y0 = [p.qdot0.clone(), p.v0.clone()].concat();
    Scenario::assemble(label, chart, l, sections, State::new(p.q0.clone(), y0, 0.0), p.horizon, laws)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MagneticParams {
    pub mass: f64,
    pub metric: Vec<f64>,
    pub charge: f64,
    /// Constant skew field `𝓑_ij`, row-major `n×n`.
    pub field: Vec<f64>,
    pub stiffness: Vec<f64>,
    pub gamma: f64,
    pub x0: Vec<f64>,
    pub xdot0: Vec<f64>,
    pub horizon: f64,
}

impl Default for MagneticParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            metric: vec![1.0, 1.0],
            charge: 1.0,
            field: vec![0.0, 2.0, -2.0, 0.0],
            stiffness: vec![0.0, 0.0],
            gamma: 0.1,
            x0: vec![0.0, 0.0],
            xdot0: vec![1.0, 0.0],
            horizon: 10.0,
        }
    }
}

/// Charged particle in a constant magnetic field on an abelian Atiyah chart with fiber
/// coordinates `(ẋ, u)`. The charge slot is passive and starts at `u = 0`.
pub fn magnetic_scenario(p: &MagneticParams) -> Result<Scenario> {
    let n = p.x0.len();
    check_dim("initial velocity", n, p.xdot0.len())?;
    check_dim("stiffness", n, p.stiffness.len())?;
    check_dim("field entries", n * n, p.field.len())?;
    let f = DMatrix::from_row_slice(n, n, &p.field);
    if (&f + f.transpose()).amax() > 1e-12 {
        return Err(HerglotzError::InvalidArgument("field must be skew".into()));
    }
    let conn = ConnectionForm::linear_gauge(DMatrix::zeros(n, 1), f, 0);
    let chart = atiyah_chart_from_connection("magnetic", conn, &StructureTensor::zeros(1))?;
    let g = square_from(&p.metric, n, "metric")?;
    let flat = g == DMatrix::identity(n, n);
    let free = p.stiffness.iter().all(|k| *k == 0.0);
    let l = lagrangian::magnetic(p.mass, MetricField::constant(g)?, p.charge, Potential::quadratic(p.stiffness.clone()), p.gamma)?;
    let mut laws = vec![
        ReferenceLaw::new("energy_decay", Quantity::Energy, p.gamma, 1e-6),
        ReferenceLaw::new("charge_momentum", Quantity::FiberMomentum(n), 0.0, 1e-12),
    ];
    if flat && free {
        laws.push(ReferenceLaw::new("speed_decay", Quantity::SpeedNorm((0..n).collect()), p.gamma, 1e-6));
    }
    let y0 = [p.xdot0.clone(), vec![0.0]].concat();
    Scenario::assemble("magnetic", chart, l, Vec::new(), State::new(p.x0.clone(), y0, 0.0), p.horizon, laws)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThermoviscousParams {
    pub inertia: Vec<f64>,
    pub temperature: f64,
    pub gamma: f64,
    pub xi0: Vec<f64>,
    pub s0: f64,
    pub horizon: f64,
}

impl Default for ThermoviscousParams {
    fn default() -> Self {
        Self {
            inertia: vec![1.0, 2.0, 3.0],
            temperature: 1.0,
            gamma: 0.5,
            xi0: vec![0.4, -0.3, 0.6],
            s0: 0.1,
            horizon: 5.0,
        }
    }
}

/// Rigid body with viscous heating; the Herglotz variable is the entropy and `E(t) = E(0)e^{−T₀t}`.
pub fn thermoviscous_scenario(p: &ThermoviscousParams) -> Result<Scenario> {
    let i = square_from(&p.inertia, 3, "inertia")?;
    let l = lagrangian::thermoviscous(i, 0.0, p.temperature, p.gamma)?;
    let mut laws = vec![ReferenceLaw::new("energy_decay", Quantity::Energy, p.temperature, 1e-6)];
    if p.xi0.iter().all(|v| *v == 0.0) {
        laws.push(ReferenceLaw::new("entropy_decay", Quantity::HerglotzVariable, p.temperature, 1e-6));
    }
    Scenario::assemble("thermoviscous", so3(), l, Vec::new(), State::new(vec![], p.xi0.clone(), p.s0), p.horizon, laws)
}

// ---------------------------------------------------------------------------
// Quasi-velocity frames

type FrameFn = std::sync::Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
type FramePartials = std::sync::Arc<dyn Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync>;

/// A frame `a^α_i(q)` on `TQ`; quasi-velocities are `y = a(q) q̇`.
#[derive(Clone)]
pub struct HamelFrame {
    dim: usize,
    frame: FrameFn,
    partials: Option<FramePartials>,
    fd_step: f64,
}

impl std::fmt::Debug for HamelFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HamelFrame").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl HamelFrame {
    pub fn new<F>(dim: usize, frame: F) -> Self
    where
        F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            frame: std::sync::Arc::new(frame),
            partials: None,
            fd_step: fd::DEFAULT_FD_STEP,
        }
    }

    pub fn with_partials<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        self.partials = Some(std::sync::Arc::new(f));
        self
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(dim, move |_| DMatrix::identity(dim, dim)).with_partials(move |_| vec![DMatrix::zeros(dim, dim); dim])
    }

    /// Planar frame rotated by `θ(q) = slope · q`.
    pub fn rotation(slope: Vec<f64>) -> Result<Self> {
        check_dim("rotation frame slope", 2, slope.len())?;
        let s2 = slope.clone();
        let rot = |th: f64| DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let drot = |th: f64| DMatrix::from_row_slice(2, 2, &[-th.sin(), -th.cos(), th.cos(), -th.sin()]);
        Ok(Self::new(2, move |q| rot(slope[0] * q[0] + slope[1] * q[1]))
            .with_partials(move |q| {
                let th = s2[0] * q[0] + s2[1] * q[1];
                s2.iter().map(|k| drot(th) * *k).collect()
            }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, q: &[f64]) -> DMatrix<f64> {
        (self.frame)(q)
    }

    fn frame_partials(&self, q: &[f64]) -> Vec<DMatrix<f64>> {
        match &self.partials {
            Some(f) => f(q),
            None => fd::matrix_partials(|p| (self.frame)(p), q, self.fd_step),
        }
    }

    /// `ρ = a⁻¹`; non-finite if the frame is singular at `q`.
    pub fn inverse(&self, q: &[f64]) -> DMatrix<f64> {
        self.eval(q)
            .try_inverse()
            .unwrap_or_else(|| DMatrix::from_element(self.dim, self.dim, f64::NAN))
    }

    /// `∂_j ρ = −ρ (∂_j a) ρ`.
    pub fn inverse_partials(&self, q: &[f64]) -> Vec<DMatrix<f64>> {
        let rho = self.inverse(q);
        self.frame_partials(q).iter().map(|da| -(&rho * da * &rho)).collect()
    }

    pub fn to_quasi(&self, q: &[f64], qdot: &[f64]) -> Vec<f64> {
        (self.eval(q) * DVector::from_column_slice(qdot)).as_slice().to_vec()
    }

    pub fn from_quasi(&self, q: &[f64], y: &[f64]) -> Vec<f64> {
        (self.inverse(q) * DVector::from_column_slice(y)).as_slice().to_vec()
    }
}

/// `TQ` in a non-coordinate frame: `ρ = a⁻¹` and `C^γ_{αβ} = a^γ_i (ρ^j_α ∂_jρ^i_β − ρ^j_β ∂_jρ^i_α)`.
pub fn hamel_chart(frame: &HamelFrame) -> Result<AlgebroidChart> {
    let n = frame.dim();
    let (f1, f2, f3) = (frame.clone(), frame.clone(), frame.clone());
    Ok(AlgebroidChart::new(
        "hamel",
        n,
        n,
        move |q| f1.inverse(q),
        move |q| {
            let a = f2.eval(q);
            let rho = f2.inverse(q);
            let drho = f2.inverse_partials(q);
            StructureTensor::skew_from_fn(n, |g, al, be| {
                let mut acc = 0.0;
                for i in 0..n {
                    let mut lie = 0.0;
                    for j in 0..n {
                        lie += rho[(j, al)] * drho[j][(i, be)] - rho[(j, be)] * drho[j][(i, al)];
                    }
                    acc += a[(g, i)] * lie;
                }
                acc
            })
        },
    )?
    .with_anchor_partials(move |q| f3.inverse_partials(q)))
}

/// `L̃(q, y, z) = L(q, ρ(q) y, z)` with partials assembled from those of `L`.
pub fn hamel_lagrangian(base: &HerglotzLagrangian, frame: &HamelFrame) -> Result<HerglotzLagrangian> {
    let n = frame.dim();
    check_dim("base Lagrangian dimension", n, base.base_dim())?;
    check_dim("base Lagrangian rank", n, base.fiber_rank())?;
    let velocity = |f: &HamelFrame, q: &[f64], y: &[f64]| f.from_quasi(q, y);
    let (b0, b1, b2, b3, b4, b5, b6) = (base.clone(), base.clone(), base.clone(), base.clone(), base.clone(), base.clone(), base.clone());
    let (f0, f1, f2, f3, f4, f5, f6) = (frame.clone(), frame.clone(), frame.clone(), frame.clone(), frame.clone(), frame.clone(), frame.clone());
    let nan = |k: usize| DVector::from_element(k, f64::NAN);
    Ok(HerglotzLagrangian::custom("hamel", n, n, move |q, y, z| b0.eval(q, &velocity(&f0, q, y), z).unwrap_or(f64::NAN))
        .with_dx(move |q, y, z| {
            let v = velocity(&f1, q, y);
            let Ok(g) = b1.gradient(q, &v, z) else { return nan(n) };
            let yv = DVector::from_column_slice(y);
            let drho = f1.inverse_partials(q);
            DVector::from_fn(n, |k, _| g.dx[k] + g.dy.dot(&(&drho[k] * &yv)))
        })
        .with_dy(move |q, y, z| {
            let v = velocity(&f2, q, y);
            b2.fiber_derivative(q, &v, z).map_or_else(|_| nan(n), |p| f2.inverse(q).transpose() * p)
        })
        .with_dz(move |q, y, z| b3.gradient(q, &velocity(&f3, q, y), z).map_or(f64::NAN, |g| g.dz))
        .with_d2_yy(move |q, y, z| {
            let rho = f4.inverse(q);
            b4.hessian_blocks(q, &velocity(&f4, q, y), z)
                .map_or_else(|_| DMatrix::from_element(n, n, f64::NAN), |h| rho.transpose() * h.yy * &rho)
        })
        .with_d2_yx(move |q, y, z| {
            let rho = f5.inverse(q);
            let drho = f5.inverse_partials(q);
            let v = velocity(&f5, q, y);
            let (Ok(g), Ok(h)) = (b5.gradient(q, &v, z), b5.hessian_blocks(q, &v, z)) else {
                return DMatrix::from_element(n, n, f64::NAN);
            };
            let yv = DVector::from_column_slice(y);
            let mut m = DMatrix::zeros(n, n);
            for k in 0..n {
                let dv = &drho[k] * &yv;
                let dp = h.yx.column(k) + &h.yy * dv;
                m.set_column(k, &(drho[k].transpose() * &g.dy + rho.transpose() * dp));
            }
            m
        })
        .with_d2_yz(move |q, y, z| {
            let rho = f6.inverse(q);
            b6.hessian_blocks(q, &velocity(&f6, q, y), z)
                .map_or_else(|_| nan(n), |h| rho.transpose() * h.yz)
        }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct HamelParams {
    pub base: RayleighParams,
    /// `θ(q) = slope · q` for the planar rotation frame.
    pub slope: Vec<f64>,
}

impl Default for HamelParams {
    fn default() -> Self {
        Self {
            base: RayleighParams {
                metric: vec![1.0, 2.0],
                stiffness: vec![1.0, 0.5],
                gamma: 0.1,
                x0: vec![0.5, -0.2],
                y0: vec![0.1, 0.3],
                horizon: 5.0,
            },
            slope: vec![0.7, 0.3],
        }
    }
}

/// The Rayleigh system written in quasi-velocities `y = a(q) q̇`.
pub fn hamel_scenario_with_frame(base: &RayleighParams, frame: &HamelFrame) -> Result<Scenario> {
    let coord = rayleigh_scenario(base)?;
    let q0 = &base.x0;
    if frame.eval(q0).try_inverse().is_none() {
        return Err(HerglotzError::InvalidArgument("frame is singular at the initial point".into()));
    }
    let chart = hamel_chart(frame)?;
    let l = hamel_lagrangian(&coord.lagrangian, frame)?;
    let y0 = frame.to_quasi(q0, &base.y0);
    Scenario::assemble("hamel", chart, l, Vec::new(), State::new(q0.clone(), y0, 0.0), base.horizon, coord.laws)
}

pub fn hamel_scenario(p: &HamelParams) -> Result<Scenario> {
    hamel_scenario_with_frame(&p.base, &HamelFrame::rotation(p.slope.clone())?)
}

/// Integrates the coordinate and quasi-velocity forms and returns the largest deviation
/// in `q`, `q̇` (converted back from `y`) and `z`.
pub fn hamel_comparison(base: &RayleighParams, frame: &HamelFrame, cfg: &IntegratorConfig) -> Result<f64> {
    let coord = rayleigh_scenario(base)?.integrate(cfg)?;
    let hamel = hamel_scenario_with_frame(base, frame)?.integrate(cfg)?;
    if coord.times != hamel.times {
        return Err(HerglotzError::Numeric("trajectories are on different grids".into()));
    }
    let mut worst = 0.0f64;
    for (c, h) in coord.states.iter().zip(&hamel.states) {
        let qdot = frame.from_quasi(&h.x, &h.y);
        for i in 0..c.x.len() {
            worst = worst.max((c.x[i] - h.x[i]).abs()).max((c.y[i] - qdot[i]).abs());
        }
        worst = worst.max((c.z - h.z).abs());
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Abelian Wong reduction

/// `½ q̇ᵀ g q̇ + ½ wᵀ κ w − γz` on `T(ℝⁿ × 𝕋^d)` with `w = θ̇ + 𝓐ᵀ q̇`.
pub fn wong_unreduced_lagrangian(metric: DMatrix<f64>, kappa: DMatrix<f64>, conn: ConnectionForm, gamma: f64) -> Result<HerglotzLagrangian> {
    let (n, d) = (conn.base_dim(), conn.group_dim());
    check_dim("metric size", n, metric.nrows())?;
    check_dim("kappa size", d, kappa.nrows())?;
    MetricField::constant(metric.clone())?;
    MetricField::constant(kappa.clone())?;
    let m = n + d;
    let w_of = move |c: &ConnectionForm, x: &[f64], y: &[f64]| {
        DVector::from_column_slice(&y[n..]) + c.eval(&x[..n]).transpose() * DVector::from_column_slice(&y[..n])
    };
    let (g0, g1, g2) = (metric.clone(), metric.clone(), metric);
    let (k0, k1, k2, k3, k4) = (kappa.clone(), kappa.clone(), kappa.clone(), kappa.clone(), kappa);
    let (c0, c1, c2, c3, c4) = (conn.clone(), conn.clone(), conn.clone(), conn.clone(), conn);
    Ok(HerglotzLagrangian::custom("wong_unreduced", m, m, move |x, y, z| {
        let qd = DVector::from_column_slice(&y[..n]);
        let w = w_of(&c0, x, y);
        0.5 * qd.dot(&(&g0 * &qd)) + 0.5 * w.dot(&(&k0 * &w)) - gamma * z
    })
    .with_dx(move |x, y, _| {
        let qd = DVector::from_column_slice(&y[..n]);
        let kw = &k1 * w_of(&c1, x, y);
        let da = c1.partials(&x[..n]);
        DVector::from_fn(m, |k, _| if k < n { kw.dot(&(da[k].transpose() * &qd)) } else { 0.0 })
    })
    .with_dy(move |x, y, _| {
        let qd = DVector::from_column_slice(&y[..n]);
        let kw = &k2 * w_of(&c2, x, y);
        let a = c2.eval(&x[..n]);
        let mut out = DVector::zeros(m);
        out.rows_mut(0, n).copy_from(&(&g1 * &qd + &a * &kw));
        out.rows_mut(n, d).copy_from(&kw);
        out
    })
    .with_dz(move |_, _, _| -gamma)
    .with_d2_yy(move |x, _, _| {
        let a = c3.eval(&x[..n]);
        let ak = &a * &k3;
        let mut h = DMatrix::zeros(m, m);
        h.view_mut((0, 0), (n, n)).copy_from(&(&g2 + &ak * a.transpose()));
        h.view_mut((0, n), (n, d)).copy_from(&ak);
        h.view_mut((n, 0), (d, n)).copy_from(&ak.transpose());
        h.view_mut((n, n), (d, d)).copy_from(&k3);
        h
    })
    .with_d2_yx(move |x, y, _| {
        let qd = DVector::from_column_slice(&y[..n]);
        let a = c4.eval(&x[..n]);
        let da = c4.partials(&x[..n]);
        let kw = &k4 * w_of(&c4, x, y);
        let mut h = DMatrix::zeros(m, m);
        for k in 0..n {
            let dw = da[k].transpose() * &qd;
            let kdw = &k4 * &dw;
            h.view_mut((0, k), (n, 1)).copy_from(&(&da[k] * &kw + &a * &kdw));
            h.view_mut((n, k), (d, 1)).copy_from(&kdw);
        }
        h
    })
    .with_d2_yz(move |_, _, _| DVector::zeros(m)))
}

/// Largest deviation between the reduced Wong trajectory and the reduction
/// `(q, q̇, θ̇ + 𝓐ᵀq̇, z)` of the unreduced one on `T(ℝⁿ × 𝕋^d)`.
pub fn reduction_crosscheck(p: &WongParams, cfg: &IntegratorConfig) -> Result<f64> {
    if p.nonabelian {
        return Err(HerglotzError::InvalidArgument("reduction cross-check is only available for abelian groups".into()));
    }
    let reduced = wong_scenario(p)?;
    let (n, d) = (p.q0.len(), p.group_dim());
    let conn = p.connection()?;
    let metric = square_from(&p.metric, n, "metric")?;
    let kappa = square_from(&p.kappa, d, "kappa")?;
    let l = wong_unreduced_lagrangian(metric, kappa, conn.clone(), p.gamma)?;
    let a0 = conn.eval(&p.q0);
    let theta_dot0 = DVector::from_column_slice(&p.v0) - a0.transpose() * DVector::from_column_slice(&p.qdot0);
    let x0 = [p.q0.clone(), vec![0.0; d]].concat();
    let y0 = [p.qdot0.clone(), theta_dot0.as_slice().to_vec()].concat();
    let unreduced = integrate(&tangent_bundle(n + d)?, &l, &State::new(x0, y0, 0.0), p.horizon, cfg)?;
    let red = reduced.integrate(cfg)?;
    if red.times != unreduced.times {
        return Err(HerglotzError::Numeric("trajectories are on different grids".into()));
    }
    let mut worst = 0.0f64;
    for (r, u) in red.states.iter().zip(&unreduced.states) {
        let q = &u.x[..n];
        let qd = DVector::from_column_slice(&u.y[..n]);
        let v = DVector::from_column_slice(&u.y[n..]) + conn.eval(q).transpose() * &qd;
        for i in 0..n {
            worst = worst.max((r.x[i] - q[i]).abs()).max((r.y[i] - qd[i]).abs());
        }
        for a in 0..d {
            worst = worst.max((r.y[n + a] - v[a]).abs());
        }
        worst = worst.max((r.z - u.z).abs());
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------

pub const SCENARIO_NAMES: [&str; 8] = ["rayleigh", "rigid_body", "rigid_body_action", "wong", "wong_so3", "magnetic", "thermoviscous", "hamel"];

/// Initial carried vector for `rigid_body_action`.
pub const DEFAULT_ACTION_X0: [f64; 3] = [0.0, 0.6, 0.8];

/// Every built-in scenario with default parameters.
pub fn builtin_scenarios() -> Result<Vec<Scenario>> {
    SCENARIO_NAMES.iter().map(|n| default_scenario(n)).collect()
}

pub fn default_scenario(name: &str) -> Result<Scenario> {
    match name {
        "rayleigh" => rayleigh_scenario(&RayleighParams::default()),
        "rigid_body" => rigid_body_scenario(&RigidBodyParams::default()),
        "rigid_body_action" => rigid_body_action_scenario(&RigidBodyParams::default(), DEFAULT_ACTION_X0.to_vec()),
        "wong" => wong_scenario(&WongParams::default()),
        "wong_so3" => wong_scenario(&WongParams::nonabelian_default()),
        "magnetic" => magnetic_scenario(&MagneticParams::default()),
        "thermoviscous" => thermoviscous_scenario(&ThermoviscousParams::default()),
        "hamel" => hamel_scenario(&HamelParams::default()),
        other => Err(HerglotzError::InvalidArgument(format!("unknown scenario '{other}'"))),
    }
}

/// Default scenario with its dissipation switched off, or `None` where there is no
/// conservative limit (the thermoviscous body dissipates at rate `T₀` regardless of `γ`).
pub fn conservative_scenario(name: &str) -> Result<Option<Scenario>> {
    Ok(Some(match name {
        "rayleigh" => rayleigh_scenario(&RayleighParams { gamma: 0.0, ..Default::default() })?,
        "rigid_body" => rigid_body_scenario(&RigidBodyParams { gamma: 0.0, ..Default::default() })?,
        "rigid_body_action" => rigid_body_action_scenario(&RigidBodyParams { gamma: 0.0, ..Default::default() }, DEFAULT_ACTION_X0.to_vec())?,
        "wong" => wong_scenario(&WongParams { gamma: 0.0, ..Default::default() })?,
        "wong_so3" => wong_scenario(&WongParams {
            gamma: 0.0,
            ..WongParams::nonabelian_default()
        })?,
        "magnetic" => magnetic_scenario(&MagneticParams { gamma: 0.0, ..Default::default() })?,
        "hamel" => {
            let mut p = HamelParams::default();
            p.base.gamma = 0.0;
            hamel_scenario(&p)?
        }
        "thermoviscous" => return Ok(None),
        other => return Err(HerglotzError::InvalidArgument(format!("unknown scenario '{other}'"))),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::DEFAULT_SAMPLE_COUNT;

    fn cfg(h: f64) -> IntegratorConfig {
        IntegratorConfig::rk4(h)
    }

    #[test]
    fn rigid_body_initial_momentum() {
        let s = rigid_body_scenario(&RigidBodyParams::default()).unwrap();
        assert_eq!(s.sections.len(), 1);
        let j0 = noether_momentum(&s.lagrangian, &s.sections[0], &s.initial).unwrap();
        assert!((j0 - 0.6).abs() < 1e-15);
        let tri = rigid_body_scenario(&RigidBodyParams {
            inertia: vec![1.0, 2.0, 3.0],
            ..Default::default()
        })
        .unwrap();
        assert!(tri.sections.is_empty());
    }

    #[test]
    fn rigid_body_axial_momentum_at_one() {
        let s = rigid_body_scenario(&RigidBodyParams {
            horizon: 1.0,
            ..Default::default()
        })
        .unwrap();
        let traj = s.integrate(&cfg(1e-3)).unwrap();
        let j = noether_momentum(&s.lagrangian, &s.sections[0], traj.last().unwrap()).unwrap();
        assert!((j - 0.5707376547004284).abs() < 1e-9);
    }

    #[test]
    fn wong_abelian_internal_velocity_decays() {
        let s = wong_scenario(&WongParams::default()).unwrap();
        let traj = s.integrate(&cfg(1e-3)).unwrap();
        for (t, st) in traj.times.iter().zip(&traj.states).step_by(500) {
            assert!((st.y[2] - 0.8 * (-0.2 * t).exp()).abs() < 1e-9);
        }
        let e = energy_series(&s.lagrangian, &traj).unwrap();
        assert!((e.last().unwrap() / e[0] - 0.36787944117144233).abs() < 1e-6);
    }

    #[test]
    fn wong_free_limit_is_straight_line() {
        let p = WongParams {
            field: vec![0.0; 4],
            gamma: 0.0,
            horizon: 2.0,
            ..Default::default()
        };
        let traj = wong_scenario(&p).unwrap().integrate(&cfg(1e-2)).unwrap();
        let last = traj.last().unwrap();
        assert!((last.x[0] - (0.5 + 0.4 * 2.0)).abs() < 1e-12);
        assert!((last.x[1] - (-0.3 + 0.1 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn wong_charts_validate() {
        for p in [WongParams::default(), WongParams::nonabelian_default()] {
            let s = wong_scenario(&p).unwrap();
            let rep = s.chart.validate_default(1e-6).unwrap();
            assert!(rep.passed, "{rep:?}");
            assert_eq!(rep.sample_points.len(), DEFAULT_SAMPLE_COUNT);
        }
    }

    #[test]
    fn cyclotron_orbit_radius() {
        let p = MagneticParams {
            gamma: 0.0,
            horizon: 2.0 * std::f64::consts::PI,
            ..Default::default()
        };
        let s = magnetic_scenario(&p).unwrap();
        let traj = s.integrate(&cfg(1e-3)).unwrap();
        // radius m|v|/(eB) = 0.5; the orbit is a circle through the origin
        let xs: Vec<_> = traj.states.iter().map(|st| (st.x[0], st.x[1])).collect();
        let cx = xs.iter().map(|p| p.0).sum::<f64>() / xs.len() as f64;
        let cy = xs.iter().map(|p| p.1).sum::<f64>() / xs.len() as f64;
        for (x, y) in xs.iter().step_by(100) {
            assert!((((x - cx).powi(2) + (y - cy).powi(2)).sqrt() - 0.5).abs() < 1e-3);
        }
        for st in &traj.states {
            assert_eq!(st.y[2], 0.0);
        }
    }

    #[test]
    fn magnetic_laws_hold() {
        let s = magnetic_scenario(&MagneticParams::default()).unwrap();
        let traj = s.integrate(&cfg(1e-3)).unwrap();
        for o in s.check_laws(&traj).unwrap() {
            assert!(o.passed, "{o:?}");
        }
    }

    #[test]
    fn thermoviscous_entropy_decay_at_rest() {
        let p = ThermoviscousParams {
            xi0: vec![0.0; 3],
            horizon: 2.0,
            ..Default::default()
        };
        let s = thermoviscous_scenario(&p).unwrap();
        assert_eq!(s.laws.len(), 2);
        let traj = s.integrate(&cfg(1e-3)).unwrap();
        assert!((traj.last().unwrap().z - 0.1 * (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn identity_frame_reproduces_coordinates() {
        let base = RayleighParams {
            horizon: 1.0,
            ..HamelParams::default().base
        };
        let d = hamel_comparison(&base, &HamelFrame::identity(2), &cfg(1e-3)).unwrap();
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn rotation_frame_matches_coordinates() {
        let p = HamelParams::default();
        let frame = HamelFrame::rotation(p.slope.clone()).unwrap();
        let d = hamel_comparison(&p.base, &frame, &cfg(1e-3)).unwrap();
        assert!(d < 1e-6, "{d}");
        let chart = hamel_chart(&frame).unwrap();
        let c = chart.structure_eval(&[0.3, 0.1]).unwrap();
        assert!(c.max_skew_defect() == 0.0);
        assert!(c.get(0, 0, 1).abs() > 1e-3);
    }

    #[test]
    fn fd_frame_matches_exact_frame() {
        let p = HamelParams::default();
        let exact = HamelFrame::rotation(p.slope.clone()).unwrap();
        let e2 = exact.clone();
        let fd_frame = HamelFrame::new(2, move |q| e2.eval(q));
        let d = hamel_comparison(&RayleighParams { horizon: 1.0, ..p.base.clone() }, &fd_frame, &cfg(1e-3)).unwrap();
        assert!(d < 1e-6, "{d}");
        let x = [0.2, -0.4];
        let a = hamel_chart(&exact).unwrap().structure_eval(&x).unwrap();
        let b = hamel_chart(&fd_frame).unwrap().structure_eval(&x).unwrap();
        let gap = a.as_slice().iter().zip(b.as_slice()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-8);
    }

    #[test]
    fn singular_frame_rejected() {
        let frame = HamelFrame::new(2, |_| DMatrix::zeros(2, 2));
        assert!(hamel_scenario_with_frame(&HamelParams::default().base, &frame).is_err());
    }

    #[test]
    fn reduction_zero_connection_decouples() {
        let p = WongParams {
            field: vec![0.0; 4],
            horizon: 1.0,
            ..Default::default()
        };
        assert!(reduction_crosscheck(&p, &cfg(1e-3)).unwrap() < 1e-12);
    }

    #[test]
    fn reduction_with_field() {
        let p = WongParams {
            horizon: 1.0,
            gauge: vec![0.3, -0.2],
            ..Default::default()
        };
        assert!(reduction_crosscheck(&p, &cfg(1e-3)).unwrap() < 1e-8);
        assert!(reduction_crosscheck(&WongParams::nonabelian_default(), &cfg(1e-3)).is_err());
    }

    #[test]
    fn unknown_scenario() {
        assert!(default_scenario("pendulum").is_err());
    }

    #[test]
    fn law_deviation_of_exact_decay() {
        let times: Vec<f64> = (0..10).map(|k| k as f64 * 0.1).collect();
        let q: Vec<f64> = times.iter().map(|t| 2.0 * (-0.3 * t).exp()).collect();
        assert!(law_deviation(&q, &times, 0.3) < 1e-15);
        assert!(law_deviation(&q, &times, 0.0) > 0.1);
    }
}
