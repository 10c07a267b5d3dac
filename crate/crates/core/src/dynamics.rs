//! Explicit first-order form of the Euler–Lagrange–Herglotz system and its integrators.
//!
//! The state carries the base point `x`, fiber coordinates `y`, the Herglotz
//! action `z` and `ell = ∫ ∂L/∂z`, so the integrating factor `λ = exp(−ell)`
//! is available at every sample.

use nalgebra::DVector;

use crate::algebroid::AlgebroidChart;
use crate::error::{check_dim, check_finite_slice, HerglotzError, Result};
use crate::lagrangian::HerglotzLagrangian;

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: f64,
    pub ell: f64,
}

impl State {
    /// Initial state with `ell = 0`.
    pub fn new(x: Vec<f64>, y: Vec<f64>, z: f64) -> Self {
        Self { x, y, z, ell: 0.0 }
    }

    /// Integrating factor `exp(−ell)`.
    pub fn lambda(&self) -> f64 {
        (-self.ell).exp()
    }

    fn pack(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.x.len() + self.y.len() + 2);
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.y);
        v.push(self.z);
        v.push(self.ell);
        DVector::from_vec(v)
    }

    fn unpack(v: &DVector<f64>, n: usize, r: usize) -> Self {
        Self {
            x: v.as_slice()[..n].to_vec(),
            y: v.as_slice()[n..n + r].to_vec(),
            z: v[n + r],
            ell: v[n + r + 1],
        }
    }

    fn check(&self, n: usize, r: usize) -> Result<()> {
        check_dim("state x", n, self.x.len())?;
        check_dim("state y", r, self.y.len())?;
        check_finite_slice("state x", &self.x)?;
        check_finite_slice("state y", &self.y)?;
        check_finite_slice("state z/ell", &[self.z, self.ell])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateDerivative {
    pub x_dot: DVector<f64>,
    pub y_dot: DVector<f64>,
    pub z_dot: f64,
    pub ell_dot: f64,
}

impl StateDerivative {
    fn pack(&self) -> DVector<f64> {
        let (n, r) = (self.x_dot.len(), self.y_dot.len());
        let mut v = DVector::zeros(n + r + 2);
        v.rows_mut(0, n).copy_from(&self.x_dot);
        v.rows_mut(n, r).copy_from(&self.y_dot);
        v[n + r] = self.z_dot;
        v[n + r + 1] = self.ell_dot;
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub step_size: f64,
    pub scenario_label: String,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&State> {
        self.states.last()
    }

    /// The common sample spacing, or an error if the samples are not uniformly spaced.
    pub fn uniform_step(&self) -> Result<f64> {
        if self.times.len() < 2 {
            return Err(HerglotzError::InvalidArgument("trajectory has fewer than two samples".into()));
        }
        let h = self.times[1] - self.times[0];
        let uniform = self
            .times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-8 * h.abs());
        if uniform && h > 0.0 {
            Ok(h)
        } else {
            Err(HerglotzError::InvalidArgument("trajectory samples are not uniformly spaced".into()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Rk4,
    Rk45Adaptive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            step: 1e-3,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_steps: 10_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        Self { step, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(HerglotzError::InvalidArgument("integrator step must be positive".into()));
        }
        if self.method == Method::Rk45Adaptive && !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(HerglotzError::InvalidArgument("tolerances must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(HerglotzError::InvalidArgument("max_steps must be positive".into()));
        }
        Ok(())
    }
}

fn check_compatible(chart: &AlgebroidChart, l: &HerglotzLagrangian) -> Result<()> {
    check_dim("Lagrangian base dimension", chart.base_dim(), l.base_dim())?;
    check_dim("Lagrangian fiber rank", chart.fiber_rank(), l.fiber_rank())
}

/// Right-hand side of the first-order system.
///
/// `ẏ` solves `(∂²L/∂y∂y) ẏ = F` with `F` the chain-rule expansion of the
/// Herglotz equations. Passive slots are held fixed.
pub fn elh_rhs(chart: &AlgebroidChart, l: &HerglotzLagrangian, state: &State) -> Result<StateDerivative> {
    check_compatible(chart, l)?;
    state.check(chart.base_dim(), chart.fiber_rank())?;
    let (x, y, z) = (&state.x[..], &state.y[..], state.z);
    let rho = chart.anchor_eval(x)?;
    let c = chart.structure_eval(x)?;
    let yv = DVector::from_column_slice(y);

    let lval = l.eval(x, y, z)?;
    let g = l.gradient(x, y, z)?;
    let h = l.hessian_blocks(x, y, z)?;
    let reg = l.regularity_of(&h.yy);
    if !reg.regular {
        return Err(HerglotzError::Regularity {
            condition: reg.hessian_condition,
            ceiling: l.condition_ceiling(),
        });
    }

    let x_dot = &rho * &yv;
    let z_dot = lval;
    let cy = c.contract_last(y);
    let f = rho.transpose() * &g.dx - cy.transpose() * &g.dy + &g.dy * g.dz - &h.yx * &x_dot - &h.yz * z_dot;

    let active = l.active_slots();
    let w = h.yy.select_rows(&active).select_columns(&active);
    let fa = f.select_rows(&active);
    let sol = w
        .lu()
        .solve(&fa)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or_else(|| HerglotzError::Numeric("fiber Hessian solve failed".into()))?;
    let mut y_dot = DVector::zeros(chart.fiber_rank());
    for (k, &a) in active.iter().enumerate() {
        y_dot[a] = sol[k];
    }
    Ok(StateDerivative {
        x_dot,
        y_dot,
        z_dot,
        ell_dot: g.dz,
    })
}

struct System<'a> {
    chart: &'a AlgebroidChart,
    l: &'a HerglotzLagrangian,
    n: usize,
    r: usize,
}

impl System<'_> {
    fn eval(&self, t: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        let s = State::unpack(v, self.n, self.r);
        elh_rhs(self.chart, self.l, &s)
            .map(|d| d.pack())
            .map_err(|e| HerglotzError::IntegrationFailed { time: t, source: Box::new(e) })
    }

    fn rk4_step(&self, t: f64, v: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
        let k1 = self.eval(t, v)?;
        let k2 = self.eval(t + 0.5 * h, &(v + &k1 * (0.5 * h)))?;
        let k3 = self.eval(t + 0.5 * h, &(v + &k2 * (0.5 * h)))?;
        let k4 = self.eval(t + h, &(v + &k3 * h))?;
        Ok(v + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
    }
}

/// Number of whole steps of size `h` in `[0, T]`, robust to `T/h` landing just below an integer.
fn whole_steps(horizon: f64, h: f64) -> usize {
    let q = horizon / h;
    let nearest = q.round();
    if (q - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        q.floor() as usize
    }
}

/// Integrates from `t = 0` to `horizon`.
///
/// RK4 samples `t_k = k·step` and adds one short final step if `horizon` is
/// not a multiple of `step`. The adaptive method records every accepted step.
pub fn integrate(
    chart: &AlgebroidChart,
    l: &HerglotzLagrangian,
    initial: &State,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    check_compatible(chart, l)?;
    cfg.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(HerglotzError::InvalidArgument("horizon must be positive".into()));
    }
    let (n, r) = (chart.base_dim(), chart.fiber_rank());
    initial.check(n, r)?;
    if initial.ell != 0.0 {
        return Err(HerglotzError::InvalidArgument("initial ell must be zero".into()));
    }
    let sys = System { chart, l, n, r };
    let (times, states) = match cfg.method {
        Method::Rk4 => run_rk4(&sys, initial, horizon, cfg)?,
        Method::Rk45Adaptive => run_dopri(&sys, initial, horizon, cfg)?,
    };
    Ok(Trajectory {
        times,
        states,
        step_size: cfg.step,
        scenario_label: l.label().to_string(),
    })
}

fn run_rk4(sys: &System<'_>, initial: &State, horizon: f64, cfg: &IntegratorConfig) -> Result<(Vec<f64>, Vec<State>)> {
    let h = cfg.step;
    let steps = whole_steps(horizon, h);
    let last = horizon - steps as f64 * h;
    let partial = last > 1e-9 * h;
    let total = steps + usize::from(partial);
    if total > cfg.max_steps {
        return Err(HerglotzError::MaxSteps(cfg.max_steps));
    }
    let mut times = Vec::with_capacity(total + 1);
    let mut states = Vec::with_capacity(total + 1);
    let mut v = initial.pack();
    times.push(0.0);
    states.push(initial.clone());
    for k in 0..steps {
        v = sys.rk4_step(k as f64 * h, &v, h)?;
        times.push((k + 1) as f64 * h);
        states.push(State::unpack(&v, sys.n, sys.r));
    }
    if partial {
        v = sys.rk4_step(steps as f64 * h, &v, last)?;
        times.push(horizon);
        states.push(State::unpack(&v, sys.n, sys.r));
    }
    Ok((times, states))
}

// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn run_dopri(sys: &System<'_>, initial: &State, horizon: f64, cfg: &IntegratorConfig) -> Result<(Vec<f64>, Vec<State>)> {
    let mut times = vec![0.0];
    let mut states = vec![initial.clone()];
    let mut v = initial.pack();
    let mut t = 0.0;
    let mut h = cfg.step.min(horizon);
    let mut attempts = 0usize;
    while t < horizon {
        if attempts >= cfg.max_steps {
            return Err(HerglotzError::MaxSteps(cfg.max_steps));
        }
        attempts += 1;
        let last = t + h >= horizon * (1.0 - 1e-14);
        if last {
            h = horizon - t;
        }
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        for s in 0..7 {
            let mut arg = v.clone();
            for (j, kj) in k.iter().enumerate() {
                if DP_A[s][j] != 0.0 {
                    arg.axpy(h * DP_A[s][j], kj, 1.0);
                }
            }
            k.push(sys.eval(t + DP_C[s] * h, &arg)?);
        }
        let mut high = v.clone();
        let mut err = DVector::zeros(v.len());
        for s in 0..7 {
            high.axpy(h * DP_B5[s], &k[s], 1.0);
            err.axpy(h * (DP_B5[s] - DP_B4[s]), &k[s], 1.0);
        }
        let norm = (err
            .iter()
            .zip(v.iter().zip(high.iter()))
            .map(|(e, (a, b))| {
                let sc = cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs());
                (e / sc).powi(2)
            })
            .sum::<f64>()
            / v.len() as f64)
            .sqrt();
        if !norm.is_finite() {
            return Err(HerglotzError::IntegrationFailed {
                time: t,
                source: Box::new(HerglotzError::Numeric("non-finite error estimate".into())),
            });
        }
        let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
        if norm <= 1.0 {
            t = if last { horizon } else { t + h };
            v = high;
            times.push(t);
            states.push(State::unpack(&v, sys.n, sys.r));
        }
        h *= factor;
        if h < 1e-14 * horizon.max(1.0) {
            return Err(HerglotzError::IntegrationFailed {
                time: t,
                source: Box::new(HerglotzError::Numeric("step size underflow".into())),
            });
        }
    }
    Ok((times, states))
}

/// Per-sample covector of the direct Herglotz residual
/// `d/dt(∂L/∂y) + C y ∂L/∂y − ρᵀ ∂L/∂x − (∂L/∂z) ∂L/∂y`
/// at interior samples, with the time derivative by central differences.
pub fn elh_residual_series(chart: &AlgebroidChart, l: &HerglotzLagrangian, traj: &Trajectory) -> Result<Vec<(f64, DVector<f64>)>> {
    check_compatible(chart, l)?;
    if traj.len() < 3 {
        return Err(HerglotzError::InvalidArgument("residual needs at least three samples".into()));
    }
    let h = traj.uniform_step()?;
    let momenta = traj
        .states
        .iter()
        .map(|s| l.fiber_derivative(&s.x, &s.y, s.z))
        .collect::<Result<Vec<_>>>()?;
    (1..traj.len() - 1)
        .map(|k| {
            let s = &traj.states[k];
            let p = &momenta[k];
            let dp = (&momenta[k + 1] - &momenta[k - 1]) / (2.0 * h);
            Ok((traj.times[k], local_residual(chart, l, s, p, &dp)?))
        })
        .collect()
}

pub(crate) fn local_residual(
    chart: &AlgebroidChart,
    l: &HerglotzLagrangian,
    s: &State,
    p: &DVector<f64>,
    dp: &DVector<f64>,
) -> Result<DVector<f64>> {
    let rho = chart.anchor_eval(&s.x)?;
    let c = chart.structure_eval(&s.x)?;
    let g = l.gradient(&s.x, &s.y, s.z)?;
    Ok(dp + c.contract_last(&s.y).transpose() * p - rho.transpose() * g.dx - p * g.dz)
}

/// Largest absolute entry over active slots of a list of fiber covectors.
pub fn max_active(l: &HerglotzLagrangian, covectors: impl IntoIterator<Item = DVector<f64>>) -> f64 {
    let active = l.active_slots();
    covectors
        .into_iter()
        .flat_map(|v| active.iter().map(move |&a| v[a].abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max)
}

/// Max over interior samples of the direct Herglotz residual.
pub fn elh_residual(chart: &AlgebroidChart, l: &HerglotzLagrangian, traj: &Trajectory) -> Result<f64> {
    let series = elh_residual_series(chart, l, traj)?;
    Ok(max_active(l, series.into_iter().map(|(_, v)| v)))
}

/// Max over interior samples of `|ẋ_FD − ρ(x) y|`.
pub fn admissibility_defect(chart: &AlgebroidChart, traj: &Trajectory) -> Result<f64> {
    let h = traj.uniform_step()?;
    let mut worst = 0.0f64;
    for k in 1..traj.len().saturating_sub(1) {
        let s = &traj.states[k];
        let xdot: Vec<f64> = (0..s.x.len())
            .map(|i| (traj.states[k + 1].x[i] - traj.states[k - 1].x[i]) / (2.0 * h))
            .collect();
        let res = chart.admissibility_residual(&s.x, &xdot, &s.y)?;
        worst = worst.max(res.amax());
    }
    Ok(worst)
}

/// Max over interior samples of `|ż_FD − L(x, y, z)|`.
pub fn herglotz_defect(l: &HerglotzLagrangian, traj: &Trajectory) -> Result<f64> {
    let h = traj.uniform_step()?;
    let mut worst = 0.0f64;
    for k in 1..traj.len().saturating_sub(1) {
        let s = &traj.states[k];
        let zdot = (traj.states[k + 1].z - traj.states[k - 1].z) / (2.0 * h);
        worst = worst.max((zdot - l.eval(&s.x, &s.y, s.z)?).abs());
    }
    Ok(worst)
}

/// Trapezoid quadrature of `∂L/∂z` along the samples, as an independent check on `ell`.
pub fn trapezoid_ell(l: &HerglotzLagrangian, traj: &Trajectory) -> Result<Vec<f64>> {
    let dz = traj
        .states
        .iter()
        .map(|s| l.gradient(&s.x, &s.y, s.z).map(|g| g.dz))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(dz.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..dz.len() {
        acc += 0.5 * (dz[k] + dz[k - 1]) * (traj.times[k] - traj.times[k - 1]);
        out.push(acc);
    }
    Ok(out)
}

/// `ρ(x)` applied to `y`, handy for initial data on charts with nontrivial anchor.
pub fn anchor_image(chart: &AlgebroidChart, x: &[f64], y: &[f64]) -> Result<DVector<f64>> {
    Ok(chart.anchor_eval(x)? * DVector::from_column_slice(y))
}
