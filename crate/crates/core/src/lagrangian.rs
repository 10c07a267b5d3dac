//! Herglotz Lagrangians `L(x, y, z)` and the derivative data the dynamics needs.
//!
//! Built-in Lagrangians register exact first and second partials. Custom ones
//! may register any subset; the rest fall back to central differences.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, check_finite_slice, HerglotzError, Result};
use crate::fd;

pub type ScalarFn = Arc<dyn Fn(&[f64], &[f64], f64) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64], &[f64], f64) -> DVector<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64], &[f64], f64) -> DMatrix<f64> + Send + Sync>;

/// Condition-number ceiling above which the fiber Hessian counts as singular.
pub const DEFAULT_CONDITION_CEILING: f64 = 1e12;
/// Step for second differences when no exact first partial in `y` is registered.
pub const DEFAULT_SECOND_FD_STEP: f64 = 1e-4;

/// First partials `(∂L/∂x, ∂L/∂y, ∂L/∂z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub dx: DVector<f64>,
    pub dy: DVector<f64>,
    pub dz: f64,
}

/// Second partials with one slot in `y`: `yy` is `r×r`, `yx` is `r×n`, `yz` has length `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct HessianBlocks {
    pub yy: DMatrix<f64>,
    pub yx: DMatrix<f64>,
    pub yz: DVector<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularityInfo {
    pub hessian_condition: f64,
    pub regular: bool,
}

/// A scalar function `L(x, y, z)` on `E × ℝ`.
#[derive(Clone)]
pub struct HerglotzLagrangian {
    label: String,
    base_dim: usize,
    fiber_rank: usize,
    value: ScalarFn,
    d_x: Option<VectorFn>,
    d_y: Option<VectorFn>,
    d_z: Option<ScalarFn>,
    d2_yy: Option<MatrixFn>,
    d2_yx: Option<MatrixFn>,
    d2_yz: Option<VectorFn>,
    fd_step: f64,
    second_fd_step: f64,
    condition_ceiling: f64,
    passive_slots: Vec<usize>,
}

impl fmt::Debug for HerglotzLagrangian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HerglotzLagrangian")
            .field("label", &self.label)
            .field("base_dim", &self.base_dim)
            .field("fiber_rank", &self.fiber_rank)
            .field("passive_slots", &self.passive_slots)
            .finish_non_exhaustive()
    }
}

impl HerglotzLagrangian {
    /// A Lagrangian given only by its values; partials can be attached with the `with_*` methods.
    pub fn custom<F>(label: impl Into<String>, base_dim: usize, fiber_rank: usize, value: F) -> Self
    where
        F: Fn(&[f64], &[f64], f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            base_dim,
            fiber_rank,
            value: Arc::new(value),
            d_x: None,
            d_y: None,
            d_z: None,
            d2_yy: None,
            d2_yx: None,
            d2_yz: None,
            fd_step: fd::DEFAULT_FD_STEP,
            second_fd_step: DEFAULT_SECOND_FD_STEP,
            condition_ceiling: DEFAULT_CONDITION_CEILING,
            passive_slots: Vec::new(),
        }
    }

    pub fn with_dx<F: Fn(&[f64], &[f64], f64) -> DVector<f64> + Send + Sync + 'static>(mut self, f: F) -> Self {
        self.d_x = Some(Arc::new(f));
        self
    }

    pub fn with_dy<F: Fn(&[f64], &[f64], f64) -> DVector<f64> + Send + Sync + 'static>(mut self, f: F) -> Self {
        self.d_y = Some(Arc::new(f));
        self
    }

    pub fn with_dz<F: Fn(&[f64], &[f64], f64) -> f64 + Send + Sync + 'static>(mut self, f: F) -> Self {
        self.d_z = Some(Arc::new(f));
        self
    }

    pub fn with_d2_yy<F: Fn(&[f64], &[f64], f64) -> DMatrix<f64> + Send + Sync + 'static>(mut self, f: F) -> Self {
        self.d2_yy = Some(Arc::new(f));
        self
    }

    pub fn with_d2_yx<F: Fn(&[f64], &[f64], f64) -> DMatrix<f64> + Send + Sync + 'static>(mut self, f: F) -> Self {
        self.d2_yx = Some(Arc::new(f));
        self
    }

    pub fn with_d2_yz<F: Fn(&[f64], &[f64], f64) -> DVector<f64> + Send + Sync + 'static>(mut self, f: F) -> Self {
        self.d2_yz = Some(Arc::new(f));
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn with_second_fd_step(mut self, h: f64) -> Self {
        self.second_fd_step = h;
        self
    }

    pub fn with_condition_ceiling(mut self, ceiling: f64) -> Self {
        self.condition_ceiling = ceiling;
        self
    }

    /// Fiber slots in which `L` is affine and which carry no dynamics of their own.
    /// The integrator holds them constant and residual maxima skip them.
    pub fn with_passive_slots(mut self, slots: Vec<usize>) -> Self {
        self.passive_slots = slots;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn fiber_rank(&self) -> usize {
        self.fiber_rank
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn passive_slots(&self) -> &[usize] {
        &self.passive_slots
    }

    /// Fiber slots that are not passive, in increasing order.
    pub fn active_slots(&self) -> Vec<usize> {
        (0..self.fiber_rank).filter(|a| !self.passive_slots.contains(a)).collect()
    }

    pub fn has_exact_partials(&self) -> bool {
        self.d_x.is_some()
            && self.d_y.is_some()
            && self.d_z.is_some()
            && self.d2_yy.is_some()
            && self.d2_yx.is_some()
            && self.d2_yz.is_some()
    }

    fn check_shapes(&self, x: &[f64], y: &[f64]) -> Result<()> {
        check_dim("base point", self.base_dim, x.len())?;
        check_dim("fiber coordinates", self.fiber_rank, y.len())
    }

    /// `L(x, y, z)`.
    pub fn eval(&self, x: &[f64], y: &[f64], z: f64) -> Result<f64> {
        self.check_shapes(x, y)?;
        let v = (self.value)(x, y, z);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(HerglotzError::NonFinite {
                context: format!("Lagrangian '{}'", self.label),
                index: "value".into(),
            })
        }
    }

    fn dy_with_step(&self, x: &[f64], y: &[f64], z: f64, h: f64) -> DVector<f64> {
        match &self.d_y {
            Some(f) => f(x, y, z),
            None => fd::gradient(|yy| (self.value)(x, yy, z), y, h),
        }
    }

    /// `(∂L/∂x, ∂L/∂y, ∂L/∂z)`, exact where registered.
    pub fn gradient(&self, x: &[f64], y: &[f64], z: f64) -> Result<Gradient> {
        self.check_shapes(x, y)?;
        let h = self.fd_step;
        let dx = match &self.d_x {
            Some(f) => f(x, y, z),
            None => fd::gradient(|xx| (self.value)(xx, y, z), x, h),
        };
        let dy = self.dy_with_step(x, y, z, h);
        let dz = match &self.d_z {
            Some(f) => f(x, y, z),
            None => ((self.value)(x, y, z + h) - (self.value)(x, y, z - h)) / (2.0 * h),
        };
        check_dim("∂L/∂x", self.base_dim, dx.len())?;
        check_dim("∂L/∂y", self.fiber_rank, dy.len())?;
        check_finite_slice("∂L/∂x", dx.as_slice())?;
        check_finite_slice("∂L/∂y", dy.as_slice())?;
        check_finite_slice("∂L/∂z", &[dz])?;
        Ok(Gradient { dx, dy, dz })
    }

    /// `∂L/∂y` only.
    pub fn fiber_derivative(&self, x: &[f64], y: &[f64], z: f64) -> Result<DVector<f64>> {
        self.check_shapes(x, y)?;
        let dy = self.dy_with_step(x, y, z, self.fd_step);
        check_finite_slice("∂L/∂y", dy.as_slice())?;
        Ok(dy)
    }

    /// Second partials `∂²L/∂y∂y`, `∂²L/∂y∂x`, `∂²L/∂y∂z`.
    pub fn hessian_blocks(&self, x: &[f64], y: &[f64], z: f64) -> Result<HessianBlocks> {
        self.check_shapes(x, y)?;
        let (n, r) = (self.base_dim, self.fiber_rank);
        // with an exact ∂L/∂y one difference suffices; otherwise a wider second-difference step
        let h = if self.d_y.is_some() { self.fd_step } else { self.second_fd_step };
        let dy = |xx: &[f64], yy: &[f64], zz: f64| self.dy_with_step(xx, yy, zz, h);

        let yy = match &self.d2_yy {
            Some(f) => f(x, y, z),
            None => {
                let j = fd::jacobian(|p| dy(x, p, z), y, r, h);
                (&j + j.transpose()) * 0.5
            }
        };
        let yx = match &self.d2_yx {
            Some(f) => f(x, y, z),
            None => fd::jacobian(|p| dy(p, y, z), x, r, h),
        };
        let yz = match &self.d2_yz {
            Some(f) => f(x, y, z),
            None => (dy(x, y, z + h) - dy(x, y, z - h)) / (2.0 * h),
        };
        if yy.shape() != (r, r) || yx.shape() != (r, n) || yz.len() != r {
            return Err(HerglotzError::InvalidArgument(format!(
                "Hessian blocks of '{}' have wrong shapes",
                self.label
            )));
        }
        check_finite_slice("∂²L/∂y∂y", yy.as_slice())?;
        check_finite_slice("∂²L/∂y∂x", yx.as_slice())?;
        check_finite_slice("∂²L/∂y∂z", yz.as_slice())?;
        Ok(HessianBlocks { yy, yx, yz })
    }

    /// Condition number of the active block of `∂²L/∂y∂y`.
    pub fn regularity(&self, x: &[f64], y: &[f64], z: f64) -> Result<RegularityInfo> {
        let blocks = self.hessian_blocks(x, y, z)?;
        Ok(self.regularity_of(&blocks.yy))
    }

    pub(crate) fn regularity_of(&self, yy: &DMatrix<f64>) -> RegularityInfo {
        let active = self.active_slots();
        let hessian_condition = condition_number(&yy.select_rows(&active).select_columns(&active));
        RegularityInfo {
            hessian_condition,
            regular: hessian_condition < self.condition_ceiling,
        }
    }

    pub fn condition_ceiling(&self) -> f64 {
        self.condition_ceiling
    }
}

/// Ratio of extreme absolute eigenvalues of a symmetric matrix; `∞` when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for v in eig.iter() {
        lo = lo.min(v.abs());
        hi = hi.max(v.abs());
    }
    if lo == 0.0 || !lo.is_finite() || !hi.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn require_spd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(HerglotzError::InvalidArgument(format!("{what} must be square")));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * m.amax().max(1.0) {
        return Err(HerglotzError::InvalidArgument(format!("{what} is not symmetric")));
    }
    if m.clone().cholesky().is_none() {
        return Err(HerglotzError::InvalidArgument(format!("{what} is not positive definite")));
    }
    Ok(())
}

fn require_nonnegative(v: f64, what: &str) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(HerglotzError::InvalidArgument(format!("{what} must be a finite non-negative number")))
    }
}

fn require_positive(v: f64, what: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(HerglotzError::InvalidArgument(format!("{what} must be positive")))
    }
}

/// Riemannian metric `g_ij(x)` with its partials `∂g/∂x^k`.
#[derive(Clone)]
pub struct MetricField {
    dim: usize,
    value: Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>,
    partials: Arc<dyn Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync>,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl MetricField {
    /// Metric with exact partials; checked to be SPD at the origin.
    pub fn new<G, D>(dim: usize, value: G, partials: D) -> Result<Self>
    where
        G: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        D: Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        let g0 = value(&vec![0.0; dim]);
        if g0.shape() != (dim, dim) {
            return Err(HerglotzError::InvalidArgument(format!("metric must be {dim}×{dim}")));
        }
        require_spd(&g0, "metric")?;
        Ok(Self {
            dim,
            value: Arc::new(value),
            partials: Arc::new(partials),
        })
    }

    pub fn constant(g: DMatrix<f64>) -> Result<Self> {
        require_spd(&g, "metric")?;
        let n = g.nrows();
        Ok(Self {
            dim: n,
            value: Arc::new(move |_| g.clone()),
            partials: Arc::new(move |_| vec![DMatrix::zeros(n, n); n]),
        })
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::constant(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    pub fn euclidean(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        (self.value)(x)
    }

    pub fn partials(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        (self.partials)(x)
    }
}

/// Potential `V(x)` with its gradient.
#[derive(Clone)]
pub struct Potential {
    value: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    gradient: Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Potential")
    }
}

impl Potential {
    pub fn new<V, G>(value: V, gradient: G) -> Self
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }

    pub fn zero() -> Self {
        Self::new(|_| 0.0, |x| DVector::zeros(x.len()))
    }

    /// `V(x) = ½ Σ k_i (x^i)²`.
    pub fn quadratic(stiffness: Vec<f64>) -> Self {
        let k2 = stiffness.clone();
        Self::new(
            move |x| 0.5 * x.iter().zip(&stiffness).map(|(xi, k)| k * xi * xi).sum::<f64>(),
            move |x| DVector::from_iterator(x.len(), x.iter().zip(&k2).map(|(xi, k)| k * xi)),
        )
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        (self.gradient)(x)
    }
}

fn quad(g: &DMatrix<f64>, v: &[f64]) -> f64 {
    let v = DVector::from_column_slice(v);
    v.dot(&(g * &v))
}

/// `L = ½ g_ij(x) y^i y^j − V(x) − γ z` on `TQ`.
pub fn rayleigh(metric: MetricField, potential: Potential, gamma: f64) -> Result<HerglotzLagrangian> {
    require_nonnegative(gamma, "gamma")?;
    let n = metric.dim();
    let (g1, g2, g3, g4, g5) = (metric.clone(), metric.clone(), metric.clone(), metric.clone(), metric);
    let (v1, v2) = (potential.clone(), potential);
    Ok(HerglotzLagrangian::custom("rayleigh", n, n, move |x, y, z| 0.5 * quad(&g1.eval(x), y) - v1.eval(x) - gamma * z)
        .with_dx(move |x, y, _| {
            let dg = g2.partials(x);
            let grad_v = v2.gradient(x);
            DVector::from_fn(n, |k, _| 0.5 * quad(&dg[k], y) - grad_v[k])
        })
        .with_dy(move |x, y, _| g3.eval(x) * DVector::from_column_slice(y))
        .with_dz(move |_, _, _| -gamma)
        .with_d2_yy(move |x, _, _| g4.eval(x))
        .with_d2_yx(move |x, y, _| {
            let dg = g5.partials(x);
            let yv = DVector::from_column_slice(y);
            let mut m = DMatrix::zeros(n, n);
            for k in 0..n {
                m.set_column(k, &(&dg[k] * &yv));
            }
            m
        })
        .with_d2_yz(move |_, _, _| DVector::zeros(n)))
}

/// `ℓ(ξ, z) = ½⟨Iξ, ξ⟩ − γ z` on a Lie algebra.
pub fn rigid_body(inertia: DMatrix<f64>, gamma: f64) -> Result<HerglotzLagrangian> {
    rigid_body_over(0, inertia, gamma)
}

/// The rigid-body Lagrangian on an algebroid over an `n`-dimensional base, independent of `x`.
pub fn rigid_body_over(base_dim: usize, inertia: DMatrix<f64>, gamma: f64) -> Result<HerglotzLagrangian> {
    require_spd(&inertia, "inertia")?;
    require_nonnegative(gamma, "gamma")?;
    let (n, r) = (base_dim, inertia.nrows());
    let (i1, i2, i3) = (inertia.clone(), inertia.clone(), inertia);
    Ok(HerglotzLagrangian::custom("rigid_body", n, r, move |_, y, z| 0.5 * quad(&i1, y) - gamma * z)
        .with_dx(move |_, _, _| DVector::zeros(n))
        .with_dy(move |_, y, _| &i2 * DVector::from_column_slice(y))
        .with_dz(move |_, _, _| -gamma)
        .with_d2_yy(move |_, _, _| i3.clone())
        .with_d2_yx(move |_, _, _| DMatrix::zeros(r, n))
        .with_d2_yz(move |_, _, _| DVector::zeros(r)))
}

/// Reduced Wong Lagrangian `½(κ_AB v^A v^B + g_ij q̇^i q̇^j) − γ z` on an Atiyah chart
/// with fiber coordinates `(q̇, v)`.
pub fn wong_reduced(metric: MetricField, kappa: DMatrix<f64>, gamma: f64) -> Result<HerglotzLagrangian> {
    require_spd(&kappa, "kappa")?;
    require_nonnegative(gamma, "gamma")?;
    let n = metric.dim();
    let d = kappa.nrows();
    let r = n + d;
    let (g1, g2, g3, g4, g5) = (metric.clone(), metric.clone(), metric.clone(), metric.clone(), metric);
    let (k1, k2, k3) = (kappa.clone(), kappa.clone(), kappa);
    Ok(HerglotzLagrangian::custom("wong_reduced", n, r, move |x, y, z| {
        0.5 * (quad(&k1, &y[n..]) + quad(&g1.eval(x), &y[..n])) - gamma * z
    })
    .with_dx(move |x, y, _| {
        let dg = g2.partials(x);
        DVector::from_fn(n, |k, _| 0.5 * quad(&dg[k], &y[..n]))
    })
    .with_dy(move |x, y, _| {
        let mut out = DVector::zeros(r);
        out.rows_mut(0, n).copy_from(&(g3.eval(x) * DVector::from_column_slice(&y[..n])));
        out.rows_mut(n, d).copy_from(&(&k2 * DVector::from_column_slice(&y[n..])));
        out
    })
    .with_dz(move |_, _, _| -gamma)
    .with_d2_yy(move |x, _, _| {
        let mut m = DMatrix::zeros(r, r);
        m.view_mut((0, 0), (n, n)).copy_from(&g4.eval(x));
        m.view_mut((n, n), (d, d)).copy_from(&k3);
        m
    })
    .with_d2_yx(move |x, y, _| {
        let dg = g5.partials(x);
        let qd = DVector::from_column_slice(&y[..n]);
        let mut m = DMatrix::zeros(r, n);
        for k in 0..n {
            m.view_mut((0, k), (n, 1)).copy_from(&(&dg[k] * &qd));
        }
        m
    })
    .with_d2_yz(move |_, _, _| DVector::zeros(r)))
}

/// Thermoviscous body `½⟨Iξ,ξ⟩ − U − T₀S + (γ/2T₀)‖ξ‖²` with a left-invariant
/// (constant) potential `U`; the Herglotz variable is the entropy `S`.
pub fn thermoviscous(inertia: DMatrix<f64>, potential: f64, temperature: f64, gamma: f64) -> Result<HerglotzLagrangian> {
    require_spd(&inertia, "inertia")?;
    require_positive(temperature, "temperature T0")?;
    require_nonnegative(gamma, "gamma")?;
    let r = inertia.nrows();
    let visc = gamma / temperature;
    let (i1, i2) = (inertia.clone(), inertia.clone());
    let pi = inertia + DMatrix::identity(r, r) * visc;
    Ok(HerglotzLagrangian::custom("thermoviscous", 0, r, move |_, y, s| {
        0.5 * quad(&i1, y) - potential - temperature * s + 0.5 * visc * y.iter().map(|v| v * v).sum::<f64>()
    })
    .with_dx(|_, _, _| DVector::zeros(0))
    .with_dy(move |_, y, _| {
        let yv = DVector::from_column_slice(y);
        &i2 * &yv + yv * visc
    })
    .with_dz(move |_, _, _| -temperature)
    .with_d2_yy(move |_, _, _| pi.clone())
    .with_d2_yx(move |_, _, _| DMatrix::zeros(r, 0))
    .with_d2_yz(move |_, _, _| DVector::zeros(r)))
}

/// Charged particle `(m/2) g(ẋ, ẋ) + e u − V(x) − γ z` on an abelian Atiyah chart with
/// fiber coordinates `(ẋ, u)`. The charge slot `u` is passive: `L` is affine in it.
pub fn magnetic(mass: f64, metric: MetricField, charge: f64, potential: Potential, gamma: f64) -> Result<HerglotzLagrangian> {
    require_positive(mass, "mass")?;
    require_nonnegative(gamma, "gamma")?;
    let n = metric.dim();
    let r = n + 1;
    let (g1, g2, g3, g4, g5) = (metric.clone(), metric.clone(), metric.clone(), metric.clone(), metric);
    let (v1, v2) = (potential.clone(), potential);
    Ok(HerglotzLagrangian::custom("magnetic", n, r, move |x, y, z| {
        0.5 * mass * quad(&g1.eval(x), &y[..n]) + charge * y[n] - v1.eval(x) - gamma * z
    })
    .with_dx(move |x, y, _| {
        let dg = g2.partials(x);
        let gv = v2.gradient(x);
        DVector::from_fn(n, |k, _| 0.5 * mass * quad(&dg[k], &y[..n]) - gv[k])
    })
    .with_dy(move |x, y, _| {
        let mut out = DVector::zeros(r);
        out.rows_mut(0, n).copy_from(&(g3.eval(x) * DVector::from_column_slice(&y[..n]) * mass));
        out[n] = charge;
        out
    })
    .with_dz(move |_, _, _| -gamma)
    .with_d2_yy(move |x, _, _| {
        let mut m = DMatrix::zeros(r, r);
        m.view_mut((0, 0), (n, n)).copy_from(&(g4.eval(x) * mass));
        m
    })
    .with_d2_yx(move |x, y, _| {
        let dg = g5.partials(x);
        let qd = DVector::from_column_slice(&y[..n]);
        let mut m = DMatrix::zeros(r, n);
        for k in 0..n {
            m.view_mut((0, k), (n, 1)).copy_from(&(&dg[k] * &qd * mass));
        }
        m
    })
    .with_d2_yz(move |_, _, _| DVector::zeros(r))
    .with_passive_slots(vec![n]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rayleigh_1d(gamma: f64) -> HerglotzLagrangian {
        rayleigh(MetricField::euclidean(1), Potential::quadratic(vec![1.0]), gamma).unwrap()
    }

    #[test]
    fn rayleigh_value_and_gradient() {
        let l = rayleigh_1d(0.1);
        assert_eq!(l.eval(&[1.0], &[0.0], 0.0).unwrap(), -0.5);
        let g = l.gradient(&[1.0], &[2.0], 0.0).unwrap();
        assert_eq!(g.dx[0], -1.0);
        assert_eq!(g.dy[0], 2.0);
        assert_eq!(g.dz, -0.1);
    }

    #[test]
    fn rigid_body_value_and_momentum() {
        let i = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let l = rigid_body(i.clone(), 0.0).unwrap();
        assert_eq!(l.eval(&[], &[1.0, 0.0, 0.0], 0.0).unwrap(), 0.5);
        let l = rigid_body(i, 0.05).unwrap();
        let g = l.gradient(&[], &[1.0, 1.0, 1.0], 0.0).unwrap();
        assert_eq!(g.dy.as_slice(), &[1.0, 2.0, 3.0]);
        let reg = l.regularity(&[], &[0.0; 3], 0.0).unwrap();
        assert!((reg.hessian_condition - 3.0).abs() < 1e-12);
        assert!(reg.regular);
    }

    #[test]
    fn wong_value_at_rest_and_hessian_blocks() {
        let g = MetricField::diagonal(&[2.0, 3.0]).unwrap();
        let kappa = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5]));
        let l = wong_reduced(g, kappa, 0.2).unwrap();
        assert!((l.eval(&[0.0, 0.0], &[0.0, 0.0, 0.0], 1.0).unwrap() + 0.2).abs() < 1e-15);
        let h = l.hessian_blocks(&[0.3, 0.1], &[1.0, 2.0, 3.0], 0.0).unwrap();
        assert_eq!(h.yy, DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 0.5])));
    }

    #[test]
    fn thermoviscous_momentum_and_entropy_slope() {
        let i = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let l = thermoviscous(i, 0.0, 1.0, 2.0).unwrap();
        let g = l.gradient(&[], &[1.0, -1.0, 0.5], 0.7).unwrap();
        assert_eq!(g.dy.as_slice(), &[3.0, -4.0, 2.5]);
        assert_eq!(g.dz, -1.0);
    }

    #[test]
    fn magnetic_momentum_is_mass_velocity_and_charge() {
        let l = magnetic(2.0, MetricField::euclidean(2), 0.7, Potential::zero(), 0.1).unwrap();
        let p = l.fiber_derivative(&[0.0, 0.0], &[1.0, -3.0, 5.0], 0.0).unwrap();
        assert_eq!(p.as_slice(), &[2.0, -6.0, 0.7]);
        assert_eq!(l.active_slots(), vec![0, 1]);
        let reg = l.regularity(&[0.0, 0.0], &[1.0, -3.0, 0.0], 0.0).unwrap();
        assert!(reg.regular);
    }

    #[test]
    fn linear_lagrangian_is_singular() {
        let l = HerglotzLagrangian::custom("linear", 0, 1, |_, y, _| y[0]);
        let reg = l.regularity(&[], &[0.3], 0.0).unwrap();
        assert!(!reg.regular);
        assert!(reg.hessian_condition.is_infinite());
    }

    #[test]
    fn mixed_y_z_block_by_differences() {
        let l = HerglotzLagrangian::custom("cross", 0, 1, |_, y, z| 0.5 * y[0] * y[0] + y[0] * z);
        let h = l.hessian_blocks(&[], &[0.4], 1.3).unwrap();
        assert!((h.yz[0] - 1.0).abs() < 1e-8);
        assert!((h.yy[(0, 0)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_metric_rayleigh_blocks() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let l = rayleigh(MetricField::constant(g.clone()).unwrap(), Potential::zero(), 0.3).unwrap();
        let h = l.hessian_blocks(&[0.1, 0.2], &[1.0, 1.0], 0.0).unwrap();
        assert_eq!(h.yy, g);
        assert_eq!(h.yx, DMatrix::zeros(2, 2));
        assert_eq!(h.yz, DVector::zeros(2));
    }

    #[test]
    fn non_spd_rejected() {
        assert!(MetricField::diagonal(&[1.0, -1.0]).is_err());
        let i = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(rigid_body(i, 0.1).is_err());
        assert!(thermoviscous(DMatrix::identity(3, 3), 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn non_finite_value_flagged() {
        let l = HerglotzLagrangian::custom("log", 0, 1, |_, y, _| y[0].ln());
        assert!(matches!(l.eval(&[], &[-1.0], 0.0), Err(HerglotzError::NonFinite { .. })));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let l = rayleigh_1d(0.1);
        assert!(matches!(l.eval(&[1.0, 2.0], &[0.0], 0.0), Err(HerglotzError::DimensionMismatch { .. })));
    }
}
