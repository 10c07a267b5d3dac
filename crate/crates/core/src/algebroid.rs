//! Local charts of Lie algebroids.
//!
//! A chart over an `n`-dimensional base with fiber rank `r` is the pair of
//! functions `ρ^i_α(x)` (anchor) and `C^γ_{αβ}(x)` (structure functions),
//! with `ρ(e_α) = ρ^i_α ∂/∂x^i` and `[e_α, e_β] = C^γ_{αβ} e_γ`. Lie algebras
//! are charts with `n = 0`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, check_finite_slice, HerglotzError, Result};
use crate::fd;

/// Rank-3 tensor `C^γ_{αβ}` stored densely, indexed `(γ, α, β)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureTensor {
    rank: usize,
    data: Vec<f64>,
}

impl StructureTensor {
    pub fn zeros(rank: usize) -> Self {
        Self {
            rank,
            data: vec![0.0; rank * rank * rank],
        }
    }

    /// Builds a skew tensor from its `α < β` entries; the `α > β` half is the negation.
    pub fn skew_from_fn<F: FnMut(usize, usize, usize) -> f64>(rank: usize, mut upper: F) -> Self {
        let mut t = Self::zeros(rank);
        for g in 0..rank {
            for a in 0..rank {
                for b in (a + 1)..rank {
                    let v = upper(g, a, b);
                    t.set(g, a, b, v);
                    t.set(g, b, a, -v);
                }
            }
        }
        t
    }

    /// Levi-Civita symbol, the structure constants of so(3) in the standard basis.
    pub fn levi_civita() -> Self {
        Self::skew_from_fn(3, |g, a, b| match (a, b, g) {
            (0, 1, 2) | (1, 2, 0) => 1.0,
            (0, 2, 1) => -1.0,
            _ => 0.0,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    #[inline]
    fn idx(&self, g: usize, a: usize, b: usize) -> usize {
        (g * self.rank + a) * self.rank + b
    }

    #[inline]
    pub fn get(&self, g: usize, a: usize, b: usize) -> f64 {
        self.data[self.idx(g, a, b)]
    }

    #[inline]
    pub fn set(&mut self, g: usize, a: usize, b: usize, v: f64) {
        let i = self.idx(g, a, b);
        self.data[i] = v;
    }

    /// Sets `C^γ_{αβ} = v` and `C^γ_{βα} = -v`.
    pub fn set_skew(&mut self, g: usize, a: usize, b: usize, v: f64) {
        self.set(g, a, b, v);
        self.set(g, b, a, -v);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `½(C^γ_{αβ} − C^γ_{βα})`.
    pub fn antisymmetrized(&self) -> Self {
        let mut out = Self::zeros(self.rank);
        for g in 0..self.rank {
            for a in 0..self.rank {
                for b in 0..self.rank {
                    out.set(g, a, b, 0.5 * (self.get(g, a, b) - self.get(g, b, a)));
                }
            }
        }
        out
    }

    pub fn max_skew_defect(&self) -> f64 {
        let mut m: f64 = 0.0;
        for g in 0..self.rank {
            for a in 0..self.rank {
                for b in 0..self.rank {
                    m = m.max((self.get(g, a, b) + self.get(g, b, a)).abs());
                }
            }
        }
        m
    }

    /// `Σ_β C^γ_{αβ} y^β` as the matrix `(γ, α)`.
    pub fn contract_last(&self, y: &[f64]) -> DMatrix<f64> {
        let r = self.rank;
        DMatrix::from_fn(r, r, |g, a| (0..r).map(|b| self.get(g, a, b) * y[b]).sum())
    }

    fn axpy(&mut self, scale: f64, other: &Self) {
        for (d, o) in self.data.iter_mut().zip(&other.data) {
            *d += scale * o;
        }
    }
}

pub type MatrixField = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type MatrixPartials = Arc<dyn Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync>;
pub type StructureField = Arc<dyn Fn(&[f64]) -> StructureTensor + Send + Sync>;
pub type StructurePartials = Arc<dyn Fn(&[f64]) -> Vec<StructureTensor> + Send + Sync>;

/// Local data of a Lie algebroid over a single chart.
#[derive(Clone)]
pub struct AlgebroidChart {
    label: String,
    base_dim: usize,
    fiber_rank: usize,
    anchor: MatrixField,
    structure: StructureField,
    anchor_partials: Option<MatrixPartials>,
    structure_partials: Option<StructurePartials>,
    fd_step: f64,
}

impl fmt::Debug for AlgebroidChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AlgebroidChart")
            .field("label", &self.label)
            .field("base_dim", &self.base_dim)
            .field("fiber_rank", &self.fiber_rank)
            .finish_non_exhaustive()
    }
}

impl AlgebroidChart {
    /// Chart from raw callbacks. Nothing is antisymmetrized here; use
    /// [`AlgebroidChart::validate_identities`] to check user supplied data.
    pub fn new<A, C>(label: impl Into<String>, base_dim: usize, fiber_rank: usize, anchor: A, structure: C) -> Result<Self>
    where
        A: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        C: Fn(&[f64]) -> StructureTensor + Send + Sync + 'static,
    {
        if fiber_rank == 0 {
            return Err(HerglotzError::InvalidArgument("fiber rank must be positive".into()));
        }
        Ok(Self {
            label: label.into(),
            base_dim,
            fiber_rank,
            anchor: Arc::new(anchor),
            structure: Arc::new(structure),
            anchor_partials: None,
            structure_partials: None,
            fd_step: fd::DEFAULT_FD_STEP,
        })
    }

    /// Registers exact `∂ρ/∂x^j`, one `n×r` matrix per base coordinate.
    pub fn with_anchor_partials<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        self.anchor_partials = Some(Arc::new(f));
        self
    }

    /// Registers exact `∂C/∂x^j`.
    pub fn with_structure_partials<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<StructureTensor> + Send + Sync + 'static,
    {
        self.structure_partials = Some(Arc::new(f));
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
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

    fn check_point(&self, x: &[f64]) -> Result<()> {
        check_dim("base point", self.base_dim, x.len())?;
        check_finite_slice("base point", x)
    }

    /// `ρ^i_α(x)` as an `n×r` matrix.
    pub fn anchor_eval(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        let m = (self.anchor)(x);
        if m.shape() != (self.base_dim, self.fiber_rank) {
            return Err(HerglotzError::InvalidArgument(format!(
                "anchor callback returned {:?}, expected ({}, {})",
                m.shape(),
                self.base_dim,
                self.fiber_rank
            )));
        }
        if let Some(k) = m.iter().position(|v| !v.is_finite()) {
            let (i, a) = (k % self.base_dim.max(1), k / self.base_dim.max(1));
            return Err(HerglotzError::NonFinite {
                context: "anchor".into(),
                index: format!("rho[{i}][{a}]"),
            });
        }
        Ok(m)
    }

    /// `C^γ_{αβ}(x)`.
    pub fn structure_eval(&self, x: &[f64]) -> Result<StructureTensor> {
        self.check_point(x)?;
        let c = (self.structure)(x);
        if c.rank() != self.fiber_rank {
            return Err(HerglotzError::DimensionMismatch {
                what: "structure tensor rank".into(),
                expected: self.fiber_rank,
                found: c.rank(),
            });
        }
        if let Some(k) = c.as_slice().iter().position(|v| !v.is_finite()) {
            let r = self.fiber_rank;
            return Err(HerglotzError::NonFinite {
                context: "structure functions".into(),
                index: format!("C[{}][{}][{}]", k / (r * r), (k / r) % r, k % r),
            });
        }
        Ok(c)
    }

    /// `∂ρ/∂x^j` for every `j`, exact if registered, otherwise central differences at `h`.
    pub fn anchor_partials(&self, x: &[f64], h: f64) -> Result<Vec<DMatrix<f64>>> {
        self.check_point(x)?;
        Ok(match &self.anchor_partials {
            Some(f) => f(x),
            None => fd::matrix_partials(|p| (self.anchor)(p), x, h),
        })
    }

    /// `∂C/∂x^j` for every `j`, exact if registered, otherwise central differences at `h`.
    pub fn structure_partials(&self, x: &[f64], h: f64) -> Result<Vec<StructureTensor>> {
        self.check_point(x)?;
        if let Some(f) = &self.structure_partials {
            return Ok(f(x));
        }
        let mut buf = x.to_vec();
        Ok((0..x.len())
            .map(|j| {
                buf[j] = x[j] + h;
                let mut d = (self.structure)(&buf);
                buf[j] = x[j] - h;
                let m = (self.structure)(&buf);
                buf[j] = x[j];
                d.axpy(-1.0, &m);
                d.data.iter_mut().for_each(|v| *v /= 2.0 * h);
                d
            })
            .collect())
    }

    /// `ẋ − ρ(x) y`.
    pub fn admissibility_residual(&self, x: &[f64], xdot: &[f64], y: &[f64]) -> Result<DVector<f64>> {
        check_dim("base velocity", self.base_dim, xdot.len())?;
        check_dim("fiber coordinates", self.fiber_rank, y.len())?;
        let rho = self.anchor_eval(x)?;
        Ok(DVector::from_column_slice(xdot) - rho * DVector::from_column_slice(y))
    }

    /// Samples the skew, anchor/bracket compatibility and Jacobi identities.
    pub fn validate_identities(&self, points: &[Vec<f64>], fd_step: f64, tol: f64) -> Result<ValidationReport> {
        if points.is_empty() {
            return Err(HerglotzError::InvalidArgument("no sample points given".into()));
        }
        if !(fd_step > 0.0) {
            return Err(HerglotzError::InvalidArgument("fd_step must be positive".into()));
        }
        let (n, r) = (self.base_dim, self.fiber_rank);
        let mut report = ValidationReport {
            max_skew_residual: 0.0,
            max_compat_residual: 0.0,
            max_jacobi_residual: 0.0,
            sample_points: points.to_vec(),
            tolerance: tol,
            passed: false,
        };
        for x in points {
            let rho = self.anchor_eval(x)?;
            let c = self.structure_eval(x)?;
            let drho = self.anchor_partials(x, fd_step)?;
            let dc = self.structure_partials(x, fd_step)?;
            report.max_skew_residual = report.max_skew_residual.max(c.max_skew_defect());

            for a in 0..r {
                for b in 0..r {
                    for i in 0..n {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += rho[(j, a)] * drho[j][(i, b)] - rho[(j, b)] * drho[j][(i, a)];
                        }
                        for g in 0..r {
                            s -= rho[(i, g)] * c.get(g, a, b);
                        }
                        report.max_compat_residual = report.max_compat_residual.max(s.abs());
                    }
                }
            }

            // term(ν, α, β, γ) = ρ^i_α ∂_i C^ν_{βγ} + C^ν_{αμ} C^μ_{βγ}
            let term = |nu: usize, a: usize, b: usize, g: usize| -> f64 {
                let mut s = 0.0;
                for i in 0..n {
                    s += rho[(i, a)] * dc[i].get(nu, b, g);
                }
                for mu in 0..r {
                    s += c.get(nu, a, mu) * c.get(mu, b, g);
                }
                s
            };
            for nu in 0..r {
                for a in 0..r {
                    for b in 0..r {
                        for g in 0..r {
                            let cyc = term(nu, a, b, g) + term(nu, b, g, a) + term(nu, g, a, b);
                            report.max_jacobi_residual = report.max_jacobi_residual.max(cyc.abs());
                        }
                    }
                }
            }
        }
        report.passed = report.max_skew_residual <= tol
            && report.max_compat_residual <= tol
            && report.max_jacobi_residual <= tol;
        Ok(report)
    }

    /// Validation at the default sample grid (100 points of `[-1, 1]^n`, seed 42, step 1e-5).
    pub fn validate_default(&self, tol: f64) -> Result<ValidationReport> {
        let pts = sample_points(self.base_dim, DEFAULT_SAMPLE_COUNT, DEFAULT_SAMPLE_SEED);
        self.validate_identities(&pts, fd::DEFAULT_FD_STEP, tol)
    }
}

pub const DEFAULT_SAMPLE_COUNT: usize = 100;
pub const DEFAULT_SAMPLE_SEED: u64 = 42;

/// Outcome of [`AlgebroidChart::validate_identities`].
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub max_skew_residual: f64,
    pub max_compat_residual: f64,
    pub max_jacobi_residual: f64,
    pub sample_points: Vec<Vec<f64>>,
    pub tolerance: f64,
    pub passed: bool,
}

impl ValidationReport {
    pub fn max_residual(&self) -> f64 {
        self.max_skew_residual
            .max(self.max_compat_residual)
            .max(self.max_jacobi_residual)
    }
}

/// Uniform points in `[-1, 1]^n` from a fixed seed.
pub fn sample_points(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect()
}

// ---------------------------------------------------------------------------
// Builders

/// `TQ` over `ℝⁿ` in the coordinate frame: `ρ = id`, `C = 0`.
pub fn tangent_bundle(n: usize) -> Result<AlgebroidChart> {
    Ok(AlgebroidChart::new(
        format!("tangent_bundle({n})"),
        n,
        n,
        move |_| DMatrix::identity(n, n),
        move |_| StructureTensor::zeros(n),
    )?
    .with_anchor_partials(move |_| vec![DMatrix::zeros(n, n); n])
    .with_structure_partials(move |_| vec![StructureTensor::zeros(n); n]))
}

fn require_skew(c: &StructureTensor, what: &str) -> Result<StructureTensor> {
    let defect = c.max_skew_defect();
    if defect > 1e-12 {
        return Err(HerglotzError::InvalidArgument(format!(
            "{what} is not skew in its lower indices (defect {defect:e})"
        )));
    }
    Ok(StructureTensor::skew_from_fn(c.rank(), |g, a, b| c.get(g, a, b)))
}

/// A Lie algebra with constant structure constants, as a chart over a point.
pub fn lie_algebra(label: impl Into<String>, c: &StructureTensor) -> Result<AlgebroidChart> {
    let c = require_skew(c, "structure constants")?;
    let r = c.rank();
    AlgebroidChart::new(label, 0, r, move |_| DMatrix::zeros(0, r), move |_| c.clone())
}

/// so(3) with `[e_α, e_β] = ε_{αβγ} e_γ`.
pub fn so3() -> AlgebroidChart {
    lie_algebra("so(3)", &StructureTensor::levi_civita()).expect("levi-civita is skew")
}

/// Action algebroid `ℝⁿ × 𝔤`: the anchor columns are the infinitesimal generators.
pub fn action_algebroid<G>(label: impl Into<String>, n: usize, generators: G, c: &StructureTensor) -> Result<AlgebroidChart>
where
    G: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
{
    let c = require_skew(c, "structure constants")?;
    let r = c.rank();
    let probe = generators(&vec![0.0; n]);
    if probe.shape() != (n, r) {
        return Err(HerglotzError::InvalidArgument(format!(
            "generator matrix has shape {:?}, expected ({n}, {r})",
            probe.shape()
        )));
    }
    AlgebroidChart::new(label, n, r, generators, move |_| c.clone())
}

/// so(3) acting on ℝ³ by rotations, with generators `x ↦ x × e_α` so that the
/// anchor is a Lie algebra homomorphism for the `ε` bracket.
pub fn so3_action_on_r3() -> AlgebroidChart {
    action_algebroid(
        "so(3) ⋉ ℝ³",
        3,
        |x| {
            // column α is x × e_α
            DMatrix::from_row_slice(3, 3, &[0.0, -x[2], x[1], x[2], 0.0, -x[0], -x[1], x[0], 0.0])
        },
        &StructureTensor::levi_civita(),
    )
    .expect("so(3) action data is consistent")
}

/// Principal connection coefficients `𝓐^A_i(x)` (an `n×d` matrix) with optional exact partials.
#[derive(Clone)]
pub struct ConnectionForm {
    base_dim: usize,
    group_dim: usize,
    value: MatrixField,
    partials: Option<MatrixPartials>,
}

impl fmt::Debug for ConnectionForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConnectionForm")
            .field("base_dim", &self.base_dim)
            .field("group_dim", &self.group_dim)
            .finish_non_exhaustive()
    }
}

impl ConnectionForm {
    pub fn new<F>(base_dim: usize, group_dim: usize, value: F) -> Self
    where
        F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            base_dim,
            group_dim,
            value: Arc::new(value),
            partials: None,
        }
    }

    pub fn with_partials<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        self.partials = Some(Arc::new(f));
        self
    }

    pub fn constant(a: DMatrix<f64>) -> Self {
        let (n, d) = a.shape();
        Self::new(n, d, move |_| a.clone()).with_partials(move |_| vec![DMatrix::zeros(n, d); n])
    }

    /// Abelian linear gauge `𝓐_i(x) = 𝓐⁰_i + ½ F_{ji} x^j` for a constant skew field `F`
    /// acting on internal direction `component`; its curvature is `F`.
    pub fn linear_gauge(base: DMatrix<f64>, field: DMatrix<f64>, component: usize) -> Self {
        let (n, d) = base.shape();
        let f2 = field.clone();
        Self::new(n, d, move |x| {
            let mut a = base.clone();
            for i in 0..n {
                for j in 0..n {
                    a[(i, component)] += 0.5 * f2[(j, i)] * x[j];
                }
            }
            a
        })
        .with_partials(move |_| {
            (0..n)
                .map(|k| {
                    let mut m = DMatrix::zeros(n, d);
                    for i in 0..n {
                        m[(i, component)] = 0.5 * field[(k, i)];
                    }
                    m
                })
                .collect()
        })
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn group_dim(&self) -> usize {
        self.group_dim
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        (self.value)(x)
    }

    /// `∂𝓐/∂x^k` for each `k`.
    pub fn partials(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        match &self.partials {
            Some(f) => f(x),
            None => fd::matrix_partials(|p| (self.value)(p), x, fd::DEFAULT_FD_STEP),
        }
    }
}

/// Curvature `𝓑^D_{ij} = ∂_i𝓐^D_j − ∂_j𝓐^D_i − c^D_{BE} 𝓐^B_i 𝓐^E_j`, the form
/// compatible with the Atiyah bracket table used by [`atiyah_chart`].
pub fn curvature_from_connection(conn: &ConnectionForm, c: &StructureTensor, x: &[f64]) -> Vec<DMatrix<f64>> {
    let (n, d) = (conn.base_dim, conn.group_dim);
    let a = conn.eval(x);
    let da = conn.partials(x);
    (0..d)
        .map(|dd| {
            DMatrix::from_fn(n, n, |i, j| {
                let mut v = da[i][(j, dd)] - da[j][(i, dd)];
                for b in 0..d {
                    for e in 0..d {
                        v -= c.get(dd, b, e) * a[(i, b)] * a[(j, e)];
                    }
                }
                v
            })
        })
        .collect()
}

/// Atiyah algebroid chart in the frame `{e_i, ê_A}`: `ρ(e_i) = ∂/∂q^i`, `ρ(ê_A) = 0`,
/// `[e_i, e_j] = −𝓑^A_{ij} ê_A`, `[e_i, ê_A] = c^C_{AB} 𝓐^B_i ê_C`, `[ê_A, ê_B] = c^C_{AB} ê_C`.
///
/// Fiber index order is `(e_1..e_n, ê_1..ê_d)`. `curvature(x)[A]` is the `n×n` matrix `𝓑^A_{ij}`.
pub fn atiyah_chart<B>(label: impl Into<String>, connection: ConnectionForm, curvature: B, c: &StructureTensor) -> Result<AlgebroidChart>
where
    B: Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
{
    let (n, d) = (connection.base_dim, connection.group_dim);
    if c.rank() != d {
        return Err(HerglotzError::DimensionMismatch {
            what: "Lie algebra structure constants".into(),
            expected: d,
            found: c.rank(),
        });
    }
    let c = require_skew(c, "structure constants")?;
    let origin = vec![0.0; n];
    let a0 = connection.eval(&origin);
    if a0.shape() != (n, d) {
        return Err(HerglotzError::InvalidArgument(format!(
            "connection coefficients have shape {:?}, expected ({n}, {d})",
            a0.shape()
        )));
    }
    let b0 = curvature(&origin);
    if b0.len() != d || b0.iter().any(|m| m.shape() != (n, n)) {
        return Err(HerglotzError::InvalidArgument(format!(
            "curvature must be {d} matrices of shape ({n}, {n})"
        )));
    }
    let r = n + d;
    let structure = move |x: &[f64]| {
        let a = connection.eval(x);
        let b = curvature(x);
        StructureTensor::skew_from_fn(r, |g, al, be| {
            if g < n {
                return 0.0;
            }
            let cc = g - n;
            match (al < n, be < n) {
                (true, true) => -b[cc][(al, be)],
                (true, false) => (0..d).map(|bb| c.get(cc, be - n, bb) * a[(al, bb)]).sum(),
                (false, false) => c.get(cc, al - n, be - n),
                (false, true) => unreachable!("α < β"),
            }
        })
    };
    Ok(AlgebroidChart::new(
        label,
        n,
        r,
        move |_| {
            let mut m = DMatrix::zeros(n, r);
            for i in 0..n {
                m[(i, i)] = 1.0;
            }
            m
        },
        structure,
    )?
    .with_anchor_partials(move |_| vec![DMatrix::zeros(n, r); n]))
}

/// Atiyah chart whose curvature is computed from the connection by [`curvature_from_connection`].
pub fn atiyah_chart_from_connection(label: impl Into<String>, connection: ConnectionForm, c: &StructureTensor) -> Result<AlgebroidChart> {
    let conn = connection.clone();
    let cc = c.clone();
    atiyah_chart(label, connection, move |x| curvature_from_connection(&conn, &cc, x), c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eps() -> StructureTensor {
        StructureTensor::levi_civita()
    }

    #[test]
    fn levi_civita_entries() {
        let e = eps();
        assert_eq!(e.get(2, 0, 1), 1.0);
        assert_eq!(e.get(0, 1, 2), 1.0);
        assert_eq!(e.get(1, 2, 0), 1.0);
        assert_eq!(e.get(1, 0, 2), -1.0);
        assert_eq!(e.get(2, 1, 0), -1.0);
        assert_eq!(e.get(0, 0, 1), 0.0);
    }

    #[test]
    fn tangent_bundle_anchor_is_identity_and_bracket_vanishes() {
        let tb = tangent_bundle(2).unwrap();
        let rho = tb.anchor_eval(&[0.3, -2.0]).unwrap();
        assert_eq!(rho, DMatrix::identity(2, 2));
        let c = tb.structure_eval(&[0.3, -2.0]).unwrap();
        assert!(c.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lie_algebra_anchor_is_empty() {
        let g = so3();
        let rho = g.anchor_eval(&[]).unwrap();
        assert_eq!(rho.shape(), (0, 3));
        assert_eq!(g.structure_eval(&[]).unwrap(), eps());
        assert_eq!(g.admissibility_residual(&[], &[], &[1.0, 2.0, 3.0]).unwrap().len(), 0);
    }

    #[test]
    fn atiyah_anchor_is_identity_block() {
        let conn = ConnectionForm::constant(DMatrix::from_row_slice(2, 1, &[0.4, -0.1]));
        let chart = atiyah_chart("abelian", conn, |_| vec![DMatrix::from_row_slice(2, 2, &[0.0, 1.5, -1.5, 0.0])], &StructureTensor::zeros(1)).unwrap();
        let rho = chart.anchor_eval(&[1.0, 2.0]).unwrap();
        assert_eq!(rho, DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]));
        let c = chart.structure_eval(&[1.0, 2.0]).unwrap();
        assert_eq!(c.get(2, 0, 1), -1.5);
        assert_eq!(c.get(2, 1, 0), 1.5);
    }

    #[test]
    fn atiyah_table_entries_nonabelian() {
        let a = DMatrix::from_row_slice(1, 3, &[0.2, -0.5, 0.7]);
        let conn = ConnectionForm::constant(a.clone());
        let chart = atiyah_chart("su2", conn, |_| vec![DMatrix::zeros(1, 1); 3], &eps()).unwrap();
        let c = chart.structure_eval(&[0.0]).unwrap();
        // [e_1, ê_A] = c^C_{AB} 𝓐^B_1 ê_C
        for aa in 0..3 {
            for cc in 0..3 {
                let expect: f64 = (0..3).map(|b| eps().get(cc, aa, b) * a[(0, b)]).sum();
                assert_eq!(c.get(1 + cc, 0, 1 + aa), expect);
            }
        }
        assert_eq!(c.get(1 + 2, 1, 2), 1.0);
    }

    #[test]
    fn anchor_non_finite_names_index() {
        let chart = AlgebroidChart::new("bad", 1, 2, |_| DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]), |_| StructureTensor::zeros(2)).unwrap();
        match chart.anchor_eval(&[0.0]) {
            Err(HerglotzError::NonFinite { index, .. }) => assert_eq!(index, "rho[0][1]"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(chart.anchor_eval(&[f64::INFINITY]), Err(HerglotzError::NonFinite { .. })));
    }

    #[test]
    fn admissibility_arithmetic() {
        let chart = AlgebroidChart::new("row", 1, 2, |_| DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), |_| StructureTensor::zeros(2)).unwrap();
        let r = chart.admissibility_residual(&[0.0], &[3.0], &[2.0, 0.0]).unwrap();
        assert_eq!(r[0], 1.0);
        assert!(matches!(chart.admissibility_residual(&[0.0], &[3.0], &[2.0]), Err(HerglotzError::DimensionMismatch { .. })));
        let tb = tangent_bundle(2).unwrap();
        assert_eq!(tb.admissibility_residual(&[0.1, 0.2], &[1.0, -1.0], &[1.0, -1.0]).unwrap().norm(), 0.0);
    }

    #[test]
    fn so3_constant_chart_satisfies_jacobi() {
        let rep = so3().validate_identities(&[vec![], vec![]], 1e-5, 1e-14).unwrap();
        assert!(rep.max_jacobi_residual <= 1e-14);
        assert!(rep.passed);
    }

    #[test]
    fn raw_perturbed_so3_is_rejected() {
        // only C^3_{12} moved to 1.1; C^3_{21} stays −1
        let chart = AlgebroidChart::new("so3-perturbed", 0, 3, |_| DMatrix::zeros(0, 3), |_| {
            let mut c = StructureTensor::levi_civita();
            c.set(2, 0, 1, 1.1);
            c
        })
        .unwrap();
        let rep = chart.validate_identities(&[vec![]], 1e-5, 1e-6).unwrap();
        // cyclic sum over (1,1,2) for ν = 2: 1.1·C^2_{13} + (−1)·C^2_{13} = −0.1
        assert!((rep.max_jacobi_residual - 0.1).abs() < 1e-12, "{}", rep.max_jacobi_residual);
        assert!(rep.max_jacobi_residual > 1e-2);
        assert!(!rep.passed);
    }

    #[test]
    fn skew_rescaling_of_so3_is_still_a_lie_algebra() {
        let mut c = StructureTensor::levi_civita();
        c.set_skew(2, 0, 1, 1.1);
        let rep = lie_algebra("bianchi", &c).unwrap().validate_default(1e-12).unwrap();
        assert!(rep.passed);
        // a skew perturbation of [e_1, e_2] along e_1 breaks Jacobi: J = 0.1 e_2
        let mut c = StructureTensor::levi_civita();
        c.set_skew(0, 0, 1, 0.1);
        let rep = lie_algebra("broken", &c).unwrap().validate_default(1e-6).unwrap();
        assert!((rep.max_jacobi_residual - 0.1).abs() < 1e-12);
        assert_eq!(rep.max_skew_residual, 0.0);
        assert!(!rep.passed);
    }

    #[test]
    fn so3_action_is_compatible() {
        let rep = so3_action_on_r3().validate_identities(&sample_points(3, 20, 1), 1e-5, 1e-6).unwrap();
        assert!(rep.max_compat_residual <= 1e-6, "{}", rep.max_compat_residual);
        assert!(rep.passed);
    }

    #[test]
    fn left_action_generators_fail_compatibility() {
        // x ↦ e_α × x is an anti-homomorphism for the ε bracket
        let chart = action_algebroid("wrong", 3, |x| DMatrix::from_row_slice(3, 3, &[0.0, x[2], -x[1], -x[2], 0.0, x[0], x[1], -x[0], 0.0]), &eps()).unwrap();
        let rep = chart.validate_default(1e-6).unwrap();
        assert!(rep.max_compat_residual > 1e-2);
    }

    #[test]
    fn non_skew_constants_rejected() {
        let mut c = StructureTensor::levi_civita();
        c.set(0, 1, 2, 2.0);
        assert!(matches!(lie_algebra("bad", &c), Err(HerglotzError::InvalidArgument(_))));
    }

    #[test]
    fn empty_points_rejected() {
        assert!(matches!(so3().validate_identities(&[], 1e-5, 1e-6), Err(HerglotzError::InvalidArgument(_))));
    }

    #[test]
    fn curvature_sign_matches_bracket_table() {
        let conn = ConnectionForm::new(2, 3, |x| DMatrix::from_row_slice(2, 3, &[0.3 + 0.2 * x[1], -0.1, 0.5 * x[0], 0.1 * x[0] * x[1], 0.4, -0.2 + 0.3 * x[0]]));
        let chart = atiyah_chart_from_connection("su2 bundle", conn.clone(), &eps()).unwrap();
        let rep = chart.validate_default(1e-6).unwrap();
        assert!(rep.passed, "{rep:?}");

        // the other sign of the quadratic term violates Jacobi
        let flipped = atiyah_chart("flipped", conn.clone(), move |x| {
            let a = conn.eval(x);
            let mut b = curvature_from_connection(&conn, &StructureTensor::levi_civita(), x);
            for (dd, m) in b.iter_mut().enumerate() {
                for i in 0..2 {
                    for j in 0..2 {
                        let q: f64 = (0..3).flat_map(|bb| (0..3).map(move |e| (bb, e))).map(|(bb, e)| StructureTensor::levi_civita().get(dd, bb, e) * a[(i, bb)] * a[(j, e)]).sum();
                        m[(i, j)] += 2.0 * q;
                    }
                }
            }
            b
        }, &eps())
        .unwrap();
        assert!(flipped.validate_default(1e-6).unwrap().max_jacobi_residual > 1e-2);
    }
}
