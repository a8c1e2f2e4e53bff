//! P1 finite elements on an interval.
//!
//! Assembles mass and stiffness matrices for `-(a u')' + q u` with a
//! 2-point Gauss rule per element, solves tridiagonal systems by the
//! Thomas algorithm, and recovers conormal boundary fluxes variationally:
//! testing the discrete equation against the boundary hat function gives
//! the flux with the accuracy of the interior solution rather than of a
//! one-sided difference.
//!
//! Sign convention for fluxes: `∂_{ν_a} u = a u' ν` with `ν` the outward
//! normal, so `ν = -1` at the left endpoint.

use crate::expr::Expr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("mesh needs at least 2 elements")]
    TooFewElements,
    #[error("mesh nodes must increase strictly from 0 to 1")]
    BadNodes,
    #[error("ellipticity violated: a({x}) = {value} <= 0")]
    NotElliptic { x: f64, value: f64 },
    #[error("coefficient evaluation failed: {0}")]
    Coefficient(#[from] crate::expr::EvalError),
    #[error("zero pivot in tridiagonal solve at row {0}")]
    ZeroPivot(usize),
    #[error("singular Neumann system: q vanishes identically")]
    SingularNeumann,
    #[error("dimension mismatch: matrix is {n}x{n}, vector has {len} entries")]
    DimensionMismatch { n: usize, len: usize },
}

/// Spatial mesh `x_0 = 0 < x_1 < … < x_M = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    nodes: Vec<f64>,
}

impl Mesh1D {
    pub fn uniform(m: usize) -> Result<Self, FemError> {
        if m < 2 {
            return Err(FemError::TooFewElements);
        }
        let mut nodes: Vec<f64> = (0..=m).map(|i| i as f64 / m as f64).collect();
        nodes[m] = 1.0;
        Ok(Mesh1D { nodes })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self, FemError> {
        if nodes.len() < 3 {
            return Err(FemError::TooFewElements);
        }
        if nodes[0] != 0.0 || *nodes.last().unwrap() != 1.0 {
            return Err(FemError::BadNodes);
        }
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) {
                return Err(FemError::BadNodes);
            }
        }
        Ok(Mesh1D { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of elements `M` (there are `M + 1` nodes).
    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

/// Diffusivity `a` (strictly positive) and potential `q >= 0`, both
/// expressions in `x`.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    pub a: Expr,
    pub q: Expr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcKind {
    Dirichlet,
    Neumann,
}

/// Boundary condition kind plus data at `x = 0` and `x = 1`, as
/// expressions in `t` (constants in all the shipped experiments).
#[derive(Debug, Clone)]
pub struct BoundarySpec {
    pub kind: BcKind,
    pub left: Expr,
    pub right: Expr,
}

impl BoundarySpec {
    pub fn homogeneous(kind: BcKind) -> Self {
        BoundarySpec {
            kind,
            left: Expr::parse("0").unwrap(),
            right: Expr::parse("0").unwrap(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Symmetric tridiagonal matrix stored by diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct TriDiag {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl TriDiag {
    pub fn zeros(n: usize) -> Self {
        TriDiag {
            sub: vec![0.0; n.saturating_sub(1)],
            diag: vec![0.0; n],
            sup: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = self.diag[i] * v[i];
            if i > 0 {
                acc += self.sub[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                acc += self.sup[i] * v[i + 1];
            }
            out[i] = acc;
        }
        out
    }

    pub fn row_dot(&self, i: usize, v: &[f64]) -> f64 {
        let mut acc = self.diag[i] * v[i];
        if i > 0 {
            acc += self.sub[i - 1] * v[i - 1];
        }
        if i + 1 < self.n() {
            acc += self.sup[i] * v[i + 1];
        }
        acc
    }

    /// `self + s * other`, entrywise.
    pub fn add_scaled(&self, other: &TriDiag, s: f64) -> TriDiag {
        TriDiag {
            sub: self
                .sub
                .iter()
                .zip(&other.sub)
                .map(|(a, b)| a + s * b)
                .collect(),
            diag: self
                .diag
                .iter()
                .zip(&other.diag)
                .map(|(a, b)| a + s * b)
                .collect(),
            sup: self
                .sup
                .iter()
                .zip(&other.sup)
                .map(|(a, b)| a + s * b)
                .collect(),
        }
    }

    /// Thomas algorithm. The factorization is not reused; rebuilding per
    /// solve is O(n) and keeps the stepper allocation-free of surprises.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, FemError> {
        let n = self.n();
        if rhs.len() != n {
            return Err(FemError::DimensionMismatch { n, len: rhs.len() });
        }
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let scale = self
            .diag
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-300);
        if self.diag[0].abs() <= 1e-300 * scale {
            return Err(FemError::ZeroPivot(0));
        }
        c[0] = if n > 1 { self.sup[0] / self.diag[0] } else { 0.0 };
        d[0] = rhs[0] / self.diag[0];
        for i in 1..n {
            let denom = self.diag[i] - self.sub[i - 1] * c[i - 1];
            if denom.abs() <= 1e-300 * scale {
                return Err(FemError::ZeroPivot(i));
            }
            if i + 1 < n {
                c[i] = self.sup[i] / denom;
            }
            d[i] = (rhs[i] - self.sub[i - 1] * d[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Ok(d)
    }

    /// Solve with prescribed values at the first and last unknown: the
    /// boundary rows are eliminated and their couplings moved to the
    /// right-hand side, preserving symmetry of the interior block.
    pub fn solve_with_dirichlet(
        &self,
        rhs: &[f64],
        left: f64,
        right: f64,
    ) -> Result<Vec<f64>, FemError> {
        let n = self.n();
        if rhs.len() != n {
            return Err(FemError::DimensionMismatch { n, len: rhs.len() });
        }
        if n < 3 {
            return Err(FemError::TooFewElements);
        }
        let m = n - 2;
        let inner = TriDiag {
            sub: self.sub[1..n - 2].to_vec(),
            diag: self.diag[1..n - 1].to_vec(),
            sup: self.sup[1..n - 2].to_vec(),
        };
        let mut b = rhs[1..n - 1].to_vec();
        b[0] -= self.sub[0] * left;
        b[m - 1] -= self.sup[n - 2] * right;
        let interior = inner.solve(&b)?;
        let mut out = Vec::with_capacity(n);
        out.push(left);
        out.extend(interior);
        out.push(right);
        Ok(out)
    }
}

/// Mass and stiffness matrices for `-(a u')' + q u` on the mesh.
/// The stiffness carries both the `a`- and the `q`-term.
pub fn assemble(mesh: &Mesh1D, coeff: &CoefficientField) -> Result<(TriDiag, TriDiag), FemError> {
    let n = mesh.n_nodes();
    let mut mass = TriDiag::zeros(n);
    let mut stiff = TriDiag::zeros(n);
    // 2-point Gauss per element: exact for the cubic mass integrand and
    // for quadratic coefficient variation in the stiffness.
    let gp = 1.0 / 3.0f64.sqrt();
    for e in 0..mesh.n_elements() {
        let (xl, xr) = (mesh.nodes[e], mesh.nodes[e + 1]);
        let h = xr - xl;
        let mid = 0.5 * (xl + xr);
        let half = 0.5 * h;
        let mut m_local = [[0.0f64; 2]; 2];
        let mut s_local = [[0.0f64; 2]; 2];
        for &xi in &[-gp, gp] {
            let x = mid + half * xi;
            let w = half;
            let a = coeff.a.eval(&[("x", x)])?;
            if !(a > 0.0) {
                return Err(FemError::NotElliptic { x, value: a });
            }
            let q = coeff.q.eval(&[("x", x)])?;
            // hat values and slopes on the element
            let phi = [(xr - x) / h, (x - xl) / h];
            let dphi = [-1.0 / h, 1.0 / h];
            for i in 0..2 {
                for j in 0..2 {
                    m_local[i][j] += w * phi[i] * phi[j];
                    s_local[i][j] += w * (a * dphi[i] * dphi[j] + q * phi[i] * phi[j]);
                }
            }
        }
        mass.diag[e] += m_local[0][0];
        mass.diag[e + 1] += m_local[1][1];
        mass.sup[e] += m_local[0][1];
        mass.sub[e] += m_local[1][0];
        stiff.diag[e] += s_local[0][0];
        stiff.diag[e + 1] += s_local[1][1];
        stiff.sup[e] += s_local[0][1];
        stiff.sub[e] += s_local[1][0];
    }
    Ok((mass, stiff))
}

/// Load vector `∫ f φ_i` for an expression `f` in `x`.
pub fn load_vector(mesh: &Mesh1D, f: &Expr) -> Result<Vec<f64>, FemError> {
    let n = mesh.n_nodes();
    let mut load = vec![0.0; n];
    let gp = 1.0 / 3.0f64.sqrt();
    for e in 0..mesh.n_elements() {
        let (xl, xr) = (mesh.nodes[e], mesh.nodes[e + 1]);
        let h = xr - xl;
        let mid = 0.5 * (xl + xr);
        let half = 0.5 * h;
        for &xi in &[-gp, gp] {
            let x = mid + half * xi;
            let w = half;
            let v = f.eval(&[("x", x)])?;
            load[e] += w * v * (xr - x) / h;
            load[e + 1] += w * v * (x - xl) / h;
        }
    }
    Ok(load)
}

/// Track whether the potential `q` vanishes identically on the mesh
/// quadrature points (the pure-Neumann singularity test).
pub fn q_is_zero(mesh: &Mesh1D, coeff: &CoefficientField) -> Result<bool, FemError> {
    let gp = 1.0 / 3.0f64.sqrt();
    for e in 0..mesh.n_elements() {
        let (xl, xr) = (mesh.nodes[e], mesh.nodes[e + 1]);
        let mid = 0.5 * (xl + xr);
        let half = 0.5 * (xr - xl);
        for &xi in &[-gp, gp] {
            if coeff.q.eval(&[("x", mid + half * xi)])? != 0.0 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// FE solution of `-(a w')' + q w = load` with homogeneous boundary
/// conditions of the given kind. A pure Neumann problem with `q ≡ 0` is
/// singular and reported as such, never regularized.
pub fn elliptic_solve(
    mesh: &Mesh1D,
    coeff: &CoefficientField,
    bc: BcKind,
    load: &[f64],
) -> Result<Vec<f64>, FemError> {
    let (_, stiff) = assemble(mesh, coeff)?;
    match bc {
        BcKind::Dirichlet => stiff.solve_with_dirichlet(load, 0.0, 0.0),
        BcKind::Neumann => {
            if q_is_zero(mesh, coeff)? {
                return Err(FemError::SingularNeumann);
            }
            stiff.solve(load)
        }
    }
}

fn boundary_row(side: Side, n: usize) -> usize {
    match side {
        Side::Left => 0,
        Side::Right => n - 1,
    }
}

/// Variational (consistent) conormal flux `a u' ν` at a boundary node:
/// the residual of the discrete equation tested against the boundary hat
/// function. `time_term` carries the mass-applied discrete time
/// derivative at that row for evolution problems; pass 0 for steady
/// states.
pub fn boundary_flux(
    side: Side,
    stiff_full: &TriDiag,
    u: &[f64],
    load_full: &[f64],
    time_term: f64,
) -> f64 {
    let b = boundary_row(side, u.len());
    time_term + stiff_full.row_dot(b, u) - load_full[b]
}

/// One-sided difference flux, kept for comparison with the consistent
/// extractor (first order only).
pub fn naive_flux(
    mesh: &Mesh1D,
    coeff: &CoefficientField,
    u: &[f64],
    side: Side,
) -> Result<f64, FemError> {
    let nodes = mesh.nodes();
    let n = nodes.len();
    Ok(match side {
        Side::Left => {
            let a = coeff.a.eval(&[("x", nodes[0])])?;
            -a * (u[1] - u[0]) / (nodes[1] - nodes[0])
        }
        Side::Right => {
            let a = coeff.a.eval(&[("x", nodes[n - 1])])?;
            a * (u[n - 1] - u[n - 2]) / (nodes[n - 1] - nodes[n - 2])
        }
    })
}
