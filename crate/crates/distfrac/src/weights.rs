//! L1 convolution weights and their distributed-order aggregation.
//!
//! The L1 scheme approximates the Caputo derivative of order `α` at
//! `t_n` by a convolution of solution values,
//!
//! ```text
//! ∂_t^α u(t_n) ≈ Σ_{j=0}^{n} b_{j,n} u^{n-j},      Σ_j b_{j,n} = 0,
//! ```
//!
//! obtained by differencing the piecewise-linear interpolant of `u`
//! inside the weakly singular kernel. On a uniform grid with step `τ`
//! the weights have the closed form
//!
//! ```text
//! b_{j,n} = [Γ(2-α) τ^α]^{-1} ·  { 1                                   j = 0
//!                                { (j+1)^{1-α} + (j-1)^{1-α} - 2j^{1-α} 0 < j < n
//!                                { -(n^{1-α} - (n-1)^{1-α})             j = n
//! ```
//!
//! and `b_{j,n}` is independent of `n` for `j < n`, so one row serves
//! every step. The distributed-order weights are the `α`-quadrature
//!
//! ```text
//! p_{j,n} = Σ_i w_i μ(α_i) b_{j,n}^{(α_i)},
//! ```
//!
//! with trapezoid weights `w_i = c_i δ_α` for density-type `μ` or the
//! atom masses for purely discrete `μ`. Indicator and expression
//! densities are integrated over their support interval only, which
//! removes the `O(δ_α)` edge error an indicator would otherwise incur.

use crate::expr::Expr;
use crate::grid::TimeGrid;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightsError {
    #[error("gamma function pole at z = {0}")]
    GammaPole(f64),
    #[error("fractional order must lie in (0, 1), got {0}")]
    OrderOutOfRange(f64),
    #[error("target index {n} outside 1..={max}")]
    IndexOutOfRange { n: usize, max: usize },
    #[error("alpha quadrature needs at least one node")]
    EmptyQuadrature,
    #[error("alpha quadrature nodes must increase strictly inside [0, 1]")]
    BadQuadratureNodes,
    #[error("atom masses must be positive")]
    BadAtomMass,
    #[error("weight support must satisfy 0 <= b1 < b2 <= 1, got [{0}, {1}]")]
    BadSupport(f64, f64),
    #[error("weight density evaluation failed: {0}")]
    Density(#[from] crate::expr::EvalError),
    #[error("grid-backed weight needs at least 2 samples")]
    TooFewSamples,
    #[error("sample count {got} does not match quadrature size {want}")]
    SampleMismatch { got: usize, want: usize },
    #[error("discrete weight has no pointwise density")]
    NoPointwiseDensity,
}

#[allow(clippy::excessive_precision)]
const LANCZOS_COEF: [f64; 9] = [
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
];

pub(crate) fn lanczos_gamma(z: f64) -> f64 {
    use std::f64::consts::PI;
    if z < 0.5 {
        // reflection: Γ(z) Γ(1-z) = π / sin(πz)
        PI / ((PI * z).sin() * lanczos_gamma(1.0 - z))
    } else {
        let z = z - 1.0;
        let mut x = LANCZOS_COEF[0];
        for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            x += c / (z + i as f64);
        }
        let t = z + 7.5;
        (2.0 * PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * x
    }
}

/// Euler's Gamma function (Lanczos approximation, reflection for the
/// left half-line). Errors at the poles `z = 0, -1, -2, …`.
pub fn gamma(z: f64) -> Result<f64, WeightsError> {
    if z <= 0.0 && z == z.trunc() {
        return Err(WeightsError::GammaPole(z));
    }
    Ok(lanczos_gamma(z))
}

/// Signed L1 row for order `alpha` at target node `n`: coefficients of
/// `u^{n-j}`, `j = 0..=n`. The row sums to zero, so a constant history
/// has zero discrete derivative; equivalently the scheme may be applied
/// to `u - u^0`, in which case the `j = n` entry is inert.
pub fn l1_row(grid: &TimeGrid, alpha: f64, n: usize) -> Result<Vec<f64>, WeightsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(WeightsError::OrderOutOfRange(alpha));
    }
    if n < 1 || n > grid.n_steps() {
        return Err(WeightsError::IndexOutOfRange {
            n,
            max: grid.n_steps(),
        });
    }
    if grid.is_uniform() {
        Ok(l1_row_uniform(grid.step(1), alpha, n))
    } else {
        Ok(l1_row_nodes(grid.nodes(), alpha, n))
    }
}

fn l1_row_uniform(tau: f64, alpha: f64, n: usize) -> Vec<f64> {
    let s = 1.0 - alpha;
    let scale = 1.0 / (lanczos_gamma(2.0 - alpha) * tau.powf(alpha));
    let mut row = Vec::with_capacity(n + 1);
    row.push(scale);
    // rolling powers j^{1-α}
    let mut pm = 0.0f64; // (j-1)^s
    let mut p0 = 1.0f64; // j^s
    for j in 1..n {
        let pp = ((j + 1) as f64).powf(s);
        row.push(scale * (pp + pm - 2.0 * p0));
        pm = p0;
        p0 = pp;
    }
    // j = n carries the minus sign so that the row annihilates constants
    let tail = if n == 1 {
        1.0
    } else {
        (n as f64).powf(s) - ((n - 1) as f64).powf(s)
    };
    row.push(-scale * tail);
    row
}

/// General-spacing L1 row from the piecewise-linear interpolant: the
/// increment `u^j - u^{j-1}` carries the kernel integral
/// `[(t_n-t_{j-1})^{1-α} - (t_n-t_j)^{1-α}] / [Γ(2-α)(t_j-t_{j-1})]`.
fn l1_row_nodes(nodes: &[f64], alpha: f64, n: usize) -> Vec<f64> {
    let s = 1.0 - alpha;
    let g = lanczos_gamma(2.0 - alpha);
    let tn = nodes[n];
    // c[j-1] multiplies (u^j - u^{j-1}), j = 1..=n
    let mut c = Vec::with_capacity(n);
    let mut prev_pow = (tn - nodes[0]).powf(s);
    for j in 1..=n {
        let cur_pow = (tn - nodes[j]).powf(s);
        c.push((prev_pow - cur_pow) / (g * (nodes[j] - nodes[j - 1])));
        prev_pow = cur_pow;
    }
    let mut row = vec![0.0; n + 1];
    row[0] = c[n - 1];
    for i in 1..n {
        // coefficient of u^i is c_i - c_{i+1}; it sits at lag n - i
        row[n - i] = c[i - 1] - c[i];
    }
    row[n] = -c[0];
    row
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadKind {
    Trapezoid,
    Atoms,
}

/// Quadrature in the order variable `α`: composite trapezoid over an
/// interval, or a list of point masses.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaQuadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    kind: QuadKind,
}

impl AlphaQuadrature {
    /// Composite trapezoid with `n` subintervals on `[0, 1]`.
    pub fn trapezoid(n: usize) -> Result<Self, WeightsError> {
        Self::trapezoid_on(0.0, 1.0, n)
    }

    /// Composite trapezoid with `n` subintervals on `[a, b] ⊆ [0, 1]`.
    pub fn trapezoid_on(a: f64, b: f64, n: usize) -> Result<Self, WeightsError> {
        if n < 1 {
            return Err(WeightsError::EmptyQuadrature);
        }
        if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || !(a < b) {
            return Err(WeightsError::BadQuadratureNodes);
        }
        let h = (b - a) / n as f64;
        let nodes: Vec<f64> = (0..=n).map(|i| a + i as f64 * h).collect();
        let mut weights = vec![h; n + 1];
        weights[0] = 0.5 * h;
        weights[n] = 0.5 * h;
        Ok(AlphaQuadrature {
            nodes,
            weights,
            kind: QuadKind::Trapezoid,
        })
    }

    /// Point masses `(α_i, w_i)` with `w_i > 0` and `α_i ∈ (0, 1)`.
    pub fn atoms(atoms: &[(f64, f64)]) -> Result<Self, WeightsError> {
        if atoms.is_empty() {
            return Err(WeightsError::EmptyQuadrature);
        }
        let mut nodes = Vec::with_capacity(atoms.len());
        let mut weights = Vec::with_capacity(atoms.len());
        for &(a, w) in atoms {
            if !(a > 0.0 && a < 1.0) {
                return Err(WeightsError::BadQuadratureNodes);
            }
            if !(w > 0.0) {
                return Err(WeightsError::BadAtomMass);
            }
            if let Some(last) = nodes.last() {
                if a <= *last {
                    return Err(WeightsError::BadQuadratureNodes);
                }
            }
            nodes.push(a);
            weights.push(w);
        }
        Ok(AlphaQuadrature {
            nodes,
            weights,
            kind: QuadKind::Atoms,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn kind(&self) -> QuadKind {
        self.kind
    }

    /// `Σ_i w_i s_i` for samples on the quadrature nodes.
    pub fn integrate(&self, samples: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(samples)
            .map(|(w, s)| w * s)
            .sum()
    }
}

/// The order weight `μ` on `[0, 1]` with declared support `[b1, b2]`.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightDistribution {
    /// Pointwise density given by an expression in `alpha`.
    Expression { density: Expr, support: (f64, f64) },
    /// The indicator `χ_[b1, b2]` (closed interval).
    Indicator { lower: f64, upper: f64 },
    /// Samples on the uniform grid over `[0, 1]`; piecewise linear in
    /// between. Signed values are accepted so that linearization probes
    /// and conjugate-gradient intermediates can reuse the machinery;
    /// physical weights are nonnegative.
    Grid { values: Vec<f64> },
    /// Point masses `Σ w_i δ_{α_i}`.
    Atoms { atoms: Vec<(f64, f64)> },
}

fn check_support(a: f64, b: f64) -> Result<(), WeightsError> {
    // The analysis wants b2 < 1 strictly; the smooth test weights touch 1
    // with zero density, so the closed endpoint is accepted here and the
    // contour oracle enforces strictness where it matters.
    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || !(a < b) {
        return Err(WeightsError::BadSupport(a, b));
    }
    Ok(())
}

impl WeightDistribution {
    pub fn expression(density: Expr, support: (f64, f64)) -> Result<Self, WeightsError> {
        check_support(support.0, support.1)?;
        Ok(WeightDistribution::Expression { density, support })
    }

    pub fn indicator(lower: f64, upper: f64) -> Result<Self, WeightsError> {
        check_support(lower, upper)?;
        Ok(WeightDistribution::Indicator { lower, upper })
    }

    pub fn from_grid(values: Vec<f64>) -> Result<Self, WeightsError> {
        if values.len() < 2 {
            return Err(WeightsError::TooFewSamples);
        }
        Ok(WeightDistribution::Grid { values })
    }

    pub fn atoms(atoms: Vec<(f64, f64)>) -> Result<Self, WeightsError> {
        AlphaQuadrature::atoms(&atoms)?;
        Ok(WeightDistribution::Atoms { atoms })
    }

    /// Declared support `[b1, b2]` (grid-backed weights report `[0, 1]`,
    /// atoms their node span).
    pub fn support(&self) -> (f64, f64) {
        match self {
            WeightDistribution::Expression { support, .. } => *support,
            WeightDistribution::Indicator { lower, upper } => (*lower, *upper),
            WeightDistribution::Grid { .. } => (0.0, 1.0),
            WeightDistribution::Atoms { atoms } => (atoms[0].0, atoms[atoms.len() - 1].0),
        }
    }

    /// Pointwise density. Errors for atom-backed weights.
    pub fn density(&self, alpha: f64) -> Result<f64, WeightsError> {
        match self {
            WeightDistribution::Expression { density, support } => {
                if alpha < support.0 || alpha > support.1 {
                    return Ok(0.0);
                }
                Ok(density.eval(&[("alpha", alpha)])?)
            }
            WeightDistribution::Indicator { lower, upper } => {
                Ok(if alpha >= *lower && alpha <= *upper {
                    1.0
                } else {
                    0.0
                })
            }
            WeightDistribution::Grid { values } => {
                let m = values.len() - 1;
                let pos = (alpha.clamp(0.0, 1.0)) * m as f64;
                let i = (pos.floor() as usize).min(m - 1);
                let frac = pos - i as f64;
                Ok(values[i] * (1.0 - frac) + values[i + 1] * frac)
            }
            WeightDistribution::Atoms { .. } => Err(WeightsError::NoPointwiseDensity),
        }
    }

    /// The natural quadrature for this weight: trapezoid restricted to
    /// the support for density-type weights (`n_alpha` subintervals),
    /// the sample grid itself for grid-backed weights, and the atoms
    /// for discrete ones.
    pub fn quadrature(&self, n_alpha: usize) -> Result<AlphaQuadrature, WeightsError> {
        match self {
            WeightDistribution::Expression { support, .. } => {
                AlphaQuadrature::trapezoid_on(support.0, support.1, n_alpha)
            }
            WeightDistribution::Indicator { lower, upper } => {
                AlphaQuadrature::trapezoid_on(*lower, *upper, n_alpha)
            }
            WeightDistribution::Grid { values } => AlphaQuadrature::trapezoid(values.len() - 1),
            WeightDistribution::Atoms { atoms } => AlphaQuadrature::atoms(atoms),
        }
    }

    /// Density samples on the quadrature nodes; for atoms this is the
    /// constant 1 (the masses live in the quadrature weights).
    pub fn samples_on(&self, quad: &AlphaQuadrature) -> Result<Vec<f64>, WeightsError> {
        match self {
            WeightDistribution::Atoms { atoms } => {
                if quad.kind() != QuadKind::Atoms || quad.len() != atoms.len() {
                    return Err(WeightsError::SampleMismatch {
                        got: atoms.len(),
                        want: quad.len(),
                    });
                }
                Ok(vec![1.0; atoms.len()])
            }
            _ => quad.nodes().iter().map(|&a| self.density(a)).collect(),
        }
    }

    /// `∫ μ dα` under the weight's own quadrature.
    pub fn total_mass(&self, n_alpha: usize) -> Result<f64, WeightsError> {
        let quad = self.quadrature(n_alpha)?;
        let samples = self.samples_on(&quad)?;
        Ok(quad.integrate(&samples))
    }
}

/// Precomputed distributed-order convolution rows `p_{j,n}` for a fixed
/// grid, quadrature and set of density samples. On uniform grids a
/// single row serves every target index (the table is Toeplitz apart
/// from the inert `j = n` tail).
#[derive(Debug, Clone)]
pub struct DistributedWeights {
    n_steps: usize,
    data: DwData,
}

#[derive(Debug, Clone)]
enum DwData {
    Uniform {
        /// `p_j` for `j = 0..N-1`, valid for every `n > j`.
        row: Vec<f64>,
        /// `p_{n,n}` for `n = 1..=N` (sign-carrying tail entries).
        tails: Vec<f64>,
    },
    PerTarget {
        /// `rows[n-1]` is the full signed row for target `n`.
        rows: Vec<Vec<f64>>,
    },
}

impl DistributedWeights {
    /// Aggregate L1 rows over the quadrature against `samples[i] ≈ μ(α_i)`.
    /// Samples may be signed (linearization directions).
    pub fn build(
        grid: &TimeGrid,
        quad: &AlphaQuadrature,
        samples: &[f64],
    ) -> Result<Self, WeightsError> {
        if samples.len() != quad.len() {
            return Err(WeightsError::SampleMismatch {
                got: samples.len(),
                want: quad.len(),
            });
        }
        for &a in quad.nodes() {
            if !(0.0..=1.0).contains(&a) {
                return Err(WeightsError::BadQuadratureNodes);
            }
        }
        let n = grid.n_steps();
        let data = if grid.is_uniform() {
            let tau = grid.step(1);
            let mut row = vec![0.0; n];
            let mut tails = vec![0.0; n];
            for (i, (&alpha, &w)) in quad.nodes().iter().zip(quad.weights()).enumerate() {
                let coeff = w * samples[i];
                if coeff == 0.0 {
                    continue;
                }
                // endpoint orders α = 0, 1 are measure-zero in the trapezoid
                // rule only when the density vanishes there; clamp slightly
                // inside to keep the kernel defined.
                let alpha = alpha.clamp(1e-12, 1.0 - 1e-12);
                let s = 1.0 - alpha;
                let scale = coeff / (lanczos_gamma(2.0 - alpha) * tau.powf(alpha));
                row[0] += scale;
                let mut pm = 0.0f64;
                let mut p0 = 1.0f64;
                for j in 1..n {
                    let pp = ((j + 1) as f64).powf(s);
                    row[j] += scale * (pp + pm - 2.0 * p0);
                    tails[j - 1] += -scale * (p0 - pm);
                    pm = p0;
                    p0 = pp;
                }
                tails[n - 1] += -scale * (p0 - pm);
            }
            DwData::Uniform { row, tails }
        } else {
            let nodes = grid.nodes();
            let mut rows = Vec::with_capacity(n);
            for target in 1..=n {
                let mut acc = vec![0.0; target + 1];
                for (i, (&alpha, &w)) in quad.nodes().iter().zip(quad.weights()).enumerate() {
                    let coeff = w * samples[i];
                    if coeff == 0.0 {
                        continue;
                    }
                    let alpha = alpha.clamp(1e-12, 1.0 - 1e-12);
                    let row = l1_row_nodes(nodes, alpha, target);
                    for (a, r) in acc.iter_mut().zip(&row) {
                        *a += coeff * r;
                    }
                }
                rows.push(acc);
            }
            DwData::PerTarget { rows }
        };
        Ok(DistributedWeights { n_steps: n, data })
    }

    /// Convenience builder from a weight distribution and its natural
    /// quadrature with `n_alpha` subintervals.
    pub fn for_distribution(
        grid: &TimeGrid,
        mu: &WeightDistribution,
        n_alpha: usize,
    ) -> Result<Self, WeightsError> {
        let quad = mu.quadrature(n_alpha)?;
        let samples = mu.samples_on(&quad)?;
        Self::build(grid, &quad, &samples)
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// `p_{j,n}` for `j = 0..n-1`: the weights that multiply the history
    /// differences `u^{n-j} - u^0`.
    pub fn history_weights(&self, n: usize) -> &[f64] {
        match &self.data {
            DwData::Uniform { row, .. } => &row[..n],
            DwData::PerTarget { rows } => &rows[n - 1][..n],
        }
    }

    /// Leading weight `p_{0,n}`; positive for nonnegative `μ` with mass.
    pub fn leading(&self, n: usize) -> f64 {
        self.history_weights(n)[0]
    }

    /// The full signed row `p_{j,n}`, `j = 0..=n`. The `j = n` entry is
    /// the one annihilating constants; the stepping scheme never uses it.
    pub fn full_row(&self, n: usize) -> Vec<f64> {
        match &self.data {
            DwData::Uniform { row, tails } => {
                let mut out = row[..n].to_vec();
                out.push(tails[n - 1]);
                out
            }
            DwData::PerTarget { rows } => rows[n - 1].clone(),
        }
    }
}
