//! Fully discrete time stepping for the distributed-order diffusion
//! problem, and boundary-trace extraction.
//!
//! Each step solves
//!
//! ```text
//! (p_0 M + S) U^n = p_0 M U^0 - M Σ_{j=1}^{n-1} p_j (U^{n-j} - U^0) + F^n,
//! ```
//!
//! with `M`, `S` the mass and stiffness matrices and `p_j` the
//! distributed-order convolution weights. The mass matrix is applied to
//! the history and initial terms as the Galerkin weak form requires, and
//! `F^n` collects the projected source `σ(t_n) f` plus any Neumann
//! boundary data. The history sum makes step `n` cost `O(n·M)` work, so
//! a full sweep is `O(N²·M)`.
//!
//! Observed traces are either the nodal boundary value (Neumann runs) or
//! the variational conormal flux (Dirichlet runs). For flux traces the
//! `t = 0` sample uses the discrete `τ → 0` limit of the stepping
//! scheme, so that small-time differences `g(t) - g(0)` are free of the
//! spatial bias a mixed discrete/analytic pairing would carry.

use crate::expr::Expr;
use crate::fem::{
    assemble, load_vector, BcKind, BoundarySpec, CoefficientField, FemError, Mesh1D, Side, TriDiag,
};
use crate::grid::TimeGrid;
use crate::weights::{AlphaQuadrature, DistributedWeights, WeightDistribution, WeightsError};
use rand::SeedableRng;
use rand_distr::Distribution;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ForwardError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error("expression evaluation failed: {0}")]
    Expr(#[from] crate::expr::EvalError),
    #[error("observation kind {observe:?} is incompatible with {bc:?} boundary conditions")]
    ObservationMismatch { bc: BcKind, observe: TraceKind },
    #[error("leading convolution weight is not positive (p_0 = {0}); weight has no mass")]
    DegenerateWeight(f64),
    #[error("flux trace was not produced by this run")]
    FluxUnavailable,
    #[error("noise level must be nonnegative, got {0}")]
    NegativeNoise(f64),
    #[error("noise can only be added to an exact trace")]
    AlreadyNoisy,
    #[error("load vector has wrong length")]
    BadLoad,
}

/// Separable source `σ(t) f(x)`. Cutoffs in time are expressed through
/// `σ` itself, e.g. `chi(0,1,t)`.
#[derive(Debug, Clone)]
pub struct SourceSpec {
    pub sigma: Expr,
    pub f: Expr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    /// Nodal solution value at the boundary point (Dirichlet data of a
    /// Neumann run).
    Value,
    /// Variational conormal flux `a u' ν` (Neumann data of a Dirichlet
    /// run).
    ConormalFlux,
}

#[derive(Debug, Clone, Copy)]
pub struct ObservationSpec {
    pub point: Side,
    pub kind: TraceKind,
}

/// Complete forward problem description.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub mesh: Mesh1D,
    pub coeff: CoefficientField,
    pub bc: BoundarySpec,
    pub u0: Expr,
    pub source: Option<SourceSpec>,
    pub mu: WeightDistribution,
    pub grid: TimeGrid,
    pub n_alpha: usize,
    pub observe: ObservationSpec,
}

impl ProblemSpec {
    /// The observation must be dual to the boundary condition: a
    /// Dirichlet problem is observed through its flux, a Neumann problem
    /// through its boundary value.
    pub fn validate(&self) -> Result<(), ForwardError> {
        let ok = matches!(
            (self.bc.kind, self.observe.kind),
            (BcKind::Dirichlet, TraceKind::ConormalFlux) | (BcKind::Neumann, TraceKind::Value)
        );
        if ok {
            Ok(())
        } else {
            Err(ForwardError::ObservationMismatch {
                bc: self.bc.kind,
                observe: self.observe.kind,
            })
        }
    }
}

/// Nodal history of a forward run. Flux traces are populated when the
/// run was stepped with flux extraction (Dirichlet observation).
#[derive(Debug, Clone)]
pub struct ForwardSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub left_flux: Option<Vec<f64>>,
    pub right_flux: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    Exact,
    Noisy { eps: f64, seed: u64 },
}

/// A one-point boundary observation `g(t_n)`.
#[derive(Debug, Clone)]
pub struct ObservationTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl ObservationTrace {
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// CSV rendering with header `t,g` and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,g\n");
        for (t, g) in self.times.iter().zip(&self.values) {
            out.push_str(&format!("{t:.16e},{g:.16e}\n"));
        }
        out
    }
}

/// Advance the scheme on an arbitrary (mass, stiffness) pair. This is
/// the whole solver for reduced/surrogate systems (a single spatial mode
/// is a 1x1 system) and the engine behind [`Discretization::solve`].
///
/// `loads` returns the full-size load vector at step `n` (time `t_n`);
/// `None` means no load. `dirichlet` prescribes boundary values per
/// step; `None` leaves the natural (Neumann) boundary alone.
pub fn step_generic(
    mass: &TriDiag,
    stiff: &TriDiag,
    grid: &TimeGrid,
    weights: &DistributedWeights,
    u0: &[f64],
    mut loads: Option<&mut dyn FnMut(usize, f64) -> Vec<f64>>,
    dirichlet: Option<&dyn Fn(usize, f64) -> (f64, f64)>,
) -> Result<Vec<Vec<f64>>, ForwardError> {
    let out = step_core(mass, stiff, grid, weights, u0, &mut |n, t| {
        match loads.as_mut() {
            Some(f) => f(n, t),
            None => vec![0.0; u0.len()],
        }
    }, dirichlet, false)?;
    Ok(out.states)
}

struct StepOutput {
    states: Vec<Vec<f64>>,
    /// Per step `n >= 1`: variational flux at the two boundary rows.
    flux: Option<Vec<(f64, f64)>>,
}

#[allow(clippy::too_many_arguments)]
fn step_core(
    mass: &TriDiag,
    stiff: &TriDiag,
    grid: &TimeGrid,
    weights: &DistributedWeights,
    u0: &[f64],
    loads: &mut dyn FnMut(usize, f64) -> Vec<f64>,
    dirichlet: Option<&dyn Fn(usize, f64) -> (f64, f64)>,
    want_flux: bool,
) -> Result<StepOutput, ForwardError> {
    let m = mass.n();
    if u0.len() != m {
        return Err(ForwardError::BadLoad);
    }
    let n_steps = grid.n_steps();
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(n_steps + 1);
    states.push(u0.to_vec());
    let mut flux = if want_flux { Some(Vec::with_capacity(n_steps)) } else { None };

    let mut hist = vec![0.0; m];
    let mut inner = vec![0.0; m];
    for n in 1..=n_steps {
        let t = grid.node(n);
        let p = weights.history_weights(n);
        let p0 = p[0];
        if !(p0 > 0.0) {
            return Err(ForwardError::DegenerateWeight(p0));
        }
        // hist = Σ_{j=1}^{n-1} p_j (U^{n-j} - U^0)
        hist.iter_mut().for_each(|h| *h = 0.0);
        for (j, &pj) in p.iter().enumerate().skip(1) {
            let state = &states[n - j];
            for i in 0..m {
                hist[i] += pj * (state[i] - u0[i]);
            }
        }
        let load = loads(n, t);
        if load.len() != m {
            return Err(ForwardError::BadLoad);
        }
        for i in 0..m {
            inner[i] = p0 * u0[i] - hist[i];
        }
        let mut rhs = mass.mul_vec(&inner);
        for i in 0..m {
            rhs[i] += load[i];
        }
        let system = stiff.add_scaled(mass, p0);
        let un = match dirichlet {
            Some(data) => {
                let (gl, gr) = data(n, t);
                system.solve_with_dirichlet(&rhs, gl, gr)?
            }
            None => system.solve(&rhs)?,
        };
        if let Some(fluxes) = flux.as_mut() {
            // discrete time derivative p_0 (U^n - U^0) + hist, tested
            // against the boundary hat functions through the mass matrix
            let mut dfrac = vec![0.0; m];
            for i in 0..m {
                dfrac[i] = p0 * (un[i] - u0[i]) + hist[i];
            }
            let fl = mass.row_dot(0, &dfrac) + stiff.row_dot(0, &un) - load[0];
            let fr = mass.row_dot(m - 1, &dfrac) + stiff.row_dot(m - 1, &un) - load[m - 1];
            fluxes.push((fl, fr));
        }
        states.push(un);
    }
    Ok(StepOutput { states, flux })
}

/// Assembled, reusable discretization of a [`ProblemSpec`]: everything
/// except the order weight, so that inverse iterations can swap `μ`
/// without re-assembling.
pub struct Discretization {
    pub mesh: Mesh1D,
    pub mass: TriDiag,
    pub stiff: TriDiag,
    pub grid: TimeGrid,
    pub quad: AlphaQuadrature,
    pub u0: Vec<f64>,
    f_load: Vec<f64>,
    sigma: Vec<f64>,
    bc_kind: BcKind,
    bc_data: Vec<(f64, f64)>,
    obs: ObservationSpec,
}

impl Discretization {
    pub fn new(spec: &ProblemSpec) -> Result<Self, ForwardError> {
        spec.validate()?;
        let (mass, stiff) = assemble(&spec.mesh, &spec.coeff)?;
        // initial datum by nodal interpolation
        let u0: Vec<f64> = spec
            .mesh
            .nodes()
            .iter()
            .map(|&x| spec.u0.eval(&[("x", x)]))
            .collect::<Result<_, _>>()?;
        let f_load = match &spec.source {
            Some(src) => load_vector(&spec.mesh, &src.f)?,
            None => vec![0.0; spec.mesh.n_nodes()],
        };
        let mut sigma = Vec::with_capacity(spec.grid.n_steps() + 1);
        for &t in spec.grid.nodes() {
            sigma.push(match &spec.source {
                Some(src) => src.sigma.eval(&[("t", t)])?,
                None => 0.0,
            });
        }
        let mut bc_data = Vec::with_capacity(spec.grid.n_steps() + 1);
        for &t in spec.grid.nodes() {
            bc_data.push((
                spec.bc.left.eval(&[("t", t)])?,
                spec.bc.right.eval(&[("t", t)])?,
            ));
        }
        let quad = spec.mu.quadrature(spec.n_alpha)?;
        Ok(Discretization {
            mesh: spec.mesh.clone(),
            mass,
            stiff,
            grid: spec.grid.clone(),
            quad,
            u0,
            f_load,
            sigma,
            bc_kind: spec.bc.kind,
            bc_data,
            obs: spec.observe,
        })
    }

    pub fn observation(&self) -> ObservationSpec {
        self.obs
    }

    pub fn bc_kind(&self) -> BcKind {
        self.bc_kind
    }

    /// Row index of the observation point.
    pub fn obs_row(&self) -> usize {
        match self.obs.point {
            Side::Left => 0,
            Side::Right => self.mesh.n_nodes() - 1,
        }
    }

    /// Full load vector at step `n`: projected source plus Neumann
    /// boundary terms.
    pub(crate) fn load_at(&self, n: usize) -> Vec<f64> {
        let m = self.mesh.n_nodes();
        let s = self.sigma[n];
        let mut load: Vec<f64> = self.f_load.iter().map(|v| s * v).collect();
        if self.bc_kind == BcKind::Neumann {
            let (gl, gr) = self.bc_data[n];
            load[0] += gl;
            load[m - 1] += gr;
        }
        load
    }

    /// Run the forward scheme with the given density samples on the
    /// stored quadrature (`μ` evaluated at the quadrature nodes).
    pub fn solve(&self, mu_samples: &[f64]) -> Result<ForwardSolution, ForwardError> {
        let weights = DistributedWeights::build(&self.grid, &self.quad, mu_samples)?;
        self.solve_with_weights(&weights)
    }

    pub fn solve_with_weights(
        &self,
        weights: &DistributedWeights,
    ) -> Result<ForwardSolution, ForwardError> {
        let want_flux = self.obs.kind == TraceKind::ConormalFlux;
        let dirichlet_fn = |n: usize, _t: f64| self.bc_data[n];
        let dirichlet: Option<&dyn Fn(usize, f64) -> (f64, f64)> =
            if self.bc_kind == BcKind::Dirichlet {
                Some(&dirichlet_fn)
            } else {
                None
            };
        let out = step_core(
            &self.mass,
            &self.stiff,
            &self.grid,
            weights,
            &self.u0,
            &mut |n, _t| self.load_at(n),
            dirichlet,
            want_flux,
        )?;
        let (left_flux, right_flux) = match out.flux {
            Some(per_step) => {
                let (f0l, f0r) = self.initial_flux()?;
                let mut left = Vec::with_capacity(per_step.len() + 1);
                let mut right = Vec::with_capacity(per_step.len() + 1);
                left.push(f0l);
                right.push(f0r);
                for (l, r) in per_step {
                    left.push(l);
                    right.push(r);
                }
                (Some(left), Some(right))
            }
            None => (None, None),
        };
        Ok(ForwardSolution {
            times: self.grid.nodes().to_vec(),
            states: out.states,
            left_flux,
            right_flux,
        })
    }

    /// Discrete `t → 0+` limit of the variational flux. From the first
    /// step, `p_0 M (U^1 - U^0) → R` on interior rows with
    /// `R = F(0+) - S U^0`, so the boundary-row flux tends to
    /// `[S U^0 - F]_b + [M R̃]_b` with `R̃` the zero-extended interior
    /// mass solve of `R`.
    fn initial_flux(&self) -> Result<(f64, f64), ForwardError> {
        let m = self.mesh.n_nodes();
        let load = self.load_at(0);
        let su0 = self.stiff.mul_vec(&self.u0);
        let r: Vec<f64> = (0..m).map(|i| load[i] - su0[i]).collect();
        let rt = match self.bc_kind {
            BcKind::Dirichlet => self.mass.solve_with_dirichlet(&r, 0.0, 0.0)?,
            BcKind::Neumann => self.mass.solve(&r)?,
        };
        let fl = su0[0] - load[0] + self.mass.row_dot(0, &rt);
        let fr = su0[m - 1] - load[m - 1] + self.mass.row_dot(m - 1, &rt);
        Ok((fl, fr))
    }

    /// Extract the configured observation from a solution.
    pub fn trace_of(&self, sol: &ForwardSolution) -> Result<ObservationTrace, ForwardError> {
        let values = match self.obs.kind {
            TraceKind::Value => {
                let row = self.obs_row();
                sol.states.iter().map(|s| s[row]).collect()
            }
            TraceKind::ConormalFlux => match self.obs.point {
                Side::Left => sol
                    .left_flux
                    .clone()
                    .ok_or(ForwardError::FluxUnavailable)?,
                Side::Right => sol
                    .right_flux
                    .clone()
                    .ok_or(ForwardError::FluxUnavailable)?,
            },
        };
        Ok(ObservationTrace {
            times: sol.times.clone(),
            values,
            provenance: Provenance::Exact,
        })
    }
}

/// One-shot forward solve of a problem specification.
pub fn step_forward(spec: &ProblemSpec) -> Result<ForwardSolution, ForwardError> {
    let disc = Discretization::new(spec)?;
    let samples = spec.mu.samples_on(&disc.quad)?;
    disc.solve(&samples)
}

/// Extract the observation named in the problem from a forward solution.
pub fn observe(sol: &ForwardSolution, spec: &ProblemSpec) -> Result<ObservationTrace, ForwardError> {
    let disc = Discretization::new(spec)?;
    disc.trace_of(sol)
}

/// Corrupt an exact trace with `g^δ(t_n) = g(t_n) + eps ‖g‖_∞ ξ_n`,
/// `ξ_n` i.i.d. standard Gaussian from a seeded generator. Bit-exact
/// reproducible per seed.
pub fn add_noise(
    trace: &ObservationTrace,
    eps: f64,
    seed: u64,
) -> Result<ObservationTrace, ForwardError> {
    if eps < 0.0 {
        return Err(ForwardError::NegativeNoise(eps));
    }
    if trace.provenance != Provenance::Exact {
        return Err(ForwardError::AlreadyNoisy);
    }
    let scale = eps * trace.sup_norm();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::StandardNormal;
    let values = trace
        .values
        .iter()
        .map(|&g| {
            let xi: f64 = normal.sample(&mut rng);
            g + scale * xi
        })
        .collect();
    Ok(ObservationTrace {
        times: trace.times.clone(),
        values,
        provenance: Provenance::Noisy { eps, seed },
    })
}
