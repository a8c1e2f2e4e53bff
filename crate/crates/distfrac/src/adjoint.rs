//! Adjoint and sensitivity solves, and the weight-gradient assembly.
//!
//! The data-misfit functional `J(μ) = ½ ‖u(μ)(x0,·) - g‖²_{L²(0,T)}` has
//! the gradient
//!
//! ```text
//! J'(μ)(α) = -∫₀ᵀ ∫_Ω v ∂_t^α (u - u0) dx dt,
//! ```
//!
//! where `v` solves the adjoint problem: a right-sided Riemann–Liouville
//! evolution driven by the boundary residual as a point Neumann datum,
//! with vanishing terminal fractional integral. Substituting `s = T - t`
//! turns the right-sided derivative into a left-sided one, so the
//! adjoint is stepped by the forward machinery with zero initial state
//! and the time-reversed residual as a boundary point load.
//!
//! The sensitivity (directional derivative) `u_h` solves the forward
//! problem with zero data and the load `-∫ h(α) ∂_t^α u dα`. Because the
//! discrete forward map is linear in the weight samples, `u_h` is the
//! exact derivative of the discrete solution, and with the interior
//! rectangle pairing
//!
//! ```text
//! ⟨x, y⟩ = τ Σ_{n=1}^{N-1} x_n y_n
//! ```
//!
//! the adjoint/sensitivity duality `⟨J'(μ), h⟩ = ⟨u_h(x0,·), r⟩` holds to
//! round-off on uniform grids (the convolution operator is Toeplitz and
//! its transpose is its time reversal).

use crate::fem::BcKind;
use crate::forward::{step_generic, Discretization, ForwardError, ForwardSolution};
use crate::weights::DistributedWeights;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdjointError {
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error("adjoint solves are derived for Neumann boundary conditions only")]
    DirichletUnsupported,
    #[error("residual trace has {got} samples, expected {want}")]
    ResidualLength { got: usize, want: usize },
    #[error("direction has {got} samples, expected {want} (the alpha quadrature size)")]
    DirectionLength { got: usize, want: usize },
}

/// Adjoint state on the original time nodes; `states[N]` (terminal) is
/// identically zero, the discrete image of the vanishing terminal
/// fractional integral.
#[derive(Debug, Clone)]
pub struct AdjointSolution {
    pub states: Vec<Vec<f64>>,
}

/// Discrete inner product `τ Σ_{n=1}^{N-1} x_n y_n` on `[0, T]`; the
/// end-point weights are zero, which is exactly what makes the discrete
/// duality identity exact. All time pairings in this module and in the
/// conjugate-gradient iteration use it.
pub fn pair_time(tau: f64, x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() - 1;
    let mut acc = 0.0;
    for i in 1..n {
        acc += x[i] * y[i];
    }
    tau * acc
}

pub fn norm_time(tau: f64, x: &[f64]) -> f64 {
    pair_time(tau, x, x).sqrt()
}

/// Solve the adjoint problem for the boundary residual `r` (values on
/// the time nodes). Steps the reversed problem with the weight table
/// rebuilt on the reversed grid (identical to the forward table when the
/// grid is uniform), zero initial state, and the point load `r(T - s_n)`
/// at the observation node; returns states re-reversed to original time.
pub fn solve_adjoint(
    disc: &Discretization,
    mu_samples: &[f64],
    residual: &[f64],
) -> Result<AdjointSolution, AdjointError> {
    if disc.bc_kind() != BcKind::Neumann {
        return Err(AdjointError::DirichletUnsupported);
    }
    let n = disc.grid.n_steps();
    if residual.len() != n + 1 {
        return Err(AdjointError::ResidualLength {
            got: residual.len(),
            want: n + 1,
        });
    }
    let m = disc.mesh.n_nodes();
    let row = disc.obs_row();
    let zero = vec![0.0; m];
    let reversed = disc.grid.reversed();
    let weights = DistributedWeights::build(&reversed, &disc.quad, mu_samples)
        .map_err(ForwardError::from)?;
    let mut loads = |k: usize, _t: f64| {
        let mut load = vec![0.0; m];
        load[row] = residual[n - k];
        load
    };
    let w_states = step_generic(
        &disc.mass,
        &disc.stiff,
        &reversed,
        &weights,
        &zero,
        Some(&mut loads),
        None,
    )?;
    // map back: v(t_k) = w(T - t_k)
    let states: Vec<Vec<f64>> = (0..=n).map(|k| w_states[n - k].clone()).collect();
    Ok(AdjointSolution { states })
}

/// Per-step values `Φ^n = Σ_i ŵ_i h_i [∂_t^{α_i}(U - U^0)]^n`, assembled
/// through a direction-weight convolution table. This is both the
/// sensitivity load (negated, mass-applied) and the linearization of the
/// discrete scheme in the weight direction `h`.
fn direction_history(
    disc: &Discretization,
    base: &ForwardSolution,
    dir_weights: &DistributedWeights,
    n: usize,
) -> Vec<f64> {
    let m = disc.mesh.n_nodes();
    let u0 = &base.states[0];
    let p = dir_weights.history_weights(n);
    let mut phi = vec![0.0; m];
    for (j, &pj) in p.iter().enumerate() {
        let state = &base.states[n - j];
        for i in 0..m {
            phi[i] += pj * (state[i] - u0[i]);
        }
    }
    phi
}

/// Solve the sensitivity problem for a direction `h` given by samples on
/// the quadrature nodes: zero initial state, homogeneous Neumann
/// boundary, load `-M Φ^n`.
pub fn solve_sensitivity(
    disc: &Discretization,
    mu_samples: &[f64],
    base: &ForwardSolution,
    direction: &[f64],
) -> Result<ForwardSolution, AdjointError> {
    if disc.bc_kind() != BcKind::Neumann {
        return Err(AdjointError::DirichletUnsupported);
    }
    if direction.len() != disc.quad.len() {
        return Err(AdjointError::DirectionLength {
            got: direction.len(),
            want: disc.quad.len(),
        });
    }
    let weights = DistributedWeights::build(&disc.grid, &disc.quad, mu_samples)
        .map_err(ForwardError::from)?;
    let dir_weights = DistributedWeights::build(&disc.grid, &disc.quad, direction)
        .map_err(ForwardError::from)?;
    let m = disc.mesh.n_nodes();
    let zero = vec![0.0; m];
    let mut loads = |n: usize, _t: f64| {
        let phi = direction_history(disc, base, &dir_weights, n);
        let mphi = disc.mass.mul_vec(&phi);
        mphi.iter().map(|v| -v).collect()
    };
    let states = step_generic(
        &disc.mass,
        &disc.stiff,
        &disc.grid,
        &weights,
        &zero,
        Some(&mut loads),
        None,
    )?;
    Ok(ForwardSolution {
        times: disc.grid.nodes().to_vec(),
        states,
        left_flux: None,
        right_flux: None,
    })
}

/// Assemble `J'(μ)` on the quadrature nodes:
/// `J'(α_i) = -τ Σ_n (V^n)ᵀ M [∂_t^{α_i}(U - U^0)]^n`.
///
/// The double sum is rearranged through the lag correlations
/// `C_j = Σ_n V^nᵀ M (U^{n-j} - U^0)`, which cost `O(N² m)` once and
/// make the per-α work `O(N)`. Requires a uniform grid (the recovery
/// loop runs on one).
pub fn assemble_gradient(
    disc: &Discretization,
    base: &ForwardSolution,
    adjoint: &AdjointSolution,
) -> Vec<f64> {
    let n = disc.grid.n_steps();
    let m = disc.mesh.n_nodes();
    let tau = disc.grid.step(1);
    let u0 = &base.states[0];
    // Z^k = M (U^k - U^0)
    let z: Vec<Vec<f64>> = (0..=n)
        .map(|k| {
            let mut diff = vec![0.0; m];
            for i in 0..m {
                diff[i] = base.states[k][i] - u0[i];
            }
            disc.mass.mul_vec(&diff)
        })
        .collect();
    // C_j = Σ_{n0=j+1}^{N-1} V^{n0} · Z^{n0-j}
    let mut c = vec![0.0; n];
    #[allow(clippy::needless_range_loop)]
    for j in 0..n {
        let mut acc = 0.0;
        for n0 in (j + 1)..n {
            let v = &adjoint.states[n0];
            let zz = &z[n0 - j];
            let mut dot = 0.0;
            for i in 0..m {
                dot += v[i] * zz[i];
            }
            acc += dot;
        }
        c[j] = acc;
    }
    // contract with the per-α L1 rows (uniform interior law)
    let mut grad = Vec::with_capacity(disc.quad.len());
    for &alpha in disc.quad.nodes() {
        let alpha = alpha.clamp(1e-12, 1.0 - 1e-12);
        let s = 1.0 - alpha;
        let scale = 1.0 / (crate::weights::lanczos_gamma(2.0 - alpha) * tau.powf(alpha));
        let mut acc = scale * c[0];
        let mut pm = 0.0f64;
        let mut p0 = 1.0f64;
        for (j, cj) in c.iter().enumerate().skip(1) {
            let pp = ((j + 1) as f64).powf(s);
            acc += scale * (pp + pm - 2.0 * p0) * cj;
            pm = p0;
            p0 = pp;
        }
        grad.push(-tau * acc);
    }
    grad
}

/// `⟨f, g⟩_{L²(0,1)}` under the stored α-quadrature.
pub fn pair_alpha(disc: &Discretization, f: &[f64], g: &[f64]) -> f64 {
    disc.quad
        .weights()
        .iter()
        .zip(f.iter().zip(g))
        .map(|(w, (a, b))| w * a * b)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::fem::{BoundarySpec, CoefficientField, Mesh1D, Side};
    use crate::forward::{ObservationSpec, ProblemSpec, TraceKind};
    use crate::grid::TimeGrid;
    use crate::weights::WeightDistribution;
    use rand::Rng;
    use rand::SeedableRng;

    fn neumann_spec(m: usize, n: usize, n_alpha: usize) -> ProblemSpec {
        ProblemSpec {
            mesh: Mesh1D::uniform(m).unwrap(),
            coeff: CoefficientField {
                a: Expr::parse("1+x*(1-x)").unwrap(),
                q: Expr::parse("0").unwrap(),
            },
            bc: BoundarySpec {
                kind: BcKind::Neumann,
                left: Expr::parse("0").unwrap(),
                right: Expr::parse("1").unwrap(),
            },
            u0: Expr::parse("x*(1-x)*exp(x)").unwrap(),
            source: None,
            mu: WeightDistribution::expression(
                Expr::parse("alpha*(1-alpha)^2*exp(2*alpha)").unwrap(),
                (0.0, 1.0),
            )
            .unwrap(),
            grid: TimeGrid::uniform(n, 1.0).unwrap(),
            n_alpha,
            observe: ObservationSpec {
                point: Side::Left,
                kind: TraceKind::Value,
            },
        }
    }

    fn trace_at_obs(disc: &Discretization, sol: &ForwardSolution) -> Vec<f64> {
        let row = disc.obs_row();
        sol.states.iter().map(|s| s[row]).collect()
    }

    #[test]
    fn zero_residual_gives_zero_adjoint() {
        let spec = neumann_spec(8, 8, 8);
        let disc = Discretization::new(&spec).unwrap();
        let samples = spec.mu.samples_on(&disc.quad).unwrap();
        let adj = solve_adjoint(&disc, &samples, &vec![0.0; 9]).unwrap();
        for s in &adj.states {
            assert!(s.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_direction_gives_zero_sensitivity() {
        let spec = neumann_spec(8, 8, 8);
        let disc = Discretization::new(&spec).unwrap();
        let samples = spec.mu.samples_on(&disc.quad).unwrap();
        let base = disc.solve(&samples).unwrap();
        let sens =
            solve_sensitivity(&disc, &samples, &base, &vec![0.0; disc.quad.len()]).unwrap();
        for s in &sens.states {
            assert!(s.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn terminal_adjoint_state_vanishes() {
        let spec = neumann_spec(8, 12, 8);
        let disc = Discretization::new(&spec).unwrap();
        let samples = spec.mu.samples_on(&disc.quad).unwrap();
        let r: Vec<f64> = (0..=12).map(|k| (k as f64 * 0.3).sin()).collect();
        let adj = solve_adjoint(&disc, &samples, &r).unwrap();
        assert!(adj.states[12].iter().all(|&v| v == 0.0));
        assert!(adj.states[0].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn duality_identity_is_exact() {
        // ⟨J'(μ), h⟩ = ⟨u_h(x0,·), r⟩ to round-off: the strongest single
        // check of the adjoint/sensitivity/gradient triple
        let spec = neumann_spec(16, 24, 12);
        let disc = Discretization::new(&spec).unwrap();
        let samples = spec.mu.samples_on(&disc.quad).unwrap();
        let base = disc.solve(&samples).unwrap();
        let tau = disc.grid.step(1);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..3 {
            let r: Vec<f64> = (0..=24).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h: Vec<f64> = (0..disc.quad.len())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let adj = solve_adjoint(&disc, &samples, &r).unwrap();
            let grad = assemble_gradient(&disc, &base, &adj);
            let lhs = pair_alpha(&disc, &grad, &h);
            let sens = solve_sensitivity(&disc, &samples, &base, &h).unwrap();
            let sens_trace = trace_at_obs(&disc, &sens);
            let rhs = -pair_time(tau, &sens_trace, &r);
            // J'(α) = -∫∫ v ∂_t^α u: the pairing identity carries the sign
            let rel = (lhs + rhs).abs() / lhs.abs().max(1e-300);
            assert!(rel < 1e-8, "duality defect {rel}: {lhs} vs {}", -rhs);
        }
    }

    #[test]
    fn sensitivity_is_the_linearization() {
        // ‖u(μ+εh) - u(μ) - ε u_h‖ = O(ε²)
        let spec = neumann_spec(12, 16, 12);
        let disc = Discretization::new(&spec).unwrap();
        let samples = spec.mu.samples_on(&disc.quad).unwrap();
        let base = disc.solve(&samples).unwrap();
        let h: Vec<f64> = disc
            .quad
            .nodes()
            .iter()
            .map(|&a| (std::f64::consts::PI * a).sin())
            .collect();
        let sens = solve_sensitivity(&disc, &samples, &base, &h).unwrap();
        let mut defects = Vec::new();
        for &eps in &[1e-2, 1e-3] {
            let bumped: Vec<f64> = samples.iter().zip(&h).map(|(s, d)| s + eps * d).collect();
            let sol = disc.solve(&bumped).unwrap();
            let mut worst = 0.0f64;
            for n in 0..sol.states.len() {
                for i in 0..sol.states[n].len() {
                    let lin = base.states[n][i] + eps * sens.states[n][i];
                    worst = worst.max((sol.states[n][i] - lin).abs());
                }
            }
            defects.push(worst);
        }
        let order = (defects[0] / defects[1]).log10();
        assert!(order > 1.8, "linearization order {order} (defects {defects:?})");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = neumann_spec(8, 16, 8);
        let disc = Discretization::new(&spec).unwrap();
        let samples = spec.mu.samples_on(&disc.quad).unwrap();
        let base = disc.solve(&samples).unwrap();
        let tau = disc.grid.step(1);
        // synthetic data from a nearby weight so the residual is nontrivial
        let data: Vec<f64> = {
            let other: Vec<f64> = disc.quad.nodes().iter().map(|&a| 0.5 * a + 0.1).collect();
            let sol = disc.solve(&other).unwrap();
            trace_at_obs(&disc, &sol)
        };
        let base_trace = trace_at_obs(&disc, &base);
        let residual: Vec<f64> = base_trace.iter().zip(&data).map(|(u, g)| u - g).collect();
        let adj = solve_adjoint(&disc, &samples, &residual).unwrap();
        let grad = assemble_gradient(&disc, &base, &adj);

        let j_of = |mu: &[f64]| -> f64 {
            let sol = disc.solve(mu).unwrap();
            let trace = trace_at_obs(&disc, &sol);
            let r: Vec<f64> = trace.iter().zip(&data).map(|(u, g)| u - g).collect();
            0.5 * pair_time(tau, &r, &r)
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..3 {
            let h: Vec<f64> = (0..disc.quad.len())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let eps = 1e-5;
            let plus: Vec<f64> = samples.iter().zip(&h).map(|(s, d)| s + eps * d).collect();
            let minus: Vec<f64> = samples.iter().zip(&h).map(|(s, d)| s - eps * d).collect();
            let fd = (j_of(&plus) - j_of(&minus)) / (2.0 * eps);
            let an = pair_alpha(&disc, &grad, &h);
            let rel = (fd - an).abs() / an.abs().max(1e-300);
            assert!(rel < 1e-3, "gradient vs FD relative error {rel}");
        }
    }

    #[test]
    fn zero_adjoint_gives_zero_gradient() {
        let spec = neumann_spec(8, 8, 8);
        let disc = Discretization::new(&spec).unwrap();
        let samples = spec.mu.samples_on(&disc.quad).unwrap();
        let base = disc.solve(&samples).unwrap();
        let adj = AdjointSolution {
            states: vec![vec![0.0; 9]; 9],
        };
        let grad = assemble_gradient(&disc, &base, &adj);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn dirichlet_problems_are_rejected() {
        let mut spec = neumann_spec(8, 8, 8);
        spec.bc = BoundarySpec::homogeneous(BcKind::Dirichlet);
        spec.observe = ObservationSpec {
            point: Side::Left,
            kind: TraceKind::ConormalFlux,
        };
        let disc = Discretization::new(&spec).unwrap();
        let samples = spec.mu.samples_on(&disc.quad).unwrap();
        assert!(matches!(
            solve_adjoint(&disc, &samples, &vec![0.0; 9]).unwrap_err(),
            AdjointError::DirichletUnsupported
        ));
    }
}
