//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured numbers (run with `--nocapture` to see
//! them). Criterion 9 (byte-identical CLI outputs) lives with the
//! command-line crate.

use distfrac::adjoint::{
    assemble_gradient, norm_time, pair_alpha, pair_time, solve_adjoint, solve_sensitivity,
};
use distfrac::asymptotics::{
    check_limits, contour_p, contour_q, hankel_reciprocal_gamma, ContourParams, KernelMoments,
    LimitVerdict,
};
use distfrac::expr::Expr;
use distfrac::fem::{BcKind, BoundarySpec, CoefficientField, Mesh1D, Side, TriDiag};
use distfrac::forward::{
    add_noise, step_forward, step_generic, Discretization, ObservationSpec, ObservationTrace,
    ProblemSpec, Provenance, SourceSpec, TraceKind,
};
use distfrac::grid::TimeGrid;
use distfrac::inverse::{cgm_recover, fit_bound, BoundTarget, CgmOptions, StopMode};
use distfrac::weights::{gamma, l1_row, DistributedWeights, WeightDistribution};
use rand::Rng;
use rand::SeedableRng;

// ---------------------------------------------------------------------
// criterion 1: weight-kernel exactness
// ---------------------------------------------------------------------

#[test]
fn criterion_1_l1_weight_exactness() {
    let started = std::time::Instant::now();
    let n = 64;
    let grid = TimeGrid::uniform(n, 1.0).unwrap();
    let mut worst = 0.0f64;
    for &alpha in &[0.25, 0.5, 0.75] {
        let g2 = gamma(2.0 - alpha).unwrap();
        for target in 1..=n {
            let row = l1_row(&grid, alpha, target).unwrap();
            let got: f64 = row
                .iter()
                .enumerate()
                .map(|(j, b)| b * grid.node(target - j))
                .sum();
            let exact = grid.node(target).powf(1.0 - alpha) / g2;
            worst = worst.max((got - exact).abs());
        }
    }
    assert!(worst <= 1e-12, "L1 derivative of t deviates by {worst}");

    // the general-spacing formula must collapse to the closed form
    let explicit = TimeGrid::from_nodes((0..=n).map(|k| k as f64 / n as f64).collect()).unwrap();
    let mut worst_agree = 0.0f64;
    for &alpha in &[0.25, 0.5, 0.75] {
        for target in 1..=n {
            let a = l1_row(&grid, alpha, target).unwrap();
            let b = l1_row(&explicit, alpha, target).unwrap();
            for (x, y) in a.iter().zip(&b) {
                worst_agree = worst_agree.max((x - y).abs());
            }
        }
    }
    assert!(
        worst_agree <= 1e-13,
        "uniform/nonuniform disagreement {worst_agree}"
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "criterion 1 budget exceeded: {elapsed:.1?}");
    println!(
        "criterion 1: PASS — L1 exact on u(t)=t to {worst:.2e}, grid-form agreement {worst_agree:.2e} ({elapsed:.1?})"
    );
}

// ---------------------------------------------------------------------
// criterion 2: single-order reduction vs Mittag-Leffler
// ---------------------------------------------------------------------

fn mittag_leffler(alpha: f64, z: f64) -> f64 {
    // independent oracle: truncated power series Σ z^k / Γ(αk + 1)
    let mut sum = 0.0;
    let mut zk = 1.0;
    for k in 0..400 {
        let term = zk / gamma(alpha * k as f64 + 1.0).unwrap();
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
        zk *= z;
    }
    sum
}

fn one_mode_run(n: usize) -> (TimeGrid, Vec<f64>) {
    let grid = TimeGrid::uniform(n, 0.5).unwrap();
    let mu = WeightDistribution::atoms(vec![(0.5, 1.0)]).unwrap();
    let quad = mu.quadrature(1).unwrap();
    let weights = DistributedWeights::build(&grid, &quad, &[1.0]).unwrap();
    let one = TriDiag {
        sub: vec![],
        diag: vec![1.0],
        sup: vec![],
    };
    let states = step_generic(&one, &one.clone(), &grid, &weights, &[1.0], None, None).unwrap();
    let values = states.iter().map(|s| s[0]).collect();
    (grid, values)
}

#[test]
fn criterion_2_single_order_reduction() {
    let started = std::time::Instant::now();
    let n = 4096;
    let (grid, states) = one_mode_run(n);
    // L1 has a weakly singular initial layer; past it the solution must
    // track E_α(-t^α) within 1e-3 relative
    let mut worst = 0.0f64;
    for k in (n / 64)..=n {
        let t = grid.node(k);
        let exact = mittag_leffler(0.5, -t.sqrt());
        worst = worst.max((states[k] - exact).abs() / exact.abs());
    }
    assert!(worst <= 1e-3, "Mittag-Leffler mismatch {worst}");

    let (_, a) = one_mode_run(1024);
    let (_, b) = one_mode_run(2048);
    let (_, c) = one_mode_run(4096);
    let e1 = (a[1024] - b[2048]).abs();
    let e2 = (b[2048] - c[4096]).abs();
    let order = (e1 / e2).log2();
    assert!(order >= 0.9, "self-convergence order {order}");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "criterion 2 budget exceeded: {elapsed:.1?}");
    println!(
        "criterion 2: PASS — single-atom run tracks the Mittag-Leffler series to {worst:.2e}, self-convergence order {order:.2} ({elapsed:.1?})"
    );
}

// ---------------------------------------------------------------------
// criterion 3: contour oracle vs Hankel / Cauchy / radius invariance
// ---------------------------------------------------------------------

#[test]
fn criterion_3_contour_oracle() {
    let started = std::time::Instant::now();
    let mut worst_q = 0.0f64;
    let mut worst_p = 0.0f64;
    for &alpha in &[0.3, 0.5, 0.8] {
        let atom = WeightDistribution::atoms(vec![(alpha, 1.0)]).unwrap();
        let cp = ContourParams::for_support(alpha).unwrap();
        let q = contour_q(1.0, &atom, &cp).unwrap();
        worst_q = worst_q.max((q - 1.0 / gamma(alpha).unwrap()).abs());
        let p = contour_p(1.0, &atom, &cp).unwrap();
        worst_p = worst_p.max((p - 1.0 / gamma(-alpha).unwrap()).abs());
    }
    assert!(worst_q <= 1e-8, "Hankel 1/Γ(α) deviation {worst_q}");
    assert!(worst_p <= 1e-8, "Hankel 1/Γ(-α) deviation {worst_p}");

    // Cauchy vanishing through the same public surface: 1/Γ(0) = 0
    let cp = ContourParams::for_support(0.8).unwrap();
    let cauchy = hankel_reciprocal_gamma(0.0, &cp).unwrap();
    assert!(cauchy.abs() <= 1e-10, "Cauchy integral {cauchy}");

    // radius invariance
    let mu = WeightDistribution::indicator(0.2, 0.8).unwrap();
    let mut worst_delta = 0.0f64;
    for &t in &[0.05, 1.0, 20.0] {
        let a = contour_q(t, &mu, &cp).unwrap();
        let b = contour_q(t, &mu, &cp.with_delta(2.0)).unwrap();
        worst_delta = worst_delta.max((a - b).abs() / a.abs());
        let a = contour_p(t, &mu, &cp).unwrap();
        let b = contour_p(t, &mu, &cp.with_delta(2.0)).unwrap();
        worst_delta = worst_delta.max((a - b).abs() / a.abs());
    }
    assert!(worst_delta <= 1e-6, "δ-invariance defect {worst_delta}");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "criterion 3 budget exceeded: {elapsed:.1?}");
    println!(
        "criterion 3: PASS — Hankel deviations {worst_q:.2e}/{worst_p:.2e}, Cauchy {cauchy:.2e}, δ-invariance {worst_delta:.2e} ({elapsed:.1?})"
    );
}

// ---------------------------------------------------------------------
// criterion 4: sandwich bounds and limit verdicts
// ---------------------------------------------------------------------

#[test]
fn criterion_4_sandwich_and_limits() {
    let started = std::time::Instant::now();
    let weights = [
        WeightDistribution::indicator(0.2, 0.8).unwrap(),
        WeightDistribution::indicator(0.2, 0.6).unwrap(),
        WeightDistribution::indicator(0.4, 0.8).unwrap(),
    ];
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for mu in &weights {
        let (_, b2) = mu.support();
        let cp = ContourParams::for_support(b2).unwrap();
        let km = KernelMoments::new(mu);
        for &t in &[1e-3, 1e-2, 0.1, 1.0] {
            let ratio = contour_q(t, mu, &cp).unwrap().abs() * km.p(t).unwrap();
            lo = lo.min(ratio);
            hi = hi.max(ratio);
            assert!((1e-2..=1e2).contains(&ratio), "|𝒬|P = {ratio} at t={t}");
        }
        for &t in &[1.0, 10.0, 1e2, 1e3] {
            let ratio = contour_p(t, mu, &cp).unwrap().abs() / km.p(t).unwrap();
            lo = lo.min(ratio);
            hi = hi.max(ratio);
            assert!((1e-2..=1e2).contains(&ratio), "|𝒫|/P = {ratio} at t={t}");
        }
    }

    let mu1 = &weights[0];
    let checks = [
        (0.1, LimitVerdict::Vanishes, true),
        (0.3, LimitVerdict::Diverges, true),
        (0.7, LimitVerdict::Vanishes, false),
        (0.9, LimitVerdict::Diverges, false),
    ];
    for (b, expect, large_side) in checks {
        let report = check_limits(mu1, b).unwrap();
        let got = if large_side {
            report.large_t
        } else {
            report.small_t
        };
        assert_eq!(got, expect, "verdict at b = {b}");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "criterion 4 budget exceeded: {elapsed:.1?}");
    println!(
        "criterion 4: PASS — sandwich ratios within [{lo:.2e}, {hi:.2e}] ⊂ [1e-2, 1e2], limit verdicts correct at b1±0.1 and b2±0.1 ({elapsed:.1?})"
    );
}

// ---------------------------------------------------------------------
// criteria 5 and 6: the bound-recovery experiment
// ---------------------------------------------------------------------

fn bound_spec(grid: TimeGrid, mu: WeightDistribution) -> ProblemSpec {
    ProblemSpec {
        mesh: Mesh1D::uniform(128).unwrap(),
        coeff: CoefficientField {
            a: Expr::parse("1+sin(3.141592653589793*x)").unwrap(),
            q: Expr::parse("0").unwrap(),
        },
        bc: BoundarySpec::homogeneous(BcKind::Dirichlet),
        u0: Expr::parse("0").unwrap(),
        source: Some(SourceSpec {
            sigma: Expr::parse("chi(0,1,t)").unwrap(),
            f: Expr::parse("x*(1-x)*exp(x)").unwrap(),
        }),
        mu,
        grid,
        n_alpha: 64,
        observe: ObservationSpec {
            point: Side::Left,
            kind: TraceKind::ConormalFlux,
        },
    }
}

struct SweepResult {
    times_small: Vec<f64>,
    dev_small: Vec<f64>, // |g(t) - g(0)| source trace (signed)
    trace_small: Vec<f64>,
    times_large: Vec<f64>,
    trace_large: Vec<f64>,
}

fn run_sweep(b1: f64, b2: f64) -> SweepResult {
    let mu = WeightDistribution::indicator(b1, b2).unwrap();
    let gs = TimeGrid::geometric(161, 1e-8, 1e-4).unwrap();
    let sol_s = step_forward(&bound_spec(gs, mu.clone())).unwrap();
    let trace_small = sol_s.left_flux.clone().unwrap();
    let g0 = trace_small[0];
    let dev_small = trace_small.iter().map(|g| g - g0).collect();
    let gl = TimeGrid::geometric(321, 1e-3, 1e5).unwrap();
    let sol_l = step_forward(&bound_spec(gl, mu)).unwrap();
    let trace_large = sol_l.left_flux.clone().unwrap();
    SweepResult {
        times_small: sol_s.times,
        dev_small,
        trace_small,
        times_large: sol_l.times,
        trace_large,
    }
}

fn loglog_slope(times: &[f64], values: &[f64], window: (f64, f64)) -> f64 {
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut n = 0.0;
    for (&t, &v) in times.iter().zip(values) {
        if t >= window.0 && t <= window.1 && v.abs() > 0.0 {
            let (x, y) = (t.ln(), v.abs().ln());
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            n += 1.0;
        }
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

const TABLE1_WEIGHTS: [(&str, f64, f64); 5] = [
    ("mu1", 0.2, 0.8),
    ("mu2", 0.2, 0.6),
    ("mu3", 0.2, 0.4),
    ("mu4", 0.4, 0.8),
    ("mu5", 0.6, 0.8), // adopted bounds; see the reproduction table
];

#[test]
fn criterion_5_qualitative_asymptotic_law() {
    let started = std::time::Instant::now();
    let sweeps: Vec<SweepResult> = TABLE1_WEIGHTS
        .iter()
        .map(|&(_, b1, b2)| run_sweep(b1, b2))
        .collect();
    let small: Vec<f64> = sweeps
        .iter()
        .map(|s| loglog_slope(&s.times_small, &s.dev_small, (1e-6, 1e-5)))
        .collect();
    let large: Vec<f64> = sweeps
        .iter()
        .map(|s| loglog_slope(&s.times_large, &s.trace_large, (1e4, 1e5)))
        .collect();

    // small time: the upper bound rules; {mu1, mu4, mu5} share b2 = 0.8
    let shared = [small[0], small[3], small[4]];
    let spread = shared.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        - shared.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    assert!(spread <= 0.05, "shared-b2 small-time slopes spread {spread}");
    for &other in &[small[1], small[2]] {
        for &s in &shared {
            assert!(
                (s - other).abs() >= 0.1,
                "small-time slopes fail to separate: {s} vs {other}"
            );
        }
    }

    // large time: the lower bound rules; {mu1, mu2, mu3} share b1 = 0.2
    let shared_l = [large[0], large[1], large[2]];
    let spread_l = shared_l.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        - shared_l.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    assert!(
        spread_l <= 0.05,
        "shared-b1 large-time slopes spread {spread_l}"
    );
    for &other in &[large[3], large[4]] {
        for &s in &shared_l {
            assert!(
                (s - other).abs() >= 0.1,
                "large-time slopes fail to separate: {s} vs {other}"
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "criterion 5 budget exceeded: {elapsed:.1?}");
    println!(
        "criterion 5: PASS — small-t slopes {small:.3?} (spread {spread:.3} among shared b2), large-t slopes {large:.3?} (spread {spread_l:.3} among shared b1) ({elapsed:.1?})"
    );
}

#[test]
fn criterion_6_bound_table_reproduction() {
    let started = std::time::Instant::now();
    let reference_lower = [0.30, 0.30, 0.27, 0.48, 0.66];
    let reference_upper = [0.75, 0.55, 0.16, 0.75, 0.76];
    let mut lower_est = Vec::new();
    let mut upper_est = Vec::new();
    let mut lower_res = Vec::new();
    let mut upper_res = Vec::new();
    for &(_, b1, b2) in &TABLE1_WEIGHTS {
        let sweep = run_sweep(b1, b2);
        let rescaled: Vec<f64> = sweep
            .times_large
            .iter()
            .zip(&sweep.trace_large)
            .map(|(&t, &g)| t * g)
            .collect();
        let lower = fit_bound(
            &sweep.times_large,
            &rescaled,
            (1e4, 1e5),
            BoundTarget::Lower,
        )
        .unwrap();
        let upper = fit_bound(
            &sweep.times_small,
            &sweep.trace_small,
            (1e-6, 1e-5),
            BoundTarget::Upper,
        )
        .unwrap();
        lower_est.push(lower.b);
        upper_est.push(upper.b);
        lower_res.push(lower.relative_residual());
        upper_res.push(upper.relative_residual());
    }

    // a column outside the ±0.10 tolerance must announce itself through a
    // fit residual larger than every in-tolerance column's residual
    let check = |est: &[f64], reference: &[f64], res: &[f64], which: &str| {
        let in_tol: Vec<bool> = est
            .iter()
            .zip(reference)
            .map(|(e, p)| (e - p).abs() <= 0.10)
            .collect();
        let max_ok_res = res
            .iter()
            .zip(&in_tol)
            .filter(|(_, ok)| **ok)
            .map(|(r, _)| *r)
            .fold(0.0f64, f64::max);
        for i in 0..est.len() {
            if !in_tol[i] {
                assert!(
                    res[i] > max_ok_res,
                    "{which} column {i}: estimate {} misses the reference {} and residual {} does not flag it (max in-tol residual {max_ok_res})",
                    est[i],
                    reference[i],
                    res[i]
                );
            }
        }
        in_tol.iter().filter(|&&ok| ok).count()
    };
    let n_lower = check(&lower_est, &reference_lower, &lower_res, "lower");
    let n_upper = check(&upper_est, &reference_upper, &upper_res, "upper");
    assert!(n_lower >= 4, "too many lower-bound misses: {lower_est:.3?}");
    assert!(n_upper >= 3, "too many upper-bound misses: {upper_est:.3?}");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 600.0, "criterion 6 budget exceeded: {elapsed:.1?}");
    println!(
        "criterion 6: PASS — lower estimates {lower_est:.3?} vs reference {reference_lower:?} ({n_lower}/5 in tolerance), upper estimates {upper_est:.3?} vs reference {reference_upper:?} ({n_upper}/5 in tolerance, misses flagged by residual) ({elapsed:.1?})"
    );
}

// ---------------------------------------------------------------------
// criterion 7: adjoint gradient correctness on the coarse benchmark
// ---------------------------------------------------------------------

fn weight_recovery_spec(m: usize, n: usize, n_alpha: usize, mu: WeightDistribution) -> ProblemSpec {
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
        mu,
        grid: TimeGrid::uniform(n, 1.0).unwrap(),
        n_alpha,
        observe: ObservationSpec {
            point: Side::Left,
            kind: TraceKind::Value,
        },
    }
}

#[test]
fn criterion_7_gradient_correctness() {
    let started = std::time::Instant::now();
    let spec = weight_recovery_spec(
        32,
        64,
        16,
        WeightDistribution::expression(
            Expr::parse("alpha*(1-alpha)^2*exp(2*alpha)").unwrap(),
            (0.0, 1.0),
        )
        .unwrap(),
    );
    let disc = Discretization::new(&spec).unwrap();
    let samples = spec.mu.samples_on(&disc.quad).unwrap();
    let base = disc.solve(&samples).unwrap();
    let row = disc.obs_row();
    let tau = disc.grid.step(1);

    // data from a displaced weight so the residual is nontrivial
    let data: Vec<f64> = {
        let other: Vec<f64> = disc.quad.nodes().iter().map(|&a| 0.4 * a + 0.05).collect();
        let sol = disc.solve(&other).unwrap();
        sol.states.iter().map(|s| s[row]).collect()
    };
    let trace: Vec<f64> = base.states.iter().map(|s| s[row]).collect();
    let residual: Vec<f64> = trace.iter().zip(&data).map(|(u, g)| u - g).collect();
    let adj = solve_adjoint(&disc, &samples, &residual).unwrap();
    let grad = assemble_gradient(&disc, &base, &adj);

    let j_of = |mu: &[f64]| -> f64 {
        let sol = disc.solve(mu).unwrap();
        let tr: Vec<f64> = sol.states.iter().map(|s| s[row]).collect();
        let r: Vec<f64> = tr.iter().zip(&data).map(|(u, g)| u - g).collect();
        0.5 * pair_time(tau, &r, &r) / 1.0
    };

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let mut worst_fd = 0.0f64;
    let mut worst_dual = 0.0f64;
    for _ in 0..5 {
        let h: Vec<f64> = (0..disc.quad.len())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        // finite-difference oracle on J
        let eps = 1e-5;
        let plus: Vec<f64> = samples.iter().zip(&h).map(|(s, d)| s + eps * d).collect();
        let minus: Vec<f64> = samples.iter().zip(&h).map(|(s, d)| s - eps * d).collect();
        let fd = (j_of(&plus) - j_of(&minus)) / (2.0 * eps);
        let an = pair_alpha(&disc, &grad, &h);
        worst_fd = worst_fd.max((fd - an).abs() / an.abs());

        // discrete duality: ⟨J'(μ), h⟩ = (u_h(x0,·), r)
        let sens = solve_sensitivity(&disc, &samples, &base, &h).unwrap();
        let st: Vec<f64> = sens.states.iter().map(|s| s[row]).collect();
        let dual = pair_time(tau, &st, &residual);
        worst_dual = worst_dual.max((an - dual).abs() / an.abs());
    }
    assert!(worst_fd <= 1e-3, "gradient vs FD relative error {worst_fd}");
    assert!(worst_dual <= 1e-8, "duality relative defect {worst_dual}");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "criterion 7 budget exceeded: {elapsed:.1?}");
    println!(
        "criterion 7: PASS — gradient vs finite differences {worst_fd:.2e} (≤1e-3), duality defect {worst_dual:.2e} (≤1e-8) ({elapsed:.1?})"
    );
}

// ---------------------------------------------------------------------
// criterion 8: weight-recovery behaviour (errors and semiconvergence)
// ---------------------------------------------------------------------

struct RecoveryRun {
    best_error: f64,
    best_k: usize,
    errors: Vec<f64>,
}

fn recover_case(mu_expr: &str, eps: f64, seed: u64) -> RecoveryRun {
    let (m, n, n_alpha, refine) = (128usize, 512usize, 64usize, 2usize);
    let truth = WeightDistribution::expression(Expr::parse(mu_expr).unwrap(), (0.0, 1.0)).unwrap();
    // synthetic data from a refined discretization (2x in space and time)
    let data_spec = weight_recovery_spec(m * refine, n * refine, n_alpha, truth.clone());
    let data_disc = Discretization::new(&data_spec).unwrap();
    let data_samples = data_spec.mu.samples_on(&data_disc.quad).unwrap();
    let data_sol = data_disc.solve(&data_samples).unwrap();
    let row = data_disc.obs_row();
    let fine: Vec<f64> = data_sol.states.iter().map(|s| s[row]).collect();
    let exact = ObservationTrace {
        times: (0..=n).map(|k| k as f64 / n as f64).collect(),
        values: (0..=n).map(|k| fine[k * refine]).collect(),
        provenance: Provenance::Exact,
    };
    let data = if eps > 0.0 {
        add_noise(&exact, eps, seed).unwrap().values
    } else {
        exact.values.clone()
    };

    let rec_spec = weight_recovery_spec(m, n, n_alpha, truth);
    let disc = Discretization::new(&rec_spec).unwrap();
    let truth_samples = rec_spec.mu.samples_on(&disc.quad).unwrap();
    let mu0: Vec<f64> = disc
        .quad
        .nodes()
        .iter()
        .map(|&a| (std::f64::consts::PI * a).sin() / 100.0)
        .collect();
    let opts = CgmOptions {
        k_max: 50,
        noise_level: eps,
        data_sup: exact.sup_norm(),
        stop: StopMode::MaxIter, // oracle stopping: log the whole history
        true_mu: Some(truth_samples),
        ..CgmOptions::default()
    };
    let state = cgm_recover(&disc, &data, &mu0, &opts).unwrap();
    RecoveryRun {
        best_error: state.best_error.unwrap(),
        best_k: state.best_k,
        errors: state.log.iter().map(|r| r.error.unwrap()).collect(),
    }
}

const SMOOTH_WEIGHT: &str = "alpha*(1-alpha)^2*exp(2*alpha)";
const HAT_WEIGHT: &str = "2*min(alpha,1-alpha)";

#[test]
fn criterion_8_weight_recovery() {
    let started = std::time::Instant::now();
    // noiseless: the smooth weight within 1e-2 of the truth, the hat within 6e-2
    let smooth = recover_case(SMOOTH_WEIGHT, 0.0, 0);
    assert!(
        smooth.best_error <= 1e-2,
        "smooth-weight noiseless best error {} at k={}",
        smooth.best_error,
        smooth.best_k
    );
    let hat = recover_case(HAT_WEIGHT, 0.0, 0);
    assert!(
        hat.best_error <= 6e-2,
        "hat-weight noiseless best error {} at k={}",
        hat.best_error,
        hat.best_k
    );

    // 1% noise: both within 1e-1
    let smooth_noisy = recover_case(SMOOTH_WEIGHT, 1e-2, 1);
    assert!(smooth_noisy.best_error <= 1e-1);
    let hat_noisy = recover_case(HAT_WEIGHT, 1e-2, 1);
    assert!(hat_noisy.best_error <= 1e-1);

    // 3% noise: semiconvergence — strict decrease to the best iterate,
    // then strict growth past it
    let semi = recover_case(SMOOTH_WEIGHT, 3e-2, 1);
    let errs = &semi.errors;
    let kmin = (0..errs.len())
        .min_by(|&a, &b| errs[a].total_cmp(&errs[b]))
        .unwrap();
    assert!(kmin > 0 && kmin < errs.len() - 1, "minimum at the edge");
    assert!(
        errs[kmin] < 0.5 * errs[0],
        "no real decrease: {} -> {}",
        errs[0],
        errs[kmin]
    );
    let later_max = errs[kmin + 1..].iter().fold(0.0f64, |a, &b| a.max(b));
    assert!(
        later_max > 1.5 * errs[kmin],
        "no growth after the minimum: {} -> {later_max}",
        errs[kmin]
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1200.0, "criterion 8 budget exceeded: {elapsed:.1?}");
    println!(
        "criterion 8: PASS — noiseless best errors {:.3e} (k={}) and {:.3e} (k={}); 1% noise {:.3e}/{:.3e}; 3% noise semiconverges (min {:.3e} at k={kmin}, later max {later_max:.3e}) in {elapsed:.1?}",
        smooth.best_error,
        smooth.best_k,
        hat.best_error,
        hat.best_k,
        smooth_noisy.best_error,
        hat_noisy.best_error,
        errs[kmin]
    );
}

// ---------------------------------------------------------------------
// supplementary: the small-time prediction actually tracks the trace
// ---------------------------------------------------------------------

#[test]
fn predicted_law_tracks_simulated_trace() {
    // sanity tie between the contour oracle and the solver: for the
    // source-driven Dirichlet problem, g(t) ≈ ∫₀ᵗ s^{-1}𝒬(s) ds · R*f(x0),
    // so the local slope of g matches the slope of t·(t^{-1}𝒬) + 1
    let mu = WeightDistribution::indicator(0.2, 0.8).unwrap();
    let sweep = run_sweep(0.2, 0.8);
    let cp = ContourParams::for_support(0.8).unwrap();
    let ts = [2e-6, 4e-6, 8e-6];
    let qs: Vec<f64> = ts
        .iter()
        .map(|&t| contour_q(t, &mu, &cp).unwrap())
        .collect();
    let slope_q = (qs[2].ln() - qs[0].ln()) / (ts[2].ln() - ts[0].ln());
    let slope_g = loglog_slope(&sweep.times_small, &sweep.dev_small, (1e-6, 1e-5));
    // ∫₀ᵗ s^{b2-1}ℓ(s) ds ~ t^{b2}ℓ(t): integral and integrand share the
    // power, so 𝒬's slope should match g's within the log-factor drift
    assert!(
        (slope_q - slope_g).abs() < 0.1,
        "contour slope {slope_q} vs trace slope {slope_g}"
    );
}
