//! Subcommand pipelines. Each writes a deterministic artifact set into
//! the output directory and nothing else.

use crate::config::{build_grid_section, Config};
use crate::output::{
    emit_plot_script, fmt_g, trace_rows, write_csv, write_run_record, PlotKind, PlotSeries,
};
use anyhow::{anyhow, bail, Context, Result};
use distfrac::adjoint::{
    assemble_gradient, pair_alpha, pair_time, solve_adjoint, solve_sensitivity,
};
use distfrac::asymptotics::{contour_p, contour_q, eval_p, ContourParams};
use distfrac::fem::{self, BcKind, Side};
use distfrac::forward::{add_noise, Discretization, ObservationTrace, Provenance, TraceKind};
use distfrac::inverse::{cgm_recover, fit_bound, BoundFit, BoundTarget, CgmOptions, StopMode};
use distfrac::weights::WeightDistribution;
use rand::Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use std::path::Path;

/// Distinguishes bad configuration (exit 2) from failed computation
/// (exit 3).
pub enum Failure {
    Config(anyhow::Error),
    Solver(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Solver(_) => 3,
        }
    }

    pub fn message(&self) -> String {
        match self {
            Failure::Config(e) => format!("config error: {e:#}"),
            Failure::Solver(e) => format!("solver error: {e:#}"),
        }
    }
}

fn cfg_err<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Config)
}

fn sol_err<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Solver)
}

type RunResult = std::result::Result<(), Failure>;

fn observed_trace(spec: &distfrac::ProblemSpec) -> Result<(Discretization, ObservationTrace)> {
    let disc = Discretization::new(spec).context("assembly failed")?;
    let samples = spec.mu.samples_on(&disc.quad).context("weight sampling")?;
    let sol = disc.solve(&samples).context("forward solve failed")?;
    let trace = disc.trace_of(&sol).context("trace extraction failed")?;
    Ok((disc, trace))
}

pub fn run_forward(cfg: &Config, out: &Path, config_bytes: &[u8], seed: u64) -> RunResult {
    let spec = cfg_err(cfg.build_problem())?;
    let disc = sol_err(Discretization::new(&spec).map_err(|e| anyhow!("assembly: {e}")))?;
    let samples = sol_err(
        spec.mu
            .samples_on(&disc.quad)
            .map_err(|e| anyhow!("weight sampling: {e}")),
    )?;
    let sol = sol_err(disc.solve(&samples).map_err(|e| anyhow!("solve: {e}")))?;
    let trace = sol_err(disc.trace_of(&sol).map_err(|e| anyhow!("trace: {e}")))?;
    sol_err(write_csv(
        &out.join("trace.csv"),
        "t,g",
        &trace_rows(&trace.times, &trace.values),
    ))?;
    let last = sol.states.last().unwrap();
    let rows: Vec<Vec<String>> = disc
        .mesh
        .nodes()
        .iter()
        .zip(last)
        .map(|(&x, &u)| vec![fmt_g(x), fmt_g(u)])
        .collect();
    sol_err(write_csv(&out.join("final_state.csv"), "x,u", &rows))?;
    sol_err(write_run_record(out, "forward", config_bytes, seed))?;
    Ok(())
}

pub fn run_observe(cfg: &Config, out: &Path, config_bytes: &[u8], seed: u64) -> RunResult {
    let spec = cfg_err(cfg.build_problem())?;
    let (_, trace) = sol_err(observed_trace(&spec))?;
    sol_err(write_csv(
        &out.join("trace.csv"),
        "t,g",
        &trace_rows(&trace.times, &trace.values),
    ))?;
    sol_err(write_run_record(out, "observe", config_bytes, seed))?;
    Ok(())
}

pub fn run_noise(cfg: &Config, out: &Path, config_bytes: &[u8], seed: u64) -> RunResult {
    let spec = cfg_err(cfg.build_problem())?;
    let (_, exact) = sol_err(observed_trace(&spec))?;
    let noisy = sol_err(
        add_noise(&exact, cfg.noise.eps, seed).map_err(|e| anyhow!("noise model: {e}")),
    )?;
    sol_err(write_csv(
        &out.join("trace.csv"),
        "t,g",
        &trace_rows(&noisy.times, &noisy.values),
    ))?;
    sol_err(write_run_record(out, "noise", config_bytes, seed))?;
    Ok(())
}

struct BoundRow {
    name: String,
    truth: (f64, f64),
    lower: BoundFit,
    upper: BoundFit,
    small_times: Vec<f64>,
    small_values: Vec<f64>,
    large_times: Vec<f64>,
    large_values: Vec<f64>,
}

pub fn run_bounds(cfg: &Config, out: &Path, config_bytes: &[u8], seed: u64, jobs: usize) -> RunResult {
    let rec = cfg_err(
        cfg.recover
            .clone()
            .ok_or_else(|| anyhow!("bounds run needs a [recover] section")),
    )?;
    if rec.mode != "bounds" {
        return Err(Failure::Config(anyhow!(
            "recover.mode is `{}`, expected `bounds`",
            rec.mode
        )));
    }
    let weights = cfg_err(
        rec.weights
            .clone()
            .ok_or_else(|| anyhow!("bounds run needs [[recover.weights]] entries")),
    )?;
    let grid_small = cfg_err(
        rec.grid_small
            .as_ref()
            .ok_or_else(|| anyhow!("bounds run needs recover.grid_small"))
            .and_then(build_grid_section),
    )?;
    let grid_large = cfg_err(
        rec.grid_large
            .as_ref()
            .ok_or_else(|| anyhow!("bounds run needs recover.grid_large"))
            .and_then(build_grid_section),
    )?;
    let win_small = rec.window_small.unwrap_or([1e-6, 1e-5]);
    let win_large = rec.window_large.unwrap_or([1e4, 1e5]);

    let pool = sol_err(
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| anyhow!("thread pool: {e}")),
    )?;
    let results: Vec<Result<BoundRow>> = pool.install(|| {
        weights
            .par_iter()
            .map(|w| -> Result<BoundRow> {
                let mu = WeightDistribution::indicator(w.bounds[0], w.bounds[1])
                    .map_err(|e| anyhow!("weight {}: {e}", w.name))?;
                let spec_s = cfg.build_problem_with(grid_small.clone(), mu.clone())?;
                let disc_s = Discretization::new(&spec_s)?;
                let samples_s = spec_s.mu.samples_on(&disc_s.quad)?;
                let sol_s = disc_s.solve(&samples_s)?;
                let tr_s = disc_s.trace_of(&sol_s)?;
                let spec_l = cfg.build_problem_with(grid_large.clone(), mu)?;
                let disc_l = Discretization::new(&spec_l)?;
                let samples_l = spec_l.mu.samples_on(&disc_l.quad)?;
                let sol_l = disc_l.solve(&samples_l)?;
                let tr_l = disc_l.trace_of(&sol_l)?;

                let rescaled: Vec<f64> = tr_l
                    .times
                    .iter()
                    .zip(&tr_l.values)
                    .map(|(&t, &g)| t * g)
                    .collect();
                let lower = fit_bound(
                    &tr_l.times,
                    &rescaled,
                    (win_large[0], win_large[1]),
                    BoundTarget::Lower,
                )?;
                let upper = fit_bound(
                    &tr_s.times,
                    &tr_s.values,
                    (win_small[0], win_small[1]),
                    BoundTarget::Upper,
                )?;
                Ok(BoundRow {
                    name: w.name.clone(),
                    truth: (w.bounds[0], w.bounds[1]),
                    lower,
                    upper,
                    small_times: tr_s.times,
                    small_values: tr_s.values,
                    large_times: tr_l.times,
                    large_values: tr_l.values,
                })
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut detail = Vec::new();
    let mut small_series = Vec::new();
    let mut large_series = Vec::new();
    for r in results {
        let row = sol_err(r)?;
        rows.push(vec![
            row.name.clone(),
            fmt_g(row.lower.b),
            fmt_g(row.truth.0),
            fmt_g(row.upper.b),
            fmt_g(row.truth.1),
        ]);
        detail.push(vec![
            row.name.clone(),
            fmt_g(row.lower.b),
            fmt_g(row.lower.relative_residual()),
            fmt_g(row.upper.b),
            fmt_g(row.upper.relative_residual()),
        ]);
        let small_csv = out.join(format!("trace_small_{}.csv", row.name));
        sol_err(write_csv(
            &small_csv,
            "t,g",
            &trace_rows(&row.small_times, &row.small_values),
        ))?;
        let large_csv = out.join(format!("trace_large_{}.csv", row.name));
        sol_err(write_csv(
            &large_csv,
            "t,g",
            &trace_rows(&row.large_times, &row.large_values),
        ))?;
        small_series.push(PlotSeries {
            csv: small_csv,
            title: row.name.clone(),
            offset: row.small_values[0],
        });
        large_series.push(PlotSeries {
            csv: large_csv,
            title: row.name.clone(),
            offset: 0.0,
        });
    }
    sol_err(write_csv(
        &out.join("bounds.csv"),
        "mu_name,b1_est,b1_true,b2_est,b2_true",
        &rows,
    ))?;
    sol_err(write_csv(
        &out.join("bounds_detail.csv"),
        "mu_name,b1_est,b1_residual_rel,b2_est,b2_residual_rel",
        &detail,
    ))?;
    sol_err(emit_plot_script(
        PlotKind::SmallTime,
        &small_series,
        &out.join("smalltime.gp"),
    ))?;
    sol_err(emit_plot_script(
        PlotKind::LargeTime,
        &large_series,
        &out.join("largetime.gp"),
    ))?;
    sol_err(write_run_record(out, "bounds", config_bytes, seed))?;
    Ok(())
}

pub fn run_recover(cfg: &Config, out: &Path, config_bytes: &[u8], seed: u64) -> RunResult {
    let rec = cfg_err(
        cfg.recover
            .clone()
            .ok_or_else(|| anyhow!("recover run needs a [recover] section")),
    )?;
    if rec.mode != "cgm" {
        return Err(Failure::Config(anyhow!(
            "recover.mode is `{}`, expected `cgm`",
            rec.mode
        )));
    }
    if cfg.time.kind != "uniform" {
        return Err(Failure::Config(anyhow!(
            "weight recovery needs a uniform time grid"
        )));
    }
    let mu0_expr = cfg_err(
        distfrac::Expr::parse(&rec.mu0).map_err(|e| anyhow!("bad mu0 expression: {e}")),
    )?;
    let stop = match rec.stop.as_str() {
        "discrepancy" => StopMode::Discrepancy,
        "max_iter" => StopMode::MaxIter,
        other => {
            return Err(Failure::Config(anyhow!(
                "unknown stop mode `{other}` (use discrepancy|max_iter)"
            )))
        }
    };
    let gamma_from_smoothed = match rec.gamma_mode.as_str() {
        "smoothed" => true,
        "literal" => false,
        other => {
            return Err(Failure::Config(anyhow!(
                "unknown gamma mode `{other}` (use smoothed|literal)"
            )))
        }
    };

    let run = || -> Result<()> {
        // synthetic data from a refined discretization of the true weight
        let refine = rec.data_refine.max(1);
        let truth = cfg.build_weight()?;
        let n = cfg.time.n;
        let mut data_cfg = cfg.clone();
        data_cfg.problem.m *= refine;
        data_cfg.time.n *= refine;
        let data_spec = data_cfg.build_problem()?;
        let data_disc = Discretization::new(&data_spec)?;
        let data_samples = data_spec.mu.samples_on(&data_disc.quad)?;
        let data_sol = data_disc.solve(&data_samples)?;
        let fine = data_disc.trace_of(&data_sol)?;
        let exact = ObservationTrace {
            times: (0..=n).map(|k| fine.times[k * refine]).collect(),
            values: (0..=n).map(|k| fine.values[k * refine]).collect(),
            provenance: Provenance::Exact,
        };
        let data = if cfg.noise.eps > 0.0 {
            add_noise(&exact, cfg.noise.eps, seed)?.values
        } else {
            exact.values.clone()
        };

        let spec = cfg.build_problem()?;
        let disc = Discretization::new(&spec)?;
        let truth_samples = truth.samples_on(&disc.quad)?;
        let mu0: Vec<f64> = disc
            .quad
            .nodes()
            .iter()
            .map(|&a| mu0_expr.eval(&[("alpha", a)]))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| anyhow!("mu0 evaluation: {e}"))?;
        let opts = CgmOptions {
            k_max: rec.k_max,
            tau_dp: rec.tau_dp,
            noise_level: cfg.noise.eps,
            data_sup: exact.sup_norm(),
            stop,
            smoothing: rec.smoothing,
            gamma_from_smoothed,
            true_mu: Some(truth_samples.clone()),
            ..CgmOptions::default()
        };
        let state = cgm_recover(&disc, &data, &mu0, &opts)?;

        let iter_rows: Vec<Vec<String>> = state
            .log
            .iter()
            .map(|r| {
                vec![
                    r.k.to_string(),
                    fmt_g(r.j),
                    fmt_g(r.residual_norm),
                    r.error.map(fmt_g).unwrap_or_default(),
                    fmt_g(r.step),
                ]
            })
            .collect();
        write_csv(&out.join("iterations.csv"), "k,J,residual,error,step", &iter_rows)?;
        let recovered_csv = out.join("weight_recovered.csv");
        write_csv(
            &recovered_csv,
            "alpha,mu",
            &trace_rows_alpha(&state.alpha_nodes, &state.best_mu),
        )?;
        let true_csv = out.join("weight_true.csv");
        write_csv(
            &true_csv,
            "alpha,mu",
            &trace_rows_alpha(&state.alpha_nodes, &truth_samples),
        )?;
        emit_plot_script(
            PlotKind::Recovery,
            &[
                PlotSeries {
                    csv: true_csv,
                    title: "true weight".into(),
                    offset: 0.0,
                },
                PlotSeries {
                    csv: recovered_csv,
                    title: format!("recovered (k = {})", state.best_k),
                    offset: 0.0,
                },
            ],
            &out.join("recovery.gp"),
        )?;
        emit_plot_script(
            PlotKind::ErrorHistory,
            &[PlotSeries {
                csv: out.join("iterations.csv"),
                title: "L2 error".into(),
                offset: 0.0,
            }],
            &out.join("error_history.gp"),
        )?;
        println!(
            "recover: stopped by {:?} after {} iterations; best iterate k = {}{}",
            state.stop,
            state.log.len(),
            state.best_k,
            state
                .best_error
                .map(|e| format!(", L2 error {e:.4e}"))
                .unwrap_or_default()
        );
        Ok(())
    };
    sol_err(run())?;
    sol_err(write_run_record(out, "recover", config_bytes, seed))?;
    Ok(())
}

fn trace_rows_alpha(nodes: &[f64], values: &[f64]) -> Vec<Vec<String>> {
    nodes
        .iter()
        .zip(values)
        .map(|(&a, &m)| vec![fmt_g(a), fmt_g(m)])
        .collect()
}

pub fn run_asymptotics(cfg: &Config, out: &Path, config_bytes: &[u8], seed: u64) -> RunResult {
    let section = cfg_err(
        cfg.asymptotics
            .clone()
            .ok_or_else(|| anyhow!("asymptotics run needs an [asymptotics] section")),
    )?;
    if section.count < 2 || !(section.t_min > 0.0 && section.t_max > section.t_min) {
        return Err(Failure::Config(anyhow!(
            "asymptotics needs 0 < t_min < t_max and count >= 2"
        )));
    }
    let run = || -> Result<()> {
        let mu = cfg.build_weight()?;
        let (_, b2) = mu.support();
        let cp = ContourParams::for_support(b2).map_err(|e| anyhow!("contour: {e}"))?;
        let spec = cfg.build_problem()?;
        let disc = Discretization::new(&spec)?;
        let (small_bv, large_bv) = prediction_boundary_values(cfg, &disc)?;

        let mut rows = Vec::with_capacity(section.count);
        for i in 0..section.count {
            let t = section.t_min
                * (section.t_max / section.t_min)
                    .powf(i as f64 / (section.count - 1) as f64);
            let p = eval_p(t, &mu).map_err(|e| anyhow!("P(t): {e}"))?;
            let qc = contour_q(t, &mu, &cp).map_err(|e| anyhow!("contour Q: {e}"))?;
            let pc = contour_p(t, &mu, &cp).map_err(|e| anyhow!("contour P: {e}"))?;
            // leading-order prediction of the observed trace
            let predicted = if t <= 1.0 {
                qc / t * small_bv
            } else {
                -pc / t * large_bv
            };
            rows.push(vec![fmt_g(t), fmt_g(p), fmt_g(qc), fmt_g(pc), fmt_g(predicted)]);
        }
        write_csv(
            &out.join("asymptotics.csv"),
            "t,P,Q_contour,P_contour,predicted",
            &rows,
        )?;
        Ok(())
    };
    sol_err(run())?;
    sol_err(write_run_record(out, "asymptotics", config_bytes, seed))?;
    Ok(())
}

/// Boundary values feeding the small-/large-time predictions:
/// `R*h(x0)` and `R*A^{-2}h(x0)` with `h` the source profile `f` (or
/// the discrete image of the elliptic operator applied to `u0` when the
/// run is data-driven only).
fn prediction_boundary_values(cfg: &Config, disc: &Discretization) -> Result<(f64, f64)> {
    let spec = cfg.build_problem()?;
    let row = disc.obs_row();
    let flux_kind = spec.observe.kind == TraceKind::ConormalFlux;
    let side = spec.observe.point;

    // nodal values of h and its load vector
    let (h_nodes, h_load): (Vec<f64>, Vec<f64>) = match &spec.source {
        Some(src) => {
            let nodes: Vec<f64> = disc
                .mesh
                .nodes()
                .iter()
                .map(|&x| src.f.eval(&[("x", x)]))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| anyhow!("f evaluation: {e}"))?;
            (nodes, fem::load_vector(&disc.mesh, &src.f)?)
        }
        None => {
            // h = A_h u0 in the discrete sense: M h = S u0
            let su0 = disc.stiff.mul_vec(&disc.u0);
            let h = disc.mass.solve(&su0)?;
            let load = disc.mass.mul_vec(&h);
            (h, load)
        }
    };

    let small_bv = if flux_kind {
        let a_at = |x: f64| spec.coeff.a.eval(&[("x", x)]).unwrap_or(f64::NAN);
        boundary_derivative(disc.mesh.nodes(), &h_nodes, side, &a_at)
    } else {
        h_nodes[row]
    };

    // A^{-2} h by two elliptic solves with the configured boundary kind
    let w1 = elliptic(disc, &spec, &h_load)?;
    let l2 = disc.mass.mul_vec(&w1);
    let w2 = elliptic(disc, &spec, &l2)?;
    let large_bv = if flux_kind {
        fem::boundary_flux(side, &disc.stiff, &w2, &l2, 0.0)
    } else {
        w2[row]
    };
    Ok((small_bv, large_bv))
}

fn elliptic(
    disc: &Discretization,
    spec: &distfrac::ProblemSpec,
    load: &[f64],
) -> Result<Vec<f64>> {
    match spec.bc.kind {
        BcKind::Dirichlet => Ok(disc.stiff.solve_with_dirichlet(load, 0.0, 0.0)?),
        BcKind::Neumann => Ok(disc.stiff.solve(load)?),
    }
}

/// Conormal derivative of a nodal profile by a one-sided second-order
/// difference (prediction bookkeeping only; solver fluxes are
/// variational).
fn boundary_derivative(nodes: &[f64], h: &[f64], side: Side, a_at: &dyn Fn(f64) -> f64) -> f64 {
    let n = nodes.len();
    match side {
        Side::Left => {
            let dx = nodes[1] - nodes[0];
            let d = (-3.0 * h[0] + 4.0 * h[1] - h[2]) / (2.0 * dx);
            -d * a_at(nodes[0])
        }
        Side::Right => {
            let dx = nodes[n - 1] - nodes[n - 2];
            let d = (3.0 * h[n - 1] - 4.0 * h[n - 2] + h[n - 3]) / (2.0 * dx);
            d * a_at(nodes[n - 1])
        }
    }
}

pub fn run_gradcheck(cfg: &Config, out: &Path, config_bytes: &[u8], seed: u64) -> RunResult {
    let run = || -> Result<()> {
        let spec = cfg.build_problem()?;
        if spec.bc.kind != BcKind::Neumann {
            bail!("gradcheck needs a Neumann problem (the adjoint is derived for that trace)");
        }
        let disc = Discretization::new(&spec)?;
        let samples = spec.mu.samples_on(&disc.quad)?;
        let base = disc.solve(&samples)?;
        let row = disc.obs_row();
        let tau = disc.grid.step(1);
        // displaced data so the residual is nontrivial
        let data: Vec<f64> = {
            let other: Vec<f64> = disc.quad.nodes().iter().map(|&a| 0.4 * a + 0.05).collect();
            let sol = disc.solve(&other)?;
            sol.states.iter().map(|s| s[row]).collect()
        };
        let trace: Vec<f64> = base.states.iter().map(|s| s[row]).collect();
        let residual: Vec<f64> = trace.iter().zip(&data).map(|(u, g)| u - g).collect();
        let adj = solve_adjoint(&disc, &samples, &residual)?;
        let grad = assemble_gradient(&disc, &base, &adj);
        let j_of = |mu: &[f64]| -> Result<f64> {
            let sol = disc.solve(mu)?;
            let tr: Vec<f64> = sol.states.iter().map(|s| s[row]).collect();
            let r: Vec<f64> = tr.iter().zip(&data).map(|(u, g)| u - g).collect();
            Ok(0.5 * pair_time(tau, &r, &r))
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut worst_fd = 0.0f64;
        let mut worst_dual = 0.0f64;
        for k in 0..5 {
            let h: Vec<f64> = (0..disc.quad.len())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let eps = 1e-5;
            let plus: Vec<f64> = samples.iter().zip(&h).map(|(s, d)| s + eps * d).collect();
            let minus: Vec<f64> = samples.iter().zip(&h).map(|(s, d)| s - eps * d).collect();
            let fd = (j_of(&plus)? - j_of(&minus)?) / (2.0 * eps);
            let an = pair_alpha(&disc, &grad, &h);
            let sens = solve_sensitivity(&disc, &samples, &base, &h)?;
            let st: Vec<f64> = sens.states.iter().map(|s| s[row]).collect();
            let dual = pair_time(tau, &st, &residual);
            let fd_rel = (fd - an).abs() / an.abs().max(1e-300);
            let dual_rel = (an - dual).abs() / an.abs().max(1e-300);
            worst_fd = worst_fd.max(fd_rel);
            worst_dual = worst_dual.max(dual_rel);
            println!(
                "gradcheck direction {k}: adjoint {an:+.6e}, finite-diff {fd:+.6e} (rel {fd_rel:.2e}), duality defect {dual_rel:.2e}"
            );
            rows.push(vec![
                k.to_string(),
                fmt_g(an),
                fmt_g(fd),
                fmt_g(fd_rel),
                fmt_g(dual_rel),
            ]);
        }
        write_csv(
            &out.join("gradcheck.csv"),
            "direction,adjoint,finite_diff,fd_rel_err,duality_defect",
            &rows,
        )?;
        if worst_fd > 1e-3 || worst_dual > 1e-8 {
            bail!("gradient check failed: fd {worst_fd:.2e} (tol 1e-3), duality {worst_dual:.2e} (tol 1e-8)");
        }
        println!("gradcheck: PASS (fd {worst_fd:.2e}, duality {worst_dual:.2e})");
        Ok(())
    };
    sol_err(run())?;
    sol_err(write_run_record(out, "gradcheck", config_bytes, seed))?;
    Ok(())
}
