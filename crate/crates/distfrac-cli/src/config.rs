//! Run configuration: TOML (or JSON) schema and its translation into
//! solver inputs. Unknown keys are rejected everywhere.

use anyhow::{anyhow, bail, Context, Result};
use distfrac::expr::Expr;
use distfrac::fem::{BcKind, BoundarySpec, CoefficientField, Mesh1D, Side};
use distfrac::forward::{ObservationSpec, ProblemSpec, SourceSpec, TraceKind};
use distfrac::grid::TimeGrid;
use distfrac::weights::WeightDistribution;
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub problem: ProblemSection,
    pub weight: WeightSection,
    pub time: TimeSection,
    #[serde(default)]
    pub alpha: AlphaSection,
    pub observe: ObserveSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub recover: Option<RecoverSection>,
    #[serde(default)]
    pub asymptotics: Option<AsymptoticsSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// Number of mesh elements.
    pub m: usize,
    /// "dirichlet" or "neumann".
    pub bc: String,
    #[serde(default = "zero_expr")]
    pub bc_left: String,
    #[serde(default = "zero_expr")]
    pub bc_right: String,
    pub a: String,
    #[serde(default = "zero_expr")]
    pub q: String,
    #[serde(default = "zero_expr")]
    pub u0: String,
    #[serde(default)]
    pub f: Option<String>,
    #[serde(default)]
    pub sigma: Option<String>,
}

fn zero_expr() -> String {
    "0".to_string()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSection {
    /// "expression", "indicator" or "atoms".
    pub mode: String,
    #[serde(default)]
    pub expr: Option<String>,
    #[serde(default)]
    pub support: Option<[f64; 2]>,
    #[serde(default)]
    pub bounds: Option<[f64; 2]>,
    #[serde(default)]
    pub atoms: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    /// "uniform" or "geometric".
    pub kind: String,
    pub n: usize,
    pub t_end: f64,
    #[serde(default)]
    pub t_first: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaSection {
    pub n_alpha: usize,
}

impl Default for AlphaSection {
    fn default() -> Self {
        AlphaSection { n_alpha: 128 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserveSection {
    /// "left" or "right" boundary point.
    pub point: String,
    /// "value" or "flux".
    pub kind: String,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub eps: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverSection {
    /// "bounds" or "cgm".
    pub mode: String,
    // bounds mode
    #[serde(default)]
    pub window_small: Option<[f64; 2]>,
    #[serde(default)]
    pub window_large: Option<[f64; 2]>,
    #[serde(default)]
    pub grid_small: Option<TimeSection>,
    #[serde(default)]
    pub grid_large: Option<TimeSection>,
    #[serde(default)]
    pub weights: Option<Vec<NamedWeight>>,
    // cgm mode
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_tau_dp")]
    pub tau_dp: f64,
    #[serde(default = "default_mu0")]
    pub mu0: String,
    #[serde(default = "default_stop")]
    pub stop: String,
    #[serde(default = "default_gamma_mode")]
    pub gamma_mode: String,
    #[serde(default = "default_true")]
    pub smoothing: bool,
    /// Synthetic data comes from a run refined by this factor in both
    /// space and time (1 = same grid).
    #[serde(default = "default_refine")]
    pub data_refine: usize,
}

fn default_k_max() -> usize {
    100
}
fn default_tau_dp() -> f64 {
    1.1
}
fn default_mu0() -> String {
    "sin(3.141592653589793*alpha)/100".to_string()
}
fn default_stop() -> String {
    "discrepancy".to_string()
}
fn default_gamma_mode() -> String {
    "smoothed".to_string()
}
fn default_true() -> bool {
    true
}
fn default_refine() -> usize {
    2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedWeight {
    pub name: String,
    pub bounds: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticsSection {
    pub t_min: f64,
    pub t_max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "out".to_string(),
        }
    }
}

impl Config {
    /// Load from a `.toml` (default) or `.json` file.
    pub fn load(path: &Path) -> Result<(Config, Vec<u8>)> {
        let raw = std::fs::read(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let text = std::str::from_utf8(&raw).context("config is not UTF-8")?;
        let cfg: Config = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(text).context("invalid JSON config")?
        } else {
            toml::from_str(text).context("invalid TOML config")?
        };
        Ok((cfg, raw))
    }

    pub fn build_weight(&self) -> Result<WeightDistribution> {
        build_weight_section(&self.weight)
    }

    pub fn build_grid(&self) -> Result<TimeGrid> {
        build_grid_section(&self.time)
    }

    /// Assemble the forward problem from the config.
    pub fn build_problem(&self) -> Result<ProblemSpec> {
        self.build_problem_with(self.build_grid()?, self.build_weight()?)
    }

    pub fn build_problem_with(
        &self,
        grid: TimeGrid,
        mu: WeightDistribution,
    ) -> Result<ProblemSpec> {
        let p = &self.problem;
        let bc_kind = match p.bc.as_str() {
            "dirichlet" => BcKind::Dirichlet,
            "neumann" => BcKind::Neumann,
            other => bail!("unknown bc kind `{other}` (use dirichlet|neumann)"),
        };
        let parse = |what: &str, src: &str| -> Result<Expr> {
            Expr::parse(src).map_err(|e| anyhow!("bad expression for {what}: {e}"))
        };
        let source = match (&p.f, &p.sigma) {
            (None, None) => None,
            (Some(f), sigma) => Some(SourceSpec {
                sigma: parse("sigma", sigma.as_deref().unwrap_or("1"))?,
                f: parse("f", f)?,
            }),
            (None, Some(_)) => bail!("sigma given without f"),
        };
        let spec = ProblemSpec {
            mesh: Mesh1D::uniform(p.m).map_err(|e| anyhow!("mesh: {e}"))?,
            coeff: CoefficientField {
                a: parse("a", &p.a)?,
                q: parse("q", &p.q)?,
            },
            bc: BoundarySpec {
                kind: bc_kind,
                left: parse("bc_left", &p.bc_left)?,
                right: parse("bc_right", &p.bc_right)?,
            },
            u0: parse("u0", &p.u0)?,
            source,
            mu,
            grid,
            n_alpha: self.alpha.n_alpha,
            observe: ObservationSpec {
                point: match self.observe.point.as_str() {
                    "left" => Side::Left,
                    "right" => Side::Right,
                    other => bail!("unknown observation point `{other}` (use left|right)"),
                },
                kind: match self.observe.kind.as_str() {
                    "value" => TraceKind::Value,
                    "flux" => TraceKind::ConormalFlux,
                    other => bail!("unknown trace kind `{other}` (use value|flux)"),
                },
            },
        };
        spec.validate()
            .map_err(|e| anyhow!("inconsistent problem: {e}"))?;
        Ok(spec)
    }
}

pub fn build_weight_section(w: &WeightSection) -> Result<WeightDistribution> {
    match w.mode.as_str() {
        "indicator" => {
            let b = w
                .bounds
                .ok_or_else(|| anyhow!("indicator weight needs `bounds = [b1, b2]`"))?;
            WeightDistribution::indicator(b[0], b[1]).map_err(|e| anyhow!("weight: {e}"))
        }
        "expression" => {
            let src = w
                .expr
                .as_deref()
                .ok_or_else(|| anyhow!("expression weight needs `expr`"))?;
            let density =
                Expr::parse(src).map_err(|e| anyhow!("bad weight expression: {e}"))?;
            let support = w.support.unwrap_or([0.0, 1.0]);
            WeightDistribution::expression(density, (support[0], support[1]))
                .map_err(|e| anyhow!("weight: {e}"))
        }
        "atoms" => {
            let atoms = w
                .atoms
                .as_ref()
                .ok_or_else(|| anyhow!("atom weight needs `atoms = [[alpha, w], ...]`"))?;
            WeightDistribution::atoms(atoms.iter().map(|a| (a[0], a[1])).collect())
                .map_err(|e| anyhow!("weight: {e}"))
        }
        other => bail!("unknown weight mode `{other}` (use expression|indicator|atoms)"),
    }
}

pub fn build_grid_section(t: &TimeSection) -> Result<TimeGrid> {
    match t.kind.as_str() {
        "uniform" => TimeGrid::uniform(t.n, t.t_end).map_err(|e| anyhow!("time grid: {e}")),
        "geometric" => {
            let first = t
                .t_first
                .ok_or_else(|| anyhow!("geometric grid needs `t_first`"))?;
            TimeGrid::geometric(t.n, first, t.t_end).map_err(|e| anyhow!("time grid: {e}"))
        }
        other => bail!("unknown time grid kind `{other}` (use uniform|geometric)"),
    }
}
