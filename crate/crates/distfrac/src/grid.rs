//! Time grids for the convolution history.
//!
//! Uniform grids keep the L1 weight tables Toeplitz (one row serves every
//! step); geometric grids make horizons spanning many decades reachable,
//! which the observation windows of the bound-recovery experiments need.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("time grid needs at least {0} step(s)")]
    TooFewSteps(usize),
    #[error("time grid nodes must start at 0 and increase strictly")]
    NotIncreasing,
    #[error("geometric grid needs 0 < first node < horizon, got first={first}, horizon={horizon}")]
    BadGeometric { first: f64, horizon: f64 },
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Uniform,
    Geometric,
    Explicit,
}

/// Strictly increasing time nodes `t_0 = 0 < t_1 < … < t_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    kind: GridKind,
}

impl TimeGrid {
    /// `N` equal steps on `[0, horizon]`.
    pub fn uniform(n: usize, horizon: f64) -> Result<Self, GridError> {
        if n < 1 {
            return Err(GridError::TooFewSteps(1));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(GridError::BadHorizon(horizon));
        }
        let tau = horizon / n as f64;
        let mut nodes: Vec<f64> = (0..=n).map(|k| k as f64 * tau).collect();
        nodes[n] = horizon;
        Ok(TimeGrid {
            nodes,
            kind: GridKind::Uniform,
        })
    }

    /// `t_0 = 0`, then `N` nodes in geometric progression from `first`
    /// to `horizon`. Clusters steps toward `t = 0`.
    pub fn geometric(n: usize, first: f64, horizon: f64) -> Result<Self, GridError> {
        if n < 2 {
            return Err(GridError::TooFewSteps(2));
        }
        if !(first > 0.0 && horizon > first) || !horizon.is_finite() {
            return Err(GridError::BadGeometric { first, horizon });
        }
        let ratio = (horizon / first).powf(1.0 / (n - 1) as f64);
        let mut nodes = Vec::with_capacity(n + 1);
        nodes.push(0.0);
        for k in 0..n {
            nodes.push(first * ratio.powi(k as i32));
        }
        nodes[n] = horizon;
        let grid = TimeGrid {
            nodes,
            kind: GridKind::Geometric,
        };
        grid.check()?;
        Ok(grid)
    }

    /// An explicit node list; `nodes[0]` must be 0.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self, GridError> {
        let grid = TimeGrid {
            nodes,
            kind: GridKind::Explicit,
        };
        grid.check()?;
        Ok(grid)
    }

    fn check(&self) -> Result<(), GridError> {
        if self.nodes.len() < 2 {
            return Err(GridError::TooFewSteps(1));
        }
        if self.nodes[0] != 0.0 {
            return Err(GridError::NotIncreasing);
        }
        for w in self.nodes.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(GridError::NotIncreasing);
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of steps `N` (there are `N + 1` nodes).
    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn node(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    /// Step size `t_j - t_{j-1}` for `j` in `1..=N`.
    pub fn step(&self, j: usize) -> f64 {
        self.nodes[j] - self.nodes[j - 1]
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn is_uniform(&self) -> bool {
        self.kind == GridKind::Uniform
    }

    /// The grid of reversed times `s_k = T - t_{N-k}`. A uniform grid is
    /// its own reversal; this is what the adjoint solve steps on.
    pub fn reversed(&self) -> TimeGrid {
        if self.is_uniform() {
            return self.clone();
        }
        let horizon = self.horizon();
        let n = self.n_steps();
        let mut nodes: Vec<f64> = (0..=n).map(|k| horizon - self.nodes[n - k]).collect();
        nodes[0] = 0.0;
        TimeGrid {
            nodes,
            kind: GridKind::Explicit,
        }
    }
}
