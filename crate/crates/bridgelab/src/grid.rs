//! Time discretizations of [0, 1) and functions attached to them.
//!
//! A `TimeGrid` is a strictly increasing set of nodes starting at 0. Open
//! grids end at 1 - eps_min (simulation never touches the singular
//! endpoint); closed grids additionally carry the node t = 1 for the
//! integral operators that live on the full interval. Geometric grids keep
//! the ratio of distances to the endpoint constant, which is what resolves
//! the 1/(1-t) drift scale.

use crate::error::{Error, Result};
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Uniform,
    Geometric,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    /// 1 - t for every node, computed without cancellation where possible.
    dist_to_end: Vec<f64>,
    kind: GridKind,
    eps_min: f64,
    /// Whether the node t = 1 is appended (integral-operator grids only).
    closed: bool,
}

impl TimeGrid {
    /// Uniform grid {0, h, 2h, ..., 1 - eps_min} with n intervals.
    pub fn uniform(n: usize, eps_min: f64) -> Result<Self> {
        Self::check_params(n, eps_min)?;
        let last = 1.0 - eps_min;
        let nodes: Vec<f64> = (0..=n).map(|k| last * k as f64 / n as f64).collect();
        let dist = nodes.iter().map(|&t| 1.0 - t).collect();
        Ok(TimeGrid { nodes, dist_to_end: dist, kind: GridKind::Uniform, eps_min, closed: false })
    }

    /// Geometric grid with 1 - t_k = eps_min^{k/n}.
    pub fn geometric(n: usize, eps_min: f64) -> Result<Self> {
        Self::check_params(n, eps_min)?;
        let log_eps = eps_min.ln();
        let dist: Vec<f64> = (0..=n).map(|k| (log_eps * k as f64 / n as f64).exp()).collect();
        let nodes = dist.iter().map(|&d| 1.0 - d).collect();
        Ok(TimeGrid {
            nodes,
            dist_to_end: dist,
            kind: GridKind::Geometric,
            eps_min,
            closed: false,
        })
    }

    /// Grid from explicit nodes; must start at 0, increase strictly, stay < 1.
    pub fn from_nodes(nodes: &[f64]) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(Error::Config("grid must start at 0 and have at least 2 nodes".into()));
        }
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Config(format!(
                    "grid nodes must increase strictly, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        let last = *nodes.last().unwrap();
        if !(last < 1.0) {
            return Err(Error::Config(format!("grid nodes must stay below 1, got {last}")));
        }
        Ok(TimeGrid {
            nodes: nodes.to_vec(),
            dist_to_end: nodes.iter().map(|&t| 1.0 - t).collect(),
            kind: GridKind::Custom,
            eps_min: 1.0 - last,
            closed: false,
        })
    }

    fn check_params(n: usize, eps_min: f64) -> Result<()> {
        if n < 2 {
            return Err(Error::Config(format!("grid needs n ≥ 2 intervals, got {n}")));
        }
        if !(eps_min > 0.0 && eps_min < 1.0) {
            return Err(Error::Config(format!("eps_min must lie in (0, 1), got {eps_min}")));
        }
        Ok(())
    }

    /// A copy with the node t = 1 appended, for operators on all of [0, 1].
    pub fn extended_to_one(&self) -> TimeGrid {
        if self.closed {
            return self.clone();
        }
        let mut nodes = self.nodes.clone();
        nodes.push(1.0);
        let mut dist = self.dist_to_end.clone();
        dist.push(0.0);
        TimeGrid {
            nodes,
            dist_to_end: dist,
            kind: self.kind,
            eps_min: self.eps_min,
            closed: true,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    /// 1 - t_k without cancellation.
    pub fn dist_to_end(&self, k: usize) -> f64 {
        self.dist_to_end[k]
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.nodes[k + 1] - self.nodes[k]
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn eps_min(&self) -> f64 {
        self.eps_min
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Index of the node equal to `t` within 1e-12, if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.nodes.iter().position(|&x| (x - t).abs() <= 1e-12)
    }

    /// Trapezoid quadrature weights for the grid nodes.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.nodes.len();
        let mut w = vec![0.0; n];
        for k in 0..n - 1 {
            let h = 0.5 * self.dt(k);
            w[k] += h;
            w[k + 1] += h;
        }
        w
    }
}

/// Convenience constructor matching the CLI surface.
pub fn make_grid(kind: GridKind, n: usize, eps_min: f64) -> Result<TimeGrid> {
    match kind {
        GridKind::Uniform => TimeGrid::uniform(n, eps_min),
        GridKind::Geometric => TimeGrid::geometric(n, eps_min),
        GridKind::Custom => Err(Error::Config(
            "custom grids are built from explicit nodes, not (n, eps_min)".into(),
        )),
    }
}

/// Interpretation of values attached to a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FnTag {
    Function,
    Derivative,
}

/// Real values attached to the nodes of a `TimeGrid`.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub grid: Arc<TimeGrid>,
    pub values: Vec<f64>,
    pub tag: FnTag,
}

impl GridFunction {
    pub fn new(grid: Arc<TimeGrid>, values: Vec<f64>, tag: FnTag) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "grid function has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("grid function values must be finite".into()));
        }
        Ok(GridFunction { grid, values, tag })
    }

    /// Sample a closure at the grid nodes.
    pub fn sample<F: Fn(f64) -> f64>(grid: &Arc<TimeGrid>, tag: FnTag, f: F) -> Result<Self> {
        let values = grid.nodes().iter().map(|&t| f(t)).collect();
        Self::new(Arc::clone(grid), values, tag)
    }

    /// Discrete L² norm with trapezoid weights.
    pub fn l2_norm(&self) -> f64 {
        let w = self.grid.trapezoid_weights();
        self.values.iter().zip(&w).map(|(v, w)| v * v * w).sum::<f64>().sqrt()
    }

    pub fn same_grid(&self, other: &GridFunction) -> Result<()> {
        if !Arc::ptr_eq(&self.grid, &other.grid) && self.grid.nodes() != other.grid.nodes() {
            return Err(Error::Config("grid functions live on different grids".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_example() {
        let g = TimeGrid::uniform(4, 0.2).unwrap();
        let expect = [0.0, 0.2, 0.4, 0.6, 0.8];
        assert_eq!(g.len(), 5);
        for (a, b) in g.nodes().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn geometric_example() {
        let g = TimeGrid::geometric(2, 0.25).unwrap();
        let expect = [0.0, 0.5, 0.75];
        for (a, b) in g.nodes().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn geometric_constant_ratio() {
        let g = TimeGrid::geometric(37, 1e-4).unwrap();
        let r0 = g.dist_to_end(1) / g.dist_to_end(0);
        for k in 0..g.len() - 1 {
            let r = g.dist_to_end(k + 1) / g.dist_to_end(k);
            assert!((r - r0).abs() < 1e-12);
        }
        assert!((r0 - 1e-4_f64.powf(1.0 / 37.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(TimeGrid::uniform(1, 0.1).is_err());
        assert!(TimeGrid::uniform(4, 0.0).is_err());
        assert!(TimeGrid::uniform(4, 1.0).is_err());
        assert!(TimeGrid::from_nodes(&[0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::from_nodes(&[0.0, 1.0]).is_err());
        assert!(TimeGrid::from_nodes(&[0.1, 0.5]).is_err());
    }

    #[test]
    fn extension_appends_endpoint() {
        let g = TimeGrid::uniform(4, 0.2).unwrap().extended_to_one();
        assert!(g.is_closed());
        assert_eq!(*g.nodes().last().unwrap(), 1.0);
        assert_eq!(g.len(), 6);
    }

    #[test]
    fn trapezoid_weights_sum_to_span() {
        let g = TimeGrid::geometric(64, 1e-3).unwrap();
        let total: f64 = g.trapezoid_weights().iter().sum();
        assert!((total - (1.0 - 1e-3)).abs() < 1e-12);
    }
}
