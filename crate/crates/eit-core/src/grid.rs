//! Fine polar staggered grid on the unit disk.
//!
//! Primary nodes sit at the center and on `n_radial` uniformly spaced rings;
//! the outermost ring is the boundary. Dual cells are the polar rectangles
//! centered at the nodes. Each edge carries the geometric factor
//! `L(sigma_dual) / L(e_primary)` that turns a conductivity sample at the
//! edge midpoint into an edge conductance.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{EitError, Result};

/// Which grid line an edge follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridEdgeKind {
    Radial,
    Angular,
}

/// An edge of the primary grid with its precomputed geometric factor.
#[derive(Debug, Clone, Copy)]
pub struct GridEdge {
    pub a: usize,
    pub b: usize,
    pub kind: GridEdgeKind,
    /// Ratio of dual-edge arclength to primary-edge arclength.
    pub geom: f64,
}

/// Polar staggered finite-volume grid on the unit disk.
#[derive(Debug)]
pub struct DiskGrid {
    n_radial: usize,
    n_angular: usize,
    positions: Vec<(f64, f64)>,
    polar: Vec<(f64, f64)>,
    edges: Vec<GridEdge>,
    cell_areas: Vec<f64>,
}

impl DiskGrid {
    /// Number of primary radial rings (the outermost is the boundary).
    pub fn n_radial(&self) -> usize {
        self.n_radial
    }

    /// Number of angular nodes per ring; equals the boundary node count.
    pub fn n_angular(&self) -> usize {
        self.n_angular
    }

    pub fn node_count(&self) -> usize {
        1 + self.n_radial * self.n_angular
    }

    pub fn interior_count(&self) -> usize {
        self.node_count() - self.n_angular
    }

    /// Radial spacing between rings.
    pub fn dr(&self) -> f64 {
        1.0 / self.n_radial as f64
    }

    /// Angular spacing between nodes on a ring.
    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.n_angular as f64
    }

    /// Trapezoidal quadrature weight of each boundary node.
    pub fn boundary_weight(&self) -> f64 {
        self.dtheta()
    }

    /// Node index of ring `ring` (1-based, boundary = `n_radial`) at angle slot `j`.
    pub fn node_index(&self, ring: usize, j: usize) -> usize {
        debug_assert!(ring >= 1 && ring <= self.n_radial);
        1 + (ring - 1) * self.n_angular + (j % self.n_angular)
    }

    pub const CENTER: usize = 0;

    /// Global node index of boundary node `j`.
    pub fn boundary_node(&self, j: usize) -> usize {
        self.node_index(self.n_radial, j)
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        idx >= self.node_index(self.n_radial, 0)
    }

    /// Interior unknown index (center first, then rings inside-out), or None
    /// for boundary nodes.
    pub fn interior_index(&self, idx: usize) -> Option<usize> {
        if self.is_boundary(idx) {
            None
        } else {
            Some(idx)
        }
    }

    /// Cartesian position of a node.
    pub fn position(&self, idx: usize) -> (f64, f64) {
        self.positions[idx]
    }

    /// Polar coordinates `(r, theta)` of a node.
    pub fn polar(&self, idx: usize) -> (f64, f64) {
        self.polar[idx]
    }

    pub fn edges(&self) -> &[GridEdge] {
        &self.edges
    }

    /// Dual-cell area of each node, in node order.
    pub fn cell_areas(&self) -> &[f64] {
        &self.cell_areas
    }

    /// Angle of boundary node `j`.
    pub fn boundary_angle(&self, j: usize) -> f64 {
        self.dtheta() * j as f64
    }
}

/// Builds the polar staggered grid.
///
/// Rejects resolutions below `n_radial >= 2`, `n_angular >= 8`.
pub fn build_grid(n_radial: usize, n_angular: usize) -> Result<Arc<DiskGrid>> {
    if n_radial < 2 {
        return Err(EitError::invalid(format!(
            "n_radial must be at least 2, got {n_radial}"
        )));
    }
    if n_angular < 8 {
        return Err(EitError::invalid(format!(
            "n_angular must be at least 8, got {n_angular}"
        )));
    }
    let dr = 1.0 / n_radial as f64;
    let dtheta = 2.0 * PI / n_angular as f64;

    let node_count = 1 + n_radial * n_angular;
    let mut positions = Vec::with_capacity(node_count);
    let mut polar = Vec::with_capacity(node_count);
    positions.push((0.0, 0.0));
    polar.push((0.0, 0.0));
    for i in 1..=n_radial {
        let r = i as f64 * dr;
        for j in 0..n_angular {
            let theta = j as f64 * dtheta;
            positions.push((r * theta.cos(), r * theta.sin()));
            polar.push((r, theta));
        }
    }

    let grid_tmp = DiskGrid {
        n_radial,
        n_angular,
        positions,
        polar,
        edges: Vec::new(),
        cell_areas: Vec::new(),
    };

    let mut edges = Vec::new();
    // center spokes: primary length dr, dual arc at r = dr/2
    for j in 0..n_angular {
        edges.push(GridEdge {
            a: DiskGrid::CENTER,
            b: grid_tmp.node_index(1, j),
            kind: GridEdgeKind::Radial,
            geom: (0.5 * dr * dtheta) / dr,
        });
    }
    // radial edges between consecutive rings
    for i in 1..n_radial {
        let r_mid = (i as f64 + 0.5) * dr;
        for j in 0..n_angular {
            edges.push(GridEdge {
                a: grid_tmp.node_index(i, j),
                b: grid_tmp.node_index(i + 1, j),
                kind: GridEdgeKind::Radial,
                geom: (r_mid * dtheta) / dr,
            });
        }
    }
    // angular edges within each ring; the boundary ring has a half dual cell
    for i in 1..=n_radial {
        let r = i as f64 * dr;
        let dual_len = if i == n_radial { 0.5 * dr } else { dr };
        for j in 0..n_angular {
            edges.push(GridEdge {
                a: grid_tmp.node_index(i, j),
                b: grid_tmp.node_index(i, (j + 1) % n_angular),
                kind: GridEdgeKind::Angular,
                geom: dual_len / (r * dtheta),
            });
        }
    }

    let mut cell_areas = vec![0.0; node_count];
    cell_areas[DiskGrid::CENTER] = PI * (0.5 * dr).powi(2);
    for i in 1..=n_radial {
        let r = i as f64 * dr;
        let area = if i == n_radial {
            (1.0 - 0.25 * dr) * 0.5 * dr * dtheta
        } else {
            r * dr * dtheta
        };
        for j in 0..n_angular {
            cell_areas[grid_tmp.node_index(i, j)] = area;
        }
    }

    Ok(Arc::new(DiskGrid {
        edges,
        cell_areas,
        ..grid_tmp
    }))
}

/// Conductivity or potential values on the primary nodes of a grid.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<DiskGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<DiskGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(EitError::DimensionMismatch(format!(
                "field has {} values for a grid with {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<DiskGrid>, value: f64) -> Self {
        let n = grid.node_count();
        Self {
            grid,
            values: vec![value; n],
        }
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: Arc<DiskGrid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.node_count())
            .map(|i| {
                let (x, y) = grid.position(i);
                f(x, y)
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<DiskGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_positive(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0 && v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// L2 norm over the disk using the dual-cell quadrature.
    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.cell_areas())
            .map(|(v, a)| v * v * a)
            .sum::<f64>()
            .sqrt()
    }

    /// Bilinear interpolation in `(r, theta)` between grid nodes.
    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        let grid = &self.grid;
        let r = (x * x + y * y).sqrt().min(1.0);
        let theta = y.atan2(x).rem_euclid(2.0 * PI);
        let dtheta = grid.dtheta();
        let jf = theta / dtheta;
        let j0 = (jf.floor() as usize) % grid.n_angular();
        let j1 = (j0 + 1) % grid.n_angular();
        let t = jf - jf.floor();

        let dr = grid.dr();
        let ring_f = r / dr;
        if ring_f <= 1.0 {
            // between center and first ring: linear in r toward the
            // angularly interpolated first-ring value
            let v1 = {
                let a = self.values[grid.node_index(1, j0)];
                let b = self.values[grid.node_index(1, j1)];
                a * (1.0 - t) + b * t
            };
            let v0 = self.values[DiskGrid::CENTER];
            v0 * (1.0 - ring_f) + v1 * ring_f
        } else {
            let i0 = (ring_f.floor() as usize).min(grid.n_radial() - 1).max(1);
            let i1 = i0 + 1;
            let s = (ring_f - i0 as f64).clamp(0.0, 1.0);
            let v00 = self.values[grid.node_index(i0, j0)];
            let v01 = self.values[grid.node_index(i0, j1)];
            let v10 = self.values[grid.node_index(i1, j0)];
            let v11 = self.values[grid.node_index(i1, j1)];
            (v00 * (1.0 - t) + v01 * t) * (1.0 - s) + (v10 * (1.0 - t) + v11 * t) * s
        }
    }
}
