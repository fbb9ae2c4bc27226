//! Optimal reconstruction grids from conductance sensitivity maxima, and the
//! reference conductances of the unit conductivity.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{EitError, Result};
use crate::grid::{DiskGrid, ScalarField};
use crate::interp::PlInterpolator;
use crate::measure::{forward_map, DataVector, ElectrodeSet};
use crate::network::{
    discrete_forward, fit_conductances_with, layer_peel_circular, FitOptions, NetworkGraph,
    TopologyKind,
};
use crate::noise::NoiseCovariance;
use crate::sensitivity::{dsigma_forward, dsigma_gamma_from};

/// How to invert the discrete forward map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Recovery {
    /// Layer peeling (circular networks, small noise).
    Peel,
    /// Regularized Gauss-Newton fit with the given Tikhonov weight.
    Fit { alpha: f64 },
    /// Layer peeling with automatic fallback to the fit when peeling
    /// rejects the data.
    PeelThenFit { alpha: f64 },
}

/// Recovers network conductances from a data vector.
///
/// `kappa_ref` seeds and regularizes the fit (log conductances); pass the
/// reference-network logs when available, zeros otherwise. `cov` weights
/// the fit misfit. `noiseless` switches the fit to the tight stopping rule
/// used for consistent data.
pub fn recover_conductances(
    d: &DataVector,
    graph: &NetworkGraph,
    recovery: Recovery,
    kappa_ref: &nalgebra::DVector<f64>,
    cov: Option<&NoiseCovariance>,
    noiseless: bool,
) -> Result<Vec<f64>> {
    let fit = |alpha: f64| -> Result<Vec<f64>> {
        let unit;
        let cov = match cov {
            Some(c) => c,
            None => {
                unit = NoiseCovariance(nalgebra::DVector::from_element(
                    graph.edge_count(),
                    crate::noise::COVARIANCE_FLOOR,
                ));
                &unit
            }
        };
        let mut opts = if noiseless {
            FitOptions::noiseless(kappa_ref.clone())
        } else {
            FitOptions::new(alpha, kappa_ref.clone())
        };
        opts.alpha = alpha;
        let result = fit_conductances_with(d, cov, graph, &opts)?;
        Ok(result.gamma)
    };
    match recovery {
        Recovery::Peel => layer_peel_circular(d, graph),
        Recovery::Fit { alpha } => fit(alpha),
        Recovery::PeelThenFit { alpha } => match layer_peel_circular(d, graph) {
            Ok(g) => Ok(g),
            Err(EitError::InconsistentData(_)) => fit(alpha),
            Err(e) => Err(e),
        },
    }
}

/// Optimal grid: one point and one reference conductance per network edge,
/// plus the Delaunay triangulation used for piecewise-linear interpolation.
pub struct OptimalGrid {
    /// Point positions, in edge order.
    pub points: Vec<(f64, f64)>,
    /// Fine-grid node index of each sensitivity maximum.
    pub point_nodes: Vec<usize>,
    /// Reference conductances solving `F_net(gamma1) = F(1)`.
    pub gamma1: Vec<f64>,
    /// Triangulation of the points.
    pub interp: PlInterpolator,
}

/// Recovers the reference conductances of the unit conductivity.
pub fn reference_conductances(
    f1: &DataVector,
    graph: &NetworkGraph,
) -> Result<Vec<f64>> {
    let zeros = nalgebra::DVector::zeros(graph.edge_count());
    let recovery = if graph.kind() == TopologyKind::Circular {
        Recovery::PeelThenFit { alpha: 0.0 }
    } else {
        Recovery::Fit { alpha: 0.0 }
    };
    let gamma1 = recover_conductances(f1, graph, recovery, &zeros, None, true)?;
    let f_check = discrete_forward(&gamma1, graph)?;
    let rel = (&f_check.data - &f1.data).norm() / f1.data.norm();
    if rel > 1e-6 {
        return Err(EitError::RecoveryFailure(format!(
            "reference conductances misfit the unit-conductivity data by {rel:.3e}"
        )));
    }
    Ok(gamma1)
}

/// Builds the optimal grid for a measurement setup: sensitivity maxima of
/// each conductance at unit conductivity, the reference conductances, and
/// their triangulation.
///
/// Maxima are taken over the sensitivity density (nodal derivative divided
/// by the dual-cell area), with ties broken toward smaller radius, then
/// smaller angle.
pub fn optimal_grid(
    electrodes: &ElectrodeSet,
    grid: &Arc<DiskGrid>,
    graph: &NetworkGraph,
) -> Result<OptimalGrid> {
    let sigma1 = ScalarField::constant(grid.clone(), 1.0);
    let f1 = forward_map(&sigma1, electrodes, grid)?;
    let dsf = dsigma_forward(&sigma1, electrodes, grid)?;
    optimal_grid_from(electrodes, grid, graph, &f1, &dsf)
}

/// Same as [`optimal_grid`] with precomputed unit-conductivity data.
pub fn optimal_grid_from(
    _electrodes: &ElectrodeSet,
    grid: &Arc<DiskGrid>,
    graph: &NetworkGraph,
    f1: &DataVector,
    dsf1: &DMatrix<f64>,
) -> Result<OptimalGrid> {
    let gamma1 = reference_conductances(f1, graph)?;
    let sens = dsigma_gamma_from(dsf1, graph, &gamma1)?;

    let areas = grid.cell_areas();
    let g = graph.edge_count();
    let mut points = Vec::with_capacity(g);
    let mut point_nodes = Vec::with_capacity(g);
    for k in 0..g {
        let mut best = 0usize;
        let mut best_val = f64::NEG_INFINITY;
        for idx in 0..grid.node_count() {
            let val = sens[(k, idx)] / areas[idx];
            let better = val > best_val
                || (val == best_val && {
                    let (r, t) = grid.polar(idx);
                    let (rb, tb) = grid.polar(best);
                    r < rb || (r == rb && t < tb)
                });
            if better {
                best = idx;
                best_val = val;
            }
        }
        point_nodes.push(best);
        points.push(grid.position(best));
    }

    let interp = PlInterpolator::new(&points).map_err(|e| {
        EitError::RecoveryFailure(format!("optimal grid triangulation failed: {e}"))
    })?;
    Ok(OptimalGrid {
        points,
        point_nodes,
        gamma1,
        interp,
    })
}
