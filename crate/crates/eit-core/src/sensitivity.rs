//! Sensitivity of measurements and network conductances to the conductivity.
//!
//! The derivative of the lumped measurement `<chi_i, L_sigma chi_j>` with
//! respect to the nodal conductivity value at `x` is assembled exactly from
//! the discrete energy form: each edge contributes the product of the
//! potential drops of the two electrode solutions, weighted by the edge's
//! geometric factor and the interpolation rule that takes nodal sigma to
//! edge midpoints.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{EitError, Result};
use crate::grid::{DiskGrid, ScalarField};
use crate::linalg::condition_number;
use crate::measure::{pair_count, pairs, ElectrodeSet};
use crate::network::{jacobian_discrete_forward, NetworkGraph};
use crate::solver::FineSolver;

/// Jacobian of the forward map with respect to the nodal conductivity:
/// `g x N_fine`, row order matching the data vector pairs.
pub fn dsigma_forward(
    sigma: &ScalarField,
    electrodes: &ElectrodeSet,
    grid: &Arc<DiskGrid>,
) -> Result<DMatrix<f64>> {
    let solver = FineSolver::new(grid.clone(), sigma)?;
    dsigma_forward_with(&solver, electrodes)
}

/// Same as [`dsigma_forward`] but reusing an existing factorization.
pub fn dsigma_forward_with(
    solver: &FineSolver,
    electrodes: &ElectrodeSet,
) -> Result<DMatrix<f64>> {
    let grid = solver.grid();
    let n = electrodes.n();
    let nb = grid.n_angular();
    if electrodes.n_angular() != nb {
        return Err(EitError::DimensionMismatch(
            "electrodes do not match the grid".into(),
        ));
    }

    // harmonic extension of each electrode function
    let mut potentials = Vec::with_capacity(n);
    for prof in electrodes.profiles() {
        let mut boundary = vec![0.0; nb];
        for &(j, v) in prof {
            boundary[j] = v;
        }
        potentials.push(solver.solve_boundary(&boundary)?);
    }

    let g = pair_count(n);
    let mut jac = DMatrix::zeros(g, grid.node_count());
    let mut drops = vec![0.0; n];
    for edge in grid.edges() {
        for (i, u) in potentials.iter().enumerate() {
            drops[i] = u[edge.a] - u[edge.b];
        }
        // gamma_e = geom * (sigma_a + sigma_b) / 2
        let half_geom = 0.5 * edge.geom;
        for (k, (i, j)) in pairs(n).enumerate() {
            let v = half_geom * drops[i] * drops[j];
            jac[(k, edge.a)] += v;
            jac[(k, edge.b)] += v;
        }
    }
    Ok(jac)
}

/// Sensitivity of the recovered conductances to nodal conductivity values:
/// applies the inverse of the discrete forward Jacobian at `gamma` to the
/// measurement sensitivity.
pub fn dsigma_gamma(
    sigma: &ScalarField,
    electrodes: &ElectrodeSet,
    grid: &Arc<DiskGrid>,
    graph: &NetworkGraph,
    gamma: &[f64],
) -> Result<DMatrix<f64>> {
    let dsf = dsigma_forward(sigma, electrodes, grid)?;
    dsigma_gamma_from(&dsf, graph, gamma)
}

/// Same as [`dsigma_gamma`] given a precomputed measurement sensitivity.
pub fn dsigma_gamma_from(
    dsf: &DMatrix<f64>,
    graph: &NetworkGraph,
    gamma: &[f64],
) -> Result<DMatrix<f64>> {
    let dfg = jacobian_discrete_forward(gamma, graph)?;
    let cond = condition_number(&dfg);
    if !cond.is_finite() || cond > 1e13 {
        return Err(EitError::SolveFailure(format!(
            "discrete forward Jacobian is near-singular (condition {cond:.3e})"
        )));
    }
    dfg.lu()
        .solve(dsf)
        .ok_or_else(|| EitError::SolveFailure("discrete forward Jacobian solve failed".into()))
}
