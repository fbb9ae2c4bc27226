//! Second-order finite-volume solver for `div(sigma grad u) = 0` on the disk
//! and the continuum Dirichlet-to-Neumann map restricted to the boundary
//! nodes.
//!
//! The DtN matrix follows the lumped-current convention: entry `(i, j)` is
//! the net current injected at boundary node `i` when the boundary potential
//! is the `j`-th unit nodal basis vector, so `v^T L w` approximates the
//! boundary integral of `v` against the flux response to `w`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{EitError, Result};
use crate::grid::{DiskGrid, ScalarField};
use crate::linalg::BandedCholesky;

/// Continuum DtN map lumped at the `N` boundary nodes.
#[derive(Debug, Clone)]
pub struct DtnMatrix(pub DMatrix<f64>);

impl DtnMatrix {
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Largest row-sum magnitude relative to the matrix norm.
    pub fn row_sum_defect(&self) -> f64 {
        let norm = self.0.norm();
        let mut worst: f64 = 0.0;
        for i in 0..self.0.nrows() {
            worst = worst.max(self.0.row(i).sum().abs());
        }
        worst / norm
    }

    pub fn asymmetry(&self) -> f64 {
        (&self.0 - self.0.transpose()).norm() / self.0.norm()
    }
}

/// Edge conductances for a conductivity field: sigma at the edge midpoint
/// times the geometric factor.
pub fn edge_conductances(grid: &DiskGrid, sigma: &ScalarField) -> Vec<f64> {
    let v = sigma.values();
    grid.edges()
        .iter()
        .map(|e| 0.5 * (v[e.a] + v[e.b]) * e.geom)
        .collect()
}

/// Factorized finite-volume system for one conductivity field.
///
/// Assembling the interior block once lets the DtN map, sensitivity solves
/// and Dirichlet solves share a single banded Cholesky factorization.
pub struct FineSolver {
    grid: Arc<DiskGrid>,
    conductances: Vec<f64>,
    chol: BandedCholesky,
}

impl FineSolver {
    pub fn new(grid: Arc<DiskGrid>, sigma: &ScalarField) -> Result<Self> {
        if !sigma.is_positive() {
            return Err(EitError::invalid(
                "conductivity must be strictly positive and finite",
            ));
        }
        if !Arc::ptr_eq(sigma.grid(), &grid) && sigma.values().len() != grid.node_count() {
            return Err(EitError::DimensionMismatch(
                "conductivity field does not match the grid".into(),
            ));
        }
        let conductances = edge_conductances(&grid, sigma);

        let n_int = grid.interior_count();
        let bw = grid.n_angular();
        let stride = bw + 1;
        let mut band = vec![0.0; n_int * stride];
        let mut add = |i: usize, j: usize, v: f64| {
            // lower band entry (i >= j)
            debug_assert!(i >= j && i - j <= bw);
            band[i * stride + (j + bw - i)] += v;
        };
        for (e, &g) in grid.edges().iter().zip(&conductances) {
            let (a, b) = (e.a, e.b);
            match (grid.is_boundary(a), grid.is_boundary(b)) {
                (false, false) => {
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    add(a, a, g);
                    add(b, b, g);
                    add(hi, lo, -g);
                }
                (false, true) => add(a, a, g),
                (true, false) => add(b, b, g),
                (true, true) => {}
            }
        }
        let chol = BandedCholesky::new(n_int, bw, &band).map_err(|e| {
            EitError::SolveFailure(format!(
                "interior finite-volume block is not positive definite: {e}"
            ))
        })?;
        Ok(Self {
            grid,
            conductances,
            chol,
        })
    }

    pub fn grid(&self) -> &Arc<DiskGrid> {
        &self.grid
    }

    pub fn conductances(&self) -> &[f64] {
        &self.conductances
    }

    /// Solves the Dirichlet problem and returns the full nodal potential.
    pub fn solve_boundary(&self, boundary: &[f64]) -> Result<Vec<f64>> {
        let grid = &self.grid;
        let nb = grid.n_angular();
        if boundary.len() != nb {
            return Err(EitError::DimensionMismatch(format!(
                "boundary data has {} entries, expected {nb}",
                boundary.len()
            )));
        }
        let n_int = grid.interior_count();
        let mut rhs = vec![0.0; n_int];
        for (e, &g) in grid.edges().iter().zip(&self.conductances) {
            match (grid.is_boundary(e.a), grid.is_boundary(e.b)) {
                (false, true) => rhs[e.a] += g * boundary[e.b - n_int],
                (true, false) => rhs[e.b] += g * boundary[e.a - n_int],
                _ => {}
            }
        }
        self.chol.solve_in_place(&mut rhs);
        rhs.extend_from_slice(boundary);
        Ok(rhs)
    }

    /// Net current injected at each boundary node for a full potential vector.
    pub fn boundary_flux(&self, potential: &[f64]) -> Vec<f64> {
        let grid = &self.grid;
        let n_int = grid.interior_count();
        let mut flux = vec![0.0; grid.n_angular()];
        for (e, &g) in grid.edges().iter().zip(&self.conductances) {
            if grid.is_boundary(e.a) {
                flux[e.a - n_int] += g * (potential[e.a] - potential[e.b]);
            }
            if grid.is_boundary(e.b) {
                flux[e.b - n_int] += g * (potential[e.b] - potential[e.a]);
            }
        }
        flux
    }

    /// Assembles the DtN matrix column by column (Schur complement of the
    /// interior block). Columns solve concurrently.
    pub fn dtn(&self) -> Result<DtnMatrix> {
        let nb = self.grid.n_angular();
        let columns: Vec<Vec<f64>> = (0..nb)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![0.0; nb];
                e[j] = 1.0;
                let u = self.solve_boundary(&e)?;
                Ok(self.boundary_flux(&u))
            })
            .collect::<Result<_>>()?;
        let mut m = DMatrix::zeros(nb, nb);
        for (j, col) in columns.iter().enumerate() {
            for i in 0..nb {
                m[(i, j)] = col[i];
            }
        }
        Ok(DtnMatrix(m))
    }
}

/// Solves the Dirichlet problem for one boundary datum.
pub fn solve_dirichlet(
    grid: &Arc<DiskGrid>,
    sigma: &ScalarField,
    boundary: &[f64],
) -> Result<ScalarField> {
    let solver = FineSolver::new(grid.clone(), sigma)?;
    let u = solver.solve_boundary(boundary)?;
    ScalarField::new(grid.clone(), u)
}

/// Continuum DtN map of `sigma` lumped at the boundary nodes.
pub fn continuum_dtn(grid: &Arc<DiskGrid>, sigma: &ScalarField) -> Result<DtnMatrix> {
    FineSolver::new(grid.clone(), sigma)?.dtn()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use nalgebra::DVector;

    fn harmonic_boundary(grid: &DiskGrid, k: usize) -> Vec<f64> {
        (0..grid.n_angular())
            .map(|j| (k as f64 * grid.boundary_angle(j)).cos())
            .collect()
    }

    #[test]
    fn constant_boundary_data_gives_constant_potential() {
        let grid = build_grid(12, 24).unwrap();
        let sigma = ScalarField::from_fn(grid.clone(), |x, y| 1.0 + x * x + 0.5 * y * y);
        let u = solve_dirichlet(&grid, &sigma, &vec![1.0; 24]).unwrap();
        for &v in u.values() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn harmonic_cosine_matches_analytic_solution() {
        // u(r, theta) = r cos(theta) solves the sigma = 1 problem
        let grid = build_grid(50, 100).unwrap();
        let sigma = ScalarField::constant(grid.clone(), 1.0);
        let u = solve_dirichlet(&grid, &sigma, &harmonic_boundary(&grid, 1)).unwrap();
        let idx = grid.node_index(25, 0); // node at (0.5, 0)
        assert!((u.values()[idx] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn matches_dense_factorization_oracle() {
        // independent dense LU of the same linear system
        let grid = build_grid(8, 16).unwrap();
        let sigma = ScalarField::from_fn(grid.clone(), |x, y| 1.0 + x * x + y * y);
        let boundary: Vec<f64> = (0..16)
            .map(|j| (3.0 * grid.boundary_angle(j)).cos())
            .collect();

        let solver = FineSolver::new(grid.clone(), &sigma).unwrap();
        let u = solver.solve_boundary(&boundary).unwrap();

        let n_int = grid.interior_count();
        let mut a = DMatrix::<f64>::zeros(n_int, n_int);
        let mut rhs = DVector::<f64>::zeros(n_int);
        for (e, &g) in grid.edges().iter().zip(solver.conductances()) {
            match (grid.is_boundary(e.a), grid.is_boundary(e.b)) {
                (false, false) => {
                    a[(e.a, e.a)] += g;
                    a[(e.b, e.b)] += g;
                    a[(e.a, e.b)] -= g;
                    a[(e.b, e.a)] -= g;
                }
                (false, true) => {
                    a[(e.a, e.a)] += g;
                    rhs[e.a] += g * boundary[e.b - n_int];
                }
                (true, false) => {
                    a[(e.b, e.b)] += g;
                    rhs[e.b] += g * boundary[e.a - n_int];
                }
                (true, true) => {}
            }
        }
        let dense = a.lu().solve(&rhs).unwrap();
        for i in 0..n_int {
            assert!(
                (dense[i] - u[i]).abs() < 1e-12,
                "interior node {i}: {} vs {}",
                dense[i],
                u[i]
            );
        }
    }

    #[test]
    fn dtn_is_symmetric_and_conservative() {
        let grid = build_grid(20, 40).unwrap();
        let sigma = ScalarField::from_fn(grid.clone(), |x, y| 1.5 + x + 0.3 * y);
        let dtn = continuum_dtn(&grid, &sigma).unwrap();
        assert!(dtn.asymmetry() < 1e-10);
        assert!(dtn.row_sum_defect() < 1e-10);
    }

    #[test]
    fn dtn_scales_linearly_with_sigma() {
        let grid = build_grid(10, 20).unwrap();
        let sigma = ScalarField::from_fn(grid.clone(), |x, y| 1.0 + 0.5 * (x + y).cos());
        let scaled = ScalarField::new(
            grid.clone(),
            sigma.values().iter().map(|v| 2.0 * v).collect(),
        )
        .unwrap();
        let d1 = continuum_dtn(&grid, &sigma).unwrap();
        let d2 = continuum_dtn(&grid, &scaled).unwrap();
        let diff = (&d2.0 - &d1.0 * 2.0).norm() / d2.0.norm();
        assert!(diff < 1e-13);
    }

    #[test]
    fn unit_disk_dtn_spectrum_converges_to_fourier_symbol() {
        // DtN of sigma = 1 acts on cos(k theta) with eigenvalue |k|, lumped by
        // the quadrature weight; the error should drop by ~4x per refinement.
        let mut errors = Vec::new();
        for (nr, na) in [(15, 30), (30, 60), (60, 120)] {
            let grid = build_grid(nr, na).unwrap();
            let sigma = ScalarField::constant(grid.clone(), 1.0);
            let dtn = continuum_dtn(&grid, &sigma).unwrap();
            let w = grid.boundary_weight();
            let mut worst: f64 = 0.0;
            for k in 1..=5usize {
                let v = DVector::from_iterator(
                    na,
                    (0..na).map(|j| (k as f64 * grid.boundary_angle(j)).cos()),
                );
                let rayleigh = (v.transpose() * &dtn.0 * &v)[(0, 0)] / (v.norm_squared() * w);
                worst = worst.max((rayleigh - k as f64).abs());
            }
            errors.push(worst);
        }
        assert!(errors[2] < 2e-2, "finest error too large: {:?}", errors);
        assert!(
            errors[0] / errors[1] > 3.5 && errors[1] / errors[2] > 3.5,
            "second-order convergence expected, got {:?}",
            errors
        );
    }
}
