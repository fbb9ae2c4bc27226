//! Resistor-network inversion for two-dimensional electrical impedance
//! tomography on the unit disk, with the statistical machinery (MAP
//! estimators, Monte Carlo statistics, Fisher information, Cramer-Rao
//! bounds, L-curves) used to study how conductivity parametrizations react
//! to measurement noise.

pub mod error;
pub mod grid;
pub mod linalg;
pub mod measure;
pub mod noise;
pub mod solver;

pub use error::{EitError, Result};
pub use grid::{build_grid, DiskGrid, ScalarField};
pub use measure::{
    build_electrodes, forward_map, measure, pair_count, pair_index, unvec_upper, vec_upper,
    AccessGeometry, DataVector, ElectrodeSet, MeasuredDtn,
};
pub use noise::{
    derive_seed, fine_reference, noisy_data, sobolev_norm, FineReference, NoiseCovariance,
    NoiseGenerator, NoiseModel, NoiseSpec, SobolevNorm,
};
pub use solver::{continuum_dtn, solve_dirichlet, DtnMatrix, FineSolver};

pub mod network;
pub use network::{
    build_topology, discrete_forward, fit_conductances, fit_conductances_with,
    jacobian_discrete_forward, layer_peel_circular, network_dtn, FitOptions, FitResult,
    NetworkDtn, NetworkGraph, TopologyKind,
};
