//! Critical circular-planar resistor networks and their discrete forward map.
//!
//! All supported topologies have `g = n(n-1)/2` edges for `n` boundary
//! nodes, which makes the conductance-to-DtN map one-to-one on positive
//! conductance vectors.
//!
//! Edge ordering: circular networks list layers from the boundary inward
//! (spike layer, ring layer, alternating), each layer ordered by angular
//! index; the deepest layer of an odd-layer network is a star into the
//! center node. Pyramidal and two-sided networks list edges in their
//! crossing-schedule order (see `wiring`).

mod fit;
mod peel;
mod wiring;

pub use fit::{fit_conductances, fit_conductances_with, FitOptions, FitResult};
pub use peel::layer_peel_circular;

use nalgebra::DMatrix;

use crate::error::{EitError, Result};
use crate::measure::{pair_count, pairs, vec_upper, DataVector, MeasuredDtn};

/// Supported network families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    /// `C(l, n)` with `n` odd and `l = (n-1)/2` layers; full-boundary setup.
    Circular,
    /// Pyramidal graph for one-sided partial measurements.
    Pyramidal,
    /// Two-sided graph (`n = 2m`) for two disjoint accessible arcs.
    TwoSided,
}

/// What a circular layer contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// `n` radial edges from the current boundary level inward.
    Spike,
    /// `n` transversal edges forming a cycle on the current level.
    Ring,
}

/// Resistor network graph with boundary nodes `0..n` in circular order.
#[derive(Debug, Clone)]
pub struct NetworkGraph {
    kind: TopologyKind,
    n: usize,
    node_count: usize,
    edges: Vec<(usize, usize)>,
    /// Layer kinds outside-in; only populated for circular networks.
    layers: Vec<LayerKind>,
}

impl NetworkGraph {
    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    /// Boundary node count.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn interior_count(&self) -> usize {
        self.node_count - self.n
    }

    /// Edges in the documented serialization order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn layers(&self) -> &[LayerKind] {
        &self.layers
    }

    fn validate_gamma(&self, gamma: &[f64]) -> Result<()> {
        if gamma.len() != self.edge_count() {
            return Err(EitError::DimensionMismatch(format!(
                "{} conductances for {} edges",
                gamma.len(),
                self.edge_count()
            )));
        }
        if gamma.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(EitError::invalid("conductances must be strictly positive"));
        }
        Ok(())
    }
}

/// Builds one of the critical topologies.
pub fn build_topology(kind: TopologyKind, n: usize) -> Result<NetworkGraph> {
    if n < 3 {
        return Err(EitError::invalid("need at least three boundary nodes"));
    }
    match kind {
        TopologyKind::Circular => {
            if n % 2 == 0 {
                return Err(EitError::invalid(format!(
                    "circular networks need an odd boundary count, got {n}"
                )));
            }
            Ok(circular(n))
        }
        TopologyKind::Pyramidal => Ok(wiring::pyramidal(n)),
        TopologyKind::TwoSided => {
            if n % 2 != 0 {
                return Err(EitError::invalid(format!(
                    "two-sided networks need an even boundary count, got {n}"
                )));
            }
            Ok(wiring::two_sided(n))
        }
    }
}

/// Circular network `C((n-1)/2, n)`: alternating spike and ring layers,
/// ending in a star into the center node when the layer count is odd.
fn circular(n: usize) -> NetworkGraph {
    let l = (n - 1) / 2;
    let rings = l / 2;
    let has_center = l % 2 == 1;
    let node_count = n + rings * n + usize::from(has_center);
    let center = node_count - 1;
    // level 0 = boundary, level t = interior ring t
    let level = |t: usize, j: usize| -> usize {
        if t == 0 {
            j % n
        } else {
            n + (t - 1) * n + (j % n)
        }
    };

    let mut edges = Vec::with_capacity(pair_count(n));
    let mut layers = Vec::with_capacity(l);
    for k in 1..=l {
        if k % 2 == 1 {
            let t = (k - 1) / 2;
            let inward_is_center = has_center && k == l;
            for j in 0..n {
                let inner = if inward_is_center { center } else { level(t + 1, j) };
                edges.push((level(t, j), inner));
            }
            layers.push(LayerKind::Spike);
        } else {
            let t = k / 2;
            for j in 0..n {
                edges.push((level(t, j), level(t, j + 1)));
            }
            layers.push(LayerKind::Ring);
        }
    }
    NetworkGraph {
        kind: TopologyKind::Circular,
        n,
        node_count,
        edges,
        layers,
    }
}

/// DtN matrix of a resistor network.
#[derive(Debug, Clone)]
pub struct NetworkDtn(pub DMatrix<f64>);

/// Weighted graph Laplacian of the network.
fn laplacian(graph: &NetworkGraph, gamma: &[f64]) -> DMatrix<f64> {
    let v = graph.node_count();
    let mut l = DMatrix::zeros(v, v);
    for (&(a, b), &g) in graph.edges().iter().zip(gamma) {
        l[(a, a)] += g;
        l[(b, b)] += g;
        l[(a, b)] -= g;
        l[(b, a)] -= g;
    }
    l
}

/// DtN map of the network: Schur complement of the interior nodes in the
/// weighted graph Laplacian.
pub fn network_dtn(graph: &NetworkGraph, gamma: &[f64]) -> Result<NetworkDtn> {
    graph.validate_gamma(gamma)?;
    let n = graph.n();
    let l = laplacian(graph, gamma);
    let ni = graph.interior_count();
    if ni == 0 {
        return Ok(NetworkDtn(l));
    }
    let lbb = l.view((0, 0), (n, n)).into_owned();
    let lbi = l.view((0, n), (n, ni)).into_owned();
    let lii = l.view((n, n), (ni, ni)).into_owned();
    let chol = nalgebra::Cholesky::new(lii).ok_or_else(|| {
        EitError::SolveFailure("singular interior block in network Laplacian".into())
    })?;
    let x = chol.solve(&lbi.transpose());
    Ok(NetworkDtn(lbb - lbi * x))
}

/// Full nodal potentials for each boundary unit basis vector.
///
/// Column `i` is the potential with `u = e_i` on the boundary; rows are in
/// node order.
pub fn boundary_basis_potentials(graph: &NetworkGraph, gamma: &[f64]) -> Result<DMatrix<f64>> {
    graph.validate_gamma(gamma)?;
    let n = graph.n();
    let v = graph.node_count();
    let ni = graph.interior_count();
    let l = laplacian(graph, gamma);
    let mut u = DMatrix::zeros(v, n);
    for i in 0..n {
        u[(i, i)] = 1.0;
    }
    if ni > 0 {
        let lbi = l.view((0, n), (n, ni)).into_owned();
        let lii = l.view((n, n), (ni, ni)).into_owned();
        let chol = nalgebra::Cholesky::new(lii).ok_or_else(|| {
            EitError::SolveFailure("singular interior block in network Laplacian".into())
        })?;
        // interior response to each boundary basis vector
        let ui = -chol.solve(&lbi.transpose());
        u.view_mut((n, 0), (ni, n)).copy_from(&ui);
    }
    Ok(u)
}

/// Discrete forward map: strict upper triangle of the network DtN.
pub fn discrete_forward(gamma: &[f64], graph: &NetworkGraph) -> Result<DataVector> {
    let dtn = network_dtn(graph, gamma)?;
    Ok(vec_upper(&MeasuredDtn(dtn.0)))
}

/// Analytic Jacobian of the discrete forward map with respect to the
/// conductances: column `e` holds the derivative of every upper-triangle
/// entry with respect to `gamma_e`.
pub fn jacobian_discrete_forward(gamma: &[f64], graph: &NetworkGraph) -> Result<DMatrix<f64>> {
    let u = boundary_basis_potentials(graph, gamma)?;
    let n = graph.n();
    let g = graph.edge_count();
    let mut jac = DMatrix::zeros(pair_count(n), g);
    for (e, &(a, b)) in graph.edges().iter().enumerate() {
        for (k, (i, j)) in pairs(n).enumerate() {
            let di = u[(a, i)] - u[(b, i)];
            let dj = u[(a, j)] - u[(b, j)];
            jac[(k, e)] = di * dj;
        }
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::pair_index;

    #[test]
    fn circular_sizes() {
        let g11 = build_topology(TopologyKind::Circular, 11).unwrap();
        assert_eq!(g11.edge_count(), 55);
        assert_eq!(g11.layers().len(), 5);
        assert_eq!(g11.node_count(), 11 + 22 + 1);

        let g29 = build_topology(TopologyKind::Circular, 29).unwrap();
        assert_eq!(g29.edge_count(), 406);
        assert_eq!(g29.layers().len(), 14);
    }

    #[test]
    fn parity_is_enforced() {
        assert!(build_topology(TopologyKind::Circular, 10).is_err());
        assert!(build_topology(TopologyKind::TwoSided, 9).is_err());
    }

    #[test]
    fn two_sided_sizes() {
        let t = build_topology(TopologyKind::TwoSided, 16).unwrap();
        assert_eq!(t.edge_count(), 120);
        assert_eq!(t.n(), 16);
    }

    #[test]
    fn pyramidal_sizes() {
        let p = build_topology(TopologyKind::Pyramidal, 16).unwrap();
        assert_eq!(p.edge_count(), 120);
    }

    #[test]
    fn star_dtn_closed_form() {
        // three-boundary star with unit conductances
        let g = build_topology(TopologyKind::Circular, 3).unwrap();
        assert_eq!(g.edge_count(), 3);
        let dtn = network_dtn(&g, &[1.0, 1.0, 1.0]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 2.0 / 3.0 } else { -1.0 / 3.0 };
                assert!((dtn.0[(i, j)] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dtn_scales_with_conductance() {
        let g = build_topology(TopologyKind::Circular, 5).unwrap();
        let gamma: Vec<f64> = (0..10).map(|i| 0.5 + 0.1 * i as f64).collect();
        let scaled: Vec<f64> = gamma.iter().map(|v| 3.0 * v).collect();
        let a = network_dtn(&g, &gamma).unwrap();
        let b = network_dtn(&g, &scaled).unwrap();
        assert!(((&b.0 - &a.0 * 3.0).norm()) < 1e-12 * b.0.norm());
    }

    #[test]
    fn dtn_matches_dense_elimination_oracle() {
        // eliminate interior nodes one at a time by pivoting on the full
        // Laplacian, then compare against the Cholesky-based Schur route
        let g = build_topology(TopologyKind::Circular, 5).unwrap();
        let gamma: Vec<f64> = (0..10).map(|i| 0.7 + ((i * 13) % 7) as f64 * 0.2).collect();
        let dtn = network_dtn(&g, &gamma).unwrap();

        let mut l = laplacian(&g, &gamma);
        for pivot in (g.n()..g.node_count()).rev() {
            let p = l[(pivot, pivot)];
            for i in 0..pivot {
                for j in 0..pivot {
                    let v = l[(i, pivot)] * l[(pivot, j)] / p;
                    l[(i, j)] -= v;
                }
            }
            l = l.view((0, 0), (pivot, pivot)).into_owned();
        }
        assert!((&l - &dtn.0).norm() < 1e-12 * dtn.0.norm());
    }

    #[test]
    fn network_dtn_has_network_signs() {
        let g = build_topology(TopologyKind::Circular, 7).unwrap();
        let gamma = vec![1.3; g.edge_count()];
        let dtn = network_dtn(&g, &gamma).unwrap();
        for i in 0..7 {
            assert!(dtn.0.row(i).sum().abs() < 1e-12);
            for j in 0..7 {
                if i != j {
                    assert!(dtn.0[(i, j)] <= 0.0);
                }
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences_on_star() {
        let g = build_topology(TopologyKind::Circular, 3).unwrap();
        let gamma = [1.0, 2.0, 0.5];
        let jac = jacobian_discrete_forward(&gamma, &g).unwrap();
        let eps = 1e-6;
        for e in 0..3 {
            let mut gp = gamma;
            gp[e] += eps;
            let mut gm = gamma;
            gm[e] -= eps;
            let fp = discrete_forward(&gp, &g).unwrap();
            let fm = discrete_forward(&gm, &g).unwrap();
            for k in 0..3 {
                let fd = (fp.data[k] - fm.data[k]) / (2.0 * eps);
                let an = jac[(k, e)];
                assert!(
                    (fd - an).abs() <= 1e-7 * (1.0 + an.abs()),
                    "edge {e} pair {k}: fd {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn jacobian_is_invertible_for_critical_graphs() {
        use crate::linalg::condition_number;
        let g = build_topology(TopologyKind::Circular, 5).unwrap();
        let gamma: Vec<f64> = (0..10).map(|i| 1.0 + 0.05 * i as f64).collect();
        let jac = jacobian_discrete_forward(&gamma, &g).unwrap();
        let cond = condition_number(&jac);
        assert!(cond.is_finite() && cond < 1e8, "condition {cond}");
    }

    #[test]
    fn jacobian_column_ordering_matches_edges() {
        // column e must be the response to bumping exactly edge e of the
        // documented edge list
        let g = build_topology(TopologyKind::Circular, 5).unwrap();
        let gamma: Vec<f64> = (0..10).map(|i| 0.9 + 0.13 * i as f64).collect();
        let jac = jacobian_discrete_forward(&gamma, &g).unwrap();
        let eps = 1e-6;
        for e in [0usize, 4, 7, 9] {
            let mut gp = gamma.clone();
            gp[e] += eps;
            let mut gm = gamma.clone();
            gm[e] -= eps;
            let fp = discrete_forward(&gp, &g).unwrap();
            let fm = discrete_forward(&gm, &g).unwrap();
            let fd = (&fp.data - &fm.data) / (2.0 * eps);
            let col = jac.column(e);
            assert!(
                (&fd - &col).norm() < 1e-6 * (1.0 + col.norm()),
                "edge {e} column mismatch"
            );
        }
        assert_eq!(pair_index(0, 1, 5), 0);
        assert_eq!(pair_index(3, 4, 5), 9);
    }
}
