//! Direct layer-peeling inversion for circular networks.
//!
//! Works outside-in. For each layer the conductances are extracted from the
//! current-level DtN matrix with boundary data that has zero potential and
//! zero current on a block of consecutive nodes; such data continues into
//! the network and pins the potential at the far end of the edge being
//! recovered. Spike layers are then removed by inverting the series
//! relation of the DtN maps, ring layers by subtracting the cycle
//! Laplacian.
//!
//! The method is exact on consistent data and deliberately fragile on
//! inconsistent data: any nonpositive pivot or conductance aborts with
//! `InconsistentData`, and callers fall back to the regularized fit.

use nalgebra::{DMatrix, DVector};

use crate::error::{EitError, Result};
use crate::measure::{unvec_upper, DataVector};

use super::{LayerKind, NetworkGraph, TopologyKind};

fn gather(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn offsets(n: usize, j: usize, step: isize, count: usize) -> Vec<usize> {
    (1..=count as isize)
        .map(|k| ((j as isize + step * k).rem_euclid(n as isize)) as usize)
        .collect()
}

/// Recovers one spike-layer conductance at boundary node `j`.
///
/// `depth` is the number of layers still present, including the spike layer
/// itself. Boundary data: `u = 1` at `j`, zero potential on the `depth`
/// nodes clockwise of `j`, zero current there too (achieved by adjusting
/// the `depth` free potentials counterclockwise of `j`), ground elsewhere.
/// The injected current at `j` is then exactly the spike conductance.
fn spike_conductance(m: &DMatrix<f64>, j: usize, depth: usize) -> Result<f64> {
    let n = m.nrows();
    let free = offsets(n, j, 1, depth);
    let cauchy = offsets(n, j, -1, depth);
    let sys = gather(m, &cauchy, &free);
    let rhs = -DVector::from_iterator(depth, cauchy.iter().map(|&b| m[(b, j)]));
    let x = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| EitError::InconsistentData(format!("singular spike system at node {j}")))?;
    let mut current = m[(j, j)];
    for (k, &a) in free.iter().enumerate() {
        current += m[(j, a)] * x[k];
    }
    Ok(current)
}

/// Recovers the ring conductance on the edge `(j, j+1)` of the current level.
///
/// `depth` counts the layers still present including the ring layer. Zero
/// potential is imposed on nodes `j+1 ..= j+depth+1`; zero current on the
/// inner block `j+2 ..= j+depth` localizes the solution so that the only
/// current path into `j+1` is the ring edge from `j`.
fn ring_conductance(m: &DMatrix<f64>, j: usize, depth: usize) -> Result<f64> {
    let n = m.nrows();
    let jp = (j + 1) % n;
    let mut current = m[(jp, j)];
    if depth > 1 {
        let zero_current: Vec<usize> = offsets(n, j, 1, depth + 1)[1..depth].to_vec();
        let free = offsets(n, j, -1, depth - 1);
        let sys = gather(m, &zero_current, &free);
        let rhs = -DVector::from_iterator(depth - 1, zero_current.iter().map(|&z| m[(z, j)]));
        let x = sys.lu().solve(&rhs).ok_or_else(|| {
            EitError::InconsistentData(format!("singular ring system at edge ({j}, {jp})"))
        })?;
        for (k, &a) in free.iter().enumerate() {
            current += m[(jp, a)] * x[k];
        }
    }
    Ok(-current)
}

fn check_positive(kind: &str, j: usize, g: f64) -> Result<f64> {
    if g.is_finite() && g > 0.0 {
        Ok(g)
    } else {
        Err(EitError::InconsistentData(format!(
            "{kind} conductance at index {j} came out {g:.6e}"
        )))
    }
}

/// Removes a recovered spike layer: the inner DtN solves
/// `(I - M D^{-1}) M_inner = M`.
fn peel_spikes(m: &DMatrix<f64>, spikes: &[f64]) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mut a = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] -= m[(i, j)] / spikes[j];
        }
    }
    let inner = a
        .lu()
        .solve(m)
        .ok_or_else(|| EitError::InconsistentData("spike layer removal is singular".into()))?;
    Ok((&inner + inner.transpose()) * 0.5)
}

/// Removes a recovered ring layer by subtracting its cycle Laplacian.
fn peel_ring(m: &mut DMatrix<f64>, ring: &[f64]) {
    let n = m.nrows();
    for j in 0..n {
        let jp = (j + 1) % n;
        m[(j, j)] -= ring[j] + ring[(j + n - 1) % n];
        m[(j, jp)] += ring[j];
        m[(jp, j)] += ring[j];
    }
}

/// Recovers all conductances of a circular network from its DtN data by
/// layer peeling. Fails with `InconsistentData` when the data is not the
/// response of a positive network on this graph.
pub fn layer_peel_circular(d: &DataVector, graph: &NetworkGraph) -> Result<Vec<f64>> {
    if graph.kind() != TopologyKind::Circular {
        return Err(EitError::invalid(
            "layer peeling is implemented for circular networks only",
        ));
    }
    let n = graph.n();
    if d.n != n {
        return Err(EitError::DimensionMismatch(format!(
            "data for {} boundary nodes, graph has {n}",
            d.n
        )));
    }
    let layer_count = graph.layers().len();
    let mut m = unvec_upper(d).0;
    let mut gamma = Vec::with_capacity(graph.edge_count());

    for (k, &layer) in graph.layers().iter().enumerate() {
        let depth = layer_count - k;
        let last = k + 1 == layer_count;
        match layer {
            LayerKind::Spike => {
                let mut spikes = Vec::with_capacity(n);
                for j in 0..n {
                    spikes.push(check_positive("spike", j, spike_conductance(&m, j, depth)?)?);
                }
                if !last {
                    m = peel_spikes(&m, &spikes)?;
                }
                gamma.extend_from_slice(&spikes);
            }
            LayerKind::Ring => {
                let mut ring = Vec::with_capacity(n);
                for j in 0..n {
                    ring.push(check_positive("ring", j, ring_conductance(&m, j, depth)?)?);
                }
                if !last {
                    peel_ring(&mut m, &ring);
                }
                gamma.extend_from_slice(&ring);
            }
        }
    }
    Ok(gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_topology, discrete_forward};
    use rand::RngExt;
    use rand::SeedableRng;

    fn random_gamma(g: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        (0..g).map(|_| rng.random_range(0.5..2.0)).collect()
    }

    fn roundtrip_max_err(n: usize, seed: u64) -> f64 {
        let graph = build_topology(TopologyKind::Circular, n).unwrap();
        let gamma = random_gamma(graph.edge_count(), seed);
        let d = discrete_forward(&gamma, &graph).unwrap();
        let rec = layer_peel_circular(&d, &graph).unwrap();
        gamma
            .iter()
            .zip(&rec)
            .map(|(a, b)| ((a - b) / a).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn star_roundtrip() {
        assert!(roundtrip_max_err(3, 1) < 1e-12);
    }

    #[test]
    fn five_node_roundtrip() {
        for seed in 0..5 {
            assert!(roundtrip_max_err(5, seed) < 1e-10);
        }
    }

    #[test]
    fn seven_node_roundtrip() {
        for seed in 0..5 {
            let err = roundtrip_max_err(7, seed);
            assert!(err < 1e-8, "seed {seed}: err {err}");
        }
    }

    #[test]
    fn eleven_node_roundtrip() {
        for seed in 0..3 {
            let err = roundtrip_max_err(11, seed);
            assert!(err < 1e-8, "seed {seed}: err {err}");
        }
    }

    #[test]
    fn perturbed_data_fails_or_goes_wild() {
        let graph = build_topology(TopologyKind::Circular, 7).unwrap();
        let gamma = random_gamma(graph.edge_count(), 9);
        let mut d = discrete_forward(&gamma, &graph).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(99);
        for v in d.data.iter_mut() {
            *v *= 1.0 + rng.random_range(-0.1..0.1);
        }
        match layer_peel_circular(&d, &graph) {
            Err(EitError::InconsistentData(_)) => {}
            Err(e) => panic!("unexpected error kind: {e}"),
            Ok(rec) => {
                let err = gamma
                    .iter()
                    .zip(&rec)
                    .map(|(a, b)| ((a - b) / a).abs())
                    .fold(0.0, f64::max);
                assert!(err > 0.5, "10% data noise should wreck the recovery, err {err}");
            }
        }
    }
}
