//! Builds critical circular-planar graphs from crossing schedules.
//!
//! A schedule lists adjacent transpositions of `n` strands such that every
//! pair of strands crosses exactly once. The chambers between strands are
//! tracked through the sweep and 2-colored by their height parity; faces of
//! one color become network nodes and every crossing contributes exactly
//! one edge between same-colored faces. The resulting graph has `n`
//! boundary nodes on the outer face and `n(n-1)/2` edges, and its
//! conductance-to-DtN map is one-to-one because no pair of strands crosses
//! twice.
//!
//! The partial-boundary topologies are fixed schedules: a staircase sweep
//! for the pyramidal graph (one-sided access, depth growing toward the
//! middle electrodes) and an odd-even brick pattern for the two-sided
//! graph, which splits the boundary nodes evenly between the two arcs.

use super::{NetworkGraph, TopologyKind};

/// Staircase schedule: strand k crosses all earlier strands in one run.
fn staircase_word(n: usize) -> Vec<usize> {
    let mut word = Vec::with_capacity(n * (n - 1) / 2);
    for k in 1..n {
        for i in (1..=k).rev() {
            word.push(i);
        }
    }
    word
}

/// Odd-even transposition schedule (`n` alternating rounds).
fn odd_even_word(n: usize) -> Vec<usize> {
    let mut word = Vec::with_capacity(n * (n - 1) / 2);
    for round in 0..n {
        let start = if round % 2 == 0 { 1 } else { 2 };
        let mut i = start;
        while i <= n - 1 {
            word.push(i);
            i += 2;
        }
    }
    word
}

struct Sweep {
    /// Chamber of each face id.
    chamber: Vec<usize>,
    /// Current face id per chamber.
    cur: Vec<usize>,
    /// Per crossing: (position, left, right, below, above).
    crossings: Vec<(usize, usize, usize, usize, usize)>,
}

impl Sweep {
    fn run(n: usize, word: &[usize]) -> Self {
        let mut chamber: Vec<usize> = (0..=n).collect();
        let cur: Vec<usize> = (0..=n).collect();
        let mut sweep = Sweep {
            chamber: Vec::new(),
            cur,
            crossings: Vec::with_capacity(word.len()),
        };
        let mut strands: Vec<usize> = (0..n).collect();
        let mut crossed = vec![false; n * n];
        for &i in word {
            assert!(i >= 1 && i <= n - 1, "crossing position out of range");
            let (a, b) = (strands[i - 1], strands[i]);
            assert!(
                !crossed[a * n + b],
                "schedule crosses strands {a} and {b} twice"
            );
            crossed[a * n + b] = true;
            crossed[b * n + a] = true;
            strands.swap(i - 1, i);

            let left = sweep.cur[i];
            let below = sweep.cur[i - 1];
            let above = sweep.cur[i + 1];
            let right = chamber.len();
            chamber.push(i);
            sweep.cur[i] = right;
            sweep.crossings.push((i, left, right, below, above));
        }
        // a complete schedule reverses the strand order
        assert!(
            strands.iter().enumerate().all(|(k, &s)| s == n - 1 - k),
            "schedule does not cross every pair"
        );
        sweep.chamber = chamber;
        sweep
    }
}

/// Builds the network whose nodes are the odd-parity faces of the schedule
/// arrangement.
fn from_schedule(kind: TopologyKind, n: usize, word: &[usize]) -> NetworkGraph {
    assert_eq!(word.len(), n * (n - 1) / 2);
    let sweep = Sweep::run(n, word);
    let is_black = |face: usize| sweep.chamber[face] % 2 == 1;

    // outer faces in circular order: up the left edge, down the right edge
    let mut circle: Vec<usize> = (0..=n).collect();
    for h in (1..n).rev() {
        circle.push(sweep.cur[h]);
    }
    let boundary: Vec<usize> = circle.into_iter().filter(|&f| is_black(f)).collect();
    assert_eq!(boundary.len(), n);

    let face_count = sweep.chamber.len();
    let mut id = vec![usize::MAX; face_count];
    for (k, &f) in boundary.iter().enumerate() {
        id[f] = k;
    }
    let mut next = n;
    let mut assign = |f: usize, id: &mut Vec<usize>| {
        if id[f] == usize::MAX {
            id[f] = next;
            next += 1;
        }
        id[f]
    };

    let mut edges = Vec::with_capacity(word.len());
    for &(pos, left, right, below, above) in &sweep.crossings {
        let (a, b) = if pos % 2 == 1 {
            (left, right)
        } else {
            (below, above)
        };
        debug_assert!(is_black(a) && is_black(b));
        let ia = assign(a, &mut id);
        let ib = assign(b, &mut id);
        edges.push((ia, ib));
    }

    NetworkGraph {
        kind,
        n,
        node_count: next,
        edges,
        layers: Vec::new(),
    }
}

pub(super) fn pyramidal(n: usize) -> NetworkGraph {
    from_schedule(TopologyKind::Pyramidal, n, &staircase_word(n))
}

pub(super) fn two_sided(n: usize) -> NetworkGraph {
    from_schedule(TopologyKind::TwoSided, n, &odd_even_word(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::pair_count;

    fn connected(g: &NetworkGraph) -> bool {
        let mut seen = vec![false; g.node_count()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(a, b) in g.edges() {
                let other = if a == v {
                    b
                } else if b == v {
                    a
                } else {
                    continue;
                };
                if !seen[other] {
                    seen[other] = true;
                    stack.push(other);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    #[test]
    fn small_two_sided_is_connected_and_sized() {
        for n in [4usize, 6, 10, 16] {
            let g = two_sided(n);
            assert_eq!(g.edge_count(), pair_count(n), "n = {n}");
            assert!(connected(&g), "n = {n}");
        }
    }

    #[test]
    fn small_pyramidal_is_connected_and_sized() {
        for n in [3usize, 4, 7, 16] {
            let g = pyramidal(n);
            assert_eq!(g.edge_count(), pair_count(n), "n = {n}");
            assert!(connected(&g), "n = {n}");
        }
    }

    #[test]
    fn three_node_schedule_gives_the_star() {
        let g = pyramidal(3);
        assert_eq!(g.node_count(), 4);
        let center = 3;
        let mut ends: Vec<usize> = g
            .edges()
            .iter()
            .map(|&(a, b)| if a == center { b } else { a })
            .collect();
        ends.sort_unstable();
        assert_eq!(ends, vec![0, 1, 2]);
        assert!(g.edges().iter().all(|&(a, b)| a == center || b == center));
    }

    #[test]
    fn two_sided_boundary_splits_in_halves() {
        // nodes 0..m-1 come from one strip edge, m..2m-1 from the other;
        // no edge joins two boundary nodes from different sides directly
        let n = 8;
        let g = two_sided(n);
        let direct_cross = g
            .edges()
            .iter()
            .filter(|&&(a, b)| a < n && b < n && (a < n / 2) != (b < n / 2))
            .count();
        assert_eq!(direct_cross, 0);
    }

    #[test]
    fn jacobian_invertible_for_partial_topologies() {
        use crate::linalg::condition_number;
        use crate::network::jacobian_discrete_forward;
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        for g in [pyramidal(6), two_sided(6), pyramidal(8), two_sided(8)] {
            let gamma: Vec<f64> = (0..g.edge_count())
                .map(|_| rng.random_range(0.5..2.0))
                .collect();
            let jac = jacobian_discrete_forward(&gamma, &g).unwrap();
            let cond = condition_number(&jac);
            assert!(cond.is_finite() && cond < 1e10, "{:?}: cond {cond}", g.kind());
        }
    }
}
