//! Piecewise-linear interpolation on a Delaunay triangulation of scattered
//! points, with the extension rules used for conductivity fields: constant
//! continuation from the nearest node (full-boundary reconstructions) or a
//! fixed background value (partial-boundary reconstructions).

use spade::{DelaunayTriangulation, HasPosition, Point2, PositionInTriangulation, Triangulation};

use crate::error::{EitError, Result};
use crate::grid::DiskGrid;

struct IndexedPoint {
    position: Point2<f64>,
    index: usize,
}

impl HasPosition for IndexedPoint {
    type Scalar = f64;
    fn position(&self) -> Point2<f64> {
        self.position
    }
}

/// Delaunay triangulation over a fixed point set with barycentric queries.
pub struct PlInterpolator {
    tri: DelaunayTriangulation<IndexedPoint>,
    points: Vec<(f64, f64)>,
}

impl PlInterpolator {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 3 {
            return Err(EitError::invalid(
                "need at least three points to triangulate",
            ));
        }
        let mut tri = DelaunayTriangulation::new();
        for (index, &(x, y)) in points.iter().enumerate() {
            let handle = tri
                .insert(IndexedPoint {
                    position: Point2::new(x, y),
                    index,
                })
                .map_err(|e| EitError::invalid(format!("triangulation failed: {e:?}")))?;
            if tri.vertex(handle).data().index != index {
                return Err(EitError::invalid(format!(
                    "duplicate interpolation point at ({x}, {y})"
                )));
            }
        }
        Ok(Self {
            tri,
            points: points.to_vec(),
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Barycentric weights of the query against the original point indices,
    /// or `None` outside the convex hull.
    pub fn weights(&self, x: f64, y: f64) -> Option<Vec<(usize, f64)>> {
        let q = Point2::new(x, y);
        match self.tri.locate(q) {
            PositionInTriangulation::OnFace(f) => {
                let face = self.tri.face(f);
                let w = face.barycentric_interpolation(q);
                let vs = face.vertices();
                Some(
                    (0..3)
                        .map(|k| (vs[k].data().index, w[k]))
                        .filter(|&(_, w)| w != 0.0)
                        .collect(),
                )
            }
            PositionInTriangulation::OnVertex(v) => {
                Some(vec![(self.tri.vertex(v).data().index, 1.0)])
            }
            PositionInTriangulation::OnEdge(e) => {
                let edge = self.tri.directed_edge(e);
                let [a, b] = edge.vertices();
                let pa = a.position();
                let pb = b.position();
                let dx = pb.x - pa.x;
                let dy = pb.y - pa.y;
                let len2 = dx * dx + dy * dy;
                let t = (((x - pa.x) * dx + (y - pa.y) * dy) / len2).clamp(0.0, 1.0);
                Some(vec![(a.data().index, 1.0 - t), (b.data().index, t)])
            }
            _ => None,
        }
    }

    /// Index of the nearest interpolation point.
    pub fn nearest(&self, x: f64, y: f64) -> usize {
        self.tri
            .nearest_neighbor(Point2::new(x, y))
            .map(|v| v.data().index)
            .expect("triangulation is nonempty")
    }
}

/// How to extend an interpolated field outside the convex hull.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extension {
    /// Constant continuation from the nearest point (full-boundary setups).
    NearestPoint,
    /// Fixed background value (partial-boundary setups).
    Background(f64),
}

/// Piecewise-linear basis over the fine grid: row `i` holds the nonzero
/// basis weights at fine node `i`.
pub struct PlBasis {
    pub weights: Vec<Vec<(usize, f64)>>,
    pub inside_hull: Vec<bool>,
    pub extension: Extension,
    pub point_count: usize,
}

impl PlBasis {
    pub fn build(interp: &PlInterpolator, grid: &DiskGrid, extension: Extension) -> Self {
        let n = grid.node_count();
        let mut weights = Vec::with_capacity(n);
        let mut inside_hull = Vec::with_capacity(n);
        for idx in 0..n {
            let (x, y) = grid.position(idx);
            match interp.weights(x, y) {
                Some(w) => {
                    weights.push(w);
                    inside_hull.push(true);
                }
                None => {
                    let w = match extension {
                        Extension::NearestPoint => vec![(interp.nearest(x, y), 1.0)],
                        Extension::Background(_) => Vec::new(),
                    };
                    weights.push(w);
                    inside_hull.push(false);
                }
            }
        }
        PlBasis {
            weights,
            inside_hull,
            extension,
            point_count: interp.points().len(),
        }
    }

    /// Evaluates `sum_k s_k phi_k` at every fine node, using the background
    /// value outside the hull when so extended.
    pub fn apply(&self, s: &[f64]) -> Vec<f64> {
        assert_eq!(s.len(), self.point_count);
        self.weights
            .iter()
            .map(|row| {
                if row.is_empty() {
                    match self.extension {
                        Extension::Background(b) => b,
                        Extension::NearestPoint => unreachable!(),
                    }
                } else {
                    row.iter().map(|&(k, w)| w * s[k]).sum()
                }
            })
            .collect()
    }

    /// Dense `N_fine x g` matrix of basis values (the Jacobian of `apply`).
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.weights.len(), self.point_count);
        for (i, row) in self.weights.iter().enumerate() {
            for &(k, w) in row {
                m[(i, k)] += w;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    fn square_points() -> Vec<(f64, f64)> {
        vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.4, 0.6)]
    }

    #[test]
    fn weights_are_barycentric() {
        let p = square_points();
        let interp = PlInterpolator::new(&p).unwrap();
        let w = interp.weights(0.3, 0.3).unwrap();
        let total: f64 = w.iter().map(|&(_, v)| v).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // linear functions are reproduced exactly
        let f = |x: f64, y: f64| 2.0 + 3.0 * x - y;
        let vals: Vec<f64> = p.iter().map(|&(x, y)| f(x, y)).collect();
        let v: f64 = w.iter().map(|&(k, wk)| wk * vals[k]).sum();
        assert!((v - f(0.3, 0.3)).abs() < 1e-12);
    }

    #[test]
    fn outside_hull_is_none_and_nearest_works() {
        let interp = PlInterpolator::new(&square_points()).unwrap();
        assert!(interp.weights(2.0, 2.0).is_none());
        assert_eq!(interp.nearest(1.1, 1.2), 3);
    }

    #[test]
    fn duplicate_points_rejected() {
        let mut p = square_points();
        p.push((0.0, 0.0));
        assert!(PlInterpolator::new(&p).is_err());
    }

    #[test]
    fn basis_partition_of_unity() {
        let grid = build_grid(8, 16).unwrap();
        let pts: Vec<(f64, f64)> = (0..12)
            .map(|k| {
                let a = 0.5 * k as f64;
                (0.7 * a.cos() * (1.0 - 0.03 * k as f64), 0.7 * a.sin())
            })
            .collect();
        let interp = PlInterpolator::new(&pts).unwrap();
        let basis = PlBasis::build(&interp, &grid, Extension::NearestPoint);
        let ones = vec![1.0; pts.len()];
        for v in basis.apply(&ones) {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let bg = PlBasis::build(&interp, &grid, Extension::Background(1.0));
        for (i, v) in bg.apply(&ones).iter().enumerate() {
            assert!((v - 1.0).abs() < 1e-12, "node {i}");
        }
    }
}
