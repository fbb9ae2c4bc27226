//! Electrode functions and the lumped measurement operator.
//!
//! The measurement operator turns the fine-grid DtN map into an `n x n`
//! matrix by pairing it with `n` nonnegative electrode functions of unit
//! integral and disjoint supports; diagonals are set so every row sums to
//! zero, which enforces conservation of currents. The strict upper triangle
//! of that matrix, stacked row-major, is the data vector.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{EitError, Result};
use crate::grid::{DiskGrid, ScalarField};
use crate::solver::{continuum_dtn, DtnMatrix};

/// Which part of the boundary carries electrodes. Angles are in radians;
/// arcs are traversed counterclockwise from `start` to `end`.
#[derive(Debug, Clone, PartialEq)]
pub enum AccessGeometry {
    Full,
    OneSided { arc: (f64, f64) },
    TwoSided { arcs: [(f64, f64); 2] },
}

fn wrap_angle(t: f64) -> f64 {
    t.rem_euclid(2.0 * PI)
}

fn arc_len(arc: (f64, f64)) -> f64 {
    wrap_angle(arc.1 - arc.0 + 2.0 * PI - 1e-15) % (2.0 * PI) + 1e-15
}

impl AccessGeometry {
    pub fn arcs(&self) -> Vec<(f64, f64)> {
        match self {
            AccessGeometry::Full => vec![(0.0, 2.0 * PI)],
            AccessGeometry::OneSided { arc } => vec![*arc],
            AccessGeometry::TwoSided { arcs } => arcs.to_vec(),
        }
    }

    pub fn is_full(&self) -> bool {
        matches!(self, AccessGeometry::Full)
    }

    pub fn contains(&self, theta: f64) -> bool {
        if self.is_full() {
            return true;
        }
        let t = wrap_angle(theta);
        self.arcs().iter().any(|&(a, b)| {
            let span = arc_len((a, b));
            wrap_angle(t - a) <= span
        })
    }
}

/// Discretized electrode functions over the fine boundary nodes.
#[derive(Debug, Clone)]
pub struct ElectrodeSet {
    n: usize,
    n_angular: usize,
    coverage: f64,
    geometry: AccessGeometry,
    /// Per electrode: `(fine boundary node, point value)`, disjoint supports,
    /// each integrating to one under the trapezoidal boundary quadrature.
    profiles: Vec<Vec<(usize, f64)>>,
    /// Electrode center angles in circular order.
    centers: Vec<f64>,
    /// Fine boundary nodes on the accessible boundary, ascending.
    accessible: Vec<usize>,
}

impl ElectrodeSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_angular(&self) -> usize {
        self.n_angular
    }

    pub fn coverage(&self) -> f64 {
        self.coverage
    }

    pub fn geometry(&self) -> &AccessGeometry {
        &self.geometry
    }

    pub fn profiles(&self) -> &[Vec<(usize, f64)>] {
        &self.profiles
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn accessible_nodes(&self) -> &[usize] {
        &self.accessible
    }

    /// Boundary quadrature weight `2 pi / N`.
    pub fn weight(&self) -> f64 {
        2.0 * PI / self.n_angular as f64
    }

    /// Quadrature integral of one electrode function.
    pub fn integral(&self, i: usize) -> f64 {
        self.weight() * self.profiles[i].iter().map(|&(_, v)| v).sum::<f64>()
    }
}

/// Builds `n` tent-shaped electrodes with coverage fraction `coverage`,
/// equidistant within each accessible arc.
pub fn build_electrodes(
    n: usize,
    geometry: &AccessGeometry,
    coverage: f64,
    n_angular: usize,
) -> Result<ElectrodeSet> {
    if n < 2 {
        return Err(EitError::invalid("need at least two electrodes"));
    }
    if !(0.0 < coverage && coverage <= 1.0) {
        return Err(EitError::invalid(format!(
            "electrode coverage must be in (0, 1], got {coverage}"
        )));
    }
    let arcs = geometry.arcs();
    if let AccessGeometry::TwoSided { .. } = geometry {
        if n % 2 != 0 {
            return Err(EitError::invalid(
                "two-sided geometry needs an even electrode count",
            ));
        }
    }
    let per_arc = n / arcs.len();
    if per_arc * arcs.len() != n {
        return Err(EitError::invalid(
            "electrode count must split evenly across accessible arcs",
        ));
    }

    let h = 2.0 * PI / n_angular as f64;
    let mut centers = Vec::with_capacity(n);
    let mut halfwidths = Vec::with_capacity(n);
    for &arc in &arcs {
        let len = if geometry.is_full() { 2.0 * PI } else { arc_len(arc) };
        let spacing = len / per_arc as f64;
        for i in 0..per_arc {
            let c = if geometry.is_full() {
                // put electrode 0 at angle 0
                spacing * i as f64
            } else {
                wrap_angle(arc.0 + spacing * (i as f64 + 0.5))
            };
            centers.push(c);
            halfwidths.push(0.5 * coverage * spacing);
        }
    }

    let mut owner = vec![usize::MAX; n_angular];
    let mut profiles = Vec::with_capacity(n);
    for (i, (&c, &hw)) in centers.iter().zip(&halfwidths).enumerate() {
        let mut prof = Vec::new();
        for j in 0..n_angular {
            let theta = h * j as f64;
            let d = {
                let raw = wrap_angle(theta - c);
                raw.min(2.0 * PI - raw)
            };
            if d < hw {
                if owner[j] != usize::MAX {
                    return Err(EitError::invalid(format!(
                        "electrode supports overlap at boundary node {j}; reduce coverage"
                    )));
                }
                owner[j] = i;
                prof.push((j, 1.0 - d / hw));
            }
        }
        if prof.is_empty() {
            return Err(EitError::invalid(format!(
                "electrode {i} covers no boundary node; refine the grid or widen electrodes"
            )));
        }
        if !geometry.is_full() {
            for &(j, _) in &prof {
                if !geometry.contains(h * j as f64) {
                    return Err(EitError::invalid(format!(
                        "electrode {i} leaks outside the accessible boundary"
                    )));
                }
            }
        }
        let integral: f64 = h * prof.iter().map(|&(_, v)| v).sum::<f64>();
        for p in &mut prof {
            p.1 /= integral;
        }
        profiles.push(prof);
    }

    let accessible: Vec<usize> = (0..n_angular)
        .filter(|&j| geometry.contains(h * j as f64))
        .collect();

    Ok(ElectrodeSet {
        n,
        n_angular,
        coverage,
        geometry: geometry.clone(),
        profiles,
        centers,
        accessible,
    })
}

/// Measured (lumped) DtN matrix: symmetric with exact zero row sums.
#[derive(Debug, Clone)]
pub struct MeasuredDtn(pub DMatrix<f64>);

impl MeasuredDtn {
    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    /// Rebuilds the diagonal so that every row sums to zero.
    fn from_off_diagonal(mut m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                if j != i {
                    s += m[(i, j)];
                }
            }
            m[(i, i)] = -s;
        }
        MeasuredDtn(m)
    }
}

/// Lumps a fine DtN matrix with the electrode functions.
pub fn measure(dtn: &DtnMatrix, electrodes: &ElectrodeSet) -> Result<MeasuredDtn> {
    if dtn.dim() != electrodes.n_angular() {
        return Err(EitError::DimensionMismatch(format!(
            "DtN map has {} boundary nodes, electrodes expect {}",
            dtn.dim(),
            electrodes.n_angular()
        )));
    }
    let n = electrodes.n();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0;
            for &(p, chi_i) in &electrodes.profiles()[i] {
                for &(q, chi_j) in &electrodes.profiles()[j] {
                    acc += chi_i * dtn.0[(p, q)] * chi_j;
                }
            }
            m[(i, j)] = acc;
            m[(j, i)] = acc;
        }
    }
    Ok(MeasuredDtn::from_off_diagonal(m))
}

/// Lumps an `N_acc x N_acc` noise-like matrix given at the accessible fine
/// nodes. Such matrices live in the kernel-sample scaling, so the pairing
/// carries the quadrature weight squared.
pub fn measure_fine_matrix(e: &DMatrix<f64>, electrodes: &ElectrodeSet) -> Result<MeasuredDtn> {
    let acc = electrodes.accessible_nodes();
    if e.nrows() != acc.len() || e.ncols() != acc.len() {
        return Err(EitError::DimensionMismatch(format!(
            "matrix is {}x{}, accessible boundary has {} nodes",
            e.nrows(),
            e.ncols(),
            acc.len()
        )));
    }
    let mut pos = vec![usize::MAX; electrodes.n_angular()];
    for (k, &node) in acc.iter().enumerate() {
        pos[node] = k;
    }
    let h2 = electrodes.weight() * electrodes.weight();
    let n = electrodes.n();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = 0.0;
            for &(p, chi_i) in &electrodes.profiles()[i] {
                for &(q, chi_j) in &electrodes.profiles()[j] {
                    s += chi_i * e[(pos[p], pos[q])] * chi_j;
                }
            }
            let v = h2 * s;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(MeasuredDtn::from_off_diagonal(m))
}

/// Data vector: strict upper triangle of a measured DtN, stacked row-major
/// over pairs `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataVector {
    pub n: usize,
    pub data: DVector<f64>,
}

/// Number of independent measurements with `n` electrodes.
pub fn pair_count(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Flat index of the pair `(i, j)`, `i < j`, in the data vector ordering.
pub fn pair_index(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// All pairs `(i, j)` with `i < j` in data vector order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)))
}

impl DataVector {
    pub fn g(&self) -> usize {
        self.data.len()
    }

    pub fn from_vec(n: usize, v: Vec<f64>) -> Result<Self> {
        if v.len() != pair_count(n) {
            return Err(EitError::DimensionMismatch(format!(
                "data vector length {} is not n(n-1)/2 = {} for n = {n}",
                v.len(),
                pair_count(n)
            )));
        }
        Ok(Self {
            n,
            data: DVector::from_vec(v),
        })
    }
}

/// Stacks the strict upper triangle of a measured DtN into a data vector.
pub fn vec_upper(m: &MeasuredDtn) -> DataVector {
    let n = m.n();
    let data = DVector::from_iterator(pair_count(n), pairs(n).map(|(i, j)| m.0[(i, j)]));
    DataVector { n, data }
}

/// Rebuilds the measured DtN from a data vector (diagonal from zero row sums).
pub fn unvec_upper(d: &DataVector) -> MeasuredDtn {
    let n = d.n;
    let mut m = DMatrix::zeros(n, n);
    for (k, (i, j)) in pairs(n).enumerate() {
        m[(i, j)] = d.data[k];
        m[(j, i)] = d.data[k];
    }
    MeasuredDtn::from_off_diagonal(m)
}

/// Full forward map: fine solve, lumping, vectorization.
pub fn forward_map(
    sigma: &ScalarField,
    electrodes: &ElectrodeSet,
    grid: &Arc<DiskGrid>,
) -> Result<DataVector> {
    let dtn = continuum_dtn(grid, sigma)?;
    Ok(vec_upper(&measure(&dtn, electrodes)?))
}
