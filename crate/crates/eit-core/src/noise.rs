//! Measurement noise models and the discrete `H^{1/2} -> H^{-1/2}` operator
//! norm used to calibrate additive noise.
//!
//! Noise is a symmetric Gaussian matrix given at the accessible fine
//! boundary nodes, either scaled entrywise by the unit-conductivity DtN
//! (multiplicative model) or normalized in the Sobolev operator norm
//! (additive model). Lumping it through the measurement operator yields the
//! additive data perturbation with a diagonal covariance.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{EitError, Result};
use crate::measure::{measure_fine_matrix, pair_count, vec_upper, DataVector, ElectrodeSet};
use crate::solver::DtnMatrix;

/// Variance floor that keeps weighted misfits finite for noiseless data.
pub const COVARIANCE_FLOOR: f64 = 1e-30;

/// Number of draws used to estimate the additive-model covariance.
const COVARIANCE_DRAWS: usize = 10_000;

/// How the noise matrix is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseModel {
    /// Entrywise product with the reference DtN entries.
    Multiplicative,
    /// Normalized to the given level in the discrete Sobolev operator norm.
    Additive,
}

/// Noise model, level and seed for one experiment.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub model: NoiseModel,
    /// Noise level `l` as a fraction (0.01% means `1e-4`).
    pub level: f64,
    pub seed: u64,
}

/// Diagonal covariance of the data noise.
#[derive(Debug, Clone)]
pub struct NoiseCovariance(pub DVector<f64>);

impl NoiseCovariance {
    pub fn inv(&self) -> DVector<f64> {
        self.0.map(|v| 1.0 / v)
    }
}

/// Fine-grid reference DtN in the kernel-sample scaling, restricted to the
/// accessible boundary nodes.
///
/// Dividing the lumped DtN by the squared quadrature weight is the same as
/// measuring it with one unit-integral electrode per fine node, which is how
/// the noise models reference the continuum map.
#[derive(Debug, Clone)]
pub struct FineReference {
    pub matrix: DMatrix<f64>,
    pub weight: f64,
}

/// Restricts a lumped unit-conductivity DtN to the accessible nodes and
/// rescales it to kernel samples.
pub fn fine_reference(dtn: &DtnMatrix, electrodes: &ElectrodeSet) -> Result<FineReference> {
    if dtn.dim() != electrodes.n_angular() {
        return Err(EitError::DimensionMismatch(
            "reference DtN does not match the electrode fine grid".into(),
        ));
    }
    let acc = electrodes.accessible_nodes();
    let h = electrodes.weight();
    let m = DMatrix::from_fn(acc.len(), acc.len(), |i, j| dtn.0[(acc[i], acc[j])] / (h * h));
    Ok(FineReference { matrix: m, weight: h })
}

/// Discrete approximation of the `H^{1/2} -> H^{-1/2}` operator norm.
///
/// Built from the spectral decomposition of the weighted reference DtN and
/// normalized so the reference itself has norm exactly one.
#[derive(Debug, Clone)]
pub struct SobolevNorm {
    basis: DMatrix<f64>,
    /// `(1 + s^2)^{-1/4}` per eigenvalue of the weighted reference.
    weights: DVector<f64>,
    h: f64,
    scale: f64,
}

impl SobolevNorm {
    pub fn new(reference: &FineReference) -> Result<Self> {
        let h = reference.weight;
        let sym = (&reference.matrix + reference.matrix.transpose()) * (0.5 * h);
        let eig = nalgebra::SymmetricEigen::new(sym);
        let weights = eig.eigenvalues.map(|s| (1.0 + s * s).powf(-0.25));
        let mut norm = SobolevNorm {
            basis: eig.eigenvectors,
            weights,
            h,
            scale: 1.0,
        };
        let raw = norm.raw(&reference.matrix);
        if !(raw.is_finite() && raw > 0.0) {
            return Err(EitError::SolveFailure(
                "reference DtN has a degenerate spectral decomposition".into(),
            ));
        }
        norm.scale = raw;
        Ok(norm)
    }

    fn raw(&self, a: &DMatrix<f64>) -> f64 {
        let mut m = self.basis.transpose() * (a * &self.basis);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                m[(i, j)] *= self.weights[i] * self.weights[j];
            }
        }
        self.h * m.singular_values().max()
    }

    /// Norm of a matrix given at the accessible fine nodes (kernel scaling).
    pub fn eval(&self, a: &DMatrix<f64>) -> f64 {
        self.raw(a) / self.scale
    }
}

/// One-call form of the operator norm.
pub fn sobolev_norm(a: &DMatrix<f64>, reference: &FineReference) -> Result<f64> {
    Ok(SobolevNorm::new(reference)?.eval(a))
}

/// Derives a per-sample seed from a master seed (splitmix64 step).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E3779B97F4A7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Symmetric matrix with independent unit Gaussians on and above the
/// diagonal, drawn row-major.
pub fn symmetric_gaussian(dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let v: f64 = StandardNormal.sample(&mut rng);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Reusable noise machinery for one measurement setup.
pub struct NoiseGenerator {
    spec: NoiseSpec,
    electrodes: ElectrodeSet,
    reference: FineReference,
    norm: SobolevNorm,
    covariance: NoiseCovariance,
}

impl NoiseGenerator {
    pub fn new(
        spec: NoiseSpec,
        electrodes: &ElectrodeSet,
        reference_dtn: &DtnMatrix,
    ) -> Result<Self> {
        if spec.level < 0.0 {
            return Err(EitError::invalid("noise level must be nonnegative"));
        }
        let reference = fine_reference(reference_dtn, electrodes)?;
        let norm = SobolevNorm::new(&reference)?;
        let mut gen = NoiseGenerator {
            spec,
            electrodes: electrodes.clone(),
            reference,
            norm,
            covariance: NoiseCovariance(DVector::zeros(0)),
        };
        gen.covariance = gen.estimate_covariance();
        Ok(gen)
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn reference(&self) -> &FineReference {
        &self.reference
    }

    pub fn covariance(&self) -> &NoiseCovariance {
        &self.covariance
    }

    /// Draws the symmetric noise matrix at the accessible fine nodes.
    pub fn noise_matrix(&self, seed: u64) -> DMatrix<f64> {
        let dim = self.reference.matrix.nrows();
        if self.spec.level == 0.0 {
            return DMatrix::zeros(dim, dim);
        }
        let eta = symmetric_gaussian(dim, seed);
        match self.spec.model {
            NoiseModel::Multiplicative => {
                let mut e = eta;
                e.component_mul_assign(&self.reference.matrix);
                e * self.spec.level
            }
            NoiseModel::Additive => {
                let n = self.norm.eval(&eta);
                eta * (self.spec.level / n)
            }
        }
    }

    /// Draws the data-space noise vector `vec(M_n(E))`.
    pub fn draw(&self, seed: u64) -> DVector<f64> {
        let e = self.noise_matrix(seed);
        vec_upper(&measure_fine_matrix(&e, &self.electrodes).expect("dimensions fixed")).data
    }

    fn estimate_covariance(&self) -> NoiseCovariance {
        let g = pair_count(self.electrodes.n());
        let l = self.spec.level;
        if l == 0.0 {
            return NoiseCovariance(DVector::from_element(g, COVARIANCE_FLOOR));
        }
        let mut var = match self.spec.model {
            // closed form: the lumped entry is a linear form in the
            // independent Gaussians of the upper triangle
            NoiseModel::Multiplicative => {
                let acc = self.electrodes.accessible_nodes();
                let mut pos = vec![usize::MAX; self.electrodes.n_angular()];
                for (k, &node) in acc.iter().enumerate() {
                    pos[node] = k;
                }
                let h2 = self.electrodes.weight() * self.electrodes.weight();
                let profs = self.electrodes.profiles();
                let n = self.electrodes.n();
                let mut v = DVector::zeros(g);
                let mut k = 0;
                for i in 0..n {
                    for j in (i + 1)..n {
                        let mut s = 0.0;
                        for &(p, chi_i) in &profs[i] {
                            for &(q, chi_j) in &profs[j] {
                                let r = self.reference.matrix[(pos[p], pos[q])];
                                let coef = h2 * chi_i * chi_j * l * r;
                                s += coef * coef;
                            }
                        }
                        v[k] = s;
                        k += 1;
                    }
                }
                v
            }
            // the norm normalization correlates entries; estimate by Monte
            // Carlo with a fixed internal seed
            NoiseModel::Additive => {
                let sums: (DVector<f64>, DVector<f64>) = (0..COVARIANCE_DRAWS)
                    .into_par_iter()
                    .map(|m| {
                        let e = self.draw(derive_seed(0xC0BA_D05E, m as u64));
                        let sq = e.component_mul(&e);
                        (e, sq)
                    })
                    .reduce(
                        || (DVector::zeros(g), DVector::zeros(g)),
                        |a, b| (a.0 + b.0, a.1 + b.1),
                    );
                let m = COVARIANCE_DRAWS as f64;
                let mean = sums.0 / m;
                sums.1 / m - mean.component_mul(&mean)
            }
        };
        for v in var.iter_mut() {
            *v = v.max(COVARIANCE_FLOOR);
        }
        NoiseCovariance(var)
    }
}

/// Draws one noisy data vector for a true conductivity.
///
/// The reference DtN for the noise scaling is always the unit-conductivity
/// map on the same grid.
pub fn noisy_data(
    sigma_true: &crate::grid::ScalarField,
    electrodes: &ElectrodeSet,
    grid: &std::sync::Arc<crate::grid::DiskGrid>,
    spec: &NoiseSpec,
) -> Result<(DataVector, NoiseCovariance)> {
    let f = crate::measure::forward_map(sigma_true, electrodes, grid)?;
    let reference = crate::solver::continuum_dtn(
        grid,
        &crate::grid::ScalarField::constant(grid.clone(), 1.0),
    )?;
    let gen = NoiseGenerator::new(*spec, electrodes, &reference)?;
    let e = gen.draw(spec.seed);
    let d = DataVector {
        n: f.n,
        data: &f.data + e,
    };
    Ok((d, gen.covariance().clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, ScalarField};
    use crate::measure::{build_electrodes, AccessGeometry};
    use crate::solver::continuum_dtn;

    fn setup(n: usize, nr: usize, na: usize) -> (ElectrodeSet, DtnMatrix) {
        let grid = build_grid(nr, na).unwrap();
        let sigma = ScalarField::constant(grid.clone(), 1.0);
        let dtn = continuum_dtn(&grid, &sigma).unwrap();
        let el = build_electrodes(n, &AccessGeometry::Full, 0.8, na).unwrap();
        (el, dtn)
    }

    #[test]
    fn reference_norm_is_one_by_construction() {
        let (el, dtn) = setup(5, 20, 40);
        let r = fine_reference(&dtn, &el).unwrap();
        let norm = sobolev_norm(&r.matrix, &r).unwrap();
        assert!((norm - 1.0).abs() < 1e-12, "norm {norm}");
    }

    #[test]
    fn norm_axioms_on_random_matrices() {
        let (el, dtn) = setup(5, 15, 30);
        let r = fine_reference(&dtn, &el).unwrap();
        let norm = SobolevNorm::new(&r).unwrap();
        let zero = DMatrix::<f64>::zeros(30, 30);
        assert_eq!(norm.eval(&zero), 0.0);
        for seed in 0..5u64 {
            let a = symmetric_gaussian(30, seed);
            let b = symmetric_gaussian(30, seed + 100);
            let na = norm.eval(&a);
            let nb = norm.eval(&b);
            assert!((norm.eval(&(&a * -2.5)) - 2.5 * na).abs() < 1e-10 * na);
            let nab = norm.eval(&(&a + &b));
            assert!(nab <= na + nb + 1e-12 * (na + nb));
        }
    }

    #[test]
    fn zero_level_gives_zero_noise_and_floor_covariance() {
        let (el, dtn) = setup(4, 15, 30);
        let spec = NoiseSpec {
            model: NoiseModel::Additive,
            level: 0.0,
            seed: 3,
        };
        let gen = NoiseGenerator::new(spec, &el, &dtn).unwrap();
        assert_eq!(gen.noise_matrix(7).norm(), 0.0);
        assert!(gen.covariance().0.iter().all(|&v| v == COVARIANCE_FLOOR));
    }

    #[test]
    fn additive_noise_has_exact_norm() {
        let (el, dtn) = setup(4, 15, 30);
        let spec = NoiseSpec {
            model: NoiseModel::Additive,
            level: 0.02,
            seed: 11,
        };
        let gen = NoiseGenerator::new(spec, &el, &dtn).unwrap();
        let e = gen.noise_matrix(5);
        let r = fine_reference(&dtn, &el).unwrap();
        let n = sobolev_norm(&e, &r).unwrap();
        assert!((n - 0.02).abs() < 1e-13, "norm {n}");
    }

    #[test]
    fn noise_draws_are_seed_deterministic() {
        let (el, dtn) = setup(4, 15, 30);
        let spec = NoiseSpec {
            model: NoiseModel::Multiplicative,
            level: 1e-3,
            seed: 0,
        };
        let gen = NoiseGenerator::new(spec, &el, &dtn).unwrap();
        let a = gen.draw(42);
        let b = gen.draw(42);
        let c = gen.draw(43);
        assert_eq!(a, b);
        assert!((&a - &c).norm() > 0.0);
    }

    #[test]
    fn multiplicative_entry_std_matches_reference_scaling() {
        let (el, dtn) = setup(4, 12, 24);
        let spec = NoiseSpec {
            model: NoiseModel::Multiplicative,
            level: 1e-3,
            seed: 0,
        };
        let gen = NoiseGenerator::new(spec, &el, &dtn).unwrap();
        let r = fine_reference(&dtn, &el).unwrap();
        let draws = 10_000;
        let (i, j) = (2, 17);
        let mut sq = 0.0;
        for m in 0..draws {
            let e = gen.noise_matrix(derive_seed(9, m));
            sq += e[(i, j)] * e[(i, j)];
        }
        let std = (sq / draws as f64).sqrt();
        let expect = 1e-3 * r.matrix[(i, j)].abs();
        assert!(
            (std - expect).abs() < 0.05 * expect,
            "std {std} vs {expect}"
        );
    }

    #[test]
    fn multiplicative_covariance_matches_monte_carlo() {
        let (el, dtn) = setup(4, 12, 24);
        let spec = NoiseSpec {
            model: NoiseModel::Multiplicative,
            level: 1e-3,
            seed: 0,
        };
        let gen = NoiseGenerator::new(spec, &el, &dtn).unwrap();
        let g = pair_count(4);
        let draws = 20_000usize;
        let mut sq = DVector::<f64>::zeros(g);
        for m in 0..draws {
            let e = gen.draw(derive_seed(77, m as u64));
            sq += e.component_mul(&e);
        }
        let mc = sq / draws as f64;
        for k in 0..g {
            let cf = gen.covariance().0[k];
            assert!(
                (mc[k] - cf).abs() < 0.08 * cf,
                "component {k}: mc {} vs closed form {}",
                mc[k],
                cf
            );
        }
    }

    #[test]
    fn gaussian_entries_pass_chi_squared_check() {
        // 10^4 draws of one entry: sum of squares ~ chi^2 with 10^4 dof;
        // 1% two-sided bounds
        let draws = 10_000;
        let mut s = 0.0;
        let mut cross = 0.0;
        for m in 0..draws {
            let eta = symmetric_gaussian(8, derive_seed(5, m));
            s += eta[(1, 3)] * eta[(1, 3)];
            cross += eta[(1, 3)] * eta[(2, 5)];
        }
        let dof = draws as f64;
        // chi2 inv cdf at 0.005/0.995 for 1e4 dof, normal approximation
        let half_width = 2.576 * (2.0 * dof).sqrt();
        assert!((s - dof).abs() < half_width, "chi2 stat {s}");
        assert!((cross / dof).abs() < 0.05, "correlation {}", cross / dof);
    }
}
