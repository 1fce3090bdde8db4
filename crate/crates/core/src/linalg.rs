//! Dense complex matrix kernel.
//!
//! Everything above this module speaks in three matrix shapes: plain complex
//! matrices ([`CMat`]), Hermitian positive semidefinite message matrices
//! ([`HermitianPsd`]) and points on the complex Stiefel manifold
//! ([`TruncatedUnitary`]). The one non-trivial operator is [`nu_min`], which
//! returns an orthonormal basis of the eigenspace belonging to the `d` weakest
//! eigenvalues of a Hermitian matrix.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

/// Random stream used for every stochastic draw in the crate.
pub type SimRng = ChaCha8Rng;

/// Frobenius norm at or below which [`nu_min`] treats its argument as the
/// zero matrix and falls back to an isotropic draw.
pub const ZERO_MATRIX_TOL: f64 = 1e-12;

/// Maximum ‖XᴴX − I‖_F accepted by [`TruncatedUnitary::new`].
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Relative asymmetry accepted by [`HermitianPsd::new`].
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Relative eigenvalue floor used by [`HermitianPsd::check_psd`].
pub const PSD_TOL: f64 = 1e-9;

/// Builds a reproducible random stream; distinct `stream` values give
/// independent sequences for the same `seed`.
pub fn seeded_stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn all_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `(M + Mᴴ) / 2`. Idempotent bit-for-bit on an already Hermitian matrix.
pub fn hermitian_part(m: &CMat) -> CMat {
    let n = m.nrows();
    CMat::from_fn(n, n, |r, c| (m[(r, c)] + m[(c, r)].conj()) * 0.5)
}

/// `A X Xᴴ Aᴴ`, the covariance of the subspace `X` seen through `A`.
pub fn projected_covariance(a: &CMat, x: &CMat) -> CMat {
    let b = a * x;
    hermitian_part(&(&b * b.adjoint()))
}

/// A Hermitian matrix carrying one quadratic-form message `X ↦ tr(XᴴQX)`.
///
/// The stored matrix is always exactly Hermitian. Positive semidefiniteness
/// is a property of how messages are built; it is checked on demand by
/// [`HermitianPsd::check_psd`] rather than enforced at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianPsd(CMat);

impl HermitianPsd {
    pub fn zeros(n: usize) -> Self {
        HermitianPsd(CMat::zeros(n, n))
    }

    /// Validates squareness, finiteness and Hermitian symmetry (within
    /// [`HERMITIAN_TOL`] relative), then stores the exact Hermitian part.
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if !all_finite(&m) {
            return Err(Error::NonFinite("Hermitian matrix"));
        }
        let asym = (&m - m.adjoint()).norm() / m.norm().max(1.0);
        if asym > HERMITIAN_TOL {
            return Err(Error::NotHermitian(asym));
        }
        Ok(HermitianPsd(hermitian_part(&m)))
    }

    /// Wraps the Hermitian part of `m` without any further validation.
    pub fn from_hermitian_part(m: &CMat) -> Self {
        HermitianPsd(hermitian_part(m))
    }

    /// `B Bᴴ`, PSD by construction.
    pub fn gram(b: &CMat) -> Self {
        HermitianPsd(hermitian_part(&(b * b.adjoint())))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|z| *z == Complex64::new(0.0, 0.0))
    }

    pub fn add_assign(&mut self, other: &HermitianPsd) {
        self.0 += &other.0;
    }

    pub fn add_matrix(&self, other: &CMat) -> HermitianPsd {
        HermitianPsd(hermitian_part(&(&self.0 + other)))
    }

    pub fn scaled(&self, alpha: f64) -> HermitianPsd {
        HermitianPsd(self.0.map(|z| z * alpha))
    }

    /// `tr(XᴴQX)` (real for Hermitian `Q`).
    pub fn quadratic_form(&self, x: &CMat) -> f64 {
        (x.adjoint() * &self.0 * x).trace().re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut values: Vec<f64> = self
            .0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        values.sort_by(f64::total_cmp);
        values
    }

    /// Smallest eigenvalue divided by `max(1, largest eigenvalue)`.
    pub fn min_relative_eigenvalue(&self) -> f64 {
        let values = self.eigenvalues();
        match (values.first(), values.last()) {
            (Some(lo), Some(hi)) => lo / hi.max(1.0),
            _ => 0.0,
        }
    }

    pub fn check_psd(&self) -> Result<()> {
        let rel = self.min_relative_eigenvalue();
        if rel < -PSD_TOL {
            return Err(Error::Dimension(format!(
                "matrix is not PSD (relative smallest eigenvalue {rel:e})"
            )));
        }
        Ok(())
    }

    /// Number of eigenvalues above `rel_tol · ‖Q‖_F`.
    pub fn numerical_rank(&self, rel_tol: f64) -> usize {
        let threshold = rel_tol * self.frobenius_norm();
        self.eigenvalues()
            .iter()
            .filter(|&&l| l > threshold)
            .count()
    }
}

/// An `n × p` complex matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedUnitary(CMat);

impl TruncatedUnitary {
    pub fn new(m: CMat) -> Result<Self> {
        if m.ncols() == 0 || m.ncols() > m.nrows() {
            return Err(Error::Dimension(format!(
                "truncated unitary needs 1 <= p <= n, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if !all_finite(&m) {
            return Err(Error::NonFinite("truncated unitary"));
        }
        let err = orthonormality_error(&m);
        if err > ORTHONORMALITY_TOL {
            return Err(Error::NotOrthonormal(err));
        }
        Ok(TruncatedUnitary(m))
    }

    /// First `p` columns of the identity.
    pub fn canonical(n: usize, p: usize) -> Result<Self> {
        if p == 0 || p > n {
            return Err(Error::Dimension(format!(
                "canonical basis needs 1 <= p <= n, got p={p}, n={n}"
            )));
        }
        Ok(TruncatedUnitary(CMat::identity(n, p)))
    }

    pub(crate) fn from_orthonormal(m: CMat) -> Self {
        debug_assert!(orthonormality_error(&m) <= ORTHONORMALITY_TOL);
        TruncatedUnitary(m)
    }

    pub fn ambient_dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn subspace_dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    /// Orthogonal projector `X Xᴴ` onto the column space.
    pub fn projector(&self) -> CMat {
        &self.0 * self.0.adjoint()
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.0)
    }
}

fn orthonormality_error(m: &CMat) -> f64 {
    let p = m.ncols();
    (m.adjoint() * m - CMat::identity(p, p)).norm()
}

/// Eigendecomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` belongs to `values[k]`; its largest-magnitude entry is real
    /// and positive.
    pub vectors: CMat,
}

pub fn hermitian_eig(q: &HermitianPsd) -> Result<HermitianEig> {
    let m = q.as_matrix();
    if !all_finite(m) {
        return Err(Error::NonFinite("eigendecomposition input"));
    }
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut vectors = CMat::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let col = eig.eigenvectors.column(src);
        // Phase convention: largest-magnitude entry (first on ties) real positive.
        let mut pivot = 0;
        for r in 1..n {
            if col[r].norm() > col[pivot].norm() {
                pivot = r;
            }
        }
        let p = col[pivot];
        let phase = if p.norm() > 0.0 {
            p.conj() / p.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for r in 0..n {
            vectors[(r, dst)] = col[r] * phase;
        }
    }
    Ok(HermitianEig { values, vectors })
}

/// Orthonormal basis of the invariant subspace of the `d` smallest
/// eigenvalues of `q`.
///
/// When `‖q‖_F ≤ ZERO_MATRIX_TOL` every subspace is a minimizer and the result
/// is a Haar-random draw from `rng`; otherwise the result is deterministic
/// and `rng` is left untouched.
pub fn nu_min<R: Rng + ?Sized>(
    q: &HermitianPsd,
    d: usize,
    rng: &mut R,
) -> Result<TruncatedUnitary> {
    let n = q.dim();
    if d == 0 || d > n {
        return Err(Error::Dimension(format!(
            "nu_min needs 1 <= d <= {n}, got d={d}"
        )));
    }
    if q.frobenius_norm() <= ZERO_MATRIX_TOL {
        return random_truncated_unitary(n, d, rng);
    }
    let eig = hermitian_eig(q)?;
    Ok(TruncatedUnitary::from_orthonormal(
        eig.vectors.columns(0, d).into_owned(),
    ))
}

/// `n × m` matrix of i.i.d. circularly symmetric complex Gaussian entries
/// with unit variance, drawn in row-major order (real part first).
pub fn random_gaussian_matrix<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<CMat> {
    if n == 0 || m == 0 {
        return Err(Error::Dimension(format!(
            "Gaussian matrix needs positive dims, got {n}x{m}"
        )));
    }
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let entries: Vec<Complex64> = (0..n * m)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * scale, im * scale)
        })
        .collect();
    Ok(CMat::from_row_slice(n, m, &entries))
}

/// Haar-distributed point of the complex Stiefel manifold `V_{n,p}`.
///
/// QR of a Gaussian draw, with the phases of `R`'s diagonal moved into `Q`
/// so the factorization (and hence the distribution) is unique.
pub fn random_truncated_unitary<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    rng: &mut R,
) -> Result<TruncatedUnitary> {
    if p == 0 || p > n {
        return Err(Error::Dimension(format!(
            "truncated unitary needs 1 <= p <= n, got p={p}, n={n}"
        )));
    }
    let a = random_gaussian_matrix(n, p, rng)?;
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    for k in 0..p {
        let rkk = r[(k, k)];
        if rkk.norm() > 0.0 {
            let phase = rkk / rkk.norm();
            for row in 0..n {
                q[(row, k)] *= phase;
            }
        }
    }
    Ok(TruncatedUnitary::from_orthonormal(q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn diag(values: &[f64]) -> HermitianPsd {
        let n = values.len();
        HermitianPsd::new(CMat::from_fn(n, n, |r, col| {
            if r == col {
                c(values[r])
            } else {
                c(0.0)
            }
        }))
        .unwrap()
    }

    #[test]
    fn eig_of_diagonal_is_sorted_permutation() {
        let eig = hermitian_eig(&diag(&[3.0, 1.0, 4.0, 2.0])).unwrap();
        assert_eq!(eig.values, vec![1.0, 2.0, 3.0, 4.0]);
        // Columns are e2, e4, e1, e3 with unit phase fixed to +1.
        let expected = [1, 3, 0, 2];
        for (col, &row) in expected.iter().enumerate() {
            assert!((eig.vectors[(row, col)] - c(1.0)).norm() < 1e-14);
            assert!((eig.vectors.column(col).norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn eig_of_zero_matrix() {
        let eig = hermitian_eig(&HermitianPsd::zeros(4)).unwrap();
        assert!(eig.values.iter().all(|&v| v == 0.0));
        assert!(orthonormality_error(&eig.vectors) < 1e-12);
    }

    #[test]
    fn eig_reconstructs_gram_matrix() {
        let mut rng = seeded_stream(3, 0);
        let a = random_gaussian_matrix(4, 4, &mut rng).unwrap();
        let q = HermitianPsd::gram(&a.adjoint());
        let eig = hermitian_eig(&q).unwrap();
        let lambda = CMat::from_fn(
            4,
            4,
            |r, col| if r == col { c(eig.values[r]) } else { c(0.0) },
        );
        let rebuilt = &eig.vectors * lambda * eig.vectors.adjoint();
        assert!((rebuilt - q.as_matrix()).norm() <= 1e-8 * q.frobenius_norm());
        assert!(eig.values[0] >= -1e-9 * q.frobenius_norm());
        for k in 0..4 {
            let v = eig.vectors.column(k);
            let residual = q.as_matrix() * v - v * c(eig.values[k]);
            assert!(residual.norm() <= 1e-8 * q.frobenius_norm());
        }
    }

    #[test]
    fn eig_rejects_non_finite() {
        let mut m = CMat::zeros(2, 2);
        m[(0, 0)] = c(f64::NAN);
        assert!(matches!(
            HermitianPsd::new(m.clone()),
            Err(Error::NonFinite(_))
        ));
        let q = HermitianPsd::from_hermitian_part(&m);
        assert!(matches!(hermitian_eig(&q), Err(Error::NonFinite(_))));
    }

    #[test]
    fn hermitian_new_rejects_asymmetric() {
        let mut m = CMat::zeros(2, 2);
        m[(0, 1)] = c(1.0);
        assert!(matches!(HermitianPsd::new(m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn nu_min_of_diagonal_picks_weakest_axes() {
        let q = diag(&[3.0, 1.0, 4.0, 2.0]);
        let mut rng = seeded_stream(0, 0);
        let x = nu_min(&q, 2, &mut rng).unwrap();
        assert!((q.quadratic_form(x.as_matrix()) - 3.0).abs() < 1e-12);
        let p = x.projector();
        let mut expected = CMat::zeros(4, 4);
        expected[(1, 1)] = c(1.0);
        expected[(3, 3)] = c(1.0);
        assert!((p - expected).norm() < 1e-12);
    }

    #[test]
    fn nu_min_of_zero_is_random_draw() {
        let q = HermitianPsd::zeros(4);
        let mut a = seeded_stream(9, 0);
        let mut b = seeded_stream(9, 0);
        let x = nu_min(&q, 2, &mut a).unwrap();
        let y = random_truncated_unitary(4, 2, &mut b).unwrap();
        assert_eq!(x, y);
        assert_eq!(q.quadratic_form(x.as_matrix()), 0.0);
        let mut c2 = seeded_stream(10, 0);
        assert_ne!(x, nu_min(&q, 2, &mut c2).unwrap());
    }

    #[test]
    fn nu_min_leaves_stream_untouched_for_nonzero_input() {
        let q = diag(&[1.0, 2.0, 3.0]);
        let mut a = seeded_stream(1, 0);
        nu_min(&q, 1, &mut a).unwrap();
        let mut b = seeded_stream(1, 0);
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn nu_min_rejects_oversized_d() {
        let mut rng = seeded_stream(0, 0);
        assert!(matches!(
            nu_min(&HermitianPsd::zeros(3), 4, &mut rng),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn gaussian_is_deterministic_per_seed() {
        let a = random_gaussian_matrix(4, 4, &mut seeded_stream(7, 0)).unwrap();
        let b = random_gaussian_matrix(4, 4, &mut seeded_stream(7, 0)).unwrap();
        assert_eq!(a, b);
        let one = random_gaussian_matrix(1, 1, &mut seeded_stream(7, 0)).unwrap();
        assert_eq!(one.shape(), (1, 1));
        assert!(random_gaussian_matrix(0, 2, &mut seeded_stream(7, 0)).is_err());
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = seeded_stream(11, 0);
        let n = 100_000;
        let m = random_gaussian_matrix(n, 1, &mut rng).unwrap();
        let mean = m.iter().sum::<Complex64>() / n as f64;
        let power = m.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        let re_var = m.iter().map(|z| z.re * z.re).sum::<f64>() / n as f64;
        // Std of the sample mean is 1/sqrt(n) per complex entry; |z|^2 is Exp(1) so its std is 1.
        let sigma = 1.0 / (n as f64).sqrt();
        assert!(mean.norm() < 3.0 * sigma);
        assert!((power - 1.0).abs() < 3.0 * sigma);
        // Real part: N(0, 1/2), variance of the squared sample is 2 * (1/2)^2.
        assert!((re_var - 0.5).abs() < 3.0 * (0.5f64).sqrt() * sigma);
    }

    #[test]
    fn haar_draws_are_orthonormal() {
        let mut rng = seeded_stream(5, 0);
        let x = random_truncated_unitary(4, 2, &mut rng).unwrap();
        assert!(x.orthonormality_error() <= 1e-12);
        let u = random_truncated_unitary(3, 3, &mut rng).unwrap();
        assert!((u.as_matrix().determinant().norm() - 1.0).abs() < 1e-10);
        assert!(random_truncated_unitary(2, 3, &mut rng).is_err());
    }

    #[test]
    fn haar_draws_are_isotropic() {
        let (n, p, draws) = (4, 2, 10_000);
        let mut rng = seeded_stream(21, 0);
        let mut sum = CMat::zeros(n, n);
        let mut sum_sq = DMatrix::<f64>::zeros(n, n);
        for _ in 0..draws {
            let proj = random_truncated_unitary(n, p, &mut rng)
                .unwrap()
                .projector();
            sum_sq += proj.map(|z| z.norm_sqr());
            sum += proj;
        }
        let count = draws as f64;
        let target = p as f64 / n as f64;
        for r in 0..n {
            for col in 0..n {
                let mean = sum[(r, col)] / count;
                let var = sum_sq[(r, col)] / count - mean.norm_sqr();
                let sigma = (var / count).sqrt();
                let want = if r == col { target } else { 0.0 };
                assert!(
                    (mean - c(want)).norm() < 3.0 * sigma,
                    "entry ({r},{col}): {mean} vs {want}"
                );
            }
        }
    }

    #[test]
    fn truncated_unitary_validation() {
        assert!(TruncatedUnitary::new(CMat::identity(4, 2)).is_ok());
        assert!(matches!(
            TruncatedUnitary::new(CMat::from_element(2, 1, c(1.0))),
            Err(Error::NotOrthonormal(_))
        ));
        assert!(TruncatedUnitary::new(CMat::identity(2, 3)).is_err());
    }
}
