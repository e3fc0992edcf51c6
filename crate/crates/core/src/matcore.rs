//! Dense Hermitian/PSD linear-algebra kernel.
//!
//! Everything spectral goes through [`eig_herm`]; operator functions
//! (square roots, inverse square roots) are computed from the
//! eigendecomposition. Matrices here are small (n rarely above 4), so
//! determinism and tight invariant checks win over speed.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::{CMatrix, C64};

/// Ingestion tolerance for "Hermitian up to roundoff".
pub const HERMITIAN_INGEST_TOL: f64 = 1e-12;

/// Eigenvalues in `[-CLAMP_TOL, 0)` are treated as roundoff and clamped to 0
/// by [`psd_sqrt`]; anything below is a genuine positivity violation.
pub const CLAMP_TOL: f64 = 1e-10;

/// An `n×n` complex Hermitian matrix. Construction symmetrizes the entries,
/// so `entries[j][k] == conj(entries[k][j])` holds exactly afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    mat: CMatrix,
}

impl HermitianMatrix {
    /// Wraps a matrix that is Hermitian within [`HERMITIAN_INGEST_TOL`]
    /// (scaled by the largest entry magnitude), then symmetrizes exactly.
    pub fn new(mat: CMatrix) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} matrix is not square",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let scale = mat.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
        let mut deviation = 0.0_f64;
        for j in 0..mat.nrows() {
            for k in 0..=j {
                deviation = deviation.max((mat[(j, k)] - mat[(k, j)].conj()).norm());
            }
        }
        if deviation > HERMITIAN_INGEST_TOL * scale {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self::symmetrize(mat))
    }

    /// Symmetrizes `(A + A*)/2` without a Hermiticity check.
    pub fn symmetrize(mat: CMatrix) -> Self {
        let adj = mat.adjoint();
        let mut sym = (mat + adj) * C64::new(0.5, 0.0);
        for j in 0..sym.nrows() {
            let d = sym[(j, j)].re;
            sym[(j, j)] = C64::new(d, 0.0);
        }
        HermitianMatrix { mat: sym }
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut mat = CMatrix::zeros(n, n);
        for (j, &d) in diag.iter().enumerate() {
            mat[(j, j)] = C64::new(d, 0.0);
        }
        HermitianMatrix { mat }
    }

    pub fn identity(n: usize) -> Self {
        HermitianMatrix {
            mat: CMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    fn is_exactly_diagonal(&self) -> bool {
        let n = self.dim();
        for j in 0..n {
            for k in 0..n {
                if j != k && self.mat[(j, k)] != C64::new(0.0, 0.0) {
                    return false;
                }
            }
        }
        true
    }
}

/// Eigendecomposition `A = U diag(λ) U*` with `λ` ascending and `U` unitary.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors, ordered like `eigenvalues`.
    pub eigenvectors: CMatrix,
}

impl SpectralDecomposition {
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("nonempty spectrum")
    }

    /// Applies `f` to the spectrum: `U diag(f(λ)) U*`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> HermitianMatrix {
        let n = self.eigenvalues.len();
        let mut diag = CMatrix::zeros(n, n);
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            diag[(j, j)] = C64::new(f(lam), 0.0);
        }
        let u = &self.eigenvectors;
        HermitianMatrix::symmetrize(u * diag * u.adjoint())
    }
}

const EIG_MAX_ITER: usize = 4096;
const RECONSTRUCT_TOL: f64 = 1e-10;

/// Hermitian eigendecomposition with ascending eigenvalues.
///
/// Exactly diagonal input takes an exact path (sorted diagonal, permutation
/// eigenvectors), which keeps quantities like the spectral margin of a
/// diagonal density free of eigensolver noise.
pub fn eig_herm(a: &HermitianMatrix) -> Result<SpectralDecomposition> {
    let n = a.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if a.is_exactly_diagonal() {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            a.mat[(i, i)]
                .re
                .partial_cmp(&a.mat[(j, j)].re)
                .expect("diagonal entries are finite")
        });
        let eigenvalues: Vec<f64> = order.iter().map(|&i| a.mat[(i, i)].re).collect();
        let mut u = CMatrix::zeros(n, n);
        for (col, &i) in order.iter().enumerate() {
            u[(i, col)] = C64::new(1.0, 0.0);
        }
        return Ok(SpectralDecomposition {
            eigenvalues,
            eigenvectors: u,
        });
    }

    let eig = a
        .mat
        .clone()
        .try_symmetric_eigen(f64::EPSILON, EIG_MAX_ITER)
        .ok_or_else(|| {
            // Residual of the best-effort decomposition is not recoverable
            // from nalgebra here; report the scale instead.
            Error::NonConvergence {
                residual: op_norm(&a.mat),
            }
        })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .expect("eigenvalues are finite")
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut u = CMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        u.set_column(col, &eig.eigenvectors.column(i));
    }

    let decomp = SpectralDecomposition {
        eigenvalues,
        eigenvectors: u,
    };
    let scale = f64::max(1.0, op_norm(&a.mat));
    let residual = reconstruction_residual(a, &decomp);
    if residual > RECONSTRUCT_TOL * scale || unitarity_defect(&decomp.eigenvectors) > RECONSTRUCT_TOL
    {
        return Err(Error::NonConvergence { residual });
    }
    Ok(decomp)
}

fn reconstruction_residual(a: &HermitianMatrix, d: &SpectralDecomposition) -> f64 {
    let n = a.dim();
    let mut diag = CMatrix::zeros(n, n);
    for (j, &lam) in d.eigenvalues.iter().enumerate() {
        diag[(j, j)] = C64::new(lam, 0.0);
    }
    let rebuilt = &d.eigenvectors * diag * d.eigenvectors.adjoint();
    op_norm(&(rebuilt - &a.mat))
}

fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    op_norm(&(u.adjoint() * u - CMatrix::identity(n, n)))
}

/// Positive square root of a PSD matrix. Eigenvalues in `[-1e-10, 0)` are
/// clamped to zero; anything lower is a [`Error::NotPsd`].
pub fn psd_sqrt(a: &HermitianMatrix) -> Result<HermitianMatrix> {
    let decomp = eig_herm(a)?;
    let min = decomp.min_eigenvalue();
    if min < -CLAMP_TOL {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    Ok(decomp.map_spectrum(|lam| lam.max(0.0).sqrt()))
}

/// Inverse square root of a PSD matrix whose spectrum is known to stay at or
/// above `floor > 0`.
pub fn psd_inv_sqrt(a: &HermitianMatrix, floor: f64) -> Result<HermitianMatrix> {
    if floor <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "spectral floor must be positive, got {floor}"
        )));
    }
    let decomp = eig_herm(a)?;
    let min = decomp.min_eigenvalue();
    // Tiny relative slack so a spectrum sitting exactly on the floor passes.
    if min < floor * (1.0 - 1e-12) {
        return Err(Error::SpectralFloorViolation {
            min_eigenvalue: min,
            floor,
        });
    }
    Ok(decomp.map_spectrum(|lam| 1.0 / lam.sqrt()))
}

/// Operator norm (largest singular value) of a general complex matrix.
pub fn op_norm(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let mut diagonal = true;
    'scan: for j in 0..a.nrows() {
        for k in 0..a.ncols() {
            if j != k && a[(j, k)] != C64::new(0.0, 0.0) {
                diagonal = false;
                break 'scan;
            }
        }
    }
    if diagonal {
        let mut best = 0.0_f64;
        for j in 0..a.nrows().min(a.ncols()) {
            best = best.max(a[(j, j)].norm());
        }
        return best;
    }
    a.singular_values().iter().fold(0.0_f64, |acc, &s| acc.max(s))
}

/// Outcome of a positivity test: the minimal eigenvalue and its eigenvector
/// serve as the witness either way.
#[derive(Debug, Clone)]
pub struct PsdCheck {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
    pub witness: DVector<Complex64>,
}

/// True iff `λ_min(A) ≥ -tol`.
pub fn is_psd(a: &HermitianMatrix, tol: f64) -> Result<PsdCheck> {
    let decomp = eig_herm(a)?;
    let min = decomp.min_eigenvalue();
    Ok(PsdCheck {
        is_psd: min >= -tol,
        min_eigenvalue: min,
        witness: decomp.eigenvectors.column(0).into_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn herm(rows: &[&[(f64, f64)]]) -> HermitianMatrix {
        let n = rows.len();
        let mut m = CMatrix::zeros(n, n);
        for (j, row) in rows.iter().enumerate() {
            for (k, &(re, im)) in row.iter().enumerate() {
                m[(j, k)] = C64::new(re, im);
            }
        }
        HermitianMatrix::new(m).expect("test matrix must be Hermitian")
    }

    #[test]
    fn eig_diagonal_is_exact() {
        let a = HermitianMatrix::from_real_diag(&[3.0, 1.0]);
        let d = eig_herm(&a).unwrap();
        assert_eq!(d.eigenvalues, vec![1.0, 3.0]);
        // Eigenvectors are a permutation of identity columns.
        for col in 0..2 {
            let ones: Vec<_> = (0..2).filter(|&r| d.eigenvectors[(r, col)] != C64::ZERO).collect();
            assert_eq!(ones.len(), 1);
            assert_eq!(d.eigenvectors[(ones[0], col)], C64::new(1.0, 0.0));
        }
    }

    #[test]
    fn eig_identity() {
        let d = eig_herm(&HermitianMatrix::identity(2)).unwrap();
        assert_eq!(d.eigenvalues, vec![1.0, 1.0]);
    }

    #[test]
    fn eig_offdiagonal_symbol() {
        // Characteristic polynomial of [[0,1],[1,0]] is λ² − 1.
        let a = herm(&[&[(0.0, 0.0), (1.0, 0.0)], &[(1.0, 0.0), (0.0, 0.0)]]);
        let d = eig_herm(&a).unwrap();
        assert_relative_eq!(d.eigenvalues[0], -1.0, max_relative = 1e-12);
        assert_relative_eq!(d.eigenvalues[1], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn sqrt_of_diagonal() {
        let a = HermitianMatrix::from_real_diag(&[4.0, 9.0]);
        let s = psd_sqrt(&a).unwrap();
        assert_eq!(s.matrix()[(0, 0)], C64::new(2.0, 0.0));
        assert_eq!(s.matrix()[(1, 1)], C64::new(3.0, 0.0));
    }

    #[test]
    fn sqrt_identity_fixed() {
        for n in 1..=4 {
            let s = psd_sqrt(&HermitianMatrix::identity(n)).unwrap();
            assert!(op_norm(&(s.matrix() - CMatrix::identity(n, n))) < 1e-12);
        }
    }

    #[test]
    fn sqrt_rejects_negative() {
        let a = HermitianMatrix::from_real_diag(&[1.0, -0.5]);
        match psd_sqrt(&a) {
            Err(Error::NotPsd { min_eigenvalue }) => assert_relative_eq!(min_eigenvalue, -0.5),
            other => panic!("expected NotPsd, got {other:?}"),
        }
    }

    #[test]
    fn inv_sqrt_diagonal() {
        let a = HermitianMatrix::from_real_diag(&[4.0, 16.0]);
        let s = psd_inv_sqrt(&a, 1.0).unwrap();
        assert_relative_eq!(s.matrix()[(0, 0)].re, 0.5, max_relative = 1e-12);
        assert_relative_eq!(s.matrix()[(1, 1)].re, 0.25, max_relative = 1e-12);
    }

    #[test]
    fn inv_sqrt_identity() {
        let s = psd_inv_sqrt(&HermitianMatrix::identity(3), 0.5).unwrap();
        assert!(op_norm(&(s.matrix() - CMatrix::identity(3, 3))) < 1e-12);
    }

    #[test]
    fn inv_sqrt_enforces_floor() {
        let a = HermitianMatrix::from_real_diag(&[0.3, 2.0]);
        match psd_inv_sqrt(&a, 0.5) {
            Err(Error::SpectralFloorViolation { min_eigenvalue, floor }) => {
                assert_relative_eq!(min_eigenvalue, 0.3);
                assert_relative_eq!(floor, 0.5);
            }
            other => panic!("expected SpectralFloorViolation, got {other:?}"),
        }
    }

    #[test]
    fn inv_sqrt_multiply_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let a = gen::random_psd(&mut rng, 3, 0.1, 2.0);
            let s = psd_inv_sqrt(&a, 0.1).unwrap();
            let back = s.matrix() * a.matrix() * s.matrix();
            assert!(op_norm(&(back - CMatrix::identity(3, 3))) < 1e-8 * (1.0 / 0.1));
        }
    }

    #[test]
    fn op_norm_examples() {
        let a = CMatrix::from_row_slice(2, 2, &[
            C64::new(2.0, 0.0), C64::ZERO,
            C64::ZERO, C64::new(-5.0, 0.0),
        ]);
        assert_eq!(op_norm(&a), 5.0);
        assert_eq!(op_norm(&CMatrix::zeros(3, 3)), 0.0);
        // Nilpotent Jordan-type block: singular values are {3, 0}.
        let b = CMatrix::from_row_slice(2, 2, &[
            C64::ZERO, C64::new(3.0, 0.0),
            C64::ZERO, C64::ZERO,
        ]);
        assert_relative_eq!(op_norm(&b), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn is_psd_examples() {
        let check = is_psd(&HermitianMatrix::identity(4), 0.0).unwrap();
        assert!(check.is_psd);

        let check = is_psd(&HermitianMatrix::from_real_diag(&[1.0, -0.1]), 1e-9).unwrap();
        assert!(!check.is_psd);
        assert_relative_eq!(check.min_eigenvalue, -0.1);

        // Twice a rank-1 projector: eigenvalues {0, 2}.
        let ones = herm(&[&[(1.0, 0.0), (1.0, 0.0)], &[(1.0, 0.0), (1.0, 0.0)]]);
        let check = is_psd(&ones, 0.0).unwrap();
        assert!(check.is_psd, "min eigenvalue {}", check.min_eigenvalue);
    }

    #[test]
    fn sqrt_multiply_back_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..500 {
            let n = 2 + trial % 3;
            let a = gen::random_psd(&mut rng, n, 0.0, 2.0);
            let s = psd_sqrt(&a).unwrap();
            let back = s.matrix() * s.matrix();
            let scale = f64::max(1.0, op_norm(a.matrix()));
            assert!(
                op_norm(&(back - a.matrix())) <= 1e-9 * scale,
                "multiply-back failed at trial {trial}"
            );
        }
    }

    /// `‖A^{-1/2} − B^{-1/2}‖ ≤ s^{-1}·‖A−B‖^{1/2}` for spectra in `[s, M]`.
    #[test]
    fn inverse_root_modulus_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..1000 {
            let n = 2 + trial % 3;
            let s = 0.1 + 0.4 * (trial % 7) as f64 / 7.0;
            let a = gen::random_psd(&mut rng, n, s, 2.0);
            let b = gen::random_psd(&mut rng, n, s, 2.0);
            let ia = psd_inv_sqrt(&a, s).unwrap();
            let ib = psd_inv_sqrt(&b, s).unwrap();
            let lhs = op_norm(&(ia.matrix() - ib.matrix()));
            let rhs = op_norm(&(a.matrix() - b.matrix())).sqrt() / s;
            assert!(
                lhs <= rhs + 1e-10,
                "modulus violated at trial {trial}: {lhs} > {rhs}"
            );
        }
    }

    #[test]
    fn op_norm_submultiplicative_and_unitarily_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let a = gen::random_matrix(&mut rng, 3);
            let b = gen::random_matrix(&mut rng, 3);
            assert!(op_norm(&(&a * &b)) <= op_norm(&a) * op_norm(&b) + 1e-10);
            let u = gen::random_unitary(&mut rng, 3);
            let conj = &u * &a * u.adjoint();
            assert_relative_eq!(op_norm(&conj), op_norm(&a), max_relative = 1e-9);
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[
            C64::new(1.0, 0.0), C64::new(2.0, 0.0),
            C64::new(0.5, 0.0), C64::new(1.0, 0.0),
        ]);
        assert!(matches!(HermitianMatrix::new(m), Err(Error::NotHermitian { .. })));
    }
}
