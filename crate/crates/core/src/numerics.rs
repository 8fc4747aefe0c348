//! Dense linear-algebra kernels shared by the identification modules.
//!
//! Matrices are plain `nalgebra::DMatrix<f64>` values; the decompositions are
//! nalgebra's, wrapped so that non-finite input and non-convergence surface as
//! [`Error`]s instead of panics or silent NaNs.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative cut-off applied to singular values when forming a pseudoinverse.
pub const DEFAULT_REL_TOL: f64 = 1e-12;

const SVD_MAX_ITER: usize = 10_000;
const SCHUR_MAX_ITER: usize = 100_000;

/// Thin singular value decomposition `M = U diag(s) Vᵀ`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// Left singular vectors, `rows × r`.
    pub u: Matrix,
    /// Singular values in descending order, length `r = min(rows, cols)`.
    pub singular_values: Vector,
    /// Right singular vectors, `cols × r`.
    pub v: Matrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Multiplies the factors back together.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }

    /// Reciprocal singular values, with entries at or below `rel_tol · s_max` set to zero.
    pub fn inverse_singular_values(&self, rel_tol: f64) -> Vector {
        let s_max = self.singular_values.iter().copied().fold(0.0_f64, f64::max);
        let cutoff = rel_tol * s_max;
        self.singular_values
            .map(|s| if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 })
    }

    /// `V diag(1/s) Uᵀ` with small singular values truncated.
    pub fn pseudoinverse(&self, rel_tol: f64) -> Result<Matrix> {
        if !(rel_tol >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "pseudoinverse tolerance must be non-negative, got {rel_tol}"
            )));
        }
        let inv = self.inverse_singular_values(rel_tol);
        let mut v_scaled = self.v.clone();
        for (j, w) in inv.iter().enumerate() {
            v_scaled.column_mut(j).scale_mut(*w);
        }
        Ok(v_scaled * self.u.transpose())
    }
}

pub fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
        let (r, c) = (pos % m.nrows(), pos / m.nrows());
        return Err(Error::InvalidInput(format!(
            "{what} has a non-finite entry at ({r}, {c})"
        )));
    }
    Ok(())
}

/// Full (untruncated) thin SVD with singular values sorted in descending order.
pub fn svd(m: &Matrix) -> Result<SvdFactors> {
    ensure_finite(m, "matrix")?;
    let (rows, cols) = m.shape();
    let r = rows.min(cols);
    if r == 0 {
        return Ok(SvdFactors {
            u: Matrix::zeros(rows, 0),
            singular_values: Vector::zeros(0),
            v: Matrix::zeros(cols, 0),
        });
    }
    let dec = nalgebra::SVD::try_new(m.clone(), true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| {
            Error::NumericalFailure(format!("SVD of {rows}x{cols} matrix did not converge"))
        })?;
    let u = dec
        .u
        .ok_or_else(|| Error::NumericalFailure("SVD returned no left vectors".into()))?;
    let v_t = dec
        .v_t
        .ok_or_else(|| Error::NumericalFailure("SVD returned no right vectors".into()))?;
    Ok(SvdFactors {
        u,
        singular_values: dec.singular_values,
        v: v_t.transpose(),
    })
}

/// Moore-Penrose pseudoinverse through [`svd`].
pub fn pseudoinverse(m: &Matrix, rel_tol: f64) -> Result<Matrix> {
    svd(m)?.pseudoinverse(rel_tol)
}

/// Eigenvalues of a real square matrix (real Schur form), in no particular order.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::InvalidInput(format!(
            "eigenvalues need a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    ensure_finite(m, "matrix")?;
    match m.nrows() {
        0 => Ok(Vec::new()),
        1 => Ok(vec![Complex64::new(m[(0, 0)], 0.0)]),
        _ => {
            let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or_else(|| {
                Error::NumericalFailure(format!(
                    "Schur decomposition of {}x{} matrix did not converge",
                    m.nrows(),
                    m.ncols()
                ))
            })?;
            Ok(schur.complex_eigenvalues().iter().copied().collect())
        }
    }
}

pub fn spectral_radius(eigs: &[Complex64]) -> f64 {
    eigs.iter().map(|l| l.norm()).fold(0.0, f64::max)
}

/// Stacks matrices with equal column counts on top of each other.
pub fn vstack(blocks: &[&Matrix]) -> Result<Matrix> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    if blocks.iter().any(|b| b.ncols() != cols) {
        return Err(Error::InvalidInput("vstack: column counts differ".into()));
    }
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        out.view_mut((r0, 0), (b.nrows(), cols)).copy_from(*b);
        r0 += b.nrows();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    mod approx_eq {
        use super::Matrix;
        pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
            assert_eq!(a.shape(), b.shape());
            a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        }
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn svd_of_identity() {
        let f = svd(&Matrix::identity(3, 3)).unwrap();
        assert_eq!(f.singular_values.as_slice(), &[1.0, 1.0, 1.0]);
        assert!(max_abs_diff(&f.reconstruct(), &Matrix::identity(3, 3)) < 1e-15);
    }

    #[test]
    fn svd_of_diagonal_is_sorted() {
        let m = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 3.0]);
        let f = svd(&m).unwrap();
        assert_eq!(f.singular_values.as_slice(), &[3.0, 0.0]);
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![3.0, 0.0]));
        assert_eq!(svd(&m).unwrap().singular_values.as_slice(), &[3.0, 0.0]);
    }

    #[test]
    fn svd_reconstructs_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(r, c) in &[(4, 3), (3, 4), (10, 2), (1, 5), (6, 6)] {
            let m = random_matrix(&mut rng, r, c);
            let f = svd(&m).unwrap();
            let err = (f.reconstruct() - &m).norm();
            assert!(err < 1e-10 * m.norm(), "{r}x{c}: {err}");
            let utu = f.u.transpose() * &f.u;
            let vtv = f.v.transpose() * &f.v;
            let k = f.rank();
            assert!(max_abs_diff(&utu, &Matrix::identity(k, k)) < 1e-10);
            assert!(max_abs_diff(&vtv, &Matrix::identity(k, k)) < 1e-10);
            assert!(f.singular_values.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut m = Matrix::identity(2, 2);
        m[(1, 0)] = f64::NAN;
        assert!(matches!(svd(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn pinv_of_diagonal_and_identity() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.0]));
        let p = pseudoinverse(&m, DEFAULT_REL_TOL).unwrap();
        assert!(max_abs_diff(&p, &Matrix::from_diagonal(&Vector::from_vec(vec![0.5, 0.0]))) < 1e-15);
        let p = pseudoinverse(&Matrix::identity(2, 2), DEFAULT_REL_TOL).unwrap();
        assert!(max_abs_diff(&p, &Matrix::identity(2, 2)) < 1e-15);
    }

    #[test]
    fn pinv_of_zero_matrix_is_zero() {
        let p = pseudoinverse(&Matrix::zeros(3, 2), DEFAULT_REL_TOL).unwrap();
        assert_eq!(p.shape(), (2, 3));
        assert!(p.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pinv_matches_normal_equations_for_full_rank_tall() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = random_matrix(&mut rng, 3, 2);
            let p = pseudoinverse(&m, DEFAULT_REL_TOL).unwrap();
            let mtm_inv = (m.transpose() * &m).try_inverse().unwrap();
            let oracle = mtm_inv * m.transpose();
            assert!(max_abs_diff(&p, &oracle) < 1e-10);
            assert!(max_abs_diff(&(&p * &m), &Matrix::identity(2, 2)) < 1e-8);
        }
    }

    #[test]
    fn pinv_satisfies_penrose_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(r, c) in &[(5, 3), (3, 5), (4, 4)] {
            // rank-deficient: product of thin factors
            let m = random_matrix(&mut rng, r, 2) * random_matrix(&mut rng, 2, c);
            let p = pseudoinverse(&m, DEFAULT_REL_TOL).unwrap();
            let mpm = &m * &p * &m;
            let pmp = &p * &m * &p;
            let mp = &m * &p;
            let pm = &p * &m;
            assert!(max_abs_diff(&mpm, &m) < 1e-8);
            assert!(max_abs_diff(&pmp, &p) < 1e-8);
            assert!(max_abs_diff(&mp, &mp.transpose()) < 1e-8);
            assert!(max_abs_diff(&pm, &pm.transpose()) < 1e-8);
        }
    }

    #[test]
    fn pinv_rejects_negative_tolerance() {
        let f = svd(&Matrix::identity(2, 2)).unwrap();
        assert!(f.pseudoinverse(-1.0).is_err());
    }

    #[test]
    fn singular_values_are_roots_of_gram_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_matrix(&mut rng, 6, 4);
        let s = svd(&m).unwrap().singular_values;
        let mut gram_eigs: Vec<f64> = (m.transpose() * &m)
            .symmetric_eigenvalues()
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .collect();
        gram_eigs.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in s.iter().zip(&gram_eigs) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn eigenvalues_of_diagonal_and_rotation() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![0.5, -0.2]));
        let mut e: Vec<f64> = eigenvalues(&m).unwrap().iter().map(|c| c.re).collect();
        e.sort_by(f64::total_cmp);
        assert!((e[0] + 0.2).abs() < 1e-15 && (e[1] - 0.5).abs() < 1e-15);

        let rot = Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let e = eigenvalues(&rot).unwrap();
        assert_eq!(e.len(), 2);
        for l in &e {
            assert!(l.re.abs() < 1e-14 && (l.im.abs() - 1.0).abs() < 1e-14);
        }
        assert!((e[0].im + e[1].im).abs() < 1e-14);
    }

    #[test]
    fn eigenvalues_reject_non_square() {
        assert!(matches!(
            eigenvalues(&Matrix::zeros(2, 3)),
            Err(Error::InvalidInput(_))
        ));
    }

    /// Characteristic polynomial by Faddeev-LeVerrier, monic, highest degree first.
    fn char_poly(m: &Matrix) -> Vec<f64> {
        let n = m.nrows();
        let mut coeffs = vec![1.0];
        let mut mk = Matrix::zeros(n, n);
        let id = Matrix::identity(n, n);
        let mut c = 1.0;
        for k in 1..=n {
            mk = m * (&mk + &id * c);
            c = -mk.trace() / k as f64;
            coeffs.push(c);
        }
        coeffs
    }

    /// Durand-Kerner simultaneous root iteration followed by Newton polishing.
    fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
        let n = coeffs.len() - 1;
        let eval = |z: Complex64| coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c);
        let deriv = |z: Complex64| {
            coeffs[..n]
                .iter()
                .enumerate()
                .fold(Complex64::new(0.0, 0.0), |acc, (i, c)| acc * z + c * (n - i) as f64)
        };
        let seed = Complex64::new(0.4, 0.9);
        let mut roots: Vec<Complex64> = (0..n).map(|i| seed.powu(i as u32)).collect();
        for _ in 0..2000 {
            for i in 0..n {
                let mut denom = Complex64::new(1.0, 0.0);
                for j in 0..n {
                    if i != j {
                        denom *= roots[i] - roots[j];
                    }
                }
                let ri = roots[i];
                roots[i] = ri - eval(ri) / denom;
            }
        }
        for r in roots.iter_mut() {
            for _ in 0..5 {
                let d = deriv(*r);
                if d.norm() > 0.0 {
                    *r = *r - eval(*r) / d;
                }
            }
        }
        roots
    }

    #[test]
    fn eigenvalues_match_characteristic_polynomial_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let m = random_matrix(&mut rng, 5, 5);
            let mut got = eigenvalues(&m).unwrap();
            let mut want = poly_roots(&char_poly(&m));
            let key = |c: &Complex64| (c.re * 1e6).round() as i64 * 10_000_000 + (c.im * 1e6).round() as i64;
            got.sort_by_key(key);
            want.sort_by_key(key);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).norm() < 1e-8, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn eigenvalues_annihilate_shifted_matrix() {
        // smallest singular value of (M - λI) vanishes at every returned eigenvalue
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_matrix(&mut rng, 6, 6);
        let mc = m.map(|v| Complex64::new(v, 0.0));
        for l in eigenvalues(&m).unwrap() {
            let shifted = &mc - nalgebra::DMatrix::<Complex64>::identity(6, 6) * l;
            let smin = shifted.singular_values().iter().copied().fold(f64::INFINITY, f64::min);
            assert!(smin < 1e-8 * m.norm(), "{smin}");
        }
    }

    #[test]
    fn vstack_checks_columns() {
        let a = Matrix::identity(2, 2);
        let b = Matrix::zeros(1, 2);
        let s = vstack(&[&a, &b]).unwrap();
        assert_eq!(s.shape(), (3, 2));
        assert!(vstack(&[&a, &Matrix::zeros(1, 3)]).is_err());
    }
}
