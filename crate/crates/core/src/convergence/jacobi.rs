//! Cyclic Jacobi eigensolver for small dense symmetric matrices.

use nalgebra::{DMatrix, DVector};

use super::ConvergenceError;

/// Eigenvalues in ascending order, eigenvectors as matching columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

const MAX_SWEEPS: usize = 100;

/// Largest `|m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn check(m: &DMatrix<f64>) -> Result<(), ConvergenceError> {
    if !m.is_square() {
        return Err(ConvergenceError::NotSquare(m.nrows(), m.ncols()));
    }
    let asym = asymmetry(m);
    let scale = m.amax().max(1.0);
    if !(asym <= 1e-12 * scale) {
        return Err(ConvergenceError::Asymmetric(asym));
    }
    Ok(())
}

fn off_diagonal_norm2(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    2.0 * s
}

fn sweep(a: &mut DMatrix<f64>, mut v: Option<&mut DMatrix<f64>>) {
    let n = a.nrows();
    for p in 0..n {
        for q in (p + 1)..n {
            let apq = a[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..n {
                let (akp, akq) = (a[(k, p)], a[(k, q)]);
                a[(k, p)] = c * akp - s * akq;
                a[(k, q)] = s * akp + c * akq;
            }
            for k in 0..n {
                let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                a[(p, k)] = c * apk - s * aqk;
                a[(q, k)] = s * apk + c * aqk;
            }
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
            if let Some(v) = v.as_deref_mut() {
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
}

fn diagonalize(m: &DMatrix<f64>, vectors: bool) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = vectors.then(|| DMatrix::identity(n, n));
    let frob2 = m.norm_squared();
    for _ in 0..MAX_SWEEPS {
        let off = off_diagonal_norm2(&a);
        if off <= 1e-32 * frob2 || off == 0.0 {
            break;
        }
        sweep(&mut a, v.as_mut());
    }
    (a, v)
}

/// Full eigendecomposition of a symmetric matrix.
pub fn jacobi_eigen(m: &DMatrix<f64>) -> Result<Eigen, ConvergenceError> {
    check(m)?;
    let n = m.nrows();
    let (a, v) = diagonalize(m, true);
    let v = v.expect("vectors requested");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(Eigen { values, vectors })
}

/// Eigenvalues only, ascending.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Result<DVector<f64>, ConvergenceError> {
    check(m)?;
    let (a, _) = diagonalize(m, false);
    let mut values: Vec<f64> = a.diagonal().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(DVector::from_vec(values))
}

/// Smallest eigenvalue. `m` is positive semidefinite iff this is `>= -tol`.
pub fn psd_margin(m: &DMatrix<f64>) -> Result<f64, ConvergenceError> {
    if m.nrows() == 0 {
        return Ok(f64::INFINITY);
    }
    Ok(jacobi_eigenvalues(m)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-3.0..3.0));
        (&a + a.transpose()) * 0.5
    }

    #[test]
    fn identity_margin_is_one() {
        assert_eq!(psd_margin(&DMatrix::identity(4, 4)).unwrap(), 1.0);
    }

    #[test]
    fn diagonal_margin() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -2.0]));
        assert_eq!(psd_margin(&m).unwrap(), -2.0);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.1, 1.0]);
        assert!(matches!(psd_margin(&m), Err(ConvergenceError::Asymmetric(_))));
    }

    #[test]
    fn two_by_two_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let m = random_symmetric(&mut rng, 2);
            let (a, b, d) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
            let mid = 0.5 * (a + d);
            let rad = (0.25 * (a - d).powi(2) + b * b).sqrt();
            let e = jacobi_eigenvalues(&m).unwrap();
            assert_relative_eq!(e[0], mid - rad, epsilon = 1e-10);
            assert_relative_eq!(e[1], mid + rad, epsilon = 1e-10);
        }
    }

    #[test]
    fn vectors_satisfy_eigen_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in [1, 3, 7, 20, 35] {
            let m = random_symmetric(&mut rng, n);
            let e = jacobi_eigen(&m).unwrap();
            for k in 0..n {
                let v = e.vectors.column(k);
                let r = &m * v - v * e.values[k];
                assert!(r.amax() <= 1e-8, "n {n} k {k}: {}", r.amax());
            }
            let vtv = e.vectors.transpose() * &e.vectors;
            assert!((vtv - DMatrix::identity(n, n)).amax() < 1e-10);
        }
    }

    #[test]
    fn agrees_with_library_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let m = random_symmetric(&mut rng, 9);
            let mut lib: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
            lib.sort_by(f64::total_cmp);
            let ours = jacobi_eigenvalues(&m).unwrap();
            for (a, b) in ours.iter().zip(&lib) {
                assert_relative_eq!(*a, *b, epsilon = 1e-10);
            }
        }
    }
}
