use super::Matrix;
use crate::{Error, Result};

/// Sweeps stop once the off-diagonal Frobenius norm falls below this
/// fraction of the input's Frobenius norm.
pub const JACOBI_OFF_DIAGONAL_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

const SYMMETRY_TOL: f64 = 1e-8;

/// Eigenpairs of a real symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    /// Sorted in descending order.
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the unit eigenvector for `eigenvalues[i]`.
    pub eigenvectors: Matrix,
}

impl EigenDecomposition {
    pub fn eigenvector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.column(i)
    }

    /// `V Λ Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        Matrix::from_fn(n, n, |i, j| {
            (0..n).map(|k| v.get(i, k) * self.eigenvalues[k] * v.get(j, k)).sum()
        })
    }
}

/// Cyclic Jacobi eigendecomposition.
///
/// The input is symmetrized as `(M + Mᵀ) / 2`; inputs whose asymmetry exceeds
/// `1e-8` (scaled by the largest entry when that exceeds one) are rejected.
pub fn symmetric_eigen(m: &Matrix) -> Result<EigenDecomposition> {
    let n = m.rows();
    if !m.is_square() {
        return Err(Error::shape("symmetric_eigen", m.shape(), (m.cols(), m.rows())));
    }
    let scale = m.as_slice().iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let asym = m.asymmetry().unwrap_or(0.0);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Domain(format!(
            "symmetric_eigen: input asymmetry {asym:e} exceeds tolerance"
        )));
    }

    let mut a = Matrix::from_fn(n, n, |i, j| 0.5 * (m.get(i, j) + m.get(j, i)));
    let mut v = Matrix::identity(n);
    let threshold = JACOBI_OFF_DIAGONAL_TOL * a.frobenius_norm();

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&a);
        if off <= threshold {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::Convergence { sweeps, residual: off });
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
        sweeps += 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).total_cmp(&a.get(i, i)));
    let eigenvalues = order.iter().map(|&i| a.get(i, i)).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let norm = (0..n).map(|r| v.get(r, src).powi(2)).sum::<f64>().sqrt();
        for r in 0..n {
            eigenvectors.set(r, dst, v.get(r, src) / norm);
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a.get(i, j).powi(2);
            }
        }
    }
    s.sqrt()
}

/// One symmetric Schur rotation annihilating `a[p][q]`; accumulates into `v`.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a.get(p, q);
    if apq == 0.0 {
        return;
    }
    let n = a.rows();
    let (app, aqq) = (a.get(p, p), a.get(q, q));
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
    let c = 1.0 / t.hypot(1.0);
    let s = t * c;

    for k in 0..n {
        let (akp, akq) = (a.get(k, p), a.get(k, q));
        a.set(k, p, c * akp - s * akq);
        a.set(k, q, s * akp + c * akq);
    }
    for k in 0..n {
        let (apk, aqk) = (a.get(p, k), a.get(q, k));
        a.set(p, k, c * apk - s * aqk);
        a.set(q, k, s * apk + c * aqk);
    }
    a.set(p, p, app - t * apq);
    a.set(q, q, aqq + t * apq);
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);

    for k in 0..n {
        let (vkp, vkq) = (v.get(k, p), v.get(k, q));
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        Matrix::from_fn(n, n, |i, j| a.get(i, j) + a.get(j, i))
    }

    fn orthogonality_defect(v: &Matrix) -> f64 {
        v.t_matmul(v)
            .unwrap()
            .sub(&Matrix::identity(v.cols()))
            .unwrap()
            .frobenius_norm()
    }

    #[test]
    fn diagonal_input() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let e = symmetric_eigen(&m).unwrap();
        assert_eq!(e.eigenvalues, vec![2.0, 1.0]);
        assert_eq!(e.eigenvector(0)[1].abs(), 1.0);
        assert_eq!(e.eigenvector(1)[0].abs(), 1.0);
    }

    #[test]
    fn swap_matrix() {
        let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let e = symmetric_eigen(&m).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-15);
        assert!((e.eigenvalues[1] + 1.0).abs() < 1e-15);
        let v0 = e.eigenvector(0);
        assert!((v0[0] - v0[1]).abs() < 1e-15);
    }

    #[test]
    fn random_reconstruction() {
        let m = random_symmetric(10, 3);
        let e = symmetric_eigen(&m).unwrap();
        let rel = e.reconstruct().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
        assert!(rel <= 1e-8, "{rel}");
        assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn handles_zero_and_empty() {
        let e = symmetric_eigen(&Matrix::zeros(3, 3)).unwrap();
        assert_eq!(e.eigenvalues, vec![0.0; 3]);
        assert_eq!(e.eigenvectors, Matrix::identity(3));
        assert!(symmetric_eigen(&Matrix::zeros(0, 0)).unwrap().eigenvalues.is_empty());
    }

    #[test]
    fn converges_on_large_scale_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x = Matrix::from_fn(40, 60, |_, _| rng.random_range(-30.0..30.0));
        let g = x.matmul_t(&x).unwrap();
        let e = symmetric_eigen(&g).unwrap();
        let rel = e.reconstruct().sub(&g).unwrap().frobenius_norm() / g.frobenius_norm();
        assert!(rel <= 1e-8);
        assert!(orthogonality_defect(&e.eigenvectors) <= 1e-8);
    }

    #[test]
    fn rejects_non_square_and_asymmetric() {
        assert!(matches!(
            symmetric_eigen(&Matrix::zeros(2, 3)),
            Err(Error::Shape { .. })
        ));
        let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(symmetric_eigen(&m), Err(Error::Domain(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn eigen_invariants(n in 1usize..16, seed in 0u64..1000) {
            let m = random_symmetric(n, seed);
            let e = symmetric_eigen(&m).unwrap();
            prop_assert!(orthogonality_defect(&e.eigenvectors) <= 1e-8);
            let trace_gap = (m.trace() - e.eigenvalues.iter().sum::<f64>()).abs();
            prop_assert!(trace_gap <= 1e-8);
            for i in 0..n {
                let norm: f64 = e.eigenvector(i).iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!((norm - 1.0).abs() <= 1e-10);
                for j in i + 1..n {
                    let d: f64 = e.eigenvector(i).iter().zip(e.eigenvector(j)).map(|(a, b)| a * b).sum();
                    prop_assert!(d.abs() <= 1e-8);
                }
            }
            let rel = e.reconstruct().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm().max(1e-300);
            prop_assert!(rel <= 1e-8);
        }
    }
}
