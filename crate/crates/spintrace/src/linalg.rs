//! Small dense linear-algebra helpers shared across modules.

use crate::{C64, CMat, CVec};
use ndarray::{Array1, Array2, s};
use ndarray_linalg::{Determinant, Eig, Inverse, OperationNorm, Solve};
use rand::Rng;
use rand_distr::StandardNormal;

/// Kronecker product `a (x) b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = CMat::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[(i, j)];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            let mut block = out.slice_mut(s![i * rb..(i + 1) * rb, j * cb..(j + 1) * cb]);
            block.assign(&(b * aij));
        }
    }
    out
}

/// Identity matrix of dimension `n`.
pub fn eye(n: usize) -> CMat {
    CMat::eye(n)
}

/// Max-norm of a matrix.
pub fn max_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Hermiticity residual `max |A - A^dagger|`.
pub fn hermiticity_residual(a: &CMat) -> f64 {
    let at = a.t().mapv(|z| z.conj());
    max_norm(&(a - &at))
}

/// Matrix exponential by scaling and squaring with a Pade(6,6) approximant.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let norm = a.opnorm_one().unwrap_or_else(|_| max_norm(a) * n as f64);
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let a_scaled = a.mapv(|z| z / C64::new(2f64.powi(s), 0.0));

    // Pade(6,6): p(x)/q(x) with q(x) = p(-x).
    let coeffs = [
        1.0,
        0.5,
        0.1136363636363636,
        0.01515151515151515,
        1.262626262626263e-3,
        6.313131313131313e-5,
        1.503126503126503e-6,
    ];
    let mut pow = eye(n);
    let mut p = CMat::zeros((n, n));
    let mut q = CMat::zeros((n, n));
    for (k, &c) in coeffs.iter().enumerate() {
        let term = pow.mapv(|z| z * c);
        p += &term;
        if k % 2 == 0 {
            q += &term;
        } else {
            q -= &term;
        }
        if k < coeffs.len() - 1 {
            pow = pow.dot(&a_scaled);
        }
    }
    let mut r = solve_matrix(&q, &p);
    for _ in 0..s {
        r = r.dot(&r);
    }
    r
}

/// Solve `A X = B` column by column.
pub fn solve_matrix(a: &CMat, b: &CMat) -> CMat {
    let n = b.nrows();
    let m = b.ncols();
    let mut x = CMat::zeros((n, m));
    let lu = a.factorize_solve();
    for j in 0..m {
        let col = b.column(j).to_owned();
        let sol = lu(&col);
        x.column_mut(j).assign(&sol);
    }
    x
}

/// Standard symplectic form `Omega = [[0, I], [-I, 0]]` of dimension `2n`.
pub fn symplectic_form(n: usize) -> CMat {
    let mut omega = CMat::zeros((2 * n, 2 * n));
    for i in 0..n {
        omega[(i, n + i)] = C64::new(1.0, 0.0);
        omega[(n + i, i)] = C64::new(-1.0, 0.0);
    }
    omega
}

/// Residual `max |M^T Omega M - Omega|`.
pub fn symplecticity_residual(m: &CMat) -> f64 {
    let n = m.nrows() / 2;
    let omega = symplectic_form(n);
    let lhs = m.t().dot(&omega).dot(m);
    max_norm(&(&lhs - &omega))
}

/// Symplectic product `x^T Omega y` (plain transpose, no conjugation).
pub fn symplectic_product(x: &CVec, y: &CVec) -> C64 {
    let n = x.len() / 2;
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        acc += x[i] * y[n + i] - x[n + i] * y[i];
    }
    acc
}

/// Random real symplectic matrix `exp(Omega S)` with `S` symmetric Gaussian.
///
/// Exactly symplectic up to roundoff because `Omega S` is Hamiltonian.
pub fn random_symplectic<R: Rng>(two_n: usize, rng: &mut R) -> CMat {
    assert!(two_n % 2 == 0, "dimension must be even");
    let n = two_n / 2;
    let mut s_mat = Array2::<f64>::zeros((two_n, two_n));
    for i in 0..two_n {
        for j in i..two_n {
            let v: f64 = rng.sample(StandardNormal);
            // Scale down so exp stays well conditioned at 2N = 20.
            let v = 0.4 * v;
            s_mat[(i, j)] = v;
            s_mat[(j, i)] = v;
        }
    }
    let omega = symplectic_form(n);
    let s_c = s_mat.mapv(|v| C64::new(v, 0.0));
    expm(&omega.dot(&s_c))
}

/// Determinant of a complex matrix.
pub fn det(a: &CMat) -> C64 {
    a.det().expect("determinant of square matrix")
}

/// Inverse of a complex matrix.
pub fn inv(a: &CMat) -> Result<CMat, crate::SpinError> {
    a.inv().map_err(|e| crate::SpinError::Linalg(e.to_string()))
}

/// Eigenvalues and right eigenvectors of a general complex matrix.
pub fn eig(a: &CMat) -> Result<(CVec, CMat), crate::SpinError> {
    a.eig().map_err(|e| crate::SpinError::Linalg(e.to_string()))
}

/// Least-squares solution of a real overdetermined system via normal-free SVD.
/// Minimum-norm least-squares solution of a complex (possibly singular) system.
pub fn lstsq_complex(a: &CMat, b: &CVec) -> Result<CVec, crate::SpinError> {
    use ndarray_linalg::LeastSquaresSvd;
    let sol = a
        .least_squares(b)
        .map_err(|e| crate::SpinError::Linalg(e.to_string()))?;
    Ok(sol.solution)
}

pub fn lstsq_real(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>, crate::SpinError> {
    use ndarray_linalg::LeastSquaresSvd;
    let sol = a
        .least_squares(b)
        .map_err(|e| crate::SpinError::Linalg(e.to_string()))?;
    Ok(sol.solution)
}

trait FactorizeSolve {
    fn factorize_solve(&self) -> Box<dyn Fn(&CVec) -> CVec + '_>;
}

impl FactorizeSolve for CMat {
    fn factorize_solve(&self) -> Box<dyn Fn(&CVec) -> CVec + '_> {
        Box::new(move |b: &CVec| self.solve(b).expect("linear solve"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kron_of_identities() {
        let a = eye(2);
        let b = eye(3);
        let k = kron(&a, &b);
        assert_abs_diff_eq!(max_norm(&(&k - &eye(6))), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn expm_matches_scalar_rotation() {
        // exp([[0, t], [-t, 0]]) is a rotation by t.
        let t = 0.7;
        let mut a = CMat::zeros((2, 2));
        a[(0, 1)] = C64::new(t, 0.0);
        a[(1, 0)] = C64::new(-t, 0.0);
        let e = expm(&a);
        assert_abs_diff_eq!(e[(0, 0)].re, t.cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(e[(0, 1)].re, t.sin(), epsilon = 1e-12);
    }

    #[test]
    fn expm_large_norm() {
        let mut a = CMat::zeros((2, 2));
        a[(0, 0)] = C64::new(0.0, 12.0);
        a[(1, 1)] = C64::new(0.0, -7.0);
        let e = expm(&a);
        assert_abs_diff_eq!((e[(0, 0)] - C64::new(0.0, 12.0).exp()).norm(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!((e[(1, 1)] - C64::new(0.0, -7.0).exp()).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn random_symplectic_is_symplectic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for two_n in [2usize, 4, 10, 20] {
            let m = random_symplectic(two_n, &mut rng);
            assert!(
                symplecticity_residual(&m) < 1e-10,
                "residual {} at 2N = {}",
                symplecticity_residual(&m),
                two_n
            );
        }
    }

    #[test]
    fn symplectic_product_antisymmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: CVec = (0..6)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let y: CVec = (0..6)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let xy = symplectic_product(&x, &y);
        let yx = symplectic_product(&y, &x);
        assert_abs_diff_eq!((xy + yx).norm(), 0.0, epsilon = 1e-14);
    }
}
