use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a / 2f64.powi(s);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (B[13] * &a6 + B[11] * &a4 + B[9] * &a2) + B[7] * &a6 + B[5] * &a4 + B[3] * &a2 + B[1] * &id;
    let u = &a * u_inner;
    let v = &a6 * (B[12] * &a6 + B[10] * &a4 + B[8] * &a2) + B[6] * &a6 + B[4] * &a4 + B[2] * &a2 + B[0] * &id;
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Padé denominator is nonsingular");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Largest entry of `A - A^T` relative to the largest entry of `A`.
pub fn symmetry_defect(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).amax() / scale
}

/// Solution of `A x = lambda B x` with `B` symmetric positive definite.
/// Eigenvalues ascend; eigenvectors are `B`-orthonormal columns.
#[derive(Debug, Clone)]
pub struct GeneralizedEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn generalized_symmetric_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<GeneralizedEigen> {
    let n = a.nrows();
    let chol = Cholesky::new(b.clone())
        .ok_or_else(|| Error::EigenFailure("right-hand matrix is not positive definite".into()))?;
    let l = chol.l();
    // C = L^{-1} A L^{-T}
    let y = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::EigenFailure("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::EigenFailure("singular Cholesky factor".into()))?;
    let c = 0.5 * (&c + c.transpose());
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut w = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        w.set_column(k, &eig.eigenvectors.column(i));
    }
    let vectors = l
        .transpose()
        .solve_upper_triangular(&w)
        .ok_or_else(|| Error::EigenFailure("singular Cholesky factor".into()))?;
    Ok(GeneralizedEigen { values, vectors })
}

/// Symmetric eigenvalues in ascending order.
pub fn sorted_symmetric_eigenvalues(a: &DMatrix<f64>) -> DVector<f64> {
    let s = 0.5 * (a + a.transpose());
    let mut v: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    DVector::from_vec(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_diagonal_and_rotation() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 0.5, -30.0]));
        let e = expm(&d);
        for (i, l) in [-1.0f64, 0.5, -30.0].iter().enumerate() {
            assert!((e[(i, i)] - l.exp()).abs() < 1e-14 * l.exp().max(1.0));
        }
        let t = 2.3;
        let r = DMatrix::from_row_slice(2, 2, &[0.0, t, -t, 0.0]);
        let e = expm(&r);
        assert!((e[(0, 0)] - t.cos()).abs() < 1e-13);
        assert!((e[(0, 1)] - t.sin()).abs() < 1e-13);
    }

    #[test]
    fn expm_semigroup_property() {
        let a = DMatrix::from_row_slice(3, 3, &[-4.0, 1.0, 0.3, 2.0, -7.0, 1.0, 0.0, 0.5, -1.0]);
        let e1 = expm(&a);
        let e2 = expm(&(0.5 * &a));
        assert!((&e1 - &e2 * &e2).amax() < 1e-13);
    }

    #[test]
    fn generalized_eigen_is_b_orthonormal() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let b = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 4.0, 1.0, 0.0, 1.0, 4.0]);
        let g = generalized_symmetric_eigen(&a, &b).unwrap();
        let gram = g.vectors.transpose() * &b * &g.vectors;
        assert!((gram - DMatrix::identity(3, 3)).amax() < 1e-13);
        for k in 0..3 {
            let v = g.vectors.column(k);
            let res = &a * v - g.values[k] * (&b * v);
            assert!(res.amax() < 1e-13);
        }
        assert!(g.values[0] <= g.values[1] && g.values[1] <= g.values[2]);
    }
}
