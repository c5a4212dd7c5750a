use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};

use crate::error::{Error, Result};

pub fn csr_from_triplets(
    nrows: usize,
    ncols: usize,
    triplets: impl IntoIterator<Item = (usize, usize, f64)>,
) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(nrows, ncols);
    for (i, j, v) in triplets {
        coo.push(i, j, v);
    }
    CsrMatrix::from(&coo)
}

/// Sparse matrix-vector product.
pub fn spmv(a: &CsrMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    assert_eq!(a.ncols(), x.len(), "spmv dimension mismatch");
    let offsets = a.row_offsets();
    let cols = a.col_indices();
    let vals = a.values();
    DVector::from_fn(a.nrows(), |i, _| {
        let mut s = 0.0;
        for k in offsets[i]..offsets[i + 1] {
            s += vals[k] * x[cols[k]];
        }
        s
    })
}

/// `x^T A y`.
pub fn bilinear(a: &CsrMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    x.dot(&spmv(a, y))
}

/// Linear combination of matrices with identical shape.
pub fn combine(terms: &[(f64, &CsrMatrix<f64>)]) -> CsrMatrix<f64> {
    let (nr, nc) = (terms[0].1.nrows(), terms[0].1.ncols());
    let trips = terms.iter().flat_map(|(s, m)| {
        assert_eq!((m.nrows(), m.ncols()), (nr, nc));
        m.triplet_iter().map(move |(i, j, v)| (i, j, s * v))
    });
    csr_from_triplets(nr, nc, trips)
}

pub fn to_dense(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        d[(i, j)] += v;
    }
    d
}

pub fn max_abs_entry(a: &CsrMatrix<f64>) -> f64 {
    a.values().iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Sparse Cholesky factor of a symmetric positive definite matrix.
pub struct SpdSolver {
    chol: CscCholesky<f64>,
    n: usize,
}

impl std::fmt::Debug for SpdSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpdSolver").field("n", &self.n).finish()
    }
}

impl SpdSolver {
    pub fn new(a: &CsrMatrix<f64>, what: &str) -> Result<Self> {
        let csc = CscMatrix::from(a);
        let chol = CscCholesky::factor(&csc).map_err(|e| Error::FactorizationFailure(format!("{what}: {e:?}")))?;
        Ok(Self { chol, n: a.nrows() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut m = DMatrix::from_column_slice(self.n, 1, b.as_slice());
        self.chol.solve_mut(&mut m);
        DVector::from_column_slice(m.as_slice())
    }

    pub fn solve_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Preconditioned conjugate gradients. Singular systems are fine as long as
/// the operator is symmetric semi-definite and `b` lies in its range.
pub fn pcg<A, P>(
    mut apply: A,
    b: &DVector<f64>,
    x0: Option<&DVector<f64>>,
    mut precond: P,
    rel_tol: f64,
    max_iter: usize,
    what: &str,
) -> Result<CgOutcome>
where
    A: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    P: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let bnorm = b.norm();
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x: DVector::zeros(b.len()),
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let mut x = x0.cloned().unwrap_or_else(|| DVector::zeros(b.len()));
    let mut r = if x0.is_some() { b - apply(&x)? } else { b.clone() };
    let mut rel = r.norm() / bnorm;
    if rel <= rel_tol {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            rel_residual: rel,
        });
    }
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for it in 1..=max_iter {
        let ap = apply(&p)?;
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(Error::SolveFailure {
                what: format!("{what} (operator not positive definite)"),
                iterations: it,
                residual: rel,
            });
        }
        let step = rz / pap;
        x.axpy(step, &p, 1.0);
        r.axpy(-step, &ap, 1.0);
        rel = r.norm() / bnorm;
        if rel <= rel_tol {
            return Ok(CgOutcome {
                x,
                iterations: it,
                rel_residual: rel,
            });
        }
        z = precond(&r);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + beta * &p;
    }
    Err(Error::SolveFailure {
        what: what.to_string(),
        iterations: max_iter,
        residual: rel,
    })
}
