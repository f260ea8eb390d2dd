//! Small dense helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Numerical rank of `m` using the singular-value cutoff `max(rows, cols) * eps * sigma_max`.
///
/// Also returns the right singular vector belonging to the smallest singular
/// value, which spans a deficient direction whenever the rank is short.
pub fn numerical_rank(m: &DMatrix<f64>) -> (usize, Vec<f64>) {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return (0, vec![0.0; cols]);
    }
    // Work on the Gram-free form so small singular values are not squared.
    let svd = m.clone().svd(false, true);
    let sv = &svd.singular_values;
    let sigma_max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let tol = rows.max(cols) as f64 * f64::EPSILON * sigma_max;
    let rank = sv.iter().filter(|&&s| s > tol).count();

    let v_t = svd.v_t.expect("requested v_t");
    let direction = if v_t.nrows() < cols {
        // Wide matrix: any vector orthogonal to the row space works; the
        // reduced SVD does not return it, so fall back to the full one.
        let full = nalgebra::SVD::new(m.clone().insert_rows(rows, cols - rows, 0.0), false, true);
        let vt = full.v_t.expect("requested v_t");
        let (idx, _) = full
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        vt.row(idx).iter().cloned().collect()
    } else {
        let (idx, _) = sv
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        v_t.row(idx).iter().cloned().collect()
    };
    (rank, direction)
}

/// Cholesky factor of the Gram matrix `a' a`; a failed factorisation is
/// reported as rank deficiency of `a`.
pub fn gram_cholesky(a: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let gram = a.transpose() * a;
    Cholesky::new(gram).ok_or_else(|| {
        let (rank, direction) = numerical_rank(a);
        Error::RankDeficient {
            rank,
            n_parties: a.ncols(),
            direction,
        }
    })
}

/// `G^{-1} S G^{-1}` for SPD `G` given by its Cholesky factor, symmetrised.
pub fn sandwich(chol: &Cholesky<f64, Dyn>, middle: &DMatrix<f64>) -> DMatrix<f64> {
    let left = chol.solve(middle);
    let out = chol.solve(&left.transpose());
    symmetrize(out)
}

pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `V(u) = diag(u) - u u'`, the per-draw multinomial covariance.
pub fn multinomial_cov(u: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(u) - u * u.transpose()
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().cloned().collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}
