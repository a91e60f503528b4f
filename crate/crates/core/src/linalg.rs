//! Determinants and cofactors of small square matrices.

use ndarray::Array2;

/// Determinant by LU decomposition with partial pivoting.
pub fn det(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "det of a non-square matrix");
    if n == 0 {
        return 1.0;
    }
    let mut m = a.clone();
    let mut sign = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))
            .unwrap();
        if m[[pivot, col]] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for c in 0..n {
                m.swap([pivot, c], [col, c]);
            }
            sign = -sign;
        }
        let p = m[[col, col]];
        for r in col + 1..n {
            let f = m[[r, col]] / p;
            if f != 0.0 {
                for c in col..n {
                    m[[r, c]] -= f * m[[col, c]];
                }
            }
        }
    }
    sign * (0..n).map(|i| m[[i, i]]).product::<f64>()
}

fn minor(a: &Array2<f64>, row: usize, col: usize) -> Array2<f64> {
    let n = a.nrows();
    Array2::from_shape_fn((n - 1, n - 1), |(i, j)| {
        a[[i + usize::from(i >= row), j + usize::from(j >= col)]]
    })
}

/// Cofactor matrix `C` with `C[i][j] = (-1)^(i+j) det(minor(i, j))`, so that
/// `d det(A) / dA = C`. Defined for singular matrices too.
pub fn cofactor(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    if n == 1 {
        return Array2::ones((1, 1));
    }
    Array2::from_shape_fn((n, n), |(i, j)| {
        let s = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        s * det(&minor(a, i, j))
    })
}

/// Determinant by Laplace expansion along the first row. Exponential cost;
/// kept as an independent check of [`det`].
pub fn det_laplace(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    match n {
        0 => 1.0,
        1 => a[[0, 0]],
        _ => (0..n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                s * a[[0, j]] * det_laplace(&minor(a, 0, j))
            })
            .sum(),
    }
}
