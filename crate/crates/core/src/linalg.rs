//! Dense symmetric positive-definite solves for the RLS normal equations.

use ndarray::Array2;

/// Solve `A X = B` for symmetric positive-definite `A` via an in-place
/// Cholesky factorization (`A = L L^T`), one triangular sweep shared by
/// all right-hand-side columns. Returns `None` when `A` is not
/// numerically positive definite.
pub fn cholesky_solve(a: &Array2<f64>, b: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "A must be square");
    assert_eq!(b.nrows(), n, "B row count must match A");
    let m = b.ncols();

    // factor: lower triangle of `l`
    let mut l = a.clone();
    for j in 0..n {
        let mut diag = l[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return None;
        }
        let diag = diag.sqrt();
        l[[j, j]] = diag;
        for i in j + 1..n {
            let mut v = l[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / diag;
        }
    }

    let mut x = b.clone();
    // forward: L Y = B
    for c in 0..m {
        for i in 0..n {
            let mut v = x[[i, c]];
            for k in 0..i {
                v -= l[[i, k]] * x[[k, c]];
            }
            x[[i, c]] = v / l[[i, i]];
        }
        // backward: L^T X = Y
        for i in (0..n).rev() {
            let mut v = x[[i, c]];
            for k in i + 1..n {
                v -= l[[k, i]] * x[[k, c]];
            }
            x[[i, c]] = v / l[[i, i]];
        }
    }
    Some(x)
}

/// Largest absolute entry of a matrix.
pub fn inf_norm(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
