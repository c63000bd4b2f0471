//! Tiny dense solvers for the fitting systems (3x3 exact fits, normal
//! equations for polynomial and least-squares fits).

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below `1e-12` times the largest entry.
pub(crate) fn solve<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let tol = scale * 1e-12;
    for col in 0..N {
        let pivot = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= tol {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            let pivot_row = a[col];
            for (v, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *v -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let mut s = b[row];
        for k in row + 1..N {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Least-squares solution of the overdetermined system `rows · x ≈ y`
/// through the normal equations.
pub(crate) fn least_squares<const N: usize>(rows: &[[f64; N]], y: &[f64]) -> Option<[f64; N]> {
    debug_assert_eq!(rows.len(), y.len());
    if rows.len() < N {
        return None;
    }
    let mut ata = [[0.0; N]; N];
    let mut aty = [0.0; N];
    for (r, &v) in rows.iter().zip(y) {
        for i in 0..N {
            aty[i] += r[i] * v;
            for j in 0..N {
                ata[i][j] += r[i] * r[j];
            }
        }
    }
    solve(ata, aty)
}
