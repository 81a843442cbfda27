//! Small dense solves used for the multiplier systems.

use nalgebra::{DMatrix, DVector};

/// Relative pivot threshold below which a matrix is treated as singular.
pub const PIVOT_REL_TOL: f64 = 1e-13;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
///
/// Returns `None` when a pivot falls below `PIVOT_REL_TOL` times the max-norm
/// of `a` (or when `a` is identically zero).
pub fn solve_pivoted(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = a.nrows();
    debug_assert_eq!(a.ncols(), n);
    debug_assert_eq!(b.len(), n);
    if n == 0 {
        return Some(DVector::zeros(0));
    }
    let scale = a.amax();
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let threshold = PIVOT_REL_TOL * scale;

    let mut m = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let (offset, pivot) = m
            .view((col, col), (n - col, 1))
            .iter()
            .enumerate()
            .fold(
                (0, 0.0f64),
                |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best },
            );
        if pivot < threshold {
            return None;
        }
        let row = col + offset;
        if row != col {
            m.swap_rows(row, col);
            x.swap_rows(row, col);
        }
        let diag = m[(col, col)];
        for r in col + 1..n {
            let factor = m[(r, col)] / diag;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                m[(r, c)] -= factor * m[(col, c)];
            }
            x[r] -= factor * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for c in col + 1..n {
            acc -= m[(col, c)] * x[c];
        }
        x[col] = acc / m[(col, col)];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_with_row_exchange() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0]);
        let x_true = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let b = &a * &x_true;
        let x = solve_pivoted(&a, &b).unwrap();
        assert!((x - x_true).amax() < 1e-14);
    }

    #[test]
    fn detects_singularity() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(solve_pivoted(&a, &DVector::from_vec(vec![1.0, 1.0])).is_none());
        assert!(solve_pivoted(&DMatrix::zeros(1, 1), &DVector::from_vec(vec![1.0])).is_none());
    }
}
