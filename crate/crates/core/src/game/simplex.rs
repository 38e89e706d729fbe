//! Dense tableau simplex for packing programs, with Bland's pivoting rule.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;

/// Solves `max 1'w` subject to `A w <= 1`, `w >= 0` for a strictly positive
/// matrix `A` (rows are constraints). The origin is feasible and `A > 0`
/// bounds the program, so an optimum always exists.
pub fn maximize_packing(a: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = a.len();
    let n = a.first().map_or(0, Vec::len);
    if a.iter().flatten().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Lp("packing matrix must be strictly positive and finite".into()));
    }
    let width = n + m + 1;
    // Constraint rows, then the objective row holding negated reduced costs.
    let mut t = vec![vec![0.0; width]; m + 1];
    for (i, row) in a.iter().enumerate() {
        t[i][..n].copy_from_slice(row);
        t[i][n + i] = 1.0;
        t[i][width - 1] = 1.0;
    }
    for j in 0..n {
        t[m][j] = -1.0;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let max_pivots = 50 * (n + m + 1) * (n + m + 1);
    for _ in 0..max_pivots {
        let Some(enter) = (0..n + m).find(|&j| t[m][j] < -PIVOT_EPS) else {
            let mut w = vec![0.0; n];
            for (i, &b) in basis.iter().enumerate() {
                if b < n {
                    w[b] = t[i][width - 1].max(0.0);
                }
            }
            return Ok(w);
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let coef = t[i][enter];
            if coef > PIVOT_EPS {
                let ratio = t[i][width - 1] / coef;
                let better = match leave {
                    None => true,
                    Some((l, r)) => ratio < r - PIVOT_EPS || (ratio <= r + PIVOT_EPS && basis[i] < basis[l]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (row, _) = leave.ok_or_else(|| Error::Lp("packing program reported unbounded".into()))?;
        let pivot = t[row][enter];
        t[row].iter_mut().for_each(|v| *v /= pivot);
        let pivot_row = t[row].clone();
        for (i, r) in t.iter_mut().enumerate() {
            if i != row {
                let k = r[enter];
                if k != 0.0 {
                    r.iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= k * p);
                }
            }
        }
        basis[row] = enter;
    }
    Err(Error::Lp("simplex exceeded its pivot budget".into()))
}
