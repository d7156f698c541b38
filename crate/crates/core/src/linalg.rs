//! Small dense helpers. Matrices here are at most a few hundred rows.

use ndarray::{Array1, Array2, ArrayView2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Singular;

/// Solve `a · x = b` in place by Gaussian elimination with partial pivoting.
/// On success `b` holds the solution.
pub fn solve_in_place(a: &mut Array2<f64>, b: &mut Array1<f64>) -> Result<(), Singular> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.len(), n);
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    for col in 0..n {
        let (piv, max) = (col..n)
            .map(|r| (r, a[[r, col]].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if max <= scale * 1e-14 {
            return Err(Singular);
        }
        if piv != col {
            for c in 0..n {
                a.swap([piv, c], [col, c]);
            }
            b.swap(piv, col);
        }
        let d = a[[col, col]];
        for r in col + 1..n {
            let f = a[[r, col]] / d;
            if f != 0.0 {
                for c in col..n {
                    a[[r, c]] -= f * a[[col, c]];
                }
                b[r] -= f * b[col];
            }
        }
    }
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in r + 1..n {
            s -= a[[r, c]] * b[c];
        }
        b[r] = s / a[[r, r]];
    }
    Ok(())
}

/// Solve `a · X = b` for every column of `b` in place.
pub fn solve_many_in_place(a: &mut Array2<f64>, b: &mut Array2<f64>) -> Result<(), Singular> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.nrows(), n);
    let m = b.ncols();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    for col in 0..n {
        let (piv, max) = (col..n)
            .map(|r| (r, a[[r, col]].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if max <= scale * 1e-14 {
            return Err(Singular);
        }
        if piv != col {
            for c in 0..n {
                a.swap([piv, c], [col, c]);
            }
            for c in 0..m {
                b.swap([piv, c], [col, c]);
            }
        }
        let d = a[[col, col]];
        for r in col + 1..n {
            let f = a[[r, col]] / d;
            if f != 0.0 {
                for c in col..n {
                    a[[r, c]] -= f * a[[col, c]];
                }
                for c in 0..m {
                    b[[r, c]] -= f * b[[col, c]];
                }
            }
        }
    }
    for c in 0..m {
        for r in (0..n).rev() {
            let mut s = b[[r, c]];
            for k in r + 1..n {
                s -= a[[r, k]] * b[[k, c]];
            }
            b[[r, c]] = s / a[[r, r]];
        }
    }
    Ok(())
}

pub fn solve(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>, Singular> {
    let mut a = a.clone();
    let mut b = b.clone();
    solve_in_place(&mut a, &mut b)?;
    Ok(b)
}

/// Row vector times matrix.
pub fn vec_mat(v: &[f64], m: ArrayView2<f64>) -> Vec<f64> {
    let mut out = vec![0.0; m.ncols()];
    for (i, &vi) in v.iter().enumerate() {
        if vi != 0.0 {
            for (o, &mij) in out.iter_mut().zip(m.row(i)) {
                *o += vi * mij;
            }
        }
    }
    out
}

/// Matrix times column vector.
pub fn mat_vec(m: ArrayView2<f64>, v: &[f64]) -> Vec<f64> {
    m.rows().into_iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Orthonormal basis of the span of `vectors` by Gram-Schmidt with one
/// reorthogonalization pass. Residuals below `tol` count as dependent.
pub fn orthonormal_basis<'a>(vectors: impl IntoIterator<Item = &'a [f64]>, tol: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.to_vec();
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                w.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let n = norm2(&w);
        if n > tol {
            w.iter_mut().for_each(|a| *a /= n);
            basis.push(w);
        }
    }
    basis
}

/// `v` minus its projection on the span of the orthonormal `basis`.
pub fn project_out(v: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut w = v.to_vec();
    for q in basis {
        let c = dot(&w, q);
        w.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
    }
    w
}

/// `log Σ w_i e^{a_i}` with a max shift. Terms with zero weight are skipped.
pub fn log_sum_exp_weighted(a: &[f64], w: &[f64]) -> f64 {
    let m = a
        .iter()
        .zip(w)
        .filter(|(_, &wi)| wi > 0.0)
        .map(|(&ai, _)| ai)
        .fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = a.iter().zip(w).filter(|(_, &wi)| wi > 0.0).map(|(&ai, &wi)| wi * (ai - m).exp()).sum();
    m + s.ln()
}
