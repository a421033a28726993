//! Register-blocked matrix kernels. Every output element is accumulated in
//! ascending order of the summation index regardless of blocking, so a row's
//! result does not depend on the batch it was computed in.

const R: usize = 4;
const C: usize = 4;

/// `c[r][j] += sum_k a[r][k] * b[k][j]`; `a` is `rows x inner`, `b` is
/// `inner x cols`, all row-major.
pub(crate) fn gemm_acc(
    a: &[f64],
    rows: usize,
    inner: usize,
    b: &[f64],
    cols: usize,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), rows * inner);
    debug_assert_eq!(b.len(), inner * cols);
    debug_assert_eq!(c.len(), rows * cols);
    let full_r = rows / R * R;
    let full_c = cols / C * C;
    for r0 in (0..full_r).step_by(R) {
        let a_blk = &a[r0 * inner..(r0 + R) * inner];
        for j0 in (0..full_c).step_by(C) {
            let mut acc = [[0.0f64; C]; R];
            for (r, row) in acc.iter_mut().enumerate() {
                row.copy_from_slice(&c[(r0 + r) * cols + j0..(r0 + r) * cols + j0 + C]);
            }
            for k in 0..inner {
                let bk: &[f64; C] = b[k * cols + j0..k * cols + j0 + C]
                    .try_into()
                    .expect("C wide");
                for (r, row) in acc.iter_mut().enumerate() {
                    let av = a_blk[r * inner + k];
                    for q in 0..C {
                        row[q] += av * bk[q];
                    }
                }
            }
            for (r, row) in acc.iter().enumerate() {
                c[(r0 + r) * cols + j0..(r0 + r) * cols + j0 + C].copy_from_slice(row);
            }
        }
        if full_c < cols {
            for r in r0..r0 + R {
                row_tail(
                    &a[r * inner..(r + 1) * inner],
                    b,
                    cols,
                    full_c,
                    &mut c[r * cols..(r + 1) * cols],
                );
            }
        }
    }
    for r in full_r..rows {
        row_tail(
            &a[r * inner..(r + 1) * inner],
            b,
            cols,
            0,
            &mut c[r * cols..(r + 1) * cols],
        );
    }
}

/// Single-row update of columns `from..cols`.
#[inline]
fn row_tail(a_row: &[f64], b: &[f64], cols: usize, from: usize, c_row: &mut [f64]) {
    let c_row = &mut c_row[from..cols];
    for (k, &av) in a_row.iter().enumerate() {
        let bk = &b[k * cols + from..(k + 1) * cols];
        for (cv, bv) in c_row.iter_mut().zip(bk) {
            *cv += av * bv;
        }
    }
}

/// `c[k][j] += sum_r a[r][k] * d[r][j]` with `r` ascending; `a` is
/// `rows x p`, `d` is `rows x m`, `c` is `p x m`.
pub(crate) fn gemm_tn_acc(a: &[f64], rows: usize, p: usize, d: &[f64], m: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), rows * p);
    debug_assert_eq!(d.len(), rows * m);
    debug_assert_eq!(c.len(), p * m);
    let full_k = p / R * R;
    let full_c = m / C * C;
    for k0 in (0..full_k).step_by(R) {
        for j0 in (0..full_c).step_by(C) {
            let mut acc = [[0.0f64; C]; R];
            for (kk, row) in acc.iter_mut().enumerate() {
                row.copy_from_slice(&c[(k0 + kk) * m + j0..(k0 + kk) * m + j0 + C]);
            }
            for r in 0..rows {
                let ar: &[f64; R] = a[r * p + k0..r * p + k0 + R].try_into().expect("R wide");
                let dr: &[f64; C] = d[r * m + j0..r * m + j0 + C].try_into().expect("C wide");
                for (kk, row) in acc.iter_mut().enumerate() {
                    for q in 0..C {
                        row[q] += ar[kk] * dr[q];
                    }
                }
            }
            for (kk, row) in acc.iter().enumerate() {
                c[(k0 + kk) * m + j0..(k0 + kk) * m + j0 + C].copy_from_slice(row);
            }
        }
        if full_c < m {
            tn_tail(a, rows, p, d, m, k0..k0 + R, full_c, c);
        }
    }
    if full_k < p {
        tn_tail(a, rows, p, d, m, full_k..p, 0, c);
    }
}

#[allow(clippy::too_many_arguments)]
fn tn_tail(
    a: &[f64],
    rows: usize,
    p: usize,
    d: &[f64],
    m: usize,
    ks: core::ops::Range<usize>,
    from: usize,
    c: &mut [f64],
) {
    for r in 0..rows {
        let dr = &d[r * m + from..(r + 1) * m];
        for k in ks.clone() {
            let av = a[r * p + k];
            for (cv, dv) in c[k * m + from..(k + 1) * m].iter_mut().zip(dr) {
                *cv += av * dv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn naive(a: &[f64], rows: usize, inner: usize, b: &[f64], cols: usize, c: &mut [f64]) {
        for r in 0..rows {
            for j in 0..cols {
                let mut s = c[r * cols + j];
                for k in 0..inner {
                    s += a[r * inner + k] * b[k * cols + j];
                }
                c[r * cols + j] = s;
            }
        }
    }

    fn fill(n: usize, seed: f64) -> Vec<f64> {
        (0..n).map(|i| libm::sin(seed + i as f64 * 0.731)).collect()
    }

    #[test]
    fn gemm_matches_sequential_sum_bitwise() {
        for &(rows, inner, cols) in &[(1, 3, 5), (4, 8, 8), (7, 5, 19), (13, 64, 66), (3, 1, 9)] {
            let a = fill(rows * inner, 0.1);
            let b = fill(inner * cols, 0.7);
            let mut c1 = fill(rows * cols, 1.3);
            let mut c2 = c1.clone();
            gemm_acc(&a, rows, inner, &b, cols, &mut c1);
            naive(&a, rows, inner, &b, cols, &mut c2);
            assert_eq!(c1, c2, "{rows}x{inner}x{cols}");
        }
    }

    #[test]
    fn gemm_tn_matches_sequential_sum_bitwise() {
        for &(rows, p, m) in &[(1, 3, 5), (9, 4, 8), (6, 7, 19), (20, 64, 3)] {
            let a = fill(rows * p, 0.4);
            let d = fill(rows * m, 2.2);
            let mut c1 = fill(p * m, 0.9);
            let mut c2 = c1.clone();
            gemm_tn_acc(&a, rows, p, &d, m, &mut c1);
            for r in 0..rows {
                for k in 0..p {
                    for j in 0..m {
                        c2[k * m + j] += a[r * p + k] * d[r * m + j];
                    }
                }
            }
            assert_eq!(c1, c2, "{rows}x{p}x{m}");
        }
    }
}
