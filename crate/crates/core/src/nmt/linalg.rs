//! Row-major dense products on top of `matrixmultiply`.

fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if k == 0 {
        c[..m * n].iter_mut().for_each(|x| *x *= beta);
        return;
    }
    // SAFETY: the asserts above bound every index the strided access touches
    // (the largest is (m-1)·rs + (k-1)·cs < m·k for both layouts used here).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c[m×n] = a[m×k] · w[n×k]ᵀ + beta·c`
pub(crate) fn mm_bt(m: usize, k: usize, n: usize, a: &[f64], w: &[f64], beta: f64, c: &mut [f64]) {
    gemm(m, k, n, a, (k, 1), w, (1, k), beta, c);
}

/// `c[m×n] = a[m×k] · b[k×n] + beta·c`
pub(crate) fn mm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    gemm(m, k, n, a, (k, 1), b, (n, 1), beta, c);
}

/// `c[k×n] += a[m×k]ᵀ · b[m×n]`
pub(crate) fn mm_at_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    gemm(k, m, n, a, (1, k), b, (n, 1), 1.0, c);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: impl Fn(usize, usize) -> f64, b: impl Fn(usize, usize) -> f64) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|l| a(i, l) * b(l, j)).sum();
            }
        }
        c
    }

    #[test]
    fn products_match_naive() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 2.0).collect();
        let w: Vec<f64> = (0..n * k).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).cos()).collect();

        let mut c = vec![1.0; m * n];
        mm_bt(m, k, n, &a, &w, 0.0, &mut c);
        let want = naive(m, k, n, |i, l| a[i * k + l], |l, j| w[j * k + l]);
        c.iter().zip(&want).for_each(|(x, y)| assert!((x - y).abs() < 1e-12));

        let mut c = vec![1.0; m * n];
        mm(m, k, n, &a, &b, 1.0, &mut c);
        let want = naive(m, k, n, |i, l| a[i * k + l], |l, j| b[l * n + j]);
        c.iter().zip(&want).for_each(|(x, y)| assert!((x - 1.0 - y).abs() < 1e-12));

        // aᵀ is k×m; pair it with an m×n right-hand side.
        let r: Vec<f64> = (0..m * n).map(|i| i as f64).collect();
        let mut c = vec![0.0; k * n];
        mm_at_acc(m, k, n, &a, &r, &mut c);
        let want = naive(k, m, n, |l, i| a[i * k + l], |i, j| r[i * n + j]);
        c.iter().zip(&want).for_each(|(x, y)| assert!((x - y).abs() < 1e-12));
    }
}
