//! Dense complex linear algebra for small reference solutions.

use num_complex::Complex64;

/// `scale A^H A`.
pub fn gram(a: &[Vec<Complex64>], scale: f64) -> Vec<Vec<Complex64>> {
    let n = a[0].len();
    let mut g = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for row in a {
        for (i, ai) in row.iter().enumerate() {
            if ai.norm_sqr() == 0.0 {
                continue;
            }
            let c = ai.conj() * scale;
            for (j, aj) in row.iter().enumerate() {
                g[i][j] += c * aj;
            }
        }
    }
    g
}

/// `scale A^H x`.
pub fn adjoint_mul(a: &[Vec<Complex64>], x: &[Complex64], scale: f64) -> Vec<Complex64> {
    let mut y = vec![Complex64::new(0.0, 0.0); a[0].len()];
    for (row, xi) in a.iter().zip(x) {
        for (yj, aij) in y.iter_mut().zip(row) {
            *yj += aij.conj() * xi * scale;
        }
    }
    y
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<Complex64>>, mut b: Vec<Complex64>) -> Vec<Complex64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].norm().total_cmp(&a[j][k].norm()))
            .expect("nonempty");
        a.swap(k, p);
        b.swap(k, p);
        let pivot = a[k][k];
        assert!(pivot.norm() > 0.0, "singular reference system");
        let (top, rest) = a.split_at_mut(k + 1);
        let rk = &top[k];
        for (off, row) in rest.iter_mut().enumerate() {
            let f = row[k] / pivot;
            if f.norm_sqr() == 0.0 {
                continue;
            }
            for j in k..n {
                row[j] -= f * rk[j];
            }
            let bk = b[k];
            b[k + 1 + off] -= f * bk;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for k in (0..n).rev() {
        let s: Complex64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}
