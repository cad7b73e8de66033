//! Small dense helpers. Matrices are row-major `n * n` slices.

/// Determinant by Gaussian elimination with partial pivoting. Destroys `a`.
pub(crate) fn det_in_place(a: &mut [f64], n: usize) -> f64 {
    debug_assert_eq!(a.len(), n * n);
    let mut det = 1.0;
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            det = -det;
        }
        let p = a[col * n + col];
        det *= p;
        for row in col + 1..n {
            let f = a[row * n + col] / p;
            if f != 0.0 {
                for j in col + 1..n {
                    a[row * n + j] -= f * a[col * n + j];
                }
            }
        }
    }
    det
}

pub(crate) fn det(a: &[f64], n: usize) -> f64 {
    let mut m = a.to_vec();
    det_in_place(&mut m, n)
}

/// Gram determinant of `k` vectors of length `n` stored row-wise.
pub(crate) fn gram_det(vectors: &[f64], k: usize, n: usize) -> f64 {
    let mut g = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            g[i * k + j] = (0..n).map(|l| vectors[i * n + l] * vectors[j * n + l]).sum();
        }
    }
    det_in_place(&mut g, k)
}
