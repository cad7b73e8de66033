/// Pairwise (cascade) summation with a fixed split, so the result depends
/// only on the order of `values`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        let mut s = 0.0;
        for v in values {
            s += v;
        }
        return s;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Parallel pairwise summation whose tree shape matches [`pairwise_sum`].
pub fn pairwise_sum_par(values: &[f64]) -> f64 {
    const SEQUENTIAL: usize = 1 << 14;
    if values.len() <= SEQUENTIAL {
        return pairwise_sum(values);
    }
    let mid = values.len() / 2;
    let (a, b) = rayon::join(|| pairwise_sum_par(&values[..mid]), || pairwise_sum_par(&values[mid..]));
    a + b
}
