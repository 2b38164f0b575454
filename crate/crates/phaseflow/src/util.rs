//! Small numeric helpers shared across modules.

/// Pairwise (cascade) summation. Deterministic for a fixed input order and
/// considerably more accurate than naive left-to-right accumulation on long
/// inputs.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const CHUNK: usize = 64;
    if values.len() <= CHUNK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise sum of `f(i)` over `0..n` without materializing the vector.
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    fn go<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        const CHUNK: usize = 64;
        if hi - lo <= CHUNK {
            (lo..hi).map(f).sum()
        } else {
            let mid = lo + (hi - lo) / 2;
            go(lo, mid, f) + go(mid, hi, f)
        }
    }
    go(0, n, &f)
}
