//! Deterministic fixed-tree summation.
//!
//! Reductions here depend only on the index range, never on how work is
//! scheduled: the range is split at fixed midpoints down to a base block,
//! so a parallel consumer that splits at the same boundaries reproduces the
//! sequential result bit for bit. Pairwise grouping also keeps the rounding
//! error at `O(log n)` ulps instead of `O(n)`.

const BASE: usize = 64;

/// Sum of `f(i)` for `i` in `[lo, hi)` in fixed-tree order.
pub fn tree_sum_range<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
    let n = hi - lo;
    if n <= BASE {
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        acc
    } else {
        let mid = lo + n / 2;
        tree_sum_range(lo, mid, f) + tree_sum_range(mid, hi, f)
    }
}

/// Fixed-tree sum of a slice.
pub fn tree_sum(values: &[f64]) -> f64 {
    tree_sum_range(0, values.len(), &|i| values[i])
}

/// Fixed-tree sum of `f(i)` over `0..n`.
pub fn tree_sum_by<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    tree_sum_range(0, n, &f)
}
