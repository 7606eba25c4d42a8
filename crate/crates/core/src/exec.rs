//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) work items are spread over the
//! current rayon pool; without it everything runs on the calling thread.
//! Results are always collected in index order and reduced sequentially, so
//! both builds produce bit-identical numbers.

/// Chunk length used when splitting index ranges for reductions.
pub const CHUNK: usize = 1 << 12;

/// Evaluates `f` on `0..len` and collects the results in index order.
pub fn map_range<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Maps each item of a slice, preserving order.
pub fn map_slice<A, T, F>(items: &[A], f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(&A) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Sums `f` over `0..len` with a fixed chunking, so the floating point result
/// does not depend on the thread count.
pub fn sum_range<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = len.div_ceil(CHUNK);
    let partial = map_range(chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(len);
        (lo..hi).map(&f).sum::<f64>()
    });
    partial.into_iter().sum()
}

/// Chunked fold over `0..len`: each chunk folds into its own accumulator and
/// the accumulators are merged left to right.
pub fn fold_chunks<A, I, F, M>(len: usize, init: I, fold: F, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, usize) + Sync + Send,
    M: Fn(&mut A, A),
{
    let chunks = len.div_ceil(CHUNK);
    let partial = map_range(chunks, |c| {
        let mut acc = init();
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(len);
        for i in lo..hi {
            fold(&mut acc, i);
        }
        acc
    });
    let mut out = init();
    for p in partial {
        merge(&mut out, p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_and_deterministic() {
        let v = map_range(10_000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
        let a = sum_range(100_003, |i| (i as f64).sqrt());
        let b = sum_range(100_003, |i| (i as f64).sqrt());
        assert_eq!(a.to_bits(), b.to_bits());
        let counts = fold_chunks(
            20_000,
            || vec![0usize; 3],
            |acc, i| acc[i % 3] += 1,
            |acc, p| acc.iter_mut().zip(p).for_each(|(a, b)| *a += b),
        );
        assert_eq!(counts.iter().sum::<usize>(), 20_000);
    }
}
