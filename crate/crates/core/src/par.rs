//! Execution policy for data-parallel loops.
//!
//! Every parallel loop in the crate maps over a fixed list of work items
//! (sample chunks, replicas) and folds the per-item results sequentially
//! in index order, so the output is bitwise identical whether the items
//! ran on one thread or many. With the `parallel` feature disabled,
//! [`Exec::Parallel`] silently degrades to sequential execution.

/// How to run a batch of independent work items.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_indexed<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Maps `f` over `0..n` in waves of at most `wave` items and folds the
/// results into `acc` in index order. Peak memory is bounded by `wave`
/// live results.
pub fn fold_ordered<T, A, F, G>(exec: Exec, n: usize, wave: usize, mut acc: A, f: F, mut fold: G) -> A
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
    G: FnMut(A, T) -> A,
{
    let wave = wave.max(1);
    let mut start = 0;
    while start < n {
        let end = (start + wave).min(n);
        let results = map_indexed(exec, end - start, |k| f(start + k));
        for r in results {
            acc = fold(acc, r);
        }
        start = end;
    }
    acc
}

/// Splits `total` items into `chunks` contiguous ranges of nearly equal size.
pub fn chunk_ranges(total: usize, chunks: usize) -> Vec<std::ops::Range<usize>> {
    let chunks = chunks.max(1).min(total.max(1));
    let base = total / chunks;
    let extra = total % chunks;
    let mut out = Vec::with_capacity(chunks);
    let mut start = 0;
    for c in 0..chunks {
        let len = base + usize::from(c < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}
