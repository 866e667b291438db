//! Deterministic data parallelism.
//!
//! Work is split into fixed-size chunks whose boundaries do not depend on the
//! thread count; per-chunk results are combined by a pairwise tree in chunk
//! order. Any thread count therefore yields bit-identical results.

use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};

static THREADS: AtomicUsize = AtomicUsize::new(1);

/// Sets the worker count used by all parallel sections (minimum 1).
pub fn set_threads(n: usize) {
    THREADS.store(n.max(1), Ordering::Relaxed);
}

pub fn threads() -> usize {
    THREADS.load(Ordering::Relaxed)
}

pub fn chunk_ranges(n: usize, chunk: usize) -> Vec<Range<usize>> {
    let chunk = chunk.max(1);
    (0..n).step_by(chunk).map(|s| s..(s + chunk).min(n)).collect()
}

/// `f` applied to every item index range, results in input order.
pub fn map_ordered<T, F>(items: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = threads().min(items);
    if workers <= 1 {
        return (0..items).map(f).collect();
    }
    let mut slots: Vec<Option<T>> = (0..items).map(|_| None).collect();
    std::thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = (0..workers)
            .map(|w| s.spawn(move || (w..items).step_by(workers).map(|i| (i, f(i))).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            for (i, v) in h.join().expect("worker panicked") {
                slots[i] = Some(v);
            }
        }
    });
    slots.into_iter().map(|v| v.expect("every slot filled")).collect()
}

/// Pairwise reduction: ((0,1),(2,3)),... independent of scheduling.
pub fn tree_reduce<T>(mut items: Vec<T>, combine: impl Fn(T, T) -> T) -> Option<T> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

/// Chunked map over `0..n` followed by a tree reduction.
pub fn map_reduce<T, F, C>(n: usize, chunk: usize, map: F, combine: C) -> Option<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync,
    C: Fn(T, T) -> T,
{
    let ranges = chunk_ranges(n, chunk);
    let parts = map_ordered(ranges.len(), |i| map(ranges[i].clone()));
    tree_reduce(parts, combine)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_is_thread_count_invariant() {
        let values: Vec<f64> = (0..1000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let run = || map_reduce(values.len(), 7, |r| values[r].iter().sum::<f64>(), |a, b| a + b).unwrap();
        set_threads(1);
        let one = run();
        set_threads(3);
        let three = run();
        set_threads(1);
        assert_eq!(one.to_bits(), three.to_bits());
    }

    #[test]
    fn ordered_map_and_ranges() {
        assert_eq!(chunk_ranges(5, 2), vec![0..2, 2..4, 4..5]);
        assert_eq!(map_ordered(4, |i| i * i), vec![0, 1, 4, 9]);
        assert_eq!(tree_reduce(Vec::<i32>::new(), |a, b| a + b), None);
    }
}
