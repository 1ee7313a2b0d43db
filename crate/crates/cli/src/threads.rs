//! Small deterministic fan-out helper for the `--threads` flag.

use vigil_core::Result;

/// Applies `f` to every index in `0..n`, optionally on several worker
/// threads, and returns the outputs in index order.
///
/// Indices are striped over the workers up front, so the result (and, when
/// several indices fail, the reported error: always the one with the
/// smallest index) is independent of scheduling.
pub fn map_indexed<T, F>(n: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if n == 0 {
        return Ok(Vec::new());
    }
    let workers = threads.max(1).min(n);
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let f = &f;
    let buckets: Vec<Vec<(usize, Result<T>)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..n)
                        .step_by(workers)
                        .map(|i| (i, f(i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    });
    let mut slots: Vec<Option<Result<T>>> = Vec::with_capacity(n);
    slots.resize_with(n, || None);
    for bucket in buckets {
        for (i, r) in bucket {
            slots[i] = Some(r);
        }
    }
    slots
        .into_iter()
        .map(|s| s.expect("every index was assigned to a worker"))
        .collect()
}
