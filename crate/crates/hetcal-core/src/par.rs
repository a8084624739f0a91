//! Minimal scoped-thread fan-out. The `HETCAL_THREADS` environment variable
//! caps worker count; results are collected by index, so output order (and
//! every numeric result) is independent of scheduling.

pub(crate) fn thread_count() -> usize {
    if let Ok(v) = std::env::var("HETCAL_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Applies `f` to every index in 0..n, in parallel, returning results in
/// index order.
pub(crate) fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = thread_count().min(n.max(1));
    if workers <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let mut out: Vec<Option<T>> = Vec::with_capacity(n);
    out.resize_with(n, || None);
    let chunk = n.div_ceil(workers);
    std::thread::scope(|scope| {
        for (w, slot) in out.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (offset, cell) in slot.iter_mut().enumerate() {
                    *cell = Some(f(w * chunk + offset));
                }
            });
        }
    });
    out.into_iter().map(|v| v.unwrap()).collect()
}
