//! Deterministic fork-join helper: results land in input order regardless of
//! worker count, so parallel and serial runs produce identical output.

/// Apply `f` to every item, using up to `threads` workers. Results are
/// returned in input order.
pub fn parallel_map<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let threads = threads.max(1).min(items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let f = &f;
    std::thread::scope(|scope| {
        let mut rest: &mut [Option<R>] = &mut slots;
        let chunk = items.len().div_ceil(threads);
        let mut start = 0;
        let mut handles = Vec::new();
        while start < items.len() {
            let take = chunk.min(items.len() - start);
            let (head, tail) = rest.split_at_mut(take);
            rest = tail;
            let batch = &items[start..start + take];
            handles.push(scope.spawn(move || {
                for (slot, item) in head.iter_mut().zip(batch) {
                    *slot = Some(f(item));
                }
            }));
            start += take;
        }
        for handle in handles {
            handle.join().expect("worker panicked");
        }
    });
    slots.into_iter().map(|s| s.expect("slot filled")).collect()
}
