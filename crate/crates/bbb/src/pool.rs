//! Minimal worker pool: chunked parallel loops over index ranges with scoped
//! threads. Pool size comes from BBB_THREADS (default 1, fully deterministic).

/// Number of worker threads requested via the environment.
pub fn num_threads() -> usize {
    std::env::var("BBB_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Run f(i) for i in 0..n, split contiguously across the worker threads.
pub fn par_for(n: usize, f: impl Fn(usize) + Sync) {
    let nt = num_threads().min(n.max(1));
    if nt <= 1 {
        for i in 0..n {
            f(i);
        }
        return;
    }
    let per = n.div_ceil(nt);
    std::thread::scope(|s| {
        for t in 0..nt {
            let lo = t * per;
            let hi = ((t + 1) * per).min(n);
            let f = &f;
            s.spawn(move || {
                for i in lo..hi {
                    f(i);
                }
            });
        }
    });
}

/// Split a mutable slice into contiguous chunks, one per worker, and run
/// f(start_offset, chunk) on each in parallel.
pub fn par_slices<T: Send>(data: &mut [T], f: impl Fn(usize, &mut [T]) + Sync) {
    let n = data.len();
    let nt = num_threads().min(n.max(1));
    if nt <= 1 {
        f(0, data);
        return;
    }
    let per = n.div_ceil(nt);
    std::thread::scope(|s| {
        let mut rest = data;
        let mut offset = 0usize;
        while !rest.is_empty() {
            let take = per.min(rest.len());
            let (head, tail) = rest.split_at_mut(take);
            let f = &f;
            let off = offset;
            s.spawn(move || f(off, head));
            offset += take;
            rest = tail;
        }
    });
}
