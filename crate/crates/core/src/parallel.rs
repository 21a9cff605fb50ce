//! Row-parallel evaluation for 2D stencils.
//!
//! Every output row is written by exactly one worker and each entry is a pure
//! function of the input, so the result is bit-identical for any thread count.

use std::thread;

/// Environment variable that caps internal parallelism.
pub const THREADS_ENV: &str = "LAPDEN_THREADS";

/// Thread cap from `LAPDEN_THREADS`, defaulting to 1 when unset or invalid.
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

// Below this many entries the spawn cost dominates.
const MIN_PARALLEL_LEN: usize = 16 * 1024;

pub(crate) fn for_each_row<F>(out: &mut [f64], cols: usize, threads: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let rows = out.len() / cols;
    if threads <= 1 || out.len() < MIN_PARALLEL_LEN {
        for (i, row) in out.chunks_mut(cols).enumerate() {
            f(i, row);
        }
        return;
    }
    let rows_per = rows.div_ceil(threads.min(rows));
    thread::scope(|s| {
        for (k, block) in out.chunks_mut(rows_per * cols).enumerate() {
            let f = &f;
            s.spawn(move || {
                for (r, row) in block.chunks_mut(cols).enumerate() {
                    f(k * rows_per + r, row);
                }
            });
        }
    });
}
