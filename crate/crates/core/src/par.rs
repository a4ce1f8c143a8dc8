//! Sequential / data-parallel execution switch.
//!
//! With the `parallel` feature, [`Execution::Parallel`] runs on the rayon pool. Without
//! it every path runs sequentially. Results are always assembled in index order, so
//! both modes produce identical output.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when work will actually be spread over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel, in index order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Calls `f(first_row, band)` over consecutive bands of `rows_per_band` rows.
pub fn for_each_band<T, F>(exec: Execution, data: &mut [T], row_len: usize, rows_per_band: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = row_len.max(1) * rows_per_band.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        data.par_chunks_mut(chunk).enumerate().for_each(|(b, band)| f(b * rows_per_band, band));
        return;
    }
    let _ = exec;
    data.chunks_mut(chunk).enumerate().for_each(|(b, band)| f(b * rows_per_band, band));
}
