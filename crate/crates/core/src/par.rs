//! Order-preserving data-parallel map. Each output element depends only on
//! its own index, so results are identical for any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

// A one-thread pool only adds a cross-thread handoff per call.
#[cfg(feature = "parallel")]
fn threaded() -> bool {
    rayon::current_num_threads() > 1
}

pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if threaded() {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Appends the output of blocks `0..n` to `out` in block order. `f` appends
/// one block's items to the vector it is given.
pub(crate) fn extend_blocks<T, F>(n: usize, out: &mut Vec<T>, f: F)
where
    T: Send,
    F: Fn(usize, &mut Vec<T>) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if threaded() {
        let blocks: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|b| {
                let mut v = Vec::new();
                f(b, &mut v);
                v
            })
            .collect();
        blocks.into_iter().for_each(|v| out.extend(v));
        return;
    }
    (0..n).for_each(|b| f(b, out));
}
