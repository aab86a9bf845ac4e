//! Order-preserving data-parallel helpers.
//!
//! Every helper returns results in input order, so reductions performed by the
//! caller happen in a fixed order and parallel runs are bit-identical to
//! sequential ones.

/// How a batch of independent work items is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Rayon work-stealing pool (falls back to sequential without the
    /// `parallel` feature).
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// Whether this build can actually run work in parallel.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        Execution::Sequential => items.iter().map(f).collect(),
        Execution::Parallel => par_map(items, f),
    }
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).map(f).collect(),
        Execution::Parallel => par_map_range(n, f),
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
fn par_map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let xs: Vec<u64> = (0..10_000).collect();
        let seq = map(Execution::Sequential, &xs, |x| x * x);
        let par = map(Execution::Parallel, &xs, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(map_range(Execution::Parallel, 5, |i| i + 1), vec![1, 2, 3, 4, 5]);
    }
}
