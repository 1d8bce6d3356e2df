//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over the rayon
//! global pool; without it, or with [`Mode::Sequential`], the same closures
//! run in order on the calling thread. Results are always returned in input
//! order, so callers see identical output in both modes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    Sequential,
    #[default]
    Parallel,
}

impl Mode {
    /// Whether this build can actually run in parallel.
    pub fn available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(mode: Mode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Mode::Parallel => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(mode: Mode, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Mode::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map(Mode::Sequential, &xs, |x| x * x);
        let b = map(Mode::Parallel, &xs, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(map_range(Mode::Parallel, 5, |i| i + 1), vec![1, 2, 3, 4, 5]);
    }
}
